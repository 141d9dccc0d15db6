#ifndef STOCHSYNC_H
#define STOCHSYNC_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum StochsyncStatus {
  STOCHSYNC_STATUS_OK = 0,
  STOCHSYNC_STATUS_NULL_POINTER = 1,
  STOCHSYNC_STATUS_INVALID_ARGUMENT = 2,
  // The analysis does not apply to the model, e.g. a certificate for
  // independent per-node noise.
  STOCHSYNC_STATUS_NOT_APPLICABLE = 3,
  STOCHSYNC_STATUS_NUMERICAL_FAILURE = 4,
  // A panic was caught at the boundary or an unexpected internal error.
  STOCHSYNC_STATUS_INTERNAL = 5,
} StochsyncStatus;

typedef enum StochsyncTopology {
  STOCHSYNC_TOPOLOGY_CHAIN = 0,
  STOCHSYNC_TOPOLOGY_RING = 1,
  STOCHSYNC_TOPOLOGY_COMPLETE = 2,
  STOCHSYNC_TOPOLOGY_STAR = 3,
} StochsyncTopology;

typedef enum StochsyncScheme {
  STOCHSYNC_SCHEME_EULER_MARUYAMA = 0,
  STOCHSYNC_SCHEME_TAMED_EULER = 1,
} StochsyncScheme;

// Opaque network topology.
typedef struct StochsyncGraph StochsyncGraph;

// Opaque node model.
typedef struct StochsyncModel StochsyncModel;

// Opaque recorded trajectory.
typedef struct StochsyncTrajectory StochsyncTrajectory;

typedef struct StochsyncCertificate {
  double lambda2;
  double sigma;
  double k_f;
  double k_g;
  double k_g_bar;
  double threshold;
  double c2;
  double c3;
  bool satisfied;
  // `guaranteed_rate` is meaningful only when this is true.
  bool has_rate;
  double guaranteed_rate;
} StochsyncCertificate;

typedef struct StochsyncExponent {
  double exponent;
  double window_start;
  double window_end;
  double r_squared;
  bool floored;
  size_t points;
} StochsyncExponent;

typedef struct StochsyncSimConfig {
  double dt;
  double horizon;
  uint64_t seed;
  enum StochsyncScheme scheme;
  size_t record_stride;
  double blowup_threshold;
} StochsyncSimConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on the calling thread, or NULL. The
// pointer stays valid until the next failing call on the same thread.
const char *stochsync_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *stochsync_version(void);

enum StochsyncStatus stochsync_graph_topology(enum StochsyncTopology kind,
                                              size_t node_count,
                                              struct StochsyncGraph **out);

enum StochsyncStatus stochsync_graph_erdos_renyi(size_t node_count,
                                                 double p,
                                                 uint64_t seed,
                                                 struct StochsyncGraph **out);

// Builds a graph from `edge_count` undirected edges given as consecutive
// `(a, b)` index pairs in `edges` (length `2 * edge_count`).
enum StochsyncStatus stochsync_graph_from_edges(size_t node_count,
                                                const size_t *edges,
                                                size_t edge_count,
                                                struct StochsyncGraph **out);

void stochsync_graph_free(struct StochsyncGraph *graph);

// Node count, or 0 for a null handle.
size_t stochsync_graph_node_count(const struct StochsyncGraph *graph);

enum StochsyncStatus stochsync_graph_lambda2(const struct StochsyncGraph *graph, double *out);

// Writes the Laplacian row-major into `out`, which must hold `n * n` values.
enum StochsyncStatus stochsync_graph_laplacian(const struct StochsyncGraph *graph,
                                               double *out,
                                               size_t out_len);

// Scalar bistable node: drift `r x - x^3`, diffusion `sigma_n x`.
enum StochsyncStatus stochsync_model_bistable(double r,
                                              double sigma_n,
                                              struct StochsyncModel **out);

enum StochsyncStatus stochsync_model_integrator(size_t dim, struct StochsyncModel **out);

// Linear node with `dim x dim` row-major `drift` and `diffusion` matrices.
enum StochsyncStatus stochsync_model_linear(size_t dim,
                                            const double *drift,
                                            const double *diffusion,
                                            struct StochsyncModel **out);

// Drift-diffusion node with independent per-node noise.
enum StochsyncStatus stochsync_model_ddm(double beta, double sigma_b, struct StochsyncModel **out);

void stochsync_model_free(struct StochsyncModel *model);

// State dimension per node, or 0 for a null handle.
size_t stochsync_model_dim(const struct StochsyncModel *model);

// Synchronization certificate using the model's analytic constants.
enum StochsyncStatus stochsync_certificate(const struct StochsyncGraph *graph,
                                           const struct StochsyncModel *model,
                                           double sigma,
                                           struct StochsyncCertificate *out);

// Smallest bistable noise intensity `sigma_n` (coupling 1) above which the
// certificate holds for the graph.
enum StochsyncStatus stochsync_decision_threshold_sigma_n(const struct StochsyncGraph *graph,
                                                          double r,
                                                          double *out);

// Tail-window exponent of a positive series `norms` sampled at `times`.
enum StochsyncStatus stochsync_lyapunov_exponent(const double *times,
                                                 const double *norms,
                                                 size_t len,
                                                 double window_fraction,
                                                 double floor,
                                                 struct StochsyncExponent *out);

struct StochsyncSimConfig stochsync_sim_config_default(void);

// Integrates the coupled network from `x0` (length `node_count * dim`,
// node-major). A blow-up is not an error; check
// [`stochsync_trajectory_blew_up`].
enum StochsyncStatus stochsync_simulate(const struct StochsyncGraph *graph,
                                        const struct StochsyncModel *model,
                                        double sigma,
                                        const double *x0,
                                        size_t x0_len,
                                        const struct StochsyncSimConfig *config,
                                        struct StochsyncTrajectory **out);

void stochsync_trajectory_free(struct StochsyncTrajectory *traj);

// Number of recorded time points, or 0 for a null handle.
size_t stochsync_trajectory_len(const struct StochsyncTrajectory *traj);

// Values per recorded state (`node_count * dim`), or 0 for a null handle.
size_t stochsync_trajectory_width(const struct StochsyncTrajectory *traj);

bool stochsync_trajectory_blew_up(const struct StochsyncTrajectory *traj);

// Recorded times (`len` values), owned by the trajectory.
const double *stochsync_trajectory_times(const struct StochsyncTrajectory *traj);

// Recorded states, row-major `len x width`, owned by the trajectory.
const double *stochsync_trajectory_states(const struct StochsyncTrajectory *traj);

// Writes `|e(t_k)|` for every recorded step into `out` (`len` values).
enum StochsyncStatus stochsync_trajectory_sync_error_norms(const struct StochsyncTrajectory *traj,
                                                           double *out,
                                                           size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOCHSYNC_H */
