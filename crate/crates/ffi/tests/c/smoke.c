#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "stochsync.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "%s:%d: check failed: %s\n", __FILE__,   \
                    __LINE__, #cond);                                 \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    StochsyncGraph *g = NULL;
    CHECK(stochsync_graph_topology(STOCHSYNC_TOPOLOGY_CHAIN, 5, &g) == STOCHSYNC_STATUS_OK);

    double lambda2 = 0.0;
    CHECK(stochsync_graph_lambda2(g, &lambda2) == STOCHSYNC_STATUS_OK);
    CHECK(fabs(lambda2 - 2.0 * (1.0 - cos(M_PI / 5.0))) < 1e-12);

    StochsyncModel *m = NULL;
    CHECK(stochsync_model_bistable(5.0, 4.0, &m) == STOCHSYNC_STATUS_OK);
    StochsyncCertificate cert;
    CHECK(stochsync_certificate(g, m, 1.0, &cert) == STOCHSYNC_STATUS_OK);
    CHECK(cert.satisfied && cert.has_rate);

    StochsyncSimConfig cfg = stochsync_sim_config_default();
    cfg.dt = 1e-3;
    cfg.horizon = 1.0;
    cfg.seed = 3;
    double x0[5] = {1.0, -1.0, 2.0, 0.5, -2.0};
    StochsyncTrajectory *t = NULL;
    CHECK(stochsync_simulate(g, m, 1.0, x0, 5, &cfg, &t) == STOCHSYNC_STATUS_OK);
    size_t len = stochsync_trajectory_len(t);
    CHECK(len == 1001);
    CHECK(stochsync_trajectory_width(t) == 5);
    CHECK(stochsync_trajectory_states(t)[0] == 1.0);

    double *norms = malloc(len * sizeof(double));
    CHECK(stochsync_trajectory_sync_error_norms(t, norms, len) == STOCHSYNC_STATUS_OK);
    StochsyncExponent e;
    CHECK(stochsync_lyapunov_exponent(stochsync_trajectory_times(t), norms, len, 0.5, 1e-12, &e) ==
          STOCHSYNC_STATUS_OK);
    CHECK(e.points > 0);
    free(norms);

    StochsyncModel *ddm = NULL;
    CHECK(stochsync_model_ddm(0.5, 1.0, &ddm) == STOCHSYNC_STATUS_OK);
    CHECK(stochsync_certificate(g, ddm, 1.0, &cert) == STOCHSYNC_STATUS_NOT_APPLICABLE);
    CHECK(stochsync_last_error_message() != NULL);

    CHECK(stochsync_graph_lambda2(NULL, &lambda2) == STOCHSYNC_STATUS_NULL_POINTER);

    stochsync_trajectory_free(t);
    stochsync_model_free(ddm);
    stochsync_model_free(m);
    stochsync_graph_free(g);
    printf("c smoke test ok (stochsync %s)\n", stochsync_version());
    return 0;
}
