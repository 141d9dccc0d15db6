//! C ABI for `stochsync`.
//!
//! Every fallible function returns a [`StochsyncStatus`] and writes its result
//! through an out-pointer. On failure a human-readable message is kept per
//! thread and can be read with [`stochsync_last_error_message`]. Objects are
//! opaque handles; every constructor has a matching `*_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stochsync::graph::Topology;
use stochsync::{Error, Graph, NodeModel, Scheme, SimConfig, Trajectory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StochsyncStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The analysis does not apply to the model, e.g. a certificate for
    /// independent per-node noise.
    NotApplicable = 3,
    NumericalFailure = 4,
    /// A panic was caught at the boundary or an unexpected internal error.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StochsyncTopology {
    Chain = 0,
    Ring = 1,
    Complete = 2,
    Star = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StochsyncScheme {
    EulerMaruyama = 0,
    TamedEuler = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochsyncSimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub scheme: StochsyncScheme,
    pub record_stride: usize,
    pub blowup_threshold: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StochsyncCertificate {
    pub lambda2: f64,
    pub sigma: f64,
    pub k_f: f64,
    pub k_g: f64,
    pub k_g_bar: f64,
    pub threshold: f64,
    pub c2: f64,
    pub c3: f64,
    pub satisfied: bool,
    /// `guaranteed_rate` is meaningful only when this is true.
    pub has_rate: bool,
    pub guaranteed_rate: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StochsyncExponent {
    pub exponent: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub r_squared: f64,
    pub floored: bool,
    pub points: usize,
}

/// Opaque network topology.
pub struct StochsyncGraph(Graph);

/// Opaque node model.
pub struct StochsyncModel(NodeModel);

/// Opaque recorded trajectory.
pub struct StochsyncTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: StochsyncStatus, msg: impl Into<String>) -> StochsyncStatus {
    set_last_error(msg);
    status
}

fn status_of(e: &Error) -> StochsyncStatus {
    match e {
        Error::Invalid(_) | Error::Dimension { .. } => StochsyncStatus::InvalidArgument,
        Error::NotApplicable(_) | Error::UnsupportedModel(_) => StochsyncStatus::NotApplicable,
        Error::EigenNoConvergence(_) | Error::InsufficientData { .. } => StochsyncStatus::NumericalFailure,
        Error::Io(_) => StochsyncStatus::Internal,
    }
}

/// Runs `f`, converting library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), StochsyncStatus>) -> StochsyncStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StochsyncStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(StochsyncStatus::Internal, format!("panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, StochsyncStatus>;
}

impl<T> OrStatus<T> for stochsync::Result<T> {
    fn or_status(self) -> Result<T, StochsyncStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, StochsyncStatus> {
    p.as_ref().ok_or_else(|| fail(StochsyncStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], StochsyncStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(StochsyncStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), StochsyncStatus> {
    if out.is_null() {
        return Err(fail(StochsyncStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn check_out<T>(out: *mut T) -> Result<(), StochsyncStatus> {
    if out.is_null() {
        return Err(fail(StochsyncStatus::NullPointer, "output pointer is null"));
    }
    Ok(())
}

/// Message for the most recent failure on the calling thread, or NULL. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn stochsync_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stochsync_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- graphs ----

#[no_mangle]
pub unsafe extern "C" fn stochsync_graph_topology(
    kind: StochsyncTopology,
    node_count: usize,
    out: *mut *mut StochsyncGraph,
) -> StochsyncStatus {
    guard(|| {
        check_out(out)?;
        let topology = match kind {
            StochsyncTopology::Chain => Topology::Chain,
            StochsyncTopology::Ring => Topology::Ring,
            StochsyncTopology::Complete => Topology::Complete,
            StochsyncTopology::Star => Topology::Star,
        };
        let g = stochsync::build_topology(&topology, node_count).or_status()?;
        write_out(out, Box::into_raw(Box::new(StochsyncGraph(g))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn stochsync_graph_erdos_renyi(
    node_count: usize,
    p: f64,
    seed: u64,
    out: *mut *mut StochsyncGraph,
) -> StochsyncStatus {
    guard(|| {
        check_out(out)?;
        let g = stochsync::build_topology(&Topology::ErdosRenyi { p, seed }, node_count).or_status()?;
        write_out(out, Box::into_raw(Box::new(StochsyncGraph(g))))
    })
}

/// Builds a graph from `edge_count` undirected edges given as consecutive
/// `(a, b)` index pairs in `edges` (length `2 * edge_count`).
#[no_mangle]
pub unsafe extern "C" fn stochsync_graph_from_edges(
    node_count: usize,
    edges: *const usize,
    edge_count: usize,
    out: *mut *mut StochsyncGraph,
) -> StochsyncStatus {
    guard(|| {
        check_out(out)?;
        let flat = slice(edges, edge_count * 2, "edges")?;
        let pairs = flat.chunks_exact(2).map(|c| (c[0], c[1]));
        let g = Graph::new(node_count, pairs).or_status()?;
        write_out(out, Box::into_raw(Box::new(StochsyncGraph(g))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn stochsync_graph_free(graph: *mut StochsyncGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn stochsync_graph_node_count(graph: *const StochsyncGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.node_count())
}

#[no_mangle]
pub unsafe extern "C" fn stochsync_graph_lambda2(graph: *const StochsyncGraph, out: *mut f64) -> StochsyncStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        check_out(out)?;
        let info = stochsync::spectral_info(&g.0).or_status()?;
        write_out(out, info.lambda2)
    })
}

/// Writes the Laplacian row-major into `out`, which must hold `n * n` values.
#[no_mangle]
pub unsafe extern "C" fn stochsync_graph_laplacian(
    graph: *const StochsyncGraph,
    out: *mut f64,
    out_len: usize,
) -> StochsyncStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        check_out(out)?;
        let n = g.0.node_count();
        if out_len < n * n {
            return Err(fail(
                StochsyncStatus::InvalidArgument,
                format!("buffer holds {out_len} values, need {}", n * n),
            ));
        }
        let l = stochsync::laplacian(&g.0);
        let dst = std::slice::from_raw_parts_mut(out, n * n);
        for i in 0..n {
            for j in 0..n {
                dst[i * n + j] = l[(i, j)];
            }
        }
        Ok(())
    })
}

// ---- models ----

unsafe fn new_model(model: stochsync::Result<NodeModel>, out: *mut *mut StochsyncModel) -> StochsyncStatus {
    guard(|| {
        check_out(out)?;
        let m = model.or_status()?;
        write_out(out, Box::into_raw(Box::new(StochsyncModel(m))))
    })
}

/// Scalar bistable node: drift `r x - x^3`, diffusion `sigma_n x`.
#[no_mangle]
pub unsafe extern "C" fn stochsync_model_bistable(
    r: f64,
    sigma_n: f64,
    out: *mut *mut StochsyncModel,
) -> StochsyncStatus {
    new_model(NodeModel::bistable(r, sigma_n), out)
}

#[no_mangle]
pub unsafe extern "C" fn stochsync_model_integrator(dim: usize, out: *mut *mut StochsyncModel) -> StochsyncStatus {
    new_model(NodeModel::integrator(dim), out)
}

/// Linear node with `dim x dim` row-major `drift` and `diffusion` matrices.
#[no_mangle]
pub unsafe extern "C" fn stochsync_model_linear(
    dim: usize,
    drift: *const f64,
    diffusion: *const f64,
    out: *mut *mut StochsyncModel,
) -> StochsyncStatus {
    let matrices =
        (|| Ok::<_, StochsyncStatus>((slice(drift, dim * dim, "drift")?, slice(diffusion, dim * dim, "diffusion")?)))();
    match matrices {
        Ok((a, m)) => new_model(
            NodeModel::linear(
                nalgebra::DMatrix::from_row_slice(dim, dim, a),
                nalgebra::DMatrix::from_row_slice(dim, dim, m),
            ),
            out,
        ),
        Err(status) => status,
    }
}

/// Drift-diffusion node with independent per-node noise.
#[no_mangle]
pub unsafe extern "C" fn stochsync_model_ddm(
    beta: f64,
    sigma_b: f64,
    out: *mut *mut StochsyncModel,
) -> StochsyncStatus {
    new_model(NodeModel::ddm(beta, sigma_b), out)
}

#[no_mangle]
pub unsafe extern "C" fn stochsync_model_free(model: *mut StochsyncModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// State dimension per node, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn stochsync_model_dim(model: *const StochsyncModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

// ---- analysis ----

/// Synchronization certificate using the model's analytic constants.
#[no_mangle]
pub unsafe extern "C" fn stochsync_certificate(
    graph: *const StochsyncGraph,
    model: *const StochsyncModel,
    sigma: f64,
    out: *mut StochsyncCertificate,
) -> StochsyncStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        let m = deref(model, "model")?;
        check_out(out)?;
        let constants = stochsync::analytic_constants(&m.0).or_status()?;
        let c = stochsync::certificate(&g.0, &m.0, sigma, &constants).or_status()?;
        write_out(
            out,
            StochsyncCertificate {
                lambda2: c.lambda2,
                sigma: c.sigma,
                k_f: c.k_f,
                k_g: c.k_g,
                k_g_bar: c.k_g_bar,
                threshold: c.threshold,
                c2: c.c2,
                c3: c.c3,
                satisfied: c.satisfied,
                has_rate: c.guaranteed_rate.is_some(),
                guaranteed_rate: c.guaranteed_rate.unwrap_or(0.0),
            },
        )
    })
}

/// Smallest bistable noise intensity `sigma_n` (coupling 1) above which the
/// certificate holds for the graph.
#[no_mangle]
pub unsafe extern "C" fn stochsync_decision_threshold_sigma_n(
    graph: *const StochsyncGraph,
    r: f64,
    out: *mut f64,
) -> StochsyncStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        check_out(out)?;
        let t = stochsync::decision_threshold_sigma_n(&g.0, r).or_status()?;
        write_out(out, t)
    })
}

/// Tail-window exponent of a positive series `norms` sampled at `times`.
#[no_mangle]
pub unsafe extern "C" fn stochsync_lyapunov_exponent(
    times: *const f64,
    norms: *const f64,
    len: usize,
    window_fraction: f64,
    floor: f64,
    out: *mut StochsyncExponent,
) -> StochsyncStatus {
    guard(|| {
        let t = slice(times, len, "times")?;
        let n = slice(norms, len, "norms")?;
        check_out(out)?;
        let e = stochsync::lyapunov_exponent(t, n, window_fraction, floor).or_status()?;
        write_out(
            out,
            StochsyncExponent {
                exponent: e.exponent,
                window_start: e.window.0,
                window_end: e.window.1,
                r_squared: e.r_squared,
                floored: e.floored,
                points: e.points,
            },
        )
    })
}

// ---- simulation ----

#[no_mangle]
pub extern "C" fn stochsync_sim_config_default() -> StochsyncSimConfig {
    let d = SimConfig::default();
    StochsyncSimConfig {
        dt: d.dt,
        horizon: d.horizon,
        seed: d.seed,
        scheme: StochsyncScheme::EulerMaruyama,
        record_stride: d.record_stride,
        blowup_threshold: d.blowup_threshold,
    }
}

impl From<&StochsyncSimConfig> for SimConfig {
    fn from(c: &StochsyncSimConfig) -> Self {
        SimConfig {
            dt: c.dt,
            horizon: c.horizon,
            seed: c.seed,
            scheme: match c.scheme {
                StochsyncScheme::EulerMaruyama => Scheme::EulerMaruyama,
                StochsyncScheme::TamedEuler => Scheme::TamedEuler,
            },
            record_stride: c.record_stride,
            blowup_threshold: c.blowup_threshold,
        }
    }
}

/// Integrates the coupled network from `x0` (length `node_count * dim`,
/// node-major). A blow-up is not an error; check
/// [`stochsync_trajectory_blew_up`].
#[no_mangle]
pub unsafe extern "C" fn stochsync_simulate(
    graph: *const StochsyncGraph,
    model: *const StochsyncModel,
    sigma: f64,
    x0: *const f64,
    x0_len: usize,
    config: *const StochsyncSimConfig,
    out: *mut *mut StochsyncTrajectory,
) -> StochsyncStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        let m = deref(model, "model")?;
        let x0 = slice(x0, x0_len, "x0")?;
        let cfg = SimConfig::from(deref(config, "config")?);
        check_out(out)?;
        let traj = stochsync::integrate(&g.0, &m.0, sigma, x0, &cfg).or_status()?;
        write_out(out, Box::into_raw(Box::new(StochsyncTrajectory(traj))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn stochsync_trajectory_free(traj: *mut StochsyncTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded time points, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn stochsync_trajectory_len(traj: *const StochsyncTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.len())
}

/// Values per recorded state (`node_count * dim`), or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn stochsync_trajectory_width(traj: *const StochsyncTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.width())
}

#[no_mangle]
pub unsafe extern "C" fn stochsync_trajectory_blew_up(traj: *const StochsyncTrajectory) -> bool {
    traj.as_ref().is_some_and(|t| t.0.blew_up)
}

/// Recorded times (`len` values), owned by the trajectory.
#[no_mangle]
pub unsafe extern "C" fn stochsync_trajectory_times(traj: *const StochsyncTrajectory) -> *const f64 {
    traj.as_ref().map_or(ptr::null(), |t| t.0.times.as_ptr())
}

/// Recorded states, row-major `len x width`, owned by the trajectory.
#[no_mangle]
pub unsafe extern "C" fn stochsync_trajectory_states(traj: *const StochsyncTrajectory) -> *const f64 {
    traj.as_ref().map_or(ptr::null(), |t| t.0.states.as_ptr())
}

/// Writes `|e(t_k)|` for every recorded step into `out` (`len` values).
#[no_mangle]
pub unsafe extern "C" fn stochsync_trajectory_sync_error_norms(
    traj: *const StochsyncTrajectory,
    out: *mut f64,
    out_len: usize,
) -> StochsyncStatus {
    guard(|| {
        let t = deref(traj, "trajectory")?;
        check_out(out)?;
        if out_len < t.0.len() {
            return Err(fail(
                StochsyncStatus::InvalidArgument,
                format!("buffer holds {out_len} values, need {}", t.0.len()),
            ));
        }
        let e = stochsync::sync_error(&t.0);
        ptr::copy_nonoverlapping(e.norms.as_ptr(), out, e.norms.len());
        Ok(())
    })
}
