//! Synchronization analysis: the sufficient-condition certificate, the error
//! process `e = X - 1_N ⊗ s`, tail-fit Lyapunov exponents and Monte Carlo
//! verdicts over independent noise realizations.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{spectral_info, Graph};
use crate::models::{analytic_constants, ConstantsProvenance, ModelConstants, NodeModel, NoiseMode};
use crate::output::fmt_f64;
use crate::rng::{derive_seed, rng_from_seed};
use crate::sde::{integrate, SimConfig, Trajectory};

/// Minimum number of points a Lyapunov tail fit needs.
pub const MIN_FIT_POINTS: usize = 10;

/// Network mean `s(t_k)` for every recorded step; each entry has length `n`.
pub fn mean_trajectory(traj: &Trajectory) -> Vec<Vec<f64>> {
    let (nodes, n) = (traj.node_count, traj.node_dim);
    traj.rows()
        .map(|row| {
            let mut s = vec![0.0; n];
            for node in row.chunks_exact(n) {
                for (acc, v) in s.iter_mut().zip(node) {
                    *acc += v;
                }
            }
            s.iter_mut().for_each(|v| *v /= nodes as f64);
            s
        })
        .collect()
}

/// Synchronization error along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncError {
    pub times: Vec<f64>,
    pub node_count: usize,
    pub node_dim: usize,
    /// Row-major, same layout as [`Trajectory::states`].
    pub errors: Vec<f64>,
    /// `|e(t_k)|` over the whole stacked vector.
    pub norms: Vec<f64>,
}

impl SyncError {
    pub fn row(&self, k: usize) -> &[f64] {
        let w = self.node_count * self.node_dim;
        &self.errors[k * w..(k + 1) * w]
    }

    /// `|x_i(t_k) - s(t_k)|` for every recorded step.
    pub fn node_norms(&self, node: usize) -> Vec<f64> {
        let n = self.node_dim;
        (0..self.times.len())
            .map(|k| self.row(k)[node * n..(node + 1) * n].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// CSV `t,error_norm,node_0,...` with per-node error norms.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t,error_norm")?;
        for i in 0..self.node_count {
            write!(w, ",node_{i}")?;
        }
        writeln!(w)?;
        let per_node: Vec<Vec<f64>> = (0..self.node_count).map(|i| self.node_norms(i)).collect();
        for (k, t) in self.times.iter().enumerate() {
            write!(w, "{},{}", fmt_f64(*t), fmt_f64(self.norms[k]))?;
            for col in &per_node {
                write!(w, ",{}", fmt_f64(col[k]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn sync_error(traj: &Trajectory) -> SyncError {
    let n = traj.node_dim;
    let means = mean_trajectory(traj);
    let mut errors = Vec::with_capacity(traj.states.len());
    let mut norms = Vec::with_capacity(traj.len());
    for (row, s) in traj.rows().zip(&means) {
        let mut sq = 0.0;
        for node in row.chunks_exact(n) {
            for (v, m) in node.iter().zip(s) {
                let e = v - m;
                sq += e * e;
                errors.push(e);
            }
        }
        norms.push(sq.sqrt());
    }
    SyncError { times: traj.times.clone(), node_count: traj.node_count, node_dim: n, errors, norms }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    /// Least-squares slope of `log |e|` against `t` over `window`.
    pub exponent: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    /// The series reached `floor` before its last sample.
    pub floored: bool,
    pub points: usize,
}

/// Tail-window estimate of the almost-sure exponent `limsup (1/t) log |e(t)|`.
///
/// The window is the last `window_fraction` of the series' time span (never
/// starting before 20% of it), cut at the first sample with `norm <= floor`.
/// When that cut leaves fewer than [`MIN_FIT_POINTS`] points, the window is
/// re-anchored to the pre-floor segment, i.e. the span `[t_0, t_floor)`.
pub fn lyapunov_exponent(times: &[f64], norms: &[f64], window_fraction: f64, floor: f64) -> Result<ExponentEstimate> {
    if times.len() != norms.len() {
        return Err(Error::Dimension { expected: times.len(), got: norms.len() });
    }
    if !(window_fraction > 0.0 && window_fraction < 1.0) {
        return Err(Error::invalid(format!("window_fraction must be in (0, 1), got {window_fraction}")));
    }
    if !(floor >= 0.0) {
        return Err(Error::invalid("floor must be non-negative"));
    }
    if times.is_empty() {
        return Err(Error::InsufficientData { usable: 0, needed: MIN_FIT_POINTS });
    }

    let t0 = times[0];
    let cut = norms.iter().position(|&v| !(v > floor && v.is_finite()));
    let end = cut.unwrap_or(times.len());
    let floored = cut.is_some();
    let lead = (1.0 - window_fraction).max(0.2);

    let select = |span_end: f64| -> (f64, Vec<usize>) {
        let start = t0 + lead * (span_end - t0);
        (start, (0..end).filter(|&k| times[k] >= start).collect())
    };
    let (mut start, mut idx) = select(*times.last().unwrap());
    if idx.len() < MIN_FIT_POINTS && floored {
        (start, idx) = select(times[end]);
    }
    if idx.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData { usable: idx.len(), needed: MIN_FIT_POINTS });
    }

    let xs: Vec<f64> = idx.iter().map(|&k| times[k]).collect();
    let ys: Vec<f64> = idx.iter().map(|&k| norms[k].ln()).collect();
    let (slope, r_squared) = linear_fit(&xs, &ys);
    Ok(ExponentEstimate { exponent: slope, window: (start, *xs.last().unwrap()), r_squared, floored, points: xs.len() })
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, r²)`. A constant
/// series has `r² = 0`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 0.0 };
    (slope, r2)
}

/// Every quantity of the sufficient synchronization condition
/// `sigma * lambda2 > k_f + (k_g^2 - 2 k_g_bar^2) / 2`, together with the
/// Lyapunov-function constants `c2`, `c3` behind it (with `V = |e|^2 / 2`,
/// hence `p = 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncCertificate {
    pub lambda2: f64,
    pub sigma: f64,
    pub k_f: f64,
    pub k_g: f64,
    pub k_g_bar: f64,
    pub threshold: f64,
    pub c2: f64,
    pub c3: f64,
    pub satisfied: bool,
    /// `(c3 - 2 c2) / 2`, present only when `satisfied`.
    pub guaranteed_rate: Option<f64>,
    pub constants_provenance: ConstantsProvenance,
}

impl SyncCertificate {
    pub fn from_parts(lambda2: f64, sigma: f64, constants: &ModelConstants) -> SyncCertificate {
        let ModelConstants { k_f, k_g, k_g_bar, provenance } = *constants;
        let threshold = k_f + (k_g * k_g - 2.0 * k_g_bar * k_g_bar) / 2.0;
        let c2 = 2.0 * k_f + k_g * k_g - 2.0 * sigma * lambda2;
        let c3 = 4.0 * k_g_bar * k_g_bar;
        let satisfied = sigma * lambda2 > threshold;
        // c3 - 2 c2 = 4 (sigma lambda2 - threshold); the two forms may only
        // disagree by rounding at an exact tie.
        debug_assert!(
            satisfied == (c3 > 2.0 * c2)
                || (sigma * lambda2 - threshold).abs() <= 1e-9 * (1.0 + threshold.abs() + (sigma * lambda2).abs())
        );
        let rate = (c3 - 2.0 * c2) / 2.0;
        SyncCertificate {
            lambda2,
            sigma,
            k_f,
            k_g,
            k_g_bar,
            threshold,
            c2,
            c3,
            satisfied,
            guaranteed_rate: (satisfied && rate > 0.0).then_some(rate),
            constants_provenance: provenance,
        }
    }
}

/// Evaluates the sufficient condition for `m` on `g` at coupling `sigma`.
///
/// Refuses independent-noise models: the condition relies on a single
/// Brownian path shared by all nodes.
pub fn certificate(g: &Graph, m: &NodeModel, sigma: f64, constants: &ModelConstants) -> Result<SyncCertificate> {
    if m.noise_mode() == NoiseMode::Independent {
        return Err(Error::NotApplicable(format!(
            "model `{}` uses independent per-node noise; the synchronization condition requires one Brownian path shared by all nodes",
            m.label()
        )));
    }
    if !sigma.is_finite() {
        return Err(Error::invalid("coupling strength must be finite"));
    }
    let info = spectral_info(g)?;
    Ok(SyncCertificate::from_parts(info.lambda2, sigma, constants))
}

/// Smallest `sigma_n` for which the bistable network with unit coupling
/// satisfies the condition: `sqrt(2 max(0, r - lambda2))`.
pub fn decision_threshold_sigma_n(g: &Graph, r: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::invalid("r must be finite"));
    }
    let lambda2 = spectral_info(g)?.lambda2;
    Ok((2.0 * (r - lambda2).max(0.0)).sqrt())
}

/// Initial conditions for Monte Carlo replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Sampler {
    Fixed(Vec<f64>),
    /// i.i.d. `Normal(mean, std^2)` per coordinate; replicate `k` uses the
    /// stream derived from `(seed, k)`.
    Normal {
        mean: f64,
        std: f64,
        seed: u64,
    },
}

impl X0Sampler {
    pub fn sample(&self, replicate: u64, width: usize) -> Result<Vec<f64>> {
        match self {
            X0Sampler::Fixed(v) => {
                if v.len() != width {
                    return Err(Error::Dimension { expected: width, got: v.len() });
                }
                Ok(v.clone())
            }
            X0Sampler::Normal { mean, std, seed } => {
                if !(std.is_finite() && *std >= 0.0) {
                    return Err(Error::invalid(format!("initial-condition std must be >= 0, got {std}")));
                }
                let dist = Normal::new(*mean, *std)
                    .map_err(|e| Error::invalid(format!("bad initial-condition distribution: {e}")))?;
                let mut rng = rng_from_seed(derive_seed(*seed, replicate));
                Ok((0..width).map(|_| dist.sample(&mut rng)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub window_fraction: f64,
    pub floor: f64,
    /// A replicate whose final error is below `sync_tolerance * |e(0)|` counts as synchronized.
    pub sync_tolerance: f64,
    pub min_r_squared: f64,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { window_fraction: 0.5, floor: 1e-12, sync_tolerance: 1e-6, min_r_squared: 0.5, threads: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub brownian_seed: u64,
    pub exponent: Option<f64>,
    pub r_squared: Option<f64>,
    pub floored: bool,
    pub blew_up: bool,
    pub initial_error: f64,
    pub final_error: f64,
    /// Tail exponents of `|x_i - s|` per node (`None` where the fit failed).
    pub node_exponents: Vec<Option<f64>>,
    pub synced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub fraction_synced: f64,
    pub replicates: usize,
    pub median_exponent: Option<f64>,
    /// `None` when the certificate does not apply or no closed-form constants exist.
    pub certificate: Option<SyncCertificate>,
    pub outcomes: Vec<ReplicateOutcome>,
}

impl MonteCarloSummary {
    /// CSV `replicate,exponent,r_squared,floored`; failed fits leave empty cells.
    pub fn write_exponents_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "replicate,exponent,r_squared,floored")?;
        for o in &self.outcomes {
            let cell = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            writeln!(w, "{},{},{},{}", o.replicate, cell(o.exponent), cell(o.r_squared), o.floored)?;
        }
        Ok(())
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[mid] } else { 0.5 * (values[mid - 1] + values[mid]) })
}

/// Runs `replicates` independent simulations and classifies each as
/// synchronized or not. Replicate `k` integrates with Brownian seed
/// `derive_seed(cfg.seed, k)`, so results do not depend on scheduling.
pub fn monte_carlo_verdict(
    g: &Graph,
    m: &NodeModel,
    sigma: f64,
    cfg: &SimConfig,
    replicates: usize,
    x0: &X0Sampler,
    opts: &McOptions,
) -> Result<MonteCarloSummary> {
    if replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    cfg.validate()?;
    let width = g.node_count() * m.dim();
    x0.sample(0, width)?;

    let certificate = match (m.noise_mode(), analytic_constants(m)) {
        (NoiseMode::Common, Ok(c)) => Some(certificate(g, m, sigma, &c)?),
        _ => None,
    };

    let run_one = |k: usize| -> Result<ReplicateOutcome> {
        let k = k as u64;
        let seed = derive_seed(cfg.seed, k);
        let start = x0.sample(k, width)?;
        let traj = integrate(g, m, sigma, &start, &SimConfig { seed, ..cfg.clone() })?;
        Ok(classify(k, seed, &traj, opts))
    };

    let threads = opts.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes = pool.install(|| (0..replicates).into_par_iter().map(run_one).collect::<Result<Vec<_>>>())?;

    let synced = outcomes.iter().filter(|o| o.synced).count();
    let mut exps: Vec<f64> = outcomes.iter().filter_map(|o| o.exponent).collect();
    Ok(MonteCarloSummary {
        fraction_synced: synced as f64 / replicates as f64,
        replicates,
        median_exponent: median(&mut exps),
        certificate,
        outcomes,
    })
}

fn classify(replicate: u64, brownian_seed: u64, traj: &Trajectory, opts: &McOptions) -> ReplicateOutcome {
    let err = sync_error(traj);
    let initial_error = err.norms[0];
    let final_error = *err.norms.last().unwrap();
    let fit = lyapunov_exponent(&err.times, &err.norms, opts.window_fraction, opts.floor).ok();
    let node_exponents = (0..err.node_count)
        .map(|i| {
            lyapunov_exponent(&err.times, &err.node_norms(i), opts.window_fraction, opts.floor).ok().map(|e| e.exponent)
        })
        .collect();

    let synced = if traj.blew_up {
        false
    } else if initial_error == 0.0 {
        true
    } else {
        let decays = fit.is_some_and(|f| f.exponent < 0.0 && f.r_squared >= opts.min_r_squared);
        decays || final_error < opts.sync_tolerance * initial_error
    };

    ReplicateOutcome {
        replicate,
        brownian_seed,
        exponent: fit.map(|f| f.exponent),
        r_squared: fit.map(|f| f.r_squared),
        floored: fit.is_some_and(|f| f.floored),
        blew_up: traj.blew_up,
        initial_error,
        final_error,
        node_exponents,
        synced,
    }
}
