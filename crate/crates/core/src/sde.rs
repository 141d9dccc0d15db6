//! Euler–Maruyama integration of the coupled network
//!
//! ```text
//! X_{k+1} = X_k + [F(t_k, X_k) - sigma (L ⊗ I_n) X_k] dt + G(t_k, X_k) Δb_k
//! ```
//!
//! In common-noise mode every node sees the same scalar increment `Δb_k`; in
//! independent mode node `i` draws its own `Δb_{k,i}`.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{NodeModel, NoiseMode};
use crate::output::fmt_f64;
use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    /// Drift increment `a dt` replaced by `a dt / (1 + dt |a|)` per node.
    TamedEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Keep every `record_stride`-th step (the final step is always kept).
    pub record_stride: usize,
    pub blowup_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-4,
            horizon: 20.0,
            seed: 0,
            scheme: Scheme::EulerMaruyama,
            record_stride: 1,
            blowup_threshold: 1e8,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.dt > self.horizon || self.steps() < 2 {
            return Err(Error::invalid("horizon must span at least two steps of dt"));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride must be at least 1"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::invalid("blowup_threshold must be positive"));
        }
        Ok(())
    }

    /// Number of integration steps, `floor(horizon / dt)` up to rounding.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt + 1e-9).floor() as usize
    }
}

/// Seeded generator of `N(0, dt)` increments, one draw per step in common
/// mode or `node_count` draws per step in independent mode.
pub struct BrownianStream {
    rng: SimRng,
    sqrt_dt: f64,
    width: usize,
}

impl BrownianStream {
    pub fn new(seed: u64, dt: f64, mode: NoiseMode, node_count: usize) -> Self {
        let width = match mode {
            NoiseMode::Common => 1,
            NoiseMode::Independent => node_count,
        };
        BrownianStream { rng: rng_from_seed(seed), sqrt_dt: dt.sqrt(), width }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v = self.sqrt_dt * z;
        }
    }
}

/// Materialized Brownian increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub mode: NoiseMode,
    pub node_count: usize,
    /// Row-major `steps x width`, `width = 1` (common) or `node_count`.
    pub increments: Vec<f64>,
}

impl BrownianPath {
    pub fn width(&self) -> usize {
        match self.mode {
            NoiseMode::Common => 1,
            NoiseMode::Independent => self.node_count,
        }
    }

    pub fn step(&self, k: usize) -> &[f64] {
        let w = self.width();
        &self.increments[k * w..(k + 1) * w]
    }

    /// Aggregates `factor` consecutive increments into one, giving the same
    /// path on a grid of step `factor * dt`.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::invalid(format!("cannot coarsen {} steps by {factor}", self.steps)));
        }
        let w = self.width();
        let steps = self.steps / factor;
        let mut increments = vec![0.0; steps * w];
        for k in 0..steps {
            for f in 0..factor {
                for (acc, v) in increments[k * w..(k + 1) * w].iter_mut().zip(self.step(k * factor + f)) {
                    *acc += v;
                }
            }
        }
        Ok(BrownianPath { dt: self.dt * factor as f64, steps, increments, ..self.clone() })
    }

    /// `b(t_k)` for `k = 0..=steps` (common mode, or node `i` in independent mode).
    pub fn cumulative(&self, node: usize) -> Vec<f64> {
        let w = self.width();
        let col = if w == 1 { 0 } else { node };
        let mut acc = 0.0;
        std::iter::once(0.0)
            .chain((0..self.steps).map(|k| {
                acc += self.increments[k * w + col];
                acc
            }))
            .collect()
    }
}

pub fn brownian_path(seed: u64, steps: usize, dt: f64, mode: NoiseMode, node_count: usize) -> Result<BrownianPath> {
    if steps == 0 {
        return Err(Error::invalid("brownian path needs at least one step"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    if mode == NoiseMode::Independent && node_count == 0 {
        return Err(Error::invalid("independent noise needs node_count >= 1"));
    }
    let mut stream = BrownianStream::new(seed, dt, mode, node_count);
    let mut increments = vec![0.0; steps * stream.width()];
    stream.fill(&mut increments);
    Ok(BrownianPath { seed, dt, steps, mode, node_count, increments })
}

/// Identifiers of the run that produced a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub config: SimConfig,
    pub sigma: f64,
    pub model: String,
    pub noise_mode: NoiseMode,
    pub node_count: usize,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Row-major, one row of `node_count * node_dim` values per recorded time.
    pub states: Vec<f64>,
    pub node_count: usize,
    pub node_dim: usize,
    pub blew_up: bool,
    pub echo: RunEcho,
}

impl Trajectory {
    pub fn width(&self) -> usize {
        self.node_count * self.node_dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        let w = self.width();
        &self.states[k * w..(k + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.width())
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// CSV with header `t,x_0_0,...,x_{N-1}_{n-1}`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 0..self.node_count {
            for c in 0..self.node_dim {
                write!(w, ",x_{i}_{c}")?;
            }
        }
        writeln!(w)?;
        for (t, row) in self.times.iter().zip(self.rows()) {
            write!(w, "{}", fmt_f64(*t))?;
            for v in row {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrates the network with Brownian increments drawn from `cfg.seed`.
pub fn integrate(g: &Graph, m: &NodeModel, sigma: f64, x0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    check_inputs(g, m, sigma, x0, cfg)?;
    let mut stream = BrownianStream::new(cfg.seed, cfg.dt, m.noise_mode(), g.node_count());
    Ok(run(g, m, sigma, x0, cfg, |_, dw| stream.fill(dw)))
}

/// Integrates the network along a given Brownian path. The path must have
/// the model's noise mode, the same `dt` and at least `cfg.steps()` steps.
pub fn integrate_with_path(
    g: &Graph,
    m: &NodeModel,
    sigma: f64,
    x0: &[f64],
    cfg: &SimConfig,
    path: &BrownianPath,
) -> Result<Trajectory> {
    check_inputs(g, m, sigma, x0, cfg)?;
    if path.mode != m.noise_mode() {
        return Err(Error::invalid(format!(
            "brownian path is {} but model `{}` needs {} noise",
            path.mode,
            m.label(),
            m.noise_mode()
        )));
    }
    if path.mode == NoiseMode::Independent && path.node_count != g.node_count() {
        return Err(Error::Dimension { expected: g.node_count(), got: path.node_count });
    }
    if (path.dt - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::invalid(format!("path dt {} differs from config dt {}", path.dt, cfg.dt)));
    }
    if path.steps < cfg.steps() {
        return Err(Error::invalid(format!("path has {} steps, run needs {}", path.steps, cfg.steps())));
    }
    Ok(run(g, m, sigma, x0, cfg, |k, dw| dw.copy_from_slice(path.step(k))))
}

fn check_inputs(g: &Graph, m: &NodeModel, sigma: f64, x0: &[f64], cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("coupling strength must be >= 0, got {sigma}")));
    }
    let width = g.node_count() * m.dim();
    if x0.len() != width {
        return Err(Error::Dimension { expected: width, got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial state contains non-finite values"));
    }
    Ok(())
}

fn run(
    g: &Graph,
    m: &NodeModel,
    sigma: f64,
    x0: &[f64],
    cfg: &SimConfig,
    mut noise: impl FnMut(usize, &mut [f64]),
) -> Trajectory {
    let nodes = g.node_count();
    let n = m.dim();
    let width = nodes * n;
    let steps = cfg.steps();
    let adj = g.adjacency_lists();
    let common = m.noise_mode() == NoiseMode::Common;
    let tamed = cfg.scheme == Scheme::TamedEuler;

    let capacity = steps / cfg.record_stride + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity * width);
    times.push(0.0);
    states.extend_from_slice(x0);

    let mut x = x0.to_vec();
    let mut next = vec![0.0; width];
    let mut drift = vec![0.0; width];
    let mut diff = vec![0.0; width];
    let mut dw = vec![0.0; if common { 1 } else { nodes }];
    let mut blew_up = false;

    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        noise(k, &mut dw);
        for i in 0..nodes {
            let xi = &x[i * n..(i + 1) * n];
            let di = &mut drift[i * n..(i + 1) * n];
            m.drift_into(t, xi, di);
            for &j in &adj[i] {
                let xj = &x[j * n..(j + 1) * n];
                for c in 0..n {
                    di[c] += sigma * (xj[c] - xi[c]);
                }
            }
            m.diffusion_into(t, xi, &mut diff[i * n..(i + 1) * n]);

            let step = if tamed {
                let norm = di.iter().map(|v| v * v).sum::<f64>().sqrt();
                cfg.dt / (1.0 + cfg.dt * norm)
            } else {
                cfg.dt
            };
            let db = if common { dw[0] } else { dw[i] };
            for c in 0..n {
                let idx = i * n + c;
                next[idx] = x[idx] + drift[idx] * step + diff[idx] * db;
            }
        }
        std::mem::swap(&mut x, &mut next);

        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let exploded = !(norm <= cfg.blowup_threshold);
        let last = k + 1 == steps;
        if exploded || last || (k + 1) % cfg.record_stride == 0 {
            times.push((k + 1) as f64 * cfg.dt);
            states.extend_from_slice(&x);
        }
        if exploded {
            blew_up = true;
            break;
        }
    }

    Trajectory {
        times,
        states,
        node_count: nodes,
        node_dim: n,
        blew_up,
        echo: RunEcho {
            config: cfg.clone(),
            sigma,
            model: m.label().to_string(),
            noise_mode: m.noise_mode(),
            node_count: nodes,
            edges: g.edges().collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_topology, Topology};

    fn cfg(dt: f64, horizon: f64, seed: u64) -> SimConfig {
        SimConfig { dt, horizon, seed, ..SimConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1e-3, 1.0, 0).validate().is_ok());
        assert!(cfg(0.0, 1.0, 0).validate().is_err());
        assert!(cfg(1.0, 1.0, 0).validate().is_err());
        assert!(cfg(2.0, 1.0, 0).validate().is_err());
        assert!(SimConfig { record_stride: 0, ..cfg(0.1, 1.0, 0) }.validate().is_err());
        assert_eq!(cfg(1e-4, 20.0, 0).steps(), 200_000);
        assert_eq!(cfg(0.1, 0.3, 0).steps(), 3);
    }

    #[test]
    fn brownian_path_is_deterministic() {
        let a = brownian_path(1, 1000, 0.01, NoiseMode::Common, 5).unwrap();
        let b = brownian_path(1, 1000, 0.01, NoiseMode::Common, 5).unwrap();
        assert_eq!(a, b);
        let c = brownian_path(2, 1000, 0.01, NoiseMode::Common, 5).unwrap();
        assert_ne!(a.increments, c.increments);
        assert_eq!(brownian_path(1, 10, 0.01, NoiseMode::Independent, 4).unwrap().increments.len(), 40);
        assert!(brownian_path(1, 0, 0.01, NoiseMode::Common, 1).is_err());
    }

    #[test]
    fn coarsen_sums_increments() {
        let p = brownian_path(3, 8, 0.25, NoiseMode::Common, 1).unwrap();
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.steps, 2);
        assert_eq!(c.dt, 1.0);
        let total: f64 = p.increments.iter().sum();
        assert!((c.increments.iter().sum::<f64>() - total).abs() < 1e-15);
        assert!(p.coarsen(3).is_err());
        assert_eq!(*p.cumulative(0).last().unwrap(), *c.cumulative(0).last().unwrap());
    }

    #[test]
    fn integrate_rejects_bad_inputs() {
        let g = build_topology(&Topology::Chain, 3).unwrap();
        let m = NodeModel::bistable(1.0, 1.0).unwrap();
        let c = cfg(0.01, 1.0, 0);
        assert!(matches!(integrate(&g, &m, 1.0, &[0.0; 2], &c), Err(Error::Dimension { .. })));
        assert!(integrate(&g, &m, -1.0, &[0.0; 3], &c).is_err());
        assert!(integrate(&g, &m, 1.0, &[f64::NAN, 0.0, 0.0], &c).is_err());
        let ddm_path = brownian_path(0, 100, 0.01, NoiseMode::Independent, 3).unwrap();
        assert!(integrate_with_path(&g, &m, 1.0, &[0.0; 3], &c, &ddm_path).is_err());
        let short = brownian_path(0, 50, 0.01, NoiseMode::Common, 3).unwrap();
        assert!(integrate_with_path(&g, &m, 1.0, &[0.0; 3], &c, &short).is_err());
    }

    #[test]
    fn stream_and_materialized_path_agree() {
        let g = build_topology(&Topology::Ring, 4).unwrap();
        let m = NodeModel::bistable(2.0, 0.7).unwrap();
        let c = SimConfig { record_stride: 7, ..cfg(1e-3, 2.0, 42) };
        let x0 = [1.0, -0.5, 0.2, 2.0];
        let a = integrate(&g, &m, 0.5, &x0, &c).unwrap();
        let path = brownian_path(42, c.steps(), c.dt, NoiseMode::Common, 4).unwrap();
        let b = integrate_with_path(&g, &m, 0.5, &x0, &c, &path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recording_keeps_final_step() {
        let g = build_topology(&Topology::Chain, 2).unwrap();
        let m = NodeModel::integrator(1).unwrap();
        let t = integrate(&g, &m, 1.0, &[0.0, 1.0], &SimConfig { record_stride: 3, ..cfg(0.1, 1.0, 0) }).unwrap();
        assert_eq!(t.len(), 5); // 0, 0.3, 0.6, 0.9, 1.0
        assert!((t.times[4] - 1.0).abs() < 1e-12);
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(t.states.len(), t.len() * t.width());
    }

    #[test]
    fn blowup_is_flagged_not_raised() {
        let g = build_topology(&Topology::Chain, 2).unwrap();
        let m = NodeModel::bistable(5.0, 0.0).unwrap();
        let t = integrate(&g, &m, 1.0, &[50.0, -50.0], &cfg(0.1, 10.0, 0)).unwrap();
        assert!(t.blew_up);
        assert!(t.len() < 101);
        // the tamed scheme survives the same step size
        let tamed = SimConfig { scheme: Scheme::TamedEuler, ..cfg(0.1, 10.0, 0) };
        let t = integrate(&g, &m, 1.0, &[50.0, -50.0], &tamed).unwrap();
        assert!(!t.blew_up);
    }

    #[test]
    fn deterministic_linear_euler() {
        // g = 0, f = a x, one node: Euler gives x0 (1 + a dt)^K
        let g = build_topology(&Topology::Chain, 1).unwrap();
        let m = NodeModel::linear_scalar(-0.8, 0.0).unwrap();
        let c = cfg(1e-4, 2.0, 0);
        let t = integrate(&g, &m, 1.0, &[3.0], &c).unwrap();
        let exact = 3.0 * (-0.8f64 * 2.0).exp();
        let got = t.final_state()[0];
        assert!((got - exact).abs() <= 2.0 * 0.8 * 0.8 * 2.0 * c.dt * exact.abs());
    }

    #[test]
    fn csv_header_and_precision() {
        let g = build_topology(&Topology::Chain, 2).unwrap();
        let m = NodeModel::integrator(2).unwrap();
        let t = integrate(&g, &m, 1.0, &[0.1, 0.2, 0.3, 1.0 / 3.0], &cfg(0.5, 1.0, 0)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x_0_0,x_0_1,x_1_0,x_1_1");
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(first[4], 1.0 / 3.0);
        assert_eq!(text.lines().count(), 1 + t.len());
    }
}
