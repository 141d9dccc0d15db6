//! Node dynamics: drift `f(t, x)` and diffusion `g(t, x) = M_g(t) x`.
//!
//! Each model also knows, where a closed form exists, the three constants the
//! synchronization certificate is built from:
//!
//! * `k_f`: one-sided (QUAD) bound, `(x-y)^T (f(x)-f(y)) <= k_f |x-y|^2`
//! * `k_g`: Lipschitz bound, `|g(x)-g(y)| <= k_g |x-y|`
//! * `k_g_bar`: persistence bound, `|(x-y)^T (g(x)-g(y))| >= k_g_bar |x-y|^2`

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// How the scalar Brownian motion enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// One Brownian path shared by every node.
    Common,
    /// One Brownian path per node.
    Independent,
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseMode::Common => f.write_str("common"),
            NoiseMode::Independent => f.write_str("independent"),
        }
    }
}

pub type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
pub type DiffusionMatrixFn = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;

/// User-supplied dynamics. `drift(t, x, out)` writes `f(t, x)` into `out`;
/// `diffusion(t)` returns the `dim x dim` matrix `M_g(t)`.
#[derive(Clone)]
pub struct CustomDynamics {
    pub dim: usize,
    pub drift: Arc<DriftFn>,
    pub diffusion: Arc<DiffusionMatrixFn>,
    pub noise_mode: NoiseMode,
}

impl fmt::Debug for CustomDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDynamics")
            .field("dim", &self.dim)
            .field("noise_mode", &self.noise_mode)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    /// `dx = (r x - x^3) dt + sigma_n x db`
    Bistable {
        r: f64,
        sigma_n: f64,
    },
    /// Zero drift, zero diffusion: pure consensus.
    Integrator {
        dim: usize,
    },
    /// `dx = A x dt + M x db` with constant square `A`, `M`.
    Linear {
        drift: DMatrix<f64>,
        diffusion: DMatrix<f64>,
    },
    /// Drift-diffusion model `dx = beta dt + sigma_b db_i`, independent noise per node.
    Ddm {
        beta: f64,
        sigma_b: f64,
    },
    Custom(CustomDynamics),
}

#[derive(Debug, Clone)]
pub struct NodeModel {
    kind: ModelKind,
    label: String,
}

impl NodeModel {
    pub fn bistable(r: f64, sigma_n: f64) -> Result<Self> {
        ensure_finite(&[r, sigma_n], "bistable parameters")?;
        Ok(NodeModel { kind: ModelKind::Bistable { r, sigma_n }, label: format!("bistable(r={r}, sigma_n={sigma_n})") })
    }

    pub fn integrator(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("node dimension must be positive"));
        }
        Ok(NodeModel { kind: ModelKind::Integrator { dim }, label: format!("integrator(n={dim})") })
    }

    pub fn linear(drift: DMatrix<f64>, diffusion: DMatrix<f64>) -> Result<Self> {
        let n = drift.nrows();
        if n == 0 || !drift.is_square() || diffusion.shape() != (n, n) {
            return Err(Error::invalid(format!(
                "linear node needs square matrices of equal size, got {:?} and {:?}",
                drift.shape(),
                diffusion.shape()
            )));
        }
        ensure_finite(drift.as_slice(), "linear drift matrix")?;
        ensure_finite(diffusion.as_slice(), "linear diffusion matrix")?;
        Ok(NodeModel { kind: ModelKind::Linear { drift, diffusion }, label: format!("linear(n={n})") })
    }

    /// Scalar linear node `dx = a x dt + m x db` (geometric Brownian motion).
    pub fn linear_scalar(a: f64, m: f64) -> Result<Self> {
        NodeModel::linear(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, m))
    }

    pub fn ddm(beta: f64, sigma_b: f64) -> Result<Self> {
        ensure_finite(&[beta, sigma_b], "ddm parameters")?;
        Ok(NodeModel { kind: ModelKind::Ddm { beta, sigma_b }, label: format!("ddm(beta={beta}, sigma_b={sigma_b})") })
    }

    pub fn custom(dynamics: CustomDynamics, label: impl Into<String>) -> Result<Self> {
        if dynamics.dim == 0 {
            return Err(Error::invalid("node dimension must be positive"));
        }
        Ok(NodeModel { kind: ModelKind::Custom(dynamics), label: label.into() })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Node state dimension `n`.
    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::Bistable { .. } | ModelKind::Ddm { .. } => 1,
            ModelKind::Integrator { dim } => *dim,
            ModelKind::Linear { drift, .. } => drift.nrows(),
            ModelKind::Custom(c) => c.dim,
        }
    }

    pub fn noise_mode(&self) -> NoiseMode {
        match &self.kind {
            ModelKind::Ddm { .. } => NoiseMode::Independent,
            ModelKind::Custom(c) => c.noise_mode,
            _ => NoiseMode::Common,
        }
    }

    /// `M_g(t)`, or `None` for models whose diffusion is additive rather
    /// than linear in the state (the DDM).
    pub fn diffusion_matrix(&self, t: f64) -> Option<DMatrix<f64>> {
        match &self.kind {
            ModelKind::Bistable { sigma_n, .. } => Some(DMatrix::from_element(1, 1, *sigma_n)),
            ModelKind::Integrator { dim } => Some(DMatrix::zeros(*dim, *dim)),
            ModelKind::Linear { diffusion, .. } => Some(diffusion.clone()),
            ModelKind::Ddm { .. } => None,
            ModelKind::Custom(c) => Some((c.diffusion)(t)),
        }
    }

    /// Writes `f(t, x)` into `out`. No validation; `x` and `out` have length `dim`.
    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Bistable { r, .. } => {
                let v = x[0];
                out[0] = r * v - v * v * v;
            }
            ModelKind::Integrator { .. } => out.fill(0.0),
            ModelKind::Linear { drift, .. } => mat_vec(drift, x, out),
            ModelKind::Ddm { beta, .. } => out[0] = *beta,
            ModelKind::Custom(c) => (c.drift)(t, x, out),
        }
    }

    /// Writes `g(t, x)` into `out`. No validation.
    pub fn diffusion_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Bistable { sigma_n, .. } => out[0] = sigma_n * x[0],
            ModelKind::Integrator { .. } => out.fill(0.0),
            ModelKind::Linear { diffusion, .. } => mat_vec(diffusion, x, out),
            ModelKind::Ddm { sigma_b, .. } => out[0] = *sigma_b,
            ModelKind::Custom(c) => mat_vec(&(c.diffusion)(t), x, out),
        }
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        ensure_finite(x, "node state")
    }
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..x.len()).map(|j| m[(i, j)] * x[j]).sum();
    }
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite values")))
    }
}

/// `f(t, x)` with input validation.
pub fn drift_eval(m: &NodeModel, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    m.check_state(x)?;
    let mut out = vec![0.0; x.len()];
    m.drift_into(t, x, &mut out);
    Ok(out)
}

/// `g(t, x)` with input validation.
pub fn diffusion_eval(m: &NodeModel, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    m.check_state(x)?;
    let mut out = vec![0.0; x.len()];
    m.diffusion_into(t, x, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsProvenance {
    Analytic,
    /// Extremes over random samples: a lower bound on `k_f`, `k_g` and an
    /// upper bound on `k_g_bar`, never a certificate.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub k_f: f64,
    pub k_g: f64,
    pub k_g_bar: f64,
    pub provenance: ConstantsProvenance,
}

/// Closed-form constants for the built-in models.
///
/// For the linear node, `k_f` is the largest eigenvalue of the symmetric part
/// of `A`; `M` must be symmetric, giving `k_g = max |eig(M)|` and
/// `k_g_bar = min |eig(M)|` when `M` is semidefinite (0 when indefinite).
pub fn analytic_constants(m: &NodeModel) -> Result<ModelConstants> {
    let (k_f, k_g, k_g_bar) = match m.kind() {
        ModelKind::Bistable { r, sigma_n } => (*r, sigma_n.abs(), sigma_n.abs()),
        ModelKind::Integrator { .. } | ModelKind::Ddm { .. } => (0.0, 0.0, 0.0),
        ModelKind::Linear { drift, diffusion } => {
            let sym = (drift + drift.transpose()) * 0.5;
            let k_f = symmetric_eigenvalues(sym)?.into_iter().fold(f64::NEG_INFINITY, f64::max);
            let asym = (diffusion - diffusion.transpose()).amax();
            if asym > 1e-12 * diffusion.amax().max(1.0) {
                return Err(Error::UnsupportedModel(
                    "no closed-form constants for a non-symmetric diffusion matrix; use estimate_constants".into(),
                ));
            }
            let ev = symmetric_eigenvalues(diffusion.clone())?;
            let k_g = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let semidefinite = ev.iter().all(|&v| v >= 0.0) || ev.iter().all(|&v| v <= 0.0);
            let k_g_bar = if semidefinite { ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs())) } else { 0.0 };
            (k_f, k_g, k_g_bar)
        }
        ModelKind::Custom(_) => {
            return Err(Error::UnsupportedModel(format!(
                "no closed-form constants for custom model `{}`; use estimate_constants",
                m.label()
            )))
        }
    };
    Ok(ModelConstants { k_f, k_g, k_g_bar, provenance: ConstantsProvenance::Analytic })
}

fn symmetric_eigenvalues(m: DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000).ok_or(Error::EigenNoConvergence(n))?;
    Ok(eig.eigenvalues.iter().copied().collect())
}

/// Axis-aligned sampling box in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = DomainBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        DomainBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::invalid("domain box bounds must be non-empty and of equal length"));
        }
        let ok = self.lower.iter().zip(&self.upper).all(|(lo, hi)| lo.is_finite() && hi.is_finite() && hi > lo);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("degenerate domain box: every axis needs finite lower < upper"))
        }
    }
}

/// Sampled constants at `t = 0`. See [`estimate_constants_over_time`].
pub fn estimate_constants(m: &NodeModel, domain: &DomainBox, sample_count: usize, seed: u64) -> Result<ModelConstants> {
    estimate_constants_over_time(m, domain, &[0.0], sample_count, seed)
}

/// Extremes of the three defining ratios over `sample_count` random pairs
/// `(x, y)` drawn uniformly from `domain`, each at a time drawn uniformly from
/// `times`.
pub fn estimate_constants_over_time(
    m: &NodeModel,
    domain: &DomainBox,
    times: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<ModelConstants> {
    domain.validate()?;
    let n = m.dim();
    if domain.dim() != n {
        return Err(Error::Dimension { expected: n, got: domain.dim() });
    }
    if sample_count < 2 {
        return Err(Error::invalid("sample_count must be at least 2"));
    }
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time grid must be non-empty and finite"));
    }

    let mut rng = rng_from_seed(seed);
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let (mut fx, mut fy, mut gx, mut gy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut k_f = f64::NEG_INFINITY;
    let mut k_g = 0.0_f64;
    let mut k_g_bar = f64::INFINITY;
    let mut used = 0usize;

    for _ in 0..sample_count {
        for i in 0..n {
            let (lo, hi) = (domain.lower[i], domain.upper[i]);
            x[i] = rng.random_range(lo..hi);
            y[i] = rng.random_range(lo..hi);
        }
        let t = times[rng.random_range(0..times.len())];
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 == 0.0 {
            continue;
        }
        m.drift_into(t, &x, &mut fx);
        m.drift_into(t, &y, &mut fy);
        m.diffusion_into(t, &x, &mut gx);
        m.diffusion_into(t, &y, &mut gy);

        let mut quad = 0.0;
        let mut persist = 0.0;
        let mut dg2 = 0.0;
        for i in 0..n {
            let d = x[i] - y[i];
            let dg = gx[i] - gy[i];
            quad += d * (fx[i] - fy[i]);
            persist += d * dg;
            dg2 += dg * dg;
        }
        k_f = k_f.max(quad / d2);
        k_g = k_g.max((dg2 / d2).sqrt());
        k_g_bar = k_g_bar.min(persist.abs() / d2);
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid("every sampled pair coincided"));
    }
    Ok(ModelConstants { k_f, k_g, k_g_bar, provenance: ConstantsProvenance::Sampled })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bistable_drift_values() {
        let m = NodeModel::bistable(5.0, 4.0).unwrap();
        assert_eq!(drift_eval(&m, 0.0, &[1.0]).unwrap(), vec![4.0]);
        assert_eq!(drift_eval(&m, 0.0, &[0.0]).unwrap(), vec![0.0]);
        let root = 5.0_f64.sqrt();
        assert!(drift_eval(&m, 0.0, &[root]).unwrap()[0].abs() < 1e-13);
        assert!(drift_eval(&m, 0.0, &[-root]).unwrap()[0].abs() < 1e-13);
    }

    #[test]
    fn bistable_diffusion_values() {
        let m = NodeModel::bistable(5.0, 4.0).unwrap();
        assert_eq!(diffusion_eval(&m, 0.0, &[2.0]).unwrap(), vec![8.0]);
        assert_eq!(diffusion_eval(&m, 0.0, &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(diffusion_eval(&m, 0.0, &[-1.0]).unwrap(), vec![-4.0]);
    }

    #[test]
    fn evaluation_rejects_bad_input() {
        let m = NodeModel::bistable(5.0, 4.0).unwrap();
        assert!(drift_eval(&m, 0.0, &[f64::NAN]).is_err());
        assert!(diffusion_eval(&m, 0.0, &[f64::INFINITY]).is_err());
        assert!(matches!(drift_eval(&m, 0.0, &[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn analytic_constants_for_builtins() {
        let c = analytic_constants(&NodeModel::bistable(5.0, 4.0).unwrap()).unwrap();
        assert_eq!((c.k_f, c.k_g, c.k_g_bar), (5.0, 4.0, 4.0));
        let c = analytic_constants(&NodeModel::integrator(2).unwrap()).unwrap();
        assert_eq!((c.k_f, c.k_g, c.k_g_bar), (0.0, 0.0, 0.0));
        let c = analytic_constants(&NodeModel::linear_scalar(-2.0, 1.0).unwrap()).unwrap();
        assert!((c.k_f + 2.0).abs() < 1e-14);
        assert!((c.k_g - 1.0).abs() < 1e-14 && (c.k_g_bar - 1.0).abs() < 1e-14);
        let c = analytic_constants(&NodeModel::ddm(0.3, 1.0).unwrap()).unwrap();
        assert_eq!((c.k_f, c.k_g, c.k_g_bar), (0.0, 0.0, 0.0));
    }

    #[test]
    fn analytic_constants_linear_matrix() {
        // A = [[0, 1], [-1, -1]] has symmetric part diag(0, -1) => k_f = 0
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]);
        let c = analytic_constants(&NodeModel::linear(a.clone(), m).unwrap()).unwrap();
        assert!(c.k_f.abs() < 1e-12);
        assert!((c.k_g - 2.5).abs() < 1e-12);
        assert!((c.k_g_bar - 1.5).abs() < 1e-12);

        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        let c = analytic_constants(&NodeModel::linear(a.clone(), indefinite).unwrap()).unwrap();
        assert!((c.k_g - 3.0).abs() < 1e-12);
        assert_eq!(c.k_g_bar, 0.0);

        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let err = analytic_constants(&NodeModel::linear(a, skew).unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedModel(_)));
    }

    #[test]
    fn custom_model_needs_sampling() {
        let custom = CustomDynamics {
            dim: 1,
            drift: Arc::new(|_t, x, out| out[0] = -x[0]),
            diffusion: Arc::new(|t| DMatrix::from_element(1, 1, 1.0 + 0.5 * t.sin())),
            noise_mode: NoiseMode::Common,
        };
        let m = NodeModel::custom(custom, "damped").unwrap();
        assert!(matches!(analytic_constants(&m), Err(Error::UnsupportedModel(_))));
        let times: Vec<f64> = (0..64).map(|k| k as f64 * 0.1).collect();
        let c = estimate_constants_over_time(&m, &DomainBox::cube(1, -1.0, 1.0).unwrap(), &times, 2000, 5).unwrap();
        assert!((c.k_f + 1.0).abs() < 1e-12);
        assert!(c.k_g <= 1.5 + 1e-12 && c.k_g > 1.4);
        assert!(c.k_g_bar >= 0.5 - 1e-12 && c.k_g_bar < 0.6);
    }

    #[test]
    fn sampled_bistable_constants_approach_analytic() {
        let m = NodeModel::bistable(5.0, 2.0).unwrap();
        let c = estimate_constants(&m, &DomainBox::cube(1, -10.0, 10.0).unwrap(), 10_000, 1).unwrap();
        assert_eq!(c.provenance, ConstantsProvenance::Sampled);
        assert!(c.k_f <= 5.0 && c.k_f >= 4.95, "k_f = {}", c.k_f);
        assert!((c.k_g - 2.0).abs() <= 0.05);
        assert!((c.k_g_bar - 2.0).abs() <= 0.05);
    }

    #[test]
    fn sampled_integrator_constants_are_zero() {
        let m = NodeModel::integrator(3).unwrap();
        let c = estimate_constants(&m, &DomainBox::cube(3, -2.0, 5.0).unwrap(), 500, 9).unwrap();
        assert_eq!((c.k_f, c.k_g, c.k_g_bar), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sampled_linear_scalar_constants_are_exact() {
        let m = NodeModel::linear_scalar(3.0, 0.5).unwrap();
        let c = estimate_constants(&m, &DomainBox::cube(1, -4.0, 4.0).unwrap(), 1000, 2).unwrap();
        assert!((c.k_f - 3.0).abs() <= 1e-12);
        assert!((c.k_g - 0.5).abs() <= 1e-12);
        assert!((c.k_g_bar - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn estimate_rejects_bad_domains() {
        let m = NodeModel::bistable(1.0, 1.0).unwrap();
        assert!(DomainBox::cube(1, 1.0, 1.0).is_err());
        let flat = DomainBox { lower: vec![0.0], upper: vec![0.0] };
        assert!(estimate_constants(&m, &flat, 100, 0).is_err());
        let wrong_dim = DomainBox::cube(2, -1.0, 1.0).unwrap();
        assert!(estimate_constants(&m, &wrong_dim, 100, 0).is_err());
        assert!(estimate_constants(&m, &DomainBox::cube(1, -1.0, 1.0).unwrap(), 1, 0).is_err());
    }

    #[test]
    fn estimate_is_deterministic() {
        let m = NodeModel::bistable(5.0, 2.0).unwrap();
        let b = DomainBox::cube(1, -3.0, 3.0).unwrap();
        assert_eq!(estimate_constants(&m, &b, 300, 4).unwrap(), estimate_constants(&m, &b, 300, 4).unwrap());
    }

    #[test]
    fn noise_modes() {
        assert_eq!(NodeModel::bistable(1.0, 1.0).unwrap().noise_mode(), NoiseMode::Common);
        assert_eq!(NodeModel::ddm(0.1, 1.0).unwrap().noise_mode(), NoiseMode::Independent);
        assert!(NodeModel::ddm(0.1, 1.0).unwrap().diffusion_matrix(0.0).is_none());
    }
}
