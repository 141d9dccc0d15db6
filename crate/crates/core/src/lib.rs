//! Simulation and analysis of synchronization in networks of diffusively
//! coupled nonlinear nodes driven by state-dependent white noise.
//!
//! The network state evolves as the Itô SDE
//!
//! ```text
//! dX = [F(t, X) - sigma (L ⊗ I_n) X] dt + G(t, X) db
//! ```
//!
//! where `F` and `G` stack the per-node drift `f(t, x_i)` and linear diffusion
//! `g(t, x_i) = M_g(t) x_i`, `L` is the graph Laplacian and `b` is a scalar
//! Brownian motion shared by every node.
//!
//! Modules:
//!
//! | module | contents |
//! |--------|----------|
//! | [`graph`] | topologies, Laplacians, algebraic connectivity |
//! | [`models`] | node dynamics and their synchronization constants |
//! | [`sde`] | Brownian paths and the Euler–Maruyama network integrator |
//! | [`analysis`] | synchronization certificate, error process, Lyapunov exponents, Monte Carlo |
//! | [`config`] | experiment configuration files |
//! | [`cli`] | the `stochsync` command-line front end |

// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod graph;
pub mod models;
pub mod output;
pub mod rng;
pub mod sde;

pub use analysis::{
    certificate, decision_threshold_sigma_n, lyapunov_exponent, mean_trajectory, monte_carlo_verdict, sync_error,
    ExponentEstimate, McOptions, MonteCarloSummary, SyncCertificate, SyncError, X0Sampler,
};
pub use error::{Error, Result};
pub use graph::{build_topology, laplacian, spectral_info, Graph, SpectralInfo, Topology};
pub use models::{analytic_constants, estimate_constants, ConstantsProvenance, ModelConstants, NodeModel, NoiseMode};
pub use sde::{brownian_path, integrate, integrate_with_path, BrownianPath, Scheme, SimConfig, Trajectory};
