//! Numerical laboratory for boundary null-control of the 1D
//! advection-diffusion system
//!
//!   u_t + u_x - ε u_xx + a u = 0   on (-1, 0),
//!
//! with dynamic (Wentzell-type) boundary conditions coupling the boundary
//! values to the flux: ε(u_t + ∂_ν u) = v(t) at x = 0 (the control) and
//! ε(u_t + ∂_ν u) + u = 0 at x = -1.  The crate provides:
//!
//! - a piecewise-linear Galerkin discretization of the generator's bilinear
//!   form with θ-scheme time stepping ([`operators`], [`forward`]);
//! - the exact algebraic transpose of the discrete evolution, so duality
//!   products and observability Gramians close at round-off ([`adjoint`]);
//! - penalized null-control by conjugate gradients on the Gramian
//!   ([`hum`]), with cost-versus-viscosity sweeps that exhibit both the
//!   vanishing-cost regime (long horizons) and the exploding-cost regime
//!   (short horizons);
//! - measurement labs: exponential backward dissipation rates
//!   ([`dissipation`]), Carleman-weighted observability integrals
//!   ([`carleman`]), a certified lower-bound witness built from a
//!   transported bump ([`lower_bound`]), and a transverse-Fourier reduction
//!   of the 2D problem to a family of 1D controls ([`fourier`]);
//! - a deterministic experiment driver with CSV/JSON/SVG outputs
//!   ([`sweep`]), exposed through the `advdiff` binary.

pub mod adjoint;
pub mod carleman;
pub mod dissipation;
pub mod error;
pub mod forward;
pub mod fourier;
pub mod hum;
pub mod lower_bound;
pub mod operators;
pub mod sweep;
pub mod tridiag;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    inner_l2, inner_x, l2_time_norm, norm_x, ControlLocation, ControlSignal, GridSpec,
    ModelParams, StateX, Trajectory,
};
