//! Galerkin assembly of the evolution operators and the θ-scheme step pair.
//!
//! The weak form of the system reads: find u(t) with
//!
//!   d/dt ⟨u, ψ⟩_X + b(u, ψ) + a (u, ψ)_{L²} = ⟨F(t), ψ⟩,
//!
//! where the bilinear form of the generator is
//!
//!   b(u, ψ) = ε ∫ u' ψ' dx + ∫ ψ u' dx + u(-1) ψ(-1),
//!
//! and the load pairs interior sources against basis integrals and boundary
//! data g₀, g₁ against the endpoint basis values:
//! ⟨F, ψ⟩ = ∫ f ψ + g₀ ψ(0) + g₁ ψ(-1).  All integrals are evaluated
//! exactly for piecewise-linear bases, so discrete energy identities hold to
//! round-off: x^T C x = (x(0)² - x(-1)²)/2 for the advection block C, hence
//! x^T K x = ε|x'|² + x(0)²/2 + x(-1)²/2 + a|x|² ≥ 0, which is what makes
//! the θ-scheme contract in the X norm for θ ≥ 1/2.
//!
//! On coefficient vectors the evolution is M u̇ = -K u + ℓ(t) with
//! M = mass_X and K = stiffness_b + a·mass_interior, and one θ-step is
//!
//!   (M + θΔt K) u^{k+1} = (M - (1-θ)Δt K) u^k + Δt ℓ^{k+θ}.
//!
//! The step matrices are factored once per (parameters, grid) pair and the
//! factorizations (including the transposed one that drives the discrete
//! adjoint) are reused across every step and every Gramian application.

use crate::error::Result;
use crate::tridiag::{TriFactor, Tridiag};
use crate::types::{GridSpec, ModelParams};

/// Assembled matrices and factorizations for one (parameters, grid) pair.
#[derive(Clone, Debug)]
pub struct DiscreteOperators {
    pub params: ModelParams,
    pub grid: GridSpec,
    /// Interior L² mass matrix (element h/6 [2 1; 1 2]).
    mass_interior: Tridiag,
    /// X mass matrix: interior mass plus ε on the two endpoint diagonals.
    mass_x: Tridiag,
    /// Matrix of the bilinear form b (diffusion + advection + Γ₁ absorption).
    stiffness_b: Tridiag,
    /// K = stiffness_b + a · mass_interior.
    k_total: Tridiag,
    /// Implicit step matrix A = M + θ Δt K.
    step_implicit: Tridiag,
    /// Explicit step matrix B = M - (1-θ) Δt K.
    step_explicit: Tridiag,
    fact_implicit: TriFactor,
    fact_implicit_t: TriFactor,
    fact_mass_x: TriFactor,
}

/// Assemble mass and stiffness matrices and factor the step pair.
pub fn assemble(p: &ModelParams, grid: &GridSpec) -> Result<DiscreteOperators> {
    let n = grid.n_space;
    let h = grid.h();
    let dt = grid.dt(p);
    let theta = grid.theta;

    let mut mass_interior = Tridiag::zeros(n);
    let mut diffusion = Tridiag::zeros(n);
    let mut advection = Tridiag::zeros(n);
    for e in 0..n - 1 {
        // Element contributions on (x_e, x_{e+1}); rows are test functions.
        mass_interior.diag[e] += h / 3.0;
        mass_interior.diag[e + 1] += h / 3.0;
        mass_interior.sup[e] += h / 6.0;
        mass_interior.sub[e] += h / 6.0;

        diffusion.diag[e] += 1.0 / h;
        diffusion.diag[e + 1] += 1.0 / h;
        diffusion.sup[e] -= 1.0 / h;
        diffusion.sub[e] -= 1.0 / h;

        // ∫ ψ_i ψ_j' over the element: [[-1/2, 1/2], [-1/2, 1/2]].
        advection.diag[e] -= 0.5;
        advection.sup[e] += 0.5;
        advection.sub[e] -= 0.5;
        advection.diag[e + 1] += 0.5;
    }

    let mut mass_x = mass_interior.clone();
    mass_x.diag[0] += p.epsilon;
    mass_x.diag[n - 1] += p.epsilon;

    let mut stiffness_b = diffusion.clone();
    for i in 0..n {
        stiffness_b.diag[i] *= p.epsilon;
    }
    for i in 0..n - 1 {
        stiffness_b.sub[i] = p.epsilon * diffusion.sub[i] + advection.sub[i];
        stiffness_b.sup[i] = p.epsilon * diffusion.sup[i] + advection.sup[i];
        stiffness_b.diag[i] += advection.diag[i];
    }
    stiffness_b.diag[n - 1] += advection.diag[n - 1];
    // Γ₁ absorption term u(-1) ψ(-1).
    stiffness_b.diag[0] += 1.0;

    let k_total = stiffness_b.add_scaled(&mass_interior, p.a);
    let step_implicit = mass_x.add_scaled(&k_total, theta * dt);
    let step_explicit = mass_x.add_scaled(&k_total, -(1.0 - theta) * dt);

    let fact_implicit = step_implicit.factor()?;
    let fact_implicit_t = step_implicit.transpose().factor()?;
    let fact_mass_x = mass_x.factor()?;

    Ok(DiscreteOperators {
        params: *p,
        grid: *grid,
        mass_interior,
        mass_x,
        stiffness_b,
        k_total,
        step_implicit,
        step_explicit,
        fact_implicit,
        fact_implicit_t,
        fact_mass_x,
    })
}

impl DiscreteOperators {
    pub fn n_space(&self) -> usize {
        self.grid.n_space
    }

    pub fn mass_interior(&self) -> &Tridiag {
        &self.mass_interior
    }

    pub fn mass_x(&self) -> &Tridiag {
        &self.mass_x
    }

    pub fn stiffness_b(&self) -> &Tridiag {
        &self.stiffness_b
    }

    pub fn k_total(&self) -> &Tridiag {
        &self.k_total
    }

    pub fn step_implicit(&self) -> &Tridiag {
        &self.step_implicit
    }

    pub fn step_explicit(&self) -> &Tridiag {
        &self.step_explicit
    }

    /// X inner product through the assembled mass matrix.
    pub fn inner_m(&self, u: &[f64], w: &[f64]) -> f64 {
        self.mass_x.bilinear(u, w)
    }

    pub fn norm_m(&self, u: &[f64]) -> f64 {
        self.inner_m(u, u).max(0.0).sqrt()
    }

    /// Solve (M + θ Δt K) x = rhs in place.
    pub fn solve_implicit(&self, rhs: &mut [f64]) {
        self.fact_implicit.solve_in_place(rhs);
    }

    /// Solve (M + θ Δt K)^T x = rhs in place.
    pub fn solve_implicit_t(&self, rhs: &mut [f64]) {
        self.fact_implicit_t.solve_in_place(rhs);
    }

    /// Solve mass_X x = rhs in place.
    pub fn solve_mass(&self, rhs: &mut [f64]) {
        self.fact_mass_x.solve_in_place(rhs);
    }
}
