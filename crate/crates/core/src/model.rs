//! Model parameters, the double-well potentials and the energy and mass
//! functionals reported by the diagnostics.

use crate::error::{Error, Result};
use crate::field::{BulkField, LoopField};
use crate::grid::{Grid, LoopKind};
use crate::operators::{
    dirichlet_energy_bulk, dirichlet_energy_loop, loop_grad_norm_sq_field, neumann_grad_norm_sq,
    solve_poisson_loop_zeromean, solve_poisson_neumann_zeromean,
};
use crate::scheme::State;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    /// Bulk mobility.
    pub m1: f64,
    /// Surface mobility.
    pub m2: f64,
    /// Bulk relaxation time; zero gives the parabolic model.
    pub beta1: f64,
    /// Surface relaxation time.
    pub beta2: f64,
    /// Bulk interface width.
    pub eps: f64,
    /// Surface interface width.
    pub delta: f64,
    /// Bulk stabiliser.
    pub s1: f64,
    /// Surface stabiliser.
    pub s2: f64,
    /// Time step.
    pub tau: f64,
}

impl ModelParams {
    /// Reference parameter set for mesh width `h`: unit mobilities scaled to
    /// 1e-3, no relaxation, widths `2h` and stabilisers `2 / width^2`.
    pub fn defaults_for(grid: &Grid) -> Self {
        let eps = 2.0 * grid.h();
        Self {
            m1: 1e-3,
            m2: 1e-3,
            beta1: 0.0,
            beta2: 0.0,
            eps,
            delta: eps,
            s1: 2.0 / (eps * eps),
            s2: 2.0 / (eps * eps),
            tau: 1e-4,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta1 = beta;
        self.beta2 = beta;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("eps", self.eps),
            ("delta", self.delta),
            ("tau", self.tau),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    key,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        let non_negative = [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("s1", self.s1),
            ("s2", self.s2),
        ];
        for (key, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    key,
                    reason: format!("must be non-negative, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Bulk double well `(phi^2 - 1)^2 / (4 eps^2)`.
pub fn f_potential(phi: f64, eps: f64) -> f64 {
    let a = phi * phi - 1.0;
    a * a / (4.0 * eps * eps)
}

/// Derivative of [`f_potential`]: `(phi^3 - phi) / eps^2`.
pub fn f_prime(phi: f64, eps: f64) -> f64 {
    (phi * phi * phi - phi) / (eps * eps)
}

/// Surface double well `(psi^2 - 1)^2 / (4 delta^2)`.
pub fn g_potential(psi: f64, delta: f64) -> f64 {
    f_potential(psi, delta)
}

pub fn g_prime(psi: f64, delta: f64) -> f64 {
    f_prime(psi, delta)
}

/// Trapezoid weight (in units of `h^2`) of loop node `k`.
pub fn loop_trapezoid_weight(grid: &Grid, k: usize) -> f64 {
    match grid.loop_kind(k) {
        LoopKind::Edge(_) => 0.5,
        LoopKind::Corner(..) => 0.25,
    }
}

/// Trapezoid quadrature of `phi` over the square, boundary values from `psi`.
pub fn bulk_mass(phi: &BulkField, psi: &LoopField, grid: &Grid) -> Result<f64> {
    bulk_quadrature(phi, psi, grid, |v| v)
}

fn bulk_quadrature(
    phi: &BulkField,
    psi: &LoopField,
    grid: &Grid,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    phi.check(grid)?;
    psi.check(grid)?;
    let interior: f64 = phi.iter().map(|&v| f(v)).sum();
    let boundary: f64 = psi
        .iter()
        .enumerate()
        .map(|(k, &v)| loop_trapezoid_weight(grid, k) * f(v))
        .sum();
    Ok(grid.h() * grid.h() * (interior + boundary))
}

/// `h * sum psi` around the closed loop.
pub fn surface_mass(psi: &LoopField, grid: &Grid) -> Result<f64> {
    psi.check(grid)?;
    Ok(grid.h() * psi.iter().sum::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energies {
    pub bulk: f64,
    pub surface: f64,
    pub total: f64,
}

pub fn total_energy(
    phi: &BulkField,
    psi: &LoopField,
    grid: &Grid,
    params: &ModelParams,
) -> Result<Energies> {
    let bulk = bulk_quadrature(phi, psi, grid, |v| f_potential(v, params.eps))?
        + dirichlet_energy_bulk(phi, psi, grid)?;
    let surface = grid.h() * psi.iter().map(|&v| g_potential(v, params.delta)).sum::<f64>()
        + dirichlet_energy_loop(psi, grid)?;
    Ok(Energies {
        bulk,
        surface,
        total: bulk + surface,
    })
}

/// Total energy plus the relaxation terms
/// `beta1/(2 M1) |grad p|^2 + beta2/(2 M2) |grad_Gamma q|^2`, where `p` and `q`
/// are the zero-mean inverse Laplacians of the discrete rates.
pub fn modified_energy(state: &State, grid: &Grid, params: &ModelParams, tol: f64) -> Result<f64> {
    let base = total_energy(&state.phi, &state.psi, grid, params)?.total;
    Ok(base + relaxation_energy(state, grid, params, tol)?)
}

pub(crate) fn relaxation_energy(
    state: &State,
    grid: &Grid,
    params: &ModelParams,
    tol: f64,
) -> Result<f64> {
    let mut extra = 0.0;
    let bulk_moving = state.phi_rate.iter().chain(state.psi_rate.iter()).any(|&v| v != 0.0);
    if params.beta1 > 0.0 && bulk_moving {
        // the bulk rate on the perimeter is the surface rate
        let (p, pb) = solve_poisson_neumann_zeromean(&state.phi_rate, &state.psi_rate, grid, tol)?;
        extra += params.beta1 / (2.0 * params.m1) * neumann_grad_norm_sq(&p, &pb, grid)?;
    }
    if params.beta2 > 0.0 && state.psi_rate.iter().any(|&v| v != 0.0) {
        let q = solve_poisson_loop_zeromean(&state.psi_rate, grid, tol)?;
        extra += params.beta2 / (2.0 * params.m2) * loop_grad_norm_sq_field(&q, grid)?;
    }
    Ok(extra)
}
