//! Finite-difference operators on the vertex grid and the zero-mean Poisson
//! solves behind the inverse-Laplacian diagnostics.

use crate::error::Result;
use crate::field::{full_field, node_value, split_full, BulkField, LoopField};
use crate::grid::{Grid, InwardStencil, NormalStencil};
use crate::linalg::conjugate_gradient;

/// Five-point Laplacian at interior nodes; neighbours on the perimeter read `psi`.
pub fn apply_bulk_laplacian(phi: &BulkField, psi: &LoopField, grid: &Grid) -> Result<BulkField> {
    phi.check(grid)?;
    psi.check(grid)?;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut out = BulkField::zeros(grid);
    for (idx, o) in out.iter_mut().enumerate() {
        let sum: f64 = grid
            .neighbours(idx)
            .iter()
            .map(|&nb| node_value(phi, psi, nb))
            .sum();
        *o = (sum - 4.0 * phi[idx]) * inv_h2;
    }
    Ok(out)
}

/// Periodic three-point second difference along the perimeter loop.
pub fn apply_loop_laplacian(psi: &LoopField, grid: &Grid) -> Result<LoopField> {
    psi.check(grid)?;
    LoopField::from_vec(grid, loop_laplacian_raw(psi, grid.h()))
}

pub(crate) fn loop_laplacian_raw(psi: &[f64], h: f64) -> Vec<f64> {
    let m = psi.len();
    let inv_h2 = 1.0 / (h * h);
    (0..m)
        .map(|k| (psi[(k + m - 1) % m] - 2.0 * psi[k] + psi[(k + 1) % m]) * inv_h2)
        .collect()
}

fn side_derivative(phi: &[f64], psi: &[f64], grid: &Grid, s: &NormalStencil) -> f64 {
    let v = s
        .nodes
        .map(|(i, j)| node_value(phi, psi, grid.node(i, j).expect("stencil inside grid")));
    (3.0 * v[0] - 4.0 * v[1] + v[2]) / (2.0 * grid.h())
}

/// Second-order one-sided outward normal derivative at loop node `k`.
/// Corners average the two incident side derivatives.
pub fn normal_derivative(phi: &BulkField, psi: &LoopField, grid: &Grid, k: usize) -> Result<f64> {
    phi.check(grid)?;
    psi.check(grid)?;
    Ok(match grid.inward_normal_stencil(k)? {
        InwardStencil::Edge(s) => side_derivative(phi, psi, grid, &s),
        InwardStencil::Corner([a, b]) => {
            0.5 * (side_derivative(phi, psi, grid, &a) + side_derivative(phi, psi, grid, &b))
        }
    })
}

/// `1/2 |grad phi|^2` over the square by an edge sum. Edges lying on the
/// perimeter carry half weight, so affine fields integrate exactly.
pub fn dirichlet_energy_bulk(phi: &BulkField, psi: &LoopField, grid: &Grid) -> Result<f64> {
    phi.check(grid)?;
    psi.check(grid)?;
    let n = grid.n();
    let at = |i: usize, j: usize| node_value(phi, psi, grid.node(i, j).expect("in range"));
    let mut sum = 0.0;
    for j in 0..=n {
        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
        for i in 0..n {
            sum += w * (at(i + 1, j) - at(i, j)).powi(2);
        }
    }
    for i in 0..=n {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        for j in 0..n {
            sum += w * (at(i, j + 1) - at(i, j)).powi(2);
        }
    }
    // ((d/h)^2) * h^2 per edge
    Ok(0.5 * sum)
}

/// `1/2 |grad_Gamma psi|^2` integrated along the closed loop.
pub fn dirichlet_energy_loop(psi: &LoopField, grid: &Grid) -> Result<f64> {
    psi.check(grid)?;
    Ok(0.5 * loop_grad_norm_sq(psi, grid.h()))
}

fn loop_grad_norm_sq(q: &[f64], h: f64) -> f64 {
    let m = q.len();
    (0..m).map(|k| (q[(k + 1) % m] - q[k]).powi(2)).sum::<f64>() / h
}

/// Zero-flux Laplacian on all vertices: mirrored ghosts across the sides,
/// i.e. the lumped control-volume operator
/// `(L p)_v = sum_e w_e (p_u - p_v) / (c_v h^2)` with perimeter edges at
/// weight 1/2 and control areas `c_v` of 1, 1/2, 1/4. Interior rows coincide
/// with the five-point stencil. Self-adjoint in the trapezoid inner product.
pub fn apply_neumann_laplacian(
    p: &BulkField,
    pb: &LoopField,
    grid: &Grid,
) -> Result<(BulkField, LoopField)> {
    let full = full_field(p, pb, grid)?;
    let mut out = vec![0.0; full.len()];
    stiffness_raw(&full, &mut out, grid);
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    for (v, o) in out.iter_mut().enumerate() {
        *o *= -inv_h2 / grid.vertex_weight(v);
    }
    split_full(out, grid)
}

// K p with (K p)_v = sum_e w_e (p_v - p_u); symmetric, null space = constants
fn stiffness_raw(p: &[f64], out: &mut [f64], grid: &Grid) {
    for (v, o) in out.iter_mut().enumerate() {
        *o = grid
            .vertex_edges(v)
            .iter()
            .map(|&(u, w)| w * (p[v] - p[u]))
            .sum();
    }
}

/// `|grad p|^2` matching [`apply_neumann_laplacian`], equal to `-(p, L p)_h`
/// in the trapezoid inner product.
pub fn neumann_grad_norm_sq(p: &BulkField, pb: &LoopField, grid: &Grid) -> Result<f64> {
    Ok(2.0 * dirichlet_energy_bulk(p, pb, grid)?)
}

/// Trapezoid inner product `h^2 sum c_v u_v w_v` over all vertices.
pub fn trapezoid_inner(
    u: (&BulkField, &LoopField),
    w: (&BulkField, &LoopField),
    grid: &Grid,
) -> Result<f64> {
    let a = full_field(u.0, u.1, grid)?;
    let b = full_field(w.0, w.1, grid)?;
    let h2 = grid.h() * grid.h();
    Ok(h2
        * (0..a.len())
            .map(|v| grid.vertex_weight(v) * a[v] * b[v])
            .sum::<f64>())
}

/// `|grad_Gamma q|^2_Gamma` on the loop.
pub fn loop_grad_norm_sq_field(q: &LoopField, grid: &Grid) -> Result<f64> {
    q.check(grid)?;
    Ok(loop_grad_norm_sq(q, grid.h()))
}

fn subtract_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn subtract_weighted_mean(v: &mut [f64], grid: &Grid) {
    let area = (grid.n() * grid.n()) as f64;
    let mean = (0..v.len()).map(|i| grid.vertex_weight(i) * v[i]).sum::<f64>() / area;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solves `L p = w - mean(w)` for [`apply_neumann_laplacian`], means taken
/// with trapezoid weights, and returns the solution with zero weighted mean.
/// `tol` bounds the relative residual of the symmetric stiffness form.
pub fn solve_poisson_neumann_zeromean(
    w: &BulkField,
    wb: &LoopField,
    grid: &Grid,
    tol: f64,
) -> Result<(BulkField, LoopField)> {
    let mut rhs = full_field(w, wb, grid)?;
    subtract_weighted_mean(&mut rhs, grid);
    // L p = w  <=>  K p = -h^2 c w
    let h2 = grid.h() * grid.h();
    for (v, r) in rhs.iter_mut().enumerate() {
        *r *= -h2 * grid.vertex_weight(v);
    }
    let max_iter = 20 * grid.vertex_count() + 100;
    let (mut p, _) = conjugate_gradient(
        |x, y| stiffness_raw(x, y, grid),
        subtract_mean,
        &rhs,
        tol,
        max_iter,
    )?;
    subtract_weighted_mean(&mut p, grid);
    split_full(p, grid)
}

/// Solves the periodic loop Poisson problem `L_Gamma q = w - mean(w)` exactly
/// by two cumulative sums, returning the zero-mean solution.
pub fn solve_poisson_loop_zeromean(w: &LoopField, grid: &Grid, _tol: f64) -> Result<LoopField> {
    w.check(grid)?;
    let h2 = grid.h() * grid.h();
    let mut rhs = w.to_vec();
    subtract_mean(&mut rhs);
    let m = rhs.len();
    // d_k = q_{k+1} - q_k satisfies d_k - d_{k-1} = h^2 w_k; periodicity
    // requires sum d_k = 0, which fixes d_0.
    let mut d = vec![0.0; m];
    for k in 1..m {
        d[k] = d[k - 1] + h2 * rhs[k];
    }
    let shift = d.iter().sum::<f64>() / m as f64;
    d.iter_mut().for_each(|v| *v -= shift);
    let mut q = vec![0.0; m];
    for k in 1..m {
        q[k] = q[k - 1] + d[k - 1];
    }
    subtract_mean(&mut q);
    LoopField::from_vec(grid, q)
}
