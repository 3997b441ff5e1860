//! The linear stabilised time stepper.
//!
//! Each step solves one coupled linear system for
//! `[phi | mu | mu_b | psi | mu_gamma]`, where `phi`, `mu` live on interior
//! vertices, `mu_b`, `psi`, `mu_gamma` on the perimeter loop, and `L_N` is the
//! zero-flux control-volume Laplacian on all vertices (control area `c h^2`):
//!
//! ```text
//! (a) a1 phi - M1 L_N mu                         = a1 phi^n + (b1/tau) Phi^n    (every vertex, phi = psi on the loop)
//! (b) mu + L_N phi - s1 phi                      = f(phi^n) - s1 phi^n          (interior)
//! (c) a2 psi - M2 L_G mu_gamma                   = a2 psi^n + (b2/tau) Psi^n
//! (d) mu_gamma + L_G psi - s2 psi - dn_h phi     = g(psi^n) - s2 psi^n
//!     dn_h phi = c h (mu_b - L_N phi + s1 psi - f(psi^n) - s1 psi^n)
//! ```
//!
//! with `a_i = (b_i/tau + 1)/tau`. Rows (a) and (c) are stored divided by
//! `a1` and `a2`, so every block of the residual is measured in the units of
//! its unknown. Row (d) is the variation of the discrete
//! energy with respect to a boundary value, so the scheme dissipates exactly
//! the energy reported by [`diagnose`] and conserves both trapezoid masses.
//!
//! The matrix depends only on the grid and the parameters, so it is built and
//! preconditioned once and reused for every step.

use crate::error::{Error, Result};
use crate::field::{BulkField, LoopField};
use crate::grid::{Grid, Node};
use crate::linalg::{bicgstab, CsrMatrix, Preconditioner, SolveStats, SolverConfig};
use crate::model::{bulk_mass, g_prime, f_prime, relaxation_energy, surface_mass, total_energy, ModelParams};

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub phi: BulkField,
    pub psi: LoopField,
    /// Discrete rate `(phi^n - phi^{n-1}) / tau`.
    pub phi_rate: BulkField,
    /// Discrete rate `(psi^n - psi^{n-1}) / tau`.
    pub psi_rate: LoopField,
    pub t: f64,
    pub step: u64,
    // previous full solution, used to warm-start the next solve
    warm: Option<Vec<f64>>,
}

impl State {
    /// Initial state with zero rates, which keeps both discrete masses fixed.
    pub fn new(grid: &Grid, phi: BulkField, psi: LoopField) -> Result<Self> {
        phi.check(grid)?;
        psi.check(grid)?;
        Ok(Self {
            phi_rate: BulkField::zeros(grid),
            psi_rate: LoopField::zeros(grid),
            phi,
            psi,
            t: 0.0,
            step: 0,
            warm: None,
        })
    }

    fn is_finite(&self) -> bool {
        [&*self.phi, &*self.psi, &*self.phi_rate, &*self.psi_rate]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Block offsets of the coupled unknown vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownLayout {
    pub phi: usize,
    pub mu: usize,
    pub mu_loop: usize,
    pub psi: usize,
    pub mu_gamma: usize,
    pub dim: usize,
}

impl UnknownLayout {
    pub fn new(grid: &Grid) -> Self {
        let phi = 0;
        let mu = phi + grid.n_int();
        let mu_loop = mu + grid.n_int();
        let psi = mu_loop + grid.n_loop();
        let mu_gamma = psi + grid.n_loop();
        Self {
            phi,
            mu,
            mu_loop,
            psi,
            mu_gamma,
            dim: mu_gamma + grid.n_loop(),
        }
    }

    /// Column of the `phi` value at a vertex (`psi` on the perimeter).
    pub fn phi_col(&self, node: Node) -> usize {
        match node {
            Node::Interior(i) => self.phi + i,
            Node::Loop(k) => self.psi + k,
        }
    }

    /// Column of the bulk chemical potential at a vertex.
    pub fn mu_col(&self, node: Node) -> usize {
        match node {
            Node::Interior(i) => self.mu + i,
            Node::Loop(k) => self.mu_loop + k,
        }
    }
}

/// The assembled, preconditioned time-independent system.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub layout: UnknownLayout,
    pub matrix: CsrMatrix,
    pub precond: Preconditioner,
    params: ModelParams,
    n: usize,
}

pub fn assemble_system(grid: &Grid, params: &ModelParams) -> Result<SparseSystem> {
    params.validate()?;
    let layout = UnknownLayout::new(grid);
    let matrix = assemble_matrix(grid, params, &layout);
    let precond = Preconditioner::ilu0_or_jacobi(&matrix);
    Ok(SparseSystem {
        layout,
        matrix,
        precond,
        params: *params,
        n: grid.n(),
    })
}

fn assemble_matrix(grid: &Grid, p: &ModelParams, lay: &UnknownLayout) -> CsrMatrix {
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let a1 = (p.beta1 / p.tau + 1.0) / p.tau;
    let a2 = (p.beta2 / p.tau + 1.0) / p.tau;
    let mut t = Vec::with_capacity(12 * lay.dim);

    // pushes scale * L_N at vertex v onto row r, with `col` picking the block
    let push_lap = |t: &mut Vec<(usize, usize, f64)>, r: usize, v: usize, scale: f64, col: &dyn Fn(Node) -> usize| {
        let c = grid.vertex_weight(v);
        let mut diag = 0.0;
        for &(u, w) in grid.vertex_edges(v) {
            t.push((r, col(grid.vertex_node(u)), scale * w / c));
            diag += w;
        }
        t.push((r, col(grid.vertex_node(v)), -scale * diag / c));
    };
    let mu_col = |nd: Node| lay.mu_col(nd);
    let phi_col = |nd: Node| lay.phi_col(nd);

    for idx in 0..grid.n_int() {
        let v = grid.node_vertex(Node::Interior(idx));
        // (a), divided through by a1
        let r = lay.phi + idx;
        t.push((r, lay.phi + idx, 1.0));
        push_lap(&mut t, r, v, -p.m1 * inv_h2 / a1, &mu_col);
        // (b)
        let r = lay.mu + idx;
        t.push((r, lay.mu + idx, 1.0));
        t.push((r, lay.phi + idx, -p.s1));
        push_lap(&mut t, r, v, inv_h2, &phi_col);
    }

    for k in 0..grid.n_loop() {
        let v = grid.node_vertex(Node::Loop(k));
        let ch = grid.vertex_weight(v) * h;
        // (a) on the perimeter
        let r = lay.mu_loop + k;
        t.push((r, lay.psi + k, 1.0));
        push_lap(&mut t, r, v, -p.m1 * inv_h2 / a1, &mu_col);
        let (prev, next) = (grid.prev(k), grid.next(k));
        // (c), divided through by a2
        let r = lay.psi + k;
        let d = p.m2 * inv_h2 / a2;
        t.push((r, lay.psi + k, 1.0));
        t.push((r, lay.mu_gamma + k, 2.0 * d));
        t.push((r, lay.mu_gamma + prev, -d));
        t.push((r, lay.mu_gamma + next, -d));
        // (d)
        let r = lay.mu_gamma + k;
        t.push((r, lay.mu_gamma + k, 1.0));
        t.push((r, lay.psi + k, -2.0 * inv_h2 - p.s2 - ch * p.s1));
        t.push((r, lay.psi + prev, inv_h2));
        t.push((r, lay.psi + next, inv_h2));
        t.push((r, lay.mu_loop + k, ch));
        push_lap(&mut t, r, v, ch * inv_h2, &phi_col);
    }
    CsrMatrix::from_triplets(lay.dim, &t)
}

/// Explicit right-hand side for the step from `state`.
pub fn assemble_rhs(state: &State, grid: &Grid, params: &ModelParams) -> Result<Vec<f64>> {
    state.phi.check(grid)?;
    state.psi.check(grid)?;
    state.phi_rate.check(grid)?;
    state.psi_rate.check(grid)?;
    let lay = UnknownLayout::new(grid);
    let p = params;
    let a1 = (p.beta1 / p.tau + 1.0) / p.tau;
    let a2 = (p.beta2 / p.tau + 1.0) / p.tau;
    let mut b = vec![0.0; lay.dim];
    for (i, (&phi, &rate)) in state.phi.iter().zip(state.phi_rate.iter()).enumerate() {
        b[lay.phi + i] = phi + p.beta1 / p.tau * rate / a1;
        b[lay.mu + i] = f_prime(phi, p.eps) - p.s1 * phi;
    }
    for (k, (&psi, &rate)) in state.psi.iter().zip(state.psi_rate.iter()).enumerate() {
        let ch = grid.vertex_weight(grid.node_vertex(Node::Loop(k))) * grid.h();
        b[lay.mu_loop + k] = psi + p.beta1 / p.tau * rate / a1;
        b[lay.psi + k] = psi + p.beta2 / p.tau * rate / a2;
        b[lay.mu_gamma + k] =
            g_prime(psi, p.delta) - p.s2 * psi + ch * (f_prime(psi, p.eps) - p.s1 * psi);
    }
    Ok(b)
}

/// Solves the coupled system for the step from `state` and returns the full
/// unknown vector in [`UnknownLayout`] order.
pub fn solve_step(
    state: &State,
    system: &SparseSystem,
    grid: &Grid,
    params: &ModelParams,
    solver: SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    if system.n != grid.n() || system.params != *params {
        return Err(Error::InvalidParameter {
            key: "system",
            reason: "assembled for a different grid or parameter set".into(),
        });
    }
    let lay = &system.layout;
    let b = assemble_rhs(state, grid, params)?;
    let x0 = match &state.warm {
        Some(w) if w.len() == lay.dim => w.clone(),
        _ => {
            let mut x = vec![0.0; lay.dim];
            x[lay.phi..lay.mu].copy_from_slice(&state.phi);
            x[lay.psi..lay.mu_gamma].copy_from_slice(&state.psi);
            x
        }
    };
    bicgstab(&system.matrix, &system.precond, &b, &x0, solver)
}

/// Advances `state` by one time step.
pub fn step(
    state: &State,
    system: &SparseSystem,
    grid: &Grid,
    params: &ModelParams,
    solver: SolverConfig,
) -> Result<(State, SolveStats)> {
    let (x, stats) = solve_step(state, system, grid, params, solver)?;
    let lay = &system.layout;
    let tau = params.tau;
    let phi = BulkField::from_vec(grid, x[lay.phi..lay.mu].to_vec())?;
    let psi = LoopField::from_vec(grid, x[lay.psi..lay.mu_gamma].to_vec())?;
    let phi_rate = BulkField::from_vec(
        grid,
        phi.iter().zip(state.phi.iter()).map(|(a, b)| (a - b) / tau).collect(),
    )?;
    let psi_rate = LoopField::from_vec(
        grid,
        psi.iter().zip(state.psi.iter()).map(|(a, b)| (a - b) / tau).collect(),
    )?;
    let next = State {
        phi,
        psi,
        phi_rate,
        psi_rate,
        step: state.step + 1,
        t: (state.step + 1) as f64 * tau,
        warm: Some(x),
    };
    if !next.is_finite() {
        return Err(Error::NonFinite { step: next.step });
    }
    Ok((next, stats))
}

/// One row of the diagnostics ledger.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagRecord {
    pub step: u64,
    pub time: f64,
    pub e_bulk: f64,
    pub e_surf: f64,
    pub e_total: f64,
    pub e_modified: f64,
    pub mass_bulk: f64,
    pub mass_surf: f64,
    pub solver_iters: usize,
    pub solver_residual: f64,
}

pub fn diagnose(
    state: &State,
    grid: &Grid,
    params: &ModelParams,
    stats: &SolveStats,
    poisson_tol: f64,
) -> Result<DiagRecord> {
    let e = total_energy(&state.phi, &state.psi, grid, params)?;
    let extra = relaxation_energy(state, grid, params, poisson_tol)?;
    Ok(DiagRecord {
        step: state.step,
        time: state.t,
        e_bulk: e.bulk,
        e_surf: e.surface,
        e_total: e.total,
        e_modified: e.total + extra,
        mass_bulk: bulk_mass(&state.phi, &state.psi, grid)?,
        mass_surf: surface_mass(&state.psi, grid)?,
        solver_iters: stats.iterations,
        solver_residual: stats.residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub solver: SolverConfig,
    /// Relative residual for the inverse-Laplacian diagnostics.
    pub poisson_tol: f64,
    /// Record diagnostics every `cadence` steps (plus first and last).
    pub cadence: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            poisson_tol: 1e-12,
            cadence: 1,
        }
    }
}

/// Observer for [`run`]. Both callbacks default to doing nothing.
pub trait RunHook {
    /// Called with the initial state and after every step.
    fn on_state(&mut self, _state: &State) -> Result<()> {
        Ok(())
    }

    fn on_record(&mut self, _record: &DiagRecord) -> Result<()> {
        Ok(())
    }
}

pub struct NoHook;

impl RunHook for NoHook {}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub state: State,
    pub records: Vec<DiagRecord>,
}

/// Number of steps needed to reach `t_end`, tolerating roundoff in `t_end / tau`.
pub fn step_count(t_end: f64, tau: f64) -> u64 {
    let raw = t_end / tau;
    let nearest = raw.round();
    if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        raw.ceil() as u64
    }
}

pub fn run(
    initial: State,
    grid: &Grid,
    params: &ModelParams,
    t_end: f64,
    options: &RunOptions,
    hook: &mut dyn RunHook,
) -> Result<RunOutput> {
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParameter {
            key: "t_end",
            reason: format!("must be non-negative, got {t_end}"),
        });
    }
    if options.cadence == 0 {
        return Err(Error::InvalidParameter {
            key: "cadence",
            reason: "must be at least 1".into(),
        });
    }
    let system = assemble_system(grid, params)?;
    run_with_system(initial, &system, grid, params, step_count(t_end, params.tau), options, hook)
}

/// Like [`run`], but with a prebuilt system and an explicit step count.
pub fn run_with_system(
    initial: State,
    system: &SparseSystem,
    grid: &Grid,
    params: &ModelParams,
    steps: u64,
    options: &RunOptions,
    hook: &mut dyn RunHook,
) -> Result<RunOutput> {
    let mut state = initial;
    let mut records = Vec::new();
    let first = diagnose(&state, grid, params, &SolveStats::default(), options.poisson_tol)?;
    hook.on_state(&state)?;
    hook.on_record(&first)?;
    records.push(first);
    for s in 1..=steps {
        let (next, stats) = step(&state, system, grid, params, options.solver)?;
        state = next;
        hook.on_state(&state)?;
        if s % options.cadence == 0 || s == steps {
            let rec = diagnose(&state, grid, params, &stats, options.poisson_tol)?;
            hook.on_record(&rec)?;
            records.push(rec);
        }
    }
    Ok(RunOutput { state, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn setup(n: usize) -> (Grid, ModelParams) {
        let g = Grid::new(n).unwrap();
        let p = ModelParams::defaults_for(&g);
        (g, p)
    }

    #[test]
    fn layout_dimensions() {
        let (g, _) = setup(4);
        let lay = UnknownLayout::new(&g);
        assert_eq!(lay.dim, 66);
        assert_eq!((lay.mu, lay.mu_loop, lay.psi, lay.mu_gamma), (9, 18, 34, 50));
        let (g, _) = setup(50);
        assert_eq!(UnknownLayout::new(&g).dim, 2 * 49 * 49 + 12 * 50);
    }

    #[test]
    fn init_state_zero_rates() {
        let (g, _) = setup(10);
        let s = State::new(&g, BulkField::constant(&g, 0.2), LoopField::constant(&g, -0.4)).unwrap();
        assert_eq!(s.phi_rate.iter().sum::<f64>(), 0.0);
        assert_eq!(s.psi_rate.iter().sum::<f64>(), 0.0);
        assert_eq!((s.t, s.step), (0.0, 0));
        let wrong = Grid::new(5).unwrap();
        assert!(State::new(&g, BulkField::zeros(&wrong), LoopField::zeros(&g)).is_err());
    }

    #[test]
    fn loop_rows_reproduce_constant() {
        let (g, p) = setup(6);
        let p = p.with_beta(0.3);
        let sys = assemble_system(&g, &p).unwrap();
        let lay = &sys.layout;
        let c = 0.8;
        let mut x = vec![0.0; lay.dim];
        x[lay.phi..lay.mu].fill(c);
        x[lay.psi..lay.mu_gamma].fill(c);
        let y = sys.matrix.matvec(&x).unwrap();
        for k in 0..g.n_loop() {
            assert_abs_diff_eq!(y[lay.psi + k], c, epsilon = 1e-12);
        }
    }

    #[test]
    fn rhs_examples() {
        let (g, p) = setup(5);
        let s = State::new(&g, BulkField::constant(&g, 1.0), LoopField::constant(&g, 1.0)).unwrap();
        let b = assemble_rhs(&s, &g, &p).unwrap();
        let lay = UnknownLayout::new(&g);
        assert!(b[lay.mu..lay.mu_loop].iter().all(|&v| v == -p.s1));
        assert!(b[lay.mu_loop..lay.psi].iter().all(|&v| v == 1.0));
        for k in 0..g.n_loop() {
            let c = g.vertex_weight(g.node_vertex(Node::Loop(k)));
            assert_abs_diff_eq!(b[lay.mu_gamma + k], -p.s2 - c * g.h() * p.s1, epsilon = 1e-9);
        }

        let mut s = State::new(&g, BulkField::constant(&g, 0.3), LoopField::zeros(&g)).unwrap();
        s.phi_rate = BulkField::constant(&g, 17.0);
        let b = assemble_rhs(&s, &g, &p).unwrap();
        // no relaxation: the rate does not enter
        assert!(b[lay.phi..lay.mu].iter().all(|&v| v == 0.3));
        let p = p.with_beta(0.5);
        let b = assemble_rhs(&s, &g, &p).unwrap();
        let a1 = (0.5 / p.tau + 1.0) / p.tau;
        assert!(b[lay.phi..lay.mu].iter().all(|&v| (v - 0.3 - 0.5 / p.tau * 17.0 / a1).abs() < 1e-12));
    }

    #[test]
    fn constant_wells_are_fixed_points() {
        let (g, p) = setup(8);
        for c in [1.0, 0.0, -1.0] {
            let sys = assemble_system(&g, &p).unwrap();
            let s0 = State::new(&g, BulkField::constant(&g, c), LoopField::constant(&g, c)).unwrap();
            let (s1, _) = step(&s0, &sys, &g, &p, SolverConfig::default()).unwrap();
            for (a, b) in s1.phi.iter().zip(s0.phi.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            for (a, b) in s1.psi.iter().zip(s0.psi.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            assert_eq!((s1.step, s1.t), (1, p.tau));
        }
    }

    #[test]
    fn energy_decays_and_masses_hold() {
        let (g, p) = setup(12);
        for beta in [0.0, 0.5] {
            let p = p.with_beta(beta);
            let sys = assemble_system(&g, &p).unwrap();
            let f = |x: f64, y: f64| 0.4 * (7.0 * x).sin() * (5.0 * y + 1.0).cos();
            let mut s = State::new(&g, BulkField::from_fn(&g, f), LoopField::from_fn(&g, f)).unwrap();
            let d0 = diagnose(&s, &g, &p, &SolveStats::default(), 1e-13).unwrap();
            let mut prev = d0.e_modified;
            for _ in 0..20 {
                s = step(&s, &sys, &g, &p, SolverConfig::default()).unwrap().0;
                let d = diagnose(&s, &g, &p, &SolveStats::default(), 1e-13).unwrap();
                assert!(d.e_modified <= prev + 1e-9 * prev.abs(), "beta {beta}: {} > {prev}", d.e_modified);
                prev = d.e_modified;
                assert_abs_diff_eq!(d.mass_bulk, d0.mass_bulk, epsilon = 1e-9);
                assert_abs_diff_eq!(d.mass_surf, d0.mass_surf, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn step_rejects_foreign_system() {
        let (g, p) = setup(6);
        let sys = assemble_system(&g, &p).unwrap();
        let s = State::new(&g, BulkField::zeros(&g), LoopField::zeros(&g)).unwrap();
        assert!(step(&s, &sys, &g, &p.with_beta(1.0), SolverConfig::default()).is_err());
    }

    #[test]
    fn rates_match_difference_quotients() {
        let (g, p) = setup(8);
        let sys = assemble_system(&g, &p).unwrap();
        let f = |x: f64, y: f64| 0.5 * (3.0 * x).sin() * (2.0 * y).cos();
        let s0 = State::new(&g, BulkField::from_fn(&g, f), LoopField::from_fn(&g, f)).unwrap();
        let (s1, _) = step(&s0, &sys, &g, &p, SolverConfig::default()).unwrap();
        for i in 0..g.n_int() {
            assert_eq!(s1.phi_rate[i], (s1.phi[i] - s0.phi[i]) / p.tau);
        }
        for k in 0..g.n_loop() {
            assert_eq!(s1.psi_rate[k], (s1.psi[k] - s0.psi[k]) / p.tau);
        }
    }

    #[test]
    fn run_cadence_and_endpoints() {
        let (g, p) = setup(6);
        let s0 = State::new(&g, BulkField::zeros(&g), LoopField::constant(&g, 1.0)).unwrap();
        let out = run(s0.clone(), &g, &p, 0.0, &RunOptions::default(), &mut NoHook).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.state, s0);

        let out = run(s0.clone(), &g, &p, 10.0 * p.tau, &RunOptions::default(), &mut NoHook).unwrap();
        assert_eq!(out.records.len(), 11);
        assert_eq!(out.state.step, 10);

        let opts = RunOptions { cadence: 4, ..RunOptions::default() };
        let out = run(s0, &g, &p, 10.0 * p.tau, &opts, &mut NoHook).unwrap();
        let steps: Vec<u64> = out.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 4, 8, 10]);
    }

    #[test]
    fn step_count_rounding() {
        assert_eq!(step_count(0.05, 1e-4), 500);
        assert_eq!(step_count(0.1, 2.5e-5), 4000);
        assert_eq!(step_count(0.0, 1e-4), 0);
        assert_eq!(step_count(1.05e-4, 1e-4), 2);
    }
}
