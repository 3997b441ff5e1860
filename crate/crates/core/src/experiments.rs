//! Initial data for the four reference cases, the temporal convergence study
//! and the relaxation-time sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{full_field, BulkField, LoopField};
use crate::grid::Grid;
use crate::model::ModelParams;
use crate::scheme::{run, step_count, DiagRecord, RunHook, RunOptions, State};

/// Which initial datum to start from. Only case 2 is random and carries a seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CaseSpec {
    id: u8,
    seed: Option<u64>,
}

impl CaseSpec {
    pub fn new(id: u8, seed: Option<u64>) -> Result<Self> {
        if !(1..=4).contains(&id) {
            return Err(Error::InvalidCase(format!("unknown case {id}, expected 1 to 4")));
        }
        match (id, seed) {
            (2, None) => Err(Error::InvalidCase("case 2 needs a seed".into())),
            (2, Some(_)) | (_, None) => Ok(Self { id, seed }),
            (_, Some(_)) => Err(Error::InvalidCase(format!("case {id} takes no seed"))),
        }
    }

    /// Builds the spec for `id`, attaching `seed` only where it is used.
    pub fn with_seed(id: u8, seed: u64) -> Result<Self> {
        Self::new(id, (id == 2).then_some(seed))
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

const IN_BOX_SLACK: f64 = 1e-12;

fn in_droplet(x: f64, y: f64) -> bool {
    (0.3 - IN_BOX_SLACK..=0.7 + IN_BOX_SLACK).contains(&x) && (-IN_BOX_SLACK..=0.5 + IN_BOX_SLACK).contains(&y)
}

/// Samples the initial `(phi, psi)` of a case on `grid`.
///
/// Case 1 is 0 inside and 1 on the boundary. Case 2 draws uniform values in
/// [-0.1, 0.1] inside and [0.4, 0.6] on the boundary (interior nodes first).
/// Case 3 samples `sin(2 pi x) cos(2 pi y)`. Case 4 is the indicator of
/// `[0.3, 0.7] x [0, 0.5]`.
pub fn init_case(case: &CaseSpec, grid: &Grid) -> Result<(BulkField, LoopField)> {
    use std::f64::consts::PI;
    Ok(match case.id {
        1 => (BulkField::zeros(grid), LoopField::constant(grid, 1.0)),
        2 => {
            let seed = case.seed.ok_or_else(|| Error::InvalidCase("case 2 needs a seed".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = (0..grid.n_int()).map(|_| rng.random_range(-0.1..=0.1)).collect();
            let psi = (0..grid.n_loop()).map(|_| rng.random_range(0.4..=0.6)).collect();
            (BulkField::from_vec(grid, phi)?, LoopField::from_vec(grid, psi)?)
        }
        3 => {
            let f = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).cos();
            (BulkField::from_fn(grid, f), LoopField::from_fn(grid, f))
        }
        4 => {
            let f = |x: f64, y: f64| if in_droplet(x, y) { 1.0 } else { 0.0 };
            (BulkField::from_fn(grid, f), LoopField::from_fn(grid, f))
        }
        id => return Err(Error::InvalidCase(format!("unknown case {id}"))),
    })
}

/// Initial state of a case, with zero rates.
pub fn init_state(case: &CaseSpec, grid: &Grid) -> Result<State> {
    let (phi, psi) = init_case(case, grid)?;
    State::new(grid, phi, psi)
}

/// Least-squares slope of `log(error)` against `log(tau)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints(points.len()));
    }
    for &(tau, error) in points {
        if !(tau > 0.0 && error > 0.0) {
            return Err(Error::NonPositive { tau, error });
        }
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            key: "tau",
            reason: "fit needs at least two distinct step sizes".into(),
        });
    }
    Ok(sxy / sxx)
}

/// Discrete `L^2(Omega)` norm with trapezoid weights, perimeter values from `psi`.
pub fn l2_bulk(phi: &BulkField, psi: &LoopField, grid: &Grid) -> Result<f64> {
    let full = full_field(phi, psi, grid)?;
    let h2 = grid.h() * grid.h();
    Ok((h2 * full
        .iter()
        .enumerate()
        .map(|(v, x)| grid.vertex_weight(v) * x * x)
        .sum::<f64>())
    .sqrt())
}

/// Discrete `L^2(Gamma)` norm.
pub fn l2_loop(psi: &LoopField, grid: &Grid) -> Result<f64> {
    psi.check(grid)?;
    Ok((grid.h() * psi.iter().map(|x| x * x).sum::<f64>()).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSetup {
    pub n: usize,
    pub t_end: f64,
    pub taus: Vec<f64>,
    pub tau_ref: f64,
    pub case: CaseSpec,
    /// Relaxation time applied to both bulk and surface.
    pub beta: f64,
    pub options: RunOptions,
}

impl ConvergenceSetup {
    /// Desk-scale study: n = 32, T = 0.1, four step sizes against 2.5e-5.
    pub fn desk() -> Self {
        Self {
            n: 32,
            t_end: 0.1,
            taus: vec![4e-3, 2e-3, 1e-3, 5e-4],
            tau_ref: 2.5e-5,
            case: CaseSpec { id: 1, seed: None },
            beta: 0.0,
            options: RunOptions::default(),
        }
    }

    /// The full study at h = 1/50, T = 1 with a 1e-6 reference. Long.
    pub fn full() -> Self {
        Self {
            n: 50,
            t_end: 1.0,
            taus: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4, 3.125e-4],
            tau_ref: 1e-6,
            ..Self::desk()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub tau: f64,
    pub steps: u64,
    pub err_phi: f64,
    pub err_psi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub slope_phi: f64,
    pub slope_psi: f64,
}

impl ConvergenceTable {
    /// Errors strictly decrease as tau decreases.
    pub fn is_monotone(&self) -> bool {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| b.tau.total_cmp(&a.tau));
        rows.windows(2)
            .all(|w| w[1].err_phi < w[0].err_phi && w[1].err_psi < w[0].err_psi)
    }
}

fn final_state(setup: &ConvergenceSetup, grid: &Grid, tau: f64) -> Result<State> {
    let params = ModelParams::defaults_for(grid).with_beta(setup.beta).with_tau(tau);
    let init = init_state(&setup.case, grid)?;
    // only the endpoint matters here
    let options = RunOptions {
        cadence: u64::MAX,
        ..setup.options
    };
    Ok(run(init, grid, &params, setup.t_end, &options, &mut crate::scheme::NoHook)?.state)
}

/// Runs the reference and every step size (concurrently) and measures the
/// `L^2` distance to the reference at `t_end`.
pub fn convergence_study(setup: &ConvergenceSetup) -> Result<ConvergenceTable> {
    let min_tau = setup.taus.iter().copied().fold(f64::INFINITY, f64::min);
    if !(setup.tau_ref > 0.0 && setup.tau_ref < min_tau) {
        return Err(Error::InvalidParameter {
            key: "conv_tau_ref",
            reason: format!("must be positive and below every step size, got {}", setup.tau_ref),
        });
    }
    let grid = Grid::new(setup.n)?;
    let mut taus = vec![setup.tau_ref];
    taus.extend(&setup.taus);
    let finals: Vec<State> = taus
        .par_iter()
        .map(|&tau| final_state(setup, &grid, tau))
        .collect::<Result<_>>()?;
    let reference = &finals[0];
    let mut rows = Vec::with_capacity(setup.taus.len());
    for (&tau, s) in taus.iter().zip(&finals).skip(1) {
        let dphi = BulkField::from_vec(&grid, s.phi.iter().zip(reference.phi.iter()).map(|(a, b)| a - b).collect())?;
        let dpsi = LoopField::from_vec(&grid, s.psi.iter().zip(reference.psi.iter()).map(|(a, b)| a - b).collect())?;
        rows.push(ConvergenceRow {
            tau,
            steps: step_count(setup.t_end, tau),
            err_phi: l2_bulk(&dphi, &dpsi, &grid)?,
            err_psi: l2_loop(&dpsi, &grid)?,
        });
    }
    let slope_phi = fit_slope(&rows.iter().map(|r| (r.tau, r.err_phi)).collect::<Vec<_>>())?;
    let slope_psi = fit_slope(&rows.iter().map(|r| (r.tau, r.err_psi)).collect::<Vec<_>>())?;
    Ok(ConvergenceTable {
        rows,
        slope_phi,
        slope_psi,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSetup {
    pub n: usize,
    pub case: CaseSpec,
    pub betas: Vec<f64>,
    pub probes: Vec<f64>,
    pub tau: f64,
    pub options: RunOptions,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    pub probe: f64,
    pub record: DiagRecord,
}

/// Records the diagnostics at a fixed set of steps.
struct ProbeHook {
    steps: Vec<u64>,
    hits: Vec<DiagRecord>,
}

impl RunHook for ProbeHook {
    fn on_record(&mut self, record: &DiagRecord) -> Result<()> {
        if self.steps.contains(&record.step) {
            self.hits.push(*record);
        }
        Ok(())
    }
}

/// One run per relaxation time from shared initial data, reporting the
/// diagnostics at each probe time. Rows are ordered by beta (as given) then probe.
pub fn beta_sweep(setup: &SweepSetup) -> Result<Vec<SweepRow>> {
    if setup.probes.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::InvalidParameter {
            key: "sweep_probes",
            reason: "probe times must be non-negative".into(),
        });
    }
    let grid = Grid::new(setup.n)?;
    let init = init_state(&setup.case, &grid)?;
    let probe_steps: Vec<u64> = setup.probes.iter().map(|&t| step_count(t, setup.tau)).collect();
    let t_end = setup.probes.iter().copied().fold(0.0, f64::max);
    let per_beta: Vec<Vec<SweepRow>> = setup
        .betas
        .par_iter()
        .map(|&beta| {
            let params = ModelParams::defaults_for(&grid).with_beta(beta).with_tau(setup.tau);
            let mut hook = ProbeHook {
                steps: probe_steps.clone(),
                hits: Vec::new(),
            };
            run(init.clone(), &grid, &params, t_end, &setup.options, &mut hook)?;
            setup
                .probes
                .iter()
                .zip(&probe_steps)
                .map(|(&probe, s)| {
                    let record = *hook.hits.iter().find(|r| r.step == *s).ok_or_else(|| Error::InvalidParameter {
                        key: "cadence",
                        reason: format!("no diagnostics recorded at step {s}"),
                    })?;
                    Ok(SweepRow { beta, probe, record })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_beta.into_iter().flatten().collect())
}
