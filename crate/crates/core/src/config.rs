//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, unknown and repeated keys are
//! rejected. Unset widths default to `2h`, unset stabilisers to
//! `2 / width^2`. [`RunConfig::echo`] writes every resolved value back out in
//! a form that parses to the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::experiments::{CaseSpec, ConvergenceSetup, SweepSetup};
use crate::grid::Grid;
use crate::linalg::SolverConfig;
use crate::model::ModelParams;
use crate::scheme::RunOptions;

pub const KEYS: &[&str] = &[
    "n",
    "tau",
    "t_end",
    "m1",
    "m2",
    "beta1",
    "beta2",
    "eps",
    "delta",
    "s1",
    "s2",
    "case",
    "seed",
    "solver_tol",
    "solver_max_iter",
    "poisson_tol",
    "cadence",
    "snapshot_times",
    "output_dir",
    "sweep_betas",
    "sweep_probes",
    "conv_n",
    "conv_t_end",
    "conv_taus",
    "conv_tau_ref",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub t_end: f64,
    pub params: ModelParams,
    pub case: u8,
    pub seed: u64,
    pub solver: SolverConfig,
    pub poisson_tol: f64,
    pub cadence: u64,
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
    pub sweep_betas: Vec<f64>,
    pub sweep_probes: Vec<f64>,
    pub conv_n: usize,
    pub conv_t_end: f64,
    pub conv_taus: Vec<f64>,
    pub conv_tau_ref: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

// raw value plus the line it came from (0 for overrides)
type Raw = BTreeMap<&'static str, (String, usize)>;

fn lookup_key(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|k| *k == key)
}

fn split_pair(line: &str) -> std::result::Result<Option<(&str, &str)>, String> {
    let body = line.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let (k, v) = body
        .split_once('=')
        .ok_or_else(|| format!("expected `key = value`, got `{body}`"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err("missing key".into());
    }
    if v.is_empty() {
        return Err(format!("missing value for `{k}`"));
    }
    Ok(Some((k, v)))
}

fn read_raw(text: &str) -> Result<Raw> {
    let mut raw = Raw::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let Some((k, v)) = split_pair(line).map_err(parse_err)? else {
            continue;
        };
        let key = lookup_key(k).ok_or_else(|| parse_err(format!("unknown key `{k}`")))?;
        if let Some((_, first)) = raw.insert(key, (v.to_string(), line_no)) {
            return Err(parse_err(format!("`{key}` already set on line {first}")));
        }
    }
    Ok(raw)
}

/// Parses a configuration file with no overrides.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_with_overrides::<&str>(text, &[])
}

/// Parses `text`, then applies `key=value` overrides in order (later wins).
pub fn parse_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<RunConfig> {
    let mut raw = read_raw(text)?;
    for arg in overrides {
        let arg = arg.as_ref();
        let bad = |message: String| Error::Override {
            arg: arg.to_string(),
            message,
        };
        let (k, v) = split_pair(arg).map_err(bad)?.ok_or_else(|| bad("empty override".into()))?;
        let key = lookup_key(k).ok_or_else(|| bad(format!("unknown key `{k}`")))?;
        raw.insert(key, (v.to_string(), 0));
    }
    resolve(&raw)
}

struct Fields<'a>(&'a Raw);

impl Fields<'_> {
    fn get<T: std::str::FromStr>(&self, key: &'static str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default),
            Some((v, line)) => v.parse().map_err(|e| value_error(key, *line, v, e)),
        }
    }

    fn opt_f64(&self, key: &'static str) -> Result<Option<f64>> {
        self.0.get(key).map(|_| self.get(key, 0.0)).transpose()
    }

    fn list(&self, key: &'static str, default: &[f64]) -> Result<Vec<f64>> {
        match self.0.get(key) {
            None => Ok(default.to_vec()),
            Some((v, _)) if v == "none" => Ok(Vec::new()),
            Some((v, line)) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| value_error(key, *line, s, e)))
                .collect(),
        }
    }
}

fn value_error(key: &str, line: usize, v: &str, e: impl std::fmt::Display) -> Error {
    let message = format!("`{key}`: cannot read `{v}`: {e}");
    if line == 0 {
        Error::Override {
            arg: format!("{key}={v}"),
            message,
        }
    } else {
        Error::Parse { line, message }
    }
}

fn constraint(key: &'static str, ok: bool, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            key,
            reason: reason.into(),
        })
    }
}

fn all_finite(v: &[f64], nonneg: bool) -> bool {
    v.iter().all(|x| x.is_finite() && if nonneg { *x >= 0.0 } else { *x > 0.0 })
}

fn resolve(raw: &Raw) -> Result<RunConfig> {
    let f = Fields(raw);
    let n: usize = f.get("n", 100)?;
    constraint("n", n >= 4, "needs at least 4 subdivisions")?;
    let h = 1.0 / n as f64;
    let eps = f.opt_f64("eps")?.unwrap_or(2.0 * h);
    let delta = f.opt_f64("delta")?.unwrap_or(2.0 * h);
    constraint("eps", eps.is_finite() && eps > 0.0, "must be positive")?;
    constraint("delta", delta.is_finite() && delta > 0.0, "must be positive")?;
    let params = ModelParams {
        m1: f.get("m1", 1e-3)?,
        m2: f.get("m2", 1e-3)?,
        beta1: f.get("beta1", 0.0)?,
        beta2: f.get("beta2", 0.0)?,
        eps,
        delta,
        s1: f.opt_f64("s1")?.unwrap_or(2.0 / (eps * eps)),
        s2: f.opt_f64("s2")?.unwrap_or(2.0 / (delta * delta)),
        tau: f.get("tau", 1e-4)?,
    };
    params.validate()?;

    let cfg = RunConfig {
        n,
        t_end: f.get("t_end", 0.2)?,
        params,
        case: f.get("case", 1)?,
        seed: f.get("seed", 42)?,
        solver: SolverConfig {
            tol: f.get("solver_tol", 1e-10)?,
            max_iter: f.get("solver_max_iter", 10_000)?,
        },
        poisson_tol: f.get("poisson_tol", 1e-12)?,
        cadence: f.get("cadence", 1)?,
        snapshot_times: f.list("snapshot_times", &[])?,
        output_dir: PathBuf::from(f.get("output_dir", String::from("out"))?),
        sweep_betas: f.list("sweep_betas", &[1.0, 0.1, 0.0])?,
        sweep_probes: f.list("sweep_probes", &[0.05])?,
        conv_n: f.get("conv_n", 32)?,
        conv_t_end: f.get("conv_t_end", 0.1)?,
        conv_taus: f.list("conv_taus", &[4e-3, 2e-3, 1e-3, 5e-4])?,
        conv_tau_ref: f.get("conv_tau_ref", 2.5e-5)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        constraint("t_end", self.t_end.is_finite() && self.t_end >= 0.0, "must be non-negative")?;
        constraint("case", (1..=4).contains(&self.case), "must be 1, 2, 3 or 4")?;
        constraint("solver_tol", self.solver.tol > 0.0 && self.solver.tol.is_finite(), "must be positive")?;
        constraint("solver_max_iter", self.solver.max_iter >= 1, "must be at least 1")?;
        constraint("poisson_tol", self.poisson_tol > 0.0 && self.poisson_tol.is_finite(), "must be positive")?;
        constraint("cadence", self.cadence >= 1, "must be at least 1")?;
        constraint("snapshot_times", all_finite(&self.snapshot_times, true), "times must be non-negative")?;
        constraint("output_dir", !self.output_dir.as_os_str().is_empty(), "must not be empty")?;
        constraint(
            "sweep_betas",
            !self.sweep_betas.is_empty() && all_finite(&self.sweep_betas, true),
            "needs at least one non-negative value",
        )?;
        constraint(
            "sweep_probes",
            !self.sweep_probes.is_empty() && all_finite(&self.sweep_probes, true),
            "needs at least one non-negative time",
        )?;
        constraint("conv_n", self.conv_n >= 4, "needs at least 4 subdivisions")?;
        constraint("conv_t_end", self.conv_t_end > 0.0 && self.conv_t_end.is_finite(), "must be positive")?;
        constraint(
            "conv_taus",
            self.conv_taus.len() >= 2 && all_finite(&self.conv_taus, false),
            "needs at least two positive step sizes",
        )?;
        let min_tau = self.conv_taus.iter().copied().fold(f64::INFINITY, f64::min);
        constraint(
            "conv_tau_ref",
            self.conv_tau_ref > 0.0 && self.conv_tau_ref < min_tau,
            "must be positive and below every conv_taus entry",
        )?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n)
    }

    pub fn case_spec(&self) -> Result<CaseSpec> {
        CaseSpec::with_seed(self.case, self.seed)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            solver: self.solver,
            poisson_tol: self.poisson_tol,
            cadence: self.cadence,
        }
    }

    /// Relaxation time shared by bulk and surface when both agree.
    fn beta(&self) -> f64 {
        self.params.beta1
    }

    pub fn convergence_setup(&self) -> Result<ConvergenceSetup> {
        Ok(ConvergenceSetup {
            n: self.conv_n,
            t_end: self.conv_t_end,
            taus: self.conv_taus.clone(),
            tau_ref: self.conv_tau_ref,
            case: self.case_spec()?,
            beta: self.beta(),
            options: self.run_options(),
        })
    }

    pub fn sweep_setup(&self) -> Result<SweepSetup> {
        Ok(SweepSetup {
            n: self.n,
            case: self.case_spec()?,
            betas: self.sweep_betas.clone(),
            probes: self.sweep_probes.clone(),
            tau: self.params.tau,
            options: self.run_options(),
        })
    }

    /// Every resolved value as `key = value` lines, in [`KEYS`] order.
    pub fn echo(&self) -> String {
        let list = |v: &[f64]| {
            if v.is_empty() {
                "none".to_string()
            } else {
                v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
            }
        };
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "# effective configuration, h = {:?}", 1.0 / self.n as f64);
        let values = [
            self.n.to_string(),
            format!("{:?}", p.tau),
            format!("{:?}", self.t_end),
            format!("{:?}", p.m1),
            format!("{:?}", p.m2),
            format!("{:?}", p.beta1),
            format!("{:?}", p.beta2),
            format!("{:?}", p.eps),
            format!("{:?}", p.delta),
            format!("{:?}", p.s1),
            format!("{:?}", p.s2),
            self.case.to_string(),
            self.seed.to_string(),
            format!("{:?}", self.solver.tol),
            self.solver.max_iter.to_string(),
            format!("{:?}", self.poisson_tol),
            self.cadence.to_string(),
            list(&self.snapshot_times),
            self.output_dir.display().to_string(),
            list(&self.sweep_betas),
            list(&self.sweep_probes),
            self.conv_n.to_string(),
            format!("{:?}", self.conv_t_end),
            list(&self.conv_taus),
            format!("{:?}", self.conv_tau_ref),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
