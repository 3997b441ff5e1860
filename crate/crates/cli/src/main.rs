use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hypch::config::{parse_with_overrides, RunConfig};
use hypch::experiments::{beta_sweep, convergence_study, init_state, CaseSpec, ConvergenceSetup};
use hypch::output::{format_convergence_table, format_sweep_table, write_diag_csv, write_vtk_snapshot};
use hypch::scheme::{run, step_count, RunHook};
use hypch::{Grid, State};

/// Hyperbolic Cahn-Hilliard simulator with dynamic boundary conditions.
#[derive(Parser)]
#[command(name = "hypch", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and write diagnostics and snapshots.
    Run(Inputs),
    /// Temporal convergence study against a fine-step reference.
    Convergence {
        #[command(flatten)]
        inputs: Inputs,
        /// Use h = 1/50, T = 1 and a 1e-6 reference instead of the desk-scale setup.
        #[arg(long)]
        full: bool,
    },
    /// Compare relaxation times on one case.
    BetaSweep(Inputs),
    /// Run all four cases with the configured parameters.
    Cases(Inputs),
}

#[derive(Args)]
struct Inputs {
    /// Optional config file followed by `key=value` overrides.
    #[arg(value_name = "CONFIG|KEY=VALUE")]
    args: Vec<String>,
}

impl Inputs {
    fn load(&self) -> Result<RunConfig> {
        let (overrides, paths): (Vec<&String>, Vec<&String>) = self.args.iter().partition(|a| a.contains('='));
        let text = match paths.as_slice() {
            [] => String::new(),
            [p] => fs::read_to_string(p).with_context(|| format!("reading config {p}"))?,
            _ => bail!("expected at most one config file, got {}", paths.len()),
        };
        Ok(parse_with_overrides(&text, &overrides)?)
    }
}

struct Snapshots<'a> {
    grid: &'a Grid,
    dir: PathBuf,
    steps: Vec<u64>,
}

impl RunHook for Snapshots<'_> {
    fn on_state(&mut self, state: &State) -> hypch::Result<()> {
        if self.steps.contains(&state.step) {
            let path = self.dir.join(format!("snap_{:07}.vtk", state.step));
            write_vtk_snapshot(state, self.grid, &path)?;
        }
        Ok(())
    }
}

fn prepare_dir(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.txt"), cfg.echo())?;
    Ok(())
}

fn run_one(cfg: &RunConfig, dir: &Path) -> Result<()> {
    prepare_dir(dir, cfg)?;
    let grid = cfg.grid()?;
    let init = init_state(&cfg.case_spec()?, &grid)?;
    let mut hook = Snapshots {
        grid: &grid,
        dir: dir.to_path_buf(),
        steps: cfg.snapshot_times.iter().map(|&t| step_count(t, cfg.params.tau)).collect(),
    };
    let out = run(init, &grid, &cfg.params, cfg.t_end, &cfg.run_options(), &mut hook)?;
    write_diag_csv(&out.records, &dir.join("diag.csv"))?;
    let (first, last) = (out.records[0], out.records[out.records.len() - 1]);
    println!(
        "case {} n {} steps {}: E_modified {:.6e} -> {:.6e}, bulk mass drift {:.3e}, surface mass drift {:.3e}",
        cfg.case,
        cfg.n,
        last.step,
        first.e_modified,
        last.e_modified,
        (last.mass_bulk - first.mass_bulk).abs(),
        (last.mass_surf - first.mass_surf).abs()
    );
    Ok(())
}

fn convergence(cfg: &RunConfig, full: bool) -> Result<()> {
    let mut setup = cfg.convergence_setup()?;
    if full {
        setup = ConvergenceSetup {
            case: setup.case,
            beta: setup.beta,
            options: setup.options,
            ..ConvergenceSetup::full()
        };
    }
    let table = convergence_study(&setup)?;
    let text = format_convergence_table(&table);
    prepare_dir(&cfg.output_dir, cfg)?;
    fs::write(cfg.output_dir.join("convergence.csv"), &text)?;
    print!("{text}");
    println!("slope_phi {:.4}", table.slope_phi);
    println!("slope_psi {:.4}", table.slope_psi);
    println!("monotone {}", table.is_monotone());
    Ok(())
}

fn sweep(cfg: &RunConfig) -> Result<()> {
    let rows = beta_sweep(&cfg.sweep_setup()?)?;
    let text = format_sweep_table(&rows);
    prepare_dir(&cfg.output_dir, cfg)?;
    fs::write(cfg.output_dir.join("beta_sweep.csv"), &text)?;
    print!("{text}");
    Ok(())
}

fn cases(cfg: &RunConfig) -> Result<()> {
    for id in 1..=4u8 {
        // validates the id/seed pairing before the run
        CaseSpec::with_seed(id, cfg.seed)?;
        let one = RunConfig { case: id, ..cfg.clone() };
        run_one(&one, &cfg.output_dir.join(format!("case{id}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(i) => i.load().and_then(|c| run_one(&c, &c.output_dir)),
        Cmd::Convergence { inputs, full } => inputs.load().and_then(|c| convergence(&c, *full)),
        Cmd::BetaSweep(i) => i.load().and_then(|c| sweep(&c)),
        Cmd::Cases(i) => i.load().and_then(|c| cases(&c)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
