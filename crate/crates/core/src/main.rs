use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rsma_slipt::bench::{emit_csv, oracle_grid, run_sweep, write_csv, Axis, SweepSpec};
use rsma_slipt::channel::channel_matrix;
use rsma_slipt::scenario::{default_scenario, load_scenario, Scenario};
use rsma_slipt::schemes::{SchemeConfig, SchemeKind};
use rsma_slipt::solver::{solve_mmf, Outcome, Solution, SolverOptions};

#[derive(Parser, Debug)]
#[command(author, version, about = "Max-min-fair RSMA beamforming for VLC SLIPT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one scenario for one or more schemes.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the per-iteration trace (m, t, residual, θ) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep one scenario parameter and write a CSV.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// e_th, snr or p_o.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated grid; the axis default when omitted.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Extra seeds; each one repeats the sweep.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Redraw this many user positions per seed.
        #[arg(long)]
        random_users: Option<usize>,
        /// Solve every point cold, without warm starts from neighbours.
        #[arg(long)]
        no_continuation: bool,
    },
    /// Compare the solver against the brute-force grid oracle.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 8)]
        resolution: usize,
    },
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Scenario TOML; the reference deployment when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (CSV for `sweep`, summary otherwise); stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "rsma,sdma,noma")]
    schemes: Vec<SchemeKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long)]
    growth: Option<f64>,
    #[arg(long)]
    growth_rounds: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    rank_tol: Option<f64>,
    /// Exit with a failure code if any point or run fails.
    #[arg(long)]
    strict: bool,
}

impl CommonArgs {
    fn scenario(&self) -> rsma_slipt::Result<Scenario> {
        match &self.config {
            Some(p) => load_scenario(p),
            None => Ok(default_scenario()),
        }
    }

    fn options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            convergence_tol: self.tol.unwrap_or(d.convergence_tol),
            penalty_rho: self.rho.unwrap_or(d.penalty_rho),
            penalty_growth: self.growth.unwrap_or(d.penalty_growth),
            max_growth_rounds: self.growth_rounds.unwrap_or(d.max_growth_rounds),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            rank_tol: self.rank_tol.unwrap_or(d.rank_tol),
            seed: self.seed,
            ..d
        }
    }

    fn emit(&self, text: &str) -> rsma_slipt::Result<()> {
        match &self.output {
            Some(p) => std::fs::write(p, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn summary(sol: &Solution) -> String {
    let rates: Vec<String> = sol.allocation.totals().iter().map(|r| format!("{r:.6}")).collect();
    format!(
        "{:<5} mmf={:.6} theta={:.4} iters={} residual={:.3e} status={} rates=[{}]\n",
        sol.scheme.kind.to_string(),
        sol.mmf_value,
        sol.theta(),
        sol.iterations(),
        sol.penalty_residual,
        sol.status.as_str(),
        rates.join(", ")
    )
}

fn solve(common: &CommonArgs, trace: Option<&PathBuf>) -> rsma_slipt::Result<bool> {
    let scenario = common.scenario()?;
    let channel = channel_matrix(&scenario)?;
    let opts = common.options();
    let mut out = String::new();
    let mut traces = String::new();
    let mut ok = true;
    for kind in &common.schemes {
        let cfg = SchemeConfig::for_channel(*kind, &channel);
        match solve_mmf(&scenario, &cfg, &opts) {
            Ok(sol) => {
                ok &= sol.status == Outcome::Converged;
                out.push_str(&summary(&sol));
                traces.push_str(&format!("# {kind}\n{}", sol.trace_log()));
            }
            Err(e) => {
                ok = false;
                out.push_str(&format!("{kind:<5} error: {e}\n"));
            }
        }
    }
    common.emit(&out)?;
    if let Some(p) = trace {
        std::fs::write(p, traces)?;
    }
    Ok(ok)
}

fn sweep(
    common: &CommonArgs,
    axis: Axis,
    grid: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    random_users: Option<usize>,
    no_continuation: bool,
) -> rsma_slipt::Result<bool> {
    let mut spec = SweepSpec::new(axis, common.scenario()?);
    if let Some(g) = grid {
        spec.grid = g;
    }
    spec.schemes = common.schemes.clone();
    spec.seeds = seeds.unwrap_or_else(|| vec![common.seed]);
    spec.random_users = random_users;
    spec.options = common.options();
    spec.continuation = !no_continuation;
    let result = run_sweep(&spec)?;
    match &common.output {
        Some(p) => emit_csv(&result, p)?,
        None => write_csv(&result, std::io::stdout().lock())?,
    }
    let failures = result.failures();
    if failures > 0 {
        eprintln!("{failures} point(s) failed");
    }
    Ok(failures == 0)
}

fn oracle(common: &CommonArgs, resolution: usize) -> rsma_slipt::Result<bool> {
    let scenario = common.scenario()?;
    let channel = channel_matrix(&scenario)?;
    let opts = common.options();
    let mut out = String::new();
    let mut ok = true;
    for kind in &common.schemes {
        let cfg = SchemeConfig::for_channel(*kind, &channel);
        let bound = oracle_grid(&scenario, &cfg, resolution)?;
        let solved = solve_mmf(&scenario, &cfg, &opts).map(|s| s.mmf_value);
        match solved {
            Ok(v) => {
                let pass = v >= bound - 1e-3;
                ok &= pass;
                out.push_str(&format!(
                    "{kind:<5} solver={v:.6} oracle={bound:.6} {}\n",
                    if pass { "ok" } else { "BELOW ORACLE" }
                ));
            }
            Err(e) => {
                ok = false;
                out.push_str(&format!("{kind:<5} oracle={bound:.6} solver error: {e}\n"));
            }
        }
    }
    common.emit(&out)?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (strict, result) = match &cli.command {
        Command::Solve { common, trace } => (common.strict, solve(common, trace.as_ref())),
        Command::Sweep {
            common,
            axis,
            grid,
            seeds,
            random_users,
            no_continuation,
        } => (
            common.strict,
            sweep(common, *axis, grid.clone(), seeds.clone(), *random_users, *no_continuation),
        ),
        Command::Oracle { common, resolution } => (common.strict, oracle(common, *resolution)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if !strict => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
