//! Command-line front end: solve instances, tune heuristics, simulate
//! policies, and run the benchmark/policy/sensitivity experiment suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualsource::dynamics::enumerate_states;
use dualsource::experiments::{
    emit_table, render_table, run_benchmark_matrix, run_policy_matrix, run_sensitivity_sweep,
    write_manifest, ExperimentPlan, ResultRow, SweepAxis, TableFormat,
};
use dualsource::heuristics::{tune_foq, tune_tbs, TunedParams};
use dualsource::model::{preset_config, Country, ScenarioFile, ScenarioPreset, Storage};
use dualsource::simulator::{simulate, SimOptions};
use dualsource::solver::{
    policy_table, relative_value_iteration, ActionRestriction, SolverOptions,
};
use dualsource::{Error, ProblemConfig, Result};

/// Environment variable overriding the rayon worker count.
const THREADS_ENV: &str = "DUALSOURCE_THREADS";

#[derive(Parser)]
#[command(
    name = "dualsource",
    version,
    about = "Dual-sourcing inventory control: average-cost MDP solver, heuristic tuning, and seeded simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Scenario selection shared by the single-instance subcommands.
#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Import country preset: norway, morocco, or uae
    #[arg(long, default_value = "morocco")]
    country: Country,
    /// Storage preset: sc, cg, or lh
    #[arg(long, default_value = "sc")]
    storage: Storage,
    /// Local/import unit-cost ratio
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Capacity variability level
    #[arg(long, default_value_t = 0.5)]
    varl_c: f64,
    /// Demand variability level
    #[arg(long, default_value_t = 0.5)]
    varl_d: f64,
    /// Yield-loss variability level
    #[arg(long, default_value_t = 0.5)]
    varl_y: f64,
    /// Scenario file (TOML); overrides the preset flags
    #[arg(long)]
    scenario: Option<PathBuf>,
}

impl ScenarioArgs {
    fn config(&self) -> Result<ProblemConfig> {
        let config = match &self.scenario {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                ScenarioFile::parse(&text)?.to_config()?
            }
            None => {
                let preset = ScenarioPreset::new(self.country, self.storage, self.rho)?;
                preset_config(&preset, self.varl_c, self.varl_d, self.varl_y)
            }
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Experiment plan file (TOML); defaults apply to missing fields
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Output table path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv or markdown
    #[arg(long, default_value = "csv")]
    format: TableFormat,
}

impl PlanArgs {
    fn plan(&self) -> Result<ExperimentPlan> {
        match &self.plan {
            Some(path) => ExperimentPlan::from_toml(&std::fs::read_to_string(path)?),
            None => Ok(ExperimentPlan::default()),
        }
    }

    fn deliver(&self, plan: &ExperimentPlan, rows: &[ResultRow]) -> Result<()> {
        match &self.out {
            Some(path) => {
                emit_table(rows, self.format, path)?;
                let manifest = write_manifest(plan, rows.len(), path)?;
                eprintln!("wrote {} rows to {} (manifest {})", rows.len(), path.display(), manifest.display());
            }
            None => print!("{}", render_table(rows, self.format)?),
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the optimal policy and report its long-run average cost
    Solve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Span stopping threshold
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        /// Write the full policy table (state, action, bias) to this path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune the FOQ and TBS heuristics by simulation search
    Tune {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 100_000)]
        periods: usize,
        #[arg(long, default_value_t = 12345)]
        seed: u64,
        /// Write tuned parameters (TOML) to this path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the optimal policy and evaluate it by seeded simulation
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 100_000)]
        periods: usize,
        #[arg(long, default_value_t = 1_000)]
        warmup: usize,
        #[arg(long, default_value_t = 12345)]
        seed: u64,
    },
    /// Single-sourcing and misspecified-model benchmark matrix
    Benchmark {
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Optimal-vs-heuristic policy comparison matrix
    Policies {
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Sensitivity sweep of the optimal policy's local supply share
    Sweep {
        #[command(flatten)]
        plan: PlanArgs,
        /// Axis: rho-varl-c, storage-cost, varl-c, varl-d, or varl-y
        #[arg(long)]
        axis: SweepAxis,
    },
}

fn configure_threads() {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        match value.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not apply {THREADS_ENV}={n}: {e}");
                }
            }
            _ => log::warn!("ignoring invalid {THREADS_ENV}={value}"),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { scenario, epsilon, out } => {
            let config = scenario.config()?;
            let options = SolverOptions::with_epsilon(epsilon);
            let result = relative_value_iteration(&config, &ActionRestriction::Full, &options)?;
            println!(
                "label={} states={} gain={:.6} iterations={} span={:.3e}",
                config.label,
                result.policy.len(),
                result.gain,
                result.iterations,
                result.span_residual
            );
            if let Some(path) = out {
                let space = enumerate_states(&config)?;
                std::fs::write(&path, policy_table(&space, &result))?;
                eprintln!("wrote policy table to {}", path.display());
            }
        }
        Command::Tune { scenario, periods, seed, out } => {
            let config = scenario.config()?;
            let foq = tune_foq(&config, periods, seed)?;
            let tbs = tune_tbs(&config, periods, seed)?;
            println!(
                "foq: q_local={} q_import={}\ntbs: threshold={} q_import={}",
                foq.q_local, foq.q_import, tbs.threshold, tbs.q_import
            );
            if let Some(path) = out {
                let record = TunedParams { foq: Some(foq), tbs: Some(tbs) };
                std::fs::write(&path, record.to_toml()?)?;
                eprintln!("wrote tuned parameters to {}", path.display());
            }
        }
        Command::Simulate { scenario, epsilon, periods, warmup, seed } => {
            let config = scenario.config()?;
            let options = SolverOptions::with_epsilon(epsilon);
            let result = relative_value_iteration(&config, &ActionRestriction::Full, &options)?;
            let sim = SimOptions { periods, warmup, seed, initial_state: 0 };
            let report = simulate(&result.policy, &config, &sim)?;
            println!("gain={:.6}", result.gain);
            println!("{}", dualsource::SimulationReport::CSV_HEADER);
            println!("{}", report.to_csv_row());
        }
        Command::Benchmark { plan: args } => {
            let plan = args.plan()?;
            let rows = run_benchmark_matrix(&plan)?;
            args.deliver(&plan, &rows)?;
            fail_on_error_rows(&rows)?;
        }
        Command::Policies { plan: args } => {
            let plan = args.plan()?;
            let rows = run_policy_matrix(&plan)?;
            args.deliver(&plan, &rows)?;
            fail_on_error_rows(&rows)?;
        }
        Command::Sweep { plan: args, axis } => {
            let plan = args.plan()?;
            let rows = run_sensitivity_sweep(&plan, axis)?;
            args.deliver(&plan, &rows)?;
            fail_on_error_rows(&rows)?;
        }
    }
    Ok(())
}

/// Error rows are recorded in the table but still fail the invocation.
fn fail_on_error_rows(rows: &[ResultRow]) -> Result<()> {
    let failed: Vec<&ResultRow> = rows.iter().filter(|r| r.policy.starts_with("error(")).collect();
    if failed.is_empty() {
        return Ok(());
    }
    Err(Error::Input(format!(
        "{} cell(s) failed; first failure: {}",
        failed.len(),
        failed[0].policy
    )))
}

fn main() -> ExitCode {
    env_logger::init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
