//! Experiment orchestration: benchmark matrices, policy-comparison matrices,
//! and sensitivity sweeps, all emitted as fixed-column tables with a
//! reproducibility manifest.
//!
//! Everything here runs on `f64` and is deterministic given the plan: cell
//! seeds are derived from the master seed, runtimes are reported as 0 by
//! default, and output files carry no timestamps, so re-running a plan
//! reproduces the output byte for byte.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics::{build_foq_plus, build_tbs_plus, foq_policy, tbs_policy, tune_foq, tune_tbs};
use crate::model::{preset_config, Country, ProblemConfig, ScenarioPreset, Storage};
use crate::simulator::{
    benchmark_deviation, build_benchmark_variants, derive_stream_seed, simulate_prepared,
    SimOptions, SimulationReport,
};
use crate::solver::{relative_value_iteration, ActionRestriction, Policy, SolverOptions};
use crate::dynamics::Dynamics;

/// Which policies a policy matrix evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Optimal,
    Foq,
    FoqPlus,
    Tbs,
    TbsPlus,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Optimal,
        PolicyKind::Foq,
        PolicyKind::FoqPlus,
        PolicyKind::Tbs,
        PolicyKind::TbsPlus,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Optimal => "Optimal",
            PolicyKind::Foq => "FOQ",
            PolicyKind::FoqPlus => "FOQ+",
            PolicyKind::Tbs => "TBS",
            PolicyKind::TbsPlus => "TBS+",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "optimal" => Ok(PolicyKind::Optimal),
            "foq" => Ok(PolicyKind::Foq),
            "foq+" | "foq-plus" => Ok(PolicyKind::FoqPlus),
            "tbs" => Ok(PolicyKind::Tbs),
            "tbs+" | "tbs-plus" => Ok(PolicyKind::TbsPlus),
            other => Err(Error::Parse(format!("unknown policy '{other}'"))),
        }
    }
}

/// Sensitivity-sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Joint sweep: one local-share curve per capacity-variability level,
    /// each traced over the cost-ratio grid.
    RhoVarlC,
    /// Holding cost swept directly over a numeric grid.
    StorageCost,
    VarlC,
    VarlD,
    VarlY,
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rho-varl-c" | "rhoxvarl-c" | "rho" => Ok(SweepAxis::RhoVarlC),
            "storage-cost" | "chold" => Ok(SweepAxis::StorageCost),
            "varl-c" => Ok(SweepAxis::VarlC),
            "varl-d" => Ok(SweepAxis::VarlD),
            "varl-y" => Ok(SweepAxis::VarlY),
            other => Err(Error::Parse(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// Output table format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::Parse(format!("unknown table format '{other}'"))),
        }
    }
}

fn default_countries() -> Vec<Country> {
    Country::ALL.to_vec()
}
fn default_storages() -> Vec<Storage> {
    Storage::ALL.to_vec()
}
fn default_rhos() -> Vec<f64> {
    vec![0.6, 0.8, 1.0, 1.2, 1.4]
}
fn default_varl() -> f64 {
    0.5
}
fn default_varl_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}
fn default_rho_grid() -> Vec<f64> {
    (5..=15).map(|k| k as f64 / 10.0).collect()
}
fn default_storage_cost_grid() -> Vec<f64> {
    (1..=16).map(|k| k as f64 / 2.0).collect()
}
fn default_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}
fn default_periods() -> usize {
    100_000
}
fn default_warmup() -> usize {
    1_000
}
fn default_seed() -> u64 {
    12345
}
fn default_epsilon() -> f64 {
    1e-4
}
fn default_width_steps() -> usize {
    2
}
fn default_true() -> bool {
    true
}

/// Everything a run needs, loadable from a TOML plan file. Every field has a
/// default, so `{}` is a valid plan.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default = "default_countries")]
    pub countries: Vec<Country>,
    #[serde(default = "default_storages")]
    pub storages: Vec<Storage>,
    #[serde(default = "default_rhos")]
    pub rhos: Vec<f64>,
    /// Base variability levels for all three uncertainty dimensions.
    #[serde(default = "default_varl")]
    pub varl_c: f64,
    #[serde(default = "default_varl")]
    pub varl_d: f64,
    #[serde(default = "default_varl")]
    pub varl_y: f64,
    /// Grid for swept variability axes.
    #[serde(default = "default_varl_grid")]
    pub varl_grid: Vec<f64>,
    /// Cost-ratio grid for the joint rho sweep.
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    /// Weekly holding-cost grid for the storage-cost sweep.
    #[serde(default = "default_storage_cost_grid")]
    pub storage_cost_grid: Vec<f64>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    /// Master seed; each scenario cell derives its own stream seed from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Span stopping threshold for every solve.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Box half-width (in grid steps) for the FOQ+/TBS+ constructions.
    #[serde(default = "default_width_steps")]
    pub width_steps: usize,
    /// Report runtimes as 0.00 so output files are byte-reproducible.
    #[serde(default = "default_true")]
    pub stable_runtime: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        toml::from_str("").expect("empty plan must deserialize")
    }
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.countries.is_empty()
            || self.storages.is_empty()
            || self.rhos.is_empty()
            || self.policies.is_empty()
        {
            return Err(Error::Config("plan selections must be non-empty".into()));
        }
        if self.rhos.iter().chain(&self.rho_grid).any(|&r| r <= 0.0) {
            return Err(Error::Config("all rho values must be > 0".into()));
        }
        if self.warmup >= self.periods {
            return Err(Error::Config("warmup must be smaller than periods".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        Ok(())
    }

    fn sim_options(&self, cell_seed: u64) -> SimOptions {
        SimOptions { periods: self.periods, warmup: self.warmup, seed: cell_seed, initial_state: 0 }
    }

    fn solver_options(&self) -> SolverOptions<f64> {
        SolverOptions::with_epsilon(self.epsilon)
    }
}

/// One output line: scenario coordinates, policy label, and metrics. `None`
/// metrics print as empty fields (error rows).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub country: String,
    pub storage: String,
    pub rho: f64,
    pub varl_c: f64,
    pub varl_d: f64,
    pub varl_y: f64,
    pub policy: String,
    pub avg_cost: Option<f64>,
    pub gap_pct: Option<f64>,
    pub local_share_pct: Option<f64>,
    pub runtime_s: f64,
}

pub const TABLE_HEADER: &str =
    "country,storage,rho,varl_c,varl_d,varl_y,policy,avg_cost,gap_pct,local_share_pct,runtime_s";

impl ResultRow {
    fn cells(&self) -> Vec<String> {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
        vec![
            self.country.clone(),
            self.storage.clone(),
            format!("{:.2}", self.rho),
            format!("{:.2}", self.varl_c),
            format!("{:.2}", self.varl_d),
            format!("{:.2}", self.varl_y),
            self.policy.clone(),
            num(self.avg_cost),
            num(self.gap_pct),
            num(self.local_share_pct),
            format!("{:.2}", self.runtime_s),
        ]
    }
}

/// Scenario coordinates shared by every row of one cell.
#[derive(Debug, Clone)]
struct CellKey {
    country: String,
    storage: String,
    rho: f64,
    varl_c: f64,
    varl_d: f64,
    varl_y: f64,
}

impl CellKey {
    fn row(
        &self,
        policy: &str,
        report: Option<&SimulationReport<f64>>,
        gap_pct: Option<f64>,
        runtime_s: f64,
    ) -> ResultRow {
        ResultRow {
            country: self.country.clone(),
            storage: self.storage.clone(),
            rho: self.rho,
            varl_c: self.varl_c,
            varl_d: self.varl_d,
            varl_y: self.varl_y,
            policy: policy.to_string(),
            avg_cost: report.map(|r| r.avg_cost),
            gap_pct,
            local_share_pct: report.map(|r| 100.0 * r.local_share),
            runtime_s,
        }
    }

    fn error_row(&self, err: &Error) -> ResultRow {
        let msg = err.to_string().replace([',', '\n', '|'], ";");
        self.row(&format!("error({msg})"), None, None, 0.0)
    }
}

struct Timer {
    start: Instant,
    stable: bool,
}

impl Timer {
    fn new(stable: bool) -> Self {
        Self { start: Instant::now(), stable }
    }
    /// Elapsed seconds, or 0 when byte-stable output is requested.
    fn lap(&mut self) -> f64 {
        let t = self.start.elapsed().as_secs_f64();
        self.start = Instant::now();
        if self.stable {
            0.0
        } else {
            t
        }
    }
}

fn cell_keys(plan: &ExperimentPlan) -> Vec<(ScenarioPreset, CellKey)> {
    let mut out = Vec::new();
    for &country in &plan.countries {
        for &storage in &plan.storages {
            for &rho in &plan.rhos {
                let preset = ScenarioPreset { country, storage, rho };
                out.push((
                    preset,
                    CellKey {
                        country: country.to_string(),
                        storage: storage.to_string(),
                        rho,
                        varl_c: plan.varl_c,
                        varl_d: plan.varl_d,
                        varl_y: plan.varl_y,
                    },
                ));
            }
        }
    }
    out
}

fn solve_and_simulate(
    config: &ProblemConfig<f64>,
    restriction: &ActionRestriction,
    solver: &SolverOptions<f64>,
    true_dynamics: &Dynamics<f64>,
    sim: &SimOptions,
) -> Result<(Policy, SimulationReport<f64>)> {
    let solved = relative_value_iteration(config, restriction, solver)?;
    let report = simulate_prepared(&solved.policy, true_dynamics, sim)?;
    Ok((solved.policy, report))
}

/// Tables 2–4 analogue: per scenario cell, the optimal dual-sourcing policy
/// against the five benchmark variants, all simulated under the true
/// dynamics with one shared stream.
pub fn run_benchmark_matrix(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    let solver = plan.solver_options();
    let mut rows = Vec::new();
    for (cell_index, (preset, key)) in cell_keys(plan).into_iter().enumerate() {
        let sim = plan.sim_options(derive_stream_seed(plan.seed, cell_index as u64));
        let mut timer = Timer::new(plan.stable_runtime);
        let outcome = (|| -> Result<Vec<ResultRow>> {
            let config = preset_config::<f64>(&preset, plan.varl_c, plan.varl_d, plan.varl_y);
            let dynamics = Dynamics::new(config.clone())?;
            let (_, opt_report) =
                solve_and_simulate(&config, &ActionRestriction::Full, &solver, &dynamics, &sim)?;
            let mut cell_rows =
                vec![key.row("Optimal", Some(&opt_report), Some(0.0), timer.lap())];
            for variant in build_benchmark_variants(&config) {
                let (_, report) = solve_and_simulate(
                    &variant.config,
                    &variant.restriction,
                    &solver,
                    &dynamics,
                    &sim,
                )?;
                let gap = benchmark_deviation(&opt_report, &report);
                cell_rows.push(key.row(variant.label, Some(&report), gap, timer.lap()));
            }
            Ok(cell_rows)
        })();
        match outcome {
            Ok(mut cell_rows) => rows.append(&mut cell_rows),
            Err(e) => rows.push(key.error_row(&e)),
        }
    }
    Ok(rows)
}

/// Tables 5–7 analogue: per scenario cell, tune FOQ and TBS, build the "+"
/// variants, and simulate all five policies with common random numbers.
pub fn run_policy_matrix(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    let solver = plan.solver_options();
    let mut rows = Vec::new();
    for (cell_index, (preset, key)) in cell_keys(plan).into_iter().enumerate() {
        let cell_seed = derive_stream_seed(plan.seed, cell_index as u64);
        let sim = plan.sim_options(cell_seed);
        let mut timer = Timer::new(plan.stable_runtime);
        let outcome = (|| -> Result<Vec<ResultRow>> {
            let config = preset_config::<f64>(&preset, plan.varl_c, plan.varl_d, plan.varl_y);
            let dynamics = Dynamics::new(config.clone())?;
            let opt = relative_value_iteration(&config, &ActionRestriction::Full, &solver)?;
            let opt_report = simulate_prepared(&opt.policy, &dynamics, &sim)?;
            let opt_cost = opt_report.avg_cost;
            let gap_of = |report: &SimulationReport<f64>| {
                if opt_cost == 0.0 {
                    None
                } else {
                    Some(100.0 * (report.avg_cost - opt_cost) / opt_cost)
                }
            };
            // tune once per cell with the shared stream, reuse for both "+"es
            let foq = tune_foq(&config, plan.periods, cell_seed)?;
            let tbs = tune_tbs(&config, plan.periods, cell_seed)?;

            let mut cell_rows = Vec::new();
            for kind in &plan.policies {
                let row = match kind {
                    PolicyKind::Optimal => {
                        key.row("Optimal", Some(&opt_report), Some(0.0), timer.lap())
                    }
                    PolicyKind::Foq => {
                        let report =
                            simulate_prepared(&foq_policy(foq, &dynamics.space), &dynamics, &sim)?;
                        key.row("FOQ", Some(&report), gap_of(&report), timer.lap())
                    }
                    PolicyKind::FoqPlus => {
                        let solved = build_foq_plus(&config, foq, plan.width_steps, &solver)?;
                        let report = simulate_prepared(&solved.policy, &dynamics, &sim)?;
                        key.row("FOQ+", Some(&report), gap_of(&report), timer.lap())
                    }
                    PolicyKind::Tbs => {
                        let report =
                            simulate_prepared(&tbs_policy(tbs, &dynamics.space), &dynamics, &sim)?;
                        key.row("TBS", Some(&report), gap_of(&report), timer.lap())
                    }
                    PolicyKind::TbsPlus => {
                        let solved = build_tbs_plus(&config, tbs, plan.width_steps, &solver)?;
                        let report = simulate_prepared(&solved.policy, &dynamics, &sim)?;
                        key.row("TBS+", Some(&report), gap_of(&report), timer.lap())
                    }
                };
                cell_rows.push(row);
            }
            Ok(cell_rows)
        })();
        match outcome {
            Ok(mut cell_rows) => rows.append(&mut cell_rows),
            Err(e) => rows.push(key.error_row(&e)),
        }
    }
    Ok(rows)
}

/// Figures 1–3 analogue: local supply share of the optimal policy along one
/// parameter axis, everything else at the plan's base values.
///
/// The country defaults to Morocco and the storage to salt cavern; a plan
/// listing exactly one country or storage overrides the default. For the
/// storage-cost axis the holding cost is swept directly and reported in the
/// storage column as `chold=<value>`.
pub fn run_sensitivity_sweep(plan: &ExperimentPlan, axis: SweepAxis) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    let country = if plan.countries.len() == 1 { plan.countries[0] } else { Country::Morocco };
    let storage = if plan.storages.len() == 1 { plan.storages[0] } else { Storage::SaltCavern };
    let solver = plan.solver_options();

    // (rho, c_hold override, varl triple) per sweep point
    let mut points: Vec<(f64, Option<f64>, f64, f64, f64)> = Vec::new();
    match axis {
        SweepAxis::RhoVarlC => {
            for &v in &plan.varl_grid {
                for &rho in &plan.rho_grid {
                    points.push((rho, None, v, plan.varl_d, plan.varl_y));
                }
            }
        }
        SweepAxis::StorageCost => {
            for &rho in &plan.rhos {
                for &h in &plan.storage_cost_grid {
                    points.push((rho, Some(h), plan.varl_c, plan.varl_d, plan.varl_y));
                }
            }
        }
        SweepAxis::VarlC => {
            for &rho in &plan.rhos {
                for &v in &plan.varl_grid {
                    points.push((rho, None, v, plan.varl_d, plan.varl_y));
                }
            }
        }
        SweepAxis::VarlD => {
            for &rho in &plan.rhos {
                for &v in &plan.varl_grid {
                    points.push((rho, None, plan.varl_c, v, plan.varl_y));
                }
            }
        }
        SweepAxis::VarlY => {
            for &rho in &plan.rhos {
                for &v in &plan.varl_grid {
                    points.push((rho, None, plan.varl_c, plan.varl_d, v));
                }
            }
        }
    }

    let mut rows = Vec::new();
    for (i, (rho, c_hold, varl_c, varl_d, varl_y)) in points.into_iter().enumerate() {
        let preset = ScenarioPreset { country, storage, rho };
        let key = CellKey {
            country: country.to_string(),
            storage: match c_hold {
                Some(h) => format!("chold={h}"),
                None => storage.to_string(),
            },
            rho,
            varl_c,
            varl_d,
            varl_y,
        };
        let sim = plan.sim_options(derive_stream_seed(plan.seed, i as u64));
        let mut timer = Timer::new(plan.stable_runtime);
        let outcome = (|| -> Result<ResultRow> {
            let mut config = preset_config::<f64>(&preset, varl_c, varl_d, varl_y);
            if let Some(h) = c_hold {
                config.costs.c_hold = h;
            }
            let dynamics = Dynamics::new(config.clone())?;
            let (_, report) =
                solve_and_simulate(&config, &ActionRestriction::Full, &solver, &dynamics, &sim)?;
            Ok(key.row("Optimal", Some(&report), Some(0.0), timer.lap()))
        })();
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => rows.push(key.error_row(&e)),
        }
    }
    Ok(rows)
}

/// Render rows in the fixed column order.
pub fn render_table(rows: &[ResultRow], format: TableFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Input("no rows to emit".into()));
    }
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(TABLE_HEADER);
            out.push('\n');
            for row in rows {
                writeln!(out, "{}", row.cells().join(",")).unwrap();
            }
        }
        TableFormat::Markdown => {
            let columns = TABLE_HEADER.split(',').collect::<Vec<_>>();
            writeln!(out, "| {} |", columns.join(" | ")).unwrap();
            writeln!(out, "|{}", " --- |".repeat(columns.len())).unwrap();
            for row in rows {
                writeln!(out, "| {} |", row.cells().join(" | ")).unwrap();
            }
        }
    }
    Ok(out)
}

/// Write the table and a sidecar manifest recording how to reproduce it.
pub fn emit_table(rows: &[ResultRow], format: TableFormat, out_path: &std::path::Path) -> Result<()> {
    let table = render_table(rows, format)?;
    std::fs::write(out_path, table)?;
    Ok(())
}

/// FNV-1a, for content fingerprints in the manifest.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Reproducibility manifest written next to each output table: tool version,
/// plan fingerprint, master seed, and the derived per-cell seeds.
pub fn write_manifest(
    plan: &ExperimentPlan,
    cell_count: usize,
    out_path: &std::path::Path,
) -> Result<std::path::PathBuf> {
    let plan_text = plan.to_toml()?;
    let mut manifest = String::new();
    writeln!(manifest, "version = \"{}\"", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(manifest, "plan_hash = \"{:016x}\"", fnv1a(plan_text.as_bytes())).unwrap();
    writeln!(manifest, "master_seed = {}", plan.seed).unwrap();
    let seeds: Vec<String> = (0..cell_count)
        .map(|i| derive_stream_seed(plan.seed, i as u64).to_string())
        .collect();
    writeln!(manifest, "cell_seeds = [{}]", seeds.join(", ")).unwrap();
    let path = out_path.with_extension("manifest.toml");
    std::fs::write(&path, manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn quick_plan() -> ExperimentPlan {
        ExperimentPlan {
            countries: vec![Country::Morocco],
            storages: vec![Storage::SaltCavern],
            rhos: vec![1.0],
            periods: 12_000,
            warmup: 1_000,
            epsilon: 1e-3,
            ..ExperimentPlan::default()
        }
    }

    #[test]
    fn empty_plan_uses_defaults() {
        let plan = ExperimentPlan::from_toml("").unwrap();
        assert_eq!(plan.countries, Country::ALL.to_vec());
        assert_eq!(plan.storages, Storage::ALL.to_vec());
        assert_eq!(plan.rhos, vec![0.6, 0.8, 1.0, 1.2, 1.4]);
        assert_eq!(plan.varl_grid.len(), 11);
        assert_eq!(plan.storage_cost_grid.first(), Some(&0.5));
        assert_eq!(plan.storage_cost_grid.last(), Some(&8.0));
        assert_eq!(plan.periods, 100_000);
        assert!(plan.stable_runtime);
    }

    #[test]
    fn plan_round_trip_and_rejection() {
        let plan = quick_plan();
        let text = plan.to_toml().unwrap();
        assert_eq!(ExperimentPlan::from_toml(&text).unwrap(), plan);
        assert!(ExperimentPlan::from_toml("rhos = [0.0]").is_err());
        assert!(ExperimentPlan::from_toml("bogus_field = 1").is_err());
        assert!(ExperimentPlan::from_toml("warmup = 500\nperiods = 400").is_err());
    }

    #[test]
    fn csv_rendering_shape_and_round_trip() {
        let row = ResultRow {
            country: "Morocco".into(),
            storage: "SC".into(),
            rho: 1.0,
            varl_c: 0.5,
            varl_d: 0.5,
            varl_y: 0.5,
            policy: "Optimal".into(),
            avg_cost: Some(93.456),
            gap_pct: Some(0.0),
            local_share_pct: Some(54.321),
            runtime_s: 0.0,
        };
        let csv = render_table(std::slice::from_ref(&row), TableFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], TABLE_HEADER);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), 11);
        assert_eq!(fields[2], "1.00");
        assert_eq!(fields[7], "93.46");
        assert_eq!(fields[9], "54.32");
        // numeric fields parse back at two decimals
        assert_eq!(fields[7].parse::<f64>().unwrap(), 93.46);

        let md = render_table(&[row], TableFormat::Markdown).unwrap();
        let md_lines: Vec<&str> = md.lines().collect();
        assert_eq!(md_lines.len(), 3);
        assert!(md_lines[1].contains("---"));
        assert!(md_lines[0].starts_with("| country |"));

        assert!(render_table(&[], TableFormat::Csv).is_err());
    }

    #[test]
    fn benchmark_matrix_single_cell() {
        let mut plan = quick_plan();
        plan.rhos = vec![1.4];
        let rows = run_benchmark_matrix(&plan).unwrap();
        assert_eq!(rows.len(), 6);
        let labels: Vec<&str> = rows.iter().map(|r| r.policy.as_str()).collect();
        assert_eq!(labels, ["Optimal", "OnlyLocal", "OnlyImport", "NoNo", "YesNo", "NoYes"]);
        assert_eq!(rows[0].gap_pct, Some(0.0));
        // every deviation is computed and OnlyLocal's is clearly positive
        for row in &rows[1..] {
            assert!(row.gap_pct.is_some(), "{}", row.policy);
        }
        assert!(rows[1].gap_pct.unwrap() > 10.0);
        for row in &rows {
            assert_eq!(row.runtime_s, 0.0);
        }
    }

    #[test]
    fn policy_matrix_single_cell_ordering() {
        let mut plan = quick_plan();
        plan.periods = 20_000;
        let rows = run_policy_matrix(&plan).unwrap();
        assert_eq!(rows.len(), 5);
        let gap =
            |label: &str| rows.iter().find(|r| r.policy == label).unwrap().gap_pct.unwrap();
        assert_eq!(gap("Optimal"), 0.0);
        assert!(gap("FOQ+") <= gap("FOQ") + 1e-9);
        assert!(gap("TBS+") <= gap("TBS") + 0.5);
    }

    #[test]
    fn sweep_axis_parsing() {
        assert_eq!("varl-c".parse::<SweepAxis>().unwrap(), SweepAxis::VarlC);
        assert_eq!("rho_varl_c".parse::<SweepAxis>().unwrap(), SweepAxis::RhoVarlC);
        assert_eq!("storage-cost".parse::<SweepAxis>().unwrap(), SweepAxis::StorageCost);
        assert!("sideways".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn varl_sweep_rows_carry_the_axis() {
        let mut plan = quick_plan();
        plan.rhos = vec![0.8];
        plan.varl_grid = vec![0.0, 1.0];
        plan.periods = 12_000;
        let rows = run_sensitivity_sweep(&plan, SweepAxis::VarlC).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].varl_c, 0.0);
        assert_eq!(rows[1].varl_c, 1.0);
        assert_eq!(rows[0].varl_d, 0.5);
        for row in &rows {
            assert!(row.local_share_pct.is_some());
        }
    }

    #[test]
    fn storage_cost_sweep_labels() {
        let mut plan = quick_plan();
        plan.storage_cost_grid = vec![2.8];
        let rows = run_sensitivity_sweep(&plan, SweepAxis::StorageCost).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].storage, "chold=2.8");
    }

    #[test]
    fn emitted_files_are_reproducible() {
        let dir = tempdir().unwrap();
        let mut plan = quick_plan();
        plan.varl_grid = vec![0.5];
        plan.rhos = vec![1.0];
        let path_a = dir.path().join("a.csv");
        let path_b = dir.path().join("b.csv");
        let rows_a = run_sensitivity_sweep(&plan, SweepAxis::VarlD).unwrap();
        let rows_b = run_sensitivity_sweep(&plan, SweepAxis::VarlD).unwrap();
        emit_table(&rows_a, TableFormat::Csv, &path_a).unwrap();
        emit_table(&rows_b, TableFormat::Csv, &path_b).unwrap();
        assert_eq!(std::fs::read(&path_a).unwrap(), std::fs::read(&path_b).unwrap());

        let manifest = write_manifest(&plan, rows_a.len(), &path_a).unwrap();
        let text = std::fs::read_to_string(manifest).unwrap();
        assert!(text.contains("master_seed = 12345"));
        assert!(text.contains("plan_hash"));
    }

    #[test]
    fn policy_kind_parsing() {
        assert_eq!("foq+".parse::<PolicyKind>().unwrap(), PolicyKind::FoqPlus);
        assert_eq!("TBS".parse::<PolicyKind>().unwrap(), PolicyKind::Tbs);
        assert!("dual-index".parse::<PolicyKind>().is_err());
    }
}
