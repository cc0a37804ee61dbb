//! The four practitioner policies: fixed order quantities (FOQ), the
//! box-flexible variant (FOQ+), tailored base-surge (TBS, threshold-triggered
//! local plus a fixed import), and the import-flexible variant (TBS+).
//!
//! FOQ and TBS are tuned by exhaustive simulation search with common random
//! numbers; the "+" variants are restricted-action dynamic programs around
//! the tuned parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Action, Dynamics, StateSpace};
use crate::error::{Error, Result};
use crate::model::{ProblemConfig, Quantity, QuantityGrid};
use crate::real::Real;
use crate::simulator::{simulate_prepared, SimOptions};
use crate::solver::{
    relative_value_iteration, ActionRestriction, Policy, SolveResult, SolverOptions,
};

/// Fixed order pair: the same two quantities every period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FOQParams {
    pub q_local: Quantity,
    pub q_import: Quantity,
}

impl FOQParams {
    pub fn validate(&self, grid: &QuantityGrid) -> Result<()> {
        if !grid.on_grid(self.q_local)
            || !grid.on_grid(self.q_import)
            || !(0..=grid.max_order_local).contains(&self.q_local)
            || !(0..=grid.max_order_import).contains(&self.q_import)
        {
            return Err(Error::Config(format!("infeasible fixed-order pair {self:?}")));
        }
        Ok(())
    }
}

/// Order-quantity ranges for a box-restricted solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub local_min: Quantity,
    pub local_max: Quantity,
    pub import_min: Quantity,
    pub import_max: Quantity,
}

impl BoxBounds {
    /// Center ± `width_steps` grid steps, clamped to the admissible orders.
    pub fn around(center: FOQParams, width_steps: usize, grid: &QuantityGrid) -> Self {
        let w = width_steps as i64 * grid.step;
        Self {
            local_min: (center.q_local - w).max(0),
            local_max: (center.q_local + w).min(grid.max_order_local),
            import_min: (center.q_import - w).max(0),
            import_max: (center.q_import + w).min(grid.max_order_import),
        }
    }

    pub fn to_restriction(self) -> ActionRestriction {
        ActionRestriction::Box {
            local_min: self.local_min,
            local_max: self.local_max,
            import_min: self.import_min,
            import_max: self.import_max,
        }
    }

    pub fn validate(&self, grid: &QuantityGrid) -> Result<()> {
        self.to_restriction().validate(&dummy_config_for(grid))
    }
}

// ActionRestriction::validate only inspects the grid; give it one.
fn dummy_config_for(grid: &QuantityGrid) -> ProblemConfig<f64> {
    use crate::model::{CostParams, DistKind, DistributionSpec};
    ProblemConfig {
        grid: *grid,
        lead_local: 0,
        lead_import: 1,
        costs: CostParams { c_local: 1.0, c_import: 1.0, c_hold: 1.0, c_penalty: 2.0 },
        capacity: DistributionSpec {
            mean: 0.0,
            lower: 0.0,
            upper: 0.0,
            varl: 0.0,
            kind: DistKind::Capacity,
        },
        demand: DistributionSpec {
            mean: 0.0,
            lower: 0.0,
            upper: 0.0,
            varl: 0.0,
            kind: DistKind::Demand,
        },
        yield_loss: DistributionSpec {
            mean: 0.0,
            lower: 0.0,
            upper: 0.0,
            varl: 0.0,
            kind: DistKind::YieldLoss,
        },
        label: String::new(),
    }
}

/// Base-surge parameters: local order-up-to threshold plus a fixed import.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TBSParams {
    pub threshold: Quantity,
    pub q_import: Quantity,
}

impl TBSParams {
    pub fn validate(&self, grid: &QuantityGrid) -> Result<()> {
        if !(0..=grid.max_inventory).contains(&self.threshold)
            || !grid.on_grid(self.threshold)
            || !grid.on_grid(self.q_import)
            || self.q_import > grid.max_order_import
        {
            return Err(Error::Config(format!("infeasible base-surge parameters {self:?}")));
        }
        Ok(())
    }
}

/// The constant policy ordering (q_local, q_import) in every state.
pub fn foq_policy(params: FOQParams, space: &StateSpace) -> Policy {
    let action = Action { local_request: params.q_local, import_order: params.q_import };
    Policy { actions: vec![action; space.len()] }
}

/// The base-surge policy: local order-up-to the threshold, fixed import.
pub fn tbs_policy(params: TBSParams, space: &StateSpace) -> Policy {
    let max_local = space.max_local_order();
    let actions = space
        .states()
        .iter()
        .map(|s| Action {
            local_request: ActionRestriction::tbs_local_order(params.threshold, s.inventory, max_local),
            import_order: params.q_import,
        })
        .collect();
    Policy { actions }
}

/// Shared candidate search: simulate each candidate policy under common
/// random numbers (one frozen draw stream for every candidate) and return the
/// index of the lowest average cost; exact ties go to the lowest `tie_key`.
fn search_candidates<R, P, K>(
    dynamics: &Dynamics<R>,
    candidates: &[P],
    options: &SimOptions,
    make_policy: impl Fn(&P) -> Policy + Sync,
    tie_key: impl Fn(&P) -> K,
) -> Result<usize>
where
    R: Real,
    P: Sync,
    K: Ord,
{
    let costs: Vec<R> = candidates
        .par_iter()
        .map(|c| simulate_prepared(&make_policy(c), dynamics, options).map(|r| r.avg_cost))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0usize;
    for i in 1..candidates.len() {
        if costs[i] < costs[best]
            || (costs[i] == costs[best] && tie_key(&candidates[i]) < tie_key(&candidates[best]))
        {
            best = i;
        }
    }
    Ok(best)
}

fn check_tuning_periods(periods: usize) -> Result<()> {
    if periods < 10_000 {
        return Err(Error::Config(format!(
            "tuning requires at least 10,000 simulated periods, got {periods}"
        )));
    }
    Ok(())
}

/// Exhaustive simulation search over every fixed-order pair on the grids.
/// Ties break toward the smaller total order quantity, then smaller import.
pub fn tune_foq<R: Real>(
    config: &ProblemConfig<R>,
    periods: usize,
    seed: u64,
) -> Result<FOQParams> {
    check_tuning_periods(periods)?;
    let dynamics = Dynamics::new(config.clone())?;
    let grid = &config.grid;
    let candidates: Vec<FOQParams> = grid
        .local_orders()
        .flat_map(|l| grid.import_orders().map(move |i| FOQParams { q_local: l, q_import: i }))
        .collect();
    let options = SimOptions { periods, seed, ..SimOptions::default() };
    let best = search_candidates(
        &dynamics,
        &candidates,
        &options,
        |p| foq_policy(*p, &dynamics.space),
        |p| (p.q_local + p.q_import, p.q_import),
    )?;
    Ok(candidates[best])
}

/// Exhaustive simulation search over (threshold, fixed import) pairs, the
/// threshold ranging over the full inventory grid. Ties break toward the
/// smaller threshold, then smaller import.
pub fn tune_tbs<R: Real>(
    config: &ProblemConfig<R>,
    periods: usize,
    seed: u64,
) -> Result<TBSParams> {
    check_tuning_periods(periods)?;
    let dynamics = Dynamics::new(config.clone())?;
    let grid = &config.grid;
    let candidates: Vec<TBSParams> = grid
        .inventory_values()
        .flat_map(|t| grid.import_orders().map(move |i| TBSParams { threshold: t, q_import: i }))
        .collect();
    let options = SimOptions { periods, seed, ..SimOptions::default() };
    let best = search_candidates(
        &dynamics,
        &candidates,
        &options,
        |p| tbs_policy(*p, &dynamics.space),
        |p| (p.threshold, p.q_import),
    )?;
    Ok(candidates[best])
}

/// Solve the box-restricted program centered on a fixed-order pair.
pub fn build_foq_plus<R: Real>(
    config: &ProblemConfig<R>,
    center: FOQParams,
    width_steps: usize,
    options: &SolverOptions<R>,
) -> Result<SolveResult<R>> {
    center.validate(&config.grid)?;
    let bounds = BoxBounds::around(center, width_steps, &config.grid);
    relative_value_iteration(config, &bounds.to_restriction(), options)
}

/// Solve with the base-surge local rule forced and the import order free in a
/// band around the tuned fixed import.
pub fn build_tbs_plus<R: Real>(
    config: &ProblemConfig<R>,
    params: TBSParams,
    width_steps: usize,
    options: &SolverOptions<R>,
) -> Result<SolveResult<R>> {
    params.validate(&config.grid)?;
    let w = width_steps as i64 * config.grid.step;
    let restriction = ActionRestriction::TbsPlus {
        threshold: params.threshold,
        import_min: (params.q_import - w).max(0),
        import_max: (params.q_import + w).min(config.grid.max_order_import),
    };
    relative_value_iteration(config, &restriction, options)
}

/// Pinnable record of tuned parameters, as a small text document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TunedParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub foq: Option<FOQParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tbs: Option<TBSParams>,
}

impl TunedParams {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::enumerate_states;
    use crate::model::{preset_config, Country, ScenarioPreset, Storage};
    use crate::solver::exact_policy_gain;
    use approx::assert_abs_diff_eq;

    /// Deterministic everything, with local capacity raised to cover any
    /// order (the preset's capacity mean of 10,000 censors local deliveries).
    fn deterministic_config(rho: f64) -> ProblemConfig<f64> {
        let p = ScenarioPreset::new(Country::Morocco, Storage::SaltCavern, rho).unwrap();
        let mut config = preset_config(&p, 0.0, 0.0, 0.0);
        config.capacity.mean = 20_000.0;
        config
    }

    fn morocco_base() -> ProblemConfig<f64> {
        let p = ScenarioPreset::new(Country::Morocco, Storage::SaltCavern, 1.0).unwrap();
        preset_config(&p, 0.5, 0.5, 0.5)
    }

    #[test]
    fn foq_tuning_on_deterministic_instance() {
        // cheap reliable local supply: order exactly the demand locally
        let config = deterministic_config(0.6);
        let params = tune_foq(&config, 10_000, 1).unwrap();
        assert_eq!(params, FOQParams { q_local: 14_000, q_import: 0 });
    }

    #[test]
    fn foq_tuning_prefers_import_when_local_is_prohibitive() {
        let config = deterministic_config(10.0);
        let params = tune_foq(&config, 10_000, 1).unwrap();
        assert_eq!(params.q_local, 0);
        // deterministic yield loss 0.175 snaps each import quantity; 16000
        // arrives as 14000 (demand exactly covered), 18000 as 14000 too but
        // at higher order cost — verify by exact evaluation that no other
        // fixed import does better
        let space = enumerate_states(&config).unwrap();
        let best = exact_policy_gain(&foq_policy(params, &space), &config).unwrap();
        for q in config.grid.import_orders() {
            let alt = FOQParams { q_local: 0, q_import: q };
            let g = exact_policy_gain(&foq_policy(alt, &space), &config).unwrap();
            assert!(best <= g + 1e-9, "import {q} beats tuned {params:?}");
        }
    }

    #[test]
    fn no_demand_means_no_orders() {
        let mut config = deterministic_config(1.0);
        config.demand.mean = 0.0;
        config.demand.lower = 0.0;
        config.demand.upper = 0.0;
        let foq = tune_foq(&config, 10_000, 3).unwrap();
        assert_eq!(foq, FOQParams { q_local: 0, q_import: 0 });
        let tbs = tune_tbs(&config, 10_000, 3).unwrap();
        assert_eq!(tbs, TBSParams { threshold: 0, q_import: 0 });
    }

    #[test]
    fn tuning_is_reproducible() {
        let config = morocco_base();
        let a = tune_foq(&config, 10_000, 99).unwrap();
        let b = tune_foq(&config, 10_000, 99).unwrap();
        assert_eq!(a, b);
        let c = tune_tbs(&config, 10_000, 99).unwrap();
        let d = tune_tbs(&config, 10_000, 99).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn tbs_tuning_without_imports() {
        let mut config = deterministic_config(1.0);
        config.costs.c_import = 1.0e6;
        let params = tune_tbs(&config, 10_000, 2).unwrap();
        assert_eq!(params, TBSParams { threshold: 14_000, q_import: 0 });
    }

    #[test]
    fn constant_policy_shape() {
        let config = morocco_base();
        let space = enumerate_states(&config).unwrap();
        let policy = foq_policy(FOQParams { q_local: 14_000, q_import: 0 }, &space);
        assert_eq!(policy.len(), 231);
        let first = policy.action(0);
        let last = policy.action(policy.len() - 1);
        assert_eq!(first, last);
        assert_eq!(first, Action { local_request: 14_000, import_order: 0 });
    }

    #[test]
    fn tbs_rule_examples() {
        let config = morocco_base();
        let space = enumerate_states(&config).unwrap();
        let policy = tbs_policy(TBSParams { threshold: 10_000, q_import: 2000 }, &space);
        let at = |inv: Quantity| {
            let idx = space
                .states()
                .iter()
                .position(|s| s.inventory == inv && s.import_pipeline[0] == 0)
                .unwrap();
            policy.action(idx)
        };
        assert_eq!(at(6000).local_request, 4000);
        assert_eq!(at(12_000).local_request, 0);
        assert_eq!(at(0).local_request, 10_000);
        // slope -1 below the threshold, flat above
        let mut prev = None;
        for s in space.states().iter().filter(|s| s.import_pipeline[0] == 0) {
            let a = ActionRestriction::tbs_local_order(10_000, s.inventory, 20_000);
            if let Some(p) = prev {
                assert!(a <= p);
            }
            prev = Some(a);
        }
    }

    #[test]
    fn tbs_cap_at_max_order() {
        assert_eq!(ActionRestriction::tbs_local_order(24_000, 0, 20_000), 20_000);
    }

    #[test]
    fn box_bounds_construction_and_clamping() {
        let grid = morocco_base().grid;
        let b = BoxBounds::around(FOQParams { q_local: 14_000, q_import: 6000 }, 2, &grid);
        assert_eq!(
            b,
            BoxBounds { local_min: 10_000, local_max: 18_000, import_min: 2000, import_max: 10_000 }
        );
        let edge = BoxBounds::around(FOQParams { q_local: 0, q_import: 0 }, 2, &grid);
        assert_eq!(edge.local_min, 0);
        assert_eq!(edge.local_max, 4000);
        assert_eq!(edge.import_min, 0);
    }

    #[test]
    fn plus_variants_dominate_their_fixed_versions() {
        let config = morocco_base();
        let space = enumerate_states(&config).unwrap();
        let eps = 1e-6;
        let solver = SolverOptions::with_epsilon(eps);

        let foq = FOQParams { q_local: 10_000, q_import: 4000 };
        let foq_gain = exact_policy_gain(&foq_policy(foq, &space), &config).unwrap();
        let plus = build_foq_plus(&config, foq, 2, &solver).unwrap();
        assert!(plus.gain <= foq_gain + 2.0 * eps);

        let tbs = TBSParams { threshold: 10_000, q_import: 4000 };
        let tbs_gain = exact_policy_gain(&tbs_policy(tbs, &space), &config).unwrap();
        let tplus = build_tbs_plus(&config, tbs, 2, &solver).unwrap();
        assert!(tplus.gain <= tbs_gain + 2.0 * eps);

        // width 0 pins TBS+ to TBS exactly
        let t0 = build_tbs_plus(&config, tbs, 0, &solver).unwrap();
        assert_abs_diff_eq!(t0.gain, tbs_gain, epsilon = 2.0 * eps);
    }

    #[test]
    fn tuned_params_round_trip_through_text() {
        let p = TunedParams {
            foq: Some(FOQParams { q_local: 14_000, q_import: 2000 }),
            tbs: Some(TBSParams { threshold: 12_000, q_import: 4000 }),
        };
        let text = p.to_toml().unwrap();
        assert_eq!(TunedParams::from_toml(&text).unwrap(), p);
        assert_eq!(TunedParams::from_toml("").unwrap(), TunedParams::default());
    }
}
