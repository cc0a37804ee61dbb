//! The MDP itself: state enumeration, stage costs, and the stochastic
//! transition kernel combining capacity, yield, and demand randomness.
//!
//! States use the post-arrival convention: pipeline arrivals are folded into
//! inventory before the decision, so each pipeline carries lead-time-minus-one
//! slots.

use crate::error::{Error, Result};
use crate::model::{
    arrival_pmf, capacity_pmf, demand_pmf, CostParams, DiscreteDistribution, ProblemConfig, Quantity,
};
use crate::real::Real;

pub const DEFAULT_STATE_CEILING: u128 = 5_000_000;

/// Post-arrival system state: on-hand stock plus outstanding orders.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State {
    pub inventory: Quantity,
    /// In-transit local deliveries, oldest first; length max(lead_local - 1, 0).
    pub local_pipeline: Vec<Quantity>,
    /// Ordered import quantities awaiting arrival, oldest first; length
    /// lead_import - 1.
    pub import_pipeline: Vec<Quantity>,
}

/// Order decision for one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub local_request: Quantity,
    pub import_order: Quantity,
}

impl Action {
    pub const NONE: Action = Action { local_request: 0, import_order: 0 };
}

/// Dense enumeration of the reachable state set with a bijective integer
/// index.
#[derive(Debug, Clone)]
pub struct StateSpace {
    states: Vec<State>,
    step: Quantity,
    inventory_levels: usize,
    local_levels: usize,
    import_levels: usize,
    local_slots: usize,
    import_slots: usize,
    /// Product of all non-inventory coordinate level counts.
    pipeline_combos: usize,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn states(&self) -> &[State] {
        &self.states
    }
    pub fn state(&self, index: usize) -> &State {
        &self.states[index]
    }
    pub fn local_slots(&self) -> usize {
        self.local_slots
    }
    pub fn import_slots(&self) -> usize {
        self.import_slots
    }
    pub fn pipeline_combos(&self) -> usize {
        self.pipeline_combos
    }
    pub fn step(&self) -> Quantity {
        self.step
    }
    pub fn max_inventory(&self) -> Quantity {
        (self.inventory_levels as i64 - 1) * self.step
    }
    pub fn max_local_order(&self) -> Quantity {
        (self.local_levels as i64 - 1) * self.step
    }
    pub fn max_import_order(&self) -> Quantity {
        (self.import_levels as i64 - 1) * self.step
    }

    pub fn index_of(&self, state: &State) -> usize {
        debug_assert_eq!(state.local_pipeline.len(), self.local_slots);
        debug_assert_eq!(state.import_pipeline.len(), self.import_slots);
        let mut idx = (state.inventory / self.step) as usize;
        for &q in &state.local_pipeline {
            idx = idx * self.local_levels + (q / self.step) as usize;
        }
        for &q in &state.import_pipeline {
            idx = idx * self.import_levels + (q / self.step) as usize;
        }
        idx
    }

    /// Index contribution of the pipeline coordinates alone (inventory digit
    /// zero). Full index = inventory_index * pipeline_combos + pipeline part.
    pub fn pipeline_index(&self, local: &[Quantity], import: &[Quantity]) -> usize {
        let mut idx = 0usize;
        for &q in local {
            idx = idx * self.local_levels + (q / self.step) as usize;
        }
        for &q in import {
            idx = idx * self.import_levels + (q / self.step) as usize;
        }
        idx
    }

    pub fn index_of_initial(&self) -> usize {
        0 // zero inventory, empty pipelines is the lexicographic first state
    }
}

/// Enumerate all states for a configuration with the default ceiling.
pub fn enumerate_states<R: Real>(config: &ProblemConfig<R>) -> Result<StateSpace> {
    enumerate_states_with_ceiling(config, DEFAULT_STATE_CEILING)
}

pub fn enumerate_states_with_ceiling<R: Real>(
    config: &ProblemConfig<R>,
    ceiling: u128,
) -> Result<StateSpace> {
    config.validate()?;
    let grid = &config.grid;
    let inventory_levels = grid.inventory_levels();
    let local_levels = grid.local_order_levels();
    let import_levels = grid.import_order_levels();
    let local_slots = config.lead_local.saturating_sub(1);
    let import_slots = config.lead_import - 1;

    let mut count: u128 = inventory_levels as u128;
    for _ in 0..local_slots {
        count *= local_levels as u128;
    }
    for _ in 0..import_slots {
        count *= import_levels as u128;
    }
    if count > ceiling {
        return Err(Error::StateSpaceTooLarge { count, ceiling });
    }

    let pipeline_combos = (count / inventory_levels as u128) as usize;
    let mut states = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; 1 + local_slots + import_slots];
    loop {
        let inventory = digits[0] as i64 * grid.step;
        let local_pipeline: Vec<Quantity> =
            digits[1..1 + local_slots].iter().map(|&d| d as i64 * grid.step).collect();
        let import_pipeline: Vec<Quantity> =
            digits[1 + local_slots..].iter().map(|&d| d as i64 * grid.step).collect();
        states.push(State { inventory, local_pipeline, import_pipeline });

        // odometer increment, least-significant digit last (lexicographic order)
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            let limit = if pos == 0 {
                inventory_levels
            } else if pos < 1 + local_slots {
                local_levels
            } else {
                import_levels
            };
            digits[pos] += 1;
            if digits[pos] < limit {
                break;
            }
            digits[pos] = 0;
            if pos == 0 {
                let space = StateSpace {
                    states,
                    step: grid.step,
                    inventory_levels,
                    local_levels,
                    import_levels,
                    local_slots,
                    import_slots,
                    pipeline_combos,
                };
                debug_assert_eq!(space.len() as u128, count);
                return Ok(space);
            }
        }
    }
}

/// One outcome of a (state, action) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEntry<R> {
    pub next_index: usize,
    pub prob: R,
    pub stage_cost: R,
}

/// Ordering cost for one period: the local term is charged on the delivered
/// (capacity-censored) quantity, the import term on the full ordered amount.
pub fn order_cost<R: Real>(
    delivered_local: Quantity,
    import_order: Quantity,
    costs: &CostParams<R>,
) -> R {
    let scale = R::from_f64_lossy(1e-3);
    (costs.c_local * R::from_i64(delivered_local).unwrap()
        + costs.c_import * R::from_i64(import_order).unwrap())
        * scale
}

/// Holding/penalty cost on the post-demand net stock. Holding applies to the
/// stored amount, clipped at `max_inventory`; penalty to the shortfall.
pub fn inventory_cost<R: Real>(
    net_after_demand: Quantity,
    costs: &CostParams<R>,
    max_inventory: Quantity,
) -> R {
    let scale = R::from_f64_lossy(1e-3);
    let held = net_after_demand.clamp(0, max_inventory);
    let short = (-net_after_demand).max(0);
    (costs.c_hold * R::from_i64(held).unwrap() + costs.c_penalty * R::from_i64(short).unwrap())
        * scale
}

/// Precomputed kernel pieces for one configuration: pmfs, censored delivery
/// distributions, and arrival pmfs per import quantity.
#[derive(Debug, Clone)]
pub struct Dynamics<R> {
    pub config: ProblemConfig<R>,
    pub space: StateSpace,
    capacity: DiscreteDistribution<R>,
    demand: DiscreteDistribution<R>,
    /// Arrival pmf per import quantity, indexed by quantity / step.
    arrivals: Vec<DiscreteDistribution<R>>,
    /// Censored delivery pmf of min(K, request), indexed by request / step.
    delivered: Vec<DiscreteDistribution<R>>,
    expected_delivered: Vec<R>,
}

impl<R: Real> Dynamics<R> {
    pub fn new(config: ProblemConfig<R>) -> Result<Self> {
        Self::with_ceiling(config, DEFAULT_STATE_CEILING)
    }

    pub fn with_ceiling(config: ProblemConfig<R>, ceiling: u128) -> Result<Self> {
        let space = enumerate_states_with_ceiling(&config, ceiling)?;
        let capacity = capacity_pmf(&config)?;
        let demand = demand_pmf(&config)?;
        let arrivals = config
            .grid
            .import_orders()
            .map(|q| arrival_pmf(q, &config))
            .collect::<Result<Vec<_>>>()?;

        let mut delivered = Vec::with_capacity(config.grid.local_order_levels());
        let mut expected_delivered = Vec::with_capacity(config.grid.local_order_levels());
        for request in config.grid.local_orders() {
            let mut below = Vec::new();
            let mut at_cap = R::zero();
            for (k, p) in capacity.iter() {
                if k < request {
                    below.push((k, p));
                } else {
                    at_cap += p;
                }
            }
            let mut support: Vec<Quantity> = below.iter().map(|&(k, _)| k).collect();
            let mut probs: Vec<R> = below.iter().map(|&(_, p)| p).collect();
            if at_cap > R::zero() {
                support.push(request);
                probs.push(at_cap);
            }
            let pmf = DiscreteDistribution::new(support, probs)?;
            expected_delivered.push(pmf.mean());
            delivered.push(pmf);
        }

        Ok(Self { config, space, capacity, demand, arrivals, delivered, expected_delivered })
    }

    pub fn capacity_pmf(&self) -> &DiscreteDistribution<R> {
        &self.capacity
    }
    pub fn demand_pmf(&self) -> &DiscreteDistribution<R> {
        &self.demand
    }
    pub fn arrival_pmf_for(&self, import_qty: Quantity) -> &DiscreteDistribution<R> {
        &self.arrivals[(import_qty / self.config.grid.step) as usize]
    }
    /// pmf of min(K, request).
    pub fn delivered_pmf(&self, request: Quantity) -> &DiscreteDistribution<R> {
        &self.delivered[(request / self.config.grid.step) as usize]
    }
    pub fn expected_delivered(&self, request: Quantity) -> R {
        self.expected_delivered[(request / self.config.grid.step) as usize]
    }

    pub fn check_action(&self, action: &Action) -> Result<()> {
        let grid = &self.config.grid;
        if !grid.on_grid(action.local_request)
            || !grid.on_grid(action.import_order)
            || action.local_request > grid.max_order_local
            || action.import_order > grid.max_order_import
        {
            return Err(Error::Input(format!("infeasible action {action:?}")));
        }
        Ok(())
    }

    /// Import quantity arriving during the transition out of `state` under
    /// `action`: the oldest pipeline slot, or the fresh order when the import
    /// lead time is one.
    pub fn arriving_import_order(&self, state: &State, action: &Action) -> Quantity {
        if self.space.import_slots() > 0 {
            state.import_pipeline[0]
        } else {
            action.import_order
        }
    }

    /// Full transition row for a (state, action) pair. Entries with identical
    /// next state and stage cost are merged; the row is sorted by
    /// (next_index, stage_cost) and its probabilities sum to one.
    pub fn successor_distribution(&self, state: &State, action: &Action) -> Vec<TransitionEntry<R>> {
        let grid = &self.config.grid;
        let costs = &self.config.costs;
        let lead_local = self.config.lead_local;
        let delivered = self.delivered_pmf(action.local_request);
        let arrivals = self.arrival_pmf_for(self.arriving_import_order(state, action));

        let next_import: Vec<Quantity> = if self.space.import_slots() > 0 {
            let mut v = state.import_pipeline[1..].to_vec();
            v.push(action.import_order);
            v
        } else {
            Vec::new()
        };

        let mut entries: Vec<TransitionEntry<R>> = Vec::new();
        for (dl, p_dl) in delivered.iter() {
            // local pipeline after the shift; dl is appended when the local
            // lead time is at least two
            let (next_local, arriving_local, pre_demand_add) = match lead_local {
                0 => (Vec::new(), 0, dl),
                1 => (Vec::new(), dl, 0),
                _ => {
                    let mut v = state.local_pipeline[1..].to_vec();
                    v.push(dl);
                    (v, state.local_pipeline[0], 0)
                }
            };
            let base = self.space.pipeline_index(&next_local, &next_import);
            let oc = order_cost(dl, action.import_order, costs);
            for (d, p_d) in self.demand.iter() {
                let net = state.inventory + pre_demand_add - d;
                let stage = oc + inventory_cost(net, costs, grid.max_inventory);
                for (a, p_a) in arrivals.iter() {
                    let next_inv = (net.max(0) + arriving_local + a).min(grid.max_inventory);
                    let next_index = (next_inv / grid.step) as usize * self.space.pipeline_combos() + base;
                    entries.push(TransitionEntry { next_index, prob: p_dl * p_d * p_a, stage_cost: stage });
                }
            }
        }

        entries.sort_by(|x, y| {
            x.next_index
                .cmp(&y.next_index)
                .then(x.stage_cost.partial_cmp(&y.stage_cost).unwrap())
        });
        let mut merged: Vec<TransitionEntry<R>> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if last.next_index == e.next_index && last.stage_cost == e.stage_cost => {
                    last.prob += e.prob;
                }
                _ => merged.push(e),
            }
        }
        merged
    }

    /// Expected stage cost plus expected continuation value under `values`.
    pub fn q_value(&self, state: &State, action: &Action, values: &[R]) -> R {
        self.successor_distribution(state, action)
            .iter()
            .map(|e| e.prob * (e.stage_cost + values[e.next_index]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset_config, Country, ScenarioPreset, Storage};
    use approx::assert_abs_diff_eq;

    fn preset(country: Country) -> ProblemConfig<f64> {
        let p = ScenarioPreset::new(country, Storage::SaltCavern, 1.0).unwrap();
        preset_config(&p, 0.5, 0.5, 0.5)
    }

    #[test]
    fn state_counts_per_country() {
        assert_eq!(enumerate_states(&preset(Country::Norway)).unwrap().len(), 21);
        assert_eq!(enumerate_states(&preset(Country::Morocco)).unwrap().len(), 21 * 11);
        assert_eq!(enumerate_states(&preset(Country::Uae)).unwrap().len(), 21 * 11 * 11);
    }

    #[test]
    fn index_is_bijective() {
        let space = enumerate_states(&preset(Country::Uae)).unwrap();
        for (i, s) in space.states().iter().enumerate() {
            assert_eq!(space.index_of(s), i);
        }
    }

    #[test]
    fn ceiling_is_enforced() {
        let config = preset(Country::Uae);
        match enumerate_states_with_ceiling(&config, 100) {
            Err(Error::StateSpaceTooLarge { count, ceiling }) => {
                assert_eq!(count, 2541);
                assert_eq!(ceiling, 100);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn order_cost_examples() {
        let costs = CostParams { c_local: 5.76, c_import: 5.76, c_hold: 2.8, c_penalty: 30.0 };
        assert_abs_diff_eq!(order_cost(2000, 14_000, &costs), 92.16, epsilon = 1e-12);
        assert_abs_diff_eq!(order_cost(0, 0, &costs), 0.0);
    }

    #[test]
    fn inventory_cost_examples() {
        let costs = CostParams { c_local: 5.76, c_import: 5.76, c_hold: 2.8, c_penalty: 30.0 };
        assert_abs_diff_eq!(inventory_cost(-2000, &costs, 40_000), 60.0, epsilon = 1e-12);
        assert_abs_diff_eq!(inventory_cost(4000, &costs, 40_000), 11.2, epsilon = 1e-12);
        assert_abs_diff_eq!(inventory_cost(0, &costs, 40_000), 0.0);
    }

    #[test]
    fn deterministic_config_has_single_transition() {
        let p = ScenarioPreset::new(Country::Morocco, Storage::SaltCavern, 1.0).unwrap();
        let config = preset_config::<f64>(&p, 0.0, 0.0, 0.0);
        let dyn_ = Dynamics::new(config).unwrap();
        let state = dyn_.space.state(0).clone();
        let row = dyn_.successor_distribution(&state, &Action { local_request: 4000, import_order: 6000 });
        assert_eq!(row.len(), 1);
        assert_abs_diff_eq!(row[0].prob, 1.0);
    }

    #[test]
    fn rows_conserve_probability() {
        let config = preset(Country::Morocco);
        let dyn_ = Dynamics::new(config).unwrap();
        for idx in [0usize, 57, 230] {
            let state = dyn_.space.state(idx).clone();
            for action in [Action::NONE, Action { local_request: 6000, import_order: 8000 }] {
                let total: f64 = dyn_.successor_distribution(&state, &action).iter().map(|e| e.prob).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn pipelined_import_arrives_with_yield() {
        // Morocco base: state (inventory 2000, import pipeline [8000]),
        // action (0, 0): the arriving amount comes from arrival_pmf(8000)
        let config = preset(Country::Morocco);
        let dyn_ = Dynamics::new(config).unwrap();
        let state = State { inventory: 2000, local_pipeline: vec![], import_pipeline: vec![8000] };
        let row = dyn_.successor_distribution(&state, &Action::NONE);

        // brute-force oracle over the joint (d, a) support
        let demand = dyn_.demand_pmf().clone();
        let arrivals = dyn_.arrival_pmf_for(8000).clone();
        assert_eq!(arrivals.support(), &[6000, 8000]);
        let mut expect = std::collections::BTreeMap::new();
        for (d, pd) in demand.iter() {
            for (a, pa) in arrivals.iter() {
                let net: i64 = 2000 - d;
                let next_inv = (net.max(0) + a).min(40_000);
                let key = (next_inv / 2000) as usize * dyn_.space.pipeline_combos();
                *expect.entry(key).or_insert(0.0) += pd * pa;
            }
        }
        let mut got = std::collections::BTreeMap::new();
        for e in &row {
            *got.entry(e.next_index).or_insert(0.0) += e.prob;
        }
        assert_eq!(got.len(), expect.len());
        for (k, p) in expect {
            assert_abs_diff_eq!(got[&k], p, epsilon = 1e-12);
        }
    }

    #[test]
    fn q_value_with_zero_values_is_expected_stage_cost() {
        let config = preset(Country::Morocco);
        let dyn_ = Dynamics::new(config).unwrap();
        let values = vec![0.0; dyn_.space.len()];
        let state = State { inventory: 14_000, local_pipeline: vec![], import_pipeline: vec![0] };
        let q = dyn_.q_value(&state, &Action::NONE, &values);
        // hand sum over the 9-point demand pmf
        let expect: f64 = dyn_
            .demand_pmf()
            .iter()
            .map(|(d, p)| p * inventory_cost(14_000 - d, &dyn_.config.costs, 40_000))
            .sum();
        assert_abs_diff_eq!(q, expect, epsilon = 1e-12);
    }

    #[test]
    fn capacity_censoring_saturates() {
        // requests above the capacity support are indistinguishable from
        // requesting the support maximum
        let mut config = preset(Country::Morocco);
        config.grid.max_order_local = 24_000;
        let dyn_ = Dynamics::new(config).unwrap();
        let state = dyn_.space.state(0).clone();
        let cap_max = dyn_.capacity_pmf().max_support();
        let at_cap = Action { local_request: cap_max, import_order: 0 };
        let above = Action { local_request: cap_max + 4000, import_order: 0 };
        assert_eq!(
            dyn_.successor_distribution(&state, &at_cap),
            dyn_.successor_distribution(&state, &above)
        );
    }

    #[test]
    fn yield_pass_through() {
        let p = ScenarioPreset::new(Country::Morocco, Storage::SaltCavern, 1.0).unwrap();
        let mut config = preset_config::<f64>(&p, 0.5, 0.5, 0.0);
        config.yield_loss.mean = 0.0;
        config.yield_loss.lower = 0.0;
        let dyn_ = Dynamics::new(config).unwrap();
        for q in dyn_.config.grid.import_orders() {
            assert_eq!(dyn_.arrival_pmf_for(q).support(), &[q]);
        }
    }

    #[test]
    fn penalty_monotone_in_inventory_before_crossover() {
        // with values = 0, the do-nothing q-value is non-increasing in
        // inventory until holding overtakes penalty
        let config = preset(Country::Norway);
        let dyn_ = Dynamics::new(config).unwrap();
        let values = vec![0.0; dyn_.space.len()];
        let mut prev = f64::INFINITY;
        for s in dyn_.space.states().iter().take(8) {
            let q = dyn_.q_value(s, &Action::NONE, &values);
            assert!(q <= prev + 1e-12, "q-value rose too early at inventory {}", s.inventory);
            prev = q;
        }
    }
}
