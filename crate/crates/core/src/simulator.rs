//! Seeded Monte Carlo evaluation of a policy under the true dynamics.
//!
//! Randomness comes from a counter-based stream keyed by (seed, period,
//! variable tag), so any two runs with the same seed see exactly the same
//! capacity, demand, and yield draws regardless of which policy is being
//! evaluated or in what order runs execute — common random numbers for free.

use crate::dynamics::{inventory_cost, order_cost, Dynamics, State};
use crate::error::{Error, Result};
use crate::model::{ProblemConfig, Quantity};
use crate::real::Real;
use crate::solver::{ActionRestriction, Policy};

/// 95% two-sided t quantile with 99 degrees of freedom (100 batches).
const T_95_DF99: f64 = 1.9842;

const TAG_CAPACITY: u64 = 0;
const TAG_DEMAND: u64 = 1;
const TAG_YIELD: u64 = 2;

/// splitmix64 finalizer; full-avalanche 64-bit mix.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-cell seed so independent experiment cells get
/// uncorrelated streams from one master seed.
pub fn derive_stream_seed(master: u64, index: u64) -> u64 {
    mix(master ^ mix(index.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

/// Uniform draw in [0, 1) for (seed, period, tag), independent of call order.
#[inline]
pub fn counter_uniform(seed: u64, period: u64, tag: u64) -> f64 {
    let z = mix(seed ^ mix(period ^ tag.wrapping_mul(0xA076_1D64_78BD_642F)));
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Run-length and seeding parameters for one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub periods: usize,
    /// Leading periods excluded from every average.
    pub warmup: usize,
    pub seed: u64,
    /// State index at period zero.
    pub initial_state: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { periods: 100_000, warmup: 1_000, seed: 0, initial_state: 0 }
    }
}

impl SimOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.periods {
            return Err(Error::Config(format!(
                "warmup ({}) must be smaller than periods ({})",
                self.warmup, self.periods
            )));
        }
        Ok(())
    }
}

/// Long-run averages from one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationReport<R> {
    /// Average cost per period after warm-up.
    pub avg_cost: R,
    /// 95% batch-means confidence half-width on `avg_cost`.
    pub ci_halfwidth: R,
    /// Fraction of supply entering inventory that came from the local channel.
    pub local_share: R,
    pub import_share: R,
    /// Fraction of demand satisfied from stock.
    pub fill_rate: R,
    /// Fraction of periods where inventory was clipped at the storage bound.
    pub cap_hit_rate: R,
    pub avg_inventory: R,
}

impl<R: Real> SimulationReport<R> {
    pub const CSV_HEADER: &'static str =
        "avg_cost,ci_halfwidth,local_share,import_share,fill_rate,cap_hit_rate,avg_inventory";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.1}",
            self.avg_cost.to_f64().unwrap_or(f64::NAN),
            self.ci_halfwidth.to_f64().unwrap_or(f64::NAN),
            self.local_share.to_f64().unwrap_or(f64::NAN),
            self.import_share.to_f64().unwrap_or(f64::NAN),
            self.fill_rate.to_f64().unwrap_or(f64::NAN),
            self.cap_hit_rate.to_f64().unwrap_or(f64::NAN),
            self.avg_inventory.to_f64().unwrap_or(f64::NAN),
        )
    }
}

/// Simulate `policy` on a freshly built model.
pub fn simulate<R: Real>(
    policy: &Policy,
    config: &ProblemConfig<R>,
    options: &SimOptions,
) -> Result<SimulationReport<R>> {
    let dynamics = Dynamics::new(config.clone())?;
    simulate_prepared(policy, &dynamics, options)
}

/// Simulate `policy` reusing precomputed dynamics (pmfs and state space).
pub fn simulate_prepared<R: Real>(
    policy: &Policy,
    dynamics: &Dynamics<R>,
    options: &SimOptions,
) -> Result<SimulationReport<R>> {
    options.validate()?;
    let space = &dynamics.space;
    if policy.len() != space.len() {
        return Err(Error::Input(format!(
            "policy covers {} states, state space has {}",
            policy.len(),
            space.len()
        )));
    }
    if options.initial_state >= space.len() {
        return Err(Error::Input(format!(
            "initial state {} out of range (|S| = {})",
            options.initial_state,
            space.len()
        )));
    }
    for a in &policy.actions {
        dynamics.check_action(a)?;
    }

    let config = &dynamics.config;
    let grid = &config.grid;
    let costs = &config.costs;
    let lead_local = config.lead_local;
    let seed = options.seed;
    let counted = options.periods - options.warmup;
    let batches = counted.min(100);

    let mut state: State = space.state(options.initial_state).clone();
    let mut total_cost = R::zero();
    let mut batch_sums = vec![R::zero(); batches];
    let mut batch_sizes = vec![0usize; batches];
    let mut local_in_sum: i64 = 0;
    let mut import_in_sum: i64 = 0;
    let mut demand_sum: i64 = 0;
    let mut sold_sum: i64 = 0;
    let mut clip_count: usize = 0;
    let mut inventory_sum: i64 = 0;

    for t in 0..options.periods {
        let idx = space.index_of(&state);
        let action = policy.action(idx);

        let capacity = dynamics
            .capacity_pmf()
            .quantile(R::from_f64_lossy(counter_uniform(seed, t as u64, TAG_CAPACITY)));
        let demand = dynamics
            .demand_pmf()
            .quantile(R::from_f64_lossy(counter_uniform(seed, t as u64, TAG_DEMAND)));
        let delivered = capacity.min(action.local_request);
        let arriving_order = dynamics.arriving_import_order(&state, &action);
        // the yield draw is consumed at arrival time; the same uniform serves
        // every possible arriving quantity (common random numbers)
        let arrived = dynamics
            .arrival_pmf_for(arriving_order)
            .quantile(R::from_f64_lossy(counter_uniform(seed, t as u64, TAG_YIELD)));

        let (pre_add, post_local_add, next_local): (Quantity, Quantity, Vec<Quantity>) =
            match lead_local {
                0 => (delivered, 0, Vec::new()),
                1 => (0, delivered, Vec::new()),
                _ => {
                    let mut v = state.local_pipeline[1..].to_vec();
                    v.push(delivered);
                    (0, state.local_pipeline[0], v)
                }
            };
        let next_import: Vec<Quantity> = if space.import_slots() > 0 {
            let mut v = state.import_pipeline[1..].to_vec();
            v.push(action.import_order);
            v
        } else {
            Vec::new()
        };

        let pre = state.inventory + pre_add;
        let net = pre - demand;
        let cost = order_cost(delivered, action.import_order, costs)
            + inventory_cost(net, costs, grid.max_inventory);
        let unclipped = net.max(0) + post_local_add + arrived;
        let next_inv = unclipped.min(grid.max_inventory);

        if t >= options.warmup {
            let k = t - options.warmup;
            total_cost += cost;
            let b = k * batches / counted;
            batch_sums[b] += cost;
            batch_sizes[b] += 1;
            local_in_sum += pre_add + post_local_add;
            import_in_sum += arrived;
            demand_sum += demand;
            sold_sum += demand.min(pre);
            if unclipped > grid.max_inventory {
                clip_count += 1;
            }
            inventory_sum += next_inv;
        }

        state = State { inventory: next_inv, local_pipeline: next_local, import_pipeline: next_import };
    }

    let n = R::from_usize(counted).unwrap();
    let avg_cost = total_cost / n;

    let ci_halfwidth = if batches >= 2 {
        let means: Vec<R> = batch_sums
            .iter()
            .zip(&batch_sizes)
            .map(|(s, &c)| *s / R::from_usize(c).unwrap())
            .collect();
        let m = means.iter().copied().sum::<R>() / R::from_usize(batches).unwrap();
        let var = means.iter().map(|&x| (x - m) * (x - m)).sum::<R>()
            / R::from_usize(batches - 1).unwrap();
        R::from_f64_lossy(T_95_DF99) * (var / R::from_usize(batches).unwrap()).sqrt()
    } else {
        R::zero()
    };

    let supply = local_in_sum + import_in_sum;
    let (local_share, import_share) = if supply > 0 {
        let s = R::from_i64(supply).unwrap();
        (
            R::from_i64(local_in_sum).unwrap() / s,
            R::from_i64(import_in_sum).unwrap() / s,
        )
    } else {
        (R::zero(), R::zero())
    };
    let fill_rate = if demand_sum > 0 {
        R::from_i64(sold_sum).unwrap() / R::from_i64(demand_sum).unwrap()
    } else {
        R::one()
    };

    Ok(SimulationReport {
        avg_cost,
        ci_halfwidth,
        local_share,
        import_share,
        fill_rate,
        cap_hit_rate: R::from_usize(clip_count).unwrap() / n,
        avg_inventory: R::from_i64(inventory_sum).unwrap() / n,
    })
}

/// One benchmark configuration: the model to solve and the action restriction
/// to solve it under. The resulting policy is always evaluated by simulation
/// under the *true* dynamics.
#[derive(Debug, Clone)]
pub struct BenchmarkVariant<R> {
    pub label: &'static str,
    pub config: ProblemConfig<R>,
    pub restriction: ActionRestriction,
}

/// The five benchmark variants: two single-sourcing restrictions and
/// three models that replace a stochastic input with a point mass at its
/// mean.
pub fn build_benchmark_variants<R: Real>(config: &ProblemConfig<R>) -> Vec<BenchmarkVariant<R>> {
    let mut no_capacity = config.clone();
    no_capacity.capacity = config.capacity.at_mean();
    let mut no_yield = config.clone();
    no_yield.yield_loss = config.yield_loss.at_mean();
    let mut no_both = config.clone();
    no_both.capacity = config.capacity.at_mean();
    no_both.yield_loss = config.yield_loss.at_mean();

    vec![
        BenchmarkVariant {
            label: "OnlyLocal",
            config: config.clone(),
            restriction: ActionRestriction::LocalOnly,
        },
        BenchmarkVariant {
            label: "OnlyImport",
            config: config.clone(),
            restriction: ActionRestriction::ImportOnly,
        },
        BenchmarkVariant { label: "NoNo", config: no_both, restriction: ActionRestriction::Full },
        BenchmarkVariant { label: "YesNo", config: no_yield, restriction: ActionRestriction::Full },
        BenchmarkVariant {
            label: "NoYes",
            config: no_capacity,
            restriction: ActionRestriction::Full,
        },
    ]
}

/// Percentage cost deviation of a variant relative to the optimal policy,
/// both simulated on the same true model with the same seed. `None` when the
/// optimal average cost is zero.
pub fn benchmark_deviation<R: Real>(
    opt_report: &SimulationReport<R>,
    variant_report: &SimulationReport<R>,
) -> Option<R> {
    if opt_report.avg_cost == R::zero() {
        return None;
    }
    Some(
        R::from_f64_lossy(100.0) * (variant_report.avg_cost - opt_report.avg_cost)
            / opt_report.avg_cost,
    )
}
