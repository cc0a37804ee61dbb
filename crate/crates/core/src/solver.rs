//! Average-cost policy computation: relative value iteration over a
//! precomputed transition kernel, fixed-policy evaluation, and an exhaustive
//! enumeration oracle for desk-scale verification.

use rayon::prelude::*;

use crate::dynamics::{inventory_cost, Action, Dynamics, State};
use crate::error::{Error, Result};
use crate::model::{ProblemConfig, Quantity};
use crate::real::Real;

/// Stopping parameters for the span-seminorm iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<R> {
    /// Span stopping threshold in cost units.
    pub epsilon: R,
    pub max_iterations: usize,
    /// State index whose value is pinned to zero each sweep.
    pub reference_state: usize,
}

impl<R: Real> Default for SolverOptions<R> {
    fn default() -> Self {
        Self {
            epsilon: R::from_f64_lossy(1e-4),
            max_iterations: 100_000,
            reference_state: 0,
        }
    }
}

impl<R: Real> SolverOptions<R> {
    pub fn with_epsilon(epsilon: R) -> Self {
        Self { epsilon, ..Self::default() }
    }
}

/// Total mapping from state index to action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub actions: Vec<Action>,
}

impl Policy {
    pub fn action(&self, state_index: usize) -> Action {
        self.actions[state_index]
    }
    pub fn len(&self) -> usize {
        self.actions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Outcome of a converged solve.
#[derive(Debug, Clone)]
pub struct SolveResult<R> {
    pub policy: Policy,
    /// Long-run average cost per period.
    pub gain: R,
    /// Relative values, zero at the reference state.
    pub bias: Vec<R>,
    pub span_residual: R,
    pub iterations: usize,
}

/// Constraint on the admissible action set, used for heuristic solves and
/// single-sourcing benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionRestriction {
    Full,
    Fixed { local: Quantity, import: Quantity },
    Box { local_min: Quantity, local_max: Quantity, import_min: Quantity, import_max: Quantity },
    /// Threshold rule for local orders, fixed import.
    Tbs { threshold: Quantity, q_import: Quantity },
    /// Threshold rule for local orders, import free within a range.
    TbsPlus { threshold: Quantity, import_min: Quantity, import_max: Quantity },
    LocalOnly,
    ImportOnly,
}

impl ActionRestriction {
    pub fn validate<R: Real>(&self, config: &ProblemConfig<R>) -> Result<()> {
        let grid = &config.grid;
        let check = |name: &str, q: Quantity, max: Quantity| -> Result<()> {
            if !grid.on_grid(q) || q > max {
                return Err(Error::Config(format!(
                    "restriction bound {name} = {q} off grid or above {max}"
                )));
            }
            Ok(())
        };
        match *self {
            ActionRestriction::Full | ActionRestriction::LocalOnly | ActionRestriction::ImportOnly => Ok(()),
            ActionRestriction::Fixed { local, import } => {
                check("local", local, grid.max_order_local)?;
                check("import", import, grid.max_order_import)
            }
            ActionRestriction::Box { local_min, local_max, import_min, import_max } => {
                check("local_min", local_min, grid.max_order_local)?;
                check("local_max", local_max, grid.max_order_local)?;
                check("import_min", import_min, grid.max_order_import)?;
                check("import_max", import_max, grid.max_order_import)?;
                if local_min > local_max || import_min > import_max {
                    return Err(Error::Config("restriction box has min > max".into()));
                }
                Ok(())
            }
            ActionRestriction::Tbs { threshold, q_import } => {
                if threshold < 0 || threshold > grid.max_inventory || !grid.on_grid(threshold) {
                    return Err(Error::Config(format!("TBS threshold {threshold} out of range")));
                }
                check("q_import", q_import, grid.max_order_import)
            }
            ActionRestriction::TbsPlus { threshold, import_min, import_max } => {
                if threshold < 0 || threshold > grid.max_inventory || !grid.on_grid(threshold) {
                    return Err(Error::Config(format!("TBS threshold {threshold} out of range")));
                }
                check("import_min", import_min, grid.max_order_import)?;
                check("import_max", import_max, grid.max_order_import)?;
                if import_min > import_max {
                    return Err(Error::Config("restriction box has min > max".into()));
                }
                Ok(())
            }
        }
    }

    /// The TBS local order for a given on-hand inventory.
    pub fn tbs_local_order(threshold: Quantity, inventory: Quantity, max_order_local: Quantity) -> Quantity {
        (threshold - inventory).max(0).min(max_order_local)
    }

    /// Admissible actions for a state, in lexicographic order
    /// (local ascending, then import ascending).
    pub fn actions_for<R: Real>(&self, state: &State, config: &ProblemConfig<R>) -> Vec<Action> {
        let grid = &config.grid;
        let step = grid.step;
        let range = |lo: Quantity, hi: Quantity| (lo / step..=hi / step).map(move |k| k * step);
        match *self {
            ActionRestriction::Full => range(0, grid.max_order_local)
                .flat_map(|l| range(0, grid.max_order_import).map(move |i| Action { local_request: l, import_order: i }))
                .collect(),
            ActionRestriction::Fixed { local, import } => {
                vec![Action { local_request: local, import_order: import }]
            }
            ActionRestriction::Box { local_min, local_max, import_min, import_max } => range(local_min, local_max)
                .flat_map(|l| range(import_min, import_max).map(move |i| Action { local_request: l, import_order: i }))
                .collect(),
            ActionRestriction::Tbs { threshold, q_import } => {
                let l = Self::tbs_local_order(threshold, state.inventory, grid.max_order_local);
                vec![Action { local_request: l, import_order: q_import }]
            }
            ActionRestriction::TbsPlus { threshold, import_min, import_max } => {
                let l = Self::tbs_local_order(threshold, state.inventory, grid.max_order_local);
                range(import_min, import_max)
                    .map(|i| Action { local_request: l, import_order: i })
                    .collect()
            }
            ActionRestriction::LocalOnly => range(0, grid.max_order_local)
                .map(|l| Action { local_request: l, import_order: 0 })
                .collect(),
            ActionRestriction::ImportOnly => range(0, grid.max_order_import)
                .map(|i| Action { local_request: 0, import_order: i })
                .collect(),
        }
    }

    fn is_state_dependent(&self) -> bool {
        matches!(self, ActionRestriction::Tbs { .. } | ActionRestriction::TbsPlus { .. })
    }
}

// ---------------------------------------------------------------------------
// Kernel
// ---------------------------------------------------------------------------

/// How the local channel couples into the inventory recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LocalMode {
    /// Zero local lead time: the delivered amount joins inventory before
    /// demand.
    Immediate,
    /// One-period lead time: the delivered amount joins after demand, in the
    /// same transition.
    NextPeriod,
    /// Longer lead times: the oldest pipeline slot joins after demand; the
    /// fresh delivery enters the pipeline.
    Pipelined,
}

/// One marginalized inventory-transition row: expected one-period inventory
/// cost and the distribution of the next on-hand level.
#[derive(Debug, Clone)]
struct KernelEntry<R> {
    exp_inv_cost: R,
    row: Vec<(u32, R)>,
}

/// Per-state quantities that never change across sweeps.
#[derive(Debug, Clone, Copy)]
struct StatePrep {
    inv_idx: u32,
    /// Oldest import pipeline slot (quantity index); unused when the import
    /// pipeline is empty.
    oldest_idx: u32,
    /// Mixed-radix index of the import pipeline tail (slots 1..).
    import_prefix: u32,
    /// Mixed-radix index of the local pipeline tail (slots 1..).
    local_prefix: u32,
    /// Oldest local pipeline slot (quantity index), Pipelined mode only.
    det_add_idx: u32,
}

/// Solve engine: dynamics plus the marginalized kernel, shared by value
/// iteration, policy evaluation, and the enumeration oracle.
pub struct Engine<R> {
    pub dynamics: Dynamics<R>,
    mode: LocalMode,
    kernel: Vec<KernelEntry<R>>,
    /// Expected local ordering cost per request level.
    local_cost: Vec<R>,
    /// Import ordering cost per order level.
    import_cost: Vec<R>,
    /// Delivered pmf per request level, as (quantity index, prob).
    delivered_idx: Vec<Vec<(u32, R)>>,
    prep: Vec<StatePrep>,
    import_levels: usize,
    local_levels: usize,
    /// import_levels ^ import_slots, the stride of the local pipeline block.
    import_block: usize,
}

impl<R: Real> Engine<R> {
    pub fn new(config: ProblemConfig<R>) -> Result<Self> {
        let dynamics = Dynamics::new(config)?;
        Self::from_dynamics(dynamics)
    }

    pub fn from_dynamics(dynamics: Dynamics<R>) -> Result<Self> {
        let config = &dynamics.config;
        let grid = &config.grid;
        let space = &dynamics.space;
        let mode = match config.lead_local {
            0 => LocalMode::Immediate,
            1 => LocalMode::NextPeriod,
            _ => LocalMode::Pipelined,
        };
        let inv_levels = grid.inventory_levels();
        let local_levels = grid.local_order_levels();
        let import_levels = grid.import_order_levels();
        let step = grid.step;
        let scale = R::from_f64_lossy(1e-3);

        let local_cost: Vec<R> = grid
            .local_orders()
            .map(|q| config.costs.c_local * dynamics.expected_delivered(q) * scale)
            .collect();
        let import_cost: Vec<R> = grid
            .import_orders()
            .map(|q| config.costs.c_import * R::from_i64(q).unwrap() * scale)
            .collect();
        let delivered_idx: Vec<Vec<(u32, R)>> = grid
            .local_orders()
            .map(|q| {
                dynamics
                    .delivered_pmf(q)
                    .iter()
                    .map(|(dl, p)| ((dl / step) as u32, p))
                    .collect()
            })
            .collect();

        // kernel[((inv * local_levels) + x) * import_levels + oldest]:
        //   x is the local request (Immediate/NextPeriod) or the oldest local
        //   pipeline slot (Pipelined)
        let mut kernel = Vec::with_capacity(inv_levels * local_levels * import_levels);
        let mut acc = vec![R::zero(); inv_levels];
        for inv_idx in 0..inv_levels {
            let s0 = inv_idx as i64 * step;
            for x_idx in 0..local_levels {
                let x_qty = x_idx as i64 * step;
                for oldest_idx in 0..import_levels {
                    let arrivals = dynamics.arrival_pmf_for(oldest_idx as i64 * step);
                    for p in acc.iter_mut() {
                        *p = R::zero();
                    }
                    let mut exp_inv_cost = R::zero();
                    // (pre-demand inventory, prob) and (post-demand addition, prob)
                    let pre: Vec<(Quantity, R)>;
                    let post: Vec<(Quantity, R)>;
                    match mode {
                        LocalMode::Immediate => {
                            pre = dynamics
                                .delivered_pmf(x_qty)
                                .iter()
                                .map(|(dl, p)| (s0 + dl, p))
                                .collect();
                            post = arrivals.iter().collect();
                        }
                        LocalMode::NextPeriod => {
                            pre = vec![(s0, R::one())];
                            post = dynamics
                                .delivered_pmf(x_qty)
                                .iter()
                                .flat_map(|(dl, p1)| arrivals.iter().map(move |(a, p2)| (dl + a, p1 * p2)))
                                .collect();
                        }
                        LocalMode::Pipelined => {
                            pre = vec![(s0, R::one())];
                            post = arrivals.iter().map(|(a, p)| (x_qty + a, p)).collect();
                        }
                    }
                    for &(pre_inv, p_pre) in &pre {
                        for (d, p_d) in dynamics.demand_pmf().iter() {
                            let net = pre_inv - d;
                            exp_inv_cost += p_pre * p_d * inventory_cost(net, &config.costs, grid.max_inventory);
                            let kept = net.max(0);
                            for &(add, p_add) in &post {
                                let next = (kept + add).min(grid.max_inventory);
                                acc[(next / step) as usize] += p_pre * p_d * p_add;
                            }
                        }
                    }
                    let row: Vec<(u32, R)> = acc
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p > R::zero())
                        .map(|(i, p)| (i as u32, *p))
                        .collect();
                    kernel.push(KernelEntry { exp_inv_cost, row });
                }
            }
        }

        let import_block = import_levels.pow(space.import_slots() as u32);
        let prep: Vec<StatePrep> = space
            .states()
            .iter()
            .map(|s| {
                let oldest_idx = if space.import_slots() > 0 {
                    (s.import_pipeline[0] / step) as u32
                } else {
                    0
                };
                let mut import_prefix = 0u32;
                if space.import_slots() > 0 {
                    for &q in &s.import_pipeline[1..] {
                        import_prefix = import_prefix * import_levels as u32 + (q / step) as u32;
                    }
                }
                let mut local_prefix = 0u32;
                let mut det_add_idx = 0u32;
                if space.local_slots() > 0 {
                    det_add_idx = (s.local_pipeline[0] / step) as u32;
                    for &q in &s.local_pipeline[1..] {
                        local_prefix = local_prefix * local_levels as u32 + (q / step) as u32;
                    }
                }
                StatePrep {
                    inv_idx: (s.inventory / step) as u32,
                    oldest_idx,
                    import_prefix,
                    local_prefix,
                    det_add_idx,
                }
            })
            .collect();

        Ok(Self {
            dynamics,
            mode,
            kernel,
            local_cost,
            import_cost,
            delivered_idx,
            prep,
            import_levels,
            local_levels,
            import_block,
        })
    }

    #[inline]
    fn kernel_at(&self, inv_idx: u32, x_idx: u32, oldest_idx: u32) -> &KernelEntry<R> {
        let i = (inv_idx as usize * self.local_levels + x_idx as usize) * self.import_levels
            + oldest_idx as usize;
        &self.kernel[i]
    }

    /// Q(s, a) under continuation values `v` (indexed by state).
    #[inline]
    fn q_of(&self, state_index: usize, action: Action, v: &[R]) -> R {
        let grid = &self.dynamics.config.grid;
        let step = grid.step;
        let sp = &self.prep[state_index];
        let space = &self.dynamics.space;
        let combos = space.pipeline_combos();
        let ql_idx = (action.local_request / step) as u32;
        let qi_idx = (action.import_order / step) as u32;
        let has_import_pipe = space.import_slots() > 0;
        let oldest_idx = if has_import_pipe { sp.oldest_idx } else { qi_idx };
        let import_part = if has_import_pipe {
            sp.import_prefix as usize * self.import_levels + qi_idx as usize
        } else {
            0
        };

        let mut q = self.local_cost[ql_idx as usize] + self.import_cost[qi_idx as usize];
        match self.mode {
            LocalMode::Immediate | LocalMode::NextPeriod => {
                let e = self.kernel_at(sp.inv_idx, ql_idx, oldest_idx);
                q += e.exp_inv_cost;
                let base = import_part;
                for &(inv, p) in &e.row {
                    q += p * v[inv as usize * combos + base];
                }
            }
            LocalMode::Pipelined => {
                let e = self.kernel_at(sp.inv_idx, sp.det_add_idx, oldest_idx);
                q += e.exp_inv_cost;
                for &(dl_idx, p_dl) in &self.delivered_idx[ql_idx as usize] {
                    let local_part =
                        sp.local_prefix as usize * self.local_levels + dl_idx as usize;
                    let base = local_part * self.import_block + import_part;
                    let mut w = R::zero();
                    for &(inv, p) in &e.row {
                        w += p * v[inv as usize * combos + base];
                    }
                    q += p_dl * w;
                }
            }
        }
        q
    }

    /// One synchronous Bellman sweep: minimizing value and lexicographically
    /// first argmin per state.
    fn sweep<'a, F>(&self, v: &[R], actions_of: F) -> Vec<(R, Action)>
    where
        F: Fn(usize) -> &'a [Action] + Sync,
    {
        let tie_tol_scale = R::epsilon() * R::from_f64_lossy(4096.0);
        (0..self.prep.len())
            .into_par_iter()
            .map(|s| {
                let actions = actions_of(s);
                let mut best = self.q_of(s, actions[0], v);
                let mut best_action = actions[0];
                for &a in &actions[1..] {
                    let q = self.q_of(s, a, v);
                    // strict improvement beyond a relative tolerance, so the
                    // lexicographically first minimizer wins exact ties and
                    // the tie-break survives uniform cost rescaling
                    if q < best - tie_tol_scale * (R::one() + best.abs()) {
                        best = q;
                        best_action = a;
                    }
                }
                (best, best_action)
            })
            .collect()
    }

    /// Span-seminorm iteration with reference-state normalization. Returns
    /// (gain, bias, policy, span, iterations).
    fn iterate<'a, F>(
        &self,
        actions_of: F,
        epsilon: R,
        max_iterations: usize,
        reference: usize,
    ) -> std::result::Result<(R, Vec<R>, Vec<Action>, R, usize), (usize, R)>
    where
        F: Fn(usize) -> &'a [Action] + Sync + Copy,
    {
        let n = self.prep.len();
        let mut v = vec![R::zero(); n];
        let mut span = R::infinity();
        for it in 1..=max_iterations {
            let new = self.sweep(&v, actions_of);
            let mut lo = R::infinity();
            let mut hi = R::neg_infinity();
            for (s, &(w, _)) in new.iter().enumerate() {
                let d = w - v[s];
                lo = lo.min(d);
                hi = hi.max(d);
            }
            span = hi - lo;
            let gain = (hi + lo) * R::from_f64_lossy(0.5);
            let reference_value = new[reference].0;
            if span <= epsilon {
                let bias: Vec<R> = new.iter().map(|&(w, _)| w - reference_value).collect();
                let policy: Vec<Action> = new.iter().map(|&(_, a)| a).collect();
                return Ok((gain, bias, policy, span, it));
            }
            for (s, &(w, _)) in new.iter().enumerate() {
                v[s] = w - reference_value;
            }
        }
        Err((max_iterations, span))
    }

    /// Long-run average cost of a fixed policy starting from the empty
    /// system (state index 0), by direct chain analysis: restrict to the
    /// states reachable from the start, find the closed communicating
    /// classes, solve each class's stationary distribution, and combine the
    /// class cost rates through the absorption system for the transient
    /// states. Exact up to linear-solve round-off, and well defined even
    /// when the policy's chain has several closed classes or is periodic
    /// (constant policies on deterministic instances routinely do).
    pub fn evaluate_policy(&self, actions: &[Action]) -> Result<R> {
        let dynamics = &self.dynamics;
        let space = &dynamics.space;
        let n = space.len();

        // expected stage cost and merged transition row, for reachable states
        let mut rows: Vec<Option<(R, Vec<(usize, R)>)>> = vec![None; n];
        let mut reachable: Vec<usize> = Vec::new();
        let mut seen = vec![false; n];
        let mut frontier = vec![0usize];
        seen[0] = true;
        while let Some(s) = frontier.pop() {
            let mut cost = R::zero();
            let mut tr: Vec<(usize, R)> = Vec::new();
            for e in dynamics.successor_distribution(space.state(s), &actions[s]) {
                cost += e.prob * e.stage_cost;
                match tr.iter_mut().find(|(j, _)| *j == e.next_index) {
                    Some((_, p)) => *p += e.prob,
                    None => tr.push((e.next_index, e.prob)),
                }
            }
            for &(j, _) in &tr {
                if !seen[j] {
                    seen[j] = true;
                    frontier.push(j);
                }
            }
            rows[s] = Some((cost, tr));
            reachable.push(s);
        }

        let comp = strongly_connected_components(&reachable, &rows);
        let n_comps = comp.iter().filter_map(|c| *c).max().map_or(0, |m| m + 1);

        // a class is closed iff no transition leaves it
        let mut closed = vec![true; n_comps];
        for &s in &reachable {
            let (_, tr) = rows[s].as_ref().unwrap();
            for &(j, _) in tr {
                if comp[j] != comp[s] {
                    closed[comp[s].unwrap()] = false;
                }
            }
        }

        // cost rate of each closed class from its stationary distribution
        let mut class_gain = vec![R::zero(); n_comps];
        for c in 0..n_comps {
            if !closed[c] {
                continue;
            }
            let members: Vec<usize> =
                reachable.iter().copied().filter(|&s| comp[s] == Some(c)).collect();
            let m = members.len();
            let pos = |s: usize| members.iter().position(|&x| x == s).unwrap();
            // pi^T P = pi^T with the last balance equation replaced by the
            // normalization sum(pi) = 1
            let mut a = vec![vec![R::zero(); m]; m];
            let mut b = vec![R::zero(); m];
            for (i, &s) in members.iter().enumerate() {
                a[i][i] = -R::one();
                let (_, tr) = rows[s].as_ref().unwrap();
                for &(j, p) in tr {
                    a[pos(j)][i] += p;
                }
            }
            for v in a[m - 1].iter_mut() {
                *v = R::one();
            }
            b[m - 1] = R::one();
            let pi = solve_dense(a, b)?;
            class_gain[c] = members
                .iter()
                .enumerate()
                .map(|(i, &s)| pi[i] * rows[s].as_ref().unwrap().0)
                .sum();
        }

        if let Some(c) = comp[0] {
            if closed[c] {
                return Ok(class_gain[c]);
            }
        }

        // expected long-run rate from each transient state: h = Q h + b,
        // where b collects one-step entries into the closed classes weighted
        // by their rates
        let transient: Vec<usize> =
            reachable.iter().copied().filter(|&s| !closed[comp[s].unwrap()]).collect();
        let m = transient.len();
        let pos = |s: usize| transient.iter().position(|&x| x == s);
        let mut a = vec![vec![R::zero(); m]; m];
        let mut b = vec![R::zero(); m];
        for (i, &s) in transient.iter().enumerate() {
            a[i][i] = R::one();
            let (_, tr) = rows[s].as_ref().unwrap();
            for &(j, p) in tr {
                match pos(j) {
                    Some(k) => a[i][k] = a[i][k] - p,
                    None => b[i] += p * class_gain[comp[j].unwrap()],
                }
            }
        }
        let h = solve_dense(a, b)?;
        Ok(h[pos(0).unwrap()])
    }
}

/// Component index per state for the subgraph spanned by `rows`, restricted
/// to `reachable`; `None` for states outside it. Kosaraju's two-pass scheme
/// with iterative depth-first search.
fn strongly_connected_components<R: Real>(
    reachable: &[usize],
    rows: &[Option<(R, Vec<(usize, R)>)>],
) -> Vec<Option<usize>> {
    let n = rows.len();
    let succ = |s: usize| rows[s].as_ref().unwrap().1.iter().map(|&(j, _)| j);

    // pass 1: order by DFS finish time
    let mut finish: Vec<usize> = Vec::with_capacity(reachable.len());
    let mut visited = vec![false; n];
    for &root in reachable {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some(&mut (s, ref mut next)) = stack.last_mut() {
            let children: Vec<usize> = succ(s).collect();
            if *next < children.len() {
                let j = children[*next];
                *next += 1;
                if !visited[j] {
                    visited[j] = true;
                    stack.push((j, 0));
                }
            } else {
                finish.push(s);
                stack.pop();
            }
        }
    }

    // pass 2: DFS on the transposed graph in reverse finish order
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &s in reachable {
        for j in succ(s) {
            pred[j].push(s);
        }
    }
    let mut comp: Vec<Option<usize>> = vec![None; n];
    let mut next_comp = 0usize;
    for &root in finish.iter().rev() {
        if comp[root].is_some() {
            continue;
        }
        let mut stack = vec![root];
        comp[root] = Some(next_comp);
        while let Some(s) = stack.pop() {
            for &j in &pred[s] {
                if comp[j].is_none() {
                    comp[j] = Some(next_comp);
                    stack.push(j);
                }
            }
        }
        next_comp += 1;
    }
    comp
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting. The
/// systems here are tiny (one row per state of a small chain), so a dense
/// direct solve is both simplest and exact to round-off.
fn solve_dense<R: Real>(mut a: Vec<Vec<R>>, mut b: Vec<R>) -> Result<Vec<R>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[piv][col] == R::zero() {
            return Err(Error::Input("singular linear system in policy evaluation".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != R::zero() {
                for k in col..n {
                    let t = a[col][k] * f;
                    a[r][k] = a[r][k] - t;
                }
                let t = b[col] * f;
                b[r] = b[r] - t;
            }
        }
    }
    let mut x = vec![R::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            let t = a[r][k] * x[k];
            s = s - t;
        }
        x[r] = s / a[r][r];
    }
    Ok(x)
}

/// Compute an optimal stationary policy for the average-cost criterion under
/// an action restriction.
pub fn relative_value_iteration<R: Real>(
    config: &ProblemConfig<R>,
    restriction: &ActionRestriction,
    options: &SolverOptions<R>,
) -> Result<SolveResult<R>> {
    let engine = Engine::new(config.clone())?;
    solve_with_engine(&engine, restriction, options)
}

/// Same as [`relative_value_iteration`] but reusing a prebuilt engine.
pub fn solve_with_engine<R: Real>(
    engine: &Engine<R>,
    restriction: &ActionRestriction,
    options: &SolverOptions<R>,
) -> Result<SolveResult<R>> {
    if options.epsilon <= R::zero() || options.max_iterations == 0 {
        return Err(Error::Config("epsilon must be > 0 and max_iterations >= 1".into()));
    }
    let config = &engine.dynamics.config;
    restriction.validate(config)?;
    let space = &engine.dynamics.space;
    if options.reference_state >= space.len() {
        return Err(Error::Config(format!(
            "reference state {} out of range (|S| = {})",
            options.reference_state,
            space.len()
        )));
    }

    let outcome = if restriction.is_state_dependent() {
        let per_state: Vec<Vec<Action>> = space
            .states()
            .iter()
            .map(|s| restriction.actions_for(s, config))
            .collect();
        if per_state.iter().any(|a| a.is_empty()) {
            return Err(Error::EmptyActionSet);
        }
        engine.iterate(
            |s| per_state[s].as_slice(),
            options.epsilon,
            options.max_iterations,
            options.reference_state,
        )
    } else {
        let shared = restriction.actions_for(space.state(0), config);
        if shared.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        engine.iterate(
            |_| shared.as_slice(),
            options.epsilon,
            options.max_iterations,
            options.reference_state,
        )
    };

    match outcome {
        Ok((gain, bias, actions, span_residual, iterations)) => Ok(SolveResult {
            policy: Policy { actions },
            gain,
            bias,
            span_residual,
            iterations,
        }),
        Err((iterations, span)) => Err(Error::NonConvergence {
            iterations,
            span: span.to_f64().unwrap_or(f64::NAN),
        }),
    }
}

/// Long-run average cost of a fixed policy starting from the empty system,
/// computed exactly by chain analysis (see [`Engine::evaluate_policy`]).
pub fn exact_policy_gain<R: Real>(policy: &Policy, config: &ProblemConfig<R>) -> Result<R> {
    let engine = Engine::new(config.clone())?;
    if policy.len() != engine.dynamics.space.len() {
        return Err(Error::Input(format!(
            "policy covers {} states, state space has {}",
            policy.len(),
            engine.dynamics.space.len()
        )));
    }
    for a in &policy.actions {
        engine.dynamics.check_action(a)?;
    }
    engine.evaluate_policy(&policy.actions)
}

const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Minimum average cost over every stationary deterministic policy. Only for
/// tiny instances; used as a verification oracle.
pub fn brute_force_optimal_gain<R: Real>(config: &ProblemConfig<R>) -> Result<R> {
    let engine = Engine::new(config.clone())?;
    let space = &engine.dynamics.space;
    let actions = ActionRestriction::Full.actions_for(space.state(0), config);
    let n_states = space.len();
    let n_actions = actions.len() as u128;
    let mut total: u128 = 1;
    for _ in 0..n_states {
        total = total.saturating_mul(n_actions);
        if total > BRUTE_FORCE_LIMIT {
            return Err(Error::TooManyPolicies(total));
        }
    }

    let best = (0..total as u64)
        .into_par_iter()
        .map(|code| {
            let mut assignment = Vec::with_capacity(n_states);
            let mut c = code as u128;
            for _ in 0..n_states {
                assignment.push(actions[(c % n_actions) as usize]);
                c /= n_actions;
            }
            engine.evaluate_policy(&assignment)
        })
        .try_reduce(
            || R::infinity(),
            |a, b| Ok(if b < a { b } else { a }),
        )?;
    Ok(best)
}

/// Flat export of a solve result: one line per state with the chosen action
/// and bias value, comma-separated.
pub fn policy_table<R: Real>(
    space: &crate::dynamics::StateSpace,
    result: &SolveResult<R>,
) -> String {
    let local_slots = space.local_slots();
    let import_slots = space.import_slots();
    let mut out = String::from("inventory");
    for i in 0..local_slots {
        out.push_str(&format!(",local_pipeline_{}", i + 1));
    }
    for i in 0..import_slots {
        out.push_str(&format!(",import_pipeline_{}", i + 1));
    }
    out.push_str(",local_request,import_order,bias\n");
    for (i, s) in space.states().iter().enumerate() {
        out.push_str(&s.inventory.to_string());
        for &q in &s.local_pipeline {
            out.push_str(&format!(",{q}"));
        }
        for &q in &s.import_pipeline {
            out.push_str(&format!(",{q}"));
        }
        let a = result.policy.action(i);
        out.push_str(&format!(
            ",{},{},{:.6}\n",
            a.local_request,
            a.import_order,
            result.bias[i].to_f64().unwrap_or(f64::NAN)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        preset_config, CostParams, DistKind, DistributionSpec, ProblemConfig, QuantityGrid,
        ScenarioPreset, Country, Storage,
    };
    use approx::assert_abs_diff_eq;

    /// Deterministic instance with ample local capacity and no import value:
    /// the optimal stationary behavior is to order exactly the demand.
    fn deterministic_local_only() -> ProblemConfig<f64> {
        ProblemConfig {
            grid: QuantityGrid {
                step: 2000,
                max_order_local: 20_000,
                max_order_import: 20_000,
                max_inventory: 40_000,
            },
            lead_local: 0,
            lead_import: 1,
            costs: CostParams { c_local: 5.76, c_import: 8.62, c_hold: 2.8, c_penalty: 30.0 },
            capacity: DistributionSpec {
                mean: 20_000.0,
                lower: 0.0,
                upper: 20_000.0,
                varl: 0.0,
                kind: DistKind::Capacity,
            },
            demand: DistributionSpec {
                mean: 14_000.0,
                lower: 6_000.0,
                upper: 22_000.0,
                varl: 0.0,
                kind: DistKind::Demand,
            },
            yield_loss: DistributionSpec {
                mean: 0.175,
                lower: 0.0,
                upper: 0.35,
                varl: 0.0,
                kind: DistKind::YieldLoss,
            },
            label: "deterministic-local".into(),
        }
    }

    fn tiny_instance() -> ProblemConfig<f64> {
        ProblemConfig {
            grid: QuantityGrid {
                step: 2000,
                max_order_local: 4000,
                max_order_import: 2000,
                max_inventory: 4000,
            },
            lead_local: 0,
            lead_import: 1,
            costs: CostParams { c_local: 4.0, c_import: 5.0, c_hold: 2.0, c_penalty: 20.0 },
            capacity: DistributionSpec {
                mean: 2000.0,
                lower: 0.0,
                upper: 4000.0,
                varl: 0.8,
                kind: DistKind::Capacity,
            },
            demand: DistributionSpec {
                mean: 2000.0,
                lower: 0.0,
                upper: 4000.0,
                varl: 0.7,
                kind: DistKind::Demand,
            },
            yield_loss: DistributionSpec {
                mean: 0.175,
                lower: 0.0,
                upper: 0.35,
                varl: 0.5,
                kind: DistKind::YieldLoss,
            },
            label: "tiny".into(),
        }
    }

    #[test]
    fn deterministic_gain_closed_form() {
        let config = deterministic_local_only();
        let options = SolverOptions::with_epsilon(1e-9);
        let result =
            relative_value_iteration(&config, &ActionRestriction::LocalOnly, &options).unwrap();
        assert_abs_diff_eq!(result.gain, 80.64, epsilon = 1e-6);
        // steady state orders exactly the demand at zero inventory
        assert_eq!(result.policy.action(0), Action { local_request: 14_000, import_order: 0 });
    }

    #[test]
    fn tiny_instance_matches_brute_force() {
        let config = tiny_instance();
        let oracle = brute_force_optimal_gain(&config).unwrap();
        let result = relative_value_iteration(
            &config,
            &ActionRestriction::Full,
            &SolverOptions::with_epsilon(1e-9),
        )
        .unwrap();
        assert_abs_diff_eq!(result.gain, oracle, epsilon = 1e-6);
    }

    #[test]
    fn box_containing_optimum_is_lossless() {
        let config = tiny_instance();
        let full = relative_value_iteration(
            &config,
            &ActionRestriction::Full,
            &SolverOptions::with_epsilon(1e-8),
        )
        .unwrap();
        let boxed = relative_value_iteration(
            &config,
            &ActionRestriction::Box {
                local_min: 0,
                local_max: config.grid.max_order_local,
                import_min: 0,
                import_max: config.grid.max_order_import,
            },
            &SolverOptions::with_epsilon(1e-8),
        )
        .unwrap();
        assert_abs_diff_eq!(full.gain, boxed.gain, epsilon = 2e-8);
    }

    #[test]
    fn never_ordering_pays_full_penalty() {
        let config = deterministic_local_only();
        let space = crate::dynamics::enumerate_states(&config).unwrap();
        let policy = Policy { actions: vec![Action::NONE; space.len()] };
        let gain = exact_policy_gain(&policy, &config).unwrap();
        assert_abs_diff_eq!(gain, 420.0, epsilon = 1e-6);
    }

    #[test]
    fn any_policy_dominates_optimal_gain() {
        let config = tiny_instance();
        let opt = relative_value_iteration(
            &config,
            &ActionRestriction::Full,
            &SolverOptions::with_epsilon(1e-8),
        )
        .unwrap();
        let space = crate::dynamics::enumerate_states(&config).unwrap();
        let policy = Policy {
            actions: vec![Action { local_request: 2000, import_order: 2000 }; space.len()],
        };
        let gain = exact_policy_gain(&policy, &config).unwrap();
        assert!(gain >= opt.gain - 1e-7);
    }

    #[test]
    fn gain_invariant_to_reference_state() {
        let config = tiny_instance();
        let eps = 1e-8;
        let a = relative_value_iteration(
            &config,
            &ActionRestriction::Full,
            &SolverOptions { epsilon: eps, max_iterations: 100_000, reference_state: 0 },
        )
        .unwrap();
        let b = relative_value_iteration(
            &config,
            &ActionRestriction::Full,
            &SolverOptions { epsilon: eps, max_iterations: 100_000, reference_state: 2 },
        )
        .unwrap();
        assert_abs_diff_eq!(a.gain, b.gain, epsilon = 2.0 * eps);
    }

    #[test]
    fn restriction_monotonicity() {
        let config = tiny_instance();
        let eps = 1e-8;
        let full = relative_value_iteration(&config, &ActionRestriction::Full, &SolverOptions::with_epsilon(eps))
            .unwrap();
        for r in [
            ActionRestriction::LocalOnly,
            ActionRestriction::ImportOnly,
            ActionRestriction::Fixed { local: 2000, import: 0 },
        ] {
            let restricted =
                relative_value_iteration(&config, &r, &SolverOptions::with_epsilon(eps)).unwrap();
            assert!(full.gain <= restricted.gain + 2.0 * eps, "{r:?}");
        }
    }

    #[test]
    fn bellman_residual_at_policy() {
        let config = tiny_instance();
        let result = relative_value_iteration(
            &config,
            &ActionRestriction::Full,
            &SolverOptions::with_epsilon(1e-8),
        )
        .unwrap();
        let dyn_ = Dynamics::new(config).unwrap();
        for (i, s) in dyn_.space.states().iter().enumerate() {
            let q = dyn_.q_value(s, &result.policy.action(i), &result.bias);
            let residual = q - result.bias[i] - result.gain;
            assert!(residual.abs() <= result.span_residual + 1e-9, "state {i}: residual {residual}");
        }
    }

    #[test]
    fn scaling_equivariance() {
        let p = ScenarioPreset::new(Country::Morocco, Storage::SaltCavern, 1.0).unwrap();
        let config = preset_config::<f64>(&p, 0.5, 0.5, 0.5);
        let scaled = config.with_costs(config.costs.scaled(10.0));
        let a = relative_value_iteration(&config, &ActionRestriction::Full, &SolverOptions::with_epsilon(1e-8))
            .unwrap();
        let b = relative_value_iteration(&scaled, &ActionRestriction::Full, &SolverOptions::with_epsilon(1e-7))
            .unwrap();
        assert_abs_diff_eq!(b.gain / a.gain, 10.0, epsilon = 1e-9);
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn empty_restriction_is_rejected() {
        let config = tiny_instance();
        let r = ActionRestriction::Box { local_min: 4000, local_max: 2000, import_min: 0, import_max: 0 };
        assert!(relative_value_iteration(&config, &r, &SolverOptions::default()).is_err());
    }

    #[test]
    fn brute_force_limit() {
        let p = ScenarioPreset::new(Country::Morocco, Storage::SaltCavern, 1.0).unwrap();
        let config = preset_config::<f64>(&p, 0.5, 0.5, 0.5);
        assert!(matches!(brute_force_optimal_gain(&config), Err(Error::TooManyPolicies(_))));
    }

    #[test]
    fn free_lost_sales_means_zero_gain() {
        let mut config = tiny_instance();
        config.costs.c_penalty = 0.0;
        config.costs.c_hold = 1.0;
        let oracle = brute_force_optimal_gain(&config).unwrap();
        assert_abs_diff_eq!(oracle, 0.0, epsilon = 1e-6);
    }
}
