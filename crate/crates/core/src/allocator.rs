//! Server allocation and branch-rate scheduling.
//!
//! Three allocators share one evaluation path: a binding is completed with
//! equilibrium branch rates and scored on its end-to-end distribution.
//!
//! * [`manage`]: the sort-and-match heuristic (`sdcc_allocate` at the root).
//! * [`baseline_allocate`]: best servers to serial slots first.
//! * [`optimal_allocate`]: exhaustive search over injective bindings.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::ServerDescriptor;
use crate::error::{Error, Result};
use crate::numeric::{GridConfig, NumericDistribution};
use crate::workflow::{bound_server, child_path, end_to_end, slot_response, DccClass, Scenario, WorkflowNode};

/// Exhaustive search refuses workflows with more slots than this.
pub const MAX_OPTIMAL_SLOTS: usize = 10;

const OUTER_ITERATIONS: usize = 200;
const TIE_TOLERANCE: f64 = 1e-12;
/// Grid used when the mean of a nested parallel block is needed inside the
/// rate solver.
const NESTED_GRID_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Baseline,
    Optimal,
    /// The binding supplied by the scenario document.
    Given,
}

impl Method {
    pub const COMPARED: [Method; 3] = [Method::Proposed, Method::Optimal, Method::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline => "baseline",
            Method::Optimal => "optimal",
            Method::Given => "given",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "baseline" => Ok(Method::Baseline),
            "optimal" => Ok(Method::Optimal),
            "given" => Ok(Method::Given),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method '{s}' (proposed|baseline|optimal)"
            ))),
        }
    }
}

/// A complete binding with its branch rates and end-to-end moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub method: Method,
    pub binding: BTreeMap<String, String>,
    /// Per parallel node path, the rate sent down each branch.
    pub branch_rates: BTreeMap<String, Vec<f64>>,
    pub mean: f64,
    pub variance: f64,
}

impl AllocationPlan {
    pub fn objective_value(&self, scenario: &Scenario) -> f64 {
        scenario.objective.pick(self.mean, self.variance)
    }

    pub fn distribution(&self, scenario: &Scenario) -> Result<NumericDistribution> {
        end_to_end(
            &scenario.workflow,
            &scenario.servers,
            &self.binding,
            &self.branch_rates,
            &scenario.grid,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Splits `lambda` across branches with fixed mean response times so that
/// every `rate_i * rt_i` is equal.
pub fn rate_schedule(lambda: f64, rts: &[f64]) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if rts.is_empty() {
        return Err(Error::InvalidArgument("no branches to schedule".into()));
    }
    if let Some(i) = rts.iter().position(|rt| !(rt.is_finite() && *rt > 0.0)) {
        return Err(Error::invalid(
            format!("rt[{i}]"),
            format!("response time {} must be finite and > 0", rts[i]),
        ));
    }
    let inv: Vec<f64> = rts.iter().map(|rt| 1.0 / rt).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.iter().map(|w| lambda * w / total).collect())
}

/// Equilibrium split over M/M/1 branches with service rates `mus`, where a
/// branch's mean response at load `x` is `1 / (mu - x)`.
pub fn rate_schedule_queued(lambda: f64, mus: &[f64]) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if let Some(i) = mus.iter().position(|mu| !(mu.is_finite() && *mu > 0.0)) {
        return Err(Error::invalid(format!("mu[{i}]"), "service rate must be finite and > 0"));
    }
    let branches: Vec<Branch> = mus.iter().map(|&mu| Branch::Queue(mu)).collect();
    equilibrium(lambda, &branches)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("arrival rate {lambda} must be finite and > 0")))
    }
}

/// Mean response of one parallel branch as a function of its load.
enum Branch<'a> {
    Fixed(f64),
    Queue(f64),
    General {
        capacity: f64,
        /// Means come from a numeric composition rather than a closed form.
        nested: bool,
        mean_at: Box<dyn Fn(f64) -> Result<f64> + 'a>,
    },
}

impl Branch<'_> {
    fn capacity(&self) -> f64 {
        match self {
            Branch::Fixed(_) => f64::INFINITY,
            Branch::Queue(mu) => *mu,
            Branch::General { capacity, .. } => *capacity,
        }
    }

    /// Load `x` with `x * rt(x) = c`.
    fn rate_for(&self, c: f64) -> Result<f64> {
        match self {
            Branch::Fixed(rt) => Ok(c / rt),
            Branch::Queue(mu) => Ok(c * mu / (1.0 + c)),
            Branch::General { capacity, mean_at, .. } => {
                let excess = |x: f64| -> Result<f64> { Ok(x * mean_at(x)? - c) };
                match bracket(excess, *capacity, c)? {
                    Bracket::Root(x) => Ok(x),
                    Bracket::Between(lo, hi) => increasing_root(excess, lo, hi, 1e-12 * c.max(1e-300)),
                }
            }
        }
    }
}

enum Bracket {
    Root(f64),
    Between((f64, f64), (f64, f64)),
}

/// Brackets the root of an increasing `f` on `(0, capacity)` with
/// `f(0) = -f0`, walking toward the capacity by halving the remaining gap so
/// that `f` is never evaluated much closer to it than the root itself.
fn bracket(f: impl Fn(f64) -> Result<f64>, capacity: f64, f0: f64) -> Result<Bracket> {
    let mut lo = (0.0, -f0);
    let mut x = if capacity.is_finite() { 0.5 * capacity } else { 1.0 };
    loop {
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(Bracket::Root(x));
        }
        if fx > 0.0 {
            return Ok(Bracket::Between(lo, (x, fx)));
        }
        lo = (x, fx);
        let next = if capacity.is_finite() { 0.5 * (x + capacity) } else { 2.0 * x };
        if !(next > x && next < capacity) || next > 1e300 {
            return Ok(Bracket::Root(x));
        }
        x = next;
    }
}

/// Root of an increasing `f` bracketed by `f(lo) < 0 < f(hi)`, by the
/// Illinois variant of regula falsi.
fn increasing_root(
    f: impl Fn(f64) -> Result<f64>,
    (mut lo, mut f_lo): (f64, f64),
    (mut hi, mut f_hi): (f64, f64),
    tol: f64,
) -> Result<f64> {
    let mut last_side = 0i8;
    for _ in 0..OUTER_ITERATIONS {
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
            if !(x > lo && x < hi) {
                break;
            }
        }
        let fx = f(x)?;
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            if last_side == -1 {
                f_hi *= 0.5;
            }
            last_side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if last_side == 1 {
                f_lo *= 0.5;
            }
            last_side = 1;
        }
    }
    Ok(if f_lo.abs() < f_hi.abs() { lo } else { hi })
}

/// Finds the split where every `rate_i * rt_i(rate_i)` equals a common `c`.
/// The total scheduled rate is increasing in `c`.
fn equilibrium(lambda: f64, branches: &[Branch]) -> Result<Vec<f64>> {
    if branches.iter().all(|b| matches!(b, Branch::Fixed(_))) {
        let rts: Vec<f64> = branches
            .iter()
            .map(|b| match b {
                Branch::Fixed(rt) => *rt,
                _ => unreachable!(),
            })
            .collect();
        return rate_schedule(lambda, &rts);
    }
    let capacity: f64 = branches.iter().map(Branch::capacity).sum();
    if capacity <= lambda {
        return Err(Error::Infeasible(format!(
            "total service capacity {capacity} does not exceed arrival rate {lambda}"
        )));
    }
    let pivot = branches
        .iter()
        .position(|b| matches!(b, Branch::General { nested: true, .. }))
        .or_else(|| branches.iter().position(|b| matches!(b, Branch::General { .. })));
    let rates = match pivot {
        Some(g) => general_split(lambda, branches, g)?,
        None => {
            let c = bisect_product(lambda, branches)?;
            branches.iter().map(|b| b.rate_for(c)).collect::<Result<Vec<f64>>>()?
        }
    };
    let residual = (rates.iter().sum::<f64>() - lambda).abs();
    if residual >= 1e-9 * lambda.max(1.0) {
        return Err(Error::Infeasible(format!(
            "rate split did not converge (residual {residual:e})"
        )));
    }
    Ok(rates)
}

fn bisect_product(lambda: f64, branches: &[Branch]) -> Result<f64> {
    let total = |c: f64| -> Result<f64> {
        let mut s = 0.0;
        for b in branches {
            s += b.rate_for(c)?;
        }
        Ok(s)
    };
    let mut hi = 1.0;
    while total(hi)? < lambda {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Infeasible(format!("no stable split of rate {lambda}")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..OUTER_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid)? < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Root-finds on the load `x` of branch `g`, whose mean is computed rather
/// than inverted; every other branch follows from `c = x * rt_g(x)`.
fn general_split(lambda: f64, branches: &[Branch], g: usize) -> Result<Vec<f64>> {
    let Branch::General { capacity, mean_at, .. } = &branches[g] else {
        unreachable!("caller picks a general branch")
    };
    let split = |x: f64| -> Result<Vec<f64>> {
        let c = x * mean_at(x)?;
        branches
            .iter()
            .enumerate()
            .map(|(i, b)| if i == g { Ok(x) } else { b.rate_for(c) })
            .collect()
    };
    let excess = |x: f64| -> Result<f64> { Ok(split(x)?.iter().sum::<f64>() - lambda) };
    let x = match bracket(excess, *capacity, lambda)? {
        Bracket::Root(x) => x,
        Bracket::Between(lo, hi) => increasing_root(excess, lo, hi, 1e-12 * lambda)?,
    };
    split(x)
}

struct Ctx<'a> {
    servers: &'a [ServerDescriptor],
    binding: &'a BTreeMap<String, String>,
    nested_grid: GridConfig,
    /// Means of parallel blocks keyed by node address and load.
    block_means: RefCell<HashMap<(usize, Option<u64>), f64>>,
}

impl Ctx<'_> {
    fn depends_on_load(&self, node: &WorkflowNode) -> Result<bool> {
        if node.arrival_rate().is_some() {
            return Ok(false);
        }
        Ok(match node {
            WorkflowNode::Slot { id, .. } => bound_server(self.servers, self.binding, id)?.is_load_dependent(),
            _ => {
                let mut any = false;
                for c in node.children() {
                    any |= self.depends_on_load(c)?;
                }
                any
            }
        })
    }

    /// Largest load the node can absorb while every queue stays stable.
    fn capacity(&self, node: &WorkflowNode) -> Result<f64> {
        if node.arrival_rate().is_some() {
            return Ok(f64::INFINITY);
        }
        Ok(match node {
            WorkflowNode::Slot { id, .. } => bound_server(self.servers, self.binding, id)?.capacity(),
            WorkflowNode::Series { children, .. } => {
                let mut cap = f64::INFINITY;
                for c in children {
                    cap = cap.min(self.capacity(c)?);
                }
                cap
            }
            WorkflowNode::Parallel { .. } if node.known_branch_rates().is_some() => f64::INFINITY,
            WorkflowNode::Parallel { children, .. } => {
                let mut cap = 0.0;
                for c in children {
                    cap += self.capacity(c)?;
                }
                cap
            }
        })
    }

    fn mean_at(&self, node: &WorkflowNode, load: Option<f64>) -> Result<f64> {
        let load = node.arrival_rate().or(load);
        match node {
            WorkflowNode::Slot { id, .. } => {
                slot_response(bound_server(self.servers, self.binding, id)?, id, load)?.mean()
            }
            WorkflowNode::Series { children, .. } => {
                let mut m = 0.0;
                for c in children {
                    m += self.mean_at(c, load)?;
                }
                Ok(m)
            }
            WorkflowNode::Parallel { .. } => {
                let key = (node as *const WorkflowNode as usize, load.map(f64::to_bits));
                if let Some(m) = self.block_means.borrow().get(&key) {
                    return Ok(*m);
                }
                let mut rates = BTreeMap::new();
                self.schedule(node, "", load, &mut rates)?;
                let m = end_to_end(node, self.servers, self.binding, &rates, &self.nested_grid)?.mean();
                self.block_means.borrow_mut().insert(key, m);
                Ok(m)
            }
        }
    }

    fn branch<'s>(&'s self, node: &'s WorkflowNode) -> Result<Branch<'s>> {
        if !self.depends_on_load(node)? {
            return Ok(Branch::Fixed(self.mean_at(node, None)?));
        }
        if let WorkflowNode::Slot { id, .. } = node {
            return Ok(Branch::Queue(bound_server(self.servers, self.binding, id)?.capacity()));
        }
        let mut nested = false;
        node.visit(&mut |_, n| nested |= matches!(n, WorkflowNode::Parallel { .. }));
        Ok(Branch::General {
            capacity: self.capacity(node)?,
            nested,
            mean_at: Box::new(move |x| self.mean_at(node, Some(x))),
        })
    }

    fn schedule(
        &self,
        node: &WorkflowNode,
        path: &str,
        load: Option<f64>,
        out: &mut BTreeMap<String, Vec<f64>>,
    ) -> Result<()> {
        let load = node.arrival_rate().or(load);
        match node {
            WorkflowNode::Slot { .. } => {}
            WorkflowNode::Series { children, .. } => {
                for (i, c) in children.iter().enumerate() {
                    self.schedule(c, &child_path(path, i), load, out)?;
                }
            }
            WorkflowNode::Parallel { children, .. } => {
                let split = match (node.known_branch_rates(), load) {
                    (Some(known), _) => Some(known),
                    (None, Some(lambda)) => {
                        let branches = children.iter().map(|c| self.branch(c)).collect::<Result<Vec<_>>>()?;
                        Some(equilibrium(lambda, &branches)?)
                    }
                    (None, None) => None,
                };
                for (i, c) in children.iter().enumerate() {
                    let r = split.as_ref().map(|s| s[i]);
                    self.schedule(c, &child_path(path, i), r, out)?;
                }
                if let Some(s) = split {
                    out.insert(path.to_string(), s);
                }
            }
        }
        Ok(())
    }
}

/// Branch rates for every parallel node that receives a known arrival rate:
/// the document's rates where given, the equilibrium split otherwise.
pub fn schedule_rates(scenario: &Scenario, binding: &BTreeMap<String, String>) -> Result<BTreeMap<String, Vec<f64>>> {
    let ctx = Ctx {
        servers: &scenario.servers,
        binding,
        nested_grid: GridConfig::new(
            scenario.grid.points.min(NESTED_GRID_POINTS),
            scenario.grid.horizon_quantile,
        ),
        block_means: RefCell::new(HashMap::new()),
    };
    let mut out = BTreeMap::new();
    ctx.schedule(&scenario.workflow, "", None, &mut out)?;
    Ok(out)
}

/// Completes `binding` with branch rates and scores it.
pub fn evaluate(scenario: &Scenario, method: Method, binding: BTreeMap<String, String>) -> Result<AllocationPlan> {
    let mut used = std::collections::HashSet::new();
    for id in scenario.slot_ids() {
        let server = binding
            .get(id)
            .ok_or_else(|| Error::Allocation(format!("slot '{id}' is not bound")))?;
        if !used.insert(server) {
            return Err(Error::Allocation(format!("server '{server}' is bound twice")));
        }
    }
    let branch_rates = schedule_rates(scenario, &binding)?;
    let d = end_to_end(
        &scenario.workflow,
        &scenario.servers,
        &binding,
        &branch_rates,
        &scenario.grid,
    )?;
    let (mean, variance) = d.moments();
    Ok(AllocationPlan {
        method,
        binding,
        branch_rates,
        mean,
        variance,
    })
}

/// Unloaded mean response; heavy tails without a mean sort last.
fn sort_key(server: &ServerDescriptor) -> Result<f64> {
    match server.expected_response() {
        Ok(m) => Ok(m),
        Err(Error::Divergent(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// The `needed` fastest servers, slowest first; ties by ascending id.
fn descending_pool(servers: &[ServerDescriptor], needed: usize) -> Result<VecDeque<usize>> {
    if servers.len() < needed {
        return Err(Error::Allocation(format!(
            "server pool exhausted: {} servers for {needed} slots",
            servers.len()
        )));
    }
    let keys = servers.iter().map(sort_key).collect::<Result<Vec<f64>>>()?;
    let mut idx: Vec<usize> = (0..servers.len()).collect();
    idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then_with(|| servers[a].id.cmp(&servers[b].id)));
    idx.truncate(needed);
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then_with(|| servers[a].id.cmp(&servers[b].id)));
    Ok(idx.into())
}

struct Matcher<'a> {
    servers: &'a [ServerDescriptor],
    pool: VecDeque<usize>,
    binding: BTreeMap<String, String>,
}

impl Matcher<'_> {
    fn dispatch(&mut self, node: &WorkflowNode, load: Option<f64>) -> Result<()> {
        let load = node.arrival_rate().or(load);
        match node.classify() {
            DccClass::SingleQueue => {
                let WorkflowNode::Slot { id, .. } = node else { unreachable!() };
                let s = self
                    .pool
                    .pop_front()
                    .ok_or_else(|| Error::Allocation("server pool exhausted".into()))?;
                self.binding.insert(id.clone(), self.servers[s].id.clone());
                Ok(())
            }
            DccClass::Sdcc => self.sdcc(node.children(), load),
            DccClass::Pdcc => self.pdcc(node),
        }
    }

    /// Components in ascending arrival-rate order take servers from the
    /// slow end of the pool.
    fn sdcc(&mut self, dccs: &[WorkflowNode], load: Option<f64>) -> Result<()> {
        let mut order: Vec<(usize, f64)> = dccs
            .iter()
            .enumerate()
            .map(|(i, d)| (i, d.arrival_rate().or(load).unwrap_or(0.0)))
            .collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1));
        for (i, _) in order {
            self.dispatch(&dccs[i], load)?;
        }
        Ok(())
    }

    /// Known branch rates: ascending rate order. Otherwise branches with
    /// more internal junctions go first.
    fn pdcc(&mut self, node: &WorkflowNode) -> Result<()> {
        let children = node.children();
        let known = node.known_branch_rates();
        let mut order: Vec<usize> = (0..children.len()).collect();
        match &known {
            Some(rates) => order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b])),
            None => order.sort_by_key(|&i| std::cmp::Reverse(children[i].internal_dap_count())),
        }
        for i in order {
            let r = known.as_ref().map(|k| k[i]);
            self.dispatch(&children[i], r)?;
        }
        Ok(())
    }
}

fn slots_needed(nodes: &[WorkflowNode]) -> usize {
    nodes.iter().map(WorkflowNode::slot_count).sum()
}

/// Binds the slots of a list of serial components.
pub fn sdcc_allocate(servers: &[ServerDescriptor], dccs: &[WorkflowNode]) -> Result<BTreeMap<String, String>> {
    let mut m = Matcher {
        servers,
        pool: descending_pool(servers, slots_needed(dccs))?,
        binding: BTreeMap::new(),
    };
    m.sdcc(dccs, None)?;
    Ok(m.binding)
}

/// Binds the slots of one parallel component.
pub fn pdcc_allocate(servers: &[ServerDescriptor], node: &WorkflowNode) -> Result<BTreeMap<String, String>> {
    if node.classify() != DccClass::Pdcc {
        return Err(Error::InvalidArgument("pdcc_allocate needs a parallel node".into()));
    }
    let mut m = Matcher {
        servers,
        pool: descending_pool(servers, node.slot_count())?,
        binding: BTreeMap::new(),
    };
    m.pdcc(node)?;
    Ok(m.binding)
}

/// The proposed allocator: sort-and-match from the root, then equilibrium
/// rates.
pub fn manage(scenario: &Scenario) -> Result<AllocationPlan> {
    let root = &scenario.workflow;
    let mut m = Matcher {
        servers: &scenario.servers,
        pool: descending_pool(&scenario.servers, root.slot_count())?,
        binding: BTreeMap::new(),
    };
    m.dispatch(root, None)?;
    evaluate(scenario, Method::Proposed, m.binding)
}

/// Slots under a series (and a bare root slot) take the best servers first,
/// then slots under a parallel; document order within each class.
pub fn baseline_allocate(scenario: &Scenario) -> Result<AllocationPlan> {
    let mut serial = Vec::new();
    let mut parallel = Vec::new();
    fn walk<'a>(node: &'a WorkflowNode, under_parallel: bool, s: &mut Vec<&'a str>, p: &mut Vec<&'a str>) {
        match node {
            WorkflowNode::Slot { id, .. } if under_parallel => p.push(id),
            WorkflowNode::Slot { id, .. } => s.push(id),
            WorkflowNode::Series { children, .. } => children.iter().for_each(|c| walk(c, false, s, p)),
            WorkflowNode::Parallel { children, .. } => children.iter().for_each(|c| walk(c, true, s, p)),
        }
    }
    walk(&scenario.workflow, false, &mut serial, &mut parallel);
    let needed = serial.len() + parallel.len();
    let mut pool = descending_pool(&scenario.servers, needed)?;
    let mut binding = BTreeMap::new();
    for slot in serial.into_iter().chain(parallel) {
        let s = pool.pop_back().expect("pool sized to the slot count");
        binding.insert(slot.to_string(), scenario.servers[s].id.clone());
    }
    evaluate(scenario, Method::Baseline, binding)
}

/// Exhaustive search over injective bindings. Sibling slots of a parallel
/// without fixed branch rates are interchangeable, so only their
/// id-ascending assignment is tried.
pub fn optimal_allocate(scenario: &Scenario) -> Result<AllocationPlan> {
    let slots = scenario.slot_ids();
    let k = slots.len();
    if k > MAX_OPTIMAL_SLOTS {
        return Err(Error::Combinatorial(format!(
            "{k} slots exceed the exhaustive-search limit of {MAX_OPTIMAL_SLOTS}"
        )));
    }
    let n = scenario.servers.len();
    if n < k {
        return Err(Error::Allocation(format!("server pool exhausted: {n} servers for {k} slots")));
    }
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by(|&a, &b| scenario.servers[a].id.cmp(&scenario.servers[b].id));

    let position: BTreeMap<&str, usize> = slots.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut previous_sibling: Vec<Option<usize>> = vec![None; k];
    scenario.workflow.visit(&mut |_, node| {
        if let WorkflowNode::Parallel { children, .. } = node {
            if node.known_branch_rates().is_none() {
                let mut last = None;
                for c in children {
                    if let WorkflowNode::Slot { id, .. } = c {
                        let j = position[id.as_str()];
                        previous_sibling[j] = last;
                        last = Some(j);
                    }
                }
            }
        }
    });

    let mut assignments = Vec::new();
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; n];
    enumerate(&previous_sibling, n, &mut current, &mut used, &mut assignments);

    let results: Vec<Result<AllocationPlan>> = assignments
        .par_iter()
        .map(|a| {
            let binding = a
                .iter()
                .enumerate()
                .map(|(j, &s)| (slots[j].to_string(), scenario.servers[by_id[s]].id.clone()))
                .collect();
            evaluate(scenario, Method::Optimal, binding)
        })
        .collect();

    // Assignments are in lexicographic server-id order, so keeping the first
    // minimum breaks ties by id. Values within TIE_TOLERANCE count as ties;
    // mirrored bindings differ only by rounding.
    let mut best: Option<AllocationPlan> = None;
    let mut first_error = None;
    for r in results {
        match r {
            Ok(plan) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| {
                        let incumbent = b.objective_value(scenario);
                        plan.objective_value(scenario) < incumbent - TIE_TOLERANCE * incumbent.abs()
                    });
                if better {
                    best = Some(plan);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_error.unwrap_or_else(|| Error::Allocation("no assignment to evaluate".into())))
}

fn enumerate(
    previous_sibling: &[Option<usize>],
    n: usize,
    current: &mut Vec<usize>,
    used: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    let j = current.len();
    if j == previous_sibling.len() {
        out.push(current.clone());
        return;
    }
    let floor = previous_sibling[j].map(|p| current[p] + 1).unwrap_or(0);
    for s in floor..n {
        if used[s] {
            continue;
        }
        used[s] = true;
        current.push(s);
        enumerate(previous_sibling, n, current, used, out);
        current.pop();
        used[s] = false;
    }
}

pub fn allocate(scenario: &Scenario, method: Method) -> Result<AllocationPlan> {
    match method {
        Method::Proposed => manage(scenario),
        Method::Baseline => baseline_allocate(scenario),
        Method::Optimal => optimal_allocate(scenario),
        Method::Given => evaluate(scenario, Method::Given, scenario.binding.clone()),
    }
}

/// The scenario's own binding when it covers every slot, otherwise the
/// proposed allocation.
pub fn default_plan(scenario: &Scenario) -> Result<AllocationPlan> {
    if scenario.binding_is_complete() {
        allocate(scenario, Method::Given)
    } else {
        manage(scenario)
    }
}
