//! Series-parallel workflow trees and scenario documents.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dist::{DistributionSpec, ServerDescriptor};
use crate::error::{Error, Result, Violation};
use crate::numeric::{discretize, GridConfig, NumericDistribution};

/// Tolerance for rate sums (`sum of branch rates == arrival rate`).
pub const RATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WorkflowNode {
    Slot {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arrival_rate: Option<f64>,
    },
    Series {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arrival_rate: Option<f64>,
        children: Vec<WorkflowNode>,
    },
    Parallel {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arrival_rate: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        branch_rates: Option<Vec<f64>>,
        children: Vec<WorkflowNode>,
    },
}

/// Component class of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DccClass {
    SingleQueue,
    Sdcc,
    Pdcc,
}

pub fn classify(node: &WorkflowNode) -> DccClass {
    node.classify()
}

pub fn internal_dap_count(node: &WorkflowNode) -> usize {
    node.internal_dap_count()
}

/// Path of child `index` under `parent` ("" is the root, children are
/// slash-joined indices such as "0/1").
pub fn child_path(parent: &str, index: usize) -> String {
    if parent.is_empty() {
        index.to_string()
    } else {
        format!("{parent}/{index}")
    }
}

impl WorkflowNode {
    pub fn slot(id: impl Into<String>) -> Self {
        WorkflowNode::Slot {
            id: id.into(),
            arrival_rate: None,
        }
    }

    pub fn series(children: Vec<WorkflowNode>) -> Self {
        WorkflowNode::Series {
            arrival_rate: None,
            children,
        }
    }

    pub fn parallel(children: Vec<WorkflowNode>) -> Self {
        WorkflowNode::Parallel {
            arrival_rate: None,
            branch_rates: None,
            children,
        }
    }

    pub fn with_arrival_rate(mut self, rate: f64) -> Self {
        match &mut self {
            WorkflowNode::Slot { arrival_rate, .. }
            | WorkflowNode::Series { arrival_rate, .. }
            | WorkflowNode::Parallel { arrival_rate, .. } => *arrival_rate = Some(rate),
        }
        self
    }

    /// Panics on non-parallel nodes.
    pub fn with_branch_rates(mut self, rates: Vec<f64>) -> Self {
        match &mut self {
            WorkflowNode::Parallel { branch_rates, .. } => *branch_rates = Some(rates),
            _ => panic!("branch rates only apply to parallel nodes"),
        }
        self
    }

    pub fn classify(&self) -> DccClass {
        match self {
            WorkflowNode::Slot { .. } => DccClass::SingleQueue,
            WorkflowNode::Series { .. } => DccClass::Sdcc,
            WorkflowNode::Parallel { .. } => DccClass::Pdcc,
        }
    }

    pub fn children(&self) -> &[WorkflowNode] {
        match self {
            WorkflowNode::Slot { .. } => &[],
            WorkflowNode::Series { children, .. } | WorkflowNode::Parallel { children, .. } => children,
        }
    }

    pub fn arrival_rate(&self) -> Option<f64> {
        match self {
            WorkflowNode::Slot { arrival_rate, .. }
            | WorkflowNode::Series { arrival_rate, .. }
            | WorkflowNode::Parallel { arrival_rate, .. } => *arrival_rate,
        }
    }

    /// Junctions strictly inside the node: `k - 1` per series of `k`
    /// children, fork plus join per parallel.
    pub fn internal_dap_count(&self) -> usize {
        let inner: usize = self.children().iter().map(WorkflowNode::internal_dap_count).sum();
        match self {
            WorkflowNode::Slot { .. } => 0,
            WorkflowNode::Series { children, .. } => children.len().saturating_sub(1) + inner,
            WorkflowNode::Parallel { .. } => 2 + inner,
        }
    }

    /// Slot ids in document order.
    pub fn slot_ids(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_slots(&mut out);
        out
    }

    fn collect_slots<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            WorkflowNode::Slot { id, .. } => out.push(id),
            _ => self.children().iter().for_each(|c| c.collect_slots(out)),
        }
    }

    pub fn slot_count(&self) -> usize {
        match self {
            WorkflowNode::Slot { .. } => 1,
            _ => self.children().iter().map(WorkflowNode::slot_count).sum(),
        }
    }

    pub fn node_at(&self, path: &str) -> Option<&WorkflowNode> {
        if path.is_empty() {
            return Some(self);
        }
        let mut node = self;
        for part in path.split('/') {
            node = node.children().get(part.parse::<usize>().ok()?)?;
        }
        Some(node)
    }

    /// Per-branch rates fixed by the document: `branch_rates`, or every
    /// child's own `arrival_rate`.
    pub fn known_branch_rates(&self) -> Option<Vec<f64>> {
        match self {
            WorkflowNode::Parallel {
                branch_rates,
                children,
                ..
            } => branch_rates
                .clone()
                .or_else(|| children.iter().map(WorkflowNode::arrival_rate).collect()),
            _ => None,
        }
    }

    /// Visits every node with its path, parents before children.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a WorkflowNode)) {
        fn go<'a>(node: &'a WorkflowNode, path: &str, f: &mut impl FnMut(&str, &'a WorkflowNode)) {
            f(path, node);
            for (i, c) in node.children().iter().enumerate() {
                go(c, &child_path(path, i), f);
            }
        }
        go(self, "", f)
    }

    fn collect_violations(
        &self,
        path: &str,
        inherited: Option<f64>,
        seen: &mut HashSet<String>,
        out: &mut Vec<Violation>,
    ) {
        let own = self.arrival_rate();
        if let Some(r) = own {
            if !(r.is_finite() && r > 0.0) {
                out.push(Violation::new(format!("{path}.arrival_rate"), "arrival rate must be finite and > 0"));
            }
        }
        let rate = own.or(inherited);
        match self {
            WorkflowNode::Slot { id, .. } => {
                if id.is_empty() {
                    out.push(Violation::new(format!("{path}.id"), "slot id must not be empty"));
                } else if !seen.insert(id.clone()) {
                    out.push(Violation::new(format!("{path}.id"), format!("duplicate slot id '{id}'")));
                }
            }
            WorkflowNode::Series { children, .. } => {
                if children.is_empty() {
                    out.push(Violation::new(format!("{path}.children"), "a series needs at least 1 child"));
                }
                for (i, c) in children.iter().enumerate() {
                    c.collect_violations(&format!("{path}.children[{i}]"), rate, seen, out);
                }
            }
            WorkflowNode::Parallel {
                branch_rates,
                children,
                ..
            } => {
                if children.len() < 2 {
                    out.push(Violation::new(format!("{path}.children"), "a parallel needs at least 2 children"));
                }
                let own_rates: Vec<Option<f64>> = children.iter().map(WorkflowNode::arrival_rate).collect();
                let with_rate = own_rates.iter().filter(|r| r.is_some()).count();
                if with_rate != 0 && with_rate != children.len() {
                    out.push(Violation::new(
                        format!("{path}.children"),
                        "either every branch or no branch carries an arrival_rate",
                    ));
                }
                if let Some(br) = branch_rates {
                    let bp = format!("{path}.branch_rates");
                    if br.len() != children.len() {
                        out.push(Violation::new(
                            bp.clone(),
                            format!("{} rates for {} branches", br.len(), children.len()),
                        ));
                    }
                    if br.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                        out.push(Violation::new(bp.clone(), "branch rates must be finite and > 0"));
                    }
                    if with_rate == children.len()
                        && br.iter().zip(&own_rates).any(|(b, o)| (b - o.unwrap()).abs() > RATE_TOLERANCE)
                    {
                        out.push(Violation::new(bp.clone(), "branch rates disagree with the branches' arrival rates"));
                    }
                    if rate.is_none() {
                        out.push(Violation::new(bp, "branch rates need an arrival_rate on this node or an ancestor"));
                    }
                }
                if let (Some(known), Some(r)) = (self.known_branch_rates(), rate) {
                    let sum: f64 = known.iter().sum();
                    if (sum - r).abs() > RATE_TOLERANCE {
                        let field = if branch_rates.is_some() { "branch_rates" } else { "children" };
                        out.push(Violation::new(
                            format!("{path}.{field}"),
                            format!("branch rates sum to {sum} but the arrival rate is {r}"),
                        ));
                    }
                }
                let known = self.known_branch_rates();
                for (i, c) in children.iter().enumerate() {
                    let r = known.as_ref().and_then(|k| k.get(i).copied());
                    c.collect_violations(&format!("{path}.children[{i}]"), r, seen, out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Mean,
    Variance,
}

impl Objective {
    pub fn pick(self, mean: f64, variance: f64) -> f64 {
        match self {
            Objective::Mean => mean,
            Objective::Variance => variance,
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Objective::Mean),
            "variance" => Ok(Objective::Variance),
            _ => Err(Error::InvalidArgument(format!("unknown objective '{s}' (mean|variance)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub grid: GridConfig,
    pub servers: Vec<ServerDescriptor>,
    pub workflow: WorkflowNode,
    /// Optional slot to server pre-binding.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub binding: BTreeMap<String, String>,
}

/// Parses and validates a scenario document. Errors carry a path into the
/// document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut de = serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse {
            path: if path == "." { String::new() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    de.end().map_err(|e| Error::Parse {
        path: String::new(),
        message: e.to_string(),
    })?;
    scenario.ensure_valid()?;
    Ok(scenario)
}

impl Scenario {
    pub fn new(servers: Vec<ServerDescriptor>, workflow: WorkflowNode) -> Self {
        Self {
            name: None,
            objective: Objective::Mean,
            grid: GridConfig::default(),
            servers,
            workflow,
            binding: BTreeMap::new(),
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = self.grid.violations("grid");
        let mut ids = HashSet::new();
        for (i, s) in self.servers.iter().enumerate() {
            let p = format!("servers[{i}]");
            if !ids.insert(s.id.as_str()) {
                out.push(Violation::new(format!("{p}.id"), format!("duplicate server id '{}'", s.id)));
            }
            s.collect_violations(&p, &mut out);
        }
        let mut slots = HashSet::new();
        self.workflow.collect_violations("workflow", None, &mut slots, &mut out);
        let needed = self.workflow.slot_count();
        if self.servers.len() < needed {
            out.push(Violation::new(
                "servers",
                format!("{} servers for {needed} slots", self.servers.len()),
            ));
        }
        let mut used = HashSet::new();
        for (slot, server) in &self.binding {
            let p = format!("binding.{slot}");
            if !slots.contains(slot) {
                out.push(Violation::new(p.clone(), format!("unknown slot '{slot}'")));
            }
            if !ids.contains(server.as_str()) {
                out.push(Violation::new(p.clone(), format!("unknown server '{server}'")));
            }
            if !used.insert(server.as_str()) {
                out.push(Violation::new(p, format!("server '{server}' is bound twice")));
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Canonical pretty-printed JSON; parses back to an equal scenario.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn server(&self, id: &str) -> Option<&ServerDescriptor> {
        self.servers.iter().find(|s| s.id == id)
    }

    pub fn slot_ids(&self) -> Vec<&str> {
        self.workflow.slot_ids()
    }

    pub fn binding_is_complete(&self) -> bool {
        self.slot_ids().iter().all(|s| self.binding.contains_key(*s))
    }
}

/// Load on every slot given the scheduled branch rates. `None` when no
/// arrival rate reaches the slot.
pub fn slot_loads(
    root: &WorkflowNode,
    branch_rates: &BTreeMap<String, Vec<f64>>,
) -> BTreeMap<String, Option<f64>> {
    fn go(
        node: &WorkflowNode,
        path: &str,
        load: Option<f64>,
        rates: &BTreeMap<String, Vec<f64>>,
        out: &mut BTreeMap<String, Option<f64>>,
    ) {
        let load = node.arrival_rate().or(load);
        match node {
            WorkflowNode::Slot { id, .. } => {
                out.insert(id.clone(), load);
            }
            WorkflowNode::Series { children, .. } => {
                for (i, c) in children.iter().enumerate() {
                    go(c, &child_path(path, i), load, rates, out);
                }
            }
            WorkflowNode::Parallel { children, .. } => {
                let split = rates.get(path).cloned().or_else(|| node.known_branch_rates());
                for (i, c) in children.iter().enumerate() {
                    let r = split.as_ref().and_then(|s| s.get(i).copied());
                    go(c, &child_path(path, i), r, rates, out);
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    go(root, "", None, branch_rates, &mut out);
    out
}

/// Response-time law of `server` placed on `slot` under `load`.
pub fn slot_response(server: &ServerDescriptor, slot: &str, load: Option<f64>) -> Result<DistributionSpec> {
    match load {
        Some(l) => server.response_at(l).map_err(|e| match e {
            Error::Unstable { load, rate, .. } => Error::Unstable {
                slot: Some(slot.to_string()),
                load,
                rate,
            },
            other => other,
        }),
        None if server.is_load_dependent() => Err(Error::invalid(
            format!("binding.{slot}"),
            format!("queue server '{}' needs a known arrival rate", server.id),
        )),
        None => server.response_at(0.0),
    }
}

/// Server descriptor bound to `slot`.
pub fn bound_server<'a>(
    servers: &'a [ServerDescriptor],
    binding: &BTreeMap<String, String>,
    slot: &str,
) -> Result<&'a ServerDescriptor> {
    let id = binding
        .get(slot)
        .ok_or_else(|| Error::Allocation(format!("slot '{slot}' is not bound")))?;
    servers
        .iter()
        .find(|s| &s.id == id)
        .ok_or_else(|| Error::Allocation(format!("slot '{slot}' is bound to unknown server '{id}'")))
}

/// End-to-end completion-time distribution of `node`: series children
/// convolve, parallel children compose by maximum.
pub fn end_to_end(
    node: &WorkflowNode,
    servers: &[ServerDescriptor],
    binding: &BTreeMap<String, String>,
    branch_rates: &BTreeMap<String, Vec<f64>>,
    grid: &GridConfig,
) -> Result<NumericDistribution> {
    let loads = slot_loads(node, branch_rates);
    fn go(
        node: &WorkflowNode,
        servers: &[ServerDescriptor],
        binding: &BTreeMap<String, String>,
        loads: &BTreeMap<String, Option<f64>>,
        grid: &GridConfig,
    ) -> Result<NumericDistribution> {
        match node {
            WorkflowNode::Slot { id, .. } => {
                let server = bound_server(servers, binding, id)?;
                discretize(&slot_response(server, id, loads[id])?, grid)
            }
            WorkflowNode::Series { children, .. } | WorkflowNode::Parallel { children, .. } => {
                let series = matches!(node, WorkflowNode::Series { .. });
                let mut acc: Option<NumericDistribution> = None;
                for c in children {
                    let d = go(c, servers, binding, loads, grid)?;
                    acc = Some(match acc {
                        None => d,
                        Some(a) if series => a.convolve(&d),
                        Some(a) => a.max_compose(&d),
                    });
                }
                acc.ok_or_else(|| Error::invalid("workflow", "empty component"))
            }
        }
    }
    go(node, servers, binding, &loads, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig5_like() -> WorkflowNode {
        WorkflowNode::series(vec![
            WorkflowNode::parallel(vec![WorkflowNode::slot("a"), WorkflowNode::slot("b")]).with_arrival_rate(8.0),
            WorkflowNode::series(vec![WorkflowNode::slot("c"), WorkflowNode::slot("d")]).with_arrival_rate(4.0),
            WorkflowNode::parallel(vec![WorkflowNode::slot("e"), WorkflowNode::slot("f")]).with_arrival_rate(2.0),
        ])
        .with_arrival_rate(8.0)
    }

    fn servers(n: usize) -> Vec<ServerDescriptor> {
        (0..n)
            .map(|i| ServerDescriptor::queue(format!("s{i}"), 9.0 - i as f64))
            .collect()
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&WorkflowNode::slot("a")), DccClass::SingleQueue);
        let s = WorkflowNode::series(vec![WorkflowNode::slot("a"), WorkflowNode::slot("b")]);
        assert_eq!(classify(&s), DccClass::Sdcc);
        let p = WorkflowNode::parallel(vec![s.clone(), s]);
        assert_eq!(classify(&p), DccClass::Pdcc);
    }

    #[test]
    fn dap_counts() {
        assert_eq!(WorkflowNode::slot("a").internal_dap_count(), 0);
        let chain = WorkflowNode::series(vec![
            WorkflowNode::slot("a"),
            WorkflowNode::slot("b"),
            WorkflowNode::slot("c"),
        ]);
        assert_eq!(chain.internal_dap_count(), 2);
        let nested = WorkflowNode::series(vec![
            WorkflowNode::parallel(vec![WorkflowNode::slot("a"), WorkflowNode::slot("b")]),
            WorkflowNode::slot("c"),
        ]);
        assert_eq!(nested.internal_dap_count(), 3);
    }

    #[test]
    fn slots_and_paths() {
        let w = fig5_like();
        assert_eq!(w.slot_ids(), ["a", "b", "c", "d", "e", "f"]);
        assert_eq!(w.node_at("1/0"), Some(&WorkflowNode::slot("c")));
        assert!(w.node_at("3").is_none());
        let mut paths = Vec::new();
        w.visit(&mut |p, _| paths.push(p.to_string()));
        assert_eq!(paths[..3], ["", "0", "0/0"]);
    }

    #[test]
    fn branch_rate_mismatch_is_reported() {
        let w = WorkflowNode::parallel(vec![WorkflowNode::slot("a"), WorkflowNode::slot("b")])
            .with_arrival_rate(6.0)
            .with_branch_rates(vec![3.0, 2.0]);
        let v = Scenario::new(servers(2), w).violations();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].path, "workflow.branch_rates");
    }

    #[test]
    fn structural_violations() {
        let w = WorkflowNode::series(vec![
            WorkflowNode::parallel(vec![WorkflowNode::slot("a")]),
            WorkflowNode::slot("a"),
        ]);
        let v = Scenario::new(servers(1), w).violations();
        let paths: Vec<&str> = v.iter().map(|v| v.path.as_str()).collect();
        assert!(paths.contains(&"workflow.children[0].children"), "{v:?}");
        assert!(paths.contains(&"workflow.children[1].id"), "{v:?}");
        assert!(paths.contains(&"servers"), "{v:?}");
    }

    #[test]
    fn parse_reports_document_paths() {
        let text = r#"{"servers":[{"id":"s","dist":{"family":"nope"}}],"workflow":{"type":"slot","id":"a"}}"#;
        match parse_scenario(text) {
            Err(Error::Parse { path, .. }) => assert!(path.starts_with("servers[0]"), "{path}"),
            other => panic!("{other:?}"),
        }
        let text = r#"{"servers":[{"id":"s","service_rate":-1}],"workflow":{"type":"slot","id":"a"}}"#;
        match parse_scenario(text) {
            Err(Error::Invalid(v)) => assert_eq!(v[0].path, "servers[0].service_rate"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let mut s = Scenario::new(servers(6), fig5_like());
        s.binding.insert("a".into(), "s0".into());
        let text = s.to_json();
        let back = parse_scenario(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn loads_follow_rates() {
        let w = fig5_like();
        let mut rates = BTreeMap::new();
        rates.insert("0".to_string(), vec![5.0, 3.0]);
        let loads = slot_loads(&w, &rates);
        assert_eq!(loads["a"], Some(5.0));
        assert_eq!(loads["b"], Some(3.0));
        assert_eq!(loads["c"], Some(4.0));
        assert_eq!(loads["e"], None);
    }

    #[test]
    fn unstable_slot_is_named() {
        let w = WorkflowNode::slot("a").with_arrival_rate(10.0);
        let s = Scenario::new(servers(1), w);
        let binding = BTreeMap::from([("a".to_string(), "s0".to_string())]);
        let r = end_to_end(&s.workflow, &s.servers, &binding, &BTreeMap::new(), &s.grid);
        assert!(matches!(r, Err(Error::Unstable { slot: Some(ref id), .. }) if id == "a"), "{r:?}");
    }

    #[test]
    fn series_of_explicit_servers() {
        let servers = vec![
            ServerDescriptor::explicit("x", DistributionSpec::exponential(1.0)),
            ServerDescriptor::explicit("y", DistributionSpec::exponential(2.0)),
        ];
        let binding = BTreeMap::from([("a".to_string(), "x".to_string()), ("b".to_string(), "y".to_string())]);
        let w = WorkflowNode::series(vec![WorkflowNode::slot("a"), WorkflowNode::slot("b")]);
        let d = end_to_end(&w, &servers, &binding, &BTreeMap::new(), &GridConfig::default()).unwrap();
        let (m, v) = d.moments();
        assert!((m - 1.5).abs() < 1e-3 && (v - 1.25).abs() < 1e-3);
    }
}
