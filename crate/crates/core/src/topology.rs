//! Station electrical architecture.
//!
//! The station is a tree: the root is the grid connection, internal nodes are
//! splitters/cables/transformers with a current capacity and an efficiency, and
//! the leaves are charging ports (EVSEs). For every internal node `H` the net
//! current of its leaves, corrected by the node efficiency, must stay within
//! the node capacity:
//!
//! ```text
//! load(H) = sum(I_leaf) / eta_H   if sum >= 0
//!         = sum(I_leaf) * eta_H   if sum <  0   (export)
//! |load(H)| <= capacity_H
//! ```
//!
//! Leaves are numbered by depth-first traversal, so the leaves of any subtree
//! occupy a contiguous range of port indices.

use std::collections::HashSet;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle::BatterySpec;

/// Relative slack used when deciding whether a node is over capacity.
const CAPACITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("station tree has no charging ports")]
    EmptyTree,
    #[error("duplicate EVSE id {0}")]
    DuplicateId(usize),
    #[error("duplicate node id {0}")]
    DuplicateNodeId(usize),
    #[error("efficiency {value} of {what} is outside (0, 1]")]
    InvalidEfficiency { what: String, value: f64 },
    #[error("invalid {what}: {value}")]
    InvalidValue { what: String, value: f64 },
    #[error("parking order must be a permutation of the EVSE ids")]
    InvalidOrder,
    #[error("expected {expected} leaf currents, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("a station needs at least one charger")]
    NoChargers,
    #[error("station file: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChargerKind {
    #[serde(rename = "AC", alias = "ac")]
    Ac,
    #[serde(rename = "DC", alias = "dc")]
    Dc,
}

/// One charging port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvseSpec {
    pub id: usize,
    /// Effective voltage; already includes the phase factor.
    pub voltage_v: f64,
    pub i_max_charge_a: f64,
    pub i_max_discharge_a: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub kind: ChargerKind,
}

impl EvseSpec {
    fn validate(&self) -> Result<(), TopologyError> {
        let what = |f: &str| format!("{f} of EVSE {}", self.id);
        if !(self.voltage_v > 0.0 && self.voltage_v.is_finite()) {
            return Err(TopologyError::InvalidValue { what: what("voltage"), value: self.voltage_v });
        }
        for (name, v) in [("charge limit", self.i_max_charge_a), ("discharge limit", self.i_max_discharge_a)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TopologyError::InvalidValue { what: what(name), value: v });
            }
        }
        for (name, v) in [("charge efficiency", self.eta_charge), ("discharge efficiency", self.eta_discharge)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(TopologyError::InvalidEfficiency { what: what(name), value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArchChild {
    Node(ArchNode),
    Evse(EvseSpec),
}

/// Internal node of the architecture (splitter, cable, transformer, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ArchNode {
    pub id: usize,
    pub capacity_a: f64,
    pub eta: f64,
    pub children: Vec<ArchChild>,
}

impl ArchNode {
    pub fn new(id: usize, capacity_a: f64, eta: f64) -> Self {
        Self { id, capacity_a, eta, children: Vec::new() }
    }

    pub fn with_node(mut self, node: ArchNode) -> Self {
        self.children.push(ArchChild::Node(node));
        self
    }

    pub fn with_evse(mut self, evse: EvseSpec) -> Self {
        self.children.push(ArchChild::Evse(evse));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FlatNode {
    id: usize,
    capacity_a: f64,
    eta: f64,
    leaves: Range<usize>,
}

/// Validated, immutable station architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct StationTree {
    root: ArchNode,
    /// Ports in depth-first leaf order; the position is the port index.
    evses: Vec<EvseSpec>,
    /// Port indices in first-fit parking order.
    parking_order: Vec<usize>,
    /// Internal nodes in pre-order, so every child follows its parent.
    nodes: Vec<FlatNode>,
    depth: usize,
    battery: Option<BatterySpec>,
}

impl StationTree {
    /// Builds a station whose parking order is the depth-first leaf order.
    pub fn from_root(root: ArchNode) -> Result<Self, TopologyError> {
        Self::build(root, None)
    }

    /// Builds a station with an explicit first-fit parking order given as EVSE ids.
    pub fn new(root: ArchNode, evse_order: Vec<usize>) -> Result<Self, TopologyError> {
        Self::build(root, Some(evse_order))
    }

    fn build(root: ArchNode, evse_order: Option<Vec<usize>>) -> Result<Self, TopologyError> {
        let mut evses = Vec::new();
        let mut nodes = Vec::new();
        let mut node_ids = HashSet::new();
        let depth = flatten(&root, &mut evses, &mut nodes, &mut node_ids, 1)?;
        if evses.is_empty() {
            return Err(TopologyError::EmptyTree);
        }
        let mut seen = HashSet::with_capacity(evses.len());
        for e in &evses {
            e.validate()?;
            if !seen.insert(e.id) {
                return Err(TopologyError::DuplicateId(e.id));
            }
        }
        let parking_order = match evse_order {
            None => (0..evses.len()).collect(),
            Some(order) => {
                if order.len() != evses.len() {
                    return Err(TopologyError::InvalidOrder);
                }
                let mut used = vec![false; evses.len()];
                let mut out = Vec::with_capacity(order.len());
                for id in order {
                    let port = evses.iter().position(|e| e.id == id).ok_or(TopologyError::InvalidOrder)?;
                    if std::mem::replace(&mut used[port], true) {
                        return Err(TopologyError::InvalidOrder);
                    }
                    out.push(port);
                }
                out
            }
        };
        Ok(Self { root, evses, parking_order, nodes, depth, battery: None })
    }

    pub fn with_battery(mut self, battery: BatterySpec) -> Result<Self, TopologyError> {
        battery
            .validate()
            .map_err(|e| TopologyError::InvalidValue { what: format!("battery: {e}"), value: f64::NAN })?;
        self.battery = Some(battery);
        Ok(self)
    }

    pub fn root(&self) -> &ArchNode {
        &self.root
    }

    /// Number of charging ports.
    pub fn num_ports(&self) -> usize {
        self.evses.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Depth in internal-node levels; a root with only leaves has depth 1.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn evses(&self) -> &[EvseSpec] {
        &self.evses
    }

    pub fn evse(&self, port: usize) -> &EvseSpec {
        &self.evses[port]
    }

    pub fn parking_order(&self) -> &[usize] {
        &self.parking_order
    }

    /// EVSE ids in parking order.
    pub fn evse_order(&self) -> Vec<usize> {
        self.parking_order.iter().map(|&p| self.evses[p].id).collect()
    }

    pub fn battery(&self) -> Option<&BatterySpec> {
        self.battery.as_ref()
    }

    /// Capacity and port range of every internal node, pre-order.
    pub fn node_summaries(&self) -> impl Iterator<Item = (usize, f64, f64, Range<usize>)> + '_ {
        self.nodes.iter().map(|n| (n.id, n.capacity_a, n.eta, n.leaves.clone()))
    }

    fn check_len(&self, currents: &[f64]) -> Result<(), TopologyError> {
        if currents.len() != self.evses.len() {
            return Err(TopologyError::LengthMismatch { expected: self.evses.len(), got: currents.len() });
        }
        Ok(())
    }

    /// Efficiency-corrected signed load of every internal node, pre-order.
    pub fn node_load(&self, leaf_currents: &[f64]) -> Result<Vec<f64>, TopologyError> {
        self.check_len(leaf_currents)?;
        Ok(self.nodes.iter().map(|n| node_load_of(n, leaf_currents)).collect())
    }

    /// Largest amount by which any node exceeds its capacity; 0 when feasible.
    pub fn violation_excess(&self, leaf_currents: &[f64]) -> Result<f64, TopologyError> {
        self.check_len(leaf_currents)?;
        Ok(self.excess_unchecked(leaf_currents))
    }

    pub(crate) fn excess_unchecked(&self, leaf_currents: &[f64]) -> f64 {
        self.nodes.iter().map(|n| (node_load_of(n, leaf_currents).abs() - n.capacity_a).max(0.0)).fold(0.0, f64::max)
    }

    /// Returns the currents rescaled so that every node constraint holds.
    pub fn enforce_limits(&self, leaf_currents: &[f64]) -> Result<Vec<f64>, TopologyError> {
        let mut out = leaf_currents.to_vec();
        self.enforce_limits_in_place(&mut out)?;
        Ok(out)
    }

    /// In-place variant of [`Self::enforce_limits`].
    ///
    /// Nodes are visited children-first; a violating node scales all of its
    /// leaves by `capacity / |load|`. Uniform scaling never re-violates a
    /// descendant, so the pass converges quickly; the loop re-checks until a
    /// pass changes nothing, bounded by twice the depth.
    pub fn enforce_limits_in_place(&self, currents: &mut [f64]) -> Result<(), TopologyError> {
        self.check_len(currents)?;
        let max_passes = 2 * self.depth.max(1);
        for _ in 0..max_passes {
            let mut changed = false;
            for node in self.nodes.iter().rev() {
                let load = node_load_of(node, currents).abs();
                if load - node.capacity_a > CAPACITY_SLACK * node.capacity_a.max(1.0) {
                    let factor = node.capacity_a / load;
                    for c in &mut currents[node.leaves.clone()] {
                        *c *= factor;
                    }
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Ok(())
    }
}

#[inline]
fn node_load_of(node: &FlatNode, currents: &[f64]) -> f64 {
    let sum: f64 = currents[node.leaves.clone()].iter().sum();
    if sum >= 0.0 {
        sum / node.eta
    } else {
        sum * node.eta
    }
}

fn flatten(
    node: &ArchNode,
    evses: &mut Vec<EvseSpec>,
    nodes: &mut Vec<FlatNode>,
    node_ids: &mut HashSet<usize>,
    level: usize,
) -> Result<usize, TopologyError> {
    if !node_ids.insert(node.id) {
        return Err(TopologyError::DuplicateNodeId(node.id));
    }
    if !(node.eta > 0.0 && node.eta <= 1.0) {
        return Err(TopologyError::InvalidEfficiency { what: format!("node {}", node.id), value: node.eta });
    }
    if !(node.capacity_a >= 0.0) || node.capacity_a.is_nan() {
        return Err(TopologyError::InvalidValue {
            what: format!("capacity of node {}", node.id),
            value: node.capacity_a,
        });
    }
    let slot = nodes.len();
    let start = evses.len();
    nodes.push(FlatNode { id: node.id, capacity_a: node.capacity_a, eta: node.eta, leaves: start..start });
    let mut depth = level;
    for child in &node.children {
        match child {
            ArchChild::Evse(e) => evses.push(e.clone()),
            ArchChild::Node(n) => depth = depth.max(flatten(n, evses, nodes, node_ids, level + 1)?),
        }
    }
    nodes[slot].leaves = start..evses.len();
    Ok(depth)
}

// ---------------------------------------------------------------------------
// Presets

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// All ports directly under the grid connection.
    SingleType,
    /// One splitter per charger type.
    MultiType,
    /// One splitter per charger type, each feeding several sub-splitters.
    NestedSplitters,
}

/// Electrical template for one charger type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvseTemplate {
    pub voltage_v: f64,
    pub i_max_charge_a: f64,
    pub i_max_discharge_a: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetParams {
    pub ac: EvseTemplate,
    pub dc: EvseTemplate,
    pub node_eta: f64,
    /// Root capacity as a fraction of the summed port charge limits.
    pub root_utilization: f64,
    /// Type-splitter capacity as a fraction of its ports' summed limits.
    pub splitter_utilization: f64,
    /// Sub-splitter capacity fraction (nested layout only).
    pub sub_splitter_utilization: f64,
    pub leaves_per_splitter: usize,
    pub battery: Option<BatterySpec>,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self {
            // three-phase 400 V AC: effective voltage 400 * sqrt(3)
            ac: EvseTemplate {
                voltage_v: 692.8,
                i_max_charge_a: 32.0,
                i_max_discharge_a: 32.0,
                eta_charge: 0.95,
                eta_discharge: 0.95,
            },
            dc: EvseTemplate {
                voltage_v: 400.0,
                i_max_charge_a: 375.0,
                i_max_discharge_a: 375.0,
                eta_charge: 0.95,
                eta_discharge: 0.95,
            },
            node_eta: 0.99,
            root_utilization: 0.7,
            splitter_utilization: 0.8,
            sub_splitter_utilization: 0.9,
            leaves_per_splitter: 2,
            battery: Some(BatterySpec::default()),
        }
    }
}

/// Generates one of the standard architectures. DC ports come first in the
/// depth-first order and therefore in the default parking order.
pub fn preset_station(
    layout: Layout,
    ac_count: usize,
    dc_count: usize,
    params: &PresetParams,
) -> Result<StationTree, TopologyError> {
    if ac_count + dc_count == 0 {
        return Err(TopologyError::NoChargers);
    }
    let mut next_node = 1usize;
    let mut next_evse = 0usize;
    let mut make_leaf = |kind: ChargerKind| {
        let t = match kind {
            ChargerKind::Ac => &params.ac,
            ChargerKind::Dc => &params.dc,
        };
        let e = EvseSpec {
            id: next_evse,
            voltage_v: t.voltage_v,
            i_max_charge_a: t.i_max_charge_a,
            i_max_discharge_a: t.i_max_discharge_a,
            eta_charge: t.eta_charge,
            eta_discharge: t.eta_discharge,
            kind,
        };
        next_evse += 1;
        e
    };
    let groups = [(ChargerKind::Dc, dc_count), (ChargerKind::Ac, ac_count)];
    let limit_sum = |kind: ChargerKind, n: usize| {
        let t = if kind == ChargerKind::Ac { &params.ac } else { &params.dc };
        t.i_max_charge_a * n as f64
    };
    let total: f64 = groups.iter().map(|&(k, n)| limit_sum(k, n)).sum();
    let mut root = ArchNode::new(0, params.root_utilization * total, params.node_eta);

    match layout {
        Layout::SingleType => {
            for &(kind, n) in &groups {
                for _ in 0..n {
                    root = root.with_evse(make_leaf(kind));
                }
            }
        }
        Layout::MultiType | Layout::NestedSplitters => {
            for &(kind, n) in groups.iter().filter(|g| g.1 > 0) {
                let mut splitter =
                    ArchNode::new(next_node, params.splitter_utilization * limit_sum(kind, n), params.node_eta);
                next_node += 1;
                if layout == Layout::MultiType {
                    for _ in 0..n {
                        splitter = splitter.with_evse(make_leaf(kind));
                    }
                } else {
                    let per = params.leaves_per_splitter.max(1);
                    let mut remaining = n;
                    while remaining > 0 {
                        let take = per.min(remaining);
                        let mut sub = ArchNode::new(
                            next_node,
                            params.sub_splitter_utilization * limit_sum(kind, take),
                            params.node_eta,
                        );
                        next_node += 1;
                        for _ in 0..take {
                            sub = sub.with_evse(make_leaf(kind));
                        }
                        splitter = splitter.with_node(sub);
                        remaining -= take;
                    }
                }
                root = root.with_node(splitter);
            }
        }
    }
    let tree = StationTree::from_root(root)?;
    match &params.battery {
        Some(b) => tree.with_battery(b.clone()),
        None => Ok(tree),
    }
}

// ---------------------------------------------------------------------------
// JSON station files

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ChildJson {
    Node(NodeJson),
    Leaf(LeafJson),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<usize>,
    capacity_a: f64,
    #[serde(default = "one")]
    eta: f64,
    children: Vec<ChildJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<usize>,
    voltage_v: f64,
    i_max_charge_a: f64,
    #[serde(default)]
    i_max_discharge_a: f64,
    #[serde(default = "one")]
    eta_charge: f64,
    #[serde(default = "one")]
    eta_discharge: f64,
    kind: ChargerKind,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StationJson {
    root: NodeJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    evse_order: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    battery: Option<BatterySpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum StationDoc {
    Wrapped(StationJson),
    Bare(NodeJson),
}

fn node_from_json(n: NodeJson, next_node: &mut usize, next_evse: &mut usize) -> ArchNode {
    let id = n.id.unwrap_or(*next_node);
    *next_node = (*next_node).max(id) + 1;
    let mut node = ArchNode::new(id, n.capacity_a, n.eta);
    for child in n.children {
        node.children.push(match child {
            ChildJson::Node(c) => ArchChild::Node(node_from_json(c, next_node, next_evse)),
            ChildJson::Leaf(l) => {
                let id = l.id.unwrap_or(*next_evse);
                *next_evse = (*next_evse).max(id) + 1;
                ArchChild::Evse(EvseSpec {
                    id,
                    voltage_v: l.voltage_v,
                    i_max_charge_a: l.i_max_charge_a,
                    i_max_discharge_a: l.i_max_discharge_a,
                    eta_charge: l.eta_charge,
                    eta_discharge: l.eta_discharge,
                    kind: l.kind,
                })
            }
        });
    }
    node
}

fn node_to_json(n: &ArchNode) -> NodeJson {
    NodeJson {
        id: Some(n.id),
        capacity_a: n.capacity_a,
        eta: n.eta,
        children: n
            .children
            .iter()
            .map(|c| match c {
                ArchChild::Node(n) => ChildJson::Node(node_to_json(n)),
                ArchChild::Evse(e) => ChildJson::Leaf(LeafJson {
                    id: Some(e.id),
                    voltage_v: e.voltage_v,
                    i_max_charge_a: e.i_max_charge_a,
                    i_max_discharge_a: e.i_max_discharge_a,
                    eta_charge: e.eta_charge,
                    eta_discharge: e.eta_discharge,
                    kind: e.kind,
                }),
            })
            .collect(),
    }
}

impl StationTree {
    /// Parses a station document: either `{"root": node, "evse_order": [...], "battery": {...}}`
    /// or a bare root node object.
    pub fn from_json_str(text: &str) -> Result<Self, TopologyError> {
        let doc: StationDoc = serde_json::from_str(text).map_err(|e| TopologyError::File(e.to_string()))?;
        let (root, order, battery) = match doc {
            StationDoc::Wrapped(s) => (s.root, s.evse_order, s.battery),
            StationDoc::Bare(n) => (n, None, None),
        };
        let (mut next_node, mut next_evse) = (0, 0);
        let root = node_from_json(root, &mut next_node, &mut next_evse);
        let tree = Self::build(root, order)?;
        match battery {
            Some(b) => tree.with_battery(b),
            None => Ok(tree),
        }
    }

    pub fn load(path: &Path) -> Result<Self, TopologyError> {
        let text = fs::read_to_string(path).map_err(|e| TopologyError::File(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let doc = StationJson {
            root: node_to_json(&self.root),
            evse_order: Some(self.evse_order()),
            battery: self.battery.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("station serializes")
    }
}
