//! Network topology, routing tables and every index set derived from them.
//!
//! A [`NetworkSpec`] is the user-facing description: nodes, links, flows and
//! per-node next hops. [`Network::build`] validates it and derives the sets
//! the allocation algorithm works with (`L_s`, `L_b`, `I_b`, the per-flow
//! in/out link sets, per-link flow counts). The flattened decision vector is
//! described separately by [`Layout`], because its length depends on the
//! moment order of every source.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Forwarding,
    Destination,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
}

/// A link between two nodes. A unidirectional link carries traffic from
/// `ends[0]` to `ends[1]` only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub id: String,
    pub ends: [String; 2],
    pub capacity: f64,
    #[serde(default)]
    pub bidirectional: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub id: String,
    pub source: String,
    pub destination: String,
}

/// Next hops used by forwarding node `node` for traffic of flow `flow`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub node: String,
    pub flow: String,
    pub next: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub routing: Vec<RouteSpec>,
    /// First-hop links of every source node.
    #[serde(default)]
    pub source_links: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("unknown flow `{0}`")]
    UnknownFlow(String),
    #[error("link `{link}` has non-positive capacity {capacity}")]
    NonPositiveCapacity { link: String, capacity: f64 },
    #[error("link `{0}` connects a node to itself")]
    SelfLoop(String),
    #[error("nodes `{0}` and `{1}` are joined by more than one link")]
    ParallelLinks(String, String),
    #[error("flows are not a one-to-one map from sources to destinations: {0}")]
    FlowBijectionViolation(String),
    #[error("node `{node}` routes flow `{flow}` to `{next}`, which is not adjacent")]
    DanglingNextHop {
        node: String,
        flow: String,
        next: String,
    },
    #[error("link `{link}` is unidirectional and cannot carry traffic from `{from}`")]
    WrongDirection { link: String, from: String },
    #[error(
        "node `{node}` routes flow `{flow}` to `{next}`, which neither forwards nor terminates it"
    )]
    Misdelivered {
        node: String,
        flow: String,
        next: String,
    },
    #[error("node `{node}` of kind {kind:?} cannot hold routing entries")]
    NotForwarding { node: String, kind: NodeKind },
    #[error("routing entry for flow `{flow}` at `{node}` is empty")]
    EmptyRoute { node: String, flow: String },
    #[error("duplicate routing entry for flow `{flow}` at `{node}`")]
    DuplicateRoute { node: String, flow: String },
    #[error("node `{node}` receives flow `{flow}` but has no route for it")]
    DeadEnd { node: String, flow: String },
    #[error("node `{node}` routes flow `{flow}` but never receives it")]
    UnreachableRoute { node: String, flow: String },
    #[error("routing of flow `{0}` contains a loop")]
    RoutingLoop(String),
    #[error("link `{link}` listed for source `{source_id}` is not incident to it")]
    BadSourceLink { source_id: String, link: String },
    #[error("source `{0}` has no first-hop links")]
    SourceWithoutLinks(String),
}

/// Validated network with derived index sets. Node, link and flow handles
/// are indices into the declaration order of the spec.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    kinds: Vec<NodeKind>,
    node_index: HashMap<String, usize>,
    link_index: HashMap<String, usize>,
    flow_index: HashMap<String, usize>,
    link_ends: Vec<(usize, usize)>,
    sources: Vec<usize>,
    forwarders: Vec<usize>,
    source_ordinal: Vec<Option<usize>>,
    forwarder_ordinal: Vec<Option<usize>>,
    flow_source: Vec<usize>,
    flow_destination: Vec<usize>,
    source_flow: Vec<usize>,
    source_links: Vec<Vec<usize>>,
    incident: Vec<Vec<usize>>,
    neighbors: Vec<BTreeSet<usize>>,
    out_links: BTreeMap<(usize, usize), Vec<usize>>,
    in_links: BTreeMap<(usize, usize), Vec<usize>>,
    flows_at: Vec<Vec<usize>>,
    out_flows: BTreeMap<(usize, usize), Vec<usize>>,
    in_flows: BTreeMap<(usize, usize), Vec<usize>>,
    link_flows: Vec<BTreeSet<usize>>,
}

impl Network {
    pub fn build(spec: NetworkSpec) -> Result<Network, NetError> {
        let mut node_index = HashMap::new();
        let mut kinds = Vec::with_capacity(spec.nodes.len());
        for (k, n) in spec.nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), k).is_some() {
                return Err(NetError::DuplicateId(n.id.clone()));
            }
            kinds.push(n.kind);
        }
        let lookup_node = |id: &str| {
            node_index
                .get(id)
                .copied()
                .ok_or_else(|| NetError::UnknownNode(id.to_string()))
        };

        let mut link_index = HashMap::new();
        let mut link_ends = Vec::with_capacity(spec.links.len());
        let mut pair_seen = BTreeSet::new();
        let mut incident = vec![Vec::new(); kinds.len()];
        let mut neighbors = vec![BTreeSet::new(); kinds.len()];
        for (k, l) in spec.links.iter().enumerate() {
            if link_index.insert(l.id.clone(), k).is_some() || node_index.contains_key(&l.id) {
                return Err(NetError::DuplicateId(l.id.clone()));
            }
            if !(l.capacity > 0.0) || !l.capacity.is_finite() {
                return Err(NetError::NonPositiveCapacity {
                    link: l.id.clone(),
                    capacity: l.capacity,
                });
            }
            let a = lookup_node(&l.ends[0])?;
            let b = lookup_node(&l.ends[1])?;
            if a == b {
                return Err(NetError::SelfLoop(l.id.clone()));
            }
            if !pair_seen.insert((a.min(b), a.max(b))) {
                return Err(NetError::ParallelLinks(
                    l.ends[0].clone(),
                    l.ends[1].clone(),
                ));
            }
            link_ends.push((a, b));
            incident[a].push(k);
            incident[b].push(k);
            neighbors[a].insert(b);
            neighbors[b].insert(a);
        }

        // Flows: a bijection between source and destination nodes.
        let mut flow_index = HashMap::new();
        let mut flow_source = Vec::new();
        let mut flow_destination = Vec::new();
        let mut source_flow_of_node: Vec<Option<usize>> = vec![None; kinds.len()];
        let mut dest_flow_of_node: Vec<Option<usize>> = vec![None; kinds.len()];
        for (k, f) in spec.flows.iter().enumerate() {
            if flow_index.insert(f.id.clone(), k).is_some() {
                return Err(NetError::DuplicateId(f.id.clone()));
            }
            let s = lookup_node(&f.source)?;
            let d = lookup_node(&f.destination)?;
            if kinds[s] != NodeKind::Source {
                return Err(NetError::FlowBijectionViolation(format!(
                    "flow `{}` starts at non-source `{}`",
                    f.id, f.source
                )));
            }
            if kinds[d] != NodeKind::Destination {
                return Err(NetError::FlowBijectionViolation(format!(
                    "flow `{}` ends at non-destination `{}`",
                    f.id, f.destination
                )));
            }
            if source_flow_of_node[s].replace(k).is_some() {
                return Err(NetError::FlowBijectionViolation(format!(
                    "source `{}` originates more than one flow",
                    f.source
                )));
            }
            if dest_flow_of_node[d].replace(k).is_some() {
                return Err(NetError::FlowBijectionViolation(format!(
                    "destination `{}` terminates more than one flow",
                    f.destination
                )));
            }
            flow_source.push(s);
            flow_destination.push(d);
        }
        for (k, kind) in kinds.iter().enumerate() {
            let unmatched = match kind {
                NodeKind::Source => source_flow_of_node[k].is_none(),
                NodeKind::Destination => dest_flow_of_node[k].is_none(),
                NodeKind::Forwarding => false,
            };
            if unmatched {
                return Err(NetError::FlowBijectionViolation(format!(
                    "node `{}` carries no flow",
                    spec.nodes[k].id
                )));
            }
        }

        let sources: Vec<usize> = (0..kinds.len())
            .filter(|&k| kinds[k] == NodeKind::Source)
            .collect();
        let forwarders: Vec<usize> = (0..kinds.len())
            .filter(|&k| kinds[k] == NodeKind::Forwarding)
            .collect();
        let mut source_ordinal = vec![None; kinds.len()];
        for (o, &s) in sources.iter().enumerate() {
            source_ordinal[s] = Some(o);
        }
        let mut forwarder_ordinal = vec![None; kinds.len()];
        for (o, &b) in forwarders.iter().enumerate() {
            forwarder_ordinal[b] = Some(o);
        }
        let source_flow: Vec<usize> = sources
            .iter()
            .map(|&s| source_flow_of_node[s].expect("checked above"))
            .collect();

        let lookup_link = |id: &str| {
            link_index
                .get(id)
                .copied()
                .ok_or_else(|| NetError::UnknownLink(id.to_string()))
        };
        let other_end = |l: usize, n: usize| {
            let (a, b) = link_ends[l];
            if a == n {
                b
            } else {
                a
            }
        };
        let can_send =
            |l: usize, from: usize| spec.links[l].bidirectional || link_ends[l].0 == from;

        // First hops of every source.
        let mut source_links = vec![Vec::new(); sources.len()];
        let mut in_links: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (sid, links) in &spec.source_links {
            let s = lookup_node(sid)?;
            let Some(o) = source_ordinal[s] else {
                return Err(NetError::NotForwarding {
                    node: sid.clone(),
                    kind: kinds[s],
                });
            };
            let flow = source_flow[o];
            let mut ls = Vec::new();
            for lid in links {
                let l = lookup_link(lid)?;
                if !incident[s].contains(&l) {
                    return Err(NetError::BadSourceLink {
                        source_id: sid.clone(),
                        link: lid.clone(),
                    });
                }
                if !can_send(l, s) {
                    return Err(NetError::WrongDirection {
                        link: lid.clone(),
                        from: sid.clone(),
                    });
                }
                let e = other_end(l, s);
                match kinds[e] {
                    NodeKind::Forwarding => {}
                    NodeKind::Destination if e == flow_destination[flow] => {}
                    _ => {
                        return Err(NetError::Misdelivered {
                            node: sid.clone(),
                            flow: spec.flows[flow].id.clone(),
                            next: spec.nodes[e].id.clone(),
                        })
                    }
                }
                if ls.contains(&l) {
                    return Err(NetError::DuplicateId(lid.clone()));
                }
                ls.push(l);
                if kinds[e] == NodeKind::Forwarding {
                    in_links.entry((e, flow)).or_default().push(l);
                }
            }
            ls.sort_unstable();
            source_links[o] = ls;
        }
        for (o, ls) in source_links.iter().enumerate() {
            if ls.is_empty() {
                return Err(NetError::SourceWithoutLinks(
                    spec.nodes[sources[o]].id.clone(),
                ));
            }
        }

        // Forwarding routes.
        let mut out_links: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for r in &spec.routing {
            let b = lookup_node(&r.node)?;
            let i = *flow_index
                .get(&r.flow)
                .ok_or_else(|| NetError::UnknownFlow(r.flow.clone()))?;
            if kinds[b] != NodeKind::Forwarding {
                return Err(NetError::NotForwarding {
                    node: r.node.clone(),
                    kind: kinds[b],
                });
            }
            if r.next.is_empty() {
                return Err(NetError::EmptyRoute {
                    node: r.node.clone(),
                    flow: r.flow.clone(),
                });
            }
            if out_links.contains_key(&(b, i)) {
                return Err(NetError::DuplicateRoute {
                    node: r.node.clone(),
                    flow: r.flow.clone(),
                });
            }
            let mut ls = Vec::new();
            for nid in &r.next {
                let n = lookup_node(nid)?;
                let Some(&l) = incident[b].iter().find(|&&l| other_end(l, b) == n) else {
                    return Err(NetError::DanglingNextHop {
                        node: r.node.clone(),
                        flow: r.flow.clone(),
                        next: nid.clone(),
                    });
                };
                if !can_send(l, b) {
                    return Err(NetError::WrongDirection {
                        link: spec.links[l].id.clone(),
                        from: r.node.clone(),
                    });
                }
                let ok = match kinds[n] {
                    NodeKind::Forwarding => true,
                    NodeKind::Destination => n == flow_destination[i],
                    NodeKind::Source => false,
                };
                if !ok {
                    return Err(NetError::Misdelivered {
                        node: r.node.clone(),
                        flow: r.flow.clone(),
                        next: nid.clone(),
                    });
                }
                if !ls.contains(&l) {
                    ls.push(l);
                }
                if kinds[n] == NodeKind::Forwarding {
                    in_links.entry((n, i)).or_default().push(l);
                }
            }
            ls.sort_unstable();
            out_links.insert((b, i), ls);
        }
        for v in in_links.values_mut() {
            v.sort_unstable();
            v.dedup();
        }

        // Routing exists exactly where the flow arrives.
        for &(b, i) in in_links.keys() {
            if !out_links.contains_key(&(b, i)) {
                return Err(NetError::DeadEnd {
                    node: spec.nodes[b].id.clone(),
                    flow: spec.flows[i].id.clone(),
                });
            }
        }
        for &(b, i) in out_links.keys() {
            if !in_links.contains_key(&(b, i)) {
                return Err(NetError::UnreachableRoute {
                    node: spec.nodes[b].id.clone(),
                    flow: spec.flows[i].id.clone(),
                });
            }
        }

        // Loop check per flow (DFS over the routing graph of that flow).
        for i in 0..spec.flows.len() {
            let mut state = vec![0u8; kinds.len()];
            fn visit(
                n: usize,
                i: usize,
                state: &mut [u8],
                out_links: &BTreeMap<(usize, usize), Vec<usize>>,
                other_end: &dyn Fn(usize, usize) -> usize,
            ) -> bool {
                if state[n] == 1 {
                    return false;
                }
                if state[n] == 2 {
                    return true;
                }
                state[n] = 1;
                if let Some(ls) = out_links.get(&(n, i)) {
                    for &l in ls {
                        if !visit(other_end(l, n), i, state, out_links, other_end) {
                            return false;
                        }
                    }
                }
                state[n] = 2;
                true
            }
            let starts: Vec<usize> = out_links
                .keys()
                .filter(|(_, f)| *f == i)
                .map(|(b, _)| *b)
                .collect();
            for b in starts {
                if !visit(b, i, &mut state, &out_links, &other_end) {
                    return Err(NetError::RoutingLoop(spec.flows[i].id.clone()));
                }
            }
        }

        let mut flows_at = vec![Vec::new(); kinds.len()];
        let mut out_flows: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        let mut in_flows: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        let mut link_flows = vec![BTreeSet::new(); spec.links.len()];
        for (&(b, i), ls) in &out_links {
            flows_at[b].push(i);
            for &l in ls {
                out_flows.entry((b, l)).or_default().push(i);
                in_flows.entry((other_end(l, b), l)).or_default().push(i);
                link_flows[l].insert(i);
            }
        }
        for (o, ls) in source_links.iter().enumerate() {
            let s = sources[o];
            for &l in ls {
                let i = source_flow[o];
                out_flows.entry((s, l)).or_default().push(i);
                in_flows.entry((other_end(l, s), l)).or_default().push(i);
                link_flows[l].insert(i);
            }
        }
        for v in flows_at.iter_mut() {
            v.sort_unstable();
        }
        for v in out_flows.values_mut().chain(in_flows.values_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        for v in incident.iter_mut() {
            v.sort_unstable();
        }

        Ok(Network {
            spec,
            kinds,
            node_index,
            link_index,
            flow_index,
            link_ends,
            sources,
            forwarders,
            source_ordinal,
            forwarder_ordinal,
            flow_source,
            flow_destination,
            source_flow,
            source_links,
            incident,
            neighbors,
            out_links,
            in_links,
            flows_at,
            out_flows,
            in_flows,
            link_flows,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn link_count(&self) -> usize {
        self.link_ends.len()
    }

    pub fn flow_count(&self) -> usize {
        self.flow_source.len()
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn node_id(&self, node: usize) -> &str {
        &self.spec.nodes[node].id
    }

    pub fn link_id(&self, link: usize) -> &str {
        &self.spec.links[link].id
    }

    pub fn flow_id(&self, flow: usize) -> &str {
        &self.spec.flows[flow].id
    }

    pub fn node(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn link(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn flow(&self, id: &str) -> Option<usize> {
        self.flow_index.get(id).copied()
    }

    pub fn capacity(&self, link: usize) -> f64 {
        self.spec.links[link].capacity
    }

    pub fn is_bidirectional(&self, link: usize) -> bool {
        self.spec.links[link].bidirectional
    }

    pub fn link_ends(&self, link: usize) -> (usize, usize) {
        self.link_ends[link]
    }

    /// `e_l(b)`: the node reached from `node` through `link`.
    pub fn other_end(&self, link: usize, node: usize) -> usize {
        let (a, b) = self.link_ends[link];
        debug_assert!(a == node || b == node);
        if a == node {
            b
        } else {
            a
        }
    }

    /// Source nodes in declaration order.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// Forwarding nodes in declaration order.
    pub fn forwarders(&self) -> &[usize] {
        &self.forwarders
    }

    pub fn source_ordinal(&self, node: usize) -> Option<usize> {
        self.source_ordinal[node]
    }

    pub fn forwarder_ordinal(&self, node: usize) -> Option<usize> {
        self.forwarder_ordinal[node]
    }

    pub fn flow_source(&self, flow: usize) -> usize {
        self.flow_source[flow]
    }

    pub fn flow_destination(&self, flow: usize) -> usize {
        self.flow_destination[flow]
    }

    /// Flow originated by the source with the given ordinal.
    pub fn source_flow(&self, source: usize) -> usize {
        self.source_flow[source]
    }

    /// `L_s` for the source with the given ordinal.
    pub fn source_links(&self, source: usize) -> &[usize] {
        &self.source_links[source]
    }

    /// `L_b`: every link incident to `node`.
    pub fn incident_links(&self, node: usize) -> &[usize] {
        &self.incident[node]
    }

    pub fn neighbors(&self, node: usize) -> &BTreeSet<usize> {
        &self.neighbors[node]
    }

    pub fn are_neighbors(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].contains(&b)
    }

    /// `I_b`: flows routed through forwarding node `node`.
    pub fn flows_at(&self, node: usize) -> &[usize] {
        &self.flows_at[node]
    }

    /// `L_{b,i}^out`.
    pub fn out_links(&self, node: usize, flow: usize) -> &[usize] {
        self.out_links
            .get(&(node, flow))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// `L_{b,i}^in`.
    pub fn in_links(&self, node: usize, flow: usize) -> &[usize] {
        self.in_links
            .get(&(node, flow))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// `I_{b,l}^out`: flows `node` sends on `link` (sources included).
    pub fn out_flows(&self, node: usize, link: usize) -> &[usize] {
        self.out_flows
            .get(&(node, link))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// `I_{b,l}^in`: flows `node` receives on `link`.
    pub fn in_flows(&self, node: usize, link: usize) -> &[usize] {
        self.in_flows
            .get(&(node, link))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// `m_l`: number of distinct flows that traverse `link`.
    pub fn flows_on_link(&self, link: usize) -> usize {
        self.link_flows[link].len()
    }

    pub fn link_flow_set(&self, link: usize) -> &BTreeSet<usize> {
        &self.link_flows[link]
    }

    /// All source-to-destination paths of `flow`, as link sequences.
    pub fn paths(&self, flow: usize) -> Vec<Vec<usize>> {
        let s = self.flow_source[flow];
        let o = self.source_ordinal[s].expect("flow source is a source");
        let mut out = Vec::new();
        for &l in &self.source_links[o] {
            let mut prefix = vec![l];
            self.extend_paths(flow, self.other_end(l, s), &mut prefix, &mut out);
        }
        out
    }

    /// Number of paths of `flow`, saturating at `u64::MAX`. Linear in the
    /// network size, unlike [`Network::paths`].
    pub fn path_count(&self, flow: usize) -> u64 {
        let s = self.flow_source[flow];
        let o = self.source_ordinal[s].expect("flow source is a source");
        let mut memo = vec![None; self.node_count()];
        self.source_links[o].iter().fold(0u64, |acc, &l| {
            acc.saturating_add(self.count_from(flow, self.other_end(l, s), &mut memo))
        })
    }

    fn count_from(&self, flow: usize, at: usize, memo: &mut [Option<u64>]) -> u64 {
        if at == self.flow_destination[flow] {
            return 1;
        }
        if let Some(c) = memo[at] {
            return c;
        }
        let mut c = 0u64;
        for &l in self.out_links(at, flow) {
            c = c.saturating_add(self.count_from(flow, self.other_end(l, at), memo));
        }
        memo[at] = Some(c);
        c
    }

    fn extend_paths(
        &self,
        flow: usize,
        at: usize,
        prefix: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if at == self.flow_destination[flow] {
            out.push(prefix.clone());
            return;
        }
        for &l in self.out_links(at, flow) {
            prefix.push(l);
            self.extend_paths(flow, self.other_end(l, at), prefix, out);
            prefix.pop();
        }
    }
}

/// One entry of the flattened decision vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// `x_{s,l}^out`, keyed by source ordinal and link.
    SourceRate { source: usize, link: usize },
    /// `m_{s,j}`.
    Moment { source: usize, j: usize },
    /// `r_s`.
    Aggregate { source: usize },
    /// `x_{i,b,l}^out`, keyed by forwarding node index, link and flow.
    Forward {
        node: usize,
        link: usize,
        flow: usize,
    },
}

impl Var {
    pub fn is_rate(&self) -> bool {
        matches!(self, Var::SourceRate { .. } | Var::Forward { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceBlock {
    pub start: usize,
    pub links: usize,
    pub order: usize,
}

impl SourceBlock {
    pub fn rates(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.links
    }

    pub fn moments(&self) -> std::ops::Range<usize> {
        let m0 = self.start + self.links;
        m0..m0 + self.order + 1
    }

    pub fn aggregate(&self) -> usize {
        self.start + self.links + self.order + 1
    }

    pub fn len(&self) -> usize {
        self.links + self.order + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len()
    }
}

/// Flattened ordering of the decision vector: per source (in declaration
/// order) its first-hop rates, moments `m_0..m_ℓ` and aggregate rate; then
/// forwarding rates grouped by node, link and flow.
#[derive(Clone, Debug)]
pub struct Layout {
    vars: Vec<Var>,
    index: HashMap<Var, usize>,
    blocks: Vec<SourceBlock>,
    forward_start: usize,
    owner: Vec<usize>,
}

impl Layout {
    /// `orders[k]` is the moment order ℓ of the k-th source.
    pub fn new(net: &Network, orders: &[usize]) -> Layout {
        assert_eq!(orders.len(), net.sources().len(), "one order per source");
        let mut vars = Vec::new();
        let mut owner = Vec::new();
        let mut blocks = Vec::new();
        for (o, &s) in net.sources().iter().enumerate() {
            let start = vars.len();
            for &l in net.source_links(o) {
                vars.push(Var::SourceRate { source: o, link: l });
            }
            for j in 0..=orders[o] {
                vars.push(Var::Moment { source: o, j });
            }
            vars.push(Var::Aggregate { source: o });
            owner.resize(vars.len(), s);
            blocks.push(SourceBlock {
                start,
                links: net.source_links(o).len(),
                order: orders[o],
            });
        }
        let forward_start = vars.len();
        for &b in net.forwarders() {
            for &l in net.incident_links(b) {
                for &i in net.out_flows(b, l) {
                    vars.push(Var::Forward {
                        node: b,
                        link: l,
                        flow: i,
                    });
                    owner.push(b);
                }
            }
        }
        let index = vars.iter().enumerate().map(|(k, v)| (*v, k)).collect();
        Layout {
            vars,
            index,
            blocks,
            forward_start,
            owner,
        }
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn var(&self, k: usize) -> Var {
        self.vars[k]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn index_of(&self, v: &Var) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn block(&self, source: usize) -> SourceBlock {
        self.blocks[source]
    }

    pub fn blocks(&self) -> &[SourceBlock] {
        &self.blocks
    }

    pub fn forward_range(&self) -> std::ops::Range<usize> {
        self.forward_start..self.vars.len()
    }

    /// Node that owns (computes and publishes) variable `k`.
    pub fn owner(&self, k: usize) -> usize {
        self.owner[k]
    }

    /// Index of the rate variable carrying `flow` from `node` over `link`.
    pub fn sent_var(&self, net: &Network, node: usize, link: usize, flow: usize) -> Option<usize> {
        match net.kind(node) {
            NodeKind::Source => {
                let o = net.source_ordinal(node)?;
                if net.source_flow(o) != flow {
                    return None;
                }
                self.index_of(&Var::SourceRate { source: o, link })
            }
            NodeKind::Forwarding => self.index_of(&Var::Forward { node, link, flow }),
            NodeKind::Destination => None,
        }
    }

    /// Rate variables `node` sends over `link`.
    pub fn vars_sent(&self, net: &Network, node: usize, link: usize) -> Vec<usize> {
        net.out_flows(node, link)
            .iter()
            .filter_map(|&i| self.sent_var(net, node, link, i))
            .collect()
    }
}

/// Row-compressed sparse matrix with small rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn row_dot(&self, row: usize, x: &[f64]) -> f64 {
        self.rows[row].iter().map(|&(c, v)| v * x[c]).sum()
    }

    /// `y += Mᵀ w`.
    pub fn add_transpose_mul(&self, w: &[f64], y: &mut [f64]) {
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                y[c] += v * w[r];
            }
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows.len(), self.cols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Column lists: for each column, `(row, value)` pairs.
    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.cols];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                cols[c].push((r, v));
            }
        }
        cols
    }
}

/// Conservation row keys `(b, i)`, forwarding nodes in order, flows sorted.
pub fn conservation_rows(net: &Network) -> Vec<(usize, usize)> {
    net.forwarders()
        .iter()
        .flat_map(|&b| net.flows_at(b).iter().map(move |&i| (b, i)))
        .collect()
}

/// Capacity row keys `(b, l)`, one per forwarding node and incident link.
pub fn capacity_rows(net: &Network) -> Vec<(usize, usize)> {
    net.forwarders()
        .iter()
        .flat_map(|&b| net.incident_links(b).iter().map(move |&l| (b, l)))
        .collect()
}

/// Edge-node incidence matrix `B`: one row per `(b, i)`, `+1` on rates of
/// flow `i` leaving `b`, `-1` on rates of flow `i` arriving at `b`.
pub fn incidence_matrix(net: &Network, layout: &Layout) -> SparseRows {
    let rows = conservation_rows(net)
        .into_iter()
        .map(|(b, i)| {
            let mut row = Vec::new();
            for &l in net.out_links(b, i) {
                row.push((layout.sent_var(net, b, l, i).expect("forward var"), 1.0));
            }
            for &l in net.in_links(b, i) {
                let p = net.other_end(l, b);
                row.push((layout.sent_var(net, p, l, i).expect("incoming var"), -1.0));
            }
            row.sort_by_key(|e| e.0);
            row
        })
        .collect();
    SparseRows {
        cols: layout.dim(),
        rows,
    }
}

/// Capacity matrix `A`: row `(b, l)` sums the rates `b` sends on `l` and,
/// when `l` is bidirectional, the rates its neighbour sends back on `l`.
pub fn capacity_matrix(net: &Network, layout: &Layout) -> SparseRows {
    let rows = capacity_rows(net)
        .into_iter()
        .map(|(b, l)| capacity_row(net, layout, b, l))
        .collect();
    SparseRows {
        cols: layout.dim(),
        rows,
    }
}

fn capacity_row(net: &Network, layout: &Layout, b: usize, l: usize) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = layout
        .vars_sent(net, b, l)
        .into_iter()
        .map(|k| (k, 1.0))
        .collect();
    if net.is_bidirectional(l) {
        let e = net.other_end(l, b);
        row.extend(layout.vars_sent(net, e, l).into_iter().map(|k| (k, 1.0)));
    }
    row.sort_by_key(|e| e.0);
    row
}

/// Capacities aligned with [`capacity_rows`].
pub fn capacity_vector(net: &Network) -> Vec<f64> {
    capacity_rows(net)
        .into_iter()
        .map(|(_, l)| net.capacity(l))
        .collect()
}

/// `1_{b,l} x_{b,l}^out + δ_{b,l} x_{e_l(b),l}^out`.
pub fn link_load(
    net: &Network,
    layout: &Layout,
    x: &[f64],
    node: usize,
    link: usize,
) -> Result<f64, NetError> {
    if link >= net.link_count() || !net.incident_links(node).contains(&link) {
        return Err(NetError::UnknownLink(format!(
            "link #{link} at `{}`",
            net.node_id(node)
        )));
    }
    Ok(capacity_row(net, layout, node, link)
        .into_iter()
        .map(|(k, v)| v * x[k])
        .sum())
}

/// Total rate carried by `link` in either direction.
pub fn link_traffic(net: &Network, layout: &Layout, x: &[f64], link: usize) -> f64 {
    let (a, b) = net.link_ends(link);
    layout
        .vars_sent(net, a, link)
        .into_iter()
        .chain(layout.vars_sent(net, b, link))
        .map(|k| x[k])
        .sum()
}

/// `ω` for each column of `B`: the number of conservation rows a variable
/// enters. Rates into a destination count once, rates between forwarding
/// nodes twice, source first hops once (zero when they reach the
/// destination directly); moment and aggregate columns are empty.
pub fn omega(net: &Network, layout: &Layout, k: usize) -> f64 {
    match layout.var(k) {
        Var::SourceRate { source, link } => {
            let s = net.sources()[source];
            if net.kind(net.other_end(link, s)) == NodeKind::Forwarding {
                1.0
            } else {
                0.0
            }
        }
        Var::Forward { node, link, .. } => {
            if net.kind(net.other_end(link, node)) == NodeKind::Forwarding {
                2.0
            } else {
                1.0
            }
        }
        Var::Moment { .. } | Var::Aggregate { .. } => 0.0,
    }
}
