//! The eight-source reference scenario.
//!
//! Topology and routing follow the published figure and routing table. The
//! link capacities and the direction of each forwarding link are only shown
//! graphically there, so the values below are a reconstruction: access links
//! 10, forwarding links 8, delivery links 10. Directions are the minimal
//! choice under which every listed next hop is usable. The metadata of the
//! returned configuration records this.

use std::collections::BTreeMap;

use super::config::{
    Beta, ExperimentConfig, NetworkConfig, RunConfig, StepConfig, Tolerances, UtilityConfig,
};
use crate::moments::STEP_LIKE;
use crate::net::{FlowSpec, LinkSpec, NetworkSpec, NodeKind, NodeSpec, RouteSpec};

pub const ACCESS_CAPACITY: f64 = 10.0;
pub const FORWARD_CAPACITY: f64 = 8.0;
pub const DELIVERY_CAPACITY: f64 = 10.0;

/// Forwarding links: `(a, b, bidirectional)`; one-way links run `a → b`.
const FORWARD_LINKS: [(&str, &str, bool); 11] = [
    ("b1", "b2", true),
    ("b1", "b7", false),
    ("b2", "b7", true),
    ("b2", "b8", true),
    ("b3", "b4", false),
    ("b3", "b8", true),
    ("b4", "b8", true),
    ("b5", "b7", true),
    ("b7", "b6", false),
    ("b7", "b8", true),
    ("b8", "b5", false),
];

const ENTRY: [&[&str]; 8] = [
    &["b1"],
    &["b1"],
    &["b1"],
    &["b1"],
    &["b2", "b3"],
    &["b2", "b3"],
    &["b1"],
    &["b1"],
];

const EXIT: [&str; 8] = ["b4", "b5", "b4", "b5", "b6", "b6", "b2", "b4"];

/// Next hops per forwarding node; `"d"` is the flow's own destination.
const ROUTE_S1: &[(&str, &[&str])] = &[
    ("b1", &["b2", "b7"]),
    ("b2", &["b7", "b8"]),
    ("b3", &["b4"]),
    ("b4", &["d"]),
    ("b7", &["b8"]),
    ("b8", &["b3", "b4"]),
];

const ROUTE_S2: &[(&str, &[&str])] = &[
    ("b1", &["b2", "b7"]),
    ("b2", &["b7", "b8"]),
    ("b5", &["d"]),
    ("b7", &["b5"]),
    ("b8", &["b5", "b7"]),
];

const ROUTE_S5: &[(&str, &[&str])] = &[
    ("b1", &["b7"]),
    ("b2", &["b1", "b7", "b8"]),
    ("b3", &["b4", "b8"]),
    ("b4", &["b8"]),
    ("b5", &["b7"]),
    ("b6", &["d"]),
    ("b7", &["b6"]),
    ("b8", &["b5", "b7"]),
];

const ROUTE_S7: &[(&str, &[&str])] = &[
    ("b1", &["b2", "b7"]),
    ("b2", &["d"]),
    ("b7", &["b2", "b8"]),
    ("b8", &["b2"]),
];

const ROUTES: [&[(&str, &[&str])]; 8] = [
    ROUTE_S1, ROUTE_S2, ROUTE_S1, ROUTE_S2, ROUTE_S5, ROUTE_S5, ROUTE_S7, ROUTE_S1,
];

pub fn fig2_network() -> NetworkSpec {
    let mut nodes = Vec::new();
    for i in 1..=8 {
        nodes.push(node(format!("s{i}"), NodeKind::Source));
    }
    for j in 1..=8 {
        nodes.push(node(format!("b{j}"), NodeKind::Forwarding));
    }
    for i in 1..=8 {
        nodes.push(node(format!("d{i}"), NodeKind::Destination));
    }

    let mut links = Vec::new();
    let mut source_links = BTreeMap::new();
    for (i, entry) in ENTRY.iter().enumerate() {
        let s = format!("s{}", i + 1);
        let ids: Vec<String> = entry.iter().map(|b| format!("{s}-{b}")).collect();
        for (id, b) in ids.iter().zip(entry.iter()) {
            links.push(link(id.clone(), &s, b, ACCESS_CAPACITY, false));
        }
        source_links.insert(s, ids);
    }
    for (a, b, bi) in FORWARD_LINKS {
        links.push(link(format!("{a}-{b}"), a, b, FORWARD_CAPACITY, bi));
    }
    for (i, b) in EXIT.iter().enumerate() {
        let d = format!("d{}", i + 1);
        links.push(link(format!("{b}-{d}"), b, &d, DELIVERY_CAPACITY, false));
    }

    let mut flows = Vec::new();
    let mut routing = Vec::new();
    for (i, table) in ROUTES.iter().enumerate() {
        let f = format!("f{}", i + 1);
        let d = format!("d{}", i + 1);
        flows.push(FlowSpec {
            id: f.clone(),
            source: format!("s{}", i + 1),
            destination: d.clone(),
        });
        for (b, next) in table.iter() {
            routing.push(RouteSpec {
                node: b.to_string(),
                flow: f.clone(),
                next: next
                    .iter()
                    .map(|n| if *n == "d" { d.clone() } else { n.to_string() })
                    .collect(),
            });
        }
    }

    NetworkSpec {
        nodes,
        links,
        flows,
        routing,
        source_links,
    }
}

pub fn builtin_fig2_scenario() -> ExperimentConfig {
    let mut metadata = BTreeMap::new();
    metadata.insert("scenario".to_string(), "fig2".to_string());
    metadata.insert("capacities".to_string(), "reconstructed".to_string());
    metadata.insert(
        "note".to_string(),
        format!(
            "link capacities and one-way directions are not given numerically in the source material; \
             access {ACCESS_CAPACITY}, forwarding {FORWARD_CAPACITY}, delivery {DELIVERY_CAPACITY}"
        ),
    );
    ExperimentConfig {
        seed: 0,
        network: NetworkConfig::inline(fig2_network()),
        utility: Some(UtilityConfig {
            coefficients: STEP_LIKE.to_vec(),
            xi: 0.0,
            zeta: Some(10.0),
            beta: Beta::Auto,
        }),
        utilities: BTreeMap::new(),
        steps: StepConfig::Auto {
            gamma: 0.1,
            margin: 0.9,
        },
        run: RunConfig {
            iterations: 2000,
            record_every: 10,
            reference: false,
            audit_messages: true,
            ..RunConfig::default()
        },
        tolerances: Tolerances::default(),
        metadata,
        base_dir: Default::default(),
    }
}

fn node(id: String, kind: NodeKind) -> NodeSpec {
    NodeSpec { id, kind }
}

fn link(id: String, a: &str, b: &str, capacity: f64, bidirectional: bool) -> LinkSpec {
    LinkSpec {
        id,
        ends: [a.to_string(), b.to_string()],
        capacity,
        bidirectional,
    }
}
