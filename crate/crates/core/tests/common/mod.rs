//! Small networks shared by the integration tests.

#![allow(dead_code)]

use std::path::Path;

use ncnum::harness::{parse_config, ExperimentConfig};
use ncnum::moments::UtilitySpec;
use ncnum::net::{Network, NetworkSpec};
use ncnum::problem::Instance;

/// Three sources, two forwarding nodes joined by a two-way link, every
/// second flow split over two paths.
pub const TOY_NETWORK: &str = r#"
nodes = [
  { id = "s1", kind = "source" },
  { id = "s2", kind = "source" },
  { id = "s3", kind = "source" },
  { id = "b1", kind = "forwarding" },
  { id = "b2", kind = "forwarding" },
  { id = "d1", kind = "destination" },
  { id = "d2", kind = "destination" },
  { id = "d3", kind = "destination" },
]
links = [
  { id = "a1", ends = ["s1", "b1"], capacity = 6 },
  { id = "a2", ends = ["s2", "b1"], capacity = 6 },
  { id = "a3", ends = ["s3", "b2"], capacity = 6 },
  { id = "m", ends = ["b1", "b2"], capacity = 5, bidirectional = true },
  { id = "o1", ends = ["b1", "d1"], capacity = 4 },
  { id = "o2", ends = ["b2", "d1"], capacity = 4 },
  { id = "o3", ends = ["b2", "d2"], capacity = 5 },
  { id = "o4", ends = ["b2", "d3"], capacity = 3 },
  { id = "o5", ends = ["b1", "d3"], capacity = 3 },
]
flows = [
  { id = "f1", source = "s1", destination = "d1" },
  { id = "f2", source = "s2", destination = "d2" },
  { id = "f3", source = "s3", destination = "d3" },
]
routing = [
  { node = "b1", flow = "f1", next = ["d1", "b2"] },
  { node = "b2", flow = "f1", next = ["d1"] },
  { node = "b1", flow = "f2", next = ["b2"] },
  { node = "b2", flow = "f2", next = ["d2"] },
  { node = "b2", flow = "f3", next = ["d3", "b1"] },
  { node = "b1", flow = "f3", next = ["d3"] },
]

[source_links]
s1 = ["a1"]
s2 = ["a2"]
s3 = ["a3"]
"#;

/// Non-concave degree-4 utility used on the toy network.
pub const TOY_UTILITY: [f64; 5] = [0.0, 0.5, 1.0, -0.6, 0.1];

/// `s -> b -> d` with access capacity `access` and delivery capacity `out`.
pub fn line_network(access: f64, out: f64) -> String {
    format!(
        r#"
nodes = [
  {{ id = "s", kind = "source" }},
  {{ id = "b", kind = "forwarding" }},
  {{ id = "d", kind = "destination" }},
]
links = [
  {{ id = "a", ends = ["s", "b"], capacity = {access:?} }},
  {{ id = "o", ends = ["b", "d"], capacity = {out:?} }},
]
flows = [{{ id = "f", source = "s", destination = "d" }}]
routing = [{{ node = "b", flow = "f", next = ["d"] }}]
source_links = {{ s = ["a"] }}
"#
    )
}

/// A source wired straight to its destination over one link.
pub fn direct_network(capacity: f64) -> String {
    format!(
        r#"
nodes = [{{ id = "s", kind = "source" }}, {{ id = "d", kind = "destination" }}]
links = [{{ id = "a", ends = ["s", "d"], capacity = {capacity:?} }}]
flows = [{{ id = "f", source = "s", destination = "d" }}]
source_links = {{ s = ["a"] }}
"#
    )
}

/// Two sources sharing the link `b1 -> b2` of capacity `shared`.
pub fn shared_link_network(shared: f64) -> String {
    format!(
        r#"
nodes = [
  {{ id = "s1", kind = "source" }},
  {{ id = "s2", kind = "source" }},
  {{ id = "b1", kind = "forwarding" }},
  {{ id = "b2", kind = "forwarding" }},
  {{ id = "d1", kind = "destination" }},
  {{ id = "d2", kind = "destination" }},
]
links = [
  {{ id = "a1", ends = ["s1", "b1"], capacity = 10 }},
  {{ id = "a2", ends = ["s2", "b1"], capacity = 10 }},
  {{ id = "m", ends = ["b1", "b2"], capacity = {shared:?} }},
  {{ id = "o1", ends = ["b2", "d1"], capacity = 10 }},
  {{ id = "o2", ends = ["b2", "d2"], capacity = 10 }},
]
flows = [
  {{ id = "f1", source = "s1", destination = "d1" }},
  {{ id = "f2", source = "s2", destination = "d2" }},
]
routing = [
  {{ node = "b1", flow = "f1", next = ["b2"] }},
  {{ node = "b1", flow = "f2", next = ["b2"] }},
  {{ node = "b2", flow = "f1", next = ["d1"] }},
  {{ node = "b2", flow = "f2", next = ["d2"] }},
]
source_links = {{ s1 = ["a1"], s2 = ["a2"] }}
"#
    )
}

pub fn network(text: &str) -> Network {
    let spec: NetworkSpec = ncnum::harness::parse_network(text).expect("fixture parses");
    Network::build(spec).expect("fixture is valid")
}

pub fn utility(coefficients: &[f64], xi: f64, zeta: f64) -> UtilitySpec {
    UtilitySpec::new(coefficients.to_vec(), xi, zeta, None).expect("valid utility")
}

/// Every source of `text` gets `u`.
pub fn instance(text: &str, u: &UtilitySpec) -> Instance {
    let net = network(text);
    let n = net.sources().len();
    Instance::new(net, vec![u.clone(); n]).expect("valid instance")
}

pub fn toy_instance() -> Instance {
    instance(TOY_NETWORK, &utility(&TOY_UTILITY, 0.0, 10.0))
}

/// Experiment configuration with the network inlined under `[network]`.
pub fn config(network: &str, extra: &str) -> ExperimentConfig {
    let mut text = String::from("[network]\n");
    text.push_str(&indent_network(network));
    text.push('\n');
    text.push_str(extra);
    parse_config(&text, Path::new(".")).unwrap_or_else(|e| panic!("fixture config: {e}\n{text}"))
}

/// Rewrites a standalone network document so it nests under `[network]`.
fn indent_network(network: &str) -> String {
    network.replace("[source_links]", "[network.source_links]")
}
