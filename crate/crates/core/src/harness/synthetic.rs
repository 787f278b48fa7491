//! Seeded random networks for tests and sweeps.
//!
//! Forwarding nodes form a bidirectional chain `b1 - b2 - ... - bF` with a
//! few extra shortcut links. Source `s_i` enters at one forwarding node and
//! its destination `d_i` hangs off another; flow `i` only moves toward its
//! exit along the chain order, so routing is loop-free by construction.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{FlowSpec, LinkSpec, NetworkSpec, NodeKind, NodeSpec, RouteSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub sources: usize,
    pub forwarders: usize,
    #[serde(default = "default_extra")]
    pub extra_links: usize,
    /// Upper bound on the number of paths of every flow.
    #[serde(default = "default_max_paths")]
    pub max_paths: usize,
    /// Capacities are drawn uniformly from this range, rounded to 0.1.
    #[serde(default = "default_capacity")]
    pub capacity: [f64; 2],
}

fn default_extra() -> usize {
    1
}

fn default_max_paths() -> usize {
    2
}

fn default_capacity() -> [f64; 2] {
    [2.0, 10.0]
}

impl SyntheticSpec {
    pub fn new(sources: usize, forwarders: usize) -> SyntheticSpec {
        SyntheticSpec {
            sources,
            forwarders,
            extra_links: default_extra(),
            max_paths: default_max_paths(),
            capacity: default_capacity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("synthetic network: {0}")]
    Invalid(String),
}

const ATTEMPTS: usize = 32;

/// Desk-scale cap on `sources + forwarders`.
pub const MAX_SYNTHETIC_NODES: usize = 512;

pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<NetworkSpec, SyntheticError> {
    let [lo, hi] = spec.capacity;
    if spec.sources == 0 || spec.forwarders == 0 {
        return Err(SyntheticError::Invalid(
            "need at least one source and one forwarding node".into(),
        ));
    }
    if spec.sources.saturating_add(spec.forwarders) > MAX_SYNTHETIC_NODES {
        return Err(SyntheticError::Invalid(format!(
            "{} sources and {} forwarding nodes exceed the limit of {MAX_SYNTHETIC_NODES} nodes",
            spec.sources, spec.forwarders
        )));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(SyntheticError::Invalid(format!(
            "capacity range [{lo}, {hi}] is not positive"
        )));
    }
    if spec.max_paths == 0 {
        return Err(SyntheticError::Invalid(
            "max_paths must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = |rng: &mut ChaCha8Rng| {
        let v: f64 = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        ((v * 10.0).round() / 10.0).max(0.1)
    };
    let f = spec.forwarders;
    let b = |j: usize| format!("b{}", j + 1);

    let mut nodes = Vec::new();
    for i in 1..=spec.sources {
        nodes.push(node(&format!("s{i}"), NodeKind::Source));
    }
    for j in 0..f {
        nodes.push(node(&b(j), NodeKind::Forwarding));
    }
    for i in 1..=spec.sources {
        nodes.push(node(&format!("d{i}"), NodeKind::Destination));
    }

    let mut links = Vec::new();
    let join = |links: &mut Vec<LinkSpec>, i: usize, j: usize, c: f64| {
        links.push(LinkSpec {
            id: format!("{}-{}", b(i), b(j)),
            ends: [b(i), b(j)],
            capacity: c,
            bidirectional: true,
        });
    };
    for j in 0..f.saturating_sub(1) {
        let c = cap(&mut rng);
        join(&mut links, j, j + 1, c);
    }
    let mut candidates: Vec<(usize, usize)> = (0..f)
        .flat_map(|i| (i + 2..f).map(move |j| (i, j)))
        .collect();
    candidates.shuffle(&mut rng);
    let mut shortcuts = BTreeSet::new();
    for &(i, j) in candidates.iter().take(spec.extra_links) {
        let c = cap(&mut rng);
        join(&mut links, i, j, c);
        shortcuts.insert((i, j));
    }

    let mut flows = Vec::new();
    let mut routing = Vec::new();
    let mut source_links = BTreeMap::new();
    for i in 1..=spec.sources {
        let entry = rng.gen_range(0..f);
        let exit = rng.gen_range(0..f);
        let (s, d) = (format!("s{i}"), format!("d{i}"));
        let c_in = cap(&mut rng);
        let c_out = cap(&mut rng);
        links.push(LinkSpec {
            id: format!("a{i}"),
            ends: [s.clone(), b(entry)],
            capacity: c_in,
            bidirectional: false,
        });
        links.push(LinkSpec {
            id: format!("o{i}"),
            ends: [b(exit), d.clone()],
            capacity: c_out,
            bidirectional: false,
        });
        source_links.insert(s.clone(), vec![format!("a{i}")]);
        let flow = format!("f{i}");
        flows.push(FlowSpec {
            id: flow.clone(),
            source: s,
            destination: d.clone(),
        });

        let hops = route_flow(entry, exit, &shortcuts, spec.max_paths, &mut rng);
        for (j, next) in hops {
            let next = next
                .into_iter()
                .map(|k| if k == usize::MAX { d.clone() } else { b(k) })
                .collect();
            routing.push(RouteSpec {
                node: b(j),
                flow: flow.clone(),
                next,
            });
        }
    }

    Ok(NetworkSpec {
        nodes,
        links,
        flows,
        routing,
        source_links,
    })
}

fn node(id: &str, kind: NodeKind) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        kind,
    }
}

/// Next hops per reachable forwarding node, with `usize::MAX` standing for
/// the destination.
fn route_flow(
    entry: usize,
    exit: usize,
    shortcuts: &BTreeSet<(usize, usize)>,
    max_paths: usize,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<usize, Vec<usize>> {
    let toward = |j: usize, k: usize| {
        if exit >= entry {
            j < k && k <= exit
        } else {
            exit <= k && k < j
        }
    };
    for attempt in 0..=ATTEMPTS {
        let use_shortcuts = attempt < ATTEMPTS;
        let mut hops: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut stack = vec![entry];
        while let Some(j) = stack.pop() {
            if hops.contains_key(&j) {
                continue;
            }
            if j == exit {
                hops.insert(j, vec![usize::MAX]);
                continue;
            }
            let step = if exit > j { j + 1 } else { j - 1 };
            let mut next = vec![step];
            if use_shortcuts {
                for &(a, c) in shortcuts {
                    let k = match j {
                        _ if a == j => c,
                        _ if c == j => a,
                        _ => continue,
                    };
                    if toward(j, k) && rng.gen_bool(0.5) {
                        next.push(k);
                    }
                }
            }
            next.sort_unstable();
            stack.extend(next.iter().copied());
            hops.insert(j, next);
        }
        if count_paths(&hops, entry) <= max_paths {
            return hops;
        }
    }
    unreachable!("the chain-only attempt has exactly one path")
}

fn count_paths(hops: &BTreeMap<usize, Vec<usize>>, j: usize) -> usize {
    hops[&j]
        .iter()
        .map(|&k| {
            if k == usize::MAX {
                1
            } else {
                count_paths(hops, k)
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Network;

    #[test]
    fn generated_networks_validate() {
        for seed in 0..200 {
            let spec = SyntheticSpec {
                extra_links: 2,
                ..SyntheticSpec::new(1 + seed as usize % 3, 2 + seed as usize % 4)
            };
            let net = Network::build(generate(&spec, seed).unwrap()).unwrap();
            for f in 0..net.flow_count() {
                let paths = net.paths(f).len();
                assert!((1..=2).contains(&paths), "seed {seed}: {paths} paths");
            }
        }
    }

    #[test]
    fn same_seed_same_network() {
        let spec = SyntheticSpec::new(3, 5);
        assert_eq!(generate(&spec, 9).unwrap(), generate(&spec, 9).unwrap());
        assert_ne!(generate(&spec, 9).unwrap(), generate(&spec, 10).unwrap());
    }

    #[test]
    fn single_forwarder() {
        let net = Network::build(generate(&SyntheticSpec::new(2, 1), 0).unwrap()).unwrap();
        assert_eq!(net.forwarders().len(), 1);
    }

    #[test]
    fn rejects_empty_and_bad_ranges() {
        assert!(generate(&SyntheticSpec::new(0, 3), 0).is_err());
        let spec = SyntheticSpec {
            capacity: [5.0, 1.0],
            ..SyntheticSpec::new(1, 3)
        };
        assert!(generate(&spec, 0).is_err());
    }
}
