//! Experiment configuration: a single TOML document describing the network,
//! the utilities, the step sizes and the run.
//!
//! Loading happens in three passes. The raw table is checked first so that
//! structural mistakes can name the offending element, then the document is
//! deserialized, then every semantic rule is checked and all failures are
//! reported together.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::synthetic::{self, SyntheticSpec};
use crate::baselines::CentralConfig;
use crate::dpda::{auto_step_sizes, ExecutionOrder, StepSizes, DEFAULT_MAX_DIM};
use crate::geometry::DykstraConfig;
use crate::moments::UtilitySpec;
use crate::net::{FlowSpec, LinkSpec, Network, NetworkSpec, NodeSpec, RouteSpec};
use crate::problem::Instance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for synthetic networks and shuffled execution.
    #[serde(default)]
    pub seed: u64,
    pub network: NetworkConfig,
    /// Utility shared by every source without an entry in `utilities`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityConfig>,
    /// Per-source utilities keyed by source id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub utilities: BTreeMap<String, UtilityConfig>,
    #[serde(default)]
    pub steps: StepConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Exactly one of `file`, `synthetic` or the inline fields must be given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flows: Vec<FlowSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routing: Vec<RouteSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_links: BTreeMap<String, Vec<String>>,
}

impl NetworkConfig {
    pub fn inline(spec: NetworkSpec) -> NetworkConfig {
        NetworkConfig {
            file: None,
            synthetic: None,
            nodes: spec.nodes,
            links: spec.links,
            flows: spec.flows,
            routing: spec.routing,
            source_links: spec.source_links,
        }
    }

    fn has_inline(&self) -> bool {
        !(self.nodes.is_empty()
            && self.links.is_empty()
            && self.flows.is_empty()
            && self.routing.is_empty()
            && self.source_links.is_empty())
    }

    fn inline_spec(&self) -> NetworkSpec {
        NetworkSpec {
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            flows: self.flows.clone(),
            routing: self.routing.clone(),
            source_links: self.source_links.clone(),
        }
    }
}

/// `β` as a number or `"auto"` (`ζ^{2/ℓ}`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BetaRepr", into = "BetaRepr")]
pub enum Beta {
    #[default]
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BetaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<BetaRepr> for Beta {
    type Error = String;

    fn try_from(r: BetaRepr) -> Result<Beta, String> {
        match r {
            BetaRepr::Number(v) => Ok(Beta::Value(v)),
            BetaRepr::Text(s) if s == "auto" => Ok(Beta::Auto),
            BetaRepr::Text(s) => Err(format!("beta must be a number or \"auto\", got \"{s}\"")),
        }
    }
}

impl From<Beta> for BetaRepr {
    fn from(b: Beta) -> BetaRepr {
        match b {
            Beta::Auto => BetaRepr::Text("auto".into()),
            Beta::Value(v) => BetaRepr::Number(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityConfig {
    /// `p_0..p_ℓ`; the order is the length minus one.
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub xi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub beta: Beta,
}

impl UtilityConfig {
    pub fn to_spec(&self) -> Result<UtilitySpec, String> {
        let zeta = match (self.zeta, self.beta) {
            (Some(z), _) => z,
            (None, Beta::Auto) => return Err("beta = \"auto\" requires zeta".into()),
            (None, Beta::Value(_)) => return Err("zeta is required".into()),
        };
        let beta = match self.beta {
            Beta::Auto => None,
            Beta::Value(v) => Some(v),
        };
        UtilitySpec::new(self.coefficients.clone(), self.xi, zeta, beta).map_err(|e| e.to_string())
    }
}

impl From<&UtilitySpec> for UtilityConfig {
    fn from(u: &UtilitySpec) -> UtilityConfig {
        UtilityConfig {
            coefficients: u.coefficients.clone(),
            xi: u.xi,
            zeta: Some(u.zeta),
            beta: Beta::Value(u.beta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum StepConfig {
    Auto {
        gamma: f64,
        #[serde(default = "default_margin")]
        margin: f64,
    },
    Explicit(StepSizes),
}

fn default_margin() -> f64 {
    0.9
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig::Auto {
            gamma: 0.1,
            margin: default_margin(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: usize,
    pub record_every: usize,
    pub order: ExecutionOrder,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Solve the centralized reference and report the gap to it.
    pub reference: bool,
    /// Keep the per-round read log and count non-neighbor reads.
    pub audit_messages: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            iterations: 1000,
            record_every: 1,
            order: ExecutionOrder::Sequential,
            output: None,
            reference: true,
            audit_messages: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub dykstra: DykstraConfig,
    pub central: CentralConfig,
    /// Fraction of the recorded rows dropped before fitting the rate.
    pub burn_in: f64,
    pub certificate_max_dim: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            dykstra: DykstraConfig::default(),
            central: CentralConfig::default(),
            burn_in: 0.1,
            certificate_max_dim: DEFAULT_MAX_DIM,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub path: Option<PathBuf>,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.path {
            write!(f, "{}:", p.display())?;
        }
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationError {
    pub issues: Vec<String>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} problem(s):", self.issues.len())?;
        for i in &self.issues {
            write!(f, "\n  - {i}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {0}")]
    Parse(ParseError),
    #[error("invalid configuration: {0}")]
    Validation(ValidationError),
}

impl ConfigError {
    fn issues(issues: Vec<String>) -> ConfigError {
        ConfigError::Validation(ValidationError { issues })
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base).map_err(|e| match e {
        ConfigError::Parse(mut p) => {
            p.path = Some(path.to_path_buf());
            ConfigError::Parse(p)
        }
        e => e,
    })
}

/// Parses and validates a configuration whose relative paths resolve
/// against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
    let raw: toml::Table =
        toml::from_str(text).map_err(|e| ConfigError::Parse(parse_error(text, &e)))?;
    let issues = raw_issues(&raw);
    if !issues.is_empty() {
        return Err(ConfigError::issues(issues));
    }
    let mut cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse(parse_error(text, &e)))?;
    cfg.base_dir = base_dir.to_path_buf();
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml_string(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes to TOML")
}

pub fn write_config(cfg: &ExperimentConfig, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, to_toml_string(cfg))
}

/// Parses a standalone network document.
pub fn parse_network(text: &str) -> Result<NetworkSpec, ParseError> {
    toml::from_str(text).map_err(|e| parse_error(text, &e))
}

pub fn network_to_toml(spec: &NetworkSpec) -> String {
    toml::to_string(spec).expect("network serializes to TOML")
}

fn parse_error(text: &str, e: &toml::de::Error) -> ParseError {
    let (line, column) = match e.span() {
        Some(span) => line_column(text, span.start),
        None => (1, 1),
    };
    ParseError {
        path: None,
        line,
        column,
        message: e.message().trim().to_string(),
    }
}

/// 1-based line and column of byte offset `at`.
fn line_column(text: &str, at: usize) -> (usize, usize) {
    let at = at.min(text.len());
    let before = &text.as_bytes()[..at];
    let line = before.iter().filter(|&&c| c == b'\n').count() + 1;
    let start = before
        .iter()
        .rposition(|&c| c == b'\n')
        .map_or(0, |p| p + 1);
    let column = String::from_utf8_lossy(&before[start..]).chars().count() + 1;
    (line, column)
}

/// Structural checks on the untyped document. Errors here name the element
/// they concern, which the typed pass cannot do.
fn raw_issues(raw: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(net) = raw.get("network").and_then(|v| v.as_table()) {
        check_elements(net, "links", &["id", "ends", "capacity"], &mut out);
        check_elements(net, "nodes", &["id", "kind"], &mut out);
        check_elements(net, "flows", &["id", "source", "destination"], &mut out);
        check_elements(net, "routing", &["node", "flow", "next"], &mut out);
    }
    if let Some(u) = raw.get("utility").and_then(|v| v.as_table()) {
        if !u.contains_key("coefficients") {
            out.push("utility: missing field `coefficients`".into());
        }
    }
    if let Some(us) = raw.get("utilities").and_then(|v| v.as_table()) {
        for (id, u) in us {
            if !u.as_table().is_some_and(|t| t.contains_key("coefficients")) {
                out.push(format!("utilities.{id}: missing field `coefficients`"));
            }
        }
    }
    out
}

fn check_elements(net: &toml::Table, key: &str, required: &[&str], out: &mut Vec<String>) {
    let Some(items) = net.get(key).and_then(|v| v.as_array()) else {
        return;
    };
    for (i, item) in items.iter().enumerate() {
        let Some(t) = item.as_table() else {
            out.push(format!("network.{key}[{i}] is not a table"));
            continue;
        };
        let name = t
            .get("id")
            .and_then(|v| v.as_str())
            .map(|s| format!("`{s}`"))
            .unwrap_or_else(|| format!("#{i}"));
        let singular = key.trim_end_matches('s');
        for field in required {
            if !t.contains_key(*field) {
                out.push(format!("{singular} {name}: missing field `{field}`"));
            }
        }
    }
}

impl ExperimentConfig {
    /// Builds the network this configuration describes.
    pub fn network_spec(&self) -> Result<NetworkSpec, ConfigError> {
        let n = &self.network;
        let given = [n.file.is_some(), n.synthetic.is_some(), n.has_inline()];
        match given.iter().filter(|&&g| g).count() {
            0 => {
                return Err(ConfigError::issues(vec![
                    "network: no description given".into()
                ]))
            }
            1 => {}
            _ => {
                return Err(ConfigError::issues(vec![
                    "network: give exactly one of `file`, `synthetic` or inline fields".into(),
                ]))
            }
        }
        if let Some(file) = &n.file {
            let path = self.base_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            return parse_network(&text).map_err(|mut e| {
                e.path = Some(path);
                ConfigError::Parse(e)
            });
        }
        if let Some(s) = &n.synthetic {
            return synthetic::generate(s, self.seed)
                .map_err(|e| ConfigError::issues(vec![e.to_string()]));
        }
        Ok(n.inline_spec())
    }

    /// Per-source utilities in source declaration order.
    pub fn utility_specs(&self, net: &Network) -> Result<Vec<UtilitySpec>, ValidationError> {
        let mut issues = Vec::new();
        let ids: BTreeSet<&str> = net.sources().iter().map(|&s| net.node_id(s)).collect();
        for id in self.utilities.keys() {
            if !ids.contains(id.as_str()) {
                issues.push(format!("utilities.{id}: no source with this id"));
            }
        }
        let mut specs = Vec::new();
        for &s in net.sources() {
            let id = net.node_id(s);
            match self.utilities.get(id).or(self.utility.as_ref()) {
                None => issues.push(format!("source `{id}` has no utility")),
                Some(u) => match u.to_spec() {
                    Ok(spec) => specs.push(spec),
                    Err(e) => issues.push(format!("utility of `{id}`: {e}")),
                },
            }
        }
        if issues.is_empty() {
            Ok(specs)
        } else {
            Err(ValidationError { issues })
        }
    }

    /// Network and utilities assembled into a problem instance.
    pub fn instance(&self) -> Result<Instance, ConfigError> {
        let spec = self.network_spec()?;
        let net =
            Network::build(spec).map_err(|e| ConfigError::issues(vec![format!("network: {e}")]))?;
        let utilities = self.utility_specs(&net).map_err(ConfigError::Validation)?;
        Instance::new(net, utilities).map_err(|e| ConfigError::issues(vec![e.to_string()]))
    }

    pub fn step_sizes(&self, inst: &Instance) -> StepSizes {
        match &self.steps {
            StepConfig::Auto { gamma, margin } => auto_step_sizes(inst, *gamma, *margin),
            StepConfig::Explicit(ss) => ss.clone(),
        }
    }

    /// Checks every semantic rule and reports all failures at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        if self.run.iterations < 1 {
            issues.push("run.iterations must be at least 1".into());
        }
        if self.run.record_every < 1 {
            issues.push("run.record_every must be at least 1".into());
        }
        match &self.steps {
            StepConfig::Auto { gamma, margin } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    issues.push(format!("steps.gamma must be positive, got {gamma}"));
                }
                if !(*margin > 0.0 && *margin <= 1.0) {
                    issues.push(format!("steps.margin must lie in (0, 1], got {margin}"));
                }
            }
            StepConfig::Explicit(ss) => {
                let all = std::iter::once(ss.gamma)
                    .chain(ss.tau_source.iter().copied())
                    .chain(ss.tau.iter().copied())
                    .chain(ss.kappa.iter().copied());
                if all.into_iter().any(|v| !(v.is_finite() && v > 0.0)) {
                    issues.push("steps: every step size must be positive and finite".into());
                }
            }
        }
        let t = &self.tolerances;
        if !(0.0..1.0).contains(&t.burn_in) {
            issues.push(format!(
                "tolerances.burn_in must lie in [0, 1), got {}",
                t.burn_in
            ));
        }
        if !(t.dykstra.tol > 0.0 && t.dykstra.inner_tol > 0.0) || t.dykstra.max_cycles == 0 {
            issues.push("tolerances.dykstra: tolerances and cycle cap must be positive".into());
        }
        if let Some(u) = &self.utility {
            if let Err(e) = u.to_spec() {
                issues.push(format!("utility: {e}"));
            }
        }

        match self.network_spec() {
            Err(ConfigError::Validation(v)) => issues.extend(v.issues),
            Err(e) => issues.push(e.to_string()),
            Ok(spec) => match Network::build(spec) {
                Err(e) => issues.push(format!("network: {e}")),
                Ok(net) => match self.utility_specs(&net) {
                    Err(v) => issues.extend(v.issues),
                    Ok(utilities) => match Instance::new(net, utilities) {
                        Err(e) => issues.push(e.to_string()),
                        Ok(inst) => {
                            if let StepConfig::Explicit(ss) = &self.steps {
                                issues.extend(explicit_shape_issues(&inst, ss));
                            }
                        }
                    },
                },
            },
        }
        issues.dedup();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::issues(issues))
        }
    }
}

fn explicit_shape_issues(inst: &Instance, ss: &StepSizes) -> Vec<String> {
    let forward = inst.layout.forward_range().len();
    let checks = [
        ("tau_source", ss.tau_source.len(), inst.source_count()),
        ("d_source", ss.d_source.len(), inst.source_count()),
        ("tau", ss.tau.len(), forward),
        ("d", ss.d.len(), forward),
        ("kappa", ss.kappa.len(), inst.cap_rows.len()),
    ];
    checks
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(name, got, want)| {
            format!("steps.{name} has {got} entries, the network needs {want}")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[network]
nodes = [
  { id = "s", kind = "source" },
  { id = "b", kind = "forwarding" },
  { id = "d", kind = "destination" },
]
links = [
  { id = "a", ends = ["s", "b"], capacity = 10 },
  { id = "o", ends = ["b", "d"], capacity = 10 },
]
flows = [{ id = "f", source = "s", destination = "d" }]
routing = [{ node = "b", flow = "f", next = ["d"] }]
source_links = { s = ["a"] }

[utility]
coefficients = [0, 1, 0]
zeta = 10
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(
            cfg.steps,
            StepConfig::Auto {
                gamma: 0.1,
                margin: 0.9
            }
        );
        assert_eq!(cfg.run, RunConfig::default());
        assert_eq!(cfg.tolerances, Tolerances::default());
        assert_eq!(cfg.utility.as_ref().unwrap().beta, Beta::Auto);
    }

    #[test]
    fn missing_capacity_names_the_link() {
        let text = MINIMAL.replace(
            r#"{ id = "o", ends = ["b", "d"], capacity = 10 }"#,
            r#"{ id = "o", ends = ["b", "d"] }"#,
        );
        match parse_config(&text, Path::new(".")) {
            Err(ConfigError::Validation(v)) => {
                assert_eq!(
                    v.issues,
                    vec!["link `o`: missing field `capacity`".to_string()]
                );
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let text = "seed = 1\n[network\n";
        match parse_config(text, Path::new(".")) {
            Err(ConfigError::Parse(p)) => assert_eq!(p.line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn type_error_reports_position() {
        let text = MINIMAL.replace("zeta = 10", "zeta = \"ten\"");
        match parse_config(&text, Path::new(".")) {
            Err(ConfigError::Parse(p)) => {
                assert_eq!(p.line, 18);
                assert!(p.message.contains("invalid type"), "{}", p.message);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn all_semantic_failures_are_listed() {
        let text = MINIMAL.replace("zeta = 10", "zeta = 10\nxi = 20") + "\n[run]\niterations = 0\n";
        match parse_config(&text, Path::new(".")) {
            Err(ConfigError::Validation(v)) => {
                assert_eq!(v.issues.len(), 3, "{:?}", v.issues);
                assert!(v.issues[0].contains("iterations"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn auto_beta_needs_zeta() {
        let text = MINIMAL.replace("zeta = 10\n", "");
        let err = parse_config(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("requires zeta"), "{err}");
    }

    #[test]
    fn beta_rejects_other_strings() {
        let text = MINIMAL.replace("zeta = 10", "zeta = 10\nbeta = \"big\"");
        assert!(matches!(
            parse_config(&text, Path::new(".")),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn explicit_beta_round_trips() {
        let text = MINIMAL.replace("zeta = 10", "zeta = 10\nbeta = 12.5");
        let cfg = parse_config(&text, Path::new(".")).unwrap();
        assert_eq!(cfg.utility.as_ref().unwrap().beta, Beta::Value(12.5));
        let again = parse_config(&to_toml_string(&cfg), Path::new(".")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn two_network_descriptions_are_rejected() {
        let text = MINIMAL.replace("[network]\n", "[network]\nfile = \"net.toml\"\n");
        let err = parse_config(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("exactly one"), "{err}");
    }

    #[test]
    fn line_column_counts_from_one() {
        assert_eq!(line_column("ab\ncd", 0), (1, 1));
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
        assert_eq!(line_column("ab", 99), (1, 3));
    }
}
