//! Scenario files: a strict JSON description of a topology, origins, scripted events and
//! probe sampling, run under one or more protocols.
//!
//! ```json
//! {
//!   "version": 1,
//!   "fixture": "fig3",
//!   "origins": [1],
//!   "protocols": ["bgp", "rbgp"],
//!   "events": [{ "type": "link_down", "at": 10, "a": 3, "b": 1 }],
//!   "probes": [{ "pairs": [[3, 1], [4, 1]], "from": 5, "to": 30 }]
//! }
//! ```
//!
//! Unknown fields are rejected everywhere. Exactly one of `fixture` and `topology` (a path
//! relative to the scenario file) must be given unless a topology is supplied separately.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bgp::Tick;
use crate::fixtures::fixture;
use crate::miro::{default_class, AcceptPolicy, AvoidSet, MiroConfig, MiroIssue};
use crate::report::{ComparisonRow, MetricsReport};
use crate::sim::{Action, SimConfig, SimError, Simulation};
use crate::topology::{AsGraph, AsId, LinkId, TopologyError};
use crate::yamr::PathLabel;
use crate::{Protocol, ProtocolConfig};

pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSpec {
    Originate {
        at: Tick,
        dest: AsId,
    },
    LinkDown {
        at: Tick,
        a: AsId,
        b: AsId,
    },
    LinkUp {
        at: Tick,
        a: AsId,
        b: AsId,
    },
    Probe {
        at: Tick,
        src: AsId,
        dst: AsId,
        #[serde(default)]
        avoid_link: Option<LinkId>,
        #[serde(default)]
        class: Option<String>,
    },
    MiroRequest {
        at: Tick,
        requester: AsId,
        responder: AsId,
        dest: AsId,
        #[serde(default)]
        avoid_ases: BTreeSet<AsId>,
        #[serde(default)]
        avoid_links: BTreeSet<LinkId>,
        #[serde(default)]
        budget: Option<u8>,
        #[serde(default)]
        class: Option<String>,
        #[serde(default)]
        accept: AcceptPolicy,
    },
}

impl EventSpec {
    pub fn at(&self) -> Tick {
        match self {
            EventSpec::Originate { at, .. }
            | EventSpec::LinkDown { at, .. }
            | EventSpec::LinkUp { at, .. }
            | EventSpec::Probe { at, .. }
            | EventSpec::MiroRequest { at, .. } => *at,
        }
    }
}

/// Probe `pairs` at `from`, `from + every`, ... up to `to` inclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSampling {
    pub pairs: Vec<(AsId, AsId)>,
    pub from: Tick,
    pub to: Tick,
    #[serde(default = "one")]
    pub every: Tick,
    #[serde(default)]
    pub class: Option<String>,
}

fn one() -> Tick {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub from: AsId,
    pub to: AsId,
    pub ticks: Tick,
    /// Apply to both directions.
    #[serde(default)]
    pub both: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunnelStart {
    #[serde(rename = "as")]
    pub asn: AsId,
    pub start: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceTag {
    pub responder: AsId,
    pub next_hop: AsId,
    pub tag: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiroSpec {
    #[serde(default)]
    pub max_offer: Option<usize>,
    #[serde(default)]
    pub default_budget: Option<u8>,
    #[serde(default)]
    pub tunnel_id_start: Vec<TunnelStart>,
    #[serde(default)]
    pub deployed: Option<BTreeSet<AsId>>,
    #[serde(default)]
    pub price_tags: Vec<PriceTag>,
    #[serde(default)]
    pub remote: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub fixture: Option<String>,
    #[serde(default)]
    pub topology: Option<PathBuf>,
    pub origins: Vec<AsId>,
    #[serde(default)]
    pub protocols: Vec<Protocol>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default)]
    pub probes: Vec<ProbeSampling>,
    #[serde(default)]
    pub default_delay: Option<Tick>,
    #[serde(default)]
    pub delays: Vec<DelaySpec>,
    #[serde(default)]
    pub quiesce_limit: Option<Tick>,
    #[serde(default)]
    pub miro: MiroSpec,
    #[serde(default)]
    pub output: Option<OutputFormat>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("bad topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no convergence before tick {limit} under {protocols}")]
    NonConvergence { limit: Tick, protocols: String },
}

impl ScenarioError {
    /// Process exit code: 2 for invalid input, 3 for non-convergence, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Parse(_) | ScenarioError::Invalid(_) | ScenarioError::Topology(_) => 2,
            ScenarioError::NonConvergence { .. } => 3,
            ScenarioError::Io { .. } => 4,
        }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

pub fn read_file(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec = serde_json::from_str(text)?;
        if spec.version != VERSION {
            return Err(invalid(format!("unsupported version {} (expected {VERSION})", spec.version)));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&read_file(path)?)
    }
}

/// Command-line adjustments applied on top of a scenario file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub topology: Option<PathBuf>,
    pub protocols: Vec<Protocol>,
    pub quiesce_limit: Option<Tick>,
    pub strict: bool,
    pub trace: bool,
}

/// A validated scenario ready to run.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub spec: ScenarioSpec,
    pub graph: AsGraph,
    pub protocols: Vec<Protocol>,
    pub script: Vec<(Tick, Action)>,
    pub sim: SimConfig,
    pub miro: MiroConfig,
    /// Suspicious but runnable content; errors under `strict`.
    pub warnings: Vec<String>,
}

pub fn prepare(spec: ScenarioSpec, base: &Path, ov: &Overrides) -> Result<Prepared, ScenarioError> {
    let graph = match (&ov.topology, &spec.topology, &spec.fixture) {
        (Some(p), _, _) => AsGraph::parse(&read_file(p)?)?,
        (None, Some(_), Some(_)) => return Err(invalid("give either `topology` or `fixture`, not both")),
        (None, Some(p), None) => AsGraph::parse(&read_file(&base.join(p))?)?,
        (None, None, Some(name)) => fixture(name).ok_or_else(|| invalid(format!("unknown fixture {name:?}")))?.graph(),
        (None, None, None) => return Err(invalid("no topology given")),
    };
    let protocols: Vec<Protocol> = if ov.protocols.is_empty() { spec.protocols.clone() } else { ov.protocols.clone() };
    if protocols.is_empty() {
        return Err(invalid("no protocol selected"));
    }
    let mut warnings = Vec::new();
    let known =
        |a: AsId| if graph.contains(a) { Ok(()) } else { Err(invalid(format!("AS {a} is not in the topology"))) };
    let link = |a: AsId, b: AsId| {
        if graph.link(a, b).is_some() {
            Ok(())
        } else {
            Err(invalid(format!("no link {a}-{b} in the topology")))
        }
    };

    let mut script = Vec::new();
    let mut origins = BTreeSet::new();
    for &o in &spec.origins {
        known(o)?;
        if !origins.insert(o) {
            warnings.push(format!("origin {o} listed twice"));
        }
        script.push((0, Action::Originate(o)));
    }
    for ev in &spec.events {
        let action = match ev {
            EventSpec::Originate { dest, .. } => {
                known(*dest)?;
                origins.insert(*dest);
                Action::Originate(*dest)
            }
            EventSpec::LinkDown { a, b, .. } => {
                link(*a, *b)?;
                Action::LinkDown(*a, *b)
            }
            EventSpec::LinkUp { a, b, .. } => {
                link(*a, *b)?;
                Action::LinkUp(*a, *b)
            }
            EventSpec::Probe { src, dst, avoid_link, class, .. } => {
                known(*src)?;
                known(*dst)?;
                if let Some(l) = avoid_link {
                    link(l.low(), l.high())?;
                }
                Action::Probe {
                    src: *src,
                    dst: *dst,
                    label: avoid_link.map_or(PathLabel::Default, PathLabel::Avoid),
                    class: class.clone().unwrap_or_else(default_class),
                }
            }
            EventSpec::MiroRequest {
                requester,
                responder,
                dest,
                avoid_ases,
                avoid_links,
                budget,
                class,
                accept,
                ..
            } => {
                for a in [*requester, *responder, *dest] {
                    known(a)?;
                }
                if requester == responder {
                    return Err(invalid("MIRO requester and responder must differ"));
                }
                if avoid_ases.contains(dest) {
                    return Err(invalid("MIRO destination is in its own avoid set"));
                }
                if !protocols.contains(&Protocol::Miro) {
                    warnings.push("miro_request events only take effect under the miro protocol".into());
                }
                Action::MiroRequest(MiroIssue {
                    requester: *requester,
                    responder: *responder,
                    dest: *dest,
                    avoid: AvoidSet { ases: avoid_ases.clone(), links: avoid_links.clone() },
                    budget: *budget,
                    class: class.clone().unwrap_or_else(default_class),
                    accept: accept.clone(),
                })
            }
        };
        script.push((ev.at(), action));
    }
    for p in &spec.probes {
        if p.every == 0 {
            return Err(invalid("probe sampling `every` must be positive"));
        }
        if p.to < p.from {
            return Err(invalid("probe sampling ends before it starts"));
        }
        for &(s, d) in &p.pairs {
            known(s)?;
            known(d)?;
        }
        let mut t = p.from;
        while t <= p.to {
            for &(src, dst) in &p.pairs {
                let class = p.class.clone().unwrap_or_else(default_class);
                script.push((t, Action::Probe { src, dst, label: PathLabel::Default, class }));
            }
            t += p.every;
        }
    }
    for (_, a) in &script {
        if let Action::Probe { dst, .. } = a {
            if !origins.contains(dst) {
                warnings.push(format!("probes toward {dst}, which never originates"));
            }
        }
    }
    warnings.dedup();

    let mut sim = SimConfig::default();
    if let Some(d) = spec.default_delay {
        sim.default_delay = d;
    }
    for d in &spec.delays {
        link(d.from, d.to)?;
        sim.delays.insert((d.from, d.to), d.ticks);
        if d.both {
            sim.delays.insert((d.to, d.from), d.ticks);
        }
    }
    if sim.default_delay == 0 || sim.delays.values().any(|t| *t == 0) {
        return Err(invalid("link delays must be at least one tick"));
    }
    if let Some(q) = ov.quiesce_limit.or(spec.quiesce_limit) {
        sim.quiesce_limit = q;
    }
    sim.trace = ov.trace;
    if let Some(last) = script.iter().map(|(t, _)| *t).max() {
        if last > sim.quiesce_limit {
            warnings.push(format!("events at tick {last} lie beyond the quiescence limit {}", sim.quiesce_limit));
        }
    }

    let mut miro = MiroConfig::default();
    let m = &spec.miro;
    if let Some(x) = m.max_offer {
        miro.max_offer = x;
    }
    if let Some(x) = m.default_budget {
        miro.default_budget = x;
    }
    for t in &m.tunnel_id_start {
        known(t.asn)?;
        miro.tunnel_id_start.insert(t.asn, t.start);
    }
    if let Some(d) = &m.deployed {
        for a in d {
            known(*a)?;
        }
        miro.deployed = Some(d.clone());
    }
    for p in &m.price_tags {
        link(p.responder, p.next_hop)?;
        miro.price_tags.insert((p.responder, p.next_hop), p.tag.clone());
    }
    if let Some(r) = m.remote {
        miro.remote = r;
    }

    if ov.strict && !warnings.is_empty() {
        return Err(invalid(warnings.join("; ")));
    }
    Ok(Prepared { spec, graph, protocols, script, sim, miro, warnings })
}

impl Prepared {
    pub fn protocol_config(&self, p: Protocol) -> ProtocolConfig {
        let mut c = ProtocolConfig::for_protocol(p);
        c.miro_params = self.miro.clone();
        c
    }

    /// Run under one protocol.
    pub fn simulate(&self, p: Protocol) -> Result<Simulation, SimError> {
        crate::sim::run(self.graph.clone(), self.protocol_config(p), &self.script, self.sim.clone())
    }

    /// Run every selected protocol, one thread each, and collect reports in protocol order.
    pub fn run_all(&self) -> Result<Vec<(MetricsReport, Simulation)>, ScenarioError> {
        let results: Vec<Result<Simulation, SimError>> = std::thread::scope(|s| {
            let handles: Vec<_> = self.protocols.iter().map(|&p| s.spawn(move || self.simulate(p))).collect();
            handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
        });
        results
            .into_iter()
            .map(|r| {
                let sim = r.map_err(|e| invalid(e.to_string()))?;
                Ok((MetricsReport::from_sim(&sim), sim))
            })
            .collect()
    }
}

/// Reports for every protocol, or the non-convergence error naming the offenders.
pub fn run_scenario(prep: &Prepared) -> Result<Vec<MetricsReport>, ScenarioError> {
    let reports: Vec<MetricsReport> = prep.run_all()?.into_iter().map(|(r, _)| r).collect();
    check_converged(prep, &reports)?;
    Ok(reports)
}

pub fn check_converged(prep: &Prepared, reports: &[MetricsReport]) -> Result<(), ScenarioError> {
    let stuck: Vec<&str> = reports.iter().filter(|r| !r.converged).map(|r| r.protocol.as_str()).collect();
    if stuck.is_empty() {
        Ok(())
    } else {
        Err(ScenarioError::NonConvergence { limit: prep.sim.quiesce_limit, protocols: stuck.join(", ") })
    }
}

/// Side-by-side headline metrics; needs at least two protocols.
pub fn compare(prep: &Prepared) -> Result<Vec<ComparisonRow>, ScenarioError> {
    if prep.protocols.len() < 2 {
        return Err(invalid("comparison needs at least two protocols"));
    }
    let reports = prep.run_all()?;
    Ok(reports.iter().map(|(r, _)| ComparisonRow::from(r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prep(json: &str) -> Result<Prepared, ScenarioError> {
        prepare(ScenarioSpec::from_json(json)?, Path::new("."), &Overrides::default())
    }

    #[test]
    fn minimal_fixture_scenario() {
        let p = prep(r#"{"version":1,"fixture":"fig3","origins":[1],"protocols":["bgp"]}"#).unwrap();
        let reports = run_scenario(&p).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(reports[0].converged);
        assert!(reports[0].messages_total > 0);
        assert_eq!(reports[0].probes.total, 0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = prep(r#"{"version":1,"fixture":"fig3","origins":[1],"protocol":["bgp"]}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = prep(
            r#"{"version":1,"fixture":"fig3","origins":[1],"protocols":["bgp"],
                "events":[{"type":"link_down","at":1,"a":3,"b":1,"when":2}]}"#,
        )
        .unwrap_err();
        assert!(matches!(e, ScenarioError::Parse(_)));
    }

    #[test]
    fn bad_references() {
        let cases = [
            r#"{"version":2,"fixture":"fig3","origins":[1],"protocols":["bgp"]}"#,
            r#"{"version":1,"fixture":"fig9","origins":[1],"protocols":["bgp"]}"#,
            r#"{"version":1,"fixture":"fig3","origins":[9],"protocols":["bgp"]}"#,
            r#"{"version":1,"fixture":"fig3","origins":[1],"protocols":["ospf"]}"#,
            r#"{"version":1,"fixture":"fig3","origins":[1],"protocols":[]}"#,
            r#"{"version":1,"fixture":"fig3","origins":[1],"protocols":["bgp"],
                "events":[{"type":"link_down","at":1,"a":1,"b":5}]}"#,
            r#"{"version":1,"fixture":"fig3","origins":[1],"protocols":["bgp"],"default_delay":0}"#,
        ];
        for c in cases {
            let e = prep(c).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{c}: {e}");
        }
    }

    #[test]
    fn missing_topology_file_is_io() {
        let e = prep(r#"{"version":1,"topology":"nope.txt","origins":[1],"protocols":["bgp"]}"#).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn strict_turns_warnings_into_errors() {
        let json = r#"{"version":1,"fixture":"fig3","origins":[1],"protocols":["bgp"],
            "probes":[{"pairs":[[5,2]],"from":0,"to":3}]}"#;
        let p = prep(json).unwrap();
        assert_eq!(p.warnings, vec!["probes toward 2, which never originates".to_string()]);
        let strict = Overrides { strict: true, ..Default::default() };
        let e = prepare(ScenarioSpec::from_json(json).unwrap(), Path::new("."), &strict).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn compare_needs_two_protocols() {
        let p = prep(r#"{"version":1,"fixture":"fig3","origins":[1],"protocols":["bgp"]}"#).unwrap();
        assert!(compare(&p).is_err());
    }

    #[test]
    fn non_convergence_has_its_own_code() {
        let p = prep(r#"{"version":1,"fixture":"fig3","origins":[1],"protocols":["bgp"],"quiesce_limit":1}"#).unwrap();
        let e = run_scenario(&p).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn accept_policy_syntax() {
        let json = r#"{"version":1,"fixture":"fig2","origins":[6],"protocols":["miro"],
            "events":[{"type":"miro_request","at":10,"requester":1,"responder":2,"dest":6,
                       "avoid_ases":[5],"accept":{"via":3}}]}"#;
        let p = prep(json).unwrap();
        let issue = p.script.iter().find_map(|(_, a)| match a {
            Action::MiroRequest(i) => Some(i.clone()),
            _ => None,
        });
        assert_eq!(issue.unwrap().accept, AcceptPolicy::Via(AsId(3)));
    }
}
