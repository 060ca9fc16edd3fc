//! Browser bindings for the bundled example scenarios.
//!
//! Every exported function returns a JSON string; `www/index.html` draws it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pathsim::fixtures::fixture;
use pathsim::report::MetricsReport;
use pathsim::scenario::{prepare, Overrides, ScenarioSpec};
use pathsim::sim::{SimConfig, Simulation};
use pathsim::topology::RelKind;
use pathsim::{AsId, Protocol, ProtocolConfig};

const SCENARIOS: &[(&str, &str)] = &[
    ("fig1", include_str!("../../core/scenarios/fig1.json")),
    ("fig2_miro", include_str!("../../core/scenarios/fig2_miro.json")),
    ("fig3", include_str!("../../core/scenarios/fig3.json")),
    ("fig4", include_str!("../../core/scenarios/fig4.json")),
    ("fig5", include_str!("../../core/scenarios/fig5.json")),
    ("fig6", include_str!("../../core/scenarios/fig6.json")),
];

#[derive(Serialize)]
struct Node {
    id: u32,
    label: &'static str,
}

#[derive(Serialize)]
struct Edge {
    a: u32,
    b: u32,
    rel: &'static str,
}

#[derive(Serialize)]
struct Topology {
    name: &'static str,
    nodes: Vec<Node>,
    links: Vec<Edge>,
}

#[derive(Serialize)]
struct Probe {
    time: u64,
    src: u32,
    dst: u32,
    delivered: bool,
    path: Vec<u32>,
}

#[derive(Serialize)]
struct Run {
    scenario: String,
    fixture: String,
    protocols: Vec<&'static str>,
    probes: Vec<Probe>,
    report: MetricsReport,
}

fn scenario_text(name: &str) -> Result<&'static str, String> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| format!("no scenario {name}"))
}

pub fn topology_json(name: &str) -> Result<String, String> {
    let f = fixture(name).ok_or_else(|| format!("no fixture {name}"))?;
    let g = f.graph();
    let nodes = g.nodes().map(|a| Node { id: a.0, label: f.label(a).unwrap_or("?") }).collect();
    let links = g
        .links()
        .map(|l| Edge {
            a: l.a.0,
            b: l.b.0,
            rel: match l.rel {
                RelKind::ProviderToCustomer => "p2c",
                RelKind::Peer => "peer",
                RelKind::Sibling => "sibling",
            },
        })
        .collect();
    Ok(serde_json::to_string(&Topology { name: f.name, nodes, links }).expect("serializes"))
}

/// Run a bundled scenario under one protocol; `protocol` may be empty for the first one listed.
pub fn run_json(scenario: &str, protocol: &str) -> Result<String, String> {
    let spec = ScenarioSpec::from_json(scenario_text(scenario)?).map_err(|e| e.to_string())?;
    let prep = prepare(spec, Path::new("."), &Overrides::default()).map_err(|e| e.to_string())?;
    let p = if protocol.is_empty() {
        prep.protocols[0]
    } else {
        protocol.parse::<Protocol>().map_err(|e| e.to_string())?
    };
    let sim = prep.simulate(p).map_err(|e| e.to_string())?;
    let probes = sim
        .probes()
        .iter()
        .map(|r| Probe {
            time: r.time,
            src: r.src.0,
            dst: r.dst.0,
            delivered: r.outcome.delivered(),
            path: r.outcome.path().iter().map(|a| a.0).collect(),
        })
        .collect();
    let run = Run {
        scenario: scenario.to_string(),
        fixture: prep.spec.fixture.clone().unwrap_or_default(),
        protocols: prep.protocols.iter().map(|p| p.name()).collect(),
        probes,
        report: MetricsReport::from_sim(&sim),
    };
    Ok(serde_json::to_string(&run).expect("serializes"))
}

/// The converged YAMR table of `holder` toward `dest`, label -> path.
pub fn table_json(name: &str, dest: u32, holder: u32) -> Result<String, String> {
    let f = fixture(name).ok_or_else(|| format!("no fixture {name}"))?;
    let g = f.graph();
    for a in [dest, holder] {
        if !g.contains(AsId(a)) {
            return Err(format!("AS {a} is not in {name}"));
        }
    }
    let mut s = Simulation::new(g, ProtocolConfig::for_protocol(Protocol::Yamr), SimConfig::default());
    s.originate(0, AsId(dest));
    s.run().map_err(|e| e.to_string())?;
    let table: BTreeMap<String, Vec<u32>> = s
        .speaker(AsId(holder))
        .expect("checked above")
        .table(AsId(dest))
        .into_iter()
        .map(|(l, p)| (l.to_string(), p.iter().map(|a| a.0).collect()))
        .collect();
    Ok(serde_json::to_string(&table).expect("serializes"))
}

#[wasm_bindgen]
pub fn topology(name: &str) -> Result<String, JsValue> {
    topology_json(name).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn run(scenario: &str, protocol: &str) -> Result<String, JsValue> {
    run_json(scenario, protocol).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn yamr_table(name: &str, dest: u32, holder: u32) -> Result<String, JsValue> {
    table_json(name, dest, holder).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_lists_every_as() {
        let v: serde_json::Value = serde_json::from_str(&topology_json("fig3").unwrap()).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 5);
        assert_eq!(v["nodes"][0]["label"], "MIT");
        assert!(topology_json("fig9").is_err());
    }

    #[test]
    fn runs_every_bundled_scenario() {
        for (name, _) in SCENARIOS {
            let v: serde_json::Value = serde_json::from_str(&run_json(name, "").unwrap()).unwrap();
            assert_eq!(v["report"]["converged"], true, "{name}");
            assert!(!v["probes"].as_array().unwrap().is_empty(), "{name}");
        }
        assert!(run_json("fig3", "ospf").is_err());
    }

    #[test]
    fn table_for_fig5_c() {
        assert_eq!(table_json("fig5", 4, 3).unwrap(), r#"{"avoid(3-4)":[3,5,4],"default":[3,4]}"#);
        assert!(table_json("fig5", 4, 42).is_err());
    }
}
