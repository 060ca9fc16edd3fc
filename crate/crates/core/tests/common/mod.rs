#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use pathsim::gen::{non_bridge_links, random_topology};
use pathsim::scenario::{prepare, Overrides, Prepared, ScenarioSpec};
use pathsim::sim::{SimConfig, Simulation};
use pathsim::{AsGraph, AsId, Protocol, ProtocolConfig, Relationship};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shipped scenario by file stem.
pub fn scenario(name: &str) -> Prepared {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let spec = ScenarioSpec::load(&dir.join(format!("{name}.json"))).expect("scenario loads");
    prepare(spec, &dir, &Overrides::default()).expect("scenario prepares")
}

pub const SCENARIOS: &[&str] = &["fig1", "fig2_miro", "fig3", "fig4", "fig5", "fig6"];

/// Every simple path from `src` to `dest` that climbs, crosses at most one peer link and
/// then only descends (read in the direction of traffic).
pub fn valley_free_paths(g: &AsGraph, src: AsId, dest: AsId) -> Vec<Vec<AsId>> {
    fn walk(g: &AsGraph, dest: AsId, path: &mut Vec<AsId>, phase: u8, out: &mut Vec<Vec<AsId>>) {
        let cur = *path.last().unwrap();
        if cur == dest {
            out.push(path.clone());
            return;
        }
        let nbrs: Vec<(AsId, Relationship)> = g.neighbors(cur).collect();
        for (n, rel) in nbrs {
            if path.contains(&n) || !g.is_up(cur, n) {
                continue;
            }
            // phase 0: still climbing, 1: past the top
            let next = match (rel, phase) {
                (Relationship::Provider, 0) => 0,
                (Relationship::Peer, 0) => 1,
                (Relationship::Customer, _) => 1,
                (Relationship::Sibling, p) => p,
                _ => continue,
            };
            path.push(n);
            walk(g, dest, path, next, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(g, dest, &mut vec![src], 0, &mut out);
    out
}

fn rank(rel: Relationship) -> u8 {
    match rel {
        Relationship::Customer => 0,
        Relationship::Sibling => 1,
        Relationship::Peer => 2,
        Relationship::Provider => 3,
    }
}

/// Stable routing outcome toward `dest`: each AS takes its most preferred valley-free path
/// whose tail is exactly what the next hop selected. Iterated to a fixed point.
pub fn oracle(g: &AsGraph, dest: AsId) -> BTreeMap<AsId, Option<Vec<AsId>>> {
    let all: BTreeMap<AsId, Vec<Vec<AsId>>> =
        g.nodes().filter(|a| *a != dest).map(|a| (a, valley_free_paths(g, a, dest))).collect();
    let mut best: BTreeMap<AsId, Option<Vec<AsId>>> = g.nodes().map(|a| (a, None)).collect();
    best.insert(dest, Some(vec![dest]));
    for _ in 0..=4 * g.len() + 4 {
        let mut changed = false;
        for (&a, paths) in &all {
            let pick = paths
                .iter()
                .filter(|p| best[&p[1]].as_deref() == Some(&p[1..]))
                .min_by_key(|p| (rank(g.rel_from_perspective(a, p[1]).unwrap()), p.len(), p[1]))
                .cloned();
            if best[&a] != pick {
                best.insert(a, pick);
                changed = true;
            }
        }
        if !changed {
            return best;
        }
    }
    panic!("oracle did not settle");
}

/// A random topology, destination and failing link.
#[derive(Clone, Debug)]
pub struct Case {
    pub graph: AsGraph,
    pub dest: AsId,
    pub fail: (AsId, AsId),
    pub delays: BTreeMap<(AsId, AsId), u64>,
}

pub const FAIL_AT: u64 = 40;
pub const PROBE_FROM: u64 = 35;
pub const PROBE_TO: u64 = 90;

/// `None` when the graph has no link whose loss keeps it connected.
pub fn random_case(max_ases: usize, seed: u64, max_delay: u64) -> Option<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.gen_range(3..=max_ases);
    let graph = random_topology(n, seed);
    let links = non_bridge_links(&graph);
    if links.is_empty() {
        return None;
    }
    let l = links[rng.gen_range(0..links.len())];
    let nodes: Vec<AsId> = graph.nodes().collect();
    let dest = nodes[rng.gen_range(0..nodes.len())];
    let mut delays = BTreeMap::new();
    if max_delay > 1 {
        for link in graph.links() {
            delays.insert((link.a, link.b), rng.gen_range(1..=max_delay));
            delays.insert((link.b, link.a), rng.gen_range(1..=max_delay));
        }
    }
    Some(Case { graph, dest, fail: (l.a, l.b), delays })
}

pub fn run_case(case: &Case, config: ProtocolConfig) -> Simulation {
    let cfg = SimConfig { delays: case.delays.clone(), ..SimConfig::default() };
    let mut s = Simulation::new(case.graph.clone(), config, cfg);
    s.originate(0, case.dest);
    s.inject_failure(FAIL_AT, case.fail.0, case.fail.1).unwrap();
    let srcs: Vec<AsId> = case.graph.nodes().filter(|a| *a != case.dest).collect();
    for src in srcs {
        s.probe_every_tick(src, case.dest, PROBE_FROM, PROBE_TO).unwrap();
    }
    s.run().unwrap();
    s
}

pub fn run_protocol(case: &Case, p: Protocol) -> Simulation {
    run_case(case, ProtocolConfig::for_protocol(p))
}
