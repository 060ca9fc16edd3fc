//! Seeded random topologies that follow the customer/provider hierarchy.
//!
//! ASes are spread over up to three tiers. Tier-0 ASes peer with each other in a clique;
//! every other AS buys transit from one or two ASes of a higher tier and peers with some
//! ASes of its own tier. There are no sibling links, so the stable routing outcome is unique.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::topology::{AsGraph, AsId, Link, RelKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenParams {
    pub ases: usize,
    /// Chance that two ASes of the same lower tier peer.
    pub peer_prob: f64,
    pub max_providers: usize,
}

impl GenParams {
    pub fn new(ases: usize) -> Self {
        GenParams { ases, peer_prob: 0.3, max_providers: 2 }
    }
}

pub fn random_topology(ases: usize, seed: u64) -> AsGraph {
    random_topology_with(GenParams::new(ases), seed)
}

pub fn random_topology_with(p: GenParams, seed: u64) -> AsGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = AsGraph::new();
    if p.ases == 0 {
        return g;
    }
    let tiers = (1 + p.ases / 4).min(3);
    let mut tier: Vec<usize> = vec![0];
    for _ in 1..p.ases {
        tier.push(if tiers == 1 { 0 } else { rng.gen_range(0..tiers) });
    }
    let ids: Vec<AsId> = (1..=p.ases as u32).map(AsId).collect();
    for &a in &ids {
        g.add_node(a).expect("fresh id");
    }
    let in_tier = |t: usize| -> Vec<AsId> { ids.iter().copied().filter(|a| tier[a.0 as usize - 1] == t).collect() };

    let top = in_tier(0);
    for (i, &a) in top.iter().enumerate() {
        for &b in &top[i + 1..] {
            g.add_link(a, b, RelKind::Peer).expect("new link");
        }
    }
    for &a in &ids {
        let t = tier[a.0 as usize - 1];
        if t == 0 {
            continue;
        }
        let mut above: Vec<AsId> = ids.iter().copied().filter(|b| tier[b.0 as usize - 1] < t).collect();
        above.shuffle(&mut rng);
        let n = rng.gen_range(1..=p.max_providers.min(above.len()));
        for &prov in &above[..n] {
            g.add_link(prov, a, RelKind::ProviderToCustomer).expect("new link");
        }
    }
    for t in 1..tiers {
        let same = in_tier(t);
        for (i, &a) in same.iter().enumerate() {
            for &b in &same[i + 1..] {
                if g.link(a, b).is_none() && rng.gen_bool(p.peer_prob) {
                    g.add_link(a, b, RelKind::Peer).expect("new link");
                }
            }
        }
    }
    g
}

/// Links whose failure leaves the graph connected, in canonical order.
pub fn non_bridge_links(g: &AsGraph) -> Vec<Link> {
    let links: Vec<Link> = g.links().copied().collect();
    links
        .into_iter()
        .filter(|l| {
            let mut h = g.clone();
            h.set_link_state(l.a, l.b, false).expect("link exists");
            connected(&h)
        })
        .collect()
}

fn connected(g: &AsGraph) -> bool {
    let Some(start) = g.nodes().next() else { return true };
    let mut seen = std::collections::BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(x) = stack.pop() {
        for (n, _) in g.neighbors(x) {
            if g.is_up(x, n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len() == g.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Relationship;

    #[test]
    fn same_seed_same_graph() {
        for seed in 0..20 {
            assert_eq!(random_topology(9, seed).to_text(), random_topology(9, seed).to_text());
        }
        assert_ne!(random_topology(9, 1).to_text(), random_topology(9, 2).to_text());
    }

    #[test]
    fn generated_graphs_are_connected_without_siblings() {
        for seed in 0..50 {
            let g = random_topology(1 + (seed as usize % 12), seed);
            assert!(connected(&g));
            assert!(g.links().all(|l| l.rel != RelKind::Sibling));
        }
    }

    #[test]
    fn no_provider_cycles() {
        // walking only customer -> provider edges must terminate
        for seed in 0..30 {
            let g = random_topology(10, seed);
            for a in g.nodes() {
                let mut frontier = vec![(a, 0)];
                while let Some((x, depth)) = frontier.pop() {
                    assert!(depth <= g.len(), "provider cycle in seed {seed}");
                    for (n, rel) in g.neighbors(x) {
                        if rel == Relationship::Provider {
                            frontier.push((n, depth + 1));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bridges_are_excluded() {
        let g = AsGraph::parse("1|2|-1\n1|3|-1\n2|3|0\n3|4|-1").unwrap();
        let ids: Vec<(u32, u32)> = non_bridge_links(&g).iter().map(|l| (l.id().low().0, l.id().high().0)).collect();
        assert_eq!(ids, vec![(1, 2), (1, 3), (2, 3)]);
    }
}
