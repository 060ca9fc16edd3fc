//! Gao-Rexford import preference and valley-free export rules.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::topology::{AsGraph, AsId, Relationship, TopologyError};

/// Import preference class. Lower is preferred.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrefRank(u8);

impl PrefRank {
    pub const CUSTOMER: PrefRank = PrefRank(0);
    pub const SIBLING: PrefRank = PrefRank(1);
    pub const PEER: PrefRank = PrefRank(2);
    pub const PROVIDER: PrefRank = PrefRank(3);

    pub fn value(self) -> u8 {
        self.0
    }
}

impl fmt::Display for PrefRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Prefer customer, then sibling, then peer, then provider routes.
pub fn import_rank(rel: Relationship) -> PrefRank {
    match rel {
        Relationship::Customer => PrefRank::CUSTOMER,
        Relationship::Sibling => PrefRank::SIBLING,
        Relationship::Peer => PrefRank::PEER,
        Relationship::Provider => PrefRank::PROVIDER,
    }
}

/// Where a route held by an AS came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Originated by the holder itself.
    Local,
    Learned(Relationship),
}

/// Valley-free export: own, customer and sibling routes go to everyone; peer and provider
/// routes only go to customers and siblings.
pub fn export_allowed(learned_from: Source, to: Relationship) -> bool {
    match learned_from {
        Source::Local | Source::Learned(Relationship::Customer) | Source::Learned(Relationship::Sibling) => true,
        Source::Learned(Relationship::Peer) | Source::Learned(Relationship::Provider) => {
            matches!(to, Relationship::Customer | Relationship::Sibling)
        }
    }
}

/// True iff the path (read from the holder toward the destination) climbs customer→provider
/// edges, crosses at most one peer edge and then only descends. Sibling edges may appear
/// anywhere.
pub fn valley_free(path: &[AsId], g: &AsGraph) -> Result<bool, TopologyError> {
    let mut descending = false;
    for w in path.windows(2) {
        match g.rel_from_perspective(w[0], w[1])? {
            Relationship::Sibling => {}
            Relationship::Provider => {
                if descending {
                    return Ok(false);
                }
            }
            Relationship::Peer => {
                if descending {
                    return Ok(false);
                }
                descending = true;
            }
            Relationship::Customer => descending = true,
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;

    const ALL: [Relationship; 4] =
        [Relationship::Customer, Relationship::Sibling, Relationship::Peer, Relationship::Provider];

    #[test]
    fn ranks() {
        assert_eq!(import_rank(Relationship::Customer).value(), 0);
        assert_eq!(import_rank(Relationship::Sibling).value(), 1);
        assert_eq!(import_rank(Relationship::Peer).value(), 2);
        assert_eq!(import_rank(Relationship::Provider).value(), 3);
        // strict total order
        for w in ALL.windows(2) {
            assert!(import_rank(w[0]) < import_rank(w[1]));
        }
    }

    #[test]
    fn export_rules() {
        assert!(!export_allowed(Source::Learned(Relationship::Peer), Relationship::Provider));
        assert!(export_allowed(Source::Learned(Relationship::Provider), Relationship::Customer));
        assert!(export_allowed(Source::Local, Relationship::Peer));
        for to in ALL {
            assert!(export_allowed(Source::Local, to));
            assert!(export_allowed(Source::Learned(Relationship::Customer), to));
            assert!(export_allowed(Source::Learned(Relationship::Sibling), to));
            // anything can be handed to a sibling
            assert!(export_allowed(Source::Learned(Relationship::Provider), Relationship::Sibling));
        }
        assert!(!export_allowed(Source::Learned(Relationship::Provider), Relationship::Peer));
        assert!(!export_allowed(Source::Learned(Relationship::Peer), Relationship::Peer));
    }

    #[test]
    fn valley_free_paths() {
        let f = fixture("fig3").unwrap();
        let g = f.graph();
        let p = |names: &[&str]| names.iter().map(|n| f.id(n)).collect::<Vec<_>>();
        assert_eq!(valley_free(&p(&["Peter", "Hari", "MIT"]), &g), Ok(true));
        assert_eq!(valley_free(&p(&["Hari"]), &g), Ok(true));
        // Hari -> ATT (up) -> Sprint (peer) -> MIT (down)
        assert_eq!(valley_free(&p(&["Hari", "ATT", "Sprint", "MIT"]), &g), Ok(true));
        // MIT -> Hari (up) -> Peter (up) -> ATT (up) -> Sprint (peer)
        assert_eq!(valley_free(&p(&["MIT", "Hari", "Peter", "ATT", "Sprint"]), &g), Ok(true));
        // down then up: Peter -> Hari -> ATT
        assert_eq!(valley_free(&p(&["Peter", "Hari", "ATT"]), &g), Ok(false));
        // non-adjacent
        assert!(valley_free(&p(&["Peter", "MIT"]), &g).is_err());
    }

    #[test]
    fn siblings_are_transparent() {
        // 1 provider of 2, 2~3 siblings, 3 provider of 4, 1 peers 5
        let g = AsGraph::parse("1|2|-1\n2|3|2\n3|4|-1\n1|5|0").unwrap();
        let p = |v: &[u32]| v.iter().map(|x| AsId(*x)).collect::<Vec<_>>();
        assert_eq!(valley_free(&p(&[4, 3, 2, 1, 5]), &g), Ok(true));
        assert_eq!(valley_free(&p(&[5, 1, 2, 3, 4]), &g), Ok(true));
        // peer then sibling then down is fine
        let g2 = AsGraph::parse("1|2|0\n2|3|2\n3|4|-1").unwrap();
        assert_eq!(valley_free(&p(&[1, 2, 3, 4]), &g2), Ok(true));
        // two peer steps are not
        let g3 = AsGraph::parse("1|2|0\n2|3|2\n3|4|0").unwrap();
        assert_eq!(valley_free(&p(&[1, 2, 3, 4]), &g3), Ok(false));
    }
}
