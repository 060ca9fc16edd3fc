//! Named example topologies shipped with the crate.

use crate::topology::{AsGraph, AsId};

#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub name: &'static str,
    pub text: &'static str,
    /// Human readable names for the numeric AS identifiers.
    pub labels: &'static [(u32, &'static str)],
}

impl Fixture {
    pub fn graph(&self) -> AsGraph {
        AsGraph::parse(self.text).expect("bundled fixture parses")
    }

    /// Look up an AS by its label, e.g. `"Hari"`.
    pub fn id(&self, label: &str) -> AsId {
        self.labels
            .iter()
            .find(|(_, l)| *l == label)
            .map(|(id, _)| AsId(*id))
            .unwrap_or_else(|| panic!("fixture {} has no AS named {label}", self.name))
    }

    pub fn label(&self, id: AsId) -> Option<&'static str> {
        self.labels.iter().find(|(i, _)| *i == id.0).map(|(_, l)| *l)
    }
}

const LETTERS: &[(u32, &str)] = &[(1, "A"), (2, "B"), (3, "C"), (4, "D"), (5, "E"), (6, "F")];

pub const FIXTURES: &[Fixture] = &[
    Fixture { name: "fig1", text: include_str!("../fixtures/fig1.txt"), labels: LETTERS },
    Fixture {
        name: "fig2",
        text: include_str!("../fixtures/fig2.txt"),
        labels: &[(1, "A"), (2, "B"), (3, "C"), (4, "D"), (5, "E"), (6, "F"), (7, "G")],
    },
    Fixture {
        name: "fig3",
        text: include_str!("../fixtures/fig3.txt"),
        labels: &[(1, "MIT"), (2, "Sprint"), (3, "Hari"), (4, "ATT"), (5, "Peter")],
    },
    Fixture {
        name: "fig4",
        text: include_str!("../fixtures/fig4.txt"),
        labels: &[(1, "MIT"), (2, "Sprint"), (3, "Hari"), (4, "ATT"), (5, "Peter"), (6, "David")],
    },
    Fixture { name: "fig5", text: include_str!("../fixtures/fig5.txt"), labels: LETTERS },
    Fixture {
        name: "fig6",
        text: include_str!("../fixtures/fig6.txt"),
        labels: &[(1, "N"), (2, "O"), (3, "D"), (4, "I"), (5, "G"), (6, "L")],
    },
];

pub fn fixture(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_parse() {
        for f in FIXTURES {
            let g = f.graph();
            for (id, _) in f.labels {
                assert!(g.contains(AsId(*id)), "{} misses {id}", f.name);
            }
            assert_eq!(g.len(), f.labels.len(), "{}", f.name);
        }
    }

    #[test]
    fn lookup() {
        let f = fixture("fig3").unwrap();
        assert_eq!(f.id("Hari"), AsId(3));
        assert_eq!(f.label(AsId(4)), Some("ATT"));
        assert!(fixture("fig9").is_none());
    }
}
