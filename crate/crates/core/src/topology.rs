//! AS-level topology: autonomous systems, typed business relationships and link state.
//!
//! Topologies are read from the pipe-separated relationship format used by public
//! AS-relationship datasets:
//!
//! ```text
//! # comment
//! 1|2|-1    # 1 is a provider of 2
//! 2|3|0     # 2 and 3 peer
//! 3|4|2     # 3 and 4 are siblings
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an autonomous system. Valid identifiers are `>= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AsId(pub u32);

impl fmt::Display for AsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Relationship stored on a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelKind {
    /// Directed: `Link::a` is the provider, `Link::b` the customer.
    ProviderToCustomer,
    Peer,
    Sibling,
}

impl RelKind {
    fn code(self) -> i8 {
        match self {
            RelKind::ProviderToCustomer => -1,
            RelKind::Peer => 0,
            RelKind::Sibling => 2,
        }
    }
}

/// What a neighbor is from the point of view of a given AS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relationship {
    Customer,
    Provider,
    Peer,
    Sibling,
}

impl Relationship {
    /// The relationship as seen from the other end of the link.
    pub fn dual(self) -> Self {
        match self {
            Relationship::Customer => Relationship::Provider,
            Relationship::Provider => Relationship::Customer,
            other => other,
        }
    }
}

impl fmt::Display for Relationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Relationship::Customer => "customer",
            Relationship::Provider => "provider",
            Relationship::Peer => "peer",
            Relationship::Sibling => "sibling",
        };
        f.write_str(s)
    }
}

/// Unordered pair of ASes identifying a link. Always stored as `(min, max)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(AsId, AsId)", into = "(AsId, AsId)")]
pub struct LinkId(AsId, AsId);

impl From<(AsId, AsId)> for LinkId {
    fn from((a, b): (AsId, AsId)) -> Self {
        LinkId::new(a, b)
    }
}

impl From<LinkId> for (AsId, AsId) {
    fn from(l: LinkId) -> Self {
        (l.0, l.1)
    }
}

impl LinkId {
    pub fn new(a: AsId, b: AsId) -> Self {
        if a <= b {
            LinkId(a, b)
        } else {
            LinkId(b, a)
        }
    }

    pub fn low(&self) -> AsId {
        self.0
    }

    pub fn high(&self) -> AsId {
        self.1
    }

    pub fn contains(&self, x: AsId) -> bool {
        self.0 == x || self.1 == x
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

/// Iterate over the links traversed by an AS path.
pub fn path_links(path: &[AsId]) -> impl Iterator<Item = LinkId> + '_ {
    path.windows(2).map(|w| LinkId::new(w[0], w[1]))
}

/// True if `path` traverses `link` (in either direction).
pub fn path_contains_link(path: &[AsId], link: LinkId) -> bool {
    path_links(path).any(|l| l == link)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    /// Provider for `ProviderToCustomer`, lower id otherwise.
    pub a: AsId,
    pub b: AsId,
    pub rel: RelKind,
    pub up: bool,
}

impl Link {
    pub fn id(&self) -> LinkId {
        LinkId::new(self.a, self.b)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: conflicting relationship for {a}|{b}")]
    Conflict { line: usize, a: AsId, b: AsId },
    #[error("line {line}: self-loop on AS {a}")]
    SelfLoop { line: usize, a: AsId },
    #[error("no link between AS {0} and AS {1}")]
    NoSuchLink(AsId, AsId),
    #[error("AS {0} is not part of the topology")]
    UnknownAs(AsId),
    #[error("invalid AS identifier 0")]
    ZeroAs,
}

/// The AS graph: nodes, relationship-typed links and an adjacency index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AsGraph {
    nodes: BTreeSet<AsId>,
    links: BTreeMap<LinkId, Link>,
    adj: BTreeMap<AsId, BTreeMap<AsId, Relationship>>,
}

impl AsGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse a relationship file. See the module documentation for the format.
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut g = AsGraph::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split('|').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(TopologyError::Malformed {
                    line,
                    reason: format!("expected `a|b|code`, got {} field(s)", fields.len()),
                });
            }
            let parse_as = |s: &str| -> Result<AsId, TopologyError> {
                let v: u32 = s
                    .parse()
                    .map_err(|_| TopologyError::Malformed { line, reason: format!("invalid AS number `{s}`") })?;
                if v == 0 {
                    return Err(TopologyError::Malformed { line, reason: "AS number must be >= 1".into() });
                }
                Ok(AsId(v))
            };
            let a = parse_as(fields[0])?;
            let b = parse_as(fields[1])?;
            let rel = match fields[2] {
                "-1" => RelKind::ProviderToCustomer,
                "0" => RelKind::Peer,
                "2" => RelKind::Sibling,
                other => {
                    return Err(TopologyError::Malformed {
                        line,
                        reason: format!("unknown relationship code `{other}`"),
                    })
                }
            };
            if a == b {
                return Err(TopologyError::SelfLoop { line, a });
            }
            match g.add_link(a, b, rel) {
                Ok(()) => {}
                Err(TopologyError::Conflict { a, b, .. }) => return Err(TopologyError::Conflict { line, a, b }),
                Err(e) => return Err(e),
            }
        }
        Ok(g)
    }

    /// Canonical text form: links sorted by pair, providers first for `-1` records.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for link in self.links.values() {
            out.push_str(&format!("{}|{}|{}\n", link.a, link.b, link.rel.code()));
        }
        out
    }

    pub fn add_node(&mut self, id: AsId) -> Result<(), TopologyError> {
        if id.0 == 0 {
            return Err(TopologyError::ZeroAs);
        }
        self.nodes.insert(id);
        self.adj.entry(id).or_default();
        Ok(())
    }

    /// Add a link. For `ProviderToCustomer`, `a` is the provider. Re-adding an identical
    /// link is a no-op; a different relationship for the same pair is an error.
    pub fn add_link(&mut self, a: AsId, b: AsId, rel: RelKind) -> Result<(), TopologyError> {
        if a == b {
            return Err(TopologyError::SelfLoop { line: 0, a });
        }
        self.add_node(a)?;
        self.add_node(b)?;
        let (a, b) = match rel {
            RelKind::ProviderToCustomer => (a, b),
            _ => (a.min(b), a.max(b)),
        };
        let link = Link { a, b, rel, up: true };
        if let Some(existing) = self.links.get(&link.id()) {
            if existing.a == a && existing.b == b && existing.rel == rel {
                return Ok(());
            }
            return Err(TopologyError::Conflict { line: 0, a, b });
        }
        let (rel_a, rel_b) = match rel {
            RelKind::ProviderToCustomer => (Relationship::Customer, Relationship::Provider),
            RelKind::Peer => (Relationship::Peer, Relationship::Peer),
            RelKind::Sibling => (Relationship::Sibling, Relationship::Sibling),
        };
        self.adj.entry(a).or_default().insert(b, rel_a);
        self.adj.entry(b).or_default().insert(a, rel_b);
        self.links.insert(link.id(), link);
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = AsId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn contains(&self, id: AsId) -> bool {
        self.nodes.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> + '_ {
        self.links.values()
    }

    pub fn link(&self, a: AsId, b: AsId) -> Option<&Link> {
        self.links.get(&LinkId::new(a, b))
    }

    /// All neighbors of `me` (regardless of link state) with their relationship to `me`.
    pub fn neighbors(&self, me: AsId) -> impl Iterator<Item = (AsId, Relationship)> + '_ {
        self.adj.get(&me).into_iter().flat_map(|m| m.iter().map(|(n, r)| (*n, *r)))
    }

    /// What `neighbor` is to `me`: `Customer` if `me` is the provider of `neighbor`.
    pub fn rel_from_perspective(&self, me: AsId, neighbor: AsId) -> Result<Relationship, TopologyError> {
        self.adj.get(&me).and_then(|m| m.get(&neighbor)).copied().ok_or(TopologyError::NoSuchLink(me, neighbor))
    }

    /// Set the state of a link. Idempotent.
    pub fn set_link_state(&mut self, a: AsId, b: AsId, up: bool) -> Result<(), TopologyError> {
        let link = self.links.get_mut(&LinkId::new(a, b)).ok_or(TopologyError::NoSuchLink(a, b))?;
        link.up = up;
        Ok(())
    }

    /// True if the link exists and is up.
    pub fn is_up(&self, a: AsId, b: AsId) -> bool {
        self.link(a, b).is_some_and(|l| l.up)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provider_customer_record() {
        let g = AsGraph::parse("1|2|-1").unwrap();
        let l = g.link(AsId(1), AsId(2)).unwrap();
        assert_eq!((l.a, l.b, l.rel, l.up), (AsId(1), AsId(2), RelKind::ProviderToCustomer, true));
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn conflicting_duplicate_rejected() {
        let err = AsGraph::parse("1|2|-1\n1|2|0").unwrap_err();
        assert!(matches!(err, TopologyError::Conflict { line: 2, .. }), "{err}");
        let err = AsGraph::parse("1|2|-1\n2|1|-1").unwrap_err();
        assert!(matches!(err, TopologyError::Conflict { line: 2, .. }));
        // identical duplicates and reordered symmetric records are fine
        assert!(AsGraph::parse("1|2|-1\n1|2|-1\n3|4|0\n4|3|0").is_ok());
    }

    #[test]
    fn self_loop_rejected() {
        let err = AsGraph::parse("3|3|0").unwrap_err();
        assert_eq!(err, TopologyError::SelfLoop { line: 1, a: AsId(3) });
    }

    #[test]
    fn malformed_lines_report_line_number() {
        for (text, line) in [("1|2|-1\n\n1|2", 3), ("# c\n1|x|0", 2), ("1|2|7", 1), ("0|2|0", 1)] {
            match AsGraph::parse(text) {
                Err(TopologyError::Malformed { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let g = AsGraph::parse("# header\n\n  1|2|0   # trailing\n").unwrap();
        assert_eq!(g.rel_from_perspective(AsId(1), AsId(2)), Ok(Relationship::Peer));
    }

    #[test]
    fn perspective() {
        let g = AsGraph::parse("1|2|-1\n2|3|0\n3|4|2").unwrap();
        assert_eq!(g.rel_from_perspective(AsId(1), AsId(2)), Ok(Relationship::Customer));
        assert_eq!(g.rel_from_perspective(AsId(2), AsId(1)), Ok(Relationship::Provider));
        assert_eq!(g.rel_from_perspective(AsId(2), AsId(3)), Ok(Relationship::Peer));
        assert_eq!(g.rel_from_perspective(AsId(4), AsId(3)), Ok(Relationship::Sibling));
        assert_eq!(g.rel_from_perspective(AsId(1), AsId(3)), Err(TopologyError::NoSuchLink(AsId(1), AsId(3))));
    }

    #[test]
    fn link_state_idempotent() {
        let mut g = AsGraph::parse("1|2|-1\n2|3|0").unwrap();
        let before = g.clone();
        g.set_link_state(AsId(2), AsId(1), false).unwrap();
        assert!(!g.is_up(AsId(1), AsId(2)));
        g.set_link_state(AsId(1), AsId(2), false).unwrap();
        assert!(!g.is_up(AsId(1), AsId(2)));
        assert!(g.is_up(AsId(2), AsId(3)));
        assert_eq!(g.set_link_state(AsId(1), AsId(3), false), Err(TopologyError::NoSuchLink(AsId(1), AsId(3))));
        g.set_link_state(AsId(1), AsId(2), true).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn canonical_text() {
        let g = AsGraph::parse("5|1|0\n4|2|-1\n1|2|2").unwrap();
        assert_eq!(g.to_text(), "1|2|2\n1|5|0\n4|2|-1\n");
    }
}
