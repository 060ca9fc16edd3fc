//! Yet Another Multipath Routing: one alternate path per link of the default path.
//!
//! Besides its default path, an AS keeps an `Avoid(l)` path for every link `l` of the default
//! path, built from neighbors' `Avoid(l)` paths where present and their default paths
//! otherwise. Packets are forwarded on their label; an AS that finds the next hop of a packet
//! unreachable relabels it with the failed link.
//!
//! With hiding enabled, a withdrawal carrying the failed link does not remove the route.
//! The entry stays as a *lame* route: it keeps being advertised while packets are deflected
//! onto an alternate that avoids the failure. Only when no alternate exists, or the lame
//! route would export differently from the alternate, is the failure made visible upstream.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bgp::{decide, Ctx, RibKey, Route, Selected, Speaker};
use crate::topology::{path_links, AsId, LinkId};

/// Which path of a destination a route or packet belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLabel {
    #[default]
    Default,
    Avoid(LinkId),
}

impl fmt::Display for PathLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathLabel::Default => write!(f, "default"),
            PathLabel::Avoid(l) => write!(f, "avoid({l})"),
        }
    }
}

/// Label-aware path computation over RIB_IN entries for one destination.
///
/// `default` is the already selected default route. For every link on it, the `Avoid` path
/// is the best route not crossing that link, taking each neighbor's `Avoid` route for the
/// link when it exists and its default route otherwise.
pub fn ypc(default: Selected, entries: &[(RibKey, &Route)]) -> BTreeMap<PathLabel, Selected> {
    let mut table = BTreeMap::new();
    let links: Vec<LinkId> = path_links(&default.route.path).collect();
    let neighbors: BTreeSet<AsId> = entries.iter().map(|(k, _)| k.neighbor).collect();
    for l in links {
        let label = PathLabel::Avoid(l);
        let mut per_neighbor: Vec<(RibKey, &Route)> = Vec::new();
        for &n in &neighbors {
            let pick = |lbl: PathLabel| entries.iter().find(|(k, _)| k.neighbor == n && k.label == lbl);
            if let Some((k, r)) = pick(label).or_else(|| pick(PathLabel::Default)) {
                if !r.contains_link(l) {
                    per_neighbor.push((*k, *r));
                }
            }
        }
        let Some(best) = decide(per_neighbor.iter().map(|(_, r)| *r)) else { continue };
        let (key, _) = per_neighbor.iter().find(|(_, r)| std::ptr::eq(*r, best)).copied().unwrap();
        let mut route = best.clone();
        route.attrs.label = label;
        table.insert(label, Selected { route, from: Some(key), deflection: None });
    }
    table.insert(PathLabel::Default, default);
    table
}

/// Best live route avoiding the failed link and, for an `Avoid` label, the label's link.
pub fn pick_deflection<'a, I>(candidates: I, failed: LinkId, label: PathLabel) -> Option<&'a Route>
where
    I: IntoIterator<Item = &'a Route>,
{
    decide(candidates.into_iter().filter(|r| {
        !r.contains_link(failed)
            && match label {
                PathLabel::Avoid(l) => !r.contains_link(l),
                PathLabel::Default => true,
            }
    }))
}

/// The table entry a packet with `label` uses; unknown labels fall back to the default.
pub fn forward(table: &BTreeMap<PathLabel, Selected>, label: PathLabel) -> Option<AsId> {
    table.get(&label).or_else(|| table.get(&PathLabel::Default)).map(|s| s.forwarding().next_hop())
}

impl Speaker {
    fn build_table(&self, dest: AsId, entries: Vec<(RibKey, &Route)>, labels: bool) -> BTreeMap<PathLabel, Selected> {
        let Some(default) = self.select_default(dest, entries.iter().map(|(k, r)| (k, *r))) else {
            return BTreeMap::new();
        };
        if !labels || default.from.is_none() {
            return BTreeMap::from([(PathLabel::Default, default)]);
        }
        ypc(default, &entries)
    }

    /// Compute the LOCAL_RIB for `dest`. With hiding on, lame entries are kept while a
    /// deflection exists; lame entries that are unused or cannot be deflected are deleted.
    pub(crate) fn compute_table(&mut self, ctx: &Ctx, dest: AsId) -> BTreeMap<PathLabel, Selected> {
        let labels = ctx.config.labels;
        loop {
            let live: Vec<(RibKey, &Route)> = self.live_entries(dest).map(|(k, r)| (*k, r)).collect();
            let live_table = self.build_table(dest, live, labels);
            let lame: Vec<RibKey> = self.entries_for(dest).filter(|(_, e)| e.lame.is_some()).map(|(k, _)| *k).collect();
            if !ctx.config.hiding || lame.is_empty() {
                return live_table;
            }
            let all: Vec<(RibKey, &Route)> = self.entries_for(dest).map(|(k, e)| (*k, &e.route)).collect();
            let all_table = self.build_table(dest, all, labels);
            let mut table = BTreeMap::new();
            let mut used = BTreeSet::new();
            let mut doomed = BTreeSet::new();
            for (label, sel) in all_table {
                let failed = sel.from.and_then(|k| self.rib_in.get(&k)).and_then(|e| e.lame);
                let Some((f, _)) = failed else {
                    table.insert(label, sel);
                    continue;
                };
                let key = sel.from.unwrap();
                used.insert(key);
                match pick_deflection(live_table.values().map(|s| &s.route), f, label) {
                    Some(d) => {
                        let d = d.clone();
                        table.insert(label, Selected { deflection: Some(d), ..sel });
                    }
                    None => {
                        doomed.insert(key);
                    }
                }
            }
            doomed.extend(lame.into_iter().filter(|k| !used.contains(k)));
            if doomed.is_empty() {
                return table;
            }
            for k in doomed {
                self.rib_in.remove(&k);
                self.counters.lame_deleted += 1;
            }
        }
    }

    pub(crate) fn track_hiding(&mut self, old: &BTreeMap<PathLabel, Selected>, new: &BTreeMap<PathLabel, Selected>) {
        for (label, sel) in new {
            let Some(d) = &sel.deflection else { continue };
            match old.get(label).and_then(|o| o.deflection.as_ref()) {
                None => {
                    self.counters.hidden_failures += 1;
                    self.counters.deflection_switches += 1;
                }
                Some(prev) if prev.path != d.path => self.counters.deflection_switches += 1,
                Some(_) => {}
            }
        }
    }

    /// Number of labeled (non-default) LOCAL_RIB entries.
    pub fn labeled_size(&self) -> usize {
        self.loc_rib.values().flat_map(|t| t.keys()).filter(|l| **l != PathLabel::Default).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgp::RouteAttrs;
    use crate::policy::{import_rank, Source};
    use crate::topology::Relationship;

    fn r(path: &[u32], rel: Relationship) -> Route {
        let path: Vec<AsId> = path.iter().map(|x| AsId(*x)).collect();
        Route {
            dest: *path.last().unwrap(),
            link_times: vec![0; path.len() - 1],
            path,
            source: Source::Learned(rel),
            rank: import_rank(rel),
            attrs: RouteAttrs::default(),
        }
    }

    fn key(n: u32, label: PathLabel) -> RibKey {
        RibKey { dest: AsId(4), neighbor: AsId(n), label }
    }

    fn link(a: u32, b: u32) -> LinkId {
        LinkId::new(AsId(a), AsId(b))
    }

    #[test]
    fn label_order_and_display() {
        assert!(PathLabel::Default < PathLabel::Avoid(link(1, 2)));
        assert_eq!(PathLabel::Avoid(link(5, 3)).to_string(), "avoid(3-5)");
        assert_eq!(PathLabel::default(), PathLabel::Default);
    }

    #[test]
    fn fig5_b_table() {
        // B (2) reaches D (4) through its provider C (3), which also offers Avoid(C-D) via E (5).
        let c_def = r(&[2, 3, 4], Relationship::Provider);
        let c_avoid = r(&[2, 3, 5, 4], Relationship::Provider);
        let entries = vec![(key(3, PathLabel::Default), &c_def), (key(3, PathLabel::Avoid(link(3, 4))), &c_avoid)];
        let default = Selected { route: c_def.clone(), from: Some(entries[0].0), deflection: None };
        let t = ypc(default, &entries);
        assert_eq!(t[&PathLabel::Default].route.path, c_def.path);
        assert_eq!(t[&PathLabel::Avoid(link(3, 4))].route.path, c_avoid.path);
        assert_eq!(t[&PathLabel::Avoid(link(3, 4))].route.attrs.label, PathLabel::Avoid(link(3, 4)));
        // nothing avoids B-C
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn no_alternate_means_no_label() {
        let only = r(&[2, 3, 4], Relationship::Provider);
        let entries = vec![(key(3, PathLabel::Default), &only)];
        let default = Selected { route: only.clone(), from: Some(entries[0].0), deflection: None };
        let t = ypc(default, &entries);
        assert_eq!(t.keys().copied().collect::<Vec<_>>(), vec![PathLabel::Default]);
    }

    #[test]
    fn deflection_avoids_failure_and_label_link() {
        let a = r(&[1, 3, 9], Relationship::Customer);
        let b = r(&[1, 4, 9], Relationship::Peer);
        let c = r(&[1, 5, 6, 9], Relationship::Provider);
        let cands = [&a, &b, &c];
        assert_eq!(pick_deflection(cands, link(3, 9), PathLabel::Default), Some(&b));
        assert_eq!(pick_deflection(cands, link(3, 9), PathLabel::Avoid(link(4, 9))), Some(&c));
        assert_eq!(pick_deflection([&a], link(1, 3), PathLabel::Default), None);
    }

    #[test]
    fn forward_falls_back_to_default() {
        let def = r(&[1, 3, 9], Relationship::Customer);
        let alt = r(&[1, 4, 9], Relationship::Peer);
        let l = PathLabel::Avoid(link(3, 9));
        let t = BTreeMap::from([
            (PathLabel::Default, Selected { route: def, from: None, deflection: None }),
            (l, Selected { route: alt, from: None, deflection: None }),
        ]);
        assert_eq!(forward(&t, PathLabel::Default), Some(AsId(3)));
        assert_eq!(forward(&t, l), Some(AsId(4)));
        assert_eq!(forward(&t, PathLabel::Avoid(link(7, 8))), Some(AsId(3)));
        assert_eq!(forward(&BTreeMap::new(), l), None);
    }
}
