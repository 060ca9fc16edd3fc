//! Resilient BGP: pre-computed failover paths and root cause information (RCI).
//!
//! Each AS advertises at most one failover path per destination, and only to the next hop of
//! its primary path. The failover is the candidate sharing the shortest common suffix with
//! the primary. When an AS is left without any regular route it forwards on a received
//! failover; packets arriving on a failover are forwarded along the advertised failover path.
//!
//! Withdrawals and updates caused by a failure carry the failed link and its failure tick.
//! Receivers discard every stored path that crossed that link before it failed, which keeps
//! the path exploration after a failure from looping back through the dead link.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bgp::{decide, Ctx, MsgKind, RibKey, Route, RouteAttrs, Selected, Speaker, Tick, UpdateMsg};
use crate::topology::{path_links, AsId, LinkId};
use crate::yamr::PathLabel;

/// Root cause information: failed link -> tick at which it failed.
pub type RciSet = BTreeMap<LinkId, Tick>;

/// A failover path advertised by this AS.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailoverOut {
    /// The primary next hop the failover was advertised to.
    pub to: AsId,
    /// Starts with the advertising AS.
    pub route: Route,
    /// True when the path was itself learned as a failover.
    pub via_failover: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RbgpState {
    /// Received failovers keyed by (dest, advertising neighbor).
    pub(crate) failover_in: BTreeMap<(AsId, AsId), Route>,
    pub(crate) failover_out: BTreeMap<AsId, FailoverOut>,
    pub(crate) rci: RciSet,
    /// Last next hop of a destination that lost every route, still used for forwarding.
    pub(crate) stale: BTreeMap<AsId, AsId>,
}

/// Number of trailing ASes two paths share.
pub fn common_suffix_len(a: &[AsId], b: &[AsId]) -> usize {
    a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count()
}

/// The most disjoint candidate: shortest common suffix with `primary`, then the usual
/// decision order.
pub fn select_failover<'a, I>(primary: &Route, candidates: I) -> Option<&'a Route>
where
    I: IntoIterator<Item = &'a Route>,
{
    candidates
        .into_iter()
        .filter(|r| r.path != primary.path)
        .min_by_key(|r| (common_suffix_len(&primary.path, &r.path), r.preference_key()))
}

/// True if the route crossed a failed link no later than its failure.
pub fn hits_rci(route: &Route, rci: &RciSet) -> bool {
    path_links(&route.path).zip(route.link_times.iter()).any(|(l, t)| rci.get(&l).is_some_and(|failed| t <= failed))
}

/// Drop every candidate that traverses a known-failed link.
pub fn rci_filter<'a, I>(rci: &RciSet, candidates: I) -> Vec<&'a Route>
where
    I: IntoIterator<Item = &'a Route>,
{
    candidates.into_iter().filter(|r| !hits_rci(r, rci)).collect()
}

impl Speaker {
    pub fn failover_out(&self, dest: AsId) -> Option<&FailoverOut> {
        self.rbgp.failover_out.get(&dest)
    }

    /// Failovers received for `dest`, keyed by the advertising neighbor.
    pub fn failovers_received(&self, dest: AsId) -> BTreeMap<AsId, Vec<AsId>> {
        self.rbgp.failover_in.iter().filter(|((d, _), _)| *d == dest).map(|((_, n), r)| (*n, r.path.clone())).collect()
    }

    pub fn rci(&self) -> &RciSet {
        &self.rbgp.rci
    }

    pub fn stale_next_hop(&self, dest: AsId) -> Option<AsId> {
        self.rbgp.stale.get(&dest).copied()
    }

    /// Merge root cause information carried by a message. Returns the destinations whose
    /// candidates changed.
    pub(crate) fn learn_rci(&mut self, ctx: &Ctx, rci: &RciSet) -> BTreeSet<AsId> {
        if !ctx.config.rci || rci.is_empty() {
            return BTreeSet::new();
        }
        for (l, t) in rci {
            let e = self.rbgp.rci.entry(*l).or_insert(*t);
            *e = (*e).max(*t);
        }
        self.apply_rci(ctx)
    }

    /// Remove stored paths invalidated by the current root cause set.
    pub(crate) fn apply_rci(&mut self, ctx: &Ctx) -> BTreeSet<AsId> {
        let mut dests = BTreeSet::new();
        if !ctx.config.rci || self.rbgp.rci.is_empty() {
            return dests;
        }
        let rci = &self.rbgp.rci;
        let dead: Vec<RibKey> = self.rib_in.iter().filter(|(_, e)| hits_rci(&e.route, rci)).map(|(k, _)| *k).collect();
        let dead_fo: Vec<(AsId, AsId)> =
            self.rbgp.failover_in.iter().filter(|(_, r)| hits_rci(r, rci)).map(|(k, _)| *k).collect();
        for k in dead {
            self.rib_in.remove(&k);
            self.counters.rci_discards += 1;
            dests.insert(k.dest);
        }
        for k in dead_fo {
            self.rbgp.failover_in.remove(&k);
            self.counters.rci_discards += 1;
            dests.insert(k.0);
        }
        dests
    }

    /// A fresh advertisement that crossed a failed link after its failure proves repair.
    pub(crate) fn expire_rci(&mut self, route: &Route) {
        for (l, t) in path_links(&route.path).zip(route.link_times.iter()) {
            if self.rbgp.rci.get(&l).is_some_and(|failed| t > failed) {
                self.rbgp.rci.remove(&l);
            }
        }
    }

    pub(crate) fn rci_valid(&self, route: &Route) -> bool {
        !hits_rci(route, &self.rbgp.rci)
    }

    /// Re-evaluate the failover advertised for `dest` and emit the needed updates.
    pub(crate) fn advertise_failover(&mut self, ctx: &Ctx, dest: AsId, cause: &RciSet) -> Vec<UpdateMsg> {
        let me = self.id;
        let chosen = self.failover_choice(ctx, dest);
        let prev = self.rbgp.failover_out.get(&dest).cloned();
        if let (Some(p), Some(c)) = (&prev, &chosen) {
            if p.to == c.to && p.route.same_advertisement(&c.route) {
                return Vec::new();
            }
        }
        let rci = if ctx.config.rci { cause.clone() } else { RciSet::new() };
        let mut out = Vec::new();
        if let Some(p) = prev {
            self.rbgp.failover_out.remove(&dest);
            let moved = chosen.as_ref().is_none_or(|c| c.to != p.to);
            if moved && ctx.graph.is_up(me, p.to) {
                out.push(UpdateMsg {
                    sender: me,
                    receiver: p.to,
                    kind: MsgKind::Withdraw { dest, label: PathLabel::Default, failover: true, rci: rci.clone() },
                });
            }
        }
        if let Some(c) = chosen {
            let mut adv = c.route.clone();
            adv.attrs = RouteAttrs { failover: true, rci, ..RouteAttrs::default() };
            out.push(UpdateMsg { sender: me, receiver: c.to, kind: MsgKind::Announce(adv) });
            self.rbgp.failover_out.insert(dest, c);
        }
        out
    }

    fn failover_choice(&self, ctx: &Ctx, dest: AsId) -> Option<FailoverOut> {
        let me = self.id;
        let primary = self.best(dest)?;
        // the destination itself needs no failover
        if primary.path.len() <= 2 {
            return None;
        }
        let to = primary.next_hop();
        if !ctx.graph.is_up(me, to) {
            return None;
        }
        let regular = self
            .live_entries(dest)
            .filter(|(k, _)| k.label == PathLabel::Default && k.neighbor != to)
            .map(|(_, r)| (r, false));
        let received =
            self.rbgp.failover_in.iter().filter(|((d, n), _)| *d == dest && *n != to).map(|(_, r)| (r, true));
        let cands: Vec<(&Route, bool)> =
            regular.chain(received).filter(|(r, _)| !r.contains(to) && ctx.graph.is_up(me, r.next_hop())).collect();
        let best = select_failover(primary, cands.iter().map(|(r, _)| *r))?;
        let via_failover = cands.iter().find(|(r, _)| std::ptr::eq(*r, best)).map(|(_, v)| *v)?;
        let mut route = best.clone();
        route.attrs = RouteAttrs::default();
        Some(FailoverOut { to, route, via_failover })
    }

    /// Next hop for a packet that arrived from `prev` on a failover this AS advertised.
    /// The flag tells whether the packet stays in failover mode.
    pub(crate) fn failover_forwarding(&self, dest: AsId, prev: Option<AsId>) -> Option<(AsId, bool)> {
        let fo = self.rbgp.failover_out.get(&dest)?;
        if Some(fo.to) != prev {
            return None;
        }
        let nh = fo.route.next_hop();
        let backed = if fo.via_failover {
            self.rbgp.failover_in.get(&(dest, nh)).is_some_and(|r| r.path == fo.route.path)
        } else {
            self.rib_in
                .get(&RibKey { dest, neighbor: nh, label: PathLabel::Default })
                .is_some_and(|e| e.lame.is_none() && e.route.path == fo.route.path)
        };
        backed.then_some((nh, fo.via_failover))
    }

    /// Best received failover whose link is up, used only without any regular route.
    pub(crate) fn failover_fallback(&self, dest: AsId, up: &dyn Fn(AsId) -> bool) -> Option<AsId> {
        let usable = self.rbgp.failover_in.iter().filter(|((d, n), _)| *d == dest && up(*n)).map(|(_, r)| r);
        decide(usable).map(Route::next_hop)
    }

    pub(crate) fn track_failover(
        &mut self,
        ctx: &Ctx,
        dest: AsId,
        old: &BTreeMap<PathLabel, Selected>,
        new: &BTreeMap<PathLabel, Selected>,
    ) {
        let had = old.get(&PathLabel::Default);
        if new.contains_key(&PathLabel::Default) {
            self.rbgp.stale.remove(&dest);
            return;
        }
        let Some(prev) = had else { return };
        if self.rbgp.failover_in.keys().any(|(d, _)| *d == dest) {
            self.counters.failover_switches += 1;
        }
        let nh = prev.route.next_hop();
        if nh != self.id && ctx.graph.is_up(self.id, nh) {
            self.rbgp.stale.insert(dest, nh);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{import_rank, Source};
    use crate::topology::Relationship;

    fn r(path: &[u32], rel: Relationship, t: Tick) -> Route {
        let path: Vec<AsId> = path.iter().map(|x| AsId(*x)).collect();
        Route {
            dest: *path.last().unwrap(),
            link_times: vec![t; path.len() - 1],
            path,
            source: Source::Learned(rel),
            rank: import_rank(rel),
            attrs: RouteAttrs::default(),
        }
    }

    #[test]
    fn suffix_lengths() {
        let a = [AsId(1), AsId(2), AsId(9)];
        let b = [AsId(1), AsId(3), AsId(2), AsId(9)];
        let c = [AsId(1), AsId(3), AsId(9)];
        assert_eq!(common_suffix_len(&a, &b), 2);
        assert_eq!(common_suffix_len(&a, &c), 1);
        assert_eq!(common_suffix_len(&a, &a), 3);
    }

    #[test]
    fn most_disjoint_wins_over_preference() {
        // primary [1,2,9]; [1,3,9] overlaps only in the destination
        let primary = r(&[1, 2, 9], Relationship::Customer, 0);
        let overlap2 = r(&[1, 4, 2, 9], Relationship::Customer, 0);
        let overlap1 = r(&[1, 3, 9], Relationship::Provider, 0);
        assert_eq!(select_failover(&primary, [&overlap2, &overlap1]), Some(&overlap1));
        assert_eq!(select_failover(&primary, std::iter::empty()), None);
        // the primary itself is never its own failover
        assert_eq!(select_failover(&primary, [&primary]), None);
    }

    #[test]
    fn failover_ties_use_decision_order() {
        let primary = r(&[1, 2, 9], Relationship::Customer, 0);
        let a = r(&[1, 5, 9], Relationship::Peer, 0);
        let b = r(&[1, 3, 9], Relationship::Peer, 0);
        let c = r(&[1, 4, 9], Relationship::Customer, 0);
        assert_eq!(select_failover(&primary, [&a, &b, &c]), Some(&c));
        assert_eq!(select_failover(&primary, [&a, &b]), Some(&b));
    }

    #[test]
    fn fig4_david_prefers_the_att_path() {
        // David = 6, ATT = 4, Hari = 3, MIT = 1, Sprint = 2
        let primary = r(&[6, 3, 1], Relationship::Customer, 0);
        let via_att_sprint = r(&[6, 4, 2, 1], Relationship::Provider, 0);
        let via_att_hari = r(&[6, 4, 3, 1], Relationship::Provider, 0);
        assert_eq!(select_failover(&primary, [&via_att_hari, &via_att_sprint]), Some(&via_att_sprint));
    }

    #[test]
    fn rci_filtering() {
        // ATT holds rci {(Hari=3, MIT=1) failed at 10}
        let mut rci = RciSet::new();
        rci.insert(LinkId::new(AsId(3), AsId(1)), 10);
        let via_peter = r(&[4, 5, 3, 1], Relationship::Customer, 2);
        let via_sprint = r(&[4, 2, 1], Relationship::Peer, 2);
        let kept = rci_filter(&rci, [&via_peter, &via_sprint]);
        assert_eq!(kept, vec![&via_sprint]);
        assert_eq!(decide(kept).unwrap().path, vec![AsId(4), AsId(2), AsId(1)]);
        // empty set leaves candidates alone
        assert_eq!(rci_filter(&RciSet::new(), [&via_peter, &via_sprint]).len(), 2);
        // crossing the link after it failed means it was repaired
        let fresh = r(&[4, 5, 3, 1], Relationship::Customer, 11);
        assert!(!hits_rci(&fresh, &rci));
    }
}
