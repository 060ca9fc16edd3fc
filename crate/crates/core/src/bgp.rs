//! Baseline path-vector routing: routes, RIBs, the decision process and update handling.
//!
//! Every protocol variant runs on the same [`Speaker`]. The baseline only ever uses the
//! [`PathLabel::Default`] label; the R-BGP, YAMR and MIRO extensions hook into the
//! recomputation and message handling implemented here.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::miro::{MiroMsg, MiroState};
use crate::policy::{export_allowed, import_rank, PrefRank, Source};
use crate::rbgp::{RbgpState, RciSet};
use crate::topology::{path_links, AsGraph, AsId, LinkId, Relationship};
use crate::yamr::PathLabel;
use crate::ProtocolConfig;

/// Simulation time in integer ticks.
pub type Tick = u64;

/// Optional per-route protocol attributes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteAttrs {
    pub label: PathLabel,
    pub failover: bool,
    /// Root cause information: failed links and the tick they failed at.
    pub rci: RciSet,
    pub price_tag: Option<String>,
    pub tunnel_id: Option<u32>,
}

/// A path toward `dest` as held by `path[0]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub dest: AsId,
    /// From the holder to the destination, inclusive.
    pub path: Vec<AsId>,
    pub source: Source,
    pub rank: PrefRank,
    /// `link_times[i]` is the tick at which the advertisement crossed the link
    /// `path[i]-path[i+1]`.
    pub link_times: Vec<Tick>,
    pub attrs: RouteAttrs,
}

impl Route {
    /// The route a destination holds to itself.
    pub fn origin(me: AsId) -> Self {
        Route {
            dest: me,
            path: vec![me],
            source: Source::Local,
            rank: PrefRank::CUSTOMER,
            link_times: Vec::new(),
            attrs: RouteAttrs::default(),
        }
    }

    pub fn holder(&self) -> AsId {
        self.path[0]
    }

    /// The next AS toward the destination; the holder itself for an originated route.
    pub fn next_hop(&self) -> AsId {
        self.path.get(1).copied().unwrap_or(self.path[0])
    }

    pub fn learned_from(&self) -> Option<AsId> {
        self.path.get(1).copied()
    }

    pub fn contains(&self, x: AsId) -> bool {
        self.path.contains(&x)
    }

    pub fn contains_link(&self, link: LinkId) -> bool {
        path_links(&self.path).any(|l| l == link)
    }

    /// The route `me` obtains by receiving `self` from `self.holder()` at tick `now`.
    pub fn extend(&self, me: AsId, rel: Relationship, now: Tick) -> Route {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.push(me);
        path.extend_from_slice(&self.path);
        let mut link_times = Vec::with_capacity(self.link_times.len() + 1);
        link_times.push(now);
        link_times.extend_from_slice(&self.link_times);
        Route {
            dest: self.dest,
            path,
            source: Source::Learned(rel),
            rank: import_rank(rel),
            link_times,
            attrs: RouteAttrs {
                label: self.attrs.label,
                failover: self.attrs.failover,
                rci: RciSet::new(),
                price_tag: self.attrs.price_tag.clone(),
                tunnel_id: self.attrs.tunnel_id,
            },
        }
    }

    /// Decision order: preference class, then path length, then next-hop id.
    pub fn preference_key(&self) -> (PrefRank, usize, AsId) {
        (self.rank, self.path.len(), self.next_hop())
    }

    /// True if both would be advertised identically (root cause info is per message).
    pub fn same_advertisement(&self, other: &Route) -> bool {
        self.dest == other.dest
            && self.path == other.path
            && self.link_times == other.link_times
            && self.attrs.label == other.attrs.label
            && self.attrs.failover == other.attrs.failover
            && self.attrs.price_tag == other.attrs.price_tag
            && self.attrs.tunnel_id == other.attrs.tunnel_id
    }
}

/// Pick the best route: lowest (rank, path length, next-hop id).
pub fn decide<'a, I>(candidates: I) -> Option<&'a Route>
where
    I: IntoIterator<Item = &'a Route>,
{
    candidates.into_iter().min_by_key(|r| r.preference_key())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RibKey {
    pub dest: AsId,
    pub neighbor: AsId,
    pub label: PathLabel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RibEntry {
    /// Already extended with the holder.
    pub route: Route,
    /// Set when the route was withdrawn but is kept for failure hiding:
    /// the failed link and its failure tick.
    pub lame: Option<(LinkId, Tick)>,
}

/// A LOCAL_RIB entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selected {
    pub route: Route,
    /// RIB_IN entry the route was taken from; `None` for originated routes.
    pub from: Option<RibKey>,
    /// Forwarding substitute while `route` is a hidden lame path.
    pub deflection: Option<Route>,
}

impl Selected {
    /// The route packets actually follow.
    pub fn forwarding(&self) -> &Route {
        self.deflection.as_ref().unwrap_or(&self.route)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsgKind {
    /// The sender's route (path starts with the sender).
    Announce(Route),
    Withdraw {
        dest: AsId,
        label: PathLabel,
        failover: bool,
        rci: RciSet,
    },
    Miro {
        /// Control path from sender to receiver, both inclusive.
        relay: Vec<AsId>,
        body: MiroMsg,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateMsg {
    pub sender: AsId,
    pub receiver: AsId,
    pub kind: MsgKind,
}

impl UpdateMsg {
    /// Metric bucket of the message.
    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            MsgKind::Announce(r) if r.attrs.failover => "failover_announce",
            MsgKind::Announce(_) => "announce",
            MsgKind::Withdraw { failover: true, .. } => "failover_withdraw",
            MsgKind::Withdraw { .. } => "withdraw",
            MsgKind::Miro { body, .. } => body.kind_name(),
        }
    }

    /// The ASes the message travels through, sender first.
    pub fn hops(&self) -> Vec<AsId> {
        match &self.kind {
            MsgKind::Miro { relay, .. } => relay.clone(),
            _ => vec![self.sender, self.receiver],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("AS {me} received a message from non-neighbor AS {from}")]
    UnknownNeighbor { me: AsId, from: AsId },
    #[error("AS {me} has no route to destination {dest}")]
    UnknownDestination { me: AsId, dest: AsId },
    #[error("AS {me} cannot reach MIRO responder {responder}")]
    UnreachableResponder { me: AsId, responder: AsId },
    #[error("invalid MIRO request: {0}")]
    InvalidRequest(String),
}

/// Read-only environment for one processing step.
#[derive(Clone, Copy, Debug)]
pub struct Ctx<'a> {
    pub graph: &'a AsGraph,
    pub now: Tick,
    pub config: &'a ProtocolConfig,
}

/// Per-AS counters folded into the metrics report.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerCounters {
    pub rci_discards: u64,
    pub failover_switches: u64,
    pub hidden_failures: u64,
    pub deflection_switches: u64,
    pub lame_deleted: u64,
    pub ingress_loops: u64,
    pub tunnels_established: u64,
    pub tunnels_refused: u64,
    pub tunnels_torn_down: u64,
    pub miro_ignored: u64,
}

/// Header fields that influence forwarding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Header {
    pub label: PathLabel,
    /// Set while the packet travels toward the AS that advertised a failover path.
    pub failover: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hop {
    Deliver,
    Forward(AsId, Header),
    Drop,
}

/// Protocol state of one AS.
#[derive(Clone, Debug)]
pub struct Speaker {
    pub(crate) id: AsId,
    pub(crate) neighbors: BTreeMap<AsId, Relationship>,
    pub(crate) originated: BTreeSet<AsId>,
    pub(crate) rib_in: BTreeMap<RibKey, RibEntry>,
    pub(crate) loc_rib: BTreeMap<AsId, BTreeMap<PathLabel, Selected>>,
    /// What was last advertised: (neighbor, dest, label) -> route.
    pub(crate) adj_out: BTreeMap<(AsId, AsId, PathLabel), Route>,
    pub(crate) rbgp: RbgpState,
    pub(crate) miro: MiroState,
    pub(crate) counters: SpeakerCounters,
}

impl Speaker {
    pub fn new(id: AsId, graph: &AsGraph) -> Self {
        Speaker {
            id,
            neighbors: graph.neighbors(id).collect(),
            originated: BTreeSet::new(),
            rib_in: BTreeMap::new(),
            loc_rib: BTreeMap::new(),
            adj_out: BTreeMap::new(),
            rbgp: RbgpState::default(),
            miro: MiroState::default(),
            counters: SpeakerCounters::default(),
        }
    }

    pub fn id(&self) -> AsId {
        self.id
    }

    pub fn counters(&self) -> &SpeakerCounters {
        &self.counters
    }

    /// The default (BGP) route toward `dest`.
    pub fn best(&self, dest: AsId) -> Option<&Route> {
        self.selected(dest, PathLabel::Default).map(|s| &s.route)
    }

    pub fn selected(&self, dest: AsId, label: PathLabel) -> Option<&Selected> {
        self.loc_rib.get(&dest).and_then(|t| t.get(&label))
    }

    /// LOCAL_RIB for one destination, keyed by label.
    pub fn table(&self, dest: AsId) -> BTreeMap<PathLabel, Vec<AsId>> {
        self.loc_rib.get(&dest).map(|t| t.iter().map(|(l, s)| (*l, s.route.path.clone())).collect()).unwrap_or_default()
    }

    pub fn rib_in(&self) -> &BTreeMap<RibKey, RibEntry> {
        &self.rib_in
    }

    pub fn loc_rib(&self) -> &BTreeMap<AsId, BTreeMap<PathLabel, Selected>> {
        &self.loc_rib
    }

    pub fn rib_in_size(&self) -> usize {
        self.rib_in.len() + self.rbgp.failover_in.len()
    }

    pub fn loc_rib_size(&self) -> usize {
        self.loc_rib.values().map(BTreeMap::len).sum()
    }

    pub fn lame_count(&self) -> usize {
        self.rib_in.values().filter(|e| e.lame.is_some()).count()
    }

    /// Routes advertised to `neighbor`, keyed by (dest, label).
    pub fn advertised_to(&self, neighbor: AsId) -> BTreeMap<(AsId, PathLabel), Vec<AsId>> {
        self.adj_out
            .iter()
            .filter(|((n, _, _), _)| *n == neighbor)
            .map(|((_, d, l), r)| ((*d, *l), r.path.clone()))
            .collect()
    }

    pub(crate) fn rel(&self, neighbor: AsId) -> Option<Relationship> {
        self.neighbors.get(&neighbor).copied()
    }

    /// Install the self route for this AS and announce it.
    pub fn originate(&mut self, ctx: &Ctx) -> Vec<UpdateMsg> {
        let me = self.id;
        self.originated.insert(me);
        self.recompute(ctx, me, &RciSet::new())
    }

    /// Process one control message addressed to this AS.
    pub fn handle(&mut self, ctx: &Ctx, msg: &UpdateMsg) -> Result<Vec<UpdateMsg>, ProtocolError> {
        let from = msg.sender;
        if let MsgKind::Miro { relay, body } = &msg.kind {
            return self.handle_miro(ctx, relay, body);
        }
        let rel = self.rel(from).ok_or(ProtocolError::UnknownNeighbor { me: self.id, from })?;
        let mut out = Vec::new();
        match &msg.kind {
            MsgKind::Announce(route) => {
                let cause = route.attrs.rci.clone();
                let mut dests = self.learn_rci(ctx, &cause);
                let label = route.attrs.label;
                let dest = route.dest;
                if route.contains(self.id) {
                    self.counters.ingress_loops += 1;
                    if route.attrs.failover {
                        self.rbgp.failover_in.remove(&(dest, from));
                    } else {
                        self.rib_in.remove(&RibKey { dest, neighbor: from, label });
                    }
                } else {
                    let cand = route.extend(self.id, rel, ctx.now);
                    if ctx.config.rci {
                        self.expire_rci(&cand);
                    }
                    if ctx.config.rci && !self.rci_valid(&cand) {
                        self.counters.rci_discards += 1;
                        if cand.attrs.failover {
                            self.rbgp.failover_in.remove(&(dest, from));
                        } else {
                            self.rib_in.remove(&RibKey { dest, neighbor: from, label });
                        }
                    } else if cand.attrs.failover {
                        self.rbgp.failover_in.insert((dest, from), cand);
                    } else {
                        self.rib_in
                            .insert(RibKey { dest, neighbor: from, label }, RibEntry { route: cand, lame: None });
                    }
                }
                dests.insert(dest);
                for d in dests {
                    out.extend(self.recompute(ctx, d, &cause));
                }
            }
            MsgKind::Withdraw { dest, label, failover, rci } => {
                let cause = rci.clone();
                let mut dests = self.learn_rci(ctx, &cause);
                if *failover {
                    self.rbgp.failover_in.remove(&(*dest, from));
                } else {
                    let key = RibKey { dest: *dest, neighbor: from, label: *label };
                    match (ctx.config.hiding, cause.iter().next()) {
                        (true, Some((link, t))) => {
                            if let Some(e) = self.rib_in.get_mut(&key) {
                                e.lame = Some((*link, *t));
                            }
                        }
                        _ => {
                            self.rib_in.remove(&key);
                        }
                    }
                }
                dests.insert(*dest);
                for d in dests {
                    out.extend(self.recompute(ctx, d, &cause));
                }
            }
            MsgKind::Miro { .. } => unreachable!(),
        }
        Ok(out)
    }

    /// The link to `neighbor` went down.
    pub fn link_down(&mut self, ctx: &Ctx, neighbor: AsId) -> Vec<UpdateMsg> {
        let link = LinkId::new(self.id, neighbor);
        let mut cause = RciSet::new();
        if ctx.config.rci || ctx.config.hiding {
            cause.insert(link, ctx.now);
        }
        if ctx.config.rci {
            self.rbgp.rci.insert(link, ctx.now);
        }
        let mut dests: BTreeSet<AsId> = BTreeSet::new();
        let keys: Vec<RibKey> = self.rib_in.keys().filter(|k| k.neighbor == neighbor).copied().collect();
        for key in keys {
            dests.insert(key.dest);
            if ctx.config.hiding {
                if let Some(e) = self.rib_in.get_mut(&key) {
                    e.lame = Some((link, ctx.now));
                }
            } else {
                self.rib_in.remove(&key);
            }
        }
        let fo: Vec<(AsId, AsId)> = self.rbgp.failover_in.keys().filter(|(_, n)| *n == neighbor).copied().collect();
        for k in fo {
            dests.insert(k.0);
            self.rbgp.failover_in.remove(&k);
        }
        self.adj_out.retain(|(n, _, _), _| *n != neighbor);
        self.rbgp.failover_out.retain(|d, out| {
            if out.to == neighbor {
                dests.insert(*d);
                false
            } else {
                true
            }
        });
        if ctx.config.rci {
            dests.extend(self.apply_rci(ctx));
        }
        let mut out = self.miro_link_down(ctx, neighbor);
        dests.extend(self.loc_rib.keys().copied());
        for d in dests {
            out.extend(self.recompute(ctx, d, &cause));
        }
        out
    }

    /// The link to `neighbor` came back up: drop repaired root causes and lame entries and
    /// re-advertise everything to the neighbor.
    pub fn link_up(&mut self, ctx: &Ctx, neighbor: AsId) -> Vec<UpdateMsg> {
        let link = LinkId::new(self.id, neighbor);
        self.rbgp.rci.remove(&link);
        let mut dests: BTreeSet<AsId> = self.loc_rib.keys().copied().collect();
        let lame: Vec<RibKey> =
            self.rib_in.iter().filter(|(_, e)| e.lame.is_some_and(|(l, _)| l == link)).map(|(k, _)| *k).collect();
        for k in lame {
            dests.insert(k.dest);
            self.rib_in.remove(&k);
            self.counters.lame_deleted += 1;
        }
        let mut out = Vec::new();
        for d in dests {
            out.extend(self.recompute(ctx, d, &RciSet::new()));
        }
        out
    }

    /// Recompute the LOCAL_RIB for `dest` and emit the resulting updates. `cause` is attached
    /// to every emitted message when root-cause tracking or hiding is active.
    pub(crate) fn recompute(&mut self, ctx: &Ctx, dest: AsId, cause: &RciSet) -> Vec<UpdateMsg> {
        let old = self.loc_rib.get(&dest).cloned().unwrap_or_default();
        let table = self.compute_table(ctx, dest);
        if ctx.config.failover {
            self.track_failover(ctx, dest, &old, &table);
        }
        if ctx.config.hiding {
            self.track_hiding(&old, &table);
        }
        if table.is_empty() {
            self.loc_rib.remove(&dest);
        } else {
            self.loc_rib.insert(dest, table);
        }
        let mut out = self.export(ctx, dest, cause);
        if ctx.config.failover {
            out.extend(self.advertise_failover(ctx, dest, cause));
        }
        if ctx.config.miro {
            out.extend(self.teardown_on_change(ctx, dest));
        }
        out
    }

    /// Candidate routes usable for selection: non-lame entries passing the loop filter.
    pub(crate) fn live_entries(&self, dest: AsId) -> impl Iterator<Item = (&RibKey, &Route)> + '_ {
        self.entries_for(dest).filter(|(_, e)| e.lame.is_none()).map(|(k, e)| (k, &e.route))
    }

    pub(crate) fn entries_for(&self, dest: AsId) -> impl Iterator<Item = (&RibKey, &RibEntry)> + '_ {
        let lo = RibKey { dest, neighbor: AsId(0), label: PathLabel::Default };
        self.rib_in.range(lo..).take_while(move |(k, _)| k.dest == dest)
    }

    /// Default-only selection over the given entries.
    pub(crate) fn select_default<'a, I>(&self, dest: AsId, entries: I) -> Option<Selected>
    where
        I: IntoIterator<Item = (&'a RibKey, &'a Route)>,
    {
        if self.originated.contains(&dest) {
            return Some(Selected { route: Route::origin(self.id), from: None, deflection: None });
        }
        let defaults: Vec<(&RibKey, &Route)> =
            entries.into_iter().filter(|(k, _)| k.label == PathLabel::Default).collect();
        let best = decide(defaults.iter().map(|(_, r)| *r))?;
        let (key, route) = defaults.iter().find(|(_, r)| std::ptr::eq(*r, best))?;
        let mut route = (*route).clone();
        route.attrs.label = PathLabel::Default;
        Some(Selected { route, from: Some(**key), deflection: None })
    }

    /// True if `route` may be handed to `neighbor`.
    pub(crate) fn exportable(&self, route: &Route, neighbor: AsId) -> bool {
        let Some(rel) = self.rel(neighbor) else { return false };
        !route.contains(neighbor) && export_allowed(route.source, rel)
    }

    /// What `neighbor` should currently see for (dest, label).
    fn view_for(&self, dest: AsId, label: PathLabel, neighbor: AsId) -> Option<Route> {
        let sel = self.selected(dest, label)?;
        // A hidden failure stays hidden only from neighbors that may use both the lame path
        // and its deflection; others see the deflection or nothing.
        let shown = match &sel.deflection {
            Some(d) if !self.exportable(d, neighbor) => return None,
            Some(d) if !self.exportable(&sel.route, neighbor) => d,
            _ if !self.exportable(&sel.route, neighbor) => return None,
            _ => &sel.route,
        };
        let mut r = shown.clone();
        r.attrs = RouteAttrs { label, ..RouteAttrs::default() };
        Some(r)
    }

    /// Bring every neighbor's view of `dest` in line with the LOCAL_RIB. Neighbors are
    /// visited in ascending id order, default label first.
    fn export(&mut self, ctx: &Ctx, dest: AsId, cause: &RciSet) -> Vec<UpdateMsg> {
        let attach = ctx.config.rci || ctx.config.hiding;
        let mut labels: BTreeSet<PathLabel> =
            self.loc_rib.get(&dest).map(|t| t.keys().copied().collect()).unwrap_or_default();
        labels.extend(self.adj_out.keys().filter(|(_, d, _)| *d == dest).map(|(_, _, l)| *l));
        let neighbors: Vec<AsId> = self.neighbors.keys().copied().collect();
        let mut out = Vec::new();
        for n in neighbors {
            if !ctx.graph.is_up(self.id, n) {
                continue;
            }
            for &label in &labels {
                if label != PathLabel::Default && !ctx.config.labels {
                    continue;
                }
                let want = self.view_for(dest, label, n);
                let key = (n, dest, label);
                match (want, self.adj_out.get(&key)) {
                    (Some(w), Some(prev)) if w.same_advertisement(prev) => {}
                    (Some(mut w), _) => {
                        self.adj_out.insert(key, w.clone());
                        if attach {
                            w.attrs.rci = cause.clone();
                        }
                        out.push(UpdateMsg { sender: self.id, receiver: n, kind: MsgKind::Announce(w) });
                    }
                    (None, Some(_)) => {
                        self.adj_out.remove(&key);
                        out.push(UpdateMsg {
                            sender: self.id,
                            receiver: n,
                            kind: MsgKind::Withdraw {
                                dest,
                                label,
                                failover: false,
                                rci: if attach { cause.clone() } else { RciSet::new() },
                            },
                        });
                    }
                    (None, None) => {}
                }
            }
        }
        out
    }

    /// One data-plane step at this AS.
    pub fn next_hop(&self, ctx: &Ctx, dest: AsId, header: Header, prev: Option<AsId>) -> Hop {
        if self.id == dest {
            return Hop::Deliver;
        }
        let up = |n: AsId| ctx.graph.is_up(self.id, n);
        if ctx.config.failover && header.failover {
            if let Some((nh, keep)) = self.failover_forwarding(dest, prev) {
                if up(nh) {
                    return Hop::Forward(nh, Header { label: header.label, failover: keep });
                }
            }
        }
        let header = Header { failover: false, ..header };
        if let Some(table) = self.loc_rib.get(&dest) {
            let sel = match header.label {
                PathLabel::Avoid(_) if ctx.config.labels => {
                    table.get(&header.label).or_else(|| table.get(&PathLabel::Default))
                }
                _ => table.get(&PathLabel::Default),
            };
            if let Some(sel) = sel {
                let nh = sel.forwarding().next_hop();
                if up(nh) {
                    return Hop::Forward(nh, header);
                }
                if ctx.config.labels {
                    let avoid = PathLabel::Avoid(LinkId::new(self.id, nh));
                    if let Some(alt) = table.get(&avoid) {
                        let nh = alt.forwarding().next_hop();
                        if up(nh) {
                            return Hop::Forward(nh, Header { label: avoid, failover: false });
                        }
                    }
                }
            }
        }
        if ctx.config.labels {
            if let Some(hop) = self.labeled_fallback(ctx, dest, header.label) {
                return hop;
            }
        }
        if ctx.config.failover && !self.loc_rib.contains_key(&dest) {
            if let Some(n) = self.failover_fallback(dest, &up) {
                return Hop::Forward(n, Header { label: header.label, failover: true });
            }
            if let Some(&n) = self.rbgp.stale.get(&dest) {
                if up(n) {
                    return Hop::Forward(n, header);
                }
            }
        }
        Hop::Drop
    }

    /// Neighbors' `Avoid` routes for a failed adjacent link (or for the packet's label) are
    /// usable even when the LOCAL_RIB lost the destination.
    fn labeled_fallback(&self, ctx: &Ctx, dest: AsId, label: PathLabel) -> Option<Hop> {
        let me = self.id;
        let up = |n: AsId| ctx.graph.is_up(me, n);
        let wanted: Vec<PathLabel> = match label {
            PathLabel::Avoid(_) => vec![label],
            PathLabel::Default => {
                self.neighbors.keys().filter(|n| !up(**n)).map(|n| PathLabel::Avoid(LinkId::new(me, *n))).collect()
            }
        };
        for l in wanted {
            let PathLabel::Avoid(link) = l else { continue };
            let usable = self
                .live_entries(dest)
                .filter(|(k, r)| k.label == l && !r.contains_link(link) && up(r.next_hop()))
                .map(|(_, r)| r);
            if let Some(r) = decide(usable) {
                return Some(Hop::Forward(r.next_hop(), Header { label: l, failover: false }));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;
    use crate::Protocol;

    fn route(path: &[u32], rel: Relationship) -> Route {
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

    #[test]
    fn decide_prefers_customer_over_shorter_peer() {
        let c = route(&[1, 2, 3, 9], Relationship::Customer);
        let p = route(&[1, 4, 9], Relationship::Peer);
        assert_eq!(decide([&c, &p]), Some(&c));
    }

    #[test]
    fn decide_tie_breaks() {
        let a = route(&[1, 5, 9], Relationship::Peer);
        let b = route(&[1, 4, 6, 9], Relationship::Peer);
        assert_eq!(decide([&b, &a]), Some(&a));
        let c = route(&[1, 4, 9], Relationship::Peer);
        assert_eq!(decide([&a, &c]), Some(&c));
        assert_eq!(decide(std::iter::empty::<&Route>()), None);
    }

    #[test]
    fn decide_fig1_b() {
        let f = fixture("fig1").unwrap();
        let (b, c, e, fd) = (f.id("B"), f.id("C"), f.id("E"), f.id("F"));
        let g = f.graph();
        let via_e = route(&[b.0, e.0, fd.0], g.rel_from_perspective(b, e).unwrap());
        let via_c = route(&[b.0, c.0, fd.0], g.rel_from_perspective(b, c).unwrap());
        assert_eq!(decide([&via_c, &via_e]).unwrap().path, vec![b, e, fd]);
    }

    fn bgp_config() -> ProtocolConfig {
        ProtocolConfig::for_protocol(Protocol::Bgp)
    }

    #[test]
    fn originate_announces_to_neighbors_once() {
        let f = fixture("fig5").unwrap();
        let g = f.graph();
        let cfg = bgp_config();
        let ctx = Ctx { graph: &g, now: 0, config: &cfg };
        let d = f.id("D");
        let mut s = Speaker::new(d, &g);
        let msgs = s.originate(&ctx);
        let targets: Vec<AsId> = msgs.iter().map(|m| m.receiver).collect();
        assert_eq!(targets, vec![f.id("C"), f.id("E")]);
        for m in &msgs {
            assert!(matches!(&m.kind, MsgKind::Announce(r) if r.path == vec![d]));
        }
        assert!(s.originate(&ctx).is_empty());
    }

    #[test]
    fn isolated_origin_is_silent() {
        let mut g = AsGraph::new();
        g.add_node(AsId(7)).unwrap();
        let cfg = bgp_config();
        let ctx = Ctx { graph: &g, now: 0, config: &cfg };
        let mut s = Speaker::new(AsId(7), &g);
        assert!(s.originate(&ctx).is_empty());
        assert_eq!(s.best(AsId(7)).unwrap().path, vec![AsId(7)]);
    }

    #[test]
    fn looped_announce_is_ignored() {
        let f = fixture("fig3").unwrap();
        let g = f.graph();
        let cfg = bgp_config();
        let ctx = Ctx { graph: &g, now: 0, config: &cfg };
        let (hari, att, mit) = (f.id("Hari"), f.id("ATT"), f.id("MIT"));
        let mut s = Speaker::new(hari, &g);
        let mut r = route(&[att.0, hari.0, mit.0], Relationship::Customer);
        r.source = Source::Learned(Relationship::Customer);
        let out = s.handle(&ctx, &UpdateMsg { sender: att, receiver: hari, kind: MsgKind::Announce(r) }).unwrap();
        assert!(out.is_empty());
        assert!(s.best(mit).is_none());
        assert_eq!(s.counters.ingress_loops, 1);
    }

    #[test]
    fn unknown_neighbor_is_an_error() {
        let f = fixture("fig3").unwrap();
        let g = f.graph();
        let cfg = bgp_config();
        let ctx = Ctx { graph: &g, now: 0, config: &cfg };
        let mut s = Speaker::new(f.id("MIT"), &g);
        let msg = UpdateMsg {
            sender: f.id("Peter"),
            receiver: f.id("MIT"),
            kind: MsgKind::Withdraw {
                dest: f.id("MIT"),
                label: PathLabel::Default,
                failover: false,
                rci: RciSet::new(),
            },
        };
        assert!(matches!(s.handle(&ctx, &msg), Err(ProtocolError::UnknownNeighbor { .. })));
    }

    #[test]
    fn withdraw_without_alternative_propagates() {
        // Hari learns [MIT] from MIT, then loses it: withdrawals go to ATT and Peter.
        let f = fixture("fig3").unwrap();
        let mut g = f.graph();
        let cfg = bgp_config();
        let (hari, att, peter, mit) = (f.id("Hari"), f.id("ATT"), f.id("Peter"), f.id("MIT"));
        let mut s = Speaker::new(hari, &g);
        let ctx = Ctx { graph: &g, now: 0, config: &cfg };
        let out = s
            .handle(&ctx, &UpdateMsg { sender: mit, receiver: hari, kind: MsgKind::Announce(Route::origin(mit)) })
            .unwrap();
        let to: Vec<AsId> = out.iter().map(|m| m.receiver).collect();
        assert_eq!(to, vec![att, peter]);
        g.set_link_state(hari, mit, false).unwrap();
        let ctx = Ctx { graph: &g, now: 5, config: &cfg };
        let out = s.link_down(&ctx, mit);
        assert_eq!(out.len(), 2);
        for (m, n) in out.iter().zip([att, peter]) {
            assert_eq!(m.receiver, n);
            assert_eq!(m.kind_name(), "withdraw");
        }
    }
}
