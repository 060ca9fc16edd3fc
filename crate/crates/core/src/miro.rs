//! MIRO: alternate routes negotiated on demand and used through tunnels.
//!
//! A requesting AS asks a responding AS for routes toward a destination that avoid some ASes
//! or links. The responder offers up to a few compliant routes from its RIB_IN; if it has
//! none it may ask one of its own neighbors (one level by default). Accepting an offer makes
//! the responder bind a tunnel id to the chosen route; the requester then sends the traffic
//! of that destination and class into the tunnel. Tunnels are torn down when the bound route
//! disappears at the responder or the requester's path to the responder changes.
//!
//! Requests to a non-adjacent responder travel as opaque control messages along the
//! requester's current path to it, so ASes without MIRO in between are unaffected.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::bgp::{Ctx, MsgKind, ProtocolError, RibKey, Route, Speaker, UpdateMsg};
use crate::policy::{export_allowed, Source};
use crate::topology::{path_links, AsGraph, AsId, LinkId, Relationship};
use crate::yamr::PathLabel;

/// ASes and links a requested route must not use.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvoidSet {
    #[serde(default)]
    pub ases: BTreeSet<AsId>,
    #[serde(default)]
    pub links: BTreeSet<LinkId>,
}

impl AvoidSet {
    pub fn ases<I: IntoIterator<Item = AsId>>(ases: I) -> Self {
        AvoidSet { ases: ases.into_iter().collect(), links: BTreeSet::new() }
    }

    pub fn links<I: IntoIterator<Item = LinkId>>(links: I) -> Self {
        AvoidSet { ases: BTreeSet::new(), links: links.into_iter().collect() }
    }

    pub fn admits(&self, path: &[AsId]) -> bool {
        !path.iter().any(|a| self.ases.contains(a)) && !path_links(path).any(|l| self.links.contains(&l))
    }
}

/// How a requester picks from an offer.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptPolicy {
    #[default]
    First,
    /// Decline every offer.
    None,
    Index(usize),
    /// First offered route through this AS.
    Via(AsId),
}

impl AcceptPolicy {
    pub fn choose<'a>(&self, routes: &'a [OfferedRoute]) -> Option<&'a OfferedRoute> {
        match self {
            AcceptPolicy::First => routes.first(),
            AcceptPolicy::None => None,
            AcceptPolicy::Index(i) => routes.get(*i),
            AcceptPolicy::Via(x) => routes.iter().find(|r| r.path.contains(x)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiroRequest {
    pub request_id: u64,
    pub requester: AsId,
    pub responder: AsId,
    pub dest: AsId,
    pub avoid: AvoidSet,
    pub recursion_budget: u8,
    /// Traffic class the resulting tunnel carries.
    pub class: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferedRoute {
    /// Starts with the responder.
    pub path: Vec<AsId>,
    pub price_tag: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiroOffer {
    pub request_id: u64,
    pub routes: Vec<OfferedRoute>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MiroMsg {
    Request(MiroRequest),
    Offer(MiroOffer),
    Accept {
        request_id: u64,
        path: Vec<AsId>,
    },
    Established {
        request_id: u64,
        tunnel_id: u32,
    },
    Refused {
        request_id: u64,
    },
    /// The tunnel is identified by its responder and the responder's id.
    Teardown {
        responder: AsId,
        tunnel_id: u32,
    },
}

impl MiroMsg {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MiroMsg::Request(_) => "miro_request",
            MiroMsg::Offer(_) => "miro_offer",
            MiroMsg::Accept { .. } => "miro_accept",
            MiroMsg::Established { .. } => "miro_established",
            MiroMsg::Refused { .. } => "miro_refused",
            MiroMsg::Teardown { .. } => "miro_teardown",
        }
    }
}

/// Responder-side tunnel state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TunnelEntry {
    pub tunnel_id: u32,
    pub requester: AsId,
    pub dest: AsId,
    /// Starts with the responder.
    pub bound_path: Vec<AsId>,
    /// Control path back to the requester, responder first.
    pub relay_back: Vec<AsId>,
    /// Set when the bound path continues inside a tunnel of a further responder.
    pub downstream: Option<Downstream>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Downstream {
    pub responder: AsId,
    pub tunnel_id: u32,
    /// From this AS to the downstream responder.
    pub relay: Vec<AsId>,
}

/// Requester-side tunnel state for one (dest, class).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Installed {
    pub responder: AsId,
    pub tunnel_id: u32,
    pub dest: AsId,
    /// From the requester to the responder.
    pub relay: Vec<AsId>,
    /// The path taken from the LOCAL_RIB; a change tears the tunnel down.
    pub relay_from_rib: bool,
    /// The accepted route, starting at the responder.
    pub path: Vec<AsId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Pending,
    Accepted,
    Declined,
    Established(u32),
    Refused,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OwnRequest {
    pub req: MiroRequest,
    pub accept: AcceptPolicy,
    pub relay: Vec<AsId>,
    pub relay_from_rib: bool,
    pub offer: Option<MiroOffer>,
    pub accepted: Option<Vec<AsId>>,
    pub status: RequestStatus,
    /// (requester, request id) this is a sub-request for.
    upstream: Option<(AsId, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Answered {
    dest: AsId,
    relay_back: Vec<AsId>,
    offered: Vec<Vec<AsId>>,
    sub: Option<u64>,
}

/// Scenario-level MIRO settings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MiroConfig {
    pub max_offer: usize,
    pub default_budget: u8,
    /// First tunnel id per AS; 1 where absent.
    pub tunnel_id_start: BTreeMap<AsId, u32>,
    /// ASes running MIRO; all when `None`.
    pub deployed: Option<BTreeSet<AsId>>,
    /// (responder, next hop of the offered route) -> tag.
    pub price_tags: BTreeMap<(AsId, AsId), String>,
    pub remote: bool,
}

impl Default for MiroConfig {
    fn default() -> Self {
        MiroConfig {
            max_offer: 2,
            default_budget: 1,
            tunnel_id_start: BTreeMap::new(),
            deployed: None,
            price_tags: BTreeMap::new(),
            remote: true,
        }
    }
}

impl MiroConfig {
    pub fn deployed_at(&self, a: AsId) -> bool {
        self.deployed.as_ref().is_none_or(|d| d.contains(&a))
    }
}

#[derive(Clone, Debug, Default)]
pub struct MiroState {
    next_request: u64,
    next_tunnel: Option<u32>,
    pub(crate) requests: BTreeMap<u64, OwnRequest>,
    answered: BTreeMap<(AsId, u64), Answered>,
    pub(crate) tunnels: BTreeMap<u32, TunnelEntry>,
    pub(crate) installed: BTreeMap<(AsId, String), Installed>,
}

/// A request to issue, as written in a scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiroIssue {
    pub requester: AsId,
    pub responder: AsId,
    pub dest: AsId,
    #[serde(default)]
    pub avoid: AvoidSet,
    #[serde(default)]
    pub budget: Option<u8>,
    #[serde(default = "default_class")]
    pub class: String,
    #[serde(default)]
    pub accept: AcceptPolicy,
}

pub fn default_class() -> String {
    "default".to_string()
}

fn rank_name(source: Source) -> &'static str {
    match source {
        Source::Local => "local",
        Source::Learned(Relationship::Customer) => "customer",
        Source::Learned(Relationship::Sibling) => "sibling",
        Source::Learned(Relationship::Peer) => "peer",
        Source::Learned(Relationship::Provider) => "provider",
    }
}

/// Shortest path over up links, lowest ids first.
fn bfs_path(g: &AsGraph, from: AsId, to: AsId) -> Option<Vec<AsId>> {
    let mut prev: BTreeMap<AsId, AsId> = BTreeMap::new();
    let mut q = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(x) = q.pop_front() {
        if x == to {
            let mut path = vec![to];
            let mut cur = to;
            while let Some(&p) = prev.get(&cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for (n, _) in g.neighbors(x) {
            if g.is_up(x, n) && seen.insert(n) {
                prev.insert(n, x);
                q.push_back(n);
            }
        }
    }
    None
}

fn miro_msg(relay: Vec<AsId>, body: MiroMsg) -> UpdateMsg {
    UpdateMsg {
        sender: relay[0],
        receiver: *relay.last().expect("relay is never empty"),
        kind: MsgKind::Miro { relay, body },
    }
}

fn reversed(p: &[AsId]) -> Vec<AsId> {
    p.iter().rev().copied().collect()
}

impl Speaker {
    pub fn miro_requests(&self) -> &BTreeMap<u64, OwnRequest> {
        &self.miro.requests
    }

    pub fn tunnels(&self) -> &BTreeMap<u32, TunnelEntry> {
        &self.miro.tunnels
    }

    /// The tunnel this AS uses for traffic to `dest` in `class`.
    pub fn tunnel_for(&self, dest: AsId, class: &str) -> Option<&Installed> {
        self.miro.installed.get(&(dest, class.to_string()))
    }

    pub fn installed_tunnels(&self) -> impl Iterator<Item = &Installed> {
        self.miro.installed.values()
    }

    /// Start a negotiation with `issue.responder`.
    pub fn issue_request(&mut self, ctx: &Ctx, issue: &MiroIssue) -> Result<Vec<UpdateMsg>, ProtocolError> {
        let me = self.id;
        let bad = |m: &str| Err(ProtocolError::InvalidRequest(m.to_string()));
        if !ctx.config.miro || !ctx.config.miro_params.deployed_at(me) {
            return bad("requester does not run MIRO");
        }
        if issue.requester != me {
            return bad("request issued at the wrong AS");
        }
        if issue.responder == me {
            return bad("requester and responder must differ");
        }
        if issue.avoid.ases.contains(&issue.dest) {
            return bad("destination is in the avoid set");
        }
        if self.best(issue.dest).is_none() {
            return Err(ProtocolError::UnknownDestination { me, dest: issue.dest });
        }
        let (relay, from_rib) = if ctx.graph.is_up(me, issue.responder) {
            (vec![me, issue.responder], false)
        } else if !ctx.config.miro_params.remote {
            return Err(ProtocolError::UnreachableResponder { me, responder: issue.responder });
        } else if let Some(r) = self.best(issue.responder) {
            (r.path.clone(), true)
        } else {
            let p = bfs_path(ctx.graph, me, issue.responder)
                .ok_or(ProtocolError::UnreachableResponder { me, responder: issue.responder })?;
            (p, false)
        };
        self.miro.next_request += 1;
        let req = MiroRequest {
            request_id: self.miro.next_request,
            requester: me,
            responder: issue.responder,
            dest: issue.dest,
            avoid: issue.avoid.clone(),
            recursion_budget: issue.budget.unwrap_or(ctx.config.miro_params.default_budget),
            class: issue.class.clone(),
        };
        self.miro.requests.insert(
            req.request_id,
            OwnRequest {
                req: req.clone(),
                accept: issue.accept.clone(),
                relay: relay.clone(),
                relay_from_rib: from_rib,
                offer: None,
                accepted: None,
                status: RequestStatus::Pending,
                upstream: None,
            },
        );
        Ok(vec![miro_msg(relay, MiroMsg::Request(req))])
    }

    pub(crate) fn handle_miro(
        &mut self,
        ctx: &Ctx,
        relay: &[AsId],
        body: &MiroMsg,
    ) -> Result<Vec<UpdateMsg>, ProtocolError> {
        if !ctx.config.miro || !ctx.config.miro_params.deployed_at(self.id) {
            self.counters.miro_ignored += 1;
            return Ok(Vec::new());
        }
        let back = reversed(relay);
        let from = relay[0];
        Ok(match body {
            MiroMsg::Request(req) => self.handle_request(ctx, req, back),
            MiroMsg::Offer(offer) => self.handle_offer(from, offer),
            MiroMsg::Accept { request_id, path } => self.accept_offer(ctx, from, *request_id, path),
            MiroMsg::Established { request_id, tunnel_id } => self.on_established(ctx, from, *request_id, *tunnel_id),
            MiroMsg::Refused { request_id } => self.on_refused(from, *request_id),
            MiroMsg::Teardown { responder, tunnel_id } => self.on_teardown(ctx, from, *responder, *tunnel_id),
        })
    }

    /// Candidate routes for a request, best first, truncated to the offer limit.
    pub fn offer_for(&self, ctx: &Ctx, req: &MiroRequest, toward: AsId) -> Vec<OfferedRoute> {
        let me = self.id;
        let Some(rel) = self.rel(toward) else { return Vec::new() };
        let origin;
        let mut cands: Vec<&Route> = if self.originated.contains(&req.dest) {
            origin = Route::origin(me);
            vec![&origin]
        } else {
            self.live_entries(req.dest).filter(|(k, _)| k.label == PathLabel::Default).map(|(_, r)| r).collect()
        };
        cands.retain(|r| req.avoid.admits(&r.path) && !r.contains(req.requester) && export_allowed(r.source, rel));
        cands.sort_by_key(|r| r.preference_key());
        cands.truncate(ctx.config.miro_params.max_offer);
        cands
            .into_iter()
            .map(|r| {
                let tag = ctx
                    .config
                    .miro_params
                    .price_tags
                    .get(&(me, r.next_hop()))
                    .cloned()
                    .unwrap_or_else(|| rank_name(r.source).to_string());
                OfferedRoute { path: r.path.clone(), price_tag: tag }
            })
            .collect()
    }

    /// Answer a request with an offer, or pass it on to a neighbor when nothing complies.
    pub fn handle_request(&mut self, ctx: &Ctx, req: &MiroRequest, back: Vec<AsId>) -> Vec<UpdateMsg> {
        let me = self.id;
        let routes = self.offer_for(ctx, req, back[1]);
        let mut sub = None;
        if routes.is_empty() && req.recursion_budget > 0 {
            let target = self.neighbors.keys().copied().find(|&n| {
                ctx.graph.is_up(me, n)
                    && n != req.requester
                    && !back.contains(&n)
                    && !req.avoid.ases.contains(&n)
                    && !req.avoid.links.contains(&LinkId::new(me, n))
            });
            if let Some(n) = target {
                self.miro.next_request += 1;
                let sub_req = MiroRequest {
                    request_id: self.miro.next_request,
                    requester: me,
                    responder: n,
                    recursion_budget: req.recursion_budget - 1,
                    ..req.clone()
                };
                self.miro.requests.insert(
                    sub_req.request_id,
                    OwnRequest {
                        req: sub_req.clone(),
                        accept: AcceptPolicy::None,
                        relay: vec![me, n],
                        relay_from_rib: false,
                        offer: None,
                        accepted: None,
                        status: RequestStatus::Pending,
                        upstream: Some((req.requester, req.request_id)),
                    },
                );
                sub = Some(sub_req);
            }
        }
        self.miro.answered.insert(
            (req.requester, req.request_id),
            Answered {
                dest: req.dest,
                relay_back: back.clone(),
                offered: routes.iter().map(|r| r.path.clone()).collect(),
                sub: sub.as_ref().map(|s| s.request_id),
            },
        );
        match sub {
            Some(s) => vec![miro_msg(vec![me, s.responder], MiroMsg::Request(s))],
            None => vec![miro_msg(back, MiroMsg::Offer(MiroOffer { request_id: req.request_id, routes }))],
        }
    }

    fn handle_offer(&mut self, from: AsId, offer: &MiroOffer) -> Vec<UpdateMsg> {
        let me = self.id;
        let Some(own) = self.miro.requests.get_mut(&offer.request_id) else { return Vec::new() };
        if own.req.responder != from || own.status != RequestStatus::Pending {
            return Vec::new();
        }
        own.offer = Some(offer.clone());
        if let Some(up) = own.upstream {
            // relay the extended routes to whoever asked us
            let avoid = own.req.avoid.clone();
            let routes: Vec<OfferedRoute> = offer
                .routes
                .iter()
                .map(|r| OfferedRoute {
                    path: std::iter::once(me).chain(r.path.iter().copied()).collect(),
                    price_tag: r.price_tag.clone(),
                })
                .filter(|r| !r.path.contains(&up.0) && avoid.admits(&r.path))
                .collect();
            let Some(ans) = self.miro.answered.get_mut(&up) else { return Vec::new() };
            ans.offered = routes.iter().map(|r| r.path.clone()).collect();
            return vec![miro_msg(ans.relay_back.clone(), MiroMsg::Offer(MiroOffer { request_id: up.1, routes }))];
        }
        match own.accept.choose(&offer.routes).map(|r| r.path.clone()) {
            Some(path) => {
                own.status = RequestStatus::Accepted;
                own.accepted = Some(path.clone());
                vec![miro_msg(own.relay.clone(), MiroMsg::Accept { request_id: offer.request_id, path })]
            }
            None => {
                own.status = RequestStatus::Declined;
                Vec::new()
            }
        }
    }

    fn allocate_tunnel_id(&mut self, ctx: &Ctx) -> u32 {
        let start = ctx.config.miro_params.tunnel_id_start.get(&self.id).copied().unwrap_or(1);
        let id = self.miro.next_tunnel.unwrap_or(start);
        self.miro.next_tunnel = Some(id + 1);
        id
    }

    fn bound_valid(&self, dest: AsId, path: &[AsId]) -> bool {
        if path.len() == 1 {
            return self.originated.contains(&dest);
        }
        self.rib_in
            .get(&RibKey { dest, neighbor: path[1], label: PathLabel::Default })
            .is_some_and(|e| e.lame.is_none() && e.route.path == path)
    }

    /// The requester accepted `path`: bind a tunnel to it, or refuse if it went stale.
    pub fn accept_offer(&mut self, ctx: &Ctx, requester: AsId, request_id: u64, path: &[AsId]) -> Vec<UpdateMsg> {
        let me = self.id;
        let Some(ans) = self.miro.answered.get(&(requester, request_id)).cloned() else {
            self.counters.miro_ignored += 1;
            return Vec::new();
        };
        let refuse = |s: &mut Speaker| {
            s.counters.tunnels_refused += 1;
            vec![miro_msg(ans.relay_back.clone(), MiroMsg::Refused { request_id })]
        };
        if !ans.offered.iter().any(|p| p == path) || path.first() != Some(&me) {
            return refuse(self);
        }
        if let Some(sub_id) = ans.sub {
            let Some(own) = self.miro.requests.get_mut(&sub_id) else { return refuse(self) };
            own.accepted = Some(path.to_vec());
            own.status = RequestStatus::Accepted;
            let body = MiroMsg::Accept { request_id: sub_id, path: path[1..].to_vec() };
            return vec![miro_msg(own.relay.clone(), body)];
        }
        if !self.bound_valid(ans.dest, path) {
            return refuse(self);
        }
        let tunnel_id = self.allocate_tunnel_id(ctx);
        self.miro.tunnels.insert(
            tunnel_id,
            TunnelEntry {
                tunnel_id,
                requester,
                dest: ans.dest,
                bound_path: path.to_vec(),
                relay_back: ans.relay_back.clone(),
                downstream: None,
            },
        );
        self.counters.tunnels_established += 1;
        vec![miro_msg(ans.relay_back, MiroMsg::Established { request_id, tunnel_id })]
    }

    fn on_established(&mut self, ctx: &Ctx, from: AsId, request_id: u64, tunnel_id: u32) -> Vec<UpdateMsg> {
        let Some(own) = self.miro.requests.get_mut(&request_id) else { return Vec::new() };
        if own.req.responder != from || own.status != RequestStatus::Accepted {
            return Vec::new();
        }
        own.status = RequestStatus::Established(tunnel_id);
        let own = own.clone();
        let Some(up) = own.upstream else {
            self.miro.installed.insert(
                (own.req.dest, own.req.class.clone()),
                Installed {
                    responder: from,
                    tunnel_id,
                    dest: own.req.dest,
                    relay: own.relay.clone(),
                    relay_from_rib: own.relay_from_rib,
                    path: own.accepted.clone().unwrap_or_default(),
                },
            );
            return Vec::new();
        };
        // we answered on behalf of `from`: our tunnel continues inside theirs
        let Some(ans) = self.miro.answered.get(&up).cloned() else { return Vec::new() };
        let my_id = self.allocate_tunnel_id(ctx);
        self.miro.tunnels.insert(
            my_id,
            TunnelEntry {
                tunnel_id: my_id,
                requester: up.0,
                dest: own.req.dest,
                bound_path: own.accepted.clone().unwrap_or_default(),
                relay_back: ans.relay_back.clone(),
                downstream: Some(Downstream { responder: from, tunnel_id, relay: own.relay.clone() }),
            },
        );
        self.counters.tunnels_established += 1;
        vec![miro_msg(ans.relay_back, MiroMsg::Established { request_id: up.1, tunnel_id: my_id })]
    }

    fn on_refused(&mut self, from: AsId, request_id: u64) -> Vec<UpdateMsg> {
        let Some(own) = self.miro.requests.get_mut(&request_id) else { return Vec::new() };
        if own.req.responder != from {
            return Vec::new();
        }
        own.status = RequestStatus::Refused;
        let Some(up) = own.upstream else { return Vec::new() };
        match self.miro.answered.get(&up) {
            Some(ans) => vec![miro_msg(ans.relay_back.clone(), MiroMsg::Refused { request_id: up.1 })],
            None => Vec::new(),
        }
    }

    /// Remove a responder-side tunnel, telling the requester (`notify_up`) and releasing
    /// any tunnel it was nested in.
    fn drop_tunnel(&mut self, ctx: &Ctx, id: u32, notify_up: bool) -> Vec<UpdateMsg> {
        let me = self.id;
        let Some(t) = self.miro.tunnels.remove(&id) else { return Vec::new() };
        self.counters.tunnels_torn_down += 1;
        let mut out = Vec::new();
        if notify_up && ctx.graph.is_up(me, t.relay_back[1]) {
            out.push(miro_msg(t.relay_back.clone(), MiroMsg::Teardown { responder: me, tunnel_id: id }));
        }
        if let Some(d) = t.downstream {
            if ctx.graph.is_up(me, d.relay[1]) {
                out.push(miro_msg(d.relay, MiroMsg::Teardown { responder: d.responder, tunnel_id: d.tunnel_id }));
            }
        }
        out
    }

    fn on_teardown(&mut self, ctx: &Ctx, from: AsId, responder: AsId, tunnel_id: u32) -> Vec<UpdateMsg> {
        let me = self.id;
        if responder == me {
            // the requester gave the tunnel up
            if self.miro.tunnels.get(&tunnel_id).is_some_and(|t| t.requester == from) {
                return self.drop_tunnel(ctx, tunnel_id, false);
            }
            self.counters.miro_ignored += 1;
            return Vec::new();
        }
        let before = self.miro.installed.len();
        self.miro.installed.retain(|_, i| !(i.responder == responder && i.tunnel_id == tunnel_id));
        let nested: Vec<u32> = self
            .miro
            .tunnels
            .values()
            .filter(|t| t.downstream.as_ref().is_some_and(|d| d.responder == responder && d.tunnel_id == tunnel_id))
            .map(|t| t.tunnel_id)
            .collect();
        if before == self.miro.installed.len() && nested.is_empty() {
            self.counters.miro_ignored += 1;
        }
        let mut out = Vec::new();
        for id in nested {
            if let Some(t) = self.miro.tunnels.get_mut(&id) {
                t.downstream = None;
            }
            out.extend(self.drop_tunnel(ctx, id, true));
        }
        out
    }

    /// Tear down tunnels for `dest` whose bound route is gone, and tunnels whose relay path
    /// from the LOCAL_RIB changed.
    pub fn teardown_on_change(&mut self, ctx: &Ctx, dest: AsId) -> Vec<UpdateMsg> {
        let me = self.id;
        let broken: Vec<u32> = self
            .miro
            .tunnels
            .values()
            .filter(|t| t.dest == dest && t.downstream.is_none() && !self.bound_valid(dest, &t.bound_path))
            .map(|t| t.tunnel_id)
            .collect();
        let mut out = Vec::new();
        for id in broken {
            out.extend(self.drop_tunnel(ctx, id, true));
        }
        let current = self.best(dest).map(|r| r.path.clone());
        let stale: Vec<(AsId, String)> = self
            .miro
            .installed
            .iter()
            .filter(|(_, i)| i.relay_from_rib && i.responder == dest && current.as_ref() != Some(&i.relay))
            .map(|(k, _)| k.clone())
            .collect();
        for k in stale {
            let Some(i) = self.miro.installed.remove(&k) else { continue };
            let relay = current.clone().unwrap_or(i.relay);
            if relay.len() > 1 && ctx.graph.is_up(me, relay[1]) {
                out.push(miro_msg(relay, MiroMsg::Teardown { responder: i.responder, tunnel_id: i.tunnel_id }));
            }
        }
        out
    }

    /// Drop tunnel state whose control path starts over the failed link to `neighbor`.
    pub(crate) fn miro_link_down(&mut self, ctx: &Ctx, neighbor: AsId) -> Vec<UpdateMsg> {
        if !ctx.config.miro {
            return Vec::new();
        }
        self.miro.installed.retain(|_, i| i.relay[1] != neighbor);
        let mut out = Vec::new();
        let upstream: Vec<u32> =
            self.miro.tunnels.values().filter(|t| t.relay_back[1] == neighbor).map(|t| t.tunnel_id).collect();
        for id in upstream {
            out.extend(self.drop_tunnel(ctx, id, false));
        }
        let downstream: Vec<u32> = self
            .miro
            .tunnels
            .values()
            .filter(|t| t.downstream.as_ref().is_some_and(|d| d.relay[1] == neighbor))
            .map(|t| t.tunnel_id)
            .collect();
        for id in downstream {
            if let Some(t) = self.miro.tunnels.get_mut(&id) {
                t.downstream = None;
            }
            out.extend(self.drop_tunnel(ctx, id, true));
        }
        out
    }
}
