//! Discrete-event scheduler, message delivery and the probe data plane.
//!
//! Events are ordered by (tick, class, insertion order). Within a tick, link state changes
//! happen first, then message deliveries and scripted actions, then probes, so a probe sees
//! the state at the end of its tick. Every control message takes the configured delay per
//! link it crosses; a message whose link goes down before delivery is voided and counted.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bgp::{Ctx, Header, Hop, MsgKind, ProtocolError, Speaker, Tick, UpdateMsg};
use crate::miro::MiroIssue;
use crate::topology::{path_links, AsGraph, AsId, LinkId, TopologyError};
use crate::yamr::PathLabel;
use crate::ProtocolConfig;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub default_delay: Tick,
    /// Directed per-link overrides: (from, to) -> delay.
    pub delays: BTreeMap<(AsId, AsId), Tick>,
    /// Control messages still scheduled after this tick mean non-convergence.
    pub quiesce_limit: Tick,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { default_delay: 1, delays: BTreeMap::new(), quiesce_limit: 10_000, trace: false }
    }
}

impl SimConfig {
    pub fn delay(&self, from: AsId, to: AsId) -> Tick {
        self.delays.get(&(from, to)).copied().unwrap_or(self.default_delay)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("AS {0} is not in the topology")]
    UnknownAs(AsId),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("link delays must be at least one tick")]
    ZeroDelay,
}

/// A scripted action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Originate(AsId),
    LinkDown(AsId, AsId),
    LinkUp(AsId, AsId),
    Probe { src: AsId, dst: AsId, label: PathLabel, class: String },
    MiroRequest(MiroIssue),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Event {
    Scripted(Action),
    Deliver { msg: UpdateMsg, links: Vec<(LinkId, u64)> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoRoute,
    Loop,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ProbeOutcome {
    Delivered { path: Vec<AsId> },
    Dropped { at: AsId, reason: DropReason, path: Vec<AsId> },
}

impl ProbeOutcome {
    pub fn delivered(&self) -> bool {
        matches!(self, ProbeOutcome::Delivered { .. })
    }

    pub fn path(&self) -> &[AsId] {
        match self {
            ProbeOutcome::Delivered { path } | ProbeOutcome::Dropped { path, .. } => path,
        }
    }

    pub fn is_loop(&self) -> bool {
        matches!(self, ProbeOutcome::Dropped { reason: DropReason::Loop, .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub time: Tick,
    pub src: AsId,
    pub dst: AsId,
    pub outcome: ProbeOutcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub time: Tick,
    /// `send`, `deliver` or `void`.
    pub event: &'static str,
    pub kind: &'static str,
    pub from: AsId,
    pub to: AsId,
    pub detail: String,
}

fn describe(msg: &UpdateMsg) -> String {
    let join = |p: &[AsId]| p.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
    match &msg.kind {
        MsgKind::Announce(r) => format!("dest={} label={} path=[{}]", r.dest, r.attrs.label, join(&r.path)),
        MsgKind::Withdraw { dest, label, .. } => format!("dest={dest} label={label}"),
        MsgKind::Miro { relay, .. } => format!("relay=[{}]", join(relay)),
    }
}

/// Message and failure bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub sent: BTreeMap<&'static str, u64>,
    pub delivered: u64,
    pub voided: u64,
    pub first_failure: Option<Tick>,
    /// Messages delivered to each AS at or after the first link failure.
    pub received_after_failure: BTreeMap<AsId, u64>,
    pub last_delivery: Tick,
    pub miro_request_errors: u64,
}

/// One simulation instance. Owns the topology and every AS.
pub struct Simulation {
    graph: AsGraph,
    config: ProtocolConfig,
    sim: SimConfig,
    speakers: BTreeMap<AsId, Speaker>,
    queue: BTreeMap<(Tick, u8, u64), Event>,
    seq: u64,
    now: Tick,
    epochs: BTreeMap<LinkId, u64>,
    stats: Stats,
    probes: Vec<ProbeRecord>,
    trace: Vec<TraceEntry>,
    converged: bool,
}

impl Simulation {
    pub fn new(graph: AsGraph, config: ProtocolConfig, sim: SimConfig) -> Self {
        let speakers = graph.nodes().map(|a| (a, Speaker::new(a, &graph))).collect();
        Simulation {
            graph,
            config,
            sim,
            speakers,
            queue: BTreeMap::new(),
            seq: 0,
            now: 0,
            epochs: BTreeMap::new(),
            stats: Stats::default(),
            probes: Vec::new(),
            trace: Vec::new(),
            converged: true,
        }
    }

    pub fn graph(&self) -> &AsGraph {
        &self.graph
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn speaker(&self, id: AsId) -> Option<&Speaker> {
        self.speakers.get(&id)
    }

    pub fn speakers(&self) -> impl Iterator<Item = &Speaker> {
        self.speakers.values()
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn probes(&self) -> &[ProbeRecord] {
        &self.probes
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    fn push(&mut self, at: Tick, class: u8, ev: Event) {
        self.seq += 1;
        self.queue.insert((at, class, self.seq), ev);
    }

    fn check_as(&self, a: AsId) -> Result<(), SimError> {
        if self.graph.contains(a) {
            Ok(())
        } else {
            Err(SimError::UnknownAs(a))
        }
    }

    /// Schedule a scripted action.
    pub fn schedule(&mut self, at: Tick, action: Action) -> Result<(), SimError> {
        let class = match &action {
            Action::Originate(a) => {
                self.check_as(*a)?;
                1
            }
            Action::LinkDown(a, b) | Action::LinkUp(a, b) => {
                if self.graph.link(*a, *b).is_none() {
                    return Err(TopologyError::NoSuchLink(*a, *b).into());
                }
                0
            }
            Action::Probe { src, dst, .. } => {
                self.check_as(*src)?;
                self.check_as(*dst)?;
                2
            }
            Action::MiroRequest(i) => {
                for a in [i.requester, i.responder, i.dest] {
                    self.check_as(a)?;
                }
                1
            }
        };
        if self.sim.default_delay == 0 || self.sim.delays.values().any(|d| *d == 0) {
            return Err(SimError::ZeroDelay);
        }
        self.push(at, class, Event::Scripted(action));
        Ok(())
    }

    pub fn originate(&mut self, at: Tick, dest: AsId) {
        self.schedule(at, Action::Originate(dest)).expect("originating AS must exist");
    }

    /// Fail the link between `a` and `b` at tick `at`.
    pub fn inject_failure(&mut self, at: Tick, a: AsId, b: AsId) -> Result<(), SimError> {
        self.schedule(at, Action::LinkDown(a, b))
    }

    pub fn restore_link(&mut self, at: Tick, a: AsId, b: AsId) -> Result<(), SimError> {
        self.schedule(at, Action::LinkUp(a, b))
    }

    /// Probe `src -> dst` at every tick in `from..=to`.
    pub fn probe_every_tick(&mut self, src: AsId, dst: AsId, from: Tick, to: Tick) -> Result<(), SimError> {
        for t in from..=to {
            self.schedule(
                t,
                Action::Probe { src, dst, label: PathLabel::Default, class: crate::miro::default_class() },
            )?;
        }
        Ok(())
    }

    /// Process events until the queue drains or the quiescence limit is passed.
    pub fn run(&mut self) -> Result<(), SimError> {
        while let Some((&(t, _, _), ev)) = self.queue.first_key_value() {
            if t > self.sim.quiesce_limit && matches!(ev, Event::Deliver { .. }) {
                self.converged = false;
                break;
            }
            let ((t, _, _), ev) = self.queue.pop_first().expect("peeked");
            self.now = t;
            self.process(ev)?;
        }
        Ok(())
    }

    /// Process every event scheduled at or before `t`.
    pub fn run_until(&mut self, t: Tick) -> Result<(), SimError> {
        while let Some((&(at, _, _), _)) = self.queue.first_key_value() {
            if at > t {
                break;
            }
            let (_, ev) = self.queue.pop_first().expect("peeked");
            self.now = at;
            self.process(ev)?;
        }
        self.now = self.now.max(t);
        Ok(())
    }

    /// True if no control message is in flight.
    pub fn quiescent(&self) -> bool {
        !self.queue.values().any(|e| matches!(e, Event::Deliver { .. }))
    }

    fn process(&mut self, ev: Event) -> Result<(), SimError> {
        match ev {
            Event::Scripted(Action::Originate(a)) => {
                let ctx = Ctx { graph: &self.graph, now: self.now, config: &self.config };
                let out = self.speakers.get_mut(&a).expect("checked").originate(&ctx);
                self.send(out);
            }
            Event::Scripted(Action::LinkDown(a, b)) => {
                if !self.graph.is_up(a, b) {
                    return Ok(());
                }
                self.graph.set_link_state(a, b, false)?;
                *self.epochs.entry(LinkId::new(a, b)).or_default() += 1;
                self.stats.first_failure.get_or_insert(self.now);
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                for (x, y) in [(lo, hi), (hi, lo)] {
                    let ctx = Ctx { graph: &self.graph, now: self.now, config: &self.config };
                    let out = self.speakers.get_mut(&x).expect("endpoint").link_down(&ctx, y);
                    self.send(out);
                }
            }
            Event::Scripted(Action::LinkUp(a, b)) => {
                if self.graph.is_up(a, b) {
                    return Ok(());
                }
                self.graph.set_link_state(a, b, true)?;
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                for (x, y) in [(lo, hi), (hi, lo)] {
                    let ctx = Ctx { graph: &self.graph, now: self.now, config: &self.config };
                    let out = self.speakers.get_mut(&x).expect("endpoint").link_up(&ctx, y);
                    self.send(out);
                }
            }
            Event::Scripted(Action::Probe { src, dst, label, class }) => {
                let outcome = self.probe(src, dst, label, &class);
                self.probes.push(ProbeRecord { time: self.now, src, dst, outcome });
            }
            Event::Scripted(Action::MiroRequest(issue)) => {
                let ctx = Ctx { graph: &self.graph, now: self.now, config: &self.config };
                match self.speakers.get_mut(&issue.requester).expect("checked").issue_request(&ctx, &issue) {
                    Ok(out) => self.send(out),
                    Err(_) => self.stats.miro_request_errors += 1,
                }
            }
            Event::Deliver { msg, links } => {
                let intact = links.iter().all(|(l, e)| {
                    self.graph.is_up(l.low(), l.high()) && self.epochs.get(l).copied().unwrap_or(0) == *e
                });
                if !intact {
                    self.stats.voided += 1;
                    self.record("void", &msg);
                    return Ok(());
                }
                self.stats.delivered += 1;
                self.stats.last_delivery = self.now;
                if self.stats.first_failure.is_some() {
                    *self.stats.received_after_failure.entry(msg.receiver).or_default() += 1;
                }
                self.record("deliver", &msg);
                let ctx = Ctx { graph: &self.graph, now: self.now, config: &self.config };
                let out = self.speakers.get_mut(&msg.receiver).expect("receiver exists").handle(&ctx, &msg)?;
                self.send(out);
            }
        }
        Ok(())
    }

    fn record(&mut self, event: &'static str, msg: &UpdateMsg) {
        if self.sim.trace {
            self.trace.push(TraceEntry {
                time: self.now,
                event,
                kind: msg.kind_name(),
                from: msg.sender,
                to: msg.receiver,
                detail: describe(msg),
            });
        }
    }

    fn send(&mut self, msgs: Vec<UpdateMsg>) {
        for msg in msgs {
            *self.stats.sent.entry(msg.kind_name()).or_default() += 1;
            self.record("send", &msg);
            let hops = msg.hops();
            let links: Vec<(LinkId, u64)> =
                path_links(&hops).map(|l| (l, self.epochs.get(&l).copied().unwrap_or(0))).collect();
            if links.iter().any(|(l, _)| !self.graph.is_up(l.low(), l.high())) {
                self.stats.voided += 1;
                self.record("void", &msg);
                continue;
            }
            let delay: Tick = hops.windows(2).map(|w| self.sim.delay(w[0], w[1])).sum();
            self.push(self.now + delay, 1, Event::Deliver { msg, links });
        }
    }

    /// Walk a packet from `src` toward `dst` over the current forwarding state.
    pub fn probe(&self, src: AsId, dst: AsId, label: PathLabel, class: &str) -> ProbeOutcome {
        let ctx = Ctx { graph: &self.graph, now: self.now, config: &self.config };
        let cap = 2 * self.graph.len();
        let mut path = vec![src];
        let up = |a: AsId, b: AsId| self.graph.is_up(a, b);
        let drop = |path: Vec<AsId>, reason| ProbeOutcome::Dropped { at: *path.last().unwrap(), reason, path };

        // encapsulated part: requester -> responder (-> nested responder) -> bound path
        let mut cur = src;
        let mut prev = None;
        if self.config.miro {
            if let Some(t) = self.speakers[&src].tunnel_for(dst, class) {
                let mut relay = t.relay.clone();
                let mut responder = (t.responder, t.tunnel_id);
                loop {
                    for w in relay.windows(2) {
                        if !up(w[0], w[1]) || path.len() > cap {
                            return drop(path, DropReason::NoRoute);
                        }
                        path.push(w[1]);
                    }
                    let Some(entry) = self.speakers[&responder.0].tunnels().get(&responder.1) else {
                        return drop(path, DropReason::NoRoute);
                    };
                    match &entry.downstream {
                        Some(d) => {
                            relay = d.relay.clone();
                            responder = (d.responder, d.tunnel_id);
                        }
                        None => {
                            for w in entry.bound_path.windows(2) {
                                if !up(w[0], w[1]) || path.len() > cap {
                                    return drop(path, DropReason::NoRoute);
                                }
                                path.push(w[1]);
                            }
                            return ProbeOutcome::Delivered { path };
                        }
                    }
                }
            }
        }

        let mut header = Header { label, failover: false };
        let mut seen = BTreeSet::new();
        loop {
            if path.len() > cap + 1 || !seen.insert((cur, header, prev)) {
                return drop(path, DropReason::Loop);
            }
            match self.speakers[&cur].next_hop(&ctx, dst, header, prev) {
                Hop::Deliver => return ProbeOutcome::Delivered { path },
                Hop::Drop => return drop(path, DropReason::NoRoute),
                Hop::Forward(n, h) => {
                    path.push(n);
                    prev = Some(cur);
                    cur = n;
                    header = h;
                }
            }
        }
    }
}

/// Build and run a simulation for a script of (tick, action) pairs.
pub fn run(
    graph: AsGraph,
    config: ProtocolConfig,
    script: &[(Tick, Action)],
    sim: SimConfig,
) -> Result<Simulation, SimError> {
    let mut s = Simulation::new(graph, config, sim);
    for (t, a) in script {
        s.schedule(*t, a.clone())?;
    }
    s.run()?;
    Ok(s)
}
