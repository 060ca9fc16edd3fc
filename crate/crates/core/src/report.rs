//! Metrics collected from a finished simulation, rendered as canonical JSON or CSV.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bgp::Tick;
use crate::sim::{ProbeOutcome, ProbeRecord, Simulation};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub total: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub dropped_no_route: u64,
    pub dropped_loop: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub probes: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub dropped_loop: u64,
    /// Ticks from the first drop of each outage to the next delivered probe.
    pub disconnectivity_ticks: u64,
    pub outages: Vec<[Tick; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RibSummary {
    pub rib_in_total: u64,
    pub rib_in_max: u64,
    pub loc_rib_total: u64,
    pub loc_rib_max: u64,
    pub labeled_entries: u64,
    pub lame_entries: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionCounters {
    pub rci_discards: u64,
    pub failover_switches: u64,
    pub hidden_failures: u64,
    pub deflection_switches: u64,
    pub lame_deleted: u64,
    pub ingress_loops: u64,
    pub tunnels_established: u64,
    pub tunnels_refused: u64,
    pub tunnels_torn_down: u64,
    pub tunnels_live: u64,
    pub miro_ignored: u64,
    pub miro_request_errors: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub converged: bool,
    /// Tick of the last delivered control message.
    pub quiescence_time: Tick,
    pub messages_total: u64,
    pub messages: BTreeMap<String, u64>,
    pub messages_delivered: u64,
    pub messages_voided: u64,
    /// Control messages delivered per AS at or after the first link failure.
    pub received_after_failure: BTreeMap<String, u64>,
    pub probes: ProbeSummary,
    pub disconnectivity_ticks: u64,
    pub pairs: BTreeMap<String, PairStats>,
    pub rib: RibSummary,
    pub counters: ExtensionCounters,
}

fn pair_stats(records: &[&ProbeRecord]) -> PairStats {
    let mut s = PairStats::default();
    let mut open: Option<Tick> = None;
    for r in records {
        s.probes += 1;
        match &r.outcome {
            ProbeOutcome::Delivered { .. } => {
                s.delivered += 1;
                if let Some(start) = open.take() {
                    s.outages.push([start, r.time]);
                }
            }
            ProbeOutcome::Dropped { .. } => {
                s.dropped += 1;
                if r.outcome.is_loop() {
                    s.dropped_loop += 1;
                }
                open.get_or_insert(r.time);
            }
        }
    }
    // never recovered: count through the last probe
    if let (Some(start), Some(last)) = (open, records.last()) {
        s.outages.push([start, last.time + 1]);
    }
    s.disconnectivity_ticks = s.outages.iter().map(|[a, b]| b - a).sum();
    s
}

impl MetricsReport {
    pub fn from_sim(sim: &Simulation) -> Self {
        let stats = sim.stats();
        let mut r = MetricsReport {
            protocol: sim.config().protocol.name().to_string(),
            converged: sim.converged(),
            quiescence_time: stats.last_delivery,
            messages_total: stats.sent.values().sum(),
            messages: stats.sent.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            messages_delivered: stats.delivered,
            messages_voided: stats.voided,
            received_after_failure: stats.received_after_failure.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            ..Default::default()
        };

        let mut by_pair: BTreeMap<(u32, u32), Vec<&ProbeRecord>> = BTreeMap::new();
        for p in sim.probes() {
            by_pair.entry((p.src.0, p.dst.0)).or_default().push(p);
            r.probes.total += 1;
            match &p.outcome {
                ProbeOutcome::Delivered { .. } => r.probes.delivered += 1,
                o => {
                    r.probes.dropped += 1;
                    if o.is_loop() {
                        r.probes.dropped_loop += 1;
                    } else {
                        r.probes.dropped_no_route += 1;
                    }
                }
            }
        }
        for ((s, d), recs) in by_pair {
            let ps = pair_stats(&recs);
            r.disconnectivity_ticks += ps.disconnectivity_ticks;
            r.pairs.insert(format!("{s}->{d}"), ps);
        }

        let c = &mut r.counters;
        c.miro_request_errors = stats.miro_request_errors;
        for sp in sim.speakers() {
            let rib_in = sp.rib_in_size() as u64;
            let loc = sp.loc_rib_size() as u64;
            r.rib.rib_in_total += rib_in;
            r.rib.rib_in_max = r.rib.rib_in_max.max(rib_in);
            r.rib.loc_rib_total += loc;
            r.rib.loc_rib_max = r.rib.loc_rib_max.max(loc);
            r.rib.labeled_entries += sp.labeled_size() as u64;
            r.rib.lame_entries += sp.lame_count() as u64;
            let k = sp.counters();
            c.rci_discards += k.rci_discards;
            c.failover_switches += k.failover_switches;
            c.hidden_failures += k.hidden_failures;
            c.deflection_switches += k.deflection_switches;
            c.lame_deleted += k.lame_deleted;
            c.ingress_loops += k.ingress_loops;
            c.tunnels_established += k.tunnels_established;
            c.tunnels_refused += k.tunnels_refused;
            c.tunnels_torn_down += k.tunnels_torn_down;
            c.tunnels_live += sp.tunnels().len() as u64;
            c.miro_ignored += k.miro_ignored;
        }
        r
    }

    /// Pretty JSON with object keys in sorted order.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    /// `metric,value` rows; nested fields are joined with dots, in key order.
    pub fn to_csv(&self) -> String {
        let mut rows = Vec::new();
        flatten("", &serde_json::to_value(self).expect("report serializes"), &mut rows);
        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            out.push_str(&format!("{},{}\n", csv_field(&k), csv_field(&v)));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                flatten(&key(k), v, rows);
            }
        }
        Value::Array(a) if a.iter().any(|x| x.is_array() || x.is_object()) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&key(&i.to_string()), x, rows);
            }
        }
        Value::Array(a) => {
            let s: Vec<String> = a.iter().map(Value::to_string).collect();
            rows.push((prefix.to_string(), s.join(" ")));
        }
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

/// One protocol's headline numbers in a comparison.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub protocol: String,
    pub converged: bool,
    pub messages: u64,
    pub probes_dropped: u64,
    pub loops: u64,
    pub disconnectivity_ticks: u64,
    pub rib_in_total: u64,
    pub loc_rib_total: u64,
}

impl From<&MetricsReport> for ComparisonRow {
    fn from(r: &MetricsReport) -> Self {
        ComparisonRow {
            protocol: r.protocol.clone(),
            converged: r.converged,
            messages: r.messages_total,
            probes_dropped: r.probes.dropped,
            loops: r.probes.dropped_loop,
            disconnectivity_ticks: r.disconnectivity_ticks,
            rib_in_total: r.rib.rib_in_total,
            loc_rib_total: r.rib.loc_rib_total,
        }
    }
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(
        "protocol,converged,messages,probes_dropped,loops,disconnectivity_ticks,rib_in_total,loc_rib_total\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.protocol,
            r.converged,
            r.messages,
            r.probes_dropped,
            r.loops,
            r.disconnectivity_ticks,
            r.rib_in_total,
            r.loc_rib_total
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::DropReason;
    use crate::topology::AsId;

    fn rec(time: Tick, ok: bool) -> ProbeRecord {
        let outcome = if ok {
            ProbeOutcome::Delivered { path: vec![AsId(1), AsId(2)] }
        } else {
            ProbeOutcome::Dropped { at: AsId(1), reason: DropReason::NoRoute, path: vec![AsId(1)] }
        };
        ProbeRecord { time, src: AsId(1), dst: AsId(2), outcome }
    }

    #[test]
    fn outages_close_on_delivery() {
        let recs = [rec(1, true), rec(2, false), rec(3, false), rec(4, true), rec(5, false)];
        let refs: Vec<&ProbeRecord> = recs.iter().collect();
        let s = pair_stats(&refs);
        assert_eq!(s.outages, vec![[2, 4], [5, 6]]);
        assert_eq!(s.disconnectivity_ticks, 3);
        assert_eq!((s.probes, s.delivered, s.dropped), (5, 2, 3));
    }

    #[test]
    fn csv_is_flat_and_ordered() {
        let mut r = MetricsReport { protocol: "bgp".into(), ..Default::default() };
        r.messages.insert("withdraw".into(), 2);
        r.messages.insert("announce".into(), 5);
        let csv = r.to_csv();
        let a = csv.find("messages.announce,5").unwrap();
        let w = csv.find("messages.withdraw,2").unwrap();
        assert!(a < w);
        assert!(csv.starts_with("metric,value\nconverged,false\n"));
        assert!(csv.contains("\nprotocol,bgp\n"));
        assert_eq!(csv_field("a,b"), "\"a,b\"");
    }
}
