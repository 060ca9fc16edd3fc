//! Deterministic AS-level interdomain routing simulator.
//!
//! Runs BGP under Gao-Rexford policies together with three multipath variants (MIRO,
//! R-BGP and YAMR, the latter optionally with failure hiding) over the same topology and
//! failure script, and reports messages, dropped probes and table sizes for each.
//!
//! ```
//! use pathsim::fixtures::fixture;
//! use pathsim::sim::{SimConfig, Simulation};
//! use pathsim::{Protocol, ProtocolConfig};
//!
//! let f = fixture("fig3").unwrap();
//! let mut sim = Simulation::new(f.graph(), ProtocolConfig::for_protocol(Protocol::Bgp), SimConfig::default());
//! sim.originate(0, f.id("MIT"));
//! sim.run().unwrap();
//! let att = sim.speaker(f.id("ATT")).unwrap();
//! assert_eq!(att.best(f.id("MIT")).unwrap().path.len(), 3);
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod bgp;
pub mod fixtures;
pub mod gen;
pub mod miro;
pub mod policy;
pub mod rbgp;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod topology;
pub mod yamr;

pub use bgp::{Route, Speaker, Tick, UpdateMsg};
pub use topology::{AsGraph, AsId, LinkId, Relationship};
pub use yamr::PathLabel;

/// The routing protocol variants the simulator runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Bgp,
    Rbgp,
    Miro,
    Yamr,
    YamrHiding,
}

impl Protocol {
    pub const ALL: [Protocol; 5] =
        [Protocol::Bgp, Protocol::Rbgp, Protocol::Miro, Protocol::Yamr, Protocol::YamrHiding];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Bgp => "bgp",
            Protocol::Rbgp => "rbgp",
            Protocol::Miro => "miro",
            Protocol::Yamr => "yamr",
            Protocol::YamrHiding => "yamr_hiding",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown protocol {0:?} (expected bgp, rbgp, miro, yamr or yamr_hiding)")]
pub struct UnknownProtocol(pub String);

impl FromStr for Protocol {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| UnknownProtocol(s.to_string()))
    }
}

/// Feature switches shared by every AS of one simulation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    /// Per-link alternate paths and label forwarding.
    pub labels: bool,
    /// Keep withdrawn routes as lame paths and deflect around the failure.
    pub hiding: bool,
    /// Failover path advertisement and forwarding.
    pub failover: bool,
    /// Root cause information on failure-triggered messages.
    pub rci: bool,
    pub miro: bool,
    pub miro_params: miro::MiroConfig,
}

impl ProtocolConfig {
    pub fn for_protocol(protocol: Protocol) -> Self {
        let mut c = ProtocolConfig {
            protocol,
            labels: false,
            hiding: false,
            failover: false,
            rci: false,
            miro: false,
            miro_params: miro::MiroConfig::default(),
        };
        match protocol {
            Protocol::Bgp => {}
            Protocol::Rbgp => {
                c.failover = true;
                c.rci = true;
            }
            Protocol::Miro => c.miro = true,
            Protocol::Yamr => c.labels = true,
            Protocol::YamrHiding => {
                c.labels = true;
                c.hiding = true;
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_names_round_trip() {
        for p in Protocol::ALL {
            assert_eq!(p.name().parse::<Protocol>(), Ok(p));
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
        assert!("ospf".parse::<Protocol>().is_err());
    }

    #[test]
    fn presets() {
        let r = ProtocolConfig::for_protocol(Protocol::Rbgp);
        assert!(r.failover && r.rci && !r.labels && !r.miro);
        let y = ProtocolConfig::for_protocol(Protocol::YamrHiding);
        assert!(y.labels && y.hiding && !y.failover);
        let b = ProtocolConfig::for_protocol(Protocol::Bgp);
        assert!(!(b.labels || b.hiding || b.failover || b.rci || b.miro));
    }
}
