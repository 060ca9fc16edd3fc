mod common;

use std::collections::BTreeSet;

use common::*;
use pathsim::miro::{AcceptPolicy, AvoidSet, MiroIssue};
use pathsim::policy::valley_free;
use pathsim::report::MetricsReport;
use pathsim::sim::{Action, SimConfig, Simulation};
use pathsim::{AsId, Protocol, ProtocolConfig};
use proptest::prelude::*;

fn protocol() -> impl Strategy<Value = Protocol> {
    prop::sample::select(Protocol::ALL.to_vec())
}

fn case() -> impl Strategy<Value = Case> {
    (any::<u64>(), 1u64..=4).prop_filter_map("no removable link", |(seed, delay)| random_case(10, seed, delay))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn same_input_same_report(c in case(), p in protocol()) {
        let a = MetricsReport::from_sim(&run_protocol(&c, p)).to_json();
        let b = MetricsReport::from_sim(&run_protocol(&c, p)).to_json();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn runs_quiesce_and_account_for_every_message(c in case(), p in protocol()) {
        let s = run_protocol(&c, p);
        prop_assert!(s.converged());
        prop_assert!(s.quiescent());
        let st = s.stats();
        prop_assert_eq!(st.sent.values().sum::<u64>(), st.delivered + st.voided);
    }

    #[test]
    fn probes_terminate(c in case(), p in protocol()) {
        let s = run_protocol(&c, p);
        let bound = 2 * c.graph.len() + 1;
        for r in s.probes() {
            prop_assert!(r.outcome.path().len() <= bound, "{:?}", r);
            prop_assert_eq!(r.outcome.path()[0], r.src);
            if r.outcome.delivered() {
                prop_assert_eq!(*r.outcome.path().last().unwrap(), r.dst);
            }
        }
    }

    #[test]
    fn bgp_settles_on_the_stable_solution_after_failure(c in case()) {
        let s = run_protocol(&c, Protocol::Bgp);
        let mut failed = c.graph.clone();
        failed.set_link_state(c.fail.0, c.fail.1, false).unwrap();
        for (a, want) in oracle(&failed, c.dest) {
            let got = s.speaker(a).unwrap().best(c.dest).map(|r| r.path.clone());
            prop_assert_eq!(got, want, "AS {}", a);
        }
    }

    #[test]
    fn selected_paths_are_simple_and_valley_free(c in case(), p in protocol()) {
        let s = run_protocol(&c, p);
        for sp in s.speakers() {
            for table in sp.loc_rib().values() {
                for sel in table.values() {
                    let path = &sel.route.path;
                    let distinct: BTreeSet<_> = path.iter().collect();
                    prop_assert_eq!(distinct.len(), path.len());
                    prop_assert_eq!(path[0], sp.id());
                    prop_assert!(valley_free(path, &c.graph).unwrap(), "{:?}", path);
                }
            }
        }
    }

    #[test]
    fn yamr_default_label_matches_bgp(c in case()) {
        let b = run_protocol(&c, Protocol::Bgp);
        let y = run_protocol(&c, Protocol::Yamr);
        for sp in b.speakers() {
            let want = sp.best(c.dest).map(|r| r.path.clone());
            let got = y.speaker(sp.id()).unwrap().best(c.dest).map(|r| r.path.clone());
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn offers_respect_the_avoid_set(seed in any::<u64>(), picks in prop::collection::vec(any::<prop::sample::Index>(), 4)) {
        let Some(c) = random_case(10, seed, 1) else { return Ok(()) };
        let nodes: Vec<AsId> = c.graph.nodes().collect();
        let requester = *picks[0].get(&nodes);
        let responder = *picks[1].get(&nodes);
        let avoided = *picks[2].get(&nodes);
        prop_assume!(requester != c.dest && responder != c.dest && requester != responder);
        prop_assume!(![requester, responder, c.dest].contains(&avoided));
        let avoid = AvoidSet::ases([avoided]);
        let issue = MiroIssue {
            requester,
            responder,
            dest: c.dest,
            avoid: avoid.clone(),
            budget: Some(1),
            class: "default".into(),
            accept: AcceptPolicy::First,
        };
        let mut s = Simulation::new(c.graph.clone(), ProtocolConfig::for_protocol(Protocol::Miro), SimConfig::default());
        s.originate(0, c.dest);
        s.schedule(30, Action::MiroRequest(issue)).unwrap();
        s.run().unwrap();
        prop_assert!(s.converged());
        for req in s.speaker(requester).unwrap().miro_requests().values() {
            for r in req.offer.iter().flat_map(|o| &o.routes) {
                prop_assert!(avoid.admits(&r.path), "{:?}", r.path);
                prop_assert_eq!(r.path[0], responder);
                prop_assert_eq!(*r.path.last().unwrap(), c.dest);
            }
        }
    }
}
