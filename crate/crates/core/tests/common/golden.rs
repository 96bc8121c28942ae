//! Hand-worked scenarios with exact expected reports. Shared by the
//! `golden` and `acceptance` targets.

use std::path::PathBuf;

use dpafd_core::analysis::{check_diagnosis, tally_cycle};
use dpafd_core::engine::{
    gateway_of, inter_network_exchange, load_scenario, simulate, LatencyModel, NetworkReport,
    TraceEvent,
};
use dpafd_core::{
    Direction, FaultAction, FaultScript, MessageKind, NodeId, Scenario, StatusBit, Topology,
};

fn scenario(name: &str) -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    load_scenario(&p).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn short(v: &[NodeId]) -> Vec<&str> {
    v.iter()
        .map(|n| n.label().rsplit('.').next().unwrap())
        .collect()
}

pub fn more_acknowledgements_wins() {
    let run = simulate(&scenario("election.scn")).unwrap();
    let (c, records) = run.trace.cycles()[0];
    let t = tally_cycle(c, records);
    assert_eq!(short(&t.volunteers), ["104", "108"]);
    assert_eq!(short(&t.winners), ["108"]);
    let elected = records
        .iter()
        .find_map(|r| match &r.event {
            TraceEvent::Note {
                note: dpafd_core::protocol::Note::Elected { candidates },
                ..
            } => Some(candidates.clone()),
            _ => None,
        })
        .unwrap();
    let counts: Vec<(&str, u32)> = elected
        .iter()
        .map(|c| (c.id.label().rsplit('.').next().unwrap(), c.ack_count))
        .collect();
    assert_eq!(counts, [("104", 3), ("108", 5)]);
    assert_eq!(short(&run.reports[0].leaders_in_order)[0], "108");
}

pub fn tie_goes_to_earlier_broadcaster() {
    let run = simulate(&scenario("election-tie.scn")).unwrap();
    let (c, records) = run.trace.cycles()[0];
    let t = tally_cycle(c, records);
    assert_eq!(short(&t.volunteers), ["104", "108"]);
    assert_eq!(short(&t.winners), ["104"]);
    assert_eq!(short(&t.announced), ["104"]);
}

pub fn fastest_fault_free_responder_leads_next() {
    let run = simulate(&scenario("fastest-responder.scn")).unwrap();
    let first_transfer = run
        .trace
        .records
        .iter()
        .find_map(|r| match &r.event {
            TraceEvent::Send { msg, .. } => match &msg.kind {
                MessageKind::ResultTransfer {
                    frame,
                    direction: Direction::Forward,
                } => Some((msg.dst.clone(), frame.clone())),
                _ => None,
            },
            _ => None,
        })
        .unwrap();
    assert_eq!(first_transfer.0.label(), "172.16.40.105");
    let rows: Vec<(&str, u8, u8)> = first_transfer
        .1
        .entries()
        .iter()
        .map(|e| {
            (
                e.address.label().rsplit('.').next().unwrap(),
                e.status.as_u8(),
                u8::from(e.leader),
            )
        })
        .collect();
    assert_eq!(
        rows,
        [
            ("107", 0, 1),
            ("105", 0, 0),
            ("106", 1, 0),
            ("109", 0, 0),
            ("108", 0, 0),
            ("104", 0, 0),
            ("110", 1, 0),
        ]
    );
    let r = &run.reports[0];
    assert_eq!(short(&r.leaders_in_order), ["107", "105", "109", "108", "104"]);
    assert_eq!(short(&r.faulty_found), ["106", "110"]);
}

pub fn repair_between_cycles_shrinks_faulty_list() {
    let s = scenario("vlan30-repair.scn");
    let run = simulate(&s).unwrap();
    let [c1, c2] = &run.reports[..] else { panic!() };
    assert_eq!(c1.faulty_found.len(), 5);
    assert_eq!(short(&c1.faulty_found), ["102", "106", "105", "109", "101"]);
    assert_eq!(short(&c1.leaders_in_order), ["110", "108", "107", "103", "104"]);
    assert_eq!(c2.faulty_found.len(), 4);
    assert_eq!(short(&c2.faulty_found), ["102", "106", "105", "101"]);
    assert_eq!(short(&c2.leaders_in_order), ["110", "108", "107", "103", "104", "109"]);
    assert!(c1.terminated && c2.terminated);
    assert!(check_diagnosis(&run.trace, &s).unwrap().passed());
}

pub fn exchange_delivers_peer_list_verbatim() {
    let nets = [scenario("vlan20.scn"), scenario("vlan30.scn")];
    let mut reports = Vec::new();
    for s in &nets {
        let run = simulate(s).unwrap();
        let gateway = gateway_of(s, &run.state.membership).unwrap();
        let faulty = run.state.known_faulty[&gateway].clone();
        reports.push(NetworkReport {
            network_id: s.network_id.clone(),
            gateway,
            faulty,
        });
    }
    let own20: Vec<NodeId> = reports[0].faulty.iter().map(|f| f.address.clone()).collect();
    assert_eq!(short(&own20), ["101", "102", "110", "103"]);

    let views = inter_network_exchange(&reports);
    assert_eq!(views[0].gateway.label(), "172.16.20.109");
    let (origin, frames) = &views[0].received[0];
    assert_eq!(origin, "vlan30");
    let got: Vec<NodeId> = frames.iter().map(|f| f.address.clone()).collect();
    assert_eq!(short(&got), ["105", "109", "101", "104"]);
    assert!(frames.iter().all(|f| f.status == StatusBit::Faulty));
    assert_eq!(frames, &reports[1].faulty);
}

pub fn vlan20_finalizes_at_last_leader() {
    let s = scenario("vlan20.scn");
    let run = simulate(&s).unwrap();
    let (c, records) = run.trace.cycles()[0];
    let t = tally_cycle(c, records);
    assert_eq!(t.sessions.len(), 1);
    assert_eq!(t.sessions[0].finalizer.as_ref().unwrap().label(), "172.16.20.106");
    assert_eq!(
        short(&run.reports[0].leaders_in_order),
        ["109", "108", "105", "104", "107", "106"]
    );
}

fn ten_node() -> Topology {
    "N1: N2 N3 N4 N8 N9\nN2: N7\nN3:\nN4:\nN5: N8\nN6: N7\nN7: N10\nN8:\nN9:\nN10:\n"
        .parse()
        .unwrap()
}

pub fn mixed_faults_everyone_learns_the_list() {
    let mut s = Scenario::new("ten", ten_node());
    s.latency = LatencyModel::fixed(1);
    s.timing.t_bcast_wait = 400;
    s.volunteer_waits.insert("N1".into(), 5);
    s.script.push(1, "N3", FaultAction::SoftwareFault);
    s.script.push(1, "N9", FaultAction::Crash);
    s.script.push(1, "N6", FaultAction::Crash);
    let run = simulate(&s).unwrap();
    let r = &run.reports[0];
    assert_eq!(
        r.leaders_in_order.iter().map(NodeId::label).collect::<Vec<_>>(),
        ["N1", "N2", "N7", "N10", "N4", "N8", "N5"]
    );
    assert_eq!(
        r.faulty_found.iter().map(NodeId::label).collect::<Vec<_>>(),
        ["N3", "N9", "N6"]
    );
    for (node, list) in &run.state.known_faulty {
        let labels: Vec<&str> = list.iter().map(|f| f.address.label()).collect();
        assert_eq!(labels, ["N3", "N9", "N6"], "{node}");
    }
    assert_eq!(run.state.known_faulty.len(), 7);
    assert!(check_diagnosis(&run.trace, &s).unwrap().passed());
}

pub fn path_with_crashed_middle_reports_far_end() {
    let mut s = Scenario::new("p", "A: B\nB: C\nC:\n".parse().unwrap());
    s.latency = LatencyModel::fixed(1);
    s.timing.t_bcast_wait = 400;
    s.volunteer_waits.insert("A".into(), 5);
    s.script = FaultScript::crash_all(1, ["B"]);
    let run = simulate(&s).unwrap();
    let r = &run.reports[0];
    assert_eq!(r.sessions[0].first_leader.label(), "A");
    let faulty: Vec<&str> = r.sessions[0].faulty_found.iter().map(NodeId::label).collect();
    assert_eq!(faulty, ["B", "C"]);
    assert!(check_diagnosis(&run.trace, &s).unwrap().passed());
}
