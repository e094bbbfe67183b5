use pmac_sim::channel::DeliveryStatus;
use pmac_sim::frame::FrameKind;
use pmac_sim::metrics::{
    read_csv, run_scenario, sweep_nodes, utilization_sample, write_csv, Calibration, MetricsRow, ScenarioConfig,
    CSV_HEADER,
};
use pmac_sim::trace::{Trace, TraceEvent};
use pmac_sim::{NodeId, Protocol, SimTime};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Synth {
    start: u64,
    dur: u64,
    from: u32,
    to: Option<u32>,
    delivered: bool,
}

fn synth_frames() -> impl Strategy<Value = Vec<Synth>> {
    prop::collection::vec(
        (0u64..2_000, 1u64..300, 0u32..4, prop::option::of(0u32..4), any::<bool>())
            .prop_map(|(start, dur, from, to, delivered)| Synth { start, dur, from, to, delivered }),
        0..12,
    )
}

fn build(frames: &[Synth], scale: u64) -> Trace {
    let mut sorted = frames.to_vec();
    sorted.sort_by_key(|f| f.start);
    let mut t = Trace::new();
    for (i, f) in sorted.iter().enumerate() {
        let at = SimTime::from_micros(f.start * scale);
        t.push(
            at,
            Some(NodeId(f.from)),
            TraceEvent::Tx { attempt: i as u64, dest: f.to.map(NodeId), freq: 0, duration_us: f.dur * scale, frame: FrameKind::Data },
        );
        let rx = f.to.unwrap_or((f.from + 1) % 4);
        if rx != f.from {
            let status = if f.delivered { DeliveryStatus::Delivered } else { DeliveryStatus::Collided };
            t.push(at, Some(NodeId(rx)), TraceEvent::Rx { attempt: i as u64, sender: NodeId(f.from), status, snr_db: 20.0 });
        }
    }
    t
}

/// Per-microsecond occupancy count of the busiest port.
fn oracle_useful(frames: &[Synth], lo: u64, hi: u64) -> u64 {
    (0..4u32)
        .map(|port| {
            (lo..hi)
                .filter(|&us| {
                    frames.iter().any(|f| {
                        let rx = f.to.unwrap_or((f.from + 1) % 4);
                        let ok = f.delivered && rx != f.from;
                        let involved = f.from == port || rx == port;
                        ok && involved && f.start <= us && us < f.start + f.dur
                    })
                })
                .count() as u64
        })
        .max()
        .unwrap()
}

proptest! {
    #[test]
    fn utilization_matches_oracle(frames in synth_frames(), lo in 0u64..1_000, len in 1u64..1_500) {
        let t = build(&frames, 1);
        let s = utilization_sample(&t, SimTime::from_micros(lo), SimTime::from_micros(lo + len)).unwrap();
        prop_assert_eq!(s.busy_useful_us, oracle_useful(&frames, lo, lo + len));
        prop_assert!(s.busy_useful_us <= s.busy_total_us && s.busy_total_us <= len);
        prop_assert!((0.0..=1.0).contains(&s.fraction()));
    }

    #[test]
    fn utilization_is_scale_free(frames in synth_frames(), len in 1u64..3_000, k in 2u64..7) {
        let a = utilization_sample(&build(&frames, 1), SimTime::ZERO, SimTime::from_micros(len)).unwrap();
        let b = utilization_sample(&build(&frames, k), SimTime::ZERO, SimTime::from_micros(len * k)).unwrap();
        prop_assert_eq!(a.fraction(), b.fraction());
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec(
        (0usize..4, 2usize..300, any::<u64>(), any::<f64>(), any::<f64>(), any::<u64>()),
        1..10,
    )) {
        let mut rows: Vec<MetricsRow> = rows
            .into_iter()
            .filter(|r| r.3.is_finite() && r.4.is_finite())
            .map(|(p, node_count, t, e, d, seed)| MetricsRow {
                protocol: Protocol::ALL[p],
                node_count,
                networking_time_us: t,
                establish_util: e,
                data_util: d,
                seed,
            })
            .collect();
        prop_assume!(!rows.is_empty());
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        pmac_sim::metrics::csv::sort_rows(&mut rows);
        prop_assert_eq!(back, rows);
    }
}

#[test]
fn csv_header_is_fixed() {
    let mut buf = Vec::new();
    let row = MetricsRow { protocol: Protocol::FdCsma, node_count: 8, networking_time_us: 1, establish_util: 0.5, data_util: 0.25, seed: 3 };
    write_csv(&[row], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(text.lines().nth(1).unwrap(), "fd-csma,8,1,0.5,0.25,3");
    assert!(write_csv(&[], &mut Vec::new()).is_err());
    assert!(read_csv("proto,n\npmac,8\n".as_bytes()).is_err());
}

#[test]
fn networking_time_grows_with_nodes() {
    let cfg = ScenarioConfig::default();
    let rows = sweep_nodes(&cfg, &[Protocol::Pmac, Protocol::Csma], &[8, 16, 32, 64]).unwrap();
    assert_eq!(rows.len(), 8);
    for p in [Protocol::Pmac, Protocol::Csma] {
        let times: Vec<u64> = rows.iter().filter(|r| r.protocol == p).map(|r| r.networking_time_us).collect();
        assert_eq!(times.len(), 4);
        assert!(times.windows(2).all(|w| w[0] < w[1]), "{p:?}: {times:?}");
    }
    for (p, c) in rows.iter().filter(|r| r.protocol == Protocol::Pmac).zip(rows.iter().filter(|r| r.protocol == Protocol::Csma)) {
        assert_eq!(p.node_count, c.node_count);
        assert!(p.networking_time_us < c.networking_time_us);
    }
}

#[test]
fn preset_scales_with_joined_nodes() {
    for (protocol, per) in [(Protocol::Pmac, 80_000u64), (Protocol::Csma, 5_120_000), (Protocol::FdPmac, 80_000), (Protocol::FdCsma, 5_120_000)] {
        let cfg = ScenarioConfig { protocol, node_count: 10, calibration: Calibration::Fitted2021, ..ScenarioConfig::default() };
        let run = run_scenario(&cfg).unwrap();
        assert_eq!(run.row.networking_time_us, 10 * per, "{protocol:?}");
    }
}

#[test]
fn scenario_file_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "seed = 3\n# comment\nnode_count = many\n").unwrap();
    let err = ScenarioConfig::load(&path).unwrap_err();
    assert_eq!(err.line, Some(3));
    assert!(err.to_string().starts_with("line 3:"));
    std::fs::write(&path, "protocol = fd-pmac\nnode_count = 5\ntopology = chain\n").unwrap();
    let cfg = ScenarioConfig::load(&path).unwrap();
    assert_eq!((cfg.protocol, cfg.node_count), (Protocol::FdPmac, 5));
    assert_eq!(ScenarioConfig::parse(&cfg.to_text()).unwrap(), cfg);
    assert!(ScenarioConfig::load(dir.path().join("missing.cfg")).is_err());
}

#[test]
fn slot_relations_are_validated() {
    assert!(ScenarioConfig::parse("packet_us = 20000\n").is_err());
    assert!(ScenarioConfig::parse("data_slot_us = 100\npacket_us = 100\n").is_err());
    assert!(ScenarioConfig::parse("node_count = 1\n").is_err());
}
