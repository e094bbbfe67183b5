use pmac_sim::engine::{RngStream, SimTime, Simulation};
use proptest::prelude::*;

proptest! {
    #[test]
    fn events_fire_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 1..60)) {
        let mut sim: Simulation<usize> = Simulation::new();
        for (i, t) in times.iter().enumerate() {
            sim.schedule(SimTime::from_micros(*t), i).unwrap();
        }
        let mut fired = Vec::new();
        sim.run_to_completion(|s, ev| fired.push((s.now().as_micros(), ev.action)));
        let mut expected: Vec<(u64, usize)> = times.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        expected.sort();
        prop_assert_eq!(fired, expected);
    }

    #[test]
    fn clock_never_runs_backwards(times in prop::collection::vec(0u64..1000, 1..40)) {
        let mut sim: Simulation<u64> = Simulation::new();
        for t in &times {
            sim.schedule(SimTime::from_micros(*t), *t).unwrap();
        }
        let mut last = 0;
        let end = sim.run_to_completion(|s, ev| {
            assert!(s.now().as_micros() >= last);
            assert_eq!(s.now().as_micros(), ev.action);
            last = s.now().as_micros();
        });
        prop_assert_eq!(end.as_micros(), *times.iter().max().unwrap());
    }

    #[test]
    fn draws_stay_in_range(seed in any::<u64>(), lo in -100i64..100, span in 0i64..300) {
        let mut rng = RngStream::new(seed, 7);
        for _ in 0..50 {
            let v = rng.draw_uniform(lo, lo + span).unwrap();
            prop_assert!(v >= lo && v <= lo + span);
        }
    }
}

#[test]
fn window_draws_are_uniform() {
    // 10^5 draws over 256 slots: every slot count within 3 sigma, and the
    // chi-square statistic well inside its 255-dof bulk.
    let draws = 100_000u64;
    let mut counts = [0u64; 256];
    let mut rng = RngStream::new(20_210_000, 3);
    for _ in 0..draws {
        counts[rng.draw_uniform(0, 255).unwrap() as usize] += 1;
    }
    let expected = draws as f64 / 256.0;
    let sigma = (draws as f64 * (1.0 / 256.0) * (255.0 / 256.0)).sqrt();
    let mut chi2 = 0.0;
    for (slot, &c) in counts.iter().enumerate() {
        assert!((c as f64 - expected).abs() <= 3.0 * sigma + 1e-9, "slot {slot}: {c} vs {expected:.1}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    assert!(chi2 < 340.0, "chi-square {chi2}");
}

#[test]
fn streams_are_independent_of_other_nodes() {
    let a: Vec<i64> = {
        let mut r = RngStream::new(9, 4);
        (0..20).map(|_| r.draw_uniform(0, 255).unwrap()).collect()
    };
    let mut other = RngStream::new(9, 5);
    for _ in 0..100 {
        other.draw_uniform(0, 255).unwrap();
    }
    let mut r = RngStream::new(9, 4);
    let b: Vec<i64> = (0..20).map(|_| r.draw_uniform(0, 255).unwrap()).collect();
    assert_eq!(a, b);
    let mut c = RngStream::new(10, 4);
    let c: Vec<i64> = (0..20).map(|_| c.draw_uniform(0, 255).unwrap()).collect();
    assert_ne!(a, c);
}
