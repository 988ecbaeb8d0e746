use lbsn_core::Ranker;
use lbsn_sim::{generate_mall, replay, simulate_checkins, NoiseModel, ReplayInput, ReplayOutput, SimConfig};

fn run(cfg: &SimConfig) -> ReplayOutput {
    let mall = generate_mall(cfg).unwrap();
    let trace = simulate_checkins(&mall.truth, cfg).unwrap();
    let input = ReplayInput {
        store: mall.store().unwrap(),
        brands: mall.truth.brands.clone(),
        floorplan: mall.floorplan.clone(),
        truth: mall.truth.clone(),
    };
    replay(&input, &trace, cfg).unwrap()
}

/// No sensor noise, no device bias, every visitor at the venue center.
fn noiseless() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.noise = NoiseModel::noiseless();
    cfg.radio.device_offset_db = 0.0;
    cfg.layout.visit_spread_m = 0.0;
    cfg.coverage_gap = 0.0;
    cfg
}

#[test]
fn noiseless_wifi_fingerprints_dominate() {
    let out = run(&noiseless());
    let r = &out.report;
    assert_eq!(r.evaluated, r.checkins);
    assert_eq!(r.new_venue.false_positive, 0);
    let wifi = r.rankers.iter().find(|a| a.ranker == Ranker::Wifi).unwrap();
    assert_eq!(wifi.top1, 1.0);
    assert_eq!(r.top5, 1.0);
}

#[test]
fn noiseless_wifi_ranking_is_perfect() {
    let mut cfg = noiseless();
    cfg.engine.pipeline.enabled_rankers = [Ranker::Wifi].into_iter().collect();
    let r = run(&cfg).report;
    assert_eq!(r.top1, 1.0);
    assert_eq!(r.median_distance_error_m, Some(0.0));
}

#[test]
fn uncovered_venues_are_flagged_and_created() {
    let mut cfg = SimConfig::default();
    cfg.noise = NoiseModel::noiseless();
    let out = run(&cfg);
    let gap = (cfg.coverage_gap * cfg.venue_count as f64).round() as usize;
    assert!(gap > 0);
    // Each uncovered venue is new exactly once: at its first check-in.
    assert_eq!(
        out.report.new_venue.true_positive + out.report.new_venue.false_negative,
        gap
    );
    assert_eq!(out.report.new_venue.tp_rate(), 1.0);
    let n = &out.report.naming;
    assert_eq!(n.ssid + n.logical_fingerprint + n.unnamed, gap);
    assert_eq!(out.store.len(), cfg.venue_count);
    assert_eq!(out.to_truth.len(), cfg.venue_count);
}

#[test]
fn feedback_does_not_hurt() {
    for seed in 1..=3 {
        let mut cfg = SimConfig::default();
        cfg.seed = seed;
        cfg.checkins_per_venue = 15;
        let learned = run(&cfg).report.top1;
        cfg.feedback = false;
        let frozen = run(&cfg);
        assert!(
            learned >= frozen.report.top1,
            "seed {seed}: {learned} < {}",
            frozen.report.top1
        );
        // Frozen weights never move.
        let w: Vec<f64> = frozen.weights.weights.values().copied().collect();
        assert!(w.iter().all(|x| (x - w[0]).abs() < 1e-12));
    }
}

#[test]
fn report_is_self_consistent() {
    let r = run(&SimConfig::default()).report;
    assert_eq!(
        r.checkins,
        SimConfig::default().venue_count * SimConfig::default().checkins_per_venue
    );
    assert!(r.evaluated <= r.checkins);
    let at = |rank: usize| r.rank_cdf.iter().find(|p| p.rank == rank).unwrap().fraction;
    assert_eq!(at(1), r.top1);
    assert_eq!(at(5), r.top5);
    assert!(r
        .rank_cdf
        .windows(2)
        .all(|w| w[0].rank < w[1].rank && w[0].fraction <= w[1].fraction));
    assert!(r
        .distance_error_cdf
        .windows(2)
        .all(|w| w[0].x <= w[1].x && w[0].p <= w[1].p));
    assert!(r.distance_error_cdf.iter().all(|p| (0.0..=1.0).contains(&p.p)));
    let sum: f64 = r.final_weights.values().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    for a in &r.rankers {
        assert!(a.top1 <= a.top5 && a.top5 <= 1.0);
    }
    let c = &r.new_venue;
    assert_eq!(
        c.true_positive + c.false_negative + c.false_positive + c.true_negative,
        r.checkins
    );
}
