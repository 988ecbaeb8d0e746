mod common;

use std::collections::BTreeMap;

use common::{observation, record, scan, venue_with_macs};
use lbsn_core::config::{Aggregator, Config, FingerprintConfig};
use lbsn_core::fingerprint::{ColorCluster, ColorLightFingerprint, MagneticSignature, SoundSample, VenueFingerprint};
use lbsn_core::integrity::{BindLabel, CheckInBind, LoggedBind};
use lbsn_core::pipeline::{build_candidates, infer_venue, is_new_venue, rank_all, Ranker, RankerWeights};
use lbsn_core::{CheckInObservation, Error, VenueId, VenueStore};

fn rich_observation(user: &str, macs: &[&str], x: f64, hue: f64) -> CheckInObservation {
    let mut o = observation(user, macs, x, 0.0);
    o.mobility.visit_period = lbsn_core::fingerprint::VisitPeriod::ALL[(x / 10.0) as usize % 6];
    let mut v = vec![0.0; 100];
    v[(hue * 99.0) as usize] = 1.0;
    o.sound = Some(SoundSample::new(14, v).unwrap());
    o.color = Some(ColorLightFingerprint {
        clusters: vec![ColorCluster {
            centroid: [hue, 0.5, 0.5],
            size: 40,
        }],
        total_pixels: 40,
    });
    o.color_pixels = vec![[hue, 0.5, 0.5]; 40];
    o.magnetic = Some(MagneticSignature {
        energy_spectrum: vec![hue, 1.0],
        summary: [hue, 1.0, 2.0],
    });
    o.text.ssid_strongest = Some(format!("Shop {x}"));
    o.text.ocr_terms = ["coffee".to_string(), format!("t{}", x as i32)].into();
    o.text.visterms = [(format!("vt{}", x as i32), 1)].into();
    o
}

fn populated_store() -> VenueStore {
    let cfg = FingerprintConfig::default();
    let mut store = VenueStore::new("mall");
    for i in 0..6 {
        let macs: Vec<String> = (0..4).map(|k| format!("ap{}", i * 4 + k)).collect();
        let macs: Vec<&str> = macs.iter().map(String::as_str).collect();
        let mut rec = record(&format!("v{i}"), i as f64 * 10.0, 0.0);
        rec.names = vec![format!("Shop {}", i as f64 * 10.0)];
        rec.tips = vec![format!("great coffee t{}", i * 10)];
        rec.image_corpus = vec![[(format!("vt{}", i * 10), 2)].into(), [("shelf".to_string(), 1)].into()];
        rec.brand = (i % 2 == 0).then(|| "Chain".to_string());
        let mut fp = VenueFingerprint::empty(&cfg);
        for u in 0..=i {
            fp.merge_in_place(
                &rich_observation(&format!("user{u}"), &macs, i as f64 * 10.0, i as f64 / 6.0),
                &cfg,
            )
            .unwrap();
        }
        rec.fingerprint = fp;
        let bind = CheckInBind::from_observation(i as u64, rec.id.clone(), &observation("u", &macs, 0.0, 0.0)).unwrap();
        rec.checkin_log.push(LoggedBind {
            bind,
            label: Some(BindLabel::Correct),
        });
        store.upsert_venue(rec).unwrap();
    }
    store
}

#[test]
fn persistence_round_trip_is_exact_and_stable() {
    let store = populated_store();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.json");
    store.save(&path).unwrap();
    let loaded = VenueStore::load(&path).unwrap();
    assert_eq!(loaded, store);
    assert_eq!(loaded.to_json(), std::fs::read_to_string(&path).unwrap());
    assert_eq!(populated_store().to_json(), store.to_json());
    // Derived indices are rebuilt on load.
    assert_eq!(
        loaded.nearest_venues(lbsn_core::Point::new(21.0, 0.0), 1)[0].0.id,
        VenueId::new("v2")
    );
    assert_eq!(loaded.image_index().image_count(), 12);
}

#[test]
fn malformed_files_are_reported() {
    let text = populated_store().to_json();
    let truncated = &text[..text.len() / 2];
    match VenueStore::from_json(truncated) {
        Err(Error::Parse { line, .. }) => assert!(line > 1),
        other => panic!("expected parse error, got {other:?}"),
    }
    let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 7", 1);
    assert!(matches!(
        VenueStore::from_json(&bumped),
        Err(Error::Version { found: 7, .. })
    ));
    let store = populated_store();
    assert!(matches!(
        store.get_venue(&VenueId::new("nope")),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn upsert_then_get() {
    let mut store = VenueStore::new("m");
    let rec = venue_with_macs("x", 1.0, 2.0, &["a"]);
    store.upsert_venue(rec.clone()).unwrap();
    assert_eq!(store.get_venue(&rec.id).unwrap(), &rec);
}

#[test]
fn identical_observation_ranks_its_venue_first() {
    let store = populated_store();
    let cfg = Config::default();
    let w = RankerWeights::equal(Ranker::ALL);
    for i in 0..6 {
        let macs: Vec<String> = (0..4).map(|k| format!("ap{}", i * 4 + k)).collect();
        let macs: Vec<&str> = macs.iter().map(String::as_str).collect();
        let obs = rich_observation("user0", &macs, i as f64 * 10.0, i as f64 / 6.0);
        for agg in [Aggregator::Borda, Aggregator::CombSum] {
            let mut c = cfg.clone();
            c.pipeline.aggregator = agg;
            let list = infer_venue(&obs, &store, None, &w, &c).unwrap();
            assert!(!list.new_venue);
            assert_eq!(list.top(), Some(&VenueId::new(format!("v{i}"))), "{agg:?}");
            assert_eq!(list, infer_venue(&obs, &store, None, &w, &c).unwrap());
        }
    }
}

#[test]
fn unmatched_observation_is_new() {
    let store = populated_store();
    let obs = observation("u", &["zz1", "zz2"], 5.0, 0.0);
    let list = infer_venue(
        &obs,
        &store,
        None,
        &RankerWeights::equal(Ranker::ALL),
        &Config::default(),
    )
    .unwrap();
    assert!(list.new_venue && list.entries.is_empty());
    let empty = VenueStore::new("m");
    assert!(is_new_venue(&obs.wifi_fingerprint().unwrap(), empty.venues(), 1.2));
}

#[test]
fn new_venue_threshold_examples() {
    // One shared mac with fraction 1 out of a union of n gives S = 2/n; use
    // profiles to hit 1.3 and 1.1 exactly.
    let mut store = VenueStore::new("m");
    let mut rec = record("v", 0.0, 0.0);
    let counts: BTreeMap<String, u32> = [("a".to_string(), 20)].into();
    rec.fingerprint.wifi = lbsn_core::fingerprint::WifiFingerprint::from_counts(counts, 20).unwrap();
    store.upsert_venue(rec).unwrap();
    // Observation fraction f for mac a: S = (1 + f) * f.
    let obs_fp = |f: f64| common::profile(&[("a", f)]);
    let f13 = (-1.0 + (1.0f64 + 4.0 * 1.3).sqrt()) / 2.0;
    let f11 = (-1.0 + (1.0f64 + 4.0 * 1.1).sqrt()) / 2.0;
    assert!(!is_new_venue(&obs_fp(f13), store.venues(), 1.2));
    assert!(is_new_venue(&obs_fp(f11), store.venues(), 1.2));
}

#[test]
fn candidate_union_counts() {
    let mut store = VenueStore::new("m");
    // Ten venues near the query, ten far away; four near and six far share
    // access points with the observation.
    for i in 0..10 {
        let near_mac = if i < 4 { format!("s{i}") } else { format!("n{i}") };
        store
            .upsert_venue(venue_with_macs(&format!("near{i}"), i as f64, 0.0, &[&near_mac]))
            .unwrap();
        let far_mac = if i < 6 { format!("s{}", 10 + i) } else { format!("f{i}") };
        store
            .upsert_venue(venue_with_macs(&format!("far{i}"), 1000.0 + i as f64, 0.0, &[&far_mac]))
            .unwrap();
    }
    let shared: Vec<String> = (0..4).chain(10..16).map(|i| format!("s{i}")).collect();
    let shared: Vec<&str> = shared.iter().map(String::as_str).collect();
    let obs = observation("u", &shared, 0.0, 0.0);
    let cands = build_candidates(&obs, &obs.wifi_fingerprint().unwrap(), &store, None, &Config::default());
    assert_eq!(cands.len(), 16);
    let mut dedup = cands.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), 16);
}

#[test]
fn rankers_abstain_without_modalities() {
    let store = populated_store();
    let cfg = Config::default();
    let cands: Vec<VenueId> = store.ids().cloned().collect();
    let full = rich_observation("user0", &["ap0", "ap1", "ap4"], 0.0, 0.0);
    let lists = rank_all(&full, &cands, &store, None, &cfg).unwrap();
    let present: Vec<Ranker> = lists.keys().copied().collect();
    assert_eq!(present, Ranker::ALL, "{lists:#?}");

    let mut sparse = full.clone();
    sparse.sound = None;
    sparse.color = None;
    sparse.color_pixels.clear();
    sparse.magnetic = None;
    let lists = rank_all(&sparse, &cands, &store, None, &cfg).unwrap();
    for r in [Ranker::Sound, Ranker::Color, Ranker::Magnetic] {
        assert!(!lists.contains_key(&r));
    }
    assert_eq!(lists.len(), 7);

    let mut cfg_off = cfg.clone();
    cfg_off.pipeline.enabled_rankers.remove(&Ranker::Ocr);
    assert!(!rank_all(&full, &cands, &store, None, &cfg_off)
        .unwrap()
        .contains_key(&Ranker::Ocr));
}

#[test]
fn ssid_ranker_uses_mean_name_distance() {
    let cfg = Config::default();
    let mut store = VenueStore::new("m");
    let mut a = venue_with_macs("a", 0.0, 0.0, &["x"]);
    a.names = vec!["Starbucks".into(), "Starbucks Coffee Company".into()];
    let mut b = venue_with_macs("b", 1.0, 0.0, &["y"]);
    b.names = vec!["Starbacks".into()];
    store.upsert_venue(a).unwrap();
    store.upsert_venue(b).unwrap();
    let mut obs = observation("u", &["x"], 0.0, 0.0);
    obs.wifi_scans = vec![scan(&["x"], 0.0)];
    obs.text.ssid_strongest = Some("Starbucks".into());
    let lists = rank_all(&obs, &[VenueId::new("a"), VenueId::new("b")], &store, None, &cfg).unwrap();
    let ssid = &lists[&Ranker::Ssid];
    // a averages (0 + 15) / 2 = 7.5; b is 1 edit away.
    assert_eq!(ssid.order, vec![VenueId::new("b"), VenueId::new("a")]);
    assert_eq!(ssid.scores[&VenueId::new("a")].value, 7.5);
}
