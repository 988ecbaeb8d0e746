//! Controlled experiments behind the evaluation families. Each builds its
//! own mall and trace from a base configuration and measures one module in
//! isolation.

use std::collections::BTreeMap;

use lbsn_core::coverage::BrandIndex;
use lbsn_core::fingerprint::{build_magnetic_signature, MagneticSignature, WifiFingerprint};
use lbsn_core::integrity::{classify_venue, log_bind, CheckInBind};
use lbsn_core::pipeline::update_weights;
use lbsn_core::similarity::wifi_similarity;
use lbsn_core::{infer_venue, CheckInObservation, Ranker, RankerWeights, VenueId, VenueStore};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::SimResult;
use crate::metrics::{CoveragePoint, DetectionPoint, LabelingPoint, ThresholdPoint};
use crate::replay::{coverage_sweep, detection_sweep, labeling_point};
use crate::trace::{simulate_checkins, Trace};
use crate::world::{generate_mall, stream, streams, Mall};

/// Logs every check-in of `trace` at its claimed venue.
fn log_trace(store: &mut VenueStore, trace: &Trace, capacity: usize) -> SimResult<()> {
    for r in &trace.records {
        if let Ok(bind) = CheckInBind::from_observation(r.checkin_id, r.claimed_venue.clone(), &r.observation) {
            log_bind(store, bind, capacity)?;
        }
    }
    Ok(())
}

fn fake_flags(trace: &Trace) -> BTreeMap<u64, bool> {
    trace.records.iter().map(|r| (r.checkin_id, r.fake)).collect()
}

/// Fake-check-in detection over every venue's logged binds at each RSS
/// cut-off in `cfg.sweeps.dstar_db`. Every venue is covered, so all binds
/// land in the store.
pub fn fake_detection_sweep(cfg: &SimConfig) -> SimResult<Vec<DetectionPoint>> {
    let mall = generate_mall(cfg)?;
    let trace = simulate_checkins(&mall.truth, cfg)?;
    let mut store = mall.full_store()?;
    log_trace(&mut store, &trace, cfg.engine.integrity.log_capacity)?;
    detection_sweep(
        &store,
        Some(&mall.floorplan),
        &fake_flags(&trace),
        &cfg.sweeps.dstar_db,
        &cfg.engine,
    )
}

/// Floorplan labeling accuracy at each erroneous-check-in probability in
/// `cfg.sweeps.fake_checkin_prob`, averaged over `seeds` malls. The
/// detector classifies each venue once after all its binds are logged.
pub fn labeling_vs_pe(cfg: &SimConfig, seeds: &[u64]) -> SimResult<Vec<LabelingPoint>> {
    let mut out = Vec::new();
    for &p_e in &cfg.sweeps.fake_checkin_prob {
        let mut acc = LabelingPoint {
            fake_checkin_prob: p_e,
            unfiltered: 0.0,
            detector: 0.0,
            oracle: 0.0,
        };
        for &seed in seeds {
            let mut c = cfg.clone();
            c.seed = seed;
            c.noise.fake_checkin_prob = p_e;
            let mall = generate_mall(&c)?;
            let trace = simulate_checkins(&mall.truth, &c)?;
            let mut store = mall.full_store()?;
            log_trace(&mut store, &trace, c.engine.integrity.log_capacity)?;
            let ids: Vec<VenueId> = store.ids().cloned().collect();
            for id in &ids {
                if !store.get_venue(id)?.checkin_log.is_empty() {
                    classify_venue(
                        &mut store,
                        Some(&mall.floorplan),
                        id,
                        c.engine.pipeline.snap_radius_m,
                        &c.engine.integrity,
                    )?;
                }
            }
            let identity: BTreeMap<VenueId, VenueId> = ids.iter().map(|i| (i.clone(), i.clone())).collect();
            let p = labeling_point(&store, &mall.floorplan, &identity, &fake_flags(&trace), p_e)?;
            acc.unfiltered += p.unfiltered;
            acc.detector += p.detector;
            acc.oracle += p.oracle;
        }
        let n = seeds.len().max(1) as f64;
        acc.unfiltered /= n;
        acc.detector /= n;
        acc.oracle /= n;
        out.push(acc);
    }
    Ok(out)
}

/// Maximum WiFi similarities behind new-venue determination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewVenueScores {
    /// Venue matched against a database that includes it.
    pub covered: Vec<f64>,
    /// Venue matched against every other venue of its mall.
    pub left_out: Vec<f64>,
    /// Venues of a second mall whose access points share nothing with
    /// the database.
    pub disjoint: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewVenueReport {
    pub scores: NewVenueScores,
    /// Positives are the left-out venues.
    pub left_out: Vec<ThresholdPoint>,
    /// Positives are the disjoint venues.
    pub disjoint: Vec<ThresholdPoint>,
}

fn flagged(scores: &[f64], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|s| **s < threshold).count() as f64 / scores.len() as f64
}

/// Test fingerprints are built from each venue's own honest check-ins, so
/// they are independent of the surveyed database fingerprints.
pub fn new_venue_tradeoff(cfg: &SimConfig) -> SimResult<NewVenueReport> {
    let mut c = cfg.clone();
    c.noise.fake_checkin_prob = 0.0;
    let mall = generate_mall(&c)?;
    let store = mall.full_store()?;
    let tests = venue_test_fingerprints(&mall, &c)?;

    let mut other = c.clone();
    other.seed = c.seed ^ 0x5eed;
    other.mall_id = format!("{}-b", c.mall_id);
    let mall_b = generate_mall(&other)?;
    let foreign = venue_test_fingerprints(&mall_b, &other)?;

    let mut scores = NewVenueScores {
        covered: Vec::new(),
        left_out: Vec::new(),
        disjoint: Vec::new(),
    };
    for (id, fp) in &tests {
        let mut with_self = f64::NEG_INFINITY;
        let mut without = f64::NEG_INFINITY;
        for rec in store.venues() {
            let s = wifi_similarity(fp, &rec.fingerprint.wifi).value;
            with_self = with_self.max(s);
            if &rec.id != id {
                without = without.max(s);
            }
        }
        scores.covered.push(with_self);
        scores.left_out.push(without);
    }
    for fp in foreign.values() {
        // A different address space: no access point in common.
        let relabeled = relabel_macs(fp);
        let best = store
            .venues()
            .map(|r| wifi_similarity(&relabeled, &r.fingerprint.wifi).value)
            .fold(f64::NEG_INFINITY, f64::max);
        scores.disjoint.push(best);
    }
    let curve = |pos: &[f64]| -> Vec<ThresholdPoint> {
        c.sweeps
            .new_venue_threshold
            .iter()
            .map(|&t| ThresholdPoint {
                threshold: t,
                tp_rate: flagged(pos, t),
                fp_rate: flagged(&scores.covered, t),
            })
            .collect()
    };
    Ok(NewVenueReport {
        left_out: curve(&scores.left_out),
        disjoint: curve(&scores.disjoint),
        scores,
    })
}

fn venue_test_fingerprints(mall: &Mall, cfg: &SimConfig) -> SimResult<BTreeMap<VenueId, WifiFingerprint>> {
    let trace = simulate_checkins(&mall.truth, cfg)?;
    let mut fps: BTreeMap<VenueId, WifiFingerprint> = BTreeMap::new();
    for r in trace.records.iter().filter(|r| !r.fake) {
        let fp = r.observation.wifi_fingerprint()?;
        fps.entry(r.actual_venue.clone()).or_default().absorb(&fp);
    }
    Ok(fps)
}

fn relabel_macs(fp: &WifiFingerprint) -> WifiFingerprint {
    let counts = fp
        .macs()
        .map(|m| {
            let n = (fp.fraction(m) * fp.scan_count() as f64).round() as u32;
            (format!("x-{m}"), n)
        })
        .collect();
    WifiFingerprint::from_counts(counts, fp.scan_count()).expect("valid counts")
}

/// Names uncovered branded venues from one observation each, at every
/// edit budget in `cfg.sweeps.max_edit`. Every venue is branded and
/// broadcasts an SSID derived from its name.
pub fn coverage_vs_max_edit(cfg: &SimConfig) -> SimResult<Vec<CoveragePoint>> {
    let mut c = cfg.clone();
    c.brand_fraction = 1.0;
    c.radio.named_ssid_fraction = 1.0;
    c.noise.fake_checkin_prob = 0.0;
    let mall = generate_mall(&c)?;
    let trace = simulate_checkins(&mall.truth, &c)?;
    let store = mall.store()?;
    let mut brands = BrandIndex::from_names(&mall.truth.brands);
    brands.add_store(&store);
    let mut first: BTreeMap<VenueId, CheckInObservation> = BTreeMap::new();
    for r in &trace.records {
        if !store.contains(&r.actual_venue) {
            first
                .entry(r.actual_venue.clone())
                .or_insert_with(|| r.observation.clone());
        }
    }
    Ok(coverage_sweep(
        &mall.truth,
        &first,
        &brands,
        &c.sweeps.max_edit,
        &c.engine,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRun {
    pub seed: u64,
    /// Weights after every update.
    pub history: Vec<BTreeMap<Ranker, f64>>,
    pub informative: Ranker,
    pub noise: Ranker,
}

impl FeedbackRun {
    pub fn final_weights(&self) -> Option<&BTreeMap<Ranker, f64>> {
        self.history.last()
    }

    /// Largest deviation of any weight vector's sum from 1.
    pub fn max_sum_error(&self) -> f64 {
        self.history
            .iter()
            .map(|w| (w.values().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Feeds `checkins` honest check-ins of a fully covered mall through
/// inference and feedback. Every venue broadcasts its exact name as SSID,
/// which makes the SSID ranker perfectly informative, while the magnetic
/// signatures of venues and observations are redrawn independently at
/// random, which makes the magnetic ranker pure noise.
pub fn feedback_convergence(cfg: &SimConfig, seed: u64, checkins: usize) -> SimResult<FeedbackRun> {
    let mut c = cfg.clone();
    c.seed = seed;
    c.coverage_gap = 0.0;
    c.radio.named_ssid_fraction = 1.0;
    c.noise.ssid_corruption_edits = 0;
    c.noise.fake_checkin_prob = 0.0;
    c.checkins_per_venue = checkins.div_ceil(c.venue_count.max(1));
    let mall = generate_mall(&c)?;
    let trace = simulate_checkins(&mall.truth, &c)?;
    let mut store = mall.full_store()?;
    let mut rng = stream(seed, streams::EXPERIMENT);
    let ids: Vec<VenueId> = store.ids().cloned().collect();
    for id in &ids {
        let sig = random_magnetic(&mut rng)?;
        store.update_venue(id, |r| {
            r.fingerprint.magnetic = Some(sig);
            r.fingerprint.magnetic_count = 1;
        })?;
    }
    let mut weights = RankerWeights::equal(c.engine.pipeline.enabled_rankers.iter().copied());
    let mut history = Vec::with_capacity(checkins);
    for r in trace.records.iter().take(checkins) {
        let mut obs = r.observation.clone();
        obs.magnetic = Some(random_magnetic(&mut rng)?);
        let list = infer_venue(&obs, &store, Some(&mall.floorplan), &weights, &c.engine)?;
        if list.rank_of(&r.actual_venue).is_some() {
            weights = update_weights(
                &weights,
                &list.per_ranker,
                &r.actual_venue,
                list.entries.len(),
                c.engine.pipeline.learning_rate,
            )?;
        }
        history.push(weights.weights.clone());
    }
    Ok(FeedbackRun {
        seed,
        history,
        informative: Ranker::Ssid,
        noise: Ranker::Magnetic,
    })
}

fn random_magnetic(rng: &mut impl Rng) -> SimResult<MagneticSignature> {
    let readings: Vec<[f64; 3]> = (0..64).map(|_| [0; 3].map(|_| rng.random_range(-5.0..5.0))).collect();
    Ok(build_magnetic_signature(&readings)?)
}
