//! Replays a check-in trace through the engine and scores the outcome
//! against ground truth.

use std::collections::BTreeMap;

use lbsn_core::config::ClusterMetric;
use lbsn_core::coverage::{
    extend_coverage, predict_name_by_logical_fingerprint, predict_name_by_ssid, BrandIndex, NamedBy,
};
use lbsn_core::fingerprint::VenueFingerprint;
use lbsn_core::integrity::{classify_checkins, classify_venue, log_bind, neighbor_centroids, BindLabel, CheckInBind};
use lbsn_core::labeling::{estimate_venue_location, label_floorplan, labeling_accuracy};
use lbsn_core::pipeline::update_weights;
use lbsn_core::{
    infer_venue, CheckInObservation, Config, Floorplan, Location, Point, Ranker, RankerWeights, VenueId, VenueStore,
};

use crate::config::SimConfig;
use crate::error::SimResult;
use crate::metrics::{
    ecdf, median, rank_cdf, ratio, CoveragePoint, DetectionPoint, LabelingPoint, MetricsReport, NamingCounts,
    RankerAccuracy, RANK_CDF_DEPTH,
};
use crate::trace::Trace;
use crate::world::GroundTruth;

/// Everything a replay needs besides the trace.
#[derive(Debug, Clone)]
pub struct ReplayInput {
    pub truth: GroundTruth,
    pub floorplan: Floorplan,
    /// Initial store, typically the external catalog.
    pub store: VenueStore,
    /// Known brand names.
    pub brands: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub report: MetricsReport,
    pub store: VenueStore,
    /// Floorplan labeled as the replay went.
    pub floorplan: Floorplan,
    pub weights: RankerWeights,
    /// Store venue -> ground-truth venue.
    pub to_truth: BTreeMap<VenueId, VenueId>,
}

/// Mutable replay state.
struct Session<'a> {
    truth: &'a GroundTruth,
    cfg: &'a SimConfig,
    store: VenueStore,
    plan: Floorplan,
    weights: RankerWeights,
    brands: BrandIndex,
    to_truth: BTreeMap<VenueId, VenueId>,
    to_store: BTreeMap<VenueId, VenueId>,
    /// Fingerprint of each venue before any check-in was folded in.
    base: BTreeMap<VenueId, VenueFingerprint>,
    observations: BTreeMap<u64, CheckInObservation>,
}

impl Session<'_> {
    fn engine(&self) -> &Config {
        &self.cfg.engine
    }

    /// Store venue for the claimed ground-truth venue, creating one through
    /// the coverage extender when the store lacks it.
    fn resolve_claim(
        &mut self,
        claimed: &VenueId,
        obs: &CheckInObservation,
        naming: &mut NamingCounts,
    ) -> SimResult<VenueId> {
        if let Some(id) = self.to_store.get(claimed) {
            return Ok(id.clone());
        }
        let out = extend_coverage(obs, &mut self.store, &self.brands, &self.weights, &self.cfg.engine)?;
        match out.named_by {
            NamedBy::Ssid => naming.ssid += 1,
            NamedBy::LogicalFingerprint => naming.logical_fingerprint += 1,
            NamedBy::Nobody => naming.unnamed += 1,
        }
        let truth_name = self.truth.venue(claimed).map(|v| v.name.as_str()).unwrap_or("");
        if out.named_by != NamedBy::Nobody && same_name(out.record.canonical_name(), truth_name) {
            naming.correct += 1;
        }
        // The creating observation returns through its bind once labeled.
        let id = out.record.id.clone();
        self.base
            .insert(id.clone(), VenueFingerprint::empty(&self.cfg.engine.fingerprint));
        self.to_store.insert(claimed.clone(), id.clone());
        self.to_truth.insert(id.clone(), claimed.clone());
        Ok(id)
    }

    /// Logs the bind, reclassifies the venue, rebuilds its fingerprint from
    /// the check-ins currently labeled correct and relabels the floorplan.
    /// Returns the label of this check-in.
    fn integrate(
        &mut self,
        checkin_id: u64,
        venue: &VenueId,
        obs: &CheckInObservation,
    ) -> SimResult<Option<BindLabel>> {
        let Ok(bind) = CheckInBind::from_observation(checkin_id, venue.clone(), obs) else {
            // Nothing to cluster without access points.
            return Ok(None);
        };
        self.observations.insert(checkin_id, obs.clone());
        let icfg = self.cfg.engine.integrity.clone();
        let snap = self.cfg.engine.pipeline.snap_radius_m;
        log_bind(&mut self.store, bind, icfg.log_capacity)?;
        let result = classify_venue(&mut self.store, Some(&self.plan), venue, snap, &icfg)?;

        let rec = self.store.get_venue(venue)?;
        let base = match self.base.get(venue) {
            Some(b) => b.clone(),
            None => rec.fingerprint.clone(),
        };
        self.base.entry(venue.clone()).or_insert_with(|| base.clone());
        let mut fp = base;
        let fp_cfg = &self.cfg.engine.fingerprint;
        let mut correct = Vec::new();
        for b in rec.checkin_log.iter().filter(|b| b.label == Some(BindLabel::Correct)) {
            correct.push(b.bind.location.point);
            if let Some(o) = self.observations.get(&b.bind.checkin_id) {
                fp.merge_in_place(o, fp_cfg)?;
            }
        }
        let floor = rec.claimed_location.floor;
        let estimate = estimate_venue_location(&correct)
            .ok()
            .map(|p| Location { point: p, floor });
        self.store.update_venue(venue, |r| {
            r.fingerprint = fp;
            if estimate.is_some() {
                r.estimated_location = estimate;
            }
        })?;
        if let (Some(loc), Some(t)) = (estimate, self.to_truth.get(venue)) {
            label_floorplan(t, &loc, &mut self.plan)?;
        }
        Ok(result.labels.get(&checkin_id).copied())
    }
}

fn same_name(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

fn truth_location(truth: &GroundTruth, id: &VenueId) -> Option<Location> {
    truth.venue(id).map(|v| v.location())
}

/// Runs every check-in of `trace` through inference, user selection,
/// coverage extension for unknown venues, integrity checking, fingerprint
/// and floorplan updates, and feedback. The user selects the claimed venue,
/// so fake check-ins select the wrong one.
pub fn replay(input: &ReplayInput, trace: &Trace, cfg: &SimConfig) -> SimResult<ReplayOutput> {
    let engine = &cfg.engine;
    let mut brands = BrandIndex::from_names(&input.brands);
    brands.add_store(&input.store);
    let initial: Vec<VenueId> = input.store.ids().cloned().collect();
    let mut s = Session {
        truth: &input.truth,
        cfg,
        store: input.store.clone(),
        plan: input.floorplan.clone(),
        weights: RankerWeights::equal(engine.pipeline.enabled_rankers.iter().copied()),
        brands,
        to_truth: BTreeMap::new(),
        to_store: BTreeMap::new(),
        base: BTreeMap::new(),
        observations: BTreeMap::new(),
    };
    for id in &initial {
        if input.truth.index_of(id).is_some() {
            s.to_truth.insert(id.clone(), id.clone());
            s.to_store.insert(id.clone(), id.clone());
        }
    }
    let snap = engine.pipeline.snap_radius_m;
    let mut report = MetricsReport {
        checkins: trace.len(),
        ..MetricsReport::default()
    };
    let mut ranks = Vec::new();
    let mut distances = Vec::new();
    let mut per_ranker: BTreeMap<Ranker, (usize, usize, usize)> = BTreeMap::new();
    let mut gap_first: BTreeMap<VenueId, CheckInObservation> = BTreeMap::new();

    for rec in &trace.records {
        let obs = &rec.observation;
        if !rec.fake && !s.to_store.contains_key(&rec.actual_venue) {
            gap_first.entry(rec.actual_venue.clone()).or_insert_with(|| obs.clone());
        }
        let list = infer_venue(obs, &s.store, Some(&s.plan), &s.weights, s.engine())?;
        let actual_store = s.to_store.get(&rec.actual_venue).cloned();
        report.new_venue.add(actual_store.is_none(), list.new_venue);
        if let Some(a) = &actual_store {
            report.evaluated += 1;
            ranks.push(list.rank_of(a).map(|r| r + 1));
            for r in &engine.pipeline.enabled_rankers {
                let e = per_ranker.entry(*r).or_default();
                if let Some(order) = list.per_ranker.get(r) {
                    e.0 += 1;
                    match order.iter().position(|v| v == a) {
                        Some(0) => {
                            e.1 += 1;
                            e.2 += 1;
                        }
                        Some(i) if i < 5 => e.2 += 1,
                        _ => {}
                    }
                }
            }
            let actual_loc = truth_location(&input.truth, &rec.actual_venue);
            let top_loc = list
                .top()
                .and_then(|t| s.to_truth.get(t))
                .and_then(|t| truth_location(&input.truth, t));
            if let (Some(a), Some(t)) = (actual_loc, top_loc) {
                distances.push(s.plan.walking_distance(&t, &a, snap));
            }
        }

        let claimed = s.resolve_claim(&rec.claimed_venue, obs, &mut report.naming)?;
        let label = s.integrate(rec.checkin_id, &claimed, obs)?;
        // Only check-ins the detector accepts feed back into the weights.
        if cfg.feedback && label == Some(BindLabel::Correct) && list.rank_of(&claimed).is_some() {
            s.weights = update_weights(
                &s.weights,
                &list.per_ranker,
                &claimed,
                list.entries.len(),
                engine.pipeline.learning_rate,
            )?;
        }
    }

    report.top1 = ratio(ranks.iter().filter(|r| **r == Some(1)).count(), ranks.len());
    report.top5 = ratio(ranks.iter().filter(|r| r.is_some_and(|r| r <= 5)).count(), ranks.len());
    report.rank_cdf = rank_cdf(&ranks, RANK_CDF_DEPTH);
    report.distance_error_cdf = ecdf(&distances);
    report.median_distance_error_m = median(&distances);
    report.rankers = per_ranker
        .into_iter()
        .map(|(ranker, (votes, t1, t5))| RankerAccuracy {
            ranker,
            votes,
            top1: ratio(t1, ranks.len()),
            top5: ratio(t5, ranks.len()),
        })
        .collect();
    report.final_weights = s.weights.weights.clone();

    let fake_of: BTreeMap<u64, bool> = trace.records.iter().map(|r| (r.checkin_id, r.fake)).collect();
    report.fake_detection = detection_sweep(&s.store, Some(&s.plan), &fake_of, &cfg.sweeps.dstar_db, engine)?;
    report.labeling = vec![labeling_point(
        &s.store,
        &s.plan,
        &s.to_truth,
        &fake_of,
        cfg.noise.fake_checkin_prob,
    )?];
    let initial_brands = {
        let mut b = BrandIndex::from_names(&input.brands);
        b.add_store(&input.store);
        b
    };
    report.coverage = coverage_sweep(&input.truth, &gap_first, &initial_brands, &cfg.sweeps.max_edit, engine);

    Ok(ReplayOutput {
        report,
        store: s.store,
        floorplan: s.plan,
        weights: s.weights,
        to_truth: s.to_truth,
    })
}

/// Reclusters every venue's logged binds by RSS distance at each cut-off
/// and scores the labels against the known fake flags.
pub fn detection_sweep(
    store: &VenueStore,
    plan: Option<&Floorplan>,
    fake_of: &BTreeMap<u64, bool>,
    dstars: &[f64],
    engine: &Config,
) -> SimResult<Vec<DetectionPoint>> {
    let snap = engine.pipeline.snap_radius_m;
    let mut per_venue = Vec::new();
    for rec in store.venues() {
        if rec.checkin_log.is_empty() {
            continue;
        }
        let window = engine.integrity.window.max(1);
        let start = rec.checkin_log.len().saturating_sub(window);
        let binds: Vec<CheckInBind> = rec.checkin_log[start..].iter().map(|b| b.bind.clone()).collect();
        let neighbors = neighbor_centroids(store, plan, &rec.id, snap, &engine.integrity)?;
        per_venue.push((binds, neighbors));
    }
    let mut out = Vec::with_capacity(dstars.len());
    for &d in dstars {
        let mut icfg = engine.integrity.clone();
        icfg.metric = ClusterMetric::RssEuclideanDb;
        icfg.cutoff = d;
        let (mut tp, mut fakes, mut fa, mut honest) = (0, 0, 0, 0);
        for (binds, neighbors) in &per_venue {
            let res = classify_checkins(binds, neighbors, &icfg)?;
            for (id, label) in &res.labels {
                let flagged = *label == BindLabel::Fake;
                if fake_of.get(id).copied().unwrap_or(false) {
                    fakes += 1;
                    tp += usize::from(flagged);
                } else {
                    honest += 1;
                    fa += usize::from(flagged);
                }
            }
        }
        out.push(DetectionPoint {
            dstar: d,
            detection_prob: ratio(tp, fakes),
            false_alarm_prob: ratio(fa, honest),
            fakes,
            honest,
        });
    }
    Ok(out)
}

/// Labels fresh copies of `plan` from three location estimates per venue:
/// every logged bind, the binds the detector accepted, and the truly honest
/// binds. Venues without usable binds stay unlabeled.
pub fn labeling_point(
    store: &VenueStore,
    plan: &Floorplan,
    to_truth: &BTreeMap<VenueId, VenueId>,
    fake_of: &BTreeMap<u64, bool>,
    p_e: f64,
) -> SimResult<LabelingPoint> {
    let mut plans = [plan.clone(), plan.clone(), plan.clone()];
    for p in &mut plans {
        p.labels.clear();
    }
    for rec in store.venues() {
        let Some(t) = to_truth.get(&rec.id) else { continue };
        let floor = rec.claimed_location.floor;
        let sets: [Vec<Point>; 3] = [
            rec.checkin_log.iter().map(|b| b.bind.location.point).collect(),
            rec.checkin_log
                .iter()
                .filter(|b| b.label == Some(BindLabel::Correct))
                .map(|b| b.bind.location.point)
                .collect(),
            rec.checkin_log
                .iter()
                .filter(|b| !fake_of.get(&b.bind.checkin_id).copied().unwrap_or(false))
                .map(|b| b.bind.location.point)
                .collect(),
        ];
        for (points, p) in sets.iter().zip(plans.iter_mut()) {
            if let Ok(at) = estimate_venue_location(points) {
                label_floorplan(t, &Location { point: at, floor }, p)?;
            }
        }
    }
    let gt = &plan.ground_truth;
    Ok(LabelingPoint {
        fake_checkin_prob: p_e,
        unfiltered: labeling_accuracy(&plans[0], gt),
        detector: labeling_accuracy(&plans[1], gt),
        oracle: labeling_accuracy(&plans[2], gt),
    })
}

/// Names each uncovered venue from its first honest observation at every
/// edit budget. A prediction counts as correct when it matches the venue's
/// true name; any other prediction is a false positive.
pub fn coverage_sweep(
    truth: &GroundTruth,
    first_obs: &BTreeMap<VenueId, CheckInObservation>,
    brands: &BrandIndex,
    max_edits: &[usize],
    engine: &Config,
) -> Vec<CoveragePoint> {
    let weights = RankerWeights::equal(engine.pipeline.enabled_rankers.iter().copied());
    let logical: BTreeMap<&VenueId, Option<String>> = first_obs
        .iter()
        .map(|(v, obs)| {
            let name =
                predict_name_by_logical_fingerprint(obs, brands, &weights, engine.coverage.logical_threshold, engine);
            (v, name)
        })
        .collect();
    max_edits
        .iter()
        .map(|&me| {
            let (mut named, mut correct) = (0, 0);
            for (v, obs) in first_obs {
                let name = predict_name_by_ssid(obs, brands, me).or_else(|| logical[v].clone());
                if let Some(n) = name {
                    named += 1;
                    let truth_name = truth.venue(v).map(|t| t.name.as_str()).unwrap_or("");
                    correct += usize::from(same_name(&n, truth_name));
                }
            }
            let total = first_obs.len();
            CoveragePoint {
                max_edit: me,
                named: ratio(named, total),
                recall: ratio(correct, total),
                false_positive: ratio(named - correct, total),
                venues: total,
            }
        })
        .collect()
}
