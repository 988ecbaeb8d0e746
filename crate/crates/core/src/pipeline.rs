//! Online venue inference: filtering, per-feature ranking, rank fusion and
//! feedback-driven ranker weights.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{Aggregator, Config, MagneticMode};
use crate::error::{Error, Result};
use crate::fingerprint::{ocr_terms, ApFractions, WifiFingerprint, WifiScan};
use crate::floorplan::Floorplan;
use crate::observation::CheckInObservation;
use crate::similarity::{
    color_similarity, edit_distance, fraction_similarity, magnetic_distance, magnetic_spectrum_distance,
    mobility_similarity, ocr_overlap, sound_distance_at_hour, visterm_score, SimilarityScore,
};
use crate::store::{VenueRecord, VenueStore};
use crate::VenueId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranker {
    Wifi,
    Location,
    Sound,
    Image,
    Mobility,
    Color,
    Magnetic,
    Ssid,
    Ocr,
    Familiarity,
}

impl Ranker {
    pub const ALL: [Ranker; 10] = [
        Ranker::Wifi,
        Ranker::Location,
        Ranker::Sound,
        Ranker::Image,
        Ranker::Mobility,
        Ranker::Color,
        Ranker::Magnetic,
        Ranker::Ssid,
        Ranker::Ocr,
        Ranker::Familiarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ranker::Wifi => "wifi",
            Ranker::Location => "location",
            Ranker::Sound => "sound",
            Ranker::Image => "image",
            Ranker::Mobility => "mobility",
            Ranker::Color => "color",
            Ranker::Magnetic => "magnetic",
            Ranker::Ssid => "ssid",
            Ranker::Ocr => "ocr",
            Ranker::Familiarity => "familiarity",
        }
    }
}

impl fmt::Display for Ranker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerWeights {
    pub weights: BTreeMap<Ranker, f64>,
}

impl RankerWeights {
    /// Equal weights over `rankers`.
    pub fn equal(rankers: impl IntoIterator<Item = Ranker>) -> Self {
        let set: BTreeSet<Ranker> = rankers.into_iter().collect();
        let w = 1.0 / set.len().max(1) as f64;
        RankerWeights {
            weights: set.into_iter().map(|r| (r, w)).collect(),
        }
    }

    pub fn get(&self, r: Ranker) -> f64 {
        self.weights.get(&r).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Weights of the participating rankers, rescaled to sum to 1. Falls
    /// back to equal weights when the participants carry no weight.
    pub fn renormalized(&self, participants: impl IntoIterator<Item = Ranker>) -> BTreeMap<Ranker, f64> {
        let parts: BTreeSet<Ranker> = participants.into_iter().collect();
        let mass: f64 = parts.iter().map(|r| self.get(*r)).sum();
        parts
            .iter()
            .map(|&r| {
                let w = if mass > 0.0 {
                    self.get(r) / mass
                } else {
                    1.0 / parts.len() as f64
                };
                (r, w)
            })
            .collect()
    }
}

/// One ranker's verdict over the candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerOutput {
    /// Best first; candidates without data for this ranker trail, by id.
    pub order: Vec<VenueId>,
    /// Raw kernel scores of the candidates that have data.
    pub scores: BTreeMap<VenueId, SimilarityScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RankedList {
    /// Sorted by descending score.
    pub entries: Vec<(VenueId, f64)>,
    pub per_ranker: BTreeMap<Ranker, Vec<VenueId>>,
    pub weights_used: BTreeMap<Ranker, f64>,
    /// Set when the observation matches no known venue well enough.
    #[serde(default)]
    pub new_venue: bool,
}

impl RankedList {
    pub fn top(&self) -> Option<&VenueId> {
        self.entries.first().map(|(v, _)| v)
    }

    /// 0-based rank of `venue`.
    pub fn rank_of(&self, venue: &VenueId) -> Option<usize> {
        self.entries.iter().position(|(v, _)| v == venue)
    }
}

/// True iff consecutive scans stay at or above `threshold` WiFi similarity
/// over a contiguous span of at least `min_duration` seconds.
pub fn detect_fixed_venue(window: &[WifiScan], threshold: f64, min_duration: f64) -> bool {
    if window.len() < 2 {
        return false;
    }
    let single = |s: &WifiScan| WifiFingerprint::from_scans(std::slice::from_ref(s)).ok();
    let mut start = 0;
    let mut prev = single(&window[0]);
    for i in 1..window.len() {
        let cur = single(&window[i]);
        let stable = match (&prev, &cur) {
            (Some(a), Some(b)) => fraction_similarity(a, b) >= threshold,
            _ => false,
        };
        if stable {
            if window[i].timestamp - window[start].timestamp >= min_duration {
                return true;
            }
        } else {
            start = i;
        }
        prev = cur;
    }
    false
}

/// True iff no candidate reaches `threshold` WiFi similarity.
pub fn is_new_venue<'a, F: ApFractions>(
    obs_wifi: &F,
    candidates: impl IntoIterator<Item = &'a VenueRecord>,
    threshold: f64,
) -> bool {
    candidates
        .into_iter()
        .map(|c| fraction_similarity(obs_wifi, &c.fingerprint.wifi))
        .fold(f64::NEG_INFINITY, f64::max)
        < threshold
}

#[derive(PartialEq)]
struct Ranked(f64, VenueId);

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then_with(|| self.1.cmp(&other.1))
    }
}

/// The `n` venues nearest to the observation by walking distance, ties by
/// id. Without a floorplan, Euclidean distance is used.
pub fn filter_by_location(
    obs: &CheckInObservation,
    store: &VenueStore,
    plan: Option<&Floorplan>,
    n: usize,
    snap_radius: f64,
) -> Vec<(VenueId, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let field = plan.map(|p| p.distance_field(&obs.location, snap_radius));
    // Max-heap of the best n so far.
    let mut best: BinaryHeap<Ranked> = BinaryHeap::new();
    for (id, euclid) in store.nearest_iter(obs.location.point) {
        if best.len() >= n && euclid > best.peek().map_or(f64::INFINITY, |r| r.0) {
            break;
        }
        let rec = &store.get_venue(id).expect("indexed venue exists");
        let d = match &field {
            Some(f) => f.distance_to(&rec.location()),
            None => euclid,
        };
        best.push(Ranked(d, id.clone()));
        if best.len() > n {
            best.pop();
        }
    }
    best.into_sorted_vec()
        .into_iter()
        .map(|Ranked(d, id)| (id, d))
        .collect()
}

/// The `n` venues with the highest WiFi similarity, ties by id.
pub fn filter_by_wifi<F: ApFractions>(obs_wifi: &F, store: &VenueStore, n: usize) -> Vec<(VenueId, f64)> {
    let mut all: Vec<(VenueId, f64)> = store
        .venues()
        .map(|v| (v.id.clone(), fraction_similarity(obs_wifi, &v.fingerprint.wifi)))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(n);
    all
}

/// Union of both filters, location filter first, duplicates dropped.
pub fn build_candidates(
    obs: &CheckInObservation,
    obs_wifi: &WifiFingerprint,
    store: &VenueStore,
    plan: Option<&Floorplan>,
    cfg: &Config,
) -> Vec<VenueId> {
    let n = cfg.pipeline.filter_size;
    let mut seen = BTreeSet::new();
    filter_by_location(obs, store, plan, n, cfg.pipeline.snap_radius_m)
        .into_iter()
        .chain(filter_by_wifi(obs_wifi, store, n))
        .filter_map(|(id, _)| seen.insert(id.clone()).then_some(id))
        .collect()
}

fn venue_terms(rec: &VenueRecord, stop_words: &[String]) -> BTreeSet<String> {
    let mut terms = ocr_terms(rec.tips.iter().flat_map(|t| t.split_whitespace()), stop_words);
    terms.extend(rec.fingerprint.text.ocr_terms.iter().cloned());
    terms
}

fn ranker_score(
    ranker: Ranker,
    obs: &CheckInObservation,
    obs_wifi: &WifiFingerprint,
    rec: &VenueRecord,
    store: &VenueStore,
    field: Option<&crate::floorplan::DistanceField<'_>>,
    cfg: &Config,
) -> Result<Option<SimilarityScore>> {
    let sim = &cfg.similarity;
    let fp = &rec.fingerprint;
    Ok(match ranker {
        Ranker::Wifi => Some(SimilarityScore::similarity(fraction_similarity(obs_wifi, &fp.wifi))),
        Ranker::Location => {
            let d = match field {
                Some(f) => f.distance_to(&rec.location()),
                None => obs.location.point.distance(&rec.location().point),
            };
            Some(SimilarityScore::distance(d))
        }
        Ranker::Sound => match &obs.sound {
            Some(s) => sound_distance_at_hour(s, &fp.sound)?,
            None => None,
        },
        Ranker::Image => store
            .image_index()
            .has_images(&rec.id)
            .then(|| visterm_score(&obs.text.visterms, &rec.id, store.image_index())),
        Ranker::Mobility => mobility_similarity(&obs.mobility, &fp.mobility, sim.mobility_smoothing),
        Ranker::Color => match (&obs.color, &fp.color) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => Some(color_similarity(a, b, sim.delta_min)?),
            _ => None,
        },
        Ranker::Magnetic => match (&obs.magnetic, &fp.magnetic) {
            (Some(a), Some(b)) => Some(match sim.magnetic_mode {
                MagneticMode::Summary => magnetic_distance(a, b),
                MagneticMode::Spectrum => magnetic_spectrum_distance(a, b),
            }),
            _ => None,
        },
        Ranker::Ssid => match &obs.text.ssid_strongest {
            Some(ssid) if !rec.stub => {
                let total: usize = rec.names.iter().map(|n| edit_distance(ssid, n)).sum();
                Some(SimilarityScore::distance(total as f64 / rec.names.len() as f64))
            }
            _ => None,
        },
        Ranker::Ocr => {
            let terms = venue_terms(rec, &cfg.fingerprint.stop_words);
            (!terms.is_empty()).then(|| ocr_overlap(&obs.text.ocr_terms, &terms))
        }
        Ranker::Familiarity => Some(store.familiarity_score(&obs.user, &rec.id, sim.familiarity_brand_weight)?),
    })
}

fn observes(ranker: Ranker, obs: &CheckInObservation) -> bool {
    match ranker {
        Ranker::Wifi | Ranker::Location | Ranker::Mobility | Ranker::Familiarity => true,
        Ranker::Sound => obs.sound.is_some(),
        Ranker::Image => !obs.text.visterms.is_empty(),
        Ranker::Color => obs.color.as_ref().is_some_and(|c| !c.is_empty()),
        Ranker::Magnetic => obs.magnetic.is_some(),
        Ranker::Ssid => obs.text.ssid_strongest.is_some(),
        Ranker::Ocr => !obs.text.ocr_terms.is_empty(),
    }
}

/// Aggregate scores are rounded to this grid before ordering, so that
/// float noise cannot split ties that are exact in real arithmetic.
const SCORE_GRID: f64 = 1e9;

fn snap(score: f64) -> f64 {
    (score * SCORE_GRID).round() / SCORE_GRID
}

/// Orders venue ids by descending `score`, then descending `tiebreak`
/// (missing counts as lowest), then id.
fn sort_with_tiebreak(items: &mut [(VenueId, f64)], tiebreak: &BTreeMap<VenueId, f64>) {
    let tb = |v: &VenueId| tiebreak.get(v).copied().unwrap_or(f64::NEG_INFINITY);
    items.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| tb(&b.0).total_cmp(&tb(&a.0)))
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// Runs every enabled ranker over `candidates`. A ranker abstains when the
/// observation lacks its modality, when no candidate has data for it, or
/// when it cannot tell two or more candidates apart.
pub fn rank_all(
    obs: &CheckInObservation,
    candidates: &[VenueId],
    store: &VenueStore,
    plan: Option<&Floorplan>,
    cfg: &Config,
) -> Result<BTreeMap<Ranker, RankerOutput>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let obs_wifi = obs.wifi_fingerprint()?;
    let records: Vec<&VenueRecord> = candidates.iter().map(|id| store.get_venue(id)).collect::<Result<_>>()?;
    let field = plan.map(|p| p.distance_field(&obs.location, cfg.pipeline.snap_radius_m));
    let wifi_scores: BTreeMap<VenueId, f64> = records
        .iter()
        .map(|r| (r.id.clone(), fraction_similarity(&obs_wifi, &r.fingerprint.wifi)))
        .collect();

    let mut out = BTreeMap::new();
    for &ranker in &cfg.pipeline.enabled_rankers {
        if !observes(ranker, obs) {
            continue;
        }
        let mut scores = BTreeMap::new();
        let mut missing = Vec::new();
        for rec in &records {
            match ranker_score(ranker, obs, &obs_wifi, rec, store, field.as_ref(), cfg)? {
                Some(s) if s.value.is_finite() || s.goodness() == f64::NEG_INFINITY => {
                    scores.insert(rec.id.clone(), s);
                }
                _ => missing.push(rec.id.clone()),
            }
        }
        let mut goods: Vec<(VenueId, f64)> = scores.iter().map(|(v, s)| (v.clone(), s.goodness())).collect();
        let informative = match goods.first() {
            None => false,
            Some((_, g0)) => records.len() == 1 || goods.iter().any(|(_, g)| g != g0) || !missing.is_empty(),
        };
        if !informative {
            continue;
        }
        sort_with_tiebreak(&mut goods, &wifi_scores);
        missing.sort();
        let order = goods.into_iter().map(|(v, _)| v).chain(missing).collect();
        out.insert(ranker, RankerOutput { order, scores });
    }
    Ok(out)
}

fn candidate_set(lists: &BTreeMap<Ranker, Vec<VenueId>>) -> Result<BTreeSet<VenueId>> {
    let mut iter = lists.values();
    let first = iter.next().ok_or(Error::EmptyCandidates)?;
    let set: BTreeSet<VenueId> = first.iter().cloned().collect();
    if set.len() != first.len() {
        return Err(Error::CandidateMismatch);
    }
    for l in iter {
        if l.len() != set.len() || l.iter().any(|v| !set.contains(v)) {
            return Err(Error::CandidateMismatch);
        }
    }
    Ok(set)
}

/// Weighted Borda count. A venue at 0-based rank `i` in a list over `m`
/// venues earns `m - 1 - i` points times the ranker's weight, renormalized
/// over the rankers present. Ties fall to `tiebreak` (WiFi scores), then id.
pub fn aggregate_borda(
    lists: &BTreeMap<Ranker, Vec<VenueId>>,
    weights: &RankerWeights,
    tiebreak: &BTreeMap<VenueId, f64>,
) -> Result<RankedList> {
    let set = candidate_set(lists)?;
    let m = set.len();
    let used = weights.renormalized(lists.keys().copied());
    let mut score: BTreeMap<VenueId, f64> = set.into_iter().map(|v| (v, 0.0)).collect();
    for (r, list) in lists {
        let w = used[r];
        for (i, v) in list.iter().enumerate() {
            *score.get_mut(v).expect("validated") += w * (m - 1 - i) as f64;
        }
    }
    let mut entries: Vec<(VenueId, f64)> = score.into_iter().map(|(v, s)| (v, snap(s))).collect();
    sort_with_tiebreak(&mut entries, tiebreak);
    Ok(RankedList {
        entries,
        per_ranker: lists.clone(),
        weights_used: used,
        new_venue: false,
    })
}

/// Min-max normalizes one ranker's scores to `[0, 1]`, larger is better.
/// All-equal scores normalize to 0.
pub fn normalize_scores(scores: &BTreeMap<VenueId, SimilarityScore>) -> BTreeMap<VenueId, f64> {
    let goods = scores.values().map(SimilarityScore::goodness).filter(|g| g.is_finite());
    let (lo, hi) = goods.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)));
    scores
        .iter()
        .map(|(v, s)| {
            let g = s.goodness();
            let n = if hi <= lo || !g.is_finite() {
                0.0
            } else {
                (g - lo) / (hi - lo)
            };
            (v.clone(), n)
        })
        .collect()
}

/// Weighted CombSUM over min-max normalized scores; a venue a ranker has no
/// score for contributes 0 there.
pub fn aggregate_combsum(
    score_lists: &BTreeMap<Ranker, BTreeMap<VenueId, SimilarityScore>>,
    candidates: &[VenueId],
    weights: &RankerWeights,
    tiebreak: &BTreeMap<VenueId, f64>,
) -> Result<RankedList> {
    if candidates.is_empty() || score_lists.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let set: BTreeSet<&VenueId> = candidates.iter().collect();
    if score_lists.values().flat_map(|s| s.keys()).any(|v| !set.contains(v)) {
        return Err(Error::CandidateMismatch);
    }
    let used = weights.renormalized(score_lists.keys().copied());
    let mut total: BTreeMap<VenueId, f64> = candidates.iter().map(|v| (v.clone(), 0.0)).collect();
    let mut per_ranker = BTreeMap::new();
    for (r, scores) in score_lists {
        let norm = normalize_scores(scores);
        for (v, n) in &norm {
            *total.get_mut(v).expect("validated") += used[r] * n;
        }
        let mut order: Vec<(VenueId, f64)> = candidates
            .iter()
            .map(|v| (v.clone(), norm.get(v).copied().unwrap_or(f64::NEG_INFINITY)))
            .collect();
        sort_with_tiebreak(&mut order, tiebreak);
        per_ranker.insert(*r, order.into_iter().map(|(v, _)| v).collect());
    }
    let mut entries: Vec<(VenueId, f64)> = total.into_iter().map(|(v, s)| (v, snap(s))).collect();
    sort_with_tiebreak(&mut entries, tiebreak);
    Ok(RankedList {
        entries,
        per_ranker,
        weights_used: used,
        new_venue: false,
    })
}

/// Feedback update once the actual venue is confirmed.
///
/// Each participating ranker scores `l - i`, `i` the actual venue's 0-based
/// rank in its list (`l` when absent). Scores are normalized to the
/// participants' current weight mass and blended in with rate `alpha`, so
/// the weights keep summing to 1. Rankers that did not vote keep their
/// weight; if every score is 0 nothing changes.
pub fn update_weights(
    weights: &RankerWeights,
    per_ranker: &BTreeMap<Ranker, Vec<VenueId>>,
    actual: &VenueId,
    l: usize,
    alpha: f64,
) -> Result<RankerWeights> {
    if l == 0 {
        return Err(Error::invalid("candidate count must be positive"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("learning rate must lie in [0, 1]"));
    }
    let raw: BTreeMap<Ranker, f64> = per_ranker
        .iter()
        .filter(|(r, _)| weights.weights.contains_key(r))
        .map(|(r, list)| {
            let i = list.iter().position(|v| v == actual).unwrap_or(l).min(l);
            (*r, (l - i) as f64)
        })
        .collect();
    let sum: f64 = raw.values().sum();
    if sum <= 0.0 {
        return Ok(weights.clone());
    }
    let mass: f64 = raw.keys().map(|r| weights.get(*r)).sum();
    let mut next = weights.clone();
    for (r, s) in &raw {
        let w = next.weights.get_mut(r).expect("filtered");
        *w = (1.0 - alpha) * *w + alpha * mass * s / sum;
    }
    // Guard against drift.
    let total = next.total();
    if total > 0.0 {
        for w in next.weights.values_mut() {
            *w /= total;
        }
    }
    Ok(next)
}

/// End-to-end inference for one observation. Observations that match no
/// known venue return an empty list with `new_venue` set.
pub fn infer_venue(
    obs: &CheckInObservation,
    store: &VenueStore,
    plan: Option<&Floorplan>,
    weights: &RankerWeights,
    cfg: &Config,
) -> Result<RankedList> {
    obs.validate()?;
    let obs_wifi = obs.wifi_fingerprint()?;
    let candidates = build_candidates(obs, &obs_wifi, store, plan, cfg);
    let recs: Vec<&VenueRecord> = candidates.iter().map(|id| store.get_venue(id)).collect::<Result<_>>()?;
    if is_new_venue(&obs_wifi, recs.iter().copied(), cfg.pipeline.new_venue_threshold) {
        return Ok(RankedList {
            new_venue: true,
            ..RankedList::default()
        });
    }
    let outputs = rank_all(obs, &candidates, store, plan, cfg)?;
    let tiebreak: BTreeMap<VenueId, f64> = recs
        .iter()
        .map(|r| (r.id.clone(), fraction_similarity(&obs_wifi, &r.fingerprint.wifi)))
        .collect();
    if outputs.is_empty() {
        // Every ranker abstained: fall back to the WiFi order.
        let mut entries: Vec<(VenueId, f64)> = tiebreak.iter().map(|(v, s)| (v.clone(), *s)).collect();
        sort_with_tiebreak(&mut entries, &tiebreak);
        return Ok(RankedList {
            entries,
            ..RankedList::default()
        });
    }
    match cfg.pipeline.aggregator {
        Aggregator::Borda => {
            let lists = outputs.iter().map(|(r, o)| (*r, o.order.clone())).collect();
            aggregate_borda(&lists, weights, &tiebreak)
        }
        Aggregator::CombSum => {
            let scores = outputs.iter().map(|(r, o)| (*r, o.scores.clone())).collect();
            let mut list = aggregate_combsum(&scores, &candidates, weights, &tiebreak)?;
            list.per_ranker = outputs.into_iter().map(|(r, o)| (r, o.order)).collect();
            Ok(list)
        }
    }
}
