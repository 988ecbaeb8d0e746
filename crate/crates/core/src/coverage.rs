//! Naming venues missing from the external database, and deduplicating
//! the names it already has.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Config, FingerprintConfig};
use crate::error::{Error, Result};
use crate::fingerprint::{ColorLightFingerprint, MobilityFingerprint, SoundFingerprint, VenueFingerprint};
use crate::observation::CheckInObservation;
use crate::pipeline::{Ranker, RankerWeights};
use crate::similarity::{color_similarity, edit_distance, mobility_similarity, sound_distance};
use crate::store::{Subcategory, VenueRecord, VenueStore};
use crate::VenueId;

/// Placeholder name of venues created without a prediction.
pub const UNNAMED_VENUE: &str = "unnamed venue";

/// The location-independent part of a venue fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalFingerprint {
    pub mobility: MobilityFingerprint,
    pub sound: SoundFingerprint,
    pub color: Option<ColorLightFingerprint>,
    pub ocr_terms: BTreeSet<String>,
    pub visterms: BTreeMap<String, u32>,
}

impl From<&VenueFingerprint> for LogicalFingerprint {
    fn from(fp: &VenueFingerprint) -> Self {
        LogicalFingerprint {
            mobility: fp.mobility.clone(),
            sound: fp.sound.clone(),
            color: fp.color.clone(),
            ocr_terms: fp.text.ocr_terms.clone(),
            visterms: fp.text.visterms.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrandEntry {
    pub venue: VenueId,
    pub mall_id: String,
    pub category: Option<Subcategory>,
    pub logical: LogicalFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Brand {
    /// Name as first listed.
    pub name: String,
    pub entries: Vec<BrandEntry>,
}

/// Brands keyed by case-folded name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BrandIndex {
    pub brands: BTreeMap<String, Brand>,
}

fn fold(name: &str) -> String {
    name.trim().to_lowercase()
}

impl BrandIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Self {
        let mut idx = Self::new();
        for n in names {
            idx.add_brand(n.as_ref());
        }
        idx
    }

    /// Parses a brand list: one name per line, blank lines ignored.
    pub fn parse_list(text: &str) -> Self {
        Self::from_names(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn load_list(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse_list(&text))
    }

    /// Registers a brand name; returns its key. Empty names are ignored.
    pub fn add_brand(&mut self, name: &str) -> Option<String> {
        let key = fold(name);
        if key.is_empty() {
            return None;
        }
        self.brands.entry(key.clone()).or_insert_with(|| Brand {
            name: name.trim().to_string(),
            entries: Vec::new(),
        });
        Some(key)
    }

    /// Records every branded venue of `store` as a brand entry.
    pub fn add_store(&mut self, store: &VenueStore) {
        for rec in store.venues() {
            if let Some(b) = &rec.brand {
                if let Some(key) = self.add_brand(b) {
                    self.brands.get_mut(&key).expect("just added").entries.push(BrandEntry {
                        venue: rec.id.clone(),
                        mall_id: rec.mall_id.clone(),
                        category: rec.category,
                        logical: LogicalFingerprint::from(&rec.fingerprint),
                    });
                }
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Brand> {
        self.brands.get(&fold(name))
    }

    pub fn len(&self) -> usize {
        self.brands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.brands.is_empty()
    }

    /// Brand closest to `name` by edit distance, if unique and within
    /// `max_edit`.
    pub fn closest(&self, name: &str, max_edit: usize) -> Option<&Brand> {
        let mut best: Option<(usize, &Brand)> = None;
        let mut tied = false;
        for brand in self.brands.values() {
            let d = edit_distance(name, &brand.name);
            match best {
                Some((b, _)) if d > b => {}
                Some((b, _)) if d == b => tied = true,
                _ => {
                    best = Some((d, brand));
                    tied = false;
                }
            }
        }
        match best {
            Some((d, brand)) if !tied && d <= max_edit => Some(brand),
            _ => None,
        }
    }
}

/// Brand with the lowest edit distance to the strongest SSID, if unique and
/// within `max_edit`.
pub fn predict_name_by_ssid(obs: &CheckInObservation, brands: &BrandIndex, max_edit: usize) -> Option<String> {
    let ssid = obs.text.ssid_strongest.as_deref()?;
    brands.closest(ssid, max_edit).map(|b| b.name.clone())
}

/// Per-kernel logical similarities of an observation to a brand entry,
/// each in `[0, 1]`. Kernels lacking data on either side are absent.
pub fn logical_similarities(
    obs: &CheckInObservation,
    entry: &LogicalFingerprint,
    smoothing: f64,
    delta_min: f64,
) -> BTreeMap<Ranker, f64> {
    let mut out = BTreeMap::new();
    if let Some(m) = mobility_similarity(&obs.mobility, &entry.mobility, smoothing) {
        let max = entry.mobility.max_probability(smoothing.max(0.0));
        if max > 0.0 {
            out.insert(Ranker::Mobility, (m.value / max).clamp(0.0, 1.0));
        }
    }
    if let Some(s) = &obs.sound {
        if let Some(v) = entry.sound.vector(s.hour) {
            if let Ok(d) = sound_distance(&s.vector, v) {
                out.insert(
                    Ranker::Sound,
                    (1.0 - d.value / std::f64::consts::SQRT_2).clamp(0.0, 1.0),
                );
            }
        }
    }
    if let (Some(a), Some(b)) = (&obs.color, &entry.color) {
        let sim = |x, y| color_similarity(x, y, delta_min).map(|s| s.value);
        if let (Ok(ab), Ok(aa), Ok(bb)) = (sim(a, b), sim(a, a), sim(b, b)) {
            if aa > 0.0 && bb > 0.0 {
                out.insert(Ranker::Color, (ab / (aa * bb).sqrt()).clamp(0.0, 1.0));
            }
        }
    }
    if !obs.text.ocr_terms.is_empty() && !entry.ocr_terms.is_empty() {
        let hits = obs.text.ocr_terms.intersection(&entry.ocr_terms).count();
        out.insert(Ranker::Ocr, hits as f64 / obs.text.ocr_terms.len() as f64);
    }
    let query: BTreeSet<&String> = obs
        .text
        .visterms
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(t, _)| t)
        .collect();
    if !query.is_empty() && !entry.visterms.is_empty() {
        let hits = query
            .iter()
            .filter(|t| entry.visterms.get(t.as_str()).is_some_and(|&c| c > 0))
            .count();
        out.insert(Ranker::Image, hits as f64 / query.len() as f64);
    }
    out
}

/// Weighted mean of the logical similarities, weights renormalized over
/// the kernels present; `None` when no kernel applies.
pub fn logical_score(sims: &BTreeMap<Ranker, f64>, weights: &RankerWeights) -> Option<f64> {
    if sims.is_empty() {
        return None;
    }
    let w = weights.renormalized(sims.keys().copied());
    Some(sims.iter().map(|(r, s)| w[r] * s).sum())
}

/// Brand whose best entry matches the observation's logical fingerprint,
/// if its score reaches `tau` and no other brand ties it.
pub fn predict_name_by_logical_fingerprint(
    obs: &CheckInObservation,
    brands: &BrandIndex,
    weights: &RankerWeights,
    tau: f64,
    cfg: &Config,
) -> Option<String> {
    let mut best: Option<(f64, &Brand)> = None;
    let mut tied = false;
    for brand in brands.brands.values() {
        let score = brand
            .entries
            .iter()
            .filter_map(|e| {
                let sims = logical_similarities(
                    obs,
                    &e.logical,
                    cfg.similarity.mobility_smoothing,
                    cfg.similarity.delta_min,
                );
                logical_score(&sims, weights)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if score == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some((b, _)) if score < b => {}
            Some((b, _)) if score == b => tied = true,
            _ => {
                best = Some((score, brand));
                tied = false;
            }
        }
    }
    match best {
        Some((s, brand)) if !tied && s >= tau => Some(brand.name.clone()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DedupReport {
    /// (venue, old canonical name, brand name)
    pub renamed: Vec<(VenueId, String, String)>,
    /// (canonical venue, absorbed venue)
    pub merged: Vec<(VenueId, VenueId)>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Snaps venue names to brand names within `brand_snap_edit`, then merges
/// unbranded venues of the same mall whose names lie within
/// `dup_cluster_edit` of each other (transitively). The lowest id of each
/// group survives and gains the others' names as aliases.
pub fn dedup_venues(
    store: &mut VenueStore,
    brands: &BrandIndex,
    brand_snap_edit: usize,
    dup_cluster_edit: usize,
    fp_cfg: &FingerprintConfig,
) -> Result<DedupReport> {
    let mut report = DedupReport::default();
    let ids: Vec<VenueId> = store.ids().cloned().collect();
    for id in &ids {
        let rec = store.get_venue(id)?;
        if rec.stub {
            continue;
        }
        let Some(brand) = brands.closest(rec.canonical_name(), brand_snap_edit) else {
            continue;
        };
        let old = rec.canonical_name().to_string();
        let needs_rename = old != brand.name;
        let needs_link = rec.brand.as_deref() != Some(brand.name.as_str());
        if !needs_rename && !needs_link {
            continue;
        }
        let name = brand.name.clone();
        store.update_venue(id, |r| {
            if needs_rename {
                r.names.retain(|n| *n != name);
                r.names.insert(0, name.clone());
            }
            r.brand = Some(name.clone());
        })?;
        if needs_rename {
            report.renamed.push((id.clone(), old, brand.name.clone()));
        }
    }

    let pool: Vec<(VenueId, String, String)> = store
        .venues()
        .filter(|r| r.brand.is_none() && !r.stub)
        .map(|r| (r.id.clone(), r.mall_id.clone(), r.canonical_name().to_string()))
        .collect();
    let mut parent: Vec<usize> = (0..pool.len()).collect();
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            if pool[i].1 == pool[j].1 && edit_distance(&pool[i].2, &pool[j].2) <= dup_cluster_edit {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // Pool is id-ordered, so each root is its group's lowest id.
    for j in 0..pool.len() {
        let root = find(&mut parent, j);
        if root == j {
            continue;
        }
        let absorbed = store.remove_venue(&pool[j].0)?;
        let canonical = pool[root].0.clone();
        let mut failure = None;
        store.update_venue(&canonical, |r| {
            for n in &absorbed.names {
                if !r.names.contains(n) {
                    r.names.push(n.clone());
                }
            }
            if let Err(e) = r.fingerprint.absorb(&absorbed.fingerprint, fp_cfg) {
                failure = Some(e);
            }
            r.tips.extend(absorbed.tips.iter().cloned());
            r.image_corpus.extend(absorbed.image_corpus.iter().cloned());
            r.checkin_log.extend(absorbed.checkin_log.iter().cloned());
            if r.category.is_none() {
                r.category = absorbed.category;
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        report.merged.push((canonical, absorbed.id));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedBy {
    Ssid,
    LogicalFingerprint,
    /// Unnamed stub awaiting manual naming.
    Nobody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageOutcome {
    pub record: VenueRecord,
    pub named_by: NamedBy,
}

/// Creates and stores a venue for an observation flagged new: named by SSID
/// if possible, else by logical fingerprint, else an unnamed stub.
pub fn extend_coverage(
    obs: &CheckInObservation,
    store: &mut VenueStore,
    brands: &BrandIndex,
    weights: &RankerWeights,
    cfg: &Config,
) -> Result<CoverageOutcome> {
    obs.validate()?;
    let (name, named_by) = match predict_name_by_ssid(obs, brands, cfg.coverage.max_edit) {
        Some(n) => (Some(n), NamedBy::Ssid),
        None => match predict_name_by_logical_fingerprint(obs, brands, weights, cfg.coverage.logical_threshold, cfg) {
            Some(n) => (Some(n), NamedBy::LogicalFingerprint),
            None => (None, NamedBy::Nobody),
        },
    };
    let category = name
        .as_deref()
        .and_then(|n| brands.get(n))
        .and_then(|b| b.entries.iter().find_map(|e| e.category));
    let record = VenueRecord {
        id: store.allocate_id(),
        names: vec![name.clone().unwrap_or_else(|| UNNAMED_VENUE.to_string())],
        brand: name.clone(),
        category,
        mall_id: store.mall_id().to_string(),
        claimed_location: obs.location,
        estimated_location: None,
        fingerprint: VenueFingerprint::from_observation(obs, &cfg.fingerprint)?,
        tips: Vec::new(),
        image_corpus: Vec::new(),
        checkin_log: Vec::new(),
        stub: name.is_none(),
    };
    store.upsert_venue(record.clone())?;
    Ok(CoverageOutcome { record, named_by })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::tests::obs;
    use crate::fingerprint::{ColorCluster, MobilityObservation};

    fn with_ssid(ssid: Option<&str>) -> CheckInObservation {
        let mut o = obs(&["a", "b"]);
        o.text.ssid_strongest = ssid.map(str::to_string);
        o
    }

    fn record(id: &str, name: &str, brand: Option<&str>) -> VenueRecord {
        VenueRecord {
            id: VenueId::new(id),
            names: vec![name.to_string()],
            brand: brand.map(str::to_string),
            category: None,
            mall_id: "m".into(),
            claimed_location: Default::default(),
            estimated_location: None,
            fingerprint: VenueFingerprint::empty(&FingerprintConfig::default()),
            tips: vec![],
            image_corpus: vec![],
            checkin_log: vec![],
            stub: false,
        }
    }

    #[test]
    fn ssid_prediction() {
        let brands = BrandIndex::parse_list("Starbucks\n\nZara\n");
        assert_eq!(brands.len(), 2);
        assert_eq!(
            predict_name_by_ssid(&with_ssid(Some("Starbuks")), &brands, 2).as_deref(),
            Some("Starbucks")
        );
        assert_eq!(predict_name_by_ssid(&with_ssid(Some("Starbuks")), &brands, 0), None);
        assert_eq!(predict_name_by_ssid(&with_ssid(None), &brands, 2), None);
        assert_eq!(
            predict_name_by_ssid(&with_ssid(Some("Starbuks")), &BrandIndex::new(), 2),
            None
        );
    }

    #[test]
    fn ssid_ties_yield_nothing() {
        let brands = BrandIndex::from_names(["Gap", "Gas"]);
        assert_eq!(predict_name_by_ssid(&with_ssid(Some("Ga")), &brands, 2), None);
    }

    fn logical_obs() -> CheckInObservation {
        let mut o = obs(&["a"]);
        o.mobility = MobilityObservation {
            visit_period: crate::fingerprint::VisitPeriod::EarlyAfternoon,
            activity: crate::fingerprint::Activity::Browsing,
            duration_bucket: 1,
        };
        o.text.ocr_terms = ["latte", "mocha"].iter().map(|s| s.to_string()).collect();
        o.color = Some(ColorLightFingerprint {
            clusters: vec![ColorCluster {
                centroid: [0.1, 0.5, 0.5],
                size: 10,
            }],
            total_pixels: 10,
        });
        o
    }

    #[test]
    fn logical_prediction() {
        let cfg = Config::default();
        let target = logical_obs();
        let mut other = logical_obs();
        other.text.ocr_terms = ["jeans"].iter().map(|s| s.to_string()).collect();
        other.color = Some(ColorLightFingerprint {
            clusters: vec![ColorCluster {
                centroid: [0.9, 0.1, 0.9],
                size: 10,
            }],
            total_pixels: 10,
        });
        other.mobility.visit_period = crate::fingerprint::VisitPeriod::EarlyMorning;
        other.mobility.activity = crate::fingerprint::Activity::Walking;
        let mut brands = BrandIndex::new();
        for (name, o) in [("Cafe Uno", &target), ("Denim Co", &other)] {
            let key = brands.add_brand(name).unwrap();
            brands.brands.get_mut(&key).unwrap().entries.push(BrandEntry {
                venue: VenueId::new(name),
                mall_id: "ref".into(),
                category: None,
                logical: LogicalFingerprint::from(&VenueFingerprint::from_observation(o, &cfg.fingerprint).unwrap()),
            });
        }
        let w = RankerWeights::equal(Ranker::ALL);
        assert_eq!(
            predict_name_by_logical_fingerprint(&target, &brands, &w, 0.6, &cfg).as_deref(),
            Some("Cafe Uno")
        );
        assert_eq!(
            predict_name_by_logical_fingerprint(&target, &brands, &w, 1.01, &cfg),
            None
        );
        assert_eq!(
            predict_name_by_logical_fingerprint(&target, &BrandIndex::new(), &w, 0.0, &cfg),
            None
        );
    }

    #[test]
    fn dedup_snaps_and_merges() {
        let mut store = VenueStore::new("m");
        store.upsert_venue(record("m-1", "McDonald's", None)).unwrap();
        store.upsert_venue(record("m-2", "Cafe Roma", None)).unwrap();
        store.upsert_venue(record("m-3", "Caffe Roma", None)).unwrap();
        store.upsert_venue(record("m-4", "Electronics Palace", None)).unwrap();
        let brands = BrandIndex::from_names(["McDonalds"]);
        let cfg = FingerprintConfig::default();
        let report = dedup_venues(&mut store, &brands, 2, 2, &cfg).unwrap();
        assert_eq!(
            report.renamed,
            vec![(VenueId::new("m-1"), "McDonald's".into(), "McDonalds".into())]
        );
        assert_eq!(report.merged, vec![(VenueId::new("m-2"), VenueId::new("m-3"))]);
        let roma = store.get_venue(&VenueId::new("m-2")).unwrap();
        assert_eq!(roma.names, ["Cafe Roma", "Caffe Roma"]);
        assert_eq!(
            store.get_venue(&VenueId::new("m-1")).unwrap().names,
            ["McDonalds", "McDonald's"]
        );
        assert_eq!(store.len(), 3);

        let snapshot = store.clone();
        let again = dedup_venues(&mut store, &brands, 2, 2, &cfg).unwrap();
        assert_eq!(again, DedupReport::default());
        assert_eq!(store, snapshot);
    }

    #[test]
    fn extend_coverage_paths() {
        let cfg = Config::default();
        let brands = BrandIndex::from_names(["Starbucks"]);
        let w = RankerWeights::equal(Ranker::ALL);
        let mut store = VenueStore::new("m");
        let hit = extend_coverage(&with_ssid(Some("Starbuks")), &mut store, &brands, &w, &cfg).unwrap();
        assert_eq!(hit.named_by, NamedBy::Ssid);
        assert_eq!(hit.record.names, ["Starbucks"]);
        let miss = extend_coverage(&with_ssid(Some("Office")), &mut store, &brands, &w, &cfg).unwrap();
        assert_eq!(miss.named_by, NamedBy::Nobody);
        assert!(miss.record.stub);
        assert_eq!(store.len(), 2);
    }
}
