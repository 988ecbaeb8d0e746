//! Fake check-in detection.
//!
//! The recent WiFi binds claimed for a venue are grouped by average-linkage
//! agglomerative clustering. Once a venue has enough binds the largest
//! cluster is taken as correct; before that the cluster whose centroid is
//! closest to the correct clusters of neighboring venues wins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{ClusterMetric, IntegrityConfig};
use crate::error::{Error, Result};
use crate::fingerprint::{ApProfile, WifiFingerprint};
use crate::floorplan::Floorplan;
use crate::geometry::Location;
use crate::observation::CheckInObservation;
use crate::similarity::fraction_similarity;
use crate::store::VenueStore;
use crate::VenueId;

/// The WiFi evidence of one check-in claiming presence at a venue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckInBind {
    pub checkin_id: u64,
    pub venue: VenueId,
    pub user: String,
    pub wifi: WifiFingerprint,
    /// Mean RSS per mac, in dBm.
    pub rss_vector: BTreeMap<String, f64>,
    pub location: Location,
    pub timestamp: f64,
}

impl CheckInBind {
    pub fn from_observation(checkin_id: u64, venue: VenueId, obs: &CheckInObservation) -> Result<Self> {
        let wifi = obs.wifi_fingerprint()?;
        if wifi.is_empty() {
            return Err(Error::invalid("bind has no access points"));
        }
        Ok(CheckInBind {
            checkin_id,
            venue,
            user: obs.user.clone(),
            wifi,
            rss_vector: obs.rss_vector(),
            location: obs.location,
            timestamp: obs.timestamp,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindLabel {
    Correct,
    Fake,
}

/// A bind as kept in a venue's check-in log, with its latest label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedBind {
    pub bind: CheckInBind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<BindLabel>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterResult {
    /// Indices into the classified binds; each cluster sorted, clusters
    /// ordered by first member.
    pub clusters: Vec<Vec<usize>>,
    /// `None` only for an empty bind set.
    pub correct_cluster: Option<usize>,
    /// Checkin id -> label.
    pub labels: BTreeMap<u64, BindLabel>,
}

impl ClusterResult {
    pub fn correct_members(&self) -> &[usize] {
        self.correct_cluster.map(|c| self.clusters[c].as_slice()).unwrap_or(&[])
    }
}

/// Euclidean distance between RSS vectors over the union of macs, with
/// `missing_dbm` standing in for an unheard access point.
pub fn rss_distance(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>, missing_dbm: f64) -> f64 {
    let mut sum = 0.0;
    for (mac, ra) in a {
        let rb = b.get(mac).copied().unwrap_or(missing_dbm);
        sum += (ra - rb).powi(2);
    }
    for (mac, rb) in b {
        if !a.contains_key(mac) {
            sum += (missing_dbm - rb).powi(2);
        }
    }
    sum.sqrt()
}

/// Pairwise closeness (larger is closer) under `metric`.
pub fn bind_closeness(a: &CheckInBind, b: &CheckInBind, metric: ClusterMetric, missing_dbm: f64) -> f64 {
    match metric {
        ClusterMetric::WifiSimilarity => fraction_similarity(&a.wifi, &b.wifi),
        ClusterMetric::RssEuclideanDb => -rss_distance(&a.rss_vector, &b.rss_vector, missing_dbm),
    }
}

/// Average-linkage agglomerative clustering.
///
/// Linkage between clusters `A` and `B` is the mean pairwise closeness,
/// summed over `a` in `A` then `b` in `B`, both ascending. At each step the
/// closest pair merges, ties going to the pair with the smallest first
/// members. Merging stops when the best linkage falls below `cutoff`
/// (similarity mode) or exceeds it (dB mode).
pub fn cluster_checkins(
    binds: &[CheckInBind],
    cutoff: f64,
    metric: ClusterMetric,
    missing_dbm: f64,
) -> Result<Vec<Vec<usize>>> {
    if binds.is_empty() {
        return Err(Error::invalid("no binds to cluster"));
    }
    let n = binds.len();
    let mut pair = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = bind_closeness(&binds[i], &binds[j], metric, missing_dbm);
            pair[i][j] = c;
            pair[j][i] = c;
        }
    }
    let threshold = match metric {
        ClusterMetric::WifiSimilarity => cutoff,
        ClusterMetric::RssEuclideanDb => -cutoff,
    };
    let linkage = |a: &[usize], b: &[usize]| -> f64 {
        let mut s = 0.0;
        for &x in a {
            for &y in b {
                s += pair[x][y];
            }
        }
        s / (a.len() * b.len()) as f64
    };

    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // link[i][j] for i < j, cached between merges.
    let mut link: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { f64::NEG_INFINITY } else { pair[i][j] })
                .collect()
        })
        .collect();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let l = link[i][j];
                // Clusters stay ordered by first member, so scanning (i, j)
                // in order and keeping strict improvements breaks ties.
                if best.is_none_or(|(b, _, _)| l > b) {
                    best = Some((l, i, j));
                }
            }
        }
        let (l, i, j) = best.expect("at least two clusters");
        if l < threshold {
            break;
        }
        let absorbed = clusters.remove(j);
        link.remove(j);
        for row in &mut link {
            row.remove(j);
        }
        clusters[i].extend(absorbed);
        clusters[i].sort_unstable();
        for k in 0..clusters.len() {
            if k != i {
                let v = linkage(&clusters[i], &clusters[k]);
                link[i][k] = v;
                link[k][i] = v;
            }
        }
    }
    Ok(clusters)
}

/// Selects the correct cluster by
/// `argmin_c sum_{m in N(v)} d_s(c, c_m*)`, with `d_s = 2 - S` and `S` the
/// WiFi similarity of cluster centroids. Ties prefer the larger cluster,
/// then the lower index. Without neighbors the largest cluster wins.
pub fn select_correct_cluster(centroids: &[ApProfile], sizes: &[usize], neighbors: &[ApProfile]) -> usize {
    debug_assert_eq!(centroids.len(), sizes.len());
    if neighbors.is_empty() {
        return largest(sizes);
    }
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for (c, centroid) in centroids.iter().enumerate() {
        let total: f64 = neighbors.iter().map(|m| 2.0 - fraction_similarity(centroid, m)).sum();
        if total < best.0 || (total == best.0 && sizes[c] > best.1) {
            best = (total, sizes[c], c);
        }
    }
    best.2
}

fn largest(sizes: &[usize]) -> usize {
    let mut best = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = i;
        }
    }
    best
}

/// Clusters the most recent `cfg.window` binds and labels them. With at
/// least `cfg.majority_min_binds` binds the largest cluster is correct;
/// otherwise the neighbor criterion decides. Older binds are not labeled.
pub fn classify_checkins(
    binds: &[CheckInBind],
    neighbors: &[ApProfile],
    cfg: &IntegrityConfig,
) -> Result<ClusterResult> {
    if binds.is_empty() {
        return Ok(ClusterResult::default());
    }
    let recent = &binds[binds.len().saturating_sub(cfg.window.max(1))..];
    let clusters = cluster_checkins(recent, cfg.cutoff, cfg.metric, cfg.missing_rss_dbm)?;
    let sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
    let correct = if recent.len() >= cfg.majority_min_binds {
        largest(&sizes)
    } else {
        let centroids: Vec<ApProfile> = clusters
            .iter()
            .map(|c| ApProfile::centroid(c.iter().map(|&i| &recent[i].wifi)))
            .collect();
        select_correct_cluster(&centroids, &sizes, neighbors)
    };
    let mut labels = BTreeMap::new();
    for (ci, members) in clusters.iter().enumerate() {
        let label = if ci == correct {
            BindLabel::Correct
        } else {
            BindLabel::Fake
        };
        for &i in members {
            labels.insert(recent[i].checkin_id, label);
        }
    }
    Ok(ClusterResult {
        clusters,
        correct_cluster: Some(correct),
        labels,
    })
}

/// Appends a bind to its venue's log, keeping at most `capacity` entries.
pub fn log_bind(store: &mut VenueStore, bind: CheckInBind, capacity: usize) -> Result<()> {
    let venue = bind.venue.clone();
    store.update_venue(&venue, |rec| {
        rec.checkin_log.push(LoggedBind { bind, label: None });
        let excess = rec.checkin_log.len().saturating_sub(capacity.max(1));
        rec.checkin_log.drain(..excess);
    })
}

/// Correct-cluster centroid of each venue within `cfg.neighbor_radius_m`
/// walking distance of `venue`. A neighbor without labeled binds
/// contributes its venue WiFi fingerprint instead.
pub fn neighbor_centroids(
    store: &VenueStore,
    plan: Option<&Floorplan>,
    venue: &VenueId,
    snap_radius: f64,
    cfg: &IntegrityConfig,
) -> Result<Vec<ApProfile>> {
    let home = store.get_venue(venue)?.location();
    let field = plan.map(|p| p.distance_field(&home, snap_radius));
    let mut out = Vec::new();
    for (id, euclid) in store.nearest_iter(home.point) {
        // Walking distance never undercuts Euclidean distance.
        if euclid > cfg.neighbor_radius_m {
            break;
        }
        if id == venue {
            continue;
        }
        let rec = store.get_venue(id)?;
        let d = match &field {
            Some(f) => f.distance_to(&rec.location()),
            None => euclid,
        };
        if d > cfg.neighbor_radius_m {
            continue;
        }
        let correct: Vec<&WifiFingerprint> = rec
            .checkin_log
            .iter()
            .filter(|b| b.label == Some(BindLabel::Correct))
            .map(|b| &b.bind.wifi)
            .collect();
        if !correct.is_empty() {
            out.push(ApProfile::centroid(correct));
        } else if !rec.fingerprint.wifi.is_empty() {
            out.push(ApProfile::centroid(std::iter::once(&rec.fingerprint.wifi)));
        }
    }
    Ok(out)
}

/// Reclassifies a venue's logged binds and stores the labels.
pub fn classify_venue(
    store: &mut VenueStore,
    plan: Option<&Floorplan>,
    venue: &VenueId,
    snap_radius: f64,
    cfg: &IntegrityConfig,
) -> Result<ClusterResult> {
    let neighbors = neighbor_centroids(store, plan, venue, snap_radius, cfg)?;
    let binds: Vec<CheckInBind> = store
        .get_venue(venue)?
        .checkin_log
        .iter()
        .map(|b| b.bind.clone())
        .collect();
    let result = classify_checkins(&binds, &neighbors, cfg)?;
    store.update_venue(venue, |rec| {
        for entry in &mut rec.checkin_log {
            if let Some(l) = result.labels.get(&entry.bind.checkin_id) {
                entry.label = Some(*l);
            }
        }
    })?;
    Ok(result)
}
