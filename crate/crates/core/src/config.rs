//! Tunable thresholds for every stage of the engine.
//!
//! All structs deserialize with per-field defaults, so a config file only
//! needs to name the values it overrides.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::pipeline::Ranker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Config {
    pub fingerprint: FingerprintConfig,
    pub similarity: SimilarityConfig,
    pub pipeline: PipelineConfig,
    pub integrity: IntegrityConfig,
    pub coverage: CoverageConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FingerprintConfig {
    /// Number of color/light clusters.
    pub color_k: usize,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
    /// Maximum pixels retained per venue for re-clustering.
    pub pixel_reservoir: usize,
    /// Stay durations beyond this 30-minute bucket are clamped into it.
    pub max_duration_bucket: u32,
    /// Start hour of each visit period, in order: early morning, late
    /// morning, early afternoon, late afternoon, early evening, late evening.
    pub period_starts: [u32; 6],
    /// Case-insensitive substrings marking manufacturer/provider SSIDs.
    pub ssid_stoplist: Vec<String>,
    pub stop_words: Vec<String>,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        FingerprintConfig {
            color_k: 4,
            kmeans_seed: 0x5eed,
            kmeans_max_iter: 100,
            pixel_reservoir: 10_000,
            max_duration_bucket: 16,
            period_starts: [4, 8, 12, 16, 20, 22],
            ssid_stoplist: default_ssid_stoplist(),
            stop_words: default_stop_words(),
        }
    }
}

pub fn default_ssid_stoplist() -> Vec<String> {
    [
        "linksys", "vodafone", "netgear", "tp-link", "d-link", "huawei", "zte", "cisco", "etisalat", "orange",
        "tedata", "belkin", "asus", "default",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

pub fn default_stop_words() -> Vec<String> {
    [
        "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "in", "is", "it", "its",
        "of", "on", "or", "that", "the", "this", "to", "was", "were", "will", "with", "you", "your",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MagneticMode {
    /// Euclidean distance between per-axis summaries.
    #[default]
    Summary,
    /// Euclidean distance between energy spectra.
    Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    /// Lower clamp on color centroid distance.
    pub delta_min: f64,
    /// Additive smoothing per mobility histogram bin; 0 disables it.
    pub mobility_smoothing: f64,
    /// Weight of check-ins at other branches of the same brand.
    pub familiarity_brand_weight: f64,
    pub magnetic_mode: MagneticMode,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            delta_min: 0.01,
            mobility_smoothing: 0.01,
            familiarity_brand_weight: 0.5,
            magnetic_mode: MagneticMode::Summary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregator {
    #[default]
    Borda,
    CombSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// WiFi similarity between consecutive scans above which the user is
    /// considered stationary.
    pub stationarity_threshold: f64,
    pub min_stationary_secs: f64,
    /// Maximum WiFi similarity below which a check-in is a new venue.
    pub new_venue_threshold: f64,
    /// Size of each filter's output list.
    pub filter_size: usize,
    /// Query locations farther than this from every walk-graph node use
    /// Euclidean distance instead of walking distance.
    pub snap_radius_m: f64,
    pub aggregator: Aggregator,
    /// Exponential moving average rate for ranker weight updates.
    pub learning_rate: f64,
    pub enabled_rankers: BTreeSet<Ranker>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stationarity_threshold: 1.5,
            min_stationary_secs: 60.0,
            new_venue_threshold: 1.2,
            filter_size: 10,
            snap_radius_m: 5.0,
            aggregator: Aggregator::Borda,
            learning_rate: 0.2,
            enabled_rankers: Ranker::ALL.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMetric {
    /// Average WiFi similarity; merge while similarity >= cutoff.
    #[default]
    WifiSimilarity,
    /// Average RSS Euclidean distance in dB; merge while distance <= cutoff.
    RssEuclideanDb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrityConfig {
    /// Number of most recent binds clustered per venue.
    pub window: usize,
    pub metric: ClusterMetric,
    /// Cut-off for agglomerative merging, in the unit of `metric`.
    pub cutoff: f64,
    /// Walking radius defining neighboring venues.
    pub neighbor_radius_m: f64,
    /// With at least this many binds the largest cluster is taken as correct.
    pub majority_min_binds: usize,
    /// RSS assumed for an access point missing from one of two vectors.
    pub missing_rss_dbm: f64,
    /// Bind log capacity per venue.
    pub log_capacity: usize,
}

impl Default for IntegrityConfig {
    fn default() -> Self {
        IntegrityConfig {
            window: 50,
            metric: ClusterMetric::WifiSimilarity,
            cutoff: 1.0,
            neighbor_radius_m: 30.0,
            majority_min_binds: 10,
            missing_rss_dbm: -100.0,
            log_capacity: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageConfig {
    /// Maximum SSID-to-brand edit distance accepted as a name prediction.
    pub max_edit: usize,
    pub brand_snap_edit: usize,
    pub dup_cluster_edit: usize,
    /// Minimum normalized logical-fingerprint score (maximum is 1).
    pub logical_threshold: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            max_edit: 2,
            brand_snap_edit: 2,
            dup_cluster_edit: 2,
            logical_threshold: 0.6,
        }
    }
}
