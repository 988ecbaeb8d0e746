//! Simulation parameters. Every field has a default, so a TOML file only
//! needs the values it changes.

use std::path::Path;

use lbsn_core::store::{CategoryGroup, Subcategory};
use lbsn_core::Config;
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Probability that a reading is missing from a scan.
    pub ap_dropout: f64,
    /// Standard deviation of per-reading RSS noise, dB.
    pub rss_jitter_db: f64,
    /// Standard deviation of the reported position per axis, meters.
    pub location_error_m: f64,
    /// Probability that a check-in claims a venue other than the one the
    /// user is in.
    pub fake_checkin_prob: f64,
    /// Maximum number of random edits applied to each named SSID.
    pub ssid_corruption_edits: u32,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            ap_dropout: 0.02,
            rss_jitter_db: 1.5,
            location_error_m: 3.0,
            fake_checkin_prob: 0.1,
            ssid_corruption_edits: 1,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel {
            ap_dropout: 0.0,
            rss_jitter_db: 0.0,
            location_error_m: 0.0,
            fake_checkin_prob: 0.0,
            ssid_corruption_edits: 0,
        }
    }

    pub fn validate(&self) -> SimResult<()> {
        check_prob("noise.ap_dropout", self.ap_dropout)?;
        check_prob("noise.fake_checkin_prob", self.fake_checkin_prob)?;
        check_nonneg("noise.rss_jitter_db", self.rss_jitter_db)?;
        check_nonneg("noise.location_error_m", self.location_error_m)
    }
}

/// Relative venue counts per category group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategoryMix {
    pub food_restaurants: f64,
    pub clothing_fashion: f64,
    pub entertainment_arts: f64,
    pub others: f64,
}

impl Default for CategoryMix {
    fn default() -> Self {
        CategoryMix {
            food_restaurants: 101.0,
            clothing_fashion: 374.0,
            entertainment_arts: 23.0,
            others: 213.0,
        }
    }
}

impl CategoryMix {
    pub fn weights(&self) -> [(CategoryGroup, f64); 4] {
        [
            (CategoryGroup::FoodRestaurants, self.food_restaurants),
            (CategoryGroup::ClothingFashion, self.clothing_fashion),
            (CategoryGroup::EntertainmentArts, self.entertainment_arts),
            (CategoryGroup::Others, self.others),
        ]
    }

    /// Group counts for `n` venues by largest remainders, ties to the
    /// earlier group.
    pub fn apportion(&self, n: usize) -> [(CategoryGroup, usize); 4] {
        let w = self.weights();
        let total: f64 = w.iter().map(|(_, x)| x).sum();
        let mut out = w.map(|(g, x)| (g, ((x / total) * n as f64).floor() as usize));
        let mut rem: Vec<(usize, f64)> = w
            .iter()
            .enumerate()
            .map(|(i, (_, x))| (i, (x / total) * n as f64 - out[i].1 as f64))
            .collect();
        rem.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let missing = n - out.iter().map(|(_, c)| c).sum::<usize>();
        for (i, _) in rem.into_iter().take(missing) {
            out[i].1 += 1;
        }
        out
    }

    fn validate(&self) -> SimResult<()> {
        let w = self.weights();
        if w.iter().any(|(_, x)| !x.is_finite() || *x < 0.0) || w.iter().all(|(_, x)| *x == 0.0) {
            return Err(SimError::Config(
                "category_mix weights must be nonnegative and not all zero".into(),
            ));
        }
        Ok(())
    }
}

pub fn subcategories(group: CategoryGroup) -> Vec<Subcategory> {
    Subcategory::in_group(group).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    /// Venue slots per row.
    pub columns: usize,
    /// Rows of venue slots; rows pair up back to back between corridors.
    pub rows: usize,
    pub venue_width_m: f64,
    pub venue_depth_m: f64,
    pub corridor_width_m: f64,
    /// Standard deviation of where visitors stand around a venue's center;
    /// 0 puts every visitor at the center.
    pub visit_spread_m: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            columns: 10,
            rows: 8,
            venue_width_m: 10.0,
            venue_depth_m: 8.0,
            corridor_width_m: 4.0,
            visit_spread_m: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    /// RSS at 1 m.
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    pub wall_loss_db: f64,
    /// Mounting height of access points above the phone.
    pub ap_height_m: f64,
    /// Readings weaker than this are not reported.
    pub sensitivity_dbm: f64,
    pub aps_per_venue: usize,
    pub corridor_ap_spacing_m: f64,
    pub scans_per_checkin: usize,
    /// Fraction of venues broadcasting an SSID derived from their name.
    pub named_ssid_fraction: f64,
    /// Standard deviation of the per-device RSS offset, dB.
    pub device_offset_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_power_dbm: -35.0,
            path_loss_exponent: 3.0,
            wall_loss_db: 15.0,
            ap_height_m: 2.0,
            sensitivity_dbm: -85.0,
            aps_per_venue: 2,
            corridor_ap_spacing_m: 20.0,
            scans_per_checkin: 3,
            named_ssid_fraction: 0.8,
            device_offset_db: 2.0,
        }
    }
}

/// Parameter grids for the metric sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Cut-offs for dB-mode fake detection.
    pub dstar_db: Vec<f64>,
    pub max_edit: Vec<usize>,
    pub fake_checkin_prob: Vec<f64>,
    pub new_venue_threshold: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dstar_db: vec![12.0, 13.0, 14.0, 15.0, 16.0],
            max_edit: vec![0, 1, 2, 3, 4, 5],
            fake_checkin_prob: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            new_venue_threshold: vec![0.6, 0.8, 1.0, 1.2, 1.4, 1.6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub mall_id: String,
    pub venue_count: usize,
    pub category_mix: CategoryMix,
    /// Fraction of venues belonging to a brand.
    pub brand_fraction: f64,
    /// Trace check-ins claimed at each venue.
    pub checkins_per_venue: usize,
    /// Survey visits behind each venue's initial fingerprint.
    pub survey_visits: usize,
    /// Fraction of venues missing from the LBSN catalog.
    pub coverage_gap: f64,
    pub user_count: usize,
    /// Standard deviation of the catalog's claimed location per axis.
    pub claimed_location_error_m: f64,
    /// Feed confirmed venues back into the ranker weights.
    pub feedback: bool,
    pub layout: LayoutConfig,
    pub radio: RadioConfig,
    pub noise: NoiseModel,
    pub sweeps: SweepConfig,
    pub engine: Config,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 7,
            mall_id: "mall".into(),
            venue_count: 60,
            category_mix: CategoryMix::default(),
            brand_fraction: 0.823,
            checkins_per_venue: 5,
            survey_visits: 5,
            coverage_gap: 0.39,
            user_count: 40,
            claimed_location_error_m: 2.0,
            feedback: true,
            layout: LayoutConfig::default(),
            radio: RadioConfig::default(),
            noise: NoiseModel::default(),
            sweeps: SweepConfig::default(),
            engine: Config::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> SimResult<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> SimResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.venue_count == 0 {
            return Err(SimError::Config("venue_count must be positive".into()));
        }
        for (name, v) in [
            ("checkins_per_venue", self.checkins_per_venue),
            ("survey_visits", self.survey_visits),
            ("user_count", self.user_count),
            ("radio.aps_per_venue", self.radio.aps_per_venue),
            ("radio.scans_per_checkin", self.radio.scans_per_checkin),
            ("layout.columns", self.layout.columns),
            ("layout.rows", self.layout.rows),
        ] {
            if v == 0 {
                return Err(SimError::Config(format!("{name} must be positive")));
            }
        }
        check_prob("brand_fraction", self.brand_fraction)?;
        check_prob("coverage_gap", self.coverage_gap)?;
        check_prob("radio.named_ssid_fraction", self.radio.named_ssid_fraction)?;
        check_nonneg("claimed_location_error_m", self.claimed_location_error_m)?;
        check_nonneg("radio.device_offset_db", self.radio.device_offset_db)?;
        check_nonneg("radio.ap_height_m", self.radio.ap_height_m)?;
        check_nonneg("radio.wall_loss_db", self.radio.wall_loss_db)?;
        check_nonneg("layout.visit_spread_m", self.layout.visit_spread_m)?;
        for (name, v) in [
            ("layout.venue_width_m", self.layout.venue_width_m),
            ("layout.venue_depth_m", self.layout.venue_depth_m),
            ("layout.corridor_width_m", self.layout.corridor_width_m),
            ("radio.corridor_ap_spacing_m", self.radio.corridor_ap_spacing_m),
            ("radio.path_loss_exponent", self.radio.path_loss_exponent),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("{name} must be positive")));
            }
        }
        for p in &self.sweeps.fake_checkin_prob {
            check_prob("sweeps.fake_checkin_prob", *p)?;
        }
        self.category_mix.validate()?;
        self.noise.validate()
    }
}

fn check_prob(name: &str, v: f64) -> SimResult<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn check_nonneg(name: &str, v: f64) -> SimResult<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must be nonnegative, got {v}")))
    }
}
