//! Venue fingerprints and the per-modality builders behind them.

mod color;
mod magnetic;
mod mobility;
mod sound;
mod text;
mod wifi;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use color::{build_color_fingerprint, kmeans, validate_pixel, ColorCluster, ColorLightFingerprint, Hsl, KMeans};
pub use magnetic::{build_magnetic_signature, normalized_magnitudes, MagneticSignature};
pub use mobility::{quantize_mobility, Activity, MobilityFingerprint, MobilityObservation, VisitPeriod};
pub use sound::{build_sound_fingerprint, HourSound, SoundFingerprint, SoundSample, SOUND_BINS};
pub use text::{is_stoplisted, ocr_terms, strongest_ssid, TextFeatures};
pub use wifi::{build_wifi_fingerprint, mean_rss, ApFractions, ApProfile, WifiFingerprint, WifiReading, WifiScan};

use crate::config::FingerprintConfig;
use crate::error::Result;
use crate::geometry::Point;
use crate::observation::CheckInObservation;

/// Upper bound on pseudo-pixels expanded from a cluster-only color
/// fingerprint when raw pixels are unavailable.
const PSEUDO_PIXEL_BUDGET: u32 = 1_000;

/// Multi-modal signature of a venue, aggregated over check-ins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VenueFingerprint {
    pub wifi: WifiFingerprint,
    pub mobility: MobilityFingerprint,
    pub sound: SoundFingerprint,
    pub color: Option<ColorLightFingerprint>,
    pub pixel_reservoir: Vec<Hsl>,
    pub pixels_seen: u64,
    pub magnetic: Option<MagneticSignature>,
    pub magnetic_count: u32,
    pub text: TextFeatures,
    pub location_samples: Vec<Point>,
    pub familiarity_counts: BTreeMap<String, u32>,
}

impl VenueFingerprint {
    pub fn empty(cfg: &FingerprintConfig) -> Self {
        VenueFingerprint {
            wifi: WifiFingerprint::default(),
            mobility: MobilityFingerprint::new(cfg.max_duration_bucket),
            sound: SoundFingerprint::default(),
            color: None,
            pixel_reservoir: Vec::new(),
            pixels_seen: 0,
            magnetic: None,
            magnetic_count: 0,
            text: TextFeatures::default(),
            location_samples: Vec::new(),
            familiarity_counts: BTreeMap::new(),
        }
    }

    /// Fingerprint of a single observation.
    pub fn from_observation(obs: &CheckInObservation, cfg: &FingerprintConfig) -> Result<Self> {
        Self::empty(cfg).merge_observation(obs, cfg)
    }

    /// Returns this fingerprint with `obs` folded in. Every call counts the
    /// observation once, so merging the same observation twice double counts.
    pub fn merge_observation(&self, obs: &CheckInObservation, cfg: &FingerprintConfig) -> Result<Self> {
        let mut fp = self.clone();
        fp.merge_in_place(obs, cfg)?;
        Ok(fp)
    }

    pub fn merge_in_place(&mut self, obs: &CheckInObservation, cfg: &FingerprintConfig) -> Result<()> {
        obs.validate()?;
        for scan in &obs.wifi_scans {
            self.wifi.add_scan(scan);
        }
        self.mobility.add(&obs.mobility);
        if let Some(s) = &obs.sound {
            self.sound.add(s);
        }
        let pixels = observation_pixels(obs);
        if !pixels.is_empty() {
            for p in &pixels {
                validate_pixel(p)?;
            }
            self.ingest_pixels(&pixels, cfg)?;
        }
        if let Some(m) = &obs.magnetic {
            self.add_magnetic(m, 1);
        }
        self.text.absorb(&obs.text);
        self.location_samples.push(obs.location.point);
        *self.familiarity_counts.entry(obs.user.clone()).or_insert(0) += 1;
        Ok(())
    }

    /// Folds another venue's fingerprint into this one (duplicate merging).
    pub fn absorb(&mut self, other: &VenueFingerprint, cfg: &FingerprintConfig) -> Result<()> {
        self.wifi.absorb(&other.wifi);
        self.mobility.absorb(&other.mobility);
        self.sound.absorb(&other.sound);
        if !other.pixel_reservoir.is_empty() {
            self.ingest_pixels(&other.pixel_reservoir, cfg)?;
        }
        if let Some(m) = &other.magnetic {
            self.add_magnetic(m, other.magnetic_count.max(1));
        }
        self.text.absorb(&other.text);
        self.location_samples.extend_from_slice(&other.location_samples);
        for (u, c) in &other.familiarity_counts {
            *self.familiarity_counts.entry(u.clone()).or_insert(0) += c;
        }
        Ok(())
    }

    fn ingest_pixels(&mut self, pixels: &[Hsl], cfg: &FingerprintConfig) -> Result<()> {
        let cap = cfg.pixel_reservoir.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.kmeans_seed ^ self.pixels_seen);
        for p in pixels {
            self.pixels_seen += 1;
            if self.pixel_reservoir.len() < cap {
                self.pixel_reservoir.push(*p);
            } else {
                let j = rng.random_range(0..self.pixels_seen);
                if (j as usize) < cap {
                    self.pixel_reservoir[j as usize] = *p;
                }
            }
        }
        let k = cfg.color_k.min(self.pixel_reservoir.len()).max(1);
        self.color = Some(build_color_fingerprint(
            &self.pixel_reservoir,
            k,
            cfg.kmeans_seed,
            cfg.kmeans_max_iter,
        )?);
        Ok(())
    }

    fn add_magnetic(&mut self, m: &MagneticSignature, weight: u32) {
        match &mut self.magnetic {
            None => {
                self.magnetic = Some(m.clone());
                self.magnetic_count = weight;
            }
            Some(cur) => {
                let total = (self.magnetic_count + weight) as f64;
                let (wa, wb) = (self.magnetic_count as f64 / total, weight as f64 / total);
                for a in 0..3 {
                    cur.summary[a] = cur.summary[a] * wa + m.summary[a] * wb;
                }
                if m.energy_spectrum.len() > cur.energy_spectrum.len() {
                    cur.energy_spectrum.resize(m.energy_spectrum.len(), 0.0);
                }
                for (i, e) in cur.energy_spectrum.iter_mut().enumerate() {
                    *e = *e * wa + m.energy_spectrum.get(i).copied().unwrap_or(0.0) * wb;
                }
                self.magnetic_count += weight;
            }
        }
    }
}

fn observation_pixels(obs: &CheckInObservation) -> Vec<Hsl> {
    if !obs.color_pixels.is_empty() {
        return obs.color_pixels.clone();
    }
    let Some(color) = &obs.color else {
        return Vec::new();
    };
    let total = color.total_pixels.max(1);
    let scale = (PSEUDO_PIXEL_BUDGET as f64 / total as f64).min(1.0);
    color
        .clusters
        .iter()
        .flat_map(|c| {
            let n = ((c.size as f64 * scale).round() as usize).max(1);
            std::iter::repeat_n(c.centroid, n)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::Location;

    pub(crate) fn obs(macs: &[&str]) -> CheckInObservation {
        CheckInObservation {
            user: "u1".into(),
            wifi_scans: vec![WifiScan {
                readings: macs
                    .iter()
                    .map(|m| WifiReading {
                        mac: m.to_string(),
                        ssid: format!("ssid-{m}"),
                        rss: -50.0,
                    })
                    .collect(),
                timestamp: 0.0,
            }],
            mobility: MobilityObservation {
                visit_period: VisitPeriod::LateMorning,
                activity: Activity::Browsing,
                duration_bucket: 1,
            },
            sound: None,
            color: None,
            color_pixels: vec![[0.1, 0.2, 0.3], [0.1, 0.2, 0.3], [0.8, 0.8, 0.8]],
            magnetic: None,
            text: TextFeatures::default(),
            location: Location::new(1.0, 2.0, 0),
            timestamp: 0.0,
        }
    }

    #[test]
    fn empty_plus_obs_is_single_sample() {
        let cfg = FingerprintConfig::default();
        let o = obs(&["A", "B"]);
        let fp = VenueFingerprint::empty(&cfg).merge_observation(&o, &cfg).unwrap();
        assert_eq!(fp.wifi, o.wifi_fingerprint().unwrap());
        assert_eq!(fp.mobility.samples(), 1);
        assert_eq!(fp.location_samples, vec![Point::new(1.0, 2.0)]);
        assert_eq!(fp.familiarity_counts["u1"], 1);
        assert_eq!(fp.color.as_ref().unwrap().total_pixels, 3);
    }

    #[test]
    fn missing_mac_halves_fraction() {
        let cfg = FingerprintConfig::default();
        let fp = VenueFingerprint::from_observation(&obs(&["A"]), &cfg).unwrap();
        assert_eq!(fp.wifi.fraction("A"), 1.0);
        let fp = fp.merge_observation(&obs(&["B"]), &cfg).unwrap();
        assert_eq!(fp.wifi.fraction("A"), 0.5);
        assert_eq!(fp.wifi.scan_count(), 2);
    }

    #[test]
    fn double_merge_counts_twice() {
        let cfg = FingerprintConfig::default();
        let o = obs(&["A"]);
        let once = VenueFingerprint::from_observation(&o, &cfg).unwrap();
        let twice = once.merge_observation(&o, &cfg).unwrap();
        assert_eq!(twice.wifi.scan_count(), 2 * once.wifi.scan_count());
        assert_eq!(twice.familiarity_counts["u1"], 2);
    }

    #[test]
    fn reservoir_is_bounded() {
        let cfg = FingerprintConfig {
            pixel_reservoir: 5,
            ..FingerprintConfig::default()
        };
        let mut fp = VenueFingerprint::empty(&cfg);
        for _ in 0..4 {
            fp.merge_in_place(&obs(&["A"]), &cfg).unwrap();
        }
        assert_eq!(fp.pixel_reservoir.len(), 5);
        assert_eq!(fp.pixels_seen, 12);
        assert_eq!(fp.color.as_ref().unwrap().total_pixels, 5);
    }
}
