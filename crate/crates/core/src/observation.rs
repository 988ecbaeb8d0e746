use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{
    build_wifi_fingerprint, mean_rss, ColorLightFingerprint, Hsl, MagneticSignature, MobilityObservation, SoundSample,
    TextFeatures, WifiFingerprint, WifiScan,
};
use crate::geometry::Location;

/// One user's sensed snapshot at check-in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckInObservation {
    pub user: String,
    pub wifi_scans: Vec<WifiScan>,
    pub mobility: MobilityObservation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sound: Option<SoundSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<ColorLightFingerprint>,
    /// Raw floor/wall pixels behind `color`, when available.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub color_pixels: Vec<Hsl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetic: Option<MagneticSignature>,
    #[serde(default)]
    pub text: TextFeatures,
    pub location: Location,
    pub timestamp: f64,
}

impl CheckInObservation {
    pub fn validate(&self) -> Result<()> {
        if self.wifi_scans.is_empty() {
            return Err(Error::NoScans);
        }
        for s in &self.wifi_scans {
            s.validate()?;
        }
        if !self.location.point.is_finite() {
            return Err(Error::invalid("observation location is not finite"));
        }
        if let Some(s) = &self.sound {
            SoundSample::new(s.hour, s.vector.clone())?;
        }
        Ok(())
    }

    pub fn wifi_fingerprint(&self) -> Result<WifiFingerprint> {
        build_wifi_fingerprint(&self.wifi_scans)
    }

    pub fn rss_vector(&self) -> std::collections::BTreeMap<String, f64> {
        mean_rss(&self.wifi_scans)
    }
}
