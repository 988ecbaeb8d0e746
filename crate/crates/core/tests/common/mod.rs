#![allow(dead_code)]

use std::collections::BTreeMap;

use lbsn_core::config::FingerprintConfig;
use lbsn_core::fingerprint::{
    Activity, ApProfile, MobilityObservation, VenueFingerprint, VisitPeriod, WifiReading, WifiScan,
};
use lbsn_core::store::Subcategory;
use lbsn_core::{CheckInObservation, Location, VenueId, VenueRecord};

pub fn profile(pairs: &[(&str, f64)]) -> ApProfile {
    ApProfile(pairs.iter().map(|(m, f)| (m.to_string(), *f)).collect())
}

pub fn scan(macs: &[&str], t: f64) -> WifiScan {
    WifiScan {
        readings: macs
            .iter()
            .map(|m| WifiReading {
                mac: m.to_string(),
                ssid: format!("ssid-{m}"),
                rss: -55.0,
            })
            .collect(),
        timestamp: t,
    }
}

pub fn observation(user: &str, macs: &[&str], x: f64, y: f64) -> CheckInObservation {
    CheckInObservation {
        user: user.into(),
        wifi_scans: vec![scan(macs, 0.0), scan(macs, 1.0)],
        mobility: MobilityObservation {
            visit_period: VisitPeriod::EarlyAfternoon,
            activity: Activity::Browsing,
            duration_bucket: 0,
        },
        sound: None,
        color: None,
        color_pixels: vec![],
        magnetic: None,
        text: Default::default(),
        location: Location::new(x, y, 0),
        timestamp: 0.0,
    }
}

pub fn record(id: &str, x: f64, y: f64) -> VenueRecord {
    VenueRecord {
        id: VenueId::new(id),
        names: vec![format!("Venue {id}")],
        brand: None,
        category: Some(Subcategory::Cafe),
        mall_id: "m".into(),
        claimed_location: Location::new(x, y, 0),
        estimated_location: None,
        fingerprint: VenueFingerprint::empty(&FingerprintConfig::default()),
        tips: vec![],
        image_corpus: vec![],
        checkin_log: vec![],
        stub: false,
    }
}

/// A venue whose fingerprint is built from one observation hearing `macs`.
pub fn venue_with_macs(id: &str, x: f64, y: f64, macs: &[&str]) -> VenueRecord {
    let mut r = record(id, x, y);
    r.fingerprint =
        VenueFingerprint::from_observation(&observation("seed", macs, x, y), &FingerprintConfig::default()).unwrap();
    r
}

/// Deterministic xorshift stream for oracle-side instance generation.
pub struct Xs(pub u64);

impl Xs {
    pub fn next(&mut self) -> u64 {
        let mut x = self.0.max(1);
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

pub fn ids(v: &[&str]) -> Vec<VenueId> {
    v.iter().map(|s| VenueId::new(*s)).collect()
}

pub fn rss(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(m, r)| (m.to_string(), *r)).collect()
}
