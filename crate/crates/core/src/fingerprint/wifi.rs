use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WifiReading {
    pub mac: String,
    pub ssid: String,
    /// Received signal strength, dBm.
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct WifiScan {
    pub readings: Vec<WifiReading>,
    /// Seconds since epoch.
    pub timestamp: f64,
}

impl WifiScan {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.readings {
            if !seen.insert(r.mac.as_str()) {
                return Err(Error::invalid(format!("duplicate mac {} in scan", r.mac)));
            }
            if !(-100.0..=0.0).contains(&r.rss) {
                return Err(Error::invalid(format!("rss {} out of [-100, 0]", r.rss)));
            }
        }
        Ok(())
    }
}

/// Anything that exposes per-access-point observation fractions, iterated in
/// ascending mac order.
pub trait ApFractions {
    fn ap_fractions(&self) -> impl Iterator<Item = (&str, f64)> + '_;
}

/// Per-mac observation counts over a number of scans; the fraction of a mac
/// is `count / scan_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct WifiFingerprint {
    counts: BTreeMap<String, u32>,
    scan_count: u32,
}

impl WifiFingerprint {
    pub fn from_scans(scans: &[WifiScan]) -> Result<Self> {
        if scans.is_empty() {
            return Err(Error::NoScans);
        }
        let mut fp = WifiFingerprint::default();
        for scan in scans {
            fp.add_scan(scan);
        }
        Ok(fp)
    }

    /// Builds a fingerprint straight from counts.
    pub fn from_counts(counts: BTreeMap<String, u32>, scan_count: u32) -> Result<Self> {
        if counts.values().any(|&c| c == 0 || c > scan_count) {
            return Err(Error::invalid("mac count must be in 1..=scan_count"));
        }
        Ok(WifiFingerprint { counts, scan_count })
    }

    pub fn add_scan(&mut self, scan: &WifiScan) {
        self.scan_count += 1;
        let mut macs: Vec<&str> = scan.readings.iter().map(|r| r.mac.as_str()).collect();
        macs.sort_unstable();
        macs.dedup();
        for mac in macs {
            *self.counts.entry(mac.to_string()).or_insert(0) += 1;
        }
    }

    /// Adds the scans summarized by `other`.
    pub fn absorb(&mut self, other: &WifiFingerprint) {
        self.scan_count += other.scan_count;
        for (mac, c) in &other.counts {
            *self.counts.entry(mac.clone()).or_insert(0) += c;
        }
    }

    pub fn fraction(&self, mac: &str) -> f64 {
        match self.counts.get(mac) {
            Some(&c) => c as f64 / self.scan_count as f64,
            None => 0.0,
        }
    }

    pub fn scan_count(&self) -> u32 {
        self.scan_count
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn macs(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }
}

impl ApFractions for WifiFingerprint {
    fn ap_fractions(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        let n = self.scan_count as f64;
        self.counts.iter().map(move |(m, &c)| (m.as_str(), c as f64 / n))
    }
}

/// Builds the WiFi fingerprint of a scan list: the fraction of scans each
/// mac appears in.
pub fn build_wifi_fingerprint(scans: &[WifiScan]) -> Result<WifiFingerprint> {
    WifiFingerprint::from_scans(scans)
}

/// Fractional per-mac profile, e.g. a cluster centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ApProfile(pub BTreeMap<String, f64>);

impl ApProfile {
    /// Per-mac mean of member fractions; a mac absent from a member counts
    /// as fraction 0 for that member.
    pub fn centroid<'a, F: ApFractions + 'a>(members: impl IntoIterator<Item = &'a F>) -> Self {
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        let mut n = 0usize;
        for m in members {
            n += 1;
            for (mac, f) in m.ap_fractions() {
                *sums.entry(mac.to_string()).or_insert(0.0) += f;
            }
        }
        if n == 0 {
            return ApProfile::default();
        }
        for v in sums.values_mut() {
            *v /= n as f64;
        }
        ApProfile(sums)
    }
}

impl ApFractions for ApProfile {
    fn ap_fractions(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.0.iter().map(|(m, &f)| (m.as_str(), f))
    }
}

/// Mean RSS per mac over the scans in which the mac was heard.
pub fn mean_rss(scans: &[WifiScan]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, u32)> = BTreeMap::new();
    for scan in scans {
        for r in &scan.readings {
            let e = acc.entry(r.mac.clone()).or_insert((0.0, 0));
            e.0 += r.rss;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(mac, (s, n))| (mac, s / n as f64)).collect()
}
