use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::wifi::WifiScan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TextFeatures {
    pub ssid_strongest: Option<String>,
    pub ocr_terms: BTreeSet<String>,
    /// Visterm multiset: token -> occurrence count.
    pub visterms: BTreeMap<String, u32>,
}

impl TextFeatures {
    pub fn absorb(&mut self, other: &TextFeatures) {
        if other.ssid_strongest.is_some() {
            self.ssid_strongest.clone_from(&other.ssid_strongest);
        }
        self.ocr_terms.extend(other.ocr_terms.iter().cloned());
        for (t, c) in &other.visterms {
            *self.visterms.entry(t.clone()).or_insert(0) += c;
        }
    }
}

pub fn is_stoplisted(ssid: &str, stoplist: &[String]) -> bool {
    let lower = ssid.to_lowercase();
    stoplist
        .iter()
        .any(|s| !s.is_empty() && lower.contains(&s.to_lowercase()))
}

/// SSID of the access point with the strongest average RSS over `scans`,
/// ignoring hidden and stoplisted SSIDs. Ties go to the smaller mac.
pub fn strongest_ssid(scans: &[WifiScan], stoplist: &[String]) -> Option<String> {
    let mut acc: BTreeMap<&str, (&str, f64, u32)> = BTreeMap::new();
    for scan in scans {
        for r in &scan.readings {
            if r.ssid.trim().is_empty() || is_stoplisted(&r.ssid, stoplist) {
                continue;
            }
            let e = acc.entry(&r.mac).or_insert((&r.ssid, 0.0, 0));
            e.1 += r.rss;
            e.2 += 1;
        }
    }
    let mut best: Option<(&str, f64)> = None;
    for (ssid, sum, n) in acc.values() {
        let avg = sum / *n as f64;
        if best.is_none_or(|(_, b)| avg > b) {
            best = Some((ssid, avg));
        }
    }
    best.map(|(s, _)| s.to_string())
}

/// Lowercased OCR words with punctuation trimmed, stop words and
/// single-character tokens removed.
pub fn ocr_terms<'a>(words: impl IntoIterator<Item = &'a str>, stop_words: &[String]) -> BTreeSet<String> {
    let stop: BTreeSet<String> = stop_words.iter().map(|w| w.to_lowercase()).collect();
    words
        .into_iter()
        .flat_map(|w| w.split_whitespace())
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| w.chars().count() >= 2 && !stop.contains(w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::wifi::WifiReading;

    fn reading(mac: &str, ssid: &str, rss: f64) -> WifiReading {
        WifiReading {
            mac: mac.into(),
            ssid: ssid.into(),
            rss,
        }
    }

    #[test]
    fn strongest_skips_stoplist() {
        let stop = crate::config::default_ssid_stoplist();
        let scans = vec![WifiScan {
            readings: vec![
                reading("a", "Vodafone-AP", -30.0),
                reading("b", "Starbuks", -55.0),
                reading("c", "Zara", -70.0),
            ],
            timestamp: 0.0,
        }];
        assert_eq!(strongest_ssid(&scans, &stop).as_deref(), Some("Starbuks"));
    }

    #[test]
    fn only_stoplisted_gives_none() {
        let stop = crate::config::default_ssid_stoplist();
        let scans = vec![WifiScan {
            readings: vec![reading("a", "Vodafone-AP", -30.0), reading("b", "LinkSys", -40.0)],
            timestamp: 0.0,
        }];
        assert_eq!(strongest_ssid(&scans, &stop), None);
        assert_eq!(strongest_ssid(&[], &stop), None);
    }

    #[test]
    fn strongest_uses_average_over_scans() {
        let scans = vec![
            WifiScan {
                readings: vec![reading("a", "A", -40.0), reading("b", "B", -50.0)],
                timestamp: 0.0,
            },
            WifiScan {
                readings: vec![reading("a", "A", -80.0), reading("b", "B", -50.0)],
                timestamp: 1.0,
            },
        ];
        assert_eq!(strongest_ssid(&scans, &[]).as_deref(), Some("B"));
    }

    #[test]
    fn ocr_cleanup() {
        let stop = crate::config::default_stop_words();
        let terms = ocr_terms(["The Latte,", "menu of", "x", "ESPRESSO!"], &stop);
        let expected: BTreeSet<String> = ["latte", "menu", "espresso"].iter().map(|s| s.to_string()).collect();
        assert_eq!(terms, expected);
    }
}
