//! Pairwise similarity and distance kernels, one per sensing modality.
//!
//! Kernels are pure. Those that can lack data on one side return `None`
//! ("abstain") and leave the decision to the ranking stage.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{
    ApFractions, ColorLightFingerprint, MagneticSignature, MobilityFingerprint, MobilityObservation, SoundFingerprint,
    SoundSample, SOUND_BINS,
};
use crate::image_index::InvertedIndex;
use crate::VenueId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Higher is closer.
    Similarity,
    /// Lower is closer.
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub polarity: Polarity,
}

impl SimilarityScore {
    pub fn similarity(value: f64) -> Self {
        SimilarityScore {
            value,
            polarity: Polarity::Similarity,
        }
    }

    pub fn distance(value: f64) -> Self {
        SimilarityScore {
            value,
            polarity: Polarity::Distance,
        }
    }

    /// Value oriented so that larger always means closer.
    pub fn goodness(&self) -> f64 {
        match self.polarity {
            Polarity::Similarity => self.value,
            Polarity::Distance => -self.value,
        }
    }
}

/// WiFi similarity over the union `U` of observed macs:
/// `S = (1/|U|) * sum_a (f1(a) + f2(a)) * min(f1, f2) / max(f1, f2)`.
///
/// Only macs seen on both sides contribute, so the sum is a merge-join over
/// the two sorted fraction lists. Ranges over `[0, 2]`; two empty inputs
/// give 0.
pub fn wifi_similarity<A: ApFractions, B: ApFractions>(fp1: &A, fp2: &B) -> SimilarityScore {
    SimilarityScore::similarity(fraction_similarity(fp1, fp2))
}

pub(crate) fn fraction_similarity<A: ApFractions, B: ApFractions>(fp1: &A, fp2: &B) -> f64 {
    let mut a = fp1.ap_fractions().filter(|(_, f)| *f > 0.0).peekable();
    let mut b = fp2.ap_fractions().filter(|(_, f)| *f > 0.0).peekable();
    let (mut union, mut sum) = (0usize, 0.0);
    loop {
        match (a.peek(), b.peek()) {
            (None, None) => break,
            (Some(_), None) => {
                union += a.by_ref().count();
            }
            (None, Some(_)) => {
                union += b.by_ref().count();
            }
            (Some(&(ma, fa)), Some(&(mb, fb))) => {
                union += 1;
                match ma.cmp(mb) {
                    std::cmp::Ordering::Less => {
                        a.next();
                    }
                    std::cmp::Ordering::Greater => {
                        b.next();
                    }
                    std::cmp::Ordering::Equal => {
                        sum += (fa + fb) * fa.min(fb) / fa.max(fb);
                        a.next();
                        b.next();
                    }
                }
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        sum / union as f64
    }
}

/// Joint probability `P(V=v) P(R=r) P(D=d)` of the query's mobility bins
/// under the venue histograms. Abstains on an empty venue histogram.
pub fn mobility_similarity(
    obs: &MobilityObservation,
    fp: &MobilityFingerprint,
    smoothing: f64,
) -> Option<SimilarityScore> {
    if fp.is_empty() {
        return None;
    }
    let [pv, pr, pd] = fp.probabilities(obs, smoothing.max(0.0));
    Some(SimilarityScore::similarity(pv * pr * pd))
}

/// `S = sum_ij (1 / max(delta_ij, delta_min)) * (|C1i| / T1) * (|C2j| / T2)`
/// with `delta_ij` the Euclidean centroid distance.
pub fn color_similarity(
    f1: &ColorLightFingerprint,
    f2: &ColorLightFingerprint,
    delta_min: f64,
) -> Result<SimilarityScore> {
    if f1.is_empty() || f2.is_empty() {
        return Err(Error::NoColorData);
    }
    let (t1, t2) = (f1.total_pixels as f64, f2.total_pixels as f64);
    let mut s = 0.0;
    for c1 in &f1.clusters {
        for c2 in &f2.clusters {
            let d = (0..3)
                .map(|i| (c1.centroid[i] - c2.centroid[i]).powi(2))
                .sum::<f64>()
                .sqrt()
                .max(delta_min);
            s += (c1.size as f64 / t1) * (c2.size as f64 / t2) / d;
        }
    }
    Ok(SimilarityScore::similarity(s))
}

/// Euclidean distance between per-axis summaries.
pub fn magnetic_distance(a: &MagneticSignature, b: &MagneticSignature) -> SimilarityScore {
    let d = (0..3)
        .map(|i| (a.summary[i] - b.summary[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    SimilarityScore::distance(d)
}

/// Euclidean distance between energy spectra, the shorter zero-extended.
pub fn magnetic_spectrum_distance(a: &MagneticSignature, b: &MagneticSignature) -> SimilarityScore {
    let n = a.energy_spectrum.len().max(b.energy_spectrum.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let d = (0..n)
        .map(|i| (at(&a.energy_spectrum, i) - at(&b.energy_spectrum, i)).powi(2))
        .sum::<f64>()
        .sqrt();
    SimilarityScore::distance(d)
}

pub fn sound_distance(v1: &[f64], v2: &[f64]) -> Result<SimilarityScore> {
    for v in [v1, v2] {
        if v.len() != SOUND_BINS {
            return Err(Error::SoundLength(v.len()));
        }
    }
    let d = v1.iter().zip(v2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(SimilarityScore::distance(d))
}

/// Sound distance against the venue's vector for the sample's hour;
/// abstains when the venue has no vector for that hour.
pub fn sound_distance_at_hour(sample: &SoundSample, fp: &SoundFingerprint) -> Result<Option<SimilarityScore>> {
    match fp.vector(sample.hour) {
        Some(v) => sound_distance(&sample.vector, v).map(Some),
        None => Ok(None),
    }
}

/// Mean IDF of the distinct query visterms found in the venue's images;
/// 0 without hits.
pub fn visterm_score(query: &BTreeMap<String, u32>, venue: &VenueId, index: &InvertedIndex) -> SimilarityScore {
    let (mut sum, mut hits) = (0.0, 0usize);
    for term in query.iter().filter(|(_, &c)| c > 0).map(|(t, _)| t) {
        if index.venue_contains(venue, term) {
            if let Some(idf) = index.idf(term) {
                sum += idf;
                hits += 1;
            }
        }
    }
    SimilarityScore::similarity(if hits == 0 { 0.0 } else { sum / hits as f64 })
}

pub fn ocr_overlap(ocr_terms: &BTreeSet<String>, tips_terms: &BTreeSet<String>) -> SimilarityScore {
    SimilarityScore::similarity(ocr_terms.intersection(tips_terms).count() as f64)
}

/// Levenshtein distance over Unicode scalar values after lowercasing.
pub fn edit_distance(s1: &str, s2: &str) -> usize {
    let a: Vec<char> = s1.to_lowercase().chars().collect();
    let b: Vec<char> = s2.to_lowercase().chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Check-ins at the venue plus `brand_weight` times check-ins at other
/// branches of its brand.
pub fn familiarity(at_venue: u32, at_brand_siblings: u32, brand_weight: f64) -> SimilarityScore {
    SimilarityScore::similarity(at_venue as f64 + brand_weight * at_brand_siblings as f64)
}
