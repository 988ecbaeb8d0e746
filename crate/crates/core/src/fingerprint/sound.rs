use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SOUND_BINS: usize = 100;

/// Amplitude histogram: fraction of samples falling in each of 100 equal
/// amplitude intervals over [0, 1].
pub fn build_sound_fingerprint(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut hist = vec![0.0; SOUND_BINS];
    for &a in samples {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid(format!("amplitude {a} outside [0, 1]")));
        }
        let bin = ((a * SOUND_BINS as f64).floor() as usize).min(SOUND_BINS - 1);
        hist[bin] += 1.0;
    }
    let n = samples.len() as f64;
    hist.iter_mut().for_each(|v| *v /= n);
    Ok(hist)
}

/// One check-in's sound sample, tagged with its hour of day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundSample {
    pub hour: u8,
    pub vector: Vec<f64>,
}

impl SoundSample {
    pub fn new(hour: u8, vector: Vec<f64>) -> Result<Self> {
        if hour >= 24 {
            return Err(Error::invalid(format!("hour {hour} outside [0, 24)")));
        }
        if vector.len() != SOUND_BINS {
            return Err(Error::SoundLength(vector.len()));
        }
        Ok(SoundSample { hour, vector })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourSound {
    pub vector: Vec<f64>,
    /// Number of samples averaged into `vector`.
    pub count: u32,
}

/// Per-hour averaged amplitude histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SoundFingerprint {
    pub hour_bins: BTreeMap<u8, HourSound>,
}

impl SoundFingerprint {
    pub fn add(&mut self, sample: &SoundSample) {
        self.add_weighted(sample.hour, &sample.vector, 1);
    }

    fn add_weighted(&mut self, hour: u8, vector: &[f64], count: u32) {
        match self.hour_bins.get_mut(&hour) {
            Some(bin) => {
                let total = (bin.count + count) as f64;
                let (wa, wb) = (bin.count as f64 / total, count as f64 / total);
                for (a, b) in bin.vector.iter_mut().zip(vector) {
                    *a = *a * wa + b * wb;
                }
                bin.count += count;
            }
            None => {
                self.hour_bins.insert(
                    hour,
                    HourSound {
                        vector: vector.to_vec(),
                        count,
                    },
                );
            }
        }
    }

    pub fn absorb(&mut self, other: &SoundFingerprint) {
        for (&h, bin) in &other.hour_bins {
            self.add_weighted(h, &bin.vector, bin.count);
        }
    }

    pub fn vector(&self, hour: u8) -> Option<&[f64]> {
        self.hour_bins.get(&hour).map(|b| b.vector.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.hour_bins.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bin() {
        let v = build_sound_fingerprint(&[0.005; 7]).unwrap();
        assert_eq!(v.len(), 100);
        assert_eq!(v[0], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn extremes_split_evenly() {
        let v = build_sound_fingerprint(&[0.005, 0.995]).unwrap();
        assert_eq!(v[0], 0.5);
        assert_eq!(v[99], 0.5);
        let v = build_sound_fingerprint(&[1.0]).unwrap();
        assert_eq!(v[99], 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(build_sound_fingerprint(&[]), Err(Error::NoSamples)));
        assert!(build_sound_fingerprint(&[1.5]).is_err());
        assert!(build_sound_fingerprint(&[-0.1]).is_err());
        assert!(SoundSample::new(24, vec![0.0; 100]).is_err());
        assert!(matches!(SoundSample::new(3, vec![0.0; 5]), Err(Error::SoundLength(5))));
    }

    #[test]
    fn hour_bins_average() {
        let mut fp = SoundFingerprint::default();
        let mut a = vec![0.0; 100];
        a[0] = 1.0;
        let mut b = vec![0.0; 100];
        b[1] = 1.0;
        fp.add(&SoundSample::new(9, a).unwrap());
        fp.add(&SoundSample::new(9, b).unwrap());
        let v = fp.vector(9).unwrap();
        assert_eq!((v[0], v[1]), (0.5, 0.5));
        assert!(fp.vector(10).is_none());
    }
}
