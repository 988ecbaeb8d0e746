use chrono::{NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::config::FingerprintConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisitPeriod {
    EarlyMorning,
    LateMorning,
    EarlyAfternoon,
    LateAfternoon,
    EarlyEvening,
    LateEvening,
}

impl VisitPeriod {
    pub const ALL: [VisitPeriod; 6] = [
        VisitPeriod::EarlyMorning,
        VisitPeriod::LateMorning,
        VisitPeriod::EarlyAfternoon,
        VisitPeriod::LateAfternoon,
        VisitPeriod::EarlyEvening,
        VisitPeriod::LateEvening,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Period containing `hour` (fractional hours since midnight) given the
    /// start hour of each period. Hours before the first start belong to the
    /// last period, which wraps past midnight.
    pub fn from_hour(hour: f64, starts: &[u32; 6]) -> VisitPeriod {
        let mut period = VisitPeriod::LateEvening;
        for (p, &s) in VisitPeriod::ALL.iter().zip(starts) {
            if hour >= s as f64 {
                period = *p;
            }
        }
        period
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Stationary,
    Browsing,
    Walking,
}

impl Activity {
    pub const ALL: [Activity; 3] = [Activity::Stationary, Activity::Browsing, Activity::Walking];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Quantizes the mobility-to-stationary time ratio.
    pub fn from_ratio(r: f64) -> Activity {
        if r < 0.2 {
            Activity::Stationary
        } else if r <= 2.0 {
            Activity::Browsing
        } else {
            Activity::Walking
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MobilityObservation {
    pub visit_period: VisitPeriod,
    pub activity: Activity,
    /// Index of the 30-minute stay interval.
    pub duration_bucket: u32,
}

const BUCKET_SECS: f64 = 1800.0;

pub fn quantize_mobility(
    mobility_ratio: f64,
    local_time: NaiveTime,
    stay_seconds: f64,
    cfg: &FingerprintConfig,
) -> Result<MobilityObservation> {
    if !mobility_ratio.is_finite() || !stay_seconds.is_finite() {
        return Err(Error::invalid("mobility inputs must be finite"));
    }
    if mobility_ratio < 0.0 || stay_seconds < 0.0 {
        return Err(Error::invalid("mobility inputs must be nonnegative"));
    }
    if cfg.period_starts.windows(2).any(|w| w[0] >= w[1]) || cfg.period_starts[5] >= 24 {
        return Err(Error::invalid("period starts must increase within [0, 24)"));
    }
    let hour = local_time.num_seconds_from_midnight() as f64 / 3600.0;
    let bucket = ((stay_seconds / BUCKET_SECS).floor() as u64).min(cfg.max_duration_bucket as u64);
    Ok(MobilityObservation {
        visit_period: VisitPeriod::from_hour(hour, &cfg.period_starts),
        activity: Activity::from_ratio(mobility_ratio),
        duration_bucket: bucket as u32,
    })
}

/// Histograms of visit period, activity and stay duration, kept as counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MobilityFingerprint {
    visits: [u32; 6],
    activities: [u32; 3],
    durations: Vec<u32>,
    samples: u32,
}

impl MobilityFingerprint {
    pub fn new(max_duration_bucket: u32) -> Self {
        MobilityFingerprint {
            visits: [0; 6],
            activities: [0; 3],
            durations: vec![0; max_duration_bucket as usize + 1],
            samples: 0,
        }
    }

    pub fn from_observations<'a>(
        max_duration_bucket: u32,
        obs: impl IntoIterator<Item = &'a MobilityObservation>,
    ) -> Self {
        let mut fp = Self::new(max_duration_bucket);
        for o in obs {
            fp.add(o);
        }
        fp
    }

    pub fn add(&mut self, obs: &MobilityObservation) {
        self.visits[obs.visit_period.index()] += 1;
        self.activities[obs.activity.index()] += 1;
        let b = (obs.duration_bucket as usize).min(self.durations.len() - 1);
        self.durations[b] += 1;
        self.samples += 1;
    }

    pub fn absorb(&mut self, other: &MobilityFingerprint) {
        for (a, b) in self.visits.iter_mut().zip(other.visits) {
            *a += b;
        }
        for (a, b) in self.activities.iter_mut().zip(other.activities) {
            *a += b;
        }
        if other.durations.len() > self.durations.len() {
            self.durations.resize(other.durations.len(), 0);
        }
        for (a, b) in self.durations.iter_mut().zip(&other.durations) {
            *a += b;
        }
        self.samples += other.samples;
    }

    pub fn samples(&self) -> u32 {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn visit_hist(&self) -> Vec<f64> {
        self.normalized(&self.visits)
    }

    pub fn activity_hist(&self) -> Vec<f64> {
        self.normalized(&self.activities)
    }

    pub fn duration_hist(&self) -> Vec<f64> {
        self.normalized(&self.durations)
    }

    fn normalized(&self, counts: &[u32]) -> Vec<f64> {
        let n = self.samples.max(1) as f64;
        counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Bin probabilities for a query, each additively smoothed by
    /// `smoothing` and renormalized when `smoothing > 0`.
    pub fn probabilities(&self, obs: &MobilityObservation, smoothing: f64) -> [f64; 3] {
        let n = self.samples as f64;
        let p = |count: u32, bins: usize| {
            let raw = if n > 0.0 { count as f64 / n } else { 0.0 };
            if smoothing > 0.0 {
                (raw + smoothing) / (1.0 + smoothing * bins as f64)
            } else {
                raw
            }
        };
        let d = self.durations.get(obs.duration_bucket as usize).copied().unwrap_or(0);
        [
            p(self.visits[obs.visit_period.index()], 6),
            p(self.activities[obs.activity.index()], 3),
            p(d, self.durations.len()),
        ]
    }

    /// Largest probability product attainable by any query.
    pub fn max_probability(&self, smoothing: f64) -> f64 {
        let best = |counts: &[u32]| counts.iter().copied().max().unwrap_or(0);
        let probe = |v: u32, bins: usize| {
            let raw = if self.samples > 0 {
                v as f64 / self.samples as f64
            } else {
                0.0
            };
            if smoothing > 0.0 {
                (raw + smoothing) / (1.0 + smoothing * bins as f64)
            } else {
                raw
            }
        };
        probe(best(&self.visits), 6)
            * probe(best(&self.activities), 3)
            * probe(best(&self.durations), self.durations.len())
    }
}
