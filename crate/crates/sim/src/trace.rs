//! Simulated check-in traces, one JSON record per line.

use std::io::{BufRead, Write};
use std::path::Path;

use lbsn_core::{CheckInObservation, VenueId};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{SimError, SimResult};
use crate::world::{pick_user, sense, stream, streams, GroundTruth, Visit};

/// Venues within this distance of each other count as neighbors when a
/// fake check-in is placed next door.
pub const FAKE_NEIGHBOR_RADIUS_M: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub checkin_id: u64,
    /// Venue the user is in.
    pub actual_venue: VenueId,
    /// Venue the user checks in to.
    pub claimed_venue: VenueId,
    pub fake: bool,
    pub observation: CheckInObservation,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fake_count(&self) -> usize {
        self.records.iter().filter(|r| r.fake).count()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> SimResult<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| SimError::parse("trace", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TraceRecord =
                serde_json::from_str(&line).map_err(|e| SimError::parse(format!("trace line {}", i + 1), e))?;
            records.push(rec);
        }
        Ok(Trace { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> SimResult<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        std::fs::write(path, buf).map_err(|e| SimError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> SimResult<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| SimError::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Draws `cfg.checkins_per_venue` check-ins claimed at every venue. With
/// probability `p_e` a check-in is fake: the user is in a neighboring venue
/// (half of the time, when one exists) or in a uniformly chosen other
/// venue, and the observation is sensed there. Records are ordered by time.
pub fn simulate_checkins(truth: &GroundTruth, cfg: &SimConfig) -> SimResult<Trace> {
    let mut rng = stream(cfg.seed, streams::TRACE);
    let n = truth.venues.len();
    let fp_cfg = &cfg.engine.fingerprint;
    let mut records = Vec::with_capacity(n * cfg.checkins_per_venue);
    for claimed in 0..n {
        let neighbors = truth.neighbors(claimed, FAKE_NEIGHBOR_RADIUS_M);
        for _ in 0..cfg.checkins_per_venue {
            let fake = n > 1 && rng.random_bool(cfg.noise.fake_checkin_prob);
            let actual = if !fake {
                claimed
            } else if !neighbors.is_empty() && rng.random_bool(0.5) {
                *neighbors.choose(&mut rng).expect("nonempty")
            } else {
                let j = rng.random_range(0..n - 1);
                if j >= claimed {
                    j + 1
                } else {
                    j
                }
            };
            let user = pick_user(truth, claimed, &mut rng);
            let visit = Visit::draw(truth, actual, user, &mut rng);
            let observation = sense(truth, &cfg.radio, &cfg.noise, fp_cfg, &visit, &mut rng)?;
            records.push(TraceRecord {
                checkin_id: 0,
                actual_venue: truth.venues[actual].id.clone(),
                claimed_venue: truth.venues[claimed].id.clone(),
                fake,
                observation,
            });
        }
    }
    records.sort_by(|a, b| {
        a.observation
            .timestamp
            .total_cmp(&b.observation.timestamp)
            .then_with(|| a.claimed_venue.cmp(&b.claimed_venue))
    });
    for (i, r) in records.iter_mut().enumerate() {
        r.checkin_id = i as u64;
    }
    Ok(Trace { records })
}
