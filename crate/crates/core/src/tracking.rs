//! Fingertip tracking with double exponential smoothing and greedy
//! nearest-neighbour matching.

use serde::{Deserialize, Serialize};

use crate::image::BoundingBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    /// Smoothing factor, strictly inside (0, 1).
    pub alpha: f64,
    /// Largest predicted-to-observed distance for a match, in pixels.
    pub gate: f64,
    /// Frames a track may go unmatched before it is dropped.
    pub miss_tolerance: u32,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        crate::config::PipelineConfig::default().tracking
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrackingConfigError {
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    Alpha(f64),
    #[error("gate must be finite and positive, got {0}")]
    Gate(f64),
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<(), TrackingConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TrackingConfigError::Alpha(self.alpha));
        }
        if !(self.gate.is_finite() && self.gate > 0.0) {
            return Err(TrackingConfigError::Gate(self.gate));
        }
        Ok(())
    }
}

/// Double exponential smoothing state for one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Smoother {
    pub alpha: f64,
    pub s: [f64; 2],
    pub s2: [f64; 2],
}

impl Smoother {
    /// Starts both statistics at the first observation.
    pub fn new(alpha: f64, p: [f64; 2]) -> Self {
        assert!(alpha > 0.0 && alpha < 1.0, "alpha outside (0, 1)");
        Smoother { alpha, s: p, s2: p }
    }

    pub fn update(&mut self, p: [f64; 2]) {
        let a = self.alpha;
        for k in 0..2 {
            self.s[k] = a * p[k] + (1.0 - a) * self.s[k];
            self.s2[k] = a * self.s[k] + (1.0 - a) * self.s2[k];
        }
    }

    /// Position expected `lambda` frames after the last update.
    pub fn predict(&self, lambda: u32) -> [f64; 2] {
        let r = self.alpha * lambda as f64 / (1.0 - self.alpha);
        [
            (2.0 + r) * self.s[0] - (1.0 + r) * self.s2[0],
            (2.0 + r) * self.s[1] - (1.0 + r) * self.s2[1],
        ]
    }
}

/// A track as seen by the matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackQuery {
    pub id: u64,
    pub predicted: [f64; 2],
    /// Bounding box of the track's cluster in the previous frame.
    pub cluster: BoundingBox,
}

/// A fingertip observed in the current frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub position: [f64; 2],
    /// Bounding box of the fingertip's cluster in this frame.
    pub cluster: BoundingBox,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatchResult {
    /// (track id, observation index), in commit order.
    pub pairs: Vec<(u64, usize)>,
    /// Unmatched observation indices, ascending.
    pub births: Vec<usize>,
    /// Unmatched track ids, ascending.
    pub deaths: Vec<u64>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Candidate pairs `(distance, track index, observation index)` that pass the
/// cluster and distance gates. `use_clusters = false` skips the cluster gate.
pub fn admissible_pairs(
    tracks: &[TrackQuery],
    obs: &[Observation],
    gate: f64,
    use_clusters: bool,
) -> Vec<(f64, usize, usize)> {
    let mut out = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        let area = t.cluster.inflate(gate);
        for (oi, o) in obs.iter().enumerate() {
            if use_clusters && !area.intersects(&o.cluster.inflate(gate)) {
                continue;
            }
            let d = dist(t.predicted, o.position);
            if d <= gate {
                out.push((d, ti, oi));
            }
        }
    }
    out
}

/// Greedy matching: the globally closest admissible pair is committed first,
/// conflicting pairs are discarded, and so on. Ties go to the lower track id,
/// then the lower observation index.
pub fn greedy_match(tracks: &[TrackQuery], obs: &[Observation], gate: f64) -> MatchResult {
    greedy_from_pairs(tracks, obs.len(), admissible_pairs(tracks, obs, gate, true))
}

pub fn greedy_from_pairs(tracks: &[TrackQuery], n_obs: usize, mut pairs: Vec<(f64, usize, usize)>) -> MatchResult {
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(tracks[a.1].id.cmp(&tracks[b.1].id))
            .then(a.2.cmp(&b.2))
    });
    let mut track_used = vec![false; tracks.len()];
    let mut obs_used = vec![false; n_obs];
    let mut result = MatchResult::default();
    for (_, ti, oi) in pairs {
        if track_used[ti] || obs_used[oi] {
            continue;
        }
        track_used[ti] = true;
        obs_used[oi] = true;
        result.pairs.push((tracks[ti].id, oi));
    }
    result.births = (0..n_obs).filter(|&i| !obs_used[i]).collect();
    result.deaths = tracks
        .iter()
        .zip(&track_used)
        .filter(|(_, used)| !**used)
        .map(|(t, _)| t.id)
        .collect();
    result.deaths.sort_unstable();
    result
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Track {
    pub id: u64,
    pub smoother: Smoother,
    pub last_observed: [f64; 2],
    pub cluster: BoundingBox,
    /// Frames since birth, counting the birth frame.
    pub age: u32,
    /// Consecutive unmatched frames.
    pub missed: u32,
}

impl Track {
    /// Prediction for the next frame, extrapolated over any missed frames.
    pub fn predicted(&self) -> [f64; 2] {
        self.smoother.predict(self.missed + 1)
    }
}

/// Live track set. Ids increase monotonically and are never reused.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackingConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackingUpdate {
    /// Track id assigned to each observation, by index.
    pub ids: Vec<u64>,
    pub matches: MatchResult,
    /// Tracks dropped this frame after exceeding the miss tolerance.
    pub removed: Vec<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackingConfig) -> Self {
        Tracker {
            cfg,
            tracks: Vec::new(),
            next_id: 0,
        }
    }

    pub fn config(&self) -> &TrackingConfig {
        &self.cfg
    }

    /// Live tracks, ordered by id.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn update(&mut self, obs: &[Observation]) -> TrackingUpdate {
        let queries: Vec<TrackQuery> = self
            .tracks
            .iter()
            .map(|t| TrackQuery {
                id: t.id,
                predicted: t.predicted(),
                cluster: t.cluster,
            })
            .collect();
        let matches = greedy_match(&queries, obs, self.cfg.gate);
        let mut ids = vec![u64::MAX; obs.len()];
        for &(id, oi) in &matches.pairs {
            let t = self.tracks.iter_mut().find(|t| t.id == id).expect("matched track exists");
            t.smoother.update(obs[oi].position);
            t.last_observed = obs[oi].position;
            t.cluster = obs[oi].cluster;
            t.age += 1;
            t.missed = 0;
            ids[oi] = id;
        }
        let mut removed = Vec::new();
        for &id in &matches.deaths {
            let t = self.tracks.iter_mut().find(|t| t.id == id).expect("unmatched track exists");
            t.missed += 1;
            t.age += 1;
            if t.missed > self.cfg.miss_tolerance {
                removed.push(id);
            }
        }
        self.tracks.retain(|t| !removed.contains(&t.id));
        for &oi in &matches.births {
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                id,
                smoother: Smoother::new(self.cfg.alpha, obs[oi].position),
                last_observed: obs[oi].position,
                cluster: obs[oi].cluster,
                age: 1,
                missed: 0,
            });
            ids[oi] = id;
        }
        TrackingUpdate { ids, matches, removed }
    }
}
