//! Detection accuracy against ground truth.
//!
//! Per frame, reported fingertips are matched to labeled ones greedily by
//! distance within a radius. Hit rate is matched over labeled, false-positive
//! rate is unmatched over reported. A labeled hand counts as correctly
//! clustered when all of its detected fingertips were reported in one hand.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::pipeline::{FrameResult, Pipeline, PipelineError, Resources};
use crate::synth::{FrameTruth, GroundTruth, Renderer, SceneSpec};

pub const DEFAULT_MATCH_RADIUS: f64 = 8.0;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("log has {log} frames, ground truth {truth}")]
    FrameCount { log: usize, truth: usize },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("log line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

/// The parts of an event log record that evaluation reads.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct LoggedFrame {
    pub frame: usize,
    pub fingertips: Vec<LoggedFingertip>,
    pub hands: Vec<LoggedHand>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LoggedFingertip {
    pub id: u64,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LoggedHand {
    pub members: Vec<u64>,
}

impl From<&FrameResult> for LoggedFrame {
    fn from(r: &FrameResult) -> Self {
        LoggedFrame {
            frame: r.frame,
            fingertips: r
                .fingertips
                .iter()
                .map(|f| LoggedFingertip {
                    id: f.id,
                    position: f.position,
                })
                .collect(),
            hands: r
                .hands
                .iter()
                .map(|h| LoggedHand {
                    members: h.members.clone(),
                })
                .collect(),
        }
    }
}

/// Renders `spec` and runs every frame through a pipeline configured by
/// `cfg`, with the scene's illumination images and the frame size of the
/// scene.
pub fn run_scene(spec: &SceneSpec, cfg: &PipelineConfig) -> Result<(Vec<FrameResult>, GroundTruth), PipelineError> {
    let mut cfg = cfg.clone();
    cfg.frame.width = spec.width;
    cfg.frame.height = spec.height;
    let r = Renderer::new(spec);
    let res = Resources {
        map: None,
        illumination: Some(r.illumination()),
    };
    let mut p = Pipeline::new(cfg, res)?;
    let mut results = Vec::with_capacity(spec.frames);
    let mut truth = GroundTruth {
        width: spec.width,
        height: spec.height,
        frames: Vec::with_capacity(spec.frames),
    };
    for k in 0..spec.frames {
        results.push(p.process_frame(&r.frame(k))?.0);
        truth.frames.push(r.truth(k));
    }
    Ok((results, truth))
}

pub fn read_log(path: &Path) -> Result<Vec<LoggedFrame>, EvalError> {
    let io = |source| EvalError::Io {
        path: path.to_owned(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| EvalError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

/// Raw counters; every metric is a ratio of two of them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub visible: u64,
    pub correct: u64,
    pub wrong: u64,
    /// Labeled hands with at least one detected fingertip.
    pub hands: u64,
    pub hands_correct: u64,
}

impl Counts {
    fn ratio(num: u64, den: u64, empty: f64) -> f64 {
        if den == 0 {
            empty
        } else {
            num as f64 / den as f64
        }
    }

    pub fn hit_rate(&self) -> f64 {
        Self::ratio(self.correct, self.visible, 1.0)
    }

    pub fn false_positive_rate(&self) -> f64 {
        Self::ratio(self.wrong, self.correct + self.wrong, 0.0)
    }

    pub fn hand_precision(&self) -> f64 {
        Self::ratio(self.hands_correct, self.hands, 1.0)
    }

    fn add(&mut self, o: Counts) {
        self.visible += o.visible;
        self.correct += o.correct;
        self.wrong += o.wrong;
        self.hands += o.hands;
        self.hands_correct += o.hands_correct;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub counts: Counts,
    pub hit_rate: f64,
    pub false_positive_rate: f64,
    pub hand_precision: f64,
}

impl From<Counts> for Metrics {
    fn from(counts: Counts) -> Self {
        Metrics {
            counts,
            hit_rate: counts.hit_rate(),
            false_positive_rate: counts.false_positive_rate(),
            hand_precision: counts.hand_precision(),
        }
    }
}

/// Greedy nearest matching: `(truth index, detection index)` pairs.
pub fn match_points(truth: &[[f64; 2]], detected: &[[f64; 2]], radius: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, d) in detected.iter().enumerate() {
            let dist = (t[0] - d[0]).hypot(t[1] - d[1]);
            if dist <= radius {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; detected.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_t[i] && !used_d[j] {
            used_t[i] = true;
            used_d[j] = true;
            out.push((i, j));
        }
    }
    out
}

pub fn evaluate_frame(log: &LoggedFrame, truth: &FrameTruth, radius: f64) -> Counts {
    let tp: Vec<[f64; 2]> = truth.fingertips.iter().map(|t| t.position).collect();
    let dp: Vec<[f64; 2]> = log.fingertips.iter().map(|f| f.position).collect();
    let matches = match_points(&tp, &dp, radius);
    let mut c = Counts {
        visible: tp.len() as u64,
        correct: matches.len() as u64,
        wrong: (dp.len() - matches.len()) as u64,
        ..Counts::default()
    };
    let hand_of = |id: u64| log.hands.iter().position(|h| h.members.contains(&id));
    for h in &truth.hands {
        let detected: Vec<Option<usize>> = matches
            .iter()
            .filter(|(t, _)| h.members.contains(t))
            .map(|&(_, d)| hand_of(log.fingertips[d].id))
            .collect();
        if detected.is_empty() {
            continue;
        }
        c.hands += 1;
        if detected[0].is_some() && detected.iter().all(|d| *d == detected[0]) {
            c.hands_correct += 1;
        }
    }
    c
}

pub fn evaluate(log: &[LoggedFrame], truth: &GroundTruth, radius: f64) -> Result<Metrics, EvalError> {
    if log.len() != truth.frames.len() {
        return Err(EvalError::FrameCount {
            log: log.len(),
            truth: truth.frames.len(),
        });
    }
    let mut total = Counts::default();
    for (l, t) in log.iter().zip(&truth.frames) {
        total.add(evaluate_frame(l, t, radius));
    }
    Ok(total.into())
}
