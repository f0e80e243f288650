//! Stage timings over a frame sequence.
//!
//! Each thread count replays the sequence `runs` times through a fresh
//! pipeline. Per-frame times are averaged over the runs, then summarized per
//! number of fingertips reported in that frame.

use std::path::Path;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::image::Image;
use crate::pipeline::{Pipeline, PipelineError, Resources, Timings};

pub const DEFAULT_RUNS: usize = 5;
pub const DEFAULT_THREADS: [usize; 3] = [1, 2, 4];
/// Frames with more fingertips than this share the last bucket.
pub const MAX_BUCKET: usize = 40;

/// Mean and 95th percentile in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub p95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = (0.95 * sorted.len() as f64).ceil() as usize;
        Summary {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p95: sorted[rank.clamp(1, sorted.len()) - 1],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageSummary {
    pub preprocess: Summary,
    pub roi: Summary,
    pub trees: Summary,
    pub commit: Summary,
    pub total: Summary,
}

impl StageSummary {
    fn of(frames: &[[f64; 5]]) -> StageSummary {
        let col = |i: usize| Summary::of(&frames.iter().map(|f| f[i]).collect::<Vec<_>>());
        StageSummary {
            preprocess: col(0),
            roi: col(1),
            trees: col(2),
            commit: col(3),
            total: col(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub fingertips: usize,
    pub frames: usize,
    pub stages: StageSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreadReport {
    /// Requested thread count.
    pub threads: usize,
    pub frames: usize,
    pub stages: StageSummary,
    /// Non-empty buckets in increasing fingertip count.
    pub buckets: Vec<Bucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub runs: usize,
    pub width: usize,
    pub height: usize,
    pub reports: Vec<ThreadReport>,
}

impl BenchReport {
    pub fn for_threads(&self, threads: usize) -> Option<&ThreadReport> {
        self.reports.iter().find(|r| r.threads == threads)
    }
}

fn as_row(t: &Timings) -> [f64; 5] {
    [t.preprocess, t.roi, t.trees, t.commit, t.total].map(|v| v as f64)
}

/// Times `frames` at every thread count in `threads`.
pub fn bench(
    frames: &[Image],
    cfg: &PipelineConfig,
    res: &Resources,
    threads: &[usize],
    runs: usize,
) -> Result<BenchReport, PipelineError> {
    let runs = runs.max(1);
    let mut reports = Vec::with_capacity(threads.len());
    for &t in threads {
        let mut cfg = cfg.clone();
        cfg.threads = t;
        let mut sums = vec![[0.0; 5]; frames.len()];
        let mut counts = vec![0usize; frames.len()];
        for run in 0..runs {
            let mut p = Pipeline::new(cfg.clone(), res.clone())?;
            for (k, img) in frames.iter().enumerate() {
                let (result, _) = p.process_frame(img)?;
                for (s, v) in sums[k].iter_mut().zip(as_row(&result.timings)) {
                    *s += v;
                }
                if run == 0 {
                    counts[k] = result.fingertips.len().min(MAX_BUCKET);
                }
            }
        }
        let means: Vec<[f64; 5]> = sums.iter().map(|s| s.map(|v| v / runs as f64)).collect();
        let buckets = (0..=MAX_BUCKET)
            .filter_map(|n| {
                let rows: Vec<[f64; 5]> = (0..frames.len()).filter(|&k| counts[k] == n).map(|k| means[k]).collect();
                (!rows.is_empty()).then(|| Bucket {
                    fingertips: n,
                    frames: rows.len(),
                    stages: StageSummary::of(&rows),
                })
            })
            .collect();
        reports.push(ThreadReport {
            threads: t,
            frames: frames.len(),
            stages: StageSummary::of(&means),
            buckets,
        });
    }
    Ok(BenchReport {
        runs,
        width: cfg.frame.width,
        height: cfg.frame.height,
        reports,
    })
}

/// Loads the PGM frames in `dir` and times them.
pub fn bench_dir(
    dir: &Path,
    cfg: &PipelineConfig,
    res: &Resources,
    threads: &[usize],
    runs: usize,
) -> Result<BenchReport, PipelineError> {
    let files = crate::pgm::list_frames(dir).map_err(|source| PipelineError::Io {
        path: dir.to_owned(),
        source,
    })?;
    if files.is_empty() {
        return Err(PipelineError::NoFrames(dir.to_owned()));
    }
    let frames = files
        .iter()
        .map(|path| {
            crate::pgm::read(path).map_err(|source| PipelineError::Frame {
                path: path.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    bench(&frames, cfg, res, threads, runs)
}
