use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use super::{Pipeline, PipelineError, Timings};
use crate::pgm;
use crate::tuio::UdpSender;

#[derive(Default)]
pub struct ReplayOptions<'a> {
    /// Event log sink, one JSON object per frame.
    pub log: Option<&'a mut dyn Write>,
    pub sender: Option<&'a UdpSender>,
    /// Frames per second to pace at; `None` runs at full speed.
    pub pace: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ReplaySummary {
    pub frames: usize,
    pub fingertips: usize,
    pub timings: Vec<Timings>,
}

/// Processes the PGM frames in `dir` in file name order.
pub fn run_replay(pipeline: &mut Pipeline, dir: &Path, mut opts: ReplayOptions) -> Result<ReplaySummary, PipelineError> {
    let io = |source| PipelineError::Io {
        path: dir.to_owned(),
        source,
    };
    let files = pgm::list_frames(dir).map_err(io)?;
    if files.is_empty() {
        return Err(PipelineError::NoFrames(dir.to_owned()));
    }
    let start = Instant::now();
    let mut summary = ReplaySummary::default();
    for (k, path) in files.iter().enumerate() {
        if let Some(fps) = opts.pace {
            let due = start + Duration::from_secs_f64(k as f64 / fps);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        let img = pgm::read(path).map_err(|source| PipelineError::Frame {
            path: path.clone(),
            source,
        })?;
        let (result, bundle) = pipeline.process_frame(&img)?;
        if let Some(log) = opts.log.as_deref_mut() {
            writeln!(log, "{}", result.log_line()).map_err(io)?;
        }
        if let Some(tx) = opts.sender {
            tx.send(&bundle)?;
        }
        summary.frames += 1;
        summary.fingertips += result.fingertips.len();
        summary.timings.push(result.timings);
    }
    if let Some(fps) = opts.pace {
        let end = start + Duration::from_secs_f64(files.len() as f64 / fps);
        if let Some(wait) = end.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
    Ok(summary)
}
