//! Frame processing.
//!
//! Each frame passes three stages separated by barriers:
//!
//! 1. preprocessing (undistortion then normalization), fanned out over
//!    horizontal row bands;
//! 2. per-ROI analysis (component tree, fingertip candidates, clustering,
//!    registration), ROIs claimed by workers in decreasing size order;
//! 3. a serial commit (temporal confirmation, tracking, TUIO).
//!
//! Results never depend on the number of threads.

mod replay;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::calibration::{normalize_in_place, undistort_rows, CalibrationError, IlluminationModel, UndistortionMap};
use crate::config::PipelineConfig;
use crate::fingertip::{detect_candidates, CandidateHistory, Confidence, FingertipCandidate};
use crate::hands::{cluster_fingertips, ClusterInput, Finger, HandCluster, Handedness, RegistrationError};
use crate::image::{BoundingBox, Image};
use crate::mser::build_tree;
use crate::roi::{detect_rois, LabelRaster, RegionOfInterest};
use crate::tracking::{Observation, Tracker};
use crate::tuio::{encode_frame, CursorInput, HandInput, OscBundle, TuioFrame, TuioState};

pub use replay::{run_replay, ReplayOptions, ReplaySummary};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Pgm(#[from] crate::pgm::PgmError),
    #[error("frame is {actual:?}, expected {expected:?}")]
    FrameSize {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("{path}: {source}")]
    Frame {
        path: std::path::PathBuf,
        source: crate::pgm::PgmError,
    },
    #[error("no frames in {0}")]
    NoFrames(std::path::PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Tuio(#[from] crate::tuio::TuioError),
}

impl PipelineError {
    /// Whether the error stems from the configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Calibration(_))
    }
}

/// Calibration data referenced by the config.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub map: Option<UndistortionMap>,
    pub illumination: Option<IlluminationModel>,
}

impl Resources {
    /// Loads the files named in `cfg` and checks them against the frame size.
    pub fn load(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let c = &cfg.calibration;
        let map = c.map.as_deref().map(UndistortionMap::load).transpose()?;
        let illumination = match (&c.illumination_min, &c.illumination_max) {
            (Some(lo), Some(hi)) => Some(IlluminationModel::new(crate::pgm::read(lo)?, crate::pgm::read(hi)?)?),
            _ => None,
        };
        let res = Resources { map, illumination };
        res.check(cfg)?;
        Ok(res)
    }

    fn check(&self, cfg: &PipelineConfig) -> Result<(), PipelineError> {
        let frame = (cfg.frame.width, cfg.frame.height);
        let output = match &self.map {
            Some(m) => {
                if m.source_dimensions() != frame {
                    return Err(PipelineError::Config(format!(
                        "undistortion map expects {:?} frames, config says {:?}",
                        m.source_dimensions(),
                        frame
                    )));
                }
                (m.width(), m.height())
            }
            None => frame,
        };
        if let Some(ill) = &self.illumination {
            if ill.dimensions() != output {
                return Err(PipelineError::Config(format!(
                    "illumination images are {:?}, corrected frames are {:?}",
                    ill.dimensions(),
                    output
                )));
            }
        }
        Ok(())
    }
}

/// Preprocesses `rows` of the corrected frame into `out`.
fn preprocess_band(img: &Image, res: &Resources, rows: std::ops::Range<usize>, width: usize, out: &mut [u8]) {
    match &res.map {
        Some(map) => undistort_rows(img, map, rows.clone(), out),
        None => out.copy_from_slice(&img.as_slice()[rows.start * width..rows.end * width]),
    }
    if let Some(ill) = &res.illumination {
        normalize_in_place(out, rows.start * width, ill);
    }
}

/// Undistorts and normalizes `img` in bands of `band_rows` rows.
pub fn preprocess(img: &Image, res: &Resources, pool: &rayon::ThreadPool, band_rows: usize) -> Image {
    use rayon::prelude::*;
    let (w, h) = match &res.map {
        Some(m) => (m.width(), m.height()),
        None => img.dimensions(),
    };
    let mut out = Image::new(w, h);
    let band_rows = band_rows.max(1);
    pool.install(|| {
        out.as_mut_slice()
            .par_chunks_mut(band_rows * w)
            .enumerate()
            .for_each(|(i, band)| {
                let y0 = i * band_rows;
                preprocess_band(img, res, y0..y0 + band.len() / w, w, band);
            });
    });
    out
}

/// Undistorts and normalizes `img` on the calling thread.
pub fn preprocess_serial(img: &Image, res: &Resources) -> Image {
    let (w, h) = match &res.map {
        Some(m) => (m.width(), m.height()),
        None => img.dimensions(),
    };
    let mut out = Image::new(w, h);
    preprocess_band(img, res, 0..h, w, out.as_mut_slice());
    out
}

/// Output of the per-ROI stage.
#[derive(Debug, Clone, Default)]
struct RoiOutput {
    /// Candidates of at least low confidence.
    candidates: Vec<FingertipCandidate>,
    clusters: Vec<HandCluster>,
}

fn analyze_roi(img: &Image, raster: &LabelRaster, roi: &RegionOfInterest, cfg: &PipelineConfig) -> RoiOutput {
    let tree = match build_tree(img, raster, roi, cfg.mser.delta) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("dropping roi {}: {e}", roi.label);
            return RoiOutput::default();
        }
    };
    let candidates: Vec<FingertipCandidate> = detect_candidates(&tree, img, &cfg.detector)
        .into_iter()
        .filter(|c| c.class >= Confidence::Low)
        .collect();
    let inputs: Vec<ClusterInput> = candidates
        .iter()
        .enumerate()
        .map(|(id, c)| ClusterInput {
            id,
            leaf: c.leaf,
            position: c.position,
        })
        .collect();
    let mut clusters = cluster_fingertips(&tree, &inputs, &cfg.hands).clusters;
    for c in &mut clusters {
        c.register();
    }
    RoiOutput {
        candidates,
        clusters,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportedFingertip {
    /// Track id, also the TUIO session id.
    pub id: u64,
    pub position: [f64; 2],
    pub class: Confidence,
    pub finger: Option<Finger>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportedHand {
    /// TUIO hand session id.
    pub sid: i32,
    /// Track ids of the confirmed members.
    pub members: Vec<u64>,
    pub bbox: BoundingBox,
    pub handedness: Option<Handedness>,
    pub unregistered: Option<RegistrationError>,
}

/// Stage timings in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub preprocess: u64,
    pub roi: u64,
    pub trees: u64,
    pub commit: u64,
    pub total: u64,
}

/// What a frame produced. Everything but `timings` is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameResult {
    pub frame: usize,
    pub fingertips: Vec<ReportedFingertip>,
    pub hands: Vec<ReportedHand>,
    pub tuio: TuioFrame,
    #[serde(skip)]
    pub timings: Timings,
    /// Low-or-better candidates before confirmation.
    #[serde(skip)]
    pub candidates: usize,
}

impl FrameResult {
    /// One line of the event log.
    pub fn log_line(&self) -> String {
        serde_json::to_string(self).expect("frame results serialize")
    }
}

/// Frame processor holding all cross-frame state.
pub struct Pipeline {
    cfg: PipelineConfig,
    res: Resources,
    pool: rayon::ThreadPool,
    threads: usize,
    history: CandidateHistory,
    tracker: Tracker,
    tuio: TuioState,
    frame: usize,
    schedule: Vec<usize>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, res: Resources) -> Result<Self, PipelineError> {
        cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        res.check(&cfg)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let threads = pool.current_num_threads();
        let (w, h) = match &res.map {
            Some(m) => (m.width(), m.height()),
            None => (cfg.frame.width, cfg.frame.height),
        };
        Ok(Pipeline {
            tracker: Tracker::new(cfg.tracking.clone()),
            tuio: TuioState::new(w, h, cfg.tuio.fps),
            cfg,
            res,
            pool,
            threads,
            history: CandidateHistory::new(),
            frame: 0,
            schedule: Vec::new(),
        })
    }

    /// Loads calibration files named in `cfg`.
    pub fn from_config(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        let res = Resources::load(&cfg)?;
        Self::new(cfg, res)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Pixel counts of the last frame's ROIs in the order workers claimed them.
    pub fn schedule_trace(&self) -> &[usize] {
        &self.schedule
    }

    pub fn process_frame(&mut self, img: &Image) -> Result<(FrameResult, OscBundle), PipelineError> {
        let expected = (self.cfg.frame.width, self.cfg.frame.height);
        if img.dimensions() != expected {
            return Err(PipelineError::FrameSize {
                expected,
                actual: img.dimensions(),
            });
        }
        let t0 = Instant::now();
        let band = img.height().div_ceil(self.threads * 4).max(8);
        let corrected = preprocess(img, &self.res, &self.pool, band);
        let t1 = Instant::now();
        let det = detect_rois(&corrected, self.cfg.roi.threshold, self.cfg.roi.min_pixels);
        let t2 = Instant::now();
        let outputs = self.analyze(&corrected, &det.raster, &det.rois);
        let t3 = Instant::now();
        let (mut result, bundle) = self.commit(outputs)?;
        let t4 = Instant::now();
        let us = |a: Instant, b: Instant| (b - a).as_micros() as u64;
        result.timings = Timings {
            preprocess: us(t0, t1),
            roi: us(t1, t2),
            trees: us(t2, t3),
            commit: us(t3, t4),
            total: us(t0, t4),
        };
        Ok((result, bundle))
    }

    /// Per-ROI stage. ROIs arrive sorted by decreasing pixel count; workers
    /// claim them in that order through a shared counter.
    fn analyze(&mut self, img: &Image, raster: &LabelRaster, rois: &[RegionOfInterest]) -> Vec<RoiOutput> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<RoiOutput>>> = rois.iter().map(|_| Mutex::new(None)).collect();
        let claims = Mutex::new(Vec::with_capacity(rois.len()));
        let cfg = &self.cfg;
        let workers = self.threads.min(rois.len());
        self.pool.scope(|s| {
            for _ in 0..workers {
                s.spawn(|_| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= rois.len() {
                        break;
                    }
                    claims.lock().expect("claims lock").push(i);
                    let out = analyze_roi(img, raster, &rois[i], cfg);
                    *slots[i].lock().expect("slot lock") = Some(out);
                });
            }
        });
        let mut claims = claims.into_inner().expect("claims lock");
        // the counter hands out indices in order; the log may interleave
        claims.sort_unstable();
        self.schedule = claims.iter().map(|&i| rois[i].pixel_count).collect();
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every roi analyzed"))
            .collect()
    }

    fn commit(&mut self, outputs: Vec<RoiOutput>) -> Result<(FrameResult, OscBundle), PipelineError> {
        let frame = self.frame;
        self.frame += 1;
        struct Entry {
            position: [f64; 2],
            class: Confidence,
            cluster: usize,
            finger: Option<Finger>,
        }
        let mut entries: Vec<Entry> = Vec::new();
        let mut clusters: Vec<HandCluster> = Vec::new();
        for out in outputs {
            let base = entries.len();
            let cluster_base = clusters.len();
            let mut cluster_of = vec![usize::MAX; out.candidates.len()];
            let mut finger_of = vec![None; out.candidates.len()];
            for (k, c) in out.clusters.iter().enumerate() {
                for (slot, &m) in c.members.iter().enumerate() {
                    cluster_of[m] = cluster_base + k;
                    finger_of[m] = c.registration.as_ref().map(|r| r.fingers[slot]);
                }
            }
            for (i, c) in out.candidates.iter().enumerate() {
                entries.push(Entry {
                    position: c.position,
                    class: c.class,
                    cluster: cluster_of[i],
                    finger: finger_of[i],
                });
            }
            for mut c in out.clusters {
                for m in &mut c.members {
                    *m += base;
                }
                clusters.push(c);
            }
        }
        let frame_classes: Vec<([f64; 2], Confidence)> = entries.iter().map(|e| (e.position, e.class)).collect();
        let confirmed = self.history.update(&frame_classes, self.cfg.detector.association_radius);

        let tips: Vec<usize> = (0..entries.len()).filter(|&i| confirmed[i]).collect();
        let obs: Vec<Observation> = tips
            .iter()
            .map(|&i| Observation {
                position: entries[i].position,
                cluster: clusters[entries[i].cluster].bbox,
            })
            .collect();
        let update = self.tracker.update(&obs);
        let mut track_of = vec![None; entries.len()];
        for (&i, &id) in tips.iter().zip(&update.ids) {
            track_of[i] = Some(id);
        }

        let mut fingertips: Vec<ReportedFingertip> = tips
            .iter()
            .map(|&i| ReportedFingertip {
                id: track_of[i].expect("confirmed tips are tracked"),
                position: entries[i].position,
                class: entries[i].class,
                finger: entries[i].finger,
            })
            .collect();
        fingertips.sort_by_key(|f| f.id);

        let mut hand_inputs = Vec::new();
        let mut hand_meta = Vec::new();
        for c in &clusters {
            let members: Vec<u64> = c.members.iter().filter_map(|&m| track_of[m]).collect();
            if members.is_empty() {
                continue;
            }
            let fingers = c.registration.as_ref().map(|_| {
                c.members
                    .iter()
                    .filter(|&&m| track_of[m].is_some())
                    .map(|&m| entries[m].finger.expect("registered members have fingers"))
                    .collect()
            });
            hand_inputs.push(HandInput {
                members,
                bbox: c.bbox,
                handedness: c.registration.as_ref().map(|r| r.handedness),
                fingers,
            });
            hand_meta.push(c.unregistered);
        }
        let cursors: Vec<CursorInput> = fingertips
            .iter()
            .map(|f| CursorInput {
                id: f.id,
                position: f.position,
            })
            .collect();
        let tuio = self.tuio.frame(&cursors, &hand_inputs);
        let sids = self.tuio.hand_ids();
        let mut hands: Vec<ReportedHand> = hand_inputs
            .into_iter()
            .zip(hand_meta)
            .zip(sids)
            .map(|((h, unregistered), sid)| ReportedHand {
                sid,
                members: h.members,
                bbox: h.bbox,
                handedness: h.handedness,
                unregistered,
            })
            .collect();
        hands.sort_by_key(|h| h.sid);
        let bundle = encode_frame(&tuio)?;
        Ok((
            FrameResult {
                frame,
                fingertips,
                hands,
                tuio,
                timings: Timings::default(),
                candidates: entries.len(),
            },
            bundle,
        ))
    }
}
