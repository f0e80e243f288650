//! Fingertip classification of component-tree leaves.
//!
//! Touching fingertips are the brightest spots of a frame, so only leaves are
//! candidates. Each candidate is paired with its finger region (the largest
//! single-leaf ancestor within a size limit), summarized by eight features,
//! scored with a weighted sum and bucketed into three confidence classes.
//! A candidate becomes a fingertip only after three frames with at least one
//! high and no "no confidence" result.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::descriptors::{bounding_ellipse, centroid, hu1, intensity_stats};
use crate::image::Image;
use crate::mser::{ComponentTree, RegionId};

pub const FEATURE_COUNT: usize = 8;

/// Slot names of the feature vector, in order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "candidate_area",
    "finger_area",
    "depth",
    "max_link_growth",
    "finger_growth",
    "range_ratio",
    "max_phi1",
    "dark_pixels",
];

pub type Features = [f64; FEATURE_COUNT];

/// Frames of class history considered by the confirmation rule.
pub const HISTORY_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    No,
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// One weight per feature slot, see [`FEATURE_NAMES`].
    pub weights: Features,
    pub t_low: f64,
    pub t_high: f64,
    pub max_finger_size: usize,
    /// Half-width of the square window scanned for dark pixels.
    pub dark_radius: usize,
    /// A pixel is dark below this fraction of the candidate's mean intensity.
    pub dark_fraction: f64,
    /// Maximum centroid distance for carrying a candidate's history over to
    /// the next frame.
    pub association_radius: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        crate::config::PipelineConfig::default().detector
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DetectorConfigError {
    #[error("t_low ({0}) must be below t_high ({1})")]
    Thresholds(f64, f64),
    #[error("weight {0} is not finite")]
    Weight(usize),
    #[error("dark_fraction must lie in [0, 1]")]
    DarkFraction,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorConfigError> {
        if !(self.t_low < self.t_high) {
            return Err(DetectorConfigError::Thresholds(self.t_low, self.t_high));
        }
        if let Some(i) = self.weights.iter().position(|w| !w.is_finite()) {
            return Err(DetectorConfigError::Weight(i));
        }
        if !(0.0..=1.0).contains(&self.dark_fraction) {
            return Err(DetectorConfigError::DarkFraction);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FingertipCandidate {
    pub leaf: RegionId,
    pub finger: RegionId,
    pub features: Features,
    pub confidence: f64,
    pub class: Confidence,
    /// Leaf centroid in frame pixels.
    pub position: [f64; 2],
}

/// Largest ancestor-or-self of `leaf` reachable through parents of at most
/// `max_size` pixels that have no other child.
pub fn find_finger_region(tree: &ComponentTree, leaf: RegionId, max_size: usize) -> RegionId {
    debug_assert!(tree.is_leaf(leaf));
    let mut finger = leaf;
    while let Some(p) = tree.parent(finger) {
        let r = tree.region(p);
        if r.size > max_size || r.child_count != 1 {
            break;
        }
        finger = p;
    }
    finger
}

/// Longest downward path below `id`, in edges.
pub fn subtree_depth(tree: &ComponentTree, id: RegionId) -> usize {
    let mut best = 0;
    let mut stack = vec![(id, 0usize)];
    while let Some((r, d)) = stack.pop() {
        best = best.max(d);
        stack.extend(tree.children(r).map(|c| (c, d + 1)));
    }
    best
}

/// Highest gray level inside the subtree of `id`.
fn peak_gray(tree: &ComponentTree, id: RegionId) -> u8 {
    tree.subtree_range(id)
        .map(|r| tree.region(r).gray_level)
        .max()
        .unwrap_or(tree.region(id).gray_level)
}

/// Gray levels spanned by the subtree of `id`, both ends included.
pub fn intensity_range(tree: &ComponentTree, id: RegionId) -> u32 {
    (peak_gray(tree, id) - tree.region(id).gray_level) as u32 + 1
}

/// Pixels in the `(2r+1)^2` window around `center` (clipped to the frame)
/// with intensity strictly below `limit`.
pub fn dark_pixel_count(img: &Image, center: [f64; 2], radius: usize, limit: f64) -> usize {
    let cx = (center[0] + 0.5).floor().clamp(0.0, (img.width() - 1) as f64) as usize;
    let cy = (center[1] + 0.5).floor().clamp(0.0, (img.height() - 1) as f64) as usize;
    // v < limit for an integer v exactly when v < ceil(limit)
    let bound = if limit > 255.0 { 256 } else { limit.ceil().max(0.0) as u16 };
    let x0 = cx.saturating_sub(radius);
    let x1 = (cx + radius).min(img.width() - 1);
    let y0 = cy.saturating_sub(radius);
    let y1 = (cy + radius).min(img.height() - 1);
    (y0..=y1)
        .map(|y| {
            img.row(y)[x0..=x1]
                .iter()
                .filter(|&&v| (v as u16) < bound)
                .count()
        })
        .sum()
}

pub fn compute_features(
    tree: &ComponentTree,
    img: &Image,
    leaf: RegionId,
    finger: RegionId,
    cfg: &DetectorConfig,
) -> Features {
    let lr = tree.region(leaf);
    let fr = tree.region(finger);
    let le = bounding_ellipse(&lr.acc);
    let fe = bounding_ellipse(&fr.acc);

    let mut max_link = 0.0f64;
    let mut max_phi1 = 0.0f64;
    let mut node = leaf;
    while node != finger {
        let child = tree.region(node);
        let p = tree.parent(node).expect("finger is an ancestor of the leaf");
        let growth = (tree.region(p).size - child.size) as f64 / child.size as f64;
        max_link = max_link.max(growth);
        node = p;
    }
    for r in tree.subtree_range(finger).filter(|&r| r != finger) {
        max_phi1 = max_phi1.max(hu1(&tree.region(r).acc));
    }
    let (mean, _) = intensity_stats(&lr.acc);
    let dark = dark_pixel_count(img, le.center, cfg.dark_radius, cfg.dark_fraction * mean);
    [
        le.w * le.h,
        fe.w * fe.h,
        subtree_depth(tree, finger) as f64,
        max_link,
        (fr.size - lr.size) as f64 / lr.size as f64,
        intensity_range(tree, leaf) as f64 / intensity_range(tree, finger) as f64,
        max_phi1,
        dark as f64,
    ]
}

pub fn score(features: &Features, cfg: &DetectorConfig) -> f64 {
    features.iter().zip(&cfg.weights).map(|(f, w)| f * w).sum()
}

/// Lower-inclusive thresholds: `c >= t_high` is high, `c >= t_low` is low.
pub fn classify(c: f64, cfg: &DetectorConfig) -> Confidence {
    if c >= cfg.t_high {
        Confidence::High
    } else if c >= cfg.t_low {
        Confidence::Low
    } else {
        Confidence::No
    }
}

/// Scores every leaf of `tree`, in leaf id order.
pub fn detect_candidates(tree: &ComponentTree, img: &Image, cfg: &DetectorConfig) -> Vec<FingertipCandidate> {
    tree.leaves()
        .map(|leaf| {
            let finger = find_finger_region(tree, leaf, cfg.max_finger_size);
            let features = compute_features(tree, img, leaf, finger, cfg);
            let confidence = score(&features, cfg);
            FingertipCandidate {
                leaf,
                finger,
                features,
                confidence,
                class: classify(confidence, cfg),
                position: centroid(&tree.region(leaf).acc),
            }
        })
        .collect()
}

/// The confirmation rule over the most recent classes (oldest first):
/// a full window of three frames, at least one high, never "no".
pub fn temporal_rule(classes: &[Confidence]) -> bool {
    classes.len() >= HISTORY_LEN && {
        let window = &classes[classes.len() - HISTORY_LEN..];
        window.contains(&Confidence::High) && !window.contains(&Confidence::No)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HistoryEntry {
    position: [f64; 2],
    classes: VecDeque<Confidence>,
}

/// Class history of candidates across frames. Candidates inherit the history
/// of the nearest previous-frame candidate within the association radius;
/// the rest start fresh.
#[derive(Debug, Clone, Default)]
pub struct CandidateHistory {
    entries: Vec<HistoryEntry>,
}

impl CandidateHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends this frame's classes and returns, per input, whether the
    /// candidate is confirmed. Unmatched histories are dropped.
    pub fn update(&mut self, frame: &[([f64; 2], Confidence)], radius: f64) -> Vec<bool> {
        let mut pairs = Vec::new();
        for (i, (p, _)) in frame.iter().enumerate() {
            for (j, e) in self.entries.iter().enumerate() {
                let d = (p[0] - e.position[0]).hypot(p[1] - e.position[1]);
                if d <= radius {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut taken_new = vec![None; frame.len()];
        let mut taken_old = vec![false; self.entries.len()];
        for (_, i, j) in pairs {
            if taken_new[i].is_none() && !taken_old[j] {
                taken_new[i] = Some(j);
                taken_old[j] = true;
            }
        }
        let mut next = Vec::with_capacity(frame.len());
        let mut confirmed = Vec::with_capacity(frame.len());
        for (i, &(position, class)) in frame.iter().enumerate() {
            let mut classes = match taken_new[i] {
                Some(j) => std::mem::take(&mut self.entries[j].classes),
                None => VecDeque::with_capacity(HISTORY_LEN),
            };
            if classes.len() == HISTORY_LEN {
                classes.pop_front();
            }
            classes.push_back(class);
            confirmed.push(temporal_rule(classes.make_contiguous()));
            next.push(HistoryEntry { position, classes });
        }
        self.entries = next;
        confirmed
    }
}
