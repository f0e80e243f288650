//! Component trees of bright extremal regions.
//!
//! For every region of interest the flood builds the full hierarchy of
//! extremal regions, not only the maximally stable ones, and every region
//! carries a [`DescriptorAccumulator`] filled while flooding. A region is
//! stored once per gray level at which its pixel set changes, so a plateau
//! does not produce a chain of identical regions.

mod accumulator;
mod flood;

use std::fmt::Write as _;

use serde::Serialize;

pub use accumulator::{merge_accumulators, DescriptorAccumulator, RawMoments};

use crate::image::{Image, Pixel, Rect};
use crate::roi::{LabelRaster, RegionOfInterest};

pub type RegionId = usize;

const NONE: u32 = u32::MAX;

#[derive(Debug, thiserror::Error)]
pub enum MserError {
    #[error("region of interest {0} has no pixels")]
    EmptyRoi(u32),
    #[error("stability needs delta >= 1")]
    ZeroDelta,
}

/// A connected set of pixels all at least as bright as `gray_level`, with
/// every pixel on its outer boundary darker.
#[derive(Debug, Clone, Serialize)]
pub struct ExtremalRegion {
    /// Lowest original intensity inside the region.
    pub gray_level: u8,
    pub size: usize,
    pub parent: Option<RegionId>,
    #[serde(skip)]
    first_child: u32,
    #[serde(skip)]
    next_sibling: u32,
    pub child_count: u32,
    pub stability: f64,
    /// A pixel of the region; flooding it at `gray_level` recovers the region.
    pub seed: Pixel,
    pub bbox: Rect,
    #[serde(skip)]
    pub acc: DescriptorAccumulator,
}

/// Extremal regions of one region of interest. Ids ascend in postfix order:
/// every region comes after all of its descendants and the root is last.
#[derive(Debug, Clone)]
pub struct ComponentTree {
    regions: Vec<ExtremalRegion>,
    /// Lowest id in the subtree of each region.
    first: Vec<u32>,
    roi_label: u32,
    delta: u8,
    max_stack_depth: usize,
}

impl ComponentTree {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn root(&self) -> RegionId {
        self.regions.len() - 1
    }

    pub fn roi_label(&self) -> u32 {
        self.roi_label
    }

    pub fn delta(&self) -> u8 {
        self.delta
    }

    /// Deepest component stack reached while flooding.
    pub fn max_stack_depth(&self) -> usize {
        self.max_stack_depth
    }

    pub fn region(&self, id: RegionId) -> &ExtremalRegion {
        &self.regions[id]
    }

    pub fn regions(&self) -> &[ExtremalRegion] {
        &self.regions
    }

    pub fn parent(&self, id: RegionId) -> Option<RegionId> {
        self.regions[id].parent
    }

    pub fn children(&self, id: RegionId) -> Children<'_> {
        Children {
            tree: self,
            next: self.regions[id].first_child,
        }
    }

    pub fn is_leaf(&self, id: RegionId) -> bool {
        self.regions[id].child_count == 0
    }

    pub fn leaves(&self) -> impl Iterator<Item = RegionId> + '_ {
        (0..self.len()).filter(|&id| self.is_leaf(id))
    }

    /// `id` itself, then its parent, up to the root.
    pub fn ancestors(&self, id: RegionId) -> impl Iterator<Item = RegionId> + '_ {
        std::iter::successors(Some(id), |&r| self.parent(r))
    }

    /// Ids of `id` and every region below it. Postfix numbering makes every
    /// subtree a contiguous block ending at its root.
    pub fn subtree_range(&self, id: RegionId) -> std::ops::RangeInclusive<RegionId> {
        self.first[id] as usize..=id
    }

    /// `id` and every region below it, depth first.
    pub fn subtree(&self, id: RegionId) -> Vec<RegionId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(r) = stack.pop() {
            out.push(r);
            stack.extend(self.children(r));
        }
        out
    }

    /// Child with the most pixels, lowest id on ties.
    pub fn largest_child(&self, id: RegionId) -> Option<RegionId> {
        self.children(id)
            .max_by(|&a, &b| self.regions[a].size.cmp(&self.regions[b].size).then(b.cmp(&a)))
    }

    /// Relative growth `(|R(i+delta)| - |R(i-delta)|) / |R(i)|` around region
    /// `id`, with levels counted in the inverted space (upward means darker).
    ///
    /// `R(i+delta)` is the largest ancestor whose level is within `delta`;
    /// `R(i-delta)` follows the largest child downwards until `delta` levels
    /// are covered. Both walks stop at the ends of the chain.
    pub fn stability(&self, id: RegionId, delta: u8) -> Result<f64, MserError> {
        if delta == 0 {
            return Err(MserError::ZeroDelta);
        }
        Ok(self.stability_unchecked(id, delta))
    }

    fn stability_unchecked(&self, id: RegionId, delta: u8) -> f64 {
        let r = &self.regions[id];
        // inverted level = 255 - gray_level
        let level = 255 - r.gray_level as i32;
        let d = delta as i32;
        let mut up = id;
        while let Some(p) = self.parent(up) {
            if 255 - self.regions[p].gray_level as i32 > level + d {
                break;
            }
            up = p;
        }
        let mut down = id;
        while 255 - self.regions[down].gray_level as i32 > level - d {
            match self.largest_child(down) {
                Some(c) => down = c,
                None => break,
            }
        }
        (self.regions[up].size - self.regions[down].size) as f64 / r.size as f64
    }

    /// Reconstructs the pixel set of region `id` by flooding from its seed.
    pub fn pixels(&self, img: &Image, raster: &LabelRaster, id: RegionId) -> Vec<Pixel> {
        let r = &self.regions[id];
        let (w, h) = img.dimensions();
        let inside = |p: Pixel| img.at(p) >= r.gray_level && raster.label(p.x, p.y) == self.roi_label;
        let mut seen = std::collections::HashSet::from([r.seed]);
        let mut stack = vec![r.seed];
        let mut out = Vec::with_capacity(r.size);
        while let Some(p) = stack.pop() {
            out.push(p);
            for q in crate::image::neighbors4(p, w, h) {
                if inside(q) && seen.insert(q) {
                    stack.push(q);
                }
            }
        }
        out.sort();
        out
    }

    /// Indented text rendering, one region per line:
    /// `level size stability [min_x,min_y..max_x,max_y]`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(self.root(), 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let r = &self.regions[id];
            let b = r.bbox;
            let _ = writeln!(
                out,
                "{:indent$}{} {} {:.4} [{},{}..{},{}]",
                "",
                r.gray_level,
                r.size,
                r.stability,
                b.min_x,
                b.min_y,
                b.max_x,
                b.max_y,
                indent = depth * 2
            );
            let mut kids: Vec<_> = self.children(id).collect();
            kids.sort_by_key(|&c| std::cmp::Reverse(c));
            stack.extend(kids.into_iter().map(|c| (c, depth + 1)));
        }
        out
    }
}

pub struct Children<'a> {
    tree: &'a ComponentTree,
    next: u32,
}

impl Iterator for Children<'_> {
    type Item = RegionId;

    fn next(&mut self) -> Option<RegionId> {
        if self.next == NONE {
            return None;
        }
        let id = self.next as RegionId;
        self.next = self.tree.regions[id].next_sibling;
        Some(id)
    }
}

/// Builds the component tree of `roi`, flooding from its brightest pixel and
/// treating pixels of other labels as inaccessible. Stability is evaluated
/// for every region with step `delta`.
pub fn build_tree(
    img: &Image,
    raster: &LabelRaster,
    roi: &RegionOfInterest,
    delta: u8,
) -> Result<ComponentTree, MserError> {
    if roi.pixel_count == 0 || raster.label(roi.brightest.x, roi.brightest.y) != roi.label {
        return Err(MserError::EmptyRoi(roi.label));
    }
    if delta == 0 {
        return Err(MserError::ZeroDelta);
    }
    let out = flood::flood(img, raster, roi);
    let mut first: Vec<u32> = (0..out.regions.len() as u32).collect();
    for id in 0..out.regions.len() {
        if let Some(p) = out.regions[id].parent {
            first[p] = first[p].min(first[id]);
        }
    }
    let mut tree = ComponentTree {
        regions: out.regions,
        first,
        roi_label: roi.label,
        delta,
        max_stack_depth: out.max_stack_depth,
    };
    for id in 0..tree.len() {
        tree.regions[id].stability = tree.stability_unchecked(id, delta);
    }
    Ok(tree)
}
