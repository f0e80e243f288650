//! Region-of-interest detection: thresholding fused with one-pass
//! sequential connected-component labeling.
//!
//! The scan visits pixels row by row and looks only at the left and upper
//! neighbours. When both are labeled with different roots the later root is
//! redirected to the earlier one and its statistics are folded in, so no
//! second relabeling pass is needed. The label raster keeps those root
//! references and is reused as the accessibility mask of the component tree
//! stage.

use serde::Serialize;

use crate::image::{Image, Pixel, Rect, LEVELS};

/// Per-pixel labels plus the root table of merged labels.
///
/// Label 0 is background. The raster carries a one-pixel border of zeros so
/// the scan needs no bounds checks.
#[derive(Debug, Clone)]
pub struct LabelRaster {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    parent: Vec<u32>,
}

impl LabelRaster {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of labels created during the scan, merged ones included.
    pub fn label_count(&self) -> usize {
        self.parent.len() - 1
    }

    #[inline]
    fn index(&self, x: usize, y: usize) -> usize {
        (y + 1) * (self.width + 2) + x + 1
    }

    /// Label written during the scan, before root resolution.
    #[inline]
    pub fn raw_label(&self, x: usize, y: usize) -> u32 {
        self.labels[self.index(x, y)]
    }

    /// Root label of pixel `(x, y)`; 0 for background.
    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.root(self.raw_label(x, y))
    }

    /// Follows root references until a self-rooted label.
    #[inline]
    pub fn root(&self, mut l: u32) -> u32 {
        while self.parent[l as usize] != l {
            l = self.parent[l as usize];
        }
        l
    }

    /// Steps needed to resolve `l` to its root.
    pub fn root_depth(&self, mut l: u32) -> usize {
        let mut steps = 0;
        while self.parent[l as usize] != l {
            l = self.parent[l as usize];
            steps += 1;
        }
        steps
    }

    /// Points every label directly at its root; reads become one lookup.
    fn flatten(&mut self) {
        for l in 0..self.parent.len() {
            let r = self.root(l as u32);
            self.parent[l] = r;
        }
    }
}

/// A thresholded connected component with the statistics gathered while
/// labeling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionOfInterest {
    pub label: u32,
    pub pixel_count: usize,
    #[serde(skip)]
    pub histogram: Box<[u32; LEVELS]>,
    /// Brightest pixel, earliest in raster order on ties.
    pub brightest: Pixel,
    pub brightest_value: u8,
    pub bbox: Rect,
}

impl RegionOfInterest {
    fn seed(label: u32, p: Pixel, value: u8) -> Self {
        let mut histogram = Box::new([0u32; LEVELS]);
        histogram[value as usize] = 1;
        RegionOfInterest {
            label,
            pixel_count: 1,
            histogram,
            brightest: p,
            brightest_value: value,
            bbox: Rect::from_pixel(p),
        }
    }

    #[inline]
    fn add(&mut self, p: Pixel, value: u8) {
        self.pixel_count += 1;
        self.histogram[value as usize] += 1;
        if value > self.brightest_value {
            self.brightest_value = value;
            self.brightest = p;
        }
        self.bbox.include(p.x, p.y);
    }

    fn absorb(&mut self, other: &RegionOfInterest) {
        self.pixel_count += other.pixel_count;
        for (a, b) in self.histogram.iter_mut().zip(other.histogram.iter()) {
            *a += b;
        }
        let later = |p: Pixel| (p.y, p.x);
        if other.brightest_value > self.brightest_value
            || (other.brightest_value == self.brightest_value
                && later(other.brightest) < later(self.brightest))
        {
            self.brightest_value = other.brightest_value;
            self.brightest = other.brightest;
        }
        self.bbox = self.bbox.union(&other.bbox);
    }
}

/// Output of [`detect_rois`]: the surviving regions and the raster that
/// locates their pixels.
#[derive(Debug, Clone)]
pub struct RoiDetection {
    pub rois: Vec<RegionOfInterest>,
    pub raster: LabelRaster,
}

/// Labels the pixels with intensity `>= t` into 4-connected regions and
/// returns those with at least `min_pixels` pixels, largest first (ties by
/// label).
pub fn detect_rois(img: &Image, t: u8, min_pixels: usize) -> RoiDetection {
    let (w, h) = img.dimensions();
    let stride = w + 2;
    let mut labels = vec![0u32; stride * (h + 2)];
    let mut parent = vec![0u32];
    let mut stats: Vec<Option<RegionOfInterest>> = vec![None];

    fn find(parent: &[u32], mut l: u32) -> u32 {
        while parent[l as usize] != l {
            l = parent[l as usize];
        }
        l
    }

    for y in 0..h {
        let row = img.row(y);
        for (x, &v) in row.iter().enumerate() {
            if v < t {
                continue;
            }
            let i = (y + 1) * stride + x + 1;
            let left = labels[i - 1];
            let up = labels[i - stride];
            let p = Pixel::new(x, y);
            let label = match (left, up) {
                (0, 0) => {
                    let l = parent.len() as u32;
                    parent.push(l);
                    stats.push(Some(RegionOfInterest::seed(l, p, v)));
                    labels[i] = l;
                    continue;
                }
                (l, 0) | (0, l) => find(&parent, l),
                (a, b) => {
                    let (ra, rb) = (find(&parent, a), find(&parent, b));
                    if ra != rb {
                        let (keep, gone) = (ra.min(rb), ra.max(rb));
                        parent[gone as usize] = keep;
                        let merged = stats[gone as usize].take().expect("live root");
                        stats[keep as usize]
                            .as_mut()
                            .expect("live root")
                            .absorb(&merged);
                        keep
                    } else {
                        ra
                    }
                }
            };
            labels[i] = label;
            stats[label as usize].as_mut().expect("live root").add(p, v);
        }
    }

    let mut raster = LabelRaster {
        width: w,
        height: h,
        labels,
        parent,
    };
    raster.flatten();
    let mut rois: Vec<RegionOfInterest> = stats
        .into_iter()
        .flatten()
        .filter(|r| r.pixel_count >= min_pixels)
        .collect();
    rois.sort_by(|a, b| b.pixel_count.cmp(&a.pixel_count).then(a.label.cmp(&b.label)));
    RoiDetection { rois, raster }
}
