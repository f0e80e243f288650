use serde::Serialize;

use crate::image::Rect;

/// Raw geometric moments up to order three, `m_pq = sum x^p y^q`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RawMoments {
    pub m00: u64,
    pub m10: u64,
    pub m01: u64,
    pub m11: u64,
    pub m20: u64,
    pub m02: u64,
    pub m30: u64,
    pub m21: u64,
    pub m12: u64,
    pub m03: u64,
}

impl RawMoments {
    #[inline]
    fn add(&mut self, x: u64, y: u64) {
        let (xx, yy) = (x * x, y * y);
        self.m00 += 1;
        self.m10 += x;
        self.m01 += y;
        self.m11 += x * y;
        self.m20 += xx;
        self.m02 += yy;
        self.m30 += xx * x;
        self.m21 += xx * y;
        self.m12 += x * yy;
        self.m03 += yy * y;
    }

    fn merge(&mut self, o: &RawMoments) {
        self.m00 += o.m00;
        self.m10 += o.m10;
        self.m01 += o.m01;
        self.m11 += o.m11;
        self.m20 += o.m20;
        self.m02 += o.m02;
        self.m30 += o.m30;
        self.m21 += o.m21;
        self.m12 += o.m12;
        self.m03 += o.m03;
    }

    /// `m_pq` for `p + q <= 3`.
    pub fn get(&self, p: u32, q: u32) -> u64 {
        match (p, q) {
            (0, 0) => self.m00,
            (1, 0) => self.m10,
            (0, 1) => self.m01,
            (1, 1) => self.m11,
            (2, 0) => self.m20,
            (0, 2) => self.m02,
            (3, 0) => self.m30,
            (2, 1) => self.m21,
            (1, 2) => self.m12,
            (0, 3) => self.m03,
            _ => panic!("moment order ({p}, {q}) not accumulated"),
        }
    }
}

/// Sums that let every region descriptor be derived in constant time and be
/// merged by plain addition when two regions join.
///
/// Moments are taken about `origin` (the region-of-interest corner) to keep
/// the third-order sums small; the origin is added back when the centroid is
/// derived. Intensity sums use the original, non-inverted values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DescriptorAccumulator {
    pub origin: [usize; 2],
    pub n: u64,
    pub s1: u64,
    pub s2: u64,
    pub moments: RawMoments,
    /// Absolute pixel bounds; `None` while empty.
    pub bbox: Option<Rect>,
}

impl DescriptorAccumulator {
    pub fn new(origin: [usize; 2]) -> Self {
        DescriptorAccumulator {
            origin,
            n: 0,
            s1: 0,
            s2: 0,
            moments: RawMoments::default(),
            bbox: None,
        }
    }

    pub fn from_pixels(origin: [usize; 2], pixels: impl IntoIterator<Item = (usize, usize, u8)>) -> Self {
        let mut acc = Self::new(origin);
        for (x, y, v) in pixels {
            acc.add(x, y, v);
        }
        acc
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Adds pixel `(x, y)` (absolute coordinates) with intensity `value`.
    #[inline]
    pub fn add(&mut self, x: usize, y: usize, value: u8) {
        debug_assert!(x >= self.origin[0] && y >= self.origin[1]);
        let v = value as u64;
        self.n += 1;
        self.s1 += v;
        self.s2 += v * v;
        self.moments
            .add((x - self.origin[0]) as u64, (y - self.origin[1]) as u64);
        match &mut self.bbox {
            Some(b) => b.include(x, y),
            None => self.bbox = Some(Rect::new(x, y, x, y)),
        }
    }

    /// Folds in the sums of a disjoint pixel set.
    pub fn merge(&mut self, other: &DescriptorAccumulator) {
        assert_eq!(self.origin, other.origin, "accumulators use different origins");
        self.n += other.n;
        self.s1 += other.s1;
        self.s2 += other.s2;
        self.moments.merge(&other.moments);
        self.bbox = match (self.bbox, other.bbox) {
            (Some(a), Some(b)) => Some(a.union(&b)),
            (a, b) => a.or(b),
        };
    }
}

/// Sum of two accumulators over disjoint pixel sets.
pub fn merge_accumulators(a: &DescriptorAccumulator, b: &DescriptorAccumulator) -> DescriptorAccumulator {
    let mut out = a.clone();
    out.merge(b);
    out
}
