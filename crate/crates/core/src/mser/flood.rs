//! Linear-time flooding of one region of interest.
//!
//! Pixels are processed in the inverted intensity space so bright blobs
//! become minima. Boundary pixels wait in a radix priority queue with one
//! bucket per gray level; components under construction live on a stack
//! whose depth is bounded by the number of gray levels.

use crate::image::{Image, Pixel, LEVELS};
use crate::roi::{LabelRaster, RegionOfInterest};

use super::{DescriptorAccumulator, ExtremalRegion, RegionId, NONE};

const SENTINEL: u16 = LEVELS as u16;

struct Component {
    level: u16,
    seed: u32,
    acc: DescriptorAccumulator,
    first_child: u32,
    child_count: u32,
}

/// Boundary pixels keyed by inverted gray level, lowest level first.
struct BucketQueue {
    buckets: Vec<Vec<(u32, u8)>>,
    occupied: [u64; 4],
}

impl BucketQueue {
    fn new() -> Self {
        BucketQueue {
            buckets: (0..LEVELS).map(|_| Vec::new()).collect(),
            occupied: [0; 4],
        }
    }

    #[inline]
    fn push(&mut self, level: u8, pixel: u32, next_edge: u8) {
        let l = level as usize;
        self.buckets[l].push((pixel, next_edge));
        self.occupied[l >> 6] |= 1 << (l & 63);
    }

    #[inline]
    fn pop(&mut self) -> Option<(u8, u32, u8)> {
        let word = self.occupied.iter().position(|&w| w != 0)?;
        let l = word * 64 + self.occupied[word].trailing_zeros() as usize;
        let bucket = &mut self.buckets[l];
        let (p, e) = bucket.pop().expect("occupied bucket");
        if bucket.is_empty() {
            self.occupied[word] &= !(1 << (l & 63));
        }
        Some((l as u8, p, e))
    }
}

pub(super) struct FloodOutput {
    pub regions: Vec<ExtremalRegion>,
    pub max_stack_depth: usize,
}

/// Floods the pixels of `roi` starting at its brightest pixel and emits one
/// region per (component, level) at which the component's pixel set changes.
/// Regions are emitted children first, so ids ascend in postfix order and
/// the last region is the root.
pub(super) fn flood(img: &Image, raster: &LabelRaster, roi: &RegionOfInterest) -> FloodOutput {
    let bbox = roi.bbox;
    let origin = [bbox.min_x, bbox.min_y];
    // local frame with a one-pixel inaccessible border
    let bw = bbox.width() + 2;
    let bh = bbox.height() + 2;
    let mut inv = vec![0u8; bw * bh];
    let mut accessed = vec![true; bw * bh];
    for ly in 0..bbox.height() {
        let y = bbox.min_y + ly;
        let src = &img.row(y)[bbox.min_x..=bbox.max_x];
        let base = (ly + 1) * bw + 1;
        for (lx, &v) in src.iter().enumerate() {
            if raster.label(bbox.min_x + lx, y) == roi.label {
                inv[base + lx] = 255 - v;
                accessed[base + lx] = false;
            }
        }
    }
    let to_abs = |i: u32| -> (usize, usize) {
        let i = i as usize;
        (i % bw - 1 + bbox.min_x, i / bw - 1 + bbox.min_y)
    };
    let offsets: [isize; 4] = [-(bw as isize), -1, 1, bw as isize];

    let mut regions: Vec<ExtremalRegion> = Vec::new();
    let mut queue = BucketQueue::new();
    let new_component = |level: u16, seed: u32| Component {
        level,
        seed,
        acc: DescriptorAccumulator::new(origin),
        first_child: NONE,
        child_count: 0,
    };
    let mut stack: Vec<Component> = Vec::with_capacity(LEVELS + 1);
    stack.push(new_component(SENTINEL, 0));
    let mut max_depth = 0usize;

    // Closes components until the top of the stack sits at `new_level`.
    let process_stack = |new_level: u16,
                         stack: &mut Vec<Component>,
                         regions: &mut Vec<ExtremalRegion>| {
        loop {
            let top = stack.last_mut().expect("sentinel stays");
            debug_assert!(top.level < new_level);
            let id = regions.len() as u32;
            let (sx, sy) = to_abs(top.seed);
            regions.push(ExtremalRegion {
                gray_level: (255 - top.level) as u8,
                size: top.acc.n as usize,
                parent: None,
                first_child: top.first_child,
                next_sibling: NONE,
                child_count: top.child_count,
                stability: 0.0,
                seed: Pixel::new(sx, sy),
                bbox: top.acc.bbox.expect("emitted component has pixels"),
                acc: top.acc.clone(),
            });
            let mut c = top.first_child;
            while c != NONE {
                regions[c as usize].parent = Some(id as RegionId);
                c = regions[c as usize].next_sibling;
            }
            let second_level = stack[stack.len() - 2].level;
            if new_level < second_level {
                // grow in place: same pixels, now at a higher level
                let top = stack.last_mut().unwrap();
                top.level = new_level;
                top.first_child = id;
                top.child_count = 1;
                return;
            }
            let top = stack.pop().unwrap();
            let second = stack.last_mut().unwrap();
            second.acc.merge(&top.acc);
            regions[id as usize].next_sibling = second.first_child;
            second.first_child = id;
            second.child_count += 1;
            if new_level <= second.level {
                return;
            }
        }
    };

    let (bx, by) = (roi.brightest.x - bbox.min_x + 1, roi.brightest.y - bbox.min_y + 1);
    let mut cur = (by * bw + bx) as u32;
    debug_assert!(!accessed[cur as usize], "brightest pixel outside its region");
    accessed[cur as usize] = true;
    let mut cur_level = inv[cur as usize];
    let mut edge = 0u8;
    stack.push(new_component(cur_level as u16, cur));

    loop {
        while edge < 4 {
            let n = (cur as isize + offsets[edge as usize]) as usize;
            edge += 1;
            if accessed[n] {
                continue;
            }
            accessed[n] = true;
            let nl = inv[n];
            if nl >= cur_level {
                queue.push(nl, n as u32, 0);
            } else {
                queue.push(cur_level, cur, edge);
                cur = n as u32;
                cur_level = nl;
                edge = 0;
                stack.push(new_component(nl as u16, cur));
                max_depth = max_depth.max(stack.len() - 1);
            }
        }
        let (x, y) = to_abs(cur);
        stack
            .last_mut()
            .unwrap()
            .acc
            .add(x, y, 255 - inv[cur as usize]);
        match queue.pop() {
            None => break,
            Some((level, p, e)) => {
                if level != cur_level {
                    process_stack(level as u16, &mut stack, &mut regions);
                }
                cur = p;
                cur_level = level;
                edge = e;
            }
        }
    }
    process_stack(SENTINEL, &mut stack, &mut regions);
    max_depth = max_depth.max(1);
    FloodOutput {
        regions,
        max_stack_depth: max_depth,
    }
}

