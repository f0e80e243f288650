//! Direct, slow reference computations.

use std::collections::{BTreeMap, VecDeque};

use touchpipe::image::{BoundingBox, Image};
use touchpipe::tracking::{Observation, TrackQuery};

/// A connected component of `{p : I(p) >= t}` for some threshold `t`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ThresholdRegion {
    pub level: u8,
    pub size: usize,
    /// (min_x, min_y, max_x, max_y)
    pub bbox: (usize, usize, usize, usize),
    pub parent: Option<usize>,
}

/// All distinct threshold components of `img` under 4-connectivity, each
/// with the smallest distinct component strictly containing it as parent.
pub fn threshold_regions(img: &Image) -> Vec<ThresholdRegion> {
    let (w, h) = img.dimensions();
    let n = w * h;
    let mut key_to_region: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut regions: Vec<ThresholdRegion> = Vec::new();
    let mut reps: Vec<usize> = Vec::new();
    // region of pixel p at threshold t
    let mut at: Vec<Vec<u32>> = Vec::with_capacity(256);
    for t in 0..=255u8 {
        let mut label = vec![u32::MAX; n];
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] || img.get(start % w, start / w) < t {
                continue;
            }
            let mut members = Vec::new();
            let mut q = VecDeque::from([start]);
            seen[start] = true;
            while let Some(p) = q.pop_front() {
                members.push(p);
                let (x, y) = (p % w, p / w);
                let mut push = |nx: usize, ny: usize| {
                    let np = ny * w + nx;
                    if !seen[np] && img.get(nx, ny) >= t {
                        seen[np] = true;
                        q.push_back(np);
                    }
                };
                if x > 0 {
                    push(x - 1, y);
                }
                if x + 1 < w {
                    push(x + 1, y);
                }
                if y > 0 {
                    push(x, y - 1);
                }
                if y + 1 < h {
                    push(x, y + 1);
                }
            }
            let min_idx = *members.iter().min().unwrap();
            let key = (min_idx, members.len());
            let id = *key_to_region.entry(key).or_insert_with(|| {
                let level = members.iter().map(|&p| img.get(p % w, p / w)).min().unwrap();
                let xs = members.iter().map(|&p| p % w);
                let ys = members.iter().map(|&p| p / w);
                regions.push(ThresholdRegion {
                    level,
                    size: members.len(),
                    bbox: (xs.clone().min().unwrap(), ys.clone().min().unwrap(), xs.max().unwrap(), ys.max().unwrap()),
                    parent: None,
                });
                reps.push(min_idx);
                regions.len() - 1
            });
            for &p in &members {
                label[p] = id as u32;
            }
        }
        at.push(label);
    }
    for id in 0..regions.len() {
        let level = regions[id].level as usize;
        regions[id].parent = (0..level)
            .rev()
            .map(|t| at[t][reps[id]] as usize)
            .find(|&r| r != id);
    }
    regions
}

/// Descriptor values recomputed from a pixel list with plain loops.
#[derive(Debug, Clone)]
pub struct DirectDescriptors {
    pub mean: f64,
    pub variance: f64,
    pub centroid: [f64; 2],
    /// mu[p][q] for p + q <= 3.
    pub mu: [[f64; 4]; 4],
    /// Sum of |x - xc|^p |y - yc|^q, the magnitude scale of mu[p][q].
    pub mu_scale: [[f64; 4]; 4],
    pub hu: [f64; 7],
    /// Hu polynomials evaluated on |nu| with every sign positive.
    pub hu_scale: [f64; 7],
    /// (theta of the major axis, minor semi-axis, major semi-axis)
    pub ellipse: (f64, f64, f64),
}

pub fn direct_descriptors(pixels: &[(usize, usize, u8)]) -> DirectDescriptors {
    let n = pixels.len() as f64;
    let mean = pixels.iter().map(|p| p.2 as f64).sum::<f64>() / n;
    let variance = pixels.iter().map(|p| (p.2 as f64 - mean).powi(2)).sum::<f64>() / n;
    let xc = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let yc = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let mut mu = [[0.0; 4]; 4];
    let mut mu_scale = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in 0..4 - p {
            for &(x, y, _) in pixels {
                let v = (x as f64 - xc).powi(p as i32) * (y as f64 - yc).powi(q as i32);
                mu[p][q] += v;
                mu_scale[p][q] += v.abs();
            }
        }
    }
    let nu = |m: &[[f64; 4]; 4], p: usize, q: usize| m[p][q] / n.powf(1.0 + (p + q) as f64 / 2.0);
    let hu = hu_from(|p, q| nu(&mu, p, q), false);
    let hu_scale = hu_from(|p, q| nu(&mu_scale, p, q), true);
    let (a, b, c) = (mu[2][0] / n, mu[1][1] / n, mu[0][2] / n);
    let disc = ((a - c) / 2.0).hypot(b);
    let (lmax, lmin) = ((a + c) / 2.0 + disc, (a + c) / 2.0 - disc);
    // major-axis eigenvector, from whichever row of (A - lmax I) is better conditioned
    let theta = if a >= c { b.atan2(lmax - c) } else { (lmax - a).atan2(b) };
    DirectDescriptors {
        mean,
        variance,
        centroid: [xc, yc],
        mu,
        mu_scale,
        hu,
        hu_scale,
        ellipse: (theta, 2.0 * lmin.max(0.0).sqrt(), 2.0 * lmax.max(0.0).sqrt()),
    }
}

/// The seven Hu polynomials. With `magnitude`, every subtraction becomes an
/// addition, giving an upper bound on the size of the terms.
fn hu_from(nu: impl Fn(usize, usize) -> f64, magnitude: bool) -> [f64; 7] {
    let s = if magnitude { 1.0 } else { -1.0 };
    let (n20, n02, n11) = (nu(2, 0), nu(0, 2), nu(1, 1));
    let (n30, n21, n12, n03) = (nu(3, 0), nu(2, 1), nu(1, 2), nu(0, 3));
    let a = n30 + n12;
    let b = n21 + n03;
    let c = n30 + s * 3.0 * n12;
    let d = 3.0 * n21 + s * n03;
    let e = n20 + s * n02;
    [
        n20 + n02,
        e * e + 4.0 * n11 * n11,
        c * c + d * d,
        a * a + b * b,
        c * a * (a * a + s * 3.0 * b * b) + d * b * (3.0 * a * a + s * b * b),
        e * (a * a + s * b * b) + 4.0 * n11 * a * b,
        d * a * (a * a + s * 3.0 * b * b) + s * c * b * (3.0 * a * a + s * b * b),
    ]
}

/// Complete-link agglomeration over all points: merge the closest admissible
/// pair of clusters until none is left. Ties go to the pair whose first
/// members are smallest.
pub fn complete_link_clusters(points: &[[f64; 2]], limits: &[f64; 4], cap: usize) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let d = |a: &[usize], b: &[usize]| {
        a.iter()
            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
            .map(|(i, j)| (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]))
            .fold(0.0, f64::max)
    };
    loop {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let size = clusters[i].len() + clusters[j].len();
                if size > cap {
                    continue;
                }
                let dist = d(&clusters[i], &clusters[j]);
                if dist > limits[size - 2] {
                    continue;
                }
                let (a, b) = (clusters[i][0].min(clusters[j][0]), clusters[i][0].max(clusters[j][0]));
                if best.is_none_or(|x| (dist, a, b) < (x.0, x.1, x.2)) {
                    best = Some((dist, a, b, i, j));
                }
            }
        }
        let Some((_, _, _, i, j)) = best else { break };
        let merged = clusters.remove(j);
        clusters[i].extend(merged);
        clusters[i].sort();
    }
    clusters.sort();
    clusters
}

fn boxes_meet(a: &BoundingBox, b: &BoundingBox, gate: f64) -> bool {
    (0..2).all(|k| a.min[k] - gate <= b.max[k] + gate && b.min[k] - gate <= a.max[k] + gate)
}

/// Greedy nearest-neighbor assignment by exhaustive search of the closest
/// remaining admissible pair at every step. Returns (track id, observation
/// index) in commit order.
pub fn brute_greedy(tracks: &[TrackQuery], obs: &[Observation], gate: f64) -> Vec<(u64, usize)> {
    let mut t_used = vec![false; tracks.len()];
    let mut o_used = vec![false; obs.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(f64, u64, usize, usize)> = None;
        for (ti, t) in tracks.iter().enumerate() {
            if t_used[ti] {
                continue;
            }
            for (oi, o) in obs.iter().enumerate() {
                if o_used[oi] || !boxes_meet(&t.cluster, &o.cluster, gate) {
                    continue;
                }
                let d = (t.predicted[0] - o.position[0]).hypot(t.predicted[1] - o.position[1]);
                if d > gate {
                    continue;
                }
                if best.is_none_or(|b| (d, t.id, oi) < (b.0, b.1, b.2)) {
                    best = Some((d, t.id, oi, ti));
                }
            }
        }
        let Some((_, id, oi, ti)) = best else { break };
        t_used[ti] = true;
        o_used[oi] = true;
        out.push((id, oi));
    }
    out
}

/// Walks an encoded OSC bundle and returns every element length, recursing
/// into nested bundles.
pub fn bundle_element_lengths(bytes: &[u8]) -> Result<Vec<usize>, String> {
    if bytes.len() < 16 || &bytes[..8] != b"#bundle\0" {
        return Err("missing bundle header".into());
    }
    let mut out = Vec::new();
    let mut at = 16;
    while at < bytes.len() {
        let len = i32::from_be_bytes(bytes.get(at..at + 4).ok_or("truncated size")?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| "negative size")?;
        let body = bytes.get(at + 4..at + 4 + len).ok_or("truncated element")?;
        out.push(len);
        if body.starts_with(b"#bundle\0") {
            out.extend(bundle_element_lengths(body)?);
        }
        at += 4 + len;
    }
    Ok(out)
}
