//! Acceptance criteria, one line each.
//!
//! Runs without the libtest harness so every criterion reports in order
//! with its measured values, even when an earlier one fails.

mod oracle;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use touchpipe::bench::bench;
use touchpipe::config::PipelineConfig;
use touchpipe::descriptors::describe;
use touchpipe::eval::{evaluate, run_scene, LoggedFrame, DEFAULT_MATCH_RADIUS};
use touchpipe::hands::{cluster_fingertips, register, ClusterConfig, ClusterInput, Finger, Handedness, RegistrationError};
use touchpipe::image::{BoundingBox, Image, Pixel};
use touchpipe::mser::{build_tree, ComponentTree, DescriptorAccumulator};
use touchpipe::pipeline::Resources;
use touchpipe::roi::{detect_rois, LabelRaster};
use touchpipe::synth::{hand_layout, Renderer, SceneSpec, UNIT};
use touchpipe::tracking::{greedy_match, Observation, Smoother, TrackQuery};
use touchpipe::tuio::osc::encode_bundle;
use touchpipe::tuio::{encode_frame, CursorInput, HandInput, TuioState, CURSOR_PROFILE, HAND_PROFILE};

enum Outcome {
    Pass(String),
    Fail(String),
    /// The host cannot exercise the criterion.
    NotMeasurable(String),
}

fn pass_if(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn corpus(name: &str) -> SceneSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name);
    SceneSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Relative closeness against a magnitude scale for quantities that may
/// cancel to zero.
fn close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale.max(a.abs()).max(b.abs()).max(f64::MIN_POSITIVE)
}

/// One ROI covering the whole image and its tree.
fn whole_tree(img: &Image) -> (ComponentTree, LabelRaster) {
    let det = detect_rois(img, 0, 1);
    assert_eq!(det.rois.len(), 1);
    let tree = build_tree(img, &det.raster, &det.rois[0], 2).unwrap();
    (tree, det.raster)
}

/// Random test images: uniform noise, coarse quantized noise (plateaus) and
/// smooth blobs.
fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    match rng.random_range(0..3) {
        0 => Image::from_fn(w, h, |_, _| rng.random()),
        1 => {
            let levels = rng.random_range(2..6);
            Image::from_fn(w, h, |_, _| (rng.random_range(0..levels) * 250 / (levels - 1)) as u8)
        }
        _ => {
            let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(1..6))
                .map(|_| {
                    (
                        rng.random_range(0.0..w as f64),
                        rng.random_range(0.0..h as f64),
                        rng.random_range(2.0..10.0),
                        rng.random_range(60.0..200.0),
                    )
                })
                .collect();
            let noise: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..8.0)).collect();
            Image::from_fn(w, h, |x, y| {
                let v: f64 = blobs
                    .iter()
                    .map(|&(cx, cy, s, a)| a * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
                    .sum();
                (20.0 + v + noise[y * w + x]).min(255.0) as u8
            })
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut regions = 0;
    for i in 0..100 {
        let img = random_image(&mut rng, 48, 48);
        let (tree, raster) = whole_tree(&img);
        let expected = oracle::threshold_regions(&img);
        let describe_oracle = |r: &oracle::ThresholdRegion| (r.level, r.size, r.bbox);
        let mut want: Vec<_> = expected
            .iter()
            .map(|r| (describe_oracle(r), r.parent.map(|p| describe_oracle(&expected[p]))))
            .collect();
        let desc = |id: usize| {
            let r = tree.region(id);
            (r.gray_level, r.size, (r.bbox.min_x, r.bbox.min_y, r.bbox.max_x, r.bbox.max_y))
        };
        let mut got: Vec<_> = (0..tree.len()).map(|id| (desc(id), tree.parent(id).map(desc))).collect();
        want.sort();
        got.sort();
        if got != want {
            return Outcome::Fail(format!("image {i}: {} regions built, {} expected", got.len(), want.len()));
        }
        for id in 0..tree.len() {
            if tree.pixels(&img, &raster, id).len() != tree.region(id).size {
                return Outcome::Fail(format!("image {i}: region {id} pixel list disagrees with its size"));
            }
        }
        regions += got.len();
    }
    let secs = start.elapsed().as_secs_f64();
    pass_if(
        secs < 10.0,
        format!("100 random 48x48 images, {regions} regions equal the threshold oracle exactly, {secs:.2} s (limit 10 s)"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let tol = 1e-9;
    for i in 0..50 {
        let img = random_image(&mut rng, 40, 40);
        let (tree, raster) = whole_tree(&img);
        for id in 0..tree.len() {
            let r = tree.region(id);
            let pixels: Vec<(usize, usize, u8)> = tree
                .pixels(&img, &raster, id)
                .iter()
                .map(|p| (p.x, p.y, img.get(p.x, p.y)))
                .collect();
            let batch = DescriptorAccumulator::from_pixels(r.acc.origin, pixels.iter().copied());
            if (batch.n, batch.s1, batch.s2, batch.moments) != (r.acc.n, r.acc.s1, r.acc.s2, r.acc.moments) {
                return Outcome::Fail(format!("tree {i} region {id}: accumulator differs from batch recomputation"));
            }
            let d = describe(&r.acc);
            let o = oracle::direct_descriptors(&pixels);
            let c = &d.central;
            let mu = [
                (c.mu11, 1, 1),
                (c.mu20, 2, 0),
                (c.mu02, 0, 2),
                (c.mu30, 3, 0),
                (c.mu21, 2, 1),
                (c.mu12, 1, 2),
                (c.mu03, 0, 3),
            ];
            let mut ok = close(d.mean, o.mean, 0.0, tol)
                && close(d.variance, o.variance, o.mean * o.mean, tol)
                && (0..2).all(|k| close(d.centroid[k], o.centroid[k], 0.0, tol))
                && mu.iter().all(|&(v, p, q)| close(v, o.mu[p][q], o.mu_scale[p][q], tol))
                && (0..7).all(|k| close(d.hu[k], o.hu[k], o.hu_scale[k], tol));
            let e = d.ellipse;
            ok &= close(e.h, o.ellipse.1, o.ellipse.2, tol) && close(e.w, o.ellipse.2, o.ellipse.2, tol);
            if o.ellipse.2 - o.ellipse.1 > 1e-6 * o.ellipse.2 {
                let diff = (e.theta - o.ellipse.0).rem_euclid(std::f64::consts::PI);
                ok &= diff.min(std::f64::consts::PI - diff) <= tol * std::f64::consts::PI;
            }
            if !ok {
                return Outcome::Fail(format!("tree {i} region {id}: derived descriptors off: {d:?} vs {o:?}"));
            }
            checked += 1;
        }
    }
    Outcome::Pass(format!(
        "{checked} regions of 50 trees: accumulators integer-exact, derived values within 1e-9 relative"
    ))
}

/// A random 4-connected blob grown from the origin.
fn random_blob(rng: &mut ChaCha8Rng) -> Vec<(i64, i64)> {
    let target = rng.random_range(30..400);
    let mut set = std::collections::BTreeSet::from([(0i64, 0i64)]);
    let mut list = vec![(0i64, 0i64)];
    while list.len() < target {
        let (x, y) = list[rng.random_range(0..list.len())];
        let step = [(1, 0), (-1, 0), (0, 1), (0, -1)][rng.random_range(0..4)];
        let p = (x + step.0, y + step.1);
        if set.insert(p) {
            list.push(p);
        }
    }
    list
}

fn hu_of(points: &[(i64, i64)]) -> ([f64; 7], [f64; 7]) {
    let px: Vec<(usize, usize, u8)> = points.iter().map(|&(x, y)| (x as usize, y as usize, 200)).collect();
    let d = describe(&DescriptorAccumulator::from_pixels([0, 0], px.iter().copied()));
    (d.hu, oracle::direct_descriptors(&px).hu_scale)
}

fn place(points: &[(i64, i64)], dx: i64, dy: i64) -> Vec<(i64, i64)> {
    let mx = points.iter().map(|p| p.0).min().unwrap();
    let my = points.iter().map(|p| p.1).min().unwrap();
    points.iter().map(|&(x, y)| (x - mx + dx, y - my + dy)).collect()
}

fn disc(cx: f64, cy: f64, r: f64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for y in (cy - r).floor() as i64..=(cy + r).ceil() as i64 {
        for x in (cx - r).floor() as i64..=(cx + r).ceil() as i64 {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                out.push((x, y));
            }
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 2];
    for i in 0..200 {
        let blob = random_blob(&mut rng);
        let base = place(&blob, 0, 0);
        let (hu, scale) = hu_of(&base);
        let moved = place(&blob, rng.random_range(1..500), rng.random_range(1..500));
        let max_y = base.iter().map(|p| p.1).max().unwrap();
        let rotated: Vec<(i64, i64)> = base.iter().map(|&(x, y)| (max_y - y, x)).collect();
        for (which, pts) in [(0, moved), (1, rotated)] {
            let (h2, _) = hu_of(&pts);
            for k in 0..7 {
                let rel = (hu[k] - h2[k]).abs() / scale[k].max(hu[k].abs()).max(f64::MIN_POSITIVE);
                worst[which] = worst[which].max(rel);
            }
        }
        if worst[0] > 1e-9 || worst[1] > 1e-9 {
            return Outcome::Fail(format!("blob {i}: translation {:.2e}, 90 degree rotation {:.2e}", worst[0], worst[1]));
        }
    }
    // A disc rotated about a distant pivot lands on a different pixel phase.
    let degree = [1, 2, 3, 3, 6, 4, 6];
    let (reference, _) = hu_of(&disc(200.3, 200.7, 20.0));
    let mut worst_disc = 0.0f64;
    for _ in 0..50 {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = a.sin_cos();
        let (ox, oy) = (200.3 - 150.0, 200.7 - 150.0);
        let (hu, _) = hu_of(&disc(150.0 + c * ox - s * oy, 150.0 + s * ox + c * oy, 20.0));
        for k in 0..7 {
            let scale = reference[0].powi(degree[k]);
            worst_disc = worst_disc.max((hu[k] - reference[k]).abs() / scale);
        }
    }
    pass_if(
        worst_disc <= 1e-3,
        format!(
            "200 blobs: translation {:.1e}, 90 degree rotation {:.1e} (limit 1e-9); rotated disc {:.1e} (limit 1e-3)",
            worst[0], worst[1], worst_disc
        ),
    )
}

fn criterion_4() -> Outcome {
    let px: Vec<(usize, usize, u8)> = disc(60.0, 60.0, 20.0).iter().map(|&(x, y)| (x as usize, y as usize, 255)).collect();
    let e = describe(&DescriptorAccumulator::from_pixels([0, 0], px.iter().copied())).ellipse;
    let err = ((e.h - 20.0).abs() / 20.0).max((e.w - 20.0).abs() / 20.0);
    pass_if(err <= 0.02, format!("radius 20 disc: h {:.3}, w {:.3}, worst {:.2}% (limit 2%)", e.h, e.w, err * 100.0))
}

fn rigid(p: [f64; 2], angle: f64, t: [f64; 2]) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1] + t[0], s * p[0] + c * p[1] + t[1]]
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let poses = 1000;
    for i in 0..poses {
        let hand = if i % 2 == 0 { Handedness::Right } else { Handedness::Left };
        let scale = rng.random_range(0.7..1.3);
        let jitter = 0.25 * UNIT * scale;
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let t = [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)];
        let mut order: Vec<usize> = (0..5).collect();
        order.shuffle(&mut rng);
        let layout = hand_layout(hand, UNIT * scale);
        let pts: Vec<[f64; 2]> = order
            .iter()
            .map(|&k| {
                let p = [layout[k][0] + rng.random_range(-jitter..jitter), layout[k][1] + rng.random_range(-jitter..jitter)];
                rigid(p, angle, t)
            })
            .collect();
        match register(&pts) {
            Ok(r) if r.handedness == hand && order.iter().zip(r.fingers).all(|(&k, f)| Finger::ORDER[k] == f) => {}
            other => return Outcome::Fail(format!("pose {i}: {hand:?} at {angle:.3} rad registered as {other:?}")),
        }
    }
    let mut degenerate = 0;
    for i in 0..300 {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let t = [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)];
        let (pts, allowed): (Vec<[f64; 2]>, &[RegistrationError]) = match i % 3 {
            0 => {
                let mut xs: Vec<f64> = Vec::new();
                while xs.len() < 5 {
                    let x = rng.random_range(-80.0..80.0f64).round();
                    if !xs.contains(&x) {
                        xs.push(x);
                    }
                }
                (
                    xs.iter().map(|&x| rigid([x, 0.0], angle, t)).collect(),
                    &[RegistrationError::AmbiguousThumb, RegistrationError::AmbiguousHandedness],
                )
            }
            1 => {
                let r = rng.random_range(40.0..90.0);
                let step = rng.random_range(0.2..0.45);
                let pts = (-2..=2)
                    .map(|k| rigid([r * (k as f64 * step).sin(), -r * (k as f64 * step).cos()], angle, t))
                    .collect();
                (pts, &[RegistrationError::AmbiguousThumb])
            }
            _ => {
                let d = rng.random_range(10.0..50.0);
                let mut pts: Vec<[f64; 2]> =
                    [[0.0, 0.0], [d, 0.0], [-d, 0.0], [0.0, d], [0.0, -d]].iter().map(|&p| rigid(p, angle, t)).collect();
                if i % 2 == 0 {
                    pts[1] = pts[0];
                    (pts, &[RegistrationError::DuplicatePositions])
                } else {
                    (pts, &[RegistrationError::NonPathContour])
                }
            }
        };
        match register(&pts) {
            Err(e) if allowed.contains(&e) => degenerate += 1,
            other => return Outcome::Fail(format!("degenerate case {i}: {other:?}, expected one of {allowed:?}")),
        }
    }
    Outcome::Pass(format!(
        "{poses} jittered poses over 360 degrees: all labels and handedness correct; {degenerate} degenerate sets return their errors"
    ))
}

/// A flat tree: one bright pixel per point on a uniform floor.
fn flat(points: &[[usize; 2]], w: usize, h: usize) -> (ComponentTree, Vec<ClusterInput>) {
    let mut img = Image::filled(w, h, 10);
    for p in points {
        img.set(p[0], p[1], 200);
    }
    let (tree, _) = whole_tree(&img);
    let inputs = points
        .iter()
        .enumerate()
        .map(|(id, p)| ClusterInput {
            id,
            leaf: tree.leaves().find(|&l| tree.region(l).seed == Pixel::new(p[0], p[1])).unwrap(),
            position: [p[0] as f64, p[1] as f64],
        })
        .collect();
    (tree, inputs)
}

fn criterion_6() -> Outcome {
    let cfg = ClusterConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..100 {
        let n = rng.random_range(1..=15);
        let mut pts: Vec<[usize; 2]> = Vec::new();
        while pts.len() < n {
            let p = [rng.random_range(1..499), rng.random_range(1..399)];
            if pts.iter().all(|q| q[0].abs_diff(p[0]) + q[1].abs_diff(p[1]) > 2) {
                pts.push(p);
            }
        }
        let (tree, inputs) = flat(&pts, 500, 400);
        let mut got: Vec<Vec<usize>> = cluster_fingertips(&tree, &inputs, &cfg)
            .clusters
            .iter()
            .map(|c| {
                let mut m = c.members.clone();
                m.sort();
                m
            })
            .collect();
        got.sort();
        let fpts: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] as f64, p[1] as f64]).collect();
        let want = oracle::complete_link_clusters(&fpts, &cfg.max_distance, 5);
        if got != want {
            return Outcome::Fail(format!("set {i}: {got:?} vs oracle {want:?}"));
        }
    }
    let d5 = cfg.max_distance[3];
    for i in 0..100 {
        let hands: Vec<Vec<[usize; 2]>> = (0..2)
            .map(|h| {
                let hand = if rng.random() { Handedness::Right } else { Handedness::Left };
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let center = [150.0 + h as f64 * (d5 + 300.0) + rng.random_range(0.0..40.0), 200.0];
                hand_layout(hand, UNIT * rng.random_range(0.8..1.2))
                    .iter()
                    .map(|&p| {
                        let q = rigid(p, angle, center);
                        [q[0].round() as usize, q[1].round() as usize]
                    })
                    .collect()
            })
            .collect();
        let gap = hands[0]
            .iter()
            .flat_map(|a| hands[1].iter().map(move |b| (a[0] as f64 - b[0] as f64).hypot(a[1] as f64 - b[1] as f64)))
            .fold(f64::INFINITY, f64::min);
        assert!(gap > d5);
        let all = hands.concat();
        let (tree, inputs) = flat(&all, 1100, 400);
        for c in cluster_fingertips(&tree, &inputs, &cfg).clusters {
            if c.members.iter().any(|&m| m < 5) && c.members.iter().any(|&m| m >= 5) {
                return Outcome::Fail(format!("pair {i}: hands {gap:.0} px apart merged"));
            }
        }
    }
    Outcome::Pass(format!(
        "100 random sets (n <= 15) match the complete-link oracle exactly; 100 hand pairs beyond D_max[5] = {d5} never merged"
    ))
}

fn random_box(rng: &mut ChaCha8Rng, p: [f64; 2]) -> BoundingBox {
    let mut b = BoundingBox::from_point(p);
    b.include([p[0] + rng.random_range(-40.0..40.0), p[1] + rng.random_range(-40.0..40.0)]);
    b
}

/// A coordinate in [0, 100), rounded to provoke distance ties.
fn coord(rng: &mut ChaCha8Rng, integer: bool) -> f64 {
    let v = rng.random_range(0.0..100.0f64);
    if integer {
        v.round()
    } else {
        v
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let default_alpha = PipelineConfig::default().tracking.alpha;
    for i in 0..100 {
        let alpha = if i == 0 { default_alpha } else { rng.random_range(0.2..0.95) };
        let p0 = [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)];
        let v = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let at = |k: f64| [p0[0] + v[0] * k, p0[1] + v[1] * k];
        let mut s = Smoother::new(alpha, at(0.0));
        for k in 1..=200 {
            s.update(at(k as f64));
        }
        let want = at(201.0);
        let got = s.predict(1);
        worst = worst.max((got[0] - want[0]).hypot(got[1] - want[1]));
    }
    if worst >= 1e-6 {
        return Outcome::Fail(format!("prediction error {worst:.2e} px after 200 updates"));
    }
    let gate = 30.0;
    for trial in 0..1000 {
        let integer = trial % 2 == 0;
        let mut ids: Vec<u64> = (0..20).collect();
        ids.shuffle(&mut rng);
        let nt = rng.random_range(0..=8);
        let no = rng.random_range(0..=8);
        let mut tracks = Vec::new();
        for &id in &ids[..nt] {
            let p = [coord(&mut rng, integer), coord(&mut rng, integer)];
            tracks.push((id, p));
        }
        let mut observations = Vec::new();
        for _ in 0..no {
            observations.push([coord(&mut rng, integer), coord(&mut rng, integer)]);
        }
        let tracks: Vec<TrackQuery> = tracks
            .into_iter()
            .map(|(id, p)| TrackQuery {
                id,
                predicted: p,
                cluster: random_box(&mut rng, p),
            })
            .collect();
        let obs: Vec<Observation> = observations
            .into_iter()
            .map(|p| Observation {
                position: p,
                cluster: random_box(&mut rng, p),
            })
            .collect();
        let got = greedy_match(&tracks, &obs, gate);
        let want = oracle::brute_greedy(&tracks, &obs, gate);
        if got.pairs != want {
            return Outcome::Fail(format!("trial {trial}: {:?} vs oracle {want:?}", got.pairs));
        }
    }
    Outcome::Pass(format!(
        "prediction error {worst:.1e} px after 200 updates at alpha {default_alpha} and 99 draws from [0.2, 0.95) (limit 1e-6); greedy matcher equals the exhaustive oracle in 1000 trials"
    ))
}

struct CorpusRun {
    logs: Vec<String>,
    frames: Vec<LoggedFrame>,
    truth: touchpipe::synth::GroundTruth,
}

fn run_corpus(spec: &SceneSpec, threads: usize) -> CorpusRun {
    let mut cfg = PipelineConfig::default();
    cfg.threads = threads;
    let (results, truth) = run_scene(spec, &cfg).unwrap();
    CorpusRun {
        logs: results.iter().map(|r| r.log_line()).collect(),
        frames: results.iter().map(Into::into).collect(),
        truth,
    }
}

fn criterion_8(run: &CorpusRun) -> Outcome {
    let m = evaluate(&run.frames, &run.truth, DEFAULT_MATCH_RADIUS).unwrap();
    pass_if(
        m.hit_rate >= 0.95 && m.false_positive_rate <= 0.02,
        format!(
            "{} frames: hit rate {:.4} (min 0.95), false-positive rate {:.4} (max 0.02), hand precision {:.4}",
            run.frames.len(),
            m.hit_rate,
            m.false_positive_rate,
            m.hand_precision
        ),
    )
}

fn render(spec: &SceneSpec) -> (Vec<Image>, Resources, PipelineConfig) {
    let r = Renderer::new(spec);
    let frames = (0..spec.frames).map(|k| r.frame(k)).collect();
    let mut cfg = PipelineConfig::default();
    cfg.frame.width = spec.width;
    cfg.frame.height = spec.height;
    let res = Resources {
        map: None,
        illumination: Some(r.illumination()),
    };
    (frames, res, cfg)
}

fn criterion_9() -> Outcome {
    let budget = 1e6 / 60.0;
    let (frames, res, cfg) = render(&corpus("perf10.json"));
    let single = bench(&frames, &cfg, &res, &[1], 5).unwrap();
    let Some(ten) = single.reports[0].buckets.iter().find(|b| b.fingertips == 10) else {
        return Outcome::Fail("no frame reported 10 fingertips".into());
    };
    let mean10 = ten.stages.total.mean;
    let a = format!("10 fingertips, 1 thread: {:.2} ms/frame over {} frames (limit 16.67 ms)", mean10 / 1000.0, ten.frames);
    if mean10 >= budget {
        return Outcome::Fail(a);
    }
    let (frames, res, cfg) = render(&corpus("perf8.json"));
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let r = bench(&frames, &cfg, &res, &[1, 4], 5).unwrap();
    let (t1, t4) = (r.reports[0].stages.total.mean, r.reports[1].stages.total.mean);
    let b = format!("8 hands: 1 thread {:.2} ms, 4 threads {:.2} ms on {cores} core(s)", t1 / 1000.0, t4 / 1000.0);
    if cores < 2 {
        return Outcome::NotMeasurable(format!("{a}; {b}; thread scaling needs at least 2 cores"));
    }
    pass_if(t4 < t1, format!("{a}; {b}"))
}

fn criterion_10(spec: &SceneSpec, one: &CorpusRun) -> Outcome {
    for threads in [2, 4] {
        let other = run_corpus(spec, threads);
        if let Some(k) = (0..one.logs.len()).find(|&k| one.logs[k] != other.logs[k]) {
            return Outcome::Fail(format!("1 vs {threads} threads differ at frame {k}"));
        }
        if other.logs.len() != one.logs.len() {
            return Outcome::Fail(format!("1 vs {threads} threads: log lengths differ"));
        }
    }
    let bytes: usize = one.logs.iter().map(|l| l.len() + 1).sum();
    Outcome::Pass(format!("{} frames, {bytes} log bytes identical for 1, 2 and 4 threads", one.logs.len()))
}

fn criterion_11() -> Outcome {
    use rosc::{OscPacket as P, OscType};
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut state = TuioState::new(640, 480, 60.0);
    let mut live: Vec<(u64, [f64; 2])> = Vec::new();
    let mut next_id = 0u64;
    let mut last_fseq = i32::MIN;
    let mut elements = 0;
    for k in 0..1000 {
        live.retain(|_| rng.random_range(0..10) > 0);
        for _ in 0..rng.random_range(0..4) {
            if live.len() < 40 {
                live.push((next_id, [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)]));
                next_id += 1;
            }
        }
        for c in &mut live {
            if rng.random_range(0..3) == 0 {
                c.1 = [(c.1[0] + rng.random_range(-4.0..4.0)).clamp(0.0, 639.0), (c.1[1] + rng.random_range(-4.0..4.0)).clamp(0.0, 479.0)];
            }
        }
        let cursors: Vec<CursorInput> = live.iter().map(|&(id, position)| CursorInput { id, position }).collect();
        let mut pool: Vec<u64> = live.iter().map(|c| c.0).collect();
        pool.shuffle(&mut rng);
        let mut hands = Vec::new();
        while !pool.is_empty() && rng.random_range(0..3) > 0 {
            let n = rng.random_range(1..=pool.len().min(5));
            let members: Vec<u64> = pool.drain(..n).collect();
            let pts: Vec<[f64; 2]> = members.iter().map(|m| live.iter().find(|c| c.0 == *m).unwrap().1).collect();
            let registered = n == 5 && rng.random();
            hands.push(HandInput {
                members,
                bbox: BoundingBox::around(&pts).unwrap(),
                handedness: registered.then_some(Handedness::Left),
                fingers: registered.then(|| Finger::ORDER.to_vec()),
            });
        }
        let frame = state.frame(&cursors, &hands);
        let bundle = match encode_frame(&frame) {
            Ok(b) => b,
            Err(e) => return Outcome::Fail(format!("frame {k}: {e}")),
        };
        let bytes = encode_bundle(&bundle).unwrap();
        let lengths = match oracle::bundle_element_lengths(&bytes) {
            Ok(l) => l,
            Err(e) => return Outcome::Fail(format!("frame {k}: {e}")),
        };
        if bytes.len() % 4 != 0 || lengths.iter().any(|l| l % 4 != 0) {
            return Outcome::Fail(format!("frame {k}: misaligned element lengths {lengths:?}"));
        }
        elements += lengths.len();
        let decoded = match rosc::decoder::decode_udp(&bytes) {
            Ok((rest, P::Bundle(b))) if rest.is_empty() => b,
            other => return Outcome::Fail(format!("frame {k}: independent decoder rejected the bundle: {other:?}")),
        };
        let mut alive: Vec<i32> = Vec::new();
        let mut set: Vec<i32> = Vec::new();
        let mut members: Vec<i32> = Vec::new();
        let mut fseq = None;
        for p in &decoded.content {
            let P::Message(m) = p else {
                return Outcome::Fail(format!("frame {k}: nested bundle"));
            };
            let ints = |from: usize| m.args[from..].iter().filter_map(|a| if let OscType::Int(v) = a { Some(*v) } else { None });
            match (m.addr.as_str(), m.args.first()) {
                (CURSOR_PROFILE, Some(OscType::String(s))) if s == "alive" => alive.extend(ints(1)),
                (CURSOR_PROFILE, Some(OscType::String(s))) if s == "set" => set.extend(ints(1).take(1)),
                (CURSOR_PROFILE, Some(OscType::String(s))) if s == "fseq" => fseq = ints(1).next(),
                (HAND_PROFILE, Some(OscType::String(s))) if s == "set" => members.extend(ints(1).skip(1)),
                _ => {}
            }
        }
        let Some(fseq) = fseq else {
            return Outcome::Fail(format!("frame {k}: no fseq"));
        };
        if fseq <= last_fseq {
            return Outcome::Fail(format!("frame {k}: fseq {fseq} after {last_fseq}"));
        }
        last_fseq = fseq;
        let mut want_alive: Vec<i32> = live.iter().map(|c| c.0 as i32).collect();
        want_alive.sort();
        if alive != want_alive || set.iter().any(|s| !alive.contains(s)) || members.iter().any(|m| !alive.contains(m)) {
            return Outcome::Fail(format!("frame {k}: alive/set inconsistent"));
        }
    }
    Outcome::Pass(format!(
        "1000 random frames, {elements} bundle elements: decoded independently, lengths 0 mod 4, fseq strictly increasing, alive/set consistent"
    ))
}

fn main() {
    let accuracy = corpus("accuracy.json");
    let corpus_run = std::cell::OnceCell::new();
    let single = || corpus_run.get_or_init(|| run_corpus(&accuracy, 1));
    let criteria: [(&str, Box<dyn FnMut() -> Outcome>); 11] = [
        ("component-tree oracle equivalence", Box::new(criterion_1)),
        ("descriptor exactness", Box::new(criterion_2)),
        ("Hu invariance", Box::new(criterion_3)),
        ("bounding ellipse", Box::new(criterion_4)),
        ("registration", Box::new(criterion_5)),
        ("clustering", Box::new(criterion_6)),
        ("tracking", Box::new(criterion_7)),
        (
            "end-to-end synthetic accuracy",
            Box::new(|| criterion_8(single())),
        ),
        ("performance", Box::new(criterion_9)),
        ("determinism", Box::new(|| criterion_10(&accuracy, single()))),
        ("TUIO conformance", Box::new(criterion_11)),
    ];
    let mut failed = 0;
    for (i, (name, mut check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(&mut check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::NotMeasurable(d) => ("NOT MEASURABLE", d),
        };
        println!("criterion {:>2} {tag}: {name}: {detail} [{secs:.1} s]", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
