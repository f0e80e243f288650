//! Fits the fingertip detector weights and thresholds on a synthetic scene.
//!
//! Every leaf of every component tree is labeled positive when it is the
//! leaf closest to a touching fingertip (within 4 px) and negative
//! otherwise. A logistic model is fitted on standardized features and folded
//! back into raw-feature weights; the thresholds are two fixed logits.
//!
//! ```text
//! cargo run --release -p touchpipe --example tune_detector -- corpus/accuracy.json [seed] [stride] [low logit] [high logit]
//! ```
//!
//! Leaves are collected from the scene rendered with `seed`; the end-to-end
//! metrics use the scene's own seed.
//!
//! Prints the `detector` section to paste into `default-config.json`.

use touchpipe::config::PipelineConfig;
use touchpipe::fingertip::{detect_candidates, FEATURE_COUNT, FEATURE_NAMES};
use touchpipe::mser::build_tree;
use touchpipe::roi::detect_rois;
use touchpipe::synth::{Renderer, SceneSpec};

const POSITIVE_RADIUS: f64 = 4.0;
const HIGH_LOGIT: f64 = 2.0;
const LOW_LOGIT: f64 = 0.0;

fn collect(spec: &SceneSpec, cfg: &PipelineConfig, stride: usize) -> (Vec<[f64; FEATURE_COUNT]>, Vec<bool>) {
    let r = Renderer::new(spec);
    let model = r.illumination();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in (0..spec.frames).step_by(stride) {
        let img = touchpipe::calibration::normalize(&r.frame(k), &model).unwrap();
        let truth = r.truth(k);
        let det = detect_rois(&img, cfg.roi.threshold, cfg.roi.min_pixels);
        let mut cands = Vec::new();
        for roi in &det.rois {
            let tree = build_tree(&img, &det.raster, roi, cfg.mser.delta).unwrap();
            cands.extend(detect_candidates(&tree, &img, &cfg.detector));
        }
        let mut positive = vec![false; cands.len()];
        for t in &truth.fingertips {
            let d = |i: usize| {
                let p = cands[i].position;
                (p[0] - t.position[0]).hypot(p[1] - t.position[1])
            };
            if let Some(best) = (0..cands.len()).min_by(|&a, &b| d(a).total_cmp(&d(b))) {
                if d(best) <= POSITIVE_RADIUS {
                    positive[best] = true;
                }
            }
        }
        for (c, p) in cands.iter().zip(positive) {
            xs.push(c.features);
            ys.push(p);
        }
    }
    (xs, ys)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Class-balanced logistic regression by full-batch gradient descent.
fn fit(xs: &[[f64; FEATURE_COUNT]], ys: &[bool]) -> ([f64; FEATURE_COUNT], f64) {
    let n = xs.len() as f64;
    let mut mean = [0.0; FEATURE_COUNT];
    let mut sd = [0.0; FEATURE_COUNT];
    for x in xs {
        for j in 0..FEATURE_COUNT {
            mean[j] += x[j] / n;
        }
    }
    for x in xs {
        for j in 0..FEATURE_COUNT {
            sd[j] += (x[j] - mean[j]).powi(2) / n;
        }
    }
    let sd = sd.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    let pos = ys.iter().filter(|&&y| y).count() as f64;
    let (wp, wn) = (0.5 / pos, 0.5 / (n - pos));
    let mut w = [0.0; FEATURE_COUNT];
    let mut b = 0.0;
    for _ in 0..3000 {
        let mut gw = [0.0; FEATURE_COUNT];
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z: f64 = (0..FEATURE_COUNT).map(|j| w[j] * (x[j] - mean[j]) / sd[j]).sum::<f64>() + b;
            let err = (sigmoid(z) - if y { 1.0 } else { 0.0 }) * if y { wp } else { wn };
            for j in 0..FEATURE_COUNT {
                gw[j] += err * (x[j] - mean[j]) / sd[j];
            }
            gb += err;
        }
        for j in 0..FEATURE_COUNT {
            w[j] -= 2.0 * (gw[j] + 1e-4 * w[j]);
        }
        b -= 2.0 * gb;
    }
    let raw: [f64; FEATURE_COUNT] = std::array::from_fn(|j| w[j] / sd[j]);
    let bias = b - (0..FEATURE_COUNT).map(|j| raw[j] * mean[j]).sum::<f64>();
    (raw, bias)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map(String::as_str).unwrap_or("corpus/accuracy.json");
    let spec = SceneSpec::load(std::path::Path::new(path)).unwrap();
    let mut fit_spec = spec.clone();
    if let Some(seed) = args.get(2) {
        fit_spec.seed = seed.parse().unwrap();
    }
    let stride = args.get(3).map_or(5, |s| s.parse().unwrap());
    let cfg = PipelineConfig::default();
    let (xs, ys) = collect(&fit_spec, &cfg, stride);
    let pos = ys.iter().filter(|&&y| y).count();
    eprintln!("{} leaves, {} positive", xs.len(), pos);
    for (j, name) in FEATURE_NAMES.iter().enumerate() {
        let m = |want: bool| {
            let v: Vec<f64> = xs.iter().zip(&ys).filter(|(_, &y)| y == want).map(|(x, _)| x[j]).collect();
            let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            format!("mean {mean:10.4} range [{min:.4}, {max:.4}]")
        };
        eprintln!("{name:>18}: pos {} | neg {}", m(true), m(false));
    }
    let (w, bias) = fit(&xs, &ys);
    let logit = |i: usize, d: f64| args.get(i).map_or(d, |s| s.parse().unwrap());
    let t_high = logit(5, HIGH_LOGIT) - bias;
    let t_low = logit(4, LOW_LOGIT) - bias;
    let mut confusion = [[0usize; 3]; 2];
    for (x, &y) in xs.iter().zip(&ys) {
        let c: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        let class = if c >= t_high { 2 } else if c >= t_low { 1 } else { 0 };
        confusion[y as usize][class] += 1;
        if y && class == 0 && std::env::var_os("TUNE_VERBOSE").is_some() {
            eprintln!("missed positive: {x:?} score {c:.3}");
        }
    }
    eprintln!("negatives no/low/high: {:?}", confusion[0]);
    eprintln!("positives no/low/high: {:?}", confusion[1]);
    let mut detector = cfg.detector.clone();
    detector.weights = w.map(|v| (v * 1e6).round() / 1e6);
    detector.t_low = (t_low * 1e6).round() / 1e6;
    detector.t_high = (t_high * 1e6).round() / 1e6;
    let mut full = cfg.clone();
    full.detector = detector.clone();
    let (results, truth) = touchpipe::eval::run_scene(&spec, &full).unwrap();
    let logged: Vec<touchpipe::eval::LoggedFrame> = results.iter().map(Into::into).collect();
    let m = touchpipe::eval::evaluate(&logged, &truth, touchpipe::eval::DEFAULT_MATCH_RADIUS).unwrap();
    eprintln!(
        "end to end: hit {:.4} fp {:.4} hands {:.4} {:?}",
        m.hit_rate, m.false_positive_rate, m.hand_precision, m.counts
    );
    println!("{}", serde_json::to_string_pretty(&detector).unwrap());
}
