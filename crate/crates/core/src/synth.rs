//! Synthetic camera frames with exact fingertip labels.
//!
//! A scene is rendered as the pointwise maximum of a floor level and a few
//! primitives per hand: a blunt palm dome, an arm fading toward the wrist,
//! one capsule per finger and a Gaussian spike for each touching fingertip.
//! The result is multiplied by a radial illumination field and perturbed by
//! Gaussian noise.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::IlluminationModel;
use crate::hands::{Finger, Handedness};
use crate::image::Image;
use crate::pgm;

/// Canonical fingertip layout in hand units, thumb to little finger, for a
/// right hand imaged from below with the fingers pointing up the image.
const RIGHT_TIPS: [[f64; 2]; 5] = [[3.0, 0.0], [1.0, -3.0], [0.0, -3.5], [-1.0, -3.0], [-2.0, -2.0]];
const PALM_CENTER: [f64; 2] = [0.3, 0.9];
const PALM_AXES: [f64; 2] = [2.3, 1.8];
const FINGER_RADIUS: f64 = 0.35;
const ARM_LENGTH: f64 = 9.0;
const ARM_RADIUS: f64 = 1.4;
/// Pixels per hand unit at scale 1.
pub const UNIT: f64 = 20.0;

/// Fingertip positions of a hand at the origin, thumb to little finger.
pub fn hand_layout(hand: Handedness, scale: f64) -> [[f64; 2]; 5] {
    RIGHT_TIPS.map(|p| mirror(hand, p).map(|v| v * scale))
}

fn mirror(hand: Handedness, p: [f64; 2]) -> [f64; 2] {
    match hand {
        Handedness::Right => p,
        Handedness::Left => [-p[0], p[1]],
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Pgm(#[from] pgm::PgmError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A finger lifted off the surface over the frames `from..to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lift {
    pub finger: Finger,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandSpec {
    pub handedness: Handedness,
    /// Hand origin in pixels at frame 0.
    pub center: [f64; 2],
    /// Clockwise rotation in degrees at frame 0; 0 points the fingers up.
    #[serde(default)]
    pub rotation: f64,
    /// Pixels per hand unit, relative to [`UNIT`].
    #[serde(default = "one")]
    pub scale: f64,
    /// Pixels per frame.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// Degrees per frame.
    #[serde(default)]
    pub angular_velocity: f64,
    #[serde(default = "tip_peak")]
    pub tip_peak: f64,
    #[serde(default = "tip_sigma")]
    pub tip_sigma: f64,
    #[serde(default = "palm_peak")]
    pub palm_peak: f64,
    #[serde(default = "finger_level")]
    pub finger_level: f64,
    #[serde(default)]
    pub lifts: Vec<Lift>,
}

fn one() -> f64 {
    1.0
}
fn tip_peak() -> f64 {
    230.0
}
fn tip_sigma() -> f64 {
    3.0
}
fn palm_peak() -> f64 {
    110.0
}
fn finger_level() -> f64 {
    90.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    /// Standard deviation of additive noise, in raw gray levels.
    pub noise_sigma: f64,
    /// Relative brightness loss at the frame corners, in [0, 1).
    pub illumination_falloff: f64,
    /// Scene level where nothing touches the surface.
    pub floor: f64,
    pub hands: Vec<HandSpec>,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let spec: SceneSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The same scene with every hand mirrored about the vertical center
    /// line.
    pub fn mirrored(&self) -> SceneSpec {
        let mut out = self.clone();
        for h in &mut out.hands {
            h.handedness = h.handedness.flipped();
            h.center[0] = (self.width - 1) as f64 - h.center[0];
            h.velocity[0] = -h.velocity[0];
            h.rotation = -h.rotation;
            h.angular_velocity = -h.angular_velocity;
        }
        out
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::Invalid(m));
        if self.width < 16 || self.height < 16 || self.frames == 0 {
            return invalid("frame must be at least 16x16 and the scene non-empty".into());
        }
        if !(0.0..1.0).contains(&self.illumination_falloff) || !(self.noise_sigma >= 0.0) {
            return invalid("falloff must lie in [0, 1) and noise must be non-negative".into());
        }
        if !(0.0..255.0).contains(&self.floor) {
            return invalid("floor must lie in [0, 255)".into());
        }
        for (i, h) in self.hands.iter().enumerate() {
            if !(h.scale > 0.0 && h.tip_sigma > 0.0) {
                return invalid(format!("hand {i}: scale and tip_sigma must be positive"));
            }
            if !(h.tip_peak > h.palm_peak && h.tip_peak > h.finger_level && h.tip_peak <= 255.0) {
                return invalid(format!("hand {i}: fingertips must be the brightest feature"));
            }
        }
        for k in 0..self.frames {
            let poses: Vec<Pose> = self.hands.iter().map(|h| Pose::at(h, k)).collect();
            for (i, (h, pose)) in self.hands.iter().zip(&poses).enumerate() {
                let margin = 3.0 * h.tip_sigma;
                for p in pose.tips {
                    if p[0] < margin
                        || p[1] < margin
                        || p[0] > self.width as f64 - 1.0 - margin
                        || p[1] > self.height as f64 - 1.0 - margin
                    {
                        return invalid(format!("hand {i} leaves the frame at frame {k}"));
                    }
                }
            }
            for i in 0..poses.len() {
                for j in i + 1..poses.len() {
                    if poses[i].overlaps(&poses[j]) {
                        return invalid(format!("hands {i} and {j} overlap at frame {k}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A hand placed in the frame.
#[derive(Debug, Clone)]
struct Pose {
    origin: [f64; 2],
    cos: f64,
    sin: f64,
    unit: f64,
    hand: Handedness,
    tips: [[f64; 2]; 5],
}

impl Pose {
    fn at(h: &HandSpec, k: usize) -> Pose {
        let t = k as f64;
        let origin = [h.center[0] + h.velocity[0] * t, h.center[1] + h.velocity[1] * t];
        let (sin, cos) = (h.rotation + h.angular_velocity * t).to_radians().sin_cos();
        let mut pose = Pose {
            origin,
            cos,
            sin,
            unit: UNIT * h.scale,
            hand: h.handedness,
            tips: [[0.0; 2]; 5],
        };
        pose.tips = RIGHT_TIPS.map(|p| pose.place(p));
        pose
    }

    /// Frame position of a point given in right-hand units.
    fn place(&self, p: [f64; 2]) -> [f64; 2] {
        let q = mirror(self.hand, p);
        let (x, y) = (q[0] * self.unit, q[1] * self.unit);
        [
            self.origin[0] + self.cos * x - self.sin * y,
            self.origin[1] + self.sin * x + self.cos * y,
        ]
    }

    fn palm(&self) -> [f64; 2] {
        self.place(PALM_CENTER)
    }

    /// Disc around the fingertips and palm.
    fn extent(&self) -> ([f64; 2], f64) {
        let c = self.palm();
        let r = self.tips.iter().map(|t| dist(*t, c)).fold(PALM_AXES[0] * self.unit, f64::max);
        (c, r)
    }

    fn overlaps(&self, other: &Pose) -> bool {
        let (a, ra) = self.extent();
        let (b, rb) = other.extent();
        dist(a, b) < ra + rb
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Raised-cosine edge: 1 inside `r - soft`, 0 beyond `r`.
fn edge(d: f64, r: f64, soft: f64) -> f64 {
    if d <= r - soft {
        1.0
    } else if d >= r {
        0.0
    } else {
        0.5 + 0.5 * (std::f64::consts::PI * (d - r + soft) / soft).cos()
    }
}

/// Distance from `p` to segment `ab` and the position along it in [0, 1].
fn segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    (dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]]), t)
}

#[derive(Debug, Clone, Copy)]
enum Primitive {
    Dome { center: [f64; 2], axes: [f64; 2], cos: f64, sin: f64, peak: f64 },
    Capsule { a: [f64; 2], b: [f64; 2], radius: f64, level: f64, fade_to: f64 },
    Spike { center: [f64; 2], sigma: f64, peak: f64 },
}

impl Primitive {
    fn value(&self, p: [f64; 2]) -> f64 {
        match *self {
            Primitive::Dome { center, axes, cos, sin, peak } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let u = (cos * dx + sin * dy) / axes[0];
                let v = (-sin * dx + cos * dy) / axes[1];
                let q = u * u + v * v;
                if q >= 1.0 {
                    0.0
                } else {
                    peak * (1.0 - q * q)
                }
            }
            Primitive::Capsule { a, b, radius, level, fade_to } => {
                let (d, t) = segment(p, a, b);
                let soft = (radius * 0.5).min(3.0);
                (level + (fade_to - level) * t) * edge(d, radius, soft)
            }
            Primitive::Spike { center, sigma, peak } => {
                let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                peak * (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    /// Box outside of which the value stays below one gray level.
    fn reach(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Primitive::Dome { center, axes, .. } => {
                let r = axes[0].max(axes[1]);
                ([center[0] - r, center[1] - r], [center[0] + r, center[1] + r])
            }
            Primitive::Capsule { a, b, radius, .. } => (
                [a[0].min(b[0]) - radius, a[1].min(b[1]) - radius],
                [a[0].max(b[0]) + radius, a[1].max(b[1]) + radius],
            ),
            Primitive::Spike { center, sigma, peak } => {
                let r = sigma * (2.0 * peak.max(1.0).ln()).sqrt();
                ([center[0] - r, center[1] - r], [center[0] + r, center[1] + r])
            }
        }
    }
}

fn lifted(h: &HandSpec, finger: Finger, k: usize) -> bool {
    h.lifts.iter().any(|l| l.finger == finger && (l.from..l.to).contains(&k))
}

fn primitives(h: &HandSpec, pose: &Pose, k: usize) -> Vec<Primitive> {
    let u = pose.unit;
    let palm = pose.palm();
    let wrist = pose.place([PALM_CENTER[0], PALM_CENTER[1] + ARM_LENGTH]);
    let mut out = vec![
        Primitive::Capsule {
            a: palm,
            b: wrist,
            radius: ARM_RADIUS * u,
            level: h.palm_peak * 0.55,
            fade_to: h.palm_peak * 0.25,
        },
        Primitive::Dome {
            center: palm,
            axes: [PALM_AXES[0] * u, PALM_AXES[1] * u],
            cos: pose.cos,
            sin: pose.sin,
            peak: h.palm_peak,
        },
    ];
    for (f, tip) in Finger::ORDER.iter().zip(pose.tips) {
        let up = lifted(h, *f, k);
        let level = if up { h.finger_level * 0.6 } else { h.finger_level };
        out.push(Primitive::Capsule {
            a: palm,
            b: tip,
            radius: FINGER_RADIUS * u,
            level,
            fade_to: level,
        });
        if !up {
            out.push(Primitive::Spike {
                center: tip,
                sigma: h.tip_sigma,
                peak: h.tip_peak,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTip {
    pub position: [f64; 2],
    /// Index into the scene's hands.
    pub hand: usize,
    pub finger: Finger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthHand {
    pub hand: usize,
    pub handedness: Handedness,
    /// Indices into the frame's fingertips.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub fingertips: Vec<TruthTip>,
    pub hands: Vec<TruthHand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameTruth>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.to_owned(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Renders scenes frame by frame.
pub struct Renderer<'a> {
    spec: &'a SceneSpec,
    field: Vec<f64>,
}

impl<'a> Renderer<'a> {
    pub fn new(spec: &'a SceneSpec) -> Self {
        let (w, h) = (spec.width, spec.height);
        let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        let r2max = cx * cx + cy * cy;
        let mut field = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                field.push(1.0 - spec.illumination_falloff * r2 / r2max);
            }
        }
        Renderer { spec, field }
    }

    /// Multiplicative illumination factor per pixel.
    pub fn field(&self) -> &[f64] {
        &self.field
    }

    /// Background and saturated-surface frames for normalization.
    pub fn illumination(&self) -> IlluminationModel {
        let (w, h) = (self.spec.width, self.spec.height);
        let lo = Image::from_fn(w, h, |x, y| quantize(self.spec.floor * self.field[y * w + x]));
        let hi = Image::from_fn(w, h, |x, y| quantize(255.0 * self.field[y * w + x]));
        IlluminationModel::new(lo, hi).expect("same dimensions")
    }

    /// Noise-free scene intensities before illumination.
    pub fn scene(&self, k: usize) -> Vec<f64> {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut buf = vec![self.spec.floor; w * h];
        for hand in &self.spec.hands {
            let pose = Pose::at(hand, k);
            for prim in primitives(hand, &pose, k) {
                let (lo, hi) = prim.reach();
                let x0 = lo[0].floor().max(0.0) as usize;
                let y0 = lo[1].floor().max(0.0) as usize;
                let x1 = (hi[0].ceil().max(-1.0) as i64).min(w as i64 - 1);
                let y1 = (hi[1].ceil().max(-1.0) as i64).min(h as i64 - 1);
                if x1 < x0 as i64 || y1 < y0 as i64 {
                    continue;
                }
                for y in y0..=y1 as usize {
                    for x in x0..=x1 as usize {
                        let v = prim.value([x as f64, y as f64]);
                        let cell = &mut buf[y * w + x];
                        if v > *cell {
                            *cell = v;
                        }
                    }
                }
            }
        }
        buf
    }

    /// Scene value at one point, evaluating every primitive.
    pub fn scene_at(&self, k: usize, p: [f64; 2]) -> f64 {
        let mut v = self.spec.floor;
        for hand in &self.spec.hands {
            let pose = Pose::at(hand, k);
            for prim in primitives(hand, &pose, k) {
                v = v.max(prim.value(p));
            }
        }
        v
    }

    pub fn truth(&self, k: usize) -> FrameTruth {
        let mut out = FrameTruth::default();
        for (i, hand) in self.spec.hands.iter().enumerate() {
            let pose = Pose::at(hand, k);
            let mut members = Vec::new();
            for (f, tip) in Finger::ORDER.iter().zip(pose.tips) {
                if !lifted(hand, *f, k) {
                    members.push(out.fingertips.len());
                    out.fingertips.push(TruthTip {
                        position: tip,
                        hand: i,
                        finger: *f,
                    });
                }
            }
            out.hands.push(TruthHand {
                hand: i,
                handedness: hand.handedness,
                members,
            });
        }
        out
    }

    pub fn frame(&self, k: usize) -> Image {
        let (w, h) = (self.spec.width, self.spec.height);
        let scene = self.scene(k);
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ k as u64);
        let noise = Normal::new(0.0, self.spec.noise_sigma).expect("non-negative sigma");
        let data = scene
            .iter()
            .zip(&self.field)
            .map(|(s, f)| {
                let n = if self.spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                quantize(s * f + n)
            })
            .collect();
        Image::from_vec(w, h, data).expect("dimensions match")
    }
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Paths of a rendered scene directory.
#[derive(Debug, Clone)]
pub struct SceneDir {
    pub root: PathBuf,
}

impl SceneDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SceneDir { root: root.into() }
    }
    pub fn frames(&self) -> PathBuf {
        self.root.join("frames")
    }
    pub fn truth(&self) -> PathBuf {
        self.root.join("truth.json")
    }
    pub fn illumination_min(&self) -> PathBuf {
        self.root.join("illumination_min.pgm")
    }
    pub fn illumination_max(&self) -> PathBuf {
        self.root.join("illumination_max.pgm")
    }
}

/// Writes frames, labels and illumination images under `dir`.
pub fn write_scene(spec: &SceneSpec, dir: &Path) -> Result<GroundTruth, SynthError> {
    spec.validate()?;
    let paths = SceneDir::new(dir);
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| SynthError::Io { path, source }
    };
    std::fs::create_dir_all(paths.frames()).map_err(io(&paths.frames()))?;
    let r = Renderer::new(spec);
    let model = r.illumination();
    pgm::write(&paths.illumination_min(), model.min())?;
    pgm::write(&paths.illumination_max(), model.max())?;
    let mut truth = GroundTruth {
        width: spec.width,
        height: spec.height,
        frames: Vec::with_capacity(spec.frames),
    };
    for k in 0..spec.frames {
        pgm::write(&paths.frames().join(format!("{k:05}.pgm")), &r.frame(k))?;
        truth.frames.push(r.truth(k));
    }
    let text = serde_json::to_string(&truth)?;
    std::fs::write(paths.truth(), text).map_err(io(&paths.truth()))?;
    Ok(truth)
}
