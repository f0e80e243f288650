//! Geometric undistortion and illumination normalization.
//!
//! A [`CalibrationGrid`] records where the corners of a printed checkerboard
//! landed in the camera image. Its points are known to form a uniform
//! rectangular lattice on the surface, so a uniform bicubic B-spline over the
//! distorted points maps each output pixel's parametric cell coordinates back
//! to a sub-pixel camera position. The mapping is evaluated once into an
//! [`UndistortionMap`] and then applied to every frame with bilinear sampling.
//!
//! Intensities are normalized per pixel against a prerecorded background
//! (`min`) and maximum response (`max`) image. The underlying model is an
//! affine distortion `I = a + m * I'` per pixel; min-max scaling undoes both
//! terms without estimating them.

use std::fs;
use std::io;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::image::Image;

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("grid needs at least 4x4 points, got {rows}x{cols}")]
    GridTooSmall { rows: usize, cols: usize },
    #[error("grid declares {expected} points but lists {actual}")]
    PointCount { expected: usize, actual: usize },
    #[error("grid point ({row}, {col}) at ({x}, {y}) lies outside the {width}x{height} source")]
    PointOutOfBounds {
        row: usize,
        col: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("grid points ({0}, {1}) and ({2}, {3}) coincide")]
    Degenerate(usize, usize, usize, usize),
    #[error("output must be at least 2x2, got {0}x{1}")]
    OutputTooSmall(usize, usize),
    #[error("image is {actual:?} but {what} expects {expected:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("bad undistortion map file: {0}")]
    MapFormat(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Uniform cubic B-spline blending weights `(B0(u), B1(u), B2(u), B3(u))`.
///
/// Panics when `u` lies outside `[0, 1]`.
#[inline]
pub fn bspline_weights(u: f64) -> [f64; 4] {
    assert!((0.0..=1.0).contains(&u), "parametric coordinate {u} outside [0, 1]");
    let u2 = u * u;
    let u3 = u2 * u;
    let omu = 1.0 - u;
    [
        omu * omu * omu / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

/// Checkerboard corner positions in the distorted camera image.
///
/// `points` is row-major, `rows * cols` entries of `[x, y]`. The undistorted
/// counterparts are implied: a uniform lattice spanning the output image,
/// row 0 at the top and column 0 at the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub rows: usize,
    pub cols: usize,
    pub source_width: usize,
    pub source_height: usize,
    pub points: Vec<[f64; 2]>,
}

impl CalibrationGrid {
    /// Grid whose distorted points already form the uniform lattice over a
    /// `width`x`height` image.
    pub fn identity(rows: usize, cols: usize, width: usize, height: usize) -> Self {
        Self::from_fn(rows, cols, width, height, |x, y| [x, y])
    }

    /// Grid with `points[r][c] = f(lattice point)` where the lattice spans the
    /// `width`x`height` source.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        width: usize,
        height: usize,
        mut f: impl FnMut(f64, f64) -> [f64; 2],
    ) -> Self {
        let sx = (width - 1) as f64 / (cols - 1) as f64;
        let sy = (height - 1) as f64 / (rows - 1) as f64;
        let mut points = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                points.push(f(c as f64 * sx, r as f64 * sy));
            }
        }
        CalibrationGrid {
            rows,
            cols,
            source_width: width,
            source_height: height,
            points,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let grid: CalibrationGrid = serde_json::from_str(text)?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let (rows, cols) = (self.rows, self.cols);
        if rows < 4 || cols < 4 {
            return Err(CalibrationError::GridTooSmall { rows, cols });
        }
        if self.points.len() != rows * cols {
            return Err(CalibrationError::PointCount {
                expected: rows * cols,
                actual: self.points.len(),
            });
        }
        let (w, h) = (self.source_width, self.source_height);
        for r in 0..rows {
            for c in 0..cols {
                let [x, y] = self.point(r, c);
                let inside = x.is_finite()
                    && y.is_finite()
                    && (0.0..=(w as f64 - 1.0)).contains(&x)
                    && (0.0..=(h as f64 - 1.0)).contains(&y);
                if !inside {
                    return Err(CalibrationError::PointOutOfBounds {
                        row: r,
                        col: c,
                        x,
                        y,
                        width: w,
                        height: h,
                    });
                }
                let p = self.point(r, c);
                for (r2, c2) in [(r + 1, c), (r, c + 1)] {
                    if r2 < rows && c2 < cols {
                        let q = self.point(r2, c2);
                        if (p[0] - q[0]).hypot(p[1] - q[1]) < 1e-9 {
                            return Err(CalibrationError::Degenerate(r, c, r2, c2));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn point(&self, row: usize, col: usize) -> [f64; 2] {
        self.points[row * self.cols + col]
    }

    /// Control point with one ring of linear extrapolation beyond the border,
    /// so border cells keep a full 4x4 support.
    fn control(&self, row: isize, col: isize) -> [f64; 2] {
        let (rows, cols) = (self.rows as isize, self.cols as isize);
        let reflect = |a: [f64; 2], b: [f64; 2]| [2.0 * a[0] - b[0], 2.0 * a[1] - b[1]];
        if row < 0 {
            return reflect(self.control(0, col), self.control(1, col));
        }
        if row >= rows {
            return reflect(self.control(rows - 1, col), self.control(rows - 2, col));
        }
        if col < 0 {
            return reflect(self.control(row, 0), self.control(row, 1));
        }
        if col >= cols {
            return reflect(self.control(row, cols - 1), self.control(row, cols - 2));
        }
        self.point(row as usize, col as usize)
    }
}

/// Evaluates the bicubic B-spline patch of lattice cell (`row`, `col`) at
/// parametric coordinates `u` (along columns) and `v` (along rows).
pub fn eval_spline(grid: &CalibrationGrid, row: usize, col: usize, u: f64, v: f64) -> [f64; 2] {
    debug_assert!(row + 1 < grid.rows && col + 1 < grid.cols);
    let bu = bspline_weights(u);
    let bv = bspline_weights(v);
    let mut out = [0.0; 2];
    for (j, wv) in bv.iter().enumerate() {
        for (i, wu) in bu.iter().enumerate() {
            let p = grid.control(row as isize + j as isize - 1, col as isize + i as isize - 1);
            let w = wu * wv;
            out[0] += w * p[0];
            out[1] += w * p[1];
        }
    }
    out
}

/// For every output pixel, the sub-pixel source position to sample.
///
/// Entries that fall outside the source are stored as NaN and render black.
#[derive(Debug, Clone, PartialEq)]
pub struct UndistortionMap {
    width: usize,
    height: usize,
    source_width: usize,
    source_height: usize,
    coords: Vec<[f32; 2]>,
}

const MAP_MAGIC: &[u8; 8] = b"TPUMAP01";

impl UndistortionMap {
    pub fn identity(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, width, height, |x, y| [x as f64, y as f64])
    }

    /// Map whose entry at `(x, y)` is `f(x, y)`; out-of-range results are flagged.
    pub fn from_fn(
        width: usize,
        height: usize,
        source_width: usize,
        source_height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 2],
    ) -> Self {
        let mut coords = Vec::with_capacity(width * height);
        let (xmax, ymax) = (source_width as f64 - 1.0, source_height as f64 - 1.0);
        for y in 0..height {
            for x in 0..width {
                let [sx, sy] = f(x, y);
                // absorb rounding dust at the border
                const EPS: f64 = 1e-6;
                let inside = (-EPS..=xmax + EPS).contains(&sx) && (-EPS..=ymax + EPS).contains(&sy);
                coords.push(if inside {
                    [sx.clamp(0.0, xmax) as f32, sy.clamp(0.0, ymax) as f32]
                } else {
                    [f32::NAN, f32::NAN]
                });
            }
        }
        UndistortionMap {
            width,
            height,
            source_width,
            source_height,
            coords,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn source_dimensions(&self) -> (usize, usize) {
        (self.source_width, self.source_height)
    }

    /// Source coordinate of output pixel `(x, y)`, `None` when flagged.
    pub fn get(&self, x: usize, y: usize) -> Option<[f32; 2]> {
        let c = self.coords[y * self.width + x];
        (!c[0].is_nan()).then_some(c)
    }

    pub fn flagged_count(&self) -> usize {
        self.coords.iter().filter(|c| c[0].is_nan()).count()
    }

    /// Magic, four little-endian `u32` dimensions (output width and height,
    /// source width and height), then one little-endian `f32` pair per output
    /// pixel in row-major order. Flagged entries are NaN pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.coords.len() * 8);
        out.extend_from_slice(MAP_MAGIC);
        for d in [
            self.width,
            self.height,
            self.source_width,
            self.source_height,
        ] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for c in &self.coords {
            out.extend_from_slice(&c[0].to_le_bytes());
            out.extend_from_slice(&c[1].to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CalibrationError> {
        let bad = |m: &str| CalibrationError::MapFormat(m.to_string());
        if bytes.len() < 24 || &bytes[..8] != MAP_MAGIC {
            return Err(bad("missing magic"));
        }
        let dim = |k: usize| {
            u32::from_le_bytes(bytes[8 + 4 * k..12 + 4 * k].try_into().unwrap()) as usize
        };
        let (width, height, source_width, source_height) = (dim(0), dim(1), dim(2), dim(3));
        let n = width * height;
        let body = &bytes[24..];
        if body.len() != n * 8 {
            return Err(bad("coordinate table length does not match dimensions"));
        }
        let coords = body
            .chunks_exact(8)
            .map(|c| {
                [
                    f32::from_le_bytes(c[..4].try_into().unwrap()),
                    f32::from_le_bytes(c[4..].try_into().unwrap()),
                ]
            })
            .collect();
        Ok(UndistortionMap {
            width,
            height,
            source_width,
            source_height,
            coords,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Evaluates the grid spline once for every pixel of a `width`x`height` output.
pub fn build_map(
    grid: &CalibrationGrid,
    width: usize,
    height: usize,
) -> Result<UndistortionMap, CalibrationError> {
    grid.validate()?;
    if width < 2 || height < 2 {
        return Err(CalibrationError::OutputTooSmall(width, height));
    }
    let sx = (width - 1) as f64 / (grid.cols - 1) as f64;
    let sy = (height - 1) as f64 / (grid.rows - 1) as f64;
    let cell = |t: f64, cells: usize| {
        let i = (t.floor() as usize).min(cells - 1);
        (i, (t - i as f64).clamp(0.0, 1.0))
    };
    Ok(UndistortionMap::from_fn(
        width,
        height,
        grid.source_width,
        grid.source_height,
        |x, y| {
            let (col, u) = cell(x as f64 / sx, grid.cols - 1);
            let (row, v) = cell(y as f64 / sy, grid.rows - 1);
            eval_spline(grid, row, col, u, v)
        },
    ))
}

/// Bilinear sample of `img` at a real-valued position inside its bounds.
///
/// At exact integer coordinates the neighbouring samples get zero weight and
/// are not read, so positions on the last row or column are valid.
#[inline]
pub fn sample_bilinear(img: &Image, x: f32, y: f32) -> u8 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let a = img.get(x0, y0) as f32;
    let b = img.get(x1, y0) as f32;
    let c = img.get(x0, y1) as f32;
    let d = img.get(x1, y1) as f32;
    let top = a + fx * (b - a);
    let bottom = c + fx * (d - c);
    let v = top + fy * (bottom - top);
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Writes undistorted rows `rows` of the output into `out`
/// (`rows.len() * map.width()` bytes).
pub fn undistort_rows(img: &Image, map: &UndistortionMap, rows: Range<usize>, out: &mut [u8]) {
    debug_assert_eq!(out.len(), rows.len() * map.width);
    let w = map.width;
    for (dst_row, y) in out.chunks_exact_mut(w).zip(rows) {
        let src = &map.coords[y * w..(y + 1) * w];
        for (dst, c) in dst_row.iter_mut().zip(src) {
            *dst = if c[0].is_nan() {
                0
            } else {
                sample_bilinear(img, c[0], c[1])
            };
        }
    }
}

pub fn undistort(img: &Image, map: &UndistortionMap) -> Result<Image, CalibrationError> {
    let expected = map.source_dimensions();
    if img.dimensions() != expected {
        return Err(CalibrationError::DimensionMismatch {
            what: "undistortion map",
            expected,
            actual: img.dimensions(),
        });
    }
    let mut out = Image::new(map.width, map.height);
    undistort_rows(img, map, 0..map.height, out.as_mut_slice());
    Ok(out)
}

/// Background (`min`) and maximum response (`max`) images.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationModel {
    min: Image,
    max: Image,
}

impl IlluminationModel {
    pub fn new(min: Image, max: Image) -> Result<Self, CalibrationError> {
        if min.dimensions() != max.dimensions() {
            return Err(CalibrationError::DimensionMismatch {
                what: "illumination minimum image",
                expected: max.dimensions(),
                actual: min.dimensions(),
            });
        }
        Ok(IlluminationModel { min, max })
    }

    pub fn min(&self) -> &Image {
        &self.min
    }

    pub fn max(&self) -> &Image {
        &self.max
    }

    pub fn dimensions(&self) -> (usize, usize) {
        self.min.dimensions()
    }

    /// Pixels where `max <= min`; they carry no usable signal.
    pub fn degenerate_count(&self) -> usize {
        self.min
            .as_slice()
            .iter()
            .zip(self.max.as_slice())
            .filter(|(lo, hi)| hi <= lo)
            .count()
    }
}

/// `floor((i - min) / (max - min) * 256)` clamped to `[0, 255]`; zero where
/// `max <= min`.
#[inline]
pub fn normalize_pixel(i: u8, min: u8, max: u8) -> u8 {
    if max <= min || i <= min {
        return 0;
    }
    let num = (i - min) as u32 * 256;
    (num / (max - min) as u32).min(255) as u8
}

/// Normalizes `buf` in place; `offset` is the index of `buf[0]` in the frame.
pub fn normalize_in_place(buf: &mut [u8], offset: usize, model: &IlluminationModel) {
    let lo = &model.min.as_slice()[offset..offset + buf.len()];
    let hi = &model.max.as_slice()[offset..offset + buf.len()];
    for ((v, &a), &b) in buf.iter_mut().zip(lo).zip(hi) {
        *v = normalize_pixel(*v, a, b);
    }
}

pub fn normalize(img: &Image, model: &IlluminationModel) -> Result<Image, CalibrationError> {
    if img.dimensions() != model.dimensions() {
        return Err(CalibrationError::DimensionMismatch {
            what: "illumination model",
            expected: model.dimensions(),
            actual: img.dimensions(),
        });
    }
    let mut out = img.clone();
    normalize_in_place(out.as_mut_slice(), 0, model);
    Ok(out)
}
