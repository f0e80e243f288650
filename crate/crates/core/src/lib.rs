//! Optical multi-touch processing.
//!
//! Frames from a camera behind a diffusing surface flow through
//! undistortion, illumination normalization, region-of-interest labeling,
//! per-region component trees, fingertip classification, hand clustering
//! and registration, tracking, and finally TUIO output.

pub mod bench;
pub mod calibration;
pub mod config;
pub mod descriptors;
pub mod eval;
pub mod fingertip;
pub mod hands;
pub mod image;
pub mod mser;
pub mod pipeline;
pub mod pgm;
pub mod roi;
pub mod synth;
pub mod tracking;
pub mod tuio;

pub use image::{Image, Pixel, Rect};
