//! Book chapters compiled as doctests.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/preprocessing.md")]
pub mod preprocessing {}

#[doc = include_str!("../../../book/src/regions.md")]
pub mod regions {}

#[doc = include_str!("../../../book/src/fingertips.md")]
pub mod fingertips {}

#[doc = include_str!("../../../book/src/hands-and-tracking.md")]
pub mod hands_and_tracking {}

#[doc = include_str!("../../../book/src/tuio.md")]
pub mod tuio {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
