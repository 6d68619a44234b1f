//! Cluster synthetic control.
//!
//! Donor pools are denoised by hard singular value thresholding, clustered
//! with k-means in the space of their leading singular vectors, and each
//! target is fitted only on the donors of its own cluster. The crate also
//! ships the synthetic-panel generator and the placebo and Monte-Carlo
//! harnesses used to evaluate the method.

pub mod clustering;
pub mod datagen;
pub mod engine;
pub mod evaluation;
pub mod io;
pub mod error;
pub mod matrix;
pub mod panel;
pub mod rank;
pub mod regression;
pub mod svd;

pub use error::{Error, Result};
pub use engine::{InterventionSplit, ScFit, EffectEstimate};
pub use matrix::Matrix;
pub use panel::TimePanel;
pub use rank::{select_rank, spectrum_report, RankRule, SpectrumRow};
pub use svd::{hsvt, svd, SvdFactors};
