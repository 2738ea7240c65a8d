//! Endmember extraction, fully constrained unmixing and condition-residuum
//! analysis of endmember sets.
//!
//! The central operation is [`reduction::reduce_full`]: starting from an
//! over-complete endmember set it greedily removes one member per level,
//! trading the relative gain in condition number against the relative loss
//! in reconstruction RMSE. The resulting nested sets are plotted as
//! condition-residuum diagrams by [`diagram`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagram;
pub mod error;
pub mod extraction;
pub mod io;
pub mod reduction;
pub mod rng;
pub mod spectral;
pub mod synth;
pub mod unmixing;

pub use error::{Error, Result};
pub use extraction::{extract, Algorithm, ExtractionConfig};
pub use reduction::{reduce_full, reduce_step, ReductionConfig, ReductionStep, ReductionTrace};
pub use spectral::{
    condition_number, conditioning, rmse, spectral_angle, AbundanceMap, Conditioning, EndmemberSet,
    Provenance, QualityPoint, SpectralImage, UnmixMode, EPS_RANK, KAPPA_CAP,
};
pub use unmixing::{reconstruct, unmix, SolverConfig};
