#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Photon-timestamp distributions of a free-running single-photon detector
//! with dead time, modeled as a Markov chain over TCSPC bins.
//!
//! * [`model`]: parameters, arrival flux, cumulative flux, bin grid.
//! * [`kernel`]: transition matrices, per-element baseline and the
//!   permutation-based fast construction.
//! * [`spectral`]: stationary distribution, second eigenvalue, mixing.
//! * [`montecarlo`]: reference simulator and histograms.

pub mod error;
pub mod kernel;
pub mod model;
pub mod montecarlo;
pub mod spectral;

pub use error::{Error, Result};
pub use kernel::{
    apply_deadtime_shift, build_base_exponent, build_baseline, build_fast, exponent_equivalence_check, normalize_rows,
    ExponentKind, ExponentMatrix, Provenance, TransitionMatrix,
};
pub use model::{arrival_pdf, cumulative_flux, flux, StateGrid, SystemParams};
pub use montecarlo::{histogram, reference_pdf, rmse, simulate, Histogram, TimestampBatch};
pub use spectral::{
    bin_trajectory, mixing_steps, second_eigenvalue, spectral_summary, stationary, BinTrajectory, EigenOptions,
    MixingOutcome, SpectralSummary, StationaryDistribution,
};

/// Row-normalized fast kernel followed by power iteration.
pub fn predict(params: &SystemParams, tol: f64, max_iters: usize) -> Result<StationaryDistribution> {
    let m = normalize_rows(&build_fast(params)?)?;
    stationary(&m, tol, max_iters)
}
