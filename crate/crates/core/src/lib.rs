//! Real-time exercise cine and flow MRI toolkit.
//!
//! The crate simulates accelerated multi-coil Cartesian acquisitions of
//! analytic cardiac and vascular phantoms, reconstructs them with an
//! adaptive composite-sparsity compressed-sensing solver, and runs the
//! downstream analysis: self-gated respiratory/cardiac signals, beat
//! selection, ventricular function, flow quantification and scan-rescan
//! repeatability.
//!
//! Module map:
//!
//! - [`phantom`]: dynamic cine/flow phantoms with ground truth and coil arrays
//! - [`sampling`]: GRO and CAVA Cartesian undersampling
//! - [`encode`]: multi-coil Fourier encoding and phase-contrast processing
//! - [`recon`]: sensitivity estimation, coil reweighting, sparsifying
//!   transforms and the CS solver
//! - [`physio`]: PCA-derived physiological signals and beat selection
//! - [`quant`]: cardiac function, flow metrics, NMAE and CCC
//! - [`harness`]: configuration, container format, pipeline and reports

pub mod encode;
pub mod error;
pub mod fourier;
pub mod harness;
pub mod phantom;
pub mod physio;
pub mod quant;
pub mod recon;
pub mod sampling;
pub mod types;

pub use error::{Error, Result};
pub use types::{CoilMaps, ImageSeries, C64};
