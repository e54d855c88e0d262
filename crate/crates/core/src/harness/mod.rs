//! Random-matrix validation, file I/O with provenance, and the command-line front end.

pub mod cli;
pub mod io;
pub mod ks;
pub mod rmt;

pub use cli::run_command;
pub use io::Provenance;
pub use ks::{compare_density, compare_density_curve, DensityCurve};
pub use rmt::{sample_rmt_spectrum, Deterministic, EmpiricalSpectrum, EnsembleKind, EnsembleSpec};
