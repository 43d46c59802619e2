//! Rate-distortion estimation from samples, with reference solvers and a
//! one-shot lossy codec built on reverse channel coding.
//!
//! * [`nerd`] trains a generator for the reproduction marginal against the
//!   dual rate-distortion objective ([`dual`]) and reports `R(D)`.
//! * [`blahut_arimoto`] solves discrete problems exactly, including the
//!   plug-in estimator on an empirical sample.
//! * [`gaussian`] gives the closed-form Gaussian `R(D)` by reverse
//!   water-filling, plus the optimal channel and marginal.
//! * [`rcc`] compresses single samples by selecting among shared-seed
//!   candidates, coding the chosen index with [`zipf_huffman`].

pub mod autodiff;
pub mod blahut_arimoto;
pub mod curve;
pub mod digest;
pub mod dual;
mod error;
pub mod gaussian;
pub mod io;
pub mod matrix;
pub mod nerd;
pub mod rcc;
pub mod zipf_huffman;

pub use error::{Error, Result};
pub use matrix::{SampleMatrix, Scale};
