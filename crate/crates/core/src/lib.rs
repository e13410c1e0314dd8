//! Estimation of the proportion of true null hypotheses from discrete
//! p-values, and the adaptive step-up FDR procedures it feeds.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod exact_tests;
pub mod procedures;
pub mod simulate;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
struct ReadmeDoctests;
