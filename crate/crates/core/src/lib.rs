//! Radiomics robustness pipeline: cohort I/O, volume-of-interest operations,
//! feature extraction, reliability profiling, feature selection and model
//! evaluation.

pub mod cohort;
pub mod digest;
pub mod eval;
pub mod featsel;
pub mod model;
pub mod pipeline;
pub mod radiomics;
pub mod robustness;
pub mod roi;
pub mod seed;
pub mod synth;
