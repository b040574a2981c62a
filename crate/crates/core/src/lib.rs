pub mod data;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod matrix;
pub mod neighbors;
pub mod preprocess;
pub mod resample;
pub mod rng;
pub mod classifiers;
