//! Core library of the embleak toolkit: quantify privacy leakage from text
//! embeddings by reconstructing text with a trained attack decoder and by
//! inferring sensitive attributes through embedding similarity.

pub mod attribute;
pub mod corpus;
pub mod decoder;
pub mod embedder;
pub mod generate;
pub mod hash;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod simdata;
pub mod synth;
pub mod trainset;
