//! Factual error correction toolkit.
//!
//! A claim is checked against passages retrieved from a trusted corpus, the
//! suspect tokens are masked, and a corrector fills the masks conditioned on
//! the evidence. Corrections are scored with SARI, ROUGE and BLEU.

pub mod corrector;
pub mod dataset;
pub mod lm;
pub mod maskers;
pub mod metrics;
pub mod retrieval;
pub mod synth;
pub mod text;

pub use text::{tokenize, NGramMultiset, TokenSeq, VerdictLabel};
