//! Toolkit for curating machine-generated sentence-pair corpora and training
//! sentence-similarity bi-encoders with importance-weighted losses.
//!
//! The crate is organized around four stages:
//!
//! - [`corpus`] — ingestion, tokenization, and derivation of balanced
//!   human/machine detection sets, plus a deterministic toy corruption
//!   generator for end-to-end experiments without a language model.
//! - [`metrics`] — lexical divergence analysis (BLEU-N, Jaccard, Distinct-N,
//!   Zipf coefficient) grouped by importance decile.
//! - [`sdi`] — the synthetic-data identification model: a hashed n-gram
//!   logistic classifier whose temperature-scaled confidence for the human
//!   class is the importance score `p_D`.
//! - [`encoder`] — a mean-pooled token-embedding bi-encoder trained with
//!   cosine/MSE regression, where per-example losses can be reweighted by
//!   `p_D` (rise), left uniform (dino), filtered (filtering), or randomized
//!   (random).
//!
//! Hot loops (batch scoring, per-pair metrics, per-example gradients) run on
//! rayon when the default `parallel` feature is enabled and fall back to
//! sequential iteration otherwise; results are bit-identical either way
//! because all floating-point reductions happen in input order.

pub mod corpus;
pub mod encoder;
pub mod exec;
pub mod hashing;
pub mod metrics;
pub mod sdi;

pub use corpus::{Corpus, LabeledSentence, Origin, PairedExample, Split};
pub use encoder::{EncoderModel, EvalReport, TrainConfig, Variant};
pub use metrics::{GroupKind, GroupReport, ScoredPair};
pub use sdi::{SdiConfig, SdiModel};
