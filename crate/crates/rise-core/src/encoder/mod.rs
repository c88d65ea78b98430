//! Bi-encoder sentence similarity model.
//!
//! Each sentence is encoded independently: tokens hash into `vocab_dim`
//! buckets and the sentence embedding is the mean of the selected rows of a
//! trainable embedding table. Similarity is the cosine of the two sentence
//! embeddings, regressed against the pair label with a (possibly
//! per-example-weighted) mean squared error.

mod eval;
mod train;

pub use eval::{average_ranks, evaluate, pearson, select_threshold, spearman, EvalReport};
pub use train::{
    batch_loss, build_training_set, example_weight, train, training_gradient, training_loss,
    TrainConfig, TrainExample, Variant,
};

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{ensure, Context, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::fnv1a64;

pub const ENCODER_FORMAT_VERSION: u32 = 1;

/// Default token hash buckets.
pub const DEFAULT_VOCAB_DIM: usize = 1 << 16;
/// Default embedding width.
pub const DEFAULT_EMBED_DIM: usize = 64;

/// Trainable token-embedding table with mean pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub format_version: u32,
    pub vocab_dim: usize,
    pub embed_dim: usize,
    /// Row-major `vocab_dim x embed_dim` matrix.
    pub embeddings: Vec<f64>,
}

impl EncoderModel {
    /// Embeddings drawn uniformly from `[-init_scale, init_scale]`, row by
    /// row, from the given rng.
    pub fn init(
        vocab_dim: usize,
        embed_dim: usize,
        init_scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        ensure!(vocab_dim >= 2, "vocab_dim must be at least 2");
        ensure!(embed_dim >= 2, "embed_dim must be at least 2");
        ensure!(init_scale > 0.0, "init_scale must be positive");
        let embeddings = (0..vocab_dim * embed_dim)
            .map(|_| rng.gen_range(-init_scale..=init_scale))
            .collect();
        Ok(Self {
            format_version: ENCODER_FORMAT_VERSION,
            vocab_dim,
            embed_dim,
            embeddings,
        })
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.vocab_dim >= 2, "vocab_dim must be at least 2");
        ensure!(self.embed_dim >= 2, "embed_dim must be at least 2");
        ensure!(
            self.embeddings.len() == self.vocab_dim * self.embed_dim,
            "embedding matrix has {} entries, expected {} x {}",
            self.embeddings.len(),
            self.vocab_dim,
            self.embed_dim
        );
        Ok(())
    }

    pub fn row(&self, bucket: usize) -> &[f64] {
        &self.embeddings[bucket * self.embed_dim..(bucket + 1) * self.embed_dim]
    }

    pub fn row_mut(&mut self, bucket: usize) -> &mut [f64] {
        &mut self.embeddings[bucket * self.embed_dim..(bucket + 1) * self.embed_dim]
    }
}

/// Hash bucket of a token under this vocabulary size (stable FNV-1a).
pub fn token_bucket(token: &str, vocab_dim: usize) -> usize {
    (fnv1a64(token.as_bytes()) % vocab_dim as u64) as usize
}

/// Mean-pooled sentence embedding. An empty token list maps to the zero
/// vector.
pub fn embed(model: &EncoderModel, tokens: &[String]) -> Vec<f64> {
    let mut out = vec![0.0; model.embed_dim];
    if tokens.is_empty() {
        return out;
    }
    for token in tokens {
        let row = model.row(token_bucket(token, model.vocab_dim));
        for (o, r) in out.iter_mut().zip(row) {
            *o += r;
        }
    }
    let inv = 1.0 / tokens.len() as f64;
    for o in &mut out {
        *o *= inv;
    }
    out
}

/// Cosine similarity, clamped to [-1, 1]. Either vector with norm below
/// 1e-12 yields 0.
pub fn cosine(e1: &[f64], e2: &[f64]) -> Result<f64> {
    ensure!(
        e1.len() == e2.len(),
        "vector length mismatch: {} vs {}",
        e1.len(),
        e2.len()
    );
    let n1 = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = e2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 < 1e-12 || n2 < 1e-12 {
        return Ok(0.0);
    }
    let dot: f64 = e1.iter().zip(e2).map(|(a, b)| a * b).sum();
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0))
}

/// Predicted similarity of two sentences: cosine of their embeddings.
pub fn predict_similarity(model: &EncoderModel, x1: &[String], x2: &[String]) -> f64 {
    cosine(&embed(model, x1), &embed(model, x2)).expect("embeddings share embed_dim")
}

/// Write the model as a self-describing JSON file (row-major matrix).
pub fn save_encoder(model: &EncoderModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    model.validate()?;
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    serde_json::to_writer(BufWriter::new(file), model)?;
    Ok(())
}

/// Load a model file, rejecting unknown format versions.
pub fn load_encoder(path: impl AsRef<Path>) -> Result<EncoderModel> {
    let path = path.as_ref();
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let model: EncoderModel = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("malformed model file {}", path.display()))?;
    ensure!(
        model.format_version == ENCODER_FORMAT_VERSION,
        "unsupported model format_version {} (expected {})",
        model.format_version,
        ENCODER_FORMAT_VERSION
    );
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    /// Zeroed model sized so the test tokens land in distinct buckets.
    fn fixture_model() -> EncoderModel {
        let vocab_dim = 1 << 12;
        assert_ne!(token_bucket("a", vocab_dim), token_bucket("b", vocab_dim));
        EncoderModel {
            format_version: ENCODER_FORMAT_VERSION,
            vocab_dim,
            embed_dim: 2,
            embeddings: vec![0.0; vocab_dim * 2],
        }
    }

    #[test]
    fn embed_means_fixture_rows() {
        let mut model = fixture_model();
        model.row_mut(token_bucket("a", model.vocab_dim)).copy_from_slice(&[1.0, 0.0]);
        model.row_mut(token_bucket("b", model.vocab_dim)).copy_from_slice(&[0.0, 1.0]);
        assert_eq!(embed(&model, &toks("a b")), vec![0.5, 0.5]);
        assert_eq!(embed(&model, &[]), vec![0.0, 0.0]);
        assert_eq!(embed(&model, &toks("a a")), vec![1.0, 0.0]);
    }

    #[test]
    fn cosine_examples() {
        assert_abs_diff_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cosine(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn similarity_is_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = EncoderModel::init(1 << 10, 8, 0.1, &mut rng).unwrap();
        let a = toks("the quick fox");
        let b = toks("a silver river");
        assert_eq!(
            predict_similarity(&model, &a, &b).to_bits(),
            predict_similarity(&model, &b, &a).to_bits()
        );
        assert!(predict_similarity(&model, &a, &b).abs() <= 1.0);
        assert_abs_diff_eq!(predict_similarity(&model, &a, &a), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(predict_similarity(&model, &[], &a), 0.0);
    }

    #[test]
    fn encoder_file_roundtrip_and_version_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = EncoderModel::init(64, 4, 0.1, &mut rng).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_encoder(&model, f.path()).unwrap();
        assert_eq!(load_encoder(f.path()).unwrap(), model);

        let mut wrong = model.clone();
        wrong.format_version = 9;
        let f2 = tempfile::NamedTempFile::new().unwrap();
        serde_json::to_writer(std::fs::File::create(f2.path()).unwrap(), &wrong).unwrap();
        assert!(load_encoder(f2.path()).is_err());
    }
}
