//! Synthetic data identification.
//!
//! A logistic classifier over hashed lexical features that separates
//! machine-written from human-written sentences. Its temperature-scaled
//! confidence for the *human* class is the importance score `p_D`: higher
//! means the sentence looks more like human text.
//!
//! Features are counts of word unigrams, word bigrams, and character
//! trigrams (over the space-joined lowercase sentence), hashed into
//! `feature_dim` buckets with FNV-1a (see [`crate::hashing`]) and
//! l2-normalized per sentence.
//!
//! The machine class carries label 1, so the model's logit `z` points
//! toward "machine" and `p_D = sigmoid(-z / temperature)`. Temperature is
//! stored on the model and applied only at prediction time, never during
//! training; it rescales confidence without changing any ranking.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{ensure, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, LabeledSentence, Origin};
use crate::exec::map_ordered;
use crate::hashing::feature_bucket;

pub const SDI_FORMAT_VERSION: u32 = 1;

/// Default number of hash buckets.
pub const DEFAULT_FEATURE_DIM: usize = 1 << 18;

/// A sentence's hashed feature vector: sorted unique bucket indices with
/// l2-normalized counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Hash a token list into a normalized sparse feature vector.
///
/// An empty token list maps to the zero vector.
pub fn featurize(tokens: &[String], feature_dim: usize) -> SparseVector {
    assert!(feature_dim >= 2, "feature_dim must be at least 2");
    if tokens.is_empty() {
        return SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
        };
    }
    let mut counts: std::collections::HashMap<u32, f64> = std::collections::HashMap::new();
    for token in tokens {
        let b = feature_bucket(b'u', token, feature_dim) as u32;
        *counts.entry(b).or_insert(0.0) += 1.0;
    }
    for pair in tokens.windows(2) {
        let key = format!("{} {}", pair[0], pair[1]);
        let b = feature_bucket(b'b', &key, feature_dim) as u32;
        *counts.entry(b).or_insert(0.0) += 1.0;
    }
    let joined = tokens.join(" ").to_lowercase();
    let chars: Vec<char> = joined.chars().collect();
    for window in chars.windows(3) {
        let key: String = window.iter().collect();
        let b = feature_bucket(b'c', &key, feature_dim) as u32;
        *counts.entry(b).or_insert(0.0) += 1.0;
    }

    let mut entries: Vec<(u32, f64)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|(i, _)| *i);
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    SparseVector {
        indices: entries.iter().map(|(i, _)| *i).collect(),
        values: entries.iter().map(|(_, v)| v / norm).collect(),
    }
}

/// The detection model: dense weights over hash buckets, a bias, and a
/// prediction temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdiModel {
    pub format_version: u32,
    pub feature_dim: usize,
    pub temperature: f64,
    pub bias: f64,
    pub weights: Vec<f64>,
}

impl SdiModel {
    /// Zero-initialized model.
    pub fn new(feature_dim: usize, temperature: f64) -> Result<Self> {
        ensure!(feature_dim >= 2, "feature_dim must be at least 2");
        ensure!(temperature > 0.0, "temperature must be positive");
        Ok(Self {
            format_version: SDI_FORMAT_VERSION,
            feature_dim,
            temperature,
            bias: 0.0,
            weights: vec![0.0; feature_dim],
        })
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.feature_dim >= 2, "feature_dim must be at least 2");
        ensure!(self.temperature > 0.0, "temperature must be positive");
        ensure!(
            self.weights.len() == self.feature_dim,
            "weight vector length {} does not match feature_dim {}",
            self.weights.len(),
            self.feature_dim
        );
        Ok(())
    }

    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        ensure!(temperature > 0.0, "temperature must be positive");
        self.temperature = temperature;
        Ok(())
    }

    /// Raw machine logit for a feature vector.
    fn logit(&self, features: &SparseVector) -> f64 {
        features.dot(&self.weights) + self.bias
    }
}

/// Training hyperparameters for [`train_sdi`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdiConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub feature_dim: usize,
    pub l2: f64,
}

impl Default for SdiConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 3,
            batch_size: 32,
            seed: 0,
            feature_dim: DEFAULT_FEATURE_DIM,
            l2: 1e-6,
        }
    }
}

impl SdiConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.learning_rate > 0.0, "learning_rate must be positive");
        ensure!(self.epochs >= 1, "epochs must be at least 1");
        ensure!(self.batch_size >= 1, "batch_size must be at least 1");
        ensure!(self.feature_dim >= 2, "feature_dim must be at least 2");
        ensure!(self.l2 >= 0.0, "l2 must be non-negative");
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean binary logistic loss of a batch plus the l2 penalty
/// `(l2 / 2) * ||w||^2`. Labels: machine = 1, human = 0.
pub fn batch_logistic_loss(
    weights: &[f64],
    bias: f64,
    l2: f64,
    batch: &[(SparseVector, f64)],
) -> f64 {
    let data: f64 = batch
        .iter()
        .map(|(x, y)| {
            let z = x.dot(weights) + bias;
            // -y ln sigma(z) - (1-y) ln(1 - sigma(z))
            y * softplus(-z) + (1.0 - y) * softplus(z)
        })
        .sum::<f64>()
        / batch.len() as f64;
    data + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`batch_logistic_loss`] with respect to the weights
/// and bias. Returns (sparse weight gradient without the l2 term, bias
/// gradient); the l2 contribution `l2 * w` is dense and applied separately.
pub fn batch_logistic_grad(
    weights: &[f64],
    bias: f64,
    batch: &[(SparseVector, f64)],
) -> (std::collections::BTreeMap<usize, f64>, f64) {
    let inv = 1.0 / batch.len() as f64;
    let residuals: Vec<f64> = map_ordered(batch, |(x, y)| (sigmoid(x.dot(weights) + bias) - y) * inv);
    let mut grad = std::collections::BTreeMap::new();
    let mut bias_grad = 0.0;
    for ((x, _), r) in batch.iter().zip(residuals) {
        for (i, v) in x.iter() {
            *grad.entry(i).or_insert(0.0) += r * v;
        }
        bias_grad += r;
    }
    (grad, bias_grad)
}

/// Train the detection model by mini-batch gradient descent from zero
/// initialization. Data is shuffled each epoch by the config seed; the run
/// is a pure function of `(data, config)`.
pub fn train_sdi(data: &[LabeledSentence], config: &SdiConfig) -> Result<SdiModel> {
    config.validate()?;
    let machines = data.iter().filter(|s| s.origin == Origin::Machine).count();
    ensure!(
        machines > 0 && machines < data.len(),
        "training data must contain both classes (got {machines} machine of {})",
        data.len()
    );

    let examples: Vec<(SparseVector, f64)> = map_ordered(data, |s| {
        let label = match s.origin {
            Origin::Machine => 1.0,
            Origin::Human => 0.0,
        };
        (featurize(&tokenize(&s.text), config.feature_dim), label)
    });

    let mut model = SdiModel::new(config.feature_dim, 0.5)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(SparseVector, f64)> =
                chunk.iter().map(|&i| examples[i].clone()).collect();
            let (grad, bias_grad) = batch_logistic_grad(&model.weights, model.bias, &batch);
            if config.l2 > 0.0 {
                for w in &mut model.weights {
                    *w -= config.learning_rate * config.l2 * *w;
                }
            }
            for (i, g) in grad {
                model.weights[i] -= config.learning_rate * g;
            }
            model.bias -= config.learning_rate * bias_grad;
        }
    }
    Ok(model)
}

/// Full-dataset loss at the model's current parameters (used to monitor
/// epoch-to-epoch descent).
pub fn dataset_loss(model: &SdiModel, data: &[LabeledSentence], l2: f64) -> f64 {
    let examples: Vec<(SparseVector, f64)> = map_ordered(data, |s| {
        let label = match s.origin {
            Origin::Machine => 1.0,
            Origin::Human => 0.0,
        };
        (featurize(&tokenize(&s.text), model.feature_dim), label)
    });
    batch_logistic_loss(&model.weights, model.bias, l2, &examples)
}

/// Importance score `p_D` of a sentence: the temperature-scaled probability
/// of the human class, strictly inside (0, 1).
pub fn predict(model: &SdiModel, tokens: &[String]) -> f64 {
    let z = model.logit(&featurize(tokens, model.feature_dim));
    sigmoid(-z / model.temperature)
}

/// Score a batch of sentences, in order.
pub fn predict_batch(model: &SdiModel, sentences: &[Vec<String>]) -> Vec<f64> {
    map_ordered(sentences, |tokens| predict(model, tokens))
}

/// Classification accuracy (percent) under the rule `p_D < 0.5 => machine`,
/// with exact ties counting as machine.
pub fn evaluate_sdi(model: &SdiModel, data: &[LabeledSentence]) -> Result<f64> {
    ensure!(!data.is_empty(), "cannot evaluate on empty data");
    let correct: Vec<bool> = map_ordered(data, |s| {
        let p = predict(model, &tokenize(&s.text));
        let predicted = if p <= 0.5 {
            Origin::Machine
        } else {
            Origin::Human
        };
        predicted == s.origin
    });
    Ok(100.0 * correct.iter().filter(|&&c| c).count() as f64 / data.len() as f64)
}

/// Write the model as a self-describing JSON file.
pub fn save_sdi(model: &SdiModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    model.validate()?;
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    serde_json::to_writer(BufWriter::new(file), model)?;
    Ok(())
}

/// Load a model file, rejecting unknown format versions.
pub fn load_sdi(path: impl AsRef<Path>) -> Result<SdiModel> {
    let path = path.as_ref();
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let model: SdiModel = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("malformed model file {}", path.display()))?;
    ensure!(
        model.format_version == SDI_FORMAT_VERSION,
        "unsupported model format_version {} (expected {})",
        model.format_version,
        SDI_FORMAT_VERSION
    );
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{corrupt, synth, CorruptMode};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn featurize_empty_is_zero_vector() {
        let v = featurize(&[], 1 << 10);
        assert!(v.is_empty());
        assert_eq!(v.dot(&vec![1.0; 1 << 10]), 0.0);
    }

    #[test]
    fn featurize_is_deterministic() {
        let a = featurize(&toks("the quick fox"), 1 << 12);
        let b = featurize(&toks("the quick fox"), 1 << 12);
        assert_eq!(a, b);
    }

    #[test]
    fn featurize_is_unit_norm() {
        for text in ["a", "a b", "the quick brown fox jumps over the lazy dog"] {
            let v = featurize(&toks(text), 1 << 14);
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-9);
        }
    }

    fn separable_set(n_per_class: usize, seed: u64) -> Vec<LabeledSentence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..n_per_class {
            out.push(LabeledSentence {
                text: synth::sentence(&mut rng),
                origin: Origin::Human,
            });
            let source = synth::sentence(&mut rng);
            let mode = CorruptMode::ALL[i % 4];
            out.push(LabeledSentence {
                text: corrupt(&source, mode, seed ^ i as u64).unwrap(),
                origin: Origin::Machine,
            });
        }
        out
    }

    #[test]
    fn training_separates_toy_classes() {
        let data = separable_set(150, 17);
        let config = SdiConfig {
            feature_dim: 1 << 16,
            seed: 17,
            ..SdiConfig::default()
        };
        let model = train_sdi(&data, &config).unwrap();
        let acc = evaluate_sdi(&model, &data).unwrap();
        assert!(acc >= 99.0, "training accuracy {acc}");
    }

    #[test]
    fn training_rejects_single_class() {
        let data: Vec<LabeledSentence> = (0..10)
            .map(|i| LabeledSentence {
                text: format!("human sentence number {i}"),
                origin: Origin::Human,
            })
            .collect();
        assert!(train_sdi(&data, &SdiConfig::default()).is_err());
    }

    #[test]
    fn config_validation_rejects_zero_epochs() {
        let config = SdiConfig {
            epochs: 0,
            ..SdiConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let dim = 1 << 8;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let texts = [
            "the quick fox crosses the bridge",
            "a silver river passes the meadow",
            "one rusty engine guards that signal",
            "the pale falcon circles calmly",
            "a quiet harbor beyond the orchard",
        ];
        let batch: Vec<(SparseVector, f64)> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| (featurize(&toks(t), dim), (i % 2) as f64))
            .collect();
        let mut weights: Vec<f64> = (0..dim)
            .map(|_| rand::Rng::gen_range(&mut rng, -0.5..0.5))
            .collect();
        let bias = 0.3;
        let l2 = 1e-3;

        let (grad, bias_grad) = batch_logistic_grad(&weights, bias, &batch);
        let h = 1e-5;
        let touched: Vec<usize> = batch.iter().flat_map(|(x, _)| x.iter().map(|(i, _)| i)).collect();
        for &i in touched.iter().take(200) {
            let orig = weights[i];
            weights[i] = orig + h;
            let plus = batch_logistic_loss(&weights, bias, l2, &batch);
            weights[i] = orig - h;
            let minus = batch_logistic_loss(&weights, bias, l2, &batch);
            weights[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let analytic = grad.get(&i).copied().unwrap_or(0.0) + l2 * orig;
            let denom = analytic.abs().max(fd.abs());
            if denom > 1e-8 {
                assert!(
                    (analytic - fd).abs() / denom < 1e-4,
                    "weight {i}: analytic {analytic} vs fd {fd}"
                );
            } else {
                assert!((analytic - fd).abs() < 1e-9);
            }
        }
        let plus = batch_logistic_loss(&weights, bias + h, l2, &batch);
        let minus = batch_logistic_loss(&weights, bias - h, l2, &batch);
        let fd = (plus - minus) / (2.0 * h);
        assert!((bias_grad - fd).abs() / fd.abs().max(bias_grad.abs()) < 1e-4);
    }

    #[test]
    fn full_set_loss_is_non_increasing_at_small_lr() {
        let data = separable_set(60, 3);
        let mut losses = Vec::new();
        for epochs in 1..=4 {
            let config = SdiConfig {
                learning_rate: 0.01,
                epochs,
                feature_dim: 1 << 14,
                seed: 3,
                ..SdiConfig::default()
            };
            let model = train_sdi(&data, &config).unwrap();
            losses.push(dataset_loss(&model, &data, config.l2));
        }
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "losses {losses:?}");
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = separable_set(40, 9);
        let config = SdiConfig {
            feature_dim: 1 << 12,
            seed: 123,
            ..SdiConfig::default()
        };
        let a = train_sdi(&data, &config).unwrap();
        let b = train_sdi(&data, &config).unwrap();
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn zero_model_predicts_half() {
        let model = SdiModel::new(1 << 10, 0.7).unwrap();
        assert_abs_diff_eq!(predict(&model, &toks("anything at all")), 0.5);
        assert_abs_diff_eq!(predict(&model, &[]), 0.5);
    }

    #[test]
    fn temperature_sharpens_human_leaning_logit() {
        // Machine logit fixed at -1 via the bias; tau = 0.5 gives sigmoid(2).
        let mut model = SdiModel::new(1 << 10, 0.5).unwrap();
        model.bias = -1.0;
        let p = predict(&model, &toks("whatever"));
        assert_abs_diff_eq!(p, 0.8807970779778823, epsilon = 1e-10);
    }

    #[test]
    fn temperature_preserves_ranking() {
        let data = separable_set(30, 21);
        let config = SdiConfig {
            feature_dim: 1 << 12,
            seed: 21,
            ..SdiConfig::default()
        };
        let mut model = train_sdi(&data, &config).unwrap();
        let sentences: Vec<Vec<String>> = data.iter().map(|s| toks(&s.text)).collect();
        let before = predict_batch(&model, &sentences);
        model.set_temperature(model.temperature * 2.0).unwrap();
        let after = predict_batch(&model, &sentences);
        let rank = |scores: &[f64]| {
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
            idx
        };
        assert_eq!(rank(&before), rank(&after));
    }

    #[test]
    fn evaluate_applies_tie_rule() {
        // Zero model scores exactly 0.5 everywhere: everything is predicted
        // machine, so balanced data scores 50%.
        let model = SdiModel::new(1 << 8, 1.0).unwrap();
        let data: Vec<LabeledSentence> = (0..10)
            .map(|i| LabeledSentence {
                text: format!("sentence {i}"),
                origin: if i % 2 == 0 {
                    Origin::Human
                } else {
                    Origin::Machine
                },
            })
            .collect();
        assert_abs_diff_eq!(evaluate_sdi(&model, &data).unwrap(), 50.0);
        assert!(evaluate_sdi(&model, &[]).is_err());
    }

    #[test]
    fn confident_model_scores_100() {
        let data = separable_set(80, 33);
        let config = SdiConfig {
            feature_dim: 1 << 14,
            epochs: 5,
            seed: 33,
            ..SdiConfig::default()
        };
        let model = train_sdi(&data, &config).unwrap();
        assert_abs_diff_eq!(evaluate_sdi(&model, &data).unwrap(), 100.0, epsilon = 1.0 + 1e-9);
    }

    #[test]
    fn model_file_roundtrip_and_version_check() {
        let data = separable_set(10, 2);
        let config = SdiConfig {
            feature_dim: 1 << 8,
            seed: 2,
            ..SdiConfig::default()
        };
        let model = train_sdi(&data, &config).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_sdi(&model, f.path()).unwrap();
        let back = load_sdi(f.path()).unwrap();
        assert_eq!(model, back);

        let mut wrong = model.clone();
        wrong.format_version = 99;
        let f2 = tempfile::NamedTempFile::new().unwrap();
        serde_json::to_writer(std::fs::File::create(f2.path()).unwrap(), &wrong).unwrap();
        let err = load_sdi(f2.path()).unwrap_err().to_string();
        assert!(err.contains("format_version"), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn featurize_norm_is_one_for_nonempty(
            words in proptest::collection::vec("[a-h]{1,6}", 1..12)
        ) {
            let v = featurize(&words, 1 << 12);
            prop_assert!((v.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn predict_is_strictly_decreasing_in_machine_logit(
            bias_lo in -5.0f64..5.0,
            gap in 0.01f64..3.0,
            tau in 0.1f64..3.0,
        ) {
            let mut low = SdiModel::new(4, tau).unwrap();
            low.bias = bias_lo;
            let mut high = SdiModel::new(4, tau).unwrap();
            high.bias = bias_lo + gap;
            let t = vec!["x".to_string()];
            prop_assert!(predict(&high, &t) < predict(&low, &t));
        }
    }
}
