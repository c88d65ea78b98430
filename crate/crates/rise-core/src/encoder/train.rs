//! Encoder training: weighted cosine/MSE regression over paired sentences.
//!
//! Four variants differ only in where each example's loss weight comes
//! from: `dino` uses 1 for everything, `rise` uses the importance score
//! `p_D` of the machine sentence, `random` uses a uniform draw frozen at
//! dataset construction, and `filtering` drops the lowest-importance slice
//! of the training set and weights the rest at 1.
//!
//! Training is deterministic: embeddings initialize from one ChaCha stream,
//! epoch shuffles come from a second, and random-variant weights from a
//! third, all derived from the config seed. Per-example gradients may be
//! computed in parallel but accumulate in batch order, so the final model is
//! bit-identical regardless of thread count.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use anyhow::{bail, ensure, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cosine, token_bucket, EncoderModel, DEFAULT_EMBED_DIM, DEFAULT_VOCAB_DIM};
use crate::corpus::{tokenize, Corpus, Split};
use crate::exec::map_ordered;

/// ChaCha stream ids carving independent substreams out of one seed.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_RANDOM_WEIGHTS: u64 = 3;

fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Loss-weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Dino,
    Rise,
    Filtering,
    Random,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Dino,
        Variant::Rise,
        Variant::Filtering,
        Variant::Random,
    ];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Variant::Dino => "dino",
            Variant::Rise => "rise",
            Variant::Filtering => "filtering",
            Variant::Random => "random",
        };
        write!(f, "{name}")
    }
}

impl FromStr for Variant {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dino" => Ok(Variant::Dino),
            "rise" => Ok(Variant::Rise),
            "filtering" => Ok(Variant::Filtering),
            "random" => Ok(Variant::Random),
            other => bail!("unknown variant: {other}"),
        }
    }
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of training examples dropped by the filtering variant.
    pub filter_fraction: f64,
    pub init_scale: f64,
    pub vocab_dim: usize,
    pub embed_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Dino,
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 3,
            seed: 0,
            filter_fraction: 0.1,
            init_scale: 0.1,
            vocab_dim: DEFAULT_VOCAB_DIM,
            embed_dim: DEFAULT_EMBED_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.learning_rate > 0.0, "learning_rate must be positive");
        ensure!(self.batch_size >= 1, "batch_size must be at least 1");
        ensure!(self.epochs >= 1, "epochs must be at least 1");
        ensure!(
            self.filter_fraction > 0.0 && self.filter_fraction <= 0.5,
            "filter_fraction must be in (0, 0.5], got {}",
            self.filter_fraction
        );
        ensure!(self.init_scale > 0.0, "init_scale must be positive");
        ensure!(self.vocab_dim >= 2, "vocab_dim must be at least 2");
        ensure!(self.embed_dim >= 2, "embed_dim must be at least 2");
        Ok(())
    }
}

/// Per-example loss weight under a variant. `p_d` is the machine sentence's
/// importance, `u` the example's frozen uniform draw. Filtering weights at 1
/// because it removes examples at dataset construction instead.
pub fn example_weight(variant: Variant, p_d: f64, u: f64) -> f64 {
    match variant {
        Variant::Dino | Variant::Filtering => 1.0,
        Variant::Rise => p_d,
        Variant::Random => u,
    }
}

/// Weighted mean squared error: `(1/B) * sum_i w_i * (pred_i - label_i)^2`.
pub fn batch_loss(preds: &[f64], labels: &[f64], weights: &[f64]) -> Result<f64> {
    ensure!(
        preds.len() == labels.len() && preds.len() == weights.len(),
        "length mismatch: {} preds, {} labels, {} weights",
        preds.len(),
        labels.len(),
        weights.len()
    );
    ensure!(!preds.is_empty(), "empty batch");
    let total: f64 = preds
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((p, y), w)| w * (p - y) * (p - y))
        .sum();
    Ok(total / preds.len() as f64)
}

/// One preprocessed training pair: token buckets for both sides, the label,
/// and the resolved loss weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub id: String,
    pub x1: Vec<usize>,
    pub x2: Vec<usize>,
    pub label: f64,
    pub weight: f64,
}

/// Build the working training set for a variant from the train split.
///
/// `scores` maps example id to the machine sentence's importance and is
/// required by `rise` and `filtering`. Filtering drops the bottom
/// `max(1, floor(filter_fraction * n))` examples by importance (ties broken
/// by id), keeping corpus order for the survivors. Random-variant weights
/// are drawn here, in corpus order, and never redrawn.
pub fn build_training_set(
    corpus: &Corpus,
    scores: Option<&HashMap<String, f64>>,
    config: &TrainConfig,
) -> Result<Vec<TrainExample>> {
    config.validate()?;
    let train = corpus.examples_in(Split::Train);
    ensure!(!train.is_empty(), "train split is empty");

    let importance_of = |id: &str| -> Result<f64> {
        let table = scores.ok_or_else(|| {
            anyhow::anyhow!("variant {} requires importance scores", config.variant)
        })?;
        let p = table
            .get(id)
            .copied()
            .ok_or_else(|| anyhow::anyhow!("missing importance score for train example {id}"))?;
        ensure!((0.0..=1.0).contains(&p), "score for {id} out of range: {p}");
        Ok(p)
    };

    let kept: Vec<&crate::corpus::PairedExample> = match config.variant {
        Variant::Filtering => {
            let n = train.len();
            let drop = ((config.filter_fraction * n as f64).floor() as usize).max(1);
            ensure!(drop < n, "filtering would drop the whole train split");
            let mut ranked: Vec<(&str, f64)> = train
                .iter()
                .map(|e| importance_of(&e.id).map(|p| (e.id.as_str(), p)))
                .collect::<Result<_>>()?;
            ranked.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .expect("importance is never NaN")
                    .then_with(|| a.0.cmp(b.0))
            });
            let dropped: std::collections::HashSet<&str> =
                ranked[n - drop..].iter().map(|(id, _)| *id).collect();
            train
                .iter()
                .filter(|e| !dropped.contains(e.id.as_str()))
                .copied()
                .collect()
        }
        _ => train,
    };

    let mut random_rng = seeded_stream(config.seed, STREAM_RANDOM_WEIGHTS);
    kept.iter()
        .map(|e| {
            let weight = match config.variant {
                Variant::Dino | Variant::Filtering => 1.0,
                Variant::Rise => example_weight(config.variant, importance_of(&e.id)?, 0.0),
                Variant::Random => example_weight(config.variant, 0.0, random_rng.gen::<f64>()),
            };
            Ok(TrainExample {
                id: e.id.clone(),
                x1: tokenize(&e.human_text)
                    .iter()
                    .map(|t| token_bucket(t, config.vocab_dim))
                    .collect(),
                x2: tokenize(&e.machine_text)
                    .iter()
                    .map(|t| token_bucket(t, config.vocab_dim))
                    .collect(),
                label: e.label,
                weight,
            })
        })
        .collect()
}

fn mean_rows(model: &EncoderModel, buckets: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; model.embed_dim];
    if buckets.is_empty() {
        return out;
    }
    for &b in buckets {
        for (o, r) in out.iter_mut().zip(model.row(b)) {
            *o += r;
        }
    }
    let inv = 1.0 / buckets.len() as f64;
    for o in &mut out {
        *o *= inv;
    }
    out
}

/// Batch loss of the model on preprocessed examples: weighted MSE of the
/// cosine predictions.
pub fn training_loss(model: &EncoderModel, batch: &[&TrainExample]) -> f64 {
    let preds: Vec<f64> = batch
        .iter()
        .map(|ex| {
            cosine(&mean_rows(model, &ex.x1), &mean_rows(model, &ex.x2))
                .expect("embeddings share embed_dim")
        })
        .collect();
    let labels: Vec<f64> = batch.iter().map(|ex| ex.label).collect();
    let weights: Vec<f64> = batch.iter().map(|ex| ex.weight).collect();
    batch_loss(&preds, &labels, &weights).expect("aligned batch")
}

/// Analytic gradient of [`training_loss`] with respect to every touched
/// embedding row, keyed by bucket. Rows no example touches are absent
/// (their gradient is exactly zero), as are rows touched only by zero-weight
/// examples once their contribution cancels to exactly zero.
pub fn training_gradient(
    model: &EncoderModel,
    batch: &[&TrainExample],
) -> BTreeMap<usize, Vec<f64>> {
    let d = model.embed_dim;
    let inv_batch = 1.0 / batch.len() as f64;
    let per_example: Vec<BTreeMap<usize, Vec<f64>>> = map_ordered(batch, |ex| {
        let mut grad: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        if ex.weight == 0.0 {
            return grad;
        }
        let e1 = mean_rows(model, &ex.x1);
        let e2 = mean_rows(model, &ex.x2);
        let n1 = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n2 = e2.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n1 < 1e-12 || n2 < 1e-12 {
            // Cosine is pinned to 0 here; treat the kink as zero slope.
            return grad;
        }
        let c = (e1.iter().zip(&e2).map(|(a, b)| a * b).sum::<f64>() / (n1 * n2))
            .clamp(-1.0, 1.0);
        let dl_dc = 2.0 * ex.weight * (c - ex.label) * inv_batch;
        let mut side = |buckets: &[usize], own: &[f64], other: &[f64], n_own: f64, n_other: f64| {
            if buckets.is_empty() {
                return;
            }
            let scale = dl_dc / buckets.len() as f64;
            let dc_down: Vec<f64> = (0..d)
                .map(|j| other[j] / (n_own * n_other) - c * own[j] / (n_own * n_own))
                .collect();
            for &b in buckets {
                let row = grad.entry(b).or_insert_with(|| vec![0.0; d]);
                for (g, dc) in row.iter_mut().zip(&dc_down) {
                    *g += scale * dc;
                }
            }
        };
        side(&ex.x1, &e1, &e2, n1, n2);
        side(&ex.x2, &e2, &e1, n2, n1);
        grad
    });

    let mut total: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for example_grad in per_example {
        for (bucket, row) in example_grad {
            let slot = total.entry(bucket).or_insert_with(|| vec![0.0; d]);
            for (t, g) in slot.iter_mut().zip(row) {
                *t += g;
            }
        }
    }
    total
}

/// Train an encoder on the corpus train split.
///
/// Embeddings initialize uniformly in `[-init_scale, init_scale]` from the
/// seed, the training set is built per the variant, and each epoch runs
/// mini-batch gradient descent over a fresh shuffle. Pure function of
/// `(corpus, scores, config)`.
pub fn train(
    corpus: &Corpus,
    scores: Option<&HashMap<String, f64>>,
    config: &TrainConfig,
) -> Result<EncoderModel> {
    config.validate()?;
    let examples = build_training_set(corpus, scores, config)?;
    let mut init_rng = seeded_stream(config.seed, STREAM_INIT);
    let mut model = EncoderModel::init(
        config.vocab_dim,
        config.embed_dim,
        config.init_scale,
        &mut init_rng,
    )?;

    let mut shuffle_rng = seeded_stream(config.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let grad = training_gradient(&model, &batch);
            for (bucket, g) in grad {
                let row = model.row_mut(bucket);
                for (w, gi) in row.iter_mut().zip(g) {
                    *w -= config.learning_rate * gi;
                }
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn weights_follow_variant_definitions() {
        assert_eq!(example_weight(Variant::Dino, 0.3, 0.9), 1.0);
        assert_eq!(example_weight(Variant::Rise, 1.0, 0.9), 1.0);
        assert_eq!(example_weight(Variant::Rise, 0.0, 0.9), 0.0);
        assert_eq!(example_weight(Variant::Random, 0.3, 0.37), 0.37);
        assert_eq!(example_weight(Variant::Filtering, 0.3, 0.9), 1.0);
    }

    #[test]
    fn batch_loss_examples() {
        assert_eq!(
            batch_loss(&[0.2, 0.7], &[0.2, 0.7], &[1.0, 1.0]).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            batch_loss(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]).unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            batch_loss(&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]).unwrap(),
            0.5
        );
        assert!(batch_loss(&[1.0], &[0.0, 1.0], &[1.0]).is_err());
    }

    fn scores_for(corpus: &Corpus, value: f64) -> HashMap<String, f64> {
        corpus
            .examples()
            .iter()
            .map(|e| (e.id.clone(), value))
            .collect()
    }

    fn small_config(variant: Variant, seed: u64) -> TrainConfig {
        TrainConfig {
            variant,
            seed,
            vocab_dim: 1 << 12,
            embed_dim: 16,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn rise_with_unit_scores_equals_dino() {
        let corpus = synth::sample_pairs(80, 4);
        let scores = scores_for(&corpus, 1.0);
        let dino = train(&corpus, None, &small_config(Variant::Dino, 9)).unwrap();
        let rise = train(&corpus, Some(&scores), &small_config(Variant::Rise, 9)).unwrap();
        for (a, b) in dino.embeddings.iter().zip(&rise.embeddings) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn filtering_drops_floor_fraction() {
        // 100 train examples need a corpus where ids 0..100 are all train.
        let examples: Vec<crate::corpus::PairedExample> = (0..100)
            .map(|i| crate::corpus::PairedExample {
                id: format!("p{i:03}"),
                human_text: format!("human sentence number {i} here"),
                machine_text: format!("machine sentence number {i} here"),
                label: 0.5,
                split: Split::Train,
            })
            .collect();
        let corpus = Corpus::from_examples("flat", false, examples).unwrap();
        let scores: HashMap<String, f64> = corpus
            .examples()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i as f64 / 100.0))
            .collect();
        let config = small_config(Variant::Filtering, 0);
        let kept = build_training_set(&corpus, Some(&scores), &config).unwrap();
        assert_eq!(kept.len(), 90);
        // The ten lowest-importance ids are gone.
        for ex in &kept {
            let p = scores[&ex.id];
            assert!(p >= 0.10, "kept low-importance example {} ({p})", ex.id);
        }
    }

    #[test]
    fn rise_requires_scores() {
        let corpus = synth::sample_pairs(30, 1);
        assert!(train(&corpus, None, &small_config(Variant::Rise, 1)).is_err());
        let partial: HashMap<String, f64> = corpus
            .examples()
            .iter()
            .take(3)
            .map(|e| (e.id.clone(), 0.5))
            .collect();
        let err = train(&corpus, Some(&partial), &small_config(Variant::Rise, 1))
            .unwrap_err()
            .to_string();
        assert!(err.contains("missing importance score"), "{err}");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let corpus = synth::sample_pairs(60, 8);
        let a = train(&corpus, None, &small_config(Variant::Random, 5)).unwrap();
        let b = train(&corpus, None, &small_config(Variant::Random, 5)).unwrap();
        for (x, y) in a.embeddings.iter().zip(&b.embeddings) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let corpus = synth::sample_pairs(12, 6);
        let config = TrainConfig {
            vocab_dim: 1 << 10,
            embed_dim: 8,
            ..small_config(Variant::Dino, 6)
        };
        let examples = build_training_set(&corpus, None, &config).unwrap();
        let batch: Vec<&TrainExample> = examples.iter().take(4).collect();
        let mut init_rng = seeded_stream(6, STREAM_INIT);
        let mut model =
            EncoderModel::init(config.vocab_dim, config.embed_dim, 0.1, &mut init_rng).unwrap();

        let grad = training_gradient(&model, &batch);
        assert!(!grad.is_empty());
        let h = 1e-5;
        for (&bucket, row_grad) in &grad {
            for j in 0..config.embed_dim {
                let idx = bucket * config.embed_dim + j;
                let orig = model.embeddings[idx];
                model.embeddings[idx] = orig + h;
                let plus = training_loss(&model, &batch);
                model.embeddings[idx] = orig - h;
                let minus = training_loss(&model, &batch);
                model.embeddings[idx] = orig;
                let fd = (plus - minus) / (2.0 * h);
                let analytic = row_grad[j];
                let denom = analytic.abs().max(fd.abs());
                if denom > 1e-8 {
                    assert!(
                        (analytic - fd).abs() / denom < 1e-4,
                        "bucket {bucket} dim {j}: analytic {analytic} vs fd {fd}"
                    );
                } else {
                    assert!((analytic - fd).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_weight_examples_leave_their_rows_at_init() {
        // One train example whose tokens appear nowhere else; give it weight
        // zero via rise scores and check its rows never move.
        let mut examples = synth::sample_pairs(40, 2).examples().to_vec();
        examples.push(crate::corpus::PairedExample {
            id: "zzz-frozen".into(),
            human_text: "zebra zephyr zodiac quartz".into(),
            machine_text: "xylophone xenon vortex juniper".into(),
            label: 1.0,
            split: Split::Train,
        });
        let corpus = Corpus::from_examples("frozen", false, examples).unwrap();
        let mut scores = scores_for(&corpus, 1.0);
        scores.insert("zzz-frozen".into(), 0.0);

        let config = small_config(Variant::Rise, 3);
        let frozen_buckets: Vec<usize> = ["zebra", "zephyr", "zodiac", "quartz", "xylophone", "xenon", "vortex", "juniper"]
            .iter()
            .map(|t| token_bucket(t, config.vocab_dim))
            .collect();
        // Sanity: those buckets are untouched by every other example.
        let others = build_training_set(&corpus, Some(&scores_for(&corpus, 1.0)), &config).unwrap();
        for ex in others.iter().filter(|e| e.id != "zzz-frozen") {
            for b in ex.x1.iter().chain(&ex.x2) {
                assert!(!frozen_buckets.contains(b), "bucket collision in fixture");
            }
        }

        let trained = train(&corpus, Some(&scores), &config).unwrap();
        let mut init_rng = seeded_stream(config.seed, STREAM_INIT);
        let init = EncoderModel::init(
            config.vocab_dim,
            config.embed_dim,
            config.init_scale,
            &mut init_rng,
        )
        .unwrap();
        for &b in &frozen_buckets {
            assert_eq!(trained.row(b), init.row(b), "row {b} moved");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn batch_loss_is_nonnegative_and_monotone_in_weights(
            preds in proptest::collection::vec(-1.0f64..1.0, 1..10),
            labels_seed in 0u64..1000,
            bump in 0usize..10,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(labels_seed);
            let labels: Vec<f64> = preds.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
            let weights: Vec<f64> = preds.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
            let base = batch_loss(&preds, &labels, &weights).unwrap();
            prop_assert!(base >= 0.0);
            let mut raised = weights.clone();
            let i = bump % raised.len();
            raised[i] = (raised[i] + 0.3).min(1.0);
            let higher = batch_loss(&preds, &labels, &raised).unwrap();
            prop_assert!(higher >= base - 1e-15);
        }
    }
}
