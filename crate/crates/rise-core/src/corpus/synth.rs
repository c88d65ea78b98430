//! Deterministic demo corpora.
//!
//! Generates template sentences over small word pools, pairs them at the
//! three similarity levels {0, 0.5, 1}, and can replace a fraction of
//! machine sentences with corrupted off-topic text. Everything is a pure
//! function of the seed, so fixtures, CLI demos, and experiments are
//! reproducible byte for byte.

use anyhow::{ensure, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{corrupt, Corpus, CorruptMode, PairedExample, Split};

const DET: [&str; 3] = ["the", "a", "one"];
const ADJ: [&str; 6] = ["quick", "silver", "quiet", "bright", "rusty", "pale"];
const NOUN: [&str; 6] = ["fox", "river", "lantern", "engine", "harbor", "falcon"];
const VERB: [&str; 6] = ["crosses", "follows", "watches", "circles", "passes", "guards"];
const ADV: [&str; 4] = ["slowly", "quietly", "steadily", "calmly"];
const PREP: [&str; 4] = ["near", "beyond", "behind", "across"];
const DET2: [&str; 3] = ["that", "this", "its"];
const ADJ2: [&str; 6] = ["amber", "mossy", "hollow", "distant", "gentle", "crimson"];
const NOUN2: [&str; 6] = ["meadow", "garden", "bridge", "signal", "orchard", "vessel"];

fn pick<'a>(rng: &mut impl Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

/// Draw one nine-word template sentence.
pub fn sentence(rng: &mut impl Rng) -> String {
    [
        pick(rng, &DET),
        pick(rng, &ADJ),
        pick(rng, &NOUN),
        pick(rng, &VERB),
        pick(rng, &ADV),
        pick(rng, &PREP),
        pick(rng, &DET2),
        pick(rng, &ADJ2),
        pick(rng, &NOUN2),
    ]
    .join(" ")
}

/// Rewrite the adjective and adverb slots of a template sentence, leaving
/// the other seven words in place (a high-overlap paraphrase).
fn paraphrase(rng: &mut impl Rng, words: &[&str]) -> String {
    let mut out: Vec<&str> = words.to_vec();
    out[1] = pick(rng, &ADJ);
    out[4] = pick(rng, &ADV);
    out[7] = pick(rng, &ADJ2);
    out.join(" ")
}

/// Keep the subject half, rewrite the rest (a partial-overlap sentence).
fn half_overlap(rng: &mut impl Rng, words: &[&str]) -> String {
    let mut out: Vec<&str> = words.to_vec();
    out[3] = pick(rng, &VERB);
    out[4] = pick(rng, &ADV);
    out[5] = pick(rng, &PREP);
    out[6] = pick(rng, &DET2);
    out[7] = pick(rng, &ADJ2);
    out[8] = pick(rng, &NOUN2);
    out.join(" ")
}

/// Generate a paired corpus of `n` examples.
///
/// Labels cycle through 1, 0.5, 0; splits interleave roughly 70/15/15 so
/// every prefix of the corpus covers all three splits. The result is tagged
/// as generated.
pub fn sample_pairs(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let human = sentence(&mut rng);
        let words: Vec<&str> = human.split_whitespace().collect();
        let label = [1.0, 0.5, 0.0][i % 3];
        let machine = if label == 1.0 {
            paraphrase(&mut rng, &words)
        } else if label == 0.5 {
            half_overlap(&mut rng, &words)
        } else {
            sentence(&mut rng)
        };
        let split = match i % 20 {
            0..=13 => Split::Train,
            14..=16 => Split::Dev,
            _ => Split::Test,
        };
        examples.push(PairedExample {
            id: format!("p{i:05}"),
            human_text: human,
            machine_text: machine,
            label,
            split,
        });
    }
    Corpus::from_examples("synthetic", true, examples).expect("generated corpus is valid")
}

/// Record of one machine sentence replaced by [`apply_noise`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub id: String,
    pub donor_id: String,
    pub mode: CorruptMode,
}

/// Replace a `noise_rate` fraction of machine sentences with corrupted
/// copies of some *other* pair's machine sentence, so the replacement is
/// both degenerate and off-topic relative to its own human sentence.
///
/// Exactly `floor(noise_rate * len)` pairs are rewritten. Labels are left
/// untouched, which makes the affected labels unfaithful by construction.
/// Returns the new corpus plus one record per rewritten pair, in corpus
/// order.
pub fn apply_noise(
    corpus: &Corpus,
    noise_rate: f64,
    seed: u64,
) -> Result<(Corpus, Vec<NoiseRecord>)> {
    ensure!(
        (0.0..=1.0).contains(&noise_rate),
        "noise_rate must be in [0, 1], got {noise_rate}"
    );
    let n = corpus.len();
    let mut examples = corpus.examples().to_vec();
    let count = (noise_rate * n as f64).floor() as usize;
    if count == 0 {
        return Ok((
            Corpus::from_examples(corpus.name.clone(), corpus.generated_flag, examples)?,
            Vec::new(),
        ));
    }

    let donors: Vec<String> = examples.iter().map(|e| e.machine_text.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets = rand::seq::index::sample(&mut rng, n, count).into_vec();
    targets.sort_unstable();

    let mut records = Vec::with_capacity(count);
    for idx in targets {
        let donor_idx = if n == 1 {
            idx
        } else {
            // Uniform over the other pairs.
            let mut d = rng.gen_range(0..n - 1);
            if d >= idx {
                d += 1;
            }
            d
        };
        let mode = *CorruptMode::ALL.choose(&mut rng).expect("non-empty");
        let sub_seed: u64 = rng.gen();
        examples[idx].machine_text = corrupt(&donors[donor_idx], mode, sub_seed)?;
        records.push(NoiseRecord {
            id: examples[idx].id.clone(),
            donor_id: examples[donor_idx].id.clone(),
            mode,
        });
    }
    let corpus = Corpus::from_examples(corpus.name.clone(), corpus.generated_flag, examples)?;
    Ok((corpus, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn sample_pairs_is_deterministic_and_valid() {
        let a = sample_pairs(60, 11);
        let b = sample_pairs(60, 11);
        assert_eq!(a.examples(), b.examples());
        assert!(a.generated_flag);
        let (train, dev, test) = a.split_counts();
        assert_eq!(train + dev + test, 60);
        assert!(train > dev && train > test);
    }

    #[test]
    fn label_levels_track_overlap() {
        let corpus = sample_pairs(90, 3);
        let mean_overlap = |label: f64| {
            let pairs: Vec<&PairedExample> = corpus
                .examples()
                .iter()
                .filter(|e| e.label == label)
                .collect();
            let total: f64 = pairs
                .iter()
                .map(|e| {
                    let h: std::collections::HashSet<String> =
                        tokenize(&e.human_text).into_iter().collect();
                    let m: std::collections::HashSet<String> =
                        tokenize(&e.machine_text).into_iter().collect();
                    h.intersection(&m).count() as f64 / h.len() as f64
                })
                .sum();
            total / pairs.len() as f64
        };
        assert!(mean_overlap(1.0) > mean_overlap(0.5));
        assert!(mean_overlap(0.5) > mean_overlap(0.0));
    }

    #[test]
    fn apply_noise_zero_rate_is_identity() {
        let corpus = sample_pairs(40, 5);
        let (noised, records) = apply_noise(&corpus, 0.0, 9).unwrap();
        assert_eq!(noised.examples(), corpus.examples());
        assert!(records.is_empty());
    }

    #[test]
    fn apply_noise_full_rate_rewrites_everything() {
        let corpus = sample_pairs(50, 5);
        let (noised, records) = apply_noise(&corpus, 1.0, 9).unwrap();
        assert_eq!(records.len(), 50);
        let changed = corpus
            .examples()
            .iter()
            .zip(noised.examples())
            .filter(|(a, b)| a.machine_text != b.machine_text)
            .count();
        assert_eq!(changed, 50);
        for (a, b) in corpus.examples().iter().zip(noised.examples()) {
            assert_eq!(a.human_text, b.human_text);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn apply_noise_is_deterministic() {
        let corpus = sample_pairs(30, 2);
        let a = apply_noise(&corpus, 0.5, 4).unwrap();
        let b = apply_noise(&corpus, 0.5, 4).unwrap();
        assert_eq!(a.0.examples(), b.0.examples());
        assert_eq!(a.1, b.1);
        assert_eq!(a.1.len(), 15);
    }
}
