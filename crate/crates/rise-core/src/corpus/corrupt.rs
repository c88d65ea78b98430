//! Deterministic toy corruption generator.
//!
//! Stands in for a text-generation model at desk scale: each mode edits a
//! sentence at the word level to produce controllable unrealistic artifacts
//! (repetition, truncation, scrambled order) with zero model cost. Output is
//! a pure function of `(text, mode, seed)`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use anyhow::{bail, ensure, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Edit applied by [`corrupt`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptMode {
    /// Repeat a clause (half or all of the sentence) in place.
    RepeatClause,
    /// Keep only a prefix or suffix of the sentence.
    Truncate,
    /// Permute word order.
    ShuffleWords,
    /// Repeat a short n-gram in place.
    DuplicateNgram,
}

impl CorruptMode {
    pub const ALL: [CorruptMode; 4] = [
        CorruptMode::RepeatClause,
        CorruptMode::Truncate,
        CorruptMode::ShuffleWords,
        CorruptMode::DuplicateNgram,
    ];
}

impl fmt::Display for CorruptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CorruptMode::RepeatClause => "repeat_clause",
            CorruptMode::Truncate => "truncate",
            CorruptMode::ShuffleWords => "shuffle_words",
            CorruptMode::DuplicateNgram => "duplicate_ngram",
        };
        write!(f, "{name}")
    }
}

impl FromStr for CorruptMode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "repeat_clause" => Ok(CorruptMode::RepeatClause),
            "truncate" => Ok(CorruptMode::Truncate),
            "shuffle_words" => Ok(CorruptMode::ShuffleWords),
            "duplicate_ngram" => Ok(CorruptMode::DuplicateNgram),
            other => bail!("unknown corrupt mode: {other}"),
        }
    }
}

/// Produce a corrupted copy of `text`.
///
/// Requires at least two whitespace-separated words. The repetition modes
/// (`repeat_clause`, `duplicate_ngram`) insert a contiguous block of words
/// next to itself enough times that the pooled distinct-N ratio of the
/// output can never exceed the input's, for N in 1..=3.
pub fn corrupt(text: &str, mode: CorruptMode, seed: u64) -> Result<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    ensure!(
        words.len() >= 2,
        "corrupt requires at least 2 tokens, got {}",
        words.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = words.len();

    let out: Vec<&str> = match mode {
        CorruptMode::Truncate => {
            let keep = rng.gen_range(1..len);
            if rng.gen_bool(0.5) {
                words[..keep].to_vec()
            } else {
                words[len - keep..].to_vec()
            }
        }
        CorruptMode::ShuffleWords => {
            let mut shuffled = words.clone();
            shuffled.shuffle(&mut rng);
            shuffled
        }
        CorruptMode::RepeatClause => {
            // Clause = leading or trailing half (at least two words).
            let clause_len = (len / 2).max(2).min(len);
            let start = if rng.gen_bool(0.5) { 0 } else { len - clause_len };
            repeat_block(&words, start, clause_len, 2)
        }
        CorruptMode::DuplicateNgram => {
            let n = if len >= 3 && rng.gen_bool(0.5) { 3 } else { 2 };
            let start = rng.gen_range(0..=len - n);
            repeat_block(&words, start, n, 3)
        }
    };
    Ok(out.join(" "))
}

/// Insert `k` extra copies of `words[start..start+n]` immediately after the
/// block, with `k` at least `min_repeats` and at least large enough that
/// distinct-N cannot rise.
fn repeat_block<'a>(words: &[&'a str], start: usize, n: usize, min_repeats: usize) -> Vec<&'a str> {
    let k = required_repeats(words, n).max(min_repeats);
    let mut out = Vec::with_capacity(words.len() + k * n);
    out.extend_from_slice(&words[..start + n]);
    for _ in 0..k {
        out.extend_from_slice(&words[start..start + n]);
    }
    out.extend_from_slice(&words[start + n..]);
    out
}

/// Smallest `k` such that inserting `k` adjacent copies of any contiguous
/// block of `n >= 2` words keeps the pooled distinct-N ratio from rising.
///
/// With block length `n >= 2`, a window of size N <= 3 can cross at most one
/// copy junction, so the output has at most `u + (N-1)` distinct N-grams and
/// exactly `t + k*n` N-gram occurrences, where (u, t) count the input. The
/// ratio is non-increasing whenever `t*(N-1) <= u*k*n`.
fn required_repeats(words: &[&str], n: usize) -> usize {
    debug_assert!(n >= 2);
    let mut k = 1usize;
    for order in 2..=3usize {
        if words.len() < order {
            continue;
        }
        let total = words.len() - order + 1;
        let unique = words
            .windows(order)
            .collect::<HashSet<_>>()
            .len();
        let need = (total * (order - 1) + unique * n - 1) / (unique * n); // ceil
        k = k.max(need);
    }
    k
}
