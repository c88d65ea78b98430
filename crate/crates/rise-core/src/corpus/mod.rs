//! Sentence-pair corpora: ingestion, validation, tokenization, and derived
//! detection sets.
//!
//! A corpus is an ordered list of (human sentence, machine sentence,
//! similarity label) triples read from a JSON Lines file, one object per
//! line:
//!
//! ```text
//! {"id":"p00001","human":"...","machine":"...","label":0.5,"split":"train"}
//! ```
//!
//! File order is preserved exactly. Labels live in `[0, 1]`; corpora tagged
//! as generated restrict them to `{0, 0.5, 1}`.

mod corrupt;
pub mod synth;

pub use corrupt::{corrupt, CorruptMode};

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{ensure, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which portion of the corpus an example belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// One (human, machine, label) training or evaluation triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedExample {
    pub id: String,
    #[serde(rename = "human")]
    pub human_text: String,
    #[serde(rename = "machine")]
    pub machine_text: String,
    pub label: f64,
    pub split: Split,
}

/// Whether a sentence came from the human or the machine side of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Human,
    Machine,
}

/// A single sentence tagged with its origin, the unit the detection
/// classifier trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub text: String,
    pub origin: Origin,
}

/// An ordered collection of paired examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub generated_flag: bool,
    examples: Vec<PairedExample>,
}

impl Corpus {
    /// Build a corpus from examples, checking every invariant: unique ids,
    /// labels in range (restricted to {0, 0.5, 1} when `generated`), and
    /// non-empty texts.
    pub fn from_examples(
        name: impl Into<String>,
        generated: bool,
        examples: Vec<PairedExample>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for ex in &examples {
            validate_example(ex, generated)?;
            ensure!(seen.insert(ex.id.clone()), "duplicate id: {}", ex.id);
        }
        Ok(Self {
            name: name.into(),
            generated_flag: generated,
            examples,
        })
    }

    pub fn examples(&self) -> &[PairedExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Examples belonging to one split, in corpus order.
    pub fn examples_in(&self, split: Split) -> Vec<&PairedExample> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }

    /// (train, dev, test) example counts.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let count = |s| self.examples.iter().filter(|e| e.split == s).count();
        (
            count(Split::Train),
            count(Split::Dev),
            count(Split::Test),
        )
    }

    /// Tag the corpus as machine-generated, which tightens the label
    /// invariant to the similarity-level set {0, 0.5, 1}.
    pub fn mark_generated(&mut self) -> Result<()> {
        for ex in &self.examples {
            ensure!(
                is_generated_label(ex.label),
                "example {}: label {} not in {{0, 0.5, 1}}",
                ex.id,
                ex.label
            );
        }
        self.generated_flag = true;
        Ok(())
    }
}

fn is_generated_label(label: f64) -> bool {
    label == 0.0 || label == 0.5 || label == 1.0
}

fn validate_example(ex: &PairedExample, generated: bool) -> Result<()> {
    ensure!(
        ex.label >= 0.0 && ex.label <= 1.0,
        "example {}: label out of range: {}",
        ex.id,
        ex.label
    );
    if generated {
        ensure!(
            is_generated_label(ex.label),
            "example {}: label {} not in {{0, 0.5, 1}}",
            ex.id,
            ex.label
        );
    }
    ensure!(
        !ex.human_text.trim().is_empty(),
        "example {}: empty human text",
        ex.id
    );
    ensure!(
        !ex.machine_text.trim().is_empty(),
        "example {}: empty machine text",
        ex.id
    );
    Ok(())
}

/// Lowercase a sentence and split it into tokens.
///
/// Tokens are split on Unicode whitespace; leading and trailing
/// non-alphanumeric characters are stripped from each token while internal
/// apostrophes and hyphens survive; empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.to_lowercase()
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_string()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Load a pair file (JSON Lines, UTF-8) into a corpus.
///
/// Fails on the first malformed line, citing the 1-based line number and the
/// offending field, on duplicate ids, and on labels outside `[0, 1]`.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file =
        File::open(path).with_context(|| format!("cannot open pair file {}", path.display()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());

    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.with_context(|| format!("line {lineno}: read error"))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: PairedExample = serde_json::from_str(&line)
            .map_err(|e| anyhow::anyhow!("line {lineno}: {e}"))?;
        validate_example(&ex, false).map_err(|e| anyhow::anyhow!("line {lineno}: {e}"))?;
        ensure!(
            seen.insert(ex.id.clone()),
            "line {lineno}: duplicate id: {}",
            ex.id
        );
        examples.push(ex);
    }
    Ok(Corpus {
        name,
        generated_flag: false,
        examples,
    })
}

/// Write a corpus back out as a pair file, one JSON object per line, in
/// corpus order. Output bytes are a pure function of the corpus contents.
pub fn save_pairs(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file =
        File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for ex in &corpus.examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Load a detection-set file (JSON Lines with `text` and `origin` fields).
pub fn load_sdi_file(path: impl AsRef<Path>) -> Result<Vec<LabeledSentence>> {
    let path = path.as_ref();
    let file =
        File::open(path).with_context(|| format!("cannot open sdi file {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.with_context(|| format!("line {lineno}: read error"))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: LabeledSentence = serde_json::from_str(&line)
            .map_err(|e| anyhow::anyhow!("line {lineno}: {e}"))?;
        ensure!(!s.text.trim().is_empty(), "line {lineno}: empty text");
        out.push(s);
    }
    Ok(out)
}

/// Write a detection set as JSON Lines, in order.
pub fn save_sdi_file(data: &[LabeledSentence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file =
        File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for s in data {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Derive a balanced detection training set from a corpus: every machine
/// sentence plus an equal number of human sentences, shuffled by `seed`.
pub fn derive_sdi_dataset(corpus: &Corpus, seed: u64) -> Result<Vec<LabeledSentence>> {
    ensure!(!corpus.is_empty(), "cannot derive sdi dataset: corpus is empty");
    let machines: Vec<String> = corpus
        .examples
        .iter()
        .map(|e| e.machine_text.clone())
        .collect();
    let humans: Vec<String> = corpus
        .examples
        .iter()
        .map(|e| e.human_text.clone())
        .collect();
    Ok(balance_classes(humans, machines, seed))
}

/// Pair every machine sentence with an equal count of human sentences.
///
/// If the human side is more numerous it is subsampled uniformly without
/// replacement; the combined set is then shuffled. Both draws come from one
/// ChaCha stream seeded by `seed`, so the output is a pure function of
/// (inputs, seed).
pub fn balance_classes(
    humans: Vec<String>,
    machines: Vec<String>,
    seed: u64,
) -> Vec<LabeledSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let humans = if humans.len() > machines.len() {
        let mut picked = rand::seq::index::sample(&mut rng, humans.len(), machines.len())
            .into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| humans[i].clone()).collect()
    } else {
        humans
    };
    let mut out: Vec<LabeledSentence> = machines
        .into_iter()
        .map(|text| LabeledSentence {
            text,
            origin: Origin::Machine,
        })
        .chain(humans.into_iter().map(|text| LabeledSentence {
            text,
            origin: Origin::Human,
        }))
        .collect();
    out.shuffle(&mut rng);
    out
}
