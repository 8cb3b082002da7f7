//! Dataset ingestion, validation, label vocabulary and train/validation
//! splitting.
//!
//! Datasets are UTF-8 line-delimited JSON, one record per line:
//! `{"idx": 32, "text": "...", "reply": "...", "mp4": "...", "categories": ["awww", ...]}`
//! where `mp4` and `categories` are optional and unknown extra fields are
//! ignored. A labeled sample carries 1 to 6 distinct category names.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CATEGORIES: usize = 6;

/// One two-turn thread: the original tweet text and its reply, with the
/// gold category set when labeled. The `mp4` filename is carried through
/// for schema fidelity but never read downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub idx: u64,
    pub text: String,
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mp4: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

impl Sample {
    pub fn is_labeled(&self) -> bool {
        self.categories.is_some()
    }
}

/// Ordered collection of samples; iteration follows file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    samples: Vec<Sample>,
    labeled: bool,
}

impl Dataset {
    /// Build a dataset from samples, enforcing per-sample label validity and
    /// idx uniqueness.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for (i, sample) in samples.iter().enumerate() {
            validate_categories(sample, i + 1)?;
            if !seen.insert(sample.idx) {
                return Err(Error::DuplicateIdx { idx: sample.idx });
            }
        }
        let labeled = samples.iter().all(Sample::is_labeled);
        Ok(Dataset { samples, labeled })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True iff every sample has categories.
    pub fn labeled(&self) -> bool {
        self.labeled
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;
    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

fn validate_categories(sample: &Sample, line: usize) -> Result<()> {
    let Some(cats) = &sample.categories else {
        return Ok(());
    };
    if cats.is_empty() || cats.len() > MAX_CATEGORIES {
        return Err(Error::InvalidLabelSet {
            line,
            idx: sample.idx,
            message: format!(
                "category count {} outside 1..={MAX_CATEGORIES}",
                cats.len()
            ),
        });
    }
    let mut seen = HashSet::with_capacity(cats.len());
    for c in cats {
        if !seen.insert(c.as_str()) {
            return Err(Error::InvalidLabelSet {
                line,
                idx: sample.idx,
                message: format!("duplicate category {c:?}"),
            });
        }
    }
    Ok(())
}

/// Load a line-delimited JSON dataset. With `require_labels`, every sample
/// must carry a category set.
pub fn load_samples(path: impl AsRef<Path>, require_labels: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_samples(BufReader::new(file), require_labels)
}

/// Same as [`load_samples`] but from any reader.
pub fn read_samples(reader: impl Read, require_labels: bool) -> Result<Dataset> {
    let reader = BufReader::new(reader);
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => Error::Schema {
                line: line_no,
                message: e.to_string(),
            },
            _ => Error::MalformedLine {
                line: line_no,
                message: e.to_string(),
            },
        })?;
        validate_categories(&sample, line_no)?;
        if require_labels && !sample.is_labeled() {
            return Err(Error::MissingLabels {
                line: line_no,
                idx: sample.idx,
            });
        }
        if !seen.insert(sample.idx) {
            return Err(Error::DuplicateIdx { idx: sample.idx });
        }
        samples.push(sample);
    }
    let labeled = samples.iter().all(Sample::is_labeled);
    Ok(Dataset { samples, labeled })
}

/// Write a dataset back to line-delimited JSON in iteration order.
pub fn write_samples(dataset: &Dataset, mut writer: impl Write) -> Result<()> {
    for sample in dataset {
        serde_json::to_writer(&mut writer, sample)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_samples(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    write_samples(dataset, &mut file)?;
    file.flush()?;
    Ok(())
}

/// Fixed category list with deterministic id assignment: names are sorted
/// ascending by byte order and ids assigned contiguously from 0 in that
/// order, so the vocabulary is identical regardless of row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    names: Vec<String>,
}

impl LabelVocab {
    /// Build from an explicit name list, which must be byte-sorted and free
    /// of duplicates.
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("label vocabulary is empty"));
        }
        for pair in names.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::invalid(format!(
                    "label names not strictly byte-sorted: {:?} then {:?}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(LabelVocab { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    /// Gold category ids of a labeled sample, ascending.
    pub fn gold_ids(&self, sample: &Sample) -> Result<Vec<usize>> {
        let cats = sample
            .categories
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("sample {} has no categories", sample.idx)))?;
        let mut ids = Vec::with_capacity(cats.len());
        for c in cats {
            ids.push(
                self.id(c)
                    .ok_or_else(|| Error::UnknownCategory(c.clone()))?,
            );
        }
        ids.sort_unstable();
        Ok(ids)
    }
}

/// Collect every distinct category name of a labeled dataset into a
/// [`LabelVocab`].
pub fn build_label_vocab(dataset: &Dataset) -> Result<LabelVocab> {
    if !dataset.labeled() {
        return Err(Error::Unlabeled);
    }
    let mut names: Vec<String> = dataset
        .iter()
        .flat_map(|s| s.categories.iter().flatten())
        .cloned()
        .collect();
    names.sort_unstable();
    names.dedup();
    LabelVocab::from_names(names)
}

/// Train/validation split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            seed: 0,
        }
    }
}

/// Seeded Fisher-Yates shuffle of row indices, then the first
/// `floor(train_fraction * N)` rows form the training set and the rest the
/// validation set. Disjoint and exhaustive by construction.
pub fn split_dataset(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction {} outside (0,1)",
            spec.train_fraction
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "dataset too small to split ({n} samples)"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);
    let train_size = (spec.train_fraction * n as f64).floor() as usize;
    let take = |ix: &[usize]| -> Dataset {
        let samples: Vec<Sample> = ix.iter().map(|&i| dataset.samples[i].clone()).collect();
        let labeled = samples.iter().all(Sample::is_labeled);
        Dataset { samples, labeled }
    };
    Ok((take(&indices[..train_size]), take(&indices[train_size..])))
}

/// Multi-hot relevance vector over the vocabulary: entry `id` is 1 iff the
/// sample carries that category.
pub fn encode_targets(sample: &Sample, vocab: &LabelVocab) -> Result<Vec<u8>> {
    let mut targets = vec![0u8; vocab.len()];
    for id in vocab.gold_ids(sample)? {
        targets[id] = 1;
    }
    Ok(targets)
}
