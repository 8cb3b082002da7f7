//! Mean average precision at k and run-comparison reports.
//!
//! AP@k normalizes by `min(|relevant|, k)`, the competition convention;
//! with 1–6 gold labels and k = 6 that equals `|relevant|` on valid data.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::hash::Hash;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// How many categories a submitted ranking must contain.
pub const PREDICTION_LEN: usize = 6;

/// One submitted ranking: exactly six distinct category names, best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub idx: u64,
    pub categories: Vec<String>,
}

impl RankedPrediction {
    pub fn new(idx: u64, categories: Vec<String>) -> Result<Self> {
        let p = RankedPrediction { idx, categories };
        p.validate()?;
        Ok(p)
    }

    /// Exactly six entries, no duplicates. Short rankings are rejected
    /// rather than padded so upstream bugs surface here.
    pub fn validate(&self) -> Result<()> {
        if self.categories.len() != PREDICTION_LEN {
            return Err(Error::Predictions(format!(
                "idx {}: expected {} categories, found {}",
                self.idx,
                PREDICTION_LEN,
                self.categories.len()
            )));
        }
        let distinct: HashSet<&String> = self.categories.iter().collect();
        if distinct.len() != self.categories.len() {
            return Err(Error::Predictions(format!(
                "idx {}: ranked categories contain duplicates",
                self.idx
            )));
        }
        Ok(())
    }
}

/// Average precision truncated at rank `k`.
///
/// `relevant` is treated as a set (duplicates are ignored). Returns
/// `(1/min(|relevant|, k)) × Σ_{i≤k} rel(i) × (#relevant in top i)/i`.
pub fn ap_at_k<T: Eq + Hash>(ranked: &[T], relevant: &[T], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be a positive integer"));
    }
    let relevant: HashSet<&T> = relevant.iter().collect();
    if relevant.is_empty() {
        return Err(Error::invalid("relevant set must be non-empty"));
    }
    let mut seen = HashSet::with_capacity(ranked.len());
    for item in ranked {
        if !seen.insert(item) {
            return Err(Error::invalid("ranked list contains duplicate entries"));
        }
    }
    let mut hits = 0usize;
    let mut total = 0.0f64;
    for (i, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            total += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(total / relevant.len().min(k) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleAp {
    pub idx: u64,
    pub ap: f64,
}

/// Evaluation summary: the mean AP@k plus the per-sample values behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map_at_6: f64,
    pub sample_count: usize,
    pub k: usize,
    /// Sorted by sample idx.
    pub per_sample: Vec<SampleAp>,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        format!(
            "MAP@{} = {:.6} over {} samples",
            self.k, self.map_at_6, self.sample_count
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary())
    }
}

fn join_ids(ids: impl IntoIterator<Item = u64>) -> String {
    ids.into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Mean AP@k over a labeled gold dataset, keyed by sample idx (prediction
/// order is irrelevant).
pub fn map_at_k(predictions: &[RankedPrediction], gold: &Dataset, k: usize) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::invalid("k must be a positive integer"));
    }
    if !gold.labeled() {
        return Err(Error::Unlabeled);
    }
    if gold.is_empty() {
        return Err(Error::invalid("gold dataset is empty"));
    }
    let mut by_idx: BTreeMap<u64, &RankedPrediction> = BTreeMap::new();
    let mut duplicates = BTreeSet::new();
    for p in predictions {
        if by_idx.insert(p.idx, p).is_some() {
            duplicates.insert(p.idx);
        }
    }
    if !duplicates.is_empty() {
        return Err(Error::Predictions(format!(
            "duplicate prediction idx: {}",
            join_ids(duplicates)
        )));
    }
    let gold_by_idx: BTreeMap<u64, &crate::corpus::Sample> =
        gold.iter().map(|s| (s.idx, s)).collect();
    let gold_idx: BTreeSet<u64> = gold_by_idx.keys().copied().collect();
    let pred_idx: BTreeSet<u64> = by_idx.keys().copied().collect();
    let missing: Vec<u64> = gold_idx.difference(&pred_idx).copied().collect();
    let extra: Vec<u64> = pred_idx.difference(&gold_idx).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!("missing idx: {}", join_ids(missing)));
        }
        if !extra.is_empty() {
            parts.push(format!("extra idx: {}", join_ids(extra)));
        }
        return Err(Error::Predictions(parts.join("; ")));
    }

    let mut per_sample = Vec::with_capacity(gold.len());
    for (idx, prediction) in &by_idx {
        prediction.validate()?;
        let sample = gold_by_idx[idx];
        let relevant = sample.categories.as_deref().ok_or(Error::Unlabeled)?;
        let ap = ap_at_k(&prediction.categories, relevant, k)?;
        per_sample.push(SampleAp { idx: *idx, ap });
    }
    let map = per_sample.iter().map(|s| s.ap).sum::<f64>() / per_sample.len() as f64;
    Ok(EvalReport {
        map_at_6: map,
        sample_count: per_sample.len(),
        k,
        per_sample,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub map_at_6: f64,
    /// `map_at_6 − best map_at_6`; zero for the leader.
    pub delta_vs_best: f64,
}

/// Order named reports best-first with deltas against the leader. Ties
/// keep ascending name order.
pub fn compare_runs(reports: &[(String, EvalReport)]) -> Result<Vec<ComparisonRow>> {
    if reports.is_empty() {
        return Err(Error::invalid("compare_runs requires at least one report"));
    }
    let mut rows: Vec<(String, f64)> = reports
        .iter()
        .map(|(name, r)| (name.clone(), r.map_at_6))
        .collect();
    rows.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let best = rows[0].1;
    Ok(rows
        .into_iter()
        .map(|(name, map)| ComparisonRow {
            name,
            map_at_6: map,
            delta_vs_best: map - best,
        })
        .collect())
}

pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(3)
        .max("run".len());
    let mut out = format!("{:width$}  {:>8}  {:>8}\n", "run", "MAP@6", "delta");
    for row in rows {
        out.push_str(&format!(
            "{:width$}  {:>8.4}  {:>+8.4}\n",
            row.name, row.map_at_6, row.delta_vs_best
        ));
    }
    out
}

/// Read line-JSON predictions: `{"idx": …, "categories": [6 names]}`.
pub fn read_predictions(reader: impl Read) -> Result<Vec<RankedPrediction>> {
    let mut predictions = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: RankedPrediction = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        p.validate()?;
        predictions.push(p);
    }
    Ok(predictions)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<RankedPrediction>> {
    read_predictions(std::fs::File::open(path)?)
}

pub fn write_predictions(predictions: &[RankedPrediction], mut writer: impl Write) -> Result<()> {
    for p in predictions {
        p.validate()?;
        serde_json::to_writer(&mut writer, p).map_err(|e| Error::Predictions(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_predictions(predictions: &[RankedPrediction], path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_predictions(predictions, &mut file)?;
    file.flush()?;
    Ok(())
}
