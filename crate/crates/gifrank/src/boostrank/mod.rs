//! Gradient-boosted pairwise reranker.
//!
//! Scores candidate rows of a [`FeatureMatrix`] with an ensemble of
//! histogram regression trees fit to pairwise ranking gradients: within
//! each group, every (positive, negative) row pair contributes a
//! logistic preference loss. Validation MAP@6 drives early stopping and
//! model selection, and a seeded random search tunes the tree
//! hyperparameters.

pub mod tree;

use std::io::{Read, Write};
use std::ops::Range;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{self, ArtifactKind};
use crate::error::{Error, Result};
use crate::featbank::{FeatureMatrix, FeatureSchema};
use crate::metrics;
use crate::num::{rank_top_k, Scalar};
use crate::util::derive_seed;

pub use tree::{fit_tree, BinnedMatrix, Binner, Node, Tree, GAIN_EPS};

pub const GBDT_FORMAT_VERSION: u32 = 1;

/// How much each (positive, negative) pair weighs in the gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum PairwiseObjective {
    /// Plain pairwise logistic loss; every pair weighs 1.
    #[default]
    Logistic,
    /// Pairs are weighted by |ΔAP@6| — how much average precision
    /// would change if the two rows swapped ranks. Pairs that cannot
    /// affect the top 6 get weight 0.
    LambdaMap,
}


/// Hyperparameters for the boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Maximum boosting rounds; zero trains an empty ensemble that
    /// predicts the base score.
    pub num_trees: usize,
    pub shrinkage: f64,
    pub histogram_bins: usize,
    pub early_stopping_rounds: usize,
    pub objective: PairwiseObjective,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 6,
            min_samples_leaf: 20,
            num_trees: 200,
            shrinkage: 0.1,
            histogram_bins: 64,
            early_stopping_rounds: 30,
            objective: PairwiseObjective::Logistic,
        }
    }
}

impl TreeParams {
    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::config(format!("{prefix}.max_depth"), "must be positive"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::config(
                format!("{prefix}.min_samples_leaf"),
                "must be positive",
            ));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage.is_finite()) {
            return Err(Error::config(
                format!("{prefix}.shrinkage"),
                "must be a finite positive real",
            ));
        }
        if self.histogram_bins < 2 {
            return Err(Error::config(
                format!("{prefix}.histogram_bins"),
                "must be at least 2",
            ));
        }
        if self.histogram_bins > u16::MAX as usize + 1 {
            return Err(Error::config(
                format!("{prefix}.histogram_bins"),
                "must fit in 16 bits",
            ));
        }
        if self.early_stopping_rounds == 0 {
            return Err(Error::config(
                format!("{prefix}.early_stopping_rounds"),
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// AP@6 of a within-group ranking over binary relevance, matching
/// [`metrics::ap_at_k`] with k = 6.
fn ap_at_6_binary(order: &[usize], relevance: &[u8]) -> f64 {
    let positives = relevance.iter().filter(|&&r| r > 0).count();
    if positives == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (i, &row) in order.iter().take(6).enumerate() {
        if relevance[row] > 0 {
            hits += 1;
            total += hits as f64 / (i + 1) as f64;
        }
    }
    total / positives.min(6) as f64
}

/// Accumulate pairwise gradients/hessians for one group into full-length
/// buffers; returns the summed logistic pair loss and the pair count.
fn accumulate_group<S: Scalar>(
    scores: &[S],
    relevance: &[u8],
    group: Range<usize>,
    objective: PairwiseObjective,
    gradients: &mut [S],
    hessians: &mut [S],
) -> Result<(f64, usize)> {
    let rel = &relevance[group.clone()];
    // Ranks only matter for ΔAP weights; compute them lazily.
    let mut order: Vec<usize> = Vec::new();
    let mut position: Vec<usize> = Vec::new();
    if objective == PairwiseObjective::LambdaMap {
        order = rank_top_k(&scores[group.clone()], group.len());
        position = vec![0; group.len()];
        for (rank, &row) in order.iter().enumerate() {
            position[row] = rank;
        }
    }
    let base_ap = if objective == PairwiseObjective::LambdaMap {
        ap_at_6_binary(&order, rel)
    } else {
        0.0
    };
    let mut loss = 0.0;
    let mut pairs = 0usize;
    for a in 0..group.len() {
        for b in (a + 1)..group.len() {
            if rel[a] == rel[b] {
                continue;
            }
            let (i, j) = if rel[a] > rel[b] { (a, b) } else { (b, a) };
            let diff = scores[group.start + i] - scores[group.start + j];
            let rho = (-diff).sigmoid(); // = 1/(1 + e^{s_i - s_j})
            let lambda = -rho;
            let weight = match objective {
                PairwiseObjective::Logistic => S::one(),
                PairwiseObjective::LambdaMap => {
                    let (pi, pj) = (position[i], position[j]);
                    if pi >= 6 && pj >= 6 {
                        continue; // swap cannot touch the top 6
                    }
                    order.swap(pi, pj);
                    let swapped_ap = ap_at_6_binary(&order, rel);
                    order.swap(pi, pj);
                    S::from_f64((base_ap - swapped_ap).abs())
                }
            };
            let curvature = weight * rho * (S::one() - rho);
            gradients[group.start + i] += weight * lambda;
            gradients[group.start + j] -= weight * lambda;
            hessians[group.start + i] += curvature;
            hessians[group.start + j] += curvature;
            loss += Scalar::to_f64((-diff).ln_1p_exp());
            pairs += 1;
        }
    }
    Ok((loss, pairs))
}

/// Pairwise logistic ranking gradients for one group of rows.
///
/// For every pair (i positive, j negative) inside `group`,
/// λ = −1/(1 + e^{s_i − s_j}) is added to row i's gradient and
/// subtracted from row j's, and ρ(1−ρ) with ρ = −λ is added to both
/// hessians. Rows outside the group, and rows in no positive/negative
/// pair, stay at zero. The returned vectors have the same length as
/// `scores`.
pub fn pairwise_gradients<S: Scalar>(
    scores: &[S],
    relevance: &[u8],
    group: Range<usize>,
) -> Result<(Vec<S>, Vec<S>)> {
    if scores.len() != relevance.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: relevance.len(),
        });
    }
    if group.end > scores.len() || group.start > group.end {
        return Err(Error::invalid(format!(
            "group {}..{} is out of bounds for {} rows",
            group.start,
            group.end,
            scores.len()
        )));
    }
    let mut gradients = vec![S::zero(); scores.len()];
    let mut hessians = vec![S::zero(); scores.len()];
    accumulate_group(
        scores,
        relevance,
        group,
        PairwiseObjective::Logistic,
        &mut gradients,
        &mut hessians,
    )?;
    Ok((gradients, hessians))
}

/// Mean AP@6 over the groups of a scored matrix. Groups without a
/// positive row are skipped; at least one group must have one.
pub fn matrix_map_at_6<S: Scalar>(matrix: &FeatureMatrix<S>, scores: &[S]) -> Result<f64> {
    if scores.len() != matrix.n_rows() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: matrix.n_rows(),
        });
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for g in 0..matrix.n_groups() {
        let range = matrix.group(g);
        let relevant: Vec<usize> = range
            .clone()
            .filter(|&r| matrix.relevance(r) > 0)
            .map(|r| matrix.candidate(r))
            .collect();
        if relevant.is_empty() {
            continue;
        }
        let order = rank_top_k(&scores[range.clone()], range.len());
        let ranked: Vec<usize> = order
            .iter()
            .map(|&offset| matrix.candidate(range.start + offset))
            .collect();
        total += metrics::ap_at_k(&ranked, &relevant, 6)?;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::invalid(
            "cannot compute MAP@6: no group has a positively labeled candidate",
        ));
    }
    Ok(total / counted as f64)
}

/// Boosted ensemble of regression trees over a fixed feature schema.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel<S: Scalar> {
    trees: Vec<Tree<S>>,
    base_score: S,
    shrinkage: S,
    schema_hash: u64,
}

impl<S: Scalar> GbdtModel<S> {
    pub fn from_parts(
        trees: Vec<Tree<S>>,
        base_score: S,
        shrinkage: S,
        schema_hash: u64,
    ) -> Result<Self> {
        if !base_score.is_finite() {
            return Err(Error::NonFinite("reranker base score".into()));
        }
        if !shrinkage.is_finite() {
            return Err(Error::NonFinite("reranker shrinkage".into()));
        }
        Ok(GbdtModel {
            trees,
            base_score,
            shrinkage,
            schema_hash,
        })
    }

    pub fn trees(&self) -> &[Tree<S>] {
        &self.trees
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn base_score(&self) -> S {
        self.base_score
    }

    pub fn shrinkage(&self) -> S {
        self.shrinkage
    }

    pub fn schema_hash(&self) -> u64 {
        self.schema_hash
    }

    pub fn predict_row(&self, row: &[S]) -> S {
        let mut score = self.base_score;
        for tree in &self.trees {
            score += self.shrinkage * tree.predict_row(row);
        }
        score
    }
}

/// Per-round fitting statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundStats {
    pub round: usize,
    /// Mean logistic pair loss on the training matrix before this
    /// round's tree was added.
    pub train_loss: f64,
    /// Validation MAP@6 after this round's tree was added.
    pub val_map: f64,
    /// Total gain of the splits chosen for this round's tree.
    pub split_gain: f64,
}

/// Full fitting trace: one entry per boosting round plus the selection
/// outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoostHistory {
    /// Validation MAP@6 of the empty ensemble (all scores equal).
    pub baseline_val_map: f64,
    pub rounds: Vec<RoundStats>,
    /// Round whose ensemble prefix was kept; `None` keeps the empty
    /// ensemble.
    pub best_round: Option<usize>,
    pub best_val_map: f64,
}

/// Fit a boosted ranking ensemble on `train`, selecting the round with
/// the best validation MAP@6.
///
/// Candidates for selection are the ensemble prefixes after 0, 1, …
/// rounds — the empty ensemble (the baseline) included — and only a
/// strictly better MAP@6 moves the choice, so ties keep the earliest
/// and smallest model. Fitting stops once `early_stopping_rounds`
/// rounds pass without improvement. `seed` is accepted for interface
/// stability; the current fitting procedure is fully deterministic and
/// does not consume randomness.
pub fn fit_gbdt<S: Scalar>(
    train: &FeatureMatrix<S>,
    val: &FeatureMatrix<S>,
    params: &TreeParams,
    seed: u64,
) -> Result<(GbdtModel<S>, BoostHistory)> {
    let _ = seed;
    params.validate_at("reranker")?;
    if train.n_rows() == 0 {
        return Err(Error::invalid("training matrix is empty"));
    }
    if val.n_rows() == 0 {
        return Err(Error::invalid("validation matrix is empty"));
    }
    if train.schema().hash() != val.schema().hash() {
        return Err(Error::SchemaHashMismatch {
            model: train.schema().hash(),
            input: val.schema().hash(),
        });
    }
    let binned = BinnedMatrix::new(Binner::fit(train, params.histogram_bins)?, train)?;
    let shrinkage = S::from_f64(params.shrinkage);
    let mut train_scores = vec![S::zero(); train.n_rows()];
    let mut val_scores = vec![S::zero(); val.n_rows()];
    let baseline_val_map = matrix_map_at_6(val, &val_scores)?;
    let mut trees: Vec<Tree<S>> = Vec::new();
    let mut rounds: Vec<RoundStats> = Vec::new();
    let mut best_round: Option<usize> = None;
    let mut best_val_map = baseline_val_map;
    for round in 0..params.num_trees {
        let mut gradients = vec![S::zero(); train.n_rows()];
        let mut hessians = vec![S::zero(); train.n_rows()];
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for g in 0..train.n_groups() {
            let (group_loss, group_pairs) = accumulate_group(
                &train_scores,
                train.relevance_slice(),
                train.group(g),
                params.objective,
                &mut gradients,
                &mut hessians,
            )?;
            loss += group_loss;
            pairs += group_pairs;
        }
        let train_loss = if pairs > 0 { loss / pairs as f64 } else { 0.0 };
        let tree = fit_tree(&binned, &gradients, &hessians, params)?;
        for (r, score) in train_scores.iter_mut().enumerate() {
            *score += shrinkage * tree.predict_row(train.row(r));
        }
        for (r, score) in val_scores.iter_mut().enumerate() {
            *score += shrinkage * tree.predict_row(val.row(r));
        }
        let val_map = matrix_map_at_6(val, &val_scores)?;
        rounds.push(RoundStats {
            round,
            train_loss,
            val_map,
            split_gain: Scalar::to_f64(tree.total_gain()),
        });
        trees.push(tree);
        if val_map > best_val_map {
            best_val_map = val_map;
            best_round = Some(round);
        }
        let rounds_since_best = round as i64 - best_round.map_or(-1, |b| b as i64);
        if rounds_since_best >= params.early_stopping_rounds as i64 {
            break;
        }
    }
    trees.truncate(best_round.map_or(0, |b| b + 1));
    let model = GbdtModel::from_parts(trees, S::zero(), shrinkage, train.schema().hash())?;
    let history = BoostHistory {
        baseline_val_map,
        rounds,
        best_round,
        best_val_map,
    };
    Ok((model, history))
}

/// Score every row of `matrix` with the ensemble.
pub fn predict_scores<S: Scalar>(
    model: &GbdtModel<S>,
    matrix: &FeatureMatrix<S>,
) -> Result<Vec<S>> {
    if model.schema_hash() != matrix.schema().hash() {
        return Err(Error::SchemaHashMismatch {
            model: model.schema_hash(),
            input: matrix.schema().hash(),
        });
    }
    Ok((0..matrix.n_rows())
        .map(|r| model.predict_row(matrix.row(r)))
        .collect())
}

/// Rank one group's candidates and return the top 6 category ids,
/// highest score first, ties broken by ascending id.
///
/// The group must contain one row per category — exactly `label_count`
/// rows covering candidates `0..label_count`.
pub fn rank_candidates<S: Scalar>(
    model: &GbdtModel<S>,
    matrix: &FeatureMatrix<S>,
    group: usize,
    label_count: usize,
) -> Result<Vec<usize>> {
    if model.schema_hash() != matrix.schema().hash() {
        return Err(Error::SchemaHashMismatch {
            model: model.schema_hash(),
            input: matrix.schema().hash(),
        });
    }
    let range = matrix.group(group);
    if range.len() != label_count {
        return Err(Error::invalid(format!(
            "group {group} has {} rows, expected one per category ({label_count})",
            range.len()
        )));
    }
    // Candidates are strictly increasing within a group, so checking the
    // endpoints pins the whole set to 0..label_count.
    if label_count == 0
        || matrix.candidate(range.start) != 0
        || matrix.candidate(range.end - 1) != label_count - 1
    {
        return Err(Error::invalid(format!(
            "group {group} does not cover candidates 0..{label_count}"
        )));
    }
    let scores: Vec<S> = range.clone().map(|r| model.predict_row(matrix.row(r))).collect();
    Ok(rank_top_k(&scores, 6)
        .into_iter()
        .map(|offset| matrix.candidate(range.start + offset))
        .collect())
}

/// Search ranges for [`random_search`]. Shrinkage is drawn
/// log-uniformly; the integer ranges are uniform and inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoSpace {
    pub shrinkage: (f64, f64),
    pub max_depth: (usize, usize),
    pub num_trees: (usize, usize),
    pub min_samples_leaf: (usize, usize),
    pub budget: usize,
    pub seed: u64,
}

impl Default for HpoSpace {
    fn default() -> Self {
        HpoSpace {
            shrinkage: (0.01, 0.3),
            max_depth: (3, 8),
            num_trees: (50, 300),
            min_samples_leaf: (5, 50),
            budget: 50,
            seed: 42,
        }
    }
}

impl HpoSpace {
    pub fn validate_at(&self, prefix: &str) -> Result<()> {
        let (lo, hi) = self.shrinkage;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(
                format!("{prefix}.shrinkage"),
                "need 0 < low <= high, both finite",
            ));
        }
        for (field, (lo, hi)) in [
            ("max_depth", self.max_depth),
            ("num_trees", self.num_trees),
            ("min_samples_leaf", self.min_samples_leaf),
        ] {
            if lo == 0 || lo > hi {
                return Err(Error::config(
                    format!("{prefix}.{field}"),
                    "need 0 < low <= high",
                ));
            }
        }
        if self.budget == 0 {
            return Err(Error::config(format!("{prefix}.budget"), "must be positive"));
        }
        Ok(())
    }
}

/// Draw the parameters for one trial. Each trial has its own derived
/// seed, so changing the budget never changes earlier trials. Fields
/// outside the search space are copied from `base`.
pub fn sample_params(space: &HpoSpace, base: &TreeParams, trial: usize) -> TreeParams {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(space.seed, &format!("hpo-trial-{trial}")));
    let (lo, hi) = space.shrinkage;
    let u: f64 = rng.gen();
    let shrinkage = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
    let max_depth = rng.gen_range(space.max_depth.0..=space.max_depth.1);
    let num_trees = rng.gen_range(space.num_trees.0..=space.num_trees.1);
    let min_samples_leaf = rng.gen_range(space.min_samples_leaf.0..=space.min_samples_leaf.1);
    TreeParams {
        max_depth,
        min_samples_leaf,
        num_trees,
        shrinkage,
        ..base.clone()
    }
}

/// One evaluated hyperparameter draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial: usize,
    pub params: TreeParams,
    pub score: f64,
    pub seconds: f64,
}

/// Random search over `space`: evaluate `budget` seeded draws and
/// return the winner (highest score, earliest trial on ties) together
/// with the full trial log.
pub fn random_search(
    space: &HpoSpace,
    base: &TreeParams,
    mut objective: impl FnMut(&TreeParams) -> Result<f64>,
) -> Result<(TreeParams, Vec<Trial>)> {
    space.validate_at("hpo")?;
    let mut trials: Vec<Trial> = Vec::with_capacity(space.budget);
    let mut best: Option<usize> = None;
    for t in 0..space.budget {
        let params = sample_params(space, base, t);
        let start = Instant::now();
        let score = objective(&params)?;
        let seconds = start.elapsed().as_secs_f64();
        if !score.is_finite() {
            return Err(Error::NonFinite(format!("hpo trial {t} score")));
        }
        if best.is_none_or(|b| score > trials[b].score) {
            best = Some(t);
        }
        trials.push(Trial {
            trial: t,
            params,
            score,
            seconds,
        });
    }
    let best = best.expect("budget is validated positive");
    Ok((trials[best].params.clone(), trials))
}

/// Write one JSON object per line, one line per trial.
pub fn write_trial_log(mut w: impl Write, trials: &[Trial]) -> Result<()> {
    for trial in trials {
        let line = serde_json::to_string(trial)
            .map_err(|e| Error::invalid(format!("serializing hpo trial {}: {e}", trial.trial)))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Total split gain attributed to each feature, in schema order.
pub fn feature_importance<S: Scalar>(
    model: &GbdtModel<S>,
    schema: &FeatureSchema,
) -> Result<Vec<(String, S)>> {
    if model.schema_hash() != schema.hash() {
        return Err(Error::SchemaHashMismatch {
            model: model.schema_hash(),
            input: schema.hash(),
        });
    }
    let mut gains = vec![S::zero(); schema.names().len()];
    for tree in model.trees() {
        for node in tree.nodes() {
            if let Node::Split { feature, gain, .. } = node {
                if *feature >= gains.len() {
                    return Err(Error::invalid(format!(
                        "tree split on feature {feature}, but the schema has {} features",
                        gains.len()
                    )));
                }
                gains[*feature] += *gain;
            }
        }
    }
    Ok(schema.names().iter().cloned().zip(gains).collect())
}

pub fn save_gbdt<S: Scalar>(model: &GbdtModel<S>, mut w: impl Write, config_hash: u64) -> Result<()> {
    binio::write_header(&mut w, ArtifactKind::Gbdt, GBDT_FORMAT_VERSION, config_hash)?;
    binio::write_u64(&mut w, model.schema_hash)?;
    binio::write_f64(&mut w, Scalar::to_f64(model.base_score))?;
    binio::write_f64(&mut w, Scalar::to_f64(model.shrinkage))?;
    binio::write_usize(&mut w, model.trees.len())?;
    for tree in &model.trees {
        binio::write_usize(&mut w, tree.node_count())?;
        for node in tree.nodes() {
            match node {
                Node::Leaf { value } => {
                    binio::write_usize(&mut w, 0)?;
                    binio::write_f64(&mut w, Scalar::to_f64(*value))?;
                }
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    gain,
                    left,
                    right,
                } => {
                    binio::write_usize(&mut w, 1)?;
                    binio::write_usize(&mut w, *feature)?;
                    binio::write_f64(&mut w, Scalar::to_f64(*threshold))?;
                    binio::write_usize(&mut w, usize::from(*default_left))?;
                    binio::write_f64(&mut w, Scalar::to_f64(*gain))?;
                    binio::write_usize(&mut w, *left)?;
                    binio::write_usize(&mut w, *right)?;
                }
            }
        }
    }
    Ok(())
}

pub fn load_gbdt<S: Scalar>(mut r: impl Read) -> Result<(GbdtModel<S>, u64)> {
    let config_hash = binio::read_header(&mut r, ArtifactKind::Gbdt, GBDT_FORMAT_VERSION)?;
    let schema_hash = binio::read_u64(&mut r)?;
    let base_score = S::from_f64(binio::read_f64(&mut r)?);
    let shrinkage = S::from_f64(binio::read_f64(&mut r)?);
    let n_trees = binio::read_usize(&mut r)?;
    let mut trees = Vec::with_capacity(n_trees.min(4096));
    for _ in 0..n_trees {
        let n_nodes = binio::read_usize(&mut r)?;
        let mut nodes = Vec::with_capacity(n_nodes.min(65536));
        for _ in 0..n_nodes {
            match binio::read_usize(&mut r)? {
                0 => nodes.push(Node::Leaf {
                    value: S::from_f64(binio::read_f64(&mut r)?),
                }),
                1 => {
                    let feature = binio::read_usize(&mut r)?;
                    let threshold = S::from_f64(binio::read_f64(&mut r)?);
                    let default_left = match binio::read_usize(&mut r)? {
                        0 => false,
                        1 => true,
                        other => {
                            return Err(Error::invalid(format!(
                                "tree split direction flag must be 0 or 1, found {other}"
                            )))
                        }
                    };
                    let gain = S::from_f64(binio::read_f64(&mut r)?);
                    let left = binio::read_usize(&mut r)?;
                    let right = binio::read_usize(&mut r)?;
                    nodes.push(Node::Split {
                        feature,
                        threshold,
                        default_left,
                        gain,
                        left,
                        right,
                    });
                }
                other => return Err(Error::invalid(format!("unknown tree node tag {other}"))),
            }
        }
        trees.push(Tree::from_nodes(nodes)?);
    }
    let model = GbdtModel::from_parts(trees, base_score, shrinkage, schema_hash)?;
    Ok((model, config_hash))
}
