//! Histogram-based second-order regression trees.
//!
//! Quantile bin edges are frozen from the training matrix once per fit;
//! split search scans per-feature histograms of (gradient, hessian)
//! sums. Arithmetic conventions (documented on [`fit_tree`]) are pinned
//! so an independent oracle can reproduce gains bit-for-bit.

use crate::error::{Error, Result};
use crate::featbank::FeatureMatrix;
use crate::num::Scalar;

use super::TreeParams;

/// Denominator guard in gain and leaf-value formulas.
pub const GAIN_EPS: f64 = 1e-6;

/// Per-feature quantile bin edges frozen from a training matrix.
///
/// `bin(x)` = number of edges strictly below `x`; a row goes left at a
/// split on edge `e` iff `x ≤ e`, which coincides with its bin index
/// being at most the edge's index.
#[derive(Debug, Clone, PartialEq)]
pub struct Binner<S: Scalar> {
    edges: Vec<Vec<S>>,
}

impl<S: Scalar> Binner<S> {
    pub fn fit(matrix: &FeatureMatrix<S>, max_bins: usize) -> Result<Self> {
        if max_bins < 2 {
            return Err(Error::invalid("histogram binning needs at least 2 bins"));
        }
        if matrix.n_rows() == 0 {
            return Err(Error::invalid("cannot fit bins on an empty matrix"));
        }
        let n = matrix.n_rows();
        let mut edges = Vec::with_capacity(matrix.feature_count());
        for f in 0..matrix.feature_count() {
            let mut column: Vec<S> = (0..n).map(|r| matrix.feature(r, f)).collect();
            column.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
            let mut distinct = column.clone();
            distinct.dedup();
            let mut feature_edges: Vec<S> = if distinct.len() <= 1 {
                Vec::new() // constant feature: unsplittable
            } else if distinct.len() <= max_bins {
                distinct[..distinct.len() - 1].to_vec()
            } else {
                let mut quantiles: Vec<S> = (1..max_bins)
                    .map(|k| column[k * n / max_bins])
                    .collect();
                quantiles.dedup();
                quantiles
            };
            let max = *distinct.last().expect("non-empty column");
            feature_edges.retain(|&e| e < max);
            edges.push(feature_edges);
        }
        Ok(Binner { edges })
    }

    pub fn feature_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self, feature: usize) -> &[S] {
        &self.edges[feature]
    }

    pub fn bin(&self, feature: usize, x: S) -> usize {
        self.edges[feature].partition_point(|&e| e < x)
    }
}

/// A feature matrix pre-quantized against a frozen [`Binner`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMatrix<S: Scalar> {
    binner: Binner<S>,
    bins: Vec<u16>,
    n_rows: usize,
    n_features: usize,
}

impl<S: Scalar> BinnedMatrix<S> {
    pub fn new(binner: Binner<S>, matrix: &FeatureMatrix<S>) -> Result<Self> {
        if binner.feature_count() != matrix.feature_count() {
            return Err(Error::LengthMismatch {
                left: binner.feature_count(),
                right: matrix.feature_count(),
            });
        }
        let n_rows = matrix.n_rows();
        let n_features = matrix.feature_count();
        let mut bins = Vec::with_capacity(n_rows * n_features);
        for r in 0..n_rows {
            for f in 0..n_features {
                bins.push(binner.bin(f, matrix.feature(r, f)) as u16);
            }
        }
        Ok(BinnedMatrix {
            binner,
            bins,
            n_rows,
            n_features,
        })
    }

    pub fn binner(&self) -> &Binner<S> {
        &self.binner
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn bin(&self, row: usize, feature: usize) -> usize {
        self.bins[row * self.n_features + feature] as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<S> {
    Leaf {
        value: S,
    },
    Split {
        feature: usize,
        /// Go left iff `x ≤ threshold` (non-finite x follows
        /// `default_left`).
        threshold: S,
        default_left: bool,
        gain: S,
        left: usize,
        right: usize,
    },
}

/// Regression tree stored as a flat node array; node 0 is the root and
/// children always come after their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tree<S> {
    pub fn leaf(value: S) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn from_nodes(nodes: Vec<Node<S>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("a tree needs at least one node"));
        }
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = node {
                for &child in [left, right] {
                    if child <= i || child >= nodes.len() {
                        return Err(Error::invalid(format!(
                            "tree node {i} points at child {child}, which is out of order"
                        )));
                    }
                }
            }
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Sum of split gains over the whole tree.
    pub fn total_gain(&self) -> S {
        self.nodes.iter().fold(S::zero(), |acc, n| match n {
            Node::Split { gain, .. } => acc + *gain,
            Node::Leaf { .. } => acc,
        })
    }

    pub fn predict_row(&self, row: &[S]) -> S {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let x = row[*feature];
                    let go_left = if x.is_finite() {
                        x <= *threshold
                    } else {
                        *default_left
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }
}

struct PendingNode {
    node: usize,
    rows: Vec<u32>,
    depth: usize,
}

struct BestSplit<S> {
    gain: S,
    feature: usize,
    edge_index: usize,
    threshold: S,
}

/// Fit one regression tree on binned features against per-row gradients
/// and hessians.
///
/// Conventions (pinned so external oracles can match gains exactly):
/// histograms accumulate (G, H, count) per bin by scanning the node's
/// rows in ascending row order; per-feature totals sum the bins in
/// ascending bin order; left sums are ascending prefix sums and right
/// sums are `total − left`; split gain is
/// `G_L²/(H_L+ε) + G_R²/(H_R+ε) − G²/(H+ε)` with ε = 1e-6; a split is
/// accepted only for strictly positive gain, scanning features then
/// edges in ascending order and keeping strictly better gains; leaf
/// value is `−G/(H+ε)` from the node's row sums in ascending row order.
pub fn fit_tree<S: Scalar>(
    matrix: &BinnedMatrix<S>,
    gradients: &[S],
    hessians: &[S],
    params: &TreeParams,
) -> Result<Tree<S>> {
    if matrix.n_rows() == 0 {
        return Err(Error::invalid("cannot fit a tree on an empty matrix"));
    }
    if gradients.len() != matrix.n_rows() {
        return Err(Error::LengthMismatch {
            left: gradients.len(),
            right: matrix.n_rows(),
        });
    }
    if hessians.len() != matrix.n_rows() {
        return Err(Error::LengthMismatch {
            left: hessians.len(),
            right: matrix.n_rows(),
        });
    }
    let eps = S::from_f64(GAIN_EPS);
    let mut nodes: Vec<Node<S>> = vec![Node::Leaf { value: S::zero() }];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(PendingNode {
        node: 0,
        rows: (0..matrix.n_rows() as u32).collect(),
        depth: 0,
    });
    while let Some(pending) = queue.pop_front() {
        let rows = &pending.rows;
        let mut node_g = S::zero();
        let mut node_h = S::zero();
        for &r in rows {
            node_g += gradients[r as usize];
            node_h += hessians[r as usize];
        }
        let make_leaf = |nodes: &mut Vec<Node<S>>| {
            nodes[pending.node] = Node::Leaf {
                value: -node_g / (node_h + eps),
            };
        };
        if pending.depth >= params.max_depth || rows.len() < 2 * params.min_samples_leaf {
            make_leaf(&mut nodes);
            continue;
        }
        let mut best: Option<BestSplit<S>> = None;
        for f in 0..matrix.n_features() {
            let edges = matrix.binner().edges(f);
            if edges.is_empty() {
                continue;
            }
            let n_bins = edges.len() + 1;
            let mut hist_g = vec![S::zero(); n_bins];
            let mut hist_h = vec![S::zero(); n_bins];
            let mut hist_c = vec![0usize; n_bins];
            for &r in rows {
                let b = matrix.bin(r as usize, f);
                hist_g[b] += gradients[r as usize];
                hist_h[b] += hessians[r as usize];
                hist_c[b] += 1;
            }
            let mut total_g = S::zero();
            let mut total_h = S::zero();
            let mut total_c = 0usize;
            for b in 0..n_bins {
                total_g += hist_g[b];
                total_h += hist_h[b];
                total_c += hist_c[b];
            }
            let parent = total_g * total_g / (total_h + eps);
            let mut left_g = S::zero();
            let mut left_h = S::zero();
            let mut left_c = 0usize;
            for (b, &edge) in edges.iter().enumerate() {
                left_g += hist_g[b];
                left_h += hist_h[b];
                left_c += hist_c[b];
                let right_c = total_c - left_c;
                if left_c < params.min_samples_leaf || right_c < params.min_samples_leaf {
                    continue;
                }
                let right_g = total_g - left_g;
                let right_h = total_h - left_h;
                let gain = left_g * left_g / (left_h + eps) + right_g * right_g / (right_h + eps)
                    - parent;
                if gain > best.as_ref().map_or(S::zero(), |b| b.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        edge_index: b,
                        threshold: edge,
                    });
                }
            }
        }
        match best {
            None => make_leaf(&mut nodes),
            Some(split) => {
                let mut left_rows = Vec::new();
                let mut right_rows = Vec::new();
                for &r in rows {
                    if matrix.bin(r as usize, split.feature) <= split.edge_index {
                        left_rows.push(r);
                    } else {
                        right_rows.push(r);
                    }
                }
                let left = nodes.len();
                nodes.push(Node::Leaf { value: S::zero() });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: S::zero() });
                nodes[pending.node] = Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    default_left: true,
                    gain: split.gain,
                    left,
                    right,
                };
                queue.push_back(PendingNode {
                    node: left,
                    rows: left_rows,
                    depth: pending.depth + 1,
                });
                queue.push_back(PendingNode {
                    node: right,
                    rows: right_rows,
                    depth: pending.depth + 1,
                });
            }
        }
    }
    Tree::from_nodes(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featbank::FeatureSchema;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix_from_columns(columns: &[Vec<f64>]) -> FeatureMatrix<f64> {
        let names = (0..columns.len()).map(|f| format!("f{f}")).collect();
        let mut m = FeatureMatrix::new(FeatureSchema::from_names(names));
        let n = columns[0].len();
        for r in 0..n {
            let row: Vec<f64> = columns.iter().map(|c| c[r]).collect();
            m.add_group(r as u64, vec![(0, 0, row)]).unwrap();
        }
        m
    }

    fn params(max_depth: usize, min_leaf: usize, bins: usize) -> TreeParams {
        TreeParams {
            max_depth,
            min_samples_leaf: min_leaf,
            histogram_bins: bins,
            ..TreeParams::default()
        }
    }

    #[test]
    fn binner_uses_distinct_values_when_few() {
        let m = matrix_from_columns(&[vec![3.0, 1.0, 2.0, 1.0, 4.0]]);
        let binner = Binner::fit(&m, 64).unwrap();
        assert_eq!(binner.edges(0), &[1.0, 2.0, 3.0]);
        assert_eq!(binner.bin(0, 0.5), 0);
        assert_eq!(binner.bin(0, 1.0), 0); // equal to edge → left bin
        assert_eq!(binner.bin(0, 1.5), 1);
        assert_eq!(binner.bin(0, 3.0), 2);
        assert_eq!(binner.bin(0, 99.0), 3);
    }

    #[test]
    fn binner_constant_feature_has_no_edges() {
        let m = matrix_from_columns(&[vec![7.0; 10]]);
        let binner = Binner::fit(&m, 64).unwrap();
        assert!(binner.edges(0).is_empty());
    }

    #[test]
    fn binner_quantiles_cap_the_bin_count() {
        let column: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let m = matrix_from_columns(&[column]);
        let binner = Binner::fit(&m, 8).unwrap();
        assert!(binner.edges(0).len() <= 7);
        assert!(binner.edges(0).windows(2).all(|w| w[0] < w[1]));
        // Roughly balanced octiles.
        assert_eq!(binner.bin(0, 0.0), 0);
        assert_eq!(binner.bin(0, 999.0), binner.edges(0).len());
    }

    #[test]
    fn binner_bin_matches_threshold_rule() {
        // bin(x) ≤ b  ⟺  x ≤ edges[b], the invariant prediction relies on.
        let column: Vec<f64> = vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        let m = matrix_from_columns(std::slice::from_ref(&column));
        let binner = Binner::fit(&m, 4).unwrap();
        for &x in &column {
            for (b, &e) in binner.edges(0).iter().enumerate() {
                assert_eq!(binner.bin(0, x) <= b, x <= e, "x={x} edge={e}");
            }
        }
    }

    #[test]
    fn balanced_binary_feature_splits_once_with_opposite_leaves() {
        let n = 40;
        let column: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let grads: Vec<f64> = column.iter().map(|&x| if x == 1.0 { -1.0 } else { 1.0 }).collect();
        let hess = vec![0.25; n];
        let m = matrix_from_columns(&[column]);
        let binned = BinnedMatrix::new(Binner::fit(&m, 64).unwrap(), &m).unwrap();
        let tree = fit_tree(&binned, &grads, &hess, &params(6, 1, 64)).unwrap();
        assert_eq!(tree.node_count(), 3);
        let (left_value, right_value) = match tree.nodes()[0] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.0);
                match (&tree.nodes()[left], &tree.nodes()[right]) {
                    (Node::Leaf { value: l }, Node::Leaf { value: r }) => (*l, *r),
                    _ => panic!("children should be leaves"),
                }
            }
            _ => panic!("root should split"),
        };
        // Leaf = −G/(H+ε): x=0 side has G=+20 → negative; x=1 side positive.
        assert!(left_value < 0.0 && right_value > 0.0);
        assert_relative_eq!(left_value, -20.0 / (5.0 + GAIN_EPS), epsilon = 1e-12);
        assert_relative_eq!(right_value, 20.0 / (5.0 + GAIN_EPS), epsilon = 1e-12);
    }

    #[test]
    fn zero_gradients_give_a_single_zero_leaf() {
        let m = matrix_from_columns(&[vec![0.0, 1.0, 2.0, 3.0]]);
        let binned = BinnedMatrix::new(Binner::fit(&m, 64).unwrap(), &m).unwrap();
        let tree = fit_tree(&binned, &[0.0; 4], &[1.0; 4], &params(6, 1, 64)).unwrap();
        assert_eq!(tree.node_count(), 1);
        match tree.nodes()[0] {
            Node::Leaf { value } => assert_eq!(value, 0.0),
            _ => panic!("expected a leaf"),
        }
    }

    #[test]
    fn constant_feature_cannot_split() {
        let m = matrix_from_columns(&[vec![5.0; 6]]);
        let binned = BinnedMatrix::new(Binner::fit(&m, 64).unwrap(), &m).unwrap();
        let grads = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let tree = fit_tree(&binned, &grads, &[1.0; 6], &params(6, 1, 64)).unwrap();
        assert_eq!(tree.node_count(), 1);
    }

    #[test]
    fn min_samples_leaf_blocks_unbalanced_splits() {
        // Only 1 row has x=1; min_samples_leaf=2 forbids isolating it.
        let column = vec![0.0, 0.0, 0.0, 0.0, 1.0];
        let grads = vec![1.0, 1.0, 1.0, 1.0, -10.0];
        let m = matrix_from_columns(&[column]);
        let binned = BinnedMatrix::new(Binner::fit(&m, 64).unwrap(), &m).unwrap();
        let tree = fit_tree(&binned, &grads, &[1.0; 5], &params(6, 2, 64)).unwrap();
        assert_eq!(tree.node_count(), 1);
        let tree = fit_tree(&binned, &grads, &[1.0; 5], &params(6, 1, 64)).unwrap();
        assert_eq!(tree.node_count(), 3);
    }

    #[test]
    fn max_depth_limits_growth() {
        let column: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let grads: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let m = matrix_from_columns(&[column]);
        let binned = BinnedMatrix::new(Binner::fit(&m, 64).unwrap(), &m).unwrap();
        let tree = fit_tree(&binned, &grads, &[1.0; 32], &params(1, 1, 64)).unwrap();
        assert!(tree.node_count() <= 3);
        let deeper = fit_tree(&binned, &grads, &[1.0; 32], &params(3, 1, 64)).unwrap();
        assert!(deeper.node_count() > tree.node_count());
    }

    #[test]
    fn fitting_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let columns: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let grads: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = matrix_from_columns(&columns);
        let binned = BinnedMatrix::new(Binner::fit(&m, 8).unwrap(), &m).unwrap();
        let a = fit_tree(&binned, &grads, &[1.0; 50], &params(4, 2, 8)).unwrap();
        let b = fit_tree(&binned, &grads, &[1.0; 50], &params(4, 2, 8)).unwrap();
        assert_eq!(a, b);
    }

    /// Exhaustive oracle over the same bin boundaries, mirroring the
    /// documented arithmetic conventions.
    fn oracle_root_split(
        matrix: &BinnedMatrix<f64>,
        grads: &[f64],
        hess: &[f64],
        min_leaf: usize,
    ) -> Option<(f64, usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..matrix.n_features() {
            let edges = matrix.binner().edges(f);
            if edges.is_empty() {
                continue;
            }
            let n_bins = edges.len() + 1;
            let mut hg = vec![0.0; n_bins];
            let mut hh = vec![0.0; n_bins];
            let mut hc = vec![0usize; n_bins];
            for r in 0..matrix.n_rows() {
                let b = matrix.bin(r, f);
                hg[b] += grads[r];
                hh[b] += hess[r];
                hc[b] += 1;
            }
            let (mut tg, mut th, mut tc) = (0.0, 0.0, 0usize);
            for b in 0..n_bins {
                tg += hg[b];
                th += hh[b];
                tc += hc[b];
            }
            let parent = tg * tg / (th + GAIN_EPS);
            let (mut lg, mut lh, mut lc) = (0.0, 0.0, 0usize);
            for b in 0..edges.len() {
                lg += hg[b];
                lh += hh[b];
                lc += hc[b];
                if lc < min_leaf || tc - lc < min_leaf {
                    continue;
                }
                let rg = tg - lg;
                let rh = th - lh;
                let gain = lg * lg / (lh + GAIN_EPS) + rg * rg / (rh + GAIN_EPS) - parent;
                if gain > best.map_or(0.0, |(g, _, _)| g) {
                    best = Some((gain, f, b));
                }
            }
        }
        best
    }

    #[test]
    fn root_split_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..100 {
            let n = rng.gen_range(4..40);
            let n_features = rng.gen_range(1..4);
            let columns: Vec<Vec<f64>> = (0..n_features)
                .map(|_| {
                    (0..n)
                        .map(|_| (rng.gen_range(-4i32..4) as f64) / 2.0)
                        .collect()
                })
                .collect();
            let grads: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let hess: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let m = matrix_from_columns(&columns);
            let binned = BinnedMatrix::new(Binner::fit(&m, 8).unwrap(), &m).unwrap();
            let tree = fit_tree(&binned, &grads, &hess, &params(1, 1, 8)).unwrap();
            let oracle = oracle_root_split(&binned, &grads, &hess, 1);
            match (&tree.nodes()[0], oracle) {
                (Node::Leaf { .. }, None) => {}
                (Node::Split { gain, feature, .. }, Some((og, of, _))) => {
                    assert_eq!(*gain, og, "case {case}: gain mismatch");
                    assert_eq!(*feature, of, "case {case}: feature mismatch");
                }
                (node, oracle) => {
                    panic!("case {case}: tree {node:?} disagrees with oracle {oracle:?}")
                }
            }
        }
    }

    #[test]
    fn prediction_routes_by_threshold() {
        let tree = Tree::from_nodes(vec![
            Node::Split {
                feature: 0,
                threshold: 1.5,
                default_left: true,
                gain: 1.0,
                left: 1,
                right: 2,
            },
            Node::Leaf { value: -3.0 },
            Node::Leaf { value: 7.0 },
        ])
        .unwrap();
        assert_eq!(tree.predict_row(&[1.5]), -3.0); // equal → left
        assert_eq!(tree.predict_row(&[1.6]), 7.0);
        assert_eq!(tree.predict_row(&[f64::NAN]), -3.0); // default direction
        assert_eq!(tree.total_gain(), 1.0);
        assert_eq!(tree.leaf_count(), 2);
    }

    #[test]
    fn malformed_node_tables_are_rejected() {
        assert!(Tree::<f64>::from_nodes(vec![]).is_err());
        // Child pointing backwards.
        assert!(Tree::from_nodes(vec![
            Node::Leaf { value: 0.0 },
            Node::Split {
                feature: 0,
                threshold: 0.0,
                default_left: true,
                gain: 0.0,
                left: 0,
                right: 0,
            },
        ])
        .is_err());
    }
}
