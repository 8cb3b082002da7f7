//! Scalar abstraction and the small dense containers used by the trainable
//! models.
//!
//! Everything numeric in this crate is generic over [`Scalar`] so the same
//! code runs in `f32` or `f64`; the CLI pipeline and the serialized model
//! formats fix `f64`.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point scalar the models are generic over.
pub trait Scalar:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn from_usize(x: usize) -> Self {
        Self::from_f64(x as f64)
    }

    /// Numerically stable logistic function 1 / (1 + e^-x).
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// Numerically stable ln(1 + e^x).
    fn ln_1p_exp(self) -> Self {
        if self > Self::zero() {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn fill(&mut self, value: S) {
        self.data.fill(value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// y = M^T x for a `rows x cols` matrix and `x` of length `rows`.
    pub fn transpose_mul(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![S::zero(); self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == S::zero() {
                continue;
            }
            for (yc, m) in y.iter_mut().zip(self.row(r)) {
                *yc += xr * *m;
            }
        }
        y
    }

    /// y = M x for `x` of length `cols`.
    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (x, y)| acc + *x * *y)
}

/// dst += k * src
pub fn axpy<S: Scalar>(dst: &mut [S], k: S, src: &[S]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * *s;
    }
}

pub fn l2_norm<S: Scalar>(v: &[S]) -> S {
    dot(v, v).sqrt()
}

pub fn l1_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, x| acc + x.abs())
}

pub fn scale<S: Scalar>(v: &mut [S], k: S) {
    for x in v.iter_mut() {
        *x *= k;
    }
}

/// Indices of the `k` largest scores, descending, ties broken by
/// ascending index. Invariant under any strictly increasing transform
/// of the scores.
pub fn rank_top_k<S: Scalar>(scores: &[S], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Adam state for one flat parameter block.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    m: Vec<S>,
    v: Vec<S>,
    t: i32,
    beta1: S,
    beta2: S,
    eps: S,
}

impl<S: Scalar> Adam<S> {
    pub fn new(len: usize) -> Self {
        Adam {
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            t: 0,
            beta1: S::from_f64(0.9),
            beta2: S::from_f64(0.999),
            eps: S::from_f64(1e-8),
        }
    }

    pub fn step(&mut self, params: &mut [S], grads: &[S], lr: S) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = S::one() - self.beta1.powi(self.t);
        let bc2 = S::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (S::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (S::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_mul_matches_hand_computation() {
        // M = [[1,2],[3,4],[5,6]], x = [1, 0, -1] -> M^T x = [-4, -4]
        let m = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.transpose_mul(&[1.0, 0.0, -1.0]), vec![-4.0, -4.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(800.0f64.sigmoid(), 1.0);
        assert_eq!((-800.0f64).sigmoid(), 0.0);
        assert!((0.0f64.sigmoid() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ln_1p_exp_is_stable() {
        assert!((1.5f64.ln_1p_exp() - (1.0 + 1.5f64.exp()).ln()).abs() < 1e-12);
        assert!((1000.0f64.ln_1p_exp() - 1000.0).abs() < 1e-9);
        assert_eq!((-1000.0f64).ln_1p_exp(), 0.0);
    }

    #[test]
    fn rank_top_k_sorts_desc_with_id_tie_break() {
        assert_eq!(rank_top_k(&[0.1, 0.9, 0.5], 3), vec![1, 2, 0]);
        assert_eq!(rank_top_k(&[0.5, 0.5, 0.5], 2), vec![0, 1]);
        assert_eq!(rank_top_k::<f64>(&[], 4), Vec::<usize>::new());
        // Affine transform with positive slope preserves the ranking.
        let scores = [0.3, -1.0, 0.7, 0.7, 0.0];
        let transformed: Vec<f64> = scores.iter().map(|s| 2.5 * s + 7.0).collect();
        assert_eq!(rank_top_k(&scores, 5), rank_top_k(&transformed, 5));
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut params = vec![1.0f64, -1.0];
        let mut opt = Adam::new(2);
        opt.step(&mut params, &[2.0, -2.0], 0.1);
        assert!(params[0] < 1.0);
        assert!(params[1] > -1.0);
    }
}
