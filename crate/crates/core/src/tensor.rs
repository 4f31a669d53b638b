//! Symmetric rank-3 coefficient tensors.
//!
//! A cubic polynomial in `(u, v, h)` is rewritten as a homogeneous cubic in
//! `x = (1, u, v, h)`, so one contraction `T_ijk x_i x_j x_k` evaluates every
//! term, with the constant slot `x_0 = 1` carrying the lower-degree monomials.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rpc::{monomials, Poly20, MONOMIAL_EXPONENTS};

/// Sorted tensor indices `(i ≤ j ≤ k)` of each RPC00B monomial.
pub const MONOMIAL_INDICES: [[usize; 3]; 20] = {
    let mut out = [[0usize; 3]; 20];
    let mut m = 0;
    while m < 20 {
        let e = MONOMIAL_EXPONENTS[m];
        let mut idx = [0usize; 3];
        let mut pos = 3 - (e[0] + e[1] + e[2]) as usize;
        let mut var = 0;
        while var < 3 {
            let mut r = 0;
            while r < e[var] {
                idx[pos] = var + 1;
                pos += 1;
                r += 1;
            }
            var += 1;
        }
        out[m] = idx;
        m += 1;
    }
    out
};

/// Number of distinct orderings of a sorted index triple.
const fn multiplicity(idx: [usize; 3]) -> usize {
    if idx[0] == idx[1] && idx[1] == idx[2] {
        1
    } else if idx[0] == idx[1] || idx[1] == idx[2] {
        3
    } else {
        6
    }
}

/// `x = (1, x1, x2, x3)` in normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTensor(pub [f64; 4]);

impl PointTensor {
    #[inline]
    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self([1.0, x1, x2, x3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTensor {
    t: [[[f64; 4]; 4]; 4],
    /// Sum of the tensor entries over each monomial's index orbit.
    weights: [f64; 20],
}

/// Builds the fully symmetric 4×4×4 tensor of a cubic polynomial: a monomial
/// coefficient is spread evenly over all permutations of its index triple
/// (one entry when all indices agree, three when two agree, six otherwise).
pub fn build_coeff_tensor(p: &Poly20) -> CoeffTensor {
    let mut t = [[[0.0; 4]; 4]; 4];
    for (m, &[a, b, c]) in MONOMIAL_INDICES.iter().enumerate() {
        let v = p.c[m] / multiplicity([a, b, c]) as f64;
        for [i, j, k] in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            t[i][j][k] = v;
        }
    }
    let mut weights = [0.0; 20];
    for (m, &idx) in MONOMIAL_INDICES.iter().enumerate() {
        weights[m] = t[idx[0]][idx[1]][idx[2]] * multiplicity(idx) as f64;
    }
    CoeffTensor { t, weights }
}

impl CoeffTensor {
    pub fn zero() -> Self {
        Self { t: [[[0.0; 4]; 4]; 4], weights: [0.0; 20] }
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize, k: usize) -> f64 {
        self.t[i][j][k]
    }

    pub fn entries(&self) -> &[[[f64; 4]; 4]; 4] {
        &self.t
    }

    /// True when every entry equals all its index permutations exactly.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    let v = self.t[i][j][k];
                    let perms = [self.t[i][k][j], self.t[j][i][k], self.t[j][k][i], self.t[k][i][j], self.t[k][j][i]];
                    if perms.iter().any(|p| *p != v) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// `T_ijk x_i x_j x_k`, accumulated over the 20 distinct index orbits.
    #[inline]
    pub fn contract(&self, x: &PointTensor) -> f64 {
        let m = monomials(x.0[1], x.0[2], x.0[3]);
        let mut acc = 0.0;
        for (w, m) in self.weights.iter().zip(m.iter()) {
            acc += w * m;
        }
        acc
    }

    /// Literal 64-term triple sum.
    pub fn contract_full(&self, x: &PointTensor) -> f64 {
        let x = &x.0;
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    acc += self.t[i][j][k] * x[i] * x[j] * x[k];
                }
            }
        }
        acc
    }

    /// Gradient `∂f/∂x_a = 3 T_ajk x_j x_k` for `a = 1..3`, plus the value.
    pub fn contract_with_gradient(&self, x: &PointTensor) -> [f64; 4] {
        let x = &x.0;
        let mut g = [0.0; 4];
        for (a, ga) in g.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..4 {
                for k in 0..4 {
                    acc += self.t[a][j][k] * x[j] * x[k];
                }
            }
            *ga = 3.0 * acc;
        }
        [self.contract(&PointTensor(*x)), g[1], g[2], g[3]]
    }
}

/// Tensors and points for batched contraction: batch element `b` owns a set of
/// `K` tensors and `M` points; every tensor of `b` is contracted with every
/// point of `b`.
#[derive(Debug, Clone)]
pub struct WarpBatch {
    pub tensors: Vec<Vec<CoeffTensor>>,
    pub points: Vec<Vec<PointTensor>>,
}

/// Output of [`contract_batch`], indexed `[b][m][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchValues {
    pub batches: usize,
    pub points: usize,
    pub tensors: usize,
    pub data: Vec<f64>,
}

impl BatchValues {
    #[inline]
    pub fn get(&self, b: usize, m: usize, k: usize) -> f64 {
        self.data[(b * self.points + m) * self.tensors + k]
    }

    /// Values of all tensors at point `(b, m)`.
    #[inline]
    pub fn point(&self, b: usize, m: usize) -> &[f64] {
        let s = (b * self.points + m) * self.tensors;
        &self.data[s..s + self.tensors]
    }
}

const BATCH_CHUNK: usize = 4096;

/// `f[b][m][k] = T(b,k)_ijk X(b,m)_i X(b,m)_j X(b,m)_k`. Each output value is
/// computed by the same scalar kernel as [`CoeffTensor::contract`], so results
/// do not depend on chunking or thread count.
pub fn contract_batch(batch: &WarpBatch) -> Result<BatchValues> {
    let b = batch.tensors.len();
    if batch.points.len() != b {
        return Err(Error::ShapeMismatch(format!("{b} tensor sets vs {} point sets", batch.points.len())));
    }
    let k = batch.tensors.first().map_or(0, Vec::len);
    let m = batch.points.first().map_or(0, Vec::len);
    if batch.tensors.iter().any(|t| t.len() != k) || batch.points.iter().any(|p| p.len() != m) {
        return Err(Error::ShapeMismatch("ragged batch".into()));
    }
    if batch.points.iter().flatten().any(|x| x.0[0] != 1.0) {
        return Err(Error::ShapeMismatch("point tensor with x0 != 1".into()));
    }
    let mut data = vec![0.0; b * m * k];
    if k > 0 {
        data.par_chunks_mut(BATCH_CHUNK * k).enumerate().for_each(|(chunk, out)| {
            let start = chunk * BATCH_CHUNK;
            for (i, row) in out.chunks_mut(k).enumerate() {
                let flat = start + i;
                let (bi, mi) = (flat / m, flat % m);
                let x = &batch.points[bi][mi];
                for (o, t) in row.iter_mut().zip(&batch.tensors[bi]) {
                    *o = t.contract(x);
                }
            }
        });
    }
    Ok(BatchValues { batches: b, points: m, tensors: k, data })
}
