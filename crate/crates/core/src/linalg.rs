//! Dense linear algebra primitives used throughout the crate.
//!
//! Every higher-level construction works with square `d×d` real matrices in
//! a fixed singular value frame. The frame produced by [`svd_descending`] is
//! deterministic: singular values are sorted in decreasing order and each
//! left singular vector is oriented so that its largest-magnitude entry is
//! positive (ties go to the lowest row index).

use nalgebra::{DMatrix, DVector, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::tolerance::{TAU_COINC, TAU_RANK};

/// Dense `d×d` real matrix.
pub type SquareMatrix = DMatrix<f64>;

pub fn check_finite(m: &SquareMatrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GeomError::NonFinite)
    }
}

pub fn check_square(m: &SquareMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(GeomError::shape(
            "non-empty square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m.nrows())
}

/// `‖QᵀQ − I‖_F`.
pub fn orthogonality_defect(q: &SquareMatrix) -> f64 {
    let n = q.nrows();
    (q.transpose() * q - SquareMatrix::identity(n, n)).norm()
}

/// Singular values in decreasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    sigma: Vec<f64>,
}

impl Spectrum {
    /// Builds a spectrum from arbitrary nonnegative values, sorting them in
    /// decreasing order.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(GeomError::InvalidArgument("empty spectrum".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        if let Some(v) = values.iter().find(|v| **v < 0.0) {
            return Err(GeomError::InvalidArgument(format!(
                "singular values must be nonnegative, got {v}"
            )));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Spectrum { sigma: values })
    }

    /// Spectrum with `σ_k = λ_k^N`.
    pub fn from_depth_root(lambda: &[f64], depth: usize) -> Result<Self> {
        Spectrum::new(lambda.iter().map(|l| l.powi(depth as i32)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn largest(&self) -> f64 {
        self.sigma[0]
    }

    /// `λ_k = σ_k^{1/N}`.
    pub fn depth_root(&self, depth: usize) -> Vec<f64> {
        let inv = 1.0 / depth as f64;
        self.sigma.iter().map(|s| s.powf(inv)).collect()
    }

    pub fn check_full_rank(&self) -> Result<()> {
        let threshold = TAU_RANK * self.largest();
        let sigma_min = *self.sigma.last().unwrap();
        if self.largest() <= 0.0 || sigma_min <= threshold {
            return Err(GeomError::RankDeficient {
                sigma_min,
                threshold,
            });
        }
        Ok(())
    }

    /// Whether entries `k` and `l` are closer than the coincidence threshold.
    pub fn coincident(&self, k: usize, l: usize) -> bool {
        (self.sigma[k] - self.sigma[l]).abs() < TAU_COINC * self.largest()
    }

    /// Fails on the first adjacent pair closer than the coincidence threshold.
    pub fn check_distinct(&self) -> Result<()> {
        for k in 1..self.sigma.len() {
            if self.coincident(k - 1, k) {
                return Err(GeomError::CoincidentSingularValues {
                    k: k - 1,
                    l: k,
                    gap: self.sigma[k - 1] - self.sigma[k],
                });
            }
        }
        Ok(())
    }

    pub fn as_diagonal(&self) -> SquareMatrix {
        SquareMatrix::from_diagonal(&DVector::from_column_slice(&self.sigma))
    }
}

/// `X = Q_N Σ Q_0ᵀ` with the crate's ordering and sign convention.
#[derive(Debug, Clone)]
pub struct SvdTriple {
    pub q_left: SquareMatrix,
    pub spectrum: Spectrum,
    pub q_right: SquareMatrix,
}

impl SvdTriple {
    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn reconstruct(&self) -> SquareMatrix {
        &self.q_left * self.spectrum.as_diagonal() * self.q_right.transpose()
    }

    /// `Q_N diag(values) Q_0ᵀ`.
    pub fn compose_diagonal(&self, values: &[f64]) -> SquareMatrix {
        let diag = SquareMatrix::from_diagonal(&DVector::from_column_slice(values));
        &self.q_left * diag * self.q_right.transpose()
    }

    /// Rank-one matrix `q_{N,k} q_{0,l}ᵀ`.
    pub fn rank_one(&self, k: usize, l: usize) -> SquareMatrix {
        self.q_left.column(k) * self.q_right.column(l).transpose()
    }
}

/// Singular value decomposition with descending singular values and the
/// largest-magnitude entry of every left singular vector made positive.
pub fn svd_descending(x: &SquareMatrix) -> Result<SvdTriple> {
    let d = check_square(x)?;
    check_finite(x)?;
    let svd = SVD::try_new(x.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| GeomError::InvalidArgument("SVD failed to converge".into()))?;
    let u = svd.u.expect("left singular vectors requested");
    let v = svd.v_t.expect("right singular vectors requested").transpose();
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut q_left = SquareMatrix::zeros(d, d);
    let mut q_right = SquareMatrix::zeros(d, d);
    let mut sigma = Vec::with_capacity(d);
    for (k, &src) in order.iter().enumerate() {
        let mut left = u.column(src).clone_owned();
        let mut right = v.column(src).clone_owned();
        let max = left.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pivot = left
            .iter()
            .position(|v| v.abs() >= max * (1.0 - 1e-12))
            .unwrap_or(0);
        if left[pivot] < 0.0 {
            left.neg_mut();
            right.neg_mut();
        }
        q_left.set_column(k, &left);
        q_right.set_column(k, &right);
        sigma.push(s[src].max(0.0));
    }

    Ok(SvdTriple {
        q_left,
        spectrum: Spectrum { sigma },
        q_right,
    })
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of `Q` rescaled by the signs of `diag(R)`.
pub fn haar_orthogonal(d: usize, seed: u64) -> SquareMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_orthogonal_with(d, &mut rng)
}

pub fn haar_orthogonal_with<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> SquareMatrix {
    let g = SquareMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `∏_{i<j} (α_j − α_i)`; the empty product is 1.
pub fn vandermonde(vals: &[f64]) -> f64 {
    let mut prod = 1.0;
    for (i, a) in vals.iter().enumerate() {
        for b in &vals[i + 1..] {
            prod *= b - a;
        }
    }
    prod
}

/// `(aⁿ − bⁿ)/(a − b)` for `a, b > 0`, evaluated without cancellation.
///
/// At `a = b` this is the derivative `n a^{n−1}`.
pub fn power_quotient(a: f64, b: f64, n: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let t = (lo / hi).ln();
    if t == 0.0 {
        return n * hi.powf(n - 1.0);
    }
    hi.powf(n - 1.0) * (n * t).exp_m1() / t.exp_m1()
}

/// `(a − b)/(ln a − ln b)` for `a, b > 0`; equals `a` at `a = b`.
pub fn log_quotient(a: f64, b: f64) -> f64 {
    let t = (b / a).ln();
    if t == 0.0 {
        return a;
    }
    a * t.exp_m1() / t
}

/// `Γ(n/2)` for a positive integer `n`.
pub fn gamma_half(n: u32) -> f64 {
    assert!(n > 0, "gamma_half needs a positive argument");
    let (mut value, mut x) = if n % 2 == 0 {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    let target = n as f64 / 2.0;
    while x < target {
        value *= x;
        x += 1.0;
    }
    value
}

/// Element `α^{k,l} = (e_k e_lᵀ − e_l e_kᵀ)/√2` of the standard orthonormal
/// basis of antisymmetric matrices. Indices are zero-based with `k < l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkewBasisElement {
    pub k: usize,
    pub l: usize,
}

impl SkewBasisElement {
    pub fn new(k: usize, l: usize, dim: usize) -> Result<Self> {
        if k >= l || l >= dim {
            return Err(GeomError::IndexError(format!(
                "need k < l < {dim}, got k={k}, l={l}"
            )));
        }
        Ok(SkewBasisElement { k, l })
    }

    pub fn matrix(&self, dim: usize) -> SquareMatrix {
        let mut m = SquareMatrix::zeros(dim, dim);
        let c = std::f64::consts::FRAC_1_SQRT_2;
        m[(self.k, self.l)] = c;
        m[(self.l, self.k)] = -c;
        m
    }
}

/// All pairs `k < l` of a width-`d` network in lexicographic order.
pub fn index_pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |k| (k + 1..d).map(move |l| (k, l)))
}

/// Tuple of `N` matrices attached to a network; slot `p` (1-based) pairs
/// with layer `W_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    slots: Vec<SquareMatrix>,
}

impl TangentVector {
    pub fn new(slots: Vec<SquareMatrix>) -> Result<Self> {
        let first = slots
            .first()
            .ok_or_else(|| GeomError::InvalidArgument("tangent vector needs a slot".into()))?;
        let d = check_square(first)?;
        for s in &slots {
            if s.shape() != (d, d) {
                return Err(GeomError::shape(
                    format!("{d}x{d}"),
                    format!("{}x{}", s.nrows(), s.ncols()),
                ));
            }
        }
        Ok(TangentVector { slots })
    }

    pub fn zeros(depth: usize, width: usize) -> Self {
        TangentVector {
            slots: vec![SquareMatrix::zeros(width, width); depth],
        }
    }

    pub fn depth(&self) -> usize {
        self.slots.len()
    }

    pub fn width(&self) -> usize {
        self.slots[0].nrows()
    }

    /// Slot `p`, `1 ≤ p ≤ N`.
    pub fn slot(&self, p: usize) -> &SquareMatrix {
        &self.slots[p - 1]
    }

    pub fn slot_mut(&mut self, p: usize) -> &mut SquareMatrix {
        &mut self.slots[p - 1]
    }

    pub fn slots(&self) -> &[SquareMatrix] {
        &self.slots
    }

    pub fn norm(&self) -> f64 {
        self.slots.iter().map(|s| s.norm_squared()).sum::<f64>().sqrt()
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &TangentVector) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            *a += b * c;
        }
    }

    fn same_shape(&self, other: &TangentVector) -> Result<()> {
        if self.depth() != other.depth() || self.width() != other.width() {
            return Err(GeomError::shape(
                format!("depth {} width {}", self.depth(), self.width()),
                format!("depth {} width {}", other.depth(), other.width()),
            ));
        }
        Ok(())
    }
}

/// `Σ_p Tr(v_pᵀ w_p)`.
pub fn frobenius_ip(v: &TangentVector, w: &TangentVector) -> Result<f64> {
    v.same_shape(w)?;
    Ok(v.slots.iter().zip(&w.slots).map(|(a, b)| a.dot(b)).sum())
}
