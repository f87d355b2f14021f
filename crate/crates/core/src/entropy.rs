//! Orbit volumes and the entropy of an end-to-end matrix.
//!
//! The balanced microstates realizing `X` form an orbit of the gauge group
//! `O_d^{N−1}`. Its volume in the metric inherited from the Frobenius
//! embedding is `c_d^{N−1} √(van(Σ²)/van(Σ^{2/N}))`, and the entropy is the
//! logarithm of that volume. The pairwise factors come from determinants of
//! tridiagonal Jacobi blocks, which are diagonalized by discrete sine
//! vectors.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::linalg::{
    frobenius_ip, gamma_half, index_pairs, log_quotient, power_quotient, SkewBasisElement,
    SquareMatrix, Spectrum, SvdTriple, TangentVector,
};
use crate::manifold::{center_of_fiber, recover_frames, Network};
use crate::metric::metric_eigenvalue;
use crate::tolerance::TAU_COINC;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Gauge layers `p = 1..N−1`, size `N − 1`.
    Interior,
    /// Including the end frames `p = 0` and `p = N`, size `N + 1`.
    Extended,
}

/// Symmetric tridiagonal block coupling the `(k, l)` gauge directions across
/// depth: diagonal `λ_k² + λ_l²` (halved at both ends when extended),
/// off-diagonal `−λ_kλ_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiBlock {
    pub lk: f64,
    pub ll: f64,
    pub depth: usize,
    pub boundary: Boundary,
    pub matrix: DMatrix<f64>,
}

pub fn jacobi_block(lk: f64, ll: f64, depth: usize, boundary: Boundary) -> JacobiBlock {
    let size = match boundary {
        Boundary::Interior => depth.saturating_sub(1),
        Boundary::Extended => depth + 1,
    };
    let diag = lk * lk + ll * ll;
    let off = -lk * ll;
    let mut m = DMatrix::zeros(size, size);
    for i in 0..size {
        m[(i, i)] = diag;
        if i + 1 < size {
            m[(i, i + 1)] = off;
            m[(i + 1, i)] = off;
        }
    }
    if boundary == Boundary::Extended {
        m[(0, 0)] *= 0.5;
        m[(size - 1, size - 1)] *= 0.5;
    }
    JacobiBlock {
        lk,
        ll,
        depth,
        boundary,
        matrix: m,
    }
}

/// `S h Sᵀ = diag(σ_p)` for an interior block.
#[derive(Debug, Clone)]
pub struct ChebyshevEigen {
    pub s: DMatrix<f64>,
    pub sigma: Vec<f64>,
}

/// Sine transform `S_pq = √(2/N) sin(pqπ/N)`, `p, q = 1..N−1`, and
/// eigenvalues `σ_p = λ_k² + λ_l² − 2λ_kλ_l cos(pπ/N)`.
pub fn chebyshev_eigen(block: &JacobiBlock) -> Result<ChebyshevEigen> {
    if block.boundary != Boundary::Interior {
        return Err(GeomError::InvalidArgument(
            "the sine transform diagonalizes interior blocks only".into(),
        ));
    }
    let n = block.depth;
    let size = n.saturating_sub(1);
    let nf = n as f64;
    let scale = (2.0 / nf).sqrt();
    let s = DMatrix::from_fn(size, size, |i, j| {
        scale * (((i + 1) * (j + 1)) as f64 * PI / nf).sin()
    });
    let (lk, ll) = (block.lk, block.ll);
    let sigma = (1..=size)
        .map(|p| lk * lk + ll * ll - 2.0 * lk * ll * (p as f64 * PI / nf).cos())
        .collect();
    Ok(ChebyshevEigen { s, sigma })
}

/// `det h^{k,l} = (λ_k^{2N} − λ_l^{2N})/(λ_k² − λ_l²)`, with the limit
/// `N λ^{2(N−1)}` for coincident values.
pub fn block_det(lk: f64, ll: f64, depth: usize) -> f64 {
    if depth == 0 {
        return 1.0;
    }
    let n = depth as f64;
    if (lk - ll).abs() < TAU_COINC * lk.max(ll) {
        let l = 0.5 * (lk + ll);
        return n * l.powf(2.0 * (n - 1.0));
    }
    power_quotient(lk * lk, ll * ll, n)
}

/// Normalization of the Haar volume of `O_d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HaarConvention {
    /// Volume under the metric induced by the Frobenius embedding.
    #[default]
    Embedded,
    /// `2^{d(d+3)/2} ∏_{r=1}^d π^{r/2}/Γ(r/2)`.
    Ponting,
}

impl HaarConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            HaarConvention::Embedded => "embedded",
            HaarConvention::Ponting => "ponting",
        }
    }
}

impl FromStr for HaarConvention {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embedded" => Ok(HaarConvention::Embedded),
            "ponting" => Ok(HaarConvention::Ponting),
            other => Err(GeomError::InvalidArgument(format!(
                "unknown convention {other:?} (expected embedded or ponting)"
            ))),
        }
    }
}

/// `log c_d`.
pub fn log_haar_volume_od(d: usize, convention: HaarConvention) -> f64 {
    let df = d as f64;
    match convention {
        HaarConvention::Embedded => {
            // two components of SO(d), each a tower of spheres S^1, …, S^{d−1}
            // scaled by √2 along every generator
            let spheres: f64 = (1..d)
                .map(|k| {
                    let m = (k + 1) as f64;
                    (2.0f64).ln() + 0.5 * m * PI.ln() - gamma_half(k as u32 + 1).ln()
                })
                .sum();
            (2.0f64).ln() + df * (df - 1.0) / 4.0 * (2.0f64).ln() + spheres
        }
        HaarConvention::Ponting => {
            let prod: f64 = (1..=d)
                .map(|r| 0.5 * r as f64 * PI.ln() - gamma_half(r as u32).ln())
                .sum();
            df * (df + 3.0) / 2.0 * (2.0f64).ln() + prod
        }
    }
}

/// `c_d`, the volume of `O_d`.
pub fn haar_volume_od(d: usize, convention: HaarConvention) -> f64 {
    log_haar_volume_od(d, convention).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub total: f64,
    pub constant_part: f64,
    pub ratio_part: f64,
    pub convention: HaarConvention,
}

fn check_depth(depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(GeomError::InvalidArgument("depth must be at least 1".into()));
    }
    Ok(())
}

/// `½ log(van(Σ²)/van(Σ^{2/N}))`.
pub fn ratio_part(spectrum: &Spectrum, depth: usize) -> Result<f64> {
    check_depth(depth)?;
    spectrum.check_full_rank()?;
    let s = spectrum.values();
    let top = spectrum.largest();
    let mut acc = 0.0;
    for (i, j) in index_pairs(s.len()) {
        acc += metric_eigenvalue(s[i], s[j], top, depth).ln();
    }
    Ok(0.5 * acc)
}

/// `S = (N−1) log c_d + ½ Σ_{i<j} log((σ_i² − σ_j²)/(σ_i^{2/N} − σ_j^{2/N}))`.
pub fn entropy(spectrum: &Spectrum, depth: usize, convention: HaarConvention) -> Result<EntropyValue> {
    let ratio = ratio_part(spectrum, depth)?;
    let constant = (depth - 1) as f64 * log_haar_volume_od(spectrum.dim(), convention);
    Ok(EntropyValue {
        total: constant + ratio,
        constant_part: constant,
        ratio_part: ratio,
        convention,
    })
}

/// `½ log(van(Σ²)/van(log Σ²))`.
///
/// Coincident pairs contribute `log σ²`, the limit of the pair quotient.
pub fn entropy_infinite(spectrum: &Spectrum) -> Result<f64> {
    spectrum.check_full_rank()?;
    let s = spectrum.values();
    let top = spectrum.largest();
    let mut acc = 0.0;
    for (i, j) in index_pairs(s.len()) {
        let q = if (s[i] - s[j]).abs() < TAU_COINC * top {
            let m = 0.5 * (s[i] + s[j]);
            m * m
        } else {
            log_quotient(s[i] * s[i], s[j] * s[j])
        };
        acc += q.ln();
    }
    Ok(0.5 * acc)
}

/// `ratio_part − (d(d−1)/4) log N`, which tends to [`entropy_infinite`] as
/// `N → ∞`.
pub fn renormalized_ratio(spectrum: &Spectrum, depth: usize) -> Result<f64> {
    let d = spectrum.dim() as f64;
    Ok(ratio_part(spectrum, depth)? - d * (d - 1.0) / 4.0 * (depth as f64).ln())
}

/// `1/expm1(x) − 1/x`, finite at the origin.
fn recip_expm1_minus_recip(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        -0.5 + x / 12.0 - x * x2 / 720.0 + x * x2 * x2 / 30240.0
    } else {
        1.0 / x.exp_m1() - 1.0 / x
    }
}

/// `∂S/∂σ_k` for every `k`.
pub fn entropy_sigma_gradient(spectrum: &Spectrum, depth: usize) -> Result<Vec<f64>> {
    check_depth(depth)?;
    spectrum.check_full_rank()?;
    spectrum.check_distinct()?;
    let s = spectrum.values();
    let n = depth as f64;
    let grad = (0..s.len())
        .map(|k| {
            let sum: f64 = (0..s.len())
                .filter(|&j| j != k)
                .map(|j| {
                    let t = (s[j] / s[k]).ln();
                    -2.0 * recip_expm1_minus_recip(2.0 * t)
                        + (2.0 / n) * recip_expm1_minus_recip(2.0 * t / n)
                })
                .sum();
            0.5 * sum / s[k]
        })
        .collect();
    Ok(grad)
}

/// `Q_N diag(∂S/∂σ) Q_0ᵀ`, the Euclidean gradient of `S` at `X`.
pub fn entropy_gradient(svd: &SvdTriple, depth: usize) -> Result<SquareMatrix> {
    let g = entropy_sigma_gradient(&svd.spectrum, depth)?;
    Ok(svd.compose_diagonal(&g))
}

/// `c_d^{N−1} √(van(Σ²)/van(Σ^{2/N}))`.
pub fn orbit_volume_formula(spectrum: &Spectrum, depth: usize, convention: HaarConvention) -> Result<f64> {
    Ok(entropy(spectrum, depth, convention)?.total.exp())
}

fn rotation(theta: f64) -> SquareMatrix {
    let (s, c) = theta.sin_cos();
    SquareMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn rotation_derivative(theta: f64) -> SquareMatrix {
    let (s, c) = theta.sin_cos();
    SquareMatrix::from_row_slice(2, 2, &[-s, -c, c, -s])
}

/// `√det` of the Gram matrix of `∂W/∂θ_j` at one point of the gauge orbit
/// of `center`, with `Q_j = R(θ_j) F^{c_j}` and `F = diag(1, −1)`.
fn orbit_integrand(center: &Network, thetas: &[f64], flips: &[bool]) -> f64 {
    let n = center.depth();
    let flip = SquareMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let id = SquareMatrix::identity(2, 2);
    let q: Vec<SquareMatrix> = (0..=n)
        .map(|s| {
            if s == 0 || s == n {
                id.clone()
            } else if flips[s - 1] {
                rotation(thetas[s - 1]) * &flip
            } else {
                rotation(thetas[s - 1])
            }
        })
        .collect();
    let dq: Vec<SquareMatrix> = (1..n)
        .map(|j| {
            if flips[j - 1] {
                rotation_derivative(thetas[j - 1]) * &flip
            } else {
                rotation_derivative(thetas[j - 1])
            }
        })
        .collect();
    let partials: Vec<TangentVector> = (1..n)
        .map(|j| {
            let slots = (1..=n)
                .map(|p| {
                    let c = center.layer(p);
                    let mut m = SquareMatrix::zeros(2, 2);
                    if p == j {
                        m += &dq[j - 1] * c * q[p - 1].transpose();
                    }
                    if p == j + 1 {
                        m += &q[p] * c * dq[j - 1].transpose();
                    }
                    m
                })
                .collect();
            TangentVector::new(slots).expect("uniform slot shapes")
        })
        .collect();
    let m = partials.len();
    let gram = DMatrix::from_fn(m, m, |a, b| {
        frobenius_ip(&partials[a], &partials[b]).expect("same shapes")
    });
    gram.determinant().max(0.0).sqrt()
}

/// Volume of the gauge orbit of `X` by direct quadrature over `O_2^{N−1}`.
///
/// Each of the `2^{N−1}` components is parametrized by rotation angles and
/// integrated with the periodic trapezoid rule on `grid` points per angle.
/// Only width 2 and depth 2 or 3 are supported.
pub fn orbit_volume_numeric(x: &SquareMatrix, depth: usize, grid: usize) -> Result<f64> {
    if x.nrows() != 2 || x.ncols() != 2 {
        return Err(GeomError::UnsupportedDimension(format!(
            "numeric orbit volume needs width 2, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if !(depth == 2 || depth == 3) {
        return Err(GeomError::UnsupportedDimension(format!(
            "numeric orbit volume needs depth 2 or 3, got {depth}"
        )));
    }
    if grid == 0 {
        return Err(GeomError::InvalidArgument("grid must be positive".into()));
    }
    let center = center_of_fiber(x, depth)?;
    let gauge = depth - 1;
    let h = TAU / grid as f64;
    let mut total = 0.0;
    for mask in 0..(1usize << gauge) {
        let flips: Vec<bool> = (0..gauge).map(|b| mask >> b & 1 == 1).collect();
        let component: f64 = if gauge == 1 {
            (0..grid)
                .into_par_iter()
                .map(|i| orbit_integrand(&center, &[i as f64 * h], &flips))
                .sum::<f64>()
                * h
        } else {
            (0..grid)
                .into_par_iter()
                .map(|i| {
                    (0..grid)
                        .map(|j| orbit_integrand(&center, &[i as f64 * h, j as f64 * h], &flips))
                        .sum::<f64>()
                })
                .sum::<f64>()
                * h
                * h
        };
        total += component;
    }
    Ok(total)
}

/// Tangent vector of the gauge generator `α^{k,l}` acting at layer
/// `1 ≤ p ≤ N−1` in the frame `Q_p`: slot `p+1` is `−W_{p+1} a`, slot `p`
/// is `a W_p`, with `a = Q_p α Q_pᵀ`.
pub fn gauge_direction(w: &Network, frame_p: &SquareMatrix, alpha: &SquareMatrix, p: usize) -> TangentVector {
    let d = w.width();
    let a = frame_p * alpha * frame_p.transpose();
    let mut t = TangentVector::zeros(w.depth(), d);
    *t.slot_mut(p + 1) = -(w.layer(p + 1) * &a);
    *t.slot_mut(p) = &a * w.layer(p);
    t
}

/// Gram matrix of the gauge directions at a balanced network, computed by
/// direct inner products. Rows and columns run over pairs `k < l` in
/// lexicographic order, and over `p = 1..N−1` within each pair.
pub fn gram_orbit(w: &Network) -> Result<DMatrix<f64>> {
    let coords = recover_frames(w)?;
    let d = w.width();
    let n = w.depth();
    let mut dirs = Vec::new();
    for (k, l) in index_pairs(d) {
        let alpha = SkewBasisElement { k, l }.matrix(d);
        for p in 1..n {
            dirs.push(gauge_direction(w, coords.frames.frame(p), &alpha, p));
        }
    }
    let m = dirs.len();
    let mut g = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = frobenius_ip(&dirs[a], &dirs[b])?;
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    Ok(g)
}

/// Block-tridiagonal pattern expected of [`gram_orbit`] for spectrum roots
/// `λ`.
pub fn gram_orbit_pattern(lambda: &[f64], depth: usize) -> DMatrix<f64> {
    let blocks: Vec<DMatrix<f64>> = index_pairs(lambda.len())
        .map(|(k, l)| jacobi_block(lambda[k], lambda[l], depth, Boundary::Interior).matrix)
        .collect();
    let size: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut g = DMatrix::zeros(size, size);
    let mut off = 0;
    for b in blocks {
        let m = b.nrows();
        g.view_mut((off, off), (m, m)).copy_from(&b);
        off += m;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_orthogonal, svd_descending};
    use crate::manifold::{assemble_network, gauge_act, FrameTuple, GaugeElement};
    use nalgebra::{dmatrix, DVector};

    fn diag(v: &[f64]) -> SquareMatrix {
        SquareMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn spectrum(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn interior_block_example() {
        let b = jacobi_block(2.0, 1.0, 3, Boundary::Interior);
        assert_eq!(b.matrix, dmatrix![5.0, -2.0; -2.0, 5.0]);
        let one = jacobi_block(2.0, 1.0, 2, Boundary::Interior);
        assert_eq!(one.matrix, dmatrix![5.0]);
        assert_eq!(jacobi_block(2.0, 1.0, 1, Boundary::Interior).matrix.nrows(), 0);
    }

    #[test]
    fn extended_block_is_neumann_at_equal_lambda() {
        let b = jacobi_block(1.0, 1.0, 3, Boundary::Extended);
        let expected = dmatrix![
            1.0, -1.0, 0.0, 0.0;
            -1.0, 2.0, -1.0, 0.0;
            0.0, -1.0, 2.0, -1.0;
            0.0, 0.0, -1.0, 1.0
        ];
        assert_eq!(b.matrix, expected);
        // constants lie in the kernel
        let ones = DVector::from_element(4, 1.0);
        assert!((&b.matrix * ones).norm() < 1e-15);
    }

    #[test]
    fn chebyshev_example() {
        let b = jacobi_block(2.0, 1.0, 3, Boundary::Interior);
        let e = chebyshev_eigen(&b).unwrap();
        assert!((e.sigma[0] - 3.0).abs() < 1e-12);
        assert!((e.sigma[1] - 7.0).abs() < 1e-12);
        let d = &e.s * &b.matrix * e.s.transpose();
        assert!((d - DMatrix::from_diagonal(&DVector::from_vec(e.sigma.clone()))).norm() < 1e-12);

        let eq = chebyshev_eigen(&jacobi_block(1.0, 1.0, 2, Boundary::Interior)).unwrap();
        assert!((eq.sigma[0] - 2.0).abs() < 1e-15);
        assert!(chebyshev_eigen(&jacobi_block(1.0, 2.0, 2, Boundary::Extended)).is_err());
    }

    #[test]
    fn sine_transform_is_orthogonal_up_to_64() {
        for n in [2, 5, 17, 64] {
            let e = chebyshev_eigen(&jacobi_block(1.3, 0.4, n, Boundary::Interior)).unwrap();
            let id = DMatrix::<f64>::identity(n - 1, n - 1);
            assert!((&e.s * e.s.transpose() - id).norm() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn block_det_examples() {
        assert!((block_det(2.0, 1.0, 3) - 21.0).abs() < 1e-12);
        assert_eq!(block_det(1.5, 1.5, 4), 4.0 * 1.5f64.powi(6));
        assert!((block_det(3.0, 0.5, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn haar_volume_examples() {
        let emb = haar_volume_od(2, HaarConvention::Embedded);
        assert!((emb - 4.0 * 2f64.sqrt() * PI).abs() < 1e-12);
        assert!((haar_volume_od(1, HaarConvention::Embedded) - 2.0).abs() < 1e-14);
        assert!((haar_volume_od(2, HaarConvention::Ponting) - 32.0 * PI).abs() < 1e-11);
    }

    #[test]
    fn convention_parsing() {
        assert_eq!("ponting".parse::<HaarConvention>().unwrap(), HaarConvention::Ponting);
        assert!("other".parse::<HaarConvention>().is_err());
    }

    #[test]
    fn entropy_examples() {
        let s = spectrum(&[2.0, 1.0]);
        let e = entropy(&s, 2, HaarConvention::Embedded).unwrap();
        let expected = (4.0 * 2f64.sqrt() * PI).ln() + 0.5 * 3f64.ln();
        assert!((e.total - expected).abs() < 1e-12);
        assert!((e.total - 3.42690398).abs() < 1e-6);
        assert_eq!(e.total, e.constant_part + e.ratio_part);

        let one = entropy(&spectrum(&[3.0, 1.0, 0.2]), 1, HaarConvention::Embedded).unwrap();
        assert!(one.total.abs() < 1e-12);

        let rep = entropy(&spectrum(&[1.5, 1.5]), 2, HaarConvention::Embedded).unwrap();
        let expected = (4.0 * 2f64.sqrt() * PI).ln() + 0.5 * 3f64.ln();
        assert!((rep.total - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_rank_deficient() {
        let err = entropy(&spectrum(&[1.0, 0.0]), 2, HaarConvention::Embedded).unwrap_err();
        assert_eq!(err.name(), "RankDeficient");
    }

    #[test]
    fn entropy_infinite_examples() {
        let e = std::f64::consts::E;
        let v = entropy_infinite(&spectrum(&[e, 1.0])).unwrap();
        assert!((v - 0.5 * ((e * e - 1.0) / 2.0).ln()).abs() < 1e-14);
        assert_eq!(entropy_infinite(&spectrum(&[3.0])).unwrap(), 0.0);
    }

    #[test]
    fn renormalized_ratio_approaches_infinite_depth() {
        let s = spectrum(&[2.0, 1.0]);
        let target = entropy_infinite(&s).unwrap();
        let err100 = (renormalized_ratio(&s, 100).unwrap() - target).abs();
        let err10k = (renormalized_ratio(&s, 10_000).unwrap() - target).abs();
        assert!(err10k < err100);
        assert!(err10k < 1e-3);
    }

    #[test]
    fn sigma_gradient_examples() {
        let g = entropy_sigma_gradient(&spectrum(&[2.0, 1.0]), 2).unwrap();
        assert!((g[0] - 1.0 / 6.0).abs() < 1e-12);
        let scalar = entropy_sigma_gradient(&spectrum(&[2.5]), 4).unwrap();
        assert_eq!(scalar, vec![0.0]);
        let err = entropy_sigma_gradient(&spectrum(&[1.0, 1.0]), 2).unwrap_err();
        assert_eq!(err.name(), "CoincidentSingularValues");
    }

    #[test]
    fn gradient_is_rotation_equivariant() {
        let (qn, q0) = (haar_orthogonal(3, 1), haar_orthogonal(3, 2));
        let sig = diag(&[2.0, 1.2, 0.5]);
        let at_sigma = entropy_gradient(&svd_descending(&sig).unwrap(), 3).unwrap();
        let x = &qn * &sig * q0.transpose();
        let at_x = entropy_gradient(&svd_descending(&x).unwrap(), 3).unwrap();
        assert!((at_x - &qn * at_sigma * q0.transpose()).norm() < 1e-12);
    }

    #[test]
    fn orbit_volume_formula_examples() {
        let s = spectrum(&[4.0, 1.0]);
        let v = orbit_volume_formula(&s, 2, HaarConvention::Embedded).unwrap();
        assert!((v - 4.0 * 2f64.sqrt() * PI * 5f64.sqrt()).abs() < 1e-10);
        assert!((orbit_volume_formula(&s, 1, HaarConvention::Embedded).unwrap() - 1.0).abs() < 1e-14);
        let d1 = orbit_volume_formula(&spectrum(&[2.0]), 4, HaarConvention::Embedded).unwrap();
        assert!((d1 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_volume_depth_two() {
        let v = orbit_volume_numeric(&diag(&[4.0, 1.0]), 2, 1000).unwrap();
        let expected = 4.0 * 2f64.sqrt() * PI * 5f64.sqrt();
        assert!((v - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn numeric_volume_scope() {
        let err = orbit_volume_numeric(&SquareMatrix::identity(3, 3), 2, 10).unwrap_err();
        assert_eq!(err.name(), "UnsupportedDimension");
        let err = orbit_volume_numeric(&diag(&[4.0, 1.0]), 4, 10).unwrap_err();
        assert_eq!(err.name(), "UnsupportedDimension");
    }

    #[test]
    fn numeric_volume_is_frame_invariant() {
        let x = haar_orthogonal(2, 3) * diag(&[4.0, 1.0]) * haar_orthogonal(2, 4);
        let a = orbit_volume_numeric(&x, 2, 200).unwrap();
        let b = orbit_volume_numeric(&diag(&[4.0, 1.0]), 2, 200).unwrap();
        assert!((a - b).abs() < 1e-9 * b);
    }

    #[test]
    fn gram_orbit_at_center() {
        let c = center_of_fiber(&diag(&[8.0, 1.0]), 3).unwrap();
        let g = gram_orbit(&c).unwrap();
        assert!((g - dmatrix![5.0, -2.0; -2.0, 5.0]).norm() < 1e-12);
    }

    #[test]
    fn gram_orbit_is_gauge_invariant_and_banded() {
        let c = center_of_fiber(&diag(&[8.0, 2.0, 1.0]), 4).unwrap();
        let g = GaugeElement::new(
            (1..4).map(|s| haar_orthogonal(3, s)).collect(),
            3,
        )
        .unwrap();
        let moved = gauge_act(&g, &c).unwrap();
        let a = gram_orbit(&c).unwrap();
        let b = gram_orbit(&moved).unwrap();
        assert!((&a - &b).norm() < 1e-10);
        let lambda: Vec<f64> = [8.0f64, 2.0, 1.0].iter().map(|s| s.powf(0.25)).collect();
        assert!((a - gram_orbit_pattern(&lambda, 4)).norm() < 1e-10);
    }

    #[test]
    fn gram_orbit_rejects_unbalanced() {
        let w = Network::new(vec![diag(&[2.0, 1.0]), diag(&[1.0, 1.0])]).unwrap();
        assert_eq!(gram_orbit(&w).unwrap_err().name(), "NotBalanced");
    }

    #[test]
    fn gram_orbit_random_point() {
        let lambda = [1.4, 0.9, 0.5];
        let w = assemble_network(&lambda, &FrameTuple::random(5, 3, 21)).unwrap();
        let g = gram_orbit(&w).unwrap();
        assert!((g - gram_orbit_pattern(&lambda, 5)).norm() < 1e-10);
    }
}
