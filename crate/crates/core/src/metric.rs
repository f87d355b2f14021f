//! The metric operator `𝒜_{N,X}` and the metric `g^N(Z₁, Z₂) = Tr(Z₁ᵀ 𝒜⁻¹ Z₂)`.
//!
//! `𝒜_{N,X}(P) = Σ_{p=1}^N (XXᵀ)^{(N−p)/N} P (XᵀX)^{(p−1)/N}` is diagonal in
//! the rank-one basis `q_{N,k} q_{0,l}ᵀ` with eigenvalue
//! `ν_{kl} = (σ_k² − σ_l²)/(σ_k^{2/N} − σ_l^{2/N})`, and this module always
//! applies it in that form.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::linalg::{svd_descending, vandermonde, SquareMatrix, Spectrum, SvdTriple};
use crate::tolerance::TAU_COINC;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// `(σ_i² − σ_j²)/(σ_i^{2/N} − σ_j^{2/N})` written as
/// `σ^{2−2/N}·expm1(2t)/expm1(2t/N)` with `t = ln(σ_lo/σ_hi)`, which stays
/// accurate for nearby values and large `N`. Equal arguments give the
/// limit `N σ^{2−2/N}`.
pub(crate) fn pair_ratio(si: f64, sj: f64, depth: usize) -> f64 {
    let n = depth as f64;
    let (hi, lo) = if si >= sj { (si, sj) } else { (sj, si) };
    let scale = hi.powf(2.0 - 2.0 / n);
    let t = (lo / hi).ln();
    if t == 0.0 {
        return n * scale;
    }
    scale * (2.0 * t).exp_m1() / (2.0 * t / n).exp_m1()
}

/// Eigenvalue of `𝒜` on `q_{N,k} q_{0,l}ᵀ`, using the diagonal value when the
/// pair is within the coincidence threshold of `σ_1`.
pub fn metric_eigenvalue(sk: f64, sl: f64, sigma_max: f64, depth: usize) -> f64 {
    if (sk - sl).abs() < TAU_COINC * sigma_max {
        let s = 0.5 * (sk + sl);
        pair_ratio(s, s, depth)
    } else {
        pair_ratio(sk, sl, depth)
    }
}

#[derive(Debug, Clone)]
pub struct MetricOperator {
    svd: SvdTriple,
    depth: usize,
    nu: DMatrix<f64>,
}

impl MetricOperator {
    pub fn new(x: &SquareMatrix, depth: usize) -> Result<Self> {
        Self::from_svd(svd_descending(x)?, depth)
    }

    pub fn from_svd(svd: SvdTriple, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(GeomError::InvalidArgument("depth must be at least 1".into()));
        }
        svd.spectrum.check_full_rank()?;
        let s = svd.spectrum.values();
        let d = s.len();
        let nu = DMatrix::from_fn(d, d, |k, l| metric_eigenvalue(s[k], s[l], s[0], depth));
        Ok(MetricOperator { svd, depth, nu })
    }

    pub fn svd(&self) -> &SvdTriple {
        &self.svd
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.svd.dim()
    }

    /// Table `ν_{kl}`.
    pub fn eigen_table(&self) -> &DMatrix<f64> {
        &self.nu
    }

    fn check(&self, p: &SquareMatrix) -> Result<()> {
        let d = self.dim();
        if p.shape() != (d, d) {
            return Err(GeomError::shape(
                format!("{d}x{d}"),
                format!("{}x{}", p.nrows(), p.ncols()),
            ));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        Ok(())
    }

    /// `Q_N (ν ⊙ M) Q_0ᵀ` with `M = Q_Nᵀ P Q_0`, or entrywise division for
    /// the inverse.
    pub fn apply(&self, p: &SquareMatrix, direction: Direction) -> Result<SquareMatrix> {
        self.check(p)?;
        let m = self.svd.q_left.transpose() * p * &self.svd.q_right;
        let scaled = match direction {
            Direction::Forward => m.component_mul(&self.nu),
            Direction::Inverse => m.component_div(&self.nu),
        };
        Ok(&self.svd.q_left * scaled * self.svd.q_right.transpose())
    }

    /// `g^N(Z₁, Z₂) = Tr(Z₁ᵀ 𝒜⁻¹ Z₂)`.
    pub fn metric(&self, z1: &SquareMatrix, z2: &SquareMatrix) -> Result<f64> {
        self.check(z1)?;
        Ok(z1.dot(&self.apply(z2, Direction::Inverse)?))
    }

    /// Gram matrix of `g^N` on the standard basis `E_ij` of `ℳ_d`, ordered
    /// column-major.
    pub fn gram_standard_basis(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut g = DMatrix::zeros(d * d, d * d);
        for col in 0..d * d {
            let mut e = SquareMatrix::zeros(d, d);
            e[col] = 1.0;
            let img = self.apply(&e, Direction::Inverse)?;
            for row in 0..d * d {
                g[(row, col)] = img[row];
            }
        }
        Ok(g)
    }
}

/// `det(Σ²)^{(N−1)/(2N)} · |van(Σ^{2/N})|`.
pub fn volume_density(spectrum: &Spectrum, depth: usize) -> Result<f64> {
    if depth == 0 {
        return Err(GeomError::InvalidArgument("depth must be at least 1".into()));
    }
    spectrum.check_full_rank()?;
    let n = depth as f64;
    let log_det_sq: f64 = spectrum.values().iter().map(|s| 2.0 * s.ln()).sum();
    let roots: Vec<f64> = spectrum.values().iter().map(|s| s.powf(2.0 / n)).collect();
    Ok((log_det_sq * (n - 1.0) / (2.0 * n)).exp() * vandermonde(&roots).abs())
}

/// Fitted exponent `e` in
/// `√det g^N · |J_svd| / |van(Σ^{2/N})| ∝ det(Σ)^e`, for width 2.
#[derive(Debug, Clone, Serialize)]
pub struct DensityFit {
    pub depth: usize,
    pub samples: usize,
    pub fitted_exponent: f64,
    pub stated_exponent: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

/// `X(s₁, s₂, θ, φ) = R(θ) diag(s₁, s₂) R(φ)ᵀ`.
fn svd_chart(c: &[f64; 4]) -> SquareMatrix {
    let rot = |a: f64| SquareMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()]);
    let diag = SquareMatrix::from_row_slice(2, 2, &[c[0], 0.0, 0.0, c[1]]);
    rot(c[2]) * diag * rot(c[3]).transpose()
}

/// `|det ∂X/∂(s₁, s₂, θ, φ)|` by central differences.
fn svd_chart_jacobian(c: &[f64; 4]) -> f64 {
    let mut jac = DMatrix::zeros(4, 4);
    for j in 0..4 {
        let h = 1e-6 * c[j].abs().max(1.0);
        let mut plus = *c;
        let mut minus = *c;
        plus[j] += h;
        minus[j] -= h;
        let diff = (svd_chart(&plus) - svd_chart(&minus)) / (2.0 * h);
        for i in 0..4 {
            jac[(i, j)] = diff[i];
        }
    }
    jac.determinant().abs()
}

/// Least-squares fit of the density exponent at `samples` random width-2
/// spectra. The Riemannian density is computed numerically from the Gram
/// matrix of `g^N` and a finite-difference chart Jacobian, independently of
/// [`volume_density`].
pub fn density_exponent_fit(depth: usize, samples: usize, seed: u64) -> Result<DensityFit> {
    if depth == 0 || samples < 2 {
        return Err(GeomError::InvalidArgument(
            "need depth ≥ 1 and at least two samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = depth as f64;
    let mut pts = Vec::with_capacity(samples);
    while pts.len() < samples {
        let a: f64 = rng.random_range(0.2..3.0);
        let b: f64 = rng.random_range(0.2..3.0);
        if (a - b).abs() < 0.05 {
            continue;
        }
        let (s1, s2) = if a > b { (a, b) } else { (b, a) };
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let ph: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let c = [s1, s2, th, ph];
        let x = svd_chart(&c);
        let op = MetricOperator::new(&x, depth)?;
        let root_det = op.gram_standard_basis()?.determinant().sqrt();
        let jac = svd_chart_jacobian(&c);
        let van = (s2.powf(2.0 / n) - s1.powf(2.0 / n)).abs();
        pts.push(((s1 * s2).ln(), (root_det * jac / van).ln()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok(DensityFit {
        depth,
        samples,
        fitted_exponent: slope,
        stated_exponent: (n - 1.0) / n,
        intercept,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_orthogonal;
    use nalgebra::{dmatrix, DVector};

    fn diag(v: &[f64]) -> SquareMatrix {
        SquareMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn scalar_operator_is_depth_times_identity() {
        for n in 1..6 {
            let op = MetricOperator::new(&dmatrix![1.0], n).unwrap();
            let out = op.apply(&dmatrix![0.3], Direction::Forward).unwrap();
            assert!((out[(0, 0)] - 0.3 * n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn eigenvalues_for_diag_four_one() {
        let op = MetricOperator::new(&diag(&[4.0, 1.0]), 2).unwrap();
        let svd = op.svd();
        let off = op.apply(&svd.rank_one(0, 1), Direction::Forward).unwrap();
        assert!((off - svd.rank_one(0, 1) * 5.0).norm() < 1e-12);
        let on = op.apply(&svd.rank_one(0, 0), Direction::Forward).unwrap();
        assert!((on - svd.rank_one(0, 0) * 8.0).norm() < 1e-12);
    }

    #[test]
    fn inverse_undoes_forward() {
        let x = haar_orthogonal(3, 1) * diag(&[2.0, 1.0, 0.3]) * haar_orthogonal(3, 2);
        let op = MetricOperator::new(&x, 4).unwrap();
        let p = haar_orthogonal(3, 9);
        let back = op
            .apply(&op.apply(&p, Direction::Forward).unwrap(), Direction::Inverse)
            .unwrap();
        assert!((back - p).norm() < 1e-10);
    }

    #[test]
    fn eigen_table_is_continuous_at_coincidence() {
        let s: f64 = 1.7;
        for n in 1..8 {
            let limit = n as f64 * s.powf(2.0 - 2.0 / n as f64);
            let near = pair_ratio(s, s * (1.0 + 1e-6), n);
            assert!((near - limit).abs() < 1e-5 * limit, "n={n}");
        }
    }

    #[test]
    fn repeated_values_use_limit() {
        let op = MetricOperator::new(&SquareMatrix::identity(2, 2), 3).unwrap();
        assert!(op.eigen_table().iter().all(|v| (v - 3.0).abs() < 1e-14));
    }

    #[test]
    fn metric_examples() {
        let x = haar_orthogonal(2, 4) * diag(&[3.0, 0.5]) * haar_orthogonal(2, 5);
        let n = 3;
        let op = MetricOperator::new(&x, n).unwrap();
        let svd = op.svd();
        let sk = svd.spectrum.values()[0];
        let z = svd.rank_one(0, 0) * ((n as f64).sqrt() * sk.powf(1.0 - 1.0 / n as f64));
        assert!((op.metric(&z, &z).unwrap() - 1.0).abs() < 1e-12);
        assert!(op.metric(&svd.rank_one(0, 1), &svd.rank_one(1, 0)).unwrap().abs() < 1e-14);

        let scalar = MetricOperator::new(&dmatrix![2.0], 2).unwrap();
        let g = scalar.metric(&dmatrix![1.0], &dmatrix![1.0]).unwrap();
        assert!((g - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_base_rejected() {
        let err = MetricOperator::new(&diag(&[1.0, 0.0]), 2).unwrap_err();
        assert_eq!(err.name(), "RankDeficient");
    }

    #[test]
    fn volume_density_examples() {
        let v = volume_density(&Spectrum::new(vec![2.0]).unwrap(), 2).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-14);
        let s = Spectrum::new(vec![3.0, 2.0]).unwrap();
        assert!((volume_density(&s, 1).unwrap() - 5.0).abs() < 1e-12);
        let rep = Spectrum::new(vec![2.0, 2.0]).unwrap();
        assert_eq!(volume_density(&rep, 3).unwrap(), 0.0);
    }

    #[test]
    fn chart_jacobian_matches_closed_form() {
        let c = [2.0, 0.5, 0.3, 1.1];
        assert!((svd_chart_jacobian(&c) - (4.0 - 0.25)).abs() < 1e-6);
    }

    #[test]
    fn density_fit_runs() {
        let fit = density_exponent_fit(2, 12, 1).unwrap();
        assert!(fit.fitted_exponent.is_finite());
        assert_eq!(fit.stated_exponent, 0.5);
    }
}
