//! An orthonormal basis of the tangent space of the balanced manifold, and
//! the check that `φ(W) = W_N⋯W_1` is a Riemannian submersion onto
//! `(ℳ_d, g^N)`.
//!
//! With frames `Q_0, …, Q_N` and columns `q_{s,j}` of `Q_s`, the basis
//! consists of
//!
//! * `v^k`, `v^k_s = q_{s,k} q_{s−1,k}ᵀ / √N`;
//! * `u^{k,l,0}` and `u^{k,l,N}`, geometric profiles across depth that move
//!   the end frames;
//! * `u^{k,l,p}`, `1 ≤ p ≤ N−1`, sine profiles that span the gauge
//!   directions and lie in the kernel of `φ_*`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::entropy::{jacobi_block, Boundary};
use crate::error::{GeomError, Result};
use crate::linalg::{
    frobenius_ip, index_pairs, power_quotient, SkewBasisElement, SquareMatrix, TangentVector,
};
use crate::manifold::{recover_frames, BalancedCoordinates, Network};
use crate::metric::MetricOperator;
use crate::report::{Check, VerifyReport};
use crate::tolerance::TAU_COINC;

fn lambda_matrix(lambda: &[f64]) -> SquareMatrix {
    SquareMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(lambda))
}

/// Tangent vector at the center generated by `α^{k,l}` acting at frame `p`:
/// slot `p+1` holds `−Λα` and slot `p` holds `αΛ`, whichever exist.
pub fn center_tangent_c(k: usize, l: usize, p: usize, lambda: &[f64], depth: usize) -> Result<TangentVector> {
    let d = lambda.len();
    let alpha = SkewBasisElement::new(k, l, d)?.matrix(d);
    if p > depth {
        return Err(GeomError::IndexError(format!("frame index {p} exceeds depth {depth}")));
    }
    let lam = lambda_matrix(lambda);
    let mut t = TangentVector::zeros(depth, d);
    if p < depth {
        *t.slot_mut(p + 1) = -(&lam * &alpha);
    }
    if p >= 1 {
        *t.slot_mut(p) = &alpha * &lam;
    }
    Ok(t)
}

/// `m^k = (e_k e_kᵀ, …, e_k e_kᵀ)`, the direction that scales `λ_k`.
pub fn center_tangent_m(k: usize, width: usize, depth: usize) -> Result<TangentVector> {
    if k >= width {
        return Err(GeomError::IndexError(format!("k={k} out of range for width {width}")));
    }
    let mut e = SquareMatrix::zeros(width, width);
    e[(k, k)] = 1.0;
    TangentVector::new(vec![e; depth])
}

/// Matrix `P` with `P h̃ Pᵀ = I_{N+1}` for the extended block `h̃`.
#[derive(Debug, Clone)]
pub struct PMatrix {
    pub lk: f64,
    pub ll: f64,
    pub depth: usize,
    pub matrix: DMatrix<f64>,
}

/// Boundary norm `½(λ_l² − λ_k²)(λ_l^{2N} − λ_k^{2N})`.
pub fn boundary_norm(lk: f64, ll: f64, depth: usize) -> f64 {
    let n = depth as i32;
    0.5 * (ll * ll - lk * lk) * (ll.powi(2 * n) - lk.powi(2 * n))
}

/// Rows: `(λ_k^q λ_l^{N−q})_q/√σ_0`, sine rows `√(2/N) sin(pqπ/N)/√σ_p` on the
/// interior columns, and `(λ_k^{N−q} λ_l^q)_q/√σ_N`.
pub fn p_matrix(lk: f64, ll: f64, depth: usize) -> Result<PMatrix> {
    if depth == 0 {
        return Err(GeomError::InvalidArgument("depth must be at least 1".into()));
    }
    if (lk - ll).abs() < TAU_COINC * lk.max(ll) {
        return Err(GeomError::CoincidentSingularValues {
            k: 0,
            l: 1,
            gap: lk - ll,
        });
    }
    let n = depth;
    let nf = n as f64;
    let sigma_end = boundary_norm(lk, ll, n);
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for q in 0..=n {
        m[(0, q)] = lk.powi(q as i32) * ll.powi((n - q) as i32) / sigma_end.sqrt();
        m[(n, q)] = lk.powi((n - q) as i32) * ll.powi(q as i32) / sigma_end.sqrt();
    }
    let scale = (2.0 / nf).sqrt();
    for p in 1..n {
        let sigma_p = lk * lk + ll * ll - 2.0 * lk * ll * (p as f64 * PI / nf).cos();
        for q in 1..n {
            m[(p, q)] = scale * ((p * q) as f64 * PI / nf).sin() / sigma_p.sqrt();
        }
    }
    Ok(PMatrix {
        lk,
        ll,
        depth,
        matrix: m,
    })
}

/// Which basis element a vector is. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisLabel {
    V { k: usize },
    U { k: usize, l: usize, p: usize },
}

impl BasisLabel {
    /// Whether `φ_*` is injective on the element, i.e. it is not a gauge
    /// direction.
    pub fn is_horizontal(&self, depth: usize) -> bool {
        match *self {
            BasisLabel::V { .. } => true,
            BasisLabel::U { p, .. } => p == 0 || p == depth,
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BasisLabel::V { k } => write!(f, "v[{}]", k + 1),
            BasisLabel::U { k, l, p } => write!(f, "u[{},{},{}]", k + 1, l + 1, p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabelledVector {
    pub label: BasisLabel,
    pub vector: TangentVector,
}

#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    pub coords: BalancedCoordinates,
    pub vectors: Vec<LabelledVector>,
}

impl OrthonormalBasis {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.vectors.len();
        let mut g = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v = frobenius_ip(&self.vectors[a].vector, &self.vectors[b].vector)
                    .expect("basis vectors share a shape");
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }
}

/// `d + (N+1)d(d−1)/2 = d² + (N−1)d(d−1)/2`, the dimension of the tangent
/// space of the balanced manifold.
pub fn basis_count(width: usize, depth: usize) -> usize {
    width + (depth + 1) * width * (width - 1) / 2
}

fn outer(frames: &BalancedCoordinates, s: usize, i: usize, t: usize, j: usize) -> SquareMatrix {
    frames.frames.frame(s).column(i) * frames.frames.frame(t).column(j).transpose()
}

/// Orthonormal basis of `T_W B` at a balanced full-rank network with
/// distinct singular values.
pub fn onb_vectors(w: &Network) -> Result<OrthonormalBasis> {
    let coords = recover_frames(w)?;
    coords.spectrum.check_distinct()?;
    let n = w.depth();
    let d = w.width();
    let nf = n as f64;
    let lam = &coords.lambda;
    let mut vectors = Vec::with_capacity(basis_count(d, n));

    for k in 0..d {
        let slots = (1..=n)
            .map(|s| outer(&coords, s, k, s - 1, k) / nf.sqrt())
            .collect();
        vectors.push(LabelledVector {
            label: BasisLabel::V { k },
            vector: TangentVector::new(slots)?,
        });
    }

    for (k, l) in index_pairs(d) {
        let (lk, ll) = (lam[k], lam[l]);
        let c = 1.0 / power_quotient(lk * lk, ll * ll, nf).sqrt();

        let slots = (1..=n)
            .map(|s| outer(&coords, s, l, s - 1, k) * (c * lk.powi(s as i32 - 1) * ll.powi((n - s) as i32)))
            .collect();
        vectors.push(LabelledVector {
            label: BasisLabel::U { k, l, p: 0 },
            vector: TangentVector::new(slots)?,
        });

        for p in 1..n {
            let sigma_p = lk * lk + ll * ll - 2.0 * lk * ll * (p as f64 * PI / nf).cos();
            let norm = (nf * sigma_p).sqrt();
            let slots = (1..=n)
                .map(|s| {
                    let lo = ((s - 1) * p) as f64 * PI / nf;
                    let hi = (s * p) as f64 * PI / nf;
                    let a_kl = lk * lo.sin() - ll * hi.sin();
                    let a_lk = ll * lo.sin() - lk * hi.sin();
                    (outer(&coords, s, k, s - 1, l) * a_kl - outer(&coords, s, l, s - 1, k) * a_lk)
                        / norm
                })
                .collect();
            vectors.push(LabelledVector {
                label: BasisLabel::U { k, l, p },
                vector: TangentVector::new(slots)?,
            });
        }

        let slots = (1..=n)
            .map(|s| outer(&coords, s, k, s - 1, l) * (c * lk.powi((n - s) as i32) * ll.powi(s as i32 - 1)))
            .collect();
        vectors.push(LabelledVector {
            label: BasisLabel::U { k, l, p: n },
            vector: TangentVector::new(slots)?,
        });
    }

    Ok(OrthonormalBasis { coords, vectors })
}

fn check_tangent_shape(w: &Network, t: &TangentVector) -> Result<()> {
    if t.depth() != w.depth() || t.width() != w.width() {
        return Err(GeomError::shape(
            format!("depth {} width {}", w.depth(), w.width()),
            format!("depth {} width {}", t.depth(), t.width()),
        ));
    }
    Ok(())
}

/// `φ_* t = Σ_p W_N⋯W_{p+1} t_p W_{p−1}⋯W_1`.
pub fn pushforward_dphi(w: &Network, t: &TangentVector) -> Result<SquareMatrix> {
    check_tangent_shape(w, t)?;
    let d = w.width();
    let mut out = SquareMatrix::zeros(d, d);
    for (p, (above, below)) in w.partial_products().iter().enumerate() {
        out += above * t.slot(p + 1) * below;
    }
    Ok(out)
}

/// Largest `‖δ(W_{p+1}ᵀW_{p+1} − W_pW_pᵀ)‖_F` along `t`; zero exactly when
/// `t` is tangent to the balanced manifold.
pub fn tangency_residual(w: &Network, t: &TangentVector) -> Result<f64> {
    check_tangent_shape(w, t)?;
    let mut worst: f64 = 0.0;
    for p in 1..w.depth() {
        let (wp, wq) = (w.layer(p), w.layer(p + 1));
        let (tp, tq) = (t.slot(p), t.slot(p + 1));
        let delta = tq.transpose() * wq + wq.transpose() * tq - tp * wp.transpose() - wp * tp.transpose();
        worst = worst.max(delta.norm());
    }
    Ok(worst)
}

/// Kernel, isometry and closed-form checks for `φ_*` on the basis.
#[derive(Debug, Clone, Serialize)]
pub struct SubmersionReport {
    /// `max ‖φ_* u^{k,l,p}‖`, `1 ≤ p ≤ N−1`.
    pub kernel: f64,
    /// `max |g^N(φ_* e_i, φ_* e_j) − δ_ij|` over horizontal basis elements.
    pub isometry: f64,
    /// Largest deviation of `φ_* v^k`, `φ_* u^{k,l,0}`, `φ_* u^{k,l,N}` from
    /// their rank-one closed forms.
    pub closed_form: f64,
    pub kernel_dimension: usize,
    pub horizontal_dimension: usize,
}

impl SubmersionReport {
    pub fn to_verify_report(&self, tolerance: f64) -> VerifyReport {
        let mut r = VerifyReport::new("submersion");
        r.push(Check::below("kernel", self.kernel, tolerance));
        r.push(Check::below("isometry", self.isometry, tolerance));
        r.push(Check::below("closed_form", self.closed_form, tolerance));
        r
    }
}

pub fn submersion_report(w: &Network) -> Result<SubmersionReport> {
    let basis = onb_vectors(w)?;
    let n = w.depth();
    let nf = n as f64;
    let lam = &basis.coords.lambda;
    let frames = &basis.coords.frames;
    let qn = frames.frame(n);
    let q0 = frames.frame(0);
    let rank_one = |i: usize, j: usize| qn.column(i) * q0.column(j).transpose();
    let op = MetricOperator::new(&crate::manifold::end_to_end(w), n)?;

    let mut kernel: f64 = 0.0;
    let mut closed_form: f64 = 0.0;
    let mut horizontal = Vec::new();
    let mut kernel_dimension = 0;
    for lv in &basis.vectors {
        let image = pushforward_dphi(w, &lv.vector)?;
        match lv.label {
            BasisLabel::U { p, .. } if p != 0 && p != n => {
                kernel = kernel.max(image.norm());
                kernel_dimension += 1;
            }
            label => {
                let expected = match label {
                    BasisLabel::V { k } => rank_one(k, k) * (nf.sqrt() * lam[k].powi(n as i32 - 1)),
                    BasisLabel::U { k, l, p } => {
                        let coef = power_quotient(lam[k] * lam[k], lam[l] * lam[l], nf).sqrt();
                        if p == 0 {
                            rank_one(l, k) * coef
                        } else {
                            rank_one(k, l) * coef
                        }
                    }
                };
                let scale = expected.norm().max(1.0);
                closed_form = closed_form.max((&image - &expected).norm() / scale);
                horizontal.push(image);
            }
        }
    }

    let mut isometry: f64 = 0.0;
    for (i, a) in horizontal.iter().enumerate() {
        for (j, b) in horizontal.iter().enumerate().skip(i) {
            let g = op.metric(a, b)?;
            let target = if i == j { 1.0 } else { 0.0 };
            isometry = isometry.max((g - target).abs());
        }
    }

    Ok(SubmersionReport {
        kernel,
        isometry,
        closed_form,
        kernel_dimension,
        horizontal_dimension: horizontal.len(),
    })
}

/// The extended Jacobi block of the pair `(k, l)`, i.e. the Gram matrix of
/// `c^{k,l,0}, …, c^{k,l,N}` at the center.
pub fn extended_gram(lk: f64, ll: f64, depth: usize) -> DMatrix<f64> {
    jacobi_block(lk, ll, depth, Boundary::Extended).matrix
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_orthogonal;
    use crate::manifold::{
        assemble_network, center_of_fiber, end_to_end, gauge_act, FrameTuple, GaugeElement,
    };
    use nalgebra::{dmatrix, DVector};

    fn diag(v: &[f64]) -> SquareMatrix {
        SquareMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn c_vectors_at_center() {
        let lambda = [2.0, 1.0];
        let c0 = center_tangent_c(0, 1, 0, &lambda, 3).unwrap();
        assert!(c0.slot(2).norm() == 0.0 && c0.slot(3).norm() == 0.0);
        let alpha = SkewBasisElement::new(0, 1, 2).unwrap().matrix(2);
        assert_eq!(c0.slot(1), &-(diag(&lambda) * &alpha));
        assert!((frobenius_ip(&c0, &c0).unwrap() - 2.5).abs() < 1e-14);

        let c1 = center_tangent_c(0, 1, 1, &lambda, 3).unwrap();
        assert!((frobenius_ip(&c1, &c1).unwrap() - 5.0).abs() < 1e-14);

        let c3 = center_tangent_c(0, 1, 3, &lambda, 3).unwrap();
        assert_eq!(c3.slot(3), &(&alpha * diag(&lambda)));
        assert!(center_tangent_c(1, 1, 0, &lambda, 3).is_err());
    }

    #[test]
    fn extended_gram_matches_c_vectors() {
        let lambda = [1.7, 0.6, 0.3];
        let n = 4;
        for (k, l) in index_pairs(3) {
            let cs: Vec<TangentVector> = (0..=n)
                .map(|p| center_tangent_c(k, l, p, &lambda, n).unwrap())
                .collect();
            let g = DMatrix::from_fn(n + 1, n + 1, |a, b| frobenius_ip(&cs[a], &cs[b]).unwrap());
            assert!((g - extended_gram(lambda[k], lambda[l], n)).norm() < 1e-13);
            for j in 0..3 {
                let m = center_tangent_m(j, 3, n).unwrap();
                for c in &cs {
                    assert_eq!(frobenius_ip(&m, c).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn p_matrix_example() {
        let p = p_matrix(2.0, 1.0, 2).unwrap();
        let s0 = 22.5f64.sqrt();
        let row0 = [1.0 / s0, 2.0 / s0, 4.0 / s0];
        for q in 0..3 {
            assert!((p.matrix[(0, q)] - row0[q]).abs() < 1e-14);
        }
        assert!((boundary_norm(2.0, 1.0, 2) - 22.5).abs() < 1e-14);
        let h = extended_gram(2.0, 1.0, 2);
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((&p.matrix * h * p.matrix.transpose() - id).norm() < 1e-12);
    }

    #[test]
    fn geometric_profile_identities() {
        let (lk, ll, n) = (2.0f64, 1.0f64, 2usize);
        let h = extended_gram(lk, ll, n);
        let a = DVector::from_fn(n + 1, |p, _| lk.powi(p as i32) * ll.powi((n - p) as i32));
        let b = DVector::from_fn(n + 1, |p, _| lk.powi((n - p) as i32) * ll.powi(p as i32));
        let ha = &h * &a;
        assert!((ha - DVector::from_vec(vec![-1.5, 0.0, 6.0])).norm() < 1e-14);
        assert!((b.transpose() * &h * &a)[(0, 0)].abs() < 1e-13);
    }

    #[test]
    fn p_matrix_rejects_coincident() {
        let err = p_matrix(1.0, 1.0, 3).unwrap_err();
        assert_eq!(err.name(), "CoincidentSingularValues");
    }

    #[test]
    fn scalar_basis() {
        let w = Network::new(vec![dmatrix![1.5], dmatrix![1.5], dmatrix![1.5]]).unwrap();
        let b = onb_vectors(&w).unwrap();
        assert_eq!(b.len(), 1);
        for s in 1..=3 {
            assert!((b.vectors[0].vector.slot(s)[(0, 0)].abs() - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        }
        assert!((b.gram()[(0, 0)] - 1.0).abs() < 1e-14);
        let r = submersion_report(&w).unwrap();
        assert_eq!(r.kernel, 0.0);
        assert!(r.isometry < 1e-12);
    }

    #[test]
    fn endpoint_profile_example() {
        let w = center_of_fiber(&diag(&[4.0, 1.0]), 2).unwrap();
        let b = onb_vectors(&w).unwrap();
        let u0 = b
            .vectors
            .iter()
            .find(|v| v.label == BasisLabel::U { k: 0, l: 1, p: 0 })
            .unwrap();
        let r5 = 5f64.sqrt();
        assert!((u0.vector.slot(1)[(1, 0)].abs() - 1.0 / r5).abs() < 1e-14);
        assert!((u0.vector.slot(2)[(1, 0)].abs() - 2.0 / r5).abs() < 1e-14);
        assert!((u0.vector.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn basis_is_orthonormal_and_tangent() {
        let lambda = [1.6, 1.1, 0.5];
        for n in [2, 3, 5] {
            let w = assemble_network(&lambda, &FrameTuple::random(n, 3, n as u64)).unwrap();
            let b = onb_vectors(&w).unwrap();
            assert_eq!(b.len(), basis_count(3, n));
            let id = DMatrix::<f64>::identity(b.len(), b.len());
            assert!((b.gram() - id).norm() < 1e-10, "n={n}");
            for v in &b.vectors {
                assert!(tangency_residual(&w, &v.vector).unwrap() < 1e-10, "{}", v.label);
            }
        }
    }

    #[test]
    fn submersion_at_center() {
        let w = center_of_fiber(&diag(&[16.0, 1.0]), 2).unwrap();
        let r = submersion_report(&w).unwrap();
        assert!(r.kernel < 1e-9 && r.isometry < 1e-9 && r.closed_form < 1e-9, "{r:?}");
        assert_eq!(r.kernel_dimension, 1);
        assert_eq!(r.horizontal_dimension, 4);
    }

    #[test]
    fn submersion_is_gauge_invariant() {
        let c = center_of_fiber(&diag(&[16.0, 1.0]), 3).unwrap();
        let g = GaugeElement::new(vec![haar_orthogonal(2, 1), haar_orthogonal(2, 2)], 2).unwrap();
        let a = submersion_report(&c).unwrap();
        let b = submersion_report(&gauge_act(&g, &c).unwrap()).unwrap();
        assert!((a.isometry - b.isometry).abs() < 1e-9);
        assert!(b.kernel < 1e-9 && b.closed_form < 1e-9);
    }

    #[test]
    fn gauge_directions_are_in_the_kernel() {
        let lambda = [2.0, 1.0];
        let w = center_of_fiber(&diag(&[8.0, 1.0]), 3).unwrap();
        for p in 1..3 {
            let c = center_tangent_c(0, 1, p, &lambda, 3).unwrap();
            assert!(pushforward_dphi(&w, &c).unwrap().norm() < 1e-12);
        }
        let single = Network::new(vec![dmatrix![1.0, 2.0; 0.0, 1.0]]).unwrap();
        let t = TangentVector::new(vec![dmatrix![0.5, 0.0; 1.0, 0.0]]).unwrap();
        assert_eq!(pushforward_dphi(&single, &t).unwrap(), dmatrix![0.5, 0.0; 1.0, 0.0]);
    }

    #[test]
    fn pushforward_matches_finite_difference() {
        let w = assemble_network(&[1.3, 0.7], &FrameTuple::random(3, 2, 5)).unwrap();
        let t = TangentVector::new((1..=3).map(|s| haar_orthogonal(2, 40 + s)).collect()).unwrap();
        let h = 1e-6;
        let shift = |c: f64| {
            Network::new(
                w.layers()
                    .iter()
                    .zip(t.slots())
                    .map(|(a, b)| a + b * c)
                    .collect(),
            )
            .unwrap()
        };
        let fd = (end_to_end(&shift(h)) - end_to_end(&shift(-h))) / (2.0 * h);
        assert!((fd - pushforward_dphi(&w, &t).unwrap()).norm() < 1e-8);
    }

    #[test]
    fn onb_rejects_repeated_spectrum() {
        let w = center_of_fiber(&SquareMatrix::identity(2, 2), 2).unwrap();
        assert_eq!(onb_vectors(&w).unwrap_err().name(), "CoincidentSingularValues");
    }
}
