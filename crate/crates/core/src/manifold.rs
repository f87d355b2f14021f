//! Networks, the balanced manifold and the group actions on it.
//!
//! Layers are stored by ascending index: `layer(p)` is `W_p`, and the
//! end-to-end product is `W_N⋯W_1`. A point of the balanced manifold is
//! parametrized as `W_p = Q_p Λ Q_{p−1}ᵀ` with frames `Q_N, …, Q_0` and
//! `Λ^N = Σ`.

use nalgebra::DVector;

use crate::error::{GeomError, Result};
use crate::linalg::{
    check_finite, check_square, orthogonality_defect, svd_descending, SquareMatrix, Spectrum,
};
use crate::tolerance::{BALANCE_TOL, ORTHO_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<SquareMatrix>,
}

impl Network {
    /// `layers[p − 1]` is `W_p`.
    pub fn new(layers: Vec<SquareMatrix>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| GeomError::InvalidArgument("network needs at least one layer".into()))?;
        let d = check_square(first)?;
        for w in &layers {
            if w.shape() != (d, d) {
                return Err(GeomError::shape(
                    format!("{d}x{d}"),
                    format!("{}x{}", w.nrows(), w.ncols()),
                ));
            }
            check_finite(w)?;
        }
        Ok(Network { layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.layers[0].nrows()
    }

    /// `W_p`, `1 ≤ p ≤ N`.
    pub fn layer(&self, p: usize) -> &SquareMatrix {
        &self.layers[p - 1]
    }

    pub fn layers(&self) -> &[SquareMatrix] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<SquareMatrix> {
        self.layers
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|w| w.iter().all(|v| v.is_finite()))
    }

    /// Partial products around each layer: entry `p − 1` holds
    /// `(W_N⋯W_{p+1}, W_{p−1}⋯W_1)`, with empty products equal to `I`.
    pub fn partial_products(&self) -> Vec<(SquareMatrix, SquareMatrix)> {
        let n = self.depth();
        let d = self.width();
        let mut below = Vec::with_capacity(n);
        let mut acc = SquareMatrix::identity(d, d);
        for w in &self.layers {
            below.push(acc.clone());
            acc = w * &acc;
        }
        let mut above = vec![SquareMatrix::identity(d, d); n];
        let mut acc = SquareMatrix::identity(d, d);
        for p in (0..n).rev() {
            above[p] = acc.clone();
            acc = &acc * &self.layers[p];
        }
        above.into_iter().zip(below).collect()
    }

    /// Largest squared Frobenius norm among the layers.
    pub fn max_layer_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|w| w.norm_squared())
            .fold(0.0, f64::max)
    }

    /// Distance in the ambient Frobenius metric.
    pub fn distance(&self, other: &Network) -> Result<f64> {
        same_shape(self, other)?;
        Ok(self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt())
    }
}

fn same_shape(a: &Network, b: &Network) -> Result<()> {
    if a.depth() != b.depth() || a.width() != b.width() {
        return Err(GeomError::shape(
            format!("depth {} width {}", a.depth(), a.width()),
            format!("depth {} width {}", b.depth(), b.width()),
        ));
    }
    Ok(())
}

fn check_orthogonal_all(mats: &[SquareMatrix], d: usize) -> Result<()> {
    for q in mats {
        if q.shape() != (d, d) {
            return Err(GeomError::shape(
                format!("{d}x{d}"),
                format!("{}x{}", q.nrows(), q.ncols()),
            ));
        }
        let defect = orthogonality_defect(q);
        if !(defect <= ORTHO_TOL * (d as f64).sqrt().max(1.0) * 10.0) {
            return Err(GeomError::InvalidArgument(format!(
                "factor is not orthogonal (defect {defect:.3e})"
            )));
        }
    }
    Ok(())
}

/// Residuals `r_p = ‖W_{p+1}ᵀW_{p+1} − W_pW_pᵀ‖_F`, `p = 1..N−1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Rotations `Q_1, …, Q_{N−1}` acting between layers; `rotation(p)` is `Q_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeElement {
    rotations: Vec<SquareMatrix>,
}

impl GaugeElement {
    pub fn new(rotations: Vec<SquareMatrix>, width: usize) -> Result<Self> {
        check_orthogonal_all(&rotations, width)?;
        Ok(GaugeElement { rotations })
    }

    pub fn identity(depth: usize, width: usize) -> Self {
        GaugeElement {
            rotations: vec![SquareMatrix::identity(width, width); depth.saturating_sub(1)],
        }
    }

    pub fn rotation(&self, p: usize) -> &SquareMatrix {
        &self.rotations[p - 1]
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

/// Frames `Q_0, …, Q_N`; `frame(s)` is `Q_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTuple {
    frames: Vec<SquareMatrix>,
}

impl FrameTuple {
    /// `frames[s]` is `Q_s`, so the tuple has `N + 1` entries.
    pub fn new(frames: Vec<SquareMatrix>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(GeomError::InvalidArgument(
                "a frame tuple needs at least two frames".into(),
            ));
        }
        let d = check_square(&frames[0])?;
        check_orthogonal_all(&frames, d)?;
        Ok(FrameTuple { frames })
    }

    pub fn identity(depth: usize, width: usize) -> Self {
        FrameTuple {
            frames: vec![SquareMatrix::identity(width, width); depth + 1],
        }
    }

    /// `N + 1` Haar frames drawn from one seeded stream.
    pub fn random(depth: usize, width: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        FrameTuple {
            frames: (0..=depth)
                .map(|_| crate::linalg::haar_orthogonal_with(width, &mut rng))
                .collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn width(&self) -> usize {
        self.frames[0].nrows()
    }

    pub fn frame(&self, s: usize) -> &SquareMatrix {
        &self.frames[s]
    }

    pub fn frames(&self) -> &[SquareMatrix] {
        &self.frames
    }
}

/// Charges `G_p = W_{p+1}ᵀW_{p+1} − W_pW_pᵀ`, `p = 1..N−1`; `charge(p)` is `G_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeTuple {
    charges: Vec<SquareMatrix>,
}

impl ChargeTuple {
    pub fn charge(&self, p: usize) -> &SquareMatrix {
        &self.charges[p - 1]
    }

    pub fn charges(&self) -> &[SquareMatrix] {
        &self.charges
    }

    /// `max_p ‖G_p − H_p‖_F`.
    pub fn max_drift(&self, other: &ChargeTuple) -> f64 {
        self.charges
            .iter()
            .zip(&other.charges)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn check_positive(lambda: &[f64]) -> Result<()> {
    let min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(GeomError::NonFinite);
    }
    if !(min > 0.0) {
        return Err(GeomError::RankDeficient {
            sigma_min: min,
            threshold: 0.0,
        });
    }
    Ok(())
}

/// `W_p = Q_p Λ Q_{p−1}ᵀ` for `p = 1..N`.
pub fn assemble_network(lambda: &[f64], frames: &FrameTuple) -> Result<Network> {
    let d = frames.width();
    if lambda.len() != d {
        return Err(GeomError::shape(
            format!("{d} values"),
            format!("{} values", lambda.len()),
        ));
    }
    check_positive(lambda)?;
    let lam = SquareMatrix::from_diagonal(&DVector::from_column_slice(lambda));
    let layers = (1..=frames.depth())
        .map(|p| frames.frame(p) * &lam * frames.frame(p - 1).transpose())
        .collect();
    Network::new(layers)
}

/// `W_N W_{N−1} ⋯ W_1`.
pub fn end_to_end(w: &Network) -> SquareMatrix {
    let mut x = w.layers[0].clone();
    for layer in &w.layers[1..] {
        x = layer * x;
    }
    x
}

pub fn balance_residual(w: &Network) -> BalanceReport {
    let residuals: Vec<f64> = w
        .layers
        .windows(2)
        .map(|pair| (pair[1].transpose() * &pair[1] - &pair[0] * pair[0].transpose()).norm())
        .collect();
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    BalanceReport {
        residuals,
        max_residual,
    }
}

/// Tolerance used to accept a network as balanced.
pub fn balance_tolerance(w: &Network) -> f64 {
    BALANCE_TOL * w.max_layer_norm_sq().max(1.0)
}

/// Fails with `NotBalanced` when the residual exceeds [`balance_tolerance`].
pub fn check_balanced(w: &Network) -> Result<BalanceReport> {
    let report = balance_residual(w);
    let tolerance = balance_tolerance(w);
    if !(report.max_residual <= tolerance) {
        return Err(GeomError::NotBalanced {
            residual: report.max_residual,
            tolerance,
        });
    }
    Ok(report)
}

pub fn g_charges(w: &Network) -> ChargeTuple {
    let charges = w
        .layers
        .windows(2)
        .map(|pair| {
            let g = pair[1].transpose() * &pair[1] - &pair[0] * pair[0].transpose();
            (&g + g.transpose()) * 0.5
        })
        .collect();
    ChargeTuple { charges }
}

fn check_depth(depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(GeomError::InvalidArgument("depth must be at least 1".into()));
    }
    Ok(())
}

/// `(Q_N Λ, Λ, …, Λ, Λ Q_0ᵀ)` with `Λ = Σ^{1/N}`; for `N = 1` this is `(X)`.
pub fn center_of_fiber(x: &SquareMatrix, depth: usize) -> Result<Network> {
    check_depth(depth)?;
    let svd = svd_descending(x)?;
    svd.spectrum.check_full_rank()?;
    if depth == 1 {
        return Network::new(vec![x.clone()]);
    }
    let lambda = svd.spectrum.depth_root(depth);
    let lam = SquareMatrix::from_diagonal(&DVector::from_column_slice(&lambda));
    let mut layers = vec![lam.clone(); depth];
    layers[0] = &lam * svd.q_right.transpose();
    layers[depth - 1] = &svd.q_left * &lam;
    Network::new(layers)
}

/// `W_p ↦ Q_p W_p Q_{p−1}ᵀ` with `Q_N = Q_0 = I`.
pub fn gauge_act(g: &GaugeElement, w: &Network) -> Result<Network> {
    let n = w.depth();
    if g.len() != n - 1 {
        return Err(GeomError::shape(
            format!("{} rotations", n - 1),
            format!("{} rotations", g.len()),
        ));
    }
    if g.rotations.first().is_some_and(|q| q.nrows() != w.width()) {
        return Err(GeomError::shape(
            format!("{0}x{0}", w.width()),
            format!("{0}x{0}", g.rotations[0].nrows()),
        ));
    }
    let layers = (1..=n)
        .map(|p| {
            let mut m = w.layer(p).clone();
            if p < n {
                m = g.rotation(p) * m;
            }
            if p > 1 {
                m *= g.rotation(p - 1).transpose();
            }
            m
        })
        .collect();
    Network::new(layers)
}

/// `W_p ↦ Q_p W_p Q_{p−1}ᵀ` with all `N + 1` frames free.
pub fn full_orthogonal_act(frames: &FrameTuple, w: &Network) -> Result<Network> {
    if frames.depth() != w.depth() || frames.width() != w.width() {
        return Err(GeomError::shape(
            format!("{} frames of width {}", w.depth() + 1, w.width()),
            format!("{} frames of width {}", frames.depth() + 1, frames.width()),
        ));
    }
    let layers = (1..=w.depth())
        .map(|p| frames.frame(p) * w.layer(p) * frames.frame(p - 1).transpose())
        .collect();
    Network::new(layers)
}

/// Parametrization `(Λ, Q_N, …, Q_0)` of a balanced full-rank network.
#[derive(Debug, Clone)]
pub struct BalancedCoordinates {
    pub spectrum: Spectrum,
    pub lambda: Vec<f64>,
    pub frames: FrameTuple,
}

/// Recovers `Λ` and frames with `W_p = Q_p Λ Q_{p−1}ᵀ`.
///
/// `Q_N` and `Σ` come from [`svd_descending`] of the end-to-end matrix, and
/// the remaining frames follow from `Q_{p−1} = W_pᵀ Q_p Λ⁻¹`. Any sign
/// freedom is thereby fixed by the convention on `Q_N`.
pub fn recover_frames(w: &Network) -> Result<BalancedCoordinates> {
    check_balanced(w)?;
    let n = w.depth();
    let d = w.width();
    let svd = svd_descending(&end_to_end(w))?;
    svd.spectrum.check_full_rank()?;
    let lambda = svd.spectrum.depth_root(n);
    let inv = DVector::from_iterator(d, lambda.iter().map(|l| 1.0 / l));

    let mut frames = vec![SquareMatrix::zeros(d, d); n + 1];
    frames[n] = svd.q_left.clone();
    for p in (1..=n).rev() {
        let mut q = w.layer(p).transpose() * &frames[p];
        for (j, mut col) in q.column_iter_mut().enumerate() {
            col *= inv[j];
        }
        frames[p - 1] = q;
    }
    let tol = (BALANCE_TOL.sqrt() * 10.0).max(ORTHO_TOL);
    for q in &frames {
        let defect = orthogonality_defect(q);
        if !(defect <= tol) {
            return Err(GeomError::NotBalanced {
                residual: defect,
                tolerance: tol,
            });
        }
    }
    Ok(BalancedCoordinates {
        spectrum: svd.spectrum,
        lambda,
        frames: FrameTuple { frames },
    })
}
