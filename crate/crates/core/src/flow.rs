//! Gradient flows of a loss `E(X)` on networks and on end-to-end matrices.
//!
//! All integrators are fixed-step classical RK4, so a run is reproducible
//! bit for bit from its configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{entropy, entropy_gradient, HaarConvention};
use crate::error::{GeomError, Result};
use crate::linalg::{check_finite, check_square, svd_descending, SquareMatrix};
use crate::manifold::{balance_residual, end_to_end, g_charges, ChargeTuple, Network};
use crate::metric::{Direction, MetricOperator};
use crate::tolerance::TAU_RANK;

#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// `½‖X − Y‖²_F`.
    Quadratic { target: SquareMatrix },
    /// `½‖M ⊙ (X − Y)‖²_F` for a 0/1 mask `M`.
    MaskedQuadratic { target: SquareMatrix, mask: SquareMatrix },
}

impl LossSpec {
    pub fn quadratic(target: SquareMatrix) -> Result<Self> {
        check_square(&target)?;
        check_finite(&target)?;
        Ok(LossSpec::Quadratic { target })
    }

    pub fn masked(target: SquareMatrix, mask: SquareMatrix) -> Result<Self> {
        check_square(&target)?;
        check_finite(&target)?;
        if mask.shape() != target.shape() {
            return Err(GeomError::shape(
                format!("{}x{}", target.nrows(), target.ncols()),
                format!("{}x{}", mask.nrows(), mask.ncols()),
            ));
        }
        if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(GeomError::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        Ok(LossSpec::MaskedQuadratic { target, mask })
    }

    pub fn dim(&self) -> usize {
        match self {
            LossSpec::Quadratic { target } | LossSpec::MaskedQuadratic { target, .. } => {
                target.nrows()
            }
        }
    }

    fn residual(&self, x: &SquareMatrix) -> SquareMatrix {
        match self {
            LossSpec::Quadratic { target } => x - target,
            LossSpec::MaskedQuadratic { target, mask } => (x - target).component_mul(mask),
        }
    }

    pub fn value(&self, x: &SquareMatrix) -> f64 {
        0.5 * self.residual(x).norm_squared()
    }

    /// Euclidean gradient `dE(X)`.
    pub fn differential(&self, x: &SquareMatrix) -> SquareMatrix {
        self.residual(x)
    }

    fn check(&self, x: &SquareMatrix) -> Result<()> {
        if x.nrows() != self.dim() || x.ncols() != self.dim() {
            return Err(GeomError::shape(
                format!("{0}x{0}", self.dim()),
                format!("{}x{}", x.nrows(), x.ncols()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt: f64,
    pub steps: usize,
    /// Inverse temperature; `f64::INFINITY` switches the entropy off.
    pub beta: f64,
    pub record_every: usize,
    pub convention: HaarConvention,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt: 1e-3,
            steps: 1000,
            beta: f64::INFINITY,
            record_every: 1,
            convention: HaarConvention::Embedded,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(GeomError::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 || self.record_every == 0 {
            return Err(GeomError::InvalidArgument(
                "steps and record_every must be positive".into(),
            ));
        }
        if !(self.beta > 0.0) {
            return Err(GeomError::InvalidArgument(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Sample<S> {
    pub t: f64,
    pub state: S,
    pub loss: f64,
    pub free_energy: f64,
    /// Entropy of the end-to-end matrix; NaN where it is undefined.
    pub entropy: f64,
    pub balance_residual: f64,
    pub charge_drift: f64,
    pub sigma: Vec<f64>,
}

#[derive(Debug)]
pub struct Trajectory<S> {
    pub samples: Vec<Sample<S>>,
    /// Why the integration ended early, if it did.
    pub stopped: Option<GeomError>,
}

impl<S> Trajectory<S> {
    pub fn last(&self) -> &Sample<S> {
        self.samples.last().expect("trajectories hold the initial sample")
    }

    pub fn completed(&self) -> bool {
        self.stopped.is_none()
    }
}

type State = Vec<SquareMatrix>;

fn axpy(y: &State, c: f64, k: &State) -> State {
    y.iter().zip(k).map(|(a, b)| a + b * c).collect()
}

fn rk4_step<F>(y: &State, dt: f64, f: &F) -> Result<State>
where
    F: Fn(&State) -> Result<State>,
{
    let k1 = f(y)?;
    let k2 = f(&axpy(y, 0.5 * dt, &k1))?;
    let k3 = f(&axpy(y, 0.5 * dt, &k2))?;
    let k4 = f(&axpy(y, dt, &k3))?;
    Ok(y.iter()
        .enumerate()
        .map(|(i, v)| v + (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (dt / 6.0))
        .collect())
}

fn state_finite(y: &State) -> bool {
    y.iter().all(|m| m.iter().all(|v| v.is_finite()))
}

/// Runs `steps` RK4 steps, recording every `record_every` steps and at the
/// end. A failing vector field or a non-finite state stops the run.
fn integrate<F, R>(y0: State, cfg: &FlowConfig, field: F, mut record: R) -> Option<GeomError>
where
    F: Fn(&State) -> Result<State>,
    R: FnMut(f64, &State),
{
    record(0.0, &y0);
    let mut y = y0;
    for step in 1..=cfg.steps {
        let next = match rk4_step(&y, cfg.dt, &field) {
            Ok(next) => next,
            Err(e) => return Some(e),
        };
        if !state_finite(&next) {
            return Some(GeomError::NonFinite);
        }
        y = next;
        if step % cfg.record_every == 0 || step == cfg.steps {
            record(step as f64 * cfg.dt, &y);
        }
    }
    None
}

fn singular_values(x: &SquareMatrix) -> Vec<f64> {
    svd_descending(x)
        .map(|s| s.spectrum.values().to_vec())
        .unwrap_or_else(|_| vec![f64::NAN; x.nrows()])
}

fn entropy_or_nan(sigma: &[f64], depth: usize, convention: HaarConvention) -> f64 {
    crate::linalg::Spectrum::new(sigma.to_vec())
        .and_then(|s| entropy(&s, depth, convention))
        .map(|e| e.total)
        .unwrap_or(f64::NAN)
}

fn free_energy_value(loss: f64, entropy: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        loss
    } else {
        loss - entropy / beta
    }
}

fn end_to_end_sample(
    t: f64,
    x: &SquareMatrix,
    loss: &LossSpec,
    depth: usize,
    cfg: &FlowConfig,
    balance: f64,
    drift: f64,
) -> Sample<SquareMatrix> {
    let sigma = singular_values(x);
    let l = loss.value(x);
    let s = entropy_or_nan(&sigma, depth, cfg.convention);
    Sample {
        t,
        state: x.clone(),
        loss: l,
        free_energy: free_energy_value(l, s, cfg.beta),
        entropy: s,
        balance_residual: balance,
        charge_drift: drift,
        sigma,
    }
}

fn network_diagnostics(w: &Network, initial: &ChargeTuple) -> (f64, f64) {
    (balance_residual(w).max_residual, g_charges(w).max_drift(initial))
}

fn param_field(layers: &[SquareMatrix], loss: &LossSpec) -> Result<State> {
    let w = Network::new(layers.to_vec())?;
    let de = loss.differential(&end_to_end(&w));
    Ok(w.partial_products()
        .iter()
        .map(|(above, below)| -(above.transpose() * &de * below.transpose()))
        .collect())
}

fn check_network(w0: &Network, loss: &LossSpec, cfg: &FlowConfig) -> Result<()> {
    cfg.validate()?;
    if w0.width() != loss.dim() {
        return Err(GeomError::shape(
            format!("width {}", loss.dim()),
            format!("width {}", w0.width()),
        ));
    }
    Ok(())
}

/// `Ẇ_p = −(W_N⋯W_{p+1})ᵀ dE(X) (W_{p−1}⋯W_1)ᵀ`.
pub fn param_flow(w0: &Network, loss: &LossSpec, cfg: &FlowConfig) -> Result<Trajectory<Network>> {
    check_network(w0, loss, cfg)?;
    let depth = w0.depth();
    let initial = g_charges(w0);
    let mut samples = Vec::new();
    let stopped = integrate(
        w0.layers().to_vec(),
        cfg,
        |y| param_field(y, loss),
        |t, y| {
            let w = Network::new(y.clone()).expect("finite states only");
            let x = end_to_end(&w);
            let (balance, drift) = network_diagnostics(&w, &initial);
            let s = end_to_end_sample(t, &x, loss, depth, cfg, balance, drift);
            samples.push(Sample {
                t: s.t,
                state: w,
                loss: s.loss,
                free_energy: s.free_energy,
                entropy: s.entropy,
                balance_residual: s.balance_residual,
                charge_drift: s.charge_drift,
                sigma: s.sigma,
            });
        },
    );
    Ok(Trajectory { samples, stopped })
}

/// `Ẋ = −Σ_p (W_N⋯W_{p+1})(W_N⋯W_{p+1})ᵀ dE(X) (W_{p−1}⋯W_1)ᵀ(W_{p−1}⋯W_1)`.
///
/// `X` is integrated as its own state. The coefficient products come from a
/// network integrated alongside it by [`param_flow`]'s vector field.
pub fn closed_flow_general(w0: &Network, loss: &LossSpec, cfg: &FlowConfig) -> Result<Trajectory<SquareMatrix>> {
    check_network(w0, loss, cfg)?;
    let depth = w0.depth();
    let initial = g_charges(w0);
    let mut y0 = vec![end_to_end(w0)];
    y0.extend(w0.layers().iter().cloned());
    let field = |y: &State| -> Result<State> {
        let w = Network::new(y[1..].to_vec())?;
        let de = loss.differential(&y[0]);
        let mut xdot = SquareMatrix::zeros(de.nrows(), de.ncols());
        for (above, below) in w.partial_products() {
            xdot -= &above * above.transpose() * &de * below.transpose() * &below;
        }
        let mut out = vec![xdot];
        out.extend(param_field(&y[1..], loss)?);
        Ok(out)
    };
    let mut samples = Vec::new();
    let stopped = integrate(y0, cfg, field, |t, y| {
        let w = Network::new(y[1..].to_vec()).expect("finite states only");
        let (balance, drift) = network_diagnostics(&w, &initial);
        samples.push(end_to_end_sample(t, &y[0], loss, depth, cfg, balance, drift));
    });
    Ok(Trajectory { samples, stopped })
}

fn check_end_to_end(x0: &SquareMatrix, depth: usize, loss: &LossSpec, cfg: &FlowConfig) -> Result<()> {
    cfg.validate()?;
    if depth == 0 {
        return Err(GeomError::InvalidArgument("depth must be at least 1".into()));
    }
    loss.check(x0)?;
    check_finite(x0)?;
    svd_descending(x0)?.spectrum.check_full_rank()
}

fn metric_at(x: &SquareMatrix, depth: usize) -> Result<MetricOperator> {
    let svd = svd_descending(x)?;
    let s = svd.spectrum.values();
    let (top, bottom) = (s[0], s[s.len() - 1]);
    if !(bottom > TAU_RANK * top) {
        return Err(GeomError::RankDeficient {
            sigma_min: bottom,
            threshold: TAU_RANK * top,
        });
    }
    MetricOperator::from_svd(svd, depth)
}

fn end_to_end_flow<F>(x0: &SquareMatrix, depth: usize, loss: &LossSpec, cfg: &FlowConfig, force: F) -> Trajectory<SquareMatrix>
where
    F: Fn(&SquareMatrix, &MetricOperator) -> Result<SquareMatrix>,
{
    let orientation = x0.determinant().signum();
    let field = |y: &State| -> Result<State> {
        // a sign change of det X means a step jumped across the rank boundary
        if y[0].determinant().signum() != orientation {
            return Err(GeomError::RankDeficient {
                sigma_min: 0.0,
                threshold: TAU_RANK,
            });
        }
        let op = metric_at(&y[0], depth)?;
        let g = force(&y[0], &op)?;
        Ok(vec![-op.apply(&g, Direction::Forward)?])
    };
    let mut samples = Vec::new();
    let stopped = integrate(vec![x0.clone()], cfg, field, |t, y| {
        samples.push(end_to_end_sample(t, &y[0], loss, depth, cfg, 0.0, 0.0));
    });
    Trajectory { samples, stopped }
}

/// `Ẋ = −𝒜_{N,X}(dE(X))`.
pub fn balanced_flow(x0: &SquareMatrix, depth: usize, loss: &LossSpec, cfg: &FlowConfig) -> Result<Trajectory<SquareMatrix>> {
    check_end_to_end(x0, depth, loss, cfg)?;
    Ok(end_to_end_flow(x0, depth, loss, cfg, |x, _| Ok(loss.differential(x))))
}

/// `grad_{g^N} E = 𝒜_{N,X}(dE)`.
pub fn riemannian_grad(op: &MetricOperator, de: &SquareMatrix) -> Result<SquareMatrix> {
    op.apply(de, Direction::Forward)
}

/// `F_β(X) = E(X) − S(X)/β`.
pub fn free_energy(x: &SquareMatrix, loss: &LossSpec, depth: usize, beta: f64, convention: HaarConvention) -> Result<f64> {
    loss.check(x)?;
    let svd = svd_descending(x)?;
    let e = loss.value(x);
    if beta.is_infinite() && beta > 0.0 {
        return Ok(e);
    }
    if !(beta > 0.0) {
        return Err(GeomError::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let s = entropy(&svd.spectrum, depth, convention)?;
    Ok(e - s.total / beta)
}

/// `Ẋ = −𝒜_{N,X}(dE(X) − dS(X)/β)`.
pub fn free_energy_flow(x0: &SquareMatrix, depth: usize, loss: &LossSpec, cfg: &FlowConfig) -> Result<Trajectory<SquareMatrix>> {
    check_end_to_end(x0, depth, loss, cfg)?;
    let beta = cfg.beta;
    Ok(end_to_end_flow(x0, depth, loss, cfg, |x, op| {
        let de = loss.differential(x);
        if beta.is_infinite() {
            return Ok(de);
        }
        Ok(de - entropy_gradient(op.svd(), depth)? / beta)
    }))
}

/// Thread cap for sweeps: `DLN_GEOM_THREADS` when set to a positive
/// integer, otherwise the machine's available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("DLN_GEOM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs independent jobs on at most `threads` workers, returning results in
/// input order.
pub fn sweep<T, R, F>(jobs: Vec<T>, threads: usize, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Send + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| GeomError::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.into_par_iter().map(f).collect()))
}
