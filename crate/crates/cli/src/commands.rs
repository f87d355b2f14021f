use std::path::{Path, PathBuf};

use dln_geom::basis::{basis_count, extended_gram, onb_vectors, p_matrix, pushforward_dphi, submersion_report, tangency_residual};
use dln_geom::entropy::{
    block_det, chebyshev_eigen, entropy as entropy_value, jacobi_block, orbit_volume_formula,
    orbit_volume_numeric, Boundary, HaarConvention,
};
use dln_geom::flow::{
    balanced_flow, closed_flow_general, free_energy_flow, param_flow, sweep, thread_cap, FlowConfig, LossSpec,
    Trajectory,
};
use dln_geom::io::{read_matrix, read_network, write_text};
use dln_geom::linalg::{index_pairs, svd_descending, SquareMatrix};
use dln_geom::manifold::{assemble_network, center_of_fiber, end_to_end, FrameTuple};
use dln_geom::metric::{density_exponent_fit, DensityFit};
use dln_geom::report::{Check, VerifyReport};
use dln_geom::{GeomError, Network, Spectrum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{existing, parse_list, positive, required, ConfigFile};
use crate::{BasisArgs, CliError, EntropyArgs, FlowArgs, VerifyArgs, VolumeArgs};

enum SpectrumSource {
    Values(Vec<f64>),
    Matrix(PathBuf),
}

impl SpectrumSource {
    fn resolve(sigma: Option<String>, x: Option<PathBuf>) -> Result<Self, CliError> {
        match (sigma, existing("--x", x)?) {
            (Some(_), Some(_)) => Err(CliError::Usage("--sigma and --x are mutually exclusive".into())),
            (Some(text), None) => Ok(SpectrumSource::Values(parse_list("--sigma", &text)?)),
            (None, Some(path)) => Ok(SpectrumSource::Matrix(path)),
            (None, None) => Err(CliError::Usage("one of --sigma or --x is required".into())),
        }
    }

    fn load(self) -> Result<Spectrum, GeomError> {
        match self {
            SpectrumSource::Values(v) => Spectrum::new(v),
            SpectrumSource::Matrix(path) => Ok(svd_descending(&read_matrix(&path)?)?.spectrum),
        }
    }
}

fn convention(text: Option<String>) -> Result<HaarConvention, CliError> {
    match text {
        None => Ok(HaarConvention::default()),
        Some(t) => t
            .parse()
            .map_err(|_| CliError::Usage(format!("--convention must be embedded or ponting, got {t:?}"))),
    }
}

fn positive_real(flag: &str, value: Option<f64>) -> Result<Option<f64>, CliError> {
    match value {
        Some(v) if !(v > 0.0 && v.is_finite()) => {
            Err(CliError::Usage(format!("{flag} must be positive and finite, got {v}")))
        }
        v => Ok(v),
    }
}

/// `--lambda` if given, otherwise `(d, d−1, …, 1)`.
fn depth_roots(text: Option<String>, width: Option<usize>) -> Result<Vec<f64>, CliError> {
    let width = positive("--width", width)?;
    match text {
        Some(t) => {
            let lambda = parse_list("--lambda", &t)?;
            if let Some(w) = width {
                if w != lambda.len() {
                    return Err(CliError::Usage(format!(
                        "--lambda has {} values but --width is {w}",
                        lambda.len()
                    )));
                }
            }
            Ok(lambda)
        }
        None => Ok((1..=width.unwrap_or(2)).rev().map(|k| k as f64).collect()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => Ok(write_text(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    emit(out, &text)
}

fn rows(m: &SquareMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Decimal rendering with trailing zeros removed.
fn short(v: f64) -> String {
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub fn entropy(a: EntropyArgs, cfg: ConfigFile) -> Result<(), CliError> {
    let source = SpectrumSource::resolve(a.sigma.or(ConfigFile::list_text(cfg.sigma)), a.x.or(cfg.x))?;
    let depth = required("--depth", positive("--depth", a.depth.or(cfg.depth))?)?;
    let conv = convention(a.convention.or(cfg.convention))?;
    let out = a.out.or(cfg.out);

    let value = entropy_value(&source.load()?, depth, conv)?;
    emit_json(out.as_deref(), &value)
}

#[derive(Clone, Copy, PartialEq)]
enum FlowKind {
    Param,
    Closed,
    Balanced,
    FreeEnergy,
}

enum Start {
    Network(Network),
    Matrix(SquareMatrix, usize),
}

fn flow_csv<S>(traj: &Trajectory<S>, width: usize) -> String {
    let mut out = String::from("t,loss,free_energy,entropy,balance_residual");
    for k in 1..=width {
        out.push_str(&format!(",sigma_{k}"));
    }
    out.push('\n');
    for s in &traj.samples {
        let mut fields = vec![s.t, s.loss, s.free_energy, s.entropy, s.balance_residual];
        fields.extend(&s.sigma);
        let line: Vec<String> = fields.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn parse_betas(text: &str) -> Result<Vec<(String, f64)>, CliError> {
    let mut betas = Vec::new();
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let value = match token {
            "inf" | "infinity" => f64::INFINITY,
            t => t
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("--beta: {e} in {t:?}")))?,
        };
        if !(value > 0.0) {
            return Err(CliError::Usage(format!("--beta values must be positive, got {token}")));
        }
        betas.push((token.to_string(), value));
    }
    if betas.is_empty() {
        return Err(CliError::Usage("--beta: expected at least one value".into()));
    }
    Ok(betas)
}

type FlowOutcome = Result<(String, Option<GeomError>), GeomError>;

fn run_flow(kind: FlowKind, start: &Start, loss: &LossSpec, cfg: &FlowConfig) -> FlowOutcome {
    let width = loss.dim();
    let (csv, stopped) = match (kind, start) {
        (FlowKind::Param, Start::Network(w)) => {
            let mut t = param_flow(w, loss, cfg)?;
            (flow_csv(&t, width), t.stopped.take())
        }
        (FlowKind::Closed, Start::Network(w)) => {
            let mut t = closed_flow_general(w, loss, cfg)?;
            (flow_csv(&t, width), t.stopped.take())
        }
        (FlowKind::Balanced, Start::Matrix(x, n)) => {
            let mut t = balanced_flow(x, *n, loss, cfg)?;
            (flow_csv(&t, width), t.stopped.take())
        }
        (FlowKind::FreeEnergy, Start::Matrix(x, n)) => {
            let mut t = free_energy_flow(x, *n, loss, cfg)?;
            (flow_csv(&t, width), t.stopped.take())
        }
        _ => unreachable!("start state is built for the flow kind"),
    };
    Ok((csv, stopped))
}

pub fn flow(a: FlowArgs, cfg: ConfigFile) -> Result<(), CliError> {
    let kind = match required("--kind", a.kind.or(cfg.kind))?.as_str() {
        "param" => FlowKind::Param,
        "closed" => FlowKind::Closed,
        "balanced" => FlowKind::Balanced,
        "free-energy" => FlowKind::FreeEnergy,
        other => {
            return Err(CliError::Usage(format!(
                "--kind must be param, closed, balanced or free-energy, got {other:?}"
            )))
        }
    };
    let target = required("--target", existing("--target", a.target.or(cfg.target))?)?;
    let mask = existing("--mask", a.mask.or(cfg.mask))?;
    let x0 = existing("--x0", a.x0.or(cfg.x0))?;
    let network = existing("--network", a.network.or(cfg.network))?;
    let depth = positive("--depth", a.depth.or(cfg.depth))?;
    match (&x0, &network) {
        (Some(_), Some(_)) => return Err(CliError::Usage("--x0 and --network are mutually exclusive".into())),
        (None, None) => return Err(CliError::Usage("one of --x0 or --network is required".into())),
        (Some(_), None) if depth.is_none() => {
            return Err(CliError::Usage("--depth is required with --x0".into()))
        }
        _ => {}
    }

    let defaults = FlowConfig::default();
    let dt = positive_real("--dt", a.dt.or(cfg.dt))?.unwrap_or(defaults.dt);
    let steps = positive("--steps", a.steps.or(cfg.steps))?.unwrap_or(defaults.steps);
    let record_every = positive("--record-every", a.record_every.or(cfg.record_every))?.unwrap_or(defaults.record_every);
    let conv = convention(a.convention.or(cfg.convention))?;
    let betas = parse_betas(&a.beta.or(ConfigFile::list_text(cfg.beta)).unwrap_or_else(|| "inf".into()))?;
    if kind != FlowKind::FreeEnergy && betas.iter().any(|(_, b)| b.is_finite()) {
        return Err(CliError::Usage("--beta: finite values need --kind free-energy".into()));
    }
    let out = a.out.or(cfg.out);
    if betas.len() > 1 && out.is_none() {
        return Err(CliError::Usage("--out (a directory) is required when sweeping several --beta values".into()));
    }

    let target = read_matrix(&target)?;
    let loss = match mask {
        Some(path) => LossSpec::masked(target, read_matrix(&path)?)?,
        None => LossSpec::quadratic(target)?,
    };
    let start = match (network, x0) {
        (Some(path), _) => {
            let w = read_network(&path)?;
            if let Some(n) = depth {
                if n != w.depth() {
                    return Err(CliError::Usage(format!(
                        "--depth is {n} but the network in --network has depth {}",
                        w.depth()
                    )));
                }
            }
            match kind {
                FlowKind::Param | FlowKind::Closed => Start::Network(w),
                _ => {
                    let n = w.depth();
                    Start::Matrix(end_to_end(&w), n)
                }
            }
        }
        (None, Some(path)) => {
            let x = read_matrix(&path)?;
            let n = depth.expect("checked above");
            match kind {
                FlowKind::Param | FlowKind::Closed => Start::Network(center_of_fiber(&x, n)?),
                _ => Start::Matrix(x, n),
            }
        }
        (None, None) => unreachable!("checked above"),
    };

    let configs: Vec<(String, FlowConfig)> = betas
        .into_iter()
        .map(|(label, beta)| {
            let c = FlowConfig {
                dt,
                steps,
                beta,
                record_every,
                convention: conv,
            };
            (label, c)
        })
        .collect();
    let labels: Vec<String> = configs.iter().map(|(l, _)| l.clone()).collect();
    let results = sweep(configs, thread_cap(), |(_, c)| run_flow(kind, &start, &loss, &c))?;
    let mut outputs = Vec::with_capacity(results.len());
    for r in results {
        outputs.push(r?);
    }

    if outputs.len() == 1 {
        emit(out.as_deref(), &outputs[0].0)?;
    } else {
        let dir = out.expect("checked above");
        std::fs::create_dir_all(&dir).map_err(|source| GeomError::Io {
            path: dir.clone(),
            source,
        })?;
        for (label, (csv, _)) in labels.iter().zip(&outputs) {
            write_text(&dir.join(format!("beta_{label}.csv")), csv)?;
        }
    }
    match outputs.into_iter().find_map(|(_, stopped)| stopped) {
        Some(e) => Err(CliError::Numeric(e)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    #[serde(flatten)]
    report: &'a VerifyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<&'a DensityFit>,
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn verify(a: VerifyArgs, cfg: ConfigFile) -> Result<(), CliError> {
    let suite = required("--suite", a.suite.or(cfg.suite))?;
    let known = ["jacobi", "chebyshev", "extended", "basis", "submersion", "volume", "density"];
    if !known.contains(&suite.as_str()) {
        return Err(CliError::Usage(format!("--suite must be one of {}, got {suite:?}", known.join(", "))));
    }
    let width = a.width.or(cfg.width);
    let depth = required("--depth", positive("--depth", a.depth.or(cfg.depth))?)?;
    let lambda = depth_roots(a.lambda.or(ConfigFile::list_text(cfg.lambda)), width)?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let tolerance = positive_real("--tolerance", a.tolerance.or(cfg.tolerance))?;
    let grid = positive("--grid", a.grid.or(cfg.grid))?;
    let samples = a.samples.or(cfg.samples).unwrap_or(50);
    if samples < 2 {
        return Err(CliError::Usage(format!("--samples must be at least 2, got {samples}")));
    }
    let out = a.out.or(cfg.out);
    let d = lambda.len();

    let mut report = VerifyReport::new(suite.clone());
    let mut fit = None;
    match suite.as_str() {
        "jacobi" => {
            let tol = tolerance.unwrap_or(1e-9);
            for (k, l) in index_pairs(d) {
                let block = jacobi_block(lambda[k], lambda[l], depth, Boundary::Interior);
                let closed = block_det(lambda[k], lambda[l], depth);
                let lu = if block.matrix.nrows() == 0 { 1.0 } else { block.matrix.determinant() };
                eprintln!("det[{},{}]: {} vs {}", k + 1, l + 1, short(closed), short(lu));
                report.push(Check::below(format!("det[{},{}]", k + 1, l + 1), (closed - lu).abs() / closed.abs(), tol));
            }
        }
        "chebyshev" => {
            let tol = tolerance.unwrap_or(1e-10);
            for (k, l) in index_pairs(d) {
                let block = jacobi_block(lambda[k], lambda[l], depth, Boundary::Interior);
                let eig = chebyshev_eigen(&block)?;
                let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig.sigma));
                let r = &eig.s * &block.matrix * eig.s.transpose() - diag;
                report.push(Check::below(format!("sine[{},{}]", k + 1, l + 1), inf_norm(&r), tol));
            }
        }
        "extended" => {
            let tol = tolerance.unwrap_or(1e-10);
            for (k, l) in index_pairs(d) {
                let p = p_matrix(lambda[k], lambda[l], depth)?.matrix;
                let r = &p * extended_gram(lambda[k], lambda[l], depth) * p.transpose()
                    - DMatrix::identity(depth + 1, depth + 1);
                report.push(Check::below(format!("p_matrix[{},{}]", k + 1, l + 1), inf_norm(&r), tol));
            }
        }
        "basis" => {
            let tol = tolerance.unwrap_or(1e-9);
            let w = assemble_network(&lambda, &FrameTuple::random(depth, d, seed))?;
            let basis = onb_vectors(&w)?;
            let gram = basis.gram() - DMatrix::identity(basis.len(), basis.len());
            let gram_err = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut tangency: f64 = 0.0;
            for e in &basis.vectors {
                tangency = tangency.max(tangency_residual(&w, &e.vector)?);
            }
            report.push(Check::below("gram", gram_err, tol));
            report.push(Check::below("tangency", tangency, tol));
            report.push(Check::below("count", basis.len().abs_diff(basis_count(d, depth)) as f64, 0.0));
        }
        "submersion" => {
            let tol = tolerance.unwrap_or(1e-9);
            let w = assemble_network(&lambda, &FrameTuple::random(depth, d, seed))?;
            let r = submersion_report(&w)?;
            report = r.to_verify_report(tol);
            let kernel = (depth - 1) * d * (d - 1) / 2;
            report.push(Check::below("kernel_dimension", r.kernel_dimension.abs_diff(kernel) as f64, 0.0));
            report.push(Check::below("horizontal_dimension", r.horizontal_dimension.abs_diff(d * d) as f64, 0.0));
        }
        "volume" => {
            let tol = tolerance.unwrap_or(if depth == 2 { 1e-6 } else { 1e-3 });
            let grid = grid.unwrap_or(if depth == 2 { 10_000 } else { 400 });
            let spectrum = Spectrum::from_depth_root(&lambda, depth)?;
            let numeric = orbit_volume_numeric(&spectrum.as_diagonal(), depth, grid)?;
            let formula = orbit_volume_formula(&spectrum, depth, HaarConvention::Embedded)?;
            let s = entropy_value(&spectrum, depth, HaarConvention::Embedded)?.total;
            eprintln!("volume: formula {formula} vs quadrature {numeric}");
            report.push(Check::below("relative_error", (numeric - formula).abs() / formula, tol));
            report.push(Check::below("entropy_vs_log_volume", (s - numeric.ln()).abs(), tol));
        }
        "density" => {
            if d != 2 {
                return Err(GeomError::UnsupportedDimension(format!("the density diagnostic needs width 2, got {d}")).into());
            }
            let tol = tolerance.unwrap_or(1e-6);
            let f = density_exponent_fit(depth, samples, seed)?;
            eprintln!("density: fitted exponent {} vs stated {}", f.fitted_exponent, f.stated_exponent);
            report.push(Check::below("fit_residual", f.max_residual, tol));
            fit = Some(f);
        }
        _ => unreachable!("suite validated above"),
    }

    emit_json(
        out.as_deref(),
        &VerifyOutput {
            report: &report,
            fit: fit.as_ref(),
        },
    )?;
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    eprintln!(
        "{} {suite} ({} checks)",
        if failed.is_empty() { "PASS" } else { "FAIL" },
        report.checks.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerificationFailed(format!("suite {suite}: {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct VolumeOutput {
    sigma: Vec<f64>,
    depth: usize,
    convention: HaarConvention,
    formula: f64,
    log_formula: f64,
    /// Quadrature over the orbit in the embedded metric; width 2, depth 2 or 3.
    numeric: Option<f64>,
    /// Against the embedded closed form.
    relative_error: Option<f64>,
}

pub fn volume(a: VolumeArgs, cfg: ConfigFile) -> Result<(), CliError> {
    let source = SpectrumSource::resolve(a.sigma.or(ConfigFile::list_text(cfg.sigma)), a.x.or(cfg.x))?;
    let depth = required("--depth", positive("--depth", a.depth.or(cfg.depth))?)?;
    let conv = convention(a.convention.or(cfg.convention))?;
    let grid = positive("--grid", a.grid.or(cfg.grid))?;
    let out = a.out.or(cfg.out);

    let spectrum = source.load()?;
    let value = entropy_value(&spectrum, depth, conv)?;
    let supported = spectrum.dim() == 2 && (depth == 2 || depth == 3);
    let (numeric, relative_error) = if supported || grid.is_some() {
        let grid = grid.unwrap_or(if depth == 2 { 10_000 } else { 400 });
        let numeric = orbit_volume_numeric(&spectrum.as_diagonal(), depth, grid)?;
        let embedded = orbit_volume_formula(&spectrum, depth, HaarConvention::Embedded)?;
        (Some(numeric), Some((numeric - embedded).abs() / embedded))
    } else {
        (None, None)
    };
    emit_json(
        out.as_deref(),
        &VolumeOutput {
            sigma: spectrum.values().to_vec(),
            depth,
            convention: conv,
            formula: value.total.exp(),
            log_formula: value.total,
            numeric,
            relative_error,
        },
    )
}

#[derive(Serialize)]
struct BasisVector {
    label: String,
    horizontal: bool,
    /// `φ_*` of the vector.
    pushforward_norm: f64,
    /// Layers `p = 1..N`, each as rows.
    layers: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct BasisOutput {
    width: usize,
    depth: usize,
    lambda: Vec<f64>,
    count: usize,
    kernel_dimension: usize,
    vectors: Vec<BasisVector>,
}

pub fn basis(a: BasisArgs, cfg: ConfigFile) -> Result<(), CliError> {
    let lambda = depth_roots(a.lambda.or(ConfigFile::list_text(cfg.lambda)), a.width.or(cfg.width))?;
    let depth = required("--depth", positive("--depth", a.depth.or(cfg.depth))?)?;
    let seed = a.seed.or(cfg.seed);
    let out = a.out.or(cfg.out);
    let d = lambda.len();

    let frames = match seed {
        Some(s) => FrameTuple::random(depth, d, s),
        None => FrameTuple::identity(depth, d),
    };
    let w = assemble_network(&lambda, &frames)?;
    let onb = onb_vectors(&w)?;
    let mut vectors = Vec::with_capacity(onb.len());
    for e in &onb.vectors {
        vectors.push(BasisVector {
            label: e.label.to_string(),
            horizontal: e.label.is_horizontal(depth),
            pushforward_norm: pushforward_dphi(&w, &e.vector)?.norm(),
            layers: e.vector.slots().iter().map(rows).collect(),
        });
    }
    emit_json(
        out.as_deref(),
        &BasisOutput {
            width: d,
            depth,
            lambda,
            count: onb.len(),
            kernel_dimension: vectors.iter().filter(|v| !v.horizontal).count(),
            vectors,
        },
    )
}
