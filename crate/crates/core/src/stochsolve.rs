//! Moment propagation under random forcing and random coefficients.
//!
//! Everything reduces to two expectations over the parameter cubature:
//! `E[A_G]` acting on the input mean, and the congruence
//! `E[A_G M A_Gᵀ]` acting on the input second moment `M = κ + m mᵀ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpf::{white_noise_covariance, BpfBasis, SpectralMatrix, SpectralVector};
use crate::dosys::{self, DOSystem, Distribution, ParamValues, RandomParameter};
use crate::error::{Error, Result};
use crate::numeric::{causal_convolve, gauss_hermite_prob, gauss_legendre, pivoted_cholesky, Compensated, Factor};
use crate::opmat::{self, OpMatrix};

const MODULE: &str = "stochsolve";
const SYMMETRY_TOL: f64 = 1e-10;
const NEGATIVE_TOL: f64 = 1e-8;

/// Input moments in spectral form.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticForcing {
    mean: SpectralVector,
    covariance: SpectralMatrix,
}

impl StochasticForcing {
    pub fn new(mean: SpectralVector, covariance: SpectralMatrix) -> Result<Self> {
        mean.basis().ensure_same(covariance.basis(), MODULE)?;
        if !covariance.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::PsdViolation {
                module: MODULE,
                message: format!("input covariance is not symmetric (max |C - Cᵀ| = {:.3e})", covariance.asymmetry()),
            });
        }
        let scale = covariance.max_abs();
        if let Some((i, d)) = covariance.diagonal().into_iter().enumerate().find(|(_, d)| *d < -NEGATIVE_TOL * scale) {
            return Err(Error::PsdViolation {
                module: MODULE,
                message: format!("input covariance has negative variance {d:.3e} in block {i}"),
            });
        }
        Ok(Self { mean, covariance })
    }

    pub fn mean(&self) -> &SpectralVector {
        &self.mean
    }

    pub fn covariance(&self) -> &SpectralMatrix {
        &self.covariance
    }

    pub fn basis(&self) -> &BpfBasis {
        self.mean.basis()
    }
}

/// Output moments in spectral form.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentResult {
    mean: SpectralVector,
    covariance: SpectralMatrix,
}

impl MomentResult {
    pub fn mean(&self) -> &SpectralVector {
        &self.mean
    }

    pub fn covariance(&self) -> &SpectralMatrix {
        &self.covariance
    }

    pub fn basis(&self) -> &BpfBasis {
        self.mean.basis()
    }
}

/// Tensor cubature over the random parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CubatureGrid {
    nodes: Vec<ParamValues>,
    weights: Vec<f64>,
}

impl CubatureGrid {
    /// The one-point grid used when nothing is random.
    pub fn trivial() -> Self {
        Self {
            nodes: vec![ParamValues::new()],
            weights: vec![1.0],
        }
    }

    pub fn nodes(&self) -> &[ParamValues] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted mean of one parameter over the grid.
    pub fn expectation(&self, f: impl Fn(&ParamValues) -> f64) -> f64 {
        let mut acc = Compensated::new();
        for (n, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(n));
        }
        acc.value()
    }
}

/// Probability-weighted one-dimensional rule for a parameter.
pub fn parameter_quadrature(p: &RandomParameter) -> Result<Vec<(f64, f64)>> {
    p.validate()?;
    let q = p.quad_order;
    match p.distribution {
        Distribution::Uniform { lo, hi } => {
            let (x, w) = gauss_legendre(q)?;
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            Ok(x.iter().zip(&w).map(|(xi, wi)| (mid + half * xi, 0.5 * wi)).collect())
        }
        Distribution::Gaussian { mean, stddev } => {
            let (x, w) = gauss_hermite_prob(q)?;
            Ok(x.iter().zip(&w).map(|(xi, wi)| (mean + stddev * xi, *wi)).collect())
        }
    }
}

/// Multi-indices of a full tensor grid in graded lexicographic order.
fn graded_lex(orders: &[usize]) -> Vec<Vec<usize>> {
    let mut all = vec![Vec::with_capacity(orders.len())];
    for &q in orders {
        all = all
            .into_iter()
            .flat_map(|prefix| {
                (0..q).map(move |j| {
                    let mut v = prefix.clone();
                    v.push(j);
                    v
                })
            })
            .collect();
    }
    // Stable sort keeps lexicographic order within each total degree.
    all.sort_by_key(|idx| idx.iter().sum::<usize>());
    all
}

/// Full tensor product of the per-parameter rules.
pub fn tensor_cubature(params: &[RandomParameter]) -> Result<CubatureGrid> {
    if params.is_empty() {
        return Err(Error::invalid(MODULE, "tensor cubature needs at least one random parameter"));
    }
    let rules = params.iter().map(parameter_quadrature).collect::<Result<Vec<_>>>()?;
    let orders: Vec<usize> = rules.iter().map(Vec::len).collect();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for idx in graded_lex(&orders) {
        let mut values = ParamValues::new();
        let mut w = 1.0;
        for ((p, rule), &j) in params.iter().zip(&rules).zip(&idx) {
            values.insert(p.name.clone(), rule[j].0);
            w *= rule[j].1;
        }
        nodes.push(values);
        weights.push(w);
    }
    Ok(CubatureGrid { nodes, weights })
}

/// Grid built from the system's own random parameters.
pub fn system_cubature(sys: &DOSystem) -> Result<CubatureGrid> {
    if sys.random_params().is_empty() {
        Ok(CubatureGrid::trivial())
    } else {
        tensor_cubature(sys.random_params())
    }
}

fn describe(values: &ParamValues) -> String {
    if values.is_empty() {
        return "{}".into();
    }
    let parts: Vec<String> = values.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{{{}}}", parts.join(", "))
}

/// Assemble `A_G` at every node, in parallel, returned in grid order.
fn node_operators(sys: &DOSystem, basis: &BpfBasis, grid: &CubatureGrid) -> Result<Vec<OpMatrix>> {
    grid.nodes
        .par_iter()
        .enumerate()
        .map(|(index, values)| {
            dosys::assemble_system_operator(sys, basis, values).map_err(|e| Error::CubatureNode {
                index,
                node: describe(values),
                source: Box::new(e),
            })
        })
        .collect()
}

/// `Σ_j w_j A_G(ξ_j)`, accumulated on first columns.
pub fn expected_operator(sys: &DOSystem, basis: &BpfBasis, grid: &CubatureGrid) -> Result<OpMatrix> {
    let ops = node_operators(sys, basis, grid)?;
    expectation_of(basis, &ops, &grid.weights)
}

fn expectation_of(basis: &BpfBasis, ops: &[OpMatrix], weights: &[f64]) -> Result<OpMatrix> {
    let n = basis.n_funcs();
    let mut acc = vec![Compensated::new(); n];
    for (op, w) in ops.iter().zip(weights) {
        for (a, x) in acc.iter_mut().zip(op.first_col()) {
            a.add(w * x);
        }
    }
    OpMatrix::from_first_col(*basis, acc.iter().map(Compensated::value).collect(), opmat::OpLabel::Assembled)
}

/// How the middle factor of the sandwich is applied.
enum Middle {
    /// `M ≈ F Fᵀ`, with `F` column-major `n × rank`.
    Factored { rank: usize, cols: Vec<f64> },
    Dense,
}

fn choose_middle(m: &SpectralMatrix) -> Middle {
    let n = m.dim();
    match pivoted_cholesky(m.coeffs(), n, 1e-15) {
        // Past about two thirds of full rank the two explicit products are cheaper.
        Factor::LowRank { rank, cols, .. } if 3 * rank <= 2 * n => Middle::Factored { rank, cols },
        Factor::LowRank { .. } => Middle::Dense,
        Factor::Indefinite { pivot, scale } => {
            log::debug!("sandwich middle factor indefinite (pivot {pivot:.3e}, scale {scale:.3e}); using dense products");
            Middle::Dense
        }
    }
}

/// `A M Aᵀ` for one lower-triangular Toeplitz `A`, row-major.
fn congruence(a: &OpMatrix, m: &SpectralMatrix, middle: &Middle) -> Vec<f64> {
    let n = m.dim();
    let g = a.first_col();
    match middle {
        Middle::Factored { rank, cols } => {
            let mut y = Vec::with_capacity(n * rank);
            for k in 0..*rank {
                y.extend(causal_convolve(g, &cols[k * n..(k + 1) * n]));
            }
            let y = nalgebra::DMatrix::from_vec(n, *rank, y);
            let s = &y * y.transpose();
            // Symmetric, so its column-major storage is also row-major.
            s.as_slice().to_vec()
        }
        Middle::Dense => {
            // Rows of P = (A M)ᵀ are A applied to the (symmetric) rows of M.
            let mut p = vec![0.0; n * n];
            for j in 0..n {
                p[j * n..(j + 1) * n].copy_from_slice(&causal_convolve(g, m.row(j)));
            }
            let mut col = vec![0.0; n];
            let mut s = vec![0.0; n * n];
            for j in 0..n {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = p[i * n + j];
                }
                s[j * n..(j + 1) * n].copy_from_slice(&causal_convolve(g, &col));
            }
            s
        }
    }
}

/// `Σ_j w_j A_G(ξ_j) M A_G(ξ_j)ᵀ` as a dense matrix.
pub fn expected_sandwich(sys: &DOSystem, basis: &BpfBasis, grid: &CubatureGrid, m: &SpectralMatrix) -> Result<SpectralMatrix> {
    basis.ensure_same(m.basis(), MODULE)?;
    let ops = node_operators(sys, basis, grid)?;
    sandwich_of(basis, &ops, &grid.weights, m)
}

fn sandwich_of(basis: &BpfBasis, ops: &[OpMatrix], weights: &[f64], m: &SpectralMatrix) -> Result<SpectralMatrix> {
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::invalid(MODULE, "sandwich middle factor must be symmetric"));
    }
    let n = basis.n_funcs();
    if m.max_abs() == 0.0 {
        return Ok(SpectralMatrix::zeros(*basis));
    }
    let middle = choose_middle(m);
    let mut acc = vec![Compensated::new(); n * n];
    // Bounded memory: a chunk of per-node products at a time, reduced in grid order.
    let chunk = rayon::current_num_threads().max(1) * 2;
    for (ops_chunk, w_chunk) in ops.chunks(chunk).zip(weights.chunks(chunk)) {
        let parts: Vec<Vec<f64>> = ops_chunk.par_iter().map(|a| congruence(a, m, &middle)).collect();
        for (part, w) in parts.iter().zip(w_chunk) {
            for (a, x) in acc.iter_mut().zip(part) {
                a.add(w * x);
            }
        }
    }
    let mut out: Vec<f64> = acc.iter().map(Compensated::value).collect();
    symmetrize(&mut out, n);
    SpectralMatrix::new(*basis, out)
}

fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
}

/// Output mean and covariance, using the system's own cubature.
pub fn propagate_moments(sys: &DOSystem, forcing: &StochasticForcing) -> Result<MomentResult> {
    propagate_moments_on(sys, &system_cubature(sys)?, forcing)
}

/// Output mean and covariance on an explicit cubature grid.
pub fn propagate_moments_on(sys: &DOSystem, grid: &CubatureGrid, forcing: &StochasticForcing) -> Result<MomentResult> {
    let basis = *forcing.basis();
    let n = basis.n_funcs();
    let ops = node_operators(sys, &basis, grid)?;
    let mean_op = expectation_of(&basis, &ops, &grid.weights)?;
    let mean = opmat::apply(&mean_op, forcing.mean())?;

    let second = forcing
        .covariance()
        .combine(1.0, &SpectralMatrix::outer(forcing.mean(), forcing.mean())?, 1.0)?;
    let raw = sandwich_of(&basis, &ops, &grid.weights, &second)?;
    let mut cov: Vec<f64> = raw.coeffs().to_vec();
    let my = mean.coeffs();
    for i in 0..n {
        for j in 0..n {
            cov[i * n + j] -= my[i] * my[j];
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite(MODULE, "output covariance"));
    }
    Ok(MomentResult {
        mean,
        covariance: SpectralMatrix::new(basis, cov)?,
    })
}

/// `κ_YY(t, t)` at each time, clamping tiny negative values from truncation.
pub fn variance_series(r: &MomentResult, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    let basis = r.basis();
    let diag = r.covariance.diagonal();
    let scale = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    times
        .iter()
        .map(|&t| {
            let i = basis.block_of(t)?;
            let v = diag[i];
            if v >= 0.0 {
                Ok((t, v))
            } else if v >= -NEGATIVE_TOL * scale {
                log::warn!("clamping variance {v:.3e} at t = {t} to zero");
                Ok((t, 0.0))
            } else {
                Err(Error::PsdViolation {
                    module: MODULE,
                    message: format!("output variance {v:.3e} at t = {t} is negative beyond tolerance"),
                })
            }
        })
        .collect()
}

/// Mean of the output at each time.
pub fn mean_series(r: &MomentResult, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times.iter().map(|&t| Ok((t, r.mean.reconstruct(t)?))).collect()
}

/// Input mean function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanModel {
    Constant { value: f64 },
    /// Piecewise-linear through `(times, values)`, held constant outside.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl MeanModel {
    fn validate(&self) -> Result<()> {
        match self {
            MeanModel::Constant { value } if !value.is_finite() => Err(Error::invalid(MODULE, "mean value must be finite")),
            MeanModel::Table { times, values } => validate_table(times, values, "mean table"),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MeanModel::Constant { value } => *value,
            MeanModel::Table { times, values } => interp(times, values, t, None),
        }
    }
}

/// Input covariance kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceModel {
    /// `intensity · δ(t₁ - t₂)`.
    White { intensity: f64 },
    /// `scale · sinc((t₁ - t₂)/width)` with the normalized sinc.
    Sinc { scale: f64, width: f64 },
    /// Stationary kernel tabulated against lag, linear in between and zero
    /// past the last lag.
    Table { lags: Vec<f64>, values: Vec<f64> },
}

impl CovarianceModel {
    fn validate(&self) -> Result<()> {
        match self {
            CovarianceModel::White { intensity } if !(intensity.is_finite() && *intensity >= 0.0) => {
                Err(Error::invalid(MODULE, "white-noise intensity must be finite and nonnegative"))
            }
            CovarianceModel::Sinc { scale, width } if !(scale.is_finite() && *scale >= 0.0 && width.is_finite() && *width > 0.0) => {
                Err(Error::invalid(MODULE, "sinc covariance needs scale >= 0 and width > 0"))
            }
            CovarianceModel::Table { lags, values } => {
                validate_table(lags, values, "covariance table")?;
                if lags[0] != 0.0 {
                    return Err(Error::invalid(MODULE, "covariance table must start at lag 0"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Kernel value as a function of lag, `None` for white noise.
    pub fn stationary(&self, lag: f64) -> Option<f64> {
        let lag = lag.abs();
        match self {
            CovarianceModel::White { .. } => None,
            CovarianceModel::Sinc { scale, width } => Some(scale * sinc(lag / width)),
            CovarianceModel::Table { lags, values } => Some(interp(lags, values, lag, Some(0.0))),
        }
    }
}

/// Normalized sinc, `sin(πx)/(πx)`.
pub fn sinc(x: f64) -> f64 {
    let px = std::f64::consts::PI * x;
    if px.abs() < 1e-4 {
        let p2 = px * px;
        1.0 - p2 / 6.0 + p2 * p2 / 120.0
    } else {
        px.sin() / px
    }
}

fn validate_table(xs: &[f64], ys: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::invalid(MODULE, format!("{what} needs matching, nonempty columns")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid(MODULE, format!("{what} contains non-finite values")));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(MODULE, format!("{what} abscissae must be strictly increasing")));
    }
    Ok(())
}

fn interp(xs: &[f64], ys: &[f64], x: f64, beyond: Option<f64>) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return if x == xs[last] { ys[last] } else { beyond.unwrap_or(ys[last]) };
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let s = (x - x0) / (x1 - x0);
    ys[k - 1] + s * (ys[k] - ys[k - 1])
}

/// Serializable description of the random input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    pub mean: MeanModel,
    pub covariance: CovarianceModel,
}

impl ForcingSpec {
    pub fn validate(&self) -> Result<()> {
        self.mean.validate()?;
        self.covariance.validate()
    }

    /// Project both moments onto a basis.
    pub fn project(&self, basis: &BpfBasis) -> Result<StochasticForcing> {
        self.validate()?;
        let mean = crate::bpf::project_function(basis, |t| self.mean.eval(t))?;
        let covariance = match &self.covariance {
            CovarianceModel::White { intensity } => white_noise_covariance(basis, *intensity)?,
            kernel => project_stationary(basis, |lag| kernel.stationary(lag).unwrap_or(0.0))?,
        };
        StochasticForcing::new(mean, covariance)
    }
}

/// Block averages of a stationary kernel `k(t₁ - t₂)`.
///
/// The average over block pair (i, j) depends only on i - j, so N lag
/// averages fill the whole matrix.
pub fn project_stationary(basis: &BpfBasis, k: impl Fn(f64) -> f64) -> Result<SpectralMatrix> {
    let n = basis.n_funcs();
    let h = basis.width();
    let (x, w) = gauss_legendre(crate::bpf::DEFAULT_PROJECTION_ORDER)?;
    let lag_avg: Vec<f64> = (0..n)
        .map(|d| {
            let mut acc = Compensated::new();
            for (xa, wa) in x.iter().zip(&w) {
                for (xb, wb) in x.iter().zip(&w) {
                    acc.add(0.25 * wa * wb * k(h * (d as f64 + 0.5 * (xa - xb))));
                }
            }
            acc.value()
        })
        .collect();
    if let Some(d) = lag_avg.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteProjection { block: d });
    }
    let coeffs = (0..n * n).map(|idx| lag_avg[(idx / n).abs_diff(idx % n)]).collect();
    SpectralMatrix::new(*basis, coeffs)
}
