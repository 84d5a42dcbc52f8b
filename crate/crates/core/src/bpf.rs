//! Block-pulse basis, projection onto it and reconstruction from
//! spectral coefficients.
//!
//! Block `i` (zero based here) covers `[i h, (i + 1) h)` with `h = horizon / n`.
//! The right end of the horizon is out of domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::gauss_legendre;

/// Default Gauss-Legendre order used per block when projecting.
pub const DEFAULT_PROJECTION_ORDER: usize = 5;

/// `n_funcs` block pulses on `[0, horizon)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpfBasis {
    n_funcs: usize,
    horizon: f64,
}

impl BpfBasis {
    pub fn new(n_funcs: usize, horizon: f64) -> Result<Self> {
        if n_funcs == 0 {
            return Err(Error::invalid("bpf", "number of block pulses must be >= 1"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(
                "bpf",
                format!("horizon must be a positive finite time, got {horizon}"),
            ));
        }
        Ok(Self { n_funcs, horizon })
    }

    pub fn n_funcs(&self) -> usize {
        self.n_funcs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Block width `h = horizon / n`.
    pub fn width(&self) -> f64 {
        self.horizon / self.n_funcs as f64
    }

    /// Left edge of block `i`.
    pub fn edge(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.n_funcs as f64
    }

    /// All `n + 1` block edges.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_funcs).map(|i| self.edge(i)).collect()
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.width()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n_funcs).map(|i| self.midpoint(i)).collect()
    }

    /// Index of the block containing `t`.
    pub fn block_of(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t < self.horizon) {
            return Err(Error::OutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let i = (t / self.width()).floor() as usize;
        // Guard against rounding at block boundaries.
        let i = i.min(self.n_funcs - 1);
        if t < self.edge(i) {
            Ok(i - 1)
        } else if i + 1 < self.n_funcs && t >= self.edge(i + 1) {
            Ok(i + 1)
        } else {
            Ok(i)
        }
    }

    pub(crate) fn ensure_same(&self, other: &BpfBasis, module: &'static str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::BasisMismatch {
                module,
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl std::fmt::Display for BpfBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BPF(N={}, tau={})", self.n_funcs, self.horizon)
    }
}

/// Coefficients of a one-argument function in a block-pulse basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVector {
    basis: BpfBasis,
    coeffs: Vec<f64>,
}

impl SpectralVector {
    pub fn new(basis: BpfBasis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.n_funcs() {
            return Err(Error::invalid(
                "bpf",
                format!(
                    "spectral vector has {} coefficients, basis has {}",
                    coeffs.len(),
                    basis.n_funcs()
                ),
            ));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::non_finite("bpf", format!("spectral vector entry {i}")));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: BpfBasis) -> Self {
        Self {
            basis,
            coeffs: vec![0.0; basis.n_funcs()],
        }
    }

    pub fn constant(basis: BpfBasis, value: f64) -> Self {
        Self {
            basis,
            coeffs: vec![value; basis.n_funcs()],
        }
    }

    pub fn basis(&self) -> &BpfBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Value of the expansion at `t` (the coefficient of the block containing `t`).
    pub fn reconstruct(&self, t: f64) -> Result<f64> {
        Ok(self.coeffs[self.basis.block_of(t)?])
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &SpectralVector, b: f64) -> Result<SpectralVector> {
        self.basis.ensure_same(&other.basis, "bpf")?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| a * x + b * y)
            .collect();
        SpectralVector::new(self.basis, coeffs)
    }

    pub fn scaled(&self, k: f64) -> SpectralVector {
        SpectralVector {
            basis: self.basis,
            coeffs: self.coeffs.iter().map(|c| k * c).collect(),
        }
    }

    /// Integral of the expansion over the whole horizon.
    pub fn integral(&self) -> f64 {
        self.basis.width() * self.coeffs.iter().sum::<f64>()
    }
}

/// Coefficients of a two-argument function, dense row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMatrix {
    basis: BpfBasis,
    coeffs: Vec<f64>,
}

impl SpectralMatrix {
    pub fn new(basis: BpfBasis, coeffs: Vec<f64>) -> Result<Self> {
        let n = basis.n_funcs();
        if coeffs.len() != n * n {
            return Err(Error::invalid(
                "bpf",
                format!("spectral matrix needs {} entries, got {}", n * n, coeffs.len()),
            ));
        }
        if let Some(k) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::non_finite(
                "bpf",
                format!("spectral matrix entry ({}, {})", k / n, k % n),
            ));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: BpfBasis) -> Self {
        let n = basis.n_funcs();
        Self {
            basis,
            coeffs: vec![0.0; n * n],
        }
    }

    /// `value * I`.
    pub fn scaled_identity(basis: BpfBasis, value: f64) -> Self {
        let mut m = Self::zeros(basis);
        let n = basis.n_funcs();
        for i in 0..n {
            m.coeffs[i * n + i] = value;
        }
        m
    }

    /// `u v^T`.
    pub fn outer(u: &SpectralVector, v: &SpectralVector) -> Result<Self> {
        u.basis.ensure_same(&v.basis, "bpf")?;
        let coeffs = u
            .coeffs
            .iter()
            .flat_map(|a| v.coeffs.iter().map(move |b| a * b))
            .collect();
        Ok(Self {
            basis: u.basis,
            coeffs,
        })
    }

    pub fn basis(&self) -> &BpfBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.n_funcs()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.dim() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.coeffs[i * n..(i + 1) * n]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &SpectralMatrix, b: f64) -> Result<SpectralMatrix> {
        self.basis.ensure_same(&other.basis, "bpf")?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| a * x + b * y)
            .collect();
        SpectralMatrix::new(self.basis, coeffs)
    }

    /// Largest `|c_ij - c_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.asymmetry() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Value of the expansion at `(t1, t2)`.
    pub fn reconstruct(&self, t1: f64, t2: f64) -> Result<f64> {
        let i = self.basis.block_of(t1)?;
        let j = self.basis.block_of(t2)?;
        Ok(self.get(i, j))
    }
}

/// Project `f` onto the basis with the default per-block quadrature order.
pub fn project_function<F: Fn(f64) -> f64>(basis: &BpfBasis, f: F) -> Result<SpectralVector> {
    project_function_with_order(basis, f, DEFAULT_PROJECTION_ORDER)
}

/// `c_i = (1/h) * integral of f over block i`, via Gauss-Legendre of `order` per block.
pub fn project_function_with_order<F: Fn(f64) -> f64>(
    basis: &BpfBasis,
    f: F,
    order: usize,
) -> Result<SpectralVector> {
    let (x, w) = gauss_legendre(order)?;
    let h = basis.width();
    let mut coeffs = Vec::with_capacity(basis.n_funcs());
    for i in 0..basis.n_funcs() {
        let mid = basis.midpoint(i);
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let v = f(mid + 0.5 * h * xi);
            if !v.is_finite() {
                return Err(Error::NonFiniteProjection { block: i });
            }
            acc += wi * v;
        }
        // Weights sum to 2 on [-1, 1]; the block average is half the rule.
        coeffs.push(0.5 * acc);
    }
    Ok(SpectralVector {
        basis: *basis,
        coeffs,
    })
}

/// Project a bivariate `g` with the default order.
pub fn project_bivariate<G: Fn(f64, f64) -> f64>(basis: &BpfBasis, g: G) -> Result<SpectralMatrix> {
    project_bivariate_with_order(basis, g, DEFAULT_PROJECTION_ORDER)
}

/// `c_ij = (1/h^2) * double integral of g over block (i, j)`, tensor Gauss-Legendre.
pub fn project_bivariate_with_order<G: Fn(f64, f64) -> f64>(
    basis: &BpfBasis,
    g: G,
    order: usize,
) -> Result<SpectralMatrix> {
    let (x, w) = gauss_legendre(order)?;
    let n = basis.n_funcs();
    let h = basis.width();
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mid = basis.midpoint(i);
            x.iter().map(|xi| mid + 0.5 * h * xi).collect()
        })
        .collect();
    let mut coeffs = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for (a, wa) in pts[i].iter().zip(&w) {
                for (b, wb) in pts[j].iter().zip(&w) {
                    let v = g(*a, *b);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteProjection { block: i * n + j });
                    }
                    acc += wa * wb * v;
                }
            }
            coeffs[i * n + j] = 0.25 * acc;
        }
    }
    Ok(SpectralMatrix {
        basis: *basis,
        coeffs,
    })
}

/// Unit-area rectangular pulse in the first block, standing in for a Dirac delta at 0.
pub fn delta_spectral(basis: &BpfBasis) -> SpectralVector {
    let mut coeffs = vec![0.0; basis.n_funcs()];
    coeffs[0] = 1.0 / basis.width();
    SpectralVector {
        basis: *basis,
        coeffs,
    }
}

/// Spectral representation of `intensity * delta(t1 - t2)`: `intensity * (N/tau) * I`.
pub fn white_noise_covariance(basis: &BpfBasis, intensity: f64) -> Result<SpectralMatrix> {
    if !(intensity.is_finite() && intensity >= 0.0) {
        return Err(Error::invalid(
            "bpf",
            format!("white-noise intensity must be >= 0, got {intensity}"),
        ));
    }
    Ok(SpectralMatrix::scaled_identity(
        *basis,
        intensity / basis.width(),
    ))
}
