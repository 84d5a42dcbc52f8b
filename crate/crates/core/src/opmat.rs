//! Operational matrices of fractional integration and differentiation.
//!
//! All matrices here are lower-triangular Toeplitz and are stored by their
//! first column. Such matrices (for a fixed size) form a commutative ring, so
//! sums, products and inverses stay in the same representation.

use std::fmt;

use crate::bpf::{BpfBasis, SpectralVector};
use crate::error::{Error, Result};
use crate::numeric::{causal_convolve, dot};

/// Gamma function for positive arguments.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(
            "opmat",
            format!("gamma function requires a positive finite argument, got {x}"),
        ));
    }
    Ok(libm::tgamma(x))
}

/// What an [`OpMatrix`] stands for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpLabel {
    Identity,
    Integral(f64),
    Derivative(f64),
    Assembled,
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpLabel::Identity => write!(f, "I"),
            OpLabel::Integral(a) => write!(f, "A[{a}]"),
            OpLabel::Derivative(a) => write!(f, "B[{a}]"),
            OpLabel::Assembled => write!(f, "assembled"),
        }
    }
}

/// Lower-triangular Toeplitz operator acting on block-pulse coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct OpMatrix {
    basis: BpfBasis,
    first_col: Vec<f64>,
    label: OpLabel,
}

impl OpMatrix {
    /// Build from a first column; entries must be finite.
    pub fn from_first_col(basis: BpfBasis, first_col: Vec<f64>, label: OpLabel) -> Result<Self> {
        if first_col.len() != basis.n_funcs() {
            return Err(Error::invalid(
                "opmat",
                format!(
                    "first column has length {}, basis has {}",
                    first_col.len(),
                    basis.n_funcs()
                ),
            ));
        }
        if let Some(k) = first_col.iter().position(|c| !c.is_finite()) {
            return Err(Error::non_finite("opmat", format!("{label} entry {k}")));
        }
        Ok(Self {
            basis,
            first_col,
            label,
        })
    }

    pub fn identity(basis: &BpfBasis) -> Self {
        let mut first_col = vec![0.0; basis.n_funcs()];
        first_col[0] = 1.0;
        Self {
            basis: *basis,
            first_col,
            label: OpLabel::Identity,
        }
    }

    pub fn zero(basis: &BpfBasis) -> Self {
        Self {
            basis: *basis,
            first_col: vec![0.0; basis.n_funcs()],
            label: OpLabel::Assembled,
        }
    }

    pub fn basis(&self) -> &BpfBasis {
        &self.basis
    }

    pub fn first_col(&self) -> &[f64] {
        &self.first_col
    }

    pub fn label(&self) -> OpLabel {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.first_col.len()
    }

    /// Entry `(r, c)` of the materialized matrix.
    pub fn entry(&self, r: usize, c: usize) -> f64 {
        if r >= c {
            self.first_col[r - c]
        } else {
            0.0
        }
    }

    /// Dense row-major materialization; intended for checks, not the pipeline.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..=r {
                out[r * n + c] = self.first_col[r - c];
            }
        }
        out
    }

    fn relabel(mut self, label: OpLabel) -> Self {
        self.label = label;
        self
    }

    fn checked(self, context: &str) -> Result<Self> {
        if self.first_col.iter().all(|c| c.is_finite()) {
            Ok(self)
        } else {
            Err(Error::non_finite("opmat", context.to_string()))
        }
    }
}

/// Generalized block-pulse operational matrix of fractional integration of order `alpha`.
///
/// `first_col[p-1] = h^alpha / Gamma(alpha + 2) * f_p`, with `f_1 = 1` and
/// `f_p = p^{alpha+1} - 2 (p-1)^{alpha+1} + (p-2)^{alpha+1}`. Order zero is the identity.
pub fn integration_matrix(alpha: f64, basis: &BpfBasis) -> Result<OpMatrix> {
    if alpha == 0.0 {
        return Ok(OpMatrix::identity(basis));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(
            "opmat",
            format!("integration order must be > 0 (order 0 is the identity), got {alpha}"),
        ));
    }
    let n = basis.n_funcs();
    let scale = basis.width().powf(alpha) / gamma_fn(alpha + 2.0)?;
    let e = alpha + 1.0;
    let mut first_col = Vec::with_capacity(n);
    first_col.push(scale);
    for p in 2..=n {
        let p = p as f64;
        let fp = p.powf(e) - 2.0 * (p - 1.0).powf(e) + (p - 2.0).powf(e);
        first_col.push(scale * fp);
    }
    OpMatrix::from_first_col(*basis, first_col, OpLabel::Integral(alpha))
}

/// Operational matrix of fractional differentiation, `B_alpha = A_alpha^{-1}`.
pub fn derivative_matrix(alpha: f64, basis: &BpfBasis) -> Result<OpMatrix> {
    if alpha == 0.0 {
        return Ok(OpMatrix::identity(basis));
    }
    let a = integration_matrix(alpha, basis)?;
    Ok(invert_lower_toeplitz(&a)?.relabel(OpLabel::Derivative(alpha)))
}

/// Inverse of a lower-triangular Toeplitz matrix by forward recurrence:
/// `g_0 = 1/f_0`, `g_k = -(1/f_0) * sum_{j=1..k} f_j g_{k-j}`.
pub fn invert_lower_toeplitz(m: &OpMatrix) -> Result<OpMatrix> {
    let f = &m.first_col;
    let f0 = f[0];
    if f0 == 0.0 || !f0.is_finite() {
        return Err(Error::Singular { leading: f0 });
    }
    let n = f.len();
    // Keep g reversed so the inner sum is a forward dot product:
    // rev[n-1-i] = g_i.
    let mut rev = vec![0.0; n];
    rev[n - 1] = 1.0 / f0;
    for k in 1..n {
        // sum_{j=1..k} f_j g_{k-j} = dot(f[1..=k], [g_{k-1}, ..., g_0])
        let s = dot(&f[1..=k], &rev[n - k..]);
        let g = -s / f0;
        if !g.is_finite() {
            return Err(Error::non_finite(
                "opmat",
                format!("inverse of {} at entry {k}", m.label),
            ));
        }
        rev[n - 1 - k] = g;
    }
    rev.reverse();
    let label = match m.label {
        OpLabel::Integral(a) => OpLabel::Derivative(a),
        OpLabel::Derivative(a) => OpLabel::Integral(a),
        other => other,
    };
    OpMatrix::from_first_col(m.basis, rev, label)
}

/// Matrix-vector product.
pub fn apply(m: &OpMatrix, v: &SpectralVector) -> Result<SpectralVector> {
    m.basis.ensure_same(v.basis(), "opmat")?;
    let out = causal_convolve(&m.first_col, v.coeffs());
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::non_finite("opmat", format!("apply {}", m.label)));
    }
    SpectralVector::new(m.basis, out)
}

/// Product `a * b` (equal to `b * a`).
pub fn compose(a: &OpMatrix, b: &OpMatrix) -> Result<OpMatrix> {
    a.basis.ensure_same(&b.basis, "opmat")?;
    let label = match (a.label, b.label) {
        (OpLabel::Identity, l) | (l, OpLabel::Identity) => l,
        _ => OpLabel::Assembled,
    };
    OpMatrix {
        basis: a.basis,
        first_col: causal_convolve(&a.first_col, &b.first_col),
        label,
    }
    .checked("compose")
}

/// Sum `a + b`.
pub fn add(a: &OpMatrix, b: &OpMatrix) -> Result<OpMatrix> {
    a.basis.ensure_same(&b.basis, "opmat")?;
    OpMatrix {
        basis: a.basis,
        first_col: a.first_col.iter().zip(&b.first_col).map(|(x, y)| x + y).collect(),
        label: OpLabel::Assembled,
    }
    .checked("add")
}

/// `k * a`.
pub fn scale(a: &OpMatrix, k: f64) -> Result<OpMatrix> {
    OpMatrix {
        basis: a.basis,
        first_col: a.first_col.iter().map(|x| k * x).collect(),
        label: if k == 1.0 { a.label } else { OpLabel::Assembled },
    }
    .checked("scale")
}

/// `acc += k * a`, in place.
pub(crate) fn axpy(acc: &mut OpMatrix, k: f64, a: &OpMatrix) -> Result<()> {
    acc.basis.ensure_same(&a.basis, "opmat")?;
    for (x, y) in acc.first_col.iter_mut().zip(&a.first_col) {
        *x += k * y;
    }
    acc.label = OpLabel::Assembled;
    Ok(())
}
