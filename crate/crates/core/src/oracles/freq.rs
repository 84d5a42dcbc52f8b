//! Transfer functions evaluated in the Laplace domain and the steady-state
//! output variance of a white-noise-driven system from its H₂ norm.
//!
//! Complex powers use the principal branch, so on the imaginary axis
//! `(jω)^α = |ω|^α exp(j α sign(ω) π/2)`.

use num_complex::Complex64;

use super::quad;
use crate::dosys::{DOSystem, DensityTerm, Density, ParamValues, Sense, Side, TermKind};
use crate::error::{Error, Result};
use crate::numeric::gauss_legendre_on;

const MODULE: &str = "freq";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyResponse {
    pub omega: f64,
    pub value: Complex64,
}

/// `∫_{g1}^{g2} exp(α L) dα`, with a series where `L (g2 - g1)` is small.
fn exp_integral(l: Complex64, g1: f64, g2: f64) -> Complex64 {
    let delta = g2 - g1;
    let z = l * delta;
    let base = (l * g1).exp();
    if z.norm() < 0.5 {
        // Δ Σ z^k/(k+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..30 {
            term *= z / (k as f64 + 1.0);
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        base * sum * delta
    } else {
        base * (z.exp() - 1.0) / l
    }
}

fn term_symbol(term: &DensityTerm, s: Complex64) -> Result<Complex64> {
    let sign = if term.sense == Sense::Derivative { 1.0 } else { -1.0 };
    if s == Complex64::new(0.0, 0.0) {
        // Limits at the origin: positive powers vanish, negative ones blow up.
        return match (&term.kind, term.sense) {
            (TermKind::Point { order }, _) if *order == 0.0 => Ok(Complex64::new(1.0, 0.0)),
            (_, Sense::Derivative) => Ok(Complex64::new(0.0, 0.0)),
            _ => Err(Error::invalid(MODULE, "integral term evaluated at s = 0 (pole)")),
        };
    }
    let l = s.ln() * sign;
    Ok(match &term.kind {
        TermKind::Point { order } if *order == 0.0 => Complex64::new(1.0, 0.0),
        TermKind::Point { order } => (l * *order).exp(),
        TermKind::Distributed { density, lower, upper, .. } => match density {
            Density::Constant { value } => exp_integral(l, *lower, *upper) * *value,
            other => {
                let (x, w) = gauss_legendre_on(32, *lower, *upper)?;
                x.iter().zip(&w).map(|(a, wa)| (l * *a).exp() * (wa * other.eval(*a))).sum()
            }
        },
    })
}

/// `RHS(s) / LHS(s)` at a complex point, parameters bound to `values`.
pub fn transfer_at(sys: &DOSystem, s: Complex64, values: &ParamValues) -> Result<Complex64> {
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = Complex64::new(0.0, 0.0);
    for t in sys.terms() {
        let v = term_symbol(t, s)? * t.coeff.resolve(values)?;
        match t.side {
            Side::Lhs => den += v,
            Side::Rhs => num += v,
        }
    }
    if den.norm() == 0.0 || !den.is_finite() {
        return Err(Error::invalid(MODULE, format!("output polynomial vanishes or diverges at s = {s} (pole)")));
    }
    let g = num / den;
    if !g.is_finite() {
        return Err(Error::non_finite(MODULE, format!("transfer function at s = {s}")));
    }
    Ok(g)
}

/// `G(jω)` for a system with no random parameters.
pub fn freq_response(sys: &DOSystem, omega: f64) -> Result<FrequencyResponse> {
    let value = transfer_at(sys, Complex64::new(0.0, omega), &ParamValues::new())?;
    Ok(FrequencyResponse { omega, value })
}

/// `(1/2π) ∫ |G(jω)|² dω` over the whole axis, folded onto ω ≥ 0.
///
/// Integrates decade panels with adaptive Gauss-Kronrod and closes the
/// range with an algebraic tail `C ω^{-p}` fitted at the last frequency.
pub fn steady_state_variance_frequency(sys: &DOSystem) -> Result<f64> {
    let none = ParamValues::new();
    let g2 = |w: f64| -> f64 {
        match transfer_at(sys, Complex64::new(0.0, w), &none) {
            Ok(g) => g.norm_sqr(),
            Err(_) => f64::NAN,
        }
    };
    let panel = |a: f64, b: f64| quad::integrate(&g2, a, b, 1e-14, 1e-10).map(|r| r.value);
    let mut total = panel(0.0, 1e-4)?;
    let mut lo = 1e-4;
    let mut tail = None;
    for _ in 0..14 {
        let hi = lo * 10.0;
        let part = panel(lo, hi)?;
        total += part;
        lo = hi;
        if lo >= 1e2 && part <= 1e-9 * total {
            let (g_lo, g_hi) = (g2(lo), g2(2.0 * lo));
            let p = (g_lo / g_hi).log2();
            if g_lo == 0.0 {
                tail = Some(0.0);
                break;
            }
            if p > 1.05 {
                tail = Some(g_lo * lo / (p - 1.0));
                break;
            }
        }
    }
    let tail = tail.ok_or_else(|| {
        Error::convergence(MODULE, "|G(jω)|² does not decay faster than 1/ω; the system is not strictly proper or is unstable")
    })?;
    let v = (total + tail) / std::f64::consts::PI;
    if !v.is_finite() {
        return Err(Error::non_finite(MODULE, "H2 integral"));
    }
    Ok(v)
}
