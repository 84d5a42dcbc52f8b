//! Closed-form references: the impulse response of a uniformly distributed
//! fractional integrator, a fixed-Talbot numerical inverse Laplace
//! transform, and the white-noise variance of a two-term fractional
//! integrator.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::quad;
use super::special::mittag_leffler;
use crate::error::{Error, Result};

/// Impulse response of `∫_{g1}^{g2} s^{-α} dα` for `0 <= g1 < g2 < 1`.
///
/// Inverts along the branch cut on the negative real axis, which gives
/// `h(t) = (1/π) ∫_0^∞ e^{-xt} Im[H(x e^{-iπ})] dx`, integrated on the
/// log scale `x = e^u` where both ends decay exponentially.
pub fn impulse_distributed_integrator(t: f64, g1: f64, g2: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("analytic", format!("impulse response needs t > 0, got {t}")));
    }
    if !(0.0 <= g1 && g1 < g2 && g2 < 1.0) {
        return Err(Error::invalid("analytic", format!("need 0 <= g1 < g2 < 1, got [{g1}, {g2}]")));
    }
    let branch = |g: f64, u: f64| (-g * u).exp() * ((g * PI).sin() * u + PI * (g * PI).cos());
    let f = |u: f64| {
        let x = u.exp();
        x * (-x * t).exp() / (u * u + PI * PI) * (branch(g1, u) - branch(g2, u))
    };
    // Left tail ~ e^{(1-g2) u}/u², right tail ~ exp(-t e^u).
    let u_lo = -60.0 / (1.0 - g2);
    let u_hi = (50.0 / t).ln().max(1.0);
    let left = quad::integrate(f, u_lo, 0.0, 1e-15, 1e-11)?;
    let right = quad::integrate(f, 0.0, u_hi, 1e-15, 1e-11)?;
    Ok((left.value + right.value) / PI)
}

/// Impulse response of `∫_{0.5}^{0.8} s^{-α} dα`.
pub fn analytic_impulse_example1(t: f64) -> Result<f64> {
    impulse_distributed_integrator(t, 0.5, 0.8)
}

/// Fixed-Talbot inversion of `F` at `t` with `m` contour nodes.
///
/// Double precision limits useful `m` to roughly 15..30.
pub fn talbot_inverse<F>(f: F, t: f64, m: usize) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    if !(t > 0.0) || m < 2 {
        return Err(Error::invalid("analytic", "Talbot inversion needs t > 0 and at least two nodes"));
    }
    let mf = m as f64;
    let r = 2.0 * mf / (5.0 * t);
    let mut sum = 0.5 * (f(Complex64::new(r, 0.0))? * (r * t).exp()).re;
    for k in 1..m {
        let theta = k as f64 * PI / mf;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        sum += ((s * t).exp() * f(s)? * Complex64::new(1.0, sigma)).re;
    }
    let v = r / mf * sum;
    if !v.is_finite() {
        return Err(Error::non_finite("analytic", format!("Talbot inversion at t = {t}")));
    }
    Ok(v)
}

/// Variance at `t` of `a1 D^{α1} y + a2 D^{α2} y = w` driven by unit white
/// noise: `(1/a2²) ∫_0^t u^{2(α2-1)} E_{α2-α1,α2}(-(a1/a2) u^{α2-α1})² du`.
///
/// With `v = u^{α2-α1}` the Mittag-Leffler argument is linear in `v` and
/// the endpoint factor becomes a power of `v`, so the substituted integrand
/// is smooth whenever `2 α2 - 1` is a multiple of `α2 - α1`.
pub fn variance_double_integrator(t: f64, a1: f64, a2: f64, alpha1: f64, alpha2: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("analytic", format!("variance needs t >= 0, got {t}")));
    }
    if !(0.0 <= alpha1 && alpha1 < alpha2 && alpha2 > 0.5) || a2 == 0.0 || !a1.is_finite() || !a2.is_finite() {
        return Err(Error::invalid(
            "analytic",
            format!("need 0 <= alpha1 < alpha2, alpha2 > 1/2 and a2 != 0 (got a = ({a1}, {a2}), alpha = ({alpha1}, {alpha2}))"),
        ));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let delta = alpha2 - alpha1;
    let c = a1 / a2;
    let v_max = t.powf(delta);
    // Fail early (and loudly) outside the series' comfortable range.
    mittag_leffler(delta, alpha2, -c * v_max)?;
    let power = (2.0 * alpha2 - 1.0) / delta - 1.0;
    let f = |v: f64| {
        let e = mittag_leffler(delta, alpha2, -c * v).unwrap_or(f64::NAN);
        let p = if power == 0.0 { 1.0 } else { v.powf(power) };
        p * e * e / delta
    };
    let r = quad::integrate(f, 0.0, v_max, 1e-15, 1e-11)?;
    Ok(r.value / (a2 * a2))
}
