//! Mittag-Leffler series and the reciprocal gamma function.

use crate::error::{Error, Result};
use crate::numeric::Compensated;

const MAX_TERMS: usize = 10_000;

/// `1/Γ(x)`, zero at the poles and finite for every real `x`.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x < 171.0 {
        1.0 / libm::tgamma(x)
    } else {
        (-libm::lgamma(x)).exp()
    }
}

/// Two-parameter Mittag-Leffler function `E_{α,β}(z) = Σ z^k / Γ(αk + β)`.
///
/// Plain power series with compensated summation, so it is meant for
/// moderate arguments (|z| up to about 10) where the peak term does not
/// swamp the result.
pub fn mittag_leffler(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite() && beta.is_finite() && z.is_finite()) {
        return Err(Error::invalid("mittag_leffler", format!("need alpha > 0 and finite beta, z (got {alpha}, {beta}, {z})")));
    }
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    // Terms grow while Γ(α(k+1)+β)/Γ(αk+β) < |z|, i.e. roughly until
    // (αk + β)^α exceeds |z|; the stopping test only applies past that.
    let peak = ((z.abs().powf(1.0 / alpha) - beta) / alpha).max(0.0);
    let (ln_abs_z, z_negative) = (z.abs().ln(), z < 0.0);
    let mut sum = Compensated::new();
    let mut small_run = 0;
    for k in 0..MAX_TERMS {
        let x = alpha * k as f64 + beta;
        let term = if x > 0.0 {
            let mag = (k as f64 * ln_abs_z - libm::lgamma(x)).exp();
            if z_negative && k % 2 == 1 {
                -mag
            } else {
                mag
            }
        } else {
            z.powi(k as i32) * rgamma(x)
        };
        sum.add(term);
        let s = sum.value();
        if (k as f64) > peak && term.abs() <= 1e-16 * s.abs() {
            small_run += 1;
            if small_run >= 2 {
                return Ok(s);
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::convergence(
        "mittag_leffler",
        format!("series for E_{{{alpha},{beta}}}({z}) did not converge in {MAX_TERMS} terms; shrink the argument"),
    ))
}
