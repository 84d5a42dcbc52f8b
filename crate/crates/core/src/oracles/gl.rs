//! Grünwald–Letnikov time stepping for multi-term fractional systems.
//!
//! `Σ a_i D^{α_i} y = Σ b_j D^{β_j} u` on `t_n = n h` with `y_0 = 0`.
//! Orders may be negative (fractional integrals); the binomial weights
//! `w_k = w_{k-1} (1 - (α + 1)/k)` cover both senses.

use crate::dosys::MultiTermSystem;
use crate::error::{Error, Result};
use crate::numeric::dot;

/// First `len` Grünwald–Letnikov weights of order `alpha`.
pub fn gl_weights(alpha: f64, len: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(len);
    if len == 0 {
        return w;
    }
    w.push(1.0);
    for k in 1..len {
        let prev = w[k - 1];
        w.push(prev * (1.0 - (alpha + 1.0) / k as f64));
    }
    w
}

/// Combined, reversed kernels of a system on a fixed grid.
#[derive(Debug, Clone)]
pub struct GlKernel {
    len: usize,
    lhs_rev: Vec<f64>,
    lead: f64,
    rhs: RhsKernel,
}

#[derive(Debug, Clone)]
enum RhsKernel {
    /// Only zero-order input terms: `r_n = gain · u_n`.
    Gain(f64),
    Reversed(Vec<f64>),
}

fn combine(terms: &[crate::dosys::OrderTerm], step: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for t in terms {
        let scale = t.weight * step.powf(-t.order);
        for (o, w) in out.iter_mut().zip(gl_weights(t.order, len)) {
            *o += scale * w;
        }
    }
    out
}

impl GlKernel {
    pub fn new(sys: &MultiTermSystem, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || len == 0 {
            return Err(Error::invalid("gl", "need a positive step and a nonempty grid"));
        }
        let lhs = combine(&sys.lhs, step, len);
        let lead = lhs[0];
        if lead == 0.0 || !lead.is_finite() {
            return Err(Error::Singular { leading: lead });
        }
        let rhs = if sys.rhs.iter().all(|t| t.order == 0.0) {
            RhsKernel::Gain(sys.rhs.iter().map(|t| t.weight).sum())
        } else {
            let mut v = combine(&sys.rhs, step, len);
            v.reverse();
            RhsKernel::Reversed(v)
        };
        let mut lhs_rev = lhs;
        lhs_rev.reverse();
        Ok(Self { len, lhs_rev, lead, rhs })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Response to `input` sampled on the kernel's grid.
    pub fn solve(&self, input: &[f64]) -> Result<Vec<f64>> {
        let l = self.len;
        if input.len() != l {
            return Err(Error::invalid("gl", format!("input has {} samples, kernel expects {l}", input.len())));
        }
        let mut y = vec![0.0; l];
        for n in 1..l {
            let r = match &self.rhs {
                RhsKernel::Gain(g) => g * input[n],
                RhsKernel::Reversed(v) => dot(&v[l - 1 - n..], &input[..=n]),
            };
            let history = dot(&self.lhs_rev[l - 1 - n..l - 1], &y[..n]);
            y[n] = (r - history) / self.lead;
        }
        if let Some(n) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite("gl", format!("solution at step {n}")));
        }
        Ok(y)
    }
}

/// Solve on the grid `t_n = n · step`, `n = 0..input.len()`.
pub fn gl_solve(sys: &MultiTermSystem, input: &[f64], step: f64) -> Result<Vec<f64>> {
    GlKernel::new(sys, step, input.len())?.solve(input)
}

/// Paired fine/coarse kernels for Richardson extrapolation.
#[derive(Debug, Clone)]
pub struct GlExtrapolator {
    fine: GlKernel,
    coarse: GlKernel,
}

impl GlExtrapolator {
    /// `fine_len` must be odd: the coarse grid takes every other point.
    pub fn new(sys: &MultiTermSystem, fine_step: f64, fine_len: usize) -> Result<Self> {
        if fine_len % 2 == 0 {
            return Err(Error::invalid("gl", "extrapolation needs an odd number of fine samples"));
        }
        Ok(Self {
            fine: GlKernel::new(sys, fine_step, fine_len)?,
            coarse: GlKernel::new(sys, 2.0 * fine_step, fine_len / 2 + 1)?,
        })
    }

    /// `2 y_{h} - y_{2h}` on the coarse grid, cancelling the O(h) error.
    pub fn solve(&self, fine_input: &[f64]) -> Result<Vec<f64>> {
        let coarse_input: Vec<f64> = fine_input.iter().step_by(2).copied().collect();
        let yf = self.fine.solve(fine_input)?;
        let yc = self.coarse.solve(&coarse_input)?;
        Ok(yc.iter().enumerate().map(|(n, c)| 2.0 * yf[2 * n] - c).collect())
    }
}

/// One-shot form of [`GlExtrapolator`].
pub fn gl_solve_extrapolated(sys: &MultiTermSystem, fine_input: &[f64], fine_step: f64) -> Result<Vec<f64>> {
    GlExtrapolator::new(sys, fine_step, fine_input.len())?.solve(fine_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dosys::OrderTerm;
    use crate::oracles::special::mittag_leffler;

    fn sys(lhs: &[(f64, f64)], rhs: &[(f64, f64)]) -> MultiTermSystem {
        let mk = |v: &[(f64, f64)]| v.iter().map(|&(order, weight)| OrderTerm { order, weight }).collect();
        MultiTermSystem { lhs: mk(lhs), rhs: mk(rhs) }
    }

    #[test]
    fn weights() {
        assert_eq!(gl_weights(1.0, 4), vec![1.0, -1.0, 0.0, 0.0]);
        assert_eq!(gl_weights(2.0, 4), vec![1.0, -2.0, 1.0, 0.0]);
        assert_eq!(gl_weights(0.0, 3), vec![1.0, 0.0, 0.0]);
        // Order -1 is the running sum.
        assert_eq!(gl_weights(-1.0, 4), vec![1.0, 1.0, 1.0, 1.0]);
        let w = gl_weights(0.5, 200);
        assert!(w.iter().sum::<f64>().abs() < 0.05);
    }

    #[test]
    fn integrator_gives_exact_ramp() {
        let s = sys(&[(1.0, 1.0)], &[(0.0, 1.0)]);
        let h = 0.01;
        let y = gl_solve(&s, &[1.0; 101], h).unwrap();
        for (n, v) in y.iter().enumerate() {
            assert!((v - n as f64 * h).abs() < 1e-13);
        }
        // Same through a first-order integral on the input side.
        let s = sys(&[(0.0, 1.0)], &[(-1.0, 1.0)]);
        let y = gl_solve(&s, &[1.0; 101], h).unwrap();
        assert!((y[100] - 1.01).abs() < 1e-12);
    }

    #[test]
    fn half_order_relaxation_matches_mittag_leffler() {
        // D^{1/2} y + y = 0, y(0) = 1, shifted: y = 1 + x with D^{1/2} x + x = -1.
        let s = sys(&[(0.5, 1.0), (0.0, 1.0)], &[(0.0, 1.0)]);
        let mut last = (f64::INFINITY, f64::INFINITY);
        for m in [200, 400, 800] {
            let h = 2.0 / m as f64;
            let x = gl_solve(&s, &vec![-1.0; m + 1], h).unwrap();
            let err = |from: usize| {
                (from..=m)
                    .map(|n| {
                        let t = n as f64 * h;
                        (1.0 + x[n] - mittag_leffler(0.5, 1.0, -t.sqrt()).unwrap()).abs()
                    })
                    .fold(0.0, f64::max)
            };
            // The sqrt(t) start limits the rate near the origin; away from it
            // the scheme is first order.
            let (near, far) = (err(1), err(m / 4));
            assert!(near < 0.2 * h.sqrt() && near < last.0);
            assert!(far < 0.2 * h && far < last.1);
            last = (near, far);
        }
    }

    #[test]
    fn extrapolation_raises_the_order() {
        // y'' + y = 1 from rest: y = 1 - cos t.
        let s = sys(&[(2.0, 1.0), (0.0, 1.0)], &[(0.0, 1.0)]);
        let solve = |m: usize| {
            let h = 4.0 / m as f64;
            let y = gl_solve_extrapolated(&s, &vec![1.0; 2 * m + 1], h / 2.0).unwrap();
            (0..=m).map(|n| (y[n] - (1.0 - (n as f64 * h).cos())).abs()).fold(0.0, f64::max)
        };
        let plain = {
            let m = 200;
            let h = 4.0 / m as f64;
            let y = gl_solve(&s, &vec![1.0; m + 1], h).unwrap();
            (0..=m).map(|n| (y[n] - (1.0 - (n as f64 * h).cos())).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (solve(100), solve(200));
        assert!(e2 < plain / 10.0, "{e2} vs {plain}");
        assert!(e1 / e2 > 3.0, "{e1} {e2}");
    }

    #[test]
    fn errors() {
        assert!(matches!(gl_solve(&sys(&[], &[(0.0, 1.0)]), &[0.0; 4], 0.1), Err(Error::Singular { .. })));
        assert!(gl_solve(&sys(&[(1.0, 1.0)], &[(0.0, 1.0)]), &[0.0; 4], 0.0).is_err());
        assert!(gl_solve_extrapolated(&sys(&[(1.0, 1.0)], &[(0.0, 1.0)]), &[0.0; 4], 0.1).is_err());
        let k = GlKernel::new(&sys(&[(1.0, 1.0)], &[(0.0, 1.0)]), 0.1, 5).unwrap();
        assert!(k.solve(&[0.0; 4]).is_err());
    }
}
