//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    Panel {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// Integrate `f` over `[a, b]` to `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    integrate_with_limit(f, a, b, abs_tol, rel_tol, 4000)
}

pub fn integrate_with_limit<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("quadrature", "integration limits must be finite"));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let mut heap = BinaryHeap::new();
    let first = kronrod(&f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    heap.push(first);
    let mut panels = 1;
    loop {
        if !value.is_finite() {
            return Err(Error::non_finite("quadrature", format!("integrand on [{a}, {b}]")));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            break;
        }
        if panels >= max_panels {
            return Err(Error::convergence(
                "quadrature",
                format!("no convergence on [{a}, {b}] after {panels} panels (estimate {value:e} +- {error:e})"),
            ));
        }
        let worst = heap.pop().expect("heap holds every live panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // The panel cannot be split further in floating point.
            return Err(Error::convergence("quadrature", format!("panel at {mid} collapsed before convergence")));
        }
        let left = kronrod(&f, worst.a, mid);
        let right = kronrod(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        panels += 1;
    }
    // Re-add from scratch to shed drift from the incremental updates.
    let mut panels_vec: Vec<Panel> = heap.into_vec();
    panels_vec.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = crate::numeric::compensated_sum(panels_vec.iter().map(|p| p.value));
    let error = panels_vec.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error,
        evaluations: 15 * (2 * panels - 1),
    })
}
