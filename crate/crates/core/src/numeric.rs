//! Small numerical helpers shared across modules: compensated summation,
//! triangular Toeplitz convolution and the Gauss rules used everywhere.

use crate::error::{Error, Result};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Compensated::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Forward dot product, written so the compiler can vectorize it.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        lanes[0] += a[i] * b[i];
        lanes[1] += a[i + 1] * b[i + 1];
        lanes[2] += a[i + 2] * b[i + 2];
        lanes[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Truncated causal convolution: `out[k] = sum_{j<=k} a[j] * b[k-j]` for `k < a.len()`.
///
/// This is the product of two lower-triangular Toeplitz matrices (by first
/// column) and also a Toeplitz matrix-vector product.
pub(crate) fn causal_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    let rev: Vec<f64> = b.iter().rev().copied().collect();
    (0..n).map(|k| dot(&a[..=k], &rev[n - 1 - k..])).collect()
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::invalid("quadrature", "Gauss-Legendre order must be >= 1"));
    }
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Gauss-Legendre rule mapped affinely onto [a, b].
pub fn gauss_legendre_on(order: usize, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w) = gauss_legendre(order)?;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok((
        x.iter().map(|&xi| mid + half * xi).collect(),
        w.iter().map(|&wi| half * wi).collect(),
    ))
}

/// Probabilists' Gauss-Hermite rule (weight `exp(-x^2/2)/sqrt(2 pi)`), so the
/// weights sum to one. Golub-Welsch on the Jacobi matrix.
pub fn gauss_hermite_prob(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::invalid("quadrature", "Gauss-Hermite order must be >= 1"));
    }
    let n = order;
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    // Symmetrize: the rule is exactly symmetric about zero.
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
    for i in 0..n / 2 {
        let x = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Outcome of [`pivoted_cholesky`].
#[derive(Debug, Clone)]
pub(crate) enum Factor {
    /// `a ≈ L Lᵀ` with `L` stored column-major as `n × rank`.
    LowRank { rank: usize, cols: Vec<f64> },
    /// A pivot went negative beyond the tolerance.
    Indefinite { pivot: f64, scale: f64 },
}

/// Diagonally pivoted Cholesky of a symmetric row-major `n × n` matrix.
///
/// Stops once every remaining pivot is below `rel_tol * max(diag)`, so the
/// dropped remainder is PSD with entries bounded by that threshold. Cost is
/// O(n r²) for numerical rank r.
pub(crate) fn pivoted_cholesky(a: &[f64], n: usize, rel_tol: f64) -> Factor {
    debug_assert_eq!(a.len(), n * n);
    let mut d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let scale = d.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let neg_tol = 1e-8 * scale;
    if let Some(&worst) = d.iter().find(|&&x| x < -neg_tol) {
        return Factor::Indefinite { pivot: worst, scale };
    }
    let mut done = vec![false; n];
    let mut cols: Vec<f64> = Vec::new();
    let mut rank = 0;
    while rank < n {
        let (p, &dp) = d
            .iter()
            .enumerate()
            .filter(|(i, _)| !done[*i])
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("rank < n leaves a live index");
        if dp <= rel_tol * scale || dp <= 0.0 {
            break;
        }
        let lp = dp.sqrt();
        let mut col = vec![0.0; n];
        col[p] = lp;
        done[p] = true;
        for i in (0..n).filter(|&i| !done[i]) {
            let mut s = a[i * n + p];
            for k in 0..rank {
                s -= cols[k * n + i] * cols[k * n + p];
            }
            let li = s / lp;
            col[i] = li;
            d[i] -= li * li;
            if d[i] < -neg_tol {
                return Factor::Indefinite { pivot: d[i], scale };
            }
        }
        d[p] = 0.0;
        cols.extend_from_slice(&col);
        rank += 1;
    }
    Factor::LowRank { rank, cols }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pivoted_cholesky_reconstructs_low_rank() {
        let n = 6;
        let u = [1.0, 2.0, -1.0, 0.5, 0.0, 3.0];
        let v = [0.0, 1.0, 1.0, -2.0, 1.0, 0.5];
        let a: Vec<f64> = (0..n * n).map(|k| u[k / n] * u[k % n] + v[k / n] * v[k % n]).collect();
        match pivoted_cholesky(&a, n, 1e-14) {
            Factor::LowRank { rank, cols, .. } => {
                assert_eq!(rank, 2);
                for i in 0..n {
                    for j in 0..n {
                        let r: f64 = (0..rank).map(|k| cols[k * n + i] * cols[k * n + j]).sum();
                        assert!((r - a[i * n + j]).abs() < 1e-12);
                    }
                }
            }
            other => panic!("{other:?}"),
        }
        let indefinite = [1.0, 2.0, 2.0, 1.0];
        assert!(matches!(pivoted_cholesky(&indefinite, 2, 1e-14), Factor::Indefinite { .. }));
        assert!(matches!(pivoted_cholesky(&[0.0; 9], 3, 1e-14), Factor::LowRank { rank: 0, .. }));
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for order in 1..=12 {
            let (x, w) = gauss_legendre(order).unwrap();
            for deg in 0..(2 * order) {
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "order {order} deg {deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn two_point_legendre_nodes() {
        let (x, w) = gauss_legendre(2).unwrap();
        assert_relative_eq!(x[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hermite_moments() {
        // E[x^{2k}] = (2k-1)!! under the standard normal.
        let (x, w) = gauss_hermite_prob(6).unwrap();
        let moment = |p: i32| -> f64 { x.iter().zip(&w).map(|(a, b)| b * a.powi(p)).sum() };
        assert_relative_eq!(moment(0), 1.0, epsilon = 1e-14);
        assert!(moment(1).abs() < 1e-14);
        assert_relative_eq!(moment(2), 1.0, epsilon = 1e-12);
        assert_relative_eq!(moment(4), 3.0, epsilon = 1e-12);
        assert_relative_eq!(moment(10), 945.0, epsilon = 1e-9);
    }

    #[test]
    fn compensated_beats_naive() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn convolution_matches_naive() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [0.5, -1.0, 0.25, 2.0, 0.0, 1.0];
        let got = causal_convolve(&a, &b);
        for k in 0..a.len() {
            let want: f64 = (0..=k).map(|j| a[j] * b[k - j]).sum();
            assert!((got[k] - want).abs() < 1e-14);
        }
    }
}
