//! Monte-Carlo reference: sample parameters and forcing paths, integrate
//! each path with the Grünwald–Letnikov stepper, and accumulate moments of
//! the per-block path averages (the same quantities the spectral moments
//! describe).
//!
//! Seeding rule: sample `k` draws everything from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `k`, so results do
//! not depend on thread count or scheduling.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::gl::{GlExtrapolator, GlKernel};
use crate::bpf::BpfBasis;
use crate::dosys::{DOSystem, ParamValues};
use crate::error::{Error, Result};
use crate::numeric::{pivoted_cholesky, Factor};
use crate::stochsolve::{CovarianceModel, ForcingSpec};

/// Gaussian process on a fixed grid, factored once.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    mean: Vec<f64>,
    rank: usize,
    factor: Vec<f64>,
}

impl GaussianProcess {
    /// Factor `cov(t_i, t_j)` by pivoted Cholesky with `1e-10 · trace`
    /// jitter; pivots below twice the jitter are dropped, so the sampled
    /// covariance differs from the target by at most that amount.
    pub fn new(mean_fn: impl Fn(f64) -> f64, cov_fn: impl Fn(f64, f64) -> f64, grid: &[f64]) -> Result<Self> {
        let n = grid.len();
        let mean: Vec<f64> = grid.iter().map(|&t| mean_fn(t)).collect();
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = cov_fn(grid[i], grid[j]);
                c[i * n + j] = v;
                c[j * n + i] = v;
            }
        }
        if mean.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("gaussian_process", "mean or covariance on the grid"));
        }
        let trace: f64 = (0..n).map(|i| c[i * n + i]).sum();
        let max_diag = (0..n).map(|i| c[i * n + i]).fold(0.0f64, f64::max);
        if trace <= 0.0 || max_diag == 0.0 {
            if c.iter().any(|&v| v != 0.0) {
                return Err(Error::PsdViolation { module: "gaussian_process", message: "covariance has no positive variance".into() });
            }
            return Ok(Self { mean, rank: 0, factor: Vec::new() });
        }
        let jitter = 1e-10 * trace;
        for i in 0..n {
            c[i * n + i] += jitter;
        }
        match pivoted_cholesky(&c, n, 2.0 * jitter / (max_diag + jitter)) {
            Factor::LowRank { rank, cols } => Ok(Self { mean, rank, factor: cols }),
            Factor::Indefinite { pivot, scale } => Err(Error::PsdViolation {
                module: "gaussian_process",
                message: format!("covariance is indefinite on the grid (pivot {pivot:.3e} against scale {scale:.3e})"),
            }),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.mean.len();
        let mut path = self.mean.clone();
        for k in 0..self.rank {
            let z: f64 = rng.sample(StandardNormal);
            for (p, l) in path.iter_mut().zip(&self.factor[k * n..(k + 1) * n]) {
                *p += z * l;
            }
        }
        path
    }
}

/// One path of a Gaussian process on `grid`, deterministic in `seed`.
pub fn sample_gaussian_process(
    mean_fn: impl Fn(f64) -> f64,
    cov_fn: impl Fn(f64, f64) -> f64,
    grid: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let gp = GaussianProcess::new(mean_fn, cov_fn, grid)?;
    Ok(gp.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    /// Draw parameters from a Halton sequence instead of the pseudorandom stream.
    pub halton: bool,
    /// Richardson-extrapolate the stepper (ignored for white-noise forcing,
    /// whose paths are too rough for it).
    pub extrapolate: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { samples: 10_000, seed: 0, halton: false, extrapolate: true }
    }
}

/// Empirical moments at block midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    pub variance_stderr: Vec<f64>,
    pub samples: usize,
}

/// Running central moments up to order four (Pébay's one-pass update).
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let t1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += t1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += t1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += t1;
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.n - 1.0)
    }

    fn mean_stderr(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    fn variance_stderr(&self) -> f64 {
        let n = self.n;
        let s2 = self.variance();
        let m4 = self.m4 / n;
        ((m4 - (n - 3.0) / (n - 1.0) * s2 * s2) / n).max(0.0).sqrt()
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

enum Stepper {
    Plain(GlKernel),
    Extrapolated(GlExtrapolator),
}

impl Stepper {
    fn solve(&self, input: &[f64]) -> Result<Vec<f64>> {
        match self {
            Stepper::Plain(k) => k.solve(input),
            Stepper::Extrapolated(e) => e.solve(input),
        }
    }
}

enum PathSource {
    Gp(GaussianProcess),
    White { mean: Vec<f64>, sd: f64 },
}

/// Monte-Carlo moments of the per-block averages of the output.
///
/// The stepper runs on `h/2` (and `h/4` when extrapolating) for block
/// width `h`, and block averages use Simpson's rule on the `h/2` grid.
pub fn mc_moments(sys: &DOSystem, forcing: &ForcingSpec, basis: &BpfBasis, config: &McConfig) -> Result<McResult> {
    if config.samples < 2 {
        return Err(Error::invalid("mc", "need at least two samples"));
    }
    if sys.random_params().len() > PRIMES.len() && config.halton {
        return Err(Error::invalid("mc", format!("Halton sampling supports at most {} parameters", PRIMES.len())));
    }
    forcing.validate()?;
    let n_blocks = basis.n_funcs();
    let white = matches!(forcing.covariance, CovarianceModel::White { .. });
    let extrapolate = config.extrapolate && !white;
    let coarse_step = 0.5 * basis.width();
    let coarse_len = 2 * n_blocks + 1;
    let (step, len) = if extrapolate { (0.5 * coarse_step, 2 * coarse_len - 1) } else { (coarse_step, coarse_len) };
    let grid: Vec<f64> = (0..len).map(|k| k as f64 * step).collect();

    let source = match &forcing.covariance {
        CovarianceModel::White { intensity } => PathSource::White {
            mean: grid.iter().map(|&t| forcing.mean.eval(t)).collect(),
            sd: (intensity / step).sqrt(),
        },
        kernel => PathSource::Gp(GaussianProcess::new(
            |t| forcing.mean.eval(t),
            |a, b| kernel.stationary(a - b).unwrap_or(0.0),
            &grid,
        )?),
    };

    let params = sys.random_params();
    let fixed_stepper = if params.is_empty() { Some(build_stepper(sys, &ParamValues::new(), step, len, extrapolate)?) } else { None };

    let run = |k: usize| -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(k as u64);
        let mut values = ParamValues::new();
        for (d, p) in params.iter().enumerate() {
            let u = if config.halton { radical_inverse(k as u64 + 1, PRIMES[d]) } else { rng.sample(Open01) };
            values.insert(p.name.clone(), p.distribution.quantile(u));
        }
        let input = match &source {
            PathSource::Gp(gp) => gp.sample(&mut rng),
            PathSource::White { mean, sd } => mean.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect(),
        };
        let local;
        let stepper = match &fixed_stepper {
            Some(s) => s,
            None => {
                local = build_stepper(sys, &values, step, len, extrapolate)?;
                &local
            }
        };
        let y = stepper.solve(&input)?;
        Ok((0..n_blocks).map(|i| (y[2 * i] + 4.0 * y[2 * i + 1] + y[2 * i + 2]) / 6.0).collect())
    };

    let mut acc = vec![Moments::default(); n_blocks];
    let chunk = 64 * rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < config.samples {
        let end = (start + chunk).min(config.samples);
        let part: Vec<Result<Vec<f64>>> = (start..end).into_par_iter().map(run).collect();
        for (offset, r) in part.into_iter().enumerate() {
            let avg = r.map_err(|e| Error::invalid("mc", format!("sample {}: {e}", start + offset)))?;
            for (m, x) in acc.iter_mut().zip(avg) {
                m.push(x);
            }
        }
        start = end;
    }
    Ok(McResult {
        times: basis.midpoints(),
        mean: acc.iter().map(|m| m.mean).collect(),
        variance: acc.iter().map(Moments::variance).collect(),
        mean_stderr: acc.iter().map(Moments::mean_stderr).collect(),
        variance_stderr: acc.iter().map(Moments::variance_stderr).collect(),
        samples: config.samples,
    })
}

fn build_stepper(sys: &DOSystem, values: &ParamValues, step: f64, len: usize, extrapolate: bool) -> Result<Stepper> {
    let mt = sys.multi_term(values)?;
    Ok(if extrapolate {
        Stepper::Extrapolated(GlExtrapolator::new(&mt, step, len)?)
    } else {
        Stepper::Plain(GlKernel::new(&mt, step, len)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dosys::{Coefficient, DensityTerm, RandomParameter, Sense, Side};
    use crate::stochsolve::{sinc, MeanModel};

    fn lag(params: Vec<RandomParameter>, c: Coefficient) -> DOSystem {
        DOSystem::new(
            "lag",
            vec![
                DensityTerm::point(Side::Lhs, Sense::Derivative, 1.0, Coefficient::Fixed(1.0)),
                DensityTerm::identity(Side::Lhs, c),
                DensityTerm::identity(Side::Rhs, Coefficient::Fixed(1.0)),
            ],
            params,
        )
        .unwrap()
    }

    #[test]
    fn moment_update_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 3.5, 0.25, 7.0, -1.0];
        let mut m = Moments::default();
        for &x in &xs {
            m.push(x);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>();
        assert!((m.mean - mean).abs() < 1e-14);
        assert!((m.m2 - c(2)).abs() < 1e-12);
        assert!((m.m3 - c(3)).abs() < 1e-11);
        assert!((m.m4 - c(4)).abs() < 1e-10);
    }

    #[test]
    fn halton_points() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn gp_zero_covariance_gives_the_mean() {
        let grid: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let p = sample_gaussian_process(|t| 2.0 * t, |_, _| 0.0, &grid, 3).unwrap();
        assert_eq!(p, grid.iter().map(|t| 2.0 * t).collect::<Vec<_>>());
    }

    #[test]
    fn gp_is_deterministic_in_the_seed() {
        let grid: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let cov = |a: f64, b: f64| 0.25 * sinc((a - b) / (2.0 * std::f64::consts::PI));
        let a = sample_gaussian_process(|_| 1.0, cov, &grid, 11).unwrap();
        let b = sample_gaussian_process(|_| 1.0, cov, &grid, 11).unwrap();
        let c = sample_gaussian_process(|_| 1.0, cov, &grid, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gp_rejects_indefinite_kernels() {
        let grid = [0.0, 1.0];
        let r = GaussianProcess::new(|_| 0.0, |a, b| if a == b { 1.0 } else { 2.0 }, &grid);
        assert!(matches!(r, Err(Error::PsdViolation { .. })));
    }

    #[test]
    fn gp_empirical_covariance() {
        let grid: Vec<f64> = (0..21).map(|k| k as f64 * 0.25).collect();
        let kern = |a: f64, b: f64| 0.25 * sinc((a - b) / (2.0 * std::f64::consts::PI));
        let gp = GaussianProcess::new(|_| 0.0, kern, &grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let pairs = [(0, 0), (0, 4), (3, 17), (20, 20), (5, 6)];
        let mut sums = [0.0; 5];
        let mut sq = [0.0; 5];
        for _ in 0..n {
            let p = gp.sample(&mut rng);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                let v = p[i] * p[j];
                sums[k] += v;
                sq[k] += v * v;
            }
        }
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let m = sums[k] / n as f64;
            let se = ((sq[k] / n as f64 - m * m) / n as f64).sqrt();
            let want = kern(grid[i], grid[j]);
            assert!((m - want).abs() < 3.0 * se, "pair {i},{j}: {m} vs {want} (se {se})");
        }
    }

    #[test]
    fn deterministic_case_has_no_spread() {
        let b = BpfBasis::new(16, 2.0).unwrap();
        let sys = lag(vec![], Coefficient::Fixed(1.0));
        let forcing = ForcingSpec { mean: MeanModel::Constant { value: 1.0 }, covariance: CovarianceModel::Table { lags: vec![0.0], values: vec![0.0] } };
        let cfg = McConfig { samples: 3, seed: 1, halton: false, extrapolate: false };
        let r = mc_moments(&sys, &forcing, &b, &cfg).unwrap();
        assert!(r.variance.iter().all(|&v| v.abs() < 1e-28));
        let mt = sys.multi_term(&ParamValues::new()).unwrap();
        let y = super::super::gl::gl_solve(&mt, &[1.0; 33], 1.0 / 16.0).unwrap();
        for i in 0..16 {
            let avg = (y[2 * i] + 4.0 * y[2 * i + 1] + y[2 * i + 2]) / 6.0;
            assert!((r.mean[i] - avg).abs() < 1e-14);
        }
    }

    #[test]
    fn reruns_are_identical_and_stderr_scales() {
        let b = BpfBasis::new(16, 2.0).unwrap();
        let sys = lag(vec![RandomParameter::uniform("c", 0.5, 1.5, 3)], Coefficient::Param("c".into()));
        let forcing = ForcingSpec {
            mean: MeanModel::Constant { value: 1.0 },
            covariance: CovarianceModel::Sinc { scale: 0.25, width: 2.0 * std::f64::consts::PI },
        };
        let cfg = McConfig { samples: 2000, seed: 42, halton: false, extrapolate: true };
        let a = mc_moments(&sys, &forcing, &b, &cfg).unwrap();
        let again = mc_moments(&sys, &forcing, &b, &cfg).unwrap();
        assert_eq!(a, again);
        let big = mc_moments(&sys, &forcing, &b, &McConfig { samples: 8000, ..cfg }).unwrap();
        let ratio = big.mean_stderr[15] / a.mean_stderr[15];
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
        let h = mc_moments(&sys, &forcing, &b, &McConfig { halton: true, ..cfg }).unwrap();
        assert!((h.mean[15] - a.mean[15]).abs() < 4.0 * a.mean_stderr[15]);
        assert!(mc_moments(&sys, &forcing, &b, &McConfig { samples: 1, ..cfg }).is_err());
    }

    #[test]
    fn white_noise_integrator_variance_grows_linearly() {
        let b = BpfBasis::new(32, 2.0).unwrap();
        let sys = DOSystem::new(
            "int",
            vec![
                DensityTerm::point(Side::Lhs, Sense::Derivative, 1.0, Coefficient::Fixed(1.0)),
                DensityTerm::identity(Side::Rhs, Coefficient::Fixed(1.0)),
            ],
            vec![],
        )
        .unwrap();
        let forcing = ForcingSpec { mean: MeanModel::Constant { value: 0.0 }, covariance: CovarianceModel::White { intensity: 1.0 } };
        let r = mc_moments(&sys, &forcing, &b, &McConfig { samples: 20_000, seed: 9, ..Default::default() }).unwrap();
        // Variance of a Wiener path averaged over [a, a + h] is a + h/3.
        for i in [4, 16, 31] {
            let want = b.edge(i) + b.width() / 3.0;
            assert!((r.variance[i] - want).abs() < 4.0 * r.variance_stderr[i] + 0.02 * want, "block {i}: {} vs {want}", r.variance[i]);
        }
    }
}
