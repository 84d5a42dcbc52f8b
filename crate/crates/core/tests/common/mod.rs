//! The five worked systems, shared by the integration and acceptance tests.
#![allow(dead_code)]

use dorder::dosys::{Coefficient, Density, DensityTerm, RandomParameter, Sense, Side};
use dorder::stochsolve::{CovarianceModel, ForcingSpec, MeanModel};
use dorder::DOSystem;

fn fixed(c: f64) -> Coefficient {
    Coefficient::Fixed(c)
}

/// `y = ∫_{0.5}^{0.8} I^α u dα`.
pub fn example1(q: usize) -> DOSystem {
    DOSystem::new(
        "example1",
        vec![
            DensityTerm::identity(Side::Lhs, fixed(1.0)),
            DensityTerm::distributed(Side::Rhs, Sense::Integral, Density::Constant { value: 1.0 }, 0.5, 0.8, q, fixed(1.0)),
        ],
        vec![],
    )
    .unwrap()
}

/// `D^{6α(1-α)} y + 0.1 y = 0` (its input side is a unit identity for the shifted solve).
pub fn example2(q: usize) -> DOSystem {
    DOSystem::new(
        "example2",
        vec![
            DensityTerm::distributed(Side::Lhs, Sense::Derivative, Density::parabolic(), 0.0, 1.0, q, fixed(1.0)),
            DensityTerm::identity(Side::Lhs, fixed(0.1)),
            DensityTerm::identity(Side::Rhs, fixed(1.0)),
        ],
        vec![],
    )
    .unwrap()
}

/// `a1 D^{α1} y + a2 D^{α2} y = u`.
pub fn example3(a1: f64, a2: f64, alpha1: f64, alpha2: f64) -> DOSystem {
    DOSystem::new(
        "example3",
        vec![
            DensityTerm::point(Side::Lhs, Sense::Derivative, alpha1, fixed(a1)),
            DensityTerm::point(Side::Lhs, Sense::Derivative, alpha2, fixed(a2)),
            DensityTerm::identity(Side::Rhs, fixed(1.0)),
        ],
        vec![],
    )
    .unwrap()
}

fn second_order_with_band(a: Coefficient, b: Coefficient, q: usize, params: Vec<RandomParameter>, name: &str) -> DOSystem {
    DOSystem::new(
        name,
        vec![
            DensityTerm::point(Side::Lhs, Sense::Derivative, 2.0, fixed(1.0)),
            DensityTerm::distributed(Side::Lhs, Sense::Derivative, Density::Constant { value: 1.0 }, 0.8015, 0.8893, q, a),
            DensityTerm::identity(Side::Lhs, b),
            DensityTerm::identity(Side::Rhs, fixed(1.0)),
        ],
        params,
    )
    .unwrap()
}

/// `y'' + 10 ∫_{0.8015}^{0.8893} D^α y dα + y = u`.
pub fn example4(q: usize) -> DOSystem {
    second_order_with_band(fixed(10.0), fixed(1.0), q, vec![], "example4")
}

/// Example 4 with `a ~ U[9.5, 10.5]`, `b ~ U[0.5, 1]`, per-parameter order `p`.
pub fn example5(p: usize) -> DOSystem {
    second_order_with_band(
        Coefficient::Param("a".into()),
        Coefficient::Param("b".into()),
        3,
        vec![RandomParameter::uniform("a", 9.5, 10.5, p), RandomParameter::uniform("b", 0.5, 1.0, p)],
        "example5",
    )
}

pub fn white_noise(intensity: f64) -> ForcingSpec {
    ForcingSpec {
        mean: MeanModel::Constant { value: 0.0 },
        covariance: CovarianceModel::White { intensity },
    }
}

/// Unit mean with covariance `0.25 sinc((t1 - t2) / 2π)`.
pub fn example5_forcing() -> ForcingSpec {
    ForcingSpec {
        mean: MeanModel::Constant { value: 1.0 },
        covariance: CovarianceModel::Sinc { scale: 0.25, width: 2.0 * std::f64::consts::PI },
    }
}
