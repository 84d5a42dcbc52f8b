//! Deterministic responses: `C_Y = A_G C_U`.

use crate::bpf::{delta_spectral, BpfBasis, SpectralVector};
use crate::dosys::{self, DOSystem, ParamValues, Sense, Side, TermKind};
use crate::error::{Error, Result};
use crate::opmat;

fn require_deterministic(sys: &DOSystem) -> Result<()> {
    match sys.referenced_params().into_iter().next() {
        None => Ok(()),
        Some(name) => Err(Error::UnboundParameter {
            module: "detsolve (use stochsolve for random coefficients)",
            name,
        }),
    }
}

/// Output coefficients for the given input coefficients.
pub fn solve(sys: &DOSystem, input: &SpectralVector) -> Result<SpectralVector> {
    require_deterministic(sys)?;
    let ag = dosys::assemble_system_operator(sys, input.basis(), &ParamValues::new())?;
    opmat::apply(&ag, input)
}

/// Response to a unit impulse, approximated by a first-block rectangular pulse.
pub fn impulse_response(sys: &DOSystem, basis: &BpfBasis) -> Result<SpectralVector> {
    solve(sys, &delta_spectral(basis))
}

/// Solve with a nonzero constant initial value `y(0) = y0`.
///
/// The system must be a relaxation form: output terms are derivatives of
/// order at most one (point or distributed) plus an optional `c * I`, and the
/// input side is a single identity term `b * I`. With `y = x + y0` the shifted
/// problem `L x = b f - c y0` has zero initial conditions.
pub fn solve_ivp_shifted(sys: &DOSystem, y0: f64, forcing: &SpectralVector) -> Result<SpectralVector> {
    require_deterministic(sys)?;
    let none = ParamValues::new();
    let mut c = 0.0;
    for t in sys.lhs() {
        if t.is_identity() {
            c += t.coeff.resolve(&none)?;
            continue;
        }
        if t.sense == Sense::Integral {
            return Err(Error::UnsupportedForm(
                "integral terms on the output side do not annihilate a constant shift".into(),
            ));
        }
        let max_order = match &t.kind {
            TermKind::Point { order } => *order,
            TermKind::Distributed { upper, .. } => *upper,
        };
        if max_order > 1.0 {
            return Err(Error::UnsupportedForm(format!(
                "derivative order {max_order} > 1 needs more than one initial condition"
            )));
        }
    }
    let rhs: Vec<_> = sys.rhs().collect();
    let b = match rhs.as_slice() {
        [t] if t.is_identity() && t.side == Side::Rhs => t.coeff.resolve(&none)?,
        _ => {
            return Err(Error::UnsupportedForm(
                "the input side must be a single identity term".into(),
            ))
        }
    };
    let basis = forcing.basis();
    let lhs = dosys::lhs_operator(sys, basis, &none)?;
    let inv = opmat::invert_lower_toeplitz(&lhs).map_err(|e| Error::Assembly {
        system: sys.name().to_string(),
        reason: e.to_string(),
    })?;
    let shifted: Vec<f64> = forcing.coeffs().iter().map(|f| b * f - c * y0).collect();
    let x = opmat::apply(&inv, &SpectralVector::new(*basis, shifted)?)?;
    let y = x.coeffs().iter().map(|v| v + y0).collect();
    SpectralVector::new(*basis, y)
}
