pub mod bpf;
pub mod detsolve;
pub mod dosys;
pub mod error;
pub mod numeric;
pub mod opmat;
pub mod oracles;
pub mod stochsolve;

pub use bpf::{BpfBasis, SpectralMatrix, SpectralVector};
pub use dosys::DOSystem;
pub use error::{Error, Result};
pub use opmat::OpMatrix;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
