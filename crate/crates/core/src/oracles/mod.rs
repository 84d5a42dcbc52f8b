//! Independent references for checking the spectral pipeline.

pub mod analytic;
pub mod freq;
pub mod gl;
pub mod mc;
pub mod quad;
pub mod special;

pub use analytic::{analytic_impulse_example1, impulse_distributed_integrator, talbot_inverse, variance_double_integrator};
pub use freq::{freq_response, steady_state_variance_frequency, transfer_at, FrequencyResponse};
pub use gl::{gl_solve, gl_solve_extrapolated, gl_weights};
pub use mc::{mc_moments, sample_gaussian_process, GaussianProcess, McConfig, McResult};
pub use special::{mittag_leffler, rgamma};
