//! Sinusoids in white Gaussian noise: scene synthesis, the marginalized
//! trans-dimensional posterior over `(k, omega_k)`, and a reversible-jump
//! sampler for it.

mod sampler;
mod scene;
mod target;

pub use sampler::{
    amplitude_posterior_mean, run_sampler, sample_amplitudes, AcceptanceStats, ChainState,
    MoveKernel, MoveStats, Periodogram, SamplerConfig, SamplerRun,
};
pub use scene::{design_matrix, synthesize_signal, SinusoidScene};
pub use target::{log_marginal_likelihood, log_target, TargetPrior, MIN_FREQUENCY_SPACING};
