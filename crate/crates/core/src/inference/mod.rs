//! Service-time resamplers for the subgradient estimator.
//!
//! Two families are covered: a conjugate gamma posterior for i.i.d. exponential
//! packet times, and Markov-modulated exponential services whose parameters are
//! fitted offline by EM and whose current hidden state is tracked online by
//! Viterbi decoding.
//!
//! Emission densities are written in the *rate* convention throughout: a chunk of
//! `m` packets observed in state `k` has density
//! `f(x | λ_k, m) = λ_k^m x^(m-1) e^(-λ_k x) / Γ(m)`, so the M-step rate update is
//! `λ_k = Σ ζ_nk m_n / Σ ζ_nk x_n`.

mod em;
mod mmpp;
mod posterior;
mod viterbi;

pub use em::{em_fit, em_iterate, forward_backward, log_likelihood, EmConfig, EmFit, Posteriors};
pub use mmpp::{resample_mm_service, MmppParams, Stepping};
pub(crate) use mmpp::sample_categorical as mmpp_sample_categorical;
pub use posterior::GammaPosterior;
pub use viterbi::{path_log_probability, viterbi_map, OnlineMap};

/// Log density of a gamma emission with known integer shape, rate convention.
pub(crate) fn ln_gamma_emission(x: f64, rate: f64, shape: u32) -> f64 {
    let m = shape as f64;
    m * rate.ln() + (m - 1.0) * x.ln() - rate * x - crate::special::ln_gamma(m)
}
