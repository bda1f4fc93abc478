use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{FjupError, Result};

/// Conjugate gamma posterior over an exponential packet rate.
///
/// `shape` accumulates observed packet counts and `rate` accumulates observed
/// service time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPosterior {
    shape: f64,
    rate: f64,
}

impl GammaPosterior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(FjupError::InvalidParameter(format!(
                "gamma posterior needs shape > 0 and rate > 0, got ({shape}, {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Posterior after observing a chunk of `packets` packets served in `service` time.
    pub fn update(&self, packets: u32, service: f64) -> Self {
        debug_assert!(packets >= 1 && service > 0.0);
        Self {
            shape: self.shape + packets as f64,
            rate: self.rate + service,
        }
    }

    /// Posterior mean of the packet rate.
    pub fn mean_rate(&self) -> f64 {
        self.shape / self.rate
    }

    /// Log density of the posterior at `lambda`.
    pub fn ln_pdf(&self, lambda: f64) -> f64 {
        self.shape * self.rate.ln() - crate::special::ln_gamma(self.shape)
            + (self.shape - 1.0) * lambda.ln()
            - self.rate * lambda
    }

    /// Draws a packet rate from the posterior.
    pub fn sample_rate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated gamma parameters")
            .sample(rng)
    }

    /// Draws the service time of a `packets`-packet chunk from the posterior predictive.
    pub fn sample_predictive<R: Rng + ?Sized>(&self, packets: u32, rng: &mut R) -> f64 {
        assert!(packets >= 1, "predictive chunk size must be positive");
        let lambda = self.sample_rate(rng);
        Gamma::new(packets as f64, 1.0 / lambda)
            .expect("positive rate")
            .sample(rng)
    }
}
