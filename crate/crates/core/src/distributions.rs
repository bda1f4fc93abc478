//! Per-packet latency laws and the distributions of k-packet chunks.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Weibull};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{FjupError, Result};
use crate::inference::MmppParams;
use crate::special::{erfc, gamma_lr, gamma_ur, ln_gamma, simpson};

/// Latency law of a single packet on one path. Rates are in 1/time.
#[derive(Debug, Clone, PartialEq)]
pub enum ServiceModel {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Weibull { scale: f64, shape: f64 },
    LogNormal { mu: f64, sigma: f64 },
    MarkovModulatedExp(MmppParams),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(FjupError::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ServiceModel {
    pub fn exponential(rate: f64) -> Result<Self> {
        positive("rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        positive("shape", shape)?;
        positive("rate", rate)?;
        Ok(Self::Gamma { shape, rate })
    }

    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        positive("scale", scale)?;
        positive("shape", shape)?;
        Ok(Self::Weibull { scale, shape })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(FjupError::InvalidParameter(format!("mu must be finite, got {mu}")));
        }
        positive("sigma", sigma)?;
        Ok(Self::LogNormal { mu, sigma })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Exponential { rate } => positive("rate", rate),
            Self::Gamma { shape, rate } => positive("shape", shape).and(positive("rate", rate)),
            Self::Weibull { scale, shape } => positive("scale", scale).and(positive("shape", shape)),
            Self::LogNormal { mu, sigma } => Self::lognormal(mu, sigma).map(|_| ()),
            Self::MarkovModulatedExp(_) => Ok(()),
        }
    }

    /// True when packet times are independent and identically distributed.
    pub fn is_iid(&self) -> bool {
        !matches!(self, Self::MarkovModulatedExp(_))
    }

    /// Mean packet time (stationary mean for modulated paths).
    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Gamma { shape, rate } => shape / rate,
            Self::Weibull { scale, shape } => scale * ln_gamma(1.0 + 1.0 / shape).exp(),
            Self::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            Self::MarkovModulatedExp(p) => p.mean_holding_time(),
        }
    }

    /// Packet-time variance; `None` for modulated paths.
    pub fn variance(&self) -> Option<f64> {
        Some(match self {
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Gamma { shape, rate } => shape / (rate * rate),
            Self::Weibull { scale, shape } => {
                let g1 = ln_gamma(1.0 + 1.0 / shape).exp();
                let g2 = ln_gamma(1.0 + 2.0 / shape).exp();
                scale * scale * (g2 - g1 * g1)
            }
            Self::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                (s2.exp() - 1.0) * (2.0 * mu + s2).exp()
            }
            Self::MarkovModulatedExp(_) => return None,
        })
    }

    /// Service rate used by the proportional heuristic: the stationary-weighted
    /// state rate for modulated paths, the reciprocal mean otherwise.
    pub fn mean_rate(&self) -> f64 {
        match self {
            Self::Exponential { rate } => *rate,
            Self::MarkovModulatedExp(p) => p.mean_rate(),
            other => 1.0 / other.mean(),
        }
    }

    /// CDF of a single packet time; `None` for modulated paths.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        if x <= 0.0 {
            return self.is_iid().then_some(0.0);
        }
        Some(match *self {
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
            Self::Gamma { shape, rate } => gamma_lr(shape, rate * x),
            Self::Weibull { scale, shape } => -(-(x / scale).powf(shape)).exp_m1(),
            Self::LogNormal { mu, sigma } => 0.5 * erfc(-(x.ln() - mu) / (sigma * std::f64::consts::SQRT_2)),
            Self::MarkovModulatedExp(_) => return None,
        })
    }

    /// Draws one packet time of an i.i.d. model. Modulated paths draw from the
    /// stationary mixture; use [`crate::inference::resample_mm_service`] to follow a chain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            Self::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate).unwrap().sample(rng),
            Self::Weibull { scale, shape } => Weibull::new(*scale, *shape).unwrap().sample(rng),
            Self::LogNormal { mu, sigma } => LogNormal::new(*mu, *sigma).unwrap().sample(rng),
            Self::MarkovModulatedExp(p) => {
                let pi = p.stationary();
                let s = crate::inference::mmpp_sample_categorical(&pi, rng);
                Exp::new(p.rates()[s]).unwrap().sample(rng)
            }
        }
    }

    /// Draws the service time of a `packets`-packet chunk of an i.i.d. model.
    pub fn sample_chunk<R: Rng + ?Sized>(&self, packets: u32, rng: &mut R) -> f64 {
        match self {
            _ if packets == 0 => 0.0,
            Self::Exponential { rate } => Gamma::new(packets as f64, 1.0 / rate).unwrap().sample(rng),
            Self::Gamma { shape, rate } => Gamma::new(packets as f64 * shape, 1.0 / rate).unwrap().sample(rng),
            other => (0..packets).map(|_| other.sample(rng)).sum(),
        }
    }
}

/// Discretization settings for chunk laws without a closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// The support `[0, T]` is split into `2^step_exp2` steps.
    pub step_exp2: u32,
    /// Maximum probability mass allowed beyond `T`.
    pub tail_tol: f64,
    /// Fixed support bound `T`; chosen from the moments when absent.
    pub support: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { step_exp2: 14, tail_tol: 1e-9, support: None }
    }
}

/// CDF sampled on a uniform grid, `values[i] = F(i * step)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedCdf {
    step: f64,
    values: Arc<Vec<f64>>,
}

impl DiscretizedCdf {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return if x < 0.0 { 0.0 } else { self.values[0] };
        }
        let pos = x / self.step;
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let w = pos - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// Distribution of the time needed to serve a chunk of `k` packets.
#[derive(Debug, Clone, PartialEq)]
pub enum ChunkCdf {
    /// Empty chunk: completes at time zero.
    Degenerate,
    Erlang { k: u32, rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Discretized(DiscretizedCdf),
}

impl ChunkCdf {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            _ if x < 0.0 => 0.0,
            Self::Degenerate => 1.0,
            Self::Erlang { k, rate } => gamma_lr(*k as f64, rate * x),
            Self::Gamma { shape, rate } => gamma_lr(*shape, rate * x),
            Self::Discretized(d) => d.cdf(x),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        match self {
            _ if x < 0.0 => 1.0,
            Self::Degenerate => 0.0,
            Self::Erlang { k, rate } => gamma_ur(*k as f64, rate * x),
            Self::Gamma { shape, rate } => gamma_ur(*shape, rate * x),
            Self::Discretized(d) => 1.0 - d.cdf(x),
        }
    }

    /// `∫ (1 - F)`, analytic where available.
    pub fn mean(&self) -> f64 {
        match self {
            Self::Degenerate => 0.0,
            Self::Erlang { k, rate } => *k as f64 / rate,
            Self::Gamma { shape, rate } => shape / rate,
            Self::Discretized(d) => {
                let v = d.values();
                let h = d.step();
                (1..v.len()).map(|i| h * (2.0 - v[i - 1] - v[i]) / 2.0).sum()
            }
        }
    }

    /// Point beyond which the survival function is below `tol`.
    pub fn effective_support(&self, tol: f64) -> f64 {
        match self {
            Self::Degenerate => 0.0,
            Self::Discretized(d) => d.support(),
            Self::Erlang { .. } | Self::Gamma { .. } => {
                let mean = self.mean();
                let mut hi = mean.max(f64::MIN_POSITIVE) * 2.0 + 1e-12;
                while self.survival(hi) > tol {
                    hi *= 1.5;
                }
                hi
            }
        }
    }

    /// Whether `F` reaches within `tol` of one on its support.
    pub fn is_proper(&self, tol: f64) -> bool {
        match self {
            Self::Discretized(d) => 1.0 - d.values().last().copied().unwrap_or(0.0) <= tol,
            _ => true,
        }
    }
}

/// CDF of the sum of `k` packet times on a path.
pub fn chunk_cdf(model: &ServiceModel, k: u32, grid: &GridSpec) -> Result<ChunkCdf> {
    if k == 0 {
        return Err(FjupError::InvalidParameter(
            "chunk size must be >= 1; empty chunks complete at time zero".into(),
        ));
    }
    model.validate()?;
    match *model {
        ServiceModel::Exponential { rate } => Ok(ChunkCdf::Erlang { k, rate }),
        ServiceModel::Gamma { shape, rate } => Ok(ChunkCdf::Gamma { shape: shape * k as f64, rate }),
        ServiceModel::Weibull { .. } | ServiceModel::LogNormal { .. } => convolve_on_grid(model, k, grid),
        ServiceModel::MarkovModulatedExp(_) => Err(FjupError::Unsupported(
            "Markov-modulated services have no closed-form chunk CDF".into(),
        )),
    }
}

const MAX_SUPPORT_DOUBLINGS: usize = 12;

fn convolve_on_grid(model: &ServiceModel, k: u32, grid: &GridSpec) -> Result<ChunkCdf> {
    if grid.step_exp2 == 0 || grid.step_exp2 > 24 {
        return Err(FjupError::InvalidParameter(format!("grid step_exp2 {} out of range 1..=24", grid.step_exp2)));
    }
    let kf = k as f64;
    let var = model.variance().expect("i.i.d. model");
    let auto_t = kf * model.mean() + 12.0 * (kf * var).sqrt();
    let mut t = grid.support.unwrap_or(auto_t);
    if !(t > 0.0 && t.is_finite()) {
        return Err(FjupError::InvalidParameter(format!("support bound {t} must be positive")));
    }
    for _ in 0..=MAX_SUPPORT_DOUBLINGS {
        let cdf = discretized_sum(model, k, t, grid.step_exp2);
        let missing = 1.0 - cdf.values().last().unwrap();
        if missing <= grid.tail_tol {
            return Ok(ChunkCdf::Discretized(cdf));
        }
        if grid.support.is_some() {
            let mut required = t;
            loop {
                required *= 2.0;
                let c = discretized_sum(model, k, required, grid.step_exp2);
                if 1.0 - c.values().last().unwrap() <= grid.tail_tol {
                    break;
                }
                if required > t * 2f64.powi(MAX_SUPPORT_DOUBLINGS as i32) {
                    break;
                }
            }
            return Err(FjupError::GridTooSmall { required });
        }
        t *= 2.0;
    }
    Err(FjupError::Divergent(format!(
        "chunk law of {model:?} with k={k} keeps more than the tail tolerance beyond T={t}"
    )))
}

fn discretized_sum(model: &ServiceModel, k: u32, t: f64, step_exp2: u32) -> DiscretizedCdf {
    let n = 1usize << step_exp2;
    let h = t / n as f64;
    // Zero padding so the circular convolution does not wrap the retained range.
    let len = 4 * n;
    let cdf = |x: f64| model.cdf(x).unwrap();
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|i| {
            let hi = cdf((i as f64 + 0.5) * h);
            let lo = if i == 0 { 0.0 } else { cdf((i as f64 - 0.5) * h) };
            Complex::new(hi - lo, 0.0)
        })
        .collect();
    let mut pmf: Vec<f64> = if k == 1 {
        buf.iter().map(|c| c.re).collect()
    } else {
        let mut planner = FftPlanner::<f64>::new();
        planner.plan_fft_forward(len).process(&mut buf);
        for c in buf.iter_mut() {
            *c = c.powu(k);
        }
        planner.plan_fft_inverse(len).process(&mut buf);
        buf.iter().map(|c| (c.re / len as f64).max(0.0)).collect()
    };
    pmf.truncate(n + 1);
    // Lattice point i stands for the cell [(i - 1/2)h, (i + 1/2)h].
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    let mut last = 0.0_f64;
    for p in &pmf {
        let v = (acc + 0.5 * p).clamp(0.0, 1.0).max(last);
        values.push(v);
        last = v;
        acc += p;
    }
    // The last grid point sits at T; report all mass at or below it.
    *values.last_mut().unwrap() = acc.min(1.0).max(last);
    DiscretizedCdf { step: h, values: Arc::new(values) }
}

/// `ln E[exp(θ S)]` for the sum `S` of `k` packet times.
pub fn mgf_log(model: &ServiceModel, k: u32, theta: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    let kf = k as f64;
    match *model {
        ServiceModel::Exponential { rate } => {
            if theta >= rate {
                return Err(FjupError::Domain { boundary: rate });
            }
            Ok(-kf * (-theta / rate).ln_1p())
        }
        ServiceModel::Gamma { shape, rate } => {
            if theta >= rate {
                return Err(FjupError::Domain { boundary: rate });
            }
            Ok(-kf * shape * (-theta / rate).ln_1p())
        }
        ServiceModel::Weibull { scale, shape } => {
            if shape == 1.0 {
                return mgf_log(&ServiceModel::Exponential { rate: 1.0 / scale }, k, theta);
            }
            if theta > 0.0 && shape < 1.0 {
                return Err(FjupError::Domain { boundary: 0.0 });
            }
            Ok(kf * weibull_mgf(scale, shape, theta).ln())
        }
        ServiceModel::LogNormal { mu, sigma } => {
            if theta > 0.0 {
                return Err(FjupError::Domain { boundary: 0.0 });
            }
            Ok(kf * lognormal_laplace(mu, sigma, theta).ln())
        }
        ServiceModel::MarkovModulatedExp(_) => Err(FjupError::Unsupported(
            "moment generating function of a modulated service".into(),
        )),
    }
}

/// `ln E[exp(-θ T)]` for a single draw `T` of the model (an inter-arrival time).
pub fn log_laplace(model: &ServiceModel, theta: f64) -> Result<f64> {
    mgf_log(model, 1, -theta)
}

/// Upper end of the effective MGF domain of a single packet time.
pub fn mgf_boundary(model: &ServiceModel) -> Result<f64> {
    match *model {
        ServiceModel::Exponential { rate } | ServiceModel::Gamma { rate, .. } => Ok(rate),
        ServiceModel::Weibull { scale, shape } if shape == 1.0 => Ok(1.0 / scale),
        ServiceModel::Weibull { shape, .. } if shape > 1.0 => Ok(f64::INFINITY),
        ServiceModel::Weibull { .. } | ServiceModel::LogNormal { .. } => Ok(0.0),
        ServiceModel::MarkovModulatedExp(_) => Err(FjupError::Unsupported(
            "moment generating function of a modulated service".into(),
        )),
    }
}

// In w = X/s: E[exp(θX)] = 1 + θ s ∫ exp(θ s w - w^c) dw, or for strongly
// negative θ the cancellation-free a s ∫ exp(-a s w) F(s w) dw with a = -θ.
fn weibull_mgf(scale: f64, shape: f64, theta: f64) -> f64 {
    let ts = theta * scale;
    if ts < -1.0 {
        let upper = 60.0 / -ts;
        let f = |w: f64| (ts * w).exp() * -(-w.powf(shape)).exp_m1();
        return -ts * simpson(f, 0.0, upper, 1 << 16);
    }
    let log_integrand = |w: f64| ts * w - w.powf(shape);
    let mut upper: f64 = 1.0;
    while log_integrand(upper) > -60.0 || upper < 4.0 {
        upper *= 1.25;
    }
    let shift = (0..=2000)
        .map(|i| log_integrand(upper * i as f64 / 2000.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let integral = simpson(|w| (log_integrand(w) - shift).exp(), 0.0, upper, 1 << 16) * shift.exp();
    1.0 + ts * integral
}

// E[exp(θX)], θ <= 0, for X = exp(mu + sigma Z).
fn lognormal_laplace(mu: f64, sigma: f64, theta: f64) -> f64 {
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    simpson(|z| phi(z) * (theta * (mu + sigma * z).exp()).exp(), -12.0, 12.0, 1 << 14)
}
