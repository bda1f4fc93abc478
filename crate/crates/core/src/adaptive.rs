//! Online projected subgradient descent on the proportion vector.
//!
//! After batch `j` the scheduler knows every chunk time so far and the gap
//! `t_j`. The next waiting time, seen as a function of the proportions used
//! for batch `j`, is
//! `max{0, max_{n,k} [x_{n,j} S_{n,j} - t_j + Σ_{i=1}^{k-1} (c_{n,j-i} - t_{j-i})]}`.
//! The full-batch service time `S_{n,j}` is resampled `M` times and the
//! subgradient is averaged over the samples.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::distributions::ServiceModel;
use crate::error::{FjupError, Result};
use crate::inference::{resample_mm_service, GammaPosterior, MmppParams, OnlineMap, Stepping};
use crate::intermittent::{self, Allocation};
use crate::sim::{BatchContext, Feedback, PathConfig, Policy};

/// Point of the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionVector(Vec<f64>);

impl ProportionVector {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        let s: f64 = x.iter().sum();
        if x.is_empty() || x.iter().any(|v| !(0.0..=1.0).contains(v)) || (s - 1.0).abs() > 1e-9 {
            return Err(FjupError::InvalidParameter(format!("{x:?} is not a proportion vector")));
        }
        Ok(Self(x))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Euclidean projection onto the simplex by the sorted-threshold rule.
pub fn project_simplex(v: &[f64]) -> ProportionVector {
    assert!(!v.is_empty() && v.iter().all(|x| x.is_finite()), "finite, non-empty input required");
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        acc += ui;
        let t = (acc - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    let mut x: Vec<f64> = v.iter().map(|&vi| (vi - tau).max(0.0)).collect();
    // Remove the last rounding residue so the entries sum to one.
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        x.iter_mut().for_each(|e| *e /= s);
    }
    ProportionVector(x)
}

/// `⟨x K⟩`: floors on the first `N-1` paths, remainder on the last.
pub fn round_allocation(x: &ProportionVector, total: u32) -> Allocation {
    intermittent::round_allocation(x.as_slice(), total).expect("proportion vectors round cleanly")
}

/// Batches since the last regeneration point, oldest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryWindow {
    chunk_times: VecDeque<Vec<f64>>,
    gaps: VecDeque<f64>,
}

impl HistoryWindow {
    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn push(&mut self, chunk_times: Vec<f64>, gap: f64) {
        self.chunk_times.push_back(chunk_times);
        self.gaps.push_back(gap);
    }

    pub fn clear(&mut self) {
        self.chunk_times.clear();
        self.gaps.clear();
    }

    fn pop_front(&mut self) {
        self.chunk_times.pop_front();
        self.gaps.pop_front();
    }

    /// Backlog each path carries into the batch after the window.
    pub fn backlogs(&self, paths: usize) -> Vec<f64> {
        let mut w = vec![0.0; paths];
        for (c, t) in self.chunk_times.iter().zip(&self.gaps) {
            for n in 0..paths {
                w[n] = (w[n] + c[n] - t).max(0.0);
            }
        }
        w
    }
}

/// Monte-Carlo subgradient with its per-coordinate standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgradient {
    pub g: Vec<f64>,
    pub se: Vec<f64>,
}

fn finish(sum: Vec<f64>, sq: Vec<f64>, m: usize) -> Subgradient {
    let mf = m as f64;
    let g: Vec<f64> = sum.iter().map(|s| s / mf).collect();
    let se = sq
        .iter()
        .zip(&g)
        .map(|(q, mean)| if m > 1 { ((q / mf - mean * mean).max(0.0) * mf / (mf - 1.0) / mf).sqrt() } else { 0.0 })
        .collect();
    Subgradient { g, se }
}

/// Subgradient from the current backlogs. Each row of `samples` holds one
/// draw of `S_{n,j}` for every path.
pub fn estimate_subgradient(x: &[f64], backlogs: &[f64], gap: f64, samples: &[Vec<f64>]) -> Subgradient {
    let n = x.len();
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for s in samples {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..n {
            let v = backlogs[i] + x[i] * s[i];
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        if best_v - gap > 0.0 {
            sum[best] += s[best];
            sq[best] += s[best] * s[best];
        }
    }
    finish(sum, sq, samples.len().max(1))
}

/// Subgradient evaluated term by term over the whole window.
///
/// `proportions[i]` and `gaps[i]` describe batch `j - L + i` with the last
/// entry being batch `j`. `samples[m][i][n]` is the `m`-th draw of the
/// full-batch service time of path `n` in that batch; history entries may be
/// observed values repeated across draws.
pub fn estimate_subgradient_literal(proportions: &[Vec<f64>], gaps: &[f64], samples: &[Vec<Vec<f64>>]) -> Subgradient {
    let len = gaps.len();
    let n = proportions[len - 1].len();
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for s in samples {
        if let Some((path, value)) = literal_maximizer(proportions, gaps, s) {
            if value > 0.0 {
                let v = s[len - 1][path];
                sum[path] += v;
                sq[path] += v * v;
            }
        }
    }
    finish(sum, sq, samples.len().max(1))
}

// (n*, chain value) maximizing Σ_{i=0}^{k-1} (x_{n,j-i} S_{n,j-i} - t_{j-i}).
fn literal_maximizer(proportions: &[Vec<f64>], gaps: &[f64], s: &[Vec<f64>]) -> Option<(usize, f64)> {
    let len = gaps.len();
    let n = proportions[len - 1].len();
    let mut best: Option<(usize, f64)> = None;
    for path in 0..n {
        let mut acc = 0.0;
        for i in (0..len).rev() {
            acc += proportions[i][path] * s[i][path] - gaps[i];
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((path, acc));
            }
        }
    }
    best
}

/// Monte-Carlo average of the next waiting time, the cost whose subgradient
/// the estimators return.
pub fn mc_cost(proportions: &[Vec<f64>], gaps: &[f64], samples: &[Vec<Vec<f64>>]) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| literal_maximizer(proportions, gaps, s).map_or(0.0, |(_, v)| v.max(0.0)))
        .sum();
    total / samples.len().max(1) as f64
}

/// Projected step: descent `x - ηg` by default, ascent `x + ηg` with `paper_sign`.
pub fn step(x: &ProportionVector, g: &[f64], eta: f64, paper_sign: bool) -> ProportionVector {
    let sign = if paper_sign { 1.0 } else { -1.0 };
    let v: Vec<f64> = x.as_slice().iter().zip(g).map(|(xi, gi)| xi + sign * eta * gi).collect();
    if g.iter().all(|gi| *gi == 0.0) {
        return x.clone();
    }
    project_simplex(&v)
}

/// Source of service-time resamples.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerKind {
    /// The true path laws (true parameters with an online MAP state for
    /// modulated paths).
    Oracle,
    /// Conjugate gamma posterior on each path's exponential rate.
    IidPosterior { prior_shape: f64, prior_rate: f64 },
    /// Trained modulated models with an online MAP state.
    MmMap { params: Vec<MmppParams> },
    /// The most recent observation only.
    Ose,
}

impl SamplerKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::IidPosterior { .. } => "iid_posterior",
            Self::MmMap { .. } => "mm_map",
            Self::Ose => "ose",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub eta: f64,
    /// Monte-Carlo samples per decision.
    pub samples: usize,
    pub sampler: SamplerKind,
    pub paper_sign: bool,
    /// Hard cap on the history window, in batches.
    pub window_cap: usize,
    /// Keep the history from the last regeneration point only.
    pub truncate_at_regeneration: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            samples: 100,
            sampler: SamplerKind::IidPosterior { prior_shape: 1.0, prior_rate: 1.0 },
            paper_sign: false,
            window_cap: 1000,
            truncate_at_regeneration: true,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self, paths: usize) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(FjupError::InvalidParameter(format!("learning rate {} must be positive", self.eta)));
        }
        if self.samples == 0 {
            return Err(FjupError::InvalidParameter("at least one Monte-Carlo sample is required".into()));
        }
        if self.window_cap == 0 {
            return Err(FjupError::InvalidParameter("window cap must be positive".into()));
        }
        match &self.sampler {
            SamplerKind::IidPosterior { prior_shape, prior_rate } => {
                GammaPosterior::new(*prior_shape, *prior_rate)?;
            }
            SamplerKind::MmMap { params } if params.len() != paths => {
                return Err(FjupError::InvalidParameter(format!(
                    "{} trained models for {paths} paths",
                    params.len()
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

enum PathSampler {
    Model(ServiceModel),
    Posterior(GammaPosterior),
    Map { map: OnlineMap },
    Ose { per_packet: Option<f64>, fallback: f64 },
}

impl PathSampler {
    fn observe(&mut self, packets: u32, chunk_time: f64) {
        if packets == 0 {
            return;
        }
        match self {
            Self::Model(_) => {}
            Self::Posterior(p) => {
                if chunk_time > 0.0 {
                    *p = p.update(packets, chunk_time);
                }
            }
            Self::Map { map } => {
                if chunk_time > 0.0 {
                    map.observe(chunk_time, packets);
                }
            }
            Self::Ose { per_packet, .. } => *per_packet = Some(chunk_time / packets as f64),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, packets: u32, stepping: Stepping, rng: &mut R) -> f64 {
        if packets == 0 {
            return 0.0;
        }
        match self {
            Self::Model(m) => m.sample_chunk(packets, rng),
            Self::Posterior(p) => p.sample_predictive(packets, rng),
            Self::Map { map } => {
                let params = map.params();
                let state = map.current().unwrap_or_else(|| argmax(params.initial()));
                resample_mm_service(params, state, packets, stepping, rng).0
            }
            Self::Ose { per_packet, fallback } => packets as f64 * per_packet.unwrap_or(*fallback),
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Algorithm state: proportions, sampler state and the history window.
pub struct AdaptiveScheduler {
    config: AdaptiveConfig,
    x: ProportionVector,
    samplers: Vec<PathSampler>,
    stepping: Stepping,
    rng: ChaCha8Rng,
    window: HistoryWindow,
    trajectory: Vec<Vec<f64>>,
}

impl AdaptiveScheduler {
    pub fn new(config: AdaptiveConfig, paths: &PathConfig, rng: ChaCha8Rng) -> Result<Self> {
        paths.validate()?;
        let n = paths.paths();
        config.validate(n)?;
        let samplers = paths
            .services
            .iter()
            .enumerate()
            .map(|(i, s)| match &config.sampler {
                SamplerKind::Oracle => match s {
                    ServiceModel::MarkovModulatedExp(p) => PathSampler::Map { map: OnlineMap::new(p.clone()) },
                    m => PathSampler::Model(m.clone()),
                },
                SamplerKind::IidPosterior { prior_shape, prior_rate } => {
                    PathSampler::Posterior(GammaPosterior::new(*prior_shape, *prior_rate).expect("validated prior"))
                }
                SamplerKind::MmMap { params } => PathSampler::Map { map: OnlineMap::new(params[i].clone()) },
                SamplerKind::Ose => PathSampler::Ose { per_packet: None, fallback: s.mean() },
            })
            .collect();
        Ok(Self {
            config,
            x: ProportionVector::uniform(n),
            samplers,
            stepping: paths.stepping,
            rng,
            window: HistoryWindow::default(),
            trajectory: Vec::new(),
        })
    }

    pub fn proportions(&self) -> &ProportionVector {
        &self.x
    }

    /// Proportions used for each batch so far.
    pub fn trajectory(&self) -> &[Vec<f64>] {
        &self.trajectory
    }

    pub fn window(&self) -> &HistoryWindow {
        &self.window
    }

    fn draw_samples(&mut self, packets: u32) -> Vec<Vec<f64>> {
        let m = self.config.samples;
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            out.push(self.samplers.iter().map(|s| s.sample(packets, self.stepping, &mut self.rng)).collect());
        }
        out
    }

    /// One decision: the subgradient at the proportions used for this batch
    /// and the resulting proportions for the next one.
    pub fn update(&mut self, allocation: &[u32], chunk_times: &[f64], gap: f64) -> Subgradient {
        let n = self.x.as_slice().len();
        for (i, s) in self.samplers.iter_mut().enumerate() {
            s.observe(allocation[i], chunk_times[i]);
        }
        let backlogs = self.window.backlogs(n);
        let packets: u32 = allocation.iter().sum();
        let samples = self.draw_samples(packets);
        let g = estimate_subgradient(self.x.as_slice(), &backlogs, gap, &samples);
        self.x = step(&self.x, &g.g, self.config.eta, self.config.paper_sign);
        if self.config.truncate_at_regeneration && backlogs.iter().all(|w| *w == 0.0) {
            self.window.clear();
        }
        self.window.push(chunk_times.to_vec(), gap);
        while self.window.len() > self.config.window_cap {
            self.window.pop_front();
        }
        g
    }
}

impl Policy for AdaptiveScheduler {
    fn allocate(&mut self, ctx: &BatchContext<'_>) -> Allocation {
        self.trajectory.push(self.x.as_slice().to_vec());
        round_allocation(&self.x, ctx.packets)
    }

    fn observe(&mut self, feedback: &Feedback<'_>) {
        self.update(feedback.allocation, feedback.chunk_times, feedback.inter_arrival);
    }

    fn name(&self) -> &str {
        "adaptive"
    }

    fn trajectory(&self) -> Option<&[Vec<f64>]> {
        Some(&self.trajectory)
    }
}
