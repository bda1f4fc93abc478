//! Fork-join simulation of batch uploads over parallel paths.
//!
//! Batch `j` arrives, is split by the scheduler, and each path serves its
//! chunk after the backlog left by earlier batches. With `c_{n,j}` the
//! realized chunk time and `t_j` the gap to the next arrival, path backlogs
//! follow `W_{n,j+1} = max(0, W_{n,j} + c_{n,j} - t_j)` and the batch waits
//! `W_j = max_n W_{n,j}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::adaptive::{AdaptiveConfig, AdaptiveScheduler};
use crate::distributions::ServiceModel;
use crate::error::{FjupError, Result};
use crate::inference::{MmppParams, Stepping};
use crate::intermittent::{proportional_allocation, round_allocation, Allocation};

/// Stream ids used to derive independent generators from one seed.
pub mod streams {
    pub const ARRIVALS: u64 = 0;
    pub const BATCH: u64 = 1;
    pub const SAMPLER: u64 = 1000;
    pub const TRAINING: u64 = 2000;

    pub fn path_packets(n: usize) -> u64 {
        10 + n as u64
    }

    pub fn path_chain(n: usize) -> u64 {
        100 + n as u64
    }
}

/// Generator for one named stream of one seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of replication `rep` under a master seed.
pub fn replication_seed(master: u64, rep: u64) -> u64 {
    master ^ rep
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalProcess {
    /// Independent gaps drawn from a fixed law.
    Renewal(ServiceModel),
    /// Exponential gaps whose rate follows a hidden chain, one step per batch.
    Mmpp(MmppParams),
}

impl ArrivalProcess {
    pub fn mean_gap(&self) -> f64 {
        match self {
            Self::Renewal(m) => m.mean(),
            Self::Mmpp(p) => p.mean_holding_time(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchSize {
    Fixed(u32),
    Poisson(f64),
}

impl BatchSize {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Fixed(k) => k as f64,
            Self::Poisson(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub arrival: ArrivalProcess,
    pub batch_size: BatchSize,
    /// Number of batches `J`.
    pub horizon: usize,
    pub seed: u64,
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(FjupError::InvalidParameter("horizon must be at least one batch".into()));
        }
        match &self.arrival {
            ArrivalProcess::Renewal(m) => {
                m.validate()?;
                if !m.is_iid() {
                    return Err(FjupError::InvalidParameter("use the MMPP arrival process for modulated gaps".into()));
                }
            }
            ArrivalProcess::Mmpp(_) => {}
        }
        if let BatchSize::Poisson(m) = self.batch_size {
            if !(m > 0.0 && m.is_finite()) {
                return Err(FjupError::InvalidParameter(format!("mean batch size {m} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub services: Vec<ServiceModel>,
    /// How modulated service chains advance.
    pub stepping: Stepping,
}

impl PathConfig {
    pub fn new(services: Vec<ServiceModel>) -> Self {
        Self { services, stepping: Stepping::default() }
    }

    pub fn paths(&self) -> usize {
        self.services.len()
    }

    pub fn mean_rates(&self) -> Vec<f64> {
        self.services.iter().map(|s| s.mean_rate()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.services.is_empty() {
            return Err(FjupError::InvalidParameter("at least one path is required".into()));
        }
        self.services.iter().try_for_each(|s| s.validate())
    }
}

/// Everything the simulator recorded, indexed by batch (0-based).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    /// Gap `t_j` between batch `j` and batch `j+1`.
    pub inter_arrivals: Vec<f64>,
    pub batch_sizes: Vec<u32>,
    pub allocations: Vec<Vec<u32>>,
    /// Realized chunk service times `c_{n,j}` (zero for empty chunks).
    pub chunk_times: Vec<Vec<f64>>,
    /// Batch waiting times `W_j`.
    pub waiting: Vec<f64>,
    /// Per-path backlog `W_{n,j}` found by batch `j` on arrival.
    pub backlogs: Vec<Vec<f64>>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.waiting.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waiting.is_empty()
    }

    pub fn paths(&self) -> usize {
        self.allocations.first().map_or(0, |a| a.len())
    }

    pub fn mean_waiting(&self) -> f64 {
        self.waiting.iter().sum::<f64>() / self.waiting.len().max(1) as f64
    }
}

/// What the scheduler sees when batch `j` arrives.
#[derive(Debug, Clone, Copy)]
pub struct BatchContext<'a> {
    pub batch: usize,
    pub packets: u32,
    pub backlogs: &'a [f64],
}

/// What the scheduler learns once batch `j` has been served and the next gap is known.
#[derive(Debug, Clone, Copy)]
pub struct Feedback<'a> {
    pub batch: usize,
    pub allocation: &'a [u32],
    pub chunk_times: &'a [f64],
    pub inter_arrival: f64,
    pub backlogs: &'a [f64],
}

pub trait Policy {
    fn allocate(&mut self, ctx: &BatchContext<'_>) -> Allocation;
    fn observe(&mut self, _feedback: &Feedback<'_>) {}
    fn name(&self) -> &str;
    /// Proportions used per batch, for policies that adapt them.
    fn trajectory(&self) -> Option<&[Vec<f64>]> {
        None
    }
}

/// Fixed proportions, rounded per batch.
#[derive(Debug, Clone)]
pub struct StaticPolicy {
    proportions: Vec<f64>,
    name: String,
}

impl StaticPolicy {
    pub fn new(proportions: Vec<f64>) -> Result<Self> {
        round_allocation(&proportions, 1)?;
        let s: f64 = proportions.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(FjupError::InvalidParameter(format!("proportions sum to {s}, not 1")));
        }
        Ok(Self { proportions, name: "static".into() })
    }

    pub fn proportional(mean_rates: &[f64]) -> Result<Self> {
        proportional_allocation(1, mean_rates)?;
        let s: f64 = mean_rates.iter().sum();
        Ok(Self { proportions: mean_rates.iter().map(|r| r / s).collect(), name: "proportional".into() })
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }
}

impl Policy for StaticPolicy {
    fn allocate(&mut self, ctx: &BatchContext<'_>) -> Allocation {
        round_allocation(&self.proportions, ctx.packets).expect("validated proportions")
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Whole batch to the path with the least backlog, lowest index on ties.
#[derive(Debug, Clone, Default)]
pub struct BatchJsq;

pub fn batch_jsq_allocation(backlogs: &[f64], packets: u32) -> Allocation {
    let mut best = 0;
    for (i, &w) in backlogs.iter().enumerate() {
        if w < backlogs[best] {
            best = i;
        }
    }
    let mut chunks = vec![0; backlogs.len()];
    chunks[best] = packets;
    Allocation::new(chunks).expect("at least one path")
}

impl Policy for BatchJsq {
    fn allocate(&mut self, ctx: &BatchContext<'_>) -> Allocation {
        batch_jsq_allocation(ctx.backlogs, ctx.packets)
    }

    fn name(&self) -> &str {
        "batch_jsq"
    }
}

/// Scheduler choice as written in configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheduler {
    Static(Vec<f64>),
    Proportional,
    BatchJsq,
    Adaptive(AdaptiveConfig),
}

impl Scheduler {
    pub fn label(&self) -> String {
        match self {
            Self::Static(_) => "static".into(),
            Self::Proportional => "proportional".into(),
            Self::BatchJsq => "batch_jsq".into(),
            Self::Adaptive(c) => format!("adaptive_{}", c.sampler.label()),
        }
    }

    /// Instantiates the policy for one replication.
    pub fn build(&self, paths: &PathConfig, seed: u64) -> Result<Box<dyn Policy + Send>> {
        Ok(match self {
            Self::Static(x) => {
                if x.len() != paths.paths() {
                    return Err(FjupError::InvalidParameter(format!(
                        "{} static proportions for {} paths",
                        x.len(),
                        paths.paths()
                    )));
                }
                Box::new(StaticPolicy::new(x.clone())?)
            }
            Self::Proportional => Box::new(StaticPolicy::proportional(&paths.mean_rates())?),
            Self::BatchJsq => Box::new(BatchJsq),
            Self::Adaptive(c) => Box::new(AdaptiveScheduler::new(c.clone(), paths, substream(seed, streams::SAMPLER))?),
        })
    }
}

/// Pre-drawn inter-arrival gaps and batch sizes shared by all schedulers.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalStream {
    pub gaps: Vec<f64>,
    pub sizes: Vec<u32>,
}

impl ArrivalStream {
    pub fn generate(traffic: &TrafficConfig) -> Result<Self> {
        traffic.validate()?;
        let mut rng = substream(traffic.seed, streams::ARRIVALS);
        let j = traffic.horizon;
        let gaps = match &traffic.arrival {
            ArrivalProcess::Renewal(m) => (0..j).map(|_| m.sample(&mut rng)).collect(),
            ArrivalProcess::Mmpp(p) => {
                let mut z = p.sample_initial(&mut rng);
                (0..j)
                    .map(|_| {
                        let t = Exp::new(p.rates()[z]).expect("validated rate").sample(&mut rng);
                        z = p.step(z, &mut rng);
                        t
                    })
                    .collect()
            }
        };
        let mut rng = substream(traffic.seed, streams::BATCH);
        let sizes = match traffic.batch_size {
            BatchSize::Fixed(k) => vec![k; j],
            BatchSize::Poisson(m) => {
                let d = Poisson::new(m).expect("validated mean");
                (0..j).map(|_| d.sample(&mut rng) as u32).collect()
            }
        };
        Ok(Self { gaps, sizes })
    }
}

/// Per-path packet-time source; each path owns its own streams so that
/// packet times line up across schedulers.
struct PathServer {
    model: ServiceModel,
    packets: ChaCha8Rng,
    chain: ChaCha8Rng,
    state: usize,
}

impl PathServer {
    fn new(model: ServiceModel, seed: u64, n: usize) -> Self {
        let packets = substream(seed, streams::path_packets(n));
        let mut chain = substream(seed, streams::path_chain(n));
        let state = match &model {
            ServiceModel::MarkovModulatedExp(p) => p.sample_initial(&mut chain),
            _ => 0,
        };
        Self { model, packets, chain, state }
    }

    fn serve(&mut self, k: u32, stepping: Stepping) -> f64 {
        match &self.model {
            ServiceModel::MarkovModulatedExp(p) => match stepping {
                Stepping::PerPacket => {
                    let mut total = 0.0;
                    for _ in 0..k {
                        total += exp_draw(p.rates()[self.state], &mut self.packets);
                        self.state = p.step(self.state, &mut self.chain);
                    }
                    total
                }
                Stepping::PerChunk => {
                    let rate = p.rates()[self.state];
                    (0..k).map(|_| exp_draw(rate, &mut self.packets)).sum()
                }
            },
            ServiceModel::Exponential { rate } => {
                let rate = *rate;
                (0..k).map(|_| exp_draw(rate, &mut self.packets)).sum()
            }
            m => (0..k).map(|_| m.sample(&mut self.packets)).sum(),
        }
    }

    // Batch boundary: per-chunk chains move once per batch whether or not
    // the path was used.
    fn end_batch(&mut self, stepping: Stepping) {
        if let (ServiceModel::MarkovModulatedExp(p), Stepping::PerChunk) = (&self.model, stepping) {
            self.state = p.step(self.state, &mut self.chain);
        }
    }
}

fn exp_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    rng.sample::<f64, _>(rand_distr::Exp1) / rate
}

/// Runs one replication under `policy`.
pub fn simulate(traffic: &TrafficConfig, paths: &PathConfig, policy: &mut dyn Policy) -> Result<SimTrace> {
    let arrivals = ArrivalStream::generate(traffic)?;
    simulate_with_arrivals(&arrivals, traffic.seed, paths, policy)
}

/// Runs one replication on a pre-drawn arrival stream.
pub fn simulate_with_arrivals(
    arrivals: &ArrivalStream,
    seed: u64,
    paths: &PathConfig,
    policy: &mut dyn Policy,
) -> Result<SimTrace> {
    paths.validate()?;
    let n = paths.paths();
    let j_max = arrivals.gaps.len();
    let mut servers: Vec<PathServer> =
        paths.services.iter().enumerate().map(|(i, m)| PathServer::new(m.clone(), seed, i)).collect();
    let mut trace = SimTrace {
        inter_arrivals: Vec::with_capacity(j_max),
        batch_sizes: Vec::with_capacity(j_max),
        allocations: Vec::with_capacity(j_max),
        chunk_times: Vec::with_capacity(j_max),
        waiting: Vec::with_capacity(j_max),
        backlogs: Vec::with_capacity(j_max),
    };
    let mut backlog = vec![0.0; n];
    let mut chunk = vec![0.0; n];
    for j in 0..j_max {
        let packets = arrivals.sizes[j];
        let alloc = policy.allocate(&BatchContext { batch: j, packets, backlogs: &backlog });
        if alloc.paths() != n || alloc.total() != packets {
            return Err(FjupError::InvalidParameter(format!(
                "policy {} returned {alloc} for {packets} packets on {n} paths",
                policy.name()
            )));
        }
        for (i, s) in servers.iter_mut().enumerate() {
            chunk[i] = s.serve(alloc.chunks()[i], paths.stepping);
            s.end_batch(paths.stepping);
        }
        let t = arrivals.gaps[j];
        trace.waiting.push(backlog.iter().copied().fold(0.0, f64::max));
        trace.backlogs.push(backlog.clone());
        policy.observe(&Feedback { batch: j, allocation: alloc.chunks(), chunk_times: &chunk, inter_arrival: t, backlogs: &backlog });
        for i in 0..n {
            backlog[i] = (backlog[i] + chunk[i] - t).max(0.0);
        }
        trace.inter_arrivals.push(t);
        trace.batch_sizes.push(packets);
        trace.allocations.push(alloc.into_chunks());
        trace.chunk_times.push(chunk.clone());
    }
    Ok(trace)
}

/// Convenience wrapper building the policy from a scheduler description.
pub fn simulate_scheduler(traffic: &TrafficConfig, paths: &PathConfig, scheduler: &Scheduler) -> Result<SimTrace> {
    let mut policy = scheduler.build(paths, traffic.seed)?;
    simulate(traffic, paths, policy.as_mut())
}

/// `W_j` straight from the partial-sum formula
/// `max{0, max_{n, i<j} Σ_{l=i}^{j-1} (c_{n,l} - t_l)}`.
pub fn waiting_time_direct(trace: &SimTrace, j: usize) -> f64 {
    assert!(j < trace.len(), "batch {j} not in trace");
    let mut best = 0.0_f64;
    for n in 0..trace.paths() {
        let mut acc = 0.0;
        for l in (0..j).rev() {
            acc += trace.chunk_times[l][n] - trace.inter_arrivals[l];
            best = best.max(acc);
        }
    }
    best
}

/// One point of an empirical complementary CDF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcdfPoint {
    pub sigma: f64,
    /// Fraction of samples with `W ≥ σ`.
    pub ccdf: f64,
    pub n: usize,
}

pub fn ccdf(samples: &[f64], grid: &[f64]) -> Result<Vec<CcdfPoint>> {
    if samples.is_empty() {
        return Err(FjupError::InvalidParameter("no samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    Ok(grid
        .iter()
        .map(|&sigma| {
            let below = sorted.partition_point(|&w| w < sigma);
            CcdfPoint { sigma, ccdf: (n - below) as f64 / n as f64, n }
        })
        .collect())
}

/// Empirical `q`-quantile (nearest rank).
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}
