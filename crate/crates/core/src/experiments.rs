//! Replicated stream experiments and the tables behind each analysis.

use rayon::prelude::*;

use crate::error::Result;
use crate::inference::{em_fit, EmConfig, EmFit};
use crate::sim::{replication_seed, simulate_with_arrivals, ArrivalStream, PathConfig, Scheduler, SimTrace, TrafficConfig};

/// Traces of every scheduler on one replication, all driven by the same
/// random numbers.
#[derive(Debug, Clone)]
pub struct Replication {
    pub seed: u64,
    pub traces: Vec<SimTrace>,
    /// Proportion trajectories of adaptive schedulers (empty otherwise).
    pub trajectories: Vec<Vec<Vec<f64>>>,
}

/// Runs `reps` replications of every scheduler with common random numbers.
/// Replication `r` uses seed `master ⊕ r`.
pub fn run_replications(
    traffic: &TrafficConfig,
    paths: &PathConfig,
    schedulers: &[Scheduler],
    reps: usize,
    master_seed: u64,
) -> Result<Vec<Replication>> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = replication_seed(master_seed, r as u64);
            let t = TrafficConfig { seed, ..traffic.clone() };
            let arrivals = ArrivalStream::generate(&t)?;
            let mut traces = Vec::with_capacity(schedulers.len());
            let mut trajectories = Vec::with_capacity(schedulers.len());
            for s in schedulers {
                let mut policy = s.build(paths, seed)?;
                traces.push(simulate_with_arrivals(&arrivals, seed, paths, policy.as_mut())?);
                trajectories.push(policy.trajectory().map(|t| t.to_vec()).unwrap_or_default());
            }
            Ok(Replication { seed, traces, trajectories })
        })
        .collect()
}

/// Mean waiting time of one trace after discarding a warm-up fraction.
pub fn mean_after_warmup(trace: &SimTrace, warmup: f64) -> f64 {
    let skip = (trace.len() as f64 * warmup).floor() as usize;
    let w = &trace.waiting[skip.min(trace.len())..];
    if w.is_empty() {
        return 0.0;
    }
    w.iter().sum::<f64>() / w.len() as f64
}

/// Mean and standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, f64::NAN);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Paired comparison `a - b` across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDifference {
    pub mean: f64,
    pub se: f64,
}

impl PairedDifference {
    pub fn z(&self) -> f64 {
        self.mean / self.se
    }
}

pub fn paired_difference(a: &[f64], b: &[f64]) -> PairedDifference {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, se) = mean_se(&d);
    PairedDifference { mean, se }
}

/// Per-replication mean waiting times of scheduler `idx`.
pub fn replication_means(reps: &[Replication], idx: usize, warmup: f64) -> Vec<f64> {
    reps.iter().map(|r| mean_after_warmup(&r.traces[idx], warmup)).collect()
}

/// All post-warm-up waiting times of scheduler `idx`, pooled over replications.
pub fn pooled_waiting(reps: &[Replication], idx: usize, warmup: f64) -> Vec<f64> {
    reps.iter()
        .flat_map(|r| {
            let t = &r.traces[idx];
            let skip = (t.len() as f64 * warmup).floor() as usize;
            t.waiting[skip.min(t.len())..].to_vec()
        })
        .collect()
}

/// Observed `(chunk time, packets)` pairs per path, empty chunks skipped.
pub type TrainingTrace = Vec<Vec<(f64, u32)>>;

/// Records chunk observations under the proportional policy on the
/// training stream of `seed`.
pub fn generate_training_trace(traffic: &TrafficConfig, paths: &PathConfig, batches: usize, seed: u64) -> Result<TrainingTrace> {
    let t = TrafficConfig { horizon: batches, seed: seed ^ crate::sim::streams::TRAINING, ..traffic.clone() };
    let trace = crate::sim::simulate_scheduler(&t, paths, &Scheduler::Proportional)?;
    let mut out = vec![Vec::new(); paths.paths()];
    for (alloc, times) in trace.allocations.iter().zip(&trace.chunk_times) {
        for (n, (&k, &c)) in alloc.iter().zip(times).enumerate() {
            if k > 0 && c > 0.0 {
                out[n].push((c, k));
            }
        }
    }
    Ok(out)
}

/// Fits one modulated model per path.
pub fn train_path_models(trace: &TrainingTrace, config: &EmConfig) -> Result<Vec<EmFit>> {
    trace
        .iter()
        .map(|obs| {
            let x: Vec<f64> = obs.iter().map(|o| o.0).collect();
            let m: Vec<u32> = obs.iter().map(|o| o.1).collect();
            em_fit(&x, &m, config)
        })
        .collect()
}
