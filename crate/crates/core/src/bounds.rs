//! Exponential tail bounds on the steady-state waiting time under a rigid
//! allocation.

use crate::distributions::{log_laplace, mgf_boundary, mgf_log, ServiceModel};
use crate::error::{FjupError, Result};
use crate::intermittent::{count_allocations, enumerate_allocations, Allocation, DEFAULT_SEARCH_CAP};

const BISECTION_ITERS: usize = 200;

/// Decay rate of one path's waiting-time tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathDecay {
    /// Positive root; infinite for a path that receives no packets.
    Rate(f64),
    Unstable,
}

/// Per-path decay rates of an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayResult {
    /// `θ_i`; zero where the path is unstable, infinite where it is idle.
    pub thetas: Vec<f64>,
    /// Minimum over stable, loaded paths.
    pub theta_tilde: f64,
    pub stable: Vec<bool>,
}

impl DecayResult {
    pub fn all_stable(&self) -> bool {
        self.stable.iter().all(|s| *s)
    }

    pub fn first_unstable(&self) -> Option<usize> {
        self.stable.iter().position(|s| !s)
    }
}

/// Positive root of `E[exp(θ(S⁽ᵏ⁾ - t))] = 1` for chunk service `S⁽ᵏ⁾` of `k`
/// packets and inter-arrival time `t`.
pub fn path_decay_rate(service: &ServiceModel, k: u32, arrival: &ServiceModel) -> Result<PathDecay> {
    if k == 0 {
        return Ok(PathDecay::Rate(f64::INFINITY));
    }
    service.validate()?;
    arrival.validate()?;
    if !service.is_iid() || !arrival.is_iid() {
        return Err(FjupError::Unsupported("decay rates need i.i.d. service and arrivals".into()));
    }
    if k as f64 * service.mean() >= arrival.mean() {
        return Ok(PathDecay::Unstable);
    }
    let boundary = mgf_boundary(service)?;
    if boundary <= 0.0 {
        return Err(FjupError::Domain { boundary });
    }
    let h = |theta: f64| -> Result<f64> { Ok(mgf_log(service, k, theta)? + log_laplace(arrival, theta)?) };
    let lo = 1e-12;
    let mut hi = if boundary.is_finite() { boundary - 1e-9 } else { 1.0 };
    if !boundary.is_finite() {
        while h(hi)? <= 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Ok(PathDecay::Unstable);
            }
        }
    } else if h(hi)? <= 0.0 {
        return Ok(PathDecay::Unstable);
    }
    if h(lo)? >= 0.0 {
        // Critically loaded: the root collapses onto zero.
        return Ok(PathDecay::Unstable);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if h(mid)? < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(PathDecay::Rate(0.5 * (a + b)))
}

/// Decay rates of every path under `alloc`.
pub fn decay_rates(alloc: &Allocation, services: &[ServiceModel], arrival: &ServiceModel) -> Result<DecayResult> {
    check_paths(alloc, services)?;
    let mut thetas = Vec::with_capacity(services.len());
    let mut stable = Vec::with_capacity(services.len());
    for (&k, s) in alloc.chunks().iter().zip(services) {
        match path_decay_rate(s, k, arrival)? {
            PathDecay::Rate(t) => {
                thetas.push(t);
                stable.push(true);
            }
            PathDecay::Unstable => {
                thetas.push(0.0);
                stable.push(false);
            }
        }
    }
    Ok(assemble(thetas, stable))
}

fn assemble(thetas: Vec<f64>, stable: Vec<bool>) -> DecayResult {
    let theta_tilde = thetas
        .iter()
        .zip(&stable)
        .filter(|(_, s)| **s)
        .map(|(t, _)| *t)
        .fold(f64::INFINITY, f64::min);
    DecayResult { thetas, theta_tilde, stable }
}

fn check_paths(alloc: &Allocation, services: &[ServiceModel]) -> Result<()> {
    if alloc.paths() != services.len() {
        return Err(FjupError::InvalidParameter(format!(
            "{} chunk sizes for {} paths",
            alloc.paths(),
            services.len()
        )));
    }
    Ok(())
}

/// `P(W ≥ σ) ≤ Σ_i exp(-θ_i σ)`, clamped to one.
pub fn tail_bound(alloc: &Allocation, services: &[ServiceModel], arrival: &ServiceModel, sigma: f64) -> Result<f64> {
    let d = decay_rates(alloc, services, arrival)?;
    tail_bound_from(&d, sigma)
}

pub fn tail_bound_from(decay: &DecayResult, sigma: f64) -> Result<f64> {
    if let Some(path) = decay.first_unstable() {
        return Err(FjupError::Unstable { path });
    }
    if sigma < 0.0 {
        return Ok(1.0);
    }
    let s: f64 = decay.thetas.iter().map(|t| if t.is_infinite() { 0.0 } else { (-t * sigma).exp() }).sum();
    Ok(s.min(1.0))
}

/// The allocation with the largest effective decay rate.
pub fn optimal_allocation_by_decay(
    total: u32,
    services: &[ServiceModel],
    arrival: &ServiceModel,
) -> Result<(Allocation, DecayResult)> {
    optimal_allocation_by_decay_with_cap(total, services, arrival, DEFAULT_SEARCH_CAP)
}

pub fn optimal_allocation_by_decay_with_cap(
    total: u32,
    services: &[ServiceModel],
    arrival: &ServiceModel,
    cap: u128,
) -> Result<(Allocation, DecayResult)> {
    let n = services.len();
    let size = count_allocations(n, total, false);
    if size > cap {
        return Err(FjupError::SearchSpaceExceeded { size, cap });
    }
    // θ depends on a path and its own chunk size only.
    let table: Vec<Vec<PathDecay>> = services
        .iter()
        .map(|s| (0..=total).map(|k| path_decay_rate(s, k, arrival)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut best: Option<(Vec<u32>, f64)> = None;
    for c in enumerate_allocations(n, total, false) {
        let mut tilde = f64::INFINITY;
        let mut ok = true;
        for (i, &k) in c.iter().enumerate() {
            match table[i][k as usize] {
                PathDecay::Rate(t) => tilde = tilde.min(t),
                PathDecay::Unstable => ok = false,
            }
        }
        if ok && best.as_ref().is_none_or(|(_, b)| tilde > *b * (1.0 + 1e-12)) {
            best = Some((c, tilde));
        }
    }
    let (chunks, _) = best.ok_or(FjupError::Overloaded)?;
    let (thetas, stable) = chunks
        .iter()
        .enumerate()
        .map(|(i, &k)| match table[i][k as usize] {
            PathDecay::Rate(t) => (t, true),
            PathDecay::Unstable => (0.0, false),
        })
        .unzip();
    Ok((Allocation::new(chunks)?, assemble(thetas, stable)))
}
