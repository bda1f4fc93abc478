//! Allocation, replication and (N, r)-coding decisions for a single upload.

use std::fmt;

use rayon::prelude::*;

use crate::distributions::{chunk_cdf, ChunkCdf, GridSpec, ServiceModel};
use crate::error::{FjupError, Result};
use crate::order_stats::{mu_all, mu_operator, psi_of, CdfVector, MAX_PATHS};
use crate::special::{ln_gamma, regularized_incomplete_beta};

/// Default cap on the number of candidates an exhaustive search may visit.
pub const DEFAULT_SEARCH_CAP: u128 = 5_000_000;

const TIE_RTOL: f64 = 1e-12;
const RATIO_TIE: f64 = 1e-9;

/// Packets per path; an element of `Λ(N, K)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Allocation {
    chunks: Vec<u32>,
}

impl Allocation {
    pub fn new(chunks: Vec<u32>) -> Result<Self> {
        if chunks.is_empty() {
            return Err(FjupError::InvalidParameter("an allocation needs at least one path".into()));
        }
        if chunks.len() > MAX_PATHS {
            return Err(FjupError::TooManyPaths { n: chunks.len(), max: MAX_PATHS });
        }
        Ok(Self { chunks })
    }

    pub fn chunks(&self) -> &[u32] {
        &self.chunks
    }

    pub fn paths(&self) -> usize {
        self.chunks.len()
    }

    pub fn total(&self) -> u32 {
        self.chunks.iter().sum()
    }

    pub fn into_chunks(self) -> Vec<u32> {
        self.chunks
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_chunks(&self.chunks, f)
    }
}

fn fmt_chunks(chunks: &[u32], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "(")?;
    for (i, c) in chunks.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{c}")?;
    }
    write!(f, ")")
}

/// Coded allocation where any `r` of the `N` chunks reconstruct the data.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NrAllocation {
    chunks: Vec<u32>,
    r: usize,
    total: u32,
}

impl NrAllocation {
    pub fn new(chunks: Vec<u32>, r: usize, total: u32) -> Result<Self> {
        let a = Self { chunks, r, total };
        a.check()?;
        Ok(a)
    }

    pub(crate) fn unchecked(chunks: Vec<u32>, r: usize, total: u32) -> Self {
        Self { chunks, r, total }
    }

    pub fn chunks(&self) -> &[u32] {
        &self.chunks
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    /// Verifies membership in `Λ(N, r, K)`. The binding subset is the `r`
    /// smallest entries, so only that one is checked.
    pub fn check(&self) -> Result<()> {
        let n = self.chunks.len();
        if n == 0 || n > MAX_PATHS {
            return Err(FjupError::InvalidParameter(format!("{n} paths outside 1..={MAX_PATHS}")));
        }
        if self.r == 0 || self.r > n {
            return Err(FjupError::InvalidParameter(format!("r={} outside 1..={n}", self.r)));
        }
        if self.total == 0 {
            return Err(FjupError::InvalidParameter("K must be positive".into()));
        }
        if let Some(c) = self.chunks.iter().find(|&&c| c == 0 || c > self.total) {
            return Err(FjupError::InvalidParameter(format!(
                "chunk size {c} outside 1..={} in {:?}",
                self.total, self.chunks
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (self.chunks[i], i));
        let mut subset: Vec<usize> = order[..self.r].to_vec();
        let sum: u64 = subset.iter().map(|&i| self.chunks[i] as u64).sum();
        if sum < self.total as u64 {
            subset.sort_unstable();
            return Err(FjupError::NotNrMember {
                chunks: self.chunks.clone(),
                r: self.r,
                subset,
                sum,
                total: self.total as u64,
            });
        }
        Ok(())
    }
}

impl fmt::Display for NrAllocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_chunks(&self.chunks, f)?;
        write!(f, "/r={}", self.r)
    }
}

/// Chunk laws for every path and every chunk size up to a bound.
#[derive(Debug, Clone)]
pub struct ChunkTable {
    per_path: Vec<Vec<ChunkCdf>>,
}

impl ChunkTable {
    pub fn new(models: &[ServiceModel], max_k: u32, grid: &GridSpec) -> Result<Self> {
        if models.is_empty() {
            return Err(FjupError::InvalidParameter("no paths".into()));
        }
        if models.len() > MAX_PATHS {
            return Err(FjupError::TooManyPaths { n: models.len(), max: MAX_PATHS });
        }
        let per_path = models
            .iter()
            .map(|m| {
                let mut row = vec![ChunkCdf::Degenerate];
                let rest: Result<Vec<ChunkCdf>> = (1..=max_k).into_par_iter().map(|k| chunk_cdf(m, k, grid)).collect();
                row.extend(rest?);
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { per_path })
    }

    pub fn paths(&self) -> usize {
        self.per_path.len()
    }

    pub fn vector(&self, chunks: &[u32]) -> Result<CdfVector> {
        if chunks.len() != self.per_path.len() {
            return Err(FjupError::InvalidParameter(format!(
                "{} chunk sizes for {} paths",
                chunks.len(),
                self.per_path.len()
            )));
        }
        let entries = chunks
            .iter()
            .zip(&self.per_path)
            .map(|(&k, row)| {
                row.get(k as usize)
                    .cloned()
                    .ok_or_else(|| FjupError::InvalidParameter(format!("chunk size {k} exceeds the table")))
            })
            .collect::<Result<Vec<_>>>()?;
        CdfVector::new(entries)
    }

    pub fn psi(&self, chunks: &[u32]) -> Result<f64> {
        if chunks.iter().all(|&k| k == 0) {
            return Ok(0.0);
        }
        psi_of(&self.vector(chunks)?)
    }
}

fn check_rates(rates: &[f64]) -> Result<()> {
    if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(FjupError::InvalidParameter(format!("rate {r} must be positive")));
    }
    Ok(())
}

/// Mean latency of an allocation over exponential paths by inclusion and
/// exclusion over subsets, with the inner multi-index sum taken term by term.
pub fn psi_exponential(alloc: &Allocation, rates: &[f64]) -> Result<f64> {
    check_rates(rates)?;
    if rates.len() != alloc.paths() {
        return Err(FjupError::InvalidParameter(format!("{} rates for {} paths", rates.len(), alloc.paths())));
    }
    let active: Vec<(u32, f64)> = alloc
        .chunks()
        .iter()
        .zip(rates)
        .filter(|(k, _)| **k > 0)
        .map(|(&k, &r)| (k, r))
        .collect();
    let n = active.len();
    let mut psi = 0.0;
    for mask in 1usize..1 << n {
        let members: Vec<(u32, f64)> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| active[i]).collect();
        let sign = if members.len() % 2 == 1 { 1.0 } else { -1.0 };
        psi += sign * multi_index_sum(&members);
    }
    Ok(psi)
}

// Σ over n_i in [0, k_i) of (Σn)! Π λ_i^{n_i} / (Π n_i! Λ^{Σn+1}).
fn multi_index_sum(members: &[(u32, f64)]) -> f64 {
    let big: f64 = members.iter().map(|m| m.1).sum();
    let ln_big = big.ln();
    let ln_rates: Vec<f64> = members.iter().map(|m| m.1.ln()).collect();
    let mut idx = vec![0u32; members.len()];
    let mut total = 0.0;
    loop {
        let t: u32 = idx.iter().sum();
        let mut e = ln_gamma(t as f64 + 1.0) - (t as f64 + 1.0) * ln_big;
        for (i, &n) in idx.iter().enumerate() {
            e += n as f64 * ln_rates[i] - ln_gamma(n as f64 + 1.0);
        }
        total += e.exp();
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return total;
            }
            idx[pos] += 1;
            if idx[pos] < members[pos].0 {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

// ψ(k) - ψ(k + 1) for k packets on path `a`, the rest on `b`.
fn two_path_gap(total: u32, k: u32, a: f64, b: f64) -> (f64, f64) {
    let p = a / (a + b);
    let ip = regularized_incomplete_beta(p, k as f64, (total - k) as f64);
    let iq = regularized_incomplete_beta(1.0 - p, (total - k - 1) as f64, (k + 1) as f64);
    (ip / b - iq / a, ip / iq)
}

fn psi_two(total: u32, k: u32, a: f64, b: f64) -> f64 {
    let alloc = Allocation::new(vec![k, total - k]).expect("two paths");
    let f = CdfVector::new(
        alloc
            .chunks()
            .iter()
            .zip([a, b])
            .map(|(&k, rate)| if k == 0 { ChunkCdf::Degenerate } else { ChunkCdf::Erlang { k, rate } })
            .collect(),
    )
    .expect("two paths");
    psi_of(&f).expect("Erlang laws are proper")
}

/// Optimal split of `total` packets over two exponential paths.
///
/// Walks the first path's share upward while moving one more packet onto it
/// does not increase the mean latency. The rule compares a ratio of
/// regularized incomplete beta functions with the rate ratio; near-ties fall
/// back to exact latencies. Ties advance, which puts the equal-rate optimum
/// at `⌊(K+1)/2⌋`.
pub fn optimal_two_path_exponential(total: u32, rate1: f64, rate2: f64) -> Result<Allocation> {
    check_rates(&[rate1, rate2])?;
    if total == 0 {
        return Allocation::new(vec![0, 0]);
    }
    let swap = rate1 > rate2;
    let (a, b) = if swap { (rate2, rate1) } else { (rate1, rate2) };
    let mut k = 0;
    while k < total {
        let (gap, ratio) = two_path_gap(total, k, a, b);
        let advance = if (ratio / (b / a) - 1.0).abs() < RATIO_TIE || !gap.is_finite() {
            let here = psi_two(total, k, a, b);
            let next = psi_two(total, k + 1, a, b);
            next <= here * (1.0 + TIE_RTOL)
        } else {
            gap >= 0.0
        };
        if !advance {
            break;
        }
        k += 1;
    }
    let chunks = if swap { vec![total - k, k] } else { vec![k, total - k] };
    Allocation::new(chunks)
}

/// Real root `x` of `I_p(x, K-x) / I_{1-p}(K-x-1, x+1) = λ₂/λ₁`, the point
/// where moving a packet onto path 1 stops paying off.
pub fn large_k_root(total: u32, rate1: f64, rate2: f64) -> Result<f64> {
    check_rates(&[rate1, rate2])?;
    if total < 2 {
        return Err(FjupError::InvalidParameter(format!("K={total} leaves no interior bracket")));
    }
    let kf = total as f64;
    let p = rate1 / (rate1 + rate2);
    let target = (rate2 / rate1).ln();
    let g = |x: f64| {
        let ip = regularized_incomplete_beta(p, x, kf - x);
        let iq = regularized_incomplete_beta(1.0 - p, kf - x - 1.0, x + 1.0);
        ip.ln() - iq.ln() - target
    };
    let (mut lo, mut hi) = (1e-9, kf - 1.0 - 1e-9);
    let (glo, ghi) = (g(lo), g(hi));
    if glo.is_nan() || ghi.is_nan() || glo.signum() == ghi.signum() {
        return Err(FjupError::NoSignChange { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * kf {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Integer allocation near the real root: the best of the integers around it.
pub fn large_k_allocation(total: u32, rate1: f64, rate2: f64) -> Result<Allocation> {
    // Without an interior root the optimum sits at one end of the range.
    let candidates: Vec<u32> = match large_k_root(total, rate1, rate2) {
        Ok(x) => (x.floor().max(0.0) as u32..=(x.ceil() as u32 + 1).min(total)).collect(),
        Err(FjupError::NoSignChange { .. }) => vec![0, 1, total - 1, total],
        Err(e) => return Err(e),
    };
    let mut best: Option<(f64, u32)> = None;
    for k in candidates {
        let v = psi_two(total, k, rate1, rate2);
        if best.is_none_or(|(bv, _)| v < bv * (1.0 - TIE_RTOL)) {
            best = Some((v, k));
        }
    }
    let k = best.expect("non-empty candidate range").1;
    Allocation::new(vec![k, total - k])
}

/// Number of allocations of `total` packets over `paths` paths.
pub fn count_allocations(paths: usize, total: u32, positive_only: bool) -> u128 {
    if paths == 0 {
        return 0;
    }
    let (n, k) = if positive_only {
        if (total as usize) < paths {
            return 0;
        }
        (total as u128 - 1, paths as u128 - 1)
    } else {
        (total as u128 + paths as u128 - 1, paths as u128 - 1)
    };
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All allocations in lexicographic order.
pub fn enumerate_allocations(paths: usize, total: u32, positive_only: bool) -> Vec<Vec<u32>> {
    let min = u32::from(positive_only);
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(paths);
    fn rec(paths: usize, left: u32, min: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() + 1 == paths {
            if left >= min {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        let rest = (paths - cur.len() - 1) as u32 * min;
        if left < rest {
            return;
        }
        for k in min..=left - rest {
            cur.push(k);
            rec(paths, left - k, min, cur, out);
            cur.pop();
        }
    }
    if paths > 0 {
        rec(paths, total, min, &mut cur, &mut out);
    }
    out
}

/// Lexicographically ordered minimization with a relative tie tolerance.
pub(crate) fn argmin_lex<T: Clone>(candidates: &[T], values: &[f64]) -> Option<(T, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, bv)| v < bv - TIE_RTOL * bv.abs()) {
            best = Some((i, v));
        }
    }
    best.map(|(i, v)| (candidates[i].clone(), v))
}

/// Result of an exhaustive allocation search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub allocation: Allocation,
    pub value: f64,
}

/// Minimizes an objective over `Λ(N, K)` (or its all-positive part),
/// breaking ties toward the lexicographically smallest allocation.
pub fn argmin_allocation<F>(paths: usize, total: u32, positive_only: bool, cap: u128, objective: F) -> Result<SearchResult>
where
    F: Fn(&[u32]) -> Result<f64> + Sync,
{
    let size = count_allocations(paths, total, positive_only);
    if size > cap {
        return Err(FjupError::SearchSpaceExceeded { size, cap });
    }
    if size == 0 {
        return Err(FjupError::NoPositiveAllocation { total: total as u64, paths });
    }
    let candidates = enumerate_allocations(paths, total, positive_only);
    let values = candidates.par_iter().map(|c| objective(c)).collect::<Result<Vec<f64>>>()?;
    let (chunks, value) = argmin_lex(&candidates, &values).expect("non-empty search space");
    Ok(SearchResult { allocation: Allocation::new(chunks)?, value })
}

/// `argmin ψ` over all allocations of `total` packets, by enumeration.
pub fn optimal_allocation_search(total: u32, models: &[ServiceModel]) -> Result<SearchResult> {
    optimal_allocation_search_with(total, models, &GridSpec::default(), DEFAULT_SEARCH_CAP, false)
}

pub fn optimal_allocation_search_with(
    total: u32,
    models: &[ServiceModel],
    grid: &GridSpec,
    cap: u128,
    positive_only: bool,
) -> Result<SearchResult> {
    let size = count_allocations(models.len(), total, positive_only);
    if size > cap {
        return Err(FjupError::SearchSpaceExceeded { size, cap });
    }
    let table = ChunkTable::new(models, total, grid)?;
    argmin_allocation(models.len(), total, positive_only, cap, |c| table.psi(c))
}

/// Floors `x_i K` on all but the last path, which takes the remainder.
pub fn round_allocation(proportions: &[f64], total: u32) -> Result<Allocation> {
    if proportions.is_empty() {
        return Err(FjupError::InvalidParameter("empty proportion vector".into()));
    }
    if proportions.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(FjupError::InvalidParameter(format!("proportions {proportions:?} must be non-negative")));
    }
    let n = proportions.len();
    let mut chunks = Vec::with_capacity(n);
    let mut used = 0u32;
    for &x in &proportions[..n - 1] {
        let k = ((x * total as f64 + 1e-9).floor() as u32).min(total - used);
        chunks.push(k);
        used += k;
    }
    chunks.push(total - used);
    Allocation::new(chunks)
}

/// Chunk sizes proportional to the mean service rates.
pub fn proportional_allocation(total: u32, mean_rates: &[f64]) -> Result<Allocation> {
    check_rates(mean_rates)?;
    let s: f64 = mean_rates.iter().sum();
    let x: Vec<f64> = mean_rates.iter().map(|r| r / s).collect();
    round_allocation(&x, total)
}

/// Mean latency when every path carries the full data and the first copy wins.
pub fn replication_latency(total: u32, models: &[ServiceModel]) -> Result<f64> {
    replication_latency_with_grid(total, models, &GridSpec::default())
}

pub fn replication_latency_with_grid(total: u32, models: &[ServiceModel], grid: &GridSpec) -> Result<f64> {
    if total == 0 {
        return Err(FjupError::InvalidParameter("K must be positive".into()));
    }
    let f = CdfVector::from_allocation(&vec![total; models.len()], models, grid)?;
    mu_operator(1, &f)
}

/// Best all-positive allocation against replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncCost {
    /// `min ψ - φ`: positive favors replication, negative favors allocation.
    pub chi: f64,
    pub allocation_latency: f64,
    pub replication_latency: f64,
    pub best_allocation: Allocation,
}

pub fn synchronization_cost(total: u32, models: &[ServiceModel]) -> Result<SyncCost> {
    synchronization_cost_with(total, models, &GridSpec::default(), DEFAULT_SEARCH_CAP)
}

pub fn synchronization_cost_with(total: u32, models: &[ServiceModel], grid: &GridSpec, cap: u128) -> Result<SyncCost> {
    if (total as usize) < models.len() || models.is_empty() {
        return Err(FjupError::NoPositiveAllocation { total: total as u64, paths: models.len() });
    }
    let best = optimal_allocation_search_with(total, models, grid, cap, true)?;
    let phi = replication_latency_with_grid(total, models, grid)?;
    Ok(SyncCost {
        chi: best.value - phi,
        allocation_latency: best.value,
        replication_latency: phi,
        best_allocation: best.allocation,
    })
}

/// All members of `Λ(N, r, K)` in lexicographic order: entries in `1..=K`
/// whose `r` smallest entries sum to at least `K`.
pub fn enumerate_nr(paths: usize, r: usize, total: u32) -> Result<Vec<NrAllocation>> {
    enumerate_nr_with_cap(paths, r, total, DEFAULT_SEARCH_CAP)
}

pub fn enumerate_nr_with_cap(paths: usize, r: usize, total: u32, cap: u128) -> Result<Vec<NrAllocation>> {
    if paths == 0 || paths > MAX_PATHS {
        return Err(FjupError::InvalidParameter(format!("{paths} paths outside 1..={MAX_PATHS}")));
    }
    if r == 0 || r > paths {
        return Err(FjupError::InvalidParameter(format!("r={r} outside 1..={paths}")));
    }
    if total == 0 {
        return Err(FjupError::InvalidParameter("K must be positive".into()));
    }
    let size = (total as u128).checked_pow(paths as u32).unwrap_or(u128::MAX);
    if size > cap {
        return Err(FjupError::SearchSpaceExceeded { size, cap });
    }
    let mut out = Vec::new();
    let mut cur = vec![1u32; paths];
    let mut sorted = Vec::with_capacity(paths);
    loop {
        sorted.clear();
        sorted.extend_from_slice(&cur);
        sorted.sort_unstable();
        if sorted[..r].iter().map(|&c| c as u64).sum::<u64>() >= total as u64 {
            out.push(NrAllocation::unchecked(cur.clone(), r, total));
        }
        let mut pos = paths;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if cur[pos] < total {
                cur[pos] += 1;
                cur[pos + 1..].iter_mut().for_each(|c| *c = 1);
                break;
            }
        }
    }
}

/// One evaluated (N, r)-allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct NrCandidate {
    pub allocation: NrAllocation,
    pub eta: f64,
    /// Excess over the best strategy across all `r`.
    pub regret: f64,
}

/// Best (N, r)-strategy together with the full regret table.
#[derive(Debug, Clone, PartialEq)]
pub struct NrOptimum {
    pub r_star: usize,
    pub best: NrCandidate,
    /// Best allocation for each `r = 1..=N`.
    pub per_r: Vec<NrCandidate>,
    /// Every member of every `Λ(N, r, K)`, ordered by `r` then lexicographically.
    pub table: Vec<NrCandidate>,
}

pub fn optimal_nr(total: u32, models: &[ServiceModel]) -> Result<NrOptimum> {
    optimal_nr_with(total, models, &GridSpec::default(), DEFAULT_SEARCH_CAP)
}

pub fn optimal_nr_with(total: u32, models: &[ServiceModel], grid: &GridSpec, cap: u128) -> Result<NrOptimum> {
    let n = models.len();
    // r = N admits the largest set; every other Λ(N, r, K) is a subset of it.
    let all = enumerate_nr_with_cap(n, n, total, cap)?;
    let table = ChunkTable::new(models, total, grid)?;
    let mus = all
        .par_iter()
        .map(|a| mu_all(&table.vector(a.chunks())?))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut rows: Vec<NrCandidate> = Vec::new();
    let mut per_r = Vec::with_capacity(n);
    for r in 1..=n {
        let start = rows.len();
        for (a, mu) in all.iter().zip(&mus) {
            let candidate = NrAllocation::unchecked(a.chunks().to_vec(), r, total);
            if candidate.check().is_ok() {
                rows.push(NrCandidate { allocation: candidate, eta: mu[r - 1], regret: 0.0 });
            }
        }
        let slice = &rows[start..];
        let values: Vec<f64> = slice.iter().map(|c| c.eta).collect();
        let (best, _) = argmin_lex(slice, &values).expect("(K, ..., K) is always a member");
        per_r.push(best);
    }
    let values: Vec<f64> = per_r.iter().map(|c| c.eta).collect();
    let (mut best, floor) = argmin_lex(&per_r, &values).expect("N >= 1");
    for c in rows.iter_mut().chain(per_r.iter_mut()) {
        c.regret = c.eta - floor;
    }
    best.regret = 0.0;
    Ok(NrOptimum { r_star: best.allocation.r(), best, per_r, table: rows })
}

/// Chernoff-type upper bound on the two-path mean latency:
/// `max{k₁/λ₁, k₂/λ₂} + √(2π)(√k₁/λ₁ + √k₂/λ₂)`.
pub fn chernoff_comparison_bound(k1: u32, k2: u32, rate1: f64, rate2: f64) -> f64 {
    let (a, b) = (k1 as f64, k2 as f64);
    (a / rate1).max(b / rate2) + (2.0 * std::f64::consts::PI).sqrt() * (a.sqrt() / rate1 + b.sqrt() / rate2)
}
