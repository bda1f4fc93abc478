//! Expected order statistics of independent chunk completion times.
//!
//! `D_j` sums, over all size-`j` subsets of paths, the integral of the joint
//! survival function. The `r`-th order statistic is an alternating
//! combination of the `D_j`.

use crate::distributions::{chunk_cdf, ChunkCdf, GridSpec, ServiceModel};
use crate::error::{FjupError, Result};
use crate::intermittent::{Allocation, NrAllocation};
use crate::special::{choose, ln_gamma, simpson};

/// Largest number of paths accepted by the subset enumeration.
pub const MAX_PATHS: usize = 20;

const QUAD_INTERVALS: usize = 1 << 14;
const SUPPORT_TOL: f64 = 1e-16;

/// Chunk completion-time laws of the `N` paths. Idle paths use
/// [`ChunkCdf::Degenerate`].
#[derive(Debug, Clone, PartialEq)]
pub struct CdfVector {
    entries: Vec<ChunkCdf>,
}

impl CdfVector {
    pub fn new(entries: Vec<ChunkCdf>) -> Result<Self> {
        if entries.is_empty() {
            return Err(FjupError::InvalidParameter("a CDF vector needs at least one path".into()));
        }
        if entries.len() > MAX_PATHS {
            return Err(FjupError::TooManyPaths { n: entries.len(), max: MAX_PATHS });
        }
        Ok(Self { entries })
    }

    /// Builds the chunk laws for `chunks[i]` packets on path `i`.
    pub fn from_allocation(chunks: &[u32], models: &[ServiceModel], grid: &GridSpec) -> Result<Self> {
        if chunks.len() != models.len() {
            return Err(FjupError::InvalidParameter(format!(
                "{} chunk sizes for {} paths",
                chunks.len(),
                models.len()
            )));
        }
        let entries = chunks
            .iter()
            .zip(models)
            .map(|(&k, m)| if k == 0 { Ok(ChunkCdf::Degenerate) } else { chunk_cdf(m, k, grid) })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[ChunkCdf] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The same vector without its degenerate entries.
    pub fn without_idle(&self) -> Vec<ChunkCdf> {
        self.entries.iter().filter(|c| !matches!(c, ChunkCdf::Degenerate)).cloned().collect()
    }
}

/// `∫₀^∞ Π_{i∈S} (1 - F_i(x)) dx` for one subset.
pub fn subset_survival_integral(members: &[&ChunkCdf]) -> Result<f64> {
    if members.is_empty() {
        return Err(FjupError::InvalidParameter("empty subset".into()));
    }
    if members.iter().any(|c| matches!(c, ChunkCdf::Degenerate)) {
        return Ok(0.0);
    }
    for c in members {
        if !c.is_proper(1e-6) {
            return Err(FjupError::Divergent(format!("chunk CDF {c:?} does not approach one")));
        }
    }
    let erlang: Option<Vec<(u32, f64)>> = members.iter().map(|c| as_erlang(c)).collect();
    match erlang {
        Some(e) => Ok(erlang_min_mean(&e)),
        None => Ok(numeric_survival_integral(members)),
    }
}

fn as_erlang(c: &ChunkCdf) -> Option<(u32, f64)> {
    match *c {
        ChunkCdf::Erlang { k, rate } => Some((k, rate)),
        ChunkCdf::Gamma { shape, rate } if shape.fract() == 0.0 && shape >= 1.0 && shape < u32::MAX as f64 => {
            Some((shape as u32, rate))
        }
        _ => None,
    }
}

/// Mean of the minimum of independent Erlang variables.
///
/// With `Λ = Σλ_i` and `p_i = λ_i / Λ` the integral equals
/// `(1/Λ) Σ_t P(multinomial(t, p) has n_i < k_i for all i)`, accumulated one
/// path at a time in log space.
pub fn erlang_min_mean(members: &[(u32, f64)]) -> f64 {
    let total: f64 = members.iter().map(|m| m.1).sum();
    let max_t: usize = members.iter().map(|m| (m.0 - 1) as usize).sum();
    let ln_fact: Vec<f64> = (0..=max_t).map(|n| ln_gamma(n as f64 + 1.0)).collect();
    let mut ln_a = vec![f64::NEG_INFINITY; max_t + 1];
    ln_a[0] = 0.0;
    let mut reach = 0usize;
    let mut exps = Vec::with_capacity(max_t + 1);
    for &(k, rate) in members {
        let ln_p = (rate / total).ln();
        let top = (k - 1) as usize;
        let new_reach = reach + top;
        let mut next = vec![f64::NEG_INFINITY; max_t + 1];
        for (t, slot) in next.iter_mut().enumerate().take(new_reach + 1) {
            exps.clear();
            let lo = t.saturating_sub(reach);
            for n in lo..=top.min(t) {
                let prev = ln_a[t - n];
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                exps.push(ln_fact[t] - ln_fact[n] - ln_fact[t - n] + n as f64 * ln_p + prev);
            }
            if exps.is_empty() {
                continue;
            }
            let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            *slot = m + exps.iter().map(|e| (e - m).exp()).sum::<f64>().ln();
        }
        ln_a = next;
        reach = new_reach;
    }
    ln_a.iter().map(|l| l.exp()).sum::<f64>() / total
}

fn numeric_survival_integral(members: &[&ChunkCdf]) -> f64 {
    let upper = members
        .iter()
        .map(|c| c.effective_support(SUPPORT_TOL))
        .fold(f64::INFINITY, f64::min);
    if upper <= 0.0 {
        return 0.0;
    }
    // Grid CDFs are piecewise linear; align the quadrature with their nodes
    // when the grid is fine enough.
    let finest = members
        .iter()
        .filter_map(|c| match c {
            ChunkCdf::Discretized(d) => Some(d.step()),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    let mut intervals = QUAD_INTERVALS;
    if finest.is_finite() {
        let nodes = (upper / finest).ceil() as usize;
        intervals = intervals.max(nodes.min(1 << 18));
    }
    if intervals % 2 == 1 {
        intervals += 1;
    }
    simpson(|x| members.iter().map(|c| c.survival(x)).product(), 0.0, upper, intervals)
}

fn subset_integrals(f: &CdfVector) -> Result<Vec<f64>> {
    let n = f.len();
    let mut out = vec![0.0; 1 << n];
    let mut members = Vec::with_capacity(n);
    for (mask, slot) in out.iter_mut().enumerate().skip(1) {
        members.clear();
        members.extend((0..n).filter(|i| mask >> i & 1 == 1).map(|i| &f.entries[i]));
        *slot = subset_survival_integral(&members)?;
    }
    Ok(out)
}

fn d_all(f: &CdfVector) -> Result<Vec<f64>> {
    let integrals = subset_integrals(f)?;
    let mut d = vec![0.0; f.len() + 1];
    for (mask, v) in integrals.iter().enumerate().skip(1) {
        d[(mask as u32).count_ones() as usize] += v;
    }
    Ok(d)
}

/// `D_j`: sum over size-`j` subsets of the joint survival integral.
pub fn d_operator(j: usize, f: &CdfVector) -> Result<f64> {
    if j == 0 || j > f.len() {
        return Err(FjupError::InvalidParameter(format!("j={j} outside 1..={}", f.len())));
    }
    Ok(d_all(f)?[j])
}

fn mu_from_d(r: usize, n: usize, d: &[f64]) -> f64 {
    (n - r + 1..=n)
        .map(|j| {
            let sign = if (j + r + 1 - n).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * choose((j - 1) as u64, (n - r) as u64) * d[j]
        })
        .sum()
}

/// Expected `r`-th smallest chunk completion time.
pub fn mu_operator(r: usize, f: &CdfVector) -> Result<f64> {
    if r == 0 || r > f.len() {
        return Err(FjupError::InvalidParameter(format!("r={r} outside 1..={}", f.len())));
    }
    let d = d_all(f)?;
    Ok(mu_from_d(r, f.len(), &d).max(0.0))
}

/// All expected order statistics `μ_1, …, μ_N`.
pub fn mu_all(f: &CdfVector) -> Result<Vec<f64>> {
    let d = d_all(f)?;
    let n = f.len();
    Ok((1..=n).map(|r| mu_from_d(r, n, &d).max(0.0)).collect())
}

/// Mean upload latency `ψ`: expected completion time of the last chunk.
pub fn mean_upload_latency(alloc: &Allocation, models: &[ServiceModel]) -> Result<f64> {
    mean_upload_latency_with_grid(alloc, models, &GridSpec::default())
}

pub fn mean_upload_latency_with_grid(alloc: &Allocation, models: &[ServiceModel], grid: &GridSpec) -> Result<f64> {
    if alloc.total() == 0 {
        return Ok(0.0);
    }
    let f = CdfVector::from_allocation(alloc.chunks(), models, grid)?;
    psi_of(&f)
}

/// `μ_N` over the non-idle entries.
pub fn psi_of(f: &CdfVector) -> Result<f64> {
    let active = f.without_idle();
    if active.is_empty() {
        return Ok(0.0);
    }
    let v = CdfVector::new(active)?;
    mu_operator(v.len(), &v)
}

/// Mean latency `η_r` of an (N, r)-allocation: the `r`-th completion.
pub fn eta_r(alloc: &NrAllocation, models: &[ServiceModel]) -> Result<f64> {
    eta_r_with_grid(alloc, models, &GridSpec::default())
}

pub fn eta_r_with_grid(alloc: &NrAllocation, models: &[ServiceModel], grid: &GridSpec) -> Result<f64> {
    alloc.check()?;
    let f = CdfVector::from_allocation(alloc.chunks(), models, grid)?;
    mu_operator(alloc.r(), &f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma};

    fn erl(k: u32, rate: f64) -> ChunkCdf {
        ChunkCdf::Erlang { k, rate }
    }

    #[test]
    fn d_operator_small_cases() {
        let two = CdfVector::new(vec![erl(1, 1.0), erl(1, 1.0)]).unwrap();
        assert!((d_operator(2, &two).unwrap() - 0.5).abs() < 1e-15);
        let one = CdfVector::new(vec![erl(1, 4.0)]).unwrap();
        assert!((d_operator(1, &one).unwrap() - 0.25).abs() < 1e-15);
        let mixed = CdfVector::new(vec![erl(1, 1.0), erl(1, 2.0)]).unwrap();
        assert!((d_operator(1, &mixed).unwrap() - 1.5).abs() < 1e-15);
        assert!(d_operator(0, &mixed).is_err());
        assert!(d_operator(3, &mixed).is_err());
    }

    #[test]
    fn mu_operator_two_exponentials() {
        let two = CdfVector::new(vec![erl(1, 1.0), erl(1, 1.0)]).unwrap();
        assert!((mu_operator(1, &two).unwrap() - 0.5).abs() < 1e-15);
        assert!((mu_operator(2, &two).unwrap() - 1.5).abs() < 1e-15);
        let single = CdfVector::new(vec![erl(7, 2.0)]).unwrap();
        assert!((mu_operator(1, &single).unwrap() - 3.5).abs() < 1e-13);
    }

    #[test]
    fn min_of_two_erlang_twos() {
        // ∫ (e^{-x}(1+x))² dx = 5/4.
        assert!((erlang_min_mean(&[(2, 1.0), (2, 1.0)]) - 1.25).abs() < 1e-14);
    }

    #[test]
    fn erlang_integral_matches_quadrature() {
        let cases: [&[(u32, f64)]; 4] = [
            &[(3, 1.0), (5, 2.5)],
            &[(1, 0.3), (4, 1.0), (9, 7.0)],
            &[(20, 4.0), (12, 2.0)],
            &[(2, 1.0), (2, 1.0), (3, 2.0), (1, 5.0)],
        ];
        for members in cases {
            let cdfs: Vec<ChunkCdf> = members.iter().map(|&(k, r)| erl(k, r)).collect();
            let refs: Vec<&ChunkCdf> = cdfs.iter().collect();
            let q = simpson(|x| refs.iter().map(|c| c.survival(x)).product(), 0.0, 200.0, 400_000);
            let e = erlang_min_mean(members);
            assert!((e - q).abs() < 1e-10 * q, "{members:?}: {e} vs {q}");
        }
    }

    #[test]
    fn large_chunks_stay_finite() {
        let v = erlang_min_mean(&[(500, 1.0), (500, 1.3), (450, 0.9)]);
        assert!(v.is_finite() && v > 0.0 && v < 500.0 / 1.3 + 1e-9);
    }

    #[test]
    fn eta_of_replicated_unit_chunks() {
        let m = vec![ServiceModel::exponential(1.0).unwrap(); 3];
        let a = NrAllocation::new(vec![1, 1, 1], 1, 1).unwrap();
        assert!((eta_r(&a, &m).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn eta_rejects_non_members() {
        let m = vec![ServiceModel::exponential(1.0).unwrap(); 3];
        let a = NrAllocation::unchecked(vec![4, 1, 5], 2, 6);
        match eta_r(&a, &m) {
            Err(FjupError::NotNrMember { subset, sum, .. }) => {
                assert_eq!(subset, vec![0, 1]);
                assert_eq!(sum, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn idle_paths_are_ignored() {
        let m = vec![ServiceModel::exponential(3.0).unwrap(), ServiceModel::exponential(1.0).unwrap()];
        let a = Allocation::new(vec![6, 0]).unwrap();
        assert!((mean_upload_latency(&a, &m).unwrap() - 2.0).abs() < 1e-13);
        let z = Allocation::new(vec![0, 0]).unwrap();
        assert_eq!(mean_upload_latency(&z, &m).unwrap(), 0.0);
    }

    #[test]
    fn too_many_paths() {
        let v = vec![erl(1, 1.0); MAX_PATHS + 1];
        assert!(matches!(CdfVector::new(v), Err(FjupError::TooManyPaths { .. })));
    }

    #[test]
    fn grid_laws_use_quadrature() {
        let models = vec![ServiceModel::weibull(1.0, 1.0).unwrap(), ServiceModel::exponential(1.0).unwrap()];
        let f = CdfVector::from_allocation(&[2, 2], &models, &GridSpec::default()).unwrap();
        let mu = mu_all(&f).unwrap();
        // Same law as two Erlang(2, 1): min 1.25, max 4 - 1.25.
        assert!((mu[0] - 1.25).abs() < 1e-3, "{mu:?}");
        assert!((mu[1] - 2.75).abs() < 1e-3, "{mu:?}");
    }

    fn config() -> impl Strategy<Value = Vec<(u32, f64)>> {
        prop::collection::vec((1u32..8, 0.2f64..6.0), 1..5)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn order_statistics_are_monotone(c in config()) {
            let f = CdfVector::new(c.iter().map(|&(k, r)| erl(k, r)).collect()).unwrap();
            let mu = mu_all(&f).unwrap();
            for w in mu.windows(2) {
                prop_assert!(w[0] <= w[1] + 1e-12 * w[1].abs().max(1.0));
            }
        }

        #[test]
        fn order_statistics_sum_to_total_mean(c in config()) {
            let f = CdfVector::new(c.iter().map(|&(k, r)| erl(k, r)).collect()).unwrap();
            let s: f64 = mu_all(&f).unwrap().iter().sum();
            let want: f64 = c.iter().map(|&(k, r)| k as f64 / r).sum();
            prop_assert!((s - want).abs() < 1e-10 * want);
        }
    }

    // E[Y_r] against Monte Carlo with 10^6 draws.
    #[test]
    fn order_statistics_match_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let configs: [&[(u32, f64)]; 3] = [&[(1, 1.0), (2, 3.0)], &[(3, 2.0), (1, 0.5), (2, 1.0)], &[(4, 1.0), (4, 1.5), (2, 0.7), (1, 2.0)]];
        for c in configs {
            let f = CdfVector::new(c.iter().map(|&(k, r)| erl(k, r)).collect()).unwrap();
            let mu = mu_all(&f).unwrap();
            let n = c.len();
            let draws = 1_000_000;
            let gammas: Vec<Gamma<f64>> = c.iter().map(|&(k, r)| Gamma::new(k as f64, 1.0 / r).unwrap()).collect();
            let mut sum = vec![0.0; n];
            let mut sq = vec![0.0; n];
            let mut y = vec![0.0; n];
            for _ in 0..draws {
                for (slot, g) in y.iter_mut().zip(&gammas) {
                    *slot = g.sample(&mut rng);
                }
                y.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for r in 0..n {
                    sum[r] += y[r];
                    sq[r] += y[r] * y[r];
                }
            }
            for r in 0..n {
                let m = sum[r] / draws as f64;
                let se = ((sq[r] / draws as f64 - m * m) / draws as f64).sqrt();
                assert!((m - mu[r]).abs() < 3.0 * se, "{c:?} r={}: mc {m} vs {}", r + 1, mu[r]);
            }
        }
    }
}
