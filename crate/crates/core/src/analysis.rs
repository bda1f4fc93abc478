//! Row generators for the intermittent and steady-state analyses.

use rayon::prelude::*;

use crate::bounds::{path_decay_rate, PathDecay};
use crate::distributions::{GridSpec, ServiceModel};
use crate::error::{FjupError, Result};
use crate::intermittent::{
    argmin_lex, count_allocations, enumerate_allocations, optimal_nr_with, proportional_allocation,
    replication_latency_with_grid, ChunkTable, DEFAULT_SEARCH_CAP,
};

/// A labeled set of path models.
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub models: Vec<ServiceModel>,
}

impl Curve {
    pub fn new(label: impl Into<String>, models: Vec<ServiceModel>) -> Self {
        Self { label: label.into(), models }
    }

    fn mean_rates(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.mean_rate()).collect()
    }
}

/// Curves obtained by replacing path `index` with exponential service at
/// each rate, or the base models alone when `rates` is empty.
pub fn rate_curves(base: &[ServiceModel], index: usize, rates: &[f64]) -> Result<Vec<Curve>> {
    if rates.is_empty() {
        return Ok(vec![Curve::new("base", base.to_vec())]);
    }
    if index >= base.len() {
        return Err(FjupError::InvalidParameter(format!("no path {} to sweep", index + 1)));
    }
    rates
        .iter()
        .map(|&r| {
            let mut m = base.to_vec();
            m[index] = ServiceModel::exponential(r)?;
            Ok(Curve::new(format!("rate{}={r}", index + 1), m))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub curve: String,
    pub chunks: Vec<u32>,
    pub psi: f64,
    pub optimal: bool,
    pub proportional: bool,
}

/// Mean latency of every allocation of `total` packets, per curve.
pub fn intermittent_sweep(total: u32, curves: &[Curve], grid: &GridSpec) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for c in curves {
        let n = c.models.len();
        if !(1..=3).contains(&n) {
            return Err(FjupError::InvalidParameter(format!("the sweep takes 1 to 3 paths, got {n}")));
        }
        let size = count_allocations(n, total, false);
        if size > DEFAULT_SEARCH_CAP {
            return Err(FjupError::SearchSpaceExceeded { size, cap: DEFAULT_SEARCH_CAP });
        }
        let table = ChunkTable::new(&c.models, total, grid)?;
        let allocs = enumerate_allocations(n, total, false);
        let values = allocs.par_iter().map(|a| table.psi(a)).collect::<Result<Vec<f64>>>()?;
        let (best, _) = argmin_lex(&allocs, &values).ok_or(FjupError::InvalidParameter("empty sweep".into()))?;
        let prop = proportional_allocation(total, &c.mean_rates())?.into_chunks();
        for (a, psi) in allocs.into_iter().zip(values) {
            rows.push(SweepRow {
                curve: c.label.clone(),
                optimal: a == best,
                proportional: a == prop,
                chunks: a,
                psi,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncRow {
    pub curve: String,
    pub total: u32,
    /// `None` when `K < N` and no all-positive allocation exists.
    pub chi: Option<f64>,
    /// Marks the first `K` from which `χ` stays negative over the scan.
    pub crossing: bool,
}

/// `χ(N, K)` for every `K` in `min_total..=max_total`, per curve.
pub fn sync_cost_scan(min_total: u32, max_total: u32, curves: &[Curve], grid: &GridSpec) -> Result<Vec<SyncRow>> {
    if min_total > max_total {
        return Err(FjupError::InvalidParameter(format!("empty range {min_total}..={max_total}")));
    }
    let mut rows = Vec::new();
    for c in curves {
        let n = c.models.len();
        let table = ChunkTable::new(&c.models, max_total, grid)?;
        let mut curve_rows = (min_total..=max_total)
            .into_par_iter()
            .map(|k| {
                if (k as usize) < n || k == 0 {
                    return Ok(SyncRow { curve: c.label.clone(), total: k, chi: None, crossing: false });
                }
                let size = count_allocations(n, k, true);
                if size > DEFAULT_SEARCH_CAP {
                    return Err(FjupError::SearchSpaceExceeded { size, cap: DEFAULT_SEARCH_CAP });
                }
                let allocs = enumerate_allocations(n, k, true);
                let best = allocs.iter().map(|a| table.psi(a)).try_fold(f64::INFINITY, |m, v| v.map(|v| m.min(v)))?;
                let phi = replication_latency_with_grid(k, &c.models, grid)?;
                Ok(SyncRow { curve: c.label.clone(), total: k, chi: Some(best - phi), crossing: false })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(i) = zero_crossing(&curve_rows) {
            curve_rows[i].crossing = true;
        }
        rows.extend(curve_rows);
    }
    Ok(rows)
}

// First index of the negative suffix of χ, if the last value is negative.
fn zero_crossing(rows: &[SyncRow]) -> Option<usize> {
    let mut first = None;
    for (i, r) in rows.iter().enumerate().rev() {
        match r.chi {
            Some(x) if x < 0.0 => first = Some(i),
            _ => break,
        }
    }
    first
}

/// The smallest scanned `K` from which `χ` stays negative.
pub fn crossing_total(rows: &[SyncRow], curve: &str) -> Option<u32> {
    rows.iter().find(|r| r.curve == curve && r.crossing).map(|r| r.total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrRow {
    pub chunks: Vec<u32>,
    pub r: usize,
    pub eta: f64,
    pub regret: f64,
}

/// Every (N, r)-allocation of `total` packets with its latency and regret.
pub fn nr_trellis(total: u32, models: &[ServiceModel], grid: &GridSpec) -> Result<Vec<NrRow>> {
    let opt = optimal_nr_with(total, models, grid, DEFAULT_SEARCH_CAP)?;
    Ok(opt
        .table
        .into_iter()
        .map(|c| NrRow { chunks: c.allocation.chunks().to_vec(), r: c.allocation.r(), eta: c.eta, regret: c.regret })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub curve: String,
    pub chunks: Vec<u32>,
    /// Zero when some loaded path is unstable.
    pub theta_tilde: f64,
    pub stable: bool,
    pub optimal: bool,
    pub proportional: bool,
}

/// Effective decay rate of every allocation of `total` packets, per curve.
pub fn decay_sweep(total: u32, curves: &[Curve], arrival: &ServiceModel) -> Result<Vec<DecayRow>> {
    let mut rows = Vec::new();
    for c in curves {
        let n = c.models.len();
        let size = count_allocations(n, total, false);
        if size > DEFAULT_SEARCH_CAP {
            return Err(FjupError::SearchSpaceExceeded { size, cap: DEFAULT_SEARCH_CAP });
        }
        let table: Vec<Vec<PathDecay>> = c
            .models
            .iter()
            .map(|s| (0..=total).into_par_iter().map(|k| path_decay_rate(s, k, arrival)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let prop = proportional_allocation(total, &c.mean_rates())?.into_chunks();
        let start = rows.len();
        let mut best: Option<(usize, f64)> = None;
        for a in enumerate_allocations(n, total, false) {
            let mut tilde = f64::INFINITY;
            let mut stable = true;
            for (i, &k) in a.iter().enumerate() {
                match table[i][k as usize] {
                    PathDecay::Rate(t) => tilde = tilde.min(t),
                    PathDecay::Unstable => stable = false,
                }
            }
            let tilde = if stable { tilde } else { 0.0 };
            if stable && best.is_none_or(|(_, b)| tilde > b * (1.0 + 1e-12)) {
                best = Some((rows.len(), tilde));
            }
            rows.push(DecayRow {
                curve: c.label.clone(),
                proportional: a == prop,
                chunks: a,
                theta_tilde: tilde,
                stable,
                optimal: false,
            });
        }
        if let Some((i, _)) = best {
            debug_assert!(i >= start);
            rows[i].optimal = true;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intermittent::{psi_exponential, Allocation};

    fn exp(r: f64) -> ServiceModel {
        ServiceModel::exponential(r).unwrap()
    }

    #[test]
    fn sweep_marks_the_optimum_and_matches_closed_form() {
        let curves = rate_curves(&[exp(1.0), exp(2.0)], 0, &[1.0, 4.0]).unwrap();
        let rows = intermittent_sweep(12, &curves, &GridSpec::default()).unwrap();
        assert_eq!(rows.len(), 26);
        for r in &rows {
            let rate1 = if r.curve == "rate1=1" { 1.0 } else { 4.0 };
            let want = psi_exponential(&Allocation::new(r.chunks.clone()).unwrap(), &[rate1, 2.0]).unwrap();
            assert!((r.psi - want).abs() < 1e-9 * want);
        }
        for c in ["rate1=1", "rate1=4"] {
            let cr: Vec<_> = rows.iter().filter(|r| r.curve == c).collect();
            assert_eq!(cr.iter().filter(|r| r.optimal).count(), 1);
            assert_eq!(cr.iter().filter(|r| r.proportional).count(), 1);
            let min = cr.iter().map(|r| r.psi).fold(f64::INFINITY, f64::min);
            assert_eq!(cr.iter().find(|r| r.optimal).unwrap().psi, min);
            assert!(cr.iter().all(|r| r.chunks.iter().sum::<u32>() == 12));
        }
    }

    #[test]
    fn single_path_sweep_has_one_row() {
        let rows = intermittent_sweep(7, &[Curve::new("one", vec![exp(3.0)])], &GridSpec::default()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].psi - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sync_scan_flags_invalid_rows_and_the_crossing() {
        let curves = vec![Curve::new("c", vec![exp(1.0), exp(1.0)])];
        let rows = sync_cost_scan(1, 60, &curves, &GridSpec::default()).unwrap();
        assert_eq!(rows[0].chi, None);
        assert!((rows[1].chi.unwrap() - 0.25).abs() < 1e-9);
        let k0 = crossing_total(&rows, "c").unwrap();
        assert!(rows.iter().filter(|r| r.total >= k0).all(|r| r.chi.unwrap() < 0.0));
        assert!(rows.iter().any(|r| r.total == k0 - 1 && r.chi.unwrap() >= 0.0));
    }

    #[test]
    fn trellis_has_nonnegative_regret_and_replication_row() {
        let rows = nr_trellis(6, &[exp(1.0), exp(5.0), exp(10.0)], &GridSpec::default()).unwrap();
        assert!(rows.iter().all(|r| r.regret >= 0.0));
        let r1: Vec<_> = rows.iter().filter(|r| r.r == 1).collect();
        assert_eq!(r1.len(), 1);
        assert_eq!(r1[0].chunks, vec![6, 6, 6]);
        let zero: Vec<_> = rows.iter().filter(|r| r.regret == 0.0).collect();
        assert_eq!(zero.len(), 1);
        assert_eq!((zero[0].chunks.clone(), zero[0].r), (vec![5, 1, 5], 2));
    }

    #[test]
    fn decay_sweep_flags_unstable_and_agrees_with_search() {
        let arrival = exp(0.5);
        let curves = rate_curves(&[exp(10.0), exp(40.0)], 0, &[10.0]).unwrap();
        let rows = decay_sweep(30, &curves, &arrival).unwrap();
        assert_eq!(rows.len(), 31);
        // All 30 packets at rate 10 take 3 time units against a mean gap of 2.
        assert!(!rows.iter().find(|r| r.chunks == vec![30, 0]).unwrap().stable);
        let best = rows.iter().find(|r| r.optimal).unwrap();
        let (alloc, d) = crate::bounds::optimal_allocation_by_decay(30, &curves[0].models, &arrival).unwrap();
        assert_eq!(best.chunks, alloc.chunks());
        assert!((best.theta_tilde - d.theta_tilde).abs() < 1e-12);
    }
}
