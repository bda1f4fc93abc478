use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};

use crate::error::{FjupError, Result};

const STOCHASTIC_TOL: f64 = 1e-9;

/// Hidden Markov chain modulating an exponential rate: `(π, A, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmppParams {
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    rates: Vec<f64>,
}

/// How a modulating chain advances while a path serves packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepping {
    /// One transition per packet served.
    #[default]
    PerPacket,
    /// One transition per batch; a chunk is served entirely in one state.
    PerChunk,
}

impl MmppParams {
    pub fn new(initial: Vec<f64>, transition: Vec<Vec<f64>>, rates: Vec<f64>) -> Result<Self> {
        let m = rates.len();
        if m == 0 {
            return Err(FjupError::InvalidParameter("MMPP needs at least one state".into()));
        }
        if initial.len() != m || transition.len() != m || transition.iter().any(|r| r.len() != m) {
            return Err(FjupError::InvalidParameter(format!(
                "MMPP dimensions disagree: {} rates, {} initial, {} transition rows",
                m,
                initial.len(),
                transition.len()
            )));
        }
        check_distribution("initial distribution", &initial)?;
        for (i, row) in transition.iter().enumerate() {
            check_distribution(&format!("transition row {i}"), row)?;
        }
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(FjupError::InvalidParameter(format!("MMPP rate must be positive, got {r}")));
        }
        Ok(Self { initial, transition, rates })
    }

    /// Uniform initial law, constant self-loop probability and equal off-diagonals.
    pub fn sticky(rates: Vec<f64>, self_loop: f64) -> Result<Self> {
        let m = rates.len();
        if !(0.0..=1.0).contains(&self_loop) {
            return Err(FjupError::InvalidParameter(format!("self-loop {self_loop} not a probability")));
        }
        let transition = if m == 1 {
            vec![vec![1.0]]
        } else {
            let off = (1.0 - self_loop) / (m - 1) as f64;
            (0..m)
                .map(|i| (0..m).map(|j| if i == j { self_loop } else { off }).collect())
                .collect()
        };
        Self::new(vec![1.0 / m as f64; m], transition, rates)
    }

    pub fn states(&self) -> usize {
        self.rates.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Stationary distribution of the modulating chain.
    pub fn stationary(&self) -> Vec<f64> {
        let m = self.states();
        // Solve π (A - I) = 0 with the last equation replaced by Σ π = 1.
        let mut a = vec![vec![0.0; m + 1]; m];
        for (row, eq) in a.iter_mut().enumerate() {
            for col in 0..m {
                eq[col] = self.transition[col][row] - if row == col { 1.0 } else { 0.0 };
            }
        }
        for col in 0..m {
            a[m - 1][col] = 1.0;
        }
        a[m - 1][m] = 1.0;
        match solve_dense(a) {
            Some(pi) if pi.iter().all(|p| *p > -1e-12) => {
                let s: f64 = pi.iter().map(|p| p.max(0.0)).sum();
                pi.iter().map(|p| p.max(0.0) / s).collect()
            }
            // Reducible chains have no unique solution; fall back to averaging powers.
            _ => self.stationary_by_iteration(),
        }
    }

    fn stationary_by_iteration(&self) -> Vec<f64> {
        let m = self.states();
        let mut dist = self.initial.clone();
        let mut avg = vec![0.0; m];
        let rounds = 10_000;
        for _ in 0..rounds {
            let mut next = vec![0.0; m];
            for (i, p) in dist.iter().enumerate() {
                for (j, q) in self.transition[i].iter().enumerate() {
                    next[j] += p * q;
                }
            }
            dist = next;
            for (a, d) in avg.iter_mut().zip(&dist) {
                *a += d / rounds as f64;
            }
        }
        avg
    }

    /// Stationary-weighted mean rate `Σ π_k λ_k`.
    pub fn mean_rate(&self) -> f64 {
        self.stationary().iter().zip(&self.rates).map(|(p, l)| p * l).sum()
    }

    /// Stationary mean holding time per packet, `Σ π_k / λ_k`.
    pub fn mean_holding_time(&self) -> f64 {
        self.stationary().iter().zip(&self.rates).map(|(p, l)| p / l).sum()
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.initial, rng)
    }

    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_categorical(&self.transition[state], rng)
    }

    /// Plain-text key-value serialization.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        writeln!(out, "states = {}", self.states()).unwrap();
        writeln!(out, "pi = {}", join(&self.initial)).unwrap();
        for row in &self.transition {
            writeln!(out, "A = {}", join(row)).unwrap();
        }
        writeln!(out, "lambda = {}", join(&self.rates)).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut states = None;
        let mut pi = None;
        let mut rows = Vec::new();
        let mut lambda = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| FjupError::Parse(format!("line {}: expected `key = values`", lineno + 1)))?;
            let numbers = || -> Result<Vec<f64>> {
                value
                    .split_whitespace()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|e| FjupError::Parse(format!("line {}: {t:?}: {e}", lineno + 1)))
                    })
                    .collect()
            };
            match key.trim() {
                "states" => {
                    states = Some(value.trim().parse::<usize>().map_err(|e| {
                        FjupError::Parse(format!("line {}: states: {e}", lineno + 1))
                    })?)
                }
                "pi" => pi = Some(numbers()?),
                "A" => rows.push(numbers()?),
                "lambda" => lambda = Some(numbers()?),
                other => {
                    return Err(FjupError::Parse(format!("line {}: unknown key {other:?}", lineno + 1)))
                }
            }
        }
        let states = states.ok_or_else(|| FjupError::Parse("missing `states`".into()))?;
        let pi = pi.ok_or_else(|| FjupError::Parse("missing `pi`".into()))?;
        let lambda = lambda.ok_or_else(|| FjupError::Parse("missing `lambda`".into()))?;
        if lambda.len() != states {
            return Err(FjupError::Parse(format!(
                "`states = {states}` but {} rates given",
                lambda.len()
            )));
        }
        Self::new(pi, rows, lambda).map_err(|e| FjupError::Parse(e.to_string()))
    }
}

/// Draws the service time of a `packets`-packet chunk starting in `state`.
///
/// Returns the sampled time and the chain state after the chunk.
pub fn resample_mm_service<R: Rng + ?Sized>(
    params: &MmppParams,
    state: usize,
    packets: u32,
    stepping: Stepping,
    rng: &mut R,
) -> (f64, usize) {
    assert!(state < params.states(), "state {state} out of range");
    match stepping {
        Stepping::PerChunk => {
            if packets == 0 {
                return (0.0, state);
            }
            let rate = params.rates[state];
            let t = Gamma::new(packets as f64, 1.0 / rate).expect("positive rate").sample(rng);
            (t, state)
        }
        Stepping::PerPacket => {
            let mut s = state;
            let mut total = 0.0;
            for _ in 0..packets {
                total += Exp::new(params.rates[s]).expect("positive rate").sample(rng);
                s = params.step(s, rng);
            }
            (total, s)
        }
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Round-off can leave `acc` a hair below one.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(FjupError::InvalidParameter(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(FjupError::InvalidParameter(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn validates_stochastic_inputs() {
        assert!(MmppParams::new(vec![0.5, 0.4], vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).is_err());
        assert!(MmppParams::new(vec![0.5, 0.5], vec![vec![0.9, 0.2], vec![0.0, 1.0]], vec![1.0, 2.0]).is_err());
        assert!(MmppParams::new(vec![1.0], vec![vec![1.0]], vec![0.0]).is_err());
        assert!(MmppParams::sticky(vec![1.0, 2.0, 3.0], 0.9).is_ok());
    }

    #[test]
    fn stationary_of_two_state_chain() {
        let p = MmppParams::new(vec![1.0, 0.0], vec![vec![0.9, 0.1], vec![0.3, 0.7]], vec![1.0, 3.0]).unwrap();
        let pi = p.stationary();
        assert!((pi[0] - 0.75).abs() < 1e-12 && (pi[1] - 0.25).abs() < 1e-12);
        let half = MmppParams::sticky(vec![1.0, 3.0], 0.5).unwrap();
        assert!((half.mean_rate() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let p = MmppParams::new(
            vec![0.2, 0.3, 0.5],
            vec![vec![0.8, 0.1, 0.1], vec![0.05, 0.9, 0.05], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
            vec![0.125, 7.0, 19.5],
        )
        .unwrap();
        assert_eq!(MmppParams::from_text(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(MmppParams::from_text("states = 1\npi = 1\nA = 1\n").is_err());
        assert!(MmppParams::from_text("states = 1\npi = x\nA = 1\nlambda = 2\n").is_err());
        assert!(MmppParams::from_text("states = 2\npi = 1\nA = 1\nlambda = 2\n").is_err());
        assert!(MmppParams::from_text("colour = blue\n").is_err());
    }

    #[test]
    fn single_packet_resample_mean() {
        let p = MmppParams::sticky(vec![0.5, 4.0], 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| resample_mm_service(&p, 1, 1, Stepping::PerPacket, &mut rng).0)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * sd / (n as f64).sqrt());
    }
}
