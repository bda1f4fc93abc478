use super::{ln_gamma_emission, MmppParams};

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Maximum a posteriori hidden-state sequence (0-based states).
pub fn viterbi_map(obs: &[f64], shapes: &[u32], params: &MmppParams) -> Vec<usize> {
    let n = obs.len();
    if n == 0 {
        return Vec::new();
    }
    let m = params.states();
    let log_a: Vec<Vec<f64>> = params.transition().iter().map(|r| r.iter().map(|p| ln(*p)).collect()).collect();
    let mut delta: Vec<f64> = (0..m)
        .map(|k| ln(params.initial()[k]) + ln_gamma_emission(obs[0], params.rates()[k], shapes[0]))
        .collect();
    let mut back = vec![vec![0usize; m]; n];
    for t in 1..n {
        let mut next = vec![f64::NEG_INFINITY; m];
        for k in 0..m {
            let (arg, best) = (0..m)
                .map(|j| (j, delta[j] + log_a[j][k]))
                .fold((0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
            back[t][k] = arg;
            next[k] = best + ln_gamma_emission(obs[t], params.rates()[k], shapes[t]);
        }
        delta = next;
    }
    let mut path = vec![0usize; n];
    path[n - 1] = argmax(&delta);
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

/// Joint log-probability of observations and a given state path.
pub fn path_log_probability(obs: &[f64], shapes: &[u32], params: &MmppParams, path: &[usize]) -> f64 {
    assert_eq!(obs.len(), path.len());
    let mut lp = 0.0;
    for t in 0..obs.len() {
        lp += if t == 0 {
            ln(params.initial()[path[0]])
        } else {
            ln(params.transition()[path[t - 1]][path[t]])
        };
        lp += ln_gamma_emission(obs[t], params.rates()[path[t]], shapes[t]);
    }
    lp
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if *x > acc.1 { (i, *x) } else { acc })
        .0
}

/// Incremental Viterbi recursion reporting the MAP state of the latest observation.
///
/// After each observation the reported state is the last element of the full
/// MAP sequence over everything observed so far.
#[derive(Debug, Clone)]
pub struct OnlineMap {
    params: MmppParams,
    log_a: Vec<Vec<f64>>,
    delta: Option<Vec<f64>>,
}

impl OnlineMap {
    pub fn new(params: MmppParams) -> Self {
        let log_a = params.transition().iter().map(|r| r.iter().map(|p| ln(*p)).collect()).collect();
        Self { params, log_a, delta: None }
    }

    pub fn params(&self) -> &MmppParams {
        &self.params
    }

    pub fn observe(&mut self, x: f64, shape: u32) -> usize {
        let m = self.params.states();
        let emit = |k: usize| ln_gamma_emission(x, self.params.rates()[k], shape);
        let next: Vec<f64> = match &self.delta {
            None => (0..m).map(|k| ln(self.params.initial()[k]) + emit(k)).collect(),
            Some(prev) => (0..m)
                .map(|k| {
                    let best = (0..m).map(|j| prev[j] + self.log_a[j][k]).fold(f64::NEG_INFINITY, f64::max);
                    best + emit(k)
                })
                .collect(),
        };
        // Shift to keep magnitudes bounded over long runs.
        let top = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let state = argmax(&next);
        self.delta = Some(next.into_iter().map(|v| v - top).collect());
        state
    }

    /// MAP state after the latest observation, if any.
    pub fn current(&self) -> Option<usize> {
        self.delta.as_deref().map(argmax)
    }
}
