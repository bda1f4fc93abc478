use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{ln_gamma_emission, MmppParams};
use crate::error::{FjupError, Result};

/// Settings for offline EM fitting of a Markov-modulated gamma sequence.
#[derive(Debug, Clone)]
pub struct EmConfig {
    pub states: usize,
    pub max_iterations: usize,
    /// Stop once the log-likelihood gain of an iteration drops below this.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { states: 3, max_iterations: 200, tol: 1e-8, restarts: 5, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: MmppParams,
    pub log_likelihood: f64,
    /// Log-likelihood of every parameter iterate, starting with the initial guess.
    pub trace: Vec<f64>,
}

/// Smoothed marginals from the forward-backward pass.
#[derive(Debug, Clone)]
pub struct Posteriors {
    /// `gamma[t][k] = P(z_t = k | x)`.
    pub gamma: Vec<Vec<f64>>,
    /// `xi_sum[j][k] = Σ_t P(z_t = j, z_{t+1} = k | x)`.
    pub xi_sum: Vec<Vec<f64>>,
    /// Per-step pairwise marginals, kept only when requested.
    pub xi: Option<Vec<Vec<Vec<f64>>>>,
    pub log_likelihood: f64,
}

fn check_inputs(obs: &[f64], shapes: &[u32]) -> Result<()> {
    if obs.is_empty() {
        return Err(FjupError::InvalidParameter("no observations".into()));
    }
    if obs.len() != shapes.len() {
        return Err(FjupError::InvalidParameter(format!(
            "{} observations but {} shapes",
            obs.len(),
            shapes.len()
        )));
    }
    if let Some(x) = obs.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(FjupError::InvalidParameter(format!("observation {x} is not positive")));
    }
    if shapes.contains(&0) {
        return Err(FjupError::InvalidParameter("shapes must be >= 1".into()));
    }
    Ok(())
}

// Emission likelihoods rescaled per step; returns (scaled values, per-step log offsets).
fn scaled_emissions(obs: &[f64], shapes: &[u32], params: &MmppParams) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut em = Vec::with_capacity(obs.len());
    let mut offs = Vec::with_capacity(obs.len());
    for (x, m) in obs.iter().zip(shapes) {
        let logs: Vec<f64> = params.rates().iter().map(|l| ln_gamma_emission(*x, *l, *m)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        em.push(logs.iter().map(|v| (v - max).exp()).collect());
        offs.push(max);
    }
    (em, offs)
}

/// Normalized forward-backward pass.
pub fn forward_backward(obs: &[f64], shapes: &[u32], params: &MmppParams, keep_xi: bool) -> Posteriors {
    let n = obs.len();
    let m = params.states();
    let a = params.transition();
    let (em, offs) = scaled_emissions(obs, shapes, params);

    let mut alpha = vec![vec![0.0; m]; n];
    let mut scale = vec![0.0; n];
    for k in 0..m {
        alpha[0][k] = params.initial()[k] * em[0][k];
    }
    scale[0] = alpha[0].iter().sum();
    alpha[0].iter_mut().for_each(|v| *v /= scale[0]);
    for t in 1..n {
        for k in 0..m {
            let pred: f64 = (0..m).map(|j| alpha[t - 1][j] * a[j][k]).sum();
            alpha[t][k] = pred * em[t][k];
        }
        scale[t] = alpha[t].iter().sum();
        let c = scale[t];
        alpha[t].iter_mut().for_each(|v| *v /= c);
    }
    let log_likelihood = scale.iter().map(|c| c.ln()).sum::<f64>() + offs.iter().sum::<f64>();

    let mut beta = vec![vec![1.0; m]; n];
    for t in (0..n.saturating_sub(1)).rev() {
        for j in 0..m {
            beta[t][j] = (0..m).map(|k| a[j][k] * em[t + 1][k] * beta[t + 1][k]).sum::<f64>() / scale[t + 1];
        }
    }

    let gamma: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let g: Vec<f64> = (0..m).map(|k| alpha[t][k] * beta[t][k]).collect();
            let s: f64 = g.iter().sum();
            g.into_iter().map(|v| v / s).collect()
        })
        .collect();

    let mut xi_sum = vec![vec![0.0; m]; m];
    let mut xi_all = keep_xi.then(Vec::new);
    for t in 0..n.saturating_sub(1) {
        let mut xi = vec![vec![0.0; m]; m];
        let mut s = 0.0;
        for j in 0..m {
            for k in 0..m {
                let v = alpha[t][j] * a[j][k] * em[t + 1][k] * beta[t + 1][k] / scale[t + 1];
                xi[j][k] = v;
                s += v;
            }
        }
        for j in 0..m {
            for k in 0..m {
                xi[j][k] /= s;
                xi_sum[j][k] += xi[j][k];
            }
        }
        if let Some(all) = xi_all.as_mut() {
            all.push(xi);
        }
    }

    Posteriors { gamma, xi_sum, xi: xi_all, log_likelihood }
}

/// Log-likelihood of the observations under `params`.
pub fn log_likelihood(obs: &[f64], shapes: &[u32], params: &MmppParams) -> f64 {
    forward_backward(obs, shapes, params, false).log_likelihood
}

fn m_step<R: Rng>(
    obs: &[f64],
    shapes: &[u32],
    old: &MmppParams,
    post: &Posteriors,
    rng: &mut R,
) -> MmppParams {
    let m = old.states();
    let g0: f64 = post.gamma[0].iter().sum();
    let initial: Vec<f64> = post.gamma[0].iter().map(|g| g / g0).collect();
    let transition: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let row_total: f64 = post.xi_sum[j].iter().sum();
            if row_total > 1e-300 {
                post.xi_sum[j].iter().map(|v| v / row_total).collect()
            } else {
                old.transition()[j].clone()
            }
        })
        .collect();
    let total_rate = shapes.iter().map(|m| *m as f64).sum::<f64>() / obs.iter().sum::<f64>();
    let rates: Vec<f64> = (0..m)
        .map(|k| {
            let (mut num, mut den, mut mass) = (0.0, 0.0, 0.0);
            for t in 0..obs.len() {
                let z = post.gamma[t][k];
                num += z * shapes[t] as f64;
                den += z * obs[t];
                mass += z;
            }
            if mass < 1e-10 || den <= 0.0 {
                let jitter: f64 = Normal::new(0.0, 0.5).unwrap().sample(rng);
                log::warn!("EM state {k} lost all posterior mass; reinitializing its rate");
                total_rate * jitter.exp()
            } else {
                num / den
            }
        })
        .collect();
    MmppParams::new(initial, transition, rates).expect("M-step preserves stochasticity")
}

/// Runs EM from a fixed starting point.
pub fn em_iterate(
    obs: &[f64],
    shapes: &[u32],
    init: MmppParams,
    max_iterations: usize,
    tol: f64,
    seed: u64,
) -> Result<EmFit> {
    check_inputs(obs, shapes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init;
    let mut post = forward_backward(obs, shapes, &params, false);
    let mut trace = vec![post.log_likelihood];
    for _ in 0..max_iterations {
        let next = m_step(obs, shapes, &params, &post, &mut rng);
        let next_post = forward_backward(obs, shapes, &next, false);
        let gain = next_post.log_likelihood - post.log_likelihood;
        params = next;
        post = next_post;
        trace.push(post.log_likelihood);
        if gain.abs() < tol {
            break;
        }
    }
    Ok(EmFit { params, log_likelihood: post.log_likelihood, trace })
}

// 1-D k-means on per-packet log times.
fn kmeans_init(obs: &[f64], shapes: &[u32], states: usize, restart: usize, seed: u64) -> MmppParams {
    let feats: Vec<f64> = obs.iter().zip(shapes).map(|(x, m)| (x / *m as f64).ln()).collect();
    let mut sorted = feats.clone();
    sorted.sort_by(f64::total_cmp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut centers: Vec<f64> = if restart == 0 {
        (0..states)
            .map(|c| sorted[((2 * c + 1) * sorted.len() / (2 * states)).min(sorted.len() - 1)])
            .collect()
    } else {
        (0..states).map(|_| feats[rng.random_range(0..feats.len())]).collect()
    };
    let mut assign = vec![0usize; feats.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, f) in feats.iter().enumerate() {
            let best = (0..states)
                .min_by(|&a, &b| (f - centers[a]).abs().total_cmp(&(f - centers[b]).abs()))
                .unwrap();
            if best != assign[i] {
                assign[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<f64> = feats.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(f, _)| *f).collect();
            if !members.is_empty() {
                *center = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let mut rates: Vec<f64> = (0..states)
        .map(|c| {
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..obs.len() {
                if assign[i] == c {
                    num += shapes[i] as f64;
                    den += obs[i];
                }
            }
            if den > 0.0 {
                num / den
            } else {
                (-centers[c]).exp()
            }
        })
        .collect();
    rates.sort_by(f64::total_cmp);
    // Separate coincident starting rates so states can break symmetry.
    for i in 1..rates.len() {
        if rates[i] <= rates[i - 1] * (1.0 + 1e-6) {
            rates[i] = rates[i - 1] * 1.1;
        }
    }
    let self_loop = if states == 1 { 1.0 } else { 0.9 };
    MmppParams::sticky(rates, self_loop).expect("valid start")
}

/// Fits `(π, A, λ)` by EM with k-means starts; keeps the best of several restarts.
///
/// States of the returned model are ordered by increasing rate.
pub fn em_fit(obs: &[f64], shapes: &[u32], config: &EmConfig) -> Result<EmFit> {
    check_inputs(obs, shapes)?;
    if config.states == 0 {
        return Err(FjupError::InvalidParameter("EM needs at least one state".into()));
    }
    let restarts = config.restarts.max(1);
    let fits: Vec<EmFit> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let init = kmeans_init(obs, shapes, config.states, r, config.seed);
            em_iterate(obs, shapes, init, config.max_iterations, config.tol, config.seed.wrapping_add(r as u64))
        })
        .collect::<Result<_>>()?;
    let best = fits
        .into_iter()
        .reduce(|best, f| if f.log_likelihood > best.log_likelihood { f } else { best })
        .expect("at least one restart");
    Ok(EmFit { params: sort_by_rate(&best.params), ..best })
}

fn sort_by_rate(p: &MmppParams) -> MmppParams {
    let mut order: Vec<usize> = (0..p.states()).collect();
    order.sort_by(|&a, &b| p.rates()[a].total_cmp(&p.rates()[b]));
    let initial = order.iter().map(|&i| p.initial()[i]).collect();
    let transition = order
        .iter()
        .map(|&i| order.iter().map(|&j| p.transition()[i][j]).collect())
        .collect();
    let rates = order.iter().map(|&i| p.rates()[i]).collect();
    MmppParams::new(initial, transition, rates).expect("permutation keeps validity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{resample_mm_service, Stepping};

    fn synthetic(params: &MmppParams, n: usize, seed: u64) -> (Vec<f64>, Vec<u32>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = params.sample_initial(&mut rng);
        let (mut obs, mut shapes, mut states) = (vec![], vec![], vec![]);
        for _ in 0..n {
            let m = rng.random_range(1..6u32);
            let (x, _) = resample_mm_service(params, s, m, Stepping::PerChunk, &mut rng);
            obs.push(x);
            shapes.push(m);
            states.push(s);
            s = params.step(s, &mut rng);
        }
        (obs, shapes, states)
    }

    #[test]
    fn single_state_fit_is_closed_form() {
        let obs = [0.4, 1.7, 0.9, 2.2, 0.05];
        let shapes = [1, 3, 2, 4, 1];
        let cfg = EmConfig { states: 1, ..Default::default() };
        let fit = em_fit(&obs, &shapes, &cfg).unwrap();
        let want = shapes.iter().sum::<u32>() as f64 / obs.iter().sum::<f64>();
        assert!((fit.params.rates()[0] - want).abs() < 1e-9 * want);
    }

    #[test]
    fn marginals_are_consistent() {
        let p = MmppParams::sticky(vec![1.0, 5.0, 20.0], 0.8).unwrap();
        let (obs, shapes, _) = synthetic(&p, 200, 3);
        let post = forward_backward(&obs, &shapes, &p, true);
        for g in &post.gamma {
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let xi = post.xi.unwrap();
        for (t, x) in xi.iter().enumerate() {
            for j in 0..3 {
                let row: f64 = x[j].iter().sum();
                assert!((row - post.gamma[t][j]).abs() < 1e-10);
                let col: f64 = (0..3).map(|i| x[i][j]).sum();
                assert!((col - post.gamma[t + 1][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn likelihood_never_decreases() {
        let p = MmppParams::sticky(vec![1.0, 20.0], 0.95).unwrap();
        let (obs, shapes, _) = synthetic(&p, 300, 5);
        let init = MmppParams::sticky(vec![2.0, 3.0], 0.6).unwrap();
        let fit = em_iterate(&obs, &shapes, init, 100, 0.0, 1).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rejects_bad_observations() {
        assert!(em_fit(&[], &[], &EmConfig::default()).is_err());
        assert!(em_fit(&[1.0, -1.0], &[1, 1], &EmConfig::default()).is_err());
        assert!(em_fit(&[1.0], &[0], &EmConfig::default()).is_err());
        assert!(em_fit(&[1.0], &[1, 2], &EmConfig::default()).is_err());
    }
}
