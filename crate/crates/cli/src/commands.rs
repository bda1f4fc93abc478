use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fjup_core::analysis::{self, rate_curves};
use fjup_core::config::ExperimentConfig;
use fjup_core::experiments::{
    generate_training_trace, mean_se, paired_difference, pooled_waiting, replication_means, run_replications,
    train_path_models, TrainingTrace,
};
use fjup_core::inference::{em_fit, MmppParams};
use fjup_core::sim::{ccdf, quantile};
use fjup_core::FjupError;
use log::info;

use crate::output::{columns, num, Output};
use crate::Common;

const CCDF_POINTS: usize = 200;

struct Loaded {
    cfg: ExperimentConfig,
    seed: u64,
    out: Output,
}

fn load(c: &Common) -> Result<Loaded> {
    let (mut cfg, text) = ExperimentConfig::load(&c.config)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    cfg.seed = seed;
    let dir = c.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let out = Output::new(&dir, &text, seed)?;
    Ok(Loaded { cfg, seed, out })
}

fn missing(section: &str) -> FjupError {
    FjupError::Parse(format!("missing [{section}] section"))
}

fn chunk_cells(chunks: &[u32]) -> impl Iterator<Item = String> + '_ {
    chunks.iter().map(|k| k.to_string())
}

pub fn intermittent_sweep(c: &Common) -> Result<()> {
    let l = load(c)?;
    let s = l.cfg.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
    let models = l.cfg.path_config()?.services;
    let curves = rate_curves(&models, 0, &s.rate1_values)?;
    let rows = analysis::intermittent_sweep(s.total, &curves, &l.cfg.grid_spec())?;
    let mut w = l.out.csv("intermittent_sweep.csv", &columns(&["curve"], models.len(), "k", &["psi", "optimal", "proportional"]))?;
    for r in &rows {
        let mut rec = vec![r.curve.clone()];
        rec.extend(chunk_cells(&r.chunks));
        rec.extend([num(r.psi), r.optimal.to_string(), r.proportional.to_string()]);
        w.write_record(&rec)?;
        if r.optimal {
            println!("{}: optimum {:?} psi={:.6}", r.curve, r.chunks, r.psi);
        }
    }
    w.flush()?;
    println!("wrote {} rows to {}", rows.len(), l.out.path("intermittent_sweep.csv").display());
    Ok(())
}

pub fn sync_cost(c: &Common) -> Result<()> {
    let l = load(c)?;
    let s = l.cfg.sync.as_ref().ok_or_else(|| missing("sync"))?;
    let models = l.cfg.path_config()?.services;
    let curves = rate_curves(&models, 1, &s.rate2_values)?;
    let rows = analysis::sync_cost_scan(s.min_total, s.max_total, &curves, &l.cfg.grid_spec())?;
    let mut w = l.out.csv("sync_cost.csv", &columns(&["curve", "K", "chi", "valid", "crossing"], 0, "", &[]))?;
    for r in &rows {
        w.write_record([
            r.curve.clone(),
            r.total.to_string(),
            r.chi.map(num).unwrap_or_default(),
            r.chi.is_some().to_string(),
            r.crossing.to_string(),
        ])?;
    }
    w.flush()?;
    for cv in &curves {
        match analysis::crossing_total(&rows, &cv.label) {
            Some(k) => println!("{}: chi < 0 for all scanned K >= {k}", cv.label),
            None => println!("{}: no sign change in the scanned range", cv.label),
        }
    }
    println!("wrote {} rows to {}", rows.len(), l.out.path("sync_cost.csv").display());
    Ok(())
}

pub fn nr_trellis(c: &Common) -> Result<()> {
    let l = load(c)?;
    let s = l.cfg.nr.as_ref().ok_or_else(|| missing("nr"))?;
    let models = l.cfg.path_config()?.services;
    let rows = analysis::nr_trellis(s.total, &models, &l.cfg.grid_spec())?;
    let mut w = l.out.csv("nr_trellis.csv", &columns(&[], models.len(), "k", &["r", "eta", "regret"]))?;
    for r in &rows {
        let mut rec: Vec<String> = chunk_cells(&r.chunks).collect();
        rec.extend([r.r.to_string(), num(r.eta), num(r.regret)]);
        w.write_record(&rec)?;
        if r.regret == 0.0 {
            println!("optimum {:?} with r={} eta={:.6}", r.chunks, r.r, r.eta);
        }
    }
    w.flush()?;
    println!("wrote {} rows to {}", rows.len(), l.out.path("nr_trellis.csv").display());
    Ok(())
}

pub fn decay_sweep(c: &Common) -> Result<()> {
    let l = load(c)?;
    let s = l.cfg.decay.as_ref().ok_or_else(|| missing("decay"))?;
    let models = l.cfg.path_config()?.services;
    let arrival = l.cfg.arrival_model()?;
    let curves = rate_curves(&models, 0, &s.rate1_values)?;
    let rows = analysis::decay_sweep(s.total, &curves, &arrival)?;
    let mut w = l.out.csv(
        "decay_sweep.csv",
        &columns(&["curve"], models.len(), "k", &["theta_tilde", "stable", "optimal", "proportional"]),
    )?;
    for r in &rows {
        let mut rec = vec![r.curve.clone()];
        rec.extend(chunk_cells(&r.chunks));
        rec.extend([num(r.theta_tilde), r.stable.to_string(), r.optimal.to_string(), r.proportional.to_string()]);
        w.write_record(&rec)?;
        if r.optimal {
            println!("{}: largest decay rate {:?} theta={:.6}", r.curve, r.chunks, r.theta_tilde);
        }
    }
    w.flush()?;
    println!("wrote {} rows to {}", rows.len(), l.out.path("decay_sweep.csv").display());
    Ok(())
}

fn write_models(out: &Output, params: &[MmppParams]) -> Result<Vec<PathBuf>> {
    params
        .iter()
        .enumerate()
        .map(|(i, p)| out.text(&format!("mm_path{}.txt", i + 1), &p.to_text()))
        .collect()
}

pub fn stream_experiment(c: &Common) -> Result<()> {
    let l = load(c)?;
    let t = l.cfg.traffic_section()?;
    let traffic = l.cfg.traffic_config()?;
    let paths = l.cfg.path_config()?;
    let trained = if l.cfg.needs_training() && t.horizon > 0 {
        let trace = generate_training_trace(&traffic, &paths, l.cfg.inference.training_batches, l.seed)?;
        let fits = train_path_models(&trace, &l.cfg.em_config())?;
        let params: Vec<MmppParams> = fits.into_iter().map(|f| f.params).collect();
        let files = write_models(&l.out, &params)?;
        info!("trained {} path models into {}", files.len(), l.out.dir().display());
        Some(params)
    } else if l.cfg.needs_training() {
        // Nothing is simulated, so placeholders stand in for the models.
        Some(paths.services.iter().map(|m| MmppParams::sticky(vec![m.mean_rate()], 1.0)).collect::<Result<Vec<_>, _>>()?)
    } else {
        None
    };
    let named = l.cfg.schedulers(trained.as_deref())?;
    if named.is_empty() {
        bail!(FjupError::Parse("no [[schedulers]] configured".into()));
    }
    let labels: Vec<&str> = named.iter().map(|(n, _)| n.as_str()).collect();
    let schedulers: Vec<_> = named.iter().map(|(_, s)| s.clone()).collect();
    let summary_header = columns(&["scheduler", "replications", "samples", "mean", "se", "p50", "p95", "p99", "max"], 0, "", &[]);
    let ccdf_header = columns(&["sigma", "ccdf", "n"], 0, "", &[]);

    if t.horizon == 0 {
        let mut w = l.out.csv("summary.csv", &summary_header)?;
        for name in &labels {
            l.out.csv(&format!("ccdf_{name}.csv"), &ccdf_header)?.flush()?;
            w.write_record([name.to_string(), "0".into(), "0".into(), "".into(), "".into(), "".into(), "".into(), "".into(), "".into()])?;
        }
        w.flush()?;
        println!("zero horizon: wrote empty outputs to {}", l.out.dir().display());
        return Ok(());
    }

    let reps = run_replications(&traffic, &paths, &schedulers, t.replications, l.seed)?;
    let pooled: Vec<Vec<f64>> = (0..labels.len()).map(|i| pooled_waiting(&reps, i, t.warmup)).collect();
    let top = pooled.iter().flatten().cloned().fold(0.0, f64::max);
    let grid: Vec<f64> = (0..=CCDF_POINTS).map(|i| top * i as f64 / CCDF_POINTS as f64).collect();

    let mut summary = l.out.csv("summary.csv", &summary_header)?;
    let means: Vec<Vec<f64>> = (0..labels.len()).map(|i| replication_means(&reps, i, t.warmup)).collect();
    for (i, name) in labels.iter().enumerate() {
        let mut w = l.out.csv(&format!("ccdf_{name}.csv"), &ccdf_header)?;
        if !pooled[i].is_empty() {
            for p in ccdf(&pooled[i], &grid)? {
                w.write_record([num(p.sigma), num(p.ccdf), p.n.to_string()])?;
            }
        }
        w.flush()?;
        let (m, se) = mean_se(&means[i]);
        let q = |p: f64| if pooled[i].is_empty() { String::new() } else { num(quantile(&pooled[i], p)) };
        summary.write_record([
            name.to_string(),
            reps.len().to_string(),
            pooled[i].len().to_string(),
            num(m),
            num(se),
            q(0.5),
            q(0.95),
            q(0.99),
            q(1.0),
        ])?;
        println!("{name}: mean waiting {m:.6} (se {se:.6})");

        let trajectories: Vec<&Vec<Vec<f64>>> = reps.iter().map(|r| &r.trajectories[i]).filter(|t| !t.is_empty()).collect();
        if let Some(len) = trajectories.iter().map(|t| t.len()).min() {
            let mut w = l.out.csv(&format!("trajectory_{name}.csv"), &columns(&["batch"], paths.paths(), "x", &[]))?;
            for b in 0..len {
                let mut rec = vec![b.to_string()];
                for n in 0..paths.paths() {
                    let avg = trajectories.iter().map(|t| t[b][n]).sum::<f64>() / trajectories.len() as f64;
                    rec.push(num(avg));
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
    }
    summary.flush()?;

    let mut w = l.out.csv("comparisons.csv", &columns(&["scheduler_a", "scheduler_b", "mean_difference", "se", "z"], 0, "", &[]))?;
    for a in 0..labels.len() {
        for b in a + 1..labels.len() {
            let d = paired_difference(&means[a], &means[b]);
            w.write_record([labels[a].to_string(), labels[b].to_string(), num(d.mean), num(d.se), num(d.z())])?;
        }
    }
    w.flush()?;
    println!("wrote outputs to {}", l.out.dir().display());
    Ok(())
}

pub fn gen_training(c: &Common) -> Result<()> {
    let l = load(c)?;
    let traffic = l.cfg.traffic_config()?;
    let paths = l.cfg.path_config()?;
    let trace = generate_training_trace(&traffic, &paths, l.cfg.inference.training_batches, l.seed)?;
    let mut w = l.out.csv("training_trace.csv", &columns(&["path", "chunk_time", "packets"], 0, "", &[]))?;
    let mut rows = 0;
    for (n, obs) in trace.iter().enumerate() {
        for (x, m) in obs {
            w.write_record([(n + 1).to_string(), num(*x), m.to_string()])?;
            rows += 1;
        }
    }
    w.flush()?;
    println!("wrote {rows} observations to {}", l.out.path("training_trace.csv").display());
    Ok(())
}

#[derive(serde::Deserialize)]
struct TraceRecord {
    path: usize,
    chunk_time: f64,
    packets: u32,
}

fn read_trace(path: &Path) -> Result<TrainingTrace> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FjupError::Parse(format!("{}: {e}", path.display())))?;
    let mut by_path: BTreeMap<usize, Vec<(f64, u32)>> = BTreeMap::new();
    for (i, rec) in r.deserialize::<TraceRecord>().enumerate() {
        let rec = rec.map_err(|e| FjupError::Parse(format!("{} record {}: {e}", path.display(), i + 1)))?;
        if rec.path == 0 || !(rec.chunk_time > 0.0 && rec.chunk_time.is_finite()) || rec.packets == 0 {
            bail!(FjupError::Parse(format!(
                "{} record {}: paths count from 1 and chunk times and packets must be positive",
                path.display(),
                i + 1
            )));
        }
        by_path.entry(rec.path).or_default().push((rec.chunk_time, rec.packets));
    }
    let n = by_path.keys().next_back().copied().unwrap_or(0);
    if n == 0 {
        bail!(FjupError::Parse(format!("{}: empty trace", path.display())));
    }
    (1..=n)
        .map(|p| by_path.remove(&p).ok_or_else(|| FjupError::Parse(format!("no observations for path {p}")).into()))
        .collect()
}

pub fn train_mm(c: &Common, trace_path: &Path) -> Result<()> {
    let l = load(c)?;
    let trace = read_trace(trace_path).context("reading training trace")?;
    let cfg = l.cfg.em_config();
    let mut params = Vec::with_capacity(trace.len());
    for (n, obs) in trace.iter().enumerate() {
        let x: Vec<f64> = obs.iter().map(|o| o.0).collect();
        let m: Vec<u32> = obs.iter().map(|o| o.1).collect();
        let fit = em_fit(&x, &m, &cfg)?;
        println!("path {}: {} observations, log-likelihood {:.6}, rates {:?}", n + 1, x.len(), fit.log_likelihood, fit.params.rates());
        params.push(fit.params);
    }
    for f in write_models(&l.out, &params)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
