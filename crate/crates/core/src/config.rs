//! TOML experiment configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::adaptive::{AdaptiveConfig, SamplerKind};
use crate::distributions::{GridSpec, ServiceModel};
use crate::error::{FjupError, Result};
use crate::inference::{EmConfig, MmppParams, Stepping};
use crate::sim::{ArrivalProcess, BatchSize, PathConfig, Scheduler, TrafficConfig};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_scenario")]
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the command line overrides it.
    pub out: Option<PathBuf>,
    pub traffic: Option<TrafficSection>,
    pub paths: PathsSection,
    #[serde(default)]
    pub schedulers: Vec<SchedulerSection>,
    #[serde(default)]
    pub inference: InferenceSection,
    pub grid: Option<GridSection>,
    pub sweep: Option<SweepSection>,
    pub sync: Option<SyncSection>,
    pub nr: Option<NrSection>,
    pub decay: Option<DecaySection>,
}

fn default_scenario() -> String {
    "unnamed".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub arrival: ServiceSpec,
    pub batch_size: BatchSpec,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Fraction of each run discarded before statistics are taken.
    #[serde(default)]
    pub warmup: f64,
}

fn default_horizon() -> usize {
    5000
}

fn default_replications() -> usize {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum BatchSpec {
    Fixed { packets: u32 },
    Poisson { mean: f64 },
}

/// One latency law: a packet time on a path or an inter-arrival gap.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum ServiceSpec {
    Exponential {
        rate: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    Weibull {
        scale: f64,
        shape: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    /// Sticky chain over `base_rate * multipliers`.
    Mmpp {
        base_rate: f64,
        #[serde(default = "default_multipliers")]
        multipliers: Vec<f64>,
        #[serde(default = "default_self_loop")]
        self_loop: f64,
    },
    /// Parameters stored in the plain-text model format.
    MmppFile {
        path: PathBuf,
    },
}

fn default_multipliers() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_self_loop() -> f64 {
    0.9
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub services: Vec<ServiceSpec>,
    #[serde(default)]
    pub stepping: SteppingSpec,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SteppingSpec {
    #[default]
    PerPacket,
    PerChunk,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum SchedulerSection {
    Static {
        proportions: Vec<f64>,
    },
    Proportional,
    BatchJsq,
    Adaptive {
        #[serde(default = "default_sampler")]
        sampler: SamplerSpec,
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        paper_sign: bool,
        #[serde(default = "default_window_cap")]
        window_cap: usize,
        /// Trained models for the `mm_map` sampler, one file per path.
        /// Without them the models are trained on a generated trace.
        #[serde(default)]
        params_files: Vec<PathBuf>,
        label: Option<String>,
    },
}

fn default_sampler() -> SamplerSpec {
    SamplerSpec::IidPosterior
}

fn default_eta() -> f64 {
    1e-3
}

fn default_samples() -> usize {
    100
}

fn default_window_cap() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SamplerSpec {
    Oracle,
    IidPosterior,
    MmMap,
    Ose,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    #[serde(default = "one")]
    pub prior_shape: f64,
    #[serde(default = "one")]
    pub prior_rate: f64,
    #[serde(default = "default_states")]
    pub em_states: usize,
    #[serde(default = "default_em_iterations")]
    pub em_iterations: usize,
    #[serde(default = "default_em_tol")]
    pub em_tol: f64,
    #[serde(default = "default_em_restarts")]
    pub em_restarts: usize,
    /// Batches simulated to train `mm_map` models when no files are given.
    #[serde(default = "default_training_batches")]
    pub training_batches: usize,
}

fn one() -> f64 {
    1.0
}

fn default_states() -> usize {
    3
}

fn default_em_iterations() -> usize {
    200
}

fn default_em_tol() -> f64 {
    1e-8
}

fn default_em_restarts() -> usize {
    5
}

fn default_training_batches() -> usize {
    2000
}

impl Default for InferenceSection {
    fn default() -> Self {
        Self {
            prior_shape: 1.0,
            prior_rate: 1.0,
            em_states: default_states(),
            em_iterations: default_em_iterations(),
            em_tol: default_em_tol(),
            em_restarts: default_em_restarts(),
            training_batches: default_training_batches(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_step_exp2")]
    pub step_exp2: u32,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    pub support: Option<f64>,
}

fn default_step_exp2() -> u32 {
    14
}

fn default_tail_tol() -> f64 {
    1e-9
}

/// Mean-latency curves over all allocations.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub total: u32,
    /// Replaces path 1's exponential rate for each curve.
    #[serde(default)]
    pub rate1_values: Vec<f64>,
}

/// Replication against allocation as the data grows.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSection {
    pub max_total: u32,
    #[serde(default = "one_u32")]
    pub min_total: u32,
    /// Replaces path 2's exponential rate for each curve.
    #[serde(default)]
    pub rate2_values: Vec<f64>,
}

fn one_u32() -> u32 {
    1
}

/// Regret over all (N, r)-strategies.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrSection {
    pub total: u32,
}

/// Effective decay rate over allocations.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    pub total: u32,
    #[serde(default)]
    pub rate1_values: Vec<f64>,
}

fn parse_err(msg: impl Into<String>) -> FjupError {
    FjupError::Parse(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((Self::from_toml(&text, base)?, text))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in self.paths.services.iter_mut() {
            if let ServiceSpec::MmppFile { path } = s {
                fix(path);
            }
        }
        if let Some(t) = self.traffic.as_mut() {
            if let ServiceSpec::MmppFile { path } = &mut t.arrival {
                fix(path);
            }
        }
        for s in self.schedulers.iter_mut() {
            if let SchedulerSection::Adaptive { params_files, .. } = s {
                params_files.iter_mut().for_each(fix);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.path_config()?;
        if let Some(t) = &self.traffic {
            self.traffic_config()?;
            if !(0.0..1.0).contains(&t.warmup) {
                return Err(parse_err(format!("warmup {} must lie in [0, 1)", t.warmup)));
            }
        }
        self.grid_spec();
        for s in &self.schedulers {
            if let SchedulerSection::Adaptive { params_files, sampler, .. } = s {
                if !params_files.is_empty() && *sampler != SamplerSpec::MmMap {
                    return Err(parse_err("params_files only apply to the mm_map sampler"));
                }
                if !params_files.is_empty() && params_files.len() != self.paths.services.len() {
                    return Err(parse_err(format!(
                        "{} params files for {} paths",
                        params_files.len(),
                        self.paths.services.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        match &self.grid {
            None => GridSpec::default(),
            Some(g) => GridSpec { step_exp2: g.step_exp2, tail_tol: g.tail_tol, support: g.support },
        }
    }

    pub fn path_config(&self) -> Result<PathConfig> {
        if self.paths.services.is_empty() {
            return Err(parse_err("[paths] needs at least one service"));
        }
        let services = self.paths.services.iter().map(service_model).collect::<Result<Vec<_>>>()?;
        let stepping = match self.paths.stepping {
            SteppingSpec::PerPacket => Stepping::PerPacket,
            SteppingSpec::PerChunk => Stepping::PerChunk,
        };
        Ok(PathConfig { services, stepping })
    }

    pub fn traffic_section(&self) -> Result<&TrafficSection> {
        self.traffic.as_ref().ok_or_else(|| parse_err("missing [traffic] section"))
    }

    pub fn traffic_config(&self) -> Result<TrafficConfig> {
        let t = self.traffic_section()?;
        let arrival = match service_model(&t.arrival)? {
            ServiceModel::MarkovModulatedExp(p) => ArrivalProcess::Mmpp(p),
            m => ArrivalProcess::Renewal(m),
        };
        let batch_size = match t.batch_size {
            BatchSpec::Fixed { packets } => BatchSize::Fixed(packets),
            BatchSpec::Poisson { mean } => BatchSize::Poisson(mean),
        };
        let cfg = TrafficConfig { arrival, batch_size, horizon: t.horizon, seed: self.seed };
        // A zero horizon is a valid empty run; the rest is still checked.
        TrafficConfig { horizon: t.horizon.max(1), ..cfg.clone() }.validate()?;
        Ok(cfg)
    }

    /// Arrival gap law as a service model (renewal arrivals only).
    pub fn arrival_model(&self) -> Result<ServiceModel> {
        match self.traffic_config()?.arrival {
            ArrivalProcess::Renewal(m) => Ok(m),
            ArrivalProcess::Mmpp(_) => Err(parse_err("this analysis needs renewal arrivals")),
        }
    }

    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            states: self.inference.em_states,
            max_iterations: self.inference.em_iterations,
            tol: self.inference.em_tol,
            restarts: self.inference.em_restarts,
            seed: self.seed,
        }
    }

    /// Scheduler descriptions with their labels. `trained` supplies models
    /// for `mm_map` samplers without parameter files.
    pub fn schedulers(&self, trained: Option<&[MmppParams]>) -> Result<Vec<(String, Scheduler)>> {
        let mut out = Vec::new();
        for s in &self.schedulers {
            out.push(match s {
                SchedulerSection::Static { proportions } => ("static".to_string(), Scheduler::Static(proportions.clone())),
                SchedulerSection::Proportional => ("proportional".to_string(), Scheduler::Proportional),
                SchedulerSection::BatchJsq => ("batch_jsq".to_string(), Scheduler::BatchJsq),
                SchedulerSection::Adaptive { sampler, eta, samples, paper_sign, window_cap, params_files, label } => {
                    let kind = match sampler {
                        SamplerSpec::Oracle => SamplerKind::Oracle,
                        SamplerSpec::IidPosterior => SamplerKind::IidPosterior {
                            prior_shape: self.inference.prior_shape,
                            prior_rate: self.inference.prior_rate,
                        },
                        SamplerSpec::Ose => SamplerKind::Ose,
                        SamplerSpec::MmMap => {
                            let params = if params_files.is_empty() {
                                trained
                                    .ok_or_else(|| parse_err("mm_map sampler needs params_files or trained models"))?
                                    .to_vec()
                            } else {
                                params_files.iter().map(|p| load_mmpp(p)).collect::<Result<Vec<_>>>()?
                            };
                            SamplerKind::MmMap { params }
                        }
                    };
                    let cfg = AdaptiveConfig {
                        eta: *eta,
                        samples: *samples,
                        sampler: kind,
                        paper_sign: *paper_sign,
                        window_cap: *window_cap,
                        truncate_at_regeneration: true,
                    };
                    cfg.validate(self.paths.services.len())?;
                    let name = label.clone().unwrap_or_else(|| format!("adaptive_{}", cfg.sampler.label()));
                    (name, Scheduler::Adaptive(cfg))
                }
            });
        }
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &out {
            if !seen.insert(name.clone()) {
                return Err(parse_err(format!("duplicate scheduler label {name}; set `label`")));
            }
        }
        Ok(out)
    }

    /// Whether some scheduler needs models trained from a generated trace.
    pub fn needs_training(&self) -> bool {
        self.schedulers.iter().any(|s| {
            matches!(s, SchedulerSection::Adaptive { sampler: SamplerSpec::MmMap, params_files, .. } if params_files.is_empty())
        })
    }
}

pub fn load_mmpp(path: &Path) -> Result<MmppParams> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
    MmppParams::from_text(&text)
}

pub fn service_model(spec: &ServiceSpec) -> Result<ServiceModel> {
    Ok(match spec {
        ServiceSpec::Exponential { rate } => ServiceModel::exponential(*rate)?,
        ServiceSpec::Gamma { shape, rate } => ServiceModel::gamma(*shape, *rate)?,
        ServiceSpec::Weibull { scale, shape } => ServiceModel::weibull(*scale, *shape)?,
        ServiceSpec::Lognormal { mu, sigma } => ServiceModel::lognormal(*mu, *sigma)?,
        ServiceSpec::Mmpp { base_rate, multipliers, self_loop } => {
            if *base_rate <= 0.0 || base_rate.is_nan() {
                return Err(parse_err(format!("base_rate {base_rate} must be positive")));
            }
            let rates = multipliers.iter().map(|m| m * base_rate).collect();
            ServiceModel::MarkovModulatedExp(MmppParams::sticky(rates, *self_loop)?)
        }
        ServiceSpec::MmppFile { path } => ServiceModel::MarkovModulatedExp(load_mmpp(path)?),
    })
}
