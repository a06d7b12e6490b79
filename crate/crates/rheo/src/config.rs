//! TOML run configuration. Every table and key is optional; unknown keys are
//! rejected. Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use rheo_core::experiments::{Family, LandIceSweep, NoiseSpec, SeaIceSweep};
use rheo_core::fem::{NewtonOptions, DEFAULT_CELLS};
use rheo_core::losses::LossKind;
use rheo_core::nn::Architecture;
use rheo_core::optim::{AdamOptions, LbfgsOptions};
use rheo_core::train::{Optimizer, TrainConfig};

use crate::error::{config_error, CliError, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub landice: LandIceTable,
    #[serde(default)]
    pub seaice: SeaIceTable,
    #[serde(default)]
    pub noise: NoiseTable,
    #[serde(default)]
    pub model: ModelTable,
    #[serde(default)]
    pub train: TrainTable,
    #[serde(default)]
    pub penalty: PenaltyTable,
    #[serde(default)]
    pub eval: EvalTable,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandIceTable {
    pub alphas: Option<Vec<f64>>,
    pub temps_c: Option<Vec<f64>>,
    pub n_points: Option<usize>,
    pub n_cells: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeaIceTable {
    pub concentrations: Option<Vec<f64>>,
    pub u_os: Option<Vec<f64>>,
    pub n_points: Option<usize>,
    pub n_cells: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTable {
    pub sigma_s: Option<f64>,
    pub sigma_v: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTable {
    pub arch_xi: Option<Vec<usize>>,
    pub arch_chi: Option<Vec<usize>>,
    pub gamma_floor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainTable {
    pub dataset: Option<PathBuf>,
    pub loss: Option<String>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub optimizer: Option<String>,
    pub max_evals: Option<usize>,
    pub memory: Option<usize>,
    pub grad_tol: Option<f64>,
    pub lr: Option<f64>,
    pub warm_start_iters: Option<usize>,
    pub n_cells: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyTable {
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub n_gamma: Option<usize>,
    pub n_lambda: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalTable {
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub n_cells: Option<usize>,
}

impl RunConfig {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(path, &text)
    }
}

pub fn parse_family(s: &str) -> Result<Family> {
    s.parse().map_err(config_error)
}

pub fn parse_loss(s: &str) -> Result<LossKind> {
    match s {
        "stress" => Ok(LossKind::Stress),
        "velocity" => Ok(LossKind::Velocity),
        other => Err(CliError::Usage(format!(
            "unknown loss `{other}` (expected stress or velocity)"
        ))),
    }
}

/// Flag values that override the file, `None` when not given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub family: Option<String>,
    pub sigma_s: Option<f64>,
    pub sigma_v: Option<f64>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub loss: Option<String>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub max_evals: Option<usize>,
    pub optimizer: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSettings {
    pub family: Family,
    pub landice: LandIceSweep,
    pub seaice: SeaIceSweep,
    pub noise: NoiseSpec,
    pub newton: NewtonOptions,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub dataset: PathBuf,
    pub train: TrainConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub model: PathBuf,
    pub dataset: PathBuf,
    pub n_cells: usize,
    pub newton: NewtonOptions,
    pub out: PathBuf,
}

fn out_dir(cfg: &RunConfig, o: &Overrides) -> PathBuf {
    o.out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn check_reals(what: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Usage(format!(
            "{what} must be a non-empty list of finite numbers"
        )));
    }
    Ok(())
}

fn check_cells(n: usize) -> Result<usize> {
    if n < 3 {
        return Err(CliError::Usage(format!(
            "n_cells must be at least 3, got {n}"
        )));
    }
    Ok(n)
}

pub fn resolve_generate(cfg: &RunConfig, o: &Overrides) -> Result<GenerateSettings> {
    let family = parse_family(
        o.family
            .as_deref()
            .or(cfg.family.as_deref())
            .unwrap_or("landice"),
    )?;
    if family == Family::External {
        return Err(CliError::Usage(
            "external data cannot be generated; use `train --data` on the file".into(),
        ));
    }
    let li = &cfg.landice;
    let d = LandIceSweep::default();
    let landice = LandIceSweep {
        alphas: li.alphas.clone().unwrap_or(d.alphas),
        temps_c: li.temps_c.clone().unwrap_or(d.temps_c),
        n_points: li.n_points.unwrap_or(d.n_points),
        n_cells: check_cells(li.n_cells.unwrap_or(d.n_cells))?,
    };
    check_reals("landice.alphas", &landice.alphas)?;
    check_reals("landice.temps_c", &landice.temps_c)?;
    let si = &cfg.seaice;
    let d = SeaIceSweep::default();
    let seaice = SeaIceSweep {
        concentrations: si.concentrations.clone().unwrap_or(d.concentrations),
        u_os: si.u_os.clone().unwrap_or(d.u_os),
        n_points: si.n_points.unwrap_or(d.n_points),
        n_cells: check_cells(si.n_cells.unwrap_or(d.n_cells))?,
    };
    check_reals("seaice.concentrations", &seaice.concentrations)?;
    check_reals("seaice.u_os", &seaice.u_os)?;
    let noise = NoiseSpec {
        sigma_s: o.sigma_s.or(cfg.noise.sigma_s).unwrap_or(0.0),
        sigma_v: o.sigma_v.or(cfg.noise.sigma_v).unwrap_or(0.0),
        seed: o.seed.or(cfg.seed).unwrap_or(0),
    };
    for (what, v) in [("sigma_s", noise.sigma_s), ("sigma_v", noise.sigma_v)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::Usage(format!(
                "{what} must be a finite non-negative number, got {v}"
            )));
        }
    }
    Ok(GenerateSettings {
        family,
        landice,
        seaice,
        noise,
        newton: NewtonOptions::default(),
        out: out_dir(cfg, o),
    })
}

pub fn resolve_train(cfg: &RunConfig, o: &Overrides, data_family: Family) -> Result<TrainSettings> {
    let t = &cfg.train;
    let loss = parse_loss(o.loss.as_deref().or(t.loss.as_deref()).unwrap_or("stress"))?;
    let mut tc = TrainConfig::new(data_family, loss);
    tc.seed = o.seed.or(cfg.seed).unwrap_or(0);
    if let (Some(xi), Some(chi)) = (&cfg.model.arch_xi, &cfg.model.arch_chi) {
        tc.arch = Architecture::new(xi.clone(), chi.clone()).map_err(config_error)?;
    } else if cfg.model.arch_xi.is_some() || cfg.model.arch_chi.is_some() {
        return Err(CliError::Usage(
            "model.arch_xi and model.arch_chi must be given together".into(),
        ));
    }
    if let Some(g) = cfg.model.gamma_floor {
        tc.gamma_floor = g;
    }
    tc.beta1 = o.beta1.or(t.beta1).unwrap_or(tc.beta1);
    tc.beta2 = o.beta2.or(t.beta2).unwrap_or(tc.beta2);
    for (what, v) in [
        ("beta1", tc.beta1),
        ("beta2", tc.beta2),
        ("gamma_floor", tc.gamma_floor),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::Usage(format!(
                "{what} must be a finite non-negative number, got {v}"
            )));
        }
    }
    let p = &cfg.penalty;
    let mut q = tc.domain;
    q.gamma_min = p.gamma_min.unwrap_or(q.gamma_min);
    q.gamma_max = p.gamma_max.unwrap_or(q.gamma_max);
    q.lambda_min = p.lambda_min.unwrap_or(q.lambda_min);
    q.lambda_max = p.lambda_max.unwrap_or(q.lambda_max);
    q.n_gamma = p.n_gamma.unwrap_or(q.n_gamma);
    q.n_lambda = p.n_lambda.unwrap_or(q.n_lambda);
    q.validate().map_err(config_error)?;
    tc.domain = q;

    let max_evals = o.max_evals.or(t.max_evals);
    tc.optimizer = match o
        .optimizer
        .as_deref()
        .or(t.optimizer.as_deref())
        .unwrap_or("lbfgs")
    {
        "lbfgs" => {
            let d = LbfgsOptions::default();
            let opts = LbfgsOptions {
                memory: t.memory.unwrap_or(d.memory),
                max_evals: max_evals.unwrap_or(d.max_evals),
                grad_tol: t.grad_tol.unwrap_or(d.grad_tol),
                ..d
            };
            opts.validate().map_err(config_error)?;
            Optimizer::Lbfgs(opts)
        }
        "adam" => {
            let d = AdamOptions::default();
            let opts = AdamOptions {
                lr: t.lr.unwrap_or(d.lr),
                max_iters: max_evals.unwrap_or(d.max_iters),
                ..d
            };
            if !(opts.lr > 0.0 && opts.lr.is_finite()) || opts.max_iters == 0 {
                return Err(CliError::Usage(
                    "adam needs lr > 0 and max_evals > 0".into(),
                ));
            }
            Optimizer::Adam(opts)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown optimizer `{other}` (expected lbfgs or adam)"
            )))
        }
    };
    tc.warm_start_iters = t.warm_start_iters.unwrap_or(tc.warm_start_iters);
    tc.n_cells = check_cells(t.n_cells.unwrap_or(DEFAULT_CELLS))?;

    let dataset = o
        .dataset
        .clone()
        .or_else(|| t.dataset.clone())
        .ok_or_else(|| CliError::Usage("train needs a dataset (--data or train.dataset)".into()))?;
    Ok(TrainSettings {
        dataset,
        train: tc,
        out: out_dir(cfg, o),
    })
}

/// The dataset path of a train run, before its family is known.
pub fn train_dataset(cfg: &RunConfig, o: &Overrides) -> Result<PathBuf> {
    o.dataset
        .clone()
        .or_else(|| cfg.train.dataset.clone())
        .ok_or_else(|| CliError::Usage("train needs a dataset (--data or train.dataset)".into()))
}

pub fn resolve_eval(cfg: &RunConfig, o: &Overrides) -> Result<EvalSettings> {
    let e = &cfg.eval;
    let model = o
        .model
        .clone()
        .or_else(|| e.model.clone())
        .ok_or_else(|| CliError::Usage("eval needs a model (--model or eval.model)".into()))?;
    let dataset = o
        .dataset
        .clone()
        .or_else(|| e.dataset.clone())
        .ok_or_else(|| CliError::Usage("eval needs a dataset (--data or eval.dataset)".into()))?;
    Ok(EvalSettings {
        model,
        dataset,
        n_cells: check_cells(e.n_cells.unwrap_or(DEFAULT_CELLS))?,
        newton: NewtonOptions::default(),
        out: out_dir(cfg, o),
    })
}

/// SHA-256 of a canonical rendering of resolved settings.
pub fn settings_hash(settings: &impl std::fmt::Debug) -> String {
    let mut h = Sha256::new();
    h.update(format!("{settings:?}").as_bytes());
    format!("{:x}", h.finalize())
}
