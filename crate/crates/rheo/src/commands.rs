//! `generate`, `train` and `eval`, callable without the argument parser.

use std::fmt::Write as _;
use std::path::PathBuf;

use rheo_core::experiments::{
    add_noise, describe, error_metrics, generate_landice, generate_seaice, truth_model, Dataset,
    ErrorReport, Family, FamilyConfig,
};
use rheo_core::fem::solve_steady;
use rheo_core::optim::{OptimResult, WallClock};
use rheo_core::rheology::{GlenParams, ViscosityModel, VpParams};
use rheo_core::train::{train, TrainError};

use crate::atomic;
use crate::config::{settings_hash, EvalSettings, GenerateSettings, TrainSettings};
use crate::dataset_csv::{self, fmt_f64};
use crate::error::{config_error, CliError, Result};
use crate::{model_file, trace_csv};

pub const DATASET_FILE: &str = "dataset.csv";
pub const PROVENANCE_FILE: &str = "provenance.txt";
pub const MODEL_FILE: &str = "model.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const ERRORS_FILE: &str = "errors.csv";
pub const STRESS_CURVES_FILE: &str = "stress_curves.csv";
pub const VELOCITY_PROFILES_FILE: &str = "velocity_profiles.csv";

pub fn generate_dataset(s: &GenerateSettings) -> Result<Dataset> {
    let clean = match s.family {
        Family::LandIce => generate_landice(&s.landice, &GlenParams::default(), &s.newton),
        Family::SeaIce => generate_seaice(&s.seaice, &VpParams::default(), &s.newton),
        Family::External => {
            return Err(CliError::Usage("external data cannot be generated".into()))
        }
    }
    .map_err(config_error)?;
    add_noise(&clean, &s.noise).map_err(config_error)
}

/// Writes the dataset and its provenance sidecar; returns the dataset path.
pub fn cmd_generate(s: &GenerateSettings) -> Result<PathBuf> {
    let ds = generate_dataset(s)?;
    atomic::create_dir(&s.out)?;
    let path = s.out.join(DATASET_FILE);
    dataset_csv::write(&path, &ds)?;
    // the output directory does not enter the hash
    let hashed = GenerateSettings {
        out: PathBuf::new(),
        ..s.clone()
    };
    let mut prov = String::new();
    writeln!(prov, "tool = rheo {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(prov, "command = generate").unwrap();
    writeln!(prov, "config_sha256 = {}", settings_hash(&hashed)).unwrap();
    writeln!(prov, "family = {}", s.family).unwrap();
    writeln!(prov, "noise_seed = {}", s.noise.seed).unwrap();
    writeln!(prov, "sigma_s = {}", fmt_f64(s.noise.sigma_s)).unwrap();
    writeln!(prov, "sigma_v = {}", fmt_f64(s.noise.sigma_v)).unwrap();
    writeln!(prov, "dataset = {}", describe(&ds)).unwrap();
    atomic::write_file(&s.out.join(PROVENANCE_FILE), prov.as_bytes())?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub trace_path: PathBuf,
    pub result: OptimResult,
    pub data_loss: f64,
    pub rejected_rows: Vec<usize>,
}

/// Trains on `s.dataset`; writes the model and the trace. On optimizer
/// failure only the trace is written.
pub fn cmd_train(s: &TrainSettings) -> Result<TrainSummary> {
    let ds = dataset_csv::read(&s.dataset)?;
    atomic::create_dir(&s.out)?;
    let model_path = s.out.join(MODEL_FILE);
    let trace_path = s.out.join(TRACE_FILE);
    let out = match train(&ds, &s.train, None, &WallClock::start()) {
        Ok(o) => o,
        Err(TrainError::Setup(e)) => return Err(config_error(e)),
        Err(TrainError::Optim(e)) | Err(TrainError::WarmStart(e)) => {
            trace_csv::write(&trace_path, &e.trace)?;
            return Err(CliError::Training {
                message: e.to_string(),
                trace: e.trace,
            });
        }
    };
    model_file::write(&model_path, &out.params)?;
    trace_csv::write(&trace_path, &out.result.trace)?;
    Ok(TrainSummary {
        model_path,
        trace_path,
        data_loss: out.breakdown.data,
        result: out.result,
        rejected_rows: out.rejected_rows,
    })
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    /// `None` for external data, which has no truth rheology.
    pub report: Option<ErrorReport>,
    pub files: Vec<PathBuf>,
}

const NA: &str = "NA";

pub fn cmd_eval(s: &EvalSettings) -> Result<EvalSummary> {
    let params = model_file::read(&s.model)?;
    let ds = dataset_csv::read(&s.dataset)?;
    let model = ViscosityModel::Neural(params.clone());
    let truth = truth_model(ds.family);
    let fc = FamilyConfig::for_dataset(&ds);
    let problems = ds.problems(s.n_cells).map_err(config_error)?;

    let report = match &truth {
        Some(t) => Some(error_metrics(&params, t, &fc, &problems, &s.newton)?),
        None => None,
    };

    let mut errors = String::from("metric,value\n");
    match &report {
        Some(r) => {
            writeln!(errors, "eps_s,{}", fmt_f64(r.eps_s)).unwrap();
            writeln!(errors, "eps_v,{}", fmt_f64(r.eps_v)).unwrap();
            for (l, v) in fc.lambdas.iter().zip(&r.per_lambda) {
                writeln!(errors, "eps_s_lambda_{l},{}", fmt_f64(*v)).unwrap();
            }
            for (st, v) in ds.states.iter().zip(&r.per_state) {
                writeln!(errors, "eps_v_state_{},{}", st.state_id, fmt_f64(*v)).unwrap();
            }
        }
        None => {
            writeln!(errors, "eps_s,{NA}").unwrap();
            writeln!(errors, "eps_v,{NA}").unwrap();
        }
    }

    let mut curves = String::from("lambda,gamma_dot,tau_truth,tau_model\n");
    let model_curves = fc.stress_curves(&model)?;
    let truth_curves = truth.as_ref().map(|t| fc.stress_curves(t)).transpose()?;
    for (i, (l, g, tau)) in model_curves.iter().enumerate() {
        let tt = truth_curves
            .as_ref()
            .map_or(NA.to_string(), |c| fmt_f64(c[i].2));
        writeln!(
            curves,
            "{},{},{tt},{}",
            fmt_f64(*l),
            fmt_f64(*g),
            fmt_f64(*tau)
        )
        .unwrap();
    }

    let mut profiles = String::from("state_id,lambda,forcing,y,u_truth,u_model\n");
    for (k, (st, prob)) in ds.states.iter().zip(&problems).enumerate() {
        let m = solve_steady(&model, prob, &s.newton)
            .map_err(|e| CliError::Numerical(in_state(e, k)))?;
        let t = match &truth {
            Some(t) => Some(
                solve_steady(t, prob, &s.newton)
                    .map_err(|e| CliError::Numerical(in_state(e, k)))?,
            ),
            None => None,
        };
        for i in 0..prob.mesh.n_unknowns() {
            let ut = t
                .as_ref()
                .map_or(NA.to_string(), |t| fmt_f64(t.nodal_values[i]));
            writeln!(
                profiles,
                "{},{},{},{},{ut},{}",
                st.state_id,
                fmt_f64(st.lambda),
                fmt_f64(st.forcing),
                fmt_f64(prob.mesh.node(i)),
                fmt_f64(m.nodal_values[i])
            )
            .unwrap();
        }
    }

    atomic::create_dir(&s.out)?;
    let files: Vec<PathBuf> = [ERRORS_FILE, STRESS_CURVES_FILE, VELOCITY_PROFILES_FILE]
        .iter()
        .map(|f| s.out.join(f))
        .collect();
    for (path, text) in files.iter().zip([&errors, &curves, &profiles]) {
        atomic::write_file(path, text.as_bytes())?;
    }
    Ok(EvalSummary { report, files })
}

fn in_state(e: rheo_core::Error, k: usize) -> rheo_core::Error {
    rheo_core::Error::InState {
        state: k,
        source: Box::new(e),
    }
}
