//! Training driver: builds the penalized loss for a dataset, warm-starts
//! velocity training from the stress loss and runs the chosen optimizer.

use alloc::vec::Vec;

use crate::error::Error;
use crate::experiments::{Dataset, Family};
use crate::fem::{NewtonOptions, DEFAULT_CELLS};
use crate::losses::{
    DataLoss, LossBreakdown, LossKind, PenalizedLoss, PenaltyDomain, StressData, VelocityLoss,
    DEFAULT_BETA2,
};
use crate::math::ln;
use crate::nn::{init_params, Architecture, NetworkParams, Normalization, DEFAULT_GAMMA_FLOOR};
use crate::optim::{
    adam_minimize, lbfgs_minimize, AdamOptions, Clock, LbfgsOptions, OptimError, OptimResult,
};

/// Accepted L-BFGS steps on the stress loss before velocity training.
pub const WARM_START_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Lbfgs(LbfgsOptions),
    Adam(AdamOptions),
}

impl Optimizer {
    pub fn max_evals(&self) -> usize {
        match self {
            Optimizer::Lbfgs(o) => o.max_evals,
            Optimizer::Adam(o) => o.max_iters,
        }
    }

    pub fn set_max_evals(&mut self, n: usize) {
        match self {
            Optimizer::Lbfgs(o) => o.max_evals = n,
            Optimizer::Adam(o) => o.max_iters = n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub seed: u64,
    pub loss: LossKind,
    pub beta1: f64,
    pub beta2: f64,
    pub domain: PenaltyDomain,
    pub optimizer: Optimizer,
    /// Mesh used by the velocity loss.
    pub n_cells: usize,
    pub newton: NewtonOptions,
    /// 0 disables the warm start.
    pub warm_start_iters: usize,
    pub gamma_floor: f64,
}

impl TrainConfig {
    /// Defaults for a family and loss: `Q` of the family, `beta1` of the loss.
    pub fn new(family: Family, loss: LossKind) -> Self {
        let domain = match family {
            Family::LandIce => PenaltyDomain::land_ice(),
            Family::SeaIce | Family::External => PenaltyDomain::sea_ice(),
        };
        Self {
            arch: Architecture::default(),
            seed: 0,
            loss,
            beta1: loss.default_beta1(),
            beta2: DEFAULT_BETA2,
            domain,
            optimizer: Optimizer::Lbfgs(LbfgsOptions::default()),
            n_cells: DEFAULT_CELLS,
            newton: NewtonOptions::default(),
            warm_start_iters: WARM_START_ITERS,
            gamma_floor: DEFAULT_GAMMA_FLOOR,
        }
    }
}

/// Setup failures are plain errors; optimizer failures keep their progress.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error("warm start: {0}")]
    WarmStart(OptimError),
    #[error(transparent)]
    Optim(OptimError),
}

/// Input scaling covering both the data and the penalty domain, so every
/// point the loss evaluates lies in roughly `[-1, 1]^2`.
pub fn normalization_for(ds: &Dataset, q: &PenaltyDomain) -> Normalization {
    let (mut g0, mut g1) = (q.gamma_min, q.gamma_max);
    if let Some((a, b)) = ds.gamma_range() {
        g0 = g0.min(a);
        g1 = g1.max(b);
    }
    let (mut l0, mut l1) = (q.lambda_min, q.lambda_max);
    for l in ds.lambdas() {
        l0 = l0.min(l);
        l1 = l1.max(l);
    }
    Normalization::from_bounds((ln(g0), ln(g1)), (l0, l1))
}

/// Freshly initialized network scaled for `ds`.
pub fn initial_params(ds: &Dataset, cfg: &TrainConfig) -> Result<NetworkParams, Error> {
    if !(cfg.gamma_floor > 0.0) {
        return Err(Error::Domain {
            what: "gamma_floor",
            value: cfg.gamma_floor,
        });
    }
    let mut p =
        init_params(&cfg.arch, cfg.seed)?.with_normalization(normalization_for(ds, &cfg.domain));
    p.gamma_floor = cfg.gamma_floor;
    Ok(p)
}

fn run(
    loss: &PenalizedLoss,
    theta0: Vec<f64>,
    opt: &Optimizer,
    clock: &dyn Clock,
) -> Result<OptimResult, OptimError> {
    let objective = |theta: &[f64]| loss.evaluate(theta);
    match opt {
        Optimizer::Lbfgs(o) => lbfgs_minimize(objective, theta0, o, clock),
        Optimizer::Adam(o) => adam_minimize(objective, theta0, o, clock),
    }
}

/// A few L-BFGS iterations on the penalized stress loss.
pub fn warm_start_velocity(
    stress: &StressData,
    params: NetworkParams,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(NetworkParams, OptimResult), TrainError> {
    let beta1 = LossKind::Stress.default_beta1();
    let loss = PenalizedLoss::new(
        DataLoss::Stress(stress.clone()),
        beta1,
        cfg.beta2,
        cfg.domain,
        params.clone(),
    )?;
    let opts = LbfgsOptions {
        max_iters: cfg.warm_start_iters,
        ..LbfgsOptions::default()
    };
    let r = run(&loss, params.theta.clone(), &Optimizer::Lbfgs(opts), clock)
        .map_err(TrainError::WarmStart)?;
    let out = loss.params(&r.theta)?;
    Ok((out, r))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub result: OptimResult,
    pub warm_start: Option<OptimResult>,
    pub breakdown: LossBreakdown,
    /// Flat dataset rows left out of the stress loss (`tau = 0`).
    pub rejected_rows: Vec<usize>,
}

/// The penalized loss `cfg` describes for `ds`, with `template` fixing the
/// architecture and input scaling.
pub fn build_loss(
    ds: &Dataset,
    cfg: &TrainConfig,
    template: NetworkParams,
) -> Result<(PenalizedLoss, Vec<usize>), Error> {
    let (data, rejected) = match cfg.loss {
        LossKind::Stress => {
            let (s, rejected) = ds.stress_data()?;
            (DataLoss::Stress(s), rejected)
        }
        LossKind::Velocity => {
            let mut v = VelocityLoss::new(ds.velocity_groups(cfg.n_cells)?)?;
            v.opts = cfg.newton;
            (DataLoss::Velocity(v), Vec::new())
        }
    };
    Ok((
        PenalizedLoss::new(data, cfg.beta1, cfg.beta2, cfg.domain, template)?,
        rejected,
    ))
}

/// Trains from `params0`, or from a fresh initialization when `None`.
pub fn train(
    ds: &Dataset,
    cfg: &TrainConfig,
    params0: Option<NetworkParams>,
    clock: &dyn Clock,
) -> Result<TrainOutcome, TrainError> {
    let mut params = match params0 {
        Some(p) => p,
        None => initial_params(ds, cfg)?,
    };
    let mut warm = None;
    if cfg.loss == LossKind::Velocity && cfg.warm_start_iters > 0 {
        let (stress, _) = ds.stress_data()?;
        let (p, r) = warm_start_velocity(&stress, params, cfg, clock)?;
        params = p;
        warm = Some(r);
    }
    let theta0 = params.theta.clone();
    let (loss, rejected_rows) = build_loss(ds, cfg, params)?;
    let result = run(&loss, theta0, &cfg.optimizer, clock).map_err(TrainError::Optim)?;
    let params = loss.params(&result.theta)?;
    let breakdown = loss.breakdown(&result.theta)?;
    Ok(TrainOutcome {
        params,
        result,
        warm_start: warm,
        breakdown,
        rejected_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{generate_landice, LandIceSweep};
    use crate::optim::NoClock;
    use crate::rheology::GlenParams;

    fn small() -> Dataset {
        let sweep = LandIceSweep {
            alphas: alloc::vec![0.05, 0.1],
            ..Default::default()
        };
        generate_landice(&sweep, &GlenParams::default(), &NewtonOptions::default()).unwrap()
    }

    fn small_arch() -> Architecture {
        Architecture::new(alloc::vec![1, 4, 1], alloc::vec![2, 6, 1]).unwrap()
    }

    #[test]
    fn normalization_covers_data_and_domain() {
        let ds = small();
        let q = PenaltyDomain::land_ice();
        let n = normalization_for(&ds, &q);
        let (lo, _) = ds.gamma_range().unwrap();
        let z = |g: f64| (ln(g) - n.log_gamma_shift) / n.log_gamma_scale;
        assert!(lo < q.gamma_min);
        assert!((z(lo) + 1.0).abs() < 1e-12);
        assert!((z(q.gamma_max) - 1.0).abs() < 1e-12);
        // temperatures 253.15..273.15 extend Q's 253..273 at the top
        assert!(((273.15 - n.lambda_shift) / n.lambda_scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn warm_start_is_deterministic_and_descends() {
        let ds = small();
        let cfg = TrainConfig {
            arch: small_arch(),
            ..TrainConfig::new(Family::LandIce, LossKind::Velocity)
        };
        let p0 = initial_params(&ds, &cfg).unwrap();
        let (stress, _) = ds.stress_data().unwrap();
        let (a, ra) = warm_start_velocity(&stress, p0.clone(), &cfg, &NoClock).unwrap();
        let (b, _) = warm_start_velocity(&stress, p0.clone(), &cfg, &NoClock).unwrap();
        assert_eq!(a, b);
        assert!(ra.iters <= WARM_START_ITERS);
        let first = ra.trace.records[0].loss;
        assert!(ra.value <= first);
    }

    #[test]
    fn short_stress_training_reduces_loss() {
        let ds = small();
        let mut cfg = TrainConfig {
            arch: small_arch(),
            ..TrainConfig::new(Family::LandIce, LossKind::Stress)
        };
        cfg.optimizer.set_max_evals(40);
        let out = train(&ds, &cfg, None, &NoClock).unwrap();
        let recs = &out.result.trace.records;
        assert!(recs.last().unwrap().loss < recs[0].loss);
        assert!(out.warm_start.is_none());
        assert!(out.result.evals <= 40);
        assert_eq!(out.params.theta, out.result.theta);
    }

    #[test]
    fn adam_is_selectable() {
        let ds = small();
        let mut cfg = TrainConfig {
            arch: small_arch(),
            ..TrainConfig::new(Family::LandIce, LossKind::Stress)
        };
        cfg.optimizer = Optimizer::Adam(AdamOptions {
            max_iters: 25,
            ..AdamOptions::default()
        });
        let out = train(&ds, &cfg, None, &NoClock).unwrap();
        assert_eq!(out.result.evals, 25);
    }

    #[test]
    fn short_velocity_training_runs_warm_start() {
        let ds = small();
        let mut cfg = TrainConfig {
            arch: small_arch(),
            ..TrainConfig::new(Family::LandIce, LossKind::Velocity)
        };
        cfg.optimizer.set_max_evals(8);
        let out = train(&ds, &cfg, None, &NoClock).unwrap();
        assert!(out.warm_start.is_some());
        let recs = &out.result.trace.records;
        assert!(recs.last().unwrap().loss <= recs[0].loss);
    }

    #[test]
    fn bad_floor_is_a_setup_error() {
        let cfg = TrainConfig {
            gamma_floor: 0.0,
            ..TrainConfig::new(Family::LandIce, LossKind::Stress)
        };
        assert!(matches!(
            train(&small(), &cfg, None, &NoClock),
            Err(TrainError::Setup(_))
        ));
    }
}
