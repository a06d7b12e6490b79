//! Synthetic datasets, observation noise and error metrics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fem::{
    solve_steady, solve_steady_from, DiscreteSolution, NewtonOptions, PointValue, SteadyProblem,
    DEFAULT_CELLS,
};
use crate::losses::{run_indexed, StressData, StressSample, VelocityGroup};
use crate::math::{abs, exp, ln};
use crate::nn::NetworkParams;
use crate::rheology::{celsius_to_kelvin, GlenParams, ViscosityModel, VpParams};

/// Nodes of the strain-rate quadrature in the stress error.
pub const EPS_S_NODES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    LandIce,
    SeaIce,
    External,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::LandIce => "landice",
            Family::SeaIce => "seaice",
            Family::External => "external",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "landice" => Ok(Family::LandIce),
            "seaice" => Ok(Family::SeaIce),
            "external" => Ok(Family::External),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown family `{other}` (expected landice, seaice or external)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandIceSweep {
    /// Slope angles in radians.
    pub alphas: Vec<f64>,
    pub temps_c: Vec<f64>,
    pub n_points: usize,
    pub n_cells: usize,
}

impl Default for LandIceSweep {
    fn default() -> Self {
        Self {
            alphas: vec![0.01, 0.025, 0.05, 0.075, 0.1],
            temps_c: vec![0.0, -10.0, -20.0],
            n_points: 10,
            n_cells: DEFAULT_CELLS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeaIceSweep {
    pub concentrations: Vec<f64>,
    /// Peak ocean velocities in m/s.
    pub u_os: Vec<f64>,
    pub n_points: usize,
    pub n_cells: usize,
}

impl Default for SeaIceSweep {
    fn default() -> Self {
        Self {
            concentrations: vec![0.8, 0.85, 0.9, 0.95],
            u_os: vec![0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0],
            n_points: 10,
            n_cells: DEFAULT_CELLS,
        }
    }
}

fn check_sweep(a: &[f64], b: &[f64], n_points: usize) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidConfig("sweep lists must be non-empty".into()));
    }
    if n_points == 0 {
        return Err(Error::InvalidConfig(
            "sweep needs at least one sample point".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub y: f64,
    pub u: f64,
    pub gamma_dot: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub state_id: usize,
    pub lambda: f64,
    /// Slope angle (rad) or peak ocean velocity (m/s).
    pub forcing: f64,
    /// `max |u|` of the clean velocity; scales the velocity noise.
    pub u_max: f64,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub family: Family,
    pub states: Vec<State>,
}

/// One row of the tabular dataset representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub state_id: usize,
    pub family: Family,
    pub lambda: f64,
    pub forcing: f64,
    pub y: f64,
    pub u: f64,
    pub gamma_dot: f64,
    pub tau: f64,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.states.iter().map(|s| s.samples.len()).sum()
    }

    pub fn rows(&self) -> Vec<DatasetRow> {
        let mut out = Vec::with_capacity(self.n_samples());
        for st in &self.states {
            for s in &st.samples {
                out.push(DatasetRow {
                    state_id: st.state_id,
                    family: self.family,
                    lambda: st.lambda,
                    forcing: st.forcing,
                    y: s.y,
                    u: s.u,
                    gamma_dot: s.gamma_dot,
                    tau: s.tau,
                });
            }
        }
        out
    }

    /// Groups rows by `state_id` in order of first appearance. `u_max` is
    /// recovered as the largest sampled `|u|`. Errors carry the row index.
    pub fn from_rows(rows: &[DatasetRow]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidConfig("dataset has no rows".into()));
        };
        let family = first.family;
        let mut states: Vec<State> = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            if r.family != family {
                return Err(Error::InvalidSample {
                    index: i,
                    reason: "mixed families in one dataset",
                });
            }
            let finite = [r.lambda, r.forcing, r.y, r.u, r.gamma_dot, r.tau]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidSample {
                    index: i,
                    reason: "non-finite value",
                });
            }
            if r.gamma_dot < 0.0 {
                return Err(Error::InvalidSample {
                    index: i,
                    reason: "negative strain rate",
                });
            }
            let sample = Sample {
                y: r.y,
                u: r.u,
                gamma_dot: r.gamma_dot,
                tau: r.tau,
            };
            match states.iter_mut().find(|s| s.state_id == r.state_id) {
                Some(st) => {
                    if st.lambda != r.lambda || st.forcing != r.forcing {
                        return Err(Error::InvalidSample {
                            index: i,
                            reason: "lambda or forcing differs within a state",
                        });
                    }
                    st.u_max = st.u_max.max(abs(r.u));
                    st.samples.push(sample);
                }
                None => states.push(State {
                    state_id: r.state_id,
                    lambda: r.lambda,
                    forcing: r.forcing,
                    u_max: abs(r.u),
                    samples: vec![sample],
                }),
            }
        }
        Ok(Self { family, states })
    }

    /// Stress groups, one per state, without the rows where `tau = 0`
    /// (returned as flat row indices).
    pub fn stress_data(&self) -> Result<(StressData, Vec<usize>)> {
        let mut rejected = Vec::new();
        let mut groups = Vec::new();
        let mut index = 0;
        for st in &self.states {
            let mut g = Vec::new();
            for s in &st.samples {
                if s.tau == 0.0 || s.gamma_dot == 0.0 {
                    rejected.push(index);
                } else {
                    g.push(StressSample {
                        gamma_dot: s.gamma_dot,
                        tau: s.tau,
                        lambda: st.lambda,
                    });
                }
                index += 1;
            }
            if !g.is_empty() {
                groups.push(g);
            }
        }
        Ok((StressData::new(groups)?, rejected))
    }

    /// The steady problem each state was sampled from. External data is
    /// treated as sea ice.
    pub fn problem(&self, state: &State, n_cells: usize) -> Result<SteadyProblem> {
        match self.family {
            Family::LandIce => SteadyProblem::slab(state.forcing, state.lambda, n_cells),
            Family::SeaIce | Family::External => {
                SteadyProblem::sea_ice(state.lambda, state.forcing, n_cells)
            }
        }
    }

    pub fn problems(&self, n_cells: usize) -> Result<Vec<SteadyProblem>> {
        self.states
            .iter()
            .map(|s| self.problem(s, n_cells))
            .collect()
    }

    pub fn velocity_groups(&self, n_cells: usize) -> Result<Vec<VelocityGroup>> {
        self.states
            .iter()
            .map(|st| {
                let problem = self.problem(st, n_cells)?;
                let samples = st
                    .samples
                    .iter()
                    .map(|s| PointValue { y: s.y, u: s.u })
                    .collect();
                Ok(VelocityGroup { problem, samples })
            })
            .collect()
    }

    /// Sorted distinct lambda values.
    pub fn lambdas(&self) -> Vec<f64> {
        let mut l: Vec<f64> = self.states.iter().map(|s| s.lambda).collect();
        l.sort_by(f64::total_cmp);
        l.dedup();
        l
    }

    /// `(min, max)` of the non-zero sampled strain rates.
    pub fn gamma_range(&self) -> Option<(f64, f64)> {
        let mut r: Option<(f64, f64)> = None;
        for s in self.states.iter().flat_map(|s| &s.samples) {
            if s.gamma_dot > 0.0 {
                r = Some(match r {
                    None => (s.gamma_dot, s.gamma_dot),
                    Some((a, b)) => (a.min(s.gamma_dot), b.max(s.gamma_dot)),
                });
            }
        }
        r
    }
}

/// `y_i = (i - 1/2) / n * L`, `i = 1..n`.
pub fn sample_points(length: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| (i as f64 - 0.5) / n as f64 * length)
        .collect()
}

/// Samples `u`, and `gamma_dot`, `tau` from the containing element.
pub fn sample_solution(
    sol: &DiscreteSolution,
    model: &ViscosityModel,
    n_points: usize,
) -> Result<Vec<Sample>> {
    let mesh = &sol.problem.mesh;
    let lambda = sol.problem.lambda();
    sample_points(mesh.length, n_points)
        .into_iter()
        .map(|y| {
            let (e, _) = mesh.locate(y);
            let du = mesh.slope(&sol.nodal_values, e);
            let gamma_dot = 0.5 * abs(du);
            let tau = 0.5 * model.psi(gamma_dot, lambda)? * du;
            Ok(Sample {
                y,
                u: sol.at(y),
                gamma_dot,
                tau,
            })
        })
        .collect()
}

fn u_max(sol: &DiscreteSolution) -> f64 {
    sol.nodal_values
        .iter()
        .fold(0.0, |m: f64, v| m.max(abs(*v)))
}

/// Slab states for every `(alpha, T)`, alpha-major, with Glen's law.
pub fn generate_landice(
    sweep: &LandIceSweep,
    glen: &GlenParams,
    opts: &NewtonOptions,
) -> Result<Dataset> {
    check_sweep(&sweep.alphas, &sweep.temps_c, sweep.n_points)?;
    glen.validate()?;
    let model = ViscosityModel::Glen(*glen);
    let mut cases = Vec::new();
    for &alpha in &sweep.alphas {
        for &t in &sweep.temps_c {
            cases.push((alpha, celsius_to_kelvin(t)));
        }
    }
    let results = run_indexed(cases.len(), |k| -> Result<State> {
        let (alpha, t) = cases[k];
        let prob = SteadyProblem::slab(alpha, t, sweep.n_cells)?;
        let sol = solve_steady(&model, &prob, opts).map_err(|e| e.in_state(k))?;
        Ok(State {
            state_id: k,
            lambda: t,
            forcing: alpha,
            u_max: u_max(&sol),
            samples: sample_solution(&sol, &model, sweep.n_points)?,
        })
    });
    Ok(Dataset {
        family: Family::LandIce,
        states: results.into_iter().collect::<Result<_>>()?,
    })
}

/// Sea-ice states for every `(A, U_o)`, concentration-major, with the
/// viscous-plastic law. Each concentration is solved along increasing `U_o`,
/// warm-starting from the previous state.
pub fn generate_seaice(
    sweep: &SeaIceSweep,
    vp: &VpParams,
    opts: &NewtonOptions,
) -> Result<Dataset> {
    check_sweep(&sweep.concentrations, &sweep.u_os, sweep.n_points)?;
    let model = ViscosityModel::ViscousPlastic(*vp);
    let n_u = sweep.u_os.len();
    let mut order: Vec<usize> = (0..n_u).collect();
    order.sort_by(|&a, &b| sweep.u_os[a].total_cmp(&sweep.u_os[b]));
    let per_a = run_indexed(sweep.concentrations.len(), |ia| -> Result<Vec<State>> {
        let a = sweep.concentrations[ia];
        let mut states: Vec<Option<State>> = vec![None; n_u];
        let mut prev: Option<Vec<f64>> = None;
        for &iu in &order {
            let id = ia * n_u + iu;
            let prob = SteadyProblem::sea_ice(a, sweep.u_os[iu], sweep.n_cells)?;
            let sol = match &prev {
                Some(u0) => solve_steady_from(&model, &prob, opts, u0)
                    .or_else(|_| solve_steady(&model, &prob, opts)),
                None => solve_steady(&model, &prob, opts),
            }
            .map_err(|e| e.in_state(id))?;
            states[iu] = Some(State {
                state_id: id,
                lambda: a,
                forcing: sweep.u_os[iu],
                u_max: u_max(&sol),
                samples: sample_solution(&sol, &model, sweep.n_points)?,
            });
            prev = Some(sol.nodal_values);
        }
        Ok(states
            .into_iter()
            .map(|s| s.expect("every U_o solved"))
            .collect())
    });
    let mut states = Vec::new();
    for r in per_a {
        states.extend(r?);
    }
    Ok(Dataset {
        family: Family::SeaIce,
        states,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Relative standard deviation of the stress.
    pub sigma_s: f64,
    /// Standard deviation of the velocity relative to each state's `u_max`.
    pub sigma_v: f64,
    pub seed: u64,
}

const STRESS_STREAM: u64 = 0;
const VELOCITY_STREAM: u64 = 1;

/// `tau <- tau (1 + xi)` and `u <- u + eta u_max`, with Gaussian `xi`, `eta`.
/// Draws with `1 + xi <= 0` are repeated.
pub fn add_noise(ds: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    for (what, v) in [("sigma_s", spec.sigma_s), ("sigma_v", spec.sigma_v)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Domain { what, value: v });
        }
    }
    let mut out = ds.clone();
    if spec.sigma_s > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(STRESS_STREAM);
        let normal = Normal::new(0.0, spec.sigma_s).expect("valid sigma");
        for s in out.states.iter_mut().flat_map(|s| s.samples.iter_mut()) {
            let factor = loop {
                let f = 1.0 + normal.sample(&mut rng);
                if f > 0.0 {
                    break f;
                }
            };
            s.tau *= factor;
        }
    }
    if spec.sigma_v > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(VELOCITY_STREAM);
        let normal = Normal::new(0.0, spec.sigma_v).expect("valid sigma");
        for st in out.states.iter_mut() {
            let scale = st.u_max;
            for s in st.samples.iter_mut() {
                s.u += normal.sample(&mut rng) * scale;
            }
        }
    }
    Ok(out)
}

/// `n` log-spaced values from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let (la, lb) = (ln(a), ln(b));
            (0..n)
                .map(|i| match i {
                    0 => a,
                    _ if i == n - 1 => b,
                    _ => exp(la + (lb - la) * i as f64 / (n - 1) as f64),
                })
                .collect()
        }
    }
}

/// Everything the error metrics need to know about a problem family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyConfig {
    pub family: Family,
    /// The `N_lambda` parameter values of the stress error.
    pub lambdas: Vec<f64>,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

/// Strain-rate interval of the land-ice stress error.
pub const LANDICE_EPS_S_RANGE: (f64, f64) = (5e-4, 50.0);
/// Strain-rate interval of the sea-ice stress error, in 1/s.
pub const SEAICE_EPS_S_RANGE: (f64, f64) = (5e-8, 5e-5);

impl FamilyConfig {
    pub fn landice(sweep: &LandIceSweep) -> Self {
        let (gamma_min, gamma_max) = LANDICE_EPS_S_RANGE;
        Self {
            family: Family::LandIce,
            lambdas: sweep
                .temps_c
                .iter()
                .map(|t| celsius_to_kelvin(*t))
                .collect(),
            gamma_min,
            gamma_max,
        }
    }

    pub fn seaice(sweep: &SeaIceSweep) -> Self {
        let (gamma_min, gamma_max) = SEAICE_EPS_S_RANGE;
        Self {
            family: Family::SeaIce,
            lambdas: sweep.concentrations.clone(),
            gamma_min,
            gamma_max,
        }
    }

    /// Settings for the lambdas present in `ds`. External data has no truth
    /// and takes its strain-rate interval from the samples.
    pub fn for_dataset(ds: &Dataset) -> Self {
        let (gamma_min, gamma_max) = match ds.family {
            Family::LandIce => LANDICE_EPS_S_RANGE,
            Family::SeaIce => SEAICE_EPS_S_RANGE,
            Family::External => match ds.gamma_range() {
                Some((a, b)) if a < b => (a, b),
                Some((a, _)) => (0.5 * a, 2.0 * a),
                None => SEAICE_EPS_S_RANGE,
            },
        };
        Self {
            family: ds.family,
            lambdas: ds.lambdas(),
            gamma_min,
            gamma_max,
        }
    }

    /// `tau = psi(gamma) gamma` on the [`EPS_S_NODES`]-point log grid, one
    /// curve per lambda: `(lambda, gamma, tau)`.
    pub fn stress_curves(&self, model: &ViscosityModel) -> Result<Vec<(f64, f64, f64)>> {
        let grid = log_grid(self.gamma_min, self.gamma_max, EPS_S_NODES);
        let mut out = Vec::with_capacity(grid.len() * self.lambdas.len());
        for &l in &self.lambdas {
            for &g in &grid {
                out.push((l, g, model.psi(g, l)? * g));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub eps_s: f64,
    pub eps_v: f64,
    /// Stress error integral per lambda (before averaging).
    pub per_lambda: Vec<f64>,
    /// Velocity error contribution per state (already divided by `N`).
    pub per_state: Vec<f64>,
}

/// `(1/N_lambda) sum_i int [log|psi gamma| - log|psi_theta gamma|]^2 dgamma`
/// by the trapezoid rule on [`EPS_S_NODES`] log-spaced nodes.
pub fn stress_error(
    model: &ViscosityModel,
    truth: &ViscosityModel,
    cfg: &FamilyConfig,
) -> Result<(f64, Vec<f64>)> {
    if cfg.lambdas.is_empty() || !(cfg.gamma_min > 0.0 && cfg.gamma_min < cfg.gamma_max) {
        return Err(Error::InvalidConfig(
            "stress error needs lambdas and 0 < gamma_min < gamma_max".into(),
        ));
    }
    let grid = log_grid(cfg.gamma_min, cfg.gamma_max, EPS_S_NODES);
    let mut per = Vec::with_capacity(cfg.lambdas.len());
    for &l in &cfg.lambdas {
        let mut vals = Vec::with_capacity(grid.len());
        for &g in &grid {
            let d = ln(truth.psi(g, l)?) - ln(model.psi(g, l)?);
            vals.push(d * d);
        }
        let integral: f64 = grid
            .windows(2)
            .zip(vals.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum();
        per.push(integral);
    }
    Ok((per.iter().sum::<f64>() / per.len() as f64, per))
}

/// Trapezoid integral of `(a - b)^2` over the normalized coordinate `y/L`.
fn profile_misfit(a: &DiscreteSolution, b: &DiscreteSolution) -> f64 {
    let mesh = &a.problem.mesh;
    let n = mesh.n_cells;
    let mut sum = 0.0;
    for e in 0..n {
        let (i, j) = mesh.element(e);
        let di = a.nodal_values[i] - b.nodal_values[i];
        let dj = a.nodal_values[j] - b.nodal_values[j];
        sum += 0.5 * (di * di + dj * dj);
    }
    sum / n as f64
}

/// `sum_k int (u^k - u_theta^k)^2 / (N u_max^k^2) d(y/L)`.
pub fn velocity_error(
    model: &ViscosityModel,
    truth: &ViscosityModel,
    problems: &[SteadyProblem],
    opts: &NewtonOptions,
) -> Result<(f64, Vec<f64>)> {
    let n = problems.len() as f64;
    let per = run_indexed(problems.len(), |k| -> Result<f64> {
        let t = solve_steady(truth, &problems[k], opts).map_err(|e| e.in_state(k))?;
        let m = solve_steady(model, &problems[k], opts).map_err(|e| e.in_state(k))?;
        let um = u_max(&t);
        let scale = if um > 0.0 { um * um } else { 1.0 };
        Ok(profile_misfit(&t, &m) / (n * scale))
    });
    let per: Vec<f64> = per.into_iter().collect::<Result<_>>()?;
    Ok((per.iter().sum(), per))
}

pub fn error_metrics(
    params: &NetworkParams,
    truth: &ViscosityModel,
    cfg: &FamilyConfig,
    problems: &[SteadyProblem],
    opts: &NewtonOptions,
) -> Result<ErrorReport> {
    let model = ViscosityModel::Neural(params.clone());
    let (eps_s, per_lambda) = stress_error(&model, truth, cfg)?;
    let (eps_v, per_state) = velocity_error(&model, truth, problems, opts)?;
    Ok(ErrorReport {
        eps_s,
        eps_v,
        per_lambda,
        per_state,
    })
}

/// Truth rheology of a family; `None` for external data.
pub fn truth_model(family: Family) -> Option<ViscosityModel> {
    match family {
        Family::LandIce => Some(ViscosityModel::Glen(GlenParams::default())),
        Family::SeaIce => Some(ViscosityModel::ViscousPlastic(VpParams::default())),
        Family::External => None,
    }
}

/// Short description used in provenance files.
pub fn describe(ds: &Dataset) -> String {
    alloc::format!(
        "{} states, {} samples, family {}",
        ds.states.len(),
        ds.n_samples(),
        ds.family
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sin;
    use crate::nn::{init_params, Architecture};

    fn landice() -> Dataset {
        generate_landice(
            &LandIceSweep::default(),
            &GlenParams::default(),
            &NewtonOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn default_landice_sweep_has_fifteen_states() {
        let ds = landice();
        assert_eq!(ds.states.len(), 15);
        assert_eq!(ds.n_samples(), 150);
        assert_eq!(ds.states[3].forcing, 0.025);
        assert_eq!(ds.states[3].lambda, 273.15);
    }

    #[test]
    fn landice_stress_matches_analytic_profile() {
        for st in landice().states {
            let s = sin(st.forcing);
            let taus: Vec<f64> = st.samples.iter().map(|x| x.tau).collect();
            for x in &st.samples {
                let exact = s * (1.0 - x.y);
                assert!(abs(x.tau - exact) <= 1e-6 * exact, "{} vs {exact}", x.tau);
            }
            let min = taus.iter().cloned().fold(f64::INFINITY, f64::min);
            assert_eq!(min, *taus.last().unwrap());
        }
    }

    #[test]
    fn generation_is_reproducible() {
        assert_eq!(landice(), landice());
    }

    #[test]
    fn seaice_sweep() {
        let ds = generate_seaice(
            &SeaIceSweep::default(),
            &VpParams::default(),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert_eq!(ds.states.len(), 28);
        // free drift is approached for fast ocean and loose ice
        let sweep = SeaIceSweep::default();
        let mut best = (f64::INFINITY, 0, 0.0);
        for st in &ds.states {
            let prob = ds.problem(st, sweep.n_cells).unwrap();
            let sol = solve_steady(
                &ViscosityModel::ViscousPlastic(VpParams::default()),
                &prob,
                &NewtonOptions::default(),
            )
            .unwrap();
            let dev = prob
                .mesh
                .nodes()
                .iter()
                .zip(&sol.nodal_values)
                .map(|(y, u)| abs(u - prob.ocean_velocity(*y)))
                .fold(0.0, f64::max)
                / st.forcing;
            if dev < best.0 {
                best = (dev, st.state_id, st.lambda);
            }
        }
        assert_eq!(best.2, 0.8);
        assert_eq!(ds.states[best.1].forcing, 2.0);
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = landice();
        let spec = NoiseSpec {
            sigma_s: 0.0,
            sigma_v: 0.0,
            seed: 3,
        };
        assert_eq!(add_noise(&ds, &spec).unwrap(), ds);
    }

    #[test]
    fn noise_is_seeded() {
        let ds = landice();
        let spec = NoiseSpec {
            sigma_s: 0.1,
            sigma_v: 0.1,
            seed: 9,
        };
        let a = add_noise(&ds, &spec).unwrap();
        assert_eq!(a, add_noise(&ds, &spec).unwrap());
        assert_ne!(a, add_noise(&ds, &NoiseSpec { seed: 10, ..spec }).unwrap());
        for (x, y) in a.states.iter().zip(&ds.states) {
            for (p, q) in x.samples.iter().zip(&y.samples) {
                assert_eq!(p.gamma_dot, q.gamma_dot);
                assert!(p.tau > 0.0);
            }
        }
    }

    #[test]
    fn stress_noise_has_requested_spread() {
        let st = State {
            state_id: 0,
            lambda: 1.0,
            forcing: 1.0,
            u_max: 1.0,
            samples: vec![
                Sample {
                    y: 0.5,
                    u: 1.0,
                    gamma_dot: 1.0,
                    tau: 2.0
                };
                10_000
            ],
        };
        let ds = Dataset {
            family: Family::External,
            states: vec![st],
        };
        let noisy = add_noise(
            &ds,
            &NoiseSpec {
                sigma_s: 0.05,
                sigma_v: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        let r: Vec<f64> = noisy.states[0]
            .samples
            .iter()
            .map(|s| s.tau / 2.0 - 1.0)
            .collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = crate::math::sqrt(
            r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r.len() - 1) as f64,
        );
        assert!(abs(sd / 0.05 - 1.0) <= 0.03, "{sd}");
    }

    #[test]
    fn rows_round_trip() {
        let ds = landice();
        assert_eq!(Dataset::from_rows(&ds.rows()).unwrap().states.len(), 15);
        let back = Dataset::from_rows(&ds.rows()).unwrap();
        for (a, b) in back.states.iter().zip(&ds.states) {
            assert_eq!(a.samples, b.samples);
            assert!(a.u_max <= b.u_max);
        }
    }

    #[test]
    fn inconsistent_rows_are_reported() {
        let mut rows = landice().rows();
        rows[12].lambda += 1.0;
        assert_eq!(
            Dataset::from_rows(&rows).unwrap_err(),
            Error::InvalidSample {
                index: 12,
                reason: "lambda or forcing differs within a state"
            }
        );
    }

    #[test]
    fn zero_stress_rows_are_dropped_for_stress_only() {
        let mut ds = landice();
        ds.states[0].samples[2].tau = 0.0;
        let (stress, rejected) = ds.stress_data().unwrap();
        assert_eq!(rejected, vec![2]);
        assert_eq!(stress.n_samples(), 149);
        let groups = ds.velocity_groups(50).unwrap();
        assert_eq!(groups[0].samples.len(), 10);
    }

    #[test]
    fn log_offset_gives_interval_length() {
        let truth = ViscosityModel::Glen(GlenParams::default());
        let cfg = FamilyConfig::landice(&LandIceSweep::default());
        // psi_theta = e psi_truth, built from an analytic law with B0 = e
        let shifted = ViscosityModel::Glen(GlenParams {
            b0: core::f64::consts::E,
            ..GlenParams::default()
        });
        let (eps, per) = stress_error(&shifted, &truth, &cfg).unwrap();
        for p in per {
            assert!(abs(p - (50.0 - 5e-4)) <= 1e-9 * 50.0, "{p}");
        }
        assert!(abs(eps - (50.0 - 5e-4)) <= 1e-9 * 50.0);
        assert_eq!(stress_error(&truth, &truth, &cfg).unwrap().0, 0.0);
    }

    #[test]
    fn truth_against_itself_is_exact() {
        let truth = ViscosityModel::ViscousPlastic(VpParams::default());
        let ds = generate_seaice(
            &SeaIceSweep {
                u_os: vec![0.1, 1.0],
                ..Default::default()
            },
            &VpParams::default(),
            &NewtonOptions::default(),
        )
        .unwrap();
        let probs = ds.problems(50).unwrap();
        let (eps, _) = velocity_error(&truth, &truth, &probs, &NewtonOptions::default()).unwrap();
        assert_eq!(eps, 0.0);
    }

    #[test]
    fn metrics_of_an_untrained_network_are_positive() {
        let p = init_params(&Architecture::default(), 1).unwrap();
        let truth = ViscosityModel::Glen(GlenParams::default());
        let sweep = LandIceSweep {
            alphas: vec![0.05],
            ..Default::default()
        };
        let ds =
            generate_landice(&sweep, &GlenParams::default(), &NewtonOptions::default()).unwrap();
        let r = error_metrics(
            &p,
            &truth,
            &FamilyConfig::landice(&sweep),
            &ds.problems(50).unwrap(),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert!(r.eps_s > 0.0 && r.eps_v > 0.0);
        assert_eq!(r.per_state.len(), 3);
    }

    #[test]
    fn dataset_config_matches_sweep_config() {
        let ds = landice();
        let a = FamilyConfig::for_dataset(&ds);
        let b = FamilyConfig::landice(&LandIceSweep::default());
        assert_eq!((a.gamma_min, a.gamma_max), (b.gamma_min, b.gamma_max));
        assert_eq!(a.lambdas, vec![253.14999999999998, 263.15, 273.15]);
        let curves = a
            .stress_curves(&ViscosityModel::Glen(GlenParams::default()))
            .unwrap();
        assert_eq!(curves.len(), 3 * EPS_S_NODES);
    }

    #[test]
    fn family_names() {
        for f in [Family::LandIce, Family::SeaIce, Family::External] {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("glacier".parse::<Family>().is_err());
    }
}
