//! Training objectives.
//!
//! All functions return `(value, gradient)` with the gradient taken with
//! respect to the flat parameter vector `theta` of a [`NetworkParams`].

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::{Error, Result};
use crate::fem::{
    velocity_loss_gradient_single, NewtonOptions, PointValue, SingleGradient, SteadyProblem,
};
use crate::math::{abs, exp, ln};
use crate::nn::NetworkParams;

/// One `(gamma_dot, tau)` observation at parameter `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressSample {
    pub gamma_dot: f64,
    pub tau: f64,
    pub lambda: f64,
}

/// Stress observations grouped by steady state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StressData {
    groups: Vec<Vec<StressSample>>,
}

impl StressData {
    /// Validates every sample. Errors carry the flat sample index.
    pub fn new(groups: Vec<Vec<StressSample>>) -> Result<Self> {
        let mut index = 0;
        for g in &groups {
            for s in g {
                let reason =
                    if !s.tau.is_finite() || !s.gamma_dot.is_finite() || !s.lambda.is_finite() {
                        Some("non-finite value")
                    } else if s.tau == 0.0 {
                        Some("zero stress")
                    } else if s.gamma_dot == 0.0 {
                        Some("zero strain rate")
                    } else {
                        None
                    };
                if let Some(reason) = reason {
                    return Err(Error::InvalidSample { index, reason });
                }
                index += 1;
            }
        }
        if groups.is_empty() {
            return Err(Error::InvalidConfig("stress data has no groups".into()));
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<StressSample>] {
        &self.groups
    }

    pub fn n_samples(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

/// `(1/N) sum_k sum_i (log|tau| - log(psi |gamma_dot|))^2`.
pub fn stress_loss(params: &NetworkParams, data: &StressData) -> (f64, Vec<f64>) {
    let n = data.groups.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; params.theta.len()];
    for g in &data.groups {
        for s in g {
            let gamma = abs(s.gamma_dot);
            let (psi, _) = params.psi_and_slope(gamma, s.lambda);
            let r = ln(abs(s.tau)) - ln(psi) - ln(gamma);
            value += r * r;
            params.accumulate_psi_grad(gamma, s.lambda, -2.0 * r / (n * psi), &mut grad);
        }
    }
    (value / n, grad)
}

/// Velocity observations of one steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGroup {
    pub problem: SteadyProblem,
    pub samples: Vec<PointValue>,
}

/// `(1/N) sum_k sum_i |u_i - u_theta(y_i)|^2` over `N` PDE-constrained states.
///
/// Converged states are cached and reused as Newton starting points on the
/// next evaluation when `warm_start` is set.
#[derive(Debug)]
pub struct VelocityLoss {
    groups: Vec<VelocityGroup>,
    pub opts: NewtonOptions,
    pub warm_start: bool,
    cache: RefCell<Vec<Option<Vec<f64>>>>,
}

impl Clone for VelocityLoss {
    fn clone(&self) -> Self {
        Self {
            groups: self.groups.clone(),
            opts: self.opts,
            warm_start: self.warm_start,
            cache: RefCell::new(vec![None; self.groups.len()]),
        }
    }
}

impl VelocityLoss {
    pub fn new(groups: Vec<VelocityGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidConfig("velocity data has no groups".into()));
        }
        for g in &groups {
            g.problem.validate()?;
        }
        let n = groups.len();
        Ok(Self {
            groups,
            opts: NewtonOptions::default(),
            warm_start: true,
            cache: RefCell::new(vec![None; n]),
        })
    }

    pub fn groups(&self) -> &[VelocityGroup] {
        &self.groups
    }

    pub fn clear_cache(&self) {
        self.cache.borrow_mut().iter_mut().for_each(|c| *c = None);
    }

    pub fn evaluate(&self, params: &NetworkParams) -> Result<(f64, Vec<f64>)> {
        let cache = self.cache.borrow().clone();
        let (groups, opts, warm) = (&self.groups, &self.opts, self.warm_start);
        let solve = |k: usize| -> Result<SingleGradient> {
            let init = if warm { cache[k].as_deref() } else { None };
            let g = &groups[k];
            velocity_loss_gradient_single(params, &g.problem, &g.samples, init, opts)
                .map_err(|e| e.in_state(k))
        };
        let results = run_indexed(self.groups.len(), solve);

        let n = self.groups.len() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; params.theta.len()];
        let mut new_cache = Vec::with_capacity(results.len());
        for r in results {
            let r = r?;
            value += r.loss;
            grad.iter_mut().zip(&r.grad).for_each(|(a, b)| *a += b);
            new_cache.push(Some(r.solution.nodal_values));
        }
        grad.iter_mut().for_each(|g| *g /= n);
        *self.cache.borrow_mut() = new_cache;
        Ok((value / n, grad))
    }
}

/// Runs `f(0..n)` and returns results in index order, in parallel when the
/// `std` feature is enabled.
pub(crate) fn run_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(&f).collect()
    }
    #[cfg(not(feature = "std"))]
    {
        (0..n).map(f).collect()
    }
}

/// Rectangle `Q` on which the monotonicity penalty is integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyDomain {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_gamma: usize,
    pub n_lambda: usize,
}

impl PenaltyDomain {
    pub fn land_ice() -> Self {
        Self::new(5e-4, 50.0, 253.0, 273.0)
    }

    pub fn sea_ice() -> Self {
        Self::new(1e-8, 1e-4, 0.8, 0.95)
    }

    pub fn new(gamma_min: f64, gamma_max: f64, lambda_min: f64, lambda_max: f64) -> Self {
        Self {
            gamma_min,
            gamma_max,
            lambda_min,
            lambda_max,
            n_gamma: 64,
            n_lambda: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_min > 0.0 && self.gamma_min < self.gamma_max && self.gamma_max.is_finite())
        {
            return Err(Error::InvalidConfig(alloc::format!(
                "penalty strain-rate range [{}, {}] must satisfy 0 < min < max",
                self.gamma_min,
                self.gamma_max
            )));
        }
        if !(self.lambda_min <= self.lambda_max)
            || !self.lambda_min.is_finite()
            || !self.lambda_max.is_finite()
        {
            return Err(Error::InvalidConfig(alloc::format!(
                "penalty lambda range [{}, {}] is invalid",
                self.lambda_min,
                self.lambda_max
            )));
        }
        if self.n_gamma == 0 || self.n_lambda == 0 {
            return Err(Error::InvalidConfig(
                "penalty grid must be non-empty".into(),
            ));
        }
        Ok(())
    }

    /// Midpoint-rule nodes `(gamma, lambda, weight)`: geometric cell centres
    /// in `gamma`, weights are the cell areas.
    pub fn grid(&self) -> Vec<(f64, f64, f64)> {
        let lg = ln(self.gamma_max / self.gamma_min);
        let edge = |j: usize| self.gamma_min * exp(lg * j as f64 / self.n_gamma as f64);
        let dl = (self.lambda_max - self.lambda_min) / self.n_lambda as f64;
        // a degenerate lambda range integrates over gamma only
        let wl = if dl > 0.0 { dl } else { 1.0 };
        let mut out = Vec::with_capacity(self.n_gamma * self.n_lambda);
        for j in 0..self.n_gamma {
            let (g0, g1) = (edge(j), edge(j + 1));
            let g = exp(0.5 * (ln(g0) + ln(g1)));
            for i in 0..self.n_lambda {
                let l = self.lambda_min + (i as f64 + 0.5) * dl;
                out.push((g, l, (g1 - g0) * wl));
            }
        }
        out
    }
}

/// `int_Q min(d(psi gamma)/d gamma, 0)^2` by the midpoint rule.
pub fn monotonicity_penalty(params: &NetworkParams, q: &PenaltyDomain) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; params.theta.len()];
    for (g, l, w) in q.grid() {
        let slope = params.stress_slope(g, l);
        if slope < 0.0 {
            value += w * slope * slope;
            params.accumulate_stress_slope_grad(g, l, 2.0 * w * slope, &mut grad);
        }
    }
    (value, grad)
}

/// Smallest `d(psi gamma)/d gamma` on the grid of `q`, relative to the
/// largest `|psi gamma|` there. Non-negative for monotone stress.
pub fn monotonicity_margin(params: &NetworkParams, q: &PenaltyDomain) -> f64 {
    let mut min_slope = f64::INFINITY;
    let mut max_stress: f64 = 0.0;
    for (g, l, _) in q.grid() {
        let (psi, dpsi) = params.psi_and_slope(g, l);
        min_slope = min_slope.min(psi + g * dpsi);
        max_stress = max_stress.max(abs(psi * g));
    }
    min_slope / max_stress
}

/// `||theta||_1` and its subgradient with `sign(0) = 0`.
pub fn l1_norm(theta: &[f64]) -> (f64, Vec<f64>) {
    let v = theta.iter().map(|t| abs(*t)).sum();
    let g = theta
        .iter()
        .map(|&t| {
            if t > 0.0 {
                1.0
            } else if t < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    (v, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Stress,
    Velocity,
}

impl LossKind {
    /// Default sparsity weight.
    pub fn default_beta1(self) -> f64 {
        match self {
            LossKind::Stress => 1e-5,
            LossKind::Velocity => 5e-5,
        }
    }
}

/// Default monotonicity weight.
pub const DEFAULT_BETA2: f64 = 1e14;

#[derive(Debug, Clone)]
pub enum DataLoss {
    Stress(StressData),
    Velocity(VelocityLoss),
}

impl DataLoss {
    pub fn kind(&self) -> LossKind {
        match self {
            DataLoss::Stress(_) => LossKind::Stress,
            DataLoss::Velocity(_) => LossKind::Velocity,
        }
    }

    pub fn evaluate(&self, params: &NetworkParams) -> Result<(f64, Vec<f64>)> {
        match self {
            DataLoss::Stress(d) => Ok(stress_loss(params, d)),
            DataLoss::Velocity(v) => v.evaluate(params),
        }
    }
}

/// Values of the three terms of [`PenalizedLoss`], unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub data: f64,
    pub l1: f64,
    pub monotonicity: f64,
}

/// `J(theta) + beta1 ||theta||_1 + beta2 Pi(theta)`.
#[derive(Debug, Clone)]
pub struct PenalizedLoss {
    pub data: DataLoss,
    pub beta1: f64,
    pub beta2: f64,
    pub domain: PenaltyDomain,
    /// Architecture, normalization and clamp shared by every evaluation.
    pub template: NetworkParams,
}

impl PenalizedLoss {
    pub fn new(
        data: DataLoss,
        beta1: f64,
        beta2: f64,
        domain: PenaltyDomain,
        template: NetworkParams,
    ) -> Result<Self> {
        for (what, v) in [("beta1", beta1), ("beta2", beta2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain { what, value: v });
            }
        }
        domain.validate()?;
        Ok(Self {
            data,
            beta1,
            beta2,
            domain,
            template,
        })
    }

    pub fn params(&self, theta: &[f64]) -> Result<NetworkParams> {
        if theta.len() != self.template.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.template.theta.len(),
                got: theta.len(),
            });
        }
        let mut p = self.template.clone();
        p.theta.copy_from_slice(theta);
        Ok(p)
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.params(theta)?;
        let (mut value, mut grad) = self.data.evaluate(&p)?;
        if self.beta1 != 0.0 {
            let (v, g) = l1_norm(theta);
            value += self.beta1 * v;
            grad.iter_mut()
                .zip(&g)
                .for_each(|(a, b)| *a += self.beta1 * b);
        }
        if self.beta2 != 0.0 {
            let (v, g) = monotonicity_penalty(&p, &self.domain);
            value += self.beta2 * v;
            grad.iter_mut()
                .zip(&g)
                .for_each(|(a, b)| *a += self.beta2 * b);
        }
        Ok((value, grad))
    }

    pub fn breakdown(&self, theta: &[f64]) -> Result<LossBreakdown> {
        let p = self.params(theta)?;
        Ok(LossBreakdown {
            data: self.data.evaluate(&p)?.0,
            l1: l1_norm(theta).0,
            monotonicity: monotonicity_penalty(&p, &self.domain).0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{solve_steady, SteadyProblem};
    use crate::nn::{init_params, Architecture, Normalization};
    use crate::rheology::ViscosityModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> NetworkParams {
        init_params(&Architecture::default(), seed)
            .unwrap()
            .with_normalization(Normalization::from_bounds((-12.0, 4.0), (253.0, 273.0)))
    }

    fn synthetic(params: &NetworkParams, factor: f64) -> StressData {
        let groups = [253.0, 263.0, 273.0]
            .iter()
            .map(|&t| {
                (0..10)
                    .map(|i| {
                        let g = 1e-4 * libm::pow(10.0, 0.5 * i as f64);
                        let tau = factor * params.psi_and_slope(g, t).0 * g;
                        StressSample {
                            gamma_dot: g,
                            tau,
                            lambda: t,
                        }
                    })
                    .collect()
            })
            .collect();
        StressData::new(groups).unwrap()
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(abs(*x)))
    }

    #[test]
    fn stress_loss_vanishes_on_own_data() {
        let p = net(1);
        let (v, g) = stress_loss(&p, &synthetic(&p, 1.0));
        assert!(v <= 1e-28);
        assert!(max_abs(&g) <= 1e-12);
    }

    #[test]
    fn single_sample_log_ratio_one() {
        let p = net(2);
        let (g, t) = (0.01, 263.0);
        let tau = p.psi_and_slope(g, t).0 * g / core::f64::consts::E;
        let data = StressData::new(vec![vec![StressSample {
            gamma_dot: g,
            tau,
            lambda: t,
        }]])
        .unwrap();
        assert!(abs(stress_loss(&p, &data).0 - 1.0) < 1e-14);
    }

    #[test]
    fn stress_loss_symmetries() {
        let p = net(3);
        let data = synthetic(&p, 1.7);
        let base = stress_loss(&p, &data).0;
        let mut groups = data.groups().to_vec();
        groups[0].reverse();
        for s in groups[1].iter_mut() {
            s.gamma_dot = -s.gamma_dot;
            s.tau = -s.tau;
        }
        let other = stress_loss(&p, &StressData::new(groups).unwrap()).0;
        assert!(abs(base - other) <= 1e-15 * base);
    }

    #[test]
    fn zero_stress_is_rejected_with_index() {
        let s = |tau| StressSample {
            gamma_dot: 1.0,
            tau,
            lambda: 263.0,
        };
        let err = StressData::new(vec![vec![s(1.0), s(2.0)], vec![s(1.0), s(0.0)]]).unwrap_err();
        assert_eq!(
            err,
            Error::InvalidSample {
                index: 3,
                reason: "zero stress"
            }
        );
    }

    fn fd_check(
        f: impl Fn(&NetworkParams) -> (f64, Vec<f64>),
        p: &NetworkParams,
        n: usize,
        tol: f64,
        seed: u64,
    ) {
        let (_, g) = f(p);
        let scale = max_abs(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let k = rng.random_range(0..p.theta.len());
            let h = 1e-6;
            let mut q = p.clone();
            q.theta[k] += h;
            let fp = f(&q).0;
            q.theta[k] -= 2.0 * h;
            let fm = f(&q).0;
            let fd = (fp - fm) / (2.0 * h);
            let err = abs(fd - g[k]) / abs(g[k]).max(1e-4 * scale);
            assert!(err <= tol, "coord {k}: fd {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn stress_gradient_matches_finite_differences() {
        let p = net(4);
        let data = synthetic(&net(5), 1.0);
        fd_check(|q| stress_loss(q, &data), &p, 20, 1e-6, 1);
    }

    #[test]
    fn penalty_is_zero_for_constant_viscosity() {
        let mut p = net(6);
        p.theta.iter_mut().for_each(|t| *t = 0.0);
        let (v, g) = monotonicity_penalty(&p, &PenaltyDomain::land_ice());
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn penalty_grid_weights_cover_q() {
        let q = PenaltyDomain::sea_ice();
        let total: f64 = q.grid().iter().map(|c| c.2).sum();
        let exact = (q.gamma_max - q.gamma_min) * (q.lambda_max - q.lambda_min);
        assert!(abs(total - exact) <= 1e-12 * exact);
        assert_eq!(q.grid().len(), 64 * 16);
    }

    /// A network with `chi = elu(w * z_gamma + b) + 1` and `xi = 0`.
    fn one_neuron(w: f64, b: f64) -> NetworkParams {
        let arch = Architecture::new(vec![1, 1], vec![2, 1]).unwrap();
        NetworkParams::new(arch, vec![0.0, 0.0, w, 0.0, b])
            .unwrap()
            .with_normalization(Normalization::identity())
    }

    #[test]
    fn penalty_matches_quadrature_oracle() {
        // chi = elu(r) + 1 + PSI_FLOOR with r = w ln g + b; for w < -1 the
        // stress psi * g decreases on part of Q
        let (w, b) = (-3.0, -12.0);
        let p = one_neuron(w, b);
        let q = PenaltyDomain {
            gamma_min: 1e-4,
            gamma_max: 1e-1,
            lambda_min: 0.0,
            lambda_max: 2.0,
            n_gamma: 64,
            n_lambda: 16,
        };
        let (v, _) = monotonicity_penalty(&p, &q);
        assert!(v > 0.0);

        // independent midpoint oracle on the same cells using the closed form
        let floor = crate::nn::PSI_FLOOR;
        let slope = |g: f64| {
            let r = w * ln(g) + b;
            if r > 0.0 {
                r + 1.0 + floor + w
            } else {
                exp(r) * (w + 1.0) + floor
            }
        };
        let mut oracle = 0.0;
        let ratio = q.gamma_max / q.gamma_min;
        for j in 0..64 {
            let g0 = q.gamma_min * libm::pow(ratio, j as f64 / 64.0);
            let g1 = q.gamma_min * libm::pow(ratio, (j + 1) as f64 / 64.0);
            let s = slope(libm::sqrt(g0 * g1)).min(0.0);
            oracle += s * s * (g1 - g0) * 2.0;
        }
        assert!(abs(v - oracle) <= 1e-8 * oracle, "{v} vs {oracle}");
        assert!(monotonicity_margin(&p, &q) < 0.0);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let arch = Architecture::new(vec![1, 4, 1], vec![2, 4, 1]).unwrap();
        let mut p = init_params(&arch, 7)
            .unwrap()
            .with_normalization(Normalization::from_bounds((-8.0, 4.0), (253.0, 273.0)));
        // raw ~ -2 sum tanh(4 z_gamma + ..) falls steeply enough in log gamma
        let n_xi = p.n_xi();
        for j in 0..4 {
            p.theta[n_xi + 2 * j] = 4.0;
            p.theta[n_xi + 12 + j] = -2.0;
        }
        let q = PenaltyDomain::land_ice();
        assert!(monotonicity_penalty(&p, &q).0 > 0.0);
        fd_check(|x| monotonicity_penalty(x, &q), &p, 20, 1e-5, 2);
    }

    #[test]
    fn l1_subgradient() {
        let (v, g) = l1_norm(&[1.5, -2.0, 0.0]);
        assert_eq!(v, 3.5);
        assert_eq!(g, vec![1.0, -1.0, 0.0]);
    }

    fn stress_objective(beta1: f64, beta2: f64) -> (PenalizedLoss, NetworkParams) {
        let p = net(8);
        let data = synthetic(&net(9), 1.0);
        (
            PenalizedLoss::new(
                DataLoss::Stress(data),
                beta1,
                beta2,
                PenaltyDomain::land_ice(),
                p.clone(),
            )
            .unwrap(),
            p,
        )
    }

    #[test]
    fn unpenalized_objective_is_bare_loss() {
        let (obj, p) = stress_objective(0.0, 0.0);
        let DataLoss::Stress(d) = &obj.data else {
            unreachable!()
        };
        assert_eq!(obj.evaluate(&p.theta).unwrap(), stress_loss(&p, d));
    }

    #[test]
    fn l1_weight_one_adds_abs_sum() {
        let mut p = net(10);
        let data = synthetic(&p, 1.0);
        p.theta.iter_mut().for_each(|t| *t = 0.0);
        p.theta[0] = 0.5;
        p.theta[7] = -1.25;
        // zero network: psi = 1 + PSI_FLOOR everywhere
        let data = StressData::new(
            data.groups()
                .iter()
                .map(|g| {
                    g.iter()
                        .map(|s| StressSample {
                            tau: s.gamma_dot * (1.0 + crate::nn::PSI_FLOOR),
                            ..*s
                        })
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let obj = PenalizedLoss::new(
            DataLoss::Stress(data),
            1.0,
            0.0,
            PenaltyDomain::land_ice(),
            p.clone(),
        )
        .unwrap();
        let (v, _) = obj.evaluate(&p.theta).unwrap();
        assert!(abs(v - 1.75) <= 1e-15, "{v}");
    }

    #[test]
    fn penalized_gradient_is_sum_of_parts() {
        let (obj, mut p) = stress_objective(1e-3, 1e10);
        let n_xi = p.n_xi();
        p.theta[n_xi] -= 6.0;
        let (v, g) = obj.evaluate(&p.theta).unwrap();
        let DataLoss::Stress(d) = &obj.data else {
            unreachable!()
        };
        let (v0, g0) = stress_loss(&p, d);
        let (v1, g1) = l1_norm(&p.theta);
        let (v2, g2) = monotonicity_penalty(&p, &obj.domain);
        assert_eq!(v, v0 + 1e-3 * v1 + 1e10 * v2);
        for i in 0..g.len() {
            assert_eq!(g[i], g0[i] + 1e-3 * g1[i] + 1e10 * g2[i]);
        }
    }

    #[test]
    fn defaults() {
        assert_eq!(LossKind::Stress.default_beta1(), 1e-5);
        assert_eq!(LossKind::Velocity.default_beta1(), 5e-5);
        assert_eq!(DEFAULT_BETA2, 1e14);
    }

    fn velocity_setup() -> (VelocityLoss, NetworkParams) {
        let slab = SteadyProblem::slab(0.05, 263.0, 50).unwrap();
        let ice = SteadyProblem::sea_ice(0.9, 0.5, 50).unwrap();
        let mut groups = Vec::new();
        for (prob, truth) in [
            (slab, ViscosityModel::Newtonian(1.3)),
            (ice, ViscosityModel::ViscousPlastic(Default::default())),
        ] {
            let sol = solve_steady(&truth, &prob, &NewtonOptions::default()).unwrap();
            let samples = (1..=10)
                .map(|i| {
                    let y = (i as f64 - 0.5) / 10.0 * prob.mesh.length;
                    PointValue { y, u: sol.at(y) }
                })
                .collect();
            groups.push(VelocityGroup {
                problem: prob,
                samples,
            });
        }
        let mut p = net(11);
        p.normalization = Normalization::from_bounds((-18.0, 0.0), (0.8, 273.0));
        let n_xi = p.n_xi();
        p.theta[n_xi - 1] = 2.0;
        (VelocityLoss::new(groups).unwrap(), p)
    }

    #[test]
    fn velocity_loss_is_mean_of_states() {
        let (loss, p) = velocity_setup();
        let (v, g) = loss.evaluate(&p).unwrap();
        let opts = NewtonOptions::default();
        let parts: Vec<_> = loss
            .groups()
            .iter()
            .map(|gr| {
                velocity_loss_gradient_single(&p, &gr.problem, &gr.samples, None, &opts).unwrap()
            })
            .collect();
        assert!(abs(v - 0.5 * (parts[0].loss + parts[1].loss)) <= 1e-12 * v);
        for i in 0..g.len() {
            let e = 0.5 * (parts[0].grad[i] + parts[1].grad[i]);
            assert!(abs(g[i] - e) <= 1e-9 * max_abs(&g));
        }
    }

    #[test]
    fn velocity_loss_is_deterministic_without_warm_start() {
        let (mut loss, p) = velocity_setup();
        loss.warm_start = false;
        assert_eq!(loss.evaluate(&p).unwrap(), loss.evaluate(&p).unwrap());
    }

    #[test]
    fn velocity_loss_names_failing_state() {
        let (loss, mut p) = velocity_setup();
        p.theta.iter_mut().for_each(|t| *t = f64::NAN);
        match loss.evaluate(&p) {
            Err(Error::InState { state: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn velocity_gradient_matches_finite_differences() {
        let (mut loss, p) = velocity_setup();
        loss.warm_start = false;
        // finite differences of small components need tighter solves
        loss.opts.rtol = 1e-14;
        fd_check(|q| loss.evaluate(q).unwrap(), &p, 10, 1e-5, 3);
    }
}
