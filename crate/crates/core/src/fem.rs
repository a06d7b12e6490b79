//! P1 finite elements for the steady 1D momentum balances.
//!
//! Both problems have the weak form
//!
//! ```text
//! int 1/2 psi(|u'|/2, lambda) u' v' dy = int f(u) v dy
//! ```
//!
//! with `f = sin(alpha)` on the slab (no slip at `y = 0`, stress free at
//! `y = 1`) and `f = rho_o C_o |u_o - u| (u_o - u) + rho_a C_a |u_a| u_a` in the
//! periodic sea-ice channel. The strain rate is constant per element, so the
//! viscous term is integrated exactly; the forcing uses two-point Gauss.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::math::{abs, floor, sin};
use crate::nn::NetworkParams;
use crate::quadrature::gauss2_unit;
use crate::rheology::ViscosityModel;

/// Ocean velocities visited by a cold sea-ice solve below the target `U_o`.
pub const CONTINUATION_LADDER: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0];

pub const SLAB_LENGTH: f64 = 1.0;
pub const SEA_ICE_LENGTH: f64 = 1e5;
pub const DEFAULT_CELLS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D {
    pub length: f64,
    pub n_cells: usize,
    pub periodic: bool,
}

impl Mesh1D {
    pub fn new(length: f64, n_cells: usize, periodic: bool) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Domain {
                what: "mesh length",
                value: length,
            });
        }
        let min_cells = if periodic { 3 } else { 2 };
        if n_cells < min_cells {
            return Err(Error::Domain {
                what: "cell count",
                value: n_cells as f64,
            });
        }
        Ok(Self {
            length,
            n_cells,
            periodic,
        })
    }

    pub fn h(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn n_unknowns(&self) -> usize {
        if self.periodic {
            self.n_cells
        } else {
            self.n_cells + 1
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_unknowns()).map(|i| self.node(i)).collect()
    }

    /// Unknown indices of the two ends of element `e`.
    pub fn element(&self, e: usize) -> (usize, usize) {
        if self.periodic {
            (e, (e + 1) % self.n_cells)
        } else {
            (e, e + 1)
        }
    }

    /// Containing element and local coordinate in `[0, 1]`.
    pub fn locate(&self, y: f64) -> (usize, f64) {
        let mut y = y;
        if self.periodic {
            y %= self.length;
            if y < 0.0 {
                y += self.length;
            }
        }
        let s = y / self.h();
        let e = (floor(s).max(0.0) as usize).min(self.n_cells - 1);
        (e, s - e as f64)
    }

    /// P1 basis weights at `y`: `u(y) = w0 u[i0] + w1 u[i1]`.
    pub fn weights(&self, y: f64) -> [(usize, f64); 2] {
        let (e, xi) = self.locate(y);
        let (a, b) = self.element(e);
        [(a, 1.0 - xi), (b, xi)]
    }

    pub fn interpolate(&self, u: &[f64], y: f64) -> f64 {
        let [(a, wa), (b, wb)] = self.weights(y);
        wa * u[a] + wb * u[b]
    }

    /// `u'` on element `e`.
    pub fn slope(&self, u: &[f64], e: usize) -> f64 {
        let (a, b) = self.element(e);
        (u[b] - u[a]) / self.h()
    }
}

/// Ocean and atmosphere drag coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragParams {
    pub rho_o: f64,
    pub rho_a: f64,
    pub c_o: f64,
    pub c_a: f64,
}

impl Default for DragParams {
    fn default() -> Self {
        Self {
            rho_o: 1027.0,
            rho_a: 1.2,
            c_o: 3e-3,
            c_a: 1e-3,
        }
    }
}

impl DragParams {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("rho_o", self.rho_o),
            ("rho_a", self.rho_a),
            ("C_o", self.c_o),
            ("C_a", self.c_a),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain { what, value: v });
            }
        }
        Ok(())
    }

    fn ocean(&self) -> f64 {
        self.rho_o * self.c_o
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// Slab on a bed inclined at `alpha` radians, temperature in kelvin.
    Slab { alpha: f64, temperature: f64 },
    /// Periodic channel forced by the hat-shaped ocean current
    /// `u_o(y) = U_o (1 - |1 - 2y/L|)`, shifted by `ocean_shift` metres.
    SeaIce {
        concentration: f64,
        u_o_max: f64,
        u_a: f64,
        drag: DragParams,
        ocean_shift: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyProblem {
    pub kind: ProblemKind,
    pub mesh: Mesh1D,
}

impl SteadyProblem {
    pub fn slab(alpha: f64, temperature: f64, n_cells: usize) -> Result<Self> {
        Ok(Self {
            kind: ProblemKind::Slab { alpha, temperature },
            mesh: Mesh1D::new(SLAB_LENGTH, n_cells, false)?,
        })
    }

    pub fn sea_ice(concentration: f64, u_o_max: f64, n_cells: usize) -> Result<Self> {
        Ok(Self {
            kind: ProblemKind::SeaIce {
                concentration,
                u_o_max,
                u_a: 0.0,
                drag: DragParams::default(),
                ocean_shift: 0.0,
            },
            mesh: Mesh1D::new(SEA_ICE_LENGTH, n_cells, true)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProblemKind::Slab { alpha, temperature } => {
                if !alpha.is_finite() {
                    return Err(Error::Domain {
                        what: "slope angle",
                        value: alpha,
                    });
                }
                if !(temperature > 0.0) {
                    return Err(Error::Domain {
                        what: "temperature",
                        value: temperature,
                    });
                }
                if self.mesh.periodic {
                    return Err(Error::InvalidConfig(
                        "slab mesh must not be periodic".into(),
                    ));
                }
            }
            ProblemKind::SeaIce {
                concentration,
                u_o_max,
                u_a,
                drag,
                ocean_shift,
            } => {
                if !(0.0..=1.0).contains(&concentration) {
                    return Err(Error::Domain {
                        what: "concentration",
                        value: concentration,
                    });
                }
                if !(u_o_max >= 0.0) || !u_o_max.is_finite() {
                    return Err(Error::Domain {
                        what: "ocean velocity",
                        value: u_o_max,
                    });
                }
                if !u_a.is_finite() {
                    return Err(Error::Domain {
                        what: "atmosphere velocity",
                        value: u_a,
                    });
                }
                if !ocean_shift.is_finite() {
                    return Err(Error::Domain {
                        what: "ocean shift",
                        value: ocean_shift,
                    });
                }
                drag.validate()?;
                if !self.mesh.periodic {
                    return Err(Error::InvalidConfig("sea-ice mesh must be periodic".into()));
                }
            }
        }
        Ok(())
    }

    /// The rheology parameter: temperature or concentration.
    pub fn lambda(&self) -> f64 {
        match self.kind {
            ProblemKind::Slab { temperature, .. } => temperature,
            ProblemKind::SeaIce { concentration, .. } => concentration,
        }
    }

    /// Slope angle or peak ocean velocity.
    pub fn forcing(&self) -> f64 {
        match self.kind {
            ProblemKind::Slab { alpha, .. } => alpha,
            ProblemKind::SeaIce { u_o_max, .. } => u_o_max,
        }
    }

    /// Same problem with a different slope angle or ocean velocity.
    pub fn with_forcing(&self, value: f64) -> Self {
        let mut p = *self;
        match &mut p.kind {
            ProblemKind::Slab { alpha, .. } => *alpha = value,
            ProblemKind::SeaIce { u_o_max, .. } => *u_o_max = value,
        }
        p
    }

    pub fn with_cells(&self, n_cells: usize) -> Result<Self> {
        Ok(Self {
            kind: self.kind,
            mesh: Mesh1D::new(self.mesh.length, n_cells, self.mesh.periodic)?,
        })
    }

    pub fn is_dirichlet(&self, i: usize) -> bool {
        matches!(self.kind, ProblemKind::Slab { .. }) && i == 0
    }

    /// Ocean current at `y`; zero for the slab.
    pub fn ocean_velocity(&self, y: f64) -> f64 {
        match self.kind {
            ProblemKind::Slab { .. } => 0.0,
            ProblemKind::SeaIce {
                u_o_max,
                ocean_shift,
                ..
            } => {
                let l = self.mesh.length;
                let mut s = (y + ocean_shift) % l;
                if s < 0.0 {
                    s += l;
                }
                u_o_max * (1.0 - abs(1.0 - 2.0 * s / l))
            }
        }
    }

    /// Factor applied to residuals before tolerance tests.
    pub fn residual_scale(&self) -> f64 {
        match self.kind {
            ProblemKind::Slab { .. } => 1.0,
            ProblemKind::SeaIce { u_o_max, drag, .. } => {
                let s = drag.ocean() * u_o_max * u_o_max;
                if s > 0.0 {
                    1.0 / s
                } else {
                    1.0
                }
            }
        }
    }
}

/// A converged steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub nodal_values: Vec<f64>,
    pub problem: SteadyProblem,
    pub newton_iters: usize,
    /// Scaled `||R||_inf` at exit.
    pub residual_norm: f64,
}

impl DiscreteSolution {
    pub fn at(&self, y: f64) -> f64 {
        self.problem.mesh.interpolate(&self.nodal_values, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iters: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_halvings: usize,
    /// Cold sea-ice solves step through [`CONTINUATION_LADDER`].
    pub continuation: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            rtol: 1e-10,
            atol: 1e-14,
            max_halvings: 30,
            continuation: true,
        }
    }
}

/// Multiple of `eps * ||diag J||_inf * ||u||_inf` accepted as converged.
const ROUNDOFF_FACTOR: f64 = 16.0;

fn check_len(u: &[f64], prob: &SteadyProblem) -> Result<()> {
    let n = prob.mesh.n_unknowns();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    Ok(())
}

fn assemble(
    u: &[f64],
    model: &ViscosityModel,
    prob: &SteadyProblem,
    mut jac: Option<&mut Tridiagonal>,
) -> Result<Vec<f64>> {
    check_len(u, prob)?;
    let mesh = &prob.mesh;
    let h = mesh.h();
    let lambda = prob.lambda();
    let mut r = vec![0.0; u.len()];
    let gauss = gauss2_unit();

    for e in 0..mesh.n_cells {
        let (a, b) = mesh.element(e);
        let du = (u[b] - u[a]) / h;
        let gamma = 0.5 * abs(du);
        let v = model.eval(gamma, lambda)?;
        let q = 0.5 * v.psi * du;
        r[a] -= q;
        r[b] += q;
        if let Some(j) = jac.as_deref_mut() {
            let k = 0.5 * (v.psi + gamma * v.dpsi_dgamma) / h;
            j.add(a, a, k);
            j.add(b, b, k);
            j.add(a, b, -k);
            j.add(b, a, -k);
        }

        match prob.kind {
            ProblemKind::Slab { alpha, .. } => {
                let f = sin(alpha) * 0.5 * h;
                r[a] -= f;
                r[b] -= f;
            }
            ProblemKind::SeaIce { u_a, drag, .. } => {
                let ya = mesh.node(e);
                let air = drag.rho_a * drag.c_a * abs(u_a) * u_a;
                for &(xi, w) in &gauss {
                    let (pa, pb) = (1.0 - xi, xi);
                    let d = prob.ocean_velocity(ya + xi * h) - (pa * u[a] + pb * u[b]);
                    let f = drag.ocean() * abs(d) * d + air;
                    r[a] -= w * h * f * pa;
                    r[b] -= w * h * f * pb;
                    if let Some(j) = jac.as_deref_mut() {
                        let c = w * h * 2.0 * drag.ocean() * abs(d);
                        j.add(a, a, c * pa * pa);
                        j.add(b, b, c * pb * pb);
                        j.add(a, b, c * pa * pb);
                        j.add(b, a, c * pa * pb);
                    }
                }
            }
        }
    }

    if prob.is_dirichlet(0) {
        r[0] = u[0];
        if let Some(j) = jac {
            j.set_identity_row(0);
        }
    }
    Ok(r)
}

/// Nodal residual of the weak form; row 0 of the slab is `u(0)`.
pub fn assemble_residual(
    u: &[f64],
    model: &ViscosityModel,
    prob: &SteadyProblem,
) -> Result<Vec<f64>> {
    assemble(u, model, prob, None)
}

/// Residual together with its exact Jacobian.
pub fn assemble_jacobian(
    u: &[f64],
    model: &ViscosityModel,
    prob: &SteadyProblem,
) -> Result<(Vec<f64>, Tridiagonal)> {
    let mut j = Tridiagonal::zeros(prob.mesh.n_unknowns(), prob.mesh.periodic);
    let r = assemble(u, model, prob, Some(&mut j))?;
    Ok((r, j))
}

/// `||F||_inf` of the load at `u = 0`, unscaled.
fn load_norm(prob: &SteadyProblem) -> Result<f64> {
    let zero = vec![0.0; prob.mesh.n_unknowns()];
    let r = assemble(&zero, &ViscosityModel::Newtonian(0.0), prob, None)?;
    Ok(inf_norm(&r))
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| {
        if abs(*v) > m || v.is_nan() {
            abs(*v)
        } else {
            m
        }
    })
}

fn l2_norm(x: &[f64]) -> f64 {
    crate::math::sqrt(x.iter().map(|v| v * v).sum())
}

/// Solves from a cold start (zero velocity, with continuation for sea ice).
pub fn solve_steady(
    model: &ViscosityModel,
    prob: &SteadyProblem,
    opts: &NewtonOptions,
) -> Result<DiscreteSolution> {
    prob.validate()?;
    let mut u = vec![0.0; prob.mesh.n_unknowns()];
    if opts.continuation && matches!(prob.kind, ProblemKind::SeaIce { .. }) {
        let target = prob.forcing();
        for &step in CONTINUATION_LADDER.iter().filter(|&&s| s < target) {
            u = newton(model, &prob.with_forcing(step), opts, u)?.nodal_values;
        }
    }
    newton(model, prob, opts, u)
}

/// Solves starting from `initial`.
pub fn solve_steady_from(
    model: &ViscosityModel,
    prob: &SteadyProblem,
    opts: &NewtonOptions,
    initial: &[f64],
) -> Result<DiscreteSolution> {
    prob.validate()?;
    check_len(initial, prob)?;
    newton(model, prob, opts, initial.to_vec())
}

fn newton(
    model: &ViscosityModel,
    prob: &SteadyProblem,
    opts: &NewtonOptions,
    mut u: Vec<f64>,
) -> Result<DiscreteSolution> {
    let scale = prob.residual_scale();
    let tol = opts.rtol * scale * load_norm(prob)? + opts.atol;
    if prob.is_dirichlet(0) {
        u[0] = 0.0;
    }
    let mut r_inf = f64::INFINITY;
    for it in 0..=opts.max_iters {
        let (mut r, jac) = assemble_jacobian(&u, model, prob)?;
        r.iter_mut().for_each(|v| *v *= scale);
        r_inf = inf_norm(&r);
        // Residual entries cannot resolve below the rounding of k * u.
        let floor = ROUNDOFF_FACTOR * f64::EPSILON * scale * inf_norm(&jac.diag) * inf_norm(&u);
        if r_inf <= tol.max(floor) {
            return Ok(DiscreteSolution {
                nodal_values: u,
                problem: *prob,
                newton_iters: it,
                residual_norm: r_inf,
            });
        }
        if it == opts.max_iters || !r_inf.is_finite() {
            break;
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v / scale).collect();
        let du = jac.solve(&rhs)?;
        let r2 = l2_norm(&r);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, d)| a + t * d).collect();
            let rt = assemble(&trial, model, prob, None)?;
            let rt2 = l2_norm(&rt) * scale;
            if rt2.is_finite() && rt2 <= (1.0 - 1e-4 * t) * r2 {
                u = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NonConvergence {
        iters: opts.max_iters,
        residual: r_inf,
    })
}

/// Solves `J^T w = rhs` with the Jacobian at the converged state.
pub fn solve_adjoint(
    sol: &DiscreteSolution,
    model: &ViscosityModel,
    misfit_rhs: &[f64],
) -> Result<Vec<f64>> {
    check_len(misfit_rhs, &sol.problem)?;
    let (_, jac) = assemble_jacobian(&sol.nodal_values, model, &sol.problem)?;
    if jac.is_symmetric() {
        jac.solve(misfit_rhs)
    } else {
        jac.transpose().solve(misfit_rhs)
    }
}

/// Velocity observations of one steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub y: f64,
    pub u: f64,
}

/// Loss, gradient and the converged state of one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub solution: DiscreteSolution,
}

/// `sum_i |u_i - u_theta(y_i)|^2` and its adjoint gradient in `theta`.
///
/// `initial` is a Newton warm start; if it fails to converge the solve is
/// repeated from a cold start.
pub fn velocity_loss_gradient_single(
    params: &NetworkParams,
    prob: &SteadyProblem,
    data: &[PointValue],
    initial: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<SingleGradient> {
    let mesh = &prob.mesh;
    for (i, p) in data.iter().enumerate() {
        if !(p.y >= 0.0 && p.y <= mesh.length) || !p.u.is_finite() {
            return Err(Error::InvalidSample {
                index: i,
                reason: "velocity sample outside the domain",
            });
        }
    }
    let model = ViscosityModel::Neural(params.clone());
    let sol = match initial {
        Some(u0) => match solve_steady_from(&model, prob, opts, u0) {
            Ok(s) => s,
            Err(Error::NonConvergence { .. } | Error::Singular { .. }) => {
                solve_steady(&model, prob, opts)?
            }
            Err(e) => return Err(e),
        },
        None => solve_steady(&model, prob, opts)?,
    };
    let u = &sol.nodal_values;

    let mut loss = 0.0;
    let mut dl_du = vec![0.0; u.len()];
    for p in data {
        let w = mesh.weights(p.y);
        let r = p.u - (w[0].1 * u[w[0].0] + w[1].1 * u[w[1].0]);
        loss += r * r;
        for (i, wi) in w {
            dl_du[i] -= 2.0 * r * wi;
        }
    }

    let adj = solve_adjoint(&sol, &model, &dl_du)?;
    let lambda = prob.lambda();
    let mut grad = vec![0.0; params.theta.len()];
    for e in 0..mesh.n_cells {
        let (a, b) = mesh.element(e);
        let du = mesh.slope(u, e);
        let wa = if prob.is_dirichlet(a) { 0.0 } else { adj[a] };
        let c = -(adj[b] - wa) * 0.5 * du;
        if c != 0.0 {
            params.accumulate_psi_grad(0.5 * abs(du), lambda, c, &mut grad);
        }
    }
    Ok(SingleGradient {
        loss,
        grad,
        solution: sol,
    })
}
