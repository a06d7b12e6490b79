//! Neural effective shear viscosity.
//!
//! ```text
//! psi(gamma, lambda) = exp(xi(lambda)) * chi(log gamma, lambda)
//! chi = elu(raw) + 1 + PSI_FLOOR
//! ```
//!
//! `xi: R -> R` and `raw: R^2 -> R` are fully connected tanh networks with a
//! linear output layer. Both inputs are affinely rescaled by a
//! [`Normalization`] stored with the parameters. Derivatives with respect to
//! the parameters and the inputs are computed by a hand-written reverse pass;
//! the monotonicity penalty additionally needs the parameter gradient of
//! `d(psi gamma)/d gamma`, which is obtained by running the reverse pass over
//! a forward tangent sweep.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{exp, expm1, ln, sqrt, tanh};

/// Added to `elu(raw) + 1` so that `psi` stays strictly positive.
pub const PSI_FLOOR: f64 = 1e-12;

/// Strain-rates below this value are clamped before taking the logarithm.
pub const DEFAULT_GAMMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    /// Layer widths of `xi`, input 1 through output 1.
    pub xi: Vec<usize>,
    /// Layer widths of `chi`, input 2 through output 1.
    pub chi: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            xi: vec![1, 16, 16, 1],
            chi: vec![2, 32, 32, 1],
        }
    }
}

fn mlp_param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Architecture {
    pub fn new(xi: Vec<usize>, chi: Vec<usize>) -> Result<Self> {
        let arch = Self { xi, chi };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |sizes: &[usize], input: usize, name: &str| -> Result<()> {
            if sizes.len() < 2 || sizes[0] != input || *sizes.last().unwrap() != 1 {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{name} layers must run from width {input} to width 1, got {sizes:?}"
                )));
            }
            if sizes.contains(&0) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{name} has a zero-width layer"
                )));
            }
            Ok(())
        };
        check(&self.xi, 1, "xi")?;
        check(&self.chi, 2, "chi")
    }

    pub fn xi_param_count(&self) -> usize {
        mlp_param_count(&self.xi)
    }

    pub fn chi_param_count(&self) -> usize {
        mlp_param_count(&self.chi)
    }

    pub fn param_count(&self) -> usize {
        self.xi_param_count() + self.chi_param_count()
    }
}

/// Affine input map `z = (x - shift) / scale` for `log gamma` and `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub log_gamma_shift: f64,
    pub log_gamma_scale: f64,
    pub lambda_shift: f64,
    pub lambda_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self::identity()
    }
}

impl Normalization {
    pub const fn identity() -> Self {
        Self {
            log_gamma_shift: 0.0,
            log_gamma_scale: 1.0,
            lambda_shift: 0.0,
            lambda_scale: 1.0,
        }
    }

    /// Maps `[min, max]` of each input onto `[-1, 1]`. Degenerate ranges get
    /// unit scale.
    pub fn from_bounds(log_gamma: (f64, f64), lambda: (f64, f64)) -> Self {
        let affine = |(lo, hi): (f64, f64)| {
            let half = 0.5 * (hi - lo);
            (0.5 * (hi + lo), if half > 0.0 { half } else { 1.0 })
        };
        let (gs, gc) = affine(log_gamma);
        let (ls, lc) = affine(lambda);
        Self {
            log_gamma_shift: gs,
            log_gamma_scale: gc,
            lambda_shift: ls,
            lambda_scale: lc,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [
            self.log_gamma_shift,
            self.log_gamma_scale,
            self.lambda_shift,
            self.lambda_scale,
        ]
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        if !(a[1] > 0.0 && a[3] > 0.0) || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "invalid normalization {a:?}"
            )));
        }
        Ok(Self {
            log_gamma_shift: a[0],
            log_gamma_scale: a[1],
            lambda_shift: a[2],
            lambda_scale: a[3],
        })
    }
}

/// Result of one viscosity evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub psi: f64,
    pub dpsi_dgamma: f64,
    pub dpsi_dlambda: f64,
    pub grad_theta: Option<Vec<f64>>,
}

/// Parameters of the two networks, `xi` first, each stored layer by layer
/// as a row-major weight matrix followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub normalization: Normalization,
    pub gamma_floor: f64,
    /// Seed used by [`init_params`], kept for provenance.
    pub seed: Option<u64>,
    pub theta: Vec<f64>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(arch: &Architecture, seed: u64) -> Result<NetworkParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(arch.param_count());
    for sizes in [&arch.xi, &arch.chi] {
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = sqrt(6.0 / (fan_in + fan_out) as f64);
            let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
            theta.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            theta.extend(core::iter::repeat_n(0.0, fan_out));
        }
    }
    Ok(NetworkParams {
        arch: arch.clone(),
        normalization: Normalization::identity(),
        gamma_floor: DEFAULT_GAMMA_FLOOR,
        seed: Some(seed),
        theta,
    })
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        expm1(x)
    }
}

/// First and second derivative of `elu`.
#[inline]
fn elu_derivs(x: f64) -> (f64, f64) {
    if x > 0.0 {
        (1.0, 0.0)
    } else {
        let e = exp(x);
        (e, e)
    }
}

/// Activations of one forward sweep, optionally carrying a tangent.
struct Tape {
    /// Post-activation values per layer, input first.
    h: Vec<Vec<f64>>,
    /// Tangents of `h`; empty when no tangent was propagated.
    hd: Vec<Vec<f64>>,
    /// Tangents of the pre-activations (index 0 unused).
    ad: Vec<Vec<f64>>,
}

impl Tape {
    fn output(&self) -> f64 {
        self.h.last().unwrap()[0]
    }

    fn output_tangent(&self) -> f64 {
        self.hd.last().map_or(0.0, |v| v[0])
    }
}

struct Mlp<'a> {
    sizes: &'a [usize],
    theta: &'a [f64],
}

impl Mlp<'_> {
    fn forward(&self, input: &[f64], tangent: Option<&[f64]>) -> Tape {
        let n_layers = self.sizes.len() - 1;
        let mut h = Vec::with_capacity(n_layers + 1);
        let mut hd = Vec::new();
        let mut ad = Vec::new();
        h.push(input.to_vec());
        if let Some(t) = tangent {
            hd.push(t.to_vec());
            ad.push(Vec::new());
        }
        let mut off = 0;
        for k in 1..=n_layers {
            let (n_in, n_out) = (self.sizes[k - 1], self.sizes[k]);
            let w = &self.theta[off..off + n_in * n_out];
            let b = &self.theta[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let prev = &h[k - 1];
            let hidden = k < n_layers;
            let mut a: Vec<f64> = (0..n_out)
                .map(|o| {
                    b[o] + w[o * n_in..(o + 1) * n_in]
                        .iter()
                        .zip(prev)
                        .map(|(x, y)| x * y)
                        .sum::<f64>()
                })
                .collect();
            if tangent.is_some() {
                let prev_d = &hd[k - 1];
                let a_dot: Vec<f64> = (0..n_out)
                    .map(|o| {
                        w[o * n_in..(o + 1) * n_in]
                            .iter()
                            .zip(prev_d)
                            .map(|(x, y)| x * y)
                            .sum()
                    })
                    .collect();
                if hidden {
                    for v in a.iter_mut() {
                        *v = tanh(*v);
                    }
                    hd.push(
                        a.iter()
                            .zip(&a_dot)
                            .map(|(t, d)| (1.0 - t * t) * d)
                            .collect(),
                    );
                } else {
                    hd.push(a_dot.clone());
                }
                ad.push(a_dot);
            } else if hidden {
                for v in a.iter_mut() {
                    *v = tanh(*v);
                }
            }
            h.push(a);
        }
        Tape { h, hd, ad }
    }

    /// Reverse sweep for the scalar `seed_out * out + seed_tan * out_dot`.
    ///
    /// Adds `scale` times the parameter gradient into `grad` (same layout as
    /// `theta`) and returns the unscaled gradient with respect to the primal
    /// input.
    fn backward(
        &self,
        tape: &Tape,
        seed_out: f64,
        seed_tan: f64,
        mut grad: Option<(&mut [f64], f64)>,
    ) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let with_tangent = !tape.hd.is_empty();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for k in 1..=n_layers {
            offsets.push(off);
            off += self.sizes[k - 1] * self.sizes[k] + self.sizes[k];
        }
        // adjoints of the pre-activation (and its tangent) of the current layer
        let mut a_bar = vec![seed_out];
        let mut ad_bar = vec![if with_tangent { seed_tan } else { 0.0 }];
        for k in (1..=n_layers).rev() {
            let (n_in, n_out) = (self.sizes[k - 1], self.sizes[k]);
            let off = offsets[k - 1];
            let w = &self.theta[off..off + n_in * n_out];
            let prev = &tape.h[k - 1];
            if let Some((g, scale)) = grad.as_mut() {
                let scale = *scale;
                let (gw, gb) = g[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for o in 0..n_out {
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    let ab = scale * a_bar[o];
                    for (gi, x) in row.iter_mut().zip(prev) {
                        *gi += ab * x;
                    }
                    if with_tangent {
                        let adb = scale * ad_bar[o];
                        for (gi, x) in row.iter_mut().zip(&tape.hd[k - 1]) {
                            *gi += adb * x;
                        }
                    }
                    gb[o] += ab;
                }
            }
            let mut h_bar = vec![0.0; n_in];
            let mut hd_bar = vec![0.0; n_in];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    h_bar[i] += row[i] * a_bar[o];
                }
                if with_tangent {
                    for i in 0..n_in {
                        hd_bar[i] += row[i] * ad_bar[o];
                    }
                }
            }
            if k == 1 {
                return h_bar;
            }
            // back through h = tanh(a), h_dot = (1 - h^2) a_dot
            let h = &tape.h[k - 1];
            a_bar = (0..n_in)
                .map(|i| {
                    let s = 1.0 - h[i] * h[i];
                    let mut v = s * h_bar[i];
                    if with_tangent {
                        v -= 2.0 * h[i] * s * tape.ad[k - 1][i] * hd_bar[i];
                    }
                    v
                })
                .collect();
            if with_tangent {
                ad_bar = (0..n_in).map(|i| (1.0 - h[i] * h[i]) * hd_bar[i]).collect();
            }
        }
        unreachable!("networks have at least one layer")
    }
}

impl NetworkParams {
    pub fn new(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.param_count() {
            return Err(Error::DimensionMismatch {
                expected: arch.param_count(),
                got: theta.len(),
            });
        }
        Ok(Self {
            arch,
            normalization: Normalization::identity(),
            gamma_floor: DEFAULT_GAMMA_FLOOR,
            seed: None,
            theta,
        })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn n_xi(&self) -> usize {
        self.arch.xi_param_count()
    }

    fn xi(&self) -> Mlp<'_> {
        Mlp {
            sizes: &self.arch.xi,
            theta: &self.theta[..self.n_xi()],
        }
    }

    fn chi(&self) -> Mlp<'_> {
        Mlp {
            sizes: &self.arch.chi,
            theta: &self.theta[self.n_xi()..],
        }
    }

    /// Clamped log strain-rate and `d log(gamma_c) / d gamma`.
    fn log_gamma(&self, gamma: f64) -> (f64, f64) {
        if gamma > self.gamma_floor {
            (ln(gamma), 1.0 / gamma)
        } else {
            (ln(self.gamma_floor), 0.0)
        }
    }

    fn inputs(&self, gamma: f64, lambda: f64) -> ([f64; 2], f64) {
        let nrm = &self.normalization;
        let (l, dl) = self.log_gamma(gamma);
        (
            [
                (l - nrm.log_gamma_shift) / nrm.log_gamma_scale,
                (lambda - nrm.lambda_shift) / nrm.lambda_scale,
            ],
            dl,
        )
    }

    /// `psi`, its input derivatives, and no parameter gradient.
    pub fn eval_psi(&self, gamma: f64, lambda: f64) -> EvalRecord {
        self.eval_inner(gamma, lambda, None)
    }

    pub fn eval_psi_with_grad(&self, gamma: f64, lambda: f64) -> EvalRecord {
        let mut g = vec![0.0; self.theta.len()];
        let mut rec = self.eval_inner(gamma, lambda, Some((1.0, &mut g)));
        rec.grad_theta = Some(g);
        rec
    }

    /// Adds `scale * grad_theta psi` into `grad` and returns `(psi, dpsi/dgamma)`.
    pub fn accumulate_psi_grad(
        &self,
        gamma: f64,
        lambda: f64,
        scale: f64,
        grad: &mut [f64],
    ) -> (f64, f64) {
        let rec = self.eval_inner(gamma, lambda, Some((scale, grad)));
        (rec.psi, rec.dpsi_dgamma)
    }

    fn eval_inner(&self, gamma: f64, lambda: f64, grad: Option<(f64, &mut [f64])>) -> EvalRecord {
        let gamma = gamma.abs();
        let nrm = self.normalization;
        let (z, dl) = self.inputs(gamma, lambda);
        let (xi_net, chi_net) = (self.xi(), self.chi());
        let xi_tape = xi_net.forward(&z[1..], None);
        let chi_tape = chi_net.forward(&z, None);
        let xi = xi_tape.output();
        let raw = chi_tape.output();
        let scale_xi = exp(xi);
        let chi = elu(raw) + 1.0 + PSI_FLOOR;
        let psi = scale_xi * chi;
        let (elu_d, _) = elu_derivs(raw);
        let dpsi_draw = scale_xi * elu_d;

        let n_xi = self.n_xi();
        let (dxi_dz, dr_dz) = match grad {
            Some((s, g)) => {
                let (gx, gc) = g.split_at_mut(n_xi);
                (
                    xi_net.backward(&xi_tape, 1.0, 0.0, Some((gx, s * psi))),
                    chi_net.backward(&chi_tape, 1.0, 0.0, Some((gc, s * dpsi_draw))),
                )
            }
            None => (
                xi_net.backward(&xi_tape, 1.0, 0.0, None),
                chi_net.backward(&chi_tape, 1.0, 0.0, None),
            ),
        };
        EvalRecord {
            psi,
            dpsi_dgamma: dpsi_draw * dr_dz[0] / nrm.log_gamma_scale * dl,
            dpsi_dlambda: (psi * dxi_dz[0] + dpsi_draw * dr_dz[1]) / nrm.lambda_scale,
            grad_theta: None,
        }
    }

    /// `psi` and `d psi / d gamma` from a single forward-tangent sweep.
    pub fn psi_and_slope(&self, gamma: f64, lambda: f64) -> (f64, f64) {
        let gamma = gamma.abs();
        let (z, dl) = self.inputs(gamma, lambda);
        let xi = self.xi().forward(&z[1..], None).output();
        let tangent = [1.0 / self.normalization.log_gamma_scale, 0.0];
        let tape = self.chi().forward(&z, Some(&tangent));
        let raw = tape.output();
        let scale_xi = exp(xi);
        let psi = scale_xi * (elu(raw) + 1.0 + PSI_FLOOR);
        let (elu_d, _) = elu_derivs(raw);
        (psi, scale_xi * elu_d * tape.output_tangent() * dl)
    }

    /// `d(psi(gamma) gamma)/d gamma = psi + gamma dpsi/dgamma`.
    pub fn stress_slope(&self, gamma: f64, lambda: f64) -> f64 {
        self.stress_slope_inner(gamma, lambda, None)
    }

    /// As [`Self::stress_slope`], also adding `scale` times its parameter
    /// gradient into `grad`.
    pub fn accumulate_stress_slope_grad(
        &self,
        gamma: f64,
        lambda: f64,
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        self.stress_slope_inner(gamma, lambda, Some((scale, grad)))
    }

    fn stress_slope_inner(&self, gamma: f64, lambda: f64, grad: Option<(f64, &mut [f64])>) -> f64 {
        let gamma = gamma.abs();
        let (z, _) = self.inputs(gamma, lambda);
        // gamma * d log(gamma_c)/d gamma: 1 above the clamp, 0 below
        let kappa = if gamma > self.gamma_floor { 1.0 } else { 0.0 };
        let (xi_net, chi_net) = (self.xi(), self.chi());
        let xi_tape = xi_net.forward(&z[1..], None);
        let tangent = [1.0 / self.normalization.log_gamma_scale, 0.0];
        let chi_tape = chi_net.forward(&z, Some(&tangent));
        let raw = chi_tape.output();
        let raw_dot = chi_tape.output_tangent();
        let scale_xi = exp(xi_tape.output());
        let (e1, e2) = elu_derivs(raw);
        let slope = scale_xi * (elu(raw) + 1.0 + PSI_FLOOR + kappa * e1 * raw_dot);
        if let Some((s, g)) = grad {
            let (gx, gc) = g.split_at_mut(self.n_xi());
            xi_net.backward(&xi_tape, 1.0, 0.0, Some((gx, s * slope)));
            let seed_raw = scale_xi * (e1 + kappa * e2 * raw_dot);
            let seed_dot = scale_xi * kappa * e1;
            chi_net.backward(&chi_tape, seed_raw, seed_dot, Some((gc, s)));
        }
        slope
    }
}
