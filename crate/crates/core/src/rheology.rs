//! Tensor invariants and the analytic effective shear viscosities.
//!
//! All viscosities here are functions `psi(gamma, lambda)` of the shear
//! strain-rate `gamma = |dev D u|` and one external parameter `lambda`
//! (temperature in kelvin for land ice, concentration for sea ice). In one
//! dimension `gamma = |du/dy| / 2` and the shear stress is `psi * gamma`.

use crate::error::{Error, Result};
use crate::math::{abs, exp, powf, sqrt};
use crate::nn::NetworkParams;
use crate::quadrature::adaptive_gauss_legendre;

/// Offset between the Celsius and Kelvin scales.
///
/// Note that [`GlenParams::default`] keeps `t_ref = 273 K` exactly, so 0 °C
/// sits 0.15 K above the reference temperature.
pub const KELVIN_OFFSET: f64 = 273.15;

pub fn celsius_to_kelvin(t_c: f64) -> f64 {
    t_c + KELVIN_OFFSET
}

/// Symmetric 2x2 tensor stored by its three independent components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

/// `(tr A, |dev A|)` with `|A|^2 = tr(A^2) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalInvariants {
    pub trace: f64,
    pub dev_norm: f64,
}

impl SymTensor2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    /// Strain-rate of the shear flow `u = (u(y), 0)`.
    pub fn shear_strain_rate(du_dy: f64) -> Self {
        Self::new(0.0, 0.5 * du_dy, 0.0)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// `A - tr(A)/2 I`.
    pub fn deviatoric(&self) -> Self {
        let half_tr = 0.5 * self.trace();
        Self::new(self.xx - half_tr, self.xy, self.yy - half_tr)
    }

    /// `sqrt(tr(A^2) / 2)`.
    pub fn norm(&self) -> f64 {
        sqrt(0.5 * (self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy))
    }

    pub fn principal_invariants(&self) -> PrincipalInvariants {
        PrincipalInvariants {
            trace: self.trace(),
            dev_norm: self.deviatoric().norm(),
        }
    }

    /// `O A O^T` for the rotation by `angle` radians.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = libm::sincos(angle);
        // O = [[c, -s], [s, c]]
        let xx = c * c * self.xx - 2.0 * c * s * self.xy + s * s * self.yy;
        let yy = s * s * self.xx + 2.0 * c * s * self.xy + c * c * self.yy;
        let xy = c * s * (self.xx - self.yy) + (c * c - s * s) * self.xy;
        Self::new(xx, xy, yy)
    }
}

/// Glen's flow law with an Arrhenius rate factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlenParams {
    /// Stress exponent.
    pub n: f64,
    /// Strain-rate regularization; caps the viscosity at `gamma = 0`.
    pub eps: f64,
    pub b0: f64,
    /// Activation temperature `Q/R` in kelvin.
    pub q: f64,
    pub t_ref: f64,
}

impl Default for GlenParams {
    fn default() -> Self {
        Self {
            n: 3.0,
            eps: 1e-8,
            b0: 1.0,
            q: 2405.0,
            t_ref: 273.0,
        }
    }
}

impl GlenParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0) {
            return Err(Error::Domain {
                what: "Glen exponent n",
                value: self.n,
            });
        }
        if !(self.eps > 0.0) {
            return Err(Error::Domain {
                what: "Glen regularization eps",
                value: self.eps,
            });
        }
        Ok(())
    }

    /// `B(T) = B0 exp(q (1/T - 1/T_ref))`.
    pub fn rate_factor(&self, temperature: f64) -> Result<f64> {
        if !(temperature > 0.0) {
            return Err(Error::Domain {
                what: "temperature (K)",
                value: temperature,
            });
        }
        Ok(self.b0 * exp(self.q * (1.0 / temperature - 1.0 / self.t_ref)))
    }

    fn eval(&self, gamma: f64, temperature: f64) -> Result<Viscosity> {
        let b = self.rate_factor(temperature)?;
        let expo = (1.0 - self.n) / (2.0 * self.n);
        let r = gamma * gamma + self.eps * self.eps;
        let psi = b * powf(r, expo);
        Ok(Viscosity {
            psi,
            dpsi_dgamma: psi * expo * 2.0 * gamma / r,
        })
    }
}

/// Viscous-plastic (Hibler) sea-ice parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpParams {
    /// Eccentricity of the elliptical yield curve.
    pub e: f64,
    /// Viscous regularization in 1/s.
    pub delta_min: f64,
    /// Ice strength parameter in N/m^2.
    pub p_star: f64,
    pub c: f64,
    /// Ice thickness in m.
    pub h: f64,
}

impl Default for VpParams {
    fn default() -> Self {
        Self {
            e: 2.0,
            delta_min: 2.5e-6,
            p_star: 2000.0,
            c: 20.0,
            h: 2.0,
        }
    }
}

impl VpParams {
    /// `p(A) = p* H exp(-C (1 - A))`.
    pub fn ice_strength(&self, concentration: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&concentration) {
            return Err(Error::Domain {
                what: "ice concentration",
                value: concentration,
            });
        }
        Ok(self.p_star * self.h * exp(-self.c * (1.0 - concentration)))
    }

    fn eval(&self, gamma: f64, concentration: f64) -> Result<Viscosity> {
        let p = self.ice_strength(concentration)?;
        let reg = self.e * self.delta_min;
        let r = gamma * gamma + reg * reg;
        let psi = p / (2.0 * self.e) / sqrt(r);
        Ok(Viscosity {
            psi,
            dpsi_dgamma: -psi * gamma / r,
        })
    }
}

pub fn glen_viscosity(gamma: f64, temperature: f64, params: &GlenParams) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::Domain {
            what: "strain-rate",
            value: gamma,
        });
    }
    Ok(params.eval(gamma, temperature)?.psi)
}

pub fn vp_shear_viscosity(gamma: f64, concentration: f64, params: &VpParams) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::Domain {
            what: "strain-rate",
            value: gamma,
        });
    }
    Ok(params.eval(gamma, concentration)?.psi)
}

/// Viscosity and its strain-rate derivative at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viscosity {
    pub psi: f64,
    pub dpsi_dgamma: f64,
}

/// The closed set of effective shear viscosity laws.
#[derive(Debug, Clone, PartialEq)]
pub enum ViscosityModel {
    /// Constant viscosity; zero is allowed and gives inviscid (free-drift) flow.
    Newtonian(f64),
    Glen(GlenParams),
    ViscousPlastic(VpParams),
    Neural(NetworkParams),
}

impl ViscosityModel {
    /// `psi(gamma, lambda)` and `d psi / d gamma`. `gamma` is used as `|gamma|`.
    pub fn eval(&self, gamma: f64, lambda: f64) -> Result<Viscosity> {
        let g = abs(gamma);
        match self {
            ViscosityModel::Newtonian(mu) => Ok(Viscosity {
                psi: *mu,
                dpsi_dgamma: 0.0,
            }),
            ViscosityModel::Glen(p) => p.eval(g, lambda),
            ViscosityModel::ViscousPlastic(p) => p.eval(g, lambda),
            ViscosityModel::Neural(net) => {
                let (psi, dpsi_dgamma) = net.psi_and_slope(g, lambda);
                Ok(Viscosity { psi, dpsi_dgamma })
            }
        }
    }

    pub fn psi(&self, gamma: f64, lambda: f64) -> Result<f64> {
        Ok(self.eval(gamma, lambda)?.psi)
    }

    /// Number of trainable parameters (zero for analytic laws).
    pub fn n_params(&self) -> usize {
        match self {
            ViscosityModel::Neural(net) => net.theta.len(),
            _ => 0,
        }
    }
}

/// `tau = psi(|gamma|, lambda) * gamma`.
pub fn shear_stress(model: &ViscosityModel, gamma: f64, lambda: f64) -> Result<f64> {
    if gamma == 0.0 {
        return Ok(0.0);
    }
    Ok(model.psi(gamma, lambda)? * gamma)
}

/// Relative tolerance of [`dissipation_potential`].
pub const DISSIPATION_REL_TOL: f64 = 1e-8;

/// `j(s) = int_0^s psi(t, lambda) t dt`.
pub fn dissipation_potential(model: &ViscosityModel, s: f64, lambda: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain {
            what: "strain-rate",
            value: s,
        });
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    adaptive_gauss_legendre(
        |t| Ok(model.psi(t, lambda)? * t),
        0.0,
        s,
        DISSIPATION_REL_TOL,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn close(a: f64, b: f64, rtol: f64) -> bool {
        (a - b).abs() <= rtol * b.abs().max(1e-300)
    }

    #[test]
    fn deviatoric_examples() {
        assert_eq!(
            SymTensor2::identity().deviatoric(),
            SymTensor2::new(0.0, 0.0, 0.0)
        );
        assert_eq!(
            SymTensor2::new(3.5, -1.25, 3.5).deviatoric(),
            SymTensor2::new(0.0, -1.25, 0.0)
        );
        assert_eq!(
            SymTensor2::new(2.0, 1.0, 0.0).deviatoric(),
            SymTensor2::new(1.0, 1.0, -1.0)
        );
    }

    #[test]
    fn invariants_examples() {
        let pure_shear = SymTensor2::new(0.0, -0.7, 0.0).principal_invariants();
        assert_eq!(pure_shear.trace, 0.0);
        assert!(close(pure_shear.dev_norm, 0.7, 1e-15));

        let id = SymTensor2::identity().principal_invariants();
        assert_eq!((id.trace, id.dev_norm), (2.0, 0.0));

        let a = SymTensor2::new(2.0, 1.0, 0.0).principal_invariants();
        assert_eq!(a.trace, 2.0);
        assert!(close(a.dev_norm, 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn one_dimensional_shear_rate_is_half_gradient() {
        let inv = SymTensor2::shear_strain_rate(-3.0).principal_invariants();
        assert!(close(inv.dev_norm, 1.5, 1e-15));
    }

    #[test]
    fn glen_examples() {
        let p = GlenParams::default();
        assert!((glen_viscosity(1.0, 273.0, &p).unwrap() - 1.0).abs() < 1e-10);
        let expected = (2405.0f64 * (1.0 / 263.15 - 1.0 / 273.0)).exp();
        assert!(close(
            glen_viscosity(1.0, 263.15, &p).unwrap(),
            expected,
            1e-12
        ));
        let mut prev = f64::INFINITY;
        for k in 0..12 {
            let v = glen_viscosity(10f64.powi(k), 270.0, &p).unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(glen_viscosity(1.0, 0.0, &p).is_err());
        assert!(glen_viscosity(1.0, -5.0, &p).is_err());
    }

    #[test]
    fn vp_examples() {
        let p = VpParams::default();
        assert!(close(
            vp_shear_viscosity(0.0, 1.0, &p).unwrap(),
            2.0e8,
            1e-12
        ));
        let v = vp_shear_viscosity(5e-5, 0.95, &p).unwrap();
        let expected = 4000.0 * (-1.0f64).exp() / (4.0 * 2.525e-9f64.sqrt());
        assert!(close(v, expected, 1e-12));
        assert!(close(v, 7.32e6, 1e-3));
        let ratio =
            vp_shear_viscosity(1e-6, 0.0, &p).unwrap() / vp_shear_viscosity(1e-6, 1.0, &p).unwrap();
        assert!(close(ratio, (-20.0f64).exp(), 1e-12));
        assert!(vp_shear_viscosity(1e-6, 1.01, &p).is_err());
        assert!(vp_shear_viscosity(1e-6, -0.01, &p).is_err());
    }

    #[test]
    fn shear_stress_examples() {
        let glen = ViscosityModel::Glen(GlenParams {
            eps: 1e-14,
            ..Default::default()
        });
        assert_eq!(shear_stress(&glen, 0.0, 260.0).unwrap(), 0.0);
        let b = GlenParams::default().rate_factor(260.0).unwrap();
        for &g in &[1e-3, 0.5, 7.0] {
            assert!(close(
                shear_stress(&glen, g, 260.0).unwrap(),
                b * libm::cbrt(g),
                1e-10
            ));
            assert!(close(
                shear_stress(&glen, -g, 260.0).unwrap(),
                -b * libm::cbrt(g),
                1e-10
            ));
        }
        let vp = VpParams::default();
        let plateau = vp.ice_strength(0.9).unwrap() / (2.0 * vp.e);
        let tau = shear_stress(&ViscosityModel::ViscousPlastic(vp), 1.0, 0.9).unwrap();
        assert!(close(tau, plateau, 1e-9));
    }

    #[test]
    fn dissipation_examples() {
        let newt = ViscosityModel::Newtonian(3.0);
        assert_eq!(dissipation_potential(&newt, 0.0, 0.0).unwrap(), 0.0);
        assert!(close(
            dissipation_potential(&newt, 2.0, 0.0).unwrap(),
            6.0,
            1e-12
        ));

        let glen = ViscosityModel::Glen(GlenParams {
            eps: 1e-14,
            ..Default::default()
        });
        let b = GlenParams::default().rate_factor(263.15).unwrap();
        for &s in &[1e-3, 1.0, 40.0] {
            let exact = 0.75 * b * libm::pow(s, 4.0 / 3.0);
            assert!(close(
                dissipation_potential(&glen, s, 263.15).unwrap(),
                exact,
                1e-6
            ));
        }
    }

    #[test]
    fn dissipation_is_nondecreasing() {
        let vp = ViscosityModel::ViscousPlastic(VpParams::default());
        let vals: Vec<f64> = (0..20)
            .map(|k| dissipation_potential(&vp, 1e-9 * 2f64.powi(k), 0.9).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    fn stress_increasing(model: &ViscosityModel, lambda: f64, log10_max: f64) {
        let mut prev = 0.0;
        for k in 0..=200 {
            let s = 10f64.powf(-12.0 + k as f64 * (log10_max + 12.0) / 200.0);
            let h = 1e-6 * s;
            let slope = (shear_stress(model, s + h, lambda).unwrap()
                - shear_stress(model, s - h, lambda).unwrap())
                / (2.0 * h);
            assert!(slope > 0.0, "non-increasing stress at s={s}");
            let tau = shear_stress(model, s, lambda).unwrap();
            assert!(tau > prev);
            prev = tau;
        }
    }

    #[test]
    fn analytic_stress_is_strictly_increasing() {
        let glen = ViscosityModel::Glen(GlenParams::default());
        for t in [253.15, 263.15, 273.15] {
            stress_increasing(&glen, t, 2.0);
        }
        let vp = ViscosityModel::ViscousPlastic(VpParams::default());
        // beyond ~1e-3 1/s the plastic plateau is flat to double precision
        for a in [0.8, 0.9, 0.95] {
            stress_increasing(&vp, a, -3.0);
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let models = [
            (ViscosityModel::Glen(GlenParams::default()), 258.0),
            (ViscosityModel::ViscousPlastic(VpParams::default()), 0.87),
        ];
        for (m, lam) in &models {
            for &g in &[1e-9, 3e-6, 2e-3, 0.4, 20.0] {
                let h = 1e-6 * g;
                let fd = (m.psi(g + h, *lam).unwrap() - m.psi(g - h, *lam).unwrap()) / (2.0 * h);
                let an = m.eval(g, *lam).unwrap().dpsi_dgamma;
                let tol = 1e-6 * an.abs() + 1e-9 * m.psi(g, *lam).unwrap() / g;
                assert!((fd - an).abs() <= tol, "g={g}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn kelvin_conversion_keeps_reference_offset() {
        assert_eq!(celsius_to_kelvin(0.0), 273.15);
        assert!(celsius_to_kelvin(0.0) - GlenParams::default().t_ref > 0.149);
    }
}
