//! Constitutive relations of the binary-fluid model and parameter containers.

use crate::{Error, Real, Result, Vec2};

/// Physical constants of the mixture model (SI units).
///
/// The fluid-fluid surface tension is stored through the scaled value
/// `sigma = 3 sigma_12 / (2 sqrt 2)` used by the weak form. The intrinsic
/// volume ratio of the Arrhenius viscosity model is fixed to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    /// Density of species 1 (`phi = +1`), kg/m^3.
    pub rho1: T,
    /// Density of species 2 (`phi = -1`), kg/m^3.
    pub rho2: T,
    pub eta1: T,
    pub eta2: T,
    pub sigma: T,
    /// Interface thickness, m.
    pub eps: T,
    /// Mobility, m s^2/kg.
    pub mobility: T,
    /// Generalized Navier slip coefficient, Pa s/m.
    pub alpha_gn: T,
    pub sigma_s1: T,
    pub sigma_s2: T,
    /// Body force per unit volume, N/m^3.
    pub body_force: Vec2<T>,
    lambda: T,
}

/// Default parameters of a water-air system (SI units).
pub mod defaults {
    pub const RHO1: f64 = 1000.0;
    pub const RHO2: f64 = 1.3;
    pub const ETA1: f64 = 1e-3;
    pub const ETA2: f64 = 1.813e-5;
    pub const SIGMA12: f64 = 72.8e-3;
    pub const ALPHA_GN: f64 = 100.0;
    pub const EPS: f64 = 0.78125e-6;
    pub const MOBILITY: f64 = 3.0487e-10;
    pub const BETA: f64 = 100.0;
    pub const GAMMA_SKELETON: f64 = 0.01;
    pub const GAMMA_GHOST: f64 = 0.01;
}

/// Converts the fluid-fluid surface tension to the weak-form coefficient.
pub fn sigma_from_sigma12<T: Real>(sigma12: T) -> T {
    T::lit(3.0) * sigma12 / (T::two() * T::two().sqrt())
}

impl<T: Real> ModelParams<T> {
    /// Validating constructor. Equal densities are accepted (matched-density
    /// benchmarks); the extension parameter is then infinite and the density
    /// is constant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rho1: T,
        rho2: T,
        eta1: T,
        eta2: T,
        sigma12: T,
        eps: T,
        mobility: T,
        alpha_gn: T,
        sigma_s: (T, T),
        body_force: Vec2<T>,
    ) -> Result<Self> {
        let positive = [
            ("rho2", rho2),
            ("eta1", eta1),
            ("eta2", eta2),
            ("eps", eps),
            ("mobility", mobility),
            ("alpha_gn", alpha_gn),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::config(format!("model parameter `{name}` must be positive and finite, got {v:e}")));
            }
        }
        if !(rho1 >= rho2 && rho1.is_finite()) {
            return Err(Error::config(format!("need rho1 >= rho2 > 0, got rho1 = {rho1:e}, rho2 = {rho2:e}")));
        }
        if !(sigma12 >= T::zero() && sigma12.is_finite()) {
            return Err(Error::config(format!("surface tension must be nonnegative, got {sigma12:e}")));
        }
        if !body_force.is_finite() || !sigma_s.0.is_finite() || !sigma_s.1.is_finite() {
            return Err(Error::config("non-finite body force or solid surface tension"));
        }
        let lambda = if rho1 > rho2 { rho2 / (rho1 - rho2) } else { T::infinity() };
        Ok(Self {
            rho1,
            rho2,
            eta1,
            eta2,
            sigma: sigma_from_sigma12(sigma12),
            eps,
            mobility,
            alpha_gn,
            sigma_s1: sigma_s.0,
            sigma_s2: sigma_s.1,
            body_force,
            lambda,
        })
    }

    /// Default water-air parameters, neutral wetting with zero solid surface tensions, no body force.
    pub fn reference() -> Self {
        use defaults::*;
        Self::new(
            T::lit(RHO1),
            T::lit(RHO2),
            T::lit(ETA1),
            T::lit(ETA2),
            T::lit(SIGMA12),
            T::lit(EPS),
            T::lit(MOBILITY),
            T::lit(ALPHA_GN),
            (T::zero(), T::zero()),
            Vec2::zero(),
        )
        .expect("default values are valid")
    }

    /// Density extension parameter `rho2 / (rho1 - rho2)`, frozen at construction.
    #[inline]
    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn sigma12(&self) -> T {
        T::two() * T::two().sqrt() / T::lit(3.0) * self.sigma
    }

    pub fn is_neutral_wetting(&self) -> bool {
        self.sigma_s1 == self.sigma_s2
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let c = |v: T| U::lit(v.as_f64());
        ModelParams {
            rho1: c(self.rho1),
            rho2: c(self.rho2),
            eta1: c(self.eta1),
            eta2: c(self.eta2),
            sigma: c(self.sigma),
            eps: c(self.eps),
            mobility: c(self.mobility),
            alpha_gn: c(self.alpha_gn),
            sigma_s1: c(self.sigma_s1),
            sigma_s2: c(self.sigma_s2),
            body_force: self.body_force.cast(),
            lambda: c(self.lambda),
        }
    }

    /// Mixture density with the positivity-preserving extension outside `[-1, 1]`.
    pub fn density(&self, phi: T) -> T {
        self.density_derivs(phi).0
    }

    pub fn density_slope(&self, phi: T) -> T {
        self.density_derivs(phi).1
    }

    /// `(rho, rho', rho'')` at `phi`.
    pub fn density_derivs(&self, phi: T) -> (T, T, T) {
        let (r1, r2, lam) = (self.rho1, self.rho2, self.lambda);
        let q = T::lit(0.25) * r2;
        let one = T::one();
        let two = T::two();
        if phi <= -one - two * lam {
            (q, T::zero(), T::zero())
        } else if phi < -one - lam {
            let s = one + two * lam + phi;
            let c = q / (lam * lam);
            (q + c * s * s, two * c * s, two * c)
        } else if phi <= one + lam {
            let half = T::half();
            ((one + phi) * half * r1 + (one - phi) * half * r2, half * (r1 - r2), T::zero())
        } else if phi < one + two * lam {
            let s = one + two * lam - phi;
            let c = q / (lam * lam);
            (r1 + T::lit(3.0) * q - c * s * s, two * c * s, -two * c)
        } else {
            (r1 + T::lit(3.0) * q, T::zero(), T::zero())
        }
    }

    /// Arrhenius mixture viscosity (log-linear interpolation).
    pub fn viscosity(&self, phi: T) -> T {
        let half = T::half();
        ((T::one() + phi) * half * self.eta1.ln() + (T::one() - phi) * half * self.eta2.ln()).exp()
    }

    /// `(eta, eta')` at `phi`.
    pub fn viscosity_derivs(&self, phi: T) -> (T, T) {
        let eta = self.viscosity(phi);
        (eta, eta * T::half() * (self.eta1.ln() - self.eta2.ln()))
    }

    /// `J = -((rho1 - rho2)/2) m grad(mu)`.
    pub fn mass_flux(&self, grad_mu: Vec2<T>) -> Vec2<T> {
        grad_mu * (-(self.rho1 - self.rho2) * T::half() * self.mobility)
    }

    /// Coefficient `c` with `J = c grad(mu)`.
    #[inline]
    pub fn mass_flux_coefficient(&self) -> T {
        -(self.rho1 - self.rho2) * T::half() * self.mobility
    }

    /// `sigma_sf(phi)`.
    pub fn solid_fluid_tension(&self, phi: T) -> T {
        T::lit(0.25) * (phi * phi * phi - T::lit(3.0) * phi) * (self.sigma_s2 - self.sigma_s1)
            + T::half() * (self.sigma_s1 + self.sigma_s2)
    }

    /// `(sigma_sf', sigma_sf'')` at `phi`.
    pub fn solid_fluid_tension_derivs(&self, phi: T) -> (T, T) {
        let d = self.sigma_s2 - self.sigma_s1;
        (T::lit(0.75) * (phi * phi - T::one()) * d, T::lit(1.5) * phi * d)
    }

    /// `(sigma eps / 2) |grad phi|^2 + (sigma / eps) Psi(phi)`.
    pub fn mixture_energy_density(&self, phi: T, grad_phi: Vec2<T>) -> T {
        self.sigma * self.eps * T::half() * grad_phi.norm_squared() + self.sigma / self.eps * double_well(phi)
    }
}

/// `Psi = (phi^2 - 1)^2 / 4`.
#[inline]
pub fn double_well<T: Real>(phi: T) -> T {
    let a = phi * phi - T::one();
    T::lit(0.25) * a * a
}

/// `Psi' = phi^3 - phi`.
#[inline]
pub fn double_well_slope<T: Real>(phi: T) -> T {
    phi * phi * phi - phi
}

/// `Psi'' = 3 phi^2 - 1`.
#[inline]
pub fn double_well_curvature<T: Real>(phi: T) -> T {
    T::lit(3.0) * phi * phi - T::one()
}

/// Nitsche and penalty constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabParams<T> {
    pub beta: T,
    pub gamma_skeleton: T,
    pub gamma_ghost: T,
}

impl<T: Real> Default for StabParams<T> {
    fn default() -> Self {
        Self {
            beta: T::lit(defaults::BETA),
            gamma_skeleton: T::lit(defaults::GAMMA_SKELETON),
            gamma_ghost: T::lit(defaults::GAMMA_GHOST),
        }
    }
}

impl<T: Real> StabParams<T> {
    pub fn new(beta: T, gamma_skeleton: T, gamma_ghost: T) -> Result<Self> {
        for (name, v) in [("beta", beta), ("gamma_skeleton", gamma_skeleton), ("gamma_ghost", gamma_ghost)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::config(format!("stabilization parameter `{name}` must be positive, got {v:e}")));
            }
        }
        Ok(Self { beta, gamma_skeleton, gamma_ghost })
    }

    pub fn cast<U: Real>(&self) -> StabParams<U> {
        StabParams {
            beta: U::lit(self.beta.as_f64()),
            gamma_skeleton: U::lit(self.gamma_skeleton.as_f64()),
            gamma_ghost: U::lit(self.gamma_ghost.as_f64()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> ModelParams<f64> {
        ModelParams::reference()
    }

    #[test]
    fn density_endpoints_and_plateaus() {
        let m = p();
        assert!((m.density(1.0) - 1000.0).abs() < 1e-12);
        assert!((m.density(-1.0) - 1.3).abs() < 1e-12);
        let lam = m.lambda();
        assert!((m.density(-1.0 - 2.0 * lam - 0.1) - 0.325).abs() < 1e-12);
        assert!((m.density(-50.0) - 0.325).abs() < 1e-12);
        assert!((m.density(1.0 + 2.0 * lam + 0.1) - (1000.0 + 0.75 * 1.3)).abs() < 1e-12);
        // Joint at -1 - lambda: both branch formulas give rho2 / 2.
        let phi = -1.0 - lam;
        let linear = (1.0 + phi) / 2.0 * 1000.0 + (1.0 - phi) / 2.0 * 1.3;
        let s = 1.0 + 2.0 * lam + phi;
        let quad = 0.325 + 0.325 / (lam * lam) * s * s;
        assert!((linear - 0.65).abs() < 1e-12 && (quad - 0.65).abs() < 1e-12);
    }

    #[test]
    fn matched_density_is_constant() {
        let m = ModelParams::new(1000.0, 1000.0, 1e-3, 1e-3, 0.0728, 1e-6, 3e-11, 100.0, (0.0, 0.0), Vec2::zero())
            .unwrap();
        for phi in [-20.0, -1.0, 0.3, 7.0] {
            assert_eq!(m.density_derivs(phi), (1000.0, 0.0, 0.0));
        }
        assert_eq!(m.mass_flux(Vec2::new(3.0, -1.0)), Vec2::new(0.0, 0.0));
    }

    #[test]
    fn viscosity_values() {
        let m = p();
        assert!((m.viscosity(1.0) - 1e-3).abs() < 1e-15);
        assert!((m.viscosity(-1.0) - 1.813e-5).abs() < 1e-17);
        assert!((m.viscosity(0.0) - (1e-3f64 * 1.813e-5).sqrt()).abs() < 1e-15);
        assert!((m.viscosity(0.0) - 1.3465e-4).abs() < 1e-8);
        assert!((m.viscosity(3.0) / (1e-6 / 1.813e-5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_well_values() {
        assert_eq!(double_well(1.0), 0.0);
        assert_eq!(double_well(-1.0), 0.0);
        assert_eq!(double_well_slope(1.0), 0.0);
        assert_eq!(double_well(0.0), 0.25);
        assert!((double_well_slope(0.5f64) + 0.375).abs() < 1e-15);
    }

    #[test]
    fn surface_tension_relations() {
        let m = p();
        assert!((m.sigma12() - 72.8e-3).abs() < 1e-15);
        assert!((m.sigma - 3.0 * 72.8e-3 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        let w: ModelParams<f64> = ModelParams::new(1000.0, 1.3, 1e-3, 1e-5, 0.07, 1e-6, 1e-10, 100.0, (0.02, 0.05), Vec2::zero())
            .unwrap();
        assert!((w.solid_fluid_tension(1.0) - 0.02).abs() < 1e-15);
        assert!((w.solid_fluid_tension(-1.0) - 0.05).abs() < 1e-15);
        assert!((w.solid_fluid_tension(0.0) - 0.035).abs() < 1e-15);
        assert_eq!(m.solid_fluid_tension_derivs(0.4).0, 0.0);
    }

    #[test]
    fn mass_flux_table_value() {
        let j = p().mass_flux(Vec2::new(1.0, 0.0));
        assert!((j.x + 1.5226e-7).abs() < 1e-10, "{}", j.x);
        assert_eq!(j.y, 0.0);
        assert_eq!(p().mass_flux(Vec2::zero()), Vec2::new(0.0, 0.0));
    }

    #[test]
    fn mixture_energy_values_and_profile_integral() {
        let m = p();
        assert_eq!(m.mixture_energy_density(1.0, Vec2::zero()), 0.0);
        assert!((m.mixture_energy_density(0.0, Vec2::zero()) - m.sigma / (4.0 * m.eps)).abs() < 1e-6);
        // Equilibrium profile integrates to sigma_12.
        let eps = m.eps;
        let l = 20.0 * eps;
        let n = 20_000;
        let dx = 2.0 * l / n as f64;
        let mut e = 0.0;
        for i in 0..n {
            let x = -l + (i as f64 + 0.5) * dx;
            let s = x / (2f64.sqrt() * eps);
            let phi = s.tanh();
            let dphi = (1.0 - phi * phi) / (2f64.sqrt() * eps);
            e += m.mixture_energy_density(phi, Vec2::new(dphi, 0.0)) * dx;
        }
        assert!((e / m.sigma12() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn rejects_invalid() {
        assert!(ModelParams::new(1.0, 2.0, 1.0, 1.0, 0.1, 1.0, 1.0, 1.0, (0.0, 0.0), Vec2::zero()).is_err());
        assert!(ModelParams::new(2.0, 1.0, -1.0, 1.0, 0.1, 1.0, 1.0, 1.0, (0.0, 0.0), Vec2::zero()).is_err());
        assert!(StabParams::new(100.0, 0.0, 0.01).is_err());
    }

    proptest! {
        #[test]
        fn density_positive_and_c1(phi in -10.0f64..10.0) {
            let m = p();
            let (r, s, _) = m.density_derivs(phi);
            prop_assert!(r > 0.0);
            let h = 1e-6;
            let fd = (m.density(phi + h) - m.density(phi - h)) / (2.0 * h);
            prop_assert!((fd - s).abs() <= 1e-6 * (1.0 + s.abs()) + 1e-6);
        }

        #[test]
        fn viscosity_positive(phi in -100.0f64..100.0) {
            prop_assert!(p().viscosity(phi) > 0.0);
        }

        #[test]
        fn double_well_nonnegative_and_slope(phi in -5.0f64..5.0) {
            prop_assert!(double_well(phi) >= 0.0);
            let h = 1e-5;
            let fd = (double_well(phi + h) - double_well(phi - h)) / (2.0 * h);
            prop_assert!((fd - double_well_slope(phi)).abs() < 1e-7 * (1.0 + phi.abs().powi(3)));
            let fd2 = (double_well_slope(phi + h) - double_well_slope(phi - h)) / (2.0 * h);
            prop_assert!((fd2 - double_well_curvature(phi)).abs() < 1e-6 * (1.0 + phi * phi));
        }
    }
}
