//! Energy densities of the elastomer model and their analytic derivatives.
//!
//! The total energy of a state is
//!
//! ```text
//! E = int_Omega W(G) dx
//!   + int_Omega ( Lg(grad_x Q~ (grad phi)^-1, Q~) + f(Q~) ) det(grad phi) dx
//!   + sigma int_Gamma |Q~ - Q0|^2 dS
//! ```
//!
//! with `G = L^{-1/2} grad phi` and `L = a0 (Q~ + I/3)`. The gradient term is
//! evaluated through the perspective form `t Lg(A / t, Q)` with
//! `A = grad_x Q~ adj(grad phi)` and `t = det grad phi`, so no explicit inverse
//! of the deformation gradient is ever formed.

mod bulk;
mod convexity;
mod elastic;
mod ldg;

pub use bulk::{
    bulk_barrier, bulk_eval, bulk_quartic, bulk_total, surface_eval, surface_lipschitz_modulus,
    surface_rapini,
};
pub use convexity::{convexity_probe, midpoint_violation, ProbeReport, ProbeTarget};
pub use elastic::{
    elastic_eval, ogden_minors, ogden_polyconvex, trace_elastic, trace_elastic_via_g, ElasticEval,
};
pub use ldg::{
    coeff_grad_from_full, full_from_coeff, ldg_coeff, ldg_gradient_energy, ldg_invariants,
    pullback_coeff, pullback_gradient_density, CoeffGrad, GradQ, LdgEval, PullbackEval,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::QTensor;

/// Which growth condition the gradient energy must satisfy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthRegime {
    /// `kappa > 0` and `r > max(3, p / (p - 3))`.
    #[default]
    Supergrowth,
    /// Quadratic gradient energy is allowed (`r >= 2`, `kappa >= 0`).
    Quadratic,
}

/// Material and model constants.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyParams {
    /// Shear modulus of the trace-form elastic energy.
    pub mu: f64,
    /// Trace of the step-length tensor.
    pub a0: f64,
    /// Coefficient of the `|G|^p` term.
    pub alpha_coer: f64,
    pub p: f64,
    /// Coefficient of `|adj G|^{p/2}`.
    pub c_adj: f64,
    /// Coefficient of `(det G - 1)^2`.
    pub c_det: f64,
    pub kappa: f64,
    pub r_exp: f64,
    /// `L1..L4` of the multi-constant gradient energy.
    pub l: [f64; 4],
    pub a_t: f64,
    pub b: f64,
    pub c: f64,
    pub eps_barrier: f64,
    /// Optional `-eps_d ln(det F - delta0)` term; zero disables it.
    pub det_barrier: f64,
    pub delta0: f64,
    pub sigma: f64,
    pub q0_surface: QTensor,
    pub regime: GrowthRegime,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            mu: 1.0,
            a0: 3.0,
            alpha_coer: 0.0,
            p: 4.0,
            c_adj: 0.0,
            c_det: 0.0,
            kappa: 1e-4,
            r_exp: 6.0,
            l: [0.0, 0.0, 0.01, 0.0],
            a_t: -1.0,
            b: 2.0,
            c: 1.0,
            eps_barrier: 0.1,
            det_barrier: 0.0,
            delta0: 0.1,
            sigma: 0.0,
            q0_surface: QTensor::ZERO,
            regime: GrowthRegime::Supergrowth,
        }
    }
}

impl EnergyParams {
    /// `q = p r / (p + r)`.
    pub fn q_exponent(&self) -> f64 {
        self.p * self.r_exp / (self.p + self.r_exp)
    }

    /// Lower bound on `r` implied by `p`: `max(3, p / (p - 3))`.
    pub fn r_threshold(&self) -> f64 {
        (self.p / (self.p - 3.0)).max(3.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("mu", self.mu),
            ("a0", self.a0),
            ("alpha", self.alpha_coer),
            ("p", self.p),
            ("c_adj", self.c_adj),
            ("c_det", self.c_det),
            ("kappa", self.kappa),
            ("r", self.r_exp),
            ("a_t", self.a_t),
            ("b", self.b),
            ("c", self.c),
            ("eps_barrier", self.eps_barrier),
            ("det_barrier", self.det_barrier),
            ("delta0", self.delta0),
            ("sigma", self.sigma),
        ];
        for (k, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(k, format!("must be finite, got {v}")));
            }
        }
        if !(self.p > 3.0) {
            return Err(Error::config(
                "p",
                format!("requires p > 3, got {}", self.p),
            ));
        }
        if !(self.a0 > 0.0) {
            return Err(Error::config(
                "a0",
                format!("requires a0 > 0, got {}", self.a0),
            ));
        }
        for (k, v) in [
            ("mu", self.mu),
            ("alpha", self.alpha_coer),
            ("c_adj", self.c_adj),
            ("c_det", self.c_det),
        ] {
            if v < 0.0 {
                return Err(Error::config(k, format!("must be nonnegative, got {v}")));
            }
        }
        match self.regime {
            GrowthRegime::Supergrowth => {
                let thr = self.r_threshold();
                if !(self.r_exp > thr) {
                    return Err(Error::config(
                        "r",
                        format!(
                            "violates r > max{{3, p/(p-3)}} = {thr} (r = {}, p = {})",
                            self.r_exp, self.p
                        ),
                    ));
                }
                if !(self.kappa > 0.0) {
                    return Err(Error::config(
                        "kappa",
                        "supergrowth regime requires kappa > 0",
                    ));
                }
            }
            GrowthRegime::Quadratic => {
                if !(self.r_exp >= 2.0) {
                    return Err(Error::config(
                        "r",
                        format!("requires r >= 2, got {}", self.r_exp),
                    ));
                }
                if self.kappa < 0.0 {
                    return Err(Error::config("kappa", "requires kappa >= 0"));
                }
            }
        }
        if !(self.q_exponent() > 1.0) {
            return Err(Error::config(
                "r",
                format!("q = pr/(p+r) = {} must exceed 1", self.q_exponent()),
            ));
        }
        if !(self.delta0 > 0.0) {
            return Err(Error::config(
                "delta0",
                format!("requires delta0 > 0, got {}", self.delta0),
            ));
        }
        if !(self.eps_barrier > 0.0) {
            return Err(Error::config(
                "eps_barrier",
                format!("requires eps_barrier > 0, got {}", self.eps_barrier),
            ));
        }
        if self.det_barrier < 0.0 {
            return Err(Error::config("det_barrier", "must be nonnegative"));
        }
        if self.sigma < 0.0 {
            return Err(Error::config(
                "sigma",
                format!("requires sigma >= 0, got {}", self.sigma),
            ));
        }
        if !self.q0_surface.in_q_set(0.0) {
            return Err(Error::config(
                "q0",
                "anchoring tensor is outside the admissible set",
            ));
        }
        Ok(())
    }
}

/// Validated parameters plus derived constants (the bulk nonnegativity shift).
#[derive(Clone, Debug)]
pub struct Material {
    pub params: EnergyParams,
    bulk_shift: f64,
}

impl Material {
    pub fn new(params: EnergyParams) -> Result<Self> {
        params.validate()?;
        let bulk_shift = -bulk::bulk_minimum(&params).value;
        Ok(Material { params, bulk_shift })
    }

    /// Constant added to `quartic + barrier` so that the bulk density is nonnegative.
    pub fn bulk_shift(&self) -> f64 {
        self.bulk_shift
    }

    /// Uniaxial order parameter of the bulk minimum (positive branch).
    pub fn preferred_order(&self) -> f64 {
        bulk::bulk_minimum(&self.params).s
    }
}

/// Per-term energy values. `total = elastic + ldg_gradient + bulk + sigma * surface`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub ldg_gradient: f64,
    pub bulk: f64,
    /// Unweighted surface integral.
    pub surface: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(elastic: f64, ldg_gradient: f64, bulk: f64, surface: f64, sigma: f64) -> Self {
        EnergyBreakdown {
            elastic,
            ldg_gradient,
            bulk,
            surface,
            total: elastic + ldg_gradient + bulk + sigma * surface,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_validate() {
        let p = EnergyParams::default();
        p.validate().unwrap();
        assert_eq!(p.r_threshold(), 4.0);
        assert!((p.q_exponent() - 2.4).abs() < 1e-15);
    }

    #[test]
    fn growth_condition_rejected() {
        let p = EnergyParams {
            r_exp: 3.0,
            ..Default::default()
        };
        match p.validate() {
            Err(Error::Config { key, message }) => {
                assert_eq!(key, "r");
                assert!(message.contains("max{3, p/(p-3)} = 4"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let p = EnergyParams {
            r_exp: 3.0,
            regime: GrowthRegime::Quadratic,
            ..Default::default()
        };
        p.validate().unwrap();
    }

    #[test]
    fn invalid_constants_rejected() {
        for p in [
            EnergyParams {
                p: 3.0,
                ..Default::default()
            },
            EnergyParams {
                delta0: 0.0,
                ..Default::default()
            },
            EnergyParams {
                eps_barrier: 0.0,
                ..Default::default()
            },
            EnergyParams {
                sigma: -1.0,
                ..Default::default()
            },
            EnergyParams {
                a0: -1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(p.validate(), Err(Error::Config { .. })));
        }
    }

    #[test]
    fn breakdown_total() {
        let b = EnergyBreakdown::new(1.0, 2.0, 3.0, 4.0, 0.5);
        assert_eq!(b.total, 8.0);
    }
}
