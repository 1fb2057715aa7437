use crate::error::{Error, Result};
use crate::tensor::{cofactor, cofactor_vjp, det3, spd_inverse, Mat3, StepTensor};

use super::EnergyParams;

/// `mu (|G|^2 - 1)` evaluated as `mu tr(F^T L^{-1} F - I/3)` without square roots.
pub fn trace_elastic(f: &Mat3, l: &StepTensor, mu: f64) -> Result<f64> {
    let (linv, _) = spd_inverse(&l.m)?;
    Ok(mu * ((f.transpose() * linv * f).trace() - 1.0))
}

/// Same quantity computed through `G = L^{-1/2} F`.
pub fn trace_elastic_via_g(f: &Mat3, l: &StepTensor, mu: f64) -> Result<f64> {
    let g = crate::tensor::effective_deformation(f, l)?;
    Ok(mu * (g.norm_squared() - 1.0))
}

/// Polyconvex part `alpha |G|^p + c_adj |adj G|^{p/2} + c_det (det G - 1)^2`.
pub fn ogden_polyconvex(g: &Mat3, params: &EnergyParams) -> Result<f64> {
    let d = det3(g);
    if !(d > 0.0) {
        return Err(Error::Orientation { det: d });
    }
    let adj = cofactor(g);
    Ok(ogden_minors(g, &adj, d, params))
}

/// The polyconvex part as a function of independent minors `(X, Y, z)`.
pub fn ogden_minors(x: &Mat3, y: &Mat3, z: f64, params: &EnergyParams) -> f64 {
    let p = params.p;
    params.alpha_coer * x.norm_squared().powf(0.5 * p)
        + params.c_adj * y.norm_squared().powf(0.25 * p)
        + params.c_det * (z - 1.0) * (z - 1.0)
}

/// Elastic density and its partial derivatives in `F` and in `L`.
#[derive(Clone, Copy, Debug)]
pub struct ElasticEval {
    pub value: f64,
    pub d_f: Mat3,
    pub d_l: Mat3,
}

/// Full elastic density `mu(|G|^2 - 1) + ogden(G) - eps_d ln(det F - delta0)`
/// with `G = L^{-1/2} F`, expressed through the invariants
/// `|G|^2 = tr(F^T L^{-1} F)`, `|adj G|^2 = <cof F, L cof F> / det L` and
/// `det G = det F / sqrt(det L)`.
pub fn elastic_eval(f: &Mat3, l: &Mat3, params: &EnergyParams) -> Result<ElasticEval> {
    let det_f = det3(f);
    if !(det_f > 0.0) {
        return Err(Error::Orientation { det: det_f });
    }
    let (linv, det_l) = spd_inverse(l)?;
    let p = params.p;

    let linv_f = linv * f;
    let a = (f.transpose() * linv_f).trace();
    let da_df = 2.0 * linv_f;
    let da_dl = -(linv_f * linv_f.transpose());

    let mut coef_a = params.mu;
    let mut value = params.mu * (a - 1.0);
    if params.alpha_coer != 0.0 {
        value += params.alpha_coer * a.powf(0.5 * p);
        coef_a += params.alpha_coer * 0.5 * p * a.powf(0.5 * p - 1.0);
    }
    let mut d_f = coef_a * da_df;
    let mut d_l = coef_a * da_dl;

    let needs_cof = params.c_adj != 0.0 || params.c_det != 0.0 || params.det_barrier != 0.0;
    if needs_cof {
        let cof = cofactor(f);
        if params.c_adj != 0.0 {
            let l_cof = l * cof;
            let b = cof.dot(&l_cof) / det_l;
            if b > 0.0 {
                value += params.c_adj * b.powf(0.25 * p);
                let coef = params.c_adj * 0.25 * p * b.powf(0.25 * p - 1.0);
                d_f += coef * cofactor_vjp(f, &(2.0 * l_cof)) / det_l;
                d_l += coef * (cof * cof.transpose() / det_l - b * linv);
            }
        }
        if params.c_det != 0.0 {
            let sq = det_l.sqrt();
            let d = det_f / sq;
            value += params.c_det * (d - 1.0) * (d - 1.0);
            let coef = 2.0 * params.c_det * (d - 1.0);
            d_f += coef * cof / sq;
            d_l += coef * (-0.5 * d) * linv;
        }
        if params.det_barrier != 0.0 {
            let gap = det_f - params.delta0;
            if !(gap > 0.0) {
                return Err(Error::Infeasible {
                    location: "elastic density".into(),
                    detail: format!("det F = {det_f} <= delta0 = {}", params.delta0),
                });
            }
            value -= params.det_barrier * gap.ln();
            d_f -= params.det_barrier / gap * cof;
        }
    }
    Ok(ElasticEval { value, d_f, d_l })
}
