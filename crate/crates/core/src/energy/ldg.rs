use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::tensor::{adjugate, cofactor, cofactor_vjp, det3, project, Mat3, QTensor};

use super::EnergyParams;

/// Full spatial gradient of an order tensor, `g[i][j][k] = d Q_ij / d y_k`.
pub type GradQ = [[[f64; 3]; 3]; 3];

/// Gradient of the five order-tensor coefficients, `P[(a, k)] = d q_a / d y_k`.
pub type CoeffGrad = SMatrix<f64, 5, 3>;

const GRAD_SYM_TOL: f64 = 1e-10;

pub fn coeff_grad_from_full(g: &GradQ) -> Result<CoeffGrad> {
    let mut out = CoeffGrad::zeros();
    for k in 0..3 {
        let m = Mat3::from_fn(|i, j| g[i][j][k]);
        let asym = (m - m.transpose()).abs().max();
        if asym > GRAD_SYM_TOL {
            return Err(Error::Precondition(format!(
                "gradQ not symmetric in (i,j) for k = {k} (defect {asym:e})"
            )));
        }
        if m.trace().abs() > GRAD_SYM_TOL {
            return Err(Error::Precondition(format!(
                "gradQ not traceless for k = {k}"
            )));
        }
        let c = project(&m);
        for a in 0..5 {
            out[(a, k)] = c[a];
        }
    }
    Ok(out)
}

pub fn full_from_coeff(p: &CoeffGrad) -> GradQ {
    let mut g = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        let m = column_matrix(p, k);
        for i in 0..3 {
            for j in 0..3 {
                g[i][j][k] = m[(i, j)];
            }
        }
    }
    g
}

#[inline]
fn column_matrix(p: &CoeffGrad, k: usize) -> Mat3 {
    QTensor([p[(0, k)], p[(1, k)], p[(2, k)], p[(3, k)], p[(4, k)]]).matrix()
}

#[inline]
fn set_column(p: &mut CoeffGrad, k: usize, c: [f64; 5]) {
    for a in 0..5 {
        p[(a, k)] = c[a];
    }
}

/// `(I1, I2, I3, I4)` from the coefficient gradient, plus the slices needed for derivatives.
struct Invariants {
    i: [f64; 4],
    slices: [Mat3; 3],
    v: [f64; 3],
    gram: Mat3,
}

fn invariants(p: &CoeffGrad, q: &Mat3) -> Invariants {
    let slices = [
        column_matrix(p, 0),
        column_matrix(p, 1),
        column_matrix(p, 2),
    ];
    let mut v = [0.0; 3];
    for (i, vi) in v.iter_mut().enumerate() {
        *vi = (0..3).map(|j| slices[j][(i, j)]).sum();
    }
    let i1 = v.iter().map(|x| x * x).sum();
    let mut i2 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                i2 += slices[j][(i, k)] * slices[k][(i, j)];
            }
        }
    }
    let i3 = p.norm_squared();
    let gram = p.transpose() * p;
    let i4 = q.dot(&gram);
    Invariants {
        i: [i1, i2, i3, i4],
        slices,
        v,
        gram,
    }
}

pub fn ldg_invariants(grad: &GradQ, q: &QTensor) -> Result<[f64; 4]> {
    let p = coeff_grad_from_full(grad)?;
    Ok(invariants(&p, &q.matrix()).i)
}

pub fn ldg_gradient_energy(grad: &GradQ, q: &QTensor, params: &EnergyParams) -> Result<f64> {
    let p = coeff_grad_from_full(grad)?;
    Ok(ldg_coeff(&p, q, params).value)
}

/// Gradient energy density with derivatives in the coefficient gradient and in `Q`.
#[derive(Clone, Copy, Debug)]
pub struct LdgEval {
    pub value: f64,
    pub d_p: CoeffGrad,
    pub d_q: [f64; 5],
}

pub fn ldg_coeff(p: &CoeffGrad, q: &QTensor, params: &EnergyParams) -> LdgEval {
    let qm = q.matrix();
    let inv = invariants(p, &qm);
    let [l1, l2, l3, l4] = params.l;
    let i3 = inv.i[2];
    let mut value = l1 * inv.i[0] + l2 * inv.i[1] + l3 * i3 + l4 * inv.i[3];
    let mut d_p = CoeffGrad::zeros();
    let mut coef_i3 = l3;
    if params.kappa != 0.0 && i3 > 0.0 {
        let half_r = 0.5 * params.r_exp;
        value += params.kappa * i3.powf(half_r);
        coef_i3 += params.kappa * half_r * i3.powf(half_r - 1.0);
    }
    d_p += (2.0 * coef_i3) * p;

    if l1 != 0.0 || l2 != 0.0 {
        for k in 0..3 {
            let mut dm = Mat3::zeros();
            if l1 != 0.0 {
                for i in 0..3 {
                    dm[(i, k)] += 2.0 * l1 * inv.v[i];
                }
            }
            if l2 != 0.0 {
                for i in 0..3 {
                    for j in 0..3 {
                        dm[(i, j)] += 2.0 * l2 * inv.slices[j][(i, k)];
                    }
                }
            }
            let c = project(&dm);
            let mut col = [0.0; 5];
            for a in 0..5 {
                col[a] = d_p[(a, k)] + c[a];
            }
            set_column(&mut d_p, k, col);
        }
    }

    let mut d_q = [0.0; 5];
    if l4 != 0.0 {
        d_p += (2.0 * l4) * (p * qm);
        let g = project(&inv.gram);
        for a in 0..5 {
            d_q[a] = l4 * g[a];
        }
    }
    LdgEval { value, d_p, d_q }
}

/// Perspective density `t Lg(A_c / t, Q)` with derivatives.
#[derive(Clone, Copy, Debug)]
pub struct PullbackEval {
    pub value: f64,
    /// Derivative in the reference coefficient gradient `D`.
    pub d_d: CoeffGrad,
    /// Derivative in the deformation gradient.
    pub d_f: Mat3,
    pub d_q: [f64; 5],
}

/// `t Lg(D adj F / t, Q)` with `t = det F`, `D = grad_x q`.
pub fn pullback_coeff(
    d: &CoeffGrad,
    f: &Mat3,
    q: &QTensor,
    params: &EnergyParams,
) -> Result<PullbackEval> {
    let t = det3(f);
    if !(t >= params.delta0) {
        return Err(Error::Infeasible {
            location: "gradient density".into(),
            detail: format!("det = {t} < delta0 = {}", params.delta0),
        });
    }
    let adj = adjugate(f);
    let a_c = d * adj;
    let p = a_c / t;
    let ev = ldg_coeff(&p, q, params);
    let g = ev.d_p;
    let d_t = ev.value - g.dot(&p);
    let d_d = g * adj.transpose();
    let k = d.transpose() * g;
    let d_f = cofactor_vjp(f, &k.transpose()) + d_t * cofactor(f);
    let mut d_q = ev.d_q;
    for x in d_q.iter_mut() {
        *x *= t;
    }
    Ok(PullbackEval {
        value: t * ev.value,
        d_d,
        d_f,
        d_q,
    })
}

/// Lagrangian gradient energy density for reference gradient `a` and deformation gradient `b`.
pub fn pullback_gradient_density(
    a: &GradQ,
    b: &Mat3,
    q: &QTensor,
    params: &EnergyParams,
) -> Result<f64> {
    let d = coeff_grad_from_full(a)?;
    Ok(pullback_coeff(&d, b, q, params)?.value)
}
