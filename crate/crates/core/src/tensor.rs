//! Small-tensor algebra for order tensors, step-length tensors and effective
//! deformation tensors.
//!
//! # Order-tensor basis
//!
//! A [`QTensor`] stores the five coefficients of a symmetric traceless 3x3
//! matrix in the Frobenius-orthonormal basis
//!
//! ```text
//! E1 = diag(1, -1, 0) / sqrt(2)
//! E2 = diag(-1, -1, 2) / sqrt(6)
//! E3 = (e1 (x) e2 + e2 (x) e1) / sqrt(2)
//! E4 = (e1 (x) e3 + e3 (x) e1) / sqrt(2)
//! E5 = (e2 (x) e3 + e3 (x) e2) / sqrt(2)
//! ```
//!
//! so that `|Q|_F` equals the Euclidean norm of the coefficient vector and
//! `<A, Q>_F = sum_a a_a q_a` for any two order tensors.
//!
//! # Eigenvalue ordering
//!
//! [`sym_eig3`] returns eigenvalues in ascending order. The order parameters
//! returned by [`QTensor::order_params`] use `l1 >= l2 >= l3` (largest first),
//! i.e. `s = l1 - l3` and `r = l2 - l3`, which gives the canonical
//! representation with `s >= r >= 0`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

const INV_SQRT6: f64 = 0.408_248_290_463_863_f64;

/// Lower end of the admissible eigenvalue interval.
pub const LAMBDA_FLOOR: f64 = -1.0 / 3.0;
/// Upper end of the admissible eigenvalue interval.
pub const LAMBDA_CEIL: f64 = 2.0 / 3.0;
/// Round-off guard used for the strict inequality `lambda_min > -1/3`.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

/// Relative eigenvalue gap below which the closed-form solver hands over to Jacobi.
const CARDANO_GAP: f64 = 1e-4;

/// The five basis matrices, in coefficient order.
pub fn q_basis() -> [Mat3; 5] {
    let mut out = [Mat3::zeros(); 5];
    for (a, m) in out.iter_mut().enumerate() {
        let mut c = [0.0; 5];
        c[a] = 1.0;
        *m = QTensor(c).matrix();
    }
    out
}

/// Frobenius projection of an arbitrary 3x3 matrix onto the basis.
///
/// For a gradient `G = df/dM` taken entrywise, `project(G)` is the gradient with
/// respect to the five coefficients.
#[inline]
pub fn project(m: &Mat3) -> [f64; 5] {
    [
        (m[(0, 0)] - m[(1, 1)]) * FRAC_1_SQRT_2,
        (2.0 * m[(2, 2)] - m[(0, 0)] - m[(1, 1)]) * INV_SQRT6,
        (m[(0, 1)] + m[(1, 0)]) * FRAC_1_SQRT_2,
        (m[(0, 2)] + m[(2, 0)]) * FRAC_1_SQRT_2,
        (m[(1, 2)] + m[(2, 1)]) * FRAC_1_SQRT_2,
    ]
}

/// Symmetric traceless order tensor.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QTensor(pub [f64; 5]);

/// Biaxial order parameters `(s, r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderParams {
    pub s: f64,
    pub r: f64,
}

impl QTensor {
    pub const ZERO: QTensor = QTensor([0.0; 5]);

    pub fn from_coeffs(c: [f64; 5]) -> Self {
        QTensor(c)
    }

    pub fn coeffs(&self) -> [f64; 5] {
        self.0
    }

    /// Reconstructs the 3x3 matrix. Exactly symmetric; the trace vanishes up to rounding.
    #[inline]
    pub fn matrix(&self) -> Mat3 {
        let [c1, c2, c3, c4, c5] = self.0;
        let d0 = c1 * FRAC_1_SQRT_2 - c2 * INV_SQRT6;
        let d1 = -c1 * FRAC_1_SQRT_2 - c2 * INV_SQRT6;
        let d2 = 2.0 * c2 * INV_SQRT6;
        let o01 = c3 * FRAC_1_SQRT_2;
        let o02 = c4 * FRAC_1_SQRT_2;
        let o12 = c5 * FRAC_1_SQRT_2;
        Mat3::new(d0, o01, o02, o01, d1, o12, o02, o12, d2)
    }

    /// Builds a tensor from a symmetric traceless matrix.
    pub fn from_matrix(m: &Mat3) -> Result<Self> {
        let scale = m.norm().max(1.0);
        let asym = (m - m.transpose()).norm();
        if asym > 1e-12 * scale {
            return Err(Error::Precondition(format!(
                "matrix is not symmetric (|M - M^T| = {asym:e})"
            )));
        }
        if m.trace().abs() > 1e-12 * scale {
            return Err(Error::Precondition(format!(
                "matrix is not traceless (tr = {:e})",
                m.trace()
            )));
        }
        Ok(QTensor(project(m)))
    }

    /// `Q = s (n (x) n - I/3)`.
    pub fn uniaxial(s: f64, n: &Vec3) -> Result<Self> {
        check_unit(n, "director")?;
        let m = s * (n * n.transpose() - Mat3::identity() / 3.0);
        Ok(QTensor(project(&m)))
    }

    /// `Q = r (e1 (x) e1 - I/3) + s (e2 (x) e2 - I/3)` for an orthonormal pair `e1, e2`.
    pub fn biaxial(r: f64, s: f64, e1: &Vec3, e2: &Vec3) -> Result<Self> {
        check_unit(e1, "e1")?;
        check_unit(e2, "e2")?;
        if e1.dot(e2).abs() > 1e-10 {
            return Err(Error::Precondition(format!(
                "frame is not orthogonal (e1.e2 = {:e})",
                e1.dot(e2)
            )));
        }
        let third = Mat3::identity() / 3.0;
        let m = r * (e1 * e1.transpose() - third) + s * (e2 * e2.transpose() - third);
        Ok(QTensor(project(&m)))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &QTensor) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn add(&self, other: &QTensor) -> QTensor {
        let mut c = self.0;
        for (x, y) in c.iter_mut().zip(other.0) {
            *x += y;
        }
        QTensor(c)
    }

    pub fn sub(&self, other: &QTensor) -> QTensor {
        let mut c = self.0;
        for (x, y) in c.iter_mut().zip(other.0) {
            *x -= y;
        }
        QTensor(c)
    }

    pub fn scale(&self, t: f64) -> QTensor {
        QTensor(self.0.map(|c| c * t))
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 3] {
        sym_eigenvalues(&self.matrix())
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues()[2]
    }

    /// Canonical `(s, r)` with `l1 >= l2 >= l3`: `s = l1 - l3`, `r = l2 - l3`.
    pub fn order_params(&self) -> OrderParams {
        let [l3, l2, l1] = self.eigenvalues();
        OrderParams {
            s: l1 - l3,
            r: l2 - l3,
        }
    }

    /// Both published expressions for each parameter:
    /// `(l1 - l3, 2 l1 + l2)` for `s` and `(l2 - l3, l1 + 2 l2)` for `r`.
    /// They agree whenever the tensor is traceless.
    pub fn order_param_formulas(&self) -> ([f64; 2], [f64; 2]) {
        let [l3, l2, l1] = self.eigenvalues();
        ([l1 - l3, 2.0 * l1 + l2], [l2 - l3, l1 + 2.0 * l2])
    }

    /// Membership in the admissible set `-1/3 < lambda_min <= lambda_max <= 2/3`,
    /// tightened on the lower side by `margin`.
    pub fn in_q_set(&self, margin: f64) -> bool {
        let [lo, _, hi] = self.eigenvalues();
        let gap = lo - LAMBDA_FLOOR;
        gap > ADMISSIBILITY_TOL && gap >= margin && hi <= LAMBDA_CEIL + ADMISSIBILITY_TOL
    }

    pub fn step_tensor(&self, a0: f64) -> Result<StepTensor> {
        StepTensor::new(self, a0)
    }
}

fn check_unit(v: &Vec3, name: &str) -> Result<()> {
    if (v.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!(
            "{name} must be a unit vector (|{name}| = {})",
            v.norm()
        )));
    }
    Ok(())
}

/// Step-length tensor `L = a0 (Q + I/3)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepTensor {
    pub m: Mat3,
    pub a0: f64,
}

impl StepTensor {
    pub fn new(q: &QTensor, a0: f64) -> Result<Self> {
        if !(a0 > 0.0) || !a0.is_finite() {
            return Err(Error::Precondition(format!(
                "a0 must be positive, got {a0}"
            )));
        }
        Ok(StepTensor {
            m: a0 * (q.matrix() + Mat3::identity() / 3.0),
            a0,
        })
    }

    /// Recovers the generating order tensor `L / a0 - I/3`.
    pub fn order_tensor(&self) -> QTensor {
        QTensor(project(&(self.m / self.a0)))
    }

    pub fn det(&self) -> f64 {
        det3(&self.m)
    }

    pub fn lambda_min(&self) -> f64 {
        sym_eigenvalues(&self.m)[0]
    }

    /// `L^{-1/2}`.
    pub fn inv_sqrt(&self) -> Result<Mat3> {
        inv_sqrt(&self.m)
    }

    /// `L^{1/2}`.
    pub fn sqrt(&self) -> Result<Mat3> {
        spd_sqrt(&self.m)
    }
}

/// Result of [`sym_eig3`]: ascending eigenvalues and matching orthonormal eigenvector columns.
#[derive(Clone, Copy, Debug)]
pub struct SymEigen {
    pub values: [f64; 3],
    pub vectors: Mat3,
}

impl SymEigen {
    pub fn reconstruct(&self) -> Mat3 {
        let d = Mat3::from_diagonal(&Vec3::new(self.values[0], self.values[1], self.values[2]));
        self.vectors * d * self.vectors.transpose()
    }

    /// `V f(Lambda) V^T`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat3 {
        let d = Mat3::from_diagonal(&Vec3::new(
            f(self.values[0]),
            f(self.values[1]),
            f(self.values[2]),
        ));
        let m = self.vectors * d * self.vectors.transpose();
        (m + m.transpose()) * 0.5
    }
}

#[inline]
pub fn det3(m: &Mat3) -> f64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// Cofactor matrix, `cof(M)_{ij} = d det M / d M_{ij}`. Column `k` equals the
/// cross product of the other two columns of `M` in cyclic order.
#[inline]
pub fn cofactor(m: &Mat3) -> Mat3 {
    let f1 = m.column(0).into_owned();
    let f2 = m.column(1).into_owned();
    let f3 = m.column(2).into_owned();
    Mat3::from_columns(&[f2.cross(&f3), f3.cross(&f1), f1.cross(&f2)])
}

#[inline]
pub fn adjugate(m: &Mat3) -> Mat3 {
    cofactor(m).transpose()
}

/// `(M, adj M, det M)`.
pub fn matrix_minors(m: &Mat3) -> (Mat3, Mat3, f64) {
    (*m, adjugate(m), det3(m))
}

/// Gradient of `<U, cof(F)>_F` with respect to `F`.
#[inline]
pub fn cofactor_vjp(f: &Mat3, u: &Mat3) -> Mat3 {
    let f1 = f.column(0).into_owned();
    let f2 = f.column(1).into_owned();
    let f3 = f.column(2).into_owned();
    let u1 = u.column(0).into_owned();
    let u2 = u.column(1).into_owned();
    let u3 = u.column(2).into_owned();
    Mat3::from_columns(&[
        u2.cross(&f3) + f2.cross(&u3),
        u3.cross(&f1) + f3.cross(&u1),
        u1.cross(&f2) + f1.cross(&u2),
    ])
}

/// Inverse of a symmetric positive definite matrix through its adjugate.
#[inline]
pub fn spd_inverse(m: &Mat3) -> Result<(Mat3, f64)> {
    let det = det3(m);
    if !(det > 0.0) {
        return Err(Error::Singular {
            lambda_min: sym_eigenvalues(m)[0],
        });
    }
    Ok((adjugate(m) / det, det))
}

fn symmetry_check(s: &Mat3) -> Result<()> {
    let scale = s.norm().max(f64::MIN_POSITIVE);
    let asym = (s - s.transpose()).norm();
    if asym > 1e-12 * scale.max(1.0) {
        return Err(Error::Precondition(format!(
            "matrix is not symmetric (|S - S^T| = {asym:e})"
        )));
    }
    Ok(())
}

/// Ascending eigenvalues of a symmetric 3x3 matrix (symmetry is assumed, not checked).
pub fn sym_eigenvalues(s: &Mat3) -> [f64; 3] {
    match cardano_values(s) {
        Some(v) => v,
        None => jacobi(s).values,
    }
}

/// Trigonometric closed form. Returns `None` when two eigenvalues are too close
/// for `acos` to resolve them accurately.
fn cardano_values(s: &Mat3) -> Option<[f64; 3]> {
    let p1 = s[(0, 1)].powi(2) + s[(0, 2)].powi(2) + s[(1, 2)].powi(2);
    let q = s.trace() / 3.0;
    let d0 = s[(0, 0)] - q;
    let d1 = s[(1, 1)] - q;
    let d2 = s[(2, 2)] - q;
    let p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    if p2 == 0.0 {
        return Some([q, q, q]);
    }
    if p1 == 0.0 {
        let mut v = [s[(0, 0)], s[(1, 1)], s[(2, 2)]];
        v.sort_by(|a, b| a.total_cmp(b));
        return Some(v);
    }
    let p = (p2 / 6.0).sqrt();
    let b = (s - q * Mat3::identity()) / p;
    let r = (det3(&b) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let mid = 3.0 * q - hi - lo;
    let gap = (hi - mid).min(mid - lo);
    if gap < CARDANO_GAP * p {
        return None;
    }
    Some([lo, mid, hi])
}

fn null_vector(s: &Mat3, lambda: f64) -> Vec3 {
    let a = s - lambda * Mat3::identity();
    let r0 = a.row(0).transpose();
    let r1 = a.row(1).transpose();
    let r2 = a.row(2).transpose();
    let cands = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = cands
        .iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .copied()
        .unwrap_or_else(Vec3::zeros);
    best.normalize()
}

/// Symmetric eigen-decomposition with ascending eigenvalues and orthonormal eigenvectors.
///
/// Uses the trigonometric closed form when the spectrum is well separated and
/// cyclic Jacobi otherwise (near-uniaxial states have a double eigenvalue).
pub fn sym_eig3(s: &Mat3) -> Result<SymEigen> {
    symmetry_check(s)?;
    let sym = (s + s.transpose()) * 0.5;
    if let Some(values) = cardano_values(&sym) {
        if values[0] != values[2] {
            let v0 = null_vector(&sym, values[0]);
            let v2 = null_vector(&sym, values[2]);
            let v2 = (v2 - v0 * v0.dot(&v2)).normalize();
            let v1 = v2.cross(&v0);
            let vectors = Mat3::from_columns(&[v0, v1, v2]);
            let eig = SymEigen { values, vectors };
            let scale = sym.norm();
            let resid = (0..3)
                .map(|i| (sym * vectors.column(i) - values[i] * vectors.column(i)).norm())
                .fold(0.0, f64::max);
            if resid <= 1e-12 * scale && vectors.iter().all(|x| x.is_finite()) {
                return Ok(eig);
            }
        }
    }
    Ok(jacobi(&sym))
}

/// Cyclic Jacobi rotations, sorted ascending on exit.
fn jacobi(s: &Mat3) -> SymEigen {
    let mut a = *s;
    let mut v = Mat3::identity();
    for _sweep in 0..64 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let diag = a[(0, 0)].powi(2) + a[(1, 1)].powi(2) + a[(2, 2)].powi(2);
        if off <= f64::EPSILON * f64::EPSILON * diag * 1e-4 || off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let sn = t * c;
            let mut rot = Mat3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = sn;
            rot[(q, p)] = -sn;
            a = rot.transpose() * a * rot;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    SymEigen {
        values: [
            a[(idx[0], idx[0])],
            a[(idx[1], idx[1])],
            a[(idx[2], idx[2])],
        ],
        vectors: Mat3::from_columns(&[v.column(idx[0]), v.column(idx[1]), v.column(idx[2])]),
    }
}

/// `M^{-1/2}` for symmetric positive definite `M`.
pub fn inv_sqrt(m: &Mat3) -> Result<Mat3> {
    let eig = sym_eig3(m)?;
    if !(eig.values[0] > 0.0) {
        return Err(Error::Singular {
            lambda_min: eig.values[0],
        });
    }
    Ok(eig.map(|l| 1.0 / l.sqrt()))
}

/// `M^{1/2}` for symmetric positive definite `M`.
pub fn spd_sqrt(m: &Mat3) -> Result<Mat3> {
    let eig = sym_eig3(m)?;
    if !(eig.values[0] > 0.0) {
        return Err(Error::Singular {
            lambda_min: eig.values[0],
        });
    }
    Ok(eig.map(f64::sqrt))
}

/// Effective deformation `G = L^{-1/2} F`.
pub fn effective_deformation(f: &Mat3, l: &StepTensor) -> Result<Mat3> {
    let det_f = det3(f);
    if !(det_f > 0.0) {
        return Err(Error::Orientation { det: det_f });
    }
    Ok(l.inv_sqrt()? * f)
}

/// Rotation about a unit axis (Rodrigues).
pub fn rotation(axis: &Vec3, angle: f64) -> Mat3 {
    let k = axis.normalize();
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + angle.sin() * kx + (1.0 - angle.cos()) * kx * kx
}
