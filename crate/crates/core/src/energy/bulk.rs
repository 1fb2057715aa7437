use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{adjugate, det3, project, Mat3, QTensor};

use super::{EnergyParams, Material};

pub fn bulk_quartic(q: &QTensor, params: &EnergyParams) -> f64 {
    let m = q.matrix();
    let m2 = m * m;
    quartic_from_traces(params, m2.trace(), m.dot(&m2), m2.norm_squared())
}

#[inline]
fn quartic_from_traces(params: &EnergyParams, t2: f64, t3: f64, t4: f64) -> f64 {
    0.5 * params.a_t * t2 - params.b / 3.0 * t3 + 0.25 * params.c * t4
}

/// `Q + I/3`, or the infeasibility error when it is not positive definite.
fn shifted(q: &QTensor) -> Result<(Mat3, f64)> {
    let m = q.matrix() + Mat3::identity() / 3.0;
    let m00 = m[(0, 0)];
    let minor = m00 * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let det = det3(&m);
    if m00 > 0.0 && minor > 0.0 && det > 0.0 {
        Ok((m, det))
    } else {
        Err(Error::InfeasibleOrder {
            lambda_min: q.lambda_min(),
        })
    }
}

/// `-eps ln(27 det(Q + I/3))`.
pub fn bulk_barrier(q: &QTensor, params: &EnergyParams) -> Result<f64> {
    let (_, det) = shifted(q)?;
    Ok(-params.eps_barrier * (27.0 * det).ln())
}

/// Quartic plus barrier plus the nonnegativity shift of `material`.
pub fn bulk_total(q: &QTensor, material: &Material) -> Result<f64> {
    Ok(bulk_eval(q, material)?.0)
}

/// [`bulk_total`] together with its coefficient gradient.
pub fn bulk_eval(q: &QTensor, material: &Material) -> Result<(f64, [f64; 5])> {
    let params = &material.params;
    let (shifted_m, det) = shifted(q)?;
    let m = q.matrix();
    let m2 = m * m;
    let m3 = m2 * m;
    let value = quartic_from_traces(params, m2.trace(), m.dot(&m2), m2.norm_squared())
        - params.eps_barrier * (27.0 * det).ln()
        + material.bulk_shift();
    let inv = adjugate(&shifted_m) / det;
    let g = params.a_t * m - params.b * m2 + params.c * m3 - params.eps_barrier * inv;
    Ok((value, project(&g)))
}

/// Unshifted bulk density as a function of the eigenvalues `(x, y, -x-y)`.
fn bulk_eigen(params: &EnergyParams, x: f64, y: f64) -> f64 {
    let z = -x - y;
    let lam = [x, y, z];
    if lam.iter().any(|&l| l + 1.0 / 3.0 <= 0.0) {
        return f64::INFINITY;
    }
    let t2: f64 = lam.iter().map(|l| l * l).sum();
    let t3: f64 = lam.iter().map(|l| l * l * l).sum();
    let t4: f64 = lam.iter().map(|l| l.powi(4)).sum();
    let det: f64 = lam.iter().map(|l| l + 1.0 / 3.0).product();
    quartic_from_traces(params, t2, t3, t4) - params.eps_barrier * (27.0 * det).ln()
}

fn bulk_uniaxial(params: &EnergyParams, s: f64) -> f64 {
    bulk_eigen(params, 2.0 * s / 3.0, -s / 3.0)
}

pub(super) struct BulkMinimum {
    pub value: f64,
    /// Uniaxial order parameter of the best uniaxial point.
    pub s: f64,
}

const SCAN_POINTS: usize = 20_000;
const BIAXIAL_SAMPLES: usize = 20_000;

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo < 1e-14 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Global minimum estimate of quartic plus barrier: uniaxial scan with golden
/// refinement, then seeded biaxial sampling polished by a compass search.
pub(super) fn bulk_minimum(params: &EnergyParams) -> BulkMinimum {
    let (lo, hi) = (-0.5, 1.0);
    let ds = (hi - lo) / SCAN_POINTS as f64;
    let mut best_i = 1;
    let mut best_v = f64::INFINITY;
    for i in 1..SCAN_POINTS {
        let v = bulk_uniaxial(params, lo + i as f64 * ds);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let s_lo = lo + (best_i - 1) as f64 * ds;
    let s_hi = lo + (best_i + 1) as f64 * ds;
    let s = golden_min(|s| bulk_uniaxial(params, s), s_lo, s_hi);
    let uni = bulk_uniaxial(params, s).min(best_v);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b01c);
    let mut start = (2.0 * s / 3.0, -s / 3.0);
    let mut start_v = uni;
    for _ in 0..BIAXIAL_SAMPLES {
        let x = rng.random_range(-1.0 / 3.0..2.0 / 3.0);
        let y = rng.random_range(-1.0 / 3.0..2.0 / 3.0);
        let v = bulk_eigen(params, x, y);
        if v < start_v {
            start_v = v;
            start = (x, y);
        }
    }
    let mut step = 1e-2;
    while step > 1e-13 {
        let mut moved = false;
        for (dx, dy) in [
            (1.0, 0.0),
            (-1.0, 0.0),
            (0.0, 1.0),
            (0.0, -1.0),
            (1.0, -1.0),
            (-1.0, 1.0),
        ] {
            let trial = (start.0 + step * dx, start.1 + step * dy);
            let v = bulk_eigen(params, trial.0, trial.1);
            if v < start_v {
                start_v = v;
                start = trial;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    BulkMinimum {
        value: uni.min(start_v),
        s,
    }
}

pub fn surface_rapini(qb: &QTensor, params: &EnergyParams) -> f64 {
    let d = qb.sub(&params.q0_surface);
    d.dot(&d)
}

/// Surface density and its coefficient gradient.
#[inline]
pub fn surface_eval(qb: &QTensor, q0: &QTensor) -> (f64, [f64; 5]) {
    let d = qb.sub(q0);
    (d.dot(&d), d.scale(2.0).0)
}

/// Sampled modulus `max |h(A) - h(B)| / |A - B|^q` over admissible pairs.
pub fn surface_lipschitz_modulus(params: &EnergyParams, samples: usize, seed: u64) -> f64 {
    let q_exp = params.q_exponent();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| loop {
        let q = QTensor(std::array::from_fn(|_| rng.random_range(-0.6..0.6)));
        if q.in_q_set(0.0) {
            return q;
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let dist = a.sub(&b).norm();
        if dist > 0.0 {
            let dh = (surface_rapini(&a, params) - surface_rapini(&b, params)).abs();
            worst = worst.max(dh / dist.powf(q_exp));
        }
    }
    worst
}
