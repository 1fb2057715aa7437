use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::tensor::{Mat3, QTensor};

use super::ldg::{ldg_coeff, CoeffGrad};
use super::{ogden_minors, EnergyParams};

/// Violations above this (relative) level fail the probe.
pub const PROBE_TOL: f64 = 1e-9;

/// Densities whose convexity can be probed by segment sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeTarget {
    /// Polyconvex elastic part in the independent minors `(G, adj G, det G)`.
    OgdenMinors,
    /// Gradient energy in the order-tensor gradient at fixed `Q`.
    LdgGradient,
    /// Perspective gradient density in `(A, t)` at fixed `Q`.
    Pullback,
    /// `-|G|^2`, a known non-convex control.
    ConcaveWitness,
}

impl ProbeTarget {
    pub const ALL: [ProbeTarget; 3] = [
        ProbeTarget::OgdenMinors,
        ProbeTarget::LdgGradient,
        ProbeTarget::Pullback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeTarget::OgdenMinors => "ogden-in-minors",
            ProbeTarget::LdgGradient => "ldg-in-gradq",
            ProbeTarget::Pullback => "pullback-in-at",
            ProbeTarget::ConcaveWitness => "concave-witness",
        }
    }
}

impl fmt::Display for ProbeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "ogden" | "ogden-in-minors" | "ogden_polyconvex" => Ok(ProbeTarget::OgdenMinors),
            "ldg" | "ldg-in-gradq" | "ldg_gradient" => Ok(ProbeTarget::LdgGradient),
            "pullback" | "pullback-in-at" | "pullback-in-(a,t)" => Ok(ProbeTarget::Pullback),
            "concave" | "concave-witness" => Ok(ProbeTarget::ConcaveWitness),
            _ => Err(Error::UnknownDensity(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub target: ProbeTarget,
    pub samples: usize,
    /// Largest relative excess `(f(x_t) - (t f(x1) + (1-t) f(x2))) / max(1, |chord|)`.
    pub max_violation: f64,
    pub pass: bool,
}

/// Relative excess of `f_mid` over the chord value `t f1 + (1 - t) f2`.
pub fn midpoint_violation(f1: f64, f2: f64, f_mid: f64, t: f64) -> f64 {
    let chord = t * f1 + (1.0 - t) * f2;
    (f_mid - chord) / (t * f1.abs() + (1.0 - t) * f2.abs()).max(1.0)
}

fn rand_mat(rng: &mut ChaCha8Rng, s: f64) -> Mat3 {
    Mat3::from_fn(|_, _| rng.random_range(-s..s))
}

fn rand_coeff(rng: &mut ChaCha8Rng, s: f64) -> CoeffGrad {
    CoeffGrad::from_fn(|_, _| rng.random_range(-s..s))
}

fn rand_admissible_q(rng: &mut ChaCha8Rng) -> QTensor {
    loop {
        let q = QTensor(std::array::from_fn(|_| rng.random_range(-0.6..0.6)));
        if q.in_q_set(0.0) {
            return q;
        }
    }
}

/// Samples `samples` random segments and records the worst convexity excess.
pub fn convexity_probe(
    target: ProbeTarget,
    samples: usize,
    seed: u64,
    params: &EnergyParams,
) -> ProbeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let t: f64 = rng.random_range(0.0..=1.0);
        let v = match target {
            ProbeTarget::OgdenMinors => {
                let (x1, y1, z1) = (
                    rand_mat(&mut rng, 2.0),
                    rand_mat(&mut rng, 2.0),
                    rng.random_range(0.0..3.0),
                );
                let (x2, y2, z2) = (
                    rand_mat(&mut rng, 2.0),
                    rand_mat(&mut rng, 2.0),
                    rng.random_range(0.0..3.0),
                );
                let f = |x: &Mat3, y: &Mat3, z: f64| ogden_minors(x, y, z, params);
                let fm = f(
                    &(t * x1 + (1.0 - t) * x2),
                    &(t * y1 + (1.0 - t) * y2),
                    t * z1 + (1.0 - t) * z2,
                );
                midpoint_violation(f(&x1, &y1, z1), f(&x2, &y2, z2), fm, t)
            }
            ProbeTarget::LdgGradient => {
                let q = rand_admissible_q(&mut rng);
                let (p1, p2) = (rand_coeff(&mut rng, 2.0), rand_coeff(&mut rng, 2.0));
                let f = |p: &CoeffGrad| ldg_coeff(p, &q, params).value;
                midpoint_violation(f(&p1), f(&p2), f(&(t * p1 + (1.0 - t) * p2)), t)
            }
            ProbeTarget::Pullback => {
                let q = rand_admissible_q(&mut rng);
                let (a1, t1) = (rand_coeff(&mut rng, 2.0), rng.random_range(0.1..3.0));
                let (a2, t2) = (rand_coeff(&mut rng, 2.0), rng.random_range(0.1..3.0));
                let f = |a: &CoeffGrad, s: f64| s * ldg_coeff(&(a / s), &q, params).value;
                let fm = f(&(t * a1 + (1.0 - t) * a2), t * t1 + (1.0 - t) * t2);
                midpoint_violation(f(&a1, t1), f(&a2, t2), fm, t)
            }
            ProbeTarget::ConcaveWitness => {
                let (g1, g2) = (rand_mat(&mut rng, 2.0), rand_mat(&mut rng, 2.0));
                let f = |g: &Mat3| -g.norm_squared();
                midpoint_violation(f(&g1), f(&g2), f(&(t * g1 + (1.0 - t) * g2)), t)
            }
        };
        worst = worst.max(v);
    }
    let max_violation = worst.max(0.0);
    ProbeReport {
        target,
        samples,
        max_violation,
        pass: max_violation <= PROBE_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in ProbeTarget::ALL {
            assert_eq!(t.name().parse::<ProbeTarget>().unwrap(), t);
        }
        assert!(matches!(
            "banana".parse::<ProbeTarget>(),
            Err(Error::UnknownDensity(_))
        ));
    }

    #[test]
    fn convex_densities_pass() {
        let ogden = EnergyParams {
            alpha_coer: 1.0,
            c_adj: 0.5,
            c_det: 1.0,
            ..Default::default()
        };
        assert!(convexity_probe(ProbeTarget::OgdenMinors, 5000, 1, &ogden).pass);
        let single = EnergyParams::default();
        assert!(convexity_probe(ProbeTarget::LdgGradient, 5000, 2, &single).pass);
        assert!(convexity_probe(ProbeTarget::Pullback, 5000, 3, &single).pass);
    }

    #[test]
    fn concave_witness_fails() {
        let r = convexity_probe(
            ProbeTarget::ConcaveWitness,
            100,
            4,
            &EnergyParams::default(),
        );
        assert!(!r.pass);
        assert!(r.max_violation > 0.1);
    }
}
