//! Variational model of nematic liquid-crystal elastomers: energy densities,
//! a structured-grid finite-element discretization, a feasibility-preserving minimizer and
//! injectivity audits for computed deformations.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod discretization;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod injectivity;
pub mod io;
pub mod minimize;
pub mod selftest;
pub mod tensor;

mod sum;

pub use discretization::{
    apply_boundary, assemble, build_grid, fd_gradient, BoundarySpec, DeformationField, FaceSet,
    Grid, OrderField, PhiBoundary, State,
};
pub use energy::{EnergyBreakdown, EnergyParams, GrowthRegime, Material};
pub use error::{Error, Result};
pub use injectivity::{CnReport, CnVerdict};
pub use minimize::{minimize, MinimizeOptions, MinimizeResult, Status};
pub use tensor::{Mat3, QTensor, StepTensor, Vec3};

#[cfg(test)]
pub(crate) mod testutil {
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    use crate::tensor::{rotation, Mat3, QTensor, Vec3};

    /// Random order tensor with eigenvalues drawn well inside the admissible set.
    pub fn rand_q(rng: &mut ChaCha8Rng, spread: f64) -> QTensor {
        let (a, b) = loop {
            let a: f64 = rng.random_range(-spread..spread);
            let b: f64 = rng.random_range(-spread..spread);
            if a.min(b).min(-a - b) > -0.3 {
                break (a, b);
            }
        };
        let d = Mat3::from_diagonal(&Vec3::new(a, b, -a - b));
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ) + Vec3::new(0.0, 0.0, 1e-3);
        let r = rotation(&axis, rng.random_range(0.0..std::f64::consts::PI));
        QTensor::from_matrix(&(r * d * r.transpose())).unwrap()
    }

    /// Random matrix near the identity with positive determinant.
    pub fn rand_f(rng: &mut ChaCha8Rng, spread: f64) -> Mat3 {
        Mat3::identity() + Mat3::from_fn(|_, _| rng.random_range(-spread..spread))
    }

    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }
}
