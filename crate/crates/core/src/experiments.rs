//! Configuration-driven experiments.
//!
//! Each experiment returns an [`Outcome`]: a flat `key = value` summary, the
//! artifacts it produced, and whether its built-in checks passed. [`run`]
//! writes artifacts as soon as they exist, so a late failure leaves earlier
//! files on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ExperimentKind, StripeRegime};
use crate::discretization::{
    apply_boundary, build_grid, energy, feasibility, BoundaryData, BoundarySpec, FaceSet, Grid,
    PhiBoundary, QDirichlet, State,
};
use crate::energy::{
    bulk_barrier, bulk_eval, bulk_total, elastic_eval, EnergyBreakdown, EnergyParams, Material,
};
use crate::error::{Error, Result};
use crate::injectivity::{
    change_of_variables_check, ciarlet_necas_check, default_resolution, multiplicity,
    sample_lattice, CnReport, CnVerdict,
};
use crate::io;
use crate::minimize::{gradient_check, minimize, MinimizeResult, Status};
use crate::tensor::{cofactor, det3, project, rotation, Mat3, QTensor, Vec3};

/// Result of one experiment.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    /// `key = value` lines.
    pub summary: String,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<PathBuf>,
    pub passed: bool,
}

struct Sink<'a> {
    dir: Option<&'a Path>,
    artifacts: Vec<PathBuf>,
}

impl Sink<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        if let Some(dir) = self.dir {
            fs::write(dir.join(name), contents)?;
            self.artifacts.push(PathBuf::from(name));
        }
        Ok(())
    }
}

fn kv(s: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(s, "{key} = {value}");
}

/// Runs the configured experiment, writing artifacts into `out` (created if missing).
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let mut sink = Sink {
        dir: Some(out),
        artifacts: Vec::new(),
    };
    let (summary, passed) = match cfg.experiment {
        ExperimentKind::AffineSanity => affine_sanity_impl(cfg, &mut sink)?,
        ExperimentKind::SpontaneousFloor => spontaneous_floor_impl(cfg, &mut sink)?,
        ExperimentKind::Stripe => {
            let r = stripe_impl(cfg, &mut sink)?;
            (r.summary(), r.passed())
        }
        ExperimentKind::BarrierSweep => barrier_sweep_impl(cfg, &mut sink)?,
        ExperimentKind::CnAudit => cn_audit_impl(cfg, &mut sink)?,
    };
    let mut full = String::new();
    kv(&mut full, "experiment", cfg.experiment.name());
    kv(&mut full, "seed", cfg.seed);
    full.push_str(&summary);
    kv(&mut full, "passed", passed);
    sink.write("summary.txt", &full)?;
    Ok(Outcome {
        summary: full,
        artifacts: sink.artifacts,
        passed,
    })
}

fn grid_of(cfg: &ExperimentConfig) -> Result<Grid> {
    build_grid(cfg.grid.extents, cfg.grid.resolution, cfg.grid.plane_strain)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Newton iteration on `r(u) = 0` with a central-difference Jacobian.
fn newton(mut u: Vec<f64>, r: impl Fn(&[f64]) -> Result<Vec<f64>>, tol: f64) -> Result<Vec<f64>> {
    let n = u.len();
    for _ in 0..60 {
        let r0 = r(&u)?;
        if r0.iter().all(|x| x.abs() <= tol) {
            return Ok(u);
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * u[j].abs().max(1.0);
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            let (rp, rm) = (r(&up)?, r(&dn)?);
            for i in 0..n {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let step = jac
            .lu()
            .solve(&DVector::from_vec(r0.clone()))
            .ok_or_else(|| {
                Error::Degenerate("singular Jacobian in homogeneous-state solve".into())
            })?;
        let norm0: f64 = r0.iter().map(|x| x * x).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if let Ok(rt) = r(&trial) {
                if rt.iter().map(|x| x * x).sum::<f64>() < norm0 || t < 1e-6 {
                    u = trial;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-8 {
                return Err(Error::Degenerate("homogeneous-state solve stalled".into()));
            }
        }
    }
    let rf = r(&u)?;
    if rf.iter().all(|x| x.abs() <= 1e3 * tol) {
        Ok(u)
    } else {
        Err(Error::Degenerate(
            "homogeneous-state solve did not converge".into(),
        ))
    }
}

// ---------------------------------------------------------------- stripe

/// Constructed states and constants of the stripe experiment.
#[derive(Clone, Debug)]
pub struct StripeSetup {
    pub material: Material,
    /// Clamp order tensor (director along `e1`).
    pub q0: QTensor,
    pub bc: BoundarySpec,
    pub homogeneous: State,
    pub two_stripe: State,
    pub perturbed: State,
}

/// Elastic plus bulk density of a homogeneous state.
fn homogeneous_density(f: &Mat3, q: &QTensor, material: &Material) -> Result<f64> {
    let l = (q.matrix() + Mat3::identity() / 3.0) * material.params.a0;
    Ok(elastic_eval(f, &l, &material.params)?.value + bulk_total(q, material)?)
}

fn diag_q(q1: f64, q2: f64) -> QTensor {
    QTensor::from_coeffs([q1, q2, 0.0, 0.0, 0.0])
}

/// Stress-free homogeneous state at unit stretch with the director along `e1`:
/// solves for `(F11, a0, Q)` with `dW/dF11 = dW/dF22 = 0` and `dW/dQ = 0`.
pub fn stripe_natural_state(base: &EnergyParams) -> Result<(f64, f64, QTensor)> {
    let material = Material::new(base.clone())?;
    let s = material.preferred_order();
    let q_init = QTensor::uniaxial(s, &Vec3::x())?;
    let a0_init = 3.0 / (1.0 - s);
    let f11_init = (1.0 + 2.0 * s).sqrt() / (1.0 - s).sqrt();
    let c = q_init.coeffs();
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let (f11, a0, q) = (u[0], u[1], diag_q(u[2], u[3]));
        let mut p = material.params.clone();
        p.a0 = a0;
        let f = Mat3::from_diagonal(&Vec3::new(f11, 1.0, 1.0));
        let l = (q.matrix() + Mat3::identity() / 3.0) * a0;
        let e = elastic_eval(&f, &l, &p)?;
        let (_, gb) = bulk_eval(&q, &material)?;
        let gq = project(&e.d_l);
        Ok(vec![
            e.d_f[(0, 0)],
            e.d_f[(1, 1)],
            a0 * gq[0] + gb[0],
            a0 * gq[1] + gb[1],
        ])
    };
    let u = newton(vec![f11_init, a0_init, c[0], c[1]], residual, 1e-13)?;
    Ok((u[0], u[1], diag_q(u[2], u[3])))
}

/// Homogeneous stretch `F = diag(f11, lambda, 1)` at fixed `Q`, relaxed in `f11`.
fn relaxed_f11(lambda: f64, q: &QTensor, material: &Material, guess: f64) -> Result<f64> {
    let l = (q.matrix() + Mat3::identity() / 3.0) * material.params.a0;
    let u = newton(
        vec![guess],
        |u| {
            let f = Mat3::from_diagonal(&Vec3::new(u[0], lambda, 1.0));
            Ok(vec![elastic_eval(&f, &l, &material.params)?.d_f[(0, 0)]])
        },
        1e-13,
    )?;
    Ok(u[0])
}

fn rotate_q(q: &QTensor, theta: f64) -> QTensor {
    let r = rotation(&Vec3::z(), theta);
    QTensor::from_matrix(&(r * q.matrix() * r.transpose()))
        .expect("rotation preserves symmetry and trace")
}

/// Lowest-density sheared band `F = [[f11, gamma], [0, lambda]]` with the
/// director rotated by `theta` in the plane. Pattern search in `(f11, gamma, theta)`.
fn band_optimum(lambda: f64, q0: &QTensor, material: &Material, f11: f64) -> (f64, f64, f64) {
    let density = |u: &[f64; 3]| -> f64 {
        let f = Mat3::new(u[0], u[1], 0.0, 0.0, lambda, 0.0, 0.0, 0.0, 1.0);
        if det3(&f) < material.params.delta0 {
            return f64::INFINITY;
        }
        homogeneous_density(&f, &rotate_q(q0, u[2]), material).unwrap_or(f64::INFINITY)
    };
    let mut best = [f11, 0.0, 0.0];
    let mut fbest = density(&best);
    for k in 1..=8 {
        let theta = k as f64 * std::f64::consts::PI / 16.0;
        for g in [0.1, 0.3, 0.6] {
            let u = [f11, g, theta];
            let fu = density(&u);
            if fu < fbest {
                fbest = fu;
                best = u;
            }
        }
    }
    let mut step = [0.1, 0.1, 0.1];
    while step.iter().any(|&s| s > 1e-9) {
        let mut improved = false;
        for d in 0..3 {
            for sgn in [1.0, -1.0] {
                let mut u = best;
                u[d] += sgn * step[d];
                let fu = density(&u);
                if fu < fbest {
                    fbest = fu;
                    best = u;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    (best[0], best[1], best[2])
}

/// Builds the material, boundary data and the three starting states.
pub fn stripe_setup(cfg: &ExperimentConfig) -> Result<StripeSetup> {
    let sc = &cfg.stripe;
    let mut params = cfg.params.clone();
    let (f11_unit, q0) = if sc.auto_a0 || sc.q0.is_none() {
        let (f11, a0, q) = stripe_natural_state(&params)?;
        if sc.auto_a0 {
            params.a0 = a0;
        }
        (f11, q)
    } else {
        (1.0, sc.q0.unwrap_or(QTensor::ZERO))
    };
    let q0 = sc.q0.unwrap_or(q0);
    if sc.regime == StripeRegime::Surface {
        params.q0_surface = q0;
    }
    let material = Material::new(params).map_err(|e| match e {
        Error::Config { key, message } => Error::config(format!("params.{key}"), message),
        other => other,
    })?;
    let lambda = sc.lambda;
    let grid = grid_of(cfg)?;
    let bc = BoundarySpec {
        phi: PhiBoundary::DirichletPartial {
            faces: FaceSet::Y_FACES,
            components: [false, true, false],
            data: BoundaryData {
                a: Mat3::from_diagonal(&Vec3::new(1.0, lambda, 1.0)),
                t: Vec3::zeros(),
            },
        },
        q: match sc.regime {
            StripeRegime::Dirichlet => Some(QDirichlet {
                faces: FaceSet::Y_FACES,
                value: q0,
            }),
            StripeRegime::Surface => None,
        },
        surface: match sc.regime {
            StripeRegime::Dirichlet => FaceSet::NONE,
            StripeRegime::Surface => FaceSet::Y_FACES,
        },
    };

    let f11 = relaxed_f11(lambda, &q0, &material, f11_unit)?;
    let homogeneous = apply_boundary(
        &State::from_fn(grid.clone(), |x| {
            (Vec3::new(f11 * x.x, lambda * x.y, 0.0), q0)
        }),
        &bc,
    )?;

    let (bf11, gamma, theta) = band_optimum(lambda, &q0, &material, f11);
    let w = 2.0 * grid.h[1];
    let two_stripe = apply_boundary(
        &State::from_fn(grid.clone(), |x| {
            let t = (x.y / w).tanh();
            let lncosh =
                (x.y / w).abs() + (-2.0 * (x.y / w).abs()).exp().ln_1p() - std::f64::consts::LN_2;
            (
                Vec3::new(bf11 * x.x + gamma * w * lncosh, lambda * x.y, 0.0),
                rotate_q(&q0, theta * t),
            )
        }),
        &bc,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let modes: Vec<(f64, f64, f64)> = (1..=3)
        .map(|m| {
            (
                m as f64,
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let [a, b, _] = grid.extents;
    let amp = sc.perturbation;
    let perturbed = apply_boundary(
        &State::from_fn(grid.clone(), |x| {
            let mut th = 0.0;
            for &(m, c, ph) in &modes {
                th += c
                    * (m * std::f64::consts::PI * (x.y + b) / (2.0 * b)).sin()
                    * (std::f64::consts::PI * x.x / a + ph).cos();
            }
            (
                Vec3::new(f11 * x.x, lambda * x.y, 0.0),
                rotate_q(&q0, amp * th / 3.0),
            )
        }),
        &bc,
    )?;
    Ok(StripeSetup {
        material,
        q0,
        bc,
        homogeneous,
        two_stripe,
        perturbed,
    })
}

/// Shear `dphi1/dx2` per cell.
pub fn shear_field(state: &State) -> Vec<f64> {
    state
        .deformation_gradients()
        .iter()
        .map(|f| f[(0, 1)])
        .collect()
}

/// Row-mean shear for each cell row along `x2`.
pub fn shear_profile(state: &State) -> Vec<f64> {
    let [cx, cy, _] = state.grid.cells();
    let shear = shear_field(state);
    (0..cy)
        .map(|j| (0..cx).map(|i| shear[i * cy + j]).sum::<f64>() / cx as f64)
        .collect()
}

/// Number of sign runs of the row-mean shear, ignoring rows below `tol`.
/// A shear-free state counts as one band.
pub fn count_bands(profile: &[f64], tol: f64) -> usize {
    let signs: Vec<i8> = profile
        .iter()
        .filter(|v| v.abs() > tol)
        .map(|&v| if v > 0.0 { 1 } else { -1 })
        .collect();
    1 + signs.windows(2).filter(|w| w[0] != w[1]).count()
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub name: &'static str,
    pub start_energy: f64,
    pub result: MinimizeResult,
}

/// Stripe experiment result.
#[derive(Clone, Debug)]
pub struct StripeOutcome {
    pub lambda: f64,
    pub homogeneous_trial: EnergyBreakdown,
    pub two_stripe_trial: EnergyBreakdown,
    pub candidates: Vec<Candidate>,
    /// Index of the selected candidate.
    pub chosen: usize,
    pub max_shear: f64,
    pub bands: usize,
    pub feasible: bool,
    pub cn: CnReport,
    pub q0: QTensor,
    pub a0: f64,
}

impl StripeOutcome {
    pub fn best(&self) -> &MinimizeResult {
        &self.candidates[self.chosen].result
    }

    pub fn energy(&self) -> f64 {
        self.best().energy.total
    }

    pub fn passed(&self) -> bool {
        let trial = self
            .homogeneous_trial
            .total
            .min(self.two_stripe_trial.total);
        self.energy() <= trial && self.feasible && self.cn.verdict != CnVerdict::Violated
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        kv(&mut s, "lambda", self.lambda);
        kv(&mut s, "a0", self.a0);
        kv(&mut s, "q0", format!("{:?}", self.q0.coeffs()));
        kv(
            &mut s,
            "energy_homogeneous_trial",
            self.homogeneous_trial.total,
        );
        kv(
            &mut s,
            "energy_two_stripe_trial",
            self.two_stripe_trial.total,
        );
        for c in &self.candidates {
            kv(
                &mut s,
                &format!("candidate.{}.energy", c.name),
                c.result.energy.total,
            );
            kv(
                &mut s,
                &format!("candidate.{}.iterations", c.name),
                c.result.iterations,
            );
            kv(
                &mut s,
                &format!("candidate.{}.status", c.name),
                c.result.status.as_str(),
            );
        }
        kv(&mut s, "chosen", self.candidates[self.chosen].name);
        let e = self.best().energy;
        kv(&mut s, "energy", e.total);
        kv(&mut s, "energy.elastic", e.elastic);
        kv(&mut s, "energy.ldg_gradient", e.ldg_gradient);
        kv(&mut s, "energy.bulk", e.bulk);
        kv(&mut s, "energy.surface", e.surface);
        kv(&mut s, "grad_norm", self.best().grad_norm);
        kv(&mut s, "max_shear", self.max_shear);
        kv(&mut s, "bands", self.bands);
        kv(&mut s, "monodomain", self.max_shear <= SHEAR_TOL);
        kv(&mut s, "feasible", self.feasible);
        kv(&mut s, "cn_verdict", self.cn.verdict.as_str());
        kv(&mut s, "cn_lhs", self.cn.lhs);
        kv(&mut s, "cn_rhs", self.cn.rhs);
        kv(&mut s, "cn_bound", self.cn.bound);
        s
    }
}

/// Tolerance on row-mean shear below which a row counts as unsheared.
pub const SHEAR_TOL: f64 = 1e-6;

/// Runs the stripe experiment without writing files.
pub fn stripe(cfg: &ExperimentConfig) -> Result<StripeOutcome> {
    stripe_impl(
        cfg,
        &mut Sink {
            dir: None,
            artifacts: Vec::new(),
        },
    )
}

fn stripe_impl(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<StripeOutcome> {
    let setup = stripe_setup(cfg)?;
    let m = &setup.material;
    let hom = energy(&setup.homogeneous, m, &setup.bc)?;
    let two = energy(&setup.two_stripe, m, &setup.bc)?;
    let starts: [(&'static str, &State); 3] = [
        ("homogeneous", &setup.homogeneous),
        ("two_stripe", &setup.two_stripe),
        ("perturbed", &setup.perturbed),
    ];
    let mut candidates = Vec::new();
    for (name, s0) in starts {
        let start_energy = energy(s0, m, &setup.bc)?.total;
        let result = minimize(s0, m, &setup.bc, &cfg.minimize)?;
        candidates.push(Candidate {
            name,
            start_energy,
            result,
        });
    }
    let mut chosen = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let best = candidates[chosen].result.energy.total;
        if c.result.energy.total < best - 1e-9 * best.abs().max(1.0) {
            chosen = i;
        }
    }
    let best = &candidates[chosen].result;
    sink.write("fields.csv", &io::to_csv(&best.state))?;
    sink.write("fields.vtk", &io::to_vtk(&best.state))?;
    sink.write("energy_log.csv", &io::log_csv(&best.history))?;
    let mut trials =
        String::from("candidate,start_energy,final_energy,iterations,status,grad_norm\n");
    for c in &candidates {
        let _ = writeln!(
            trials,
            "{},{},{},{},{},{}",
            c.name,
            c.start_energy,
            c.result.energy.total,
            c.result.iterations,
            c.result.status.as_str(),
            c.result.grad_norm
        );
    }
    sink.write("candidates.csv", &trials)?;

    let profile = shear_profile(&best.state);
    let mut map = String::from("row,x2,mean_shear,sign\n");
    let grid = &best.state.grid;
    for (j, v) in profile.iter().enumerate() {
        let x2 = -grid.extents[1] + (j as f64 + 0.5) * grid.h[1];
        let sign = if v.abs() <= SHEAR_TOL {
            0
        } else if *v > 0.0 {
            1
        } else {
            -1
        };
        let _ = writeln!(map, "{j},{x2},{v},{sign}");
    }
    sink.write("shear_map.csv", &map)?;

    let max_shear = shear_field(&best.state)
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let feasible = feasibility(
        &best.state,
        m.params.delta0,
        cfg.minimize.feasibility_margin,
    )
    .feasible;
    let cn = ciarlet_necas_check(&best.state, default_resolution(&best.state.grid))?;
    sink.write("cn_report.txt", &cn.to_text())?;
    Ok(StripeOutcome {
        lambda: cfg.stripe.lambda,
        homogeneous_trial: hom,
        two_stripe_trial: two,
        bands: count_bands(&profile, SHEAR_TOL),
        max_shear,
        feasible,
        cn,
        q0: setup.q0,
        a0: m.params.a0,
        candidates,
        chosen,
    })
}

// ---------------------------------------------------------------- affine sanity

/// Closed-form elastic density of `F` at `Q = 0`, where `G = sqrt(3/a0) F`.
fn isotropic_elastic_oracle(f: &Mat3, p: &EnergyParams) -> f64 {
    let k = 3.0 / p.a0;
    let g2 = k * f.norm_squared();
    let cof2 = k * k * cofactor(f).norm_squared();
    let detg = k.powf(1.5) * det3(f);
    p.mu * (g2 - 1.0)
        + p.alpha_coer * g2.powf(p.p / 2.0)
        + p.c_adj * cof2.powf(p.p / 4.0)
        + p.c_det * (detg - 1.0).powi(2)
        - if p.det_barrier > 0.0 {
            p.det_barrier * (det3(f) - p.delta0).ln()
        } else {
            0.0
        }
}

fn affine_sanity_impl(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(String, bool)> {
    let grid = grid_of(cfg)?;
    let material = Material::new(cfg.params.clone())?;
    let p = &material.params;
    let vol = grid.volume();
    let free = BoundarySpec::default();
    let mut checks: Vec<(String, f64, f64, f64)> = Vec::new();

    let id = State::identity(grid.clone());
    let e = energy(&id, &material, &free)?;
    checks.push((
        "identity.elastic".into(),
        e.elastic,
        isotropic_elastic_oracle(&Mat3::identity(), p) * vol,
        1e-12,
    ));
    checks.push((
        "identity.bulk".into(),
        e.bulk,
        bulk_total(&QTensor::ZERO, &material)? * vol,
        1e-12,
    ));
    checks.push(("identity.ldg_gradient".into(), e.ldg_gradient, 0.0, 1e-12));

    let a = Mat3::new(1.2, 0.1, 0.0, -0.05, 0.9, 0.2, 0.0, 0.1, 1.1);
    let aff = State::from_fn(grid.clone(), |x| {
        (a * x + Vec3::new(0.3, -0.2, 0.1), QTensor::ZERO)
    });
    let e = energy(&aff, &material, &free)?;
    checks.push((
        "affine.elastic".into(),
        e.elastic,
        isotropic_elastic_oracle(&a, p) * vol,
        1e-12,
    ));

    let s = material.preferred_order();
    let n = Vec3::new(1.0, 2.0, 2.0) / 3.0;
    let q = QTensor::uniaxial(s, &n)?;
    let uni = State::from_fn(grid.clone(), |x| (x, q));
    let e = energy(&uni, &material, &free)?;
    let (lpar, lperp) = (p.a0 * (1.0 + 2.0 * s) / 3.0, p.a0 * (1.0 - s) / 3.0);
    let g2 = 1.0 / lpar + 2.0 / lperp;
    let detg = 1.0 / (lpar * lperp * lperp).sqrt();
    let cof2 = lpar.recip() * lperp.recip() * 2.0 + lperp.recip().powi(2);
    let oracle = p.mu * (g2 - 1.0)
        + p.alpha_coer * g2.powf(p.p / 2.0)
        + p.c_adj * cof2.powf(p.p / 4.0)
        + p.c_det * (detg - 1.0).powi(2)
        - if p.det_barrier > 0.0 {
            p.det_barrier * (1.0 - p.delta0).ln()
        } else {
            0.0
        };
    checks.push(("uniaxial.elastic".into(), e.elastic, oracle * vol, 1e-10));
    checks.push(("uniaxial.bulk".into(), e.bulk, 0.0, 1e-9));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut smooth = State::from_fn(grid.clone(), |x| {
        (
            x + 0.05 * Vec3::new(x.y, x.z * x.x, x.x),
            QTensor::from_coeffs([0.05 * x.x, 0.02, -0.03 * x.y, 0.01, 0.04 * x.z]),
        )
    });
    for v in smooth.phi.values.iter_mut() {
        *v += 0.01
            * Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
    }
    let gc = gradient_check(&smooth, &material, &free, 20, cfg.seed)?;
    checks.push(("gradient_check.max_rel_err".into(), gc, 0.0, 1e-6));

    let mut table = String::from("check,value,oracle,error,tolerance,pass\n");
    let mut summary = String::new();
    let mut all = true;
    for (name, v, o, tol) in &checks {
        let err = if *o == 0.0 { v.abs() } else { rel(*v, *o) };
        let pass = err <= *tol;
        all &= pass;
        let _ = writeln!(table, "{name},{v},{o},{err},{tol},{pass}");
        kv(&mut summary, &format!("{name}.error"), err);
    }
    sink.write("checks.csv", &table)?;
    Ok((summary, all))
}

// ---------------------------------------------------------------- spontaneous floor

/// Random admissible order tensor with eigenvalues in a moderate band.
pub fn random_order_tensor(rng: &mut ChaCha8Rng, spread: f64) -> QTensor {
    let (a, b) = loop {
        let a: f64 = rng.random_range(-spread..spread);
        let b: f64 = rng.random_range(-spread..spread);
        if a.min(b).min(-a - b) > -0.25 {
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
    QTensor::from_matrix(&(r * d * r.transpose())).expect("rotated traceless diagonal")
}

/// Per-sample result of the spontaneous-floor experiment.
#[derive(Clone, Debug)]
pub struct FloorSample {
    pub q: QTensor,
    pub a0: f64,
    pub elastic: f64,
    pub oracle: f64,
    pub rel_err: f64,
    pub status: Status,
    pub state: State,
}

/// Relative tolerance on the elastic floor.
pub const FLOOR_TOL: f64 = 1e-4;

/// Minimizes the elastic energy over affine deformations with `det L = 1` and
/// `Q` frozen; the floor is `2 mu |Omega|`.
pub fn spontaneous_floor(cfg: &ExperimentConfig, samples: usize) -> Result<Vec<FloorSample>> {
    let grid = grid_of(cfg)?;
    if grid.cell_count() != 1 {
        return Err(Error::config(
            "grid.resolution",
            "spontaneous_floor uses a single cell ([2, 2, 2])",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(samples);
    let opts = &cfg.minimize;
    for _ in 0..samples {
        let q = random_order_tensor(&mut rng, 0.3);
        let a0 = det3(&(q.matrix() + Mat3::identity() / 3.0)).powf(-1.0 / 3.0);
        let mut params = cfg.params.clone();
        params.a0 = a0;
        params.c_det = params.c_det.max(1e5 * params.mu);
        params.alpha_coer = 0.0;
        params.c_adj = 0.0;
        params.det_barrier = 0.0;
        let material = Material::new(params)?;
        let mut s0 = State::from_fn(grid.clone(), |x| (x, q));
        s0.q.fixed.iter_mut().for_each(|f| *f = true);
        let r = minimize(&s0, &material, &BoundarySpec::default(), opts)?;
        let oracle = 2.0 * material.params.mu * grid.volume();
        out.push(FloorSample {
            q,
            a0,
            elastic: r.energy.elastic,
            oracle,
            rel_err: rel(r.energy.elastic, oracle),
            status: r.status,
            state: r.state,
        });
    }
    Ok(out)
}

fn spontaneous_floor_impl(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(String, bool)> {
    let samples = spontaneous_floor(cfg, 10)?;
    let mut table = String::from("sample,q1,q2,q3,q4,q5,a0,elastic,oracle,rel_err,status\n");
    let mut worst = 0.0f64;
    for (i, s) in samples.iter().enumerate() {
        let c = s.q.coeffs();
        let _ = writeln!(
            table,
            "{i},{},{},{},{},{},{},{},{},{},{}",
            c[0],
            c[1],
            c[2],
            c[3],
            c[4],
            s.a0,
            s.elastic,
            s.oracle,
            s.rel_err,
            s.status.as_str()
        );
        worst = worst.max(s.rel_err);
    }
    sink.write("floor.csv", &table)?;
    let mut summary = String::new();
    kv(&mut summary, "samples", samples.len());
    kv(&mut summary, "max_rel_err", worst);
    kv(&mut summary, "tolerance", FLOOR_TOL);
    Ok((summary, worst <= FLOOR_TOL))
}

// ---------------------------------------------------------------- barrier sweep

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: u32,
    pub s: f64,
    pub bulk_total: f64,
    pub barrier: f64,
}

/// `bulk_total` along the uniaxial path `s = 1 - 10^-k`.
pub fn barrier_sweep(params: &EnergyParams, k_max: u32, director: &Vec3) -> Result<Vec<SweepRow>> {
    let material = Material::new(params.clone())?;
    (1..=k_max)
        .map(|k| {
            let s = 1.0 - 10f64.powi(-(k as i32));
            let q = QTensor::uniaxial(s, director)?;
            Ok(SweepRow {
                k,
                s,
                bulk_total: bulk_total(&q, &material)?,
                barrier: bulk_barrier(&q, params)?,
            })
        })
        .collect()
}

/// Strictly increasing, and the `k = 4` value exceeds ten times the `k = 1` value.
pub fn sweep_passes(rows: &[SweepRow]) -> bool {
    let increasing = rows.windows(2).all(|w| w[1].bulk_total > w[0].bulk_total);
    let blowup = rows.len() < 4 || rows[3].bulk_total > 10.0 * rows[0].bulk_total;
    increasing && blowup
}

fn barrier_sweep_impl(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(String, bool)> {
    let rows = barrier_sweep(&cfg.params, cfg.sweep.k_max, &cfg.sweep.director)?;
    let mut table = String::from("k,s,bulk_total,barrier\n");
    for r in &rows {
        let _ = writeln!(table, "{},{},{},{}", r.k, r.s, r.bulk_total, r.barrier);
    }
    sink.write("barrier_sweep.csv", &table)?;
    let mut summary = String::new();
    kv(&mut summary, "k_max", cfg.sweep.k_max);
    kv(&mut summary, "first", rows[0].bulk_total);
    kv(&mut summary, "last", rows[rows.len() - 1].bulk_total);
    Ok((summary, sweep_passes(&rows)))
}

// ---------------------------------------------------------------- cn audit

/// All injectivity audits of one state.
#[derive(Clone, Debug)]
pub struct AuditResult {
    pub cn: CnReport,
    pub multiplicity_csv: String,
    pub single_cover_fraction: f64,
    pub volume_discrepancy: f64,
    pub volume_bound: f64,
}

pub fn audit_state(state: &State, resolution: usize, samples: usize) -> Result<AuditResult> {
    let resolution = if resolution == 0 {
        default_resolution(&state.grid)
    } else {
        resolution
    };
    let cn = ciarlet_necas_check(state, resolution)?;
    let pts = sample_lattice(state, samples)?;
    let mult = multiplicity(state, &pts);
    let covered = mult.counts.iter().filter(|&&c| c > 0).count();
    let single = mult.counts.iter().filter(|&&c| c == 1).count();
    let cov = change_of_variables_check(state, |_| 1.0, resolution)?;
    Ok(AuditResult {
        cn,
        multiplicity_csv: mult.to_csv(),
        single_cover_fraction: if covered == 0 {
            0.0
        } else {
            single as f64 / covered as f64
        },
        volume_discrepancy: cov.discrepancy,
        volume_bound: cov.bound,
    })
}

fn cn_audit_impl(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<(String, bool)> {
    let a = cfg.audit.as_ref().ok_or_else(|| {
        Error::config(
            "cn_audit.snapshot",
            "required for experiment = \"cn_audit\"",
        )
    })?;
    let state = io::read_csv(&a.snapshot, a.half_thickness)?;
    let r = audit_state(&state, a.resolution, a.samples)?;
    sink.write("cn_report.txt", &r.cn.to_text())?;
    sink.write("multiplicity.csv", &r.multiplicity_csv)?;
    let mut summary = String::new();
    kv(&mut summary, "snapshot", a.snapshot.display());
    kv(&mut summary, "cn_verdict", r.cn.verdict.as_str());
    kv(&mut summary, "cn_lhs", r.cn.lhs);
    kv(&mut summary, "cn_rhs", r.cn.rhs);
    kv(&mut summary, "cn_bound", r.cn.bound);
    kv(
        &mut summary,
        "single_cover_fraction",
        r.single_cover_fraction,
    );
    kv(&mut summary, "volume_discrepancy", r.volume_discrepancy);
    kv(&mut summary, "volume_bound", r.volume_bound);
    Ok((summary, r.cn.verdict != CnVerdict::Violated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    #[test]
    fn natural_state_is_stationary() {
        let cfg = parse_config_str("experiment = \"stripe\"\n").unwrap();
        let (f11, a0, q) = stripe_natural_state(&cfg.params).unwrap();
        assert!(a0 > 3.0 && f11 > 1.0, "{a0} {f11}");
        let mut p = cfg.params.clone();
        p.a0 = a0;
        let m = Material::new(p).unwrap();
        let f = Mat3::from_diagonal(&Vec3::new(f11, 1.0, 1.0));
        let l = (q.matrix() + Mat3::identity() / 3.0) * a0;
        let e = elastic_eval(&f, &l, &m.params).unwrap();
        assert!(e.d_f[(0, 0)].abs() < 1e-10);
        assert!(e.d_f[(1, 1)].abs() < 1e-10);
        assert!(q.order_params().s > 0.5);
    }

    #[test]
    fn band_counter() {
        assert_eq!(count_bands(&[0.0, 1e-9, -1e-9], 1e-6), 1);
        assert_eq!(count_bands(&[0.1, 0.2, 0.0, 0.3], 1e-6), 1);
        assert_eq!(count_bands(&[0.1, -0.2, -0.1, 0.3], 1e-6), 3);
    }

    #[test]
    fn sweep_blows_up() {
        let rows = barrier_sweep(&EnergyParams::default(), 6, &Vec3::z()).unwrap();
        assert!(sweep_passes(&rows), "{rows:?}");
        let ks: Vec<u32> = rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn affine_sanity_passes() {
        let cfg = parse_config_str(
            "experiment = \"affine_sanity\"\n[params]\nalpha = 0.1\nc_adj = 0.2\nc_det = 0.5\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg, dir.path()).unwrap();
        assert!(out.passed, "{}", out.summary);
        assert!(dir.path().join("checks.csv").exists());
    }

    #[test]
    fn spontaneous_floor_meets_tolerance() {
        let cfg = parse_config_str("experiment = \"spontaneous_floor\"\n").unwrap();
        for s in spontaneous_floor(&cfg, 3).unwrap() {
            assert!(s.rel_err <= FLOOR_TOL, "{s:?}");
        }
    }
}
