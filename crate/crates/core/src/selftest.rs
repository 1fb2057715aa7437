//! Fast built-in oracle checks, run by `lce-min selftest`.

use std::f64::consts::PI;

use crate::config::parse_config_str;
use crate::discretization::{build_grid, energy, feasibility, BoundarySpec, State};
use crate::energy::{
    bulk_barrier, convexity_probe, elastic_eval, trace_elastic, trace_elastic_via_g, EnergyParams,
    Material, ProbeTarget,
};
use crate::error::{Error, Result};
use crate::experiments::{barrier_sweep, spontaneous_floor, sweep_passes, FLOOR_TOL};
use crate::injectivity::{
    angle_doubling, ciarlet_necas_check, image_measure, multiplicity, CnVerdict,
};
use crate::io;
use crate::minimize::gradient_check;
use crate::tensor::{q_basis, Mat3, QTensor, Vec3};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every check; never panics.
pub fn run_all() -> Vec<Check> {
    vec![
        check("q_basis_orthonormal", || {
            let b = q_basis();
            let mut worst = 0.0f64;
            for i in 0..5 {
                for j in 0..5 {
                    let d = (b[i].component_mul(&b[j])).sum() - if i == j { 1.0 } else { 0.0 };
                    worst = worst.max(d.abs());
                }
            }
            Ok((worst < 1e-15, format!("max deviation {worst:e}")))
        }),
        check("uniaxial_order_parameter", || {
            let q = QTensor::uniaxial(0.6, &Vec3::z())?;
            let s = q.order_params().s;
            Ok((
                (s - 0.6).abs() < 1e-12 && q.in_q_set(0.0),
                format!("s = {s}"),
            ))
        }),
        check("admissible_set_boundary", || {
            let q = QTensor::uniaxial(1.0, &Vec3::x())?;
            Ok((!q.in_q_set(0.0), format!("lambda_min = {}", q.lambda_min())))
        }),
        check("trace_elastic_routes_agree", || {
            let q = QTensor::uniaxial(0.4, &Vec3::new(0.6, 0.8, 0.0))?;
            let l = q.step_tensor(3.0)?;
            let f = Mat3::new(1.1, 0.2, 0.0, -0.1, 0.95, 0.05, 0.0, 0.1, 1.05);
            let (a, b) = (
                trace_elastic(&f, &l, 1.0)?,
                trace_elastic_via_g(&f, &l, 1.0)?,
            );
            Ok(((a - b).abs() <= 1e-12 * a.abs(), format!("{a} vs {b}")))
        }),
        check("elastic_identity_value", || {
            let e = elastic_eval(
                &Mat3::identity(),
                &Mat3::identity(),
                &EnergyParams::default(),
            )?;
            Ok(((e.value - 2.0).abs() < 1e-15, format!("W(I) = {}", e.value)))
        }),
        check("barrier_closed_form", || {
            // -eps ln(27 (1/3 + 2s/3)(1/3 - s/3)^2) at s = 0.9.
            let p = EnergyParams::default();
            let s = 0.9;
            let v = bulk_barrier(&QTensor::uniaxial(s, &Vec3::z())?, &p)?;
            let oracle =
                -p.eps_barrier * (27.0 * (1.0 + 2.0 * s) / 3.0 * ((1.0 - s) / 3.0).powi(2)).ln();
            Ok(((v - oracle).abs() < 1e-12, format!("{v} vs {oracle}")))
        }),
        check("barrier_sweep_blowup", || {
            let rows = barrier_sweep(&EnergyParams::default(), 6, &Vec3::z())?;
            Ok((
                sweep_passes(&rows),
                format!("k=1 {} k=4 {}", rows[0].bulk_total, rows[3].bulk_total),
            ))
        }),
        check("identity_energy", || {
            let g = build_grid([0.5, 0.4, 0.3], [3, 3, 3], false)?;
            let m = Material::new(EnergyParams::default())?;
            let e = energy(&State::identity(g.clone()), &m, &BoundarySpec::default())?;
            let oracle = 2.0 * g.volume();
            Ok((
                (e.elastic - oracle).abs() < 1e-12,
                format!("{} vs {oracle}", e.elastic),
            ))
        }),
        check("feasibility_affine_det", || {
            let g = build_grid([0.5; 3], [3; 3], false)?;
            let s = State::from_fn(g, |x| {
                (
                    Mat3::from_diagonal(&Vec3::new(0.1, 1.0, 1.0)) * x,
                    QTensor::ZERO,
                )
            });
            let f = feasibility(&s, 0.5, 1e-3);
            Ok((
                !f.feasible && (f.min_det - 0.1).abs() < 1e-12,
                format!("min det {}", f.min_det),
            ))
        }),
        check("gradient_check_small_grid", || {
            let g = build_grid([0.5; 3], [4; 3], false)?;
            let s = State::from_fn(g, |x| {
                (
                    x + 0.05 * Vec3::new(x.y * x.z, x.x, x.x * x.x),
                    QTensor::from_coeffs([0.05 * x.x, 0.02 * x.y, 0.01, -0.02 * x.z, 0.03]),
                )
            });
            let m = Material::new(EnergyParams {
                alpha_coer: 0.1,
                c_det: 0.5,
                ..EnergyParams::default()
            })?;
            let err = gradient_check(&s, &m, &BoundarySpec::default(), 10, 7)?;
            Ok((err <= 1e-6, format!("max rel err {err:e}")))
        }),
        check("convexity_probes", || {
            let p = EnergyParams::default();
            let mut worst = 0.0f64;
            for t in ProbeTarget::ALL {
                worst = worst.max(convexity_probe(t, 2000, 1, &p).max_violation);
            }
            Ok((worst <= 1e-9, format!("max violation {worst:e}")))
        }),
        check("spontaneous_floor", || {
            let cfg = parse_config_str("experiment = \"spontaneous_floor\"\n")?;
            let worst = spontaneous_floor(&cfg, 3)?
                .iter()
                .fold(0.0f64, |a, s| a.max(s.rel_err));
            Ok((worst <= FLOOR_TOL, format!("max rel err {worst:e}")))
        }),
        check("affine_image_measure", || {
            let g = build_grid([0.5; 3], [3; 3], false)?;
            let m = image_measure(&State::from_fn(g, |x| (2.0 * x, QTensor::ZERO)), 32)?;
            Ok((
                (m.measure - 8.0).abs() <= m.bound,
                format!("{} +- {}", m.measure, m.bound),
            ))
        }),
        check("identity_multiplicity", || {
            let g = build_grid([0.5; 3], [3; 3], false)?;
            let m = multiplicity(
                &State::identity(g),
                &[Vec3::new(0.1, 0.2, -0.3), Vec3::new(2.0, 0.0, 0.0)],
            );
            Ok((m.counts == [1, 0], format!("{:?}", m.counts)))
        }),
        check("angle_doubling_detected", || {
            let r = ciarlet_necas_check(&angle_doubling(33)?, 128)?;
            let ratio = r.lhs / r.rhs;
            Ok((
                r.verdict == CnVerdict::Violated && (ratio - 1.5).abs() < 0.1,
                format!("ratio {ratio}, expected {}", 4.5 * PI / (3.0 * PI)),
            ))
        }),
        check("csv_round_trip", || {
            let g = build_grid([0.5, 0.25, 0.75], [3, 4, 2], false)?;
            let s = State::from_fn(g, |x| {
                (
                    x * 1.1,
                    QTensor::from_coeffs([x.x / 3.0, 0.0, 0.1, 0.0, x.z]),
                )
            });
            let t = io::to_csv(&s);
            let back = io::to_csv(&io::from_csv(&t, io::DEFAULT_HALF_THICKNESS)?);
            Ok((back == t, format!("{} bytes", t.len())))
        }),
        check("config_growth_condition", || {
            match parse_config_str("experiment = \"stripe\"\n[params]\nr = 3\n") {
                Err(Error::Config { key, message }) => Ok((key == "params.r", message)),
                other => Ok((false, format!("unexpected {other:?}"))),
            }
        }),
    ]
}
