use lce_core::discretization::feasibility;
use lce_core::energy::{bulk_total, elastic_eval, trace_elastic};
use lce_core::experiments::count_bands;
use lce_core::injectivity::image_measure;
use lce_core::tensor::{det3, rotation};
use lce_core::{
    build_grid, io, minimize, BoundarySpec, EnergyParams, Mat3, Material, MinimizeOptions, QTensor,
    State, Vec3,
};
use proptest::prelude::*;

fn coeffs() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(-0.3..0.3f64)
}

fn admissible_q() -> impl Strategy<Value = QTensor> {
    coeffs()
        .prop_map(QTensor::from_coeffs)
        .prop_filter("inside the admissible set", |q| q.in_q_set(0.02))
}

fn unit_vec() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-1.0..1.0f64)
        .prop_map(|a| Vec3::new(a[0], a[1], a[2]))
        .prop_filter("nonzero", |v| v.norm() > 0.1)
        .prop_map(|v| v.normalize())
}

fn rot() -> impl Strategy<Value = Mat3> {
    (unit_vec(), -3.1..3.1f64).prop_map(|(a, t)| rotation(&a, t))
}

fn positive_f() -> impl Strategy<Value = Mat3> {
    prop::array::uniform9(-0.4..0.4f64)
        .prop_map(|a| Mat3::identity() + Mat3::from_row_slice(&a))
        .prop_filter("orientation preserving", |f| det3(f) > 0.3)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn q_matrix_is_symmetric_traceless_and_isometric(c in coeffs()) {
        let q = QTensor::from_coeffs(c);
        let m = q.matrix();
        prop_assert!((m - m.transpose()).norm() < 1e-15);
        prop_assert!(m.trace().abs() < 1e-15);
        prop_assert!(close(m.norm(), q.norm(), 1e-14));
        let back = QTensor::from_matrix(&m).unwrap().coeffs();
        for i in 0..5 {
            prop_assert!((back[i] - c[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn step_tensor_spectrum_tracks_order_tensor(q in admissible_q(), a0 in 0.5..3.0f64) {
        let l = q.step_tensor(a0).unwrap();
        prop_assert!(close(l.lambda_min(), a0 * (q.lambda_min() + 1.0 / 3.0), 1e-12));
        let e = q.eigenvalues();
        let det = a0.powi(3) * e.iter().map(|x| x + 1.0 / 3.0).product::<f64>();
        prop_assert!(close(l.det(), det, 1e-12));
    }

    #[test]
    fn elastic_energy_is_frame_indifferent(f in positive_f(), q in admissible_q(), r in rot()) {
        let p = EnergyParams { alpha_coer: 0.2, c_adj: 0.1, c_det: 0.5, ..EnergyParams::default() };
        let l = q.step_tensor(1.0).unwrap().m;
        let w = elastic_eval(&f, &l, &p).unwrap().value;
        let wr = elastic_eval(&(r * f), &(r * l * r.transpose()), &p).unwrap().value;
        prop_assert!(close(w, wr, 1e-10), "{} vs {}", w, wr);
    }

    #[test]
    fn elastic_energy_is_isotropic_in_the_reference(f in positive_f(), q in admissible_q(), r in rot()) {
        let p = EnergyParams { alpha_coer: 0.2, c_adj: 0.1, c_det: 0.5, ..EnergyParams::default() };
        let l = q.step_tensor(1.2).unwrap().m;
        let w = elastic_eval(&f, &l, &p).unwrap().value;
        let wr = elastic_eval(&(f * r), &l, &p).unwrap().value;
        prop_assert!(close(w, wr, 1e-10), "{} vs {}", w, wr);
    }

    #[test]
    fn trace_elastic_respects_am_gm_floor(f in positive_f(), q in admissible_q(), a0 in 0.5..2.0f64) {
        let l = q.step_tensor(a0).unwrap();
        let w = trace_elastic(&f, &l, 1.0).unwrap();
        let floor = 3.0 * det3(&f).powf(2.0 / 3.0) / l.det().cbrt() - 1.0;
        prop_assert!(w >= floor - 1e-12 * floor.abs().max(1.0), "{} < {}", w, floor);
    }

    #[test]
    fn bulk_energy_is_isotropic(q in admissible_q(), r in rot()) {
        let m = Material::new(EnergyParams::default()).unwrap();
        let qr = QTensor::from_matrix(&(r * q.matrix() * r.transpose())).unwrap();
        let (a, b) = (bulk_total(&q, &m).unwrap(), bulk_total(&qr, &m).unwrap());
        prop_assert!(close(a, b, 1e-11), "{} vs {}", a, b);
    }

    #[test]
    fn count_bands_counts_sign_runs(runs in prop::collection::vec(1usize..5, 1..6), start_positive in any::<bool>()) {
        let mut profile = Vec::new();
        for (k, &len) in runs.iter().enumerate() {
            let sign = if (k % 2 == 0) == start_positive { 1.0 } else { -1.0 };
            profile.extend(std::iter::repeat_n(sign * 0.1, len));
            profile.push(0.0);
        }
        prop_assert_eq!(count_bands(&profile, 1e-6), runs.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_round_trip_is_exact(n in prop::array::uniform3(2usize..5), seed in prop::array::uniform5(-0.2..0.2f64)) {
        let g = build_grid([0.5, 0.3, 0.7], n, false).unwrap();
        let s = State::from_fn(g, |x| {
            (x + Vec3::new(seed[0] * x.y, seed[1] * x.z, seed[2] * x.x), QTensor::from_coeffs([seed[3] * x.x, 0.0, seed[4], x.y * 0.1, -0.05]))
        });
        let text = io::to_csv(&s);
        let back = io::from_csv(&text, io::DEFAULT_HALF_THICKNESS).unwrap();
        prop_assert_eq!(io::to_csv(&back), text);
    }

    #[test]
    fn affine_image_measure_within_bound(f in positive_f(), b in prop::array::uniform3(-1.0..1.0f64)) {
        let g = build_grid([0.5; 3], [3; 3], false).unwrap();
        let shift = Vec3::new(b[0], b[1], b[2]);
        let s = State::from_fn(g, |x| (f * x + shift, QTensor::ZERO));
        let m = image_measure(&s, 32).unwrap();
        prop_assert!((m.measure - det3(&f)).abs() <= m.bound, "{} vs {} +- {}", m.measure, det3(&f), m.bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn minimizer_keeps_states_feasible(f in positive_f(), q in admissible_q(), iters in 5usize..40) {
        let g = build_grid([0.5; 3], [3; 3], false).unwrap();
        let s = State::from_fn(g, |x| (f * x + 0.05 * Vec3::new(x.y * x.y, x.z * x.x, x.x), q.scale(1.0 + 0.3 * x.x)));
        let p = EnergyParams::default();
        let opts = MinimizeOptions { max_iters: iters, ..MinimizeOptions::default() };
        prop_assume!(feasibility(&s, p.delta0, opts.feasibility_margin).feasible);
        let m = Material::new(p.clone()).unwrap();
        let r = minimize(&s, &m, &BoundarySpec::default(), &opts).unwrap();
        let fe = feasibility(&r.state, p.delta0, opts.feasibility_margin);
        prop_assert!(fe.min_det >= p.delta0 && fe.min_lambda >= -1.0 / 3.0 + opts.feasibility_margin);
        prop_assert!(r.energy.total <= r.history[0].energy.total);
    }
}
