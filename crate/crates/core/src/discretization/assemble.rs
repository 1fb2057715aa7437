use rayon::prelude::*;

use crate::energy::{
    bulk_eval, elastic_eval, pullback_coeff, surface_eval, CoeffGrad, EnergyBreakdown, Material,
};
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;
use crate::tensor::{cofactor, project, sym_eigenvalues, Mat3, QTensor, LAMBDA_FLOOR};

use super::boundary::face_elements;
use super::{BoundarySpec, Grid, State};

struct CellOut {
    elastic: f64,
    gradient: f64,
    bulk: f64,
    d_f: Mat3,
    d_q: [f64; 5],
    d_d: CoeffGrad,
}

fn cell_location(grid: &Grid, cell: usize) -> String {
    let [i, j, k] = grid.cell_ijk(cell);
    let c = grid.cell_center(cell);
    format!(
        "cell ({i}, {j}, {k}) at ({:.6}, {:.6}, {:.6})",
        c.x, c.y, c.z
    )
}

fn node_location(grid: &Grid, node: usize) -> String {
    let [i, j, k] = grid.node_ijk(node);
    format!("node ({i}, {j}, {k})")
}

fn check_nodes(state: &State) -> Result<()> {
    let bad = state
        .q
        .values
        .par_iter()
        .position_first(|q| !q.in_q_set(0.0));
    match bad {
        Some(node) => Err(Error::Infeasible {
            location: node_location(&state.grid, node),
            detail: format!("lambda_min = {} <= -1/3", state.q.values[node].lambda_min()),
        }),
        None => Ok(()),
    }
}

fn cell_eval(state: &State, material: &Material, cell: usize, want_grad: bool) -> Result<CellOut> {
    let grid = &state.grid;
    let params = &material.params;
    let nodes = grid.cell_nodes(cell);
    let grads = grid.shape_gradients();
    let nc = grid.corners();

    let mut f = Mat3::zeros();
    let mut d = CoeffGrad::zeros();
    let mut qc = [0.0; 5];
    for m in 0..nc {
        let g = grads[m];
        f += state.phi.values[nodes[m]] * g.transpose();
        let q = &state.q.values[nodes[m]].0;
        for a in 0..5 {
            qc[a] += q[a];
            for k in 0..3 {
                d[(a, k)] += q[a] * g[k];
            }
        }
    }
    if grid.plane_strain {
        f[(2, 2)] += 1.0;
    }
    for v in qc.iter_mut() {
        *v /= nc as f64;
    }
    let qc = QTensor(qc);
    let t = crate::tensor::det3(&f);
    if !(t >= params.delta0) {
        return Err(Error::Infeasible {
            location: cell_location(grid, cell),
            detail: format!("det grad phi = {t} < delta0 = {}", params.delta0),
        });
    }

    let l = params.a0 * (qc.matrix() + Mat3::identity() / 3.0);
    let el = elastic_eval(&f, &l, params)?;
    let pb = pullback_coeff(&d, &f, &qc, params)?;
    let (fb, gb) = bulk_eval(&qc, material)?;

    let mut out = CellOut {
        elastic: el.value,
        gradient: pb.value,
        bulk: t * fb,
        d_f: Mat3::zeros(),
        d_q: [0.0; 5],
        d_d: CoeffGrad::zeros(),
    };
    if want_grad {
        out.d_f = el.d_f + pb.d_f + fb * cofactor(&f);
        let el_q = project(&el.d_l);
        for a in 0..5 {
            out.d_q[a] = params.a0 * el_q[a] + pb.d_q[a] + t * gb[a];
        }
        out.d_d = pb.d_d;
    }
    Ok(out)
}

fn evaluate(
    state: &State,
    material: &Material,
    bc: &BoundarySpec,
    want_grad: bool,
) -> Result<(EnergyBreakdown, Vec<f64>)> {
    check_nodes(state)?;
    let grid = &state.grid;
    let params = &material.params;
    let cells: Vec<Result<CellOut>> = (0..grid.cell_count())
        .into_par_iter()
        .map(|c| cell_eval(state, material, c, want_grad))
        .collect();

    let n = grid.node_count();
    let vol = grid.cell_volume();
    let nc = grid.corners();
    let grads = grid.shape_gradients();
    let mut grad = if want_grad {
        vec![0.0; 8 * n]
    } else {
        Vec::new()
    };
    let (mut el, mut gr, mut bu) = (
        CompensatedSum::default(),
        CompensatedSum::default(),
        CompensatedSum::default(),
    );
    let q_off = 3 * n;
    for (cell, res) in cells.into_iter().enumerate() {
        let out = res?;
        el.add(vol * out.elastic);
        gr.add(vol * out.gradient);
        bu.add(vol * out.bulk);
        if want_grad {
            let nodes = grid.cell_nodes(cell);
            for m in 0..nc {
                let node = nodes[m];
                let gp = vol * (out.d_f * grads[m]);
                for dd in 0..3 {
                    grad[3 * node + dd] += gp[dd];
                }
                let gq = out.d_d * grads[m];
                for a in 0..5 {
                    grad[q_off + 5 * node + a] += vol * (out.d_q[a] / nc as f64 + gq[a]);
                }
            }
        }
    }

    let mut surf = CompensatedSum::default();
    if !bc.surface.is_empty() {
        for fe in face_elements(grid, bc.surface) {
            let mut qf = [0.0; 5];
            for &node in &fe.nodes[..fe.count] {
                for a in 0..5 {
                    qf[a] += state.q.values[node].0[a];
                }
            }
            for v in qf.iter_mut() {
                *v /= fe.count as f64;
            }
            let (h, g) = surface_eval(&QTensor(qf), &params.q0_surface);
            surf.add(fe.area * h);
            if want_grad && params.sigma != 0.0 {
                let w = params.sigma * fe.area / fe.count as f64;
                for &node in &fe.nodes[..fe.count] {
                    for a in 0..5 {
                        grad[q_off + 5 * node + a] += w * g[a];
                    }
                }
            }
        }
    }

    if want_grad {
        for (g, fixed) in grad.iter_mut().zip(state.fixed_mask()) {
            if fixed {
                *g = 0.0;
            }
        }
    }
    let breakdown = EnergyBreakdown::new(
        el.value(),
        gr.value(),
        bu.value(),
        surf.value(),
        params.sigma,
    );
    Ok((breakdown, grad))
}

/// Discrete energy and its gradient with respect to the packed unknowns
/// (`phi` block first, then `q`); constrained entries are zero.
pub fn assemble(
    state: &State,
    material: &Material,
    bc: &BoundarySpec,
) -> Result<(EnergyBreakdown, Vec<f64>)> {
    evaluate(state, material, bc, true)
}

/// Discrete energy only.
pub fn energy(state: &State, material: &Material, bc: &BoundarySpec) -> Result<EnergyBreakdown> {
    Ok(evaluate(state, material, bc, false)?.0)
}

/// Pointwise constraint summary of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    /// Minimum of `det grad phi` over cell centers.
    pub min_det: f64,
    pub min_det_cell: usize,
    /// Minimum nodal eigenvalue of the order tensor.
    pub min_lambda: f64,
    pub min_lambda_node: usize,
    pub feasible: bool,
}

/// Checks `det grad phi >= delta0` at every cell center and
/// `lambda_min >= -1/3 + margin` at every node.
pub fn feasibility(state: &State, delta0: f64, margin: f64) -> Feasibility {
    let dets: Vec<f64> = state
        .deformation_gradients()
        .par_iter()
        .map(crate::tensor::det3)
        .collect();
    let lams: Vec<f64> = state
        .q
        .values
        .par_iter()
        .map(|q| sym_eigenvalues(&q.matrix())[0])
        .collect();
    let argmin = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold((usize::MAX, f64::INFINITY), |acc, (i, &x)| {
                if x < acc.1 || x.is_nan() {
                    (i, x)
                } else {
                    acc
                }
            })
    };
    let (min_det_cell, min_det) = argmin(&dets);
    let (min_lambda_node, min_lambda) = argmin(&lams);
    let strict = state.q.values.iter().all(|q| q.in_q_set(0.0));
    Feasibility {
        min_det,
        min_det_cell,
        min_lambda,
        min_lambda_node,
        feasible: min_det >= delta0 && min_lambda >= LAMBDA_FLOOR + margin && strict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{
        apply_boundary, build_grid, BoundaryData, FaceSet, PhiBoundary, QDirichlet,
    };
    use crate::energy::{trace_elastic, EnergyParams};
    use crate::tensor::{spd_sqrt, StepTensor, Vec3};
    use crate::testutil::rel_err;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn elastic_only() -> EnergyParams {
        EnergyParams {
            l: [0.0; 4],
            kappa: 1e-12,
            ..Default::default()
        }
    }

    #[test]
    fn identity_state_energy() {
        let material = Material::new(elastic_only()).unwrap();
        let g = build_grid([1.0, 0.5, 0.75], [4, 3, 5], false).unwrap();
        let s = State::identity(g.clone());
        let e = energy(&s, &material, &BoundarySpec::default()).unwrap();
        assert!(rel_err(e.elastic, 2.0 * g.volume()) < 1e-12);
        assert_eq!(e.ldg_gradient, 0.0);
        let expect_bulk = (material.bulk_shift()) * g.volume();
        assert!((e.bulk - expect_bulk).abs() < 1e-12 * expect_bulk.abs().max(1.0));
    }

    #[test]
    fn spontaneous_affine_state_costs_the_floor() {
        let material = Material::new(elastic_only()).unwrap();
        let q = QTensor::uniaxial(0.4, &Vec3::new(1.0, 1.0, 0.0).normalize()).unwrap();
        let l = StepTensor::new(&q, 3.0).unwrap();
        let root = spd_sqrt(&l.m).unwrap();
        let g = build_grid([1.0; 3], [3; 3], false).unwrap();
        let s = State::from_fn(g.clone(), |x| (root * x, q));
        let e = energy(&s, &material, &BoundarySpec::default()).unwrap();
        assert!(rel_err(e.elastic, 2.0 * g.volume()) < 1e-12);
    }

    #[test]
    fn affine_state_matches_closed_form() {
        let params = EnergyParams {
            alpha_coer: 0.3,
            c_adj: 0.2,
            c_det: 1.5,
            ..Default::default()
        };
        let material = Material::new(params.clone()).unwrap();
        let a = Mat3::new(1.2, 0.1, 0.0, -0.2, 0.9, 0.3, 0.05, 0.0, 1.1);
        let q = QTensor::biaxial(0.3, 0.5, &Vec3::x(), &Vec3::y()).unwrap();
        let g = build_grid([0.5, 1.0, 1.5], [3, 4, 5], false).unwrap();
        let s = State::from_fn(g.clone(), |x| (a * x, q));
        let e = energy(&s, &material, &BoundarySpec::default()).unwrap();
        let l = params.a0 * (q.matrix() + Mat3::identity() / 3.0);
        let w = elastic_eval(&a, &l, &params).unwrap().value;
        let t = crate::tensor::det3(&a);
        let fb = crate::energy::bulk_total(&q, &material).unwrap();
        assert!(rel_err(e.elastic, w * g.volume()) < 1e-12);
        assert!(rel_err(e.bulk, t * fb * g.volume()) < 1e-12);
        assert!(e.ldg_gradient.abs() < 1e-20);
        let trace = trace_elastic(&a, &StepTensor { m: l, a0: 3.0 }, 1.0).unwrap();
        assert!(trace < w);
    }

    #[test]
    fn infeasible_cell_is_located() {
        let material = Material::new(EnergyParams::default()).unwrap();
        let g = build_grid([1.0; 3], [3; 3], false).unwrap();
        let mut s = State::identity(g.clone());
        let node = g.node_index(2, 2, 2);
        s.phi.values[node] = Vec3::new(-1.0, -1.0, -1.0);
        match energy(&s, &material, &BoundarySpec::default()) {
            Err(Error::Infeasible { location, .. }) => {
                assert!(location.starts_with("cell (1, 1, 1)"), "{location}")
            }
            other => panic!("{other:?}"),
        }
        let mut s = State::identity(g);
        s.q.values[5] = QTensor::uniaxial(1.0, &Vec3::z()).unwrap();
        match energy(&s, &material, &BoundarySpec::default()) {
            Err(Error::Infeasible { location, .. }) => {
                assert!(location.starts_with("node"), "{location}")
            }
            other => panic!("{other:?}"),
        }
    }

    fn smooth_state(grid: Grid, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        State::from_fn(grid, move |x| {
            let phi = x + 0.08
                * Vec3::new(
                    (c[0] * x.y + x.z).sin(),
                    (c[1] * x.x).cos(),
                    (c[2] * x.x * x.y).sin(),
                );
            let q = QTensor([
                0.2 * (c[3] * x.x).sin(),
                0.1 + 0.1 * (c[4] * x.y).cos(),
                0.05 * x.z,
                0.1 * (c[5] * x.x * x.z).sin(),
                -0.05 * x.y,
            ]);
            (phi, q)
        })
    }

    fn full_params() -> EnergyParams {
        EnergyParams {
            alpha_coer: 0.2,
            c_adj: 0.1,
            c_det: 2.0,
            l: [0.05, 0.02, 0.1, 0.03],
            kappa: 0.01,
            sigma: 0.7,
            q0_surface: QTensor::uniaxial(0.3, &Vec3::x()).unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let material = Material::new(full_params()).unwrap();
        let g = build_grid([1.0, 0.8, 0.6], [5, 4, 4], false).unwrap();
        let bc = BoundarySpec {
            phi: PhiBoundary::DirichletPartial {
                faces: FaceSet::X_FACES,
                components: [true, false, true],
                data: BoundaryData::identity(),
            },
            q: Some(QDirichlet {
                faces: FaceSet::NONE.with(super::super::Face::ZMin),
                value: QTensor::ZERO,
            }),
            surface: FaceSet::ALL,
        };
        let s = apply_boundary(&smooth_state(g, 1), &bc).unwrap();
        let (_, grad) = assemble(&s, &material, &bc).unwrap();
        let mask = s.fixed_mask();
        for (gv, &m) in grad.iter().zip(&mask) {
            if m {
                assert_eq!(*gv, 0.0);
            }
        }
        let x0 = s.pack();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let v: Vec<f64> = mask
                .iter()
                .map(|&m| if m { 0.0 } else { rng.random_range(-1.0..1.0) })
                .collect();
            let eval = |sgn: f64| {
                let x: Vec<f64> = x0.iter().zip(&v).map(|(a, b)| a + sgn * h * b).collect();
                let mut t = s.clone();
                t.unpack(&x).unwrap();
                energy(&t, &material, &bc).unwrap().total
            };
            let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
            let an: f64 = grad.iter().zip(&v).map(|(a, b)| a * b).sum();
            worst = worst.max(rel_err(fd, an));
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn plane_strain_gradient_matches_finite_differences() {
        let material = Material::new(full_params()).unwrap();
        let g = build_grid([1.0, 0.8, 0.3], [6, 5, 1], true).unwrap();
        let bc = BoundarySpec {
            surface: FaceSet::Y_FACES,
            ..Default::default()
        };
        let s = apply_boundary(&smooth_state(g, 3), &bc).unwrap();
        let (_, grad) = assemble(&s, &material, &bc).unwrap();
        let x0 = s.pack();
        let mask = s.fixed_mask();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-5;
        for _ in 0..10 {
            let v: Vec<f64> = mask
                .iter()
                .map(|&m| if m { 0.0 } else { rng.random_range(-1.0..1.0) })
                .collect();
            let eval = |sgn: f64| {
                let x: Vec<f64> = x0.iter().zip(&v).map(|(a, b)| a + sgn * h * b).collect();
                let mut t = s.clone();
                t.unpack(&x).unwrap();
                energy(&t, &material, &bc).unwrap().total
            };
            let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
            let an: f64 = grad.iter().zip(&v).map(|(a, b)| a * b).sum();
            assert!(rel_err(fd, an) < 1e-6, "{fd} {an}");
        }
    }

    #[test]
    fn energy_converges_at_second_order() {
        let material = Material::new(full_params()).unwrap();
        let bc = BoundarySpec {
            surface: FaceSet::Y_FACES,
            ..Default::default()
        };
        let e = |n: usize| {
            let g = build_grid([1.0, 1.0, 0.5], [n, n, 1], true).unwrap();
            let s = State::from_fn(g, |x| {
                let phi = x + 0.1 * Vec3::new((x.y).sin(), (x.x).cos() * 0.5, 0.0);
                let q = QTensor([
                    0.2 * x.x.sin(),
                    0.1 + 0.1 * x.y.cos(),
                    0.05 * x.x * x.y,
                    0.0,
                    0.0,
                ]);
                (phi, q)
            });
            energy(&s, &material, &bc).unwrap().total
        };
        let (e1, e2, e3) = (e(17), e(33), e(65));
        let order = ((e1 - e2) / (e2 - e3)).abs().log2();
        assert!(order >= 1.9, "{order}");
    }

    #[test]
    fn feasibility_examples() {
        let g = build_grid([1.0; 3], [3; 3], false).unwrap();
        let s = State::identity(g.clone());
        let r = feasibility(&s, 0.1, 1e-3);
        assert!(r.feasible);
        assert!((r.min_det - 1.0).abs() < 1e-14);

        let s = State::from_fn(g.clone(), |x| {
            (Vec3::new(0.1 * x.x, x.y, x.z), QTensor::ZERO)
        });
        let r = feasibility(&s, 0.5, 1e-3);
        assert!(!r.feasible);
        assert!((r.min_det - 0.1).abs() < 1e-14);

        let q = QTensor::uniaxial(0.999, &Vec3::z()).unwrap();
        let s = State::from_fn(g, |x| (x, q));
        let r = feasibility(&s, 0.1, 1e-3);
        assert!(!r.feasible);
        assert!((r.min_lambda + 0.333).abs() < 1e-12);
    }
}
