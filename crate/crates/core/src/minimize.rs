//! Feasibility-preserving L-BFGS with Armijo backtracking.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::{assemble, energy, feasibility, BoundarySpec, State};
use crate::energy::{EnergyBreakdown, Material};
use crate::error::{Error, Result};
use crate::sum::compensated;

pub use crate::discretization::Feasibility;

const ROUNDOFF: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Stop when the infinity norm of the gradient falls below this.
    pub grad_tol: f64,
    /// L-BFGS history length; 0 gives steepest descent.
    pub memory: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// Required gap `lambda_min + 1/3` at every node.
    pub feasibility_margin: f64,
    pub seed: u64,
    /// Largest allowed change of any unknown in one step.
    pub max_step: f64,
    pub max_backtracks: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iters: 2000,
            grad_tol: 1e-6,
            memory: 10,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            feasibility_margin: 1e-3,
            seed: 0,
            max_step: 0.25,
            max_backtracks: 60,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::config("armijo_c", "requires 0 < armijo_c < 1"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::config(
                "backtrack_factor",
                "requires 0 < backtrack_factor < 1",
            ));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::config("grad_tol", "must be nonnegative"));
        }
        if !(self.feasibility_margin >= 0.0 && self.feasibility_margin < 1.0) {
            return Err(Error::config("feasibility_margin", "must lie in [0, 1)"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::config("max_step", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    LineSearchFailed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIters => "max_iters",
            Status::LineSearchFailed => "line_search_failed",
        }
    }
}

/// One accepted iterate (iteration 0 is the start).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: EnergyBreakdown,
    pub grad_norm: f64,
    pub step: f64,
    pub min_det: f64,
    pub min_lammin: f64,
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub state: State,
    pub iterations: usize,
    pub energy: EnergyBreakdown,
    pub grad_norm: f64,
    pub status: Status,
    pub feasible: bool,
    pub history: Vec<IterRecord>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    compensated(a.iter().zip(b).map(|(x, y)| x * y))
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Removes the mean over `nodes` from the deformation block of `v`.
fn project_mean(v: &mut [f64], nodes: &[usize], n: usize, plane_strain: bool) {
    if nodes.is_empty() {
        return;
    }
    let dims = if plane_strain { 2 } else { 3 };
    for d in 0..dims {
        let mean = compensated(nodes.iter().map(|&i| v[3 * i + d])) / nodes.len() as f64;
        for i in 0..n {
            v[3 * i + d] -= mean;
        }
    }
}

struct Lbfgs {
    m: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|x| *x = -*x);
        q
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        if self.m == 0 {
            return;
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if self.pairs.len() == self.m {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y, 1.0 / sy));
        }
    }
}

fn record(iter: usize, e: EnergyBreakdown, g: f64, step: f64, f: &Feasibility) -> IterRecord {
    IterRecord {
        iter,
        energy: e,
        grad_norm: g,
        step,
        min_det: f.min_det,
        min_lammin: f.min_lambda,
    }
}

/// Minimizes the discrete energy from a feasible state; every accepted iterate is feasible.
pub fn minimize(
    state0: &State,
    material: &Material,
    bc: &BoundarySpec,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    opts.validate()?;
    let delta0 = material.params.delta0;
    let margin = opts.feasibility_margin;
    let feas0 = feasibility(state0, delta0, margin);
    if !feas0.feasible {
        return Err(Error::Infeasible {
            location: "initial state".into(),
            detail: format!(
                "min det = {}, min lambda = {} (delta0 = {delta0}, margin = {margin})",
                feas0.min_det, feas0.min_lambda
            ),
        });
    }
    let grid = state0.grid.clone();
    let n = grid.node_count();
    let mask = state0.fixed_mask();
    let avg_nodes = bc.average_nodes(&grid).unwrap_or_default();

    let mut state = state0.clone();
    let mut x = state.pack();
    let (mut e, mut g) = assemble(&state, material, bc)?;
    let mut gnorm = inf_norm(&g);
    let mut history = vec![record(0, e, gnorm, 0.0, &feas0)];
    let mut memory = Lbfgs {
        m: opts.memory,
        pairs: VecDeque::new(),
    };
    let mut status = Status::MaxIters;
    let mut iter = 0;

    while iter < opts.max_iters {
        if gnorm <= opts.grad_tol {
            status = Status::Converged;
            break;
        }
        let mut d = memory.direction(&g);
        for (di, &m) in d.iter_mut().zip(&mask) {
            if m {
                *di = 0.0;
            }
        }
        project_mean(&mut d, &avg_nodes, n, grid.plane_strain);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            memory.pairs.clear();
            d = g
                .iter()
                .zip(&mask)
                .map(|(gi, &m)| if m { 0.0 } else { -gi })
                .collect();
            project_mean(&mut d, &avg_nodes, n, grid.plane_strain);
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                status = Status::LineSearchFailed;
                break;
            }
        }
        let dmax = inf_norm(&d);
        let mut alpha = if dmax > opts.max_step {
            opts.max_step / dmax
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            let mut trial = state.clone();
            trial.unpack(&xt)?;
            let f = feasibility(&trial, delta0, margin);
            if f.feasible {
                match energy(&trial, material, bc) {
                    Ok(et)
                        if et.total <= e.total + opts.armijo_c * alpha * slope
                            && et.total < e.total =>
                    {
                        accepted = Some((trial, xt, f));
                        break;
                    }
                    // At the roundoff floor energy differences carry no signal; accept
                    // only if the gradient shrinks.
                    Ok(et) if et.total <= e.total + ROUNDOFF * e.total.abs().max(1.0) => {
                        let (_, gt) = assemble(&trial, material, bc)?;
                        if inf_norm(&gt) < gnorm {
                            accepted = Some((trial, xt, f));
                            break;
                        }
                    }
                    Ok(_) => {}
                    Err(err) if err.is_infeasible() => {}
                    Err(err) => return Err(err),
                }
            }
            alpha *= opts.backtrack_factor;
        }
        let Some((trial, xt, feas)) = accepted else {
            if !memory.pairs.is_empty() {
                memory.pairs.clear();
                continue;
            }
            status = Status::LineSearchFailed;
            break;
        };
        let (et, gt) = assemble(&trial, material, bc)?;
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        state = trial;
        x = xt;
        e = et;
        g = gt;
        gnorm = inf_norm(&g);
        iter += 1;
        history.push(record(iter, e, gnorm, alpha, &feas));
    }
    if status == Status::MaxIters && gnorm <= opts.grad_tol {
        status = Status::Converged;
    }
    let feasible = feasibility(&state, delta0, margin).feasible;
    Ok(MinimizeResult {
        state,
        iterations: iter,
        energy: e,
        grad_norm: gnorm,
        status,
        feasible,
        history,
    })
}

/// Runs [`minimize`] from `state0` and from `extra` seeded perturbations of it,
/// returning the lowest-energy result (earliest start wins ties).
pub fn multistart(
    state0: &State,
    material: &Material,
    bc: &BoundarySpec,
    opts: &MinimizeOptions,
    extra: usize,
    amplitude: f64,
) -> Result<MinimizeResult> {
    let mut best = minimize(state0, material, bc, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mask = state0.fixed_mask();
    let n3 = 3 * state0.grid.node_count();
    for _ in 0..extra {
        let x0 = state0.pack();
        let h = state0.grid.h[0].min(state0.grid.h[1]);
        let mut start = None;
        let mut amp = amplitude;
        for _ in 0..20 {
            let xt: Vec<f64> = x0
                .iter()
                .zip(&mask)
                .enumerate()
                .map(|(i, (xi, &m))| {
                    if m {
                        *xi
                    } else {
                        let scale = if i < n3 { amp * h } else { 0.1 * amp };
                        xi + scale * rng.random_range(-1.0..1.0)
                    }
                })
                .collect();
            let mut s = state0.clone();
            s.unpack(&xt)?;
            if feasibility(&s, material.params.delta0, opts.feasibility_margin).feasible {
                start = Some(s);
                break;
            }
            amp *= 0.5;
        }
        if let Some(s) = start {
            let r = minimize(&s, material, bc, opts)?;
            if r.energy.total < best.energy.total {
                best = r;
            }
        }
    }
    Ok(best)
}

/// Worst relative mismatch between `<grad E, v>` and central differences over
/// random unit directions in the unconstrained unknowns.
pub fn gradient_check(
    state: &State,
    material: &Material,
    bc: &BoundarySpec,
    directions: usize,
    seed: u64,
) -> Result<f64> {
    gradient_check_with(state, material, bc, directions, seed, |_| {})
}

/// [`gradient_check`] with a hook that may alter the analytic gradient before comparison.
pub fn gradient_check_with(
    state: &State,
    material: &Material,
    bc: &BoundarySpec,
    directions: usize,
    seed: u64,
    corrupt: impl Fn(&mut [f64]),
) -> Result<f64> {
    let (_, mut g) = assemble(state, material, bc)?;
    corrupt(&mut g);
    let mask = state.fixed_mask();
    if mask.iter().all(|&m| m) {
        return Ok(0.0);
    }
    let x0 = state.pack();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let mut v: Vec<f64> = mask
            .iter()
            .map(|&m| if m { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let eval = |sgn: f64| -> Result<f64> {
            let xt: Vec<f64> = x0.iter().zip(&v).map(|(a, b)| a + sgn * h * b).collect();
            let mut t = state.clone();
            t.unpack(&xt)?;
            Ok(energy(&t, material, bc)?.total)
        };
        let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * h);
        let an = dot(&g, &v);
        let scale = fd.abs().max(an.abs());
        if scale > 0.0 {
            worst = worst.max((fd - an).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{apply_boundary, build_grid, BoundaryData, PhiBoundary};
    use crate::energy::{EnergyParams, GrowthRegime};
    use crate::tensor::{QTensor, Vec3};

    fn ldg_only() -> EnergyParams {
        EnergyParams {
            mu: 0.0,
            a_t: 1.0,
            l: [0.0, 0.0, 0.5, 0.0],
            kappa: 0.0,
            r_exp: 2.0,
            regime: GrowthRegime::Quadratic,
            ..Default::default()
        }
    }

    #[test]
    fn options_validated() {
        assert!(MinimizeOptions {
            armijo_c: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(MinimizeOptions {
            backtrack_factor: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        MinimizeOptions::default().validate().unwrap();
    }

    #[test]
    fn convex_order_problem_reaches_tight_tolerance() {
        let material = Material::new(ldg_only()).unwrap();
        let g = build_grid([1.0; 3], [5; 3], false).unwrap();
        let mut s = State::from_fn(g, |x| {
            (
                x,
                QTensor([
                    0.1 * x.x,
                    0.05 * x.y * x.z,
                    -0.08 * x.z,
                    0.02,
                    0.1 * x.x * x.y,
                ]),
            )
        });
        for f in s.phi.fixed.iter_mut() {
            *f = [true; 3];
        }
        let opts = MinimizeOptions {
            grad_tol: 1e-8,
            max_iters: 5000,
            ..Default::default()
        };
        let r = minimize(&s, &material, &BoundarySpec::default(), &opts).unwrap();
        assert_eq!(
            r.status,
            Status::Converged,
            "{:?} {}",
            r.status,
            r.grad_norm
        );
        assert!(r.grad_norm <= 1e-8);
        // Nodal checkerboard modes are invisible to one-point quadrature; cell averages are not.
        assert!(r.energy.total.abs() < 1e-10, "{:?}", r.energy);
        let grid = &r.state.grid;
        for cell in 0..grid.cell_count() {
            let nodes = grid.cell_nodes(cell);
            let mean = (0..8)
                .fold(QTensor::ZERO, |acc, m| acc.add(&r.state.q.values[nodes[m]]))
                .scale(0.125);
            assert!(mean.norm() < 1e-6);
        }
        for w in r.history.windows(2) {
            assert!(w[1].energy.total <= w[0].energy.total);
        }
    }

    #[test]
    fn identity_boundary_relaxes_to_identity() {
        let params = EnergyParams {
            a_t: 1.0,
            ..ldg_only()
        };
        let params = EnergyParams {
            mu: 1.0,
            c_det: 1.0,
            ..params
        };
        let material = Material::new(params).unwrap();
        let g = build_grid([1.0; 3], [4; 3], false).unwrap();
        let bc = BoundarySpec {
            phi: PhiBoundary::DirichletFull(BoundaryData::identity()),
            ..Default::default()
        };
        let s0 = State::from_fn(g, |x| {
            (x + 0.05 * Vec3::new(x.y * x.z, 0.0, x.x), QTensor::ZERO)
        });
        let s0 = apply_boundary(&s0, &bc).unwrap();
        let r = minimize(
            &s0,
            &material,
            &bc,
            &MinimizeOptions {
                grad_tol: 1e-9,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.status, Status::Converged);
        assert!(r.feasible);
        for (i, p) in r.state.phi.values.iter().enumerate() {
            assert!((p - r.state.grid.node_position(i)).norm() < 1e-6);
        }
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let material = Material::new(EnergyParams::default()).unwrap();
        let g = build_grid([1.0; 3], [3; 3], false).unwrap();
        let s = State::from_fn(g, |x| (0.05 * x, QTensor::ZERO));
        let err = minimize(
            &s,
            &material,
            &BoundarySpec::default(),
            &MinimizeOptions::default(),
        )
        .unwrap_err();
        assert!(err.is_infeasible());
    }

    #[test]
    fn gradient_check_detects_corruption() {
        let material = Material::new(EnergyParams {
            c_det: 1.0,
            ..Default::default()
        })
        .unwrap();
        let g = build_grid([1.0; 3], [4; 3], false).unwrap();
        let s = State::from_fn(g, |x| {
            (
                x + 0.05 * Vec3::new(x.y.sin(), x.z.cos(), x.x * x.y),
                QTensor([0.1 * x.x, 0.1, 0.0, 0.05 * x.z, 0.0]),
            )
        });
        let bc = BoundarySpec::default();
        assert!(gradient_check(&s, &material, &bc, 10, 1).unwrap() < 1e-6);
        let bad = gradient_check_with(&s, &material, &bc, 10, 1, |g| {
            g.iter_mut().for_each(|x| *x *= 1.5)
        })
        .unwrap();
        assert!(bad > 1e-3);

        let mut pinned = s.clone();
        pinned.phi.fixed.iter_mut().for_each(|f| *f = [true; 3]);
        pinned.q.fixed.iter_mut().for_each(|f| *f = true);
        assert_eq!(gradient_check(&pinned, &material, &bc, 5, 1).unwrap(), 0.0);
    }

    #[test]
    fn partial_average_is_preserved() {
        let material = Material::new(EnergyParams {
            c_det: 2.0,
            ..Default::default()
        })
        .unwrap();
        let g = build_grid([1.0; 3], [4; 3], false).unwrap();
        let bc = BoundarySpec {
            phi: PhiBoundary::PartialAverage {
                lo: Vec3::repeat(-1.0),
                hi: Vec3::zeros(),
            },
            ..Default::default()
        };
        let s = State::from_fn(g, |x| (x + 0.1 * Vec3::new(x.y, 0.0, 0.0), QTensor::ZERO));
        let s = apply_boundary(&s, &bc).unwrap();
        let r = minimize(
            &s,
            &material,
            &bc,
            &MinimizeOptions {
                max_iters: 50,
                ..Default::default()
            },
        )
        .unwrap();
        let nodes = bc.average_nodes(&r.state.grid).unwrap();
        let mean = nodes.iter().map(|&i| r.state.phi.values[i]).sum::<Vec3>() / nodes.len() as f64;
        assert!(mean.norm() < 1e-12);
        assert!(r.feasible);
    }
}
