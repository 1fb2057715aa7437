//! Structured tensor-product grid on the box `(-a,a) x (-b,b) x (-c,c)`,
//! nodal fields, and midpoint-rule assembly of the discrete energy.
//!
//! Nodes are numbered `(i * ny + j) * nz + k` (z fastest). Each cell uses one
//! quadrature point at its center, where trilinear shape functions give
//! gradients `dN/dx = +-1 / (4 h)`. In plane-strain mode the grid has a single
//! layer of nodes at `z = 0`, shape functions are bilinear, `phi3` is pinned to
//! zero, and the deformation gradient gets `e3 (x) e3` so that `y3 = x3`.

mod assemble;
mod boundary;

pub use assemble::{assemble, energy, feasibility, Feasibility};
pub use boundary::{
    apply_boundary, BoundaryData, BoundarySpec, Face, FaceSet, PhiBoundary, QDirichlet,
};

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::tensor::{Mat3, QTensor, Vec3};

/// Uniform tensor-product grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    /// Half-extents `(a, b, c)`.
    pub extents: [f64; 3],
    /// Node counts per axis (`n[2] == 1` in plane strain).
    pub n: [usize; 3],
    /// Node spacing; in plane strain `h[2]` is the slab thickness `2c`.
    pub h: [f64; 3],
    pub plane_strain: bool,
}

pub fn build_grid(extents: [f64; 3], resolution: [usize; 3], plane_strain: bool) -> Result<Grid> {
    for (d, &e) in extents.iter().enumerate() {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Precondition(format!(
                "extent {d} must be positive, got {e}"
            )));
        }
    }
    let active = if plane_strain { 2 } else { 3 };
    for (d, &n) in resolution.iter().enumerate().take(active) {
        if n < 2 {
            return Err(Error::Precondition(format!(
                "axis {d} needs at least 2 nodes, got {n}"
            )));
        }
    }
    let mut n = resolution;
    let mut h = [0.0; 3];
    for d in 0..active {
        h[d] = 2.0 * extents[d] / (n[d] - 1) as f64;
    }
    if plane_strain {
        n[2] = 1;
        h[2] = 2.0 * extents[2];
    }
    Ok(Grid {
        extents,
        n,
        h,
        plane_strain,
    })
}

impl Grid {
    pub fn node_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Cells per axis.
    pub fn cells(&self) -> [usize; 3] {
        let cz = if self.plane_strain { 1 } else { self.n[2] - 1 };
        [self.n[0] - 1, self.n[1] - 1, cz]
    }

    pub fn cell_count(&self) -> usize {
        let c = self.cells();
        c[0] * c[1] * c[2]
    }

    /// Corners per cell: 8, or 4 in plane strain.
    pub fn corners(&self) -> usize {
        if self.plane_strain {
            4
        } else {
            8
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }

    /// `|Omega| = 8abc`.
    pub fn volume(&self) -> f64 {
        8.0 * self.extents[0] * self.extents[1] * self.extents[2]
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    #[inline]
    pub fn node_ijk(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n[2];
        let j = (idx / self.n[2]) % self.n[1];
        let i = idx / (self.n[1] * self.n[2]);
        [i, j, k]
    }

    pub fn node_position(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.node_ijk(idx);
        let z = if self.plane_strain {
            0.0
        } else {
            -self.extents[2] + k as f64 * self.h[2]
        };
        Vec3::new(
            -self.extents[0] + i as f64 * self.h[0],
            -self.extents[1] + j as f64 * self.h[1],
            z,
        )
    }

    #[inline]
    pub fn cell_ijk(&self, cell: usize) -> [usize; 3] {
        let c = self.cells();
        [cell / (c[1] * c[2]), (cell / c[2]) % c[1], cell % c[2]]
    }

    /// Corner node indices of a cell; only the first [`Grid::corners`] entries are used.
    #[inline]
    pub fn cell_nodes(&self, cell: usize) -> [usize; 8] {
        let [i, j, k] = self.cell_ijk(cell);
        let mut out = [0; 8];
        for (m, slot) in out.iter_mut().enumerate().take(self.corners()) {
            let (di, dj, dk) = corner_offsets(m, self.plane_strain);
            *slot = self.node_index(i + di, j + dj, k + dk);
        }
        out
    }

    pub fn cell_center(&self, cell: usize) -> Vec3 {
        let [i, j, k] = self.cell_ijk(cell);
        let z = if self.plane_strain {
            0.0
        } else {
            -self.extents[2] + (k as f64 + 0.5) * self.h[2]
        };
        Vec3::new(
            -self.extents[0] + (i as f64 + 0.5) * self.h[0],
            -self.extents[1] + (j as f64 + 0.5) * self.h[1],
            z,
        )
    }

    /// Shape-function gradients at the cell center, in corner order.
    pub fn shape_gradients(&self) -> [Vec3; 8] {
        let mut out = [Vec3::zeros(); 8];
        for (m, g) in out.iter_mut().enumerate().take(self.corners()) {
            let (di, dj, dk) = corner_offsets(m, self.plane_strain);
            let s = |d: usize| if d == 1 { 1.0 } else { -1.0 };
            *g = if self.plane_strain {
                Vec3::new(s(di) / (2.0 * self.h[0]), s(dj) / (2.0 * self.h[1]), 0.0)
            } else {
                Vec3::new(
                    s(di) / (4.0 * self.h[0]),
                    s(dj) / (4.0 * self.h[1]),
                    s(dk) / (4.0 * self.h[2]),
                )
            };
        }
        out
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.n == other.n && self.plane_strain == other.plane_strain
    }
}

/// `(di, dj, dk)` of corner `m`, last active axis fastest.
#[inline]
pub(crate) fn corner_offsets(m: usize, plane_strain: bool) -> (usize, usize, usize) {
    if plane_strain {
        ((m >> 1) & 1, m & 1, 0)
    } else {
        ((m >> 2) & 1, (m >> 1) & 1, m & 1)
    }
}

/// Cell-center gradients of a nodal field with `D` components.
pub fn fd_gradient<const D: usize>(
    field: &[[f64; D]],
    grid: &Grid,
) -> Result<Vec<SMatrix<f64, D, 3>>> {
    if field.len() != grid.node_count() {
        return Err(Error::Shape(format!(
            "field has {} nodes, grid has {}",
            field.len(),
            grid.node_count()
        )));
    }
    let grads = grid.shape_gradients();
    let nc = grid.corners();
    Ok((0..grid.cell_count())
        .map(|cell| {
            let nodes = grid.cell_nodes(cell);
            let mut g = SMatrix::<f64, D, 3>::zeros();
            for m in 0..nc {
                let v = &field[nodes[m]];
                for a in 0..D {
                    for k in 0..3 {
                        g[(a, k)] += v[a] * grads[m][k];
                    }
                }
            }
            g
        })
        .collect())
}

/// Nodal deformation with a per-axis Dirichlet mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    pub values: Vec<Vec3>,
    pub fixed: Vec<[bool; 3]>,
}

/// Nodal order tensor with a per-node Dirichlet mask.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderField {
    pub values: Vec<QTensor>,
    pub fixed: Vec<bool>,
}

/// Discrete state `(phi, Q~)` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub grid: Grid,
    pub phi: DeformationField,
    pub q: OrderField,
}

impl State {
    /// Identity deformation with isotropic order.
    pub fn identity(grid: Grid) -> Self {
        Self::from_fn(grid, |x| (x, QTensor::ZERO))
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(Vec3) -> (Vec3, QTensor)) -> Self {
        let n = grid.node_count();
        let mut phi = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for idx in 0..n {
            let (p, qq) = f(grid.node_position(idx));
            phi.push(p);
            q.push(qq);
        }
        let plane = grid.plane_strain;
        if plane {
            for p in phi.iter_mut() {
                p.z = 0.0;
            }
        }
        State {
            phi: DeformationField {
                values: phi,
                fixed: vec![[false, false, plane]; n],
            },
            q: OrderField {
                values: q,
                fixed: vec![false; n],
            },
            grid,
        }
    }

    /// Number of packed unknowns, `8 * nodes` (`phi` first, then `q`).
    pub fn dof(&self) -> usize {
        8 * self.grid.node_count()
    }

    pub fn pack(&self) -> Vec<f64> {
        let n = self.grid.node_count();
        let mut out = Vec::with_capacity(8 * n);
        for p in &self.phi.values {
            out.extend_from_slice(p.as_slice());
        }
        for q in &self.q.values {
            out.extend_from_slice(&q.0);
        }
        out
    }

    pub fn unpack(&mut self, x: &[f64]) -> Result<()> {
        let n = self.grid.node_count();
        if x.len() != 8 * n {
            return Err(Error::Shape(format!(
                "expected {} unknowns, got {}",
                8 * n,
                x.len()
            )));
        }
        for (i, p) in self.phi.values.iter_mut().enumerate() {
            *p = Vec3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
        }
        let off = 3 * n;
        for (i, q) in self.q.values.iter_mut().enumerate() {
            q.0.copy_from_slice(&x[off + 5 * i..off + 5 * i + 5]);
        }
        Ok(())
    }

    /// Packed mask, `true` for constrained unknowns.
    pub fn fixed_mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.dof());
        for f in &self.phi.fixed {
            out.extend_from_slice(f);
        }
        for &f in &self.q.fixed {
            out.extend_from_slice(&[f; 5]);
        }
        out
    }

    /// Deformation gradient at every cell center.
    pub fn deformation_gradients(&self) -> Vec<Mat3> {
        let raw: Vec<[f64; 3]> = self.phi.values.iter().map(|v| [v.x, v.y, v.z]).collect();
        let mut out = fd_gradient(&raw, &self.grid).expect("state shapes are consistent");
        if self.grid.plane_strain {
            for f in out.iter_mut() {
                f[(2, 2)] += 1.0;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = build_grid([1.0; 3], [2; 3], false).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.h, [2.0; 3]);
        assert_eq!(g.cell_count(), 1);

        let g = build_grid([1.0; 3], [65, 65, 9], true).unwrap();
        assert_eq!(g.node_count(), 65 * 65);
        assert_eq!(g.cell_count(), 64 * 64);
        assert!((g.cell_volume() * g.cell_count() as f64 - g.volume()).abs() < 1e-12);

        assert!(build_grid([1.0, 0.0, 1.0], [3; 3], false).is_err());
        assert!(build_grid([1.0; 3], [3, 1, 3], false).is_err());
        assert!(build_grid([1.0; 3], [3, 3, 1], true).is_ok());
    }

    #[test]
    fn node_numbering_is_z_fastest() {
        let g = build_grid([1.0, 2.0, 3.0], [3, 4, 5], false).unwrap();
        assert_eq!(g.node_index(0, 0, 1), 1);
        assert_eq!(g.node_index(0, 1, 0), 5);
        for idx in 0..g.node_count() {
            let [i, j, k] = g.node_ijk(idx);
            assert_eq!(g.node_index(i, j, k), idx);
        }
        let p = g.node_position(g.node_index(2, 3, 4));
        assert_eq!([p.x, p.y, p.z], [1.0, 2.0, 3.0]);
    }

    #[test]
    fn affine_and_constant_fields_are_exact() {
        let g = build_grid([1.0, 0.7, 0.4], [4, 5, 6], false).unwrap();
        let a = Mat3::new(1.1, 0.2, -0.3, 0.4, 0.9, 0.05, -0.1, 0.3, 1.2);
        let t = Vec3::new(0.3, -0.2, 0.1);
        let field: Vec<[f64; 3]> = (0..g.node_count())
            .map(|i| {
                let y = a * g.node_position(i) + t;
                [y.x, y.y, y.z]
            })
            .collect();
        for grad in fd_gradient(&field, &g).unwrap() {
            assert!((grad - a).abs().max() < 1e-13);
        }
        let constant = vec![[2.0; 5]; g.node_count()];
        for grad in fd_gradient(&constant, &g).unwrap() {
            assert!(grad.abs().max() < 1e-13);
        }
        assert!(matches!(
            fd_gradient(&constant[1..], &g),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn plane_strain_has_no_z_derivatives() {
        let g = build_grid([1.0; 3], [5, 5, 5], true).unwrap();
        let field: Vec<[f64; 3]> = (0..g.node_count())
            .map(|i| {
                let x = g.node_position(i);
                [x.x * x.y, x.y.sin(), 0.0]
            })
            .collect();
        for grad in fd_gradient(&field, &g).unwrap() {
            assert_eq!(grad.column(2).abs().max(), 0.0);
        }
        let s = State::identity(g);
        for f in s.deformation_gradients() {
            assert!((f - Mat3::identity()).abs().max() < 1e-14);
        }
    }

    #[test]
    fn quadratic_field_is_exact_at_cell_centers() {
        // d/dx1 (x1^2) at the center of [x, x + h] is the centered difference, which is exact.
        let g = build_grid([1.0; 3], [9; 3], false).unwrap();
        let field: Vec<[f64; 3]> = (0..g.node_count())
            .map(|i| [g.node_position(i).x.powi(2), 0.0, 0.0])
            .collect();
        for (cell, grad) in fd_gradient(&field, &g).unwrap().iter().enumerate() {
            let xc = g.cell_center(cell).x;
            assert!((grad[(0, 0)] - 2.0 * xc).abs() < 1e-13);
        }
    }

    #[test]
    fn smooth_field_converges_at_second_order() {
        let err = |n: usize| {
            let g = build_grid([1.0; 3], [n; 3], false).unwrap();
            let field: Vec<[f64; 3]> = (0..g.node_count())
                .map(|i| {
                    let x = g.node_position(i);
                    [(x.x + 0.5 * x.y).sin() * x.z.cos(), 0.0, 0.0]
                })
                .collect();
            fd_gradient(&field, &g)
                .unwrap()
                .iter()
                .enumerate()
                .map(|(c, grad)| {
                    let x = g.cell_center(c);
                    let exact = Vec3::new(
                        (x.x + 0.5 * x.y).cos() * x.z.cos(),
                        0.5 * (x.x + 0.5 * x.y).cos() * x.z.cos(),
                        -(x.x + 0.5 * x.y).sin() * x.z.sin(),
                    );
                    (grad.row(0).transpose() - exact).abs().max()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(9), err(17), err(33));
        let r1 = (e1 / e2).log2();
        let r2 = (e2 / e3).log2();
        assert!(r1 > 1.9 && r2 > 1.9, "{r1} {r2}");
    }

    #[test]
    fn pack_round_trip() {
        let g = build_grid([1.0; 3], [3; 3], false).unwrap();
        let mut s = State::from_fn(g, |x| (2.0 * x, QTensor([x.x, x.y, x.z, 0.1, 0.2])));
        let v = s.pack();
        let mut t = s.clone();
        t.unpack(&v).unwrap();
        assert_eq!(s, t);
        assert!(s.unpack(&v[1..]).is_err());
    }
}
