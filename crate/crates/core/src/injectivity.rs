//! Numerical audits of injectivity for discrete deformations.
//!
//! The image `phi(Omega)` is rasterized on a voxel grid over its bounding box:
//! a voxel is occupied when its center has a preimage in some cell, found by a
//! Newton solve of the inverse trilinear (bilinear in plane strain) map. The
//! resolution bound is `|phi(dOmega)| * voxel diagonal`, which halves exactly
//! when the voxel count per axis doubles. In plane strain all measures are
//! areas multiplied by the slab thickness `2c`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::discretization::{corner_offsets, Grid, State};
use crate::error::{Error, Result};
use crate::sum::compensated;
use crate::tensor::{det3, Mat3, Vec3};

/// Default voxel count per axis relative to the node count.
pub const DEFAULT_RASTER_FACTOR: usize = 4;

/// Best constant in `|phi(A)| <= C |A|^{1-3/p} (int_A |grad phi|^p)^{3/p}` for
/// orientation-preserving injective maps (`det F <= (|F|^2 / 3)^{3/2}` plus Hoelder).
pub const LUSIN_CONSTANT: f64 = 0.192_450_089_729_875_25;

const NEWTON_ITERS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Inverse {
    Found(Vec3),
    Absent,
    Unresolved,
}

/// Corner images of one cell, in grid corner order.
struct CellMap {
    corners: [Vec3; 8],
    plane: bool,
}

impl CellMap {
    fn new(state: &State, cell: usize) -> Self {
        let nodes = state.grid.cell_nodes(cell);
        let mut corners = [Vec3::zeros(); 8];
        for m in 0..state.grid.corners() {
            corners[m] = state.phi.values[nodes[m]];
            if state.grid.plane_strain {
                corners[m].z = 0.0;
            }
        }
        CellMap {
            corners,
            plane: state.grid.plane_strain,
        }
    }

    fn count(&self) -> usize {
        if self.plane {
            4
        } else {
            8
        }
    }

    /// Map value and Jacobian in local coordinates `xi in [0,1]^d`.
    fn eval(&self, xi: &Vec3) -> (Vec3, Mat3) {
        let mut p = Vec3::zeros();
        let mut j = Mat3::zeros();
        for m in 0..self.count() {
            let (a, b, c) = corner_offsets(m, self.plane);
            let f = |o: usize, t: f64| if o == 1 { t } else { 1.0 - t };
            let df = |o: usize| if o == 1 { 1.0 } else { -1.0 };
            let (wx, wy) = (f(a, xi.x), f(b, xi.y));
            let wz = if self.plane { 1.0 } else { f(c, xi.z) };
            let v = self.corners[m];
            p += wx * wy * wz * v;
            let g = Vec3::new(
                df(a) * wy * wz,
                wx * df(b) * wz,
                if self.plane { 0.0 } else { wx * wy * df(c) },
            );
            j += v * g.transpose();
        }
        if self.plane {
            j[(2, 2)] = 1.0;
        }
        (p, j)
    }

    fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = self.corners[0];
        let mut hi = self.corners[0];
        for v in &self.corners[1..self.count()] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    fn newton(&self, y: &Vec3, start: Vec3, tol: f64) -> Inverse {
        let mut xi = start;
        for _ in 0..NEWTON_ITERS {
            let (p, j) = self.eval(&xi);
            let mut r = p - y;
            if self.plane {
                r.z = 0.0;
            }
            if r.amax() <= tol {
                let inside = (0..if self.plane { 2 } else { 3 })
                    .all(|d| xi[d] >= -1e-10 && xi[d] <= 1.0 + 1e-10);
                return if inside {
                    Inverse::Found(xi)
                } else {
                    Inverse::Absent
                };
            }
            let Some(jinv) = j.try_inverse() else {
                return Inverse::Unresolved;
            };
            xi -= jinv * r;
            if (xi - Vec3::repeat(0.5)).amax() > 4.0 {
                return Inverse::Absent;
            }
        }
        Inverse::Unresolved
    }

    /// Inverse image of `y` in this cell: Newton from the center, then from the corners.
    fn invert(&self, y: &Vec3) -> Inverse {
        let (lo, hi) = self.bbox();
        let tol = 1e-12 * (hi - lo).amax().max(1e-300) + 1e-15;
        let mut any_unresolved = false;
        let zc = if self.plane { 0.0 } else { 0.5 };
        match self.newton(y, Vec3::new(0.5, 0.5, zc), tol) {
            Inverse::Found(x) => return Inverse::Found(x),
            Inverse::Unresolved => any_unresolved = true,
            Inverse::Absent => {}
        }
        if !any_unresolved {
            return Inverse::Absent;
        }
        for m in 0..self.count() {
            let (a, b, c) = corner_offsets(m, self.plane);
            let s = |o: usize| if o == 1 { 0.85 } else { 0.15 };
            let start = Vec3::new(s(a), s(b), if self.plane { 0.0 } else { s(c) });
            if let Inverse::Found(x) = self.newton(y, start, tol) {
                return Inverse::Found(x);
            }
        }
        Inverse::Unresolved
    }
}

struct Bitset(Vec<AtomicU64>);

impl Bitset {
    fn new(n: usize) -> Self {
        Bitset((0..n.div_ceil(64)).map(|_| AtomicU64::new(0)).collect())
    }

    fn set(&self, i: usize) {
        self.0[i / 64].fetch_or(1 << (i % 64), Ordering::Relaxed);
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64].load(Ordering::Relaxed) & (1 << (i % 64)) != 0
    }
}

/// Voxel grid over a bounding box.
struct Raster {
    lo: Vec3,
    size: Vec3,
    dims: [usize; 3],
    occupied: Bitset,
    unresolved: Bitset,
    plane: bool,
    thickness: f64,
}

impl Raster {
    fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.lo.x + (i as f64 + 0.5) * self.size.x,
            self.lo.y + (j as f64 + 0.5) * self.size.y,
            if self.plane {
                0.0
            } else {
                self.lo.z + (k as f64 + 0.5) * self.size.z
            },
        )
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    /// Measure of one voxel (area times thickness in plane strain).
    fn voxel_measure(&self) -> f64 {
        if self.plane {
            self.size.x * self.size.y * self.thickness
        } else {
            self.size.x * self.size.y * self.size.z
        }
    }

    fn diagonal(&self) -> f64 {
        if self.plane {
            (self.size.x.powi(2) + self.size.y.powi(2)).sqrt()
        } else {
            self.size.norm()
        }
    }

    fn range(&self, lo: f64, hi: f64, axis: usize) -> std::ops::Range<usize> {
        let o = self.lo[axis];
        let s = self.size[axis];
        let a = ((lo - o) / s - 0.5).ceil().max(0.0) as usize;
        let b = (((hi - o) / s - 0.5).floor() + 1.0).max(0.0) as usize;
        a.min(self.dims[axis])..b.min(self.dims[axis])
    }
}

fn rasterize(state: &State, cells: &[usize], resolution: usize) -> Result<Raster> {
    if resolution == 0 {
        return Err(Error::Precondition(
            "raster resolution must be positive".into(),
        ));
    }
    if cells.is_empty() {
        return Err(Error::Degenerate("no cells to rasterize".into()));
    }
    let grid = &state.grid;
    let plane = grid.plane_strain;
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &c in cells {
        let (a, b) = CellMap::new(state, c).bbox();
        lo = lo.inf(&a);
        hi = hi.sup(&b);
    }
    let active = if plane { 2 } else { 3 };
    for d in 0..active {
        if !(hi[d] - lo[d] > 0.0) || !(hi[d] - lo[d]).is_finite() {
            return Err(Error::Degenerate(format!(
                "image bounding box is flat along axis {d}"
            )));
        }
    }
    let dims = [resolution, resolution, if plane { 1 } else { resolution }];
    let mut size = (hi - lo) / resolution as f64;
    if plane {
        size.z = 1.0;
    }
    let n = dims[0] * dims[1] * dims[2];
    let raster = Raster {
        lo,
        size,
        dims,
        occupied: Bitset::new(n),
        unresolved: Bitset::new(n),
        plane,
        thickness: 2.0 * grid.extents[2],
    };
    cells.par_iter().for_each(|&c| {
        let cm = CellMap::new(state, c);
        let (a, b) = cm.bbox();
        let ri = raster.range(a.x, b.x, 0);
        let rj = raster.range(a.y, b.y, 1);
        let rk = if plane {
            0..1
        } else {
            raster.range(a.z, b.z, 2)
        };
        for i in ri {
            for j in rj.clone() {
                for k in rk.clone() {
                    let idx = raster.index(i, j, k);
                    if raster.occupied.get(idx) {
                        continue;
                    }
                    match cm.invert(&raster.center(i, j, k)) {
                        Inverse::Found(_) => raster.occupied.set(idx),
                        Inverse::Unresolved => raster.unresolved.set(idx),
                        Inverse::Absent => {}
                    }
                }
            }
        }
    });
    Ok(raster)
}

/// Measure of the image of the boundary: surface area, or perimeter times thickness.
fn boundary_image_measure(state: &State) -> f64 {
    let grid = &state.grid;
    let phi = &state.phi.values;
    let mut parts = Vec::new();
    if grid.plane_strain {
        let [nx, ny, _] = grid.n;
        let seg = |a: usize, b: usize| {
            let d = phi[a] - phi[b];
            (d.x * d.x + d.y * d.y).sqrt()
        };
        for i in 0..nx - 1 {
            parts.push(seg(grid.node_index(i, 0, 0), grid.node_index(i + 1, 0, 0)));
            parts.push(seg(
                grid.node_index(i, ny - 1, 0),
                grid.node_index(i + 1, ny - 1, 0),
            ));
        }
        for j in 0..ny - 1 {
            parts.push(seg(grid.node_index(0, j, 0), grid.node_index(0, j + 1, 0)));
            parts.push(seg(
                grid.node_index(nx - 1, j, 0),
                grid.node_index(nx - 1, j + 1, 0),
            ));
        }
        return compensated(parts) * 2.0 * grid.extents[2];
    }
    let n = grid.n;
    for axis in 0..3 {
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for fixed in [0, n[axis] - 1] {
            for a in 0..n[u] - 1 {
                for b in 0..n[v] - 1 {
                    let node = |da: usize, db: usize| {
                        let mut ijk = [0; 3];
                        ijk[axis] = fixed;
                        ijk[u] = a + da;
                        ijk[v] = b + db;
                        phi[grid.node_index(ijk[0], ijk[1], ijk[2])]
                    };
                    let (p00, p01, p10, p11) = (node(0, 0), node(0, 1), node(1, 0), node(1, 1));
                    let t1 = 0.5 * (p10 - p00).cross(&(p11 - p00)).norm();
                    let t2 = 0.5 * (p11 - p00).cross(&(p01 - p00)).norm();
                    let t3 = 0.5 * (p10 - p00).cross(&(p01 - p00)).norm();
                    let t4 = 0.5 * (p11 - p10).cross(&(p01 - p10)).norm();
                    parts.push((t1 + t2).max(t3 + t4));
                }
            }
        }
    }
    compensated(parts)
}

/// Rasterized image measure with its resolution bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageMeasure {
    pub measure: f64,
    pub bound: f64,
    /// Measure of voxels left undecided by failed Newton solves.
    pub unresolved: f64,
    pub voxel_measure: f64,
    pub resolution: usize,
}

fn all_cells(grid: &Grid) -> Vec<usize> {
    (0..grid.cell_count()).collect()
}

fn measure_raster(raster: &Raster) -> (f64, f64) {
    let mut occ = 0usize;
    let mut unres = 0usize;
    for idx in 0..raster.voxel_count() {
        if raster.occupied.get(idx) {
            occ += 1;
        } else if raster.unresolved.get(idx) {
            unres += 1;
        }
    }
    let v = raster.voxel_measure();
    (occ as f64 * v, unres as f64 * v)
}

/// `|phi(Omega)|` by rasterization with `resolution` voxels per axis.
pub fn image_measure(state: &State, resolution: usize) -> Result<ImageMeasure> {
    let raster = rasterize(state, &all_cells(&state.grid), resolution)?;
    let (measure, unresolved) = measure_raster(&raster);
    Ok(ImageMeasure {
        measure,
        bound: boundary_image_measure(state) * raster.diagonal(),
        unresolved,
        voxel_measure: raster.voxel_measure(),
        resolution,
    })
}

/// Default voxel resolution for a grid.
pub fn default_resolution(grid: &Grid) -> usize {
    DEFAULT_RASTER_FACTOR * grid.n[0].max(grid.n[1]).max(grid.n[2])
}

/// `int_Omega det grad phi dx` by midpoint quadrature.
pub fn jacobian_integral(state: &State) -> f64 {
    let vol = state.grid.cell_volume();
    compensated(state.deformation_gradients().iter().map(|f| det3(f) * vol))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CnVerdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl CnVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            CnVerdict::Satisfied => "satisfied",
            CnVerdict::Violated => "violated",
            CnVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// Result of comparing `int det grad phi` with `|phi(Omega)|`.
#[derive(Clone, Debug, PartialEq)]
pub struct CnReport {
    pub lhs: f64,
    pub rhs: f64,
    pub bound: f64,
    pub unresolved: f64,
    pub resolution: usize,
    /// Histogram of `N(phi, y)` over a lattice of sample points in the image box.
    pub multiplicity: BTreeMap<usize, usize>,
    pub multiplicity_unresolved: usize,
    pub min_det: f64,
    pub verdict: CnVerdict,
}

impl CnReport {
    /// Flat `key = value` text block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "verdict = {}", self.verdict.as_str());
        let _ = writeln!(s, "lhs = {}", self.lhs);
        let _ = writeln!(s, "rhs = {}", self.rhs);
        let _ = writeln!(s, "ratio = {}", self.lhs / self.rhs);
        let _ = writeln!(s, "bound = {}", self.bound);
        let _ = writeln!(s, "unresolved = {}", self.unresolved);
        let _ = writeln!(s, "resolution = {}", self.resolution);
        let _ = writeln!(s, "min_det = {}", self.min_det);
        for (n, c) in &self.multiplicity {
            let _ = writeln!(s, "multiplicity.{n} = {c}");
        }
        let _ = writeln!(
            s,
            "multiplicity.unresolved = {}",
            self.multiplicity_unresolved
        );
        s
    }
}

fn verdict(lhs: f64, rhs: f64, bound: f64, unresolved: f64) -> CnVerdict {
    if lhs <= rhs + bound {
        CnVerdict::Satisfied
    } else if lhs <= rhs + bound + unresolved {
        CnVerdict::Inconclusive
    } else {
        CnVerdict::Violated
    }
}

/// Checks `int_Omega det grad phi <= |phi(Omega)|` up to the rasterization bound.
pub fn ciarlet_necas_check(state: &State, resolution: usize) -> Result<CnReport> {
    let min_det = state
        .deformation_gradients()
        .iter()
        .map(det3)
        .fold(f64::INFINITY, f64::min);
    if !(min_det > 0.0) {
        return Err(Error::Orientation { det: min_det });
    }
    let lhs = jacobian_integral(state);
    let im = image_measure(state, resolution)?;
    let samples = sample_lattice(state, 24)?;
    let mult = multiplicity(state, &samples);
    Ok(CnReport {
        lhs,
        rhs: im.measure,
        bound: im.bound,
        unresolved: im.unresolved,
        resolution,
        multiplicity: mult.histogram(),
        multiplicity_unresolved: mult.unresolved.iter().filter(|&&u| u).count(),
        min_det,
        verdict: verdict(lhs, im.measure, im.bound, im.unresolved),
    })
}

/// Regular lattice of `per_axis^d` points strictly inside the image bounding box.
pub fn sample_lattice(state: &State, per_axis: usize) -> Result<Vec<Vec3>> {
    let grid = &state.grid;
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in &state.phi.values {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let kz = if grid.plane_strain { 1 } else { per_axis };
    let mut out = Vec::with_capacity(per_axis * per_axis * kz);
    let at = |d: usize, i: usize| lo[d] + (i as f64 + 0.5) / per_axis as f64 * (hi[d] - lo[d]);
    for i in 0..per_axis {
        for j in 0..per_axis {
            for k in 0..kz {
                let z = if grid.plane_strain { 0.0 } else { at(2, k) };
                out.push(Vec3::new(at(0, i), at(1, j), z));
            }
        }
    }
    Ok(out)
}

/// Preimage counts for a list of points.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiplicity {
    pub counts: Vec<usize>,
    /// Points where some cell's inverse solve failed; their count is a lower bound.
    pub unresolved: Vec<bool>,
}

impl Multiplicity {
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &c in &self.counts {
            *h.entry(c).or_insert(0) += 1;
        }
        h
    }

    /// CSV `N,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,count\n");
        for (n, c) in self.histogram() {
            let _ = writeln!(s, "{n},{c}");
        }
        s
    }
}

/// Counts distinct preimages `#{x : phi(x) = y}` by per-cell inverse solves.
pub fn multiplicity(state: &State, points: &[Vec3]) -> Multiplicity {
    let grid = &state.grid;
    let maps: Vec<(CellMap, Vec3, Vec3)> = (0..grid.cell_count())
        .map(|c| {
            let cm = CellMap::new(state, c);
            let (lo, hi) = cm.bbox();
            (cm, lo, hi)
        })
        .collect();
    let plane = grid.plane_strain;
    let hmin = grid.h[0].min(grid.h[1]);
    let results: Vec<(usize, bool)> = points
        .par_iter()
        .map(|y| {
            let mut y = *y;
            if plane {
                y.z = 0.0;
            }
            let mut found: Vec<Vec3> = Vec::new();
            let mut unresolved = false;
            for (c, (cm, lo, hi)) in maps.iter().enumerate() {
                let slack = 1e-12 * (hi - lo).amax();
                let active = if plane { 2 } else { 3 };
                if (0..active).any(|d| y[d] < lo[d] - slack || y[d] > hi[d] + slack) {
                    continue;
                }
                match cm.invert(&y) {
                    Inverse::Found(xi) => {
                        let [i, j, k] = grid.cell_ijk(c);
                        let x = Vec3::new(
                            (i as f64 + xi.x) * grid.h[0],
                            (j as f64 + xi.y) * grid.h[1],
                            if plane {
                                0.0
                            } else {
                                (k as f64 + xi.z) * grid.h[2]
                            },
                        );
                        if !found.iter().any(|f| (f - x).norm() <= 1e-8 * hmin) {
                            found.push(x);
                        }
                    }
                    Inverse::Unresolved => unresolved = true,
                    Inverse::Absent => {}
                }
            }
            (found.len(), unresolved)
        })
        .collect();
    Multiplicity {
        counts: results.iter().map(|r| r.0).collect(),
        unresolved: results.iter().map(|r| r.1).collect(),
    }
}

/// Two-sided integral comparison for a weight `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovReport {
    /// Rasterized `int_{phi(Omega)} g dy`.
    pub image_side: f64,
    /// Quadrature `int_Omega g(phi) det grad phi dx`.
    pub reference_side: f64,
    /// `|image - reference| / |reference|`.
    pub discrepancy: f64,
    /// Relative rasterization bound `max|g| * |phi(dOmega)| * diag / |reference|`, with
    /// `max|g|` over node images and quadrature points.
    pub bound: f64,
}

/// Compares both sides of the change-of-variables formula for `g`.
pub fn change_of_variables_check(
    state: &State,
    g: impl Fn(&Vec3) -> f64 + Sync,
    resolution: usize,
) -> Result<CovReport> {
    let grid = &state.grid;
    let raster = rasterize(state, &all_cells(grid), resolution)?;
    let plane = grid.plane_strain;
    let kz = raster.dims[2];
    let rows: Vec<f64> = (0..raster.dims[0])
        .into_par_iter()
        .map(|i| {
            let mut sum = Vec::new();
            for j in 0..raster.dims[1] {
                for k in 0..kz {
                    if raster.occupied.get(raster.index(i, j, k)) {
                        sum.push(g(&raster.center(i, j, k)));
                    }
                }
            }
            compensated(sum)
        })
        .collect();
    let image_side = compensated(rows) * raster.voxel_measure();

    let gauss = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let cell_vol = grid.cell_volume();
    let per_cell: Vec<(f64, f64)> = (0..grid.cell_count())
        .into_par_iter()
        .map(|c| {
            let cm = CellMap::new(state, c);
            let mut gmax = cm.corners[..cm.count()]
                .iter()
                .fold(0.0f64, |m, y| m.max(g(y).abs()));
            let mut acc = 0.0;
            let zs: &[f64] = if plane { &[0.0] } else { &gauss };
            let wz = if plane { 1.0 } else { 0.5 };
            for &a in &gauss {
                for &b in &gauss {
                    for &z in zs {
                        let (p, j) = cm.eval(&Vec3::new(a, b, z));
                        // Jacobian in local coordinates; divide by the cell scaling.
                        let scale = if plane {
                            grid.h[0] * grid.h[1]
                        } else {
                            cell_vol
                        };
                        let gp = g(&p);
                        gmax = gmax.max(gp.abs());
                        acc += 0.25 * wz * gp * det3(&j) / scale;
                    }
                }
            }
            (acc * cell_vol, gmax)
        })
        .collect();
    let reference_side = compensated(per_cell.iter().map(|c| c.0));
    let gmax = per_cell.iter().fold(0.0f64, |m, c| m.max(c.1));
    let discrepancy = (image_side - reference_side).abs() / reference_side.abs();
    let bound = gmax * boundary_image_measure(state) * raster.diagonal() / reference_side.abs();
    Ok(CovReport {
        image_side,
        reference_side,
        discrepancy,
        bound,
    })
}

/// `|phi(A)| / (|A|^{1-3/p} (int_A |grad phi|^p)^{3/p})` for the cell box
/// `A = cells [lo, hi)` (cell indices per axis).
pub fn lusin_ratio(
    state: &State,
    lo: [usize; 3],
    hi: [usize; 3],
    p: f64,
    resolution: usize,
) -> Result<f64> {
    let grid = &state.grid;
    let cells_per = grid.cells();
    for d in 0..3 {
        if !(lo[d] < hi[d] && hi[d] <= cells_per[d]) {
            return Err(Error::Precondition(format!(
                "invalid sub-box along axis {d}"
            )));
        }
    }
    let mut cells = Vec::new();
    for i in lo[0]..hi[0] {
        for j in lo[1]..hi[1] {
            for k in lo[2]..hi[2] {
                cells.push((i * cells_per[1] + j) * cells_per[2] + k);
            }
        }
    }
    let raster = rasterize(state, &cells, resolution)?;
    let (image, _) = measure_raster(&raster);
    let grads = state.deformation_gradients();
    let vol = grid.cell_volume();
    let measure_a = vol * cells.len() as f64;
    let integral = compensated(cells.iter().map(|&c| grads[c].norm().powf(p) * vol));
    Ok(image / (measure_a.powf(1.0 - 3.0 / p) * integral.powf(3.0 / p)))
}

/// Angle-doubling map `(rho, theta) -> (rho cos 2 theta, rho sin 2 theta)` on the
/// sector `1 < rho < 2`, `0 < theta < 3 pi / 2`, as a unit-thickness plane-strain
/// state with `n` nodes per axis. Its image covers the angles in `(0, pi)` twice.
pub fn angle_doubling(n: usize) -> Result<State> {
    use std::f64::consts::PI;
    let g = crate::discretization::build_grid([0.5, 0.75 * PI, 0.5], [n, n, 1], true)?;
    Ok(State::from_fn(g, |x| {
        let rho = x.x + 1.5;
        let th = x.y + 0.75 * PI;
        (
            Vec3::new(rho * (2.0 * th).cos(), rho * (2.0 * th).sin(), 0.0),
            crate::tensor::QTensor::ZERO,
        )
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;
    use crate::tensor::QTensor;
    use std::f64::consts::PI;

    fn affine(n: usize, a: Mat3, t: Vec3) -> State {
        let g = build_grid([0.5; 3], [n; 3], false).unwrap();
        State::from_fn(g, |x| (a * x + t, QTensor::ZERO))
    }

    #[test]
    fn affine_image_measures() {
        let s = affine(5, 2.0 * Mat3::identity(), Vec3::zeros());
        let m = image_measure(&s, 40).unwrap();
        assert!((m.measure - 8.0).abs() <= m.bound, "{m:?}");
        let s = affine(5, Mat3::identity(), Vec3::zeros());
        let m = image_measure(&s, 40).unwrap();
        assert!((m.measure - 1.0).abs() <= m.bound);
        assert_eq!(m.unresolved, 0.0);
    }

    #[test]
    fn bound_halves_under_refinement() {
        let a = Mat3::new(1.2, 0.3, 0.0, -0.1, 0.8, 0.2, 0.1, 0.0, 1.1);
        let s = affine(4, a, Vec3::zeros());
        let m1 = image_measure(&s, 20).unwrap();
        let m2 = image_measure(&s, 40).unwrap();
        assert!((m1.bound / m2.bound - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_rejected() {
        let s = affine(
            3,
            Mat3::from_diagonal(&Vec3::new(1.0, 0.0, 1.0)),
            Vec3::zeros(),
        );
        assert!(matches!(image_measure(&s, 10), Err(Error::Degenerate(_))));
    }

    #[test]
    fn affine_maps_satisfy_cn() {
        let a = Mat3::new(1.1, 0.2, 0.0, 0.0, 0.9, -0.3, 0.1, 0.0, 1.3);
        let r = ciarlet_necas_check(&affine(5, a, Vec3::new(0.1, 0.2, 0.3)), 48).unwrap();
        assert_eq!(r.verdict, CnVerdict::Satisfied);
        assert!((r.lhs - det3(&a)).abs() < 1e-12);
        assert!((r.lhs - r.rhs).abs() <= r.bound);
        assert!(r.to_text().starts_with("verdict = satisfied\nlhs = "));
    }

    #[test]
    fn angle_doubling_is_violated() {
        let s = angle_doubling(65).unwrap();
        let r = ciarlet_necas_check(&s, 256).unwrap();
        assert!((r.lhs - 4.5 * PI).abs() < 1e-2 * 4.5 * PI, "{}", r.lhs);
        assert!((r.lhs / r.rhs - 1.5).abs() < 0.05 * 1.5);
        assert!((r.rhs - 3.0 * PI).abs() < 0.05 * 3.0 * PI, "{}", r.rhs);
        assert_eq!(r.verdict, CnVerdict::Violated);
        assert!(r.multiplicity.contains_key(&2));
    }

    #[test]
    fn multiplicity_examples() {
        let s = affine(4, Mat3::identity(), Vec3::zeros());
        let m = multiplicity(
            &s,
            &[
                Vec3::new(0.1, -0.2, 0.3),
                Vec3::new(5.0, 0.0, 0.0),
                Vec3::zeros(),
            ],
        );
        assert_eq!(m.counts, vec![1, 0, 1]);
        assert_eq!(m.to_csv(), "N,count\n0,1\n1,2\n");

        let s = angle_doubling(65).unwrap();
        let y = |r: f64, t: f64| Vec3::new(r * t.cos(), r * t.sin(), 0.0);
        let m = multiplicity(
            &s,
            &[
                y(1.5, 0.5),
                y(1.5, 2.5),
                y(1.3, 4.0),
                y(1.5, 5.5),
                y(3.0, 1.0),
            ],
        );
        assert_eq!(m.counts, vec![2, 2, 1, 1, 0]);
    }

    #[test]
    fn change_of_variables_polynomial() {
        let a = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0));
        let s = affine(5, a, Vec3::zeros());
        let r = change_of_variables_check(&s, |y| y.x * y.x, 64).unwrap();
        // int over [-1,1]x[-1/2,1/2]^2 of y1^2 = 2/3.
        assert!(
            (r.reference_side - 2.0 / 3.0).abs() < 1e-12,
            "{}",
            r.reference_side
        );
        assert!(r.discrepancy <= 2.0 * r.bound, "{r:?}");

        let r = change_of_variables_check(&angle_doubling(65).unwrap(), |_| 1.0, 128).unwrap();
        assert!(r.discrepancy > 0.3);
        assert!(r.discrepancy > 2.0 * r.bound);
    }

    #[test]
    fn lusin_ratio_below_hadamard_constant() {
        let g = build_grid([0.5; 3], [9; 3], false).unwrap();
        let s = State::from_fn(g, |x| {
            (
                x + 0.1 * Vec3::new(x.y.sin(), x.z * x.x, 0.5 * x.x),
                QTensor::ZERO,
            )
        });
        let r = lusin_ratio(&s, [0, 0, 0], [8, 8, 8], 4.0, 48).unwrap();
        assert!(r <= LUSIN_CONSTANT * 1.02, "{r}");
        assert!(r > 0.5 * LUSIN_CONSTANT);
        let id = affine(5, Mat3::identity(), Vec3::zeros());
        let r = lusin_ratio(&id, [0, 0, 0], [4, 4, 4], 4.0, 40).unwrap();
        assert!((r - LUSIN_CONSTANT).abs() < 0.05 * LUSIN_CONSTANT, "{r}");
        assert!((LUSIN_CONSTANT - 3f64.powf(-1.5)).abs() < 1e-16);
    }
}
