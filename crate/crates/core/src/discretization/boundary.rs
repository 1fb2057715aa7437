use crate::error::{Error, Result};
use crate::tensor::{Mat3, QTensor, Vec3};

use super::{Grid, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::XMin,
        Face::XMax,
        Face::YMin,
        Face::YMax,
        Face::ZMin,
        Face::ZMax,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn axis(self) -> usize {
        self as usize / 2
    }

    pub fn is_max(self) -> bool {
        self as usize % 2 == 1
    }

    pub fn name(self) -> &'static str {
        ["x-", "x+", "y-", "y+", "z-", "z+"][self as usize]
    }
}

/// Subset of the six faces of the reference box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FaceSet(u8);

impl FaceSet {
    pub const NONE: FaceSet = FaceSet(0);
    pub const ALL: FaceSet = FaceSet(0b11_1111);
    pub const X_FACES: FaceSet = FaceSet(0b00_0011);
    pub const Y_FACES: FaceSet = FaceSet(0b00_1100);
    pub const Z_FACES: FaceSet = FaceSet(0b11_0000);

    pub fn with(self, face: Face) -> FaceSet {
        FaceSet(self.0 | face.bit())
    }

    pub fn union(self, other: FaceSet) -> FaceSet {
        FaceSet(self.0 | other.0)
    }

    pub fn contains(self, face: Face) -> bool {
        self.0 & face.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn faces(self) -> impl Iterator<Item = Face> {
        Face::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    /// Parses names such as `"y-"`, `"y+"`, `"y"` (both y faces) or `"all"`.
    pub fn parse(names: &[String]) -> Result<FaceSet> {
        let mut out = FaceSet::NONE;
        for n in names {
            out = out.union(match n.as_str() {
                "all" => FaceSet::ALL,
                "x" => FaceSet::X_FACES,
                "y" => FaceSet::Y_FACES,
                "z" => FaceSet::Z_FACES,
                other => match Face::ALL.iter().find(|f| f.name() == other) {
                    Some(f) => FaceSet::NONE.with(*f),
                    None => return Err(Error::Parse(format!("unknown face `{other}`"))),
                },
            });
        }
        Ok(out)
    }
}

/// Prescribed boundary values `phi0(x) = A x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryData {
    pub a: Mat3,
    pub t: Vec3,
}

impl BoundaryData {
    pub fn identity() -> Self {
        BoundaryData {
            a: Mat3::identity(),
            t: Vec3::zeros(),
        }
    }

    pub fn eval(&self, x: &Vec3) -> Vec3 {
        self.a * x + self.t
    }
}

/// Boundary condition on the deformation.
#[derive(Clone, Debug, PartialEq)]
pub enum PhiBoundary {
    /// Free deformation; rigid translations remain.
    None,
    /// `phi = phi0` on the whole boundary.
    DirichletFull(BoundaryData),
    /// Zero mean of `phi` over the box `D = [lo, hi]`.
    PartialAverage { lo: Vec3, hi: Vec3 },
    /// Selected components of `phi` prescribed on selected faces.
    DirichletPartial {
        faces: FaceSet,
        components: [bool; 3],
        data: BoundaryData,
    },
}

/// Constant order tensor prescribed on selected faces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QDirichlet {
    pub faces: FaceSet,
    pub value: QTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySpec {
    pub phi: PhiBoundary,
    pub q: Option<QDirichlet>,
    /// Faces carrying the surface anchoring energy.
    pub surface: FaceSet,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec {
            phi: PhiBoundary::None,
            q: None,
            surface: FaceSet::NONE,
        }
    }
}

impl BoundarySpec {
    /// Nodes of the averaging region `D` for the partial-average condition.
    pub fn average_nodes(&self, grid: &Grid) -> Option<Vec<usize>> {
        match &self.phi {
            PhiBoundary::PartialAverage { lo, hi } => Some(
                (0..grid.node_count())
                    .filter(|&i| {
                        let x = grid.node_position(i);
                        let inside = |d: usize| {
                            if grid.plane_strain && d == 2 {
                                true
                            } else {
                                x[d] >= lo[d] - 1e-12 && x[d] <= hi[d] + 1e-12
                            }
                        };
                        inside(0) && inside(1) && inside(2)
                    })
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Whether node `idx` lies on `face`. In plane strain the z faces carry no nodes.
pub(crate) fn on_face(grid: &Grid, idx: usize, face: Face) -> bool {
    let ijk = grid.node_ijk(idx);
    let axis = face.axis();
    if grid.plane_strain && axis == 2 {
        return false;
    }
    if face.is_max() {
        ijk[axis] == grid.n[axis] - 1
    } else {
        ijk[axis] == 0
    }
}

fn on_any_face(grid: &Grid, idx: usize, faces: FaceSet) -> bool {
    faces.faces().any(|f| on_face(grid, idx, f))
}

/// Boundary face elements: corner nodes (first `count` used) and area.
pub(crate) struct FaceElement {
    pub nodes: [usize; 4],
    pub count: usize,
    pub area: f64,
}

pub(crate) fn face_elements(grid: &Grid, faces: FaceSet) -> Vec<FaceElement> {
    let mut out = Vec::new();
    let [nx, ny, nz] = grid.n;
    let h = grid.h;
    for face in faces.faces() {
        let axis = face.axis();
        if grid.plane_strain {
            if axis == 2 {
                // Top and bottom of the slab: one element per planar cell.
                for cell in 0..grid.cell_count() {
                    let n = grid.cell_nodes(cell);
                    out.push(FaceElement {
                        nodes: [n[0], n[1], n[2], n[3]],
                        count: 4,
                        area: h[0] * h[1],
                    });
                }
                continue;
            }
            let other = 1 - axis;
            let fixed = if face.is_max() { grid.n[axis] - 1 } else { 0 };
            for s in 0..grid.n[other] - 1 {
                let node = |t: usize| {
                    if axis == 0 {
                        grid.node_index(fixed, t, 0)
                    } else {
                        grid.node_index(t, fixed, 0)
                    }
                };
                out.push(FaceElement {
                    nodes: [node(s), node(s + 1), 0, 0],
                    count: 2,
                    area: h[other] * h[2],
                });
            }
            continue;
        }
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let fixed = if face.is_max() { grid.n[axis] - 1 } else { 0 };
        let dims = [nx, ny, nz];
        for a in 0..dims[u] - 1 {
            for b in 0..dims[v] - 1 {
                let node = |da: usize, db: usize| {
                    let mut ijk = [0; 3];
                    ijk[axis] = fixed;
                    ijk[u] = a + da;
                    ijk[v] = b + db;
                    grid.node_index(ijk[0], ijk[1], ijk[2])
                };
                out.push(FaceElement {
                    nodes: [node(0, 0), node(0, 1), node(1, 0), node(1, 1)],
                    count: 4,
                    area: h[u] * h[v],
                });
            }
        }
    }
    out
}

/// Writes Dirichlet values and masks, or removes the mean over `D` for the
/// partial-average condition.
pub fn apply_boundary(state: &State, bc: &BoundarySpec) -> Result<State> {
    let mut s = state.clone();
    let grid = &s.grid;
    let plane = grid.plane_strain;
    let n = grid.node_count();
    for f in s.phi.fixed.iter_mut() {
        *f = [false, false, plane];
    }
    for f in s.q.fixed.iter_mut() {
        *f = false;
    }
    match &bc.phi {
        PhiBoundary::None => {}
        PhiBoundary::DirichletFull(data) => {
            for idx in 0..n {
                if on_any_face(grid, idx, FaceSet::ALL) {
                    let y = data.eval(&grid.node_position(idx));
                    let p = &mut s.phi.values[idx];
                    p.x = y.x;
                    p.y = y.y;
                    if !plane {
                        p.z = y.z;
                    }
                    s.phi.fixed[idx] = [true; 3];
                }
            }
        }
        PhiBoundary::PartialAverage { lo, hi } => {
            let active = if plane { 2 } else { 3 };
            if (0..active).any(|d| !(hi[d] > lo[d])) {
                return Err(Error::Degenerate("averaging region has zero volume".into()));
            }
            let nodes = bc.average_nodes(grid).unwrap_or_default();
            if nodes.is_empty() {
                return Err(Error::Degenerate(
                    "averaging region contains no nodes".into(),
                ));
            }
            let mean = nodes.iter().map(|&i| s.phi.values[i]).sum::<Vec3>() / nodes.len() as f64;
            for p in s.phi.values.iter_mut() {
                *p -= mean;
                if plane {
                    p.z = 0.0;
                }
            }
        }
        PhiBoundary::DirichletPartial {
            faces,
            components,
            data,
        } => {
            if faces.is_empty() || !components.iter().any(|&c| c) {
                return Err(Error::Shape(
                    "partial Dirichlet condition selects nothing".into(),
                ));
            }
            for idx in 0..n {
                if on_any_face(grid, idx, *faces) {
                    let y = data.eval(&grid.node_position(idx));
                    for d in 0..3 {
                        if components[d] && !(plane && d == 2) {
                            s.phi.values[idx][d] = y[d];
                            s.phi.fixed[idx][d] = true;
                        }
                    }
                }
            }
        }
    }
    if let Some(qd) = &bc.q {
        if !qd.value.in_q_set(0.0) {
            return Err(Error::Precondition(
                "Dirichlet order tensor is not admissible".into(),
            ));
        }
        for idx in 0..n {
            if on_any_face(grid, idx, qd.faces) {
                s.q.values[idx] = qd.value;
                s.q.fixed[idx] = true;
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;

    #[test]
    fn full_dirichlet_pins_boundary_to_identity() {
        let g = build_grid([1.0; 3], [4; 3], false).unwrap();
        let s = State::from_fn(g.clone(), |x| (2.0 * x, QTensor::ZERO));
        let bc = BoundarySpec {
            phi: PhiBoundary::DirichletFull(BoundaryData::identity()),
            ..Default::default()
        };
        let t = apply_boundary(&s, &bc).unwrap();
        let mut pinned = 0;
        for idx in 0..g.node_count() {
            let [i, j, k] = g.node_ijk(idx);
            let boundary = [i, j, k].iter().any(|&v| v == 0 || v == 3);
            assert_eq!(t.phi.fixed[idx] == [true; 3], boundary);
            if boundary {
                pinned += 1;
                assert_eq!(t.phi.values[idx], g.node_position(idx));
            } else {
                assert_eq!(t.phi.values[idx], 2.0 * g.node_position(idx));
            }
        }
        assert_eq!(pinned, 64 - 8);
    }

    #[test]
    fn partial_average_removes_mean() {
        let g = build_grid([1.0; 3], [5; 3], false).unwrap();
        let s = State::from_fn(g.clone(), |x| {
            (x + Vec3::new(0.3, -1.0, 2.0), QTensor::ZERO)
        });
        let bc = BoundarySpec {
            phi: PhiBoundary::PartialAverage {
                lo: Vec3::repeat(-1.0),
                hi: Vec3::repeat(1.0),
            },
            ..Default::default()
        };
        let t = apply_boundary(&s, &bc).unwrap();
        let mean = t.phi.values.iter().sum::<Vec3>() / g.node_count() as f64;
        assert!(mean.norm() < 1e-14);

        let empty = BoundarySpec {
            phi: PhiBoundary::PartialAverage {
                lo: Vec3::repeat(0.1),
                hi: Vec3::repeat(0.2),
            },
            ..Default::default()
        };
        assert!(matches!(
            apply_boundary(&s, &empty),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn stripe_condition_stretches_y_faces() {
        let g = build_grid([2.0, 1.0, 0.5], [9, 9, 1], true).unwrap();
        let s = State::identity(g.clone());
        let lambda = 1.2;
        let q0 = QTensor::uniaxial(0.6, &Vec3::x()).unwrap();
        let bc = BoundarySpec {
            phi: PhiBoundary::DirichletPartial {
                faces: FaceSet::Y_FACES,
                components: [false, true, false],
                data: BoundaryData {
                    a: Mat3::from_diagonal(&Vec3::new(1.0, lambda, 1.0)),
                    t: Vec3::zeros(),
                },
            },
            q: Some(QDirichlet {
                faces: FaceSet::Y_FACES,
                value: q0,
            }),
            surface: FaceSet::NONE,
        };
        let t = apply_boundary(&s, &bc).unwrap();
        for idx in 0..g.node_count() {
            let [_, j, _] = g.node_ijk(idx);
            if j == 0 || j == 8 {
                let expect = if j == 0 { -1.2 } else { 1.2 };
                assert!((t.phi.values[idx].y - expect).abs() < 1e-15);
                assert_eq!(t.phi.fixed[idx], [false, true, true]);
                assert_eq!(t.q.values[idx], q0);
            } else {
                assert_eq!(t.phi.fixed[idx], [false, false, true]);
                assert!(!t.q.fixed[idx]);
            }
        }
    }

    #[test]
    fn face_areas_cover_the_boundary() {
        let g = build_grid([1.0, 2.0, 3.0], [3, 4, 5], false).unwrap();
        let area: f64 = face_elements(&g, FaceSet::ALL).iter().map(|f| f.area).sum();
        assert!((area - 2.0 * (4.0 * 6.0 + 2.0 * 6.0 + 2.0 * 4.0)).abs() < 1e-12);
        let g = build_grid([1.0, 2.0, 3.0], [3, 4, 1], true).unwrap();
        let area: f64 = face_elements(&g, FaceSet::ALL).iter().map(|f| f.area).sum();
        assert!((area - 2.0 * (4.0 * 6.0 + 2.0 * 6.0 + 2.0 * 4.0)).abs() < 1e-12);
    }

    #[test]
    fn face_names_parse() {
        let f = FaceSet::parse(&["y-".into(), "y+".into()]).unwrap();
        assert_eq!(f, FaceSet::Y_FACES);
        assert!(FaceSet::parse(&["w".into()]).is_err());
    }
}
