//! Field snapshots (CSV, legacy VTK) and iteration logs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::discretization::{build_grid, State};
use crate::error::{Error, Result};
use crate::minimize::IterRecord;
use crate::tensor::{QTensor, Vec3};

pub const CSV_HEADER: &str = "x,y,z,phi1,phi2,phi3,q1,q2,q3,q4,q5";
pub const LOG_HEADER: &str =
    "iter,total,elastic,ldg_gradient,bulk,surface,grad_norm,step,min_det,min_lammin";

/// Half-thickness assumed for single-layer snapshots, which do not record it.
pub const DEFAULT_HALF_THICKNESS: f64 = 0.5;

/// One row per node in storage order (z fastest). Floats use the shortest
/// round-trip representation.
pub fn to_csv(state: &State) -> String {
    let mut s = String::with_capacity(state.grid.node_count() * 160);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for idx in 0..state.grid.node_count() {
        let x = state.grid.node_position(idx);
        let p = state.phi.values[idx];
        let q = state.q.values[idx].coeffs();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            x.x, x.y, x.z, p.x, p.y, p.z, q[0], q[1], q[2], q[3], q[4]
        );
    }
    s
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

/// Distinct sorted values of one coordinate column.
fn axis_values(vals: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = vals.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Parses a snapshot and rebuilds its grid. A single z layer at `z = 0` is read
/// as a plane-strain slab of half-thickness `half_thickness`.
pub fn from_csv(text: &str, half_thickness: f64) -> Result<State> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        Some(h) => {
            return Err(parse_err(
                1,
                format!("expected header `{CSV_HEADER}`, got `{h}`"),
            ))
        }
        None => return Err(Error::Parse("empty snapshot".into())),
    }
    let mut rows: Vec<[f64; 11]> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = [0.0; 11];
        let mut count = 0;
        for (c, field) in line.split(',').enumerate() {
            if c >= 11 {
                return Err(parse_err(lineno, "too many columns"));
            }
            row[c] = field
                .trim()
                .parse()
                .map_err(|e| parse_err(lineno, format!("column {}: {e}", c + 1)))?;
            count += 1;
        }
        if count != 11 {
            return Err(parse_err(
                lineno,
                format!("expected 11 columns, got {count}"),
            ));
        }
        rows.push(row);
    }
    let xs = axis_values(rows.iter().map(|r| r[0]));
    let ys = axis_values(rows.iter().map(|r| r[1]));
    let zs = axis_values(rows.iter().map(|r| r[2]));
    let plane = zs.len() == 1;
    if plane && zs[0] != 0.0 {
        return Err(Error::Shape(
            "single-layer snapshot must lie at z = 0".into(),
        ));
    }
    if xs.len() * ys.len() * zs.len() != rows.len() {
        return Err(Error::Shape(format!(
            "{} rows do not form a {}x{}x{} tensor grid",
            rows.len(),
            xs.len(),
            ys.len(),
            zs.len()
        )));
    }
    let ext = |v: &[f64]| -v[0];
    let c = if plane { half_thickness } else { ext(&zs) };
    let grid = build_grid(
        [ext(&xs), ext(&ys), c],
        [xs.len(), ys.len(), zs.len()],
        plane,
    )?;
    let mut state = State::identity(grid);
    for (idx, r) in rows.iter().enumerate() {
        let x = state.grid.node_position(idx);
        let tol = 1e-9 * (1.0 + x.abs().max());
        if (x - Vec3::new(r[0], r[1], r[2])).amax() > tol {
            return Err(parse_err(
                idx + 2,
                "coordinates do not match a centered uniform grid in z-fastest order",
            ));
        }
        if plane && r[5] != 0.0 {
            return Err(parse_err(
                idx + 2,
                "phi3 must vanish in a single-layer snapshot",
            ));
        }
        state.phi.values[idx] = Vec3::new(r[3], r[4], r[5]);
        state.q.values[idx] = QTensor::from_coeffs([r[6], r[7], r[8], r[9], r[10]]);
    }
    Ok(state)
}

pub fn write_csv(state: &State, path: &Path) -> Result<()> {
    fs::write(path, to_csv(state))?;
    Ok(())
}

pub fn read_csv(path: &Path, half_thickness: f64) -> Result<State> {
    from_csv(&fs::read_to_string(path)?, half_thickness)
}

/// Legacy ASCII VTK, `STRUCTURED_POINTS`, x fastest.
pub fn to_vtk(state: &State) -> String {
    let g = &state.grid;
    let origin = g.node_position(0);
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "lce-min field snapshot");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", g.n[0], g.n[1], g.n[2]);
    let _ = writeln!(s, "ORIGIN {} {} {}", origin.x, origin.y, origin.z);
    let _ = writeln!(s, "SPACING {} {} {}", g.h[0], g.h[1], g.h[2]);
    let _ = writeln!(s, "POINT_DATA {}", g.node_count());
    let order: Vec<usize> = (0..g.n[2])
        .flat_map(|k| (0..g.n[1]).flat_map(move |j| (0..g.n[0]).map(move |i| (i, j, k))))
        .map(|(i, j, k)| g.node_index(i, j, k))
        .collect();
    let _ = writeln!(s, "VECTORS phi double");
    for &idx in &order {
        let p = state.phi.values[idx];
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for c in 0..5 {
        let _ = writeln!(s, "SCALARS q{} double 1", c + 1);
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for &idx in &order {
            let _ = writeln!(s, "{}", state.q.values[idx].coeffs()[c]);
        }
    }
    s
}

pub fn write_vtk(state: &State, path: &Path) -> Result<()> {
    fs::write(path, to_vtk(state))?;
    Ok(())
}

pub fn log_csv(history: &[IterRecord]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in history {
        let e = &r.energy;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            e.total,
            e.elastic,
            e.ldg_gradient,
            e.bulk,
            e.surface,
            r.grad_norm,
            r.step,
            r.min_det,
            r.min_lammin
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Mat3;

    #[test]
    fn identity_two_cubed() {
        let g = build_grid([0.5; 3], [2; 3], false).unwrap();
        let csv = to_csv(&State::identity(g));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "-0.5,-0.5,-0.5,-0.5,-0.5,-0.5,0,0,0,0,0");
        assert_eq!(lines[2], "-0.5,-0.5,0.5,-0.5,-0.5,0.5,0,0,0,0,0");
        assert_eq!(lines[8], "0.5,0.5,0.5,0.5,0.5,0.5,0,0,0,0,0");
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let a = Mat3::new(1.1, 0.3, 0.0, -0.2, 0.9, 0.1, 0.0, 0.05, 1.2);
        for (plane, n) in [(false, [4, 3, 5]), (true, [6, 4, 1])] {
            let g = build_grid([0.7, 0.3, 0.2], n, plane).unwrap();
            let s = State::from_fn(g, |x| {
                (
                    a * x + Vec3::new(1.0 / 3.0, 0.0, 0.0),
                    QTensor::from_coeffs([0.1 * x.x, x.y / 7.0, 0.0, -0.01, 1e-17]),
                )
            });
            let t1 = to_csv(&s);
            let back = from_csv(&t1, 0.2).unwrap();
            assert_eq!(back.grid, s.grid);
            assert_eq!(to_csv(&back), t1);
        }
    }

    #[test]
    fn csv_rejects_malformed() {
        assert!(matches!(from_csv("a,b\n", 0.5), Err(Error::Parse(_))));
        let bad = format!("{CSV_HEADER}\n0,0,0,0,0,0,0,0,0,0\n");
        assert!(matches!(from_csv(&bad, 0.5), Err(Error::Parse(_))));
        let g = build_grid([0.5; 3], [2; 3], false).unwrap();
        let mut t = to_csv(&State::identity(g));
        t.truncate(t.trim_end().rfind('\n').unwrap() + 1);
        assert!(matches!(from_csv(&t, 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn vtk_header_template() {
        let g = build_grid([1.0, 0.5, 0.5], [3, 2, 2], false).unwrap();
        let v = to_vtk(&State::identity(g));
        let expected = "# vtk DataFile Version 3.0\nlce-min field snapshot\nASCII\nDATASET STRUCTURED_POINTS\n\
                        DIMENSIONS 3 2 2\nORIGIN -1 -0.5 -0.5\nSPACING 1 1 1\nPOINT_DATA 12\nVECTORS phi double\n\
                        -1 -0.5 -0.5\n0 -0.5 -0.5\n1 -0.5 -0.5\n-1 0.5 -0.5\n";
        assert!(v.starts_with(expected), "{v}");
        assert_eq!(v.matches("LOOKUP_TABLE default").count(), 5);
        assert_eq!(v.lines().count(), 9 + 12 + 5 * 14);
    }

    #[test]
    fn log_format() {
        assert_eq!(log_csv(&[]), format!("{LOG_HEADER}\n"));
    }
}
