//! Legacy-VTK text output of space-time meshes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fespace::FieldFunction;
use crate::mesh::SpaceTimeMesh;

/// Values of `field` at the mesh vertices (`t` is written as the second
/// coordinate).
pub fn vertex_values(field: &FieldFunction) -> Vec<f64> {
    let mesh = field.space().mesh();
    let mut out = vec![0.0; mesh.n_vertices()];
    for (k, tri) in mesh.triangles().iter().enumerate() {
        for (i, &v) in tri.iter().enumerate() {
            let mut l = [0.0; 3];
            l[i] = 1.0;
            out[v] = field.eval_in(k, &l).0;
        }
    }
    out
}

/// Unstructured grid with per-cell and per-point scalars.
pub fn mesh_vtk(
    mesh: &SpaceTimeMesh,
    cell_data: &[(&str, &[f64])],
    point_data: &[(&str, &[f64])],
) -> Result<String> {
    for (name, d) in cell_data {
        if d.len() != mesh.n_triangles() {
            return Err(Error::invalid(format!(
                "cell field '{name}' has {} values",
                d.len()
            )));
        }
    }
    for (name, d) in point_data {
        if d.len() != mesh.n_vertices() {
            return Err(Error::invalid(format!(
                "point field '{name}' has {} values",
                d.len()
            )));
        }
    }
    let mut s = String::from(
        "# vtk DataFile Version 3.0\nspace-time mesh (x, t)\nASCII\nDATASET UNSTRUCTURED_GRID\n",
    );
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let section = |s: &mut String, kind: &str, n: usize, data: &[(&str, &[f64])]| {
        if data.is_empty() {
            return;
        }
        let _ = writeln!(s, "{kind} {n}");
        for (name, d) in data {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in d.iter() {
                let _ = writeln!(s, "{v:e}");
            }
        }
    };
    section(&mut s, "CELL_DATA", nt, cell_data);
    section(&mut s, "POINT_DATA", mesh.n_vertices(), point_data);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Side;

    #[test]
    fn two_triangle_file() {
        let m = SpaceTimeMesh::build_structured((0.0, 1.0), (0.0, 1.0), 1, 1, Side::Left).unwrap();
        let s = mesh_vtk(&m, &[("eta", &[0.5, 0.25])], &[]).unwrap();
        assert!(s.contains("POINTS 4 double"));
        assert!(s.contains("CELLS 2 8"));
        assert!(
            s.contains("CELL_DATA 2\nSCALARS eta double 1\nLOOKUP_TABLE default\n5e-1\n2.5e-1\n")
        );
        assert!(!s.contains("POINT_DATA"));
        assert!(mesh_vtk(&m, &[("eta", &[0.5])], &[]).is_err());
    }
}
