//! Uniform red refinement with boundary reprojection.

use super::{BodyShape, BoundaryTag, Mesh};
use crate::error::{CoreError, Result};
use std::collections::HashMap;

/// Uniformly refine: every cell splits into 2^d children, h halves, and new
/// boundary vertices are projected back onto the exact body / outer sphere.
pub fn refine(mesh: &Mesh, body: Option<&BodyShape>) -> Result<Mesh> {
    let d = mesh.dim;
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();

    // classify boundary vertices so edge midpoints can be reprojected
    let mut vertex_tag: Vec<Option<BoundaryTag>> = vec![None; mesh.n_vertices()];
    for (f, tag) in &mesh.boundary_facets {
        for &vi in f[..d].iter() {
            vertex_tag[vi as usize] = Some(*tag);
        }
    }

    let mut mid = |a: u32, b: u32, vertices: &mut Vec<f64>| -> u32 {
        let key = (a.min(b), a.max(b));
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let mut p = vec![0.0; d];
        for c in 0..d {
            p[c] = 0.5 * (vertices[a as usize * d + c] + vertices[b as usize * d + c]);
        }
        // both endpoints on the same boundary piece -> midpoint belongs there
        let (ta, tb) = (vertex_tag[a as usize], vertex_tag[b as usize]);
        if ta.is_some() && ta == tb {
            match ta.unwrap() {
                BoundaryTag::Outer => {
                    let r: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if r > 0.0 {
                        let f = mesh.outer_radius / r;
                        for x in p.iter_mut() {
                            *x *= f;
                        }
                    }
                }
                BoundaryTag::Body => {
                    if let Some(bd) = body {
                        bd.project_to_boundary(&mut p);
                    }
                }
            }
        }
        let id = (vertices.len() / d) as u32;
        vertices.extend_from_slice(&p);
        midpoint.insert(key, id);
        id
    };

    let mut cells: Vec<u32> = Vec::with_capacity(mesh.cells.len() * (1 << d));
    if d == 2 {
        for c in 0..mesh.n_cells() {
            let t = mesh.cell(c);
            let (a, b, cc) = (t[0], t[1], t[2]);
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, cc, &mut vertices);
            let ca = mid(cc, a, &mut vertices);
            cells.extend_from_slice(&[a, ab, ca]);
            cells.extend_from_slice(&[ab, b, bc]);
            cells.extend_from_slice(&[ca, bc, cc]);
            cells.extend_from_slice(&[ab, bc, ca]);
        }
    } else {
        for c in 0..mesh.n_cells() {
            let t = mesh.cell(c);
            let (v0, v1, v2, v3) = (t[0], t[1], t[2], t[3]);
            let m01 = mid(v0, v1, &mut vertices);
            let m02 = mid(v0, v2, &mut vertices);
            let m03 = mid(v0, v3, &mut vertices);
            let m12 = mid(v1, v2, &mut vertices);
            let m13 = mid(v1, v3, &mut vertices);
            let m23 = mid(v2, v3, &mut vertices);
            // four corner tets
            cells.extend_from_slice(&[v0, m01, m02, m03]);
            cells.extend_from_slice(&[v1, m01, m12, m13]);
            cells.extend_from_slice(&[v2, m02, m12, m23]);
            cells.extend_from_slice(&[v3, m03, m13, m23]);
            // inner octahedron: split along the shortest of the 3 diagonals
            let dist2 = |p: u32, q: u32| -> f64 {
                let mut s = 0.0;
                for c in 0..3 {
                    let dx = vertices[p as usize * 3 + c] - vertices[q as usize * 3 + c];
                    s += dx * dx;
                }
                s
            };
            let d1 = dist2(m01, m23);
            let d2 = dist2(m02, m13);
            let d3 = dist2(m03, m12);
            if d1 <= d2 && d1 <= d3 {
                cells.extend_from_slice(&[m01, m23, m02, m03]);
                cells.extend_from_slice(&[m01, m23, m03, m13]);
                cells.extend_from_slice(&[m01, m23, m13, m12]);
                cells.extend_from_slice(&[m01, m23, m12, m02]);
            } else if d2 <= d3 {
                cells.extend_from_slice(&[m02, m13, m01, m03]);
                cells.extend_from_slice(&[m02, m13, m03, m23]);
                cells.extend_from_slice(&[m02, m13, m23, m12]);
                cells.extend_from_slice(&[m02, m13, m12, m01]);
            } else {
                cells.extend_from_slice(&[m03, m12, m01, m13]);
                cells.extend_from_slice(&[m03, m12, m13, m23]);
                cells.extend_from_slice(&[m03, m12, m23, m02]);
                cells.extend_from_slice(&[m03, m12, m02, m01]);
            }
        }
    }

    // fix tet orientations (octahedron splits are not orientation-sorted)
    if d == 3 {
        for c in 0..cells.len() / 4 {
            let t = [cells[4 * c], cells[4 * c + 1], cells[4 * c + 2], cells[4 * c + 3]];
            let v = |i: u32| &vertices[i as usize * 3..i as usize * 3 + 3];
            let (p0, p1, p2, p3) = (v(t[0]), v(t[1]), v(t[2]), v(t[3]));
            let a = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
            let b = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
            let g = [p3[0] - p0[0], p3[1] - p0[1], p3[2] - p0[2]];
            let det = a[0] * (b[1] * g[2] - b[2] * g[1]) - a[1] * (b[0] * g[2] - b[2] * g[0])
                + a[2] * (b[0] * g[1] - b[1] * g[0]);
            if det < 0.0 {
                cells.swap(4 * c + 1, 4 * c + 2);
            }
        }
    }

    let mut boundary_facets = Vec::with_capacity(mesh.boundary_facets.len() * (1 << (d - 1)));
    for (f, tag) in &mesh.boundary_facets {
        if d == 2 {
            let m = mid(f[0], f[1], &mut vertices);
            boundary_facets.push(([f[0], m, 0], *tag));
            boundary_facets.push(([m, f[1], 0], *tag));
        } else {
            let m01 = mid(f[0], f[1], &mut vertices);
            let m12 = mid(f[1], f[2], &mut vertices);
            let m20 = mid(f[2], f[0], &mut vertices);
            boundary_facets.push(([f[0], m01, m20], *tag));
            boundary_facets.push(([m01, f[1], m12], *tag));
            boundary_facets.push(([m20, m12, f[2]], *tag));
            boundary_facets.push(([m01, m12, m20], *tag));
        }
    }

    let out = Mesh {
        dim: d,
        vertices,
        cells,
        boundary_facets,
        outer_radius: mesh.outer_radius,
        mesh_size: mesh.mesh_size / 2.0,
    };
    for c in 0..out.n_cells() {
        if out.cell_volume(c) <= 0.0 {
            return Err(CoreError::MeshFailure(format!(
                "refinement produced inverted cell {c}"
            )));
        }
    }
    Ok(out)
}
