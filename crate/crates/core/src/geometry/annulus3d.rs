//! Structured 3D annulus generator: a subdivided-octahedron sphere lattice
//! swept through log-graded radial layers. Prisms are split into tetrahedra
//! with the minimal-corner diagonal rule, keyed on mirror-invariant lattice
//! coordinates so all three coordinate reflections map cells to cells.

use super::{BodyShape, BoundaryTag, Mesh};
use crate::error::{CoreError, Result};
use std::collections::HashMap;

struct SphereLattice {
    /// unit directions, flat nv x 3
    dirs: Vec<f64>,
    /// mirror-invariant key per node: absolute lattice coordinates
    abs_key: Vec<[u32; 3]>,
    /// surface triangles (outward oriented)
    tris: Vec<[u32; 3]>,
}

fn octasphere(n: u32) -> SphereLattice {
    let mut dirs: Vec<f64> = Vec::new();
    let mut abs_key: Vec<[u32; 3]> = Vec::new();
    let mut index: HashMap<[i64; 3], u32> = HashMap::new();
    let mut tris: Vec<[u32; 3]> = Vec::new();

    // canonical positive-octant unit vectors, shared across sign octants
    let canon = |i: u32, j: u32, k: u32| -> [f64; 3] {
        let (x, y, z) = (i as f64, j as f64, k as f64);
        let r = (x * x + y * y + z * z).sqrt();
        [x / r, y / r, z / r]
    };

    let octants: [[i64; 3]; 8] = [
        [1, 1, 1],
        [-1, 1, 1],
        [1, -1, 1],
        [-1, -1, 1],
        [1, 1, -1],
        [-1, 1, -1],
        [1, -1, -1],
        [-1, -1, -1],
    ];

    for s in octants.iter() {
        let parity = s[0] * s[1] * s[2];
        // node lookup within this octant
        let mut node = |i: u32, j: u32| -> u32 {
            let k = n - i - j;
            let key = [s[0] * i as i64, s[1] * j as i64, s[2] * k as i64];
            if let Some(&id) = index.get(&key) {
                return id;
            }
            let c = canon(i, j, k);
            let p = [
                if i == 0 { 0.0 } else { s[0] as f64 * c[0] },
                if j == 0 { 0.0 } else { s[1] as f64 * c[1] },
                if k == 0 { 0.0 } else { s[2] as f64 * c[2] },
            ];
            let id = (dirs.len() / 3) as u32;
            dirs.extend_from_slice(&p);
            abs_key.push([i, j, k]);
            index.insert(key, id);
            id
        };
        for i in 0..n {
            for j in 0..(n - i) {
                let a = node(i, j);
                let b = node(i + 1, j);
                let c = node(i, j + 1);
                if parity > 0 {
                    tris.push([a, b, c]);
                } else {
                    tris.push([a, c, b]);
                }
                if i + j + 1 < n {
                    let d = node(i + 1, j + 1);
                    if parity > 0 {
                        tris.push([b, d, c]);
                    } else {
                        tris.push([b, c, d]);
                    }
                }
            }
        }
    }
    SphereLattice { dirs, abs_key, tris }
}

pub fn build(body: &BodyShape, outer_radius: f64, h: f64, _symmetric: bool) -> Result<Mesh> {
    let r0 = body.circumradius();
    let n = (((std::f64::consts::FRAC_PI_2) * r0 / h).round() as u32).max(2);
    let n_r = (((outer_radius / r0).ln() * r0 / h).ceil() as usize).max(2);
    let lat = octasphere(n);
    let n_surf = lat.dirs.len() / 3;

    let mut blend = Vec::with_capacity(n_r + 1);
    for k in 0..=n_r {
        let rho = r0 * (outer_radius / r0).powf(k as f64 / n_r as f64);
        blend.push((rho - r0) / (outer_radius - r0));
    }
    blend[0] = 0.0;
    *blend.last_mut().unwrap() = 1.0;

    let mut vertices = Vec::with_capacity((n_r + 1) * n_surf * 3);
    for bl in blend.iter() {
        for m in 0..n_surf {
            let u = &lat.dirs[3 * m..3 * m + 3];
            let rb = body.boundary_radius(u);
            for c in 0..3 {
                let x = (1.0 - bl) * rb * u[c] + bl * outer_radius * u[c];
                vertices.push(if x == 0.0 { 0.0 } else { x });
            }
        }
    }

    let gid = |layer: usize, m: u32| -> u32 { (layer * n_surf) as u32 + m };
    // strict mirror-invariant total order: (layer, abs lattice coords)
    let key = |layer: usize, m: u32| -> [u32; 4] {
        let a = lat.abs_key[m as usize];
        [layer as u32, a[0], a[1], a[2]]
    };

    let mut cells: Vec<u32> = Vec::with_capacity(lat.tris.len() * n_r * 3 * 4);
    let push_tet = |verts: &mut Vec<f64>, cells: &mut Vec<u32>, t: [u32; 4]| {
        // orient positively
        let v = |i: u32| -> [f64; 3] {
            let p = &verts[(i as usize) * 3..(i as usize) * 3 + 3];
            [p[0], p[1], p[2]]
        };
        let (p0, p1, p2, p3) = (v(t[0]), v(t[1]), v(t[2]), v(t[3]));
        let a = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
        let b = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
        let c = [p3[0] - p0[0], p3[1] - p0[1], p3[2] - p0[2]];
        let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]);
        if det > 0.0 {
            cells.extend_from_slice(&t);
        } else {
            cells.extend_from_slice(&[t[0], t[2], t[1], t[3]]);
        }
    };

    for layer in 0..n_r {
        for tri in lat.tris.iter() {
            // prism corners: bottom (layer) a,b,c; top (layer+1) a',b',c'
            let mut corners = [
                (gid(layer, tri[0]), key(layer, tri[0])),
                (gid(layer, tri[1]), key(layer, tri[1])),
                (gid(layer, tri[2]), key(layer, tri[2])),
                (gid(layer + 1, tri[0]), key(layer + 1, tri[0])),
                (gid(layer + 1, tri[1]), key(layer + 1, tri[1])),
                (gid(layer + 1, tri[2]), key(layer + 1, tri[2])),
            ];
            // rotate so the minimal-key corner sits at position 0
            let min_pos = corners
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.cmp(&b.1 .1))
                .map(|(i, _)| i)
                .unwrap();
            if min_pos >= 3 {
                // flip prism upside down
                corners.swap(0, 3);
                corners.swap(1, 4);
                corners.swap(2, 5);
            }
            let rot = min_pos % 3;
            if rot > 0 {
                let b0 = [corners[0], corners[1], corners[2]];
                let t0 = [corners[3], corners[4], corners[5]];
                for i in 0..3 {
                    corners[i] = b0[(i + rot) % 3];
                    corners[3 + i] = t0[(i + rot) % 3];
                }
            }
            let id = |i: usize| corners[i].0;
            let k = |i: usize| &corners[i].1;
            // quad faces at w0 get diagonals through w0 (the global min);
            // the remaining quad (w1,w2,w5,w4) takes the diagonal through its
            // own minimal corner so neighbouring prisms agree facewise
            let diag15 = k(1).min(k(5)) < k(2).min(k(4));
            if diag15 {
                push_tet(&mut vertices, &mut cells, [id(0), id(1), id(2), id(5)]);
                push_tet(&mut vertices, &mut cells, [id(0), id(1), id(5), id(4)]);
                push_tet(&mut vertices, &mut cells, [id(0), id(4), id(5), id(3)]);
            } else {
                push_tet(&mut vertices, &mut cells, [id(0), id(1), id(2), id(4)]);
                push_tet(&mut vertices, &mut cells, [id(0), id(4), id(2), id(5)]);
                push_tet(&mut vertices, &mut cells, [id(0), id(4), id(5), id(3)]);
            }
        }
    }

    let mut boundary_facets = Vec::with_capacity(2 * lat.tris.len());
    for tri in lat.tris.iter() {
        boundary_facets.push(([gid(0, tri[0]), gid(0, tri[1]), gid(0, tri[2])], BoundaryTag::Body));
        boundary_facets.push((
            [gid(n_r, tri[0]), gid(n_r, tri[1]), gid(n_r, tri[2])],
            BoundaryTag::Outer,
        ));
    }

    let mesh = Mesh {
        dim: 3,
        vertices,
        cells,
        boundary_facets,
        outer_radius,
        mesh_size: h,
    };
    for c in 0..mesh.n_cells() {
        if mesh.cell_volume(c) <= 0.0 {
            return Err(CoreError::MeshFailure(format!(
                "3D generator produced inverted cell {c}"
            )));
        }
    }
    Ok(mesh)
}
