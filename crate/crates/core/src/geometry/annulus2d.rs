//! Structured 2D annulus generator: log-graded rings of quads between the
//! body boundary and the outer circle, each quad fanned into 4 triangles via
//! its centroid (no diagonal choices, so mirror symmetry is automatic).

use super::{BodyShape, BoundaryTag, Mesh};
use crate::error::Result;

pub fn build(body: &BodyShape, outer_radius: f64, h: f64, _symmetric: bool) -> Result<Mesh> {
    let r0 = body.circumradius();
    let perimeter = body.boundary_measure();
    let n_theta = ((perimeter / (2.0 * h)).round() as usize * 2).max(8);
    let n_r = (((outer_radius / r0).ln() * r0 / h).ceil() as usize).max(2);

    // ring radii fractions: log-spaced effective radius mapped to a blend
    // parameter between body boundary and outer circle
    let mut blend = Vec::with_capacity(n_r + 1);
    for k in 0..=n_r {
        let rho = r0 * (outer_radius / r0).powf(k as f64 / n_r as f64);
        blend.push((rho - r0) / (outer_radius - r0));
    }
    blend[0] = 0.0;
    *blend.last_mut().unwrap() = 1.0;

    // angular unit vectors: upper half computed, lower half mirrored bitwise
    let mut dirs = vec![[0.0f64; 2]; n_theta];
    let half = n_theta / 2;
    for (j, dir) in dirs.iter_mut().enumerate().take(half + 1) {
        let th = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
        let (mut c, mut s) = (th.cos(), th.sin());
        if j == 0 {
            c = 1.0;
            s = 0.0;
        }
        if j == half {
            c = -1.0;
            s = 0.0;
        }
        *dir = [c, s];
    }
    for j in half + 1..n_theta {
        let m = n_theta - j;
        dirs[j] = [dirs[m][0], -dirs[m][1]];
    }

    // ring vertices: index (k, j) -> k * n_theta + j
    let nv_ring = (n_r + 1) * n_theta;
    let mut vertices = Vec::with_capacity((nv_ring + n_r * n_theta) * 2);
    for bl in blend.iter() {
        for dir in dirs.iter() {
            let rb = body.boundary_radius(dir);
            let x = (1.0 - bl) * rb * dir[0] + bl * outer_radius * dir[0];
            let y = (1.0 - bl) * rb * dir[1] + bl * outer_radius * dir[1];
            vertices.push(x);
            vertices.push(y);
        }
    }

    // centroid vertices, one per quad; lower-half centroids mirrored bitwise
    let ring = |k: usize, j: usize| -> usize { k * n_theta + j % n_theta };
    let mut centroid_idx = vec![0u32; n_r * n_theta];
    for k in 0..n_r {
        for j in 0..n_theta {
            let quad = k * n_theta + j;
            if j < half {
                let (a, b, c, d) =
                    (ring(k, j), ring(k + 1, j), ring(k + 1, j + 1), ring(k, j + 1));
                let cx = (vertices[2 * a] + vertices[2 * b] + vertices[2 * c] + vertices[2 * d]) / 4.0;
                let cy = (vertices[2 * a + 1] + vertices[2 * b + 1] + vertices[2 * c + 1] + vertices[2 * d + 1]) / 4.0;
                centroid_idx[quad] = (vertices.len() / 2) as u32;
                vertices.push(cx);
                vertices.push(cy);
            } else {
                // mirror of quad (k, n_theta - 1 - j)
                let src = k * n_theta + (n_theta - 1 - j);
                let ci = centroid_idx[src] as usize;
                centroid_idx[quad] = (vertices.len() / 2) as u32;
                let (cx, cy) = (vertices[2 * ci], -vertices[2 * ci + 1]);
                vertices.push(cx);
                vertices.push(if cy == 0.0 { 0.0 } else { cy });
            }
        }
    }

    let mut cells: Vec<u32> = Vec::with_capacity(n_r * n_theta * 4 * 3);
    for k in 0..n_r {
        for j in 0..n_theta {
            let a = ring(k, j) as u32;
            let b = ring(k + 1, j) as u32;
            let c = ring(k + 1, j + 1) as u32;
            let d = ring(k, j + 1) as u32;
            let m = centroid_idx[k * n_theta + j];
            // counter-clockwise quad a -> b -> c -> d
            cells.extend_from_slice(&[a, b, m]);
            cells.extend_from_slice(&[b, c, m]);
            cells.extend_from_slice(&[c, d, m]);
            cells.extend_from_slice(&[d, a, m]);
        }
    }

    let mut boundary_facets = Vec::with_capacity(2 * n_theta);
    for j in 0..n_theta {
        boundary_facets.push((
            [ring(0, j) as u32, ring(0, j + 1) as u32, 0],
            BoundaryTag::Body,
        ));
        boundary_facets.push((
            [ring(n_r, j) as u32, ring(n_r, j + 1) as u32, 0],
            BoundaryTag::Outer,
        ));
    }

    Ok(Mesh {
        dim: 2,
        vertices,
        cells,
        boundary_facets,
        outer_radius,
        mesh_size: h,
    })
}
