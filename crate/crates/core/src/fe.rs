//! Reference simplex elements and quadrature.
//!
//! One element pair is provided: continuous P2 velocity / P1 pressure on
//! affine triangles and tetrahedra. Quadrature rules are conical products of
//! Gauss-Jacobi lines, generated at the requested degree so exactness is by
//! construction rather than by table transcription.

use faer::Mat;

/// Quadrature rule on the reference simplex (unit triangle / tetrahedron).
/// `points` is flat, `nq x d`; weights integrate over the reference simplex.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }
}

/// Gauss rule on [0,1] with weight (1-x)^alpha, exact for degree 2n-1.
fn gauss_jacobi_01(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    // Golub-Welsch on the Jacobi (alpha, 0) recurrence over [-1, 1].
    let beta = 0.0f64;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for k in 0..n {
        let kf = k as f64;
        let denom = (2.0 * kf + alpha + beta) * (2.0 * kf + alpha + beta + 2.0);
        diag[k] = if denom == 0.0 {
            (beta - alpha) / (alpha + beta + 2.0)
        } else {
            (beta * beta - alpha * alpha) / denom
        };
    }
    for k in 1..n {
        let kf = k as f64;
        let num = 4.0 * kf * (kf + alpha) * (kf + beta) * (kf + alpha + beta);
        let den = (2.0 * kf + alpha + beta).powi(2)
            * (2.0 * kf + alpha + beta + 1.0)
            * (2.0 * kf + alpha + beta - 1.0);
        // k = 1 with alpha+beta = 0 hits 0/0 in the generic formula.
        off[k - 1] = if k == 1 && (alpha + beta).abs() < 1e-14 {
            (4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + alpha + beta).powi(2) * (3.0 + alpha + beta)))
                .sqrt()
        } else {
            (num / den).sqrt()
        };
    }
    let mut jm = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        jm[(k, k)] = diag[k];
    }
    for k in 0..n - 1 {
        jm[(k, k + 1)] = off[k];
        jm[(k + 1, k)] = off[k];
    }
    let evd = jm
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("Jacobi matrix eigendecomposition");
    // mu0 = int_{-1}^{1} (1-x)^alpha dx = 2^{alpha+1} / (alpha+1)
    let mu0 = 2f64.powf(alpha + 1.0) / (alpha + 1.0);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let x = evd.S()[i];
        let v0 = evd.U()[(0, i)];
        let w = mu0 * v0 * v0;
        // shift [-1,1] -> [0,1]; (1-x)^alpha weight rescales by 2^{-(alpha+1)}
        nodes.push(0.5 * (1.0 + x));
        weights.push(w / 2f64.powf(alpha + 1.0));
    }
    // ascending nodes for determinism
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
    (
        idx.iter().map(|&i| nodes[i]).collect(),
        idx.iter().map(|&i| weights[i]).collect(),
    )
}

/// Conical-product rule on the reference simplex, exact for total degree `deg`.
pub fn simplex_quadrature(dim: usize, deg: usize) -> QuadRule {
    let n = deg / 2 + 1;
    match dim {
        2 => {
            let (xu, wu) = gauss_jacobi_01(n, 1.0);
            let (xv, wv) = gauss_jacobi_01(n, 0.0);
            let mut points = Vec::with_capacity(n * n * 2);
            let mut weights = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let u = xu[i];
                    let v = xv[j];
                    points.push(u);
                    points.push(v * (1.0 - u));
                    weights.push(wu[i] * wv[j]);
                }
            }
            QuadRule { dim, points, weights }
        }
        3 => {
            let (xu, wu) = gauss_jacobi_01(n, 2.0);
            let (xv, wv) = gauss_jacobi_01(n, 1.0);
            let (xw, ww) = gauss_jacobi_01(n, 0.0);
            let mut points = Vec::with_capacity(n * n * n * 3);
            let mut weights = Vec::with_capacity(n * n * n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let u = xu[i];
                        let v = xv[j];
                        let w = xw[k];
                        points.push(u);
                        points.push(v * (1.0 - u));
                        points.push(w * (1.0 - u) * (1.0 - v));
                        weights.push(wu[i] * wv[j] * ww[k]);
                    }
                }
            }
            QuadRule { dim, points, weights }
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Number of P2 scalar nodes per cell: vertices + edges.
pub fn p2_nodes_per_cell(dim: usize) -> usize {
    match dim {
        2 => 6,
        3 => 10,
        _ => panic!("unsupported dimension {dim}"),
    }
}

pub fn p1_nodes_per_cell(dim: usize) -> usize {
    dim + 1
}

/// Local edges of the reference simplex, in the order edge nodes are numbered.
pub fn local_edges(dim: usize) -> &'static [[usize; 2]] {
    match dim {
        2 => &[[0, 1], [1, 2], [2, 0]],
        3 => &[[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]],
        _ => panic!("unsupported dimension {dim}"),
    }
}

fn bary(dim: usize, x: &[f64]) -> [f64; 4] {
    match dim {
        2 => [1.0 - x[0] - x[1], x[0], x[1], 0.0],
        3 => [1.0 - x[0] - x[1] - x[2], x[0], x[1], x[2]],
        _ => unreachable!(),
    }
}

/// Barycentric gradients in reference coordinates: dL_i/dx_j, row-major (i, j).
fn bary_ref_grads(dim: usize) -> [[f64; 3]; 4] {
    match dim {
        2 => [
            [-1.0, -1.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0],
        ],
        3 => [
            [-1.0, -1.0, -1.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ],
        _ => unreachable!(),
    }
}

/// P2 basis values at a reference point; `out` holds `p2_nodes_per_cell(dim)` entries.
pub fn p2_values(dim: usize, x: &[f64], out: &mut [f64]) {
    let l = bary(dim, x);
    let nv = dim + 1;
    for i in 0..nv {
        out[i] = l[i] * (2.0 * l[i] - 1.0);
    }
    for (e, ed) in local_edges(dim).iter().enumerate() {
        out[nv + e] = 4.0 * l[ed[0]] * l[ed[1]];
    }
}

/// P2 basis gradients in reference coordinates; `out` is `n_nodes x dim` row-major.
pub fn p2_ref_grads(dim: usize, x: &[f64], out: &mut [f64]) {
    let l = bary(dim, x);
    let g = bary_ref_grads(dim);
    let nv = dim + 1;
    for i in 0..nv {
        for j in 0..dim {
            out[i * dim + j] = (4.0 * l[i] - 1.0) * g[i][j];
        }
    }
    for (e, ed) in local_edges(dim).iter().enumerate() {
        let (a, b) = (ed[0], ed[1]);
        for j in 0..dim {
            out[(nv + e) * dim + j] = 4.0 * (l[a] * g[b][j] + l[b] * g[a][j]);
        }
    }
}

/// P1 basis values (the barycentric coordinates themselves).
pub fn p1_values(dim: usize, x: &[f64], out: &mut [f64]) {
    let l = bary(dim, x);
    out[..dim + 1].copy_from_slice(&l[..dim + 1]);
}

pub fn p1_ref_grads(dim: usize, out: &mut [f64]) {
    let g = bary_ref_grads(dim);
    for i in 0..dim + 1 {
        for j in 0..dim {
            out[i * dim + j] = g[i][j];
        }
    }
}

/// Affine cell geometry: Jacobian, its inverse transpose and |det J|.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub dim: usize,
    /// column c = v_{c+1} - v_0
    pub jac: [f64; 9],
    pub inv_jac_t: [f64; 9],
    pub det: f64,
}

impl CellGeometry {
    pub fn from_vertices(dim: usize, verts: &[f64]) -> Self {
        let mut jac = [0.0f64; 9];
        for c in 0..dim {
            for r in 0..dim {
                jac[r * dim + c] = verts[(c + 1) * dim + r] - verts[r];
            }
        }
        let (inv, det) = match dim {
            2 => {
                let (a, b, c, d) = (jac[0], jac[1], jac[2], jac[3]);
                let det = a * d - b * c;
                let mut inv = [0.0f64; 9];
                // inverse transpose of [[a, b], [c, d]]
                inv[0] = d / det;
                inv[1] = -c / det;
                inv[2] = -b / det;
                inv[3] = a / det;
                (inv, det)
            }
            3 => {
                let m = &jac;
                let det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                    + m[2] * (m[3] * m[7] - m[4] * m[6]);
                let mut adj = [0.0f64; 9];
                adj[0] = m[4] * m[8] - m[5] * m[7];
                adj[1] = m[2] * m[7] - m[1] * m[8];
                adj[2] = m[1] * m[5] - m[2] * m[4];
                adj[3] = m[5] * m[6] - m[3] * m[8];
                adj[4] = m[0] * m[8] - m[2] * m[6];
                adj[5] = m[2] * m[3] - m[0] * m[5];
                adj[6] = m[3] * m[7] - m[4] * m[6];
                adj[7] = m[1] * m[6] - m[0] * m[7];
                adj[8] = m[0] * m[4] - m[1] * m[3];
                // adj is the inverse*det in row-major; transpose for inv(J)^T
                let mut inv = [0.0f64; 9];
                for r in 0..3 {
                    for c in 0..3 {
                        inv[r * 3 + c] = adj[c * 3 + r] / det;
                    }
                }
                (inv, det)
            }
            _ => panic!("unsupported dimension {dim}"),
        };
        CellGeometry { dim, jac, inv_jac_t: inv, det }
    }

    pub fn volume(&self) -> f64 {
        let fact = if self.dim == 2 { 2.0 } else { 6.0 };
        self.det / fact
    }

    /// Push a reference gradient to physical coordinates: g_phys = J^{-T} g_ref.
    pub fn grad_to_physical(&self, g_ref: &[f64], g_phys: &mut [f64]) {
        let d = self.dim;
        for r in 0..d {
            let mut s = 0.0;
            for c in 0..d {
                s += self.inv_jac_t[r * d + c] * g_ref[c];
            }
            g_phys[r] = s;
        }
    }

    pub fn map_point(&self, v0: &[f64], xref: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for r in 0..d {
            let mut s = v0[r];
            for c in 0..d {
                s += self.jac[r * d + c] * xref[c];
            }
            out[r] = s;
        }
    }
}
