//! Truncated exterior-domain meshes: the annulus between a rigid body at the
//! origin and an outer ball of radius R, with tagged boundary facets.

mod annulus2d;
mod annulus3d;
pub mod gridfile;
mod refine;

use crate::error::{CoreError, Result};

pub use refine::refine;

/// Boundary facet tag. BODY is the body surface, OUTER the truncation sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BoundaryTag {
    Body,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyKind {
    Disk,
    Ellipse,
    Sphere,
    Ellipsoid,
    PolyFile,
}

/// Rigid body shape, centered at the origin, rescaled so that its diameter is
/// exactly 1 (the length scale of the nondimensional problem). The factor
/// applied to the raw input is kept in `scale_factor`.
#[derive(Debug, Clone)]
pub struct BodyShape {
    pub kind: BodyKind,
    /// semi-axes after rescaling; unused entries are 0
    pub semi_axes: [f64; 3],
    pub scale_factor: f64,
    dim: usize,
    /// polygon vertices (2D, closed, counter-clockwise) for PolyFile bodies
    polygon: Vec<[f64; 2]>,
}

impl BodyShape {
    pub fn disk() -> Self {
        BodyShape {
            kind: BodyKind::Disk,
            semi_axes: [0.5, 0.5, 0.0],
            scale_factor: 1.0,
            dim: 2,
            polygon: Vec::new(),
        }
    }

    /// Ellipse with raw semi-axes (a, b); rescaled so diam = 2 max(a,b) = 1.
    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if a <= 0.0 || b <= 0.0 {
            return Err(CoreError::Precondition("ellipse semi-axes must be positive".into()));
        }
        let s = 0.5 / a.max(b);
        Ok(BodyShape {
            kind: if (a - b).abs() < 1e-15 * a.max(b) { BodyKind::Disk } else { BodyKind::Ellipse },
            semi_axes: [a * s, b * s, 0.0],
            scale_factor: s,
            dim: 2,
            polygon: Vec::new(),
        })
    }

    pub fn sphere() -> Self {
        BodyShape {
            kind: BodyKind::Sphere,
            semi_axes: [0.5, 0.5, 0.5],
            scale_factor: 1.0,
            dim: 3,
            polygon: Vec::new(),
        }
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        if a <= 0.0 || b <= 0.0 || c <= 0.0 {
            return Err(CoreError::Precondition("ellipsoid semi-axes must be positive".into()));
        }
        let s = 0.5 / a.max(b).max(c);
        Ok(BodyShape {
            kind: BodyKind::Ellipsoid,
            semi_axes: [a * s, b * s, c * s],
            scale_factor: s,
            dim: 3,
            polygon: Vec::new(),
        })
    }

    /// Polygonal 2D body, star-shaped with respect to the origin. Vertices are
    /// rescaled so the polygon diameter is 1.
    pub fn from_polygon(mut verts: Vec<[f64; 2]>) -> Result<Self> {
        if verts.len() < 3 {
            return Err(CoreError::Precondition("polygon needs at least 3 vertices".into()));
        }
        let mut diam: f64 = 0.0;
        for i in 0..verts.len() {
            for j in i + 1..verts.len() {
                let dx = verts[i][0] - verts[j][0];
                let dy = verts[i][1] - verts[j][1];
                diam = diam.max((dx * dx + dy * dy).sqrt());
            }
        }
        if diam <= 0.0 {
            return Err(CoreError::Precondition("degenerate polygon".into()));
        }
        let s = 1.0 / diam;
        for v in verts.iter_mut() {
            v[0] *= s;
            v[1] *= s;
        }
        // require the origin strictly inside and star-shapedness along rays
        let body = BodyShape {
            kind: BodyKind::PolyFile,
            semi_axes: [0.0; 3],
            scale_factor: s,
            dim: 2,
            polygon: verts,
        };
        for k in 0..64 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
            if body.polygon_ray_radius(th.cos(), th.sin()).is_none() {
                return Err(CoreError::Precondition(
                    "polygon must be star-shaped with respect to the origin".into(),
                ));
            }
        }
        Ok(body)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest distance from the origin to the body boundary.
    pub fn circumradius(&self) -> f64 {
        match self.kind {
            BodyKind::PolyFile => self
                .polygon
                .iter()
                .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
                .fold(0.0, f64::max),
            _ => self.semi_axes.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Distance from the origin to the boundary along the unit direction `u`.
    pub fn boundary_radius(&self, u: &[f64]) -> f64 {
        match self.kind {
            BodyKind::Disk | BodyKind::Sphere => self.semi_axes[0],
            BodyKind::Ellipse | BodyKind::Ellipsoid => {
                let mut s = 0.0;
                for (i, &ui) in u.iter().take(self.dim).enumerate() {
                    s += (ui / self.semi_axes[i]).powi(2);
                }
                1.0 / s.sqrt()
            }
            BodyKind::PolyFile => self
                .polygon_ray_radius(u[0], u[1])
                .expect("star-shaped polygon"),
        }
    }

    fn polygon_ray_radius(&self, ux: f64, uy: f64) -> Option<f64> {
        let n = self.polygon.len();
        let mut best: Option<f64> = None;
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            // solve t*(ux,uy) = a + s*(b-a), s in [0,1], t > 0
            let ex = b[0] - a[0];
            let ey = b[1] - a[1];
            let det = ux * (-ey) - uy * (-ex);
            if det.abs() < 1e-30 {
                continue;
            }
            let t = (a[0] * (-ey) + a[1] * ex) / det;
            let s = (ux * a[1] - uy * a[0]) / det;
            if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
                best = Some(best.map_or(t, |bt: f64| bt.min(t)));
            }
        }
        best
    }

    /// Project a point onto the exact body boundary (used when refining).
    pub fn project_to_boundary(&self, p: &mut [f64]) {
        match self.kind {
            BodyKind::Disk | BodyKind::Sphere => {
                let r: f64 = p.iter().take(self.dim).map(|x| x * x).sum::<f64>().sqrt();
                if r > 0.0 {
                    let f = self.semi_axes[0] / r;
                    for x in p.iter_mut().take(self.dim) {
                        *x *= f;
                    }
                }
            }
            BodyKind::Ellipse | BodyKind::Ellipsoid => {
                // radial projection onto the ellipse: cheap, adequate for the
                // near-boundary midpoints produced by uniform refinement
                let mut s = 0.0;
                for (i, &x) in p.iter().take(self.dim).enumerate() {
                    s += (x / self.semi_axes[i]).powi(2);
                }
                let f = 1.0 / s.sqrt();
                for x in p.iter_mut().take(self.dim) {
                    *x *= f;
                }
            }
            BodyKind::PolyFile => {
                let r: f64 = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if r > 0.0 {
                    if let Some(t) = self.polygon_ray_radius(p[0] / r, p[1] / r) {
                        p[0] *= t / r;
                        p[1] *= t / r;
                    }
                }
            }
        }
    }

    /// Analytic perimeter (2D) or surface area (3D) of the body boundary.
    pub fn boundary_measure(&self) -> f64 {
        match self.kind {
            BodyKind::Disk => 2.0 * std::f64::consts::PI * self.semi_axes[0],
            BodyKind::Sphere => 4.0 * std::f64::consts::PI * self.semi_axes[0] * self.semi_axes[0],
            BodyKind::Ellipse => {
                // Gauss quadrature of the arclength integral
                let (a, b) = (self.semi_axes[0], self.semi_axes[1]);
                let n = 512;
                let mut s = 0.0;
                for k in 0..n {
                    let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                    s += ((a * th.sin()).powi(2) + (b * th.cos()).powi(2)).sqrt();
                }
                s * 2.0 * std::f64::consts::PI / n as f64
            }
            BodyKind::Ellipsoid => {
                // Thomsen's approximation, plenty for a convergence target
                let p = 1.6075;
                let (a, b, c) = (self.semi_axes[0], self.semi_axes[1], self.semi_axes[2]);
                let ap = a.powf(p);
                let bp = b.powf(p);
                let cp = c.powf(p);
                4.0 * std::f64::consts::PI * ((ap * bp + ap * cp + bp * cp) / 3.0).powf(1.0 / p)
            }
            BodyKind::PolyFile => {
                let n = self.polygon.len();
                (0..n)
                    .map(|i| {
                        let a = self.polygon[i];
                        let b = self.polygon[(i + 1) % n];
                        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
                    })
                    .sum()
            }
        }
    }
}

/// Simplicial mesh of the truncated fluid annulus.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    /// vertex coordinates, flat `nv x dim`
    pub vertices: Vec<f64>,
    /// cell connectivity, flat `nc x (dim+1)`
    pub cells: Vec<u32>,
    /// boundary facets: `dim` vertex indices each, plus a tag
    pub boundary_facets: Vec<([u32; 3], BoundaryTag)>,
    pub outer_radius: f64,
    pub mesh_size: f64,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len() / self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell(&self, c: usize) -> &[u32] {
        &self.cells[c * (self.dim + 1)..(c + 1) * (self.dim + 1)]
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        let nodes = self.cell(c);
        let d = self.dim;
        let v0 = self.vertex(nodes[0] as usize);
        if d == 2 {
            let v1 = self.vertex(nodes[1] as usize);
            let v2 = self.vertex(nodes[2] as usize);
            0.5 * ((v1[0] - v0[0]) * (v2[1] - v0[1]) - (v1[1] - v0[1]) * (v2[0] - v0[0]))
        } else {
            let v1 = self.vertex(nodes[1] as usize);
            let v2 = self.vertex(nodes[2] as usize);
            let v3 = self.vertex(nodes[3] as usize);
            let a = [v1[0] - v0[0], v1[1] - v0[1], v1[2] - v0[2]];
            let b = [v2[0] - v0[0], v2[1] - v0[1], v2[2] - v0[2]];
            let c3 = [v3[0] - v0[0], v3[1] - v0[1], v3[2] - v0[2]];
            (a[0] * (b[1] * c3[2] - b[2] * c3[1]) - a[1] * (b[0] * c3[2] - b[2] * c3[0])
                + a[2] * (b[0] * c3[1] - b[1] * c3[0]))
                / 6.0
        }
    }

    /// Measure (length/area) of a boundary facet.
    pub fn facet_measure(&self, facet: &[u32; 3]) -> f64 {
        let d = self.dim;
        let a = self.vertex(facet[0] as usize);
        let b = self.vertex(facet[1] as usize);
        if d == 2 {
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        } else {
            let c = self.vertex(facet[2] as usize);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let cx = u[1] * v[2] - u[2] * v[1];
            let cy = u[2] * v[0] - u[0] * v[2];
            let cz = u[0] * v[1] - u[1] * v[0];
            0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
        }
    }

    /// Total measure of facets carrying a tag.
    pub fn tagged_measure(&self, tag: BoundaryTag) -> f64 {
        self.boundary_facets
            .iter()
            .filter(|(_, t)| *t == tag)
            .map(|(f, _)| self.facet_measure(f))
            .sum()
    }

    /// Verify the structural invariants: positive cell volumes and an exact
    /// tag partition of the boundary (every boundary facet of the cell complex
    /// tagged exactly once). Geometric placement of tagged facets is checked
    /// against `body` when one is supplied.
    pub fn validate(&self, body: Option<&BodyShape>) -> Result<()> {
        for c in 0..self.n_cells() {
            let v = self.cell_volume(c);
            if !(v > 0.0) {
                return Err(CoreError::MeshFailure(format!(
                    "cell {c} has non-positive volume {v:.3e}"
                )));
            }
        }
        // boundary facets of the complex = facets incident to exactly one cell
        use std::collections::HashMap;
        let d = self.dim;
        let mut counts: HashMap<[u32; 3], usize> = HashMap::new();
        for c in 0..self.n_cells() {
            let cell = self.cell(c);
            let nf = d + 1;
            for f in 0..nf {
                let mut facet = [0u32; 3];
                let mut k = 0;
                for i in 0..nf {
                    if i != f {
                        facet[k] = cell[i];
                        k += 1;
                    }
                }
                facet[..d].sort_unstable();
                *counts.entry(facet).or_insert(0) += 1;
            }
        }
        let boundary: std::collections::HashSet<[u32; 3]> = counts
            .iter()
            .filter(|(_, &n)| n == 1)
            .map(|(f, _)| *f)
            .collect();
        let mut seen: std::collections::HashSet<[u32; 3]> = Default::default();
        for (f, _) in &self.boundary_facets {
            let mut key = *f;
            key[..d].sort_unstable();
            if !boundary.contains(&key) {
                return Err(CoreError::MeshFailure(format!(
                    "tagged facet {key:?} is not a boundary facet of the complex"
                )));
            }
            if !seen.insert(key) {
                return Err(CoreError::MeshFailure(format!("facet {key:?} tagged twice")));
            }
        }
        if seen.len() != boundary.len() {
            return Err(CoreError::MeshFailure(format!(
                "tag partition incomplete: {} tagged vs {} boundary facets",
                seen.len(),
                boundary.len()
            )));
        }
        // geometric placement
        let tol = 1e-12 * self.mesh_size.max(1.0);
        for (f, tag) in &self.boundary_facets {
            for &vi in f[..d].iter() {
                let p = self.vertex(vi as usize);
                match tag {
                    BoundaryTag::Outer => {
                        let r: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                        if (r - self.outer_radius).abs() > tol {
                            return Err(CoreError::MeshFailure(format!(
                                "OUTER vertex at radius {r} (expected {})",
                                self.outer_radius
                            )));
                        }
                    }
                    BoundaryTag::Body => {
                        if let Some(b) = body {
                            let r: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                            let mut u = vec![0.0; d];
                            for (i, ui) in u.iter_mut().enumerate() {
                                *ui = p[i] / r;
                            }
                            let rb = b.boundary_radius(&u);
                            if (r - rb).abs() > tol {
                                return Err(CoreError::MeshFailure(format!(
                                    "BODY vertex at radius {r} (boundary at {rb})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Build the annulus mesh between `body` and the sphere of radius `R`.
///
/// `h` is the target resolution at the body; cell size grows geometrically
/// with distance so radial and azimuthal extents stay comparable. With
/// `symmetric` the mesh is bitwise invariant under x2 -> -x2 (and x3 -> -x3
/// in 3D).
pub fn build_annulus_mesh(body: &BodyShape, outer_radius: f64, h: f64, symmetric: bool) -> Result<Mesh> {
    if h <= 0.0 {
        return Err(CoreError::Precondition("mesh size h must be positive".into()));
    }
    let circ = body.circumradius();
    if outer_radius <= circ + h {
        return Err(CoreError::EmptyDomain { outer_radius, circumradius: circ });
    }
    let mesh = match body.dim() {
        2 => annulus2d::build(body, outer_radius, h, symmetric)?,
        3 => annulus3d::build(body, outer_radius, h, symmetric)?,
        d => return Err(CoreError::Precondition(format!("unsupported dimension {d}"))),
    };
    mesh.validate(Some(body))?;
    Ok(mesh)
}

#[cfg(test)]
pub(crate) fn reflection_invariant(mesh: &Mesh, axis: usize) -> bool {
    use std::collections::{HashMap, HashSet};
    let d = mesh.dim;
    let mut lookup: HashMap<Vec<u64>, u32> = HashMap::new();
    for i in 0..mesh.n_vertices() {
        let key: Vec<u64> = mesh.vertex(i).iter().map(|x| x.to_bits()).collect();
        lookup.insert(key, i as u32);
    }
    let mut map = vec![u32::MAX; mesh.n_vertices()];
    for i in 0..mesh.n_vertices() {
        let mut p: Vec<f64> = mesh.vertex(i).to_vec();
        p[axis] = -p[axis];
        // -0.0 and 0.0 differ bitwise; normalize
        for x in p.iter_mut() {
            if *x == 0.0 {
                *x = 0.0;
            }
        }
        let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
        match lookup.get(&key) {
            Some(&j) => map[i] = j,
            None => return false,
        }
    }
    let cellset: HashSet<Vec<u32>> = (0..mesh.n_cells())
        .map(|c| {
            let mut v: Vec<u32> = mesh.cell(c).to_vec();
            v.sort_unstable();
            v
        })
        .collect();
    for c in 0..mesh.n_cells() {
        let mut v: Vec<u32> = mesh.cell(c).iter().map(|&i| map[i as usize]).collect();
        v.sort_unstable();
        if !cellset.contains(&v) {
            return false;
        }
    }
    let _ = d;
    true
}
