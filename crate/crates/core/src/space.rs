//! Nondimensional parameters and the coupled fluid-rigid function space.
//!
//! Velocity is continuous P2, pressure P1 on the same simplices. Velocity
//! values on BODY nodes are identified with the d rigid-translation unknowns
//! (or pinned to zero), which builds the boundary coupling u|body = uhat into
//! the dof map. OUTER nodes stay free here; outer Dirichlet conditions are
//! applied per-solve by dof elimination through a `DofMask`.

use crate::error::{CoreError, Result};
use crate::fe;
use crate::geometry::{BoundaryTag, Mesh};

/// Dimensionless groups of the problem: Reynolds number, squared natural
/// frequency of the spring, and the fluid/body mass ratio.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NondimParams {
    pub lambda: f64,
    pub omega_n_sq: f64,
    pub varpi: f64,
}

impl NondimParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(CoreError::Precondition("lambda must be nonnegative".into()));
        }
        if !(self.omega_n_sq > 0.0) {
            return Err(CoreError::Precondition("omega_n_sq must be positive".into()));
        }
        if !(self.varpi > 0.0) {
            return Err(CoreError::Precondition("varpi must be positive".into()));
        }
        Ok(())
    }
}

/// Dimensional inputs; see `nondimensionalize`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PhysicalParams {
    pub stream_speed: f64,
    pub body_diameter: f64,
    pub viscosity: f64,
    pub density: f64,
    pub body_mass: f64,
    pub spring_stiffness: f64,
}

/// lambda = VL/nu, omega_n^2 = L^4 l / (M nu^2), varpi = rho L^3 / M.
pub fn nondimensionalize(phys: &PhysicalParams) -> Result<NondimParams> {
    let fields = [
        ("stream_speed", phys.stream_speed),
        ("body_diameter", phys.body_diameter),
        ("viscosity", phys.viscosity),
        ("density", phys.density),
        ("body_mass", phys.body_mass),
        ("spring_stiffness", phys.spring_stiffness),
    ];
    for (name, v) in fields {
        if !(v > 0.0) {
            return Err(CoreError::Precondition(format!(
                "physical parameter {name} must be strictly positive (got {v})"
            )));
        }
    }
    let l = phys.body_diameter;
    Ok(NondimParams {
        lambda: phys.stream_speed * l / phys.viscosity,
        omega_n_sq: l.powi(4) * phys.spring_stiffness / (phys.body_mass * phys.viscosity.powi(2)),
        varpi: phys.density * l.powi(3) / phys.body_mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Body,
    Outer,
}

/// Map from a full index set to a reduced one (dof elimination).
#[derive(Debug, Clone)]
pub struct DofMask {
    /// full index -> reduced index or -1
    pub map: Vec<i64>,
    pub n_full: usize,
    pub n_reduced: usize,
}

impl DofMask {
    pub fn identity(n: usize) -> Self {
        DofMask { map: (0..n as i64).collect(), n_full: n, n_reduced: n }
    }

    pub fn from_keep(keep: &[bool]) -> Self {
        let mut map = vec![-1i64; keep.len()];
        let mut next = 0i64;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                map[i] = next;
                next += 1;
            }
        }
        DofMask { map, n_full: keep.len(), n_reduced: next as usize }
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_reduced];
        for (i, &m) in self.map.iter().enumerate() {
            if m >= 0 {
                out[m as usize] = full[i];
            }
        }
        out
    }

    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_full];
        for (i, &m) in self.map.iter().enumerate() {
            if m >= 0 {
                out[i] = reduced[m as usize];
            }
        }
        out
    }
}

impl crate::linalg::CooMat {
    /// Row/column elimination through masks.
    pub fn masked(&self, rows: &DofMask, cols: &DofMask) -> crate::linalg::CooMat {
        assert_eq!(rows.n_full, self.nrows);
        assert_eq!(cols.n_full, self.ncols);
        let mut out = crate::linalg::CooMat::new(rows.n_reduced, cols.n_reduced);
        for &(r, c, v) in self.entries() {
            let rm = rows.map[r as usize];
            let cm = cols.map[c as usize];
            if rm >= 0 && cm >= 0 {
                out.push(rm as usize, cm as usize, v);
            }
        }
        out
    }
}

/// The coupled fluid-rigid Taylor-Hood space on an annulus mesh.
#[derive(Debug, Clone)]
pub struct FsiSpace {
    pub mesh: Mesh,
    pub dim: usize,
    pub p_v: usize,
    pub pinned: bool,
    /// P2 scalar nodes: mesh vertices then edge midpoints
    pub n_nodes: usize,
    pub node_coords: Vec<f64>,
    /// per-cell P2 node ids, `nc x nodes_per_cell`
    pub cell_nodes: Vec<u32>,
    pub node_class: Vec<NodeClass>,
    /// per-node velocity dof base (node-major, component-minor), -1 for BODY
    pub node_dof: Vec<i64>,
    pub n_free_nodes: usize,
    /// total velocity unknowns (free nodes * d, plus d rigid dofs if unpinned)
    pub n_vel: usize,
    pub n_pressure: usize,
}

impl FsiSpace {
    pub fn rigid_offset(&self) -> usize {
        self.n_free_nodes * self.dim
    }

    /// Rigid part of a reduced coefficient vector (zero for pinned spaces).
    pub fn rigid_part(&self, x: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        if !self.pinned {
            let off = self.rigid_offset();
            for c in 0..self.dim {
                out[c] = x[off + c];
            }
        }
        out
    }

    /// Full nodal values (n_nodes * d) of a reduced vector. BODY nodes take
    /// the rigid dofs (unpinned) or `body_value` (pinned lifting), OUTER and
    /// interior nodes their own dofs.
    pub fn full_nodal_values(&self, x: &[f64], body_value: Option<[f64; 3]>) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; self.n_nodes * d];
        let rigid = self.rigid_part(x);
        let bv = body_value.unwrap_or([0.0; 3]);
        for n in 0..self.n_nodes {
            match self.node_class[n] {
                NodeClass::Body => {
                    for c in 0..d {
                        out[n * d + c] = if self.pinned { bv[c] } else { rigid[c] };
                    }
                }
                _ => {
                    let base = self.node_dof[n];
                    debug_assert!(base >= 0);
                    for c in 0..d {
                        out[n * d + c] = x[base as usize * d + c];
                    }
                }
            }
        }
        out
    }

    /// Gather a full nodal vector into reduced coordinates; BODY-node entries
    /// accumulate into the rigid components (the transpose of extension).
    pub fn reduce_nodal_vector(&self, full: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; self.n_vel];
        for n in 0..self.n_nodes {
            match self.node_class[n] {
                NodeClass::Body => {
                    if !self.pinned {
                        for c in 0..d {
                            out[self.rigid_offset() + c] += full[n * d + c];
                        }
                    }
                }
                _ => {
                    let base = self.node_dof[n] as usize;
                    for c in 0..d {
                        out[base * d + c] = full[n * d + c];
                    }
                }
            }
        }
        out
    }

    /// Velocity-dof mask eliminating OUTER node dofs (outer Dirichlet).
    pub fn outer_mask(&self) -> DofMask {
        let d = self.dim;
        let mut keep = vec![true; self.n_vel];
        for n in 0..self.n_nodes {
            if self.node_class[n] == NodeClass::Outer {
                let base = self.node_dof[n] as usize;
                for c in 0..d {
                    keep[base * d + c] = false;
                }
            }
        }
        DofMask::from_keep(&keep)
    }

    pub fn identity_mask(&self) -> DofMask {
        DofMask::identity(self.n_vel)
    }

    /// Map a full velocity column index (node-major) to the reduced index,
    /// or the rigid dof, or None (pinned body node).
    pub fn full_to_reduced(&self, node: usize, comp: usize) -> Option<usize> {
        match self.node_class[node] {
            NodeClass::Body => {
                if self.pinned {
                    None
                } else {
                    Some(self.rigid_offset() + comp)
                }
            }
            _ => Some(self.node_dof[node] as usize * self.dim + comp),
        }
    }
}

/// Build the P2/P1 space. `p_v` other than 2 is rejected; `pin_rigid` yields
/// the space with u = 0 on the body and no rigid unknowns.
pub fn build_fsi_space(mesh: &Mesh, p_v: usize, pin_rigid: bool) -> Result<FsiSpace> {
    if p_v != 2 {
        return Err(CoreError::UnsupportedDegree(p_v));
    }
    let d = mesh.dim;
    let nv = mesh.n_vertices();
    let nc = mesh.n_cells();
    let npc = fe::p2_nodes_per_cell(d);
    let ledges = fe::local_edges(d);

    // global edge enumeration
    use std::collections::HashMap;
    let mut edge_id: HashMap<(u32, u32), u32> = HashMap::new();
    let mut edge_verts: Vec<(u32, u32)> = Vec::new();
    let mut cell_nodes = Vec::with_capacity(nc * npc);
    for c in 0..nc {
        let cell = mesh.cell(c);
        for &v in cell {
            cell_nodes.push(v);
        }
        for le in ledges {
            let (a, b) = (cell[le[0]], cell[le[1]]);
            let key = (a.min(b), a.max(b));
            let id = *edge_id.entry(key).or_insert_with(|| {
                edge_verts.push(key);
                (edge_verts.len() - 1) as u32
            });
            cell_nodes.push(nv as u32 + id);
        }
    }
    let ne = edge_verts.len();
    let n_nodes = nv + ne;

    let mut node_coords = vec![0.0; n_nodes * d];
    node_coords[..nv * d].copy_from_slice(&mesh.vertices);
    for (e, &(a, b)) in edge_verts.iter().enumerate() {
        for c in 0..d {
            node_coords[(nv + e) * d + c] =
                0.5 * (mesh.vertices[a as usize * d + c] + mesh.vertices[b as usize * d + c]);
        }
    }

    // classify nodes from tagged facets: facet vertices and facet edge nodes
    let mut node_class = vec![NodeClass::Interior; n_nodes];
    for (f, tag) in &mesh.boundary_facets {
        let class = match tag {
            BoundaryTag::Body => NodeClass::Body,
            BoundaryTag::Outer => NodeClass::Outer,
        };
        for &v in &f[..d] {
            node_class[v as usize] = class;
        }
        // facet edges: in 2D the facet IS an edge; in 3D its three edges
        let pairs: &[(usize, usize)] = if d == 2 { &[(0, 1)] } else { &[(0, 1), (1, 2), (2, 0)] };
        for &(i, j) in pairs {
            let key = (f[i].min(f[j]), f[i].max(f[j]));
            if let Some(&id) = edge_id.get(&key) {
                node_class[nv + id as usize] = class;
            }
        }
    }

    let mut node_dof = vec![-1i64; n_nodes];
    let mut next = 0i64;
    for n in 0..n_nodes {
        if node_class[n] != NodeClass::Body {
            node_dof[n] = next;
            next += 1;
        }
    }
    let n_free_nodes = next as usize;
    let n_vel = n_free_nodes * d + if pin_rigid { 0 } else { d };

    Ok(FsiSpace {
        mesh: mesh.clone(),
        dim: d,
        p_v,
        pinned: pin_rigid,
        n_nodes,
        node_coords,
        cell_nodes,
        node_class,
        node_dof,
        n_free_nodes,
        n_vel,
        n_pressure: nv,
    })
}
