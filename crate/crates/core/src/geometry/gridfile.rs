//! Legacy unstructured-grid text I/O (ASCII, POINTS / CELLS / CELL_TYPES
//! sections plus a boundary-tag cell field), so third-party meshes can be
//! injected and fields inspected with standard viewers.

use super::{BoundaryTag, Mesh};
use crate::error::{CoreError, Result};
use std::fmt::Write as _;
use std::path::Path;

const TAG_VOLUME: i32 = 0;
const TAG_BODY: i32 = 1;
const TAG_OUTER: i32 = 2;

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    write_mesh_with_fields(mesh, path, &[])
}

/// Write the mesh plus optional vertex vector fields (name, flat nv*dim data).
pub fn write_mesh_with_fields(mesh: &Mesh, path: &Path, fields: &[(&str, &[f64])]) -> Result<()> {
    let d = mesh.dim;
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(
        s,
        "fsilab annulus dim={} R={:.17e} h={:.17e}",
        d, mesh.outer_radius, mesh.mesh_size
    );
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let nv = mesh.n_vertices();
    let _ = writeln!(s, "POINTS {nv} double");
    for i in 0..nv {
        let p = mesh.vertex(i);
        let z = if d == 3 { p[2] } else { 0.0 };
        let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", p[0], p[1], z);
    }
    let nc = mesh.n_cells();
    let nb = mesh.boundary_facets.len();
    let cell_ints = nc * (d + 2) + nb * (d + 1);
    let _ = writeln!(s, "CELLS {} {}", nc + nb, cell_ints);
    for c in 0..nc {
        let cell = mesh.cell(c);
        let _ = write!(s, "{}", d + 1);
        for &v in cell {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    for (f, _) in &mesh.boundary_facets {
        let _ = write!(s, "{}", d);
        for &v in &f[..d] {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {}", nc + nb);
    let vol_type = if d == 2 { 5 } else { 10 };
    let facet_type = if d == 2 { 3 } else { 5 };
    for _ in 0..nc {
        let _ = writeln!(s, "{vol_type}");
    }
    for _ in 0..nb {
        let _ = writeln!(s, "{facet_type}");
    }
    let _ = writeln!(s, "CELL_DATA {}", nc + nb);
    s.push_str("SCALARS boundary_tag int 1\nLOOKUP_TABLE default\n");
    for _ in 0..nc {
        let _ = writeln!(s, "{TAG_VOLUME}");
    }
    for (_, tag) in &mesh.boundary_facets {
        let t = match tag {
            BoundaryTag::Body => TAG_BODY,
            BoundaryTag::Outer => TAG_OUTER,
        };
        let _ = writeln!(s, "{t}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
        for (name, data) in fields {
            let _ = writeln!(s, "VECTORS {name} double");
            for i in 0..nv {
                let x = data[i * d];
                let y = data[i * d + 1];
                let z = if d == 3 { data[i * d + 2] } else { 0.0 };
                let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", x, y, z);
            }
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = Tokens::new(&text);

    // header: two comment-ish lines, the second may carry our metadata
    let mut outer_radius = None;
    let mut mesh_size = None;
    for line in text.lines().take(5) {
        for w in line.split_whitespace() {
            if let Some(v) = w.strip_prefix("R=") {
                outer_radius = v.parse::<f64>().ok();
            }
            if let Some(v) = w.strip_prefix("h=") {
                mesh_size = v.parse::<f64>().ok();
            }
        }
    }

    tokens.seek_word("POINTS")?;
    let nv: usize = tokens.next_parse()?;
    let _dtype = tokens.next()?;
    let mut pts3 = Vec::with_capacity(nv * 3);
    for _ in 0..nv * 3 {
        pts3.push(tokens.next_parse::<f64>()?);
    }
    let dim = if pts3.chunks(3).all(|p| p[2] == 0.0) { 2 } else { 3 };

    tokens.seek_word("CELLS")?;
    let n_entries: usize = tokens.next_parse()?;
    let _total: usize = tokens.next_parse()?;
    let mut raw_cells: Vec<Vec<u32>> = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let n: usize = tokens.next_parse()?;
        let mut c = Vec::with_capacity(n);
        for _ in 0..n {
            c.push(tokens.next_parse::<u32>()?);
        }
        raw_cells.push(c);
    }

    tokens.seek_word("CELL_TYPES")?;
    let n_types: usize = tokens.next_parse()?;
    if n_types != n_entries {
        return Err(CoreError::Format("CELL_TYPES count mismatch".into()));
    }
    let mut types = Vec::with_capacity(n_types);
    for _ in 0..n_types {
        types.push(tokens.next_parse::<i32>()?);
    }

    tokens.seek_word("CELL_DATA")?;
    tokens.seek_word("boundary_tag")?;
    tokens.seek_word("LOOKUP_TABLE")?;
    let _ = tokens.next()?; // table name
    let mut tags = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        tags.push(tokens.next_parse::<i32>()?);
    }

    let vol_type = if dim == 2 { 5 } else { 10 };
    let mut vertices = Vec::with_capacity(nv * dim);
    for p in pts3.chunks(3) {
        vertices.extend_from_slice(&p[..dim]);
    }
    let mut cells = Vec::new();
    let mut boundary_facets = Vec::new();
    for ((c, &t), &tag) in raw_cells.iter().zip(&types).zip(&tags) {
        if t == vol_type && tag == TAG_VOLUME {
            if c.len() != dim + 1 {
                return Err(CoreError::Format("volume cell arity mismatch".into()));
            }
            cells.extend_from_slice(c);
        } else {
            if c.len() != dim {
                return Err(CoreError::Format("facet arity mismatch".into()));
            }
            let mut f = [0u32; 3];
            f[..dim].copy_from_slice(c);
            let tag = match tag {
                TAG_BODY => BoundaryTag::Body,
                TAG_OUTER => BoundaryTag::Outer,
                other => return Err(CoreError::Format(format!("unknown boundary tag {other}"))),
            };
            boundary_facets.push((f, tag));
        }
    }

    let outer_radius = outer_radius.unwrap_or_else(|| {
        (0..nv)
            .map(|i| {
                vertices[i * dim..(i + 1) * dim]
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    });
    let mesh_size = mesh_size.unwrap_or_else(|| {
        // smallest facet measure is a serviceable stand-in
        let m = Mesh {
            dim,
            vertices: vertices.clone(),
            cells: cells.clone(),
            boundary_facets: boundary_facets.clone(),
            outer_radius,
            mesh_size: 1.0,
        };
        m.boundary_facets
            .iter()
            .map(|(f, _)| m.facet_measure(f))
            .fold(f64::INFINITY, f64::min)
    });

    let mesh = Mesh { dim, vertices, cells, boundary_facets, outer_radius, mesh_size };
    mesh.validate(None)?;
    Ok(mesh)
}

struct Tokens<'a> {
    words: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens { words: text.split_whitespace() }
    }

    fn next(&mut self) -> Result<&'a str> {
        self.words
            .next()
            .ok_or_else(|| CoreError::Format("unexpected end of grid file".into()))
    }

    fn next_parse<T: std::str::FromStr>(&mut self) -> Result<T> {
        let w = self.next()?;
        w.parse::<T>()
            .map_err(|_| CoreError::Format(format!("cannot parse token '{w}'")))
    }

    fn seek_word(&mut self, word: &str) -> Result<()> {
        loop {
            let w = self.next().map_err(|_| {
                CoreError::Format(format!("section '{word}' not found in grid file"))
            })?;
            if w == word {
                return Ok(());
            }
        }
    }
}
