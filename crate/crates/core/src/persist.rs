//! On-disk formats: continuation branches as a directory of binary
//! coefficient files plus a JSON manifest, and modal bases as coefficient
//! blocks with their eigenvalues. Binary blocks are little-endian f64 with a
//! short header; JSON manifests use sorted keys so reruns are byte-stable.

use crate::error::{CoreError, Result};
use crate::steady::{Branch, SteadyState};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const STATE_MAGIC: &[u8; 8] = b"FSISTATE";
const BASIS_MAGIC: &[u8; 8] = b"FSIBASIS";

fn write_f64s(w: &mut impl Write, data: &[f64]) -> std::io::Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn save_state(path: &Path, state: &SteadyState) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(STATE_MAGIC)?;
    write_u64(&mut f, state.z.len() as u64)?;
    write_u64(&mut f, state.pressure.len() as u64)?;
    write_f64s(&mut f, &[state.lambda, state.residual, state.outer_radius, state.mesh_size])?;
    write_f64s(&mut f, &state.chi0)?;
    write_f64s(&mut f, &state.traction)?;
    write_u64(&mut f, state.newton_iters as u64)?;
    write_f64s(&mut f, &state.z)?;
    write_f64s(&mut f, &state.pressure)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<SteadyState> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != STATE_MAGIC {
        return Err(CoreError::Format(format!("{}: not a state file", path.display())));
    }
    let nz = read_u64(&mut f)? as usize;
    let np = read_u64(&mut f)? as usize;
    let scalars = read_f64s(&mut f, 4)?;
    let chi0v = read_f64s(&mut f, 3)?;
    let tracv = read_f64s(&mut f, 3)?;
    let iters = read_u64(&mut f)? as usize;
    let z = read_f64s(&mut f, nz)?;
    let pressure = read_f64s(&mut f, np)?;
    Ok(SteadyState {
        lambda: scalars[0],
        z,
        pressure,
        chi0: [chi0v[0], chi0v[1], chi0v[2]],
        traction: [tracv[0], tracv[1], tracv[2]],
        residual: scalars[1],
        newton_iters: iters,
        outer_radius: scalars[2],
        mesh_size: scalars[3],
    })
}

/// Write a branch directory: `state_NNNN.bin` per state, `manifest.json`,
/// and `summary.csv`.
pub fn save_branch(dir: &Path, branch: &Branch, dim: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (k, state) in branch.states.iter().enumerate() {
        let name = format!("state_{k:04}.bin");
        save_state(&dir.join(&name), state)?;
        files.push(name);
    }
    let mut manifest: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    manifest.insert("kind".into(), "branch".into());
    manifest.insert(
        "lambdas".into(),
        serde_json::to_value(branch.lambdas()).expect("json"),
    );
    manifest.insert("files".into(), serde_json::to_value(&files).expect("json"));
    manifest.insert(
        "requested".into(),
        serde_json::to_value(&branch.requested).expect("json"),
    );
    manifest.insert(
        "bisection_trace".into(),
        serde_json::to_value(&branch.bisection_trace).expect("json"),
    );
    manifest.insert(
        "residuals".into(),
        serde_json::to_value(branch.states.iter().map(|s| s.residual).collect::<Vec<_>>())
            .expect("json"),
    );
    manifest.insert(
        "newton_iters".into(),
        serde_json::to_value(branch.states.iter().map(|s| s.newton_iters).collect::<Vec<_>>())
            .expect("json"),
    );
    manifest.insert(
        "chi0".into(),
        serde_json::to_value(branch.states.iter().map(|s| s.chi0.to_vec()).collect::<Vec<_>>())
            .expect("json"),
    );
    manifest.insert(
        "drag".into(),
        serde_json::to_value(branch.states.iter().map(|s| s.drag()).collect::<Vec<_>>())
            .expect("json"),
    );
    manifest.insert(
        "outer_radius".into(),
        serde_json::to_value(branch.states.first().map(|s| s.outer_radius)).expect("json"),
    );
    manifest.insert(
        "mesh_size".into(),
        serde_json::to_value(branch.states.first().map(|s| s.mesh_size)).expect("json"),
    );
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("json"),
    )?;
    std::fs::write(dir.join("summary.csv"), crate::steady::branch_csv(branch, dim))?;
    Ok(())
}

pub fn load_branch(dir: &Path) -> Result<Branch> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| CoreError::Format(e.to_string()))?;
    let files: Vec<String> = serde_json::from_value(
        manifest
            .get("files")
            .cloned()
            .ok_or_else(|| CoreError::Format("manifest missing 'files'".into()))?,
    )
    .map_err(|e| CoreError::Format(e.to_string()))?;
    let requested: Vec<bool> = manifest
        .get("requested")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| CoreError::Format(e.to_string()))?
        .unwrap_or_else(|| vec![true; files.len()]);
    let bisection_trace: Vec<f64> = manifest
        .get("bisection_trace")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| CoreError::Format(e.to_string()))?
        .unwrap_or_default();
    let mut states = Vec::with_capacity(files.len());
    for f in &files {
        states.push(load_state(&dir.join(f))?);
    }
    Ok(Branch { states, requested, bisection_trace })
}

/// Modal basis block file plus manifest fields inline.
pub fn save_basis(path: &Path, basis: &crate::modal::ModalBasis) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(BASIS_MAGIC)?;
    write_u64(&mut f, basis.count as u64)?;
    write_u64(&mut f, basis.modes.first().map_or(0, |m| m.len()) as u64)?;
    write_u64(&mut f, basis.pressures.first().map_or(0, |p| p.len()) as u64)?;
    write_u64(&mut f, u64::from(basis.cluster_warning))?;
    write_f64s(&mut f, &[basis.gram_residual])?;
    write_f64s(&mut f, &basis.eigenvalues)?;
    write_f64s(&mut f, &basis.rigid_coupling_residuals)?;
    for m in &basis.modes {
        write_f64s(&mut f, m)?;
    }
    for p in &basis.pressures {
        write_f64s(&mut f, p)?;
    }
    Ok(())
}

pub fn load_basis(path: &Path) -> Result<crate::modal::ModalBasis> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != BASIS_MAGIC {
        return Err(CoreError::Format(format!("{}: not a basis file", path.display())));
    }
    let count = read_u64(&mut f)? as usize;
    let nvel = read_u64(&mut f)? as usize;
    let npre = read_u64(&mut f)? as usize;
    let cluster_warning = read_u64(&mut f)? != 0;
    let gram_residual = read_f64s(&mut f, 1)?[0];
    let eigenvalues = read_f64s(&mut f, count)?;
    let rigid_coupling_residuals = read_f64s(&mut f, count)?;
    let mut modes = Vec::with_capacity(count);
    for _ in 0..count {
        modes.push(read_f64s(&mut f, nvel)?);
    }
    let mut pressures = Vec::with_capacity(count);
    for _ in 0..count {
        pressures.push(read_f64s(&mut f, npre)?);
    }
    Ok(crate::modal::ModalBasis {
        count,
        eigenvalues,
        modes,
        pressures,
        gram_residual,
        cluster_warning,
        rigid_coupling_residuals,
        eig_route: crate::linalg::Route::Dense,
    })
}

/// Coordinate text export (row col value per line) for offline inspection.
pub fn matrix_to_coordinate_text(m: &crate::linalg::CooMat) -> String {
    let mut s = format!("% {} {}\n", m.nrows, m.ncols);
    let mut entries: Vec<(u32, u32, f64)> = m.entries().to_vec();
    entries.sort_by_key(|&(r, c, _)| (r, c));
    // merge duplicates for a clean export
    let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
    for (r, c, v) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => merged.push((r, c, v)),
        }
    }
    for (r, c, v) in merged {
        s.push_str(&format!("{r} {c} {v:.16e}\n"));
    }
    s
}
