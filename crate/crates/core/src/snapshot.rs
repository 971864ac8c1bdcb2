//! Binary state snapshots: fixed little-endian header (magic, version,
//! layout, time, field list) followed by row-major f64 payloads, plus a
//! plain-text sidecar mirroring the header. Files are written to a
//! temporary name and renamed into place, so an aborted run never leaves a
//! partial snapshot behind.

use crate::error::{Result, SimError};
use crate::grid::{Field, Grid, PhiBc, ScalarBc, State, VectorField};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

const MAGIC: &[u8; 8] = b"IGNSNAP1";
const VERSION: u32 = 1;

fn field_names(dim: usize) -> Vec<&'static str> {
    let mut names = vec!["rho", "theta"];
    names.extend(["u_x", "u_y", "u_z"][..dim].iter());
    names.push("Z");
    names.push("phi");
    names
}

/// Write one state; `path` should end in `.snap`. A `.snap.txt` sidecar
/// with the header in readable form is written alongside.
pub fn write_state(path: &Path, state: &State) -> Result<()> {
    let g = state.grid().clone();
    let dim = g.dim();
    let names = field_names(dim);
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for a in 0..dim {
        buf.extend_from_slice(&(g.shape()[a] as u64).to_le_bytes());
    }
    for a in 0..dim {
        buf.extend_from_slice(&g.spacing()[a].to_le_bytes());
    }
    for a in 0..dim {
        buf.extend_from_slice(&g.origin()[a].to_le_bytes());
    }
    buf.extend_from_slice(&state.time.to_le_bytes());
    buf.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for name in &names {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
    }
    let mut push_field = |f: &Field| {
        for &v in f.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    push_field(&state.rho);
    push_field(&state.theta);
    for a in 0..dim {
        push_field(state.u.comp(a));
    }
    push_field(&state.z);
    push_field(&state.phi);

    let tmp = path.with_extension("snap.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;

    let mut sidecar = String::new();
    sidecar.push_str(&format!("magic: {}\n", std::str::from_utf8(MAGIC).unwrap()));
    sidecar.push_str(&format!("version: {VERSION}\n"));
    sidecar.push_str(&format!("dim: {dim}\n"));
    sidecar.push_str(&format!("extents: {:?}\n", &g.shape()[..dim]));
    sidecar.push_str(&format!("spacing: {:?}\n", &g.spacing()[..dim]));
    sidecar.push_str(&format!("origin: {:?}\n", &g.origin()[..dim]));
    sidecar.push_str(&format!("time: {:.17e}\n", state.time));
    sidecar.push_str(&format!("fields: {}\n", names.join(", ")));
    sidecar.push_str("layout: row-major f64 little-endian per field\n");
    let side_tmp = path.with_extension("snap.txt.tmp");
    std::fs::write(&side_tmp, sidecar)?;
    std::fs::rename(&side_tmp, path.with_extension("snap.txt"))?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(SimError::InvalidInput("snapshot truncated".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Read a state back; boundary conditions are not stored in the snapshot
/// and must be supplied by the caller (they come from the run config).
pub fn read_state(path: &Path, bc_theta: ScalarBc, bc_phi: PhiBc) -> Result<State> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let mut cur = Cursor { data: &raw, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(SimError::InvalidInput("bad snapshot magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(SimError::InvalidInput(format!(
            "unsupported snapshot version {version}"
        )));
    }
    let dim = cur.u32()? as usize;
    if !(1..=3).contains(&dim) {
        return Err(SimError::InvalidInput("bad snapshot dim".into()));
    }
    let mut extents = Vec::with_capacity(dim);
    for _ in 0..dim {
        extents.push(cur.u64()? as usize);
    }
    let mut spacing = Vec::with_capacity(dim);
    for _ in 0..dim {
        spacing.push(cur.f64()?);
    }
    let mut origin = Vec::with_capacity(dim);
    for _ in 0..dim {
        origin.push(cur.f64()?);
    }
    let time = cur.f64()?;
    let nfields = cur.u32()? as usize;
    let mut names = Vec::with_capacity(nfields);
    for _ in 0..nfields {
        let len = cur.u32()? as usize;
        let bytes = cur.take(len)?;
        names.push(
            std::str::from_utf8(bytes)
                .map_err(|_| SimError::InvalidInput("bad field name".into()))?
                .to_string(),
        );
    }
    let expected = field_names(dim);
    if names != expected {
        return Err(SimError::InvalidInput(format!(
            "unexpected field list {names:?}; wanted {expected:?}"
        )));
    }
    let grid = Grid::new(dim, &extents, &spacing, &origin, bc_theta, bc_phi)?;
    let n = grid.len();
    let read_field = |cur: &mut Cursor<'_>| -> Result<Field> {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(cur.f64()?);
        }
        Field::from_vec(&grid, data)
    };
    let rho = read_field(&mut cur)?;
    let theta = read_field(&mut cur)?;
    let mut comps = Vec::with_capacity(dim);
    for _ in 0..dim {
        comps.push(read_field(&mut cur)?);
    }
    let u = VectorField::from_comps(comps)?;
    let z = read_field(&mut cur)?;
    let phi = read_field(&mut cur)?;
    Ok(State {
        time,
        rho,
        theta,
        u,
        z,
        phi,
    })
}

/// Grid reconstructed from a snapshot must match the run's grid geometry.
pub fn check_grid_matches(state: &State, grid: &Arc<Grid>) -> Result<()> {
    let a = state.grid();
    if a.dim() != grid.dim()
        || a.shape() != grid.shape()
        || a.spacing()
            .iter()
            .zip(grid.spacing().iter())
            .any(|(x, y)| (x - y).abs() > 1e-12 * y.abs().max(1.0))
        || a.origin()
            .iter()
            .zip(grid.origin().iter())
            .any(|(x, y)| (x - y).abs() > 1e-12 * y.abs().max(1.0))
    {
        return Err(SimError::Rejected(
            "snapshot grid does not match the configured grid".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_preserves_bits() {
        let g = Grid::new(
            2,
            &[9, 7],
            &[0.125, 0.2],
            &[0.0, -0.5],
            ScalarBc::DirichletZero,
            PhiBc::ZeroMeanPeriodic,
        )
        .unwrap();
        let state = State {
            time: 0.375,
            rho: Field::from_fn(&g, |x| 1.0 + x[0] * x[1]),
            theta: Field::from_fn(&g, |x| (PI * x[0]).sin() * 0.3),
            u: VectorField::from_fn(&g, |x| [x[0], -x[1], 0.0]),
            z: Field::from_fn(&g, |x| 0.5 * x[0]),
            phi: Field::from_fn(&g, |x| x[0] - x[1]),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state_000001.snap");
        write_state(&path, &state).unwrap();
        assert!(path.with_extension("snap.txt").exists());
        let back = read_state(&path, ScalarBc::DirichletZero, PhiBc::ZeroMeanPeriodic).unwrap();
        assert_eq!(back.time, state.time);
        assert_eq!(back.rho.data(), state.rho.data());
        assert_eq!(back.theta.data(), state.theta.data());
        assert_eq!(back.u.comp(1).data(), state.u.comp(1).data());
        assert_eq!(back.z.data(), state.z.data());
        assert_eq!(back.phi.data(), state.phi.data());
        check_grid_matches(&back, &g).unwrap();
    }

    #[test]
    fn rejects_corrupt_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.snap");
        std::fs::write(&path, b"NOTASNAPxxxxxxxxxxxx").unwrap();
        assert!(read_state(&path, ScalarBc::DirichletZero, PhiBc::ZeroMeanPeriodic).is_err());
    }

    #[test]
    fn no_temp_files_left_behind() {
        let g = Grid::line(5, 0.25, 0.0).unwrap();
        let state = State {
            time: 0.0,
            rho: Field::constant(&g, 1.0),
            theta: Field::zeros(&g),
            u: VectorField::zeros(&g),
            z: Field::zeros(&g),
            phi: Field::zeros(&g),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.snap");
        write_state(&path, &state).unwrap();
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.path().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
