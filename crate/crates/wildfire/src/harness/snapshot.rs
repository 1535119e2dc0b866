//! Binary state snapshots with bit-exact round trips, plus a CSV export
//! for plotting.
//!
//! Layout: 8-byte magic, then dims/nx/ny as u64, dx and time as f64, then
//! the T and S fields row-major as f64 — all little-endian.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{FireState, Grid};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"WFSNAP01";

const HEADER_LEN: usize = 8 + 3 * 8 + 2 * 8;

pub fn write_snapshot(state: &FireState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    let grid = state.grid();
    for v in [grid.dims() as u64, grid.nx() as u64, grid.ny() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&grid.dx().to_le_bytes())?;
    w.write_all(&state.time().to_le_bytes())?;
    for x in state.temp().iter().chain(state.fuel()) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<FireState> {
    let data = std::fs::read(path)?;
    if data.len() < HEADER_LEN {
        return Err(Error::SnapshotCorrupt(format!(
            "{}: truncated header ({} bytes)",
            path.display(),
            data.len()
        )));
    }
    if &data[..8] != SNAPSHOT_MAGIC {
        return Err(Error::SnapshotCorrupt(format!(
            "{}: bad magic number",
            path.display()
        )));
    }
    let u64_at = |off: usize| u64::from_le_bytes(data[off..off + 8].try_into().unwrap());
    let f64_at = |off: usize| f64::from_le_bytes(data[off..off + 8].try_into().unwrap());
    let dims = u64_at(8);
    let nx = u64_at(16) as usize;
    let ny = u64_at(24) as usize;
    let dx = f64_at(32);
    let time = f64_at(40);

    if nx.saturating_mul(ny) > (1 << 30) {
        return Err(Error::SnapshotCorrupt(format!(
            "{}: implausible grid {nx}x{ny}",
            path.display()
        )));
    }
    let grid = match dims {
        1 if ny == 1 => Grid::new_1d(nx, dx),
        2 => Grid::new_2d(nx, ny, dx),
        _ => Err(Error::InvalidArgument(format!("dims = {dims}"))),
    }
    .map_err(|e| Error::SnapshotCorrupt(format!("{}: {e}", path.display())))?;

    let cells = grid.cells();
    let expected = HEADER_LEN + 16 * cells;
    if data.len() != expected {
        return Err(Error::SnapshotCorrupt(format!(
            "{}: expected {expected} bytes for a {nx}x{ny} grid, found {}",
            path.display(),
            data.len()
        )));
    }
    let read_block = |start: usize| -> Vec<f64> {
        (0..cells).map(|i| f64_at(start + 8 * i)).collect()
    };
    let temp = read_block(HEADER_LEN);
    let fuel = read_block(HEADER_LEN + 8 * cells);
    FireState::new(grid, temp, fuel, time)
}

/// Pointwise CSV export: `x,y,temperature,fuel`.
pub fn write_state_csv(state: &FireState, out: &mut impl Write) -> Result<()> {
    writeln!(out, "x,y,temperature,fuel")?;
    let grid = state.grid();
    for iy in 0..grid.ny() {
        for ix in 0..grid.nx() {
            let c = grid.index(ix, iy);
            writeln!(
                out,
                "{},{},{:.12e},{:.12e}",
                ix as f64 * grid.dx(),
                iy as f64 * grid.dx(),
                state.temp()[c],
                state.fuel()[c]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let grid = Grid::new_2d(7, 5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let temp: Vec<f64> = (0..35).map(|_| rng.random_range(250.0..1500.0)).collect();
        let fuel: Vec<f64> = (0..35).map(|_| rng.random_range(0.0..1.0)).collect();
        let state = FireState::new(grid, temp, fuel, 123.456).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.snap");
        write_snapshot(&state, &path).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back, state);
    }

    #[test]
    fn header_declares_grid() {
        let grid = Grid::new_2d(250, 250, 2.0).unwrap();
        let state = FireState::uniform(grid, 300.0, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.snap");
        write_snapshot(&state, &path).unwrap();
        let data = std::fs::read(&path).unwrap();
        assert_eq!(&data[..8], SNAPSHOT_MAGIC);
        assert_eq!(u64::from_le_bytes(data[16..24].try_into().unwrap()), 250);
        assert_eq!(u64::from_le_bytes(data[24..32].try_into().unwrap()), 250);
        assert_eq!(f64::from_le_bytes(data[32..40].try_into().unwrap()), 2.0);
    }

    #[test]
    fn truncation_and_bad_magic_are_corruption_errors() {
        let grid = Grid::new_1d(5, 1.0).unwrap();
        let state = FireState::uniform(grid, 300.0, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.snap");
        write_snapshot(&state, &path).unwrap();

        let data = std::fs::read(&path).unwrap();
        std::fs::write(&path, &data[..data.len() - 9]).unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::SnapshotCorrupt(_))));

        let mut bad = data.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::SnapshotCorrupt(_))));

        // trailing garbage is corruption too
        let mut long = data;
        long.push(0);
        std::fs::write(&path, &long).unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::SnapshotCorrupt(_))));
    }
}
