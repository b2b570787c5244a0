//! Binary field and trajectory dumps.
//!
//! Every `.bin` file is a flat array of little-endian `f64`, row-major over
//! the grid. A JSON sidecar with the same stem describes the layout. Spinor
//! dumps hold the `+` component then the `−` component, each as interleaved
//! `(re, im)` pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{structural, Result};
use crate::grid::{Grid, SpinorField, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub kind: String,
    pub dim: usize,
    pub points: Vec<usize>,
    pub extents: Vec<f64>,
    pub component_order: Vec<String>,
    pub layout: String,
    pub dtype: String,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub n: usize,
    pub dim: usize,
    pub dt: f64,
    pub seed: u64,
    pub stride: usize,
    pub frames: usize,
    pub layout: String,
    pub dtype: String,
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

fn write_f64s(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(structural(format!("{} is not a whole number of f64 values", path.display())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_spinor_dump(bin: &Path, psi: &SpinorField, time: f64) -> Result<()> {
    let grid = psi.grid();
    write_f64s(bin, psi.data().iter().flat_map(|z| [z.re, z.im]))?;
    let side = FieldSidecar {
        kind: "spinor".into(),
        dim: grid.dim(),
        points: grid.points_vec(),
        extents: grid.extents_vec(),
        component_order: vec!["+".into(), "-".into()],
        layout: "row-major, component blocks, re/im interleaved".into(),
        dtype: "f64le".into(),
        time,
    };
    write_json(&sidecar_path(bin), &side)
}

pub fn read_spinor_dump(bin: &Path) -> Result<(SpinorField, FieldSidecar)> {
    let side: FieldSidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path(bin))?))?;
    let grid = Grid::new(&side.points, &side.extents)?;
    let raw = read_f64s(bin)?;
    if raw.len() != 4 * grid.len() {
        return Err(structural("spinor dump length does not match its sidecar"));
    }
    let data = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
    Ok((SpinorField::new(grid, data)?, side))
}

pub fn write_scalar_dump(bin: &Path, grid: &Grid, values: &[f64], time: f64) -> Result<()> {
    grid.check_len(values.len(), "scalar dump")?;
    write_f64s(bin, values.iter().copied())?;
    let side = FieldSidecar {
        kind: "scalar".into(),
        dim: grid.dim(),
        points: grid.points_vec(),
        extents: grid.extents_vec(),
        component_order: vec![],
        layout: "row-major".into(),
        dtype: "f64le".into(),
        time,
    };
    write_json(&sidecar_path(bin), &side)
}

pub fn read_scalar_dump(bin: &Path) -> Result<(Vec<f64>, FieldSidecar)> {
    let side: FieldSidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path(bin))?))?;
    let values = read_f64s(bin)?;
    let expected: usize = side.points.iter().product();
    if values.len() != expected {
        return Err(structural("scalar dump length does not match its sidecar"));
    }
    Ok((values, side))
}

/// Appends walker positions frame by frame; `finish` writes the sidecar.
pub struct TrajectoryWriter {
    bin: PathBuf,
    out: BufWriter<File>,
    side: TrajectorySidecar,
}

impl TrajectoryWriter {
    pub fn create(bin: &Path, n: usize, dim: usize, dt: f64, seed: u64, stride: usize) -> Result<Self> {
        Ok(Self {
            bin: bin.to_path_buf(),
            out: BufWriter::new(File::create(bin)?),
            side: TrajectorySidecar {
                n,
                dim,
                dt,
                seed,
                stride,
                frames: 0,
                layout: "frame-major, walker-major, axis fastest".into(),
                dtype: "f64le".into(),
            },
        })
    }

    pub fn push(&mut self, positions: &[f64]) -> Result<()> {
        if positions.len() != self.side.n * self.side.dim {
            return Err(structural("trajectory frame has the wrong length"));
        }
        for v in positions {
            self.out.write_all(&v.to_le_bytes())?;
        }
        self.side.frames += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<TrajectorySidecar> {
        self.out.flush()?;
        write_json(&sidecar_path(&self.bin), &self.side)?;
        Ok(self.side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spinor_dump_layout() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(&[2, 3], &[1.0, 1.5]).unwrap();
        let psi = SpinorField::from_fn(g.clone(), |x| {
            [C64::new(x[0], x[1]), C64::new(10.0 + x[0], -x[1])]
        });
        let path = dir.path().join("psi.bin");
        write_spinor_dump(&path, &psi, 0.25).unwrap();

        let raw = read_f64s(&path).unwrap();
        assert_eq!(raw.len(), 4 * g.len());
        // first entry is re ψ₊ at node 0, second its imaginary part
        assert_eq!(raw[0], psi.up()[0].re);
        assert_eq!(raw[1], psi.up()[0].im);
        // the − block starts after 2·n values
        assert_eq!(raw[2 * g.len()], psi.down()[0].re);

        let (back, side) = read_spinor_dump(&path).unwrap();
        assert_eq!(back, psi);
        assert_eq!(side.points, vec![2, 3]);
        assert_eq!(side.time, 0.25);
    }

    #[test]
    fn scalar_and_trajectory_dumps() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::line(4, 1.0).unwrap();
        let path = dir.path().join("rho.bin");
        write_scalar_dump(&path, &g, &[1.0, 2.0, 3.0, 4.0], 1.0).unwrap();
        let (v, _) = read_scalar_dump(&path).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0]);

        let tpath = dir.path().join("traj.bin");
        let mut w = TrajectoryWriter::create(&tpath, 2, 1, 0.1, 7, 5).unwrap();
        w.push(&[0.0, 1.0]).unwrap();
        w.push(&[0.5, 1.5]).unwrap();
        assert!(w.push(&[0.0]).is_err());
        let side = w.finish().unwrap();
        assert_eq!(side.frames, 2);
        assert_eq!(read_f64s(&tpath).unwrap().len(), 4);
    }
}
