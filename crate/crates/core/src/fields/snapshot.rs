//! Plain-text field snapshots.
//!
//! Line 1 holds `nx ny hx hy x0 y0` (node counts, spacings, lower-left node);
//! then `ny` rows of `nx` values, row `j = 0` first, each value printed with
//! 17 significant digits so that reading restores the exact bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Lattice, ScalarField};
use crate::error::{Error, Result};

pub type Snapshot = ScalarField;

pub fn write_snapshot(path: &Path, f: &ScalarField) -> Result<()> {
    let l = &f.lattice;
    let mut s = String::with_capacity(l.len() * 25 + 128);
    writeln!(s, "{} {} {:.16e} {:.16e} {:.16e} {:.16e}", l.nx, l.ny, l.hx, l.hy, l.x0, l.y0).unwrap();
    for j in 0..l.ny {
        for i in 0..l.nx {
            if i > 0 {
                s.push(' ');
            }
            write!(s, "{:.16e}", f.at(i, j)).unwrap();
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| err("empty file".into()))?.split_whitespace().collect();
    if header.len() != 6 {
        return Err(err(format!("header has {} fields, expected 6", header.len())));
    }
    let nx: usize = header[0].parse().map_err(|_| err("bad nx".into()))?;
    let ny: usize = header[1].parse().map_err(|_| err("bad ny".into()))?;
    let mut g = [0.0; 4];
    for (k, v) in g.iter_mut().enumerate() {
        *v = header[2 + k].parse().map_err(|_| err(format!("bad header value {}", header[2 + k])))?;
    }
    let lattice = Lattice {
        nx,
        ny,
        hx: g[0],
        hy: g[1],
        x0: g[2],
        y0: g[3],
    };
    let mut data = Vec::with_capacity(nx * ny);
    for (j, line) in lines.by_ref().take(ny).enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| err(format!("row {j}: bad value {tok:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("row {j}: non-finite value")));
            }
            data.push(v);
        }
        if data.len() - before != nx {
            return Err(err(format!("row {j} has {} values, expected {nx}", data.len() - before)));
        }
    }
    if data.len() != nx * ny {
        return Err(err(format!("expected {ny} rows")));
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(err("trailing content".into()));
    }
    Ok(ScalarField { lattice, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let l = Lattice {
            nx: 7,
            ny: 4,
            hx: 1.0 / 3.0,
            hy: 0.1,
            x0: -1.0 / 7.0,
            y0: 0.0,
        };
        let f = ScalarField::from_fn(l, |p| (p[0] * 1e3).sin() / 7.0 + p[1].exp() * 1e-300);
        let path = dir.path().join("f.txt");
        write_snapshot(&path, &f).unwrap();
        let g = read_snapshot(&path).unwrap();
        assert_eq!(g.lattice, f.lattice);
        assert!(f.data.iter().zip(&g.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        fs::write(&path, "3 2 0.5 0.5 0 0\n1 2 3\n1 2\n").unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::Format { .. })));
    }
}
