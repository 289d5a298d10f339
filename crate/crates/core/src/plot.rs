//! PNG heat maps of field slices and CSV cross-sections.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::fields::ScalarField;

/// Blue (negative) through white to red (positive), `s ∈ [-1, 1]`.
fn diverging(s: f64) -> Rgb<u8> {
    let s = s.clamp(-1.0, 1.0);
    let fade = |a: f64| (255.0 * (1.0 - a)).round() as u8;
    if s >= 0.0 {
        Rgb([255, fade(s), fade(s)])
    } else {
        Rgb([fade(-s), fade(-s), 255])
    }
}

/// Writes `f` as a heat map symmetric about zero, `y` pointing up, each node
/// drawn as a `px × px` block.
pub fn write_png(path: &Path, f: &ScalarField, px: u32) -> Result<()> {
    let l = f.lattice;
    let px = px.max(1);
    let scale = f.max_abs();
    let (w, h) = (l.nx as u32 * px, l.ny as u32 * px);
    let img = ImageBuffer::from_fn(w, h, |x, y| {
        let i = (x / px) as usize;
        let j = l.ny - 1 - (y / px) as usize;
        let v = f.at(i, j);
        if !v.is_finite() {
            Rgb([0, 0, 0])
        } else if scale > 0.0 {
            diverging(v / scale)
        } else {
            diverging(0.0)
        }
    });
    img.save(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// `axis,coord,value` rows along the middle row (`axis = x`) and the middle
/// column (`axis = y`).
pub fn cross_sections_csv(f: &ScalarField) -> String {
    let l = f.lattice;
    let (jm, im) = (l.ny / 2, l.nx / 2);
    let mut s = String::from("axis,coord,value\n");
    for i in 0..l.nx {
        let _ = writeln!(s, "x,{:.10e},{:.10e}", l.node(i, jm)[0], f.at(i, jm));
    }
    for j in 0..l.ny {
        let _ = writeln!(s, "y,{:.10e},{:.10e}", l.node(im, j)[1], f.at(im, j));
    }
    s
}

/// `<stem>.png` and `<stem>.csv` in `dir`.
pub fn emit(dir: &Path, stem: &str, f: &ScalarField) -> Result<()> {
    fs::create_dir_all(dir)?;
    let px = (512 / f.lattice.nx.max(1)).clamp(1, 16) as u32;
    write_png(&dir.join(format!("{stem}.png")), f, px)?;
    fs::write(dir.join(format!("{stem}.csv")), cross_sections_csv(f))?;
    Ok(())
}
