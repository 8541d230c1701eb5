//! Inspection exports: matrices as CSV text or 8-bit grayscale PGM.

use std::io::Write as _;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows {
        for c in 0..m.cols {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.9e}", m.get(r, c)));
        }
        out.push('\n');
    }
    out
}

/// Binary PGM (P5), min..max scaled to 0..255. Row 0 is rendered at the top.
pub fn matrix_to_pgm(m: &Matrix) -> Vec<u8> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &m.data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", m.cols, m.rows).into_bytes();
    for r in 0..m.rows {
        for c in 0..m.cols {
            let g = ((m.get(r, c) - lo) / span * 255.0).round().clamp(0.0, 255.0);
            out.push(g as u8);
        }
    }
    out
}

pub fn write_csv(path: &Path, m: &Matrix) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: &Path, m: &Matrix) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&matrix_to_pgm(m)).map_err(|e| Error::io(path, e))
}
