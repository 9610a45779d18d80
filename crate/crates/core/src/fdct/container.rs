//! Binary dump of a [`CoefficientPyramid`].
//!
//! Layout, all integers `u32` little-endian:
//!
//! ```text
//! "CVPY"  version(=1)  n_scales
//! for each scale:  n_panels
//!   for each panel:  rows  cols  then rows*cols (re, im) f64 LE pairs, row-major
//! ```

use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex64;

use super::{CoefficientPyramid, FdctError};

const MAGIC: &[u8; 4] = b"CVPY";
const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> FdctError {
    FdctError::Container(e.to_string())
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<(), FdctError> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

fn get_u32(r: &mut impl Read) -> Result<u32, FdctError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64, FdctError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_pyramid(w: &mut impl Write, pyr: &CoefficientPyramid) -> Result<(), FdctError> {
    w.write_all(MAGIC).map_err(io_err)?;
    put_u32(w, VERSION)?;
    put_u32(w, pyr.scales.len() as u32)?;
    for scale in &pyr.scales {
        put_u32(w, scale.len() as u32)?;
        for panel in scale {
            let (rows, cols) = panel.dim();
            put_u32(w, rows as u32)?;
            put_u32(w, cols as u32)?;
            for c in panel.iter() {
                w.write_all(&c.re.to_le_bytes()).map_err(io_err)?;
                w.write_all(&c.im.to_le_bytes()).map_err(io_err)?;
            }
        }
    }
    Ok(())
}

pub fn read_pyramid(r: &mut impl Read) -> Result<CoefficientPyramid, FdctError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(FdctError::Container("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(FdctError::Container(format!(
            "unsupported version {version}"
        )));
    }
    let n_scales = get_u32(r)? as usize;
    let mut scales = Vec::with_capacity(n_scales);
    for _ in 0..n_scales {
        let n_panels = get_u32(r)? as usize;
        let mut panels = Vec::with_capacity(n_panels);
        for _ in 0..n_panels {
            let rows = get_u32(r)? as usize;
            let cols = get_u32(r)? as usize;
            let mut buf = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let re = get_f64(r)?;
                let im = get_f64(r)?;
                buf.push(Complex64::new(re, im));
            }
            panels.push(
                Array2::from_shape_vec((rows, cols), buf)
                    .map_err(|e| FdctError::Container(e.to_string()))?,
            );
        }
        scales.push(panels);
    }
    Ok(CoefficientPyramid { scales })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let pyr = CoefficientPyramid {
            scales: vec![
                vec![Array2::from_shape_fn((2, 3), |(r, c)| {
                    Complex64::new(r as f64 - 0.5, c as f64 * 1e-300)
                })],
                vec![
                    Array2::from_elem((1, 1), Complex64::new(f64::MIN_POSITIVE, -3.0)),
                    Array2::zeros((4, 2)),
                ],
            ],
        };
        let mut bytes = Vec::new();
        write_pyramid(&mut bytes, &pyr).unwrap();
        assert_eq!(&bytes[..4], b"CVPY");
        assert_eq!(read_pyramid(&mut bytes.as_slice()).unwrap(), pyr);
    }

    #[test]
    fn truncated_and_foreign_input_rejected() {
        assert!(read_pyramid(&mut &b"XXXX\x01\0\0\0"[..]).is_err());
        let pyr = CoefficientPyramid {
            scales: vec![vec![Array2::zeros((2, 2))]],
        };
        let mut bytes = Vec::new();
        write_pyramid(&mut bytes, &pyr).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_pyramid(&mut bytes.as_slice()).is_err());
    }
}
