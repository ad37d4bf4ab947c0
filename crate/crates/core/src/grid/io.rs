//! Snapshot files.
//!
//! Binary layout (`GWF1`), all little endian:
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 4    | magic `b"GWF1"`                  |
//! | 4      | 4    | reserved, zero                   |
//! | 8      | 8    | n as f64                         |
//! | 16     | 8    | half-length l as f64             |
//! | 24     | 8    | time t as f64                    |
//! | 32     | 16·n | interleaved (Re ψ_j, Im ψ_j) f64 |
//!
//! The CSV variant has the header `x,re,im,abs2`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{GridWavefunction, UniformGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GWF1";
pub const HEADER_LEN: usize = 32;

pub fn encode_gwf(psi: &GridWavefunction, t: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * psi.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[0u8; 4]);
    out.extend_from_slice(&(psi.grid.len() as f64).to_le_bytes());
    out.extend_from_slice(&psi.grid.half_length().to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    for v in &psi.values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format {
        kind: "GWF1",
        msg: msg.into(),
    }
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&bytes[offset..offset + 8]);
    f64::from_le_bytes(b)
}

/// Returns the wave function and its time label.
pub fn decode_gwf(bytes: &[u8]) -> Result<(GridWavefunction, f64)> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing GWF1 header"));
    }
    let n_f = f64_at(bytes, 8);
    if !(n_f >= 2.0) || n_f.fract() != 0.0 || n_f > (1u64 << 40) as f64 {
        return Err(bad(format!("invalid point count {n_f}")));
    }
    let n = n_f as usize;
    let grid = UniformGrid::new(f64_at(bytes, 16), n).map_err(|e| bad(e.to_string()))?;
    let t = f64_at(bytes, 24);
    if bytes.len() != HEADER_LEN + 16 * n {
        return Err(bad(format!(
            "expected {} bytes, found {}",
            HEADER_LEN + 16 * n,
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| Complex64::new(f64_at(c, 0), f64_at(c, 8)))
        .collect();
    Ok((GridWavefunction { grid, values }, t))
}

pub fn write_gwf(path: &Path, psi: &GridWavefunction, t: f64) -> Result<()> {
    std::fs::write(path, encode_gwf(psi, t))?;
    Ok(())
}

pub fn read_gwf(path: &Path) -> Result<(GridWavefunction, f64)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_gwf(&bytes)
}

pub fn write_csv(path: &Path, psi: &GridWavefunction) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,re,im,abs2")?;
    for (j, v) in psi.values.iter().enumerate() {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e}",
            psi.grid.point(j),
            v.re,
            v.im,
            v.norm_sqr()
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let grid = UniformGrid::new(3.0, 4).unwrap();
        let psi = GridWavefunction::from_fn(grid, |x| Complex64::new(x, -x));
        let bytes = encode_gwf(&psi, 1.5);
        assert_eq!(bytes.len(), 32 + 64);
        assert_eq!(&bytes[..4], b"GWF1");
        assert_eq!(f64_at(&bytes, 8), 4.0);
        assert_eq!(f64_at(&bytes, 16), 3.0);
        assert_eq!(f64_at(&bytes, 24), 1.5);
        assert_eq!(f64_at(&bytes, 32), -3.0);
        assert_eq!(f64_at(&bytes, 40), 3.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_gwf(b"nope").is_err());
        let grid = UniformGrid::new(3.0, 4).unwrap();
        let mut bytes = encode_gwf(&GridWavefunction::zeros(grid), 0.0);
        bytes.pop();
        assert!(decode_gwf(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip(vals in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 8), t in -1e3f64..1e3) {
            let grid = UniformGrid::new(2.5, 8).unwrap();
            let psi = GridWavefunction::new(grid, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap();
            let (back, t2) = decode_gwf(&encode_gwf(&psi, t)).unwrap();
            prop_assert_eq!(back, psi);
            prop_assert_eq!(t2, t);
        }
    }
}
