//! `OTMLP1` model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      6 bytes  "OTMLP1"
//! layers     u32      number of weight layers L
//! sizes      u32 × (L + 1)
//! per layer  f32 × (out × in) weights, row-major, then f32 × out biases
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::mlp::{Layer, Mlp};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"OTMLP1";
const MAX_LAYERS: u32 = 64;
const MAX_WIDTH: u32 = 1 << 24;

pub fn encode(model: &Mlp) -> Result<Vec<u8>> {
    model.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for s in model.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for layer in &model.layers {
        for r in 0..layer.outputs() {
            for c in 0..layer.inputs() {
                out.extend_from_slice(&(layer.weights[(r, c)] as f32).to_le_bytes());
            }
        }
        for b in layer.bias.iter() {
            out.extend_from_slice(&(*b as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(mut bytes: &[u8]) -> Result<Mlp> {
    let bad = |m: &str| Error::Input(format!("model file: {m}"));
    let mut magic = [0u8; 6];
    bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let read_u32 = |b: &mut &[u8]| -> Result<u32> {
        let mut w = [0u8; 4];
        b.read_exact(&mut w).map_err(|_| bad("truncated header"))?;
        Ok(u32::from_le_bytes(w))
    };
    let n = read_u32(&mut bytes)?;
    if n == 0 || n > MAX_LAYERS {
        return Err(bad("implausible layer count"));
    }
    let sizes = (0..=n).map(|_| read_u32(&mut bytes)).collect::<Result<Vec<u32>>>()?;
    if sizes.iter().any(|&s| s == 0 || s > MAX_WIDTH) {
        return Err(bad("implausible layer size"));
    }
    let expected: usize = sizes.windows(2).map(|w| (w[0] as usize + 1) * w[1] as usize * 4).sum();
    if bytes.len() != expected {
        return Err(bad(&format!(
            "expected {expected} parameter bytes, found {}",
            bytes.len()
        )));
    }
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let layers = sizes
        .windows(2)
        .map(|w| {
            let (inp, out) = (w[0] as usize, w[1] as usize);
            let weights = DMatrix::from_row_iterator(out, inp, floats.by_ref().take(out * inp));
            let bias = DVector::from_iterator(out, floats.by_ref().take(out));
            Layer { weights, bias }
        })
        .collect();
    let model = Mlp { layers };
    model.validate()?;
    Ok(model)
}

pub fn save(model: &Mlp, path: &Path) -> Result<()> {
    let bytes = encode(model)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_f32() {
        let m = Mlp::init(&[5, 4, 2], 3, false);
        let back = decode(&encode(&m).unwrap()).unwrap();
        assert_eq!(back.sizes(), m.sizes());
        for (a, b) in m.params().iter().zip(back.params()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&Mlp::init(&[2, 1], 0, false)).unwrap();
        assert_eq!(&bytes[..6], b"OTMLP1");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 6 + 4 + 8 + 3 * 4);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&Mlp::init(&[3, 2], 0, false)).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
    }
}
