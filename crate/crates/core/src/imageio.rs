//! Image files: 8-bit RGB PNG for tactile images, raw 16-bit little-endian
//! dumps for depth and normal maps.
//!
//! A 16-bit dump is the 4-byte magic `OTD1` (depth) or `OTN1` (normals),
//! `u32` rows, `u32` cols, then row-major `u16` samples. Depth samples are
//! millimetres × 1000; normal samples interleave `x, y, z` with each
//! component stored as `round((n + 1) / 2 × 65535)`.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::contact::{DepthMap, NormalMap};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::optics::TactileImage;

pub const DEPTH_MAGIC: &[u8; 4] = b"OTD1";
pub const NORMAL_MAGIC: &[u8; 4] = b"OTN1";

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_rgb8(img: &TactileImage) -> RgbImage {
    let (rows, cols) = img.shape();
    ImageBuffer::from_fn(cols as u32, rows as u32, |x, y| {
        Rgb(img.pixels.get(y as usize, x as usize).map(quantize))
    })
}

pub fn from_rgb8(camera_index: usize, buf: &RgbImage) -> TactileImage {
    let pixels = Grid::from_fn(buf.height() as usize, buf.width() as usize, |r, c| {
        buf.get_pixel(c as u32, r as u32).0.map(|v| v as f64 / 255.0)
    });
    TactileImage { camera_index, pixels }
}

pub fn write_png(img: &TactileImage, path: &Path) -> Result<()> {
    to_rgb8(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

pub fn read_png(camera_index: usize, path: &Path) -> Result<TactileImage> {
    let buf = image::open(path).map_err(|e| image_error(path, e))?.into_rgb8();
    Ok(from_rgb8(camera_index, &buf))
}

/// Tiles equally sized images left to right.
pub fn hstack(images: &[RgbImage]) -> RgbImage {
    let h = images.iter().map(|i| i.height()).max().unwrap_or(0);
    let w = images.iter().map(|i| i.width()).sum();
    let mut out = RgbImage::new(w, h);
    let mut x0 = 0;
    for img in images {
        image::imageops::replace(&mut out, img, x0 as i64, 0);
        x0 += img.width();
    }
    out
}

pub fn save_rgb(buf: &RgbImage, path: &Path) -> Result<()> {
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Input(format!("{}: {other}", path.display())),
    }
}

fn encode16(magic: &[u8; 4], rows: usize, cols: usize, samples: impl Iterator<Item = u16>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 2 * rows * cols);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

fn decode16(magic: &[u8; 4], bytes: &[u8], per_pixel: usize) -> Result<(usize, usize, Vec<u16>)> {
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(Error::Input("not a 16-bit map dump".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != 2 * rows * cols * per_pixel {
        return Err(Error::Input("16-bit map dump has the wrong length".into()));
    }
    let samples = body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    Ok((rows, cols, samples))
}

pub fn encode_depth(depth: &DepthMap) -> Vec<u8> {
    let (rows, cols) = depth.shape();
    encode16(
        DEPTH_MAGIC,
        rows,
        cols,
        depth
            .values
            .iter()
            .map(|v| (v * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16),
    )
}

/// Depth values in millimetres.
pub fn decode_depth(bytes: &[u8]) -> Result<Grid<f64>> {
    let (rows, cols, s) = decode16(DEPTH_MAGIC, bytes, 1)?;
    Ok(Grid::from_vec(
        rows,
        cols,
        s.into_iter().map(|v| v as f64 / 1000.0).collect(),
    ))
}

pub fn encode_normals(normals: &NormalMap) -> Vec<u8> {
    let (rows, cols) = normals.values.shape();
    let q = |v: f64| ((v.clamp(-1.0, 1.0) + 1.0) * 0.5 * u16::MAX as f64).round() as u16;
    encode16(
        NORMAL_MAGIC,
        rows,
        cols,
        normals.values.iter().flat_map(|n| [q(n.x), q(n.y), q(n.z)]),
    )
}

pub fn decode_normals(bytes: &[u8]) -> Result<Grid<[f64; 3]>> {
    let (rows, cols, s) = decode16(NORMAL_MAGIC, bytes, 3)?;
    let d = |v: u16| v as f64 / u16::MAX as f64 * 2.0 - 1.0;
    Ok(Grid::from_vec(
        rows,
        cols,
        s.chunks_exact(3).map(|c| [d(c[0]), d(c[1]), d(c[2])]).collect(),
    ))
}

pub fn write_bytes(bytes: &[u8], path: &Path) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
