use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::optics::TactileImage;

pub const DEFAULT_DS: (usize, usize) = (32, 32);

/// Concatenated per-camera blocks of downsampled grayscale difference images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// `(camera_index, range into values)` in camera order.
    pub blocks: Vec<(usize, Range<usize>)>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, camera_index: usize) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|(c, _)| *c == camera_index)
            .map(|(_, r)| &self.values[r.clone()])
    }
}

/// One output weight row per destination cell: the overlap of each source
/// cell with the destination cell, normalised to sum to one.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
            let mut w = Vec::new();
            let mut k = lo.floor() as usize;
            while (k as f64) < hi && k < src {
                let overlap = (hi.min((k + 1) as f64) - lo.max(k as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((k, overlap / scale));
                }
                k += 1;
            }
            w
        })
        .collect()
}

/// Area-averaging resample to `rows × cols`; exact for any size ratio.
pub fn area_resample(src: &Grid<f64>, rows: usize, cols: usize) -> Grid<f64> {
    let wr = area_weights(src.rows(), rows);
    let wc = area_weights(src.cols(), cols);
    let tmp = Grid::from_fn(src.rows(), cols, |r, c| {
        wc[c].iter().map(|&(k, w)| w * src.get(r, k)).sum::<f64>()
    });
    Grid::from_fn(rows, cols, |r, c| wr[r].iter().map(|&(k, w)| w * tmp.get(k, c)).sum())
}

/// Grayscale (channel mean), area-averaged to `ds`, minus 0.5, for each
/// camera in `channel_mask`, concatenated in camera order.
pub fn extract_features(images: &[TactileImage], channel_mask: &[usize], ds: (usize, usize)) -> Result<FeatureVector> {
    if channel_mask.is_empty() {
        return Err(Error::Input("channel mask is empty".into()));
    }
    if ds.0 == 0 || ds.1 == 0 {
        return Err(Error::Input("downsample size must be positive".into()));
    }
    for (i, a) in images.iter().enumerate() {
        if images[..i].iter().any(|b| b.camera_index == a.camera_index) {
            return Err(Error::Input(format!("camera {} appears twice", a.camera_index)));
        }
    }
    let mut cams = channel_mask.to_vec();
    cams.sort_unstable();
    cams.dedup();
    let mut values = Vec::with_capacity(cams.len() * ds.0 * ds.1);
    let mut blocks = Vec::with_capacity(cams.len());
    for cam in cams {
        let img = images
            .iter()
            .find(|i| i.camera_index == cam)
            .ok_or_else(|| Error::Input(format!("no image for masked camera {cam}")))?;
        let small = area_resample(&img.gray(), ds.0, ds.1);
        let start = values.len();
        values.extend(small.iter().map(|v| v - 0.5));
        blocks.push((cam, start..values.len()));
    }
    Ok(FeatureVector { values, blocks })
}
