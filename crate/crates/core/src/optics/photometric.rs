use nalgebra::{Matrix3, Matrix4, Matrix4x3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::TactileImage;
use crate::contact::NormalMap;
use crate::error::{Error, Result};
use crate::geometry::{SensorConfig, Vec3};
use crate::grid::Grid;

const CLAMP_EPS: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e6;

/// Global linear shading model `rgb = A n + b` for one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotometricCalibration {
    pub camera_index: usize,
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    /// Pixels that contributed at least one unclamped probe sample.
    pub valid_region: Grid<bool>,
    pub residual_rms: f64,
    pub condition_number: f64,
    ambient: [f64; 3],
}

fn unclamped(rgb: &[f64; 3], ambient: &[f64; 3]) -> bool {
    rgb.iter()
        .zip(ambient)
        .all(|(v, a)| *v > a + CLAMP_EPS && *v < 1.0 - CLAMP_EPS)
}

fn condition(a: &Matrix3<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares fit of `A`, `b` over every unclamped pixel of every probe.
pub fn calibrate_photometric(
    config: &SensorConfig,
    camera_index: usize,
    probe_normals: &[NormalMap],
    probe_images: &[TactileImage],
) -> Result<PhotometricCalibration> {
    let cam = config.camera(camera_index)?;
    let ambient = config
        .lights
        .get(camera_index)
        .map(|r| r.ambient)
        .ok_or_else(|| Error::Config(format!("no light rig for camera {camera_index}")))?;
    if probe_normals.is_empty() || probe_normals.len() != probe_images.len() {
        return Err(Error::Input(format!(
            "{} probe normal maps for {} probe images",
            probe_normals.len(),
            probe_images.len()
        )));
    }
    let shape = (cam.rows(), cam.cols());
    let mut valid = Grid::filled(shape.0, shape.1, false);
    let mut xtx = Matrix4::<f64>::zeros();
    let mut xty = Matrix4x3::<f64>::zeros();
    let mut samples = Vec::new();
    for (nm, img) in probe_normals.iter().zip(probe_images) {
        if nm.camera_index != camera_index || img.camera_index != camera_index {
            return Err(Error::Input("probe from a different camera".into()));
        }
        if nm.values.shape() != shape || img.shape() != shape {
            return Err(Error::Input("probe does not match camera resolution".into()));
        }
        for (r, c, rgb) in img.pixels.indexed() {
            if !unclamped(rgb, &ambient) {
                continue;
            }
            let n = nm.values.get(r, c);
            let x = Vector4::new(n.x, n.y, n.z, 1.0);
            xtx += x * x.transpose();
            xty += x * Vector3::from(*rgb).transpose();
            *valid.get_mut(r, c) = true;
            samples.push((x, *rgb));
        }
    }
    let insufficient = || Error::Calibration("insufficient normal diversity".into());
    let sv = xtx.singular_values();
    if sv.min() <= 1e-10 * sv.max().max(f64::MIN_POSITIVE) {
        return Err(insufficient());
    }
    let coef = xtx.cholesky().ok_or_else(insufficient)?.solve(&xty);
    let a: Matrix3<f64> = coef.fixed_view::<3, 3>(0, 0).transpose().into_owned();
    let b: Vector3<f64> = coef.fixed_view::<1, 3>(3, 0).transpose().into_owned();
    let cond = condition(&a);
    if !(cond < MAX_CONDITION) {
        return Err(Error::Calibration(format!(
            "shading matrix condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}"
        )));
    }
    let sse: f64 = samples
        .iter()
        .map(|(x, rgb)| {
            let pred: Vector3<f64> = a * x.xyz() + b;
            (pred - Vector3::from(*rgb)).norm_squared()
        })
        .sum();
    Ok(PhotometricCalibration {
        camera_index,
        a,
        b,
        valid_region: valid,
        residual_rms: (sse / (3 * samples.len()) as f64).sqrt(),
        condition_number: cond,
        ambient,
    })
}

/// `normalize(A⁻¹ (rgb - b))` per pixel. Pixels outside the valid region, or
/// whose estimate is degenerate or faces away from the camera, get the
/// camera-facing normal.
pub fn invert_photometric(calib: &PhotometricCalibration, img: &TactileImage) -> Result<NormalMap> {
    if img.camera_index != calib.camera_index || img.shape() != calib.valid_region.shape() {
        return Err(Error::Input("image does not match calibration camera".into()));
    }
    let inv = calib
        .a
        .try_inverse()
        .filter(|_| condition(&calib.a) < MAX_CONDITION)
        .ok_or_else(|| Error::Calibration("shading matrix is not invertible".into()))?;
    let facing = -Vec3::z();
    let values = Grid::from_fn(img.pixels.rows(), img.pixels.cols(), |r, c| {
        let rgb = img.pixels.get(r, c);
        if !*calib.valid_region.get(r, c) {
            return facing;
        }
        let n = inv * (Vector3::from(*rgb) - calib.b);
        let len = n.norm();
        let shadowed = rgb.iter().zip(&calib.ambient).all(|(v, a)| *v <= a + CLAMP_EPS);
        if shadowed || len < 1e-9 || !len.is_finite() || n.z >= 0.0 {
            return facing;
        }
        n / len
    });
    Ok(NormalMap {
        camera_index: calib.camera_index,
        values,
    })
}
