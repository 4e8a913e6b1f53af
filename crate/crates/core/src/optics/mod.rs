//! Tri-colour Lambertian rendering of the gel and its photometric inverse.

mod integrate;
mod photometric;

pub use integrate::integrate_normals;
pub use photometric::{calibrate_photometric, invert_photometric, PhotometricCalibration};

use serde::{Deserialize, Serialize};

use crate::contact::{surface_normals, undeformed_depth, DepthMap, NormalMap};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, SensorConfig, Vec3};
use crate::grid::Grid;

pub const DEFAULT_AMBIENT: f64 = 0.1;
pub const DEFAULT_INTENSITY: f64 = 0.8;
/// Angle between a ring LED and the camera's optical axis, seen from the camera.
pub const RING_POLAR_DEG: f64 = 40.0;
/// Ring azimuths of the red, green and blue LEDs in the image plane.
pub const RING_AZIMUTHS_DEG: [f64; 3] = [90.0, 210.0, 330.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightColor {
    Red,
    Green,
    Blue,
}

impl LightColor {
    pub const ALL: [LightColor; 3] = [LightColor::Red, LightColor::Green, LightColor::Blue];

    pub fn channel(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Light {
    pub color: LightColor,
    pub position_mm: Vec3,
    pub intensity: f64,
}

/// The three LEDs that sit next to one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightRig {
    pub lights: Vec<Light>,
    pub ambient: [f64; 3],
    /// Reference point on the rest surface, used for directional lighting
    /// and as the unit distance for inverse-square falloff.
    pub aim_mm: Vec3,
}

impl LightRig {
    /// Ring of R, G, B LEDs at two thirds of `standoff` from the camera,
    /// aimed at the rest surface point on the optical axis.
    pub fn ring_preset(cam: &CameraModel, standoff: f64) -> LightRig {
        let dist = 2.0 * standoff / 3.0;
        let polar = RING_POLAR_DEG.to_radians();
        let [right, down, forward] = cam.axes();
        let lights = LightColor::ALL
            .iter()
            .zip(RING_AZIMUTHS_DEG)
            .map(|(&color, az)| {
                let az = az.to_radians();
                let local = right * (polar.sin() * az.cos()) - down * (polar.sin() * az.sin()) + forward * polar.cos();
                Light {
                    color,
                    position_mm: cam.position_mm + local * dist,
                    intensity: DEFAULT_INTENSITY,
                }
            })
            .collect();
        LightRig {
            lights,
            ambient: [DEFAULT_AMBIENT; 3],
            aim_mm: cam.position_mm + forward * standoff,
        }
    }

    pub fn light(&self, color: LightColor) -> &Light {
        self.lights
            .iter()
            .find(|l| l.color == color)
            .expect("validated rig has every colour")
    }

    pub fn validate(&self, cam: &CameraModel) -> Result<()> {
        let err = |m: String| Err(Error::Config(format!("lights of camera {}: {m}", cam.name)));
        if self.lights.len() != 3 {
            return err(format!("expected 3 lights, found {}", self.lights.len()));
        }
        for color in LightColor::ALL {
            let n = self.lights.iter().filter(|l| l.color == color).count();
            if n != 1 {
                return err(format!("{n} lights of colour {color:?}"));
            }
        }
        let d0 = (self.lights[0].position_mm - cam.position_mm).norm();
        for l in &self.lights {
            let d = (l.position_mm - cam.position_mm).norm();
            if (d - d0).abs() > 1e-6 {
                return err(format!("lights not equidistant ({d0:.6} vs {d:.6} mm)"));
            }
            if !(l.intensity >= 0.0) {
                return err("negative intensity".into());
            }
            if (l.position_mm - self.aim_mm).norm() < 1e-9 {
                return err("light coincides with its aim point".into());
            }
        }
        if self.ambient.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return err("ambient outside [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadingSettings {
    pub albedo: f64,
    /// Evaluate each light as a fixed direction (from the rig's aim point)
    /// instead of per surface point.
    pub directional: bool,
    /// Inverse-square falloff relative to the aim distance. Point mode only.
    pub falloff: bool,
}

impl Default for ShadingSettings {
    fn default() -> Self {
        ShadingSettings {
            albedo: 1.0,
            directional: true,
            falloff: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileImage {
    pub camera_index: usize,
    pub pixels: Grid<[f64; 3]>,
}

impl TactileImage {
    pub fn shape(&self) -> (usize, usize) {
        self.pixels.shape()
    }

    pub fn channel_mean(&self, ch: usize) -> f64 {
        self.pixels.iter().map(|p| p[ch]).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn gray(&self) -> Grid<f64> {
        self.pixels.map(|p| (p[0] + p[1] + p[2]) / 3.0)
    }
}

/// Per-camera lighting terms expressed in the camera frame.
struct Shader {
    ambient: [f64; 3],
    albedo: f64,
    /// `(intensity, position, fixed direction, reference distance)` per channel.
    lights: [(f64, Vec3, Vec3, f64); 3],
    directional: bool,
    falloff: bool,
}

impl Shader {
    fn new(config: &SensorConfig, cam: &CameraModel, camera_index: usize) -> Result<Shader> {
        let rig = config
            .lights
            .get(camera_index)
            .ok_or_else(|| Error::Config(format!("no light rig for camera {camera_index}")))?;
        rig.validate(cam)?;
        let to_cam = |p: &Vec3| cam.to_camera_frame(&(p - cam.position_mm));
        let aim = to_cam(&rig.aim_mm);
        let lights = LightColor::ALL.map(|color| {
            let l = rig.light(color);
            let pos = to_cam(&l.position_mm);
            (l.intensity, pos, (pos - aim).normalize(), (pos - aim).norm())
        });
        Ok(Shader {
            ambient: rig.ambient,
            albedo: config.shading.albedo,
            lights,
            directional: config.shading.directional,
            falloff: config.shading.falloff,
        })
    }

    fn shade(&self, n: &Vec3, point: &Vec3) -> [f64; 3] {
        let mut out = self.ambient;
        for (ch, (intensity, pos, dir, ref_dist)) in self.lights.iter().enumerate() {
            let (l, scale) = if self.directional {
                (*dir, 1.0)
            } else {
                let to_light = pos - point;
                let d = to_light.norm();
                let scale = if self.falloff { (ref_dist / d).powi(2) } else { 1.0 };
                (to_light / d, scale)
            };
            out[ch] += intensity * scale * self.albedo * n.dot(&l).max(0.0);
        }
        out.map(|v| v.clamp(0.0, 1.0))
    }
}

pub fn render(
    config: &SensorConfig,
    camera_index: usize,
    normals: &NormalMap,
    depth: &DepthMap,
) -> Result<TactileImage> {
    let cam = config.camera(camera_index)?;
    if normals.camera_index != camera_index || depth.camera_index != camera_index {
        return Err(Error::Input(
            "normals and depth must come from the rendered camera".into(),
        ));
    }
    let shape = (cam.rows(), cam.cols());
    if normals.values.shape() != shape || depth.shape() != shape {
        return Err(Error::Input(
            "normal or depth map does not match camera resolution".into(),
        ));
    }
    let shader = Shader::new(config, cam, camera_index)?;
    let pixels = Grid::from_fn(shape.0, shape.1, |r, c| {
        shader.shade(normals.values.get(r, c), &depth.point(cam, r, c))
    });
    Ok(TactileImage { camera_index, pixels })
}

/// Render of the undeformed gel. Pure, so repeated calls are bit-identical;
/// [`crate::sensor::Sensor`] caches it.
pub fn reference_image(config: &SensorConfig, camera_index: usize) -> Result<TactileImage> {
    let rest = undeformed_depth(config, camera_index)?;
    let normals = surface_normals(config, &rest)?;
    render(config, camera_index, &normals, &rest)
}

/// `0.5 + (img - ref) / 2` per channel, clamped to `[0, 1]`.
pub fn difference_image(img: &TactileImage, reference: &TactileImage) -> Result<TactileImage> {
    if img.shape() != reference.shape() || img.camera_index != reference.camera_index {
        return Err(Error::Input(format!(
            "cannot difference camera {} {:?} against camera {} {:?}",
            img.camera_index,
            img.shape(),
            reference.camera_index,
            reference.shape()
        )));
    }
    let data = img
        .pixels
        .iter()
        .zip(reference.pixels.iter())
        .map(|(a, b)| [0, 1, 2].map(|c| (0.5 + 0.5 * (a[c] - b[c])).clamp(0.0, 1.0)))
        .collect();
    Ok(TactileImage {
        camera_index: img.camera_index,
        pixels: Grid::from_vec(img.pixels.rows(), img.pixels.cols(), data),
    })
}
