//! Fingertip geometry: camera placement, gel outer surface and angular coverage.
//!
//! Sensor frame: `+z` runs along the finger axis towards the tip. For the
//! capped-cylinder gel the base sits at `z = 0`, the cylinder wall has radius
//! `D / 2` and the hemispherical cap is centred at `z = H - D / 2`. All five
//! cameras of the multi-directional preset share that cap centre as their
//! optical centre, so a surface direction seen from the centre is exactly the
//! pixel ray direction.

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{LightRig, ShadingSettings};

pub type Vec3 = Vector3<f64>;

/// Slack applied to angular containment tests so that exactly abutting cones
/// do not leave spurious single-sample gaps.
const CONE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub name: String,
    pub position_mm: Vec3,
    pub view_dir: Vec3,
    pub up_dir: Vec3,
    /// Full opening angle of the inscribed viewing cone, degrees.
    pub fov_deg: f64,
    /// `[rows, cols]`.
    pub resolution: [usize; 2],
    pub min_focus_mm: f64,
}

impl CameraModel {
    pub fn rows(&self) -> usize {
        self.resolution[0]
    }

    pub fn cols(&self) -> usize {
        self.resolution[1]
    }

    /// Focal length in pixels. The horizontal field of view equals the cone
    /// angle, so the cone is inscribed in the image rectangle.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.cols() as f64 / (0.5 * self.fov_deg.to_radians()).tan()
    }

    /// Camera frame axes expressed in the sensor frame: image right, image
    /// down, and forward (view direction).
    pub fn axes(&self) -> [Vec3; 3] {
        let forward = self.view_dir;
        let right = forward.cross(&self.up_dir);
        let down = -self.up_dir;
        [right, down, forward]
    }

    pub fn to_camera_frame(&self, v: &Vec3) -> Vec3 {
        let [r, d, f] = self.axes();
        Vec3::new(r.dot(v), d.dot(v), f.dot(v))
    }

    pub fn to_sensor_frame(&self, v: &Vec3) -> Vec3 {
        let [r, d, f] = self.axes();
        r * v.x + d * v.y + f * v.z
    }

    /// Un-normalised camera-frame ray through the centre of `(row, col)`,
    /// scaled so its forward component is 1.
    pub fn pixel_ray_camera(&self, row: usize, col: usize) -> Vec3 {
        let f = self.focal_px();
        let u = col as f64 + 0.5 - 0.5 * self.cols() as f64;
        let v = row as f64 + 0.5 - 0.5 * self.rows() as f64;
        Vec3::new(u / f, v / f, 1.0)
    }

    /// Whether a sensor-frame direction lies inside the inscribed cone.
    pub fn cone_contains(&self, dir: &Vec3) -> bool {
        let cos_half = (0.5 * self.fov_deg.to_radians()).cos();
        dir.normalize().dot(&self.view_dir) >= cos_half - CONE_EPS
    }

    fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(format!("camera {}: {m}", self.name)));
        if (self.view_dir.norm() - 1.0).abs() > 1e-9 || (self.up_dir.norm() - 1.0).abs() > 1e-9 {
            return err("view and up directions must be unit vectors".into());
        }
        if self.view_dir.dot(&self.up_dir).abs() > 1e-9 {
            return err("view and up directions must be orthogonal".into());
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return err(format!("fov {} outside (0, 180)", self.fov_deg));
        }
        if self.rows() == 0 || self.cols() == 0 {
            return err("resolution must be positive".into());
        }
        if !(self.min_focus_mm > 0.0) {
            return err("min focus distance must be positive".into());
        }
        Ok(())
    }
}

/// Shape of the elastomer's outer (contacted) surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GelShape {
    /// Cylinder of diameter `D` closed by a hemisphere, total height `H`.
    CappedCylinder,
    /// Single planar pad of `diameter_mm × height_mm` at distance
    /// `skin_thickness_mm` in front of a camera at the origin.
    FlatPad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GelSurface {
    pub shape: GelShape,
    pub diameter_mm: f64,
    pub height_mm: f64,
    /// Elastomer layer thickness; also bounds the admissible indentation.
    pub skin_thickness_mm: f64,
}

impl GelSurface {
    pub fn radius_mm(&self) -> f64 {
        0.5 * self.diameter_mm
    }

    /// Centre of the hemispherical cap (capped cylinder only).
    pub fn cap_center(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.height_mm - self.radius_mm())
    }

    /// Distance along a ray from an interior origin to the outer surface.
    pub fn ray_exit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        match self.shape {
            GelShape::CappedCylinder => self.capped_cylinder_exit(origin, dir),
            GelShape::FlatPad => {
                if dir.z <= 1e-12 {
                    return None;
                }
                let t = (self.skin_thickness_mm - origin.z) / dir.z;
                let p = origin + dir * t;
                let tol = 1e-9;
                (t > 0.0 && p.x.abs() <= 0.5 * self.diameter_mm + tol && p.y.abs() <= 0.5 * self.height_mm + tol)
                    .then_some(t)
            }
        }
    }

    fn capped_cylinder_exit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let r = self.radius_mm();
        let c = self.cap_center();
        let tol = 1e-9;
        // Hemisphere: exit root of |o + t d - c| = r restricted to z >= zc.
        let oc = origin - c;
        let b = oc.dot(dir);
        let disc = b * b - (oc.norm_squared() - r * r);
        if disc >= 0.0 {
            let t = -b + disc.sqrt();
            if t > 0.0 && origin.z + t * dir.z >= c.z - tol {
                return Some(t);
            }
        }
        // Cylinder wall: exit root of x^2 + y^2 = r^2 restricted to 0 <= z <= zc.
        let a = dir.x * dir.x + dir.y * dir.y;
        if a > 1e-15 {
            let bb = origin.x * dir.x + origin.y * dir.y;
            let cc = origin.x * origin.x + origin.y * origin.y - r * r;
            let disc = bb * bb - a * cc;
            if disc >= 0.0 {
                let t = (-bb + disc.sqrt()) / a;
                let z = origin.z + t * dir.z;
                if t > 0.0 && z <= c.z + tol && z >= -tol {
                    return Some(t);
                }
            }
        }
        None
    }

    fn validate(&self) -> Result<()> {
        if !(self.diameter_mm > 0.0 && self.height_mm > 0.0) {
            return Err(Error::Config("gel dimensions must be positive".into()));
        }
        if !(self.skin_thickness_mm > 0.0) {
            return Err(Error::Config("skin thickness must be positive".into()));
        }
        if self.shape == GelShape::CappedCylinder && self.height_mm < self.radius_mm() {
            return Err(Error::Config(
                "capped cylinder height must be at least its radius".into(),
            ));
        }
        Ok(())
    }
}

/// Angular extent the preset is designed to sensitise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageTargets {
    pub vertical_deg: f64,
    pub horizontal_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    MultiDirectional,
    FlatBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub kind: SensorKind,
    pub cameras: Vec<CameraModel>,
    pub gel: GelSurface,
    /// One rig per camera, same order as `cameras`.
    pub lights: Vec<LightRig>,
    pub shading: ShadingSettings,
    pub coverage_targets: CoverageTargets,
}

/// Camera order of the multi-directional preset.
pub const TOP: usize = 0;
pub const SIDE_POS_X: usize = 1;
pub const SIDE_NEG_X: usize = 2;
pub const SIDE_POS_Y: usize = 3;
pub const SIDE_NEG_Y: usize = 4;

pub const PRESET_RESOLUTION: usize = 400;
pub const PRESET_FOV_DEG: f64 = 90.0;
pub const PRESET_MIN_FOCUS_MM: f64 = 5.0;

/// The five-camera fingertip: one camera along `+z`, four side cameras at
/// 90° azimuth spacing, 90° cones, 400×400 pixels, D = 30 mm, H = 33 mm.
pub fn build_omnitact_config() -> SensorConfig {
    let gel = GelSurface {
        shape: GelShape::CappedCylinder,
        diameter_mm: 30.0,
        height_mm: 33.0,
        skin_thickness_mm: 5.0,
    };
    let center = gel.cap_center();
    let z = Vec3::z();
    let specs = [
        ("top", z, Vec3::y()),
        ("side_px", Vec3::x(), z),
        ("side_nx", -Vec3::x(), z),
        ("side_py", Vec3::y(), z),
        ("side_ny", -Vec3::y(), z),
    ];
    let cameras: Vec<CameraModel> = specs
        .iter()
        .map(|(name, view, up)| preset_camera(name, center, *view, *up))
        .collect();
    let standoff = gel.radius_mm();
    let lights = cameras.iter().map(|cam| LightRig::ring_preset(cam, standoff)).collect();
    SensorConfig {
        kind: SensorKind::MultiDirectional,
        cameras,
        gel,
        lights,
        shading: ShadingSettings::default(),
        coverage_targets: CoverageTargets {
            vertical_deg: 270.0,
            horizontal_deg: 360.0,
        },
    }
}

/// Single camera behind one flat rectangular pad (classic GelSight layout).
/// The pad exactly fills the camera's image rectangle.
pub fn build_flat_baseline_config() -> SensorConfig {
    let standoff = 10.0;
    let half_width = standoff * (0.5 * PRESET_FOV_DEG.to_radians()).tan();
    let gel = GelSurface {
        shape: GelShape::FlatPad,
        diameter_mm: 2.0 * half_width,
        height_mm: 2.0 * half_width,
        skin_thickness_mm: standoff,
    };
    let cam = preset_camera("flat", Vec3::zeros(), Vec3::z(), Vec3::y());
    let lights = vec![LightRig::ring_preset(&cam, standoff)];
    SensorConfig {
        kind: SensorKind::FlatBaseline,
        cameras: vec![cam],
        gel,
        lights,
        shading: ShadingSettings::default(),
        coverage_targets: CoverageTargets {
            vertical_deg: PRESET_FOV_DEG,
            horizontal_deg: PRESET_FOV_DEG,
        },
    }
}

fn preset_camera(name: &str, position: Vec3, view: Vec3, up: Vec3) -> CameraModel {
    CameraModel {
        name: name.to_string(),
        position_mm: position,
        view_dir: view,
        up_dir: up,
        fov_deg: PRESET_FOV_DEG,
        resolution: [PRESET_RESOLUTION, PRESET_RESOLUTION],
        min_focus_mm: PRESET_MIN_FOCUS_MM,
    }
}

impl SensorConfig {
    pub fn num_cameras(&self) -> usize {
        self.cameras.len()
    }

    pub fn camera(&self, index: usize) -> Result<&CameraModel> {
        self.cameras.get(index).ok_or_else(|| {
            Error::Input(format!(
                "camera index {index} out of range (sensor has {})",
                self.cameras.len()
            ))
        })
    }

    /// Same sensor with every camera resampled to `n × n` pixels.
    pub fn with_resolution(&self, n: usize) -> SensorConfig {
        let mut cfg = self.clone();
        for cam in &mut cfg.cameras {
            cam.resolution = [n, n];
        }
        cfg
    }

    /// Checks every structural invariant, including that each pixel ray of
    /// every camera leaves through the outer surface exactly once.
    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Config("sensor needs at least one camera".into()));
        }
        if self.lights.len() != self.cameras.len() {
            return Err(Error::Config(format!(
                "{} light rigs for {} cameras",
                self.lights.len(),
                self.cameras.len()
            )));
        }
        self.gel.validate()?;
        for (cam, rig) in self.cameras.iter().zip(&self.lights) {
            cam.validate()?;
            rig.validate(cam)?;
            if self.gel.skin_thickness_mm < cam.min_focus_mm {
                return Err(Error::Config(format!(
                    "skin thickness {} below min focus of camera {}",
                    self.gel.skin_thickness_mm, cam.name
                )));
            }
            // Border pixels bound the frustum; the surface is convex around
            // every camera so interior rays cannot miss if the border hits.
            let (rows, cols) = (cam.rows(), cam.cols());
            let border = (0..cols)
                .flat_map(|c| [(0, c), (rows - 1, c)])
                .chain((0..rows).flat_map(|r| [(r, 0), (r, cols - 1)]));
            for (r, c) in border {
                let dir = cam.to_sensor_frame(&cam.pixel_ray_camera(r, c)).normalize();
                match self.gel.ray_exit(&cam.position_mm, &dir) {
                    Some(t) if t >= cam.min_focus_mm => {}
                    Some(t) => {
                        return Err(Error::Config(format!(
                            "camera {} pixel ({r}, {c}) reaches the gel at {t:.3} mm, inside min focus",
                            cam.name
                        )))
                    }
                    None => {
                        return Err(Error::Config(format!(
                            "camera {} pixel ({r}, {c}) misses the gel surface",
                            cam.name
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Unit<Vec3>,
}

/// Sensor-frame ray through the centre of `pixel = (row, col)`.
pub fn pixel_to_ray(config: &SensorConfig, camera_index: usize, pixel: (usize, usize)) -> Result<Ray> {
    let cam = config.camera(camera_index)?;
    let (row, col) = pixel;
    if row >= cam.rows() || col >= cam.cols() {
        return Err(Error::Input(format!(
            "pixel ({row}, {col}) outside {}x{} image",
            cam.rows(),
            cam.cols()
        )));
    }
    let dir = cam.to_sensor_frame(&cam.pixel_ray_camera(row, col));
    Ok(Ray {
        origin: cam.position_mm,
        dir: Unit::new_normalize(dir),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoveragePlane {
    /// Vertical cut containing the top camera axis and the `±x` side axes.
    Vertical,
    /// Horizontal cut through the side cameras.
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub plane: CoveragePlane,
    pub start_deg: f64,
    pub end_deg: f64,
}

impl Arc {
    pub fn span_deg(&self) -> f64 {
        self.end_deg - self.start_deg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub samples_per_plane: usize,
    pub vertical_covered_deg: f64,
    pub horizontal_covered_deg: f64,
    pub covered_arcs: Vec<Arc>,
    pub blind_spot_arcs: Vec<Arc>,
    /// Fraction of the full sphere of directions inside at least one cone.
    pub solid_angle_fraction: f64,
}

impl CoverageReport {
    pub fn blind_total_deg(&self, plane: CoveragePlane) -> f64 {
        self.blind_spot_arcs
            .iter()
            .filter(|a| a.plane == plane)
            .map(Arc::span_deg)
            .sum()
    }
}

/// Brute-force angular coverage in the two characteristic cuts.
///
/// Each plane is sampled at `samples_per_plane` equally spaced directions
/// around the sensing centre (cap centre, or the camera for a flat pad). A
/// direction is covered when its ray reaches the gel and lies inside at least
/// one camera cone. Angles are measured from `+z` towards `+x` in the
/// vertical plane and from `+x` towards `+y` in the horizontal plane.
pub fn compute_coverage(config: &SensorConfig, samples_per_plane: usize) -> Result<CoverageReport> {
    if samples_per_plane < 360 {
        return Err(Error::Input(format!(
            "need at least 360 samples per plane, got {samples_per_plane}"
        )));
    }
    let center = match config.gel.shape {
        GelShape::CappedCylinder => config.gel.cap_center(),
        GelShape::FlatPad => config.cameras[0].position_mm,
    };
    let step = 360.0 / samples_per_plane as f64;
    let mut covered_arcs = Vec::new();
    let mut blind_spot_arcs = Vec::new();
    let mut totals = [0.0; 2];
    for (pi, plane) in [CoveragePlane::Vertical, CoveragePlane::Horizontal]
        .into_iter()
        .enumerate()
    {
        let flags: Vec<bool> = (0..samples_per_plane)
            .map(|i| {
                let a = (i as f64 * step).to_radians();
                let dir = match plane {
                    CoveragePlane::Vertical => Vec3::new(a.sin(), 0.0, a.cos()),
                    CoveragePlane::Horizontal => Vec3::new(a.cos(), a.sin(), 0.0),
                };
                direction_covered(config, &center, &dir)
            })
            .collect();
        totals[pi] = flags.iter().filter(|&&f| f).count() as f64 * step;
        for (covered, start, end) in runs(&flags) {
            let arc = Arc {
                plane,
                start_deg: start as f64 * step,
                end_deg: end as f64 * step,
            };
            if covered {
                covered_arcs.push(arc);
            } else {
                blind_spot_arcs.push(arc);
            }
        }
    }
    let solid_angle_fraction = solid_angle_fraction(config, &center, 20_000);
    Ok(CoverageReport {
        samples_per_plane,
        vertical_covered_deg: totals[0],
        horizontal_covered_deg: totals[1],
        covered_arcs,
        blind_spot_arcs,
        solid_angle_fraction,
    })
}

fn direction_covered(config: &SensorConfig, center: &Vec3, dir: &Vec3) -> bool {
    let Some(t) = config.gel.ray_exit(center, dir) else {
        return false;
    };
    let point = center + dir * t;
    config.cameras.iter().any(|cam| {
        let to_point = point - cam.position_mm;
        cam.cone_contains(&to_point)
            && config
                .gel
                .ray_exit(&cam.position_mm, &to_point.normalize())
                .is_some_and(|s| (s - to_point.norm()).abs() < 1e-6)
    })
}

/// Splits a circular flag sequence into maximal runs `(value, start, end)`,
/// sample indices half-open, with runs sorted by start.
fn runs(flags: &[bool]) -> Vec<(bool, usize, usize)> {
    let n = flags.len();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || flags[i] != flags[start] {
            out.push((flags[start], start, i));
            start = i;
        }
    }
    out
}

fn solid_angle_fraction(config: &SensorConfig, center: &Vec3, samples: usize) -> f64 {
    // Fibonacci sphere sampling.
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let hits = (0..samples)
        .filter(|&i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / samples as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let dir = Vec3::new(r * phi.cos(), r * phi.sin(), z);
            direction_covered(config, center, &dir)
        })
        .count();
    hits as f64 / samples as f64
}
