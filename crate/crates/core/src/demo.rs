//! Demonstration renders and coverage diagrams.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::contact::{Indenter, Pose};
use crate::error::{Error, Result};
use crate::geometry::{CoveragePlane, CoverageReport, GelShape, SensorKind, Vec3};
use crate::imageio;
use crate::optics::TactileImage;
use crate::sensor::{Reading, Sensor};
use crate::tasks::angle::CONTACT_EPS_MM;
use crate::tasks::insertion::{plug_indenter, PLUG_CAMERA};
use crate::tasks::{InsertionScenario, InsertionSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoObject {
    /// Coarse thread (1.5 mm pitch) pressed against the `+x` side.
    Screw,
    /// Gear rack rolled over the fingertip from the `-x` side to the `+x` side.
    Grating,
    /// 4 mm ball swept over the cap from the apex to the `+x` side.
    Sphere,
    /// Insertion plug held at each of the five grasp positions.
    Plug,
}

impl std::str::FromStr for DemoObject {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "screw" => Ok(DemoObject::Screw),
            "grating" => Ok(DemoObject::Grating),
            "sphere" => Ok(DemoObject::Sphere),
            "plug" => Ok(DemoObject::Plug),
            _ => Err(Error::Input(format!(
                "unknown demo object {s:?} (expected screw, grating, sphere or plug)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub frames: usize,
    /// Indentation at the deepest point; zero or negative keeps the object
    /// clear of the gel.
    pub press_mm: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            frames: 13,
            press_mm: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoFrame {
    /// Posed object parameter: roll angle, sweep angle or plug offset.
    pub parameter: f64,
    /// Difference images, one per camera.
    pub images: Vec<TactileImage>,
    /// Touched pixels per camera.
    pub contact_px: Vec<usize>,
    /// Raw depth, normals and image per camera.
    pub readings: Vec<Reading>,
}

pub const RACK_PERIOD_MM: f64 = 3.0;
pub const RACK_DEPTH_MM: f64 = 0.6;
pub const THREAD_PITCH_MM: f64 = 1.5;
pub const THREAD_DEPTH_MM: f64 = 0.5;
pub const BALL_RADIUS_MM: f64 = 4.0;

/// Plane touching the cap along direction `u` (unit, in the x-z plane),
/// carrying a sinusoid whose crests press `press` deep.
fn rolled_grating(sensor: &Sensor, phi: f64, press: f64, period: f64, depth: f64, phase: f64) -> Indenter {
    let gel = &sensor.config().gel;
    let u = Vec3::new(phi.sin(), 0.0, phi.cos());
    let c = gel.cap_center();
    let support = u.dot(&c) + gel.radius_mm();
    Indenter::Grating {
        normal: -u,
        offset: -(support - press) - depth,
        across: Vec3::new(phi.cos(), 0.0, -phi.sin()),
        period_mm: period,
        depth_mm: depth,
        phase_mm: phase,
    }
}

fn sweep_params(frames: usize, lo: f64, hi: f64) -> Vec<f64> {
    if frames == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..frames)
        .map(|i| lo + (hi - lo) * i as f64 / (frames - 1) as f64)
        .collect()
}

/// Renders a pose sweep of `object` seen by every camera.
pub fn render_demo(sensor: &Sensor, object: DemoObject, sweep: &SweepSettings) -> Result<Vec<DemoFrame>> {
    let cfg = sensor.config();
    if cfg.kind != SensorKind::MultiDirectional || cfg.gel.shape != GelShape::CappedCylinder {
        return Err(Error::Config("demo renders need the multi-directional sensor".into()));
    }
    if sweep.frames == 0 {
        return Err(Error::Input("need at least one frame".into()));
    }
    let press = sweep.press_mm;
    let gel = &cfg.gel;
    let c = gel.cap_center();
    let posed: Vec<(f64, Indenter)> = match object {
        DemoObject::Grating => sweep_params(sweep.frames, -90.0, 90.0)
            .into_iter()
            .map(|deg| {
                let phi = deg.to_radians();
                // Rolling without slip advances the rack by the arc length.
                (
                    deg,
                    rolled_grating(sensor, phi, press, RACK_PERIOD_MM, RACK_DEPTH_MM, gel.radius_mm() * phi),
                )
            })
            .collect(),
        DemoObject::Screw => sweep_params(sweep.frames, 0.0, THREAD_PITCH_MM)
            .into_iter()
            .map(|shift| {
                let u = Vec3::x();
                let across = Vec3::new(0.0, 0.05, 1.0).normalize();
                let ind = Indenter::Grating {
                    normal: -u,
                    offset: -(gel.radius_mm() - press) - THREAD_DEPTH_MM,
                    across,
                    period_mm: THREAD_PITCH_MM,
                    depth_mm: THREAD_DEPTH_MM,
                    phase_mm: c.z + shift,
                };
                (shift, ind)
            })
            .collect(),
        DemoObject::Sphere => sweep_params(sweep.frames, 0.0, 90.0)
            .into_iter()
            .map(|deg| {
                let phi: f64 = deg.to_radians();
                let dir = Vec3::new(phi.sin(), 0.0, phi.cos());
                let centre = c + dir * (gel.radius_mm() + BALL_RADIUS_MM - press);
                (
                    deg,
                    Indenter::Sphere {
                        center: centre,
                        radius: BALL_RADIUS_MM,
                    },
                )
            })
            .collect(),
        DemoObject::Plug => {
            let settings = InsertionSettings {
                plug_press_mm: [press, press],
                ..InsertionSettings::default()
            };
            let positions = settings.plug_positions_mm.clone();
            let idx: Vec<usize> = (0..sweep.frames)
                .map(|i| i * (positions.len() - 1) / (sweep.frames - 1).max(1))
                .collect();
            idx.into_iter()
                .map(|i| {
                    let s = InsertionScenario {
                        plug_position_index: i,
                        plug_offset_x_mm: positions[i],
                        gripper_perturb_mm: [0.0, 0.0],
                        floor_phase_mm: settings.floor_phase_mm,
                        outlet_mm: settings.outlet_mm,
                        top_press_mm: 1.0,
                        plug_press_mm: press,
                        seed: 0,
                    };
                    (positions[i], plug_indenter(sensor, &s, &settings))
                })
                .collect()
        }
    };
    let cameras: Vec<usize> = match object {
        DemoObject::Plug => vec![PLUG_CAMERA],
        _ => (0..cfg.num_cameras()).collect(),
    };
    let id = Pose::identity();
    posed
        .into_iter()
        .map(|(parameter, ind)| {
            let mut images = Vec::with_capacity(cameras.len());
            let mut contact_px = Vec::with_capacity(cameras.len());
            let mut readings = Vec::with_capacity(cameras.len());
            for &cam in &cameras {
                let reading = sensor.read(cam, &ind, &id)?;
                let rest = sensor.rest_depth(cam)?;
                contact_px.push(
                    reading
                        .depth
                        .indentation_from(rest)
                        .iter()
                        .filter(|&&v| v > CONTACT_EPS_MM)
                        .count(),
                );
                images.push(crate::optics::difference_image(&reading.image, sensor.reference(cam)?)?);
                readings.push(reading);
            }
            Ok(DemoFrame {
                parameter,
                images,
                contact_px,
                readings,
            })
        })
        .collect()
}

/// Frames stacked top to bottom, cameras left to right.
pub fn frame_strip(frames: &[DemoFrame]) -> RgbImage {
    let rows: Vec<RgbImage> = frames
        .iter()
        .map(|f| imageio::hstack(&f.images.iter().map(imageio::to_rgb8).collect::<Vec<_>>()))
        .collect();
    let w = rows.iter().map(|r| r.width()).max().unwrap_or(0);
    let h = rows.iter().map(|r| r.height()).sum();
    let mut out = RgbImage::new(w, h);
    let mut y = 0;
    for r in &rows {
        image::imageops::replace(&mut out, r, 0, y as i64);
        y += r.height();
    }
    out
}

/// Two polar plots side by side (vertical cut, horizontal cut): covered
/// directions green, blind directions red.
pub fn polar_diagram(report: &CoverageReport, size: u32) -> RgbImage {
    let mut out = RgbImage::from_pixel(2 * size, size, Rgb([255, 255, 255]));
    let r_out = 0.45 * size as f64;
    let r_in = 0.25 * size as f64;
    for (k, plane) in [CoveragePlane::Vertical, CoveragePlane::Horizontal]
        .into_iter()
        .enumerate()
    {
        let covered = |deg: f64| {
            report
                .covered_arcs
                .iter()
                .any(|a| a.plane == plane && deg >= a.start_deg && deg < a.end_deg)
        };
        let cx = k as f64 * size as f64 + 0.5 * size as f64;
        let cy = 0.5 * size as f64;
        for y in 0..size {
            for x in 0..size {
                let dx = x as f64 + 0.5 + k as f64 * size as f64 - cx;
                let dy = cy - (y as f64 + 0.5);
                let r = dx.hypot(dy);
                if r < r_in || r > r_out {
                    continue;
                }
                // Vertical: 0 deg points up; horizontal: 0 deg points right.
                let deg = match plane {
                    CoveragePlane::Vertical => dx.atan2(dy).to_degrees(),
                    CoveragePlane::Horizontal => dy.atan2(dx).to_degrees(),
                }
                .rem_euclid(360.0);
                let px = if covered(deg) {
                    Rgb([40, 160, 60])
                } else {
                    Rgb([210, 40, 40])
                };
                out.put_pixel(x + k as u32 * size, y, px);
            }
        }
    }
    out
}
