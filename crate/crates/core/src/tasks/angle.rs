use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contact::{Indenter, Pose};
use crate::error::{Error, Result};
use crate::geometry::{GelShape, SensorKind, Vec3};
use crate::optics::TactileImage;
use crate::seed;
use crate::sensor::Sensor;

/// Indentation below which a pixel does not count as touched.
pub const CONTACT_EPS_MM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AngleRange {
    R1,
    R2,
    R3,
}

impl AngleRange {
    pub const ALL: [AngleRange; 3] = [AngleRange::R1, AngleRange::R2, AngleRange::R3];

    pub fn bounds_deg(self) -> (f64, f64) {
        match self {
            AngleRange::R1 => (0.0, 22.5),
            AngleRange::R2 => (22.5, 60.0),
            AngleRange::R3 => (60.0, 90.0),
        }
    }

    pub fn midpoint_deg(self) -> f64 {
        let (lo, hi) = self.bounds_deg();
        0.5 * (lo + hi)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> String {
        let (lo, hi) = self.bounds_deg();
        format!("{lo}-{hi}")
    }
}

impl std::str::FromStr for AngleRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "R1" => Ok(AngleRange::R1),
            "R2" => Ok(AngleRange::R2),
            "R3" => Ok(AngleRange::R3),
            _ => Err(Error::Input(format!(
                "unknown angle range {s:?} (expected R1, R2 or R3)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AngleSettings {
    pub press_depth_mm: [f64; 2],
    /// Half-width of the in-plane offset of the pressing surface.
    pub lateral_offset_mm: f64,
}

impl Default for AngleSettings {
    fn default() -> Self {
        AngleSettings {
            press_depth_mm: [0.5, 1.5],
            lateral_offset_mm: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleScenario {
    pub theta_deg: f64,
    pub range: AngleRange,
    pub press_depth_mm: f64,
    pub lateral_offset_mm: [f64; 2],
    pub seed: u64,
}

pub fn sample_angle_scenario(range: AngleRange, seed: u64, settings: &AngleSettings) -> AngleScenario {
    let mut rng = seed::rng(seed, 0);
    let (lo, hi) = range.bounds_deg();
    let [dlo, dhi] = settings.press_depth_mm;
    let l = settings.lateral_offset_mm;
    AngleScenario {
        theta_deg: rng.random_range(lo..=hi),
        range,
        press_depth_mm: rng.random_range(dlo..=dhi),
        lateral_offset_mm: [rng.random_range(-l..=l), rng.random_range(-l..=l)],
        seed,
    }
}

#[derive(Debug, Clone)]
pub struct AngleObservation {
    /// Difference images, one per camera in sensor order.
    pub images: Vec<TactileImage>,
    pub label_deg: f64,
    /// Touched pixels per camera.
    pub contact_px: Vec<usize>,
}

/// Pressing plane for the scenario, with the lateral offset as a pose.
pub fn angle_indenter(sensor: &Sensor, scenario: &AngleScenario) -> Result<(Indenter, Pose)> {
    let cfg = sensor.config();
    let skin = cfg.gel.skin_thickness_mm;
    let d = scenario.press_depth_mm;
    if !(d > 0.0 && d < skin - crate::contact::OVER_PENETRATION_MARGIN_MM) {
        return Err(Error::Input(format!("press depth {d} mm outside (0, {})", skin - 1.0)));
    }
    let t = scenario.theta_deg.to_radians();
    let (normal, offset) = match (cfg.kind, cfg.gel.shape) {
        (SensorKind::MultiDirectional, GelShape::CappedCylinder) => {
            // Plane whose normal makes angle θ with the finger axis, pressed
            // d into the cap along that normal.
            let u = Vec3::new(t.sin(), 0.0, t.cos());
            let c = cfg.gel.cap_center();
            (-u, -(u.dot(&c) + cfg.gel.radius_mm() - d))
        }
        (SensorKind::FlatBaseline, GelShape::FlatPad) => {
            // Plane hinged at the pad's +x edge, indenting that edge by d.
            let half = 0.5 * cfg.gel.diameter_mm;
            let n = Vec3::new(-t.sin(), 0.0, -t.cos());
            (n, -t.sin() * half - t.cos() * (skin - d))
        }
        _ => return Err(Error::Config("sensor kind does not match gel shape".into())),
    };
    // An in-plane shift of an unbounded plane leaves the contact unchanged;
    // it is applied so the sampled nuisance parameter is honoured.
    let e1 = Vec3::y();
    let e2 = normal.cross(&e1);
    let [a, b] = scenario.lateral_offset_mm;
    let shift = e1 * a + e2 * b;
    let pose = Pose::translation(shift.x, shift.y, shift.z);
    Ok((Indenter::Plane { normal, offset }, pose))
}

pub fn observe_angle(sensor: &Sensor, scenario: &AngleScenario, cameras: &[usize]) -> Result<AngleObservation> {
    let (indenter, pose) = angle_indenter(sensor, scenario)?;
    let mut images = Vec::with_capacity(cameras.len());
    let mut contact_px = Vec::with_capacity(cameras.len());
    for &cam in cameras {
        let reading = sensor.read(cam, &indenter, &pose)?;
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
    }
    Ok(AngleObservation {
        images,
        label_deg: scenario.theta_deg,
        contact_px,
    })
}
