use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::contact::{Indenter, Pose};
use crate::error::{Error, Result};
use crate::geometry::{SensorKind, Vec3, SIDE_POS_Y, TOP};
use crate::optics::TactileImage;
use crate::seed;
use crate::sensor::Sensor;

/// Camera that images the plug held against the finger.
pub const PLUG_CAMERA: usize = SIDE_POS_Y;
/// Camera that touches the textured floor.
pub const FLOOR_CAMERA: usize = TOP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InsertionSettings {
    pub plug_positions_mm: Vec<f64>,
    pub plug_jitter_mm: f64,
    pub perturb_half_range_mm: f64,
    pub floor_phase_mm: [f64; 2],
    pub outlet_mm: [f64; 2],
    pub texture_period_mm: f64,
    pub texture_depth_mm: f64,
    pub top_press_mm: [f64; 2],
    pub plug_press_mm: [f64; 2],
    pub ridge_height_mm: f64,
    pub ridge_dihedral_deg: f64,
    pub bump_radius_mm: f64,
    pub bump_height_mm: f64,
    /// Bump position relative to the ridge: along x, and along z from the cap centre.
    pub bump_offset_mm: [f64; 2],
    pub clearance_mm: f64,
    pub demo_noise_mm: f64,
    pub prong_length_mm: f64,
    /// Normal force per mm^1.5 of press.
    pub force_gain: f64,
    pub force_noise: f64,
    pub eval_trials: usize,
}

impl Default for InsertionSettings {
    fn default() -> Self {
        InsertionSettings {
            plug_positions_mm: vec![-2.75, -1.375, 0.0, 1.375, 2.75],
            plug_jitter_mm: 0.2,
            perturb_half_range_mm: 4.0,
            floor_phase_mm: [0.0, 0.0],
            outlet_mm: [40.0, 0.0],
            texture_period_mm: 10.0,
            texture_depth_mm: 1.5,
            top_press_mm: [0.9, 1.1],
            plug_press_mm: [0.2, 0.4],
            ridge_height_mm: 1.0,
            ridge_dihedral_deg: 90.0,
            bump_radius_mm: 1.5,
            bump_height_mm: 0.6,
            bump_offset_mm: [2.0, 4.0],
            clearance_mm: 1.5,
            demo_noise_mm: 0.2,
            prong_length_mm: 6.0,
            force_gain: 2.0,
            force_noise: 0.05,
            eval_trials: 30,
        }
    }
}

impl InsertionSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("insertion settings: {m}")));
        if self.plug_positions_mm.is_empty() {
            return bad("no plug positions");
        }
        if self.texture_period_mm <= 2.0 * self.perturb_half_range_mm {
            return bad("texture period must exceed the perturbation range");
        }
        if !(self.clearance_mm > 0.0) {
            return bad("clearance must be positive");
        }
        if !(self.demo_noise_mm >= 0.0 && self.force_noise >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if self.prong_length_mm < 2.0 {
            return bad("prong length must be at least the 2 mm gap threshold");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertionScenario {
    pub plug_position_index: usize,
    pub plug_offset_x_mm: f64,
    pub gripper_perturb_mm: [f64; 2],
    pub floor_phase_mm: [f64; 2],
    pub outlet_mm: [f64; 2],
    pub top_press_mm: f64,
    pub plug_press_mm: f64,
    pub seed: u64,
}

pub fn sample_insertion_scenario(
    mode: ScenarioMode,
    trial_index: usize,
    seed: u64,
    settings: &InsertionSettings,
) -> Result<InsertionScenario> {
    let n = settings.plug_positions_mm.len();
    let mut rng = seed::rng(seed, 1);
    let position = match mode {
        ScenarioMode::Eval => {
            if trial_index >= settings.eval_trials {
                return Err(Error::Input(format!(
                    "eval trial {trial_index} outside [0, {})",
                    settings.eval_trials
                )));
            }
            trial_index % n
        }
        ScenarioMode::Train => rng.random_range(0..n),
    };
    let j = settings.plug_jitter_mm;
    let p = settings.perturb_half_range_mm;
    let [tlo, thi] = settings.top_press_mm;
    let [plo, phi] = settings.plug_press_mm;
    Ok(InsertionScenario {
        plug_position_index: position,
        plug_offset_x_mm: settings.plug_positions_mm[position] + rng.random_range(-j..=j),
        gripper_perturb_mm: [rng.random_range(-p..=p), rng.random_range(-p..=p)],
        floor_phase_mm: settings.floor_phase_mm,
        outlet_mm: settings.outlet_mm,
        top_press_mm: rng.random_range(tlo..=thi),
        plug_press_mm: rng.random_range(plo..=phi),
        seed,
    })
}

#[derive(Debug, Clone)]
pub struct InsertionObservation {
    pub top_image: TactileImage,
    pub side_image: TactileImage,
    pub force_triple: [f64; 3],
}

/// Floor plate under the fingertip: crossed sinusoidal ridges whose crests
/// sit at `floor_phase - gripper_perturb` in the finger frame.
pub fn floor_indenter(sensor: &Sensor, s: &InsertionScenario, settings: &InsertionSettings) -> Indenter {
    let tip = sensor.config().gel.height_mm;
    let depth = settings.texture_depth_mm;
    // Crest tops reach `top_press_mm` past the fingertip apex.
    let offset = -(tip - s.top_press_mm) - depth;
    let grating = |across: Vec3, phase: f64| Indenter::Grating {
        normal: -Vec3::z(),
        offset,
        across,
        period_mm: settings.texture_period_mm,
        depth_mm: depth,
        phase_mm: phase,
    };
    Indenter::Composite(vec![
        grating(Vec3::x(), s.floor_phase_mm[0] - s.gripper_perturb_mm[0]),
        grating(Vec3::y(), s.floor_phase_mm[1] - s.gripper_perturb_mm[1]),
    ])
}

/// Plug body pressed against the +y side: a flat face carrying a vertical
/// ridge at `x = plug_offset_x` and an off-centre bump that breaks the
/// mirror symmetry.
pub fn plug_indenter(sensor: &Sensor, s: &InsertionScenario, settings: &InsertionSettings) -> Indenter {
    let gel = &sensor.config().gel;
    let face_y = gel.radius_mm() - s.plug_press_mm;
    let zc = gel.cap_center().z;
    let x = s.plug_offset_x_mm;
    let [bx, bz] = settings.bump_offset_mm;
    let r = settings.bump_radius_mm;
    Indenter::Composite(vec![
        Indenter::Plane {
            normal: -Vec3::y(),
            offset: -face_y,
        },
        Indenter::Edge {
            apex: Vec3::new(x, face_y - settings.ridge_height_mm, zc),
            axis: Vec3::z(),
            ridge_dir: -Vec3::y(),
            dihedral_deg: settings.ridge_dihedral_deg,
        },
        Indenter::Sphere {
            center: Vec3::new(x + bx, face_y - settings.bump_height_mm + r, zc + bz),
            radius: r,
        },
    ])
}

pub fn observe_insertion(
    sensor: &Sensor,
    s: &InsertionScenario,
    settings: &InsertionSettings,
) -> Result<InsertionObservation> {
    if sensor.config().kind != SensorKind::MultiDirectional {
        return Err(Error::Config("insertion needs the multi-directional sensor".into()));
    }
    let id = Pose::identity();
    let top_image = sensor.difference(FLOOR_CAMERA, &floor_indenter(sensor, s, settings), &id)?;
    let side_image = sensor.difference(PLUG_CAMERA, &plug_indenter(sensor, s, settings), &id)?;
    Ok(InsertionObservation {
        top_image,
        side_image,
        force_triple: force_triple(s, settings),
    })
}

/// Net tip force: normal component from the press depth plus sensor noise.
/// It carries no information about either offset.
pub fn force_triple(s: &InsertionScenario, settings: &InsertionSettings) -> [f64; 3] {
    let mut rng = seed::rng(s.seed, 2);
    let noise = Normal::new(0.0, settings.force_noise).expect("validated noise level");
    let fz = settings.force_gain * s.top_press_mm.powf(1.5);
    [
        noise.sample(&mut rng),
        noise.sample(&mut rng),
        fz + noise.sample(&mut rng),
    ]
}

/// Correction that exactly aligns prongs with the outlet.
pub fn noise_free_target(s: &InsertionScenario) -> [f64; 2] {
    [
        s.outlet_mm[0] - s.gripper_perturb_mm[0] - s.plug_offset_x_mm,
        s.outlet_mm[1] - s.gripper_perturb_mm[1],
    ]
}

/// Demonstrated correction: the exact target plus demonstrator noise.
pub fn expert_target(s: &InsertionScenario, settings: &InsertionSettings) -> [f64; 2] {
    let [x, y] = noise_free_target(s);
    if settings.demo_noise_mm == 0.0 {
        return [x, y];
    }
    let mut rng = seed::rng(s.seed, 3);
    let noise = Normal::new(0.0, settings.demo_noise_mm).expect("validated noise level");
    [x + noise.sample(&mut rng), y + noise.sample(&mut rng)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertionOutcome {
    pub success: bool,
    pub prongs_entered: bool,
    pub residual_gap_mm: f64,
    pub lateral_error_mm: [f64; 2],
}

/// Adjudicates one attempt. The prongs enter when both error components are
/// within the clearance; the seating gap then stays zero up to 75 % of the
/// clearance and rises linearly to 2 mm at the clearance.
pub fn simulate_insertion(
    s: &InsertionScenario,
    predicted: [f64; 2],
    settings: &InsertionSettings,
) -> InsertionOutcome {
    let truth = noise_free_target(s);
    let err = [predicted[0] - truth[0], predicted[1] - truth[1]];
    let m = err[0].abs().max(err[1].abs());
    let c = settings.clearance_mm;
    let entered = m <= c;
    let gap = if !entered {
        settings.prong_length_mm
    } else if m <= 0.75 * c {
        0.0
    } else {
        2.0 * (m - 0.75 * c) / (0.25 * c)
    };
    InsertionOutcome {
        success: entered && gap < 2.0,
        prongs_entered: entered,
        residual_gap_mm: gap,
        lateral_error_mm: err,
    }
}
