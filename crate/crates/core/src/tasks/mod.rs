//! Generative benchmark scenarios with ground truth and adjudication.

pub mod angle;
pub mod insertion;

pub use angle::{observe_angle, sample_angle_scenario, AngleObservation, AngleRange, AngleScenario, AngleSettings};
pub use insertion::{
    expert_target, noise_free_target, observe_insertion, sample_insertion_scenario, simulate_insertion,
    InsertionObservation, InsertionOutcome, InsertionScenario, InsertionSettings, ScenarioMode,
};
