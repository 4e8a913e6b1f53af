//! A validated sensor configuration with per-camera rest-state caches.

use std::sync::OnceLock;

use crate::contact::{
    apply_indenter, elastic_smooth, surface_normals, undeformed_depth, DepthMap, Indenter, NormalMap, Pose,
};
use crate::error::Result;
use crate::geometry::SensorConfig;
use crate::optics::{difference_image, reference_image, render, TactileImage};

#[derive(Debug, Default)]
struct RestState {
    depth: OnceLock<DepthMap>,
    reference: OnceLock<TactileImage>,
}

/// Everything produced by one contact for one camera.
#[derive(Debug, Clone)]
pub struct Reading {
    pub depth: DepthMap,
    pub normals: NormalMap,
    pub image: TactileImage,
}

#[derive(Debug)]
pub struct Sensor {
    config: SensorConfig,
    sigma_mm: f64,
    rest: Vec<RestState>,
}

impl Sensor {
    pub fn new(config: SensorConfig, sigma_mm: f64) -> Result<Sensor> {
        config.validate()?;
        let rest = (0..config.num_cameras()).map(|_| RestState::default()).collect();
        Ok(Sensor { config, sigma_mm, rest })
    }

    pub fn config(&self) -> &SensorConfig {
        &self.config
    }

    pub fn sigma_mm(&self) -> f64 {
        self.sigma_mm
    }

    pub fn rest_depth(&self, camera_index: usize) -> Result<&DepthMap> {
        let slot = &self.rest[self.config.camera(camera_index).map(|_| camera_index)?].depth;
        if let Some(d) = slot.get() {
            return Ok(d);
        }
        let d = undeformed_depth(&self.config, camera_index)?;
        Ok(slot.get_or_init(|| d))
    }

    pub fn reference(&self, camera_index: usize) -> Result<&TactileImage> {
        let slot = &self.rest[self.config.camera(camera_index).map(|_| camera_index)?].reference;
        if let Some(img) = slot.get() {
            return Ok(img);
        }
        let img = reference_image(&self.config, camera_index)?;
        Ok(slot.get_or_init(|| img))
    }

    /// Presses `indenter` at `pose`, smooths, and renders one camera.
    pub fn read(&self, camera_index: usize, indenter: &Indenter, pose: &Pose) -> Result<Reading> {
        let rest = self.rest_depth(camera_index)?;
        let raw = apply_indenter(&self.config, camera_index, rest, indenter, pose)?;
        let depth = elastic_smooth(&raw, rest, self.sigma_mm)?;
        let normals = surface_normals(&self.config, &depth)?;
        let image = render(&self.config, camera_index, &normals, &depth)?;
        Ok(Reading { depth, normals, image })
    }

    /// Difference image of one camera against its cached reference.
    pub fn difference(&self, camera_index: usize, indenter: &Indenter, pose: &Pose) -> Result<TactileImage> {
        let reading = self.read(camera_index, indenter, pose)?;
        difference_image(&reading.image, self.reference(camera_index)?)
    }
}
