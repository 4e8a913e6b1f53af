//! Tactile features, regressors and benchmark metrics.

mod features;
mod metrics;
mod mlp;
pub mod model_io;
mod ridge;

pub use features::{area_resample, extract_features, FeatureVector, DEFAULT_DS};
pub use metrics::{abs_error_stats, quantile, ErrorStats};
pub use mlp::{train_mlp, Layer, Mlp, TrainConfig, TrainReport};
pub use ridge::{train_ridge, LinearModel};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Stacks feature vectors as rows.
pub fn feature_matrix(rows: &[FeatureVector]) -> Result<DMatrix<f64>> {
    let d = rows.first().map(FeatureVector::len).unwrap_or(0);
    if rows.iter().any(|r| r.blocks != rows[0].blocks) {
        return Err(Error::Input("feature layouts differ across samples".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |r, c| rows[r].values[c]))
}

/// Which regressor a benchmark fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ridge,
    Mlp,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(ModelKind::Ridge),
            "mlp" => Ok(ModelKind::Mlp),
            _ => Err(Error::Input(format!(
                "unknown model kind {s:?} (expected ridge or mlp)"
            ))),
        }
    }
}

/// Fits the requested model; ridge models come back as one-layer networks.
pub fn fit(kind: ModelKind, x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &TrainConfig) -> Result<Mlp> {
    match kind {
        ModelKind::Ridge => Ok(train_ridge(x, y, cfg.ridge_lambda)?.into()),
        ModelKind::Mlp => Ok(train_mlp(x, y, cfg)?.0),
    }
}
