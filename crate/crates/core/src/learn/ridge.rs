use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mlp::{Layer, Mlp};
use crate::error::{Error, Result};

/// Affine map `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// `out × in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl LinearModel {
    pub fn predict_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x * self.weights.transpose();
        for mut row in out.row_iter_mut() {
            row += self.bias.transpose();
        }
        out
    }
}

impl From<LinearModel> for Mlp {
    fn from(m: LinearModel) -> Mlp {
        Mlp {
            layers: vec![Layer {
                weights: m.weights,
                bias: m.bias,
            }],
        }
    }
}

/// Minimises `(1/n) Σ ‖y - W x - b‖² + λ ‖W‖²` in closed form. The
/// intercept is not penalised. Uses the `n × n` dual system when there are
/// fewer samples than features.
pub fn train_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<LinearModel> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::Input("no training samples".into()));
    }
    if y.nrows() != n {
        return Err(Error::Input(format!("{n} feature rows for {} labels", y.nrows())));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Input(format!("ridge lambda must be non-negative, got {lambda}")));
    }
    let nf = n as f64;
    let xm = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / nf));
    let ym = DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.sum() / nf));
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= xm.transpose();
    }
    let mut yc = y.clone();
    for mut row in yc.row_iter_mut() {
        row -= ym.transpose();
    }
    let singular = || {
        Error::Numeric(format!(
            "ridge normal equations are singular at lambda = {lambda}; use lambda > 0"
        ))
    };
    // W^T (d × k).
    let wt = if n < d {
        let mut gram = &xc * xc.transpose() / nf;
        for i in 0..n {
            gram[(i, i)] += lambda;
        }
        let alpha = gram.cholesky().ok_or_else(singular)?.solve(&(&yc / nf));
        xc.transpose() * alpha
    } else {
        let mut cov = xc.transpose() * &xc / nf;
        for i in 0..d {
            cov[(i, i)] += lambda;
        }
        cov.cholesky().ok_or_else(singular)?.solve(&(xc.transpose() * &yc / nf))
    };
    if wt.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    let weights = wt.transpose();
    let bias = &ym - &weights * &xm;
    Ok(LinearModel { weights, bias })
}
