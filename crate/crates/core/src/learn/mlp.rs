use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Fully connected network with ReLU between layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Start the output layer at zero instead of the fan-in uniform draw.
    pub zero_init_output: bool,
    /// Standardise inputs and targets before training; folded back into the
    /// first and last layers afterwards.
    pub standardize: bool,
    pub ridge_lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![256, 64],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            zero_init_output: false,
            standardize: true,
            ridge_lambda: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam moments must lie in [0, 1) with epsilon > 0".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch, in standardised units when enabled.
    pub loss_trace: Vec<f64>,
}

impl Mlp {
    /// Fan-in uniform initialisation `U(±1/√fan_in)`, zero biases.
    pub fn init(sizes: &[usize], seed: u64, zero_init_output: bool) -> Mlp {
        let mut rng = seed::rng(seed, 10);
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, out) = (sizes[i], sizes[i + 1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = if zero_init_output && i == n - 1 {
                    DMatrix::zeros(out, fan_in)
                } else {
                    DMatrix::from_fn(out, fan_in, |_, _| rng.random_range(-bound..bound))
                };
                Layer {
                    weights,
                    bias: DVector::zeros(out),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs()];
        s.extend(self.layers.iter().map(Layer::outputs));
        s
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map(Layer::outputs).unwrap_or(0)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Input("model has no layers".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Input("layer dimensions do not chain".into()));
            }
        }
        if self.layers.iter().any(|l| l.bias.len() != l.outputs()) {
            return Err(Error::Input("bias length does not match layer".into()));
        }
        if !self.is_finite() {
            return Err(Error::Input("model has non-finite parameters".into()));
        }
        Ok(())
    }

    /// Row-per-sample batch forward pass; returns every layer's activation,
    /// the input first.
    fn forward_all(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].clone() * layer.weights.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.bias.transpose();
            }
            if i + 1 < self.layers.len() {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward_all(x).pop().expect("at least one layer")
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let m = DMatrix::from_row_slice(1, x.len(), x);
        self.predict_batch(&m).iter().copied().collect()
    }

    /// Mean squared error over samples and outputs, and its gradient.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Vec<Layer>) {
        let acts = self.forward_all(x);
        let out = acts.last().expect("output");
        let scale = 1.0 / (y.nrows() * y.ncols()) as f64;
        let diff = out - y;
        let loss = diff.norm_squared() * scale;
        let mut delta = diff * (2.0 * scale);
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let gw = delta.transpose() * &acts[i];
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            if i > 0 {
                let mut back = &delta * &self.layers[i].weights;
                back.zip_apply(&acts[i], |d, a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
            grads.push(Layer { weights: gw, bias: gb });
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = p[k];
                k += 1;
            }
        }
    }
}

struct Standardizer {
    mean: DVector<f64>,
    std: DVector<f64>,
}

impl Standardizer {
    fn fit(x: &DMatrix<f64>, floor: f64) -> Standardizer {
        let n = x.nrows() as f64;
        let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
        let std = DVector::from_iterator(
            x.ncols(),
            x.column_iter()
                .zip(mean.iter())
                .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()),
        );
        let max = std.max();
        let floor = (floor * max).max(1e-12);
        Standardizer {
            mean,
            std: std.map(|s| s.max(floor)),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.mean[j]) / self.std[j]);
        }
        out
    }

    fn identity(d: usize) -> Standardizer {
        Standardizer {
            mean: DVector::zeros(d),
            std: DVector::from_element(d, 1.0),
        }
    }
}

/// Relative floor on per-feature input scales, so constant pixels are not
/// blown up to unit variance.
const INPUT_STD_FLOOR: f64 = 0.05;

fn check_data(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Input("no training samples".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::Input(format!(
            "{} feature rows for {} labels",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite training data".into()));
    }
    Ok(())
}

/// Mini-batch Adam on mean squared error. Deterministic in `cfg.seed`.
pub fn train_mlp(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    check_data(x, y)?;
    let (sx, sy) = if cfg.standardize {
        (Standardizer::fit(x, INPUT_STD_FLOOR), Standardizer::fit(y, 0.0))
    } else {
        (Standardizer::identity(x.ncols()), Standardizer::identity(y.ncols()))
    };
    let xn = sx.apply(x);
    let yn = sy.apply(y);
    let mut sizes = vec![x.ncols()];
    sizes.extend(&cfg.hidden);
    sizes.push(y.ncols());
    let mut model = Mlp::init(&sizes, cfg.seed, cfg.zero_init_output);
    let mut m: Vec<Layer> = model.layers.iter().map(zeros_like).collect();
    let mut v: Vec<Layer> = model.layers.iter().map(zeros_like).collect();
    let mut rng = seed::rng(cfg.seed, 11);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut step = 0i32;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let bx = xn.select_rows(batch);
            let by = yn.select_rows(batch);
            let (loss, grads) = model.loss_and_gradient(&bx, &by);
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "loss is not finite".into(),
                });
            }
            total += loss * batch.len() as f64;
            step += 1;
            let c1 = 1.0 - cfg.beta1.powi(step);
            let c2 = 1.0 - cfg.beta2.powi(step);
            for ((layer, g), (mi, vi)) in model.layers.iter_mut().zip(&grads).zip(m.iter_mut().zip(v.iter_mut())) {
                let w = (
                    layer.weights.as_mut_slice(),
                    mi.weights.as_mut_slice(),
                    vi.weights.as_mut_slice(),
                );
                adam(w.0, g.weights.as_slice(), w.1, w.2, cfg, c1, c2);
                let b = (
                    layer.bias.as_mut_slice(),
                    mi.bias.as_mut_slice(),
                    vi.bias.as_mut_slice(),
                );
                adam(b.0, g.bias.as_slice(), b.1, b.2, cfg, c1, c2);
            }
        }
        let mean = total / x.nrows() as f64;
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "parameters diverged".into(),
            });
        }
        trace.push(mean);
    }
    fold_standardization(&mut model, &sx, &sy);
    Ok((model, TrainReport { loss_trace: trace }))
}

fn zeros_like(l: &Layer) -> Layer {
    Layer {
        weights: DMatrix::zeros(l.outputs(), l.inputs()),
        bias: DVector::zeros(l.outputs()),
    }
}

fn adam(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: &TrainConfig, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        p[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.epsilon);
    }
}

fn fold_standardization(model: &mut Mlp, sx: &Standardizer, sy: &Standardizer) {
    let first = &mut model.layers[0];
    for (j, mut col) in first.weights.column_iter_mut().enumerate() {
        col /= sx.std[j];
    }
    first.bias -= &first.weights * &sx.mean;
    let last = model.layers.last_mut().expect("at least one layer");
    for (i, mut row) in last.weights.row_iter_mut().enumerate() {
        row *= sy.std[i];
    }
    for i in 0..last.bias.len() {
        last.bias[i] = last.bias[i] * sy.std[i] + sy.mean[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_data(n: usize, d: usize, k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = seed::rng(seed, 0);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        (x, y)
    }

    #[test]
    fn toy_net_has_five_parameters() {
        assert_eq!(Mlp::init(&[2, 1, 1], 0, false).num_params(), 5);
    }

    #[test]
    fn zero_labels_with_zero_output_stay_at_zero_loss() {
        let (x, _) = random_data(20, 3, 1, 1);
        let y = DMatrix::zeros(20, 1);
        let cfg = TrainConfig {
            hidden: vec![4],
            zero_init_output: true,
            standardize: false,
            epochs: 3,
            ..TrainConfig::default()
        };
        let (model, report) = train_mlp(&x, &y, &cfg).unwrap();
        assert!(report.loss_trace.iter().all(|l| *l == 0.0));
        assert!(model.predict_batch(&x).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn learns_noiseless_linear_target() {
        let (x, _) = random_data(400, 4, 1, 2);
        let w = [0.5, -1.0, 0.25, 2.0];
        let y = DMatrix::from_fn(400, 1, |r, _| (0..4).map(|j| w[j] * x[(r, j)]).sum());
        let cfg = TrainConfig {
            hidden: vec![],
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let (model, _) = train_mlp(&x, &y, &cfg).unwrap();
        let (xt, _) = random_data(100, 4, 1, 3);
        let yt = DMatrix::from_fn(100, 1, |r, _| (0..4).map(|j| w[j] * xt[(r, j)]).sum());
        let mse = (model.predict_batch(&xt) - yt).norm_squared() / 100.0;
        assert!(mse < 1e-4, "{mse}");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (x, y) = random_data(50, 6, 2, 4);
        let cfg = TrainConfig {
            hidden: vec![8, 4],
            epochs: 5,
            ..TrainConfig::default()
        };
        assert_eq!(train_mlp(&x, &y, &cfg).unwrap().0, train_mlp(&x, &y, &cfg).unwrap().0);
    }

    #[test]
    fn fold_matches_standardised_forward() {
        let (x, y) = random_data(30, 3, 2, 5);
        let x = x.map(|v| 10.0 * v + 3.0);
        let cfg = TrainConfig {
            hidden: vec![5],
            epochs: 2,
            ..TrainConfig::default()
        };
        let (model, _) = train_mlp(&x, &y, &cfg).unwrap();
        assert!(model.is_finite());
        assert_eq!(model.sizes(), vec![3, 5, 2]);
    }

    #[test]
    fn divergence_reports_epoch() {
        let (x, y) = random_data(10, 2, 1, 6);
        let x = x.map(|v| v * 1e300);
        let cfg = TrainConfig {
            hidden: vec![3],
            standardize: false,
            epochs: 2,
            ..TrainConfig::default()
        };
        match train_mlp(&x, &y, &cfg) {
            Err(Error::Input(_)) | Err(Error::Training { .. }) => {}
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
