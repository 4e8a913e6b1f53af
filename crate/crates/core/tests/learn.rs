use nalgebra::DMatrix;
use omnitact::learn::{
    area_resample, extract_features, feature_matrix, model_io, quantile, train_mlp, train_ridge, LinearModel, Mlp,
    TrainConfig,
};
use omnitact::optics::TactileImage;
use omnitact::Grid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn flat_gradient(m: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let (_, grads) = m.loss_and_gradient(x, y);
    grads
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
        .collect()
}

fn numeric_gradient(m: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>, h: f64) -> Vec<f64> {
    let p = m.params();
    let mut probe = m.clone();
    (0..p.len())
        .map(|i| {
            let mut q = p.clone();
            q[i] = p[i] + h;
            probe.set_params(&q);
            let up = probe.loss_and_gradient(x, y).0;
            q[i] = p[i] - h;
            probe.set_params(&q);
            let down = probe.loss_and_gradient(x, y).0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn ridge_objective(m: &LinearModel, x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> f64 {
    let r = m.predict_batch(x) - y;
    r.norm_squared() / x.nrows() as f64 + lambda * m.weights.norm_squared()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|u| u * u).sum::<f64>().sqrt().max(1e-12);
    num / den
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backprop_matches_finite_differences(seed in 0u64..10_000, n in 2usize..6) {
        let m = Mlp::init(&[4, 7, 5, 2], seed, false);
        let x = DMatrix::from_fn(n, 4, |r, c| (seed as f64 + 1.3 * r as f64 + 0.7 * c as f64).sin());
        let y = DMatrix::from_fn(n, 2, |r, c| ((r + 2 * c) as f64 * 0.37).cos());
        let g = flat_gradient(&m, &x, &y);
        let coarse = numeric_gradient(&m, &x, &y, 1e-5);
        let fine = numeric_gradient(&m, &x, &y, 5e-6);
        // A ReLU kink inside the stencil makes the two step sizes disagree.
        prop_assume!(rel_err(&coarse, &fine) < 1e-7);
        prop_assert!(rel_err(&g, &fine) < 1e-4, "{}", rel_err(&g, &fine));
    }

    #[test]
    fn noise_block_never_raises_ridge_objective(seed in 0u64..1000, n in 6usize..30, d in 1usize..6, k in 1usize..5, lambda in 1e-4f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, 2, |r, c| x[(r, c % d)] * 1.5 - 0.3 + rng.random_range(-0.2..0.2));
        let noise = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let mut wide = DMatrix::zeros(n, d + k);
        wide.view_mut((0, 0), (n, d)).copy_from(&x);
        wide.view_mut((0, d), (n, k)).copy_from(&noise);
        let narrow = ridge_objective(&train_ridge(&x, &y, lambda).unwrap(), &x, &y, lambda);
        let widened = ridge_objective(&train_ridge(&wide, &y, lambda).unwrap(), &wide, &y, lambda);
        prop_assert!(widened <= narrow * (1.0 + 1e-9) + 1e-12, "{} > {}", widened, narrow);
    }

    #[test]
    fn resample_preserves_mean(rows in 4usize..40, cols in 4usize..40, dr in 1usize..16, dc in 1usize..16, s in 0u64..1000) {
        let src = Grid::from_fn(rows, cols, |r, c| ((r * 31 + c * 17) as u64 ^ s) as f64 % 7.0);
        let dst = area_resample(&src, dr, dc);
        let a = src.iter().sum::<f64>() / src.len() as f64;
        let b = dst.iter().sum::<f64>() / dst.len() as f64;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn quantiles_are_monotone(mut v in prop::collection::vec(-1e3f64..1e3, 1..50), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(quantile(&v, lo) <= quantile(&v, hi));
        prop_assert!(quantile(&v, 0.0) == v[0] && quantile(&v, 1.0) == v[v.len() - 1]);
    }

    #[test]
    fn model_file_round_trips(seed in 0u64..1000, a in 1usize..9, b in 1usize..9, c in 1usize..4) {
        let m = Mlp::init(&[a, b, c], seed, false);
        let back = model_io::decode(&model_io::encode(&m).unwrap()).unwrap();
        let x: Vec<f64> = (0..a).map(|i| i as f64 * 0.1).collect();
        for (p, q) in m.predict(&x).iter().zip(back.predict(&x)) {
            prop_assert!((p - q).abs() < 1e-5);
        }
    }
}

#[test]
fn ridge_as_network_predicts_identically() {
    let x = DMatrix::from_fn(25, 3, |r, c| ((r * 3 + c) as f64).sin());
    let y = DMatrix::from_fn(25, 1, |r, _| x[(r, 0)] - 2.0 * x[(r, 2)] + 1.0);
    let lin = train_ridge(&x, &y, 1e-6).unwrap();
    let direct = lin.predict_batch(&x);
    let net: Mlp = lin.into();
    assert!((net.predict_batch(&x) - direct).abs().max() < 1e-12);
}

fn toy_data() -> (DMatrix<f64>, DMatrix<f64>) {
    let x = DMatrix::from_fn(48, 6, |r, c| ((r * 7 + c * 3) as f64 * 0.21).sin());
    let y = DMatrix::from_fn(48, 2, |r, c| x[(r, c)] - 0.5 * x[(r, c + 3)]);
    (x, y)
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        hidden: vec![8, 4],
        epochs: 5,
        seed,
        ..TrainConfig::default()
    }
}

fn bits(m: &Mlp) -> Vec<u64> {
    m.params().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn training_is_bit_identical_for_a_seed() {
    let (x, y) = toy_data();
    let a = train_mlp(&x, &y, &small_config(3)).unwrap().0;
    let b = train_mlp(&x, &y, &small_config(3)).unwrap().0;
    assert_eq!(bits(&a), bits(&b));
    let c = train_mlp(&x, &y, &small_config(4)).unwrap().0;
    assert_ne!(bits(&a), bits(&c));
    let r1: Mlp = train_ridge(&x, &y, 1e-3).unwrap().into();
    let r2: Mlp = train_ridge(&x, &y, 1e-3).unwrap().into();
    assert_eq!(bits(&r1), bits(&r2));
}

#[test]
fn masking_commutes_with_feature_construction() {
    let image = |cam: usize, s: usize| TactileImage {
        camera_index: cam,
        pixels: Grid::from_fn(16, 16, |r, c| {
            let v = (((r * 5 + c * 3 + s * 11 + cam * 7) % 17) as f64) / 17.0;
            [v, 1.0 - v, 0.5]
        }),
    };
    let mut masked = Vec::new();
    let mut top_only = Vec::new();
    for s in 0..20 {
        let all = [image(0, s), image(1, s), image(3, s)];
        masked.push(extract_features(&all, &[0], (4, 4)).unwrap());
        top_only.push(extract_features(&all[..1], &[0], (4, 4)).unwrap());
    }
    let xm = feature_matrix(&masked).unwrap();
    let xt = feature_matrix(&top_only).unwrap();
    assert_eq!(xm, xt);
    let y = DMatrix::from_fn(20, 1, |r, _| r as f64 * 0.1);
    let a = train_mlp(&xm, &y, &small_config(9)).unwrap().0;
    let b = train_mlp(&xt, &y, &small_config(9)).unwrap().0;
    assert_eq!(bits(&a), bits(&b));
}
