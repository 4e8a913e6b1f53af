use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub median_abs_error: f64,
    pub iqr: f64,
    pub count: usize,
}

/// Median and interquartile range of `|prediction - truth|`.
pub fn abs_error_stats(predictions: &[f64], truth: &[f64]) -> Result<ErrorStats> {
    if predictions.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut errs: Vec<f64> = predictions.iter().zip(truth).map(|(p, t)| (p - t).abs()).collect();
    errs.sort_by(f64::total_cmp);
    Ok(ErrorStats {
        median_abs_error: quantile(&errs, 0.5),
        iqr: quantile(&errs, 0.75) - quantile(&errs, 0.25),
        count: errs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let t = [1.0, 2.0, 5.0];
        let s = abs_error_stats(&t, &t).unwrap();
        assert_eq!((s.median_abs_error, s.iqr), (0.0, 0.0));
    }

    #[test]
    fn midpoint_of_uniform_range() {
        // |U(22.5, 60) - 41.25| is U(0, 18.75): median 9.375.
        let n = 100_001;
        let truth: Vec<f64> = (0..n).map(|i| 22.5 + 37.5 * i as f64 / (n - 1) as f64).collect();
        let pred = vec![41.25; n];
        let s = abs_error_stats(&pred, &truth).unwrap();
        assert!((s.median_abs_error - 9.375).abs() < 1e-3);
        assert!((s.iqr - 9.375).abs() < 1e-3);
    }

    #[test]
    fn empty_is_input_error() {
        assert!(matches!(abs_error_stats(&[], &[]), Err(Error::Input(_))));
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }
}
