//! Sample statistics and the Monte-Carlo driver.
//!
//! Samples are evaluated in parallel but always collected in sample-index
//! order and reduced sequentially, so every statistic is independent of the
//! number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Mean and standard error of a scalar sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                count: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se, count: n }
    }

    /// `|mean - target| <= k * se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// Evaluates `f(0), ..., f(n - 1)` on the current rayon pool and returns the
/// results in index order.
pub fn map_samples<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Ordinary least squares fit `y = intercept + slope * x`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "a line needs two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // var = 5/3, se = sqrt(5/12)
        assert!((e.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(e.within(2.5, 0.0));
    }

    #[test]
    fn ols_recovers_line() {
        let xs = [5.0, 6.0, 7.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let (slope, intercept) = ols(&xs, &ys);
        assert!((slope + 0.5).abs() < 1e-14);
        assert!((intercept - 3.0).abs() < 1e-13);
    }

    #[test]
    fn map_samples_is_ordered_and_pool_independent() {
        let f = |i: u64| (i as f64).sqrt();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| map_samples(1000, f));
        let b = four.install(|| map_samples(1000, f));
        assert_eq!(a, b);
        assert_eq!(a[9], 3.0);
    }
}
