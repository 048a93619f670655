//! Batch-means estimators for correlated Monte Carlo series.

use serde::Serialize;

/// Default number of batches; never fewer than [`MIN_BATCHES`].
pub const DEFAULT_BATCHES: usize = 32;
pub const MIN_BATCHES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    pub batches: usize,
}

impl Estimate {
    /// Standard errors between `self` and a target.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target) / self.se
    }

    pub fn underpowered(&self) -> bool {
        self.batches < MIN_BATCHES || !self.se.is_finite()
    }
}

fn batch_count(n: usize) -> usize {
    if n >= DEFAULT_BATCHES {
        DEFAULT_BATCHES
    } else {
        n
    }
}

/// Mean with batch-means standard error.
pub fn batch_means(xs: &[f64]) -> Estimate {
    batch_means_with(xs, batch_count(xs.len()))
}

pub fn batch_means_with(xs: &[f64], batches: usize) -> Estimate {
    let n = xs.len();
    let mean = if n == 0 { f64::NAN } else { xs.iter().sum::<f64>() / n as f64 };
    if batches < 2 || n < batches {
        return Estimate { mean, se: f64::INFINITY, n, batches };
    }
    let size = n / batches;
    let used = size * batches;
    let bm: Vec<f64> = (0..batches).map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let gm = xs[..used].iter().sum::<f64>() / used as f64;
    let var = bm.iter().map(|m| (m - gm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Estimate { mean, se: (var / batches as f64).sqrt(), n, batches }
}

/// Covariance of paired series; the error comes from per-batch covariances.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Estimate {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let batches = batch_count(n);
    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let cov_of = |a: &[f64], b: &[f64]| {
        let (ma, mb) = (mean_of(a), mean_of(b));
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
    };
    if n < 2 * batches || batches < 2 {
        let c = if n >= 2 { cov_of(xs, ys) } else { f64::NAN };
        return Estimate { mean: c, se: f64::INFINITY, n, batches };
    }
    let size = n / batches;
    let per: Vec<f64> = (0..batches)
        .map(|b| cov_of(&xs[b * size..(b + 1) * size], &ys[b * size..(b + 1) * size]))
        .collect();
    let m = mean_of(&per);
    let var = per.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Estimate { mean: cov_of(xs, ys), se: (var / batches as f64).sqrt(), n, batches }
}

/// Correlation coefficient with the covariance error scaled by the marginal deviations.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Estimate {
    let c = covariance(xs, ys);
    let sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let s = sd(xs) * sd(ys);
    if s == 0.0 {
        return Estimate { mean: 0.0, se: 0.0, ..c };
    }
    Estimate { mean: c.mean / s, se: c.se / s, ..c }
}

/// Mergeable count / sum / sum-of-squares accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        Moments { count: self.count + other.count, sum: self.sum + other.sum, sum_sq: self.sum_sq + other.sum_sq }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.sum_sq / self.count as f64 - m * m) * self.count as f64 / (self.count as f64 - 1.0)
    }
}

/// Sample skewness and excess kurtosis.
pub fn skew_kurtosis(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}
