//! Weighted least squares for straight lines and bootstrap helpers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WlsResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    /// `Σ wᵢ (yᵢ − a xᵢ − b)²`
    pub chi2: f64,
    /// `1 − chi2 / Σ wᵢ (yᵢ − ȳ_w)²`
    pub r_squared: f64,
}

/// Minimizes `Σ wᵢ (yᵢ − a xᵢ − b)²` in closed form. Standard errors come
/// from the inverse of the normal matrix, i.e. the weights are taken to be
/// inverse variances.
pub fn wls(xs: &[f64], ys: &[f64], weights: &[f64]) -> Result<WlsResult> {
    let n = xs.len();
    if ys.len() != n || weights.len() != n {
        return Err(Error::Dimension(format!(
            "x, y and weights have lengths {}, {}, {}",
            n,
            ys.len(),
            weights.len()
        )));
    }
    if n < 3 {
        return Err(Error::Degenerate(format!("need at least 3 points, got {n}")));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::Degenerate("weights must be positive and finite".into()));
    }
    let s: f64 = weights.iter().sum();
    let x_bar = xs.iter().zip(weights).map(|(x, w)| w * x).sum::<f64>() / s;
    let y_bar = ys.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / s;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(weights) {
        let t = x - x_bar;
        stt += w * t * t;
        sty += w * t * (y - y_bar);
    }
    if !(stt > 0.0) {
        return Err(Error::Degenerate("all x values are equal".into()));
    }
    let slope = sty / stt;
    let intercept = y_bar - slope * x_bar;
    let mut chi2 = 0.0;
    let mut ss_tot = 0.0;
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(weights) {
        let r = y - intercept - slope * x;
        chi2 += w * r * r;
        ss_tot += w * (y - y_bar) * (y - y_bar);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - chi2 / ss_tot } else { 1.0 };
    Ok(WlsResult {
        slope,
        intercept,
        slope_stderr: (1.0 / stt).sqrt(),
        intercept_stderr: (1.0 / s + x_bar * x_bar / stt).sqrt(),
        chi2,
        r_squared,
    })
}

/// Bootstrap estimate of the pairwise disagreement fraction of a set of
/// outcomes. Each resample draws a fresh random pairing of the outcomes
/// (a shuffled list cut into consecutive pairs) and records the fraction of
/// pairs whose members differ. Returns the mean and standard deviation over
/// resamples.
pub fn bootstrap_fraction<L: PartialEq>(labels: &[L], n_resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if labels.len() < 2 {
        return Err(Error::Degenerate("need at least two outcomes to form a pair".into()));
    }
    if n_resamples < 100 {
        return Err(Error::Config(format!("need at least 100 resamples, got {n_resamples}")));
    }
    if labels.iter().all(|l| *l == labels[0]) {
        return Ok((0.0, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    let pairs = labels.len() / 2;
    let fs: Vec<f64> = (0..n_resamples)
        .map(|_| {
            idx.shuffle(&mut rng);
            let differ = idx
                .chunks_exact(2)
                .filter(|p| labels[p[0]] != labels[p[1]])
                .count();
            differ as f64 / pairs as f64
        })
        .collect();
    Ok(mean_sd(&fs))
}

/// Mean and (population) standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Variance of the sample mean of `values` under bootstrap resampling with
/// replacement.
pub fn bootstrap_mean_variance(values: &[f64], n_resamples: usize, seed: u64) -> f64 {
    if values.len() < 2 || n_resamples == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let means: Vec<f64> = (0..n_resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let (_, sd) = mean_sd(&means);
    sd * sd
}

/// `√(f (1 − f) / n)`.
pub fn binomial_stderr(f: f64, n: usize) -> f64 {
    (f * (1.0 - f) / n as f64).sqrt()
}
