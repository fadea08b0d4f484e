//! Lyapunov spectra of the gradient-descent map by treppen iteration.
//!
//! The tangent map is `J(θ) = I − η H(θ)`. Starting from an orthonormal
//! `Q⁰`, each step factors `J(θⱼ) Qʲ = Qʲ⁺¹ Rʲ` and accumulates
//! `ln Rʲᵢᵢ`. With `Q⁰ = (e₁ e₂ e₃ e₄)` and `θ₀ ∈ P₊`, the first two columns
//! stay inside `P₊` (the plane is invariant, so its tangent space is too)
//! and the exponents split into two longitudinal and two transverse ones
//! without computing Lyapunov vectors.

use serde::Serialize;

use crate::dynamics::{gd_step, is_diverged, TrainConfig, DEFAULT_DISCARD_TAIL};
use crate::error::{Error, Result};
use crate::linalg::{qr, Mat4};
use crate::model::{hessian_unchecked, Dataset, ModelConfig, ParamVec};
use crate::stats::{self, WlsResult};
use crate::symmetry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    Longitudinal,
    Transverse,
}

/// Number of directions tangent to `P₊`.
pub const LONGITUDINAL_DIM: usize = 2;

pub const LABELS: [Direction; 4] = [
    Direction::Longitudinal,
    Direction::Longitudinal,
    Direction::Transverse,
    Direction::Transverse,
];

/// Orthonormal tangent frame carried along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QrBasis {
    pub q: Mat4,
}

impl QrBasis {
    /// The frame adapted to `P₊`: longitudinal columns first.
    pub fn plus_adapted() -> Self {
        QrBasis {
            q: symmetry::plus_basis(),
        }
    }

    pub fn label(&self, column: usize) -> Direction {
        LABELS[column]
    }
}

pub fn jacobian(theta: &ParamVec, eta: f64, data: &Dataset, model: &ModelConfig) -> Result<Mat4> {
    if !theta.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(jacobian_unchecked(theta, eta, data, model))
}

fn jacobian_unchecked(theta: &ParamVec, eta: f64, data: &Dataset, model: &ModelConfig) -> Mat4 {
    Mat4::identity().sub(&hessian_unchecked(theta, data, model).scale(eta))
}

/// One treppen step: QR of `J·Q` with a non-negative diagonal, returning the
/// new frame and `ln Rᵢᵢ`.
pub fn treppen_step(basis: &QrBasis, j: &Mat4) -> Result<(QrBasis, [f64; 4])> {
    let (q, r) = qr(&j.mul(&basis.q)).ok_or(Error::DegenerateTangentFlow { step: 0 })?;
    Ok((QrBasis { q }, std::array::from_fn(|i| r.0[i][i].ln())))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumOptions {
    /// Maximum number of map iterations.
    pub epochs: usize,
    pub divergence_threshold: f64,
    /// Steps dropped from the end of the stream when the trajectory escaped,
    /// so that the escape itself does not contaminate the statistics.
    pub discard_tail: usize,
    /// Shortest usable stream; shorter ones are an error.
    pub min_steps: usize,
    pub keep_stream: bool,
    pub model: ModelConfig,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            epochs: 100_000,
            divergence_threshold: crate::dynamics::DEFAULT_DIVERGENCE_THRESHOLD,
            discard_tail: DEFAULT_DISCARD_TAIL,
            min_steps: 1000,
            keep_stream: false,
            model: ModelConfig::default(),
        }
    }
}

impl SpectrumOptions {
    pub fn from_train(cfg: &TrainConfig) -> Self {
        SpectrumOptions {
            epochs: cfg.epochs,
            divergence_threshold: cfg.divergence_threshold,
            model: cfg.model,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub lambdas: [f64; 4],
    pub labels: [Direction; 4],
    /// Number of steps averaged over.
    pub steps: usize,
    /// Epoch at which the trajectory escaped, if it did.
    pub diverged_at: Option<usize>,
    /// `(1/T) Σ ln |det J(θₜ)|` over the same steps.
    pub mean_log_det: f64,
    #[serde(skip)]
    pub stream: Option<Vec<[f64; 4]>>,
}

impl LyapunovReport {
    pub fn max_exponent(&self) -> f64 {
        self.lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn transverse(&self) -> [f64; 2] {
        [self.lambdas[2], self.lambdas[3]]
    }

    pub fn longitudinal(&self) -> [f64; 2] {
        [self.lambdas[0], self.lambdas[1]]
    }
}

/// Raw per-step output of the QR stream.
#[derive(Clone, Debug)]
pub struct LogStream {
    pub log_diag: Vec<[f64; 4]>,
    pub log_det: Vec<f64>,
    pub diverged_at: Option<usize>,
    /// Largest transverse component of the longitudinal columns seen.
    pub max_longitudinal_leak: f64,
}

/// Runs the trajectory and the QR stream together from frame `q0`.
pub fn log_stream(
    theta0: &ParamVec,
    eta: f64,
    data: &Dataset,
    q0: &QrBasis,
    opts: &SpectrumOptions,
) -> Result<LogStream> {
    if !theta0.is_finite() {
        return Err(Error::NonFinite);
    }
    // The stream runs in the coordinates of the P₊-adapted basis. There a
    // Jacobian taken at a point of P₊ has exactly zero off-diagonal blocks
    // and the Householder steps keep the longitudinal columns exactly
    // longitudinal, so no rounding leak can be amplified by an expanding
    // transverse direction.
    let qp = symmetry::plus_basis();
    let qpt = qp.transpose();
    let mut theta = *theta0;
    let mut basis = QrBasis { q: qpt.mul(&q0.q) };
    let mut log_diag = Vec::with_capacity(opts.epochs.min(1 << 22));
    let mut log_det = Vec::with_capacity(opts.epochs.min(1 << 22));
    let mut diverged_at = None;
    let mut leak: f64 = 0.0;
    for step in 0..opts.epochs {
        let j = jacobian_unchecked(&theta, eta, data, &opts.model);
        let jp = qpt.mul(&j).mul(&qp);
        let (next, ld) = treppen_step(&basis, &jp).map_err(|_| Error::DegenerateTangentFlow { step })?;
        basis = next;
        log_diag.push(ld);
        log_det.push(j.det().abs().ln());
        for c in 0..LONGITUDINAL_DIM {
            for r in LONGITUDINAL_DIM..4 {
                leak = leak.max(basis.q.0[r][c].abs());
            }
        }
        theta = gd_step(&theta, data, &opts.model, eta);
        if is_diverged(&theta.0, opts.divergence_threshold) {
            diverged_at = Some(step + 1);
            break;
        }
    }
    if diverged_at.is_some() {
        let keep = log_diag.len().saturating_sub(opts.discard_tail);
        log_diag.truncate(keep);
        log_det.truncate(keep);
    }
    Ok(LogStream {
        log_diag,
        log_det,
        diverged_at,
        max_longitudinal_leak: leak,
    })
}

pub fn report_from_stream(stream: LogStream, keep: bool) -> LyapunovReport {
    let t = stream.log_diag.len();
    let mut sums = [0.0; 4];
    for ld in &stream.log_diag {
        for i in 0..4 {
            sums[i] += ld[i];
        }
    }
    let det_sum: f64 = stream.log_det.iter().sum();
    let n = t.max(1) as f64;
    LyapunovReport {
        lambdas: sums.map(|s| s / n),
        labels: LABELS,
        steps: t,
        diverged_at: stream.diverged_at,
        mean_log_det: det_sum / n,
        stream: keep.then_some(stream.log_diag),
    }
}

/// Lyapunov spectrum along the trajectory from `theta0` using the
/// `P₊`-adapted initial frame. Columns 1–2 are longitudinal, 3–4 transverse.
pub fn spectrum(theta0: &ParamVec, eta: f64, data: &Dataset, opts: &SpectrumOptions) -> Result<LyapunovReport> {
    spectrum_from(theta0, eta, data, &QrBasis::plus_adapted(), opts)
}

/// As [`spectrum`] with an arbitrary initial frame.
pub fn spectrum_from(
    theta0: &ParamVec,
    eta: f64,
    data: &Dataset,
    q0: &QrBasis,
    opts: &SpectrumOptions,
) -> Result<LyapunovReport> {
    let stream = log_stream(theta0, eta, data, q0, opts)?;
    let usable = stream.log_diag.len();
    let report = report_from_stream(stream, opts.keep_stream);
    if usable < opts.min_steps.max(1) {
        return Err(Error::TooShort {
            usable,
            required: opts.min_steps.max(1),
            partial: Some(Box::new(report)),
        });
    }
    Ok(report)
}

/// Finite-time exponents of one column over non-overlapping windows of a
/// single continuous stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FtleSeries {
    pub window: usize,
    pub exponent_index: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Infinite-time estimate the fluctuations are measured against: the
    /// full-stream average.
    pub reference: f64,
    /// `⟨(λᵀ − λ)²⟩` about `reference`.
    pub mean_sq_fluctuation: f64,
}

impl FtleSeries {
    pub fn positive_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|&&v| v > 0.0).count() as f64 / self.values.len() as f64
    }
}

/// Cuts a stream of `ln Rᵢᵢ` into `⌊len / T⌋` windows of length `T`.
pub fn ftle_from_stream(log_diag: &[[f64; 4]], window: usize, exponent_index: usize) -> Result<FtleSeries> {
    if exponent_index >= 4 {
        return Err(Error::Config(format!("exponent index {exponent_index} out of range")));
    }
    if window == 0 || window > log_diag.len() {
        return Err(Error::Config(format!(
            "window {window} does not fit in a stream of {} steps",
            log_diag.len()
        )));
    }
    let reference = log_diag.iter().map(|d| d[exponent_index]).sum::<f64>() / log_diag.len() as f64;
    let values: Vec<f64> = log_diag
        .chunks_exact(window)
        .map(|c| c.iter().map(|d| d[exponent_index]).sum::<f64>() / window as f64)
        .collect();
    Ok(series_from_values(window, exponent_index, values, reference))
}

pub fn series_from_values(window: usize, exponent_index: usize, values: Vec<f64>, reference: f64) -> FtleSeries {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let msf = values.iter().map(|v| (v - reference) * (v - reference)).sum::<f64>() / n;
    FtleSeries {
        window,
        exponent_index,
        values,
        mean,
        reference,
        mean_sq_fluctuation: msf,
    }
}

/// Runs the stream from `theta0` and windows it.
pub fn ftle_windows(
    theta0: &ParamVec,
    eta: f64,
    data: &Dataset,
    window: usize,
    exponent_index: usize,
    opts: &SpectrumOptions,
) -> Result<FtleSeries> {
    let stream = log_stream(theta0, eta, data, &QrBasis::plus_adapted(), opts)?;
    ftle_from_stream(&stream.log_diag, window, exponent_index)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionFit {
    pub d: f64,
    pub stderr: f64,
    /// Weighted coefficient of determination of the linear fit.
    pub r_squared: f64,
    pub wls: WlsResult,
    /// `(T, 1/MSF, weight)` for every window length used.
    pub points: Vec<(usize, f64, f64)>,
}

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 200;

/// Fits `1/⟨(λᵀ − λ)²⟩ = T / (2D)` by weighted least squares over the series
/// whose window length lies in `t_range` (inclusive). Weights are inverse
/// variances of `1/MSF`, estimated by bootstrap over windows.
pub fn diffusion_fit(
    series_by_t: &[FtleSeries],
    t_range: (usize, usize),
    n_resamples: usize,
    seed: u64,
) -> Result<DiffusionFit> {
    let selected: Vec<&FtleSeries> = series_by_t
        .iter()
        .filter(|s| s.window >= t_range.0 && s.window <= t_range.1)
        .collect();
    let mut distinct: Vec<usize> = selected.iter().map(|s| s.window).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 distinct window lengths in [{}, {}], found {}",
            t_range.0,
            t_range.1,
            distinct.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut vars = Vec::new();
    for s in &selected {
        let m = s.mean_sq_fluctuation;
        if !(m > 0.0) {
            return Err(Error::Degenerate(format!("non-positive fluctuation at T = {}", s.window)));
        }
        let sq: Vec<f64> = s.values.iter().map(|v| (v - s.reference) * (v - s.reference)).collect();
        let var_m = stats::bootstrap_mean_variance(&sq, n_resamples, crate::seed::derive(seed, "msf", s.window as u64));
        // delta method for 1/m
        let floor = (f64::EPSILON * m).powi(2);
        vars.push(var_m.max(floor) / m.powi(4));
        xs.push(s.window as f64);
        ys.push(1.0 / m);
    }
    let weights: Vec<f64> = vars.iter().map(|v| 1.0 / v).collect();
    let wls = stats::wls(&xs, &ys, &weights)?;
    if !(wls.slope > 0.0) {
        return Err(Error::Degenerate(format!("non-positive slope {}", wls.slope)));
    }
    let d = 1.0 / (2.0 * wls.slope);
    let stderr = wls.slope_stderr / (2.0 * wls.slope * wls.slope);
    let points = selected
        .iter()
        .zip(ys.iter().zip(&weights))
        .map(|(s, (&y, &w))| (s.window, y, w))
        .collect();
    Ok(DiffusionFit {
        d,
        stderr,
        r_squared: wls.r_squared,
        wls,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::canonical;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opts(epochs: usize) -> SpectrumOptions {
        SpectrumOptions {
            epochs,
            min_steps: 1,
            ..Default::default()
        }
    }

    #[test]
    fn jacobian_examples() {
        let data = canonical();
        let m = ModelConfig::default();
        let t = ParamVec([0.2, -0.4, 0.9, 0.1]);
        assert_eq!(jacobian(&t, 0.0, &data, &m).unwrap(), Mat4::identity());
        let j = jacobian(&t, 2.5, &data, &m).unwrap();
        assert_eq!(j, j.transpose());
    }

    #[test]
    fn jacobian_matches_finite_differences_of_the_map() {
        let data = canonical();
        let m = ModelConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..50 {
            let t = ParamVec(std::array::from_fn(|_| rng.random_range(-1.5..1.5)));
            let j = jacobian(&t, 2.5, &data, &m).unwrap();
            let h = 1e-6;
            let mut scale: f64 = 0.0;
            let mut fd = [[0.0; 4]; 4];
            for c in 0..4 {
                let mut p = t;
                let mut q = t;
                p[c] += h;
                q[c] -= h;
                let a = gd_step(&p, &data, &m, 2.5);
                let b = gd_step(&q, &data, &m, 2.5);
                for r in 0..4 {
                    fd[r][c] = (a[r] - b[r]) / (2.0 * h);
                    scale = scale.max(fd[r][c].abs());
                }
            }
            for r in 0..4 {
                for c in 0..4 {
                    assert!((j.0[r][c] - fd[r][c]).abs() / scale < 1e-5);
                }
            }
        }
    }

    #[test]
    fn treppen_examples() {
        let q = QrBasis::plus_adapted();
        let (next, ld) = treppen_step(&q, &Mat4::identity()).unwrap();
        assert!(next.q.sub(&q.q).max_abs() < 1e-15);
        assert!(ld.iter().all(|v| v.abs() < 1e-15));
        let (_, ld) = treppen_step(&q, &Mat4::identity().scale(2.0)).unwrap();
        for v in ld {
            assert!((v - 2f64.ln()).abs() < 1e-15);
        }
        let mut singular = Mat4::identity();
        singular.0[2] = [0.0; 4];
        assert!(matches!(
            treppen_step(&q, &singular),
            Err(Error::DegenerateTangentFlow { .. })
        ));
    }

    #[test]
    fn treppen_random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let j = Mat4(std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))));
            let (q0, _) = qr(&Mat4(std::array::from_fn(|_| {
                std::array::from_fn(|_| rng.random_range(-1.0..1.0))
            })))
            .unwrap();
            let basis = QrBasis { q: q0 };
            let (next, ld) = treppen_step(&basis, &j).unwrap();
            assert!(next.q.orthonormality_error() < 1e-12);
            // rebuild R from Qᵀ J Q and compare its diagonal
            let r = next.q.transpose().mul(&j.mul(&q0));
            for i in 0..4 {
                assert!((r.0[i][i].ln() - ld[i]).abs() < 1e-12);
                for k in 0..i {
                    assert!(r.0[i][k].abs() < 1e-12);
                }
            }
            let mut rmat = r;
            for i in 0..4 {
                for k in 0..i {
                    rmat.0[i][k] = 0.0;
                }
            }
            assert!(next.q.mul(&rmat).sub(&j.mul(&q0)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_spectrum_matches_eigenvalues() {
        let data = canonical();
        let m = ModelConfig::default();
        let eta = 2.5;
        let h = crate::model::hessian(&ParamVec::ZERO, &data, &m).unwrap();
        // At the origin H couples uᵢ with vᵢ only: eigenvalues ±c, each twice.
        let c = h.0[0][2];
        let rep = spectrum(&ParamVec::ZERO, eta, &data, &opts(20_000)).unwrap();
        let big = (1.0 + eta * c.abs()).ln();
        let small = (1.0 - eta * c.abs()).abs().ln();
        for (got, want) in rep.lambdas.iter().zip([big, small, big, small]) {
            assert!((got - want).abs() < 1e-3, "{:?} vs {big} {small} c={c}", rep.lambdas);
        }
    }

    #[test]
    fn fixed_point_windows_settle_to_one_value() {
        let data = canonical();
        let s = ftle_windows(&ParamVec::ZERO, 2.5, &data, 50, 2, &opts(5000)).unwrap();
        assert_eq!(s.values.len(), 100);
        let last = *s.values.last().unwrap();
        for v in &s.values[2..] {
            assert!((v - last).abs() < 1e-10);
        }
    }

    #[test]
    fn windows_average_to_stream_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let stream: Vec<[f64; 4]> = (0..1000)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        let s = ftle_from_stream(&stream, 100, 2).unwrap();
        assert_eq!(s.values.len(), 10);
        assert!((s.mean - s.reference).abs() < 1e-14);
        let s = ftle_from_stream(&stream, 300, 2).unwrap();
        assert_eq!(s.values.len(), 3);
        let direct = stream[..900].iter().map(|d| d[2]).sum::<f64>() / 900.0;
        assert!((s.mean - direct).abs() < 1e-14);
        assert!(ftle_from_stream(&stream, 1001, 2).is_err());
    }

    #[test]
    fn exact_diffusion_model_recovers_d() {
        let d = 0.18;
        let lambda = -0.05;
        let series: Vec<FtleSeries> = (600..=1000)
            .step_by(50)
            .map(|t| {
                let a = (2.0 * d / t as f64).sqrt();
                let values = (0..40).map(|k| if k % 2 == 0 { lambda + a } else { lambda - a }).collect();
                series_from_values(t, 2, values, lambda)
            })
            .collect();
        let fit = diffusion_fit(&series, (600, 1000), 100, 1).unwrap();
        assert!((fit.d - d).abs() < 1e-12, "{}", fit.d);
        assert!(fit.stderr < 1e-12);

        let doubled: Vec<FtleSeries> = series
            .iter()
            .map(|s| {
                let v = s.values.iter().map(|v| lambda + 2.0 * (v - lambda)).collect();
                series_from_values(s.window, 2, v, lambda)
            })
            .collect();
        let fit2 = diffusion_fit(&doubled, (600, 1000), 100, 1).unwrap();
        assert!((fit2.d / fit.d - 4.0).abs() < 1e-10);
    }

    #[test]
    fn diffusion_fit_needs_three_lengths() {
        let s = vec![
            series_from_values(600, 2, vec![0.1, -0.1], 0.0),
            series_from_values(700, 2, vec![0.1, -0.1], 0.0),
        ];
        assert!(diffusion_fit(&s, (600, 1000), 100, 1).is_err());
        let z = vec![
            series_from_values(600, 2, vec![0.0, 0.0], 0.0),
            series_from_values(700, 2, vec![0.1, -0.1], 0.0),
            series_from_values(800, 2, vec![0.1, -0.1], 0.0),
        ];
        assert!(diffusion_fit(&z, (600, 1000), 100, 1).is_err());
    }

    #[test]
    fn too_short_stream_reports_partial() {
        let data = canonical();
        let o = SpectrumOptions {
            epochs: 1000,
            min_steps: 10,
            discard_tail: 0,
            ..Default::default()
        };
        let err = spectrum(&ParamVec([3.0, 3.0, 5.0, 5.0]), 60.0, &data, &o).unwrap_err();
        match err {
            Error::TooShort { partial, usable, .. } => {
                assert!(usable < 10);
                assert!(partial.unwrap().diverged_at.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
