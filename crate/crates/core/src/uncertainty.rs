//! ε-uncertain fractions, the uncertainty exponent and bit-flip ensembles.
//!
//! A pair of initializations at distance ε is ε-uncertain when the two runs
//! end at different destinations. For a fat-fractal boundary the fraction of
//! uncertain pairs scales as `f(ε) ∝ ε^φ` with φ close to zero.
//!
//! In the torus-shell mode base points lie on `{a₁²+a₂² = 1, a₃²+a₄² = 1}`
//! in the coordinates of [`crate::symmetry::plus_basis`], i.e. at unit
//! distance from `P₊`. Pair `i` always uses the same base point and the same
//! perturbation direction, scaled by ε, so a whole curve reuses one base
//! training per pair.

use std::collections::HashMap;
use std::hash::Hash;

use rand::distr::{Distribution, Open01};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basin::destination;
use crate::dynamics::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Dataset, ParamVec};
use crate::parallel::map_indexed;
use crate::seed;
use crate::stats::{binomial_stderr, bootstrap_fraction, wls};
use crate::symmetry::{self, DestinationLabel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SamplingMode {
    TorusShell,
    FixedReferenceCube,
    BitFlip,
}

impl SamplingMode {
    pub fn name(self) -> &'static str {
        match self {
            SamplingMode::TorusShell => "torus-shell",
            SamplingMode::FixedReferenceCube => "fixed-reference-cube",
            SamplingMode::BitFlip => "bit-flip",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "torus-shell" | "shell" => Ok(SamplingMode::TorusShell),
            "fixed-reference-cube" | "cube" => Ok(SamplingMode::FixedReferenceCube),
            "bit-flip" | "bitflip" => Ok(SamplingMode::BitFlip),
            _ => Err(Error::Config(format!(
                "unknown sampling mode {s:?} (torus-shell, fixed-reference-cube, bit-flip)"
            ))),
        }
    }
}

/// Resamples used for the bootstrap standard error in cube mode.
pub const CUBE_BOOTSTRAP_RESAMPLES: usize = 200;
pub const DEFAULT_PAIRS: usize = 1000;
pub const DEFAULT_EPS_MIN: f64 = 1e-12;
pub const DEFAULT_EPS_MAX: f64 = 1e-1;
pub const DEFAULT_EPS_POINTS: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub f: f64,
    pub stderr: f64,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UncertaintyCurve {
    pub points: Vec<CurvePoint>,
    pub sampling_mode: SamplingMode,
}

/// Disagreement counts for one ε; disjoint batches merge by addition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairCounts {
    pub pairs: usize,
    pub disagreements: usize,
}

impl PairCounts {
    pub fn merge(self, other: PairCounts) -> PairCounts {
        PairCounts {
            pairs: self.pairs + other.pairs,
            disagreements: self.disagreements + other.disagreements,
        }
    }

    pub fn fraction(&self) -> f64 {
        self.disagreements as f64 / self.pairs as f64
    }

    pub fn stderr(&self) -> f64 {
        binomial_stderr(self.fraction(), self.pairs)
    }

    pub fn point(&self, epsilon: f64) -> CurvePoint {
        CurvePoint {
            epsilon,
            f: self.fraction(),
            stderr: self.stderr(),
            n_pairs: self.pairs,
        }
    }
}

/// Uniform point on the product of the two unit circles.
pub fn sample_shell(seed: u64) -> ParamVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let b: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    symmetry::from_plus_coords([a.cos(), a.sin(), b.cos(), b.sin()])
}

/// Unit draws in the open interval `(−1, 1)`, one per coordinate.
fn unit_offsets(seed: u64) -> [f64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::array::from_fn(|_| {
        let u: f64 = Open01.sample(&mut rng);
        2.0 * u - 1.0
    })
}

/// Adds an independent `U(−ε, ε)` draw to every coordinate.
pub fn perturb(theta: &ParamVec, eps: f64, seed: u64) -> ParamVec {
    let d = unit_offsets(seed);
    ParamVec(std::array::from_fn(|k| theta[k] + eps * d[k]))
}

/// Flips the least significant mantissa bit of one coordinate.
pub fn flip_lsb(x: f64) -> f64 {
    f64::from_bits(x.to_bits() ^ 1)
}

/// `n_points` log-spaced values from `eps_min` to `eps_max` inclusive.
pub fn eps_grid(eps_min: f64, eps_max: f64, n_points: usize) -> Result<Vec<f64>> {
    if !(eps_min > 0.0 && eps_max > eps_min && eps_max.is_finite()) {
        return Err(Error::Config(format!("need 0 < eps_min < eps_max, got {eps_min}, {eps_max}")));
    }
    if n_points < 2 {
        return Err(Error::Config("need at least 2 epsilon values".into()));
    }
    let (lo, hi) = (eps_min.log10(), eps_max.log10());
    let last = n_points - 1;
    Ok((0..n_points)
        .map(|k| match k {
            0 => eps_min,
            k if k == last => eps_max,
            k => 10f64.powf(lo + (hi - lo) * k as f64 / last as f64),
        })
        .collect())
}

/// Log-spaced grid with `points_per_decade` intervals per decade (rounded to
/// a whole number of intervals over the range).
pub fn eps_grid_per_decade(eps_min: f64, eps_max: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if points_per_decade == 0 {
        return Err(Error::Config("points per decade must be >= 1".into()));
    }
    if !(eps_min > 0.0 && eps_max > eps_min && eps_max.is_finite()) {
        return Err(Error::Config(format!("need 0 < eps_min < eps_max, got {eps_min}, {eps_max}")));
    }
    let decades = eps_max.log10() - eps_min.log10();
    let intervals = ((decades * points_per_decade as f64).round() as usize).max(1);
    eps_grid(eps_min, eps_max, intervals + 1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UncertaintyOptions {
    pub n_pairs: usize,
    pub mode: SamplingMode,
    pub seed: u64,
    pub threshold_d: f64,
    pub workers: usize,
    /// Cube mode centre; a shell sample derived from the seed when `None`.
    pub reference: Option<ParamVec>,
}

impl Default for UncertaintyOptions {
    fn default() -> Self {
        UncertaintyOptions {
            n_pairs: DEFAULT_PAIRS,
            mode: SamplingMode::TorusShell,
            seed: 0,
            threshold_d: symmetry::DEFAULT_THRESHOLD_D,
            workers: 1,
            reference: None,
        }
    }
}

impl UncertaintyOptions {
    fn validate(&self, cfg: &TrainConfig) -> Result<()> {
        cfg.validate()?;
        if self.n_pairs == 0 {
            return Err(Error::Config("need at least one pair".into()));
        }
        Ok(())
    }

    pub fn reference_point(&self) -> ParamVec {
        self.reference
            .unwrap_or_else(|| sample_shell(seed::derive(self.seed, "reference", 0)))
    }
}

fn shell_base(master: u64, i: usize) -> ParamVec {
    sample_shell(seed::derive(master, "shell", i as u64))
}

fn bitflip_partner(master: u64, i: usize, base: &ParamVec) -> ParamVec {
    let mut rng = seed::rng(master, "bitflip", i as u64);
    let k = rng.random_range(0..4);
    let mut t = *base;
    t[k] = flip_lsb(t[k]);
    t
}

fn partner(mode: SamplingMode, master: u64, i: usize, base: &ParamVec, eps: f64) -> ParamVec {
    match mode {
        SamplingMode::BitFlip => bitflip_partner(master, i, base),
        _ => perturb(base, eps, seed::derive(master, "perturb", i as u64)),
    }
}

/// Counts disagreeing pairs for pair indices `range` (paired modes only).
pub fn pair_counts(
    eps: f64,
    range: std::ops::Range<usize>,
    data: &Dataset,
    cfg: &TrainConfig,
    opts: &UncertaintyOptions,
) -> Result<PairCounts> {
    cfg.validate()?;
    if opts.mode == SamplingMode::FixedReferenceCube {
        return Err(Error::Config("cube mode is not a paired mode".into()));
    }
    let start = range.start;
    let differ = map_indexed(range.len(), opts.workers, |k| {
        let i = start + k;
        let base = shell_base(opts.seed, i);
        let a = destination(&base, data, cfg, opts.threshold_d);
        let b = destination(&partner(opts.mode, opts.seed, i, &base, eps), data, cfg, opts.threshold_d);
        a != b
    });
    Ok(PairCounts {
        pairs: range.len(),
        disagreements: differ.iter().filter(|&&d| d).count(),
    })
}

/// Uncertain fraction and its standard error at one ε.
///
/// Paired modes use `√(f(1−f)/n)`. Cube mode trains `2 n` independent points
/// of the cube of side ε centred on the reference and reports the bootstrap
/// mean and standard deviation over random pairings.
pub fn uncertain_fraction(eps: f64, data: &Dataset, cfg: &TrainConfig, opts: &UncertaintyOptions) -> Result<CurvePoint> {
    opts.validate(cfg)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
    }
    match opts.mode {
        SamplingMode::FixedReferenceCube => {
            let labels = cube_labels(eps, data, cfg, opts, &opts.reference_point());
            let (f, se) = bootstrap_fraction(&labels, CUBE_BOOTSTRAP_RESAMPLES, seed::derive(opts.seed, "bootstrap", 0))?;
            Ok(CurvePoint {
                epsilon: eps,
                f,
                stderr: se,
                n_pairs: opts.n_pairs,
            })
        }
        _ => Ok(pair_counts(eps, 0..opts.n_pairs, data, cfg, opts)?.point(eps)),
    }
}

fn cube_labels(eps: f64, data: &Dataset, cfg: &TrainConfig, opts: &UncertaintyOptions, reference: &ParamVec) -> Vec<DestinationLabel> {
    map_indexed(2 * opts.n_pairs, opts.workers, |i| {
        let p = perturb(reference, 0.5 * eps, seed::derive(opts.seed, "cube", i as u64));
        destination(&p, data, cfg, opts.threshold_d)
    })
}

/// `f(ε)` on every value of `eps`. In paired modes the base point of each
/// pair is trained once and reused for all ε.
pub fn uncertainty_curve(eps: &[f64], data: &Dataset, cfg: &TrainConfig, opts: &UncertaintyOptions) -> Result<UncertaintyCurve> {
    opts.validate(cfg)?;
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Config("epsilon list must be nonempty and positive".into()));
    }
    let monotone = eps.windows(2).all(|w| w[0] < w[1]) || eps.windows(2).all(|w| w[0] > w[1]);
    if !monotone {
        return Err(Error::Config("epsilon list must be strictly monotone".into()));
    }
    let points = match opts.mode {
        SamplingMode::FixedReferenceCube => eps
            .iter()
            .map(|&e| uncertain_fraction(e, data, cfg, opts))
            .collect::<Result<Vec<_>>>()?,
        SamplingMode::BitFlip => vec![pair_counts(f64::EPSILON, 0..opts.n_pairs, data, cfg, opts)?.point(f64::EPSILON)],
        SamplingMode::TorusShell => {
            let n = opts.n_pairs;
            let base: Vec<DestinationLabel> = map_indexed(n, opts.workers, |i| {
                destination(&shell_base(opts.seed, i), data, cfg, opts.threshold_d)
            });
            eps.iter()
                .map(|&e| {
                    let differ = map_indexed(n, opts.workers, |i| {
                        let p = partner(opts.mode, opts.seed, i, &shell_base(opts.seed, i), e);
                        destination(&p, data, cfg, opts.threshold_d) != base[i]
                    });
                    PairCounts {
                        pairs: n,
                        disagreements: differ.iter().filter(|&&d| d).count(),
                    }
                    .point(e)
                })
                .collect()
        }
    };
    Ok(UncertaintyCurve {
        points,
        sampling_mode: opts.mode,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub phi: f64,
    pub phi_stderr: f64,
    /// Fitted `ln f` at `ε = 1`.
    pub intercept: f64,
    pub fit_range: (f64, f64),
    pub n_points: usize,
    /// ε values left out because no uncertain pair was found there.
    pub excluded: Vec<f64>,
}

impl PowerLawFit {
    /// `d − φ`, the box-counting dimension of the boundary in a
    /// `d`-dimensional parameter space.
    pub fn boundary_dimension(&self, ambient_dim: usize) -> f64 {
        ambient_dim as f64 - self.phi
    }
}

/// Weighted fit of `ln f = φ ln ε + c` with `var(ln f) = (stderr/f)²`.
///
/// Points with `f = 0` are dropped with a warning. A point with zero
/// standard error (all pairs uncertain) gets the error of a continuity
/// corrected fraction `1 − 1/(2n)`.
pub fn fit_uncertainty_exponent(curve: &UncertaintyCurve) -> Result<PowerLawFit> {
    let mut excluded = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for p in &curve.points {
        if p.f <= 0.0 {
            log::warn!("no uncertain pair at epsilon = {:e}; point excluded from the fit", p.epsilon);
            excluded.push(p.epsilon);
            continue;
        }
        let se = if p.stderr > 0.0 {
            p.stderr
        } else {
            let fc = 1.0 - 0.5 / p.n_pairs.max(1) as f64;
            binomial_stderr(fc, p.n_pairs.max(1))
        };
        xs.push(p.epsilon.ln());
        ys.push(p.f.ln());
        let rel = se / p.f;
        ws.push(1.0 / (rel * rel));
    }
    if xs.is_empty() {
        return Err(Error::NoBoundarySampled);
    }
    if xs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 points with f > 0, found {}",
            xs.len()
        )));
    }
    let r = wls(&xs, &ys, &ws)?;
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min).exp();
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(PowerLawFit {
        phi: r.slope,
        phi_stderr: r.slope_stderr,
        intercept: r.intercept,
        fit_range: (lo, hi),
        n_points: xs.len(),
        excluded,
    })
}

// ---- bit-flip ensembles -----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BitflipReport {
    pub members: usize,
    /// Share of the most common destination.
    pub p: f64,
    /// `2 p (1 − p)`.
    pub f_pred: f64,
    /// Disagreement fraction over all member pairs.
    pub f_emp: f64,
    /// Binomial standard error of `f_pred` for `members / 2` disjoint pairs.
    pub stderr: f64,
    /// Member count of each distinct destination, most common first.
    pub destination_counts: Vec<usize>,
}

/// Summary statistics of an ensemble's destinations.
pub fn ensemble_report<L: Eq + Hash>(labels: &[L]) -> Result<BitflipReport> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("ensemble needs at least 2 members, got {n}")));
    }
    let mut counts: HashMap<&L, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let mut c: Vec<usize> = counts.into_values().collect();
    c.sort_unstable_by(|a, b| b.cmp(a));
    let p = c[0] as f64 / n as f64;
    let f_pred = 2.0 * p * (1.0 - p);
    let same: usize = c.iter().map(|k| k * (k - 1)).sum();
    let f_emp = 1.0 - same as f64 / (n * (n - 1)) as f64;
    Ok(BitflipReport {
        members: n,
        p,
        f_pred,
        f_emp,
        stderr: binomial_stderr(f_pred, n / 2),
        destination_counts: c,
    })
}

/// Indices of the parameters whose least significant bit is flipped: all of
/// them when `members ≥ n_params`, otherwise a seeded sample without
/// replacement.
pub fn flip_indices(n_params: usize, members: usize, seed: u64) -> Vec<usize> {
    if members >= n_params {
        return (0..n_params).collect();
    }
    let mut rng = seed::rng(seed, "flip-members", 0);
    let mut v = index::sample(&mut rng, n_params, members).into_vec();
    v.sort_unstable();
    v
}

/// Ensemble of single-bit flips of the minimal model's reference parameters.
/// The model has four parameters, so at most four members exist.
pub fn bitflip_ensemble(
    theta_ref: &ParamVec,
    data: &Dataset,
    cfg: &TrainConfig,
    threshold_d: f64,
    members: usize,
    seed: u64,
    workers: usize,
) -> Result<BitflipReport> {
    if !theta_ref.is_finite() {
        return Err(Error::NonFinite);
    }
    cfg.validate()?;
    let idx = flip_indices(4, members, seed);
    let labels = map_indexed(idx.len(), workers, |m| {
        let mut t = *theta_ref;
        t[idx[m]] = flip_lsb(t[idx[m]]);
        destination(&t, data, cfg, threshold_d)
    });
    ensemble_report(&labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::canonical;
    use crate::symmetry::Sign;
    use proptest::prelude::*;

    #[test]
    fn shell_examples() {
        for s in 0..200 {
            let t = sample_shell(s);
            let a = symmetry::plus_coords(&t);
            assert!((a[0] * a[0] + a[1] * a[1] - 1.0).abs() < 1e-12);
            assert!((a[2] * a[2] + a[3] * a[3] - 1.0).abs() < 1e-12);
            assert!((symmetry::euclid_dist_to_plane(&t, Sign::Plus).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(t.to_bits(), sample_shell(s).to_bits());
        }
    }

    proptest! {
        #[test]
        fn perturbation_stays_in_cube(seed in any::<u64>(), e in -12.0f64..0.0) {
            let eps = 10f64.powf(e);
            let d = unit_offsets(seed);
            for x in d {
                prop_assert!(x.abs() < 1.0);
                prop_assert!((eps * x).abs() <= eps);
            }
            let t = ParamVec([0.3, -0.2, 1.0, 0.5]);
            prop_assert_eq!(perturb(&t, eps, seed), perturb(&t, eps, seed));
        }

        #[test]
        fn stderr_matches_closed_form(pairs in 1usize..5000, frac in 0.0f64..1.0) {
            let k = ((pairs as f64) * frac) as usize;
            let c = PairCounts { pairs, disagreements: k };
            let f = k as f64 / pairs as f64;
            prop_assert!((0.0..=1.0).contains(&c.fraction()));
            prop_assert!((c.stderr() - (f * (1.0 - f) / pairs as f64).sqrt()).abs() <= 1e-15);
        }
    }

    #[test]
    fn perturbation_vanishes_with_eps() {
        let t = ParamVec([0.3, -0.2, 1.0, 0.5]);
        let mut prev = f64::INFINITY;
        for e in [1e-1, 1e-4, 1e-8, 1e-12] {
            let p = perturb(&t, e, 9);
            let dev = p.sub(&t).0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(dev < e && dev <= prev);
            prev = dev;
        }
    }

    #[test]
    fn grid_defaults() {
        let g = eps_grid(DEFAULT_EPS_MIN, DEFAULT_EPS_MAX, DEFAULT_EPS_POINTS).unwrap();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 1e-12);
        assert_eq!(g[12], 1e-1);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let ratios: Vec<f64> = g.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-9));
        assert_eq!(eps_grid_per_decade(1e-4, 1e-1, 3).unwrap().len(), 10);
        assert!(eps_grid(1e-1, 1e-4, 5).is_err());
        assert!(eps_grid_per_decade(1e-4, 1e-1, 0).is_err());
    }

    #[test]
    fn uniform_map_has_zero_fraction() {
        // A huge rate sends every initialization to infinity.
        let cfg = TrainConfig::with_eta(1e4, 20);
        let opts = UncertaintyOptions {
            n_pairs: 50,
            ..Default::default()
        };
        let p = uncertain_fraction(1e-3, &canonical(), &cfg, &opts).unwrap();
        assert_eq!(p.f, 0.0);
        assert_eq!(p.stderr, 0.0);
        let cube = UncertaintyOptions {
            mode: SamplingMode::FixedReferenceCube,
            ..opts
        };
        assert_eq!(uncertain_fraction(1e-3, &canonical(), &cfg, &cube).unwrap().f, 0.0);
    }

    #[test]
    fn alternating_labels_give_full_fraction() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let pairs = labels.chunks(2).filter(|p| p[0] != p[1]).count();
        let c = PairCounts {
            pairs: 50,
            disagreements: pairs,
        };
        assert_eq!(c.fraction(), 1.0);
    }

    #[test]
    fn merged_batches_pool_exactly() {
        let data = canonical();
        let cfg = TrainConfig::with_eta(2.5, 200);
        let opts = UncertaintyOptions {
            n_pairs: 40,
            ..Default::default()
        };
        let a = pair_counts(1e-2, 0..15, &data, &cfg, &opts).unwrap();
        let b = pair_counts(1e-2, 15..40, &data, &cfg, &opts).unwrap();
        let all = pair_counts(1e-2, 0..40, &data, &cfg, &opts).unwrap();
        assert_eq!(a.merge(b), all);
        let pooled = (a.fraction() * 15.0 + b.fraction() * 25.0) / 40.0;
        assert!((pooled - all.fraction()).abs() < 1e-15);
        let via_curve = uncertainty_curve(&[1e-2], &data, &cfg, &opts).unwrap();
        assert_eq!(via_curve.points[0], all.point(1e-2));
    }

    #[test]
    fn curve_is_deterministic_across_workers() {
        let data = canonical();
        let cfg = TrainConfig::with_eta(2.5, 100);
        let eps = [1e-6, 1e-3, 1e-1];
        let one = UncertaintyOptions {
            n_pairs: 30,
            seed: 4,
            ..Default::default()
        };
        let four = UncertaintyOptions { workers: 4, ..one };
        assert_eq!(
            uncertainty_curve(&eps, &data, &cfg, &one).unwrap(),
            uncertainty_curve(&eps, &data, &cfg, &four).unwrap()
        );
    }

    fn synthetic(f: impl Fn(f64) -> f64, rel_se: f64) -> UncertaintyCurve {
        UncertaintyCurve {
            points: [1e-8, 1e-6, 1e-4, 1e-2]
                .iter()
                .map(|&e| CurvePoint {
                    epsilon: e,
                    f: f(e),
                    stderr: rel_se * f(e),
                    n_pairs: 1000,
                })
                .collect(),
            sampling_mode: SamplingMode::TorusShell,
        }
    }

    #[test]
    fn fit_exact_power_law() {
        let fit = fit_uncertainty_exponent(&synthetic(|e| e.sqrt(), 0.01)).unwrap();
        assert!((fit.phi - 0.5).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-10);
        assert_eq!(fit.n_points, 4);
        assert!((fit.boundary_dimension(4) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn fit_constant_fraction() {
        let fit = fit_uncertainty_exponent(&synthetic(|_| 0.4, 0.03)).unwrap();
        assert!(fit.phi.abs() <= fit.phi_stderr.max(1e-12));
    }

    #[test]
    fn fit_excludes_zero_points() {
        let mut c = synthetic(|e| e.powf(0.25), 0.02);
        c.points.push(CurvePoint {
            epsilon: 1e-10,
            f: 0.0,
            stderr: 0.0,
            n_pairs: 1000,
        });
        let fit = fit_uncertainty_exponent(&c).unwrap();
        assert_eq!(fit.excluded, vec![1e-10]);
        assert!((fit.phi - 0.25).abs() < 1e-12);
        for p in c.points.iter_mut() {
            p.f = 0.0;
        }
        assert!(matches!(fit_uncertainty_exponent(&c), Err(Error::NoBoundarySampled)));
    }

    #[test]
    fn fit_accepts_full_fraction() {
        let mut c = synthetic(|_| 1.0, 0.0);
        c.points[0].f = 0.9;
        c.points[0].stderr = binomial_stderr(0.9, 1000);
        assert!(fit_uncertainty_exponent(&c).unwrap().phi_stderr.is_finite());
    }

    #[test]
    fn report_algebra() {
        let half: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let r = ensemble_report(&half).unwrap();
        assert_eq!(r.p, 0.5);
        assert_eq!(r.f_pred, 0.5);
        let p: f64 = 0.607;
        assert!((2.0 * p * (1.0 - p) - 0.477).abs() < 5e-4);
        assert!(ensemble_report(&[1u8]).is_err());
    }

    #[test]
    fn report_matches_pairwise_count() {
        let labels: Vec<u8> = (0..37u32).map(|i| ((i * 7) % 3) as u8).collect();
        let r = ensemble_report(&labels).unwrap();
        let mut differ = 0;
        let mut total = 0;
        for i in 0..labels.len() {
            for j in (i + 1)..labels.len() {
                total += 1;
                differ += (labels[i] != labels[j]) as usize;
            }
        }
        assert!((r.f_emp - differ as f64 / total as f64).abs() < 1e-15);
    }

    #[test]
    fn flips_change_one_bit() {
        assert_eq!(flip_lsb(1.0), 1.0 + f64::EPSILON);
        assert_eq!(flip_lsb(flip_lsb(0.3)), 0.3);
        assert_eq!(flip_indices(4, 200, 0), vec![0, 1, 2, 3]);
        let s = flip_indices(1000, 200, 5);
        assert_eq!(s.len(), 200);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn minimal_bitflip_ensemble_runs() {
        let r = bitflip_ensemble(&sample_shell(1), &canonical(), &TrainConfig::with_eta(2.5, 100), 3.0, 200, 0, 1).unwrap();
        assert_eq!(r.members, 4);
        assert!((0.0..=0.5).contains(&r.f_pred));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [SamplingMode::TorusShell, SamplingMode::FixedReferenceCube, SamplingMode::BitFlip] {
            assert_eq!(SamplingMode::parse(m.name()).unwrap(), m);
        }
        assert!(SamplingMode::parse("nope").is_err());
    }
}
