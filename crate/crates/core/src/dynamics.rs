//! The training map of the minimal model, training loops and divergence
//! detection.
//!
//! Full-batch gradient descent `θ ← θ − η ∇L(θ)` is a deterministic map of
//! `ℝ⁴`. Escape to infinity is an attractor in its own right: a run whose
//! Euclidean norm exceeds the divergence threshold, or which produces a
//! non-finite value, stops and is reported as diverged at that epoch.

use crate::error::{Error, Result};
use crate::model::{grad_unchecked, Dataset, ModelConfig, ParamVec};
use crate::symmetry::{self, Sign};

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub epochs: usize,
    pub divergence_threshold: f64,
    /// Record every k-th iterate (`0` records nothing).
    pub record_every: usize,
    /// Only used by the multilayer trainer.
    pub momentum: f64,
    /// Only used by the multilayer trainer.
    pub weight_decay: f64,
    /// Only used by the multilayer trainer; the minimal model is always full batch.
    pub batch_size: BatchSize,
    pub shuffle_seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 2.5,
            epochs: 1000,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            record_every: 0,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: BatchSize::Full,
            shuffle_seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_eta(eta: f64, epochs: usize) -> Self {
        TrainConfig {
            eta,
            epochs,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        // A zero learning rate is accepted as the identity map.
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.eta)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::Config("divergence threshold must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be >= 0".into()));
        }
        if let BatchSize::Size(0) = self.batch_size {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        self.model.validate()
    }

    /// Stable digest of every field, for file headers and manifests.
    pub fn sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.eta.to_le_bytes());
        h.update((self.epochs as u64).to_le_bytes());
        h.update(self.divergence_threshold.to_le_bytes());
        h.update((self.record_every as u64).to_le_bytes());
        h.update(self.momentum.to_le_bytes());
        h.update(self.weight_decay.to_le_bytes());
        let b = match self.batch_size {
            BatchSize::Full => 0u64,
            BatchSize::Size(n) => n as u64,
        };
        h.update(b.to_le_bytes());
        h.update(self.shuffle_seed.to_le_bytes());
        h.update(self.model.alpha1.to_le_bytes());
        h.update(self.model.alpha2.to_le_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Finite,
    Diverged { at_epoch: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<P = ParamVec> {
    pub final_theta: P,
    pub status: Status,
    /// `(epoch, iterate)` for every `record_every`-th epoch before divergence.
    pub samples: Vec<(usize, P)>,
}

impl<P> TrainOutcome<P> {
    pub fn diverged(&self) -> bool {
        matches!(self.status, Status::Diverged { .. })
    }
}

/// Escape test shared by all trainers.
///
/// Squares are summed in adjacent pairs so that swapping the entries of a
/// pair (the neuron permutation of the minimal model) gives bitwise the same
/// norm.
pub fn is_diverged(values: &[f64], threshold: f64) -> bool {
    if values.iter().any(|v| !v.is_finite()) {
        return true;
    }
    let n2: f64 = values
        .chunks(2)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>())
        .sum();
    !(n2.sqrt() <= threshold)
}

/// One full-batch gradient-descent step.
pub fn gd_step(theta: &ParamVec, data: &Dataset, model: &ModelConfig, eta: f64) -> ParamVec {
    let g = grad_unchecked(theta, data, model);
    ParamVec(std::array::from_fn(|k| theta[k] - eta * g[k]))
}

/// Iterates `gd_step` for `cfg.epochs` epochs, stopping at divergence.
pub fn train(theta0: &ParamVec, data: &Dataset, cfg: &TrainConfig) -> TrainOutcome {
    let mut theta = *theta0;
    let mut samples = Vec::new();
    for epoch in 1..=cfg.epochs {
        theta = gd_step(&theta, data, &cfg.model, cfg.eta);
        if is_diverged(&theta.0, cfg.divergence_threshold) {
            return TrainOutcome {
                final_theta: theta,
                status: Status::Diverged { at_epoch: epoch },
                samples,
            };
        }
        if cfg.record_every > 0 && epoch % cfg.record_every == 0 {
            samples.push((epoch, theta));
        }
    }
    TrainOutcome {
        final_theta: theta,
        status: Status::Finite,
        samples,
    }
}

/// Iterates `θ₀, θ₁, …` of the gradient-descent map up to and including the
/// first diverged iterate.
pub struct Trajectory<'a> {
    theta: ParamVec,
    data: &'a Dataset,
    model: ModelConfig,
    eta: f64,
    threshold: f64,
    done: bool,
}

impl<'a> Trajectory<'a> {
    pub fn new(theta0: ParamVec, data: &'a Dataset, cfg: &TrainConfig) -> Self {
        Trajectory {
            theta: theta0,
            data,
            model: cfg.model,
            eta: cfg.eta,
            threshold: cfg.divergence_threshold,
            done: false,
        }
    }
}

impl Iterator for Trajectory<'_> {
    /// `(iterate, diverged)`
    type Item = (ParamVec, bool);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let current = self.theta;
        let diverged = is_diverged(&current.0, self.threshold);
        if diverged {
            self.done = true;
        } else {
            self.theta = gd_step(&current, self.data, &self.model, self.eta);
        }
        Some((current, diverged))
    }
}

pub const DEFAULT_DISCARD_TAIL: usize = 6000;

/// Coordinates of the iterates of a run started in `P₊` with respect to
/// `e₁ = (1,1,0,0)/√2` and `e₂ = (0,0,1,1)/√2`.
///
/// Iterates `θ₀ … θ_E` are considered, where `E` is the last epoch
/// (or the last finite one before divergence); the final `discard_tail` of
/// them are dropped and every second remaining iterate is projected.
pub fn attractor_trace(
    theta0: &ParamVec,
    data: &Dataset,
    cfg: &TrainConfig,
    discard_tail: usize,
) -> Result<Vec<(f64, f64)>> {
    let d = symmetry::dist_metric(theta0, Sign::Plus)?;
    if d != 0.0 {
        return Err(Error::NotInPlusPlane(d));
    }
    let e1 = symmetry::basis_vector(0);
    let e2 = symmetry::basis_vector(1);
    let mut coords = Vec::new();
    for (theta, diverged) in Trajectory::new(*theta0, data, cfg).take(cfg.epochs + 1) {
        if diverged {
            break;
        }
        coords.push((theta.dot(&e1), theta.dot(&e2)));
    }
    let keep = coords.len().saturating_sub(discard_tail);
    Ok(coords.into_iter().take(keep).step_by(2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::canonical;
    use crate::symmetry::{permute, signflip, Neuron};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn origin_is_fixed() {
        let data = canonical();
        let m = ModelConfig::default();
        assert_eq!(gd_step(&ParamVec::ZERO, &data, &m, 2.5), ParamVec::ZERO);
        let out = train(&ParamVec::ZERO, &data, &TrainConfig::with_eta(2.5, 500));
        assert_eq!(out.final_theta, ParamVec::ZERO);
        assert_eq!(out.status, Status::Finite);
    }

    #[test]
    fn zero_rate_is_identity() {
        let t = ParamVec([0.3, -0.1, 0.9, 1.4]);
        let next = gd_step(&t, &canonical(), &ModelConfig::default(), 0.0);
        assert_eq!(next.to_bits(), t.to_bits());
    }

    #[test]
    fn plus_plane_is_invariant_bitwise() {
        let data = canonical();
        let cfg = TrainConfig::with_eta(2.5, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            for (theta, diverged) in Trajectory::new(ParamVec([a, a, b, b]), &data, &cfg).take(1001) {
                if diverged {
                    break;
                }
                assert_eq!(symmetry::dist_metric(&theta, Sign::Plus).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn record_every_bookkeeping() {
        let mut cfg = TrainConfig::with_eta(0.1, 10);
        cfg.record_every = 2;
        let out = train(&ParamVec([0.1, 0.2, 0.3, 0.4]), &canonical(), &cfg);
        let epochs: Vec<usize> = out.samples.iter().map(|s| s.0).collect();
        assert_eq!(epochs, vec![2, 4, 6, 8, 10]);
    }

    #[test]
    fn divergence_stops_updates() {
        let mut cfg = TrainConfig::with_eta(50.0, 1000);
        cfg.record_every = 1;
        let out = train(&ParamVec([1.0, -0.5, 2.0, 0.7]), &canonical(), &cfg);
        let Status::Diverged { at_epoch } = out.status else {
            panic!("expected divergence, got {:?}", out.status);
        };
        assert!(out.samples.iter().all(|s| s.0 < at_epoch));
        assert_eq!(out.samples.len(), at_epoch - 1);
    }

    #[test]
    fn train_is_equivariant_and_deterministic() {
        let data = canonical();
        let mut cfg = TrainConfig::with_eta(2.5, 300);
        cfg.record_every = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..5 {
            let t = ParamVec(std::array::from_fn(|_| rng.random_range(-1.5..1.5)));
            let base = train(&t, &data, &cfg);
            assert_eq!(base, train(&t, &data, &cfg));
            let p = train(&permute(&t), &data, &cfg);
            assert_eq!(p.status, base.status);
            for (a, b) in base.samples.iter().zip(&p.samples) {
                assert_eq!(permute(&a.1).to_bits(), b.1.to_bits());
            }
            let s = train(&signflip(&t, Neuron::First), &data, &cfg);
            for (a, b) in base.samples.iter().zip(&s.samples) {
                assert_eq!(signflip(&a.1, Neuron::First).to_bits(), b.1.to_bits());
            }
        }
    }

    #[test]
    fn attractor_trace_requires_plus_plane() {
        let data = canonical();
        let cfg = TrainConfig::with_eta(2.5, 100);
        assert!(matches!(
            attractor_trace(&ParamVec([1.0, 0.0, 0.0, 0.0]), &data, &cfg, 0),
            Err(Error::NotInPlusPlane(_))
        ));
        let pts = attractor_trace(&ParamVec::ZERO, &data, &cfg, 10).unwrap();
        // iterates 0..=100, minus 10, every second
        assert_eq!(pts.len(), 46);
        assert!(pts.iter().all(|&(a, b)| a == 0.0 && b == 0.0));
    }

    #[test]
    fn trace_has_no_transverse_component() {
        let data = canonical();
        let cfg = TrainConfig::with_eta(2.5, 2000);
        let t0 = ParamVec([0.4, 0.4, -0.8, -0.8]);
        let e3 = symmetry::basis_vector(2);
        let e4 = symmetry::basis_vector(3);
        for (theta, diverged) in Trajectory::new(t0, &data, &cfg).take(2001) {
            if diverged {
                break;
            }
            assert_eq!(theta.dot(&e3), 0.0);
            assert_eq!(theta.dot(&e4), 0.0);
        }
    }
}
