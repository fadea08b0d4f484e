//! Symmetry-induced invariant planes of the minimal model, their distance
//! metrics, the reflections that generate them, and destination labels.
//!
//! `P₊ = {w₁ = w₂}` comes from swapping the two hidden neurons and
//! `P₋ = {w₁ = −w₂}` from composing that swap with a sign flip of one neuron
//! (tanh is odd). `P₀ⁱ = {wᵢ = 0}` are the parity planes.

use crate::dynamics::{Status, TrainOutcome};
use crate::error::{Error, Result};
use crate::linalg::Mat4;
use crate::model::ParamVec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Neuron {
    First,
    Second,
}

/// Where a training run ended up. The numeric codes are the grid-file
/// encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum DestinationLabel {
    PlusPlane = 0,
    MinusPlane = 1,
    Divergent = 2,
    Other = 3,
}

impl DestinationLabel {
    pub const ALL: [DestinationLabel; 4] = [
        DestinationLabel::PlusPlane,
        DestinationLabel::MinusPlane,
        DestinationLabel::Divergent,
        DestinationLabel::Other,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DestinationLabel::PlusPlane => "PlusPlane",
            DestinationLabel::MinusPlane => "MinusPlane",
            DestinationLabel::Divergent => "Divergent",
            DestinationLabel::Other => "Other",
        }
    }

    /// Exchanges the two permutation planes; other labels are fixed.
    pub fn swap_planes(self) -> Self {
        match self {
            DestinationLabel::PlusPlane => DestinationLabel::MinusPlane,
            DestinationLabel::MinusPlane => DestinationLabel::PlusPlane,
            other => other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub label: DestinationLabel,
    /// Both metrics were below the threshold; the label defaulted to `PlusPlane`.
    pub tie: bool,
}

/// Proximity threshold on the squared-norm metric.
pub const DEFAULT_THRESHOLD_D: f64 = 3.0;

/// Orthonormal basis adapted to `P₊`, as columns: `e₁ = (1,1,0,0)/√2`,
/// `e₂ = (0,0,1,1)/√2` span `P₊`; `e₃ = (1,−1,0,0)/√2`, `e₄ = (0,0,1,−1)/√2`
/// are transverse to it.
pub fn plus_basis() -> Mat4 {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    Mat4::from_columns([
        [c, c, 0.0, 0.0],
        [0.0, 0.0, c, c],
        [c, -c, 0.0, 0.0],
        [0.0, 0.0, c, -c],
    ])
}

/// Column `k` (0-based) of [`plus_basis`].
pub fn basis_vector(k: usize) -> ParamVec {
    ParamVec(plus_basis().column(k))
}

/// `Σₖ aₖ eₖ`.
pub fn from_plus_coords(a: [f64; 4]) -> ParamVec {
    ParamVec(plus_basis().mul_vec(&a))
}

/// Coordinates with respect to [`plus_basis`].
pub fn plus_coords(theta: &ParamVec) -> [f64; 4] {
    plus_basis().transpose().mul_vec(&theta.0)
}

fn check(theta: &ParamVec) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// `d±(θ) = ‖w₁ ∓ w₂‖²`, the classification metric.
pub fn dist_metric(theta: &ParamVec, sign: Sign) -> Result<f64> {
    check(theta)?;
    Ok(dist_metric_unchecked(theta, sign))
}

pub(crate) fn dist_metric_unchecked(theta: &ParamVec, sign: Sign) -> f64 {
    let (a, b) = match sign {
        Sign::Plus => (theta[0] - theta[1], theta[2] - theta[3]),
        Sign::Minus => (theta[0] + theta[1], theta[2] + theta[3]),
    };
    a * a + b * b
}

/// Euclidean distance from `θ` to `P±`: `‖w₁ ∓ w₂‖ / √2`.
pub fn euclid_dist_to_plane(theta: &ParamVec, sign: Sign) -> Result<f64> {
    Ok(dist_metric(theta, sign)?.sqrt() * std::f64::consts::FRAC_1_SQRT_2)
}

/// Swaps the two hidden neurons.
pub fn permute(theta: &ParamVec) -> ParamVec {
    ParamVec([theta[1], theta[0], theta[3], theta[2]])
}

/// Negates both weights of one hidden neuron.
pub fn signflip(theta: &ParamVec, neuron: Neuron) -> ParamVec {
    let mut t = *theta;
    let i = match neuron {
        Neuron::First => 0,
        Neuron::Second => 1,
    };
    t[i] = -t[i];
    t[2 + i] = -t[2 + i];
    t
}

/// Which neurons have vanished (`‖wᵢ‖ < tol`), i.e. membership in `P₀ⁱ`.
pub fn vanished_neurons(theta: &ParamVec, tol: f64) -> [bool; 2] {
    std::array::from_fn(|i| {
        let [u, v] = theta.neuron(i);
        (u * u + v * v).sqrt() < tol
    })
}

/// Destination of a finished run: divergence first, then proximity to `P₊`
/// and `P₋` under the squared-norm metric with threshold `D`.
pub fn classify(outcome: &TrainOutcome, threshold_d: f64) -> Classification {
    if matches!(outcome.status, Status::Diverged { .. }) || !outcome.final_theta.is_finite() {
        return Classification {
            label: DestinationLabel::Divergent,
            tie: false,
        };
    }
    classify_point(&outcome.final_theta, threshold_d)
}

/// Proximity classification of a finite end point.
pub fn classify_point(theta: &ParamVec, threshold_d: f64) -> Classification {
    let plus = dist_metric_unchecked(theta, Sign::Plus) < threshold_d;
    let minus = dist_metric_unchecked(theta, Sign::Minus) < threshold_d;
    let label = match (plus, minus) {
        (true, _) => DestinationLabel::PlusPlane,
        (false, true) => DestinationLabel::MinusPlane,
        (false, false) => DestinationLabel::Other,
    };
    Classification {
        label,
        tie: plus && minus,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn metric_examples() {
        let t = ParamVec([1.0, 1.0, 2.0, 2.0]);
        assert_eq!(dist_metric(&t, Sign::Plus).unwrap(), 0.0);
        assert_eq!(dist_metric(&t, Sign::Minus).unwrap(), 20.0);
        let t = ParamVec([1.0, -1.0, 2.0, -2.0]);
        assert_eq!(dist_metric(&t, Sign::Minus).unwrap(), 0.0);
        let e3 = basis_vector(2);
        assert!((dist_metric(&e3, Sign::Plus).unwrap() - 2.0).abs() < 1e-15);
        assert!((euclid_dist_to_plane(&e3, Sign::Plus).unwrap() - 1.0).abs() < 1e-15);
        assert!(dist_metric(&ParamVec([f64::INFINITY, 0.0, 0.0, 0.0]), Sign::Plus).is_err());
    }

    #[test]
    fn unit_transverse_component_is_unit_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let a1: f64 = rng.random_range(-3.0..3.0);
            let a2: f64 = rng.random_range(-3.0..3.0);
            let t = from_plus_coords([a1, a2, phi.cos(), phi.sin()]);
            assert!((euclid_dist_to_plane(&t, Sign::Plus).unwrap() - 1.0).abs() < 1e-12);
            let p = from_plus_coords([a1, a2, 0.0, 0.0]);
            assert!(euclid_dist_to_plane(&p, Sign::Plus).unwrap() < 1e-15);
        }
    }

    #[test]
    fn metric_identity_and_reflections() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = ModelConfig::default();
        for _ in 0..100 {
            let t = ParamVec(std::array::from_fn(|_| rng.random_range(-3.0..3.0)));
            let x: f64 = rng.random_range(-3.0..3.0);
            let d = dist_metric(&t, Sign::Plus).unwrap();
            let e = euclid_dist_to_plane(&t, Sign::Plus).unwrap();
            assert!((d - 2.0 * e * e).abs() <= 1e-14 * d.max(1.0));

            assert_eq!(permute(&permute(&t)), t);
            let s = signflip(&t, Neuron::First);
            assert_eq!(
                dist_metric(&s, Sign::Minus).unwrap().to_bits(),
                dist_metric(&t, Sign::Plus).unwrap().to_bits()
            );
            let y = forward(&t, x, &cfg).unwrap();
            assert_eq!(forward(&s, x, &cfg).unwrap().to_bits(), y.to_bits());
            assert_eq!(forward(&signflip(&t, Neuron::Second), x, &cfg).unwrap().to_bits(), y.to_bits());
            assert_eq!(forward(&permute(&t), x, &cfg).unwrap().to_bits(), y.to_bits());
        }
    }

    #[test]
    fn classify_examples() {
        let done = |theta, status| TrainOutcome {
            final_theta: theta,
            status,
            samples: vec![],
        };
        let c = classify(&done(ParamVec::ZERO, Status::Finite), 3.0);
        assert_eq!(c.label, DestinationLabel::PlusPlane);
        assert!(c.tie);
        let c = classify(&done(ParamVec([9.0; 4]), Status::Diverged { at_epoch: 4 }), 3.0);
        assert_eq!(c.label, DestinationLabel::Divergent);
        let c = classify(&done(ParamVec([2.0, -2.0, 1.0, -1.0]), Status::Finite), 3.0);
        assert_eq!(c.label, DestinationLabel::MinusPlane);
        assert!(!c.tie);
        let c = classify(&done(ParamVec([3.0, 0.0, 0.0, 0.0]), Status::Finite), 3.0);
        assert_eq!(c.label, DestinationLabel::Other);
    }

    #[test]
    fn label_codes_round_trip() {
        for l in DestinationLabel::ALL {
            assert_eq!(DestinationLabel::from_code(l.code()), Some(l));
            assert_eq!(l.swap_planes().swap_planes(), l);
        }
        assert_eq!(DestinationLabel::from_code(4), None);
    }

    #[test]
    fn parity_planes() {
        assert_eq!(vanished_neurons(&ParamVec([0.0, 1.0, 0.0, 1.0]), 1e-2), [true, false]);
        assert_eq!(vanished_neurons(&ParamVec::ZERO, 1e-2), [true, true]);
    }
}
