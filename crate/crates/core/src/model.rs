//! The minimal two-layer tanh network with mean-field scaling:
//!
//! `f(x) = Σᵢ α₂ wᵢ⁽²⁾ tanh(α₁ wᵢ⁽¹⁾ x)` for `i = 1, 2`,
//!
//! trained by full-batch gradient descent on a mean squared error loss.
//! Derivatives are closed form. All sums run in dataset order and the two
//! neurons are evaluated with identical expressions, so a point with
//! `w₁ = w₂` bitwise produces bitwise-equal per-neuron gradients.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::linalg::Mat4;

/// A point of the four-dimensional parameter space, laid out as
/// `(w₁⁽¹⁾, w₂⁽¹⁾, w₁⁽²⁾, w₂⁽²⁾)`: input weights first, then output weights.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ParamVec(pub [f64; 4]);

impl ParamVec {
    pub const ZERO: ParamVec = ParamVec([0.0; 4]);

    pub fn new(v: [f64; 4]) -> Self {
        ParamVec(v)
    }

    /// Weights of hidden neuron `i` (0-based): `(input weight, output weight)`.
    pub fn neuron(&self, i: usize) -> [f64; 2] {
        [self.0[i], self.0[2 + i]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &ParamVec) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn add(&self, other: &ParamVec) -> ParamVec {
        ParamVec(std::array::from_fn(|k| self.0[k] + other.0[k]))
    }

    pub fn sub(&self, other: &ParamVec) -> ParamVec {
        ParamVec(std::array::from_fn(|k| self.0[k] - other.0[k]))
    }

    pub fn scale(&self, s: f64) -> ParamVec {
        ParamVec(self.0.map(|x| s * x))
    }

    pub fn to_bits(&self) -> [u64; 4] {
        self.0.map(f64::to_bits)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ParamVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParamVec {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<[f64; 4]> for ParamVec {
    fn from(v: [f64; 4]) -> Self {
        ParamVec(v)
    }
}

/// Mean-field scaling factors of the two layers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            alpha1: std::f64::consts::SQRT_2,
            alpha2: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha1 > 0.0 && self.alpha2 > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("scaling factors must be positive".into()))
        }
    }
}

/// Scalar regression data. Pair order is part of the dataset's identity:
/// every reduction iterates in this order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pairs: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Dataset { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// SHA-256 over the little-endian bits of every value in pair order.
    pub fn sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (x, y) in &self.pairs {
            h.update(x.to_le_bytes());
            h.update(y.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn check_finite(theta: &ParamVec) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Contribution of one neuron: `α₂ v tanh(α₁ u x)`.
#[inline]
fn neuron_out(u: f64, v: f64, x: f64, cfg: &ModelConfig) -> f64 {
    cfg.alpha2 * v * (cfg.alpha1 * u * x).tanh()
}

#[inline]
fn forward_unchecked(theta: &ParamVec, x: f64, cfg: &ModelConfig) -> f64 {
    neuron_out(theta[0], theta[2], x, cfg) + neuron_out(theta[1], theta[3], x, cfg)
}

pub fn forward(theta: &ParamVec, x: f64, cfg: &ModelConfig) -> Result<f64> {
    check_finite(theta)?;
    Ok(forward_unchecked(theta, x, cfg))
}

pub fn loss(theta: &ParamVec, data: &Dataset, cfg: &ModelConfig) -> Result<f64> {
    check_finite(theta)?;
    Ok(loss_unchecked(theta, data, cfg))
}

pub(crate) fn loss_unchecked(theta: &ParamVec, data: &Dataset, cfg: &ModelConfig) -> f64 {
    let mut acc = 0.0;
    for &(x, y) in data.pairs() {
        let r = forward_unchecked(theta, x, cfg) - y;
        acc += r * r;
    }
    acc / data.len() as f64
}

pub fn grad(theta: &ParamVec, data: &Dataset, cfg: &ModelConfig) -> Result<ParamVec> {
    check_finite(theta)?;
    Ok(grad_unchecked(theta, data, cfg))
}

/// `∇L = (2/N) Σ r ∇f` with `r = f(x) − y`. Diverging iterates are allowed
/// through so that the training loop can detect escape itself.
pub(crate) fn grad_unchecked(theta: &ParamVec, data: &Dataset, cfg: &ModelConfig) -> ParamVec {
    let (a1, a2) = (cfg.alpha1, cfg.alpha2);
    let mut g = [0.0; 4];
    for &(x, y) in data.pairs() {
        let s0 = (a1 * theta[0] * x).tanh();
        let s1 = (a1 * theta[1] * x).tanh();
        let f = a2 * theta[2] * s0 + a2 * theta[3] * s1;
        let r = f - y;
        // df/du_i = α₂ v_i (1 − s_i²) α₁ x ; df/dv_i = α₂ s_i
        g[0] += r * (a2 * theta[2] * (1.0 - s0 * s0) * (a1 * x));
        g[1] += r * (a2 * theta[3] * (1.0 - s1 * s1) * (a1 * x));
        g[2] += r * (a2 * s0);
        g[3] += r * (a2 * s1);
    }
    let c = 2.0 / data.len() as f64;
    ParamVec(g.map(|v| c * v))
}

pub fn hessian(theta: &ParamVec, data: &Dataset, cfg: &ModelConfig) -> Result<Mat4> {
    check_finite(theta)?;
    Ok(hessian_unchecked(theta, data, cfg))
}

/// `H = (2/N) Σ (∇f ∇fᵀ + r ∇²f)`. The only non-zero second derivatives of
/// `f` are `∂²f/∂uᵢ²` and `∂²f/∂uᵢ∂vᵢ`; neurons do not interact in `∇²f`.
pub(crate) fn hessian_unchecked(theta: &ParamVec, data: &Dataset, cfg: &ModelConfig) -> Mat4 {
    let (a1, a2) = (cfg.alpha1, cfg.alpha2);
    let mut h = [[0.0; 4]; 4];
    for &(x, y) in data.pairs() {
        let s = [(a1 * theta[0] * x).tanh(), (a1 * theta[1] * x).tanh()];
        let v = [theta[2], theta[3]];
        let f = a2 * v[0] * s[0] + a2 * v[1] * s[1];
        let r = f - y;
        let sech2 = [1.0 - s[0] * s[0], 1.0 - s[1] * s[1]];
        let df = [
            a2 * v[0] * sech2[0] * (a1 * x),
            a2 * v[1] * sech2[1] * (a1 * x),
            a2 * s[0],
            a2 * s[1],
        ];
        for i in 0..4 {
            for j in 0..4 {
                h[i][j] += df[i] * df[j];
            }
        }
        for i in 0..2 {
            // d/dz (1 − tanh²z) = −2 tanh z (1 − tanh² z)
            let duu = a2 * v[i] * (-2.0 * s[i] * sech2[i]) * (a1 * x) * (a1 * x);
            let duv = a2 * sech2[i] * (a1 * x);
            h[i][i] += r * duu;
            h[i][2 + i] += r * duv;
            h[2 + i][i] += r * duv;
        }
    }
    let c = 2.0 / data.len() as f64;
    for row in h.iter_mut() {
        for e in row.iter_mut() {
            *e *= c;
        }
    }
    Mat4(h)
}
