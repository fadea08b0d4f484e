//! Fixed-size 4×4 matrices and a Householder QR with a non-negative
//! diagonal in `R`.

use std::fmt;

/// Row-major 4×4 matrix.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Mat4(pub [[f64; 4]; 4]);

impl fmt::Debug for Mat4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat4[")?;
        for row in &self.0 {
            writeln!(f, "  {:+.6e} {:+.6e} {:+.6e} {:+.6e}", row[0], row[1], row[2], row[3])?;
        }
        write!(f, "]")
    }
}

impl Mat4 {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Mat4(m)
    }

    pub fn from_columns(cols: [[f64; 4]; 4]) -> Self {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| cols[j][i])))
    }

    pub fn column(&self, j: usize) -> [f64; 4] {
        std::array::from_fn(|i| self.0[i][j])
    }

    pub fn transpose(&self) -> Self {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i])))
    }

    pub fn mul(&self, other: &Mat4) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += self.0[i][k] * other.0[k][j];
                }
                *e = acc;
            }
        }
        Mat4(out)
    }

    pub fn mul_vec(&self, v: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| (0..4).map(|k| self.0[i][k] * v[k]).sum())
    }

    pub fn scale(&self, s: f64) -> Mat4 {
        Mat4(self.0.map(|row| row.map(|x| s * x)))
    }

    pub fn sub(&self, other: &Mat4) -> Mat4 {
        Mat4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j] - other.0[i][j])))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    /// Determinant by cofactor expansion along 2×2 minors of the first two rows.
    pub fn det(&self) -> f64 {
        let m = &self.0;
        let s = |a: usize, b: usize, r: usize| m[r][a] * m[r + 1][b] - m[r][b] * m[r + 1][a];
        s(0, 1, 0) * s(2, 3, 2) - s(0, 2, 0) * s(1, 3, 2) + s(0, 3, 0) * s(1, 2, 2)
            + s(1, 2, 0) * s(0, 3, 2)
            - s(1, 3, 0) * s(0, 2, 2)
            + s(2, 3, 0) * s(0, 1, 2)
    }

    /// `max |QᵀQ − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        self.transpose().mul(self).sub(&Mat4::identity()).max_abs()
    }
}

/// Householder QR `A = QR` with `R_ii ≥ 0`. Returns `None` when a column is
/// (numerically) dependent on the previous ones.
pub fn qr(a: &Mat4) -> Option<(Mat4, Mat4)> {
    let mut r = a.0;
    let mut q = Mat4::identity().0;
    let scale = a.max_abs();
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    for k in 0..3 {
        let norm: f64 = (k..4).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[k][k] > 0.0 { -norm } else { norm };
        let mut v = [0.0; 4];
        for i in k..4 {
            v[i] = r[i][k];
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..4).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R ← (I − 2vvᵀ/vᵀv) R
        for j in 0..4 {
            let dot: f64 = (k..4).map(|i| v[i] * r[i][j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..4 {
                r[i][j] -= f * v[i];
            }
        }
        // Q ← Q (I − 2vvᵀ/vᵀv)
        for row in q.iter_mut() {
            let dot: f64 = (k..4).map(|i| row[i] * v[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..4 {
                row[i] -= f * v[i];
            }
        }
        for i in (k + 1)..4 {
            r[i][k] = 0.0;
        }
    }
    for k in 0..4 {
        if r[k][k] < 0.0 {
            for x in r[k].iter_mut() {
                *x = -*x;
            }
            for row in q.iter_mut() {
                row[k] = -row[k];
            }
        }
    }
    let tiny = scale * 4.0 * f64::EPSILON * 16.0;
    if (0..4).any(|k| !(r[k][k] > tiny) || !r[k][k].is_finite()) {
        return None;
    }
    Some((Mat4(q), Mat4(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng) -> Mat4 {
        Mat4(std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))))
    }

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = random(&mut rng);
            let (q, r) = qr(&a).unwrap();
            assert!(q.orthonormality_error() < 1e-14);
            assert!(q.mul(&r).sub(&a).max_abs() < 1e-14);
            for i in 0..4 {
                assert!(r.0[i][i] > 0.0);
                for j in 0..i {
                    assert_eq!(r.0[i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn qr_rejects_rank_deficient() {
        let mut a = Mat4::identity();
        a.0[3][3] = 0.0;
        assert!(qr(&a).is_none());
        assert!(qr(&Mat4::default()).is_none());
    }

    #[test]
    fn det_matches_product_of_r_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random(&mut rng);
            let (_, r) = qr(&a).unwrap();
            let prod: f64 = (0..4).map(|i| r.0[i][i]).product();
            assert!((a.det().abs() - prod).abs() < 1e-13);
        }
    }
}
