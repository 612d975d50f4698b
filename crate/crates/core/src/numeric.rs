//! Shared numeric kernels: activations, row softmax, L1 distance, a seedable
//! deterministic RNG, and the central-difference gradient oracle used to check
//! backpropagation in tests.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Dense row-major matrix of 64-bit floats.
pub type Matrix = Array2<f64>;
/// Dense vector of 64-bit floats.
pub type Vector = Array1<f64>;

/// Numerically stable logistic function; saturates for large |x| instead of
/// overflowing.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function expressed in terms of its output.
pub fn sigmoid_prime_from_output(y: f64) -> f64 {
    y * (1.0 - y)
}

/// Row-wise softmax with per-row max subtraction so that entries of large
/// magnitude cannot overflow.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}

/// Softmax of a single vector, same stabilization as [`softmax_rows`].
pub fn softmax(v: &Vector) -> Vector {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = v.mapv(|x| (x - max).exp());
    let sum = out.sum();
    out.mapv_inplace(|x| x / sum);
    out
}

/// Sum of absolute coordinate differences.
pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "l1_distance: lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Central-difference gradient of a scalar function, one coordinate at a time:
/// (f(x + h e_i) - f(x - h e_i)) / (2h).
pub fn finite_diff_grad<F>(mut f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if h <= 0.0 {
        return Err(Error::Validation(format!("finite_diff_grad: h = {h} must be > 0")));
    }
    let mut work = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + h;
        let fp = f(&work);
        work[i] = orig - h;
        let fm = f(&work);
        work[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite_diff_grad: f non-finite at coordinate {i}"
            )));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Deterministic seeded generator (ChaCha8). The same seed yields the same
/// stream on every platform. Every stochastic operation in this crate takes
/// one of these explicitly; there is no global RNG state.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform draw in 0..n.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let limit = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < limit {
                return (v % n) as usize;
            }
        }
    }

    /// Standard Box-Muller normal draw.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        mean + std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Bernoulli draw with success probability p.
    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Uniform random permutation of 0..n.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    /// Derives an independent generator, consuming one draw from this one.
    pub fn fork(&mut self) -> Rng {
        Rng::from_seed(self.next_u64())
    }
}

/// Returns an error if any entry of the slice is NaN or infinite.
pub fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_symmetry_point() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_scalar_value() {
        // 1 / (1 + e^-2), high-precision reference value.
        assert_abs_diff_eq!(sigmoid(2.0), 0.8807970779778823, epsilon = 1e-15);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(1e4), 1.0);
        assert_eq!(sigmoid(-1e4), 0.0);
        assert!(sigmoid(f64::MAX).is_finite());
        assert!(sigmoid(-f64::MAX).is_finite());
    }

    #[test]
    fn softmax_uniform_row() {
        let m = array![[0.0, 0.0, 0.0]];
        let s = softmax_rows(&m);
        for x in s.iter() {
            assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_scalar_values() {
        let s = softmax_rows(&array![[1.0, 2.0]]);
        assert_abs_diff_eq!(s[[0, 0]], 0.2689414213699951, epsilon = 1e-15);
        assert_abs_diff_eq!(s[[0, 1]], 0.7310585786300049, epsilon = 1e-15);
    }

    #[test]
    fn softmax_large_magnitude_rows_sum_to_one() {
        let m = array![[1e3, -1e3, 999.0, 0.0], [-1e3, -1e3, -1e3, -1e3]];
        let s = softmax_rows(&m);
        for row in s.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(l1_distance(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 3.0);
        assert!(matches!(
            l1_distance(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn finite_diff_quadratic() {
        let g = finite_diff_grad(|t| t.iter().map(|x| x * x).sum(), &[1.0, -2.0], 1e-5).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], -4.0, epsilon = 1e-8);
    }

    #[test]
    fn finite_diff_constant() {
        let g = finite_diff_grad(|_| 7.5, &[0.3, 0.4, 0.5], 1e-5).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn finite_diff_rejects_non_finite() {
        let r = finite_diff_grad(|t| 1.0 / (t[0] - t[0]), &[1.0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = Rng::from_seed(11);
        for _ in 0..5 {
            let a = Matrix::from_shape_fn((10, 10), |_| rng.normal(0.0, 1.0));
            let b = Matrix::from_shape_fn((10, 10), |_| rng.normal(0.0, 1.0));
            let fast = a.dot(&b);
            for i in 0..10 {
                for j in 0..10 {
                    let mut acc = 0.0;
                    for k in 0..10 {
                        acc += a[[i, k]] * b[[k, j]];
                    }
                    let denom = acc.abs().max(1.0);
                    assert!((fast[[i, j]] - acc).abs() / denom < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rng_same_seed_same_stream() {
        let mut a = Rng::from_seed(123456789);
        let mut b = Rng::from_seed(123456789);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_below_is_in_range() {
        let mut rng = Rng::from_seed(3);
        for _ in 0..1000 {
            assert!(rng.below(7) < 7);
        }
    }

    proptest! {
        #[test]
        fn sigmoid_sums_to_one(x in -700.0f64..700.0) {
            let s = sigmoid(x) + sigmoid(-x);
            prop_assert!((s - 1.0).abs() < 1e-15);
        }

        #[test]
        fn softmax_shift_invariance(c in -100.0f64..100.0, k in -10.0f64..10.0) {
            let a = softmax_rows(&array![[c, c + k]]);
            let b = softmax_rows(&array![[0.0, k]]);
            prop_assert!((a[[0,0]] - b[[0,0]]).abs() < 1e-12);
            prop_assert!((a[[0,1]] - b[[0,1]]).abs() < 1e-12);
        }

        #[test]
        fn l1_symmetric(a in proptest::collection::vec(-100.0f64..100.0, 6),
                        b in proptest::collection::vec(-100.0f64..100.0, 6)) {
            prop_assert_eq!(l1_distance(&a, &b).unwrap(), l1_distance(&b, &a).unwrap());
        }
    }
}
