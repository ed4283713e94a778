//! Shared oracles for the integration and acceptance suites: a central
//! finite-difference gradient checker and a brute-force symmetric
//! eigendecomposition, both independent of the library's backward pass and
//! power-iteration code paths.

use aba::tensor::Tensor;

pub mod gradchecks;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_RTOL: f64 = 1e-4;

/// Central finite differences of `eval` at `params`, one tensor per parameter.
/// `eval` must be a pure function of the parameter values.
pub fn finite_diff_grads(
    params: &[Tensor<f64>],
    eval: &dyn Fn(&[Tensor<f64>]) -> f64,
) -> Vec<Tensor<f64>> {
    let mut grads = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut g = Tensor::zeros(params[pi].shape());
        for e in 0..params[pi].numel() {
            let mut plus = params.to_vec();
            plus[pi].data_mut()[e] += FD_STEP;
            let mut minus = params.to_vec();
            minus[pi].data_mut()[e] -= FD_STEP;
            g.data_mut()[e] = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
        }
        grads.push(g);
    }
    grads
}

/// Largest relative error between analytic and finite-difference gradients.
/// Relative to max(|a|, |b|), with an absolute floor so near-zero entries
/// compare on the finite-difference noise scale rather than blowing up.
pub fn max_grad_error(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric.iter()) {
        assert_eq!(a.shape(), n.shape(), "gradient shape mismatch");
        for (&av, &nv) in a.data().iter().zip(n.data().iter()) {
            let denom = av.abs().max(nv.abs()).max(1e-3);
            worst = worst.max((av - nv).abs() / denom);
        }
    }
    worst
}

/// Assert the gradient check passes; returns the observed worst error.
pub fn assert_grads_close(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>], what: &str) -> f64 {
    let err = max_grad_error(analytic, numeric);
    assert!(
        err <= GRAD_RTOL,
        "{}: autodiff/finite-difference mismatch, relative error {:.3e}",
        what,
        err
    );
    err
}

/// Full eigendecomposition of a symmetric matrix by the cyclic Jacobi
/// method. Returns (eigenvalues, eigenvectors as rows), sorted by
/// descending eigenvalue. Brute-force oracle for the PCA implementation.
pub fn jacobi_eigen(matrix: &[f64], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                off += a[i * d + j] * a[i * d + j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|i| (a[i * d + i], (0..d).map(|k| v[k * d + i]).collect()))
        .collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let eigenvalues = pairs.iter().map(|(l, _)| *l).collect();
    let eigenvectors = pairs.into_iter().map(|(_, vec)| vec).collect();
    (eigenvalues, eigenvectors)
}

/// One-sided sign-test p-value: probability of >= `wins` successes in `n`
/// fair coin flips. Ties must be excluded by the caller.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    // sum_{k=wins..n} C(n,k) / 2^n, computed in log space for safety
    let mut p = 0.0f64;
    for k in wins..=n {
        p += binom(n, k);
    }
    p / 2.0f64.powi(n as i32)
}

fn binom(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut r = 1.0f64;
    for i in 0..k {
        r *= (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Simple deterministic pseudo-random values for test fixtures, decoupled
/// from the library's generators.
pub struct TestRand(u64);

impl TestRand {
    pub fn new(seed: u64) -> Self {
        TestRand(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        // xorshift64*
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    /// Uniform in [lo, hi)
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + u * (hi - lo)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform(1e-12, 1.0);
        let u2 = self.uniform(0.0, 1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn tensor(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.uniform(lo, hi)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    pub fn normal_tensor(&mut self, shape: &[usize], std: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.normal() * std).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    pub fn pick(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}
