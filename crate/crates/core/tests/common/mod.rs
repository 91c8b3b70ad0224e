//! Shared fixtures for the integration tests: randomized market setups and a
//! small dense-Gaussian Monte Carlo oracle used to check closed-form moments.

#![allow(dead_code)]

use latgas_core::{covariance_x, ProcessSpec, TenorGrid, YieldCurve};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A randomly drawn market: grid, process parameters, and a positive curve.
pub struct Setup {
    pub grid: TenorGrid,
    pub spec: ProcessSpec,
    pub curve: YieldCurve,
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draw a setup with `n` in `[n_min, n_max]`, mild volatility, and forwards
/// between 1% and 10%.
pub fn random_setup(rng: &mut ChaCha8Rng, n_min: usize, n_max: usize) -> Setup {
    let n = rng.random_range(n_min..=n_max);
    let tau = if rng.random::<f64>() < 0.5 { 0.25 } else { 0.5 };
    let grid = TenorGrid::new(n, tau).unwrap();
    let spec = ProcessSpec::new(uniform(rng, 0.05, 0.4), uniform(rng, 0.0, 0.1)).unwrap();
    let curve = random_curve(rng, &grid);
    Setup { grid, spec, curve }
}

/// Random positive forwards turned into a discount curve on `grid`.
pub fn random_curve(rng: &mut ChaCha8Rng, grid: &TenorGrid) -> YieldCurve {
    let mut discounts = vec![1.0];
    for _ in 0..grid.n {
        let fwd = uniform(rng, 0.01, 0.10);
        discounts.push(discounts.last().unwrap() / (1.0 + fwd * grid.tau));
    }
    YieldCurve::from_discounts(discounts).unwrap()
}

/// Dense Cholesky factor (lower triangular, row-major) of a k-by-k matrix.
/// Returns `None` when the matrix is not numerically positive definite.
pub fn cholesky(mat: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = mat[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Some(l)
}

/// Covariance matrix of the driver sampled on the listed dates.
pub fn covariance_matrix(spec: ProcessSpec, times: &[f64]) -> Vec<f64> {
    let k = times.len();
    let mut mat = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            mat[i * k + j] = covariance_x(&spec, times[i], times[j]).unwrap();
        }
    }
    mat
}

/// Monte Carlo estimate of `E[exp(sum_j c_j x(t_j))]` where `x` is the
/// centered Gaussian driver. Draws correlated normals through a Cholesky
/// factor; returns `(mean, stderr)`.
pub fn gaussian_mc_exp_sum(
    spec: ProcessSpec,
    times: &[f64],
    coeffs: &[f64],
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    assert_eq!(times.len(), coeffs.len());
    let k = times.len();
    let mat = covariance_matrix(spec, times);
    // Tiny ridge keeps the factorization alive when sigma or the spacing is
    // small enough to make the matrix numerically singular.
    let scale = mat.iter().cloned().fold(0.0_f64, f64::max).max(1e-30);
    let mut ridged = mat.clone();
    for i in 0..k {
        ridged[i * k + i] += 1e-12 * scale;
    }
    let l = cholesky(&ridged, k).expect("covariance should be positive definite");
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut z = vec![0.0; k];
    for _ in 0..draws {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let mut arg = 0.0;
        for i in 0..k {
            let mut xi = 0.0;
            for j in 0..=i {
                xi += l[i * k + j] * z[j];
            }
            arg += coeffs[i] * xi;
        }
        let v = arg.exp();
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / draws as f64;
    let var = (sumsq / draws as f64 - mean * mean).max(0.0) / draws as f64;
    (mean, var.sqrt())
}
