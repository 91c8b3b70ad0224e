//! Zero-mean-reversion closed form. At gamma = 0 the pair coupling collapses
//! to sigma^2 min(t_j, t_k), and the partition sum over a tail of sites
//! organizes into cluster coefficients
//!
//!   N_i(phi) = sum_k c_k^(i) e^{k phi sigma^2 t_i},
//!
//! where c_k^(i) sums every size-k subset's fugacity product times its pair
//! Boltzmann factor. Appending the site at t_{j} to subsets of {j+1..n-1}
//! multiplies in L~_j tau and couples it to each of the k-1 existing sites
//! with strength sigma^2 t_j, giving an O(n^2) recursion
//!
//!   c_k = c_k + L~_j tau e^{(k-1) sigma^2 t_j} c_{k-1}
//!
//! that calibrates grids far beyond the enumeration cap.

use crate::error::{Error, Result};
use crate::math::{log_add_exp, logsumexp};
use crate::process::{ProcessSpec, TenorGrid};

fn require_gamma_zero(spec: &ProcessSpec, grid: &TenorGrid) -> Result<()> {
    if !spec.gamma_is_zero(grid.horizon()) {
        return Err(Error::GammaNotZero { gamma_tn: spec.gamma * grid.horizon() });
    }
    Ok(())
}

/// Natural logs of the cluster coefficients c_0..c_m for the subsystem
/// anchored at i, from the tail Libors L~_{i+1}..L~_{n-1}. c_0 = 1 always;
/// c_1 = sum L~_j tau.
pub fn bdt_coefficients(
    tail_libors: &[f64],
    grid: &TenorGrid,
    spec: &ProcessSpec,
    i: usize,
) -> Result<Vec<f64>> {
    require_gamma_zero(spec, grid)?;
    let m = grid.n - 1 - i;
    if tail_libors.len() != m {
        return Err(Error::InvalidParameter(format!(
            "expected {m} tail Libors for anchor {i}, got {}",
            tail_libors.len()
        )));
    }
    let mut ln_c = vec![0.0];
    for j in (i + 1..grid.n).rev() {
        let l = tail_libors[j - i - 1];
        if !(l > 0.0) {
            return Err(Error::NonpositiveLibor { site: j, value: l });
        }
        ln_c = append_site(&ln_c, (l * grid.tau).ln(), spec.sigma * spec.sigma * grid.time(j));
    }
    Ok(ln_c)
}

/// One recursion step: extend coefficients over sites {j+1..} by the site at
/// t_j with log-fugacity `a` and per-partner coupling `s2t` = sigma^2 t_j.
pub(crate) fn append_site(ln_c: &[f64], a: f64, s2t: f64) -> Vec<f64> {
    let mut next = vec![f64::NEG_INFINITY; ln_c.len() + 1];
    next[0] = 0.0;
    for k in 1..next.len() {
        let without = if k < ln_c.len() { ln_c[k] } else { f64::NEG_INFINITY };
        let with = a + (k as f64 - 1.0) * s2t + ln_c[k - 1];
        next[k] = log_add_exp(without, with);
    }
    next
}

/// ln N_i(phi) from log-coefficients: logsumexp_k (ln c_k + k phi sigma^2 t_i).
pub fn bdt_log_n(ln_c: &[f64], spec: &ProcessSpec, grid: &TenorGrid, i: usize, phi: f64) -> f64 {
    let g_i = spec.sigma * spec.sigma * grid.time(i);
    let terms: Vec<f64> = ln_c
        .iter()
        .enumerate()
        .map(|(k, &c)| c + k as f64 * phi * g_i)
        .collect();
    logsumexp(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::{build_subsystem, enumerate_log_partition};
    use crate::math::LogSumAcc;

    /// Literal subset-sum evaluation of the cluster coefficients, independent
    /// of the recursion.
    fn subset_sum_coefficients(
        tail_libors: &[f64],
        grid: &TenorGrid,
        sigma: f64,
        i: usize,
    ) -> Vec<f64> {
        let m = tail_libors.len();
        let mut accs: Vec<LogSumAcc> = (0..=m).map(|_| LogSumAcc::new()).collect();
        for bits in 0..1u64 << m {
            let sites: Vec<usize> =
                (0..m).filter(|s| bits >> s & 1 == 1).map(|s| i + 1 + s).collect();
            let mut w = 0.0;
            for (a, &j) in sites.iter().enumerate() {
                w += (tail_libors[j - i - 1] * grid.tau).ln();
                for &k in &sites[a + 1..] {
                    w += sigma * sigma * grid.time(j.min(k));
                }
            }
            accs[sites.len()].push(w);
        }
        accs.iter().map(|a| a.value()).collect()
    }

    #[test]
    fn trivial_coefficients() {
        let grid = TenorGrid::new(8, 0.25).unwrap();
        let spec = ProcessSpec::new(0.3, 0.0).unwrap();
        let tail = [0.04, 0.06, 0.05, 0.03, 0.07];
        let ln_c = bdt_coefficients(&tail, &grid, &spec, 2).unwrap();
        assert_eq!(ln_c.len(), 6);
        assert_eq!(ln_c[0], 0.0);
        let c1: f64 = tail.iter().map(|l| l * grid.tau).sum();
        assert!((ln_c[1].exp() / c1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn recursion_matches_subset_sum_oracle() {
        let grid = TenorGrid::new(10, 0.25).unwrap();
        let spec = ProcessSpec::new(0.45, 0.0).unwrap();
        let tail = [0.02, 0.08, 0.05, 0.031, 0.044, 0.06, 0.025];
        for i in [2, 5, 8] {
            let t = &tail[..grid.n - 1 - i];
            let fast = bdt_coefficients(t, &grid, &spec, i).unwrap();
            let slow = subset_sum_coefficients(t, &grid, spec.sigma, i);
            for (k, (a, b)) in fast.iter().zip(&slow).enumerate() {
                assert!((a - b).abs() < 1e-13, "i={i} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn coefficients_reproduce_enumeration_in_the_small_gamma_limit() {
        let grid = TenorGrid::new(6, 0.25).unwrap();
        let zero = ProcessSpec::new(0.25, 0.0).unwrap();
        let tiny = ProcessSpec::new(0.25, 1e-9).unwrap();
        let tail = [0.06, 0.04, 0.05, 0.055, 0.045];
        for i in 0..grid.n {
            let t = &tail[..grid.n - 1 - i];
            let ln_c = bdt_coefficients(t, &grid, &zero, i).unwrap();
            for phi in [0.0, 1.0, 2.0] {
                let closed = bdt_log_n(&ln_c, &zero, &grid, i, phi);
                let sub = build_subsystem(t, &grid, &tiny, i).unwrap();
                let enumerated = enumerate_log_partition(&sub, phi).unwrap().log_value;
                let rel = if enumerated == 0.0 {
                    (closed - enumerated).abs()
                } else {
                    (closed / enumerated - 1.0).abs()
                };
                assert!(rel < 1e-6, "i={i} phi={phi}: {closed} vs {enumerated}");
            }
        }
    }

    #[test]
    fn rejects_positive_mean_reversion() {
        let grid = TenorGrid::new(6, 0.25).unwrap();
        let spec = ProcessSpec::new(0.25, 0.01).unwrap();
        assert!(matches!(
            bdt_coefficients(&[0.05; 5], &grid, &spec, 0),
            Err(Error::GammaNotZero { .. })
        ));
    }
}
