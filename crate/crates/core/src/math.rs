//! Numeric primitives: stable log-sum-exp accumulation, expm1-based variance
//! helpers, and Gauss–Hermite / Gauss–Legendre quadrature rules.

use std::f64::consts::PI;

/// ln(e^a + e^b) without overflow; tolerates -inf on either side.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln Σ e^{x_k} over a slice, shift-by-max form.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Deterministic pairwise reduction tree over per-chunk log-sums. The tree
/// shape depends only on the slice length, so the result is bit-stable for a
/// fixed partition of work regardless of how the chunks were produced.
pub fn pairwise_log_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => f64::NEG_INFINITY,
        1 => xs[0],
        n => {
            let mid = n / 2;
            log_add_exp(pairwise_log_sum(&xs[..mid]), pairwise_log_sum(&xs[mid..]))
        }
    }
}

/// Streaming log-sum-exp with a running maximum; exponents near the phase
/// transition span hundreds of units, so terms are rescaled on the fly.
#[derive(Debug, Clone)]
pub struct LogSumAcc {
    max: f64,
    sum: f64,
}

impl LogSumAcc {
    pub fn new() -> Self {
        LogSumAcc { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    pub fn push(&mut self, w: f64) {
        if w == f64::NEG_INFINITY {
            return;
        }
        if w <= self.max {
            self.sum += (w - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - w).exp() + 1.0;
            self.max = w;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSumAcc {
    fn default() -> Self {
        Self::new()
    }
}

/// (1 - e^{-x})/x for x >= 0, with the exact x = 0 limit of 1. Built on expm1
/// so small mean reversions suffer no cancellation.
pub fn em1_over(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Nodes and weights of the n-point Gauss–Hermite rule for weight e^{-x^2},
/// by Newton iteration on the orthonormal Hermite recurrence. Nodes come out
/// symmetric; weights sum to sqrt(pi).
pub fn hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..half {
        // root guesses from the largest down (Stroud–Secrest style)
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// E[f(x)] for x ~ N(0, var) using a Gauss–Hermite rule.
pub fn normal_expect(var: f64, rule: &(Vec<f64>, Vec<f64>), f: impl Fn(f64) -> f64) -> f64 {
    if var == 0.0 {
        return f(0.0);
    }
    let scale = (2.0 * var).sqrt();
    let (nodes, weights) = rule;
    let mut acc = 0.0;
    for (&t, &w) in nodes.iter().zip(weights) {
        acc += w * f(scale * t);
    }
    acc / PI.sqrt()
}

/// ln E[e^{log_f(x)}] for x ~ N(0, var); summed in log space so integrands far
/// above the overflow line stay finite.
pub fn normal_log_expect(
    var: f64,
    rule: &(Vec<f64>, Vec<f64>),
    log_f: impl Fn(f64) -> f64,
) -> f64 {
    if var == 0.0 {
        return log_f(0.0);
    }
    let scale = (2.0 * var).sqrt();
    let (nodes, weights) = rule;
    let mut acc = LogSumAcc::new();
    for (&t, &w) in nodes.iter().zip(weights) {
        acc.push(w.ln() + log_f(scale * t));
    }
    acc.value() - 0.5 * PI.ln()
}

/// Nodes and weights of the n-point Gauss–Legendre rule mapped to [0, 1];
/// weights sum to 1.
pub fn legendre_rule_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        // roots on [-1,1] come in +/- pairs; map t -> (t+1)/2
        x[i] = (1.0 - z) / 2.0;
        x[n - 1 - i] = (1.0 + z) / 2.0;
        let wi = 1.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_matches_direct_sum() {
        let v = log_add_exp(0.3_f64.ln(), 0.4_f64.ln());
        assert!((v - 0.7_f64.ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.5), 2.5);
        assert_eq!(log_add_exp(2.5, f64::NEG_INFINITY), 2.5);
    }

    #[test]
    fn logsumexp_handles_huge_offsets() {
        let xs = [1000.0, 1002.0, 999.0];
        let expected = 1002.0 + (1.0 + (-2.0_f64).exp() + (-3.0_f64).exp()).ln();
        assert!((logsumexp(&xs) - expected).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn streaming_acc_agrees_with_slice_form() {
        let xs = [-3.0, 700.0, 0.5, 699.0, f64::NEG_INFINITY, 12.0];
        let mut acc = LogSumAcc::new();
        for &x in &xs {
            acc.push(x);
        }
        assert!((acc.value() - logsumexp(&xs)).abs() < 1e-12);
        assert_eq!(LogSumAcc::new().value(), f64::NEG_INFINITY);
    }

    #[test]
    fn pairwise_tree_agrees_with_slice_form() {
        let xs: Vec<f64> = (0..17).map(|k| (k as f64 * 0.7).sin() * 40.0).collect();
        assert!((pairwise_log_sum(&xs) - logsumexp(&xs)).abs() < 1e-12);
    }

    #[test]
    fn em1_over_limits() {
        assert_eq!(em1_over(0.0), 1.0);
        let x = 1e-9;
        assert!((em1_over(x) - (1.0 - x / 2.0)).abs() < 1e-12);
        assert!((em1_over(2.0) - (1.0 - (-2.0_f64).exp()) / 2.0).abs() < 1e-16);
    }

    #[test]
    fn hermite_rule_integrates_gaussian_moments() {
        let rule = hermite_rule(64);
        let total: f64 = rule.1.iter().sum();
        assert!((total / PI.sqrt() - 1.0).abs() < 1e-13);
        // E[x^2] = 1, E[x^4] = 3, E[x^8] = 105 for x ~ N(0,1)
        for (p, exact) in [(2, 1.0), (4, 3.0), (8, 105.0)] {
            let m = normal_expect(1.0, &rule, |x| x.powi(p));
            assert!((m / exact - 1.0).abs() < 1e-12, "moment {p}: {m}");
        }
        // E[e^{ax}] = e^{a^2/2}
        for a in [0.5, 1.5, 3.0] {
            let m = normal_expect(1.0, &rule, |x| (a * x).exp());
            assert!((m / (0.5 * a * a).exp() - 1.0).abs() < 1e-12, "a={a}: {m}");
        }
        let lm = normal_log_expect(2.0, &rule, |x| 1.5 * x);
        assert!((lm - 0.5 * 1.5 * 1.5 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_rule_var_zero_is_point_mass() {
        let rule = hermite_rule(16);
        assert_eq!(normal_expect(0.0, &rule, |x| x + 7.0), 7.0);
    }

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        for n in [8, 12] {
            let (xs, ws) = legendre_rule_01(n);
            let total: f64 = ws.iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
            for k in 0..2 * n {
                let q: f64 = xs.iter().zip(&ws).map(|(&x, &w)| w * x.powi(k as i32)).sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((q - exact).abs() < 1e-13, "n={n} k={k}: {q} vs {exact}");
            }
        }
    }
}
