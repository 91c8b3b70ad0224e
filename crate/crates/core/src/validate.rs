//! Runtime self-test battery.
//!
//! Re-checks the load-bearing identities of the crate on randomized inputs at
//! run time, independently of the compiled-in test suite: process covariances,
//! the Gaussian moment identity against a brute-force Gaussian sampler, exact
//! enumeration against a naive reference, calibration round-trips, martingale
//! pricing under the terminal measure, sampler and path-oracle agreement with
//! enumeration, and determinism of every seeded estimate. The battery powers
//! the `validate` command; a fault hook lets tests corrupt one ingredient and
//! confirm the right invariant trips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::{calibrate, convexity_expectation_n, libor_moment, Engine};
use crate::curve::YieldCurve;
use crate::gas::{
    build_subsystem, config_log_weight, enumerate_log_partition, flip_log_gain,
    naive_log_partition, occupancy_expectation, GasSubsystem, Occupation,
};
use crate::math::{hermite_rule, log_add_exp, normal_expect, normal_log_expect};
use crate::paths::{mc_convexity_n, simulate_paths};
use crate::process::{
    covariance_x, gaussian_moment_identity, variance_g, ProcessSpec, TenorGrid,
};
use crate::sampler::{
    estimate_lnz_thermodynamic, estimate_occupancy, ChainConfig, CouplingPath,
};

/// Deliberate corruption for exercising the battery itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of every pair coupling before the attraction check.
    NegateCouplings,
}

#[derive(Debug, Clone)]
pub struct BatteryConfig {
    pub seed: u64,
    /// Paths per Monte Carlo estimate.
    pub mc_paths: usize,
    /// Random configurations in the cross-engine agreement suite.
    pub engine_cases: usize,
    /// Largest tenor count for randomized configurations.
    pub n_max: usize,
    pub fault: Option<Fault>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig { seed: 20268, mc_paths: 200_000, engine_cases: 20, n_max: 12, fault: None }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &'static str, detail: String) -> Self {
        CheckResult { name, passed: true, detail }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        CheckResult { name, passed: false, detail }
    }

    fn graded(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult { name, passed, detail }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Random positive-forward setup within the exactly-solvable range.
fn random_setup(rng: &mut ChaCha8Rng, n_max: usize) -> (TenorGrid, ProcessSpec, YieldCurve) {
    let n = rng.random_range(4..=n_max);
    let tau = if rng.random::<bool>() { 0.25 } else { 0.5 };
    let sigma = uniform(rng, 0.05, 0.4);
    let gamma = uniform(rng, 0.0, 0.1);
    let grid = TenorGrid::new(n, tau).expect("valid grid");
    let spec = ProcessSpec::new(sigma, gamma).expect("valid process");
    let mut discounts = vec![1.0];
    for _ in 0..n {
        let fwd = uniform(rng, 0.01, 0.10);
        discounts.push(discounts.last().unwrap() / (1.0 + fwd * tau));
    }
    (grid, spec, YieldCurve::from_discounts(discounts).expect("valid curve"))
}

/// Lower-triangular Cholesky factor, or None if the matrix is not positive
/// definite (after whatever ridge the caller added).
fn cholesky(mat: &[f64], k: usize) -> Option<Vec<f64>> {
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

fn check_covariance_symmetry(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "covariance-symmetry";
    for _ in 0..50 {
        let spec = ProcessSpec::new(uniform(rng, 0.0, 0.6), uniform(rng, 0.0, 0.2)).unwrap();
        let (t1, t2) = (uniform(rng, 0.0, 10.0), uniform(rng, 0.0, 10.0));
        let a = covariance_x(&spec, t1, t2).unwrap();
        let b = covariance_x(&spec, t2, t1).unwrap();
        if a != b {
            return CheckResult::fail(name, format!("X({t1},{t2}) = {a} != {b}"));
        }
    }
    CheckResult::pass(name, "50 random argument swaps identical".into())
}

fn check_variance_consistency(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "variance-consistency";
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let spec = ProcessSpec::new(uniform(rng, 0.0, 0.6), uniform(rng, 0.0, 0.2)).unwrap();
        let t = uniform(rng, 0.0, 10.0);
        let diag = covariance_x(&spec, t, t).unwrap();
        let g = variance_g(&spec, t).unwrap();
        worst = worst.max((diag - g).abs());
    }
    CheckResult::graded(name, worst < 1e-14, format!("max |X(t,t) - G(t)| = {worst:.2e}"))
}

fn check_covariance_psd(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "covariance-psd";
    for case in 0..20 {
        let spec = ProcessSpec::new(uniform(rng, 0.05, 0.6), uniform(rng, 0.0, 0.2)).unwrap();
        let k = rng.random_range(2..=6usize);
        let mut dates: Vec<f64> = (0..k).map(|_| uniform(rng, 0.1, 10.0)).collect();
        dates.sort_by(|a, b| a.total_cmp(b));
        let mut mat = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                mat[i * k + j] = covariance_x(&spec, dates[i], dates[j]).unwrap();
            }
        }
        let ridge = 1e-12 * mat.iter().cloned().fold(0.0f64, f64::max);
        for i in 0..k {
            mat[i * k + i] += ridge;
        }
        if cholesky(&mat, k).is_none() {
            return CheckResult::fail(name, format!("case {case}: Gram matrix not PSD"));
        }
    }
    CheckResult::pass(name, "20 random date sets factor as PSD".into())
}

fn check_limit_continuity() -> CheckResult {
    let name = "limit-continuity";
    let mut worst = 0.0f64;
    for sigma in [0.1, 0.3, 0.6] {
        let zero = ProcessSpec::new(sigma, 0.0).unwrap();
        let eps = ProcessSpec::new(sigma, 1e-9).unwrap();
        for t in [0.5, 2.0, 10.0] {
            let rel = variance_g(&eps, t).unwrap() / variance_g(&zero, t).unwrap() - 1.0;
            worst = worst.max(rel.abs());
            let rel = covariance_x(&eps, t, t + 1.0).unwrap()
                / covariance_x(&zero, t, t + 1.0).unwrap()
                - 1.0;
            worst = worst.max(rel.abs());
        }
    }
    CheckResult::graded(name, worst < 1e-6, format!("max relative jump at gamma=1e-9: {worst:.2e}"))
}

fn check_moment_identity_mc(rng: &mut ChaCha8Rng, draws: usize) -> CheckResult {
    let name = "moment-identity-mc";
    for case in 0..5 {
        let grid = TenorGrid::new(rng.random_range(3..=6usize), 0.5).unwrap();
        let spec = ProcessSpec::new(uniform(rng, 0.1, 0.5), uniform(rng, 0.0, 0.15)).unwrap();
        let mut occ = vec![0u8; grid.n + 1];
        let mut dates = Vec::new();
        for (k, slot) in occ.iter_mut().enumerate().skip(1) {
            if rng.random::<f64>() < 0.6 {
                *slot = 1;
                dates.push(grid.time(k));
            }
        }
        if dates.is_empty() {
            occ[grid.n] = 1;
            dates.push(grid.horizon());
        }
        let closed = gaussian_moment_identity(&spec, &grid, &occ, 0.0, 0.0).unwrap().exp();
        let k = dates.len();
        let mut mat = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                mat[a * k + b] = covariance_x(&spec, dates[a], dates[b]).unwrap();
            }
        }
        let ridge = 1e-12 * mat.iter().cloned().fold(0.0f64, f64::max);
        for a in 0..k {
            mat[a * k + a] += ridge;
        }
        let Some(l) = cholesky(&mat, k) else {
            return CheckResult::fail(name, format!("case {case}: covariance not PSD"));
        };
        let shift: f64 = dates.iter().map(|&t| 0.5 * variance_g(&spec, t).unwrap()).sum();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut z = vec![0.0; k];
        for _ in 0..draws {
            for zk in z.iter_mut() {
                *zk = rng.sample(rand_distr::StandardNormal);
            }
            let mut expo = -shift;
            for a in 0..k {
                for (b, &zb) in z.iter().enumerate().take(a + 1) {
                    expo += l[a * k + b] * zb;
                }
            }
            let v = expo.exp();
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / draws as f64;
        let se = ((sumsq / draws as f64 - mean * mean) / draws as f64).sqrt();
        let gap = (mean - closed).abs();
        if gap > 3.5 * se {
            return CheckResult::fail(
                name,
                format!("case {case}: MC {mean:.6} vs closed {closed:.6} ({:.1} s.e.)", gap / se),
            );
        }
    }
    CheckResult::pass(name, "5 random occupation sets within 3.5 s.e.".into())
}

fn check_enumeration_exactness(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "enumeration-exactness";
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (grid, spec, curve) = random_setup(rng, 12);
        let i = rng.random_range(0..grid.n.saturating_sub(2));
        let tail: Vec<f64> = (i + 1..grid.n).map(|k| curve.forward(k, grid.tau)).collect();
        let sub = build_subsystem(&tail, &grid, &spec, i).unwrap();
        let phi = uniform(rng, 0.0, 2.0);
        let fast = enumerate_log_partition(&sub, phi).unwrap().log_value;
        let slow = naive_log_partition(&sub, phi).unwrap();
        worst = worst.max((fast - slow).abs());
    }
    CheckResult::graded(name, worst < 1e-12, format!("max |gray - naive| = {worst:.2e}"))
}

fn check_fluctuation_dissipation(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "fluctuation-dissipation";
    let (grid, spec, curve) = random_setup(rng, 10);
    let tail: Vec<f64> = (1..grid.n).map(|k| curve.forward(k, grid.tau)).collect();
    let sub = build_subsystem(&tail, &grid, &spec, 0).unwrap();
    let phi = 0.7;
    let h = 1e-5;
    let up = enumerate_log_partition(&sub, phi + h).unwrap().log_value;
    let down = enumerate_log_partition(&sub, phi - h).unwrap().log_value;
    let slope = (up - down) / (2.0 * h);
    let occ = occupancy_expectation(&sub, phi).unwrap();
    let expect: f64 =
        sub.anchor_variance * occ.iter().zip(&sub.decay).map(|(n, w)| n * w).sum::<f64>();
    let gap = (slope - expect).abs();
    CheckResult::graded(name, gap < 1e-6, format!("|d lnZ/d phi - G <n.w>| = {gap:.2e}"))
}

fn check_partition_convexity(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "partition-convexity";
    let (grid, spec, curve) = random_setup(rng, 10);
    let tail: Vec<f64> = (1..grid.n).map(|k| curve.forward(k, grid.tau)).collect();
    let sub = build_subsystem(&tail, &grid, &spec, 0).unwrap();
    let phis: Vec<f64> = (0..21).map(|k| 0.1 * k as f64).collect();
    let lnz: Vec<f64> =
        phis.iter().map(|&p| enumerate_log_partition(&sub, p).unwrap().log_value).collect();
    let min_curv = (1..lnz.len() - 1)
        .map(|k| lnz[k + 1] - 2.0 * lnz[k] + lnz[k - 1])
        .fold(f64::INFINITY, f64::min);
    CheckResult::graded(
        name,
        min_curv > -1e-10,
        format!("min second difference of ln Z over phi grid = {min_curv:.2e}"),
    )
}

fn check_coupling_attraction(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> CheckResult {
    let name = "coupling-attraction";
    let grid = TenorGrid::new(10, 0.25).unwrap();
    let spec = ProcessSpec::new(uniform(rng, 0.2, 0.4), uniform(rng, 0.0, 0.05)).unwrap();
    let curve = YieldCurve::flat_forward(10, 0.25, 0.05).unwrap();
    let tail: Vec<f64> = (1..grid.n).map(|k| curve.forward(k, grid.tau)).collect();
    let sub = build_subsystem(&tail, &grid, &spec, 0).unwrap();
    let sub = match fault {
        Some(Fault::NegateCouplings) => GasSubsystem {
            coupling: sub.coupling.iter().map(|x| -x).collect(),
            ..sub
        },
        None => sub,
    };
    let coupled: f64 = occupancy_expectation(&sub, 1.0).unwrap().iter().sum();
    let free: f64 = occupancy_expectation(&sub.couplings_zeroed(), 1.0).unwrap().iter().sum();
    CheckResult::graded(
        name,
        coupled > free,
        format!("mean occupation {coupled:.6} with couplings vs {free:.6} without"),
    )
}

fn check_hermite_consistency() -> CheckResult {
    let name = "hermite-consistency";
    let rule = hermite_rule(48);
    let second = normal_expect(2.0, &rule, |x| x * x);
    let growth = normal_expect(1.5, &rule, |x| x.exp());
    let log_growth = normal_log_expect(1.5, &rule, |x| x);
    let worst = (second - 2.0)
        .abs()
        .max((growth - (0.75f64).exp()).abs())
        .max((log_growth - 0.75).abs());
    CheckResult::graded(name, worst < 1e-10, format!("max quadrature defect = {worst:.2e}"))
}

fn check_curve_reproduction(rng: &mut ChaCha8Rng, n_max: usize) -> CheckResult {
    let name = "curve-reproduction";
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let (grid, spec, curve) = random_setup(rng, n_max);
        let model = match calibrate(&grid, &spec, &curve, &Engine::default()) {
            Ok(m) => m,
            Err(e) => return CheckResult::fail(name, format!("calibration failed: {e}")),
        };
        for i in 0..grid.n {
            let ln_n0 = convexity_expectation_n(&model, i, 0.0, &Engine::default())
                .unwrap()
                .log_value;
            let rel = (ln_n0 - curve.ln_phat(i + 1)).abs();
            worst = worst.max(rel);
        }
    }
    CheckResult::graded(name, worst < 1e-10, format!("max |ln N(0) - ln P^| = {worst:.2e}"))
}

fn check_martingale_pricing(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "martingale-pricing";
    let (grid, spec, curve) = random_setup(rng, 10);
    let model = match calibrate(&grid, &spec, &curve, &Engine::default()) {
        Ok(m) => m,
        Err(e) => return CheckResult::fail(name, format!("calibration failed: {e}")),
    };
    let rule = hermite_rule(64);
    let mut worst = 0.0f64;
    for i in 0..grid.n {
        let sub = model.subsystem(i).unwrap();
        let g_i = variance_g(&spec, grid.time(i)).unwrap();
        let ln_fug = model.ln_libor(i).unwrap() + grid.tau.ln() - 0.5 * g_i;
        let ln_e = normal_log_expect(g_i, &rule, |x| {
            crate::gas::log_bond_value_at_state(&sub, x).unwrap() + log_add_exp(0.0, ln_fug + x)
        });
        worst = worst.max((ln_e - curve.ln_phat(i)).abs());
    }
    CheckResult::graded(name, worst < 1e-8, format!("max martingale defect = {worst:.2e}"))
}

fn check_forward_reproduction(rng: &mut ChaCha8Rng, n_max: usize) -> CheckResult {
    let name = "forward-reproduction";
    let (grid, spec, curve) = random_setup(rng, n_max);
    let model = match calibrate(&grid, &spec, &curve, &Engine::default()) {
        Ok(m) => m,
        Err(e) => return CheckResult::fail(name, format!("calibration failed: {e}")),
    };
    let mut worst = 0.0f64;
    for i in 0..grid.n {
        let rel = libor_moment(&model, i, 1).unwrap() / curve.forward(i, grid.tau) - 1.0;
        worst = worst.max(rel.abs());
    }
    CheckResult::graded(name, worst < 1e-12, format!("max |E[L]/L_fwd - 1| = {worst:.2e}"))
}

fn check_gamma_continuity(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "gamma-continuity";
    let (grid, spec, curve) = random_setup(rng, 10);
    let zero = ProcessSpec::new(spec.sigma, 0.0).unwrap();
    let eps = ProcessSpec::new(spec.sigma, 1e-9).unwrap();
    let a = calibrate(&grid, &zero, &curve, &Engine::default()).unwrap();
    let b = calibrate(&grid, &eps, &curve, &Engine::default()).unwrap();
    let mut worst = 0.0f64;
    for i in 0..grid.n {
        let rel = a.libor(i).unwrap() / b.libor(i).unwrap() - 1.0;
        worst = worst.max(rel.abs());
    }
    CheckResult::graded(
        name,
        worst < 1e-6,
        format!("max Libor jump between the gamma = 0 and gamma = 1e-9 routes: {worst:.2e}"),
    )
}

fn check_scan_monotonicity() -> CheckResult {
    let name = "scan-monotonicity";
    let grid = TenorGrid::new(8, 0.25).unwrap();
    let curve = YieldCurve::flat_forward(8, 0.25, 0.05).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=8 {
        let sigma = 0.05 + 0.05 * k as f64;
        let spec = ProcessSpec::new(sigma, 0.02).unwrap();
        let model = calibrate(&grid, &spec, &curve, &Engine::default()).unwrap();
        let ln_n = convexity_expectation_n(&model, 4, 1.0, &Engine::default())
            .unwrap()
            .log_value;
        if ln_n < prev - 1e-12 {
            return CheckResult::fail(
                name,
                format!("ln N dropped from {prev} to {ln_n} at sigma = {sigma}"),
            );
        }
        prev = ln_n;
    }
    CheckResult::pass(name, "ln N_4(1) nondecreasing over sigma in [0.05, 0.45]".into())
}

fn check_detailed_balance(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "detailed-balance";
    let (grid, spec, curve) = random_setup(rng, 9);
    let tail: Vec<f64> = (1..grid.n).map(|k| curve.forward(k, grid.tau)).collect();
    let sub = build_subsystem(&tail, &grid, &spec, 0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let bits = rng.random_range(0..1u64 << sub.m);
        let occ = Occupation::new(bits, sub.m).unwrap();
        let site = rng.random_range(0..sub.m);
        let mut flipped = occ;
        flipped.flip(site);
        let gain = flip_log_gain(&sub, &occ, site, 1.0);
        let direct = config_log_weight(&sub, &flipped, 1.0) - config_log_weight(&sub, &occ, 1.0);
        worst = worst.max((gain - direct).abs());
    }
    CheckResult::graded(name, worst < 1e-12, format!("max |flip gain - weight delta| = {worst:.2e}"))
}

fn check_seed_determinism(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "seed-determinism";
    let (grid, spec, curve) = random_setup(rng, 10);
    let seed = rng.random::<u64>();
    let a = simulate_paths(&spec, &grid, 10_000, seed, None).unwrap();
    let b = simulate_paths(&spec, &grid, 10_000, seed, None).unwrap();
    if a.values != b.values {
        return CheckResult::fail(name, "path batches differ for identical seeds".into());
    }
    let tail: Vec<f64> = (1..grid.n).map(|k| curve.forward(k, grid.tau)).collect();
    let sub = build_subsystem(&tail, &grid, &spec, 0).unwrap();
    let cfg = ChainConfig::new(seed, 50, 500, 1, 2).unwrap();
    let path = CouplingPath::gauss_legendre(8).unwrap();
    let x = estimate_lnz_thermodynamic(&sub, 1.0, &path, &cfg).unwrap();
    let y = estimate_lnz_thermodynamic(&sub, 1.0, &path, &cfg).unwrap();
    CheckResult::graded(
        name,
        x.log_value.to_bits() == y.log_value.to_bits(),
        "paths and chain estimates reproduce bitwise".into(),
    )
}

fn check_sampler_vs_enumeration(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "sampler-occupancy";
    let grid = TenorGrid::new(10, 0.25).unwrap();
    let spec = ProcessSpec::new(uniform(rng, 0.2, 0.35), uniform(rng, 0.0, 0.05)).unwrap();
    let curve = YieldCurve::flat_forward(10, 0.25, 0.05).unwrap();
    let tail: Vec<f64> = (1..grid.n).map(|k| curve.forward(k, grid.tau)).collect();
    let sub = build_subsystem(&tail, &grid, &spec, 0).unwrap();
    let cfg = ChainConfig::new(rng.random::<u64>(), 300, 10_000, 1, 4).unwrap();
    let est = match estimate_occupancy(&sub, 1.0, &cfg) {
        Ok(e) => e,
        Err(e) => return CheckResult::fail(name, format!("sampler rejected: {e}")),
    };
    let exact = occupancy_expectation(&sub, 1.0).unwrap();
    for (site, (&(mean, se), &ex)) in est.iter().zip(&exact).enumerate() {
        if (mean - ex).abs() > 4.0 * se.max(2e-3) {
            return CheckResult::fail(
                name,
                format!("site {site}: sampled {mean:.5} vs exact {ex:.5} (se {se:.1e})"),
            );
        }
    }
    CheckResult::pass(name, "per-site occupancies within 4 s.e. of enumeration".into())
}

fn check_ti_vs_enumeration(rng: &mut ChaCha8Rng) -> CheckResult {
    let name = "ti-vs-enumeration";
    let grid = TenorGrid::new(11, 0.25).unwrap();
    let spec = ProcessSpec::new(uniform(rng, 0.2, 0.35), uniform(rng, 0.0, 0.05)).unwrap();
    let curve = YieldCurve::flat_forward(11, 0.25, 0.05).unwrap();
    let tail: Vec<f64> = (1..grid.n).map(|k| curve.forward(k, grid.tau)).collect();
    let sub = build_subsystem(&tail, &grid, &spec, 0).unwrap();
    let exact = enumerate_log_partition(&sub, 1.0).unwrap().log_value;
    let cfg = ChainConfig::new(rng.random::<u64>(), 300, 10_000, 1, 4).unwrap();
    let path = CouplingPath::gauss_legendre(8).unwrap();
    let est = match estimate_lnz_thermodynamic(&sub, 1.0, &path, &cfg) {
        Ok(e) => e,
        Err(e) => return CheckResult::fail(name, format!("sampler rejected: {e}")),
    };
    let gap = (est.log_value - exact).abs();
    CheckResult::graded(
        name,
        gap < (4.0 * est.stderr).max(2e-3),
        format!("|TI - exact| = {gap:.2e} (se {:.1e})", est.stderr),
    )
}

fn check_path_moments(rng: &mut ChaCha8Rng, count: usize) -> CheckResult {
    let name = "path-moments";
    let spec = ProcessSpec::new(0.2, 0.1).unwrap();
    let grid = TenorGrid::new(8, 0.25).unwrap();
    let batch = simulate_paths(&spec, &grid, count, rng.random::<u64>(), None).unwrap();
    let nf = count as f64;
    let (mut s1, mut s11, mut s12, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for p in 0..count {
        let a = batch.state(p, 4);
        let b = batch.state(p, 8);
        s1 += a;
        s2 += b;
        s11 += a * a;
        s12 += a * b;
    }
    let var = s11 / nf - (s1 / nf).powi(2);
    let cov = s12 / nf - s1 / nf * (s2 / nf);
    let g = variance_g(&spec, 1.0).unwrap();
    let x12 = covariance_x(&spec, 1.0, 2.0).unwrap();
    let se = g * (2.0 / nf).sqrt();
    let ok = (var - g).abs() < 4.0 * se && (cov - x12).abs() < 5.0 * se;
    CheckResult::graded(
        name,
        ok,
        format!("var {var:.6} vs {g:.6}, cov {cov:.6} vs {x12:.6} ({count} paths)"),
    )
}

fn check_engine_agreement(rng: &mut ChaCha8Rng, cfg: &BatteryConfig) -> CheckResult {
    let name = "engine-agreement";
    let cases = cfg.engine_cases.max(2);
    let mut hits = 0usize;
    let mut worst_z = 0.0f64;
    for _ in 0..cases {
        let (grid, spec, curve) = random_setup(rng, cfg.n_max);
        let model = match calibrate(&grid, &spec, &curve, &Engine::default()) {
            Ok(m) => m,
            Err(e) => return CheckResult::fail(name, format!("calibration failed: {e}")),
        };
        let i = rng.random_range(0..grid.n.saturating_sub(1));
        let exact = convexity_expectation_n(&model, i, 1.0, &Engine::default())
            .unwrap()
            .log_value
            .exp();
        let est =
            mc_convexity_n(&model, i, 1.0, cfg.mc_paths, rng.random::<u64>(), None).unwrap();
        let z = ((est.mean - exact) / est.stderr).abs();
        worst_z = worst_z.max(z);
        if z <= 3.0 {
            hits += 1;
        }
    }
    CheckResult::graded(
        name,
        hits + 1 >= cases,
        format!("{hits}/{cases} within 3 s.e. (worst z = {worst_z:.2})"),
    )
}

/// Run every check in a fixed order. The report always contains all checks;
/// callers decide how to render failures.
pub fn run_battery(cfg: &BatteryConfig) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws = (cfg.mc_paths / 4).max(10_000);
    vec![
        check_covariance_symmetry(&mut rng),
        check_variance_consistency(&mut rng),
        check_covariance_psd(&mut rng),
        check_limit_continuity(),
        check_moment_identity_mc(&mut rng, draws),
        check_enumeration_exactness(&mut rng),
        check_fluctuation_dissipation(&mut rng),
        check_partition_convexity(&mut rng),
        check_coupling_attraction(&mut rng, cfg.fault),
        check_hermite_consistency(),
        check_curve_reproduction(&mut rng, cfg.n_max),
        check_martingale_pricing(&mut rng),
        check_forward_reproduction(&mut rng, cfg.n_max),
        check_gamma_continuity(&mut rng),
        check_scan_monotonicity(),
        check_detailed_balance(&mut rng),
        check_seed_determinism(&mut rng),
        check_sampler_vs_enumeration(&mut rng),
        check_ti_vs_enumeration(&mut rng),
        check_path_moments(&mut rng, cfg.mc_paths),
        check_engine_agreement(&mut rng, cfg),
    ]
}

/// Convenience used by tests and the CLI exit path.
pub fn all_passed(report: &[CheckResult]) -> bool {
    report.iter().all(|c| c.passed)
}
