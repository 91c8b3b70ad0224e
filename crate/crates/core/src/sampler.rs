//! Metropolis sampling of gas configurations.
//!
//! Subsystems past the enumeration cap are handled stochastically: single-site
//! flip Metropolis chains sample the gas measure, and the log partition sum is
//! recovered by thermodynamic integration along a coupling path that scales
//! every sigma^2-proportional term by lambda in [0, 1]. At lambda = 0 the gas
//! factorizes and ln Z is available in closed form; the integrand
//! d(ln Z)/d(lambda) = <U'> is the mean interaction log weight, which is
//! lambda-independent as a function of the configuration, so each quadrature
//! node only needs an equilibrium occupancy sample at the scaled couplings.
//!
//! Every estimate runs independent chains from distinct RNG streams and is
//! rejected with [`Error::UnreliableChains`] when the split-chain potential
//! scale reduction factor exceeds 1.1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::gas::{
    flip_log_gain, interaction_log_weight, GasSubsystem, Method, Occupation, PartitionValue,
};
use crate::math::legendre_rule_01;

/// Chain layout shared by all sampled estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub seed: u64,
    /// Discarded sweeps per chain before recording starts.
    pub burn_in: usize,
    /// Recorded sweeps per chain (draws are taken every `thinning`-th sweep).
    pub samples: usize,
    pub thinning: usize,
    pub chains: usize,
}

impl ChainConfig {
    pub fn new(
        seed: u64,
        burn_in: usize,
        samples: usize,
        thinning: usize,
        chains: usize,
    ) -> Result<Self> {
        if samples < 100 {
            return Err(Error::InvalidParameter(format!(
                "samples = {samples}, need at least 100 recorded sweeps"
            )));
        }
        if chains < 2 {
            return Err(Error::InvalidParameter(format!(
                "chains = {chains}, need at least 2 for convergence checks"
            )));
        }
        if thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be >= 1".into()));
        }
        Ok(Self { seed, burn_in, samples, thinning, chains })
    }

    fn draws(&self) -> usize {
        self.samples / self.thinning
    }
}

/// Quadrature nodes and weights for the coupling integral over lambda in [0, 1].
#[derive(Debug, Clone)]
pub struct CouplingPath {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CouplingPath {
    /// Gauss-Legendre path with `k` nodes. The integrand is smooth in lambda,
    /// so a handful of nodes reaches quadrature error far below the Monte
    /// Carlo noise; fewer than 8 is rejected.
    pub fn gauss_legendre(k: usize) -> Result<Self> {
        if k < 8 {
            return Err(Error::InvalidParameter(format!(
                "coupling path has {k} nodes, need at least 8"
            )));
        }
        let (nodes, weights) = legendre_rule_01(k);
        Ok(Self { nodes, weights })
    }
}

/// One full Metropolis sweep: propose a flip of every site in index order,
/// accepting each with probability min(1, exp(gain)).
pub fn metropolis_sweep(
    sub: &GasSubsystem,
    phi: f64,
    occ: &mut Occupation,
    rng: &mut impl Rng,
) {
    for site in 0..sub.m {
        let gain = flip_log_gain(sub, occ, site, phi);
        if gain >= 0.0 || rng.random::<f64>() < gain.exp() {
            occ.flip(site);
        }
    }
}

/// Accumulates mean and unbiased variance in one pass.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn var(&self) -> f64 {
        if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        }
    }
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let mut w = Welford::default();
    for &x in xs {
        w.push(x);
    }
    (w.mean, w.var())
}

/// Split-chain potential scale reduction factor from per-sequence summaries.
/// Each entry is (mean, variance, length) of one half-chain.
fn split_rhat(seqs: &[(f64, f64, usize)]) -> f64 {
    let len = seqs[0].2.max(2) as f64;
    let (_, var_of_means) = mean_and_var(&seqs.iter().map(|s| s.0).collect::<Vec<_>>());
    let within: f64 = seqs.iter().map(|s| s.1).sum::<f64>() / seqs.len() as f64;
    if within <= 0.0 {
        // Degenerate chains (e.g. an empty or frozen gas): identical means are
        // converged by definition, disagreeing means can never mix.
        return if var_of_means <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((len - 1.0) / len * within + var_of_means) / within).sqrt()
}

fn chain_rng(seed: u64, node: usize, chains: usize, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Stream 0 is left unused so estimates never collide with ad-hoc RNGs
    // seeded from the same value.
    rng.set_stream((node * chains + chain) as u64 + 1);
    rng
}

/// Per-chain summary of a scalar time series: halves for the mixing check
/// plus the full-chain mean.
struct ChainStats {
    mean: f64,
    halves: [(f64, f64, usize); 2],
}

fn run_scalar_chain(
    sub: &GasSubsystem,
    phi: f64,
    cfg: &ChainConfig,
    mut rng: ChaCha8Rng,
    f: impl Fn(&Occupation) -> f64,
) -> ChainStats {
    let mut occ = Occupation::empty();
    for _ in 0..cfg.burn_in {
        metropolis_sweep(sub, phi, &mut occ, &mut rng);
    }
    let draws = cfg.draws();
    let split = draws / 2;
    let mut halves = [Welford::default(), Welford::default()];
    let mut total = Welford::default();
    for d in 0..draws {
        for _ in 0..cfg.thinning {
            metropolis_sweep(sub, phi, &mut occ, &mut rng);
        }
        let x = f(&occ);
        total.push(x);
        halves[usize::from(d >= split)].push(x);
    }
    ChainStats {
        mean: total.mean,
        halves: [
            (halves[0].mean, halves[0].var(), halves[0].n),
            (halves[1].mean, halves[1].var(), halves[1].n),
        ],
    }
}

/// Pools chain summaries into (mean, standard error) and rejects poor mixing.
fn pool_chains(stats: &[ChainStats], node: usize) -> Result<(f64, f64)> {
    let seqs: Vec<(f64, f64, usize)> = stats.iter().flat_map(|s| s.halves).collect();
    let rhat = split_rhat(&seqs);
    if !(rhat <= 1.1) {
        return Err(Error::UnreliableChains { rhat, node });
    }
    let (mean, var_of_means) = mean_and_var(&stats.iter().map(|s| s.mean).collect::<Vec<_>>());
    Ok((mean, (var_of_means / stats.len() as f64).sqrt()))
}

/// Estimate ln Z by thermodynamic integration along `path`.
///
/// At each lambda node the couplings and chemical profile are scaled, the
/// chains equilibrate at that interaction strength, and the lambda-independent
/// interaction log weight is averaged. The weighted node means integrate
/// d(ln Z)/d(lambda) from the factorized reference ln Z(0); the reported
/// standard error propagates the across-chain spread through the quadrature
/// weights.
pub fn estimate_lnz_thermodynamic(
    sub: &GasSubsystem,
    phi: f64,
    path: &CouplingPath,
    cfg: &ChainConfig,
) -> Result<PartitionValue> {
    let base = sub.ln_z_factorized();
    if sub.m == 0 {
        return Ok(PartitionValue { log_value: base, method: Method::Sampled, stderr: 0.0 });
    }
    let mut integral = 0.0;
    let mut var = 0.0;
    for (node, (&lambda, &weight)) in path.nodes.iter().zip(&path.weights).enumerate() {
        let scaled = sub.scaled(lambda);
        let stats = exec::map_indexed(cfg.chains, |c| {
            run_scalar_chain(&scaled, phi, cfg, chain_rng(cfg.seed, node, cfg.chains, c), |occ| {
                interaction_log_weight(sub, occ, phi)
            })
        });
        let (mean, se) = pool_chains(&stats, node)?;
        integral += weight * mean;
        var += (weight * se).powi(2);
    }
    Ok(PartitionValue {
        log_value: base + integral,
        method: Method::Sampled,
        stderr: var.sqrt(),
    })
}

/// Mean occupancy of every site at chemical scale phi, with across-chain
/// standard errors. Mixing is checked on the total occupation number.
pub fn estimate_occupancy(
    sub: &GasSubsystem,
    phi: f64,
    cfg: &ChainConfig,
) -> Result<Vec<(f64, f64)>> {
    if sub.m == 0 {
        return Ok(Vec::new());
    }
    struct OccStats {
        site_means: Vec<f64>,
        halves: [(f64, f64, usize); 2],
    }
    let stats = exec::map_indexed(cfg.chains, |c| {
        let mut rng = chain_rng(cfg.seed, 0, cfg.chains, c);
        let mut occ = Occupation::empty();
        for _ in 0..cfg.burn_in {
            metropolis_sweep(sub, phi, &mut occ, &mut rng);
        }
        let draws = cfg.draws();
        let split = draws / 2;
        let mut site_sums = vec![0.0f64; sub.m];
        let mut halves = [Welford::default(), Welford::default()];
        for d in 0..draws {
            for _ in 0..cfg.thinning {
                metropolis_sweep(sub, phi, &mut occ, &mut rng);
            }
            for (site, sum) in site_sums.iter_mut().enumerate() {
                *sum += f64::from(occ.get(site));
            }
            halves[usize::from(d >= split)].push(occ.count() as f64);
        }
        OccStats {
            site_means: site_sums.iter().map(|s| s / draws as f64).collect(),
            halves: [
                (halves[0].mean, halves[0].var(), halves[0].n),
                (halves[1].mean, halves[1].var(), halves[1].n),
            ],
        }
    });
    let seqs: Vec<(f64, f64, usize)> = stats.iter().flat_map(|s| s.halves).collect();
    let rhat = split_rhat(&seqs);
    if !(rhat <= 1.1) {
        return Err(Error::UnreliableChains { rhat, node: 0 });
    }
    let per_site = (0..sub.m)
        .map(|site| {
            let (mean, var_of_means) =
                mean_and_var(&stats.iter().map(|s| s.site_means[site]).collect::<Vec<_>>());
            (mean, (var_of_means / stats.len() as f64).sqrt())
        })
        .collect();
    Ok(per_site)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::YieldCurve;
    use crate::gas::{
        build_subsystem, config_log_weight, enumerate_log_partition, occupancy_expectation,
    };
    use crate::process::{ProcessSpec, TenorGrid};

    fn subsystem(n: usize, sigma: f64, gamma: f64, i: usize) -> GasSubsystem {
        let grid = TenorGrid::new(n, 0.25).unwrap();
        let spec = ProcessSpec::new(sigma, gamma).unwrap();
        let curve = YieldCurve::flat_forward(n, 0.25, 0.04).unwrap();
        let tail: Vec<f64> = (i + 1..n).map(|k| curve.forward(k, 0.25)).collect();
        build_subsystem(&tail, &grid, &spec, i).unwrap()
    }

    #[test]
    fn chain_config_rejects_degenerate_layouts() {
        assert!(ChainConfig::new(1, 10, 99, 1, 2).is_err());
        assert!(ChainConfig::new(1, 10, 100, 1, 1).is_err());
        assert!(ChainConfig::new(1, 10, 100, 0, 2).is_err());
        assert!(ChainConfig::new(1, 10, 100, 1, 2).is_ok());
    }

    #[test]
    fn coupling_path_needs_eight_nodes() {
        assert!(CouplingPath::gauss_legendre(7).is_err());
        let path = CouplingPath::gauss_legendre(8).unwrap();
        assert!((path.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    /// A single-site gas is a Bernoulli variable with odds z = fugacity weight;
    /// the empirical occupancy must match z / (1 + z).
    #[test]
    fn single_site_occupancy_matches_bernoulli_law() {
        let sub = subsystem(2, 0.3, 0.05, 0);
        let z = (sub.log_fugacity[0] + 1.0 * sub.anchor_variance * sub.decay[0]).exp();
        let exact = z / (1.0 + z);
        let cfg = ChainConfig::new(7, 200, 40_000, 1, 4).unwrap();
        let est = estimate_occupancy(&sub, 1.0, &cfg).unwrap();
        assert!(
            (est[0].0 - exact).abs() < 4.0 * est[0].1.max(2e-3),
            "occupancy {} vs exact {exact}, se {}",
            est[0].0,
            est[0].1
        );
    }

    /// With the pair couplings removed the sites are independent, so the
    /// empirical pairwise correlations must vanish within noise.
    #[test]
    fn zero_coupling_gas_has_independent_sites() {
        let sub = subsystem(8, 0.3, 0.02, 0).couplings_zeroed();
        let m = sub.m;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut occ = Occupation::empty();
        for _ in 0..500 {
            metropolis_sweep(&sub, 1.0, &mut occ, &mut rng);
        }
        let draws = 30_000usize;
        let mut sums = vec![0.0f64; m];
        let mut cross = vec![0.0f64; m * m];
        for _ in 0..draws {
            metropolis_sweep(&sub, 1.0, &mut occ, &mut rng);
            for j in 0..m {
                let nj = f64::from(occ.get(j));
                sums[j] += nj;
                for k in j + 1..m {
                    cross[j * m + k] += nj * f64::from(occ.get(k));
                }
            }
        }
        let se = 1.5 / (draws as f64).sqrt();
        for j in 0..m {
            for k in j + 1..m {
                let pj = sums[j] / draws as f64;
                let pk = sums[k] / draws as f64;
                let cov = cross[j * m + k] / draws as f64 - pj * pk;
                let denom = (pj * (1.0 - pj) * pk * (1.0 - pk)).sqrt();
                let corr = if denom > 0.0 { cov / denom } else { 0.0 };
                assert!(corr.abs() < 3.0 * se, "sites {j},{k}: corr {corr}");
            }
        }
    }

    /// The flip kernel satisfies detailed balance with respect to the
    /// configuration weights: pi(a) P(a -> b) = pi(b) P(b -> a) for single-site
    /// moves, by construction of the acceptance rule.
    #[test]
    fn acceptance_rule_satisfies_detailed_balance() {
        let sub = subsystem(7, 0.4, 0.03, 1);
        for bits in [0u64, 3, 9, 21, 31] {
            let occ = Occupation::new(bits, sub.m).unwrap();
            for site in 0..sub.m {
                let mut flipped = occ;
                flipped.flip(site);
                let fwd = flip_log_gain(&sub, &occ, site, 1.0).min(0.0);
                let back = flip_log_gain(&sub, &flipped, site, 1.0).min(0.0);
                let lhs = config_log_weight(&sub, &occ, 1.0) + fwd;
                let rhs = config_log_weight(&sub, &flipped, 1.0) + back;
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn thermodynamic_integration_matches_enumeration() {
        let sub = subsystem(10, 0.25, 0.02, 1);
        let exact = enumerate_log_partition(&sub, 1.0).unwrap();
        let cfg = ChainConfig::new(20260814, 300, 12_000, 1, 4).unwrap();
        let path = CouplingPath::gauss_legendre(8).unwrap();
        let est = estimate_lnz_thermodynamic(&sub, 1.0, &path, &cfg).unwrap();
        let err = (est.log_value - exact.log_value).abs();
        assert!(
            err < (4.0 * est.stderr).max(2e-3),
            "TI {} vs exact {}, se {}",
            est.log_value,
            exact.log_value,
            est.stderr
        );
        assert_eq!(est.method, Method::Sampled);
        assert!(est.stderr > 0.0);
    }

    #[test]
    fn sampled_occupancy_matches_enumerated_expectation() {
        let sub = subsystem(9, 0.3, 0.05, 0);
        let cfg = ChainConfig::new(99, 300, 20_000, 1, 4).unwrap();
        let est = estimate_occupancy(&sub, 1.0, &cfg).unwrap();
        let exact = occupancy_expectation(&sub, 1.0).unwrap();
        for site in 0..sub.m {
            let (mean, se) = est[site];
            assert!(
                (mean - exact[site]).abs() < 4.0 * se.max(1e-3),
                "site {site}: {mean} vs {} (se {se})",
                exact[site]
            );
        }
    }

    #[test]
    fn estimates_are_reproducible_for_a_fixed_seed() {
        let sub = subsystem(9, 0.3, 0.05, 0);
        let cfg = ChainConfig::new(5, 100, 1_000, 2, 3).unwrap();
        let path = CouplingPath::gauss_legendre(8).unwrap();
        let a = estimate_lnz_thermodynamic(&sub, 1.0, &path, &cfg).unwrap();
        let b = estimate_lnz_thermodynamic(&sub, 1.0, &path, &cfg).unwrap();
        assert_eq!(a.log_value.to_bits(), b.log_value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        let cfg2 = ChainConfig::new(6, 100, 1_000, 2, 3).unwrap();
        let c = estimate_lnz_thermodynamic(&sub, 1.0, &path, &cfg2).unwrap();
        assert_ne!(a.log_value.to_bits(), c.log_value.to_bits());
    }

    /// Standard error should shrink roughly like 1/sqrt(samples).
    #[test]
    fn stderr_scales_with_sample_count() {
        let sub = subsystem(10, 0.3, 0.02, 1);
        let path = CouplingPath::gauss_legendre(8).unwrap();
        let small = ChainConfig::new(31, 200, 1_000, 1, 4).unwrap();
        let large = ChainConfig::new(31, 200, 16_000, 1, 4).unwrap();
        let a = estimate_lnz_thermodynamic(&sub, 1.0, &path, &small).unwrap();
        let b = estimate_lnz_thermodynamic(&sub, 1.0, &path, &large).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!(ratio > 1.6 && ratio < 10.0, "stderr ratio {ratio}");
    }

    /// An empty subsystem (last tenor date) has ln Z = 0 with no noise.
    #[test]
    fn empty_subsystem_is_exact_zero() {
        let sub = subsystem(4, 0.3, 0.05, 3);
        assert_eq!(sub.m, 0);
        let cfg = ChainConfig::new(1, 10, 100, 1, 2).unwrap();
        let path = CouplingPath::gauss_legendre(8).unwrap();
        let est = estimate_lnz_thermodynamic(&sub, 1.0, &path, &cfg).unwrap();
        assert_eq!(est.log_value, 0.0);
        assert_eq!(est.stderr, 0.0);
    }
}
