//! Lattice-gas subsystems: assembly from an adjusted-Libor strip, exact
//! configuration weights, and Gray-code enumeration of the grand partition
//! sum and its observables.
//!
//! A subsystem anchored at period i has one site per date t_{i+1}..t_{n-1}.
//! A configuration's log weight is
//!
//!   sum_j n_j ln(L~_j tau) + sum_{j<k} X_{jk} n_j n_k + phi G_i sum_j n_j w^{j-i},
//!
//! i.e. one-body fugacities, attractive pair couplings from the driver's
//! autocovariance, and a position-dependent chemical-potential profile. The
//! inverse temperature is fixed to 1: only products beta*eps and beta*mu are
//! observable, and this gauge makes fugacities and couplings the financial
//! quantities directly.

use crate::error::{Error, Result};
use crate::exec;
use crate::math::{pairwise_log_sum, LogSumAcc};
use crate::process::{covariance_x, decay_weight, variance_g, ProcessSpec, TenorGrid};

/// Default largest site count enumerated exactly (2^26 ~ 6.7e7 terms); larger
/// subsystems route to the sampler.
pub const DEFAULT_ENUMERATION_CAP: usize = 26;

/// How a partition value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Sampled,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Exact => write!(f, "exact"),
            Method::Sampled => write!(f, "sampled"),
        }
    }
}

/// Natural log of a partition sum (or expectation N), tagged with the
/// engine that produced it and its statistical error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionValue {
    pub log_value: f64,
    pub method: Method,
    pub stderr: f64,
}

/// A 0/1 configuration over the m sites of a subsystem, packed little-endian
/// (bit s is the site at date t_{anchor+1+s}).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occupation {
    pub bits: u64,
}

impl Occupation {
    pub fn empty() -> Self {
        Occupation { bits: 0 }
    }

    pub fn new(bits: u64, m: usize) -> Result<Self> {
        if m < 64 && bits >> m != 0 {
            return Err(Error::OccupationOutOfRange { bits, m });
        }
        Ok(Occupation { bits })
    }

    pub fn get(&self, site: usize) -> bool {
        self.bits >> site & 1 == 1
    }

    pub fn flip(&mut self, site: usize) {
        self.bits ^= 1 << site;
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }
}

/// The gas seen from anchor period i: sites at dates t_{i+1}..t_{n-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct GasSubsystem {
    /// Anchor period index i.
    pub anchor: usize,
    /// Site count m = n - 1 - i.
    pub m: usize,
    /// ln(L~_j tau) per site, local index 0 at date t_{anchor+1}.
    pub log_fugacity: Vec<f64>,
    /// Symmetric m x m pair couplings X_{jk} (row-major, zero diagonal).
    pub coupling: Vec<f64>,
    /// Chemical-potential decay profile w^{j-i} per site.
    pub decay: Vec<f64>,
    /// Driver variance G_i at the anchor date.
    pub anchor_variance: f64,
}

/// Assembles the subsystem anchored at i from the adjusted Libors
/// L~_{i+1}..L~_{n-1} (`tail_libors`, one entry per site).
pub fn build_subsystem(
    tail_libors: &[f64],
    grid: &TenorGrid,
    spec: &ProcessSpec,
    i: usize,
) -> Result<GasSubsystem> {
    if i >= grid.n {
        return Err(Error::IndexOutOfRange { index: i, what: format!("anchor on a {}-period grid", grid.n) });
    }
    let m = grid.n - 1 - i;
    if m > 63 {
        return Err(Error::InvalidParameter(format!(
            "subsystem with {m} sites exceeds the 63-site state representation"
        )));
    }
    if tail_libors.len() != m {
        return Err(Error::InvalidParameter(format!(
            "expected {m} tail Libors for anchor {i}, got {}",
            tail_libors.len()
        )));
    }
    let mut log_fugacity = Vec::with_capacity(m);
    for (s, &l) in tail_libors.iter().enumerate() {
        if !(l > 0.0) {
            return Err(Error::NonpositiveLibor { site: i + 1 + s, value: l });
        }
        log_fugacity.push((l * grid.tau).ln());
    }
    let mut coupling = vec![0.0; m * m];
    for s in 0..m {
        for r in s + 1..m {
            let x = covariance_x(spec, grid.time(i + 1 + s), grid.time(i + 1 + r))?;
            coupling[s * m + r] = x;
            coupling[r * m + s] = x;
        }
    }
    let decay = (0..m).map(|s| decay_weight(spec, grid.tau, s + 1)).collect();
    Ok(GasSubsystem {
        anchor: i,
        m,
        log_fugacity,
        coupling,
        decay,
        anchor_variance: variance_g(spec, grid.time(i))?,
    })
}

impl GasSubsystem {
    /// Pair coupling between local sites j and k.
    pub fn coupling(&self, j: usize, k: usize) -> f64 {
        self.coupling[j * self.m + k]
    }

    /// Copy with the interaction strength (sigma^2 scale) multiplied by
    /// lambda: pair couplings and the anchor variance scale, fugacities and
    /// decay weights do not.
    pub fn scaled(&self, lambda: f64) -> GasSubsystem {
        GasSubsystem {
            coupling: self.coupling.iter().map(|x| x * lambda).collect(),
            anchor_variance: self.anchor_variance * lambda,
            ..self.clone()
        }
    }

    /// Copy with pair couplings zeroed but the chemical profile kept.
    pub fn couplings_zeroed(&self) -> GasSubsystem {
        GasSubsystem { coupling: vec![0.0; self.m * self.m], ..self.clone() }
    }

    /// Log partition value of the factorized (zero-coupling, zero-chemical)
    /// gas: sum_j ln(1 + L~_j tau).
    pub fn ln_z_factorized(&self) -> f64 {
        self.log_fugacity.iter().map(|a| a.exp().ln_1p()).sum()
    }
}

/// Sum of couplings between site `b` and every occupied site in `occ`
/// (the diagonal is stored as zero, so `b` itself never contributes).
#[inline]
fn coupling_field(sub: &GasSubsystem, occ: u64, b: usize) -> f64 {
    let row = &sub.coupling[b * sub.m..(b + 1) * sub.m];
    let mut rest = occ;
    let mut s = 0.0;
    while rest != 0 {
        let j = rest.trailing_zeros() as usize;
        s += row[j];
        rest &= rest - 1;
    }
    s
}

/// Log weight of one configuration at chemical scale phi.
pub fn config_log_weight(sub: &GasSubsystem, occ: &Occupation, phi: f64) -> f64 {
    let chem = phi * sub.anchor_variance;
    let mut one_body = 0.0;
    let mut pairs = 0.0;
    let mut rest = occ.bits;
    while rest != 0 {
        let j = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        one_body += sub.log_fugacity[j] + chem * sub.decay[j];
        pairs += coupling_field(sub, rest, j);
    }
    one_body + pairs
}

/// Interaction part of the log weight (chemical profile + pair couplings,
/// no fugacities). Both pieces are linear in sigma^2, which makes this the
/// lambda-independent integrand of the sampler's coupling path.
pub fn interaction_log_weight(sub: &GasSubsystem, occ: &Occupation, phi: f64) -> f64 {
    let mut chem = 0.0;
    let mut pairs = 0.0;
    let mut rest = occ.bits;
    while rest != 0 {
        let j = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        chem += sub.decay[j];
        pairs += coupling_field(sub, rest, j);
    }
    phi * sub.anchor_variance * chem + pairs
}

/// Log-weight gain from flipping `site` in `occ` (positive sign when the flip
/// occupies the site). The Metropolis kernel and the detailed-balance test
/// both consume this.
pub fn flip_log_gain(sub: &GasSubsystem, occ: &Occupation, site: usize, phi: f64) -> f64 {
    let without = occ.bits & !(1 << site);
    let gain = sub.log_fugacity[site]
        + phi * sub.anchor_variance * sub.decay[site]
        + coupling_field(sub, without, site);
    if occ.get(site) {
        -gain
    } else {
        gain
    }
}

/// Chunked Gray-code walk shared by the enumeration entry points. Splits the
/// configuration space on the top bits into a thread-count-independent set of
/// chunks, walks each chunk incrementally, and reduces chunk results with an
/// index-ordered pairwise tree, so results are bit-stable under the `parallel`
/// feature and any pool size.
fn chunk_bits(m: usize) -> usize {
    if m <= 16 {
        0
    } else {
        (m - 16).min(8)
    }
}

struct ChunkOut {
    log_sum: f64,
    site_log_sums: Option<Vec<f64>>,
}

fn walk_chunk(
    sub: &GasSubsystem,
    phi: f64,
    bond_state: Option<f64>,
    chunk: u64,
    low_bits: usize,
    want_sites: bool,
) -> ChunkOut {
    let chem = phi * sub.anchor_variance;
    let high = chunk << low_bits;
    let mut occ = high;
    // weight pieces for the chunk's starting configuration
    let mut one_body = 0.0;
    let mut pairs = 0.0;
    let mut decay_sum = 0.0;
    let mut rest = occ;
    while rest != 0 {
        let j = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        one_body += sub.log_fugacity[j] + chem * sub.decay[j];
        decay_sum += sub.decay[j];
        pairs += coupling_field(sub, rest, j);
    }
    let weight_of = |one_body: f64, pairs: f64, decay_sum: f64| match bond_state {
        None => one_body + pairs,
        Some(x) => {
            one_body + pairs + x * decay_sum
                - 0.5 * sub.anchor_variance * decay_sum * decay_sum
        }
    };
    let mut acc = LogSumAcc::new();
    let mut site_accs = if want_sites { vec![LogSumAcc::new(); sub.m] } else { Vec::new() };
    let record = |occ: u64, w: f64, site_accs: &mut Vec<LogSumAcc>| {
        if want_sites {
            let mut rest = occ;
            while rest != 0 {
                let j = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                site_accs[j].push(w);
            }
        }
    };
    let w0 = weight_of(one_body, pairs, decay_sum);
    acc.push(w0);
    record(occ, w0, &mut site_accs);
    for g in 1u64..1 << low_bits {
        let b = g.trailing_zeros() as usize;
        let bit = 1u64 << b;
        let delta = sub.log_fugacity[b] + chem * sub.decay[b];
        if occ & bit == 0 {
            pairs += coupling_field(sub, occ, b);
            occ |= bit;
            one_body += delta;
            decay_sum += sub.decay[b];
        } else {
            occ &= !bit;
            pairs -= coupling_field(sub, occ, b);
            one_body -= delta;
            decay_sum -= sub.decay[b];
        }
        let w = weight_of(one_body, pairs, decay_sum);
        acc.push(w);
        record(occ, w, &mut site_accs);
    }
    ChunkOut {
        log_sum: acc.value(),
        site_log_sums: want_sites.then(|| site_accs.iter().map(|a| a.value()).collect()),
    }
}

fn enumerate_impl(
    sub: &GasSubsystem,
    phi: f64,
    bond_state: Option<f64>,
    cap: usize,
    want_sites: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if sub.m > cap {
        return Err(Error::EnumerationCapExceeded { m: sub.m, cap });
    }
    let c = chunk_bits(sub.m);
    let low_bits = sub.m - c;
    let chunks: Vec<ChunkOut> = exec::map_indexed(1usize << c, |ci| {
        walk_chunk(sub, phi, bond_state, ci as u64, low_bits, want_sites)
    });
    let log_z = pairwise_log_sum(&chunks.iter().map(|c| c.log_sum).collect::<Vec<_>>());
    let sites = want_sites.then(|| {
        (0..sub.m)
            .map(|j| {
                let per_chunk: Vec<f64> = chunks
                    .iter()
                    .map(|c| c.site_log_sums.as_ref().unwrap()[j])
                    .collect();
                pairwise_log_sum(&per_chunk)
            })
            .collect()
    });
    Ok((log_z, sites))
}

/// ln N_i(phi) = ln Z of the subsystem by exact enumeration, default cap.
pub fn enumerate_log_partition(sub: &GasSubsystem, phi: f64) -> Result<PartitionValue> {
    enumerate_log_partition_with_cap(sub, phi, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_log_partition_with_cap(
    sub: &GasSubsystem,
    phi: f64,
    cap: usize,
) -> Result<PartitionValue> {
    let (log_value, _) = enumerate_impl(sub, phi, None, cap, false)?;
    Ok(PartitionValue { log_value, method: Method::Exact, stderr: 0.0 })
}

/// ln of the forward bond ratio P^_{i,i+1}(x_i): the subset sum with exponents
/// x_i sum w^{j-i} - G_i (sum w^{j-i})^2 / 2 + pair couplings.
pub fn log_bond_value_at_state(sub: &GasSubsystem, x_i: f64) -> Result<f64> {
    let (v, _) = enumerate_impl(sub, 0.0, Some(x_i), DEFAULT_ENUMERATION_CAP, false)?;
    Ok(v)
}

/// P^_{i,i+1}(x_i) in natural units (>= 1; the empty subset contributes 1).
pub fn bond_value_at_state(sub: &GasSubsystem, x_i: f64) -> Result<f64> {
    Ok(log_bond_value_at_state(sub, x_i)?.exp())
}

/// Exact per-site occupancies <n_j> at chemical scale phi.
pub fn occupancy_expectation(sub: &GasSubsystem, phi: f64) -> Result<Vec<f64>> {
    let (log_z, sites) = enumerate_impl(sub, phi, None, DEFAULT_ENUMERATION_CAP, true)?;
    Ok(sites
        .unwrap()
        .into_iter()
        .map(|s| (s - log_z).exp().min(1.0))
        .collect())
}

/// Reference implementation: recompute every configuration weight from
/// scratch and sum with a two-pass shift. Used as the exactness oracle for
/// the Gray-code walk.
pub fn naive_log_partition(sub: &GasSubsystem, phi: f64) -> Result<f64> {
    if sub.m > 20 {
        return Err(Error::EnumerationCapExceeded { m: sub.m, cap: 20 });
    }
    let weights: Vec<f64> = (0..1u64 << sub.m)
        .map(|bits| config_log_weight(sub, &Occupation { bits }, phi))
        .collect();
    Ok(crate::math::logsumexp(&weights))
}
