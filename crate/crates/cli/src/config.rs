//! Run configuration: a sectioned key-value file (TOML syntax, no nesting
//! beyond one table level) declaring the grid, the process parameters or
//! parameter grids, the initial curve, the engine, and the outputs.
//!
//! Parsing is strict (`deny_unknown_fields`), so typos fail loudly with the
//! offending line. Every run re-emits the fully resolved configuration next
//! to its outputs; feeding that file back reproduces the run.

use std::fmt::Write as _;
use std::path::Path;

use latgas_core::{ChainConfig, Engine, ProcessSpec, TenorGrid, YieldCurve};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for every random operation; required by commands that sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads for scans and chain pools (default: all cores).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub grid: GridSection,
    pub process: ProcessSection,
    pub curve: CurveSection,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_grid: Option<SigmaGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flat_forward: Option<f64>,
    /// Discount factors P(0, t_0) .. P(0, t_n), starting at 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discounts: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enumeration_cap: Option<usize>,
    pub chains: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub thinning: usize,
    pub lambda_nodes: usize,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            kind: "exact".into(),
            enumeration_cap: None,
            chains: 4,
            burn_in: 500,
            samples: 20_000,
            thinning: 1,
            lambda_nodes: 8,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    /// Anchor period whose convexity factor the scan reports.
    pub index: usize,
    #[serde(default = "default_phi")]
    pub phi: f64,
}

fn default_phi() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg: Option<String>,
}

/// Parsed, cross-checked, override-applied configuration.
pub struct Resolved {
    pub grid: TenorGrid,
    pub sigmas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub curve: YieldCurve,
    pub engine_kind: EngineKind,
    pub engine_section: EngineSection,
    pub scan: Option<ScanSection>,
    pub output: OutputSection,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Exact,
    Sampled,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| config_err(format!("config {}: {e}", path.display())))
}

/// CLI-level overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub engine: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

pub fn resolve(mut raw: RunConfig, overrides: &Overrides) -> Result<Resolved, CliError> {
    if let Some(kind) = &overrides.engine {
        raw.engine.kind = kind.clone();
    }
    if let Some(seed) = overrides.seed {
        raw.seed = Some(seed);
    }
    if let Some(threads) = overrides.threads {
        raw.threads = Some(threads);
    }

    let grid = TenorGrid::new(raw.grid.n, raw.grid.tau)
        .map_err(|e| config_err(format!("[grid] {e}")))?;

    let sigmas = resolve_sigmas(&raw.process)?;
    let gammas = resolve_gammas(&raw.process)?;
    for &s in &sigmas {
        ProcessSpec::new(s, 0.0).map_err(|e| config_err(format!("[process] {e}")))?;
    }
    for &g in &gammas {
        ProcessSpec::new(sigmas[0], g).map_err(|e| config_err(format!("[process] {e}")))?;
    }

    let curve = resolve_curve(&raw.curve, &grid)?;

    let engine_kind = match raw.engine.kind.as_str() {
        "exact" => EngineKind::Exact,
        "sampled" => EngineKind::Sampled,
        other => {
            return Err(config_err(format!(
                "[engine] kind = \"{other}\": expected \"exact\" or \"sampled\""
            )))
        }
    };

    if let Some(scan) = &raw.scan {
        if scan.index >= grid.n {
            return Err(config_err(format!(
                "[scan] index = {} outside the {}-period grid",
                scan.index, grid.n
            )));
        }
    }

    Ok(Resolved {
        grid,
        sigmas,
        gammas,
        curve,
        engine_kind,
        engine_section: raw.engine,
        scan: raw.scan,
        output: raw.output,
        seed: raw.seed,
        threads: raw.threads,
    })
}

fn resolve_sigmas(p: &ProcessSection) -> Result<Vec<f64>, CliError> {
    let forms =
        usize::from(p.sigma.is_some()) + usize::from(p.sigma_grid.is_some()) + usize::from(p.sigma_list.is_some());
    if forms != 1 {
        return Err(config_err(
            "[process] needs exactly one of sigma, sigma_grid, sigma_list",
        ));
    }
    let sigmas = if let Some(s) = p.sigma {
        vec![s]
    } else if let Some(g) = &p.sigma_grid {
        if !(g.step > 0.0) || !(g.stop > g.start) {
            return Err(config_err(
                "[process] sigma_grid needs step > 0 and stop > start",
            ));
        }
        let count = ((g.stop - g.start) / g.step + 1.0 + 1e-9).floor() as usize;
        (0..count).map(|k| g.start + g.step * k as f64).collect()
    } else {
        p.sigma_list.clone().unwrap()
    };
    if sigmas.is_empty() {
        return Err(config_err("[process] sigma grid is empty"));
    }
    if sigmas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config_err("[process] sigma values must be strictly increasing"));
    }
    Ok(sigmas)
}

fn resolve_gammas(p: &ProcessSection) -> Result<Vec<f64>, CliError> {
    let forms = usize::from(p.gamma.is_some()) + usize::from(p.gamma_list.is_some());
    if forms != 1 {
        return Err(config_err("[process] needs exactly one of gamma, gamma_list"));
    }
    let gammas = p.gamma.map(|g| vec![g]).unwrap_or_else(|| p.gamma_list.clone().unwrap());
    if gammas.is_empty() {
        return Err(config_err("[process] gamma list is empty"));
    }
    Ok(gammas)
}

fn resolve_curve(c: &CurveSection, grid: &TenorGrid) -> Result<YieldCurve, CliError> {
    match (c.flat_forward, &c.discounts) {
        (Some(fwd), None) => YieldCurve::flat_forward(grid.n, grid.tau, fwd)
            .map_err(|e| config_err(format!("[curve] {e}"))),
        (None, Some(d)) => {
            if d.len() != grid.n + 1 {
                return Err(config_err(format!(
                    "[curve] {} discounts for a {}-period grid (need n + 1 = {})",
                    d.len(),
                    grid.n,
                    grid.n + 1
                )));
            }
            YieldCurve::from_discounts(d.clone()).map_err(|e| config_err(format!("[curve] {e}")))
        }
        _ => Err(config_err(
            "[curve] needs exactly one of flat_forward, discounts",
        )),
    }
}

impl Resolved {
    /// Core engine value for evaluation at a given derived seed.
    pub fn engine(&self, seed: u64) -> Result<Engine, CliError> {
        match self.engine_kind {
            EngineKind::Exact => Ok(match self.engine_section.enumeration_cap {
                Some(cap) => Engine::Exact { cap },
                None => Engine::default(),
            }),
            EngineKind::Sampled => {
                let e = &self.engine_section;
                let chains = ChainConfig::new(seed, e.burn_in, e.samples, e.thinning, e.chains)
                    .map_err(|e| CliError::Config(format!("[engine] {e}")))?;
                Ok(Engine::Sampled { chains, lambda_nodes: e.lambda_nodes })
            }
        }
    }

    /// Seed, or a config error naming the field, for commands that sample.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Config("seed: required (set `seed = <u64>` or pass --seed)".into())
        })
    }

    /// The single (sigma, gamma) pair, for commands that run one process.
    pub fn single_process(&self) -> Result<ProcessSpec, CliError> {
        if self.sigmas.len() != 1 || self.gammas.len() != 1 {
            return Err(CliError::Config(format!(
                "[process] this command runs a single process, got {} sigma x {} gamma values",
                self.sigmas.len(),
                self.gammas.len()
            )));
        }
        ProcessSpec::new(self.sigmas[0], self.gammas[0])
            .map_err(|e| CliError::Config(format!("[process] {e}")))
    }

    /// Canonical re-emission of the resolved run: lists instead of scalar
    /// shorthands, explicit discounts, all engine knobs spelled out.
    pub fn effective_config(&self) -> RunConfig {
        let discounts = (0..=self.grid.n).map(|i| self.curve.discount(i)).collect();
        RunConfig {
            seed: self.seed,
            threads: self.threads,
            grid: GridSection { n: self.grid.n, tau: self.grid.tau },
            process: ProcessSection {
                sigma: None,
                sigma_grid: None,
                sigma_list: Some(self.sigmas.clone()),
                gamma: None,
                gamma_list: Some(self.gammas.clone()),
            },
            curve: CurveSection { flat_forward: None, discounts: Some(discounts) },
            engine: EngineSection {
                kind: match self.engine_kind {
                    EngineKind::Exact => "exact".into(),
                    EngineKind::Sampled => "sampled".into(),
                },
                ..self.engine_section.clone()
            },
            scan: self.scan.clone(),
            output: self.output.clone(),
        }
    }

    pub fn write_effective_config(&self, out_dir: &Path) -> Result<(), CliError> {
        let mut text = String::new();
        let _ = writeln!(text, "# resolved configuration; rerunning on this file reproduces the run");
        let body = toml::to_string(&self.effective_config())
            .map_err(|e| CliError::Numerical(format!("serializing effective config: {e}")))?;
        text.push_str(&body);
        let path = out_dir.join("effective_config.toml");
        std::fs::write(&path, text)
            .map_err(|e| CliError::Numerical(format!("writing {}: {e}", path.display())))
    }
}
