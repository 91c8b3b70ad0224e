//! The three subcommands: calibrate (single process, full bootstrap report),
//! scan (sigma x gamma sweep of the convexity factor with transition
//! detection), and validate (the library's invariant battery as JSON).

use std::fmt::Write as _;
use std::path::Path;

use latgas_core::{
    calibrate, calibrate_down_to, convexity_expectation_n, detect_critical_volatility, exec,
    run_battery, validate::Fault, BatteryConfig, Engine, Method, PartitionValue, ProcessSpec,
};

use crate::config::{EngineKind, Resolved};
use crate::{svg, CliError};

fn numerical(msg: impl Into<String>) -> CliError {
    CliError::Numerical(msg.into())
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| numerical(format!("creating {}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, content).map_err(|e| numerical(format!("writing {}: {e}", path.display())))
}

/// Full bootstrap of one process; CSV report of forwards, adjusted Libors,
/// and per-date convexity adjustments, plus a curve-reproduction self-check.
pub fn cmd_calibrate(cfg: &Resolved, out_dir: &Path) -> Result<(), CliError> {
    let spec = cfg.single_process()?;
    if cfg.engine_kind == EngineKind::Sampled {
        return Err(CliError::Config(
            "[engine] calibration requires kind = \"exact\" (sampling would make the adjusted Libors noisy)"
                .into(),
        ));
    }
    let engine = cfg.engine(0)?;
    let model = calibrate(&cfg.grid, &spec, &cfg.curve, &engine)
        .map_err(|e| numerical(format!("calibration failed: {e}")))?;

    let mut csv = String::from("i,t_i,L_fwd,L_tilde,lnN1\n");
    for i in 0..cfg.grid.n {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            i,
            cfg.grid.time(i),
            cfg.curve.forward(i, cfg.grid.tau),
            model.libor(i).unwrap(),
            model.ln_n1(i).unwrap()
        );
    }
    let csv_name = cfg.output.csv.as_deref().unwrap_or("calibration.csv");
    let csv_path = out_dir.join(csv_name);
    write_file(&csv_path, &csv)?;
    cfg.write_effective_config(out_dir)?;

    // Self-check: N_i(0) must telescope back to the input discount curve.
    let mut worst: f64 = 0.0;
    for i in 0..cfg.grid.n {
        let ln_n0 = convexity_expectation_n(&model, i, 0.0, &engine)
            .map_err(|e| numerical(format!("self-check at i = {i}: {e}")))?
            .log_value;
        worst = worst.max(((ln_n0 - cfg.curve.ln_phat(i + 1)).exp() - 1.0).abs());
    }
    let reproduced = worst <= 1e-10;
    println!(
        "calibrated {} periods (sigma = {}, gamma = {}) -> {}",
        cfg.grid.n,
        spec.sigma,
        spec.gamma,
        csv_path.display()
    );
    println!(
        "curve-reproduction: {} (worst |N_i(0)/P^(0,i+1) - 1| = {worst:.2e})",
        if reproduced { "PASS" } else { "FAIL" }
    );
    if !reproduced {
        return Err(numerical(format!(
            "curve reproduction defect {worst:.2e} exceeds 1e-10"
        )));
    }
    Ok(())
}

struct ScanRow {
    gamma: f64,
    sigma: f64,
    result: Result<PartitionValue, String>,
}

/// Sweep the (gamma, sigma) grid, recalibrating at every point, and report
/// ln N_i(phi) rows plus the detected critical volatility per gamma.
pub fn cmd_scan(cfg: &Resolved, out_dir: &Path) -> Result<(), CliError> {
    let scan = cfg
        .scan
        .clone()
        .ok_or_else(|| CliError::Config("[scan] section required for the scan command".into()))?;
    if cfg.engine_kind == EngineKind::Sampled {
        cfg.require_seed()?;
    }
    let n_sigma = cfg.sigmas.len();
    let points = cfg.gammas.len() * n_sigma;

    let rows: Vec<ScanRow> = exec::map_indexed(points, |flat| {
        let gamma = cfg.gammas[flat / n_sigma];
        let sigma = cfg.sigmas[flat % n_sigma];
        let result = scan_point(cfg, &scan, sigma, gamma, flat as u64);
        ScanRow { gamma, sigma, result }
    });

    // Transition detection per gamma, on fully successful curves only.
    let mut flags = vec![false; points];
    let mut summaries = Vec::new();
    for (g, &gamma) in cfg.gammas.iter().enumerate() {
        let slice = &rows[g * n_sigma..(g + 1) * n_sigma];
        let values: Option<Vec<f64>> =
            slice.iter().map(|r| r.result.as_ref().ok().map(|p| p.log_value)).collect();
        let Some(values) = values else {
            summaries.push(format!("gamma = {gamma}: scan incomplete, detection skipped"));
            continue;
        };
        match detect_critical_volatility(&cfg.sigmas, &values) {
            Ok(cv) => {
                if let Some(k) = cfg.sigmas.iter().position(|&s| s == cv.sigma_cr) {
                    flags[g * n_sigma + k] = true;
                }
                summaries.push(format!(
                    "gamma = {gamma}: sigma_cr = {:.4} +- {:.4}",
                    cv.sigma_cr, cv.uncertainty
                ));
            }
            Err(e) => summaries.push(format!("gamma = {gamma}: {e}")),
        }
    }

    let mut csv = String::from("gamma,sigma,i,lnN,stderr,method,sigma_cr\n");
    let mut failures = 0usize;
    for (k, row) in rows.iter().enumerate() {
        match &row.result {
            Ok(p) => {
                let method = match p.method {
                    Method::Exact => "exact",
                    Method::Sampled => "sampled",
                };
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{}",
                    row.gamma,
                    row.sigma,
                    scan.index,
                    p.log_value,
                    p.stderr,
                    method,
                    u8::from(flags[k])
                );
            }
            Err(msg) => {
                failures += 1;
                eprintln!("scan point (gamma = {}, sigma = {}): {msg}", row.gamma, row.sigma);
                let _ =
                    writeln!(csv, "{},{},{},,,error,0", row.gamma, row.sigma, scan.index);
            }
        }
    }

    let csv_name = cfg.output.csv.as_deref().unwrap_or("scan.csv");
    let csv_path = out_dir.join(csv_name);
    write_file(&csv_path, &csv)?;
    if let Some(svg_name) = &cfg.output.svg {
        let curves: Vec<(f64, Vec<Option<f64>>)> = cfg
            .gammas
            .iter()
            .enumerate()
            .map(|(g, &gamma)| {
                let ys = rows[g * n_sigma..(g + 1) * n_sigma]
                    .iter()
                    .map(|r| r.result.as_ref().ok().map(|p| p.log_value))
                    .collect();
                (gamma, ys)
            })
            .collect();
        let chart = svg::line_chart(
            &cfg.sigmas,
            &curves,
            &format!("ln N_{}({}) vs sigma", scan.index, scan.phi),
        );
        write_file(&out_dir.join(svg_name), &chart)?;
    }
    cfg.write_effective_config(out_dir)?;

    println!("scan: {} points -> {}", points, csv_path.display());
    for s in &summaries {
        println!("{s}");
    }
    if failures > 0 {
        return Err(numerical(format!("{failures} of {points} scan points failed")));
    }
    Ok(())
}

fn scan_point(
    cfg: &Resolved,
    scan: &crate::config::ScanSection,
    sigma: f64,
    gamma: f64,
    flat: u64,
) -> Result<PartitionValue, String> {
    let spec = ProcessSpec::new(sigma, gamma).map_err(|e| e.to_string())?;
    // The bootstrap itself is always exact; the configured engine only decides
    // how the reported N_i(phi) is evaluated.
    let exact = match cfg.engine(0) {
        Ok(e) => e,
        Err(e) => return Err(e.to_string()),
    };
    let calib_engine = match exact {
        Engine::Exact { .. } => exact.clone(),
        Engine::Sampled { .. } => Engine::default(),
    };
    let model = calibrate_down_to(&cfg.grid, &spec, &cfg.curve, &calib_engine, scan.index)
        .map_err(|e| e.to_string())?;
    let seed = cfg.seed.unwrap_or(0).wrapping_add(flat.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let engine = cfg.engine(seed).map_err(|e| e.to_string())?;
    convexity_expectation_n(&model, scan.index, scan.phi, &engine).map_err(|e| e.to_string())
}

/// Run the library's validation battery and emit a JSON report to stdout and
/// the output directory.
pub fn cmd_validate(cfg: &Resolved, fault: Option<&str>, out_dir: &Path) -> Result<(), CliError> {
    let fault = match fault {
        None => None,
        Some("negate-couplings") => Some(Fault::NegateCouplings),
        Some(other) => {
            return Err(CliError::Config(format!(
                "--fault {other}: only \"negate-couplings\" is supported"
            )))
        }
    };
    let battery = BatteryConfig {
        seed: cfg.require_seed()?,
        n_max: cfg.grid.n.clamp(4, 12),
        fault,
        ..BatteryConfig::default()
    };
    let report = run_battery(&battery);
    let all = latgas_core::validate::all_passed(&report);

    let checks: Vec<serde_json::Value> = report
        .iter()
        .map(|c| {
            serde_json::json!({
                "name": c.name,
                "passed": c.passed,
                "detail": c.detail,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "seed": battery.seed,
        "n_max": battery.n_max,
        "fault": fault.map(|_| "negate-couplings"),
        "checks": checks,
        "failed": report.iter().filter(|c| !c.passed).count(),
        "all_passed": all,
    });
    let text = serde_json::to_string_pretty(&doc).expect("report serializes");
    println!("{text}");
    write_file(&out_dir.join("validate_report.json"), &text)?;
    if all {
        Ok(())
    } else {
        let names: Vec<&str> =
            report.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        Err(numerical(format!("validation failed: {}", names.join(", "))))
    }
}
