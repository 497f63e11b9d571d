//! Executing a validated configuration and writing its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use serde_json::{json, Value};

use linewidth::dynamics::{eigenvalue_histogram, toy_decay_curve, HistogramBins};
use linewidth::pair_statistics::{cumulative_p, empirical_pair_cdf, log_grid, pair_density, PairDistributionKind};
use linewidth::spectroscopy::{
    extract_fwhm, finite_size_scan, gaussian_convolve, linear_grid, spectrum, width_vs_ratio, MotionSpec,
};
use linewidth::{LineWidthResult, ModelSpec, RatioScanSpec, SpectrumCurve};

use crate::config::{validate, RunConfig, Subcommand};

pub const UNITS: &str =
    "units: energies and detunings in units of the mean creation coupling at unit density, times in its inverse";

/// Files produced by a run, relative to the output directory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub summary: Value,
}

struct Artifact {
    name: String,
    contents: String,
}

fn csv(config: &RunConfig, columns: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# linewidth {} {}", env!("CARGO_PKG_VERSION"), config.subcommand);
    let _ = writeln!(out, "# {UNITS}");
    for (k, v) in config.entries() {
        if k != "output_dir" && k != "plot_script" && k != "worker_count" {
            let _ = writeln!(out, "# {k} = {v}");
        }
    }
    let _ = writeln!(out, "{}", columns.join(","));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

fn curve_csv(config: &RunConfig, curve: &SpectrumCurve) -> String {
    let rows = (0..curve.detunings.len()).map(|i| vec![curve.detunings[i], curve.yields[i], curve.std_errors[i]]);
    csv(config, &["detuning", "yield", "std_error"], rows)
}

fn width_json(w: &LineWidthResult) -> Value {
    let (left, right) = w.half_widths();
    json!({
        "fwhm": w.fwhm,
        "uncertainty": w.uncertainty,
        "half_max": w.half_max,
        "peak": w.peak,
        "peak_detuning": w.peak_detuning,
        "baseline": w.baseline,
        "left_cross": w.left_cross,
        "right_cross": w.right_cross,
        "left_half_width": left,
        "right_half_width": right,
    })
}

/// Width of a curve, or the reason it has none.
fn curve_width(curve: &SpectrumCurve) -> Value {
    match extract_fwhm(curve) {
        Ok(w) => width_json(&w),
        Err(e) => {
            log::warn!("no line width: {e}");
            json!({ "error": e.to_string() })
        }
    }
}

fn model_json(m: &ModelSpec) -> Value {
    json!({
        "case": m.case.to_string(),
        "mu_sp": m.mu_sp,
        "mu_sp_prime": m.mu_sp_prime,
        "mu_s_prime_p_prime": m.mu_s_prime_p_prime,
        "exchange": m.include_exchange,
        "creation": m.include_creation,
    })
}

fn curve_summary(curve: &SpectrumCurve) -> Value {
    let tails: Vec<Value> = [-40.0, 40.0]
        .iter()
        .filter_map(|&d| curve.yield_at(d).map(|y| json!({ "detuning": d, "yield": y, "std_error": curve.std_error_at(d) })))
        .collect();
    json!({
        "n_configs": curve.n_configs,
        "width": curve_width(curve),
        "tail_yields": tails,
        "zero_padded_weight": curve.metadata.zero_padded_weight,
    })
}

type Execution = (Vec<Artifact>, Value);

fn execute(config: &RunConfig) -> anyhow::Result<Execution> {
    let seed = config.master_seed.context("master_seed is required")?;
    let art = |name: &str, contents: String| Artifact { name: name.to_string(), contents };
    match config.subcommand {
        Subcommand::ToyDecay => {
            let times = linear_grid(0.0, config.t_max, config.t_points)?;
            let curve = toy_decay_curve(&ModelSpec::toy(config.mu_sp()), config.n_atoms(), config.n_configs, &times, seed)?;
            let rows = (0..times.len()).map(|i| vec![curve.times[i], curve.survival[i], curve.std_errors[i]]);
            let tail = &curve.survival[curve.survival.len() * 3 / 4..];
            let summary = json!({
                "survival_at_0.2": curve.at(0.2),
                "plateau": tail.iter().sum::<f64>() / tail.len() as f64,
                "n_configs": curve.n_configs,
            });
            Ok((vec![art("toy_decay.csv", csv(config, &["t", "survival", "std_error"], rows))], summary))
        }
        Subcommand::ToyBand => {
            let bins = HistogramBins { lo: config.hist_min, hi: config.hist_max, count: config.hist_bins };
            let h = eigenvalue_histogram(&ModelSpec::toy(config.mu_sp()), config.n_atoms(), config.n_configs, bins, seed)?;
            let norm = h.n_eigenvalues as f64 * bins.width();
            let rows = h.counts.iter().enumerate().map(|(i, &c)| vec![bins.center(i), c as f64, c as f64 / norm]);
            let summary = json!({
                "central_90_interval": [h.central_interval.0, h.central_interval.1],
                "central_90_width": h.central_width,
                "histogram_fwhm": h.fwhm,
                "median": h.median,
                "sign_asymmetry": h.sign_asymmetry,
                "n_eigenvalues": h.n_eigenvalues,
                "underflow": h.underflow,
                "overflow": h.overflow,
            });
            Ok((vec![art("toy_band.csv", csv(config, &["energy", "count", "density"], rows))], summary))
        }
        Subcommand::Spectrum => {
            let curve = spectrum(config.spectrum_request(config.n_atoms()))?;
            let summary = json!({ "model": model_json(&curve.metadata.model), "spectrum": curve_summary(&curve) });
            Ok((vec![art("spectrum.csv", curve_csv(config, &curve))], summary))
        }
        Subcommand::Convolve => {
            let curve = spectrum(config.spectrum_request(config.n_atoms()))?;
            let profile = config.profile();
            let convolved = gaussian_convolve(&curve, &profile)?;
            let summary = json!({
                "model": model_json(&curve.metadata.model),
                "sigma": profile.sigma,
                "spectrum": curve_summary(&curve),
                "convolved": curve_summary(&convolved),
            });
            Ok((
                vec![
                    art("spectrum.csv", curve_csv(config, &curve)),
                    art("spectrum_convolved.csv", curve_csv(config, &convolved)),
                ],
                summary,
            ))
        }
        Subcommand::Pairdist => {
            let grid = log_grid(config.delta_min, config.delta_max, config.delta_points)?;
            let (iso, dip) = (PairDistributionKind::Isotropic, PairDistributionKind::Dipolar);
            let empirical = if config.empirical {
                Some(empirical_pair_cdf(config.n_atoms(), config.n_configs, dip, seed)?)
            } else {
                None
            };
            let mut rows = Vec::with_capacity(grid.len());
            for &d in &grid {
                let mut row = vec![pair_density(d, iso)?, pair_density(d, dip)?, cumulative_p(d, iso)?, cumulative_p(d, dip)?];
                row.insert(0, d);
                if let Some(e) = &empirical {
                    row.push(e.cdf(d));
                }
                rows.push(row);
            }
            let mut columns = vec!["delta", "density_iso", "density_dip", "cumulative_iso", "cumulative_dip"];
            if empirical.is_some() {
                columns.push("empirical_cdf");
            }
            let summary = json!({
                "density_dip_at_1e-6": pair_density(1e-6, dip)?,
                "dipolar_tail_above_40": 1.0 - cumulative_p(40.0, dip)?,
                "isotropic_tail_above_40": 1.0 - cumulative_p(40.0, iso)?,
                "empirical_samples": empirical.as_ref().map(|e| e.samples().len()),
            });
            Ok((vec![art("pairdist.csv", csv(config, &columns, rows))], summary))
        }
        Subcommand::WidthVsNu => {
            let n = config.n_atoms();
            let scan = RatioScanSpec::new(n, config.nu_values.clone())?;
            let profile = config.profile();
            let rows = width_vs_ratio(&scan, &config.spectrum_request(n), config.convolve.then_some(&profile))?;
            let table = rows.iter().map(|r| {
                vec![r.nu, r.s_count as f64, r.s_prime_count as f64, r.width.fwhm, r.width.uncertainty]
            });
            let summary = json!({
                "convolved": config.convolve,
                "rows": rows.iter().map(|r| json!({ "nu": r.nu, "s_count": r.s_count, "width": width_json(&r.width) })).collect::<Vec<_>>(),
            });
            let columns = ["nu", "s_count", "s_prime_count", "fwhm", "uncertainty"];
            Ok((vec![art("width_vs_nu.csv", csv(config, &columns, table))], summary))
        }
        Subcommand::FiniteSize => {
            let scan = finite_size_scan(&config.spectrum_request(config.sizes[0]), &config.sizes)?;
            let table = scan.rows.iter().map(|(n, w)| vec![*n as f64, w.fwhm, w.uncertainty]);
            let largest = scan.rows.last().map(|(_, w)| w.fwhm).unwrap_or(f64::NAN);
            let summary = json!({
                "rows": scan.rows.iter().map(|(n, w)| json!({ "n_atoms": n, "width": width_json(w) })).collect::<Vec<_>>(),
                "extrapolated": scan.extrapolated,
                "slope": scan.slope,
                "fit_residual": scan.fit_residual,
                "relative_change_from_largest": scan.extrapolated / largest - 1.0,
            });
            Ok((vec![art("finite_size.csv", csv(config, &["n_atoms", "fwhm", "uncertainty"], table))], summary))
        }
        Subcommand::Motion => {
            let frozen_req = config.spectrum_request(config.n_atoms());
            let moving_req = frozen_req.clone().with_motion(MotionSpec { speed: config.speed, rebuild_dt: config.rebuild_dt });
            let frozen = spectrum(frozen_req)?;
            let moving = spectrum(moving_req)?;
            let increase = match (extract_fwhm(&frozen), extract_fwhm(&moving)) {
                (Ok(a), Ok(b)) => Some(b.fwhm / a.fwhm - 1.0),
                _ => None,
            };
            let summary = json!({
                "model": model_json(&frozen.metadata.model),
                "speed": config.speed,
                "rebuild_dt": config.rebuild_dt.unwrap_or(config.t_final() / 200.0),
                "frozen": curve_summary(&frozen),
                "moving": curve_summary(&moving),
                "relative_width_increase": increase,
            });
            Ok((
                vec![
                    art("spectrum_frozen.csv", curve_csv(config, &frozen)),
                    art("spectrum_moving.csv", curve_csv(config, &moving)),
                ],
                summary,
            ))
        }
    }
}

const PLOT_PRELUDE: &str = r##"#!/usr/bin/env python3
# Plots the CSV artifacts in this directory. Needs matplotlib.
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(name):
    with open(os.path.join(HERE, name)) as f:
        rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


fig, ax = plt.subplots(figsize=(6, 4))
"##;

fn plot_script(sub: Subcommand) -> String {
    let body = match sub {
        Subcommand::ToyDecay => {
            r#"d = read("toy_decay.csv")
ax.errorbar(d["t"], d["survival"], yerr=d["std_error"], fmt="-", lw=1)
ax.set_xlabel("t")
ax.set_ylabel("survival probability")
"#
        }
        Subcommand::ToyBand => {
            r#"d = read("toy_band.csv")
ax.step(d["energy"], d["density"], where="mid")
ax.set_xlabel("eigen-energy")
ax.set_ylabel("density")
"#
        }
        Subcommand::Spectrum => {
            r#"d = read("spectrum.csv")
ax.errorbar(d["detuning"], d["yield"], yerr=d["std_error"], fmt=".-", lw=1)
ax.set_xlabel("detuning")
ax.set_ylabel("yield")
"#
        }
        Subcommand::Convolve => {
            r#"for name, label in [("spectrum.csv", "homogeneous"), ("spectrum_convolved.csv", "Gaussian cloud")]:
    d = read(name)
    ax.plot(d["detuning"], d["yield"], ".-", lw=1, label=label)
ax.set_xlabel("detuning")
ax.set_ylabel("yield")
ax.legend()
"#
        }
        Subcommand::Pairdist => {
            r#"d = read("pairdist.csv")
ax.semilogx(d["delta"], d["cumulative_iso"], label="isotropic")
ax.semilogx(d["delta"], d["cumulative_dip"], label="dipolar")
if "empirical_cdf" in d:
    ax.semilogx(d["delta"], d["empirical_cdf"], "k:", label="sampled (dipolar)")
ax.set_xlabel("|V|")
ax.set_ylabel("P(|V| <= delta)")
ax.legend()
"#
        }
        Subcommand::WidthVsNu => {
            r#"d = read("width_vs_nu.csv")
ax.errorbar(d["nu"], d["fwhm"], yerr=d["uncertainty"], fmt="o-")
ax.set_xlabel("population ratio")
ax.set_ylabel("line width")
"#
        }
        Subcommand::FiniteSize => {
            r#"d = read("finite_size.csv")
ax.errorbar([1 / n for n in d["n_atoms"]], d["fwhm"], yerr=d["uncertainty"], fmt="o")
ax.set_xlabel("1 / N")
ax.set_ylabel("line width")
"#
        }
        Subcommand::Motion => {
            r#"for name, label in [("spectrum_frozen.csv", "frozen"), ("spectrum_moving.csv", "moving")]:
    d = read(name)
    ax.errorbar(d["detuning"], d["yield"], yerr=d["std_error"], fmt=".-", lw=1, label=label)
ax.set_xlabel("detuning")
ax.set_ylabel("yield")
ax.legend()
"#
        }
    };
    format!(
        "{PLOT_PRELUDE}{body}fig.tight_layout()\nout = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, \"{}.png\")\nfig.savefig(out, dpi=150)\n",
        sub.name()
    )
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Validate, run on a pool of `worker_count` threads, and write artifacts.
/// Everything except the manifest (which records elapsed time) is identical
/// across runs of the same configuration.
pub fn run(config: &RunConfig) -> anyhow::Result<RunOutcome> {
    let violations = validate(config);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        bail!("invalid configuration:\n  {}", list.join("\n  "));
    }
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.worker_count).build()?;
    let start = Instant::now();
    log::info!("running {} into {}", config.subcommand, dir.display());
    let (artifacts, summary) = match pool.install(|| execute(config)) {
        Ok(x) => x,
        Err(e) => {
            let diagnostics = json!({
                "subcommand": config.subcommand.name(),
                "error": format!("{e:#}"),
                "config": config.entries().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect::<serde_json::Map<_, _>>(),
            });
            write(&dir, "diagnostics.json", &serde_json::to_string_pretty(&diagnostics)?)?;
            return Err(e.context(format!("{} failed; see {}", config.subcommand, dir.join("diagnostics.json").display())));
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    let mut names = Vec::new();
    for a in &artifacts {
        write(&dir, &a.name, &a.contents)?;
        names.push(a.name.clone());
    }
    write(&dir, "config.txt", &config.to_text())?;
    names.push("config.txt".into());
    let summary = json!({
        "subcommand": config.subcommand.name(),
        "master_seed": config.master_seed,
        "n_configs": config.n_configs,
        "results": summary,
    });
    write(&dir, "summary.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    names.push("summary.json".into());
    if config.plot_script {
        write(&dir, "plot.py", &plot_script(config.subcommand))?;
        names.push("plot.py".into());
    }
    let manifest = json!({
        "tool": "linewidth",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": config.subcommand.name(),
        "config": config.entries().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect::<serde_json::Map<_, _>>(),
        "artifacts": names,
        "elapsed_seconds": elapsed,
    });
    write(&dir, "manifest.json", &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    names.push("manifest.json".into());
    log::info!("finished in {elapsed:.1} s");
    Ok(RunOutcome { output_dir: dir, artifacts: names, summary: summary["results"].clone() })
}
