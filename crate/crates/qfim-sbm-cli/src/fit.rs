//! Post-processing of sweep CSVs: peak extraction and power-law fits.
//!
//! `peak-power-law` mode takes one sweep CSV per bias value, locates the
//! interior maximum of the chosen column along α in each, and fits the
//! peak positions to α_peak(h) = C − A·h^B, whose h → 0⁺ intercept C
//! estimates the critical coupling. `pure-power` mode takes a single CSV
//! and fits column = A·α^B, the ultra-weak-coupling divergence check.
//!
//! Rows with a non-`ok` status or a failed coarse-grain gate are dropped
//! before fitting; each input must hold exactly one bias value.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use qfim_sbm::analysis::{find_peak, fit_power_law, fit_pure_power, PeakEstimate};

use crate::config::RunConfig;
use crate::journal::{write_atomic, RunPaths};

/// Column order of the peak-summary CSV.
pub const PEAKS_HEADER: &str =
    "run_id,input,h,n_points,alpha_peak,height,fwhm,fwhm_clipped,sigma_alpha";

/// One parsed sweep row, restricted to what the fits consume.
struct SweepRow {
    alpha: f64,
    h: f64,
    value: f64,
}

/// Peak location extracted from one input file.
#[derive(Debug, Clone, Serialize)]
pub struct PeakSummary {
    pub input: PathBuf,
    pub h: f64,
    pub n_points: usize,
    pub alpha_peak: f64,
    pub height: f64,
    pub fwhm: f64,
    pub fwhm_clipped: bool,
    pub sigma_alpha: f64,
}

/// JSON report of a `peak-power-law` fit.
#[derive(Debug, Clone, Serialize)]
pub struct PeakPowerLawReport {
    pub run_id: String,
    pub column: String,
    pub peaks: Vec<PeakSummary>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub a_err: f64,
    pub b_err: f64,
    pub c_err: f64,
    pub residual_norm: f64,
    pub reduced_residual: f64,
    pub n_iter: usize,
    /// True when α_peak decreases monotonically with h (larger bias pulls
    /// the peak toward weaker coupling).
    pub peaks_monotone_in_h: bool,
}

/// JSON report of a `pure-power` fit.
#[derive(Debug, Clone, Serialize)]
pub struct PurePowerReport {
    pub run_id: String,
    pub column: String,
    pub input: PathBuf,
    pub n_points: usize,
    pub amplitude: f64,
    pub exponent: f64,
    pub amplitude_err: f64,
    pub exponent_err: f64,
    pub residual_norm: f64,
}

/// Output of one fit invocation.
pub enum FitArtifacts {
    PeakPowerLaw { peaks_csv: PathBuf, report_path: PathBuf, report: PeakPowerLawReport },
    PurePower { report_path: PathBuf, report: PurePowerReport },
}

/// Read `alpha`, `h`, and `column` from a sweep CSV, dropping rows whose
/// status is not `ok` or whose coarse-grain gate (when present and
/// non-empty) failed.
fn read_sweep(path: &Path, column: &str) -> Result<Vec<SweepRow>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let alpha_idx = col("alpha").with_context(|| format!("{} has no alpha column", path.display()))?;
    let h_idx = col("h").with_context(|| format!("{} has no h column", path.display()))?;
    let value_idx =
        col(column).with_context(|| format!("{} has no {column} column", path.display()))?;
    let status_idx = col("status");
    let gate_idx = col("d_gate_ok");
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if let Some(i) = status_idx {
            if &rec[i] != "ok" {
                continue;
            }
        }
        if let Some(i) = gate_idx {
            if &rec[i] == "0" {
                continue;
            }
        }
        let value: f64 = match rec[value_idx].parse() {
            Ok(v) => v,
            Err(_) => continue,
        };
        if !value.is_finite() {
            continue;
        }
        rows.push(SweepRow {
            alpha: rec[alpha_idx].parse().context("bad alpha cell")?,
            h: rec[h_idx].parse().context("bad h cell")?,
            value,
        });
    }
    if rows.is_empty() {
        bail!("{} holds no usable rows", path.display());
    }
    Ok(rows)
}

fn peak_of(path: &Path, column: &str, sigma_override: Option<f64>) -> Result<PeakSummary> {
    let mut rows = read_sweep(path, column)?;
    let h0 = rows[0].h;
    if rows.iter().any(|r| r.h != h0) {
        bail!("{} mixes bias values; one input per h", path.display());
    }
    rows.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).unwrap());
    rows.dedup_by(|a, b| a.alpha == b.alpha);
    let xs: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let peak: PeakEstimate = find_peak(&xs, &ys)
        .map_err(|e| anyhow::anyhow!("peak search in {}: {e}", path.display()))?;
    let sigma = sigma_override.unwrap_or_else(|| {
        let mut gaps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        0.5 * gaps[gaps.len() / 2]
    });
    Ok(PeakSummary {
        input: path.to_path_buf(),
        h: h0,
        n_points: xs.len(),
        alpha_peak: peak.location,
        height: peak.height,
        fwhm: peak.fwhm,
        fwhm_clipped: peak.fwhm_clipped,
        sigma_alpha: sigma,
    })
}

/// Run the fit command in the mode picked by the config.
pub fn run_fit(cfg: &RunConfig) -> Result<FitArtifacts> {
    let run_id = cfg.run_id();
    std::fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let paths = RunPaths::new(&cfg.output.dir, &run_id);
    write_atomic(&paths.config_echo(), serde_json::to_string_pretty(cfg)?.as_bytes())?;
    let fit = cfg.fit.as_ref().context("fit command needs a [fit] block")?;

    match fit.mode.as_str() {
        "peak-power-law" => {
            let mut peaks = Vec::new();
            for input in &fit.inputs {
                peaks.push(peak_of(input, &fit.column, fit.sigma_alpha)?);
            }
            peaks.sort_by(|a, b| b.h.partial_cmp(&a.h).unwrap());
            let monotone = peaks.windows(2).all(|w| w[0].alpha_peak < w[1].alpha_peak);
            let pts: Vec<(f64, f64, f64)> =
                peaks.iter().map(|p| (p.h, p.alpha_peak, p.sigma_alpha)).collect();
            let fitres = fit_power_law(&pts).map_err(|e| anyhow::anyhow!("{e}"))?;

            let mut csv = String::from(PEAKS_HEADER);
            csv.push('\n');
            for p in &peaks {
                csv.push_str(&format!(
                    "{run_id},{},{:.12e},{},{:.12e},{:.12e},{:.12e},{},{:.12e}\n",
                    p.input.display(),
                    p.h,
                    p.n_points,
                    p.alpha_peak,
                    p.height,
                    p.fwhm,
                    p.fwhm_clipped as u8,
                    p.sigma_alpha,
                ));
            }
            let peaks_csv = paths.csv("peaks");
            write_atomic(&peaks_csv, csv.as_bytes())?;

            let report = PeakPowerLawReport {
                run_id: run_id.clone(),
                column: fit.column.clone(),
                peaks,
                a: fitres.a,
                b: fitres.b,
                c: fitres.c,
                a_err: fitres.a_err,
                b_err: fitres.b_err,
                c_err: fitres.c_err,
                residual_norm: fitres.residual_norm,
                reduced_residual: fitres.reduced_residual,
                n_iter: fitres.n_iter,
                peaks_monotone_in_h: monotone,
            };
            let report_path = paths.report("fit-peaks");
            write_atomic(&report_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
            eprintln!("run {run_id}: wrote {} and {}", peaks_csv.display(), report_path.display());
            Ok(FitArtifacts::PeakPowerLaw { peaks_csv, report_path, report })
        }
        "pure-power" => {
            if fit.inputs.len() != 1 {
                bail!("pure-power mode takes exactly one input, got {}", fit.inputs.len());
            }
            let input = &fit.inputs[0];
            let mut rows = read_sweep(input, &fit.column)?;
            rows.sort_by(|a, b| a.alpha.partial_cmp(&b.alpha).unwrap());
            let pts: Vec<(f64, f64, f64)> = rows
                .iter()
                .map(|r| (r.alpha, r.value, fit.rel_sigma * r.value.abs()))
                .collect();
            let fitres = fit_pure_power(&pts).map_err(|e| anyhow::anyhow!("{e}"))?;
            let report = PurePowerReport {
                run_id: run_id.clone(),
                column: fit.column.clone(),
                input: input.clone(),
                n_points: pts.len(),
                amplitude: fitres.amplitude,
                exponent: fitres.exponent,
                amplitude_err: fitres.amplitude_err,
                exponent_err: fitres.exponent_err,
                residual_norm: fitres.residual_norm,
            };
            let report_path = paths.report("fit-power");
            write_atomic(&report_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
            eprintln!("run {run_id}: wrote {}", report_path.display());
            Ok(FitArtifacts::PurePower { report_path, report })
        }
        other => bail!("unknown fit mode {other:?}"),
    }
}
