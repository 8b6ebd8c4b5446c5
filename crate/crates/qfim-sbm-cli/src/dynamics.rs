//! Quench dynamics: one tensor-network evolution per α shift, QFI along
//! the trajectory, and a spectral report.
//!
//! The qubit starts in |↓⟩ with every mode in vacuum, evolves under the
//! full chain Hamiltonian, and is sampled every `sample_stride` steps.
//! F_αα(t) comes from a central difference of the reduced spin state over
//! two sibling trajectories at α ± δ, so one invocation runs three
//! evolutions on the same grid. The report captures the dominant σ_z and
//! QFI frequencies (the latter on the detrended series), their angular
//! ratio, final-quarter plateau means, and sign-change counts of the QFI
//! flow dF/dt.
//!
//! This command recomputes from scratch on every invocation; trajectories
//! are cheap relative to sweeps and a partial time series is not
//! meaningful, so there is no resume path.

use std::path::PathBuf;

use anyhow::{Context, Result};
use ndarray::Array1;
use num_complex::Complex64 as C64;
use serde::Serialize;

use qfim_sbm::analysis::{
    count_sign_changes, fourier_spectrum, spin_expectations, von_neumann_entropy, SpectralWindow,
    TimeSeries,
};
use qfim_sbm::model::{discretize_bath, ModelParams};
use qfim_sbm::mps::{
    build_hamiltonian_mpo, wii_evolve_observe, ChainLayout, MatrixProductState,
    MatrixProductOperator, TruncationPolicy, WiiRunReport,
};
use qfim_sbm::qfim::{
    qfi_flow, qfim_qubit_closed, Basis, DerivativeScheme, ParamDerivative, ParamLabel,
    QubitDensityMatrix,
};

use crate::config::RunConfig;
use crate::journal::{write_atomic, RunPaths};

/// Regularization threshold inside the QFIM formulas.
const QFIM_EPS: f64 = 1e-12;

/// Dominant-frequency summary for the JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct FreqSummary {
    /// Interpolated peak frequency in cycles per unit time.
    pub cyclic: f64,
    /// The same peak as an angular frequency (2π × cyclic).
    pub angular: f64,
    /// Peak magnitude.
    pub magnitude: f64,
    /// Frequency resolution of the grid (cycles per unit time).
    pub bin_width: f64,
}

/// Summary statistics of one dynamics run, serialized next to the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct DynamicsReport {
    pub run_id: String,
    pub alpha: f64,
    pub h: f64,
    pub delta: f64,
    /// Renormalized tunneling Δ(Δ/ω_c)^{α/(1-α)} (NaN for α ≥ 1).
    pub delta_r: f64,
    pub fd_delta_alpha: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Spacing of the sampled series (sample_stride × dt).
    pub sample_dt: f64,
    pub n_samples: usize,
    /// Dominant σ_z frequency (detrended by its final-quarter mean).
    pub sz_frequency: FreqSummary,
    /// Dominant F_αα frequency (detrended by its final-quarter mean).
    pub qfi_frequency: FreqSummary,
    /// qfi_frequency.angular / sz_frequency.angular.
    pub angular_ratio: f64,
    /// Mean of ⟨σ_z⟩ over the final quarter of the run.
    pub sz_final_quarter_mean: f64,
    /// Mean of F_αα over the final quarter of the run.
    pub qfi_final_quarter_mean: f64,
    /// Largest F_αα sample and the time it occurs at.
    pub qfi_max: f64,
    pub qfi_max_time: f64,
    /// Sign changes of dF/dt over the whole run (threshold 1e-3 × max).
    pub flow_sign_changes: usize,
    /// Sign changes of dF/dt after the first F maximum.
    pub flow_sign_changes_after_max: usize,
    /// Largest bond dimension over the three trajectories.
    pub max_bond: usize,
    /// Total discarded weight of the centre trajectory.
    pub total_discarded: f64,
    /// True when any trajectory saturated the bond cap while discarding
    /// weight above the resolution threshold.
    pub under_resolved: bool,
}

/// Output locations of one dynamics run.
pub struct DynamicsArtifacts {
    pub csv_path: PathBuf,
    pub report_path: PathBuf,
    pub report: DynamicsReport,
}

/// Column order of the dynamics CSV. Documented in
/// docs/output-formats.md.
pub const DYNAMICS_HEADER: &str =
    "run_id,step,t,sz,sx,entropy,purity,f_alpha_alpha,qfi_flow,discarded_weight,max_bond,saturated,status";

struct Sample {
    step: usize,
    rho: QubitDensityMatrix,
    max_bond: usize,
}

/// Evolve |↓⟩ ⊗ |vac⟩ under the chain Hamiltonian at coupling `alpha`,
/// sampling the reduced spin state every `stride` steps.
fn evolve_trajectory(
    cfg: &RunConfig,
    alpha: f64,
    dims: &[usize],
    n_steps: usize,
    stride: usize,
) -> Result<(Vec<Sample>, WiiRunReport)> {
    let params = ModelParams {
        delta: cfg.model.delta,
        h: cfg.model.h,
        alpha,
        beta: cfg.model.beta,
        s: cfg.model.s,
        omega_c: cfg.model.omega_c,
        n_modes: cfg.model.n_modes,
    };
    params.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let bath = discretize_bath(&params, cfg.bath.scheme).map_err(|e| anyhow::anyhow!("{e}"))?;
    let layout = ChainLayout::from_bath(&bath);
    let mpo: MatrixProductOperator = build_hamiltonian_mpo(&params, &layout, dims)?;

    let spin_down = Array1::from(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
    let psi0 = MatrixProductState::spin_boson_product(&spin_down, &dims[1..])?;

    let policy = TruncationPolicy::new(cfg.solver.evolution_cutoff, cfg.solver.max_bond)?;
    let mut samples: Vec<Sample> = Vec::with_capacity(n_steps / stride + 2);
    let (_, report) = wii_evolve_observe(&psi0, &mpo, cfg.solver.dt, n_steps, &policy, stride, |step, _t, mps| {
        let rho = mps.reduced_density_matrix()?;
        samples.push(Sample { step, rho, max_bond: mps.max_bond_dim() });
        Ok(())
    })?;
    Ok((samples, report))
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn final_quarter_mean(values: &[f64]) -> f64 {
    let start = values.len().saturating_sub((values.len() / 4).max(1));
    mean(&values[start..])
}

fn freq_summary(series: &TimeSeries) -> Result<FreqSummary> {
    let (_, dom) = fourier_spectrum(series, SpectralWindow::Hann, true)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(FreqSummary {
        cyclic: dom.cyclic,
        angular: dom.angular,
        magnitude: dom.magnitude,
        bin_width: dom.bin_width,
    })
}

/// Run the dynamics command: three trajectories, the QFI series, and the
/// spectral report written next to the CSV.
pub fn run_dynamics(cfg: &RunConfig) -> Result<DynamicsArtifacts> {
    let run_id = cfg.run_id();
    std::fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let paths = RunPaths::new(&cfg.output.dir, &run_id);
    write_atomic(&paths.config_echo(), serde_json::to_string_pretty(cfg)?.as_bytes())?;

    let alpha = cfg.model.alpha;
    let fd = cfg.solver.fd_delta_alpha;
    anyhow::ensure!(alpha - fd >= 0.0, "alpha - fd_delta_alpha must stay non-negative");
    let d = cfg.solver.boson_dim_at(alpha);
    let dims = cfg.solver.local_dims(cfg.model.n_modes, d);
    let stride = cfg.solver.sample_stride;
    let raw_steps = (cfg.solver.t_final / cfg.solver.dt).round() as usize;
    let n_steps = raw_steps.div_ceil(stride) * stride;

    eprintln!("run {run_id}: dynamics at alpha={alpha}, {n_steps} steps, 3 trajectories");
    let (centre, report_c) = evolve_trajectory(cfg, alpha, &dims, n_steps, stride)?;
    let (minus, report_m) = evolve_trajectory(cfg, alpha - fd, &dims, n_steps, stride)?;
    let (plus, report_p) = evolve_trajectory(cfg, alpha + fd, &dims, n_steps, stride)?;
    anyhow::ensure!(
        centre.len() == minus.len() && centre.len() == plus.len(),
        "trajectory sample grids diverged"
    );

    // Per-sample cumulative discarded weight of the centre trajectory.
    let mut cum = vec![0.0f64; n_steps + 1];
    for rec in &report_c.records {
        cum[rec.step] = rec.discarded_weight;
    }
    for k in 1..cum.len() {
        cum[k] += cum[k - 1];
    }
    let saturated_by: Vec<bool> = {
        let mut flags = vec![false; n_steps + 1];
        for rec in &report_c.records {
            flags[rec.step] = rec.saturated;
        }
        for k in 1..flags.len() {
            flags[k] |= flags[k - 1];
        }
        flags
    };

    let sample_dt = stride as f64 * cfg.solver.dt;
    let mut sz = Vec::with_capacity(centre.len());
    let mut sx = Vec::with_capacity(centre.len());
    let mut entropy = Vec::with_capacity(centre.len());
    let mut purity = Vec::with_capacity(centre.len());
    let mut qfi = Vec::with_capacity(centre.len());
    for ((c, m), p) in centre.iter().zip(&minus).zip(&plus) {
        let (x, _, z) = spin_expectations(&c.rho);
        sz.push(z);
        sx.push(x);
        entropy.push(von_neumann_entropy(&c.rho));
        purity.push(c.rho.purity());
        let dmat = (p.rho.to_sigma_z_basis() - m.rho.to_sigma_z_basis()) / C64::new(2.0 * fd, 0.0);
        let deriv =
            ParamDerivative::new(ParamLabel::Alpha, dmat, fd, DerivativeScheme::Central, Basis::SigmaZ)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
        let f = qfim_qubit_closed(&c.rho, &deriv, &deriv, QFIM_EPS)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        qfi.push(f.value);
    }

    let qfi_series = TimeSeries::new(0.0, sample_dt, qfi.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let sz_series = TimeSeries::new(0.0, sample_dt, sz.clone()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let flow = qfi_flow(&qfi_series).map_err(|e| anyhow::anyhow!("{e}"))?;

    let (max_idx, qfi_max) = qfi
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let flow_mag = flow.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let flow_threshold = 1e-3 * flow_mag;
    let sz_frequency = freq_summary(&sz_series)?;
    let qfi_frequency = freq_summary(&qfi_series)?;

    let report = DynamicsReport {
        run_id: run_id.clone(),
        alpha,
        h: cfg.model.h,
        delta: cfg.model.delta,
        delta_r: if alpha < 1.0 {
            cfg.model.delta * (cfg.model.delta / cfg.model.omega_c).powf(alpha / (1.0 - alpha))
        } else {
            f64::NAN
        },
        fd_delta_alpha: fd,
        dt: cfg.solver.dt,
        n_steps,
        sample_dt,
        n_samples: centre.len(),
        angular_ratio: qfi_frequency.angular / sz_frequency.angular,
        sz_frequency,
        qfi_frequency,
        sz_final_quarter_mean: final_quarter_mean(&sz),
        qfi_final_quarter_mean: final_quarter_mean(&qfi),
        qfi_max,
        qfi_max_time: max_idx as f64 * sample_dt,
        flow_sign_changes: count_sign_changes(&flow.values, flow_threshold),
        flow_sign_changes_after_max: count_sign_changes(&flow.values[max_idx..], flow_threshold),
        max_bond: report_c.max_bond.max(report_m.max_bond).max(report_p.max_bond),
        total_discarded: report_c.total_discarded,
        under_resolved: report_c.under_resolved || report_m.under_resolved || report_p.under_resolved,
    };

    let mut csv = String::from(DYNAMICS_HEADER);
    csv.push('\n');
    for (k, c) in centre.iter().enumerate() {
        let t = c.step as f64 * cfg.solver.dt;
        csv.push_str(&format!(
            "{run_id},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},ok\n",
            c.step,
            t,
            sz[k],
            sx[k],
            entropy[k],
            purity[k],
            qfi[k],
            flow.values[k],
            cum[c.step],
            c.max_bond,
            saturated_by[c.step] as u8,
        ));
    }
    let csv_path = paths.csv("dynamics");
    write_atomic(&csv_path, csv.as_bytes())?;
    let report_path = paths.report("dynamics");
    write_atomic(&report_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    eprintln!("run {run_id}: wrote {} and {}", csv_path.display(), report_path.display());
    Ok(DynamicsArtifacts { csv_path, report_path, report })
}
