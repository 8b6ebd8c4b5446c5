//! Ground-state sweep: one CSV row per (α, h, β) grid point.
//!
//! Each (h, β) pair forms a warm-start chain scanned in ascending α: the
//! converged state of one point seeds the next, and is checkpointed to disk
//! after every point so a killed sweep resumes from the exact same seed the
//! uninterrupted run would have used. Per point the sweep records the DMRG
//! energy and convergence gates, the reduced spin state, its entropy and
//! Bloch components, and the QFIM elements F_αα, F_αΔ, F_ΔΔ from central
//! finite differences of the reduced state (extra DMRG solves at shifted
//! parameters, warm-started from the point's own ground state).
//!
//! A failed point never aborts the sweep: its row carries the error in the
//! `status` column and the chain continues from the last good seed.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicIsize, Ordering};
use std::sync::mpsc;
use std::sync::Mutex;

use anyhow::{Context, Result};
use qfim_sbm::analysis::{spin_expectations, von_neumann_entropy};
use qfim_sbm::model::{discretize_bath, ModelParams};
use qfim_sbm::mps::{
    build_hamiltonian_mpo, dmrg_ground_state, dmrg_ground_state_with_init, load_mps, save_mps,
    ChainLayout, DmrgOptions, DmrgReport, MatrixProductState, TruncationPolicy,
};
use qfim_sbm::qfim::{finite_diff_derivative, qfim_qubit_closed, ParamLabel, QubitDensityMatrix};

use crate::config::{ChainSpec, RunConfig};
use crate::journal::{
    assemble_csv, completed_prefix, load_journal, rewrite_journal, write_atomic, JournalWriter,
    PointRecord, RunPaths,
};

/// Regularization threshold for near-singular reduced states inside the
/// QFIM formulas.
const QFIM_EPS: f64 = 1e-12;

/// Column order of the static-sweep CSV. Units and semantics are
/// documented in docs/output-formats.md.
pub const STATIC_HEADER: &str = "run_id,chain,point,alpha,h,beta,delta,n_modes,boson_dim,max_bond,energy,energy_variance,dmrg_converged,dmrg_sweeps,max_discarded_weight,sx,sz,entropy,f_alpha_alpha,f_alpha_delta,f_delta_delta,fd_err_alpha,d_gate_rel,d_gate_ok,status";

/// Outcome of a whole sweep invocation.
#[derive(Debug, PartialEq, Eq)]
pub enum SweepOutcome {
    /// All points done; the final CSV was written.
    Complete,
    /// Stopped early by the point budget; journal and checkpoints are on
    /// disk, the final CSV is not.
    Stopped,
}

/// Warm-start slot: the last converged state of a chain at some local-
/// dimension profile.
struct WarmSlot {
    dims: Vec<usize>,
    state: MatrixProductState,
}

/// Everything measured at one grid point.
struct PointResult {
    energy: f64,
    variance: f64,
    report: DmrgReport,
    sx: f64,
    sz: f64,
    entropy: f64,
    f_aa: f64,
    f_ad: f64,
    f_dd: f64,
    fd_err_alpha: f64,
    gate_rel: f64,
    gate_ok: Option<bool>,
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

/// One DMRG solve at explicit coordinates, seeded from `init` when its
/// local dimensions match. Returns the report, the reduced spin state, and
/// the converged matrix product state.
#[allow(clippy::too_many_arguments)]
fn solve_ground_state(
    cfg: &RunConfig,
    alpha: f64,
    h: f64,
    beta: f64,
    delta: f64,
    dims: &[usize],
    init: Option<&MatrixProductState>,
    want_variance: bool,
) -> Result<(f64, f64, DmrgReport, QubitDensityMatrix, MatrixProductState)> {
    let params = ModelParams {
        delta,
        h,
        alpha,
        beta,
        s: cfg.model.s,
        omega_c: cfg.model.omega_c,
        n_modes: cfg.model.n_modes,
    };
    params.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    let bath = discretize_bath(&params, cfg.bath.scheme).map_err(|e| anyhow::anyhow!("{e}"))?;
    let layout = ChainLayout::from_bath(&bath);
    let mpo = build_hamiltonian_mpo(&params, &layout, dims)?;
    let policy = TruncationPolicy::new(cfg.solver.svd_cutoff, cfg.solver.max_bond)?;
    let opts = DmrgOptions {
        max_sweeps: cfg.solver.max_sweeps,
        energy_tol: cfg.solver.energy_tol,
        compute_variance: want_variance && cfg.solver.compute_variance,
        ..DmrgOptions::default()
    };
    let (energy, mut gs, report) = match init {
        Some(seed) if seed.local_dims() == dims => {
            dmrg_ground_state_with_init(&mpo, &policy, &opts, seed)?
        }
        _ => dmrg_ground_state(&mpo, &policy, &opts)?,
    };
    let rho = gs.reduced_density_matrix()?;
    let variance = report.variance.unwrap_or(f64::NAN);
    Ok((energy, variance, report, rho, gs))
}

/// F_αα (and optionally the cross/Δ elements) at one point and one local-
/// dimension profile. Derivative solves warm-start from `anchor`.
#[allow(clippy::too_many_arguments)]
fn qfim_at_point(
    cfg: &RunConfig,
    alpha: f64,
    h: f64,
    beta: f64,
    dims: &[usize],
    anchor: &MatrixProductState,
    rho: &QubitDensityMatrix,
    full: bool,
) -> Result<(f64, f64, f64, f64)> {
    let delta0 = cfg.model.delta;
    let scheme_err = |e: qfim_sbm::qfim::QfimError| anyhow::anyhow!("{e}");

    let warm = RefCell::new(anchor.clone());
    let alpha_provider = |x: f64| -> Result<QubitDensityMatrix> {
        let seed = warm.borrow().clone();
        let (_, _, _, rho, gs) =
            solve_ground_state(cfg, x, h, beta, delta0, dims, Some(&seed), false)?;
        *warm.borrow_mut() = gs;
        Ok(rho)
    };
    let d_alpha = finite_diff_derivative(
        alpha_provider,
        ParamLabel::Alpha,
        alpha,
        cfg.solver.fd_delta_alpha,
        cfg.solver.richardson,
    )
    .map_err(scheme_err)?;
    let f_aa = qfim_qubit_closed(rho, &d_alpha, &d_alpha, QFIM_EPS).map_err(scheme_err)?.value;
    let fd_err = d_alpha.error_estimate.unwrap_or(f64::NAN);
    if !full {
        return Ok((f_aa, f64::NAN, f64::NAN, fd_err));
    }

    let warm_d = RefCell::new(anchor.clone());
    let delta_provider = |x: f64| -> Result<QubitDensityMatrix> {
        let seed = warm_d.borrow().clone();
        let (_, _, _, rho, gs) =
            solve_ground_state(cfg, alpha, h, beta, x, dims, Some(&seed), false)?;
        *warm_d.borrow_mut() = gs;
        Ok(rho)
    };
    let d_delta = finite_diff_derivative(
        delta_provider,
        ParamLabel::Delta,
        delta0,
        cfg.solver.fd_delta_delta * delta0,
        cfg.solver.richardson,
    )
    .map_err(scheme_err)?;
    let f_ad = qfim_qubit_closed(rho, &d_alpha, &d_delta, QFIM_EPS).map_err(scheme_err)?.value;
    let f_dd = qfim_qubit_closed(rho, &d_delta, &d_delta, QFIM_EPS).map_err(scheme_err)?.value;
    Ok((f_aa, f_ad, f_dd, fd_err))
}

/// Full measurement of one grid point, updating the chain's warm slots.
fn measure_point(
    cfg: &RunConfig,
    spec: &ChainSpec,
    idx: usize,
    warm_main: &mut Option<WarmSlot>,
    warm_gate: &mut Option<WarmSlot>,
) -> Result<PointResult> {
    let alpha = spec.alphas[idx];
    let (h, beta) = (spec.h, spec.beta);
    let d = cfg.solver.boson_dim_at(alpha);
    let dims = cfg.solver.local_dims(cfg.model.n_modes, d);

    let seed = warm_main.as_ref().filter(|w| w.dims == dims).map(|w| &w.state);
    let (energy, variance, report, rho, gs) =
        solve_ground_state(cfg, alpha, h, beta, cfg.model.delta, &dims, seed, true)?;
    let (f_aa, f_ad, f_dd, fd_err) = qfim_at_point(cfg, alpha, h, beta, &dims, &gs, &rho, true)?;
    let (sx, _sy, sz) = spin_expectations(&rho);
    let entropy = von_neumann_entropy(&rho);
    *warm_main = Some(WarmSlot { dims: dims.clone(), state: gs });

    let (gate_rel, gate_ok) = if cfg.solver.d_gate {
        let d4 = d + cfg.solver.d_gate_step;
        let dims4 = cfg.solver.local_dims(cfg.model.n_modes, d4);
        let seed4 = warm_gate.as_ref().filter(|w| w.dims == dims4).map(|w| &w.state);
        let (_, _, _, rho4, gs4) =
            solve_ground_state(cfg, alpha, h, beta, cfg.model.delta, &dims4, seed4, false)?;
        let (f_aa4, _, _, _) = qfim_at_point(cfg, alpha, h, beta, &dims4, &gs4, &rho4, false)?;
        *warm_gate = Some(WarmSlot { dims: dims4, state: gs4 });
        let rel = (f_aa4 - f_aa).abs() / f_aa.abs().max(1e-300);
        (rel, Some(rel < cfg.solver.d_gate_rel))
    } else {
        (f64::NAN, None)
    };

    Ok(PointResult {
        energy,
        variance,
        report,
        sx,
        sz,
        entropy,
        f_aa,
        f_ad,
        f_dd,
        fd_err_alpha: fd_err,
        gate_rel,
        gate_ok,
    })
}

fn format_row(
    run_id: &str,
    cfg: &RunConfig,
    spec: &ChainSpec,
    idx: usize,
    outcome: &Result<PointResult>,
) -> String {
    let alpha = spec.alphas[idx];
    let d = cfg.solver.boson_dim_at(alpha);
    let mut cells: Vec<String> = vec![
        run_id.to_string(),
        spec.chain.to_string(),
        idx.to_string(),
        fmt(alpha),
        fmt(spec.h),
        fmt(spec.beta),
        fmt(cfg.model.delta),
        cfg.model.n_modes.to_string(),
        d.to_string(),
        cfg.solver.max_bond.to_string(),
    ];
    match outcome {
        Ok(r) => {
            cells.extend([
                fmt(r.energy),
                fmt(r.variance),
                (r.report.converged as u8).to_string(),
                r.report.sweeps.to_string(),
                fmt(r.report.max_discarded_weight),
                fmt(r.sx),
                fmt(r.sz),
                fmt(r.entropy),
                fmt(r.f_aa),
                fmt(r.f_ad),
                fmt(r.f_dd),
                fmt(r.fd_err_alpha),
                fmt(r.gate_rel),
                r.gate_ok.map(|b| (b as u8).to_string()).unwrap_or_default(),
                "ok".to_string(),
            ]);
        }
        Err(e) => {
            cells.extend(std::iter::repeat_n("nan".to_string(), 13));
            cells.push(String::new());
            let msg = e.to_string().replace([',', '\n'], ";");
            cells.push(msg);
        }
    }
    cells.join(",")
}

/// Restore a chain's warm slot from its checkpoint, if consistent with
/// this run and chain. Returns the slot and the point index it seeds.
fn load_slot(paths: &RunPaths, chain: usize, tag: &str) -> Option<(WarmSlot, usize)> {
    let path = paths.checkpoint(chain, tag);
    let (state, meta) = load_mps(&path).ok()?;
    if meta.get("run_id") != Some(&paths.run_id) {
        return None;
    }
    if meta.get("chain").and_then(|s| s.parse::<usize>().ok()) != Some(chain) {
        return None;
    }
    let point: usize = meta.get("point")?.parse().ok()?;
    let dims = state.local_dims().to_vec();
    Some((WarmSlot { dims, state }, point))
}

fn save_slot(
    paths: &RunPaths,
    chain: usize,
    tag: &str,
    point: usize,
    slot: &Option<WarmSlot>,
) -> Result<()> {
    let Some(slot) = slot else { return Ok(()) };
    let mut meta = BTreeMap::new();
    meta.insert("run_id".to_string(), paths.run_id.clone());
    meta.insert("chain".to_string(), chain.to_string());
    meta.insert("point".to_string(), point.to_string());
    let path = paths.checkpoint(chain, tag);
    let tmp = path.with_extension("qsbm.tmp");
    save_mps(&tmp, &slot.state, &meta)?;
    std::fs::rename(&tmp, &path).context("renaming checkpoint")?;
    Ok(())
}

/// Run the sweep. `workers` bounds the number of chains in flight;
/// `max_points` (if set) stops cleanly after that many newly computed
/// points across all chains, leaving the run resumable.
pub fn run_static_sweep(
    cfg: &RunConfig,
    resume: bool,
    workers: usize,
    max_points: Option<usize>,
) -> Result<SweepOutcome> {
    let run_id = cfg.run_id();
    std::fs::create_dir_all(&cfg.output.dir)
        .with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    let paths = RunPaths::new(&cfg.output.dir, &run_id);
    write_atomic(&paths.config_echo(), serde_json::to_string_pretty(cfg)?.as_bytes())?;

    let prior = if resume {
        let records = load_journal(&paths.journal())?;
        rewrite_journal(&paths.journal(), &records)?;
        records
    } else {
        Vec::new()
    };
    let chains = cfg.static_chains();
    let total: usize = chains.iter().map(|c| c.alphas.len()).sum();

    // Per chain, decide the first point to (re)compute. A warm restart at
    // point k+1 needs every seed the uninterrupted run would have had at
    // that point: the main state after point k, and the coarse-gate state
    // after point k when the gate is on. The journal must also contain the
    // contiguous prefix 0..=k (a kill between journal flush and checkpoint
    // save leaves the checkpoint one point behind, which simply recomputes
    // that point with the identical seed). Anything inconsistent restarts
    // the chain cold; recomputed rows are byte-identical by determinism.
    let mut jobs = Vec::new();
    let mut done_already = 0usize;
    for spec in &chains {
        let prefix = completed_prefix(&prior, spec.chain);
        let main = load_slot(&paths, spec.chain, "main");
        let gate = if cfg.solver.d_gate { load_slot(&paths, spec.chain, "gate") } else { None };
        let seed_point = match (&main, &gate) {
            (Some((_, pm)), Some((_, pg))) if pm == pg => Some(*pm),
            (Some((_, pm)), None) if !cfg.solver.d_gate => Some(*pm),
            _ => None,
        };
        let start = match seed_point {
            Some(p) if prefix >= p + 1 => p + 1,
            _ => 0,
        };
        let usable = start > 0;
        done_already += start;
        jobs.push(ChainJob {
            spec: spec.clone(),
            start,
            warm_main: if usable { main.map(|(s, _)| s) } else { None },
            warm_gate: if usable { gate.map(|(s, _)| s) } else { None },
        });
    }
    eprintln!(
        "run {run_id}: {total} points over {} chains, {done_already} already complete",
        chains.len()
    );

    let budget = AtomicIsize::new(match max_points {
        Some(k) => k as isize,
        None => isize::MAX,
    });
    let queue: Mutex<Vec<ChainJob>> = Mutex::new(jobs);
    let (tx, rx) = mpsc::channel::<(PointRecord, mpsc::Sender<()>)>();

    let mut journal = JournalWriter::open(&paths.journal(), resume)?;
    let n_workers = workers.max(1);
    let stopped = std::thread::scope(|scope| -> Result<bool> {
        for _ in 0..n_workers {
            let tx = tx.clone();
            let queue = &queue;
            let budget = &budget;
            let cfg_ref = cfg;
            let paths_ref = &paths;
            let run_id_ref = run_id.as_str();
            scope.spawn(move || {
                loop {
                    let Some(mut job) = queue.lock().unwrap().pop() else { break };
                    let mut warm_main = job.warm_main.take();
                    let mut warm_gate = job.warm_gate.take();
                    for idx in job.start..job.spec.alphas.len() {
                        if budget.fetch_sub(1, Ordering::SeqCst) <= 0 {
                            return;
                        }
                        let outcome =
                            measure_point(cfg_ref, &job.spec, idx, &mut warm_main, &mut warm_gate);
                        let ok = outcome.is_ok();
                        let row = format_row(run_id_ref, cfg_ref, &job.spec, idx, &outcome);
                        let rec = PointRecord { chain: job.spec.chain, point: idx, row };
                        let (ack_tx, ack_rx) = mpsc::channel();
                        if tx.send((rec, ack_tx)).is_err() {
                            return;
                        }
                        if ack_rx.recv().is_err() {
                            return;
                        }
                        if ok {
                            if save_slot(paths_ref, job.spec.chain, "main", idx, &warm_main)
                                .is_err()
                            {
                                eprintln!("warning: checkpoint save failed (chain {})", job.spec.chain);
                            }
                            if cfg_ref.solver.d_gate {
                                let _ = save_slot(paths_ref, job.spec.chain, "gate", idx, &warm_gate);
                            }
                        }
                    }
                }
            });
        }
        drop(tx);
        let mut newly = 0usize;
        for (rec, ack) in rx {
            journal.append(&rec)?;
            let _ = ack.send(());
            newly += 1;
            eprintln!("  chain {} point {} done ({} new)", rec.chain, rec.point, newly);
        }
        Ok(max_points.is_some_and(|k| newly >= k) && done_already + newly < total)
    })?;

    if stopped {
        eprintln!("run {run_id}: stopped at the point budget; resume with --resume");
        return Ok(SweepOutcome::Stopped);
    }

    let records = load_journal(&paths.journal())?;
    let have: usize = {
        let mut keys: Vec<(usize, usize)> = records.iter().map(|r| (r.chain, r.point)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    };
    if have < total {
        eprintln!("run {run_id}: {have}/{total} points present; not writing the CSV");
        return Ok(SweepOutcome::Stopped);
    }
    let csv = assemble_csv(STATIC_HEADER, &records);
    write_atomic(&paths.csv("static"), csv.as_bytes())?;
    eprintln!("run {run_id}: wrote {}", paths.csv("static").display());
    Ok(SweepOutcome::Complete)
}

struct ChainJob {
    spec: ChainSpec,
    start: usize,
    warm_main: Option<WarmSlot>,
    warm_gate: Option<WarmSlot>,
}
