//! Built-in oracle suite: fast consistency checks that exercise every
//! numerical route against an independent reference.
//!
//! Five checks run in sequence, each printing one PASS/FAIL line with its
//! measured worst case:
//!
//! 1. QFIM route equivalence on random full-rank qubit states: the
//!    spectral sum, the closed-form qubit identity, and the symmetric
//!    logarithmic derivative route must agree to 1e-10 relative.
//! 2. Fidelity link: 8(1 - f)/δ² against F_μμ on an analytic rotation
//!    family, 1e-3 relative at δ = 1e-3.
//! 3. Ground-state cross-check: variational tensor-network energy against
//!    dense diagonalization on a small coupled instance, 1e-8 relative.
//! 4. Dynamics cross-check: second-order chain evolution against dense
//!    unitary evolution, ⟨σ_z⟩ within 1e-4 over Δt = 5.
//! 5. Entropy bounds: reduced spin entropies stay inside [0, ln 2] and the
//!    maximally mixed state hits ln 2 exactly.

use anyhow::Result;
use ndarray::{array, Array1, Array2};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qfim_sbm::analysis::von_neumann_entropy;
use qfim_sbm::ed::{
    build_dense_chain_hamiltonian, ed_evolve, ed_ground_state, sigma_z, DenseState,
    FockTruncation,
};
use qfim_sbm::model::{discretize_bath, BathScheme, ModelParams};
use qfim_sbm::mps::{
    build_hamiltonian_mpo, dmrg_ground_state, wii_evolve_observe, ChainLayout, DmrgOptions,
    MatrixProductState, TruncationPolicy,
};
use qfim_sbm::qfim::{
    qfi_from_fidelity, qfim_from_sld, qfim_qubit_closed, qfim_spectral, sld, Basis,
    DerivativeScheme, ParamDerivative, ParamLabel, QubitDensityMatrix,
};

use crate::config::RunConfig;

const EPS: f64 = 1e-12;

/// One check's outcome.
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn report(results: &mut Vec<CheckResult>, name: &'static str, passed: bool, detail: String) {
    println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    results.push(CheckResult { name, passed, detail });
}

/// Random traceless Hermitian 2x2 matrix with entries of order one.
fn random_traceless_hermitian(rng: &mut ChaCha8Rng) -> Array2<C64> {
    let a: f64 = rng.random_range(-1.0..1.0);
    let b: f64 = rng.random_range(-1.0..1.0);
    let c: f64 = rng.random_range(-1.0..1.0);
    // a σ_x + b σ_y + c σ_z.
    array![
        [C64::new(c, 0.0), C64::new(a, -b)],
        [C64::new(a, b), C64::new(-c, 0.0)]
    ]
}

fn routes_check(rng: &mut ChaCha8Rng, n_states: usize, results: &mut Vec<CheckResult>) {
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for _ in 0..n_states {
        // Uniform direction, radius in [0.02, 0.98]: full rank, never
        // degenerate enough to starve the spectral route.
        let r: f64 = rng.random_range(0.02..0.98);
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).sqrt();
        let rho = QubitDensityMatrix::from_bloch(
            r * s * phi.cos(),
            r * s * phi.sin(),
            r * z,
            Basis::SigmaZ,
        )
        .expect("bloch vector inside the ball");
        let d_mu = ParamDerivative::new(
            ParamLabel::Alpha,
            random_traceless_hermitian(rng),
            0.0,
            DerivativeScheme::Analytic,
            Basis::SigmaZ,
        )
        .expect("valid derivative");
        let d_nu = ParamDerivative::new(
            ParamLabel::Delta,
            random_traceless_hermitian(rng),
            0.0,
            DerivativeScheme::Analytic,
            Basis::SigmaZ,
        )
        .expect("valid derivative");
        for (da, db) in [(&d_mu, &d_mu), (&d_mu, &d_nu)] {
            let spectral = qfim_spectral(&rho, da, db, EPS).unwrap().value;
            let closed = qfim_qubit_closed(&rho, da, db, EPS).unwrap().value;
            let la = sld(&rho, da, EPS).unwrap();
            let lb = sld(&rho, db, EPS).unwrap();
            let via_sld = qfim_from_sld(&rho, &la, &lb).unwrap().value;
            let scale = spectral.abs().max(closed.abs()).max(via_sld.abs()).max(1e-300);
            let dev = (spectral - closed)
                .abs()
                .max((spectral - via_sld).abs())
                .max((closed - via_sld).abs())
                / scale;
            worst = worst.max(dev);
            if dev >= 1e-10 {
                failures += 1;
            }
        }
    }
    report(
        results,
        "qfim-route-equivalence",
        failures == 0,
        format!("{n_states} states, worst relative spread {worst:.3e} (tolerance 1e-10)"),
    );
}

/// ρ(x): Bloch vector (r cos x, r sin x, z0), full rank, with analytic
/// derivative ∂_xρ = (r/2)(-sin x σ_x + cos x σ_y).
fn rotation_family(x: f64) -> QubitDensityMatrix {
    let (r, z0) = (0.6, 0.3);
    QubitDensityMatrix::from_bloch(r * x.cos(), r * x.sin(), z0, Basis::SigmaZ).unwrap()
}

fn fidelity_link_check(results: &mut Vec<CheckResult>) {
    let (r, _z0) = (0.6, 0.3);
    let delta = 1e-3;
    let mut worst = 0.0f64;
    for &x in &[0.0f64, 0.4, 1.1, 2.3, 4.0] {
        let d = array![
            [C64::new(0.0, 0.0), C64::new(-x.sin(), -x.cos()) * C64::new(0.5 * r, 0.0)],
            [C64::new(-x.sin(), x.cos()) * C64::new(0.5 * r, 0.0), C64::new(0.0, 0.0)]
        ];
        let deriv =
            ParamDerivative::new(ParamLabel::H, d, 0.0, DerivativeScheme::Analytic, Basis::SigmaZ)
                .unwrap();
        let exact = qfim_qubit_closed(&rotation_family(x), &deriv, &deriv, EPS).unwrap().value;
        let approx =
            qfi_from_fidelity(&rotation_family(x), &rotation_family(x + delta), delta).unwrap();
        worst = worst.max((approx - exact).abs() / exact.abs());
    }
    report(
        results,
        "fidelity-link",
        worst < 1e-3,
        format!("worst relative deviation {worst:.3e} at delta {delta:.0e} (tolerance 1e-3)"),
    );
}

fn small_instance() -> (ModelParams, ChainLayout, Vec<usize>, FockTruncation, Array2<C64>) {
    let params = ModelParams::ohmic(1.0, 0.2, 0.1, 3).unwrap();
    let bath = discretize_bath(&params, BathScheme::Linear).unwrap();
    let layout = ChainLayout::from_bath(&bath);
    let (chain, t0z, t0x) = match &layout {
        ChainLayout::Shared { chain, t0z, t0x } => (chain.clone(), *t0z, *t0x),
        _ => unreachable!("single-channel bath reduces to a shared chain"),
    };
    let trunc = FockTruncation::new(4, 3).unwrap();
    let dense = build_dense_chain_hamiltonian(&params, &chain, t0z, t0x, trunc).unwrap();
    let dims: Vec<usize> = std::iter::once(2).chain(std::iter::repeat_n(4, 3)).collect();
    (params, layout, dims, trunc, dense)
}

fn ground_state_check(results: &mut Vec<CheckResult>) {
    let (params, layout, dims, trunc, dense) = small_instance();
    let (e_ed, _) = ed_ground_state(&dense, trunc).unwrap();
    let mpo = build_hamiltonian_mpo(&params, &layout, &dims).unwrap();
    let (e_dmrg, _, rep) =
        dmrg_ground_state(&mpo, &TruncationPolicy::dmrg(), &DmrgOptions::default()).unwrap();
    let rel = (e_dmrg - e_ed).abs() / e_ed.abs();
    report(
        results,
        "ground-state-vs-dense",
        rel < 1e-8 && rep.converged,
        format!(
            "relative energy deviation {rel:.3e} over {} sweeps (tolerance 1e-8)",
            rep.sweeps
        ),
    );
}

fn dynamics_check(results: &mut Vec<CheckResult>) {
    let params = ModelParams::ohmic(1.0, 0.2, 0.0, 2).unwrap();
    let bath = discretize_bath(&params, BathScheme::Linear).unwrap();
    let layout = ChainLayout::from_bath(&bath);
    let (chain, t0z, t0x) = match &layout {
        ChainLayout::Shared { chain, t0z, t0x } => (chain.clone(), *t0z, *t0x),
        _ => unreachable!(),
    };
    let trunc = FockTruncation::new(4, 2).unwrap();
    let dense = build_dense_chain_hamiltonian(&params, &chain, t0z, t0x, trunc).unwrap();

    let dt = 0.0025;
    let steps = 2000;
    let stride = 40;
    let psi_ed = DenseState::spin_down_vacuum(trunc);
    let traj = ed_evolve(&dense, &psi_ed, dt * stride as f64, steps / stride).unwrap();
    let sz_full = sigma_z_full(trunc);
    let reference: Vec<f64> =
        traj.iter().map(|s| s.expectation(&sz_full).unwrap().re).collect();

    let spin_down = Array1::from(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
    let mps0 = MatrixProductState::spin_boson_product(&spin_down, &[4, 4]).unwrap();
    let mpo = build_hamiltonian_mpo(&params, &layout, &[2, 4, 4]).unwrap();
    let policy = TruncationPolicy::new(1e-12, 64).unwrap();
    let mut measured = Vec::new();
    let sz = sigma_z();
    wii_evolve_observe(&mps0, &mpo, dt, steps, &policy, stride, |_, _, mps| {
        measured.push(mps.expectation_one_site(0, &sz.view())?.re);
        Ok(())
    })
    .unwrap();

    let worst = reference
        .iter()
        .zip(&measured)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    report(
        results,
        "dynamics-vs-dense",
        worst < 1e-4 && reference.len() == measured.len(),
        format!("worst sigma_z deviation {worst:.3e} over t in [0, 5] (tolerance 1e-4)"),
    );
}

/// σ_z ⊗ 1 on the full product space.
fn sigma_z_full(trunc: FockTruncation) -> Array2<C64> {
    let dim = trunc.total_dim();
    let mut m = Array2::<C64>::zeros((dim, dim));
    for i in 0..dim {
        m[[i, i]] = C64::new(if i < dim / 2 { 1.0 } else { -1.0 }, 0.0);
    }
    m
}

fn entropy_check(rng: &mut ChaCha8Rng, results: &mut Vec<CheckResult>) {
    let ln2 = std::f64::consts::LN_2;
    let mut ok = true;
    let mut worst_violation = 0.0f64;
    for _ in 0..200 {
        let r: f64 = rng.random_range(0.0..1.0);
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).sqrt();
        let rho = QubitDensityMatrix::from_bloch(
            r * s * phi.cos(),
            r * s * phi.sin(),
            r * z,
            Basis::SigmaZ,
        )
        .unwrap();
        let ent = von_neumann_entropy(&rho);
        if ent < 0.0 || ent > ln2 + 1e-12 {
            ok = false;
            worst_violation = worst_violation.max((-ent).max(ent - ln2));
        }
    }
    let mixed = QubitDensityMatrix::from_bloch(0.0, 0.0, 0.0, Basis::SigmaZ).unwrap();
    let at_top = von_neumann_entropy(&mixed);
    let top_exact = (at_top - ln2).abs() < 1e-14;
    report(
        results,
        "entropy-bounds",
        ok && top_exact,
        format!(
            "200 random states in [0, ln 2], maximally mixed state at ln 2 within {:.1e}",
            (at_top - ln2).abs()
        ),
    );
    if !ok {
        eprintln!("  entropy bound violated by {worst_violation:.3e}");
    }
}

/// Run the whole suite; returns true when every check passed.
pub fn run_validate(cfg: &RunConfig) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut results = Vec::new();
    let n_states = cfg.validate.clone().unwrap_or_default().n_random_states;
    routes_check(&mut rng, n_states, &mut results);
    fidelity_link_check(&mut results);
    ground_state_check(&mut results);
    dynamics_check(&mut results);
    entropy_check(&mut rng, &mut results);
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} checks passed", results.len());
    Ok(passed == results.len())
}
