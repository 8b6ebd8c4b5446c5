//! Oracle tests for bath discretization and the star-to-chain mapping.
//!
//! The oracles are independent of the implementation: closed-form integrals
//! of the spectral density, moment identities Σλ²ωᵏ computed in the star
//! basis, and tridiagonal matrix powers evaluated by direct matvec.

use proptest::prelude::*;
use qfim_sbm::model::{
    chain_map, discretize_bath, BathScheme, Channel, ModelParams,
};

fn ohmic(alpha: f64, n: usize) -> ModelParams {
    ModelParams::ohmic(1.0, alpha, 0.0, n).unwrap()
}

/// k-th coupling-weighted frequency moment Σ_i λ_i² ω_i^k of a star bath.
fn star_moment(freqs: &[f64], lambdas: &[f64], k: u32) -> f64 {
    freqs
        .iter()
        .zip(lambdas)
        .map(|(&w, &l)| l * l * w.powi(k as i32))
        .sum()
}

/// Same moment evaluated on the chain: edge² (e₀ᵀ Tᵏ e₀) with T the
/// tridiagonal chain matrix, via repeated matvec.
fn chain_moment(onsite: &[f64], hopping: &[f64], edge: f64, k: u32) -> f64 {
    let n = onsite.len();
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    for _ in 0..k {
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = onsite[i] * v[i];
            if i > 0 {
                w[i] += hopping[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                w[i] += hopping[i] * v[i + 1];
            }
        }
        v = w;
    }
    edge * edge * v[0]
}

#[test]
fn sum_rule_matches_closed_form_for_general_s() {
    // ∫_0^{ω_c} J = (α/2) ω_c² / (s+1) for J = (α/2) ω_c^{1-s} ω^s.
    for &s in &[0.5, 1.0, 1.5, 2.0] {
        let mut p = ohmic(0.3, 64);
        p.s = s;
        let exact = 0.5 * 0.3 * 100.0 / (s + 1.0);
        for scheme in [BathScheme::Linear, BathScheme::logarithmic()] {
            let bath = discretize_bath(&p, scheme).unwrap();
            let w = bath.coupling_weight(Channel::Z);
            assert!(
                (w - exact).abs() < 1e-12 * exact,
                "s={s}, scheme={scheme:?}: {w} vs {exact}"
            );
        }
    }
}

#[test]
fn moments_invariant_under_grid_doubling() {
    // The grid is a midpoint rule, second order in 1/N: doubling N changes
    // the order-0,1,2 moments of J by less than 1e-6 relative once N is at
    // converged production size, and the change shrinks by 4x per doubling.
    // The logarithmic grid has a much larger prefactor (its top interval is
    // wide) and crosses 1e-6 only around N ~ 8000.
    let diff = |scheme, n: usize, k: u32| {
        let b1 = discretize_bath(&ohmic(0.1, n), scheme).unwrap();
        let b2 = discretize_bath(&ohmic(0.1, 2 * n), scheme).unwrap();
        let m1 = star_moment(&b1.frequencies, &b1.couplings_z, k);
        let m2 = star_moment(&b2.frequencies, &b2.couplings_z, k);
        (m1 - m2).abs() / m1.abs()
    };
    for k in 0..=2u32 {
        assert!(diff(BathScheme::Linear, 1200, k) < 1e-6, "linear k={k}");
        assert!(diff(BathScheme::logarithmic(), 8000, k) < 1e-6, "log k={k}");
    }
    // Second-order refinement: quartering of the doubling difference.
    for k in 1..=2u32 {
        let d1 = diff(BathScheme::Linear, 300, k);
        let d2 = diff(BathScheme::Linear, 600, k);
        let rate = d1 / d2;
        assert!((rate - 4.0).abs() < 0.2, "k={k}: refinement rate {rate}");
    }
}

#[test]
fn chain_reproduces_all_gauss_exact_moments() {
    // Lanczos with exact arithmetic preserves Σλ²ωᵏ for k ≤ 2N-1. At N = 10
    // that is 20 moments; f64 round-off grows with ω_c^k so compare
    // relatively.
    let p = ohmic(0.1, 10);
    let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
    let chain = chain_map(&bath, Channel::Z);
    assert_eq!(chain.len(), 10);
    for k in 0..=(2 * 10 - 1) as u32 {
        let star = star_moment(&bath.frequencies, &bath.couplings_z, k);
        let on_chain = chain_moment(&chain.onsite, &chain.hopping, chain.edge_coupling, k);
        let rel = (star - on_chain).abs() / star.abs();
        assert!(rel < 1e-9, "k={k}: star {star:.6e}, chain {on_chain:.6e}, rel {rel:.3e}");
    }
}

#[test]
fn chain_is_unitarily_equivalent_to_star() {
    // Eigenvalues of the tridiagonal chain must be the bath frequencies.
    for &n in &[4usize, 40, 200] {
        let p = ohmic(0.25, n);
        let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
        let chain = chain_map(&bath, Channel::Z);
        assert_eq!(chain.len(), n);
        let eigs = chain.eigenvalues().unwrap();
        let mut freqs = bath.frequencies.clone();
        freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut worst = 0.0f64;
        for (e, w) in eigs.iter().zip(&freqs) {
            worst = worst.max((e - w).abs());
        }
        assert!(worst < 1e-8 * p.omega_c, "N={n}: max eigenvalue drift {worst:.3e}");
    }
}

#[test]
fn chain_coefficients_approach_wideband_asymptotics() {
    // Hard-cutoff Ohmic measure on [0, ω_c]: orthogonal-polynomial recursion
    // coefficients tend to the interval values ε_n → ω_c/2, t_n → ω_c/4.
    // For a discrete N-mode bath the hoppings track the continuum plateau in
    // the bulk and only sweep downward toward the far end of the chain.
    let p = ohmic(0.1, 600);
    let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
    let chain = chain_map(&bath, Channel::Z);
    for n in 10..300 {
        assert!(
            (chain.onsite[n] - 5.0).abs() < 0.05,
            "epsilon_{n} = {} far from omega_c/2",
            chain.onsite[n]
        );
    }
    for n in 10..60 {
        assert!(
            (chain.hopping[n] - 2.5).abs() < 0.025,
            "t_{n} = {} far from omega_c/4",
            chain.hopping[n]
        );
    }
}

#[test]
fn logarithmic_chain_matches_linear_continuum_moments() {
    // Two different grids of the same J: low moments must agree with each
    // other (both approximate the same continuum integrals).
    let p = ohmic(0.05, 400);
    let lin = discretize_bath(&p, BathScheme::Linear).unwrap();
    let log = discretize_bath(&p, BathScheme::logarithmic()).unwrap();
    for k in 0..=2u32 {
        let a = star_moment(&lin.frequencies, &lin.couplings_z, k);
        let b = star_moment(&log.frequencies, &log.couplings_z, k);
        let rel = (a - b).abs() / a.abs();
        // The log grid's wide top interval dominates its moment error.
        assert!(rel < 1e-3, "k={k}: lin {a:.6e} vs log {b:.6e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_sum_rule_exact(
        alpha in 1e-4..2.0f64,
        s in 0.3..2.5f64,
        n in 1usize..80,
        log_scheme in any::<bool>(),
    ) {
        let mut p = ohmic(alpha, n);
        p.s = s;
        let scheme = if log_scheme { BathScheme::logarithmic() } else { BathScheme::Linear };
        let bath = discretize_bath(&p, scheme).unwrap();
        let exact = 0.5 * alpha * 100.0 / (s + 1.0);
        let w = bath.coupling_weight(Channel::Z);
        prop_assert!((w - exact).abs() <= 1e-11 * exact.max(1.0));
    }

    #[test]
    fn prop_frequencies_strictly_increasing_in_range(
        n in 1usize..200,
        log_scheme in any::<bool>(),
    ) {
        let p = ohmic(0.1, n);
        let scheme = if log_scheme { BathScheme::logarithmic() } else { BathScheme::Linear };
        let bath = discretize_bath(&p, scheme).unwrap();
        prop_assert!(bath.frequencies.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(bath.frequencies.iter().all(|&w| w > 0.0 && w <= p.omega_c));
    }

    #[test]
    fn prop_chain_structure(
        alpha in 1e-3..1.5f64,
        n in 1usize..60,
    ) {
        let p = ohmic(alpha, n);
        let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
        let chain = chain_map(&bath, Channel::Z);
        prop_assert_eq!(chain.len(), n);
        prop_assert_eq!(chain.hopping.len(), n - 1);
        // Hoppings are positive by the Lanczos construction.
        prop_assert!(chain.hopping.iter().all(|&t| t > 0.0));
        // On-site energies sit inside the spectral support.
        prop_assert!(chain.onsite.iter().all(|&e| e > 0.0 && e < p.omega_c));
        // Edge coupling is the total weight.
        let expect = bath.coupling_weight(Channel::Z).sqrt();
        prop_assert!((chain.edge_coupling - expect).abs() <= 1e-10 * expect);
    }
}
