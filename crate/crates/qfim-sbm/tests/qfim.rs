//! QFIM route equivalence, covariance, and fidelity-link tests.

use ndarray::{array, Array2};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qfim_sbm::qfim::{
    finite_diff_derivative, qfi_from_fidelity, qfim_from_sld, qfim_qubit_closed, qfim_spectral,
    sld, uhlmann_fidelity, Basis, DerivativeScheme, ParamDerivative, ParamLabel,
    QubitDensityMatrix, DEFAULT_EPS,
};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Random full-rank qubit state: Bloch radius in [0.05, 0.95].
fn random_state(rng: &mut ChaCha8Rng) -> QubitDensityMatrix {
    let r = rng.random_range(0.05..0.95);
    let cos_t = rng.random_range(-1.0..1.0f64);
    let sin_t = (1.0 - cos_t * cos_t).sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    QubitDensityMatrix::from_bloch(
        r * sin_t * phi.cos(),
        r * sin_t * phi.sin(),
        r * cos_t,
        Basis::SigmaZ,
    )
    .expect("interior Bloch vector is a valid state")
}

/// Random Hermitian traceless derivative with O(1) entries.
fn random_derivative(rng: &mut ChaCha8Rng, label: ParamLabel) -> ParamDerivative {
    let a = rng.random_range(-1.0..1.0);
    let re = rng.random_range(-1.0..1.0);
    let im = rng.random_range(-1.0..1.0);
    let m = array![[c(a, 0.0), c(re, im)], [c(re, -im), c(-a, 0.0)]];
    ParamDerivative::new(label, m, 0.0, DerivativeScheme::Analytic, Basis::SigmaZ).unwrap()
}

#[test]
fn three_routes_agree_on_a_thousand_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0f1_0f1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let rho = random_state(&mut rng);
        let d_mu = random_derivative(&mut rng, ParamLabel::Alpha);
        let d_nu = random_derivative(&mut rng, ParamLabel::H);
        for (da, db) in [(&d_mu, &d_mu), (&d_nu, &d_nu), (&d_mu, &d_nu)] {
            let spec = qfim_spectral(&rho, da, db, DEFAULT_EPS).unwrap();
            let closed = qfim_qubit_closed(&rho, da, db, DEFAULT_EPS).unwrap();
            let la = sld(&rho, da, DEFAULT_EPS).unwrap();
            let lb = sld(&rho, db, DEFAULT_EPS).unwrap();
            let via_sld = qfim_from_sld(&rho, &la, &lb).unwrap();
            assert_eq!(spec.n_dropped, 0, "full-rank state must drop nothing");
            assert_eq!(closed.n_dropped, 0);
            let scale = spec.value.abs().max(1.0);
            let d1 = (spec.value - closed.value).abs() / scale;
            let d2 = (spec.value - via_sld.value).abs() / scale;
            worst = worst.max(d1).max(d2);
            assert!(d1 < 1e-10, "spectral vs closed: {d1:.3e}");
            assert!(d2 < 1e-10, "spectral vs SLD: {d2:.3e}");
        }
    }
    assert!(worst < 1e-10, "worst relative route disagreement {worst:.3e}");
}

#[test]
fn qfim_is_exactly_symmetric_in_floating_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xabc);
    for _ in 0..200 {
        let rho = random_state(&mut rng);
        let d_mu = random_derivative(&mut rng, ParamLabel::Alpha);
        let d_nu = random_derivative(&mut rng, ParamLabel::H);
        let ab = qfim_spectral(&rho, &d_mu, &d_nu, DEFAULT_EPS).unwrap().value;
        let ba = qfim_spectral(&rho, &d_nu, &d_mu, DEFAULT_EPS).unwrap().value;
        assert_eq!(ab.to_bits(), ba.to_bits(), "spectral symmetry broken: {ab} vs {ba}");
        let ab = qfim_qubit_closed(&rho, &d_mu, &d_nu, DEFAULT_EPS).unwrap().value;
        let ba = qfim_qubit_closed(&rho, &d_nu, &d_mu, DEFAULT_EPS).unwrap().value;
        assert_eq!(ab.to_bits(), ba.to_bits(), "closed-form symmetry broken: {ab} vs {ba}");
        let la = sld(&rho, &d_mu, DEFAULT_EPS).unwrap();
        let lb = sld(&rho, &d_nu, DEFAULT_EPS).unwrap();
        let ab = qfim_from_sld(&rho, &la, &lb).unwrap().value;
        let ba = qfim_from_sld(&rho, &lb, &la).unwrap().value;
        assert_eq!(ab.to_bits(), ba.to_bits(), "SLD symmetry broken: {ab} vs {ba}");
    }
}

#[test]
fn two_parameter_block_is_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e9);
    for _ in 0..500 {
        let rho = random_state(&mut rng);
        let d_mu = random_derivative(&mut rng, ParamLabel::Alpha);
        let d_nu = random_derivative(&mut rng, ParamLabel::H);
        let f_aa = qfim_spectral(&rho, &d_mu, &d_mu, DEFAULT_EPS).unwrap().value;
        let f_bb = qfim_spectral(&rho, &d_nu, &d_nu, DEFAULT_EPS).unwrap().value;
        let f_ab = qfim_spectral(&rho, &d_mu, &d_nu, DEFAULT_EPS).unwrap().value;
        let scale = f_aa.max(f_bb).max(1.0);
        assert!(f_aa >= -1e-12 * scale, "diagonal entry negative: {f_aa:.3e}");
        assert!(f_bb >= -1e-12 * scale);
        let det = f_aa * f_bb - f_ab * f_ab;
        assert!(det >= -1e-10 * scale * scale, "2x2 QFIM determinant {det:.3e} < 0");
    }
}

#[test]
fn reparametrization_scales_qfi_by_inverse_square() {
    // ρ(θ) = ½(I + 0.8(sinθ, 0, cosθ)): with θ' = cθ, F' = F/c².
    let provider = |theta: f64| {
        QubitDensityMatrix::from_bloch(0.8 * theta.sin(), 0.0, 0.8 * theta.cos(), Basis::SigmaZ)
    };
    let c_scale = 2.0;
    let provider_scaled = |theta_p: f64| provider(theta_p / c_scale);
    let x0 = 0.3;
    let d = finite_diff_derivative(provider, ParamLabel::H, x0, 1e-5, true).unwrap();
    let d_scaled =
        finite_diff_derivative(provider_scaled, ParamLabel::H, c_scale * x0, 1e-5, true).unwrap();
    let rho = provider(x0).unwrap();
    let f = qfim_spectral(&rho, &d, &d, DEFAULT_EPS).unwrap().value;
    let f_scaled = qfim_spectral(&rho, &d_scaled, &d_scaled, DEFAULT_EPS).unwrap().value;
    let expect = f / (c_scale * c_scale);
    assert!(
        (f_scaled - expect).abs() < 1e-8 * f.max(1.0),
        "covariance violated: {f_scaled} vs {expect}"
    );
}

#[test]
fn fidelity_link_converges_quadratically_to_the_qfi() {
    // Mixed analytic family with nonzero F: radius and angle both move.
    let provider = |theta: f64| {
        let r = 0.6 + 0.2 * theta;
        QubitDensityMatrix::from_bloch(r * theta.sin(), 0.0, r * theta.cos(), Basis::SigmaZ)
    };
    let x0 = 0.4;
    let rho = provider(x0).unwrap();
    let d = finite_diff_derivative(provider, ParamLabel::H, x0, 1e-6, true).unwrap();
    let f_exact = qfim_spectral(&rho, &d, &d, DEFAULT_EPS).unwrap().value;
    let link = |delta: f64| {
        let minus = provider(x0 - 0.5 * delta).unwrap();
        let plus = provider(x0 + 0.5 * delta).unwrap();
        qfi_from_fidelity(&minus, &plus, delta).unwrap()
    };
    let e1 = (link(1e-2) - f_exact).abs();
    let e2 = (link(5e-3) - f_exact).abs();
    assert!((link(1e-3) - f_exact).abs() / f_exact < 1e-3, "link off at delta=1e-3");
    // Quadratic convergence: halving delta divides the error by about 4.
    let ratio = e1 / e2;
    assert!((2.5..6.0).contains(&ratio), "error ratio {ratio} not O(delta^2)");
}

#[test]
fn qubit_eigen_basis_rotation_is_consistent() {
    // Ground state of -(Δ/2)σ_x is |+x⟩; diag(1,0) in the eigenbasis must
    // rotate to the |+x⟩ projector ½(I + σ_x) in the σ_z basis.
    let m = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
    let rho = QubitDensityMatrix::new(m, Basis::QubitEigen).unwrap();
    let z = rho.to_sigma_z_basis();
    let expect = array![[c(0.5, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.5, 0.0)]];
    let dev = (&z - &expect).iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    assert!(dev < 1e-14, "rotation deviation {dev:.3e}");
    // The rotation preserves eigenvalues.
    let back = QubitDensityMatrix::new(z, Basis::SigmaZ).unwrap();
    let [lo, hi] = back.eigenvalues();
    assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
}

#[test]
fn dropped_terms_are_counted_only_near_purity() {
    let pure = QubitDensityMatrix::from_bloch(0.0, 0.0, 1.0, Basis::SigmaZ).unwrap();
    let mixed = QubitDensityMatrix::from_bloch(0.0, 0.0, 0.5, Basis::SigmaZ).unwrap();
    let d = ParamDerivative::new(
        ParamLabel::H,
        array![[c(0.5, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.5, 0.0)]],
        0.0,
        DerivativeScheme::Analytic,
        Basis::SigmaZ,
    )
    .unwrap();
    let f_pure = qfim_spectral(&pure, &d, &d, DEFAULT_EPS).unwrap();
    assert_eq!(f_pure.n_dropped, 1, "the dead-dead eigenpair must be dropped");
    let f_mixed = qfim_spectral(&mixed, &d, &d, DEFAULT_EPS).unwrap();
    assert_eq!(f_mixed.n_dropped, 0);
    let f_closed_pure = qfim_qubit_closed(&pure, &d, &d, DEFAULT_EPS).unwrap();
    assert_eq!(f_closed_pure.n_dropped, 1, "det term must be dropped at purity");
}

#[test]
fn richardson_error_estimate_bounds_the_true_error() {
    let provider = |theta: f64| {
        QubitDensityMatrix::from_bloch(0.7 * theta.sin(), 0.0, 0.7 * theta.cos(), Basis::SigmaZ)
    };
    let x0 = 0.2;
    let d = finite_diff_derivative(provider, ParamLabel::Delta, x0, 1e-2, true).unwrap();
    // Exact derivative: 0.7(cosθ, 0, -sinθ)/2 dotted into Paulis.
    let (s, co) = x0.sin_cos();
    let exact: Array2<C64> = array![
        [c(-0.35 * s, 0.0), c(0.35 * co, 0.0)],
        [c(0.35 * co, 0.0), c(0.35 * s, 0.0)]
    ];
    let true_err =
        (d.matrix() - &exact).iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let est = d.error_estimate.unwrap();
    assert!(
        true_err < est,
        "Richardson error {true_err:.3e} should sit below the two-step estimate {est:.3e}"
    );
}

proptest! {
    #[test]
    fn fidelity_stays_in_the_unit_interval(
        x1 in -0.577..0.577f64, y1 in -0.577..0.577f64, z1 in -0.577..0.577f64,
        x2 in -0.577..0.577f64, y2 in -0.577..0.577f64, z2 in -0.577..0.577f64,
    ) {
        let r1 = QubitDensityMatrix::from_bloch(x1, y1, z1, Basis::SigmaZ).unwrap();
        let r2 = QubitDensityMatrix::from_bloch(x2, y2, z2, Basis::SigmaZ).unwrap();
        let f = uhlmann_fidelity(&r1, &r2).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        let f_same = uhlmann_fidelity(&r1, &r1).unwrap();
        prop_assert!((f_same - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_qfi_is_nonnegative(
        x in -0.5..0.5f64, z in -0.5..0.5f64,
        a in -1.0..1.0f64, re in -1.0..1.0f64, im in -1.0..1.0f64,
    ) {
        let rho = QubitDensityMatrix::from_bloch(x, 0.0, z, Basis::SigmaZ).unwrap();
        let m = array![[c(a, 0.0), c(re, im)], [c(re, -im), c(-a, 0.0)]];
        let d = ParamDerivative::new(
            ParamLabel::Alpha, m, 0.0, DerivativeScheme::Analytic, Basis::SigmaZ,
        ).unwrap();
        let f = qfim_spectral(&rho, &d, &d, DEFAULT_EPS).unwrap();
        prop_assert!(f.value >= -1e-12);
    }
}
