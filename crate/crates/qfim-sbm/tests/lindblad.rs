//! Markovian benchmark tests against independent oracles.
//!
//! The shift oracle is an adaptive-Simpson principal-value quadrature,
//! written before and independently of the closed forms it gates.

use proptest::prelude::*;

use qfim_sbm::lindblad::{
    lindblad_qfi_alpha, lindblad_qfi_trace, lindblad_state, rates_from_spectral_density,
    write_trajectory_csv, DecayConvention, FormulaForm, LindbladParams, ShiftIntegrand,
};
use qfim_sbm::model::ModelParams;
use qfim_sbm::qfim::qfi_flow;

/// Adaptive Simpson on a smooth integrand, absolute tolerance `tol`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(f, a, m, fa, flm, fm);
        let right = simpson(f, m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(f, a, m.min(b), fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Principal-value shift oracle: P∫₀^{ω_c} J(ω)[1/(Δ-ω) ± 1/(Δ+ω)]dω with
/// J(ω) = (α/2)ω_c^{1-s}ω^s. The pole at ω = Δ is handled by the symmetric
/// pairing ω = Δ ∓ u on [Δ-r, Δ+r], which turns the singular part into the
/// smooth difference quotient [g(Δ-u) - g(Δ+u)]/u.
fn pv_shift_oracle(alpha: f64, s: f64, delta: f64, omega_c: f64, plus_sign: bool) -> f64 {
    let j = move |w: f64| 0.5 * alpha * omega_c.powf(1.0 - s) * w.powf(s);
    let second = move |w: f64| {
        let sgn = if plus_sign { 1.0 } else { -1.0 };
        sgn * j(w) / (delta + w)
    };
    // Regular part: J(ω)/(Δ+ω) over the full interval.
    let mut total = adaptive_simpson(&second, 0.0, omega_c, 1e-12);
    // Singular part: pair the pole symmetrically on [Δ-r, Δ+r].
    let r = delta.min(omega_c - delta);
    let paired = move |u: f64| {
        if u == 0.0 {
            // lim_{u→0} [J(Δ-u) - J(Δ+u)]/u = -2 J'(Δ).
            -2.0 * 0.5 * alpha * omega_c.powf(1.0 - s) * s * delta.powf(s - 1.0)
        } else {
            (j(delta - u) - j(delta + u)) / u
        }
    };
    total += adaptive_simpson(&paired, 0.0, r, 1e-12);
    // Remaining smooth tails of the 1/(Δ-ω) part.
    let first = move |w: f64| j(w) / (delta - w);
    if delta - r > 0.0 {
        total += adaptive_simpson(&first, 0.0, delta - r, 1e-12);
    }
    if delta + r < omega_c {
        total += adaptive_simpson(&first, delta + r, omega_c, 1e-12);
    }
    total
}

fn ohmic(alpha: f64) -> ModelParams {
    ModelParams::ohmic(1.0, alpha, 0.0, 100).unwrap()
}

fn rates(alpha: f64) -> LindbladParams {
    rates_from_spectral_density(
        &ohmic(alpha),
        DecayConvention::PopulationRate,
        ShiftIntegrand::Sum,
    )
    .unwrap()
}

#[test]
fn shift_closed_forms_match_pv_quadrature() {
    for &(alpha, omega_c) in &[(0.05, 10.0), (0.1, 7.0), (0.2, 20.0), (0.01, 10.0)] {
        let mut p = ohmic(alpha);
        p.omega_c = omega_c;
        for (integrand, plus) in
            [(ShiftIntegrand::Sum, true), (ShiftIntegrand::Difference, false)]
        {
            let lp =
                rates_from_spectral_density(&p, DecayConvention::PopulationRate, integrand)
                    .unwrap();
            let oracle = pv_shift_oracle(alpha, 1.0, 1.0, omega_c, plus);
            let rel = (lp.sigma_shift - oracle).abs() / oracle.abs().max(1e-300);
            assert!(
                rel < 1e-8,
                "alpha={alpha} omega_c={omega_c} {integrand:?}: closed {} vs oracle {oracle}",
                lp.sigma_shift
            );
        }
    }
}

#[test]
fn shift_derivative_is_the_unit_coupling_shift() {
    let lp = rates(0.2);
    assert!((lp.d_sigma_d_alpha * 0.2 - lp.sigma_shift).abs() < 1e-14);
    let oracle = pv_shift_oracle(1.0, 1.0, 1.0, 10.0, true);
    assert!((lp.d_sigma_d_alpha - oracle).abs() < 1e-8 * oracle.abs());
}

#[test]
fn complete_positivity_proxy_on_dense_grid() {
    for &alpha in &[0.01, 0.1, 0.5] {
        let lp = rates(alpha);
        let mut min_purity = f64::INFINITY;
        for k in 0..=2000 {
            let t = 0.05 * k as f64;
            let st = lindblad_state(&lp, t).unwrap();
            let [lo, hi] = st.rho.eigenvalues();
            assert!(lo >= -1e-12 && hi <= 1.0 + 1e-12, "eigenvalues at t={t}");
            assert!(st.purity >= 0.5 - 1e-12 && st.purity <= 1.0 + 1e-12);
            min_purity = min_purity.min(st.purity);
        }
        // Standard initial conditions bound the purity by 7/8 at e^{-Γt}=½.
        assert!(min_purity >= 0.875 - 1e-9, "min purity {min_purity} at alpha={alpha}");
        if 0.05 * 2000.0 * lp.population_rate() > std::f64::consts::LN_2 {
            assert!((min_purity - 0.875).abs() < 1e-3, "minimum should reach 7/8");
        }
    }
}

#[test]
fn coherence_rotates_at_the_renormalized_splitting() {
    let lp = rates(0.1);
    let omega = lp.delta + lp.sigma_shift;
    let t = 3.7;
    let st = lindblad_state(&lp, t).unwrap();
    let c01 = st.rho.matrix()[[0, 1]];
    let expected_phase = omega * t;
    // ρ01(0) = -½ contributes the π phase offset.
    let measured = c01.im.atan2(c01.re);
    let diff = (measured - (expected_phase + std::f64::consts::PI))
        .rem_euclid(2.0 * std::f64::consts::PI);
    let diff = diff.min(2.0 * std::f64::consts::PI - diff);
    assert!(diff < 1e-12, "phase off by {diff}");
}

#[test]
fn consistent_form_passes_its_fd_cross_check_everywhere() {
    for &alpha in &[0.01, 0.1, 0.3] {
        let lp = rates(alpha);
        for &t in &[0.01, 0.1, 1.0, 5.0, 10.0, 30.0, 100.0] {
            let q = lindblad_qfi_alpha(&lp, t, FormulaForm::Consistent).unwrap();
            let cc = q.cross_check.unwrap();
            assert!(
                !cc.flagged,
                "alpha={alpha} t={t}: rel {} det {}",
                cc.rel_discrepancy, cc.det_rho
            );
            if cc.checked {
                assert!(cc.rel_discrepancy < 1e-6);
            }
            assert!(q.result.value >= 0.0);
        }
    }
}

#[test]
fn printed_form_is_flagged_where_it_departs() {
    let lp = rates(0.1);
    let q = lindblad_qfi_alpha(&lp, 5.0, FormulaForm::Printed).unwrap();
    let cc = q.cross_check.unwrap();
    assert!(cc.flagged, "printed variant should disagree at t=5");
    assert!(cc.rel_discrepancy > 1e-3);
    // The cross-check value is the exact one.
    let exact = lindblad_qfi_alpha(&lp, 5.0, FormulaForm::Consistent).unwrap();
    let rel = (cc.fd_value - exact.result.value).abs() / exact.result.value;
    assert!(rel < 1e-8);
}

#[test]
fn qfi_limits_and_long_time_decay() {
    let lp = rates(0.1);
    let q0 = lindblad_qfi_alpha(&lp, 0.0, FormulaForm::Consistent).unwrap();
    assert_eq!(q0.result.value, 0.0);
    let (series, _) = lindblad_qfi_trace(&lp, 0.5, 400, FormulaForm::Consistent).unwrap();
    let max = series.values.iter().cloned().fold(0.0f64, f64::max);
    assert!(max > 0.0);
    let tail = lindblad_qfi_alpha(&lp, 2000.0, FormulaForm::Consistent).unwrap();
    assert!(tail.result.value < 1e-6 * max, "tail {} vs max {max}", tail.result.value);
}

#[test]
fn short_time_growth_is_linear_rate_information() {
    // det ρ ≈ γ_c t and ∂_αP = O(t) make the determinant term linear:
    // F(t) → t·(∂_αγ_c)²/(2γ_c), before the quadratic terms take over.
    let lp = rates(0.01);
    let d_gc = 0.5 * lp.d_gamma_d_alpha;
    let gc = lp.coherence_rate();
    let coeff = d_gc * d_gc / (2.0 * gc);
    let f = |t: f64| {
        lindblad_qfi_alpha(&lp, t, FormulaForm::Consistent).unwrap().result.value
    };
    let t = 1e-4;
    assert!(
        (f(t) / t - coeff).abs() / coeff < 1e-3,
        "linear coefficient {} vs {coeff}",
        f(t) / t
    );
    let slope = (f(1e-2) / f(1e-3)).ln() / 10f64.ln();
    assert!((slope - 1.0).abs() < 0.01, "log-log slope {slope}");
}

#[test]
fn flow_is_nonpositive_after_the_maximum() {
    let lp = rates(0.1);
    let (series, _) = lindblad_qfi_trace(&lp, 0.1, 1500, FormulaForm::Consistent).unwrap();
    let flow = qfi_flow(&series).unwrap();
    let imax = series
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let scale = flow.values.iter().map(|f| f.abs()).fold(0.0f64, f64::max);
    for k in imax + 1..flow.len() {
        assert!(
            flow.values[k] <= 1e-8 * scale,
            "positive flow {} at k={k} after max at {imax}",
            flow.values[k]
        );
    }
}

#[test]
fn trajectory_csv_is_well_formed() {
    let lp = rates(0.1);
    let mut buf = Vec::new();
    write_trajectory_csv(&lp, 0.5, 20, FormulaForm::Consistent, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,rho00,re_rho01,im_rho01,purity,f_alpha_alpha,flow");
    assert_eq!(lines.len(), 22);
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 7);
        assert!(!line.contains("NaN"));
    }
}

proptest! {
    #[test]
    fn state_is_valid_and_qfi_nonnegative(
        alpha in 1e-3..0.5f64, t in 0.0..50.0f64,
    ) {
        let lp = rates(alpha);
        let st = lindblad_state(&lp, t).unwrap();
        prop_assert!((0.5..=1.0 + 1e-12).contains(&st.purity));
        let tr = st.rho.matrix()[[0, 0]].re + st.rho.matrix()[[1, 1]].re;
        prop_assert!((tr - 1.0).abs() < 1e-12);
        let q = lindblad_qfi_alpha(&lp, t, FormulaForm::Consistent).unwrap();
        prop_assert!(q.result.value >= 0.0);
        prop_assert!(!q.cross_check.unwrap().flagged);
    }
}
