//! Analytic weak-coupling Markovian benchmark.
//!
//! At zero temperature and h = β = 0 the qubit relaxes toward the ground
//! state of H_Q = -(Δ/2)σ_x by amplitude damping in the H_Q eigenbasis
//! (ordering: 0 = ground). With population rate Γ, coherence rate Γ/2, and
//! renormalized splitting Ω = Δ + Σ,
//!
//!   ρ₁₁(t) = ρ₁₁(0) e^{-Γt},      ρ₀₀(t) = 1 - ρ₁₁(t),
//!   ρ₀₁(t) = ρ₀₁(0) e^{-Γt/2} e^{iΩt}.
//!
//! The golden-rule rate is γ = 2π J(Δ); a convention toggle decides whether
//! that number is the population rate (physical default) or the coherence
//! rate. The Lamb-Stark shift Σ is the second-order level-splitting shift
//!
//!   Σ = P∫₀^{ω_c} J(ω) [1/(Δ-ω) + 1/(Δ+ω)] dω
//!     = -(αΔ/2) ln((ω_c²-Δ²)/Δ²)            (s = 1),
//!
//! whose O(α) expansion reproduces the adiabatically renormalized splitting
//! Δ_r = Δ (Δ/ω_c)^{α/(1-α)}; the difference-combination integrand
//! P∫ J(ω)[1/(Δ-ω) - 1/(Δ+ω)]dω is also provided for comparison.
//!
//! F_αα(t) follows in closed form from the qubit identity
//! F = 2Tr[(∂ρ)²] + ¼(∂P)²/det ρ with S(t) ≡ ∂_αρ₀₀(t):
//!
//!   F_αα = 4S² + 4t²((∂_αγ_c)² + (∂_αΣ)²)|ρ₀₁(0)|² e^{-2γ_c t}
//!        + {S(ρ₀₀-ρ₁₁) - 2t(∂_αγ_c)|ρ₀₁(0)|² e^{-2γ_c t}}² / det ρ ,
//!
//! the `Consistent` form. The `Printed` variant replaces ∂_αγ_c by γ_c and
//! |ρ₀₁(0)|² by |ρ₀₁(0)| in the last brace, a combination that circulates
//! in the literature; it is kept as a diagnostic and every evaluation
//! cross-checks against finite differences of the analytic state, flagging
//! any disagreement beyond 10⁻⁶ relative where det ρ > 10⁻⁸.
//!
//! Short-time behavior of the exact form: det ρ ≈ γ_c t while the purity
//! derivative stays O(t), so the last term contributes t·(∂_αγ_c)²/(2γ_c) —
//! the QFI rises linearly, carrying classical rate information in the
//! newborn small eigenvalue, before the quadratic terms take over around
//! t ≈ (∂_αγ_c)²/(2γ_c B) with B the quadratic coefficient.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::TimeSeries;
use crate::model::{spectral_density, Channel, ModelParams};
use crate::qfim::{
    finite_diff_derivative, qfim_qubit_closed, Basis, ParamLabel, QfimResult,
    QubitDensityMatrix, DEFAULT_EPS,
};

/// Errors from the Markovian benchmark.
#[derive(Debug, Error)]
pub enum LindbladError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("shift integral diverges at the cutoff edge: delta {delta} >= omega_c {omega_c}")]
    ShiftDiverges { delta: f64, omega_c: f64 },
    #[error("state construction failed: {0}")]
    State(String),
}

pub type LindbladResult<T> = Result<T, LindbladError>;

/// Role of the golden-rule number γ = 2πJ(Δ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayConvention {
    /// γ is the population decay rate; coherences decay at γ/2. This is the
    /// Fermi golden rule reading and the default.
    #[default]
    PopulationRate,
    /// γ is the coherence decay rate; populations decay at 2γ. Reproduces
    /// the exponent e^{-2γt} on |ρ₀₁|² literally.
    CoherenceRate,
}

/// Principal-value combination defining the Lamb-Stark shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftIntegrand {
    /// P∫ J(ω)[1/(Δ-ω) + 1/(Δ+ω)]dω: the second-order level-splitting
    /// shift; its O(α) expansion matches Δ_r. Default.
    #[default]
    Sum,
    /// P∫ J(ω)[1/(Δ-ω) - 1/(Δ+ω)]dω: the alternative combination, kept for
    /// comparison; closed form (α/2)[-2ω_c + Δ ln((ω_c+Δ)/(ω_c-Δ))] at s=1.
    Difference,
}

/// Closed-form F_αα variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulaForm {
    /// Exact evaluation of F = 2Tr[(∂ρ)²] + ¼(∂P)²/det ρ. Default.
    #[default]
    Consistent,
    /// The circulated variant with γ_c in place of ∂_αγ_c and |ρ₀₁(0)|
    /// unsquared in the determinant term; diagnostic only.
    Printed,
}

/// Rates, shift, and initial conditions of the analytic solution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LindbladParams {
    /// Golden-rule number γ = 2πJ(Δ) (1/time).
    pub gamma: f64,
    /// Lamb-Stark shift Σ (energy); Ω = Δ + Σ.
    pub sigma_shift: f64,
    /// ∂γ/∂α (exact: γ is linear in α).
    pub d_gamma_d_alpha: f64,
    /// ∂Σ/∂α (exact: Σ is linear in α).
    pub d_sigma_d_alpha: f64,
    /// Bare splitting Δ.
    pub delta: f64,
    /// Coupling α the rates were built at.
    pub alpha: f64,
    pub convention: DecayConvention,
    /// Initial ground population; ρ₁₁(0) = 1 - ρ₀₀(0).
    pub rho00_0: f64,
    /// Initial coherence ⟨ground|ρ|excited⟩.
    pub rho01_0: C64,
}

impl LindbladParams {
    /// Population decay rate Γ under the active convention.
    pub fn population_rate(&self) -> f64 {
        match self.convention {
            DecayConvention::PopulationRate => self.gamma,
            DecayConvention::CoherenceRate => 2.0 * self.gamma,
        }
    }

    /// Coherence decay rate γ_c = Γ/2.
    pub fn coherence_rate(&self) -> f64 {
        0.5 * self.population_rate()
    }

    fn d_population_rate(&self) -> f64 {
        match self.convention {
            DecayConvention::PopulationRate => self.d_gamma_d_alpha,
            DecayConvention::CoherenceRate => 2.0 * self.d_gamma_d_alpha,
        }
    }

    /// Rates rebuilt at coupling α + dα (exact: both γ and Σ are linear).
    pub fn at_alpha_offset(&self, d_alpha: f64) -> LindbladResult<Self> {
        let alpha = self.alpha + d_alpha;
        if alpha < 0.0 {
            return Err(LindbladError::InvalidParams(format!(
                "alpha offset reaches {alpha} < 0"
            )));
        }
        Ok(LindbladParams {
            gamma: self.gamma + self.d_gamma_d_alpha * d_alpha,
            sigma_shift: self.sigma_shift + self.d_sigma_d_alpha * d_alpha,
            alpha,
            ..*self
        })
    }
}

/// Analytic state at one time with its purity.
#[derive(Debug, Clone)]
pub struct AnalyticState {
    pub t: f64,
    pub rho: QubitDensityMatrix,
    /// P = Tr ρ² ∈ [½, 1]; bounded below by 0.875 for the standard |↓⟩
    /// initial state.
    pub purity: f64,
}

/// Closed-form shift for s = 1. `Sum` and `Difference` as documented on
/// `ShiftIntegrand`.
fn shift_closed_form_ohmic(
    coupling: f64,
    delta: f64,
    omega_c: f64,
    integrand: ShiftIntegrand,
) -> f64 {
    match integrand {
        ShiftIntegrand::Sum => {
            -(coupling * delta / 2.0)
                * ((omega_c * omega_c - delta * delta) / (delta * delta)).ln()
        }
        ShiftIntegrand::Difference => {
            (coupling / 2.0)
                * (-2.0 * omega_c + delta * ((omega_c + delta) / (omega_c - delta)).ln())
        }
    }
}

/// Golden-rule rate and principal-value shift from the spectral density.
///
/// γ = 2πJ(Δ); Σ per `integrand` (closed form, s = 1 only). Derivatives in
/// α come from the exact linearity of both in α. Requires Δ < ω_c (the
/// shift integral diverges logarithmically at the edge) and h = β = 0 (the
/// benchmark regime; small values only add negligible corrections, so they
/// must be zeroed explicitly rather than silently dropped).
pub fn rates_from_spectral_density(
    params: &ModelParams,
    convention: DecayConvention,
    integrand: ShiftIntegrand,
) -> LindbladResult<LindbladParams> {
    params
        .validate()
        .map_err(|e| LindbladError::InvalidParams(e.to_string()))?;
    if params.h != 0.0 || params.beta != 0.0 {
        return Err(LindbladError::InvalidParams(format!(
            "benchmark requires h = beta = 0, got h = {}, beta = {}",
            params.h, params.beta
        )));
    }
    if params.s != 1.0 {
        return Err(LindbladError::InvalidParams(format!(
            "closed-form shift requires s = 1, got s = {}",
            params.s
        )));
    }
    if params.delta >= params.omega_c {
        return Err(LindbladError::ShiftDiverges {
            delta: params.delta,
            omega_c: params.omega_c,
        });
    }
    let j_delta = spectral_density(params.delta, params, Channel::Z)
        .map_err(|e| LindbladError::InvalidParams(e.to_string()))?;
    let gamma = 2.0 * std::f64::consts::PI * j_delta;
    let sigma_shift =
        shift_closed_form_ohmic(params.alpha, params.delta, params.omega_c, integrand);
    // Per-α slopes evaluated at unit coupling: exact, finite at α = 0.
    let d_gamma_d_alpha = std::f64::consts::PI * params.delta;
    let d_sigma_d_alpha = shift_closed_form_ohmic(1.0, params.delta, params.omega_c, integrand);
    // Initial lab state |↓⟩ = (|+x⟩ - |-x⟩)/√2 in the eigenbasis.
    Ok(LindbladParams {
        gamma,
        sigma_shift,
        d_gamma_d_alpha,
        d_sigma_d_alpha,
        delta: params.delta,
        alpha: params.alpha,
        convention,
        rho00_0: 0.5,
        rho01_0: C64::new(-0.5, 0.0),
    })
}

/// Analytic state at time t ≥ 0 (eigenbasis entries).
pub fn lindblad_state(lp: &LindbladParams, t: f64) -> LindbladResult<AnalyticState> {
    if t < 0.0 {
        return Err(LindbladError::NegativeTime(t));
    }
    let gamma_pop = lp.population_rate();
    let e = (-gamma_pop * t).exp();
    let rho11 = (1.0 - lp.rho00_0) * e;
    let omega = lp.delta + lp.sigma_shift;
    let phase = C64::new(0.0, omega * t).exp();
    let rho01 = lp.rho01_0 * phase * (-0.5 * gamma_pop * t).exp();
    let m = ndarray::array![
        [C64::new(1.0 - rho11, 0.0), rho01],
        [rho01.conj(), C64::new(rho11, 0.0)]
    ];
    let rho = QubitDensityMatrix::new(m, Basis::QubitEigen)
        .map_err(|e| LindbladError::State(e.to_string()))?;
    let purity = rho.purity();
    Ok(AnalyticState { t, rho, purity })
}

/// Finite-difference cross-check attached to every closed-form evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrossCheck {
    /// F from `qfim_qubit_closed` on Richardson finite differences of the
    /// analytic state.
    pub fd_value: f64,
    /// |closed - fd| / max(|closed|, |fd|, 10⁻³⁰⁰).
    pub rel_discrepancy: f64,
    pub det_rho: f64,
    /// Whether the 10⁻⁶ tolerance applies (det ρ > 10⁻⁸).
    pub checked: bool,
    /// checked && rel_discrepancy > 10⁻⁶: signals a convention mismatch.
    pub flagged: bool,
}

/// One F_αα(t) evaluation with its internal consistency report.
#[derive(Debug, Clone, Copy)]
pub struct LindbladQfi {
    pub result: QfimResult,
    /// S(t) = ∂_αρ₀₀(t).
    pub s_value: f64,
    /// None only at α = 0, where no two-sided stencil exists.
    pub cross_check: Option<CrossCheck>,
}

/// Closed-form F_αα(t).
///
/// `Consistent` evaluates the exact qubit identity; `Printed` evaluates the
/// circulated variant (see module docs). Both carry a finite-difference
/// cross-check; for `Consistent` it agrees to well under 10⁻⁶ relative
/// wherever det ρ > 10⁻⁸, for `Printed` the flag reports where the variant
/// departs from the exact value.
pub fn lindblad_qfi_alpha(
    lp: &LindbladParams,
    t: f64,
    form: FormulaForm,
) -> LindbladResult<LindbladQfi> {
    if t < 0.0 {
        return Err(LindbladError::NegativeTime(t));
    }
    let gamma_pop = lp.population_rate();
    let d_gamma_pop = lp.d_population_rate();
    let gamma_coh = 0.5 * gamma_pop;
    let d_gamma_coh = 0.5 * d_gamma_pop;
    let d_sigma = lp.d_sigma_d_alpha;
    let rho11_0 = 1.0 - lp.rho00_0;
    let c01_sq = lp.rho01_0.norm_sqr();

    let e = (-gamma_pop * t).exp();
    let rho11 = rho11_0 * e;
    let rho00 = 1.0 - rho11;
    let coh_sq = c01_sq * e;
    let det = rho00 * rho11 - coh_sq;
    let s = rho11_0 * t * d_gamma_pop * e;

    let term1 = 4.0 * s * s;
    let term2 = match form {
        FormulaForm::Consistent => {
            4.0 * t * t * (d_gamma_coh * d_gamma_coh + d_sigma * d_sigma) * c01_sq * e
        }
        FormulaForm::Printed => {
            4.0 * t * t * (gamma_coh * gamma_coh + d_sigma * d_sigma) * c01_sq * e
        }
    };
    let numerator = match form {
        FormulaForm::Consistent => s * (rho00 - rho11) - 2.0 * t * d_gamma_coh * coh_sq,
        FormulaForm::Printed => {
            s * (rho00 - rho11) - 2.0 * gamma_coh * t * c01_sq.sqrt() * e
        }
    };
    let mut value = term1 + term2;
    let mut n_dropped = 0usize;
    if det < DEFAULT_EPS {
        n_dropped += 1;
    } else {
        value += numerator * numerator / det;
    }

    // Cross-check: exact linearity of (γ, Σ) in α makes the offset states
    // exact, so the Richardson stencil error is O((δ·∂Γ·t)⁴) — the step must
    // shrink with the dimensionless sensitivity ∂Γ·t, and stay inside the
    // physical half-line (no two-sided stencil exists at α = 0).
    let rate_scale = (d_gamma_pop * t).abs().max((d_sigma * t).abs()).max(1.0);
    let mut d_alpha = 1e-3 / rate_scale;
    if lp.alpha > 0.0 {
        d_alpha = d_alpha.min(0.5 * lp.alpha);
    }
    let cross_check = if lp.alpha > 0.0 {
        let d = finite_diff_derivative(
            |a| lindblad_state(&lp.at_alpha_offset(a - lp.alpha)?, t).map(|s| s.rho),
            ParamLabel::Alpha,
            lp.alpha,
            d_alpha,
            true,
        )
        .map_err(|e| LindbladError::State(e.to_string()))?;
        let state = lindblad_state(lp, t)?;
        let fd = qfim_qubit_closed(&state.rho, &d, &d, DEFAULT_EPS)
            .map_err(|e| LindbladError::State(e.to_string()))?;
        let scale = value.abs().max(fd.value.abs()).max(1e-300);
        let rel_discrepancy = (value - fd.value).abs() / scale;
        let checked = det > 1e-8;
        Some(CrossCheck {
            fd_value: fd.value,
            rel_discrepancy,
            det_rho: det,
            checked,
            flagged: checked && rel_discrepancy > 1e-6,
        })
    } else {
        None
    };
    Ok(LindbladQfi {
        result: QfimResult {
            mu: ParamLabel::Alpha,
            nu: ParamLabel::Alpha,
            value,
            n_dropped,
        },
        s_value: s,
        cross_check,
    })
}

/// F_αα on the uniform grid t_k = k·dt, k = 0..n, plus per-point flags.
pub fn lindblad_qfi_trace(
    lp: &LindbladParams,
    dt: f64,
    n: usize,
    form: FormulaForm,
) -> LindbladResult<(TimeSeries, Vec<LindbladQfi>)> {
    if !(dt > 0.0) {
        return Err(LindbladError::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    let mut values = Vec::with_capacity(n + 1);
    let mut detail = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let q = lindblad_qfi_alpha(lp, k as f64 * dt, form)?;
        values.push(q.result.value);
        detail.push(q);
    }
    let series = TimeSeries::new(0.0, dt, values)
        .map_err(|e| LindbladError::InvalidParams(e.to_string()))?;
    Ok((series, detail))
}

/// Trajectory CSV: `t,rho00,re_rho01,im_rho01,purity,f_alpha_alpha,flow`.
///
/// The flow column is the centered time derivative of F_αα (one-sided
/// second-order stencils at the ends).
pub fn write_trajectory_csv<W: std::io::Write>(
    lp: &LindbladParams,
    dt: f64,
    n: usize,
    form: FormulaForm,
    mut w: W,
) -> LindbladResult<()> {
    let (series, detail) = lindblad_qfi_trace(lp, dt, n, form)?;
    let flow = crate::qfim::qfi_flow(&series)
        .map_err(|e| LindbladError::InvalidParams(e.to_string()))?;
    writeln!(w, "t,rho00,re_rho01,im_rho01,purity,f_alpha_alpha,flow")
        .map_err(|e| LindbladError::State(e.to_string()))?;
    for (k, q) in detail.iter().enumerate() {
        let st = lindblad_state(lp, k as f64 * dt)?;
        let m = st.rho.matrix();
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            st.t,
            m[[0, 0]].re,
            m[[0, 1]].re,
            m[[0, 1]].im,
            st.purity,
            q.result.value,
            flow.values[k]
        )
        .map_err(|e| LindbladError::State(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64) -> ModelParams {
        ModelParams::ohmic(1.0, alpha, 0.0, 100).unwrap()
    }

    fn rates(alpha: f64) -> LindbladParams {
        rates_from_spectral_density(
            &params(alpha),
            DecayConvention::PopulationRate,
            ShiftIntegrand::Sum,
        )
        .unwrap()
    }

    #[test]
    fn golden_rule_rate_at_ohmic_point() {
        let lp = rates(0.01);
        assert!((lp.gamma - 0.01 * std::f64::consts::PI).abs() < 1e-15);
        assert!((lp.d_gamma_d_alpha * lp.alpha - lp.gamma).abs() < 1e-15);
        let lp0 = rates(0.0);
        assert_eq!(lp0.gamma, 0.0);
        assert_eq!(lp0.sigma_shift, 0.0);
    }

    #[test]
    fn shift_is_negative_and_matches_renormalized_splitting_to_first_order() {
        let lp = rates(0.1);
        assert!(lp.sigma_shift < 0.0);
        let omega = lp.delta + lp.sigma_shift;
        let delta_r = (0.1f64).powf(0.1 / 0.9);
        assert!(
            (omega - delta_r).abs() / delta_r < 0.01,
            "Omega {omega} vs Delta_r {delta_r}"
        );
    }

    #[test]
    fn benchmark_regime_is_enforced() {
        let mut p = params(0.1);
        p.h = 1e-3;
        assert!(rates_from_spectral_density(
            &p,
            DecayConvention::PopulationRate,
            ShiftIntegrand::Sum
        )
        .is_err());
        let mut p = params(0.1);
        p.delta = 10.0;
        p.omega_c = 10.0;
        assert!(matches!(
            rates_from_spectral_density(
                &p,
                DecayConvention::PopulationRate,
                ShiftIntegrand::Sum
            ),
            Err(LindbladError::ShiftDiverges { .. })
        ));
    }

    #[test]
    fn initial_state_and_stationary_limit() {
        let lp = rates(0.1);
        let s0 = lindblad_state(&lp, 0.0).unwrap();
        let m = s0.rho.matrix();
        assert_eq!(m[[0, 0]].re, 0.5);
        assert_eq!(m[[0, 1]].re, -0.5);
        assert!((s0.purity - 1.0).abs() < 1e-14);
        let sinf = lindblad_state(&lp, 1e6).unwrap();
        let m = sinf.rho.matrix();
        assert!((m[[0, 0]].re - 1.0).abs() < 1e-12);
        assert!(m[[0, 1]].norm() < 1e-12);
        assert!(lindblad_state(&lp, -0.1).is_err());
    }

    #[test]
    fn qfi_is_exactly_zero_at_t0() {
        let q = lindblad_qfi_alpha(&rates(0.1), 0.0, FormulaForm::Consistent).unwrap();
        assert_eq!(q.result.value, 0.0);
        assert_eq!(q.result.n_dropped, 1);
        assert_eq!(q.s_value, 0.0);
    }

    #[test]
    fn convention_toggle_scales_rates() {
        let pop = rates(0.1);
        let coh = rates_from_spectral_density(
            &params(0.1),
            DecayConvention::CoherenceRate,
            ShiftIntegrand::Sum,
        )
        .unwrap();
        assert_eq!(pop.gamma, coh.gamma);
        assert!((coh.population_rate() - 2.0 * pop.population_rate()).abs() < 1e-15);
        let t = 1.0;
        let sp = lindblad_state(&pop, t).unwrap();
        let sc = lindblad_state(&coh, t).unwrap();
        let e_pop = sp.rho.matrix()[[1, 1]].re / 0.5;
        let e_coh = sc.rho.matrix()[[1, 1]].re / 0.5;
        assert!((e_coh - e_pop * e_pop).abs() < 1e-12, "populations: e^-2γt vs e^-γt");
    }
}
