//! Quantum Fisher information matrix (QFIM) for qubit states.
//!
//! Three independent routes to the same object:
//!
//! * spectral sum over eigenpairs of ρ,
//!   F_μν = Σ_{ij} 2 Re[⟨i|∂_μρ|j⟩⟨j|∂_νρ|i⟩] / (λ_i + λ_j),
//!   dropping terms with λ_i + λ_j below a threshold;
//! * the qubit closed form
//!   F_ab = 2 Tr[(∂_aρ)(∂_bρ)] + ¼ (∂_aP)(∂_bP)/det ρ with P = Tr[ρ²],
//!   whose second term is dropped in the pure-state limit det ρ → 0;
//! * symmetric logarithmic derivatives, F_μν = ½ Tr(ρ{L_μ, L_ν}) with
//!   L_ij = 2(∂ρ)_ij/(λ_i + λ_j) in the eigenbasis of ρ.
//!
//! Route agreement on full-rank states is the main internal consistency
//! check of the whole toolkit. The module also provides the Uhlmann
//! fidelity and its Bures link 8(1 - f(ρ(x), ρ(x+δ)))/δ² → F_xx, central
//! finite-difference derivatives of density matrices with optional
//! Richardson extrapolation, and the QFI flow dF/dt.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::TimeSeries;
use crate::linalg::{self, eigh2};

/// Errors from QFIM construction and evaluation.
#[derive(Debug, Error)]
pub enum QfimError {
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid derivative matrix: {0}")]
    InvalidDerivative(String),
    #[error("basis mismatch: {0:?} vs {1:?}")]
    BasisMismatch(Basis, Basis),
    #[error("rank-deficient state without pure-state structure; use the spectral route")]
    RankDeficient,
    #[error("state provider failed at parameter value {at}: {message}")]
    Provider { at: f64, message: String },
    #[error("QFI flow needs a uniform grid of at least 3 points: {0}")]
    FlowGrid(String),
}

pub type QfimResultOf<T> = Result<T, QfimError>;

/// Basis the 2×2 matrix entries refer to.
///
/// `QubitEigen` is the h = 0 eigenbasis of H_Q = -(Δ/2)σ_x, ordered ground
/// state |+x⟩ first; the Markovian benchmark solver works there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    SigmaZ,
    QubitEigen,
}

/// Estimable parameter of the spin-boson family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamLabel {
    Alpha,
    Beta,
    Delta,
    H,
}

impl std::fmt::Display for ParamLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamLabel::Alpha => write!(f, "alpha"),
            ParamLabel::Beta => write!(f, "beta"),
            ParamLabel::Delta => write!(f, "delta"),
            ParamLabel::H => write!(f, "h"),
        }
    }
}

/// Validated 2×2 density matrix with its basis tag.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitDensityMatrix {
    matrix: Array2<C64>,
    pub basis: Basis,
}

impl QubitDensityMatrix {
    /// Validate trace (1e-10), Hermiticity (1e-12), and eigenvalue range
    /// ([-1e-10, 1+1e-10]).
    pub fn new(matrix: Array2<C64>, basis: Basis) -> QfimResultOf<Self> {
        if matrix.shape() != [2, 2] {
            return Err(QfimError::InvalidState(format!("expected 2x2, got {:?}", matrix.shape())));
        }
        let herm = linalg::hermiticity_deviation(&matrix.view());
        if herm > 1e-12 {
            return Err(QfimError::InvalidState(format!(
                "Hermiticity deviation {herm:.3e} exceeds 1e-12"
            )));
        }
        let tr = (matrix[[0, 0]] + matrix[[1, 1]]).re;
        if (tr - 1.0).abs() > 1e-10 {
            return Err(QfimError::InvalidState(format!("trace {tr} deviates from 1 beyond 1e-10")));
        }
        let rho = QubitDensityMatrix { matrix, basis };
        let [lo, hi] = rho.eigenvalues();
        if lo < -1e-10 || hi > 1.0 + 1e-10 {
            return Err(QfimError::InvalidState(format!(
                "eigenvalues [{lo:.3e}, {hi:.3e}] outside [0, 1] beyond 1e-10"
            )));
        }
        Ok(rho)
    }

    /// ρ = ½(I + x σ_x + y σ_y + z σ_z), Bloch vector inside the unit ball.
    pub fn from_bloch(x: f64, y: f64, z: f64, basis: Basis) -> QfimResultOf<Self> {
        let m = ndarray::array![
            [C64::new(0.5 * (1.0 + z), 0.0), C64::new(0.5 * x, -0.5 * y)],
            [C64::new(0.5 * x, 0.5 * y), C64::new(0.5 * (1.0 - z), 0.0)]
        ];
        QubitDensityMatrix::new(m, basis)
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    /// Eigenvalues ascending (closed form, stable near purity).
    pub fn eigenvalues(&self) -> [f64; 2] {
        eigh2(&self.matrix.view()).0
    }

    /// Eigenvalues and eigenvector unitary (columns, ascending order).
    pub fn eigen(&self) -> ([f64; 2], Array2<C64>) {
        eigh2(&self.matrix.view())
    }

    /// Purity Tr ρ².
    pub fn purity(&self) -> f64 {
        herm_trace_product(&self.matrix, &self.matrix)
    }

    /// det ρ = λ₀λ₁, real for Hermitian input.
    pub fn det(&self) -> f64 {
        (self.matrix[[0, 0]].re * self.matrix[[1, 1]].re) - self.matrix[[0, 1]].norm_sqr()
    }

    /// Entries rotated to the σ_z basis. States already tagged σ_z are
    /// returned as-is; the qubit eigenbasis (|±x⟩, ground first) rotates by
    /// the fixed Hadamard-like unitary.
    pub fn to_sigma_z_basis(&self) -> Array2<C64> {
        match self.basis {
            Basis::SigmaZ => self.matrix.clone(),
            Basis::QubitEigen => {
                // Columns |+x⟩, |-x⟩ expressed in the σ_z basis.
                let r = std::f64::consts::FRAC_1_SQRT_2;
                let u = ndarray::array![
                    [C64::new(r, 0.0), C64::new(r, 0.0)],
                    [C64::new(r, 0.0), C64::new(-r, 0.0)]
                ];
                u.dot(&self.matrix).dot(&linalg::dagger(&u.view()))
            }
        }
    }
}

/// Finite-difference scheme tag carried by derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeScheme {
    /// Closed-form derivative (tests, analytic families).
    Analytic,
    /// Central difference (ρ(x+δ) - ρ(x-δ))/(2δ).
    Central,
    /// Central differences at δ and δ/2 combined by Richardson
    /// extrapolation, (4 D_{δ/2} - D_δ)/3.
    CentralRichardson,
}

/// ∂_μρ with its provenance (parameter, step, scheme).
#[derive(Debug, Clone)]
pub struct ParamDerivative {
    pub label: ParamLabel,
    matrix: Array2<C64>,
    pub step: f64,
    pub scheme: DerivativeScheme,
    /// Two-step discrepancy max |D_δ - D_{δ/2}|, when measured.
    pub error_estimate: Option<f64>,
    pub basis: Basis,
}

impl ParamDerivative {
    /// Validate tracelessness (1e-8) and Hermiticity.
    pub fn new(
        label: ParamLabel,
        matrix: Array2<C64>,
        step: f64,
        scheme: DerivativeScheme,
        basis: Basis,
    ) -> QfimResultOf<Self> {
        if matrix.shape() != [2, 2] {
            return Err(QfimError::InvalidDerivative(format!(
                "expected 2x2, got {:?}",
                matrix.shape()
            )));
        }
        let herm = linalg::hermiticity_deviation(&matrix.view());
        let scale = matrix.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
        if herm > 1e-12 * scale {
            return Err(QfimError::InvalidDerivative(format!(
                "Hermiticity deviation {herm:.3e}"
            )));
        }
        let tr = (matrix[[0, 0]] + matrix[[1, 1]]).re.abs();
        if tr > 1e-8 * scale {
            return Err(QfimError::InvalidDerivative(format!(
                "trace {tr:.3e} deviates from 0 beyond 1e-8 (derivative of unit trace)"
            )));
        }
        Ok(ParamDerivative { label, matrix, step, scheme, error_estimate: None, basis })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }
}

/// One QFIM entry with its regularization report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QfimResult {
    pub mu: ParamLabel,
    pub nu: ParamLabel,
    /// F_μν in 1/(unit of x_μ · unit of x_ν).
    pub value: f64,
    /// Number of eigenpair (or determinant) terms dropped by the
    /// regularization threshold.
    pub n_dropped: usize,
}

/// Symmetric logarithmic derivative L_μ with ∂_μρ = ½(L_μρ + ρL_μ).
#[derive(Debug, Clone)]
pub struct SldOperator {
    pub label: ParamLabel,
    matrix: Array2<C64>,
    pub basis: Basis,
}

impl SldOperator {
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }
}

/// Default regularization threshold on λ_i + λ_j (and on det ρ).
pub const DEFAULT_EPS: f64 = 1e-12;

/// Real trace Tr[AB] of two Hermitian matrices, evaluated in a manifestly
/// A↔B symmetric form so route symmetry F_μν = F_νμ holds bit for bit.
fn herm_trace_product(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut tr = 0.0;
    for i in 0..n {
        tr += a[[i, i]].re * b[[i, i]].re;
        for j in i + 1..n {
            // A_ij B_ji + A_ji B_ij = 2 Re(A_ij conj(B_ij)).
            tr += 2.0 * (a[[i, j]].re * b[[i, j]].re + a[[i, j]].im * b[[i, j]].im);
        }
    }
    tr
}

fn check_pair_basis(rho: &QubitDensityMatrix, d: &ParamDerivative) -> QfimResultOf<()> {
    if rho.basis != d.basis {
        return Err(QfimError::BasisMismatch(rho.basis, d.basis));
    }
    Ok(())
}

/// Spectral-formula QFIM entry:
/// F_μν = Σ_{ij} 2 Re[⟨i|∂_μρ|j⟩⟨j|∂_νρ|i⟩]/(λ_i + λ_j), terms with
/// λ_i + λ_j < eps dropped and counted.
pub fn qfim_spectral(
    rho: &QubitDensityMatrix,
    d_mu: &ParamDerivative,
    d_nu: &ParamDerivative,
    eps: f64,
) -> QfimResultOf<QfimResult> {
    check_pair_basis(rho, d_mu)?;
    check_pair_basis(rho, d_nu)?;
    let (vals, vecs) = rho.eigen();
    let vdag = linalg::dagger(&vecs.view());
    let m_mu = vdag.dot(d_mu.matrix()).dot(&vecs);
    let m_nu = vdag.dot(d_nu.matrix()).dot(&vecs);
    let mut value = 0.0;
    let mut n_dropped = 0usize;
    for i in 0..2 {
        for j in 0..2 {
            let denom = vals[i] + vals[j];
            if denom < eps {
                n_dropped += 1;
                continue;
            }
            // Re(a b) for a = (m_mu)_ij, b = (m_nu)_ji = conj((m_nu)_ij):
            // symmetric under μ↔ν in floating point.
            let a = m_mu[[i, j]];
            let b = m_nu[[i, j]];
            let re = a.re * b.re + a.im * b.im;
            value += 2.0 * re / denom;
        }
    }
    Ok(QfimResult { mu: d_mu.label, nu: d_nu.label, value, n_dropped })
}

/// Closed-form qubit QFIM entry:
/// F_ab = 2 Tr[(∂_aρ)(∂_bρ)] + ¼ (∂_aP)(∂_bP)/det ρ with P = Tr ρ²; the
/// determinant term is dropped (and counted) when det ρ < eps.
pub fn qfim_qubit_closed(
    rho: &QubitDensityMatrix,
    d_a: &ParamDerivative,
    d_b: &ParamDerivative,
    eps: f64,
) -> QfimResultOf<QfimResult> {
    check_pair_basis(rho, d_a)?;
    check_pair_basis(rho, d_b)?;
    let t = herm_trace_product(d_a.matrix(), d_b.matrix());
    let mut value = 2.0 * t;
    let mut n_dropped = 0usize;
    let det = rho.det();
    if det < eps {
        n_dropped += 1;
    } else {
        let dp_a = 2.0 * herm_trace_product(rho.matrix(), d_a.matrix());
        let dp_b = 2.0 * herm_trace_product(rho.matrix(), d_b.matrix());
        value += 0.25 * dp_a * dp_b / det;
    }
    Ok(QfimResult { mu: d_a.label, nu: d_b.label, value, n_dropped })
}

/// Symmetric logarithmic derivative.
///
/// Full-rank states use L_ij = 2(∂ρ)_ij/(λ_i + λ_j) in the eigenbasis of ρ;
/// states that are pure to within eps use the shortcut L = 2 ∂ρ. A
/// rank-deficient state that is not pure cannot occur for a valid qubit ρ,
/// but the guard stays for defense in depth.
pub fn sld(
    rho: &QubitDensityMatrix,
    d_mu: &ParamDerivative,
    eps: f64,
) -> QfimResultOf<SldOperator> {
    check_pair_basis(rho, d_mu)?;
    let (vals, vecs) = rho.eigen();
    if vals[0] >= eps {
        let vdag = linalg::dagger(&vecs.view());
        let m = vdag.dot(d_mu.matrix()).dot(&vecs);
        let mut l = Array2::<C64>::zeros((2, 2));
        for i in 0..2 {
            for j in 0..2 {
                l[[i, j]] = 2.0 * m[[i, j]] / (vals[i] + vals[j]);
            }
        }
        let back = vecs.dot(&l).dot(&vdag);
        return Ok(SldOperator { label: d_mu.label, matrix: back, basis: d_mu.basis });
    }
    if (rho.purity() - 1.0).abs() < eps.sqrt() {
        return Ok(SldOperator {
            label: d_mu.label,
            matrix: d_mu.matrix().mapv(|z| 2.0 * z),
            basis: d_mu.basis,
        });
    }
    Err(QfimError::RankDeficient)
}

/// F_μν = ½ Tr(ρ{L_μ, L_ν}).
pub fn qfim_from_sld(
    rho: &QubitDensityMatrix,
    l_mu: &SldOperator,
    l_nu: &SldOperator,
) -> QfimResultOf<QfimResult> {
    if rho.basis != l_mu.basis {
        return Err(QfimError::BasisMismatch(rho.basis, l_mu.basis));
    }
    if rho.basis != l_nu.basis {
        return Err(QfimError::BasisMismatch(rho.basis, l_nu.basis));
    }
    let anti = l_mu.matrix().dot(l_nu.matrix()) + l_nu.matrix().dot(l_mu.matrix());
    let value = 0.5 * herm_trace_product(rho.matrix(), &anti);
    Ok(QfimResult { mu: l_mu.label, nu: l_nu.label, value, n_dropped: 0 })
}

/// Default finite-difference steps: δα = δβ = 1e-3, δΔ = 1e-3 Δ,
/// δh = max(1e-3 |h|, 1e-9 Δ). `delta_unit` is the model's Δ.
pub fn default_step(label: ParamLabel, x0: f64, delta_unit: f64) -> f64 {
    match label {
        ParamLabel::Alpha | ParamLabel::Beta => 1e-3,
        ParamLabel::Delta => 1e-3 * x0.abs().max(delta_unit),
        ParamLabel::H => (1e-3 * x0.abs()).max(1e-9 * delta_unit),
    }
}

/// Central finite difference of a density-matrix provider.
///
/// `provider` must be deterministic (same x → same ρ to 1e-10). With
/// `richardson` the stencil is evaluated at δ and δ/2 and extrapolated,
/// (4 D_{δ/2} - D_δ)/3, and the two-step discrepancy is reported as the
/// error estimate.
pub fn finite_diff_derivative<E: std::fmt::Display>(
    provider: impl Fn(f64) -> Result<QubitDensityMatrix, E>,
    label: ParamLabel,
    x0: f64,
    delta: f64,
    richardson: bool,
) -> QfimResultOf<ParamDerivative> {
    if !(delta > 0.0) {
        return Err(QfimError::InvalidDerivative(format!("step must be positive, got {delta}")));
    }
    let eval = |x: f64| -> QfimResultOf<QubitDensityMatrix> {
        provider(x).map_err(|e| QfimError::Provider { at: x, message: e.to_string() })
    };
    let central = |d: f64| -> QfimResultOf<(Array2<C64>, Basis)> {
        let plus = eval(x0 + d)?;
        let minus = eval(x0 - d)?;
        if plus.basis != minus.basis {
            return Err(QfimError::BasisMismatch(plus.basis, minus.basis));
        }
        let m = (plus.matrix() - minus.matrix()).mapv(|z| z / (2.0 * d));
        Ok((m, plus.basis))
    };
    let (d1, basis) = central(delta)?;
    if !richardson {
        // Trace cleanup: the difference of two unit traces carries only
        // round-off, remove it so downstream validation is exact.
        let m = detrace(d1);
        return Ok(ParamDerivative::new(label, m, delta, DerivativeScheme::Central, basis)?);
    }
    let (d2, _) = central(0.5 * delta)?;
    let discrepancy = (&d2 - &d1).iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let extrapolated = (d2.mapv(|z| 4.0 * z) - &d1).mapv(|z| z / 3.0);
    let mut out = ParamDerivative::new(
        label,
        detrace(extrapolated),
        delta,
        DerivativeScheme::CentralRichardson,
        basis,
    )?;
    out.error_estimate = Some(discrepancy);
    Ok(out)
}

/// Remove the (round-off sized) trace from a would-be traceless matrix.
fn detrace(mut m: Array2<C64>) -> Array2<C64> {
    let tr = (m[[0, 0]] + m[[1, 1]]) / 2.0;
    m[[0, 0]] -= tr;
    m[[1, 1]] -= tr;
    m
}

/// Uhlmann fidelity f(ρ₁, ρ₂) = Tr sqrt(sqrt(ρ₁) ρ₂ sqrt(ρ₁)).
///
/// Qubits admit the closed form
/// f = sqrt(Tr(ρ₁ρ₂) + 2 sqrt(det ρ₁ det ρ₂)); determinants are clamped to
/// [0, ∞) against validation slack and the result to [0, 1].
pub fn uhlmann_fidelity(
    rho1: &QubitDensityMatrix,
    rho2: &QubitDensityMatrix,
) -> QfimResultOf<f64> {
    if rho1.basis != rho2.basis {
        return Err(QfimError::BasisMismatch(rho1.basis, rho2.basis));
    }
    let tr = herm_trace_product(rho1.matrix(), rho2.matrix());
    let d1 = rho1.det().max(0.0);
    let d2 = rho2.det().max(0.0);
    let f2 = tr + 2.0 * (d1 * d2).sqrt();
    Ok(f2.max(0.0).sqrt().min(1.0))
}

/// QFI estimate from the Bures link: F ≈ 8(1 - f(ρ(x), ρ(x+δ)))/δ².
pub fn qfi_from_fidelity(
    rho_minus: &QubitDensityMatrix,
    rho_plus: &QubitDensityMatrix,
    delta: f64,
) -> QfimResultOf<f64> {
    let f = uhlmann_fidelity(rho_minus, rho_plus)?;
    Ok(8.0 * (1.0 - f) / (delta * delta))
}

/// Time derivative dF/dt of a uniformly sampled QFI trace: central
/// differences inside, one-sided second-order stencils at the ends.
pub fn qfi_flow(series: &TimeSeries) -> QfimResultOf<TimeSeries> {
    let n = series.len();
    if n < 3 {
        return Err(QfimError::FlowGrid(format!("{n} samples")));
    }
    let dt = series.dt;
    let v = &series.values;
    let mut out = Vec::with_capacity(n);
    out.push((-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dt));
    for k in 1..n - 1 {
        out.push((v[k + 1] - v[k - 1]) / (2.0 * dt));
    }
    out.push((3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dt));
    TimeSeries::new(series.t0, dt, out).map_err(|e| QfimError::FlowGrid(e.to_string()))
}

/// Serialize one QFIM row as CSV:
/// `mu,nu,<param columns>,F,n_dropped,derivative_error_estimate`.
pub fn qfim_csv_row(
    result: &QfimResult,
    params: &[(&str, f64)],
    error_estimate: Option<f64>,
) -> String {
    let mut row = format!("{},{}", result.mu, result.nu);
    for (_, v) in params {
        row.push_str(&format!(",{v:e}"));
    }
    row.push_str(&format!(",{:e},{}", result.value, result.n_dropped));
    match error_estimate {
        Some(e) => row.push_str(&format!(",{e:e}")),
        None => row.push(','),
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn half_sigma_x() -> Array2<C64> {
        array![[c(0.0, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.0, 0.0)]]
    }

    #[test]
    fn density_matrix_validation() {
        // Valid mixed state.
        assert!(QubitDensityMatrix::from_bloch(0.3, 0.2, -0.4, Basis::SigmaZ).is_ok());
        // Trace violation.
        let bad = array![[c(0.6, 0.0), c(0.0, 0.0)], [c(0.6, 0.0), c(0.6, 0.0)]];
        assert!(QubitDensityMatrix::new(bad, Basis::SigmaZ).is_err());
        // Bloch vector outside the ball -> negative eigenvalue.
        assert!(QubitDensityMatrix::from_bloch(0.9, 0.9, 0.9, Basis::SigmaZ).is_err());
    }

    #[test]
    fn pure_rotation_family_has_unit_qfi() {
        // ψ(θ) = exp(-iθσ_z/2)|+x⟩: ρ = ½(I + cosθ σ_x + sinθ σ_y),
        // ∂_θρ = ½(-sinθ σ_x + cosθ σ_y). At θ=0: ∂ρ = ½σ_y.
        let rho = QubitDensityMatrix::from_bloch(1.0, 0.0, 0.0, Basis::SigmaZ).unwrap();
        let dm = array![[c(0.0, 0.0), c(0.0, -0.5)], [c(0.0, 0.5), c(0.0, 0.0)]];
        let d = ParamDerivative::new(
            ParamLabel::H,
            dm,
            0.0,
            DerivativeScheme::Analytic,
            Basis::SigmaZ,
        )
        .unwrap();
        let spec = qfim_spectral(&rho, &d, &d, DEFAULT_EPS).unwrap();
        assert!((spec.value - 1.0).abs() < 1e-10, "spectral {}", spec.value);
        assert!(spec.n_dropped > 0, "pure state must drop dead eigenpairs");
        let closed = qfim_qubit_closed(&rho, &d, &d, DEFAULT_EPS).unwrap();
        assert!((closed.value - 1.0).abs() < 1e-10, "closed {}", closed.value);
        // Pure-state SLD shortcut: L = 2∂ρ, F = ½Tr(ρ{L,L}) = 1.
        let l = sld(&rho, &d, DEFAULT_EPS).unwrap();
        let via_sld = qfim_from_sld(&rho, &l, &l).unwrap();
        assert!((via_sld.value - 1.0).abs() < 1e-10, "sld {}", via_sld.value);
    }

    #[test]
    fn maximally_mixed_with_zero_derivative() {
        let rho = QubitDensityMatrix::from_bloch(0.0, 0.0, 0.0, Basis::SigmaZ).unwrap();
        let d = ParamDerivative::new(
            ParamLabel::Alpha,
            Array2::zeros((2, 2)),
            0.0,
            DerivativeScheme::Analytic,
            Basis::SigmaZ,
        )
        .unwrap();
        let f = qfim_spectral(&rho, &d, &d, DEFAULT_EPS).unwrap();
        assert_eq!(f.value, 0.0);
        assert_eq!(f.n_dropped, 0);
    }

    #[test]
    fn classical_binomial_family() {
        // ρ = diag(p, 1-p), ∂ρ = diag(1, -1): F = 1/p + 1/(1-p); at p=½, F=4.
        let rho = QubitDensityMatrix::from_bloch(0.0, 0.0, 0.0, Basis::SigmaZ).unwrap();
        let dm = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]];
        let d = ParamDerivative::new(
            ParamLabel::H,
            dm,
            0.0,
            DerivativeScheme::Analytic,
            Basis::SigmaZ,
        )
        .unwrap();
        for routes in [
            qfim_spectral(&rho, &d, &d, DEFAULT_EPS).unwrap(),
            qfim_qubit_closed(&rho, &d, &d, DEFAULT_EPS).unwrap(),
        ] {
            assert!((routes.value - 4.0).abs() < 1e-12, "{}", routes.value);
        }
        // Diagonal SLD: L = diag(1/p, -1/(1-p)) = diag(2, -2) at p = ½.
        let l = sld(&rho, &d, DEFAULT_EPS).unwrap();
        assert!((l.matrix()[[0, 0]] - c(2.0, 0.0)).norm() < 1e-12);
        assert!((l.matrix()[[1, 1]] - c(-2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sld_defining_equation_holds() {
        let rho = QubitDensityMatrix::from_bloch(0.2, -0.3, 0.4, Basis::SigmaZ).unwrap();
        let d = ParamDerivative::new(
            ParamLabel::Delta,
            half_sigma_x(),
            0.0,
            DerivativeScheme::Analytic,
            Basis::SigmaZ,
        )
        .unwrap();
        let l = sld(&rho, &d, DEFAULT_EPS).unwrap();
        let lhs = d.matrix();
        let rhs = (l.matrix().dot(rho.matrix()) + rho.matrix().dot(l.matrix())).mapv(|z| 0.5 * z);
        let dev = (lhs - &rhs).iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        assert!(dev < 1e-8, "SLD equation residual {dev:.3e}");
    }

    #[test]
    fn finite_difference_on_analytic_family() {
        // ρ(θ) = ½(I + sinθ σ_x + cosθ σ_z): ∂ρ(0) = ½σ_x.
        let provider = |theta: f64| {
            QubitDensityMatrix::from_bloch(theta.sin(), 0.0, theta.cos(), Basis::SigmaZ)
        };
        let d =
            finite_diff_derivative(provider, ParamLabel::H, 0.0, 1e-4, false).unwrap();
        let dev = (d.matrix() - &half_sigma_x())
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        assert!(dev < 1e-8, "central difference error {dev:.3e}");
        // Richardson gets closer and reports a discrepancy.
        let dr = finite_diff_derivative(provider, ParamLabel::H, 0.0, 1e-3, true).unwrap();
        let dev_r = (dr.matrix() - &half_sigma_x())
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        assert!(dev_r < 1e-10, "Richardson error {dev_r:.3e}");
        assert!(dr.error_estimate.unwrap() > 0.0);
    }

    #[test]
    fn constant_provider_gives_zero_derivative() {
        let provider =
            |_x: f64| QubitDensityMatrix::from_bloch(0.1, 0.2, 0.3, Basis::SigmaZ);
        let d = finite_diff_derivative(provider, ParamLabel::Alpha, 0.5, 1e-3, false).unwrap();
        assert!(d.matrix().iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn provider_failure_reports_offending_point() {
        let provider = |x: f64| {
            if x > 0.55 {
                Err("solver exploded".to_string())
            } else {
                QubitDensityMatrix::from_bloch(0.0, 0.0, 0.1, Basis::SigmaZ)
                    .map_err(|e| e.to_string())
            }
        };
        let err = finite_diff_derivative(provider, ParamLabel::Alpha, 0.5, 0.1, false)
            .err()
            .unwrap();
        match err {
            QfimError::Provider { at, .. } => assert!((at - 0.6).abs() < 1e-15),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn fidelity_limits() {
        let rho = QubitDensityMatrix::from_bloch(0.3, -0.1, 0.2, Basis::SigmaZ).unwrap();
        assert!((uhlmann_fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-12);
        let up = QubitDensityMatrix::from_bloch(0.0, 0.0, 1.0, Basis::SigmaZ).unwrap();
        let down = QubitDensityMatrix::from_bloch(0.0, 0.0, -1.0, Basis::SigmaZ).unwrap();
        assert!(uhlmann_fidelity(&up, &down).unwrap() < 1e-12);
    }

    #[test]
    fn flow_is_exact_on_quadratics() {
        let dt = 0.1;
        let vals: Vec<f64> = (0..50).map(|k| (k as f64 * dt) * (k as f64 * dt)).collect();
        let ts = TimeSeries::new(0.0, dt, vals).unwrap();
        let flow = qfi_flow(&ts).unwrap();
        for (k, f) in flow.values.iter().enumerate() {
            let expect = 2.0 * (k as f64 * dt);
            assert!((f - expect).abs() < 1e-8, "t={}: {f} vs {expect}", k as f64 * dt);
        }
        let constant = TimeSeries::new(0.0, dt, vec![3.0; 10]).unwrap();
        let flow = qfi_flow(&constant).unwrap();
        assert!(flow.values.iter().all(|f| f.abs() < 1e-12));
    }

    #[test]
    fn basis_mismatch_is_an_error() {
        let rho = QubitDensityMatrix::from_bloch(0.0, 0.0, 0.2, Basis::SigmaZ).unwrap();
        let d = ParamDerivative::new(
            ParamLabel::Alpha,
            half_sigma_x(),
            0.0,
            DerivativeScheme::Analytic,
            Basis::QubitEigen,
        )
        .unwrap();
        assert!(matches!(
            qfim_spectral(&rho, &d, &d, DEFAULT_EPS),
            Err(QfimError::BasisMismatch(..))
        ));
    }

    #[test]
    fn csv_row_shape() {
        let r = QfimResult { mu: ParamLabel::Alpha, nu: ParamLabel::Alpha, value: 7.7, n_dropped: 0 };
        let row = qfim_csv_row(&r, &[("alpha", 0.1), ("h", 1e-6)], Some(1e-9));
        assert_eq!(row.split(',').count(), 7);
        assert!(row.starts_with("alpha,alpha,"));
    }
}
