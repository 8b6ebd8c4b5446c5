//! Dense exact diagonalization on truncated Fock spaces.
//!
//! The brute-force reference solver: assembles the full Hamiltonian
//!
//! ```text
//! H = -(Δ/2)σ_x - (h/2)σ_z + Σ_i ω_i b_i†b_i
//!     + Σ_i (σ_z λ_i^z + σ_x λ_i^x)(b_i + b_i†)
//! ```
//!
//! as a dense matrix over the basis |spin⟩⊗|n_1⟩⊗…⊗|n_N⟩ with each mode
//! truncated at `local_dim` levels, then diagonalizes or time-evolves it
//! exactly. Everything downstream (DMRG energies, compressed time evolution,
//! reduced density matrices) is validated against this module on small
//! instances. A chain-basis builder assembles the same physics after the
//! star-to-chain mapping, so the tensor-network Hamiltonian can be checked
//! in its own geometry.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::model::{ChainGeometry, DiscretizedBath, ModelParams};

/// Errors from the exact-diagonalization layer.
#[derive(Debug, Error)]
pub enum EdError {
    #[error("Hilbert dimension {dim} exceeds the guard {limit}")]
    DimensionGuard { dim: usize, limit: usize },
    #[error("Fock truncation invalid: {0}")]
    InvalidTruncation(String),
    #[error("bath has {bath} modes but truncation expects {trunc}")]
    BathMismatch { bath: usize, trunc: usize },
    #[error("state has dimension {state}, operator expects {op}")]
    StateMismatch { state: usize, op: usize },
    #[error("matrix is not Hermitian: max |H - H†| = {deviation:.3e}")]
    NotHermitian { deviation: f64 },
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("Krylov expansion stalled: residual {residual:.3e} after {dim} vectors")]
    KrylovStall { residual: f64, dim: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type EdResult<T> = Result<T, EdError>;

/// Hard cap on the total Hilbert dimension 2·d^N.
pub const DIMENSION_GUARD: usize = 1 << 20;

/// Per-mode boson cutoff and mode count for the truncated product basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockTruncation {
    /// Levels kept per mode (occupations 0..local_dim-1).
    pub local_dim: usize,
    /// Number of bosonic modes.
    pub n_modes: usize,
}

impl FockTruncation {
    /// Validated constructor; enforces d ≥ 2, N ≤ 6, and 2·d^N ≤ 2²⁰.
    pub fn new(local_dim: usize, n_modes: usize) -> EdResult<Self> {
        if local_dim < 2 {
            return Err(EdError::InvalidTruncation(format!(
                "local_dim must be at least 2, got {local_dim}"
            )));
        }
        if n_modes > 6 {
            return Err(EdError::InvalidTruncation(format!(
                "dense ED supports at most 6 modes, got {n_modes}"
            )));
        }
        let t = FockTruncation { local_dim, n_modes };
        let dim = t.total_dim_checked()?;
        if dim > DIMENSION_GUARD {
            return Err(EdError::DimensionGuard { dim, limit: DIMENSION_GUARD });
        }
        Ok(t)
    }

    fn total_dim_checked(&self) -> EdResult<usize> {
        let mut dim: usize = 2;
        for _ in 0..self.n_modes {
            dim = dim.checked_mul(self.local_dim).ok_or(EdError::DimensionGuard {
                dim: usize::MAX,
                limit: DIMENSION_GUARD,
            })?;
        }
        Ok(dim)
    }

    /// Total Hilbert dimension 2·d^N.
    pub fn total_dim(&self) -> usize {
        2 * self.local_dim.pow(self.n_modes as u32)
    }
}

/// State vector over the product basis, spin index slowest, then modes in
/// ascending frequency (for a chain basis: in chain-site order, site 0
/// first).
#[derive(Debug, Clone)]
pub struct DenseState {
    pub amplitudes: Array1<C64>,
    pub trunc: FockTruncation,
}

impl DenseState {
    /// |↓⟩ ⊗ |vacuum⟩, the canonical dynamics initial state (σ_z|↓⟩ = -|↓⟩).
    pub fn spin_down_vacuum(trunc: FockTruncation) -> Self {
        let mut amplitudes = Array1::<C64>::zeros(trunc.total_dim());
        // Spin-down block starts at d^N; vacuum is its first element.
        amplitudes[trunc.total_dim() / 2] = C64::new(1.0, 0.0);
        DenseState { amplitudes, trunc }
    }

    /// Product of a qubit state (c_up, c_down) with the mode vacuum.
    pub fn qubit_vacuum(trunc: FockTruncation, c_up: C64, c_down: C64) -> Self {
        let norm = (c_up.norm_sqr() + c_down.norm_sqr()).sqrt();
        let mut amplitudes = Array1::<C64>::zeros(trunc.total_dim());
        amplitudes[0] = c_up / norm;
        amplitudes[trunc.total_dim() / 2] = c_down / norm;
        DenseState { amplitudes, trunc }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨ψ|O|ψ⟩ for a dense operator on the full space.
    pub fn expectation(&self, op: &Array2<C64>) -> EdResult<C64> {
        if op.nrows() != self.amplitudes.len() {
            return Err(EdError::StateMismatch { state: self.amplitudes.len(), op: op.nrows() });
        }
        let applied = op.dot(&self.amplitudes);
        Ok(self.amplitudes.iter().zip(applied.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    /// Reduced qubit density matrix: trace over all modes. With the spin
    /// index slowest this is a contiguous block contraction.
    pub fn reduced_qubit_rho(&self) -> Array2<C64> {
        let half = self.amplitudes.len() / 2;
        let up = self.amplitudes.slice(ndarray::s![..half]);
        let down = self.amplitudes.slice(ndarray::s![half..]);
        let mut rho = Array2::<C64>::zeros((2, 2));
        rho[[0, 0]] = up.iter().map(|z| z * z.conj()).sum();
        rho[[1, 1]] = down.iter().map(|z| z * z.conj()).sum();
        let cross: C64 = up.iter().zip(down.iter()).map(|(u, d)| u * d.conj()).sum();
        rho[[0, 1]] = cross;
        rho[[1, 0]] = cross.conj();
        rho
    }

    /// (⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩) of the reduced qubit state.
    pub fn pauli_expectations(&self) -> (f64, f64, f64) {
        let rho = self.reduced_qubit_rho();
        let x = 2.0 * rho[[0, 1]].re;
        let y = -2.0 * rho[[0, 1]].im;
        let z = (rho[[0, 0]] - rho[[1, 1]]).re;
        (x, y, z)
    }

    /// ⟨n_i⟩ for mode `mode` by digit extraction over basis indices.
    pub fn mode_occupation(&self, mode: usize) -> f64 {
        let d = self.trunc.local_dim;
        let n_modes = self.trunc.n_modes;
        assert!(mode < n_modes, "mode index out of range");
        // Index layout: ((spin*d + n_0)*d + n_1)*d + ... ; mode 0 slowest.
        let stride = d.pow((n_modes - 1 - mode) as u32);
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(idx, amp)| ((idx / stride) % d) as f64 * amp.norm_sqr())
            .sum()
    }
}

/// σ_x.
pub fn sigma_x() -> Array2<C64> {
    ndarray::array![
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    ]
}

/// σ_y.
pub fn sigma_y() -> Array2<C64> {
    ndarray::array![
        [C64::new(0.0, 0.0), C64::new(0.0, -1.0)],
        [C64::new(0.0, 1.0), C64::new(0.0, 0.0)]
    ]
}

/// σ_z.
pub fn sigma_z() -> Array2<C64> {
    ndarray::array![
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]
    ]
}

/// Annihilation operator on a d-level truncated mode: a|n⟩ = √n |n-1⟩.
pub fn boson_annihilation(d: usize) -> Array2<C64> {
    let mut a = Array2::<C64>::zeros((d, d));
    for n in 1..d {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Number operator a†a on a d-level mode.
pub fn boson_number(d: usize) -> Array2<C64> {
    Array2::from_diag(&Array1::from_iter((0..d).map(|n| C64::new(n as f64, 0.0))))
}

/// Position-like operator a + a† on a d-level mode.
pub fn boson_x(d: usize) -> Array2<C64> {
    let a = boson_annihilation(d);
    &a + &linalg::dagger(&a.view())
}

/// Qubit Hamiltonian H_Q = -(Δ/2)σ_x - (h/2)σ_z.
pub fn qubit_hamiltonian(params: &ModelParams) -> Array2<C64> {
    let mut h = sigma_x().mapv(|z| z * C64::new(-0.5 * params.delta, 0.0));
    h = h + sigma_z().mapv(|z| z * C64::new(-0.5 * params.h, 0.0));
    h
}

/// Embed `op` on mode `mode` (identity elsewhere, identity on the spin).
fn embed_mode_op(op: &Array2<C64>, mode: usize, trunc: FockTruncation) -> Array2<C64> {
    let d = trunc.local_dim;
    let mut out = Array2::<C64>::eye(2);
    for i in 0..trunc.n_modes {
        let factor = if i == mode { op.clone() } else { Array2::<C64>::eye(d) };
        out = linalg::kron(&out.view(), &factor.view());
    }
    out
}

/// Embed a spin operator (identity on all modes).
fn embed_spin_op(op: &Array2<C64>, trunc: FockTruncation) -> Array2<C64> {
    let d_modes = trunc.local_dim.pow(trunc.n_modes as u32);
    linalg::kron(&op.view(), &Array2::<C64>::eye(d_modes).view())
}

/// Embed spin_op ⊗ mode_op acting jointly on the spin and one mode.
fn embed_spin_mode_op(
    spin_op: &Array2<C64>,
    mode_op: &Array2<C64>,
    mode: usize,
    trunc: FockTruncation,
) -> Array2<C64> {
    let d = trunc.local_dim;
    let mut out = spin_op.clone();
    for i in 0..trunc.n_modes {
        let factor = if i == mode { mode_op.clone() } else { Array2::<C64>::eye(d) };
        out = linalg::kron(&out.view(), &factor.view());
    }
    out
}

fn check_hermitian(h: &Array2<C64>) -> EdResult<()> {
    let dev = linalg::hermiticity_deviation(&h.view());
    let scale = h.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
    if dev > 1e-13 * scale {
        return Err(EdError::NotHermitian { deviation: dev });
    }
    Ok(())
}

/// Assemble the full Hamiltonian in the star geometry (modes couple to the
/// spin directly). The bath zero-point constant Σω_i/2 is dropped.
pub fn build_dense_hamiltonian(
    params: &ModelParams,
    bath: &DiscretizedBath,
    trunc: FockTruncation,
) -> EdResult<Array2<C64>> {
    if bath.len() != trunc.n_modes {
        return Err(EdError::BathMismatch { bath: bath.len(), trunc: trunc.n_modes });
    }
    let d = trunc.local_dim;
    let mut h = embed_spin_op(&qubit_hamiltonian(params), trunc);
    let num = boson_number(d);
    let x = boson_x(d);
    let sz = sigma_z();
    let sx = sigma_x();
    for i in 0..trunc.n_modes {
        let w = bath.frequencies[i];
        h = h + embed_mode_op(&num.mapv(|z| z * C64::new(w, 0.0)), i, trunc);
        let lz = bath.couplings_z[i];
        if lz != 0.0 {
            h = h + embed_spin_mode_op(&sz.mapv(|z| z * C64::new(lz, 0.0)), &x, i, trunc);
        }
        let lx = bath.couplings_x[i];
        if lx != 0.0 {
            h = h + embed_spin_mode_op(&sx.mapv(|z| z * C64::new(lx, 0.0)), &x, i, trunc);
        }
    }
    check_hermitian(&h)?;
    Ok(h)
}

/// Assemble the same physics in the chain geometry: spin couples to site 0
/// through t0z σ_z + t0x σ_x, sites couple by nearest-neighbor hopping.
///
/// Used to validate the tensor-network Hamiltonian in its own basis; by
/// unitary equivalence of the chain mapping its spectrum matches the star
/// builder's.
pub fn build_dense_chain_hamiltonian(
    params: &ModelParams,
    chain: &ChainGeometry,
    t0z: f64,
    t0x: f64,
    trunc: FockTruncation,
) -> EdResult<Array2<C64>> {
    if chain.len() != trunc.n_modes {
        return Err(EdError::BathMismatch { bath: chain.len(), trunc: trunc.n_modes });
    }
    let d = trunc.local_dim;
    let mut h = embed_spin_op(&qubit_hamiltonian(params), trunc);
    let num = boson_number(d);
    let x = boson_x(d);
    let a = boson_annihilation(d);
    let adag = linalg::dagger(&a.view());
    for n in 0..chain.len() {
        h = h + embed_mode_op(&num.mapv(|z| z * C64::new(chain.onsite[n], 0.0)), n, trunc);
    }
    for n in 0..chain.hopping.len() {
        // t_n (a_n† a_{n+1} + a_{n+1}† a_n) via two-site embedding.
        let hop = linalg::kron(&adag.view(), &a.view()) + linalg::kron(&a.view(), &adag.view());
        let mut term = Array2::<C64>::eye(2);
        for i in 0..chain.len() {
            if i == n {
                term = linalg::kron(&term.view(), &hop.view());
            } else if i == n + 1 {
                continue; // consumed by the two-site block
            } else {
                term = linalg::kron(&term.view(), &Array2::<C64>::eye(d).view());
            }
        }
        h = h + term.mapv(|z| z * C64::new(chain.hopping[n], 0.0));
    }
    if t0z != 0.0 {
        let sz = sigma_z().mapv(|z| z * C64::new(t0z, 0.0));
        h = h + embed_spin_mode_op(&sz, &x, 0, trunc);
    }
    if t0x != 0.0 {
        let sx = sigma_x().mapv(|z| z * C64::new(t0x, 0.0));
        h = h + embed_spin_mode_op(&sx, &x, 0, trunc);
    }
    check_hermitian(&h)?;
    Ok(h)
}

/// Lowest eigenpair of a Hermitian matrix over the product basis.
///
/// Near-degenerate ground spaces (within 1e-12 absolute) are resolved by
/// picking the eigenvector with the largest overlap on |↓⟩⊗|vac⟩; the global
/// phase is fixed by making the largest-magnitude amplitude real positive.
pub fn ed_ground_state(h: &Array2<C64>, trunc: FockTruncation) -> EdResult<(f64, DenseState)> {
    check_hermitian(h)?;
    let (vals, vecs) = linalg::eigh_c(h)?;
    let e0 = vals[0];
    let down_vac = h.nrows() / 2;
    let mut best = 0usize;
    let mut best_overlap = -1.0f64;
    for (k, &e) in vals.iter().enumerate() {
        if e - e0 > 1e-12 {
            break;
        }
        let overlap = vecs[[down_vac, k]].norm_sqr();
        if overlap > best_overlap {
            best_overlap = overlap;
            best = k;
        }
    }
    let mut amplitudes = vecs.column(best).to_owned();
    // Phase convention.
    let (imax, _) = amplitudes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().partial_cmp(&b.1.norm_sqr()).unwrap())
        .unwrap();
    let z = amplitudes[imax];
    if z.norm() > 0.0 {
        let phase = z.conj() / z.norm();
        amplitudes.mapv_inplace(|a| a * phase);
    }
    Ok((vals[best], DenseState { amplitudes, trunc }))
}

/// How `ed_evolve` applies exp(-iH dt).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvolveMethod {
    /// Pick by dimension: full eigendecomposition up to 3000, Krylov above.
    Auto,
    /// One full eigendecomposition, then exact phases per step.
    Eigendecomposition,
    /// Lanczos-Krylov exp(-iH dt)ψ per step, subspace grown until the
    /// a-posteriori residual estimate drops below 1e-10, capped at 40.
    Krylov,
}

const EIGH_EVOLVE_LIMIT: usize = 3000;

/// Evolve `psi0` through `steps` steps of exp(-iH dt); returns the
/// trajectory including the initial state (length steps + 1).
pub fn ed_evolve(
    h: &Array2<C64>,
    psi0: &DenseState,
    dt: f64,
    steps: usize,
) -> EdResult<Vec<DenseState>> {
    ed_evolve_with_method(h, psi0, dt, steps, EvolveMethod::Auto)
}

/// `ed_evolve` with explicit method selection.
pub fn ed_evolve_with_method(
    h: &Array2<C64>,
    psi0: &DenseState,
    dt: f64,
    steps: usize,
    method: EvolveMethod,
) -> EdResult<Vec<DenseState>> {
    if !(dt > 0.0) {
        return Err(EdError::InvalidTimeStep(dt));
    }
    if h.nrows() != psi0.amplitudes.len() {
        return Err(EdError::StateMismatch { state: psi0.amplitudes.len(), op: h.nrows() });
    }
    check_hermitian(h)?;
    let method = match method {
        EvolveMethod::Auto if h.nrows() <= EIGH_EVOLVE_LIMIT => EvolveMethod::Eigendecomposition,
        EvolveMethod::Auto => EvolveMethod::Krylov,
        m => m,
    };
    match method {
        EvolveMethod::Eigendecomposition => evolve_eigh(h, psi0, dt, steps),
        EvolveMethod::Krylov => evolve_krylov(h, psi0, dt, steps),
        EvolveMethod::Auto => unreachable!(),
    }
}

fn evolve_eigh(
    h: &Array2<C64>,
    psi0: &DenseState,
    dt: f64,
    steps: usize,
) -> EdResult<Vec<DenseState>> {
    let (vals, vecs) = linalg::eigh_c(h)?;
    let vdag = linalg::dagger(&vecs.view());
    let mut coeffs = vdag.dot(&psi0.amplitudes);
    let phases: Array1<C64> = vals.mapv(|w| (C64::new(0.0, -1.0) * w * dt).exp());
    let mut out = Vec::with_capacity(steps + 1);
    out.push(psi0.clone());
    for _ in 0..steps {
        coeffs.zip_mut_with(&phases, |c, p| *c *= p);
        let amplitudes = vecs.dot(&coeffs);
        out.push(DenseState { amplitudes, trunc: psi0.trunc });
    }
    Ok(out)
}

const KRYLOV_CAP: usize = 40;
const KRYLOV_TOL: f64 = 1e-10;

/// One Krylov step: w = exp(-iH dt) v for unit v, Lanczos with full
/// reorthogonalization. The subspace grows until the standard a-posteriori
/// estimate |β_m (exp(-i dt T))_{m,0}| falls below tolerance.
fn krylov_step(h: &Array2<C64>, v0: &Array1<C64>, dt: f64) -> EdResult<Array1<C64>> {
    let n = v0.len();
    let mut basis: Vec<Array1<C64>> = vec![v0.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut result: Option<Array1<C64>> = None;
    let mut residual = f64::INFINITY;

    for m in 1..=KRYLOV_CAP {
        let vj = &basis[m - 1];
        let mut w = h.dot(vj);
        if m >= 2 {
            let b = C64::new(betas[m - 2], 0.0);
            w.zip_mut_with(&basis[m - 2], |wi, vi| *wi -= b * vi);
        }
        let alpha: C64 = vj.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
        let alpha = alpha.re;
        {
            let a = C64::new(alpha, 0.0);
            w.zip_mut_with(vj, |wi, vi| *wi -= a * vi);
        }
        // Full reorthogonalization.
        for q in &basis {
            let proj: C64 = q.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
            w.zip_mut_with(q, |wi, qi| *wi -= proj * qi);
        }
        alphas.push(alpha);
        let beta = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

        // Project the propagator on the current m-dimensional subspace.
        let mut t = Array2::<C64>::zeros((m, m));
        for i in 0..m {
            t[[i, i]] = C64::new(alphas[i], 0.0);
            if i + 1 < m {
                t[[i, i + 1]] = C64::new(betas[i], 0.0);
                t[[i + 1, i]] = C64::new(betas[i], 0.0);
            }
        }
        let u = linalg::expm(&t.mapv(|z| z * C64::new(0.0, -dt)))?;
        residual = beta * u[[m - 1, 0]].norm();
        if residual < KRYLOV_TOL || beta < 1e-14 || m == KRYLOV_CAP {
            let mut out = Array1::<C64>::zeros(n);
            for (i, q) in basis.iter().enumerate() {
                let c = u[[i, 0]];
                out.zip_mut_with(q, |o, qi| *o += c * qi);
            }
            result = Some(out);
            if residual < KRYLOV_TOL || beta < 1e-14 {
                break;
            }
        }
        if beta < 1e-14 {
            break;
        }
        betas.push(beta);
        basis.push(w.mapv(|z| z / beta));
    }

    match result {
        Some(out) if residual < KRYLOV_TOL => Ok(out),
        Some(_) | None => Err(EdError::KrylovStall { residual, dim: basis.len() }),
    }
}

fn evolve_krylov(
    h: &Array2<C64>,
    psi0: &DenseState,
    dt: f64,
    steps: usize,
) -> EdResult<Vec<DenseState>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(psi0.clone());
    let mut v = psi0.amplitudes.clone();
    for _ in 0..steps {
        v = krylov_step(h, &v, dt)?;
        // Unitary step up to the residual tolerance; renormalize to keep
        // drift from accumulating over long runs.
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.mapv_inplace(|z| z / norm);
        out.push(DenseState { amplitudes: v.clone(), trunc: psi0.trunc });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_guard_rejects_blowup() {
        assert!(FockTruncation::new(2, 6).is_ok());
        assert!(matches!(
            FockTruncation::new(1, 2),
            Err(EdError::InvalidTruncation(_))
        ));
        assert!(matches!(
            FockTruncation::new(4, 7),
            Err(EdError::InvalidTruncation(_))
        ));
        // 2 * 12^6 = 5.97e6 > 2^20.
        assert!(matches!(
            FockTruncation::new(12, 6),
            Err(EdError::DimensionGuard { .. })
        ));
    }

    #[test]
    fn boson_operators_satisfy_commutator() {
        let d = 8;
        let a = boson_annihilation(d);
        let adag = linalg::dagger(&a.view());
        let comm = a.dot(&adag) - adag.dot(&a);
        // [a, a†] = 1 except in the top truncated corner.
        for i in 0..d - 1 {
            assert!((comm[[i, i]] - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
        assert!((comm[[d - 1, d - 1]] - C64::new(1.0 - d as f64, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn spin_down_vacuum_has_expected_observables() {
        let trunc = FockTruncation::new(3, 2).unwrap();
        let psi = DenseState::spin_down_vacuum(trunc);
        assert!((psi.norm() - 1.0).abs() < 1e-15);
        let (x, y, z) = psi.pauli_expectations();
        assert!(x.abs() < 1e-15 && y.abs() < 1e-15);
        assert!((z + 1.0).abs() < 1e-15);
        assert!(psi.mode_occupation(0) < 1e-15);
        assert!(psi.mode_occupation(1) < 1e-15);
    }
}
