//! Generalized spin-boson model: parameters, spectral density, bath
//! discretization, and the star-to-chain mapping.
//!
//! The Hamiltonian is
//!
//! ```text
//! H = -(Δ/2)σ_x - (h/2)σ_z + Σ_i ω_i b_i†b_i
//!     + Σ_i (σ_z λ_i^z + σ_x λ_i^x)(b_i + b_i†)
//! ```
//!
//! with couplings sampled from the Ohmic-family spectral density
//! J(ω) = (α/2) ω_c^{1-s} ω^s Θ(ω_c - ω) for the σ_z channel and the same
//! form with β in place of α for the σ_x channel. Discretization assigns
//! λ_i² as exact interval integrals of J, so the sum rule Σλ_i² = ∫J holds
//! by construction. The star of modes is turned into a nearest-neighbor
//! chain by Lanczos tridiagonalization of diag(ω) started from λ/‖λ‖ with
//! full reorthogonalization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from model construction and evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("spectral density is undefined for negative frequency {omega}")]
    NegativeFrequency { omega: f64 },
    #[error("bath and parameters disagree: {0}")]
    Inconsistent(String),
}

pub type ModelResult<T> = Result<T, ModelError>;

/// Which interaction channel a quantity refers to: σ_z (coupling α) or
/// σ_x (coupling β).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Z,
    X,
}

/// Frequency-grid layout used when partitioning (0, ω_c] into intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum BathScheme {
    /// Equal-width intervals.
    Linear,
    /// Intervals whose right edges are log-spaced over `decades` decades
    /// below ω_c; resolves the ω → 0 region for small-coupling studies.
    Logarithmic { decades: f64 },
}

impl BathScheme {
    /// Logarithmic layout with the default span of 6 decades.
    pub fn logarithmic() -> Self {
        BathScheme::Logarithmic { decades: 6.0 }
    }
}

/// All physical knobs of the generalized spin-boson Hamiltonian.
///
/// `delta` is the unit of energy; defaults elsewhere in the crate assume
/// `s = 1` (Ohmic) and `omega_c = 10 delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Tunneling amplitude Δ > 0 (energy unit).
    pub delta: f64,
    /// Bias field h on σ_z.
    pub h: f64,
    /// Dimensionless amplitude-damping coupling α ≥ 0 (σ_z channel).
    pub alpha: f64,
    /// Dimensionless dephasing coupling β ≥ 0 (σ_x channel).
    pub beta: f64,
    /// Ohmicity exponent s > 0.
    pub s: f64,
    /// Hard cutoff frequency ω_c > 0.
    pub omega_c: f64,
    /// Number of discretized bath modes N ≥ 1.
    pub n_modes: usize,
}

impl ModelParams {
    /// Ohmic defaults: s = 1, ω_c = 10Δ, β = 0.
    pub fn ohmic(delta: f64, alpha: f64, h: f64, n_modes: usize) -> ModelResult<Self> {
        let p = ModelParams {
            delta,
            h,
            alpha,
            beta: 0.0,
            s: 1.0,
            omega_c: 10.0 * delta,
            n_modes,
        };
        p.validate()?;
        Ok(p)
    }

    /// Validate the parameter invariants.
    pub fn validate(&self) -> ModelResult<()> {
        let bad = |msg: String| Err(ModelError::InvalidParams(msg));
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.omega_c > 0.0) {
            return bad(format!("omega_c must be positive, got {}", self.omega_c));
        }
        if self.n_modes < 1 {
            return bad("n_modes must be at least 1".into());
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.s > 0.0) {
            return bad(format!("s must be positive, got {}", self.s));
        }
        if !self.h.is_finite() {
            return bad(format!("h must be finite, got {}", self.h));
        }
        Ok(())
    }

    fn channel_coupling(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Z => self.alpha,
            Channel::X => self.beta,
        }
    }
}

/// Spectral density J(ω) = (c/2) ω_c^{1-s} ω^s on [0, ω_c], zero above the
/// hard cutoff, with c = α (z channel) or c = β (x channel).
pub fn spectral_density(omega: f64, params: &ModelParams, channel: Channel) -> ModelResult<f64> {
    params.validate()?;
    if omega < 0.0 {
        return Err(ModelError::NegativeFrequency { omega });
    }
    if omega > params.omega_c {
        return Ok(0.0);
    }
    let c = params.channel_coupling(channel);
    Ok(0.5 * c * params.omega_c.powf(1.0 - params.s) * omega.powf(params.s))
}

/// Exact ∫_a^b J(ω) dω for the power-law density, with [a, b] clipped to
/// [0, ω_c].
pub fn spectral_density_integral(
    a: f64,
    b: f64,
    params: &ModelParams,
    channel: Channel,
) -> ModelResult<f64> {
    params.validate()?;
    if a < 0.0 {
        return Err(ModelError::NegativeFrequency { omega: a });
    }
    let lo = a.min(params.omega_c);
    let hi = b.min(params.omega_c);
    if hi <= lo {
        return Ok(0.0);
    }
    let c = params.channel_coupling(channel);
    let sp1 = params.s + 1.0;
    Ok(0.5 * c * params.omega_c.powf(1.0 - params.s) * (hi.powf(sp1) - lo.powf(sp1)) / sp1)
}

/// A bath of discrete modes sampled from the continuous spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedBath {
    /// Mode frequencies, strictly increasing, all in (0, ω_c].
    pub frequencies: Vec<f64>,
    /// σ_z-channel couplings λ_i^z ≥ 0.
    pub couplings_z: Vec<f64>,
    /// σ_x-channel couplings λ_i^x ≥ 0.
    pub couplings_x: Vec<f64>,
    /// Grid layout the bath was generated with.
    pub scheme: BathScheme,
}

impl DiscretizedBath {
    /// Number of modes.
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Couplings of the requested channel.
    pub fn couplings(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Z => &self.couplings_z,
            Channel::X => &self.couplings_x,
        }
    }

    /// Σ_i λ_i² for a channel.
    pub fn coupling_weight(&self, channel: Channel) -> f64 {
        self.couplings(channel).iter().map(|l| l * l).sum()
    }

    /// Check structural invariants: matching lengths and a strictly
    /// increasing positive frequency grid.
    pub fn validate(&self, params: &ModelParams) -> ModelResult<()> {
        let n = self.frequencies.len();
        if n != params.n_modes || self.couplings_z.len() != n || self.couplings_x.len() != n {
            return Err(ModelError::Inconsistent(format!(
                "expected {} modes, got {} frequencies / {} z-couplings / {} x-couplings",
                params.n_modes,
                n,
                self.couplings_z.len(),
                self.couplings_x.len()
            )));
        }
        let mut prev = 0.0;
        for &w in &self.frequencies {
            if w <= prev || w > params.omega_c * (1.0 + 1e-12) {
                return Err(ModelError::Inconsistent(format!(
                    "frequencies must be strictly increasing in (0, omega_c], found {w}"
                )));
            }
            prev = w;
        }
        Ok(())
    }

    /// If the two channels couple to the bath proportionally, returns the
    /// ratio r with λ^x = r λ^z (or the z channel all-zero case mapped onto
    /// the x channel, see [`shared_chain`]). Non-proportional two-channel
    /// baths return `None` and must be handled in the star geometry.
    pub fn proportionality_ratio(&self) -> Option<f64> {
        let wz = self.coupling_weight(Channel::Z);
        let wx = self.coupling_weight(Channel::X);
        if wx == 0.0 {
            return Some(0.0);
        }
        if wz == 0.0 {
            return None; // x-only bath: not expressible as r * λ^z
        }
        let r = (wx / wz).sqrt();
        let tol = 1e-10 * (wz.sqrt() + wx.sqrt());
        for (lz, lx) in self.couplings_z.iter().zip(&self.couplings_x) {
            if (lx - r * lz).abs() > tol {
                return None;
            }
        }
        Some(r)
    }
}

/// Interval boundaries partitioning (0, ω_c] for a scheme.
fn interval_boundaries(params: &ModelParams, scheme: BathScheme) -> Vec<f64> {
    let n = params.n_modes;
    let wc = params.omega_c;
    let mut b = Vec::with_capacity(n + 1);
    match scheme {
        BathScheme::Linear => {
            for i in 0..=n {
                b.push(wc * i as f64 / n as f64);
            }
        }
        BathScheme::Logarithmic { decades } => {
            b.push(0.0);
            for i in 1..=n {
                let exp = -decades * (1.0 - i as f64 / n as f64);
                b.push(wc * 10f64.powf(exp));
            }
        }
    }
    b
}

/// Discretize the continuous bath into `params.n_modes` modes.
///
/// Frequencies are interval midpoints; couplings obey
/// λ_i² = ∫_{interval i} J(ω) dω exactly, so Σλ_i² = ∫_0^{ω_c} J for each
/// channel with no quadrature error.
pub fn discretize_bath(params: &ModelParams, scheme: BathScheme) -> ModelResult<DiscretizedBath> {
    params.validate()?;
    if let BathScheme::Logarithmic { decades } = scheme {
        if !(decades > 0.0) {
            return Err(ModelError::InvalidParams(format!(
                "logarithmic scheme needs positive decades, got {decades}"
            )));
        }
    }
    let bounds = interval_boundaries(params, scheme);
    let n = params.n_modes;
    let mut frequencies = Vec::with_capacity(n);
    let mut couplings_z = Vec::with_capacity(n);
    let mut couplings_x = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = (bounds[i], bounds[i + 1]);
        frequencies.push(0.5 * (lo + hi));
        couplings_z.push(spectral_density_integral(lo, hi, params, Channel::Z)?.sqrt());
        couplings_x.push(spectral_density_integral(lo, hi, params, Channel::X)?.sqrt());
    }
    let bath = DiscretizedBath { frequencies, couplings_z, couplings_x, scheme };
    bath.validate(params)?;
    Ok(bath)
}

/// Tridiagonal chain obtained from the star geometry by Lanczos.
///
/// Site n has on-site energy ε_n; site n couples to site n+1 with hopping
/// t_n; the spin couples to site 0 with `edge_coupling` = ‖λ‖.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGeometry {
    /// On-site energies ε_n.
    pub onsite: Vec<f64>,
    /// Hoppings t_n between neighboring sites (length = len(onsite) - 1).
    pub hopping: Vec<f64>,
    /// Spin-to-first-site coupling t₀ = sqrt(Σλ_i²).
    pub edge_coupling: f64,
}

impl ChainGeometry {
    /// Number of chain sites.
    pub fn len(&self) -> usize {
        self.onsite.len()
    }

    /// An empty chain marks an uncoupled channel; solvers treat the spin as
    /// closed.
    pub fn is_empty(&self) -> bool {
        self.onsite.is_empty()
    }

    /// Eigenvalues of the tridiagonal single-particle matrix (ascending).
    /// By unitary equivalence these reproduce the source bath frequencies.
    pub fn eigenvalues(&self) -> crate::linalg::LinalgResult<ndarray::Array1<f64>> {
        crate::linalg::eigvals_sym_tridiag(&self.onsite, &self.hopping)
    }

    /// Write the chain as CSV with columns `n, epsilon, t` (the hopping on
    /// the last row is empty).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,epsilon,t")?;
        for (n, eps) in self.onsite.iter().enumerate() {
            if n < self.hopping.len() {
                writeln!(w, "{},{:e},{:e}", n, eps, self.hopping[n])?;
            } else {
                writeln!(w, "{},{:e},", n, eps)?;
            }
        }
        Ok(())
    }
}

/// Map one bath channel onto a nearest-neighbor chain.
///
/// Lanczos tridiagonalization of diag(ω) with start vector λ/‖λ‖ and full
/// reorthogonalization (twice-applied classical Gram-Schmidt). Modes with
/// zero coupling reduce the Krylov dimension, so the chain can come out
/// shorter than the bath; an entirely uncoupled channel yields the flagged
/// empty chain.
pub fn chain_map(bath: &DiscretizedBath, channel: Channel) -> ChainGeometry {
    let lambdas = bath.couplings(channel);
    let omegas = &bath.frequencies;
    let n = omegas.len();
    let weight: f64 = lambdas.iter().map(|l| l * l).sum();
    if weight <= 0.0 {
        return ChainGeometry { onsite: Vec::new(), hopping: Vec::new(), edge_coupling: 0.0 };
    }
    let edge = weight.sqrt();
    let scale = omegas.iter().fold(0.0f64, |m, &w| m.max(w.abs()));

    let mut onsite = Vec::with_capacity(n);
    let mut hopping = Vec::with_capacity(n.saturating_sub(1));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);

    let mut v: Vec<f64> = lambdas.iter().map(|l| l / edge).collect();
    basis.push(v.clone());
    let mut v_prev = vec![0.0; n];
    let mut beta_prev = 0.0;

    for _ in 0..n {
        // w = diag(ω) v - β_{j-1} v_{j-1}
        let mut w: Vec<f64> = v.iter().zip(omegas).map(|(x, o)| x * o).collect();
        for (wi, vp) in w.iter_mut().zip(&v_prev) {
            *wi -= beta_prev * vp;
        }
        let alpha: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi -= alpha * vi;
        }
        // Full reorthogonalization, applied twice.
        for _ in 0..2 {
            for q in &basis {
                let proj: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= proj * qi;
                }
            }
        }
        onsite.push(alpha);
        let beta: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if beta <= 1e-14 * scale || basis.len() == n {
            break;
        }
        hopping.push(beta);
        v_prev = std::mem::take(&mut v);
        v = w.into_iter().map(|x| x / beta).collect();
        basis.push(v.clone());
        beta_prev = beta;
    }

    ChainGeometry { onsite, hopping, edge_coupling: edge }
}

/// Shared-chain reduction for two-channel baths with proportional couplings.
///
/// When λ^x = r λ^z (or one channel is zero), both interaction terms couple
/// the spin to the same chain through site 0:
/// H_I = (t₀^z σ_z + t₀^x σ_x)(a_0 + a_0†). Returns the chain plus the two
/// edge couplings. Non-proportional baths return `None`; they stay in the
/// star geometry, which dense ED and the tensor-network layer both handle
/// directly.
pub fn shared_chain(bath: &DiscretizedBath) -> Option<(ChainGeometry, f64, f64)> {
    let wz = bath.coupling_weight(Channel::Z);
    let wx = bath.coupling_weight(Channel::X);
    if wz == 0.0 && wx == 0.0 {
        let chain = ChainGeometry { onsite: Vec::new(), hopping: Vec::new(), edge_coupling: 0.0 };
        return Some((chain, 0.0, 0.0));
    }
    if wz == 0.0 {
        let chain = chain_map(bath, Channel::X);
        let t0x = chain.edge_coupling;
        return Some((chain, 0.0, t0x));
    }
    bath.proportionality_ratio().map(|r| {
        let chain = chain_map(bath, Channel::Z);
        let t0z = chain.edge_coupling;
        (chain, t0z, r * t0z)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, n: usize) -> ModelParams {
        ModelParams::ohmic(1.0, alpha, 0.0, n).unwrap()
    }

    #[test]
    fn spectral_density_ohmic_values() {
        let p = params(0.1, 10);
        // J(Δ) = (α/2)Δ at s = 1.
        assert!((spectral_density(1.0, &p, Channel::Z).unwrap() - 0.05).abs() < 1e-15);
        // Hard cutoff above ω_c.
        assert_eq!(spectral_density(11.0, &p, Channel::Z).unwrap(), 0.0);
        // Decoupled channel.
        assert_eq!(spectral_density(5.0, &p, Channel::X).unwrap(), 0.0);
        // Negative frequency is a domain error.
        assert!(matches!(
            spectral_density(-0.1, &p, Channel::Z),
            Err(ModelError::NegativeFrequency { .. })
        ));
    }

    #[test]
    fn coupling_sum_rule_is_exact() {
        for &n in &[1usize, 7, 150, 600] {
            let p = params(0.1, n);
            let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
            // Σλ² = (α/4) ω_c² = 2.5 Δ².
            let w = bath.coupling_weight(Channel::Z);
            assert!((w - 2.5).abs() < 1e-12 * 2.5, "N={n}: {w}");
        }
    }

    #[test]
    fn zero_couplings_for_decoupled_bath() {
        let mut p = params(0.0, 8);
        p.beta = 0.0;
        let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
        assert!(bath.couplings_z.iter().all(|&l| l == 0.0));
        assert!(bath.couplings_x.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn linear_discretization_shape() {
        let p = params(0.1, 600);
        let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
        assert_eq!(bath.len(), 600);
        assert!(bath.frequencies.iter().all(|&w| w > 0.0 && w <= 10.0));
        assert!(bath.frequencies.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn logarithmic_discretization_resolves_low_frequencies() {
        let p = params(0.1, 100);
        let bath = discretize_bath(&p, BathScheme::logarithmic()).unwrap();
        assert_eq!(bath.len(), 100);
        assert!(bath.frequencies[0] < 1e-4 * p.omega_c);
        assert!(bath.frequencies.windows(2).all(|w| w[1] > w[0]));
        // Sum rule still exact.
        let w = bath.coupling_weight(Channel::Z);
        assert!((w - 2.5).abs() < 1e-12 * 2.5);
    }

    #[test]
    fn single_mode_chain_is_the_mode_itself() {
        let bath = DiscretizedBath {
            frequencies: vec![2.0],
            couplings_z: vec![0.3],
            couplings_x: vec![0.0],
            scheme: BathScheme::Linear,
        };
        let chain = chain_map(&bath, Channel::Z);
        assert_eq!(chain.len(), 1);
        assert!((chain.onsite[0] - 2.0).abs() < 1e-15);
        assert!(chain.hopping.is_empty());
        assert!((chain.edge_coupling - 0.3).abs() < 1e-15);
    }

    #[test]
    fn uncoupled_channel_gives_flagged_empty_chain() {
        let p = params(0.2, 5);
        let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
        let chain = chain_map(&bath, Channel::X);
        assert!(chain.is_empty());
        assert_eq!(chain.edge_coupling, 0.0);
    }

    #[test]
    fn edge_coupling_is_total_weight() {
        let p = params(0.37, 40);
        let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
        let chain = chain_map(&bath, Channel::Z);
        let expect = bath.coupling_weight(Channel::Z).sqrt();
        assert!((chain.edge_coupling - expect).abs() < 1e-10 * expect);
        assert_eq!(chain.len(), 40);
    }

    #[test]
    fn proportional_two_channel_bath_shares_one_chain() {
        let mut p = params(0.2, 12);
        p.beta = 0.05;
        let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
        let r = bath.proportionality_ratio().expect("same-shape channels are proportional");
        assert!((r - (0.05f64 / 0.2).sqrt()).abs() < 1e-12);
        let (chain, t0z, t0x) = shared_chain(&bath).unwrap();
        assert_eq!(chain.len(), 12);
        assert!((t0x - r * t0z).abs() < 1e-12);
    }

    #[test]
    fn non_proportional_bath_keeps_star_geometry() {
        let bath = DiscretizedBath {
            frequencies: vec![1.0, 2.0],
            couplings_z: vec![0.5, 0.1],
            couplings_x: vec![0.1, 0.5],
            scheme: BathScheme::Linear,
        };
        assert!(bath.proportionality_ratio().is_none());
        assert!(shared_chain(&bath).is_none());
    }

    #[test]
    fn chain_csv_has_unit_headers() {
        let p = params(0.1, 3);
        let bath = discretize_bath(&p, BathScheme::Linear).unwrap();
        let chain = chain_map(&bath, Channel::Z);
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,epsilon,t\n"));
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().ends_with(','));
    }
}
