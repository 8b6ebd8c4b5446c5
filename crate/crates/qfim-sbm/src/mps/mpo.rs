//! Matrix product operators for the chain-mapped spin-boson Hamiltonian.
//!
//! MPO site tensors are rank-4, indexed `[left bond, phys out, phys in,
//! right bond]`. The Hamiltonian is laid out as a finite-state machine with
//! bond states ordered `[done, carry_1.., carry_k, idle]`:
//!
//! ```text
//! W[done,  done]   = 1        W[idle, done]    = D   (on-site term)
//! W[carry_i, done] = B_i      W[idle, carry_j] = C_j (interaction start)
//! W[carry_i, carry_j] = A_ij  W[idle, idle]    = 1
//! ```
//!
//! The left boundary keeps only the idle row, the right boundary only the
//! done column, so contracting all sites reproduces H exactly. The block
//! decomposition (D, C, B, A) is retained on the operator because the
//! second-order propagator construction in [`super::wii_evolve`] is defined
//! in terms of it, not in terms of the assembled tensors.
//!
//! Layouts: a single bath channel, or two channels with proportional
//! couplings, reduce to one chain with edge operator t0z σ_z + t0x σ_x
//! (spin bond dimension 3, bulk 4). Non-proportional two-channel baths stay
//! in the star geometry: modes keep their original frequencies, the spin
//! sits at site 0, and the σ_z / σ_x factors are carried across the chain by
//! identity pass-throughs, completing at each mode with its own coupling
//! weight (bond dimension 4 throughout). A chain map cannot serve both
//! channels at once, since two non-collinear coupling vectors have no common
//! Krylov basis.

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use super::{MpsError, MpsResult};
use crate::ed::{boson_annihilation, boson_x, qubit_hamiltonian, sigma_x, sigma_z};
use crate::linalg;
use crate::model::{shared_chain, ChainGeometry, DiscretizedBath, ModelParams};
use crate::C64;

/// Operator blocks of one MPO site in the finite-state-machine layout.
#[derive(Debug, Clone)]
pub(crate) struct SiteBlocks {
    /// On-site term D (idle to done).
    pub onsite: Array2<C64>,
    /// Interaction starts C_j, indexed by the right-bond carry they open.
    pub starts: Vec<Array2<C64>>,
    /// Interaction completions B_i, indexed by the left-bond carry they close.
    pub completions: Vec<Array2<C64>>,
    /// Pass-throughs A_ij (left carry i continues as right carry j).
    pub passes: Vec<Vec<Array2<C64>>>,
}

impl SiteBlocks {
    fn phys_dim(&self) -> usize {
        self.onsite.nrows()
    }
}

/// Spatial layout of the bath behind the spin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ChainLayout {
    /// One chain-mapped bath; the spin couples to its first site through
    /// (t0z σ_z + t0x σ_x)(b + b†). Covers single-channel baths and
    /// two-channel baths with proportional couplings.
    Shared { chain: ChainGeometry, t0z: f64, t0x: f64 },
    /// Non-proportional channels keep the discretized modes as-is; the spin
    /// couples to every mode through σ_z λ_i^z + σ_x λ_i^x.
    Star { bath: DiscretizedBath },
}

impl ChainLayout {
    /// Choose the layout for a discretized bath: a shared chain whenever the
    /// couplings are proportional (or one channel vanishes), otherwise the
    /// star.
    pub fn from_bath(bath: &DiscretizedBath) -> Self {
        match shared_chain(bath) {
            Some((chain, t0z, t0x)) => ChainLayout::Shared { chain, t0z, t0x },
            None => ChainLayout::Star { bath: bath.clone() },
        }
    }

    /// Number of bosonic sites.
    pub fn n_chain_sites(&self) -> usize {
        match self {
            ChainLayout::Shared { chain, .. } => chain.len(),
            ChainLayout::Star { bath } => bath.len(),
        }
    }

    /// Total site count including the spin.
    pub fn n_sites(&self) -> usize {
        1 + self.n_chain_sites()
    }
}

/// Matrix product operator with physical dims matching the state.
#[derive(Debug, Clone)]
pub struct MatrixProductOperator {
    tensors: Vec<Array4<C64>>,
    blocks: Option<Vec<SiteBlocks>>,
}

impl MatrixProductOperator {
    pub(crate) fn from_tensors(tensors: Vec<Array4<C64>>) -> Self {
        MatrixProductOperator { tensors, blocks: None }
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    /// Physical dimension per site.
    pub fn local_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.dim().1).collect()
    }

    /// Internal bond dimensions (length `n_sites - 1`).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors.iter().skip(1).map(|t| t.dim().0).collect()
    }

    pub(crate) fn tensor(&self, site: usize) -> &Array4<C64> {
        &self.tensors[site]
    }

    pub(crate) fn blocks(&self) -> Option<&[SiteBlocks]> {
        self.blocks.as_deref()
    }

    /// Copy with `shift · I` added to the site-0 on-site block (the
    /// [idle, done] = [0, 0] slot of the first tensor). Used to contract
    /// expectations of H − E without rebuilding the operator.
    pub(crate) fn with_site0_shift(&self, shift: C64) -> Self {
        let mut tensors = self.tensors.clone();
        let d = tensors[0].dim().1;
        for s in 0..d {
            tensors[0][[0, s, s, 0]] += shift;
        }
        MatrixProductOperator { tensors, blocks: None }
    }

    /// Contract all sites into the dense operator, spin index slowest, chain
    /// sites in layout order. Guarded to small systems; used to validate the
    /// construction against the dense builders.
    pub fn to_dense(&self) -> MpsResult<Array2<C64>> {
        let total: usize = self.local_dims().iter().product();
        if total > 1 << 12 {
            return Err(MpsError::Shape(format!(
                "dense reconstruction limited to total dimension 4096, got {total}"
            )));
        }
        // Running row of dense matrices, one per right-bond state.
        let w0 = &self.tensors[0];
        let (_, d0, _, wr0) = w0.dim();
        let mut row: Vec<Array2<C64>> = (0..wr0)
            .map(|v| {
                let mut m = Array2::<C64>::zeros((d0, d0));
                for so in 0..d0 {
                    for si in 0..d0 {
                        m[[so, si]] = w0[[0, so, si, v]];
                    }
                }
                m
            })
            .collect();
        for tensor in self.tensors.iter().skip(1) {
            let (wl, d, _, wr) = tensor.dim();
            debug_assert_eq!(wl, row.len());
            let dim_prev = row[0].nrows();
            let mut next: Vec<Array2<C64>> =
                vec![Array2::<C64>::zeros((dim_prev * d, dim_prev * d)); wr];
            for (v_next, out) in next.iter_mut().enumerate() {
                for (v_prev, left) in row.iter().enumerate() {
                    let mut site = Array2::<C64>::zeros((d, d));
                    let mut nonzero = false;
                    for so in 0..d {
                        for si in 0..d {
                            let z = tensor[[v_prev, so, si, v_next]];
                            if z != C64::new(0.0, 0.0) {
                                nonzero = true;
                            }
                            site[[so, si]] = z;
                        }
                    }
                    if nonzero {
                        *out = &*out + &linalg::kron(&left.view(), &site.view());
                    }
                }
            }
            row = next;
        }
        debug_assert_eq!(row.len(), 1);
        Ok(row.pop().expect("right boundary leaves one block"))
    }
}

fn zeros_passes(n_left: usize, n_right: usize, d: usize) -> Vec<Vec<Array2<C64>>> {
    vec![vec![Array2::<C64>::zeros((d, d)); n_right]; n_left]
}

/// Blocks for one chain hung behind an opening carry. `head_completion` is
/// the operator closing the spin coupling on the first chain site (already
/// includes any pass-through bookkeeping for a trailing channel).
fn shared_blocks(
    params: &ModelParams,
    chain: &ChainGeometry,
    t0z: f64,
    t0x: f64,
    dims: &[usize],
) -> Vec<SiteBlocks> {
    let n = chain.len();
    let coupled = t0z != 0.0 || t0x != 0.0;
    let mut blocks = Vec::with_capacity(n + 1);

    let mut spin_starts = Vec::new();
    if coupled {
        let op = sigma_z().mapv(|z| z * C64::new(t0z, 0.0))
            + sigma_x().mapv(|z| z * C64::new(t0x, 0.0));
        spin_starts.push(op);
    }
    blocks.push(SiteBlocks {
        onsite: qubit_hamiltonian(params),
        starts: spin_starts,
        completions: Vec::new(),
        passes: Vec::new(),
    });

    for k in 0..n {
        let d = dims[k + 1];
        let a = boson_annihilation(d);
        let adag = linalg::dagger(&a.view());
        let num = adag.dot(&a);
        let completions = if k == 0 {
            if coupled {
                vec![boson_x(d)]
            } else {
                Vec::new()
            }
        } else {
            vec![a.clone(), adag.clone()]
        };
        let starts = if k + 1 < n {
            let t = chain.hopping[k];
            vec![adag.mapv(|z| z * C64::new(t, 0.0)), a.mapv(|z| z * C64::new(t, 0.0))]
        } else {
            Vec::new()
        };
        let passes = zeros_passes(completions.len(), starts.len(), d);
        blocks.push(SiteBlocks {
            onsite: num.mapv(|z| z * C64::new(chain.onsite[k], 0.0)),
            starts,
            completions,
            passes,
        });
    }
    blocks
}

/// Star blocks: the spin opens one carry per Pauli factor; every mode
/// completes both carries with its own coupling weights and passes them on
/// unchanged, so the spin reaches all modes at bond dimension 4.
fn star_blocks(params: &ModelParams, bath: &DiscretizedBath, dims: &[usize]) -> Vec<SiteBlocks> {
    let n = bath.len();
    let mut blocks = Vec::with_capacity(1 + n);

    blocks.push(SiteBlocks {
        onsite: qubit_hamiltonian(params),
        starts: vec![sigma_z(), sigma_x()],
        completions: Vec::new(),
        passes: Vec::new(),
    });

    for k in 0..n {
        let d = dims[k + 1];
        let a = boson_annihilation(d);
        let adag = linalg::dagger(&a.view());
        let num = adag.dot(&a);
        let x = boson_x(d);
        let completions = vec![
            x.mapv(|z| z * C64::new(bath.couplings_z[k], 0.0)),
            x.mapv(|z| z * C64::new(bath.couplings_x[k], 0.0)),
        ];
        let last = k + 1 == n;
        let zero = Array2::<C64>::zeros((d, d));
        let starts = if last { Vec::new() } else { vec![zero.clone(), zero] };
        let mut passes = zeros_passes(completions.len(), starts.len(), d);
        if !last {
            passes[0][0] = Array2::<C64>::eye(d);
            passes[1][1] = Array2::<C64>::eye(d);
        }
        blocks.push(SiteBlocks {
            onsite: num.mapv(|z| z * C64::new(bath.frequencies[k], 0.0)),
            starts,
            completions,
            passes,
        });
    }
    blocks
}

/// Assemble MPO tensors from per-site blocks.
pub(crate) fn assemble_mpo(blocks: &[SiteBlocks]) -> Vec<Array4<C64>> {
    let n = blocks.len();
    let mut tensors = Vec::with_capacity(n);
    for (k, blk) in blocks.iter().enumerate() {
        let d = blk.phys_dim();
        let nl = blk.completions.len();
        let nr = blk.starts.len();
        let first = k == 0;
        let last = k + 1 == n;
        let wl = if first { 1 } else { 2 + nl };
        let wr = if last { 1 } else { 2 + nr };
        // Left index of a logical state (None when the boundary drops it).
        let l_done = if first { None } else { Some(0) };
        let l_carry = |i: usize| if first { None } else { Some(1 + i) };
        let l_idle = if first { Some(0) } else { Some(1 + nl) };
        let r_done = if last { Some(0) } else { Some(0) };
        let r_carry = |j: usize| if last { None } else { Some(1 + j) };
        let r_idle = if last { None } else { Some(1 + nr) };

        let mut w = Array4::<C64>::zeros((wl, d, d, wr));
        let mut put = |li: Option<usize>, ri: Option<usize>, op: &Array2<C64>| {
            if let (Some(li), Some(ri)) = (li, ri) {
                for so in 0..d {
                    for si in 0..d {
                        w[[li, so, si, ri]] += op[[so, si]];
                    }
                }
            }
        };
        let eye = Array2::<C64>::eye(d);
        put(l_done, r_done, &eye);
        put(l_idle, r_idle, &eye);
        put(l_idle, r_done, &blk.onsite);
        for (j, c) in blk.starts.iter().enumerate() {
            put(l_idle, r_carry(j), c);
        }
        for (i, b) in blk.completions.iter().enumerate() {
            put(l_carry(i), r_done, b);
        }
        for (i, row) in blk.passes.iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                put(l_carry(i), r_carry(j), a);
            }
        }
        tensors.push(w);
    }
    // Single site: idle and done collapse onto the same 1x1 bond, which
    // double-counts the identity; rebuild it as just the on-site term.
    if n == 1 {
        let blk = &blocks[0];
        let d = blk.phys_dim();
        let mut w = Array4::<C64>::zeros((1, d, d, 1));
        for so in 0..d {
            for si in 0..d {
                w[[0, so, si, 0]] = blk.onsite[[so, si]];
            }
        }
        tensors[0] = w;
    }
    tensors
}

/// Build the Hamiltonian MPO for a chain layout.
///
/// `local_dims` lists the physical dimension of every site including the
/// spin (so `local_dims[0]` must be 2 and the length must be
/// `layout.n_sites()`). The block decomposition is retained on the returned
/// operator for the propagator construction.
pub fn build_hamiltonian_mpo(
    params: &ModelParams,
    layout: &ChainLayout,
    local_dims: &[usize],
) -> MpsResult<MatrixProductOperator> {
    params.validate()?;
    if local_dims.len() != layout.n_sites() {
        return Err(MpsError::Layout(format!(
            "layout has {} sites but {} local dimensions were given",
            layout.n_sites(),
            local_dims.len()
        )));
    }
    if local_dims[0] != 2 {
        return Err(MpsError::Layout(format!(
            "site 0 is the spin and must have dimension 2, got {}",
            local_dims[0]
        )));
    }
    if let Some(&bad) = local_dims[1..].iter().find(|&&d| d < 2) {
        return Err(MpsError::Layout(format!("chain sites need local dimension >= 2, got {bad}")));
    }
    let blocks = match layout {
        ChainLayout::Shared { chain, t0z, t0x } => {
            if chain.is_empty() && (*t0z != 0.0 || *t0x != 0.0) {
                return Err(MpsError::Layout(
                    "empty chain cannot carry a nonzero edge coupling".into(),
                ));
            }
            shared_blocks(params, chain, *t0z, *t0x, local_dims)
        }
        ChainLayout::Star { bath } => {
            if bath.is_empty() {
                return Err(MpsError::Layout(
                    "star layout needs at least one mode; use Shared for a bare spin".into(),
                ));
            }
            if bath.couplings_z.len() != bath.len() || bath.couplings_x.len() != bath.len() {
                return Err(MpsError::Layout(format!(
                    "star bath shape mismatch: {} frequencies, {} z-couplings, {} x-couplings",
                    bath.len(),
                    bath.couplings_z.len(),
                    bath.couplings_x.len()
                )));
            }
            star_blocks(params, bath, local_dims)
        }
    };
    let tensors = assemble_mpo(&blocks);
    Ok(MatrixProductOperator { tensors, blocks: Some(blocks) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::{build_dense_chain_hamiltonian, build_dense_hamiltonian, FockTruncation};
    use crate::model::{discretize_bath, BathScheme};

    fn max_dev(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn shared_mpo_reconstructs_the_dense_chain_hamiltonian() {
        let params = ModelParams::ohmic(1.0, 0.1, 0.2, 2).unwrap();
        let bath = discretize_bath(&params, BathScheme::Linear).unwrap();
        let layout = ChainLayout::from_bath(&bath);
        let d = 3;
        let dims = vec![2, d, d];
        let mpo = build_hamiltonian_mpo(&params, &layout, &dims).unwrap();
        assert_eq!(mpo.bond_dims(), vec![3, 4]);
        let dense = mpo.to_dense().unwrap();
        let (chain, t0z, t0x) = match &layout {
            ChainLayout::Shared { chain, t0z, t0x } => (chain.clone(), *t0z, *t0x),
            _ => panic!("ohmic z-only bath must reduce to a shared chain"),
        };
        let trunc = FockTruncation::new(d, chain.len()).unwrap();
        let oracle = build_dense_chain_hamiltonian(&params, &chain, t0z, t0x, trunc).unwrap();
        assert!(max_dev(&dense, &oracle) < 1e-12, "dev {:.3e}", max_dev(&dense, &oracle));
    }

    #[test]
    fn decoupled_mpo_is_spin_plus_bath() {
        // alpha = beta = 0 with an explicitly decoupled chain: H = H_Q x 1 + 1 x H_B.
        let params = ModelParams::ohmic(1.0, 0.0, 0.3, 4).unwrap();
        let chain = ChainGeometry {
            onsite: vec![0.7, 1.9],
            hopping: vec![0.45],
            edge_coupling: 0.0,
        };
        let layout = ChainLayout::Shared { chain: chain.clone(), t0z: 0.0, t0x: 0.0 };
        let dims = vec![2, 3, 3];
        let mpo = build_hamiltonian_mpo(&params, &layout, &dims).unwrap();
        let dense = mpo.to_dense().unwrap();
        let trunc = FockTruncation::new(3, 2).unwrap();
        let oracle = build_dense_chain_hamiltonian(&params, &chain, 0.0, 0.0, trunc).unwrap();
        assert!(max_dev(&dense, &oracle) < 1e-13);
    }

    #[test]
    fn mpo_reconstruction_is_hermitian() {
        let params = ModelParams::ohmic(1.0, 0.25, 0.05, 3).unwrap();
        let bath = discretize_bath(&params, BathScheme::Linear).unwrap();
        let layout = ChainLayout::from_bath(&bath);
        let mpo = build_hamiltonian_mpo(&params, &layout, &[2, 3, 3, 3]).unwrap();
        let dense = mpo.to_dense().unwrap();
        assert!(linalg::hermiticity_deviation(&dense.view()) < 1e-12);
    }

    #[test]
    fn star_mpo_matches_the_dense_star_hamiltonian() {
        // Three modes, couplings deliberately non-proportional.
        let params = ModelParams {
            delta: 1.0,
            h: 0.1,
            alpha: 0.2,
            beta: 0.1,
            s: 1.0,
            omega_c: 10.0,
            n_modes: 3,
        };
        let bath = DiscretizedBath {
            frequencies: vec![2.5, 5.0, 7.5],
            couplings_z: vec![0.8, 0.3, 0.0],
            couplings_x: vec![0.2, 0.5, 0.4],
            scheme: BathScheme::Linear,
        };
        let layout = ChainLayout::from_bath(&bath);
        assert!(matches!(layout, ChainLayout::Star { .. }));
        let d = 3;
        let mpo = build_hamiltonian_mpo(&params, &layout, &[2, d, d, d]).unwrap();
        // Both Pauli carries cross every interior bond.
        assert_eq!(mpo.bond_dims(), vec![4, 4, 4]);
        let dense = mpo.to_dense().unwrap();
        let trunc = FockTruncation::new(d, 3).unwrap();
        let oracle = build_dense_hamiltonian(&params, &bath, trunc).unwrap();
        assert!(max_dev(&dense, &oracle) < 1e-12, "dev {:.3e}", max_dev(&dense, &oracle));
        assert!(linalg::hermiticity_deviation(&dense.view()) < 1e-12);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let params = ModelParams::ohmic(1.0, 0.1, 0.0, 2).unwrap();
        let bath = discretize_bath(&params, BathScheme::Linear).unwrap();
        let layout = ChainLayout::from_bath(&bath);
        assert!(matches!(
            build_hamiltonian_mpo(&params, &layout, &[2, 3]),
            Err(MpsError::Layout(_))
        ));
        assert!(matches!(
            build_hamiltonian_mpo(&params, &layout, &[3, 3, 3]),
            Err(MpsError::Layout(_))
        ));
        assert!(matches!(
            build_hamiltonian_mpo(&params, &layout, &[2, 3, 1]),
            Err(MpsError::Layout(_))
        ));
    }

    #[test]
    fn spin_only_layout_reduces_to_the_qubit_hamiltonian() {
        let params = ModelParams::ohmic(1.0, 0.0, 0.4, 1).unwrap();
        let chain = ChainGeometry { onsite: vec![], hopping: vec![], edge_coupling: 0.0 };
        let layout = ChainLayout::Shared { chain, t0z: 0.0, t0x: 0.0 };
        let mpo = build_hamiltonian_mpo(&params, &layout, &[2]).unwrap();
        let dense = mpo.to_dense().unwrap();
        assert!(max_dev(&dense, &qubit_hamiltonian(&params)) < 1e-15);
    }
}
