//! Matrix product states on the open chain, spin first.
//!
//! Site tensors are rank-3, indexed `[left bond, physical, right bond]`,
//! with trivial bonds at both ends. The state keeps a mixed-canonical gauge
//! around an orthogonality center: tensors left of the center are left
//! isometries, tensors right of it are right isometries, so single-site
//! observables at the center need no environment. Truncations are logged per
//! bond as relative discarded weight (sum of dropped singular values squared
//! over the total) and accumulated over the state's history.
//!
//! MPO application uses a single zip-up pass: the operator is absorbed site
//! by site while an SVD keeps the intermediate bonds near their final size
//! (cutoff one decade below the target, cap twice the target bond), followed
//! by a right-to-left sweep that truncates at the requested policy and
//! restores right-canonical form. The report carries the pre-normalization
//! norm and the total discarded weight so callers can flag under-resolved
//! steps.

use ndarray::{s, Array1, Array2, Array3, ArrayView2};

use super::mpo::MatrixProductOperator;
use super::{MpsError, MpsResult, TruncationPolicy};
use crate::linalg;
use crate::qfim::{Basis, QubitDensityMatrix};
use crate::C64;

/// Truncation bookkeeping for one MPO application.
#[derive(Debug, Clone, Copy)]
pub struct ApplyReport {
    /// Norm of the state after the zip-up, before renormalization.
    pub norm_before_renormalize: f64,
    /// Total relative discarded weight across both passes.
    pub discarded_weight: f64,
    /// Largest bond dimension after truncation.
    pub max_bond: usize,
    /// True when some bond hit the cap while still discarding weight above
    /// the cutoff, i.e. the policy could not represent the step faithfully.
    pub saturated: bool,
}

/// Mixed-canonical matrix product state.
#[derive(Debug, Clone)]
pub struct MatrixProductState {
    tensors: Vec<Array3<C64>>,
    center: usize,
    /// Relative discarded weight of the most recent truncation on each bond.
    bond_discard: Vec<f64>,
    /// Sum of all relative discarded weights since construction.
    cumulative_discard: f64,
}

/// Reshape a rank-3 tensor into a matrix splitting after the physical leg.
pub(crate) fn fuse_left(t: &Array3<C64>) -> Array2<C64> {
    let (l, d, r) = t.dim();
    let t = t.as_standard_layout();
    let (v, off) = t.into_owned().into_raw_vec_and_offset();
    debug_assert_eq!(off, Some(0));
    Array2::from_shape_vec((l * d, r), v).expect("contiguous tensor")
}

/// Reshape a rank-3 tensor into a matrix splitting before the physical leg.
pub(crate) fn fuse_right(t: &Array3<C64>) -> Array2<C64> {
    let (l, d, r) = t.dim();
    let t = t.as_standard_layout();
    let (v, off) = t.into_owned().into_raw_vec_and_offset();
    debug_assert_eq!(off, Some(0));
    Array2::from_shape_vec((l, d * r), v).expect("contiguous tensor")
}

pub(crate) fn unfuse(m: Array2<C64>, l: usize, d: usize, r: usize) -> Array3<C64> {
    let (v, off) = m.as_standard_layout().into_owned().into_raw_vec_and_offset();
    debug_assert_eq!(off, Some(0));
    Array3::from_shape_vec((l, d, r), v).expect("shape preserves element count")
}

impl MatrixProductState {
    /// Product state from per-site kets. Each ket must match its local
    /// dimension and be normalized to 1e-12.
    pub fn from_product(kets: &[Array1<C64>]) -> MpsResult<Self> {
        if kets.is_empty() {
            return Err(MpsError::State("state needs at least one site".into()));
        }
        let mut tensors = Vec::with_capacity(kets.len());
        for ket in kets {
            let d = ket.len();
            if d < 2 {
                return Err(MpsError::State(format!("local dimension must be >= 2, got {d}")));
            }
            let nrm = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (nrm - 1.0).abs() > 1e-12 {
                return Err(MpsError::State(format!("site ket norm {nrm} is not 1")));
            }
            let mut t = Array3::<C64>::zeros((1, d, 1));
            for (i, &z) in ket.iter().enumerate() {
                t[[0, i, 0]] = z;
            }
            tensors.push(t);
        }
        let n_bonds = kets.len().saturating_sub(1);
        Ok(MatrixProductState {
            tensors,
            center: 0,
            bond_discard: vec![0.0; n_bonds],
            cumulative_discard: 0.0,
        })
    }

    /// Spin ket at site 0, vacuum on `n_chain` bosonic sites of the given
    /// local dimensions.
    pub fn spin_boson_product(spin: &Array1<C64>, chain_dims: &[usize]) -> MpsResult<Self> {
        if spin.len() != 2 {
            return Err(MpsError::State("spin ket must have dimension 2".into()));
        }
        let mut kets = vec![spin.clone()];
        for &d in chain_dims {
            let mut vac = Array1::<C64>::zeros(d);
            vac[0] = C64::new(1.0, 0.0);
            kets.push(vac);
        }
        Self::from_product(&kets)
    }

    /// Build from raw tensors; used by checkpoint loading. Validates bond
    /// continuity and trivial edges but does not re-canonicalize.
    pub(crate) fn from_raw_parts(
        tensors: Vec<Array3<C64>>,
        center: usize,
        bond_discard: Vec<f64>,
        cumulative_discard: f64,
    ) -> MpsResult<Self> {
        if tensors.is_empty() {
            return Err(MpsError::State("state needs at least one site".into()));
        }
        if center >= tensors.len() {
            return Err(MpsError::State(format!(
                "center {center} out of range for {} sites",
                tensors.len()
            )));
        }
        if bond_discard.len() + 1 != tensors.len() {
            return Err(MpsError::State("bond log length must be sites - 1".into()));
        }
        if tensors[0].dim().0 != 1 || tensors[tensors.len() - 1].dim().2 != 1 {
            return Err(MpsError::State("edge bonds must be trivial".into()));
        }
        for k in 0..tensors.len() - 1 {
            if tensors[k].dim().2 != tensors[k + 1].dim().0 {
                return Err(MpsError::State(format!("bond mismatch between sites {k} and {}", k + 1)));
            }
        }
        Ok(MatrixProductState { tensors, center, bond_discard, cumulative_discard })
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.dim().1).collect()
    }

    /// Internal bond dimensions (length `n_sites - 1`).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors.iter().skip(1).map(|t| t.dim().0).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn center(&self) -> usize {
        self.center
    }

    /// Most recent relative discarded weight per bond.
    pub fn bond_discards(&self) -> &[f64] {
        &self.bond_discard
    }

    /// Sum of relative discarded weights over the state's entire history.
    pub fn cumulative_discard(&self) -> f64 {
        self.cumulative_discard
    }

    pub(crate) fn tensor(&self, site: usize) -> &Array3<C64> {
        &self.tensors[site]
    }

    pub(crate) fn tensor_mut(&mut self, site: usize) -> &mut Array3<C64> {
        &mut self.tensors[site]
    }

    pub(crate) fn set_tensor(&mut self, site: usize, t: Array3<C64>) {
        self.tensors[site] = t;
    }

    pub(crate) fn set_center(&mut self, site: usize) {
        debug_assert!(site < self.tensors.len());
        self.center = site;
    }

    pub(crate) fn log_bond_discard(&mut self, bond: usize, weight: f64) {
        self.bond_discard[bond] = weight;
        self.cumulative_discard += weight;
    }

    /// State norm, evaluated at the center tensor.
    pub fn norm(&self) -> f64 {
        self.tensors[self.center].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Scale the center tensor so the norm is exactly 1.
    pub fn normalize(&mut self) -> MpsResult<f64> {
        let nrm = self.norm();
        if nrm <= 0.0 || !nrm.is_finite() {
            return Err(MpsError::State(format!("cannot normalize state with norm {nrm}")));
        }
        let inv = C64::new(1.0 / nrm, 0.0);
        self.tensors[self.center].mapv_inplace(|z| z * inv);
        Ok(nrm)
    }

    /// Move the center one bond to the right via QR-like SVD split.
    fn shift_right(&mut self) -> MpsResult<()> {
        let k = self.center;
        let (l, d, r) = self.tensors[k].dim();
        let m = fuse_left(&self.tensors[k]);
        let svd = linalg::svd_truncated(m, 0.0, usize::MAX)?;
        let chi = svd.rank;
        self.tensors[k] = unfuse(svd.u, l, d, chi);
        // Carry s vt into the next site.
        let mut sv = svd.vt;
        for (i, &sig) in svd.s.iter().enumerate() {
            sv.row_mut(i).mapv_inplace(|z| z * C64::new(sig, 0.0));
        }
        let next = fuse_right(&self.tensors[k + 1]);
        let merged = sv.dot(&next);
        let (_, dn, rn) = self.tensors[k + 1].dim();
        self.tensors[k + 1] = unfuse(merged, chi, dn, rn);
        let _ = r;
        self.center = k + 1;
        Ok(())
    }

    /// Move the center one bond to the left.
    fn shift_left(&mut self) -> MpsResult<()> {
        let k = self.center;
        let (l, d, r) = self.tensors[k].dim();
        let m = fuse_right(&self.tensors[k]);
        let svd = linalg::svd_truncated(m, 0.0, usize::MAX)?;
        let chi = svd.rank;
        self.tensors[k] = unfuse(svd.vt, chi, d, r);
        let mut us = svd.u;
        for (j, &sig) in svd.s.iter().enumerate() {
            us.column_mut(j).mapv_inplace(|z| z * C64::new(sig, 0.0));
        }
        let prev = fuse_left(&self.tensors[k - 1]);
        let merged = prev.dot(&us);
        let (lp, dp, _) = self.tensors[k - 1].dim();
        self.tensors[k - 1] = unfuse(merged, lp, dp, chi);
        let _ = l;
        self.center = k - 1;
        Ok(())
    }

    /// Move the orthogonality center to `site`, restoring isometry on every
    /// bond crossed. Lossless (cutoff zero).
    pub fn move_center_to(&mut self, site: usize) -> MpsResult<()> {
        if site >= self.tensors.len() {
            return Err(MpsError::State(format!(
                "center target {site} out of range for {} sites",
                self.tensors.len()
            )));
        }
        while self.center < site {
            self.shift_right()?;
        }
        while self.center > site {
            self.shift_left()?;
        }
        Ok(())
    }

    /// Bring the state to canonical form with the center at `site` and unit
    /// norm. Sweeps to both edges so every tensor is an isometry regardless
    /// of the state's history.
    pub fn canonicalize(&mut self, site: usize) -> MpsResult<()> {
        self.move_center_to(self.tensors.len() - 1)?;
        self.move_center_to(0)?;
        self.move_center_to(site)?;
        self.normalize()?;
        Ok(())
    }

    /// Largest deviation from the isometry conditions away from the center.
    /// Left of the center: sum_l,s T*[l,s,a] T[l,s,b] = delta_ab; right of
    /// it: sum_s,r T[a,s,r] T*[b,s,r] = delta_ab.
    pub fn orthogonality_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, t) in self.tensors.iter().enumerate() {
            if k == self.center {
                continue;
            }
            let dev = if k < self.center {
                let m = fuse_left(t);
                let g = linalg::dagger(&m.view()).dot(&m);
                identity_deviation(&g.view())
            } else {
                let m = fuse_right(t);
                let g = m.dot(&linalg::dagger(&m.view()));
                identity_deviation(&g.view())
            };
            worst = worst.max(dev);
        }
        worst
    }

    /// Expectation of a single-site operator.
    pub fn expectation_one_site(&mut self, site: usize, op: &ArrayView2<C64>) -> MpsResult<C64> {
        let d = self.tensors[site].dim().1;
        if op.dim() != (d, d) {
            return Err(MpsError::Shape(format!(
                "operator is {:?} but site {site} has dimension {d}",
                op.dim()
            )));
        }
        self.move_center_to(site)?;
        let t = &self.tensors[site];
        let (l, _, r) = t.dim();
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..l {
            for b in 0..r {
                for so in 0..d {
                    for si in 0..d {
                        acc += t[[a, so, b]].conj() * op[[so, si]] * t[[a, si, b]];
                    }
                }
            }
        }
        let n2 = self.norm().powi(2);
        Ok(acc / C64::new(n2, 0.0))
    }

    /// Reduced density matrix of the spin (site 0) in the sigma_z basis.
    /// Eigenvalues below zero by rounding are clamped and the trace is
    /// renormalized.
    pub fn reduced_density_matrix(&mut self) -> MpsResult<QubitDensityMatrix> {
        if self.tensors[0].dim().1 != 2 {
            return Err(MpsError::State("site 0 is not a qubit".into()));
        }
        self.move_center_to(0)?;
        let t = &self.tensors[0];
        let r = t.dim().2;
        let mut rho = Array2::<C64>::zeros((2, 2));
        for so in 0..2 {
            for si in 0..2 {
                let mut acc = C64::new(0.0, 0.0);
                for b in 0..r {
                    acc += t[[0, so, b]] * t[[0, si, b]].conj();
                }
                rho[[so, si]] = acc;
            }
        }
        let tr = (rho[[0, 0]] + rho[[1, 1]]).re;
        if tr <= 0.0 {
            return Err(MpsError::State("reduced state has non-positive trace".into()));
        }
        rho.mapv_inplace(|z| z / C64::new(tr, 0.0));
        // Clamp tiny negative eigenvalues from truncation rounding.
        rho = clamp_psd(&rho)?;
        Ok(QubitDensityMatrix::new(rho, Basis::SigmaZ)?)
    }

    /// Occupation of the bosonic mode at `site`.
    pub fn mode_occupation(&mut self, site: usize) -> MpsResult<f64> {
        let d = self.tensors[site].dim().1;
        let mut num = Array2::<C64>::zeros((d, d));
        for k in 0..d {
            num[[k, k]] = C64::new(k as f64, 0.0);
        }
        Ok(self.expectation_one_site(site, &num.view())?.re)
    }

    /// Inner product <self|other>.
    pub fn overlap(&self, other: &Self) -> MpsResult<C64> {
        if self.local_dims() != other.local_dims() {
            return Err(MpsError::Shape("overlap needs matching local dimensions".into()));
        }
        let mut env = Array2::<C64>::ones((1, 1));
        for (tb, tk) in self.tensors.iter().zip(&other.tensors) {
            let (lk, d, rk) = tk.dim();
            let (lb, _, rb) = tb.dim();
            // env[lb, lk] -> next[rb, rk]
            let mut next = Array2::<C64>::zeros((rb, rk));
            // tmp[lb, s, rk] = env[lb, lk] tk[lk, s, rk]
            let tk_m = Array2::from_shape_vec(
                (lk, d * rk),
                tk.as_standard_layout().into_owned().into_raw_vec_and_offset().0,
            )
            .expect("contiguous");
            let tmp = env.dot(&tk_m); // (lb, d*rk)
            for b in 0..rb {
                for s in 0..d {
                    for a in 0..lb {
                        let conj = tb[[a, s, b]].conj();
                        if conj == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for r in 0..rk {
                            next[[b, r]] += conj * tmp[[a, s * rk + r]];
                        }
                    }
                }
            }
            env = next;
        }
        Ok(env[[0, 0]])
    }

    /// Dense state vector, spin index slowest. Guarded to small systems.
    pub fn to_dense(&self) -> MpsResult<Array1<C64>> {
        let total: usize = self.local_dims().iter().product();
        if total > 1 << 20 {
            return Err(MpsError::Shape(format!(
                "dense vector limited to dimension 2^20, got {total}"
            )));
        }
        let mut acc = Array2::<C64>::ones((1, 1));
        for t in &self.tensors {
            let (l, d, r) = t.dim();
            let m = Array2::from_shape_vec(
                (l, d * r),
                t.as_standard_layout().into_owned().into_raw_vec_and_offset().0,
            )
            .expect("contiguous");
            acc = acc.dot(&m); // (prev, d*r)
            let rows = acc.nrows() * d;
            acc = Array2::from_shape_vec(
                (rows, r),
                acc.as_standard_layout().into_owned().into_raw_vec_and_offset().0,
            )
            .expect("contiguous");
        }
        Ok(acc.column(0).to_owned())
    }

    /// Von Neumann entropy of the bond cut left of `site` (in nats).
    pub fn bond_entropy(&mut self, site: usize) -> MpsResult<f64> {
        if site == 0 || site >= self.tensors.len() {
            return Err(MpsError::State(format!("bond entropy needs 1 <= site < {}", self.tensors.len())));
        }
        self.move_center_to(site)?;
        let m = fuse_right(&self.tensors[site]);
        let svd = linalg::svd_truncated(m, 0.0, usize::MAX)?;
        let total: f64 = svd.s.iter().map(|s| s * s).sum();
        let mut ent = 0.0;
        for &sv in svd.s.iter() {
            let p = sv * sv / total;
            if p > 1e-300 {
                ent -= p * p.ln();
            }
        }
        Ok(ent)
    }

    /// Apply an MPO with a zip-up sweep and a second truncation sweep at the
    /// given policy. Returns the new state, right-canonical with center 0 and
    /// unit norm, plus the truncation report.
    pub fn apply_mpo(
        &mut self,
        mpo: &MatrixProductOperator,
        policy: &TruncationPolicy,
    ) -> MpsResult<(Self, ApplyReport)> {
        if self.local_dims() != mpo.local_dims() {
            return Err(MpsError::Shape("operator and state dimensions differ".into()));
        }
        let n = self.tensors.len();
        self.move_center_to(0)?;
        let zip_cutoff = policy.svd_cutoff() * 0.1;
        let zip_cap = policy.max_bond().saturating_mul(2);
        let mut discard_total = 0.0;

        // K[nu, a, w]: new left bond nu, state bond a, operator bond w.
        let mut k_env = Array2::<C64>::ones((1, 1)); // (nu, a*w) with a*w = 1
        let mut k_a = 1usize;
        let mut k_w = 1usize;
        let mut out: Vec<Array3<C64>> = Vec::with_capacity(n);
        for site in 0..n {
            let t = &self.tensors[site];
            let wt = mpo.tensor(site);
            let (a_dim, d, b_dim) = t.dim();
            let (w_dim, _, _, v_dim) = wt.dim();
            debug_assert_eq!(k_a, a_dim);
            debug_assert_eq!(k_w, w_dim);
            let nu = k_env.nrows();
            // km[nu, w, s, b] = sum_a K[nu, a, w] t[a, s, b]
            let t_m = Array2::from_shape_vec(
                (a_dim, d * b_dim),
                t.as_standard_layout().into_owned().into_raw_vec_and_offset().0,
            )
            .expect("contiguous");
            // Rearrange K to (nu*w, a): k_env is (nu, a*w).
            let mut k_rearr = Array2::<C64>::zeros((nu * w_dim, a_dim));
            for x in 0..nu {
                for a in 0..a_dim {
                    for w in 0..w_dim {
                        k_rearr[[x * w_dim + w, a]] = k_env[[x, a * w_dim + w]];
                    }
                }
            }
            let km = k_rearr.dot(&t_m); // (nu*w, d*b)
            // theta[nu, s', b, v] = sum_{w, s} wt[w, s', s, v] km[nu, w, s, b]
            // Contract as matrix product: wt viewed (w*s, s'*v) transposed.
            let mut wt_m = Array2::<C64>::zeros((d * v_dim, w_dim * d));
            for w in 0..w_dim {
                for so in 0..d {
                    for si in 0..d {
                        for v in 0..v_dim {
                            wt_m[[so * v_dim + v, w * d + si]] = wt[[w, so, si, v]];
                        }
                    }
                }
            }
            // km viewed as (nu, w, s, b) -> rearrange to (w*s, nu*b)
            let mut km_r = Array2::<C64>::zeros((w_dim * d, nu * b_dim));
            for x in 0..nu {
                for w in 0..w_dim {
                    for sidx in 0..d {
                        for b in 0..b_dim {
                            km_r[[w * d + sidx, x * b_dim + b]] = km[[x * w_dim + w, sidx * b_dim + b]];
                        }
                    }
                }
            }
            let theta = wt_m.dot(&km_r); // (s'*v, nu*b)
            if site + 1 == n {
                // v = 1 at the right edge; absorb into the final tensor.
                debug_assert_eq!(v_dim, 1);
                let mut last = Array3::<C64>::zeros((nu, d, 1));
                for so in 0..d {
                    for x in 0..nu {
                        last[[x, so, 0]] = theta[[so, x]];
                    }
                }
                out.push(last);
            } else {
                // SVD split (nu*s') x (b*v).
                let mut m = Array2::<C64>::zeros((nu * d, b_dim * v_dim));
                for x in 0..nu {
                    for so in 0..d {
                        for b in 0..b_dim {
                            for v in 0..v_dim {
                                m[[x * d + so, b * v_dim + v]] = theta[[so * v_dim + v, x * b_dim + b]];
                            }
                        }
                    }
                }
                let svd = linalg::svd_truncated(m, zip_cutoff, zip_cap)?;
                discard_total += svd.discarded_weight;
                let chi = svd.rank;
                out.push(unfuse(svd.u, nu, d, chi));
                let mut sv = svd.vt;
                for (i, &sig) in svd.s.iter().enumerate() {
                    sv.row_mut(i).mapv_inplace(|z| z * C64::new(sig, 0.0));
                }
                // sv is (chi, b*v): the carried environment with nu' = chi.
                // Convert to K layout (nu', a*w) where a = b, w = v.
                k_env = sv;
                k_a = b_dim;
                k_w = v_dim;
            }
        }

        let mut result = MatrixProductState {
            tensors: out,
            center: n - 1,
            bond_discard: vec![0.0; n.saturating_sub(1)],
            cumulative_discard: self.cumulative_discard,
        };
        // Reverse sweep: truncate every bond at the real policy, ending
        // right-canonical with the center at site 0.
        let mut saturated = false;
        for site in (1..n).rev() {
            let t = &result.tensors[site];
            let (l, d, r) = t.dim();
            let m = fuse_right(t);
            let svd = linalg::svd_truncated(m, policy.svd_cutoff(), policy.max_bond())?;
            discard_total += svd.discarded_weight;
            if svd.rank == policy.max_bond() && svd.discarded_weight > policy.svd_cutoff() {
                saturated = true;
            }
            result.log_bond_discard(site - 1, svd.discarded_weight);
            let chi = svd.rank;
            result.tensors[site] = unfuse(svd.vt, chi, d, r);
            let mut us = svd.u;
            for (j, &sig) in svd.s.iter().enumerate() {
                us.column_mut(j).mapv_inplace(|z| z * C64::new(sig, 0.0));
            }
            let prev = fuse_left(&result.tensors[site - 1]);
            let merged = prev.dot(&us);
            let (lp, dp, _) = result.tensors[site - 1].dim();
            result.tensors[site - 1] = unfuse(merged, lp, dp, chi);
            let _ = l;
        }
        result.center = 0;
        let norm_before = result.norm();
        result.normalize()?;
        let report = ApplyReport {
            norm_before_renormalize: norm_before,
            discarded_weight: discard_total,
            max_bond: result.max_bond_dim(),
            saturated,
        };
        Ok((result, report))
    }

    /// Truncate every bond to the policy without applying anything; used to
    /// compress after lossless operations. Leaves the center at 0, unit norm.
    pub fn compress(&mut self, policy: &TruncationPolicy) -> MpsResult<f64> {
        let n = self.tensors.len();
        self.move_center_to(n - 1)?;
        let mut total = 0.0;
        for site in (1..n).rev() {
            let t = &self.tensors[site];
            let (_, d, r) = t.dim();
            let m = fuse_right(t);
            let svd = linalg::svd_truncated(m, policy.svd_cutoff(), policy.max_bond())?;
            total += svd.discarded_weight;
            self.log_bond_discard(site - 1, svd.discarded_weight);
            let chi = svd.rank;
            self.tensors[site] = unfuse(svd.vt, chi, d, r);
            let mut us = svd.u;
            for (j, &sig) in svd.s.iter().enumerate() {
                us.column_mut(j).mapv_inplace(|z| z * C64::new(sig, 0.0));
            }
            let prev = fuse_left(&self.tensors[site - 1]);
            let merged = prev.dot(&us);
            let (lp, dp, _) = self.tensors[site - 1].dim();
            self.tensors[site - 1] = unfuse(merged, lp, dp, chi);
        }
        self.center = 0;
        self.normalize()?;
        Ok(total)
    }
}

fn identity_deviation(g: &ArrayView2<C64>) -> f64 {
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((g[[i, j]] - want).norm());
        }
    }
    worst
}

/// Project a 2x2 density matrix onto the PSD cone: clamp negative
/// eigenvalues to zero and renormalize the trace.
fn clamp_psd(rho: &Array2<C64>) -> MpsResult<Array2<C64>> {
    let herm = (rho + &linalg::dagger(&rho.view())).mapv(|z| z * C64::new(0.5, 0.0));
    let (vals, vecs) = crate::linalg::eigh2(&herm.view());
    if vals[0] < -1e-9 {
        return Err(MpsError::State(format!(
            "reduced state eigenvalue {:.3e} is too negative to be rounding",
            vals[0]
        )));
    }
    let clamped = [vals[0].max(0.0), vals[1].max(0.0)];
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(MpsError::State("reduced state has zero weight".into()));
    }
    let mut out = Array2::<C64>::zeros((2, 2));
    for (idx, &p) in clamped.iter().enumerate() {
        let v = vecs.slice(s![.., idx]);
        let w = C64::new(p / total, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                out[[i, j]] += w * v[i] * v[j].conj();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::{boson_number, sigma_x, sigma_z};
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_mps(rng: &mut ChaCha8Rng, dims: &[usize], chi: usize) -> MatrixProductState {
        let n = dims.len();
        let mut tensors = Vec::with_capacity(n);
        let mut left = 1usize;
        for (k, &d) in dims.iter().enumerate() {
            let right = if k + 1 == n { 1 } else { chi.min(left * d) };
            let mut t = Array3::<C64>::zeros((left, d, right));
            for z in t.iter_mut() {
                *z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            tensors.push(t);
            left = right;
        }
        let mut mps =
            MatrixProductState::from_raw_parts(tensors, 0, vec![0.0; n - 1], 0.0).unwrap();
        mps.canonicalize(0).unwrap();
        mps
    }

    #[test]
    fn product_state_observables() {
        let spin = array![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]; // |down>
        let mut mps = MatrixProductState::spin_boson_product(&spin, &[3, 3]).unwrap();
        let sz = mps.expectation_one_site(0, &sigma_z().view()).unwrap();
        assert!((sz.re + 1.0).abs() < 1e-14);
        assert!(mps.mode_occupation(1).unwrap().abs() < 1e-14);
        let rho = mps.reduced_density_matrix().unwrap();
        let m = rho.to_sigma_z_basis();
        assert!((m[[1, 1]].re - 1.0).abs() < 1e-12);
        assert!(m[[0, 0]].norm() < 1e-12);
    }

    #[test]
    fn canonicalization_is_isometric_and_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mps = random_mps(&mut rng, &[2, 3, 4, 3], 5);
        assert!(mps.orthogonality_deviation() < 1e-12);
        assert!((mps.norm() - 1.0).abs() < 1e-12);
        let sz_before = mps.expectation_one_site(0, &sigma_z().view()).unwrap();
        let n_before = mps.mode_occupation(2).unwrap();
        mps.canonicalize(2).unwrap();
        assert!(mps.orthogonality_deviation() < 1e-12);
        let sz_after = mps.expectation_one_site(0, &sigma_z().view()).unwrap();
        let n_after = mps.mode_occupation(2).unwrap();
        assert!((sz_before - sz_after).norm() < 1e-12);
        assert!((n_before - n_after).abs() < 1e-12);
    }

    #[test]
    fn dense_vector_matches_overlap_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mps = random_mps(&mut rng, &[2, 3, 3], 4);
        let dense = mps.to_dense().unwrap();
        let nrm: f64 = dense.iter().map(|z| z.norm_sqr()).sum();
        assert!((nrm - 1.0).abs() < 1e-12);
        let other = random_mps(&mut rng, &[2, 3, 3], 4);
        let dense_other = other.to_dense().unwrap();
        let dot: C64 = dense
            .iter()
            .zip(dense_other.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        let ov = mps.overlap(&other).unwrap();
        assert!((ov - dot).norm() < 1e-12, "overlap {ov} vs dense {dot}");
    }

    #[test]
    fn apply_mpo_matches_dense_application() {
        use crate::model::{discretize_bath, BathScheme};
        use crate::mps::mpo::{build_hamiltonian_mpo, ChainLayout};
        let params = crate::model::ModelParams::ohmic(1.0, 0.2, 0.1, 2).unwrap();
        let bath = discretize_bath(&params, BathScheme::Linear).unwrap();
        let layout = ChainLayout::from_bath(&bath);
        let dims = vec![2, 3, 3];
        let mpo = build_hamiltonian_mpo(&params, &layout, &dims).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mps = random_mps(&mut rng, &dims, 4);
        let dense_in = mps.to_dense().unwrap();
        let h = mpo.to_dense().unwrap();
        let want = h.dot(&dense_in);
        let want_norm: f64 = want.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let policy = TruncationPolicy::new(1e-14, 64).unwrap();
        let (applied, report) = mps.apply_mpo(&mpo, &policy).unwrap();
        assert!((report.norm_before_renormalize - want_norm).abs() / want_norm < 1e-10);
        let got = applied.to_dense().unwrap();
        // Compare up to the norm factor removed by renormalization.
        let mut worst = 0.0f64;
        for (g, w) in got.iter().zip(want.iter()) {
            worst = worst.max((g * C64::new(want_norm, 0.0) - w).norm());
        }
        assert!(worst < 1e-9 * want_norm, "deviation {worst:.3e}");
        assert!(!report.saturated);
    }

    #[test]
    fn compress_keeps_the_state_when_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mps = random_mps(&mut rng, &[2, 4, 4, 3], 6);
        let before = mps.to_dense().unwrap();
        let policy = TruncationPolicy::new(1e-15, 64).unwrap();
        let lost = mps.compress(&policy).unwrap();
        assert!(lost < 1e-12);
        let after = mps.to_dense().unwrap();
        // Global phase fixed by overlap.
        let dot: C64 = before.iter().zip(after.iter()).map(|(a, b)| a.conj() * b).sum();
        assert!((dot.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bond_entropy_of_product_state_is_zero() {
        let spin = array![
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
        ];
        let mut mps = MatrixProductState::spin_boson_product(&spin, &[4, 4]).unwrap();
        for site in 1..3 {
            assert!(mps.bond_entropy(site).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_x_expectation_on_plus_state() {
        let spin = array![
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
        ];
        let mut mps = MatrixProductState::spin_boson_product(&spin, &[3]).unwrap();
        let sx = mps.expectation_one_site(0, &sigma_x().view()).unwrap();
        assert!((sx.re - 1.0).abs() < 1e-14);
        let n_op = boson_number(3);
        let occ = mps.expectation_one_site(1, &n_op.view()).unwrap();
        assert!(occ.norm() < 1e-14);
    }
}
