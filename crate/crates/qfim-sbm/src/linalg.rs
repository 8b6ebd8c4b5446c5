//! Thin complex linear-algebra layer shared by all solvers.
//!
//! Wraps the LAPACK-backed routines the crate actually needs (Hermitian
//! eigendecomposition, divide-and-conquer SVD with discarded-weight
//! truncation, linear solves) and implements the dense matrix exponential by
//! scaling-and-squaring with Padé approximants. Everything operates on
//! `ndarray` arrays of `Complex64`; matrix products go through BLAS via
//! `ndarray::dot`.

use ndarray::{Array1, Array2, ArrayView2, ShapeBuilder};
use ndarray_linalg::{Eigh, FactorizeInto, JobSvd, Solve, SVDDCInto, UPLO};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Errors from the linear-algebra layer.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |A - A†| = {deviation:.3e} exceeds {tol:.3e}")]
    NotHermitian { deviation: f64, tol: f64 },
    #[error("LAPACK backend failure: {0}")]
    Backend(String),
}

pub type LinalgResult<T> = Result<T, LinalgError>;

/// Conjugate transpose.
pub fn dagger(a: &ArrayView2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// Max-norm deviation from Hermiticity, max_ij |A_ij - conj(A_ji)|.
pub fn hermiticity_deviation(a: &ArrayView2<C64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            dev = dev.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    dev
}

/// Hermitian eigendecomposition. Eigenvalues ascending, eigenvectors as the
/// columns of the returned matrix.
pub fn eigh_c(a: &Array2<C64>) -> LinalgResult<(Array1<f64>, Array2<C64>)> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    // The backend hands row-major buffers to LAPACK as if column-major, which
    // silently diagonalizes A^T = conj(A) and returns conjugated vectors.
    // Copying to column-major first pins down the convention.
    let mut af = Array2::<C64>::zeros(a.raw_dim().f());
    af.assign(a);
    af.eigh(UPLO::Lower).map_err(|e| LinalgError::Backend(e.to_string()))
}

/// Eigenvalues of a real symmetric tridiagonal matrix (dense embedding; fine
/// for the chain sizes used here). Returned ascending.
pub fn eigvals_sym_tridiag(diag: &[f64], off: &[f64]) -> LinalgResult<Array1<f64>> {
    let n = diag.len();
    assert_eq!(off.len() + 1, n.max(1), "off-diagonal length must be n-1");
    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = diag[i];
        if i + 1 < n {
            m[[i, i + 1]] = off[i];
            m[[i + 1, i]] = off[i];
        }
    }
    let (vals, _) = m.eigh(UPLO::Lower).map_err(|e| LinalgError::Backend(e.to_string()))?;
    Ok(vals)
}

/// Eigendecomposition of a 2x2 Hermitian matrix in closed form.
///
/// Returns eigenvalues ascending and the unitary of eigenvectors as columns.
/// Numerically stable for the near-degenerate and near-diagonal cases that
/// show up when density matrices approach purity.
pub fn eigh2(a: &ArrayView2<C64>) -> ([f64; 2], Array2<C64>) {
    debug_assert_eq!(a.shape(), &[2, 2]);
    let a00 = a[[0, 0]].re;
    let a11 = a[[1, 1]].re;
    let off = a[[0, 1]];
    let b = off.norm();
    let half_tr = 0.5 * (a00 + a11);
    let half_diff = 0.5 * (a00 - a11);
    let r = (half_diff * half_diff + b * b).sqrt();
    let lo = half_tr - r;
    let hi = half_tr + r;
    if r == 0.0 || b == 0.0 && half_diff == 0.0 {
        return ([lo, hi], Array2::eye(2));
    }
    // Eigenvector for `hi`: (cos t, e^{-iφ} sin t) with tan 2t = b / half_diff.
    let phase = if b == 0.0 { C64::new(1.0, 0.0) } else { off / b };
    // Stable half-angle via the larger of the two constructions.
    let (c, s) = if half_diff >= 0.0 {
        let c2 = half_diff + r;
        let norm = (c2 * c2 + b * b).sqrt();
        (c2 / norm, b / norm)
    } else {
        let s2 = r - half_diff;
        let norm = (s2 * s2 + b * b).sqrt();
        (b / norm, s2 / norm)
    };
    let mut v = Array2::<C64>::zeros((2, 2));
    // Column 0: eigenvector of `lo`; column 1: of `hi`.
    v[[0, 1]] = C64::new(c, 0.0) * phase;
    v[[1, 1]] = C64::new(s, 0.0);
    v[[0, 0]] = C64::new(-s, 0.0) * phase;
    v[[1, 0]] = C64::new(c, 0.0);
    ([lo, hi], v)
}

/// Truncated singular value decomposition.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// Left singular vectors, shape (m, chi).
    pub u: Array2<C64>,
    /// Kept singular values, length chi.
    pub s: Array1<f64>,
    /// Right singular vectors (conjugate-transposed), shape (chi, n).
    pub vt: Array2<C64>,
    /// Relative discarded weight Σ_cut σ² / Σ_all σ².
    pub discarded_weight: f64,
    /// Number of singular values kept.
    pub rank: usize,
}

/// Divide-and-conquer SVD followed by discarded-weight truncation.
///
/// Keeps the smallest rank χ such that the discarded relative weight
/// Σ_{i≥χ} σ_i² / Σ_i σ_i² does not exceed `cutoff`, further capped by
/// `max_rank`. At least one singular value is always kept.
pub fn svd_truncated(a: Array2<C64>, cutoff: f64, max_rank: usize) -> LinalgResult<TruncatedSvd> {
    let (u, s, vt) = a
        .svddc_into(JobSvd::Some)
        .map_err(|e| LinalgError::Backend(e.to_string()))?;
    let u = u.expect("JobSvd::Some returns U");
    let vt = vt.expect("JobSvd::Some returns V^T");
    let total: f64 = s.iter().map(|x| x * x).sum();
    let k = s.len();
    let mut rank = k;
    if total > 0.0 {
        // Walk from the tail accumulating discarded weight.
        let mut acc = 0.0;
        let budget = cutoff * total;
        while rank > 1 {
            let next = acc + s[rank - 1] * s[rank - 1];
            if next > budget {
                break;
            }
            acc = next;
            rank -= 1;
        }
    }
    rank = rank.min(max_rank.max(1));
    let discarded: f64 = s.iter().skip(rank).map(|x| x * x).sum();
    let discarded_weight = if total > 0.0 { discarded / total } else { 0.0 };
    Ok(TruncatedSvd {
        u: u.slice(ndarray::s![.., ..rank]).to_owned(),
        s: s.slice(ndarray::s![..rank]).to_owned(),
        vt: vt.slice(ndarray::s![..rank, ..]).to_owned(),
        discarded_weight,
        rank,
    })
}

/// Kronecker product a ⊗ b.
pub fn kron(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::<C64>::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let f = a[[i, j]];
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &x| *o += f * x);
        }
    }
    out
}

/// 1-norm (maximum absolute column sum).
fn one_norm(a: &Array2<C64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let mut col = 0.0;
        for i in 0..a.nrows() {
            col += a[[i, j]].norm();
        }
        best = best.max(col);
    }
    best
}

/// Dense matrix exponential by scaling-and-squaring with Padé approximants.
///
/// Order-(3,5,7,9,13) Padé tables and switching thresholds follow
/// Higham, SIAM J. Matrix Anal. Appl. 26, 1179 (2005).
pub fn expm(a: &Array2<C64>) -> LinalgResult<Array2<C64>> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    const THETA: [(usize, f64); 4] = [
        (3, 1.495585217958292e-2),
        (5, 2.539398330063230e-1),
        (7, 9.504178996162932e-1),
        (9, 2.097847961257068e0),
    ];
    const THETA13: f64 = 5.371920351148152e0;
    let norm = one_norm(a);
    for &(m, theta) in &THETA {
        if norm <= theta {
            return pade_low(a, m);
        }
    }
    let s = if norm > THETA13 {
        ((norm / THETA13).log2().ceil() as i32).max(0)
    } else {
        0
    };
    let scaled = a.mapv(|z| z / C64::new(2f64.powi(s), 0.0));
    let mut x = pade13(&scaled)?;
    for _ in 0..s {
        x = x.dot(&x);
    }
    Ok(x)
}

fn pade_solve(u: Array2<C64>, v: Array2<C64>) -> LinalgResult<Array2<C64>> {
    // Solve (V - U) X = (V + U) column by column on a single LU factorization.
    let lhs = &v - &u;
    let rhs = &v + &u;
    let n = rhs.ncols();
    let mut out = Array2::<C64>::zeros(rhs.raw_dim());
    let f = lhs
        .factorize_into()
        .map_err(|e| LinalgError::Backend(e.to_string()))?;
    for j in 0..n {
        let col = rhs.column(j).to_owned();
        let x = f
            .solve(&col)
            .map_err(|e| LinalgError::Backend(e.to_string()))?;
        out.column_mut(j).assign(&x);
    }
    Ok(out)
}

fn pade_low(a: &Array2<C64>, order: usize) -> LinalgResult<Array2<C64>> {
    let b: &[f64] = match order {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => unreachable!("unsupported low Padé order"),
    };
    let n = a.nrows();
    let eye = Array2::<C64>::eye(n);
    let a2 = a.dot(a);
    // Even powers a^0, a^2, a^4, ... as needed.
    let mut powers = vec![eye.clone(), a2.clone()];
    while powers.len() < (order + 1) / 2 + 1 {
        let next = powers.last().unwrap().dot(&a2);
        powers.push(next);
    }
    let mut u_inner = Array2::<C64>::zeros((n, n));
    let mut v = Array2::<C64>::zeros((n, n));
    for (k, &coef) in b.iter().enumerate() {
        let c = C64::new(coef, 0.0);
        if k % 2 == 1 {
            u_inner = u_inner + powers[(k - 1) / 2].mapv(|z| z * c);
        } else {
            v = v + powers[k / 2].mapv(|z| z * c);
        }
    }
    let u = a.dot(&u_inner);
    pade_solve(u, v)
}

fn pade13(a: &Array2<C64>) -> LinalgResult<Array2<C64>> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let eye = Array2::<C64>::eye(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let c = |i: usize| C64::new(B[i], 0.0);
    let u_hi = a6.dot(&(a6.mapv(|z| z * c(13)) + a4.mapv(|z| z * c(11)) + a2.mapv(|z| z * c(9))));
    let u_lo = a6.mapv(|z| z * c(7)) + a4.mapv(|z| z * c(5)) + a2.mapv(|z| z * c(3)) + eye.mapv(|z| z * c(1));
    let u = a.dot(&(u_hi + u_lo));
    let v_hi = a6.dot(&(a6.mapv(|z| z * c(12)) + a4.mapv(|z| z * c(10)) + a2.mapv(|z| z * c(8))));
    let v = v_hi + a6.mapv(|z| z * c(6)) + a4.mapv(|z| z * c(4)) + a2.mapv(|z| z * c(2)) + eye.mapv(|z| z * c(0));
    pade_solve(u, v)
}
