//! Post-processing: entropy, spin expectations, Fourier spectra, peak
//! localization, and power-law fits.
//!
//! These routines turn solver output (reduced density matrices, QFI time
//! traces, QFI-vs-coupling curves) into the derived quantities of interest:
//! von Neumann entropy against its ln 2 ceiling, dominant oscillation
//! frequencies, peak positions α_peak(h) with FWHM uncertainties, and the
//! critical-coupling extrapolation α(h) = -A h^B + C whose intercept C
//! estimates α_c.


use rand::{Rng, SeedableRng};
use rustfft::FftPlanner;
use thiserror::Error;

use crate::qfim::QubitDensityMatrix;

/// Errors from the analysis layer.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("series too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
    #[error("maximum sits on the scan boundary at index {index}; no interior peak")]
    BoundaryMaximum { index: usize },
    #[error("power-law fit precondition violated: {0}")]
    FitPrecondition(String),
    #[error("power-law fit did not converge from any start: {diagnostics}")]
    FitDiverged { diagnostics: String },
}

pub type AnalysisResult<T> = Result<T, AnalysisError>;

/// Real-valued samples on a uniform time grid t_k = t0 + k dt.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> AnalysisResult<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(AnalysisError::InvalidSeries(format!("dt must be positive, got {dt}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::InvalidSeries("non-finite sample".into()));
        }
        Ok(TimeSeries { t0, dt, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Mean of the final quarter of the samples, the stationary plateau used
    /// for detrending oscillations that ride on a finite value.
    pub fn final_quarter_mean(&self) -> f64 {
        let n = self.len();
        let start = n - (n / 4).max(1);
        let tail = &self.values[start..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// Write as CSV with header `t,value`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{:e},{:e}", self.time(k), v)?;
        }
        Ok(())
    }
}

/// von Neumann entropy S = -Σ λ ln λ in natural log units, with 0 ln 0 = 0.
///
/// For a qubit S ∈ [0, ln 2]; eigenvalues are clamped against the 1e-10
/// validation slack before taking logarithms.
pub fn von_neumann_entropy(rho: &QubitDensityMatrix) -> f64 {
    let [lo, hi] = rho.eigenvalues();
    let mut s = 0.0;
    for lambda in [lo, hi] {
        let l = lambda.clamp(0.0, 1.0);
        if l > 0.0 {
            s -= l * l.ln();
        }
    }
    s.max(0.0)
}

/// (⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩) of a qubit state. States tagged with the qubit
/// eigenbasis are rotated to the σ_z basis first.
pub fn spin_expectations(rho: &QubitDensityMatrix) -> (f64, f64, f64) {
    let m = rho.to_sigma_z_basis();
    let x = 2.0 * m[[0, 1]].re;
    let y = -2.0 * m[[0, 1]].im;
    let z = (m[[0, 0]] - m[[1, 1]]).re;
    (x, y, z)
}

/// Taper applied before the discrete Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralWindow {
    None,
    Hann,
}

/// One-sided magnitude spectrum of a real series.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Cyclic frequencies f_k = k / (N dt), k = 0..N/2.
    pub frequencies: Vec<f64>,
    /// |X_k| for the same bins.
    pub magnitudes: Vec<f64>,
    /// Cyclic bin width 1/(N dt).
    pub bin_width: f64,
    /// Σ|x_n|² (N·dt-free Parseval ratio vs Σ|X_k|²/N); 1 up to round-off.
    pub parseval_ratio: f64,
}

/// Dominant spectral line, located by parabolic interpolation of the
/// magnitude around the largest non-DC bin.
#[derive(Debug, Clone, Copy)]
pub struct DominantFrequency {
    /// Cyclic frequency (oscillations per unit time).
    pub cyclic: f64,
    /// Angular frequency 2π · cyclic.
    pub angular: f64,
    /// Interpolated peak magnitude.
    pub magnitude: f64,
    /// Cyclic bin width, the resolution of the estimate.
    pub bin_width: f64,
}

/// Magnitude spectrum plus dominant frequency of a uniformly sampled series.
///
/// `detrend` subtracts the mean of the final quarter (the stationary plateau)
/// before windowing, so oscillations riding on a finite offset do not leak a
/// large DC pedestal into neighboring bins.
pub fn fourier_spectrum(
    series: &TimeSeries,
    window: SpectralWindow,
    detrend: bool,
) -> AnalysisResult<(Spectrum, DominantFrequency)> {
    let n = series.len();
    if n < 4 {
        return Err(AnalysisError::TooShort { len: n, min: 4 });
    }
    let offset = if detrend { series.final_quarter_mean() } else { 0.0 };
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> = series
        .values
        .iter()
        .map(|&v| rustfft::num_complex::Complex::new(v - offset, 0.0))
        .collect();
    match window {
        SpectralWindow::None => {}
        SpectralWindow::Hann => {
            for (k, z) in buf.iter_mut().enumerate() {
                let w = 0.5
                    * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos());
                *z *= w;
            }
        }
    }
    let time_energy: f64 = buf.iter().map(|z| z.norm_sqr()).sum();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let freq_energy: f64 = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
    let parseval_ratio = if time_energy > 0.0 { freq_energy / time_energy } else { 1.0 };

    let bin_width = 1.0 / (n as f64 * series.dt);
    let half = n / 2;
    let frequencies: Vec<f64> = (0..=half).map(|k| k as f64 * bin_width).collect();
    let magnitudes: Vec<f64> = buf[..=half].iter().map(|z| z.norm()).collect();

    // Largest non-DC bin.
    let mut kmax = 1usize;
    for k in 2..=half {
        if magnitudes[k] > magnitudes[kmax] {
            kmax = k;
        }
    }
    // Parabolic interpolation through (kmax-1, kmax, kmax+1).
    let (shift, peak_mag) = if kmax + 1 <= half && kmax >= 1 {
        let a = magnitudes[kmax - 1];
        let b = magnitudes[kmax];
        let c = magnitudes[kmax + 1];
        let denom = a + c - 2.0 * b;
        if denom.abs() > 0.0 {
            let x = (a - c) / (2.0 * denom);
            let x = x.clamp(-0.5, 0.5);
            (x, b - 0.25 * (a - c) * x)
        } else {
            (0.0, b)
        }
    } else {
        (0.0, magnitudes[kmax])
    };
    let cyclic = (kmax as f64 + shift) * bin_width;
    let dominant = DominantFrequency {
        cyclic,
        angular: 2.0 * std::f64::consts::PI * cyclic,
        magnitude: peak_mag,
        bin_width,
    };
    Ok((Spectrum { frequencies, magnitudes, bin_width, parseval_ratio }, dominant))
}

impl Spectrum {
    /// Write as CSV with header `frequency_cyclic,frequency_angular,magnitude`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frequency_cyclic,frequency_angular,magnitude")?;
        for (f, m) in self.frequencies.iter().zip(&self.magnitudes) {
            writeln!(w, "{:e},{:e},{:e}", f, 2.0 * std::f64::consts::PI * f, m)?;
        }
        Ok(())
    }
}

/// Interior maximum of a sampled curve.
#[derive(Debug, Clone, Copy)]
pub struct PeakEstimate {
    /// Interpolated abscissa of the maximum (parameter units).
    pub location: f64,
    /// Interpolated curve value at the maximum.
    pub height: f64,
    /// Full width at half maximum, the location's uncertainty.
    pub fwhm: f64,
    /// True when a half-height crossing fell outside the scanned window and
    /// the width had to be inferred from one side or the window span.
    pub fwhm_clipped: bool,
}

/// Locate the interior maximum of a sampled curve by cubic interpolation.
///
/// Fits the cubic through the four samples bracketing the discrete maximum
/// (biased toward the larger neighbor), maximizes it inside the bracket, and
/// measures the FWHM by linear interpolation of the half-height crossings on
/// each side. A discrete maximum on the boundary is an error, not a guess.
pub fn find_peak(xs: &[f64], ys: &[f64]) -> AnalysisResult<PeakEstimate> {
    let n = xs.len();
    if n != ys.len() {
        return Err(AnalysisError::InvalidSeries(format!(
            "mismatched lengths {n} vs {}",
            ys.len()
        )));
    }
    if n < 5 {
        return Err(AnalysisError::TooShort { len: n, min: 5 });
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::InvalidSeries("abscissae must be strictly increasing".into()));
    }
    let imax = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    if imax == 0 || imax == n - 1 {
        return Err(AnalysisError::BoundaryMaximum { index: imax });
    }

    // Four-point stencil around the maximum, biased toward the larger
    // neighbor, clamped into range.
    let start = if imax + 1 < n && (imax < 2 || ys[imax + 1] >= ys[imax - 1]) {
        (imax - 1).min(n - 4)
    } else {
        imax.saturating_sub(2).min(n - 4)
    };
    let sx = &xs[start..start + 4];
    let sy = &ys[start..start + 4];
    let coeffs = cubic_through(sx, sy);
    // Maximize within the bracket [x_{imax-1}, x_{imax+1}].
    let (lo, hi) = (xs[imax - 1], xs[imax + 1]);
    let (location, height) = maximize_cubic(&coeffs, lo, hi, xs[imax], ys[imax]);

    // FWHM: walk outward from the peak to the half-height crossings.
    let half = 0.5 * height;
    let left = half_crossing(xs, ys, imax, half, true);
    let right = half_crossing(xs, ys, imax, half, false);
    let span = xs[n - 1] - xs[0];
    let (fwhm, fwhm_clipped) = match (left, right) {
        (Some(l), Some(r)) => (r - l, false),
        (Some(l), None) => (2.0 * (location - l), true),
        (None, Some(r)) => (2.0 * (r - location), true),
        (None, None) => (span, true),
    };
    Ok(PeakEstimate { location, height, fwhm: fwhm.max(f64::MIN_POSITIVE), fwhm_clipped })
}

/// Coefficients (c0..c3) of the cubic through four points, via Newton's
/// divided differences expanded to monomial form around x = 0.
fn cubic_through(xs: &[f64], ys: &[f64]) -> [f64; 4] {
    // Divided differences.
    let mut dd = [ys[0], ys[1], ys[2], ys[3]];
    for order in 1..4 {
        for i in (order..4).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (xs[i] - xs[i - order]);
        }
    }
    // Expand Newton form to monomials.
    let mut c = [0.0f64; 4];
    c[0] = dd[0];
    let mut basis = [1.0, 0.0, 0.0, 0.0]; // Π (x - x_j) so far
    for k in 1..4 {
        // basis *= (x - xs[k-1])
        let mut next = [0.0f64; 4];
        for i in 0..k {
            next[i + 1] += basis[i];
            next[i] -= basis[i] * xs[k - 1];
        }
        basis = next;
        for i in 0..4 {
            c[i] += dd[k] * basis[i];
        }
    }
    c
}

fn eval_cubic(c: &[f64; 4], x: f64) -> f64 {
    ((c[3] * x + c[2]) * x + c[1]) * x + c[0]
}

/// Maximum of the cubic on [lo, hi]; falls back to the discrete maximum if
/// no stationary point qualifies.
fn maximize_cubic(c: &[f64; 4], lo: f64, hi: f64, x_fallback: f64, y_fallback: f64) -> (f64, f64) {
    // Derivative 3 c3 x² + 2 c2 x + c1 = 0.
    let (a, b, k) = (3.0 * c[3], 2.0 * c[2], c[1]);
    let mut candidates: Vec<f64> = Vec::new();
    if a.abs() < 1e-300 {
        if b.abs() > 0.0 {
            candidates.push(-k / b);
        }
    } else {
        let disc = b * b - 4.0 * a * k;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // Numerically stable quadratic roots.
            let q = -0.5 * (b + b.signum() * sq);
            if q != 0.0 {
                candidates.push(q / a);
                candidates.push(k / q);
            } else {
                candidates.push(0.0);
            }
        }
    }
    let mut best = (x_fallback, y_fallback);
    for x in candidates {
        if x >= lo && x <= hi {
            let y = eval_cubic(c, x);
            if y > best.1 {
                best = (x, y);
            }
        }
    }
    best
}

/// Walk from the discrete peak toward one side until the curve falls below
/// `half`, then linearly interpolate the crossing.
fn half_crossing(xs: &[f64], ys: &[f64], imax: usize, half: f64, left: bool) -> Option<f64> {
    if left {
        for i in (0..imax).rev() {
            if ys[i] <= half {
                let t = (half - ys[i]) / (ys[i + 1] - ys[i]);
                return Some(xs[i] + t * (xs[i + 1] - xs[i]));
            }
        }
    } else {
        for i in imax + 1..xs.len() {
            if ys[i] <= half {
                let t = (half - ys[i - 1]) / (ys[i] - ys[i - 1]);
                return Some(xs[i - 1] + t * (xs[i] - xs[i - 1]));
            }
        }
    }
    None
}

/// Result of the three-parameter critical-scaling fit α(h) = -A h^B + C.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub a_err: f64,
    pub b_err: f64,
    pub c_err: f64,
    /// sqrt of the weighted sum of squared residuals.
    pub residual_norm: f64,
    /// sqrt(SSR / (n - 3)), the reduced residual.
    pub reduced_residual: f64,
    pub n_iter: usize,
}

impl PowerLawFit {
    /// The critical-coupling estimate α_c = α(h → 0⁺) = C with its error.
    pub fn alpha_c(&self) -> (f64, f64) {
        (self.c, self.c_err)
    }

    /// Structured fit report (params, errors, residuals, iterations).
    pub fn report(&self) -> String {
        format!(
            "A = {:.6e} +- {:.2e}\nB = {:.6e} +- {:.2e}\nC = {:.6e} +- {:.2e}\n\
             residual_norm = {:.3e}\nreduced_residual = {:.3e}\nn_iter = {}",
            self.a,
            self.a_err,
            self.b,
            self.b_err,
            self.c,
            self.c_err,
            self.residual_norm,
            self.reduced_residual,
            self.n_iter
        )
    }
}

/// Solve the 3x3 system m x = rhs by Gaussian elimination with partial
/// pivoting. Returns None when singular.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let mut piv = col;
        for r in col + 1..3 {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for c in col..3 {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = [0.0f64; 3];
    for r in (0..3).rev() {
        let mut s = rhs[r];
        for c in r + 1..3 {
            s -= m[r][c] * x[c];
        }
        x[r] = s / m[r][r];
    }
    Some(x)
}

/// Invert a symmetric positive-definite 3x3 matrix column by column.
fn inv3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut out = [[0.0f64; 3]; 3];
    for c in 0..3 {
        let mut e = [0.0f64; 3];
        e[c] = 1.0;
        let col = solve3(m, e)?;
        for r in 0..3 {
            out[r][c] = col[r];
        }
    }
    Some(out)
}

/// Fit α(h) = -A h^B + C by weighted damped Gauss-Newton.
///
/// `points` are (h, α_peak, σ) triples with weights 1/σ². For a given B the
/// model is linear in (A, C), so each start solves that subproblem exactly
/// before iterating on all three parameters; starts cover
/// B ∈ {0.1, 0.25, 0.5, 1} plus two seeded random values. Standard errors
/// come from the inverse Gauss-Newton normal matrix (unscaled: σ are taken
/// as known).
pub fn fit_power_law(points: &[(f64, f64, f64)]) -> AnalysisResult<PowerLawFit> {
    if points.len() < 4 {
        return Err(AnalysisError::FitPrecondition(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    let mut hmin = f64::INFINITY;
    let mut hmax = 0.0f64;
    for &(h, _, s) in points {
        if !(h > 0.0) {
            return Err(AnalysisError::FitPrecondition(format!("h must be positive, got {h}")));
        }
        if !(s > 0.0) {
            return Err(AnalysisError::FitPrecondition(format!(
                "uncertainties must be positive, got {s}"
            )));
        }
        hmin = hmin.min(h);
        hmax = hmax.max(h);
    }
    if hmax / hmin < 100.0 {
        return Err(AnalysisError::FitPrecondition(format!(
            "h range spans {:.2} decades, need at least 2",
            (hmax / hmin).log10()
        )));
    }

    let mut starts = vec![0.1, 0.25, 0.5, 1.0];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..2 {
        starts.push(rng.random_range(0.05..1.5));
    }

    let mut best: Option<(f64, PowerLawFit)> = None;
    let mut diagnostics = String::new();
    for b0 in starts {
        match gauss_newton_power_law(points, b0) {
            Ok(fit) => {
                let ssr = fit.residual_norm * fit.residual_norm;
                if best.as_ref().map_or(true, |(s, _)| ssr < *s) {
                    best = Some((ssr, fit));
                }
            }
            Err(e) => {
                diagnostics.push_str(&format!("start B={b0:.3}: {e}; "));
            }
        }
    }
    match best {
        Some((_, fit)) => Ok(fit),
        None => Err(AnalysisError::FitDiverged { diagnostics }),
    }
}

/// Weighted linear solve for (A, C) at fixed B, minimizing
/// Σ w (C - A h^B - y)².
fn linear_ac(points: &[(f64, f64, f64)], b: f64) -> Option<(f64, f64)> {
    let (mut sww, mut swx, mut swxx, mut swy, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(h, y, s) in points {
        let w = 1.0 / (s * s);
        let x = -h.powf(b); // model = A*x + C
        sww += w;
        swx += w * x;
        swxx += w * x * x;
        swy += w * y;
        swxy += w * x * y;
    }
    let det = sww * swxx - swx * swx;
    if det.abs() < 1e-300 {
        return None;
    }
    let a = (sww * swxy - swx * swy) / det;
    let c = (swxx * swy - swx * swxy) / det;
    Some((a, c))
}

fn gauss_newton_power_law(points: &[(f64, f64, f64)], b0: f64) -> Result<PowerLawFit, String> {
    let (mut a, mut c) =
        linear_ac(points, b0).ok_or_else(|| "degenerate linear subproblem".to_string())?;
    let mut b = b0;
    let ssr = |a: f64, b: f64, c: f64| -> f64 {
        points
            .iter()
            .map(|&(h, y, s)| {
                let r = (c - a * h.powf(b) - y) / s;
                r * r
            })
            .sum()
    };
    let mut current = ssr(a, b, c);
    let mut damping = 1e-6;
    let mut n_iter = 0usize;
    for iter in 0..200 {
        n_iter = iter + 1;
        // Normal equations JᵀWJ δ = JᵀW r on residuals r = y - model.
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for &(h, y, s) in points {
            let w = 1.0 / (s * s);
            let hb = h.powf(b);
            let model = c - a * hb;
            let r = y - model;
            let j = [-hb, -a * hb * h.ln(), 1.0]; // d model / d(A,B,C)
            for i in 0..3 {
                jtr[i] += w * j[i] * r;
                for k in 0..3 {
                    jtj[i][k] += w * j[i] * j[k];
                }
            }
        }
        // Damped step; retry with stronger damping on failure.
        let mut stepped = false;
        for _ in 0..30 {
            let mut m = jtj;
            for i in 0..3 {
                m[i][i] *= 1.0 + damping;
            }
            if let Some(step) = solve3(m, jtr) {
                let (na, nb, nc) = (a + step[0], b + step[1], c + step[2]);
                if nb.is_finite() && nb > 0.0 && nb < 20.0 {
                    let next = ssr(na, nb, nc);
                    if next.is_finite() && next <= current + 1e-14 {
                        let rel_step = step.iter().map(|x| x.abs()).fold(0.0, f64::max);
                        a = na;
                        b = nb;
                        c = nc;
                        let improved = current - next;
                        current = next;
                        damping = (damping * 0.3).max(1e-12);
                        stepped = true;
                        if rel_step < 1e-12 || improved < 1e-15 * current.max(1.0) {
                            n_iter = iter + 1;
                            let errs = fit_errors(points, a, b, c)
                                .ok_or_else(|| "singular normal matrix at optimum".to_string())?;
                            return Ok(build_fit(points, a, b, c, errs, current, n_iter));
                        }
                        break;
                    }
                }
            }
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
        if !stepped {
            break;
        }
    }
    if !current.is_finite() {
        return Err("residual not finite".to_string());
    }
    let errs =
        fit_errors(points, a, b, c).ok_or_else(|| "singular normal matrix at optimum".to_string())?;
    Ok(build_fit(points, a, b, c, errs, current, n_iter))
}

fn fit_errors(points: &[(f64, f64, f64)], a: f64, b: f64, c: f64) -> Option<[f64; 3]> {
    let _ = c;
    let mut jtj = [[0.0f64; 3]; 3];
    for &(h, _, s) in points {
        let w = 1.0 / (s * s);
        let hb = h.powf(b);
        let j = [-hb, -a * hb * h.ln(), 1.0];
        for i in 0..3 {
            for k in 0..3 {
                jtj[i][k] += w * j[i] * j[k];
            }
        }
    }
    let cov = inv3(jtj)?;
    Some([cov[0][0].max(0.0).sqrt(), cov[1][1].max(0.0).sqrt(), cov[2][2].max(0.0).sqrt()])
}

fn build_fit(
    points: &[(f64, f64, f64)],
    a: f64,
    b: f64,
    c: f64,
    errs: [f64; 3],
    ssr: f64,
    n_iter: usize,
) -> PowerLawFit {
    let dof = (points.len() as f64 - 3.0).max(1.0);
    PowerLawFit {
        a,
        b,
        c,
        a_err: errs[0],
        b_err: errs[1],
        c_err: errs[2],
        residual_norm: ssr.sqrt(),
        reduced_residual: (ssr / dof).sqrt(),
        n_iter,
    }
}

/// Result of the two-parameter pure power-law fit y = A x^B.
#[derive(Debug, Clone, Copy)]
pub struct PurePowerFit {
    pub amplitude: f64,
    pub exponent: f64,
    pub amplitude_err: f64,
    pub exponent_err: f64,
    /// sqrt of the weighted SSR in log space.
    pub residual_norm: f64,
}

/// Fit y = A x^B by weighted linear least squares in log-log space.
///
/// Weights follow from error propagation: σ_ln y = σ/y. Used for the
/// ultra-weak-coupling divergence F_αα ∝ 1/α, where the exponent is the
/// quantity of interest.
pub fn fit_pure_power(points: &[(f64, f64, f64)]) -> AnalysisResult<PurePowerFit> {
    if points.len() < 3 {
        return Err(AnalysisError::FitPrecondition(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, s) in points {
        if !(x > 0.0) || !(y > 0.0) || !(s > 0.0) {
            return Err(AnalysisError::FitPrecondition(
                "pure power fit needs positive x, y, and sigma".into(),
            ));
        }
        let w = (y / s) * (y / s);
        let lx = x.ln();
        let ly = y.ln();
        sw += w;
        swx += w * lx;
        swy += w * ly;
        swxx += w * lx * lx;
        swxy += w * lx * ly;
    }
    let det = sw * swxx - swx * swx;
    if det.abs() < 1e-300 {
        return Err(AnalysisError::FitPrecondition("degenerate abscissae".into()));
    }
    let exponent = (sw * swxy - swx * swy) / det;
    let ln_a = (swxx * swy - swx * swxy) / det;
    let ssr: f64 = points
        .iter()
        .map(|&(x, y, s)| {
            let w = (y / s) * (y / s);
            let r = y.ln() - (ln_a + exponent * x.ln());
            w * r * r
        })
        .sum();
    let amp = ln_a.exp();
    let exp_err = (sw / det).sqrt();
    let lna_err = (swxx / det).sqrt();
    Ok(PurePowerFit {
        amplitude: amp,
        exponent,
        amplitude_err: amp * lna_err,
        exponent_err: exp_err,
        residual_norm: ssr.sqrt(),
    })
}

/// Count strict sign changes in a series, with hysteresis: a change only
/// registers once the value moves at least `threshold` past zero on the
/// other side, so numerical jitter around zero is not counted.
pub fn count_sign_changes(values: &[f64], threshold: f64) -> usize {
    let mut count = 0usize;
    let mut last_sign = 0i8;
    for &v in values {
        let sign = if v > threshold {
            1
        } else if v < -threshold {
            -1
        } else {
            0
        };
        if sign != 0 {
            if last_sign != 0 && sign != last_sign {
                count += 1;
            }
            last_sign = sign;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qfim::{Basis, QubitDensityMatrix};
    use crate::C64;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn entropy_limits() {
        let mixed = QubitDensityMatrix::new(
            array![[c(0.5, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.5, 0.0)]],
            Basis::SigmaZ,
        )
        .unwrap();
        assert!((von_neumann_entropy(&mixed) - std::f64::consts::LN_2).abs() < 1e-14);
        let pure = QubitDensityMatrix::new(
            array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]],
            Basis::SigmaZ,
        )
        .unwrap();
        assert_eq!(von_neumann_entropy(&pure), 0.0);
    }

    #[test]
    fn spin_expectations_of_cardinal_states() {
        let down = QubitDensityMatrix::new(
            array![[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
            Basis::SigmaZ,
        )
        .unwrap();
        let (x, y, z) = spin_expectations(&down);
        assert!(x.abs() < 1e-15 && y.abs() < 1e-15 && (z + 1.0).abs() < 1e-15);
        let plus_x = QubitDensityMatrix::new(
            array![[c(0.5, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.5, 0.0)]],
            Basis::SigmaZ,
        )
        .unwrap();
        let (x, y, z) = spin_expectations(&plus_x);
        assert!((x - 1.0).abs() < 1e-15 && y.abs() < 1e-15 && z.abs() < 1e-15);
    }

    #[test]
    fn final_quarter_mean_is_tail_average() {
        let ts = TimeSeries::new(0.0, 1.0, vec![10.0, 10.0, 10.0, 10.0, 1.0, 2.0, 3.0, 2.0])
            .unwrap();
        assert!((ts.final_quarter_mean() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn sign_change_counting_with_hysteresis() {
        let v = [1.0, 0.001, -0.002, 1.0, -1.0, -0.5, 1.0];
        // threshold 0.01: the 0.001/-0.002 wiggle does not count.
        assert_eq!(count_sign_changes(&v, 0.01), 2);
        // threshold 0: every strict crossing counts.
        assert_eq!(count_sign_changes(&v, 0.0), 4);
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let xs = [0.5, 1.0, 1.5, 2.0];
        let f = |x: f64| 2.0 - (x - 1.2) * (x - 1.2) * (x - 0.1);
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let c = cubic_through(&xs, &ys);
        for &x in &[0.6, 0.9, 1.3, 1.9] {
            assert!((eval_cubic(&c, x) - f(x)).abs() < 1e-12);
        }
    }
}
