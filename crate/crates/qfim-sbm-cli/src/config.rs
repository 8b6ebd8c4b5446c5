//! Run configuration: a single strict TOML document per run.
//!
//! Every run is identified by a hash of its canonical configuration, so
//! outputs are traceable to the exact parameters that produced them and
//! identical configs land on identical run IDs. Unknown keys are rejected
//! everywhere: sweeps are expensive and a silently ignored typo (say
//! `svd_cutof`) could waste hours.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qfim_sbm::model::{BathScheme, ModelParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Subcommand selector, also embedded in the config for cross-checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    StaticSweep,
    Dynamics,
    Lindblad,
    Fit,
    Validate,
}

impl std::fmt::Display for CommandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CommandKind::StaticSweep => "static-sweep",
            CommandKind::Dynamics => "dynamics",
            CommandKind::Lindblad => "lindblad",
            CommandKind::Fit => "fit",
            CommandKind::Validate => "validate",
        };
        f.write_str(s)
    }
}

/// Physical model block. `alpha`, `h`, `beta` are the base values; the
/// static sweep overrides them point by point from the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "ten")]
    pub omega_c: f64,
    #[serde(default = "one")]
    pub s: f64,
    pub n_modes: usize,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub h: f64,
    #[serde(default)]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}

impl ModelBlock {
    /// Assemble validated `ModelParams` at the given sweep coordinates.
    pub fn params_at(&self, alpha: f64, h: f64, beta: f64) -> Result<ModelParams> {
        let p = ModelParams {
            delta: self.delta,
            h,
            alpha,
            beta,
            s: self.s,
            omega_c: self.omega_c,
            n_modes: self.n_modes,
        };
        p.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(p)
    }
}

/// Bath discretization block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathBlock {
    /// `{ kind = "linear" }` or `{ kind = "logarithmic", decades = 6.0 }`.
    #[serde(default = "default_scheme")]
    pub scheme: BathScheme,
}

fn default_scheme() -> BathScheme {
    BathScheme::Linear
}

impl Default for BathBlock {
    fn default() -> Self {
        BathBlock { scheme: default_scheme() }
    }
}

/// Solver knobs shared by ground-state and evolution runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    /// DMRG singular-value cutoff.
    #[serde(default = "default_dmrg_cutoff")]
    pub svd_cutoff: f64,
    /// Bond-dimension cap for statics and dynamics alike.
    #[serde(default = "default_max_bond")]
    pub max_bond: usize,
    /// Boson local dimension; omit to follow the coupling schedule
    /// (8 for α ≤ 0.5, 14 for α ≤ 0.9, 20 above).
    #[serde(default)]
    pub boson_dim: Option<usize>,
    /// Taper: sites at index ≥ `taper_head` (counting bosonic sites from
    /// the spin) use `taper_dim` instead of the full dimension. 0 disables.
    #[serde(default)]
    pub taper_head: usize,
    #[serde(default)]
    pub taper_dim: usize,
    /// Re-run each point with the boson dimension raised by `d_gate_step`
    /// and record the relative shift of F_αα; the result is convergence-
    /// gated at `d_gate_rel`.
    #[serde(default)]
    pub d_gate: bool,
    #[serde(default = "default_gate_step")]
    pub d_gate_step: usize,
    #[serde(default = "default_gate_rel")]
    pub d_gate_rel: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
    /// Also contract ⟨(H−E)²⟩ per point (one extra two-layer pass).
    #[serde(default)]
    pub compute_variance: bool,
    /// Central-difference step for ∂ρ/∂α.
    #[serde(default = "default_fd_alpha")]
    pub fd_delta_alpha: f64,
    /// Central-difference step for ∂ρ/∂Δ, in units of Δ.
    #[serde(default = "default_fd_delta")]
    pub fd_delta_delta: f64,
    /// Richardson-extrapolated stencils (doubles the DMRG evaluations,
    /// attaches a two-step error estimate).
    #[serde(default)]
    pub richardson: bool,
    /// Evolution time step (dynamics only).
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Evolution horizon (dynamics only).
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Record every this-many steps (dynamics only).
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    /// SVD cutoff for evolution; statics keep `svd_cutoff`.
    #[serde(default = "default_evolution_cutoff")]
    pub evolution_cutoff: f64,
}

fn default_dmrg_cutoff() -> f64 {
    1e-12
}
fn default_max_bond() -> usize {
    64
}
fn default_gate_step() -> usize {
    4
}
fn default_gate_rel() -> f64 {
    0.02
}
fn default_max_sweeps() -> usize {
    30
}
fn default_energy_tol() -> f64 {
    1e-10
}
fn default_fd_alpha() -> f64 {
    1e-3
}
fn default_fd_delta() -> f64 {
    1e-3
}
fn default_dt() -> f64 {
    0.01
}
fn default_t_final() -> f64 {
    30.0
}
fn default_stride() -> usize {
    10
}
fn default_evolution_cutoff() -> f64 {
    1e-10
}

impl Default for SolverBlock {
    fn default() -> Self {
        toml::from_str("").expect("empty solver block deserializes from defaults")
    }
}

impl SolverBlock {
    /// Boson local dimension at coupling `alpha`: explicit override or the
    /// documented schedule.
    pub fn boson_dim_at(&self, alpha: f64) -> usize {
        match self.boson_dim {
            Some(d) => d,
            None => {
                if alpha <= 0.5 {
                    8
                } else if alpha <= 0.9 {
                    14
                } else {
                    20
                }
            }
        }
    }

    /// Per-site local dimensions for `n_modes` bosonic sites at base
    /// dimension `d`, honoring the taper.
    pub fn local_dims(&self, n_modes: usize, d: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(n_modes + 1);
        dims.push(2);
        for i in 0..n_modes {
            if self.taper_head > 0 && i >= self.taper_head && self.taper_dim >= 2 {
                dims.push(self.taper_dim.min(d));
            } else {
                dims.push(d);
            }
        }
        dims
    }
}

/// Sweep grids for the static command. `h` and `beta` default to the
/// model-block values as singleton grids.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub h: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
}

/// Lindblad-specific settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladBlock {
    /// "population-rate" (golden rule, default) or "coherence-rate".
    #[serde(default = "default_convention")]
    pub convention: String,
    /// "sum" (default) or "difference" principal-value combination.
    #[serde(default = "default_integrand")]
    pub integrand: String,
    /// "consistent" (default) or "printed" F_αα variant.
    #[serde(default = "default_form")]
    pub form: String,
    /// Optional dynamics CSV to align against (emits a comparison table).
    #[serde(default)]
    pub compare_csv: Option<PathBuf>,
    /// Moving-average window for the comparison, in time units; defaults
    /// to one renormalized oscillation period 2π/Δ_r.
    #[serde(default)]
    pub avg_window: Option<f64>,
}

fn default_convention() -> String {
    "population-rate".into()
}
fn default_integrand() -> String {
    "sum".into()
}
fn default_form() -> String {
    "consistent".into()
}

impl Default for LindbladBlock {
    fn default() -> Self {
        toml::from_str("").expect("empty lindblad block deserializes from defaults")
    }
}

/// Fit-stage settings; consumes static-sweep CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    /// Static-sweep CSV files, one per h value for peak fits.
    pub inputs: Vec<PathBuf>,
    /// "peak-power-law": peak per input, then α(h) = −Ah^B + C.
    /// "pure-power": single input, F = A·α^B over the α grid.
    #[serde(default = "default_fit_mode")]
    pub mode: String,
    /// Column holding the fitted quantity.
    #[serde(default = "default_fit_column")]
    pub column: String,
    /// Abscissa uncertainty for peak locations; defaults to half the local
    /// grid spacing.
    #[serde(default)]
    pub sigma_alpha: Option<f64>,
    /// Relative ordinate uncertainty for pure-power fits.
    #[serde(default = "default_rel_sigma")]
    pub rel_sigma: f64,
}

fn default_fit_mode() -> String {
    "peak-power-law".into()
}
fn default_fit_column() -> String {
    "f_alpha_alpha".into()
}
fn default_rel_sigma() -> f64 {
    0.02
}

/// Validation-suite settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateBlock {
    /// Number of random full-rank qubit states for the route-equivalence
    /// property.
    #[serde(default = "default_n_random")]
    pub n_random_states: usize,
}

fn default_n_random() -> usize {
    1000
}

impl Default for ValidateBlock {
    fn default() -> Self {
        ValidateBlock { n_random_states: default_n_random() }
    }
}

/// Output location block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

/// The full run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: CommandKind,
    pub model: ModelBlock,
    #[serde(default)]
    pub bath: BathBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub lindblad: Option<LindbladBlock>,
    #[serde(default)]
    pub fit: Option<FitBlock>,
    #[serde(default)]
    pub validate: Option<ValidateBlock>,
    pub output: OutputBlock,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl RunConfig {
    /// Parse and validate a TOML config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate_shape()?;
        Ok(cfg)
    }

    /// Structural validation beyond field types: version, grids, blocks.
    pub fn validate_shape(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (this build reads {})",
                self.schema_version,
                SCHEMA_VERSION
            );
        }
        self.model.params_at(self.model.alpha, self.model.h, self.model.beta)?;
        match self.command {
            CommandKind::StaticSweep => {
                if self.grid.alpha.is_empty() {
                    bail!("static-sweep requires a non-empty grid.alpha");
                }
                for (name, g) in [("alpha", &self.grid.alpha), ("h", &self.grid.h), ("beta", &self.grid.beta)] {
                    for &v in g {
                        if !v.is_finite() {
                            bail!("grid.{name} contains a non-finite value");
                        }
                    }
                }
                for &a in &self.grid.alpha {
                    if a < 0.0 {
                        bail!("grid.alpha values must be non-negative");
                    }
                }
            }
            CommandKind::Fit => {
                let fit = self.fit.as_ref().context("fit command requires a [fit] block")?;
                if fit.inputs.is_empty() {
                    bail!("fit.inputs must list at least one sweep CSV");
                }
                match fit.mode.as_str() {
                    "peak-power-law" | "pure-power" => {}
                    other => bail!("unknown fit.mode {other:?}"),
                }
            }
            CommandKind::Lindblad => {
                let lb = self.lindblad.clone().unwrap_or_default();
                for (field, value, allowed) in [
                    ("convention", lb.convention.as_str(), &["population-rate", "coherence-rate"][..]),
                    ("integrand", lb.integrand.as_str(), &["sum", "difference"][..]),
                    ("form", lb.form.as_str(), &["consistent", "printed"][..]),
                ] {
                    if !allowed.contains(&value) {
                        bail!("lindblad.{field} must be one of {allowed:?}, got {value:?}");
                    }
                }
            }
            CommandKind::Dynamics | CommandKind::Validate => {}
        }
        if !(self.solver.dt > 0.0 && self.solver.t_final > 0.0) {
            bail!("solver.dt and solver.t_final must be positive");
        }
        if self.solver.sample_stride == 0 {
            bail!("solver.sample_stride must be at least 1");
        }
        Ok(())
    }

    /// Twelve-hex-digit run identifier: SHA-256 over the canonical JSON
    /// form of the config. Identical configs always map to the same ID.
    pub fn run_id(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut id = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            id.push_str(&format!("{byte:02x}"));
        }
        id
    }

    /// Grid points in output order: h-major, then β, then α ascending runs
    /// (each (h, β) pair is one warm-start chain).
    pub fn static_chains(&self) -> Vec<ChainSpec> {
        let hs: Vec<f64> = if self.grid.h.is_empty() { vec![self.model.h] } else { self.grid.h.clone() };
        let betas: Vec<f64> =
            if self.grid.beta.is_empty() { vec![self.model.beta] } else { self.grid.beta.clone() };
        let mut chains = Vec::new();
        let mut id = 0usize;
        for &h in &hs {
            for &beta in &betas {
                chains.push(ChainSpec { chain: id, h, beta, alphas: self.grid.alpha.clone() });
                id += 1;
            }
        }
        chains
    }
}

/// One warm-start scan: fixed (h, β), ascending α grid.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub chain: usize,
    pub h: f64,
    pub beta: f64,
    pub alphas: Vec<f64>,
}
