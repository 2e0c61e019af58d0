//! Simulation configuration, unit conventions and the discretized frequency
//! continuum.
//!
//! Units: hbar = 1, group velocity v_g = 1. Emitter and slab coordinates in
//! configuration files are given in units of the reference wavelength
//! `lambda = 2 pi / omega_ref`; everything downstream of [`ResolvedConfig`]
//! works in physical (normalized) lengths.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{EnvironmentSpec, SlabSpec};
use crate::hierarchy::InitialState;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    /// Position in units of the reference wavelength.
    pub position: f64,
    /// Transition frequency omega_a.
    pub omega: f64,
    /// Effective dimensionless dipole d_eff.
    pub dipole: f64,
    #[serde(default)]
    pub initially_excited: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    #[default]
    GaussLegendre,
    Trapezoid,
}

/// Quadrature nodes and weights on `[omega_min, omega_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub rule: QuadratureRule,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl FrequencyGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

pub fn build_grid(omega_min: f64, omega_max: f64, q: usize, rule: QuadratureRule) -> Result<FrequencyGrid> {
    if !(omega_min > 0.0 && omega_min < omega_max && omega_max.is_finite()) {
        return Err(Error::InvalidBounds {
            min: omega_min,
            max: omega_max,
        });
    }
    if q < 2 {
        return Err(Error::InvalidCount(q));
    }
    let half = 0.5 * (omega_max - omega_min);
    let mid = 0.5 * (omega_max + omega_min);
    let (nodes, weights) = match rule {
        QuadratureRule::GaussLegendre => {
            let (x, w) = gauss_legendre(q);
            (
                x.iter().map(|&x| mid + half * x).collect(),
                w.iter().map(|&w| half * w).collect(),
            )
        }
        QuadratureRule::Trapezoid => {
            let h = (omega_max - omega_min) / (q - 1) as f64;
            let nodes = (0..q)
                .map(|i| if i == q - 1 { omega_max } else { omega_min + h * i as f64 })
                .collect();
            let weights = (0..q)
                .map(|i| if i == 0 || i == q - 1 { 0.5 * h } else { h })
                .collect();
            (nodes, weights)
        }
    };
    Ok(FrequencyGrid {
        nodes,
        weights,
        rule,
        omega_min,
        omega_max,
    })
}

/// Legendre nodes (ascending) and weights on [-1, 1] by Newton iteration on
/// the three-term recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        // z descends from near +1; mirror into ascending order
        x[n - 1 - i] = z;
        x[i] = -z;
        w[n - 1 - i] = wi;
        w[i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (z * p1 - p0) / (z * z - 1.0))
}

// ---------------------------------------------------------------------------
// Configuration file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlabConfig {
    pub x1: f64,
    pub x2: f64,
    pub eps_re: f64,
    #[serde(default)]
    pub eps_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    #[serde(rename = "free-space-1d")]
    FreeSpace1d,
    MirroredWaveguide {
        #[serde(default)]
        slabs: Vec<SlabConfig>,
    },
    /// CSV with columns `omega,i,j,im_g`; indices refer to emitter order.
    Tabulated { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub rule: QuadratureRule,
    #[serde(default = "default_q")]
    pub q: usize,
    /// Half-width of the window around the reference frequency.
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub omega_min: Option<f64>,
    #[serde(default)]
    pub omega_max: Option<f64>,
}

fn default_q() -> usize {
    256
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::GaussLegendre,
            q: default_q(),
            half_width: None,
            omega_min: None,
            omega_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default)]
    pub t_end: Option<f64>,
    /// End time in units of 1/Gamma_0.
    #[serde(default)]
    pub t_end_lifetimes: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub allow_large_step: bool,
    /// Energy offset per excitation subtracted from the generator (a global
    /// phase in the two-excitation manifold). Defaults to the reference
    /// frequency; set to 0 for the unshifted lab frame.
    #[serde(default)]
    pub frame_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "yes")]
    pub populations: bool,
    #[serde(default = "yes")]
    pub density_matrix: bool,
    #[serde(default)]
    pub dicke: bool,
    #[serde(default)]
    pub field_map: bool,
    #[serde(default)]
    pub jsd: bool,
    #[serde(default)]
    pub gamma_spectra: bool,
    /// Upper bound on recorded samples; the cadence is derived from it.
    #[serde(default = "default_samples")]
    pub max_samples: usize,
}

fn yes() -> bool {
    true
}

fn default_samples() -> usize {
    2000
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            populations: true,
            density_matrix: true,
            dicke: false,
            field_map: false,
            jsd: false,
            gamma_spectra: false,
            max_samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldGridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    /// Field samples are taken every `every` recorded observable samples.
    #[serde(default = "one")]
    pub every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationConvention {
    /// N(omega) = scale * omega / sqrt(pi).
    #[default]
    OmegaOverSqrtPi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    #[serde(default)]
    pub convention: NormalizationConvention,
    #[serde(default = "unit")]
    pub scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            convention: NormalizationConvention::OmegaOverSqrtPi,
            scale: 1.0,
        }
    }
}

impl Normalization {
    pub fn factor(&self, omega: f64) -> f64 {
        match self.convention {
            NormalizationConvention::OmegaOverSqrtPi => self.scale * omega / PI.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub emitters: Vec<EmitterSpec>,
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub initial_state: InitialState,
    pub time: TimeConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub field_grid: Option<FieldGridConfig>,
    #[serde(default)]
    pub normalization: Normalization,
    /// Frequency defining lambda and the grid centre; defaults to emitter 1.
    #[serde(default)]
    pub reference_frequency: Option<f64>,
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn reference_frequency(&self) -> f64 {
        self.reference_frequency
            .or_else(|| self.emitters.first().map(|e| e.omega))
            .unwrap_or(1.0)
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * PI / self.reference_frequency()
    }

    pub fn grid_bounds(&self) -> (f64, f64) {
        let w0 = self.reference_frequency();
        let hw = self.grid.half_width.unwrap_or(0.5 * w0);
        (
            self.grid.omega_min.unwrap_or(w0 - hw),
            self.grid.omega_max.unwrap_or(w0 + hw),
        )
    }
}

/// Default stability guard: dt <= 0.5 / omega_max.
pub const STEP_GUARD: f64 = 0.5;
/// Default step: dt = 0.1 / omega_max.
pub const DEFAULT_STEP: f64 = 0.1;

/// Checks every configuration invariant and returns the violations found.
pub fn validate_config(cfg: &SimulationConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.schema_version != SCHEMA_VERSION {
        out.push(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        ));
    }
    if cfg.emitters.is_empty() {
        out.push("no emitters".into());
    }
    for (a, e) in cfg.emitters.iter().enumerate() {
        if !(e.position >= 0.0) {
            out.push(format!("emitter {} has negative position {}", a + 1, e.position));
        }
        if !(e.omega > 0.0) {
            out.push(format!("emitter {} has nonpositive transition frequency", a + 1));
        }
        if !(e.dipole > 0.0) {
            out.push(format!("emitter {} has nonpositive dipole", a + 1));
        }
    }
    let mut duplicate = false;
    for a in 0..cfg.emitters.len() {
        for b in a + 1..cfg.emitters.len() {
            if cfg.emitters[a].position == cfg.emitters[b].position {
                duplicate = true;
            }
        }
    }
    if duplicate {
        out.push("duplicate emitter position".into());
    }

    if let EnvironmentConfig::MirroredWaveguide { slabs } = &cfg.environment {
        let mut prev = 0.0;
        for (s, slab) in slabs.iter().enumerate() {
            if !(slab.x1 > 0.0 && slab.x1 < slab.x2) {
                out.push(format!("slab {} needs 0 < x1 < x2", s + 1));
            }
            if slab.eps_im < 0.0 {
                out.push(format!("slab {} is not passive (eps_im < 0)", s + 1));
            }
            if slab.x1 < prev {
                out.push(format!("slab {} overlaps or is out of order", s + 1));
            }
            prev = slab.x2;
        }
    }

    let (lo, hi) = cfg.grid_bounds();
    if !(lo > 0.0 && lo < hi) {
        out.push(format!("invalid frequency window [{lo}, {hi}]"));
    }
    if cfg.grid.q < 2 {
        out.push("grid needs at least 2 nodes".into());
    }

    match (cfg.time.t_end, cfg.time.t_end_lifetimes) {
        (None, None) => out.push("time.t_end or time.t_end_lifetimes is required".into()),
        (Some(_), Some(_)) => out.push("give only one of time.t_end and time.t_end_lifetimes".into()),
        _ => {}
    }
    if let Some(dt) = cfg.time.dt {
        if !(dt > 0.0) {
            out.push("nonpositive time step".into());
        } else {
            if let Some(t_end) = cfg.time.t_end {
                if t_end < dt {
                    out.push("t_end shorter than one time step".into());
                }
            }
            if !cfg.time.allow_large_step && hi > 0.0 && dt > STEP_GUARD / hi {
                out.push(format!(
                    "time step {dt} exceeds the stability guard {} (set allow_large_step to override)",
                    STEP_GUARD / hi
                ));
            }
        }
    }
    for v in [cfg.time.t_end, cfg.time.t_end_lifetimes].into_iter().flatten() {
        if !(v > 0.0) {
            out.push("nonpositive end time".into());
        }
    }

    if let Err(e) = cfg.initial_state.validate(cfg.emitters.len(), &cfg.emitters) {
        out.push(e.to_string());
    }

    if let Some(fg) = &cfg.field_grid {
        if fg.points < 1 || !(fg.x_max >= fg.x_min) {
            out.push("field grid needs x_min <= x_max and at least one point".into());
        }
        if matches!(cfg.environment, EnvironmentConfig::Tabulated { .. }) {
            out.push("field maps need an analytic environment, not a tabulated one".into());
        }
    }
    if cfg.outputs.max_samples < 2 {
        out.push("outputs.max_samples must be at least 2".into());
    }
    if !(cfg.normalization.scale > 0.0) {
        out.push("normalization scale must be positive".into());
    }
    out
}

/// Fully resolved run parameters in physical units.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub name: String,
    pub reference_frequency: f64,
    pub wavelength: f64,
    /// Physical emitter positions.
    pub positions: Vec<f64>,
    pub emitters: Vec<EmitterSpec>,
    pub environment: EnvironmentSpec,
    pub grid: FrequencyGrid,
    pub gamma0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub steps: usize,
    pub sample_every: usize,
    pub frame_frequency: f64,
    pub allow_large_step: bool,
    pub normalization: Normalization,
    pub initial_state: InitialState,
    pub field_points: Vec<f64>,
    pub field_every: usize,
    pub outputs: OutputConfig,
}

impl SimulationConfig {
    /// Resolves defaults and converts to physical units. The environment of a
    /// tabulated config is resolved without its table; callers load it.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let diagnostics = validate_config(self);
        if !diagnostics.is_empty() {
            return Err(Error::Config(diagnostics.join("; ")));
        }
        let w0 = self.reference_frequency();
        let lambda = self.wavelength();
        let (lo, hi) = self.grid_bounds();
        let grid = build_grid(lo, hi, self.grid.q, self.grid.rule)?;
        let environment = match &self.environment {
            EnvironmentConfig::FreeSpace1d => EnvironmentSpec::FreeSpace1d,
            EnvironmentConfig::MirroredWaveguide { slabs } => EnvironmentSpec::MirroredWaveguide {
                slabs: slabs
                    .iter()
                    .map(|s| SlabSpec::new(s.x1 * lambda, s.x2 * lambda, num_complex::Complex64::new(s.eps_re, s.eps_im)))
                    .collect(),
            },
            EnvironmentConfig::Tabulated { .. } => EnvironmentSpec::Tabulated,
        };
        let first = &self.emitters[0];
        let gamma0 = free_space_rate(first.omega, first.dipole, &self.normalization);
        let t_end = match (self.time.t_end, self.time.t_end_lifetimes) {
            (Some(t), _) => t,
            (None, Some(n)) => n / gamma0,
            _ => unreachable!("validated"),
        };
        let dt = self.time.dt.unwrap_or(DEFAULT_STEP / hi);
        if t_end < dt {
            return Err(Error::Config("t_end shorter than one time step".into()));
        }
        let steps = (t_end / dt).round().max(1.0) as usize;
        let sample_every = steps.div_ceil(self.outputs.max_samples - 1).max(1);
        let (field_points, field_every) = match &self.field_grid {
            Some(fg) => {
                let pts = if fg.points == 1 {
                    vec![fg.x_min * lambda]
                } else {
                    (0..fg.points)
                        .map(|i| (fg.x_min + (fg.x_max - fg.x_min) * i as f64 / (fg.points - 1) as f64) * lambda)
                        .collect()
                };
                (pts, fg.every.max(1))
            }
            None => (Vec::new(), 1),
        };
        Ok(ResolvedConfig {
            name: self.name.clone(),
            reference_frequency: w0,
            wavelength: lambda,
            positions: self.emitters.iter().map(|e| e.position * lambda).collect(),
            emitters: self.emitters.clone(),
            environment,
            grid,
            gamma0,
            t_end,
            dt,
            steps,
            sample_every,
            frame_frequency: self.time.frame_frequency.unwrap_or(w0),
            allow_large_step: self.time.allow_large_step,
            normalization: self.normalization,
            initial_state: self.initial_state.clone(),
            field_points,
            field_every,
            outputs: self.outputs.clone(),
        })
    }
}

/// Fermi-golden-rule rate 2 pi N(omega)^2 d^2 Im G(x, x, omega) of a single
/// emitter in the 1D free-space environment, Im G = 1 / (2 omega).
pub fn free_space_rate(omega: f64, dipole: f64, norm: &Normalization) -> f64 {
    let n = norm.factor(omega);
    2.0 * PI * n * n * dipole * dipole / (2.0 * omega)
}
