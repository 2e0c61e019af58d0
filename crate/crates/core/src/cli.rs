//! Command-line front end: argument parsing, overrides and all file output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecm::write_gamma_spectra;
use crate::error::{Error, Result};
use crate::greens::{load_tabulated, save_tabulated, GreensTable};
use crate::hierarchy::ConsistencyReport;
use crate::model::{EnvironmentConfig, ResolvedConfig, SimulationConfig, SlabConfig};
use crate::observables::{bell_fidelities, concurrence, JsdReport};
use crate::pipeline::{prepare, simulate, RunResult, Sample};
use crate::validation::{run_suite, Level};

pub const THREADS_ENV: &str = "QED2X_THREADS";

#[derive(Debug, Parser)]
#[command(name = "qed2x", version, about = "Two-excitation waveguide QED in structured 1D environments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValidateLevel {
    Quick,
    Full,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Overrides {
    /// Time step, overriding the config.
    #[arg(long)]
    pub dt: Option<f64>,
    /// End time in units of 1/omega, overriding the config.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Number of quadrature nodes.
    #[arg(long = "grid-q")]
    pub grid_q: Option<usize>,
    /// Half-width of the frequency window around the reference frequency.
    #[arg(long = "grid-window")]
    pub grid_window: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its observables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Reserved; the dynamics are deterministic.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run the invariant suite.
    Validate {
        #[arg(value_enum, default_value = "quick")]
        level: ValidateLevel,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Trapping phase map over emitter spacing and slab thickness.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export the Green's table and the ECM spectra of a scenario.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Worker count: the requested parallelism capped by `QED2X_THREADS`.
pub fn thread_count(requested: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&v| v > 0);
    let n = requested.unwrap_or(available).max(1);
    cap.map_or(n, |c| n.min(c))
}

pub fn apply_overrides(cfg: &mut SimulationConfig, o: &Overrides) {
    if let Some(dt) = o.dt {
        cfg.time.dt = Some(dt);
    }
    if let Some(t) = o.t_end {
        cfg.time.t_end = Some(t);
        cfg.time.t_end_lifetimes = None;
    }
    if let Some(q) = o.grid_q {
        cfg.grid.q = q;
    }
    if let Some(w) = o.grid_window {
        cfg.grid.half_width = Some(w);
        cfg.grid.omega_min = None;
        cfg.grid.omega_max = None;
    }
}

pub fn read_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SimulationConfig::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Resolves the config and loads the Green's table of a tabulated
/// environment, with its path taken relative to the config file.
pub fn load_scenario(cfg: &SimulationConfig, config_path: &Path) -> Result<(ResolvedConfig, Option<GreensTable>)> {
    let resolved = cfg.resolve()?;
    let table = match &cfg.environment {
        EnvironmentConfig::Tabulated { path } => {
            let p = config_path.parent().unwrap_or(Path::new(".")).join(path);
            Some(load_tabulated(&p, &resolved.grid)?.with_positions(&resolved.positions)?)
        }
        _ => None,
    };
    Ok((resolved, table))
}

/// The config with every default made explicit.
pub fn effective_config(cfg: &SimulationConfig, r: &ResolvedConfig) -> SimulationConfig {
    let mut out = cfg.clone();
    out.reference_frequency = Some(r.reference_frequency);
    out.grid.half_width = None;
    out.grid.omega_min = Some(r.grid.omega_min);
    out.grid.omega_max = Some(r.grid.omega_max);
    out.time.t_end = Some(r.t_end);
    out.time.t_end_lifetimes = None;
    out.time.dt = Some(r.dt);
    out.time.frame_frequency = Some(r.frame_frequency);
    out
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(f)))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Sample times are step * dt; rounding hides the last-bit accumulation.
fn time(t: f64) -> String {
    num((t * 1e12).round() / 1e12)
}

fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_populations(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let n = samples.first().map_or(0, |s| s.emitters.len());
    let mut header: Vec<String> = ["t", "P_C", "P_B", "P_D", "P_tot"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|a| format!("P_{a}")));
    w.write_record(&header)?;
    for s in samples {
        let mut row = vec![time(s.t), num(s.sectors.p_c), num(s.sectors.p_b), num(s.sectors.p_d), num(s.total)];
        row.extend(s.emitters.iter().map(|&v| num(v)));
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn write_density_matrix(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "P_ee", "P_eg", "P_ge", "P_gg", "Re_Z12", "Im_Z12", "concurrence", "F_plus", "F_minus"])?;
    for s in samples {
        let Some(r) = &s.pair else { continue };
        let (fp, fm) = bell_fidelities(r);
        w.write_record([
            time(s.t),
            num(r.p_ee),
            num(r.p_eg),
            num(r.p_ge),
            num(r.p_gg),
            num(r.z12.re),
            num(r.z12.im),
            num(concurrence(r)),
            num(fp),
            num(fm),
        ])?;
    }
    finish(w, path)
}

pub fn write_dicke(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "P_Wbar_C", "P_D1_C", "P_D2_C", "P_W_B", "P_D1_B", "P_D2_B", "P_dark_B"])?;
    for s in samples {
        let Some(d) = &s.dicke else { continue };
        w.write_record([
            time(s.t),
            num(d.wbar_c),
            num(d.d1_c),
            num(d.d2_c),
            num(d.w_b),
            num(d.d1_b),
            num(d.d2_b),
            num(d.dark_b()),
        ])?;
    }
    finish(w, path)
}

/// Long format `t,x,intensity`, with x in units of the reference wavelength.
pub fn write_field_map(path: &Path, result: &RunResult, points: &[f64], wavelength: f64) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "x", "intensity"])?;
    for row in &result.field {
        for (x, v) in points.iter().zip(&row.intensity) {
            w.write_record([time(row.t), num(x / wavelength), num(*v)])?;
        }
    }
    finish(w, path)
}

pub fn write_jsd(csv_path: &Path, json_path: &Path, r: &JsdReport) -> Result<()> {
    let mut w = csv_writer(csv_path)?;
    w.write_record(["omega1", "omega2", "J"])?;
    let nq = r.frequencies.len();
    for q in 0..nq {
        for qp in 0..nq {
            w.write_record([num(r.frequencies[q]), num(r.frequencies[qp]), num(r.j_at(q, qp))])?;
        }
    }
    finish(w, csv_path)?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        p_gg: f64,
        p_b: f64,
        trace_rho1: f64,
        purity: f64,
        k_eff: f64,
        entropy_nats: f64,
        entropy_bits: f64,
        min_eigenvalue: f64,
        integral: f64,
        omega0: f64,
        gamma0: f64,
        conditional_warning: bool,
        frequencies: &'a [f64],
    }
    let side = Sidecar {
        p_gg: r.p_gg,
        p_b: r.p_b,
        trace_rho1: r.trace_rho1,
        purity: r.purity,
        k_eff: r.k_eff,
        entropy_nats: r.entropy_nats,
        entropy_bits: r.entropy_bits,
        min_eigenvalue: r.min_eigenvalue,
        integral: r.integral,
        omega0: r.omega0,
        gamma0: r.gamma0,
        conditional_warning: r.residual_warning(),
        frequencies: &r.frequencies,
    };
    write_json(json_path, &side)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct GridRecord {
    rule: crate::model::QuadratureRule,
    q: usize,
    omega_min: f64,
    omega_max: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    name: &'a str,
    effective_config: SimulationConfig,
    environment: &'a crate::greens::EnvironmentSpec,
    positions: &'a [f64],
    wavelength: f64,
    grid: GridRecord,
    gamma0: f64,
    t_end: f64,
    t_end_lifetimes: f64,
    dt: f64,
    steps: usize,
    sample_every: usize,
    frame_frequency: f64,
    normalization: crate::model::Normalization,
    threads: usize,
    seconds: f64,
    consistency: ConsistencyReport,
    warnings: &'a [String],
    files: Vec<String>,
}

fn manifest<'a>(
    cfg: &SimulationConfig,
    r: &'a ResolvedConfig,
    result: &'a RunResult,
    threads: usize,
    files: Vec<String>,
) -> Manifest<'a> {
    Manifest {
        tool: "qed2x",
        version: env!("CARGO_PKG_VERSION"),
        name: &r.name,
        effective_config: effective_config(cfg, r),
        environment: &r.environment,
        positions: &r.positions,
        wavelength: r.wavelength,
        grid: GridRecord {
            rule: r.grid.rule,
            q: r.grid.len(),
            omega_min: r.grid.omega_min,
            omega_max: r.grid.omega_max,
        },
        gamma0: r.gamma0,
        t_end: r.t_end,
        t_end_lifetimes: r.t_end * r.gamma0,
        dt: r.dt,
        steps: r.steps,
        sample_every: r.sample_every,
        frame_frequency: r.frame_frequency,
        normalization: r.normalization,
        threads,
        seconds: result.seconds,
        consistency: result.report,
        warnings: &result.warnings,
        files,
    }
}

#[derive(Serialize)]
struct Series<'a> {
    samples: &'a [Sample],
    field_points: Vec<f64>,
    field: &'a [crate::pipeline::FieldRow],
}

pub fn cmd_run(config: &Path, out: &Path, overrides: &Overrides, format: Format, threads: usize) -> Result<RunResult> {
    let mut cfg = read_config(config)?;
    apply_overrides(&mut cfg, overrides);
    let (resolved, table) = load_scenario(&cfg, config)?;
    let prepared = prepare(&resolved, table)?;
    let result = simulate(&prepared)?;
    create_dir(out)?;
    let mut files = Vec::new();
    let n = resolved.emitters.len();
    match format {
        Format::Csv => {
            if resolved.outputs.populations {
                write_populations(&out.join("populations.csv"), &result.samples)?;
                files.push("populations.csv".into());
            }
            if resolved.outputs.density_matrix && (n == 2 || n == 3) {
                write_density_matrix(&out.join("density_matrix.csv"), &result.samples)?;
                files.push("density_matrix.csv".into());
            }
            if resolved.outputs.dicke && n == 3 {
                write_dicke(&out.join("dicke.csv"), &result.samples)?;
                files.push("dicke.csv".into());
            }
            if !result.field.is_empty() {
                write_field_map(&out.join("field_map.csv"), &result, &resolved.field_points, resolved.wavelength)?;
                files.push("field_map.csv".into());
            }
        }
        Format::Json => {
            let series = Series {
                samples: &result.samples,
                field_points: resolved.field_points.iter().map(|x| x / resolved.wavelength).collect(),
                field: &result.field,
            };
            write_json(&out.join("series.json"), &series)?;
            files.push("series.json".into());
        }
    }
    if let Some(j) = &result.jsd {
        write_jsd(&out.join("jsd.csv"), &out.join("jsd.json"), j)?;
        files.push("jsd.csv".into());
        files.push("jsd.json".into());
    }
    if resolved.outputs.gamma_spectra {
        let path = out.join("gamma_spectra.csv");
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_gamma_spectra(
            &prepared.couplings,
            &prepared.basis,
            &resolved.emitters,
            &resolved.normalization,
            BufWriter::new(f),
        )?;
        files.push("gamma_spectra.csv".into());
    }
    files.push("manifest.json".into());
    write_json(&out.join("manifest.json"), &manifest(&cfg, &resolved, &result, threads, files))?;
    Ok(result)
}

pub fn cmd_spectrum(config: &Path, out: &Path, overrides: &Overrides) -> Result<()> {
    let mut cfg = read_config(config)?;
    apply_overrides(&mut cfg, overrides);
    let (resolved, table) = load_scenario(&cfg, config)?;
    let prepared = prepare(&resolved, table)?;
    create_dir(out)?;
    save_tabulated(&prepared.table, &out.join("greens_table.csv"))?;
    let path = out.join("gamma_spectra.csv");
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_gamma_spectra(
        &prepared.couplings,
        &prepared.basis,
        &resolved.emitters,
        &resolved.normalization,
        BufWriter::new(f),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Metric {
    /// P_D1^(B) + P_D2^(B) at t_end.
    #[default]
    DarkTrapping,
    /// Any populations or Dicke column at t_end, by CSV header name.
    CustomColumn { column: String },
}

fn default_first() -> f64 {
    1.0
}

fn default_slab_start() -> f64 {
    3.5
}

fn default_eps_re() -> f64 {
    12.0
}

fn default_eps_im() -> f64 {
    0.05
}

/// Spacing d and slab thickness L are in wavelengths; the base config
/// supplies the three emitters' frequencies and dipoles, the initial state,
/// the grid and the time settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub base: SimulationConfig,
    pub spacing: Axis,
    pub thickness: Axis,
    #[serde(default = "default_first")]
    pub first_position: f64,
    #[serde(default = "default_slab_start")]
    pub slab_start: f64,
    #[serde(default = "default_eps_re")]
    pub eps_re: f64,
    #[serde(default = "default_eps_im")]
    pub eps_im: f64,
    #[serde(default)]
    pub metric: Metric,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, a) in [("spacing", &self.spacing), ("thickness", &self.thickness)] {
            if a.steps < 2 {
                bad.push(format!("{name} needs at least 2 steps"));
            }
            if !(a.min > 0.0 && a.max >= a.min) {
                bad.push(format!("{name} range must satisfy 0 < min <= max"));
            }
        }
        if self.base.emitters.len() != 3 {
            bad.push(format!("base config needs 3 emitters, has {}", self.base.emitters.len()));
        }
        let last = self.first_position + 2.0 * self.spacing.max;
        if last >= self.slab_start {
            bad.push(format!("emitters reach {last}, past the slab start {}", self.slab_start));
        }
        if let Metric::CustomColumn { column } = &self.metric {
            if metric_column(&dummy_sample(), column).is_none() {
                bad.push(format!("unknown metric column {column}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Config of grid point (d, L).
    pub fn point_config(&self, d: f64, l: f64) -> SimulationConfig {
        let mut cfg = self.base.clone();
        for (a, e) in cfg.emitters.iter_mut().enumerate() {
            e.position = self.first_position + a as f64 * d;
        }
        cfg.environment = EnvironmentConfig::MirroredWaveguide {
            slabs: vec![SlabConfig {
                x1: self.slab_start,
                x2: self.slab_start + l,
                eps_re: self.eps_re,
                eps_im: self.eps_im,
            }],
        };
        cfg.outputs.field_map = false;
        cfg.outputs.jsd = false;
        cfg.field_grid = None;
        cfg.name = format!("{} d={d} L={l}", self.name);
        cfg
    }
}

fn dummy_sample() -> Sample {
    crate::pipeline::observe(&crate::hierarchy::HierarchyState::zeros(3, 1)).expect("three-emitter observables")
}

/// Final-sample value of a populations or Dicke column.
pub fn metric_column(s: &Sample, column: &str) -> Option<f64> {
    let d = s.dicke.as_ref();
    Some(match column {
        "P_C" => s.sectors.p_c,
        "P_B" => s.sectors.p_b,
        "P_D" => s.sectors.p_d,
        "P_tot" => s.total,
        "P_Wbar_C" => d?.wbar_c,
        "P_D1_C" => d?.d1_c,
        "P_D2_C" => d?.d2_c,
        "P_W_B" => d?.w_b,
        "P_D1_B" => d?.d1_b,
        "P_D2_B" => d?.d2_b,
        "P_dark_B" => d?.dark_b(),
        other => {
            let a: usize = other.strip_prefix("P_")?.parse().ok()?;
            *s.emitters.get(a.checked_sub(1)?)?
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub d: f64,
    pub l: f64,
    pub metric: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub failures: Vec<String>,
    pub t_end: f64,
    pub gamma0: f64,
    pub seconds: f64,
}

/// Evaluates every (d, L) point, d-major, on the current rayon pool.
pub fn run_sweep(spec: &SweepSpec, overrides: &Overrides) -> Result<SweepOutcome> {
    spec.validate()?;
    let started = Instant::now();
    let mut base = spec.base.clone();
    apply_overrides(&mut base, overrides);
    let spec = SweepSpec { base, ..spec.clone() };
    let probe = spec.point_config(spec.spacing.min, spec.thickness.min).resolve()?;
    let jobs: Vec<(f64, f64)> = spec
        .spacing
        .values()
        .into_iter()
        .flat_map(|d| spec.thickness.values().into_iter().map(move |l| (d, l)))
        .collect();
    let results: Vec<std::result::Result<f64, String>> = jobs
        .par_iter()
        .map(|&(d, l)| {
            let run = || -> Result<f64> {
                let resolved = spec.point_config(d, l).resolve()?;
                let r = simulate(&prepare(&resolved, None)?)?;
                let last = r.last();
                Ok(match &spec.metric {
                    Metric::DarkTrapping => last.dicke.as_ref().map_or(f64::NAN, |x| x.dark_b()),
                    Metric::CustomColumn { column } => metric_column(last, column).unwrap_or(f64::NAN),
                })
            };
            let out = run().map_err(|e| format!("d = {d}, L = {l}: {e}"));
            info!("sweep point d = {d}, L = {l} done");
            out
        })
        .collect();
    let mut points = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    for (&(d, l), r) in jobs.iter().zip(results) {
        let metric = r.unwrap_or_else(|e| {
            failures.push(e);
            f64::NAN
        });
        points.push(SweepPoint { d, l, metric });
    }
    Ok(SweepOutcome {
        points,
        failures,
        t_end: probe.t_end,
        gamma0: probe.gamma0,
        seconds: started.elapsed().as_secs_f64(),
    })
}

pub fn write_sweep(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["d", "L", "metric"])?;
    for p in points {
        w.write_record([num(p.d), num(p.l), num(p.metric)])?;
    }
    finish(w, path)
}

pub fn cmd_sweep(config: &Path, out: &Path, overrides: &Overrides, threads: usize) -> Result<SweepOutcome> {
    let text = std::fs::read_to_string(config).map_err(|e| Error::io(config, e))?;
    let spec: SweepSpec = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    let outcome = run_sweep(&spec, overrides)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_sweep(out, &outcome.points)?;
    #[derive(Serialize)]
    struct SweepManifest<'a> {
        tool: &'static str,
        version: &'static str,
        spec: &'a SweepSpec,
        overrides_dt: Option<f64>,
        t_end: f64,
        t_end_lifetimes: f64,
        gamma0: f64,
        threads: usize,
        seconds: f64,
        failures: &'a [String],
    }
    let mut manifest_path = out.as_os_str().to_owned();
    manifest_path.push(".manifest.json");
    write_json(
        Path::new(&manifest_path),
        &SweepManifest {
            tool: "qed2x",
            version: env!("CARGO_PKG_VERSION"),
            spec: &spec,
            overrides_dt: overrides.dt,
            t_end: outcome.t_end,
            t_end_lifetimes: outcome.t_end * outcome.gamma0,
            gamma0: outcome.gamma0,
            threads,
            seconds: outcome.seconds,
            failures: &outcome.failures,
        },
    )?;
    Ok(outcome)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            warn!("could not build a {threads}-thread pool ({e}); using the global pool");
            f()
        }
    }
}

/// Runs the parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let report = |e: Error| {
        error!("{e}");
        eprintln!("error: {e}");
        e.exit_code()
    };
    match cli.command {
        Command::Run {
            config,
            out,
            overrides,
            parallelism,
            seed: _,
            format,
        } => {
            let threads = thread_count(parallelism);
            match with_pool(threads, || cmd_run(&config, &out, &overrides, format, threads)) {
                Ok(r) => {
                    let last = r.last();
                    println!(
                        "{}: P_C = {:.6}, P_B = {:.6}, P_D = {:.6}; drift {:.2e}; {:.1} s",
                        out.display(),
                        last.sectors.p_c,
                        last.sectors.p_b,
                        last.sectors.p_d,
                        r.report.max_norm_drift,
                        r.seconds
                    );
                    0
                }
                Err(e) => report(e),
            }
        }
        Command::Validate { level, parallelism } => {
            let level = match level {
                ValidateLevel::Quick => Level::Quick,
                ValidateLevel::Full => Level::Full,
            };
            let checks = with_pool(thread_count(parallelism), || run_suite(level));
            println!("{:<24} {:>12} {:>10} {:>8}  result", "check", "value", "limit", "time");
            for c in &checks {
                println!(
                    "{:<24} {:>12.3e} {:>10.0e} {:>7.1}s  {}",
                    c.name,
                    c.value,
                    c.limit,
                    c.seconds,
                    if c.passed { "pass" } else { "FAIL" }
                );
            }
            if checks.iter().all(|c| c.passed) {
                0
            } else {
                2
            }
        }
        Command::Sweep {
            config,
            out,
            overrides,
            parallelism,
            seed: _,
        } => {
            let threads = thread_count(parallelism);
            match with_pool(threads, || cmd_sweep(&config, &out, &overrides, threads)) {
                Ok(o) if o.failures.is_empty() => {
                    println!("{}: {} points in {:.1} s", out.display(), o.points.len(), o.seconds);
                    0
                }
                Ok(o) => {
                    for f in &o.failures {
                        eprintln!("failed: {f}");
                    }
                    2
                }
                Err(e) => report(e),
            }
        }
        Command::Spectrum { config, out, overrides } => match cmd_spectrum(&config, &out, &overrides) {
            Ok(()) => 0,
            Err(e) => report(e),
        },
    }
}
