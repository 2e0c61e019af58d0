//! Grid, Green's table, ECM couplings, evolution and observables for one
//! resolved configuration. No file I/O happens here.

use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::ecm::{build_overlap, couplings, diagonalize_overlap, mode_profiles, CouplingTensor, EcmBasis};
use crate::error::{Error, Result};
use crate::greens::{im_greens_matrix, EnvironmentSpec, GreensTable};
use crate::hierarchy::{consistency_report, evolve, init_state, ConsistencyReport, EvolveOptions, Hierarchy, HierarchyState};
use crate::model::ResolvedConfig;
use crate::observables::{
    dicke_decomposition, emitter_populations, jsd_and_schmidt, reduced_pair_from_three, reduced_two_qubit, sector_probabilities,
    DickeDecomposition, FieldProbe, JsdReport, ReducedTwoQubit, SectorProbabilities, RESIDUAL_B_WARNING,
};

/// Hard bounds beyond which a run counts as a numerical failure.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;
pub const ASYMMETRY_LIMIT: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ResolvedConfig,
    pub table: GreensTable,
    pub basis: EcmBasis,
    pub couplings: CouplingTensor,
    pub probe: Option<FieldProbe>,
}

/// Builds the Green's table (unless one is supplied), the ECM basis, the
/// couplings and, when field points are requested, the mode profiles.
pub fn prepare(config: &ResolvedConfig, table: Option<GreensTable>) -> Result<Prepared> {
    let table = match (table, &config.environment) {
        (Some(t), _) => t,
        (None, EnvironmentSpec::Tabulated) => {
            return Err(Error::UnsupportedEnvironment("tabulated environment without a loaded table"))
        }
        (None, env) => im_greens_matrix(env, &config.positions, &config.grid)?,
    };
    let overlap = build_overlap(&table, &config.positions)?;
    let basis = diagonalize_overlap(overlap, &config.grid.nodes)?;
    let couplings = couplings(&basis, &config.emitters, &config.grid, &config.normalization)?;
    let probe = if config.field_points.is_empty() || !config.outputs.field_map {
        None
    } else {
        let profiles = mode_profiles(
            &config.environment,
            &config.field_points,
            &config.positions,
            &basis,
            &config.normalization,
        )?;
        if profiles.usable.iter().any(|u| !u) {
            warn!("mode profiles zeroed at nodes where an emitter decouples");
        }
        Some(FieldProbe::new(&profiles, &config.grid.weights)?)
    };
    Ok(Prepared {
        config: config.clone(),
        table,
        basis,
        couplings,
        probe,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub t: f64,
    pub sectors: SectorProbabilities,
    pub total: f64,
    pub asymmetry: f64,
    pub emitters: Vec<f64>,
    /// Two-qubit state: the pair itself for N = 2, emitters (1, 2) for N = 3.
    pub pair: Option<ReducedTwoQubit>,
    pub dicke: Option<DickeDecomposition>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldRow {
    pub t: f64,
    pub intensity: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub samples: Vec<Sample>,
    pub field: Vec<FieldRow>,
    /// Final amplitudes in the unshifted frame.
    pub final_state: HierarchyState,
    pub jsd: Option<JsdReport>,
    pub report: ConsistencyReport,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

impl RunResult {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("at least the initial sample")
    }
}

pub fn observe(s: &HierarchyState) -> Result<Sample> {
    let sectors = sector_probabilities(s);
    Ok(Sample {
        t: s.t,
        total: sectors.total(),
        sectors,
        asymmetry: s.asymmetry(),
        emitters: emitter_populations(s),
        pair: match s.n {
            2 => Some(reduced_two_qubit(s)?),
            3 => Some(reduced_pair_from_three(s, 0, 1)?),
            _ => None,
        },
        dicke: if s.n == 3 { Some(dicke_decomposition(s)?) } else { None },
    })
}

/// Evolves the initial state and samples every observable. Fails with a
/// numerical error when the consistency report exceeds the hard bounds.
pub fn simulate(p: &Prepared) -> Result<RunResult> {
    let cfg = &p.config;
    let started = Instant::now();
    let h = Hierarchy::new(&p.couplings, &cfg.emitters, cfg.frame_frequency)?;
    let init = init_state(&cfg.initial_state, &cfg.emitters, p.couplings.modes())?;
    let initial_norm = init.total_norm();
    let opts = EvolveOptions {
        dt: cfg.dt,
        steps: cfg.steps,
        sample_every: cfg.sample_every,
        allow_large_step: cfg.allow_large_step,
    };
    let mut samples = Vec::new();
    let mut field = Vec::new();
    let mut count = 0usize;
    let evolution = evolve(&h, init, &opts, |s| {
        samples.push(observe(s).map_err(|e| e.to_string())?);
        if let Some(probe) = &p.probe {
            if count % cfg.field_every == 0 {
                let intensity = probe.intensity(s).map_err(|e| e.to_string())?;
                field.push(FieldRow { t: s.t, intensity });
            }
        }
        count += 1;
        Ok(())
    })?;
    let report = consistency_report(&evolution.samples, initial_norm);
    let mut warnings = Vec::new();
    let final_state = evolution.state.to_lab_frame(cfg.frame_frequency);
    let jsd = if cfg.outputs.jsd {
        let r = jsd_and_schmidt(
            &final_state,
            &cfg.grid.nodes,
            &cfg.grid.weights,
            cfg.reference_frequency,
            cfg.gamma0,
        )?;
        if r.residual_warning() {
            warnings.push(format!(
                "one-photon population {:.3e} at t_end exceeds {RESIDUAL_B_WARNING:e}; spectral diagnostics are conditional",
                r.p_b
            ));
        }
        Some(r)
    } else {
        None
    };
    for w in &warnings {
        warn!("{w}");
    }
    let seconds = started.elapsed().as_secs_f64();
    info!(
        "{}: {} steps in {seconds:.1} s, drift {:.2e}, asymmetry {:.2e}",
        cfg.name, cfg.steps, report.max_norm_drift, report.max_asymmetry
    );
    if !(report.max_norm_drift <= NORM_DRIFT_LIMIT) || !(report.max_asymmetry <= ASYMMETRY_LIMIT) {
        return Err(Error::Numerical(format!(
            "consistency bounds exceeded: norm drift {:.3e}, asymmetry {:.3e}",
            report.max_norm_drift, report.max_asymmetry
        )));
    }
    Ok(RunResult {
        samples,
        field,
        final_state,
        jsd,
        report,
        warnings,
        seconds,
    })
}
