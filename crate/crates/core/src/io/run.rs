//! Task dispatch and output files.
//!
//! Each task writes its data files into the output directory and finishes
//! with `manifest.json`, written last and atomically. A task that fails part
//! way keeps whatever it already wrote, and the manifest flags the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex;
use serde::Serialize;
use serde_json::json;

use super::config::{InitialKind, InitialState, RunConfig, Task};
use super::snapshot::{read_snapshot, write_snapshot};
use crate::dynamics::{blowup_criterion, evolve_observed, EvolveOptions};
use crate::error::{ConfigError, RunError};
use crate::grid::{Grid, Wavefunction};
use crate::ground_state::{
    classify_regime, default_cb, minimize_gradient_flow, random_initial_state, FlowOptions, FlowOutcome,
};
use crate::kernels::{self, KernelKind};
use crate::models::{Model, ModelKind};
use crate::reduction::{gaussian_datum, run_study};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Outputs are complete up to a numerical alarm.
    Alarm,
    /// The task stopped with an error; outputs are partial.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
}

/// Record of one run, saved as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub task: Task,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub seed: u64,
    pub config: RunConfig,
    /// The configuration as TOML; feeding it back reproduces the run.
    pub config_toml: String,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// Output directory with a record of what has been written.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

fn ser_err(e: impl std::fmt::Display) -> RunError {
    RunError::Serialize(e.to_string())
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(value).map_err(ser_err)?;
        fs::write(self.path(name), text + "\n")?;
        Ok(())
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<(), RunError> {
        let mut w = csv::Writer::from_path(self.path(name)).map_err(ser_err)?;
        for row in rows {
            w.serialize(row).map_err(ser_err)?;
        }
        w.flush()?;
        Ok(())
    }

    fn snapshot(&mut self, name: &str, psi: &Wavefunction<f64>) -> Result<(), RunError> {
        write_snapshot(&self.path(name), psi)?;
        Ok(())
    }

    fn index(&self) -> Vec<FileEntry> {
        self.files
            .iter()
            .filter_map(|name| {
                let bytes = fs::metadata(self.dir.join(name)).ok()?.len();
                Some(FileEntry { name: name.clone(), bytes })
            })
            .collect()
    }
}

/// What a finished task reports.
struct TaskOutcome {
    summary: serde_json::Value,
    alarm: Option<String>,
}

/// Runs the configured task into `out_dir`. A numerical alarm still returns
/// `Ok` with [`RunStatus::Alarm`]; errors return `Err` after the manifest is
/// written.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunManifest, RunError> {
    let task = config.task.ok_or(ConfigError::NoTask)?;
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut out = Outputs { dir: out_dir.to_path_buf(), files: Vec::new() };
    let result = match task {
        Task::Groundstate => groundstate(config, &mut out),
        Task::Evolve => evolve_task(config, &mut out),
        Task::Regime => regime(config, &mut out),
        Task::Reduce => reduce(config, &mut out),
        Task::KernelCheck => kernel_check(config, &mut out),
    };
    let (status, message, summary) = match &result {
        Ok(o) if o.alarm.is_some() => (RunStatus::Alarm, o.alarm.clone(), o.summary.clone()),
        Ok(o) => (RunStatus::Ok, None, o.summary.clone()),
        Err(e) => (RunStatus::Failed, Some(e.to_string()), serde_json::Value::Null),
    };
    let manifest = RunManifest {
        task,
        status,
        message,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
        config: config.clone(),
        config_toml: config.to_toml(),
        warnings: config.warnings.clone(),
        summary,
        files: out.index(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(ser_err)? + "\n";
    let tmp = out_dir.join(format!("{MANIFEST}.tmp"));
    fs::write(&tmp, text)?;
    fs::rename(&tmp, out_dir.join(MANIFEST))?;
    result.map(|_| manifest)
}

fn broadcast(v: &[f64], dim: usize) -> Vec<f64> {
    (0..dim).map(|a| if v.len() == 1 { v[0] } else { v.get(a).copied().unwrap_or(0.0) }).collect()
}

/// Starting field on `grid`, unit mass.
pub fn initial_state(init: &InitialState, grid: &Arc<Grid<f64>>, seed: u64) -> Result<Wavefunction<f64>, RunError> {
    let d = grid.dim();
    match init.kind {
        InitialKind::Gaussian => {
            let (c, k) = (broadcast(&init.center, d), broadcast(&init.momentum, d));
            let (w2, chirp) = (init.width * init.width, init.chirp);
            let mut psi = Wavefunction::from_fn(Arc::clone(grid), |x| {
                let (mut r2, mut phase, mut x2) = (0.0, 0.0, 0.0);
                for a in 0..d {
                    r2 += (x[a] - c[a]).powi(2);
                    phase += k[a] * x[a];
                    x2 += x[a] * x[a];
                }
                Complex::from_polar((-0.5 * r2 / w2).exp(), phase - chirp * x2)
            });
            psi.normalize();
            Ok(psi)
        }
        InitialKind::Random => Ok(random_initial_state(grid, seed)),
        InitialKind::Snapshot => {
            let path = init.path.as_deref().unwrap_or_default();
            let psi = read_snapshot(Path::new(path))?.to_wavefunction()?;
            let same = psi.grid().shape() == grid.shape()
                && psi.grid().axes().iter().zip(grid.axes()).all(|(a, b)| a.half_extent() == b.half_extent());
            if !same {
                return Err(ConfigError::Invalid {
                    key: "initial.path",
                    reason: "snapshot grid differs from the configured grid".into(),
                }
                .into());
            }
            Ok(Wavefunction::new(Arc::clone(grid), psi.into_values())?)
        }
    }
}

#[derive(Serialize)]
struct IterationRow {
    iteration: usize,
    tau: f64,
    energy: f64,
    residual: f64,
}

fn groundstate(config: &RunConfig, out: &mut Outputs) -> Result<TaskOutcome, RunError> {
    let params = config.model_params()?;
    let grid = config.grid()?;
    let verdict = classify_regime(&params, config.regime.cb.unwrap_or_else(|| default_cb().value));
    let model = Model::new(params, Arc::clone(&grid))?;
    let gs_cfg = &config.groundstate;
    let init = initial_state(&gs_cfg.initial, &grid, config.seed)?;
    let options = FlowOptions {
        tau: gs_cfg.tau,
        tau_max: gs_cfg.tau_max,
        tol: gs_cfg.tol,
        max_iterations: gs_cfg.max_iterations,
        ..FlowOptions::default()
    };
    let gs = minimize_gradient_flow(&model, &init, &options)?;
    out.snapshot("field.snap", &gs.state)?;
    let summary = json!({
        "energy": gs.energy,
        "chemical_potential": gs.chemical_potential,
        "outcome": gs.outcome,
        "iterations": gs.iterations.len(),
        "halvings": gs.halvings,
        "regime": verdict,
    });
    out.json("energy.json", &summary)?;
    out.csv(
        "iterations.csv",
        gs.iterations.iter().map(|r| IterationRow { iteration: r.iteration, tau: r.tau, energy: r.energy, residual: r.residual }),
    )?;
    let alarm = match &gs.outcome {
        FlowOutcome::Converged => None,
        FlowOutcome::NonexistenceSuspected { reason, .. } => Some(format!("no ground state: {reason}")),
    };
    Ok(TaskOutcome { summary, alarm })
}

/// One line of `observables.csv`.
#[derive(Serialize)]
struct ObservableRow {
    t: f64,
    mass: f64,
    #[serde(rename = "E_total")]
    e_total: f64,
    #[serde(rename = "E_kin")]
    e_kin: f64,
    #[serde(rename = "E_pot")]
    e_pot: f64,
    #[serde(rename = "E_contact")]
    e_contact: f64,
    #[serde(rename = "E_dip")]
    e_dip: f64,
    #[serde(rename = "sigmaV")]
    sigma_v: f64,
    #[serde(rename = "dsigmaV")]
    dsigma_v: f64,
    virial_residual: f64,
    peak_density: f64,
}

fn evolve_task(config: &RunConfig, out: &mut Outputs) -> Result<TaskOutcome, RunError> {
    let params = config.model_params()?;
    let grid = config.grid()?;
    let model = Model::new(params.clone(), Arc::clone(&grid))?;
    let ev = &config.evolve;
    let psi0 = initial_state(&ev.initial, &grid, config.seed)?;
    let blowup = match params.kind {
        ModelKind::Quasi2DI | ModelKind::Quasi2DII => {
            let cb = config.regime.cb.unwrap_or_else(|| default_cb().value);
            Some(blowup_criterion(&model, psi0.values(), cb)?)
        }
        _ => None,
    };
    let options = EvolveOptions {
        t_final: ev.t_final,
        dt: ev.dt,
        record_every: ev.record_every,
        tail_alarm: ev.tail_alarm,
        blowup_growth: ev.blowup_growth,
        stop_at_growth: None,
    };
    // Same step count as the propagator uses.
    let dt = ev.t_final / (ev.t_final / ev.dt).round().max(1.0);
    let wanted: Vec<usize> = ev.snapshot_times.iter().map(|t| (t / dt).round() as usize).collect();
    let mut saved = Vec::new();
    let run = evolve_observed(&model, &psi0, &options, |step, psi| {
        if wanted.contains(&step) {
            saved.push((step, psi.to_vec()));
        }
    })?;
    for (step, values) in saved {
        let psi = Wavefunction::new(Arc::clone(&grid), values)?;
        out.snapshot(&format!("field_t{:.6}.snap", step as f64 * dt), &psi)?;
    }
    let s = &run.series;
    out.csv(
        "observables.csv",
        (0..s.len()).map(|i| ObservableRow {
            t: s.times[i],
            mass: s.mass[i],
            e_total: s.energy[i].total,
            e_kin: s.energy[i].kinetic,
            e_pot: s.energy[i].potential,
            e_contact: s.energy[i].contact,
            e_dip: s.energy[i].dipolar,
            sigma_v: s.sigma[i],
            dsigma_v: s.dsigma[i],
            virial_residual: s.virial_residual[i],
            peak_density: s.peak_density[i],
        }),
    )?;
    out.snapshot("final.snap", &run.state)?;
    let summary = json!({
        "stop": run.stop,
        "steps": run.steps,
        "mass_drift": s.mass_drift(),
        "energy_drift": s.energy_drift(),
        "blowup": blowup,
    });
    out.json("summary.json", &summary)?;
    let alarm = run.stop.is_alarm().then(|| format!("{:?}", run.stop));
    Ok(TaskOutcome { summary, alarm })
}

#[derive(Serialize)]
struct FlowRow {
    seed: u64,
    energy: f64,
    chemical_potential: f64,
    iterations: usize,
    converged: bool,
    /// `max |Φ| − |Φ_first|` over the grid.
    max_modulus_difference: f64,
}

fn regime(config: &RunConfig, out: &mut Outputs) -> Result<TaskOutcome, RunError> {
    let params = config.model_params()?;
    let cb = config.regime.cb.unwrap_or_else(|| default_cb().value);
    let verdict = classify_regime(&params, cb);
    let mut summary = json!({ "cb": cb, "verdict": verdict });
    if !config.regime.flow_seeds.is_empty() {
        let grid = config.grid()?;
        let model = Model::new(params, Arc::clone(&grid))?;
        let options = FlowOptions { tol: config.regime.flow_tol, ..FlowOptions::default() };
        let flows = crate::parallel::map_ordered(&config.regime.flow_seeds, |&seed| {
            minimize_gradient_flow(&model, &random_initial_state(&grid, seed), &options)
        });
        let flows = flows.into_iter().collect::<Result<Vec<_>, _>>()?;
        let first: Vec<f64> = flows[0].state.values().iter().map(|v| v.norm()).collect();
        let rows: Vec<FlowRow> = flows
            .iter()
            .zip(&config.regime.flow_seeds)
            .map(|(g, &seed)| FlowRow {
                seed,
                energy: g.energy.total,
                chemical_potential: g.chemical_potential,
                iterations: g.iterations.len(),
                converged: g.outcome == FlowOutcome::Converged,
                max_modulus_difference: g
                    .state
                    .values()
                    .iter()
                    .zip(&first)
                    .fold(0.0, |m, (v, f)| f64::max(m, (v.norm() - f).abs())),
            })
            .collect();
        summary["flows"] = serde_json::to_value(&rows).map_err(ser_err)?;
        out.csv("flows.csv", rows)?;
    }
    out.json("regime.json", &summary)?;
    Ok(TaskOutcome { summary, alarm: None })
}

#[derive(Serialize)]
struct ErrorRow {
    t: f64,
    total: f64,
    transverse: f64,
    projected: f64,
    transverse_gradient: f64,
    gradient_norm: f64,
    mass: f64,
}

fn reduce(config: &RunConfig, out: &mut Outputs) -> Result<TaskOutcome, RunError> {
    let (setup, section) = config.reduction_setup()?;
    let phi0 = gaussian_datum(&setup.free_grid()?);
    let study = run_study(&setup, &phi0, &section.epsilons, section.t_final)?;
    for r in &study.runs {
        out.csv(
            &format!("errors_eps_{}.csv", r.epsilon),
            r.samples.iter().map(|s| ErrorRow {
                t: s.time,
                total: s.total,
                transverse: s.transverse,
                projected: s.projected,
                transverse_gradient: s.transverse_gradient,
                gradient_norm: s.gradient_norm,
                mass: s.mass,
            }),
        )?;
    }
    let summary = json!({
        "case": study.case,
        "setup": setup,
        "dt": study.runs.iter().map(|r| r.dt).collect::<Vec<_>>(),
        "fits": study.fits,
    });
    out.json("ratefit.json", &summary)?;
    Ok(TaskOutcome { summary, alarm: None })
}

#[derive(Serialize)]
struct FidelityRow {
    kernel: KernelKind,
    xi: f64,
    eps: f64,
    closed_form: f64,
    quadrature: f64,
    relative_error: f64,
}

fn kernel_check(config: &RunConfig, out: &mut Outputs) -> Result<TaskOutcome, RunError> {
    let kc = &config.kernel_check;
    let sweep = kernels::fidelity_sweep(kc.lattice, kc.min, kc.max)?;
    let worst = |kind: KernelKind| {
        sweep.iter().filter(|p| p.kernel == kind).fold(0.0f64, |m, p| m.max(p.relative_error))
    };
    let (worst_2d, worst_1d) = (worst(KernelKind::U2dEps), worst(KernelKind::U1dEps));
    out.csv(
        "kernel_fidelity.csv",
        sweep.iter().map(|p| FidelityRow {
            kernel: p.kernel,
            xi: p.xi,
            eps: p.eps,
            closed_form: p.closed_form,
            quadrature: p.quadrature,
            relative_error: p.relative_error,
        }),
    )?;
    let g2 = Arc::new(Grid::cubic(2, kc.table_half_extent, kc.table_points)?);
    let g1 = Arc::new(Grid::cubic(1, kc.table_half_extent, kc.table_points)?);
    let mut violations = 0;
    for eps in kernels::log_lattice(kc.lattice, kc.min, kc.max) {
        violations += kernels::bound_violations(&g2, eps)? + kernels::bound_violations(&g1, eps)?;
    }
    let pass = worst_2d <= kc.tolerance && worst_1d <= kc.tolerance && violations == 0;
    let summary = json!({
        "max_relative_error_u2d": worst_2d,
        "max_relative_error_u1d": worst_1d,
        "tolerance": kc.tolerance,
        "bound_violations": violations,
        "pass": pass,
    });
    out.json("kernel_check.json", &summary)?;
    let alarm = (!pass).then(|| "kernel check outside tolerance".to_string());
    Ok(TaskOutcome { summary, alarm })
}
