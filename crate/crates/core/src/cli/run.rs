//! Dispatch of a validated configuration to the solvers.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use super::config::{ExperimentConfig, InitialKind, Mode};
use super::output::CsvWriter;
use super::CliError;
use crate::classical::{self, PotentialSpec};
use crate::convergence::{self, CoherentTemplate};
use crate::hj::{self, ActionField, DensityMethod};
use crate::minplus::{legendre_fenchel, Grid1D, SampledFunction};
use crate::quantum::{self, default_eps_rho, madelung_decompose, MadelungFields, WaveFunction};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub name: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceOrder {
    pub err_s: f64,
    pub err_rho: f64,
}

/// Record of a completed run; its presence marks the run directory complete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<OutputFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_order: Option<ConvergenceOrder>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    stages: Vec<StageTiming>,
    outputs: Vec<OutputFile>,
}

impl Runner<'_> {
    fn stage<T>(
        &mut self,
        name: &'static str,
        f: impl FnOnce() -> crate::Result<T>,
    ) -> Result<T, CliError> {
        let started = Instant::now();
        log::info!("stage {name}");
        let out = f().map_err(|source| CliError::Numeric {
            stage: name,
            source,
        })?;
        self.stages.push(StageTiming {
            name,
            seconds: started.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn csv(&self, name: &str, header: &[&str]) -> Result<CsvWriter, CliError> {
        let path = self.dir.join(name);
        CsvWriter::create(&path, header).map_err(|e| io_error(&path, e))
    }

    fn done(&mut self, name: &str, w: CsvWriter) -> Result<(), CliError> {
        let rows = w.finish().map_err(|e| io_error(&self.dir.join(name), e))?;
        self.outputs.push(OutputFile {
            file: name.to_string(),
            rows,
        });
        Ok(())
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Execute `cfg`, writing its outputs and finally `manifest.json` into
/// `cfg.output_dir`. On error the partial outputs stay and no manifest is
/// written.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest, CliError> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        std::fs::remove_file(&manifest_path).map_err(|e| io_error(&manifest_path, e))?;
    }
    let mut r = Runner {
        cfg,
        dir,
        stages: Vec::new(),
        outputs: Vec::new(),
    };
    let order = match cfg.mode {
        Mode::HopfLax => run_hopf_lax(&mut r).map(|_| None),
        Mode::Schrodinger => run_schrodinger(&mut r).map(|_| None),
        Mode::StatisticalSweep => run_statistical(&mut r),
        Mode::DeterministicSweep => run_deterministic(&mut r).map(|_| None),
        Mode::Bohm => run_bohm(&mut r).map(|_| None),
        Mode::Legendre => run_legendre(&mut r).map(|_| None),
    }?;
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode: cfg.mode,
        config: cfg.clone(),
        stages: r.stages,
        outputs: r.outputs,
        convergence_order: order,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, text + "\n").map_err(|e| io_error(&manifest_path, e))?;
    Ok(manifest)
}

/// `n` equal intervals ending at `t_end`, about `dt·every` long.
fn output_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let stride = cfg.time.dt * cfg.time.output_every as f64;
    let n = ((cfg.time.t_end / stride) - 1e-9).ceil().max(1.0) as usize;
    (1..=n)
        .map(|j| cfg.time.t_end * j as f64 / n as f64)
        .collect()
}

fn gaussian_density(x: f64, x0: f64, sigma: f64) -> f64 {
    let d = (x - x0) / sigma;
    (-0.5 * d * d).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn run_hopf_lax(r: &mut Runner) -> Result<(), CliError> {
    let cfg = r.cfg;
    let grid = cfg.grid.grid();
    let pot = cfg.potential_spec();
    let times = output_times(cfg);
    let (m, v0) = (pot.mass(), cfg.initial.v0);
    let s0 = SampledFunction::from_fn(grid, |x| m * v0 * x).expect("finite data");
    let (action, density) = if cfg.initial.kind == InitialKind::Plane {
        let action = r.stage("hopf_lax", || {
            let later = hj::hopf_lax_solve(&s0, &pot, grid, &times)?;
            let mut rows = vec![s0.clone()];
            rows.extend((0..times.len()).map(|k| later.slice(k)));
            let mut all = vec![0.0];
            all.extend_from_slice(&times);
            ActionField::from_rows(all, &rows)
        })?;
        (action, None)
    } else {
        let (x0, sigma) = (cfg.initial.x0, cfg.initial.sigma);
        let rho0 = SampledFunction::from_fn(grid, |x| gaussian_density(x, x0, sigma))
            .expect("finite data");
        let (a, d) = r.stage("statistical_hj", || {
            hj::statistical_hj_solve(
                &rho0,
                &s0,
                &pot,
                grid,
                &times,
                DensityMethod::Characteristics,
            )
        })?;
        (a, Some(d))
    };
    let vel = hj::velocity_field(&action, &pot);
    let mut w = r.csv("fields.csv", &["t", "x", "S", "v", "rho"])?;
    for (k, &t) in action.times().iter().enumerate() {
        for (i, x) in grid.points().enumerate() {
            let s = action.at(k, i);
            let rho = density.as_ref().map(|d| d.row(k)[i]);
            w.row(&[
                t.into(),
                x.into(),
                s.is_finite().then(|| s.get()).into(),
                vel.at(k, i).into(),
                rho.into(),
            ])
            .map_err(|e| io_error(&r.dir.join("fields.csv"), e))?;
        }
    }
    r.done("fields.csv", w)
}

fn initial_wave(
    cfg: &ExperimentConfig,
    grid: Grid1D,
    pot: &PotentialSpec,
) -> crate::Result<WaveFunction> {
    let (x0, v0, hbar, m) = (cfg.initial.x0, cfg.initial.v0, cfg.hbar, pot.mass());
    match cfg.initial.kind {
        InitialKind::Gaussian => {
            quantum::init_gaussian_packet(grid, x0, v0, cfg.initial.sigma, hbar, m)
        }
        InitialKind::Coherent => {
            let p = cfg.coherent_params(hbar).ok_or_else(|| {
                crate::Error::InvalidArgument("coherent state needs omega".into())
            })?;
            quantum::init_coherent_state(grid, p)
        }
        InitialKind::Plane => {
            let psi = grid
                .points()
                .map(|x| Complex64::from_polar(1.0, m * v0 * x / hbar))
                .collect();
            WaveFunction::normalized(grid, psi, hbar, m)
        }
    }
}

fn time_steps(cfg: &ExperimentConfig) -> (usize, f64) {
    let steps = ((cfg.time.t_end / cfg.time.dt) - 1e-9).ceil().max(1.0) as usize;
    (steps, cfg.time.t_end / steps as f64)
}

fn masked_velocity(f: &MadelungFields, i: usize) -> Option<f64> {
    let n = f.s.len();
    if i == 0 || i + 1 == n || !(f.mask[i - 1] && f.mask[i] && f.mask[i + 1]) {
        return None;
    }
    Some((f.s[i + 1] - f.s[i - 1]) / (2.0 * f.grid.dx() * f.mass))
}

fn evolve_fields(r: &mut Runner) -> Result<Vec<MadelungFields>, CliError> {
    let cfg = r.cfg;
    let grid = cfg.grid.grid();
    let pot = cfg.potential_spec();
    let (steps, dt) = time_steps(cfg);
    r.stage("schrodinger", || {
        let wf = initial_wave(cfg, grid, &pot)?;
        let snaps = quantum::split_step_snapshots(&wf, &pot, dt, steps, cfg.time.output_every)?;
        snaps
            .iter()
            .map(|s| madelung_decompose(s, default_eps_rho(s)))
            .collect()
    })
}

fn run_schrodinger(r: &mut Runner) -> Result<(), CliError> {
    let fields = evolve_fields(r)?;
    let mut w = r.csv("fields.csv", &["t", "x", "S", "v", "rho"])?;
    for f in &fields {
        for (i, x) in f.grid.points().enumerate() {
            w.row(&[
                f.time.into(),
                x.into(),
                f.mask[i].then(|| f.s[i]).into(),
                masked_velocity(f, i).into(),
                f.rho[i].into(),
            ])
            .map_err(|e| io_error(&r.dir.join("fields.csv"), e))?;
        }
    }
    r.done("fields.csv", w)
}

fn run_bohm(r: &mut Runner) -> Result<(), CliError> {
    let fields = evolve_fields(r)?;
    let (n, seed) = (r.cfg.particles, r.cfg.seed);
    let ens = r.stage("bohm", || convergence::bohm_trajectories(&fields, n, seed))?;
    let mut w = r.csv("trajectories.csv", &["particle_id", "t", "x"])?;
    for p in 0..ens.n_particles() {
        for (k, &x) in ens.path(p).iter().enumerate() {
            w.row(&[p.into(), ens.times[k].into(), x.into()])
                .map_err(|e| io_error(&r.dir.join("trajectories.csv"), e))?;
        }
    }
    r.done("trajectories.csv", w)
}

fn run_statistical(r: &mut Runner) -> Result<Option<ConvergenceOrder>, CliError> {
    let cfg = r.cfg;
    let pot = cfg.potential_spec();
    let (x0, v0, sigma, m) = (
        cfg.initial.x0,
        cfg.initial.v0,
        cfg.initial.sigma,
        pot.mass(),
    );
    let sweep = r.stage("statistical_sweep", || {
        convergence::statistical_sweep(
            |x| gaussian_density(x, x0, sigma),
            |x| m * v0 * x,
            &pot,
            cfg.grid.grid(),
            &[cfg.time.t_end],
            &cfg.hbars,
            cfg.time.dt,
        )
    })?;
    let mut w = r.csv("sweep.csv", &["hbar", "err_S", "err_rho", "runtime_s"])?;
    for k in 0..sweep.hbars.len() {
        w.row(&[
            sweep.hbars[k].into(),
            sweep.err_s[k].into(),
            sweep.err_rho[k].into(),
            sweep.runtimes[k].into(),
        ])
        .map_err(|e| io_error(&r.dir.join("sweep.csv"), e))?;
    }
    r.done("sweep.csv", w)?;
    Ok(sweep
        .orders()
        .ok()
        .map(|(err_s, err_rho)| ConvergenceOrder { err_s, err_rho }))
}

fn run_deterministic(r: &mut Runner) -> Result<(), CliError> {
    let cfg = r.cfg;
    let tpl = CoherentTemplate {
        x0: cfg.initial.x0,
        v0: cfg.initial.v0,
        omega: cfg.potential.omega.unwrap_or(1.0),
        mass: cfg.potential.mass,
    };
    let sweep = r.stage("deterministic_sweep", || {
        convergence::deterministic_sweep(
            tpl,
            cfg.time.t_end,
            &cfg.hbars,
            cfg.grid.grid(),
            cfg.time.dt,
        )
    })?;
    let mut w = r.csv(
        "sweep.csv",
        &["hbar", "mean_err", "var_ratio", "action_err", "runtime_s"],
    )?;
    for k in 0..sweep.hbars.len() {
        w.row(&[
            sweep.hbars[k].into(),
            sweep.mean_err[k].into(),
            sweep.var_ratio[k].into(),
            sweep.action_err[k].into(),
            sweep.runtimes[k].into(),
        ])
        .map_err(|e| io_error(&r.dir.join("sweep.csv"), e))?;
    }
    r.done("sweep.csv", w)
}

fn run_legendre(r: &mut Runner) -> Result<(), CliError> {
    let cfg = r.cfg;
    let grid = cfg.grid.grid();
    let pot = cfg.potential_spec();
    let (t, x0) = (cfg.time.t_end, cfg.initial.x0);
    let p_grid = cfg.momentum.grid();
    let conj = r.stage("legendre", || {
        pot.check_caustic(t)?;
        let f =
            SampledFunction::from_fn(grid, |x| classical::closed_form_unchecked(x, t, x0, &pot))?;
        legendre_fenchel(&f, p_grid)
    })?;
    let mut w = r.csv("legendre.csv", &["p", "f_star"])?;
    for (j, p) in p_grid.points().enumerate() {
        let v = conj.get(j);
        w.row(&[p.into(), v.is_finite().then(|| v.get()).into()])
            .map_err(|e| io_error(&r.dir.join("legendre.csv"), e))?;
    }
    r.done("legendre.csv", w)
}
