//! ħ → 0 experiments: the statistical sweep against the classical
//! Hamilton-Jacobi pair, the coherent-state sweep against the deterministic
//! action, and de Broglie-Bohm ensembles.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::classical::{self, ClassicalState, PotentialSpec};
use crate::hj::{self, fill_nearest, DensityMethod};
use crate::minplus::{Grid1D, SampledFunction};
use crate::numeric::{interp_uniform, particle_uniform, InverseCdf};
use crate::quantum::{
    self, action_difference, default_eps_rho, l1_distance, madelung_decompose, zero_point_phase,
    CoherentStateParams, MadelungFields, WaveFunction,
};
use crate::{Error, Result};

/// Relative density floor of the region where actions are compared.
pub const EPS_CMP: f64 = 1e-3;

/// Largest fraction of Bohm particles allowed to visit masked-off samples.
pub const MASKED_PARTICLE_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub hbars: Vec<f64>,
    /// Sup-norm action error on the compared region, modulo a constant.
    pub err_s: Vec<f64>,
    /// L¹ density error.
    pub err_rho: Vec<f64>,
    pub runtimes: Vec<f64>,
}

impl SweepResult {
    /// Fitted slopes of `log err_S` and `log err_rho` against `log ħ`.
    pub fn orders(&self) -> Result<(f64, f64)> {
        Ok((
            convergence_order_estimate(&self.hbars, &self.err_s)?,
            convergence_order_estimate(&self.hbars, &self.err_rho)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicSweepResult {
    pub hbars: Vec<f64>,
    /// `|mean ρ^ħ − ξ(t)|`
    pub mean_err: Vec<f64>,
    /// `Var ρ^ħ / σ_ħ²`
    pub var_ratio: Vec<f64>,
    /// Sup-norm distance of `S^ħ` from the deterministic action plus the
    /// zero-point phase, modulo a constant.
    pub action_err: Vec<f64>,
    /// Leftover constant of that comparison, reduced modulo `2πħ`.
    pub offset: Vec<f64>,
    pub runtimes: Vec<f64>,
}

fn check_hbars(hbars: &[f64]) -> Result<()> {
    if hbars.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one hbar is required".into(),
        ));
    }
    if hbars.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument("hbars must be positive".into()));
    }
    if hbars.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "hbars must be strictly descending".into(),
        ));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("times must be positive".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "times must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Grid refined by `round(ħ_0/ħ)` so that the number of cells scales as `1/ħ`.
pub fn refined_grid(base: &Grid1D, hbar0: f64, hbar: f64) -> Grid1D {
    let factor = (hbar0 / hbar).round().max(1.0) as usize;
    base.refined(factor)
}

/// Evolve through ascending `times`, with steps no longer than `max_dt`.
fn evolve_to_times(
    wf: &WaveFunction,
    pot: &PotentialSpec,
    times: &[f64],
    max_dt: f64,
) -> Result<Vec<WaveFunction>> {
    let mut out = Vec::with_capacity(times.len());
    let mut cur = wf.clone();
    for &t in times {
        let span = t - cur.time();
        let steps = ((span / max_dt).ceil() as usize).max(1);
        cur = quantum::split_step_evolve(&cur, pot, span / steps as f64, steps)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Statistical semiclassical sweep. For each `ħ` the initial state is
/// `√ρ0·exp(iS0/ħ)` on `base` refined by `hbars[0]/ħ`; it is evolved by the
/// split-step solver and compared with the classical pair at every time.
/// Errors are the worst over `times`.
#[allow(clippy::too_many_arguments)]
pub fn statistical_sweep(
    rho0: impl Fn(f64) -> f64 + Sync,
    s0: impl Fn(f64) -> f64 + Sync,
    pot: &PotentialSpec,
    base: Grid1D,
    times: &[f64],
    hbars: &[f64],
    max_dt: f64,
) -> Result<SweepResult> {
    check_hbars(hbars)?;
    check_times(times)?;
    if !(max_dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let rows: Vec<Result<(f64, f64, f64)>> = hbars
        .par_iter()
        .map(|&hbar| {
            let started = Instant::now();
            let grid = refined_grid(&base, hbars[0], hbar);
            statistical_point(&rho0, &s0, pot, grid, times, hbar, max_dt)
                .map(|(es, er)| (es, er, started.elapsed().as_secs_f64()))
                .map_err(|e| Error::AtHbar {
                    hbar,
                    source: Box::new(e),
                })
        })
        .collect();
    let mut out = SweepResult {
        hbars: hbars.to_vec(),
        err_s: Vec::new(),
        err_rho: Vec::new(),
        runtimes: Vec::new(),
    };
    for r in rows {
        let (es, er, rt) = r?;
        out.err_s.push(es);
        out.err_rho.push(er);
        out.runtimes.push(rt);
    }
    Ok(out)
}

fn statistical_point(
    rho0: &(impl Fn(f64) -> f64 + Sync),
    s0: &(impl Fn(f64) -> f64 + Sync),
    pot: &PotentialSpec,
    grid: Grid1D,
    times: &[f64],
    hbar: f64,
    max_dt: f64,
) -> Result<(f64, f64)> {
    let rho_s = SampledFunction::from_fn(grid, rho0)?;
    let s_s = SampledFunction::from_fn(grid, s0)?;
    let (action, density) = hj::statistical_hj_solve(
        &rho_s,
        &s_s,
        pot,
        grid,
        times,
        DensityMethod::Characteristics,
    )?;
    let psi: Vec<Complex64> = grid
        .points()
        .map(|x| Complex64::from_polar(rho0(x).max(0.0).sqrt(), s0(x) / hbar))
        .collect();
    let wf = WaveFunction::normalized(grid, psi, hbar, pot.mass())?;
    let states = evolve_to_times(&wf, pot, times, max_dt)?;
    let (mut err_s, mut err_rho) = (0.0f64, 0.0f64);
    for (k, state) in states.iter().enumerate() {
        // row 0 of the classical fields is the initial data
        let row = k + 1;
        let fields = madelung_decompose(state, default_eps_rho(state))?;
        let rho_cl = density.row(row);
        let peak = rho_cl.iter().copied().fold(0.0, f64::max);
        let s_cl: Vec<f64> = action.row(row).iter().map(|v| v.get()).collect();
        let region: Vec<bool> = (0..grid.len())
            .map(|i| {
                fields.mask[i]
                    && rho_cl[i] > EPS_CMP * peak
                    && s_cl[i].is_finite()
                    && !action.is_pinned(row, i)
            })
            .collect();
        let (e, _) = action_difference(&fields.s, &s_cl, rho_cl, &region, hbar)?;
        err_s = err_s.max(e);
        err_rho = err_rho.max(l1_distance(&fields.rho, rho_cl, &grid));
    }
    Ok((err_s, err_rho))
}

/// Coherent-state data without `ħ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentTemplate {
    pub x0: f64,
    pub v0: f64,
    pub omega: f64,
    pub mass: f64,
}

impl CoherentTemplate {
    pub fn with_hbar(&self, hbar: f64) -> Result<CoherentStateParams> {
        CoherentStateParams::new(self.x0, self.v0, self.omega, self.mass, hbar)
    }
}

/// Deterministic semiclassical sweep: evolve the coherent state to `t_eval`
/// for each `ħ` on `grid` and measure how its density and action track the
/// classical trajectory.
pub fn deterministic_sweep(
    template: CoherentTemplate,
    t_eval: f64,
    hbars: &[f64],
    grid: Grid1D,
    max_dt: f64,
) -> Result<DeterministicSweepResult> {
    check_hbars(hbars)?;
    check_times(&[t_eval])?;
    if !(max_dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let rows: Vec<Result<[f64; 5]>> = hbars
        .par_iter()
        .map(|&hbar| {
            let started = Instant::now();
            deterministic_point(template, t_eval, hbar, grid, max_dt)
                .map(|[a, b, c, d]| [a, b, c, d, started.elapsed().as_secs_f64()])
                .map_err(|e| Error::AtHbar {
                    hbar,
                    source: Box::new(e),
                })
        })
        .collect();
    let mut out = DeterministicSweepResult {
        hbars: hbars.to_vec(),
        mean_err: Vec::new(),
        var_ratio: Vec::new(),
        action_err: Vec::new(),
        offset: Vec::new(),
        runtimes: Vec::new(),
    };
    for r in rows {
        let [m, v, a, o, rt] = r?;
        out.mean_err.push(m);
        out.var_ratio.push(v);
        out.action_err.push(a);
        out.offset.push(o);
        out.runtimes.push(rt);
    }
    Ok(out)
}

fn deterministic_point(
    template: CoherentTemplate,
    t_eval: f64,
    hbar: f64,
    grid: Grid1D,
    max_dt: f64,
) -> Result<[f64; 4]> {
    let params = template.with_hbar(hbar)?;
    let pot = params.potential()?;
    let wf = quantum::init_coherent_state(grid, params)?;
    let state = evolve_to_times(&wf, &pot, &[t_eval], max_dt)?.remove(0);
    let fields = madelung_decompose(&state, default_eps_rho(&state))?;
    let parts = classical::deterministic_parts(
        t_eval,
        ClassicalState::new(template.x0, template.v0),
        &pot,
    )?;
    let mean_err = (fields.mean() - parts.xi).abs();
    let var_ratio = fields.variance() / (params.sigma() * params.sigma());
    let zero_point = zero_point_phase(&pot, hbar, t_eval);
    let reference: Vec<f64> = grid
        .points()
        .map(|x| parts.action(x, &pot) + zero_point)
        .collect();
    let (action_err, offset) =
        action_difference(&fields.s, &reference, &fields.rho, &fields.mask, hbar)?;
    Ok([mean_err, var_ratio, action_err, offset])
}

/// Least-squares slope of `log err` against `log ħ`.
pub fn convergence_order_estimate(hbars: &[f64], errors: &[f64]) -> Result<f64> {
    if hbars.len() != errors.len() {
        return Err(Error::InvalidArgument(
            "one error per hbar is required".into(),
        ));
    }
    if hbars.len() < 3 {
        return Err(Error::InvalidArgument(
            "at least three sweep points are required".into(),
        ));
    }
    if errors
        .iter()
        .chain(hbars)
        .any(|&e| !(e > 0.0 && e.is_finite()))
    {
        return Err(Error::InvalidArgument(
            "errors and hbars must be positive".into(),
        ));
    }
    let xs: Vec<f64> = hbars.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Positions of an ensemble of de Broglie-Bohm particles at the snapshot times.
#[derive(Debug, Clone, PartialEq)]
pub struct BohmEnsemble {
    pub seed: u64,
    pub starts: Vec<f64>,
    pub times: Vec<f64>,
    /// Row-major: particle `p` at time `k` is `paths[p * times.len() + k]`.
    pub paths: Vec<f64>,
    /// Particles that visited samples below the density threshold.
    pub masked: usize,
}

impl BohmEnsemble {
    pub fn n_particles(&self) -> usize {
        self.starts.len()
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let nt = self.times.len();
        &self.paths[p * nt..(p + 1) * nt]
    }

    /// Positions of every particle at snapshot `k`.
    pub fn positions_at(&self, k: usize) -> Vec<f64> {
        (0..self.n_particles()).map(|p| self.path(p)[k]).collect()
    }
}

/// `v = ∇S/m` on the mask, holding the nearest masked-on value elsewhere.
fn bohm_velocity(fields: &MadelungFields) -> Result<Vec<f64>> {
    let n = fields.s.len();
    let dx = fields.grid.dx();
    let row: Vec<Option<f64>> = (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n || !(fields.mask[i - 1] && fields.mask[i] && fields.mask[i + 1])
            {
                None
            } else {
                Some((fields.s[i + 1] - fields.s[i - 1]) / (2.0 * dx * fields.mass))
            }
        })
        .collect();
    fill_nearest(&row).ok_or(Error::EmptyMask)
}

fn check_snapshots(snapshots: &[MadelungFields]) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(Error::InvalidArgument(
            "at least two snapshots are required".into(),
        ));
    }
    let grid = snapshots[0].grid;
    if snapshots.iter().any(|s| s.grid != grid) {
        return Err(Error::IncompatibleGrids);
    }
    let h = snapshots[1].time - snapshots[0].time;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(
            "snapshot times must increase".into(),
        ));
    }
    for w in snapshots.windows(2) {
        if ((w[1].time - w[0].time) - h).abs() > 1e-9 * h.max(w[1].time.abs()) {
            return Err(Error::InvalidArgument(
                "snapshot times must be uniform".into(),
            ));
        }
    }
    Ok(h)
}

/// Sample `n_particles` starts from the first snapshot's density (one
/// random stream per particle) and integrate `ẋ = ∇S/m` through the snapshots.
pub fn bohm_trajectories(
    snapshots: &[MadelungFields],
    n_particles: usize,
    seed: u64,
) -> Result<BohmEnsemble> {
    if n_particles == 0 {
        return Err(Error::InvalidArgument(
            "at least one particle is required".into(),
        ));
    }
    check_snapshots(snapshots)?;
    let first = &snapshots[0];
    let sampler =
        InverseCdf::new(&first.rho, first.grid.x_min(), first.grid.dx()).ok_or(Error::EmptyMask)?;
    let starts: Vec<f64> = (0..n_particles)
        .into_par_iter()
        .map(|p| sampler.sample(particle_uniform(seed, p)))
        .collect();
    let mut ens = bohm_trajectories_from(snapshots, starts)?;
    ens.seed = seed;
    Ok(ens)
}

/// As [`bohm_trajectories`] from given start positions. RK4 with one step
/// per snapshot interval; velocities are linear in `x` between samples and in
/// `t` between snapshots.
pub fn bohm_trajectories_from(
    snapshots: &[MadelungFields],
    starts: Vec<f64>,
) -> Result<BohmEnsemble> {
    let h = check_snapshots(snapshots)?;
    let grid = snapshots[0].grid;
    let velocities: Vec<Vec<f64>> = snapshots.iter().map(bohm_velocity).collect::<Result<_>>()?;
    let (x0, dx) = (grid.x_min(), grid.dx());
    let nt = snapshots.len();
    let off_mask = |k: usize, x: f64| grid.nearest_index(x).is_none_or(|i| !snapshots[k].mask[i]);
    let v_at = |k: usize, w: f64, x: f64| {
        let a = interp_uniform(&velocities[k], x0, dx, x);
        if w == 0.0 {
            a
        } else {
            a * (1.0 - w) + interp_uniform(&velocities[k + 1], x0, dx, x) * w
        }
    };
    let results: Vec<(Vec<f64>, bool)> = starts
        .par_iter()
        .map(|&start| {
            let mut path = Vec::with_capacity(nt);
            let mut x = start;
            let mut masked = off_mask(0, x);
            path.push(x);
            for k in 0..nt - 1 {
                let k1 = v_at(k, 0.0, x);
                let k2 = v_at(k, 0.5, x + 0.5 * h * k1);
                let k3 = v_at(k, 0.5, x + 0.5 * h * k2);
                let k4 = v_at(k + 1, 0.0, x + h * k3);
                x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                masked |= off_mask(k + 1, x);
                path.push(x);
            }
            (path, masked)
        })
        .collect();
    let masked = results.iter().filter(|r| r.1).count();
    let total = starts.len();
    if masked as f64 > MASKED_PARTICLE_LIMIT * total as f64 {
        return Err(Error::ParticlesMasked {
            count: masked,
            total,
        });
    }
    if masked > 0 {
        log::warn!("{masked} of {total} Bohm particles held the nearest masked-on velocity");
    }
    Ok(BohmEnsemble {
        seed: 0,
        starts,
        times: snapshots.iter().map(|s| s.time).collect(),
        paths: results.into_iter().flat_map(|r| r.0).collect(),
        masked,
    })
}

/// Evolve `wf` for `n_steps` of `dt` and decompose every `every`-th state.
pub fn madelung_snapshots(
    wf: &WaveFunction,
    pot: &PotentialSpec,
    dt: f64,
    n_steps: usize,
    every: usize,
) -> Result<Vec<MadelungFields>> {
    quantum::split_step_snapshots(wf, pot, dt, n_steps, every)?
        .iter()
        .map(|s| madelung_decompose(s, default_eps_rho(s)))
        .collect()
}

/// `Σ_b |n_b/N − ∫_b ρ|` over bins of width close to `bin_width` spanning
/// the grid, with `∫_b ρ` by the midpoint rule.
pub fn histogram_l1(positions: &[f64], fields: &MadelungFields, bin_width: f64) -> f64 {
    let grid = fields.grid;
    let span = grid.x_max() - grid.x_min();
    let bins = ((span / bin_width).round() as usize).max(1);
    let w = span / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut outside = 0usize;
    for &x in positions {
        let b = ((x - grid.x_min()) / w).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
        } else if x == grid.x_max() {
            counts[bins - 1] += 1;
        } else {
            outside += 1;
        }
    }
    let n = positions.len() as f64;
    let mut l1 = outside as f64 / n;
    for (b, &c) in counts.iter().enumerate() {
        let mid = grid.x_min() + (b as f64 + 0.5) * w;
        let p = interp_uniform(&fields.rho, grid.x_min(), grid.dx(), mid) * w;
        l1 += (c as f64 / n - p).abs();
    }
    l1
}
