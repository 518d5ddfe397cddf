//! Hamilton-Jacobi action by the Hopf-Lax formula, its velocity field and
//! residual, and transport of a density along the resulting characteristics.

use rayon::prelude::*;

use crate::classical::{self, PotentialSpec};
use crate::minplus::{minplus_combination_with_branch, Grid1D, MinplusValue, SampledFunction};
use crate::numeric::{interp_uniform, particle_uniform, trapezoid, InverseCdf};
use crate::{Error, Result};

/// `S(x_i, t_k)` stored row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionField {
    grid: Grid1D,
    times: Vec<f64>,
    values: Vec<MinplusValue>,
    /// Samples whose Hopf-Lax minimizer sits on the grid edge; empty when
    /// the field did not come from [`hopf_lax_solve`].
    pinned: Vec<bool>,
}

impl ActionField {
    pub fn new(grid: Grid1D, times: Vec<f64>, values: Vec<MinplusValue>) -> Result<Self> {
        if values.len() != grid.len() * times.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} times × {} samples",
                values.len(),
                times.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            times,
            values,
            pinned: Vec::new(),
        })
    }

    /// Sample `s(x, t)` on the grid at each time.
    pub fn from_fn(grid: Grid1D, times: Vec<f64>, s: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * times.len());
        for &t in &times {
            for x in grid.points() {
                values.push(MinplusValue::new(s(x, t))?);
            }
        }
        Self::new(grid, times, values)
    }

    /// Stack slices `S(·, t_k)` sharing one grid.
    pub fn from_rows(times: Vec<f64>, rows: &[SampledFunction]) -> Result<Self> {
        let grid = *rows
            .first()
            .ok_or(Error::InvalidArgument("no rows".into()))?
            .grid();
        if rows.len() != times.len() {
            return Err(Error::InvalidArgument(
                "one row per time is required".into(),
            ));
        }
        let mut values = Vec::with_capacity(grid.len() * times.len());
        for r in rows {
            if *r.grid() != grid {
                return Err(Error::IncompatibleGrids);
            }
            values.extend_from_slice(r.values());
        }
        Self::new(grid, times, values)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn row(&self, k: usize) -> &[MinplusValue] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn slice(&self, k: usize) -> SampledFunction {
        SampledFunction::new(self.grid, self.row(k).to_vec()).expect("row length matches grid")
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize) -> MinplusValue {
        self.values[k * self.grid.len() + i]
    }

    /// Whether the minimizer behind `S(x_i, t_k)` lies on the grid boundary,
    /// i.e. the value is shaped by the truncation of `S0`.
    #[inline]
    pub fn is_pinned(&self, k: usize, i: usize) -> bool {
        self.pinned
            .get(k * self.grid.len() + i)
            .copied()
            .unwrap_or(false)
    }
}

/// `ρ(x_i, t_k)`, row-major by time. Each row integrates to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid1D,
    times: Vec<f64>,
    rho: Vec<f64>,
}

impl DensityField {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.rho[k * n..(k + 1) * n]
    }

    pub fn mass(&self, k: usize) -> f64 {
        trapezoid(self.row(k), self.grid.dx())
    }

    pub fn mean(&self, k: usize) -> f64 {
        let xr: Vec<f64> = self
            .grid
            .points()
            .zip(self.row(k))
            .map(|(x, r)| x * r)
            .collect();
        trapezoid(&xr, self.grid.dx()) / self.mass(k)
    }

    pub fn variance(&self, k: usize) -> f64 {
        let mu = self.mean(k);
        let v: Vec<f64> = self
            .grid
            .points()
            .zip(self.row(k))
            .map(|(x, r)| (x - mu) * (x - mu) * r)
            .collect();
        trapezoid(&v, self.grid.dx()) / self.mass(k)
    }

    fn from_rows(grid: Grid1D, times: Vec<f64>, rows: Vec<Vec<f64>>) -> Self {
        let rho = rows.into_iter().flatten().collect();
        Self { grid, times, rho }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfLaxOptions {
    /// Parabolic refinement through the discrete minimizer and its neighbours.
    pub refine: bool,
}

impl Default for HopfLaxOptions {
    fn default() -> Self {
        Self { refine: true }
    }
}

/// `S(x, t) = min_{x0} S0(x0) + S_cl(x, t; x0)`, the minimum taken over grid
/// points (S0 is `+∞` off the grid).
pub fn hopf_lax_solve(
    s0: &SampledFunction,
    pot: &PotentialSpec,
    grid: Grid1D,
    times: &[f64],
) -> Result<ActionField> {
    hopf_lax_solve_with(s0, pot, grid, times, HopfLaxOptions::default())
}

pub fn hopf_lax_solve_with(
    s0: &SampledFunction,
    pot: &PotentialSpec,
    grid: Grid1D,
    times: &[f64],
    opts: HopfLaxOptions,
) -> Result<ActionField> {
    if *s0.grid() != grid {
        return Err(Error::IncompatibleGrids);
    }
    if let Some(&t) = times.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "Hopf-Lax times must be positive, got {t}"
        )));
    }
    let caustics: Vec<f64> = times
        .iter()
        .copied()
        .filter(|&t| pot.check_caustic(t).is_err())
        .collect();
    if !caustics.is_empty() {
        return Err(Error::Caustic { times: caustics });
    }

    let xs: Vec<f64> = grid.points().collect();
    let init = s0.values();
    let mut values = Vec::with_capacity(xs.len() * times.len());
    let mut pinned = Vec::with_capacity(xs.len() * times.len());
    for &t in times {
        let row: Vec<(MinplusValue, bool)> = xs
            .par_iter()
            .map(|&x| hopf_lax_point(x, t, &xs, init, pot, opts.refine))
            .collect();
        for (v, p) in row {
            values.push(v);
            pinned.push(p);
        }
    }
    let mut field = ActionField::new(grid, times.to_vec(), values)?;
    field.pinned = pinned;
    Ok(field)
}

fn hopf_lax_point(
    x: f64,
    t: f64,
    xs: &[f64],
    init: &[MinplusValue],
    pot: &PotentialSpec,
    refine: bool,
) -> (MinplusValue, bool) {
    let phi = |j: usize| {
        init[j].otimes(
            MinplusValue::new(classical::closed_form_unchecked(x, t, xs[j], pot))
                .unwrap_or(MinplusValue::INFINITY),
        )
    };
    let mut best = MinplusValue::INFINITY;
    let mut arg = usize::MAX;
    for j in 0..xs.len() {
        let v = phi(j);
        if v < best {
            best = v;
            arg = j;
        }
    }
    if arg == usize::MAX {
        return (best, false);
    }
    if arg == 0 || arg + 1 == xs.len() {
        return (best, true);
    }
    if !refine {
        return (best, false);
    }
    let (a, b, c) = (phi(arg - 1), best, phi(arg + 1));
    if !(a.is_finite() && c.is_finite()) {
        return (best, false);
    }
    let (a, b, c) = (a.get(), b.get(), c.get());
    let curvature = a - 2.0 * b + c;
    if curvature <= 0.0 {
        return (best, false);
    }
    let refined = b - (c - a) * (c - a) / (8.0 * curvature);
    if refined < b {
        (MinplusValue::new(refined).unwrap_or(best), false)
    } else {
        (best, false)
    }
}

/// Velocity `∇S/m` at every sample; `None` where a needed neighbour is `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: Grid1D,
    times: Vec<f64>,
    values: Vec<Option<f64>>,
}

impl VelocityField {
    pub fn row(&self, k: usize) -> &[Option<f64>] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize, i: usize) -> Option<f64> {
        self.values[k * self.grid.len() + i]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Row `k` with masked samples replaced by the nearest valid value.
    fn filled_row(&self, k: usize) -> Option<Vec<f64>> {
        fill_nearest(self.row(k))
    }
}

pub(crate) fn fill_nearest(row: &[Option<f64>]) -> Option<Vec<f64>> {
    let valid: Vec<usize> = (0..row.len()).filter(|&i| row[i].is_some()).collect();
    if valid.is_empty() {
        return None;
    }
    let mut out = Vec::with_capacity(row.len());
    let mut p = 0;
    for i in 0..row.len() {
        while p + 1 < valid.len() && valid[p + 1] <= i {
            p += 1;
        }
        let mut j = valid[p];
        if j < i && p + 1 < valid.len() && valid[p + 1] - i < i - j {
            j = valid[p + 1];
        }
        if j > i && p > 0 && i - valid[p - 1] <= j - i {
            j = valid[p - 1];
        }
        out.push(row[j].expect("valid index"));
    }
    Some(out)
}

/// Central differences in space (one-sided at the ends) of one row, divided by `m`.
pub(crate) fn gradient_row(row: &[MinplusValue], dx: f64, m: f64) -> Vec<Option<f64>> {
    let n = row.len();
    let fin = |i: usize| row[i].is_finite().then(|| row[i].get());
    (0..n)
        .map(|i| {
            let here = fin(i)?;
            let g = if i == 0 {
                (fin(1)? - here) / dx
            } else if i + 1 == n {
                (here - fin(n - 2)?) / dx
            } else {
                (fin(i + 1)? - fin(i - 1)?) / (2.0 * dx)
            };
            Some(g / m)
        })
        .collect()
}

/// `v = ∇S/m` by finite differences in space.
pub fn velocity_field(s: &ActionField, pot: &PotentialSpec) -> VelocityField {
    let dx = s.grid.dx();
    let values = (0..s.times.len())
        .flat_map(|k| gradient_row(s.row(k), dx, pot.mass()))
        .collect();
    VelocityField {
        grid: s.grid,
        times: s.times.clone(),
        values,
    }
}

/// `max |∂S/∂t + (∇S)²/2m + V|` over interior samples, central differences
/// in `t` and `x`. Samples with a `+∞` neighbour, or whose stencil touches a
/// value with its minimizer pinned to the grid edge, are skipped.
pub fn hj_residual(s: &ActionField, pot: &PotentialSpec) -> Result<f64> {
    hj_residual_masked(s, pot, |_, _| false)
}

/// As [`hj_residual`], additionally skipping samples where `exclude(k, i)`.
pub fn hj_residual_masked(
    s: &ActionField,
    pot: &PotentialSpec,
    exclude: impl Fn(usize, usize) -> bool,
) -> Result<f64> {
    let nt = s.times.len();
    if nt < 3 {
        return Err(Error::InvalidArgument(format!(
            "the residual needs at least 3 time samples, got {nt}"
        )));
    }
    let n = s.grid.len();
    let dx = s.grid.dx();
    let m = pot.mass();
    let mut worst: f64 = 0.0;
    for k in 1..nt - 1 {
        let dt2 = s.times[k + 1] - s.times[k - 1];
        for i in 1..n - 1 {
            if exclude(k, i) {
                continue;
            }
            let nb = [
                s.at(k + 1, i),
                s.at(k - 1, i),
                s.at(k, i + 1),
                s.at(k, i - 1),
            ];
            if nb.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let stencil = [(k, i), (k + 1, i), (k - 1, i), (k, i + 1), (k, i - 1)];
            if stencil.iter().any(|&(a, b)| s.is_pinned(a, b)) {
                continue;
            }
            let st = (nb[0].get() - nb[1].get()) / dt2;
            let sx = (nb[2].get() - nb[3].get()) / (2.0 * dx);
            let r = (st + sx * sx / (2.0 * m) + pot.value(s.grid.x(i))).abs();
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Pointwise `min_k (λ_k + S_k)` of action fields, with a mask marking
/// samples within `band` samples (in space, and one step in time) of a switch
/// between winning terms.
pub fn combine_action_fields(
    pairs: &[(f64, &ActionField)],
    band: usize,
) -> Result<(ActionField, Vec<bool>)> {
    let (_, first) = pairs.first().ok_or(Error::EmptyCombination)?;
    for (_, f) in pairs {
        if f.grid != first.grid || f.times != first.times {
            return Err(Error::IncompatibleGrids);
        }
    }
    let n = first.grid.len();
    let nt = first.times.len();
    let mut rows = Vec::with_capacity(nt);
    let mut switch = vec![false; n * nt];
    for k in 0..nt {
        let slices: Vec<SampledFunction> = pairs.iter().map(|(_, f)| f.slice(k)).collect();
        let refs: Vec<(f64, &SampledFunction)> = pairs
            .iter()
            .zip(&slices)
            .map(|((o, _), s)| (*o, s))
            .collect();
        let (row, branch) = minplus_combination_with_branch(&refs)?;
        for i in 0..n - 1 {
            if branch[i] != branch[i + 1] {
                let lo = i.saturating_sub(band);
                let hi = (i + 1 + band).min(n - 1);
                for j in lo..=hi {
                    switch[k * n + j] = true;
                }
            }
        }
        rows.push(row);
    }
    let mut mask = switch.clone();
    for k in 0..nt {
        for i in 0..n {
            let near =
                (k > 0 && switch[(k - 1) * n + i]) || (k + 1 < nt && switch[(k + 1) * n + i]);
            mask[k * n + i] |= near;
        }
    }
    let mut field = ActionField::from_rows(first.times.clone(), &rows)?;
    if pairs.iter().any(|(_, f)| !f.pinned.is_empty()) {
        field.pinned = (0..n * nt)
            .map(|q| pairs.iter().any(|(_, f)| f.is_pinned(q / n, q % n)))
            .collect();
    }
    Ok((field, mask))
}

/// Gaussian kernel density estimate on `grid` with the normal-reference
/// bandwidth `1.06 σ̂ n^(−1/5)`, renormalized to unit trapezoid mass.
pub(crate) fn kde_on_grid(positions: &[f64], grid: &Grid1D) -> Vec<f64> {
    let n = grid.len();
    let dx = grid.dx();
    let count = positions.len() as f64;
    let mean = positions.iter().sum::<f64>() / count;
    let var = positions
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / (count - 1.0).max(1.0);
    let bw = (1.06 * var.sqrt() * count.powf(-0.2)).max(0.5 * dx);

    // linear binning onto the nodes
    let mut weights = vec![0.0; n];
    for &x in positions {
        let r = ((x - grid.x_min()) / dx).clamp(0.0, (n - 1) as f64);
        let i = (r.floor() as usize).min(n - 2);
        let w = r - i as f64;
        weights[i] += 1.0 - w;
        weights[i + 1] += w;
    }
    let half = ((5.0 * bw / dx).ceil() as usize).max(1);
    let kernel: Vec<f64> = (0..=half)
        .map(|j| {
            let u = j as f64 * dx / bw;
            (-0.5 * u * u).exp()
        })
        .collect();
    let mut rho = vec![0.0; n];
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        for (j, r) in rho.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *r += w * kernel[i.abs_diff(j)];
        }
    }
    let mass = trapezoid(&rho, dx);
    if mass > 0.0 {
        for r in &mut rho {
            *r /= mass;
        }
    }
    rho
}

fn check_density(rho0: &SampledFunction) -> Result<Vec<f64>> {
    let raw = rho0.raw();
    if raw.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument(
            "density must be finite and nonnegative".into(),
        ));
    }
    let mass = trapezoid(&raw, rho0.grid().dx());
    if (mass - 1.0).abs() > 1e-3 {
        return Err(Error::InvalidArgument(format!(
            "density integrates to {mass}, expected 1"
        )));
    }
    Ok(raw)
}

/// Largest RK4 substep used when advecting particles through `S`.
const TRANSPORT_MAX_STEP: f64 = 1e-2;

/// Monte-Carlo transport of `rho0` along `ẋ = ∇S/m`.
///
/// Starts are drawn by inverse CDF, integrated with RK4 (velocity linear in
/// `x` and in `t` between the rows of `S`), and reduced to a KDE at every time
/// of `S`. The first time of `S` is the time at which `rho0` is given.
pub fn transport_density(
    rho0: &SampledFunction,
    s: &ActionField,
    pot: &PotentialSpec,
    n_particles: usize,
    seed: u64,
) -> Result<DensityField> {
    let paths = advect_particles(rho0, s, pot, n_particles, seed)?;
    let grid = s.grid;
    let rows = (0..s.times.len())
        .map(|k| {
            let pos: Vec<f64> = paths.iter().map(|p| p[k]).collect();
            kde_on_grid(&pos, &grid)
        })
        .collect();
    Ok(DensityField::from_rows(grid, s.times.clone(), rows))
}

/// Particle positions at every time of `s`, one vector per particle.
pub fn advect_particles(
    rho0: &SampledFunction,
    s: &ActionField,
    pot: &PotentialSpec,
    n_particles: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if *rho0.grid() != s.grid {
        return Err(Error::IncompatibleGrids);
    }
    if n_particles == 0 {
        return Err(Error::InvalidArgument(
            "n_particles must be positive".into(),
        ));
    }
    let density = check_density(rho0)?;
    let grid = s.grid;
    let (x0, dx) = (grid.x_min(), grid.dx());
    let sampler = InverseCdf::new(&density, x0, dx)
        .ok_or_else(|| Error::InvalidArgument("density has zero mass".into()))?;
    let vel = velocity_field(s, pot);
    let rows: Vec<Vec<f64>> = (0..s.times.len())
        .map(|k| {
            vel.filled_row(k).ok_or_else(|| {
                Error::InvalidArgument(format!("action is +inf everywhere at t = {}", s.times[k]))
            })
        })
        .collect::<Result<_>>()?;
    let times = &s.times;

    let speed = |x: f64, t: f64, k: usize| {
        let (ta, tb) = (times[k], times[k + 1]);
        let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        let va = interp_uniform(&rows[k], x0, dx, x);
        let vb = interp_uniform(&rows[k + 1], x0, dx, x);
        va * (1.0 - w) + vb * w
    };

    let results: Vec<(Vec<f64>, bool)> = (0..n_particles)
        .into_par_iter()
        .map(|p| {
            let mut x = sampler.sample(particle_uniform(seed, p));
            let mut clamped = false;
            let mut path = Vec::with_capacity(times.len());
            path.push(x);
            for k in 0..times.len() - 1 {
                let span = times[k + 1] - times[k];
                let sub = ((span / TRANSPORT_MAX_STEP).ceil() as usize).max(1);
                let h = span / sub as f64;
                let mut t = times[k];
                for _ in 0..sub {
                    let k1 = speed(x, t, k);
                    let k2 = speed(x + 0.5 * h * k1, t + 0.5 * h, k);
                    let k3 = speed(x + 0.5 * h * k2, t + 0.5 * h, k);
                    let k4 = speed(x + h * k3, t + h, k);
                    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    t += h;
                    if !grid.contains(x) {
                        x = x.clamp(grid.x_min(), grid.x_max());
                        clamped = true;
                    }
                }
                path.push(x);
            }
            (path, clamped)
        })
        .collect();
    let clamped = results.iter().filter(|(_, c)| *c).count();
    if clamped * 100 > n_particles {
        return Err(Error::ParticlesEscaped {
            clamped,
            total: n_particles,
        });
    }
    if clamped > 0 {
        log::warn!("{clamped} of {n_particles} particles clamped at the grid boundary");
    }
    Ok(results.into_iter().map(|(p, _)| p).collect())
}

/// Density transport for the statistical pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityMethod {
    /// Monte-Carlo characteristics and KDE, see [`transport_density`].
    Particles { n_particles: usize, seed: u64 },
    /// Deterministic push-forward of the grid nodes, see [`transport_density_characteristics`].
    Characteristics,
}

/// Push every grid node `x0` forward along the classical path with initial
/// velocity `∇S0(x0)/m` and set `ρ(X(x0, t)) = ρ0(x0) / (∂X/∂x0)`, then
/// interpolate back onto the grid.
///
/// Errors if the map folds (`∂X/∂x0 ≤ 0`) where `ρ0` carries mass.
pub fn transport_density_characteristics(
    rho0: &SampledFunction,
    s0: &SampledFunction,
    pot: &PotentialSpec,
    times: &[f64],
) -> Result<DensityField> {
    if rho0.grid() != s0.grid() {
        return Err(Error::IncompatibleGrids);
    }
    let density = check_density(rho0)?;
    let grid = *rho0.grid();
    let n = grid.len();
    let dx = grid.dx();
    let v0 = gradient_row(s0.values(), dx, pot.mass());
    let v0 = fill_nearest(&v0).ok_or(Error::AllInfinite)?;
    let mut t_sorted = times.to_vec();
    if t_sorted.windows(2).any(|w| w[1] < w[0]) || t_sorted.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument(
            "times must be nonnegative and ascending".into(),
        ));
    }
    t_sorted.dedup();

    // positions of every node at every requested time
    let tracks: Vec<Vec<f64>> = grid
        .points()
        .zip(v0.iter().copied())
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(x, v)| {
            let mut out = Vec::with_capacity(times.len());
            let (mut x, mut v, mut t) = (x, v, 0.0);
            for &target in times {
                let span = target - t;
                if span > 0.0 {
                    let steps = ((span / (0.1 * pot.default_dt())).ceil() as usize).max(1);
                    let (xs, vs) = classical::integrate(pot, x, v, span / steps as f64, steps);
                    x = xs[steps];
                    v = vs[steps];
                    t = target;
                }
                out.push(x);
            }
            out
        })
        .collect();

    let peak = density.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let pos: Vec<f64> = tracks.iter().map(|tr| tr[k]).collect();
        let mut pushed = Vec::with_capacity(n);
        for j in 0..n {
            let jac = if j == 0 {
                (pos[1] - pos[0]) / dx
            } else if j + 1 == n {
                (pos[n - 1] - pos[n - 2]) / dx
            } else {
                (pos[j + 1] - pos[j - 1]) / (2.0 * dx)
            };
            if jac <= 0.0 {
                if density[j] > 1e-12 * peak {
                    return Err(Error::Caustic { times: vec![t] });
                }
                pushed.push(0.0);
            } else {
                pushed.push(density[j] / jac);
            }
        }
        let mut row = vec![0.0; n];
        let mut seg = 0;
        for (i, r) in row.iter_mut().enumerate() {
            let x = grid.x(i);
            if x < pos[0] || x > pos[n - 1] {
                continue;
            }
            while seg + 2 < n && pos[seg + 1] < x {
                seg += 1;
            }
            let (a, b) = (pos[seg], pos[seg + 1]);
            let w = if b > a {
                ((x - a) / (b - a)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            *r = pushed[seg] * (1.0 - w) + pushed[seg + 1] * w;
        }
        let mass = trapezoid(&row, dx);
        if mass > 0.0 {
            for r in &mut row {
                *r /= mass;
            }
        }
        rows.push(row);
    }
    Ok(DensityField::from_rows(grid, times.to_vec(), rows))
}

/// Classical reference pair `(S, ρ)` of the statistical Hamilton-Jacobi
/// equations. Both fields carry the times `[0, times...]`; row 0 is the
/// initial data.
pub fn statistical_hj_solve(
    rho0: &SampledFunction,
    s0: &SampledFunction,
    pot: &PotentialSpec,
    grid: Grid1D,
    times: &[f64],
    method: DensityMethod,
) -> Result<(ActionField, DensityField)> {
    if *rho0.grid() != grid || *s0.grid() != grid {
        return Err(Error::IncompatibleGrids);
    }
    let later = hopf_lax_solve(s0, pot, grid, times)?;
    let mut all_times = Vec::with_capacity(times.len() + 1);
    all_times.push(0.0);
    all_times.extend_from_slice(times);
    let mut values = s0.values().to_vec();
    values.extend_from_slice(&later.values);
    let mut action = ActionField::new(grid, all_times.clone(), values)?;
    if !later.pinned.is_empty() {
        action.pinned = vec![false; grid.len()];
        action.pinned.extend_from_slice(&later.pinned);
    }
    let density = match method {
        DensityMethod::Particles { n_particles, seed } => {
            transport_density(rho0, &action, pot, n_particles, seed)?
        }
        DensityMethod::Characteristics => {
            transport_density_characteristics(rho0, s0, pot, &all_times)?
        }
    };
    Ok((action, density))
}
