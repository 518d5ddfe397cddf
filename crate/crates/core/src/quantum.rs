//! Split-step spectral Schrödinger solver, Madelung decomposition
//! `ψ = √ρ·exp(iS/ħ)`, quantum potential and harmonic coherent states.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::classical::{self, ClassicalState, PotentialKind, PotentialSpec};
use crate::minplus::Grid1D;
use crate::numeric::{trapezoid, wrap_angle};
use crate::{Error, Result};

/// Fraction of `|ψ̂|²` allowed in `|k| ≥ 0.9 k_max`.
pub const SPECTRAL_TAIL_LIMIT: f64 = 1e-10;

/// Relative density threshold `ε_ρ / max ρ` used when none is given.
pub const DEFAULT_EPS_RHO: f64 = 1e-6;

const NORM_TOLERANCE: f64 = 1e-9;

/// Sampled wave function `ψ(x, t)` for a given `ħ` and mass.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid1D,
    psi: Vec<Complex64>,
    hbar: f64,
    mass: f64,
    time: f64,
}

impl WaveFunction {
    /// Wraps samples that are already normalized (`∫|ψ|² = 1 ± 1e-9`).
    pub fn new(grid: Grid1D, psi: Vec<Complex64>, hbar: f64, mass: f64) -> Result<Self> {
        let wf = Self::unnormalized(grid, psi, hbar, mass)?;
        let norm = wf.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "wave function norm {norm} is not 1"
            )));
        }
        Ok(wf)
    }

    /// Rescales the samples to unit norm.
    pub fn normalized(grid: Grid1D, psi: Vec<Complex64>, hbar: f64, mass: f64) -> Result<Self> {
        let mut wf = Self::unnormalized(grid, psi, hbar, mass)?;
        let norm = wf.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("wave function has zero norm".into()));
        }
        let scale = norm.sqrt().recip();
        for z in &mut wf.psi {
            *z *= scale;
        }
        Ok(wf)
    }

    fn unnormalized(grid: Grid1D, psi: Vec<Complex64>, hbar: f64, mass: f64) -> Result<Self> {
        if psi.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for {} grid points",
                psi.len(),
                grid.len()
            )));
        }
        check_positive("hbar", hbar)?;
        check_positive("mass", mass)?;
        if psi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidArgument("non-finite amplitude".into()));
        }
        Ok(Self {
            grid,
            psi,
            hbar,
            mass,
            time: 0.0,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn psi(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Time reached by evolution, 0 for freshly built states.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `∫|ψ|² dx` by the trapezoid rule.
    pub fn norm(&self) -> f64 {
        trapezoid(&self.density(), self.grid.dx())
    }

    /// Fraction of spectral power in `|k| ≥ 0.9 k_max`.
    pub fn spectral_tail(&self) -> f64 {
        let n = self.psi.len();
        let mut buf = self.psi.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let cut = 0.9 * (n as f64 / 2.0);
        let (mut tail, mut total) = (0.0, 0.0);
        for (j, z) in buf.iter().enumerate() {
            let p = z.norm_sqr();
            total += p;
            if wavenumber_index(j, n).abs() >= cut {
                tail += p;
            }
        }
        if total > 0.0 {
            tail / total
        } else {
            0.0
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} = {v} must be positive"
        )))
    }
}

/// Signed DFT index of bin `j`.
fn wavenumber_index(j: usize, n: usize) -> f64 {
    if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

fn check_span(grid: &Grid1D, lo: f64, hi: f64) -> Result<()> {
    if lo < grid.x_min() || hi > grid.x_max() {
        return Err(Error::GridTooSmall {
            need_min: lo,
            need_max: hi,
            x_min: grid.x_min(),
            x_max: grid.x_max(),
        });
    }
    Ok(())
}

/// `ψ = (2πσ²)^(−1/4) exp(−(x−x0)²/4σ²) exp(i m v0 x/ħ)`, normalized on the
/// grid. The grid must cover `x0 ± 8σ`.
pub fn init_gaussian_packet(
    grid: Grid1D,
    x0: f64,
    v0: f64,
    sigma: f64,
    hbar: f64,
    mass: f64,
) -> Result<WaveFunction> {
    check_positive("sigma", sigma)?;
    check_positive("hbar", hbar)?;
    check_positive("mass", mass)?;
    check_span(&grid, x0 - 8.0 * sigma, x0 + 8.0 * sigma)?;
    Ok(gaussian_unchecked(grid, x0, mass * v0, sigma, hbar, mass))
}

fn gaussian_unchecked(
    grid: Grid1D,
    x0: f64,
    p: f64,
    sigma: f64,
    hbar: f64,
    mass: f64,
) -> WaveFunction {
    let amp = (2.0 * PI * sigma * sigma).powf(-0.25);
    let psi = grid
        .points()
        .map(|x| {
            let d = x - x0;
            Complex64::from_polar(amp * (-d * d / (4.0 * sigma * sigma)).exp(), p * x / hbar)
        })
        .collect();
    let wf = WaveFunction::unnormalized(grid, psi, hbar, mass).expect("validated inputs");
    let norm = wf.norm();
    let scale = norm.sqrt().recip();
    WaveFunction {
        psi: wf.psi.into_iter().map(|z| z * scale).collect(),
        ..wf
    }
}

/// Coherent state of the oscillator `V = ½ m ω² x²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentStateParams {
    pub x0: f64,
    pub v0: f64,
    pub omega: f64,
    pub mass: f64,
    pub hbar: f64,
}

impl CoherentStateParams {
    pub fn new(x0: f64, v0: f64, omega: f64, mass: f64, hbar: f64) -> Result<Self> {
        check_positive("omega", omega)?;
        check_positive("mass", mass)?;
        check_positive("hbar", hbar)?;
        if !(x0.is_finite() && v0.is_finite()) {
            return Err(Error::InvalidArgument("x0 and v0 must be finite".into()));
        }
        Ok(Self {
            x0,
            v0,
            omega,
            mass,
            hbar,
        })
    }

    /// `σ_ħ = √(ħ / 2mω)`.
    pub fn sigma(&self) -> f64 {
        (self.hbar / (2.0 * self.mass * self.omega)).sqrt()
    }

    /// Amplitude of the classical orbit.
    pub fn orbit_amplitude(&self) -> f64 {
        self.x0.hypot(self.v0 / self.omega)
    }

    pub fn potential(&self) -> Result<PotentialSpec> {
        PotentialSpec::harmonic(self.mass, self.omega)
    }

    pub fn with_hbar(&self, hbar: f64) -> Result<Self> {
        Self::new(self.x0, self.v0, self.omega, self.mass, hbar)
    }
}

/// Gaussian of variance `σ_ħ²` centred at `x0` with phase `m v0 x/ħ`. The grid
/// must cover the whole orbit widened by `8σ_ħ`.
pub fn init_coherent_state(grid: Grid1D, params: CoherentStateParams) -> Result<WaveFunction> {
    let sigma = params.sigma();
    let reach = params.orbit_amplitude() + 8.0 * sigma;
    check_span(&grid, -reach, reach)?;
    Ok(gaussian_unchecked(
        grid,
        params.x0,
        params.mass * params.v0,
        sigma,
        params.hbar,
        params.mass,
    ))
}

/// Strang-split propagator for a fixed grid, potential and step.
pub struct SplitStep {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    scratch: Vec<Complex64>,
    dt: f64,
}

impl SplitStep {
    pub fn new(grid: &Grid1D, pot: &PotentialSpec, hbar: f64, dt: f64) -> Result<Self> {
        check_positive("dt", dt)?;
        check_positive("hbar", hbar)?;
        let n = grid.len();
        let m = pot.mass();
        let dx = grid.dx();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let half_potential = grid
            .points()
            .map(|x| Complex64::from_polar(1.0, -pot.value(x) * dt / (2.0 * hbar)))
            .collect();
        let dk = 2.0 * PI / (n as f64 * dx);
        let kinetic = (0..n)
            .map(|j| {
                let k = wavenumber_index(j, n) * dk;
                Complex64::from_polar(1.0 / n as f64, -hbar * k * k * dt / (2.0 * m))
            })
            .collect();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(Self {
            forward,
            inverse,
            half_potential,
            kinetic,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step `e^{−iVdt/2ħ} F⁻¹ e^{−iħk²dt/2m} F e^{−iVdt/2ħ}` in place.
    pub fn step(&mut self, psi: &mut [Complex64]) {
        for (z, f) in psi.iter_mut().zip(&self.half_potential) {
            *z *= f;
        }
        self.forward.process_with_scratch(psi, &mut self.scratch);
        for (z, f) in psi.iter_mut().zip(&self.kinetic) {
            *z *= f;
        }
        self.inverse.process_with_scratch(psi, &mut self.scratch);
        for (z, f) in psi.iter_mut().zip(&self.half_potential) {
            *z *= f;
        }
    }
}

fn check_tail(wf: &WaveFunction) -> Result<()> {
    let mass = wf.spectral_tail();
    if mass > SPECTRAL_TAIL_LIMIT {
        return Err(Error::SpectralTail { mass });
    }
    Ok(())
}

fn check_mass(wf: &WaveFunction, pot: &PotentialSpec) -> Result<()> {
    if wf.mass != pot.mass() {
        return Err(Error::InvalidArgument(format!(
            "wave function mass {} differs from potential mass {}",
            wf.mass,
            pot.mass()
        )));
    }
    Ok(())
}

/// Advance `n_steps` Strang steps of size `dt` with periodic boundaries.
///
/// The spectral tail is checked before and after; `n_steps = 0` returns the
/// input unchanged.
pub fn split_step_evolve(
    wf: &WaveFunction,
    pot: &PotentialSpec,
    dt: f64,
    n_steps: usize,
) -> Result<WaveFunction> {
    check_positive("dt", dt)?;
    check_mass(wf, pot)?;
    if n_steps == 0 {
        return Ok(wf.clone());
    }
    check_tail(wf)?;
    let mut prop = SplitStep::new(&wf.grid, pot, wf.hbar, dt)?;
    let mut out = wf.clone();
    for _ in 0..n_steps {
        prop.step(&mut out.psi);
    }
    out.time = wf.time + dt * n_steps as f64;
    check_tail(&out)?;
    Ok(out)
}

/// Evolve and keep every `every`-th state, including the initial one.
pub fn split_step_snapshots(
    wf: &WaveFunction,
    pot: &PotentialSpec,
    dt: f64,
    n_steps: usize,
    every: usize,
) -> Result<Vec<WaveFunction>> {
    check_positive("dt", dt)?;
    check_mass(wf, pot)?;
    if every == 0 {
        return Err(Error::InvalidArgument(
            "snapshot stride must be at least 1".into(),
        ));
    }
    check_tail(wf)?;
    let mut prop = SplitStep::new(&wf.grid, pot, wf.hbar, dt)?;
    let mut cur = wf.clone();
    let mut out = vec![cur.clone()];
    for s in 1..=n_steps {
        prop.step(&mut cur.psi);
        cur.time = wf.time + dt * s as f64;
        if s % every == 0 {
            out.push(cur.clone());
        }
    }
    check_tail(&cur)?;
    Ok(out)
}

/// Density, action and validity mask of `ψ = √ρ·exp(iS/ħ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MadelungFields {
    pub grid: Grid1D,
    pub rho: Vec<f64>,
    /// Unwrapped on masked samples; the principal value `ħ·arg ψ` elsewhere.
    pub s: Vec<f64>,
    pub mask: Vec<bool>,
    pub hbar: f64,
    pub mass: f64,
    pub time: f64,
}

impl MadelungFields {
    /// `√ρ·exp(iS/ħ)` at every sample.
    pub fn reconstruct(&self) -> Vec<Complex64> {
        self.rho
            .iter()
            .zip(&self.s)
            .map(|(&r, &s)| Complex64::from_polar(r.sqrt(), s / self.hbar))
            .collect()
    }

    pub fn mass_integral(&self) -> f64 {
        trapezoid(&self.rho, self.grid.dx())
    }

    pub fn mean(&self) -> f64 {
        density_mean(&self.rho, &self.grid)
    }

    pub fn variance(&self) -> f64 {
        density_variance(&self.rho, &self.grid)
    }

    /// Half-open index ranges of the connected masked-true runs.
    pub fn components(&self) -> Vec<(usize, usize)> {
        mask_runs(&self.mask)
    }
}

pub(crate) fn density_mean(rho: &[f64], grid: &Grid1D) -> f64 {
    let dx = grid.dx();
    let w: Vec<f64> = rho.iter().zip(grid.points()).map(|(&r, x)| r * x).collect();
    trapezoid(&w, dx) / trapezoid(rho, dx)
}

pub(crate) fn density_variance(rho: &[f64], grid: &Grid1D) -> f64 {
    let dx = grid.dx();
    let mu = density_mean(rho, grid);
    let w: Vec<f64> = rho
        .iter()
        .zip(grid.points())
        .map(|(&r, x)| r * (x - mu) * (x - mu))
        .collect();
    trapezoid(&w, dx) / trapezoid(rho, dx)
}

fn mask_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if mask[i] {
            let start = i;
            while i < mask.len() && mask[i] {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }
    runs
}

/// `ε_ρ = 1e-6·max ρ` for `wf`.
pub fn default_eps_rho(wf: &WaveFunction) -> f64 {
    DEFAULT_EPS_RHO * wf.psi.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
}

/// Split `ψ` into `ρ = |ψ|²` and an unwrapped phase `S`.
///
/// Each connected run of `ρ ≥ eps_rho` is anchored at its density maximum
/// with `S = ħ·arg ψ` there, and unwrapped outward by wrapped increments.
pub fn madelung_decompose(wf: &WaveFunction, eps_rho: f64) -> Result<MadelungFields> {
    check_positive("eps_rho", eps_rho)?;
    let rho = wf.density();
    let mask: Vec<bool> = rho.iter().map(|&r| r >= eps_rho).collect();
    let runs = mask_runs(&mask);
    if runs.is_empty() {
        return Err(Error::EmptyMask);
    }
    let hbar = wf.hbar;
    let arg: Vec<f64> = wf.psi.iter().map(|z| z.arg()).collect();
    let mut s: Vec<f64> = arg.iter().map(|a| hbar * a).collect();
    for (lo, hi) in runs {
        let mut anchor = lo;
        for i in lo..hi {
            if rho[i] > rho[anchor] {
                anchor = i;
            }
        }
        let mut phase = arg[anchor];
        s[anchor] = hbar * phase;
        for i in anchor + 1..hi {
            phase += wrap_angle(arg[i] - arg[i - 1]);
            s[i] = hbar * phase;
        }
        phase = arg[anchor];
        for i in (lo..anchor).rev() {
            phase += wrap_angle(arg[i] - arg[i + 1]);
            s[i] = hbar * phase;
        }
    }
    Ok(MadelungFields {
        grid: wf.grid,
        rho,
        s,
        mask,
        hbar,
        mass: wf.mass,
        time: wf.time,
    })
}

/// `Q = −(ħ²/2m)·Δ√ρ/√ρ` by a second central difference.
///
/// `None` at the two end samples and wherever `ρ` or a neighbour vanishes.
pub fn quantum_potential(rho: &[f64], grid: &Grid1D, hbar: f64, mass: f64) -> Vec<Option<f64>> {
    let n = rho.len();
    let dx2 = grid.dx() * grid.dx();
    let c = -hbar * hbar / (2.0 * mass);
    let amp: Vec<f64> = rho.iter().map(|r| r.max(0.0).sqrt()).collect();
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                return None;
            }
            let (a, b, d) = (amp[i - 1], amp[i], amp[i + 1]);
            if a > 0.0 && b > 0.0 && d > 0.0 {
                Some(c * (a - 2.0 * b + d) / (dx2 * b))
            } else {
                None
            }
        })
        .collect()
}

/// Maximum residuals of the Madelung pair on the common mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MadelungResidual {
    /// `∂S/∂t + (∂S/∂x)²/2m + V + Q`
    pub phase: f64,
    /// `∂ρ/∂t + ∂(ρ ∂S/∂x / m)/∂x`
    pub continuity: f64,
}

/// Residuals at the middle snapshot of three taken `dt` apart, with central
/// differences in `t` and `x`.
pub fn madelung_residual(
    fields: [&MadelungFields; 3],
    dt: f64,
    pot: &PotentialSpec,
) -> Result<MadelungResidual> {
    madelung_residual_with(fields, dt, pot, true)
}

/// As [`madelung_residual`]; `include_quantum = false` drops `Q` from the
/// phase equation, leaving the classical Hamilton-Jacobi operator.
#[allow(clippy::needless_range_loop)]
pub fn madelung_residual_with(
    fields: [&MadelungFields; 3],
    dt: f64,
    pot: &PotentialSpec,
    include_quantum: bool,
) -> Result<MadelungResidual> {
    check_positive("dt", dt)?;
    let [prev, cur, next] = fields;
    if prev.grid != cur.grid || next.grid != cur.grid {
        return Err(Error::IncompatibleGrids);
    }
    let hbar = cur.hbar;
    let m = pot.mass();
    let dx = cur.grid.dx();
    let q = quantum_potential(&cur.rho, &cur.grid, hbar, m);
    let n = cur.rho.len();
    let (mut phase, mut continuity) = (0.0f64, 0.0f64);
    let mut any = false;
    for i in 1..n.saturating_sub(1) {
        if !(cur.mask[i - 1] && cur.mask[i] && cur.mask[i + 1] && prev.mask[i] && next.mask[i]) {
            continue;
        }
        let Some(qi) = q[i] else { continue };
        any = true;
        let s_t = hbar * wrap_angle((next.s[i] - prev.s[i]) / hbar) / (2.0 * dt);
        let s_x = (cur.s[i + 1] - cur.s[i - 1]) / (2.0 * dx);
        let s_xx = (cur.s[i + 1] - 2.0 * cur.s[i] + cur.s[i - 1]) / (dx * dx);
        let x = cur.grid.x(i);
        let mut r = s_t + s_x * s_x / (2.0 * m) + pot.value(x);
        if include_quantum {
            r += qi;
        }
        phase = phase.max(r.abs());
        let rho_t = (next.rho[i] - prev.rho[i]) / (2.0 * dt);
        let rho_x = (cur.rho[i + 1] - cur.rho[i - 1]) / (2.0 * dx);
        let c = rho_t + (rho_x * s_x + cur.rho[i] * s_xx) / m;
        continuity = continuity.max(c.abs());
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    Ok(MadelungResidual { phase, continuity })
}

/// Closed-form coherent state at `t` on `grid`:
/// `ρ = (2πσ_ħ²)^(−1/2) exp(−(x−ξ)²/2σ_ħ²)` and
/// `S = m ξ̇ x + g(t) − ħωt/2`, with `ξ`, `g` from the deterministic action.
/// The mask uses the default relative threshold.
pub fn analytic_coherent_state(
    params: CoherentStateParams,
    t: f64,
    grid: Grid1D,
) -> Result<MadelungFields> {
    let pot = params.potential()?;
    let parts = classical::deterministic_parts(t, ClassicalState::new(params.x0, params.v0), &pot)?;
    let sigma = params.sigma();
    let norm = (2.0 * PI * sigma * sigma).powf(-0.5);
    let rho: Vec<f64> = grid
        .points()
        .map(|x| norm * (-(x - parts.xi) * (x - parts.xi) / (2.0 * sigma * sigma)).exp())
        .collect();
    let zero_point = zero_point_phase(&pot, params.hbar, t);
    let s = grid
        .points()
        .map(|x| parts.action(x, &pot) + zero_point)
        .collect();
    let eps = DEFAULT_EPS_RHO * norm;
    let mask = rho.iter().map(|&r| r >= eps).collect();
    Ok(MadelungFields {
        grid,
        rho,
        s,
        mask,
        hbar: params.hbar,
        mass: params.mass,
        time: t,
    })
}

/// `−ħωt/2` for the oscillator, 0 otherwise.
pub fn zero_point_phase(pot: &PotentialSpec, hbar: f64, t: f64) -> f64 {
    match pot.kind() {
        PotentialKind::Harmonic { omega } => -0.5 * hbar * omega * t,
        _ => 0.0,
    }
}

/// `(∫(a − b)² dx)^(1/2)` by the trapezoid rule.
pub fn l2_distance(a: &[f64], b: &[f64], grid: &Grid1D) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).collect();
    trapezoid(&d, grid.dx()).sqrt()
}

/// `∫|a − b| dx` by the trapezoid rule.
pub fn l1_distance(a: &[f64], b: &[f64], grid: &Grid1D) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    trapezoid(&d, grid.dx())
}

/// Compare two actions on `region` up to a global constant and multiples of
/// `2πħ`. Returns `(sup |a − b − c|, c)` with `c` the `weights`-weighted mean
/// offset, reduced into `(−πħ, πħ]`.
///
/// Within a connected run of `region` the difference is used as is; separate
/// runs are shifted by multiples of `2πħ` onto the first one.
pub fn action_difference(
    a: &[f64],
    b: &[f64],
    weights: &[f64],
    region: &[bool],
    hbar: f64,
) -> Result<(f64, f64)> {
    let runs = mask_runs(region);
    let first = runs.first().ok_or(Error::EmptyMask)?.0;
    let period = 2.0 * PI * hbar;
    let reference = a[first] - b[first];
    let mut d = Vec::new();
    for (lo, hi) in runs {
        let shift = period * ((a[lo] - b[lo] - reference) / period).round();
        d.extend((lo..hi).map(|i| (i, a[i] - b[i] - shift)));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(i, v) in &d {
        num += weights[i] * v;
        den += weights[i];
    }
    if !(den > 0.0) {
        return Err(Error::EmptyMask);
    }
    let c = num / den;
    let err = d.iter().map(|&(_, v)| (v - c).abs()).fold(0.0, f64::max);
    Ok((err, hbar * wrap_angle(c / hbar)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Grid1D {
        Grid1D::new(lo, hi, n).unwrap()
    }

    fn gaussian_q(x: f64, mean: f64, var: f64, hbar: f64, m: f64) -> f64 {
        hbar * hbar / (4.0 * m * var) * (1.0 - (x - mean) * (x - mean) / (2.0 * var))
    }

    #[test]
    fn gaussian_packet_moments() {
        let g = grid(-12.0, 12.0, 2048);
        let wf = init_gaussian_packet(g, 0.5, 1.5, 1.0, 1.0, 1.0).unwrap();
        assert!((wf.norm() - 1.0).abs() < 1e-9);
        let f = madelung_decompose(&wf, default_eps_rho(&wf)).unwrap();
        assert!((f.mean() - 0.5).abs() < 1e-8);
        assert!((f.variance() - 1.0).abs() < 1e-6);
        let (err, _) = action_difference(
            &f.s,
            &g.points().map(|x| 1.5 * x).collect::<Vec<_>>(),
            &f.rho,
            &f.mask,
            1.0,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn packet_needs_room() {
        let g = grid(-3.0, 3.0, 256);
        assert!(matches!(
            init_gaussian_packet(g, 0.0, 0.0, 1.0, 1.0, 1.0),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn coherent_width() {
        let p = CoherentStateParams::new(0.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        assert!((p.sigma() - 0.5).abs() < 1e-15);
        let q = p.with_hbar(0.25).unwrap();
        assert!((q.sigma() - 0.25).abs() < 1e-15);
        let wf = init_coherent_state(grid(-8.0, 8.0, 2048), p).unwrap();
        let f = madelung_decompose(&wf, default_eps_rho(&wf)).unwrap();
        assert!((f.variance() - 0.25).abs() < 1e-8);
    }

    #[test]
    fn coherent_state_needs_room_for_orbit() {
        let p = CoherentStateParams::new(5.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert!(init_coherent_state(grid(-8.0, 8.0, 512), p).is_err());
    }

    #[test]
    fn zero_steps_is_identity() {
        let g = grid(-10.0, 10.0, 256);
        let wf = init_gaussian_packet(g, 0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let pot = PotentialSpec::harmonic(1.0, 1.0).unwrap();
        assert_eq!(split_step_evolve(&wf, &pot, 0.1, 0).unwrap(), wf);
    }

    #[test]
    fn free_gaussian_spreads() {
        let g = grid(-20.0, 20.0, 1024);
        let wf = init_gaussian_packet(g, 0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let pot = PotentialSpec::free(1.0).unwrap();
        let out = split_step_evolve(&wf, &pot, 0.01, 100).unwrap();
        let f = madelung_decompose(&out, default_eps_rho(&out)).unwrap();
        assert!((f.variance() - 1.25).abs() < 1e-4, "{}", f.variance());
    }

    #[test]
    fn coherent_state_returns_after_a_period() {
        let p = CoherentStateParams::new(1.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let pot = p.potential().unwrap();
        let g = grid(-10.0, 10.0, 2048);
        let wf = init_coherent_state(g, p).unwrap();
        let period = 2.0 * PI;
        let out = split_step_evolve(&wf, &pot, period / 4096.0, 4096).unwrap();
        let d = l2_distance(&wf.density(), &out.density(), &g);
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn norm_is_conserved() {
        let p = CoherentStateParams::new(1.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        let g = grid(-10.0, 10.0, 512);
        let wf = init_coherent_state(g, p).unwrap();
        let out = split_step_evolve(&wf, &p.potential().unwrap(), 1e-3, 10_000).unwrap();
        assert!((out.norm() - wf.norm()).abs() < 1e-9);
    }

    #[test]
    fn coarse_grid_trips_spectral_check() {
        let g = grid(-10.0, 10.0, 64);
        let wf = init_gaussian_packet(g, 0.0, 8.0, 1.0, 1.0, 1.0).unwrap();
        let pot = PotentialSpec::free(1.0).unwrap();
        assert!(matches!(
            split_step_evolve(&wf, &pot, 0.01, 1),
            Err(Error::SpectralTail { .. })
        ));
    }

    #[test]
    fn plane_wave_phase_is_linear() {
        let g = grid(0.0, 10.0, 1001);
        let l: f64 = 10.0;
        let psi: Vec<Complex64> = g
            .points()
            .map(|x| Complex64::from_polar(l.powf(-0.5), 3.0 * x / 0.5))
            .collect();
        let wf = WaveFunction::new(g, psi, 0.5, 1.0).unwrap();
        let f = madelung_decompose(&wf, 1e-3).unwrap();
        let c = f.s[0] - 3.0 * g.x(0);
        for (i, x) in g.points().enumerate() {
            assert!((f.s[i] - 3.0 * x - c).abs() < 1e-10);
        }
    }

    #[test]
    fn real_positive_wave_has_zero_phase() {
        let g = grid(-10.0, 10.0, 512);
        let wf = init_gaussian_packet(g, 0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let f = madelung_decompose(&wf, default_eps_rho(&wf)).unwrap();
        assert!(f.s.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn decompose_reconstructs() {
        let g = grid(-10.0, 10.0, 512);
        let wf = init_gaussian_packet(g, 1.0, 2.0, 1.0, 0.3, 1.0).unwrap();
        let f = madelung_decompose(&wf, default_eps_rho(&wf)).unwrap();
        for (i, z) in f.reconstruct().iter().enumerate() {
            if f.mask[i] {
                assert!((z - wf.psi()[i]).norm() <= 1e-10 * wf.psi()[i].norm());
                assert_eq!(f.rho[i], wf.psi()[i].norm_sqr());
            }
        }
    }

    #[test]
    fn masked_gaps_split_components() {
        let g = grid(-10.0, 10.0, 401);
        let a = init_gaussian_packet(g, -5.0, 0.0, 0.5, 1.0, 1.0).unwrap();
        let b = init_gaussian_packet(g, 5.0, 1.0, 0.5, 1.0, 1.0).unwrap();
        let psi: Vec<Complex64> = a.psi().iter().zip(b.psi()).map(|(x, y)| x + y).collect();
        let wf = WaveFunction::normalized(g, psi, 1.0, 1.0).unwrap();
        let f = madelung_decompose(&wf, default_eps_rho(&wf)).unwrap();
        assert_eq!(f.components().len(), 2);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let g = grid(-10.0, 10.0, 256);
        let wf = init_gaussian_packet(g, 0.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(madelung_decompose(&wf, 10.0), Err(Error::EmptyMask));
    }

    #[test]
    fn quantum_potential_of_gaussian() {
        let g = grid(-10.0, 10.0, 4096);
        let wf = init_gaussian_packet(g, 0.3, 0.0, 1.0, 1.0, 1.0).unwrap();
        let f = madelung_decompose(&wf, default_eps_rho(&wf)).unwrap();
        let q = quantum_potential(&f.rho, &g, 1.0, 1.0);
        let mut worst = 0.0f64;
        for (i, x) in g.points().enumerate() {
            if let (true, Some(v)) = (f.mask[i], q[i]) {
                worst = worst.max((v - gaussian_q(x, 0.3, 1.0, 1.0, 1.0)).abs());
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn quantum_potential_uniform_and_scaling() {
        let g = grid(0.0, 1.0, 101);
        let q = quantum_potential(&vec![1.0; 101], &g, 1.0, 1.0);
        assert!(q.iter().flatten().all(|&v| v == 0.0));
        let rho: Vec<f64> = g
            .points()
            .map(|x| (-(x - 0.5) * (x - 0.5) * 20.0).exp())
            .collect();
        let a = quantum_potential(&rho, &g, 1.0, 2.0);
        let b = quantum_potential(&rho, &g, 0.5, 2.0);
        for (x, y) in a.iter().zip(&b) {
            if let (Some(x), Some(y)) = (x, y) {
                assert!((y / x - 0.25).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn plane_wave_residuals_vanish() {
        let g = grid(0.0, 10.0, 1001);
        let pot = PotentialSpec::free(1.0).unwrap();
        let (p, hbar, dt) = (1.3, 0.7, 1e-3);
        let make = |t: f64| {
            let psi: Vec<Complex64> = g
                .points()
                .map(|x| Complex64::from_polar(0.1f64.sqrt(), (p * x - p * p * t / 2.0) / hbar))
                .collect();
            let wf = WaveFunction::new(g, psi, hbar, 1.0).unwrap();
            madelung_decompose(&wf, 1e-3).unwrap()
        };
        let (a, b, c) = (make(0.5 - dt), make(0.5), make(0.5 + dt));
        let r = madelung_residual([&a, &b, &c], dt, &pot).unwrap();
        assert!(r.phase < 1e-8 && r.continuity < 1e-8, "{r:?}");
    }

    fn coherent_residuals(n: usize, dt: f64, quantum: bool) -> MadelungResidual {
        let p = CoherentStateParams::new(1.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let pot = p.potential().unwrap();
        let g = grid(-8.0, 8.0, n);
        let wf = init_coherent_state(g, p).unwrap();
        let steps = (1.0 / dt).round() as usize;
        let snaps = split_step_snapshots(&wf, &pot, dt, steps + 1, 1).unwrap();
        let f: Vec<MadelungFields> = snaps[steps - 1..=steps + 1]
            .iter()
            .map(|w| madelung_decompose(w, default_eps_rho(w)).unwrap())
            .collect();
        madelung_residual_with([&f[0], &f[1], &f[2]], dt, &pot, quantum).unwrap()
    }

    #[test]
    fn coherent_state_residuals() {
        let r = coherent_residuals(2048, 1e-4, true);
        assert!(r.phase <= 1e-3 && r.continuity <= 1e-3, "{r:?}");
        let bare = coherent_residuals(2048, 1e-4, false);
        assert!(bare.phase >= 10.0 * r.phase.max(1e-3), "{bare:?}");
    }

    #[test]
    fn residuals_are_second_order() {
        let coarse = coherent_residuals(1025, 2e-4, true);
        let fine = coherent_residuals(2049, 1e-4, true);
        let rp = coarse.phase / fine.phase;
        let rc = coarse.continuity / fine.continuity;
        assert!((3.5..=4.5).contains(&rp), "{rp}");
        assert!((3.5..=4.5).contains(&rc), "{rc}");
    }

    #[test]
    fn analytic_state_at_zero() {
        let p = CoherentStateParams::new(1.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        let g = grid(-8.0, 8.0, 1024);
        let a = analytic_coherent_state(p, 0.0, g).unwrap();
        let wf = init_coherent_state(g, p).unwrap();
        assert!(l2_distance(&a.rho, &wf.density(), &g) < 1e-12);
        for (i, x) in g.points().enumerate() {
            assert!((a.s[i] - 0.5 * x).abs() < 1e-14);
        }
        let at = analytic_coherent_state(p, 0.9, g).unwrap();
        let xi = 0.9f64.cos() + 0.5 * 0.9f64.sin();
        assert!((at.mean() - xi).abs() < 1e-10);
    }

    #[test]
    fn split_step_matches_analytic_coherent_state() {
        let p = CoherentStateParams::new(1.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        let pot = p.potential().unwrap();
        let g = grid(-10.0, 10.0, 2048);
        let t = 1.2;
        let steps = 6000;
        let wf = split_step_evolve(
            &init_coherent_state(g, p).unwrap(),
            &pot,
            t / steps as f64,
            steps,
        )
        .unwrap();
        let num = madelung_decompose(&wf, default_eps_rho(&wf)).unwrap();
        let exact = analytic_coherent_state(p, t, g).unwrap();
        assert!(l2_distance(&num.rho, &exact.rho, &g) < 1e-6);
        let region: Vec<bool> = num
            .mask
            .iter()
            .zip(&exact.mask)
            .map(|(a, b)| *a && *b)
            .collect();
        let (err, offset) = action_difference(&num.s, &exact.s, &exact.rho, &region, 1.0).unwrap();
        assert!(err < 1e-4, "{err}");
        let parts = classical::deterministic_parts(t, ClassicalState::new(1.0, 0.5), &pot).unwrap();
        let raw: Vec<f64> = g.points().map(|x| parts.action(x, &pot)).collect();
        let (_, raw_offset) = action_difference(&num.s, &raw, &exact.rho, &region, 1.0).unwrap();
        assert!(offset.abs() < 1e-4, "{offset}");
        assert!(
            (wrap_angle(raw_offset + 0.5 * t) * 1.0).abs() < 1e-4,
            "{raw_offset}"
        );
    }
}
