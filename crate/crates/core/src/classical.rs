//! Classical trajectories and the three actions attached to them.
//!
//! The Lagrangian is `L = ½ m ẋ² − V(x)`. For the linear kind the potential
//! is `V(x) = −K·x`, so that `L = ½ m ẋ² + K·x`.

use std::f64::consts::PI;

use crate::numeric::simpson;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    Free,
    /// Constant force `K`.
    Linear {
        force: f64,
    },
    /// `V = ½ m ω² x²`.
    Harmonic {
        omega: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    kind: PotentialKind,
    mass: f64,
}

impl PotentialSpec {
    pub fn new(kind: PotentialKind, mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mass {mass} must be positive"
            )));
        }
        match kind {
            PotentialKind::Harmonic { omega } if !(omega > 0.0 && omega.is_finite()) => {
                return Err(Error::InvalidArgument(format!(
                    "omega {omega} must be positive"
                )))
            }
            PotentialKind::Linear { force } if !force.is_finite() => {
                return Err(Error::InvalidArgument(format!(
                    "force {force} must be finite"
                )))
            }
            _ => {}
        }
        Ok(Self { kind, mass })
    }

    pub fn free(mass: f64) -> Result<Self> {
        Self::new(PotentialKind::Free, mass)
    }

    pub fn linear(mass: f64, force: f64) -> Result<Self> {
        Self::new(PotentialKind::Linear { force }, mass)
    }

    pub fn harmonic(mass: f64, omega: f64) -> Result<Self> {
        Self::new(PotentialKind::Harmonic { omega }, mass)
    }

    #[inline]
    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    #[inline]
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `V(x)`.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Linear { force } => -force * x,
            PotentialKind::Harmonic { omega } => 0.5 * self.mass * omega * omega * x * x,
        }
    }

    /// `V′(x)`.
    #[inline]
    pub fn gradient(&self, x: f64) -> f64 {
        match self.kind {
            PotentialKind::Free => 0.0,
            PotentialKind::Linear { force } => -force,
            PotentialKind::Harmonic { omega } => self.mass * omega * omega * x,
        }
    }

    /// `V″(x)`.
    #[inline]
    pub fn curvature(&self, _x: f64) -> f64 {
        match self.kind {
            PotentialKind::Free | PotentialKind::Linear { .. } => 0.0,
            PotentialKind::Harmonic { omega } => self.mass * omega * omega,
        }
    }

    /// `ẍ = −V′(x)/m`.
    #[inline]
    pub fn acceleration(&self, x: f64) -> f64 {
        -self.gradient(x) / self.mass
    }

    /// Oscillation period for the harmonic kind, 1 otherwise.
    pub fn characteristic_time(&self) -> f64 {
        match self.kind {
            PotentialKind::Harmonic { omega } => 2.0 * PI / omega,
            _ => 1.0,
        }
    }

    /// Default RK4 step, `1e-3` of the characteristic time.
    pub fn default_dt(&self) -> f64 {
        1e-3 * self.characteristic_time()
    }

    pub fn energy(&self, x: f64, v: f64) -> f64 {
        0.5 * self.mass * v * v + self.value(x)
    }

    /// Errors when `t` sits on a focal point `ωt ∈ πℤ₊` of the oscillator.
    pub fn check_caustic(&self, t: f64) -> Result<()> {
        if let PotentialKind::Harmonic { omega } = self.kind {
            let r = omega * t / PI;
            if r.round() >= 1.0 && (r - r.round()).abs() < 1e-9 {
                return Err(Error::Caustic { times: vec![t] });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    pub x0: f64,
    pub v0: f64,
}

impl ClassicalState {
    pub fn new(x0: f64, v0: f64) -> Self {
        Self { x0, v0 }
    }
}

/// Uniformly time-sampled solution `ξ(t_k), ξ̇(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi_dot: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn energies(&self, pot: &PotentialSpec) -> Vec<f64> {
        self.xi
            .iter()
            .zip(&self.xi_dot)
            .map(|(&x, &v)| pot.energy(x, v))
            .collect()
    }

    /// `max_k |E(t_k) − E(0)| / max(|E(0)|, 1)`.
    pub fn energy_drift(&self, pot: &PotentialSpec) -> f64 {
        let e = self.energies(pot);
        let scale = e[0].abs().max(1.0);
        e.iter()
            .map(|ek| (ek - e[0]).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> (f64, f64) {
        let k = self.len() - 1;
        (self.xi[k], self.xi_dot[k])
    }
}

#[inline]
fn rk4_step(pot: &PotentialSpec, x: f64, v: f64, h: f64) -> (f64, f64) {
    let a = |x: f64| pot.acceleration(x);
    let (k1x, k1v) = (v, a(x));
    let (k2x, k2v) = (v + 0.5 * h * k1v, a(x + 0.5 * h * k1x));
    let (k3x, k3v) = (v + 0.5 * h * k2v, a(x + 0.5 * h * k2x));
    let (k4x, k4v) = (v + h * k3v, a(x + h * k3x));
    (
        x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// RK4 on `(x, v)` over `steps` equal steps of size `h`, returning every sample.
pub(crate) fn integrate(
    pot: &PotentialSpec,
    x0: f64,
    v0: f64,
    h: f64,
    steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(steps + 1);
    let mut vs = Vec::with_capacity(steps + 1);
    let (mut x, mut v) = (x0, v0);
    xs.push(x);
    vs.push(v);
    for _ in 0..steps {
        (x, v) = rk4_step(pot, x, v, h);
        xs.push(x);
        vs.push(v);
    }
    (xs, vs)
}

/// RK4 for the state together with its sensitivity `∂(x, v)/∂v0`.
fn integrate_with_sensitivity(
    pot: &PotentialSpec,
    x0: f64,
    v0: f64,
    h: f64,
    steps: usize,
) -> (f64, f64) {
    let f = |y: [f64; 4]| -> [f64; 4] {
        let m = pot.mass();
        [
            y[1],
            pot.acceleration(y[0]),
            y[3],
            -pot.curvature(y[0]) / m * y[2],
        ]
    };
    let mut y = [x0, v0, 0.0, 1.0];
    let axpy = |y: [f64; 4], k: [f64; 4], s: f64| -> [f64; 4] {
        [
            y[0] + s * k[0],
            y[1] + s * k[1],
            y[2] + s * k[2],
            y[3] + s * k[3],
        ]
    };
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(axpy(y, k1, 0.5 * h));
        let k3 = f(axpy(y, k2, 0.5 * h));
        let k4 = f(axpy(y, k3, h));
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    (y[0], y[2])
}

/// Even step count with step at most `max_dt`, never fewer than `min_steps`.
fn even_steps(t: f64, max_dt: f64, min_steps: usize) -> usize {
    let n = ((t / max_dt).ceil() as usize).max(min_steps).max(2);
    n + n % 2
}

/// RK4 solution of `m ẍ = −V′(x)` sampled at `t_k = k·dt`, `k = 0..=t_end/dt`.
pub fn solve_trajectory(
    state: ClassicalState,
    pot: &PotentialSpec,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} must be positive"
        )));
    }
    if !(t_end >= dt) {
        return Err(Error::InvalidArgument(format!(
            "t_end = {t_end} must be at least dt = {dt}"
        )));
    }
    let ratio = t_end / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "t_end = {t_end} is not an integer multiple of dt = {dt}"
        )));
    }
    let steps = steps as usize;
    let (xi, xi_dot) = integrate(pot, state.x0, state.v0, dt, steps);
    let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    times[steps] = t_end;
    Ok(Trajectory { times, xi, xi_dot })
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    Ok(())
}

/// Euler-Lagrange action `S_cl(x, t; x0)` in closed form.
///
/// Free and linear: `m(x − x0)²/2t + K(x + x0)t/2 − K²t³/24m`.
/// Harmonic: `(mω / 2 sin ωt)·[(x² + x0²) cos ωt − 2 x x0]`.
pub fn action_closed_form(x: f64, t: f64, x0: f64, pot: &PotentialSpec) -> Result<f64> {
    check_time(t)?;
    pot.check_caustic(t)?;
    Ok(closed_form_unchecked(x, t, x0, pot))
}

/// [`action_closed_form`] without the time and caustic checks.
#[inline]
pub(crate) fn closed_form_unchecked(x: f64, t: f64, x0: f64, pot: &PotentialSpec) -> f64 {
    let m = pot.mass();
    match pot.kind() {
        PotentialKind::Free => m * (x - x0) * (x - x0) / (2.0 * t),
        PotentialKind::Linear { force: k } => {
            m * (x - x0) * (x - x0) / (2.0 * t) + k * (x + x0) * t / 2.0
                - k * k * t * t * t / (24.0 * m)
        }
        PotentialKind::Harmonic { omega } => {
            let (s, c) = (omega * t).sin_cos();
            m * omega / (2.0 * s) * ((x * x + x0 * x0) * c - 2.0 * x * x0)
        }
    }
}

const SHOOTING_MAX_ITER: usize = 50;

/// Newton shooting on the initial velocity; returns `(v0, step count)`.
fn shoot(x: f64, t: f64, x0: f64, pot: &PotentialSpec) -> Result<(f64, usize)> {
    check_time(t)?;
    pot.check_caustic(t)?;
    let steps = even_steps(t, 0.25 * pot.default_dt(), 2000);
    let h = t / steps as f64;
    let tol = 1e-12 * x.abs().max(x0.abs()).max(1.0);
    let mut v = (x - x0) / t;
    let mut residual = f64::INFINITY;
    for _ in 0..SHOOTING_MAX_ITER {
        let (xt, dxdv) = integrate_with_sensitivity(pot, x0, v, h, steps);
        residual = xt - x;
        if residual.abs() <= tol {
            return Ok((v, steps));
        }
        if dxdv == 0.0 || !dxdv.is_finite() {
            break;
        }
        v -= residual / dxdv;
    }
    Err(Error::NoConvergence {
        iterations: SHOOTING_MAX_ITER,
        residual,
    })
}

/// Euler-Lagrange action by solving the two-point boundary value problem
/// (shooting) and integrating `L` along the solved path with Simpson's rule.
pub fn action_numeric(x: f64, t: f64, x0: f64, pot: &PotentialSpec) -> Result<f64> {
    let (v0, steps) = shoot(x, t, x0, pot)?;
    let h = t / steps as f64;
    let (xs, vs) = integrate(pot, x0, v0, h, steps);
    let m = pot.mass();
    let lagrangian: Vec<f64> = xs
        .iter()
        .zip(&vs)
        .map(|(&x, &v)| 0.5 * m * v * v - pot.value(x))
        .collect();
    Ok(simpson(&lagrangian, h))
}

/// `v0 = −(1/m) ∂S_cl/∂x0`: closed form for free and linear, shooting for
/// the oscillator.
pub fn initial_velocity_from_endpoints(
    x: f64,
    t: f64,
    x0: f64,
    pot: &PotentialSpec,
) -> Result<f64> {
    check_time(t)?;
    pot.check_caustic(t)?;
    let m = pot.mass();
    match pot.kind() {
        PotentialKind::Free => Ok((x - x0) / t),
        PotentialKind::Linear { force: k } => Ok((x - x0) / t - k * t / (2.0 * m)),
        PotentialKind::Harmonic { .. } => shoot(x, t, x0, pot).map(|(v, _)| v),
    }
}

/// `ξ(t)`, `ξ̇(t)` and `g(t)` of the deterministic action `m ξ̇(t)·x + g(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicParts {
    pub xi: f64,
    pub xi_dot: f64,
    pub g: f64,
}

impl DeterministicParts {
    pub fn action(&self, x: f64, pot: &PotentialSpec) -> f64 {
        pot.mass() * self.xi_dot * x + self.g
    }
}

/// Integrand of `g`: `½ m ξ̇² + V(ξ) + m ξ̈ ξ` with `m ξ̈ = −V′(ξ)`.
#[inline]
fn g_integrand(pot: &PotentialSpec, x: f64, v: f64) -> f64 {
    0.5 * pot.mass() * v * v + pot.value(x) - pot.gradient(x) * x
}

fn deterministic_steps(t: f64, pot: &PotentialSpec) -> usize {
    even_steps(t, 0.1 * pot.default_dt(), 2)
}

pub fn deterministic_parts(
    t: f64,
    state: ClassicalState,
    pot: &PotentialSpec,
) -> Result<DeterministicParts> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "t = {t} must be nonnegative"
        )));
    }
    if t == 0.0 {
        return Ok(DeterministicParts {
            xi: state.x0,
            xi_dot: state.v0,
            g: 0.0,
        });
    }
    let steps = deterministic_steps(t, pot);
    let h = t / steps as f64;
    let (xs, vs) = integrate(pot, state.x0, state.v0, h, steps);
    let integrand: Vec<f64> = xs
        .iter()
        .zip(&vs)
        .map(|(&x, &v)| g_integrand(pot, x, v))
        .collect();
    Ok(DeterministicParts {
        xi: xs[steps],
        xi_dot: vs[steps],
        g: -simpson(&integrand, h),
    })
}

/// Deterministic action `S(x, t; x0, v0) = m ξ̇(t)·x + g(t)` with
/// `g(t) = −∫₀ᵗ [½ m ξ̇² + V(ξ) + m ξ̈·ξ] ds`.
pub fn deterministic_action(
    x: f64,
    t: f64,
    state: ClassicalState,
    pot: &PotentialSpec,
) -> Result<f64> {
    Ok(deterministic_parts(t, state, pot)?.action(x, pot))
}

/// `∫₀ᵗ (−½ m ξ̇² + V(ξ)) ds`. For the oscillator `V′(ξ)·ξ = 2V(ξ)`, so this
/// coincides with `g(t)`; for other potentials it does not.
pub fn lagrangian_phase_integral(
    t: f64,
    state: ClassicalState,
    pot: &PotentialSpec,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    check_time(t)?;
    let steps = deterministic_steps(t, pot);
    let h = t / steps as f64;
    let (xs, vs) = integrate(pot, state.x0, state.v0, h, steps);
    let integrand: Vec<f64> = xs
        .iter()
        .zip(&vs)
        .map(|(&x, &v)| -0.5 * pot.mass() * v * v + pot.value(x))
        .collect();
    Ok(simpson(&integrand, h))
}

/// `|∂S/∂t + (∇S)²/2m + V|` of the deterministic action at `x = ξ(t)`.
///
/// `∂S/∂t` is a central difference with half-width `fd_step`; `∇S = m ξ̇(t)`.
pub fn deterministic_hj_residual(
    state: ClassicalState,
    pot: &PotentialSpec,
    t: f64,
    fd_step: f64,
) -> Result<f64> {
    Ok(residual_probe(state, pot, t, fd_step)?.residual_on_trajectory)
}

/// As [`deterministic_hj_residual`] but evaluated at an arbitrary `x`. Off the
/// trajectory the equation generally does not hold.
pub fn deterministic_hj_residual_at(
    x: f64,
    state: ClassicalState,
    pot: &PotentialSpec,
    t: f64,
    fd_step: f64,
) -> Result<f64> {
    let probe = residual_probe(state, pot, t, fd_step)?;
    Ok(probe.residual(x, pot))
}

struct ResidualProbe {
    xi: f64,
    grad: f64,
    /// `∂S/∂t = dt_coeff·x + dt_const`
    dt_coeff: f64,
    dt_const: f64,
    residual_on_trajectory: f64,
}

impl ResidualProbe {
    fn residual(&self, x: f64, pot: &PotentialSpec) -> f64 {
        let ds_dt = self.dt_coeff * x + self.dt_const;
        (ds_dt + self.grad * self.grad / (2.0 * pot.mass()) + pot.value(x)).abs()
    }
}

fn residual_probe(
    state: ClassicalState,
    pot: &PotentialSpec,
    t: f64,
    h: f64,
) -> Result<ResidualProbe> {
    check_time(t)?;
    if !(h > 0.0 && h < t) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {h} must lie in (0, t)"
        )));
    }
    let m = pot.mass();
    let before = deterministic_parts(t - h, state, pot)?;
    // continue through [t − h, t + h] with fine substeps so that both sides
    // of the difference share one path
    const SUB: usize = 32;
    let sub_h = 2.0 * h / SUB as f64;
    let (xs, vs) = integrate(pot, before.xi, before.xi_dot, sub_h, SUB);
    let integrand: Vec<f64> = xs
        .iter()
        .zip(&vs)
        .map(|(&x, &v)| g_integrand(pot, x, v))
        .collect();
    let g_jump = -simpson(&integrand, sub_h);
    let (xi, xi_dot) = (xs[SUB / 2], vs[SUB / 2]);
    let grad = m * xi_dot;
    debug_assert!((xi_dot - grad / m).abs() <= 1e-12 * xi_dot.abs().max(1.0));
    let probe = ResidualProbe {
        xi,
        grad,
        dt_coeff: m * (vs[SUB] - vs[0]) / (2.0 * h),
        dt_const: g_jump / (2.0 * h),
        residual_on_trajectory: 0.0,
    };
    let r = probe.residual(probe.xi, pot);
    Ok(ResidualProbe {
        residual_on_trajectory: r,
        ..probe
    })
}
