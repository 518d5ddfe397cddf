//! Small quadrature, interpolation and sampling helpers shared by the solvers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Composite Simpson rule on an odd number of equally spaced samples.
pub(crate) fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    debug_assert!(
        n >= 3 && n % 2 == 1,
        "simpson needs an even number of intervals"
    );
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, &v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (values[0] + 4.0 * odd + 2.0 * even + values[n - 1])
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Linear interpolation of samples on a uniform grid starting at `x0`.
/// Points outside the sampled range take the boundary value.
pub(crate) fn interp_uniform(values: &[f64], x0: f64, h: f64, x: f64) -> f64 {
    let n = values.len();
    let r = (x - x0) / h;
    if r <= 0.0 {
        return values[0];
    }
    if r >= (n - 1) as f64 {
        return values[n - 1];
    }
    let i = r.floor() as usize;
    let w = r - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Inverse-CDF sampler for a nonnegative density on a uniform grid, using the
/// piecewise-linear trapezoid CDF.
pub(crate) struct InverseCdf {
    x0: f64,
    h: f64,
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub(crate) fn new(density: &[f64], x0: f64, h: f64) -> Option<Self> {
        let mut cdf = Vec::with_capacity(density.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in density.windows(2) {
            acc += 0.5 * h * (w[0].max(0.0) + w[1].max(0.0));
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return None;
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Some(Self { x0, h, cdf })
    }

    pub(crate) fn sample(&self, u: f64) -> f64 {
        // first index with cdf >= u
        let k = self
            .cdf
            .partition_point(|&c| c < u)
            .clamp(1, self.cdf.len() - 1);
        let (lo, hi) = (self.cdf[k - 1], self.cdf[k]);
        let w = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
        self.x0 + (k as f64 - 1.0 + w) * self.h
    }
}

/// Independent uniform draw for particle `index` under `seed`; the stream
/// depends only on the pair, so serial and parallel sampling agree.
pub(crate) fn particle_uniform(seed: u64, index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.random::<f64>()
}

/// Wrap an angle into `(−π, π]`.
pub(crate) fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
