//! Min-plus (tropical) algebra on functions sampled over a uniform grid.
//!
//! The carrier is `ℝ ∪ {+∞}` with `min` playing the role of addition and `+`
//! the role of multiplication. `+∞` is the neutral element of `min` and is
//! absorbing for `+`; `−∞` and NaN never occur.
//!
//! All reductions run in ascending index order and break ties toward the
//! lower index, so results are deterministic and bit-reproducible.

use std::fmt;

use crate::{Error, Result};

/// An element of `ℝ ∪ {+∞}`.
#[derive(Clone, Copy, PartialEq, PartialOrd, Default)]
#[repr(transparent)]
pub struct MinplusValue(f64);

impl MinplusValue {
    /// Neutral element of `⊕ = min`.
    pub const INFINITY: Self = Self(f64::INFINITY);
    /// Neutral element of `⊗ = +`.
    pub const ZERO: Self = Self(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!(
                "{value} is not an element of R ∪ {{+inf}}"
            )));
        }
        Ok(Self(value))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// `min(self, other)`; on ties `self` is kept.
    #[inline]
    pub fn oplus(self, other: Self) -> Self {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    /// `self + other` with `+∞` absorbing.
    #[inline]
    pub fn otimes(self, other: Self) -> Self {
        // inf + finite = inf and inf + inf = inf in IEEE arithmetic; there is
        // no -inf operand, so no NaN can appear.
        Self(self.0 + other.0)
    }
}

impl fmt::Debug for MinplusValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("+inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl TryFrom<f64> for MinplusValue {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

/// Uniform grid `x_i = x_min + i·Δx`, `i = 0..n`, with `Δx = (x_max − x_min)/(n − 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "x_min = {x_min} must be below x_max = {x_max}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("n = {n} must be at least 2")));
        }
        Ok(Self { x_min, x_max, n })
    }

    #[inline]
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false; a grid has at least two samples.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Index of the sample nearest to `x`, possibly outside `0..n`. Ties go
    /// to the lower index.
    pub fn nearest_index_unclamped(&self, x: f64) -> i64 {
        let r = (x - self.x_min) / self.dx();
        let lower = r.floor();
        if r - lower > 0.5 {
            lower as i64 + 1
        } else {
            lower as i64
        }
    }

    /// Index of the sample nearest to `x`, or `None` when `x` is off the grid.
    pub fn nearest_index(&self, x: f64) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let k = self.nearest_index_unclamped(x).clamp(0, self.n as i64 - 1);
        Some(k as usize)
    }

    /// Same grid spacing, `factor` times as many intervals.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n: (self.n - 1) * factor.max(1) + 1,
            ..*self
        }
    }
}

/// A function sampled on a [`Grid1D`], with values in `ℝ ∪ {+∞}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Grid1D,
    values: Vec<MinplusValue>,
}

impl SampledFunction {
    pub fn new(grid: Grid1D, values: Vec<MinplusValue>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} samples",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_raw(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(MinplusValue::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_raw(grid, grid.points().map(f).collect())
    }

    /// The function that is `+∞` everywhere (the zero of the semimodule).
    pub fn infinite(grid: Grid1D) -> Self {
        Self {
            grid,
            values: vec![MinplusValue::INFINITY; grid.len()],
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[MinplusValue] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize) -> MinplusValue {
        self.values[i]
    }

    pub fn raw(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.get()).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `offset + self`, pointwise.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        let offset = MinplusValue::new(offset)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| offset.otimes(v)).collect(),
        })
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::IncompatibleGrids);
        }
        Ok(())
    }
}

/// `(f, g) = min_i f(x_i) + g(x_i)`.
pub fn minplus_dot(f: &SampledFunction, g: &SampledFunction) -> Result<MinplusValue> {
    f.check_same_grid(g)?;
    Ok(f.values
        .iter()
        .zip(&g.values)
        .fold(MinplusValue::INFINITY, |acc, (&a, &b)| {
            acc.oplus(a.otimes(b))
        }))
}

/// `δ_min(· − x0)`: zero at the sample nearest to `x0`, `+∞` elsewhere.
pub fn delta_min(grid: Grid1D, x0: f64) -> Result<SampledFunction> {
    let k = grid.nearest_index(x0).ok_or(Error::OutsideGrid {
        x: x0,
        x_min: grid.x_min(),
        x_max: grid.x_max(),
    })?;
    let mut out = SampledFunction::infinite(grid);
    out.values[k] = MinplusValue::ZERO;
    Ok(out)
}

/// Inf-convolution `h(x_i) = min_j f(x_j) + g(x_i − x_j)`.
///
/// `g` is read at the sample nearest to the displacement `x_i − x_j`;
/// displacements that fall off the grid read as `+∞`.
pub fn inf_convolution(f: &SampledFunction, g: &SampledFunction) -> Result<SampledFunction> {
    f.check_same_grid(g)?;
    let n = f.len() as i64;
    // x_i − x_j = (i − j)·Δx, whose nearest sample is (i − j) + shift.
    let shift = f.grid.nearest_index_unclamped(0.0);
    let values = (0..n)
        .map(|i| {
            let mut acc = MinplusValue::INFINITY;
            for j in 0..n {
                let k = i - j + shift;
                if k < 0 || k >= n {
                    continue;
                }
                acc = acc.oplus(f.values[j as usize].otimes(g.values[k as usize]));
            }
            acc
        })
        .collect();
    Ok(SampledFunction {
        grid: f.grid,
        values,
    })
}

/// Legendre-Fenchel transform `f*(p_k) = max_i (p_k·x_i − f(x_i))`, sampled on
/// `p_grid`. Computed as `−min_i (f(x_i) − p_k·x_i)` over the finite samples.
pub fn legendre_fenchel(f: &SampledFunction, p_grid: Grid1D) -> Result<SampledFunction> {
    let finite: Vec<(f64, f64)> = f
        .grid
        .points()
        .zip(&f.values)
        .filter(|(_, v)| v.is_finite())
        .map(|(x, v)| (x, v.get()))
        .collect();
    if finite.is_empty() {
        return Err(Error::AllInfinite);
    }
    let values = p_grid
        .points()
        .map(|p| {
            let m = finite
                .iter()
                .fold(f64::INFINITY, |acc, &(x, v)| acc.min(v - p * x));
            MinplusValue(-m)
        })
        .collect();
    Ok(SampledFunction {
        grid: p_grid,
        values,
    })
}

/// Pointwise `min_k (offset_k + S_k(x_i))`.
pub fn minplus_combination(pairs: &[(f64, &SampledFunction)]) -> Result<SampledFunction> {
    minplus_combination_with_branch(pairs).map(|(s, _)| s)
}

/// As [`minplus_combination`], also returning for each sample the index of
/// the winning term (lowest index on ties).
pub fn minplus_combination_with_branch(
    pairs: &[(f64, &SampledFunction)],
) -> Result<(SampledFunction, Vec<usize>)> {
    let (_, first) = pairs.first().ok_or(Error::EmptyCombination)?;
    for (_, s) in &pairs[1..] {
        first.check_same_grid(s)?;
    }
    let offsets = pairs
        .iter()
        .map(|(o, _)| MinplusValue::new(*o))
        .collect::<Result<Vec<_>>>()?;
    let n = first.len();
    let mut values = Vec::with_capacity(n);
    let mut branch = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = MinplusValue::INFINITY;
        let mut arg = 0;
        for (k, ((_, s), &off)) in pairs.iter().zip(&offsets).enumerate() {
            let v = off.otimes(s.values[i]);
            if v < best {
                best = v;
                arg = k;
            }
        }
        values.push(best);
        branch.push(arg);
    }
    Ok((
        SampledFunction {
            grid: first.grid,
            values,
        },
        branch,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, n: usize) -> Grid1D {
        Grid1D::new(a, b, n).unwrap()
    }

    #[test]
    fn value_rejects_nan_and_negative_infinity() {
        assert!(MinplusValue::new(f64::NAN).is_err());
        assert!(MinplusValue::new(f64::NEG_INFINITY).is_err());
        assert!(MinplusValue::new(f64::INFINITY).is_ok());
    }

    #[test]
    fn infinity_is_neutral_for_min_and_absorbing_for_plus() {
        let a = MinplusValue::new(-3.5).unwrap();
        assert_eq!(MinplusValue::INFINITY.oplus(a), a);
        assert_eq!(a.oplus(MinplusValue::INFINITY), a);
        assert_eq!(MinplusValue::INFINITY.otimes(a), MinplusValue::INFINITY);
        assert_eq!(
            MinplusValue::INFINITY.otimes(MinplusValue::INFINITY),
            MinplusValue::INFINITY
        );
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(Grid1D::new(1.0, 1.0, 10).is_err());
        assert!(Grid1D::new(0.0, 1.0, 1).is_err());
        assert!(Grid1D::new(0.0, f64::INFINITY, 4).is_err());
        let g = grid(-1.0, 1.0, 5);
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.x(4), 1.0);
    }

    #[test]
    fn dot_of_shifted_parabolas() {
        let g = grid(-5.0, 5.0, 10001);
        let f = SampledFunction::from_fn(g, |x| x * x).unwrap();
        let h = SampledFunction::from_fn(g, |x| (x - 2.0) * (x - 2.0)).unwrap();
        // brute force over the grid
        let brute = g
            .points()
            .map(|x| x * x + (x - 2.0) * (x - 2.0))
            .fold(f64::INFINITY, f64::min);
        let d = minplus_dot(&f, &h).unwrap().get();
        assert_eq!(d, brute);
        assert!((d - 2.0).abs() < 1e-3);
    }

    #[test]
    fn dot_with_delta_picks_value() {
        let g = grid(-2.0, 2.0, 41);
        let h = SampledFunction::from_fn(g, |x| x.sin() + 3.0).unwrap();
        let d = delta_min(g, 0.7).unwrap();
        let k = g.nearest_index(0.7).unwrap();
        assert_eq!(minplus_dot(&d, &h).unwrap(), h.get(k));
    }

    #[test]
    fn dot_with_infinite_function_is_infinite() {
        let g = grid(-2.0, 2.0, 41);
        let h = SampledFunction::from_fn(g, |x| x).unwrap();
        let inf = SampledFunction::infinite(g);
        assert_eq!(minplus_dot(&inf, &h).unwrap(), MinplusValue::INFINITY);
    }

    #[test]
    fn dot_rejects_mismatched_grids() {
        let a = SampledFunction::infinite(grid(0.0, 1.0, 3));
        let b = SampledFunction::infinite(grid(0.0, 1.0, 4));
        assert_eq!(minplus_dot(&a, &b), Err(Error::IncompatibleGrids));
    }

    #[test]
    fn delta_min_placement() {
        let g = grid(-1.0, 1.0, 3);
        let d = delta_min(g, 0.0).unwrap();
        assert_eq!(
            d.values(),
            &[
                MinplusValue::INFINITY,
                MinplusValue::ZERO,
                MinplusValue::INFINITY
            ]
        );
        let d = delta_min(g, -1.0).unwrap();
        assert_eq!(d.get(0), MinplusValue::ZERO);
        assert!(d.values()[1..].iter().all(|v| !v.is_finite()));
        // halfway between samples 1 and 2: the lower index wins
        let d = delta_min(g, 0.5).unwrap();
        assert_eq!(d.get(1), MinplusValue::ZERO);
        assert!(!d.get(2).is_finite());
        assert!(matches!(delta_min(g, 1.5), Err(Error::OutsideGrid { .. })));
    }

    #[test]
    fn convolution_with_delta_is_identity() {
        let g = grid(-3.0, 3.0, 61);
        let f = SampledFunction::from_fn(g, |x| (2.0 * x).cos() + 0.1 * x).unwrap();
        let d = delta_min(g, 0.0).unwrap();
        assert_eq!(inf_convolution(&f, &d).unwrap(), f);
    }

    #[test]
    fn convolution_of_half_squares() {
        let g = grid(-4.0, 4.0, 801);
        let f = SampledFunction::from_fn(g, |x| 0.5 * x * x).unwrap();
        let h = inf_convolution(&f, &f).unwrap();
        // brute-force double loop in continuous displacement, restricted to the grid
        for i in (200..=600).step_by(25) {
            let x = g.x(i);
            let brute = g
                .points()
                .filter(|y| g.contains(x - y))
                .map(|y| 0.5 * y * y + 0.5 * (x - y) * (x - y))
                .fold(f64::INFINITY, f64::min);
            assert!((h.get(i).get() - brute).abs() < 1e-9);
            assert!((h.get(i).get() - 0.25 * x * x).abs() <= g.dx());
        }
    }

    #[test]
    fn convolution_with_zero_gives_global_min() {
        let g = grid(-2.0, 2.0, 41);
        let f = SampledFunction::from_fn(g, f64::abs).unwrap();
        let zero = SampledFunction::from_fn(g, |_| 0.0).unwrap();
        let h = inf_convolution(&f, &zero).unwrap();
        assert!(h.values().iter().all(|v| v.get() == 0.0));
    }

    #[test]
    fn legendre_of_half_square_is_self_dual() {
        let g = grid(-10.0, 10.0, 4001);
        let p = grid(-3.0, 3.0, 601);
        let f = SampledFunction::from_fn(g, |x| 0.5 * x * x).unwrap();
        let fs = legendre_fenchel(&f, p).unwrap();
        let err = p
            .points()
            .zip(fs.values())
            .map(|(p, v)| (v.get() - 0.5 * p * p).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn legendre_of_abs_vanishes_inside_unit_slope() {
        let g = grid(-10.0, 10.0, 4001);
        let p = grid(-0.9, 0.9, 181);
        let f = SampledFunction::from_fn(g, f64::abs).unwrap();
        let fs = legendre_fenchel(&f, p).unwrap();
        assert!(fs.values().iter().all(|v| v.get().abs() < 5e-3));
    }

    #[test]
    fn legendre_of_constant_at_zero_slope() {
        let g = grid(-1.0, 1.0, 11);
        let p = grid(-1.0, 1.0, 3);
        let f = SampledFunction::from_fn(g, |_| 2.5).unwrap();
        assert_eq!(legendre_fenchel(&f, p).unwrap().get(1).get(), -2.5);
    }

    #[test]
    fn legendre_rejects_all_infinite() {
        let g = grid(-1.0, 1.0, 11);
        assert_eq!(
            legendre_fenchel(&SampledFunction::infinite(g), g),
            Err(Error::AllInfinite)
        );
    }

    #[test]
    fn combination_cases() {
        let g = grid(-1.0, 1.0, 21);
        let s = SampledFunction::from_fn(g, |x| x * x).unwrap();
        let s2 = SampledFunction::from_fn(g, |x| -x).unwrap();
        assert_eq!(minplus_combination(&[(0.0, &s)]).unwrap(), s);
        // sup s − inf s = 1, sup s2 − ... ; an offset of 10 keeps s2 out everywhere
        assert_eq!(minplus_combination(&[(0.0, &s), (10.0, &s2)]).unwrap(), s);
        assert_eq!(minplus_combination(&[]), Err(Error::EmptyCombination));
        let (_, branch) = minplus_combination_with_branch(&[(0.0, &s), (0.0, &s2)]).unwrap();
        // x = -1 is a tie and goes to the first term
        assert_eq!(branch[0], 0);
        assert_eq!(branch[5], 0);
        assert_eq!(branch[20], 1);
    }
}
