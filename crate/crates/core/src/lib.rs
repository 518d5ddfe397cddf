//! One-dimensional numerics for the three classical actions and their
//! semiclassical quantum counterparts.
//!
//! * [`minplus`] – the `(ℝ ∪ {+∞}, min, +)` semiring on sampled functions:
//!   scalar product, `δ_min`, inf-convolution, Legendre-Fenchel transform.
//! * [`classical`] – RK4 trajectories, the Euler-Lagrange action (closed form
//!   and by shooting), and the deterministic action attached to one trajectory.
//! * [`hj`] – Hamilton-Jacobi action by the Hopf-Lax formula, velocity field,
//!   residual checks and density transport along characteristics.
//! * [`quantum`] – split-step Schrödinger solver, Madelung decomposition,
//!   quantum potential and coherent states.
//! * [`convergence`] – ħ → 0 sweeps and de Broglie-Bohm ensembles.
//! * [`cli`] – configuration parsing and the batch runner behind the binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod cli;
pub mod convergence;
mod error;
pub mod hj;
pub mod minplus;
mod numeric;
pub mod quantum;

pub use error::{Error, Result};
pub use minplus::{Grid1D, MinplusValue, SampledFunction};
