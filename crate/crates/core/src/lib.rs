//! Euler discretization of the Pontryagin system for control-affine optimal
//! control problems, with numerical checks of the regularity hypotheses that
//! make the discretization converge at first order.
//!
//! The problem class is
//!
//! ```text
//! minimize  ∫₀ᵀ w(t,x) + ⟨s(t,x), u⟩ dt
//! subject to ẋ = a(t,x) + B(t,x) u,  x(0) = x⁰,  u(t) ∈ U (a convex polytope)
//! ```
//!
//! Modules, bottom up:
//!
//! - [`model`]: the problem interface, control polytopes, Hamiltonian, switching
//!   function, the closed-form Example 1 and the named catalog.
//! - [`integrate`]: grids, grid functions and their norms, the Euler state and
//!   adjoint recursions, and an RK4 reference integrator.
//! - [`pmp`]: residuals of the continuous optimality system and switching
//!   structure analysis.
//! - [`variation`]: linearization along a reference extremal, the second
//!   variation, the Λ map, the duality identity and the coercivity probe.
//! - [`euler`]: the forward-backward sweep for the discrete minimum principle,
//!   the continuous embedding, residuals and convergence studies.
//! - [`perturb`]: families of nearby problems and the uniform-constant study.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is deliberate: NaN has to fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod math;

pub mod euler;
pub mod integrate;
pub mod model;
pub mod perturb;
pub mod pmp;
pub mod solution;
pub mod variation;

pub use error::{Error, Result};
pub use integrate::{Grid, GridFunction, Interpolation, NormKind};
pub use model::{ControlAffineProblem, ExtremalTriple, Polytope, ProblemExt};
pub use solution::ContinuousTriple;
