//! Shift-perturbation toolkit for resonant multi-point boundary value
//! problems on the half-line
//!
//! ```text
//! u''(t) = f(t, u(t), u'(t)),  t >= 0,
//! u(0) = 0,  u'(+inf) = sum_i alpha_i u'(xi_i),  sum_i alpha_i = 1.
//! ```
//!
//! Adding `k u' + M u` to both sides gives a nonresonant linear part with a
//! Green's kernel ([`kernel`]). Bounded solutions are fixed points of the
//! integral operator built from that kernel ([`fixpoint`]), and the
//! existence inequalities are evaluated in [`theorems`].

pub mod cli;
pub mod expr;
pub mod fixpoint;
pub mod kernel;
pub mod model;
pub mod quad;
pub mod theorems;

pub use expr::{EvalError, Expression, ParseError};
pub use fixpoint::{GridFunction, ResidualReport};
pub use kernel::{GreenKernel, KernelConstants, KernelMode, ShiftParams};
pub use model::{BoundFamily, BoundKind, BracketPair, MultipointProblem};
