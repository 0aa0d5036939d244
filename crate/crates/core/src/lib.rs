//! Langevin sampling from non-smooth, compactly supported log-concave
//! densities through smooth envelopes of the potential.
//!
//! A target density `p ∝ exp(-F)` with `F = f + g` is described by a smooth
//! part `f` ([`model::SmoothPotential`]) and a non-smooth part `g`
//! ([`model::NonSmoothPotential`]) that is the sum of a convex regulariser and
//! the indicator of a compact convex body. The sampler never touches `F`
//! directly; it runs an unadjusted Langevin chain on either the Moreau-Yosida
//! envelope or the forward-backward envelope of `F`
//! ([`envelope::EnvelopeHandle`]).
//!
//! Besides the samplers the crate carries the non-asymptotic constants that
//! come with the method ([`theory`]), a quadrature ground-truth engine for
//! low-dimensional targets ([`reference`]) and pre-wired experiments
//! ([`experiments`]).
//!
//! ```
//! use std::sync::Arc;
//! use envlang::envelope::{EnvelopeHandle, EnvelopeKind};
//! use envlang::model::{CompositeTarget, ConvexBody, NonSmoothPotential, QuadraticPotential};
//!
//! let f = QuadraticPotential::new(vec![vec![1.0]]).unwrap();
//! let body = ConvexBody::new_box(vec![-1.0], vec![1.0]).unwrap();
//! let target = Arc::new(CompositeTarget::new(Arc::new(f), NonSmoothPotential::indicator(body)).unwrap());
//! let env = EnvelopeHandle::new(EnvelopeKind::ForwardBackward, 0.1, target).unwrap();
//! let grad = env.gradient(&[2.0]);
//! assert!(grad[0] > 0.0);
//! ```

pub mod envelope;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod model;
pub mod prox;
pub mod reference;
pub mod sampler;
pub mod theory;
mod vecops;

pub use error::{Error, Result};
