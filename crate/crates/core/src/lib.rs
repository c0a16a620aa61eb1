//! Termination analysis for nondeterministic quantum programs.
//!
//! A program is modelled as a quantum Markov decision process: a finite set
//! of actions, one trace-preserving super-operator (in Kraus form) per
//! action, and a binary projective measurement whose `false` outcome means
//! termination. The crate decides whether a given input state terminates
//! with probability one under every scheduler, whether the program
//! terminates on all inputs, and synthesizes the evidence schedulers in
//! each direction: divergence schedulers, nontermination schedulers and
//! universal termination schedulers.
//!
//! All values are immutable after construction and every analysis is a pure
//! function of its inputs, so concurrent use on shared models is safe.

pub mod divergence;
pub mod error;
pub mod io;
pub mod model;
pub mod numerics;
pub mod reachability;
pub mod termination;
pub mod universal;

pub use error::{Error, Result};
pub use numerics::Tolerances;
