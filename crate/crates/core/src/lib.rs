//! Suboptimal LQR and structured consensus-protocol synthesis.
//!
//! The crate computes feedback laws together with explicit cost upper bounds
//! for two problem classes:
//!
//! * single LTI plants, where an ε-suboptimal state feedback is certified
//!   against the Riccati optimum ([`synth::algorithm1`]);
//! * networks of agents sharing a state matrix but with individual input
//!   matrices, where a diffusive consensus protocol respecting an undirected
//!   topology is synthesized together with a bound γ on its quadratic cost
//!   ([`synth::algorithm2`]), or γ is computed for a protocol supplied by the
//!   user ([`synth::algorithm3`]).
//!
//! Every result carries independent certificates: eigenvalue-checked LMI
//! margins, Hurwitz spectra, exact Lyapunov costs, and optionally an RK4
//! simulation cross-check ([`sim`]).

pub mod catalog;
pub mod error;
pub mod graph;
pub mod matcore;
pub mod netmodel;
pub mod sdp;
pub mod sim;
pub mod structure;
pub mod synth;

pub use error::{Error, Result};
pub use matcore::Mat;

#[cfg(test)]
#[macro_export]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
    }};
}
