//! Rate regions, pinched measurements and error exponents for
//! three-receiver classical-quantum broadcast channels.
//!
//! The crate models cq broadcast channels `x -> rho_x^{B1 B2 B3}` and makes
//! their coding theory executable at desk scale: achievable rate regions are
//! materialized as exact rational inequality systems and projected with
//! Fourier-Motzkin elimination; the operator inequalities behind the error
//! bounds are certified numerically on random instances; and the one-shot
//! codes themselves (superposition + binning codebooks decoded by square-root
//! measurements over nested pinched projectors, with non-unique decoding) are
//! simulated exactly and compared against their analytic error bounds.

pub mod codesim;
pub mod cqstate;
pub mod divergence;
pub mod error;
pub mod hermitian;
pub mod lemmas;
pub mod mutual_info;
pub mod pinching;
pub mod polyhedra;
pub mod region;
pub mod sampling;

pub use cqstate::{BroadcastChannel, ClassicalJoint, ClassicalRegister, CqState, Receiver};
pub use error::{QbcError, Result};
pub use hermitian::{DensityMatrix, HermitianOperator, SpectralDecomposition};
