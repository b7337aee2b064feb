//! Single-excitation dynamics, revival statistics and closed-form recurrence
//! analytics for a central qubit coupled to N environment qubits (and optionally
//! an M-TLS bath).

// Negated comparisons deliberately reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod arrowhead;
pub mod bathsim;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod recurrence;
pub mod rng;
pub mod stats;

pub use dynamics::{PeSource, StateVector, Trace};
pub use error::{Error, Result};
pub use faer::Mat;
pub use model::{delta_max, sample_config, CouplingMode, EnsembleSpec, SystemConfig};
pub use num_complex::Complex64;
