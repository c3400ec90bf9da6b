//! Numerical laboratory for the two-component Novikov system in transformed
//! (characteristic) variables.

// Stencil and scan loops index several arrays by the same node.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod evolution;
pub mod grid;
pub mod initial_data;
pub mod metric;
pub mod nonlocal;
pub mod reconstruction;
pub mod singular;
pub mod state;

pub use error::{NovikovError, Result};
pub use grid::Grid;
pub use initial_data::{direct_transform, invert_y0, EulerDatum, Profile};
pub use nonlocal::{assemble_sources, exp_convolve, exp_convolve_bruteforce, Quadrature, SourceFields};
pub use state::{OmegaBounds, TransformedState};
pub use evolution::{conserved, evolve, rhs, rk4_step, ConservedSet, EvolveAbort, EvolveOptions, Trajectory};
pub use reconstruction::{conserved_euler, euler_fields, measure_interval, sample_at, EulerField};
pub use singular::{analyze_state, classify, find_crossings, fit_exponent, verify_cancellations, SingularOptions, SingularPoint};
pub use metric::{distance_upper, lipschitz_experiment, path_length, straight_line_path, tangent_norm, EtaSearch, NormOptions, TangentVector};
