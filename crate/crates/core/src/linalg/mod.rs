//! Dense linear algebra for control: spectra, invariant subspaces, PBH
//! tests, pole placement and the linear regulator equations.

mod linearization;
mod pbh;
mod placement;
mod regulator_eq;
mod riccati;
mod spectrum;
mod subspace;

pub use linearization::{Dims, LinearizationData};
pub use pbh::{
    check_necessary_conditions, is_detectable, is_stabilizable, is_stabilizable_by_subspaces,
    NecessaryConditionsReport, Witness, INCLUSION_TOL,
};
pub use placement::{
    closed_loop_spectrum, place_observer_gain, place_observer_gain_with, place_state_feedback,
    place_state_feedback_with, PlacementOptions, PoleTarget,
};
pub use regulator_eq::{
    kron, solve_regulator_linear, sylvester_operator, verify_linear_dynamic_tracking,
    verify_linear_dynamic_tracking_tol, DynamicTrackingCheck, LinearRegulatorSolution, TRACKING_TOL,
};
pub use riccati::{matrix_sign, solve_care};
pub use spectrum::{eigendecompose, eigendecompose_with_margin, Spectrum, STABILITY_MARGIN};
pub use subspace::{
    controllable_subspace, intersect, spectral_norm, stable_subspace, unobservable_subspace,
    unstable_subspace, SubspaceBasis, SubspaceKind, RANK_TOL,
};

