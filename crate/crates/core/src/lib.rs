//! Random-conductor cell problems at desk scale.
//!
//! The crate generates random scalar conductivity fields on a periodic box,
//! solves the corrector equation that imposes a unit macroscopic gradient,
//! and studies the statistics of the resulting net flux: single-site
//! difference calculus, Efron-Stein and covariance-identity bounds, periodic
//! Green's functions, and normal approximation in Wasserstein distance.

pub mod fields;
pub mod greens;
pub mod grid;
pub mod resample;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod stein;

pub use fields::{
    realize, resample_site, sample_latent, series_conductivities, CheckerboardLaw,
    CoefficientField, FieldConfig, FieldError, LatentState, ModelKind, Pore, RadiusLaw,
    SitePayload,
};
pub use greens::{
    annulus_gradient_energy_2d, decay_profile_3d, decay_profile_csv, solve_green, DecayBin,
    GreenError, GreenFunction,
};
pub use grid::Grid;
pub use resample::{
    chatterjee_identity_exact, delta_j_gamma_direct, delta_j_gamma_local, delta_kj_gamma,
    efron_stein_estimate, gamma_ensemble, normal_bound_estimate, sample_subset_a,
    DifferenceRecord, EfronSteinEstimate, EfronSteinParams, NormalBoundEstimate,
    NormalBoundParams, ResampleError, ResampleTriple,
};
pub use solver::{
    assemble, flux_energy, flux_linear, phi_energies, solve_corrector, solve_corrector_warm,
    CorrectorSolution, DiscreteOperator, Preconditioner, SolveConfig, SolverError,
};
pub use stein::{
    covariance_representation_check, solve_stein, wasserstein_to_normal, SteinError,
    SteinSolution, TestFunction,
};
