//! Simulation of the two-atom cavity-QED interferometer that reads out the
//! concurrence of a pure two-qubit cavity state as a two-particle fringe
//! visibility.
//!
//! The pipeline is split into:
//!
//! * [`qstate`]: pure two-qubit states, exact concurrence `2|αδ − βγ|`,
//!   Haar sampling and the JSON state format.
//! * [`protocol`]: the per-atom interaction matrix (swap, dispersive phase,
//!   Ramsey rotation) and its Kronecker application to a cavity state, plus
//!   the one-atom single-excitation scheme.
//! * [`measurement`]: outcome distributions, the corrected joint probability
//!   `P̄ = P_ee − P_e1·P_e2 + 1/4`, the real-coefficient closed form and
//!   seeded shot sampling.
//! * [`search`]: grid + golden-section extremization of `P̄`, the preset
//!   shortcuts for real and Schmidt-form states, and the shot-noise pipeline.
//! * [`cli`]: the command-line front end.

pub mod cli;
pub mod error;
pub mod measurement;
pub mod protocol;
pub mod qstate;
pub mod search;

pub use error::{Error, Result};
pub use measurement::{
    corrected_joint_probability, distribution_from_coefficients, estimate_pbar,
    real_coefficient_pbar, sample_shots, OutcomeDistribution, PbarEstimate, ShotCounts,
};
pub use protocol::{
    apply_protocol, atom_matrix, phase_identity_residual, single_particle_probability,
    single_particle_visibility, AtomMatrix, FinalCoefficients, ProtocolAngles,
};
pub use qstate::{
    concurrence_exact, normalize, parse_state, random_pure_state, serialize_state,
    ComplexAmplitude, SingleExcitationState, TwoQubitState,
};
pub use search::{
    estimate_concurrence_shots, exact_pbar, find_extrema, preset_real_visibility,
    preset_schmidt_visibility, visibility_exact, BoundCheck, SearchConfig, ShotReport,
    VisibilityReport,
};
