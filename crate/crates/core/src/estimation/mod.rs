//! Lineshape model, maximum-likelihood fitting and Fisher-information analysis.

pub mod fisher;
pub mod fit;
pub mod lineshape;

pub use fisher::{
    fisher_comparison, fisher_per_shot, protocol_comparison, ProtocolConfig, ProtocolReport,
};
pub use fit::{
    fit_lineshape, fit_points, FitData, FitMethod, FitResult, FixedParams, Observations,
    ParamErrors,
};
pub use lineshape::{
    lineshape, lineshape_grad, map_hamiltonian_to_lineshape, LineshapeParams, SpectrumKind,
};
