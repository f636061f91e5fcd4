//! Exact and tabulated 1D transport maps used as ground truth.

mod cdf;
mod gmm;
mod series;

pub use cdf::{kr_map_1d, Cdf1D, Density1d, Normal1d, Uniform1d, DEFAULT_GRID};
pub use gmm::{analyze_gmm_map, analyze_gmm_map_with, Gmm1D, GmmMapAnalysis, DEFAULT_JUMP_FACTOR};
pub use series::{
    erf_coeffs, normal_to_uniform, normal_to_uniform_routed, uniform_to_normal, uniform_to_normal_routed,
    DEFAULT_N2U_TERMS, DEFAULT_U2N_TERMS,
};
