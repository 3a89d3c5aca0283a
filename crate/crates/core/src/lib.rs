//! Sub-Riemannian geometry of polynomial Hörmander operators and numerical
//! small-time heat-kernel asymptotics.

pub mod asymptotics;
pub mod chart;
pub mod error;
pub mod field;
pub mod flag;
pub mod grid;
pub mod heat;
pub mod linalg;
pub mod nilpotent;
pub mod poly;
pub mod sampling;

pub use error::{Error, Result};
pub use field::{dilate_pullback, graded_parts, lie_bracket, PolyVectorField, Weights};
pub use flag::{compute_flag, is_regular, sr_pseudo_norm, FlagData};
pub use poly::{MultiPoly, Rational};
pub use chart::{build_exponential_chart, dilate, identity_chart, push_field, verify_orders, PrivilegedChart};
pub use grid::Grid;
pub use nilpotent::{damped_field, hormander_coercivity, nilpotentize, CutoffSpec, DampedField, NilpotentStructure};
pub use heat::{fd_kernel, kac_check, kernel_change_measure, kernel_diffeo_transform, mc_kernel, FdConfig, HeatModel, KernelEstimate, McConfig};
pub use asymptotics::{
    check_fi_homogeneity, check_hat_homogeneity, diagonal_weyl_check, duhamel_c1_kernel, fit_expansion, perturbation_symbols,
    rescaled_kernel, DiffOperator, ExpansionReport, RescaledEstimator,
};
