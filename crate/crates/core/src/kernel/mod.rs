//! Discrete fundamental solution of `d/dt - L_FP` and checks of its bounds.

pub mod operator;
pub mod propagator;
pub mod validation;

pub use operator::{apply_operator, linear_operator, ShiftedSystem};
pub use propagator::{
    apply_propagator, build_propagator, kernel_y_gradient, periodized_heat_kernel, propagate,
    Propagator,
};
pub use validation::{
    fitted_c_gauss, integral_constants, time_ladder, validate_gaussian_bounds,
    validate_integral_bounds, validate_mass_sandwich, GaussianFit, IntegralBoundsReport,
    IntegralConstants, IntegralOptions, IntegralSample, MassSandwichReport,
};
