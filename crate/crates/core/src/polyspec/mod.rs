//! Polynomial machinery: multi-indices, polynomials, cumulant tables,
//! moment kernels, intertwining kernels and eigenfunctions.

mod cumulants;
mod eigen;
mod kernel;
mod multiindex;
mod poly;
mod semigroup;

pub use cumulants::{moments_from_cumulants, CumulantTable};
pub use eigen::{hermite_orthonormal, EigenSystem, MaskedField};
pub use kernel::{build_lambda, build_v, convolve_markov, invert_on_polys, reference_variance, MomentKernel};
pub use multiindex::{binomial, count_up_to, factorial, MultiIndex};
pub use poly::Poly;
pub use semigroup::{compose_linear, drift_apply, generator_apply, poly_semigroup_apply, transition_kernel};
