//! Exact rational linear algebra in dimensions 2 and 3, with float
//! post-processing for spectral and projective quantities.

pub mod float;
pub mod intmat;
pub mod linsolve;
pub mod matrix;
pub mod poly;
pub mod rat;
pub mod sl2;
pub mod spectrum;

pub use intmat::DenMat3;
pub use float::{chordal_distance, EigenStructure, PlaneR3, ProjPoint, M3, V3};
pub use matrix::{RatMat2, RatMat3};
pub use rat::{fmt_rat, int, parse_rat, rat, to_f64, Rat};
pub use sl2::{classify_sl2, log_top_modulus, commutator_differential_rank, sl2_top_modulus, Sl2Class};
pub use spectrum::{
    eigen_structure, is_loxodromic, is_unipotent, log_singular_values, log_top_singular_value, nth_root_loxodromic,
    singular_values, spectrum3, Spectrum3,
};
