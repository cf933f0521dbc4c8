//! Spectral solver for the Laplacian on compact metric graphs with the cyclic
//! vertex coupling `(F[j+1] - F[j]) + i (F'[j] + F'[j+1]) = 0`.

pub mod coupling;
pub mod experiments;
pub mod fem;
pub mod graph;
pub mod quadform;
pub mod quadrature;
pub mod secular;

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
