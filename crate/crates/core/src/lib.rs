//! Riemannian geometry of the deep linear network.
//!
//! A depth-`N` network of width `d` is a tuple `(W_N, …, W_1)` of `d×d`
//! matrices with end-to-end product `X = W_N⋯W_1`. This crate covers:
//!
//! * [`manifold`]: the balanced manifold, its parametrization by a spectrum
//!   and `N+1` orthogonal frames, fibers, centers and group actions.
//! * [`metric`]: the operator `𝒜_{N,X}` and the metric `g^N` it induces on
//!   end-to-end matrices.
//! * [`entropy`]: volumes of group orbits, the resulting entropy, its
//!   gradient, and the Jacobi blocks behind the volume formula.
//! * [`basis`]: an explicit orthonormal basis of the balanced tangent space
//!   and checks that `φ` is a Riemannian submersion.
//! * [`flow`]: RK4 integrators for parameter, end-to-end and free-energy
//!   gradient flows.

pub mod basis;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod metric;
pub mod report;
pub mod tolerance;

pub use error::{GeomError, Result};
pub use linalg::{SquareMatrix, Spectrum, SvdTriple, TangentVector};
pub use manifold::Network;
