//! Numerical thresholds shared across modules.

/// Two singular values are treated as coincident when they differ by less
/// than this fraction of the largest singular value.
pub const TAU_COINC: f64 = 1e-8;

/// A matrix is rank deficient when its smallest singular value falls below
/// this fraction of the largest one.
pub const TAU_RANK: f64 = 1e-10;

/// Relative balance tolerance, scaled by the largest squared layer norm.
pub const BALANCE_TOL: f64 = 1e-8;

/// Allowed deviation of `QᵀQ` from the identity for orthogonal factors.
pub const ORTHO_TOL: f64 = 1e-10;
