//! Traveling-wave solitons of gDNLS and their near-critical expansion.
//!
//! With the frequency fixed to ω = 1 and velocity c = b, the soliton
//! amplitude R(ξ) solves
//!
//!   R″ − (1 − b²/4)R − (b/2)R^{2σ+1} + (2σ+1)/(2σ+2)² R^{4σ+1} = 0.
//!
//! For |b| < 2 the solutions are smooth and exponentially decaying (`bright`);
//! in the limit b ↗ 2 the algebraic `lump` soliton emerges.  Both closed
//! forms serve as initial-guess material for the profile solver and as
//! analytic oracles in tests.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolitonError {
    #[error("bright soliton requires |b| < 2, got b = {0}")]
    BrightUndefined(f64),
    #[error("soliton parameters out of range: sigma = {sigma}, b = {b} (need sigma >= 1, |b| <= 2)")]
    InvalidParams { sigma: f64, b: f64 },
    #[error("profile must be sampled on at least 5 grid points, got {0}")]
    GridTooSmall(usize),
    #[error("closed-form invariants are only available for sigma = 1, got {0}")]
    UnsupportedSigma(f64),
}

/// Parameters of the soliton family: nonlinearity exponent σ ≥ 1 and
/// velocity b with |b| ≤ 2 (|b| < 2 on the bright branch, b = 2 for the lump).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonParams {
    pub sigma: f64,
    pub b: f64,
}

impl SolitonParams {
    pub fn new(sigma: f64, b: f64) -> Result<Self, SolitonError> {
        if !(sigma >= 1.0) || !(b.abs() <= 2.0) {
            return Err(SolitonError::InvalidParams { sigma, b });
        }
        Ok(Self { sigma, b })
    }
}

/// ln(cosh z − c) evaluated without overflow for any z.
fn ln_cosh_minus(z: f64, c: f64) -> f64 {
    let az = z.abs();
    if az <= 30.0 {
        (az.cosh() - c).ln()
    } else {
        // cosh z − c = e^|z|/2 · (1 + e^{−2|z|} − 2c e^{−|z|})
        let small = (-2.0 * az).exp() - 2.0 * c * (-az).exp();
        az - std::f64::consts::LN_2 + small.ln_1p()
    }
}

/// Bright soliton
/// B_σ(ξ) = [ (σ+1)(4−b²) / (2(cosh(σ√(4−b²) ξ) − b/2)) ]^{1/(2σ)}.
///
/// Strictly positive and even in ξ.  Evaluated in log form so the far field
/// underflows gracefully to 0 instead of overflowing the cosh.
pub fn bright(params: &SolitonParams, xi: f64) -> Result<f64, SolitonError> {
    if params.b.abs() >= 2.0 {
        return Err(SolitonError::BrightUndefined(params.b));
    }
    let (sigma, b) = (params.sigma, params.b);
    let disc = 4.0 - b * b;
    let z = sigma * disc.sqrt() * xi;
    let ln_num = ((sigma + 1.0) * disc).ln();
    let ln_den = std::f64::consts::LN_2 + ln_cosh_minus(z, 0.5 * b);
    Ok(((ln_num - ln_den) / (2.0 * sigma)).exp())
}

/// Lump soliton L_σ(ξ) = [ 4(σ+1) / (1 + 4σ²ξ²) ]^{1/(2σ)}.
///
/// Even in ξ; decays like |ξ|^{−1/σ}.
pub fn lump(sigma: f64, xi: f64) -> f64 {
    assert!(sigma >= 1.0, "lump soliton requires sigma >= 1");
    (4.0 * (sigma + 1.0) / (1.0 + 4.0 * sigma * sigma * xi * xi)).powf(1.0 / (2.0 * sigma))
}

/// Residual of the soliton ODE at the interior nodes of a uniformly sampled
/// amplitude: R″ − (1−b²/4)R − (b/2)R^{2σ+1} + (2σ+1)/(2σ+2)² R^{4σ+1},
/// with R″ by centered differences.
pub fn soliton_residual(
    sigma: f64,
    b: f64,
    profile: &[f64],
    dxi: f64,
) -> Result<Vec<f64>, SolitonError> {
    if profile.len() < 5 {
        return Err(SolitonError::GridTooSmall(profile.len()));
    }
    let lin = 1.0 - 0.25 * b * b;
    let quintic = (2.0 * sigma + 1.0) / (2.0 * sigma + 2.0).powi(2);
    let inv_h2 = 1.0 / (dxi * dxi);
    Ok(profile
        .windows(3)
        .map(|w| {
            let r = w[1];
            (w[0] - 2.0 * r + w[2]) * inv_h2 - lin * r - 0.5 * b * r.powf(2.0 * sigma + 1.0)
                + quintic * r.powf(4.0 * sigma + 1.0)
        })
        .collect())
}

/// Closed-form Hamiltonian and momentum of the gauge-complete bright soliton,
/// available for σ = 1 only: H(B₁) = −b√(4−b²), P(B₁) = −2√(4−b²).
pub fn soliton_invariants(sigma: f64, b: f64) -> Result<(f64, f64), SolitonError> {
    if sigma != 1.0 {
        return Err(SolitonError::UnsupportedSigma(sigma));
    }
    if b.abs() > 2.0 {
        return Err(SolitonError::InvalidParams { sigma, b });
    }
    let root = (4.0 - b * b).sqrt();
    Ok((-b * root, -2.0 * root))
}

/// Correction functions (f₁, f₂) of the near-critical expansion
/// B_σ = L₁ + (σ−1)f₁ + εf₂ around the σ = 1 lump.
pub fn lump_expansion_terms(xi: f64) -> (f64, f64) {
    let s = 4.0 * xi * xi + 1.0;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let f1 = -inv_sqrt2
        * s.powf(-1.5)
        * (12.0 * xi * xi + (8.0 * xi * xi + 2.0) * (8.0 / s).ln() - 1.0);
    let f2 = -(16.0 * xi.powi(4) + 3.0) / (6.0 * std::f64::consts::SQRT_2 * s.powf(1.5));
    (f1, f2)
}
