//! Closed-form momentum-expansion integrals of the near-critical analysis.
//!
//! The momentum density 𝓘(B_σ) = (b/2 − B_σ^{2σ}/(2σ+2))B_σ² expands around
//! the lump as 𝓘₀ + (σ−1)𝓘₁ + ε𝓘₂ with coefficients built from L₁ and the
//! correction functions (f₁, f₂); their window integrals and the
//! intermediate-order constants (c₁, c₂) are evaluated here by quadrature.

use crate::quad::trapezoid_uniform;
use crate::solitons::lump_expansion_terms;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("expansion integrals require 0 < epsilon < 1, got {0}")]
    EpsilonOutOfRange(f64),
}

fn lump1(xi: f64) -> f64 {
    (8.0 / (1.0 + 4.0 * xi * xi)).sqrt()
}

/// 𝓘₀ = (1 − L₁²/4)L₁²
fn dens0(xi: f64) -> f64 {
    let l2 = 8.0 / (1.0 + 4.0 * xi * xi);
    (1.0 - l2 / 4.0) * l2
}

/// 𝓘₁ = 2L₁f₁(1 − L₁²/4) − ½(L₁f₁ + L₁²ln L₁ − L₁²/4)L₁²
fn dens1(xi: f64) -> f64 {
    let l = lump1(xi);
    let l2 = l * l;
    let (f1, _) = lump_expansion_terms(xi);
    2.0 * l * f1 * (1.0 - l2 / 4.0) - 0.5 * (l * f1 + l2 * l.ln() - l2 / 4.0) * l2
}

/// 𝓘₂ = 2f₂L₁(1 − L₁²/4) − ½(f₂L₁ + 1)L₁²
fn dens2(xi: f64) -> f64 {
    let l = lump1(xi);
    let l2 = l * l;
    let (_, f2) = lump_expansion_terms(xi);
    2.0 * f2 * l * (1.0 - l2 / 4.0) - 0.5 * (f2 * l + 1.0) * l2
}

/// (J₀, J₁, J₂) = ∫_{−1/(2√ε)}^0 (𝓘₀, 𝓘₁, 𝓘₂) dξ by trapezoid quadrature.
///
/// As ε → 0 these approach −4√ε, 2π and −1/(3√ε); the J₁ window integral
/// carries a slowly decaying ln|ξ|/ξ² tail, so its approach to 2π is
/// O(√ε ln(1/ε)) rather than O(√ε).
pub fn expansion_integrals(epsilon: f64) -> Result<(f64, f64, f64), ExpansionError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ExpansionError::EpsilonOutOfRange(epsilon));
    }
    let w = 0.5 / epsilon.sqrt();
    let h_target = 2e-3;
    let n = (w / h_target).ceil() as usize;
    let h = w / n as f64;
    let sample = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..=n).map(|k| f(-w + h * k as f64)).collect()
    };
    Ok((
        trapezoid_uniform(h, &sample(&dens0)),
        trapezoid_uniform(h, &sample(&dens1)),
        trapezoid_uniform(h, &sample(&dens2)),
    ))
}

/// The intermediate-order integral
/// I₂,₂(ε) = (1/(2√ε)) ∫₁^∞ (b/2 − B₁²/4)(B₁²/2 − 2B₁² ln B₁) du
/// with b = 2 − ε and B₁²(u) = (4 − b²)/(cosh u − b/2).
pub fn intermediate_order_integral(epsilon: f64) -> Result<f64, ExpansionError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ExpansionError::EpsilonOutOfRange(epsilon));
    }
    let b = 2.0 - epsilon;
    let disc = 4.0 - b * b;
    let u_max = 80.0;
    let h = 5e-4;
    let n = (u_max / h) as usize;
    let vals: Vec<f64> = (0..=n)
        .map(|k| {
            let u = 1.0 + h * k as f64;
            let b1sq = disc / (u.cosh() - 0.5 * b);
            (0.5 * b - 0.25 * b1sq) * (0.5 * b1sq - b1sq * b1sq.ln())
        })
        .collect();
    Ok(trapezoid_uniform(h, &vals) / (2.0 * epsilon.sqrt()))
}

/// Fit I₂,₂(ε) ≈ c₁√ε ln ε + c₂√ε over a decreasing ε sequence; returns the
/// constants and the RMS residual of the fit.
pub fn intermediate_order_constants_on(
    epsilons: &[f64],
) -> Result<(f64, f64, f64), ExpansionError> {
    let mut m = [[0.0_f64; 2]; 2];
    let mut rhs = [0.0_f64; 2];
    let mut samples = Vec::with_capacity(epsilons.len());
    for &e in epsilons {
        let v = intermediate_order_integral(e)?;
        let basis = [e.sqrt() * e.ln(), e.sqrt()];
        for r in 0..2 {
            rhs[r] += basis[r] * v;
            for c in 0..2 {
                m[r][c] += basis[r] * basis[c];
            }
        }
        samples.push((basis, v));
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let c1 = (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det;
    let c2 = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
    let rss: f64 = samples
        .iter()
        .map(|(basis, v)| {
            let r = v - c1 * basis[0] - c2 * basis[1];
            r * r
        })
        .sum();
    Ok((c1, c2, (rss / epsilons.len() as f64).sqrt()))
}

/// (c₁, c₂) from the canonical ε sequence 10⁻⁴ … 10⁻⁸.
pub fn intermediate_order_constants() -> (f64, f64) {
    let eps: Vec<f64> = (4..=8).map(|k| 10f64.powi(-k)).collect();
    let (c1, c2, _) = intermediate_order_constants_on(&eps).expect("canonical eps in range");
    (c1, c2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn expansion_integrals_match_reference_quadrature() {
        // frozen from 30-digit quadrature of the same densities
        let (j0, j1, j2) = expansion_integrals(1e-4).unwrap();
        assert!((j0 - (-0.039996000399960004)).abs() < 1e-7, "J0 = {j0}");
        assert!((j1 - 5.9779652103639852).abs() < 2e-5, "J1 = {j1}");
        assert!((j2 - (-33.333332000266627)).abs() < 1e-4, "J2 = {j2}");
    }

    #[test]
    fn expansion_integrals_leading_order_ratios() {
        for (eps, tol_j0, tol_j2) in [(1e-4, 1e-2, 1e-2), (1e-6, 1e-3, 1e-3)] {
            let (j0, _, j2) = expansion_integrals(eps).unwrap();
            let r0 = j0 / (-4.0 * eps.sqrt());
            let r2 = j2 * 3.0 * eps.sqrt();
            assert!((r0 - 1.0).abs() < tol_j0, "eps {eps}: J0 ratio {r0}");
            assert!((r2 + 1.0).abs() < tol_j2, "eps {eps}: J2 ratio {r2}");
        }
    }

    #[test]
    fn j1_window_integral_approaches_2pi_slowly() {
        // the window integral of 𝓘₁ converges to 2π only like √ε·ln(1/ε):
        // at ε = 10⁻⁴ it is ≈ 0.951·2π, at 10⁻⁶ ≈ 0.992·2π
        let (_, j1_a, _) = expansion_integrals(1e-4).unwrap();
        let (_, j1_b, _) = expansion_integrals(1e-6).unwrap();
        assert!((j1_a / (2.0 * PI) - 0.9514227128608102).abs() < 1e-5);
        assert!((j1_b / (2.0 * PI) - 0.9922102819836262).abs() < 1e-5);
        assert!(j1_b > j1_a);
    }

    #[test]
    fn integrand_symmetry_makes_the_window_one_sided() {
        // 𝓘₀ is even, so ∫_{−w}^0 = ∫_0^w: check via explicit sampling
        let w = 5.0;
        let n = 10_000;
        let h = w / n as f64;
        let left: Vec<f64> = (0..=n).map(|k| dens0(-w + h * k as f64)).collect();
        let right: Vec<f64> = (0..=n).map(|k| dens0(h * k as f64)).collect();
        let il = trapezoid_uniform(h, &left);
        let ir = trapezoid_uniform(h, &right);
        assert!((il - ir).abs() < 1e-13);
    }

    #[test]
    fn intermediate_constants_match_reference_values() {
        let (c1, c2) = intermediate_order_constants();
        assert!((c1 - (-2.33)).abs() < 0.05, "c1 = {c1}");
        assert!((c2 - (-0.66)).abs() < 0.05, "c2 = {c2}");
    }

    #[test]
    fn intermediate_fit_residual_shrinks_toward_zero_window() {
        let wide: Vec<f64> = (2..=6).map(|k| 10f64.powi(-k)).collect();
        let narrow: Vec<f64> = (4..=8).map(|k| 10f64.powi(-k)).collect();
        let (_, _, r_wide) = intermediate_order_constants_on(&wide).unwrap();
        let (_, _, r_narrow) = intermediate_order_constants_on(&narrow).unwrap();
        assert!(
            r_narrow < r_wide,
            "residual did not shrink: {r_narrow} vs {r_wide}"
        );
    }

    #[test]
    fn rejects_out_of_range_epsilon() {
        assert!(expansion_integrals(0.0).is_err());
        assert!(expansion_integrals(1.5).is_err());
        assert!(intermediate_order_integral(-0.1).is_err());
    }
}
