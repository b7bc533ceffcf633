//! Composite trapezoid quadrature on uniform grids.
//!
//! Everything downstream is second order; the trapezoid rule keeps the error
//! model uniform across the crate.

/// ∫ y dx over a uniform grid with spacing `dx`.
pub fn trapezoid_uniform(dx: f64, y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let interior: f64 = y[1..y.len() - 1].iter().sum();
    dx * (0.5 * (y[0] + y[y.len() - 1]) + interior)
}

/// Cumulative trapezoid: returns c with c[0] = 0 and
/// c[j] = ∫₀^{x_j} y dx on a uniform grid.
pub fn cumulative_trapezoid_uniform(dx: f64, y: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    c.push(0.0);
    for w in y.windows(2) {
        acc += 0.5 * dx * (w[0] + w[1]);
        c.push(acc);
    }
    c
}

/// ∫ y dx over `[x0, x0 + dx·(y.len()-1)]` truncated to `[x0, cut]`.
///
/// The cell containing `cut` is split with the linear interpolant, so a
/// partition of the domain into pieces sums exactly to the full trapezoid
/// sum (up to rounding).
pub fn trapezoid_uniform_to(dx: f64, x0: f64, y: &[f64], cut: f64) -> f64 {
    let n = y.len();
    if n < 2 || cut <= x0 {
        return 0.0;
    }
    let x_end = x0 + dx * (n - 1) as f64;
    if cut >= x_end {
        return trapezoid_uniform(dx, y);
    }
    let t = (cut - x0) / dx;
    let j = (t.floor() as usize).min(n - 2);
    let frac = t - j as f64;
    let mut acc = trapezoid_uniform(dx, &y[..=j]);
    // linear interpolant on the cut cell
    let y_cut = y[j] + (y[j + 1] - y[j]) * frac;
    acc += 0.5 * frac * dx * (y[j] + y_cut);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_exact() {
        let dx = 0.1;
        let y: Vec<f64> = (0..=10).map(|j| 3.0 * (j as f64) * dx + 1.0).collect();
        let exact = 0.5 * 3.0 + 1.0; // ∫₀¹ (3x+1) dx
        assert!((trapezoid_uniform(dx, &y) - exact).abs() < 1e-14);
    }

    #[test]
    fn cumulative_matches_total() {
        let dx = 0.01;
        let y: Vec<f64> = (0..=100).map(|j| ((j as f64) * dx).sin()).collect();
        let c = cumulative_trapezoid_uniform(dx, &y);
        assert_eq!(c.len(), y.len());
        assert!((c[c.len() - 1] - trapezoid_uniform(dx, &y)).abs() < 1e-15);
    }

    #[test]
    fn split_at_cut_sums_to_total() {
        let dx = 0.1;
        let y: Vec<f64> = (0..=20).map(|j| (j as f64).powi(2) + 0.5).collect();
        let total = trapezoid_uniform(dx, &y);
        for cut in [0.137, 0.9, 1.0, 1.55] {
            let left = trapezoid_uniform_to(dx, 0.0, &y, cut);
            // right piece via reversed array
            let rev: Vec<f64> = y.iter().rev().copied().collect();
            let right = trapezoid_uniform_to(dx, 0.0, &rev, 2.0 - cut);
            assert!(
                (left + right - total).abs() < 1e-12 * total.abs(),
                "cut {cut}: {left} + {right} != {total}"
            );
        }
    }
}
