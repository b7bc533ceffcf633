//! Least-squares machinery: log–log power-law fits, damped Gauss–Newton for
//! the log-corrected model √ε = (C₀ + C₁(σ−1)ln(σ−1))(σ−1)^α, and natural
//! cubic splines for aligning parameter tables on common σ values.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("power-law fit requires y > 0 and sigma > 1, got point ({sigma}, {y})")]
    InvalidPoint { sigma: f64, y: f64 },
    #[error("fit window [{0}, {1}] contains only {2} points, need at least {3}")]
    WindowTooSmall(f64, f64, usize, usize),
    #[error("Gauss-Newton did not converge in {iterations} iterations (best objective {objective:.3e})")]
    NonConvergence {
        iterations: usize,
        objective: f64,
        best: Box<FitResult>,
    },
    #[error("spline knots must be strictly monotone in x")]
    NonMonotoneKnots,
    #[error("spline needs at least 4 knots, got {0}")]
    TooFewKnots(usize),
    #[error("evaluation point {x} outside the spline range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// y = C(σ−1)^α, fit linearly in log–log space.
    PowerLaw,
    /// y = (C₀ + C₁(σ−1)ln(σ−1))(σ−1)^α, fit by damped Gauss–Newton,
    /// unweighted in linear space.
    LogCorrected,
}

/// Default starting point (C₀, C₁, α) for the log-corrected model.
pub const LOG_CORRECTED_INIT: (f64, f64, f64) = (8.0, 15.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    /// C for the power law, C₀ for the log-corrected model.
    pub c0: f64,
    /// C₁ of the log-corrected model; `None` for the power law.
    pub c1: Option<f64>,
    pub exponent: f64,
    /// RMS misfit: log-space for the power law, linear for log-corrected.
    pub residual_norm: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

fn in_window(points: &[(f64, f64)], window: (f64, f64)) -> Vec<(f64, f64)> {
    points
        .iter()
        .copied()
        .filter(|(s, _)| *s >= window.0 && *s <= window.1)
        .collect()
}

/// Linear least squares of ln y against ln(σ−1): returns C = e^intercept and
/// α = slope.
pub fn fit_power_law(points: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult, FitError> {
    let pts = in_window(points, window);
    if pts.len() < 3 {
        return Err(FitError::WindowTooSmall(window.0, window.1, pts.len(), 3));
    }
    for &(sigma, y) in &pts {
        if !(y > 0.0) || !(sigma > 1.0) {
            return Err(FitError::InvalidPoint { sigma, y });
        }
    }
    let xs: Vec<f64> = pts.iter().map(|(s, _)| (s - 1.0).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, y)| y.ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(FitResult {
        model: FitModel::PowerLaw,
        c0: intercept.exp(),
        c1: None,
        exponent: slope,
        residual_norm: (rss / n).sqrt(),
        window,
        n_points: pts.len(),
    })
}

/// Solve a small dense symmetric system by Gaussian elimination with partial
/// pivoting. Returns `None` on a numerically singular pivot.
fn solve_small(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[piv][k].abs() < 1e-300 {
            return None;
        }
        a.swap(k, piv);
        rhs.swap(k, piv);
        for i in k + 1..n {
            let l = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= l * a[k][j];
            }
            rhs[i] -= l * rhs[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for j in k + 1..n {
            s -= a[k][j] * x[j];
        }
        x[k] = s / a[k][k];
    }
    Some(x)
}

struct GaussNewton<'a> {
    pts: &'a [(f64, f64)],
    fix_c1: bool,
}

impl GaussNewton<'_> {
    fn model(&self, p: &[f64; 3], s: f64) -> f64 {
        let sm1 = s - 1.0;
        (p[0] + p[1] * sm1 * sm1.ln()) * sm1.powf(p[2])
    }

    fn objective(&self, p: &[f64; 3]) -> f64 {
        self.pts
            .iter()
            .map(|&(s, y)| {
                let r = y - self.model(p, s);
                r * r
            })
            .sum()
    }

    /// One damped Gauss–Newton step; returns the new point and whether the
    /// gradient test signals convergence.
    fn step(&self, p: &[f64; 3], obj: f64) -> Result<([f64; 3], f64, bool), ()> {
        let np = if self.fix_c1 { 2 } else { 3 };
        // residuals r_i = y_i − model, jacobian of the residual
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for &(s, y) in self.pts {
            let sm1: f64 = s - 1.0;
            let pa = sm1.powf(p[2]);
            let core = p[0] + p[1] * sm1 * sm1.ln();
            let r = y - core * pa;
            // columns: d(model)/d(C0, [C1,] α); residual derivative is −that
            let mut cols = [pa, 0.0, 0.0];
            let mut k = 1;
            if !self.fix_c1 {
                cols[1] = sm1 * sm1.ln() * pa;
                k = 2;
            }
            cols[k] = core * pa * sm1.ln();
            for i in 0..np {
                jtr[i] += cols[i] * r;
                for j in 0..np {
                    jtj[i][j] += cols[i] * cols[j];
                }
            }
        }
        let grad_norm = jtr.iter().map(|g| 4.0 * g * g).sum::<f64>().sqrt();
        if grad_norm <= 1e-10 * (1.0 + obj) {
            return Ok((*p, obj, true));
        }
        let delta = match solve_small(jtj.clone(), jtr.clone()) {
            Some(d) => d,
            None => {
                // Levenberg shift on singular normal equations
                let shift = 1e-12 * (0..np).map(|i| jtj[i][i]).sum::<f64>();
                let mut damped = jtj;
                for (i, row) in damped.iter_mut().enumerate() {
                    row[i] += shift;
                }
                solve_small(damped, jtr).ok_or(())?
            }
        };
        // step-halving on objective increase
        let mut frac = 1.0;
        for _ in 0..60 {
            let mut trial = *p;
            trial[0] += frac * delta[0];
            if self.fix_c1 {
                trial[2] += frac * delta[1];
            } else {
                trial[1] += frac * delta[1];
                trial[2] += frac * delta[2];
            }
            if trial.iter().all(|t| t.is_finite()) {
                let trial_obj = self.objective(&trial);
                if trial_obj < obj {
                    return Ok((trial, trial_obj, false));
                }
            }
            frac *= 0.5;
        }
        Err(())
    }
}

fn run_gauss_newton(
    pts: &[(f64, f64)],
    window: (f64, f64),
    mut p: [f64; 3],
    fix_c1: bool,
) -> Result<FitResult, FitError> {
    let gn = GaussNewton { pts, fix_c1 };
    let mut obj = gn.objective(&p);
    let pack = |p: &[f64; 3], obj: f64| FitResult {
        model: FitModel::LogCorrected,
        c0: p[0],
        c1: if fix_c1 { None } else { Some(p[1]) },
        exponent: p[2],
        residual_norm: (obj / pts.len() as f64).sqrt(),
        window,
        n_points: pts.len(),
    };
    for iter in 0..200 {
        match gn.step(&p, obj) {
            Ok((next, next_obj, done)) => {
                p = next;
                obj = next_obj;
                if done {
                    return Ok(pack(&p, obj));
                }
            }
            Err(()) => {
                // line search stalled: accept the current point if the
                // gradient is already tiny relative to the data scale
                return Err(FitError::NonConvergence {
                    iterations: iter,
                    objective: obj,
                    best: Box::new(pack(&p, obj)),
                });
            }
        }
    }
    Err(FitError::NonConvergence {
        iterations: 200,
        objective: obj,
        best: Box::new(pack(&p, obj)),
    })
}

/// Damped Gauss–Newton fit of √ε = (C₀ + C₁(σ−1)ln(σ−1))(σ−1)^α,
/// unweighted in linear space.
pub fn fit_log_corrected(
    points: &[(f64, f64)],
    window: (f64, f64),
    init: (f64, f64, f64),
) -> Result<FitResult, FitError> {
    let pts = in_window(points, window);
    if pts.len() < 4 {
        return Err(FitError::WindowTooSmall(window.0, window.1, pts.len(), 4));
    }
    for &(sigma, y) in &pts {
        if !(y > 0.0) || !(sigma > 1.0) {
            return Err(FitError::InvalidPoint { sigma, y });
        }
    }
    run_gauss_newton(&pts, window, [init.0, init.1, init.2], false)
}

/// The log-corrected model with C₁ pinned to zero, i.e. a pure power law fit
/// in linear space. On exact power-law data this reproduces `fit_power_law`.
pub fn fit_log_corrected_fixed_c1(
    points: &[(f64, f64)],
    window: (f64, f64),
    init: (f64, f64),
) -> Result<FitResult, FitError> {
    let pts = in_window(points, window);
    if pts.len() < 3 {
        return Err(FitError::WindowTooSmall(window.0, window.1, pts.len(), 3));
    }
    for &(sigma, y) in &pts {
        if !(y > 0.0) || !(sigma > 1.0) {
            return Err(FitError::InvalidPoint { sigma, y });
        }
    }
    run_gauss_newton(&pts, window, [init.0, 0.0, init.1], true)
}

/// Render a σ_max-sweep of fits as a comma-separated table: one row per
/// window upper bound, columns (sigma_max, alpha, C) for the power law and
/// (sigma_max, alpha, C0, C1) for the log-corrected model.
pub fn render_sweep_table(rows: &[(f64, FitResult)]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let log_corrected = rows.iter().any(|(_, f)| f.c1.is_some());
    out.push_str(if log_corrected {
        "sigma_max,alpha,C0,C1\n"
    } else {
        "sigma_max,alpha,C\n"
    });
    for (sigma_max, fit) in rows {
        match fit.c1 {
            Some(c1) => {
                let _ = writeln!(
                    out,
                    "{sigma_max},{:.10e},{:.10e},{:.10e}",
                    fit.exponent, fit.c0, c1
                );
            }
            None => {
                let _ = writeln!(out, "{sigma_max},{:.10e},{:.10e}", fit.exponent, fit.c0);
            }
        }
    }
    out
}

/// Natural cubic spline: second derivative zero at both ends, exact at the
/// knots, C² in between.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(knots: &[(f64, f64)]) -> Result<Self, FitError> {
        if knots.len() < 4 {
            return Err(FitError::TooFewKnots(knots.len()));
        }
        let increasing = knots.windows(2).all(|w| w[1].0 > w[0].0);
        let decreasing = knots.windows(2).all(|w| w[1].0 < w[0].0);
        if !increasing && !decreasing {
            return Err(FitError::NonMonotoneKnots);
        }
        let pts: Vec<(f64, f64)> = if increasing {
            knots.to_vec()
        } else {
            knots.iter().rev().copied().collect()
        };
        let n = pts.len();
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();

        // Thomas algorithm for the tridiagonal second-derivative system
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            diag[i] = (h0 + h1) / 3.0;
            upper[i] = h1 / 6.0;
            rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        let mut m = vec![0.0; n];
        // forward sweep over interior unknowns (natural ends stay zero)
        for i in 2..n - 1 {
            let lower = (x[i] - x[i - 1]) / 6.0;
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
        }
        Ok(Self { x, y, m })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn eval(&self, x: f64) -> Result<f64, FitError> {
        let (lo, hi) = self.range();
        if x < lo || x > hi {
            return Err(FitError::OutOfRange { x, lo, hi });
        }
        let i = match self.x.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let d0 = self.x[i + 1] - x;
        let d1 = x - self.x[i];
        Ok(self.m[i] * d0 * d0 * d0 / (6.0 * h)
            + self.m[i + 1] * d1 * d1 * d1 / (6.0 * h)
            + (self.y[i] / h - self.m[i] * h / 6.0) * d0
            + (self.y[i + 1] / h - self.m[i + 1] * h / 6.0) * d1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn power_law_exact_roundtrip() {
        let pts: Vec<(f64, f64)> = (1..=20)
            .map(|k| {
                let s = 1.0 + 0.01 * k as f64;
                (s, 4.0 * (s - 1.0_f64).powf(1.2))
            })
            .collect();
        let fit = fit_power_law(&pts, (1.0, 2.0)).unwrap();
        assert!((fit.c0 - 4.0).abs() < 1e-10, "C = {}", fit.c0);
        assert!((fit.exponent - 1.2).abs() < 1e-10);
        assert!(fit.residual_norm < 1e-12);
    }

    #[test]
    fn power_law_rejects_bad_points() {
        let bad = [(1.1, 1.0), (1.2, -1.0), (1.3, 2.0)];
        assert!(matches!(
            fit_power_law(&bad, (1.0, 2.0)),
            Err(FitError::InvalidPoint { .. })
        ));
        let sub = [(0.9, 1.0), (1.2, 1.0), (1.3, 2.0)];
        assert!(fit_power_law(&sub, (0.0, 2.0)).is_err());
        let few = [(1.1, 1.0), (1.2, 1.0)];
        assert!(matches!(
            fit_power_law(&few, (1.0, 2.0)),
            Err(FitError::WindowTooSmall(..))
        ));
    }

    #[test]
    fn log_corrected_exact_recovery() {
        let truth = (8.0, 15.0, 1.0);
        let pts: Vec<(f64, f64)> = (1..=30)
            .map(|k| {
                let s: f64 = 1.0 + 0.003 * k as f64;
                let sm1 = s - 1.0;
                (s, (truth.0 + truth.1 * sm1 * sm1.ln()) * sm1.powf(truth.2))
            })
            .collect();
        let fit = fit_log_corrected(&pts, (1.0, 2.0), (7.0, 12.0, 1.1)).unwrap();
        assert!((fit.c0 - truth.0).abs() < 1e-8, "C0 = {}", fit.c0);
        assert!((fit.c1.unwrap() - truth.1).abs() < 1e-7, "C1 = {:?}", fit.c1);
        assert!((fit.exponent - truth.2).abs() < 1e-8);
    }

    #[test]
    fn log_corrected_with_fixed_c1_matches_power_law() {
        let pts: Vec<(f64, f64)> = (1..=12)
            .map(|k| {
                let s = 1.0 + 0.01 * k as f64;
                (s, 2.5 * (s - 1.0_f64).powf(0.9))
            })
            .collect();
        let gn = fit_log_corrected_fixed_c1(&pts, (1.0, 2.0), (2.0, 1.0)).unwrap();
        let pl = fit_power_law(&pts, (1.0, 2.0)).unwrap();
        assert!((gn.c0 - pl.c0).abs() < 1e-8);
        assert!((gn.exponent - pl.exponent).abs() < 1e-8);
        assert!(gn.c1.is_none());
    }

    #[test]
    fn spline_reproduces_gentle_cubic() {
        let f = |x: f64| 0.1 * x * x * x - 0.4 * x + 2.0;
        let knots: Vec<(f64, f64)> = (0..=80).map(|k| {
            let x = k as f64 * 0.025;
            (x, f(x))
        }).collect();
        let sp = CubicSpline::new(&knots).unwrap();
        for k in 0..80 {
            let x = (k as f64 + 0.5) * 0.025;
            let got = sp.eval(x).unwrap();
            assert!(
                (got - f(x)).abs() <= 1e-3 * f(x).abs(),
                "x {x}: {got} vs {}",
                f(x)
            );
        }
        // exact at knots
        for &(x, y) in &knots {
            assert!((sp.eval(x).unwrap() - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_is_continuous_at_knots() {
        let knots: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64, (k as f64).sin())).collect();
        let sp = CubicSpline::new(&knots).unwrap();
        for k in 1..10 {
            let x = k as f64;
            let left = sp.eval(x - 1e-12).unwrap();
            let right = sp.eval(x + 1e-12).unwrap();
            assert!((left - right).abs() < 1e-9);
        }
    }

    #[test]
    fn spline_is_exact_on_linear_data() {
        let knots: Vec<(f64, f64)> = (0..=6).map(|k| (k as f64 * 0.5, 3.0 - 0.25 * k as f64)).collect();
        let sp = CubicSpline::new(&knots).unwrap();
        for i in 0..=60 {
            let x = i as f64 * 0.05;
            let exact = 3.0 - 0.5 * x;
            assert!((sp.eval(x).unwrap() - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn spline_rejects_bad_knots() {
        let dup = [(0.0, 1.0), (1.0, 2.0), (1.0, 3.0), (2.0, 4.0)];
        assert!(matches!(
            CubicSpline::new(&dup),
            Err(FitError::NonMonotoneKnots)
        ));
        let few = [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)];
        assert!(matches!(CubicSpline::new(&few), Err(FitError::TooFewKnots(3))));
        let sp = CubicSpline::new(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).unwrap();
        assert!(matches!(sp.eval(3.5), Err(FitError::OutOfRange { .. })));
    }

    #[test]
    fn spline_accepts_decreasing_knots() {
        let knots: Vec<(f64, f64)> = (0..=6).map(|k| (3.0 - k as f64 * 0.5, k as f64)).collect();
        let sp = CubicSpline::new(&knots).unwrap();
        assert!((sp.eval(3.0).unwrap() - 0.0).abs() < 1e-12);
        assert!((sp.eval(0.0).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn spline_interior_error_is_fourth_order() {
        let f = |x: f64| (1.3 * x).sin();
        let err_at = |h: f64| -> f64 {
            let n = (3.0 / h).round() as usize;
            let knots: Vec<(f64, f64)> = (0..=n).map(|k| {
                let x = k as f64 * h;
                (x, f(x))
            }).collect();
            let sp = CubicSpline::new(&knots).unwrap();
            // interior midpoints only (natural BC pollutes the ends)
            (n / 4..3 * n / 4)
                .map(|k| {
                    let x = (k as f64 + 0.5) * h;
                    (sp.eval(x).unwrap() - f(x)).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err_at(0.05) / err_at(0.025);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn power_law_is_scale_equivariant(lambda in 0.1..10.0f64) {
            let pts: Vec<(f64, f64)> = (1..=10)
                .map(|k| {
                    let s = 1.0 + 0.01 * k as f64;
                    (s, 3.0 * (s - 1.0_f64).powf(1.4) * (1.0 + 0.01 * (k as f64).sin()))
                })
                .collect();
            let base = fit_power_law(&pts, (1.0, 2.0)).unwrap();
            let scaled_pts: Vec<(f64, f64)> = pts.iter().map(|&(s, y)| (s, lambda * y)).collect();
            let scaled = fit_power_law(&scaled_pts, (1.0, 2.0)).unwrap();
            prop_assert!((scaled.exponent - base.exponent).abs() < 1e-9);
            prop_assert!((scaled.c0 / base.c0 / lambda - 1.0).abs() < 1e-9);
        }
    }
}
