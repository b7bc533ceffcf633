//! Damped Newton iteration on the discrete profile system.
//!
//! Convergence is judged by the pointwise relative criterion: the closing
//! residuals |u₀ − f₀| and |v₀| in absolute terms, and every field residual
//! relative to the local modulus |Q_j| (or |W_j|), falling back to absolute
//! where the modulus sits at the double-precision floor.

use crate::banded::LinearError;
use crate::equation::{assemble_jacobian, assemble_residual, EquationError, ResidualLayout, AMPLITUDE_FLOOR};
use crate::profile::{GridSpec, ProfileState};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Pointwise relative tolerance TOL.
    pub tol: f64,
    /// Newton iteration cap.
    pub max_iter: usize,
    /// Smallest allowed line-search fraction.
    pub damping_min: f64,
    /// Iterative-refinement steps inside the direct solve.
    pub linear_refine: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            damping_min: 1.0 / 64.0,
            linear_refine: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.tol > 0.0 && self.max_iter >= 1 && self.damping_min > 0.0 && self.damping_min <= 1.0
        {
            Ok(())
        } else {
            Err(SolveError::InvalidConfig)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub state: ProfileState,
    pub iterations: usize,
    /// Max pointwise relative residual at exit.
    pub final_residual: f64,
    /// |v₀ − g₀|, the continuity condition that is monitored, not imposed.
    pub v0_g0_gap: f64,
    /// Accepted line-search fractions, one per iteration.
    pub steps: Vec<f64>,
    /// Max pointwise relative residual before each iteration and at exit.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("newton did not converge within {max_iter} iterations (best residual {best_residual:.3e})")]
    MaxIterations {
        max_iter: usize,
        best_residual: f64,
        best: Box<SolveOutcome>,
    },
    #[error("newton line search stalled at damping_min (residual {best_residual:.3e})")]
    LineSearchStalled {
        best_residual: f64,
        best: Box<SolveOutcome>,
    },
    #[error("non-finite values appeared in the newton iterate")]
    NonFinite { state: Box<ProfileState> },
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Equation(#[from] EquationError),
    #[error("invalid solver configuration")]
    InvalidConfig,
}

impl SolveError {
    /// The best iterate carried by a non-convergence error, if any.
    pub fn best_iterate(&self) -> Option<&SolveOutcome> {
        match self {
            SolveError::MaxIterations { best, .. } | SolveError::LineSearchStalled { best, .. } => {
                Some(best)
            }
            _ => None,
        }
    }
}

/// Max pointwise relative residual of a state.
pub fn residual_measure(state: &ProfileState, grid: &GridSpec) -> Result<f64, EquationError> {
    let res = assemble_residual(state, grid)?;
    Ok(measure_from(&res, state, grid))
}

fn measure_from(res: &[f64], state: &ProfileState, grid: &GridSpec) -> f64 {
    let layout = ResidualLayout::new(grid);
    let mut worst = res[layout.row_continuity()]
        .abs()
        .max(res[layout.row_zero_phase()].abs());
    for j in 0..=grid.n() {
        let q = state.q_mod_sq(j).sqrt();
        let w = state.w_mod_sq(j).sqrt();
        let den_q = if q < AMPLITUDE_FLOOR { 1.0 } else { q };
        let den_w = if w < AMPLITUDE_FLOOR { 1.0 } else { w };
        worst = worst
            .max(res[layout.idx_u(j)].abs() / den_q)
            .max(res[layout.idx_v(j)].abs() / den_q)
            .max(res[layout.idx_f(j)].abs() / den_w)
            .max(res[layout.idx_g(j)].abs() / den_w);
    }
    worst
}

fn apply_step(state: &ProfileState, delta: &[f64], s: f64, layout: &ResidualLayout) -> ProfileState {
    let mut next = state.clone();
    for j in 0..state.u.len() {
        next.u[j] += s * delta[layout.idx_u(j)];
        next.v[j] += s * delta[layout.idx_v(j)];
        next.f[j] += s * delta[layout.idx_f(j)];
        next.g[j] += s * delta[layout.idx_g(j)];
    }
    next.a += s * delta[layout.col_a()];
    next.b += s * delta[layout.col_b()];
    next
}

/// Damped Newton: x ← x + s·δ with J·δ = −residual, s halved from 1 until the
/// max pointwise relative residual decreases.
pub fn newton_solve(
    initial: &ProfileState,
    grid: &GridSpec,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolveError> {
    config.validate()?;
    initial.check_sized(grid).map_err(EquationError::from)?;
    if !initial.is_finite() {
        return Err(SolveError::NonFinite {
            state: Box::new(initial.clone()),
        });
    }
    let layout = ResidualLayout::new(grid);
    let mut state = initial.clone();
    let mut res = assemble_residual(&state, grid)?;
    let mut measure = measure_from(&res, &state, grid);
    let mut steps = Vec::new();
    let mut history = vec![measure];

    let outcome = |state: ProfileState, iterations, final_residual, steps: Vec<f64>, history: Vec<f64>| {
        let gap = (state.v[0] - state.g[0]).abs();
        SolveOutcome {
            state,
            iterations,
            final_residual,
            v0_g0_gap: gap,
            steps,
            residual_history: history,
        }
    };

    for iter in 0..=config.max_iter {
        if measure <= config.tol {
            return Ok(outcome(state, iter, measure, steps, history));
        }
        if iter == config.max_iter {
            let best_residual = measure;
            return Err(SolveError::MaxIterations {
                max_iter: config.max_iter,
                best_residual,
                best: Box::new(outcome(state, iter, measure, steps, history)),
            });
        }
        let jac = assemble_jacobian(&state, grid)?;
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let delta = jac.solve(&rhs, config.linear_refine)?;
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(SolveError::NonFinite {
                state: Box::new(state),
            });
        }

        let mut s = 1.0;
        let mut accepted = None;
        while s >= config.damping_min {
            let trial = apply_step(&state, &delta, s, &layout);
            // a must stay positive; treat violations like a failed step
            if trial.a > 0.0 && trial.is_finite() {
                if let Ok(trial_res) = assemble_residual(&trial, grid) {
                    let trial_measure = measure_from(&trial_res, &trial, grid);
                    if trial_measure.is_finite() && trial_measure < measure {
                        accepted = Some((trial, trial_res, trial_measure, s));
                        break;
                    }
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some((next, next_res, next_measure, s)) => {
                state = next;
                res = next_res;
                measure = next_measure;
                steps.push(s);
                history.push(measure);
            }
            None => {
                return Err(SolveError::LineSearchStalled {
                    best_residual: measure,
                    best: Box::new(outcome(state, iter, measure, steps, history)),
                });
            }
        }
    }
    unreachable!("loop always returns");
}
