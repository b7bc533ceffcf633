//! Continuation of the profile family in σ, with adaptive step halving, and
//! construction of initial guesses including the σ = 2 bootstrap.

use crate::fitting::CubicSpline;
use crate::newton::{newton_solve, SolveError, SolveOutcome, SolverConfig};
use crate::profile::{GridSpec, ProfileState};
use crate::quad::cumulative_trapezoid_uniform;
use crate::solitons::{bright, SolitonParams};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationPlan {
    pub sigma_start: f64,
    pub sigma_end: f64,
    /// Initial σ decrement.
    pub dsigma0: f64,
    /// Smallest σ decrement before the sweep gives up.
    pub dsigma_min: f64,
    pub grid: GridSpec,
    pub solver: SolverConfig,
}

impl ContinuationPlan {
    pub fn new(grid: GridSpec, sigma_start: f64, sigma_end: f64) -> Self {
        Self {
            sigma_start,
            sigma_end,
            dsigma0: 0.2,
            dsigma_min: 0.00078125,
            grid,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ContinuationError> {
        if self.sigma_start >= self.sigma_end
            && self.sigma_end > 1.0
            && self.dsigma0 >= self.dsigma_min
            && self.dsigma_min > 0.0
        {
            Ok(())
        } else {
            Err(ContinuationError::InvalidPlan)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationEntry {
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub v0_g0_gap: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ContinuationRecord {
    pub entries: Vec<ContinuationEntry>,
    /// Set when Δσ underflowed before reaching sigma_end.
    pub truncated: bool,
}

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("invalid continuation plan")]
    InvalidPlan,
    #[error("initial guess parameters out of range: a0 = {a0}, b0 = {b0}")]
    InvalidGuess { a0: f64, b0: f64 },
    #[error("starting solution did not converge at sigma = {sigma}: {source}")]
    StartNotConverged { sigma: f64, source: Box<SolveError> },
    #[error("non-finite values during continuation at sigma = {sigma}")]
    NonFinite { sigma: f64, state: Box<ProfileState> },
    #[error("bootstrap sweep found no nontrivial solution at sigma = 2")]
    BootstrapFailed,
    #[error("profiles have different x_max: {0} vs {1}")]
    DomainMismatch(f64, f64),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("sink failed: {0}")]
    Sink(#[from] std::io::Error),
    #[error(transparent)]
    Fit(#[from] crate::fitting::FitError),
}

/// Soliton-phase ansatz at (a0, b0):
/// Q(ξ) = B_σ(ξ)·exp{−i(a₀ξ²/4 − b₀ξ/2 + (1/(2σ+2))∫₀^ξ B_σ^{2σ})}
/// sampled on x = a₀ξ, with W by reflection.  The phase integral is a
/// cumulative trapezoid.
pub fn soliton_phase_guess(
    grid: &GridSpec,
    sigma: f64,
    a0: f64,
    b0: f64,
) -> Result<ProfileState, ContinuationError> {
    if !(a0 > 0.0) || !(b0.abs() < 2.0) {
        return Err(ContinuationError::InvalidGuess { a0, b0 });
    }
    let params =
        SolitonParams::new(sigma, b0).map_err(|_| ContinuationError::InvalidGuess { a0, b0 })?;
    let n = grid.n();
    let dxi = grid.dx() / a0;
    let amps: Vec<f64> = (0..=n)
        .map(|j| bright(&params, j as f64 * dxi).expect("|b0| < 2"))
        .collect();
    let dens: Vec<f64> = amps.iter().map(|r| r.powf(2.0 * sigma)).collect();
    let phase_int = cumulative_trapezoid_uniform(dxi, &dens);

    let mut state = ProfileState::zeros(grid, sigma, a0, b0);
    let coeff = 1.0 / (2.0 * sigma + 2.0);
    for j in 0..=n {
        let xi = j as f64 * dxi;
        let quad_part = a0 * xi * xi / 4.0;
        // positive wing: ξ_j ≥ 0; negative wing by evenness of B and oddness
        // of the phase integral
        let phi_pos = quad_part - b0 * xi / 2.0 + coeff * phase_int[j];
        let phi_neg = quad_part + b0 * xi / 2.0 - coeff * phase_int[j];
        state.u[j] = amps[j] * phi_pos.cos();
        state.v[j] = -amps[j] * phi_pos.sin();
        state.f[j] = amps[j] * phi_neg.cos();
        state.g[j] = -amps[j] * phi_neg.sin();
    }
    Ok(state)
}

/// The σ = 2 ansatz of `soliton_phase_guess`.
pub fn initial_guess_sigma2(
    grid: &GridSpec,
    a0: f64,
    b0: f64,
) -> Result<ProfileState, ContinuationError> {
    soliton_phase_guess(grid, 2.0, a0, b0)
}

/// Deterministic (a0, b0) sweep seeding Newton at σ = 2 on a coarse mesh:
/// a0 over a log grid in [0.1, 1.5], b0 over a linear grid in [0, 1.9].
/// Returns the first converged nontrivial solution.
pub fn bootstrap_sigma2(
    grid: &GridSpec,
    config: &SolverConfig,
) -> Result<SolveOutcome, ContinuationError> {
    let na = 12;
    let nb = 8;
    for ia in 0..na {
        let t = ia as f64 / (na - 1) as f64;
        let a0 = 0.1 * (1.5_f64 / 0.1).powf(t);
        for ib in 0..nb {
            let b0 = 1.9 * ib as f64 / (nb - 1) as f64;
            let Ok(guess) = initial_guess_sigma2(grid, a0, b0) else {
                continue;
            };
            match newton_solve(&guess, grid, config) {
                Ok(out) if out.state.u[0].abs() > 0.1 && out.state.a > 0.0 => {
                    return Ok(out);
                }
                _ => continue,
            }
        }
    }
    Err(ContinuationError::BootstrapFailed)
}

/// Transfer a state to a new resolution by natural cubic interpolation of
/// (u, v, f, g), carrying (σ, a, b) over. Both grids must share x_max.
pub fn resample(
    state: &ProfileState,
    grid: &GridSpec,
    target: &GridSpec,
) -> Result<ProfileState, ContinuationError> {
    if grid.x_max() != target.x_max() {
        return Err(ContinuationError::DomainMismatch(
            grid.x_max(),
            target.x_max(),
        ));
    }
    if grid.n() == target.n() {
        return Ok(state.clone());
    }
    let xs: Vec<f64> = (0..=grid.n()).map(|j| grid.x(j)).collect();
    let mut out = ProfileState::zeros(target, state.sigma, state.a, state.b);
    for (src, dst) in [
        (&state.u, &mut out.u),
        (&state.v, &mut out.v),
        (&state.f, &mut out.f),
        (&state.g, &mut out.g),
    ] {
        let knots: Vec<(f64, f64)> = xs.iter().copied().zip(src.iter().copied()).collect();
        let spline = CubicSpline::new(&knots)?;
        for (j, slot) in dst.iter_mut().enumerate() {
            let x = target.x(j).min(grid.x_max());
            *slot = spline.eval(x)?;
        }
    }
    Ok(out)
}

/// March σ downward from a converged start, seeding each Newton solve with
/// the previous solution and halving Δσ on failure.  Every converged solution
/// is reported to `sink` before the next step.
pub fn continue_family(
    plan: &ContinuationPlan,
    start: &ProfileState,
    mut sink: impl FnMut(&ProfileState, &SolveOutcome) -> std::io::Result<()>,
) -> Result<ContinuationRecord, ContinuationError> {
    plan.validate()?;
    let mut record = ContinuationRecord::default();

    let start_out = match newton_solve(start, &plan.grid, &plan.solver) {
        Ok(out) => out,
        Err(e) => {
            return Err(ContinuationError::StartNotConverged {
                sigma: start.sigma,
                source: Box::new(e),
            })
        }
    };
    let push = |record: &mut ContinuationRecord, out: &SolveOutcome| {
        record.entries.push(ContinuationEntry {
            sigma: out.state.sigma,
            a: out.state.a,
            b: out.state.b,
            iterations: out.iterations,
            final_residual: out.final_residual,
            v0_g0_gap: out.v0_g0_gap,
        });
    };
    sink(&start_out.state, &start_out)?;
    push(&mut record, &start_out);

    let mut current = start_out.state;
    let mut dsigma = plan.dsigma0;
    while current.sigma > plan.sigma_end + 1e-12 {
        if dsigma < plan.dsigma_min {
            record.truncated = true;
            break;
        }
        let target = (current.sigma - dsigma).max(plan.sigma_end);
        let mut guess = current.clone();
        guess.sigma = target;
        match newton_solve(&guess, &plan.grid, &plan.solver) {
            Ok(out) => {
                sink(&out.state, &out)?;
                push(&mut record, &out);
                current = out.state;
            }
            Err(SolveError::NonFinite { state }) => {
                return Err(ContinuationError::NonFinite {
                    sigma: target,
                    state,
                });
            }
            Err(_) => {
                dsigma *= 0.5;
            }
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guess_has_zero_phase_and_positive_origin() {
        let grid = GridSpec::new(400, 25.0).unwrap();
        let state = soliton_phase_guess(&grid, 2.0, 0.5, 1.0).unwrap();
        assert_eq!(state.v[0], 0.0);
        assert!(state.u[0] > 0.0);
        assert_eq!(state.u[0], state.f[0]);
        // |Q| equals B_σ everywhere
        let params = SolitonParams::new(2.0, 1.0).unwrap();
        for j in (0..=400).step_by(37) {
            let xi = grid.x(j) / 0.5;
            let b = bright(&params, xi).unwrap();
            assert!(
                (state.q_mod_sq(j).sqrt() - b).abs() <= 1e-13 * (1.0 + b),
                "node {j}"
            );
            assert!((state.w_mod_sq(j).sqrt() - b).abs() <= 1e-13 * (1.0 + b));
        }
    }

    #[test]
    fn guess_rejects_bad_parameters() {
        let grid = GridSpec::new(400, 25.0).unwrap();
        assert!(matches!(
            soliton_phase_guess(&grid, 2.0, -0.5, 1.0),
            Err(ContinuationError::InvalidGuess { .. })
        ));
        assert!(matches!(
            soliton_phase_guess(&grid, 2.0, 0.5, 2.0),
            Err(ContinuationError::InvalidGuess { .. })
        ));
    }

    #[test]
    fn resample_preserves_resolved_fields() {
        // the quadratic phase has wavelength ~ 4πa/x_max at the far end;
        // the coarse grid here resolves it with ~50 nodes per period
        let coarse = GridSpec::new(3200, 25.0).unwrap();
        let fine = GridSpec::new(6401, 25.0).unwrap();
        let state = soliton_phase_guess(&coarse, 1.5, 1.0, 0.5).unwrap();
        let promoted = resample(&state, &coarse, &fine).unwrap();
        assert_eq!(promoted.u.len(), 6402);
        assert_eq!(promoted.a, state.a);
        let direct = soliton_phase_guess(&fine, 1.5, 1.0, 0.5).unwrap();
        let max_gap = promoted
            .u
            .iter()
            .zip(&direct.u)
            .fold(0.0_f64, |m, (p, d)| m.max((p - d).abs()));
        assert!(max_gap < 1e-4, "max gap {max_gap}");
    }

    #[test]
    fn resample_requires_matching_domains() {
        let g1 = GridSpec::new(200, 25.0).unwrap();
        let g2 = GridSpec::new(200, 20.0).unwrap();
        let state = ProfileState::zeros(&g1, 1.5, 0.5, 1.0);
        assert!(matches!(
            resample(&state, &g1, &g2),
            Err(ContinuationError::DomainMismatch(..))
        ));
    }

    #[test]
    fn single_point_plan_records_only_the_start() {
        let grid = GridSpec::new(150, 25.0).unwrap();
        let mut plan = ContinuationPlan::new(grid, 1.5, 1.5);
        plan.solver = SolverConfig::default();
        // the zero state is an exact solution, so the "family" is trivial
        let start = ProfileState::zeros(&grid, 1.5, 0.7, 1.0);
        let record = continue_family(&plan, &start, |_, _| Ok(())).unwrap();
        assert_eq!(record.entries.len(), 1);
        assert_eq!(record.entries[0].sigma, 1.5);
        assert!(!record.truncated);
    }
}
