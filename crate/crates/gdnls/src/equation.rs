//! Residual and Jacobian assembly for the coupled (Q, W) profile system.
//!
//! In the rescaled coordinate x = aξ the profile solves
//!
//!   a²Q_xx − Q + ia(Q/(2σ) + xQ_x) − iabQ_x + ia|Q|^{2σ}Q_x = 0,
//!
//! and the reflection W(x) = Q(−x) solves the same equation with the signs of
//! the bQ_x and |Q|^{2σ}Q_x terms flipped.  Both are discretized with
//! second-order centered differences on [0, x_max]; symmetry ghosts couple the
//! two subsystems at the origin and far-field Robin conditions eliminate the
//! virtual nodes at x_max.  Two closing rows (continuity u₀ = f₀ and zero
//! phase v₀ = 0) square the system against the extra unknowns (a, b).

use crate::banded::BorderedBandMatrix;
use crate::profile::{GridSpec, ProfileState};
use thiserror::Error;

/// Amplitude floor: below this, |Q|² is at the double-precision floor and the
/// nonlinear derivative contributions are taken as zero.
pub const AMPLITUDE_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum EquationError {
    #[error("robin coefficients are undefined at x = {x}, a = {a}")]
    RobinDomain { x: f64, a: f64 },
    #[error("the rescaled profile equation is singular at a = 0")]
    SingularA,
    #[error(transparent)]
    Profile(#[from] crate::profile::ProfileError),
}

/// Far-field Robin coefficients
/// α(x) = 1/(2σx) + b/(2σx²), β(x) = 1/(ax) + b/(ax²),
/// entering u_x + αu − βv = 0, v_x + βu + αv = 0 at the domain ends.
pub fn robin_coefficients(x: f64, a: f64, b: f64, sigma: f64) -> Result<(f64, f64), EquationError> {
    if x == 0.0 || a == 0.0 {
        return Err(EquationError::RobinDomain { x, a });
    }
    let alpha = 1.0 / (2.0 * sigma * x) + b / (2.0 * sigma * x * x);
    let beta = 1.0 / (a * x) + b / (a * x * x);
    Ok((alpha, beta))
}

/// Flat ordering of the discrete unknowns and residual rows.
///
/// Fields interleave per node as (u_j, v_j, f_j, g_j) to keep the band tight;
/// the parameter columns (a, b) come last, preceded by nothing else; the two
/// closing rows sit at the end of the row ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualLayout {
    n: usize,
}

impl ResidualLayout {
    pub fn new(grid: &GridSpec) -> Self {
        Self { n: grid.n() }
    }

    /// Number of unknowns and residual rows, 4(N+1) + 2.
    pub fn total(&self) -> usize {
        4 * (self.n + 1) + 2
    }

    /// Size of the banded core, 4(N+1).
    pub fn core(&self) -> usize {
        4 * (self.n + 1)
    }

    pub fn idx_u(&self, j: usize) -> usize {
        4 * j
    }
    pub fn idx_v(&self, j: usize) -> usize {
        4 * j + 1
    }
    pub fn idx_f(&self, j: usize) -> usize {
        4 * j + 2
    }
    pub fn idx_g(&self, j: usize) -> usize {
        4 * j + 3
    }

    /// Dense parameter columns.
    pub fn col_a(&self) -> usize {
        self.core()
    }
    pub fn col_b(&self) -> usize {
        self.core() + 1
    }

    /// Closing rows: continuity u₀ − f₀ = 0, then zero phase v₀ = 0.
    pub fn row_continuity(&self) -> usize {
        self.core()
    }
    pub fn row_zero_phase(&self) -> usize {
        self.core() + 1
    }

    /// Everything except the parameter columns and closing rows lies within
    /// |i − j| ≤ bandwidth.
    pub fn bandwidth(&self) -> usize {
        7
    }

    /// Exact one-sided reaches of the band (lower, upper).
    pub(crate) fn band_reaches(&self) -> (usize, usize) {
        (5, 7)
    }
}

/// Values entering one centered stencil after ghost/boundary elimination:
/// left and right neighbors for each of the four fields.
struct StencilValues {
    ul: f64,
    ur: f64,
    vl: f64,
    vr: f64,
    fl: f64,
    fr: f64,
    gl: f64,
    gr: f64,
}

struct RobinPair {
    alpha_p: f64,
    beta_p: f64,
    alpha_m: f64,
    beta_m: f64,
}

fn robin_pair(state: &ProfileState, grid: &GridSpec) -> Result<RobinPair, EquationError> {
    let (alpha_p, beta_p) = robin_coefficients(grid.x_max(), state.a, state.b, state.sigma)?;
    let (alpha_m, beta_m) = robin_coefficients(-grid.x_max(), state.a, state.b, state.sigma)?;
    Ok(RobinPair {
        alpha_p,
        beta_p,
        alpha_m,
        beta_m,
    })
}

fn stencil_values(state: &ProfileState, grid: &GridSpec, robin: &RobinPair, j: usize) -> StencilValues {
    let n = grid.n();
    let (u, v, f, g) = (&state.u, &state.v, &state.f, &state.g);
    if j == 0 {
        // ghosts: u₋₁ = u₁, v₋₁ = g₁, f₋₁ = f₁, g₋₁ = v₁
        StencilValues {
            ul: u[1],
            ur: u[1],
            vl: g[1],
            vr: v[1],
            fl: f[1],
            fr: f[1],
            gl: v[1],
            gr: g[1],
        }
    } else if j < n {
        StencilValues {
            ul: u[j - 1],
            ur: u[j + 1],
            vl: v[j - 1],
            vr: v[j + 1],
            fl: f[j - 1],
            fr: f[j + 1],
            gl: g[j - 1],
            gr: g[j + 1],
        }
    } else {
        // Robin elimination of the virtual node at x_max:
        //   u_{N+1} = u_{N−1} − 2Δx(α₊u_N − β₊v_N)
        //   v_{N+1} = v_{N−1} − 2Δx(β₊u_N + α₊v_N)
        // and with mirrored signs for the W fields at −x_max:
        //   f_{N+1} = f_{N−1} + 2Δx(α₋f_N − β₋g_N)
        //   g_{N+1} = g_{N−1} + 2Δx(β₋f_N + α₋g_N)
        let two_h = 2.0 * grid.dx();
        StencilValues {
            ul: u[n - 1],
            ur: u[n - 1] - two_h * (robin.alpha_p * u[n] - robin.beta_p * v[n]),
            vl: v[n - 1],
            vr: v[n - 1] - two_h * (robin.beta_p * u[n] + robin.alpha_p * v[n]),
            fl: f[n - 1],
            fr: f[n - 1] + two_h * (robin.alpha_m * f[n] - robin.beta_m * g[n]),
            gl: g[n - 1],
            gr: g[n - 1] + two_h * (robin.beta_m * f[n] + robin.alpha_m * g[n]),
        }
    }
}

/// Residual of the discrete system, ordered per `ResidualLayout`.
pub fn assemble_residual(state: &ProfileState, grid: &GridSpec) -> Result<Vec<f64>, EquationError> {
    state.check_sized(grid)?;
    if state.a == 0.0 {
        return Err(EquationError::SingularA);
    }
    let layout = ResidualLayout::new(grid);
    let robin = robin_pair(state, grid)?;
    let n = grid.n();
    let h = grid.dx();
    let (a, b, sigma) = (state.a, state.b, state.sigma);
    let c2 = a * a / (h * h);
    let inv_2h = 1.0 / (2.0 * h);
    let inv_2s = 1.0 / (2.0 * sigma);

    let mut res = vec![0.0; layout.total()];
    for j in 0..=n {
        let st = stencil_values(state, grid, &robin, j);
        let x = grid.x(j);
        let (u, v, f, g) = (state.u[j], state.v[j], state.f[j], state.g[j]);
        let pq = state.q_mod_sq(j).powf(sigma);
        let pw = state.w_mod_sq(j).powf(sigma);
        let adv_q = x - b + pq;
        let adv_w = x + b - pw;
        let du = (st.ur - st.ul) * inv_2h;
        let dv = (st.vr - st.vl) * inv_2h;
        let df = (st.fr - st.fl) * inv_2h;
        let dg = (st.gr - st.gl) * inv_2h;
        res[layout.idx_u(j)] = c2 * (st.ul - 2.0 * u + st.ur) - u - a * (v * inv_2s + adv_q * dv);
        res[layout.idx_v(j)] = c2 * (st.vl - 2.0 * v + st.vr) - v + a * (u * inv_2s + adv_q * du);
        res[layout.idx_f(j)] = c2 * (st.fl - 2.0 * f + st.fr) - f - a * (g * inv_2s + adv_w * dg);
        res[layout.idx_g(j)] = c2 * (st.gl - 2.0 * g + st.gr) - g + a * (f * inv_2s + adv_w * df);
    }
    res[layout.row_continuity()] = state.u[0] - state.f[0];
    res[layout.row_zero_phase()] = state.v[0];
    Ok(res)
}

/// One stencil slot expressed in actual unknowns: up to three (column, coeff)
/// pairs plus its sensitivity to the parameters a and b (nonzero only where
/// the Robin elimination enters).
#[derive(Clone, Copy, Default)]
struct Slot {
    cols: [(usize, f64); 3],
    len: usize,
    da: f64,
    db: f64,
}

impl Slot {
    fn one(col: usize) -> Self {
        Slot {
            cols: [(col, 1.0), (0, 0.0), (0, 0.0)],
            len: 1,
            da: 0.0,
            db: 0.0,
        }
    }

    fn push(mut self, col: usize, coeff: f64) -> Self {
        self.cols[self.len] = (col, coeff);
        self.len += 1;
        self
    }
}

/// Exact analytic Jacobian of `assemble_residual` with respect to all
/// 4(N+1) + 2 unknowns, as a bordered banded matrix.
pub fn assemble_jacobian(
    state: &ProfileState,
    grid: &GridSpec,
) -> Result<BorderedBandMatrix, EquationError> {
    state.check_sized(grid)?;
    if state.a == 0.0 {
        return Err(EquationError::SingularA);
    }
    let layout = ResidualLayout::new(grid);
    let robin = robin_pair(state, grid)?;
    let n = grid.n();
    let h = grid.dx();
    let x_max = grid.x_max();
    let (a, b, sigma) = (state.a, state.b, state.sigma);
    let c2 = a * a / (h * h);
    let inv_2h = 1.0 / (2.0 * h);
    let inv_2s = 1.0 / (2.0 * sigma);
    let two_h = 2.0 * h;

    // parameter sensitivities of the Robin coefficients (β ∝ 1/a; ∂α/∂b and
    // ∂β/∂b are even in x)
    let dalpha_db = 1.0 / (2.0 * sigma * x_max * x_max);
    let dbeta_db = 1.0 / (a * x_max * x_max);

    let (kl, ku) = layout.band_reaches();
    let mut jac = BorderedBandMatrix::new(layout.core(), kl, ku);

    for j in 0..=n {
        let st = stencil_values(state, grid, &robin, j);
        let x = grid.x(j);
        let (u, v, f, g) = (state.u[j], state.v[j], state.f[j], state.g[j]);
        let mq = state.q_mod_sq(j);
        let mw = state.w_mod_sq(j);
        let pq = mq.powf(sigma);
        let pw = mw.powf(sigma);
        // chain rule of |Q|^{2σ} through u and v, floored at the amplitude floor
        let (dpq_du, dpq_dv) = if mq < AMPLITUDE_FLOOR {
            (0.0, 0.0)
        } else {
            let c = sigma * mq.powf(sigma - 1.0);
            (2.0 * u * c, 2.0 * v * c)
        };
        let (dpw_df, dpw_dg) = if mw < AMPLITUDE_FLOOR {
            (0.0, 0.0)
        } else {
            let c = sigma * mw.powf(sigma - 1.0);
            (2.0 * f * c, 2.0 * g * c)
        };
        let adv_q = x - b + pq;
        let adv_w = x + b - pw;
        let du = (st.ur - st.ul) * inv_2h;
        let dv = (st.vr - st.vl) * inv_2h;
        let df = (st.fr - st.fl) * inv_2h;
        let dg = (st.gr - st.gl) * inv_2h;

        // stencil slots at this node
        let (ul, ur, vl, vr, fl, fr, gl, gr) = if j == 0 {
            (
                Slot::one(layout.idx_u(1)),
                Slot::one(layout.idx_u(1)),
                Slot::one(layout.idx_g(1)),
                Slot::one(layout.idx_v(1)),
                Slot::one(layout.idx_f(1)),
                Slot::one(layout.idx_f(1)),
                Slot::one(layout.idx_v(1)),
                Slot::one(layout.idx_g(1)),
            )
        } else if j < n {
            (
                Slot::one(layout.idx_u(j - 1)),
                Slot::one(layout.idx_u(j + 1)),
                Slot::one(layout.idx_v(j - 1)),
                Slot::one(layout.idx_v(j + 1)),
                Slot::one(layout.idx_f(j - 1)),
                Slot::one(layout.idx_f(j + 1)),
                Slot::one(layout.idx_g(j - 1)),
                Slot::one(layout.idx_g(j + 1)),
            )
        } else {
            let (iu, iv, if_, ig) = (layout.idx_u(n), layout.idx_v(n), layout.idx_f(n), layout.idx_g(n));
            let (pu, pv, pf, pg) = (
                layout.idx_u(n - 1),
                layout.idx_v(n - 1),
                layout.idx_f(n - 1),
                layout.idx_g(n - 1),
            );
            let mut ur = Slot::one(pu)
                .push(iu, -two_h * robin.alpha_p)
                .push(iv, two_h * robin.beta_p);
            ur.da = -two_h * (robin.beta_p / a) * v; // ∂β/∂a = −β/a
            ur.db = -two_h * (dalpha_db * u - dbeta_db * v);
            let mut vr = Slot::one(pv)
                .push(iu, -two_h * robin.beta_p)
                .push(iv, -two_h * robin.alpha_p);
            vr.da = two_h * (robin.beta_p / a) * u;
            vr.db = -two_h * (dbeta_db * u + dalpha_db * v);
            let mut fr = Slot::one(pf)
                .push(if_, two_h * robin.alpha_m)
                .push(ig, -two_h * robin.beta_m);
            fr.da = two_h * (robin.beta_m / a) * g;
            fr.db = two_h * (dalpha_db * f - dbeta_db * g);
            let mut gr = Slot::one(pg)
                .push(if_, two_h * robin.beta_m)
                .push(ig, two_h * robin.alpha_m);
            gr.da = -two_h * (robin.beta_m / a) * f;
            gr.db = two_h * (dbeta_db * f + dalpha_db * g);
            (
                Slot::one(pu),
                ur,
                Slot::one(pv),
                vr,
                Slot::one(pf),
                fr,
                Slot::one(pg),
                gr,
            )
        };
        let uc = Slot::one(layout.idx_u(j));
        let vc = Slot::one(layout.idx_v(j));
        let fc = Slot::one(layout.idx_f(j));
        let gc = Slot::one(layout.idx_g(j));

        // each row is a weighted combination of slot values; distribute the
        // weights through the slots and accumulate parameter sensitivities
        let mut fill = |row: usize, terms: &[(&Slot, f64)], da_explicit: f64, db_explicit: f64| {
            let mut da = da_explicit;
            let mut db = db_explicit;
            for &(slot, w) in terms {
                for &(col, coeff) in &slot.cols[..slot.len] {
                    jac.band_add(row, col, w * coeff);
                }
                da += w * slot.da;
                db += w * slot.db;
            }
            jac.set_border(row, da, db);
        };

        // u-row: c2(uL − 2u + uR) − u − a(v/(2σ) + advQ·Dv)
        fill(
            layout.idx_u(j),
            &[
                (&ul, c2),
                (&ur, c2),
                (&uc, -2.0 * c2 - 1.0 - a * dv * dpq_du),
                (&vc, -a * (inv_2s + dv * dpq_dv)),
                (&vl, a * adv_q * inv_2h),
                (&vr, -a * adv_q * inv_2h),
            ],
            (2.0 * a / (h * h)) * (st.ul - 2.0 * u + st.ur) - (v * inv_2s + adv_q * dv),
            a * dv,
        );
        // v-row: c2(vL − 2v + vR) − v + a(u/(2σ) + advQ·Du)
        fill(
            layout.idx_v(j),
            &[
                (&vl, c2),
                (&vr, c2),
                (&vc, -2.0 * c2 - 1.0 + a * du * dpq_dv),
                (&uc, a * (inv_2s + du * dpq_du)),
                (&ul, -a * adv_q * inv_2h),
                (&ur, a * adv_q * inv_2h),
            ],
            (2.0 * a / (h * h)) * (st.vl - 2.0 * v + st.vr) + (u * inv_2s + adv_q * du),
            -a * du,
        );
        // f-row: c2(fL − 2f + fR) − f − a(g/(2σ) + advW·Dg)
        fill(
            layout.idx_f(j),
            &[
                (&fl, c2),
                (&fr, c2),
                (&fc, -2.0 * c2 - 1.0 + a * dg * dpw_df),
                (&gc, -a * (inv_2s - dg * dpw_dg)),
                (&gl, a * adv_w * inv_2h),
                (&gr, -a * adv_w * inv_2h),
            ],
            (2.0 * a / (h * h)) * (st.fl - 2.0 * f + st.fr) - (g * inv_2s + adv_w * dg),
            -a * dg,
        );
        // g-row: c2(gL − 2g + gR) − g + a(f/(2σ) + advW·Df)
        fill(
            layout.idx_g(j),
            &[
                (&gl, c2),
                (&gr, c2),
                (&gc, -2.0 * c2 - 1.0 - a * df * dpw_dg),
                (&fc, a * (inv_2s - df * dpw_df)),
                (&fl, -a * adv_w * inv_2h),
                (&fr, a * adv_w * inv_2h),
            ],
            (2.0 * a / (h * h)) * (st.gl - 2.0 * g + st.gr) + (f * inv_2s + adv_w * df),
            a * df,
        );
    }

    jac.set_closing_row(
        0,
        vec![(layout.idx_u(0), 1.0), (layout.idx_f(0), -1.0)],
        [0.0, 0.0],
    );
    jac.set_closing_row(1, vec![(layout.idx_v(0), 1.0)], [0.0, 0.0]);
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_grid() -> GridSpec {
        GridSpec::new(120, 25.0).unwrap()
    }

    fn random_state(grid: &GridSpec, seed: u64) -> ProfileState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = ProfileState::zeros(grid, 1.6, 0.8, 1.1);
        for arr in [&mut state.u, &mut state.v, &mut state.f, &mut state.g] {
            for x in arr.iter_mut() {
                *x = rng.gen_range(-0.8..0.8);
            }
        }
        state
    }

    #[test]
    fn robin_coefficients_plugin_values() {
        let (alpha, beta) = robin_coefficients(25.0, 1.0, 2.0, 1.0).unwrap();
        assert!((alpha - 0.0216).abs() < 1e-15);
        assert!((beta - 0.0432).abs() < 1e-15);
        let (alpha, beta) = robin_coefficients(25.0, 1.0, 0.0, 1.0).unwrap();
        assert!((alpha - 0.02).abs() < 1e-15);
        assert!((beta - 0.04).abs() < 1e-15);
        assert!(robin_coefficients(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(robin_coefficients(25.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn robin_conditions_annihilate_the_tail_form_to_third_order() {
        // Q(ξ) = A|ξ|^{−1/(2σ)}(1 + b/(2aσξ)) e^{iθ}, θ = −(ln|ξ|)/a + b/(a²ξ)
        // satisfies the Robin operator with residual O(x⁻³) relative to |Q|/x.
        let (a, b, sigma, amp) = (0.9, 1.3, 1.4, 0.7);
        let q = |x: f64| {
            let xi = x / a;
            let r = amp * xi.abs().powf(-1.0 / (2.0 * sigma)) * (1.0 + b / (2.0 * a * sigma * xi));
            let theta = -xi.abs().ln() / a + b / (a * a * xi);
            (r * theta.cos(), r * theta.sin())
        };
        let mut errs = Vec::new();
        for x in [10.0, 20.0, 40.0] {
            let (alpha, beta) = robin_coefficients(x, a, b, sigma).unwrap();
            let hx = 1e-4;
            let (u0, v0) = q(x);
            let (up, vp) = q(x + hx);
            let (um, vm) = q(x - hx);
            let ux = (up - um) / (2.0 * hx);
            let vx = (vp - vm) / (2.0 * hx);
            let r1 = ux + alpha * u0 - beta * v0;
            let r2 = vx + beta * u0 + alpha * v0;
            // normalize against the size of the terms in the operator
            let scale = (u0 * u0 + v0 * v0).sqrt() / x;
            errs.push((r1.hypot(r2)) / scale);
        }
        // O(x⁻³) in the operator ⇒ residual/(|Q|/x) shrinks like x⁻²
        assert!(errs[1] < errs[0] / 2.5, "{errs:?}");
        assert!(errs[2] < errs[1] / 2.5, "{errs:?}");
    }

    #[test]
    fn zero_state_has_zero_residual() {
        let grid = test_grid();
        let state = ProfileState::zeros(&grid, 1.5, 0.7, 1.2);
        let res = assemble_residual(&state, &grid).unwrap();
        assert!(res.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn zero_a_is_singular() {
        let grid = test_grid();
        let state = ProfileState::zeros(&grid, 1.5, 0.0, 1.2);
        assert!(matches!(
            assemble_residual(&state, &grid),
            Err(EquationError::SingularA)
        ));
    }

    #[test]
    fn size_mismatch_is_an_argument_error() {
        let grid = test_grid();
        let mut state = ProfileState::zeros(&grid, 1.5, 0.7, 1.2);
        state.v.pop();
        assert!(matches!(
            assemble_residual(&state, &grid),
            Err(EquationError::Profile(_))
        ));
    }

    #[test]
    fn interior_rows_match_a_complex_arithmetic_oracle() {
        // Direct transcription of the continuous equations with complex
        // arithmetic, as an independent check of every sign: the W system is
        // the Q system with b ↦ −b and the nonlinear advection conjugated.
        use num_complex::Complex64;
        let grid = test_grid();
        let state = random_state(&grid, 5);
        let layout = ResidualLayout::new(&grid);
        let res = assemble_residual(&state, &grid).unwrap();
        let h = grid.dx();
        let (a, b, sigma) = (state.a, state.b, state.sigma);
        let i = Complex64::new(0.0, 1.0);
        for j in [1usize, 17, 60, grid.n() - 1] {
            let q = |k: usize| Complex64::new(state.u[k], state.v[k]);
            let w = |k: usize| Complex64::new(state.f[k], state.g[k]);
            let x = grid.x(j);
            let lap_q = (q(j - 1) - 2.0 * q(j) + q(j + 1)) * (a * a / (h * h));
            let dq = (q(j + 1) - q(j - 1)) / (2.0 * h);
            let res_q = lap_q - q(j)
                + i * a * (q(j) / (2.0 * sigma) + x * dq)
                - i * a * b * dq
                + i * a * q(j).norm_sqr().powf(sigma) * dq;
            assert!((res[layout.idx_u(j)] - res_q.re).abs() < 1e-12, "u row {j}");
            assert!((res[layout.idx_v(j)] - res_q.im).abs() < 1e-12, "v row {j}");
            let lap_w = (w(j - 1) - 2.0 * w(j) + w(j + 1)) * (a * a / (h * h));
            let dw = (w(j + 1) - w(j - 1)) / (2.0 * h);
            let res_w = lap_w - w(j)
                + i * a * (w(j) / (2.0 * sigma) + x * dw)
                + i * a * b * dw
                - i * a * w(j).norm_sqr().powf(sigma) * dw;
            assert!((res[layout.idx_f(j)] - res_w.re).abs() < 1e-12, "f row {j}");
            assert!((res[layout.idx_g(j)] - res_w.im).abs() < 1e-12, "g row {j}");
        }
    }

    #[test]
    fn manufactured_solution_residual_converges_at_second_order() {
        // Inject a smooth analytic (Q, W) pair; the discrete residual minus
        // the continuous operator (evaluated with 6th-order differences on a
        // much finer stencil) must vanish at O(Δx²) on interior nodes.
        let (sigma, a, b) = (1.35, 0.7, 1.2);
        let qu = |x: f64| (-(x / 6.0) * (x / 6.0)).exp() * (0.4 * x).cos();
        let qv = |x: f64| 0.6 * (-(x / 7.0) * (x / 7.0)).exp() * (0.3 * x).sin();
        let wf = |x: f64| 0.8 * (-(x / 5.0) * (x / 5.0)).exp() * (0.2 * x + 0.3).cos();
        let wg = |x: f64| 0.5 * (-(x / 8.0) * (x / 8.0)).exp() * (0.45 * x).sin();
        // continuous residual of the Q (sign s = +1) or W (s = −1) equation
        let continuous = |fr: &dyn Fn(f64) -> f64, fi: &dyn Fn(f64) -> f64, s: f64, x: f64| {
            let hd = 1e-3;
            let d1 = |f: &dyn Fn(f64) -> f64| {
                (-f(x + 3.0 * hd) + 9.0 * f(x + 2.0 * hd) - 45.0 * f(x + hd)
                    + 45.0 * f(x - hd)
                    - 9.0 * f(x - 2.0 * hd)
                    + f(x - 3.0 * hd))
                    / (-60.0 * hd)
            };
            let d2 = |f: &dyn Fn(f64) -> f64| {
                (2.0 * f(x + 3.0 * hd) - 27.0 * f(x + 2.0 * hd) + 270.0 * f(x + hd)
                    - 490.0 * f(x)
                    + 270.0 * f(x - hd)
                    - 27.0 * f(x - 2.0 * hd)
                    + 2.0 * f(x - 3.0 * hd))
                    / (180.0 * hd * hd)
            };
            let (u, v) = (fr(x), fi(x));
            let (ux, vx) = (d1(fr), d1(fi));
            let (uxx, vxx) = (d2(fr), d2(fi));
            let adv = x - s * b + s * (u * u + v * v).powf(sigma);
            let re = a * a * uxx - u - a * (v / (2.0 * sigma) + adv * vx);
            let im = a * a * vxx - v + a * (u / (2.0 * sigma) + adv * ux);
            (re, im)
        };
        let mut sups = Vec::new();
        for n in [400usize, 800] {
            let grid = GridSpec::new(n, 25.0).unwrap();
            let mut state = ProfileState::zeros(&grid, sigma, a, b);
            for j in 0..=n {
                let x = grid.x(j);
                state.u[j] = qu(x);
                state.v[j] = qv(x);
                state.f[j] = wf(x);
                state.g[j] = wg(x);
            }
            let layout = ResidualLayout::new(&grid);
            let res = assemble_residual(&state, &grid).unwrap();
            let mut sup = 0.0_f64;
            for j in 1..n {
                let x = grid.x(j);
                let (re_q, im_q) = continuous(&qu, &qv, 1.0, x);
                let (re_w, im_w) = continuous(&wf, &wg, -1.0, x);
                sup = sup
                    .max((res[layout.idx_u(j)] - re_q).abs())
                    .max((res[layout.idx_v(j)] - im_q).abs())
                    .max((res[layout.idx_f(j)] - re_w).abs())
                    .max((res[layout.idx_g(j)] - im_w).abs());
            }
            sups.push(sup);
        }
        let ratio = sups[0] / sups[1];
        assert!(
            (3.4..4.6).contains(&ratio),
            "manufactured-solution ratio {ratio}, sups {sups:?}"
        );
    }

    #[test]
    fn jacobian_matches_directional_finite_differences() {
        let grid = test_grid();
        let layout = ResidualLayout::new(&grid);
        for seed in [11u64, 12, 13] {
            let state = random_state(&grid, seed);
            let jac = assemble_jacobian(&state, &grid).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let delta: Vec<f64> = (0..layout.total()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let perturb = |s: f64| {
                let mut p = state.clone();
                for j in 0..=grid.n() {
                    p.u[j] += s * delta[layout.idx_u(j)];
                    p.v[j] += s * delta[layout.idx_v(j)];
                    p.f[j] += s * delta[layout.idx_f(j)];
                    p.g[j] += s * delta[layout.idx_g(j)];
                }
                p.a += s * delta[layout.col_a()];
                p.b += s * delta[layout.col_b()];
                assemble_residual(&p, &grid).unwrap()
            };
            let plus = perturb(h);
            let minus = perturb(-h);
            let jd = jac.matvec(&delta);
            let mut num = 0.0_f64;
            let mut den = 0.0_f64;
            for i in 0..layout.total() {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                num = num.max((fd - jd[i]).abs());
                den = den.max(jd[i].abs());
            }
            assert!(num <= 1e-6 * den, "seed {seed}: fd gap {num} vs scale {den}");
        }
    }

    #[test]
    fn jacobian_sparsity_is_within_the_declared_band() {
        let grid = test_grid();
        let layout = ResidualLayout::new(&grid);
        let state = random_state(&grid, 21);
        let jac = assemble_jacobian(&state, &grid).unwrap();
        let bound = layout.total() * (2 * layout.bandwidth() + 1) + 2 * layout.total();
        assert!(jac.nnz() <= bound, "nnz {} > bound {bound}", jac.nnz());
    }

    #[test]
    fn jacobian_at_zero_state_is_the_linearization() {
        // at Q = 0 the u-row reduces to the discretization of
        // a²∂_xx − 1 acting on u plus −a(1/(2σ) + x∂_x − b∂_x) acting on v
        let grid = test_grid();
        let (sigma, a, b) = (1.7, 0.9, 1.3);
        let state = ProfileState::zeros(&grid, sigma, a, b);
        let jac = assemble_jacobian(&state, &grid).unwrap();
        let layout = ResidualLayout::new(&grid);
        let h = grid.dx();
        let c2 = a * a / (h * h);
        let j = grid.n() / 2;
        let x = grid.x(j);
        assert!((jac.band_get(layout.idx_u(j), layout.idx_u(j)) - (-2.0 * c2 - 1.0)).abs() < 1e-12);
        assert!((jac.band_get(layout.idx_u(j), layout.idx_u(j + 1)) - c2).abs() < 1e-12);
        assert!(
            (jac.band_get(layout.idx_u(j), layout.idx_v(j + 1)) - (-a * (x - b) / (2.0 * h))).abs()
                < 1e-12
        );
        assert!(
            (jac.band_get(layout.idx_u(j), layout.idx_v(j)) - (-a / (2.0 * sigma))).abs() < 1e-12
        );
    }
}
