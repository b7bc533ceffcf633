//! Derived quantities of a solved profile: conserved functionals,
//! phase–amplitude decomposition, tail coefficients, soliton mass integrals,
//! turning points, momentum-region decomposition, asymptotic-relation checks,
//! Richardson extrapolation, and local blow-up reconstruction.
//!
//! Everything here works in the original coordinate ξ = x/a on the full line
//! [−x_max/a, x_max/a], assembled from the half-domain pair (Q, W).

pub mod expansion;

use crate::equation::AMPLITUDE_FLOOR;
use crate::fitting::CubicSpline;
use crate::io::{ParameterTable, TableRow};
use crate::profile::{GridSpec, ProfileState};
use crate::quad::{trapezoid_uniform, trapezoid_uniform_to};
use crate::solitons::{bright, lump, SolitonParams};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("analysis requires a > 0, got a = {0}")]
    NonPositiveA(f64),
    #[error("amplitude at the floating floor inside the active region (node {0})")]
    DegeneratePhase(usize),
    #[error("phase increment exceeds the unwrap budget at node {node}: |Δarg| = {delta:.3}")]
    PhaseUnderResolved { node: usize, delta: f64 },
    #[error("tail-fit window on the {wing} wing has {got} usable nodes, need {need}")]
    TailWindowTooSmall {
        wing: &'static str,
        got: usize,
        need: usize,
    },
    #[error("richardson inputs must have fine N = 2 × coarse N, got {coarse} and {fine}")]
    ResolutionMismatch { coarse: usize, fine: usize },
    #[error("richardson inputs have non-overlapping sigma ranges")]
    NoOverlap,
    #[error("blow-up reconstruction requires t < t_star")]
    TimeBeyondBlowup,
    #[error("reconstruction argument {0} outside the sampled profile range")]
    Extrapolation(f64),
    #[error(transparent)]
    Profile(#[from] crate::profile::ProfileError),
    #[error(transparent)]
    Fit(#[from] crate::fitting::FitError),
}

/// Full-line samples of the profile: ξ_k = (k − N)·Δξ for k = 0..2N, with the
/// negative wing taken from W(x) = Q(−x).
pub fn full_line(state: &ProfileState, grid: &GridSpec) -> (Vec<f64>, Vec<Complex64>) {
    let n = grid.n();
    let dxi = grid.dx() / state.a;
    let mut xi = Vec::with_capacity(2 * n + 1);
    let mut q = Vec::with_capacity(2 * n + 1);
    for k in 0..=2 * n {
        xi.push((k as f64 - n as f64) * dxi);
        if k < n {
            let j = n - k;
            q.push(Complex64::new(state.f[j], state.g[j]));
        } else {
            let j = k - n;
            q.push(Complex64::new(state.u[j], state.v[j]));
        }
    }
    (xi, q)
}

/// Centered first derivative on a uniform grid, one-sided second order at the
/// two ends.
fn derivative(values: &[Complex64], dxi: f64) -> Vec<Complex64> {
    let m = values.len();
    let mut d = Vec::with_capacity(m);
    let inv = 1.0 / (2.0 * dxi);
    d.push((-3.0 * values[0] + 4.0 * values[1] - values[2]) * inv);
    for k in 1..m - 1 {
        d.push((values[k + 1] - values[k - 1]) * inv);
    }
    d.push((3.0 * values[m - 1] - 4.0 * values[m - 2] + values[m - 3]) * inv);
    d
}

/// Least-squares tail coefficient on one wing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub value: f64,
    /// Set when fewer than 100 window nodes sit above the floating floor.
    pub at_floor: bool,
    /// RMS misfit over the usable window nodes.
    pub rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCoefficients {
    pub a_plus: TailFit,
    pub a_minus: TailFit,
}

/// Fit |Q| against A_±|ξ|^{−1/(2σ)}(1 + b/(2aσξ)) over the window
/// 0.6·x_max ≤ |x| ≤ 0.9·x_max on each wing (the model is linear in A_±).
pub fn tail_coefficients(
    state: &ProfileState,
    grid: &GridSpec,
) -> Result<TailCoefficients, AnalysisError> {
    state.check_sized(grid)?;
    if !(state.a > 0.0) {
        return Err(AnalysisError::NonPositiveA(state.a));
    }
    let n = grid.n();
    let (a, b, sigma) = (state.a, state.b, state.sigma);
    let j_lo = (0.6 * n as f64).ceil() as usize;
    let j_hi = (0.9 * n as f64).floor() as usize;
    let fit_wing = |amps: &dyn Fn(usize) -> f64, sign: f64| -> TailFit {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut used = 0usize;
        for j in j_lo..=j_hi {
            let amp = amps(j);
            if amp < AMPLITUDE_FLOOR {
                continue;
            }
            let xi = sign * grid.x(j) / a;
            let model = xi.abs().powf(-1.0 / (2.0 * sigma)) * (1.0 + b / (2.0 * a * sigma * xi));
            num += model * amp;
            den += model * model;
            used += 1;
        }
        let value = if den > 0.0 { num / den } else { 0.0 };
        let mut rss = 0.0;
        for j in j_lo..=j_hi {
            let amp = amps(j);
            if amp < AMPLITUDE_FLOOR {
                continue;
            }
            let xi = sign * grid.x(j) / a;
            let model = xi.abs().powf(-1.0 / (2.0 * sigma)) * (1.0 + b / (2.0 * a * sigma * xi));
            rss += (amp - value * model) * (amp - value * model);
        }
        TailFit {
            value,
            at_floor: used < 100,
            rms: if used > 0 { (rss / used as f64).sqrt() } else { 0.0 },
        }
    };
    let plus = fit_wing(&|j| state.q_mod_sq(j).sqrt(), 1.0);
    let minus = fit_wing(&|j| state.w_mod_sq(j).sqrt(), -1.0);
    Ok(TailCoefficients {
        a_plus: plus,
        a_minus: minus,
    })
}

/// Conserved functionals of a profile on the truncated domain, plus analytic
/// tail estimates for the mass lost beyond ±x_max/a.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functionals {
    /// H = ∫ |Q_ξ|² + (1/(σ+1))|Q|^{2σ} Im(Q̄Q_ξ) dξ over the domain.
    pub h: f64,
    /// I = Im ∫ Q̄Q_ξ dξ over the domain.
    pub i: f64,
    /// ∫ |Q_ξ|² dξ, the scale against which |H| and |I| are judged.
    pub grad_sq: f64,
    /// Estimated contribution of the truncated tails to H.
    pub h_tail: f64,
    /// Estimated contribution of the truncated tails to I.
    pub i_tail: f64,
    pub tails: TailCoefficients,
}

/// Energy and momentum by trapezoid quadrature with centered-difference
/// derivatives, in the original ξ variable over both wings.
pub fn functionals(state: &ProfileState, grid: &GridSpec) -> Result<Functionals, AnalysisError> {
    state.check_sized(grid)?;
    if !(state.a > 0.0) {
        return Err(AnalysisError::NonPositiveA(state.a));
    }
    let (a, b, sigma) = (state.a, state.b, state.sigma);
    let dxi = grid.dx() / a;
    let (_, q) = full_line(state, grid);
    let dq = derivative(&q, dxi);
    let m = q.len();
    let mut h_dens = Vec::with_capacity(m);
    let mut i_dens = Vec::with_capacity(m);
    let mut g_dens = Vec::with_capacity(m);
    for k in 0..m {
        let grad = dq[k].norm_sqr();
        let imqq = q[k].re * dq[k].im - q[k].im * dq[k].re;
        let amp2s = q[k].norm_sqr().powf(sigma);
        g_dens.push(grad);
        i_dens.push(imqq);
        h_dens.push(grad + amp2s * imqq / (sigma + 1.0));
    }
    let h = trapezoid_uniform(dxi, &h_dens);
    let i = trapezoid_uniform(dxi, &i_dens);
    let grad_sq = trapezoid_uniform(dxi, &g_dens);

    // analytic tails from the far-field form
    //   |Q| ≈ A_±|ξ|^{−1/(2σ)}(1 + b/(2aσξ)), θ_ξ ≈ −1/(aξ) − b/(a²ξ²):
    // the leading I-tail densities are ∓(A_±²/a)(s^{−1−1/σ} ± (b/a)(1+1/σ)s^{−2−1/σ})
    // in s = |ξ|, and the H-tail densities A_±²(1/a² + 1/(4σ²))s^{−2−1/σ}
    // ∓ A_±^{2σ+2}/(a(σ+1))·s^{−2−1/σ}.
    let tails = tail_coefficients(state, grid)?;
    let x_big = grid.x_max() / a;
    let ap2 = if tails.a_plus.at_floor { 0.0 } else { tails.a_plus.value.powi(2) };
    let am2 = tails.a_minus.value.powi(2);
    let lead = sigma * x_big.powf(-1.0 / sigma);
    let corr = (b / a) * x_big.powf(-(sigma + 1.0) / sigma);
    let i_tail = (am2 - ap2) / a * lead - (am2 + ap2) / a * corr;
    let quad_decay = (sigma / (sigma + 1.0)) * x_big.powf(-(sigma + 1.0) / sigma);
    let lin = 1.0 / (a * a) + 1.0 / (4.0 * sigma * sigma);
    let ap_pow = if tails.a_plus.at_floor { 0.0 } else { tails.a_plus.value.powf(2.0 * sigma + 2.0) };
    let am_pow = tails.a_minus.value.powf(2.0 * sigma + 2.0);
    let h_tail = ((am2 + ap2) * lin + (am_pow - ap_pow) / (a * (sigma + 1.0))) * quad_decay;
    Ok(Functionals {
        h,
        i,
        grad_sq,
        h_tail,
        i_tail,
        tails,
    })
}

/// Phase–amplitude decomposition of the gauge-modified profile P:
/// A = |P| = |Q| and ψ = φ_ξ where P = A e^{iφ}, recovered from
/// ψ = θ_ξ + (aξ − b)/2 + |Q|^{2σ}/(2σ+2).
#[derive(Debug, Clone)]
pub struct PhaseAmplitude {
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub dxi: f64,
    pub xi: Vec<f64>,
    pub amp: Vec<f64>,
    /// θ_ξ, the unwrapped discrete derivative of arg Q.
    pub theta_xi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Nodes whose amplitude sits at the floating floor; phase quantities
    /// there are meaningless and set to zero.
    pub floor_mask: Vec<bool>,
}

impl PhaseAmplitude {
    /// Index of ξ = 0.
    pub fn origin(&self) -> usize {
        self.xi.len() / 2
    }
}

pub fn phase_amplitude(
    state: &ProfileState,
    grid: &GridSpec,
) -> Result<PhaseAmplitude, AnalysisError> {
    state.check_sized(grid)?;
    if !(state.a > 0.0) {
        return Err(AnalysisError::NonPositiveA(state.a));
    }
    let (a, b, sigma) = (state.a, state.b, state.sigma);
    let dxi = grid.dx() / a;
    let (xi, q) = full_line(state, grid);
    let m = q.len();
    let origin = m / 2;
    let amp: Vec<f64> = q.iter().map(|z| z.norm()).collect();
    let floor_mask: Vec<bool> = amp.iter().map(|&v| v < AMPLITUDE_FLOOR).collect();
    if floor_mask[origin] {
        return Err(AnalysisError::DegeneratePhase(origin));
    }

    // unwrap arg Q outward from the origin, stopping at the floor
    let mut theta = vec![0.0; m];
    theta[origin] = q[origin].arg();
    let mut unwrap_from = |from: usize, to_end: bool| -> Result<(), AnalysisError> {
        let range: Box<dyn Iterator<Item = usize>> = if to_end {
            Box::new(from + 1..m)
        } else {
            Box::new((0..from).rev())
        };
        let mut prev = from;
        for k in range {
            if floor_mask[k] {
                break;
            }
            let mut d = q[k].arg() - q[prev].arg();
            d -= (d / (2.0 * PI)).round() * 2.0 * PI;
            if d.abs() > 0.9 * PI {
                return Err(AnalysisError::PhaseUnderResolved { node: k, delta: d });
            }
            theta[k] = theta[prev] + d;
            prev = k;
        }
        Ok(())
    };
    unwrap_from(origin, true)?;
    unwrap_from(origin, false)?;

    // θ_ξ by centered differences on unmasked stencils
    let mut theta_xi = vec![0.0; m];
    let mut psi = vec![0.0; m];
    for k in 0..m {
        if floor_mask[k] {
            continue;
        }
        let ok = |idx: usize| idx < m && !floor_mask[idx];
        let t = if k > 0 && k + 1 < m && ok(k - 1) && ok(k + 1) {
            (theta[k + 1] - theta[k - 1]) / (2.0 * dxi)
        } else if k + 2 < m && ok(k + 1) && ok(k + 2) {
            (-3.0 * theta[k] + 4.0 * theta[k + 1] - theta[k + 2]) / (2.0 * dxi)
        } else if k >= 2 && ok(k - 1) && ok(k - 2) {
            (3.0 * theta[k] - 4.0 * theta[k - 1] + theta[k - 2]) / (2.0 * dxi)
        } else {
            continue;
        };
        theta_xi[k] = t;
        psi[k] = t + (a * xi[k] - b) / 2.0 + amp[k].powf(2.0 * sigma) / (2.0 * sigma + 2.0);
    }
    Ok(PhaseAmplitude {
        sigma,
        a,
        b,
        dxi,
        xi,
        amp,
        theta_xi,
        psi,
        floor_mask,
    })
}

/// ψ(0), the phase derivative of P at the origin.
pub fn psi_at_origin(pa: &PhaseAmplitude) -> f64 {
    pa.psi[pa.origin()]
}

/// ψ reconstructed from the first-order balance
/// ψ(ξ) = ψ(0)A²(0)/A²(ξ) + (a(σ−1)/(2σA²(ξ)))∫₀^ξ A², for cross-checking
/// the directly differentiated phase.
pub fn psi_from_integral_identity(pa: &PhaseAmplitude) -> Vec<f64> {
    let m = pa.amp.len();
    let origin = pa.origin();
    let a2: Vec<f64> = pa.amp.iter().map(|v| v * v).collect();
    // cumulative ∫₀^ξ A² in both directions
    let mut cum = vec![0.0; m];
    for k in origin + 1..m {
        cum[k] = cum[k - 1] + 0.5 * pa.dxi * (a2[k] + a2[k - 1]);
    }
    for k in (0..origin).rev() {
        cum[k] = cum[k + 1] - 0.5 * pa.dxi * (a2[k] + a2[k + 1]);
    }
    let psi0 = psi_at_origin(pa);
    let coeff = pa.a * (pa.sigma - 1.0) / (2.0 * pa.sigma);
    (0..m)
        .map(|k| {
            if pa.floor_mask[k] || a2[k] == 0.0 {
                0.0
            } else {
                (psi0 * a2[origin] + coeff * cum[k]) / a2[k]
            }
        })
        .collect()
}

/// Soliton mass integrals: k = ∫₀^{ξ₀} A² with ξ₀ = min(1.2ξ₊, 0.9x_max/a),
/// and l = ∫_{−ε/a}^0 A².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassIntegrals {
    pub k: f64,
    pub l: f64,
    pub xi0: f64,
    /// Set when 1.2·ξ₊ exceeds the domain and ξ₀ was clamped.
    pub truncated: bool,
}

pub fn mass_integrals(pa: &PhaseAmplitude) -> MassIntegrals {
    let origin = pa.origin();
    let eps = 2.0 - pa.b;
    let xi_plus = (4.0 - eps) / pa.a;
    let xi_dom = pa.xi[pa.xi.len() - 1];
    let xi0 = (1.2 * xi_plus).min(0.9 * xi_dom);
    let truncated = 1.2 * xi_plus > 0.9 * xi_dom;
    let a2_pos: Vec<f64> = (origin..pa.amp.len()).map(|k| pa.amp[k] * pa.amp[k]).collect();
    let k = trapezoid_uniform_to(pa.dxi, 0.0, &a2_pos, xi0);
    // negative side, walking outward from the origin
    let a2_neg: Vec<f64> = (0..=origin).rev().map(|k| pa.amp[k] * pa.amp[k]).collect();
    let l = trapezoid_uniform_to(pa.dxi, 0.0, &a2_neg, eps / pa.a);
    MassIntegrals {
        k,
        l,
        xi0,
        truncated,
    }
}

/// Momentum density θ_ξA² split at the turning point ξ₋ = −ε/a and the
/// origin, with the soliton-model approximations of each piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionMomenta {
    /// ∫_{−x_max/a}^{ξ₋}, ∫_{ξ₋}^0 and ∫_0^{x_max/a} of θ_ξA².
    pub i1: f64,
    pub i3: f64,
    pub i2: f64,
    /// WKB model of region 1 evaluated with the measured A₋.
    pub i1_wkb: Option<f64>,
    /// Numeric and WKB-model momentum restricted to the WKB-valid part of
    /// region 1, y ≥ 1 + a^{2/3} (the turning-point neighborhood where the
    /// model is singular is excluded from both sides).
    pub i1_valid: Option<(f64, f64)>,
    /// Bright-soliton model of region 2 on the same nodes.
    pub i2_bright: Option<f64>,
    /// Numeric and bright-model momentum on [−1/(2√ε), 0].
    pub i3_sub: Option<(f64, f64)>,
    /// Numeric, lump-model, and bright-model momentum on [ξ₋, −1/(2√ε)].
    pub i3_outer: Option<(f64, f64, f64)>,
    /// μ from I₃ ≈ 2π(σ−1) − μ√ε.
    pub mu: Option<f64>,
}

pub fn momentum_regions(
    pa: &PhaseAmplitude,
    tails: &TailCoefficients,
) -> RegionMomenta {
    let m = pa.amp.len();
    let (a, b, sigma) = (pa.a, pa.b, pa.sigma);
    let eps = 2.0 - b;
    let xi_min = pa.xi[0];
    let dens: Vec<f64> = (0..m)
        .map(|k| pa.theta_xi[k] * pa.amp[k] * pa.amp[k])
        .collect();
    // oriented cumulative integral S(t) = ∫_{−xmax/a}^{t}
    let s_at = |t: f64| trapezoid_uniform_to(pa.dxi, xi_min, &dens, t);
    let total = trapezoid_uniform(pa.dxi, &dens);
    let xi_m = -eps / a;
    let s1 = s_at(xi_m);
    let s2 = s_at(0.0);
    let i1 = s1;
    let i3 = s2 - s1;
    let i2 = total - s2;

    // region-1 WKB model: in y = −(aξ−b)/2 the model density integrates in
    // closed form, ∫ = σ a^{(1−σ)/σ} A₋² (e^{−s_lo/σ} − e^{−s_hi/σ}) with
    // y = cosh s; the full-region value takes s from 0 to arccosh(y(−x_max/a))
    let wkb_scale = sigma * a.powf((1.0 - sigma) / sigma) * tails.a_minus.value.powi(2);
    let y_at = |xi: f64| -(a * xi - b) / 2.0;
    let y_lo = y_at(xi_min);
    let (i1_wkb, i1_valid) = if y_lo > 1.0 {
        let s_max = y_lo.acosh();
        let full = wkb_scale * (1.0 - (-s_max / sigma).exp());
        // drop y < 1 + a^{2/3}: WKB breaks in the turning-point neighborhood
        let y_cut = 1.0 + a.powf(2.0 / 3.0);
        let valid = if y_cut < y_lo {
            let s_cut = y_cut.acosh();
            let model = wkb_scale * ((-s_cut / sigma).exp() - (-s_max / sigma).exp());
            // matching numeric piece: ξ from −x_max/a to ξ(y_cut)
            let xi_cut = (b - 2.0 * y_cut) / a;
            let numeric = s_at(xi_cut);
            Some((numeric, model))
        } else {
            None
        };
        (Some(full), valid)
    } else {
        (None, None)
    };

    let bright_params = if eps > 0.0 {
        SolitonParams::new(sigma, b).ok()
    } else {
        None
    };
    let model_dens = |xi: f64, amp_model: &dyn Fn(f64) -> f64| -> f64 {
        let amp = amp_model(xi);
        let p = amp.powf(2.0 * sigma);
        (b / 2.0 - p / (2.0 * sigma + 2.0)) * amp * amp
    };
    let i2_bright = bright_params.as_ref().map(|p| {
        let vals: Vec<f64> = (pa.origin()..m)
            .map(|k| model_dens(pa.xi[k], &|xi| bright(p, xi).unwrap_or(0.0)))
            .collect();
        trapezoid_uniform(pa.dxi, &vals)
    });
    let mu = if eps > 0.0 {
        Some((2.0 * PI * (sigma - 1.0) - i3) / eps.sqrt())
    } else {
        None
    };

    // the sub-window cut −1/(2√ε) must fall inside region 3; far from
    // criticality (a > 2ε^{3/2}) it lands beyond ξ₋ and the split is moot
    let split_ok = eps > 0.0 && -0.5 / eps.max(1e-300).sqrt() > xi_m;
    let (i3_sub, i3_outer) = if split_ok {
        let cut = -0.5 / eps.sqrt();
        let sub_numeric = s2 - s_at(cut);
        let outer_numeric = s_at(cut) - s1;
        let model_piece = |amp_model: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> f64 {
            let vals: Vec<f64> = (0..m).map(|k| model_dens(pa.xi[k], amp_model)).collect();
            trapezoid_uniform_to(pa.dxi, xi_min, &vals, hi)
                - trapezoid_uniform_to(pa.dxi, xi_min, &vals, lo)
        };
        let sub_bright = bright_params
            .as_ref()
            .map(|p| model_piece(&|xi| bright(p, xi).unwrap_or(0.0), cut, 0.0));
        let outer_bright = bright_params
            .as_ref()
            .map(|p| model_piece(&|xi| bright(p, xi).unwrap_or(0.0), xi_m, cut));
        let outer_lump = model_piece(&|xi| lump(sigma, xi), xi_m, cut);
        (
            sub_bright.map(|mb| (sub_numeric, mb)),
            outer_bright.map(|ob| (outer_numeric, outer_lump, ob)),
        )
    } else {
        (None, None)
    };

    RegionMomenta {
        i1,
        i3,
        i2,
        i1_wkb,
        i1_valid,
        i2_bright,
        i3_sub,
        i3_outer,
        mu,
    }
}

/// Relative gaps of the asymptotic relations, |measured/predicted − 1|.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelationGaps {
    /// A₋² = a^{1−1/σ}(k+l)(1−1/σ)
    pub a_minus: Option<f64>,
    /// ψ(0) = −a(σ−1)k/(2σA²(0))
    pub psi0: Option<f64>,
    /// A₊ = 4ε^{3/4}a^{−1/2}e^{−π/a + (2/3)ε^{3/2}/a}
    pub a_plus: Option<f64>,
}

/// Everything the analysis knows about one solved profile.
#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub h: f64,
    pub i: f64,
    pub grad_sq: f64,
    pub h_tail: f64,
    pub i_tail: f64,
    pub a_plus: TailFit,
    pub a_minus: TailFit,
    pub psi0: f64,
    pub amp0_sq: f64,
    pub mass: MassIntegrals,
    pub xi_minus: f64,
    pub xi_plus: f64,
    pub regions: RegionMomenta,
    pub gaps: RelationGaps,
    pub n: usize,
    pub x_max: f64,
}

/// Predicted values of the three asymptotic relations from measured
/// quantities, and their relative gaps.
pub fn check_relations(report: &AnalysisReport) -> RelationGaps {
    let (a, sigma, eps) = (report.a, report.sigma, report.epsilon);
    let mut gaps = RelationGaps::default();
    let kl = report.mass.k + report.mass.l;
    if kl > 0.0 && sigma > 1.0 {
        let pred = (a.powf(1.0 - 1.0 / sigma) * kl * (1.0 - 1.0 / sigma)).sqrt();
        if pred > 0.0 {
            gaps.a_minus = Some((report.a_minus.value / pred - 1.0).abs());
        }
    }
    if report.amp0_sq > 0.0 && sigma > 1.0 {
        let pred = -a * (sigma - 1.0) * report.mass.k / (2.0 * sigma * report.amp0_sq);
        if pred != 0.0 {
            gaps.psi0 = Some((report.psi0 / pred - 1.0).abs());
        }
    }
    if !report.a_plus.at_floor && eps > 0.0 {
        let pred = 4.0
            * eps.powf(0.75)
            * a.powf(-0.5)
            * (-PI / a + (2.0 / 3.0) * eps.powf(1.5) / a).exp();
        if pred > 0.0 && pred.is_finite() {
            gaps.a_plus = Some((report.a_plus.value / pred - 1.0).abs());
        }
    }
    gaps
}

/// Run the full analysis of a solved profile.
pub fn analyze(state: &ProfileState, grid: &GridSpec) -> Result<AnalysisReport, AnalysisError> {
    let funs = functionals(state, grid)?;
    let pa = phase_amplitude(state, grid)?;
    let mass = mass_integrals(&pa);
    let regions = momentum_regions(&pa, &funs.tails);
    let eps = 2.0 - state.b;
    let origin = pa.origin();
    let mut report = AnalysisReport {
        sigma: state.sigma,
        a: state.a,
        b: state.b,
        epsilon: eps,
        h: funs.h,
        i: funs.i,
        grad_sq: funs.grad_sq,
        h_tail: funs.h_tail,
        i_tail: funs.i_tail,
        a_plus: funs.tails.a_plus,
        a_minus: funs.tails.a_minus,
        psi0: psi_at_origin(&pa),
        amp0_sq: pa.amp[origin] * pa.amp[origin],
        mass,
        xi_minus: -eps / state.a,
        xi_plus: (4.0 - eps) / state.a,
        regions,
        gaps: RelationGaps::default(),
        n: grid.n(),
        x_max: grid.x_max(),
    };
    report.gaps = check_relations(&report);
    Ok(report)
}

impl AnalysisReport {
    pub fn table_row(&self) -> TableRow {
        TableRow {
            sigma: self.sigma,
            a: self.a,
            b: self.b,
            epsilon: self.epsilon,
            a_plus: if self.a_plus.at_floor {
                None
            } else {
                Some(self.a_plus.value)
            },
            a_minus: self.a_minus.value,
            psi0: self.psi0,
            k: self.mass.k,
            l: self.mass.l,
            i1: self.regions.i1,
            i2: self.regions.i2,
            i3: self.regions.i3,
            h: self.h,
            i: self.i,
            n: self.n,
            x_max: self.x_max,
        }
    }

    /// Structured key/value rendering, one field per line.
    pub fn render(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "# gdnls analysis format 1");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} {v}");
        };
        let f = crate::io::fmt_float;
        kv("sigma", f(self.sigma));
        kv("a", f(self.a));
        kv("b", f(self.b));
        kv("epsilon", f(self.epsilon));
        kv("H", f(self.h));
        kv("I", f(self.i));
        kv("grad_sq", f(self.grad_sq));
        kv("H_tail", f(self.h_tail));
        kv("I_tail", f(self.i_tail));
        kv(
            "A_plus",
            if self.a_plus.at_floor {
                "at_floor".into()
            } else {
                f(self.a_plus.value)
            },
        );
        kv("A_plus_rms", f(self.a_plus.rms));
        kv("A_minus", f(self.a_minus.value));
        kv("A_minus_rms", f(self.a_minus.rms));
        kv("psi0", f(self.psi0));
        kv("amp0_sq", f(self.amp0_sq));
        kv("k", f(self.mass.k));
        kv("l", f(self.mass.l));
        kv("xi0", f(self.mass.xi0));
        kv("k_truncated", format!("{}", self.mass.truncated));
        kv("xi_minus", f(self.xi_minus));
        kv("xi_plus", f(self.xi_plus));
        kv("I1", f(self.regions.i1));
        kv("I2", f(self.regions.i2));
        kv("I3", f(self.regions.i3));
        let opt = |v: Option<f64>| v.map_or("unavailable".to_string(), f);
        kv("I1_wkb", opt(self.regions.i1_wkb));
        kv("I1_valid_numeric", opt(self.regions.i1_valid.map(|p| p.0)));
        kv("I1_valid_wkb", opt(self.regions.i1_valid.map(|p| p.1)));
        kv("I2_bright", opt(self.regions.i2_bright));
        kv("I3_sub_numeric", opt(self.regions.i3_sub.map(|p| p.0)));
        kv("I3_sub_bright", opt(self.regions.i3_sub.map(|p| p.1)));
        kv("I3_outer_numeric", opt(self.regions.i3_outer.map(|p| p.0)));
        kv("I3_outer_lump", opt(self.regions.i3_outer.map(|p| p.1)));
        kv("I3_outer_bright", opt(self.regions.i3_outer.map(|p| p.2)));
        kv("mu", opt(self.regions.mu));
        kv("gap_A_minus", opt(self.gaps.a_minus));
        kv("gap_psi0", opt(self.gaps.psi0));
        kv("gap_A_plus", opt(self.gaps.a_plus));
        kv("N", format!("{}", self.n));
        kv("x_max", f(self.x_max));
        out
    }
}

/// Richardson extrapolation of a second-order-accurate parameter table:
/// spline-interpolate the coarse table onto the fine σ values, then combine
/// column-wise as (4·fine − coarse)/3 for a, b, ε, A_±, ψ(0).
pub fn richardson(
    coarse: &ParameterTable,
    fine: &ParameterTable,
) -> Result<ParameterTable, AnalysisError> {
    let (Some(c0), Some(f0)) = (coarse.rows.first(), fine.rows.first()) else {
        return Err(AnalysisError::Fit(crate::fitting::FitError::TooFewKnots(0)));
    };
    if f0.n != 2 * c0.n {
        return Err(AnalysisError::ResolutionMismatch {
            coarse: c0.n,
            fine: f0.n,
        });
    }
    let c_lo = coarse.rows.last().unwrap().sigma;
    let c_hi = c0.sigma;
    let spline_of = |col: &dyn Fn(&TableRow) -> f64| -> Result<CubicSpline, AnalysisError> {
        let knots: Vec<(f64, f64)> = coarse.rows.iter().map(|r| (r.sigma, col(r))).collect();
        Ok(CubicSpline::new(&knots)?)
    };
    let s_a = spline_of(&|r| r.a)?;
    let s_b = spline_of(&|r| r.b)?;
    let s_eps = spline_of(&|r| r.epsilon)?;
    let s_am = spline_of(&|r| r.a_minus)?;
    let s_psi = spline_of(&|r| r.psi0)?;
    // A₊ spline only over rows where it is above floor on the coarse side
    let ap_knots: Vec<(f64, f64)> = coarse
        .rows
        .iter()
        .filter_map(|r| r.a_plus.map(|v| (r.sigma, v)))
        .collect();
    let s_ap = if ap_knots.len() >= 4 {
        Some(CubicSpline::new(&ap_knots)?)
    } else {
        None
    };

    let mut rows = Vec::new();
    for fr in &fine.rows {
        if fr.sigma < c_lo || fr.sigma > c_hi {
            continue; // outside the coarse range: no extrapolation possible
        }
        let rich = |fine_v: f64, coarse_v: f64| (4.0 * fine_v - coarse_v) / 3.0;
        let mut row = fr.clone();
        row.a = rich(fr.a, s_a.eval(fr.sigma)?);
        row.b = rich(fr.b, s_b.eval(fr.sigma)?);
        row.epsilon = rich(fr.epsilon, s_eps.eval(fr.sigma)?);
        row.a_minus = rich(fr.a_minus, s_am.eval(fr.sigma)?);
        row.psi0 = rich(fr.psi0, s_psi.eval(fr.sigma)?);
        row.a_plus = match (fr.a_plus, &s_ap) {
            (Some(fv), Some(sp)) => match sp.eval(fr.sigma) {
                Ok(cv) => Some(rich(fv, cv)),
                Err(_) => None,
            },
            _ => None,
        };
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(AnalysisError::NoOverlap);
    }
    Ok(ParameterTable { rows })
}

/// Local blow-up field near (x*, t*):
/// ψ(x, t) = (2a(t*−t))^{−1/(4σ)} Q(ζ) e^{i(θ₀ + ln(t*/(t*−t))/(2a))} with
/// ζ = (x − x*)/√(2a(t*−t)) + b/a, by cubic interpolation of the Q samples.
pub fn reconstruct_blowup(
    state: &ProfileState,
    grid: &GridSpec,
    t_star: f64,
    x_star: f64,
    theta0: f64,
    t: f64,
    xs: &[f64],
) -> Result<Vec<Complex64>, AnalysisError> {
    if !(t < t_star) {
        return Err(AnalysisError::TimeBeyondBlowup);
    }
    if !(state.a > 0.0) {
        return Err(AnalysisError::NonPositiveA(state.a));
    }
    let (xi, q) = full_line(state, grid);
    let re_knots: Vec<(f64, f64)> = xi.iter().copied().zip(q.iter().map(|z| z.re)).collect();
    let im_knots: Vec<(f64, f64)> = xi.iter().copied().zip(q.iter().map(|z| z.im)).collect();
    let sp_re = CubicSpline::new(&re_knots)?;
    let sp_im = CubicSpline::new(&im_knots)?;
    let tau = t_star - t;
    let scale = (2.0 * state.a * tau).sqrt();
    let prefactor = (2.0 * state.a * tau).powf(-1.0 / (4.0 * state.sigma));
    let phase = Complex64::from_polar(
        1.0,
        theta0 + (t_star / tau).ln() / (2.0 * state.a),
    );
    let (lo, hi) = sp_re.range();
    xs.iter()
        .map(|&x| {
            let zeta = (x - x_star) / scale + state.b / state.a;
            if zeta < lo || zeta > hi {
                return Err(AnalysisError::Extrapolation(zeta));
            }
            let qv = Complex64::new(sp_re.eval(zeta)?, sp_im.eval(zeta)?);
            Ok(prefactor * qv * phase)
        })
        .collect()
}
