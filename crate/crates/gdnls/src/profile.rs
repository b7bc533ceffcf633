//! Discrete representation of the rescaled profile problem.
//!
//! The profile Q(ξ) is computed in the rescaled coordinate x = aξ on the
//! half-domain [0, x_max], together with its reflection W(x) = Q(−x), so that
//! the slowly decaying wings fit in a fixed domain for every σ.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("grid needs at least 100 intervals and a positive domain, got n = {n}, x_max = {x_max}")]
    InvalidGrid { n: usize, x_max: f64 },
    #[error("state arrays have length {got}, grid expects {expected}")]
    SizeMismatch { got: usize, expected: usize },
}

/// Uniform mesh of N+1 nodes on the rescaled half-domain [0, x_max],
/// x_j = j·Δx with Δx = x_max/N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    x_max: f64,
}

impl GridSpec {
    pub fn new(n: usize, x_max: f64) -> Result<Self, ProfileError> {
        if n < 100 || !(x_max > 0.0) {
            return Err(ProfileError::InvalidGrid { n, x_max });
        }
        Ok(Self { n, x_max })
    }

    /// Interval count N (the mesh has N+1 nodes).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn dx(&self) -> f64 {
        self.x_max / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    pub fn nodes(&self) -> usize {
        self.n + 1
    }
}

/// Discrete unknowns of the coupled (Q, W) boundary-value problem:
/// Q(x_j) = u_j + i v_j and W(x_j) = Q(−x_j) = f_j + i g_j on [0, x_max],
/// plus the eigenparameters (a, b) and the exponent σ.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileState {
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl ProfileState {
    pub fn zeros(grid: &GridSpec, sigma: f64, a: f64, b: f64) -> Self {
        let n = grid.nodes();
        Self {
            sigma,
            a,
            b,
            u: vec![0.0; n],
            v: vec![0.0; n],
            f: vec![0.0; n],
            g: vec![0.0; n],
        }
    }

    pub fn check_sized(&self, grid: &GridSpec) -> Result<(), ProfileError> {
        let expected = grid.nodes();
        for arr in [&self.u, &self.v, &self.f, &self.g] {
            if arr.len() != expected {
                return Err(ProfileError::SizeMismatch {
                    got: arr.len(),
                    expected,
                });
            }
        }
        Ok(())
    }

    /// ε = 2 − b, the distance of b from criticality.
    pub fn epsilon(&self) -> f64 {
        2.0 - self.b
    }

    /// |Q(x_j)|²
    pub fn q_mod_sq(&self, j: usize) -> f64 {
        self.u[j] * self.u[j] + self.v[j] * self.v[j]
    }

    /// |W(x_j)|²
    pub fn w_mod_sq(&self, j: usize) -> f64 {
        self.f[j] * self.f[j] + self.g[j] * self.g[j]
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite()
            && self.b.is_finite()
            && self
                .u
                .iter()
                .chain(&self.v)
                .chain(&self.f)
                .chain(&self.g)
                .all(|x| x.is_finite())
    }
}
