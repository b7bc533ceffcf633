//! Bordered banded direct linear solver.
//!
//! The Jacobian of the discrete profile system is banded in the field
//! unknowns, with two dense columns for the eigenparameters (a, b) and two
//! closing rows (continuity and zero phase).  The solve factors the banded
//! core by LU with partial pivoting and handles the borders through a 2×2
//! Schur complement, followed by iterative refinement.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("banded core is singular at column {0}")]
    SingularBand(usize),
    #[error("bordered Schur block is singular or numerically rank-deficient")]
    SingularSchur,
    #[error("rhs length {got} does not match system size {expected}")]
    RhsSize { got: usize, expected: usize },
}

/// Banded matrix with two dense border columns and two closing rows:
///
/// ```text
/// ┌        ┐ ┌   ┐   ┌   ┐
/// │ A    B │ │ x │ = │ p │     A: banded n_core × n_core
/// │ C    D │ │ y │   │ q │     B: n_core × 2, C: 2 × n_core, D: 2 × 2
/// └        ┘ └   ┘   └   ┘
/// ```
///
/// Band storage is LAPACK-style column-major with `kl` extra superdiagonal
/// rows reserved for pivoting fill.
#[derive(Debug, Clone)]
pub struct BorderedBandMatrix {
    n_core: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    col_a: Vec<f64>,
    col_b: Vec<f64>,
    closing: [Vec<(usize, f64)>; 2],
    closing_d: [[f64; 2]; 2],
}

impl BorderedBandMatrix {
    pub fn new(n_core: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n_core,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n_core],
            col_a: vec![0.0; n_core],
            col_b: vec![0.0; n_core],
            closing: [Vec::new(), Vec::new()],
            closing_d: [[0.0; 2]; 2],
        }
    }

    pub fn n_core(&self) -> usize {
        self.n_core
    }

    /// Total system size including the two border unknowns.
    pub fn n(&self) -> usize {
        self.n_core + 2
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn band_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_core && j < self.n_core);
        debug_assert!(j + self.kl >= i && i + self.ku >= j, "({i}, {j}) outside band");
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    #[inline]
    pub fn band_add(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.band_index(i, j);
        self.ab[idx] += v;
    }

    pub fn band_get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || i + self.ku < j {
            return 0.0;
        }
        self.ab[self.band_index(i, j)]
    }

    #[inline]
    pub fn set_border(&mut self, i: usize, da: f64, db: f64) {
        self.col_a[i] = da;
        self.col_b[i] = db;
    }

    pub fn set_closing_row(&mut self, r: usize, entries: Vec<(usize, f64)>, d: [f64; 2]) {
        self.closing[r] = entries;
        self.closing_d[r] = d;
    }

    /// Structural nonzero count: in-band entries plus the dense borders and
    /// closing rows.
    pub fn nnz(&self) -> usize {
        let band = self
            .ab
            .iter()
            .enumerate()
            .filter(|(idx, &v)| {
                let j = idx / self.ldab;
                let r = idx % self.ldab;
                // entry row i = j + r − kl − ku must exist and be in band
                v != 0.0 && r >= self.kl && j + r >= self.kl + self.ku && j + r - self.kl - self.ku < self.n_core
            })
            .count();
        band + 2 * self.n_core + self.closing[0].len() + self.closing[1].len()
    }

    /// y = M · x for the full bordered system (x of length n_core + 2).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n());
        let n = self.n_core;
        let mut y = vec![0.0; self.n()];
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                let lo = j.saturating_sub(self.ku);
                let hi = (j + self.kl).min(n - 1);
                for i in lo..=hi {
                    y[i] += self.ab[j * self.ldab + (self.kl + self.ku + i - j)] * xj;
                }
            }
        }
        for i in 0..n {
            y[i] += self.col_a[i] * x[n] + self.col_b[i] * x[n + 1];
        }
        for r in 0..2 {
            let mut s = 0.0;
            for &(j, v) in &self.closing[r] {
                s += v * x[j];
            }
            s += self.closing_d[r][0] * x[n] + self.closing_d[r][1] * x[n + 1];
            y[n + r] = s;
        }
        y
    }

    fn factor(&self) -> Result<BandLu, LinearError> {
        let n = self.n_core;
        let (kl, ku, ldab) = (self.kl, self.ku, self.ldab);
        let mut ab = self.ab.clone();
        let mut piv = vec![0usize; n];
        let kd = kl + ku; // row offset of the diagonal in a column
        let scale = ab.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = scale * 1e-20;
        for k in 0..n {
            let reach = kl.min(n - 1 - k);
            let mut p = 0;
            let mut best = ab[k * ldab + kd].abs();
            for i in 1..=reach {
                let m = ab[k * ldab + kd + i].abs();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best <= tiny || best == 0.0 {
                return Err(LinearError::SingularBand(k));
            }
            piv[k] = k + p;
            let jmax = (k + kd).min(n - 1);
            if p != 0 {
                for j in k..=jmax {
                    ab.swap(j * ldab + kd + k - j, j * ldab + kd + k + p - j);
                }
            }
            let diag = ab[k * ldab + kd];
            for i in 1..=reach {
                let l = ab[k * ldab + kd + i] / diag;
                ab[k * ldab + kd + i] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let head = ab[j * ldab + kd + k - j];
                        if head != 0.0 {
                            ab[j * ldab + kd + k + i - j] -= l * head;
                        }
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            ldab,
            ab,
            piv,
        })
    }

    /// Solve M·x = rhs with `refine` steps of iterative refinement.
    pub fn solve(&self, rhs: &[f64], refine: usize) -> Result<Vec<f64>, LinearError> {
        if rhs.len() != self.n() {
            return Err(LinearError::RhsSize {
                got: rhs.len(),
                expected: self.n(),
            });
        }
        let n = self.n_core;
        let lu = self.factor()?;
        let xa = lu.solve(&self.col_a);
        let xb = lu.solve(&self.col_b);

        // Schur complement S = D − C·A⁻¹·B
        let dot = |row: &[(usize, f64)], x: &[f64]| row.iter().map(|&(j, v)| v * x[j]).sum::<f64>();
        let s = [
            [
                self.closing_d[0][0] - dot(&self.closing[0], &xa),
                self.closing_d[0][1] - dot(&self.closing[0], &xb),
            ],
            [
                self.closing_d[1][0] - dot(&self.closing[1], &xa),
                self.closing_d[1][1] - dot(&self.closing[1], &xb),
            ],
        ];
        let s_norm = s
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        if !(det.abs() > 1e-14 * s_norm * s_norm) {
            return Err(LinearError::SingularSchur);
        }

        let apply = |rhs: &[f64]| -> Vec<f64> {
            let xp = lu.solve(&rhs[..n]);
            let q = [rhs[n] - dot(&self.closing[0], &xp), rhs[n + 1] - dot(&self.closing[1], &xp)];
            let y0 = (q[0] * s[1][1] - q[1] * s[0][1]) / det;
            let y1 = (s[0][0] * q[1] - s[1][0] * q[0]) / det;
            let mut x = Vec::with_capacity(n + 2);
            for i in 0..n {
                x.push(xp[i] - xa[i] * y0 - xb[i] * y1);
            }
            x.push(y0);
            x.push(y1);
            x
        };

        let mut x = apply(rhs);
        for _ in 0..refine {
            let mx = self.matvec(&x);
            let r: Vec<f64> = rhs.iter().zip(&mx).map(|(b, m)| b - m).collect();
            let dx = apply(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        Ok(x)
    }
}

/// Factored banded core (LU with partial pivoting).
struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        let kd = self.kl + self.ku;
        let mut x = b.to_vec();
        for k in 0..n {
            if self.piv[k] != k {
                x.swap(k, self.piv[k]);
            }
            let xk = x[k];
            if xk != 0.0 {
                let reach = kl.min(n - 1 - k);
                for i in 1..=reach {
                    x[k + i] -= self.ab[k * ldab + kd + i] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            let jmax = (k + kd).min(n - 1);
            for j in k + 1..=jmax {
                s -= self.ab[j * ldab + kd + k - j] * x[j];
            }
            x[k] = s / self.ab[k * ldab + kd];
        }
        x
    }
}
