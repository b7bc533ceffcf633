//! On-disk formats: profile files and parameter tables.
//!
//! Profiles are plain-text column files with `#`-prefixed header lines;
//! tables are comma-separated with a header row.  All floats are serialized
//! with 17 significant digits, so write → read → write is byte-identical.
//! Writes go through a temp-file-then-rename so readers never observe a
//! partial file.

use crate::profile::{GridSpec, ProfileState};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const PROFILE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: bad value for field `{field}`: {text:?}")]
    BadValue {
        field: &'static str,
        line: usize,
        text: String,
    },
    #[error("missing header field `{0}`")]
    MissingField(&'static str),
    #[error("unsupported profile format version {0}")]
    BadVersion(u32),
    #[error("profile declares {expected} rows but contains {got}")]
    RowCount { expected: usize, got: usize },
    #[error("line {line}: expected {expected} columns, got {got}")]
    ColumnCount {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("node {node}: x column is {got} but the grid implies {expected}")]
    GridMismatch { node: usize, got: f64, expected: f64 },
    #[error(transparent)]
    Profile(#[from] crate::profile::ProfileError),
    #[error("table rows must be strictly decreasing in sigma (row {0})")]
    NonMonotoneSigma(usize),
    #[error("table mixes resolutions: row {row} has N = {got}, expected {expected}")]
    MixedResolution { row: usize, got: usize, expected: usize },
    #[error("empty table")]
    EmptyTable,
}

/// Solver metadata echoed in a profile header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileMeta {
    pub tol: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Render a profile to its on-disk text form.
pub fn render_profile(state: &ProfileState, grid: &GridSpec, meta: &ProfileMeta) -> String {
    let mut out = String::with_capacity(96 * (grid.n() + 12));
    let _ = writeln!(out, "# gdnls profile format {PROFILE_FORMAT_VERSION}");
    let _ = writeln!(out, "# sigma {}", fmt_float(state.sigma));
    let _ = writeln!(out, "# a {}", fmt_float(state.a));
    let _ = writeln!(out, "# b {}", fmt_float(state.b));
    let _ = writeln!(out, "# n {}", grid.n());
    let _ = writeln!(out, "# x_max {}", fmt_float(grid.x_max()));
    let _ = writeln!(out, "# tol {}", fmt_float(meta.tol));
    let _ = writeln!(out, "# iterations {}", meta.iterations);
    let _ = writeln!(out, "# residual {}", fmt_float(meta.residual));
    let _ = writeln!(out, "# columns x u v f g");
    for j in 0..=grid.n() {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            fmt_float(grid.x(j)),
            fmt_float(state.u[j]),
            fmt_float(state.v[j]),
            fmt_float(state.f[j]),
            fmt_float(state.g[j]),
        );
    }
    out
}

/// Parse a profile from its text form.
pub fn parse_profile(text: &str) -> Result<(ProfileState, GridSpec, ProfileMeta), IoError> {
    let mut version: Option<u32> = None;
    let mut sigma: Option<f64> = None;
    let mut a: Option<f64> = None;
    let mut b: Option<f64> = None;
    let mut n: Option<usize> = None;
    let mut x_max: Option<f64> = None;
    let mut tol: Option<f64> = None;
    let mut iterations: Option<usize> = None;
    let mut residual: Option<f64> = None;

    let mut rows: Vec<[f64; 5]> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            let mut parts = header.split_whitespace();
            let Some(key) = parts.next() else { continue };
            let mut parse_f64 = |field: &'static str| -> Result<f64, IoError> {
                let tok = parts.next().ok_or(IoError::MissingField(field))?;
                tok.parse().map_err(|_| IoError::BadValue {
                    field,
                    line,
                    text: tok.to_string(),
                })
            };
            match key {
                "gdnls" => {
                    // "# gdnls profile format <v>"
                    let tok = parts.nth(2).ok_or(IoError::MissingField("format"))?;
                    version = Some(tok.parse().map_err(|_| IoError::BadValue {
                        field: "format",
                        line,
                        text: tok.to_string(),
                    })?);
                }
                "sigma" => sigma = Some(parse_f64("sigma")?),
                "a" => a = Some(parse_f64("a")?),
                "b" => b = Some(parse_f64("b")?),
                "x_max" => x_max = Some(parse_f64("x_max")?),
                "tol" => tol = Some(parse_f64("tol")?),
                "residual" => residual = Some(parse_f64("residual")?),
                "n" => {
                    let tok = parts.next().ok_or(IoError::MissingField("n"))?;
                    n = Some(tok.parse().map_err(|_| IoError::BadValue {
                        field: "n",
                        line,
                        text: tok.to_string(),
                    })?);
                }
                "iterations" => {
                    let tok = parts.next().ok_or(IoError::MissingField("iterations"))?;
                    iterations = Some(tok.parse().map_err(|_| IoError::BadValue {
                        field: "iterations",
                        line,
                        text: tok.to_string(),
                    })?);
                }
                _ => {} // "columns" line and unrecognized keys
            }
            continue;
        }
        let mut row = [0.0; 5];
        let mut count = 0;
        for (c, tok) in trimmed.split_whitespace().enumerate() {
            if c >= 5 {
                count = c + 1;
                break;
            }
            row[c] = tok.parse().map_err(|_| IoError::BadValue {
                field: ["x", "u", "v", "f", "g"][c],
                line,
                text: tok.to_string(),
            })?;
            count = c + 1;
        }
        if count != 5 {
            return Err(IoError::ColumnCount {
                line,
                expected: 5,
                got: count,
            });
        }
        rows.push(row);
    }

    let version = version.ok_or(IoError::MissingField("format"))?;
    if version != PROFILE_FORMAT_VERSION {
        return Err(IoError::BadVersion(version));
    }
    let sigma = sigma.ok_or(IoError::MissingField("sigma"))?;
    let a = a.ok_or(IoError::MissingField("a"))?;
    let b = b.ok_or(IoError::MissingField("b"))?;
    let n = n.ok_or(IoError::MissingField("n"))?;
    let x_max = x_max.ok_or(IoError::MissingField("x_max"))?;
    let meta = ProfileMeta {
        tol: tol.ok_or(IoError::MissingField("tol"))?,
        iterations: iterations.ok_or(IoError::MissingField("iterations"))?,
        residual: residual.ok_or(IoError::MissingField("residual"))?,
    };
    if rows.len() != n + 1 {
        return Err(IoError::RowCount {
            expected: n + 1,
            got: rows.len(),
        });
    }
    let grid = GridSpec::new(n, x_max)?;
    let mut state = ProfileState::zeros(&grid, sigma, a, b);
    for (j, row) in rows.iter().enumerate() {
        let expected = grid.x(j);
        if (row[0] - expected).abs() > 1e-12 * expected.abs().max(1.0) {
            return Err(IoError::GridMismatch {
                node: j,
                got: row[0],
                expected,
            });
        }
        state.u[j] = row[1];
        state.v[j] = row[2];
        state.f[j] = row[3];
        state.g[j] = row[4];
    }
    Ok((state, grid, meta))
}

/// Atomic write: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, content: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = dir.join(format!(".{stem}.tmp"));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)
}

pub fn write_profile(
    path: &Path,
    state: &ProfileState,
    grid: &GridSpec,
    meta: &ProfileMeta,
) -> Result<(), IoError> {
    atomic_write(path, &render_profile(state, grid, meta))?;
    Ok(())
}

pub fn read_profile(path: &Path) -> Result<(ProfileState, GridSpec, ProfileMeta), IoError> {
    parse_profile(&std::fs::read_to_string(path)?)
}

/// One per-σ row of computed quantities at a fixed resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    /// `None` when the + wing sits at the floating-point floor.
    pub a_plus: Option<f64>,
    pub a_minus: f64,
    pub psi0: f64,
    pub k: f64,
    pub l: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub h: f64,
    pub i: f64,
    pub n: usize,
    pub x_max: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterTable {
    pub rows: Vec<TableRow>,
}

pub const TABLE_HEADER: &str = "sigma,a,b,epsilon,A_plus,A_minus,psi0,k,l,I1,I2,I3,H,I,N,x_max";

impl ParameterTable {
    /// σ strictly decreasing, one resolution per table.
    pub fn validate(&self) -> Result<(), IoError> {
        let Some(first) = self.rows.first() else {
            return Err(IoError::EmptyTable);
        };
        for (idx, pair) in self.rows.windows(2).enumerate() {
            if !(pair[1].sigma < pair[0].sigma) {
                return Err(IoError::NonMonotoneSigma(idx + 1));
            }
        }
        for (idx, row) in self.rows.iter().enumerate() {
            if row.n != first.n {
                return Err(IoError::MixedResolution {
                    row: idx,
                    got: row.n,
                    expected: first.n,
                });
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{TABLE_HEADER}");
        for r in &self.rows {
            let a_plus = match r.a_plus {
                Some(v) => fmt_float(v),
                None => "at_floor".to_string(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{a_plus},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_float(r.sigma),
                fmt_float(r.a),
                fmt_float(r.b),
                fmt_float(r.epsilon),
                fmt_float(r.a_minus),
                fmt_float(r.psi0),
                fmt_float(r.k),
                fmt_float(r.l),
                fmt_float(r.i1),
                fmt_float(r.i2),
                fmt_float(r.i3),
                fmt_float(r.h),
                fmt_float(r.i),
                r.n,
                fmt_float(r.x_max),
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut rows = Vec::new();
        let names: Vec<&str> = TABLE_HEADER.split(',').collect();
        let fields: [&'static str; 16] = [
            "sigma", "a", "b", "epsilon", "A_plus", "A_minus", "psi0", "k", "l", "I1", "I2",
            "I3", "H", "I", "N", "x_max",
        ];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed == TABLE_HEADER {
                continue;
            }
            let cols: Vec<&str> = trimmed.split(',').collect();
            if cols.len() != names.len() {
                return Err(IoError::ColumnCount {
                    line,
                    expected: names.len(),
                    got: cols.len(),
                });
            }
            let field = |c: usize| -> Result<f64, IoError> {
                cols[c].trim().parse().map_err(|_| IoError::BadValue {
                    field: fields[c],
                    line,
                    text: cols[c].to_string(),
                })
            };
            let a_plus = if cols[4].trim() == "at_floor" {
                None
            } else {
                Some(field(4)?)
            };
            rows.push(TableRow {
                sigma: field(0)?,
                a: field(1)?,
                b: field(2)?,
                epsilon: field(3)?,
                a_plus,
                a_minus: field(5)?,
                psi0: field(6)?,
                k: field(7)?,
                l: field(8)?,
                i1: field(9)?,
                i2: field(10)?,
                i3: field(11)?,
                h: field(12)?,
                i: field(13)?,
                n: cols[14].trim().parse().map_err(|_| IoError::BadValue {
                    field: "N",
                    line,
                    text: cols[14].to_string(),
                })?,
                x_max: field(15)?,
            });
        }
        let table = Self { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        self.validate()?;
        atomic_write(path, &self.render())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_state() -> (ProfileState, GridSpec, ProfileMeta) {
        let grid = GridSpec::new(128, 25.0).unwrap();
        let mut state = ProfileState::zeros(&grid, 1.3, 0.25, 1.7);
        for j in 0..=128 {
            let x = grid.x(j);
            state.u[j] = (1.0 + x).recip();
            state.v[j] = -(0.3 * x).sin() * 1e-3;
            state.f[j] = (1.0 + 0.5 * x).recip();
            state.g[j] = (0.2 * x).cos() * 1e-7;
        }
        let meta = ProfileMeta {
            tol: 1e-6,
            iterations: 7,
            residual: 3.25e-7,
        };
        (state, grid, meta)
    }

    #[test]
    fn profile_roundtrip_is_byte_identical() {
        let (state, grid, meta) = sample_state();
        let text = render_profile(&state, &grid, &meta);
        let (s2, g2, m2) = parse_profile(&text).unwrap();
        assert_eq!(state, s2);
        assert_eq!(grid, g2);
        assert_eq!(meta, m2);
        assert_eq!(render_profile(&s2, &g2, &m2), text);
    }

    #[test]
    fn profile_write_read_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile.txt");
        let (state, grid, meta) = sample_state();
        write_profile(&path, &state, &grid, &meta).unwrap();
        let (s2, g2, m2) = read_profile(&path).unwrap();
        assert_eq!(state, s2);
        assert_eq!(grid, g2);
        assert_eq!(meta.iterations, m2.iterations);
        // no temp file left behind
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn parse_errors_name_the_offending_field() {
        let (state, grid, meta) = sample_state();
        let text = render_profile(&state, &grid, &meta);
        let broken = text.replacen("# sigma", "# sigma bogus_", 1);
        match parse_profile(&broken) {
            Err(IoError::BadValue { field: "sigma", .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
        let missing = text.replacen("# a ", "# unknown ", 1);
        assert!(matches!(
            parse_profile(&missing),
            Err(IoError::MissingField("a"))
        ));
        let short: String = text
            .lines()
            .take(40)
            .flat_map(|l| [l, "\n"])
            .collect();
        assert!(matches!(
            parse_profile(&short),
            Err(IoError::RowCount { .. })
        ));
    }

    fn sample_table() -> ParameterTable {
        let row = |sigma: f64, a_plus: Option<f64>| TableRow {
            sigma,
            a: 0.1 * sigma,
            b: 2.0 - 0.3 * (sigma - 1.0),
            epsilon: 0.3 * (sigma - 1.0),
            a_plus,
            a_minus: 0.8,
            psi0: -1e-3,
            k: 6.4,
            l: 6.1,
            i1: 0.9,
            i2: -0.5,
            i3: -0.4,
            h: 1e-4,
            i: -2e-4,
            n: 100_000,
            x_max: 25.0,
        };
        ParameterTable {
            rows: vec![row(1.3, Some(2.5e-9)), row(1.25, None), row(1.2, Some(1e-12))],
        }
    }

    #[test]
    fn table_roundtrip_preserves_at_floor_flags() {
        let table = sample_table();
        let text = table.render();
        assert!(text.contains("at_floor"));
        let back = ParameterTable::parse(&text).unwrap();
        assert_eq!(table, back);
        assert_eq!(back.render(), text);
    }

    #[test]
    fn table_validation_rejects_disorder() {
        let mut t = sample_table();
        t.rows.swap(0, 2);
        assert!(matches!(t.validate(), Err(IoError::NonMonotoneSigma(_))));
        let mut t = sample_table();
        t.rows[1].n = 50_000;
        assert!(matches!(t.validate(), Err(IoError::MixedResolution { .. })));
        assert!(matches!(
            ParameterTable::default().validate(),
            Err(IoError::EmptyTable)
        ));
    }
}
