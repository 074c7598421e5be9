//! Plain-text gain files: row-major matrices with 17 significant digits, so
//! every double round-trips exactly.
//!
//! ```text
//! case 3
//! eta 1.2740053586047201e2
//! matrix L 2 1
//! 5.0000000000000000e-1
//! 0.0000000000000000e0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::synthesis::{Case, SynthesisResult};

#[derive(Debug, Clone, PartialEq)]
pub struct GainFile {
    pub case: Option<Case>,
    pub eta: Option<f64>,
    pub l: DMatrix<f64>,
    pub p: Option<DMatrix<f64>>,
    pub gamma: Option<DMatrix<f64>>,
}

impl GainFile {
    /// A bare gain with no certificate.
    pub fn from_gain(l: DMatrix<f64>) -> Self {
        Self {
            case: None,
            eta: None,
            l,
            p: None,
            gamma: None,
        }
    }

    pub fn from_result(res: &SynthesisResult) -> Self {
        Self {
            case: Some(res.case),
            eta: Some(res.eta),
            l: res.l.clone(),
            p: Some(res.p.clone()),
            gamma: Some(res.gamma.clone()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(c) = self.case {
            let _ = writeln!(s, "case {}", c.index());
        }
        if let Some(e) = self.eta {
            let _ = writeln!(s, "eta {}", fmt17(e));
        }
        write_matrix(&mut s, "L", &self.l);
        if let Some(p) = &self.p {
            write_matrix(&mut s, "P", p);
        }
        if let Some(g) = &self.gamma {
            write_matrix(&mut s, "Gamma", g);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse(format!("line {}: {msg}", line + 1));
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let mut out = GainFile {
            case: None,
            eta: None,
            l: DMatrix::zeros(0, 0),
            p: None,
            gamma: None,
        };
        let mut have_l = false;
        let mut i = 0;
        while i < lines.len() {
            let (ln, line) = lines[i];
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                ["case", c] => {
                    let idx: u8 = c.parse().map_err(|_| bad(ln, "invalid case"))?;
                    out.case = Some(Case::from_index(idx).ok_or_else(|| bad(ln, "invalid case"))?);
                    i += 1;
                }
                ["eta", e] => {
                    out.eta = Some(parse_f64(e).ok_or_else(|| bad(ln, "invalid eta"))?);
                    i += 1;
                }
                ["matrix", name, r, c] => {
                    let rows: usize = r.parse().map_err(|_| bad(ln, "invalid row count"))?;
                    let cols: usize = c.parse().map_err(|_| bad(ln, "invalid column count"))?;
                    let mut m = DMatrix::zeros(rows, cols);
                    for row in 0..rows {
                        let (rl, text) = *lines
                            .get(i + 1 + row)
                            .ok_or_else(|| bad(ln, "matrix is truncated"))?;
                        let vals: Vec<f64> = text
                            .split_whitespace()
                            .map(parse_f64)
                            .collect::<Option<_>>()
                            .ok_or_else(|| bad(rl, "invalid number"))?;
                        if vals.len() != cols {
                            return Err(bad(rl, "wrong number of columns"));
                        }
                        for (col, v) in vals.into_iter().enumerate() {
                            m[(row, col)] = v;
                        }
                    }
                    match *name {
                        "L" => {
                            out.l = m;
                            have_l = true;
                        }
                        "P" => out.p = Some(m),
                        "Gamma" => out.gamma = Some(m),
                        _ => return Err(bad(ln, "unknown matrix name")),
                    }
                    i += 1 + rows;
                }
                _ => return Err(bad(ln, "unrecognised line")),
            }
        }
        if !have_l {
            return Err(Error::Parse("gain file has no L matrix".into()));
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_matrix(s: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(s, "matrix {name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt17(m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn doubles_round_trip(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6)) {
            let g = GainFile {
                case: Some(Case::II),
                eta: Some(vals[0]),
                l: DMatrix::from_row_slice(2, 3, &vals),
                p: None,
                gamma: None,
            };
            let back = GainFile::parse(&g.to_text()).unwrap();
            prop_assert_eq!(back, g);
        }
    }

    #[test]
    fn full_file_round_trip() {
        let g = GainFile {
            case: Some(Case::III),
            eta: Some(127.4),
            l: DMatrix::from_row_slice(2, 1, &[0.1, 1.0 / 3.0]),
            p: Some(DMatrix::identity(2, 2)),
            gamma: Some(DMatrix::from_row_slice(2, 1, &[0.1, 1.0 / 3.0])),
        };
        assert_eq!(GainFile::parse(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn malformed_files() {
        assert!(GainFile::parse("case 3\n").is_err());
        assert!(GainFile::parse("matrix L 2 1\n1.0\n").is_err());
        assert!(GainFile::parse("matrix L 1 2\n1.0\n").is_err());
        assert!(GainFile::parse("matrix L 1 1\nnan\n").is_err());
        assert!(GainFile::parse("case 9\nmatrix L 1 1\n0\n").is_err());
        assert!(GainFile::parse("# comment\n\nmatrix L 1 1\n2.5\n").is_ok());
    }
}
