//! Plain-text matrix files.
//!
//! ```text
//! n p
//! <n rows of n numbers: the dense symmetric matrix>
//! FACTORED
//! <n rows of p numbers: U>
//! <p rows of p numbers: R²>
//! ```
//!
//! `p = 0` marks a dense matrix without a declared rank; the `FACTORED`
//! section is optional. Numbers are written with 17 significant digits, which
//! round-trips every `f64`. Blank lines and lines starting with `#` are
//! ignored.

use std::fmt::Write as _;
use std::path::Path;

use rankmean_core::fixed_rank::{factorize, RANK_TOL};
use rankmean_core::linalg::{relative_error, Matrix, SpdMatrix, StiefelBasis, SymMatrix};
use rankmean_core::PsdFixedRank;

use crate::error::CliError;

/// Largest relative mismatch tolerated between a dense section and the
/// factored section written alongside it.
const FACTOR_CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    /// Declared rank; `None` for `p = 0`.
    pub rank: Option<usize>,
    pub dense: SymMatrix,
    pub factored: Option<PsdFixedRank>,
}

impl MatrixFile {
    pub fn from_fixed_rank(a: &PsdFixedRank) -> Self {
        Self {
            rank: Some(a.p()),
            dense: SymMatrix::symmetrize(a.to_dense()).expect("reconstruction is finite"),
            factored: Some(a.clone()),
        }
    }

    pub fn n(&self) -> usize {
        self.dense.dim()
    }

    /// The fixed-rank element described by the file. `rank` overrides the
    /// declared rank; the factored section is used when its rank matches.
    pub fn to_fixed_rank(&self, rank: Option<usize>) -> Result<PsdFixedRank, CliError> {
        let p = rank
            .or(self.rank)
            .ok_or_else(|| CliError::usage("matrix file declares no rank; pass --rank"))?;
        match &self.factored {
            Some(f) if f.p() == p => Ok(f.clone()),
            _ => Ok(factorize(&self.dense, p, RANK_TOL)?),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let n = self.n();
        let _ = writeln!(s, "{} {}", n, self.rank.unwrap_or(0));
        write_rows(&mut s, self.dense.as_matrix());
        if let Some(f) = &self.factored {
            s.push_str("FACTORED\n");
            write_rows(&mut s, f.basis().as_matrix());
            write_rows(&mut s, f.shape().as_matrix());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (line_no, header) = lines.next().ok_or_else(|| CliError::parse(1, "empty matrix file"))?;
        let header = parse_numbers::<usize>(line_no, header)?;
        let [n, p] = header[..] else {
            return Err(CliError::parse(line_no, "header must be `n p`"));
        };
        if n == 0 || p > n {
            return Err(CliError::parse(line_no, "header needs n ≥ 1 and 0 ≤ p ≤ n"));
        }
        let dense = read_block(&mut lines, n, n)?;
        let dense = SymMatrix::new(dense)?;

        let factored = match lines.next() {
            None => None,
            Some((line_no, "FACTORED")) => {
                if p == 0 {
                    return Err(CliError::parse(line_no, "FACTORED section requires p ≥ 1"));
                }
                let u = StiefelBasis::new(read_block(&mut lines, n, p)?)?;
                let shape = SpdMatrix::new(read_block(&mut lines, p, p)?)?;
                let f = PsdFixedRank::new(u, shape)?;
                if relative_error(&f.to_dense(), dense.as_matrix()) > FACTOR_CONSISTENCY_TOL {
                    return Err(CliError::parse(line_no, "FACTORED section does not match the dense matrix"));
                }
                Some(f)
            }
            Some((line_no, _)) => return Err(CliError::parse(line_no, "expected FACTORED or end of file")),
        };
        if let Some((line_no, _)) = lines.next() {
            return Err(CliError::parse(line_no, "trailing content"));
        }
        Ok(Self {
            rank: (p > 0).then_some(p),
            dense,
            factored,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }
}

/// `{:.16e}`: 17 significant digits.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows(s: &mut String, m: &Matrix) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_number(m[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
}

fn parse_numbers<T: std::str::FromStr>(line_no: usize, line: &str) -> Result<Vec<T>, CliError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| CliError::parse(line_no, &format!("cannot parse `{tok}`")))
        })
        .collect()
}

fn read_block<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    rows: usize,
    cols: usize,
) -> Result<Matrix, CliError> {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| CliError::parse(0, "unexpected end of file"))?;
        let values = parse_numbers::<f64>(line_no, line)?;
        if values.len() != cols {
            return Err(CliError::parse(
                line_no,
                &format!("expected {cols} numbers, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::parse(line_no, "non-finite value"));
        }
        for (j, v) in values.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}
