//! CSV output of filter trajectories.

use std::io::{self, Write};

use rankmean_core::Trajectory;

use crate::format::format_number;

/// `c11,c12,…` for the upper triangle of an `n×n` matrix; indices are
/// separated by an underscore once `n ≥ 10`.
pub fn coefficient_names(n: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(n * (n + 1) / 2);
    for i in 1..=n {
        for j in i..=n {
            names.push(if n < 10 { format!("c{i}{j}") } else { format!("c{i}_{j}") });
        }
    }
    names
}

pub fn write_csv<W: Write + ?Sized>(trajectory: &Trajectory, out: &mut W) -> io::Result<()> {
    let mut header = vec!["step".to_owned(), "kind".to_owned()];
    header.extend(coefficient_names(trajectory.n));
    header.push("err_fro".to_owned());
    writeln!(out, "{}", header.join(","))?;
    for row in &trajectory.rows {
        let mut fields = vec![row.step.to_string(), row.kind.as_str().to_owned()];
        fields.extend(row.coefficients.iter().map(|&c| format_number(c)));
        fields.push(format_number(row.err_fro));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
