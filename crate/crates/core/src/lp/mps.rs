//! Fixed-format MPS export.
//!
//! Sections: NAME, ROWS, COLUMNS, RHS, BOUNDS, ENDATA. Column ordering is
//! the variable index order, entries within a column follow row order, so
//! output bytes are deterministic. Names longer than eight characters are
//! replaced by generated `X…`/`R…` labels to stay within the fixed-format
//! field width.

use crate::error::Result;
use crate::scalar::Real;

use super::{LinearProgram, Relation, Sense};

const OBJ_NAME: &str = "COST";

fn sanitize(name: Option<&str>, fallback: String) -> String {
    match name {
        Some(s)
            if s.len() <= 8
                && !s.is_empty()
                && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') =>
        {
            s.to_owned()
        }
        _ => fallback,
    }
}

fn fmt_num<T: Real>(v: T) -> String {
    let v = v.as_f64();
    if v == v.trunc() && v.abs() < 1e10 {
        format!("{v:.1}")
    } else {
        format!("{v:.9E}")
    }
}

/// Renders the program as fixed-format MPS text.
///
/// The objective is always emitted as a `N COST` row in minimization
/// convention: maximization problems are written with negated objective
/// coefficients so external solvers reproduce [`LinearProgram::solve`]'s
/// optimal point.
pub fn write_mps<T: Real>(lp: &LinearProgram<T>) -> Result<String> {
    let mut lp = lp.clone();
    lp.canonicalize()?;

    let n = lp.n_vars();
    let m = lp.n_rows();
    let flip = match lp.sense() {
        Sense::Minimize => T::one(),
        Sense::Maximize => -T::one(),
    };

    let row_name: Vec<String> = (0..m)
        .map(|i| sanitize(lp.row_name(i), format!("R{:07}", i + 1)))
        .collect();
    let col_name: Vec<String> = (0..n)
        .map(|j| sanitize(lp.var_name(j), format!("X{:07}", j + 1)))
        .collect();

    let mut out = String::new();
    out.push_str("NAME          LP\n");
    out.push_str("ROWS\n");
    out.push_str(&format!(" N  {OBJ_NAME}\n"));
    for (i, name) in row_name.iter().enumerate() {
        let tag = match lp.relation(i) {
            Relation::Le => 'L',
            Relation::Eq => 'E',
            Relation::Ge => 'G',
        };
        out.push_str(&format!(" {tag}  {name}\n"));
    }

    // COLUMNS, one entry per line, objective entry first.
    let mut per_col: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for &(r, c, v) in lp.triplets_raw() {
        per_col[c].push((r, v));
    }
    out.push_str("COLUMNS\n");
    for j in 0..n {
        let obj = lp.objective_coeffs()[j] * flip;
        if obj != T::zero() {
            out.push_str(&format!(
                "    {:<8}  {:<8}  {}\n",
                col_name[j],
                OBJ_NAME,
                fmt_num(obj)
            ));
        }
        for &(r, v) in &per_col[j] {
            out.push_str(&format!(
                "    {:<8}  {:<8}  {}\n",
                col_name[j],
                row_name[r],
                fmt_num(v)
            ));
        }
    }

    out.push_str("RHS\n");
    for i in 0..m {
        let b = lp.rhs(i);
        if b != T::zero() {
            out.push_str(&format!(
                "    RHS       {:<8}  {}\n",
                row_name[i],
                fmt_num(b)
            ));
        }
    }

    // Default MPS bound is [0, +inf); emit only deviations.
    out.push_str("BOUNDS\n");
    for j in 0..n {
        let (lo, up) = lp.bounds(j);
        let name = &col_name[j];
        if lo == up {
            out.push_str(&format!(" FX BND       {:<8}  {}\n", name, fmt_num(lo)));
            continue;
        }
        if !lo.is_finite() && !up.is_finite() {
            out.push_str(&format!(" FR BND       {name:<8}\n"));
            continue;
        }
        if !lo.is_finite() {
            out.push_str(&format!(" MI BND       {name:<8}\n"));
        } else if lo != T::zero() {
            out.push_str(&format!(" LO BND       {:<8}  {}\n", name, fmt_num(lo)));
        }
        if up.is_finite() {
            out.push_str(&format!(" UP BND       {:<8}  {}\n", name, fmt_num(up)));
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_reader {
    //! Whitespace-tolerant MPS reader used only to round-trip the writer.

    use super::super::{LinearProgram, Relation, Sense};

    pub fn parse(text: &str) -> LinearProgram<f64> {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let mut section = String::new();
        let mut rows: Vec<(String, Relation)> = Vec::new();
        let mut row_index = std::collections::HashMap::new();
        let mut col_index: std::collections::HashMap<String, usize> =
            std::collections::HashMap::new();
        let mut pending_rows: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        let mut rhs: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();

        for line in text.lines() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if !line.starts_with(' ') {
                section = fields[0].to_owned();
                continue;
            }
            match section.as_str() {
                "ROWS" => {
                    let (tag, name) = (fields[0], fields[1]);
                    if tag == "N" {
                        continue;
                    }
                    let rel = match tag {
                        "L" => Relation::Le,
                        "G" => Relation::Ge,
                        "E" => Relation::Eq,
                        other => panic!("unknown row tag {other}"),
                    };
                    row_index.insert(name.to_owned(), rows.len());
                    rows.push((name.to_owned(), rel));
                    pending_rows.push((rows.len() - 1, Vec::new()));
                }
                "COLUMNS" => {
                    let col = fields[0].to_owned();
                    let var = *col_index.entry(col.clone()).or_insert_with(|| {
                        lp.add_var(0.0, 0.0, f64::INFINITY, Some(&col))
                    });
                    let mut k = 1;
                    while k + 1 < fields.len() {
                        let row = fields[k];
                        let val: f64 = fields[k + 1].parse().unwrap();
                        if row == super::OBJ_NAME {
                            set_objective(&mut lp, var, val);
                        } else {
                            let r = row_index[row];
                            pending_rows[r].1.push((var, val));
                        }
                        k += 2;
                    }
                }
                "RHS" => {
                    let mut k = 1;
                    while k + 1 < fields.len() {
                        let r = row_index[fields[k]];
                        rhs.insert(r, fields[k + 1].parse().unwrap());
                        k += 2;
                    }
                }
                "BOUNDS" => {
                    let kind = fields[0];
                    let var = col_index[fields[2]];
                    match kind {
                        "UP" => set_upper(&mut lp, var, fields[3].parse().unwrap()),
                        "LO" => set_lower(&mut lp, var, fields[3].parse().unwrap()),
                        "FX" => {
                            let v: f64 = fields[3].parse().unwrap();
                            set_lower(&mut lp, var, v);
                            set_upper(&mut lp, var, v);
                        }
                        "MI" => set_lower(&mut lp, var, f64::NEG_INFINITY),
                        "FR" => {
                            set_lower(&mut lp, var, f64::NEG_INFINITY);
                            set_upper(&mut lp, var, f64::INFINITY);
                        }
                        "PL" => set_upper(&mut lp, var, f64::INFINITY),
                        other => panic!("unknown bound kind {other}"),
                    }
                }
                _ => {}
            }
        }
        for (r, entries) in pending_rows {
            let (name, rel) = rows[r].clone();
            lp.add_row(rel, rhs.get(&r).copied().unwrap_or(0.0), &entries, Some(&name));
        }
        lp
    }

    fn set_objective(lp: &mut LinearProgram<f64>, var: usize, val: f64) {
        lp.objective[var] = val;
    }

    fn set_upper(lp: &mut LinearProgram<f64>, var: usize, val: f64) {
        lp.upper[var] = val;
    }

    fn set_lower(lp: &mut LinearProgram<f64>, var: usize, val: f64) {
        lp.lower[var] = val;
    }
}
