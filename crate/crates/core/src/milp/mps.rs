//! MPS export and a reader for the subset the exporter writes.
//!
//! Fields are aligned to the fixed-format columns; names longer than eight
//! characters push later fields right, which free-format readers accept.
//! The objective constant is written as the negated RHS of the objective row.

use std::collections::HashMap;
use std::fmt::Write;

use super::{Constraint, LinearModel, MilpError, MilpModel, Sense, VarKind, Variable};

const OBJ: &str = "COST";

fn line(out: &mut String, code: &str, a: &str, b: &str, value: Option<f64>) {
    let mut s = format!(" {code:<2} {a:<8}  {b:<8}");
    if let Some(v) = value {
        let _ = write!(s, "  {:>12}", fmt_num(v));
    }
    out.push_str(s.trim_end());
    out.push('\n');
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn export_mps(model: &MilpModel) -> String {
    let p = &model.program;
    let mut out = String::new();
    out.push_str("NAME          LABELOPT\n");
    out.push_str("ROWS\n");
    line(&mut out, "N", OBJ, "", None);
    for c in &p.constraints {
        let code = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
        };
        line(&mut out, code, &c.name, "", None);
    }

    let mut by_column: Vec<Vec<(&str, f64)>> = vec![Vec::new(); p.variables.len()];
    for (j, &c) in p.objective.iter().enumerate() {
        if c != 0.0 {
            by_column[j].push((OBJ, c));
        }
    }
    for c in &p.constraints {
        for &(j, a) in &c.coeffs {
            by_column[j].push((&c.name, a));
        }
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut markers = 0;
    for (v, entries) in p.variables.iter().zip(&by_column) {
        let int = v.kind == VarKind::Binary;
        if int != in_int {
            let tag = if int { "'INTORG'" } else { "'INTEND'" };
            out.push_str(&format!("    MARKER{markers:<4}  'MARKER'                 {tag}\n"));
            markers += 1;
            in_int = int;
        }
        for &(row, a) in entries {
            line(&mut out, "", &v.name, row, Some(a));
        }
    }
    if in_int {
        out.push_str(&format!("    MARKER{markers:<4}  'MARKER'                 'INTEND'\n"));
    }

    out.push_str("RHS\n");
    if p.objective_constant != 0.0 {
        line(&mut out, "", "RHS", OBJ, Some(-p.objective_constant));
    }
    for c in &p.constraints {
        if c.rhs != 0.0 {
            line(&mut out, "", "RHS", &c.name, Some(c.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for v in &p.variables {
        match v.kind {
            VarKind::Binary => line(&mut out, "BV", "BND", &v.name, None),
            VarKind::Continuous => {
                line(&mut out, "LO", "BND", &v.name, Some(v.lower));
                line(&mut out, "UP", "BND", &v.name, Some(v.upper));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Done,
}

/// Reads text produced by [`export_mps`] back into a program. Columns that
/// appear inside integer markers without explicit bounds become binaries.
pub fn parse_mps(text: &str) -> Result<LinearModel, MilpError> {
    let mut section = Section::None;
    let mut objective_row: Option<String> = None;
    let mut constraints: Vec<Constraint> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut variables: Vec<Variable> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut objective: Vec<f64> = Vec::new();
    let mut objective_constant = 0.0;
    let mut in_int = false;

    for (ln, raw) in text.lines().enumerate() {
        let err = |message: String| MilpError::Mps { line: ln + 1, message };
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            section = match fields[0] {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::Done,
                other => return Err(err(format!("unknown section `{other}`"))),
            };
            continue;
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
        match section {
            Section::Rows => {
                let [code, name] = fields[..] else {
                    return Err(err("expected `type name`".into()));
                };
                let sense = match code {
                    "N" => {
                        objective_row = Some(name.to_string());
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    other => return Err(err(format!("unsupported row type `{other}`"))),
                };
                row_index.insert(name.to_string(), constraints.len());
                constraints.push(Constraint {
                    name: name.to_string(),
                    coeffs: Vec::new(),
                    sense,
                    rhs: 0.0,
                });
            }
            Section::Columns => {
                if fields.get(1) == Some(&"'MARKER'") {
                    match fields.get(2) {
                        Some(&"'INTORG'") => in_int = true,
                        Some(&"'INTEND'") => in_int = false,
                        _ => return Err(err("bad marker".into())),
                    }
                    continue;
                }
                if fields.len() < 3 || fields.len().is_multiple_of(2) {
                    return Err(err("expected `column row value [row value]`".into()));
                }
                let col = *col_index.entry(fields[0].to_string()).or_insert_with(|| {
                    variables.push(Variable {
                        name: fields[0].to_string(),
                        kind: if in_int { VarKind::Binary } else { VarKind::Continuous },
                        lower: 0.0,
                        upper: if in_int { 1.0 } else { f64::INFINITY },
                    });
                    objective.push(0.0);
                    variables.len() - 1
                });
                for pair in fields[1..].chunks(2) {
                    let value = num(pair[1])?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        objective[col] = value;
                    } else {
                        let &r = row_index
                            .get(pair[0])
                            .ok_or_else(|| err(format!("unknown row `{}`", pair[0])))?;
                        constraints[r].coeffs.push((col, value));
                    }
                }
            }
            Section::Rhs => {
                if fields.len() < 3 || fields.len().is_multiple_of(2) {
                    return Err(err("expected `set row value [row value]`".into()));
                }
                for pair in fields[1..].chunks(2) {
                    let value = num(pair[1])?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        objective_constant = -value;
                    } else {
                        let &r = row_index
                            .get(pair[0])
                            .ok_or_else(|| err(format!("unknown row `{}`", pair[0])))?;
                        constraints[r].rhs = value;
                    }
                }
            }
            Section::Bounds => {
                if fields.len() < 3 {
                    return Err(err("expected `type set column [value]`".into()));
                }
                let &col = col_index
                    .get(fields[2])
                    .ok_or_else(|| err(format!("unknown column `{}`", fields[2])))?;
                let v = &mut variables[col];
                match (fields[0], fields.get(3)) {
                    ("BV", _) => {
                        v.kind = VarKind::Binary;
                        v.lower = 0.0;
                        v.upper = 1.0;
                    }
                    ("LO", Some(s)) => v.lower = num(s)?,
                    ("UP", Some(s)) => v.upper = num(s)?,
                    ("FX", Some(s)) => {
                        v.lower = num(s)?;
                        v.upper = v.lower;
                    }
                    ("FR", _) => {
                        v.lower = f64::NEG_INFINITY;
                        v.upper = f64::INFINITY;
                    }
                    (code, _) => return Err(err(format!("unsupported bound `{code}`"))),
                }
            }
            Section::None | Section::Done => {
                return Err(err("data outside a section".into()));
            }
        }
    }
    if section != Section::Done {
        return Err(MilpError::Mps {
            line: text.lines().count(),
            message: "missing ENDATA".into(),
        });
    }
    for c in &mut constraints {
        c.coeffs.sort_by_key(|&(j, _)| j);
    }
    Ok(LinearModel {
        variables,
        constraints,
        objective,
        objective_constant,
    })
}
