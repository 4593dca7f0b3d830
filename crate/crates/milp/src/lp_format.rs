use std::fmt::Write;

use crate::model::{LinearModel, ObjSense};

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn sanitize(name: &str, fallback: String) -> String {
    let ok = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "_.[]()".contains(c))
        && !name.chars().next().unwrap().is_ascii_digit();
    if ok {
        name.to_string()
    } else {
        fallback
    }
}

fn terms(out: &mut String, coeffs: &[(crate::VarId, f64)], names: &[String]) {
    if coeffs.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&names[0]);
        return;
    }
    for (k, &(v, c)) in coeffs.iter().enumerate() {
        let sign = if c < 0.0 { "-" } else { "+" };
        if k == 0 && c >= 0.0 {
            let _ = write!(out, " {} {}", fmt_num(c), names[v.0]);
        } else {
            let _ = write!(out, " {} {} {}", sign, fmt_num(c.abs()), names[v.0]);
        }
    }
}

/// Renders the model in CPLEX LP text format, one row per line.
pub fn to_lp_string(model: &LinearModel) -> String {
    let names: Vec<String> = model
        .vars
        .iter()
        .enumerate()
        .map(|(j, v)| sanitize(&v.name, format!("x{j}")))
        .collect();
    let mut out = String::new();
    out.push_str(match model.sense {
        ObjSense::Maximize => "Maximize\n",
        ObjSense::Minimize => "Minimize\n",
    });
    out.push_str(" obj:");
    terms(&mut out, &model.objective, &names);
    if model.objective_constant != 0.0 {
        let _ = write!(out, " + {}", fmt_num(model.objective_constant));
    }
    out.push_str("\nSubject To\n");
    for (i, c) in model.constraints.iter().enumerate() {
        let _ = write!(out, " {}:", sanitize(&c.name, format!("c{i}")));
        terms(&mut out, &c.coeffs, &names);
        let _ = writeln!(out, " {} {}", c.cmp.symbol(), fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in model.vars.iter().zip(&names) {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), name, fmt_num(v.upper));
            }
            (true, false) => {
                let _ = writeln!(out, " {} >= {}", name, fmt_num(v.lower));
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {} <= {}", name, fmt_num(v.upper));
            }
        }
    }
    let ints: Vec<&String> = model
        .vars
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.integer)
        .map(|(_, n)| n)
        .collect();
    if !ints.is_empty() {
        out.push_str("General\n");
        for chunk in ints.chunks(8) {
            let line: Vec<&str> = chunk.iter().map(|s| s.as_str()).collect();
            let _ = writeln!(out, " {}", line.join(" "));
        }
    }
    out.push_str("End\n");
    out
}
