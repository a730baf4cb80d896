use std::fmt::Write;

use super::model::{IlpModel, Sense};

const LINE_WIDTH: usize = 200;

fn push_terms(out: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut line_len = 0;
    let mut first = true;
    for (coef, name) in terms {
        let piece = match (first, coef < 0.0) {
            (true, false) => format!("{} {}", coef, name),
            (true, true) => format!("- {} {}", -coef, name),
            (false, false) => format!(" + {} {}", coef, name),
            (false, true) => format!(" - {} {}", -coef, name),
        };
        if line_len + piece.len() > LINE_WIDTH {
            out.push_str("\n   ");
            line_len = 3;
        }
        line_len += piece.len();
        out.push_str(&piece);
        first = false;
    }
    if first {
        out.push('0');
    }
}

/// Render the model in CPLEX LP format.
pub fn export_lp(model: &IlpModel) -> String {
    let vars = model.variables();
    let name = |v: usize| vars[v].kind.name();
    let mut out = String::new();
    let cfg = model.config();
    let _ = writeln!(
        out,
        "\\ monitor placement: {} with {} monitors, {} links, {} nodes",
        cfg.objective.as_str().to_uppercase(),
        cfg.monitors,
        model.network().link_count(),
        model.network().node_count()
    );
    out.push_str("Maximize\n obj: ");
    push_terms(
        &mut out,
        model.objective_terms().iter().map(|&(v, c)| (c, name(v))),
    );
    out.push_str("\nSubject To\n");
    for c in model.constraints() {
        let _ = write!(out, " {}: ", c.name);
        push_terms(&mut out, c.terms.iter().map(|&(v, a)| (a, name(v))));
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", c.rhs);
    }
    let generals: Vec<usize> = (0..vars.len()).filter(|&v| !vars[v].is_binary()).collect();
    if !generals.is_empty() {
        out.push_str("Bounds\n");
        for &v in &generals {
            let _ = writeln!(out, " {} <= {} <= {}", vars[v].lower, name(v), vars[v].upper);
        }
    }
    out.push_str("Binaries\n");
    for (v, var) in vars.iter().enumerate() {
        if var.is_binary() {
            let _ = writeln!(out, " {}", name(v));
        }
    }
    if !generals.is_empty() {
        out.push_str("Generals\n");
        for &v in &generals {
            let _ = writeln!(out, " {}", name(v));
        }
    }
    out.push_str("End\n");
    out
}
