//! Model dump for reading and a line-based export format for replaying a
//! model in another solver.
//!
//! Export format, one record per line:
//!
//! ```text
//! acopf-model 1
//! kind det3-rlt
//! var <index> <var-ref-json> <lb> <ub> <name>
//! objective <terms>
//! cost <terms>
//! target <index> min|max
//! con <= | == | >= <terms> # <tag>
//! ```
//!
//! `<terms>` is a space-separated list of `coef` or `coef*x<i>[*x<j>...]`.
//! Every constraint reads `Σ terms (sense) 0`. Envelope inequalities are
//! written out for the bound table at export time.

use std::fmt::Write as _;

use super::{Constraint, ModelKind, ModelSpec, ObjSense, Sense, VarInfo, VarRef};
use crate::error::ModelError;
use crate::expr::Poly;

impl ModelSpec<f64> {
    /// Readable listing of variables, objective and constraints.
    pub fn dump(&self) -> String {
        let cons = self.materialize();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "model {}: {} variables, {} constraints",
            self.kind.label(),
            self.n_vars(),
            cons.len()
        );
        let _ = writeln!(s, "variables:");
        for (i, v) in self.vars.iter().enumerate() {
            let _ = writeln!(
                s,
                "  [{i:>4}] {:<24} in [{}, {}]",
                v.name, self.lower[i], self.upper[i]
            );
        }
        let _ = writeln!(s, "minimize: {}", self.named(&self.objective));
        let _ = writeln!(s, "constraints:");
        for c in &cons {
            let _ = writeln!(
                s,
                "  [{}] {} {} 0",
                c.tag,
                self.named(&c.poly),
                c.sense.symbol()
            );
        }
        s
    }

    fn named(&self, p: &Poly<f64>) -> String {
        if p.terms.is_empty() {
            return "0".to_string();
        }
        let parts: Vec<String> = p
            .terms
            .iter()
            .map(|t| {
                let mut s = format!("{:+}", t.coef);
                for v in t.mono.vars() {
                    s.push('*');
                    s.push_str(self.name(v));
                }
                s
            })
            .collect();
        parts.join(" ")
    }

    /// Replayable export; see the module documentation.
    pub fn export_text(&self) -> String {
        let mut s = String::from("acopf-model 1\n");
        let _ = writeln!(s, "kind {}", self.kind.label());
        for (i, v) in self.vars.iter().enumerate() {
            let r = serde_json::to_string(&v.var).expect("var refs serialize");
            let _ = writeln!(
                s,
                "var {i} {r} {} {} {}",
                self.lower[i], self.upper[i], v.name
            );
        }
        let _ = writeln!(s, "objective {}", terms(&self.objective));
        let _ = writeln!(s, "cost {}", terms(&self.cost));
        if let Some((i, sense)) = self.target {
            let dir = if sense == ObjSense::Min { "min" } else { "max" };
            let _ = writeln!(s, "target {i} {dir}");
        }
        for c in self.materialize() {
            let _ = writeln!(s, "con {} {} # {}", c.sense.symbol(), terms(&c.poly), c.tag);
        }
        s
    }
}

fn terms(p: &Poly<f64>) -> String {
    if p.terms.is_empty() {
        return "0".to_string();
    }
    let parts: Vec<String> = p
        .terms
        .iter()
        .map(|t| {
            let mut s = format!("{}", t.coef);
            for v in t.mono.vars() {
                let _ = write!(s, "*x{v}");
            }
            s
        })
        .collect();
    parts.join(" ")
}

fn parse_terms(text: &str, line: usize) -> Result<Poly<f64>, ModelError> {
    let err = |message: String| ModelError::Text { line, message };
    let mut out = Vec::new();
    for tok in text.split_whitespace() {
        let mut parts = tok.split('*');
        let coef: f64 = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| err(format!("bad coefficient in `{tok}`")))?;
        let mut vars = Vec::new();
        for p in parts {
            let idx = p
                .strip_prefix('x')
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| err(format!("bad variable `{p}`")))?;
            vars.push(idx);
        }
        out.push((coef, vars));
    }
    Poly::from_terms(out).map_err(|e| err(e.to_string()))
}

/// Reads a model written by `export_text`. Envelopes come back as plain
/// constraints.
pub fn import_text(text: &str) -> Result<ModelSpec<f64>, ModelError> {
    let mut kind = None;
    let mut vars = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut objective = None;
    let mut cost = Poly::zero();
    let mut target = None;
    let mut cons = Vec::new();
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    match lines.next() {
        Some((_, "acopf-model 1")) => {}
        _ => {
            return Err(ModelError::Text {
                line: 1,
                message: "missing `acopf-model 1` header".into(),
            })
        }
    }
    for (line, raw) in lines {
        let err = |message: &str| ModelError::Text {
            line,
            message: message.to_string(),
        };
        let (head, rest) = raw.split_once(' ').unwrap_or((raw, ""));
        match head {
            "" => {}
            "kind" => {
                kind = Some(ModelKind::from_label(rest.trim()).ok_or_else(|| err("unknown kind"))?)
            }
            "var" => {
                let f: Vec<&str> = rest.splitn(5, ' ').collect();
                if f.len() != 5 {
                    return Err(err("var needs index, ref, lb, ub, name"));
                }
                if f[0].parse::<usize>().ok() != Some(vars.len()) {
                    return Err(err("variables must be listed in index order"));
                }
                let var: VarRef = serde_json::from_str(f[1]).map_err(|e| err(&e.to_string()))?;
                lower.push(f[2].parse::<f64>().map_err(|_| err("bad lower bound"))?);
                upper.push(f[3].parse::<f64>().map_err(|_| err("bad upper bound"))?);
                vars.push(VarInfo {
                    var,
                    name: f[4].to_string(),
                });
            }
            "objective" => objective = Some(parse_terms(rest, line)?),
            "cost" => cost = parse_terms(rest, line)?,
            "target" => {
                let f: Vec<&str> = rest.split_whitespace().collect();
                let idx = f
                    .first()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err("bad target"))?;
                let sense = match f.get(1) {
                    Some(&"min") => ObjSense::Min,
                    Some(&"max") => ObjSense::Max,
                    _ => return Err(err("target sense must be min or max")),
                };
                target = Some((idx, sense));
            }
            "con" => {
                let (body, tag) = rest.split_once(" # ").unwrap_or((rest, ""));
                let (sym, expr) = body.split_once(' ').unwrap_or((body, ""));
                let sense = match sym {
                    "<=" => Sense::Le,
                    "==" => Sense::Eq,
                    ">=" => Sense::Ge,
                    _ => return Err(err("constraint sense must be <=, == or >=")),
                };
                cons.push(Constraint {
                    poly: parse_terms(expr, line)?,
                    sense,
                    tag: tag.to_string(),
                });
            }
            _ => return Err(err(&format!("unknown record `{head}`"))),
        }
    }
    let kind = kind.ok_or(ModelError::Text {
        line: 0,
        message: "missing kind".into(),
    })?;
    let mut m = ModelSpec::from_parts(kind, vars, lower, upper, cons, vec![], cost);
    if let Some(obj) = objective {
        m.objective = obj;
    }
    m.target = target;
    m.validate_references()?;
    Ok(m)
}
