//! Reader for the MATPOWER `.m` case subset: `mpc.baseMVA`, `mpc.bus`,
//! `mpc.gen`, `mpc.branch` and `mpc.gencost` (polynomial model 2).

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use super::{Branch, Bus, BusKind, Generator, Network};
use crate::error::CaseError;

// MATPOWER column positions (zero based).
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const QD: usize = 3;
const GS: usize = 4;
const BS: usize = 5;
const VMAX: usize = 11;
const VMIN: usize = 12;

const GEN_BUS: usize = 0;
const QMAX: usize = 3;
const QMIN: usize = 4;
const GEN_STATUS: usize = 7;
const PMAX: usize = 8;
const PMIN: usize = 9;

const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_B: usize = 4;
const RATE_A: usize = 5;
const TAP: usize = 8;
const SHIFT: usize = 9;
const BR_STATUS: usize = 10;
const ANGMIN: usize = 11;
const ANGMAX: usize = 12;

struct Table {
    line: usize,
    rows: Vec<Vec<f64>>,
}

/// Parses and validates a case. Any invariant violation is an error.
pub fn parse_case(text: &str) -> Result<Network, CaseError> {
    let net = parse_case_unchecked(text)?;
    let violations = net.validate();
    if violations.is_empty() {
        Ok(net)
    } else {
        Err(CaseError::Invalid(violations))
    }
}

/// Parses a case without running `Network::validate`.
pub fn parse_case_unchecked(text: &str) -> Result<Network, CaseError> {
    let (name, scalars, tables) = scan(text)?;
    let base_mva = *scalars
        .get("baseMVA")
        .ok_or_else(|| CaseError::Missing("mpc.baseMVA".into()))?;
    if !(base_mva > 0.0) {
        return Err(CaseError::Parse {
            line: 0,
            message: "baseMVA must be positive".into(),
        });
    }
    let table = |key: &str| {
        tables
            .get(key)
            .ok_or_else(|| CaseError::Missing(format!("mpc.{key}")))
    };
    let bus_t = table("bus")?;
    let gen_t = table("gen")?;
    let branch_t = table("branch")?;
    let cost_t = tables.get("gencost");

    let mut buses = Vec::new();
    for (k, row) in bus_t.rows.iter().enumerate() {
        need(row, VMIN + 1, bus_t.line, "bus", k)?;
        let kind = match row[BUS_TYPE] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Reference,
            4 => continue,
            other => {
                return Err(CaseError::Parse {
                    line: bus_t.line,
                    message: format!("bus row {}: unknown bus type {other}", k + 1),
                })
            }
        };
        buses.push(Bus {
            id: as_id(row[BUS_I], bus_t.line, "bus", k)?,
            kind,
            demand: Complex64::new(row[PD], row[QD]) / base_mva,
            shunt: Complex64::new(row[GS], row[BS]) / base_mva,
            vmin: row[VMIN],
            vmax: row[VMAX],
        });
    }
    let live: BTreeMap<usize, ()> = buses.iter().map(|b| (b.id, ())).collect();
    // Buses present in the file but typed isolated: their equipment is dropped.
    let isolated =
        |id: usize| !live.contains_key(&id) && bus_t.rows.iter().any(|r| r[BUS_I] as usize == id);

    let mut generators = Vec::new();
    for (k, row) in gen_t.rows.iter().enumerate() {
        need(row, PMIN + 1, gen_t.line, "gen", k)?;
        let bus = as_id(row[GEN_BUS], gen_t.line, "gen", k)?;
        if row[GEN_STATUS] <= 0.0 || isolated(bus) {
            continue;
        }
        let (c0, c1, c2) = match cost_t.and_then(|t| t.rows.get(k).map(|r| (t.line, r))) {
            Some((line, r)) => cost_coefficients(r, line, k)?,
            None => {
                return Err(CaseError::Invalid(vec![super::Violation::new(
                    &format!("generator {} (bus {bus})", k + 1),
                    "missing gencost row",
                )]))
            }
        };
        generators.push(Generator {
            bus,
            pmin: row[PMIN] / base_mva,
            pmax: row[PMAX] / base_mva,
            qmin: row[QMIN] / base_mva,
            qmax: row[QMAX] / base_mva,
            c0,
            c1,
            c2,
        });
    }

    let demand_abs: f64 = buses.iter().map(|b| b.demand.norm()).sum();
    let surrogate = if demand_abs > 0.0 {
        5.0 * demand_abs
    } else {
        let cap: f64 = generators
            .iter()
            .map(|g| Complex64::new(g.pmax, g.qmax.abs().max(g.qmin.abs())).norm())
            .sum();
        5.0 * cap.max(1.0)
    };

    let mut branches = Vec::new();
    for (k, row) in branch_t.rows.iter().enumerate() {
        need(row, BR_STATUS + 1, branch_t.line, "branch", k)?;
        if row[BR_STATUS] <= 0.0 {
            continue;
        }
        let from = as_id(row[F_BUS], branch_t.line, "branch", k)?;
        let to = as_id(row[T_BUS], branch_t.line, "branch", k)?;
        if isolated(from) || isolated(to) {
            continue;
        }
        let (r, x) = (row[BR_R], row[BR_X]);
        let z = Complex64::new(r, x);
        let series = if z.norm_sqr() > 0.0 {
            z.inv()
        } else {
            Complex64::new(f64::INFINITY, f64::INFINITY)
        };
        let ratio = if row[TAP] == 0.0 { 1.0 } else { row[TAP] };
        let shift = row[SHIFT].to_radians();
        let rate = row[RATE_A];
        let thermal_limit = if rate > 0.0 {
            (rate / base_mva).powi(2)
        } else {
            surrogate * surrogate
        };
        let (mut amin, mut amax) = if row.len() > ANGMAX {
            (row[ANGMIN], row[ANGMAX])
        } else {
            (0.0, 0.0)
        };
        if amin == 0.0 && amax == 0.0 {
            amin = -90.0;
            amax = 90.0;
        }
        branches.push(Branch {
            from,
            to,
            r,
            x,
            series,
            charging: Complex64::new(0.0, row[BR_B] / 2.0),
            tap: Complex64::from_polar(ratio, shift),
            thermal_limit,
            angle_min: amin.to_radians().max(-FRAC_PI_2),
            angle_max: amax.to_radians().min(FRAC_PI_2),
        });
    }

    Ok(Network::new(name, base_mva, buses, generators, branches))
}

fn cost_coefficients(row: &[f64], line: usize, k: usize) -> Result<(f64, f64, f64), CaseError> {
    let bad = |message: String| CaseError::Parse { line, message };
    if row.len() < 4 {
        return Err(bad(format!("gencost row {}: too few columns", k + 1)));
    }
    if row[0] as i64 != 2 {
        return Err(bad(format!(
            "gencost row {}: only polynomial cost (model 2) is supported",
            k + 1
        )));
    }
    let n = row[3] as usize;
    if n > 3 {
        return Err(bad(format!(
            "gencost row {}: polynomial with {n} coefficients (at most 3 supported)",
            k + 1
        )));
    }
    if row.len() < 4 + n {
        return Err(bad(format!(
            "gencost row {}: expected {n} coefficients",
            k + 1
        )));
    }
    let c = &row[4..4 + n];
    Ok(match n {
        0 => (0.0, 0.0, 0.0),
        1 => (c[0], 0.0, 0.0),
        2 => (c[1], c[0], 0.0),
        _ => (c[2], c[1], c[0]),
    })
}

fn need(row: &[f64], cols: usize, line: usize, table: &str, k: usize) -> Result<(), CaseError> {
    if row.len() < cols {
        Err(CaseError::Parse {
            line,
            message: format!(
                "{table} row {}: expected at least {cols} columns, found {}",
                k + 1,
                row.len()
            ),
        })
    } else {
        Ok(())
    }
}

fn as_id(v: f64, line: usize, table: &str, k: usize) -> Result<usize, CaseError> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(CaseError::Parse {
            line,
            message: format!("{table} row {}: invalid bus number {v}", k + 1),
        })
    }
}

type Scan = (String, BTreeMap<String, f64>, BTreeMap<String, Table>);

/// Splits the file into `mpc.<field>` assignments. Numeric matrices and
/// scalars are kept; strings and cell arrays are skipped.
fn scan(text: &str) -> Result<Scan, CaseError> {
    let mut name = String::from("case");
    let mut scalars = BTreeMap::new();
    let mut tables = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();

    while let Some((ln, raw)) = lines.next() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some((_, n)) = rest.split_once('=') {
                name = n.trim().trim_end_matches(';').trim().to_string();
            }
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            continue;
        };
        let Some((field, value)) = rest.split_once('=') else {
            return Err(CaseError::Parse {
                line: ln + 1,
                message: format!("expected assignment, found `{line}`"),
            });
        };
        let field = field.trim().to_string();
        let value = value.trim();
        if value.starts_with('[') {
            let start = ln + 1;
            let mut body = String::new();
            let mut chunk = value[1..].to_string();
            let mut chunk_line = start;
            let mut row_lines = Vec::new();
            loop {
                if let Some(end) = chunk.find(']') {
                    push_rows(&chunk[..end], chunk_line, &mut body, &mut row_lines);
                    break;
                }
                push_rows(&chunk, chunk_line, &mut body, &mut row_lines);
                match lines.next() {
                    Some((l2, r2)) => {
                        chunk = strip_comment(r2).to_string();
                        chunk_line = l2 + 1;
                    }
                    None => {
                        return Err(CaseError::Parse {
                            line: start,
                            message: format!("unterminated matrix `mpc.{field}`"),
                        })
                    }
                }
            }
            let mut rows = Vec::new();
            for (row_text, row_line) in body.split('\n').zip(row_lines) {
                let toks: Vec<&str> = row_text
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .collect();
                if toks.is_empty() {
                    continue;
                }
                let mut row = Vec::with_capacity(toks.len());
                for t in toks {
                    row.push(parse_number(t).ok_or_else(|| CaseError::Parse {
                        line: row_line,
                        message: format!("malformed number `{t}` in mpc.{field}"),
                    })?);
                }
                rows.push(row);
            }
            if let Some(w) = rows.first().map(Vec::len) {
                if let Some(bad) = rows.iter().position(|r| r.len() != w) {
                    return Err(CaseError::Parse {
                        line: start,
                        message: format!(
                            "ragged matrix mpc.{field}: row {} has {} columns, expected {w}",
                            bad + 1,
                            rows[bad].len()
                        ),
                    });
                }
            }
            tables.insert(field, Table { line: start, rows });
        } else if value.starts_with('{') {
            if !value.contains('}') {
                for (_, r2) in lines.by_ref() {
                    if strip_comment(r2).contains('}') {
                        break;
                    }
                }
            }
        } else if value.starts_with('\'') || value.starts_with('"') {
            continue;
        } else {
            let v = value.trim_end_matches(';').trim();
            let num = parse_number(v).ok_or_else(|| CaseError::Parse {
                line: ln + 1,
                message: format!("malformed scalar `{v}` for mpc.{field}"),
            })?;
            scalars.insert(field, num);
        }
    }
    Ok((name, scalars, tables))
}

/// Appends the rows of one physical line (rows split on `;`), tracking the
/// source line of each row.
fn push_rows(chunk: &str, line: usize, body: &mut String, row_lines: &mut Vec<usize>) {
    for piece in chunk.split(';') {
        body.push_str(piece);
        body.push('\n');
        row_lines.push(line);
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_number(t: &str) -> Option<f64> {
    match t {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => t.parse::<f64>().ok(),
    }
}
