//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Criterion numbers given as arguments restrict the
//! run, e.g. `cargo test --test acceptance -- 5 6`.

mod ad;
mod cases;
mod envelopes;
mod gaps;
mod obbt;
mod soundness;

use std::io::Write;
use std::time::Instant;

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn check(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 8] = [
    ("case9 det3+rlt tightening closes to 1%", gaps::case9_closes),
    ("case9 ablations stay open without both ingredients", gaps::case9_ablations),
    ("case9_tree det3+rlt tightening closes to 1%", gaps::case9_tree_closes),
    ("root gaps on small pglib cases", gaps::root_gaps),
    ("grid-enumeration soundness on 2- and 3-bus networks", soundness::grid_soundness),
    ("envelope and determinant properties", envelopes::properties),
    ("AD derivatives against central differences", ad::derivatives),
    ("bound tightening invariants", obbt::invariants),
];

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    for (k, (name, run)) in CRITERIA.iter().enumerate() {
        let n = k + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let v = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::check(false, format!("panicked: {msg}"))
        });
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(
            out,
            "criterion {n} {tag}: {name} ({:.1}s) {}",
            start.elapsed().as_secs_f64(),
            v.detail
        );
        let _ = out.flush();
        if !v.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        let _ = writeln!(out, "failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
