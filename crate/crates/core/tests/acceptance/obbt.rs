use acopf_core::sdpbt::{run, BtConfig, Closure, Outcome};
use acopf_core::Relaxation;

use crate::cases::{case, case9, multistart};
use crate::Verdict;

fn closures(o: &Outcome) -> (usize, usize) {
    o.ledger.entries.iter().fold((0, 0), |(c1, c2), e| match e.closed {
        Some(Closure::C1) => (c1 + 1, c2),
        Some(Closure::C2) => (c1, c2 + 1),
        None => (c1, c2),
    })
}

/// Audits the ledger history: nondecreasing lower bound, intervals that
/// never widen and closures backed by (C1) or (C2).
fn audited(name: &str, o: &Outcome, eps_d: f64) -> Result<String, String> {
    o.ledger.audit(eps_d).map_err(|e| format!("{name}: {e}"))?;
    let trace = &o.report.trace;
    if trace.windows(2).any(|w| w[1].lower_bound < w[0].lower_bound) {
        return Err(format!("{name}: lower bound trace decreases"));
    }
    if o.ledger.history.len() != o.report.iterations + 1 {
        return Err(format!("{name}: history has {} snapshots for {} iterations", o.ledger.history.len(), o.report.iterations));
    }
    let (c1, c2) = closures(o);
    Ok(format!("{name} audited over {} iterations (closed C1 {c1}, C2 {c2})", o.report.iterations))
}

pub fn invariants() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    let mut note = |r: Result<String, String>| match r {
        Ok(s) => parts.push(s),
        Err(e) => {
            pass = false;
            parts.push(format!("FAILED {e}"));
        }
    };

    let net = case("nesta_case9_bgm__nco_tree");
    let upper = multistart(&net);
    let with = |threads: usize| {
        let cfg = BtConfig {
            threads,
            ..BtConfig::default()
        };
        run(&net, Relaxation::Det3Rlt, upper.clone(), &cfg).expect("tightening runs")
    };
    let (serial, parallel) = (with(1), with(12));
    let eps_d = BtConfig::default().eps_d;
    note(audited("case9_tree T=1", &serial, eps_d));
    note(audited("case9_tree T=12", &parallel, eps_d));
    let same_history = serial.ledger.history == parallel.ledger.history;
    let same_entries = serial.ledger.entries == parallel.ledger.entries;
    note(if same_history && same_entries {
        Ok(format!("T=1 and T=12 ledgers identical over {} snapshots", serial.ledger.history.len()))
    } else {
        Err(format!("T=1 and T=12 ledgers differ (history equal {same_history}, entries equal {same_entries})"))
    });
    note(audited("case9", &case9().full, eps_d));

    Verdict::check(pass, parts.join("; "))
}
