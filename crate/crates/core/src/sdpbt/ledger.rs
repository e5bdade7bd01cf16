//! Domains of the tightened variables and their per-iteration history.

use serde::{Deserialize, Serialize};

use crate::relax::ModelSpec;

/// Why a variable stopped being tightened.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Closure {
    /// Both endpoints moved by at most `eps_d` during the last major
    /// iteration.
    C1,
    /// The interval is at most `eps_d` wide.
    C2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// Position in the model registry.
    pub var: usize,
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub closed: Option<Closure>,
    /// Major iteration during which the variable closed.
    pub closed_at: Option<usize>,
    /// Subproblem solves that did not return an optimal point.
    pub failures: usize,
}

impl LedgerEntry {
    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }
}

/// State at the end of a major iteration; iteration 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub lower_bound: f64,
    pub gap: f64,
    pub bounds: Vec<(f64, f64)>,
    pub closed: Vec<Option<Closure>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundLedger {
    pub entries: Vec<LedgerEntry>,
    pub history: Vec<Snapshot>,
}

impl BoundLedger {
    /// One entry per tightenable variable of `m`, starting from its box.
    pub fn new(m: &ModelSpec<f64>) -> Self {
        let entries = m
            .tightenable()
            .into_iter()
            .map(|i| LedgerEntry {
                var: i,
                name: m.name(i).to_string(),
                lb: m.lower[i],
                ub: m.upper[i],
                closed: None,
                closed_at: None,
                failures: 0,
            })
            .collect();
        BoundLedger {
            entries,
            history: Vec::new(),
        }
    }

    /// `m` with the ledger's domains written into its bound table.
    pub fn apply(&self, m: &ModelSpec<f64>) -> ModelSpec<f64> {
        let (mut lower, mut upper) = (m.lower.clone(), m.upper.clone());
        for e in &self.entries {
            lower[e.var] = e.lb;
            upper[e.var] = e.ub;
        }
        m.with_bounds(lower, upper)
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.entries.iter().map(|e| (e.lb, e.ub)).collect()
    }

    /// Open entries, widest first; ties keep registry order.
    pub fn open_by_width(&self) -> Vec<usize> {
        let mut open: Vec<usize> = (0..self.entries.len())
            .filter(|&k| self.entries[k].closed.is_none())
            .collect();
        open.sort_by(|&a, &b| {
            self.entries[b]
                .width()
                .total_cmp(&self.entries[a].width())
                .then(a.cmp(&b))
        });
        open
    }

    pub fn all_closed(&self) -> bool {
        self.entries.iter().all(|e| e.closed.is_some())
    }

    /// Raises the lower end of entry `k` to `v` if that shrinks it. A value
    /// beyond the upper end collapses the interval onto it.
    pub fn raise_lower(&mut self, k: usize, v: f64) {
        let e = &mut self.entries[k];
        if v.is_finite() && v > e.lb {
            e.lb = v.min(e.ub);
        }
    }

    /// Mirror image of [`raise_lower`](Self::raise_lower).
    pub fn lower_upper(&mut self, k: usize, v: f64) {
        let e = &mut self.entries[k];
        if v.is_finite() && v < e.ub {
            e.ub = v.max(e.lb);
        }
    }

    /// Marks entry `k` closed if (C2) or, against the bounds `prev` it had
    /// when the major iteration began, (C1) holds.
    pub fn try_close(
        &mut self,
        k: usize,
        prev: (f64, f64),
        eps_d: f64,
        iteration: usize,
    ) -> Option<Closure> {
        let e = &mut self.entries[k];
        let rule = if e.ub - e.lb <= eps_d {
            Some(Closure::C2)
        } else if (e.lb - prev.0).abs() <= eps_d && (e.ub - prev.1).abs() <= eps_d {
            Some(Closure::C1)
        } else {
            None
        };
        if rule.is_some() {
            e.closed = rule;
            e.closed_at = Some(iteration);
        }
        rule
    }

    pub fn record(&mut self, iteration: usize, lower_bound: f64, gap: f64) {
        self.history.push(Snapshot {
            iteration,
            lower_bound,
            gap,
            bounds: self.bounds(),
            closed: self.entries.iter().map(|e| e.closed).collect(),
        });
    }

    /// Re-derives every monotonicity and closure claim from the history.
    pub fn audit(&self, eps_d: f64) -> Result<(), String> {
        for pair in self.history.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.lower_bound < a.lower_bound {
                return Err(format!("lower bound fell at iteration {}", b.iteration));
            }
            for (k, (&(l0, u0), &(l1, u1))) in a.bounds.iter().zip(&b.bounds).enumerate() {
                let name = &self.entries[k].name;
                if l1 > u1 {
                    return Err(format!("{name} is empty at iteration {}", b.iteration));
                }
                if l1 < l0 || u1 > u0 {
                    return Err(format!("{name} widened at iteration {}", b.iteration));
                }
                if a.closed[k].is_some() && (l1 != l0 || u1 != u0 || b.closed[k] != a.closed[k]) {
                    return Err(format!("{name} moved after closing"));
                }
                let justified = match (a.closed[k], b.closed[k]) {
                    (None, Some(Closure::C2)) => u1 - l1 <= eps_d,
                    (None, Some(Closure::C1)) => {
                        (l1 - l0).abs() <= eps_d && (u1 - u0).abs() <= eps_d
                    }
                    _ => true,
                };
                if !justified {
                    return Err(format!(
                        "{name} closed without its condition at iteration {}",
                        b.iteration
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::two_bus;
    use crate::relax::{build_relaxation, Relaxation};

    fn ledger() -> BoundLedger {
        let m = build_relaxation(&two_bus(), Relaxation::Det3Rlt).unwrap();
        BoundLedger::new(&m)
    }

    #[test]
    fn bounds_only_shrink() {
        let mut l = ledger();
        let (lb, ub) = (l.entries[0].lb, l.entries[0].ub);
        l.raise_lower(0, lb - 1.0);
        l.lower_upper(0, ub + 1.0);
        assert_eq!((l.entries[0].lb, l.entries[0].ub), (lb, ub));
        l.raise_lower(0, ub + 5.0);
        assert_eq!(l.entries[0].lb, ub);
        l.lower_upper(0, f64::NAN);
        assert_eq!(l.entries[0].ub, ub);
    }

    #[test]
    fn closure_rules() {
        let mut l = ledger();
        let prev = (l.entries[0].lb, l.entries[0].ub);
        assert_eq!(l.try_close(0, prev, 1e-3, 1), Some(Closure::C1));
        let prev = (l.entries[1].lb, l.entries[1].ub);
        l.raise_lower(1, prev.0 + 0.01);
        assert_eq!(l.try_close(1, prev, 1e-3, 1), None);
        let ub = l.entries[1].ub;
        l.raise_lower(1, ub - 1e-4);
        assert_eq!(l.try_close(1, prev, 1e-3, 1), Some(Closure::C2));
    }

    #[test]
    fn audit_catches_widening_and_unjustified_closure() {
        let mut l = ledger();
        l.record(0, 1.0, 5.0);
        l.raise_lower(0, l.entries[0].lb + 0.1);
        l.record(1, 1.0, 5.0);
        assert!(l.audit(1e-3).is_ok());
        let mut bad = l.clone();
        bad.history[1].bounds[0].0 -= 1.0;
        assert!(bad.audit(1e-3).is_err());
        let mut bad = l.clone();
        bad.history[1].closed[0] = Some(Closure::C1);
        assert!(bad.audit(1e-3).is_err());
        let mut bad = l;
        bad.history[1].lower_bound = 0.5;
        assert!(bad.audit(1e-3).is_err());
    }

    #[test]
    fn widest_first() {
        let mut l = ledger();
        l.lower_upper(0, l.entries[0].lb + 1e-6);
        let order = l.open_by_width();
        assert_eq!(*order.last().unwrap(), 0);
    }
}
