//! Post-solve optimality check computed from the model alone.

use serde::{Deserialize, Serialize};

use crate::relax::{ModelSpec, Sense};

/// Infinity-norm residuals of the first-order conditions.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    /// Largest wrong-signed inequality or bound multiplier.
    pub dual_sign: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.feasibility)
            .max(self.complementarity)
            .max(self.dual_sign)
    }
}

/// Evaluates the KKT residuals of `m` at `x` with constraint multipliers
/// `duals` (one per materialized constraint, `≥ 0` for inequalities) and
/// bound multipliers `bound_duals` (`z_lower − z_upper`).
///
/// The Lagrangian is `f + Σ y g` for `≤` and `=` rows and `f − Σ y g` for
/// `≥` rows. Fixed variables carry whatever bound multiplier balances
/// their gradient, so they are left out of stationarity.
pub fn kkt_check(m: &ModelSpec<f64>, x: &[f64], duals: &[f64], bound_duals: &[f64]) -> KktReport {
    let cons = m.materialize();
    assert_eq!(duals.len(), cons.len(), "one multiplier per constraint");
    let mut grad = vec![0.0; m.n_vars()];
    m.objective.for_each_grad(x, |v, g| grad[v] += g);
    let mut rep = KktReport::default();
    for (c, &y) in cons.iter().zip(duals) {
        let g = c.poly.eval(x);
        let w = match c.sense {
            Sense::Ge => -y,
            _ => y,
        };
        c.poly.for_each_grad(x, |v, d| grad[v] += w * d);
        match c.sense {
            Sense::Eq => rep.feasibility = rep.feasibility.max(g.abs()),
            Sense::Le => {
                rep.feasibility = rep.feasibility.max(g);
                rep.complementarity = rep.complementarity.max((y * g).abs());
                rep.dual_sign = rep.dual_sign.max(-y);
            }
            Sense::Ge => {
                rep.feasibility = rep.feasibility.max(-g);
                rep.complementarity = rep.complementarity.max((y * g).abs());
                rep.dual_sign = rep.dual_sign.max(-y);
            }
        }
    }
    for i in 0..m.n_vars() {
        let (l, u, z) = (m.lower[i], m.upper[i], bound_duals[i]);
        rep.feasibility = rep.feasibility.max(l - x[i]).max(x[i] - u);
        if u - l <= 1e-12 * l.abs().max(1.0) {
            continue;
        }
        rep.stationarity = rep.stationarity.max((grad[i] - z).abs());
        if z > 0.0 {
            let gap = if l.is_finite() {
                x[i] - l
            } else {
                f64::INFINITY
            };
            rep.complementarity = rep.complementarity.max(z * gap);
        } else if z < 0.0 {
            let gap = if u.is_finite() {
                u - x[i]
            } else {
                f64::INFINITY
            };
            rep.complementarity = rep.complementarity.max(-z * gap);
        }
    }
    rep.feasibility = rep.feasibility.max(0.0);
    rep
}
