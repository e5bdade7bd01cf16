//! Optimization models over a shared variable registry: the nonconvex
//! rectangular-voltage ACOPF, determinant relaxations in `W` space, their
//! strengthening with current/power product cuts and envelopes, and the
//! bound-tightening subproblem.

mod build;
mod text;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::expr::Poly;
use crate::scalar::Scalar;

pub use build::{
    add_rlt_cuts, build_acopf, build_detsdp, build_obbt_sub, build_relaxation, lift_point,
};
pub use text::import_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKind {
    Wii,
    WijRe,
    WijIm,
    Pg,
    Qg,
    Pflow,
    Qflow,
    L,
    Phat,
    Qhat,
    LWhat,
    Vre,
    Vim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    From,
    To,
}

/// What a variable is attached to. Buses are positions in
/// `Network::buses`, pairs are ordered `(min, max)` positions, generators
/// and branches are positions in their lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKey {
    Bus(usize),
    Pair(usize, usize),
    Gen(usize),
    Branch(usize, Dir),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarRef {
    pub kind: VarKind,
    pub key: VarKey,
}

impl VarRef {
    pub fn new(kind: VarKind, key: VarKey) -> Self {
        VarRef { kind, key }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarInfo {
    pub var: VarRef,
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "==",
            Sense::Ge => ">=",
        }
    }
}

/// `poly (sense) 0`, labelled with the family it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub poly: Poly<T>,
    pub sense: Sense,
    pub tag: String,
}

impl<T: Scalar> Constraint<T> {
    /// Amount by which `x` violates the constraint; zero when satisfied.
    pub fn violation(&self, x: &[T]) -> T {
        let v = self.poly.eval(x);
        match self.sense {
            Sense::Le => v.max_val(T::zero()),
            Sense::Ge => (-v).max_val(T::zero()),
            Sense::Eq => v.abs_val(),
        }
    }
}

/// Bound-dependent convex envelope of a product, regenerated whenever
/// parent bounds change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Envelope {
    /// `y` relaxes `x²`.
    Secant { y: usize, x: usize },
    /// `w` relaxes `x · y`.
    McCormick { w: usize, x: usize, y: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Nonconvex,
    DetSoc,
    Det3,
    DetSocRlt,
    Det3Rlt,
    ObbtSub,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Nonconvex => "nonconvex",
            ModelKind::DetSoc => "det-soc",
            ModelKind::Det3 => "det3",
            ModelKind::DetSocRlt => "det-soc-rlt",
            ModelKind::Det3Rlt => "det3-rlt",
            ModelKind::ObbtSub => "obbt-sub",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [
            ModelKind::Nonconvex,
            ModelKind::DetSoc,
            ModelKind::Det3,
            ModelKind::DetSocRlt,
            ModelKind::Det3Rlt,
            ModelKind::ObbtSub,
        ]
        .into_iter()
        .find(|k| k.label() == s)
    }

    pub fn has_rlt(self) -> bool {
        matches!(self, ModelKind::DetSocRlt | ModelKind::Det3Rlt)
    }
}

/// User-facing relaxation choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relaxation {
    #[serde(rename = "soc")]
    Soc,
    #[serde(rename = "det3")]
    Det3,
    #[serde(rename = "rlt-only")]
    RltOnly,
    #[serde(rename = "det3+rlt")]
    Det3Rlt,
}

impl Relaxation {
    pub const ALL: [Relaxation; 4] = [
        Relaxation::Soc,
        Relaxation::Det3,
        Relaxation::RltOnly,
        Relaxation::Det3Rlt,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Relaxation::Soc => "soc",
            Relaxation::Det3 => "det3",
            Relaxation::RltOnly => "rlt-only",
            Relaxation::Det3Rlt => "det3+rlt",
        }
    }

    pub fn level(self) -> usize {
        match self {
            Relaxation::Soc | Relaxation::RltOnly => 2,
            Relaxation::Det3 | Relaxation::Det3Rlt => 3,
        }
    }

    pub fn rlt(self) -> bool {
        matches!(self, Relaxation::RltOnly | Relaxation::Det3Rlt)
    }
}

impl fmt::Display for Relaxation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Relaxation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relaxation::ALL
            .into_iter()
            .find(|r| r.label() == s)
            .ok_or_else(|| format!("unknown relaxation `{s}` (soc, det3, rlt-only, det3+rlt)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjSense {
    Min,
    Max,
}

/// A model: registry, bound table, constraints and objective (minimized).
///
/// The registry and the bound-independent constraints are shared between
/// copies; bounds and envelopes are per copy.
#[derive(Clone, Debug)]
pub struct ModelSpec<T> {
    pub kind: ModelKind,
    pub vars: Arc<Vec<VarInfo>>,
    index: Arc<HashMap<VarRef, usize>>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub constraints: Arc<Vec<Constraint<T>>>,
    pub envelopes: Arc<Vec<Envelope>>,
    /// Constraints specific to this copy, such as a cost cutoff.
    pub extra: Vec<Constraint<T>>,
    pub objective: Poly<T>,
    /// Generation cost, kept separately so subproblems can cut off on it.
    pub cost: Poly<T>,
    /// Set for bound-tightening subproblems.
    pub target: Option<(usize, ObjSense)>,
}

impl<T: Scalar> ModelSpec<T> {
    pub(crate) fn from_parts(
        kind: ModelKind,
        vars: Vec<VarInfo>,
        lower: Vec<T>,
        upper: Vec<T>,
        constraints: Vec<Constraint<T>>,
        envelopes: Vec<Envelope>,
        cost: Poly<T>,
    ) -> Self {
        let index = vars.iter().enumerate().map(|(i, v)| (v.var, i)).collect();
        let mut m = ModelSpec {
            kind,
            vars: Arc::new(vars),
            index: Arc::new(index),
            lower,
            upper,
            constraints: Arc::new(constraints),
            envelopes: Arc::new(envelopes),
            extra: Vec::new(),
            objective: cost.clone(),
            cost,
            target: None,
        };
        m.refresh_derived_bounds();
        m
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn index_of(&self, v: &VarRef) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn var(&self, kind: VarKind, key: VarKey) -> Option<usize> {
        self.index_of(&VarRef::new(kind, key))
    }

    pub fn name(&self, i: usize) -> &str {
        &self.vars[i].name
    }

    /// Variables whose domains bound tightening works on: squared voltage
    /// magnitudes, every lifted voltage product, squared currents and branch
    /// flows. The flows carry the secant envelopes of `p̂` and `q̂`.
    pub fn tightenable(&self) -> Vec<usize> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| {
                matches!(
                    v.var.kind,
                    VarKind::Wii
                        | VarKind::WijRe
                        | VarKind::WijIm
                        | VarKind::L
                        | VarKind::Pflow
                        | VarKind::Qflow
                )
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Returns a copy with the given bound table and envelope-derived
    /// bounds recomputed.
    pub fn with_bounds(&self, lower: Vec<T>, upper: Vec<T>) -> Self {
        let mut m = self.clone();
        m.lower = lower;
        m.upper = upper;
        m.refresh_derived_bounds();
        m
    }

    /// Lifted variables take their box from their parents.
    pub fn refresh_derived_bounds(&mut self) {
        for env in self.envelopes.iter() {
            match *env {
                Envelope::Secant { y, x } => {
                    let (l, u) = (self.lower[x].clone(), self.upper[x].clone());
                    let (l2, u2) = (l.clone() * l.clone(), u.clone() * u.clone());
                    let hi = l2.clone().max_val(u2.clone());
                    let zero = T::zero();
                    let lo = if l <= zero && u >= zero {
                        zero
                    } else {
                        l2.min_val(u2)
                    };
                    self.lower[y] = lo;
                    self.upper[y] = hi;
                }
                Envelope::McCormick { w, x, y } => {
                    let xs = [self.lower[x].clone(), self.upper[x].clone()];
                    let ys = [self.lower[y].clone(), self.upper[y].clone()];
                    let prods: Vec<T> = xs
                        .iter()
                        .flat_map(|a| ys.iter().map(move |b| a.clone() * b.clone()))
                        .collect();
                    let lo = prods
                        .iter()
                        .skip(1)
                        .fold(prods[0].clone(), |m, p| m.min_val(p.clone()));
                    let hi = prods
                        .iter()
                        .skip(1)
                        .fold(prods[0].clone(), |m, p| m.max_val(p.clone()));
                    self.lower[w] = lo;
                    self.upper[w] = hi;
                }
            }
        }
    }

    /// Envelope inequalities for the current bound table.
    pub fn envelope_constraints(&self) -> Vec<Constraint<T>> {
        let mut out = Vec::new();
        for env in self.envelopes.iter() {
            match *env {
                Envelope::Secant { y, x } => {
                    let (l, u) = (self.lower[x].clone(), self.upper[x].clone());
                    let tag = format!("secant {} ~ {}^2", self.name(y), self.name(x));
                    out.push(Constraint {
                        poly: poly(vec![(T::one(), vec![x, x]), (-T::one(), vec![y])]),
                        sense: Sense::Le,
                        tag: format!("{tag} (below)"),
                    });
                    out.push(Constraint {
                        poly: poly(vec![
                            (T::one(), vec![y]),
                            (-(l.clone() + u.clone()), vec![x]),
                            (l * u, vec![]),
                        ]),
                        sense: Sense::Le,
                        tag: format!("{tag} (chord)"),
                    });
                }
                Envelope::McCormick { w, x, y } => {
                    let (xl, xu) = (self.lower[x].clone(), self.upper[x].clone());
                    let (yl, yu) = (self.lower[y].clone(), self.upper[y].clone());
                    let tag = format!(
                        "mccormick {} ~ {}*{}",
                        self.name(w),
                        self.name(x),
                        self.name(y)
                    );
                    let mc = |a: T, b: T, sense: Sense, which: &str| Constraint {
                        // w - a*y - b*x + a*b  (sense)  0
                        poly: poly(vec![
                            (T::one(), vec![w]),
                            (-a.clone(), vec![y]),
                            (-b.clone(), vec![x]),
                            (a * b, vec![]),
                        ]),
                        sense,
                        tag: format!("{tag} ({which})"),
                    };
                    out.push(mc(xl.clone(), yl.clone(), Sense::Ge, "ll"));
                    out.push(mc(xu.clone(), yu.clone(), Sense::Ge, "uu"));
                    out.push(mc(xu, yl, Sense::Le, "ul"));
                    out.push(mc(xl, yu, Sense::Le, "lu"));
                }
            }
        }
        out
    }

    /// Every constraint of the model under its current bounds.
    pub fn materialize(&self) -> Vec<Constraint<T>> {
        let mut all: Vec<Constraint<T>> = self.constraints.iter().cloned().collect();
        all.extend(self.envelope_constraints());
        all.extend(self.extra.iter().cloned());
        all
    }

    /// Largest constraint or bound violation at `x`, with its label.
    pub fn max_violation(&self, x: &[T]) -> (T, String) {
        let mut worst = (T::zero(), String::new());
        for c in self.materialize() {
            let v = c.violation(x);
            if v > worst.0 {
                worst = (v, c.tag.clone());
            }
        }
        for i in 0..self.n_vars() {
            let v = (self.lower[i].clone() - x[i].clone())
                .max_val(x[i].clone() - self.upper[i].clone());
            if v > worst.0 {
                worst = (v, format!("bounds of {}", self.name(i)));
            }
        }
        worst
    }

    /// Converts coefficients and bounds to another scalar type.
    pub fn map_scalar<U: Scalar>(&self) -> ModelSpec<U> {
        let conv = |v: &[T]| {
            v.iter()
                .map(|x| U::from_f64(x.to_f64()))
                .collect::<Vec<U>>()
        };
        let conv_c = |c: &Constraint<T>| Constraint {
            poly: c.poly.map_scalar(),
            sense: c.sense,
            tag: c.tag.clone(),
        };
        ModelSpec {
            kind: self.kind,
            vars: Arc::clone(&self.vars),
            index: Arc::clone(&self.index),
            lower: conv(&self.lower),
            upper: conv(&self.upper),
            constraints: Arc::new(self.constraints.iter().map(conv_c).collect()),
            envelopes: Arc::clone(&self.envelopes),
            extra: self.extra.iter().map(conv_c).collect(),
            objective: self.objective.map_scalar(),
            cost: self.cost.map_scalar(),
            target: self.target,
        }
    }

    pub fn validate_references(&self) -> Result<(), ModelError> {
        let n = self.n_vars();
        let check = |p: &Poly<T>, what: &str| {
            if p.support().iter().any(|&v| v >= n) {
                Err(ModelError::UnknownVariable(what.to_string()))
            } else {
                Ok(())
            }
        };
        for c in self.constraints.iter().chain(self.extra.iter()) {
            check(&c.poly, &c.tag)?;
        }
        check(&self.objective, "objective")
    }
}

pub(crate) fn poly<T: Scalar>(terms: Vec<(T, Vec<usize>)>) -> Poly<T> {
    Poly::from_terms(terms).expect("degree is at most two by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelSpec<f64> {
        let vars = ["x", "y", "w", "s"]
            .iter()
            .enumerate()
            .map(|(k, n)| VarInfo {
                var: VarRef::new(VarKind::L, VarKey::Bus(k)),
                name: n.to_string(),
            })
            .collect();
        ModelSpec::from_parts(
            ModelKind::Det3Rlt,
            vars,
            vec![-1.0, 2.0, 0.0, 0.0],
            vec![3.0, 5.0, 0.0, 0.0],
            vec![],
            vec![
                Envelope::McCormick { w: 2, x: 0, y: 1 },
                Envelope::Secant { y: 3, x: 0 },
            ],
            Poly::zero(),
        )
    }

    #[test]
    fn derived_bounds_follow_parents() {
        let m = toy();
        assert_eq!((m.lower[2], m.upper[2]), (-5.0, 15.0));
        assert_eq!((m.lower[3], m.upper[3]), (0.0, 9.0));
    }

    #[test]
    fn secant_is_tight_at_endpoints() {
        let m = toy();
        let env = m.envelope_constraints();
        for xv in [-1.0, 3.0] {
            let mut pt = vec![xv, 2.0, 0.0, xv * xv];
            let ok = |p: &[f64]| {
                env.iter()
                    .filter(|c| c.tag.starts_with("secant"))
                    .all(|c| c.violation(p) <= 1e-12)
            };
            assert!(ok(&pt));
            pt[3] = xv * xv + 1e-3;
            assert!(!ok(&pt));
            pt[3] = xv * xv - 1e-3;
            assert!(!ok(&pt));
        }
    }

    #[test]
    fn mccormick_is_tight_at_corners() {
        let m = toy();
        let env = m.envelope_constraints();
        let mc: Vec<_> = env
            .iter()
            .filter(|c| c.tag.starts_with("mccormick"))
            .collect();
        for (xv, yv) in [(-1.0, 2.0), (-1.0, 5.0), (3.0, 2.0), (3.0, 5.0)] {
            for delta in [-1e-3, 1e-3] {
                let pt = [xv, yv, xv * yv + delta, 0.0];
                assert!(mc.iter().any(|c| c.violation(&pt) > 0.0));
            }
            let pt = [xv, yv, xv * yv, 0.0];
            assert!(mc.iter().all(|c| c.violation(&pt) <= 1e-12));
        }
    }

    #[test]
    fn relaxation_labels_round_trip() {
        for r in Relaxation::ALL {
            assert_eq!(r.label().parse::<Relaxation>().unwrap(), r);
        }
        assert!("det4".parse::<Relaxation>().is_err());
    }
}
