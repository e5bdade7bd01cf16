//! Primal-dual interior-point method for smooth constrained problems over
//! compiled polynomial models.
//!
//! Inequalities receive slacks, bounds are handled by a log barrier, and
//! each Newton system is reduced to a symmetric quasidefinite KKT matrix
//! that is factorized with inertia correction. Steps are globalized by a
//! backtracking line search on an ℓ1 penalty merit function.

mod kkt;
mod local;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::expr::Poly;
use crate::linalg::{solve_refined, sym_matvec, LdlFactor, SymbolicLdl};
use crate::relax::{ModelSpec, Sense};
use crate::scalar::Real;

pub use kkt::{kkt_check, KktReport};
pub use local::{local_upper_bound, verify_ac_point, AcPoint, LocalSolution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterLimit,
    NumericalFailure,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IpmOptions {
    /// Scaled overall optimality tolerance.
    pub tol: f64,
    /// Unscaled absolute constraint violation tolerance.
    pub constr_viol_tol: f64,
    /// Unscaled complementarity tolerance.
    pub compl_tol: f64,
    /// Unscaled dual infeasibility tolerance.
    pub dual_inf_tol: f64,
    /// Looser tolerance accepted after `acceptable_iter` stalled iterations.
    pub acceptable_tol: f64,
    pub acceptable_iter: usize,
    pub max_iter: usize,
    pub mu_init: f64,
    pub bound_push: f64,
    pub max_time: Option<f64>,
    /// Gradient-based scaling caps every function's gradient at this norm.
    pub max_gradient: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-8,
            constr_viol_tol: 1e-6,
            compl_tol: 1e-6,
            dual_inf_tol: 1.0,
            acceptable_tol: 1e-6,
            acceptable_iter: 15,
            max_iter: 3000,
            mu_init: 0.1,
            bound_push: 1e-2,
            max_time: None,
            max_gradient: 100.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: f64,
    /// Values of every registry variable.
    pub primal: Vec<f64>,
    /// One multiplier per materialized constraint, nonnegative for
    /// inequalities.
    pub duals: Vec<f64>,
    /// Bound multipliers `z_lower − z_upper` per variable.
    pub bound_duals: Vec<f64>,
    pub max_constraint_violation: f64,
    /// Scaled optimality error at the returned point.
    pub kkt_error: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Constants of the barrier update and step rules.
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const KAPPA_SIGMA: f64 = 1e10;
const DELTA_C: f64 = 1e-8;
const DELTA_W_INIT: f64 = 1e-8;
const DELTA_W_MAX: f64 = 1e6;
const ARMIJO: f64 = 1e-4;
const RHO_MIN: f64 = 1.0;
const S_MAX: f64 = 100.0;

struct Row<R> {
    poly: Poly<R>,
    is_eq: bool,
    /// Multiplies the normalized `≤ 0` / `= 0` form.
    scale: R,
    grad_slots: Vec<usize>,
    hess_slots: Vec<usize>,
}

const SKIP: usize = usize::MAX;

/// The model restricted to free variables, with slots into the Jacobian and
/// KKT value arrays precomputed.
struct Problem<R> {
    n: usize,
    /// Free variable `k` is registry variable `free[k]`.
    free: Vec<usize>,
    base_x: Vec<R>,
    lower: Vec<R>,
    upper: Vec<R>,
    has_l: Vec<bool>,
    has_u: Vec<bool>,
    obj: Poly<R>,
    obj_scale: R,
    obj_grad_slots: Vec<usize>,
    obj_hess_slots: Vec<usize>,
    rows: Vec<Row<R>>,
    /// Position of each row's slack, if it is an inequality.
    slack_of: Vec<Option<usize>>,
    n_slack: usize,
    jac: Vec<(usize, usize)>,
    /// Row of every Jacobian entry.
    kkt_entries: Vec<(usize, usize)>,
    hess_len: usize,
    jac_offset: usize,
    diag_offset: usize,
    sym: SymbolicLdl,
    /// Original index of each materialized constraint, for duals.
    origin: Vec<usize>,
    n_constraints: usize,
}

impl<R: Real> Problem<R> {
    fn new(m: &ModelSpec<R>, x0: &[R]) -> Self {
        let nv = m.n_vars();
        let mut col = vec![SKIP; nv];
        let mut free = Vec::new();
        let mut base_x = x0.to_vec();
        for i in 0..nv {
            let (l, u) = (m.lower[i], m.upper[i]);
            let width = u - l;
            if width <= R::cast(1e-12) * R::one().max(l.abs()) {
                base_x[i] = if l.is_finite() {
                    (l + u) * R::cast(0.5)
                } else {
                    x0[i]
                };
            } else {
                col[i] = free.len();
                free.push(i);
            }
        }
        let n = free.len();
        let lower: Vec<R> = free.iter().map(|&i| m.lower[i]).collect();
        let upper: Vec<R> = free.iter().map(|&i| m.upper[i]).collect();
        let has_l = lower.iter().map(|v| v.is_finite()).collect();
        let has_u = upper.iter().map(|v| v.is_finite()).collect();

        // Hessian pattern over free variables; the diagonal is always present.
        let mut hpos: std::collections::HashMap<(usize, usize), usize> =
            (0..n).map(|k| ((k, k), k)).collect();
        let mut hess: Vec<(usize, usize)> = (0..n).map(|k| (k, k)).collect();
        let mut add_h =
            |p: &Poly<R>, hpos: &mut std::collections::HashMap<(usize, usize), usize>| {
                let mut slots = Vec::new();
                let dummy = vec![R::one(); nv];
                p.for_each_hess(&dummy, |i, j, _| {
                    let (a, b) = (col[i], col[j]);
                    if a == SKIP || b == SKIP {
                        slots.push(SKIP);
                    } else {
                        let key = (a.max(b), a.min(b));
                        let next = hess.len();
                        let pos = *hpos.entry(key).or_insert_with(|| {
                            hess.push(key);
                            next
                        });
                        slots.push(pos);
                    }
                });
                slots
            };
        let obj = m.objective.clone();
        let obj_hess_slots = add_h(&obj, &mut hpos);

        let materialized = m.materialize();
        let n_constraints = materialized.len();
        let mut rows = Vec::new();
        let mut origin = Vec::new();
        for (k, c) in materialized.into_iter().enumerate() {
            if c.poly.support().iter().all(|&v| col[v] == SKIP) {
                continue;
            }
            let sign = if c.sense == Sense::Ge {
                -R::one()
            } else {
                R::one()
            };
            let mut poly = c.poly;
            poly.scale(&sign);
            let hess_slots = add_h(&poly, &mut hpos);
            rows.push(Row {
                poly,
                is_eq: c.sense == Sense::Eq,
                scale: R::one(),
                grad_slots: Vec::new(),
                hess_slots,
            });
            origin.push(k);
        }
        let hess_len = hess.len();

        // Jacobian entries and their slots in each row's gradient callback.
        let dummy = vec![R::one(); nv];
        let mut jac = Vec::new();
        for (r, row) in rows.iter_mut().enumerate() {
            let support: Vec<usize> = row
                .poly
                .support()
                .into_iter()
                .filter(|&v| col[v] != SKIP)
                .collect();
            let start = jac.len();
            for &v in &support {
                jac.push((r, col[v]));
            }
            let mut slots = Vec::new();
            row.poly.for_each_grad(&dummy, |v, _| {
                slots.push(if col[v] == SKIP {
                    SKIP
                } else {
                    start + support.binary_search(&v).expect("support contains v")
                });
            });
            row.grad_slots = slots;
        }
        let mut obj_grad_slots = Vec::new();
        obj.for_each_grad(&dummy, |v, _| obj_grad_slots.push(col[v]));

        let mut slack_of = Vec::new();
        let mut n_slack = 0;
        for row in &rows {
            if row.is_eq {
                slack_of.push(None);
            } else {
                slack_of.push(Some(n_slack));
                n_slack += 1;
            }
        }

        let m_rows = rows.len();
        let mut kkt_entries = hess.clone();
        let jac_offset = kkt_entries.len();
        kkt_entries.extend(jac.iter().map(|&(r, c)| (n + r, c)));
        let diag_offset = kkt_entries.len();
        kkt_entries.extend((0..m_rows).map(|r| (n + r, n + r)));
        let sym = SymbolicLdl::new(n + m_rows, &kkt_entries);

        Problem {
            n,
            free,
            base_x,
            lower,
            upper,
            has_l,
            has_u,
            obj,
            obj_scale: R::one(),
            obj_grad_slots,
            obj_hess_slots,
            rows,
            slack_of,
            n_slack,
            jac,
            kkt_entries,
            hess_len,
            jac_offset,
            diag_offset,
            sym,
            origin,
            n_constraints,
        }
    }

    fn full(&self, x: &[R]) -> Vec<R> {
        let mut full = self.base_x.clone();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }

    fn objective(&self, full: &[R]) -> R {
        self.obj.eval(full) * self.obj_scale
    }

    fn obj_grad(&self, full: &[R]) -> Vec<R> {
        let mut g = vec![R::zero(); self.n];
        let mut k = 0;
        self.obj.for_each_grad(full, |_, v| {
            let c = self.obj_grad_slots[k];
            if c != SKIP {
                g[c] = g[c] + v * self.obj_scale;
            }
            k += 1;
        });
        g
    }

    fn cons(&self, full: &[R]) -> Vec<R> {
        self.rows
            .iter()
            .map(|r| r.poly.eval(full) * r.scale)
            .collect()
    }

    fn jacobian(&self, full: &[R]) -> Vec<R> {
        let mut vals = vec![R::zero(); self.jac.len()];
        for row in &self.rows {
            let mut k = 0;
            row.poly.for_each_grad(full, |_, v| {
                let s = row.grad_slots[k];
                if s != SKIP {
                    vals[s] = vals[s] + v * row.scale;
                }
                k += 1;
            });
        }
        vals
    }

    /// Lower triangle of the Lagrangian Hessian in `hess` order.
    fn hessian(&self, full: &[R], y: &[R]) -> Vec<R> {
        let mut h = vec![R::zero(); self.hess_len];
        let mut add = |p: &Poly<R>, slots: &[usize], w: R| {
            if w == R::zero() {
                return;
            }
            let mut k = 0;
            p.for_each_hess(full, |_, _, v| {
                let s = slots[k];
                if s != SKIP {
                    h[s] = h[s] + v * w;
                }
                k += 1;
            });
        };
        add(&self.obj, &self.obj_hess_slots, self.obj_scale);
        for (row, &yr) in self.rows.iter().zip(y) {
            add(&row.poly, &row.hess_slots, yr * row.scale);
        }
        h
    }

    fn jt_times(&self, jac: &[R], y: &[R]) -> Vec<R> {
        let mut out = vec![R::zero(); self.n];
        for (&(r, c), &v) in self.jac.iter().zip(jac) {
            out[c] = out[c] + v * y[r];
        }
        out
    }

    fn j_times(&self, jac: &[R], d: &[R]) -> Vec<R> {
        let mut out = vec![R::zero(); self.rows.len()];
        for (&(r, c), &v) in self.jac.iter().zip(jac) {
            out[r] = out[r] + v * d[c];
        }
        out
    }

    fn scale_from(&mut self, full: &[R], max_gradient: R) {
        let g = self.obj_grad(full);
        let gmax = g.iter().fold(R::zero(), |m, v| m.max(v.abs()));
        if gmax > max_gradient {
            self.obj_scale = max_gradient / gmax;
        }
        let jac = self.jacobian(full);
        let mut rmax = vec![R::zero(); self.rows.len()];
        for (&(r, _), &v) in self.jac.iter().zip(&jac) {
            rmax[r] = rmax[r].max(v.abs());
        }
        for (row, &gm) in self.rows.iter_mut().zip(&rmax) {
            if gm > max_gradient {
                row.scale = max_gradient / gm;
            }
        }
    }
}

/// Iterate of the primal-dual method on the scaled problem.
#[derive(Clone)]
struct Iterate<R> {
    x: Vec<R>,
    s: Vec<R>,
    y: Vec<R>,
    zl: Vec<R>,
    zu: Vec<R>,
    zs: Vec<R>,
}

struct Eval<R> {
    full: Vec<R>,
    f: R,
    g: Vec<R>,
    c: Vec<R>,
    jac: Vec<R>,
}

fn f64_of<R: Real>(v: R) -> f64 {
    crate::scalar::Scalar::to_f64(&v)
}

fn inf_norm<R: Real>(v: &[R]) -> R {
    v.iter().fold(R::zero(), |m, a| m.max(a.abs()))
}

/// Solves `m` from `warm_start` (or an interior default) and reports the
/// result in terms of the registry variables and materialized constraints.
pub fn solve<R: Real>(
    m: &ModelSpec<R>,
    opts: &IpmOptions,
    warm_start: Option<&[R]>,
) -> SolveResult {
    let start = Instant::now();
    let deadline = opts.max_time.map(|t| start + Duration::from_secs_f64(t));
    let x_init: Vec<R> = match warm_start {
        Some(w) => w.to_vec(),
        None => (0..m.n_vars())
            .map(|i| {
                let (l, u) = (m.lower[i], m.upper[i]);
                match (l.is_finite(), u.is_finite()) {
                    (true, true) => (l + u) * R::cast(0.5),
                    (true, false) => l.max(R::zero()),
                    (false, true) => u.min(R::zero()),
                    (false, false) => R::zero(),
                }
            })
            .collect(),
    };
    let mut p = Problem::new(m, &x_init);
    let mut solver = Solver::new(&mut p, opts, &x_init);
    let (status, iterations, kkt_error) = solver.run(deadline);
    let it = solver.it.clone();
    finish(m, &p, &it, status, iterations, kkt_error, start)
}

struct Solver<'a, R> {
    p: &'a Problem<R>,
    opts: &'a IpmOptions,
    it: Iterate<R>,
    mu: R,
    rho: R,
    delta_w_last: R,
    /// Minimum primal regularization for the next factorization.
    delta_w_force: R,
}

impl<'a, R: Real> Solver<'a, R> {
    fn new(p: &'a mut Problem<R>, opts: &'a IpmOptions, x_init: &[R]) -> Self {
        let push = R::cast(opts.bound_push);
        let mut x: Vec<R> = p.free.iter().map(|&i| x_init[i]).collect();
        for k in 0..p.n {
            let (l, u) = (p.lower[k], p.upper[k]);
            let (hl, hu) = (p.has_l[k], p.has_u[k]);
            let pl = if hl && hu {
                (push * R::one().max(l.abs())).min(push * (u - l))
            } else {
                push * R::one().max(l.abs())
            };
            let pu = if hl && hu {
                (push * R::one().max(u.abs())).min(push * (u - l))
            } else {
                push * R::one().max(u.abs())
            };
            if hl {
                x[k] = x[k].max(l + pl);
            }
            if hu {
                x[k] = x[k].min(u - pu);
            }
        }
        let full = p.full(&x);
        p.scale_from(&full, R::cast(opts.max_gradient));
        let p: &'a Problem<R> = p;
        let c = p.cons(&full);
        let mut s = vec![R::zero(); p.n_slack];
        for (r, so) in p.slack_of.iter().enumerate() {
            if let Some(k) = *so {
                s[k] = (-c[r]).max(push);
            }
        }
        let m_rows = p.rows.len();
        let mut y = vec![R::zero(); m_rows];
        for (r, so) in p.slack_of.iter().enumerate() {
            if so.is_some() {
                y[r] = R::one();
            }
        }
        let zl = (0..p.n)
            .map(|k| if p.has_l[k] { R::one() } else { R::zero() })
            .collect();
        let zu = (0..p.n)
            .map(|k| if p.has_u[k] { R::one() } else { R::zero() })
            .collect();
        let zs = vec![R::one(); p.n_slack];
        Solver {
            p,
            opts,
            it: Iterate {
                x,
                s,
                y,
                zl,
                zu,
                zs,
            },
            mu: R::cast(opts.mu_init),
            rho: R::zero(),
            delta_w_last: R::zero(),
            delta_w_force: R::zero(),
        }
    }

    fn eval(&self, x: &[R]) -> Eval<R> {
        let full = self.p.full(x);
        Eval {
            f: self.p.objective(&full),
            g: self.p.obj_grad(&full),
            c: self.p.cons(&full),
            jac: self.p.jacobian(&full),
            full,
        }
    }

    /// Constraint residual `c_E`, `c_I + s` on the scaled problem.
    fn residual(&self, c: &[R], s: &[R]) -> Vec<R> {
        c.iter()
            .zip(&self.p.slack_of)
            .map(|(&ci, so)| match so {
                Some(k) => ci + s[*k],
                None => ci,
            })
            .collect()
    }

    fn slack_l(&self, x: &[R], k: usize) -> R {
        x[k] - self.p.lower[k]
    }

    fn slack_u(&self, x: &[R], k: usize) -> R {
        self.p.upper[k] - x[k]
    }

    /// Stationarity residual `∇f + Jᵀy − zl + zu`.
    fn dual_residual(&self, e: &Eval<R>, it: &Iterate<R>) -> Vec<R> {
        let jty = self.p.jt_times(&e.jac, &it.y);
        (0..self.p.n)
            .map(|k| e.g[k] + jty[k] - it.zl[k] + it.zu[k])
            .collect()
    }

    /// Scaled optimality error for barrier parameter `mu`.
    fn error(&self, e: &Eval<R>, it: &Iterate<R>, mu: R) -> R {
        let p = self.p;
        let rd = self.dual_residual(e, it);
        let mut rs = R::zero();
        for (r, so) in p.slack_of.iter().enumerate() {
            if let Some(k) = *so {
                rs = rs.max((it.y[r] - it.zs[k]).abs());
            }
        }
        let cres = self.residual(&e.c, &it.s);
        let mut compl = R::zero();
        let mut zsum = R::zero();
        for k in 0..p.n {
            if p.has_l[k] {
                compl = compl.max((self.slack_l(&it.x, k) * it.zl[k] - mu).abs());
                zsum = zsum + it.zl[k].abs();
            }
            if p.has_u[k] {
                compl = compl.max((self.slack_u(&it.x, k) * it.zu[k] - mu).abs());
                zsum = zsum + it.zu[k].abs();
            }
        }
        for k in 0..p.n_slack {
            compl = compl.max((it.s[k] * it.zs[k] - mu).abs());
            zsum = zsum + it.zs[k].abs();
        }
        let ysum = it.y.iter().fold(R::zero(), |a, v| a + v.abs());
        let cnt = R::cast((p.n + p.rows.len() + p.n_slack).max(1) as f64);
        let smax = R::cast(S_MAX);
        let sd = smax.max((ysum + zsum) / cnt) / smax;
        let sc = smax.max(zsum / R::cast((p.n + p.n_slack).max(1) as f64)) / smax;
        (inf_norm(&rd).max(rs) / sd)
            .max(inf_norm(&cres))
            .max(compl / sc)
    }

    /// Unscaled feasibility, complementarity and stationarity measures.
    fn unscaled(&self, e: &Eval<R>, it: &Iterate<R>) -> (R, R, R) {
        let p = self.p;
        let mut viol = R::zero();
        for (r, row) in p.rows.iter().enumerate() {
            let v = e.c[r] / row.scale;
            viol = viol.max(if row.is_eq { v.abs() } else { v.max(R::zero()) });
        }
        let mut compl = R::zero();
        for k in 0..p.n {
            if p.has_l[k] {
                compl = compl.max(self.slack_l(&it.x, k) * it.zl[k] / p.obj_scale);
            }
            if p.has_u[k] {
                compl = compl.max(self.slack_u(&it.x, k) * it.zu[k] / p.obj_scale);
            }
        }
        for k in 0..p.n_slack {
            compl = compl.max(it.s[k] * it.zs[k] / p.obj_scale);
        }
        let dual = inf_norm(&self.dual_residual(e, it)) / p.obj_scale;
        (viol, compl, dual)
    }

    fn barrier(&self, e: &Eval<R>, x: &[R], s: &[R]) -> R {
        let p = self.p;
        let mut phi = e.f;
        for k in 0..p.n {
            if p.has_l[k] {
                phi = phi - self.mu * self.slack_l(x, k).ln();
            }
            if p.has_u[k] {
                phi = phi - self.mu * self.slack_u(x, k).ln();
            }
        }
        for &sk in s {
            phi = phi - self.mu * sk.ln();
        }
        phi
    }

    /// Augmented Lagrangian merit `φ_μ + yᵀr + (ρ/2)‖r‖²` on the barrier
    /// problem, where `r` is the constraint residual.
    fn merit(&self, e: &Eval<R>, x: &[R], s: &[R], y: &[R]) -> R {
        let res = self.residual(&e.c, s);
        let mut lin = R::zero();
        let mut sq = R::zero();
        for (r, yr) in res.iter().zip(y) {
            lin = lin + *yr * *r;
            sq = sq + *r * *r;
        }
        self.barrier(e, x, s) + lin + self.rho * R::cast(0.5) * sq
    }

    fn run(&mut self, deadline: Option<Instant>) -> (SolveStatus, usize, f64) {
        let tol = R::cast(self.opts.tol);
        let mut acceptable_count = 0;
        let mut failures = 0;
        let mut e = self.eval(&self.it.x);
        let mut last_err = R::infinity();
        for iter in 0..self.opts.max_iter {
            if e.f.is_nan() || e.c.iter().any(|v| !v.is_finite()) {
                return (SolveStatus::NumericalFailure, iter, f64_of(last_err));
            }
            let err0 = self.error(&e, &self.it, R::zero());
            last_err = err0;
            let (viol, compl, dual) = self.unscaled(&e, &self.it);
            let feasible = viol <= R::cast(self.opts.constr_viol_tol);
            if err0 <= tol
                && feasible
                && compl <= R::cast(self.opts.compl_tol)
                && dual <= R::cast(self.opts.dual_inf_tol)
            {
                return (SolveStatus::Optimal, iter, f64_of(err0));
            }
            if err0 <= R::cast(self.opts.acceptable_tol) && feasible {
                acceptable_count += 1;
                if acceptable_count >= self.opts.acceptable_iter {
                    return (SolveStatus::Optimal, iter, f64_of(err0));
                }
            } else {
                acceptable_count = 0;
            }
            if deadline.is_some_and(|d| Instant::now() > d) {
                return (SolveStatus::IterLimit, iter, f64_of(err0));
            }

            // Barrier update.
            loop {
                let err_mu = self.error(&e, &self.it, self.mu);
                let floor = tol / R::cast(10.0);
                if err_mu > R::cast(KAPPA_EPS) * self.mu || self.mu <= floor {
                    break;
                }
                let next = (R::cast(KAPPA_MU) * self.mu).min(self.mu.powf(R::cast(THETA_MU)));
                self.mu = next.max(floor);
            }

            let Some(kkt) = self.factorize(&e) else {
                log::debug!("iteration {iter}: no factorization with the right inertia");
                return (SolveStatus::NumericalFailure, iter, f64_of(err0));
            };
            let res = self.residual(&e.c, &self.it.s);
            let Some(dir) = self.step(&kkt, &res) else {
                log::debug!("iteration {iter}: Newton step is not finite");
                return (SolveStatus::NumericalFailure, iter, f64_of(err0));
            };
            match self.line_search(&e, &kkt, &dir) {
                Some(next) => {
                    failures = 0;
                    e = next;
                }
                None => {
                    failures += 1;
                    log::debug!(
                        "iteration {iter}: line search failed (mu {:.2e}, error {:.2e}, violation {:.2e})",
                        f64_of(self.mu),
                        f64_of(err0),
                        f64_of(viol)
                    );
                    if failures >= 5 {
                        let status = if viol > R::cast(self.opts.constr_viol_tol) {
                            SolveStatus::Infeasible
                        } else {
                            SolveStatus::NumericalFailure
                        };
                        return (status, iter, f64_of(err0));
                    }
                    // Retry with a stronger primal regularization.
                    self.delta_w_force = (self.delta_w_last * R::cast(100.0)).max(R::cast(1e-4));
                }
            }
        }
        let (viol, _, _) = self.unscaled(&e, &self.it);
        let status = if viol > R::cast(1e-4) {
            SolveStatus::Infeasible
        } else {
            SolveStatus::IterLimit
        };
        (status, self.opts.max_iter, f64_of(last_err))
    }

    /// Factorizes the Newton matrix at the current iterate, raising the
    /// primal regularization until the inertia is `(n, m, 0)`.
    fn factorize(&mut self, e: &Eval<R>) -> Option<Kkt<R>> {
        let p = self.p;
        let it = &self.it;
        let (n, m) = (p.n, p.rows.len());
        let mu = self.mu;
        let h = p.hessian(&e.full, &it.y);
        let mut sigma_x = vec![R::zero(); n];
        for k in 0..n {
            if p.has_l[k] {
                sigma_x[k] = sigma_x[k] + it.zl[k] / self.slack_l(&it.x, k);
            }
            if p.has_u[k] {
                sigma_x[k] = sigma_x[k] + it.zu[k] / self.slack_u(&it.x, k);
            }
        }
        let sigma_s: Vec<R> = (0..p.n_slack).map(|k| it.zs[k] / it.s[k]).collect();
        let jty = p.jt_times(&e.jac, &it.y);
        let mut rhs_x = vec![R::zero(); n];
        for k in 0..n {
            let mut r = e.g[k] + jty[k];
            if p.has_l[k] {
                r = r - mu / self.slack_l(&it.x, k);
            }
            if p.has_u[k] {
                r = r + mu / self.slack_u(&it.x, k);
            }
            rhs_x[k] = -r;
        }

        let mut delta_w = self.delta_w_force;
        let mut delta_c = R::zero();
        let mut attempts = 0;
        loop {
            let mut vals = vec![R::zero(); p.kkt_entries.len()];
            vals[..p.hess_len].copy_from_slice(&h);
            for k in 0..n {
                vals[k] = vals[k] + sigma_x[k] + delta_w;
            }
            vals[p.jac_offset..p.diag_offset].copy_from_slice(&e.jac);
            for r in 0..m {
                vals[p.diag_offset + r] = match p.slack_of[r] {
                    Some(k) => -R::one() / (sigma_s[k] + delta_w) - delta_c,
                    None => -delta_c,
                };
            }
            let factor = p.sym.factor(&vals);
            let singular = match &factor {
                Err(_) => true,
                Ok(f) => f.negative < m && f.positive + f.negative < n + m,
            };
            if let Ok(f) = factor {
                if f.positive == n && f.negative == m {
                    self.delta_w_last = delta_w;
                    self.delta_w_force = R::zero();
                    return Some(Kkt {
                        factor: f,
                        vals,
                        sigma_s,
                        delta_w,
                        rhs_x,
                    });
                }
            }
            attempts += 1;
            if singular && delta_c == R::zero() {
                // Rank-deficient Jacobian: regularize the constraint block first.
                delta_c = R::cast(DELTA_C) * mu.powf(R::cast(0.25));
                continue;
            }
            delta_w = if delta_w == R::zero() {
                if self.delta_w_last == R::zero() {
                    R::cast(DELTA_W_INIT)
                } else {
                    (self.delta_w_last / R::cast(3.0)).max(R::cast(DELTA_W_INIT))
                }
            } else {
                delta_w * R::cast(10.0)
            };
            if delta_w > R::cast(DELTA_W_MAX) || attempts > 40 {
                return None;
            }
        }
    }

    /// Solves the factorized system for the constraint residual `cres`
    /// (`c + s` on inequality rows) and recovers the full step.
    fn step(&self, kkt: &Kkt<R>, cres: &[R]) -> Option<Direction<R>> {
        let p = self.p;
        let it = &self.it;
        let mu = self.mu;
        let (n, m) = (p.n, p.rows.len());
        let dw = kkt.delta_w;
        let mut rhs = kkt.rhs_x.clone();
        rhs.resize(n + m, R::zero());
        for r in 0..m {
            rhs[n + r] = match p.slack_of[r] {
                Some(k) => -cres[r] - (mu / it.s[k] - it.y[r]) / (kkt.sigma_s[k] + dw),
                None => -cres[r],
            };
        }
        let mut sol = Vec::new();
        solve_refined(
            &p.sym,
            &kkt.factor,
            &p.kkt_entries,
            &kkt.vals,
            &rhs,
            &mut sol,
            3,
        );
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        let dx = sol[..n].to_vec();
        let dy = sol[n..].to_vec();
        let mut ds = vec![R::zero(); p.n_slack];
        for (r, so) in p.slack_of.iter().enumerate() {
            if let Some(k) = *so {
                ds[k] = (mu / it.s[k] - it.y[r] - dy[r]) / (kkt.sigma_s[k] + dw);
            }
        }
        let mut dzl = vec![R::zero(); n];
        let mut dzu = vec![R::zero(); n];
        for k in 0..n {
            if p.has_l[k] {
                let sl = self.slack_l(&it.x, k);
                dzl[k] = mu / sl - it.zl[k] - it.zl[k] / sl * dx[k];
            }
            if p.has_u[k] {
                let su = self.slack_u(&it.x, k);
                dzu[k] = mu / su - it.zu[k] + it.zu[k] / su * dx[k];
            }
        }
        let dzs: Vec<R> = (0..p.n_slack)
            .map(|k| mu / it.s[k] - it.zs[k] - kkt.sigma_s[k] * ds[k])
            .collect();

        // Curvature dᵀ(H + Σ)d for the penalty update.
        let hx = sym_matvec(
            n,
            &p.kkt_entries[..p.hess_len],
            &kkt.vals[..p.hess_len],
            &dx,
        );
        let mut quad = R::zero();
        for k in 0..n {
            quad = quad + dx[k] * (hx[k] - dw * dx[k]);
        }
        for k in 0..p.n_slack {
            quad = quad + kkt.sigma_s[k] * ds[k] * ds[k];
        }
        Some(Direction {
            dx,
            ds,
            dy,
            dzl,
            dzu,
            dzs,
            quad,
        })
    }

    fn max_step(&self, d: &Direction<R>) -> (R, R) {
        let p = self.p;
        let it = &self.it;
        let tau = R::cast(0.99).max(R::one() - self.mu);
        let mut ap = R::one();
        let mut ad = R::one();
        let limit = |cur: R, step: R, a: &mut R| {
            if step < R::zero() {
                let t = -tau * cur / step;
                if t < *a {
                    *a = t;
                }
            }
        };
        for k in 0..p.n {
            if p.has_l[k] {
                limit(self.slack_l(&it.x, k), d.dx[k], &mut ap);
                limit(it.zl[k], d.dzl[k], &mut ad);
            }
            if p.has_u[k] {
                limit(self.slack_u(&it.x, k), -d.dx[k], &mut ap);
                limit(it.zu[k], d.dzu[k], &mut ad);
            }
        }
        for k in 0..p.n_slack {
            limit(it.s[k], d.ds[k], &mut ap);
            limit(it.zs[k], d.dzs[k], &mut ad);
        }
        (ap, ad)
    }

    /// Directional derivative of the barrier function and the linearized
    /// change `J dx + ds` of the constraint residual along `d`.
    fn slopes(&self, e: &Eval<R>, d: &Direction<R>) -> (R, Vec<R>) {
        let p = self.p;
        let mut dphi = R::zero();
        for k in 0..p.n {
            let mut g = e.g[k];
            if p.has_l[k] {
                g = g - self.mu / self.slack_l(&self.it.x, k);
            }
            if p.has_u[k] {
                g = g + self.mu / self.slack_u(&self.it.x, k);
            }
            dphi = dphi + g * d.dx[k];
        }
        for k in 0..p.n_slack {
            dphi = dphi - self.mu / self.it.s[k] * d.ds[k];
        }
        let mut lin = p.j_times(&e.jac, &d.dx);
        for (r, so) in p.slack_of.iter().enumerate() {
            if let Some(k) = *so {
                lin[r] = lin[r] + d.ds[k];
            }
        }
        (dphi, lin)
    }

    fn trial_y(&self, d: &Direction<R>, alpha: R) -> Vec<R> {
        self.it
            .y
            .iter()
            .zip(&d.dy)
            .map(|(&y, &dy)| y + alpha * dy)
            .collect()
    }

    fn trial(&self, d: &Direction<R>, alpha: R) -> (Vec<R>, Vec<R>, Eval<R>) {
        let p = self.p;
        let x: Vec<R> = (0..p.n).map(|k| self.it.x[k] + alpha * d.dx[k]).collect();
        let s: Vec<R> = (0..p.n_slack)
            .map(|k| self.it.s[k] + alpha * d.ds[k])
            .collect();
        let e = self.eval(&x);
        (x, s, e)
    }

    /// Backtracking Armijo search on the merit function, with up to four
    /// chained second-order corrections after a rejected full step.
    fn line_search(&mut self, e: &Eval<R>, kkt: &Kkt<R>, d: &Direction<R>) -> Option<Eval<R>> {
        let p = self.p;
        let (amax, adual) = self.max_step(d);
        let res = self.residual(&e.c, &self.it.s);
        let (dphi, lin) = self.slopes(e, d);
        let dot = |a: &[R], b: &[R]| a.iter().zip(b).fold(R::zero(), |acc, (&x, &y)| acc + x * y);
        // The merit uses the multiplier estimate at the end of the step,
        // held fixed during the search.
        let ybar = self.trial_y(d, R::one());
        let base = dphi + dot(&ybar, &lin);
        let rlin = dot(&res, &lin);
        let target = -R::cast(0.5) * d.quad.max(R::zero());

        // Smallest penalty that makes the step a sufficient descent
        // direction; a larger previous value decays geometrically.
        let mut rho = (self.rho * R::cast(0.5)).max(R::cast(RHO_MIN));
        if rlin < R::zero() && base > target {
            let need = (base - target) / -rlin;
            rho = rho.max(need * R::cast(2.0));
        }
        self.rho = rho;
        let slope = base + self.rho * rlin;
        let phi0 = self.merit(e, &self.it.x, &self.it.s, &ybar);
        let theta = res.iter().fold(R::zero(), |a, v| a + v.abs());

        // Steps below roundoff are taken as they come.
        let tiny = (0..p.n).all(|k| {
            (amax * d.dx[k]).abs() <= R::cast(10.0) * R::epsilon() * (R::one() + self.it.x[k].abs())
        });
        if tiny {
            let (x, s, trial) = self.trial(d, amax);
            self.accept(x, s, d, adual);
            return Some(trial);
        }
        if slope >= R::zero() {
            self.trace_failure(slope, theta, phi0, amax, d.quad);
            return None;
        }
        // Differences below roundoff in the merit count as no increase.
        let slack = R::cast(10.0) * R::epsilon() * phi0.abs();
        let accepts = |phi: R, alpha: R| {
            phi.is_finite() && phi <= phi0 + R::cast(ARMIJO) * alpha * slope + slack
        };

        let mut alpha = amax;
        for attempt in 0..60 {
            let (x, s, trial) = self.trial(d, alpha);
            let phi = self.merit(&trial, &x, &s, &ybar);
            if accepts(phi, alpha) {
                self.accept(x, s, d, adual);
                return Some(trial);
            }
            if attempt == 0 {
                let mut res_t = self.residual(&trial.c, &s);
                let mut theta_t = res_t.iter().fold(R::zero(), |a, v| a + v.abs());
                let mut c_soc = res.clone();
                let mut a_soc = alpha;
                for _ in 0..4 {
                    if theta_t < theta {
                        break;
                    }
                    c_soc = c_soc
                        .iter()
                        .zip(&res_t)
                        .map(|(&a, &b)| a_soc * a + b)
                        .collect();
                    let Some(d2) = self.step(kkt, &c_soc) else {
                        break;
                    };
                    let (a2, ad2) = self.max_step(&d2);
                    let (x2, s2, trial2) = self.trial(&d2, a2);
                    let phi2 = self.merit(&trial2, &x2, &s2, &ybar);
                    if accepts(phi2, alpha) {
                        self.accept(x2, s2, &d2, ad2);
                        return Some(trial2);
                    }
                    let r2 = self.residual(&trial2.c, &s2);
                    let t2 = r2.iter().fold(R::zero(), |a, v| a + v.abs());
                    if t2 > R::cast(0.99) * theta_t {
                        break;
                    }
                    res_t = r2;
                    theta_t = t2;
                    a_soc = a2;
                }
            }
            alpha = alpha * R::cast(0.5);
            if alpha < R::cast(1e-16) {
                break;
            }
        }
        self.trace_failure(slope, theta, phi0, amax, d.quad);
        None
    }

    fn trace_failure(&self, slope: R, theta: R, phi0: R, amax: R, quad: R) {
        log::trace!(
            "line search failed: slope {:.3e} theta {:.3e} merit {:.10e} step {:.2e} curvature {:.2e}",
            f64_of(slope),
            f64_of(theta),
            f64_of(phi0),
            f64_of(amax),
            f64_of(quad)
        );
    }

    fn accept(&mut self, x: Vec<R>, s: Vec<R>, d: &Direction<R>, adual: R) {
        let p = self.p;
        let it = &mut self.it;
        it.x = x;
        it.s = s;
        for r in 0..it.y.len() {
            it.y[r] = it.y[r] + adual * d.dy[r];
        }
        let ks = R::cast(KAPPA_SIGMA);
        let mu = self.mu;
        let clamp = |z: R, slack: R| z.max(mu / (ks * slack)).min(ks * mu / slack);
        for k in 0..p.n {
            if p.has_l[k] {
                let z = it.zl[k] + adual * d.dzl[k];
                it.zl[k] = clamp(z, it.x[k] - p.lower[k]);
            }
            if p.has_u[k] {
                let z = it.zu[k] + adual * d.dzu[k];
                it.zu[k] = clamp(z, p.upper[k] - it.x[k]);
            }
        }
        for k in 0..p.n_slack {
            let z = it.zs[k] + adual * d.dzs[k];
            it.zs[k] = clamp(z, it.s[k]);
        }
    }
}

/// Factorized Newton matrix with what is needed to solve for new
/// constraint residuals.
struct Kkt<R> {
    factor: LdlFactor<R>,
    vals: Vec<R>,
    sigma_s: Vec<R>,
    delta_w: R,
    rhs_x: Vec<R>,
}

struct Direction<R> {
    dx: Vec<R>,
    ds: Vec<R>,
    dy: Vec<R>,
    dzl: Vec<R>,
    dzu: Vec<R>,
    dzs: Vec<R>,
    quad: R,
}

fn finish<R: Real>(
    m: &ModelSpec<R>,
    p: &Problem<R>,
    it: &Iterate<R>,
    status: SolveStatus,
    iterations: usize,
    kkt_error: f64,
    start: Instant,
) -> SolveResult {
    let full = p.full(&it.x);
    let primal: Vec<f64> = full.iter().map(|&v| f64_of(v)).collect();
    let objective = f64_of(m.objective.eval(&full));
    let mut duals = vec![0.0; p.n_constraints];
    for (r, row) in p.rows.iter().enumerate() {
        // Multiplier of the original constraint: undo scaling and the sign
        // flip of `≥` rows so inequality duals are nonnegative.
        let y = it.y[r] * row.scale / p.obj_scale;
        duals[p.origin[r]] = f64_of(y);
    }
    let mut bound_duals = vec![0.0; m.n_vars()];
    for (k, &i) in p.free.iter().enumerate() {
        bound_duals[i] = f64_of((it.zl[k] - it.zu[k]) / p.obj_scale);
    }
    let (viol, _) = m.max_violation(&full);
    SolveResult {
        status,
        objective,
        primal,
        duals,
        bound_duals,
        max_constraint_violation: f64_of(viol),
        kkt_error,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
    }
}
