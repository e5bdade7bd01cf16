use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use super::{
    poly, Constraint, Dir, Envelope, ModelKind, ModelSpec, ObjSense, Relaxation, Sense, VarInfo,
    VarKey, VarKind, VarRef,
};
use crate::decomp::{clique_tree, enumerate_minors, grid_edges, CliqueTree};
use crate::error::ModelError;
use crate::expr::{Expr, Poly};
use crate::netmodel::Network;
use crate::scalar::Scalar;

/// Angles closer than this to ±π/2 are treated as unbounded.
const ANGLE_EPS: f64 = 1e-9;

/// Slack on `det W ≥ 0` for size-3 minors. The determinant's gradient
/// vanishes at rank-one points, where an exact bound leaves the multiplier
/// unbounded; the slackened set still contains every feasible lift.
pub const DET3_SLACK: f64 = 1e-8;

struct Registry<T> {
    vars: Vec<VarInfo>,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Registry<T> {
    fn new() -> Self {
        Registry {
            vars: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    fn from_model(m: &ModelSpec<T>) -> Self {
        Registry {
            vars: m.vars.as_ref().clone(),
            lower: m.lower.clone(),
            upper: m.upper.clone(),
        }
    }

    fn add(&mut self, kind: VarKind, key: VarKey, name: String, lb: f64, ub: f64) -> usize {
        self.vars.push(VarInfo {
            var: VarRef::new(kind, key),
            name,
        });
        self.lower.push(T::from_f64(lb));
        self.upper.push(T::from_f64(ub));
        self.vars.len() - 1
    }
}

fn c<T: Scalar>(v: f64) -> Expr<T> {
    Expr::constant(T::from_f64(v))
}

fn v<T: Scalar>(i: usize) -> Expr<T> {
    Expr::var(i)
}

fn constraint<T: Scalar>(e: Expr<T>, sense: Sense, tag: String) -> Constraint<T> {
    let poly = e
        .compile()
        .expect("model expressions have degree at most three");
    Constraint { poly, sense, tag }
}

/// How `W_ii` and `W_ij = V_i V_j*` are expressed: as lifted variables or
/// as products of rectangular voltages.
enum WSource {
    Lifted {
        wii: Vec<usize>,
        pairs: BTreeMap<(usize, usize), (usize, usize)>,
    },
    Voltage {
        vre: Vec<usize>,
        vim: Vec<usize>,
    },
}

impl WSource {
    fn wii<T: Scalar>(&self, i: usize) -> Expr<T> {
        match self {
            WSource::Lifted { wii, .. } => v(wii[i]),
            WSource::Voltage { vre, vim } => v::<T>(vre[i]).square() + v::<T>(vim[i]).square(),
        }
    }

    /// Real and imaginary parts of `W_ij` for any orientation.
    fn wij<T: Scalar>(&self, i: usize, j: usize) -> (Expr<T>, Expr<T>) {
        match self {
            WSource::Lifted { pairs, .. } => {
                let (re, im) = pairs[&(i.min(j), i.max(j))];
                if i < j {
                    (v(re), v(im))
                } else {
                    (v(re), -v(im))
                }
            }
            WSource::Voltage { vre, vim } => (
                v::<T>(vre[i]) * v(vre[j]) + v::<T>(vim[i]) * v(vim[j]),
                v::<T>(vim[i]) * v(vre[j]) - v::<T>(vre[i]) * v(vim[j]),
            ),
        }
    }
}

fn dir_label(d: Dir) -> &'static str {
    match d {
        Dir::From => "from",
        Dir::To => "to",
    }
}

fn branch_name(net: &Network, k: usize, d: Dir) -> String {
    let b = &net.branches[k];
    match d {
        Dir::From => format!("b{k}:{}>{}", b.from, b.to),
        Dir::To => format!("b{k}:{}>{}", b.to, b.from),
    }
}

/// Angle-difference range of `θ_i − θ_j` for `i < j`, intersected over
/// parallel branches.
fn pair_angle_ranges(net: &Network) -> BTreeMap<(usize, usize), (f64, f64)> {
    let mut out: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for b in &net.branches {
        let (f, t) = (net.idx(b.from), net.idx(b.to));
        let (lo, hi) = if f < t {
            (b.angle_min, b.angle_max)
        } else {
            (-b.angle_max, -b.angle_min)
        };
        let e = out
            .entry((f.min(t), f.max(t)))
            .or_insert((-FRAC_PI_2, FRAC_PI_2));
        e.0 = e.0.max(lo);
        e.1 = e.1.min(hi);
    }
    out
}

/// Box on `V_i V_j*` implied by magnitude and angle-difference bounds.
fn product_box(vl: f64, vu: f64, lo: f64, hi: f64) -> ((f64, f64), (f64, f64)) {
    let amax = lo.abs().max(hi.abs()).min(FRAC_PI_2);
    let re_lb = vl * amax.cos();
    let re_ub = if lo <= 0.0 && hi >= 0.0 {
        vu
    } else {
        vu * lo.abs().min(hi.abs()).cos()
    };
    let im_lb = if lo < 0.0 {
        vu * lo.sin()
    } else {
        vl * lo.sin()
    };
    let im_ub = if hi > 0.0 {
        vu * hi.sin()
    } else {
        vl * hi.sin()
    };
    ((re_lb.max(0.0), re_ub), (im_lb, im_ub))
}

/// Generators, flows, flow definitions, bus balance, angle limits and
/// thermal limits, shared by every model. Returns the cost polynomial.
fn network_constraints<T: Scalar>(
    net: &Network,
    reg: &mut Registry<T>,
    w: &WSource,
    cons: &mut Vec<Constraint<T>>,
) -> Poly<T> {
    let base = net.base_mva;
    let n = net.n_buses();
    let mut pg = Vec::new();
    let mut qg = Vec::new();
    for (k, g) in net.generators.iter().enumerate() {
        pg.push(reg.add(
            VarKind::Pg,
            VarKey::Gen(k),
            format!("pg(g{k}@{})", g.bus),
            g.pmin,
            g.pmax,
        ));
        qg.push(reg.add(
            VarKind::Qg,
            VarKey::Gen(k),
            format!("qg(g{k}@{})", g.bus),
            g.qmin,
            g.qmax,
        ));
    }

    let mut out_p: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut out_q: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, b) in net.branches.iter().enumerate() {
        let (f, t) = (net.idx(b.from), net.idx(b.to));
        let s = b.thermal_limit.sqrt();
        let mut pq = |d: Dir, bus: usize| {
            let nm = branch_name(net, k, d);
            let p = reg.add(
                VarKind::Pflow,
                VarKey::Branch(k, d),
                format!("p({nm})"),
                -s,
                s,
            );
            let q = reg.add(
                VarKind::Qflow,
                VarKey::Branch(k, d),
                format!("q({nm})"),
                -s,
                s,
            );
            out_p[bus].push(p);
            out_q[bus].push(q);
            (p, q)
        };
        let (pf, qf) = pq(Dir::From, f);
        let (pt, qt) = pq(Dir::To, t);

        let (re, im) = w.wij::<T>(f, t);
        let a = (b.series + b.charging).conj() / b.tap_sq();
        let bb = b.series.conj() / b.tap;
        let cc = b.series.conj() / b.tap.conj();
        let d = (b.series + b.charging).conj();
        let nm = branch_name(net, k, Dir::From);
        // S_f = A W_ff − B W_ft
        cons.push(constraint(
            v(pf) - (c(a.re) * w.wii(f) - c(bb.re) * re.clone() + c(bb.im) * im.clone()),
            Sense::Eq,
            format!("flow definition p {nm}"),
        ));
        cons.push(constraint(
            v(qf) - (c(a.im) * w.wii(f) - c(bb.re) * im.clone() - c(bb.im) * re.clone()),
            Sense::Eq,
            format!("flow definition q {nm}"),
        ));
        // S_t = D W_tt − C conj(W_ft)
        let nm = branch_name(net, k, Dir::To);
        cons.push(constraint(
            v(pt) - (c(d.re) * w.wii(t) - c(cc.re) * re.clone() - c(cc.im) * im.clone()),
            Sense::Eq,
            format!("flow definition p {nm}"),
        ));
        cons.push(constraint(
            v(qt) - (c(d.im) * w.wii(t) - c(cc.im) * re + c(cc.re) * im),
            Sense::Eq,
            format!("flow definition q {nm}"),
        ));
        for (p, q, d) in [(pf, qf, Dir::From), (pt, qt, Dir::To)] {
            cons.push(constraint(
                v::<T>(p).square() + v::<T>(q).square() - c(b.thermal_limit),
                Sense::Le,
                format!("thermal limit {}", branch_name(net, k, d)),
            ));
        }
    }

    let gens_at = net.generators_at();
    for (i, bus) in net.buses.iter().enumerate() {
        let sum = |ids: &[usize]| ids.iter().map(|&x| v::<T>(x)).collect::<Vec<_>>();
        let mut p = sum(&gens_at[i].iter().map(|&g| pg[g]).collect::<Vec<_>>());
        p.extend(out_p[i].iter().map(|&x| -v::<T>(x)));
        p.push(-(c(bus.shunt.re) * w.wii(i)));
        p.push(c(-bus.demand.re));
        cons.push(constraint(
            Expr::sum(p),
            Sense::Eq,
            format!("power balance p bus {}", bus.id),
        ));
        let mut q = sum(&gens_at[i].iter().map(|&g| qg[g]).collect::<Vec<_>>());
        q.extend(out_q[i].iter().map(|&x| -v::<T>(x)));
        q.push(c(bus.shunt.im) * w.wii(i));
        q.push(c(-bus.demand.im));
        cons.push(constraint(
            Expr::sum(q),
            Sense::Eq,
            format!("power balance q bus {}", bus.id),
        ));
    }

    for (&(i, j), &(lo, hi)) in &pair_angle_ranges(net) {
        let (re, im) = w.wij::<T>(i, j);
        let ids = (net.buses[i].id, net.buses[j].id);
        if hi < FRAC_PI_2 - ANGLE_EPS {
            cons.push(constraint(
                im.clone() - c(hi.tan()) * re.clone(),
                Sense::Le,
                format!("angle difference upper {}-{}", ids.0, ids.1),
            ));
        }
        if lo > -FRAC_PI_2 + ANGLE_EPS {
            cons.push(constraint(
                im - c(lo.tan()) * re.clone(),
                Sense::Ge,
                format!("angle difference lower {}-{}", ids.0, ids.1),
            ));
        }
        let unbounded = hi >= FRAC_PI_2 - ANGLE_EPS || lo <= -FRAC_PI_2 + ANGLE_EPS;
        if unbounded && matches!(w, WSource::Voltage { .. }) {
            cons.push(constraint(
                re,
                Sense::Ge,
                format!("angle difference within ±90° {}-{}", ids.0, ids.1),
            ));
        }
    }

    let mut cost = vec![(T::from_f64(net.fixed_cost()), vec![])];
    for (k, g) in net.generators.iter().enumerate() {
        cost.push((T::from_f64(g.c1 * base), vec![pg[k]]));
        cost.push((T::from_f64(g.c2 * base * base), vec![pg[k], pg[k]]));
    }
    poly(cost)
}

/// Nonconvex ACOPF in rectangular voltages.
pub fn build_acopf<T: Scalar>(net: &Network) -> ModelSpec<T> {
    let mut reg = Registry::new();
    let r = net.reference_bus();
    let mut vre = Vec::new();
    let mut vim = Vec::new();
    for (i, b) in net.buses.iter().enumerate() {
        let lb = if i == r { 0.0 } else { -b.vmax };
        vre.push(reg.add(
            VarKind::Vre,
            VarKey::Bus(i),
            format!("vre({})", b.id),
            lb,
            b.vmax,
        ));
        let (l, u) = if i == r {
            (0.0, 0.0)
        } else {
            (-b.vmax, b.vmax)
        };
        vim.push(reg.add(VarKind::Vim, VarKey::Bus(i), format!("vim({})", b.id), l, u));
    }
    let w = WSource::Voltage { vre, vim };
    let mut cons = Vec::new();
    for (i, b) in net.buses.iter().enumerate() {
        cons.push(constraint(
            w.wii::<T>(i) - c(b.vmax * b.vmax),
            Sense::Le,
            format!("voltage magnitude upper bus {}", b.id),
        ));
        cons.push(constraint(
            w.wii::<T>(i) - c(b.vmin * b.vmin),
            Sense::Ge,
            format!("voltage magnitude lower bus {}", b.id),
        ));
    }
    let cost = network_constraints(net, &mut reg, &w, &mut cons);
    ModelSpec::from_parts(
        ModelKind::Nonconvex,
        reg.vars,
        reg.lower,
        reg.upper,
        cons,
        vec![],
        cost,
    )
}

/// Determinant relaxation in `W` space at hierarchy level 2 or 3.
pub fn build_detsdp<T: Scalar>(
    net: &Network,
    ct: &CliqueTree,
    level: usize,
) -> Result<ModelSpec<T>, ModelError> {
    let minors = enumerate_minors(ct, level)?;
    let mut reg = Registry::new();
    let wii: Vec<usize> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            reg.add(
                VarKind::Wii,
                VarKey::Bus(i),
                format!("W({})", b.id),
                b.vmin * b.vmin,
                b.vmax * b.vmax,
            )
        })
        .collect();
    let angles = pair_angle_ranges(net);
    let mut pairs = BTreeMap::new();
    for (i, j) in ct.clique_pairs() {
        let (bi, bj) = (&net.buses[i], &net.buses[j]);
        let vu = bi.vmax * bj.vmax;
        let ((rl, ru), (il, iu)) = match angles.get(&(i, j)) {
            Some(&(lo, hi)) => product_box(bi.vmin * bj.vmin, vu, lo, hi),
            None => ((-vu, vu), (-vu, vu)),
        };
        let key = VarKey::Pair(i, j);
        let re = reg.add(
            VarKind::WijRe,
            key,
            format!("Wre({},{})", bi.id, bj.id),
            rl,
            ru,
        );
        let im = reg.add(
            VarKind::WijIm,
            key,
            format!("Wim({},{})", bi.id, bj.id),
            il,
            iu,
        );
        pairs.insert((i, j), (re, im));
    }
    let w = WSource::Lifted { wii, pairs };
    let mut cons = Vec::new();
    let cost = network_constraints(net, &mut reg, &w, &mut cons);

    for m in &minors {
        let ids: Vec<String> = m
            .nodes
            .iter()
            .map(|&i| net.buses[i].id.to_string())
            .collect();
        let label = format!("clique {} {{{}}}", m.clique_index, ids.join(","));
        match m.nodes[..] {
            [i, j] => {
                let (re, im) = w.wij::<T>(i, j);
                cons.push(constraint(
                    w.wii::<T>(i) * w.wii(j) - re.square() - im.square(),
                    Sense::Ge,
                    format!("det2 {label}"),
                ));
            }
            [i, j, k] => {
                let (xr, xi) = w.wij::<T>(i, j);
                let (yr, yi) = w.wij::<T>(i, k);
                let (zr, zi) = w.wij::<T>(j, k);
                cons.push(constraint(
                    Expr::det3([w.wii(i), w.wii(j), w.wii(k), xr, xi, yr, yi, zr, zi])
                        + Expr::constant(T::from_f64(DET3_SLACK)),
                    Sense::Ge,
                    format!("det3 {label}"),
                ));
            }
            _ => unreachable!("minor sizes are 2 or 3"),
        }
    }
    let kind = if level == 2 {
        ModelKind::DetSoc
    } else {
        ModelKind::Det3
    };
    Ok(ModelSpec::from_parts(
        kind,
        reg.vars,
        reg.lower,
        reg.upper,
        cons,
        vec![],
        cost,
    ))
}

/// Adds squared-current variables with their linear identities, lifted
/// power products, lifted thermal limits, and secant and McCormick
/// envelopes.
pub fn add_rlt_cuts<T: Scalar>(
    m: &ModelSpec<T>,
    net: &Network,
) -> Result<ModelSpec<T>, ModelError> {
    let kind = match m.kind {
        ModelKind::DetSoc => ModelKind::DetSocRlt,
        ModelKind::Det3 => ModelKind::Det3Rlt,
        other => return Err(ModelError::NotARelaxation(other.label().to_string())),
    };
    let mut reg = Registry::from_model(m);
    let mut cons: Vec<Constraint<T>> = m.constraints.as_ref().clone();
    let mut envs: Vec<Envelope> = m.envelopes.as_ref().clone();
    let find = |kind: VarKind, key: VarKey| {
        m.var(kind, key)
            .ok_or_else(|| ModelError::UnknownVariable(format!("{kind:?} {key:?}")))
    };
    let mut wii = Vec::new();
    for i in 0..net.n_buses() {
        wii.push(find(VarKind::Wii, VarKey::Bus(i))?);
    }
    let mut pairs = BTreeMap::new();
    for (i, j) in grid_edges(net) {
        let key = VarKey::Pair(i, j);
        pairs.insert(
            (i, j),
            (find(VarKind::WijRe, key)?, find(VarKind::WijIm, key)?),
        );
    }
    let w = WSource::Lifted { wii, pairs };

    for (k, b) in net.branches.iter().enumerate() {
        let (f, t) = (net.idx(b.from), net.idx(b.to));
        let tap2 = b.tap_sq();
        let ytt = b.series + b.charging;
        let (re, im) = w.wij::<T>(f, t);
        let ends = [
            (
                Dir::From,
                f,
                tap2 * b.thermal_limit / net.buses[f].vmin.powi(2),
            ),
            (Dir::To, t, b.thermal_limit / net.buses[t].vmin.powi(2)),
        ];
        for (d, bus, l_ub) in ends {
            let nm = branch_name(net, k, d);
            let key = VarKey::Branch(k, d);
            let p = find(VarKind::Pflow, key)?;
            let q = find(VarKind::Qflow, key)?;
            let l = reg.add(VarKind::L, key, format!("l({nm})"), 0.0, l_ub);
            let ph = reg.add(VarKind::Phat, key, format!("phat({nm})"), 0.0, 0.0);
            let qh = reg.add(VarKind::Qhat, key, format!("qhat({nm})"), 0.0, 0.0);
            let lw = reg.add(VarKind::LWhat, key, format!("lW({nm})"), 0.0, 0.0);
            for (y, x) in [(ph, p), (qh, q)] {
                if !(reg.lower[x].to_f64().is_finite() && reg.upper[x].to_f64().is_finite()) {
                    return Err(ModelError::UnboundedEnvelopeParent(
                        reg.vars[x].name.clone(),
                    ));
                }
                envs.push(Envelope::Secant { y, x });
            }
            envs.push(Envelope::McCormick {
                w: lw,
                x: w_index(&w, bus),
                y: l,
            });

            // |T|² l = a W_ff − 2 Re[K W_ft] + e W_tt  (from end)
            // |T|² l = a' W_tt − 2 Re[K' conj(W_ft)] + e' W_ff  (to end)
            let (own, other, a, kk, e, conj) = match d {
                Dir::From => (
                    f,
                    t,
                    ytt.norm_sqr(),
                    ytt * b.series.conj() * b.tap.conj(),
                    (b.series * b.tap).norm_sqr(),
                    false,
                ),
                Dir::To => (
                    t,
                    f,
                    (ytt * b.tap).norm_sqr(),
                    ytt * b.series.conj() * b.tap,
                    b.series.norm_sqr(),
                    true,
                ),
            };
            let im_w = if conj { -im.clone() } else { im.clone() };
            let re_kw = c::<T>(kk.re) * re.clone() - c(kk.im) * im_w;
            cons.push(constraint(
                c::<T>(tap2) * v(l) - c(a) * w.wii(own) + c(2.0) * re_kw - c(e) * w.wii(other),
                Sense::Eq,
                format!("current identity {} {nm}", dir_label(d)),
            ));
            let scale = if d == Dir::From { tap2 } else { 1.0 };
            cons.push(constraint(
                v::<T>(lw) - c(scale) * (v(ph) + v(qh)),
                Sense::Eq,
                format!("lifted power product {nm}"),
            ));
            cons.push(constraint(
                v::<T>(ph) + v(qh) - c(b.thermal_limit),
                Sense::Le,
                format!("lifted thermal limit {nm}"),
            ));
        }
    }
    let mut out = ModelSpec::from_parts(
        kind,
        reg.vars,
        reg.lower,
        reg.upper,
        cons,
        envs,
        m.cost.clone(),
    );
    out.extra = m.extra.clone();
    Ok(out)
}

fn w_index(w: &WSource, i: usize) -> usize {
    match w {
        WSource::Lifted { wii, .. } => wii[i],
        WSource::Voltage { .. } => unreachable!("envelopes live in W space"),
    }
}

/// Bound-tightening subproblem: optimize one variable over the relaxation
/// intersected with the cost cutoff `cost ≤ f_bar`.
pub fn build_obbt_sub<T: Scalar>(
    m: &ModelSpec<T>,
    target: usize,
    sense: ObjSense,
    f_bar: f64,
) -> ModelSpec<T> {
    debug_assert!(
        m.kind != ModelKind::Nonconvex,
        "subproblems need a relaxation"
    );
    let mut sub = m.clone();
    sub.kind = ModelKind::ObbtSub;
    let sign = match sense {
        ObjSense::Min => T::one(),
        ObjSense::Max => -T::one(),
    };
    sub.objective = poly(vec![(sign, vec![target])]);
    sub.target = Some((target, sense));
    if f_bar.is_finite() {
        if f_bar < m.cost.constant().to_f64() {
            log::warn!("cutoff {f_bar} is below the fixed cost; the subproblem is infeasible");
        }
        let mut cut = m.cost.clone();
        cut.terms.push(crate::expr::Term {
            coef: T::from_f64(-f_bar),
            mono: crate::expr::Monomial::ONE,
        });
        let cut = Poly::from_terms(
            cut.terms
                .into_iter()
                .map(|t| (t.coef, t.mono.vars().collect()))
                .collect(),
        )
        .expect("cost is quadratic");
        sub.extra.push(Constraint {
            poly: cut,
            sense: Sense::Le,
            tag: "cost cutoff".to_string(),
        });
    }
    sub
}

/// Clique tree, determinant relaxation, and optionally the current cuts.
pub fn build_relaxation<T: Scalar>(
    net: &Network,
    relaxation: Relaxation,
) -> Result<ModelSpec<T>, ModelError> {
    let ct = clique_tree(net)?;
    let base = build_detsdp(net, &ct, relaxation.level())?;
    if relaxation.rlt() {
        add_rlt_cuts(&base, net)
    } else {
        Ok(base)
    }
}

/// Maps a voltage profile and generator dispatch to a point of `m`:
/// `W = V V*`, flows from the branch equations, `l` from end currents and
/// lifted products from their definitions.
pub fn lift_point<T: Scalar>(
    m: &ModelSpec<T>,
    net: &Network,
    volts: &[Complex64],
    dispatch: &[Complex64],
) -> Vec<f64> {
    let mut ends = Vec::new();
    for b in &net.branches {
        let (vf, vt) = (volts[net.idx(b.from)], volts[net.idx(b.to)]);
        let (sf, st) = b.flows(vf, vt);
        let (i_f, i_t) = b.currents(vf, vt);
        ends.push([
            (sf, i_f.norm_sqr(), vf.norm_sqr()),
            (st, i_t.norm_sqr(), vt.norm_sqr()),
        ]);
    }
    m.vars
        .iter()
        .map(|info| {
            let end = |k: usize, d: Dir| ends[k][if d == Dir::From { 0 } else { 1 }];
            match (info.var.kind, info.var.key) {
                (VarKind::Wii, VarKey::Bus(i)) => volts[i].norm_sqr(),
                (VarKind::WijRe, VarKey::Pair(i, j)) => (volts[i] * volts[j].conj()).re,
                (VarKind::WijIm, VarKey::Pair(i, j)) => (volts[i] * volts[j].conj()).im,
                (VarKind::Vre, VarKey::Bus(i)) => volts[i].re,
                (VarKind::Vim, VarKey::Bus(i)) => volts[i].im,
                (VarKind::Pg, VarKey::Gen(g)) => dispatch[g].re,
                (VarKind::Qg, VarKey::Gen(g)) => dispatch[g].im,
                (VarKind::Pflow, VarKey::Branch(k, d)) => end(k, d).0.re,
                (VarKind::Qflow, VarKey::Branch(k, d)) => end(k, d).0.im,
                (VarKind::Phat, VarKey::Branch(k, d)) => end(k, d).0.re.powi(2),
                (VarKind::Qhat, VarKey::Branch(k, d)) => end(k, d).0.im.powi(2),
                (VarKind::L, VarKey::Branch(k, d)) => end(k, d).1,
                (VarKind::LWhat, VarKey::Branch(k, d)) => end(k, d).1 * end(k, d).2,
                (kind, key) => panic!("no lift for {kind:?} {key:?}"),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::two_bus;

    fn flat_point(net: &Network, m: &ModelSpec<f64>, angle: f64) -> Vec<f64> {
        let volts = vec![Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, angle)];
        let b = &net.branches[0];
        let (sf, _) = b.flows(volts[0], volts[1]);
        lift_point(m, net, &volts, &[sf])
    }

    #[test]
    fn lifted_flat_point_is_feasible_in_every_model() {
        let net = two_bus();
        for r in Relaxation::ALL {
            let m: ModelSpec<f64> = build_relaxation(&net, r).unwrap();
            let x = flat_point(&net, &m, 0.0);
            let (viol, tag) = m.max_violation(&x);
            assert!(viol <= 1e-12, "{r}: {viol} at {tag}");
        }
        let m: ModelSpec<f64> = build_acopf(&net);
        let x = flat_point(&net, &m, 0.0);
        assert!(m.max_violation(&x).0 <= 1e-12);
    }

    #[test]
    fn power_flow_residuals_vanish_at_a_hand_built_solution() {
        // Bus 2 draws 0.5 p.u. over a lossless line x = 0.1 with |V| = 1:
        // p = 10 sin(θ1 − θ2) gives θ2 = −asin(0.05); bus 2 needs q = 10(1 − cos θ2).
        let mut net = two_bus();
        let th = -(0.05f64).asin();
        net.buses[1].demand = Complex64::new(0.5, 10.0 * (th.cos() - 1.0));
        let m: ModelSpec<f64> = build_acopf(&net);
        let x = flat_point(&net, &m, th);
        let balance = m.constraints.iter().filter(|c| c.sense == Sense::Eq);
        for c in balance {
            assert!(c.poly.eval(&x).abs() <= 1e-8, "{}", c.tag);
        }
        let pg = m.var(VarKind::Pg, VarKey::Gen(0)).unwrap();
        assert!((x[pg] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rlt_requires_a_determinant_relaxation() {
        let net = two_bus();
        let m: ModelSpec<f64> = build_acopf(&net);
        assert!(matches!(
            add_rlt_cuts(&m, &net),
            Err(ModelError::NotARelaxation(_))
        ));
    }

    #[test]
    fn current_bound_uses_tap_and_vmin() {
        let net = two_bus();
        let m: ModelSpec<f64> = build_relaxation(&net, Relaxation::Det3Rlt).unwrap();
        let l = m.var(VarKind::L, VarKey::Branch(0, Dir::From)).unwrap();
        assert!((m.upper[l] - 1.0 / 0.81).abs() < 1e-12);
    }

    #[test]
    fn cutoff_is_added_only_for_finite_bounds() {
        let net = two_bus();
        let m: ModelSpec<f64> = build_relaxation(&net, Relaxation::Det3).unwrap();
        let w = m.var(VarKind::Wii, VarKey::Bus(1)).unwrap();
        assert!(build_obbt_sub(&m, w, ObjSense::Max, f64::INFINITY)
            .extra
            .is_empty());
        let sub = build_obbt_sub(&m, w, ObjSense::Max, 10.0);
        assert_eq!(sub.extra.len(), 1);
        assert_eq!(sub.objective.eval(&vec![0.5; m.n_vars()]), -0.5);
    }

    #[test]
    fn product_box_is_valid_when_angles_straddle_zero() {
        let ((rl, ru), (il, iu)) = product_box(0.81, 1.21, -0.5, 0.3);
        assert!((rl - 0.81 * 0.5f64.cos()).abs() < 1e-15);
        assert_eq!(ru, 1.21);
        assert!((il - 1.21 * (-0.5f64).sin()).abs() < 1e-15);
        assert!((iu - 1.21 * 0.3f64.sin()).abs() < 1e-15);
    }
}
