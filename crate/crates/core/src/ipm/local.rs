//! Feasible upper bounds from multistart local solves of the nonconvex
//! model.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve, IpmOptions};
use crate::netmodel::Network;
use crate::relax::{build_acopf, lift_point, ModelSpec, VarKey, VarKind};

/// Bus voltages and generator injections, both in per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcPoint {
    pub volts: Vec<Complex64>,
    pub dispatch: Vec<Complex64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalSolution {
    /// Best verified cost, `+∞` if no start produced a feasible point.
    pub objective: f64,
    pub point: Option<AcPoint>,
    pub starts: usize,
    /// Starts whose result passed verification.
    pub verified: usize,
}

/// Checks `point` against every operating limit using complex arithmetic
/// and returns its cost, or a description of the worst violation.
pub fn verify_ac_point(net: &Network, point: &AcPoint, tol: f64) -> Result<f64, String> {
    let v = &point.volts;
    for (i, b) in net.buses.iter().enumerate() {
        let m = v[i].norm();
        if m < b.vmin - tol || m > b.vmax + tol {
            return Err(format!("bus {} magnitude {m:.6}", b.id));
        }
    }
    let mut cost = 0.0;
    let mut inj: Vec<Complex64> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| -b.demand - b.shunt.conj() * v[i].norm_sqr())
        .collect();
    for (k, g) in net.generators.iter().enumerate() {
        let s = point.dispatch[k];
        if s.re < g.pmin - tol || s.re > g.pmax + tol || s.im < g.qmin - tol || s.im > g.qmax + tol
        {
            return Err(format!("generator {k} output {s:.6}"));
        }
        cost += g.cost(s.re, net.base_mva);
        inj[net.idx(g.bus)] += s;
    }
    for (k, br) in net.branches.iter().enumerate() {
        let (f, t) = (net.idx(br.from), net.idx(br.to));
        let (sf, st) = br.flows(v[f], v[t]);
        inj[f] -= sf;
        inj[t] -= st;
        // Limits are on squared magnitudes; compare in the same units.
        let lim = br.thermal_limit;
        if sf.norm_sqr() > lim + tol || st.norm_sqr() > lim + tol {
            return Err(format!("branch {k} thermal limit"));
        }
        let angle = (v[f] * v[t].conj()).arg();
        if angle < br.angle_min - tol || angle > br.angle_max + tol {
            return Err(format!("branch {k} angle difference {angle:.6}"));
        }
    }
    for (i, s) in inj.iter().enumerate() {
        if s.norm() > tol {
            return Err(format!("bus {} mismatch {s:.3e}", net.buses[i].id));
        }
    }
    Ok(cost)
}

fn start_point(net: &Network, m: &ModelSpec<f64>, volts: &[Complex64]) -> Vec<f64> {
    let mut need: Vec<Complex64> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| b.demand + b.shunt.conj() * volts[i].norm_sqr())
        .collect();
    for br in &net.branches {
        let (f, t) = (net.idx(br.from), net.idx(br.to));
        let (sf, st) = br.flows(volts[f], volts[t]);
        need[f] += sf;
        need[t] += st;
    }
    let at = net.generators_at();
    let mut dispatch = vec![Complex64::new(0.0, 0.0); net.generators.len()];
    for (i, gens) in at.iter().enumerate() {
        let share = need[i] / gens.len().max(1) as f64;
        for &k in gens {
            let g = &net.generators[k];
            dispatch[k] = Complex64::new(
                share.re.clamp(g.pmin, g.pmax),
                share.im.clamp(g.qmin, g.qmax),
            );
        }
    }
    let mut x = lift_point(m, net, volts, &dispatch);
    for (i, v) in x.iter_mut().enumerate() {
        *v = v.clamp(m.lower[i], m.upper[i]);
    }
    x
}

fn extract(net: &Network, m: &ModelSpec<f64>, x: &[f64]) -> AcPoint {
    let volts = (0..net.n_buses())
        .map(|i| {
            let re = m.var(VarKind::Vre, VarKey::Bus(i)).map_or(0.0, |k| x[k]);
            let im = m.var(VarKind::Vim, VarKey::Bus(i)).map_or(0.0, |k| x[k]);
            Complex64::new(re, im)
        })
        .collect();
    let dispatch = (0..net.generators.len())
        .map(|g| {
            let p = m.var(VarKind::Pg, VarKey::Gen(g)).map_or(0.0, |k| x[k]);
            let q = m.var(VarKind::Qg, VarKey::Gen(g)).map_or(0.0, |k| x[k]);
            Complex64::new(p, q)
        })
        .collect();
    AcPoint { volts, dispatch }
}

/// Best feasible cost over `tries` local solves. The first start is the
/// flat profile; the rest draw magnitudes uniformly within limits and
/// angles within ±0.3 rad of the reference from a ChaCha stream seeded by
/// `seed`. Candidates are only accepted after [`verify_ac_point`] at 1e-6.
pub fn local_upper_bound(net: &Network, tries: usize, seed: u64) -> LocalSolution {
    let m: ModelSpec<f64> = build_acopf(net);
    let r = net.reference_bus();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<Complex64>> = (0..tries.max(1))
        .map(|k| {
            net.buses
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    if k == 0 {
                        let mag = 1.0f64.clamp(b.vmin, b.vmax);
                        Complex64::new(mag, 0.0)
                    } else {
                        let mag = rng.gen_range(b.vmin..=b.vmax);
                        let ang = if i == r {
                            0.0
                        } else {
                            rng.gen_range(-0.3..=0.3)
                        };
                        Complex64::from_polar(mag, ang)
                    }
                })
                .collect()
        })
        .collect();
    let opts = IpmOptions::default();
    let results: Vec<Option<(f64, AcPoint)>> = starts
        .par_iter()
        .map(|volts| {
            let x0 = start_point(net, &m, volts);
            let res = solve(&m, &opts, Some(&x0));
            if !res.is_optimal() {
                return None;
            }
            let point = extract(net, &m, &res.primal);
            verify_ac_point(net, &point, 1e-6).ok().map(|c| (c, point))
        })
        .collect();
    let verified = results.iter().filter(|r| r.is_some()).count();
    let best = results
        .into_iter()
        .flatten()
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((objective, point)) => LocalSolution {
            objective,
            point: Some(point),
            starts: tries.max(1),
            verified,
        },
        None => LocalSolution {
            objective: f64::INFINITY,
            point: None,
            starts: tries.max(1),
            verified,
        },
    }
}
