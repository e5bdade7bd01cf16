use std::f64::consts::FRAC_PI_2;

use acopf_core::relax::{build_relaxation, lift_point};
use acopf_core::sdpbt::{run, BtConfig, UpperBound, UpperBoundSource};
use acopf_core::{parse_case, Model, Network, Relaxation};
use num_complex::Complex64;

use crate::Verdict;

const MAGNITUDES: usize = 21;
const ANGLES: usize = 41;
const TOL: f64 = 1e-4;

const HEADER: &str = "mpc.version = '2';\nmpc.baseMVA = 100;\n";

fn network(name: &str, bus: &str, gen: &str, cost: &str, branch: &str) -> Network {
    let text = format!(
        "function mpc = {name}\n{HEADER}mpc.bus = [\n{bus}];\nmpc.gen = [\n{gen}];\nmpc.gencost = [\n{cost}];\nmpc.branch = [\n{branch}];\n"
    );
    parse_case(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Small networks with a generator at every bus, so that any voltage
/// profile fixes a dispatch.
fn networks() -> Vec<Network> {
    vec![
        network(
            "grid2_line",
            "1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;\n2 1 90 30 0 0 1 1 0 230 1 1.1 0.9;\n",
            "1 0 0 300 -300 1 100 1 300 0;\n2 0 0 300 -300 1 100 1 300 0;\n",
            "2 0 0 3 0.02 10 0;\n2 0 0 3 0.04 30 5;\n",
            "1 2 0.02 0.2 0.05 150 150 150 0 0 1 -30 30;\n",
        ),
        network(
            "grid2_congested",
            "1 3 20 0 0 0 1 1 0 230 1 1.05 0.95;\n2 1 120 40 0 10 1 1 0 230 1 1.05 0.95;\n",
            "1 0 0 200 -200 1 100 1 300 0;\n2 0 0 200 -200 1 100 1 300 10;\n",
            "2 0 0 3 0.01 8 0;\n2 0 0 3 0.05 40 0;\n",
            "1 2 0.05 0.25 0.1 60 60 60 0 0 1 -20 20;\n",
        ),
        network(
            "grid3_triangle",
            "1 3 30 10 0 0 1 1 0 230 1 1.1 0.9;\n2 2 80 20 0 0 1 1 0 230 1 1.1 0.9;\n3 1 60 25 0 0 1 1 0 230 1 1.1 0.9;\n",
            "1 0 0 300 -300 1 100 1 300 0;\n2 0 0 300 -300 1 100 1 300 0;\n3 0 0 300 -300 1 100 1 300 0;\n",
            "2 0 0 3 0.02 12 0;\n2 0 0 3 0.03 20 0;\n2 0 0 3 0.05 35 0;\n",
            "1 2 0.02 0.15 0.04 200 200 200 0 0 1 -30 30;\n2 3 0.03 0.2 0.05 200 200 200 0 0 1 -30 30;\n1 3 0.04 0.25 0.03 200 200 200 0 0 1 -30 30;\n",
        ),
        network(
            "grid3_congested_tap",
            "1 3 0 0 0 0 1 1 0 230 1 1.06 0.94;\n2 2 90 30 0 0 1 1 0 230 1 1.06 0.94;\n3 1 100 35 0 0 1 1 0 230 1 1.06 0.94;\n",
            "1 0 0 150 -150 1 100 1 300 0;\n2 0 0 150 -150 1 100 1 300 0;\n3 0 0 150 -150 1 100 1 300 0;\n",
            "2 0 0 3 0.01 10 0;\n2 0 0 3 0.02 25 0;\n2 0 0 3 0.06 45 0;\n",
            "1 2 0.01 0.12 0.02 250 250 250 0 0 1 -30 30;\n2 3 0.02 0.18 0.03 250 250 250 0.98 0 1 -30 30;\n1 3 0.03 0.22 0.03 70 70 70 0 0 1 -30 30;\n",
        ),
    ]
}

struct GridOptimum {
    cost: f64,
    volts: Vec<Complex64>,
    dispatch: Vec<Complex64>,
    feasible_points: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Cost and dispatch of the profile `volts`, if it is feasible.
fn evaluate(net: &Network, gen_of: &[usize], volts: &[Complex64]) -> Option<(f64, Vec<Complex64>)> {
    let mut inj: Vec<Complex64> = net
        .buses
        .iter()
        .zip(volts)
        .map(|(b, v)| b.demand + b.shunt.conj() * v.norm_sqr())
        .collect();
    for br in &net.branches {
        let (f, t) = (net.idx(br.from), net.idx(br.to));
        let diff = (volts[f] * volts[t].conj()).arg();
        if diff < br.angle_min - 1e-12 || diff > br.angle_max + 1e-12 {
            return None;
        }
        let (sf, st) = br.flows(volts[f], volts[t]);
        if sf.norm_sqr() > br.thermal_limit || st.norm_sqr() > br.thermal_limit {
            return None;
        }
        inj[f] += sf;
        inj[t] += st;
    }
    let mut cost = 0.0;
    let mut dispatch = vec![Complex64::new(0.0, 0.0); net.generators.len()];
    for (i, s) in inj.iter().enumerate() {
        let g = &net.generators[gen_of[i]];
        if s.re < g.pmin || s.re > g.pmax || s.im < g.qmin || s.im > g.qmax {
            return None;
        }
        cost += g.cost(s.re, net.base_mva);
        dispatch[gen_of[i]] = *s;
    }
    Some((cost, dispatch))
}

/// Minimum cost over `MAGNITUDES` magnitudes per bus and `ANGLES` angles in
/// [−π/2, π/2] per non-reference bus.
fn enumerate(net: &Network) -> Option<GridOptimum> {
    let n = net.n_buses();
    let gen_of: Vec<usize> = net
        .generators_at()
        .iter()
        .map(|at| {
            assert_eq!(at.len(), 1, "grid networks carry one generator per bus");
            at[0]
        })
        .collect();
    let reference = net.reference_bus();
    let mags: Vec<Vec<f64>> = net.buses.iter().map(|b| linspace(b.vmin, b.vmax, MAGNITUDES)).collect();
    let angles = linspace(-FRAC_PI_2, FRAC_PI_2, ANGLES);
    let others: Vec<usize> = (0..n).filter(|&i| i != reference).collect();
    let total = MAGNITUDES.pow(n as u32) * ANGLES.pow(others.len() as u32);
    let mut best: Option<GridOptimum> = None;
    let mut feasible = 0;
    let mut volts = vec![Complex64::new(0.0, 0.0); n];
    for code in 0..total {
        let mut c = code;
        for (i, m) in mags.iter().enumerate() {
            let r = m[c % MAGNITUDES];
            c /= MAGNITUDES;
            volts[i] = Complex64::new(r, 0.0);
        }
        for &i in &others {
            volts[i] = Complex64::from_polar(volts[i].re, angles[c % ANGLES]);
            c /= ANGLES;
        }
        if let Some((cost, dispatch)) = evaluate(net, &gen_of, &volts) {
            feasible += 1;
            if best.as_ref().is_none_or(|b| cost < b.cost) {
                best = Some(GridOptimum {
                    cost,
                    volts: volts.clone(),
                    dispatch,
                    feasible_points: 0,
                });
            }
        }
    }
    best.map(|b| GridOptimum {
        feasible_points: feasible,
        ..b
    })
}

/// Checks one relaxation on one network; returns a description of the
/// first violation found.
fn check(net: &Network, opt: &GridOptimum, relaxation: Relaxation) -> Result<usize, String> {
    let m: Model = build_relaxation(net, relaxation).map_err(|e| e.to_string())?;
    let lifted = lift_point(&m, net, &opt.volts, &opt.dispatch);
    let (viol, tag) = m.max_violation(&lifted);
    if viol > 1e-6 {
        return Err(format!("grid optimum violates `{tag}` by {viol:.2e}"));
    }
    let cfg = BtConfig {
        eps_o: 1e-9,
        max_iter: 4,
        threads: 1,
        time_limit: Some(300.0),
        ..BtConfig::default()
    };
    let upper = UpperBound {
        value: opt.cost,
        source: UpperBoundSource::Given,
    };
    let out = run(net, relaxation, upper, &cfg).map_err(|e| e.to_string())?;
    for t in &out.report.trace {
        if t.lower_bound > opt.cost + TOL {
            return Err(format!(
                "iteration {} lower bound {:.6} above grid optimum {:.6}",
                t.iteration, t.lower_bound, opt.cost
            ));
        }
    }
    for e in &out.ledger.entries {
        let v = lifted[e.var];
        let slack = 1e-5 * v.abs().max(1.0);
        if v < e.lb - slack || v > e.ub + slack {
            return Err(format!("{} = {v:.6} cut off by [{:.6}, {:.6}]", e.name, e.lb, e.ub));
        }
    }
    Ok(out.report.iterations)
}

pub fn grid_soundness() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for net in networks() {
        let Some(opt) = enumerate(&net) else {
            pass = false;
            parts.push(format!("{}: no feasible grid point", net.name));
            continue;
        };
        let mut iters = Vec::new();
        for r in Relaxation::ALL {
            match check(&net, &opt, r) {
                Ok(k) => iters.push(format!("{r}:{k}")),
                Err(e) => {
                    pass = false;
                    iters.push(format!("{r} FAILED {e}"));
                }
            }
        }
        parts.push(format!(
            "{} estimate {:.4} ({} feasible points; BT iterations {})",
            net.name,
            opt.cost,
            opt.feasible_points,
            iters.join(" ")
        ));
    }
    Verdict::check(pass, parts.join("; "))
}
