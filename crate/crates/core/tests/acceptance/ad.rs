use std::collections::BTreeMap;

use acopf_core::relax::{build_acopf, build_relaxation};
use acopf_core::{Model, Poly, Relaxation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cases::case;
use crate::Verdict;

const POINTS: usize = 100;
const TOL: f64 = 1e-6;
const H_GRAD: f64 = 1e-5;
const H_HESS: f64 = 1e-4;

/// Family name of a constraint tag: its leading words, up to the first one
/// naming a bus, branch or clique.
fn family(tag: &str) -> String {
    tag.split_whitespace()
        .take_while(|w| !w.chars().any(|c| c.is_ascii_digit() || "({[±".contains(c)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn rel_err(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0)
}

/// Uniform in the middle 80% of each finite box, in [-1, 1] otherwise.
fn interior(m: &Model, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m.n_vars())
        .map(|i| {
            let (l, u) = (m.lower[i], m.upper[i]);
            if l.is_finite() && u.is_finite() && u > l {
                l + (u - l) * rng.gen_range(0.1..0.9)
            } else if l.is_finite() && u.is_finite() {
                l
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect()
}

fn shifted(x: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += h;
    y
}

/// Worst relative error of the gradient against central differences of
/// values, and of the Hessian against central differences of the gradient.
fn check(p: &Poly, x: &[f64]) -> (f64, f64) {
    let support = p.support();
    let grad = p.gradient(x);
    let hess = p.hessian(x);
    let (mut eg, mut eh) = (0.0f64, 0.0f64);
    for &i in &support {
        let h = H_GRAD * x[i].abs().max(1.0);
        let fd = (p.eval(&shifted(x, i, h)) - p.eval(&shifted(x, i, -h))) / (2.0 * h);
        eg = eg.max(rel_err(grad.get(&i).copied().unwrap_or(0.0), fd));
    }
    for &j in &support {
        let h = H_HESS * x[j].abs().max(1.0);
        let (gp, gm): (BTreeMap<usize, f64>, BTreeMap<usize, f64>) =
            (p.gradient(&shifted(x, j, h)), p.gradient(&shifted(x, j, -h)));
        for &i in &support {
            let fd = (gp.get(&i).copied().unwrap_or(0.0) - gm.get(&i).copied().unwrap_or(0.0)) / (2.0 * h);
            let ad = hess.get(&(i.max(j), i.min(j))).copied().unwrap_or(0.0);
            eh = eh.max(rel_err(ad, fd));
        }
    }
    (eg, eh)
}

pub fn derivatives() -> Verdict {
    let net = case("nesta_case9_bgm__nco");
    let mut models: Vec<Model> = vec![build_acopf(&net)];
    models.extend(Relaxation::ALL.map(|r| build_relaxation(&net, r).unwrap()));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for m in &models {
        let mut polys: Vec<(String, Poly)> = m.materialize().into_iter().map(|c| (family(&c.tag), c.poly)).collect();
        polys.push(("objective".into(), m.objective.clone()));
        for _ in 0..POINTS {
            let x = interior(m, &mut rng);
            for (fam, p) in &polys {
                let (eg, eh) = check(p, &x);
                let w = worst.entry(fam.clone()).or_insert((0.0, 0.0));
                *w = (w.0.max(eg), w.1.max(eh));
            }
        }
    }
    let bad: Vec<String> = worst
        .iter()
        .filter(|(_, &(g, h))| g > TOL || h > TOL)
        .map(|(f, (g, h))| format!("{f}: grad {g:.1e} hess {h:.1e}"))
        .collect();
    let (g, h) = worst.values().fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Verdict::check(
        bad.is_empty(),
        format!(
            "{} families, {POINTS} points per model, worst relative error grad {g:.1e} hess {h:.1e}{}",
            worst.len(),
            if bad.is_empty() { String::new() } else { format!("; over {TOL}: {}", bad.join(", ")) }
        ),
    )
}
