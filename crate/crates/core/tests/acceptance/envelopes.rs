use std::f64::consts::PI;

use acopf_core::expr::{det3_template, det3_value};
use acopf_core::relax::{build_relaxation, Envelope, Sense, VarKind};
use acopf_core::{Expr, Model, Relaxation};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use crate::cases::case;
use crate::Verdict;

const CASES: u32 = 1000;

fn runner() -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn model() -> Model {
    build_relaxation(&case("nesta_case9_bgm__nco"), Relaxation::Det3Rlt).unwrap()
}

/// Position of each envelope's first inequality in `envelope_constraints`.
fn offsets(m: &Model) -> Vec<usize> {
    let mut at = 0;
    m.envelopes
        .iter()
        .map(|e| {
            let here = at;
            at += match e {
                Envelope::Secant { .. } => 2,
                Envelope::McCormick { .. } => 4,
            };
            here
        })
        .collect()
}

fn sorted(a: f64, b: f64) -> (f64, f64) {
    (a.min(b), a.max(b))
}

fn mccormick(m: &Model) -> Result<(), String> {
    let offs = offsets(m);
    let picks: Vec<usize> = (0..m.envelopes.len())
        .filter(|&k| matches!(m.envelopes[k], Envelope::McCormick { .. }))
        .collect();
    let strategy = (0..picks.len(), -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, 0.0..=1.0f64, 0.0..=1.0f64);
    runner()
        .run(&strategy, |(k, a, b, c, d, s, t)| {
            let e = picks[k];
            let Envelope::McCormick { w, x, y } = m.envelopes[e] else { unreachable!() };
            let ((xl, xu), (yl, yu)) = (sorted(a, b), sorted(c, d));
            let (mut lower, mut upper) = (m.lower.clone(), m.upper.clone());
            (lower[x], upper[x], lower[y], upper[y]) = (xl, xu, yl, yu);
            let mb = m.with_bounds(lower, upper);
            let mut pt = vec![0.0; m.n_vars()];
            pt[x] = xl + s * (xu - xl);
            pt[y] = yl + t * (yu - yl);
            pt[w] = pt[x] * pt[y];
            let tol = 1e-12 * (1.0 + xl.abs().max(xu.abs()) * yl.abs().max(yu.abs()));
            for c in &mb.envelope_constraints()[offs[e]..offs[e] + 4] {
                prop_assert!(c.violation(&pt) <= tol, "{} violated by {}", c.tag, c.violation(&pt));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn secant(m: &Model) -> Result<(), String> {
    let offs = offsets(m);
    let picks: Vec<usize> = (0..m.envelopes.len())
        .filter(|&k| matches!(m.envelopes[k], Envelope::Secant { .. }))
        .collect();
    let strategy = (0..picks.len(), -3.0..3.0f64, -3.0..3.0f64, 0.0..=1.0f64);
    runner()
        .run(&strategy, |(k, a, b, s)| {
            let e = picks[k];
            let Envelope::Secant { y, x } = m.envelopes[e] else { unreachable!() };
            let (l, u) = sorted(a, b);
            let (mut lower, mut upper) = (m.lower.clone(), m.upper.clone());
            (lower[x], upper[x]) = (l, u);
            let mb = m.with_bounds(lower, upper);
            let mut pt = vec![0.0; m.n_vars()];
            pt[x] = l + s * (u - l);
            pt[y] = pt[x] * pt[x];
            let tol = 1e-12 * (1.0 + l * l + u * u);
            for c in &mb.envelope_constraints()[offs[e]..offs[e] + 2] {
                prop_assert!(c.violation(&pt) <= tol, "{} violated by {}", c.tag, c.violation(&pt));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Points satisfying a size-2 minor of the model also satisfy
/// `W_ii + W_jj − 2 Wre_ij ≥ 0`.
fn minor2(m: &Model) -> Result<(), String> {
    let minors: Vec<_> = m.constraints.iter().filter(|c| c.tag.starts_with("det2")).collect();
    if minors.is_empty() {
        return Err("model has no size-2 minors".into());
    }
    let strategy = (0..minors.len(), 0.0..1.5f64, 0.0..1.5f64, 0.0..=1.0f64, -PI..PI);
    runner()
        .run(&strategy, |(k, wi, wj, rho, theta)| {
            let c = minors[k];
            let (mut diag, mut re, mut im) = (Vec::new(), None, None);
            for v in c.poly.support() {
                match m.vars[v].var.kind {
                    VarKind::Wii => diag.push(v),
                    VarKind::WijRe => re = Some(v),
                    VarKind::WijIm => im = Some(v),
                    other => panic!("unexpected {other:?} in {}", c.tag),
                }
            }
            let (Some(re), Some(im), &[i, j]) = (re, im, &diag[..]) else {
                panic!("{} is not a 2x2 minor", c.tag)
            };
            let r = rho * (wi * wj).sqrt();
            let mut pt = vec![0.0; m.n_vars()];
            (pt[i], pt[j], pt[re], pt[im]) = (wi, wj, r * theta.cos(), r * theta.sin());
            prop_assert!(c.sense == Sense::Ge && c.violation(&pt) <= 1e-12, "{} rejects a PSD point", c.tag);
            prop_assert!(wi + wj - 2.0 * pt[re] >= -1e-12);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn cofactor(m: [[Complex64; 3]; 3]) -> Complex64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn det3() -> Result<(), String> {
    let template = det3_template::<f64>();
    if template.len() != 11 {
        return Err(format!("template has {} terms", template.len()));
    }
    let compiled = Expr::det3(std::array::from_fn(Expr::var)).compile().map_err(|e| format!("{e:?}"))?;
    runner()
        .run(&proptest::array::uniform9(-2.0..2.0f64), |v| {
            let [a, b, c, xr, xi, yr, yi, zr, zi] = v;
            let re = |r: f64| Complex64::new(r, 0.0);
            let (x, y, z) = (Complex64::new(xr, xi), Complex64::new(yr, yi), Complex64::new(zr, zi));
            let m = [[re(a), x, y], [x.conj(), re(b), z], [y.conj(), z.conj(), re(c)]];
            let d = cofactor(m);
            prop_assert!(d.im.abs() <= 1e-10);
            prop_assert!((det3_value(&v) - d.re).abs() <= 1e-10, "template {} vs {}", det3_value(&v), d.re);
            prop_assert!((compiled.eval(&v) - d.re).abs() <= 1e-10);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn properties() -> Verdict {
    let m = model();
    let results = [
        ("mccormick", mccormick(&m)),
        ("secant", secant(&m)),
        ("minor2", minor2(&m)),
        ("det3", det3()),
    ];
    let pass = results.iter().all(|(_, r)| r.is_ok());
    let parts: Vec<String> = results
        .iter()
        .map(|(name, r)| match r {
            Ok(()) => format!("{name} ok"),
            Err(e) => format!("{name} FAILED: {e}"),
        })
        .collect();
    Verdict::check(pass, format!("{CASES} samples each: {}", parts.join(", ")))
}
