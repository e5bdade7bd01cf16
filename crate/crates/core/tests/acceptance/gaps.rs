use acopf_core::sdpbt::{known_solution, root, run, BtConfig, UpperBound, UpperBoundSource};
use acopf_core::Relaxation;

use crate::cases::{case, case9, config, data, multistart, summary};
use crate::Verdict;

pub fn case9_closes() -> Verdict {
    let c = case9();
    let UpperBoundSource::MultiStart { starts, verified, .. } = c.upper.source else {
        return Verdict::check(false, "upper bound did not come from a multistart");
    };
    let gap = c.full.report.final_gap;
    Verdict::check(
        starts >= 20 && gap <= 1.0,
        format!(
            "f̄ {:.4} from {starts} starts ({verified} verified); {}",
            c.upper.value,
            summary(&c.full)
        ),
    )
}

pub fn case9_ablations() -> Verdict {
    let c = case9();
    let mut pass = c.full.report.final_gap <= 1.0;
    let mut parts = vec![format!("det3+rlt {:.3}%", c.full.report.final_gap)];
    for r in [Relaxation::RltOnly, Relaxation::Det3] {
        let o = run(&c.net, r, c.upper.clone(), &config()).expect("tightening runs");
        pass &= o.report.final_gap >= 5.0;
        parts.push(format!("{r} {:.3}% ({:?})", o.report.final_gap, o.report.status));
    }
    Verdict::check(pass, parts.join(", "))
}

pub fn case9_tree_closes() -> Verdict {
    let net = case("nesta_case9_bgm__nco_tree");
    let full = case("nesta_case9_bgm__nco");
    let derived = full.without_branch(4, 9, &net.name);
    if derived != net {
        return Verdict::check(false, "tree file is not case9 without branch 4-9");
    }
    let upper = multistart(&net);
    let o = run(&net, Relaxation::Det3Rlt, upper.clone(), &config()).expect("tightening runs");
    Verdict::check(
        o.report.final_gap <= 1.0,
        format!("f̄ {:.4}; {}", upper.value, summary(&o)),
    )
}

pub fn root_gaps() -> Verdict {
    let known_path = data("known_solutions.csv");
    let known = std::fs::read_to_string(&known_path).expect("known solutions ship with the crate");
    let limits = [
        ("pglib_opf_case3_lmbd", 0.5),
        ("pglib_opf_case5_pjm", 0.6),
        ("pglib_opf_case14_ieee", 0.5),
        ("case30_ieee_pglib_style", 0.5),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, limit) in limits {
        let net = case(name);
        let value = known_solution(&known, name).unwrap().expect("every root case is listed");
        let upper = UpperBound {
            value,
            source: UpperBoundSource::KnownSolutions {
                file: known_path.display().to_string(),
            },
        };
        match root(&net, Relaxation::Det3Rlt, upper, &BtConfig::default()) {
            Ok(o) => {
                let gap = o.report.root_gap;
                pass &= gap <= limit;
                parts.push(format!("{name} {gap:.3}% (<= {limit})"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name} failed: {e}"));
            }
        }
    }
    Verdict::check(pass, parts.join(", "))
}
