use std::path::PathBuf;
use std::process::{Command, Output};

use acopf_core::report::Report;

const BIN: &str = env!("CARGO_BIN_EXE_acopf-tighten");

fn data(rel: &str) -> String {
    format!("{}/../core/data/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn scratch(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn acopf(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

const TWO_BUS: &str = "function mpc = two_bus_toy
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	LOAD	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	250	0;
];
mpc.gencost = [
	2	0	0	3	0.01	20	100;
];
mpc.branch = [
	1	2	0.01	0.1	0	200	200	200	0	0	1	-30	30;
];
";

fn two_bus(load: &str, file: &str) -> String {
    let path = scratch(file);
    std::fs::write(&path, TWO_BUS.replace("LOAD", load)).unwrap();
    path.display().to_string()
}

#[test]
fn root_json_and_csv_agree() {
    let case = data("cases/pglib_opf_case3_lmbd.m");
    let known = data("known_solutions.csv");
    let out_json = scratch("case3_root.json");
    let out = acopf(&["root", &case, "--fbar-file", &known, "--format", "csv", "--out", out_json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = Report::from_json(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    assert_eq!(report.case, "pglib_opf_case3_lmbd");
    let row = &report.rows[0].result;
    assert!(row.root_gap <= 0.5);

    let csv = String::from_utf8(out.stdout).unwrap();
    let cols: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(cols[2].parse::<f64>().unwrap(), row.root_gap);
    assert_eq!(cols[4].parse::<f64>().unwrap(), row.root_lower_bound);
    assert_eq!(cols[7], "known_solutions");
}

#[test]
fn unreadable_or_invalid_input_exits_2() {
    assert_eq!(acopf(&["root", "/no/such/case.m", "--fbar", "1"]).status.code(), Some(2));

    let bad = scratch("garbage.m");
    std::fs::write(&bad, "mpc.bus = [ 1 2 ;\n").unwrap();
    assert_eq!(acopf(&["root", bad.to_str().unwrap(), "--fbar", "1"]).status.code(), Some(2));

    // An incumbent cheaper than the relaxation bound cannot be feasible.
    let case = two_bus("50", "toy_low_fbar.m");
    assert_eq!(acopf(&["root", &case, "--fbar", "1"]).status.code(), Some(2));

    assert_eq!(acopf(&["tighten", &case, "--fbar", "5000", "--eps-o", "-1"]).status.code(), Some(2));
}

#[test]
fn infeasible_case_exits_3() {
    let case = two_bus("900", "toy_overloaded.m");
    let out = acopf(&["root", &case, "--fbar", "1e6"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn time_limit_exits_4_with_partial_report() {
    let case = data("cases/nesta_case9_bgm__nco.m");
    let out_json = scratch("case9_timeout.json");
    let _ = std::fs::remove_file(&out_json);
    let out = acopf(&[
        "tighten",
        &case,
        "--fbar",
        "3087.8422285873835",
        "--time-limit",
        "1e-3",
        "--out",
        out_json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let report = Report::from_json(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    let row = &report.rows[0].result;
    assert!(row.root_gap > 10.0);
    assert!(row.final_gap <= row.root_gap);
}

#[test]
fn zero_load_ablation_has_no_gap() {
    let case = two_bus("0", "toy_zero_load.m");
    let out = acopf(&["ablate", &case, "--format", "json", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = Report::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let labels: Vec<String> = report.rows.iter().map(|r| r.relaxation.to_string()).collect();
    assert_eq!(labels, ["rlt-only", "det3", "det3+rlt"]);
    for row in &report.rows {
        assert!((row.upper_bound.value - 100.0).abs() < 1e-4, "{}", row.upper_bound.value);
        assert!(row.result.final_gap.abs() < 1e-4, "{}", row.result.final_gap);
    }
}

#[test]
fn seed_fixes_the_multistart_bound() {
    let case = data("cases/pglib_opf_case3_lmbd.m");
    let run = || {
        let out = acopf(&["root", &case, "--starts", "4", "--seed", "11", "--format", "json"]);
        assert!(out.status.success());
        Report::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap().rows[0].upper_bound.clone()
    };
    assert_eq!(run(), run());
}
