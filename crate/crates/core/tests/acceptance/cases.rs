use std::path::PathBuf;
use std::sync::OnceLock;

use acopf_core::sdpbt::{resolve_upper_bound, run, BtConfig, Outcome, UpperBound};
use acopf_core::{parse_case, Network, Relaxation};

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

pub fn case(name: &str) -> Network {
    let path = data(&format!("cases/{name}.m"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_case(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Upper bound from a 20-start local solve.
pub fn multistart(net: &Network) -> UpperBound {
    resolve_upper_bound(net, None, None, 20, 1).expect("a local solve succeeds")
}

/// The laptop budget of the case9 criteria.
pub fn config() -> BtConfig {
    BtConfig {
        time_limit: Some(600.0),
        ..BtConfig::default()
    }
}

pub struct Case9 {
    pub net: Network,
    pub upper: UpperBound,
    pub full: Outcome,
}

/// case9 with det3+rlt, shared by the first two criteria.
pub fn case9() -> &'static Case9 {
    static CELL: OnceLock<Case9> = OnceLock::new();
    CELL.get_or_init(|| {
        let net = case("nesta_case9_bgm__nco");
        let upper = multistart(&net);
        let full = run(&net, Relaxation::Det3Rlt, upper.clone(), &config()).expect("tightening runs");
        Case9 { net, upper, full }
    })
}

pub fn summary(o: &Outcome) -> String {
    let r = &o.report;
    format!(
        "root {:.3}% -> final {:.3}% in {} iterations ({:?}, {:.1}s)",
        r.root_gap, r.final_gap, r.iterations, r.status, r.wall_time
    )
}
