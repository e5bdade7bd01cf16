//! Bound tightening driven by a determinant relaxation: each open variable
//! is minimized and maximized over the relaxation with a cost cutoff, in
//! batches, until the gap closes or every domain settles.

mod ledger;
mod upper;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::TightenError;
use crate::ipm::{solve, IpmOptions, SolveResult, SolveStatus};
use crate::netmodel::Network;
use crate::relax::{build_obbt_sub, build_relaxation, ModelSpec, ObjSense, Relaxation};

pub use ledger::{BoundLedger, Closure, LedgerEntry, Snapshot};
pub use upper::{known_solution, resolve_upper_bound, UpperBound, UpperBoundSource};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BtConfig {
    /// Stop once the gap, in percent, falls below this.
    pub eps_o: f64,
    /// Domain tolerance of the closure conditions.
    pub eps_d: f64,
    /// Maximum number of major iterations.
    pub max_iter: usize,
    /// Worker threads.
    pub threads: usize,
    /// Variables per batch. Bounds change only between batches, so results
    /// do not depend on `threads`.
    pub batch: usize,
    /// Wall-clock budget in seconds.
    pub time_limit: Option<f64>,
    /// Relative amount each new bound is relaxed by to absorb solver slack.
    pub margin: f64,
    pub ipm: IpmOptions,
    /// Written after every major iteration when set.
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
}

impl Default for BtConfig {
    fn default() -> Self {
        BtConfig {
            eps_o: 1.0,
            eps_d: 1e-3,
            max_iter: 15,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            batch: 12,
            time_limit: Some(1800.0),
            margin: 1e-6,
            ipm: IpmOptions::default(),
            checkpoint: None,
        }
    }
}

impl BtConfig {
    pub fn validate(&self) -> Result<(), TightenError> {
        let bad = |what: &str| Err(TightenError::Config(what.to_string()));
        if !(self.eps_o > 0.0) {
            return bad("eps_o must be positive");
        }
        if !(self.eps_d > 0.0) {
            return bad("eps_d must be positive");
        }
        if self.max_iter < 1 {
            return bad("at least one major iteration is required");
        }
        if self.threads < 1 || self.batch < 1 {
            return bad("threads and batch size must be at least 1");
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// The gap is below `eps_o`.
    GapClosed,
    /// Every domain satisfied a closure condition.
    DomainsClosed,
    IterationLimit,
    TimeLimit,
    /// Only the root relaxation was solved.
    RootOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lower_bound: f64,
    pub gap: f64,
    pub open: usize,
    pub subproblems: usize,
    pub failures: usize,
    /// Seconds since the run started.
    pub elapsed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Percent.
    pub root_gap: f64,
    /// Percent.
    pub final_gap: f64,
    pub root_lower_bound: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub iterations: usize,
    pub subproblems_solved: usize,
    pub subproblem_failures: usize,
    pub wall_time: f64,
    pub status: RunStatus,
    pub trace: Vec<IterationRecord>,
}

/// `100·(f̄ − f̲)/f̄`.
pub fn gap_percent(upper: f64, lower: f64) -> f64 {
    100.0 * (upper - lower) / upper
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: GapReport,
    pub ledger: BoundLedger,
    /// Relaxation optimum at the final bounds.
    pub point: Vec<f64>,
}

/// Everything needed to continue an interrupted run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub case: String,
    pub relaxation: Relaxation,
    pub upper_bound: UpperBound,
    pub config: BtConfig,
    pub report: GapReport,
    pub ledger: BoundLedger,
    pub point: Vec<f64>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self, TightenError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TightenError::Checkpoint(e.to_string()))?;
        let cp: Checkpoint =
            serde_json::from_str(&text).map_err(|e| TightenError::Checkpoint(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(TightenError::Checkpoint(format!(
                "unsupported version {}",
                cp.version
            )));
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<(), TightenError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| TightenError::Checkpoint(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| TightenError::Checkpoint(e.to_string()))
    }
}

struct Driver<'a> {
    net: &'a Network,
    relaxation: Relaxation,
    upper: UpperBound,
    cfg: &'a BtConfig,
    base: ModelSpec<f64>,
    ledger: BoundLedger,
    report: GapReport,
    point: Vec<f64>,
    start: Instant,
    /// Time already spent before a resume.
    offset: f64,
}

/// Solves the root relaxation, then tightens bounds until the gap drops
/// below `eps_o`, all domains close, `max_iter` major iterations pass or
/// time runs out.
pub fn run(
    net: &Network,
    relaxation: Relaxation,
    upper: UpperBound,
    cfg: &BtConfig,
) -> Result<Outcome, TightenError> {
    start(net, relaxation, upper, cfg)?.iterate()
}

/// Solves the root relaxation only.
pub fn root(
    net: &Network,
    relaxation: Relaxation,
    upper: UpperBound,
    cfg: &BtConfig,
) -> Result<Outcome, TightenError> {
    let mut d = start(net, relaxation, upper, cfg)?;
    d.report.status = RunStatus::RootOnly;
    d.report.wall_time = d.elapsed();
    Ok(d.outcome())
}

fn start<'a>(
    net: &'a Network,
    relaxation: Relaxation,
    upper: UpperBound,
    cfg: &'a BtConfig,
) -> Result<Driver<'a>, TightenError> {
    cfg.validate()?;
    if !upper.value.is_finite() {
        return Err(TightenError::NoUpperBound);
    }
    let start = Instant::now();
    let base: ModelSpec<f64> = build_relaxation(net, relaxation)?;
    let root = solve(&base, &cfg.ipm, None);
    if !root.is_optimal() {
        return Err(TightenError::RootRelaxation(format!("{:?}", root.status)));
    }
    // A cost below a valid lower bound means the incumbent is not feasible.
    if upper.value < root.objective - 1e-6 * root.objective.abs().max(1.0) {
        return Err(TightenError::UpperBound(format!(
            "{} is below the relaxation bound {}",
            upper.value, root.objective
        )));
    }
    let gap = gap_percent(upper.value, root.objective);
    let mut ledger = BoundLedger::new(&base);
    ledger.record(0, root.objective, gap);
    let report = GapReport {
        root_gap: gap,
        final_gap: gap,
        root_lower_bound: root.objective,
        lower_bound: root.objective,
        upper_bound: upper.value,
        iterations: 0,
        subproblems_solved: 0,
        subproblem_failures: 0,
        wall_time: 0.0,
        status: RunStatus::GapClosed,
        trace: vec![IterationRecord {
            iteration: 0,
            lower_bound: root.objective,
            gap,
            open: ledger.entries.len(),
            subproblems: 0,
            failures: 0,
            elapsed: start.elapsed().as_secs_f64(),
        }],
    };
    Ok(Driver {
        net,
        relaxation,
        upper,
        cfg,
        base,
        ledger,
        report,
        point: root.primal,
        start,
        offset: 0.0,
    })
}

/// Continues a run from `cp`. The tolerances and limits of `cfg` apply;
/// the wall-clock budget counts time spent before the checkpoint.
pub fn resume(net: &Network, cp: Checkpoint, cfg: &BtConfig) -> Result<Outcome, TightenError> {
    cfg.validate()?;
    if cp.case != net.name {
        return Err(TightenError::Checkpoint(format!(
            "checkpoint is for `{}`, not `{}`",
            cp.case, net.name
        )));
    }
    let base: ModelSpec<f64> = build_relaxation(net, cp.relaxation)?;
    let names_match = cp
        .ledger
        .entries
        .iter()
        .all(|e| e.var < base.n_vars() && base.name(e.var) == e.name);
    if !names_match || cp.point.len() != base.n_vars() {
        return Err(TightenError::Checkpoint(
            "ledger does not match the model".into(),
        ));
    }
    let mut d = Driver {
        net,
        relaxation: cp.relaxation,
        upper: cp.upper_bound,
        cfg,
        base,
        ledger: cp.ledger,
        offset: cp.report.wall_time,
        report: cp.report,
        point: cp.point,
        start: Instant::now(),
    };
    d.iterate()
}

enum Side {
    Lower,
    Upper,
}

impl Driver<'_> {
    fn elapsed(&self) -> f64 {
        self.offset + self.start.elapsed().as_secs_f64()
    }

    fn out_of_time(&self) -> bool {
        self.cfg.time_limit.is_some_and(|t| self.elapsed() >= t)
    }

    fn iterate(&mut self) -> Result<Outcome, TightenError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads)
            .build()
            .map_err(|e| TightenError::Config(e.to_string()))?;
        let status = loop {
            if self.report.final_gap < self.cfg.eps_o {
                break RunStatus::GapClosed;
            }
            if self.ledger.all_closed() {
                break RunStatus::DomainsClosed;
            }
            if self.report.iterations >= self.cfg.max_iter {
                break RunStatus::IterationLimit;
            }
            if self.out_of_time() {
                break RunStatus::TimeLimit;
            }
            if !self.major_iteration(&pool)? {
                break RunStatus::TimeLimit;
            }
        };
        self.report.status = status;
        self.report.wall_time = self.elapsed();
        self.save()?;
        Ok(self.outcome())
    }

    fn outcome(&self) -> Outcome {
        Outcome {
            report: self.report.clone(),
            ledger: self.ledger.clone(),
            point: self.point.clone(),
        }
    }

    /// One pass over the open variables followed by a relaxation re-solve.
    /// Returns `false` if time ran out midway; bounds found so far are kept.
    fn major_iteration(&mut self, pool: &rayon::ThreadPool) -> Result<bool, TightenError> {
        let k = self.report.iterations + 1;
        let prev = self.ledger.bounds();
        let order = self.ledger.open_by_width();
        let (mut solved, mut failed) = (0, 0);
        let mut finished = true;
        for chunk in order.chunks(self.cfg.batch) {
            if self.out_of_time() {
                finished = false;
                break;
            }
            let model = self.ledger.apply(&self.base);
            let warm: Vec<f64> = (0..model.n_vars())
                .map(|i| self.point[i].clamp(model.lower[i], model.upper[i]))
                .collect();
            let jobs: Vec<(usize, ObjSense)> = chunk
                .iter()
                .flat_map(|&e| [(e, ObjSense::Min), (e, ObjSense::Max)])
                .collect();
            let mut ipm = self.cfg.ipm.clone();
            if let Some(limit) = self.cfg.time_limit {
                let left = (limit - self.elapsed()).max(0.0);
                ipm.max_time = Some(ipm.max_time.map_or(left, |t| t.min(left)));
            }
            let f_bar = self.upper.value;
            let entries = &self.ledger.entries;
            let results: Vec<Option<SolveResult>> = pool.install(|| {
                jobs.par_iter()
                    .map(|&(e, sense)| {
                        let sub = build_obbt_sub(&model, entries[e].var, sense, f_bar);
                        catch_unwind(AssertUnwindSafe(|| solve(&sub, &ipm, Some(&warm)))).ok()
                    })
                    .collect()
            });
            for (pair, &e) in results.chunks(2).zip(chunk) {
                let mut ok = true;
                for (res, side) in pair.iter().zip([Side::Lower, Side::Upper]) {
                    match res {
                        Some(r) if r.status == SolveStatus::Optimal => {
                            solved += 1;
                            let v = r.primal[self.ledger.entries[e].var];
                            let slack = self.cfg.margin * v.abs().max(1.0);
                            match side {
                                Side::Lower => self.ledger.raise_lower(e, v - slack),
                                Side::Upper => self.ledger.lower_upper(e, v + slack),
                            }
                        }
                        other => {
                            ok = false;
                            failed += 1;
                            self.ledger.entries[e].failures += 1;
                            log::warn!(
                                "subproblem for {} ended with {:?}",
                                self.ledger.entries[e].name,
                                other.as_ref().map(|r| r.status)
                            );
                        }
                    }
                }
                // A failed side leaves the domain open for the next pass.
                if ok {
                    self.ledger.try_close(e, prev[e], self.cfg.eps_d, k);
                }
            }
        }
        self.report.subproblems_solved += solved;
        self.report.subproblem_failures += failed;
        self.report.iterations = k;

        // Tighter domains give a relaxation at least as strong, so keeping
        // the larger of the two lower bounds is sound.
        let model = self.ledger.apply(&self.base);
        let warm: Vec<f64> = (0..model.n_vars())
            .map(|i| self.point[i].clamp(model.lower[i], model.upper[i]))
            .collect();
        let relaxed = solve(&model, &self.cfg.ipm, Some(&warm));
        if relaxed.is_optimal() {
            self.point = relaxed.primal;
            self.report.lower_bound = self.report.lower_bound.max(relaxed.objective);
        } else {
            log::warn!(
                "relaxation re-solve ended with {:?}; lower bound kept",
                relaxed.status
            );
        }
        self.report.final_gap = gap_percent(self.upper.value, self.report.lower_bound);
        self.ledger
            .record(k, self.report.lower_bound, self.report.final_gap);
        self.report.trace.push(IterationRecord {
            iteration: k,
            lower_bound: self.report.lower_bound,
            gap: self.report.final_gap,
            open: self
                .ledger
                .entries
                .iter()
                .filter(|e| e.closed.is_none())
                .count(),
            subproblems: solved,
            failures: failed,
            elapsed: self.elapsed(),
        });
        self.report.wall_time = self.elapsed();
        log::info!(
            "{} {}: iteration {k} lower bound {:.4} gap {:.3}%",
            self.net.name,
            self.relaxation,
            self.report.lower_bound,
            self.report.final_gap
        );
        self.save()?;
        Ok(finished)
    }

    fn save(&self) -> Result<(), TightenError> {
        let Some(path) = &self.cfg.checkpoint else {
            return Ok(());
        };
        Checkpoint {
            version: CHECKPOINT_VERSION,
            case: self.net.name.clone(),
            relaxation: self.relaxation,
            upper_bound: self.upper.clone(),
            config: self.cfg.clone(),
            report: self.report.clone(),
            ledger: self.ledger.clone(),
            point: self.point.clone(),
        }
        .save(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::tests::two_bus;

    fn given(v: f64) -> UpperBound {
        UpperBound {
            value: v,
            source: UpperBoundSource::Given,
        }
    }

    fn case3() -> Network {
        crate::parse_case(include_str!("../../data/cases/pglib_opf_case3_lmbd.m")).unwrap()
    }

    fn cfg(threads: usize) -> BtConfig {
        BtConfig {
            threads,
            batch: 3,
            time_limit: None,
            ..BtConfig::default()
        }
    }

    #[test]
    fn closed_root_does_no_work() {
        let net = two_bus();
        let root: ModelSpec<f64> = build_relaxation(&net, Relaxation::Det3Rlt).unwrap();
        let f = solve(&root, &IpmOptions::default(), None).objective;
        let out = run(&net, Relaxation::Det3Rlt, given(f * 1.001), &cfg(1)).unwrap();
        assert_eq!(out.report.iterations, 0);
        assert_eq!(out.report.status, RunStatus::GapClosed);
        assert_eq!(out.ledger.history.len(), 1);
        assert!(out.ledger.entries.iter().all(|e| e.closed.is_none()));
    }

    #[test]
    fn root_only_and_incumbent_below_bound() {
        let net = two_bus();
        let out = root(&net, Relaxation::Det3, given(1e6), &cfg(1)).unwrap();
        assert_eq!(out.report.status, RunStatus::RootOnly);
        assert_eq!(out.report.trace.len(), 1);
        let f = out.report.root_lower_bound;
        assert!(matches!(
            root(&net, Relaxation::Det3, given(f - 1.0), &cfg(1)),
            Err(TightenError::UpperBound(_))
        ));
    }

    #[test]
    fn tightening_is_monotone_and_auditable() {
        let net = case3();
        let mut c = cfg(2);
        c.eps_o = 1e-6;
        c.max_iter = 2;
        let f = crate::ipm::local_upper_bound(&net, 4, 3).objective;
        let out = run(&net, Relaxation::RltOnly, given(f), &c).unwrap();
        assert!(out.report.iterations >= 1);
        out.ledger.audit(c.eps_d).unwrap();
        assert!(out.report.final_gap <= out.report.root_gap + 1e-9);
        assert!(out.report.lower_bound <= f + 1e-6);
    }

    #[test]
    fn invalid_configuration_is_rejected() {
        let net = two_bus();
        let bad = BtConfig {
            eps_d: 0.0,
            ..BtConfig::default()
        };
        assert!(matches!(
            run(&net, Relaxation::Det3, given(1.0), &bad),
            Err(TightenError::Config(_))
        ));
        assert!(matches!(
            run(&net, Relaxation::Det3, given(f64::INFINITY), &cfg(1)),
            Err(TightenError::NoUpperBound)
        ));
    }

    #[test]
    fn checkpoint_round_trip_and_resume() {
        let net = case3();
        let dir = std::env::temp_dir().join(format!("sdpbt-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ckpt.json");
        let mut c = cfg(1);
        c.eps_o = 1e-9;
        c.max_iter = 1;
        c.checkpoint = Some(path.clone());
        let f = crate::ipm::local_upper_bound(&net, 4, 3).objective;
        let first = run(&net, Relaxation::RltOnly, given(f), &c).unwrap();
        assert_eq!(first.report.iterations, 1);
        let cp = Checkpoint::load(&path).unwrap();
        assert_eq!(cp.ledger, first.ledger);
        c.max_iter = 2;
        c.checkpoint = None;
        let resumed = resume(&net, cp, &c).unwrap();
        assert!(resumed.report.iterations <= 2);
        assert!(resumed.report.lower_bound >= first.report.lower_bound);
        assert_eq!(resumed.ledger.history[..2], first.ledger.history[..]);
        let other = net.without_branch(1, 3, "other");
        assert!(resume(&other, Checkpoint::load(&path).unwrap(), &c).is_err());
        std::fs::remove_dir_all(dir).ok();
    }
}
