//! Acceptance-ratio sweeps over the utilization grid.
//!
//! For every `(m, P_H, grid point)` a fixed number of task sets is drawn
//! from an RNG seeded from the master seed and the point's coordinates, and
//! every `(strategy, test)` cell partitions the very same sets. Counts are
//! pooled per `U_B` value, since several grid points share one.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::generator::{generate_taskset, GeneratorConfig};
use crate::partition::{Partitioner, Strategy, TestKind};
use crate::simulator::splitmix64;
use crate::task::{DeadlineModel, TaskSet, Utilizations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: Strategy,
    pub test: TestKind,
}

impl Cell {
    pub fn new(strategy: Strategy, test: TestKind) -> Self {
        Cell { strategy, test }
    }
}

fn hundredths(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

/// The sweep: `U_HH` in {0.1, ..., 0.9, 0.99}, `U_HL` in {0.05, 0.15, ...}
/// up to `U_HH`, and `U_LL` in {0.05, 0.15, ...} up to `0.99 - U_HL`.
pub fn utilization_grid() -> Vec<Utilizations> {
    let mut grid = Vec::new();
    for hh in (10..=90).step_by(10).chain([99]) {
        for hl in (5..=hh).step_by(10) {
            for ll in (5..=99 - hl).step_by(10) {
                grid.push(Utilizations::new(ll as f64 / 100.0, hl as f64 / 100.0, hh as f64 / 100.0));
            }
        }
    }
    grid
}

fn default_grid() -> Vec<Utilizations> {
    utilization_grid()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m: Vec<usize>,
    pub p_h: Vec<f64>,
    /// Normalized `(U_LL, U_HL, U_HH)` targets.
    #[serde(default = "default_grid")]
    pub grid: Vec<Utilizations>,
    pub sets_per_point: usize,
    pub cells: Vec<Cell>,
    pub deadline_model: DeadlineModel,
    pub seed: u64,
    /// Where the CLI writes results when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Every strategy with `tests` over the full grid.
    pub fn new(m: Vec<usize>, p_h: Vec<f64>, tests: &[TestKind], deadline_model: DeadlineModel, sets_per_point: usize, seed: u64) -> Self {
        let cells = tests
            .iter()
            .flat_map(|&t| Strategy::ALL.into_iter().map(move |s| Cell::new(s, t)))
            .collect();
        ExperimentConfig {
            m,
            p_h,
            grid: utilization_grid(),
            sets_per_point,
            cells,
            deadline_model,
            seed,
            output: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self, Error> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m.contains(&0) {
            return bad("m must be at least 1".into());
        }
        if let Some(p) = self.p_h.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("P_H {p} outside [0, 1]"));
        }
        for u in &self.grid {
            let (ll, hl, hh) = (hundredths(u.lc_lo), hundredths(u.hc_lo), hundredths(u.hc_hi));
            if ll < 0 || hl < 0 || hl > hh || ll > 99 - hl {
                return bad(format!(
                    "grid point (U_LL={}, U_HL={}, U_HH={}) needs U_HL <= U_HH and U_LL <= 0.99 - U_HL",
                    u.lc_lo, u.hc_lo, u.hc_hi
                ));
            }
        }
        if let Some(c) = self.cells.iter().find(|c| !c.test.supports(self.deadline_model)) {
            return bad(format!("{} does not support {} deadlines", c.test, self.deadline_model));
        }
        Ok(())
    }
}

/// Seed of the RNG stream of one grid point.
pub fn point_seed(master: u64, m: usize, p_h: f64, targets: &Utilizations) -> u64 {
    [
        m as u64,
        p_h.to_bits(),
        hundredths(targets.hc_hi) as u64,
        hundredths(targets.hc_lo) as u64,
        hundredths(targets.lc_lo) as u64,
    ]
    .into_iter()
    .fold(splitmix64(master), |h, x| splitmix64(h ^ x))
}

/// Stable digest of a task set.
pub fn taskset_digest(set: &TaskSet) -> u64 {
    let mut h = DefaultHasher::new();
    set.m().hash(&mut h);
    set.deadline_model().hash(&mut h);
    set.tasks().hash(&mut h);
    h.finish()
}

/// Everything that happened at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub m: usize,
    pub p_h: f64,
    pub targets: Utilizations,
    pub generated: usize,
    pub failed: usize,
    /// `accepted[c][i]`: whether cell `c` partitioned set `i`.
    pub accepted: Vec<Vec<bool>>,
    /// One digest per generated set, in generation order.
    pub digests: Vec<u64>,
}

impl PointResult {
    pub fn u_b(&self) -> f64 {
        self.targets.bound()
    }
}

/// Generates the sets of one grid point and runs every cell on them.
pub fn run_point(cfg: &ExperimentConfig, m: usize, p_h: f64, targets: Utilizations) -> Result<PointResult, Error> {
    let gen = GeneratorConfig::new(m, p_h, targets, cfg.deadline_model);
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed(cfg.seed, m, p_h, &targets));
    let partitioners: Vec<Partitioner> = cfg.cells.iter().map(|c| Partitioner::new(c.strategy, c.test)).collect();
    let mut out = PointResult {
        m,
        p_h,
        targets,
        generated: 0,
        failed: 0,
        accepted: vec![Vec::new(); cfg.cells.len()],
        digests: Vec::new(),
    };
    for _ in 0..cfg.sets_per_point {
        let set = match generate_taskset(&gen, &mut rng) {
            Ok(set) => set,
            Err(Error::GenerationFailed { .. }) => {
                out.failed += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        out.generated += 1;
        out.digests.push(taskset_digest(&set));
        for (acc, p) in out.accepted.iter_mut().zip(&partitioners) {
            acc.push(p.run(&set, m)?.is_success());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub strategy: Strategy,
    pub test: TestKind,
    pub m: usize,
    pub deadline_model: DeadlineModel,
    pub p_h: f64,
    pub u_b: f64,
    pub n_total: usize,
    pub n_accepted: usize,
    pub acceptance_ratio: f64,
}

/// Grid points whose sets could not all be generated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationFailure {
    pub m: usize,
    pub p_h: f64,
    pub targets: Utilizations,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResults {
    pub records: Vec<ExperimentRecord>,
    pub failures: Vec<GenerationFailure>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults, Error> {
    run_experiment_with(cfg, |_| {})
}

/// [`run_experiment`] calling `on_point` after every grid point.
pub fn run_experiment_with(cfg: &ExperimentConfig, mut on_point: impl FnMut(&PointResult)) -> Result<ExperimentResults, Error> {
    cfg.validate()?;
    // (m index, P_H index, U_B hundredths) -> (total, accepted per cell)
    let mut buckets: BTreeMap<(usize, usize, i64), (usize, Vec<usize>)> = BTreeMap::new();
    let mut failures = Vec::new();
    for (mi, &m) in cfg.m.iter().enumerate() {
        for (pi, &p_h) in cfg.p_h.iter().enumerate() {
            for &targets in &cfg.grid {
                let point = run_point(cfg, m, p_h, targets)?;
                on_point(&point);
                if point.failed > 0 {
                    failures.push(GenerationFailure {
                        m,
                        p_h,
                        targets,
                        failed: point.failed,
                    });
                }
                if point.generated == 0 {
                    continue;
                }
                let entry = buckets
                    .entry((mi, pi, hundredths(point.u_b())))
                    .or_insert_with(|| (0, vec![0; cfg.cells.len()]));
                entry.0 += point.generated;
                for (n, acc) in entry.1.iter_mut().zip(&point.accepted) {
                    *n += acc.iter().filter(|&&a| a).count();
                }
            }
        }
    }

    let mut records = Vec::new();
    for (mi, &m) in cfg.m.iter().enumerate() {
        for (pi, &p_h) in cfg.p_h.iter().enumerate() {
            for (ci, cell) in cfg.cells.iter().enumerate() {
                for (&(_, _, ub), (total, accepted)) in buckets.range((mi, pi, i64::MIN)..=(mi, pi, i64::MAX)) {
                    records.push(ExperimentRecord {
                        strategy: cell.strategy,
                        test: cell.test,
                        m,
                        deadline_model: cfg.deadline_model,
                        p_h,
                        u_b: ub as f64 / 100.0,
                        n_total: *total,
                        n_accepted: accepted[ci],
                        acceptance_ratio: accepted[ci] as f64 / *total as f64,
                    });
                }
            }
        }
    }
    Ok(ExperimentResults { records, failures })
}

/// `sum(AR * U_B) / sum(U_B)` over the records of one cell.
pub fn weighted_acceptance_ratio(records: &[ExperimentRecord]) -> Result<f64, Error> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let (num, den) = records
        .iter()
        .fold((0.0, 0.0), |(n, d), r| (n + r.acceptance_ratio * r.u_b, d + r.u_b));
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarRecord {
    pub strategy: Strategy,
    pub test: TestKind,
    pub m: usize,
    pub deadline_model: DeadlineModel,
    pub p_h: f64,
    pub war: f64,
}

/// One WAR row per `(strategy, test, m, deadline model, P_H)`, in order of
/// first appearance.
pub fn war_table(records: &[ExperimentRecord]) -> Vec<WarRecord> {
    let mut groups: Vec<(WarRecord, Vec<ExperimentRecord>)> = Vec::new();
    for r in records {
        let same = |w: &WarRecord| {
            w.strategy == r.strategy && w.test == r.test && w.m == r.m && w.deadline_model == r.deadline_model && w.p_h == r.p_h
        };
        match groups.iter_mut().find(|(w, _)| same(w)) {
            Some((_, rs)) => rs.push(r.clone()),
            None => groups.push((
                WarRecord {
                    strategy: r.strategy,
                    test: r.test,
                    m: r.m,
                    deadline_model: r.deadline_model,
                    p_h: r.p_h,
                    war: 0.0,
                },
                vec![r.clone()],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(mut w, rs)| {
            w.war = weighted_acceptance_ratio(&rs).expect("groups are non-empty");
            w
        })
        .collect()
}

pub fn write_results_csv<W: Write>(w: W, records: &[ExperimentRecord]) -> Result<(), Error> {
    write_csv(w, records, "strategy,test,m,deadline_model,p_h,u_b,n_total,n_accepted,acceptance_ratio")
}

pub fn write_war_csv<W: Write>(w: W, rows: &[WarRecord]) -> Result<(), Error> {
    write_csv(w, rows, "strategy,test,m,deadline_model,p_h,war")
}

fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T], header: &str) -> Result<(), Error> {
    // header written by hand so that an empty table still has one
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header.split(','))?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(r: R) -> Result<Vec<ExperimentRecord>, Error> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
