//! Task-to-processor allocation strategies.
//!
//! Every strategy is a combination of an allocation sequence (which task is
//! placed next) and a fitting order per criticality (which processors are
//! tried, in what order). A task is placed on the first processor, in
//! fitting order, where the chosen uniprocessor test accepts the enlarged
//! task set; all `m` processors are tried before giving up.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::amc;
use crate::ecdf;
use crate::edfvd;
use crate::error::Error;
use crate::task::{Criticality, DeadlineModel, Task, TaskSet, Utilizations};

/// Uniprocessor schedulability test used to accept a processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "edfvd")]
    EdfVd,
    #[serde(rename = "amc-rtb")]
    AmcRtb,
    #[serde(rename = "amc-max")]
    AmcMax,
    #[serde(rename = "ecdf")]
    Ecdf,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [TestKind::EdfVd, TestKind::AmcRtb, TestKind::AmcMax, TestKind::Ecdf];

    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::EdfVd => "edfvd",
            TestKind::AmcRtb => "amc-rtb",
            TestKind::AmcMax => "amc-max",
            TestKind::Ecdf => "ecdf",
        }
    }

    pub fn supports(self, model: DeadlineModel) -> bool {
        !(self == TestKind::EdfVd && model == DeadlineModel::Constrained)
    }

    /// Verdict for the tasks of one processor. EDF-VD rejects any task
    /// with `D < T`.
    pub fn accepts(self, tasks: &[Task]) -> bool {
        match self {
            TestKind::EdfVd => edfvd::edfvd_schedulable(tasks).is_ok_and(|v| v.schedulable),
            TestKind::AmcRtb => amc::amc_rtb(tasks, &amc::assign_priorities(tasks)).schedulable,
            TestKind::AmcMax => amc::amc_max(tasks, &amc::assign_priorities(tasks)).schedulable,
            TestKind::Ecdf => ecdf::ecdf_schedulable(tasks).schedulable,
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TestKind::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownName {
                kind: "test",
                name: s.to_string(),
            })
    }
}

/// Partitioning strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "CA-UDP")]
    CaUdp,
    #[serde(rename = "CU-UDP")]
    CuUdp,
    #[serde(rename = "CA-Wu-F")]
    CaWuF,
    #[serde(rename = "CA-F-F")]
    CaFF,
    #[serde(rename = "CA(nosort)-F-F")]
    CaNosortFF,
    #[serde(rename = "ECA-Wu-F")]
    EcaWuF,
}

/// Order in which processors are offered to an HC task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcFit {
    /// Increasing `U_HH - U_HL`.
    UtilDifference,
    /// Increasing `U_HH`.
    HiUtilization,
    /// Increasing index.
    FirstFit,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::CaUdp,
        Strategy::CuUdp,
        Strategy::CaWuF,
        Strategy::CaFF,
        Strategy::CaNosortFF,
        Strategy::EcaWuF,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::CaUdp => "CA-UDP",
            Strategy::CuUdp => "CU-UDP",
            Strategy::CaWuF => "CA-Wu-F",
            Strategy::CaFF => "CA-F-F",
            Strategy::CaNosortFF => "CA(nosort)-F-F",
            Strategy::EcaWuF => "ECA-Wu-F",
        }
    }

    pub fn hc_fit(self) -> HcFit {
        match self {
            Strategy::CaUdp | Strategy::CuUdp => HcFit::UtilDifference,
            Strategy::CaWuF | Strategy::EcaWuF => HcFit::HiUtilization,
            Strategy::CaFF | Strategy::CaNosortFF => HcFit::FirstFit,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownName {
                kind: "strategy",
                name: s.to_string(),
            })
    }
}

/// Default `u_L` above which ECA-Wu-F treats an LC task as heavy.
pub const DEFAULT_HEAVY_LC_THRESHOLD: f64 = 0.5;

/// Tasks in decreasing `key`, ties by smaller id.
fn sorted_desc<'a>(tasks: impl Iterator<Item = &'a Task>, key: fn(&Task) -> f64) -> Vec<Task> {
    let mut v: Vec<Task> = tasks.copied().collect();
    v.sort_by(|a, b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(Ordering::Equal)
            .then(a.id().cmp(&b.id()))
    });
    v
}

/// Allocation sequence of `strategy` over `tasks`.
pub fn order_tasks(strategy: Strategy, tasks: &[Task], heavy_lc_threshold: f64) -> Vec<Task> {
    let hi = || tasks.iter().filter(|t| t.is_hi());
    let lo = || tasks.iter().filter(|t| !t.is_hi());
    match strategy {
        Strategy::CaNosortFF => hi().chain(lo()).copied().collect(),
        Strategy::CaUdp | Strategy::CaWuF | Strategy::CaFF => {
            let mut order = sorted_desc(hi(), Task::u_hi);
            order.extend(sorted_desc(lo(), Task::u_lo));
            order
        }
        Strategy::CuUdp => sorted_desc(tasks.iter(), Task::u_own),
        Strategy::EcaWuF => {
            let (heavy, light): (Vec<Task>, Vec<Task>) =
                lo().partition(|t| t.u_lo() > heavy_lc_threshold);
            let mut order = sorted_desc(heavy.iter(), Task::u_lo);
            order.extend(sorted_desc(hi(), Task::u_hi));
            order.extend(sorted_desc(light.iter(), Task::u_lo));
            order
        }
    }
}

/// Tasks assigned to one processor, with running utilization sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessorBin {
    index: usize,
    tasks: Vec<Task>,
    utilizations: Utilizations,
}

impl ProcessorBin {
    pub fn new(index: usize) -> Self {
        ProcessorBin {
            index,
            tasks: Vec::new(),
            utilizations: Utilizations::default(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task_ids(&self) -> Vec<usize> {
        self.tasks.iter().map(Task::id).collect()
    }

    /// Cached sums; always equal to recomputing over [`ProcessorBin::tasks`].
    pub fn utilizations(&self) -> Utilizations {
        self.utilizations
    }

    pub fn util_difference(&self) -> f64 {
        self.utilizations.difference()
    }

    pub fn push(&mut self, task: Task) {
        self.utilizations = self.utilizations.with(&task);
        self.tasks.push(task);
    }

    /// Members plus `task`, as offered to a schedulability test.
    pub fn with_candidate(&self, task: &Task) -> Vec<Task> {
        let mut v = Vec::with_capacity(self.tasks.len() + 1);
        v.extend_from_slice(&self.tasks);
        v.push(*task);
        v
    }
}

/// Processor indices in the order `strategy` tries them for `task`.
pub fn candidate_processors(strategy: Strategy, task: &Task, bins: &[ProcessorBin]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bins.len()).collect();
    if !task.is_hi() {
        return order;
    }
    let key: fn(&ProcessorBin) -> f64 = match strategy.hc_fit() {
        HcFit::FirstFit => return order,
        HcFit::UtilDifference => ProcessorBin::util_difference,
        HcFit::HiUtilization => |b| b.utilizations().hc_hi,
    };
    order.sort_by(|&a, &b| {
        key(&bins[a])
            .partial_cmp(&key(&bins[b]))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Success,
    /// The first task no processor accepted; `phase` is its criticality.
    Failure { task: usize, phase: Criticality },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub bins: Vec<ProcessorBin>,
    pub outcome: Outcome,
}

impl Partition {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// One schedulability query issued while partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Trial {
    pub task: usize,
    pub bin: usize,
    pub accepted: bool,
}

/// A strategy bound to a test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partitioner {
    pub strategy: Strategy,
    pub test: TestKind,
    pub heavy_lc_threshold: f64,
}

impl Partitioner {
    pub fn new(strategy: Strategy, test: TestKind) -> Self {
        Partitioner {
            strategy,
            test,
            heavy_lc_threshold: DEFAULT_HEAVY_LC_THRESHOLD,
        }
    }

    pub fn run(&self, taskset: &TaskSet, m: usize) -> Result<Partition, Error> {
        self.run_with(taskset, m, |tasks| self.test.accepts(tasks), None)
    }

    /// Same as [`Partitioner::run`], also returning every schedulability
    /// query in the order it was issued.
    pub fn run_traced(&self, taskset: &TaskSet, m: usize) -> Result<(Partition, Vec<Trial>), Error> {
        let mut trials = Vec::new();
        let p = self.run_with(taskset, m, |tasks| self.test.accepts(tasks), Some(&mut trials))?;
        Ok((p, trials))
    }

    /// Partitioning driven by an arbitrary acceptance predicate.
    pub fn run_with(
        &self,
        taskset: &TaskSet,
        m: usize,
        accepts: impl Fn(&[Task]) -> bool,
        mut trace: Option<&mut Vec<Trial>>,
    ) -> Result<Partition, Error> {
        if m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if !self.test.supports(taskset.deadline_model()) {
            return Err(Error::UnsupportedDeadlineModel {
                test: self.test.as_str(),
                model: taskset.deadline_model(),
            });
        }
        let mut bins: Vec<ProcessorBin> = (0..m).map(ProcessorBin::new).collect();
        for task in order_tasks(self.strategy, taskset.tasks(), self.heavy_lc_threshold) {
            let mut placed = false;
            for k in candidate_processors(self.strategy, &task, &bins) {
                let ok = accepts(&bins[k].with_candidate(&task));
                if let Some(trace) = trace.as_deref_mut() {
                    trace.push(Trial {
                        task: task.id(),
                        bin: k,
                        accepted: ok,
                    });
                }
                if ok {
                    bins[k].push(task);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Ok(Partition {
                    bins,
                    outcome: Outcome::Failure {
                        task: task.id(),
                        phase: task.criticality(),
                    },
                });
            }
        }
        Ok(Partition {
            bins,
            outcome: Outcome::Success,
        })
    }
}

/// Partitions `taskset` onto `m` processors.
pub fn partition(taskset: &TaskSet, m: usize, strategy: Strategy, test: TestKind) -> Result<Partition, Error> {
    Partitioner::new(strategy, test).run(taskset, m)
}
