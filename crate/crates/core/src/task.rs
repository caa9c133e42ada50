//! The dual-criticality sporadic task model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Integral time units. Execution budgets, periods and deadlines are all
/// expressed in this type; only utilizations are real-valued.
pub type Time = u64;

/// Criticality level of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criticality {
    #[serde(rename = "LC")]
    Lo,
    #[serde(rename = "HC")]
    Hi,
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criticality::Lo => "LC",
            Criticality::Hi => "HC",
        })
    }
}

/// Relation between deadlines and periods for a whole task set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadlineModel {
    Implicit,
    Constrained,
}

impl DeadlineModel {
    pub fn as_str(self) -> &'static str {
        match self {
            DeadlineModel::Implicit => "implicit",
            DeadlineModel::Constrained => "constrained",
        }
    }
}

impl fmt::Display for DeadlineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeadlineModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "implicit" => Ok(DeadlineModel::Implicit),
            "constrained" => Ok(DeadlineModel::Constrained),
            other => Err(Error::UnknownName {
                kind: "deadline model",
                name: other.to_string(),
            }),
        }
    }
}

/// A sporadic dual-criticality task.
///
/// Invariants enforced by [`Task::new`]:
/// `wcet_lo <= wcet_hi <= deadline <= period`, and an LC task carries a
/// single budget (`wcet_hi == wcet_lo`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TaskRecord", into = "TaskRecord")]
pub struct Task {
    id: usize,
    period: Time,
    criticality: Criticality,
    wcet_lo: Time,
    wcet_hi: Time,
    deadline: Time,
}

impl Task {
    pub fn new(
        id: usize,
        period: Time,
        criticality: Criticality,
        wcet_lo: Time,
        wcet_hi: Time,
        deadline: Time,
    ) -> Result<Task, Error> {
        let invalid = |reason: &str| {
            Err(Error::InvalidTask {
                id,
                reason: reason.to_string(),
            })
        };
        if period == 0 || wcet_lo == 0 || wcet_hi == 0 || deadline == 0 {
            return invalid("all parameters must be positive");
        }
        if wcet_lo > wcet_hi {
            return invalid("C_L exceeds C_H");
        }
        if criticality == Criticality::Lo && wcet_lo != wcet_hi {
            return invalid("an LC task must have C_L == C_H");
        }
        if wcet_hi > deadline {
            return invalid("C_H exceeds D");
        }
        if deadline > period {
            return invalid("D exceeds T");
        }
        Ok(Task {
            id,
            period,
            criticality,
            wcet_lo,
            wcet_hi,
            deadline,
        })
    }

    /// Shorthand for an implicit-deadline HC task.
    pub fn hi(id: usize, period: Time, wcet_lo: Time, wcet_hi: Time) -> Result<Task, Error> {
        Task::new(id, period, Criticality::Hi, wcet_lo, wcet_hi, period)
    }

    /// Shorthand for an implicit-deadline LC task.
    pub fn lo(id: usize, period: Time, wcet: Time) -> Result<Task, Error> {
        Task::new(id, period, Criticality::Lo, wcet, wcet, period)
    }

    /// Same task with a different id.
    pub fn with_id(self, id: usize) -> Task {
        Task { id, ..self }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn period(&self) -> Time {
        self.period
    }

    pub fn criticality(&self) -> Criticality {
        self.criticality
    }

    pub fn is_hi(&self) -> bool {
        self.criticality == Criticality::Hi
    }

    pub fn wcet_lo(&self) -> Time {
        self.wcet_lo
    }

    pub fn wcet_hi(&self) -> Time {
        self.wcet_hi
    }

    pub fn deadline(&self) -> Time {
        self.deadline
    }

    pub fn is_implicit(&self) -> bool {
        self.deadline == self.period
    }

    /// `C_L / T`
    pub fn u_lo(&self) -> f64 {
        self.wcet_lo as f64 / self.period as f64
    }

    /// `C_H / T`; equals [`Task::u_lo`] for LC tasks.
    pub fn u_hi(&self) -> f64 {
        self.wcet_hi as f64 / self.period as f64
    }

    /// Utilization at the task's own criticality level.
    pub fn u_own(&self) -> f64 {
        match self.criticality {
            Criticality::Lo => self.u_lo(),
            Criticality::Hi => self.u_hi(),
        }
    }

    /// Extra utilization the task demands after a mode switch.
    pub fn u_diff(&self) -> f64 {
        match self.criticality {
            Criticality::Lo => 0.0,
            Criticality::Hi => self.u_hi() - self.u_lo(),
        }
    }
}

/// On-disk shape of a task.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct TaskRecord {
    id: usize,
    #[serde(rename = "T")]
    period: Time,
    chi: Criticality,
    #[serde(rename = "C_L")]
    wcet_lo: Time,
    #[serde(rename = "C_H")]
    wcet_hi: Time,
    #[serde(rename = "D")]
    deadline: Time,
}

impl TryFrom<TaskRecord> for Task {
    type Error = Error;

    fn try_from(r: TaskRecord) -> Result<Self, Self::Error> {
        Task::new(r.id, r.period, r.chi, r.wcet_lo, r.wcet_hi, r.deadline)
    }
}

impl From<Task> for TaskRecord {
    fn from(t: Task) -> Self {
        TaskRecord {
            id: t.id,
            period: t.period,
            chi: t.criticality,
            wcet_lo: t.wcet_lo,
            wcet_hi: t.wcet_hi,
            deadline: t.deadline,
        }
    }
}

/// Aggregate utilizations of a group of tasks: LC tasks at LO level, HC
/// tasks at LO level and HC tasks at HI level.
///
/// Used both un-normalized (per processor) and normalized by `m` (system
/// level, see [`TaskSet::system_utilizations`]).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Utilizations {
    #[serde(rename = "U_LL")]
    pub lc_lo: f64,
    #[serde(rename = "U_HL")]
    pub hc_lo: f64,
    #[serde(rename = "U_HH")]
    pub hc_hi: f64,
}

impl Utilizations {
    pub fn new(lc_lo: f64, hc_lo: f64, hc_hi: f64) -> Self {
        Utilizations {
            lc_lo,
            hc_lo,
            hc_hi,
        }
    }

    /// Sum over `tasks`, accumulated in slice order.
    pub fn of(tasks: &[Task]) -> Self {
        tasks.iter().fold(Utilizations::default(), |acc, t| acc.with(t))
    }

    /// The accumulator after adding `task`.
    pub fn with(mut self, task: &Task) -> Self {
        match task.criticality() {
            Criticality::Lo => self.lc_lo += task.u_lo(),
            Criticality::Hi => {
                self.hc_lo += task.u_lo();
                self.hc_hi += task.u_hi();
            }
        }
        self
    }

    /// `U_HH - U_HL`, the quantity the UDP strategies balance.
    pub fn difference(&self) -> f64 {
        self.hc_hi - self.hc_lo
    }

    /// Total LO-mode utilization, `U_LL + U_HL`.
    pub fn lo_mode(&self) -> f64 {
        self.lc_lo + self.hc_lo
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Utilizations::new(self.lc_lo * factor, self.hc_lo * factor, self.hc_hi * factor)
    }

    /// `max(U_HL + U_LL, U_HH)`
    pub fn bound(&self) -> f64 {
        self.lo_mode().max(self.hc_hi)
    }
}

/// Un-normalized utilizations of the tasks on one processor.
pub fn bin_utilizations(tasks: &[Task]) -> Utilizations {
    Utilizations::of(tasks)
}

/// `U_HH(φ) - U_HL(φ)` for the tasks on one processor.
pub fn util_difference(tasks: &[Task]) -> f64 {
    Utilizations::of(tasks).difference()
}

/// A task system destined for `m` processors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaskSetRecord")]
pub struct TaskSet {
    m: usize,
    deadline_model: DeadlineModel,
    tasks: Vec<Task>,
}

#[derive(Deserialize)]
struct TaskSetRecord {
    m: usize,
    deadline_model: DeadlineModel,
    tasks: Vec<Task>,
}

impl TryFrom<TaskSetRecord> for TaskSet {
    type Error = Error;

    fn try_from(r: TaskSetRecord) -> Result<Self, Self::Error> {
        TaskSet::new(r.m, r.deadline_model, r.tasks)
    }
}

impl TaskSet {
    /// Validates ids (unique, contiguous from 0, in order), `m >= 1` and
    /// that every task honors `deadline_model`.
    pub fn new(m: usize, deadline_model: DeadlineModel, tasks: Vec<Task>) -> Result<TaskSet, Error> {
        if m == 0 {
            return Err(Error::InvalidTaskSet("m must be at least 1".into()));
        }
        for (pos, t) in tasks.iter().enumerate() {
            if t.id() != pos {
                return Err(Error::InvalidTaskSet(format!(
                    "task at position {pos} has id {}; ids must be contiguous from 0",
                    t.id()
                )));
            }
            if deadline_model == DeadlineModel::Implicit && !t.is_implicit() {
                return Err(Error::InvalidTaskSet(format!(
                    "task {} has D != T in an implicit-deadline set",
                    t.id()
                )));
            }
        }
        Ok(TaskSet {
            m,
            deadline_model,
            tasks,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn deadline_model(&self) -> DeadlineModel {
        self.deadline_model
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn hi_tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| t.is_hi())
    }

    pub fn lo_tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| !t.is_hi())
    }

    /// Utilizations normalized by `m`.
    pub fn system_utilizations(&self) -> Utilizations {
        Utilizations::of(&self.tasks).scaled(1.0 / self.m as f64)
    }

    pub fn to_json(&self) -> Result<String, Error> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<TaskSet, Error> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn make_task_derives_utilizations() {
        let t = Task::new(0, 10, Criticality::Hi, 2, 4, 10).unwrap();
        assert!(close(t.u_lo(), 0.2));
        assert!(close(t.u_hi(), 0.4));
    }

    #[test]
    fn constrained_lc_task_is_valid() {
        let t = Task::new(0, 10, Criticality::Lo, 4, 4, 8).unwrap();
        assert!(!t.is_implicit());
        assert_eq!(t.u_diff(), 0.0);
    }

    #[test]
    fn make_task_rejects_invariant_violations() {
        assert!(Task::new(0, 10, Criticality::Hi, 5, 4, 10).is_err());
        assert!(Task::new(0, 10, Criticality::Hi, 2, 4, 11).is_err());
        assert!(Task::new(0, 10, Criticality::Hi, 2, 6, 5).is_err());
        assert!(Task::new(0, 10, Criticality::Lo, 2, 3, 10).is_err());
        assert!(Task::new(0, 0, Criticality::Lo, 1, 1, 1).is_err());
    }

    fn pair(m: usize) -> TaskSet {
        let tasks = vec![Task::hi(0, 10, 2, 4).unwrap(), Task::lo(1, 10, 6).unwrap()];
        TaskSet::new(m, DeadlineModel::Implicit, tasks).unwrap()
    }

    #[test]
    fn system_utilizations_normalize_by_m() {
        let u = pair(2).system_utilizations();
        assert!(close(u.lc_lo, 0.3) && close(u.hc_lo, 0.1) && close(u.hc_hi, 0.2));
        let u = pair(1).system_utilizations();
        assert!(close(u.lc_lo, 0.6) && close(u.hc_lo, 0.2) && close(u.hc_hi, 0.4));
        let empty = TaskSet::new(3, DeadlineModel::Implicit, vec![]).unwrap();
        assert_eq!(empty.system_utilizations(), Utilizations::default());
    }

    #[test]
    fn bin_utilizations_and_difference() {
        assert_eq!(bin_utilizations(&[]), Utilizations::default());
        assert_eq!(util_difference(&[]), 0.0);

        let bin = [Task::hi(0, 10, 3, 6).unwrap(), Task::lo(1, 10, 2).unwrap()];
        let u = bin_utilizations(&bin);
        assert!(close(u.lc_lo, 0.2) && close(u.hc_lo, 0.3) && close(u.hc_hi, 0.6));

        let flat = [Task::hi(0, 10, 5, 5).unwrap()];
        let u = bin_utilizations(&flat);
        assert!(close(u.lc_lo, 0.0) && close(u.hc_lo, 0.5) && close(u.difference(), 0.0));

        let one = [Task::hi(0, 100, 10, 60).unwrap()];
        assert!(close(util_difference(&one), 0.5));
        let two = [Task::hi(0, 100, 10, 60).unwrap(), Task::hi(1, 100, 20, 35).unwrap()];
        assert!(close(util_difference(&two), 0.65));
    }

    #[test]
    fn taskset_rejects_bad_ids_and_models() {
        let t = Task::new(0, 10, Criticality::Lo, 4, 4, 8).unwrap();
        assert!(TaskSet::new(1, DeadlineModel::Implicit, vec![t]).is_err());
        assert!(TaskSet::new(1, DeadlineModel::Constrained, vec![t]).is_ok());
        assert!(TaskSet::new(1, DeadlineModel::Constrained, vec![t.with_id(1)]).is_err());
        assert!(TaskSet::new(0, DeadlineModel::Constrained, vec![]).is_err());
    }

    #[test]
    fn json_uses_documented_field_names() {
        let json = pair(2).to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["m"], 2);
        assert_eq!(v["deadline_model"], "implicit");
        let t0 = &v["tasks"][0];
        for key in ["id", "T", "chi", "C_L", "C_H", "D"] {
            assert!(t0.get(key).is_some(), "missing {key}");
        }
        assert_eq!(t0["chi"], "HC");
        assert_eq!(TaskSet::from_json(&json).unwrap(), pair(2));
    }

    #[test]
    fn json_validation_rejects_bad_task() {
        let bad = r#"{"m":1,"deadline_model":"implicit","tasks":[{"id":0,"T":10,"chi":"HC","C_L":5,"C_H":4,"D":10}]}"#;
        assert!(TaskSet::from_json(bad).is_err());
    }
}
