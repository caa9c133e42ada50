//! Adaptive Mixed-Criticality response-time analysis on one processor.
//!
//! Three analyses share the same priority order: LO-mode RTA, AMC-rtb and
//! AMC-max. All response-time recurrences are iterated from the task's own
//! budget and abandoned as soon as the candidate exceeds the deadline.

use crate::task::{Task, Time};

/// Priority order over a slice of tasks, stored as slice positions
/// (position 0 of the order is the highest priority).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityOrder(Vec<usize>);

impl PriorityOrder {
    /// Wraps an explicit order; `None` unless `order` is a permutation of
    /// `0..n`.
    pub fn from_positions(order: Vec<usize>, n: usize) -> Option<PriorityOrder> {
        let mut seen = vec![false; n];
        if order.len() != n {
            return None;
        }
        for &p in &order {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return None;
            }
        }
        Some(PriorityOrder(order))
    }

    pub fn positions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Deadline-monotonic priorities; ties go to the smaller task id.
pub fn assign_priorities(tasks: &[Task]) -> PriorityOrder {
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&p| (tasks[p].deadline(), tasks[p].id()));
    PriorityOrder(order)
}

/// Outcome of an analysis. Vectors are indexed by slice position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtaResult {
    pub r_lo: Vec<Option<Time>>,
    /// HI-mode response times; always `None` for LC tasks.
    pub r_hi: Vec<Option<Time>>,
    pub schedulable: bool,
    /// Id of the first task (in priority order) whose bound exceeded its
    /// deadline.
    pub failing_task: Option<usize>,
}

/// Least fixed point of the monotone `f`, iterated from `start`. `None` once
/// an iterate exceeds `limit`.
pub fn fixed_point(start: Time, limit: Time, f: impl Fn(Time) -> Time) -> Option<Time> {
    let mut r = start;
    loop {
        if r > limit {
            return None;
        }
        let next = f(r);
        if next == r {
            return Some(r);
        }
        debug_assert!(next > r, "recurrence is not monotone");
        r = next;
    }
}

fn div_ceil(a: Time, b: Time) -> Time {
    a.div_ceil(b)
}

/// LO-mode response times: `R = C_L + sum_{hp} ceil(R / T_j) * C_L_j`.
pub fn rta_lo(tasks: &[Task], order: &PriorityOrder) -> RtaResult {
    let n = tasks.len();
    let mut r_lo = vec![None; n];
    let mut failing_task = None;
    for (rank, &i) in order.positions().iter().enumerate() {
        let task = &tasks[i];
        let hp = &order.positions()[..rank];
        let r = fixed_point(task.wcet_lo(), task.deadline(), |r| {
            task.wcet_lo()
                + hp.iter()
                    .map(|&j| div_ceil(r, tasks[j].period()) * tasks[j].wcet_lo())
                    .sum::<Time>()
        });
        match r {
            Some(r) => r_lo[i] = Some(r),
            None => {
                failing_task = Some(task.id());
                break;
            }
        }
    }
    RtaResult {
        r_lo,
        r_hi: vec![None; n],
        schedulable: failing_task.is_none(),
        failing_task,
    }
}

/// Runs `hi_bound` for every HC task in priority order on top of a
/// successful LO-mode analysis.
fn hi_mode_analysis(
    tasks: &[Task],
    order: &PriorityOrder,
    hi_bound: impl Fn(usize, &[usize], Time) -> Option<Time>,
) -> RtaResult {
    let mut result = rta_lo(tasks, order);
    if !result.schedulable {
        return result;
    }
    for (rank, &i) in order.positions().iter().enumerate() {
        let task = &tasks[i];
        if !task.is_hi() {
            continue;
        }
        let r_lo = result.r_lo[i].expect("LO analysis succeeded");
        match hi_bound(i, &order.positions()[..rank], r_lo) {
            Some(r) => result.r_hi[i] = Some(r),
            None => {
                result.schedulable = false;
                result.failing_task = Some(task.id());
                break;
            }
        }
    }
    result
}

/// AMC-rtb: `R = C_H + sum_{hpH} ceil(R/T_k) C_H_k + sum_{hpL} ceil(R_LO/T_j) C_L_j`.
pub fn amc_rtb(tasks: &[Task], order: &PriorityOrder) -> RtaResult {
    hi_mode_analysis(tasks, order, |i, hp, r_lo| amc_rtb_response(tasks, i, hp, r_lo))
}

fn amc_rtb_response(tasks: &[Task], i: usize, hp: &[usize], r_lo: Time) -> Option<Time> {
    let task = &tasks[i];
    let lc_interference: Time = hp
        .iter()
        .map(|&j| &tasks[j])
        .filter(|t| !t.is_hi())
        .map(|t| div_ceil(r_lo, t.period()) * t.wcet_lo())
        .sum();
    fixed_point(task.wcet_hi(), task.deadline(), |r| {
        task.wcet_hi()
            + lc_interference
            + hp.iter()
                .map(|&k| &tasks[k])
                .filter(|t| t.is_hi())
                .map(|t| div_ceil(r, t.period()) * t.wcet_hi())
                .sum::<Time>()
    })
}

/// Number of jobs of HC task `k` that may run with their HI budget in a
/// window of length `t` when the switch happens at `s`: those released at
/// or after `s - (T_k - D_k)`, capped by the jobs in the window.
pub fn hi_jobs_after_switch(k: &Task, s: Time, t: Time) -> Time {
    let span = t as i64 - s as i64 - (k.period() - k.deadline()) as i64;
    let period = k.period() as i64;
    // ceil for possibly negative numerator
    let jobs = span.div_euclid(period) + i64::from(span.rem_euclid(period) != 0) + 1;
    jobs.clamp(0, div_ceil(t, k.period()) as i64) as Time
}

/// Candidate switch instants: 0 and every release of a higher-priority LC
/// task strictly before `r_lo`.
pub fn switch_candidates(tasks: &[Task], hp: &[usize], r_lo: Time) -> Vec<Time> {
    let mut points = vec![0];
    for t in hp.iter().map(|&j| &tasks[j]).filter(|t| !t.is_hi()) {
        points.extend((1..).map(|k| k * t.period()).take_while(|&s| s < r_lo));
    }
    points.sort_unstable();
    points.dedup();
    points
}

fn amc_max_response_at(tasks: &[Task], i: usize, hp: &[usize], s: Time) -> Option<Time> {
    let task = &tasks[i];
    let lc_interference: Time = hp
        .iter()
        .map(|&j| &tasks[j])
        .filter(|t| !t.is_hi())
        .map(|t| (s / t.period() + 1) * t.wcet_lo())
        .sum();
    fixed_point(task.wcet_hi(), task.deadline(), |r| {
        task.wcet_hi()
            + lc_interference
            + hp.iter()
                .map(|&k| &tasks[k])
                .filter(|t| t.is_hi())
                .map(|t| {
                    let hi_jobs = hi_jobs_after_switch(t, s, r);
                    hi_jobs * t.wcet_hi() + (div_ceil(r, t.period()) - hi_jobs) * t.wcet_lo()
                })
                .sum::<Time>()
    })
}

/// AMC-max response bound of HC task `i` given its LO response time.
pub fn amc_max_response(tasks: &[Task], i: usize, hp: &[usize], r_lo: Time) -> Option<Time> {
    let mut worst = 0;
    for s in switch_candidates(tasks, hp, r_lo) {
        worst = worst.max(amc_max_response_at(tasks, i, hp, s)?);
    }
    Some(worst)
}

/// AMC-max: maximum over candidate switch instants of the per-instant bound.
pub fn amc_max(tasks: &[Task], order: &PriorityOrder) -> RtaResult {
    hi_mode_analysis(tasks, order, |i, hp, r_lo| amc_max_response(tasks, i, hp, r_lo))
}
