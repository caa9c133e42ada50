//! Demand-bound-function test with per-task virtual deadlines and greedy
//! deadline tuning, for implicit- and constrained-deadline tasks on one
//! processor.
//!
//! LO mode: every task contributes jobs with deadline `V` (LC tasks use
//! `V = D`). HI mode: only HC tasks contribute; the job that is pending at
//! the switch is credited with the part of its LO budget that must already
//! have executed for the LO-mode demand test to hold.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::task::{Task, Time};

/// Default ceiling on the analysis horizon.
pub const DEFAULT_HORIZON_CAP: Time = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Mode {
    Lo,
    Hi,
}

/// LO-mode demand of jobs released at or after 0 with virtual deadline at
/// or before `l`.
pub fn dbf_lo(task: &Task, v: Time, l: Time) -> Time {
    if l < v {
        return 0;
    }
    ((l - v) / task.period() + 1) * task.wcet_lo()
}

/// HI-mode demand of an HC task over a window of length `l` that starts at
/// the mode switch. Zero for LC tasks, which are dropped at the switch.
pub fn dbf_hi(task: &Task, v: Time, l: Time) -> Time {
    if !task.is_hi() {
        return 0;
    }
    let gap = task.deadline() - v;
    if l < gap {
        return 0;
    }
    let k = (l - gap) / task.period() + 1;
    let d = l - (k - 1) * task.period();
    if d >= task.deadline() {
        k * task.wcet_hi()
    } else {
        let x = d - gap;
        k * task.wcet_hi() - task.wcet_lo().saturating_sub(x)
    }
}

/// Virtual deadlines per slice position. LC tasks carry their real deadline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VirtualDeadlineAssignment(Vec<Time>);

impl VirtualDeadlineAssignment {
    /// `V_i = D_i` for every task.
    pub fn initial(tasks: &[Task]) -> Self {
        VirtualDeadlineAssignment(tasks.iter().map(Task::deadline).collect())
    }

    /// Checks `C_L <= V <= D` for HC tasks and `V = D` for LC tasks.
    pub fn new(tasks: &[Task], deadlines: Vec<Time>) -> Option<Self> {
        let ok = tasks.len() == deadlines.len()
            && tasks.iter().zip(&deadlines).all(|(t, &v)| {
                if t.is_hi() {
                    t.wcet_lo() <= v && v <= t.deadline()
                } else {
                    v == t.deadline()
                }
            });
        ok.then_some(VirtualDeadlineAssignment(deadlines))
    }

    pub fn deadlines(&self) -> &[Time] {
        &self.0
    }

    pub fn get(&self, pos: usize) -> Time {
        self.0[pos]
    }
}

/// Why a horizon could not be established.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum HorizonError {
    /// Utilization of the mode is at least one.
    Overloaded(Mode),
    /// The bound exists but is beyond the configured ceiling.
    CapExceeded { mode: Mode, bound: f64 },
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact comparison of `sum(c / t)` with one, and the lcm of the periods,
/// or `None` once the lcm exceeds `limit`.
fn compare_with_one(terms: &[(Time, Time)], limit: Time) -> Option<(Ordering, Time)> {
    let mut lcm: u128 = 1;
    for &(_, t) in terms {
        lcm = lcm / gcd(lcm, t as u128) * t as u128;
        if lcm > limit as u128 {
            return None;
        }
    }
    let total: u128 = terms.iter().map(|&(c, t)| c as u128 * (lcm / t as u128)).sum();
    Some((total.cmp(&lcm), lcm as Time))
}

/// Horizon past which `mode`'s demand can no longer exceed the interval
/// length: `sum(u * (T - offset)) / (1 - U)`. When `U` is exactly one the
/// surplus is periodic past the largest offset, so one hyperperiod after
/// it suffices.
pub fn mode_horizon(
    tasks: &[Task],
    assignment: &VirtualDeadlineAssignment,
    mode: Mode,
    cap: Time,
) -> Result<Time, HorizonError> {
    let mut util = 0.0;
    let mut offset_sum = 0.0;
    let mut max_offset = 0;
    let in_mode = |t: &Task| mode == Mode::Lo || t.is_hi();
    for (i, t) in tasks.iter().enumerate().filter(|(_, t)| in_mode(t)) {
        let v = assignment.get(i);
        match mode {
            Mode::Lo => {
                util += t.u_lo();
                offset_sum += t.u_lo() * (t.period() - v) as f64;
                max_offset = max_offset.max(v);
            }
            Mode::Hi => {
                util += t.u_hi();
                offset_sum += t.u_hi() * (t.period() - t.deadline() + v) as f64;
                max_offset = max_offset.max(t.deadline() - v + t.wcet_lo());
            }
        }
    }
    if (util - 1.0).abs() < 1e-6 {
        let terms: Vec<(Time, Time)> = tasks
            .iter()
            .filter(|t| in_mode(t))
            .map(|t| match mode {
                Mode::Lo => (t.wcet_lo(), t.period()),
                Mode::Hi => (t.wcet_hi(), t.period()),
            })
            .collect();
        match compare_with_one(&terms, cap) {
            Some((Ordering::Greater, _)) => return Err(HorizonError::Overloaded(mode)),
            Some((Ordering::Equal, lcm)) => {
                let bound = max_offset + lcm;
                if bound > cap {
                    return Err(HorizonError::CapExceeded { mode, bound: bound as f64 });
                }
                return Ok(bound);
            }
            Some((Ordering::Less, _)) => {}
            None if util >= 1.0 => return Err(HorizonError::Overloaded(mode)),
            None => {}
        }
    } else if util > 1.0 {
        return Err(HorizonError::Overloaded(mode));
    }
    if util >= 1.0 {
        return Err(HorizonError::CapExceeded { mode, bound: f64::INFINITY });
    }
    let bound = offset_sum / (1.0 - util);
    if bound > cap as f64 {
        return Err(HorizonError::CapExceeded { mode, bound });
    }
    Ok(bound.floor() as Time)
}

/// Horizon covering both modes.
pub fn lmax_bound(
    tasks: &[Task],
    assignment: &VirtualDeadlineAssignment,
    cap: Time,
) -> Result<Time, HorizonError> {
    let lo = mode_horizon(tasks, assignment, Mode::Lo, cap)?;
    let hi = mode_horizon(tasks, assignment, Mode::Hi, cap)?;
    Ok(lo.max(hi))
}

/// Reason a task set was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Rejection {
    Violation { mode: Mode, at: Time },
    Horizon(HorizonError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DbfVerdict {
    pub schedulable: bool,
    pub assignment: VirtualDeadlineAssignment,
    pub rejection: Option<Rejection>,
}

impl DbfVerdict {
    pub fn first_violation(&self) -> Option<(Mode, Time)> {
        match self.rejection {
            Some(Rejection::Violation { mode, at }) => Some((mode, at)),
            _ => None,
        }
    }
}

/// Lazily merged checkpoint sequences, one arithmetic progression per
/// stream, visited in increasing order.
struct Checkpoints {
    heap: BinaryHeap<Reverse<(Time, usize)>>,
    steps: Vec<Time>,
    limit: Time,
}

impl Checkpoints {
    fn new(limit: Time) -> Self {
        Checkpoints {
            heap: BinaryHeap::new(),
            steps: Vec::new(),
            limit,
        }
    }

    /// Registers a stream `start, start + step, ...`; streams are numbered
    /// in registration order.
    fn add(&mut self, start: Time, step: Time) {
        if start <= self.limit {
            self.heap.push(Reverse((start, self.steps.len())));
        }
        self.steps.push(step);
    }

    /// Next distinct checkpoint, calling `hit` once for every stream that
    /// contains it.
    fn next_point(&mut self, mut hit: impl FnMut(usize)) -> Option<Time> {
        let Reverse((point, _)) = *self.heap.peek()?;
        while let Some(&Reverse((p, s))) = self.heap.peek() {
            if p != point {
                break;
            }
            self.heap.pop();
            hit(s);
            let next = p + self.steps[s];
            if next <= self.limit {
                self.heap.push(Reverse((next, s)));
            }
        }
        Some(point)
    }
}

/// Scans the LO-mode condition `sum dbf_lo <= l` up to the LO horizon.
pub fn check_lo(
    tasks: &[Task],
    assignment: &VirtualDeadlineAssignment,
    cap: Time,
) -> Result<(), Rejection> {
    let limit = mode_horizon(tasks, assignment, Mode::Lo, cap).map_err(Rejection::Horizon)?;
    let mut points = Checkpoints::new(limit);
    for (i, t) in tasks.iter().enumerate() {
        points.add(assignment.get(i), t.period());
    }
    // dbf_lo only steps at its own checkpoints, so the total is tracked
    // incrementally
    let mut demand: Time = 0;
    while let Some(l) = points.next_point(|s| demand += tasks[s].wcet_lo()) {
        if demand > l {
            return Err(Rejection::Violation { mode: Mode::Lo, at: l });
        }
    }
    Ok(())
}

fn lo_demand(tasks: &[Task], assignment: &VirtualDeadlineAssignment, l: Time) -> Time {
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| dbf_lo(t, assignment.get(i), l))
        .sum()
}

/// Whether the LO-mode condition holds, by a backward quick scan over
/// absolute virtual deadlines. Same verdict as [`check_lo`], usually with
/// far fewer demand evaluations.
pub fn lo_feasible(tasks: &[Task], assignment: &VirtualDeadlineAssignment, cap: Time) -> bool {
    let Ok(limit) = mode_horizon(tasks, assignment, Mode::Lo, cap) else {
        return false;
    };
    let Some(d_min) = (0..tasks.len()).map(|i| assignment.get(i)).min() else {
        return true;
    };
    // largest absolute deadline strictly below `t`
    let before = |t: Time| {
        tasks
            .iter()
            .enumerate()
            .filter_map(|(i, task)| {
                let v = assignment.get(i);
                (t > v).then(|| v + (t - 1 - v) / task.period() * task.period())
            })
            .max()
    };
    let Some(mut t) = before(limit + 1) else {
        return true;
    };
    loop {
        let h = lo_demand(tasks, assignment, t);
        if h > t {
            return false;
        }
        if h <= d_min {
            return true;
        }
        t = if h < t {
            h
        } else {
            match before(t) {
                Some(p) => p,
                None => return true,
            }
        };
    }
}

fn hi_demand(tasks: &[Task], assignment: &VirtualDeadlineAssignment, l: Time) -> Time {
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| dbf_hi(t, assignment.get(i), l))
        .sum()
}

/// Scans the HI-mode condition `sum dbf_hi <= l` over jump and carry-over
/// kink points, starting at `from`.
pub fn check_hi(
    tasks: &[Task],
    assignment: &VirtualDeadlineAssignment,
    cap: Time,
    from: Time,
) -> Result<(), Rejection> {
    let limit = mode_horizon(tasks, assignment, Mode::Hi, cap).map_err(Rejection::Horizon)?;
    let mut points = Checkpoints::new(limit);
    for (i, t) in tasks.iter().enumerate().filter(|(_, t)| t.is_hi()) {
        let gap = t.deadline() - assignment.get(i);
        let skip = from.saturating_sub(gap) / t.period();
        let first = gap + skip * t.period();
        points.add(first, t.period());
        points.add(first + t.wcet_lo(), t.period());
    }
    while let Some(l) = points.next_point(|_| ()) {
        if l < from {
            continue;
        }
        if hi_demand(tasks, assignment, l) > l {
            return Err(Rejection::Violation { mode: Mode::Hi, at: l });
        }
    }
    Ok(())
}

/// Largest `V' < V` (and `>= C_L`) that lowers the task's HI demand at `l`,
/// with the achieved reduction.
fn next_effective_decrement(task: &Task, v: Time, l: Time) -> Option<(Time, Time)> {
    let current = dbf_hi(task, v, l);
    let lowest = task.wcet_lo();
    if v <= lowest || dbf_hi(task, lowest, l) >= current {
        return None;
    }
    // HI demand is monotone in V: binary search for the largest V' that
    // lowers it
    let (mut lo, mut hi) = (lowest, v - 1);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if dbf_hi(task, mid, l) < current {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Some((lo, current - dbf_hi(task, lo, l)))
}

/// Demand-bound test with greedy virtual-deadline tuning.
pub fn ecdf_schedulable(tasks: &[Task]) -> DbfVerdict {
    ecdf_schedulable_with_cap(tasks, DEFAULT_HORIZON_CAP)
}

pub fn ecdf_schedulable_with_cap(tasks: &[Task], cap: Time) -> DbfVerdict {
    let mut assignment = VirtualDeadlineAssignment::initial(tasks);
    let reject = |assignment: VirtualDeadlineAssignment, why: Rejection| DbfVerdict {
        schedulable: false,
        assignment,
        rejection: Some(why),
    };
    if !lo_feasible(tasks, &assignment, cap) {
        let why = check_lo(tasks, &assignment, cap).expect_err("both LO checks agree");
        return reject(assignment, why);
    }
    // (position, new V, demand reduction at the violation point)
    let rank = |a: &(usize, Time, Time), b: &(usize, Time, Time)| {
        let (ta, tb) = (&tasks[a.0], &tasks[b.0]);
        b.2.cmp(&a.2)
            .then(tb.u_diff().partial_cmp(&ta.u_diff()).unwrap_or(Ordering::Equal))
            .then(ta.id().cmp(&tb.id()))
    };
    let mut at: Option<Time> = None;
    let mut candidates: Vec<(usize, Time, Time)> = Vec::new();
    loop {
        // lowering a virtual deadline never raises HI demand, so points
        // already cleared stay clear and a point still violated is still
        // the earliest violation
        let still_violated = at.filter(|&l| hi_demand(tasks, &assignment, l) > l);
        let l = match still_violated {
            Some(l) => l,
            None => match check_hi(tasks, &assignment, cap, at.unwrap_or(0)) {
                Ok(()) => {
                    return DbfVerdict {
                        schedulable: true,
                        assignment,
                        rejection: None,
                    }
                }
                Err(Rejection::Violation { at, .. }) => at,
                Err(why) => return reject(assignment, why),
            },
        };
        at = Some(l);

        candidates.clear();
        candidates.extend(
            tasks
                .iter()
                .enumerate()
                .filter(|(i, t)| t.is_hi() && dbf_hi(t, assignment.get(*i), l) > 0)
                .filter_map(|(i, t)| next_effective_decrement(t, assignment.get(i), l).map(|(v, gain)| (i, v, gain))),
        );
        // the best reduction that keeps LO mode schedulable; sorting is
        // only needed when the best one does not
        let Some(best) = candidates.iter().copied().min_by(rank) else {
            return reject(assignment, Rejection::Violation { mode: Mode::Hi, at: l });
        };
        let try_move = |assignment: &mut VirtualDeadlineAssignment, (i, v, _): (usize, Time, Time)| {
            let previous = assignment.0[i];
            assignment.0[i] = v;
            let ok = lo_feasible(tasks, assignment, cap);
            if !ok {
                assignment.0[i] = previous;
            }
            ok
        };
        let mut moved = try_move(&mut assignment, best);
        if !moved {
            candidates.sort_by(rank);
            moved = candidates[1..].iter().any(|&c| try_move(&mut assignment, c));
        }
        if !moved {
            return reject(assignment, Rejection::Violation { mode: Mode::Hi, at: l });
        }
    }
}
