//! Preemptive single-processor runtime simulation with synchronous periodic
//! releases, used to hunt for counterexamples to the schedulability tests.
//!
//! Time is integral and the simulation advances from event to event
//! (release, completion, mode switch), which yields exactly the schedule a
//! unit-quantum stepper would produce. The system starts in LO mode and
//! switches to HI mode the instant an HC job has executed its LO budget
//! without completing; from then on LC jobs are dropped and no new LC jobs
//! are released. There is no return to LO mode.

use rand::Rng;
use serde::Serialize;

use crate::amc::{self, PriorityOrder};
use crate::ecdf;
use crate::edfvd;
use crate::partition::TestKind;
use crate::task::{Task, Time};

/// Dispatching policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Runtime {
    /// EDF on LO-mode deadlines (relative, per task; LC tasks use `D`)
    /// before the switch and on real deadlines after it.
    Edf { lo_deadlines: Vec<Time> },
    /// Fixed priorities, LC jobs dropped at the switch.
    FixedPriority(PriorityOrder),
}

/// Execution demand of every HC job.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    AllLo,
    AllHi,
    /// Each HC job independently demands `C_H` with probability `p_hi`.
    Random { seed: u64, p_hi: f64 },
    /// `bits[pos][job]`; jobs beyond the vector demand `C_L`.
    Explicit(Vec<Vec<bool>>),
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Scenario {
    /// Whether job `job` of the task at slice position `pos` overruns.
    pub fn overruns(&self, pos: usize, job: u64) -> bool {
        match self {
            Scenario::AllLo => false,
            Scenario::AllHi => true,
            Scenario::Random { seed, p_hi } => {
                let h = splitmix64(seed ^ splitmix64((pos as u64) << 40 ^ job));
                ((h >> 11) as f64 / (1u64 << 53) as f64) < *p_hi
            }
            Scenario::Explicit(bits) => bits
                .get(pos)
                .and_then(|b| b.get(job as usize))
                .copied()
                .unwrap_or(false),
        }
    }

    fn demand(&self, task: &Task, pos: usize, job: u64) -> Time {
        if task.is_hi() && self.overruns(pos, job) {
            task.wcet_hi()
        } else {
            task.wcet_lo()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Miss {
    pub task: usize,
    pub deadline: Time,
}

/// A maximal interval during which the processor ran one job, or idled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start: Time,
    pub end: Time,
    /// `(task id, job index)`, `None` when idle.
    pub job: Option<(usize, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimReport {
    pub miss: Option<Miss>,
    pub switch_time: Option<Time>,
    /// Simulated length (shorter than the horizon when stopped at a miss).
    pub length: Time,
    pub busy: Time,
    pub idle: Time,
    /// Filled only by [`simulate_traced`].
    pub trace: Vec<Segment>,
}

#[derive(Debug, Clone)]
struct Job {
    pos: usize,
    index: u64,
    release: Time,
    deadline: Time,
    lo_deadline: Time,
    demand: Time,
    executed: Time,
}

pub fn simulate(tasks: &[Task], runtime: &Runtime, scenario: &Scenario, horizon: Time) -> SimReport {
    run(tasks, runtime, scenario, horizon, false)
}

/// [`simulate`] that also records the schedule.
pub fn simulate_traced(tasks: &[Task], runtime: &Runtime, scenario: &Scenario, horizon: Time) -> SimReport {
    run(tasks, runtime, scenario, horizon, true)
}

fn run(tasks: &[Task], runtime: &Runtime, scenario: &Scenario, horizon: Time, traced: bool) -> SimReport {
    let n = tasks.len();
    let rank: Vec<usize> = match runtime {
        Runtime::FixedPriority(order) => {
            let mut rank = vec![0; n];
            for (r, &p) in order.positions().iter().enumerate() {
                rank[p] = r;
            }
            rank
        }
        Runtime::Edf { .. } => Vec::new(),
    };
    let mut next_release = vec![0 as Time; n];
    let mut job_count = vec![0u64; n];
    let mut pending: Vec<Job> = Vec::new();
    let mut hi_mode = false;
    let mut report = SimReport {
        miss: None,
        switch_time: None,
        length: 0,
        busy: 0,
        idle: 0,
        trace: Vec::new(),
    };
    let record = |report: &mut SimReport, start: Time, end: Time, job: Option<(usize, u64)>| {
        match job {
            Some(_) => report.busy += end - start,
            None => report.idle += end - start,
        }
        if traced {
            match report.trace.last_mut() {
                Some(last) if last.job == job && last.end == start => last.end = end,
                _ => report.trace.push(Segment { start, end, job }),
            }
        }
    };

    let mut t: Time = 0;
    loop {
        for (pos, task) in tasks.iter().enumerate() {
            if next_release[pos] != t {
                continue;
            }
            next_release[pos] += task.period();
            let index = job_count[pos];
            job_count[pos] += 1;
            if hi_mode && !task.is_hi() {
                continue;
            }
            let lo_rel = match runtime {
                Runtime::Edf { lo_deadlines } => lo_deadlines[pos],
                Runtime::FixedPriority(_) => task.deadline(),
            };
            pending.push(Job {
                pos,
                index,
                release: t,
                deadline: t + task.deadline(),
                lo_deadline: t + lo_rel,
                demand: scenario.demand(task, pos, index),
                executed: 0,
            });
        }

        if let Some(miss) = overdue(tasks, &pending, t) {
            report.miss = Some(miss);
            break;
        }
        if t >= horizon {
            break;
        }

        let upcoming = next_release.iter().copied().min().unwrap_or(Time::MAX).min(horizon);
        let chosen = pending
            .iter()
            .enumerate()
            .min_by_key(|(_, j)| {
                let key = match runtime {
                    Runtime::Edf { .. } if hi_mode => j.deadline,
                    Runtime::Edf { .. } => j.lo_deadline,
                    Runtime::FixedPriority(_) => rank[j.pos] as Time,
                };
                (key, tasks[j.pos].id(), j.release)
            })
            .map(|(i, _)| i);
        let Some(i) = chosen else {
            record(&mut report, t, upcoming, None);
            t = upcoming;
            continue;
        };

        let job = &mut pending[i];
        let task = &tasks[job.pos];
        let overrun_point = (!hi_mode && task.is_hi() && job.demand > task.wcet_lo()).then(|| task.wcet_lo());
        let stop_at = overrun_point.unwrap_or(job.demand);
        let slice = (stop_at - job.executed).min(upcoming - t);
        let id = (task.id(), job.index);
        record(&mut report, t, t + slice, Some(id));
        t += slice;
        job.executed += slice;

        if job.executed == job.demand {
            let job = pending.swap_remove(i);
            if t > job.deadline {
                report.miss = Some(Miss {
                    task: tasks[job.pos].id(),
                    deadline: job.deadline,
                });
                break;
            }
        } else if Some(job.executed) == overrun_point {
            if let Some(miss) = overdue(tasks, &pending, t) {
                report.miss = Some(miss);
                break;
            }
            hi_mode = true;
            report.switch_time = Some(t);
            pending.retain(|j| tasks[j.pos].is_hi());
        }
    }
    report.length = t;
    report
}

/// Earliest-deadline unfinished job whose deadline is at or before `t`.
fn overdue(tasks: &[Task], pending: &[Job], t: Time) -> Option<Miss> {
    pending
        .iter()
        .filter(|j| j.deadline <= t && j.executed < j.demand)
        .map(|j| Miss {
            task: tasks[j.pos].id(),
            deadline: j.deadline,
        })
        .min_by_key(|m| (m.deadline, m.task))
}

fn gcd(a: Time, b: Time) -> Time {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Cap on the periodic part of the falsification horizon.
pub const HORIZON_CAP: Time = 100_000;

/// `min(2 * lcm(T), 100000) + max D`.
pub fn falsification_horizon(tasks: &[Task]) -> Time {
    let lcm = tasks.iter().try_fold(1 as Time, |acc, t| {
        let l = acc / gcd(acc, t.period());
        l.checked_mul(t.period()).filter(|&v| v <= HORIZON_CAP)
    });
    let periodic = lcm.map_or(HORIZON_CAP, |l| (2 * l).min(HORIZON_CAP));
    periodic + tasks.iter().map(Task::deadline).max().unwrap_or(0)
}

/// The runtime a test's verdict licenses, or `None` if the test rejects.
pub fn runtime_for(test: TestKind, tasks: &[Task]) -> Option<Runtime> {
    match test {
        TestKind::EdfVd => {
            let verdict = edfvd::edfvd_schedulable(tasks).ok()?;
            let x = verdict.scaling?;
            let lo_deadlines = edfvd::edfvd_virtual_deadlines(tasks, x)
                .into_iter()
                .zip(tasks)
                .map(|(v, t)| v.unwrap_or(t.deadline()))
                .collect();
            Some(Runtime::Edf { lo_deadlines })
        }
        TestKind::AmcRtb | TestKind::AmcMax => {
            let order = amc::assign_priorities(tasks);
            let result = if test == TestKind::AmcRtb {
                amc::amc_rtb(tasks, &order)
            } else {
                amc::amc_max(tasks, &order)
            };
            result.schedulable.then_some(Runtime::FixedPriority(order))
        }
        TestKind::Ecdf => {
            let verdict = ecdf::ecdf_schedulable(tasks);
            verdict.schedulable.then(|| Runtime::Edf {
                lo_deadlines: verdict.assignment.deadlines().to_vec(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    /// 0 = all-LO, 1 = all-HI, then the random scenarios.
    pub scenario_index: usize,
    #[serde(skip)]
    pub scenario: Scenario,
    pub report: SimReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FalsifyOutcome {
    /// The test rejected the set, so there is nothing to falsify.
    NotAccepted,
    /// No scenario produced a miss. This does not prove the test sound.
    NoCounterexample { scenarios: usize },
    Counterexample(Counterexample),
}

/// Scenarios tried by the falsifier: all-LO, all-HI, then `n_random`
/// random ones whose overrun probabilities are spread log-uniformly over
/// `[1e-4, 1]` so that both early and late switches occur.
pub fn falsification_scenarios<R: Rng + ?Sized>(n_random: usize, rng: &mut R) -> Vec<Scenario> {
    let mut v = vec![Scenario::AllLo, Scenario::AllHi];
    v.extend((0..n_random).map(|_| Scenario::Random {
        seed: rng.gen(),
        p_hi: 10f64.powf(rng.gen_range(-4.0..0.0)),
    }));
    v
}

/// Simulates `runtime` under every scenario; the lowest-index scenario
/// with a miss wins.
pub fn falsify_runtime<R: Rng + ?Sized>(
    tasks: &[Task],
    runtime: &Runtime,
    n_random: usize,
    rng: &mut R,
) -> FalsifyOutcome {
    let horizon = falsification_horizon(tasks);
    let scenarios = falsification_scenarios(n_random, rng);
    let count = scenarios.len();
    for (scenario_index, scenario) in scenarios.into_iter().enumerate() {
        let report = simulate(tasks, runtime, &scenario, horizon);
        if report.miss.is_some() {
            return FalsifyOutcome::Counterexample(Counterexample {
                scenario_index,
                scenario,
                report,
            });
        }
    }
    FalsifyOutcome::NoCounterexample { scenarios: count }
}

/// Runs the falsifier against the runtime configured by `test`.
pub fn falsify<R: Rng + ?Sized>(test: TestKind, tasks: &[Task], n_random: usize, rng: &mut R) -> FalsifyOutcome {
    match runtime_for(test, tasks) {
        Some(runtime) => falsify_runtime(tasks, &runtime, n_random, rng),
        None => FalsifyOutcome::NotAccepted,
    }
}
