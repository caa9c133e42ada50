//! Helpers shared by the integration tests: random instances and oracles
//! written independently of the library code paths.

#![allow(dead_code)]

use mcpart::task::{Criticality, Task, Time};
use mcpart::{generate_taskset, DeadlineModel, GeneratorConfig, TaskSet, Utilizations};
use rand::Rng;

pub fn gcd(a: Time, b: Time) -> Time {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(tasks: &[Task]) -> Time {
    tasks.iter().fold(1, |acc, t| acc / gcd(acc, t.period()) * t.period())
}

/// A valid task with period drawn from `periods`.
pub fn random_task<R: Rng>(rng: &mut R, id: usize, periods: &[Time], constrained: bool, max_u: f64) -> Task {
    let period = periods[rng.gen_range(0..periods.len())];
    let hi = rng.gen_bool(0.5);
    let cap = ((period as f64 * max_u).floor() as Time).max(1);
    let c_hi = rng.gen_range(1..=cap);
    let c_lo = if hi { rng.gen_range(1..=c_hi) } else { c_hi };
    let deadline = if constrained { rng.gen_range(c_hi..=period) } else { period };
    let chi = if hi { Criticality::Hi } else { Criticality::Lo };
    Task::new(id, period, chi, c_lo, c_hi, deadline).unwrap()
}

pub fn random_bin<R: Rng>(rng: &mut R, n: usize, periods: &[Time], constrained: bool, max_u: f64) -> Vec<Task> {
    (0..n).map(|i| random_task(rng, i, periods, constrained, max_u)).collect()
}

/// Periods whose pairwise lcm stays small.
pub const SMALL_PERIODS: [Time; 10] = [2, 3, 4, 5, 6, 8, 10, 12, 20, 25];

/// A uniprocessor set from the generator at a random point of the
/// utilization grid (normalized = absolute for m = 1).
pub fn generated_bin<R: Rng>(rng: &mut R, model: DeadlineModel) -> TaskSet {
    loop {
        let hh = rng.gen_range(1..=99) as f64 / 100.0;
        let hl = rng.gen_range(0..=(hh * 100.0) as u32) as f64 / 100.0;
        let ll = rng.gen_range(0..=(99 - (hl * 100.0) as u32)) as f64 / 100.0;
        let mut cfg = GeneratorConfig::new(1, rng.gen_range(0.1..0.9), Utilizations::new(ll, hl, hh), model);
        cfg.n_range = (2, 6);
        cfg.max_attempts = 50;
        if let Ok(set) = generate_taskset(&cfg, rng) {
            return set;
        }
    }
}

/// LO-mode demand by listing jobs: releases at `0, T, 2T, ...` whose
/// virtual deadline `r + V` is at most `l`.
pub fn dbf_lo_jobs(task: &Task, v: Time, l: Time) -> Time {
    let mut demand = 0;
    let mut r = 0;
    while r + v <= l {
        demand += task.wcet_lo();
        r += task.period();
    }
    demand
}

/// HI-mode demand in a window `[0, l]` opened by a switch at 0, maximised
/// over release alignments. A job released at `r < 0` whose virtual
/// deadline `r + V` lies at or after the switch has already run at least
/// `C_L - (r + V)` units in LO mode; jobs whose virtual deadline passed
/// before the switch are complete.
pub fn dbf_hi_alignments(task: &Task, v: Time, l: Time) -> Time {
    if !task.is_hi() {
        return 0;
    }
    let (t, d) = (task.period() as i64, task.deadline() as i64);
    let (c_lo, c_hi) = (task.wcet_lo() as i64, task.wcet_hi() as i64);
    let (v, l) = (v as i64, l as i64);
    let mut best = 0;
    for first in -v..(t - v).max(-v + 1) {
        let mut demand = 0;
        let mut r = first;
        while r + d <= l {
            demand += if r >= 0 { c_hi } else { c_hi - (c_lo - (r + v)).max(0) };
            r += t;
        }
        best = best.max(demand);
    }
    best as Time
}

/// Unit-step reference simulation returning the task id run in every
/// slot (`None` when idle), the switch time and the first miss. Used as
/// an oracle for the event-driven simulator.
pub struct StepResult {
    pub slots: Vec<Option<usize>>,
    pub switch_time: Option<Time>,
    pub miss: Option<(usize, Time)>,
}

pub fn step_simulate(
    tasks: &[Task],
    lo_deadlines: Option<&[Time]>,
    priority: Option<&[usize]>,
    overrun: impl Fn(usize, u64) -> bool,
    horizon: Time,
) -> StepResult {
    struct J {
        pos: usize,
        release: Time,
        deadline: Time,
        lo_deadline: Time,
        demand: Time,
        done: Time,
    }
    let mut jobs: Vec<J> = Vec::new();
    let mut hi = false;
    let mut out = StepResult {
        slots: Vec::new(),
        switch_time: None,
        miss: None,
    };
    for t in 0..=horizon {
        for (pos, task) in tasks.iter().enumerate() {
            if t % task.period() == 0 {
                let k = t / task.period();
                if hi && !task.is_hi() {
                    continue;
                }
                let over = task.is_hi() && overrun(pos, k);
                jobs.push(J {
                    pos,
                    release: t,
                    deadline: t + task.deadline(),
                    lo_deadline: t + lo_deadlines.map_or(task.deadline(), |v| v[pos]),
                    demand: if over { task.wcet_hi() } else { task.wcet_lo() },
                    done: 0,
                });
            }
        }
        if let Some(j) = jobs.iter().filter(|j| j.deadline <= t).min_by_key(|j| (j.deadline, tasks[j.pos].id())) {
            out.miss = Some((tasks[j.pos].id(), j.deadline));
            return out;
        }
        // LC jobs pending at the switch still count at the switch instant
        if hi {
            jobs.retain(|j| tasks[j.pos].is_hi());
        }
        if t == horizon {
            break;
        }
        let pick = (0..jobs.len()).min_by_key(|&i| {
            let j = &jobs[i];
            let key = match priority {
                Some(p) => p.iter().position(|&x| x == j.pos).unwrap() as Time,
                None if hi => j.deadline,
                None => j.lo_deadline,
            };
            (key, tasks[j.pos].id(), j.release)
        });
        let Some(i) = pick else {
            out.slots.push(None);
            continue;
        };
        out.slots.push(Some(tasks[jobs[i].pos].id()));
        jobs[i].done += 1;
        let task = &tasks[jobs[i].pos];
        if jobs[i].done == jobs[i].demand {
            jobs.swap_remove(i);
        } else if !hi && task.is_hi() && jobs[i].done == task.wcet_lo() {
            hi = true;
            out.switch_time = Some(t + 1);
        }
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
