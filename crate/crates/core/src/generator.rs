//! Random dual-criticality task-set generation.
//!
//! A set is drawn in three steps: the task count and the criticality of
//! every task, per-class utilization vectors with fixed sums, then periods,
//! budgets and deadlines. Sets whose rounded utilizations drift too far from
//! the targets are discarded and redrawn.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::task::{Criticality, DeadlineModel, Task, TaskSet, Time, Utilizations};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub m: usize,
    /// Probability that a task is HC.
    pub p_h: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Normalized targets `U_LL`, `U_HL`, `U_HH`.
    pub targets: Utilizations,
    pub period_range: (Time, Time),
    pub deadline_model: DeadlineModel,
    /// Inclusive bounds on the number of tasks.
    pub n_range: (usize, usize),
    /// Allowed deviation of each achieved normalized sum from its target.
    pub tolerance: f64,
    pub max_attempts: usize,
}

impl GeneratorConfig {
    /// Defaults: `u` in `[0.001, 0.99]`, periods in `[10, 500]`, between
    /// `m + 1` and `5m` tasks, tolerance 0.05.
    pub fn new(m: usize, p_h: f64, targets: Utilizations, deadline_model: DeadlineModel) -> Self {
        GeneratorConfig {
            m,
            p_h,
            u_min: 0.001,
            u_max: 0.99,
            targets,
            period_range: (10, 500),
            deadline_model,
            n_range: (m + 1, 5 * m),
            tolerance: 0.05,
            max_attempts: 1000,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let t = &self.targets;
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.p_h) {
            return bad("P_H must lie in [0, 1]");
        }
        if !(0.0 < self.u_min && self.u_min <= self.u_max && self.u_max <= 1.0) {
            return bad("need 0 < u_min <= u_max <= 1");
        }
        if t.lc_lo < 0.0 || t.hc_lo < 0.0 || t.hc_hi < 0.0 || t.hc_lo > t.hc_hi {
            return bad("targets must be non-negative with U_HL <= U_HH");
        }
        if self.period_range.0 == 0 || self.period_range.0 > self.period_range.1 {
            return bad("period range must satisfy 1 <= T_lo <= T_hi");
        }
        if self.n_range.0 > self.n_range.1 {
            return bad("empty task-count range");
        }
        Ok(())
    }
}

/// Log-uniform integer period in `[lo, hi]`.
pub fn draw_period<R: Rng + ?Sized>(rng: &mut R, lo: Time, hi: Time) -> Time {
    if lo >= hi {
        return lo;
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let t = rng.gen_range(a..b).exp().floor() as Time;
    t.clamp(lo, hi)
}

/// `n` values in `[a, b]` summing to `s`, uniformly distributed over that
/// polytope (Stafford's randfixedsum). Requires `n * a <= s <= n * b`.
pub fn randfixedsum<R: Rng + ?Sized>(rng: &mut R, n: usize, s: f64, a: f64, b: f64) -> Vec<f64> {
    assert!(a <= b, "empty interval");
    match n {
        0 => return Vec::new(),
        1 => return vec![s.clamp(a, b)],
        _ => {}
    }
    if b - a <= f64::EPSILON {
        return vec![a; n];
    }
    let nf = n as f64;
    // work on the unit cube
    let mut s = ((s - nf * a) / (b - a)).clamp(0.0, nf);
    let k = (s.floor() as usize).min(n - 1);
    s = s.clamp(k as f64, k as f64 + 1.0);
    let s1: Vec<f64> = (0..n).map(|i| s - (k as f64 - i as f64)).collect();
    let s2: Vec<f64> = (0..n).map(|i| (k + n - i) as f64 - s).collect();

    // w[i][j]: scaled polytope volumes; t[i][j]: transition probabilities
    let mut w = vec![vec![0.0f64; n + 1]; n];
    w[0][1] = 1.0;
    let mut t = vec![vec![0.0f64; n]; n - 1];
    for i in 2..=n {
        for j in 1..=i {
            let tmp1 = w[i - 2][j] * s1[j - 1] / i as f64;
            let tmp2 = w[i - 2][j - 1] * s2[n - i + j - 1] / i as f64;
            w[i - 1][j] = tmp1 + tmp2;
            let tmp3 = w[i - 1][j] + f64::MIN_POSITIVE;
            t[i - 2][j - 1] = if s2[n - i + j - 1] > s1[j - 1] {
                tmp2 / tmp3
            } else {
                1.0 - tmp1 / tmp3
            };
        }
    }

    let mut x = vec![0.0; n];
    let mut j = k + 1;
    let (mut sm, mut pr) = (0.0, 1.0);
    for i in (1..n).rev() {
        let e = rng.gen::<f64>() <= t[i - 1][j - 1];
        let sx = rng.gen::<f64>().powf(1.0 / i as f64);
        sm += (1.0 - sx) * pr * s / (i + 1) as f64;
        pr *= sx;
        x[n - i - 1] = sm + if e { pr } else { 0.0 };
        if e {
            s -= 1.0;
            j -= 1;
        }
    }
    x[n - 1] = sm + pr * s;
    x.shuffle(rng);
    x.into_iter().map(|v| (a + (b - a) * v).clamp(a, b)).collect()
}

/// Rescales `values` so they sum to `target` while each stays inside
/// `[lower, upper[i]]`. Clamped entries are frozen and the remainder is
/// redistributed proportionally over the free ones.
fn fit_sum(values: &mut [f64], lower: f64, upper: &[f64], target: f64) {
    let n = values.len();
    let mut frozen = vec![false; n];
    for _ in 0..=n {
        let fixed: f64 = (0..n).filter(|&i| frozen[i]).map(|i| values[i]).sum();
        let free: f64 = (0..n).filter(|&i| !frozen[i]).map(|i| values[i]).sum();
        if free <= 0.0 {
            return;
        }
        let factor = (target - fixed) / free;
        let mut clamped = false;
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            let v = values[i] * factor;
            if v > upper[i] || v < lower {
                values[i] = v.clamp(lower, upper[i]);
                frozen[i] = true;
                clamped = true;
            } else {
                values[i] = v;
            }
        }
        if !clamped {
            return;
        }
    }
}

/// `ceil(u * T)`, ignoring floating-point noise just above an integer.
fn budget(u: f64, period: Time) -> Time {
    ((u * period as f64 - 1e-9).ceil() as Time).max(1)
}

fn class_feasible(count: usize, sum: f64, lo: f64, hi: f64, slack: f64) -> bool {
    if count == 0 {
        return sum <= slack;
    }
    count as f64 * lo <= sum && sum <= count as f64 * hi
}

/// One attempt; `None` when the drawn counts or the rounded sums miss the
/// constraints.
fn attempt<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Option<TaskSet> {
    let m = cfg.m as f64;
    let slack = cfg.tolerance * m;
    let (s_ll, s_hl, s_hh) = (
        cfg.targets.lc_lo * m,
        cfg.targets.hc_lo * m,
        cfg.targets.hc_hi * m,
    );

    let n = rng.gen_range(cfg.n_range.0..=cfg.n_range.1);
    let n_hi = (0..n).filter(|_| rng.gen_bool(cfg.p_h)).count();
    let n_lo = n - n_hi;
    if !class_feasible(n_hi, s_hh, cfg.u_min, cfg.u_max, slack)
        || !class_feasible(n_hi, s_hl, cfg.u_min, cfg.u_max, slack)
        || !class_feasible(n_lo, s_ll, cfg.u_min, cfg.u_max, slack)
    {
        return None;
    }

    let u_hi = randfixedsum(rng, n_hi, s_hh, cfg.u_min, cfg.u_max);
    let mut u_hc_lo: Vec<f64> = u_hi.iter().map(|&u| rng.gen_range(cfg.u_min..=u)).collect();
    fit_sum(&mut u_hc_lo, cfg.u_min, &u_hi, s_hl);
    let u_lc = randfixedsum(rng, n_lo, s_ll, cfg.u_min, cfg.u_max);

    let (t_lo, t_hi) = cfg.period_range;
    let mut tasks = Vec::with_capacity(n);
    let hc = u_hi.iter().zip(&u_hc_lo).map(|(&h, &l)| (Criticality::Hi, l, h));
    let lc = u_lc.iter().map(|&l| (Criticality::Lo, l, l));
    for (chi, ul, uh) in hc.chain(lc) {
        let period = draw_period(rng, t_lo, t_hi);
        let c_hi = budget(uh, period).min(period);
        let c_lo = budget(ul, period).min(c_hi);
        let c_lo = if chi == Criticality::Lo { c_hi } else { c_lo };
        let deadline = match cfg.deadline_model {
            DeadlineModel::Implicit => period,
            DeadlineModel::Constrained => rng.gen_range(c_hi..=period),
        };
        tasks.push(Task::new(0, period, chi, c_lo, c_hi, deadline).ok()?);
    }
    tasks.shuffle(rng);
    let tasks: Vec<Task> = tasks.into_iter().enumerate().map(|(i, t)| t.with_id(i)).collect();

    let achieved = Utilizations::of(&tasks);
    let within = |a: f64, b: f64| (a - b).abs() <= slack;
    if !(within(achieved.lc_lo, s_ll) && within(achieved.hc_lo, s_hl) && within(achieved.hc_hi, s_hh)) {
        return None;
    }
    TaskSet::new(cfg.m, cfg.deadline_model, tasks).ok()
}

/// Draws one task set, retrying up to `cfg.max_attempts` times.
pub fn generate_taskset<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Result<TaskSet, Error> {
    cfg.validate()?;
    for _ in 0..cfg.max_attempts {
        if let Some(set) = attempt(cfg, rng) {
            return Ok(set);
        }
    }
    Err(Error::GenerationFailed {
        attempts: cfg.max_attempts,
    })
}

/// `max(U_HL + U_LL, U_HH)`
pub fn u_b(targets: &Utilizations) -> f64 {
    targets.bound()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn degenerate_period_range() {
        assert_eq!(draw_period(&mut rng(1), 10, 10), 10);
    }

    #[test]
    fn periods_are_log_uniform() {
        let mut r = rng(2);
        let draws = 100_000;
        let mut low = 0;
        for _ in 0..draws {
            let t = draw_period(&mut r, 10, 500);
            assert!((10..=500).contains(&t));
            // sqrt(10 * 500) ~ 70.7 splits the log range in halves
            if t <= 70 {
                low += 1;
            }
        }
        let frac = low as f64 / draws as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn randfixedsum_hits_sum_and_bounds() {
        let mut r = rng(3);
        for &(n, s) in &[(2, 0.5), (5, 4.2), (10, 0.5), (30, 20.0), (3, 2.97)] {
            for _ in 0..200 {
                let x = randfixedsum(&mut r, n, s, 0.001, 0.99);
                assert_eq!(x.len(), n);
                let total: f64 = x.iter().sum();
                assert!((total - s).abs() < 1e-9, "n={n} sum {total} != {s}");
                assert!(x.iter().all(|&v| (0.001..=0.99).contains(&v)));
            }
        }
    }

    #[test]
    fn randfixedsum_pair_is_uniform_on_its_segment() {
        // with n = 2 and s = 1.2 on [0, 1], x0 is uniform on [0.2, 1]
        let mut r = rng(4);
        let mut xs: Vec<f64> = (0..10_000)
            .map(|_| randfixedsum(&mut r, 2, 1.2, 0.0, 1.0)[0])
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = ((x - 0.2) / 0.8).clamp(0.0, 1.0);
                (cdf - i as f64 / n).abs().max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        // Kolmogorov-Smirnov critical value at the 1% level
        assert!(d < 1.63 / n.sqrt(), "D = {d}");
    }

    #[test]
    fn fit_sum_respects_bounds() {
        let mut v = vec![0.1, 0.2, 0.3];
        fit_sum(&mut v, 0.001, &[0.15, 0.9, 0.9], 1.2);
        assert!((v.iter().sum::<f64>() - 1.2).abs() < 1e-12);
        assert!(v[0] <= 0.15);
    }

    #[test]
    fn seeded_generation_meets_targets() {
        let targets = Utilizations::new(0.4, 0.3, 0.5);
        let cfg = GeneratorConfig::new(2, 0.5, targets, DeadlineModel::Implicit);
        let set = generate_taskset(&cfg, &mut rng(42)).unwrap();
        assert!((3..=10).contains(&set.len()));
        let u = set.system_utilizations();
        assert!((u.lc_lo - 0.4).abs() <= 0.05);
        assert!((u.hc_lo - 0.3).abs() <= 0.05);
        assert!((u.hc_hi - 0.5).abs() <= 0.05);
    }

    #[test]
    fn all_hc_when_p_h_is_one() {
        let targets = Utilizations::new(0.0, 0.3, 0.6);
        let cfg = GeneratorConfig::new(4, 1.0, targets, DeadlineModel::Constrained);
        let set = generate_taskset(&cfg, &mut rng(5)).unwrap();
        assert_eq!(set.lo_tasks().count(), 0);
    }

    #[test]
    fn same_seed_same_set() {
        let targets = Utilizations::new(0.35, 0.25, 0.7);
        let cfg = GeneratorConfig::new(4, 0.5, targets, DeadlineModel::Constrained);
        let a = generate_taskset(&cfg, &mut rng(9)).unwrap();
        let b = generate_taskset(&cfg, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn u_b_examples() {
        assert!((u_b(&Utilizations::new(0.4, 0.3, 0.5)) - 0.7).abs() < 1e-12);
        assert_eq!(u_b(&Utilizations::new(0.0, 0.0, 0.9)), 0.9);
        assert!((u_b(&Utilizations::new(0.49, 0.5, 0.99)) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = GeneratorConfig::new(2, 0.5, Utilizations::new(0.1, 0.5, 0.3), DeadlineModel::Implicit);
        assert!(generate_taskset(&cfg, &mut rng(0)).is_err());
        cfg.targets = Utilizations::new(0.1, 0.1, 0.3);
        cfg.p_h = 1.5;
        assert!(cfg.validate().is_err());
    }
}
