//! EDF-VD utilization test for implicit-deadline tasks on one processor.

use crate::error::Error;
use crate::task::{Task, Time, Utilizations};

/// Slack allowed on utilization comparisons, so that boundary equalities
/// computed in binary floating point are still accepted.
pub const UTIL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdfVdVerdict {
    pub schedulable: bool,
    /// Virtual-deadline scaling factor. `Some(1.0)` when plain EDF already
    /// suffices; `None` when unschedulable.
    pub scaling: Option<f64>,
}

impl EdfVdVerdict {
    const REJECT: EdfVdVerdict = EdfVdVerdict {
        schedulable: false,
        scaling: None,
    };
}

/// `U_LL <= (1 - U_HH) / (1 - (U_HH - U_HL))`, preceded by the plain EDF
/// check.
pub fn ratio_form(u: &Utilizations) -> bool {
    if u.lc_lo + u.hc_hi <= 1.0 + UTIL_EPS {
        return true;
    }
    if u.hc_hi >= 1.0 || u.lc_lo >= 1.0 {
        return false;
    }
    u.lc_lo <= (1.0 - u.hc_hi) / (1.0 - u.difference()) + UTIL_EPS
}

/// `x * U_LL + U_HH <= 1` with `x = U_HL / (1 - U_LL)`, preceded by the
/// plain EDF check. Returns the scaling factor on success.
pub fn scaled_form(u: &Utilizations) -> Option<f64> {
    if u.lc_lo + u.hc_hi <= 1.0 + UTIL_EPS {
        return Some(1.0);
    }
    if u.hc_hi >= 1.0 || u.lc_lo >= 1.0 {
        return None;
    }
    let x = u.hc_lo / (1.0 - u.lc_lo);
    (x * u.lc_lo + u.hc_hi <= 1.0 + UTIL_EPS).then_some(x)
}

/// Verdict from per-processor utilizations.
pub fn verdict(u: &Utilizations) -> EdfVdVerdict {
    let scaling = scaled_form(u);
    debug_assert_eq!(
        scaling.is_some(),
        ratio_form(u),
        "EDF-VD inequality forms disagree on {u:?}"
    );
    match scaling {
        Some(x) => EdfVdVerdict {
            schedulable: true,
            scaling: Some(x),
        },
        None => EdfVdVerdict::REJECT,
    }
}

/// EDF-VD schedulability of the tasks assigned to one processor.
pub fn edfvd_schedulable(tasks: &[Task]) -> Result<EdfVdVerdict, Error> {
    if let Some(t) = tasks.iter().find(|t| !t.is_implicit()) {
        return Err(Error::UnsupportedDeadlineModel {
            test: "EDF-VD",
            model: if t.deadline() < t.period() {
                crate::task::DeadlineModel::Constrained
            } else {
                crate::task::DeadlineModel::Implicit
            },
        });
    }
    Ok(verdict(&Utilizations::of(tasks)))
}

/// Integer virtual deadlines `max(floor(x * T), C_L)` for HC tasks; `None`
/// for LC tasks, which keep their real deadline.
pub fn edfvd_virtual_deadlines(tasks: &[Task], x: f64) -> Vec<Option<Time>> {
    tasks
        .iter()
        .map(|t| t.is_hi().then(|| virtual_deadline(t, x)))
        .collect()
}

fn virtual_deadline(t: &Task, x: f64) -> Time {
    // x * T is computed in floating point; snap near-integers before flooring
    let scaled = x * t.period() as f64;
    let v = (scaled + 1e-9).floor() as Time;
    v.clamp(t.wcet_lo(), t.deadline())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::Criticality;

    fn u(ll: f64, hl: f64, hh: f64) -> Utilizations {
        Utilizations::new(ll, hl, hh)
    }

    #[test]
    fn empty_set_is_plain_edf() {
        let v = edfvd_schedulable(&[]).unwrap();
        assert!(v.schedulable);
        assert_eq!(v.scaling, Some(1.0));
    }

    #[test]
    fn scaled_example_accepts_with_half() {
        let v = verdict(&u(0.4, 0.3, 0.7));
        assert!(v.schedulable);
        let x = v.scaling.unwrap();
        assert!((x - 0.5).abs() < 1e-12);
        assert!(x * 0.4 + 0.7 <= 1.0);
        assert!(ratio_form(&u(0.4, 0.3, 0.7)));
    }

    #[test]
    fn tight_example_rejects() {
        assert!(!verdict(&u(0.6, 0.3, 0.8)).schedulable);
        assert!(!ratio_form(&u(0.6, 0.3, 0.8)));
    }

    #[test]
    fn from_tasks() {
        // U_LL = 0.4, U_HL = 0.3, U_HH = 0.7
        let tasks = [
            Task::hi(0, 10, 3, 7).unwrap(),
            Task::lo(1, 10, 4).unwrap(),
        ];
        let v = edfvd_schedulable(&tasks).unwrap();
        assert!(v.schedulable);
        assert!((v.scaling.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_constrained_input() {
        let t = Task::new(0, 10, Criticality::Lo, 4, 4, 8).unwrap();
        assert!(edfvd_schedulable(&[t]).is_err());
    }

    #[test]
    fn virtual_deadlines() {
        let t = Task::hi(0, 10, 2, 4).unwrap();
        let l = Task::lo(1, 10, 1).unwrap();
        assert_eq!(edfvd_virtual_deadlines(&[t, l], 1.0), vec![Some(10), None]);
        assert_eq!(edfvd_virtual_deadlines(&[t], 0.5), vec![Some(5)]);
        let t3 = Task::hi(0, 10, 3, 4).unwrap();
        assert_eq!(edfvd_virtual_deadlines(&[t3], 0.1), vec![Some(3)]);
    }
}
