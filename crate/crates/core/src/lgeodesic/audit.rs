//! The comparison lower bound for `Q` and a process-wide record of how every
//! computed `Q` fared against it.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::geometry::{ChartPoint, MetricModel};
use crate::linalg::Vect;

/// `e^{-2 C0 (tau2 - tau1)} rho_{tau1}^2 / (2 (sqrt tau2 - sqrt tau1))
///  - (2/3) d C0 (tau2^{3/2} - tau1^{3/2})`.
pub fn q_lower_bound(model: &dyn MetricModel, tau1: f64, tau2: f64, x: &ChartPoint, y: &ChartPoint, c0: f64) -> f64 {
    bound(model, tau1, tau2, &x.coords, &y.coords, c0)
}

fn bound(model: &dyn MetricModel, tau1: f64, tau2: f64, x: &Vect, y: &Vect, c0: f64) -> f64 {
    let rho = model.distance(tau1, x, y);
    let d = model.dim() as f64;
    (-2.0 * c0 * (tau2 - tau1)).exp() * rho * rho / (2.0 * (tau2.sqrt() - tau1.sqrt()))
        - 2.0 / 3.0 * d * c0 * (tau2.powf(1.5) - tau1.powf(1.5))
}

pub const AUDIT_SLACK: f64 = -1e-6;

static CHECKED: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);
static WORST_SLACK: AtomicU64 = AtomicU64::new(f64::INFINITY.to_bits());

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBoundAudit {
    pub checked: u64,
    pub violations: u64,
    pub worst_slack: f64,
}

/// Counts of `Q` evaluations checked against the lower bound so far in this
/// process. Only exact Ricci flows are audited; the bound does not apply to
/// other metric families.
pub fn lower_bound_audit() -> LowerBoundAudit {
    LowerBoundAudit {
        checked: CHECKED.load(Ordering::SeqCst),
        violations: VIOLATIONS.load(Ordering::SeqCst),
        worst_slack: f64::from_bits(WORST_SLACK.load(Ordering::SeqCst)),
    }
}

pub(crate) fn record(model: &dyn MetricModel, tau1: f64, x: &Vect, y: &Vect, tau2: f64, q: f64) {
    if !model.exact_flow() {
        return;
    }
    let c0 = model.curvature_bound_on(0.0, tau2);
    let slack = q - bound(model, tau1, tau2, x, y, c0);
    CHECKED.fetch_add(1, Ordering::SeqCst);
    if slack < AUDIT_SLACK {
        VIOLATIONS.fetch_add(1, Ordering::SeqCst);
    }
    let _ = WORST_SLACK.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |bits| {
        (slack < f64::from_bits(bits)).then_some(slack.to_bits())
    });
}
