//! Randomized audits of the structure conditions of the constitutive law:
//! the constant-free monotonicity sign and the empirical continuity /
//! monotonicity ratios. The conditions hold with unspecified constants, so
//! the audit records observed extremes instead of asserting a particular
//! constant.

use crate::material::{Phase, PhaseParams};
use crate::vec2::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tolerance below which a monotonicity inner product counts as a sign violation.
pub const SIGN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditFailure {
    pub xi1: Vec2,
    pub xi2: Vec2,
    pub phase: u8,
    pub value: f64,
}

/// Outcome of the structure-condition audit of `A`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_samples: usize,
    pub seed: u64,
    pub sign_violations: usize,
    /// Max over samples of |A(xi1) - A(xi2)| divided by the continuity right
    /// side evaluated with C = 1.
    #[serde(rename = "conA_ratio_max")]
    pub con_a_ratio_max: f64,
    /// Max over samples of the monotonicity right side (C = 1) divided by the
    /// observed inner product; its reciprocal is the largest admissible C.
    #[serde(rename = "monA_ratio_max")]
    pub mon_a_ratio_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<AuditFailure>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.sign_violations == 0 && self.failure.is_none()
    }
}

/// Uniform sample from the disk of the given radius.
pub(crate) fn sample_disk(rng: &mut impl Rng, radius: f64) -> Vec2 {
    let r = radius * rng.gen::<f64>().sqrt();
    let a = rng.gen::<f64>() * std::f64::consts::TAU;
    Vec2::new(r * a.cos(), r * a.sin())
}

/// Checks `(A(y,xi1) - A(y,xi2), xi1 - xi2) >= 0` (constant free) on random
/// pairs with `|xi| <= 10` in both phases, and records the empirical extremes
/// of the continuity and monotonicity ratios.
pub fn audit_structure_conditions(
    params: &PhaseParams,
    n_samples: usize,
    seed: u64,
) -> AuditReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AuditReport {
        n_samples,
        seed,
        sign_violations: 0,
        con_a_ratio_max: 0.0,
        mon_a_ratio_max: 0.0,
        failure: None,
    };
    for _ in 0..n_samples {
        let xi1 = sample_disk(&mut rng, 10.0);
        let xi2 = sample_disk(&mut rng, 10.0);
        for phase in Phase::all() {
            let a1 = params.flux(phase, xi1);
            let a2 = params.flux(phase, xi2);
            let d = xi1 - xi2;
            let inner = (a1 - a2).dot(d);
            if inner < -SIGN_TOL {
                report.sign_violations += 1;
                if report.failure.is_none() {
                    report.failure = Some(AuditFailure {
                        xi1,
                        xi2,
                        phase: phase.index(),
                        value: inner,
                    });
                }
            }
            let dn = d.norm();
            if dn == 0.0 {
                continue;
            }
            let p = params.p(phase);
            let sum = xi1.norm() + xi2.norm();
            let con_rhs =
                dn.powf(params.alpha(phase)) * (1.0 + sum).powf(p - 1.0 - params.alpha(phase));
            if con_rhs > 0.0 {
                report.con_a_ratio_max = report.con_a_ratio_max.max((a1 - a2).norm() / con_rhs);
            }
            let mon_rhs = dn.powf(params.beta(phase)) * sum.powf(p - params.beta(phase));
            if inner > 0.0 && mon_rhs.is_finite() {
                report.mon_a_ratio_max = report.mon_a_ratio_max.max(mon_rhs / inner);
            }
        }
    }
    report
}
