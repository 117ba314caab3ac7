//! Two-phase power-law constitutive law `A(y, xi) = sigma(y) |xi|^(p(y)-2) xi`
//! together with its energy density and the regularized linearization used by
//! the Newton solvers.

use crate::error::{Error, Result};
use crate::vec2::{Mat2, Vec2};
use serde::{Deserialize, Serialize};

/// Phase label of a point of the unit cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub fn index(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }

    pub fn all() -> [Phase; 2] {
        [Phase::One, Phase::Two]
    }
}

/// The material pair `(sigma1, sigma2, p1, p2)` with the derived Holder
/// conjugates `q2 = p1/(p1-1)` and `q1 = p2/(p2-1)`.
///
/// Admissible exponents are `1 < p1 <= p2 <= 2` or `1 < p1 <= 2 <= p2`; as an
/// extension, `p1 == p2 > 2` is accepted so that a homogeneous control medium
/// of arbitrary exponent can be expressed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    sigma1: f64,
    sigma2: f64,
    p1: f64,
    p2: f64,
    q1: f64,
    q2: f64,
}

impl PhaseParams {
    pub fn new(sigma1: f64, sigma2: f64, p1: f64, p2: f64) -> Result<Self> {
        if !(sigma1.is_finite() && sigma1 > 0.0) {
            return Err(Error::invalid(
                "params.sigma1",
                format!("must be positive and finite, got {sigma1}"),
            ));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::invalid(
                "params.sigma2",
                format!("must be positive and finite, got {sigma2}"),
            ));
        }
        if !(p1.is_finite() && p2.is_finite()) {
            return Err(Error::invalid(
                "params.p1",
                "exponents must be finite".to_string(),
            ));
        }
        let two_phase_ok = p1 > 1.0 && ((p1 <= p2 && p2 <= 2.0) || (p1 <= 2.0 && 2.0 <= p2));
        let homogeneous_ok = p1 > 1.0 && p1 == p2;
        if !(two_phase_ok || homogeneous_ok) {
            return Err(Error::invalid(
                "params.p1",
                format!("exponents must satisfy 1 < p1 <= p2 <= 2 or 1 < p1 <= 2 <= p2 (got p1 = {p1}, p2 = {p2})"),
            ));
        }
        Ok(PhaseParams {
            sigma1,
            sigma2,
            p1,
            p2,
            q1: p2 / (p2 - 1.0),
            q2: p1 / (p1 - 1.0),
        })
    }

    pub fn sigma(&self, phase: Phase) -> f64 {
        match phase {
            Phase::One => self.sigma1,
            Phase::Two => self.sigma2,
        }
    }

    pub fn p(&self, phase: Phase) -> f64 {
        match phase {
            Phase::One => self.p1,
            Phase::Two => self.p2,
        }
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Conjugate of `p2`.
    pub fn q1(&self) -> f64 {
        self.q1
    }

    /// Conjugate of `p1`.
    pub fn q2(&self) -> f64 {
        self.q2
    }

    /// Continuity exponent of the structure condition: `p - 1` in the
    /// sublinear range, `1` from `p = 2` on.
    pub fn alpha(&self, phase: Phase) -> f64 {
        let p = self.p(phase);
        if p <= 2.0 {
            p - 1.0
        } else {
            1.0
        }
    }

    /// Monotonicity exponent of the structure condition: `2` in the sublinear
    /// range, `p` from `p = 2` on.
    pub fn beta(&self, phase: Phase) -> f64 {
        let p = self.p(phase);
        if p <= 2.0 {
            2.0
        } else {
            p
        }
    }

    /// Flux `sigma |xi|^(p-2) xi` of the given phase; zero at `xi = 0`.
    pub fn flux(&self, phase: Phase, xi: Vec2) -> Vec2 {
        let n2 = xi.norm_sq();
        if n2 == 0.0 {
            return Vec2::ZERO;
        }
        let p = self.p(phase);
        self.sigma(phase) * n2.powf(0.5 * (p - 2.0)) * xi
    }

    /// Energy density `sigma |xi|^p / p`, the potential of `flux`.
    pub fn energy_density(&self, phase: Phase, xi: Vec2) -> f64 {
        let n2 = xi.norm_sq();
        if n2 == 0.0 {
            return 0.0;
        }
        let p = self.p(phase);
        self.sigma(phase) / p * n2.powf(0.5 * p)
    }

    /// Regularized flux `sigma (delta^2 + |xi|^2)^((p-2)/2) xi`.
    pub fn flux_regularized(&self, phase: Phase, xi: Vec2, delta: f64) -> Vec2 {
        let s2 = delta * delta + xi.norm_sq();
        if s2 == 0.0 || xi == Vec2::ZERO {
            return Vec2::ZERO;
        }
        let p = self.p(phase);
        self.sigma(phase) * s2.powf(0.5 * (p - 2.0)) * xi
    }

    /// Potential of the regularized flux, `sigma (delta^2 + |xi|^2)^(p/2) / p`.
    pub fn energy_density_regularized(&self, phase: Phase, xi: Vec2, delta: f64) -> f64 {
        let s2 = delta * delta + xi.norm_sq();
        if s2 == 0.0 {
            return 0.0;
        }
        let p = self.p(phase);
        self.sigma(phase) / p * s2.powf(0.5 * p)
    }

    /// Exact derivative of the regularized flux with respect to `xi`:
    /// `sigma s^((p-2)/2) I + sigma (p-2) s^((p-4)/2) xi xi^T` with
    /// `s = delta^2 + |xi|^2`. Symmetric, and positive definite whenever
    /// `delta > 0` (or `p >= 2`).
    pub fn flux_jacobian_regularized(&self, phase: Phase, xi: Vec2, delta: f64) -> Result<Mat2> {
        let p = self.p(phase);
        let sigma = self.sigma(phase);
        let n2 = xi.norm_sq();
        if delta == 0.0 && p < 2.0 && n2 == 0.0 {
            return Err(Error::DegeneratePoint);
        }
        let s2 = delta * delta + n2;
        if n2 == 0.0 {
            // The rank-one term vanishes; s2 = delta^2 here.
            let a = if s2 == 0.0 && p == 2.0 {
                sigma
            } else {
                sigma * s2.powf(0.5 * (p - 2.0))
            };
            return Ok(Mat2::scaled_identity(a));
        }
        let a = sigma * s2.powf(0.5 * (p - 2.0));
        let b = sigma * (p - 2.0) * s2.powf(0.5 * (p - 4.0));
        Ok(Mat2::scaled_identity(a).add_outer(xi, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn conjugate_exponents() {
        let pp = PhaseParams::new(1.0, 2.0, 1.5, 2.5).unwrap();
        assert!((1.0 / pp.p1() + 1.0 / pp.q2() - 1.0).abs() < 1e-12);
        assert!((1.0 / pp.p2() + 1.0 / pp.q1() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponent_regime_is_enforced() {
        assert!(PhaseParams::new(1.0, 1.0, 1.5, 2.0).is_ok());
        assert!(PhaseParams::new(1.0, 1.0, 1.2, 1.7).is_ok());
        assert!(PhaseParams::new(1.0, 1.0, 1.5, 3.0).is_ok());
        assert!(PhaseParams::new(1.0, 1.0, 3.0, 3.0).is_ok()); // homogeneous extension
        assert!(PhaseParams::new(1.0, 1.0, 2.5, 3.0).is_err());
        assert!(PhaseParams::new(1.0, 1.0, 1.0, 2.0).is_err());
        assert!(PhaseParams::new(1.0, 1.0, 2.0, 1.5).is_err());
        assert!(PhaseParams::new(-1.0, 1.0, 1.5, 2.0).is_err());
        assert!(PhaseParams::new(1.0, 0.0, 1.5, 2.0).is_err());
    }

    #[test]
    fn flux_linear_case_is_identity_scaling() {
        let pp = PhaseParams::new(1.0, 1.0, 2.0, 2.0).unwrap();
        let f = pp.flux(Phase::One, Vec2::new(3.0, 4.0));
        assert_relative_eq!(f.x, 3.0);
        assert_relative_eq!(f.y, 4.0);
    }

    #[test]
    fn flux_hand_value_sublinear() {
        // sigma = 2, p = 1.5, xi = e1: 2 * 1^(-0.5) * (1, 0) = (2, 0)
        let pp = PhaseParams::new(2.0, 1.0, 1.5, 2.0).unwrap();
        let f = pp.flux(Phase::One, Vec2::new(1.0, 0.0));
        assert_relative_eq!(f.x, 2.0, max_relative = 1e-15);
        assert_relative_eq!(f.y, 0.0);
    }

    #[test]
    fn flux_vanishes_at_zero() {
        for (p1, p2) in [(1.5, 2.0), (1.5, 2.5), (2.0, 2.0)] {
            let pp = PhaseParams::new(0.7, 3.0, p1, p2).unwrap();
            for ph in Phase::all() {
                assert_eq!(pp.flux(ph, Vec2::ZERO), Vec2::ZERO);
            }
        }
    }

    #[test]
    fn energy_hand_values() {
        let lin = PhaseParams::new(1.0, 1.0, 2.0, 2.0).unwrap();
        assert_relative_eq!(lin.energy_density(Phase::One, Vec2::new(3.0, 4.0)), 12.5);
        let sub = PhaseParams::new(2.0, 1.0, 1.5, 2.0).unwrap();
        assert_relative_eq!(
            sub.energy_density(Phase::One, Vec2::new(1.0, 0.0)),
            4.0 / 3.0,
            max_relative = 1e-15
        );
        assert_eq!(sub.energy_density(Phase::Two, Vec2::ZERO), 0.0);
    }

    #[test]
    fn jacobian_hand_value_and_degeneracy() {
        let pp = PhaseParams::new(1.0, 1.0, 1.5, 2.0).unwrap();
        // p = 1.5, xi aligned with e1: tangential eigenvalue (p-1)|xi|^(p-2) = 0.5,
        // normal eigenvalue |xi|^(p-2) = 1.
        let j = pp
            .flux_jacobian_regularized(Phase::One, Vec2::new(1.0, 0.0), 0.0)
            .unwrap();
        assert_relative_eq!(j.a11, 0.5, max_relative = 1e-14);
        assert_relative_eq!(j.a22, 1.0, max_relative = 1e-14);
        assert_relative_eq!(j.a12, 0.0);
        assert!(pp
            .flux_jacobian_regularized(Phase::One, Vec2::ZERO, 0.0)
            .is_err());
        assert!(pp
            .flux_jacobian_regularized(Phase::One, Vec2::ZERO, 1e-3)
            .is_ok());
        // Linear law: sigma * identity for any delta.
        let lin = PhaseParams::new(2.5, 1.0, 2.0, 2.0).unwrap();
        let j = lin
            .flux_jacobian_regularized(Phase::One, Vec2::new(0.3, -0.7), 0.0)
            .unwrap();
        assert_relative_eq!(j.a11, 2.5);
        assert_relative_eq!(j.a22, 2.5);
        assert_relative_eq!(j.a12, 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for (p1, p2) in [(1.5, 2.0), (1.5, 2.5), (1.3, 1.8), (2.0, 3.0)] {
            let pp = PhaseParams::new(1.3, 2.1, p1, p2).unwrap();
            for _ in 0..25 {
                let xi = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                if xi.norm() < 1e-3 {
                    continue;
                }
                for ph in Phase::all() {
                    for delta in [0.0, 1e-2] {
                        if delta == 0.0 && pp.p(ph) < 2.0 && xi.norm() < 1e-2 {
                            continue;
                        }
                        let j = pp.flux_jacobian_regularized(ph, xi, delta).unwrap();
                        let h = 1e-6 * xi.norm().max(1.0);
                        for (dir, col) in [(Vec2::new(h, 0.0), 0), (Vec2::new(0.0, h), 1)] {
                            let fp = pp.flux_regularized(ph, xi + dir, delta);
                            let fm = pp.flux_regularized(ph, xi - dir, delta);
                            let fd = (fp - fm) * (0.5 / h);
                            let (jx, jy) = if col == 0 {
                                (j.a11, j.a21)
                            } else {
                                (j.a12, j.a22)
                            };
                            assert_relative_eq!(fd.x, jx, max_relative = 1e-5, epsilon = 1e-9);
                            assert_relative_eq!(fd.y, jy, max_relative = 1e-5, epsilon = 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn jacobian_is_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.5).unwrap();
        for _ in 0..100 {
            let xi = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            for ph in Phase::all() {
                let j = pp.flux_jacobian_regularized(ph, xi, 1e-4).unwrap();
                assert_relative_eq!(j.a12, j.a21);
            }
        }
    }
}
