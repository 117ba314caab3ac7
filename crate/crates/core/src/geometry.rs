//! Unit-cell phase layouts: a laminate slab normal to the x axis, or a
//! centered disk inclusion.

use crate::error::{Error, Result};
use crate::material::Phase;
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Laminate,
    Disk,
}

/// Two-phase layout of the unit cell `Y = (0,1)^2` with phase-1 volume
/// fraction `theta1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroGeometry {
    kind: GeometryKind,
    theta1: f64,
}

impl MicroGeometry {
    /// Phase-1 slab `{ |y1 - 1/2| < theta1/2 }` sandwiched between phase-2 layers.
    pub fn laminate(theta1: f64) -> Result<Self> {
        Self::new(GeometryKind::Laminate, theta1)
    }

    /// Phase-1 disk of area `theta1` centered at (1/2, 1/2). The closure of
    /// the disk must stay strictly inside the cell, i.e. `r < 1/2`.
    pub fn disk(theta1: f64) -> Result<Self> {
        Self::new(GeometryKind::Disk, theta1)
    }

    pub fn new(kind: GeometryKind, theta1: f64) -> Result<Self> {
        if !(theta1.is_finite() && theta1 > 0.0 && theta1 < 1.0) {
            return Err(Error::invalid(
                "geometry.theta1",
                format!("must lie in (0,1), got {theta1}"),
            ));
        }
        if kind == GeometryKind::Disk {
            let r = (theta1 / std::f64::consts::PI).sqrt();
            if r >= 0.5 {
                return Err(Error::invalid(
                    "geometry.theta1",
                    format!("disk radius {r:.4} must be below 1/2; need theta1 < pi/4"),
                ));
            }
        }
        Ok(MicroGeometry { kind, theta1 })
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn theta2(&self) -> f64 {
        1.0 - self.theta1
    }

    pub fn theta(&self, phase: Phase) -> f64 {
        match phase {
            Phase::One => self.theta1(),
            Phase::Two => self.theta2(),
        }
    }

    pub fn disk_radius(&self) -> Option<f64> {
        match self.kind {
            GeometryKind::Disk => Some((self.theta1 / std::f64::consts::PI).sqrt()),
            GeometryKind::Laminate => None,
        }
    }

    /// Phase of the point `y`, wrapped into the unit cell first, so every
    /// input is valid.
    pub fn indicator(&self, y: Vec2) -> Phase {
        let y = wrap_periodic(y, 1.0);
        match self.kind {
            GeometryKind::Laminate => {
                if (y.x - 0.5).abs() < 0.5 * self.theta1 {
                    Phase::One
                } else {
                    Phase::Two
                }
            }
            GeometryKind::Disk => {
                let r = (self.theta1 / std::f64::consts::PI).sqrt();
                let d = y - Vec2::new(0.5, 0.5);
                if d.norm_sq() < r * r {
                    Phase::One
                } else {
                    Phase::Two
                }
            }
        }
    }
}

/// Fractional part of `x / eps` componentwise, in `[0,1)^2`. Evaluating the
/// oscillatory indicator at a physical point `x` is `indicator(wrap_periodic(x, eps))`.
pub fn wrap_periodic(x: Vec2, eps: f64) -> Vec2 {
    debug_assert!(eps > 0.0);
    Vec2::new(frac01(x.x / eps), frac01(x.y / eps))
}

fn frac01(t: f64) -> f64 {
    let f = t - t.floor();
    // Rounding can push the fractional part up to exactly 1.0.
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn laminate_indicator_examples() {
        let g = MicroGeometry::laminate(0.5).unwrap();
        assert_eq!(g.indicator(Vec2::new(0.5, 0.3)), Phase::One);
        assert_eq!(g.indicator(Vec2::new(0.05, 0.9)), Phase::Two);
    }

    #[test]
    fn disk_indicator_examples() {
        // r = sqrt(0.25 / pi) ~ 0.2821
        let g = MicroGeometry::disk(0.25).unwrap();
        assert_eq!(g.indicator(Vec2::new(0.5, 0.5)), Phase::One);
        assert_eq!(g.indicator(Vec2::new(0.9, 0.9)), Phase::Two);
    }

    #[test]
    fn disk_must_fit_in_cell() {
        assert!(MicroGeometry::disk(0.7).is_ok()); // r ~ 0.472
        assert!(MicroGeometry::disk(0.79).is_err()); // r > 1/2
        assert!(MicroGeometry::laminate(0.0).is_err());
        assert!(MicroGeometry::laminate(1.0).is_err());
    }

    #[test]
    fn wrap_examples() {
        let w = wrap_periodic(Vec2::new(0.75, 0.25), 0.5);
        assert_eq!(w, Vec2::new(0.5, 0.5));
        assert_eq!(wrap_periodic(Vec2::ZERO, 0.3), Vec2::ZERO);
        assert_eq!(wrap_periodic(Vec2::new(1.0, 1.0), 0.25), Vec2::ZERO);
    }

    #[test]
    fn quasi_random_volume_fraction() {
        // Halton sequence in bases 2 and 3; the empirical fraction must match
        // theta1 within three standard errors of the Bernoulli estimate.
        fn halton(mut i: u64, base: u64) -> f64 {
            let mut f = 1.0;
            let mut r = 0.0;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        }
        let n = 1_000_000u64;
        for geom in [
            MicroGeometry::laminate(0.37).unwrap(),
            MicroGeometry::disk(0.25).unwrap(),
        ] {
            let mut hits = 0u64;
            for i in 1..=n {
                let y = Vec2::new(halton(i, 2), halton(i, 3));
                if geom.indicator(y) == Phase::One {
                    hits += 1;
                }
            }
            let est = hits as f64 / n as f64;
            let theta = geom.theta1();
            let se = (theta * (1.0 - theta) / n as f64).sqrt();
            assert!(
                (est - theta).abs() <= 3.0 * se,
                "volume fraction estimate {est} vs {theta} (3 se = {})",
                3.0 * se
            );
        }
    }

    proptest! {
        #[test]
        fn wrap_lands_in_unit_cell(x in -50.0f64..50.0, y in -50.0f64..50.0, eps in 0.01f64..4.0) {
            let w = wrap_periodic(Vec2::new(x, y), eps);
            prop_assert!((0.0..1.0).contains(&w.x));
            prop_assert!((0.0..1.0).contains(&w.y));
        }

        #[test]
        fn indicator_partitions_the_cell(x in -5.0f64..5.0, y in -5.0f64..5.0, theta in 0.05f64..0.7) {
            for geom in [MicroGeometry::laminate(theta).unwrap(), MicroGeometry::disk(theta).unwrap()] {
                let ph = geom.indicator(Vec2::new(x, y));
                // chi1 + chi2 = 1 pointwise: exactly one phase is reported.
                prop_assert!(ph == Phase::One || ph == Phase::Two);
            }
        }

        #[test]
        fn indicator_is_periodic(x in 0.0f64..1.0, y in 0.0f64..1.0, shift in -3i32..3) {
            let geom = MicroGeometry::disk(0.3).unwrap();
            let a = geom.indicator(Vec2::new(x, y));
            let b = geom.indicator(Vec2::new(x + shift as f64, y - shift as f64));
            prop_assert_eq!(a, b);
        }
    }
}
