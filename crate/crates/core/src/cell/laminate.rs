//! Exact 1D reduction of the cell problem for the laminate geometry.
//!
//! With the layer normal along x, the corrector depends on y1 only. Writing
//! `s` for the tangential gradient magnitude and `t_i` for the corrected
//! normal component in phase i, the normal flux `g_i(t) = sigma_i
//! (t^2 + s^2)^((p_i - 2)/2) t` is constant across layers, and the zero-mean
//! constraint gives `theta1 t1 + theta2 t2 = xi_x`. Both maps are strictly
//! increasing, so two nested monotone root finds solve the problem to machine
//! precision.

use super::{CellData, CellSolution, LaminateData};
use crate::error::{Error, Result};
use crate::material::{Phase, PhaseParams};
use crate::vec2::Vec2;

/// Normal flux through a layer with parameters `(sigma, p)`, tangential
/// magnitude `s` and corrected normal component `t`, plus its t-derivative
/// `sigma (t^2 + s^2)^((p-4)/2) ((p-1) t^2 + s^2) > 0`.
fn normal_flux(sigma: f64, p: f64, s: f64, t: f64) -> (f64, f64) {
    let r2 = t * t + s * s;
    if r2 == 0.0 {
        // Derivative blows up for p < 2; callers avoid it via closed forms.
        let d = if p == 2.0 {
            sigma
        } else if p > 2.0 {
            0.0
        } else {
            f64::INFINITY
        };
        return (0.0, d);
    }
    let g = sigma * r2.powf(0.5 * (p - 2.0)) * t;
    let d = sigma * r2.powf(0.5 * (p - 4.0)) * ((p - 1.0) * t * t + s * s);
    (g, d)
}

/// Inverts `t -> normal_flux(t)` for `c >= 0` on `t >= 0`.
fn invert_normal_flux(sigma: f64, p: f64, s: f64, c: f64) -> Result<f64> {
    debug_assert!(c >= 0.0);
    if c == 0.0 {
        return Ok(0.0);
    }
    if s == 0.0 {
        // g(t) = sigma t^(p-1) has a closed-form inverse.
        return Ok((c / sigma).powf(1.0 / (p - 1.0)));
    }
    let mut hi = s.max((c / sigma).powf(1.0 / (p - 1.0))).max(1e-12);
    let mut guard = 0;
    while normal_flux(sigma, p, s, hi).0 < c {
        hi *= 2.0;
        guard += 1;
        if guard > 400 {
            return Err(Error::RootFind("normal flux bracket did not close".into()));
        }
    }
    monotone_root(0.0, hi, |t| {
        let (g, d) = normal_flux(sigma, p, s, t);
        (g - c, d)
    })
}

/// Safeguarded Newton on a strictly increasing function with `f(lo) <= 0 <= f(hi)`.
fn monotone_root(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> (f64, f64)) -> Result<f64> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let (v, d) = f(x);
        if v == 0.0 {
            return Ok(x);
        }
        if v > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
            return Ok(0.5 * (lo + hi));
        }
        let newton = x - v / d;
        x = if d.is_finite() && d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(0.5 * (lo + hi))
}

/// Solves the laminate cell problem exactly (up to root-find precision).
pub fn solve_cell_laminate(
    params: &PhaseParams,
    theta1: f64,
    xi: Vec2,
    tol: f64,
) -> Result<CellSolution> {
    if !(theta1 > 0.0 && theta1 < 1.0) {
        return Err(Error::invalid(
            "geometry.theta1",
            format!("must lie in (0,1), got {theta1}"),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(
            "solver.tol",
            format!("must be positive, got {tol}"),
        ));
    }
    if !xi.is_finite() {
        return Err(Error::invalid("experiment.xi", "components must be finite"));
    }
    let theta2 = 1.0 - theta1;
    let s = xi.y.abs();
    let (s1, p1) = (params.sigma(Phase::One), params.p(Phase::One));
    let (s2, p2) = (params.sigma(Phase::Two), params.p(Phase::Two));

    let (c, t1, t2) = if xi.x == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        let target = xi.x.abs();
        // h(c) = theta1 t1(c) + theta2 t2(c) is increasing; picking c at the
        // larger of the two single-phase fluxes makes h(c) >= target.
        let mut hi = normal_flux(s1, p1, s, target)
            .0
            .max(normal_flux(s2, p2, s, target).0);
        let compat = |c: f64| -> Result<(f64, f64, f64, f64)> {
            let t1 = invert_normal_flux(s1, p1, s, c)?;
            let t2 = invert_normal_flux(s2, p2, s, c)?;
            let d1 = normal_flux(s1, p1, s, t1).1;
            let d2 = normal_flux(s2, p2, s, t2).1;
            let deriv = theta1 / d1 + theta2 / d2;
            Ok((theta1 * t1 + theta2 * t2 - target, deriv, t1, t2))
        };
        let mut guard = 0;
        while compat(hi)?.0 < 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(Error::RootFind(
                    "flux bracket for the compatibility equation did not close".into(),
                ));
            }
        }
        let mut lo = 0.0f64;
        let mut c = 0.5 * hi;
        let mut best = compat(c)?;
        for _ in 0..300 {
            if best.0.abs() <= 1e-15 * target.max(1.0) {
                break;
            }
            if best.0 > 0.0 {
                hi = c;
            } else {
                lo = c;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
            let newton = c - best.0 / best.1;
            c = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            best = compat(c)?;
        }
        let sign = xi.x.signum();
        (sign * c, sign * best.2, sign * best.3)
    };

    let p1v = Vec2::new(t1, xi.y);
    let p2v = Vec2::new(t2, xi.y);
    let f1 = params.flux(Phase::One, p1v);
    let f2 = params.flux(Phase::Two, p2v);
    let flux_defect = (f1.x - f2.x).abs();
    let compat_defect = (theta1 * t1 + theta2 * t2 - xi.x).abs();
    let residual = flux_defect.max(compat_defect);
    if residual > tol {
        // The maps are monotone, so this indicates a bug rather than a hard problem.
        return Err(Error::RootFind(format!(
            "laminate residual {residual:.3e} exceeds tolerance {tol:.3e}"
        )));
    }
    let data = LaminateData {
        theta1,
        t1,
        t2,
        flux_c: c,
        p1v,
        p2v,
        f1,
        f2,
        w1: params.energy_density(Phase::One, p1v),
        w2: params.energy_density(Phase::Two, p2v),
    };
    Ok(CellSolution::new(xi, residual, CellData::Laminate(data)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::cell_residual;
    use approx::assert_relative_eq;

    const TOL: f64 = 1e-9;

    #[test]
    fn zero_gradient_gives_zero_corrector() {
        let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
        let sol = solve_cell_laminate(&pp, 0.5, Vec2::ZERO, TOL).unwrap();
        assert_eq!(sol.corrector_value(Vec2::new(0.1, 0.9)), Vec2::ZERO);
        assert_eq!(sol.b(), Vec2::ZERO);
        assert_eq!(sol.energy(), 0.0);
        assert_eq!(sol.upsilon_l2(), 0.0);
    }

    #[test]
    fn homogeneous_medium_has_no_corrector() {
        let pp = PhaseParams::new(2.0, 2.0, 1.7, 1.7).unwrap();
        let xi = Vec2::new(0.8, -0.5);
        let sol = solve_cell_laminate(&pp, 0.3, xi, TOL).unwrap();
        assert_relative_eq!(
            sol.corrector_value(Vec2::new(0.5, 0.2)).x,
            xi.x,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            sol.corrector_value(Vec2::new(0.02, 0.2)).x,
            xi.x,
            max_relative = 1e-12
        );
        assert!(sol.upsilon_l2() < 1e-12);
    }

    #[test]
    fn linear_laminate_closed_form() {
        // p1 = p2 = 2, sigma = (1, 2), theta = 1/2: normal flux is the
        // harmonic mean 4/3, with t1 = 4/3 and t2 = 2/3.
        let pp = PhaseParams::new(1.0, 2.0, 2.0, 2.0).unwrap();
        let sol = solve_cell_laminate(&pp, 0.5, Vec2::new(1.0, 0.0), TOL).unwrap();
        let (t1, t2) = match &sol.data {
            CellData::Laminate(l) => (l.t1, l.t2),
            _ => unreachable!(),
        };
        assert_relative_eq!(t1, 4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(t2, 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(sol.b().x, 4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(sol.b().y, 0.0);
        // Arithmetic mean in the tangential direction.
        let sol = solve_cell_laminate(&pp, 0.5, Vec2::new(0.0, 1.0), TOL).unwrap();
        assert_relative_eq!(sol.b().y, 1.5, epsilon = 1e-12);
        assert_relative_eq!(sol.b().x, 0.0);
        // Homogenized energy at e1 is xi . b / 2 = 2/3 in the linear case.
        let sol = solve_cell_laminate(&pp, 0.5, Vec2::new(1.0, 0.0), TOL).unwrap();
        assert_relative_eq!(sol.energy(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn flux_continuity_and_mean_hold_for_benchmark_media() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (p1, p2) in [(1.5, 2.0), (1.5, 2.5), (1.2, 1.9)] {
            let pp = PhaseParams::new(1.0, 3.0, p1, p2).unwrap();
            for _ in 0..40 {
                let xi = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                let sol = solve_cell_laminate(&pp, 0.4, xi, TOL).unwrap();
                assert!(cell_residual(&sol) <= TOL);
                let m = sol.mean_p();
                assert!((m - xi).norm() <= 1e-10, "mean {m:?} vs {xi:?}");
            }
        }
    }

    #[test]
    fn corrector_is_periodic_and_layerwise() {
        let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
        let sol = solve_cell_laminate(&pp, 0.5, Vec2::new(1.0, 0.5), TOL).unwrap();
        let y = Vec2::new(0.4, 0.77);
        assert_eq!(
            sol.corrector_value(y),
            sol.corrector_value(y + Vec2::new(1.0, 0.0))
        );
        assert_eq!(
            sol.corrector_value(y),
            sol.corrector_value(Vec2::new(0.4, 0.13))
        );
        // Value depends only on the phase of y1.
        assert_eq!(
            sol.corrector_value(Vec2::new(0.3, 0.1)),
            sol.corrector_value(Vec2::new(0.7, 0.9))
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
        assert!(solve_cell_laminate(&pp, 0.0, Vec2::new(1.0, 0.0), TOL).is_err());
        assert!(solve_cell_laminate(&pp, 1.0, Vec2::new(1.0, 0.0), TOL).is_err());
        assert!(solve_cell_laminate(&pp, 0.5, Vec2::new(f64::NAN, 0.0), TOL).is_err());
    }
}
