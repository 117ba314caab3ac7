//! The homogenized constitutive map `b(xi)` (the cell average of the flux at
//! the corrector) and the homogenized energy density: pointwise evaluation,
//! tabulation over a gradient grid with bilinear interpolation, and
//! randomized audits of the structure of `b` and of the corrector integral
//! bounds.

use crate::audit::{sample_disk, AuditFailure};
use crate::cell::{solve_cell, CellSolution};
use crate::error::{Error, Result};
use crate::geometry::MicroGeometry;
use crate::material::PhaseParams;
use crate::newton::SolverSettings;
use crate::vec2::{Mat2, Vec2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Evaluates `b(xi)` by solving one cell problem.
pub fn b_eval(
    params: &PhaseParams,
    geom: &MicroGeometry,
    xi: Vec2,
    settings: &SolverSettings,
) -> Result<Vec2> {
    Ok(solve_cell(params, geom, xi, settings)?.b())
}

/// The homogenized energy density: the cell minimum of the heterogeneous
/// energy at imposed gradient `xi`. Its gradient in `xi` is `b`.
pub fn whom_energy(
    params: &PhaseParams,
    geom: &MicroGeometry,
    xi: Vec2,
    settings: &SolverSettings,
) -> Result<f64> {
    Ok(solve_cell(params, geom, xi, settings)?.energy())
}

/// `b` and the homogenized energy tabulated on a square gradient grid
/// `[-r, r]^2` with spacing `h_xi`, bilinear interpolation in between.
#[derive(Clone, Debug)]
pub struct HomogenizedMap {
    pub params: PhaseParams,
    pub geom: MicroGeometry,
    r: f64,
    h_xi: f64,
    /// Nodes per side (odd; the center node is xi = 0).
    m: usize,
    b_values: Vec<Vec2>,
    w_values: Vec<f64>,
    pub grid_n: usize,
    pub tol: f64,
}

impl HomogenizedMap {
    pub fn range(&self) -> f64 {
        self.r
    }

    pub fn spacing(&self) -> f64 {
        self.h_xi
    }

    pub fn nodes_per_side(&self) -> usize {
        self.m
    }

    pub fn node_xi(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            -self.r + i as f64 * self.h_xi,
            -self.r + j as f64 * self.h_xi,
        )
    }

    pub fn node_b(&self, i: usize, j: usize) -> Vec2 {
        self.b_values[j * self.m + i]
    }

    pub fn node_w(&self, i: usize, j: usize) -> f64 {
        self.w_values[j * self.m + i]
    }

    fn locate(&self, xi: Vec2) -> Result<(usize, usize, f64, f64)> {
        let bound = self.r + 1e-12;
        if !(xi.x.abs() <= bound && xi.y.abs() <= bound) {
            return Err(Error::OutOfTable(xi.x, xi.y, self.r));
        }
        let u = ((xi.x + self.r) / self.h_xi).clamp(0.0, (self.m - 1) as f64);
        let v = ((xi.y + self.r) / self.h_xi).clamp(0.0, (self.m - 1) as f64);
        let i0 = (u.floor() as usize).min(self.m - 2);
        let j0 = (v.floor() as usize).min(self.m - 2);
        Ok((i0, j0, u - i0 as f64, v - j0 as f64))
    }

    /// Rebuilds a map from parsed `(xi1, xi2, b1, b2, w)` rows; used by the
    /// table file reader.
    pub(crate) fn from_rows(
        params: PhaseParams,
        geom: MicroGeometry,
        r: f64,
        h_xi: f64,
        grid_n: usize,
        tol: f64,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let half = (r / h_xi).round() as usize;
        let m = 2 * half + 1;
        if rows.len() != m * m {
            return Err(Error::Format(format!(
                "expected {} table rows, got {}",
                m * m,
                rows.len()
            )));
        }
        let mut b_values = vec![Vec2::ZERO; m * m];
        let mut w_values = vec![0.0; m * m];
        for row in rows {
            let i = ((row[0] + r) / h_xi).round() as i64;
            let j = ((row[1] + r) / h_xi).round() as i64;
            if i < 0 || j < 0 || i >= m as i64 || j >= m as i64 {
                return Err(Error::Format(format!(
                    "table row ({}, {}) outside the grid",
                    row[0], row[1]
                )));
            }
            let idx = j as usize * m + i as usize;
            b_values[idx] = Vec2::new(row[2], row[3]);
            w_values[idx] = row[4];
        }
        Ok(HomogenizedMap {
            params,
            geom,
            r,
            h_xi,
            m,
            b_values,
            w_values,
            grid_n,
            tol,
        })
    }

    /// Bilinear interpolation of the tabulated flux; exact at nodes.
    pub fn b_interp(&self, xi: Vec2) -> Result<Vec2> {
        let (i0, j0, s, t) = self.locate(xi)?;
        let f = |i, j| self.node_b(i, j);
        Ok(f(i0, j0) * ((1.0 - s) * (1.0 - t))
            + f(i0 + 1, j0) * (s * (1.0 - t))
            + f(i0 + 1, j0 + 1) * (s * t)
            + f(i0, j0 + 1) * ((1.0 - s) * t))
    }

    /// Bilinear interpolation of the homogenized energy density.
    pub fn w_interp(&self, xi: Vec2) -> Result<f64> {
        let (i0, j0, s, t) = self.locate(xi)?;
        let f = |i, j| self.node_w(i, j);
        Ok(f(i0, j0) * (1.0 - s) * (1.0 - t)
            + f(i0 + 1, j0) * s * (1.0 - t)
            + f(i0 + 1, j0 + 1) * s * t
            + f(i0, j0 + 1) * (1.0 - s) * t)
    }

    /// Derivative of the interpolant within its grid cell (difference
    /// quotients of the tabulated values), symmetrized.
    pub fn jac_interp(&self, xi: Vec2) -> Result<Mat2> {
        let (i0, j0, s, t) = self.locate(xi)?;
        let f = |i, j| self.node_b(i, j);
        let inv_h = 1.0 / self.h_xi;
        let dx = (f(i0 + 1, j0) - f(i0, j0)) * ((1.0 - t) * inv_h)
            + (f(i0 + 1, j0 + 1) - f(i0, j0 + 1)) * (t * inv_h);
        let dy = (f(i0, j0 + 1) - f(i0, j0)) * ((1.0 - s) * inv_h)
            + (f(i0 + 1, j0 + 1) - f(i0 + 1, j0)) * (s * inv_h);
        Ok(Mat2 {
            a11: dx.x,
            a12: dy.x,
            a21: dx.y,
            a22: dy.y,
        }
        .symmetrize())
    }
}

/// Fills the table by independent cell solves. Odd symmetry `b(-xi) = -b(xi)`
/// halves the work and is spot-checked against fresh solves.
pub fn tabulate(
    params: &PhaseParams,
    geom: &MicroGeometry,
    r: f64,
    h_xi: f64,
    settings: &SolverSettings,
) -> Result<HomogenizedMap> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(
            "table.r",
            format!("must be positive, got {r}"),
        ));
    }
    if !(h_xi > 0.0 && h_xi <= r) {
        return Err(Error::invalid(
            "table.h_xi",
            format!("must lie in (0, r], got {h_xi}"),
        ));
    }
    let half = (r / h_xi).round().max(1.0) as usize;
    let r = half as f64 * h_xi;
    let m = 2 * half + 1;
    let center = half;

    // Upper half of the grid (j > center, or j == center and i >= center).
    let mut jobs = Vec::new();
    for j in center..m {
        for i in 0..m {
            if j == center && i < center {
                continue;
            }
            jobs.push((i, j));
        }
    }
    let solved: Result<Vec<((usize, usize), Vec2, f64)>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let xi = Vec2::new(-r + i as f64 * h_xi, -r + j as f64 * h_xi);
            if i == center && j == center {
                // P(y, 0) = 0, so b(0) = 0 and the energy vanishes.
                return Ok(((i, j), Vec2::ZERO, 0.0));
            }
            let sol = solve_cell(params, geom, xi, settings)?;
            Ok(((i, j), sol.b(), sol.energy()))
        })
        .collect();
    let solved = solved?;

    let mut b_values = vec![Vec2::ZERO; m * m];
    let mut w_values = vec![0.0; m * m];
    for ((i, j), b, w) in &solved {
        b_values[j * m + i] = *b;
        w_values[j * m + i] = *w;
    }
    for j in 0..m {
        for i in 0..m {
            if j > center || (j == center && i >= center) {
                continue;
            }
            let (mi, mj) = (m - 1 - i, m - 1 - j);
            b_values[j * m + i] = -b_values[mj * m + mi];
            w_values[j * m + i] = w_values[mj * m + mi];
        }
    }

    // Spot-check the odd symmetry on a couple of mirrored nodes.
    for (i, j) in [(m - 1, center), (center, m - 1)] {
        let xi = Vec2::new(-r + i as f64 * h_xi, -r + j as f64 * h_xi);
        let fresh = solve_cell(params, geom, -xi, settings)?.b();
        let mirrored = b_values[(m - 1 - j) * m + (m - 1 - i)];
        let scale = fresh.norm().max(1.0);
        if (fresh - mirrored).norm() > 1e3 * settings.tol.max(1e-12) * scale {
            return Err(Error::Format(format!(
                "odd symmetry violated at xi = ({}, {}): {fresh:?} vs {mirrored:?}",
                -xi.x, -xi.y
            )));
        }
    }

    Ok(HomogenizedMap {
        params: *params,
        geom: *geom,
        r,
        h_xi,
        m,
        b_values,
        w_values,
        grid_n: settings.grid_n,
        tol: settings.tol,
    })
}

/// Outcome of the structure audit of `b` (monotonicity sign and the empirical
/// continuity ratio against the structure bound with C = 1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BStructureReport {
    pub n_samples: usize,
    pub seed: u64,
    pub sign_violations: usize,
    pub continuity_ratio_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<AuditFailure>,
}

impl BStructureReport {
    pub fn passed(&self) -> bool {
        self.sign_violations == 0
    }
}

/// Continuity right side for `b` with C = 1 (the `p2 <= 2` and `p2 >= 2`
/// variants agree at `p2 = 2`).
pub fn b_continuity_rhs(params: &PhaseParams, geom: &MicroGeometry, xi1: Vec2, xi2: Vec2) -> f64 {
    let (p1, p2) = (params.p1(), params.p2());
    let (th1, th2) = (geom.theta1(), geom.theta2());
    let d = (xi2 - xi1).norm();
    let s = 1.0
        + th1 * xi1.norm().powf(p1)
        + th2 * xi1.norm().powf(p2)
        + th1 * xi2.norm().powf(p1)
        + th2 * xi2.norm().powf(p2);
    let first =
        d.powf((p1 - 1.0) / (3.0 - p1)) * s.powf((2.0 - p1) * (p1 - 1.0) / (p1 * (3.0 - p1)));
    let second = if p2 <= 2.0 {
        d.powf((p2 - 1.0) / (3.0 - p2)) * s.powf((2.0 - p2) * (p2 - 1.0) / (p2 * (3.0 - p2)))
    } else {
        d.powf(1.0 / (p2 - 1.0)) * s.powf((p2 - 2.0) / (p2 - 1.0))
    };
    first + second
}

/// Audits monotonicity and continuity of an arbitrary evaluator of `b` on
/// `n_samples` random pairs with `|xi| <= 5`.
pub fn audit_b_structure<F>(
    b: F,
    params: &PhaseParams,
    geom: &MicroGeometry,
    n_samples: usize,
    seed: u64,
) -> Result<BStructureReport>
where
    F: Fn(Vec2) -> Result<Vec2>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BStructureReport {
        n_samples,
        seed,
        sign_violations: 0,
        continuity_ratio_max: 0.0,
        failure: None,
    };
    for _ in 0..n_samples {
        let xi1 = sample_disk(&mut rng, 5.0);
        let xi2 = sample_disk(&mut rng, 5.0);
        let b1 = b(xi1)?;
        let b2 = b(xi2)?;
        let inner = (b2 - b1).dot(xi2 - xi1);
        let tol = 1e-8 * (1.0 + b1.norm() + b2.norm()) * (1.0 + (xi2 - xi1).norm());
        if inner < -tol {
            report.sign_violations += 1;
            if report.failure.is_none() {
                report.failure = Some(AuditFailure {
                    xi1,
                    xi2,
                    phase: 0,
                    value: inner,
                });
            }
        }
        let rhs = b_continuity_rhs(params, geom, xi1, xi2);
        if rhs > 0.0 {
            report.continuity_ratio_max = report.continuity_ratio_max.max((b1 - b2).norm() / rhs);
        }
    }
    Ok(report)
}

/// Default cap on the observed left/right ratios of the corrector integral
/// bounds; generous, since only implementation blunders are being screened.
pub const RATIO_CAP: f64 = 1e3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectorIntegralReport {
    pub n_samples: usize,
    pub seed: u64,
    pub violations: usize,
    pub power_ratio_max: f64,
    pub difference_ratio_max: f64,
    pub cap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<AuditFailure>,
}

impl CorrectorIntegralReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Right side of the first corrector integral bound with C = 1.
pub fn power_bound_rhs(params: &PhaseParams, geom: &MicroGeometry, xi: Vec2) -> f64 {
    1.0 + xi.norm().powf(params.p1()) * geom.theta1() + xi.norm().powf(params.p2()) * geom.theta2()
}

/// Right side of the corrector difference bound with C = 1; dispatches on the
/// exponent regime (`p2 <= 2` or `p2 >= 2`).
pub fn difference_bound_rhs(
    params: &PhaseParams,
    geom: &MicroGeometry,
    xi1: Vec2,
    xi2: Vec2,
) -> f64 {
    let (p1, p2) = (params.p1(), params.p2());
    let (th1, th2) = (geom.theta1(), geom.theta2());
    let d = (xi1 - xi2).norm();
    let s = 1.0
        + xi1.norm().powf(p1) * th1
        + xi2.norm().powf(p1) * th1
        + xi1.norm().powf(p2) * th2
        + xi2.norm().powf(p2) * th2;
    let t1 = th1.powf(1.0 / (3.0 - p1)) * d.powf(p1 / (3.0 - p1)) * s.powf((2.0 - p1) / (3.0 - p1));
    if p2 <= 2.0 {
        let e2 = 2.0 * p2 - p1 * p2 + p1;
        let e3 = 2.0 * p1 - p1 * p2 + p2;
        let t2 = th2.powf(p1 / e2) * d.powf(p1 * p2 / e2) * s.powf(p2 * (2.0 - p1) / e2);
        let t3 = th1.powf(p2 / e3) * d.powf(p1 * p2 / e3) * s.powf(p1 * (2.0 - p2) / e3);
        let t4 =
            th2.powf(1.0 / (3.0 - p2)) * d.powf(p2 / (3.0 - p2)) * s.powf((2.0 - p2) / (3.0 - p2));
        t1 + t2 + t3 + t4
    } else {
        let e2 = 2.0 * p2 - p1;
        let t2 = th2.powf(p1 / e2) * d.powf(p1 * p2 / e2) * s.powf(2.0 * (p2 - p1) / e2);
        let t3 = th1 * d.powf(p1);
        let t4 =
            th2.powf(1.0 / (p2 - 1.0)) * d.powf(p2 / (p2 - 1.0)) * s.powf((p2 - 2.0) / (p2 - 1.0));
        t1 + t2 + t3 + t4
    }
}

/// Empirically audits the corrector integral bounds on random gradients with
/// `|xi| <= 3`, with C = 1 and the cap of [`RATIO_CAP`] on the observed
/// left/right ratios.
pub fn audit_corrector_integrals(
    params: &PhaseParams,
    geom: &MicroGeometry,
    n_samples: usize,
    seed: u64,
    settings: &SolverSettings,
) -> Result<CorrectorIntegralReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CorrectorIntegralReport {
        n_samples,
        seed,
        violations: 0,
        power_ratio_max: 0.0,
        difference_ratio_max: 0.0,
        cap: RATIO_CAP,
        failure: None,
    };
    // Draw all samples first so cell solves can run in parallel.
    let singles: Vec<Vec2> = (0..n_samples).map(|_| sample_disk(&mut rng, 3.0)).collect();
    let pairs: Vec<(Vec2, Vec2)> = (0..n_samples)
        .map(|_| (sample_disk(&mut rng, 3.0), sample_disk(&mut rng, 3.0)))
        .collect();

    let solve = |xi: Vec2| -> Result<Arc<CellSolution>> {
        Ok(Arc::new(solve_cell(params, geom, xi, settings)?))
    };

    let l1: Result<Vec<f64>> = singles
        .par_iter()
        .map(|&xi| {
            let sol = solve(xi)?;
            let (i1, i2) = sol.phase_power_integrals(params.p1(), params.p2());
            Ok((i1 + i2) / power_bound_rhs(params, geom, xi))
        })
        .collect();
    for (ratio, &xi) in l1?.iter().zip(&singles) {
        report.power_ratio_max = report.power_ratio_max.max(*ratio);
        if *ratio > RATIO_CAP && report.failure.is_none() {
            report.violations += 1;
            report.failure = Some(AuditFailure {
                xi1: xi,
                xi2: xi,
                phase: 0,
                value: *ratio,
            });
        }
    }

    let l2: Result<Vec<Option<f64>>> = pairs
        .par_iter()
        .map(|&(xi1, xi2)| {
            let a = solve(xi1)?;
            let b = solve(xi2)?;
            let (d1, d2) = a.phase_diff_power(&b, params.p1(), params.p2())?;
            let rhs = difference_bound_rhs(params, geom, xi1, xi2);
            if rhs == 0.0 {
                // Coincident pair; the left side is zero as well.
                return Ok(None);
            }
            Ok(Some((d1 + d2) / rhs))
        })
        .collect();
    for (ratio, &(xi1, xi2)) in l2?.iter().zip(&pairs) {
        if let Some(ratio) = ratio {
            report.difference_ratio_max = report.difference_ratio_max.max(*ratio);
            if *ratio > RATIO_CAP {
                report.violations += 1;
                if report.failure.is_none() {
                    report.failure = Some(AuditFailure {
                        xi1,
                        xi2,
                        phase: 0,
                        value: *ratio,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::Phase;
    use approx::assert_relative_eq;

    fn lam_settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn b_vanishes_at_zero_and_matches_homogeneous_law() {
        let geom = MicroGeometry::laminate(0.5).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let pp = PhaseParams::new(1.0, 1.0, p, p).unwrap();
            assert_eq!(
                b_eval(&pp, &geom, Vec2::ZERO, &lam_settings()).unwrap(),
                Vec2::ZERO
            );
            let xi = Vec2::new(0.6, -1.1);
            let b = b_eval(&pp, &geom, xi, &lam_settings()).unwrap();
            let exact = pp.flux(Phase::One, xi);
            assert!((b - exact).norm() <= 1e-9 * exact.norm().max(1.0));
        }
    }

    #[test]
    fn linear_laminate_closed_forms() {
        let pp = PhaseParams::new(1.0, 2.0, 2.0, 2.0).unwrap();
        let geom = MicroGeometry::laminate(0.5).unwrap();
        let b1 = b_eval(&pp, &geom, Vec2::new(1.0, 0.0), &lam_settings()).unwrap();
        assert_relative_eq!(b1.x, 4.0 / 3.0, epsilon = 1e-10);
        let b2 = b_eval(&pp, &geom, Vec2::new(0.0, 1.0), &lam_settings()).unwrap();
        assert_relative_eq!(b2.y, 1.5, epsilon = 1e-10);
        let w = whom_energy(&pp, &geom, Vec2::new(1.0, 0.0), &lam_settings()).unwrap();
        assert_relative_eq!(w, 2.0 / 3.0, epsilon = 1e-10);
        assert_eq!(
            whom_energy(&pp, &geom, Vec2::ZERO, &lam_settings()).unwrap(),
            0.0
        );
    }

    #[test]
    fn homogeneous_energy_density() {
        let pp = PhaseParams::new(2.0, 2.0, 1.5, 1.5).unwrap();
        let geom = MicroGeometry::laminate(0.3).unwrap();
        let xi = Vec2::new(1.0, 0.0);
        let w = whom_energy(&pp, &geom, xi, &lam_settings()).unwrap();
        assert_relative_eq!(w, 2.0 / 1.5, max_relative = 1e-10);
    }

    #[test]
    fn homogeneous_table_matches_the_power_law() {
        let pp = PhaseParams::new(2.0, 2.0, 1.5, 1.5).unwrap();
        let geom = MicroGeometry::laminate(0.3).unwrap();
        let map = tabulate(&pp, &geom, 1.0, 0.5, &lam_settings()).unwrap();
        let m = map.nodes_per_side();
        for j in 0..m {
            for i in 0..m {
                let xi = map.node_xi(i, j);
                let exact = pp.flux(Phase::One, xi);
                assert!((map.node_b(i, j) - exact).norm() <= 1e-9 * exact.norm().max(1.0));
            }
        }
    }

    #[test]
    fn table_nodes_and_interpolation() {
        let pp = PhaseParams::new(1.0, 2.0, 2.0, 2.0).unwrap();
        let geom = MicroGeometry::laminate(0.5).unwrap();
        let map = tabulate(&pp, &geom, 1.0, 0.25, &lam_settings()).unwrap();
        // Stored zero at the origin node.
        let c = map.nodes_per_side() / 2;
        assert_eq!(map.node_b(c, c), Vec2::ZERO);
        // Exact at nodes.
        let xi = map.node_xi(c + 2, c + 1);
        let at_node = map.b_interp(xi).unwrap();
        assert!((at_node - map.node_b(c + 2, c + 1)).norm() < 1e-14);
        // b is linear in xi for p = 2, so interpolation is exact off-node too.
        let off = Vec2::new(0.37, -0.81);
        let interp = map.b_interp(off).unwrap();
        let direct = b_eval(&pp, &geom, off, &lam_settings()).unwrap();
        assert!((interp - direct).norm() < 1e-10);
        // Energy is quadratic, so the interpolant is O(h^2) accurate.
        let w_err = (map.w_interp(off).unwrap()
            - whom_energy(&pp, &geom, off, &lam_settings()).unwrap())
        .abs();
        assert!(w_err < 0.05);
        assert!(matches!(
            map.b_interp(Vec2::new(1.5, 0.0)),
            Err(Error::OutOfTable(..))
        ));
        // Jacobian of the interpolant recovers the constant effective tensor.
        let j = map.jac_interp(off).unwrap();
        assert_relative_eq!(j.a11, 4.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(j.a22, 1.5, epsilon = 1e-10);
        assert!(j.a12.abs() < 1e-12);
    }

    #[test]
    fn table_matches_direct_eval_at_node_for_nonlinear_laminate() {
        let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
        let geom = MicroGeometry::laminate(0.5).unwrap();
        let map = tabulate(&pp, &geom, 1.0, 0.5, &lam_settings()).unwrap();
        let c = map.nodes_per_side() / 2;
        let xi = map.node_xi(c + 2, c); // (1, 0)
        assert_eq!(xi, Vec2::new(1.0, 0.0));
        let direct = b_eval(&pp, &geom, xi, &lam_settings()).unwrap();
        assert!((map.node_b(c + 2, c) - direct).norm() < 1e-12);
    }

    #[test]
    fn b_structure_audit_on_benchmarks() {
        let geom = MicroGeometry::laminate(0.5).unwrap();
        for (p1, p2) in [(1.5, 2.0), (1.5, 2.5)] {
            let pp = PhaseParams::new(1.0, 3.0, p1, p2).unwrap();
            let s = lam_settings();
            let report =
                audit_b_structure(|xi| b_eval(&pp, &geom, xi, &s), &pp, &geom, 100, 42).unwrap();
            assert!(
                report.passed(),
                "violations at ({p1}, {p2}): {:?}",
                report.failure
            );
            assert!(report.continuity_ratio_max.is_finite());
        }
    }

    #[test]
    fn coincident_pair_is_within_tolerance() {
        let pp = PhaseParams::new(1.0, 2.0, 2.0, 2.0).unwrap();
        let geom = MicroGeometry::laminate(0.5).unwrap();
        let s = lam_settings();
        let xi = Vec2::new(0.4, 0.2);
        let b1 = b_eval(&pp, &geom, xi, &s).unwrap();
        let inner = (b1 - b1).dot(Vec2::ZERO);
        assert_eq!(inner, 0.0);
    }

    #[test]
    fn corrector_integral_audit_homogeneous_ratio_below_one() {
        // P = xi pointwise, so the first bound's left side is
        // theta1 |xi|^p1 + theta2 |xi|^p2 <= rhs with C = 1.
        let pp = PhaseParams::new(1.0, 1.0, 1.5, 1.5).unwrap();
        let geom = MicroGeometry::laminate(0.4).unwrap();
        let report = audit_corrector_integrals(&pp, &geom, 50, 7, &lam_settings()).unwrap();
        assert!(report.passed());
        assert!(
            report.power_ratio_max <= 1.0 + 1e-9,
            "got {}",
            report.power_ratio_max
        );
    }

    #[test]
    fn corrector_integral_audit_both_regimes() {
        let geom = MicroGeometry::laminate(0.5).unwrap();
        for (p1, p2) in [(1.5, 2.0), (1.5, 2.5)] {
            let pp = PhaseParams::new(1.0, 3.0, p1, p2).unwrap();
            let report = audit_corrector_integrals(&pp, &geom, 60, 9, &lam_settings()).unwrap();
            assert!(report.passed(), "cap exceeded: {:?}", report.failure);
        }
    }

    #[test]
    fn power_bound_left_side_vanishes_at_zero() {
        let pp = PhaseParams::new(1.0, 3.0, 1.5, 2.0).unwrap();
        let geom = MicroGeometry::laminate(0.5).unwrap();
        let sol = solve_cell(&pp, &geom, Vec2::ZERO, &lam_settings()).unwrap();
        let (i1, i2) = sol.phase_power_integrals(pp.p1(), pp.p2());
        assert_eq!(i1 + i2, 0.0);
        assert!(power_bound_rhs(&pp, &geom, Vec2::ZERO) >= 1.0);
    }
}
