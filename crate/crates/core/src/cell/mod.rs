//! The periodic cell problem: for an imposed macroscopic gradient `xi`, find
//! the zero-mean periodic corrector potential whose gradient makes the flux
//! divergence free, and record the corrector field `P(y, xi) = xi + grad v`.
//!
//! Two backends: an exact 1D reduction for laminates (flux continuity across
//! the layers) and a bilinear periodic grid minimization for general cells.

mod grid;
mod laminate;

pub use grid::{grid_residual_with_upsilon, solve_cell_grid};
pub use laminate::solve_cell_laminate;

use crate::error::{Error, Result};
use crate::geometry::{wrap_periodic, GeometryKind, MicroGeometry};
use crate::material::Phase;
use crate::newton::{SolverSettings, LAMINATE_TOL};
use crate::quadrature::ElementRule;
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Laminate1D,
    Grid2D,
}

#[derive(Clone, Debug)]
pub(crate) struct LaminateData {
    pub theta1: f64,
    /// Corrected normal gradient component per phase.
    pub t1: f64,
    pub t2: f64,
    /// The constant normal flux shared by both phases.
    pub flux_c: f64,
    /// Per-phase corrector values, fluxes and energy densities.
    pub p1v: Vec2,
    pub p2v: Vec2,
    pub f1: Vec2,
    pub f2: Vec2,
    pub w1: f64,
    pub w2: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct GridData {
    pub n: usize,
    /// Zero-mean periodic nodal potential, `n * n` values, row major.
    pub upsilon: Vec<f64>,
    /// Corrector, flux, energy density and phase per quadrature point,
    /// element major (`4` points per element).
    pub p_quad: Vec<Vec2>,
    pub flux_quad: Vec<Vec2>,
    pub w_quad: Vec<f64>,
    pub phase_quad: Vec<Phase>,
}

/// Discrete solution of the cell problem for one `xi`.
#[derive(Clone, Debug)]
pub struct CellSolution {
    xi: Vec2,
    residual: f64,
    iterations: usize,
    energy_descent: bool,
    pub(crate) data: CellData,
}

#[derive(Clone, Debug)]
pub(crate) enum CellData {
    Laminate(LaminateData),
    Grid(GridData),
}

impl CellSolution {
    pub fn xi(&self) -> Vec2 {
        self.xi
    }

    /// Weak-form residual recorded by the solver.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn backend(&self) -> Backend {
        match self.data {
            CellData::Laminate(_) => Backend::Laminate1D,
            CellData::Grid(_) => Backend::Grid2D,
        }
    }

    pub fn grid_n(&self) -> usize {
        match &self.data {
            CellData::Laminate(_) => 0,
            CellData::Grid(g) => g.n,
        }
    }

    pub(crate) fn new(xi: Vec2, residual: f64, data: CellData) -> Self {
        CellSolution {
            xi,
            residual,
            iterations: 0,
            energy_descent: true,
            data,
        }
    }

    pub(crate) fn with_stats(mut self, iterations: usize, energy_descent: bool) -> Self {
        self.iterations = iterations;
        self.energy_descent = energy_descent;
        self
    }

    /// Newton iterations spent by the solve (0 for the semi-analytic backend).
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Whether every accepted Newton step decreased its stage energy.
    pub fn energy_descent(&self) -> bool {
        self.energy_descent
    }

    /// Cell average of the corrector field; equals `xi` up to the solve
    /// tolerance.
    pub fn mean_p(&self) -> Vec2 {
        match &self.data {
            CellData::Laminate(l) => {
                Vec2::new(l.theta1 * l.t1 + (1.0 - l.theta1) * l.t2, self.xi.y)
            }
            CellData::Grid(g) => {
                let w = 1.0 / g.p_quad.len() as f64;
                g.p_quad.iter().fold(Vec2::ZERO, |acc, &p| acc + p) * w
            }
        }
    }

    /// Mean of the corrector field over each phase (conditional averages, not
    /// weighted by the volume fractions).
    pub fn phase_mean_p(&self) -> (Vec2, Vec2) {
        match &self.data {
            CellData::Laminate(l) => (l.p1v, l.p2v),
            CellData::Grid(g) => {
                let mut acc = [Vec2::ZERO; 2];
                let mut count = [0usize; 2];
                for (p, ph) in g.p_quad.iter().zip(&g.phase_quad) {
                    let i = (ph.index() - 1) as usize;
                    acc[i] += *p;
                    count[i] += 1;
                }
                (
                    acc[0] * (1.0 / count[0].max(1) as f64),
                    acc[1] * (1.0 / count[1].max(1) as f64),
                )
            }
        }
    }

    /// The homogenized flux `b(xi)`: the cell average of `A(y, P(y, xi))`.
    /// Exact phase-weighted algebra for the laminate backend, quadrature for
    /// the grid backend.
    pub fn b(&self) -> Vec2 {
        match &self.data {
            CellData::Laminate(l) => l.f1 * l.theta1 + l.f2 * (1.0 - l.theta1),
            CellData::Grid(g) => {
                let w = 1.0 / g.flux_quad.len() as f64;
                g.flux_quad.iter().fold(Vec2::ZERO, |acc, &f| acc + f) * w
            }
        }
    }

    /// Cell average of the energy density at the corrector, i.e. the
    /// homogenized energy density at `xi`.
    pub fn energy(&self) -> f64 {
        match &self.data {
            CellData::Laminate(l) => l.theta1 * l.w1 + (1.0 - l.theta1) * l.w2,
            CellData::Grid(g) => g.w_quad.iter().sum::<f64>() / g.w_quad.len() as f64,
        }
    }

    /// Evaluates `P(y, xi)` at an arbitrary point, periodically extended.
    pub fn corrector_value(&self, y: Vec2) -> Vec2 {
        let y = wrap_periodic(y, 1.0);
        match &self.data {
            CellData::Laminate(l) => {
                if (y.x - 0.5).abs() < 0.5 * l.theta1 {
                    l.p1v
                } else {
                    l.p2v
                }
            }
            CellData::Grid(g) => {
                let n = g.n;
                let fx = y.x * n as f64;
                let fy = y.y * n as f64;
                let ex = (fx.floor() as usize).min(n - 1);
                let ey = (fy.floor() as usize).min(n - 1);
                let s = fx - ex as f64;
                let t = fy - ey as f64;
                let grads = crate::quadrature::shape_gradients(s, t);
                let idx = |i: usize, j: usize| (j % n) * n + (i % n);
                let nodes = [
                    idx(ex, ey),
                    idx(ex + 1, ey),
                    idx(ex + 1, ey + 1),
                    idx(ex, ey + 1),
                ];
                let mut grad = Vec2::ZERO;
                for a in 0..4 {
                    grad += grads[a] * g.upsilon[nodes[a]];
                }
                self.xi + grad * n as f64
            }
        }
    }

    /// Per-phase cell integrals of `|P|^e` with a separate exponent per phase.
    pub fn phase_power_integrals(&self, e1: f64, e2: f64) -> (f64, f64) {
        match &self.data {
            CellData::Laminate(l) => (
                l.theta1 * l.p1v.norm().powf(e1),
                (1.0 - l.theta1) * l.p2v.norm().powf(e2),
            ),
            CellData::Grid(g) => {
                let w = 1.0 / g.p_quad.len() as f64;
                let mut acc = (0.0, 0.0);
                for (p, ph) in g.p_quad.iter().zip(&g.phase_quad) {
                    match ph {
                        Phase::One => acc.0 += w * p.norm().powf(e1),
                        Phase::Two => acc.1 += w * p.norm().powf(e2),
                    }
                }
                acc
            }
        }
    }

    /// Per-phase cell integrals of `|P_self - P_other|^e`; both solutions must
    /// come from the same backend and discretization.
    pub fn phase_diff_power(&self, other: &CellSolution, e1: f64, e2: f64) -> Result<(f64, f64)> {
        match (&self.data, &other.data) {
            (CellData::Laminate(a), CellData::Laminate(b)) => {
                if (a.theta1 - b.theta1).abs() > 1e-14 {
                    return Err(Error::MeshMismatch(
                        "laminate volume fractions differ".into(),
                    ));
                }
                Ok((
                    a.theta1 * (a.p1v - b.p1v).norm().powf(e1),
                    (1.0 - a.theta1) * (a.p2v - b.p2v).norm().powf(e2),
                ))
            }
            (CellData::Grid(a), CellData::Grid(b)) => {
                if a.n != b.n {
                    return Err(Error::MeshMismatch(format!(
                        "cell grids {} vs {}",
                        a.n, b.n
                    )));
                }
                let w = 1.0 / a.p_quad.len() as f64;
                let mut acc = (0.0, 0.0);
                for ((pa, pb), ph) in a.p_quad.iter().zip(&b.p_quad).zip(&a.phase_quad) {
                    match ph {
                        Phase::One => acc.0 += w * (*pa - *pb).norm().powf(e1),
                        Phase::Two => acc.1 += w * (*pa - *pb).norm().powf(e2),
                    }
                }
                Ok(acc)
            }
            _ => Err(Error::MeshMismatch(
                "cannot mix laminate and grid cell solutions".into(),
            )),
        }
    }

    /// Discrete L2 norm of the corrector potential over the cell.
    pub fn upsilon_l2(&self) -> f64 {
        match &self.data {
            CellData::Laminate(l) => {
                // Piecewise-linear periodic profile: slope (t_i - xi_x) per
                // phase layer; sampled finely, mean removed.
                let m1 = l.t1 - self.xi.x;
                let m2 = l.t2 - self.xi.x;
                let a = 0.5 * (1.0 - l.theta1);
                let b = 0.5 * (1.0 + l.theta1);
                let n = 4096;
                let mut vals = Vec::with_capacity(n);
                let mut v = 0.0;
                let dy = 1.0 / n as f64;
                for i in 0..n {
                    let y_mid = (i as f64 + 0.5) * dy;
                    let slope = if y_mid > a && y_mid < b { m1 } else { m2 };
                    v += slope * dy;
                    vals.push(v);
                }
                let mean = vals.iter().sum::<f64>() / n as f64;
                (vals.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt()
            }
            CellData::Grid(g) => {
                let w = 1.0 / g.upsilon.len() as f64;
                (g.upsilon.iter().map(|&x| x * x).sum::<f64>() * w).sqrt()
            }
        }
    }
}

/// Discrete dual norm of the weak residual of a cell solution, recomputed
/// from the stored fields.
pub fn cell_residual(sol: &CellSolution) -> f64 {
    match &sol.data {
        CellData::Laminate(l) => (l.f1.x - l.f2.x).abs(),
        CellData::Grid(g) => {
            let n = g.n;
            let h = 1.0 / n as f64;
            let w = h * h / 4.0;
            let rule = ElementRule::new();
            let mut r = vec![0.0; n * n];
            for ey in 0..n {
                for ex in 0..n {
                    let e = ey * n + ex;
                    let nodes = element_nodes(n, ex, ey);
                    for q in 0..4 {
                        let f = g.flux_quad[e * 4 + q];
                        for a in 0..4 {
                            r[nodes[a]] += w / h * f.dot(rule.grads[q][a]);
                        }
                    }
                }
            }
            r.iter().map(|&x| x * x).sum::<f64>().sqrt()
        }
    }
}

/// Evaluates `P(y, xi)` from a converged solution (free-function form of
/// [`CellSolution::corrector_value`]).
pub fn corrector_value(sol: &CellSolution, y: Vec2) -> Vec2 {
    sol.corrector_value(y)
}

pub(crate) fn element_nodes(n: usize, ex: usize, ey: usize) -> [usize; 4] {
    let idx = |i: usize, j: usize| (j % n) * n + (i % n);
    [
        idx(ex, ey),
        idx(ex + 1, ey),
        idx(ex + 1, ey + 1),
        idx(ex, ey + 1),
    ]
}

/// Solves the cell problem with the natural backend for the geometry: the 1D
/// reduction for laminates, the periodic grid for disks.
pub fn solve_cell(
    params: &crate::material::PhaseParams,
    geom: &MicroGeometry,
    xi: Vec2,
    settings: &SolverSettings,
) -> Result<CellSolution> {
    match geom.kind() {
        GeometryKind::Laminate => {
            solve_cell_laminate(params, geom.theta1(), xi, settings.tol.min(LAMINATE_TOL))
        }
        GeometryKind::Disk => solve_cell_grid(params, geom, xi, settings),
    }
}
