//! Damped Newton minimization of the strictly convex discrete energies, with
//! continuation over a decreasing regularization sequence and a matrix-free
//! Jacobi-preconditioned conjugate-gradient solve inside each step.
//!
//! The regularization enters only the linearization: each stage works with
//! the delta-regularized energy, and a final polish iterates on the
//! unregularized gradient (keeping the last delta in the Hessian) until the
//! true weak residual meets the tolerance.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default residual tolerance of the semi-analytic laminate backend.
pub const LAMINATE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Residual tolerance on the unregularized weak form.
    pub tol: f64,
    /// Cap on Newton iterations, counted across all continuation stages.
    pub max_iter: usize,
    /// Strictly decreasing regularization sequence ending at or below 1e-8.
    pub delta_schedule: Vec<f64>,
    /// Cells per side of the periodic cell grid.
    pub grid_n: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-7,
            max_iter: 200,
            delta_schedule: (1..=8).map(|k| 10f64.powi(-k)).collect(),
            grid_n: 64,
        }
    }
}

impl SolverSettings {
    pub fn with_grid_n(mut self, grid_n: usize) -> Self {
        self.grid_n = grid_n;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(
                "solver.tol",
                format!("must be positive, got {}", self.tol),
            ));
        }
        if self.delta_schedule.is_empty() {
            return Err(Error::invalid("solver.delta_schedule", "must not be empty"));
        }
        for w in self.delta_schedule.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::invalid(
                    "solver.delta_schedule",
                    "must be strictly decreasing",
                ));
            }
        }
        let last = *self.delta_schedule.last().unwrap();
        if !(last <= 1e-8 && last >= 0.0) {
            return Err(Error::invalid(
                "solver.delta_schedule",
                format!("last entry must be <= 1e-8, got {last}"),
            ));
        }
        if self.grid_n < 16 {
            return Err(Error::invalid(
                "solver.grid_n",
                format!("must be at least 16, got {}", self.grid_n),
            ));
        }
        Ok(())
    }
}

/// A discrete convex energy with a regularized linearization. All vectors are
/// over the free degrees of freedom only.
pub(crate) trait EnergyProblem {
    fn ndof(&self) -> usize;
    fn energy(&mut self, u: &[f64], delta: f64) -> f64;
    fn gradient(&mut self, u: &[f64], delta: f64, out: &mut [f64]);
    /// Prepare the Hessian linearization at `u` for subsequent `hess_apply` calls.
    fn hess_prepare(&mut self, u: &[f64], delta: f64);
    fn hess_apply(&mut self, v: &[f64], out: &mut [f64]);
    fn hess_diag(&mut self, out: &mut [f64]);
    /// Projection onto the admissible space (zero mean for periodic cells).
    fn project(&self, _u: &mut [f64]) {}
    /// False when `energy` is only an interpolant of the potential of
    /// `gradient`; the line search then monitors the residual norm instead.
    fn exact_gradient(&self) -> bool {
        true
    }
    /// Deferred error raised inside an evaluation (e.g. a table lookup).
    fn take_error(&mut self) -> Option<Error> {
        None
    }
}

pub(crate) struct NewtonOutcome {
    pub u: Vec<f64>,
    /// Norm of the unregularized weak residual at the solution.
    pub residual: f64,
    pub iterations: usize,
    /// Unregularized energy at the solution.
    pub energy: f64,
    /// True when every accepted step decreased its stage energy.
    pub energy_descent: bool,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn minimize<P: EnergyProblem>(
    problem: &mut P,
    u0: Vec<f64>,
    settings: &SolverSettings,
) -> Result<NewtonOutcome> {
    settings.validate()?;
    let n = problem.ndof();
    debug_assert_eq!(u0.len(), n);
    let mut u = u0;
    problem.project(&mut u);

    let delta_last = *settings.delta_schedule.last().unwrap();
    // (gradient delta, hessian delta, stage tolerance); the trailing stage is
    // the unregularized polish.
    let mut stages: Vec<(f64, f64, f64)> = settings
        .delta_schedule
        .iter()
        .map(|&d| (d, d, (1e-2 * d).max(settings.tol)))
        .collect();
    stages.push((0.0, delta_last, settings.tol));

    let mut g = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut iterations = 0usize;
    let mut energy_descent = true;

    for (delta_grad, delta_hess, stage_tol) in stages {
        loop {
            problem.gradient(&u, delta_grad, &mut g);
            if let Some(e) = problem.take_error() {
                return Err(e);
            }
            let gnorm = norm(&g);
            if !gnorm.is_finite() {
                return Err(Error::NonFiniteEnergy);
            }
            if gnorm <= stage_tol {
                break;
            }
            if iterations >= settings.max_iter {
                return Err(Error::MaxIterExceeded {
                    max_iter: settings.max_iter,
                    residual: gnorm,
                });
            }
            iterations += 1;

            problem.hess_prepare(&u, delta_hess);
            problem.hess_diag(&mut diag);
            for d in diag.iter_mut() {
                if !(*d > 0.0 && d.is_finite()) {
                    *d = 1.0;
                }
            }
            let eta = if gnorm <= 1e3 * settings.tol {
                1e-6
            } else {
                1e-3
            };
            let max_cg = 200 + 8 * (n as f64).sqrt() as usize;
            let mut dir = pcg(problem, &g, &diag, eta, max_cg);
            if !(dot(&g, &dir) < 0.0) {
                // CG breakdown: preconditioned steepest descent still descends.
                for i in 0..n {
                    dir[i] = -g[i] / diag[i];
                }
                problem.project(&mut dir);
            }
            let descended = line_search(problem, &mut u, &dir, &g, delta_grad, gnorm)?;
            energy_descent &= descended;
        }
    }

    problem.gradient(&u, 0.0, &mut g);
    if let Some(e) = problem.take_error() {
        return Err(e);
    }
    let residual = norm(&g);
    let energy = problem.energy(&u, 0.0);
    Ok(NewtonOutcome {
        u,
        residual,
        iterations,
        energy,
        energy_descent,
    })
}

/// Backtracking line search. Returns whether the accepted step strictly
/// satisfied the Armijo decrease (as opposed to a borderline machine-precision
/// acceptance).
fn line_search<P: EnergyProblem>(
    problem: &mut P,
    u: &mut Vec<f64>,
    dir: &[f64],
    g: &[f64],
    delta: f64,
    gnorm: f64,
) -> Result<bool> {
    let n = u.len();
    let gd = dot(g, dir); // negative by construction
    let e0 = problem.energy(u, delta);
    if let Some(e) = problem.take_error() {
        return Err(e);
    }
    let mut trial = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut alpha = 1.0f64;
    let mut last_energy = f64::INFINITY;
    for _ in 0..60 {
        for i in 0..n {
            trial[i] = u[i] + alpha * dir[i];
        }
        problem.project(&mut trial);
        let e = problem.energy(&trial, delta);
        if let Some(err) = problem.take_error() {
            return Err(err);
        }
        last_energy = e;
        if problem.exact_gradient() {
            if e.is_finite() && e <= e0 + 1e-4 * alpha * gd {
                std::mem::swap(u, &mut trial);
                return Ok(true);
            }
        } else {
            problem.gradient(&trial, delta, &mut gt);
            if let Some(err) = problem.take_error() {
                return Err(err);
            }
            let gn = norm(&gt);
            if gn.is_finite() && (gn <= (1.0 - 1e-4 * alpha) * gnorm || (e.is_finite() && e < e0)) {
                std::mem::swap(u, &mut trial);
                return Ok(true);
            }
        }
        alpha *= 0.5;
    }
    if !last_energy.is_finite() {
        return Err(Error::NonFiniteEnergy);
    }
    // Near the resolution floor of the energy the Armijo test cannot see the
    // decrease; accept the full Newton step if the gradient norm measurably
    // drops.
    for i in 0..n {
        trial[i] = u[i] + dir[i];
    }
    problem.project(&mut trial);
    let e = problem.energy(&trial, delta);
    if let Some(err) = problem.take_error() {
        return Err(err);
    }
    problem.gradient(&trial, delta, &mut gt);
    if let Some(err) = problem.take_error() {
        return Err(err);
    }
    if e.is_finite() && norm(&gt) < gnorm {
        std::mem::swap(u, &mut trial);
        return Ok(false);
    }
    if last_energy <= e0 {
        // Accept the tiny step and let the residual check decide.
        for i in 0..n {
            trial[i] = u[i] + 2f64.powi(-60) * dir[i];
        }
        problem.project(&mut trial);
        std::mem::swap(u, &mut trial);
        return Ok(false);
    }
    Err(Error::LineSearchStall { residual: gnorm })
}

/// Jacobi-preconditioned CG for `H x = -g`, matrix free. Stops at the given
/// relative residual reduction; a truncated solve still yields a descent
/// direction because `H` is positive definite on the admissible space.
fn pcg<P: EnergyProblem>(
    problem: &mut P,
    g: &[f64],
    diag: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let n = g.len();
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|&v| -v).collect();
    problem.project(&mut r);
    let b_norm = norm(&r);
    if b_norm == 0.0 {
        return x;
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(&ri, &di)| ri / di).collect();
    problem.project(&mut z);
    let mut s = z.clone();
    let mut rz = dot(&r, &z);
    let mut hs = vec![0.0; n];
    for _ in 0..max_iter {
        problem.hess_apply(&s, &mut hs);
        let shs = dot(&s, &hs);
        if !(shs > 0.0 && shs.is_finite()) {
            break;
        }
        let alpha = rz / shs;
        for i in 0..n {
            x[i] += alpha * s[i];
            r[i] -= alpha * hs[i];
        }
        if norm(&r) <= rel_tol * b_norm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        problem.project(&mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            s[i] = z[i] + beta * s[i];
        }
    }
    x
}
