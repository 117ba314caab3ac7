//! Periodic bilinear FEM backend for the cell problem: minimizes the strictly
//! convex discrete energy over zero-mean periodic nodal potentials on an
//! n-by-n grid, with the phase indicator sampled at quadrature points.

use super::{element_nodes, CellData, CellSolution, GridData};
use crate::assembly::{for_each_element, gather, PAR_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::MicroGeometry;
use crate::material::{Phase, PhaseParams};
use crate::newton::{minimize, EnergyProblem, SolverSettings};
use crate::quadrature::ElementRule;
use crate::vec2::Vec2;
use rayon::prelude::*;

struct CellGridProblem<'a> {
    params: &'a PhaseParams,
    xi: Vec2,
    n: usize,
    nf: f64,
    /// Quadrature weight `h^2 / 4`.
    w: f64,
    rule: ElementRule,
    phase_q: Vec<Phase>,
    /// Per-quadrature-point symmetric Jacobian `(j11, j12, j22)`, pre-scaled
    /// by `w * n^2` so `hess_apply` works in reference gradients.
    jac_q: Vec<(f64, f64, f64)>,
    elem_vec: Vec<[f64; 4]>,
    elem_scalar: Vec<f64>,
}

impl<'a> CellGridProblem<'a> {
    fn new(params: &'a PhaseParams, geom: &MicroGeometry, xi: Vec2, n: usize) -> Self {
        let h = 1.0 / n as f64;
        let rule = ElementRule::new();
        let mut phase_q = Vec::with_capacity(4 * n * n);
        for e in 0..n * n {
            let (ex, ey) = (e % n, e / n);
            for &(s, t) in &rule.points {
                let y = Vec2::new((ex as f64 + s) * h, (ey as f64 + t) * h);
                phase_q.push(geom.indicator(y));
            }
        }
        CellGridProblem {
            params,
            xi,
            n,
            nf: n as f64,
            w: h * h / 4.0,
            rule,
            phase_q,
            jac_q: vec![(0.0, 0.0, 0.0); 4 * n * n],
            elem_vec: vec![[0.0; 4]; n * n],
            elem_scalar: vec![0.0; n * n],
        }
    }

    fn scatter(elem_vec: &[[f64; 4]], n: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (e, contrib) in elem_vec.iter().enumerate() {
            let nodes = element_nodes(n, e % n, e / n);
            for a in 0..4 {
                out[nodes[a]] += contrib[a];
            }
        }
    }
}

impl EnergyProblem for CellGridProblem<'_> {
    fn ndof(&self) -> usize {
        self.n * self.n
    }

    fn energy(&mut self, u: &[f64], delta: f64) -> f64 {
        let Self {
            params,
            xi,
            n,
            nf,
            w,
            ref rule,
            ref phase_q,
            ref mut elem_vec,
            ref mut elem_scalar,
            ..
        } = *self;
        for_each_element(elem_vec, elem_scalar, |e, _, acc| {
            let nodes = element_nodes(n, e % n, e / n);
            let ue = gather(u, nodes);
            let mut sum = 0.0;
            for q in 0..4 {
                let mut g = Vec2::ZERO;
                for a in 0..4 {
                    g += rule.grads[q][a] * ue[a];
                }
                let p = xi + g * nf;
                sum += w * params.energy_density_regularized(phase_q[e * 4 + q], p, delta);
            }
            *acc = sum;
        });
        self.elem_scalar.iter().sum()
    }

    fn gradient(&mut self, u: &[f64], delta: f64, out: &mut [f64]) {
        let Self {
            params,
            xi,
            n,
            nf,
            w,
            ref rule,
            ref phase_q,
            ref mut elem_vec,
            ref mut elem_scalar,
            ..
        } = *self;
        for_each_element(elem_vec, elem_scalar, |e, contrib, _| {
            let nodes = element_nodes(n, e % n, e / n);
            let ue = gather(u, nodes);
            *contrib = [0.0; 4];
            for q in 0..4 {
                let mut g = Vec2::ZERO;
                for a in 0..4 {
                    g += rule.grads[q][a] * ue[a];
                }
                let p = xi + g * nf;
                let f = params.flux_regularized(phase_q[e * 4 + q], p, delta) * (w * nf);
                for a in 0..4 {
                    contrib[a] += f.dot(rule.grads[q][a]);
                }
            }
        });
        Self::scatter(&self.elem_vec, self.n, out);
    }

    fn hess_prepare(&mut self, u: &[f64], delta: f64) {
        // The exact Jacobian is singular at vanishing gradients for p < 2; a
        // floor keeps the linearization finite without touching energy or
        // gradient evaluations.
        let delta = delta.max(1e-12);
        let Self {
            params,
            xi,
            n,
            nf,
            w,
            ref rule,
            ref phase_q,
            ref mut jac_q,
            ..
        } = *self;
        let scale = w * nf * nf;
        let fill = |e: usize, jac: &mut [(f64, f64, f64)]| {
            let nodes = element_nodes(n, e % n, e / n);
            let ue = gather(u, nodes);
            for q in 0..4 {
                let mut g = Vec2::ZERO;
                for a in 0..4 {
                    g += rule.grads[q][a] * ue[a];
                }
                let p = xi + g * nf;
                let j = params
                    .flux_jacobian_regularized(phase_q[e * 4 + q], p, delta)
                    .expect("regularized jacobian is defined for delta > 0");
                jac[q] = (scale * j.a11, scale * j.a12, scale * j.a22);
            }
        };
        if n * n >= PAR_THRESHOLD {
            jac_q
                .par_chunks_mut(4)
                .enumerate()
                .for_each(|(e, jac)| fill(e, jac));
        } else {
            jac_q
                .chunks_mut(4)
                .enumerate()
                .for_each(|(e, jac)| fill(e, jac));
        }
    }

    fn hess_apply(&mut self, v: &[f64], out: &mut [f64]) {
        let Self {
            n,
            ref rule,
            ref jac_q,
            ref mut elem_vec,
            ref mut elem_scalar,
            ..
        } = *self;
        for_each_element(elem_vec, elem_scalar, |e, contrib, _| {
            let nodes = element_nodes(n, e % n, e / n);
            let ve = gather(v, nodes);
            *contrib = [0.0; 4];
            for q in 0..4 {
                let mut g = Vec2::ZERO;
                for a in 0..4 {
                    g += rule.grads[q][a] * ve[a];
                }
                let (j11, j12, j22) = jac_q[e * 4 + q];
                let jg = Vec2::new(j11 * g.x + j12 * g.y, j12 * g.x + j22 * g.y);
                for a in 0..4 {
                    contrib[a] += jg.dot(rule.grads[q][a]);
                }
            }
        });
        Self::scatter(&self.elem_vec, self.n, out);
    }

    fn hess_diag(&mut self, out: &mut [f64]) {
        let Self {
            ref rule,
            ref jac_q,
            ref mut elem_vec,
            ref mut elem_scalar,
            ..
        } = *self;
        for_each_element(elem_vec, elem_scalar, |e, contrib, _| {
            *contrib = [0.0; 4];
            for q in 0..4 {
                let (j11, j12, j22) = jac_q[e * 4 + q];
                for a in 0..4 {
                    let g = rule.grads[q][a];
                    contrib[a] += j11 * g.x * g.x + 2.0 * j12 * g.x * g.y + j22 * g.y * g.y;
                }
            }
        });
        Self::scatter(&self.elem_vec, self.n, out);
    }

    fn project(&self, u: &mut [f64]) {
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        u.iter_mut().for_each(|x| *x -= mean);
    }
}

/// Solves the cell problem on the periodic grid defined by `settings.grid_n`.
pub fn solve_cell_grid(
    params: &PhaseParams,
    geom: &MicroGeometry,
    xi: Vec2,
    settings: &SolverSettings,
) -> Result<CellSolution> {
    settings.validate()?;
    if !xi.is_finite() {
        return Err(Error::invalid("experiment.xi", "components must be finite"));
    }
    let n = settings.grid_n;
    let mut problem = CellGridProblem::new(params, geom, xi, n);
    let out = minimize(&mut problem, vec![0.0; n * n], settings)?;
    let mut upsilon = out.u;
    let mean = upsilon.iter().sum::<f64>() / upsilon.len() as f64;
    upsilon.iter_mut().for_each(|x| *x -= mean);

    let nf = n as f64;
    let rule = ElementRule::new();
    let mut p_quad = Vec::with_capacity(4 * n * n);
    let mut flux_quad = Vec::with_capacity(4 * n * n);
    let mut w_quad = Vec::with_capacity(4 * n * n);
    for e in 0..n * n {
        let nodes = element_nodes(n, e % n, e / n);
        let ue = gather(&upsilon, nodes);
        for q in 0..4 {
            let mut g = Vec2::ZERO;
            for a in 0..4 {
                g += rule.grads[q][a] * ue[a];
            }
            let p = xi + g * nf;
            let ph = problem.phase_q[e * 4 + q];
            p_quad.push(p);
            flux_quad.push(params.flux(ph, p));
            w_quad.push(params.energy_density(ph, p));
        }
    }
    let data = GridData {
        n,
        upsilon,
        p_quad,
        flux_quad,
        w_quad,
        phase_quad: problem.phase_q,
    };
    Ok(CellSolution::new(xi, out.residual, CellData::Grid(data))
        .with_stats(out.iterations, out.energy_descent))
}

/// Unregularized weak residual norm of an arbitrary periodic nodal potential,
/// for diagnostics and perturbation experiments.
pub fn grid_residual_with_upsilon(
    params: &PhaseParams,
    geom: &MicroGeometry,
    xi: Vec2,
    grid_n: usize,
    upsilon: &[f64],
) -> Result<f64> {
    if upsilon.len() != grid_n * grid_n {
        return Err(Error::MeshMismatch(format!(
            "expected {} nodal values, got {}",
            grid_n * grid_n,
            upsilon.len()
        )));
    }
    let mut problem = CellGridProblem::new(params, geom, xi, grid_n);
    let mut g = vec![0.0; grid_n * grid_n];
    problem.gradient(upsilon, 0.0, &mut g);
    Ok(g.iter().map(|&x| x * x).sum::<f64>().sqrt())
}
