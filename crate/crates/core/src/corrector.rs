//! The local average operator over the cell tiling, the corrector
//! approximation built from cell solves at averaged gradients, the corrector
//! error study, and both sides of the per-phase field-fluctuation lower
//! bound.

use crate::cell::{solve_cell, CellSolution};
use crate::error::{Error, Result};
use crate::field::{
    apriori_norms, solve_epsilon, solve_macro, Epsilon, FieldKind, FieldSolution, Load,
    MacroProblem,
};
use crate::geometry::{wrap_periodic, MicroGeometry};
use crate::homogenized::tabulate;
use crate::material::{Phase, PhaseParams};
use crate::newton::SolverSettings;
use crate::quadrature::ElementRule;
use crate::vec2::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// A measurable region of the unit square, as a union of mesh elements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Full,
    /// Elements whose center lies in `x < 1/2`.
    LeftHalf,
    /// Explicit element mask on a specific mesh.
    Mask {
        mesh_n: usize,
        mask: Vec<bool>,
    },
}

impl Region {
    pub fn contains(&self, mesh_n: usize, ex: usize, ey: usize) -> Result<bool> {
        match self {
            Region::Full => Ok(true),
            Region::LeftHalf => Ok(2 * ex + 1 < mesh_n),
            Region::Mask { mesh_n: m, mask } => {
                if *m != mesh_n {
                    return Err(Error::MeshMismatch(format!(
                        "region mask is on a {m}-mesh, queried with {mesh_n}"
                    )));
                }
                Ok(mask[ey * mesh_n + ex])
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Region::Full => "full".into(),
            Region::LeftHalf => "left_half".into(),
            Region::Mask { mask, .. } => {
                format!("mask({})", mask.iter().filter(|&&b| b).count())
            }
        }
    }
}

/// Piecewise-constant cell values of the local average operator. Cells not
/// wholly contained in the averaged region are excluded (`None`).
#[derive(Clone, Debug)]
pub struct CellAverages {
    k: u32,
    values: Vec<Option<Vec2>>,
}

impl CellAverages {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn value(&self, cx: usize, cy: usize) -> Option<Vec2> {
        self.values[cy * self.k as usize + cx]
    }

    /// Cell containing a point of the unit square.
    pub fn cell_of(&self, x: Vec2) -> (usize, usize) {
        let k = self.k as usize;
        let cx = ((x.x * self.k as f64).floor() as usize).min(k - 1);
        let cy = ((x.y * self.k as f64).floor() as usize).min(k - 1);
        (cx, cy)
    }

    pub fn values(&self) -> &[Option<Vec2>] {
        &self.values
    }
}

/// Cell averages of a per-element field over the full tiling of the unit
/// square (every cell is whole, so none is excluded).
pub fn local_average(field: &[Vec2], mesh_n: usize, eps: Epsilon) -> Result<CellAverages> {
    local_average_masked(field, mesh_n, eps, &Region::Full)
}

/// The general branch of the local average operator: cells clipped by the
/// region (not wholly inside it) are excluded, mirroring the whole-cell index
/// set of the operator definition.
pub fn local_average_masked(
    field: &[Vec2],
    mesh_n: usize,
    eps: Epsilon,
    region: &Region,
) -> Result<CellAverages> {
    let k = eps.k() as usize;
    if mesh_n % k != 0 {
        return Err(Error::MeshNotNested { mesh_n, k: eps.k() });
    }
    if field.len() != mesh_n * mesh_n {
        return Err(Error::MeshMismatch(format!(
            "field has {} entries, mesh has {} elements",
            field.len(),
            mesh_n * mesh_n
        )));
    }
    let m = mesh_n / k;
    let mut values = Vec::with_capacity(k * k);
    for cy in 0..k {
        for cx in 0..k {
            // Accumulate deviations from the first element; constants are
            // then preserved exactly.
            let base = field[(cy * m) * mesh_n + cx * m];
            let mut acc = Vec2::ZERO;
            let mut whole = true;
            'cell: for jy in 0..m {
                for jx in 0..m {
                    let (ex, ey) = (cx * m + jx, cy * m + jy);
                    if !region.contains(mesh_n, ex, ey)? {
                        whole = false;
                        break 'cell;
                    }
                    acc += field[ey * mesh_n + ex] - base;
                }
            }
            values.push(if whole {
                Some(base + acc * (1.0 / (m * m) as f64))
            } else {
                None
            });
        }
    }
    Ok(CellAverages { k: eps.k(), values })
}

/// Concurrent cache of cell solutions keyed by the gradient quantized to a
/// lattice of the given step (step 0 keys by exact bits). Reads are shared;
/// the first insertion for a key wins.
pub struct XiCache {
    step: f64,
    map: RwLock<HashMap<(u64, u64), Arc<CellSolution>>>,
}

impl XiCache {
    pub fn new(step: f64) -> Self {
        XiCache {
            step,
            map: RwLock::new(HashMap::new()),
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn quantize(&self, xi: Vec2) -> Vec2 {
        if self.step == 0.0 {
            return xi;
        }
        let q = |v: f64| {
            let r = (v / self.step).round() * self.step;
            if r == 0.0 {
                0.0
            } else {
                r
            }
        };
        Vec2::new(q(xi.x), q(xi.y))
    }

    pub fn key(&self, xi: Vec2) -> (u64, u64) {
        let q = self.quantize(xi);
        // Normalize negative zero so -0.0 and 0.0 share a key.
        let bits = |v: f64| {
            if v == 0.0 {
                0.0f64.to_bits()
            } else {
                v.to_bits()
            }
        };
        (bits(q.x), bits(q.y))
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the cached solution for the quantized gradient, solving and
    /// inserting on a miss.
    pub fn solve(
        &self,
        params: &PhaseParams,
        geom: &MicroGeometry,
        settings: &SolverSettings,
        xi: Vec2,
    ) -> Result<Arc<CellSolution>> {
        let key = self.key(xi);
        if let Some(hit) = self.map.read().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let sol = Arc::new(solve_cell(params, geom, self.quantize(xi), settings)?);
        let mut guard = self.map.write().unwrap();
        Ok(Arc::clone(guard.entry(key).or_insert(sol)))
    }
}

/// The corrector approximation of the fine-scale gradient: per cell, the cell
/// solution at the averaged macroscopic gradient, evaluated at the rescaled
/// cell coordinate.
pub struct CorrectorField {
    eps: Epsilon,
    averages: CellAverages,
    cells: Vec<Arc<CellSolution>>,
}

impl CorrectorField {
    pub fn eps(&self) -> Epsilon {
        self.eps
    }

    pub fn averages(&self) -> &CellAverages {
        &self.averages
    }

    pub fn cell_solution(&self, cx: usize, cy: usize) -> &Arc<CellSolution> {
        &self.cells[cy * self.eps.k() as usize + cx]
    }

    /// Evaluates `P(x / eps, M_eps(grad u)(x))`.
    pub fn eval(&self, x: Vec2) -> Vec2 {
        let (cx, cy) = self.averages.cell_of(x);
        let y = wrap_periodic(x, self.eps.value());
        self.cells[cy * self.eps.k() as usize + cx].corrector_value(y)
    }
}

/// Builds the corrector approximation for a macroscopic solution: one cell
/// solve per distinct (quantized) cell-averaged gradient, solved through the
/// cache.
pub fn assemble_corrector(
    u: &FieldSolution,
    params: &PhaseParams,
    geom: &MicroGeometry,
    eps: Epsilon,
    settings: &SolverSettings,
    cache: &XiCache,
) -> Result<CorrectorField> {
    let grads = u.grad_centers();
    let averages = local_average(&grads, u.mesh_n(), eps)?;
    let k = eps.k() as usize;

    // Distinct quantized gradients in first-seen order, then solve them in
    // parallel; per-cell lookups below are all hits.
    let mut seen = HashMap::new();
    let mut unique = Vec::new();
    for v in averages.values() {
        let xi = v.expect("full tiling has no excluded cells");
        if seen.insert(cache.key(xi), ()).is_none() {
            unique.push(xi);
        }
    }
    unique
        .par_iter()
        .map(|&xi| cache.solve(params, geom, settings, xi).map(|_| ()))
        .collect::<Result<Vec<()>>>()?;

    let mut cells = Vec::with_capacity(k * k);
    for v in averages.values() {
        cells.push(cache.solve(params, geom, settings, v.unwrap())?);
    }
    Ok(CorrectorField {
        eps,
        averages,
        cells,
    })
}

/// Per-phase corrector errors: the integrals over the unit square of
/// `|chi_i^eps (P_eps(x, M_eps grad u) - grad u_eps)|^{p_i}`.
pub fn corrector_error(
    u: &FieldSolution,
    u_eps: &FieldSolution,
    params: &PhaseParams,
    geom: &MicroGeometry,
    eps: Epsilon,
    settings: &SolverSettings,
    cache: &XiCache,
) -> Result<(f64, f64)> {
    match u_eps.kind() {
        FieldKind::Epsilon(e) if e == eps => {}
        _ => {
            return Err(Error::MeshMismatch(
                "fine-scale solution does not match the requested eps".into(),
            ))
        }
    }
    let nf = u_eps.mesh_n();
    if nf % eps.k() as usize != 0 {
        return Err(Error::MeshNotNested {
            mesh_n: nf,
            k: eps.k(),
        });
    }
    let field = assemble_corrector(u, params, geom, eps, settings, cache)?;
    let rule = ElementRule::new();
    let w = 1.0 / (nf * nf * 4) as f64;
    let h = 1.0 / nf as f64;
    let mut acc = (0.0, 0.0);
    for ey in 0..nf {
        for ex in 0..nf {
            let grads = u_eps.grad_at_quad(ex, ey, &rule);
            for (q, &(s, t)) in rule.points.iter().enumerate() {
                let x = Vec2::new((ex as f64 + s) * h, (ey as f64 + t) * h);
                let diff = field.eval(x) - grads[q];
                match geom.indicator(wrap_periodic(x, eps.value())) {
                    Phase::One => acc.0 += w * diff.norm().powf(params.p1()),
                    Phase::Two => acc.1 += w * diff.norm().powf(params.p2()),
                }
            }
        }
    }
    Ok(acc)
}

/// Settings shared by the corrector and bound studies.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudySettings {
    pub solver: SolverSettings,
    /// Mesh of the macroscopic solve (and of the averaging for the corrector).
    pub macro_mesh_n: usize,
    /// Fine meshes are this many elements per cell side (>= 8).
    pub elems_per_cell: usize,
    /// Gradient table range and spacing for the homogenized map. Sublinear
    /// media respond with unbounded slope near xi = 0, so benchmark studies
    /// should use a much finer spacing than the default to keep the
    /// macroscopic solve unbiased.
    pub table_r: f64,
    pub table_h: f64,
    /// Cache lattice for corrector assembly. The averaged gradients are
    /// already piecewise constant (k^2 distinct values), so a fine lattice
    /// only merges duplicates and keeps the corrector bias negligible.
    pub xi_step_corrector: f64,
    /// Cache lattice for the amplification double integrals, where one solve
    /// per distinct quadrature-point gradient would be prohibitive.
    pub xi_step_amplification: f64,
    /// Finite-eps slack of the lower-bound check.
    pub slack: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            solver: SolverSettings::default(),
            macro_mesh_n: 64,
            elems_per_cell: 16,
            table_r: 4.0,
            table_h: 0.25,
            xi_step_corrector: 1e-3,
            xi_step_amplification: 0.05,
            slack: 0.05,
        }
    }
}

impl StudySettings {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.elems_per_cell < 8 {
            return Err(Error::MeshTooCoarse {
                elems_per_cell: self.elems_per_cell,
            });
        }
        if self.macro_mesh_n < 8 {
            return Err(Error::invalid("mesh.macro_n", "must be at least 8"));
        }
        if !(self.slack >= 0.0 && self.slack < 1.0) {
            return Err(Error::invalid("experiment.slack", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-eps corrector errors and a-priori norms for a fixed physical problem.
#[derive(Clone, Debug, Serialize)]
pub struct CorrectorReport {
    pub params: PhaseParams,
    pub geom: MicroGeometry,
    pub load: Load,
    pub macro_mesh_n: usize,
    pub elems_per_cell: usize,
    pub eps_k: Vec<u32>,
    pub fine_mesh_n: Vec<usize>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub apriori_p1: Vec<f64>,
    pub apriori_p2: Vec<f64>,
}

impl CorrectorReport {
    fn validate(&self) -> Result<()> {
        let ok = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        if ok(&self.e1) && ok(&self.e2) && ok(&self.apriori_p1) && ok(&self.apriori_p2) {
            Ok(())
        } else {
            Err(Error::Format(
                "corrector report contains non-finite or negative entries".into(),
            ))
        }
    }
}

/// Solves the macroscopic problem once, then for each eps solves the
/// fine-scale problem, assembles the corrector from the macro solution, and
/// records the per-phase errors and a-priori norms.
pub fn corrector_study(
    problem: &MacroProblem,
    params: &PhaseParams,
    geom: &MicroGeometry,
    eps_list: &[Epsilon],
    study: &StudySettings,
) -> Result<CorrectorReport> {
    study.validate()?;
    if eps_list.is_empty() {
        return Err(Error::invalid("experiment.eps_list", "must not be empty"));
    }
    for w in eps_list.windows(2) {
        if w[1].k() <= w[0].k() {
            return Err(Error::invalid(
                "experiment.eps_list",
                "must be strictly decreasing in eps",
            ));
        }
    }
    let map = tabulate(params, geom, study.table_r, study.table_h, &study.solver)?;
    let macro_problem = problem.with_mesh_n(study.macro_mesh_n)?;
    let u = solve_macro(&macro_problem, &map, &study.solver)?;
    let cache = XiCache::new(study.xi_step_corrector);

    let mut report = CorrectorReport {
        params: *params,
        geom: *geom,
        load: problem.load(),
        macro_mesh_n: study.macro_mesh_n,
        elems_per_cell: study.elems_per_cell,
        eps_k: Vec::new(),
        fine_mesh_n: Vec::new(),
        e1: Vec::new(),
        e2: Vec::new(),
        apriori_p1: Vec::new(),
        apriori_p2: Vec::new(),
    };
    for &eps in eps_list {
        let fine_n = study.elems_per_cell * eps.k() as usize;
        let fine_problem = problem.with_mesh_n(fine_n)?;
        let u_eps = solve_epsilon(&fine_problem, params, geom, eps, &study.solver)?;
        let (e1, e2) = corrector_error(&u, &u_eps, params, geom, eps, &study.solver, &cache)?;
        let (a1, a2) = apriori_norms(&u_eps, params, geom, eps)?;
        report.eps_k.push(eps.k());
        report.fine_mesh_n.push(fine_n);
        report.e1.push(e1);
        report.e2.push(e2);
        report.apriori_p1.push(a1);
        report.apriori_p2.push(a2);
    }
    report.validate()?;
    Ok(report)
}

/// Left side of the fluctuation lower bound: the double integral over the
/// region and the unit cell of `chi_i(y) |P(y, grad u(x))|^q`, with the cell
/// solves cached over quantized gradients.
pub fn amplification_lhs(
    u: &FieldSolution,
    params: &PhaseParams,
    geom: &MicroGeometry,
    region: &Region,
    q: f64,
    settings: &SolverSettings,
    cache: &XiCache,
) -> Result<(f64, f64)> {
    if !(q > 1.0) {
        return Err(Error::invalid(
            "experiment.q",
            format!("must exceed 1, got {q}"),
        ));
    }
    let n = u.mesh_n();
    let rule = ElementRule::new();
    let w = 1.0 / (n * n * 4) as f64;

    // Gather the distinct quantized gradients first so the cell solves can
    // run in parallel; then accumulate serially in element order.
    let mut keys: HashMap<(u64, u64), Vec2> = HashMap::new();
    let mut order = Vec::new();
    for ey in 0..n {
        for ex in 0..n {
            if !region.contains(n, ex, ey)? {
                continue;
            }
            for g in u.grad_at_quad(ex, ey, &rule) {
                let key = cache.key(g);
                if keys.insert(key, g).is_none() {
                    order.push((key, g));
                }
            }
        }
    }
    let integrals: Result<Vec<_>> = order
        .par_iter()
        .map(|&(key, g)| {
            let sol = cache.solve(params, geom, settings, g)?;
            Ok((key, sol.phase_power_integrals(q, q)))
        })
        .collect();
    let integrals: HashMap<(u64, u64), (f64, f64)> = integrals?.into_iter().collect();

    let mut acc = (0.0, 0.0);
    for ey in 0..n {
        for ex in 0..n {
            if !region.contains(n, ex, ey)? {
                continue;
            }
            for g in u.grad_at_quad(ex, ey, &rule) {
                let (i1, i2) = integrals[&cache.key(g)];
                acc.0 += w * i1;
                acc.1 += w * i2;
            }
        }
    }
    Ok(acc)
}

/// Right side of the fluctuation lower bound: the per-phase `L^q` norm of the
/// fine-scale gradient over the region.
pub fn amplification_rhs(
    u_eps: &FieldSolution,
    params: &PhaseParams,
    geom: &MicroGeometry,
    region: &Region,
    q: f64,
    eps: Epsilon,
) -> Result<(f64, f64)> {
    if !(q > 1.0) {
        return Err(Error::invalid(
            "experiment.q",
            format!("must exceed 1, got {q}"),
        ));
    }
    let _ = params;
    let n = u_eps.mesh_n();
    let rule = ElementRule::new();
    let w = 1.0 / (n * n * 4) as f64;
    let h = 1.0 / n as f64;
    let mut acc = (0.0, 0.0);
    for ey in 0..n {
        for ex in 0..n {
            if !region.contains(n, ex, ey)? {
                continue;
            }
            let grads = u_eps.grad_at_quad(ex, ey, &rule);
            for (qp, &(s, t)) in rule.points.iter().enumerate() {
                let x = Vec2::new((ex as f64 + s) * h, (ey as f64 + t) * h);
                let v = w * grads[qp].norm().powf(q);
                match geom.indicator(wrap_periodic(x, eps.value())) {
                    Phase::One => acc.0 += v,
                    Phase::Two => acc.1 += v,
                }
            }
        }
    }
    Ok(acc)
}

/// Both sides of the fluctuation bound: the corrector-based left side once,
/// the fine-scale right side per eps, with per-eps flags where the bound is
/// violated beyond the slack.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub params: PhaseParams,
    pub geom: MicroGeometry,
    pub load: Load,
    pub q: f64,
    pub region: String,
    pub slack: f64,
    pub macro_mesh_n: usize,
    pub elems_per_cell: usize,
    pub lhs1: f64,
    pub lhs2: f64,
    pub eps_k: Vec<u32>,
    pub rhs1: Vec<f64>,
    pub rhs2: Vec<f64>,
    /// RHS - LHS per phase and eps; the bound predicts nonnegative limits.
    pub gap1: Vec<f64>,
    pub gap2: Vec<f64>,
    pub flagged: Vec<bool>,
}

pub fn bound_report(
    problem: &MacroProblem,
    params: &PhaseParams,
    geom: &MicroGeometry,
    region: &Region,
    q: f64,
    eps_list: &[Epsilon],
    study: &StudySettings,
) -> Result<BoundReport> {
    study.validate()?;
    if eps_list.is_empty() {
        return Err(Error::invalid("experiment.eps_list", "must not be empty"));
    }
    let map = tabulate(params, geom, study.table_r, study.table_h, &study.solver)?;
    let macro_problem = problem.with_mesh_n(study.macro_mesh_n)?;
    let u = solve_macro(&macro_problem, &map, &study.solver)?;
    let cache = XiCache::new(study.xi_step_amplification);
    let (lhs1, lhs2) = amplification_lhs(&u, params, geom, region, q, &study.solver, &cache)?;

    let mut report = BoundReport {
        params: *params,
        geom: *geom,
        load: problem.load(),
        q,
        region: region.label(),
        slack: study.slack,
        macro_mesh_n: study.macro_mesh_n,
        elems_per_cell: study.elems_per_cell,
        lhs1,
        lhs2,
        eps_k: Vec::new(),
        rhs1: Vec::new(),
        rhs2: Vec::new(),
        gap1: Vec::new(),
        gap2: Vec::new(),
        flagged: Vec::new(),
    };
    for &eps in eps_list {
        let fine_n = study.elems_per_cell * eps.k() as usize;
        let fine_problem = problem.with_mesh_n(fine_n)?;
        let u_eps = solve_epsilon(&fine_problem, params, geom, eps, &study.solver)?;
        let (r1, r2) = amplification_rhs(&u_eps, params, geom, region, q, eps)?;
        let flag = r1 < lhs1 * (1.0 - study.slack) || r2 < lhs2 * (1.0 - study.slack);
        report.eps_k.push(eps.k());
        report.rhs1.push(r1);
        report.rhs2.push(r2);
        report.gap1.push(r1 - lhs1);
        report.gap2.push(r2 - lhs2);
        report.flagged.push(flag);
    }
    Ok(report)
}
