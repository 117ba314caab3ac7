//! Shared element-loop machinery for the matrix-free FEM assemblies.
//!
//! Per-element work is embarrassingly parallel; results go into per-element
//! slots and a serial, index-ordered reduction assembles them, so assembled
//! vectors and sums do not depend on the worker count.

use rayon::prelude::*;

/// Below this many elements the loops stay serial.
pub(crate) const PAR_THRESHOLD: usize = 4096;

pub(crate) fn for_each_element<F>(elem_vec: &mut [[f64; 4]], elem_scalar: &mut [f64], body: F)
where
    F: Fn(usize, &mut [f64; 4], &mut f64) + Sync + Send,
{
    if elem_vec.len() >= PAR_THRESHOLD {
        elem_vec
            .par_iter_mut()
            .zip(elem_scalar.par_iter_mut())
            .enumerate()
            .for_each(|(e, (v, s))| body(e, v, s));
    } else {
        for (e, (v, s)) in elem_vec.iter_mut().zip(elem_scalar.iter_mut()).enumerate() {
            body(e, v, s);
        }
    }
}

pub(crate) fn gather(u: &[f64], nodes: [usize; 4]) -> [f64; 4] {
    [u[nodes[0]], u[nodes[1]], u[nodes[2]], u[nodes[3]]]
}
