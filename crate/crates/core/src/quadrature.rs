//! Bilinear (Q1) square elements with 2x2 Gauss quadrature. Every integral in
//! the crate uses this one family so that cell, fine-scale and macroscopic
//! quantities are mutually consistent.

use crate::vec2::Vec2;

/// Offset of the 2x2 Gauss points from the element center, in reference
/// coordinates on [0,1]: `1 / (2 sqrt(3))`.
pub const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_88;

/// Local coordinates of the four Gauss points on the reference square [0,1]^2.
pub fn gauss_points() -> [(f64, f64); 4] {
    let a = 0.5 - GAUSS_OFFSET;
    let b = 0.5 + GAUSS_OFFSET;
    [(a, a), (b, a), (b, b), (a, b)]
}

/// Values of the four bilinear shape functions at local point `(s, t)`.
/// Local node order: (0,0), (1,0), (1,1), (0,1).
pub fn shape_values(s: f64, t: f64) -> [f64; 4] {
    [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t]
}

/// Gradients of the four bilinear shape functions at local point `(s, t)`,
/// in reference coordinates (divide by the element size for physical ones).
pub fn shape_gradients(s: f64, t: f64) -> [Vec2; 4] {
    [
        Vec2::new(-(1.0 - t), -(1.0 - s)),
        Vec2::new(1.0 - t, -s),
        Vec2::new(t, s),
        Vec2::new(-t, 1.0 - s),
    ]
}

/// Precomputed per-quadrature-point shape data shared by the assembly loops.
#[derive(Clone)]
pub struct ElementRule {
    /// `grads[q][a]`: reference gradient of shape `a` at Gauss point `q`.
    pub grads: [[Vec2; 4]; 4],
    /// `vals[q][a]`: value of shape `a` at Gauss point `q`.
    pub vals: [[f64; 4]; 4],
    /// Local coordinates of the Gauss points.
    pub points: [(f64, f64); 4],
}

impl ElementRule {
    pub fn new() -> Self {
        let points = gauss_points();
        let mut grads = [[Vec2::ZERO; 4]; 4];
        let mut vals = [[0.0; 4]; 4];
        for (q, &(s, t)) in points.iter().enumerate() {
            grads[q] = shape_gradients(s, t);
            vals[q] = shape_values(s, t);
        }
        ElementRule {
            grads,
            vals,
            points,
        }
    }
}

impl Default for ElementRule {
    fn default() -> Self {
        Self::new()
    }
}
