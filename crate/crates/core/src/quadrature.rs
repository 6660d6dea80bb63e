//! Quadrature on the reference triangle and the unit interval.
//!
//! Triangle rules are conical (collapsed) Gauss–Legendre products. They are
//! not symmetric, but they are exact to any requested degree, which is what
//! the error-norm integration needs.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[0, 1]` with `n` points; weights sum to 1.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a Gauss rule needs at least one point");
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        // Map from [-1, 1] to [0, 1].
        points[i] = 0.5 * (1.0 - z);
        points[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (points, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// One-dimensional rule on `[0, 1]` used along triangle edges.
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    /// Sum to 1 (the reference edge length).
    pub weights: Vec<f64>,
}

/// Quadrature on the reference triangle with vertices (0,0), (1,0), (0,1).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Barycentric coordinates (λ0, λ1, λ2) of each point.
    pub points: Vec<[f64; 3]>,
    /// Sum to 1/2, the reference triangle area.
    pub weights: Vec<f64>,
    pub degree: usize,
    pub edge: EdgeRule,
}

impl QuadratureRule {
    /// A rule exact for polynomials of total degree `degree` on the triangle
    /// and along edges.
    pub fn with_degree(degree: usize) -> Self {
        // The collapse Jacobian (1 - b) raises the degree in b by one.
        let n = (degree + 3) / 2;
        let (gp, gw) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&b, &wb) in gp.iter().zip(&gw) {
            for (&a, &wa) in gp.iter().zip(&gw) {
                let xi = a * (1.0 - b);
                let eta = b;
                points.push([1.0 - xi - eta, xi, eta]);
                weights.push(wa * wb * (1.0 - b));
            }
        }
        let ne = (degree + 2) / 2;
        let (ep, ew) = gauss_legendre_unit(ne.max(1));
        QuadratureRule {
            points,
            weights,
            degree,
            edge: EdgeRule {
                points: ep,
                weights: ew,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}
