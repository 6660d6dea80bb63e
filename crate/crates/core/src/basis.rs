//! Lagrange bases on triangles in barycentric form.
//!
//! Local node order: the three vertices, then `degree - 1` nodes on each
//! local edge (edge `i` runs from vertex `i+1` to vertex `i+2`), then
//! interior nodes.

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 4;

#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    degree: usize,
    /// Barycentric multi-index of each node; entries sum to `degree`.
    nodes: Vec<[usize; 3]>,
}

impl LagrangeBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::invalid(format!(
                "Lagrange degree must be in 1..={MAX_DEGREE}, got {degree}"
            )));
        }
        let k = degree;
        let mut nodes = Vec::with_capacity((k + 1) * (k + 2) / 2);
        for v in 0..3 {
            let mut a = [0; 3];
            a[v] = k;
            nodes.push(a);
        }
        for e in 0..3 {
            let (a, b) = ((e + 1) % 3, (e + 2) % 3);
            for s in 1..k {
                let mut m = [0; 3];
                m[a] = k - s;
                m[b] = s;
                nodes.push(m);
            }
        }
        for i in 1..k {
            for j in 1..k {
                if i + j < k {
                    nodes.push([k - i - j, i, j]);
                }
            }
        }
        Ok(LagrangeBasis { degree, nodes })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_index(&self, i: usize) -> [usize; 3] {
        self.nodes[i]
    }

    pub fn node_barycentric(&self, i: usize) -> [f64; 3] {
        let k = self.degree as f64;
        self.nodes[i].map(|a| a as f64 / k)
    }

    /// Nodes per edge interior and in the element interior.
    pub fn n_edge_interior(&self) -> usize {
        self.degree - 1
    }

    pub fn n_cell_interior(&self) -> usize {
        let k = self.degree;
        if k < 3 {
            0
        } else {
            (k - 1) * (k - 2) / 2
        }
    }

    /// Values and barycentric partial derivatives at one point.
    pub fn eval(&self, lambda: &[f64; 3], values: &mut [f64], dlambda: &mut [[f64; 3]]) {
        let k = self.degree;
        let kf = k as f64;
        // 1-D factors P_m(λ) = Π_{s<m} (kλ - s)/(s + 1) and their derivatives.
        let mut p = [[0.0; MAX_DEGREE + 1]; 3];
        let mut dp = [[0.0; MAX_DEGREE + 1]; 3];
        for j in 0..3 {
            p[j][0] = 1.0;
            dp[j][0] = 0.0;
            for m in 0..k {
                let c = (kf * lambda[j] - m as f64) / (m as f64 + 1.0);
                p[j][m + 1] = p[j][m] * c;
                dp[j][m + 1] = dp[j][m] * c + p[j][m] * kf / (m as f64 + 1.0);
            }
        }
        for (i, a) in self.nodes.iter().enumerate() {
            let f = [p[0][a[0]], p[1][a[1]], p[2][a[2]]];
            values[i] = f[0] * f[1] * f[2];
            dlambda[i] = [
                dp[0][a[0]] * f[1] * f[2],
                f[0] * dp[1][a[1]] * f[2],
                f[0] * f[1] * dp[2][a[2]],
            ];
        }
    }

    pub fn tabulate(&self, points: &[[f64; 3]]) -> Tabulation {
        let n = self.len();
        let mut values = vec![0.0; n * points.len()];
        let mut dlambda = vec![[0.0; 3]; n * points.len()];
        for (q, lambda) in points.iter().enumerate() {
            self.eval(
                lambda,
                &mut values[q * n..(q + 1) * n],
                &mut dlambda[q * n..(q + 1) * n],
            );
        }
        Tabulation {
            n_basis: n,
            n_points: points.len(),
            values,
            dlambda,
        }
    }
}

/// Basis values and barycentric derivatives at a fixed point set.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub n_basis: usize,
    pub n_points: usize,
    values: Vec<f64>,
    dlambda: Vec<[f64; 3]>,
}

impl Tabulation {
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_basis..(q + 1) * self.n_basis]
    }

    /// Physical `(∂/∂x, ∂/∂t)` gradients at point `q` for an element with
    /// barycentric gradients `grad_lambda`.
    pub fn gradients(&self, q: usize, grad_lambda: &[[f64; 2]; 3], out: &mut [[f64; 2]]) {
        let d = &self.dlambda[q * self.n_basis..(q + 1) * self.n_basis];
        for (o, dl) in out.iter_mut().zip(d) {
            *o = [
                dl[0] * grad_lambda[0][0] + dl[1] * grad_lambda[1][0] + dl[2] * grad_lambda[2][0],
                dl[0] * grad_lambda[0][1] + dl[1] * grad_lambda[1][1] + dl[2] * grad_lambda[2][1],
            ];
        }
    }
}

/// Barycentric coordinates of the point at parameter `s ∈ [0, 1]` along
/// local edge `e` (from vertex `e+1` to vertex `e+2`).
pub fn edge_point(e: usize, s: f64) -> [f64; 3] {
    let mut l = [0.0; 3];
    l[(e + 1) % 3] = 1.0 - s;
    l[(e + 2) % 3] = s;
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        for k in 1..=MAX_DEGREE {
            let b = LagrangeBasis::new(k).unwrap();
            assert_eq!(b.len(), (k + 1) * (k + 2) / 2);
            assert_eq!(b.len(), 3 + 3 * b.n_edge_interior() + b.n_cell_interior());
        }
        assert!(LagrangeBasis::new(0).is_err());
        assert!(LagrangeBasis::new(5).is_err());
    }

    #[test]
    fn kronecker_property() {
        for k in 1..=MAX_DEGREE {
            let b = LagrangeBasis::new(k).unwrap();
            let n = b.len();
            let mut v = vec![0.0; n];
            let mut d = vec![[0.0; 3]; n];
            for i in 0..n {
                b.eval(&b.node_barycentric(i), &mut v, &mut d);
                for (j, vj) in v.iter().enumerate() {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((vj - e).abs() < 1e-13, "k={k} node {i} basis {j}: {vj}");
                }
            }
        }
    }

    #[test]
    fn p1_at_barycenter() {
        let b = LagrangeBasis::new(1).unwrap();
        let mut v = vec![0.0; 3];
        let mut d = vec![[0.0; 3]; 3];
        b.eval(&[1.0 / 3.0; 3], &mut v, &mut d);
        for x in v {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn barycentric_derivatives_match_finite_differences() {
        let b = LagrangeBasis::new(3).unwrap();
        let n = b.len();
        let l = [0.2, 0.3, 0.5];
        let mut v = vec![0.0; n];
        let mut d = vec![[0.0; 3]; n];
        b.eval(&l, &mut v, &mut d);
        let h = 1e-6;
        for j in 0..3 {
            let mut lp = l;
            let mut lm = l;
            lp[j] += h;
            lm[j] -= h;
            let mut vp = vec![0.0; n];
            let mut vm = vec![0.0; n];
            let mut dd = vec![[0.0; 3]; n];
            b.eval(&lp, &mut vp, &mut dd);
            b.eval(&lm, &mut vm, &mut dd);
            for i in 0..n {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - d[i][j]).abs() < 1e-7);
            }
        }
    }
}
