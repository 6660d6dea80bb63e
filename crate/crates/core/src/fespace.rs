//! Continuous and broken Lagrange spaces, interpolation, and error norms.

use std::sync::Arc;

use crate::basis::{LagrangeBasis, Tabulation};
use crate::error::{Error, Result};
use crate::forms::{ExactField, ExactSolution, TrialState};
use crate::mesh::{PointLocator, SpaceTimeMesh};
use crate::quadrature::QuadratureRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    Continuous,
    Broken,
}

/// Polynomial degrees of the discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceConfig {
    /// Degree of the elevation and velocity trial spaces.
    pub trial_degree: usize,
    /// Degree of the continuous stress (`σ = ∂u/∂x`) trial space.
    pub sigma_degree: usize,
    /// Degree of the broken test space.
    pub test_degree: usize,
    /// Exactness degree of the assembly quadrature.
    pub quadrature_degree: usize,
}

impl SpaceConfig {
    /// Trial degree `p`, stress one degree lower, test degree `r = p`.
    pub fn with_trial_degree(p: usize) -> Self {
        let sigma = p.saturating_sub(1).max(1);
        SpaceConfig {
            trial_degree: p,
            sigma_degree: sigma,
            test_degree: p,
            quadrature_degree: 2 * p + 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let max = crate::basis::MAX_DEGREE;
        for (name, d) in [
            ("trial", self.trial_degree),
            ("sigma", self.sigma_degree),
            ("test", self.test_degree),
        ] {
            if d == 0 || d > max {
                return Err(Error::invalid(format!(
                    "{name} degree {d} outside 1..={max}"
                )));
            }
        }
        if self.test_degree < self.trial_degree {
            return Err(Error::invalid(format!(
                "test degree {} below trial degree {}",
                self.test_degree, self.trial_degree
            )));
        }
        let need = 2 * self.trial_degree.max(self.test_degree) + 2;
        if self.quadrature_degree < need {
            return Err(Error::invalid(format!(
                "quadrature degree {} below {need}",
                self.quadrature_degree
            )));
        }
        Ok(())
    }

    /// Quadrature degree used when measuring errors against exact fields.
    pub fn error_quadrature_degree(&self) -> usize {
        (2 * self.trial_degree + 4).max(10)
    }
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig::with_trial_degree(2)
    }
}

#[derive(Debug)]
pub struct FESpace {
    mesh: Arc<SpaceTimeMesh>,
    basis: LagrangeBasis,
    continuity: Continuity,
    cell_dofs: Vec<usize>,
    dof_coords: Vec<[f64; 2]>,
}

impl FESpace {
    pub fn new(mesh: Arc<SpaceTimeMesh>, degree: usize, continuity: Continuity) -> Result<Self> {
        let basis = LagrangeBasis::new(degree)?;
        let nloc = basis.len();
        let nt = mesh.n_triangles();
        let mut cell_dofs = Vec::with_capacity(nt * nloc);
        let n_dofs = match continuity {
            Continuity::Broken => {
                cell_dofs.extend(0..nt * nloc);
                nt * nloc
            }
            Continuity::Continuous => {
                let nv = mesh.n_vertices();
                let ne_int = basis.n_edge_interior();
                let nc_int = basis.n_cell_interior();
                let edge_base = nv;
                let cell_base = nv + mesh.n_edges() * ne_int;
                for (k, tri) in mesh.triangles().iter().enumerate() {
                    cell_dofs.extend_from_slice(tri);
                    let edges = mesh.triangle_edges(k);
                    for (e, &ge) in edges.iter().enumerate() {
                        let a = tri[(e + 1) % 3];
                        let forward = mesh.edges()[ge].vertices[0] == a;
                        for s in 1..=ne_int {
                            let pos = if forward { s - 1 } else { ne_int - s };
                            cell_dofs.push(edge_base + ge * ne_int + pos);
                        }
                    }
                    for s in 0..nc_int {
                        cell_dofs.push(cell_base + k * nc_int + s);
                    }
                }
                cell_base + nt * nc_int
            }
        };
        let mut dof_coords = vec![[f64::NAN; 2]; n_dofs];
        for k in 0..nt {
            let g = mesh.geometry(k);
            for i in 0..nloc {
                dof_coords[cell_dofs[k * nloc + i]] = g.point(&basis.node_barycentric(i));
            }
        }
        Ok(FESpace {
            mesh,
            basis,
            continuity,
            cell_dofs,
            dof_coords,
        })
    }

    pub fn mesh(&self) -> &Arc<SpaceTimeMesh> {
        &self.mesh
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn n_local(&self) -> usize {
        self.basis.len()
    }

    /// Global DOF indices of triangle `k` in local node order.
    pub fn cell_dofs(&self, k: usize) -> &[usize] {
        let n = self.basis.len();
        &self.cell_dofs[k * n..(k + 1) * n]
    }

    pub fn dof_coords(&self) -> &[[f64; 2]] {
        &self.dof_coords
    }

    pub fn tabulate(&self, points: &[[f64; 3]]) -> Tabulation {
        self.basis.tabulate(points)
    }
}

/// Convenience constructor matching the continuous/broken choice.
pub fn make_space(
    mesh: &Arc<SpaceTimeMesh>,
    degree: usize,
    continuity: Continuity,
) -> Result<Arc<FESpace>> {
    FESpace::new(mesh.clone(), degree, continuity).map(Arc::new)
}

/// A finite element function: coefficients on a space.
#[derive(Debug, Clone)]
pub struct FieldFunction {
    space: Arc<FESpace>,
    coeffs: Vec<f64>,
}

impl FieldFunction {
    pub fn new(space: Arc<FESpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::invalid(format!(
                "{} coefficients for a space with {} DOFs",
                coeffs.len(),
                space.n_dofs()
            )));
        }
        Ok(FieldFunction { space, coeffs })
    }

    pub fn zeros(space: Arc<FESpace>) -> Self {
        let n = space.n_dofs();
        FieldFunction {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn space(&self) -> &Arc<FESpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Value and `(∂/∂x, ∂/∂t)` gradient inside triangle `k`.
    pub fn eval_in(&self, k: usize, lambda: &[f64; 3]) -> (f64, [f64; 2]) {
        let basis = self.space.basis();
        let n = basis.len();
        let mut v = [0.0; 15];
        let mut d = [[0.0; 3]; 15];
        basis.eval(lambda, &mut v[..n], &mut d[..n]);
        let g = self.space.mesh().geometry(k);
        let dofs = self.space.cell_dofs(k);
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for i in 0..n {
            let c = self.coeffs[dofs[i]];
            val += c * v[i];
            for (gd, j) in grad.iter_mut().zip(0..2) {
                *gd += c
                    * (d[i][0] * g.grad_lambda[0][j]
                        + d[i][1] * g.grad_lambda[1][j]
                        + d[i][2] * g.grad_lambda[2][j]);
            }
        }
        (val, grad)
    }

    /// Point value, or `None` outside the mesh.
    pub fn evaluate(&self, locator: &PointLocator<'_>, x: [f64; 2]) -> Option<f64> {
        locator.locate(x).map(|(k, l)| self.eval_in(k, &l).0)
    }
}

/// Nodal interpolant of `f(x, t)`.
pub fn interpolate(f: impl Fn(f64, f64) -> f64, space: &Arc<FESpace>) -> Result<FieldFunction> {
    let mut coeffs = Vec::with_capacity(space.n_dofs());
    for (i, p) in space.dof_coords().iter().enumerate() {
        let v = f(p[0], p[1]);
        if !v.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite sample {v} at DOF {i} ({}, {})",
                p[0], p[1]
            )));
        }
        coeffs.push(v);
    }
    FieldFunction::new(space.clone(), coeffs)
}

/// Per-field error integrals against an exact field.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldError {
    pub l2: f64,
    /// `‖∂/∂x (e)‖`.
    pub dx: f64,
    /// `‖∂/∂t (e)‖`.
    pub dt: f64,
}

impl FieldError {
    /// Full space-time H¹ norm.
    pub fn h1(&self) -> f64 {
        (self.l2 * self.l2 + self.dx * self.dx + self.dt * self.dt).sqrt()
    }

    /// `sqrt(‖e‖² + ‖∂e/∂x‖²)`, the one-dimensional H(div) norm.
    pub fn hdiv(&self) -> f64 {
        (self.l2 * self.l2 + self.dx * self.dx).sqrt()
    }
}

pub fn field_error(field: &FieldFunction, exact: &ExactField, quad_degree: usize) -> FieldError {
    let rule = QuadratureRule::with_degree(quad_degree);
    let space = field.space();
    let tab = space.tabulate(&rule.points);
    let n = space.n_local();
    let mesh = space.mesh();
    let mut grads = vec![[0.0; 2]; n];
    let (mut l2, mut dx, mut dt) = (0.0, 0.0, 0.0);
    for k in 0..mesh.n_triangles() {
        let g = mesh.geometry(k);
        let dofs = space.cell_dofs(k);
        for q in 0..rule.len() {
            let w = rule.weights[q] * 2.0 * g.area;
            let x = g.point(&rule.points[q]);
            tab.gradients(q, &g.grad_lambda, &mut grads);
            let vals = tab.values(q);
            let (mut v, mut gx, mut gt) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let c = field.coeffs()[dofs[i]];
                v += c * vals[i];
                gx += c * grads[i][0];
                gt += c * grads[i][1];
            }
            let ev = v - (exact.value)(x[0], x[1]);
            let ex = gx - (exact.dx)(x[0], x[1]);
            let et = gt - (exact.dt)(x[0], x[1]);
            l2 += w * ev * ev;
            dx += w * ex * ex;
            dt += w * et * et;
        }
    }
    FieldError {
        l2: l2.sqrt(),
        dx: dx.sqrt(),
        dt: dt.sqrt(),
    }
}

/// Error norms of a discrete solution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorNorms {
    pub zeta: FieldError,
    pub u: FieldError,
    pub sigma: FieldError,
}

impl ErrorNorms {
    pub fn l2_zeta(&self) -> f64 {
        self.zeta.l2
    }
    pub fn l2_u(&self) -> f64 {
        self.u.l2
    }
    pub fn l2_sigma(&self) -> f64 {
        self.sigma.l2
    }
    pub fn h1_zeta(&self) -> f64 {
        self.zeta.h1()
    }
    pub fn h1_u(&self) -> f64 {
        self.u.h1()
    }
    pub fn hdiv_sigma(&self) -> f64 {
        self.sigma.hdiv()
    }

    /// Combined L² norm of all three fields.
    pub fn l2_total(&self) -> f64 {
        (self.zeta.l2.powi(2) + self.u.l2.powi(2) + self.sigma.l2.powi(2)).sqrt()
    }

    /// Trial-space norm: H¹ parts for elevation and velocity, H(div) for stress.
    pub fn u_norm(&self) -> f64 {
        (self.h1_zeta().powi(2) + self.h1_u().powi(2) + self.hdiv_sigma().powi(2)).sqrt()
    }
}

pub fn error_norms(state: &TrialState, exact: &ExactSolution, quad_degree: usize) -> ErrorNorms {
    ErrorNorms {
        zeta: field_error(&state.zeta, &exact.zeta, quad_degree),
        u: field_error(&state.u, &exact.u, quad_degree),
        sigma: field_error(&state.sigma, &exact.sigma, quad_degree),
    }
}
