//! The broken space-time weak form of the viscous shallow water equations in
//! one spatial dimension, its load functional and Gateaux derivative, and
//! the element inner products of the broken test space.
//!
//! Unknowns are the elevation `ζ`, the velocity `u` and the stress
//! `σ = ∂u/∂x`, all continuous. Test functions `(v, w, q)` are broken
//! polynomials. Only spatial derivatives are integrated by parts, so edge
//! terms carry the spatial normal component `n_x` alone and edges of constant
//! time contribute nothing.

use std::sync::Arc;

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;

use crate::basis::{edge_point, Tabulation};
use crate::error::{Error, Result};
use crate::fespace::{interpolate, make_space, Continuity, FESpace, FieldFunction, SpaceConfig};
use crate::mesh::{BoundaryTag, Side, SpaceTimeMesh};
use crate::quadrature::QuadratureRule;

pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type SpaceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant(c: f64) -> SpaceTimeFn {
    Arc::new(move |_, _| c)
}

pub fn constant_in_space(c: f64) -> SpaceFn {
    Arc::new(move |_| c)
}

/// Which nonlinear terms are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormVariant {
    Nonlinear,
    /// Water column frozen at the bathymetry (`H = h_b`) and no convection.
    Linearized,
}

#[derive(Clone)]
pub struct PhysicalParams {
    /// Gravitational acceleration [m/s²].
    pub g: f64,
    /// Depth-averaged turbulent viscosity.
    pub mu: f64,
    /// Linear bottom friction factor [1/s].
    pub tau_bf: f64,
    /// Bathymetry `h_b(x)` [m]; the water column is `H = ζ + h_b`.
    pub h_b: SpaceFn,
    /// Momentum body force.
    pub f: SpaceTimeFn,
    /// Continuity source, zero for physical runs.
    pub s_zeta: SpaceTimeFn,
    pub variant: FormVariant,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            g: 9.81,
            mu: 0.0,
            tau_bf: 0.0,
            h_b: constant_in_space(0.0),
            f: constant(0.0),
            s_zeta: constant(0.0),
            variant: FormVariant::Nonlinear,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0) {
            return Err(Error::invalid(format!(
                "g must be positive, got {}",
                self.g
            )));
        }
        if !(self.mu >= 0.0) || !(self.tau_bf >= 0.0) {
            return Err(Error::invalid("viscosity and friction must be nonnegative"));
        }
        Ok(())
    }
}

/// Velocity condition on one lateral end.
#[derive(Clone)]
pub enum VelocityBc {
    /// `u = û(t)`.
    Dirichlet(SpaceTimeFn),
    /// `σ = σ̂(t)`, prescribing the viscous flux instead of the velocity.
    Stress(SpaceTimeFn),
}

/// Exact field with its space-time partial derivatives.
#[derive(Clone)]
pub struct ExactField {
    pub value: SpaceTimeFn,
    pub dx: SpaceTimeFn,
    pub dt: SpaceTimeFn,
}

#[derive(Clone)]
pub struct ExactSolution {
    pub zeta: ExactField,
    pub u: ExactField,
    pub sigma: ExactField,
}

/// How initial data become the fixed DOFs on `t = t₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IcInterpolation {
    /// Nodal values at every Lagrange node.
    #[default]
    Nodal,
    /// Nodal values at mesh vertices, linear along each edge. Avoids the
    /// over- and undershoots of higher-order interpolants of a step.
    VertexLinear,
}

/// Physical parameters, boundary and initial data, and the domain.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub params: PhysicalParams,
    /// Elevation data on the inflow end.
    pub zeta_hat: SpaceTimeFn,
    /// Velocity conditions on the left and right ends.
    pub velocity_bc: [VelocityBc; 2],
    pub zeta0: SpaceFn,
    pub u0: SpaceFn,
    pub ic_interpolation: IcInterpolation,
    pub inflow: Side,
    pub x_range: (f64, f64),
    pub t_range: (f64, f64),
    pub exact: Option<ExactSolution>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.x_range.1 > self.x_range.0) || !(self.t_range.1 > self.t_range.0) {
            return Err(Error::invalid("empty space-time domain"));
        }
        for x in [self.x_range.0, self.x_range.1] {
            if !(self.zeta0)(x).is_finite() || !(self.u0)(x).is_finite() {
                return Err(Error::invalid(format!(
                    "initial data not finite at x = {x}"
                )));
            }
        }
        Ok(())
    }

    /// Structured mesh of this problem's domain with its inflow designation.
    pub fn structured_mesh(&self, nx: usize, nt: usize) -> Result<SpaceTimeMesh> {
        SpaceTimeMesh::build_structured(self.x_range, self.t_range, nx, nt, self.inflow)
    }

    fn velocity_bc(&self, side: Side) -> &VelocityBc {
        match side {
            Side::Left => &self.velocity_bc[0],
            Side::Right => &self.velocity_bc[1],
        }
    }

    /// The same problem on the time window `t_range` with new initial data.
    pub fn restricted(&self, t_range: (f64, f64), zeta0: SpaceFn, u0: SpaceFn) -> ProblemSpec {
        ProblemSpec {
            t_range,
            zeta0,
            u0,
            ..self.clone()
        }
    }
}

/// Weighting of the broken test-space inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GramSpec {
    /// Scale gradient terms by the squared element diameter.
    pub diameter_weighted: bool,
    /// Include the time derivative in the gradient terms.
    pub time_derivative: bool,
}

impl Default for GramSpec {
    fn default() -> Self {
        GramSpec {
            diameter_weighted: true,
            time_derivative: false,
        }
    }
}

/// Discrete solution `(ζ, u, σ)`.
#[derive(Debug, Clone)]
pub struct TrialState {
    pub zeta: FieldFunction,
    pub u: FieldFunction,
    pub sigma: FieldFunction,
}

/// Trial and test spaces on one mesh, with cached tabulations.
pub struct Discretization {
    mesh: Arc<SpaceTimeMesh>,
    config: SpaceConfig,
    trial: Arc<FESpace>,
    sigma: Arc<FESpace>,
    test: Arc<FESpace>,
    gram: GramSpec,
    rule: QuadratureRule,
    vol: [Tabulation; 3],
    edge: [[Tabulation; 3]; 3],
}

/// Local trial layout `[ζ | u | σ]` and test layout `[v | w | q]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalSizes {
    pub np: usize,
    pub ns: usize,
    pub nr: usize,
}

impl LocalSizes {
    pub fn trial(&self) -> usize {
        2 * self.np + self.ns
    }
    pub fn test(&self) -> usize {
        3 * self.nr
    }
}

impl Discretization {
    pub fn new(mesh: Arc<SpaceTimeMesh>, config: SpaceConfig) -> Result<Self> {
        Self::with_gram(mesh, config, GramSpec::default())
    }

    pub fn with_gram(
        mesh: Arc<SpaceTimeMesh>,
        config: SpaceConfig,
        gram: GramSpec,
    ) -> Result<Self> {
        config.validate()?;
        let trial = make_space(&mesh, config.trial_degree, Continuity::Continuous)?;
        let sigma = make_space(&mesh, config.sigma_degree, Continuity::Continuous)?;
        let test = make_space(&mesh, config.test_degree, Continuity::Broken)?;
        let rule = QuadratureRule::with_degree(config.quadrature_degree);
        let vol = [
            trial.tabulate(&rule.points),
            sigma.tabulate(&rule.points),
            test.tabulate(&rule.points),
        ];
        let edge_points: Vec<Vec<[f64; 3]>> = (0..3)
            .map(|e| rule.edge.points.iter().map(|&s| edge_point(e, s)).collect())
            .collect();
        let tab_edges = |space: &FESpace| -> [Tabulation; 3] {
            [0, 1, 2].map(|e| space.tabulate(&edge_points[e]))
        };
        let edge = [tab_edges(&trial), tab_edges(&sigma), tab_edges(&test)];
        Ok(Discretization {
            mesh,
            config,
            trial,
            sigma,
            test,
            gram,
            rule,
            vol,
            edge,
        })
    }

    pub fn mesh(&self) -> &Arc<SpaceTimeMesh> {
        &self.mesh
    }

    pub fn config(&self) -> &SpaceConfig {
        &self.config
    }

    /// Continuous space shared by `ζ` and `u`.
    pub fn trial_space(&self) -> &Arc<FESpace> {
        &self.trial
    }

    pub fn sigma_space(&self) -> &Arc<FESpace> {
        &self.sigma
    }

    /// One scalar component of the broken test space.
    pub fn test_space(&self) -> &Arc<FESpace> {
        &self.test
    }

    pub fn gram_spec(&self) -> GramSpec {
        self.gram
    }

    pub(crate) fn sizes(&self) -> LocalSizes {
        LocalSizes {
            np: self.trial.n_local(),
            ns: self.sigma.n_local(),
            nr: self.test.n_local(),
        }
    }

    /// Length of the global trial vector `[ζ | u | σ]`.
    pub fn n_trial_dofs(&self) -> usize {
        2 * self.trial.n_dofs() + self.sigma.n_dofs()
    }

    /// Length of the global test vector `[v | w | q]`.
    pub fn n_test_dofs(&self) -> usize {
        3 * self.test.n_dofs()
    }

    /// Global trial indices of triangle `k` in local `[ζ | u | σ]` order.
    pub fn local_trial_dofs(&self, k: usize) -> Vec<usize> {
        let np = self.trial.n_dofs();
        let mut out = Vec::with_capacity(self.sizes().trial());
        let d = self.trial.cell_dofs(k);
        out.extend_from_slice(d);
        out.extend(d.iter().map(|i| i + np));
        out.extend(self.sigma.cell_dofs(k).iter().map(|i| i + 2 * np));
        out
    }

    /// Global test indices of triangle `k` in local `[v | w | q]` order.
    pub fn local_test_dofs(&self, k: usize) -> Vec<usize> {
        let n = self.test.n_dofs();
        let d = self.test.cell_dofs(k);
        (0..3)
            .flat_map(|c| d.iter().map(move |i| c * n + i))
            .collect()
    }

    pub fn state_from_vec(&self, v: &[f64]) -> Result<TrialState> {
        if v.len() != self.n_trial_dofs() {
            return Err(Error::invalid(format!(
                "trial vector has length {}, expected {}",
                v.len(),
                self.n_trial_dofs()
            )));
        }
        let np = self.trial.n_dofs();
        Ok(TrialState {
            zeta: FieldFunction::new(self.trial.clone(), v[..np].to_vec())?,
            u: FieldFunction::new(self.trial.clone(), v[np..2 * np].to_vec())?,
            sigma: FieldFunction::new(self.sigma.clone(), v[2 * np..].to_vec())?,
        })
    }

    pub fn state_to_vec(&self, s: &TrialState) -> Result<Vec<f64>> {
        self.check_state(s)?;
        let mut v = Vec::with_capacity(self.n_trial_dofs());
        v.extend_from_slice(s.zeta.coeffs());
        v.extend_from_slice(s.u.coeffs());
        v.extend_from_slice(s.sigma.coeffs());
        Ok(v)
    }

    pub fn check_state(&self, s: &TrialState) -> Result<()> {
        let same = |f: &FieldFunction, sp: &Arc<FESpace>| {
            Arc::ptr_eq(f.space(), sp)
                || (Arc::ptr_eq(f.space().mesh(), &self.mesh)
                    && f.space().degree() == sp.degree()
                    && f.coeffs().len() == sp.n_dofs())
        };
        if same(&s.zeta, &self.trial) && same(&s.u, &self.trial) && same(&s.sigma, &self.sigma) {
            Ok(())
        } else {
            Err(Error::invalid(
                "trial state does not live on this discretization's mesh",
            ))
        }
    }

    /// `ζ = ζ0(x)`, `u = u0(x)` extended constantly in time, `σ = 0`.
    pub fn initial_guess(&self, spec: &ProblemSpec) -> Result<TrialState> {
        let z0 = spec.zeta0.clone();
        let u0 = spec.u0.clone();
        Ok(TrialState {
            zeta: interpolate(|x, _| z0(x), &self.trial)?,
            u: interpolate(|x, _| u0(x), &self.trial)?,
            sigma: FieldFunction::zeros(self.sigma.clone()),
        })
    }

    pub fn zero_state(&self) -> TrialState {
        TrialState {
            zeta: FieldFunction::zeros(self.trial.clone()),
            u: FieldFunction::zeros(self.trial.clone()),
            sigma: FieldFunction::zeros(self.sigma.clone()),
        }
    }
}

/// Role of one element edge in the boundary terms.
#[derive(Debug, Clone, Copy, PartialEq)]
enum EdgeRole {
    /// `n_x = 0`: no spatial flux.
    Temporal,
    Interior,
    Lateral {
        side: Side,
        inflow: bool,
    },
}

fn edge_role(mesh: &SpaceTimeMesh, spec: &ProblemSpec, k: usize, e: usize, nx: f64) -> EdgeRole {
    if nx == 0.0 {
        return EdgeRole::Temporal;
    }
    match mesh.edge_tag(k, e) {
        None => EdgeRole::Interior,
        Some(BoundaryTag::SpatialInflow) => EdgeRole::Lateral {
            side: spec.inflow,
            inflow: true,
        },
        Some(BoundaryTag::SpatialOutflow) => EdgeRole::Lateral {
            side: spec.inflow.opposite(),
            inflow: false,
        },
        Some(_) => EdgeRole::Temporal,
    }
}

/// Element contributions: `B(U; φ_i)`, `F(φ_i)` and optionally `∂B/∂U`.
pub(crate) struct ElementSystem {
    pub b: Vec<f64>,
    pub f: Vec<f64>,
    /// Row-major `test × trial`.
    pub jac: Option<Vec<f64>>,
}

struct PointFields {
    zeta: f64,
    zeta_t: f64,
    u: f64,
    u_x: f64,
    u_t: f64,
    sigma: f64,
}

fn combine(c: &[f64], vals: &[f64], grads: &[[f64; 2]]) -> (f64, f64, f64) {
    let (mut v, mut x, mut t) = (0.0, 0.0, 0.0);
    for i in 0..c.len() {
        v += c[i] * vals[i];
        x += c[i] * grads[i][0];
        t += c[i] * grads[i][1];
    }
    (v, x, t)
}

impl Discretization {
    /// Local trial coefficients of triangle `k` from a global trial vector.
    pub(crate) fn gather(&self, k: usize, u: &[f64]) -> Vec<f64> {
        self.local_trial_dofs(k).iter().map(|&i| u[i]).collect()
    }

    pub(crate) fn element_system(
        &self,
        spec: &ProblemSpec,
        k: usize,
        local: &[f64],
        with_jacobian: bool,
    ) -> ElementSystem {
        let sz = self.sizes();
        let (np, ns, nr) = (sz.np, sz.ns, sz.nr);
        let nt = sz.trial();
        let mut b = vec![0.0; 3 * nr];
        let mut f = vec![0.0; 3 * nr];
        let mut jac = if with_jacobian {
            Some(vec![0.0; 3 * nr * nt])
        } else {
            None
        };
        let prm = &spec.params;
        let nonlinear = prm.variant == FormVariant::Nonlinear;
        let (g, mu, tau) = (prm.g, prm.mu, prm.tau_bf);
        let geo = self.mesh.geometry(k);
        let (cz, cu, cs) = (&local[..np], &local[np..2 * np], &local[2 * np..]);

        let mut gp = vec![[0.0; 2]; np];
        let mut gs = vec![[0.0; 2]; ns];
        let mut gr = vec![[0.0; 2]; nr];

        let idx = |row: usize, col: usize| row * nt + col;

        for q in 0..self.rule.len() {
            let wq = self.rule.weights[q] * 2.0 * geo.area;
            let x = geo.point(&self.rule.points[q]);
            let vp = self.vol[0].values(q);
            let vs = self.vol[1].values(q);
            let vr = self.vol[2].values(q);
            self.vol[0].gradients(q, &geo.grad_lambda, &mut gp);
            self.vol[1].gradients(q, &geo.grad_lambda, &mut gs);
            self.vol[2].gradients(q, &geo.grad_lambda, &mut gr);
            let (zeta, _, zeta_t) = combine(cz, vp, &gp);
            let (u, u_x, u_t) = combine(cu, vp, &gp);
            let (sigma, _, _) = combine(cs, vs, &gs);
            let pf = PointFields {
                zeta,
                zeta_t,
                u,
                u_x,
                u_t,
                sigma,
            };
            let hb = (prm.h_b)(x[0]);
            let h = if nonlinear { pf.zeta + hb } else { hb };
            let conv = if nonlinear { pf.u * pf.u_x } else { 0.0 };
            let src_f = (prm.f)(x[0], x[1]);
            let src_s = (prm.s_zeta)(x[0], x[1]);
            let flux = pf.u * h;
            let mom = pf.u_t + conv + tau * pf.u;
            let wflux = -g * pf.zeta + mu * pf.sigma;
            for i in 0..nr {
                let (phi, phix) = (vr[i], gr[i][0]);
                b[i] += wq * (pf.zeta_t * phi - phix * flux);
                b[nr + i] += wq * (mom * phi + wflux * phix);
                b[2 * nr + i] += wq * (pf.sigma * phi + pf.u * phix);
                f[i] += wq * src_s * phi;
                f[nr + i] += wq * src_f * phi;
            }
            if let Some(jac) = jac.as_mut() {
                for i in 0..nr {
                    let (phi, phix) = (vr[i], gr[i][0]);
                    let (rv, rw, rq) = (i, nr + i, 2 * nr + i);
                    for j in 0..np {
                        let (psi, psix, psit) = (vp[j], gp[j][0], gp[j][1]);
                        // ζ column
                        let dflux_dz = if nonlinear { pf.u * psi } else { 0.0 };
                        jac[idx(rv, j)] += wq * (psit * phi - phix * dflux_dz);
                        jac[idx(rw, j)] += wq * (-g * psi * phix);
                        // u column
                        let cj = np + j;
                        jac[idx(rv, cj)] += wq * (-phix * psi * h);
                        let dconv = if nonlinear {
                            psi * pf.u_x + pf.u * psix
                        } else {
                            0.0
                        };
                        jac[idx(rw, cj)] += wq * ((psit + tau * psi + dconv) * phi);
                        jac[idx(rq, cj)] += wq * (psi * phix);
                    }
                    for j in 0..ns {
                        let psi = vs[j];
                        let cj = 2 * np + j;
                        jac[idx(rw, cj)] += wq * mu * psi * phix;
                        jac[idx(rq, cj)] += wq * psi * phi;
                    }
                }
            }
        }

        let erule = &self.rule.edge;
        for e in 0..3 {
            let nx = geo.normals[e][0];
            let role = edge_role(&self.mesh, spec, k, e, nx);
            if role == EdgeRole::Temporal {
                continue;
            }
            let (zeta_data, vel_bc) = match role {
                EdgeRole::Lateral { side, inflow } => (inflow, Some(spec.velocity_bc(side))),
                _ => (false, None),
            };
            let len = geo.edge_lengths[e];
            for (qi, (&s, &w)) in erule.points.iter().zip(&erule.weights).enumerate() {
                let ws = w * len;
                let lam = edge_point(e, s);
                let x = geo.point(&lam);
                let vp = self.edge[0][e].values(qi);
                let vs = self.edge[1][e].values(qi);
                let vr = self.edge[2][e].values(qi);
                let zeta: f64 = cz.iter().zip(vp).map(|(c, p)| c * p).sum();
                let u: f64 = cu.iter().zip(vp).map(|(c, p)| c * p).sum();
                let sigma: f64 = cs.iter().zip(vs).map(|(c, p)| c * p).sum();
                let hb = (prm.h_b)(x[0]);
                let h = if nonlinear { zeta + hb } else { hb };
                // Which edge quantities are trial unknowns and which are data.
                let (u_trial, sigma_trial) = match vel_bc {
                    None => (true, true),
                    Some(VelocityBc::Dirichlet(_)) => (false, true),
                    Some(VelocityBc::Stress(_)) => (true, false),
                };
                let zeta_trial = !zeta_data;
                let mut fw = 0.0;
                let mut fq = 0.0;
                if zeta_data {
                    fw -= g * (spec.zeta_hat)(x[0], x[1]) * nx;
                }
                match vel_bc {
                    Some(VelocityBc::Dirichlet(uh)) => fq += uh(x[0], x[1]) * nx,
                    Some(VelocityBc::Stress(sh)) => fw += mu * sh(x[0], x[1]) * nx,
                    None => {}
                }
                let mut bw = 0.0;
                if sigma_trial {
                    bw -= mu * sigma * nx;
                }
                if zeta_trial {
                    bw += g * zeta * nx;
                }
                let bq = if u_trial { -u * nx } else { 0.0 };
                let bv = u * h * nx;
                for i in 0..nr {
                    let phi = vr[i];
                    b[i] += ws * bv * phi;
                    b[nr + i] += ws * bw * phi;
                    b[2 * nr + i] += ws * bq * phi;
                    f[nr + i] += ws * fw * phi;
                    f[2 * nr + i] += ws * fq * phi;
                }
                if let Some(jac) = jac.as_mut() {
                    for i in 0..nr {
                        let phi = vr[i];
                        let (rv, rw, rq) = (i, nr + i, 2 * nr + i);
                        for j in 0..np {
                            let psi = vp[j];
                            if nonlinear {
                                jac[idx(rv, j)] += ws * phi * u * psi * nx;
                            }
                            if zeta_trial {
                                jac[idx(rw, j)] += ws * phi * g * psi * nx;
                            }
                            let cj = np + j;
                            jac[idx(rv, cj)] += ws * phi * psi * h * nx;
                            if u_trial {
                                jac[idx(rq, cj)] -= ws * phi * psi * nx;
                            }
                        }
                        if sigma_trial {
                            for j in 0..ns {
                                jac[idx(rw, 2 * np + j)] -= ws * phi * mu * vs[j] * nx;
                            }
                        }
                    }
                }
            }
        }
        ElementSystem { b, f, jac }
    }

    /// Second derivative of `B` contracted with local test coefficients
    /// `weights` (layout `[v | w | q]`): a symmetric `trial × trial` block,
    /// row-major. Zero for the linearized form.
    pub(crate) fn element_hessian(
        &self,
        spec: &ProblemSpec,
        k: usize,
        weights: &[f64],
    ) -> Option<Vec<f64>> {
        if spec.params.variant == FormVariant::Linearized {
            return None;
        }
        let sz = self.sizes();
        let (np, nr) = (sz.np, sz.nr);
        let nt = sz.trial();
        let mut hes = vec![0.0; nt * nt];
        let geo = self.mesh.geometry(k);
        let (ev, ew) = (&weights[..nr], &weights[nr..2 * nr]);
        let mut gp = vec![[0.0; 2]; np];
        let mut gr = vec![[0.0; 2]; nr];
        for q in 0..self.rule.len() {
            let wq = self.rule.weights[q] * 2.0 * geo.area;
            let vp = self.vol[0].values(q);
            let vr = self.vol[2].values(q);
            self.vol[0].gradients(q, &geo.grad_lambda, &mut gp);
            self.vol[2].gradients(q, &geo.grad_lambda, &mut gr);
            let (_, e_vx, _) = combine(ev, vr, &gr);
            let e_w: f64 = ew.iter().zip(vr).map(|(c, p)| c * p).sum();
            for a in 0..np {
                for c in 0..np {
                    // ∂²(−v_x u H)/∂ζ∂u
                    let zu = -wq * e_vx * vp[a] * vp[c];
                    hes[a * nt + np + c] += zu;
                    hes[(np + c) * nt + a] += zu;
                    // ∂²(u u_x w)/∂u∂u
                    hes[(np + a) * nt + np + c] += wq * e_w * (vp[a] * gp[c][0] + vp[c] * gp[a][0]);
                }
            }
        }
        let erule = &self.rule.edge;
        for e in 0..3 {
            let nx = geo.normals[e][0];
            if edge_role(&self.mesh, spec, k, e, nx) == EdgeRole::Temporal {
                continue;
            }
            let len = geo.edge_lengths[e];
            for (qi, &w) in erule.weights.iter().enumerate() {
                let ws = w * len;
                let vp = self.edge[0][e].values(qi);
                let vr = self.edge[2][e].values(qi);
                let e_v: f64 = ev.iter().zip(vr).map(|(c, p)| c * p).sum();
                for a in 0..np {
                    for c in 0..np {
                        let zu = ws * e_v * vp[a] * vp[c] * nx;
                        hes[a * nt + np + c] += zu;
                        hes[(np + c) * nt + a] += zu;
                    }
                }
            }
        }
        Some(hes)
    }

    /// One scalar block of the element Gram matrix (identical for the three
    /// test components), row-major `nr × nr`.
    pub(crate) fn element_gram_block(&self, k: usize) -> Vec<f64> {
        let nr = self.sizes().nr;
        let geo = self.mesh.geometry(k);
        let h2 = if self.gram.diameter_weighted {
            geo.diameter * geo.diameter
        } else {
            1.0
        };
        let mut gm = vec![0.0; nr * nr];
        let mut gr = vec![[0.0; 2]; nr];
        for q in 0..self.rule.len() {
            let wq = self.rule.weights[q] * 2.0 * geo.area;
            let vr = self.vol[2].values(q);
            self.vol[2].gradients(q, &geo.grad_lambda, &mut gr);
            for i in 0..nr {
                for j in 0..nr {
                    let mut grad = gr[i][0] * gr[j][0];
                    if self.gram.time_derivative {
                        grad += gr[i][1] * gr[j][1];
                    }
                    gm[i * nr + j] += wq * (h2 * grad + vr[i] * vr[j]);
                }
            }
        }
        gm
    }
}

/// Dense element Gram matrix over the three test components of triangle `k`.
pub fn gram_matrix(disc: &Discretization, k: usize) -> Result<Mat<f64>> {
    if k >= disc.mesh.n_triangles() {
        return Err(Error::invalid(format!("triangle index {k} out of range")));
    }
    let nr = disc.sizes().nr;
    let block = disc.element_gram_block(k);
    Ok(Mat::from_fn(3 * nr, 3 * nr, |i, j| {
        if i / nr == j / nr {
            block[(i % nr) * nr + j % nr]
        } else {
            0.0
        }
    }))
}

/// Global block-diagonal Gram matrix over the test vector.
pub fn global_gram(disc: &Discretization) -> SparseColMat<usize, f64> {
    let nt = disc.mesh.n_triangles();
    let nr = disc.sizes().nr;
    let blocks: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|k| disc.element_gram_block(k))
        .collect();
    let mut trip = Vec::with_capacity(nt * 3 * nr * nr);
    for (k, block) in blocks.iter().enumerate() {
        let rows = disc.local_test_dofs(k);
        for c in 0..3 {
            for i in 0..nr {
                for j in 0..nr {
                    trip.push(Triplet::new(
                        rows[c * nr + i],
                        rows[c * nr + j],
                        block[i * nr + j],
                    ));
                }
            }
        }
    }
    let n = disc.n_test_dofs();
    SparseColMat::try_new_from_triplets(n, n, &trip).expect("valid Gram triplets")
}

fn element_systems(
    disc: &Discretization,
    spec: &ProblemSpec,
    u: &[f64],
    with_jacobian: bool,
) -> Vec<ElementSystem> {
    (0..disc.mesh.n_triangles())
        .into_par_iter()
        .map(|k| disc.element_system(spec, k, &disc.gather(k, u), with_jacobian))
        .collect()
}

/// `B(U; φ_j) − F(φ_j)` for every broken test basis function.
pub fn residual(state: &TrialState, spec: &ProblemSpec, disc: &Discretization) -> Result<Vec<f64>> {
    let u = disc.state_to_vec(state)?;
    Ok(residual_vec(disc, spec, &u))
}

pub(crate) fn residual_vec(disc: &Discretization, spec: &ProblemSpec, u: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; disc.n_test_dofs()];
    for (k, sys) in element_systems(disc, spec, u, false).iter().enumerate() {
        for (i, row) in disc.local_test_dofs(k).into_iter().enumerate() {
            r[row] += sys.b[i] - sys.f[i];
        }
    }
    r
}

/// The load functional `F(φ_j)`.
pub fn load(spec: &ProblemSpec, disc: &Discretization) -> Vec<f64> {
    let zero = vec![0.0; disc.n_trial_dofs()];
    let mut f = vec![0.0; disc.n_test_dofs()];
    for (k, sys) in element_systems(disc, spec, &zero, false).iter().enumerate() {
        for (i, row) in disc.local_test_dofs(k).into_iter().enumerate() {
            f[row] += sys.f[i];
        }
    }
    f
}

/// Sparse Gateaux derivative `B'(U)` with rows over the broken test basis
/// and columns over the full trial vector.
pub fn jacobian(
    state: &TrialState,
    spec: &ProblemSpec,
    disc: &Discretization,
) -> Result<SparseColMat<usize, f64>> {
    let u = disc.state_to_vec(state)?;
    Ok(jacobian_vec(disc, spec, &u))
}

pub(crate) fn jacobian_vec(
    disc: &Discretization,
    spec: &ProblemSpec,
    u: &[f64],
) -> SparseColMat<usize, f64> {
    let sz = disc.sizes();
    let (nte, ntr) = (sz.test(), sz.trial());
    let systems = element_systems(disc, spec, u, true);
    let mut trip = Vec::with_capacity(systems.len() * nte * ntr);
    for (k, sys) in systems.iter().enumerate() {
        let rows = disc.local_test_dofs(k);
        let cols = disc.local_trial_dofs(k);
        let jac = sys.jac.as_ref().expect("jacobian requested");
        for i in 0..nte {
            for j in 0..ntr {
                let v = jac[i * ntr + j];
                if v != 0.0 {
                    trip.push(Triplet::new(rows[i], cols[j], v));
                }
            }
        }
    }
    SparseColMat::try_new_from_triplets(disc.n_test_dofs(), disc.n_trial_dofs(), &trip)
        .expect("valid Jacobian triplets")
}

/// Global `trial × trial` second-derivative term contracted with a test
/// vector `weights` (layout `[v | w | q]`).
pub(crate) fn hessian_vec(
    disc: &Discretization,
    spec: &ProblemSpec,
    weights: &[f64],
) -> SparseColMat<usize, f64> {
    let ntr = disc.sizes().trial();
    let n = disc.n_trial_dofs();
    let blocks: Vec<Option<Vec<f64>>> = (0..disc.mesh.n_triangles())
        .into_par_iter()
        .map(|k| {
            let w: Vec<f64> = disc
                .local_test_dofs(k)
                .iter()
                .map(|&i| weights[i])
                .collect();
            disc.element_hessian(spec, k, &w)
        })
        .collect();
    let mut trip = Vec::new();
    for (k, blk) in blocks.iter().enumerate() {
        if let Some(h) = blk {
            let cols = disc.local_trial_dofs(k);
            for i in 0..ntr {
                for j in 0..ntr {
                    if h[i * ntr + j] != 0.0 {
                        trip.push(Triplet::new(cols[i], cols[j], h[i * ntr + j]));
                    }
                }
            }
        }
    }
    SparseColMat::try_new_from_triplets(n, n, &trip).expect("valid Hessian triplets")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{lake_case, manufactured_case, ManufacturedParams};
    use crate::linalg::{max_abs, norm, spmv, spmv_t};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn disc_for(spec: &ProblemSpec, nx: usize, nt: usize, p: usize) -> Discretization {
        let mesh = Arc::new(spec.structured_mesh(nx, nt).unwrap());
        Discretization::new(mesh, SpaceConfig::with_trial_degree(p)).unwrap()
    }

    fn random_vec(n: usize, rng: &mut StdRng, scale: f64) -> Vec<f64> {
        (0..n)
            .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect()
    }

    fn exact_state(spec: &ProblemSpec, disc: &Discretization) -> TrialState {
        let ex = spec.exact.as_ref().unwrap();
        TrialState {
            zeta: interpolate(|x, t| (ex.zeta.value)(x, t), disc.trial_space()).unwrap(),
            u: interpolate(|x, t| (ex.u.value)(x, t), disc.trial_space()).unwrap(),
            sigma: interpolate(|x, t| (ex.sigma.value)(x, t), disc.sigma_space()).unwrap(),
        }
    }

    fn zero_spec() -> ProblemSpec {
        let mut spec = lake_case();
        spec.params.h_b = constant_in_space(0.0);
        spec
    }

    #[test]
    fn zero_state_zero_data_gives_zero_residual() {
        let spec = zero_spec();
        let disc = disc_for(&spec, 3, 2, 2);
        let r = residual(&disc.zero_state(), &spec, &disc).unwrap();
        assert_eq!(max_abs(&r), 0.0);
        assert_eq!(max_abs(&load(&spec, &disc)), 0.0);
    }

    #[test]
    fn lake_at_rest_residual_vanishes() {
        let spec = lake_case();
        let disc = disc_for(&spec, 10, 2, 2);
        let r = residual(&disc.zero_state(), &spec, &disc).unwrap();
        assert!(max_abs(&r) <= 1e-12);
    }

    #[test]
    fn manufactured_interpolant_has_small_residual() {
        let spec = manufactured_case(ManufacturedParams::default());
        let disc = disc_for(&spec, 16, 8, 4);
        let r = residual(&exact_state(&spec, &disc), &spec, &disc).unwrap();
        assert!(max_abs(&r) <= 1e-6, "max residual {}", max_abs(&r));
        // On a coarser mesh the residual is larger, so the edge terms are
        // consistent rather than accidentally small.
        let coarse = disc_for(&spec, 4, 2, 4);
        let rc = residual(&exact_state(&spec, &coarse), &spec, &coarse).unwrap();
        assert!(max_abs(&rc) > max_abs(&r));
    }

    #[test]
    fn boundary_data_enter_the_manufactured_residual() {
        // Breaking the inflow elevation data must show up in the residual.
        let mut spec = manufactured_case(ManufacturedParams::default());
        let disc = disc_for(&spec, 8, 4, 3);
        let u = exact_state(&spec, &disc);
        let base = max_abs(&residual(&u, &spec, &disc).unwrap());
        spec.zeta_hat = constant(0.0);
        let broken = max_abs(&residual(&u, &spec, &disc).unwrap());
        assert!(broken > 100.0 * base);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = StdRng::seed_from_u64(7);
        for spec in [
            manufactured_case(ManufacturedParams::default()),
            crate::cases::tidal_case(),
        ] {
            let disc = disc_for(&spec, 3, 3, 2);
            let n = disc.n_trial_dofs();
            let u0 = disc.state_to_vec(&exact_or_guess(&spec, &disc)).unwrap();
            let u: Vec<f64> = u0
                .iter()
                .zip(random_vec(n, &mut rng, 0.1))
                .map(|(a, b)| a + b)
                .collect();
            let delta = random_vec(n, &mut rng, 1.0);
            let eps = 1e-6;
            let up: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + eps * d).collect();
            let um: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a - eps * d).collect();
            let fd: Vec<f64> = residual_vec(&disc, &spec, &up)
                .iter()
                .zip(residual_vec(&disc, &spec, &um))
                .map(|(a, b)| (a - b) / (2.0 * eps))
                .collect();
            let jd = spmv(&jacobian_vec(&disc, &spec, &u), &delta);
            let diff: Vec<f64> = fd.iter().zip(&jd).map(|(a, b)| a - b).collect();
            assert!(
                norm(&diff) <= 1e-6 * norm(&jd),
                "{} vs {}",
                norm(&diff),
                norm(&jd)
            );
        }
    }

    fn exact_or_guess(spec: &ProblemSpec, disc: &Discretization) -> TrialState {
        if spec.exact.is_some() {
            exact_state(spec, disc)
        } else {
            disc.initial_guess(spec).unwrap()
        }
    }

    #[test]
    fn gateaux_quotient_converges_at_first_order() {
        let spec = manufactured_case(ManufacturedParams::default());
        let disc = disc_for(&spec, 2, 2, 2);
        let mut rng = StdRng::seed_from_u64(11);
        let n = disc.n_trial_dofs();
        let u = random_vec(n, &mut rng, 1.0);
        let delta = random_vec(n, &mut rng, 1.0);
        let r0 = residual_vec(&disc, &spec, &u);
        let jd = spmv(&jacobian_vec(&disc, &spec, &u), &delta);
        let mut errs = Vec::new();
        for eps in [1e-3, 1e-4, 1e-5] {
            let up: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + eps * d).collect();
            let q: Vec<f64> = residual_vec(&disc, &spec, &up)
                .iter()
                .zip(&r0)
                .zip(&jd)
                .map(|((a, b), j)| (a - b) / eps - j)
                .collect();
            errs.push(norm(&q));
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 10.0).abs() < 1.0, "ratio {ratio}");
        }
    }

    #[test]
    fn linearized_jacobian_is_state_independent() {
        let spec = manufactured_case(ManufacturedParams::linearized());
        let disc = disc_for(&spec, 3, 2, 2);
        let mut rng = StdRng::seed_from_u64(3);
        let n = disc.n_trial_dofs();
        let a = jacobian_vec(&disc, &spec, &random_vec(n, &mut rng, 1.0));
        let b = jacobian_vec(&disc, &spec, &random_vec(n, &mut rng, 1.0));
        assert_eq!(a.val(), b.val());
        assert_eq!(a.symbolic().row_idx(), b.symbolic().row_idx());
        // The linear form equals its derivative applied to the state.
        let u = random_vec(n, &mut rng, 1.0);
        let bu: Vec<f64> = residual_vec(&disc, &spec, &u)
            .iter()
            .zip(load(&spec, &disc))
            .map(|(r, f)| r + f)
            .collect();
        let au = spmv(&a, &u);
        let d: Vec<f64> = bu.iter().zip(&au).map(|(x, y)| x - y).collect();
        assert!(max_abs(&d) < 1e-12 * max_abs(&au).max(1.0));
    }

    #[test]
    fn hessian_matches_differences_of_the_gradient() {
        let spec = manufactured_case(ManufacturedParams::default());
        let disc = disc_for(&spec, 2, 3, 2);
        let mut rng = StdRng::seed_from_u64(5);
        let (n, m) = (disc.n_trial_dofs(), disc.n_test_dofs());
        let u = random_vec(n, &mut rng, 1.0);
        let e = random_vec(m, &mut rng, 1.0);
        let delta = random_vec(n, &mut rng, 1.0);
        let eps = 1e-6;
        let grad = |v: &[f64]| spmv_t(&jacobian_vec(&disc, &spec, v), &e);
        let up: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + eps * d).collect();
        let um: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a - eps * d).collect();
        let fd: Vec<f64> = grad(&up)
            .iter()
            .zip(grad(&um))
            .map(|(a, b)| (a - b) / (2.0 * eps))
            .collect();
        let h = hessian_vec(&disc, &spec, &e);
        let hd = spmv(&h, &delta);
        let diff: Vec<f64> = fd.iter().zip(&hd).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-6 * norm(&hd));
        // Symmetric.
        let ht = spmv_t(&h, &delta);
        let asym: Vec<f64> = hd.iter().zip(&ht).map(|(a, b)| a - b).collect();
        assert!(max_abs(&asym) < 1e-12 * max_abs(&hd));
    }

    #[test]
    fn gram_blocks_are_symmetric_positive_definite() {
        let spec = manufactured_case(ManufacturedParams::default());
        let mesh = Arc::new(spec.structured_mesh(3, 2).unwrap().bisect(&[0, 5]).unwrap());
        for p in 1..=3 {
            let disc =
                Discretization::new(mesh.clone(), SpaceConfig::with_trial_degree(p)).unwrap();
            for k in 0..mesh.n_triangles() {
                let g = gram_matrix(&disc, k).unwrap();
                let mut asym: f64 = 0.0;
                for i in 0..g.nrows() {
                    for j in 0..g.ncols() {
                        asym = asym.max((g[(i, j)] - g[(j, i)]).abs());
                    }
                }
                assert!(asym <= 1e-13);
                assert!(g.llt(faer::Side::Lower).is_ok());
            }
        }
        assert!(gram_matrix(&disc_for(&spec, 1, 1, 1), 2).is_err());
    }

    #[test]
    fn gram_quadratic_form_of_constant_is_area() {
        let spec = manufactured_case(ManufacturedParams::default());
        let disc = disc_for(&spec, 2, 3, 2);
        let nr = disc.sizes().nr;
        for k in 0..disc.mesh().n_triangles() {
            let area = disc.mesh().element_geometry(k).unwrap().area;
            let g = gram_matrix(&disc, k).unwrap();
            // Constant 1 in the w component: coefficients are all ones there.
            let mut c = vec![0.0; 3 * nr];
            c[nr..2 * nr].iter_mut().for_each(|v| *v = 1.0);
            let mut q = 0.0;
            for i in 0..3 * nr {
                for j in 0..3 * nr {
                    q += c[i] * g[(i, j)] * c[j];
                }
            }
            assert!((q - area).abs() < 1e-13 * area.max(1.0));
        }
    }

    #[test]
    fn unit_body_force_loads_the_momentum_component_only() {
        let mut spec = zero_spec();
        spec.params.f = constant(1.0);
        let mesh = Arc::new(spec.structured_mesh(1, 1).unwrap());
        let disc = Discretization::new(mesh.clone(), SpaceConfig::with_trial_degree(2)).unwrap();
        let f = load(&spec, &disc);
        let nr = disc.sizes().nr;
        let rows = disc.local_test_dofs(0);
        let sum = |c: usize| -> f64 { rows[c * nr..(c + 1) * nr].iter().map(|&i| f[i]).sum() };
        let area = mesh.element_geometry(0).unwrap().area;
        assert_eq!(sum(0), 0.0);
        assert!((sum(1) - area).abs() < 1e-14);
        assert_eq!(sum(2), 0.0);
    }

    #[test]
    fn tidal_inflow_load_integrates_the_forcing() {
        let spec = crate::cases::tidal_case();
        let disc = disc_for(&spec, 2, 400, 2);
        let f = load(&spec, &disc);
        // Summing w-test functions of elements on the inflow edge gives
        // -g ∫ ζ̂ n_x dt with n_x = -1 on x = 0.
        let mesh = disc.mesh();
        let nr = disc.sizes().nr;
        let mut total = 0.0;
        for k in 0..mesh.n_triangles() {
            let rows = disc.local_test_dofs(k);
            total += rows[nr..2 * nr].iter().map(|&i| f[i]).sum::<f64>();
        }
        let a = crate::cases::TIDAL_ALPHA;
        let t_end = 604800.0;
        let expected = 9.81 * 0.1 * (a * t_end).sin() / a;
        assert!(
            (total - expected).abs() < 1e-6 * expected.abs().max(1.0),
            "{total} vs {expected}"
        );
    }
}
