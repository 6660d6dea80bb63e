//! Static condensation of the mixed system and the Newton iteration.
//!
//! With `R(U) = B(U) − F` and the block-diagonal Gram matrix `G`, the
//! discrete solution minimizes `½ Rᵀ G⁻¹ R` over the trial space. Each
//! Newton step solves
//!
//! ```text
//! (B'ᵀ G⁻¹ B' + H(e)) δ = −B'ᵀ e,    e = G⁻¹ R,
//! ```
//!
//! where `H(e)` is the second derivative of `B` contracted with `e`. This is
//! the Schur complement of the linearized saddle-point system, so one step
//! equals one Newton step on the coupled mixed problem. Initial-condition
//! DOFs are eliminated.

use std::fmt::Write as _;
use std::sync::Arc;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Mat, MatRef, Side as FaerSide};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::{FESpace, FieldFunction};
use crate::forms::{
    hessian_vec, jacobian_vec, Discretization, IcInterpolation, ProblemSpec, SpaceFn, TrialState,
};
use crate::linalg::{norm, spmv};
use crate::mesh::BoundaryTag;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Sparse LU of the condensed matrix.
    Direct,
    /// Jacobi-preconditioned conjugate gradients on the condensed matrix.
    ConjugateGradient { rel_tol: f64, max_iter: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Stop once an accepted full step is this small relative to the state.
    pub step_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub linear_solver: LinearSolver,
    pub step: StepKind,
}

/// Which condensed matrix a Newton step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// `B'ᵀ G⁻¹ B'` only; always semidefinite.
    GaussNewton,
    /// Adds the second-derivative term `H(e)`.
    SecondOrder,
    /// Gauss–Newton until the residual energy stagnates, then second order.
    Hybrid,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            step_tol: 1e-8,
            max_iter: 20,
            max_halvings: 8,
            linear_solver: LinearSolver::Direct,
            step: StepKind::Hybrid,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.step_tol >= 0.0) {
            return Err(Error::invalid("Newton tolerances must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Trial DOFs fixed by the initial conditions.
#[derive(Debug, Clone)]
pub struct Constraints {
    values: Vec<Option<f64>>,
    free: Vec<usize>,
    free_index: Vec<Option<usize>>,
}

impl Constraints {
    fn from_values(values: Vec<Option<f64>>) -> Self {
        let free: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_none()).collect();
        let mut free_index = vec![None; values.len()];
        for (j, &i) in free.iter().enumerate() {
            free_index[i] = Some(j);
        }
        Constraints {
            values,
            free,
            free_index,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> Option<f64> {
        self.values[i]
    }

    pub fn n_fixed(&self) -> usize {
        self.values.len() - self.free.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    /// Overwrite the fixed entries of a trial vector.
    pub fn apply(&self, u: &mut [f64]) {
        for (x, v) in u.iter_mut().zip(&self.values) {
            if let Some(v) = v {
                *x = *v;
            }
        }
    }

    /// Fixed entries as `(index, value)` pairs.
    pub fn fixed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
    }
}

/// Local node indices on local edge `e` of a degree-`p` Lagrange element.
fn edge_nodes(e: usize, p: usize) -> impl Iterator<Item = usize> {
    [(e + 1) % 3, (e + 2) % 3]
        .into_iter()
        .chain((0..p - 1).map(move |s| 3 + e * (p - 1) + s))
}

/// Fix every `ζ` and `u` DOF on the initial-time boundary to the
/// interpolated initial data. `σ` is left free.
pub fn apply_initial_conditions(disc: &Discretization, spec: &ProblemSpec) -> Result<Constraints> {
    let mesh = disc.mesh();
    let space = disc.trial_space();
    let np = space.n_dofs();
    let p = space.degree();
    let coords = space.dof_coords();
    let mut values = vec![None; disc.n_trial_dofs()];
    for k in 0..mesh.n_triangles() {
        for e in 0..3 {
            if mesh.edge_tag(k, e) != Some(BoundaryTag::InitialTime) {
                continue;
            }
            let dofs = space.cell_dofs(k);
            let tri = mesh.triangles()[k];
            let ends = [tri[(e + 1) % 3], tri[(e + 2) % 3]].map(|v| mesh.vertices()[v][0]);
            let data = |f: &SpaceFn, x: f64| match spec.ic_interpolation {
                IcInterpolation::Nodal => f(x),
                IcInterpolation::VertexLinear => {
                    let s = (x - ends[0]) / (ends[1] - ends[0]);
                    (1.0 - s) * f(ends[0]) + s * f(ends[1])
                }
            };
            for local in edge_nodes(e, p) {
                let d = dofs[local];
                let x = coords[d][0];
                let (z, u) = (data(&spec.zeta0, x), data(&spec.u0, x));
                if !z.is_finite() || !u.is_finite() {
                    return Err(Error::invalid(format!(
                        "initial data not finite at x = {x}"
                    )));
                }
                values[d] = Some(z);
                values[np + d] = Some(u);
            }
        }
    }
    Ok(Constraints::from_values(values))
}

/// Riesz representer of the residual, `(ẽ, ε̃, Ẽ) = G⁻¹ (F − B(U))`, on the
/// broken test space.
#[derive(Debug, Clone)]
pub struct ErrorRepresenter {
    space: Arc<FESpace>,
    coeffs: Vec<f64>,
    element_norms_sq: Vec<f64>,
}

impl ErrorRepresenter {
    /// Wrap test-space coefficients (layout `[v | w | q]`) and compute the
    /// element V-norms.
    pub fn from_coeffs(disc: &Discretization, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != disc.n_test_dofs() {
            return Err(Error::invalid(format!(
                "{} coefficients for a test vector of length {}",
                coeffs.len(),
                disc.n_test_dofs()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite representer coefficient at {i}"
            )));
        }
        let nr = disc.sizes().nr;
        let element_norms_sq = (0..disc.mesh().n_triangles())
            .into_par_iter()
            .map(|k| {
                let g = disc.element_gram_block(k);
                let rows = disc.local_test_dofs(k);
                let mut s = 0.0;
                for c in 0..3 {
                    let e: Vec<f64> = (0..nr).map(|i| coeffs[rows[c * nr + i]]).collect();
                    for i in 0..nr {
                        for j in 0..nr {
                            s += e[i] * g[i * nr + j] * e[j];
                        }
                    }
                }
                s
            })
            .collect();
        Ok(ErrorRepresenter {
            space: disc.test_space().clone(),
            coeffs,
            element_norms_sq,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Component `c` (0: continuity, 1: momentum, 2: constitutive).
    pub fn component(&self, c: usize) -> FieldFunction {
        let n = self.space.n_dofs();
        FieldFunction::new(self.space.clone(), self.coeffs[c * n..(c + 1) * n].to_vec())
            .expect("component length matches the test space")
    }

    /// Element V-norms.
    pub fn element_norms(&self) -> Vec<f64> {
        self.element_norms_sq
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    }

    pub fn element_norms_sq(&self) -> &[f64] {
        &self.element_norms_sq
    }

    /// Global V-norm, the energy-norm error estimate.
    pub fn norm(&self) -> f64 {
        self.element_norms_sq
            .iter()
            .map(|v| v.max(0.0))
            .sum::<f64>()
            .sqrt()
    }
}

/// Inverses of the element Gram blocks and a conditioning proxy per element.
pub(crate) struct GramFactors {
    nr: usize,
    inv: Vec<Vec<f64>>,
    /// `min(L_ii)² / max(L_ii)²` of the Cholesky factor; small means
    /// badly conditioned.
    pivot_ratio: Vec<f64>,
}

impl GramFactors {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let nr = disc.sizes().nr;
        let out: Vec<Result<(Vec<f64>, f64)>> = (0..disc.mesh().n_triangles())
            .into_par_iter()
            .map(|k| {
                let block = disc.element_gram_block(k);
                let g = Mat::from_fn(nr, nr, |i, j| block[i * nr + j]);
                let llt = g.llt(FaerSide::Lower).map_err(|_| Error::SolverFailure {
                    message: "element Gram matrix is not positive definite".into(),
                    element: Some(k),
                })?;
                let l = llt.L();
                let diag: Vec<f64> = (0..nr).map(|i| l[(i, i)]).collect();
                let (lo, hi) = diag
                    .iter()
                    .fold((f64::MAX, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
                let inv = llt.inverse();
                let flat = (0..nr * nr).map(|i| inv[(i / nr, i % nr)]).collect();
                Ok((flat, (lo / hi).powi(2)))
            })
            .collect();
        let mut inv = Vec::with_capacity(out.len());
        let mut pivot_ratio = Vec::with_capacity(out.len());
        for r in out {
            let (a, b) = r?;
            inv.push(a);
            pivot_ratio.push(b);
        }
        Ok(GramFactors {
            nr,
            inv,
            pivot_ratio,
        })
    }

    pub fn worst_element(&self) -> Option<usize> {
        (0..self.pivot_ratio.len())
            .min_by(|&a, &b| self.pivot_ratio[a].total_cmp(&self.pivot_ratio[b]))
    }

    /// Apply the inverse of the three-component block of element `k`.
    fn solve(&self, k: usize, r: &[f64]) -> Vec<f64> {
        let nr = self.nr;
        let inv = &self.inv[k];
        let mut out = vec![0.0; r.len()];
        for c in 0..3 {
            for i in 0..nr {
                out[c * nr + i] = (0..nr).map(|j| inv[i * nr + j] * r[c * nr + j]).sum();
            }
        }
        out
    }
}

struct ElementCondensed {
    /// Row-major `trial × trial`.
    a: Vec<f64>,
    grad: Vec<f64>,
    /// `G⁻¹ (B − F)` on the element.
    e: Vec<f64>,
    norm_sq: f64,
}

fn condense_element(
    disc: &Discretization,
    spec: &ProblemSpec,
    gram: &GramFactors,
    k: usize,
    u: &[f64],
    second_order: bool,
) -> ElementCondensed {
    let sz = disc.sizes();
    let (nte, ntr) = (sz.test(), sz.trial());
    let sys = disc.element_system(spec, k, &disc.gather(k, u), true);
    let jac = sys.jac.as_ref().expect("jacobian requested");
    let r: Vec<f64> = sys.b.iter().zip(&sys.f).map(|(b, f)| b - f).collect();
    let e = gram.solve(k, &r);
    let norm_sq = r.iter().zip(&e).map(|(a, b)| a * b).sum();
    let jm = MatRef::from_row_major_slice(jac, nte, ntr);
    let mut w = Mat::<f64>::zeros(nte, ntr);
    for j in 0..ntr {
        let col: Vec<f64> = (0..nte).map(|i| jac[i * ntr + j]).collect();
        let s = gram.solve(k, &col);
        for i in 0..nte {
            w[(i, j)] = s[i];
        }
    }
    let am = jm.transpose() * &w;
    let mut a: Vec<f64> = (0..ntr * ntr).map(|i| am[(i / ntr, i % ntr)]).collect();
    let grad = (0..ntr)
        .map(|j| (0..nte).map(|i| jac[i * ntr + j] * e[i]).sum())
        .collect();
    if second_order {
        if let Some(h) = disc.element_hessian(spec, k, &e) {
            for (x, y) in a.iter_mut().zip(h) {
                *x += y;
            }
        }
    }
    ElementCondensed {
        a,
        grad,
        e,
        norm_sq,
    }
}

/// Element residual energies `Rᵀ G⁻¹ R` and the representer, without
/// derivatives.
fn residual_energy(
    disc: &Discretization,
    spec: &ProblemSpec,
    gram: &GramFactors,
    u: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let out: Vec<(f64, Vec<f64>)> = (0..disc.mesh().n_triangles())
        .into_par_iter()
        .map(|k| {
            let sys = disc.element_system(spec, k, &disc.gather(k, u), false);
            let r: Vec<f64> = sys.b.iter().zip(&sys.f).map(|(b, f)| b - f).collect();
            let e = gram.solve(k, &r);
            (r.iter().zip(&e).map(|(a, b)| a * b).sum(), e)
        })
        .collect();
    out.into_iter().unzip()
}

fn build_representer(
    disc: &Discretization,
    norms_sq: Vec<f64>,
    local_e: &[Vec<f64>],
) -> ErrorRepresenter {
    let mut coeffs = vec![0.0; disc.n_test_dofs()];
    for (k, e) in local_e.iter().enumerate() {
        for (i, row) in disc.local_test_dofs(k).into_iter().enumerate() {
            // Stored with the sign of F − B.
            coeffs[row] = -e[i];
        }
    }
    ErrorRepresenter {
        space: disc.test_space().clone(),
        coeffs,
        element_norms_sq: norms_sq,
    }
}

/// The residual representer of a state, without a solve.
pub fn representer(
    state: &TrialState,
    spec: &ProblemSpec,
    disc: &Discretization,
) -> Result<ErrorRepresenter> {
    let u = disc.state_to_vec(state)?;
    let gram = GramFactors::new(disc)?;
    let (norms, e) = residual_energy(disc, spec, &gram, &u);
    Ok(build_representer(disc, norms, &e))
}

/// Result of one condensed Newton step.
#[derive(Debug, Clone)]
pub struct CondensedStep {
    /// Update of the full trial vector; zero on constrained DOFs.
    pub delta: Vec<f64>,
    /// Representer at the state the step was computed from.
    pub representer: ErrorRepresenter,
    /// Euclidean norm of `B'ᵀ G⁻¹ R` over the free DOFs.
    pub gradient_norm: f64,
    /// Decrease of the residual energy `Rᵀ G⁻¹ R` predicted by the
    /// quadratic model for the full step.
    pub model_decrease: f64,
}

pub(crate) struct Condensed {
    matrix: SparseColMat<usize, f64>,
    rhs: Vec<f64>,
    representer: ErrorRepresenter,
}

pub(crate) fn assemble_condensed(
    disc: &Discretization,
    spec: &ProblemSpec,
    constraints: &Constraints,
    gram: &GramFactors,
    u: &[f64],
    second_order: bool,
) -> Condensed {
    let ntr = disc.sizes().trial();
    let elems: Vec<ElementCondensed> = (0..disc.mesh().n_triangles())
        .into_par_iter()
        .map(|k| condense_element(disc, spec, gram, k, u, second_order))
        .collect();
    let nf = constraints.free.len();
    let mut rhs = vec![0.0; nf];
    let mut trip = Vec::with_capacity(elems.len() * ntr * ntr);
    for (k, el) in elems.iter().enumerate() {
        let cols = disc.local_trial_dofs(k);
        let fi: Vec<Option<usize>> = cols.iter().map(|&c| constraints.free_index[c]).collect();
        for i in 0..ntr {
            let Some(gi) = fi[i] else { continue };
            rhs[gi] -= el.grad[i];
            for j in 0..ntr {
                if let Some(gj) = fi[j] {
                    let v = el.a[i * ntr + j];
                    if v != 0.0 {
                        trip.push(Triplet::new(gi, gj, v));
                    }
                }
            }
        }
    }
    let matrix =
        SparseColMat::try_new_from_triplets(nf, nf, &trip).expect("valid condensed triplets");
    let (norms, es): (Vec<f64>, Vec<Vec<f64>>) =
        elems.into_iter().map(|el| (el.norm_sq, el.e)).unzip();
    let representer = build_representer(disc, norms, &es);
    Condensed {
        matrix,
        rhs,
        representer,
    }
}

fn solve_linear(
    a: &SparseColMat<usize, f64>,
    b: &[f64],
    solver: LinearSolver,
    worst: Option<usize>,
) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Ok(Vec::new());
    }
    let fail = |message: String| Error::SolverFailure {
        message,
        element: worst,
    };
    let x = match solver {
        LinearSolver::Direct => {
            let lu = a
                .sp_lu()
                .map_err(|e| fail(format!("sparse LU failed: {e:?}")))?;
            let rhs = Col::from_fn(b.len(), |i| b[i]);
            let x = lu.solve(&rhs);
            let mut x: Vec<f64> = (0..b.len()).map(|i| x[i]).collect();
            // One round of iterative refinement.
            let ax = spmv(a, &x);
            let res = Col::from_fn(b.len(), |i| b[i] - ax[i]);
            let dx = lu.solve(&res);
            for (i, v) in x.iter_mut().enumerate() {
                *v += dx[i];
            }
            x
        }
        LinearSolver::ConjugateGradient { rel_tol, max_iter } => {
            jacobi_cg(a, b, rel_tol, max_iter).map_err(fail)?
        }
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(fail("condensed system is singular".into()));
    }
    Ok(x)
}

/// Jacobi-preconditioned conjugate gradients.
pub fn jacobi_cg(
    a: &SparseColMat<usize, f64>,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> std::result::Result<Vec<f64>, String> {
    let n = b.len();
    let mut diag = vec![0.0; n];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    for j in 0..n {
        for p in cp[j]..cp[j + 1] {
            if ri[p] == j {
                diag[j] += a.val()[p];
            }
        }
    }
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err("condensed matrix has a nonpositive diagonal entry".into());
    }
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        let ap = spmv(a, &p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err("conjugate gradients met a direction of nonpositive curvature".into());
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= rel_tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(format!(
        "conjugate gradients did not converge in {max_iter} iterations"
    ))
}

fn scatter(constraints: &Constraints, x: &[f64]) -> Vec<f64> {
    let mut delta = vec![0.0; constraints.len()];
    for (j, &i) in constraints.free.iter().enumerate() {
        delta[i] = x[j];
    }
    delta
}

/// One Newton step by static condensation.
pub fn condensed_step(
    state: &TrialState,
    spec: &ProblemSpec,
    disc: &Discretization,
    constraints: &Constraints,
    cfg: &NewtonConfig,
) -> Result<CondensedStep> {
    let u = disc.state_to_vec(state)?;
    check_constraints(disc, constraints)?;
    let gram = GramFactors::new(disc)?;
    step_from(
        disc,
        spec,
        constraints,
        &gram,
        &u,
        cfg,
        cfg.step == StepKind::SecondOrder,
    )
}

fn check_constraints(disc: &Discretization, c: &Constraints) -> Result<()> {
    if c.len() != disc.n_trial_dofs() {
        return Err(Error::invalid(
            "constraints belong to a different discretization",
        ));
    }
    Ok(())
}

fn step_from(
    disc: &Discretization,
    spec: &ProblemSpec,
    constraints: &Constraints,
    gram: &GramFactors,
    u: &[f64],
    cfg: &NewtonConfig,
    second_order: bool,
) -> Result<CondensedStep> {
    let c = assemble_condensed(disc, spec, constraints, gram, u, second_order);
    let gradient_norm = norm(&c.rhs);
    let x = if gradient_norm == 0.0 {
        vec![0.0; c.rhs.len()]
    } else {
        solve_linear(&c.matrix, &c.rhs, cfg.linear_solver, gram.worst_element())?
    };
    let model_decrease = x.iter().zip(&c.rhs).map(|(a, b)| a * b).sum();
    Ok(CondensedStep {
        delta: scatter(constraints, &x),
        representer: c.representer,
        gradient_norm,
        model_decrease,
    })
}

/// Reference path: one Newton step from the full symmetric saddle-point
/// system
///
/// ```text
/// [ −G   B'_f ] [ e⁺ ]   [ −R ]
/// [ B'_fᵀ H_ff] [ δ  ] = [  0 ]
/// ```
///
/// assembled globally and solved by sparse LU. Returns the trial update and
/// the linearized representer `e⁺ = G⁻¹ (R + B' δ)`.
pub fn saddle_point_step(
    state: &TrialState,
    spec: &ProblemSpec,
    disc: &Discretization,
    constraints: &Constraints,
    second_order: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = disc.state_to_vec(state)?;
    check_constraints(disc, constraints)?;
    let m = disc.n_test_dofs();
    let nf = constraints.free.len();
    let g = crate::forms::global_gram(disc);
    let j = jacobian_vec(disc, spec, &u);
    let r = crate::forms::residual_vec(disc, spec, &u);
    let mut trip = Vec::new();
    let push_sparse =
        |trip: &mut Vec<Triplet<usize, usize, f64>>,
         a: &SparseColMat<usize, f64>,
         f: &dyn Fn(usize, usize, f64) -> Option<(usize, usize, f64)>| {
            let cp = a.symbolic().col_ptr();
            let ri = a.symbolic().row_idx();
            for c in 0..a.ncols() {
                for p in cp[c]..cp[c + 1] {
                    if let Some((i, jj, v)) = f(ri[p], c, a.val()[p]) {
                        trip.push(Triplet::new(i, jj, v));
                    }
                }
            }
        };
    push_sparse(&mut trip, &g, &|i, c, v| Some((i, c, -v)));
    let fi = &constraints.free_index;
    push_sparse(&mut trip, &j, &|i, c, v| fi[c].map(|fc| (i, m + fc, v)));
    push_sparse(&mut trip, &j, &|i, c, v| fi[c].map(|fc| (m + fc, i, v)));
    if second_order {
        // H needs the current representer G⁻¹ R, from a global solve.
        let glu = g.sp_lu().map_err(|e| Error::SolverFailure {
            message: format!("Gram LU failed: {e:?}"),
            element: None,
        })?;
        let e = glu.solve(&Col::from_fn(m, |i| r[i]));
        let e: Vec<f64> = (0..m).map(|i| e[i]).collect();
        let h = hessian_vec(disc, spec, &e);
        push_sparse(&mut trip, &h, &|i, c, v| match (fi[i], fi[c]) {
            (Some(a), Some(b)) => Some((m + a, m + b, v)),
            _ => None,
        });
    }
    let n = m + nf;
    let k = SparseColMat::try_new_from_triplets(n, n, &trip).expect("valid saddle triplets");
    let mut rhs = vec![0.0; n];
    for i in 0..m {
        rhs[i] = -r[i];
    }
    let x = solve_linear(&k, &rhs, LinearSolver::Direct, None)?;
    Ok((scatter(constraints, &x[m..]), x[..m].to_vec()))
}

/// One row of the Newton diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct NewtonIterate {
    pub iteration: usize,
    /// Representer V-norm, the dual norm of the residual.
    pub residual_norm: f64,
    /// Norm of the condensed gradient `B'ᵀ G⁻¹ R` on free DOFs.
    pub gradient_norm: f64,
    /// Halvings used to accept the step taken after this iterate.
    pub step_halvings: usize,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub state: TrialState,
    pub representer: ErrorRepresenter,
    /// Number of accepted Newton updates.
    pub iterations: usize,
    pub history: Vec<NewtonIterate>,
}

impl NewtonOutcome {
    pub fn final_gradient_norm(&self) -> f64 {
        self.history.last().map_or(0.0, |h| h.gradient_norm)
    }

    /// Diagnostics as CSV.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iteration,residual_v_norm,gradient_norm,step_halvings\n");
        for h in &self.history {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{}",
                h.iteration, h.residual_norm, h.gradient_norm, h.step_halvings
            );
        }
        s
    }
}

/// Relative energy drop below which the hybrid iteration switches to
/// second-order steps.
const HYBRID_SWITCH: f64 = 1e-3;

/// Relative model decrease of the residual energy treated as no progress.
const STAGNATION: f64 = 1e-10;

/// Halve the step until the residual energy does not increase.
fn line_search(
    disc: &Discretization,
    spec: &ProblemSpec,
    gram: &GramFactors,
    u: &[f64],
    delta: &[f64],
    e0: f64,
    max_halvings: usize,
) -> Option<(Vec<f64>, usize, f64)> {
    let mut lambda = 1.0;
    for halving in 0..=max_halvings {
        let trial: Vec<f64> = u.iter().zip(delta).map(|(a, d)| a + lambda * d).collect();
        let (norms, _) = residual_energy(disc, spec, gram, &trial);
        let e1: f64 = norms.iter().sum();
        if e1.is_finite() && e1 <= e0 * (1.0 + 1e-10) + f64::MIN_POSITIVE {
            return Some((trial, halving, e1));
        }
        lambda *= 0.5;
    }
    None
}

/// Newton iteration with step-halving line search on the residual energy.
///
/// Converges when the condensed gradient drops below `abs_tol`, below
/// `rel_tol` times its initial value, when a full step is negligible, or
/// when the step's model decrease of the residual energy is at round-off
/// level.
/// The initial-condition DOFs of `initial` are overwritten.
pub fn newton_solve(
    initial: TrialState,
    spec: &ProblemSpec,
    disc: &Discretization,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome> {
    cfg.validate()?;
    spec.validate()?;
    let constraints = apply_initial_conditions(disc, spec)?;
    let mut u = disc.state_to_vec(&initial)?;
    constraints.apply(&mut u);
    let gram = GramFactors::new(disc)?;
    let mut history: Vec<NewtonIterate> = Vec::new();
    let mut residual_history = Vec::new();
    let mut g0 = None;
    let mut iterations = 0;
    // Relative drop of the residual energy over the last accepted step.
    let mut last_drop = f64::INFINITY;
    loop {
        let second = match cfg.step {
            StepKind::GaussNewton => false,
            StepKind::SecondOrder => true,
            StepKind::Hybrid => last_drop < HYBRID_SWITCH,
        };
        let step = step_from(disc, spec, &constraints, &gram, &u, cfg, second)?;
        let energy = step.representer.norm();
        history.push(NewtonIterate {
            iteration: iterations,
            residual_norm: energy,
            gradient_norm: step.gradient_norm,
            step_halvings: 0,
        });
        residual_history.push(step.gradient_norm);
        let g0v = *g0.get_or_insert(step.gradient_norm);
        // Near the round-off floor the line search cannot tell a decrease
        // from noise; stop once the model promises nothing measurable.
        let stagnated = step.model_decrease.abs() <= STAGNATION * energy * energy;
        if step.gradient_norm <= cfg.abs_tol || step.gradient_norm <= cfg.rel_tol * g0v || stagnated
        {
            return Ok(NewtonOutcome {
                state: disc.state_from_vec(&u)?,
                representer: step.representer,
                iterations,
                history,
            });
        }
        if iterations == cfg.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                history: residual_history,
            });
        }
        let unorm = norm(&u);
        let e0 = energy * energy;
        let mut accepted = line_search(disc, spec, &gram, &u, &step.delta, e0, cfg.max_halvings);
        let mut dnorm = norm(&step.delta);
        if accepted.is_none() && second {
            let fallback = step_from(disc, spec, &constraints, &gram, &u, cfg, false)?;
            dnorm = norm(&fallback.delta);
            accepted = line_search(disc, spec, &gram, &u, &fallback.delta, e0, cfg.max_halvings);
        }
        let Some((next, halvings)) = accepted.map(|(v, h, e)| ((v, e), h)) else {
            return Err(Error::NonConvergence {
                iterations,
                history: residual_history,
            });
        };
        history.last_mut().expect("pushed above").step_halvings = halvings;
        last_drop = if e0 > 0.0 { (e0 - next.1) / e0 } else { 0.0 };
        u = next.0;
        iterations += 1;
        if halvings == 0 && dnorm <= cfg.step_tol * unorm.max(1.0) {
            let rep = {
                let (norms, e) = residual_energy(disc, spec, &gram, &u);
                build_representer(disc, norms, &e)
            };
            let g = assemble_condensed(disc, spec, &constraints, &gram, &u, false);
            history.push(NewtonIterate {
                iteration: iterations,
                residual_norm: rep.norm(),
                gradient_norm: norm(&g.rhs),
                step_halvings: 0,
            });
            return Ok(NewtonOutcome {
                state: disc.state_from_vec(&u)?,
                representer: rep,
                iterations,
                history,
            });
        }
    }
}
