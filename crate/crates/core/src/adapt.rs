//! Element indicators, Dörfler marking, and the adaptive solve loop.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::{error_norms, FESpace, FieldFunction, SpaceConfig};
use crate::forms::{Discretization, ProblemSpec, TrialState};
use crate::mesh::SpaceTimeMesh;
use crate::solver::{newton_solve, ErrorRepresenter, NewtonConfig};

/// Per-element error indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    eta: Vec<f64>,
}

impl IndicatorField {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if let Some(k) = eta.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "indicator {} at element {k}",
                eta[k]
            )));
        }
        Ok(IndicatorField { eta })
    }

    pub fn values(&self) -> &[f64] {
        &self.eta
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// `sqrt(Σ η_K²)`.
    pub fn estimate(&self) -> f64 {
        self.eta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Element V-norms of the representer.
pub fn indicators(rep: &ErrorRepresenter) -> IndicatorField {
    IndicatorField {
        eta: rep.element_norms(),
    }
}

/// Smallest set of elements, taken in order of decreasing indicator (ties
/// by lower index), whose squared indicators reach `θ²` of the total.
/// Returned in ascending index order.
pub fn dorfler_mark(ind: &IndicatorField, theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid(format!(
            "Dörfler parameter {theta} outside (0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..ind.eta.len()).collect();
    order.sort_by(|&a, &b| ind.eta[b].total_cmp(&ind.eta[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&k| ind.eta[k] * ind.eta[k]).sum();
    // The slack absorbs summation round-off, e.g. 25 of 100 equal values
    // against a quarter of the total.
    let target = theta * theta * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for k in order {
        // θ = 1 takes every positive indicator, however small.
        if ind.eta[k] == 0.0 || (acc >= target && theta < 1.0) {
            break;
        }
        acc += ind.eta[k] * ind.eta[k];
        marked.push(k);
    }
    marked.sort_unstable();
    Ok(marked)
}

#[derive(Debug, Clone)]
pub struct AdaptConfig {
    pub theta: f64,
    pub max_refinements: usize,
    /// Stop once the global estimate is at or below this value.
    pub stop_tol: f64,
    /// Do not refine a mesh whose trial space already has this many DOFs.
    pub max_dofs: Option<usize>,
    pub newton: NewtonConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            theta: 0.5,
            max_refinements: 8,
            stop_tol: 0.0,
            max_dofs: None,
            newton: NewtonConfig::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::invalid(format!(
                "Dörfler parameter {} outside (0, 1]",
                self.theta
            )));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::invalid("stop tolerance must be nonnegative"));
        }
        self.newton.validate()
    }
}

/// One row of a run record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordRow {
    pub refine_step: usize,
    pub n_elements: usize,
    pub n_dofs: usize,
    pub estimate: f64,
    pub err_l2_zeta: Option<f64>,
    pub err_l2_u: Option<f64>,
    pub err_l2_sigma: Option<f64>,
    pub err_u: Option<f64>,
    pub newton_iters: usize,
}

/// Per-step history of a run plus free-form metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<RecordRow>,
}

pub const RECORD_SCHEMA: &str = "run-record/1";
pub const RECORD_HEADER: &str =
    "refine_step,n_elements,n_dofs,estimate,err_L2_zeta,err_L2_u,err_L2_sigma,err_U,newton_iters";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:e}"))
}

impl RunRecord {
    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    /// CSV with `# key = value` metadata lines before the header.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# schema = {RECORD_SCHEMA}\n");
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s.push_str(RECORD_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{},{},{},{},{}",
                r.refine_step,
                r.n_elements,
                r.n_dofs,
                r.estimate,
                opt(r.err_l2_zeta),
                opt(r.err_l2_u),
                opt(r.err_l2_sigma),
                opt(r.err_u),
                r.newton_iters
            );
        }
        s
    }

    pub fn last(&self) -> Option<&RecordRow> {
        self.rows.last()
    }
}

/// Result of an adaptive run.
pub struct AdaptOutcome {
    pub record: RunRecord,
    pub state: TrialState,
    pub representer: ErrorRepresenter,
    pub discretization: Discretization,
}

impl AdaptOutcome {
    pub fn mesh(&self) -> &Arc<SpaceTimeMesh> {
        self.discretization.mesh()
    }
}

/// Nodal interpolation of `field` onto `space`, which may live on a
/// different mesh covering the same points.
pub fn transfer_field(field: &FieldFunction, space: &Arc<FESpace>) -> Result<FieldFunction> {
    let src = field.space().mesh();
    let loc = src.locator();
    let coeffs = space
        .dof_coords()
        .par_iter()
        .map(|&p| {
            field.evaluate(&loc, p).ok_or_else(|| {
                Error::invalid(format!(
                    "point ({}, {}) outside the source mesh",
                    p[0], p[1]
                ))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    FieldFunction::new(space.clone(), coeffs)
}

pub fn transfer_state(state: &TrialState, disc: &Discretization) -> Result<TrialState> {
    Ok(TrialState {
        zeta: transfer_field(&state.zeta, disc.trial_space())?,
        u: transfer_field(&state.u, disc.trial_space())?,
        sigma: transfer_field(&state.sigma, disc.sigma_space())?,
    })
}

/// Row for one solved mesh.
pub fn record_row(
    step: usize,
    spec: &ProblemSpec,
    disc: &Discretization,
    state: &TrialState,
    estimate: f64,
    newton_iters: usize,
) -> RecordRow {
    let errs = spec
        .exact
        .as_ref()
        .map(|ex| error_norms(state, ex, disc.config().error_quadrature_degree()));
    RecordRow {
        refine_step: step,
        n_elements: disc.mesh().n_triangles(),
        n_dofs: disc.n_trial_dofs(),
        estimate,
        err_l2_zeta: errs.map(|e| e.l2_zeta()),
        err_l2_u: errs.map(|e| e.l2_u()),
        err_l2_sigma: errs.map(|e| e.l2_sigma()),
        err_u: errs.map(|e| e.u_norm()),
        newton_iters,
    }
}

/// Solve, estimate, mark, refine; the previous solution interpolated onto
/// the refined mesh is the next Newton initial guess.
pub fn adapt_loop(
    spec: &ProblemSpec,
    mesh: Arc<SpaceTimeMesh>,
    config: SpaceConfig,
    adapt: &AdaptConfig,
) -> Result<AdaptOutcome> {
    adapt.validate()?;
    let mut record = RunRecord::default();
    record.push_meta("case", &spec.name);
    record.push_meta("theta", adapt.theta);
    record.push_meta("trial_degree", config.trial_degree);
    let mut disc = Discretization::new(mesh, config)?;
    let mut guess = disc.initial_guess(spec)?;
    for step in 0.. {
        let out = newton_solve(guess, spec, &disc, &adapt.newton)
            .map_err(|e| e.at_stage("refinement", step))?;
        let ind = indicators(&out.representer);
        let estimate = ind.estimate();
        record.rows.push(record_row(
            step,
            spec,
            &disc,
            &out.state,
            estimate,
            out.iterations,
        ));
        let budget_hit = adapt.max_dofs.is_some_and(|m| disc.n_trial_dofs() >= m);
        if step >= adapt.max_refinements || estimate <= adapt.stop_tol || budget_hit {
            return Ok(AdaptOutcome {
                record,
                state: out.state,
                representer: out.representer,
                discretization: disc,
            });
        }
        let marked = dorfler_mark(&ind, adapt.theta)?;
        let refined = Arc::new(disc.mesh().bisect(&marked)?);
        let next = Discretization::with_gram(refined, config, disc.gram_spec())?;
        guess = transfer_state(&out.state, &next)?;
        disc = next;
    }
    unreachable!("the loop returns")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(v: &[f64]) -> IndicatorField {
        IndicatorField::new(v.to_vec()).unwrap()
    }

    #[test]
    fn marking_examples() {
        assert_eq!(
            dorfler_mark(&ind(&[4.0, 3.0, 2.0, 1.0]), 0.5).unwrap(),
            vec![0]
        );
        assert_eq!(
            dorfler_mark(&ind(&[1.0, 0.0, 2.0, 0.0]), 1.0).unwrap(),
            vec![0, 2]
        );
        let equal = dorfler_mark(&ind(&[0.7; 100]), 0.5).unwrap();
        assert_eq!(equal, (0..25).collect::<Vec<_>>());
        assert!(dorfler_mark(&ind(&[0.0; 5]), 0.5).unwrap().is_empty());
        assert!(dorfler_mark(&ind(&[1.0]), 0.0).is_err());
        assert!(dorfler_mark(&ind(&[1.0]), 1.5).is_err());
        assert!(IndicatorField::new(vec![-1.0]).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(
            dorfler_mark(&ind(&[1.0, 2.0, 2.0, 2.0]), 0.5).unwrap(),
            vec![1]
        );
    }

    #[test]
    fn record_csv_layout() {
        let mut r = RunRecord::default();
        r.push_meta("case", "x");
        r.rows.push(RecordRow {
            refine_step: 0,
            n_elements: 2,
            n_dofs: 27,
            estimate: 0.5,
            err_l2_zeta: Some(0.25),
            err_l2_u: None,
            err_l2_sigma: None,
            err_u: None,
            newton_iters: 3,
        });
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# schema = run-record/1");
        assert_eq!(lines[1], "# case = x");
        assert_eq!(lines[2], RECORD_HEADER);
        assert_eq!(lines[3], "0,2,27,5e-1,2.5e-1,,,,3");
    }
}
