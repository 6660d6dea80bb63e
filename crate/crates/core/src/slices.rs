//! Sequential time slices: each slab takes the previous slab's terminal
//! trace as its initial data.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::adapt::{adapt_loop, AdaptConfig, AdaptOutcome, RecordRow, RunRecord};
use crate::error::{Error, Result};
use crate::fespace::{FieldFunction, SpaceConfig};
use crate::forms::{Discretization, ProblemSpec, TrialState};
use crate::mesh::BoundaryTag;
use crate::solver::{ErrorRepresenter, NewtonConfig};

#[derive(Debug, Clone)]
pub struct SliceConfig {
    /// `t₀ < t₁ < … < t_S`, matching the problem's time range at both ends.
    pub boundaries: Vec<f64>,
    /// Structured mesh of each slice.
    pub nx: usize,
    pub nt: usize,
    /// Adapt each slice; `None` solves each slice once.
    pub adapt: Option<AdaptConfig>,
    pub newton: NewtonConfig,
}

impl SliceConfig {
    /// `count` equal slices of the problem's time range.
    pub fn equal(spec: &ProblemSpec, count: usize, nx: usize, nt: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("slice count must be positive"));
        }
        let (t0, t1) = spec.t_range;
        let boundaries = (0..=count)
            .map(|i| {
                if i == count {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / count as f64
                }
            })
            .collect();
        Ok(SliceConfig {
            boundaries,
            nx,
            nt,
            adapt: None,
            newton: NewtonConfig::default(),
        })
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        let b = &self.boundaries;
        if b.len() < 2 {
            return Err(Error::invalid("need at least one slice"));
        }
        if b.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "slice boundaries must be strictly increasing",
            ));
        }
        if b[0] != spec.t_range.0 || b[b.len() - 1] != spec.t_range.1 {
            return Err(Error::invalid(
                "slice boundaries must span the problem's time range",
            ));
        }
        if self.nx == 0 || self.nt == 0 {
            return Err(Error::invalid("slice mesh counts must be positive"));
        }
        if let Some(a) = &self.adapt {
            a.validate()?;
        }
        self.newton.validate()
    }

    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The restriction of a field to the final-time boundary of its mesh.
pub struct TerminalTrace {
    field: FieldFunction,
    /// `(x_left, x_right, triangle)` sorted by `x_left`.
    segments: Vec<(f64, f64, usize)>,
    t: f64,
}

impl TerminalTrace {
    pub fn new(field: FieldFunction) -> Self {
        let mesh = field.space().mesh().clone();
        let mut segments = Vec::new();
        for k in 0..mesh.n_triangles() {
            let tri = mesh.triangles()[k];
            for e in 0..3 {
                if mesh.edge_tag(k, e) == Some(BoundaryTag::FinalTime) {
                    let xa = mesh.vertices()[tri[(e + 1) % 3]][0];
                    let xb = mesh.vertices()[tri[(e + 2) % 3]][0];
                    segments.push((xa.min(xb), xa.max(xb), k));
                }
            }
        }
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        TerminalTrace {
            t: mesh.t_range().1,
            field,
            segments,
        }
    }

    /// Trace value at `x`, clamped to the spatial interval.
    pub fn value(&self, x: f64) -> f64 {
        let i = self
            .segments
            .partition_point(|s| s.0 <= x)
            .saturating_sub(1);
        let (_, _, k) = self.segments[i];
        let geo = &self.field.space().mesh().geometry(k);
        let mut l = geo.barycentric([x, self.t]);
        for v in &mut l {
            *v = v.clamp(0.0, 1.0);
        }
        let s: f64 = l.iter().sum();
        self.field.eval_in(k, &l.map(|v| v / s)).0
    }
}

pub struct SliceResult {
    pub index: usize,
    pub t_range: (f64, f64),
    pub state: TrialState,
    pub record: RunRecord,
    pub representer: ErrorRepresenter,
    pub discretization: Discretization,
}

/// Solve the slices in order. Slice `k ≥ 1` starts from the previous
/// slice's `ζ` and `u` evaluated at its start time; `σ` is not carried.
pub fn run_slices(
    spec: &ProblemSpec,
    cfg: &SliceConfig,
    config: SpaceConfig,
) -> Result<Vec<SliceResult>> {
    spec.validate()?;
    cfg.validate(spec)?;
    let adapt = cfg.adapt.clone().unwrap_or(AdaptConfig {
        max_refinements: 0,
        newton: cfg.newton,
        ..AdaptConfig::default()
    });
    let mut out: Vec<SliceResult> = Vec::with_capacity(cfg.len());
    for (i, w) in cfg.boundaries.windows(2).enumerate() {
        let t_range = (w[0], w[1]);
        let slice_spec = match out.last() {
            None => spec.restricted(t_range, spec.zeta0.clone(), spec.u0.clone()),
            Some(prev) => {
                let z = TerminalTrace::new(prev.state.zeta.clone());
                let u = TerminalTrace::new(prev.state.u.clone());
                spec.restricted(
                    t_range,
                    Arc::new(move |x| z.value(x)),
                    Arc::new(move |x| u.value(x)),
                )
            }
        };
        let mesh = Arc::new(slice_spec.structured_mesh(cfg.nx, cfg.nt)?);
        let res =
            adapt_loop(&slice_spec, mesh, config, &adapt).map_err(|e| e.at_stage("slice", i))?;
        let mut record = res.record;
        record.push_meta("slice", i);
        record.push_meta("t_start", t_range.0);
        record.push_meta("t_end", t_range.1);
        out.push(SliceResult {
            index: i,
            t_range,
            state: res.state,
            record,
            representer: res.representer,
            discretization: res.discretization,
        });
    }
    Ok(out)
}

/// Combine the per-slice rows at refinement step `step` (clamped to each
/// slice's last row): DOFs and elements add, estimates and errors add in
/// squares.
pub fn combined_row(slices: &[SliceResult], step: usize) -> RecordRow {
    let rows: Vec<&RecordRow> = slices
        .iter()
        .map(|s| &s.record.rows[step.min(s.record.rows.len() - 1)])
        .collect();
    let sq = |f: &dyn Fn(&RecordRow) -> Option<f64>| -> Option<f64> {
        rows.iter()
            .map(|r| f(r).map(|v| v * v))
            .sum::<Option<f64>>()
            .map(f64::sqrt)
    };
    RecordRow {
        refine_step: step,
        n_elements: rows.iter().map(|r| r.n_elements).sum(),
        n_dofs: rows.iter().map(|r| r.n_dofs).sum(),
        estimate: rows
            .iter()
            .map(|r| r.estimate * r.estimate)
            .sum::<f64>()
            .sqrt(),
        err_l2_zeta: sq(&|r| r.err_l2_zeta),
        err_l2_u: sq(&|r| r.err_l2_u),
        err_l2_sigma: sq(&|r| r.err_l2_sigma),
        err_u: sq(&|r| r.err_u),
        newton_iters: rows.iter().map(|r| r.newton_iters).max().unwrap_or(0),
    }
}

/// One line per slice: time window, final DOFs, estimate, errors.
pub fn timeline_csv(slices: &[SliceResult]) -> String {
    let mut s = String::from(
        "slice,t_start,t_end,n_dofs,estimate,err_L2_zeta,err_L2_u,err_L2_sigma,err_U\n",
    );
    let f = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:e}"));
    for sl in slices {
        let r = sl.record.last().expect("every slice has a row");
        let _ = writeln!(
            s,
            "{},{},{},{},{:e},{},{},{},{}",
            sl.index,
            sl.t_range.0,
            sl.t_range.1,
            r.n_dofs,
            r.estimate,
            f(r.err_l2_zeta),
            f(r.err_l2_u),
            f(r.err_l2_sigma),
            f(r.err_u)
        );
    }
    s
}

/// Settings of a full-versus-sliced comparison.
#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub slices: usize,
    /// Initial structured mesh of the full space-time run.
    pub full_mesh: (usize, usize),
    /// Initial structured mesh of every slice.
    pub slice_mesh: (usize, usize),
    pub adapt: AdaptConfig,
}

impl CompareConfig {
    /// Both drivers cover the domain with the same `nx × nt` grid: each
    /// slice gets `nt / slices` time cells.
    pub fn matched(slices: usize, nx: usize, nt: usize, adapt: AdaptConfig) -> Self {
        CompareConfig {
            slices,
            full_mesh: (nx, nt),
            slice_mesh: (nx, (nt / slices.max(1)).max(1)),
            adapt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    Full,
    Slices,
}

impl Approach {
    pub fn name(self) -> &'static str {
        match self {
            Approach::Full => "full",
            Approach::Slices => "slices",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub approach: Approach,
    pub refine_step: usize,
    /// DOFs over the whole domain.
    pub n_dofs: usize,
    /// DOFs of the largest single solve.
    pub solve_dofs: usize,
    pub estimate: f64,
    pub err_l2_zeta: Option<f64>,
    pub err_l2_u: Option<f64>,
    pub err_l2_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Log-log interpolation of `(dofs, error)` points at `at`; `None` outside
/// their range.
pub fn interpolate_error(points: &[(usize, f64)], at: usize) -> Option<f64> {
    let mut p: Vec<(f64, f64)> = points
        .iter()
        .map(|&(d, e)| ((d as f64).ln(), e.ln()))
        .collect();
    p.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x = (at as f64).ln();
    if p.is_empty() || x < p[0].0 || x > p[p.len() - 1].0 {
        return None;
    }
    let i = p.partition_point(|q| q.0 < x);
    if i == 0 || p[i].0 == x {
        return Some(p[i].1.exp());
    }
    let (a, b) = (p[i - 1], p[i]);
    Some((a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)).exp())
}

impl Comparison {
    pub fn of(&self, approach: Approach) -> Vec<ComparisonRow> {
        self.rows
            .iter()
            .filter(|r| r.approach == approach)
            .copied()
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "approach,refine_step,n_dofs,solve_dofs,estimate,err_L2_zeta,err_L2_u,err_L2_sigma\n",
        );
        let f = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:e}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:e},{},{},{}",
                r.approach.name(),
                r.refine_step,
                r.n_dofs,
                r.solve_dofs,
                r.estimate,
                f(r.err_l2_zeta),
                f(r.err_l2_u),
                f(r.err_l2_sigma)
            );
        }
        s
    }
}

/// Run the full space-time adaptive solve and the sliced one with the same
/// refinement settings.
pub fn compare_full_vs_slices(
    spec: &ProblemSpec,
    cc: &CompareConfig,
    config: SpaceConfig,
) -> Result<Comparison> {
    let (full, slices) = run_comparison(spec, cc, config)?;
    Ok(comparison_of(&full.record, &slices))
}

/// The two runs behind [`compare_full_vs_slices`].
pub fn run_comparison(
    spec: &ProblemSpec,
    cc: &CompareConfig,
    config: SpaceConfig,
) -> Result<(AdaptOutcome, Vec<SliceResult>)> {
    let (nx, nt) = cc.full_mesh;
    let mesh = Arc::new(spec.structured_mesh(nx, nt)?);
    let full = adapt_loop(spec, mesh, config, &cc.adapt)?;
    let mut sc = SliceConfig::equal(spec, cc.slices, cc.slice_mesh.0, cc.slice_mesh.1)?;
    sc.adapt = Some(cc.adapt.clone());
    sc.newton = cc.adapt.newton;
    let slices = run_slices(spec, &sc, config)?;
    Ok((full, slices))
}

/// Rows of both approaches, the sliced ones combined per refinement step.
pub fn comparison_of(full: &RunRecord, slices: &[SliceResult]) -> Comparison {
    let mut rows: Vec<ComparisonRow> = full
        .rows
        .iter()
        .map(|r| ComparisonRow {
            approach: Approach::Full,
            refine_step: r.refine_step,
            n_dofs: r.n_dofs,
            solve_dofs: r.n_dofs,
            estimate: r.estimate,
            err_l2_zeta: r.err_l2_zeta,
            err_l2_u: r.err_l2_u,
            err_l2_sigma: r.err_l2_sigma,
        })
        .collect();
    let steps = slices
        .iter()
        .map(|s| s.record.rows.len())
        .max()
        .unwrap_or(0);
    for i in 0..steps {
        let r = combined_row(slices, i);
        let solve_dofs = slices
            .iter()
            .map(|s| s.record.rows[i.min(s.record.rows.len() - 1)].n_dofs)
            .max()
            .unwrap_or(0);
        rows.push(ComparisonRow {
            approach: Approach::Slices,
            refine_step: i,
            n_dofs: r.n_dofs,
            solve_dofs,
            estimate: r.estimate,
            err_l2_zeta: r.err_l2_zeta,
            err_l2_u: r.err_l2_u,
            err_l2_sigma: r.err_l2_sigma,
        });
    }
    Comparison { rows }
}
