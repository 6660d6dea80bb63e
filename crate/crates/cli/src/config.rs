//! Run configuration: a TOML file with one table per field group, resolved
//! against per-case defaults and command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stswe_core::cases::{
    ManufacturedParams, ADAPT_MESH, DAMBREAK_FINE_MESH, DAMBREAK_MESH, LAKE_MESH, TIDAL_MESH,
};
use stswe_core::{AdaptConfig, LinearSolver, NewtonConfig, SpaceConfig, StepKind};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Converge,
    Adapt,
    Lake,
    Tidal,
    Dambreak,
    SlicesCompare,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Converge => "converge",
            Case::Adapt => "adapt",
            Case::Lake => "lake",
            Case::Tidal => "tidal",
            Case::Dambreak => "dambreak",
            Case::SlicesCompare => "slices-compare",
        }
    }

    fn manufactured(self) -> bool {
        matches!(self, Case::Converge | Case::Adapt | Case::SlicesCompare)
    }

    fn adaptive(self) -> bool {
        matches!(self, Case::Adapt | Case::SlicesCompare)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapt: Option<AdaptSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<SlicesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton: Option<NewtonSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    pub p: Option<usize>,
    pub test_degree: Option<usize>,
    pub quadrature_degree: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub nx: Option<usize>,
    pub nt: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptSection {
    pub theta: Option<f64>,
    pub refinements: Option<usize>,
    pub stop_tol: Option<f64>,
    pub max_dofs: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicesSection {
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    pub max_iter: Option<usize>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub step_tol: Option<f64>,
    /// `hybrid`, `gauss-newton` or `second-order`.
    pub step: Option<String>,
    /// `direct` or `cg`.
    pub linear_solver: Option<String>,
    pub cg_tol: Option<f64>,
    pub cg_max_iter: Option<usize>,
}

/// Manufactured-solution parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub t_final: Option<f64>,
    pub h_b: Option<f64>,
    pub mu: Option<f64>,
    pub tau_bf: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub p: Option<usize>,
    pub refinements: Option<usize>,
    pub theta: Option<f64>,
    pub slices: Option<usize>,
    pub mesh: Option<(usize, usize)>,
    pub out: Option<PathBuf>,
    pub paper_mesh: bool,
}

/// Everything a run needs, with defaults filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub case: Case,
    pub space: SpaceConfig,
    pub mesh: (usize, usize),
    pub adapt: AdaptConfig,
    pub refinements: usize,
    pub slices: usize,
    pub newton: NewtonConfig,
    pub problem: ManufacturedParams,
    pub out: PathBuf,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_step(s: &str) -> Result<StepKind, CliError> {
    match s {
        "hybrid" => Ok(StepKind::Hybrid),
        "gauss-newton" => Ok(StepKind::GaussNewton),
        "second-order" => Ok(StepKind::SecondOrder),
        _ => Err(usage(format!(
            "unknown Newton step '{s}' (hybrid, gauss-newton, second-order)"
        ))),
    }
}

fn step_name(s: StepKind) -> &'static str {
    match s {
        StepKind::Hybrid => "hybrid",
        StepKind::GaussNewton => "gauss-newton",
        StepKind::SecondOrder => "second-order",
    }
}

const CG_TOL: f64 = 1e-12;
const CG_MAX_ITER: usize = 20_000;

pub fn resolve(case: Case, file: &RunConfig, cli: &Overrides) -> Result<Resolved, CliError> {
    if cli.slices.is_some() && case != Case::SlicesCompare {
        return Err(usage("--slices applies to slices-compare only"));
    }
    if cli.theta.is_some() && !case.adaptive() {
        return Err(usage(format!("--theta does not apply to {}", case.name())));
    }
    if cli.refinements.is_some() && !(case.adaptive() || case == Case::Converge) {
        return Err(usage(format!(
            "--refinements does not apply to {}",
            case.name()
        )));
    }
    if cli.paper_mesh && !matches!(case, Case::Tidal | Case::Dambreak) {
        return Err(usage("--paper-mesh applies to tidal and dambreak only"));
    }
    if file.problem.is_some() && !case.manufactured() {
        return Err(usage(format!(
            "[problem] does not apply to {}",
            case.name()
        )));
    }

    let sp = file.space.clone().unwrap_or_default();
    let p = cli.p.or(sp.p).unwrap_or(2);
    let mut space = SpaceConfig::with_trial_degree(p);
    if let Some(r) = sp.test_degree {
        space.test_degree = r;
        space.quadrature_degree = 2 * p.max(r) + 2;
    }
    if let Some(q) = sp.quadrature_degree {
        space.quadrature_degree = q;
    }
    space.validate().map_err(|e| usage(e.to_string()))?;

    let default_mesh = match case {
        Case::Converge => (1, 1),
        Case::Adapt => ADAPT_MESH,
        Case::Lake => LAKE_MESH,
        Case::Tidal => TIDAL_MESH,
        Case::Dambreak if cli.paper_mesh => DAMBREAK_FINE_MESH,
        Case::Dambreak => DAMBREAK_MESH,
        Case::SlicesCompare => (4, 4),
    };
    let fm = file.mesh.clone().unwrap_or_default();
    let mesh = cli.mesh.unwrap_or((
        fm.nx.unwrap_or(default_mesh.0),
        fm.nt.unwrap_or(default_mesh.1),
    ));
    if cli.paper_mesh && cli.mesh.is_none() {
        // The flag wins over a mesh from the config file.
        if fm.nx.is_some() || fm.nt.is_some() {
            return Err(usage(
                "--paper-mesh conflicts with [mesh] in the config file",
            ));
        }
    }
    if mesh.0 == 0 || mesh.1 == 0 {
        return Err(usage("mesh counts must be positive"));
    }

    let nw = file.newton.clone().unwrap_or_default();
    let mut newton = NewtonConfig::default();
    newton.max_iter = nw.max_iter.unwrap_or(newton.max_iter);
    newton.abs_tol = nw.abs_tol.unwrap_or(newton.abs_tol);
    newton.rel_tol = nw.rel_tol.unwrap_or(newton.rel_tol);
    newton.step_tol = nw.step_tol.unwrap_or(newton.step_tol);
    if let Some(s) = &nw.step {
        newton.step = parse_step(s)?;
    }
    newton.linear_solver = match nw.linear_solver.as_deref() {
        None | Some("direct") => LinearSolver::Direct,
        Some("cg") => LinearSolver::ConjugateGradient {
            rel_tol: nw.cg_tol.unwrap_or(CG_TOL),
            max_iter: nw.cg_max_iter.unwrap_or(CG_MAX_ITER),
        },
        Some(other) => {
            return Err(usage(format!(
                "unknown linear solver '{other}' (direct, cg)"
            )))
        }
    };
    newton.validate().map_err(|e| usage(e.to_string()))?;

    let ad = file.adapt.clone().unwrap_or_default();
    let default_refinements = match case {
        Case::Converge => 4,
        Case::Adapt => 8,
        Case::SlicesCompare => 6,
        _ => 0,
    };
    let refinements = cli
        .refinements
        .or(ad.refinements)
        .unwrap_or(default_refinements);
    let adapt = AdaptConfig {
        theta: cli.theta.or(ad.theta).unwrap_or(0.5),
        max_refinements: refinements,
        stop_tol: ad.stop_tol.unwrap_or(0.0),
        max_dofs: ad.max_dofs,
        newton,
    };
    adapt.validate().map_err(|e| usage(e.to_string()))?;

    let slices = cli
        .slices
        .or(file.slices.as_ref().and_then(|s| s.count))
        .unwrap_or(8);
    if slices == 0 {
        return Err(usage("slice count must be positive"));
    }

    let mut problem = match case {
        Case::Adapt => ManufacturedParams::convective(),
        Case::SlicesCompare => ManufacturedParams {
            t_final: 4.0,
            h_b: 2.0,
            ..ManufacturedParams::default()
        },
        _ => ManufacturedParams::default(),
    };
    if let Some(pr) = &file.problem {
        problem.t_final = pr.t_final.unwrap_or(problem.t_final);
        problem.h_b = pr.h_b.unwrap_or(problem.h_b);
        problem.mu = pr.mu.unwrap_or(problem.mu);
        problem.tau_bf = pr.tau_bf.unwrap_or(problem.tau_bf);
    }
    if !(problem.t_final > 0.0) {
        return Err(usage("t_final must be positive"));
    }

    let out = cli
        .out
        .clone()
        .or(file.output.as_ref().and_then(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from(format!("out-{}", case.name())));

    Ok(Resolved {
        case,
        space,
        mesh,
        adapt,
        refinements,
        slices,
        newton,
        problem,
        out,
    })
}

impl Resolved {
    /// The resolved settings as a config file that reproduces the run.
    pub fn echo(&self) -> RunConfig {
        let (cg_tol, cg_max_iter, solver) = match self.newton.linear_solver {
            LinearSolver::Direct => (None, None, "direct"),
            LinearSolver::ConjugateGradient { rel_tol, max_iter } => {
                (Some(rel_tol), Some(max_iter), "cg")
            }
        };
        RunConfig {
            space: Some(SpaceSection {
                p: Some(self.space.trial_degree),
                test_degree: Some(self.space.test_degree),
                quadrature_degree: Some(self.space.quadrature_degree),
            }),
            mesh: Some(MeshSection {
                nx: Some(self.mesh.0),
                nt: Some(self.mesh.1),
            }),
            adapt: (self.case.adaptive() || self.case == Case::Converge).then(|| AdaptSection {
                theta: self.case.adaptive().then_some(self.adapt.theta),
                refinements: Some(self.refinements),
                stop_tol: self.case.adaptive().then_some(self.adapt.stop_tol),
                max_dofs: self.adapt.max_dofs,
            }),
            slices: (self.case == Case::SlicesCompare).then_some(SlicesSection {
                count: Some(self.slices),
            }),
            newton: Some(NewtonSection {
                max_iter: Some(self.newton.max_iter),
                abs_tol: Some(self.newton.abs_tol),
                rel_tol: Some(self.newton.rel_tol),
                step_tol: Some(self.newton.step_tol),
                step: Some(step_name(self.newton.step).into()),
                linear_solver: Some(solver.into()),
                cg_tol,
                cg_max_iter,
            }),
            problem: self.case.manufactured().then_some(ProblemSection {
                t_final: Some(self.problem.t_final),
                h_b: Some(self.problem.h_b),
                mu: Some(self.problem.mu),
                tau_bf: Some(self.problem.tau_bf),
            }),
            output: Some(OutputSection {
                dir: Some(self.out.clone()),
            }),
        }
    }

    /// `key = value` pairs for run-record metadata.
    pub fn metadata(&self) -> Vec<(&'static str, String)> {
        let mut m = vec![
            ("command", self.case.name().to_string()),
            ("trial_degree", self.space.trial_degree.to_string()),
            ("test_degree", self.space.test_degree.to_string()),
            (
                "quadrature_degree",
                self.space.quadrature_degree.to_string(),
            ),
            ("mesh", format!("{}x{}", self.mesh.0, self.mesh.1)),
            ("newton_step", step_name(self.newton.step).to_string()),
            ("newton_max_iter", self.newton.max_iter.to_string()),
            ("newton_abs_tol", format!("{:e}", self.newton.abs_tol)),
            ("newton_rel_tol", format!("{:e}", self.newton.rel_tol)),
            ("newton_step_tol", format!("{:e}", self.newton.step_tol)),
        ];
        if self.case.adaptive() || self.case == Case::Converge {
            m.push(("refinements", self.refinements.to_string()));
        }
        if self.case.adaptive() {
            m.push(("stop_tol", self.adapt.stop_tol.to_string()));
            if let Some(d) = self.adapt.max_dofs {
                m.push(("max_dofs", d.to_string()));
            }
        }
        if self.case == Case::SlicesCompare {
            m.push(("slices", self.slices.to_string()));
        }
        if self.case.manufactured() {
            m.push(("t_final", self.problem.t_final.to_string()));
            m.push(("h_b", self.problem.h_b.to_string()));
            m.push(("mu", self.problem.mu.to_string()));
            m.push(("tau_bf", self.problem.tau_bf.to_string()));
        }
        m
    }
}

/// Parse `NXxNT`.
pub fn parse_mesh(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NXxNT, got '{s}'"))?;
    let n = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad count '{v}': {e}"))
    };
    let (nx, nt) = (n(a)?, n(b)?);
    if nx == 0 || nt == 0 {
        return Err("mesh counts must be positive".into());
    }
    Ok((nx, nt))
}
