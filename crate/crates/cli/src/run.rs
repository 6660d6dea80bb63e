//! Case drivers and their output files.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use stswe_core::adapt::record_row;
use stswe_core::benchmarks::{
    convergence_study, dambreak_report, sample_in_space, series_csv, solve_structured,
    tidal_report, LINE_SAMPLES,
};
use stswe_core::cases::{dambreak_case, lake_case, manufactured_case, tidal_case, TIDAL_ALPHA};
use stswe_core::vtk::{mesh_vtk, vertex_values};
use stswe_core::{
    adapt_loop, comparison_of, indicators, run_comparison, timeline_csv, Approach, CompareConfig,
    Discretization, ErrorRepresenter, NewtonOutcome, ProblemSpec, RunRecord, SpaceTimeMesh,
    TrialState,
};

use crate::config::{Case, Resolved};
use crate::CliError;

/// Elevation probe of the tidal run [m].
const TIDAL_STATION: f64 = 800.0;
/// Times of the dam-break profiles [s].
const DAMBREAK_TIMES: [f64; 6] = [0.1, 10.0, 50.0, 100.0, 150.0, 200.0];

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

/// Appends the resolved settings not already in the record.
fn with_metadata(mut record: RunRecord, r: &Resolved) -> RunRecord {
    for (k, v) in r.metadata() {
        if !record.metadata.iter().any(|(key, _)| key == k) {
            record.push_meta(k, v);
        }
    }
    record
}

fn field_vtk(
    mesh: &SpaceTimeMesh,
    state: &TrialState,
    rep: Option<&ErrorRepresenter>,
) -> Result<String, CliError> {
    let eta = rep.map(|r| indicators(r).values().to_vec());
    let cells: Vec<(&str, &[f64])> = eta.iter().map(|e| ("eta", e.as_slice())).collect();
    let (z, u, s) = (
        vertex_values(&state.zeta),
        vertex_values(&state.u),
        vertex_values(&state.sigma),
    );
    Ok(mesh_vtk(
        mesh,
        &cells,
        &[("zeta", &z), ("u", &u), ("sigma", &s)],
    )?)
}

pub fn run(r: &Resolved) -> Result<String, CliError> {
    fs::create_dir_all(&r.out).map_err(|e| CliError::io(&r.out, e))?;
    let echo = toml::to_string(&r.echo()).map_err(|e| CliError::Usage(e.to_string()))?;
    write(&r.out, "run.toml", &echo)?;
    match r.case {
        Case::Converge => converge(r),
        Case::Adapt => adapt(r),
        Case::Lake | Case::Tidal | Case::Dambreak => benchmark(r),
        Case::SlicesCompare => slices_compare(r),
    }
}

fn converge(r: &Resolved) -> Result<String, CliError> {
    let spec = manufactured_case(r.problem);
    let mesh = spec.structured_mesh(r.mesh.0, r.mesh.1)?;
    let study = convergence_study(&spec, mesh.clone(), r.space, r.refinements, &r.newton)?;
    let mut record = with_metadata(study.record.clone(), r);
    // The coarsest level is dropped from the fit once enough levels remain.
    let first = usize::from(study.rows.len() >= 4);
    let rates = (study.rows.len() >= 3)
        .then(|| study.rates(first))
        .transpose()?;
    let n = study.rows.len();
    let mut summary = format!("converge: {n} level{}", if n == 1 { "" } else { "s" });
    if let Some(rates) = &rates {
        record.push_meta("rate_first_level", first);
        let mut parts = Vec::new();
        for (name, v) in rates.entries() {
            record.push_meta(&format!("rate_{name}"), format!("{v:.4}"));
            parts.push(format!("{name} {v:.2}"));
        }
        summary.push_str(&format!(", rates {}", parts.join(", ")));
    } else {
        summary.push_str(", too few levels for rates");
    }
    let last = study.rows.last().expect("at least one level");
    summary.push_str(&format!(
        "; finest L2(zeta) {:.3e}, L2(u) {:.3e}",
        last.errors.l2_zeta(),
        last.errors.l2_u()
    ));
    write(&r.out, "record.csv", &record.to_csv())?;
    write(&r.out, "series_convergence.csv", &study.to_csv())?;
    let mut finest = mesh;
    for _ in 0..r.refinements {
        finest = finest.uniform_refine()?;
    }
    write(&r.out, "mesh_final.vtk", &mesh_vtk(&finest, &[], &[])?)?;
    Ok(summary)
}

fn adapt(r: &Resolved) -> Result<String, CliError> {
    let spec = manufactured_case(r.problem);
    let mesh = Arc::new(spec.structured_mesh(r.mesh.0, r.mesh.1)?);
    let out = adapt_loop(&spec, mesh, r.space, &r.adapt)?;
    let record = with_metadata(out.record.clone(), r);
    write(&r.out, "record.csv", &record.to_csv())?;
    write(
        &r.out,
        "mesh_final.vtk",
        &field_vtk(out.mesh(), &out.state, Some(&out.representer))?,
    )?;
    let last = record.last().expect("at least one step");
    Ok(format!(
        "adapt: {} steps, final {} DOFs on {} elements, estimate {:.3e}, L2(zeta) {:.3e}, L2(u) {:.3e}",
        record.rows.len(),
        last.n_dofs,
        last.n_elements,
        last.estimate,
        last.err_l2_zeta.unwrap_or(f64::NAN),
        last.err_l2_u.unwrap_or(f64::NAN)
    ))
}

fn single_record(
    r: &Resolved,
    spec: &ProblemSpec,
    disc: &Discretization,
    out: &NewtonOutcome,
) -> RunRecord {
    let mut record = RunRecord::default();
    record.push_meta("case", &spec.name);
    let mut record = with_metadata(record, r);
    record.rows.push(record_row(
        0,
        spec,
        disc,
        &out.state,
        out.representer.norm(),
        out.iterations,
    ));
    record
}

fn benchmark(r: &Resolved) -> Result<String, CliError> {
    let spec = match r.case {
        Case::Lake => lake_case(),
        Case::Tidal => tidal_case(),
        _ => dambreak_case(),
    };
    let (disc, out) = solve_structured(&spec, r.mesh.0, r.mesh.1, r.space, &r.newton)?;
    let record = single_record(r, &spec, &disc, &out);
    write(&r.out, "record.csv", &record.to_csv())?;
    write(
        &r.out,
        &format!("mesh_{}.vtk", spec.name),
        &field_vtk(disc.mesh(), &out.state, Some(&out.representer))?,
    )?;
    let row = record.rows[0];
    let summary = match r.case {
        Case::Lake => {
            let t = spec.t_range.1;
            let (x, z) = sample_in_space(&out.state.zeta, t, LINE_SAMPLES)?;
            let (_, u) = sample_in_space(&out.state.u, t, LINE_SAMPLES)?;
            write(
                &r.out,
                "series_final_time.csv",
                &series_csv(&["x", "zeta", "u"], &[&x, &z, &u]),
            )?;
            format!(
                "lake: L2(zeta) {:.3e}, L2(u) {:.3e}",
                row.err_l2_zeta.unwrap_or(f64::NAN),
                row.err_l2_u.unwrap_or(f64::NAN)
            )
        }
        Case::Tidal => {
            let rep = tidal_report(&out.state, TIDAL_STATION, LINE_SAMPLES, TIDAL_ALPHA)?;
            write(&r.out, "series_x800.csv", &rep.series_csv())?;
            format!(
                "tidal: frequency {:.6e} rad/s (error {:.2e}), amplitude {:.4} m, max |zeta| {:.4} m, \
                 velocity lag {:.1} deg",
                rep.omega,
                rep.frequency_error(TIDAL_ALPHA),
                rep.amplitude,
                rep.max_abs,
                rep.phase_lag.abs().to_degrees()
            )
        }
        _ => {
            let rep = dambreak_report(&out.state, &DAMBREAK_TIMES, LINE_SAMPLES)?;
            write(&r.out, "series_profiles.csv", &rep.series_csv())?;
            let (lo, hi) = rep.range(0);
            let fronts: Vec<String> = (1..DAMBREAK_TIMES.len())
                .map(|i| format!("{:.0}", rep.front(i)))
                .collect();
            format!(
                "dambreak: zeta(., 0.1 s) in [{lo:.3}, {hi:.3}] m, jump overshoot {:.2e} m, fronts {} m",
                rep.jump_overshoot(0),
                fronts.join(", ")
            )
        }
    };
    Ok(format!("{summary}; {} Newton iterations", out.iterations))
}

fn slices_compare(r: &Resolved) -> Result<String, CliError> {
    let spec = manufactured_case(r.problem);
    let cc = CompareConfig {
        slices: r.slices,
        full_mesh: r.mesh,
        slice_mesh: r.mesh,
        adapt: r.adapt.clone(),
    };
    let (full, slices) = run_comparison(&spec, &cc, r.space)?;
    let record = with_metadata(full.record.clone(), r);
    write(&r.out, "record.csv", &record.to_csv())?;
    write(
        &r.out,
        "mesh_full.vtk",
        &field_vtk(full.mesh(), &full.state, Some(&full.representer))?,
    )?;
    for s in &slices {
        let rec = with_metadata(s.record.clone(), r);
        write(
            &r.out,
            &format!("record_slice_{}.csv", s.index),
            &rec.to_csv(),
        )?;
        write(
            &r.out,
            &format!("mesh_slice_{}.vtk", s.index),
            &field_vtk(s.discretization.mesh(), &s.state, Some(&s.representer))?,
        )?;
    }
    write(&r.out, "series_timeline.csv", &timeline_csv(&slices))?;
    let cmp = comparison_of(&full.record, &slices);
    write(&r.out, "series_comparison.csv", &cmp.to_csv())?;
    let (f, s) = (
        *cmp.of(Approach::Full).last().expect("full rows"),
        *cmp.of(Approach::Slices).last().expect("slice rows"),
    );
    Ok(format!(
        "slices-compare: full {} DOFs L2(zeta) {:.3e} L2(u) {:.3e}; {} slices {} DOFs (largest solve {}) \
         L2(zeta) {:.3e} L2(u) {:.3e}",
        f.n_dofs,
        f.err_l2_zeta.unwrap_or(f64::NAN),
        f.err_l2_u.unwrap_or(f64::NAN),
        slices.len(),
        s.n_dofs,
        s.solve_dofs,
        s.err_l2_zeta.unwrap_or(f64::NAN),
        s.err_l2_u.unwrap_or(f64::NAN)
    ))
}
