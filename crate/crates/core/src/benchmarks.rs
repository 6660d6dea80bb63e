//! Convergence studies, rate fitting, line sampling, and the checks applied
//! to the tidal and dam-break solutions.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{Col, Mat};

use crate::adapt::{record_row, transfer_state, RunRecord};
use crate::cases::{DAM_DOWNSTREAM, DAM_POSITION, DAM_UPSTREAM};
use crate::error::{Error, Result};
use crate::fespace::{error_norms, ErrorNorms, FieldFunction, SpaceConfig};
use crate::forms::{Discretization, ProblemSpec, TrialState};
use crate::mesh::SpaceTimeMesh;
use crate::solver::{newton_solve, NewtonConfig, NewtonOutcome};

/// Number of points used when sampling along a line.
pub const LINE_SAMPLES: usize = 512;

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn rate_fit(h: &[f64], err: &[f64]) -> Result<f64> {
    if h.len() != err.len() {
        return Err(Error::invalid("h and error lists differ in length"));
    }
    if h.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 pairs, got {}",
            h.len()
        )));
    }
    if let Some((a, b)) = h
        .iter()
        .zip(err)
        .find(|(a, b)| !(**a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite()))
    {
        return Err(Error::invalid(format!(
            "nonpositive pair (h = {a}, error = {b})"
        )));
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all h values are equal"));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub level: usize,
    /// Largest element diameter.
    pub h: f64,
    pub n_elements: usize,
    pub n_dofs: usize,
    pub errors: ErrorNorms,
    pub estimate: f64,
    pub newton_iters: usize,
}

/// Observed rates of every tracked quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub l2_zeta: f64,
    pub l2_u: f64,
    pub l2_sigma: f64,
    pub h1_zeta: f64,
    pub h1_u: f64,
    pub u_norm: f64,
    pub estimate: f64,
}

impl Rates {
    /// `(name, value)` pairs in a fixed order.
    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("L2_zeta", self.l2_zeta),
            ("L2_u", self.l2_u),
            ("L2_sigma", self.l2_sigma),
            ("H1_zeta", self.h1_zeta),
            ("H1_u", self.h1_u),
            ("U", self.u_norm),
            ("estimate", self.estimate),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub record: RunRecord,
}

impl ConvergenceStudy {
    /// Rates fitted over the rows from `first` on.
    pub fn rates(&self, first: usize) -> Result<Rates> {
        let rows = self.rows.get(first..).unwrap_or(&[]);
        let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let fit = |f: &dyn Fn(&ConvergenceRow) -> f64| -> Result<f64> {
            rate_fit(&h, &rows.iter().map(f).collect::<Vec<_>>())
        };
        Ok(Rates {
            l2_zeta: fit(&|r| r.errors.l2_zeta())?,
            l2_u: fit(&|r| r.errors.l2_u())?,
            l2_sigma: fit(&|r| r.errors.l2_sigma())?,
            h1_zeta: fit(&|r| r.errors.h1_zeta())?,
            h1_u: fit(&|r| r.errors.h1_u())?,
            u_norm: fit(&|r| r.errors.u_norm())?,
            estimate: fit(&|r| r.estimate)?,
        })
    }

    /// Per-level table including `h` and the H¹ errors.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "level,h,n_elements,n_dofs,estimate,err_L2_zeta,err_L2_u,err_L2_sigma,err_H1_zeta,err_H1_u,err_U\n",
        );
        for r in &self.rows {
            let e = &r.errors;
            let _ = writeln!(
                s,
                "{},{:e},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.level,
                r.h,
                r.n_elements,
                r.n_dofs,
                r.estimate,
                e.l2_zeta(),
                e.l2_u(),
                e.l2_sigma(),
                e.h1_zeta(),
                e.h1_u(),
                e.u_norm()
            );
        }
        s
    }
}

/// Solve on `mesh` and on `refinements` successive uniform refinements of
/// it, recording errors against the exact solution.
pub fn convergence_study(
    spec: &ProblemSpec,
    mesh: SpaceTimeMesh,
    config: SpaceConfig,
    refinements: usize,
    newton: &NewtonConfig,
) -> Result<ConvergenceStudy> {
    let exact = spec
        .exact
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("case '{}' has no exact solution", spec.name)))?;
    let mut record = RunRecord::default();
    record.push_meta("case", &spec.name);
    record.push_meta("trial_degree", config.trial_degree);
    record.push_meta("refinements", refinements);
    let mut rows = Vec::new();
    let mut mesh = Arc::new(mesh);
    let mut prev: Option<TrialState> = None;
    for level in 0..=refinements {
        let disc = Discretization::new(mesh.clone(), config)?;
        let guess = match &prev {
            Some(s) => transfer_state(s, &disc)?,
            None => disc.initial_guess(spec)?,
        };
        let out =
            newton_solve(guess, spec, &disc, newton).map_err(|e| e.at_stage("level", level))?;
        let estimate = out.representer.norm();
        rows.push(ConvergenceRow {
            level,
            h: mesh.max_diameter(),
            n_elements: mesh.n_triangles(),
            n_dofs: disc.n_trial_dofs(),
            errors: error_norms(&out.state, exact, config.error_quadrature_degree()),
            estimate,
            newton_iters: out.iterations,
        });
        record.rows.push(record_row(
            level,
            spec,
            &disc,
            &out.state,
            estimate,
            out.iterations,
        ));
        prev = Some(out.state);
        if level < refinements {
            mesh = Arc::new(mesh.uniform_refine()?);
        }
    }
    Ok(ConvergenceStudy { rows, record })
}

/// Solve once on a structured mesh from the default initial guess.
pub fn solve_structured(
    spec: &ProblemSpec,
    nx: usize,
    nt: usize,
    config: SpaceConfig,
    newton: &NewtonConfig,
) -> Result<(Discretization, NewtonOutcome)> {
    let disc = Discretization::new(Arc::new(spec.structured_mesh(nx, nt)?), config)?;
    let out = newton_solve(disc.initial_guess(spec)?, spec, &disc, newton)?;
    Ok((disc, out))
}

fn sample_line(field: &FieldFunction, points: impl Iterator<Item = [f64; 2]>) -> Result<Vec<f64>> {
    let loc = field.space().mesh().locator();
    points
        .map(|p| {
            field.evaluate(&loc, p).ok_or_else(|| {
                Error::invalid(format!(
                    "sample point ({}, {}) outside the mesh",
                    p[0], p[1]
                ))
            })
        })
        .collect()
}

fn uniform(range: (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                range.1
            } else {
                range.0 + (range.1 - range.0) * i as f64 / (n - 1).max(1) as f64
            }
        })
        .collect()
}

/// `(t_i, f(x, t_i))` at `n` uniform times covering the mesh.
pub fn sample_in_time(field: &FieldFunction, x: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = uniform(field.space().mesh().t_range(), n);
    let v = sample_line(field, t.iter().map(|&t| [x, t]))?;
    Ok((t, v))
}

/// `(x_i, f(x_i, t))` at `n` uniform positions covering the mesh.
pub fn sample_in_space(field: &FieldFunction, t: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = uniform(field.space().mesh().x_range(), n);
    let v = sample_line(field, x.iter().map(|&x| [x, t]))?;
    Ok((x, v))
}

/// CSV with a header row and equally long columns.
pub fn series_csv(names: &[&str], columns: &[&[f64]]) -> String {
    let mut s = names.join(",");
    s.push('\n');
    let n = columns.iter().map(|c| c.len()).min().unwrap_or(0);
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| format!("{:e}", c[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn periodogram(t: &[f64], v: &[f64], omega: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (ti, vi) in t.iter().zip(v) {
        c += vi * (omega * ti).cos();
        s += vi * (omega * ti).sin();
    }
    c * c + s * s
}

/// Angular frequency maximizing the periodogram of the mean-free signal.
///
/// The DFT bins of a record of length `L` are `2π/L` apart, too coarse to
/// resolve a frequency to 1 % when the record holds only a dozen periods.
/// The peak bin of an 8× zero-padded scan is refined by golden-section
/// search on the residual of a least-squares sinusoid fit, which unlike the
/// periodogram has no leakage bias for a non-integer number of periods.
pub fn dominant_frequency(t: &[f64], v: &[f64]) -> Result<f64> {
    if t.len() != v.len() || t.len() < 4 {
        return Err(Error::invalid("need at least 4 equally many samples"));
    }
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0) {
        return Err(Error::invalid("sample times must increase"));
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let v: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let pad = 8;
    let d = 2.0 * PI / (span * pad as f64);
    let bins = t.len() / 2 * pad;
    let best = (1..=bins)
        .max_by(|&a, &b| {
            periodogram(t, &v, a as f64 * d).total_cmp(&periodogram(t, &v, b as f64 * d))
        })
        .expect("at least one bin");
    let (mut lo, mut hi) = ((best as f64 - 1.0).max(0.5) * d, (best as f64 + 1.0) * d);
    let misfit = |w: f64| -> f64 {
        fit_sinusoid(t, &v, w).map_or(f64::MAX, |f| {
            t.iter()
                .zip(&v)
                .map(|(ti, vi)| (vi - f.offset - f.amplitude * (w * ti - f.phase).cos()).powi(2))
                .sum()
        })
    };
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let a = hi - gr * (hi - lo);
        let b = lo + gr * (hi - lo);
        if misfit(a) < misfit(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `v ≈ offset + amplitude · cos(ω t − phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
}

/// Least-squares sinusoid of known frequency.
pub fn fit_sinusoid(t: &[f64], v: &[f64], omega: f64) -> Result<SinusoidFit> {
    if t.len() != v.len() || t.len() < 3 {
        return Err(Error::invalid("need at least 3 equally many samples"));
    }
    let basis = |ti: f64| [(omega * ti).cos(), (omega * ti).sin(), 1.0];
    let mut a = Mat::<f64>::zeros(3, 3);
    let mut b = Col::<f64>::zeros(3);
    for (&ti, &vi) in t.iter().zip(v) {
        let f = basis(ti);
        for i in 0..3 {
            b[i] += f[i] * vi;
            for j in 0..3 {
                a[(i, j)] += f[i] * f[j];
            }
        }
    }
    let c = a.partial_piv_lu().solve(&b);
    if !(0..3).all(|i| c[i].is_finite()) {
        return Err(Error::invalid("degenerate sinusoid fit"));
    }
    Ok(SinusoidFit {
        amplitude: c[0].hypot(c[1]),
        phase: c[1].atan2(c[0]),
        offset: c[2],
    })
}

/// Post-processing of a tidal run at one station.
#[derive(Debug, Clone)]
pub struct TidalReport {
    pub times: Vec<f64>,
    pub zeta: Vec<f64>,
    pub u: Vec<f64>,
    /// Dominant angular frequency of `ζ`.
    pub omega: f64,
    /// Amplitude of the elevation sinusoid fitted after the first forcing
    /// period (the whole record if it spans fewer than two).
    pub amplitude: f64,
    pub velocity_amplitude: f64,
    pub max_abs: f64,
    /// `max |ζ|` after the first forcing period.
    pub max_abs_after_first_period: f64,
    /// Phase of `u` relative to `ζ`, wrapped to `(−π, π]`.
    pub phase_lag: f64,
}

impl TidalReport {
    pub fn frequency_error(&self, alpha: f64) -> f64 {
        (self.omega - alpha).abs() / alpha
    }

    /// `| |lag| − quarter period |` as a fraction of a quarter period.
    pub fn quarter_period_deviation(&self) -> f64 {
        (self.phase_lag.abs() - PI / 2.0).abs() / (PI / 2.0)
    }

    pub fn series_csv(&self) -> String {
        series_csv(&["t", "zeta", "u"], &[&self.times, &self.zeta, &self.u])
    }
}

pub fn tidal_report(state: &TrialState, x: f64, n: usize, alpha: f64) -> Result<TidalReport> {
    let (times, zeta) = sample_in_time(&state.zeta, x, n)?;
    let (_, u) = sample_in_time(&state.u, x, n)?;
    let omega = dominant_frequency(&times, &zeta)?;
    let period = 2.0 * PI / alpha;
    let t0 = times[0];
    let skip = if times[times.len() - 1] - t0 >= 2.0 * period {
        times.partition_point(|t| *t < t0 + period)
    } else {
        0
    };
    let fz = fit_sinusoid(&times[skip..], &zeta[skip..], omega)?;
    let fu = fit_sinusoid(&times[skip..], &u[skip..], omega)?;
    let max_abs = zeta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_abs_after_first_period = times
        .iter()
        .zip(&zeta)
        .filter(|(t, _)| **t >= t0 + period)
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    let mut lag = fu.phase - fz.phase;
    while lag > PI {
        lag -= 2.0 * PI;
    }
    while lag <= -PI {
        lag += 2.0 * PI;
    }
    Ok(TidalReport {
        times,
        zeta,
        u,
        omega,
        amplitude: fz.amplitude,
        velocity_amplitude: fu.amplitude,
        max_abs,
        max_abs_after_first_period,
        phase_lag: lag,
    })
}

/// Elevation profiles of a dam-break run.
#[derive(Debug, Clone)]
pub struct DamBreakReport {
    pub x: Vec<f64>,
    /// `(t, ζ(·, t))` per requested time.
    pub profiles: Vec<(f64, Vec<f64>)>,
}

/// Half-width of the window around the dam used for the oscillation check.
pub const JUMP_WINDOW: f64 = 100.0;

impl DamBreakReport {
    pub fn range(&self, i: usize) -> (f64, f64) {
        let p = &self.profiles[i].1;
        (
            p.iter().copied().fold(f64::MAX, f64::min),
            p.iter().copied().fold(f64::MIN, f64::max),
        )
    }

    /// Overshoot above the upstream level plus undershoot below the
    /// downstream level within [`JUMP_WINDOW`] of the dam.
    pub fn jump_overshoot(&self, i: usize) -> f64 {
        let p = &self.profiles[i].1;
        let (lo, hi) = self
            .x
            .iter()
            .zip(p)
            .filter(|(x, _)| (**x - DAM_POSITION).abs() <= JUMP_WINDOW)
            .fold((f64::MAX, f64::MIN), |(lo, hi), (_, z)| {
                (lo.min(*z), hi.max(*z))
            });
        (hi - DAM_UPSTREAM).max(0.0) + (DAM_DOWNSTREAM - lo).max(0.0)
    }

    /// Right-most sample where the elevation exceeds the downstream level by
    /// a tenth of the initial jump.
    pub fn front(&self, i: usize) -> f64 {
        let level = DAM_DOWNSTREAM + 0.1 * (DAM_UPSTREAM - DAM_DOWNSTREAM);
        let p = &self.profiles[i].1;
        self.x
            .iter()
            .zip(p)
            .filter(|(x, z)| **z > level && **x >= DAM_POSITION - JUMP_WINDOW)
            .map(|(x, _)| *x)
            .fold(f64::NAN, f64::max)
    }

    pub fn series_csv(&self) -> String {
        let mut names = vec!["x".to_string()];
        names.extend(self.profiles.iter().map(|(t, _)| format!("zeta_t{t}")));
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut cols: Vec<&[f64]> = vec![&self.x];
        cols.extend(self.profiles.iter().map(|(_, p)| p.as_slice()));
        series_csv(&names, &cols)
    }
}

pub fn dambreak_report(state: &TrialState, times: &[f64], n: usize) -> Result<DamBreakReport> {
    let mut x = Vec::new();
    let mut profiles = Vec::with_capacity(times.len());
    for &t in times {
        let (xs, z) = sample_in_space(&state.zeta, t, n)?;
        x = xs;
        profiles.push((t, z));
    }
    Ok(DamBreakReport { x, profiles })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_fit_examples() {
        let s = rate_fit(&[1.0, 0.5, 0.25], &[1e-1, 1.25e-2, 1.5625e-3]).unwrap();
        assert!((s - 3.0).abs() < 1e-12);
        assert!(rate_fit(&[1.0, 0.5, 0.25], &[2.0, 2.0, 2.0]).unwrap().abs() < 1e-15);
        assert!(rate_fit(&[1.0, 0.5], &[1.0, 0.5]).is_err());
        assert!(rate_fit(&[1.0, 0.0, 0.25], &[1.0, 0.5, 0.1]).is_err());
        assert!(rate_fit(&[1.0, 0.5, 0.25], &[1.0, -0.5, 0.1]).is_err());
    }

    #[test]
    fn frequency_between_bins_is_resolved() {
        // 13.53 periods: the nearest plain DFT bins are 3.5 % off.
        let alpha = crate::cases::TIDAL_ALPHA;
        let t = uniform((0.0, 604800.0), 512);
        let v: Vec<f64> = t
            .iter()
            .map(|t| 0.3 + 0.1 * (alpha * t - 0.4).cos())
            .collect();
        let w = dominant_frequency(&t, &v).unwrap();
        assert!((w - alpha).abs() / alpha < 1e-8, "{w}");
        let fit = fit_sinusoid(&t, &v, alpha).unwrap();
        assert!((fit.amplitude - 0.1).abs() < 1e-12);
        assert!((fit.phase - 0.4).abs() < 1e-10);
        assert!((fit.offset - 0.3).abs() < 1e-12);
    }

    #[test]
    fn series_csv_layout() {
        let s = series_csv(&["a", "b"], &[&[1.0, 2.0], &[0.5, 0.25]]);
        assert_eq!(s, "a,b\n1e0,5e-1\n2e0,2.5e-1\n");
    }
}
