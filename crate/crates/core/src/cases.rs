//! Problem definitions: a manufactured smooth solution and the physical
//! benchmarks (lake at rest, tidal channel, dam break).

use std::sync::Arc;

use crate::forms::{
    constant, constant_in_space, ExactField, ExactSolution, FormVariant, IcInterpolation,
    PhysicalParams, ProblemSpec, SpaceFn, SpaceTimeFn, VelocityBc,
};
use crate::mesh::Side;

/// Tidal forcing frequency [rad/s].
pub const TIDAL_ALPHA: f64 = 0.00014051891708;

/// Initial mesh of the adaptive manufactured runs.
pub const ADAPT_MESH: (usize, usize) = (4, 8);

/// Structured `(nx, nt)` meshes of the physical benchmarks.
pub const LAKE_MESH: (usize, usize) = (16, 16);
pub const TIDAL_MESH: (usize, usize) = (25, 400);
/// Coarsened dam-break mesh; [`DAMBREAK_FINE_MESH`] is the original.
pub const DAMBREAK_MESH: (usize, usize) = (400, 20);
pub const DAMBREAK_FINE_MESH: (usize, usize) = (800, 35);

fn st(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> SpaceTimeFn {
    Arc::new(f)
}

fn sp(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> SpaceFn {
    Arc::new(f)
}

/// Parameters of the manufactured problem with exact solution
/// `ζ = cos(x − t)`, `u = sin(x + t)`, `σ = cos(x + t)` on `(0, 1) × (0, T)`.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedParams {
    pub mu: f64,
    pub tau_bf: f64,
    pub t_final: f64,
    /// Constant bathymetry. The nonlinear case uses 0 so that `H = ζ`.
    pub h_b: f64,
    pub variant: FormVariant,
}

impl Default for ManufacturedParams {
    fn default() -> Self {
        ManufacturedParams {
            mu: 1e-5,
            tau_bf: 1.0,
            t_final: 0.5,
            h_b: 0.0,
            variant: FormVariant::Nonlinear,
        }
    }
}

impl ManufacturedParams {
    /// The purely convective regime used for the adaptive study.
    pub fn convective() -> Self {
        ManufacturedParams {
            mu: 0.0,
            t_final: 1.0,
            ..Self::default()
        }
    }

    /// Linearized variant with `H = h_b = 1` and no convection.
    pub fn linearized() -> Self {
        ManufacturedParams {
            h_b: 1.0,
            variant: FormVariant::Linearized,
            ..Self::default()
        }
    }
}

pub fn manufactured_exact() -> ExactSolution {
    ExactSolution {
        zeta: ExactField {
            value: st(|x, t| (x - t).cos()),
            dx: st(|x, t| -(x - t).sin()),
            dt: st(|x, t| (x - t).sin()),
        },
        u: ExactField {
            value: st(|x, t| (x + t).sin()),
            dx: st(|x, t| (x + t).cos()),
            dt: st(|x, t| (x + t).cos()),
        },
        sigma: ExactField {
            value: st(|x, t| (x + t).cos()),
            dx: st(|x, t| -(x + t).sin()),
            dt: st(|x, t| -(x + t).sin()),
        },
    }
}

/// Manufactured problem with sources and boundary data derived from the
/// exact solution. The velocity is positive, so the inflow end is `x = 0`.
pub fn manufactured_case(mp: ManufacturedParams) -> ProblemSpec {
    let g = 9.81;
    let ManufacturedParams {
        mu,
        tau_bf,
        h_b,
        variant,
        ..
    } = mp;
    let nonlinear = variant == FormVariant::Nonlinear;
    // Continuity: ζ_t + (u H)_x with H = ζ + h_b, or H = h_b when linearized.
    let s_zeta = st(move |x, t| {
        let (z, zx, zt) = ((x - t).cos(), -(x - t).sin(), (x - t).sin());
        let (u, ux) = ((x + t).sin(), (x + t).cos());
        if nonlinear {
            zt + ux * (z + h_b) + u * zx
        } else {
            zt + ux * h_b
        }
    });
    // Momentum: u_t + u u_x + τ u + g ζ_x − μ σ_x.
    let f = st(move |x, t| {
        let zx = -(x - t).sin();
        let (u, ux) = ((x + t).sin(), (x + t).cos());
        let sx = -(x + t).sin();
        let conv = if nonlinear { u * ux } else { 0.0 };
        ux + conv + tau_bf * u + g * zx - mu * sx
    });
    let exact = manufactured_exact();
    ProblemSpec {
        name: "manufactured".into(),
        params: PhysicalParams {
            g,
            mu,
            tau_bf,
            h_b: constant_in_space(h_b),
            f,
            s_zeta,
            variant,
        },
        zeta_hat: exact.zeta.value.clone(),
        velocity_bc: [
            VelocityBc::Dirichlet(exact.u.value.clone()),
            VelocityBc::Dirichlet(exact.u.value.clone()),
        ],
        zeta0: sp(|x| x.cos()),
        u0: sp(|x| x.sin()),
        ic_interpolation: IcInterpolation::Nodal,
        inflow: Side::Left,
        x_range: (0.0, 1.0),
        t_range: (0.0, mp.t_final),
        exact: Some(exact),
    }
}

/// Quartic bump on `(0.3, 0.7)` with peak 0.25 at `x = 0.5`.
pub fn lake_bump(x: f64) -> f64 {
    if x > 0.3 && x < 0.7 {
        156.25 * (x - 0.3).powi(2) * (x - 0.7).powi(2)
    } else {
        0.0
    }
}

/// Still water over a bump: no forcing, so the exact state is `ζ = u = 0`.
pub fn lake_case() -> ProblemSpec {
    let zero = constant(0.0);
    ProblemSpec {
        name: "lake".into(),
        params: PhysicalParams {
            mu: 1e-5,
            tau_bf: 1.0,
            h_b: sp(|x| 2.0 - lake_bump(x)),
            ..PhysicalParams::default()
        },
        zeta_hat: zero.clone(),
        velocity_bc: [
            VelocityBc::Dirichlet(zero.clone()),
            VelocityBc::Dirichlet(zero.clone()),
        ],
        zeta0: constant_in_space(0.0),
        u0: constant_in_space(0.0),
        ic_interpolation: IcInterpolation::Nodal,
        inflow: Side::Left,
        x_range: (0.0, 1.0),
        t_range: (0.0, 10.0),
        exact: Some(ExactSolution {
            zeta: ExactField {
                value: zero.clone(),
                dx: zero.clone(),
                dt: zero.clone(),
            },
            u: ExactField {
                value: zero.clone(),
                dx: zero.clone(),
                dt: zero.clone(),
            },
            sigma: ExactField {
                value: zero.clone(),
                dx: zero.clone(),
                dt: zero,
            },
        }),
    }
}

/// Tidal forcing of a 10 km channel of 10 m depth over seven days.
pub fn tidal_case() -> ProblemSpec {
    ProblemSpec {
        name: "tidal".into(),
        params: PhysicalParams {
            mu: 25.0,
            tau_bf: 0.01,
            h_b: constant_in_space(10.0),
            ..PhysicalParams::default()
        },
        zeta_hat: st(|_, t| 0.1 * (TIDAL_ALPHA * t).cos()),
        velocity_bc: [
            VelocityBc::Stress(constant(0.0)),
            VelocityBc::Dirichlet(constant(0.0)),
        ],
        zeta0: constant_in_space(0.0),
        u0: constant_in_space(0.0),
        ic_interpolation: IcInterpolation::Nodal,
        inflow: Side::Left,
        x_range: (0.0, 10000.0),
        t_range: (0.0, 604800.0),
        exact: None,
    }
}

/// Position of the dam and the two initial water levels.
pub const DAM_POSITION: f64 = 1000.0;
pub const DAM_UPSTREAM: f64 = 10.0;
pub const DAM_DOWNSTREAM: f64 = 5.0;

/// Sudden removal of a dam in a 2 km frictional channel with flat bottom.
pub fn dambreak_case() -> ProblemSpec {
    ProblemSpec {
        name: "dambreak".into(),
        params: PhysicalParams {
            mu: 1e-2,
            tau_bf: 1.0,
            h_b: constant_in_space(0.0),
            ..PhysicalParams::default()
        },
        zeta_hat: constant(0.0),
        velocity_bc: [
            VelocityBc::Dirichlet(constant(0.0)),
            VelocityBc::Stress(constant(0.0)),
        ],
        zeta0: sp(|x| {
            if x <= DAM_POSITION {
                DAM_UPSTREAM
            } else {
                DAM_DOWNSTREAM
            }
        }),
        u0: constant_in_space(0.0),
        ic_interpolation: IcInterpolation::VertexLinear,
        inflow: Side::Right,
        x_range: (0.0, 2000.0),
        t_range: (0.0, 200.0),
        exact: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Strong-form residuals of the manufactured solution evaluated with
    /// central differences only, independent of the closed-form sources.
    #[test]
    fn manufactured_sources_satisfy_strong_pdes() {
        for mp in [
            ManufacturedParams::default(),
            ManufacturedParams::convective(),
            ManufacturedParams::linearized(),
        ] {
            let spec = manufactured_case(mp);
            let ex = spec.exact.clone().unwrap();
            let nonlinear = mp.variant == FormVariant::Nonlinear;
            let h = 1e-5;
            let d = |f: &SpaceTimeFn, x: f64, t: f64, dir: usize| {
                if dir == 0 {
                    (f(x + h, t) - f(x - h, t)) / (2.0 * h)
                } else {
                    (f(x, t + h) - f(x, t - h)) / (2.0 * h)
                }
            };
            let mut worst: f64 = 0.0;
            for i in 0..100 {
                for j in 0..100 {
                    let x = (i as f64 + 0.5) / 100.0;
                    let t = mp.t_final * (j as f64 + 0.5) / 100.0;
                    let z = &ex.zeta.value;
                    let u = &ex.u.value;
                    let hfun: SpaceTimeFn = if nonlinear {
                        let z = z.clone();
                        Arc::new(move |x, t| z(x, t) + mp.h_b)
                    } else {
                        constant(mp.h_b)
                    };
                    let (uu, hh) = (u.clone(), hfun.clone());
                    let flux: SpaceTimeFn = Arc::new(move |x, t| uu(x, t) * hh(x, t));
                    let cont = d(z, x, t, 1) + d(&flux, x, t, 0) - (spec.params.s_zeta)(x, t);
                    let conv = if nonlinear {
                        u(x, t) * d(u, x, t, 0)
                    } else {
                        0.0
                    };
                    let mom = d(u, x, t, 1) + conv + mp.tau_bf * u(x, t) + 9.81 * d(z, x, t, 0)
                        - mp.mu * d(&ex.sigma.value, x, t, 0)
                        - (spec.params.f)(x, t);
                    let cons = (ex.sigma.value)(x, t) - d(u, x, t, 0);
                    worst = worst.max(cont.abs()).max(mom.abs()).max(cons.abs());
                }
            }
            assert!(worst < 1e-8, "strong residual {worst}");
        }
    }

    #[test]
    fn exact_derivative_callables_match_differences() {
        let ex = manufactured_exact();
        let h = 1e-6;
        for f in [&ex.zeta, &ex.u, &ex.sigma] {
            for &(x, t) in &[(0.1, 0.2), (0.7, 0.45), (0.5, 0.0)] {
                let dx = ((f.value)(x + h, t) - (f.value)(x - h, t)) / (2.0 * h);
                let dt = ((f.value)(x, t + h) - (f.value)(x, t - h)) / (2.0 * h);
                assert!((dx - (f.dx)(x, t)).abs() < 1e-8);
                assert!((dt - (f.dt)(x, t)).abs() < 1e-8);
            }
        }
        // σ is the spatial derivative of u.
        for &(x, t) in &[(0.3, 0.1), (0.9, 0.4)] {
            assert_eq!((ex.sigma.value)(x, t), (ex.u.dx)(x, t));
        }
    }

    #[test]
    fn benchmark_constants() {
        let period = 2.0 * std::f64::consts::PI / TIDAL_ALPHA;
        assert!((period - 44714.16).abs() < 0.01, "{period}");
        let d = dambreak_case();
        assert_eq!((d.zeta0)(1000.0) - (d.zeta0)(1000.0 + 1e-9), 5.0);
        assert!((lake_bump(0.5) - 0.25).abs() < 1e-14);
        assert_eq!(lake_bump(0.3), 0.0);
        let lake = lake_case();
        assert_eq!((lake.params.f)(0.4, 3.0), 0.0);
        assert_eq!((lake.params.s_zeta)(0.4, 3.0), 0.0);
        assert!(tidal_case().validate().is_ok());
    }
}
