//! Nonlinear solvers: scaled damped Newton with finite-difference Jacobians,
//! steady-state solution of the full DAE, and homotopy continuation between
//! operating points.
//!
//! All residuals and unknowns carry physical units spanning roughly nine
//! orders of magnitude, so both are diagonally scaled before Newton sees
//! them: temperatures in K, pressures in kPa, mass flows in g/s, heat flows
//! in kW, stored enthalpies in MJ. Convergence is measured as the ∞-norm of
//! the scaled residual.

use nalgebra::{DMatrix, DVector};

use crate::error::{AhpdError, Result};
use crate::model::{
    f_scales, g_scales, x_scales, AlgebraicVector, InputVector, Model, OutputVector, StateVector,
    N_STATES,
};
use crate::props::{PressureRange, PropCtx, RangeMode};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Convergence tolerance on the scaled residual ∞-norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Maximum number of step halvings in the line search.
    pub max_backtrack: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-9,
            max_iter: 120,
            max_backtrack: 40,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    /// Scaled residual ∞-norm at the returned point.
    pub residual: f64,
    /// True if any property evaluation clamped its input at the solution.
    pub clamped: bool,
}

/// Damped Newton on `F(v) = 0` with diagonal variable and residual scaling.
///
/// `f` receives unknowns in SI and returns SI residuals; it may fail on
/// infeasible iterates, which the line search treats as a rejected step.
pub fn newton_solve<F>(
    mut f: F,
    v0: &[f64],
    var_scales: &[f64],
    res_scales: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = v0.len();
    assert_eq!(var_scales.len(), n);
    assert_eq!(res_scales.len(), n);

    let to_si = |vh: &DVector<f64>| -> Vec<f64> {
        (0..n).map(|i| vh[i] * var_scales[i]).collect()
    };
    let mut eval = |vh: &DVector<f64>| -> Result<DVector<f64>> {
        let r = f(&to_si(vh))?;
        if r.len() != n {
            return Err(AhpdError::Dimension {
                what: "residual vector",
                expected: n,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(AhpdError::InvalidInput(
                "non-finite residual encountered".into(),
            ));
        }
        Ok(DVector::from_iterator(
            n,
            r.iter().zip(res_scales).map(|(ri, s)| ri / s),
        ))
    };

    let mut vh = DVector::from_iterator(n, v0.iter().zip(var_scales).map(|(v, s)| v / s));
    let mut rh = eval(&vh)?;
    let mut norm = rh.amax();

    for iter in 0..opts.max_iter {
        if norm < opts.tol {
            return Ok((
                to_si(&vh),
                SolveReport {
                    iterations: iter,
                    residual: norm,
                    clamped: false,
                },
            ));
        }

        // Forward-difference Jacobian in scaled space, column by column.
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = (1e-6 * vh[j].abs()).max(1e-8);
            let mut vp = vh.clone();
            vp[j] += h;
            let rp = match eval(&vp) {
                Ok(r) => r,
                Err(_) => {
                    // Perturbed point infeasible: difference backwards.
                    let mut vm = vh.clone();
                    vm[j] -= h;
                    let rm = eval(&vm)?;
                    jac.set_column(j, &((&rh - rm) / h));
                    continue;
                }
            };
            jac.set_column(j, &((rp - &rh) / h));
        }

        let lu = jac.lu();
        let dv = match lu.solve(&(-&rh)) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => return Err(AhpdError::SingularJacobian { rcond: 0.0 }),
        };

        // Backtracking line search on the scaled 2-norm.
        let f0 = rh.norm_squared();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtrack {
            let vt = &vh + alpha * &dv;
            match eval(&vt) {
                Ok(rt) if rt.norm_squared() <= (1.0 - 1e-4 * alpha) * f0 => {
                    accepted = Some((vt, rt));
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        match accepted {
            Some((vt, rt)) => {
                vh = vt;
                norm = rt.amax();
                rh = rt;
            }
            None => {
                return Err(AhpdError::NoConvergence {
                    iterations: iter + 1,
                    residual: norm,
                })
            }
        }
    }

    if norm < opts.tol {
        Ok((
            to_si(&vh),
            SolveReport {
                iterations: opts.max_iter,
                residual: norm,
                clamped: false,
            },
        ))
    } else {
        Err(AhpdError::NoConvergence {
            iterations: opts.max_iter,
            residual: norm,
        })
    }
}

/// A fully solved operating point.
#[derive(Debug, Clone)]
pub struct SteadyPoint {
    pub u: InputVector,
    pub x: StateVector,
    pub z: AlgebraicVector,
    pub y: OutputVector,
    pub report: SolveReport,
}

/// Physically motivated starting point for Newton at inputs `u`.
pub fn initial_guess(model: &Model, u: &InputVector) -> Result<(StateVector, AlgebraicVector)> {
    let pr = PropCtx::new(model.props, RangeMode::Clamp);
    let p = model.params;

    let t_cond = (u.t_w_ac_in + 7.0).clamp(303.15, 323.15);
    let p_high = pr.p_sat_water(t_cond, PressureRange::HighSide)?;
    let t_evap = (u.t_w_e_in - 4.5).clamp(277.15, 293.15);
    let p_low = pr.p_sat_water(t_evap, PressureRange::LowSide)?;

    let xi_rso = 0.52;
    let xi_pso = 0.555;
    let mdot_rso = u.vdot_rso * 1540.0;
    let m_pso_g = 0.96 * mdot_rso / p.k_sev;
    let m_libr_g = xi_pso * m_pso_g;
    let m_libr_a = p.m_libr_sumps - m_libr_g;
    let m_rso_a = m_libr_a / xi_rso;
    let m_ref_e = p.m_total_sumps - p.m_ref_c - m_rso_a - m_pso_g;
    if !(m_ref_e > 0.5) || !(m_rso_a > 0.5) || !(m_pso_g > 0.5) {
        return Err(AhpdError::OutOfEnvelope {
            reason: format!(
                "initial-guess sump masses infeasible (m_pso_g={m_pso_g:.2}, m_rso_a={m_rso_a:.2}, m_ref_e={m_ref_e:.2} kg)"
            ),
        });
    }

    let t_gen = pr
        .t_sat_solution(p_high, xi_pso, PressureRange::HighSide)?
        .clamp(293.15, 363.15);
    let t_abs_sat = pr
        .t_sat_solution(p_low, xi_rso, PressureRange::LowSide)?
        .clamp(293.15, 363.15);
    let t_abs = t_abs_sat - 2.0;

    let dt_in = (t_gen - t_abs).max(5.0);
    let ttd_h = 0.15 * dt_in;
    let ttd_c = 0.08 * dt_in;
    let t_rso_shx_out = t_gen - ttd_h;
    let t_pso_shx_out = t_abs + ttd_c;

    let cp_w = model.props.liquid_water_enthalpy.c2;
    let eps_e = (p.k_e[0] - p.k_e[1] * u.mdot_w_e).clamp(0.2, 0.99);
    let qdot_e = (eps_e * u.mdot_w_e * cp_w * (u.t_w_e_in - t_evap)).max(2e3);
    let mdot_ref = qdot_e / 2.45e6;
    let qdot_g = 1.35 * qdot_e;
    let qdot_c = mdot_ref * 2.45e6;
    let qdot_a = (qdot_g + qdot_e - qdot_c).max(0.5 * qdot_e);

    let x = StateVector {
        m_pso_g,
        m_libr_g,
        h_pso_g: m_pso_g * pr.h_solution(t_gen, xi_pso)?,
        h_ref_c: p.m_ref_c * pr.h_liquid_water(t_cond)?,
        m_rso_a,
        h_rso_a: m_rso_a * pr.h_solution(t_abs, xi_rso)?,
        h_ref_e: m_ref_e * pr.h_liquid_water(t_evap)?,
        h_rso_shx: p.m_rso_shx * pr.h_solution(t_rso_shx_out, xi_rso)?,
        h_pso_shx: p.m_pso_shx * pr.h_solution(t_pso_shx_out, xi_pso)?,
    };

    let mdot_pso = p.k_sev * m_pso_g;
    let frac_flash = 0.05;
    let mut z = AlgebraicVector {
        p_high,
        p_low,
        t_pso_hx_g_out: t_gen,
        xi_pso_hx_g_out: xi_pso,
        mdot_pso_hx_g_out: mdot_pso,
        mdot_ref_grh: mdot_ref,
        qdot_g,
        t_w_g_out: u.t_w_g_in - qdot_g / (u.mdot_w_g * cp_w),
        ua_g: 0.0,
        t_ref_hx_c_out: t_cond,
        qdot_c,
        t_w_c_out: 0.0,
        mdot_ref_c_out: mdot_ref,
        eps_c: (p.k_c[0] - p.k_c[1] * u.mdot_w_ac).clamp(0.2, 0.99),
        mdot_v_ref_e_in: frac_flash * mdot_ref,
        mdot_l_ref_e_in: (1.0 - frac_flash) * mdot_ref,
        t_ref_hx_e_out: t_evap,
        mdot_v_ref_hx_e_out: 0.95 * mdot_ref,
        mdot_l_ref_hx_e_out: p.mdot_ref_rec - 0.95 * mdot_ref,
        qdot_e,
        t_w_e_out: u.t_w_e_in - qdot_e / (u.mdot_w_e * cp_w),
        eps_e,
        m_ref_e,
        t_ref_rec: t_evap,
        mdot_ref_grl: mdot_ref,
        h_ref_grl: pr.h_vapor_water(t_evap)?,
        mdot_pso_a_in: mdot_pso,
        t_rso_hx_a_out_sat: t_abs_sat,
        t_rso_hx_a_out: t_abs,
        xi_rso_hx_a_out: xi_rso,
        mdot_rso_hx_a_out: mdot_rso,
        qdot_a,
        t_w_a_out: u.t_w_ac_in + qdot_a / (u.mdot_w_ac * cp_w),
        ua_a: 0.0,
        m_libr_a,
        ttd_h,
        ttd_c,
        t_rso_shx_out_ss: t_rso_shx_out,
        t_pso_shx_out_ss: t_pso_shx_out,
        qdot_shx: mdot_rso * 2000.0 * (t_rso_shx_out - t_abs),
        t_rso_shx_out_v2: t_rso_shx_out,
        t_pso_shx_out_v2: t_pso_shx_out,
    };
    z.t_w_c_out = z.t_w_a_out + qdot_c / (u.mdot_w_ac * cp_w);

    // Consistent heat-exchanger coefficients.
    let st = model.streams(&x, &z, u, &pr)?;
    let hx = model.hx_coefficients(u, &z, &st)?;
    z.ua_g = hx.ua_g;
    z.ua_a = hx.ua_a;
    Ok((x, z))
}

/// Solves the algebraic subsystem `g(x, z, u) = 0` at a frozen state.
pub fn solve_algebraic(
    model: &Model,
    x: &StateVector,
    u: &InputVector,
    z_guess: &AlgebraicVector,
    opts: &SolverOptions,
) -> Result<(AlgebraicVector, SolveReport)> {
    let variant = model.variant;
    let vs = AlgebraicVector::scales(variant);
    let rs = g_scales(variant);
    let (v, mut report) = newton_solve(
        |zv| {
            let z = AlgebraicVector::unpack(variant, zv)?;
            Ok(model.residuals(x, &z, u, RangeMode::Clamp)?.g())
        },
        &z_guess.pack(variant),
        &vs,
        &rs,
        opts,
    )?;
    let z = AlgebraicVector::unpack(variant, &v)?;
    report.clamped = model.residuals(x, &z, u, RangeMode::Clamp)?.clamped;
    Ok((z, report))
}

fn pack_xz(variant: crate::model::Variant, x: &StateVector, z: &AlgebraicVector) -> Vec<f64> {
    let mut v = x.as_array().to_vec();
    v.extend(z.pack(variant));
    v
}

fn unpack_xz(
    variant: crate::model::Variant,
    v: &[f64],
) -> Result<(StateVector, AlgebraicVector)> {
    let x = StateVector::from_array(v[..N_STATES].try_into().unwrap());
    let z = AlgebraicVector::unpack(variant, &v[N_STATES..])?;
    Ok((x, z))
}

fn xz_scales(variant: crate::model::Variant) -> (Vec<f64>, Vec<f64>) {
    let mut vs = x_scales().to_vec();
    vs.extend(AlgebraicVector::scales(variant));
    let mut rs = f_scales().to_vec();
    rs.extend(g_scales(variant));
    (vs, rs)
}

/// Solves `f = 0, g = 0` over `(x, z)` from an explicit starting point.
pub fn solve_steady_from(
    model: &Model,
    u: &InputVector,
    x0: &StateVector,
    z0: &AlgebraicVector,
    opts: &SolverOptions,
) -> Result<SteadyPoint> {
    u.validate(model.params)?;
    let variant = model.variant;
    let (vs, rs) = xz_scales(variant);
    let (v, mut report) = newton_solve(
        |v| {
            let (x, z) = unpack_xz(variant, v)?;
            let r = model.steady_residuals(&x, &z, u, RangeMode::Clamp)?;
            let mut out = r.f.to_vec();
            out.extend(r.g());
            Ok(out)
        },
        &pack_xz(variant, x0, z0),
        &vs,
        &rs,
    opts,
    )?;
    let (x, z) = unpack_xz(variant, &v)?;

    // Confirm the converged point with strict window checks and the hard
    // envelope; record whether the clamped path was exercised at the root.
    let strict = model.steady_residuals(&x, &z, u, RangeMode::Strict);
    match strict {
        Ok(r) => report.clamped = r.clamped,
        Err(e) => {
            return Err(AhpdError::OutOfEnvelope {
                reason: format!("converged point violates a property window: {e}"),
            })
        }
    }
    model.check_envelope(&x, &z)?;
    let y = model.output_map(&x, &z, u);
    Ok(SteadyPoint {
        u: *u,
        x,
        z,
        y,
        report,
    })
}

/// Steady state at `u`, optionally warm-started. Falls back to homotopy
/// continuation from the validation reference operating point when plain
/// Newton fails.
pub fn solve_steady_state(
    model: &Model,
    u: &InputVector,
    warm: Option<(&StateVector, &AlgebraicVector)>,
    opts: &SolverOptions,
) -> Result<SteadyPoint> {
    if let Some((x0, z0)) = warm {
        if let Ok(sp) = solve_steady_from(model, u, x0, z0, opts) {
            return Ok(sp);
        }
    }
    let (x0, z0) = initial_guess(model, u)?;
    match solve_steady_from(model, u, &x0, &z0, opts) {
        Ok(sp) => Ok(sp),
        Err(first_err) => {
            // Homotopy from the reference operating point, which the direct
            // guess is tuned to.
            let rop = InputVector::reference_operating_point();
            let (xr, zr) = initial_guess(model, &rop)?;
            let base = solve_steady_from(model, &rop, &xr, &zr, opts).map_err(|_| first_err)?;
            homotopy_continuation(model, &base, u, opts)
        }
    }
}

/// Traces the steady-state branch from a solved point to new inputs by
/// adaptively stepping a linear input interpolation.
pub fn homotopy_continuation(
    model: &Model,
    from: &SteadyPoint,
    u_to: &InputVector,
    opts: &SolverOptions,
) -> Result<SteadyPoint> {
    let ua = from.u.as_array();
    let ub = u_to.as_array();
    let blend = |lambda: f64| {
        let mut a = [0.0; crate::model::N_INPUTS];
        for i in 0..a.len() {
            a[i] = ua[i] + lambda * (ub[i] - ua[i]);
        }
        InputVector::from_array(a)
    };

    let mut current = from.clone();
    let mut lambda = 0.0f64;
    let mut dl = 0.25f64;
    let mut step = 0usize;
    let max_steps = 200;
    while lambda < 1.0 {
        step += 1;
        if step > max_steps {
            return Err(AhpdError::Homotopy {
                step,
                steps: max_steps,
                source: Box::new(AhpdError::NoConvergence {
                    iterations: 0,
                    residual: f64::NAN,
                }),
            });
        }
        let target = (lambda + dl).min(1.0);
        match solve_steady_from(model, &blend(target), &current.x, &current.z, opts) {
            Ok(sp) => {
                current = sp;
                lambda = target;
                dl = (dl * 1.6).min(0.5);
            }
            Err(e) => {
                dl *= 0.5;
                if dl < 1e-3 {
                    return Err(AhpdError::Homotopy {
                        step,
                        steps: max_steps,
                        source: Box::new(e),
                    });
                }
            }
        }
    }
    Ok(current)
}

/// Verifies the index-1 property at a point: the Jacobian of the algebraic
/// residuals with respect to the algebraic unknowns must be invertible.
pub fn check_index_one(
    model: &Model,
    x: &StateVector,
    z: &AlgebraicVector,
    u: &InputVector,
) -> Result<()> {
    let variant = model.variant;
    let n = model.g_dim();
    let vs = AlgebraicVector::scales(variant);
    let rs = g_scales(variant);
    let z0 = z.pack(variant);
    let base: Vec<f64> = model.residuals(x, z, u, RangeMode::Clamp)?.g();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = (1e-6 * (z0[j] / vs[j]).abs()).max(1e-8) * vs[j];
        let mut zp = z0.clone();
        zp[j] += h;
        let rp = model
            .residuals(x, &AlgebraicVector::unpack(variant, &zp)?, u, RangeMode::Clamp)?
            .g();
        for i in 0..n {
            jac[(i, j)] = (rp[i] - base[i]) / rs[i] / (h / vs[j]);
        }
    }
    if jac.lu().is_invertible() {
        Ok(())
    } else {
        Err(AhpdError::NotIndexOne)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, Variant};
    use crate::props::PropertyParams;
    use approx::assert_relative_eq;

    #[test]
    fn newton_solves_quadratic_system() {
        // x^2 + y^2 = 25, x - y = 1 → (4, 3).
        let (v, rep) = newton_solve(
            |v| Ok(vec![v[0] * v[0] + v[1] * v[1] - 25.0, v[0] - v[1] - 1.0]),
            &[5.0, 1.0],
            &[1.0, 1.0],
            &[1.0, 1.0],
            &SolverOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(v[0], 4.0, max_relative = 1e-10);
        assert_relative_eq!(v[1], 3.0, max_relative = 1e-10);
        assert!(rep.iterations < 20);
    }

    #[test]
    fn newton_respects_scaling() {
        // Badly scaled linear system: 1e6·a = 3e6, 1e-6·b = 2e-6.
        let (v, _) = newton_solve(
            |v| Ok(vec![1e6 * v[0] - 3e6, 1e-6 * v[1] - 2e-6]),
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[1e6, 1e-6],
            &SolverOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(v[0], 3.0, max_relative = 1e-9);
        assert_relative_eq!(v[1], 2.0, max_relative = 1e-9);
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        let r = newton_solve(
            |v| Ok(vec![v[0] + v[1] - 1.0, 2.0 * (v[0] + v[1]) - 3.0]),
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[1.0, 1.0],
            &SolverOptions::default(),
        );
        assert!(matches!(
            r,
            Err(AhpdError::SingularJacobian { .. }) | Err(AhpdError::NoConvergence { .. })
        ));
    }

    #[test]
    fn newton_line_search_handles_infeasible_iterates() {
        // Root at x = 2 with a residual that fails for x <= 0; full steps
        // from the far side overshoot into the infeasible region.
        let (v, _) = newton_solve(
            |v| {
                if v[0] <= 0.0 {
                    Err(AhpdError::InvalidInput("negative".into()))
                } else {
                    Ok(vec![v[0].ln() - 2f64.ln()])
                }
            },
            &[8.0],
            &[1.0],
            &[1.0],
            &SolverOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(v[0], 2.0, max_relative = 1e-9);
    }

    #[test]
    fn initial_guess_is_feasible_at_rop() {
        let mp = ModelParams::default();
        let pp = PropertyParams::default();
        for variant in [Variant::BaseA, Variant::V1, Variant::V2] {
            let m = Model::new(variant, &mp, &pp);
            let u = InputVector::reference_operating_point();
            let (x, z) = initial_guess(&m, &u).unwrap();
            // The guess must at least be evaluable.
            let r = m.residuals(&x, &z, &u, RangeMode::Clamp).unwrap();
            assert!(r.g().iter().all(|v| v.is_finite()));
            assert!(r.f.iter().all(|v| v.is_finite()));
        }
    }
}
