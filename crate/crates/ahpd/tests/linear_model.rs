//! Linearized model vs the nonlinear plant: stability, steady gains, and
//! small-step trajectory agreement.

use ahpd::linearize::linearize;
use ahpd::model::{InputVector, Model, ModelParams, OutputVector, Variant};
use ahpd::props::PropertyParams;
use ahpd::solver::{solve_steady_state, SolverOptions};
use ahpd::transient::{integrate, InputSchedule, IntegrationOptions};

fn base_a_anchor() -> (Model<'static>, ahpd::solver::SteadyPoint) {
    // Leak the parameter sets so the model can be returned from the helper;
    // fine in tests.
    let mp: &'static ModelParams = Box::leak(Box::new(ModelParams::default()));
    let pp: &'static PropertyParams = Box::leak(Box::new(PropertyParams::default()));
    let m = Model::new(Variant::BaseA, mp, pp);
    let u = InputVector::reference_operating_point();
    let sp = solve_steady_state(&m, &u, None, &SolverOptions::default()).unwrap();
    (m, sp)
}

#[test]
fn linear_model_is_stable_at_the_anchor() {
    let (m, sp) = base_a_anchor();
    let ss = linearize(&m, &sp).unwrap();
    let eigs = ss.eigenvalues();
    assert_eq!(eigs.len(), 9);
    assert!(
        ss.is_hurwitz(0.0),
        "unstable eigenvalues: {:?}",
        eigs.iter().filter(|(re, _)| *re >= 0.0).collect::<Vec<_>>()
    );
}

#[test]
fn steady_gains_match_finite_differences() {
    let (m, sp) = base_a_anchor();
    let ss = linearize(&m, &sp).unwrap();
    let gain = ss.steady_gain().unwrap();

    // Central-difference steady-state gains of the nonlinear model for two
    // representative input channels.
    for (j, du) in [(0usize, 0.5), (4usize, 0.5)] {
        let mut up = sp.u;
        let mut um = sp.u;
        let mut upa = up.as_array();
        upa[j] += du;
        up = InputVector::from_array(upa);
        upa[j] -= 2.0 * du;
        um = InputVector::from_array(upa);
        let yp = solve_steady_state(&m, &up, Some((&sp.x, &sp.z)), &SolverOptions::default())
            .unwrap()
            .y
            .as_array();
        let ym = solve_steady_state(&m, &um, Some((&sp.x, &sp.z)), &SolverOptions::default())
            .unwrap()
            .y
            .as_array();
        for i in 0..OutputVector::NAMES.len() {
            let fd = (yp[i] - ym[i]) / (2.0 * du);
            let lin = gain[(i, j)];
            let scale = fd.abs().max(gain.column(j).amax() * 1e-3).max(1e-6);
            assert!(
                (fd - lin).abs() / scale < 0.03,
                "gain[{i},{j}]: fd {fd} vs linear {lin}"
            );
        }
    }
}

#[test]
fn ten_kelvin_step_stays_close_to_nonlinear_response() {
    let (m, sp) = base_a_anchor();
    let ss = linearize(&m, &sp).unwrap();

    let mut u1 = sp.u;
    u1.t_w_g_in += 10.0;
    let schedule = InputSchedule::step(sp.u, u1, 60.0);
    let t_end = 3600.0;
    let opts = IntegrationOptions::default();

    let nl = integrate(&m, &sp.x, &sp.z, &schedule, 0.0, t_end, &opts).unwrap();
    let (lt, ly) = ss.simulate(&schedule, t_end, opts.dt).unwrap();

    // Compare the water outlet temperatures on the nonlinear sample grid.
    let interp = |t: f64, idx: usize| -> f64 {
        let k = lt.partition_point(|&s| s < t).min(lt.len() - 1).max(1);
        let (t0, t1) = (lt[k - 1], lt[k]);
        let (y0, y1) = (ly[k - 1].as_array()[idx], ly[k].as_array()[idx]);
        if (t1 - t0).abs() < 1e-12 {
            y1
        } else {
            y0 + (y1 - y0) * (t - t0) / (t1 - t0)
        }
    };
    // The instantaneous algebraic response of the plant saturates for large
    // steps (the generator UA grows with the vapor flow and pulls the water
    // outlet back), so the tangent model's feedthrough overshoots right at
    // the jump; the gap decays with the sump dynamics. Assert a hard bound
    // everywhere and the tight bound once the jump transient has decayed.
    let mut worst_all = [0.0f64; 3];
    let mut worst_late = [0.0f64; 3];
    for (k, &t) in nl.times.iter().enumerate() {
        for (slot, idx) in [(0usize, 0usize), (1, 1), (2, 2)] {
            let diff = (nl.outputs[k].as_array()[idx] - interp(t, idx)).abs();
            worst_all[slot] = worst_all[slot].max(diff);
            if t >= 60.0 + 120.0 {
                worst_late[slot] = worst_late[slot].max(diff);
            }
        }
    }
    eprintln!(
        "max |nonlinear − linear| (all / after 2 min): Twg {:.3}/{:.3} K, Twac {:.3}/{:.3} K, \
         Twe {:.3}/{:.3} K",
        worst_all[0], worst_late[0], worst_all[1], worst_late[1], worst_all[2], worst_late[2]
    );
    for (slot, name) in ["t_w_g_out", "t_w_ac_out", "t_w_e_out"].iter().enumerate() {
        assert!(
            worst_all[slot] < 0.8,
            "{name}: linear model deviates {:.3} K",
            worst_all[slot]
        );
        assert!(
            worst_late[slot] < 0.5,
            "{name}: linear model deviates {:.3} K after the jump transient",
            worst_late[slot]
        );
    }
    // The two models agree on the final steady offset to well under the
    // tight bound.
    let last = nl.times.len() - 1;
    assert!((nl.outputs[last].t_w_g_out - interp(nl.times[last], 0)).abs() < 0.1);
}
