//! Time integration of the DAE: implicit (backward) Euler with a coupled
//! Newton solve per step, input schedules with breakpoints, and settling to
//! steady state.
//!
//! Backward Euler is used deliberately: it is L-stable, so the stiff
//! algebraic coupling and the fast gas-room/SHX modes stay damped at the
//! 1 s step the scenarios use, and every accepted step is a consistent
//! (x, z) pair.

use crate::error::{AhpdError, Result};
use crate::model::{
    f_scales, g_scales, x_scales, AlgebraicVector, InputVector, Model, OutputVector, StateVector,
    N_STATES,
};
use crate::props::RangeMode;
use crate::solver::{newton_solve, solve_steady_state, SolveReport, SolverOptions, SteadyPoint};

/// Piecewise-constant-derivative input schedule: linear interpolation
/// between breakpoints, constant extrapolation beyond the ends.
#[derive(Debug, Clone)]
pub struct InputSchedule {
    /// Strictly increasing breakpoint times, s.
    times: Vec<f64>,
    values: Vec<InputVector>,
}

impl InputSchedule {
    pub fn constant(u: InputVector) -> Self {
        InputSchedule {
            times: vec![0.0],
            values: vec![u],
        }
    }

    pub fn new(times: Vec<f64>, values: Vec<InputVector>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(AhpdError::InvalidInput(
                "schedule needs equally many times and values, at least one".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AhpdError::InvalidInput(
                "schedule breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(InputSchedule { times, values })
    }

    /// A step change: `u0` before `t_step`, `u1` from `t_step` on.
    pub fn step(u0: InputVector, u1: InputVector, t_step: f64) -> Self {
        InputSchedule {
            times: vec![0.0, t_step],
            values: vec![u0, u1],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.times
    }

    /// Input at time `t`. Breakpoints are treated as left-continuous jumps:
    /// at exactly a breakpoint the new value applies.
    pub fn at(&self, t: f64) -> InputVector {
        match self.times.iter().rposition(|&bt| bt <= t) {
            Some(i) => self.values[i],
            None => self.values[0],
        }
    }
}

/// Simulation result: consistent states, algebraic values and outputs at
/// each stored sample time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub algebraics: Vec<AlgebraicVector>,
    pub inputs: Vec<InputVector>,
    pub outputs: Vec<OutputVector>,
    /// True if any property evaluation clamped during the run.
    pub clamped: bool,
}

impl Trajectory {
    pub fn output_channel(&self, name: &str) -> Option<Vec<f64>> {
        let idx = OutputVector::NAMES.iter().position(|n| *n == name)?;
        Some(self.outputs.iter().map(|y| y.as_array()[idx]).collect())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct IntegrationOptions {
    /// Integration step, s.
    pub dt: f64,
    /// Store every n-th step (1 = every step).
    pub output_every: usize,
    pub solver: SolverOptions,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            dt: 1.0,
            output_every: 5,
            solver: SolverOptions::default(),
        }
    }
}

/// One backward Euler step: solves
/// `x₁ − x₀ − dt·f(x₁, z₁, u₁) = 0, g(x₁, z₁, u₁) = 0` for (x₁, z₁),
/// warm-started at the previous values.
pub fn backward_euler_step(
    model: &Model,
    x0: &StateVector,
    z0: &AlgebraicVector,
    u1: &InputVector,
    dt: f64,
    opts: &SolverOptions,
) -> Result<(StateVector, AlgebraicVector, SolveReport)> {
    let variant = model.variant;
    let x0a = x0.as_array();

    let mut vs = x_scales().to_vec();
    vs.extend(AlgebraicVector::scales(variant));
    // State rows are divided by dt so their scale matches f (balance form);
    // this keeps the convergence test meaningful for any dt.
    let mut rs: Vec<f64> = f_scales().to_vec();
    rs.extend(g_scales(variant));

    let mut v0 = x0a.to_vec();
    v0.extend(z0.pack(variant));

    let (v, report) = newton_solve(
        |v| {
            let x = StateVector::from_array(v[..N_STATES].try_into().unwrap());
            let z = AlgebraicVector::unpack(variant, &v[N_STATES..])?;
            let r = model.residuals(&x, &z, u1, RangeMode::Clamp)?;
            let mut out = Vec::with_capacity(v.len());
            for i in 0..N_STATES {
                out.push((v[i] - x0a[i]) / dt - r.f[i]);
            }
            out.extend(r.g());
            Ok(out)
        },
        &v0,
        &vs,
        &rs,
        opts,
    )?;
    let x1 = StateVector::from_array(v[..N_STATES].try_into().unwrap());
    let z1 = AlgebraicVector::unpack(variant, &v[N_STATES..])?;
    Ok((x1, z1, report))
}

/// Integrates from a consistent initial point over `[t0, t_end]` under the
/// given input schedule. Schedule breakpoints are forced onto the time grid
/// so steps never straddle an input jump.
pub fn integrate(
    model: &Model,
    x0: &StateVector,
    z0: &AlgebraicVector,
    schedule: &InputSchedule,
    t0: f64,
    t_end: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(t_end > t0) {
        return Err(AhpdError::InvalidInput(
            "integration needs dt > 0 and t_end > t0".into(),
        ));
    }

    // Time grid: multiples of dt plus every breakpoint in range.
    let mut grid: Vec<f64> = Vec::new();
    let n_steps = ((t_end - t0) / opts.dt).ceil() as usize;
    for k in 0..=n_steps {
        grid.push((t0 + k as f64 * opts.dt).min(t_end));
    }
    for &b in schedule.breakpoints() {
        if b > t0 && b < t_end {
            grid.push(b);
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let mut x = *x0;
    let mut z = *z0;
    let mut clamped = false;

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        algebraics: Vec::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        clamped: false,
    };
    let u_init = schedule.at(t0);
    traj.times.push(t0);
    traj.states.push(x);
    traj.algebraics.push(z);
    traj.inputs.push(u_init);
    traj.outputs.push(model.output_map(&x, &z, &u_init));

    let mut since_output = 0usize;
    for w in grid.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let dt = tb - ta;
        if dt < 1e-9 {
            continue;
        }
        let u = schedule.at(tb);
        let (x1, z1, rep) = backward_euler_step(model, &x, &z, &u, dt, &opts.solver)?;
        x = x1;
        z = z1;
        clamped |= rep.clamped;
        since_output += 1;
        let is_breakpoint = schedule.breakpoints().iter().any(|&b| (b - tb).abs() < 1e-9);
        if since_output >= opts.output_every || is_breakpoint || (tb - t_end).abs() < 1e-9 {
            traj.times.push(tb);
            traj.states.push(x);
            traj.algebraics.push(z);
            traj.inputs.push(u);
            traj.outputs.push(model.output_map(&x, &z, &u));
            since_output = 0;
        }
    }
    traj.clamped = clamped;
    Ok(traj)
}

/// Runs the transient model under constant inputs until the state stops
/// moving, as a dynamic cross-check of the steady-state solver.
///
/// Convergence: scaled state increment per step below `tol_rate` for ten
/// consecutive steps.
pub fn settle(
    model: &Model,
    x0: &StateVector,
    z0: &AlgebraicVector,
    u: &InputVector,
    opts: &IntegrationOptions,
) -> Result<SteadyPoint> {
    let tol_rate = 1e-10;
    let max_time = 200_000.0;
    let xs = x_scales();
    let mut x = *x0;
    let mut z = *z0;
    let mut quiet = 0usize;
    let mut t = 0.0;
    // Grow the step once the fast transients are over; backward Euler
    // remains stable at any dt and the fixed point is dt-independent.
    let mut dt = opts.dt.max(1.0);
    while t < max_time {
        let (x1, z1, rep) = backward_euler_step(model, &x, &z, u, dt, &opts.solver)?;
        let mut rate = 0.0f64;
        for i in 0..N_STATES {
            rate = rate.max(((x1.as_array()[i] - x.as_array()[i]) / xs[i] / dt).abs());
        }
        x = x1;
        z = z1;
        t += dt;
        if rate < tol_rate {
            quiet += 1;
            if quiet >= 10 {
                let y = model.output_map(&x, &z, u);
                return Ok(SteadyPoint {
                    u: *u,
                    x,
                    z,
                    y,
                    report: rep,
                });
            }
        } else {
            quiet = 0;
        }
        if t > 2000.0 {
            dt = (dt * 1.2).min(200.0);
        }
    }
    Err(AhpdError::NoConvergence {
        iterations: (max_time / opts.dt) as usize,
        residual: f64::NAN,
    })
}

/// Convenience wrapper: solve a steady state at `u0`, then simulate a step
/// in one input channel at `t_step`.
pub fn step_response(
    model: &Model,
    u0: &InputVector,
    channel: &str,
    new_value: f64,
    t_step: f64,
    t_end: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let sp = solve_steady_state(model, u0, None, &opts.solver)?;
    let mut u1 = *u0;
    u1.set(channel, new_value)?;
    let schedule = InputSchedule::step(*u0, u1, t_step);
    integrate(model, &sp.x, &sp.z, &schedule, 0.0, t_end, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rop() -> InputVector {
        InputVector::reference_operating_point()
    }

    #[test]
    fn schedule_lookup() {
        let mut u1 = rop();
        u1.t_w_g_in = 363.15;
        let s = InputSchedule::step(rop(), u1, 100.0);
        assert_eq!(s.at(0.0).t_w_g_in, 353.15);
        assert_eq!(s.at(99.999).t_w_g_in, 353.15);
        assert_eq!(s.at(100.0).t_w_g_in, 363.15);
        assert_eq!(s.at(1e9).t_w_g_in, 363.15);
        // Before the first breakpoint the first value applies.
        assert_eq!(s.at(-5.0).t_w_g_in, 353.15);
    }

    #[test]
    fn schedule_validation() {
        assert!(InputSchedule::new(vec![], vec![]).is_err());
        assert!(InputSchedule::new(vec![0.0, 0.0], vec![rop(), rop()]).is_err());
        assert!(InputSchedule::new(vec![0.0, 1.0], vec![rop()]).is_err());
    }
}
