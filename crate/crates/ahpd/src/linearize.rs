//! Linearization of the DAE at a steady operating point and simulation of
//! the resulting linear state-space model.
//!
//! At a solved equilibrium `(x*, z*, u*)` with `f = 0, g = 0` and index-1
//! structure (invertible ∂g/∂z), the algebraic unknowns are eliminated by
//! the Schur complement:
//!
//! ```text
//! A = f_x − f_z·g_z⁻¹·g_x      B = f_u − f_z·g_z⁻¹·g_u
//! C = y_x − y_z·g_z⁻¹·g_x      D = y_u − y_z·g_z⁻¹·g_u
//! ```
//!
//! yielding an ODE model `δẋ = A δx + B δu, δy = C δx + D δu` in deviation
//! variables around the anchor.

use nalgebra::{DMatrix, DVector};

use crate::error::{AhpdError, Result};
use crate::model::{
    g_scales, AlgebraicVector, InputVector, Model, OutputVector, StateVector, N_INPUTS, N_OUTPUTS,
    N_STATES,
};
use crate::props::RangeMode;
use crate::solver::SteadyPoint;
use crate::transient::InputSchedule;

/// All first-order sensitivities of (f, g, y) at a point, in SI units.
#[derive(Debug, Clone)]
pub struct Jacobians {
    pub f_x: DMatrix<f64>,
    pub f_z: DMatrix<f64>,
    pub f_u: DMatrix<f64>,
    pub g_x: DMatrix<f64>,
    pub g_z: DMatrix<f64>,
    pub g_u: DMatrix<f64>,
    pub y_x: DMatrix<f64>,
    pub y_z: DMatrix<f64>,
    pub y_u: DMatrix<f64>,
}

/// Continuous-time linear model anchored at a steady point.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Anchor equilibrium the deviation variables refer to.
    pub x0: StateVector,
    pub u0: InputVector,
    pub y0: OutputVector,
}

fn fd_step(v: f64, scale: f64) -> f64 {
    (1e-6 * v.abs()).max(1e-7 * scale)
}

/// Central finite-difference Jacobians of the DAE at a (steady) point.
pub fn jacobians(
    model: &Model,
    x: &StateVector,
    z: &AlgebraicVector,
    u: &InputVector,
) -> Result<Jacobians> {
    let variant = model.variant;
    let ng = model.g_dim();
    let zs = AlgebraicVector::scales(variant);
    let xs = crate::model::x_scales();

    let eval = |x: &StateVector, z: &AlgebraicVector, u: &InputVector| -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let r = model.residuals(x, z, u, RangeMode::Clamp)?;
        let y = model.output_map(x, z, u);
        Ok((
            DVector::from_row_slice(&r.f),
            DVector::from_vec(r.g()),
            DVector::from_row_slice(&y.as_array()),
        ))
    };

    let mut f_x = DMatrix::zeros(N_STATES, N_STATES);
    let mut g_x = DMatrix::zeros(ng, N_STATES);
    let mut y_x = DMatrix::zeros(N_OUTPUTS, N_STATES);
    for j in 0..N_STATES {
        let h = fd_step(x.as_array()[j], xs[j]);
        let mut xa = x.as_array();
        xa[j] += h;
        let xp = StateVector::from_array(xa);
        xa[j] -= 2.0 * h;
        let xm = StateVector::from_array(xa);
        let (fp, gp, yp) = eval(&xp, z, u)?;
        let (fm, gm, ym) = eval(&xm, z, u)?;
        f_x.set_column(j, &((fp - fm) / (2.0 * h)));
        g_x.set_column(j, &((gp - gm) / (2.0 * h)));
        y_x.set_column(j, &((yp - ym) / (2.0 * h)));
    }

    let mut f_z = DMatrix::zeros(N_STATES, ng);
    let mut g_z = DMatrix::zeros(ng, ng);
    let mut y_z = DMatrix::zeros(N_OUTPUTS, ng);
    let zp0 = z.pack(variant);
    for j in 0..ng {
        let h = fd_step(zp0[j], zs[j]);
        let mut za = zp0.clone();
        za[j] += h;
        let zp = AlgebraicVector::unpack(variant, &za)?;
        za[j] -= 2.0 * h;
        let zm = AlgebraicVector::unpack(variant, &za)?;
        let (fp, gp, yp) = eval(x, &zp, u)?;
        let (fm, gm, ym) = eval(x, &zm, u)?;
        f_z.set_column(j, &((fp - fm) / (2.0 * h)));
        g_z.set_column(j, &((gp - gm) / (2.0 * h)));
        y_z.set_column(j, &((yp - ym) / (2.0 * h)));
    }

    let us = [1.0, 1e-3, 1.0, 1e-3, 1.0, 1e-3, 1e-6];
    let mut f_u = DMatrix::zeros(N_STATES, N_INPUTS);
    let mut g_u = DMatrix::zeros(ng, N_INPUTS);
    let mut y_u = DMatrix::zeros(N_OUTPUTS, N_INPUTS);
    for j in 0..N_INPUTS {
        let h = fd_step(u.as_array()[j], us[j]);
        let mut ua = u.as_array();
        ua[j] += h;
        let up = InputVector::from_array(ua);
        ua[j] -= 2.0 * h;
        let um = InputVector::from_array(ua);
        let (fp, gp, yp) = eval(x, z, &up)?;
        let (fm, gm, ym) = eval(x, z, &um)?;
        f_u.set_column(j, &((fp - fm) / (2.0 * h)));
        g_u.set_column(j, &((gp - gm) / (2.0 * h)));
        y_u.set_column(j, &((yp - ym) / (2.0 * h)));
    }

    Ok(Jacobians {
        f_x,
        f_z,
        f_u,
        g_x,
        g_z,
        g_u,
        y_x,
        y_z,
        y_u,
    })
}

/// Eliminates the algebraic unknowns via the Schur complement. Fails with
/// [`AhpdError::NotIndexOne`] if ∂g/∂z is singular.
pub fn reduce(j: &Jacobians, variant: crate::model::Variant) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let ng = j.g_z.nrows();
    // Row/column scale g_z for the factorization; the scaling cancels in
    // the products below.
    let rs = g_scales(variant);
    let zs = AlgebraicVector::scales(variant);
    let mut gz_s = j.g_z.clone();
    for i in 0..ng {
        for k in 0..ng {
            gz_s[(i, k)] = j.g_z[(i, k)] / rs[i] * zs[k];
        }
    }
    let lu = gz_s.lu();
    if !lu.is_invertible() {
        return Err(AhpdError::NotIndexOne);
    }
    let solve_scaled = |rhs: &DMatrix<f64>| -> DMatrix<f64> {
        // Solve g_z · X = rhs  ⇒  (Dg⁻¹ g_z Dz)(Dz⁻¹ X) = Dg⁻¹ rhs.
        let mut r = rhs.clone();
        for i in 0..ng {
            for c in 0..r.ncols() {
                r[(i, c)] /= rs[i];
            }
        }
        let mut x = lu.solve(&r).expect("checked invertible");
        for i in 0..ng {
            for c in 0..x.ncols() {
                x[(i, c)] *= zs[i];
            }
        }
        x
    };
    let gzi_gx = solve_scaled(&j.g_x);
    let gzi_gu = solve_scaled(&j.g_u);
    let a = &j.f_x - &j.f_z * &gzi_gx;
    let b = &j.f_u - &j.f_z * &gzi_gu;
    let c = &j.y_x - &j.y_z * &gzi_gx;
    let d = &j.y_u - &j.y_z * &gzi_gu;
    Ok((a, b, c, d))
}

/// Linearizes the model at a solved steady point.
pub fn linearize(model: &Model, sp: &SteadyPoint) -> Result<StateSpace> {
    let j = jacobians(model, &sp.x, &sp.z, &sp.u)?;
    let (a, b, c, d) = reduce(&j, model.variant)?;
    Ok(StateSpace {
        a,
        b,
        c,
        d,
        x0: sp.x,
        u0: sp.u,
        y0: sp.y,
    })
}

impl StateSpace {
    /// Steady-state gain matrix −C·A⁻¹·B + D.
    pub fn steady_gain(&self) -> Result<DMatrix<f64>> {
        let lu = self.a.clone().lu();
        let ainv_b = lu.solve(&self.b).ok_or(AhpdError::SingularJacobian { rcond: 0.0 })?;
        Ok(&self.d - &self.c * ainv_b)
    }

    /// Eigenvalues of A as (re, im) pairs.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|c| (c.re, c.im))
            .collect()
    }

    /// All eigenvalues strictly in the left half plane (up to `tol`)?
    pub fn is_hurwitz(&self, tol: f64) -> bool {
        self.eigenvalues().iter().all(|(re, _)| *re < tol)
    }

    /// Exact zero-order-hold discretization via the augmented matrix
    /// exponential exp([[A, B], [0, 0]]·dt).
    pub fn discretize(&self, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let mut aug = DMatrix::zeros(n + m, n + m);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * dt));
        aug.view_mut((0, n), (n, m)).copy_from(&(&self.b * dt));
        let e = aug.exp();
        let ad = e.view((0, 0), (n, n)).into_owned();
        let bd = e.view((0, n), (n, m)).into_owned();
        (ad, bd)
    }

    /// Simulates the linear model under an input schedule with zero-order
    /// hold, starting from the anchor equilibrium. Returns sample times and
    /// absolute (not deviation) outputs.
    pub fn simulate(
        &self,
        schedule: &InputSchedule,
        t_end: f64,
        dt: f64,
    ) -> Result<(Vec<f64>, Vec<OutputVector>)> {
        if !(dt > 0.0) || !(t_end > 0.0) {
            return Err(AhpdError::InvalidInput(
                "linear simulation needs dt > 0 and t_end > 0".into(),
            ));
        }
        // Grid with schedule breakpoints forced in, mirroring the nonlinear
        // integrator.
        let mut grid: Vec<f64> = Vec::new();
        let n_steps = (t_end / dt).ceil() as usize;
        for k in 0..=n_steps {
            grid.push((k as f64 * dt).min(t_end));
        }
        for &b in schedule.breakpoints() {
            if b > 0.0 && b < t_end {
                grid.push(b);
            }
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

        let u0 = DVector::from_row_slice(&self.u0.as_array());
        let y0 = DVector::from_row_slice(&self.y0.as_array());
        let mut dx = DVector::zeros(self.a.nrows());
        let mut times = Vec::with_capacity(grid.len());
        let mut outputs = Vec::with_capacity(grid.len());

        let push = |times: &mut Vec<f64>, outputs: &mut Vec<OutputVector>, t: f64, dx: &DVector<f64>, du: &DVector<f64>, ss: &StateSpace| {
            let dy = &ss.c * dx + &ss.d * du;
            let y = &y0 + dy;
            times.push(t);
            let mut arr = [0.0; N_OUTPUTS];
            for i in 0..N_OUTPUTS {
                arr[i] = y[i];
            }
            outputs.push(OutputVector::from_array(arr));
        };

        let du_at = |t: f64| -> DVector<f64> {
            DVector::from_row_slice(&schedule.at(t).as_array()) - &u0
        };

        push(&mut times, &mut outputs, grid[0], &dx, &du_at(grid[0]), self);
        let mut cache: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
        for w in grid.windows(2) {
            let h = w[1] - w[0];
            if h < 1e-12 {
                continue;
            }
            let needs = match &cache {
                Some((hc, _, _)) => (hc - h).abs() > 1e-12,
                None => true,
            };
            if needs {
                let (ad, bd) = self.discretize(h);
                cache = Some((h, ad, bd));
            }
            let (_, ad, bd) = cache.as_ref().unwrap();
            // Hold the input at the step's right endpoint, matching the
            // implicit integrator's convention, so a jump at a breakpoint
            // acts over the step that ends there in both models.
            let du = du_at(w[1]);
            dx = ad * &dx + bd * &du;
            push(&mut times, &mut outputs, w[1], &dx, &du_at(w[1]), self);
        }
        Ok((times, outputs))
    }

    /// Serializes the model to a delimited text block that round-trips
    /// exactly (17 significant digits per value).
    pub fn to_delimited(&self) -> String {
        let mut s = String::new();
        let write_mat = |s: &mut String, name: &str, m: &DMatrix<f64>| {
            s.push_str(&format!("# {name} {}x{}\n", m.nrows(), m.ncols()));
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
                s.push_str(&row.join(","));
                s.push('\n');
            }
        };
        write_mat(&mut s, "A", &self.a);
        write_mat(&mut s, "B", &self.b);
        write_mat(&mut s, "C", &self.c);
        write_mat(&mut s, "D", &self.d);
        let write_vec = |s: &mut String, name: &str, v: &[f64]| {
            s.push_str(&format!("# {name} 1x{}\n", v.len()));
            let row: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        };
        write_vec(&mut s, "x0", &self.x0.as_array());
        write_vec(&mut s, "u0", &self.u0.as_array());
        write_vec(&mut s, "y0", &self.y0.as_array());
        s
    }

    /// Parses the output of [`Self::to_delimited`].
    pub fn from_delimited(text: &str) -> Result<Self> {
        let mut blocks: std::collections::HashMap<String, Vec<Vec<f64>>> = Default::default();
        let mut current: Option<(String, usize, usize)> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(AhpdError::Schema {
                        path: "<state-space text>".into(),
                        reason: format!("malformed header '{line}'"),
                    });
                }
                let dims: Vec<&str> = parts[1].split('x').collect();
                let (r, c) = (
                    dims[0].parse::<usize>().map_err(|_| AhpdError::Schema {
                        path: "<state-space text>".into(),
                        reason: format!("bad dimensions in '{line}'"),
                    })?,
                    dims[1].parse::<usize>().map_err(|_| AhpdError::Schema {
                        path: "<state-space text>".into(),
                        reason: format!("bad dimensions in '{line}'"),
                    })?,
                );
                blocks.insert(parts[0].to_string(), Vec::new());
                current = Some((parts[0].to_string(), r, c));
            } else {
                let (name, _, c) = current.clone().ok_or_else(|| AhpdError::Schema {
                    path: "<state-space text>".into(),
                    reason: "data before first header".into(),
                })?;
                let row: Vec<f64> = line
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| AhpdError::Schema {
                        path: "<state-space text>".into(),
                        reason: format!("bad number: {e}"),
                    })?;
                if row.len() != c {
                    return Err(AhpdError::Schema {
                        path: "<state-space text>".into(),
                        reason: format!("row width {} != {c} in block {name}", row.len()),
                    });
                }
                blocks.get_mut(&name).unwrap().push(row);
            }
        }
        let get_mat = |name: &str| -> Result<DMatrix<f64>> {
            let rows = blocks.get(name).ok_or_else(|| AhpdError::Schema {
                path: "<state-space text>".into(),
                reason: format!("missing block {name}"),
            })?;
            let nr = rows.len();
            let nc = rows.first().map(|r| r.len()).unwrap_or(0);
            Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
        };
        let get_vec = |name: &str, n: usize| -> Result<Vec<f64>> {
            let m = get_mat(name)?;
            if m.nrows() != 1 || m.ncols() != n {
                return Err(AhpdError::Schema {
                    path: "<state-space text>".into(),
                    reason: format!("block {name} must be 1x{n}"),
                });
            }
            Ok(m.row(0).iter().copied().collect())
        };
        Ok(StateSpace {
            a: get_mat("A")?,
            b: get_mat("B")?,
            c: get_mat("C")?,
            d: get_mat("D")?,
            x0: StateVector::from_array(get_vec("x0", N_STATES)?.try_into().unwrap()),
            u0: InputVector::from_array(get_vec("u0", N_INPUTS)?.try_into().unwrap()),
            y0: OutputVector::from_array(get_vec("y0", N_OUTPUTS)?.try_into().unwrap()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn toy_ss() -> StateSpace {
        StateSpace {
            a: dmatrix![-0.5, 0.1; 0.0, -0.2],
            b: dmatrix![1.0, 0.0; 0.0, 2.0],
            c: dmatrix![1.0, 0.0],
            d: dmatrix![0.0, 0.5],
            x0: StateVector::from_array([0.0; N_STATES]),
            u0: InputVector::from_array([0.0; N_INPUTS]),
            y0: OutputVector::from_array([0.0; N_OUTPUTS]),
        }
    }

    #[test]
    fn steady_gain_of_diagonal_system() {
        let ss = toy_ss();
        // −C A⁻¹ B + D for this triangular A.
        let g = ss.steady_gain().unwrap();
        assert_relative_eq!(g[(0, 0)], 2.0, max_relative = 1e-12);
        assert_relative_eq!(g[(0, 1)], 0.1 / 0.5 * 2.0 / 0.2 + 0.5, max_relative = 1e-12);
    }

    #[test]
    fn discretization_matches_scalar_exponential() {
        let ss = StateSpace {
            a: dmatrix![-0.25],
            b: dmatrix![3.0],
            c: dmatrix![1.0],
            d: dmatrix![0.0],
            x0: StateVector::from_array([0.0; N_STATES]),
            u0: InputVector::from_array([0.0; N_INPUTS]),
            y0: OutputVector::from_array([0.0; N_OUTPUTS]),
        };
        let dt = 2.0;
        let (ad, bd) = ss.discretize(dt);
        assert_relative_eq!(ad[(0, 0)], (-0.25f64 * dt).exp(), max_relative = 1e-12);
        // ∫₀^dt e^{a s} ds · b = (e^{a dt} − 1)/a · b.
        let expect = ((-0.25f64 * dt).exp() - 1.0) / (-0.25) * 3.0;
        assert_relative_eq!(bd[(0, 0)], expect, max_relative = 1e-12);
    }

    #[test]
    fn hurwitz_check() {
        assert!(toy_ss().is_hurwitz(0.0));
        let mut ss = toy_ss();
        ss.a[(1, 1)] = 0.2;
        assert!(!ss.is_hurwitz(0.0));
    }

    #[test]
    fn delimited_round_trip_is_exact() {
        let mut ss = toy_ss();
        ss.a[(0, 1)] = std::f64::consts::PI * 1e-7;
        ss.b[(1, 1)] = -1.0 / 3.0;
        let text = ss.to_delimited();
        let back = StateSpace::from_delimited(&text).unwrap();
        assert_eq!(ss.a, back.a);
        assert_eq!(ss.b, back.b);
        assert_eq!(ss.c, back.c);
        assert_eq!(ss.d, back.d);
        assert_eq!(ss.x0.as_array(), back.x0.as_array());
        assert_eq!(ss.u0.as_array(), back.u0.as_array());
        assert_eq!(ss.y0.as_array(), back.y0.as_array());
    }
}
