//! Thermophysical property functions for LiBr/H₂O solution and water.
//!
//! All functions are simple polynomial / log-linear fits over narrow validity
//! windows, calibrated in strict SI units (K, Pa, J/kg, kg/m³). The saturation
//! relations carry two parameter rows each: one for the high-pressure side
//! (generator / condenser) and one for the low-pressure side
//! (absorber / evaporator).
//!
//! The embedded default coefficients went through a validation pass against
//! steam-table and published LiBr reference points. Three entries of the raw
//! coefficient table fail their reference anchors by an order of magnitude or
//! a sign and are corrected here; [`validate_params`] reproduces the
//! corrections from the raw table and reports them, see [`ProvenanceReport`].
//!
//! ```
//! use ahpd::props::{PropCtx, PropertyParams, RangeMode, PressureRange};
//!
//! let params = PropertyParams::default();
//! let pr = PropCtx::new(&params, RangeMode::Strict);
//! let h = pr.h_liquid_water(283.15).unwrap();
//! assert!((h - 42.1e3).abs() / 42.1e3 < 0.01);
//! let p = pr.p_sat_water(313.15, PressureRange::HighSide).unwrap();
//! assert!((p - 7384.0).abs() / 7384.0 < 0.02);
//! ```

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{AhpdError, RangeViolation, Result};

/// Selects which saturation parameter row applies.
///
/// `HighSide` is used for all generator/condenser relations, `LowSide` for
/// absorber/evaporator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PressureRange {
    HighSide,
    LowSide,
}

/// Out-of-range policy for property evaluations.
///
/// `Strict` raises a hard error; `Clamp` clamps the input coordinate to the
/// window edge and raises a flag on the evaluation context. Clamping exists
/// for Newton iterations whose intermediate iterates may briefly leave the
/// window; converged solutions are checked strictly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeMode {
    Strict,
    Clamp,
}

/// Closed validity interval for one input coordinate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Window {
    pub min: f64,
    pub max: f64,
}

impl Window {
    pub const fn new(min: f64, max: f64) -> Self {
        Window { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        // Negligible slack so round-trips through inverses that land exactly
        // on a boundary do not trip the strict check on float round-off.
        let eps = 1e-9 * self.max.abs().max(1.0);
        v >= self.min - eps && v <= self.max + eps
    }
}

/// h(T, ξ) = −A₁ − A₂ξ + A₃ξ² + A₄T − A₅ξT
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionEnthalpy {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub t: Window,
    pub xi: Window,
}

/// ln p_sat(T, ξ) = −B₁ + B₂ξ − B₃ξ² + B₄T, one row per pressure side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionSaturation {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub t: Window,
    pub xi: Window,
    pub p: Window,
}

/// ρ(T, ξ) = R₁ − R₂ξ + R₃ξ² + R₄T (R₄ carries its adopted sign).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDensity {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub t: Window,
    pub xi: Window,
}

/// hˡ(T) = −C₁ + C₂T
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiquidWaterEnthalpy {
    pub c1: f64,
    pub c2: f64,
    pub t: Window,
}

/// hᵛ(T) = D₁ + D₂T
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaporWaterEnthalpy {
    pub d1: f64,
    pub d2: f64,
    /// Hard temperature bound. The fit is anchored to near-saturated vapor;
    /// a saturation-relative bound is not checkable from T alone, so a wide
    /// fixed window is enforced instead.
    pub t: Window,
}

/// ln p_sat(T) = −E₁ + E₂T, one row per pressure side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaterSaturation {
    pub e1: f64,
    pub e2: f64,
    pub t: Window,
}

/// ρˡ(T) = F₁ + F₂T − F₃T²
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiquidWaterDensity {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub t: Window,
}

/// Full coefficient set for all property functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyParams {
    pub solution_enthalpy: SolutionEnthalpy,
    pub solution_saturation_high: SolutionSaturation,
    pub solution_saturation_low: SolutionSaturation,
    pub solution_density: SolutionDensity,
    pub liquid_water_enthalpy: LiquidWaterEnthalpy,
    pub vapor_water_enthalpy: VaporWaterEnthalpy,
    pub water_saturation_high: WaterSaturation,
    pub water_saturation_low: WaterSaturation,
    pub liquid_water_density: LiquidWaterDensity,
}

impl PropertyParams {
    /// Coefficients exactly as printed in the source coefficient table,
    /// before the validation pass. Three entries fail their reference
    /// anchors; see [`validate_params`].
    pub fn raw() -> Self {
        PropertyParams {
            solution_enthalpy: SolutionEnthalpy {
                a1: 6.892e5,
                a2: 7.001e5,
                a3: 1.738e6,
                a4: 3.617e3,
                a5: 2.827e3,
                t: Window::new(293.15, 363.15),
                xi: Window::new(0.45, 0.6),
            },
            solution_saturation_high: SolutionSaturation {
                b1: 6.804,
                b2: 7.405,
                b3: 1.483e1,
                b4: 4.647e-2,
                t: Window::new(323.15, 363.15),
                xi: Window::new(0.45, 0.6),
                p: Window::new(5000.0, 14000.0),
            },
            solution_saturation_low: SolutionSaturation {
                b1: 1.226e1,
                b2: 1.042e1,
                b3: 1.944e1,
                b4: 6.237e-2,
                t: Window::new(293.15, 328.15),
                xi: Window::new(0.45, 0.6),
                p: Window::new(200.0, 2200.0),
            },
            solution_density: SolutionDensity {
                r1: 1.349e3,
                r2: 2.274e2,
                r3: 1.856e3,
                r4: 5.569e-1,
                t: Window::new(293.15, 363.15),
                xi: Window::new(0.45, 0.6),
            },
            liquid_water_enthalpy: LiquidWaterEnthalpy {
                c1: 1.143e6,
                c2: 4.186e3,
                t: Window::new(278.15, 368.15),
            },
            vapor_water_enthalpy: VaporWaterEnthalpy {
                d1: 2.009e6,
                d2: 1.803e3,
                t: Window::new(277.15, 368.15),
            },
            water_saturation_high: WaterSaturation {
                e1: 7.591,
                e2: 5.266e-2,
                t: Window::new(303.15, 323.15),
            },
            water_saturation_low: WaterSaturation {
                e1: 1.158e1,
                e2: 6.599e-1,
                t: Window::new(277.15, 293.15),
            },
            liquid_water_density: LiquidWaterDensity {
                f1: 7.397e-1,
                f2: 1.984e-3,
                f3: 3.760e-6,
                t: Window::new(278.15, 368.15),
            },
        }
    }

    fn solution_saturation(&self, range: PressureRange) -> &SolutionSaturation {
        match range {
            PressureRange::HighSide => &self.solution_saturation_high,
            PressureRange::LowSide => &self.solution_saturation_low,
        }
    }

    fn water_saturation(&self, range: PressureRange) -> &WaterSaturation {
        match range {
            PressureRange::HighSide => &self.water_saturation_high,
            PressureRange::LowSide => &self.water_saturation_low,
        }
    }
}

impl Default for PropertyParams {
    /// Validated defaults: the raw table after the validation pass.
    fn default() -> Self {
        validate_params(&Self::raw()).0
    }
}

/// One coefficient correction adopted by the validation pass.
#[derive(Debug, Clone, Serialize)]
pub struct Correction {
    pub function: &'static str,
    pub coefficient: &'static str,
    pub raw: f64,
    pub adopted: f64,
    pub anchor: String,
}

/// One reference-point check performed by the validation pass.
#[derive(Debug, Clone, Serialize)]
pub struct AnchorCheck {
    pub what: String,
    pub computed: f64,
    pub reference: f64,
    pub rel_err: f64,
    pub pass: bool,
}

/// Result of the parameter validation pass: which corrections were adopted
/// and how every function compares to its reference anchor afterwards.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ProvenanceReport {
    pub corrections: Vec<Correction>,
    pub anchors: Vec<AnchorCheck>,
}

impl ProvenanceReport {
    pub fn render(&self) -> String {
        let mut s = String::from("parameter validation report\n===========================\n");
        if self.corrections.is_empty() {
            s.push_str("no coefficient corrections adopted\n");
        } else {
            s.push_str("adopted coefficient corrections:\n");
            for c in &self.corrections {
                s.push_str(&format!(
                    "  {} / {}: {:e} -> {:e}  ({})\n",
                    c.function, c.coefficient, c.raw, c.adopted, c.anchor
                ));
            }
        }
        s.push_str("reference anchors:\n");
        for a in &self.anchors {
            s.push_str(&format!(
                "  [{}] {}: computed {:.6e} vs reference {:.6e} ({:+.2}%)\n",
                if a.pass { "ok" } else { "FAIL" },
                a.what,
                a.computed,
                a.reference,
                a.rel_err * 100.0
            ));
        }
        s
    }
}

/// Candidate decimal-exponent / sign corrections tried for a suspect
/// coefficient. Returns the first candidate (in order: as-is, scaled,
/// sign-flipped) that satisfies `ok`.
fn search_correction(raw: f64, ok: impl Fn(f64) -> bool) -> Option<f64> {
    if ok(raw) {
        return Some(raw);
    }
    for k in [-1i32, -2, -3, 1, 2, 3] {
        let cand = raw * 10f64.powi(k);
        if ok(cand) {
            return Some(cand);
        }
    }
    if ok(-raw) {
        return Some(-raw);
    }
    for k in [-1i32, -2, -3, 1, 2, 3] {
        let cand = -raw * 10f64.powi(k);
        if ok(cand) {
            return Some(cand);
        }
    }
    None
}

/// Validation pass over a raw coefficient set.
///
/// Each property function is evaluated at reference points from steam tables
/// and published LiBr/H₂O data. Where a coefficient fails its anchor by more
/// than the stated tolerance, the sign/decimal-exponent correction that
/// restores the anchor is adopted and recorded.
pub fn validate_params(raw: &PropertyParams) -> (PropertyParams, ProvenanceReport) {
    let mut p = raw.clone();
    let mut report = ProvenanceReport::default();

    // Water saturation: steam-table anchors at 10 °C (1228 Pa) and 40 °C (7384 Pa).
    let e1_low = raw.water_saturation_low.e1;
    let e1_high = raw.water_saturation_high.e1;
    let low_anchor = |e2: f64| {
        let ps = (-e1_low + e2 * 283.15).exp();
        (ps - 1228.0).abs() / 1228.0 < 0.05
    };
    if let Some(adopted) = search_correction(raw.water_saturation_low.e2, low_anchor) {
        if adopted != raw.water_saturation_low.e2 {
            report.corrections.push(Correction {
                function: "water_saturation (low side)",
                coefficient: "E2",
                raw: raw.water_saturation_low.e2,
                adopted,
                anchor: "steam table: p_sat(283.15 K) = 1228 Pa +/- 5%".into(),
            });
        }
        p.water_saturation_low.e2 = adopted;
    }
    let high_anchor = |e2: f64| {
        let ps = (-e1_high + e2 * 313.15).exp();
        (ps - 7384.0).abs() / 7384.0 < 0.02
    };
    if let Some(adopted) = search_correction(raw.water_saturation_high.e2, high_anchor) {
        if adopted != raw.water_saturation_high.e2 {
            report.corrections.push(Correction {
                function: "water_saturation (high side)",
                coefficient: "E2",
                raw: raw.water_saturation_high.e2,
                adopted,
                anchor: "steam table: p_sat(313.15 K) = 7384 Pa +/- 2%".into(),
            });
        }
        p.water_saturation_high.e2 = adopted;
    }

    // Solution density: reference correlation gives ~1540 kg/m³ at
    // (293.15 K, ξ=0.5) and density must fall with temperature.
    let d = &raw.solution_density;
    let rho_anchor = |r4: f64| {
        let rho = d.r1 - d.r2 * 0.5 + d.r3 * 0.25 + r4 * 293.15;
        (rho - 1540.0).abs() / 1540.0 < 0.03 && r4 < 0.0
    };
    if let Some(adopted) = search_correction(d.r4, rho_anchor) {
        if adopted != d.r4 {
            report.corrections.push(Correction {
                function: "solution_density",
                coefficient: "R4",
                raw: d.r4,
                adopted,
                anchor: "reference LiBr/H2O density ~1540 kg/m3 at (293.15 K, xi=0.5), d(rho)/dT < 0".into(),
            });
        }
        p.solution_density.r4 = adopted;
    }

    // Liquid water density: steam-table 998 kg/m³ at 20 °C. The three
    // coefficients share a common scale.
    let ld = &raw.liquid_water_density;
    let scale_anchor = |scale: f64| {
        let rho = scale * (ld.f1 + ld.f2 * 293.15 - ld.f3 * 293.15 * 293.15);
        (rho - 998.2).abs() / 998.2 < 0.01
    };
    if let Some(scale) = search_correction(1.0, scale_anchor) {
        if scale != 1.0 {
            for (name, raw_v, slot) in [
                ("F1", ld.f1, &mut p.liquid_water_density.f1),
                ("F2", ld.f2, &mut p.liquid_water_density.f2),
                ("F3", ld.f3, &mut p.liquid_water_density.f3),
            ] {
                *slot = raw_v * scale;
                report.corrections.push(Correction {
                    function: "liquid_water_density",
                    coefficient: name,
                    raw: raw_v,
                    adopted: raw_v * scale,
                    anchor: "steam table: rho(293.15 K) = 998.2 kg/m3 +/- 1%".into(),
                });
            }
        }
    }

    // Post-validation anchor checks on the adopted set.
    let ctx = PropCtx::new(&p, RangeMode::Strict);
    let mut push = |what: &str, computed: f64, reference: f64, tol: f64| {
        let rel = (computed - reference) / reference;
        report.anchors.push(AnchorCheck {
            what: what.into(),
            computed,
            reference,
            rel_err: rel,
            pass: rel.abs() < tol,
        });
    };
    push(
        "h_liquid_water(283.15 K) vs 42.1 kJ/kg",
        ctx.h_liquid_water(283.15).unwrap(),
        42.1e3,
        0.01,
    );
    push(
        "h_vapor_water(283.15 K) vs 2519 kJ/kg",
        ctx.h_vapor_water(283.15).unwrap(),
        2519.0e3,
        0.01,
    );
    push(
        "p_sat_water(313.15 K, high) vs 7384 Pa",
        ctx.p_sat_water(313.15, PressureRange::HighSide).unwrap(),
        7384.0,
        0.02,
    );
    push(
        "p_sat_water(283.15 K, low) vs 1228 Pa",
        ctx.p_sat_water(283.15, PressureRange::LowSide).unwrap(),
        1228.0,
        0.05,
    );
    push(
        "rho_liquid_water(293.15 K) vs 998.2 kg/m3",
        ctx.rho_liquid_water(293.15).unwrap(),
        998.2,
        0.01,
    );
    push(
        "rho_solution(293.15 K, 0.5) vs 1540 kg/m3",
        ctx.rho_solution(293.15, 0.5).unwrap(),
        1540.0,
        0.03,
    );

    (p, report)
}

/// Evaluation context: a parameter set plus an out-of-range policy.
///
/// All methods are pure in the parameters; the context only tracks whether
/// any clamped evaluation happened, so a solver can surface the warning.
pub struct PropCtx<'a> {
    params: &'a PropertyParams,
    mode: RangeMode,
    clamped: Cell<bool>,
}

impl<'a> PropCtx<'a> {
    pub fn new(params: &'a PropertyParams, mode: RangeMode) -> Self {
        PropCtx {
            params,
            mode,
            clamped: Cell::new(false),
        }
    }

    /// True if any evaluation since construction clamped an input.
    pub fn any_clamped(&self) -> bool {
        self.clamped.get()
    }

    pub fn params(&self) -> &PropertyParams {
        self.params
    }

    fn coord(
        &self,
        function: &'static str,
        coordinate: &'static str,
        v: f64,
        w: &Window,
    ) -> Result<f64> {
        if w.contains(v) {
            return Ok(v);
        }
        match self.mode {
            RangeMode::Strict => Err(RangeViolation {
                function,
                coordinate,
                value: v,
                min: w.min,
                max: w.max,
            }
            .into()),
            RangeMode::Clamp => {
                if !v.is_finite() {
                    // NaN cannot be clamped meaningfully; keep it a hard error.
                    return Err(RangeViolation {
                        function,
                        coordinate,
                        value: v,
                        min: w.min,
                        max: w.max,
                    }
                    .into());
                }
                self.clamped.set(true);
                Ok(v.clamp(w.min, w.max))
            }
        }
    }

    /// Specific enthalpy of LiBr/H₂O solution, J/kg.
    pub fn h_solution(&self, t: f64, xi: f64) -> Result<f64> {
        let e = &self.params.solution_enthalpy;
        let t = self.coord("h_solution", "T", t, &e.t)?;
        let xi = self.coord("h_solution", "xi", xi, &e.xi)?;
        Ok(-e.a1 - e.a2 * xi + e.a3 * xi * xi + e.a4 * t - e.a5 * xi * t)
    }

    /// Closed-form inverse of [`Self::h_solution`] in T.
    pub fn t_from_h_solution(&self, h: f64, xi: f64) -> Result<f64> {
        let e = &self.params.solution_enthalpy;
        let xi = self.coord("t_from_h_solution", "xi", xi, &e.xi)?;
        let t = (h + e.a1 + e.a2 * xi - e.a3 * xi * xi) / (e.a4 - e.a5 * xi);
        self.coord("t_from_h_solution", "T", t, &e.t)
    }

    /// ∂h/∂T of the solution, J/(kg·K). Equals A₄ − A₅ξ.
    pub fn cp_solution(&self, xi: f64) -> Result<f64> {
        let e = &self.params.solution_enthalpy;
        let xi = self.coord("cp_solution", "xi", xi, &e.xi)?;
        Ok(e.a4 - e.a5 * xi)
    }

    /// Specific enthalpy of liquid water, J/kg.
    pub fn h_liquid_water(&self, t: f64) -> Result<f64> {
        let e = &self.params.liquid_water_enthalpy;
        let t = self.coord("h_liquid_water", "T", t, &e.t)?;
        Ok(-e.c1 + e.c2 * t)
    }

    /// Affine inverse of [`Self::h_liquid_water`].
    pub fn t_from_h_liquid_water(&self, h: f64) -> Result<f64> {
        let e = &self.params.liquid_water_enthalpy;
        let t = (h + e.c1) / e.c2;
        self.coord("t_from_h_liquid_water", "T", t, &e.t)
    }

    /// Specific enthalpy of water vapor, J/kg.
    pub fn h_vapor_water(&self, t: f64) -> Result<f64> {
        let e = &self.params.vapor_water_enthalpy;
        let t = self.coord("h_vapor_water", "T", t, &e.t)?;
        Ok(e.d1 + e.d2 * t)
    }

    /// Saturation pressure of LiBr/H₂O solution, Pa.
    pub fn p_sat_solution(&self, t: f64, xi: f64, range: PressureRange) -> Result<f64> {
        let e = self.params.solution_saturation(range);
        let t = self.coord("p_sat_solution", "T", t, &e.t)?;
        let xi = self.coord("p_sat_solution", "xi", xi, &e.xi)?;
        Ok((-e.b1 + e.b2 * xi - e.b3 * xi * xi + e.b4 * t).exp())
    }

    /// Saturation temperature of LiBr/H₂O solution at pressure `p`, K.
    /// Exact affine inverse of [`Self::p_sat_solution`] in T.
    pub fn t_sat_solution(&self, p: f64, xi: f64, range: PressureRange) -> Result<f64> {
        if p <= 0.0 || !p.is_finite() {
            return Err(AhpdError::NonPositivePressure {
                function: "t_sat_solution",
                value: p,
            });
        }
        let e = self.params.solution_saturation(range);
        let xi = self.coord("t_sat_solution", "xi", xi, &e.xi)?;
        let t = (p.ln() + e.b1 - e.b2 * xi + e.b3 * xi * xi) / e.b4;
        self.coord("t_sat_solution", "T", t, &e.t)
    }

    /// Saturation pressure of water, Pa.
    pub fn p_sat_water(&self, t: f64, range: PressureRange) -> Result<f64> {
        let e = self.params.water_saturation(range);
        let t = self.coord("p_sat_water", "T", t, &e.t)?;
        Ok((-e.e1 + e.e2 * t).exp())
    }

    /// Saturation temperature of water at pressure `p`, K.
    pub fn t_sat_water(&self, p: f64, range: PressureRange) -> Result<f64> {
        if p <= 0.0 || !p.is_finite() {
            return Err(AhpdError::NonPositivePressure {
                function: "t_sat_water",
                value: p,
            });
        }
        let e = self.params.water_saturation(range);
        let t = (p.ln() + e.e1) / e.e2;
        self.coord("t_sat_water", "T", t, &e.t)
    }

    /// Density of LiBr/H₂O solution, kg/m³.
    pub fn rho_solution(&self, t: f64, xi: f64) -> Result<f64> {
        let e = &self.params.solution_density;
        let t = self.coord("rho_solution", "T", t, &e.t)?;
        let xi = self.coord("rho_solution", "xi", xi, &e.xi)?;
        Ok(e.r1 - e.r2 * xi + e.r3 * xi * xi + e.r4 * t)
    }

    /// Density of liquid water, kg/m³.
    pub fn rho_liquid_water(&self, t: f64) -> Result<f64> {
        let e = &self.params.liquid_water_density;
        let t = self.coord("rho_liquid_water", "T", t, &e.t)?;
        Ok(e.f1 + e.f2 * t - e.f3 * t * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn ctx(p: &PropertyParams) -> PropCtx<'_> {
        PropCtx::new(p, RangeMode::Strict)
    }

    #[test]
    fn solution_enthalpy_direct_evaluation() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        // Oracle: direct term-by-term evaluation of the polynomial.
        let expected = -6.892e5 - 7.001e5 * 0.45 + 1.738e6 * 0.45 * 0.45 + 3.617e3 * 293.15
            - 2.827e3 * 0.45 * 293.15;
        assert_abs_diff_eq!(expected, 35_092.775, epsilon = 1e-2);
        assert_abs_diff_eq!(pr.h_solution(293.15, 0.45).unwrap(), expected, epsilon = 1e-9);
    }

    #[test]
    fn solution_enthalpy_temperature_derivative() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        assert_abs_diff_eq!(pr.cp_solution(0.5).unwrap(), 2203.5, epsilon = 1e-9);
        assert_abs_diff_eq!(pr.cp_solution(0.45).unwrap(), 3617.0 - 2827.0 * 0.45, epsilon = 1e-9);
        // Finite-difference consistency.
        let d = 0.01;
        let fd = (pr.h_solution(330.0 + d, 0.5).unwrap() - pr.h_solution(330.0 - d, 0.5).unwrap())
            / (2.0 * d);
        assert_relative_eq!(fd, pr.cp_solution(0.5).unwrap(), max_relative = 1e-6);
    }

    #[test]
    fn solution_enthalpy_range_violation() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        let err = pr.h_solution(293.15, 0.44).unwrap_err();
        match err {
            AhpdError::Range(v) => {
                assert_eq!(v.coordinate, "xi");
                assert_abs_diff_eq!(v.value, 0.44);
            }
            other => panic!("expected range violation, got {other}"),
        }
    }

    #[test]
    fn liquid_water_enthalpy_steam_table_anchor() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        let h10 = pr.h_liquid_water(283.15).unwrap();
        assert_abs_diff_eq!(h10, 42_265.9, epsilon = 0.1);
        assert!((h10 - 42.1e3).abs() / 42.1e3 < 0.01);
        assert_abs_diff_eq!(pr.h_liquid_water(293.15).unwrap(), 84_125.9, epsilon = 0.1);
    }

    #[test]
    fn vapor_water_enthalpy_values() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        assert_abs_diff_eq!(pr.h_vapor_water(283.15).unwrap(), 2.519_519_45e6, epsilon = 1.0);
        assert_abs_diff_eq!(pr.h_vapor_water(313.15).unwrap(), 2.573_609_45e6, epsilon = 1.0);
    }

    #[test]
    fn latent_heat_positive_over_common_window() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        let mut t = 278.15;
        while t <= 368.15 {
            let latent = pr.h_vapor_water(t).unwrap() - pr.h_liquid_water(t).unwrap();
            assert!(latent > 2.2e6, "latent heat {latent} at T={t}");
            t += 5.0;
        }
    }

    #[test]
    fn solution_saturation_pressure() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        let ps = pr
            .p_sat_solution(353.15, 0.55, PressureRange::HighSide)
            .unwrap();
        // Oracle: direct evaluation; published LiBr equilibrium charts give
        // roughly 9-10 kPa here.
        assert_relative_eq!(ps, 9834.0, max_relative = 1e-3);
        assert!(ps > 9.0e3 && ps < 10.0e3);
        // Monotone increasing in T, decreasing in xi.
        assert!(
            pr.p_sat_solution(354.15, 0.55, PressureRange::HighSide).unwrap() > ps
        );
        assert!(
            pr.p_sat_solution(353.15, 0.56, PressureRange::HighSide).unwrap() < ps
        );
    }

    #[test]
    fn saturation_inverse_round_trips() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        for (t, xi, range) in [
            (330.0, 0.55, PressureRange::HighSide),
            (353.15, 0.5, PressureRange::HighSide),
            (300.0, 0.52, PressureRange::LowSide),
        ] {
            let ps = pr.p_sat_solution(t, xi, range).unwrap();
            let t_back = pr.t_sat_solution(ps, xi, range).unwrap();
            assert_abs_diff_eq!(t_back, t, epsilon = 1e-9);
        }
        for (t, range) in [(313.15, PressureRange::HighSide), (283.15, PressureRange::LowSide)] {
            let ps = pr.p_sat_water(t, range).unwrap();
            assert_abs_diff_eq!(pr.t_sat_water(ps, range).unwrap(), t, epsilon = 1e-9);
        }
    }

    #[test]
    fn nonpositive_pressure_is_domain_error() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        assert!(matches!(
            pr.t_sat_solution(0.0, 0.5, PressureRange::LowSide),
            Err(AhpdError::NonPositivePressure { .. })
        ));
        assert!(matches!(
            pr.t_sat_water(-5.0, PressureRange::LowSide),
            Err(AhpdError::NonPositivePressure { .. })
        ));
    }

    #[test]
    fn water_saturation_steam_table_anchors() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        let high = pr.p_sat_water(313.15, PressureRange::HighSide).unwrap();
        assert!((high - 7384.0).abs() / 7384.0 < 0.02, "p = {high}");
        let low = pr.p_sat_water(283.15, PressureRange::LowSide).unwrap();
        assert!((low - 1228.0).abs() / 1228.0 < 0.05, "p = {low}");
    }

    #[test]
    fn density_anchors_and_monotonicity() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        let rho = pr.rho_solution(293.15, 0.5).unwrap();
        assert!((rho - 1540.0).abs() / 1540.0 < 0.03, "rho = {rho}");
        // Heavier with salt, lighter with temperature.
        assert!(pr.rho_solution(293.15, 0.55).unwrap() > rho);
        assert!(pr.rho_solution(303.15, 0.5).unwrap() < rho);
        // Window bounds.
        let mut t = 293.15;
        while t <= 363.15 {
            for xi in [0.45, 0.5, 0.55, 0.6] {
                let r = pr.rho_solution(t, xi).unwrap();
                assert!((1400.0..=1800.0).contains(&r), "rho({t},{xi}) = {r}");
            }
            t += 10.0;
        }
        let rho_w = pr.rho_liquid_water(293.15).unwrap();
        assert!((rho_w - 998.2).abs() / 998.2 < 0.01);
        assert!(pr.rho_liquid_water(303.15).unwrap() < rho_w);
        assert!(pr.rho_liquid_water(400.0).is_err());
    }

    #[test]
    fn enthalpy_inverse_round_trips_exact() {
        let p = PropertyParams::default();
        let pr = ctx(&p);
        for (t, xi) in [(293.15, 0.45), (330.0, 0.5), (363.15, 0.6)] {
            let h = pr.h_solution(t, xi).unwrap();
            assert_abs_diff_eq!(pr.t_from_h_solution(h, xi).unwrap(), t, epsilon = 1e-9);
        }
        for t in [278.15, 300.0, 368.15] {
            let h = pr.h_liquid_water(t).unwrap();
            assert_abs_diff_eq!(pr.t_from_h_liquid_water(h).unwrap(), t, epsilon = 1e-9);
        }
    }

    #[test]
    fn clamp_mode_flags_and_clamps() {
        let p = PropertyParams::default();
        let pr = PropCtx::new(&p, RangeMode::Clamp);
        assert!(!pr.any_clamped());
        let h = pr.h_solution(293.15, 0.40).unwrap();
        assert!(pr.any_clamped());
        assert_abs_diff_eq!(h, ctx(&p).h_solution(293.15, 0.45).unwrap(), epsilon = 1e-9);
        // NaN stays a hard error even in clamp mode.
        assert!(pr.h_solution(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn validation_pass_reproduces_all_three_corrections() {
        let (validated, report) = validate_params(&PropertyParams::raw());
        let names: Vec<_> = report
            .corrections
            .iter()
            .map(|c| (c.function, c.coefficient))
            .collect();
        assert!(names.contains(&("water_saturation (low side)", "E2")));
        assert!(names.contains(&("solution_density", "R4")));
        assert!(names.contains(&("liquid_water_density", "F1")));
        assert_abs_diff_eq!(validated.water_saturation_low.e2, 6.599e-2, epsilon = 1e-12);
        assert_abs_diff_eq!(validated.solution_density.r4, -5.569e-1, epsilon = 1e-12);
        assert_abs_diff_eq!(validated.liquid_water_density.f1, 7.397e2, epsilon = 1e-9);
        assert!(report.anchors.iter().all(|a| a.pass), "{}", report.render());
    }
}
