//! Averaged-converter model of a standalone PV / battery / EV-charger DC bus.
//!
//! Three converters share one DC bus capacitor:
//!
//! * PV array behind a boost stage: `v_pv = (1 - d_pv) * v_bus`, with a
//!   linear I-V characteristic so that `p(v) = pmpp * (v/vmpp) * (2 - v/vmpp)`
//!   peaks at `(vmpp, pmpp)`.
//! * Battery storage behind a bidirectional stage whose battery-side command
//!   voltage is `kappa_bes * d_bes * v_bus`.
//! * EV battery behind a unidirectional buck charger (`d_ev * v_bus`), its
//!   inductor current clamped at zero.
//!
//! Converters are lossless between command voltage and bus; a fixed bleed
//! resistor on the bus absorbs the remaining power so that the nominal duty
//! set reproduces the target operating point exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("numerical divergence at t={t:.3}s: {what}")]
    NumericalDivergence { t: f64, what: String },
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
}

/// The three duty-cycle control signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutySet {
    pub d_pv: f64,
    pub d_bes: f64,
    pub d_ev: f64,
}

impl DutySet {
    pub const fn new(d_pv: f64, d_bes: f64, d_ev: f64) -> Self {
        Self { d_pv, d_bes, d_ev }
    }

    /// Clamp every component into `[lo, hi]`. Non-finite inputs map to `lo`.
    pub fn clamped(self, lo: f64, hi: f64) -> Self {
        let c = |d: f64| if d.is_finite() { d.clamp(lo, hi) } else { lo };
        Self::new(c(self.d_pv), c(self.d_bes), c(self.d_ev))
    }
}

/// Nominal duties: midpoints of the normal-operation duty bands.
pub const NOMINAL_DUTY: DutySet = DutySet::new(0.2005, 0.705, 0.545);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Inner integration step in seconds.
    pub ts_plant: f64,
    /// Controller / agent decision period in seconds.
    pub ts_control: f64,
    pub c_bus: f64,
    pub l_bes: f64,
    pub l_ev: f64,
    /// BES converter series resistance (not part of the measured terminal voltage).
    pub r_bes: f64,
    /// EV charger series resistance (not part of the measured terminal voltage).
    pub r_ev: f64,
    /// Bus bleed resistor.
    pub r_load: f64,
    pub kappa_bes: f64,
    pub pv_vmpp: f64,
    pub pv_pmpp: f64,
    pub bes_voc: f64,
    pub bes_rint: f64,
    pub ev_voc: f64,
    pub ev_rint: f64,
    pub duty_min: f64,
    pub duty_max: f64,
    /// Bus voltage magnitude treated as divergence.
    pub v_bus_limit: f64,
    /// Duty set at which the calibrated operating point is a fixed point.
    pub nominal_duty: DutySet,
}

impl PlantParams {
    /// Constants that calibration does not solve for. The solved fields hold
    /// rough placeholders until [`calibrate_params`] overwrites them.
    pub fn base() -> Self {
        Self {
            ts_plant: 0.001,
            ts_control: 0.1,
            c_bus: 0.01,
            l_bes: 0.002,
            l_ev: 0.005,
            r_bes: 0.05,
            r_ev: 0.13,
            r_load: 19.0,
            kappa_bes: 1.4,
            pv_vmpp: 42.0,
            pv_pmpp: 1000.0,
            bes_voc: 42.0,
            bes_rint: 1.5,
            ev_voc: 17.0,
            ev_rint: 0.5,
            duty_min: 0.0,
            duty_max: 1.0,
            v_bus_limit: 10.0 * 52.7605,
            nominal_duty: NOMINAL_DUTY,
        }
    }

    /// Base constants calibrated against [`CalibrationTargets::default`].
    pub fn calibrated_default() -> Self {
        calibrate_params(&CalibrationTargets::default(), &Self::base())
            .expect("default calibration targets are consistent")
    }

    /// Number of integration substeps per control period.
    pub fn substeps(&self) -> usize {
        (self.ts_control / self.ts_plant).round() as usize
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("ts_plant", self.ts_plant),
            ("ts_control", self.ts_control),
            ("c_bus", self.c_bus),
            ("l_bes", self.l_bes),
            ("l_ev", self.l_ev),
            ("r_bes", self.r_bes),
            ("r_ev", self.r_ev),
            ("r_load", self.r_load),
            ("kappa_bes", self.kappa_bes),
            ("pv_vmpp", self.pv_vmpp),
            ("pv_pmpp", self.pv_pmpp),
            ("bes_voc", self.bes_voc),
            ("bes_rint", self.bes_rint),
            ("ev_voc", self.ev_voc),
            ("ev_rint", self.ev_rint),
            ("v_bus_limit", self.v_bus_limit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.duty_min < self.duty_max) {
            return Err(PlantError::InvalidParams("duty_min must be below duty_max".into()));
        }
        let ratio = self.ts_control / self.ts_plant;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return Err(PlantError::InvalidParams(
                "ts_plant must divide ts_control exactly".into(),
            ));
        }
        Ok(())
    }

    /// PV array power at terminal voltage `v_pv`.
    pub fn pv_power(&self, v_pv: f64) -> f64 {
        (v_pv * self.pv_current(v_pv)).max(0.0)
    }

    /// PV array current at terminal voltage `v_pv` (linear I-V, zero past `2*vmpp`).
    pub fn pv_current(&self, v_pv: f64) -> f64 {
        let x = v_pv / self.pv_vmpp;
        (self.pv_pmpp / self.pv_vmpp * (2.0 - x)).max(0.0)
    }
}

/// Full electrical state. Reported battery currents follow the
/// charging-is-negative convention; `il_bes`/`il_ev` are the internal
/// charging-positive inductor currents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub t: f64,
    pub p_pv: f64,
    pub v_bus: f64,
    pub i_bes: f64,
    pub v_bes: f64,
    pub i_ev: f64,
    pub v_ev: f64,
    pub il_bes: f64,
    pub il_ev: f64,
}

impl PlantState {
    /// Build a state from the dynamic variables, filling in the observables.
    pub fn from_dynamic(t: f64, v_bus: f64, il_bes: f64, il_ev: f64, d_pv: f64, p: &PlantParams) -> Self {
        Self {
            t,
            p_pv: p.pv_power((1.0 - d_pv) * v_bus),
            v_bus,
            i_bes: -il_bes,
            v_bes: p.bes_voc + p.bes_rint * il_bes,
            i_ev: -il_ev,
            v_ev: p.ev_voc + p.ev_rint * il_ev,
            il_bes,
            il_ev,
        }
    }

    fn dynamic(&self) -> [f64; 3] {
        [self.v_bus, self.il_bes, self.il_ev]
    }

    /// Euclidean norm over the fields that carry physical state.
    pub fn norm(&self) -> f64 {
        self.observables().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `[p_pv, v_bus, i_bes, v_bes, i_ev, v_ev]`.
    pub fn observables(&self) -> [f64; 6] {
        [self.p_pv, self.v_bus, self.i_bes, self.v_bes, self.i_ev, self.v_ev]
    }
}

/// Steady-state target values for each observable plus the duty set that
/// should produce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub p_pv: f64,
    pub v_bus: f64,
    pub i_bes: f64,
    pub v_bes: f64,
    pub i_ev: f64,
    pub v_ev: f64,
    pub duty: DutySet,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            p_pv: 1043.5996,
            v_bus: 52.7605,
            i_bes: -6.9452,
            v_bes: 52.0587,
            i_ev: -18.6713,
            v_ev: 26.3126,
            duty: NOMINAL_DUTY,
        }
    }
}

/// Time derivatives `[dv_bus, dil_bes, dil_ev]` of the averaged model.
fn derivatives(v_bus: f64, il_bes: f64, il_ev: f64, d: &DutySet, p: &PlantParams, pv_on: bool) -> [f64; 3] {
    let v_pv = (1.0 - d.d_pv) * v_bus;
    // Bus-side PV current of a lossless boost: p_pv / v_bus = (1 - d) * i_pv.
    let i_pv_bus = if pv_on { (1.0 - d.d_pv) * p.pv_current(v_pv) } else { 0.0 };
    let g_bes = p.kappa_bes * d.d_bes;
    let v_bes_term = p.bes_voc + p.bes_rint * il_bes;
    let v_ev_term = p.ev_voc + p.ev_rint * il_ev;
    let dil_bes = (g_bes * v_bus - v_bes_term - p.r_bes * il_bes) / p.l_bes;
    let dil_ev = (d.d_ev * v_bus - v_ev_term - p.r_ev * il_ev) / p.l_ev;
    let i_bus = i_pv_bus - g_bes * il_bes - d.d_ev * il_ev - v_bus / p.r_load;
    [i_bus / p.c_bus, dil_bes, dil_ev]
}

fn integrate(state: &PlantState, duties: &DutySet, p: &PlantParams, pv_on: bool) -> Result<PlantState, PlantError> {
    let d = duties.clamped(p.duty_min, p.duty_max);
    let h = p.ts_plant;
    let [mut v, mut ib, mut ie] = state.dynamic();
    for _ in 0..p.substeps() {
        let [dv, dib, die] = derivatives(v, ib, ie, &d, p, pv_on);
        v = (v + h * dv).max(0.0);
        ib += h * dib;
        ie = (ie + h * die).max(0.0);
    }
    let t = state.t + p.ts_control;
    if !(v.is_finite() && ib.is_finite() && ie.is_finite()) {
        return Err(PlantError::NumericalDivergence { t, what: "non-finite state".into() });
    }
    if v.abs() > p.v_bus_limit {
        return Err(PlantError::NumericalDivergence {
            t,
            what: format!("v_bus={v:.3} exceeds limit {:.3}", p.v_bus_limit),
        });
    }
    let mut next = PlantState::from_dynamic(t, v, ib, ie, d.d_pv, p);
    if !pv_on {
        next.p_pv = 0.0;
    }
    Ok(next)
}

/// Advance the plant by one control period under `duties` (clamped to the
/// saturation bounds before use).
pub fn step(state: &PlantState, duties: &DutySet, params: &PlantParams) -> Result<PlantState, PlantError> {
    integrate(state, duties, params, true)
}

/// Same as [`step`] with the PV array disconnected.
pub fn step_pv_disconnected(
    state: &PlantState,
    duties: &DutySet,
    params: &PlantParams,
) -> Result<PlantState, PlantError> {
    integrate(state, duties, params, false)
}

/// Solve the steady-state equations for the parameters that pin the nominal
/// duty set to `targets`. Constants not solved for are copied from `base`.
///
/// Solved: `pv_vmpp`, `pv_pmpp`, `kappa_bes`, `bes_voc`, `r_ev`, `ev_voc`, `r_load`.
pub fn calibrate_params(targets: &CalibrationTargets, base: &PlantParams) -> Result<PlantParams, PlantError> {
    let t = targets;
    let d = t.duty;
    let il_b = -t.i_bes;
    let il_e = -t.i_ev;
    if !(t.v_bus > 0.0 && t.p_pv > 0.0 && il_e > 0.0) {
        return Err(PlantError::Calibration(
            "targets need positive bus voltage, PV power and EV charging current".into(),
        ));
    }
    let mut p = base.clone();
    p.nominal_duty = d;
    p.pv_vmpp = (1.0 - d.d_pv) * t.v_bus;
    p.pv_pmpp = t.p_pv;
    p.kappa_bes = (t.v_bes + p.r_bes * il_b) / (d.d_bes * t.v_bus);
    p.bes_voc = t.v_bes - p.bes_rint * il_b;
    p.r_ev = (d.d_ev * t.v_bus - t.v_ev) / il_e;
    p.ev_voc = t.v_ev - p.ev_rint * il_e;
    let p_bes_bus = p.kappa_bes * d.d_bes * t.v_bus * il_b;
    let p_ev_bus = d.d_ev * t.v_bus * il_e;
    let residual = t.p_pv - p_bes_bus - p_ev_bus;
    if residual <= 0.0 {
        return Err(PlantError::Calibration(format!(
            "bus power residual {residual:.4} W leaves no room for the bleed resistor"
        )));
    }
    p.r_load = t.v_bus * t.v_bus / residual;
    p.validate().map_err(|e| PlantError::Calibration(e.to_string()))?;

    let [dv, dib, die] = derivatives(t.v_bus, il_b, il_e, &d, &p, true);
    let state = PlantState::from_dynamic(0.0, t.v_bus, il_b, il_e, d.d_pv, &p);
    let obs = state.observables();
    let want = [t.p_pv, t.v_bus, t.i_bes, t.v_bes, t.i_ev, t.v_ev];
    let mut res2 = (dv * p.c_bus / il_e).powi(2) + (dib * p.l_bes / t.v_bus).powi(2) + (die * p.l_ev / t.v_bus).powi(2);
    for (o, w) in obs.iter().zip(want) {
        res2 += ((o - w) / w.abs().max(1.0)).powi(2);
    }
    let res = res2.sqrt();
    if !(res <= 1e-6) {
        return Err(PlantError::Calibration(format!("steady-state residual {res:.3e} exceeds 1e-6")));
    }
    Ok(p)
}

/// Integrate open loop under the nominal duty set until the state stops
/// moving, and return that fixed point with the duty set.
pub fn nominal_operating_point(params: &PlantParams) -> Result<(PlantState, DutySet), PlantError> {
    params.validate()?;
    let d = params.nominal_duty.clamped(params.duty_min, params.duty_max);
    let h = params.ts_plant;
    let g = params.kappa_bes * d.d_bes;
    let mut v = params.bes_voc / g;
    let mut ib = 0.0_f64;
    let mut ie = 0.0_f64;
    const MAX_SUBSTEPS: usize = 100_000;
    for _ in 0..MAX_SUBSTEPS {
        let [dv, dib, die] = derivatives(v, ib, ie, &d, params, true);
        let nv = (v + h * dv).max(0.0);
        let nib = ib + h * dib;
        let nie = (ie + h * die).max(0.0);
        if !(nv.is_finite() && nib.is_finite() && nie.is_finite()) {
            return Err(PlantError::Calibration("fixed-point iteration diverged".into()));
        }
        let moved = (nv - v).abs() + (nib - ib).abs() + (nie - ie).abs();
        let scale = nv.abs() + nib.abs() + nie.abs();
        v = nv;
        ib = nib;
        ie = nie;
        if moved <= 1e-15 * scale {
            return Ok((PlantState::from_dynamic(0.0, v, ib, ie, d.d_pv, params), d));
        }
    }
    Err(PlantError::Calibration(format!(
        "fixed-point iteration did not converge within {MAX_SUBSTEPS} substeps"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn calibration_matches_hand_relations() {
        let p = PlantParams::calibrated_default();
        // ideal boost at the nominal point
        assert!((p.pv_vmpp - (1.0 - 0.2005) * 52.7605).abs() < 1e-12);
        assert!((p.pv_vmpp - 42.18).abs() < 0.01);
        // steady buck loop drop over the charging current
        assert!((p.r_ev - (0.545 * 52.7605 - 26.3126) / 18.6713).abs() < 1e-12);
        assert!((p.r_ev - 0.130).abs() < 0.002);
        // bleed resistor from the bus power residual
        assert!(p.r_load > 18.0 && p.r_load < 21.0, "r_load={}", p.r_load);
    }

    #[test]
    fn nominal_point_reproduces_targets() {
        let p = PlantParams::calibrated_default();
        let (x, d) = nominal_operating_point(&p).unwrap();
        assert_eq!(d, NOMINAL_DUTY);
        assert!(rel(x.p_pv, 1043.5996) < 0.01);
        assert!(rel(x.v_bus, 52.7605) < 0.01);
        assert!(rel(x.v_bes, 52.0587) < 0.01);
        assert!(rel(x.v_ev, 26.3126) < 0.01);
        assert!(rel(x.i_bes, -6.9452) < 0.02);
        assert!(rel(x.i_ev, -18.6713) < 0.02);
        assert_eq!(x.i_bes, -x.il_bes);
        assert_eq!(x.i_ev, -x.il_ev);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let p = PlantParams::calibrated_default();
        let (x, d) = nominal_operating_point(&p).unwrap();
        let y = step(&x, &d, &p).unwrap();
        let diff: f64 = x
            .observables()
            .iter()
            .zip(y.observables())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-6 * x.norm(), "diff={diff}");
    }

    #[test]
    fn ev_current_decays_when_charger_off() {
        let p = PlantParams::calibrated_default();
        let (mut x, d) = nominal_operating_point(&p).unwrap();
        let off = DutySet { d_ev: 0.0, ..d };
        for _ in 0..10 {
            x = step(&x, &off, &p).unwrap();
        }
        assert_eq!(x.il_ev, 0.0);
        assert_eq!(x.i_ev, 0.0);
    }

    #[test]
    fn pv_counterfactual_duty_collapses_power() {
        let p = PlantParams::calibrated_default();
        let (x, d) = nominal_operating_point(&p).unwrap();
        let hit = DutySet { d_pv: 0.7005, ..d };
        let v_pv = (1.0 - 0.7005) * x.v_bus;
        assert!((v_pv - 0.2995 * x.v_bus).abs() < 1e-12);
        let expected = p.pv_power(v_pv);
        assert!(expected < 0.7 * p.pv_pmpp);
        let y = step(&x, &hit, &p).unwrap();
        assert!(y.p_pv < 0.8 * p.pv_pmpp, "p_pv={}", y.p_pv);
    }

    #[test]
    fn pv_curve_is_unimodal() {
        let p = PlantParams::calibrated_default();
        let n = 2000;
        let mut prev = p.pv_power(0.0);
        for k in 1..n {
            let v = p.pv_vmpp * k as f64 / n as f64;
            let now = p.pv_power(v);
            assert!(now > prev);
            prev = now;
        }
        prev = p.pv_power(p.pv_vmpp);
        for k in 1..=n {
            let v = p.pv_vmpp * (1.0 + k as f64 / n as f64);
            let now = p.pv_power(v);
            assert!(now < prev, "v={v}");
            prev = now;
        }
    }

    #[test]
    fn bus_bleeds_down_without_sources() {
        let p = PlantParams::calibrated_default();
        let (mut x, _) = nominal_operating_point(&p).unwrap();
        let zero = DutySet::new(0.0, 0.0, 0.0);
        for _ in 0..30 {
            let y = step_pv_disconnected(&x, &zero, &p).unwrap();
            assert!(y.v_bus <= x.v_bus);
            assert_eq!(y.p_pv, 0.0);
            x = y;
        }
    }

    #[test]
    fn step_is_bit_deterministic() {
        let p = PlantParams::calibrated_default();
        let (x, _) = nominal_operating_point(&p).unwrap();
        let d = DutySet::new(0.31, 0.52, 0.77);
        let a = step(&x, &d, &p).unwrap();
        let b = step(&x, &d, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_params_are_rejected() {
        let mut p = PlantParams::calibrated_default();
        p.ts_plant = 0.0003;
        assert!(p.validate().is_err());
        let t = CalibrationTargets { p_pv: 10.0, ..Default::default() };
        assert!(matches!(calibrate_params(&t, &PlantParams::base()), Err(PlantError::Calibration(_))));
    }
}
