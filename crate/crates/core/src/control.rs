//! Legacy station controllers: perturb-and-observe MPPT on the PV boost, PI
//! bus-voltage regulation on the battery converter, PI battery-voltage
//! regulation on the EV charger.

use serde::{Deserialize, Serialize};

use crate::plant::PlantState;
use crate::Channel;

/// Perturb-and-observe tracker state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpptState {
    pub last_power: f64,
    pub last_duty: f64,
    /// `+1` or `-1`.
    pub perturb_dir: i8,
    pub step_size: f64,
    /// Duty a freshly built (or cloned) tracker starts from.
    pub duty_init: f64,
    pub out_min: f64,
    pub out_max: f64,
}

impl MpptState {
    pub fn new(duty_init: f64, step_size: f64) -> Self {
        Self {
            last_power: 0.0,
            last_duty: duty_init,
            perturb_dir: 1,
            step_size,
            duty_init,
            out_min: 0.0,
            out_max: 1.0,
        }
    }

    /// Fresh tracker with the same configuration and no memory.
    pub fn reset(&self) -> Self {
        Self {
            last_power: 0.0,
            last_duty: self.duty_init,
            perturb_dir: 1,
            ..*self
        }
    }
}

/// One P&O iteration: keep the perturbation direction while power rises,
/// reverse it otherwise.
pub fn mppt_step(state: &MpptState, p_pv: f64) -> (MpptState, f64) {
    let dir = if p_pv > state.last_power { state.perturb_dir } else { -state.perturb_dir };
    let duty = (state.last_duty + f64::from(dir) * state.step_size).clamp(state.out_min, state.out_max);
    let next = MpptState {
        last_power: p_pv,
        last_duty: duty,
        perturb_dir: dir,
        ..*state
    };
    (next, duty)
}

/// PI regulator with conditional-integration anti-windup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiState {
    pub kp: f64,
    pub ki: f64,
    /// Accumulated error, error-units times seconds.
    pub integ: f64,
    pub out_min: f64,
    pub out_max: f64,
    pub anti_windup: bool,
}

impl PiState {
    pub fn new(kp: f64, ki: f64, out_min: f64, out_max: f64) -> Self {
        Self { kp, ki, integ: 0.0, out_min, out_max, anti_windup: true }
    }

    /// Integrator value that makes the output equal `duty` at zero error.
    pub fn with_output(mut self, duty: f64) -> Self {
        self.integ = if self.ki != 0.0 { duty / self.ki } else { 0.0 };
        self
    }

    pub fn reset(&self) -> Self {
        Self { integ: 0.0, ..*self }
    }

    /// Re-seed the integrator so the output at `error` equals `duty`.
    pub fn resync(&mut self, duty: f64, error: f64) {
        if self.ki != 0.0 {
            self.integ = (duty - self.kp * error) / self.ki;
        }
    }
}

pub fn pi_step(state: &PiState, error: f64, ts: f64) -> (PiState, f64) {
    let candidate = state.integ + error * ts;
    let raw = state.kp * error + state.ki * candidate;
    let saturated = raw > state.out_max || raw < state.out_min;
    let integ = if state.anti_windup && saturated { state.integ } else { candidate };
    let duty = (state.kp * error + state.ki * integ).clamp(state.out_min, state.out_max);
    (PiState { integ, ..*state }, duty)
}

/// Set points for the three regulated quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub p_ref: f64,
    pub v_bus_ref: f64,
    pub v_batt_ref: f64,
}

impl Default for References {
    fn default() -> Self {
        Self { p_ref: 1043.5996, v_bus_ref: 52.7605, v_batt_ref: 26.3126 }
    }
}

/// Gains and initial conditions for the legacy controller set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub mppt_step: f64,
    pub mppt_duty_init: f64,
    pub bes_kp: f64,
    pub bes_ki: f64,
    pub ev_kp: f64,
    pub ev_ki: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            mppt_step: 5e-5,
            mppt_duty_init: 0.2,
            bes_kp: 0.012,
            bes_ki: 0.08,
            ev_kp: 0.024,
            ev_ki: 0.1,
        }
    }
}

/// A legacy controller of any kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Controller {
    Mppt(MpptState),
    /// BES PI; the regulated error is `v_bus - v_bus_ref` because a larger
    /// BES duty charges harder and pulls the bus down.
    BusPi(PiState),
    /// EV PI on `v_batt_ref - v_ev`.
    BattPi(PiState),
}

impl Controller {
    /// The legacy controller for `channel`, primed so that its first output
    /// at zero error is `nominal`.
    pub fn legacy(channel: Channel, gains: &ControllerGains, nominal: f64) -> Self {
        match channel {
            Channel::Pv => {
                let mut m = MpptState::new(gains.mppt_duty_init, gains.mppt_step);
                m.last_duty = nominal;
                Controller::Mppt(m)
            }
            Channel::Bes => Controller::BusPi(PiState::new(gains.bes_kp, gains.bes_ki, 0.0, 1.0).with_output(nominal)),
            Channel::Ev => Controller::BattPi(PiState::new(gains.ev_kp, gains.ev_ki, 0.0, 1.0).with_output(nominal)),
        }
    }

    pub fn channel(&self) -> Channel {
        match self {
            Controller::Mppt(_) => Channel::Pv,
            Controller::BusPi(_) => Channel::Bes,
            Controller::BattPi(_) => Channel::Ev,
        }
    }

    /// Control error as this controller sees it.
    pub fn error(&self, x: &PlantState, refs: &References) -> f64 {
        match self {
            Controller::Mppt(_) => refs.p_ref - x.p_pv,
            Controller::BusPi(_) => x.v_bus - refs.v_bus_ref,
            Controller::BattPi(_) => refs.v_batt_ref - x.v_ev,
        }
    }

    /// Read the plant and produce the next duty.
    pub fn update(&mut self, x: &PlantState, refs: &References, ts: f64) -> f64 {
        let e = self.error(x, refs);
        match self {
            Controller::Mppt(m) => {
                let (next, d) = mppt_step(m, x.p_pv);
                *m = next;
                d
            }
            Controller::BusPi(pi) | Controller::BattPi(pi) => {
                let (next, d) = pi_step(pi, e, ts);
                *pi = next;
                d
            }
        }
    }

    /// Most recent output (for PI, the output at zero error).
    pub fn last_output(&self) -> f64 {
        match self {
            Controller::Mppt(m) => m.last_duty,
            Controller::BusPi(pi) | Controller::BattPi(pi) => (pi.ki * pi.integ).clamp(pi.out_min, pi.out_max),
        }
    }

    /// Continue from `duty` without a bump.
    pub fn resync(&mut self, duty: f64, x: &PlantState, refs: &References) {
        let e = self.error(x, refs);
        match self {
            Controller::Mppt(m) => {
                m.last_duty = duty;
                m.last_power = x.p_pv;
            }
            Controller::BusPi(pi) | Controller::BattPi(pi) => pi.resync(duty, e),
        }
    }

    /// Identically configured instance with all dynamic state cleared.
    pub fn clone_fresh(&self) -> Self {
        match self {
            Controller::Mppt(m) => Controller::Mppt(m.reset()),
            Controller::BusPi(pi) => Controller::BusPi(pi.reset()),
            Controller::BattPi(pi) => Controller::BattPi(pi.reset()),
        }
    }
}

/// The three legacy controllers of the station.
#[derive(Debug, Clone, PartialEq)]
pub struct LegacySet {
    pub pv: Controller,
    pub bes: Controller,
    pub ev: Controller,
}

impl LegacySet {
    pub fn nominal(gains: &ControllerGains, nominal: &crate::plant::DutySet) -> Self {
        Self {
            pv: Controller::legacy(Channel::Pv, gains, nominal.d_pv),
            bes: Controller::legacy(Channel::Bes, gains, nominal.d_bes),
            ev: Controller::legacy(Channel::Ev, gains, nominal.d_ev),
        }
    }

    pub fn get(&self, c: Channel) -> &Controller {
        match c {
            Channel::Pv => &self.pv,
            Channel::Bes => &self.bes,
            Channel::Ev => &self.ev,
        }
    }

    pub fn get_mut(&mut self, c: Channel) -> &mut Controller {
        match c {
            Channel::Pv => &mut self.pv,
            Channel::Bes => &mut self.bes,
            Channel::Ev => &mut self.ev,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mppt_keeps_direction_when_power_rises() {
        let s = MpptState { last_power: 1000.0, last_duty: 0.2, ..MpptState::new(0.2, 5e-5) };
        let (n, d) = mppt_step(&s, 1010.0);
        assert!((d - 0.20005).abs() < 1e-15);
        assert_eq!(n.perturb_dir, 1);
    }

    #[test]
    fn mppt_reverses_when_power_falls() {
        let s = MpptState { last_power: 1010.0, last_duty: 0.2005, ..MpptState::new(0.2, 5e-5) };
        let (n, d) = mppt_step(&s, 1000.0);
        assert!((d - 0.20045).abs() < 1e-15);
        assert_eq!(n.perturb_dir, -1);
    }

    #[test]
    fn pi_zero_input_clamps_low() {
        let s = PiState::new(1.0, 1.0, 0.0, 1.0);
        assert_eq!(pi_step(&s, 0.0, 0.1).1, 0.0);
        let s = PiState::new(1.0, 1.0, 0.1, 1.0);
        assert_eq!(pi_step(&s, 0.0, 0.1).1, 0.1);
    }

    #[test]
    fn pi_pure_proportional() {
        let s = PiState::new(1.0, 0.0, 0.0, 1.0);
        assert_eq!(pi_step(&s, 0.705, 0.1).1, 0.705);
    }

    #[test]
    fn anti_windup_freezes_on_saturation() {
        let s = PiState { integ: 5.0, ..PiState::new(0.5, 0.1, 0.0, 1.0) };
        let (n, d) = pi_step(&s, 10.0, 0.1);
        assert_eq!(d, 1.0);
        assert_eq!(n.integ, 5.0);
        let free = PiState { anti_windup: false, ..s };
        assert!((pi_step(&free, 10.0, 0.1).0.integ - 6.0).abs() < 1e-12);
    }

    #[test]
    fn clone_resets_state_keeps_gains() {
        let pi = Controller::BusPi(PiState { integ: 4.2, ..PiState::new(0.3, 0.7, 0.0, 1.0) });
        match pi.clone_fresh() {
            Controller::BusPi(c) => {
                assert_eq!(c.integ, 0.0);
                assert_eq!((c.kp, c.ki), (0.3, 0.7));
            }
            _ => unreachable!(),
        }
        let m = Controller::Mppt(MpptState { last_duty: 0.83, last_power: 500.0, ..MpptState::new(0.2, 5e-5) });
        match m.clone_fresh() {
            Controller::Mppt(c) => {
                assert_eq!(c.last_duty, 0.2);
                assert_eq!(c.last_power, 0.0);
            }
            _ => unreachable!(),
        }
        assert_eq!(m.clone_fresh().clone_fresh(), m.clone_fresh());
    }

    #[test]
    fn resync_is_bumpless() {
        let mut c = Controller::legacy(Channel::Ev, &ControllerGains::default(), 0.545);
        let x = PlantState { v_ev: 26.0, ..crate::plant::nominal_operating_point(&crate::plant::PlantParams::calibrated_default()).unwrap().0 };
        let refs = References::default();
        c.resync(0.6, &x, &refs);
        if let Controller::BattPi(pi) = c {
            let e = refs.v_batt_ref - x.v_ev;
            assert!((pi.kp * e + pi.ki * pi.integ - 0.6).abs() < 1e-12);
        }
    }
}
