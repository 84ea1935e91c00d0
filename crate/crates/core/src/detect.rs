//! Threshold detectors, one per controller.
//!
//! Each detector watches two signals: the PV power (shared by all three
//! detectors) and the duty of its own channel as it would reach the plant.
//! In conjunctive mode an attack is declared when both leave their normal
//! windows; in disjunctive mode when either does. Once declared, the verdict
//! stays `Attack` until both signals are back inside their windows and then
//! for `hold_steps` further control steps.

use serde::{Deserialize, Serialize};

use crate::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredicateMode {
    Conjunctive,
    Disjunctive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Normal,
    Attack,
}

impl Verdict {
    pub fn is_attack(self) -> bool {
        self == Verdict::Attack
    }
}

/// Open interval `(lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub power_window: Band,
    pub duty_window_pv: Band,
    pub duty_window_bes: Band,
    pub duty_window_ev: Band,
    pub predicate_mode: PredicateMode,
    pub hold_steps: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            power_window: Band::new(1020.0, 1045.0),
            duty_window_pv: Band::new(0.200, 0.201),
            duty_window_bes: Band::new(0.7, 0.71),
            duty_window_ev: Band::new(0.54, 0.55),
            predicate_mode: PredicateMode::Conjunctive,
            hold_steps: 5,
        }
    }
}

impl DetectorConfig {
    pub fn duty_window(&self, c: Channel) -> Band {
        match c {
            Channel::Pv => self.duty_window_pv,
            Channel::Bes => self.duty_window_bes,
            Channel::Ev => self.duty_window_ev,
        }
    }

    /// Either the power or the duty of `target` lies outside its band.
    pub fn any_out_of_band(&self, target: Channel, p_pv: f64, duty: f64) -> bool {
        !self.power_window.contains(p_pv) || !self.duty_window(target).contains(duty)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, b) in [
            ("power_window", self.power_window),
            ("duty_window_pv", self.duty_window_pv),
            ("duty_window_bes", self.duty_window_bes),
            ("duty_window_ev", self.duty_window_ev),
        ] {
            if !(b.lower < b.upper) {
                return Err(format!("{name}: lower must be below upper"));
            }
        }
        if self.hold_steps < 1 {
            return Err("hold_steps must be at least 1".into());
        }
        Ok(())
    }
}

/// Hysteresis memory carried between calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectorMemory {
    attack: bool,
    /// Steps left before an `Attack` verdict may be released.
    hold_left: u32,
}

impl DetectorMemory {
    pub fn verdict(&self) -> Verdict {
        if self.attack { Verdict::Attack } else { Verdict::Normal }
    }
}

pub fn classify(
    target: Channel,
    p_pv: f64,
    duty: f64,
    cfg: &DetectorConfig,
    prior: DetectorMemory,
) -> (Verdict, DetectorMemory) {
    let p_out = !cfg.power_window.contains(p_pv);
    let d_out = !cfg.duty_window(target).contains(duty);
    let trigger = match cfg.predicate_mode {
        PredicateMode::Conjunctive => p_out && d_out,
        PredicateMode::Disjunctive => p_out || d_out,
    };
    let next = if trigger {
        DetectorMemory { attack: true, hold_left: cfg.hold_steps }
    } else if prior.attack && prior.hold_left > 1 {
        DetectorMemory { attack: true, hold_left: prior.hold_left - 1 }
    } else {
        DetectorMemory::default()
    };
    (next.verdict(), next)
}

/// Detectors for all three channels.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DetectorBank {
    memory: [DetectorMemory; 3],
}

impl DetectorBank {
    pub fn classify(&mut self, c: Channel, p_pv: f64, duty: f64, cfg: &DetectorConfig) -> Verdict {
        let (v, m) = classify(c, p_pv, duty, cfg, self.memory[c.index()]);
        self.memory[c.index()] = m;
        v
    }

    pub fn verdict(&self, c: Channel) -> Verdict {
        self.memory[c.index()].verdict()
    }
}
