//! Simulation and defense stack for a standalone PV-powered EV charging
//! station whose converter duty cycles are under attack.
//!
//! * [`plant`]: averaged-converter bus model and its calibration.
//! * [`control`]: legacy MPPT / PI controllers and controller clones.
//! * [`attack`]: Type-I (held pseudorandom) and Type-II (constant) duty corruption.
//! * [`detect`]: threshold detectors with hysteresis.
//! * [`neural`]: small MLP stack with backprop and Adam.
//! * [`td3`]: twin-delayed DDPG agents for the three channels.
//! * [`mitigate`]: per-channel routing between legacy and mitigation sources.

// Negated comparisons reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attack;
pub mod control;
pub mod detect;
pub mod mitigate;
pub mod neural;
pub mod plant;
pub mod rng;
pub mod td3;

use serde::{Deserialize, Serialize};

/// One of the three duty-cycle control channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Pv,
    Bes,
    Ev,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Pv, Channel::Bes, Channel::Ev];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Pv => "pv",
            Channel::Bes => "bes",
            Channel::Ev => "ev",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pv" => Ok(Channel::Pv),
            "bes" => Ok(Channel::Bes),
            "ev" => Ok(Channel::Ev),
            other => Err(format!("unknown channel '{other}'")),
        }
    }
}

impl plant::DutySet {
    pub fn get(&self, c: Channel) -> f64 {
        match c {
            Channel::Pv => self.d_pv,
            Channel::Bes => self.d_bes,
            Channel::Ev => self.d_ev,
        }
    }

    pub fn set(&mut self, c: Channel, v: f64) {
        match c {
            Channel::Pv => self.d_pv = v,
            Channel::Bes => self.d_bes = v,
            Channel::Ev => self.d_ev = v,
        }
    }
}
