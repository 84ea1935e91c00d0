//! Duty-cycle attacks injected between the controllers and the plant.
//!
//! A Type-I attack adds a held pseudorandom value `PRN(low, high, rep)`: a
//! uniform sample in `[low, high)` that is repeated for `rep` control steps.
//! A Type-II attack adds a constant. Each targeted channel combines the
//! attack value with its duty using its own sign, and the result is clamped
//! back into `[0, 1]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::DutySet;
use crate::rng::SimRng;
use crate::Channel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("invalid attack spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    TypeI,
    TypeII,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    Sim,
    Diff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
}

impl Window {
    pub const fn new(t_start: f64, t_end: f64) -> Self {
        Self { t_start, t_end }
    }

    /// Half-open membership `[t_start, t_end)`, tolerant to step-time rounding.
    pub fn contains(&self, t: f64) -> bool {
        const EPS: f64 = 1e-9;
        t >= self.t_start - EPS && t < self.t_end - EPS
    }

    pub fn len(&self) -> f64 {
        self.t_end - self.t_start
    }

    fn overlaps(&self, other: &Window) -> bool {
        self.t_start < other.t_end && other.t_start < self.t_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub targets: Vec<Channel>,
    pub timing: Timing,
    pub windows: BTreeMap<Channel, Window>,
    pub kind: AttackKind,
    pub sign_map: BTreeMap<Channel, f64>,
    /// Attack duration `T_a`; every window has this length.
    pub duration: f64,
    pub prn_low: f64,
    pub prn_high: f64,
    /// Hold length of each PRN sample, in control steps.
    pub prn_rep: usize,
    pub constant_c: f64,
    pub seed: u64,
}

pub const DEFAULT_ATTACK_SEED: u64 = 0xDEAD_BEEF;

impl AttackSpec {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::Invalid(m));
        if !(self.prn_low < self.prn_high) {
            return bad(format!("prn_low {} must be below prn_high {}", self.prn_low, self.prn_high));
        }
        if self.prn_rep < 1 {
            return bad("prn_rep must be at least 1".into());
        }
        let mut ws = Vec::new();
        for c in &self.targets {
            let Some(w) = self.windows.get(c) else {
                return bad(format!("target {c} has no window"));
            };
            if (w.len() - self.duration).abs() > 1e-9 {
                return bad(format!("window for {c} has length {} but duration is {}", w.len(), self.duration));
            }
            let s = self.sign_map.get(c).copied().unwrap_or(0.0);
            if s != 1.0 && s != -1.0 {
                return bad(format!("sign for {c} must be +1 or -1"));
            }
            ws.push(*w);
        }
        match self.timing {
            Timing::Sim => {
                if ws.windows(2).any(|p| p[0] != p[1]) {
                    return bad("sim timing requires identical windows".into());
                }
            }
            Timing::Diff => {
                for i in 0..ws.len() {
                    for j in i + 1..ws.len() {
                        if ws[i].overlaps(&ws[j]) {
                            return bad("diff timing requires disjoint windows".into());
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Window of `c` if it is targeted.
    pub fn window(&self, c: Channel) -> Option<Window> {
        if self.targets.contains(&c) {
            self.windows.get(&c).copied()
        } else {
            None
        }
    }

    /// Earliest window start over all targets.
    pub fn first_start(&self) -> Option<f64> {
        self.targets.iter().filter_map(|c| self.windows.get(c)).map(|w| w.t_start).reduce(f64::min)
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.targets.iter().any(|&c| self.window(c).is_some_and(|w| w.contains(t)))
    }
}

/// The fixed attacker resources: all three controllers, 2 s windows, either
/// scheduled one after another (PV 5-7 s, BES 9-11 s, EV 13-15 s) or all at 5-7 s.
pub fn schedule_default(kind: AttackKind, timing: Timing) -> AttackSpec {
    let windows: BTreeMap<Channel, Window> = match timing {
        Timing::Diff => [
            (Channel::Pv, Window::new(5.0, 7.0)),
            (Channel::Bes, Window::new(9.0, 11.0)),
            (Channel::Ev, Window::new(13.0, 15.0)),
        ]
        .into(),
        Timing::Sim => Channel::ALL.iter().map(|&c| (c, Window::new(5.0, 7.0))).collect(),
    };
    let sign_map: BTreeMap<Channel, f64> = match kind {
        AttackKind::TypeI => [(Channel::Pv, 1.0), (Channel::Bes, -1.0), (Channel::Ev, -1.0)].into(),
        AttackKind::TypeII => Channel::ALL.iter().map(|&c| (c, -1.0)).collect(),
    };
    AttackSpec {
        targets: Channel::ALL.to_vec(),
        timing,
        windows,
        kind,
        sign_map,
        duration: 2.0,
        prn_low: 0.0,
        prn_high: 1.0,
        prn_rep: 10,
        constant_c: 0.5,
        seed: DEFAULT_ATTACK_SEED,
    }
}

/// Sample-and-hold pseudorandom sequence.
#[derive(Debug, Clone)]
pub struct PrnStream {
    rng: SimRng,
    low: f64,
    high: f64,
    rep: usize,
    samples: Vec<f64>,
}

impl PrnStream {
    pub fn new(seed: u64, low: f64, high: f64, rep: usize) -> Self {
        Self { rng: SimRng::new(seed), low, high, rep: rep.max(1), samples: Vec::new() }
    }

    /// Value held at control step `k` (counted from the stream start).
    pub fn value(&mut self, k: usize) -> f64 {
        let j = k / self.rep;
        while self.samples.len() <= j {
            let x = self.rng.uniform(self.low, self.high);
            self.samples.push(x);
        }
        self.samples[j]
    }
}

pub fn prn_stream(seed: u64, low: f64, high: f64, rep: usize, n_steps: usize) -> Vec<f64> {
    let mut s = PrnStream::new(seed, low, high, rep);
    (0..n_steps).map(|k| s.value(k)).collect()
}

/// Per-run attack state: one PRN stream per target, indexed by the control
/// step inside that target's window.
#[derive(Debug, Clone)]
pub struct AttackState {
    spec: AttackSpec,
    ts: f64,
    streams: BTreeMap<Channel, PrnStream>,
}

impl AttackState {
    pub fn new(spec: AttackSpec, ts_control: f64) -> Self {
        let streams = spec
            .targets
            .iter()
            .map(|&c| {
                let seed = crate::rng::splitmix64(spec.seed ^ (c.index() as u64 + 1));
                (c, PrnStream::new(seed, spec.prn_low, spec.prn_high, spec.prn_rep))
            })
            .collect();
        Self { spec, ts: ts_control, streams }
    }

    pub fn spec(&self) -> &AttackSpec {
        &self.spec
    }

    /// Attack value added to channel `c` at time `t`, if its window is open.
    pub fn offset(&mut self, c: Channel, t: f64) -> Option<f64> {
        let w = self.spec.window(c)?;
        if !w.contains(t) {
            return None;
        }
        let sign = self.spec.sign_map.get(&c).copied().unwrap_or(1.0);
        let value = match self.spec.kind {
            AttackKind::TypeII => self.spec.constant_c,
            AttackKind::TypeI => {
                let k = ((t - w.t_start) / self.ts + 1e-6).floor().max(0.0) as usize;
                self.streams.get_mut(&c)?.value(k)
            }
        };
        Some(sign * value)
    }

    pub fn corrupt(&mut self, duties: &DutySet, t: f64) -> DutySet {
        let mut out = *duties;
        for c in Channel::ALL {
            if let Some(off) = self.offset(c, t) {
                out.set(c, (duties.get(c) + off).clamp(0.0, 1.0));
            }
        }
        out
    }
}

pub fn corrupt(duties: &DutySet, t: f64, state: &mut AttackState) -> DutySet {
    state.corrupt(duties, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOM: DutySet = crate::plant::NOMINAL_DUTY;

    #[test]
    fn prn_holds_for_rep_steps() {
        let s = prn_stream(0xDEADBEEF, 0.0, 1.0, 10, 30);
        assert!(s[..10].iter().all(|&x| x == s[0]));
        assert!(s[10..20].iter().all(|&x| x == s[10]));
        assert_ne!(s[0], s[10]);
        assert_ne!(s[10], s[20]);
    }

    #[test]
    fn prn_degenerate_bounds() {
        let eps = 1e-9;
        for x in prn_stream(3, 0.4, 0.4 + eps, 1, 1000) {
            assert!((0.4..0.4 + eps).contains(&x));
        }
    }

    #[test]
    fn prn_mean_is_half() {
        let s = prn_stream(11, 0.0, 1.0, 1, 100_000);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean={mean}");
    }

    #[test]
    fn type_two_on_pv_clamps_to_zero() {
        let spec = schedule_default(AttackKind::TypeII, Timing::Diff);
        let mut st = AttackState::new(spec, 0.1);
        let out = st.corrupt(&NOM, 5.5);
        assert_eq!(out.d_pv, 0.0);
        assert_eq!(out.d_bes, NOM.d_bes);
        assert_eq!(out.d_ev, NOM.d_ev);
    }

    #[test]
    fn outside_windows_is_identity() {
        let spec = schedule_default(AttackKind::TypeI, Timing::Diff);
        let mut st = AttackState::new(spec, 0.1);
        for t in [0.0, 4.9, 7.0, 8.0, 11.0, 12.5, 15.0, 16.9] {
            assert_eq!(st.corrupt(&NOM, t), NOM, "t={t}");
        }
    }

    #[test]
    fn type_one_on_bes_subtracts_held_sample() {
        let spec = schedule_default(AttackKind::TypeI, Timing::Diff);
        let mut st = AttackState::new(spec.clone(), 0.1);
        let seed = crate::rng::splitmix64(spec.seed ^ 2);
        let expected = prn_stream(seed, 0.0, 1.0, 10, 1)[0];
        let out = st.corrupt(&NOM, 9.0);
        assert!((out.d_bes - (0.705 - expected).clamp(0.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn default_schedules() {
        let d = schedule_default(AttackKind::TypeI, Timing::Diff);
        d.validate().unwrap();
        assert_eq!(d.windows[&Channel::Pv], Window::new(5.0, 7.0));
        assert_eq!(d.windows[&Channel::Bes], Window::new(9.0, 11.0));
        assert_eq!(d.windows[&Channel::Ev], Window::new(13.0, 15.0));
        let s = schedule_default(AttackKind::TypeII, Timing::Sim);
        s.validate().unwrap();
        assert!(s.windows.values().all(|w| *w == Window::new(5.0, 7.0)));
        for spec in [d, s] {
            assert_eq!(spec.targets.len(), 3);
            assert!(spec.windows.values().all(|w| (w.len() - 2.0).abs() < 1e-12));
        }
    }

    #[test]
    fn validate_rejects_overlap_and_bad_length() {
        let mut d = schedule_default(AttackKind::TypeI, Timing::Diff);
        d.windows.insert(Channel::Bes, Window::new(6.0, 8.0));
        assert!(d.validate().is_err());
        let mut s = schedule_default(AttackKind::TypeII, Timing::Sim);
        s.windows.insert(Channel::Ev, Window::new(5.0, 6.5));
        assert!(s.validate().is_err());
    }
}
