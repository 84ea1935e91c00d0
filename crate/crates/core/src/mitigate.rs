//! Per-channel routing between the legacy control path and a mitigation
//! source, driven by detector verdicts.
//!
//! Each control step runs: legacy controllers, attack corruption of their
//! outputs, detection on the corrupted path, routing, plant step. While a
//! channel is mitigated its legacy controller tracks the routed duty, so
//! handback is bumpless and the detector sees the duty the plant receives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{AttackSpec, AttackState};
use crate::control::{Controller, ControllerGains, LegacySet, References};
use crate::detect::{DetectorBank, DetectorConfig, Verdict};
use crate::plant::{self, DutySet, PlantError, PlantParams, PlantState};
use crate::td3::{observe, Observation, PolicySet};
use crate::Channel;

#[derive(Debug, Error)]
pub enum MitigateError {
    #[error("strategy for {0} is td3 but no trained agent was supplied")]
    MissingAgent(Channel),
    #[error("no mitigation duty available for {0}")]
    MissingSource(Channel),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    /// The plant diverged; `log` holds every step completed before it.
    #[error("plant diverged after {} steps: {source}", log.len())]
    Diverged { log: Box<RunLog>, source: PlantError },
}

/// Mitigation source used for one channel while it is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LegacyOnly,
    BruteForce,
    Clone,
    Td3,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LegacyOnly, Method::BruteForce, Method::Clone, Method::Td3];

    pub fn name(self) -> &'static str {
        match self {
            Method::LegacyOnly => "legacy_only",
            Method::BruteForce => "brute_force",
            Method::Clone => "clone",
            Method::Td3 => "td3",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| format!("unknown strategy '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub pv: Method,
    pub bes: Method,
    pub ev: Method,
}

impl Strategy {
    pub fn uniform(m: Method) -> Self {
        Self { pv: m, bes: m, ev: m }
    }

    pub fn get(&self, c: Channel) -> Method {
        match c {
            Channel::Pv => self.pv,
            Channel::Bes => self.bes,
            Channel::Ev => self.ev,
        }
    }

    /// Checks that every `Td3` channel has a policy.
    pub fn check_agents(&self, agents: &PolicySet) -> Result<(), MitigateError> {
        for c in Channel::ALL {
            if self.get(c) == Method::Td3 && agents.get(c).is_none() {
                return Err(MitigateError::MissingAgent(c));
            }
        }
        Ok(())
    }
}

/// Fixed duties applied by the brute-force method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BruteForceTable {
    pub d_pv: f64,
    pub d_bes: f64,
    pub d_ev: f64,
}

impl Default for BruteForceTable {
    fn default() -> Self {
        Self { d_pv: 0.2, d_bes: 0.7, d_ev: 0.55 }
    }
}

impl BruteForceTable {
    pub fn get(&self, c: Channel) -> f64 {
        match c {
            Channel::Pv => self.d_pv,
            Channel::Bes => self.d_bes,
            Channel::Ev => self.d_ev,
        }
    }

    pub fn validate(&self) -> Result<(), MitigateError> {
        for c in Channel::ALL {
            let d = self.get(c);
            if !(0.0..=1.0).contains(&d) {
                return Err(MitigateError::Scenario(format!("brute-force duty for {c} outside [0, 1]: {d}")));
            }
        }
        Ok(())
    }
}

/// Duty actually sent to the converter of `channel`. Output is in [0, 1].
pub fn route(
    channel: Channel,
    verdict: Verdict,
    method: Method,
    legacy_duty: f64,
    mitig_duty: Option<f64>,
) -> Result<f64, MitigateError> {
    let d = match (verdict, method) {
        (Verdict::Normal, _) | (Verdict::Attack, Method::LegacyOnly) => legacy_duty,
        (Verdict::Attack, Method::Td3) => mitig_duty.ok_or(MitigateError::MissingAgent(channel))?,
        (Verdict::Attack, _) => mitig_duty.ok_or(MitigateError::MissingSource(channel))?,
    };
    Ok(if d.is_finite() { d.clamp(0.0, 1.0) } else { 0.0 })
}

/// Everything a closed-loop run needs apart from strategy and agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: PlantParams,
    pub refs: References,
    pub gains: ControllerGains,
    pub attack: Option<AttackSpec>,
    pub detector: DetectorConfig,
    pub brute_force: BruteForceTable,
    /// Simulated seconds.
    pub duration: f64,
}

impl Scenario {
    pub fn steps(&self) -> usize {
        (self.duration / self.params.ts_control).round() as usize
    }

    pub fn validate(&self) -> Result<(), MitigateError> {
        self.params.validate()?;
        self.detector.validate().map_err(MitigateError::Scenario)?;
        self.brute_force.validate()?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(MitigateError::Scenario("duration must be positive".into()));
        }
        if let Some(a) = &self.attack {
            a.validate().map_err(|e| MitigateError::Scenario(e.to_string()))?;
        }
        Ok(())
    }
}

/// Where a routed duty came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Legacy,
    Mitigation,
}

/// One control step. Duties are those computed at `state.t` and applied over
/// the following control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub state: PlantState,
    pub legacy: DutySet,
    pub attacked: DutySet,
    pub routed: DutySet,
    /// Raw detector verdicts; `source` may stay on mitigation after these clear.
    pub verdict: [Verdict; 3],
    pub source: [Source; 3],
}

impl LogRow {
    pub fn t(&self) -> f64 {
        self.state.t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub ts: f64,
    pub strategy: Strategy,
    pub rows: Vec<LogRow>,
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of source changes on `c` over the whole run.
    pub fn switches(&self, c: Channel) -> usize {
        self.rows.windows(2).filter(|w| w[0].source[c.index()] != w[1].source[c.index()]).count()
    }
}

/// A channel's active mitigation source.
enum Active {
    Fixed(f64),
    Clone(Controller),
    Agent,
}

/// Closed loop from the nominal operating point for `scenario.duration`.
pub fn run_mitigated(scenario: &Scenario, strategy: &Strategy, agents: &PolicySet) -> Result<RunLog, MitigateError> {
    scenario.validate()?;
    strategy.check_agents(agents)?;
    let p = &scenario.params;
    let ts = p.ts_control;
    let (mut x, nominal_duty) = plant::nominal_operating_point(p)?;
    let mut legacy = LegacySet::nominal(&scenario.gains, &nominal_duty);
    let mut attack = scenario.attack.clone().map(|a| AttackState::new(a, ts));
    let mut detectors = DetectorBank::default();
    let mut active: [Option<Active>; 3] = [None, None, None];
    let mut obs = [Observation::default(); 3];
    for c in Channel::ALL {
        obs[c.index()] = observe(c, &x, &scenario.refs, 0.0, ts);
    }
    let mut prev_routed = nominal_duty;
    let mut log = RunLog { ts, strategy: *strategy, rows: Vec::with_capacity(scenario.steps()) };

    for k in 0..scenario.steps() {
        let t = k as f64 * ts;
        x.t = t;
        let mut row = LogRow {
            state: x,
            legacy: DutySet::new(0.0, 0.0, 0.0),
            attacked: DutySet::new(0.0, 0.0, 0.0),
            routed: DutySet::new(0.0, 0.0, 0.0),
            verdict: [Verdict::Normal; 3],
            source: [Source::Legacy; 3],
        };
        for c in Channel::ALL {
            let i = c.index();
            let method = strategy.get(c);
            let ctrl = legacy.get_mut(c);
            let offset = attack.as_mut().and_then(|a| a.offset(c, t));
            let corrupt = |d: f64| offset.map_or(d, |o| (d + o).clamp(0.0, 1.0));
            let tracking = active[i].is_some();
            // A tracking controller was re-seeded to the previous routed duty.
            let mut d_leg = if tracking { prev_routed.get(c) } else { ctrl.update(&x, &scenario.refs, ts) };
            let detected = detectors.classify(c, x.p_pv, corrupt(d_leg), &scenario.detector);
            // An engaged source is handed back only once power and the legacy path are both in band.
            let hold = tracking && scenario.detector.any_out_of_band(c, x.p_pv, corrupt(d_leg));
            let verdict = if hold { Verdict::Attack } else { detected };

            if verdict.is_attack() && method != Method::LegacyOnly && active[i].is_none() {
                active[i] = Some(match method {
                    Method::BruteForce => Active::Fixed(scenario.brute_force.get(c)),
                    Method::Clone => Active::Clone(ctrl.clone_fresh()),
                    _ => Active::Agent,
                });
            } else if !verdict.is_attack() && tracking {
                active[i] = None;
                d_leg = ctrl.update(&x, &scenario.refs, ts);
            }
            let legacy_path = (d_leg, corrupt(d_leg));
            let mitig = match active[i].as_mut() {
                Some(Active::Fixed(d)) => Some(*d),
                Some(Active::Clone(cl)) => Some(cl.update(&x, &scenario.refs, ts)),
                Some(Active::Agent) => agents.get(c).map(|pol| pol.act(&obs[i])),
                None => None,
            };
            let routed = route(c, verdict, method, legacy_path.1, mitig)?;
            if active[i].is_some() {
                ctrl.resync(routed, &x, &scenario.refs);
            }
            row.legacy.set(c, legacy_path.0);
            row.attacked.set(c, legacy_path.1);
            row.routed.set(c, routed);
            row.verdict[i] = detected;
            row.source[i] = if active[i].is_some() { Source::Mitigation } else { Source::Legacy };
        }
        log.rows.push(row);
        prev_routed = row.routed;

        match plant::step(&x, &row.routed, p) {
            Ok(next) => x = next,
            Err(source) => return Err(MitigateError::Diverged { log: Box::new(log), source }),
        }
        for c in Channel::ALL {
            let i = c.index();
            obs[i] = observe(c, &x, &scenario.refs, obs[i].e_int, ts);
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{schedule_default, AttackKind, Timing};

    fn scenario(attack: Option<AttackSpec>) -> Scenario {
        Scenario {
            params: PlantParams::calibrated_default(),
            refs: References::default(),
            gains: ControllerGains::default(),
            attack,
            detector: DetectorConfig::default(),
            brute_force: BruteForceTable::default(),
            duration: 17.0,
        }
    }

    #[test]
    fn normal_verdict_passes_legacy_through() {
        for m in Method::ALL {
            assert_eq!(route(Channel::Pv, Verdict::Normal, m, 0.2004, Some(0.9)).unwrap(), 0.2004);
        }
    }

    #[test]
    fn brute_force_table_values() {
        let t = BruteForceTable::default();
        assert_eq!(route(Channel::Bes, Verdict::Attack, Method::BruteForce, 0.1, Some(t.d_bes)).unwrap(), 0.7);
        assert_eq!((t.d_pv, t.d_ev), (0.2, 0.55));
    }

    #[test]
    fn route_clamps_and_reports_missing_sources() {
        assert_eq!(route(Channel::Ev, Verdict::Attack, Method::Clone, 0.5, Some(1.7)).unwrap(), 1.0);
        assert!(matches!(route(Channel::Ev, Verdict::Attack, Method::Td3, 0.5, None), Err(MitigateError::MissingAgent(Channel::Ev))));
        assert!(matches!(route(Channel::Pv, Verdict::Attack, Method::Clone, 0.5, None), Err(MitigateError::MissingSource(Channel::Pv))));
        assert_eq!(route(Channel::Pv, Verdict::Attack, Method::LegacyOnly, 0.83, None).unwrap(), 0.83);
    }

    #[test]
    fn td3_without_agent_is_rejected_up_front() {
        let r = run_mitigated(&scenario(None), &Strategy::uniform(Method::Td3), &PolicySet::default());
        assert!(matches!(r, Err(MitigateError::MissingAgent(Channel::Pv))));
    }

    #[test]
    fn no_attack_matches_legacy_only() {
        let s = scenario(None);
        let base = run_mitigated(&s, &Strategy::uniform(Method::LegacyOnly), &PolicySet::default()).unwrap();
        for m in [Method::BruteForce, Method::Clone] {
            let log = run_mitigated(&s, &Strategy::uniform(m), &PolicySet::default()).unwrap();
            assert_eq!(log.rows, base.rows);
        }
        assert_eq!(base.len(), 170);
    }

    #[test]
    fn brute_force_is_constant_inside_windows() {
        let spec = schedule_default(AttackKind::TypeII, Timing::Sim);
        let s = scenario(Some(spec.clone()));
        let log = run_mitigated(&s, &Strategy::uniform(Method::BruteForce), &PolicySet::default()).unwrap();
        for c in Channel::ALL {
            let on: Vec<f64> =
                log.rows.iter().filter(|r| r.source[c.index()] == Source::Mitigation).map(|r| r.routed.get(c)).collect();
            assert!(!on.is_empty());
            assert!(on.iter().all(|&d| d == s.brute_force.get(c)), "{c}");
            assert!(log.switches(c) <= 2);
        }
    }

    #[test]
    fn clone_reads_only_plant_measurements() {
        let s = scenario(Some(schedule_default(AttackKind::TypeI, Timing::Diff)));
        let log = run_mitigated(&s, &Strategy::uniform(Method::Clone), &PolicySet::default()).unwrap();
        let (_, nominal) = plant::nominal_operating_point(&s.params).unwrap();
        let legacy = LegacySet::nominal(&s.gains, &nominal);
        for c in Channel::ALL {
            let i = c.index();
            let mut replica: Option<Controller> = None;
            for r in &log.rows {
                if r.source[i] == Source::Mitigation {
                    let cl = replica.get_or_insert_with(|| legacy.get(c).clone_fresh());
                    assert_eq!(cl.update(&r.state, &s.refs, s.params.ts_control).clamp(0.0, 1.0), r.routed.get(c));
                } else {
                    replica = None;
                }
            }
        }
    }

    #[test]
    fn legacy_only_still_logs_verdicts() {
        let s = scenario(Some(schedule_default(AttackKind::TypeII, Timing::Diff)));
        let log = run_mitigated(&s, &Strategy::uniform(Method::LegacyOnly), &PolicySet::default()).unwrap();
        for c in Channel::ALL {
            assert!(log.rows.iter().any(|r| r.verdict[c.index()].is_attack()));
            assert!(log.rows.iter().all(|r| r.source[c.index()] == Source::Legacy && r.routed.get(c) == r.attacked.get(c)));
        }
    }

    #[test]
    fn clone_restores_bus_voltage_within_five_seconds() {
        let mut spec = schedule_default(AttackKind::TypeII, Timing::Sim);
        for w in spec.windows.values_mut() {
            *w = crate::attack::Window::new(5.0, 15.0);
        }
        spec.duration = 10.0;
        let s = Scenario { duration: 16.0, ..scenario(Some(spec)) };
        let log = run_mitigated(&s, &Strategy::uniform(Method::Clone), &PolicySet::default()).unwrap();
        let refv = s.refs.v_bus_ref;
        let settled = log.rows.iter().filter(|r| r.t() >= 10.0 - 1e-9 && r.t() < 15.0);
        for r in settled {
            assert!((r.state.v_bus - refv).abs() < 0.01 * refv, "t={} v_bus={}", r.t(), r.state.v_bus);
            assert_eq!(r.source[Channel::Bes.index()], Source::Mitigation);
        }
    }
}
