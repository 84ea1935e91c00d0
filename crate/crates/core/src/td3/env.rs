//! Training environment: the plant with one channel driven by the learning
//! agent and the other two by legacy controllers or frozen policies.

use std::collections::{BTreeMap, VecDeque};

use super::{learn, observe, reward, select_action, AgentBundle, AgentConfig, Observation, Policy, Td3Error, Transition};
use crate::attack::{AttackKind, AttackSpec, AttackState, Timing, Window};
use crate::control::{ControllerGains, LegacySet, References};
use crate::plant::{self, DutySet, PlantError, PlantParams, PlantState};
use crate::rng::SimRng;
use crate::Channel;

/// Plant and legacy configuration shared by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub params: PlantParams,
    pub refs: References,
    pub gains: ControllerGains,
    pub nominal_state: PlantState,
    pub nominal_duty: DutySet,
}

impl EnvConfig {
    pub fn new(params: PlantParams, refs: References, gains: ControllerGains) -> Result<Self, PlantError> {
        let (nominal_state, nominal_duty) = plant::nominal_operating_point(&params)?;
        Ok(Self { params, refs, gains, nominal_state, nominal_duty })
    }

    pub fn calibrated_default() -> Result<Self, PlantError> {
        Self::new(PlantParams::calibrated_default(), References::default(), ControllerGains::default())
    }

    /// Nominal point with bus and battery voltages scaled by independent
    /// factors drawn from `1 +- spread`.
    pub fn perturbed_start(&self, spread: f64, rng: &mut SimRng) -> PlantState {
        let p = &self.params;
        let x = &self.nominal_state;
        let mut f = || 1.0 + rng.uniform(-spread, spread);
        let v_bus = x.v_bus * f();
        let il_bes = (x.v_bes * f() - p.bes_voc) / p.bes_rint;
        let il_ev = ((x.v_ev * f() - p.ev_voc) / p.ev_rint).max(0.0);
        PlantState::from_dynamic(0.0, v_bus, il_bes, il_ev, self.nominal_duty.d_pv, p)
    }
}

/// Frozen policies per channel: peers during training, mitigation sources
/// at run time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicySet {
    pub pv: Option<Policy>,
    pub bes: Option<Policy>,
    pub ev: Option<Policy>,
}

impl PolicySet {
    pub fn get(&self, c: Channel) -> Option<&Policy> {
        match c {
            Channel::Pv => self.pv.as_ref(),
            Channel::Bes => self.bes.as_ref(),
            Channel::Ev => self.ev.as_ref(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: AgentBundle,
    /// Undiscounted raw return of every training episode over the steps the
    /// agent controlled.
    pub returns: Vec<f64>,
    /// Episodes cut short by plant divergence.
    pub divergences: usize,
    pub early_stopped: bool,
}

struct EpisodeResult {
    ret: f64,
    diverged: bool,
}

/// Random single-channel corruption window for one training episode.
fn disturbance(which: Channel, cfg: &AgentConfig, ts: f64, rng: &mut SimRng) -> AttackState {
    let n = cfg.episode_steps;
    let len_steps = (cfg.disturbance_len / ts).round() as usize;
    let margin = 10.min(n / 4);
    let hi = n.saturating_sub(len_steps + margin).max(margin + 1);
    let k0 = margin + rng.below(hi - margin);
    let t0 = k0 as f64 * ts;
    let kind = if rng.unit() < 0.5 { AttackKind::TypeI } else { AttackKind::TypeII };
    let sign = if rng.unit() < 0.5 { 1.0 } else { -1.0 };
    let spec = AttackSpec {
        targets: vec![which],
        timing: Timing::Sim,
        windows: BTreeMap::from([(which, Window::new(t0, t0 + len_steps as f64 * ts))]),
        kind,
        sign_map: BTreeMap::from([(which, sign)]),
        duration: len_steps as f64 * ts,
        prn_low: 0.0,
        prn_high: 1.0,
        prn_rep: 10,
        constant_c: 0.5,
        seed: rng.next_u64(),
    };
    AttackState::new(spec, ts)
}

/// What drives each channel during an episode.
enum Driver<'a> {
    Learner,
    Frozen(&'a Policy),
    Legacy,
}

/// One episode. When `learning`, transitions are stored and a gradient
/// step follows every environment step.
fn run_episode(
    bundle: &mut AgentBundle,
    env: &EnvConfig,
    peers: &PolicySet,
    learning: bool,
    disturbed: bool,
    rng: &mut SimRng,
) -> Result<EpisodeResult, Td3Error> {
    let cfg = bundle.config;
    let which = bundle.which;
    let ts = env.params.ts_control;
    let mut x = env.perturbed_start(cfg.init_perturb, rng);
    let mut legacy = LegacySet::nominal(&env.gains, &env.nominal_duty);
    let mut attack = if disturbed { Some(disturbance(which, &cfg, ts, rng)) } else { None };
    let drivers: Vec<Driver> = Channel::ALL
        .iter()
        .map(|&c| {
            if c == which {
                Driver::Learner
            } else if let Some(p) = peers.get(c) {
                Driver::Frozen(p)
            } else {
                Driver::Legacy
            }
        })
        .collect();

    let mut e_int = [0.0; 3];
    let mut obs = [Observation::default(); 3];
    for c in Channel::ALL {
        obs[c.index()] = observe(c, &x, &env.refs, 0.0, ts);
        e_int[c.index()] = obs[c.index()].e_int;
    }

    let mut pending: VecDeque<([f64; 2], f64, f64)> = VecDeque::with_capacity(cfg.n_step);
    let mut ret = 0.0;
    let mut diverged = false;
    let me = which.index();

    for k in 0..cfg.episode_steps {
        let t = k as f64 * ts;
        let mut duties = DutySet::new(0.0, 0.0, 0.0);
        for c in Channel::ALL {
            let d = match drivers[c.index()] {
                Driver::Learner if learning && bundle.env_steps < cfg.warmup as u64 => {
                    let d = legacy.get_mut(c).update(&x, &env.refs, ts);
                    (d + bundle.explore_std() * rng.normal()).clamp(cfg.a_low, cfg.a_high)
                }
                Driver::Learner => select_action(bundle, &obs[me], learning, rng),
                Driver::Frozen(p) => p.act(&obs[c.index()]),
                Driver::Legacy => legacy.get_mut(c).update(&x, &env.refs, ts),
            };
            duties.set(c, d);
        }
        let applied = match attack.as_mut() {
            Some(a) => a.corrupt(&duties, t),
            None => duties,
        };
        let a_applied = applied.get(which);
        let s = obs[me].as_array();
        let overridden = attack.as_ref().and_then(|a| a.spec().window(which)).is_some_and(|w| w.contains(t));
        if learning && overridden {
            // Costs incurred while the output is overridden are exogenous:
            // cut pending records at the last controlled state.
            while !pending.is_empty() {
                push_aggregate(bundle, &pending, s, false);
                pending.pop_front();
            }
        }

        let next = match plant::step(&x, &applied, &env.params) {
            Ok(n) => n,
            Err(PlantError::NumericalDivergence { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        x = next;
        for c in Channel::ALL {
            obs[c.index()] = observe(c, &x, &env.refs, e_int[c.index()], ts);
            e_int[c.index()] = obs[c.index()].e_int;
        }
        let r = reward(&obs[me], a_applied, &cfg);
        if !overridden {
            ret += r;
        }

        if learning && !overridden {
            pending.push_back((s, a_applied, r));
            if pending.len() == cfg.n_step {
                push_aggregate(bundle, &pending, obs[me].as_array(), false);
                pending.pop_front();
            }
        }
        if learning {
            bundle.env_steps += 1;
            learn(bundle, rng)?;
        }
    }

    if learning {
        // Remaining records bootstrap from the final state with fewer steps,
        // or not at all after divergence.
        let last = obs[me].as_array();
        while !pending.is_empty() {
            push_aggregate(bundle, &pending, last, diverged);
            pending.pop_front();
        }
    }
    Ok(EpisodeResult { ret, diverged })
}

fn push_aggregate(bundle: &mut AgentBundle, pending: &VecDeque<([f64; 2], f64, f64)>, s_next: [f64; 2], d: bool) {
    let gamma = bundle.config.gamma;
    let mut r = 0.0;
    let mut g = 1.0;
    for &(_, _, ri) in pending {
        r += g * ri;
        g *= gamma;
    }
    let (s, a, _) = pending[0];
    let t = Transition { s, a, r, s_next, d, steps: pending.len() as u32 };
    if t.is_finite() {
        bundle.buffer.push(t);
    }
}

fn training_loop(
    mut bundle: AgentBundle,
    env: &EnvConfig,
    peers: &PolicySet,
    episodes: usize,
    seed: u64,
) -> Result<TrainOutcome, Td3Error> {
    bundle.config.validate()?;
    let cfg = bundle.config;
    let mut rng = SimRng::fork(seed, 0x7D3 + 31 * bundle.which.index() as u64 + bundle.episodes);
    let mut returns = Vec::with_capacity(episodes);
    let mut divergences = 0;
    let mut early_stopped = false;
    for _ in 0..episodes {
        let res = run_episode(&mut bundle, env, peers, true, true, &mut rng)?;
        bundle.episodes += 1;
        returns.push(res.ret);
        divergences += res.diverged as usize;
        if returns.len() >= cfg.stop_window {
            let tail = &returns[returns.len() - cfg.stop_window..];
            if tail.iter().sum::<f64>() / cfg.stop_window as f64 >= cfg.stop_threshold {
                early_stopped = true;
                break;
            }
        }
    }
    Ok(TrainOutcome { bundle, returns, divergences, early_stopped })
}

/// Train a fresh agent for `which` against `peers` (legacy controllers where absent).
pub fn train_agent(
    which: Channel,
    env: &EnvConfig,
    peers: &PolicySet,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<TrainOutcome, Td3Error> {
    let bundle = AgentBundle::new(which, *cfg, seed);
    training_loop(bundle, env, peers, cfg.max_episodes, seed)
}

/// Continue training an existing bundle for `cfg.retrain_episodes` episodes.
pub fn fine_tune_agent(bundle: AgentBundle, env: &EnvConfig, peers: &PolicySet, seed: u64) -> Result<TrainOutcome, Td3Error> {
    let n = bundle.config.retrain_episodes;
    training_loop(bundle, env, peers, n, seed)
}

/// Mean raw return of the deterministic policy over `episodes` seeded runs.
/// The same `seed` yields the same start states and disturbances.
pub fn evaluate(bundle: &AgentBundle, env: &EnvConfig, peers: &PolicySet, episodes: usize, seed: u64) -> Result<f64, Td3Error> {
    let mut b = bundle.clone();
    let mut rng = SimRng::fork(seed, 0xE7A1);
    let mut total = 0.0;
    for _ in 0..episodes {
        total += run_episode(&mut b, env, peers, false, true, &mut rng)?.ret;
    }
    Ok(total / episodes.max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub pv: TrainOutcome,
    pub bes: TrainOutcome,
    /// EV agent trained against legacy peers.
    pub ev_independent: TrainOutcome,
    /// EV agent after fine-tuning against the trained PV and BES policies.
    pub ev: TrainOutcome,
}

/// PV, BES and EV trained independently against legacy peers, then EV
/// fine-tuned with the trained PV and BES policies in place.
pub fn curriculum(
    env: &EnvConfig,
    cfg_for: impl Fn(Channel) -> AgentConfig,
    seed: u64,
) -> Result<CurriculumOutcome, Td3Error> {
    let none = PolicySet::default();
    let pv = train_agent(Channel::Pv, env, &none, &cfg_for(Channel::Pv), seed)?;
    let bes = train_agent(Channel::Bes, env, &none, &cfg_for(Channel::Bes), seed)?;
    let ev_independent = train_agent(Channel::Ev, env, &none, &cfg_for(Channel::Ev), seed)?;
    let peers = PolicySet { pv: Some(pv.bundle.policy()), bes: Some(bes.bundle.policy()), ev: None };
    let ev = fine_tune_agent(ev_independent.bundle.clone(), env, &peers, seed)?;
    Ok(CurriculumOutcome { pv, bes, ev_independent, ev })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(which: Channel) -> AgentConfig {
        AgentConfig { max_episodes: 2, episode_steps: 40, batch: 16, warmup: 20, ..AgentConfig::for_agent(which) }
    }

    #[test]
    fn perturbed_start_stays_within_spread() {
        let env = EnvConfig::calibrated_default().unwrap();
        let mut rng = SimRng::new(1);
        for _ in 0..100 {
            let x = env.perturbed_start(0.02, &mut rng);
            assert!((x.v_bus / env.nominal_state.v_bus - 1.0).abs() <= 0.02 + 1e-12);
            assert!((x.v_bes / env.nominal_state.v_bes - 1.0).abs() <= 0.02 + 1e-9);
        }
    }

    #[test]
    fn short_training_is_deterministic_and_finite() {
        let env = EnvConfig::calibrated_default().unwrap();
        let a = train_agent(Channel::Bes, &env, &PolicySet::default(), &quick(Channel::Bes), 5).unwrap();
        let b = train_agent(Channel::Bes, &env, &PolicySet::default(), &quick(Channel::Bes), 5).unwrap();
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.bundle.actor, b.bundle.actor);
        assert!(a.bundle.is_finite());
        assert!(a.returns.iter().all(|r| *r <= 0.0));
        assert!(a.bundle.updates > 0);
    }

    #[test]
    fn n_step_aggregation_discounts_and_truncates() {
        let mut b = AgentBundle::new(Channel::Pv, AgentConfig { gamma: 0.5, ..AgentConfig::default() }, 0);
        let q: VecDeque<_> = [([0.0, 0.0], 0.1, -1.0), ([1.0, 0.0], 0.2, -2.0), ([2.0, 0.0], 0.3, -4.0)].into();
        push_aggregate(&mut b, &q, [9.0, 9.0], false);
        let t = *b.buffer.iter_oldest_first().next().unwrap();
        assert_eq!(t.r, -1.0 - 0.5 * 2.0 - 0.25 * 4.0);
        assert_eq!((t.steps, t.a, t.s_next), (3, 0.1, [9.0, 9.0]));
    }
}
