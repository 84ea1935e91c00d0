use evcs_core::attack::{schedule_default, AttackKind, AttackState, Timing};
use evcs_core::control::{pi_step, PiState};
use evcs_core::detect::Verdict;
use evcs_core::mitigate::{route, Method};
use evcs_core::plant::DutySet;
use evcs_core::rng::SimRng;
use evcs_core::td3::{select_action, AgentBundle, AgentConfig, Observation, ReplayBuffer, Transition};
use evcs_core::Channel;
use proptest::prelude::*;

fn channel() -> impl Strategy<Value = Channel> {
    prop_oneof![Just(Channel::Pv), Just(Channel::Bes), Just(Channel::Ev)]
}

fn method() -> impl Strategy<Value = Method> {
    prop_oneof![Just(Method::LegacyOnly), Just(Method::BruteForce), Just(Method::Clone), Just(Method::Td3)]
}

proptest! {
    #[test]
    fn pi_output_stays_within_limits(
        kp in 0.0..1.0f64,
        ki in 0.0..1.0f64,
        errors in prop::collection::vec(-1e3..1e3f64, 1..200),
    ) {
        let mut s = PiState::new(kp, ki, 0.0, 1.0);
        for e in errors {
            let (next, d) = pi_step(&s, e, 0.1);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!(next.integ.is_finite());
            s = next;
        }
    }

    #[test]
    fn corruption_is_identity_outside_windows(
        sim in any::<bool>(),
        type_one in any::<bool>(),
        k in 0usize..170,
        d in (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64),
    ) {
        let kind = if type_one { AttackKind::TypeI } else { AttackKind::TypeII };
        let spec = schedule_default(kind, if sim { Timing::Sim } else { Timing::Diff });
        let mut st = AttackState::new(spec.clone(), 0.1);
        let t = k as f64 * 0.1;
        let duties = DutySet::new(d.0, d.1, d.2);
        let out = st.corrupt(&duties, t);
        for c in Channel::ALL {
            let open = spec.window(c).is_some_and(|w| w.contains(t));
            if !open {
                prop_assert_eq!(out.get(c), duties.get(c));
            }
            prop_assert!((0.0..=1.0).contains(&out.get(c)));
        }
    }

    #[test]
    fn actions_respect_bounds(
        c in channel(),
        seed in 0u64..1000,
        e in -1e4..1e4f64,
        e_int in -1e4..1e4f64,
        explore in any::<bool>(),
    ) {
        let cfg = AgentConfig::for_agent(c);
        let b = AgentBundle::new(c, cfg, seed);
        let mut rng = SimRng::new(seed);
        let obs = Observation { e, e_int };
        let a = select_action(&b, &obs, explore, &mut rng);
        prop_assert!(a >= cfg.a_low && a <= cfg.a_high);
        let p = b.policy().act(&obs);
        prop_assert!(p >= cfg.a_low && p <= cfg.a_high);
    }

    #[test]
    fn buffer_keeps_newest_in_fifo_order(cap in 1usize..50, n in 0usize..200) {
        let mut b = ReplayBuffer::new(cap);
        for i in 0..n {
            b.push(Transition { s: [i as f64, 0.0], a: 0.0, r: 0.0, s_next: [0.0; 2], d: false, steps: 1 });
        }
        let kept: Vec<f64> = b.iter_oldest_first().map(|t| t.s[0]).collect();
        let expected: Vec<f64> = (n.saturating_sub(cap)..n).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn routed_duty_is_a_valid_duty(
        c in channel(),
        attack in any::<bool>(),
        m in method(),
        legacy in -5.0..5.0f64,
        mitig in prop::option::of(-5.0..5.0f64),
    ) {
        let v = if attack { Verdict::Attack } else { Verdict::Normal };
        if let Ok(d) = route(c, v, m, legacy, mitig) {
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
