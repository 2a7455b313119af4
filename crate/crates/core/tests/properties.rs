use hqnet::control::CentralStateMatrix;
use hqnet::distribution::{distribute, ResidualPolicy, Scheme, SegmentEnv, Timing};
use hqnet::engine::{run, EngineConfig, FaultPlan};
use hqnet::kernel::{chain_teleport_fidelity, Gate, Qubit, StateRegister};
use hqnet::noise::{channel_quality, decohere_fidelity, epr_distribution_prob, ComponentProbs, EnvParams};
use hqnet::routing::{cer_choose, cer_route, greedy_route, ScoredPath, PathMiddle};
use hqnet::topology::{build_dspt_dert, CellularLayout};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gate() -> impl Strategy<Value = (Gate, usize, usize)> {
    let g = prop_oneof![
        Just(Gate::H),
        Just(Gate::X),
        Just(Gate::Z),
        Just(Gate::Cnot),
    ];
    (g, 0usize..4, 0usize..4)
}

fn payload() -> impl Strategy<Value = (Complex64, Complex64)> {
    (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(t, p)| {
        (
            Complex64::new((t / 2.0).cos(), 0.0),
            Complex64::from_polar((t / 2.0).sin(), p),
        )
    })
}

fn components() -> impl Strategy<Value = ComponentProbs> {
    (0.0..=1.0, 0.0..=1.0, 0.0..=1.0, 0.0..=1.0, 0.0..=1.0).prop_map(|(a, b, c, d, e)| {
        ComponentProbs {
            p_w: a,
            p_qchannel: b,
            p_bsm: c,
            p_p_swap: d,
            p_a_swap: e,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_preserve_norm(ops in prop::collection::vec(gate(), 1..40), (a, b) in payload()) {
        let mut r = StateRegister::new(4).unwrap();
        r.load_qubit(Qubit(0), a, b).unwrap();
        for (g, i, j) in ops {
            let targets: Vec<Qubit> = if g.arity() == 1 {
                vec![Qubit(i)]
            } else if i == j {
                continue;
            } else {
                vec![Qubit(i), Qubit(j)]
            };
            r.apply(g, &targets).unwrap();
            prop_assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_then_teleport_is_exact(hops in 0usize..=4, (a, b) in payload(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = chain_teleport_fidelity(hops, a, b, &mut rng).unwrap();
        prop_assert!((f - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distribution_prob_monotone(c in components(), which in 0usize..5, bump in 0.0..1.0f64) {
        let p = epr_distribution_prob(&c).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        let mut d = c;
        let field = match which {
            0 => &mut d.p_w,
            1 => &mut d.p_qchannel,
            2 => &mut d.p_bsm,
            3 => &mut d.p_p_swap,
            _ => &mut d.p_a_swap,
        };
        *field = (*field + bump).min(1.0);
        prop_assert!(epr_distribution_prob(&d).unwrap() >= p);
    }

    #[test]
    fn channel_quality_decreasing(li in 0.0..1.0f64, ln in 0.0..0.2f64, di in 0.0..0.5f64, dn in 0.0..0.1f64) {
        let q = channel_quality(li, ln).value;
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert!(channel_quality((li + di).min(1.0), ln).value <= q);
        prop_assert!(channel_quality(li, ln + dn).value <= q);
    }

    #[test]
    fn decoherence_never_helps(f0 in 0.25..=1.0f64, t in 0.0..100.0f64, dt in 0.0..100.0f64, rate in 0.0..1.0f64) {
        let a = decohere_fidelity(f0, t, rate);
        prop_assert!(decohere_fidelity(f0, t + dt, rate) <= a + 1e-15);
        prop_assert!(a >= 0.25 - 1e-15 && a <= f0 + 1e-15);
    }

    #[test]
    fn successful_segments_match_counter_table(
        dep in 0.0..0.5f64,
        li in 0.0..0.5f64,
        scheme_ix in 0usize..5,
        seed in any::<u64>(),
    ) {
        let scheme = Scheme::ALL[scheme_ix];
        let ch = EnvParams { loss_init: li, ..EnvParams::noiseless() };
        let env = SegmentEnv {
            channel: [ch, ch],
            endpoint_op: [1.0 - dep, 1.0 - dep],
            middle_op: 1.0 - dep,
            ..SegmentEnv::perfect(100.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = distribute(scheme, &env, &Timing::default(), ResidualPolicy::default(), &mut rng);
        let table = scheme.segment_counters();
        if r.success {
            prop_assert_eq!(r.counters, table);
        } else {
            prop_assert!(r.counters.ops <= table.ops && r.counters.photons <= table.photons);
        }
    }

    #[test]
    fn cer_order_is_scale_invariant(scores in prop::collection::vec((0.01..1.0f64, 1usize..8), 1..12), k in 0.1..10.0f64) {
        let list = |f: f64| -> Vec<ScoredPath> {
            scores.iter().map(|&(s, h)| ScoredPath { path: PathMiddle::new(vec![]), score: s * f, hops: h }).collect()
        };
        let sort = |v: &Vec<ScoredPath>| {
            let mut ix: Vec<usize> = (0..v.len()).collect();
            ix.sort_by(|&a, &b| v[b].score.total_cmp(&v[a].score).then(v[a].hops.cmp(&v[b].hops)).then(a.cmp(&b)));
            ix
        };
        let (a, b) = (list(1.0), list(k));
        prop_assert_eq!(sort(&a), sort(&b));
        prop_assert_eq!(cer_choose(&a, 0.0), cer_choose(&b, 0.0));
    }

    #[test]
    fn cer_paths_valid_and_avoid_maintenance(mask in prop::collection::vec(any::<bool>(), 12), pick in 0usize..9) {
        let t = CellularLayout::default().hierarchical().unwrap();
        let (dspt, dert) = build_dspt_dert(&t).unwrap();
        let mut csm = CentralStateMatrix::from_topology(&t);
        let reps = t.repeaters();
        for (&r, &m) in reps.iter().zip(&mask) {
            if m {
                csm.mark_maintain(t.name(r)).unwrap();
            }
        }
        let users = t.users();
        let (src, dst) = (users[0], users[1 + pick % (users.len() - 1)]);
        let mut work = 0;
        if let Ok(paths) = cer_route(&t, &csm, &dspt, &dert, src, dst, 2, &mut work) {
            for p in &paths {
                prop_assert!(p.path.is_valid(&t, src, dst));
                prop_assert!(p.path.devices.iter().all(|&d| csm.is_available(t.name(d))));
            }
            for w in paths.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
        }
    }

    #[test]
    fn reservations_are_conserved(order in prop::collection::vec((0usize..9, 0usize..9), 1..6), scheme_ix in 0usize..2) {
        let t = CellularLayout::default().hierarchical().unwrap();
        let scheme = [Scheme::DpCepd, Scheme::WStateCepd][scheme_ix];
        let mut csm = CentralStateMatrix::from_topology(&t);
        let users = t.users();
        let mut held = Vec::new();
        for (id, &(a, b)) in order.iter().enumerate() {
            let id = id as u64;
            if a == b {
                continue;
            }
            let (s, d) = (users[a], users[b]);
            let Ok(src) = csm.reserve_one(t.name(s), scheme.memory(), id) else { continue };
            let Ok(dst) = csm.reserve_one(t.name(d), scheme.memory(), id) else {
                csm.release_memories(id);
                continue;
            };
            let before = csm.occupied();
            match greedy_route(&t, Some(&csm), s, d) {
                Ok(route) => match csm.reserve_memories(&t, &route.path.devices, &src, &dst, scheme.needs(), id) {
                    Ok(_) => held.push(id),
                    Err(_) => {
                        prop_assert_eq!(csm.occupied(), before);
                        csm.release_memories(id);
                    }
                },
                Err(_) => {
                    csm.release_memories(id);
                }
            }
        }
        for id in held {
            csm.release_memories(id);
        }
        prop_assert_eq!(csm.occupied(), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn faulty_runs_stay_within_protocol(
        outage in 0.0..0.6f64,
        swap_stall in 0.0..0.5f64,
        teleport_stall in 0.0..0.5f64,
        reject in 0.0..0.3f64,
        jitter in 0u64..2_000_000,
        dephasing in 0.0..0.3f64,
        seed in any::<u64>(),
    ) {
        let mut t = CellularLayout::default().hierarchical().unwrap();
        t.set_uniform_env(EnvParams { dephasing_rate: dephasing, depolarizing_rate: 0.1, ..EnvParams::noiseless() });
        let cfg = EngineConfig {
            sessions: 5,
            pairs: vec![("U_A".into(), "U_I".into()), ("U_E".into(), "U_C".into())],
            warmup_rounds: 5,
            faults: FaultPlan { channel_outage: outage, swap_stall, teleport_stall, reject, message_jitter_ns: jitter },
            ..EngineConfig::default()
        };
        let r = run(&t, &cfg, seed).unwrap();
        prop_assert!(r.illegal_transitions().is_empty());
        prop_assert_eq!(r.timer_violations, 0);
        prop_assert_eq!(r.leaked_memories, 0);
        prop_assert_eq!(r.metrics.fidelity.len() as u64, r.metrics.sessions);
    }
}
