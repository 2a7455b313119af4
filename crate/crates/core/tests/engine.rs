use hqnet::engine::{run, EngineConfig, FaultPlan, SessionState};
use hqnet::noise::EnvParams;
use hqnet::routing::Algorithm;
use hqnet::topology::{CellularLayout, Topology};

fn grid(env: EnvParams) -> Topology {
    let mut t = CellularLayout::default().hierarchical().unwrap();
    t.set_uniform_env(env);
    t
}

fn config(sessions: u32) -> EngineConfig {
    EngineConfig {
        sessions,
        pairs: vec![("U_A".into(), "U_I".into())],
        trace: true,
        ..EngineConfig::default()
    }
}

fn section_c() -> EnvParams {
    EnvParams {
        depolarizing_rate: 0.1,
        dephasing_rate: 0.1,
        loss_init: 0.01,
        loss_noise: 1e-3,
        ..EnvParams::noiseless()
    }
}

#[test]
fn same_seed_same_trace() {
    let t = grid(section_c());
    let cfg = config(20);
    let a = run(&t, &cfg, 7).unwrap();
    let b = run(&t, &cfg, 7).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace_hash(), b.trace_hash());
    assert_eq!(a.metrics, b.metrics);
    let c = run(&t, &cfg, 8).unwrap();
    assert_ne!(a.trace_hash(), c.trace_hash());
}

#[test]
fn trace_lines_have_four_fields() {
    let t = grid(section_c());
    let r = run(&t, &config(3), 1).unwrap();
    assert!(!r.trace.is_empty());
    for line in &r.trace {
        let parts: Vec<&str> = line.split(" | ").collect();
        assert_eq!(parts.len(), 4, "{line}");
        parts[0].parse::<f64>().unwrap();
    }
    let times: Vec<f64> = r.trace.iter().map(|l| l.split(" | ").next().unwrap().parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn zero_sessions_is_empty() {
    let t = grid(section_c());
    let mut cfg = config(0);
    cfg.pairs.clear();
    let r = run(&t, &cfg, 1).unwrap();
    assert_eq!(r.metrics.sessions, 0);
    assert!(r.metrics.fidelity.is_empty());
    assert_eq!(r.metrics.throughput_qps(), 0.0);
    assert!(r.transitions.is_empty());
}

#[test]
fn noiseless_path_delivers_perfectly() {
    let t = grid(EnvParams::noiseless());
    let cfg = EngineConfig {
        kernel_oracle: true,
        algorithm: Algorithm::Greedy,
        ..config(25)
    };
    let r = run(&t, &cfg, 3).unwrap();
    assert_eq!(r.metrics.successes, 25);
    assert!(r.metrics.hops.iter().all(|&h| h == 4));
    assert_eq!(r.metrics.oracle_fidelity.len(), 25);
    for f in r.metrics.fidelity.iter().chain(&r.metrics.oracle_fidelity) {
        assert!((f - 1.0).abs() < 1e-9, "{f}");
    }
}

#[test]
fn swap_stage_follows_product_law() {
    // Only repeaters dephase, so the swap stage is the only lossy one.
    let mut t = grid(EnvParams::noiseless());
    for i in t.repeaters() {
        t.devices[i].env.dephasing_rate = 0.1;
    }
    let cfg = EngineConfig {
        algorithm: Algorithm::Greedy,
        retry_limit: 1000,
        trace: false,
        ..config(4000)
    };
    let r = run(&t, &cfg, 11).unwrap();
    let entered = r.transitions.iter().filter(|x| x.2 == SessionState::Swapping).count();
    let passed = r
        .transitions
        .iter()
        .filter(|x| x.1 == SessionState::Swapping && x.2 == SessionState::Teleporting)
        .count();
    let freq = passed as f64 / entered as f64;
    assert!((freq - 0.9f64.powi(4)).abs() < 0.01, "{freq} over {entered}");
}

#[test]
fn channel_outage_retries_then_succeeds() {
    let t = grid(EnvParams::noiseless());
    let cfg = EngineConfig {
        faults: FaultPlan {
            channel_outage: 0.05,
            ..FaultPlan::default()
        },
        ..config(30)
    };
    let r = run(&t, &cfg, 5).unwrap();
    assert!(r.trace.iter().any(|l| l.contains("| t_d-expired |")));
    assert!(r.trace.iter().any(|l| l.contains("cause=distribution-timeout")));
    assert!(r.metrics.successes > 0);
    assert!(r.illegal_transitions().is_empty());
    assert_eq!(r.timer_violations, 0);
    assert_eq!(r.leaked_memories, 0);
}

#[test]
fn exhausted_retries_mark_maintain_and_reroute() {
    let t = grid(EnvParams::noiseless());
    let cfg = EngineConfig {
        faults: FaultPlan {
            channel_outage: 1.0,
            ..FaultPlan::default()
        },
        ..config(1)
    };
    let r = run(&t, &cfg, 2).unwrap();
    assert!(r.trace.iter().any(|l| l.contains("| maintain |")));
    assert_eq!(r.metrics.reroutes, 2);
    assert_eq!(r.metrics.successes, 0);
    // Two routes burn the first try plus three retries each; with both
    // routes' repeaters in maintenance no third path exists.
    assert_eq!(r.metrics.retries, 8);
    assert_eq!(r.transitions.last().unwrap().2, SessionState::Failed);
    assert!(r.trace.last().unwrap().ends_with("reason=no-path"));
    assert_eq!(r.leaked_memories, 0);
}

#[test]
fn teleport_stall_retries_preparation() {
    let t = grid(EnvParams::noiseless());
    let cfg = EngineConfig {
        faults: FaultPlan {
            teleport_stall: 0.5,
            ..FaultPlan::default()
        },
        ..config(10)
    };
    let r = run(&t, &cfg, 4).unwrap();
    let expired = r.trace.iter().position(|l| l.contains("| t_st-expired |")).expect("stall");
    assert!(r.trace[expired + 1..].iter().any(|l| l.contains("teleporting->preparing")));
    assert!(r.metrics.successes > 0);
    assert_eq!(r.timer_violations, 0);
}

#[test]
fn rejected_request_fails() {
    let t = grid(EnvParams::noiseless());
    let cfg = EngineConfig {
        faults: FaultPlan {
            reject: 1.0,
            ..FaultPlan::default()
        },
        ..config(3)
    };
    let r = run(&t, &cfg, 1).unwrap();
    assert_eq!(r.metrics.successes, 0);
    assert_eq!(r.metrics.stage_failures.get("rejected"), Some(&3));
    assert!(r.transitions.iter().all(|x| x.2 == SessionState::Failed));
}

#[test]
fn intra_domain_skips_routing() {
    let layout = CellularLayout {
        users_per_domain: 2,
        ..CellularLayout::default()
    };
    let mut t = layout.hierarchical().unwrap();
    t.set_uniform_env(EnvParams::noiseless());
    let cfg = EngineConfig {
        pairs: vec![("U_A1".into(), "U_A2".into())],
        ..config(2)
    };
    let r = run(&t, &cfg, 1).unwrap();
    assert_eq!(r.metrics.successes, 2);
    assert!(r.transitions.iter().all(|x| x.2 != SessionState::Routing));
    assert!(r.metrics.route_time_ms.is_empty());
}

#[test]
fn bad_configs_are_rejected() {
    let t = grid(EnvParams::noiseless());
    let cfg = EngineConfig {
        pairs: vec![("U_A".into(), "R_A_B".into())],
        ..config(1)
    };
    assert!(run(&t, &cfg, 1).is_err());
    let cfg = EngineConfig {
        pairs: vec![("U_A".into(), "U_Q".into())],
        ..config(1)
    };
    assert!(run(&t, &cfg, 1).is_err());
    let cfg = EngineConfig {
        p_w: 1.5,
        ..config(1)
    };
    assert!(run(&t, &cfg, 1).is_err());
    let dist = CellularLayout::default().distributed().unwrap();
    assert!(run(&dist, &config(1), 1).is_err());
}

