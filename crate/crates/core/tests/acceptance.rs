//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints one line, pass or fail, and the process exits nonzero on any
//! failure.

use std::time::{Duration, Instant};

use hqnet::distribution::{run_chain, wstate_cepd, ResidualPolicy, Scheme, SegmentEnv, Timing, WStateProbs};
use hqnet::engine::{run, EngineConfig, FaultPlan};
use hqnet::experiments::{run_config, Overrides, Row};
use hqnet::kernel::{Qubit, StateRegister, WBranch};
use hqnet::noise::{channel_quality, op_ratio, wstate_param_map, EnvParams};
use hqnet::routing::Algorithm;
use hqnet::topology::{control_plane_load, CellularLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.1?}, limit {limit:?}"))
    } else {
        Ok(())
    }
}

fn rows(scenario: &str) -> Result<Vec<Row>, String> {
    run_config(scenario, "", &Overrides::default()).map_err(|e| e.to_string())
}

fn stat(rows: &[Row], name: &str, value: Option<f64>) -> Result<hqnet::experiments::Stats, String> {
    rows.iter()
        .find(|r| r.param_name == name && value.is_none_or(|v| (r.param_value - v).abs() < 1e-12))
        .and_then(|r| r.stats)
        .ok_or_else(|| format!("no row {name} {value:?}"))
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

fn w_conversion() -> Outcome {
    let start = Instant::now();
    let mut base = StateRegister::with_labels(&["p1", "p2", "a_lc", "atom"]).map_err(|e| e.to_string())?;
    let w = [Qubit(0), Qubit(1), Qubit(2)];
    base.prepare_w_state(w[0], w[1], w[2]).map_err(|e| e.to_string())?;
    let (two, _) = base.w_conversion_probabilities(&w, Qubit(3)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 30_000;
    let hits = (0..n)
        .filter(|_| {
            let mut r = base.clone();
            matches!(r.convert_w_to_epr(&w, Qubit(3), &mut rng), Ok(WBranch::TwoEpr))
        })
        .count();
    let freq = hits as f64 / n as f64;
    within(Duration::from_secs(5), start)?;
    check(
        (two - 2.0 / 3.0).abs() < 1e-12 && (0.657..=0.677).contains(&freq),
        format!("analytic {two:.15}, monte carlo {freq:.4}"),
    )
}

fn noiseless_end_to_end() -> Outcome {
    let start = Instant::now();
    let mut t = CellularLayout::default().hierarchical().map_err(|e| e.to_string())?;
    t.set_uniform_env(EnvParams::noiseless());
    let cfg = EngineConfig {
        sessions: 100,
        pairs: vec![("U_A".into(), "U_I".into())],
        algorithm: Algorithm::Greedy,
        kernel_oracle: true,
        ..EngineConfig::default()
    };
    let r = run(&t, &cfg, 1).map_err(|e| e.to_string())?;
    within(Duration::from_secs(5), start)?;
    let m = &r.metrics;
    let worst = m
        .oracle_fidelity
        .iter()
        .chain(&m.fidelity)
        .map(|f| (f - 1.0).abs())
        .fold(0.0, f64::max);
    check(
        m.oracle_fidelity.len() == 100 && m.hops.iter().all(|&h| h == 4) && worst < 1e-9,
        format!("{} payloads over 4 repeaters, worst deviation {worst:.1e}", m.oracle_fidelity.len()),
    )
}

fn wstate_product_law() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let env = SegmentEnv::perfect(100.0);
    let timing = Timing::default();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let side = |rng: &mut ChaCha8Rng| [rng.random::<f64>(), rng.random::<f64>()];
        let probs = WStateProbs {
            p_w: rng.random(),
            p_qchannel: side(&mut rng),
            p_bsm: side(&mut rng),
            p_p_swap: side(&mut rng),
            p_a_swap: rng.random(),
        };
        let n = 100_000;
        let mut ok = 0;
        for _ in 0..n {
            let r = wstate_cepd(&probs, &env, &timing, ResidualPolicy::FoldIntoBsm, false, &mut rng)
                .map_err(|e| e.to_string())?;
            ok += r.success as u32;
        }
        worst = worst.max((ok as f64 / n as f64 - probs.success()).abs());
    }
    within(Duration::from_secs(60), start)?;
    check(worst <= 0.01, format!("20 settings, worst |freq - product| {worst:.4}"))
}

fn channel_quality_values() -> Outcome {
    let a = channel_quality(0.2, 0.02).value;
    let b = channel_quality(0.0, 0.0).value;
    check(a == 0.85 && b == 1.0, format!("q(0.2, 0.02) = {a}, q(0, 0) = {b}"))
}

fn wstate_mapping() -> Outcome {
    let base = EnvParams {
        depolarizing_rate: 0.1,
        dephasing_rate: 0.01,
        loss_init: 0.03,
        loss_noise: 0.004,
        ..EnvParams::noiseless()
    };
    let m = wstate_param_map(&base, 5.0, 4).map_err(|e| e.to_string())?;
    let ratio = op_ratio(4);
    let wdr = 1.0 - 0.99f64.powi(8);
    let wlir = 1.0 - (1.0 - base.loss_init).powi(2);
    let wln = 2.0 * base.loss_noise;
    check(
        ratio == 8 && (m.dephasing_rate - wdr).abs() < 1e-10 && m.loss_init == wlir && m.loss_noise == wln,
        format!("op ratio {ratio}, dephasing {:.12}, loss_init {}, loss_noise {}", m.dephasing_rate, m.loss_init, m.loss_noise),
    )
}

fn scheme_counters() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let env = SegmentEnv::perfect(100.0);
    let mut seen = Vec::new();
    for scheme in [Scheme::WStateCepd, Scheme::DpCepd, Scheme::DepdSenderReceiver] {
        let r = run_chain(scheme, &[env, env], &[1.0], &Timing::default(), ResidualPolicy::FoldIntoBsm, &mut rng);
        if !r.success {
            return Err(format!("{scheme} chain failed with all noise off"));
        }
        seen.push((r.counters.ops, r.counters.photons));
    }
    check(seen == [(11, 8), (1, 4), (3, 4)], format!("{seen:?}"))
}

fn routing_cost() -> Outcome {
    let rows = rows("routing-cost")?;
    let s = |a: &str| stat(&rows, &format!("{a}:routing_cost"), None);
    let (g, q, c, l) = (s("greedy")?, s("qcast")?, s("cer")?, s("slmp")?);
    let links = CellularLayout::default().hierarchical().map_err(|e| e.to_string())?.quantum.len();
    let t = [g.route_time_ms_mean, q.route_time_ms_mean, c.route_time_ms_mean, l.route_time_ms_mean];
    check(
        g.pairs_consumed_mean == 5.0
            && l.pairs_consumed_mean == links as f64
            && (5.0..=5.4).contains(&q.pairs_consumed_mean)
            && t.windows(2).all(|w| w[0] < w[1]),
        format!(
            "pairs greedy {} qcast {:.3} slmp {} (builder links {links}, reference 33); route ms greedy {:.4} qcast {:.4} cer {:.4} slmp {:.4}",
            g.pairs_consumed_mean, q.pairs_consumed_mean, l.pairs_consumed_mean, t[0], t[1], t[2], t[3]
        ),
    )
}

fn equivalent_network() -> Outcome {
    let mut t = CellularLayout::default().hierarchical().map_err(|e| e.to_string())?;
    t.set_uniform_env(section_c());
    let go = |algorithm| {
        let cfg = EngineConfig {
            sessions: 200,
            pairs: vec![("U_A".into(), "U_I".into())],
            algorithm,
            ..EngineConfig::default()
        };
        run(&t, &cfg, 1).map(|r| r.metrics).map_err(|e| e.to_string())
    };
    let (cer, greedy) = (go(Algorithm::Cer)?, go(Algorithm::Greedy)?);
    let hops_match = cer.hops.iter().chain(&greedy.hops).all(|&h| Some(&h) == greedy.hops.first());
    let gap = cer.fidelity_mean() - greedy.fidelity_mean();
    check(
        hops_match && !greedy.hops.is_empty() && gap.abs() < 0.02,
        format!(
            "hops {:?}, fidelity cer {:.4} greedy {:.4}, gap {gap:+.4}",
            greedy.hops.first(),
            cer.fidelity_mean(),
            greedy.fidelity_mean()
        ),
    )
}

fn diversified_network() -> Outcome {
    let rows = rows("routing-diversified")?;
    let mut ok = true;
    let mut notes = Vec::new();
    for sweep in ["dephasing_std", "loss_init_std", "loss_noise_std"] {
        let points = |a: &str| -> Vec<(f64, hqnet::experiments::Stats)> {
            let name = format!("{a}:{sweep}");
            rows.iter().filter(|r| r.param_name == name).filter_map(|r| r.stats.map(|s| (r.param_value, s))).collect()
        };
        let cer = points("cer");
        let greedy = points("greedy");
        let Some(&(_, top)) = cer.last() else {
            return Err(format!("no cer rows for {sweep}"));
        };
        let mut ordered = true;
        for base in ["greedy", "qcast", "slmp"] {
            let Some(&(_, b)) = points(base).last() else {
                return Err(format!("no {base} rows for {sweep}"));
            };
            if top.fidelity_mean < b.fidelity_mean || top.throughput_qps < b.throughput_qps {
                ordered = false;
                notes.push(format!(
                    "{sweep}: {base} beats cer (F {:.4} vs {:.4}, qps {:.2} vs {:.2})",
                    b.fidelity_mean, top.fidelity_mean, b.throughput_qps, top.throughput_qps
                ));
            }
        }
        let gaps: Vec<f64> = cer.iter().zip(&greedy).map(|(c, g)| c.1.fidelity_mean - g.1.fidelity_mean).collect();
        let descents = gaps.windows(2).filter(|w| w[1] < w[0]).count();
        ok &= ordered && gaps.len() == 5 && descents <= 1;
        let shown: Vec<String> = gaps.iter().map(|g| format!("{g:+.4}")).collect();
        notes.push(format!("{sweep}: ordered {ordered}, gaps [{}], descents {descents}", shown.join(" ")));
    }
    check(ok, notes.join("; "))
}

fn epd_comparison() -> Outcome {
    let rows = rows("epd-comparison")?;
    let curve = |name: &str| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.param_name == name)
            .filter_map(|r| r.stats.map(|s| (r.param_value, s.fidelity_mean)))
            .collect()
    };
    let (cepd, depd, w) = (curve("dp-cepd:memory_ratio"), curve("dp-depd:memory_ratio"), curve("wstate-cepd:memory_ratio"));
    if w.is_empty() || cepd.len() != w.len() || depd.len() != w.len() {
        return Err("missing epd-comparison rows".into());
    }
    let (fc, fd) = (cepd[0].1, depd[0].1);
    let increasing = w.windows(2).all(|p| p[1].1 > p[0].1);
    let above = |i: usize| w[i].1 > cepd[i].1 && w[i].1 > depd[i].1;
    let cross = (0..w.len()).find(|&i| above(i) && (i..w.len()).all(above));
    let starts_below = !above(0);
    let at = cross.map(|i| w[i].0);
    check(
        fc > fd && increasing && starts_below && at.is_some_and(|r| (3.0..=8.0).contains(&r)),
        format!(
            "dp-cepd {fc:.4}, dp-depd {fd:.4}, wstate {:.4}..{:.4}, overtakes at ratio {at:?}",
            w[0].1,
            w[w.len() - 1].1
        ),
    )
}

fn cost_models() -> Outcome {
    let mut ratios = Vec::new();
    for rings in 1..=6 {
        let layout = CellularLayout { rings, ..CellularLayout::default() };
        let h = layout.hierarchical().map_err(|e| e.to_string())?.maintenance_cost();
        let d = layout.distributed().map_err(|e| e.to_string())?.maintenance_cost();
        ratios.push(d as f64 / h as f64);
    }
    let load = control_plane_load(1000.0);
    check(ratios.iter().all(|&r| r == 4.0) && load == 3e8, format!("ratios {ratios:?}, load(1000) {load:e} B/s"))
}

fn protocol_conformance() -> Outcome {
    let start = Instant::now();
    let t = {
        let mut t = CellularLayout::default().hierarchical().map_err(|e| e.to_string())?;
        t.set_uniform_env(section_c());
        t
    };
    let users: Vec<String> = t.users().iter().map(|&u| t.name(u).to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let runs = 10_000;
    let (mut illegal, mut late, mut leaked, mut sessions) = (0, 0, 0, 0u64);
    for _ in 0..runs {
        let a = rng.random_range(0..users.len());
        let b = (a + rng.random_range(1..users.len())) % users.len();
        let cfg = EngineConfig {
            sessions: 2,
            pairs: vec![(users[a].clone(), users[b].clone())],
            algorithm: Algorithm::ALL[rng.random_range(0..4)],
            warmup_rounds: 0,
            faults: FaultPlan {
                channel_outage: rng.random_range(0.0..0.6),
                swap_stall: rng.random_range(0.0..0.5),
                teleport_stall: rng.random_range(0.0..0.5),
                reject: rng.random_range(0.0..0.3),
                message_jitter_ns: rng.random_range(0..2_000_000),
            },
            ..EngineConfig::default()
        };
        let r = run(&t, &cfg, rng.random()).map_err(|e| e.to_string())?;
        illegal += r.illegal_transitions().len();
        late += r.timer_violations;
        leaked += r.leaked_memories;
        sessions += r.metrics.sessions;
    }
    within(Duration::from_secs(120), start)?;
    check(
        illegal == 0 && late == 0 && leaked == 0,
        format!("{runs} runs, {sessions} sessions: {illegal} illegal transitions, {late} late operations, {leaked} leaked memories"),
    )
}

fn env_importance() -> Outcome {
    let rows = rows("env-importance")?;
    let mut gaps = Vec::new();
    let mut best_everywhere = true;
    for g in 1..=3 {
        let f = |p: &str| stat(&rows, &format!("path_{p}:group"), Some(g as f64)).map(|s| s.fidelity_mean);
        let (a, b, c) = (f("a")?, f("b")?, f("c")?);
        best_everywhere &= b > a && b > c;
        gaps.push(b - a.max(c));
    }
    check(
        best_everywhere && gaps[2] > gaps[0],
        format!("five-hop lead per group {:+.4} {:+.4} {:+.4}", gaps[0], gaps[1], gaps[2]),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("w-state conversion branch", w_conversion),
        ("noiseless end-to-end teleport", noiseless_end_to_end),
        ("w-state distribution product law", wstate_product_law),
        ("channel quality", channel_quality_values),
        ("w-state parameter mapping", wstate_mapping),
        ("scheme counters", scheme_counters),
        ("routing cost", routing_cost),
        ("equivalent-parameter network", equivalent_network),
        ("diversified network", diversified_network),
        ("distribution scheme comparison", epd_comparison),
        ("cost models", cost_models),
        ("protocol conformance", protocol_conformance),
        ("environment importance", env_importance),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name} ({:.1?}): {detail}", start.elapsed());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
