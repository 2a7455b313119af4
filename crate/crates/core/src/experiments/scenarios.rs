use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Resolved, Row, Scenario, Stats};
use crate::engine::{self, EngineConfig, Metrics};
use crate::error::{Error, Result};
use crate::noise::{wstate_param_map, EnvParams, LOSS_NOISE_CAP_DB_PER_KM};
use crate::routing::{greedy_route, Algorithm};
use crate::topology::{
    control_plane_load, CellularLayout, Device, DeviceKind, MemoryKind, Mode, Topology,
};

/// Seed of trial `k`; trial 0 uses the configured seed itself.
pub fn trial_seed(seed: u64, trial: u32) -> u64 {
    seed.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

type Builder = Arc<dyn Fn(u64) -> Result<Topology> + Send + Sync>;

struct Point {
    name: String,
    value: f64,
    topology: Builder,
    cfg: EngineConfig,
}

fn fixed(t: Topology) -> Builder {
    let t = Arc::new(t);
    Arc::new(move |_| Ok((*t).clone()))
}

fn layout(r: &Resolved) -> CellularLayout {
    CellularLayout {
        rings: r.rings,
        users_per_domain: 1,
        length_km: r.length_km,
    }
}

fn hierarchical(r: &Resolved, env: EnvParams) -> Result<Topology> {
    let mut t = layout(r).hierarchical()?;
    t.set_uniform_env(env);
    Ok(t)
}

/// Users of the first and last domain.
fn endpoints(t: &Topology) -> (String, String) {
    let first = t.domains.first().cloned().unwrap_or_default();
    let last = t.domains.last().cloned().unwrap_or_default();
    (format!("U_{first}"), format!("U_{last}"))
}

fn engine_config(r: &Resolved, algorithm: Algorithm, pair: (String, String)) -> EngineConfig {
    EngineConfig {
        scheme: r.scheme,
        algorithm,
        residual_policy: r.residual_policy,
        retry_limit: r.retry_limit,
        max_reroutes: r.max_reroutes,
        depolarizing_unit_ms: r.depolarizing_unit_ms,
        p_w: r.p_w,
        sessions: r.sessions,
        pairs: vec![pair],
        warmup_rounds: r.warmup_rounds,
        recursion: r.recursion,
        score_tolerance: r.score_tolerance,
        ..EngineConfig::default()
    }
}

/// Resample every device's dephasing and every channel's loss around
/// `base`, clamped to the valid ranges. `std` is (dephasing, loss_init,
/// loss_noise).
pub fn diversify<R: Rng + ?Sized>(t: &mut Topology, base: &EnvParams, std: [f64; 3], rng: &mut R) {
    let sample = |rng: &mut R, mean: f64, sd: f64, hi: f64| -> f64 {
        if sd == 0.0 {
            return mean;
        }
        let n = Normal::new(mean, sd).expect("finite standard deviation");
        n.sample(rng).clamp(0.0, hi)
    };
    for d in &mut t.devices {
        d.env.depolarizing_rate = base.depolarizing_rate;
        let x = sample(rng, base.dephasing_rate, std[0], 1.0);
        d.env.dephasing_rate = x;
    }
    for q in &mut t.quantum {
        q.env.loss_init = sample(rng, base.loss_init, std[1], 1.0);
        q.env.loss_noise = sample(rng, base.loss_noise, std[2], LOSS_NOISE_CAP_DB_PER_KM);
    }
}

fn diversified(r: &Resolved, std: [f64; 3]) -> Result<Builder> {
    let base = hierarchical(r, r.env)?;
    let env = r.env;
    Ok(Arc::new(move |seed| {
        let mut t = base.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1B5_4A32_D192_ED03);
        diversify(&mut t, &env, std, &mut rng);
        Ok(t)
    }))
}

/// Two users joined by three disjoint repeater chains of 4, 5 and 4
/// repeaters (paths a, b, c), each with its own environment.
pub fn three_path_topology(length_km: f64, envs: [EnvParams; 3]) -> Result<Topology> {
    let mut t = Topology::new(Mode::Distributed);
    t.add_domain("A");
    let user_mem = vec![MemoryKind::Optical, MemoryKind::Atomic];
    let rep_mem = vec![
        MemoryKind::Optical,
        MemoryKind::Optical,
        MemoryKind::Atomic,
        MemoryKind::Atomic,
    ];
    let dev = |name: String, kind, memories: &Vec<MemoryKind>, pos, env| Device {
        name,
        kind,
        domains: vec!["A".to_string()],
        memories: memories.clone(),
        pos,
        env,
    };
    let ends = |e: &EnvParams| EnvParams {
        length_km,
        ..envs.iter().fold(*e, |acc, x| if x.dephasing_rate < acc.dephasing_rate { *x } else { acc })
    };
    let s = t.add_device(dev("U_S".into(), DeviceKind::User, &user_mem, (0.0, 0.0), ends(&envs[1])))?;
    let d = t.add_device(dev(
        "U_D".into(),
        DeviceKind::User,
        &user_mem,
        (6.0 * length_km, 0.0),
        ends(&envs[1]),
    ))?;
    for (k, (label, n)) in [("A", 4usize), ("B", 5), ("C", 4)].into_iter().enumerate() {
        let env = EnvParams {
            length_km,
            ..envs[k]
        };
        let mut prev = s;
        for i in 0..n {
            let x = (i + 1) as f64 * 6.0 * length_km / (n + 1) as f64;
            let y = (k as f64 - 1.0) * length_km;
            let r = t.add_device(dev(
                format!("R{label}{}", i + 1),
                DeviceKind::Repeater,
                &rep_mem,
                (x, y),
                env,
            ))?;
            t.add_quantum(prev, r, env)?;
            t.add_classical(prev, r, length_km)?;
            prev = r;
        }
        t.add_quantum(prev, d, env)?;
        t.add_classical(prev, d, length_km)?;
    }
    Ok(t)
}

fn three_path_route(label: &str, n: usize) -> Vec<String> {
    let mut p = vec!["U_S".to_string()];
    p.extend((1..=n).map(|i| format!("R{label}{i}")));
    p.push("U_D".to_string());
    p
}

fn simulate(r: &Resolved, points: Vec<Point>) -> Result<Vec<Row>> {
    let jobs: Vec<(usize, u32)> = (0..points.len())
        .flat_map(|p| (0..r.trials).map(move |k| (p, k)))
        .collect();
    let results: Vec<Result<Metrics>> = jobs
        .par_iter()
        .map(|&(p, k)| {
            let seed = trial_seed(r.seed, k);
            let t = (points[p].topology)(seed)?;
            Ok(engine::run(&t, &points[p].cfg, seed)?.metrics)
        })
        .collect();
    let mut merged = vec![Metrics::default(); points.len()];
    for (&(p, _), m) in jobs.iter().zip(results) {
        merged[p].merge(&m?);
    }
    Ok(points
        .iter()
        .zip(&merged)
        .map(|(p, m)| Row {
            scenario: r.scenario,
            seed: r.seed,
            param_name: p.name.clone(),
            param_value: p.value,
            stats: Some(Stats::from(m)),
        })
        .collect())
}

fn analytic(r: &Resolved, name: String, value: f64) -> Row {
    Row {
        scenario: r.scenario,
        seed: r.seed,
        param_name: name,
        param_value: value,
        stats: None,
    }
}

pub(super) fn run(r: &Resolved) -> Result<Vec<Row>> {
    use Scenario::*;
    match r.scenario {
        MaintenanceCost => maintenance_cost(r),
        ControlOverhead => Ok(r
            .sweep
            .iter()
            .map(|&qps| analytic(r, format!("control_load_bytes_per_s@qps={qps}"), control_plane_load(qps)))
            .collect()),
        EpdComparison => epd_comparison(r),
        RoutingEquivalent => {
            let t = hierarchical(r, r.env)?;
            let pair = endpoints(&t);
            let b = fixed(t);
            let points = r
                .algorithms
                .iter()
                .map(|&a| Point {
                    name: format!("{}:equivalent", a.name()),
                    value: 0.0,
                    topology: b.clone(),
                    cfg: engine_config(r, a, pair.clone()),
                })
                .collect();
            simulate(r, points)
        }
        RoutingDiversified => routing_diversified(r),
        RoutingCost => {
            let first = |v: &Vec<f64>| v.first().copied().unwrap_or(0.0);
            let std = [first(&r.std_dephasing), first(&r.std_loss_init), first(&r.std_loss_noise)];
            let b = diversified(r, std)?;
            let pair = endpoints(&b(r.seed)?);
            let points = r
                .algorithms
                .iter()
                .map(|&a| Point {
                    name: format!("{}:routing_cost", a.name()),
                    value: 0.0,
                    topology: b.clone(),
                    cfg: engine_config(r, a, pair.clone()),
                })
                .collect();
            simulate(r, points)
        }
        CerIntegrated => cer_integrated(r),
        NoiseLimitation => {
            let mut points = Vec::new();
            for &v in &r.sweep {
                let env = EnvParams { loss_noise: v, ..r.env };
                env.validate()?;
                let t = hierarchical(r, env)?;
                let pair = endpoints(&t);
                let b = fixed(t);
                for &a in &r.algorithms {
                    points.push(Point {
                        name: format!("{}:loss_noise", a.name()),
                        value: v,
                        topology: b.clone(),
                        cfg: engine_config(r, a, pair.clone()),
                    });
                }
            }
            simulate(r, points)
        }
        ChannelVsDephasing => channel_vs_dephasing(r),
        EnvImportance => env_importance(r),
    }
}

fn maintenance_cost(r: &Resolved) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &v in &r.sweep {
        let rings = v as u32;
        let l = CellularLayout {
            rings,
            ..CellularLayout::default()
        };
        let h = l.hierarchical()?.maintenance_cost() as f64;
        let d = l.distributed()?.maintenance_cost() as f64;
        rows.push(analytic(r, format!("hierarchical_cost@rings={rings}"), h));
        rows.push(analytic(r, format!("distributed_cost@rings={rings}"), d));
        rows.push(analytic(r, format!("cost_ratio@rings={rings}"), d / h));
    }
    Ok(rows)
}

fn epd_comparison(r: &Resolved) -> Result<Vec<Row>> {
    let h = hierarchical(r, r.env)?;
    let pair = endpoints(&h);
    let (s, d) = (h.idx(&pair.0)?, h.idx(&pair.1)?);
    let hops = greedy_route(&h, None, s, d)?.path.repeater_hops() as u32;
    let mut dist = layout(r).distributed()?;
    dist.set_uniform_env(r.env);
    let depd_scheme = if r.scheme.is_centralized() {
        crate::distribution::Scheme::DepdSenderReceiver
    } else {
        r.scheme
    };
    let cepd_cfg = EngineConfig {
        scheme: crate::distribution::Scheme::DpCepd,
        ..engine_config(r, Algorithm::Greedy, pair.clone())
    };
    let depd_cfg = EngineConfig {
        scheme: depd_scheme,
        ..engine_config(r, Algorithm::Greedy, pair.clone())
    };
    let first = r.sweep[0];
    let mut points = vec![
        Point {
            name: "dp-cepd:memory_ratio".into(),
            value: first,
            topology: fixed(h),
            cfg: cepd_cfg,
        },
        Point {
            name: "dp-depd:memory_ratio".into(),
            value: first,
            topology: fixed(dist),
            cfg: depd_cfg,
        },
    ];
    for &n in &r.sweep {
        let env = wstate_param_map(&r.env, n, hops.max(1))?;
        points.push(Point {
            name: "wstate-cepd:memory_ratio".into(),
            value: n,
            topology: fixed(hierarchical(r, env)?),
            cfg: EngineConfig {
                scheme: crate::distribution::Scheme::DpCepd,
                ..engine_config(r, Algorithm::Greedy, pair.clone())
            },
        });
    }
    let rows = simulate(r, points)?;
    // The double-photon curves do not depend on the ratio; repeat them at
    // every sweep point.
    let mut out = Vec::new();
    for &n in &r.sweep {
        for base in &rows[..2] {
            out.push(Row {
                param_value: n,
                ..base.clone()
            });
        }
    }
    out.extend(rows[2..].iter().cloned());
    Ok(out)
}

fn routing_diversified(r: &Resolved) -> Result<Vec<Row>> {
    let sweeps = [
        ("dephasing_std", &r.std_dephasing, 0),
        ("loss_init_std", &r.std_loss_init, 1),
        ("loss_noise_std", &r.std_loss_noise, 2),
    ];
    let mut points = Vec::new();
    for (label, values, slot) in sweeps {
        for &v in values {
            let mut std = [0.0; 3];
            std[slot] = v;
            let b = diversified(r, std)?;
            let pair = endpoints(&b(r.seed)?);
            for &a in &r.algorithms {
                points.push(Point {
                    name: format!("{}:{label}", a.name()),
                    value: v,
                    topology: b.clone(),
                    cfg: engine_config(r, a, pair.clone()),
                });
            }
        }
    }
    simulate(r, points)
}

fn cer_integrated(r: &Resolved) -> Result<Vec<Row>> {
    let noise = r.std_loss_noise.first().copied().unwrap_or(0.0);
    let mut points = Vec::new();
    for &dv in &r.std_dephasing {
        for &lv in &r.std_loss_init {
            let b = diversified(r, [dv, lv, noise])?;
            let pair = endpoints(&b(r.seed)?);
            for &a in &r.algorithms {
                points.push(Point {
                    name: format!("{}:dephasing_std={dv}:loss_init_std", a.name()),
                    value: lv,
                    topology: b.clone(),
                    cfg: engine_config(r, a, pair.clone()),
                });
            }
        }
    }
    simulate(r, points)
}

fn channel_vs_dephasing(r: &Resolved) -> Result<Vec<Row>> {
    let mut points = Vec::new();
    for &v in &r.sweep {
        // Quality 1 - v split between entry loss and attenuation in the
        // proportion of the (0.2, 0.02 dB/km) example.
        let channel = EnvParams {
            loss_init: (4.0 * v / 3.0).min(1.0),
            loss_noise: LOSS_NOISE_CAP_DB_PER_KM * 2.0 * v / 3.0,
            ..r.env
        };
        let dephased = EnvParams {
            dephasing_rate: v,
            ..r.env
        };
        for (label, env, value) in [("channel_quality", channel, 1.0 - v), ("dephasing_rate", dephased, v)] {
            let t = hierarchical(r, env)?;
            let pair = endpoints(&t);
            let b = fixed(t);
            for &a in &r.algorithms {
                points.push(Point {
                    name: format!("{}:{label}", a.name()),
                    value,
                    topology: b.clone(),
                    cfg: engine_config(r, a, pair.clone()),
                });
            }
        }
    }
    simulate(r, points)
}

/// Per-group step added to paths a and c (c gets twice the step).
const GROUP_DEPHASING_STEP: f64 = 0.05;
const GROUP_LOSS_INIT_STEP: f64 = 0.05;

fn env_importance(r: &Resolved) -> Result<Vec<Row>> {
    if r.scheme.is_centralized() {
        return Err(Error::Config(format!(
            "env-importance runs on a distributed chain; {} needs controllers",
            r.scheme
        )));
    }
    let mut points = Vec::new();
    for &g in &r.sweep {
        let shifted = |k: f64| EnvParams {
            dephasing_rate: (r.env.dephasing_rate + k * g * GROUP_DEPHASING_STEP).min(1.0),
            loss_init: (r.env.loss_init + k * g * GROUP_LOSS_INIT_STEP).min(1.0),
            ..r.env
        };
        let t = three_path_topology(r.length_km, [shifted(1.0), r.env, shifted(2.0)])?;
        let b = fixed(t);
        for (label, n) in [("a", 4), ("b", 5), ("c", 4)] {
            let cfg = EngineConfig {
                fixed_path: Some(three_path_route(&label.to_uppercase(), n)),
                warmup_rounds: 0,
                ..engine_config(r, Algorithm::Greedy, ("U_S".into(), "U_D".into()))
            };
            points.push(Point {
                name: format!("path_{label}:group"),
                value: g,
                topology: b.clone(),
                cfg,
            });
        }
    }
    simulate(r, points)
}
