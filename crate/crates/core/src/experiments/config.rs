//! Scenario configuration: a TOML file with optional sections, resolved
//! against the scenario's defaults.

use serde::Deserialize;

use crate::distribution::{ResidualPolicy, Scheme};
use crate::error::{Error, Result};
use crate::noise::EnvParams;
use crate::routing::Algorithm;

use super::Scenario;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<u32>,
    pub topology: Option<TopologySection>,
    pub env: Option<EnvSection>,
    pub std: Option<StdSection>,
    pub routing: Option<RoutingSection>,
    pub scheme: Option<SchemeSection>,
    pub sweep: Option<SweepSection>,
    pub engine: Option<EngineSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub rings: Option<u32>,
    pub length_km: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub depolarizing_rate: Option<f64>,
    pub dephasing_rate: Option<f64>,
    pub loss_init: Option<f64>,
    pub loss_noise: Option<f64>,
}

/// Standard-deviation sweeps of the diversified network.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StdSection {
    pub dephasing_rate: Option<Vec<f64>>,
    pub loss_init: Option<Vec<f64>>,
    pub loss_noise: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingSection {
    pub algorithms: Option<Vec<String>>,
    pub recursion: Option<usize>,
    pub score_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub name: Option<String>,
    pub p_w: Option<f64>,
    pub residual_policy: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub sessions: Option<u32>,
    pub retry_limit: Option<u32>,
    pub max_reroutes: Option<u32>,
    pub depolarizing_unit_ms: Option<f64>,
    pub warmup_rounds: Option<u32>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().to_string();
            Error::Config(match line {
                Some(l) => format!("line {l}: {msg}"),
                None => msg,
            })
        })
    }

    fn present_sections(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.topology.is_some() {
            v.push("topology");
        }
        if self.env.is_some() {
            v.push("env");
        }
        if self.std.is_some() {
            v.push("std");
        }
        if self.routing.is_some() {
            v.push("routing");
        }
        if self.scheme.is_some() {
            v.push("scheme");
        }
        if self.sweep.is_some() {
            v.push("sweep");
        }
        if self.engine.is_some() {
            v.push("engine");
        }
        v
    }
}

/// Line of `key` inside `[section]` (or the top level), 1-based.
pub fn locate(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = Some(rest.trim_end_matches(']').trim().to_string());
            if key.is_empty() && current.as_deref() == section {
                return Some(i + 1);
            }
            continue;
        }
        let k = line.split('=').next().unwrap_or("").trim();
        if k == key && current.as_deref() == section {
            return Some(i + 1);
        }
    }
    None
}

fn at(text: &str, section: Option<&str>, key: &str, msg: String) -> Error {
    match locate(text, section, key) {
        Some(l) => Error::Config(format!("line {l}: {msg}")),
        None => Error::Config(msg),
    }
}

/// Fully resolved parameters of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: Scenario,
    pub seed: u64,
    pub trials: u32,
    pub rings: u32,
    pub length_km: f64,
    pub env: EnvParams,
    pub std_dephasing: Vec<f64>,
    pub std_loss_init: Vec<f64>,
    pub std_loss_noise: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub recursion: usize,
    pub score_tolerance: f64,
    pub scheme: Scheme,
    pub p_w: f64,
    pub residual_policy: ResidualPolicy,
    pub sweep: Vec<f64>,
    pub sessions: u32,
    pub retry_limit: u32,
    pub max_reroutes: u32,
    pub depolarizing_unit_ms: f64,
    pub warmup_rounds: u32,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u32>,
}

impl Resolved {
    /// Merge `cfg` (whose source is `text`) over the scenario defaults.
    pub fn new(
        scenario: Scenario,
        cfg: &ScenarioConfig,
        text: &str,
        over: &Overrides,
    ) -> Result<Self> {
        if let Some(name) = &cfg.scenario {
            let named = Scenario::parse(name).map_err(|e| at(text, None, "scenario", e.to_string()))?;
            if named != scenario {
                return Err(at(
                    text,
                    None,
                    "scenario",
                    format!("file is for `{}`, not `{}`", named.name(), scenario.name()),
                ));
            }
        }
        let allowed = scenario.sections();
        for s in cfg.present_sections() {
            if !allowed.contains(&s) {
                return Err(at(
                    text,
                    Some(s),
                    "",
                    format!("section [{s}] is not used by scenario `{}`", scenario.name()),
                ));
            }
        }
        let mut r = scenario.defaults();
        if let Some(seed) = over.seed.or(cfg.seed) {
            r.seed = seed;
        }
        if let Some(trials) = over.trials.or(cfg.trials) {
            r.trials = trials;
        }
        if r.trials == 0 {
            return Err(at(text, None, "trials", "trials must be at least 1".into()));
        }
        if let Some(t) = &cfg.topology {
            if let Some(v) = t.rings {
                if v == 0 {
                    return Err(at(text, Some("topology"), "rings", "rings must be at least 1".into()));
                }
                r.rings = v;
            }
            if let Some(v) = t.length_km {
                r.length_km = v;
            }
        }
        if let Some(e) = &cfg.env {
            let env = &mut r.env;
            env.depolarizing_rate = e.depolarizing_rate.unwrap_or(env.depolarizing_rate);
            env.dephasing_rate = e.dephasing_rate.unwrap_or(env.dephasing_rate);
            env.loss_init = e.loss_init.unwrap_or(env.loss_init);
            env.loss_noise = e.loss_noise.unwrap_or(env.loss_noise);
        }
        r.env.length_km = r.length_km;
        r.env.validate().map_err(|e| {
            let key = match &e {
                Error::InvalidParameter { name, .. } => *name,
                _ => "",
            };
            let section = if key == "length_km" { "topology" } else { "env" };
            at(text, Some(section), key, e.to_string())
        })?;
        if let Some(s) = &cfg.std {
            for (key, src, dst) in [
                ("dephasing_rate", &s.dephasing_rate, &mut r.std_dephasing),
                ("loss_init", &s.loss_init, &mut r.std_loss_init),
                ("loss_noise", &s.loss_noise, &mut r.std_loss_noise),
            ] {
                if let Some(v) = src {
                    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                        return Err(at(
                            text,
                            Some("std"),
                            key,
                            format!("standard deviations of {key} must be non-negative"),
                        ));
                    }
                    *dst = v.clone();
                }
            }
        }
        if let Some(ro) = &cfg.routing {
            if let Some(names) = &ro.algorithms {
                r.algorithms = names
                    .iter()
                    .map(|n| Algorithm::parse(n))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| at(text, Some("routing"), "algorithms", e.to_string()))?;
                if r.algorithms.is_empty() {
                    return Err(at(text, Some("routing"), "algorithms", "no algorithms listed".into()));
                }
            }
            if let Some(v) = ro.recursion {
                r.recursion = v;
            }
            if let Some(v) = ro.score_tolerance {
                if !(0.0..1.0).contains(&v) {
                    return Err(at(
                        text,
                        Some("routing"),
                        "score_tolerance",
                        format!("score_tolerance = {v} must lie in [0, 1)"),
                    ));
                }
                r.score_tolerance = v;
            }
        }
        if let Some(sc) = &cfg.scheme {
            if let Some(n) = &sc.name {
                r.scheme = Scheme::parse(n).map_err(|e| at(text, Some("scheme"), "name", e.to_string()))?;
            }
            if let Some(v) = sc.p_w {
                if !(0.0..=1.0).contains(&v) {
                    return Err(at(text, Some("scheme"), "p_w", format!("p_w = {v} must lie in [0, 1]")));
                }
                r.p_w = v;
            }
            if let Some(p) = &sc.residual_policy {
                r.residual_policy = match p.as_str() {
                    "fold" | "fold-into-bsm" => ResidualPolicy::FoldIntoBsm,
                    "retry" => ResidualPolicy::Retry,
                    other => {
                        return Err(at(
                            text,
                            Some("scheme"),
                            "residual_policy",
                            format!("unknown residual policy `{other}` (fold, retry)"),
                        ))
                    }
                };
            }
        }
        if let Some(v) = cfg.sweep.as_ref().and_then(|s| s.values.clone()) {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(at(text, Some("sweep"), "values", "sweep values must be finite and non-empty".into()));
            }
            scenario
                .check_sweep(&v)
                .map_err(|m| at(text, Some("sweep"), "values", m))?;
            r.sweep = v;
        }
        if let Some(en) = &cfg.engine {
            if let Some(v) = en.sessions {
                if v == 0 {
                    return Err(at(text, Some("engine"), "sessions", "sessions must be at least 1".into()));
                }
                r.sessions = v;
            }
            r.retry_limit = en.retry_limit.unwrap_or(r.retry_limit);
            r.max_reroutes = en.max_reroutes.unwrap_or(r.max_reroutes);
            r.warmup_rounds = en.warmup_rounds.unwrap_or(r.warmup_rounds);
            if let Some(v) = en.depolarizing_unit_ms {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(at(
                        text,
                        Some("engine"),
                        "depolarizing_unit_ms",
                        format!("depolarizing_unit_ms = {v} must be positive"),
                    ));
                }
                r.depolarizing_unit_ms = v;
            }
        }
        Ok(r)
    }
}
