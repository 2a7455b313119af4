//! Scenario registry. Each scenario turns a resolved configuration into CSV
//! rows; parameter points and trials run in parallel and are merged in a
//! fixed order, so output depends only on the configuration and seed.

mod config;
mod scenarios;

use std::fmt;

pub use config::{
    locate, EngineSection, EnvSection, Overrides, Resolved, RoutingSection, ScenarioConfig,
    SchemeSection, StdSection, SweepSection, TopologySection,
};
pub use scenarios::{diversify, three_path_topology, trial_seed};

use crate::distribution::{ResidualPolicy, Scheme};
use crate::engine::{Metrics, DEFAULT_RETRY_LIMIT, DEFAULT_WARMUP_ROUNDS, DEPOLARIZING_UNIT_MS};
use crate::error::{Error, Result};
use crate::noise::{EnvParams, DEFAULT_LENGTH_KM};
use crate::routing::{Algorithm, DEFAULT_RECURSION, SCORE_TOLERANCE};

pub const CSV_COLUMNS: [&str; 10] = [
    "scenario",
    "seed",
    "param_name",
    "param_value",
    "fidelity_mean",
    "fidelity_stderr",
    "throughput_qps",
    "pairs_consumed_mean",
    "route_time_ms_mean",
    "success_rate",
];

/// Dephasing standard deviations of the diversified network sweep.
pub const DEPHASING_STDS: [f64; 5] = [0.096, 0.144, 0.192, 0.241, 0.290];
pub const LOSS_INIT_STDS: [f64; 5] = [0.041, 0.049, 0.053, 0.058, 0.063];
pub const LOSS_NOISE_STDS: [f64; 5] = [0.0031, 0.0034, 0.0038, 0.0044, 0.0051];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    MaintenanceCost,
    ControlOverhead,
    EpdComparison,
    RoutingEquivalent,
    RoutingDiversified,
    RoutingCost,
    CerIntegrated,
    NoiseLimitation,
    ChannelVsDephasing,
    EnvImportance,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::MaintenanceCost,
        Scenario::ControlOverhead,
        Scenario::EpdComparison,
        Scenario::RoutingEquivalent,
        Scenario::RoutingDiversified,
        Scenario::RoutingCost,
        Scenario::CerIntegrated,
        Scenario::NoiseLimitation,
        Scenario::ChannelVsDephasing,
        Scenario::EnvImportance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::MaintenanceCost => "maintenance-cost",
            Scenario::ControlOverhead => "control-overhead",
            Scenario::EpdComparison => "epd-comparison",
            Scenario::RoutingEquivalent => "routing-equivalent",
            Scenario::RoutingDiversified => "routing-diversified",
            Scenario::RoutingCost => "routing-cost",
            Scenario::CerIntegrated => "cer-integrated",
            Scenario::NoiseLimitation => "noise-limitation",
            Scenario::ChannelVsDephasing => "channel-vs-dephasing",
            Scenario::EnvImportance => "env-importance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }

    /// Config sections the scenario reads.
    pub fn sections(self) -> &'static [&'static str] {
        use Scenario::*;
        match self {
            MaintenanceCost | ControlOverhead => &["sweep"],
            EpdComparison => &["topology", "env", "scheme", "sweep", "engine"],
            RoutingEquivalent => &["topology", "env", "routing", "scheme", "engine"],
            RoutingDiversified | RoutingCost | CerIntegrated => {
                &["topology", "env", "std", "routing", "scheme", "engine"]
            }
            NoiseLimitation | ChannelVsDephasing => {
                &["topology", "env", "routing", "scheme", "sweep", "engine"]
            }
            EnvImportance => &["topology", "env", "scheme", "sweep", "engine"],
        }
    }

    fn check_sweep(self, values: &[f64]) -> std::result::Result<(), String> {
        let bad = |cond: &dyn Fn(f64) -> bool, what: &str| {
            if values.iter().all(|&v| cond(v)) {
                Ok(())
            } else {
                Err(format!("sweep values for {} must be {what}", self.name()))
            }
        };
        use Scenario::*;
        match self {
            MaintenanceCost => bad(&|v| v >= 1.0 && v.fract() == 0.0, "whole ring counts >= 1"),
            ControlOverhead => bad(&|v| v >= 0.0, "non-negative qps"),
            EpdComparison => bad(&|v| v >= 1.0, "memory ratios >= 1"),
            NoiseLimitation => bad(&|v| v >= 0.0, "non-negative loss noise"),
            ChannelVsDephasing => bad(&|v| (0.0..=1.0).contains(&v), "variations in [0, 1]"),
            EnvImportance => bad(&|v| v >= 0.0, "non-negative group factors"),
            _ => Ok(()),
        }
    }

    pub fn defaults(self) -> Resolved {
        use Scenario::*;
        let section_b = EnvParams {
            depolarizing_rate: 0.1,
            dephasing_rate: 0.01,
            loss_init: 0.0001,
            loss_noise: 1e-5,
            length_km: DEFAULT_LENGTH_KM,
        };
        let section_c = EnvParams {
            depolarizing_rate: 0.1,
            dephasing_rate: 0.1,
            loss_init: 0.01,
            loss_noise: 1e-3,
            length_km: DEFAULT_LENGTH_KM,
        };
        let mut r = Resolved {
            scenario: self,
            seed: 1,
            trials: 10,
            rings: 2,
            length_km: DEFAULT_LENGTH_KM,
            env: section_c,
            std_dephasing: Vec::new(),
            std_loss_init: Vec::new(),
            std_loss_noise: Vec::new(),
            algorithms: Algorithm::ALL.to_vec(),
            recursion: DEFAULT_RECURSION,
            score_tolerance: SCORE_TOLERANCE,
            scheme: Scheme::DpCepd,
            p_w: 1.0,
            residual_policy: ResidualPolicy::default(),
            sweep: Vec::new(),
            sessions: 20,
            retry_limit: DEFAULT_RETRY_LIMIT,
            max_reroutes: 2,
            depolarizing_unit_ms: DEPOLARIZING_UNIT_MS,
            warmup_rounds: DEFAULT_WARMUP_ROUNDS,
        };
        match self {
            MaintenanceCost => r.sweep = (1..=6).map(f64::from).collect(),
            ControlOverhead => r.sweep = (1..=10).map(|k| 100.0 * k as f64).collect(),
            EpdComparison => {
                r.env = section_b;
                r.sweep = (1..=10).map(f64::from).collect();
                r.sessions = 300;
            }
            RoutingEquivalent => r.sessions = 200,
            RoutingDiversified | CerIntegrated => {
                r.trials = 100;
                r.sessions = 50;
                r.std_dephasing = DEPHASING_STDS.to_vec();
                r.std_loss_init = LOSS_INIT_STDS.to_vec();
                r.std_loss_noise = LOSS_NOISE_STDS.to_vec();
                if self == CerIntegrated {
                    r.algorithms = vec![Algorithm::Cer];
                    r.trials = 20;
                    r.sessions = 10;
                }
            }
            RoutingCost => r.sessions = 50,
            NoiseLimitation => {
                r.algorithms = vec![Algorithm::Cer];
                r.sweep = (0..=8).map(|k| 0.025 * k as f64).collect();
            }
            ChannelVsDephasing => {
                r.algorithms = vec![Algorithm::Cer];
                r.env = EnvParams::noiseless();
                r.sweep = vec![0.0, 0.05, 0.1, 0.15];
            }
            EnvImportance => {
                r.env = EnvParams {
                    depolarizing_rate: 0.1,
                    dephasing_rate: 0.02,
                    loss_init: 0.01,
                    loss_noise: 1e-3,
                    length_km: DEFAULT_LENGTH_KM,
                };
                r.scheme = Scheme::DepdSenderReceiver;
                r.sweep = vec![1.0, 2.0, 3.0];
                r.sessions = 200;
            }
        }
        r
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Simulation statistics of one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub fidelity_mean: f64,
    pub fidelity_stderr: f64,
    pub throughput_qps: f64,
    pub pairs_consumed_mean: f64,
    pub route_time_ms_mean: f64,
    pub success_rate: f64,
}

impl From<&Metrics> for Stats {
    fn from(m: &Metrics) -> Self {
        Stats {
            fidelity_mean: m.fidelity_mean(),
            fidelity_stderr: m.fidelity_stderr(),
            throughput_qps: m.throughput_qps(),
            pairs_consumed_mean: m.pairs_consumed_mean(),
            route_time_ms_mean: m.route_time_ms_mean(),
            success_rate: m.success_rate(),
        }
    }
}

/// One CSV row. Analytic scenarios carry their value in `param_value` and
/// leave the statistics empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub scenario: Scenario,
    pub seed: u64,
    pub param_name: String,
    pub param_value: f64,
    pub stats: Option<Stats>,
}

impl Row {
    /// Series label: the part of `param_name` before the first `:`.
    pub fn series(&self) -> &str {
        self.param_name.split(':').next().unwrap_or("")
    }

    pub fn record(&self) -> Vec<String> {
        let mut v = vec![
            self.scenario.name().to_string(),
            self.seed.to_string(),
            self.param_name.clone(),
            self.param_value.to_string(),
        ];
        match &self.stats {
            Some(s) => v.extend(
                [
                    s.fidelity_mean,
                    s.fidelity_stderr,
                    s.throughput_qps,
                    s.pairs_consumed_mean,
                    s.route_time_ms_mean,
                    s.success_rate,
                ]
                .iter()
                .map(|x| x.to_string()),
            ),
            None => v.extend(std::iter::repeat_n(String::new(), 6)),
        }
        v
    }
}

/// Run a resolved scenario.
pub fn run_scenario(r: &Resolved) -> Result<Vec<Row>> {
    scenarios::run(r)
}

/// Parse `text` as the configuration of `scenario` and run it.
pub fn run_config(scenario: &str, text: &str, over: &Overrides) -> Result<Vec<Row>> {
    let scenario = Scenario::parse(scenario)?;
    let cfg = ScenarioConfig::parse(text)?;
    let r = Resolved::new(scenario, &cfg, text, over)?;
    run_scenario(&r)
}
