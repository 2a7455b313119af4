use std::collections::BTreeMap;

/// Aggregated results of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub sessions: u64,
    pub successes: u64,
    /// One sample per session; failed sessions contribute 0.
    pub fidelity: Vec<f64>,
    /// Simulated time covered by the run.
    pub elapsed_ns: u64,
    pub pairs_consumed: Vec<u32>,
    pub route_time_ms: Vec<f64>,
    /// Failure causes, by stage.
    pub stage_failures: BTreeMap<String, u64>,
    pub retries: u64,
    pub reroutes: u64,
    /// Repeater hops of the path each successful session used.
    pub hops: Vec<usize>,
    /// Statevector replay fidelities, when enabled.
    pub oracle_fidelity: Vec<f64>,
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    xs.sum::<f64>() / n as f64
}

impl Metrics {
    pub fn fidelity_mean(&self) -> f64 {
        mean(self.fidelity.iter().copied())
    }

    /// Standard error of the fidelity mean.
    pub fn fidelity_stderr(&self) -> f64 {
        let n = self.fidelity.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.fidelity_mean();
        let var = self.fidelity.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }

    /// Successful deliveries per simulated second.
    pub fn throughput_qps(&self) -> f64 {
        if self.elapsed_ns == 0 {
            return 0.0;
        }
        self.successes as f64 / (self.elapsed_ns as f64 * 1e-9)
    }

    pub fn pairs_consumed_mean(&self) -> f64 {
        mean(self.pairs_consumed.iter().map(|&p| p as f64))
    }

    pub fn route_time_ms_mean(&self) -> f64 {
        mean(self.route_time_ms.iter().copied())
    }

    pub fn success_rate(&self) -> f64 {
        if self.sessions == 0 {
            return 0.0;
        }
        self.successes as f64 / self.sessions as f64
    }

    pub(crate) fn fail(&mut self, stage: &str) {
        *self.stage_failures.entry(stage.to_string()).or_default() += 1;
    }

    /// Fold another run's samples into this one.
    pub fn merge(&mut self, o: &Metrics) {
        self.sessions += o.sessions;
        self.successes += o.successes;
        self.fidelity.extend_from_slice(&o.fidelity);
        self.elapsed_ns += o.elapsed_ns;
        self.pairs_consumed.extend_from_slice(&o.pairs_consumed);
        self.route_time_ms.extend_from_slice(&o.route_time_ms);
        for (k, v) in &o.stage_failures {
            *self.stage_failures.entry(k.clone()).or_default() += v;
        }
        self.retries += o.retries;
        self.reroutes += o.reroutes;
        self.hops.extend_from_slice(&o.hops);
        self.oracle_fidelity.extend_from_slice(&o.oracle_fidelity);
    }
}
