//! Environmental interference and the closed-form probability models built
//! on top of it.

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_prob, Error, Result};

/// Loss-noise value at which a channel is considered unusable.
pub const LOSS_NOISE_CAP_DB_PER_KM: f64 = 0.2;

/// Default single-channel length.
pub const DEFAULT_LENGTH_KM: f64 = 100.0;

/// Environmental interference attached to a device or a quantum channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvParams {
    /// Memory depolarization, per millisecond of storage.
    pub depolarizing_rate: f64,
    /// Failure probability of each local quantum operation.
    pub dephasing_rate: f64,
    /// Fixed photon-loss probability at channel entry.
    pub loss_init: f64,
    /// Attenuation in dB/km.
    pub loss_noise: f64,
    pub length_km: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams::noiseless()
    }
}

impl EnvParams {
    pub fn noiseless() -> Self {
        EnvParams {
            depolarizing_rate: 0.0,
            dephasing_rate: 0.0,
            loss_init: 0.0,
            loss_noise: 0.0,
            length_km: DEFAULT_LENGTH_KM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("depolarizing_rate", self.depolarizing_rate)?;
        check_prob("dephasing_rate", self.dephasing_rate)?;
        check_prob("loss_init", self.loss_init)?;
        check_non_negative("loss_noise", self.loss_noise)?;
        if !(self.length_km > 0.0 && self.length_km.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "length_km",
                value: self.length_km,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    pub fn channel_success(&self) -> f64 {
        channel_success_formula(self.loss_init, self.loss_noise, self.length_km)
    }

    pub fn op_success(&self, n_ops: u32) -> f64 {
        (1.0 - self.dephasing_rate).powi(n_ops as i32)
    }

    pub fn quality(&self) -> f64 {
        channel_quality(self.loss_init, self.loss_noise).value
    }
}

/// Success probabilities of the stages of W-state distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentProbs {
    pub p_w: f64,
    pub p_qchannel: f64,
    pub p_bsm: f64,
    pub p_p_swap: f64,
    pub p_a_swap: f64,
}

impl ComponentProbs {
    pub const PERFECT: ComponentProbs = ComponentProbs {
        p_w: 1.0,
        p_qchannel: 1.0,
        p_bsm: 1.0,
        p_p_swap: 1.0,
        p_a_swap: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        check_prob("p_w", self.p_w)?;
        check_prob("p_qchannel", self.p_qchannel)?;
        check_prob("p_bsm", self.p_bsm)?;
        check_prob("p_p_swap", self.p_p_swap)?;
        check_prob("p_a_swap", self.p_a_swap)?;
        Ok(())
    }

    /// Derive stage probabilities for one controller-to-two-endpoints
    /// distribution. `p_w` is a device constant; every other stage is a
    /// single operation or photon.
    pub fn from_env(p_w: f64, device: &EnvParams, channel: &EnvParams) -> Self {
        let op = device.op_success(1);
        ComponentProbs {
            p_w,
            p_qchannel: channel.channel_success(),
            p_bsm: op,
            p_p_swap: op,
            p_a_swap: op,
        }
    }

    /// `[p1, p2, p3, p4]`, the per-step success probabilities.
    pub fn steps(&self) -> [f64; 4] {
        [
            self.p_w.powi(2) * self.p_qchannel.powi(2),
            self.p_bsm.powi(2),
            self.p_p_swap.powi(2),
            self.p_a_swap,
        ]
    }
}

fn channel_success_formula(loss_init: f64, loss_noise: f64, length_km: f64) -> f64 {
    (1.0 - loss_init) * 10f64.powf(-loss_noise * length_km / 10.0)
}

/// Per-photon survival probability of a fiber channel.
pub fn channel_success_prob(loss_init: f64, loss_noise: f64, length_km: f64) -> Result<f64> {
    check_prob("loss_init", loss_init)?;
    check_non_negative("loss_noise", loss_noise)?;
    check_non_negative("length_km", length_km)?;
    Ok(channel_success_formula(loss_init, loss_noise, length_km))
}

/// Success probability of W-state based distribution, the product of the
/// four step probabilities.
pub fn epr_distribution_prob(c: &ComponentProbs) -> Result<f64> {
    c.validate()?;
    Ok(c.steps().iter().product())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelQuality {
    pub value: f64,
    /// Set when `loss_noise` exceeded the cap and was clamped.
    pub clamped: bool,
}

/// `1 − (loss_init + loss_noise/0.2)/2`, with `loss_noise` clamped to 0.2.
pub fn channel_quality(loss_init: f64, loss_noise: f64) -> ChannelQuality {
    let clamped = loss_noise > LOSS_NOISE_CAP_DB_PER_KM;
    let noise = loss_noise.clamp(0.0, LOSS_NOISE_CAP_DB_PER_KM);
    let init = loss_init.clamp(0.0, 1.0);
    ChannelQuality {
        value: 1.0 - (init + noise / LOSS_NOISE_CAP_DB_PER_KM) / 2.0,
        clamped,
    }
}

/// Ratio of W-state to double-photon operations on a path with `hops`
/// repeaters, rounded up.
pub fn op_ratio(hops: u32) -> u32 {
    // 6 + 5/N, ceiling in integer arithmetic.
    6 + 5u32.div_ceil(hops)
}

/// Parameters that make a double-photon pipeline behave like W-state based
/// distribution with an atomic memory `memory_ratio_n` times better than the
/// optical one.
pub fn wstate_param_map(base: &EnvParams, memory_ratio_n: f64, hops: u32) -> Result<EnvParams> {
    base.validate()?;
    if !(memory_ratio_n >= 1.0 && memory_ratio_n.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "memory_ratio_n",
            value: memory_ratio_n,
            reason: "must be at least 1",
        });
    }
    if hops == 0 {
        return Err(Error::InvalidParameter {
            name: "hops",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let ratio = op_ratio(hops) as i32;
    Ok(EnvParams {
        depolarizing_rate: base.depolarizing_rate / memory_ratio_n,
        dephasing_rate: 1.0 - (1.0 - base.dephasing_rate).powi(ratio),
        loss_init: 1.0 - (1.0 - base.loss_init).powi(2),
        loss_noise: 2.0 * base.loss_noise,
        length_km: base.length_km,
    })
}

/// Fidelity of a stored pair after `elapsed` time units, relaxing toward the
/// fully mixed value 1/4.
pub fn decohere_fidelity(f0: f64, elapsed: f64, depolarizing_rate: f64) -> f64 {
    0.25 + (f0 - 0.25) * (-depolarizing_rate * elapsed.max(0.0)).exp()
}

/// Probability that `n_ops` consecutive operations all succeed.
pub fn op_success_prob(dephasing_rate: f64, n_ops: u32) -> Result<f64> {
    check_prob("dephasing_rate", dephasing_rate)?;
    Ok((1.0 - dephasing_rate).powi(n_ops as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_examples() {
        assert_eq!(channel_success_prob(0.0, 0.0, 100.0).unwrap(), 1.0);
        let p = channel_success_prob(0.0001, 1e-5, 100.0).unwrap();
        assert!((p - 0.99967).abs() < 1e-5);
        let p = channel_success_prob(0.0, 0.2, 100.0).unwrap();
        assert!((p - 0.01).abs() < 1e-12);
        assert!(p.powi(4) < 1e-7);
        assert!(channel_success_prob(1.5, 0.0, 100.0).is_err());
    }

    #[test]
    fn eq9_worked_example() {
        let c = ComponentProbs {
            p_w: 0.9,
            p_qchannel: 0.95,
            p_bsm: 0.9,
            p_p_swap: 0.9,
            p_a_swap: 0.9,
        };
        let p = epr_distribution_prob(&c).unwrap();
        assert!((p - 0.81 * 0.9025 * 0.81 * 0.81 * 0.9).abs() < 1e-12);
        assert!((p - 0.4317).abs() < 1e-4);
        assert_eq!(epr_distribution_prob(&ComponentProbs::PERFECT).unwrap(), 1.0);
    }

    #[test]
    fn quality_examples() {
        assert_eq!(channel_quality(0.0, 0.0).value, 1.0);
        assert_eq!(channel_quality(0.2, 0.02).value, 0.85);
        assert_eq!(channel_quality(1.0, 0.2).value, 0.0);
        let q = channel_quality(0.0, 0.4);
        assert!(q.clamped);
        assert_eq!(q.value, 0.5);
    }

    #[test]
    fn param_map_examples() {
        assert_eq!(op_ratio(4), 8);
        assert_eq!(op_ratio(1), 11);
        assert_eq!(op_ratio(5), 7);
        assert_eq!(op_ratio(1000), 7);
        let base = EnvParams {
            depolarizing_rate: 0.1,
            dephasing_rate: 0.01,
            loss_init: 0.0001,
            loss_noise: 1e-5,
            length_km: 100.0,
        };
        let m = wstate_param_map(&base, 5.0, 4).unwrap();
        assert!((m.depolarizing_rate - 0.02).abs() < 1e-15);
        assert!((m.dephasing_rate - (1.0 - 0.99f64.powi(8))).abs() < 1e-10);
        assert!((m.dephasing_rate - 0.07726).abs() < 1e-5);
        assert!((m.loss_init - 1.9999e-4).abs() < 1e-15);
        assert!((m.loss_noise - 2e-5).abs() < 1e-18);
        assert!(wstate_param_map(&base, 0.5, 4).is_err());
        assert!(wstate_param_map(&base, 1.0, 0).is_err());
    }

    #[test]
    fn decoherence_examples() {
        assert_eq!(decohere_fidelity(0.9, 0.0, 0.3), 0.9);
        assert!((decohere_fidelity(1.0, 1e6, 0.1) - 0.25).abs() < 1e-12);
        assert!((decohere_fidelity(1.0, 1.0, 0.1) - 0.9286).abs() < 1e-4);
    }

    #[test]
    fn op_success_examples() {
        assert_eq!(op_success_prob(0.0, 17).unwrap(), 1.0);
        assert!((op_success_prob(0.01, 8).unwrap() - 0.92274).abs() < 1e-5);
        assert_eq!(op_success_prob(1.0, 3).unwrap(), 0.0);
    }
}
