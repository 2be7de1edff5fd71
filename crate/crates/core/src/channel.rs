//! Unidirectional ADD channel: out of every `r + 1` consecutive messages at
//! least one is privileged and arrives within `d`; the others may be delayed
//! up to a cap or lost. Messages are never duplicated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::NodeId;
use crate::time::{Rational, Time};

/// Delays are drawn on a grid of this many steps over their range.
const DELAY_STEPS: i128 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Delivery bound for privileged messages.
    pub d: Time,
    /// Longest run of unprivileged messages.
    pub r: u32,
    pub drop_probability: f64,
    /// Chance that the adversary privileges a message it is not forced to.
    pub p_priv: f64,
    /// Delay cap for unprivileged messages that are delivered.
    pub unprivileged_delay_max: Time,
    /// When false the adversary ignores the `r` bound. Only useful as a
    /// negative control for the conformance checker.
    pub enforce_bound: bool,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            d: Time::from_integer(1),
            r: 2,
            drop_probability: 0.5,
            p_priv: 0.2,
            unprivileged_delay_max: Time::from_integer(5),
            enforce_bound: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelParamsError {
    #[error("d must be positive")]
    NonPositiveDelay,
    #[error("unprivileged_delay_max must be at least d")]
    DelayCapBelowBound,
    #[error("{0} must lie in [0, 1]")]
    Probability(&'static str),
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelParamsError> {
        if !self.d.is_positive() {
            return Err(ChannelParamsError::NonPositiveDelay);
        }
        if self.unprivileged_delay_max < self.d {
            return Err(ChannelParamsError::DelayCapBelowBound);
        }
        for (name, p) in [("drop_probability", self.drop_probability), ("p_priv", self.p_priv)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ChannelParamsError::Probability(name));
            }
        }
        Ok(())
    }

    /// Longest delay any message on this channel can have.
    pub fn max_delay(&self) -> Time {
        self.unprivileged_delay_max.max(self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Deliver { delay: Time },
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryDecision {
    /// Position of the submission on its channel, from zero.
    pub seq: u64,
    pub privileged: bool,
    #[serde(flatten)]
    pub outcome: Outcome,
}

/// Seed for the channel `src -> dst`, independent of every other channel.
pub fn channel_seed(scenario_seed: u64, src: NodeId, dst: NodeId) -> u64 {
    let lane = ((src.0 as u64) << 32) | dst.0 as u64;
    splitmix64(splitmix64(scenario_seed) ^ splitmix64(lane.wrapping_add(0x5bd1_e995)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct ChannelState {
    params: ChannelParams,
    unprivileged_run: u32,
    submitted: u64,
    rng: ChaCha8Rng,
}

impl ChannelState {
    pub fn new(params: ChannelParams, seed: u64) -> Self {
        Self { params, unprivileged_run: 0, submitted: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn unprivileged_run(&self) -> u32 {
        self.unprivileged_run
    }

    /// Classifies one message and decides its fate.
    pub fn submit(&mut self) -> DeliveryDecision {
        let seq = self.submitted;
        self.submitted += 1;
        let forced = self.params.enforce_bound && self.unprivileged_run >= self.params.r;
        let privileged = forced || self.rng.gen_bool(self.params.p_priv);
        let outcome = if privileged {
            self.unprivileged_run = 0;
            Outcome::Deliver { delay: self.draw_delay(self.params.d) }
        } else {
            self.unprivileged_run += 1;
            if self.rng.gen_bool(self.params.drop_probability) {
                Outcome::Drop
            } else {
                Outcome::Deliver { delay: self.draw_delay(self.params.unprivileged_delay_max) }
            }
        };
        DeliveryDecision { seq, privileged, outcome }
    }

    /// Uniform on the grid over `(0, max]`.
    fn draw_delay(&mut self, max: Time) -> Time {
        let step = self.rng.gen_range(1..=DELAY_STEPS);
        max * Rational::new(step, DELAY_STEPS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConformanceViolation {
    #[error("no timely privileged message in the window starting at submission {start}")]
    Window { start: usize },
    #[error("privileged submission {seq} is not delivered within d")]
    LatePrivileged { seq: u64 },
    #[error("submission {seq} delivered after the unprivileged delay cap")]
    BeyondCap { seq: u64 },
    #[error("expected submission {expected} at log position {index}, found {found} (duplicate or missing decision)")]
    Sequence { index: usize, expected: u64, found: u64 },
}

/// Checks a complete per-channel decision log against the `(r, d)` guarantee.
pub fn conformance_check(log: &[DeliveryDecision], params: &ChannelParams) -> Result<(), ConformanceViolation> {
    for (index, decision) in log.iter().enumerate() {
        if decision.seq != index as u64 {
            return Err(ConformanceViolation::Sequence { index, expected: index as u64, found: decision.seq });
        }
        match decision.outcome {
            Outcome::Deliver { delay } if decision.privileged && (delay > params.d || !delay.is_positive()) => {
                return Err(ConformanceViolation::LatePrivileged { seq: decision.seq });
            }
            Outcome::Drop if decision.privileged => {
                return Err(ConformanceViolation::LatePrivileged { seq: decision.seq });
            }
            Outcome::Deliver { delay } if delay > params.max_delay() || !delay.is_positive() => {
                return Err(ConformanceViolation::BeyondCap { seq: decision.seq });
            }
            _ => {}
        }
    }
    let timely = |d: &DeliveryDecision| d.privileged && matches!(d.outcome, Outcome::Deliver { delay } if delay <= params.d);
    let window = params.r as usize + 1;
    if log.len() >= window {
        // Sliding count of timely decisions in the current window.
        let mut count = log[..window].iter().filter(|d| timely(d)).count();
        for start in 0..=log.len() - window {
            if start > 0 {
                count -= timely(&log[start - 1]) as usize;
                count += timely(&log[start + window - 1]) as usize;
            }
            if count == 0 {
                return Err(ConformanceViolation::Window { start });
            }
        }
    }
    Ok(())
}
