//! The single input record: topology, physical layer and access behaviour.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{PhyConfig, Topology};

/// Reference deployment parameters used throughout the numerical study.
pub mod reference_deployment {
    /// Relay–destination distance, meters.
    pub const RELAY_TO_DESTINATION: f64 = 80.0;
    /// User–relay distance, meters.
    pub const USER_TO_RELAY: f64 = 60.0;
    /// User–destination distance, meters.
    pub const USER_TO_DESTINATION: f64 = 130.0;
    pub const PATH_LOSS_EXPONENT: f64 = 4.0;
    /// 1 mW.
    pub const USER_POWER: f64 = 1e-3;
    /// 10 mW.
    pub const RELAY_POWER: f64 = 1e-2;
    pub const USER_ATTEMPT: f64 = 0.1;
    pub const NOISE: f64 = 1e-11;
}

/// Transmission and activation probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessConfig {
    /// Per-user attempt probability `q_i`.
    pub attempt: Vec<f64>,
    /// Relay attempt probability `q0` when its queue is nonempty.
    pub relay_attempt: f64,
    /// Receiver activation probability.
    pub rx_on: f64,
    /// Transmitter activation probability.
    pub tx_on: f64,
}

impl AccessConfig {
    /// Probability that a backlogged relay transmits in a slot, `q0 · P_tx`.
    pub fn relay_transmit(&self) -> f64 {
        self.relay_attempt * self.tx_on
    }

    pub fn validate(&self, users: usize) -> Result<()> {
        if self.attempt.len() != users {
            return Err(Error::InvalidAccess(format!(
                "expected {users} attempt probabilities, got {}",
                self.attempt.len()
            )));
        }
        let named = self
            .attempt
            .iter()
            .enumerate()
            .map(|(i, &q)| (format!("attempt probability of user {}", i + 1), q))
            .chain([
                ("relay attempt probability".to_string(), self.relay_attempt),
                ("receiver activation probability".to_string(), self.rx_on),
                ("transmitter activation probability".to_string(), self.tx_on),
            ]);
        for (name, p) in named {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidAccess(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub topology: Topology,
    pub phy: PhyConfig,
    pub access: AccessConfig,
}

impl Scenario {
    /// `n` identical users at the reference distances and powers, with both
    /// relay gates always on.
    pub fn reference(n: usize, gamma: f64, self_interference: f64, relay_attempt: f64) -> Self {
        use reference_deployment::*;
        Scenario {
            topology: Topology::symmetric(n, USER_TO_RELAY, USER_TO_DESTINATION, RELAY_TO_DESTINATION),
            phy: PhyConfig {
                threshold_relay: gamma,
                threshold_destination: gamma,
                path_loss_exponent: PATH_LOSS_EXPONENT,
                self_interference,
                relay_power: RELAY_POWER,
                user_power: vec![USER_POWER; n],
                noise_relay: NOISE,
                noise_destination: NOISE,
            },
            access: AccessConfig {
                attempt: vec![USER_ATTEMPT; n],
                relay_attempt,
                rx_on: 1.0,
                tx_on: 1.0,
            },
        }
    }

    pub fn with_activation(mut self, rx_on: f64, tx_on: f64) -> Self {
        self.access.rx_on = rx_on;
        self.access.tx_on = tx_on;
        self
    }

    pub fn user_count(&self) -> usize {
        self.topology.user_count()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.user_count();
        self.topology.validate()?;
        self.phy.validate(n)?;
        self.access.validate(n)
    }

    /// All users share links, power and attempt probability.
    pub fn is_symmetric(&self) -> bool {
        let first = (&self.topology.users[0], self.phy.user_power[0], self.access.attempt[0]);
        (1..self.user_count()).all(|i| {
            (&self.topology.users[i], self.phy.user_power[i], self.access.attempt[i]) == first
        })
    }

    /// Common attempt probability of a symmetric scenario.
    pub fn common_attempt(&self) -> f64 {
        self.access.attempt[0]
    }
}
