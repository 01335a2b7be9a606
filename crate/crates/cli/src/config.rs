//! JSON scenario and sweep files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use relaylab::phy::{Link, PhyConfig, Topology, UserLinks};
use relaylab::scenario::reference_deployment;
use relaylab::{AccessConfig, Scenario};

use crate::error::CliError;

pub const DEFAULT_USERS: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.2;
pub const DEFAULT_SELF_INTERFERENCE: f64 = 1.0;
pub const DEFAULT_RELAY_ATTEMPT: f64 = 0.95;

/// Either a number of identical users or one entry per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Users {
    Count(usize),
    List(Vec<UserEntry>),
}

/// Per-user overrides; missing fields take the top-level values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_relay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_destination: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay_fading: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination_fading: Option<f64>,
}

/// Every field is optional. Missing fields take the reference deployment
/// values: 60 m user to relay, 130 m user to destination, 80 m relay to
/// destination, path loss exponent 4, 1 mW users, 10 mW relay, attempt
/// probability 0.1 and noise 1e-11.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<Users>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_to_relay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_to_destination: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay_to_destination: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay_fading: Option<f64>,
    /// Common SINR threshold for both receivers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_relay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_destination: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_loss_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_interference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_relay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_destination: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay_attempt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_on: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_on: Option<f64>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        let user_to_relay = self.user_to_relay.unwrap_or(reference_deployment::USER_TO_RELAY);
        let user_to_destination = self.user_to_destination.unwrap_or(reference_deployment::USER_TO_DESTINATION);
        let user_power = self.user_power.unwrap_or(reference_deployment::USER_POWER);
        let attempt = self.attempt.unwrap_or(reference_deployment::USER_ATTEMPT);
        let entries = match self.users.clone().unwrap_or(Users::Count(DEFAULT_USERS)) {
            Users::Count(n) => vec![UserEntry::default(); n],
            Users::List(list) => list,
        };
        if entries.is_empty() {
            return Err(CliError::Config("at least one user is required".into()));
        }
        let users = entries
            .iter()
            .map(|u| UserLinks {
                to_relay: Link {
                    distance: u.to_relay.unwrap_or(user_to_relay),
                    fading: u.relay_fading.unwrap_or(1.0),
                },
                to_destination: Link {
                    distance: u.to_destination.unwrap_or(user_to_destination),
                    fading: u.destination_fading.unwrap_or(1.0),
                },
            })
            .collect();
        let threshold = self.threshold.unwrap_or(DEFAULT_THRESHOLD);
        let noise = self.noise.unwrap_or(reference_deployment::NOISE);
        let scenario = Scenario {
            topology: Topology {
                relay_to_destination: Link {
                    distance: self.relay_to_destination.unwrap_or(reference_deployment::RELAY_TO_DESTINATION),
                    fading: self.relay_fading.unwrap_or(1.0),
                },
                users,
            },
            phy: PhyConfig {
                threshold_relay: self.threshold_relay.unwrap_or(threshold),
                threshold_destination: self.threshold_destination.unwrap_or(threshold),
                path_loss_exponent: self.path_loss_exponent.unwrap_or(reference_deployment::PATH_LOSS_EXPONENT),
                self_interference: self.self_interference.unwrap_or(DEFAULT_SELF_INTERFERENCE),
                relay_power: self.relay_power.unwrap_or(reference_deployment::RELAY_POWER),
                user_power: entries.iter().map(|u| u.power.unwrap_or(user_power)).collect(),
                noise_relay: self.noise_relay.unwrap_or(noise),
                noise_destination: self.noise_destination.unwrap_or(noise),
            },
            access: AccessConfig {
                attempt: entries.iter().map(|u| u.attempt.unwrap_or(attempt)).collect(),
                relay_attempt: self.relay_attempt.unwrap_or(DEFAULT_RELAY_ATTEMPT),
                rx_on: self.rx_on.unwrap_or(1.0),
                tx_on: self.tx_on.unwrap_or(1.0),
            },
        };
        scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(scenario)
    }

    /// Fully explicit file that reloads to exactly `scenario`.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let (topo, phy, access) = (&scenario.topology, &scenario.phy, &scenario.access);
        let users = topo
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| UserEntry {
                to_relay: Some(u.to_relay.distance),
                to_destination: Some(u.to_destination.distance),
                attempt: Some(access.attempt[i]),
                power: Some(phy.user_power[i]),
                relay_fading: Some(u.to_relay.fading),
                destination_fading: Some(u.to_destination.fading),
            })
            .collect();
        ScenarioFile {
            users: Some(Users::List(users)),
            relay_to_destination: Some(topo.relay_to_destination.distance),
            relay_fading: Some(topo.relay_to_destination.fading),
            threshold_relay: Some(phy.threshold_relay),
            threshold_destination: Some(phy.threshold_destination),
            path_loss_exponent: Some(phy.path_loss_exponent),
            self_interference: Some(phy.self_interference),
            relay_power: Some(phy.relay_power),
            noise_relay: Some(phy.noise_relay),
            noise_destination: Some(phy.noise_destination),
            relay_attempt: Some(access.relay_attempt),
            rx_on: Some(access.rx_on),
            tx_on: Some(access.tx_on),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "n")]
    Users,
    #[serde(rename = "gamma")]
    Threshold,
    #[serde(rename = "g")]
    SelfInterference,
    #[serde(rename = "q0")]
    RelayAttempt,
    #[serde(rename = "q")]
    Attempt,
    #[serde(rename = "P_rx")]
    RxOn,
    #[serde(rename = "P_tx")]
    TxOn,
}

impl Variable {
    fn check(self, v: f64) -> Result<(), String> {
        let ok = match self {
            Variable::Users => v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64,
            Variable::Threshold => v.is_finite() && v > 0.0,
            _ => (0.0..=1.0).contains(&v),
        };
        if ok {
            Ok(())
        } else {
            let legal = match self {
                Variable::Users => "a positive integer",
                Variable::Threshold => "positive and finite",
                _ => "within [0, 1]",
            };
            Err(format!("sweep value {v} for {self:?} must be {legal}"))
        }
    }
}

/// A one-parameter sweep over a base scenario.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: Variable,
    pub values: Vec<f64>,
    #[serde(default)]
    pub scenario: ScenarioFile,
    /// Optimize `(P_rx, P_tx)` at every point instead of using the fixed
    /// activation probabilities.
    #[serde(default)]
    pub optimize: bool,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let spec: SweepSpec =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.values.is_empty() {
            return Err(CliError::Config("sweep has no values".into()));
        }
        for &v in &self.values {
            self.variable.check(v).map_err(CliError::Config)?;
        }
        if self.variable == Variable::Users && matches!(self.scenario.users, Some(Users::List(_))) {
            return Err(CliError::Config(
                "sweeping n needs the base scenario to give users as a count".into(),
            ));
        }
        for v in &self.values {
            self.point(*v)?;
        }
        Ok(())
    }

    /// Base scenario with the swept variable set to `value`.
    pub fn point(&self, value: f64) -> Result<Scenario, CliError> {
        let mut f = self.scenario.clone();
        match self.variable {
            Variable::Users => f.users = Some(Users::Count(value as usize)),
            Variable::Threshold => {
                f.threshold = Some(value);
                f.threshold_relay = None;
                f.threshold_destination = None;
            }
            Variable::SelfInterference => f.self_interference = Some(value),
            Variable::RelayAttempt => f.relay_attempt = Some(value),
            Variable::Attempt => {
                f.attempt = Some(value);
                if let Some(Users::List(list)) = &mut f.users {
                    for u in list {
                        u.attempt = None;
                    }
                }
            }
            Variable::RxOn => f.rx_on = Some(value),
            Variable::TxOn => f.tx_on = Some(value),
        }
        f.to_scenario()
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}
