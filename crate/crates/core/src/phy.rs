//! Physical layer: path gains and SINR-threshold success probabilities under
//! Rayleigh fading, with residual self-interference at a full-duplex relay.
//!
//! A packet from `i` is decoded at `j` when its SINR reaches the receiver's
//! threshold. With unit-mean exponential fading scaled by `v(i,j)`, the
//! success probability over a transmit set `T` is
//!
//! ```text
//! exp(-γ_j η_j / (v h)) · (1 + γ_j r^α g)^-m · Π_{k ∈ T \ {i,j}} (1 + γ_j v_k h_k / (v h))^-1
//! ```
//!
//! where `m = 1` when the receiver is itself transmitting.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network node. Users are indexed from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    Relay,
    User(usize),
    Destination,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Relay => write!(f, "relay"),
            Node::User(i) => write!(f, "user {}", i + 1),
            Node::Destination => write!(f, "destination"),
        }
    }
}

/// One directed radio link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    /// Meters.
    pub distance: f64,
    /// Mean of the exponential fading gain, `v(i,j)`.
    pub fading: f64,
}

impl Link {
    pub fn new(distance: f64) -> Self {
        Link {
            distance,
            fading: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLinks {
    pub to_relay: Link,
    pub to_destination: Link,
}

/// Placement of the users, the relay and the destination. Users never
/// receive, so only user→relay, user→destination and relay→destination
/// links exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub relay_to_destination: Link,
    pub users: Vec<UserLinks>,
}

impl Topology {
    pub fn symmetric(n: usize, to_relay: f64, to_destination: f64, relay_to_destination: f64) -> Self {
        Topology {
            relay_to_destination: Link::new(relay_to_destination),
            users: vec![
                UserLinks {
                    to_relay: Link::new(to_relay),
                    to_destination: Link::new(to_destination),
                };
                n
            ],
        }
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    /// Link from `from` to `to`; `r(i,j) = r(j,i)` so either orientation of a
    /// stored pair is accepted.
    pub fn link(&self, from: Node, to: Node) -> Result<Link> {
        let user = |i: usize| self.users.get(i).ok_or(Error::MissingLink(from, to));
        match (from, to) {
            (Node::Relay, Node::Destination) | (Node::Destination, Node::Relay) => {
                Ok(self.relay_to_destination)
            }
            (Node::User(i), Node::Relay) | (Node::Relay, Node::User(i)) => Ok(user(i)?.to_relay),
            (Node::User(i), Node::Destination) | (Node::Destination, Node::User(i)) => {
                Ok(user(i)?.to_destination)
            }
            _ => Err(Error::MissingLink(from, to)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |what: String, l: &Link| -> Result<()> {
            if !(l.distance.is_finite() && l.distance > 0.0) {
                return Err(Error::InvalidTopology(format!(
                    "{what} distance must be positive, got {}",
                    l.distance
                )));
            }
            if !(l.fading.is_finite() && l.fading > 0.0) {
                return Err(Error::InvalidTopology(format!(
                    "{what} fading parameter must be positive, got {}",
                    l.fading
                )));
            }
            Ok(())
        };
        if self.users.is_empty() {
            return Err(Error::InvalidTopology("at least one user is required".into()));
        }
        check("relay-destination".into(), &self.relay_to_destination)?;
        for (i, u) in self.users.iter().enumerate() {
            check(format!("user {}-relay", i + 1), &u.to_relay)?;
            check(format!("user {}-destination", i + 1), &u.to_destination)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhyConfig {
    /// SINR threshold at the relay receiver.
    pub threshold_relay: f64,
    /// SINR threshold at the destination.
    pub threshold_destination: f64,
    pub path_loss_exponent: f64,
    /// Residual self-interference coefficient `g`: 0 is perfect cancellation.
    pub self_interference: f64,
    /// Watts.
    pub relay_power: f64,
    /// Watts, one per user.
    pub user_power: Vec<f64>,
    /// Receiver noise power at the relay, watts.
    pub noise_relay: f64,
    /// Receiver noise power at the destination, watts.
    pub noise_destination: f64,
}

impl PhyConfig {
    pub fn threshold(&self, rx: Node) -> Option<f64> {
        match rx {
            Node::Relay => Some(self.threshold_relay),
            Node::Destination => Some(self.threshold_destination),
            Node::User(_) => None,
        }
    }

    pub fn noise(&self, rx: Node) -> Option<f64> {
        match rx {
            Node::Relay => Some(self.noise_relay),
            Node::Destination => Some(self.noise_destination),
            Node::User(_) => None,
        }
    }

    pub fn power(&self, tx: Node) -> Option<f64> {
        match tx {
            Node::Relay => Some(self.relay_power),
            Node::User(i) => self.user_power.get(i).copied(),
            Node::Destination => None,
        }
    }

    pub fn validate(&self, users: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPhy(msg));
        for (name, g) in [
            ("relay SINR threshold", self.threshold_relay),
            ("destination SINR threshold", self.threshold_destination),
        ] {
            if !(g.is_finite() && g >= 0.0) {
                return bad(format!("{name} must be non-negative, got {g}"));
            }
        }
        if !(2.0..=7.0).contains(&self.path_loss_exponent) {
            return bad(format!(
                "path-loss exponent must lie in [2, 7], got {}",
                self.path_loss_exponent
            ));
        }
        if !(0.0..=1.0).contains(&self.self_interference) {
            return bad(format!(
                "self-interference coefficient must lie in [0, 1], got {}",
                self.self_interference
            ));
        }
        if self.user_power.len() != users {
            return bad(format!(
                "expected {users} user transmit powers, got {}",
                self.user_power.len()
            ));
        }
        let positive = std::iter::once(("relay power", self.relay_power))
            .chain(self.user_power.iter().map(|&p| ("user power", p)))
            .chain([("relay noise", self.noise_relay), ("destination noise", self.noise_destination)]);
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Nodes transmitting in one slot.
#[derive(Debug, Clone, Copy)]
pub struct TransmitSet<'a> {
    pub users: &'a [usize],
    pub relay: bool,
}

impl<'a> TransmitSet<'a> {
    pub fn new(users: &'a [usize], relay: bool) -> Self {
        TransmitSet { users, relay }
    }

    pub fn contains(&self, node: Node) -> bool {
        match node {
            Node::Relay => self.relay,
            Node::User(i) => self.users.contains(&i),
            Node::Destination => false,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Node> + '_ {
        self.users
            .iter()
            .map(|&i| Node::User(i))
            .chain(self.relay.then_some(Node::Relay))
    }
}

/// Received power factor `h(i,j) = P_tx(i) · r(i,j)^-α`.
pub fn path_gain(from: Node, to: Node, topo: &Topology, phy: &PhyConfig) -> Result<f64> {
    if from == to {
        return Err(Error::MissingLink(from, to));
    }
    let link = topo.link(from, to)?;
    if !(link.distance > 0.0) {
        return Err(Error::InvalidTopology(format!(
            "distance {from}-{to} must be positive, got {}",
            link.distance
        )));
    }
    let power = phy.power(from).ok_or(Error::MissingLink(from, to))?;
    Ok(power * link.distance.powf(-phy.path_loss_exponent))
}

/// Probability that `tx` is decoded at `rx` while every node in `set`
/// transmits.
pub fn success_probability(
    tx: Node,
    rx: Node,
    set: &TransmitSet<'_>,
    topo: &Topology,
    phy: &PhyConfig,
) -> Result<f64> {
    if !set.contains(tx) {
        return Err(Error::Contract(format!("{tx} is not in the transmit set")));
    }
    if tx == rx {
        return Err(Error::Contract(format!("{tx} cannot receive its own packet")));
    }
    let gamma = phy.threshold(rx).ok_or(Error::MissingLink(tx, rx))?;
    let noise = phy.noise(rx).ok_or(Error::MissingLink(tx, rx))?;
    let link = topo.link(tx, rx)?;
    let signal = link.fading * path_gain(tx, rx, topo, phy)?;

    let mut p = (-gamma * noise / signal).exp();
    if set.contains(rx) {
        p *= self_interference_factor(gamma, link.distance, phy);
    }
    for k in set.iter() {
        if k == tx || k == rx {
            continue;
        }
        let interferer = topo.link(k, rx)?.fading * path_gain(k, rx, topo, phy)?;
        p /= 1.0 + gamma * interferer / signal;
    }
    Ok(p)
}

/// `(1 + γ r^α g)^-1`, the attenuation applied when the receiver transmits.
fn self_interference_factor(gamma: f64, distance: f64, phy: &PhyConfig) -> f64 {
    1.0 / (1.0 + gamma * distance.powf(phy.path_loss_exponent) * phy.self_interference)
}

/// Per-link constants for fast repeated evaluation of [`success_probability`].
///
/// Produces the same values as [`success_probability`] (same operation
/// order), without re-validating links on every call.
#[derive(Debug, Clone)]
pub struct LinkTable {
    /// Mean received power `v·h` at [relay, destination] for users.
    user_signal: Vec<[f64; 2]>,
    /// Noise term at [relay, destination] for users.
    user_noise: Vec<[f64; 2]>,
    /// SI factor for each user's link into the transmitting relay.
    user_si: Vec<f64>,
    relay_signal: f64,
    relay_noise: f64,
    gamma: [f64; 2],
}

const AT_RELAY: usize = 0;
const AT_DEST: usize = 1;

impl LinkTable {
    pub fn new(topo: &Topology, phy: &PhyConfig) -> Result<Self> {
        let n = topo.user_count();
        let gamma = [phy.threshold_relay, phy.threshold_destination];
        let noise = [phy.noise_relay, phy.noise_destination];
        let mut user_signal = Vec::with_capacity(n);
        let mut user_noise = Vec::with_capacity(n);
        let mut user_si = Vec::with_capacity(n);
        for i in 0..n {
            let u = Node::User(i);
            let s = [
                topo.link(u, Node::Relay)?.fading * path_gain(u, Node::Relay, topo, phy)?,
                topo.link(u, Node::Destination)?.fading * path_gain(u, Node::Destination, topo, phy)?,
            ];
            user_noise.push([
                (-gamma[AT_RELAY] * noise[AT_RELAY] / s[AT_RELAY]).exp(),
                (-gamma[AT_DEST] * noise[AT_DEST] / s[AT_DEST]).exp(),
            ]);
            user_signal.push(s);
            user_si.push(self_interference_factor(
                gamma[AT_RELAY],
                topo.users[i].to_relay.distance,
                phy,
            ));
        }
        let relay_signal = topo.relay_to_destination.fading
            * path_gain(Node::Relay, Node::Destination, topo, phy)?;
        Ok(LinkTable {
            user_signal,
            user_noise,
            user_si,
            relay_signal,
            relay_noise: (-gamma[AT_DEST] * noise[AT_DEST] / relay_signal).exp(),
            gamma,
        })
    }

    pub fn user_count(&self) -> usize {
        self.user_signal.len()
    }

    /// Success of user `i` at the destination; `i` must be in `users`.
    pub fn user_to_destination(&self, i: usize, users: &[usize], relay: bool) -> f64 {
        let g = self.gamma[AT_DEST];
        let signal = self.user_signal[i][AT_DEST];
        let mut p = self.user_noise[i][AT_DEST];
        for &k in users {
            if k != i {
                p /= 1.0 + g * self.user_signal[k][AT_DEST] / signal;
            }
        }
        if relay {
            p /= 1.0 + g * self.relay_signal / signal;
        }
        p
    }

    /// Success of user `i` at the relay receiver; `relay` marks a
    /// simultaneously transmitting (self-interfering) relay.
    pub fn user_to_relay(&self, i: usize, users: &[usize], relay: bool) -> f64 {
        let g = self.gamma[AT_RELAY];
        let signal = self.user_signal[i][AT_RELAY];
        let mut p = self.user_noise[i][AT_RELAY];
        if relay {
            p *= self.user_si[i];
        }
        for &k in users {
            if k != i {
                p /= 1.0 + g * self.user_signal[k][AT_RELAY] / signal;
            }
        }
        p
    }

    pub fn relay_to_destination(&self, users: &[usize]) -> f64 {
        let g = self.gamma[AT_DEST];
        let mut p = self.relay_noise;
        for &k in users {
            p /= 1.0 + g * self.user_signal[k][AT_DEST] / self.relay_signal;
        }
        p
    }

    /// Mean received power `v·h` of user `i` at the relay and destination.
    pub fn user_mean_power(&self, i: usize) -> [f64; 2] {
        self.user_signal[i]
    }

    pub fn relay_mean_power(&self) -> f64 {
        self.relay_signal
    }
}

/// Success probabilities indexed by how many users transmit, for
/// identically placed users.
///
/// `user_dest(k, j)` is the success of a tagged user at the destination when
/// `k` users transmit in total (tagged one included) and the relay transmits
/// iff `j`; `user_relay(k, j)` the same at the relay receiver;
/// `relay_dest(k)` the relay's success with `k` users transmitting.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricLabels {
    relay_dest: Vec<f64>,
    user_dest: [Vec<f64>; 2],
    user_relay: [Vec<f64>; 2],
}

impl SymmetricLabels {
    /// Uses user 0 as the tagged user and users `0..k` as the transmit set,
    /// which is exact whenever all users share distances and powers.
    pub fn new(topo: &Topology, phy: &PhyConfig) -> Result<Self> {
        let n = topo.user_count();
        let all: Vec<usize> = (0..n).collect();
        let mut relay_dest = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let set = TransmitSet::new(&all[..k], true);
            relay_dest.push(success_probability(Node::Relay, Node::Destination, &set, topo, phy)?);
        }
        let mut user_dest = [Vec::with_capacity(n), Vec::with_capacity(n)];
        let mut user_relay = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for j in 0..2 {
            for k in 1..=n {
                let set = TransmitSet::new(&all[..k], j == 1);
                user_dest[j].push(success_probability(Node::User(0), Node::Destination, &set, topo, phy)?);
                user_relay[j].push(success_probability(Node::User(0), Node::Relay, &set, topo, phy)?);
            }
        }
        Ok(SymmetricLabels {
            relay_dest,
            user_dest,
            user_relay,
        })
    }

    pub fn users(&self) -> usize {
        self.relay_dest.len() - 1
    }

    /// `P_{0d,k}`.
    pub fn relay_dest(&self, k: usize) -> f64 {
        self.relay_dest[k]
    }

    /// `P_{d,k,j}` for `1 ≤ k ≤ n`.
    pub fn user_dest(&self, k: usize, relay_transmits: bool) -> f64 {
        assert!(k >= 1 && k <= self.users(), "k = {k} outside 1..={}", self.users());
        self.user_dest[relay_transmits as usize][k - 1]
    }

    /// `P_{0,k,j}` for `1 ≤ k ≤ n`.
    pub fn user_relay(&self, k: usize, relay_transmits: bool) -> f64 {
        assert!(k >= 1 && k <= self.users(), "k = {k} outside 1..={}", self.users());
        self.user_relay[relay_transmits as usize][k - 1]
    }
}
