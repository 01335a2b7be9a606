//! Direct, relayed, per-user and network-wide throughput.
//!
//! Relayed throughput counts packets admitted to the relay queue; under
//! stability every admitted packet is eventually delivered, so the two rates
//! coincide and the relayed throughput summed over users equals `λ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::ExactProfile;
use crate::phy::{success_probability, Node, SymmetricLabels, TransmitSet};
use crate::queue::{binomial_weights, QueueMetrics};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    /// Per-user direct throughput, packets/slot.
    pub direct: Vec<f64>,
    /// Per-user relayed throughput, packets/slot.
    pub relayed: Vec<f64>,
    /// Per-user total throughput.
    pub total: Vec<f64>,
    /// Network-wide throughput.
    pub network: f64,
    /// Empty-queue probability the report was computed with.
    pub p_empty: f64,
}

impl ThroughputReport {
    fn from_parts(direct: Vec<f64>, relayed: Vec<f64>, p_empty: f64) -> Self {
        let total: Vec<f64> = direct.iter().zip(&relayed).map(|(d, r)| d + r).collect();
        let network = total.iter().sum();
        ThroughputReport {
            direct,
            relayed,
            total,
            network,
            p_empty,
        }
    }
}

fn require_stable(queue: &QueueMetrics) -> Result<()> {
    if !queue.stable {
        return Err(Error::Unstable {
            drift: queue.lambda1 - queue.mu,
        });
    }
    Ok(())
}

/// Throughput of `n` identically placed users.
pub fn throughput_symmetric(scenario: &Scenario, labels: &SymmetricLabels, queue: &QueueMetrics) -> Result<ThroughputReport> {
    require_stable(queue)?;
    let n = scenario.user_count();
    let q = scenario.common_attempt();
    let a = &scenario.access;
    let busy = a.relay_transmit() * (1.0 - queue.p_empty);

    // Σ_k C(n-1,k) q^{k+1} (1-q)^{n-1-k} f(k+1)
    let weights = binomial_weights(n - 1, q);
    let avg = |f: &dyn Fn(usize) -> f64| -> f64 { weights.iter().enumerate().map(|(k, w)| q * w * f(k + 1)).sum() };
    let direct = busy * avg(&|k| labels.user_dest(k, true)) + (1.0 - busy) * avg(&|k| labels.user_dest(k, false));
    let relayed = busy * avg(&|k| (1.0 - labels.user_dest(k, true)) * a.rx_on * labels.user_relay(k, true))
        + (1.0 - busy) * avg(&|k| (1.0 - labels.user_dest(k, false)) * a.rx_on * labels.user_relay(k, false));
    Ok(ThroughputReport::from_parts(vec![direct; n], vec![relayed; n], queue.p_empty))
}

/// Throughput of two users with arbitrary placement and attempt probabilities.
pub fn throughput_two_user(scenario: &Scenario, queue: &QueueMetrics) -> Result<ThroughputReport> {
    require_stable(queue)?;
    if scenario.user_count() != 2 {
        return Err(Error::Contract(format!(
            "two-user throughput needs two users, got {}",
            scenario.user_count()
        )));
    }
    let (t, p, a) = (&scenario.topology, &scenario.phy, &scenario.access);
    let busy = a.relay_transmit() * (1.0 - queue.p_empty);
    let sp = |i: usize, rx: Node, users: &[usize], relay: bool| {
        success_probability(Node::User(i), rx, &TransmitSet::new(users, relay), t, p)
    };
    let mut direct = Vec::with_capacity(2);
    let mut relayed = Vec::with_capacity(2);
    for (i, j) in [(0usize, 1usize), (1, 0)] {
        let (qi, qj) = (a.attempt[i], a.attempt[j]);
        let alone = [i];
        let both = [i, j];
        let mut d = [0.0; 2];
        let mut r = [0.0; 2];
        for (idx, relay) in [(0, false), (1, true)] {
            let d_alone = sp(i, Node::Destination, &alone, relay)?;
            let d_both = sp(i, Node::Destination, &both, relay)?;
            let r_alone = sp(i, Node::Relay, &alone, relay)?;
            let r_both = sp(i, Node::Relay, &both, relay)?;
            d[idx] = qi * ((1.0 - qj) * d_alone + qj * d_both);
            r[idx] = qi * ((1.0 - qj) * (1.0 - d_alone) * a.rx_on * r_alone + qj * (1.0 - d_both) * a.rx_on * r_both);
        }
        direct.push(busy * d[1] + (1.0 - busy) * d[0]);
        relayed.push(busy * r[1] + (1.0 - busy) * r[0]);
    }
    Ok(ThroughputReport::from_parts(direct, relayed, queue.p_empty))
}

/// Throughput of a single user.
pub fn throughput_one_user(scenario: &Scenario, queue: &QueueMetrics) -> Result<ThroughputReport> {
    require_stable(queue)?;
    if scenario.user_count() != 1 {
        return Err(Error::Contract(format!(
            "one-user throughput needs one user, got {}",
            scenario.user_count()
        )));
    }
    let (t, p, a) = (&scenario.topology, &scenario.phy, &scenario.access);
    let q1 = a.attempt[0];
    let busy = a.relay_transmit() * (1.0 - queue.p_empty);
    let sp = |rx: Node, relay: bool| success_probability(Node::User(0), rx, &TransmitSet::new(&[0], relay), t, p);
    let (d_alone, d_relay) = (sp(Node::Destination, false)?, sp(Node::Destination, true)?);
    let (r_alone, r_relay) = (sp(Node::Relay, false)?, sp(Node::Relay, true)?);
    let direct = busy * q1 * d_relay + (1.0 - busy) * q1 * d_alone;
    let relayed = busy * q1 * (1.0 - d_relay) * a.rx_on * r_relay + (1.0 - busy) * q1 * (1.0 - d_alone) * a.rx_on * r_alone;
    Ok(ThroughputReport::from_parts(vec![direct], vec![relayed], queue.p_empty))
}

/// Throughput for any placement, from exact enumeration.
pub fn throughput_enumerated(scenario: &Scenario, profile: &ExactProfile, queue: &QueueMetrics) -> Result<ThroughputReport> {
    require_stable(queue)?;
    let a = &scenario.access;
    let (direct, relayed) = profile
        .user_throughput(queue.p_empty, a.rx_on, a.relay_transmit())
        .into_iter()
        .unzip();
    Ok(ThroughputReport::from_parts(direct, relayed, queue.p_empty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze;
    use crate::queue::one_user_metrics;

    fn sym(n: usize, gamma: f64, g: f64) -> Scenario {
        Scenario::reference(n, gamma, g, 0.95)
    }

    #[test]
    fn no_attempts_no_throughput() {
        let mut s = sym(4, 0.2, 1.0);
        s.access.attempt = vec![0.0; 4];
        let r = analyze(&s).unwrap();
        assert_eq!(r.throughput.as_ref().unwrap().network, 0.0);
        assert!(r.throughput.as_ref().unwrap().total.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn receiver_off_reduces_to_direct_only() {
        let s = sym(4, 0.6, 1.0).with_activation(0.0, 1.0);
        let r = analyze(&s).unwrap();
        assert_eq!(r.queue.p_empty, 1.0);
        assert!(r.throughput.as_ref().unwrap().relayed.iter().all(|&t| t == 0.0));
        let labels = SymmetricLabels::new(&s.topology, &s.phy).unwrap();
        let w = binomial_weights(3, 0.1);
        let expect: f64 = (0..=3).map(|k| w[k] * 0.1 * labels.user_dest(k + 1, false)).sum();
        assert!((r.throughput.as_ref().unwrap().direct[0] - expect).abs() <= 1e-15);
    }

    #[test]
    fn relayed_equals_arrival_rate() {
        for (n, gamma, g) in [(3, 0.2, 1.0), (5, 0.6, 1e-6), (8, 2.5, 1e-10)] {
            let s = sym(n, gamma, g).with_activation(0.7, 1.0);
            let r = analyze(&s).unwrap();
            assert!(r.queue.stable);
            let relayed: f64 = r.throughput.as_ref().unwrap().relayed.iter().sum();
            assert!((relayed - r.queue.lambda).abs() <= 1e-10, "n = {n}");
        }
    }

    #[test]
    fn one_user_branches() {
        let s = sym(1, 0.0, 1.0);
        let q = one_user_metrics(&s).unwrap().metrics;
        let r = throughput_one_user(&s, &q).unwrap();
        assert!((r.direct[0] - 0.1).abs() <= 1e-15);
        assert_eq!(r.relayed[0], 0.0);

        let s = sym(1, 0.6, 1.0).with_activation(0.4, 1.0);
        let mut q = one_user_metrics(&s).unwrap().metrics;
        q.p_empty = 1.0;
        let r = throughput_one_user(&s, &q).unwrap();
        let sp = |rx| success_probability(Node::User(0), rx, &TransmitSet::new(&[0], false), &s.topology, &s.phy).unwrap();
        let d = sp(Node::Destination);
        assert!((r.direct[0] - 0.1 * d).abs() <= 1e-15);
        assert!((r.relayed[0] - 0.1 * (1.0 - d) * 0.4 * sp(Node::Relay)).abs() <= 1e-15);
    }

    #[test]
    fn two_user_symmetric_matches_closed_form() {
        let s = sym(2, 0.6, 1e-6).with_activation(0.7, 0.7);
        let r = analyze(&s).unwrap();
        let two = throughput_two_user(&s, &r.queue).unwrap();
        let labels = SymmetricLabels::new(&s.topology, &s.phy).unwrap();
        let n = throughput_symmetric(&s, &labels, &r.queue).unwrap();
        assert!((two.total[0] - two.total[1]).abs() <= 1e-15);
        assert!((two.total[0] - n.total[0]).abs() <= 1e-12);
    }

    #[test]
    fn enumerated_matches_two_user_formulas() {
        let mut s = sym(2, 0.6, 1e-6).with_activation(0.6, 0.8);
        s.topology.users[0].to_relay.distance = 50.0;
        s.topology.users[1].to_relay.distance = 70.0;
        s.access.attempt[1] = 0.2;
        let r = analyze(&s).unwrap();
        let profile = ExactProfile::new(&s).unwrap();
        let a = throughput_enumerated(&s, &profile, &r.queue).unwrap();
        let b = throughput_two_user(&s, &r.queue).unwrap();
        for i in 0..2 {
            assert!((a.direct[i] - b.direct[i]).abs() <= 1e-14);
            assert!((a.relayed[i] - b.relayed[i]).abs() <= 1e-14);
        }
    }

    #[test]
    fn unstable_queue_rejected() {
        let s = sym(15, 0.2, 1e-10);
        let r = analyze(&s).unwrap();
        assert!(!r.queue.stable);
        let labels = SymmetricLabels::new(&s.topology, &s.phy).unwrap();
        assert!(matches!(throughput_symmetric(&s, &labels, &r.queue), Err(Error::Unstable { .. })));
    }

    #[test]
    fn bounded_by_attempts_and_hurt_by_self_interference() {
        for n in [1, 2, 5, 15] {
            for gamma in [0.2, 0.6, 2.5] {
                for (rx, tx) in [(0.3, 1.0), (1.0, 1.0), (0.5, 0.5)] {
                    let mut prev = f64::INFINITY;
                    for g in [0.0, 1e-10, 1e-8, 1e-6, 1e-3, 1.0] {
                        let s = Scenario::reference(n, gamma, g, 0.99).with_activation(rx, tx);
                        let r = analyze(&s).unwrap();
                        if !r.queue.stable {
                            continue;
                        }
                        let t = r.throughput.as_ref().unwrap().total[0];
                        assert!(t <= 0.1 + 1e-15);
                        assert!(r.throughput.as_ref().unwrap().network <= n as f64 * 0.1 + 1e-12);
                        // pointwise in (rx, tx): only checked while stable
                        assert!(t <= prev + 1e-12, "n={n} γ={gamma} g={g}: {t} > {prev}");
                        prev = t;
                    }
                }
            }
        }
    }
}
