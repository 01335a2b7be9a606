//! Closed-form relay-queue statistics: service and arrival rates, empty-queue
//! probability, mean queue size and the stability threshold on `q0`.
//!
//! The queue-size chain moves up by the number of captured packets and down
//! by at most one per slot. With `D = p1_{-1} - Σ k p1[k]` (minus the drift
//! of a nonempty queue) and `λ0` the mean arrivals into an empty queue:
//!
//! ```text
//! P(Q = 0) = D / (D + λ0)
//! Q̄       = Σ k(k+3) p0[k] / (2(D + λ0)) + λ0 (2 p1_{-1} - Σ k(k+3) p1[k]) / (2(-D)(D + λ0))
//! ```
//!
//! Both also follow from the generating-function route `Q̄ = -s0 K''(1)/L''(1)`
//! with `A(z) = Σ a_i z^-i`, `B(z) = Σ b_i z^-i`; [`PgfCoefficients`]
//! evaluates that route independently.
//!
//! Note on the `Q̄` numerator: the form with `(Σ k p1[k] - p1_{-1})`
//! multiplying the first term does not match the stationary solution of the
//! chain for any `n`. The form above does, and at `n = 2` it is exactly the
//! two-user expression (`4 p0[1] + 10 p0[2]`). See [`mean_queue_symmetric`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::{weighted_count, ConditionalComponents, SlotDistribution};
use crate::phy::{success_probability, Node, SymmetricLabels, TransmitSet};
use crate::scenario::Scenario;

/// Relay-queue statistics for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueMetrics {
    /// Mean arrivals per slot into an empty queue.
    pub lambda0: f64,
    /// Mean arrivals per slot into a nonempty queue.
    pub lambda1: f64,
    /// Long-run arrival rate.
    pub lambda: f64,
    /// Service rate of a backlogged relay.
    pub mu: f64,
    pub p_empty: f64,
    pub mean_queue: f64,
    /// Smallest stabilizing relay attempt probability, when one exists.
    pub q0_min: Option<f64>,
    pub stable: bool,
}

impl QueueMetrics {
    /// Assemble metrics from a slot distribution and service rate using the
    /// general (any `n`) forms.
    pub fn from_distribution(dist: &SlotDistribution, mu: f64, q0_min: Option<f64>) -> Self {
        let rates = arrival_rates(dist);
        let stable = is_stable(rates.lambda1, mu, rates.lambda0);
        let (p_empty, mean_queue) = if stable {
            (
                empty_probability_symmetric(dist).unwrap_or(1.0),
                mean_queue_symmetric(dist).unwrap_or(0.0),
            )
        } else {
            (0.0, f64::INFINITY)
        };
        QueueMetrics {
            lambda0: rates.lambda0,
            lambda1: rates.lambda1,
            lambda: rates.lambda(p_empty),
            mu,
            p_empty,
            mean_queue,
            q0_min,
            stable,
        }
    }
}

/// Loynes condition, with an identically empty queue counted as stable.
pub fn is_stable(lambda1: f64, mu: f64, lambda0: f64) -> bool {
    lambda1 < mu || (lambda1 == 0.0 && lambda0 == 0.0)
}

/// Pascal's triangle row `C(n, 0..=n)` as floats (exact up to n ≈ 55).
pub(crate) fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0; n + 1];
    for k in 1..n {
        row[k] = row[k - 1] * (n - k + 1) as f64 / k as f64;
        row[k] = row[k].round();
    }
    row
}

/// Binomial weights `C(n,k) q^k (1-q)^{n-k}`.
pub(crate) fn binomial_weights(n: usize, q: f64) -> Vec<f64> {
    binomial_row(n)
        .into_iter()
        .enumerate()
        .map(|(k, c)| c * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32))
        .collect()
}

/// `μ = q0 · P_tx · Σ_k C(n,k) q^k (1-q)^{n-k} P_{0d,k}` for `n` symmetric users.
pub fn service_rate(n: usize, q: f64, relay_attempt: f64, tx_on: f64, relay_dest: &[f64]) -> Result<f64> {
    if relay_dest.len() < n + 1 {
        return Err(Error::Contract(format!(
            "relay success table has {} entries, need {}",
            relay_dest.len(),
            n + 1
        )));
    }
    let avg: f64 = binomial_weights(n, q)
        .iter()
        .zip(relay_dest)
        .map(|(w, p)| w * p)
        .sum();
    Ok(relay_attempt * tx_on * avg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalRates {
    pub lambda0: f64,
    pub lambda1: f64,
}

impl ArrivalRates {
    /// `λ = P(Q=0) λ0 + P(Q>0) λ1`.
    pub fn lambda(&self, p_empty: f64) -> f64 {
        p_empty * self.lambda0 + (1.0 - p_empty) * self.lambda1
    }
}

pub fn arrival_rates(dist: &SlotDistribution) -> ArrivalRates {
    ArrivalRates {
        lambda0: dist.lambda0(),
        lambda1: dist.lambda1(),
    }
}

fn require_users(dist: &SlotDistribution, max: usize) -> Result<()> {
    if dist.users() > max {
        return Err(Error::Contract(format!(
            "expected at most {max} users, distribution has {}",
            dist.users()
        )));
    }
    Ok(())
}

/// Two-user empty probability,
/// `(p1_{-1} - p1_1 - 2p1_2) / (p1_{-1} - p1_1 - 2p1_2 + λ0)`.
pub fn empty_probability_two_user(dist: &SlotDistribution) -> Result<f64> {
    require_users(dist, 2)?;
    let lambda0 = dist.lambda0();
    if lambda0 == 0.0 {
        return Ok(1.0);
    }
    let margin = dist.p1_down - dist.p1_at(1) - 2.0 * dist.p1_at(2);
    if !(margin > 0.0) {
        return Err(Error::Unstable { drift: -margin });
    }
    Ok(margin / (margin + lambda0))
}

/// `(p1_{-1} - Σ i p1_i) / (p1_{-1} - Σ i p1_i + λ0)`.
pub fn empty_probability_symmetric(dist: &SlotDistribution) -> Result<f64> {
    let lambda0 = dist.lambda0();
    if lambda0 == 0.0 {
        return Ok(1.0);
    }
    let margin = dist.drift_margin();
    if !(margin > 0.0) {
        return Err(Error::Unstable { drift: -margin });
    }
    Ok(margin / (margin + lambda0))
}

/// Two-user mean queue size in the printed closed form.
pub fn mean_queue_two_user(dist: &SlotDistribution) -> Result<f64> {
    require_users(dist, 2)?;
    let lambda0 = dist.lambda0();
    if lambda0 == 0.0 {
        return Ok(0.0);
    }
    let (p01, p02) = (dist.p0.get(1).copied().unwrap_or(0.0), dist.p0.get(2).copied().unwrap_or(0.0));
    let (p1m, p11, p12) = (dist.p1_down, dist.p1_at(1), dist.p1_at(2));
    let margin = p1m - p11 - 2.0 * p12;
    if !(margin > 0.0) {
        return Err(Error::Unstable { drift: -margin });
    }
    let total = margin + lambda0;
    Ok((4.0 * p01 + 10.0 * p02) / (2.0 * total)
        + lambda0 * (2.0 * p1m - 4.0 * p11 - 10.0 * p12) / (2.0 * (-margin) * total))
}

/// Mean queue size for any number of users.
///
/// Same shape as [`mean_queue_two_user`] with the sums extended to `n`; the
/// first term carries no drift factor (see the module docs).
pub fn mean_queue_symmetric(dist: &SlotDistribution) -> Result<f64> {
    let lambda0 = dist.lambda0();
    if lambda0 == 0.0 {
        return Ok(0.0);
    }
    let margin = dist.drift_margin();
    if !(margin > 0.0) {
        return Err(Error::Unstable { drift: -margin });
    }
    let total = margin + lambda0;
    let k3 = |v: &[f64]| -> f64 {
        v.iter().enumerate().map(|(k, p)| (k * (k + 3)) as f64 * p).sum()
    };
    Ok(k3(&dist.p0) / (2.0 * total) + lambda0 * (2.0 * dist.p1_down - k3(&dist.p1)) / (2.0 * (-margin) * total))
}

/// Transition coefficients of the queue chain in generating-function form:
/// `a_i = p0[i]`, `b_0 = p1_{-1}`, `b_{k+1} = p1[k]`, and `s0 = P(Q=0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PgfCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub s0: f64,
}

impl PgfCoefficients {
    /// Builds the coefficients with `s0` from the generating-function route.
    pub fn new(dist: &SlotDistribution) -> Self {
        let a = dist.p0.clone();
        let b: Vec<f64> = std::iter::once(dist.p1_down).chain(dist.p1.iter().copied()).collect();
        let mut c = PgfCoefficients { a, b, s0: 1.0 };
        c.s0 = c.empty_probability();
        c
    }

    // Derivatives at z = 1 of Σ c_i z^-i.
    fn d1(c: &[f64]) -> f64 {
        -c.iter().enumerate().map(|(i, v)| i as f64 * v).sum::<f64>()
    }
    fn d2(c: &[f64]) -> f64 {
        c.iter().enumerate().map(|(i, v)| (i * (i + 1)) as f64 * v).sum()
    }

    pub fn a_prime(&self) -> f64 {
        Self::d1(&self.a)
    }
    pub fn a_second(&self) -> f64 {
        Self::d2(&self.a)
    }
    pub fn b_prime(&self) -> f64 {
        Self::d1(&self.b)
    }
    pub fn b_second(&self) -> f64 {
        Self::d2(&self.b)
    }

    /// `(1 + B'(1)) / (1 + B'(1) - A'(1))`.
    pub fn empty_probability(&self) -> f64 {
        let bp = self.b_prime();
        let ap = self.a_prime();
        if ap == 0.0 {
            return 1.0;
        }
        (1.0 + bp) / (1.0 + bp - ap)
    }

    pub fn k_second(&self) -> f64 {
        let (a1, ap, app) = (self.a.iter().sum::<f64>(), self.a_prime(), self.a_second());
        let (bp, bpp) = (self.b_prime(), self.b_second());
        (2.0 * a1 - 2.0 * ap + app - bpp) * (-1.0 - bp) - (2.0 - bpp) * (-a1 + ap - bp)
    }

    pub fn l_second(&self) -> f64 {
        2.0 * (-1.0 - self.b_prime()).powi(2)
    }

    /// `Q̄ = -s0 K''(1) / L''(1)`.
    pub fn mean_queue(&self) -> Result<f64> {
        if self.a_prime() == 0.0 {
            return Ok(0.0);
        }
        let margin = 1.0 + self.b_prime();
        if !(margin > 0.0) {
            return Err(Error::Unstable { drift: -margin });
        }
        Ok(-self.s0 * self.k_second() / self.l_second())
    }
}

/// Threshold on `q0` above which the relay queue is stable:
/// `Σ k A_k / (P_tx (A + Σ k (A_k - B_k)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Q0Min {
    pub numerator: f64,
    pub denominator: f64,
}

impl Q0Min {
    /// Threshold value, `None` when no positive `q0` stabilizes the queue.
    pub fn value(&self) -> Option<f64> {
        if self.numerator == 0.0 {
            Some(0.0)
        } else if self.denominator > 0.0 {
            Some(self.numerator / self.denominator)
        } else {
            None
        }
    }

    /// A stabilizing `q0 ≤ 1` exists.
    pub fn feasible(&self) -> bool {
        matches!(self.value(), Some(v) if v < 1.0)
    }
}

pub fn q0_min(c: &ConditionalComponents, tx_on: f64) -> Result<Q0Min> {
    if !(tx_on > 0.0) {
        return Err(Error::Contract("q0 threshold needs a positive transmitter activation".into()));
    }
    let ka = c.silent_mean();
    let kb = c.transmitting_mean();
    Ok(Q0Min {
        numerator: ka,
        denominator: tx_on * (c.relay_success + ka - kb),
    })
}

/// Two-user threshold `(A1 + 2A2) / (P_tx (A + A1 + 2A2 - B1 - 2B2))`.
pub fn q0_min_two_user(c: &ConditionalComponents, tx_on: f64) -> Result<Q0Min> {
    if c.silent.len() > 3 {
        return Err(Error::Contract("two-user threshold needs at most two users".into()));
    }
    if !(tx_on > 0.0) {
        return Err(Error::Contract("q0 threshold needs a positive transmitter activation".into()));
    }
    let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    let (a1, a2) = (at(&c.silent, 1), at(&c.silent, 2));
    let (b1, b2) = (at(&c.transmitting, 1), at(&c.transmitting, 2));
    Ok(Q0Min {
        numerator: a1 + 2.0 * a2,
        denominator: tx_on * (c.relay_success + a1 + 2.0 * a2 - b1 - 2.0 * b2),
    })
}

/// Slot distribution for `n` identically placed users in closed form.
///
/// With `i` users transmitting, each is captured independently with
/// probability `P_{0,i,j} (1 - P_{d,i,j})`, so arrivals are binomial; a
/// transmitting relay departs with `P_{0d,i}` independently of arrivals. The
/// receiver gate applies once per slot.
pub fn symmetric_slot_distribution(labels: &SymmetricLabels, q: f64, rx_on: f64, s: f64) -> SlotDistribution {
    let n = labels.users();
    let weights = binomial_weights(n, q);
    let rows: Vec<Vec<f64>> = (0..=n).map(binomial_row).collect();
    let capture = |i: usize, j: bool| labels.user_relay(i, j) * (1.0 - labels.user_dest(i, j));
    // P(k of i captured) with capture probability c
    let binom = |i: usize, k: usize, c: f64| rows[i][k] * c.powi(k as i32) * (1.0 - c).powi((i - k) as i32);

    let mut silent_on = vec![0.0; n + 1];
    let mut tx_stay_on = vec![0.0; n + 1];
    let mut tx_down_on = vec![0.0; n + 1];
    for k in 1..=n {
        for i in k..=n {
            silent_on[k] += weights[i] * binom(i, k, capture(i, false));
            let c1 = capture(i, true);
            tx_stay_on[k] += weights[i] * (1.0 - labels.relay_dest(i)) * binom(i, k, c1);
            if k < i {
                tx_down_on[k] += weights[i] * labels.relay_dest(i) * binom(i, k + 1, c1);
            }
        }
    }
    // departure with no arrivals
    let mut down_on = weights[0] * labels.relay_dest(0);
    for (i, w) in weights.iter().enumerate().skip(1) {
        down_on += w * labels.relay_dest(i) * (1.0 - capture(i, true)).powi(i as i32);
    }
    let relay_avg: f64 = weights.iter().enumerate().map(|(i, w)| w * labels.relay_dest(i)).sum();

    let complete = |mut v: Vec<f64>| {
        v[0] = 1.0 - v[1..].iter().sum::<f64>();
        v
    };
    let r0 = complete((0..=n).map(|k| if k == 0 { 0.0 } else { rx_on * silent_on[k] }).collect());
    // B_k: arrivals while the relay transmits, with or without a departure
    let tx_arrivals: Vec<f64> = (0..=n)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                (k..=n)
                    .map(|i| weights[i] * binom(i, k, capture(i, true)))
                    .sum::<f64>()
                    * rx_on
            }
        })
        .collect();
    let r1 = complete((0..=n).map(|k| if k == 0 { 0.0 } else { (1.0 - s) * r0[k] + s * tx_arrivals[k] }).collect());
    let p1_down = s * (rx_on * down_on + (1.0 - rx_on) * relay_avg);
    let mut p1: Vec<f64> = (0..=n)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                (1.0 - s) * rx_on * silent_on[k] + s * rx_on * (tx_stay_on[k] + tx_down_on[k])
            }
        })
        .collect();
    p1[0] = 1.0 - p1_down - p1[1..].iter().sum::<f64>();
    SlotDistribution {
        p0: r0.clone(),
        p1_down,
        p1,
        r0,
        r1,
    }
}

/// Per-slot statistics of a single user, from the one-user closed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneUserMetrics {
    pub metrics: QueueMetrics,
    pub p0_1: f64,
    pub p1_1: f64,
    pub p1_down: f64,
}

/// Success probabilities of the one-user network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OneUserLinks {
    /// user→destination, relay silent / transmitting
    pub d: [f64; 2],
    /// user→relay, relay silent / transmitting
    pub r: [f64; 2],
    /// relay→destination, user silent / transmitting
    pub relay: [f64; 2],
}

impl OneUserLinks {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        if scenario.user_count() != 1 {
            return Err(Error::Contract(format!(
                "one-user formulas need exactly one user, got {}",
                scenario.user_count()
            )));
        }
        let (t, p) = (&scenario.topology, &scenario.phy);
        let u = Node::User(0);
        let sp = |tx, rx, users: &[usize], relay| success_probability(tx, rx, &TransmitSet::new(users, relay), t, p);
        Ok(OneUserLinks {
            d: [sp(u, Node::Destination, &[0], false)?, sp(u, Node::Destination, &[0], true)?],
            r: [sp(u, Node::Relay, &[0], false)?, sp(u, Node::Relay, &[0], true)?],
            relay: [sp(Node::Relay, Node::Destination, &[], true)?, sp(Node::Relay, Node::Destination, &[0], true)?],
        })
    }
}

pub fn one_user_metrics(scenario: &Scenario) -> Result<OneUserMetrics> {
    let l = OneUserLinks::new(scenario)?;
    let a = &scenario.access;
    let q1 = a.attempt[0];
    let rx = a.rx_on;
    let s = a.relay_transmit();

    let p0_1 = q1 * (1.0 - l.d[0]) * rx * l.r[0];
    let p1_1 = (1.0 - s) * q1 * (1.0 - l.d[0]) * rx * l.r[0]
        + s * q1 * (1.0 - l.d[1]) * rx * l.r[1] * (1.0 - l.relay[1]);
    let p1_down = s * (1.0 - q1) * l.relay[0]
        + s * q1 * l.relay[1] * l.d[1]
        + s * q1 * (1.0 - l.d[1]) * (1.0 - rx * l.r[1]) * l.relay[1];
    let mu = s * (q1 * l.relay[1] + (1.0 - q1) * l.relay[0]);
    let lambda0 = p0_1;
    let lambda1 = (1.0 - s) * p0_1 + s * q1 * (1.0 - l.d[1]) * rx * l.r[1];

    let c = conditional_components_one_user(&l, q1, rx);
    let q0_min = q0_min(&c, a.tx_on).ok().and_then(|t| t.value());

    let stable = is_stable(lambda1, mu, lambda0);
    let metrics = if stable {
        let margin = p1_down - p1_1;
        let (lambda, p_empty) = if p0_1 == 0.0 {
            (0.0, 1.0)
        } else {
            let total = margin + p0_1;
            (margin / total * lambda0 + p0_1 / total * lambda1, margin / total)
        };
        let dist = SlotDistribution {
            p0: vec![1.0 - p0_1, p0_1],
            p1_down,
            p1: vec![1.0 - p1_down - p1_1, p1_1],
            r0: vec![1.0 - lambda0, lambda0],
            r1: vec![1.0 - lambda1, lambda1],
        };
        QueueMetrics {
            lambda0,
            lambda1,
            lambda,
            mu,
            p_empty,
            mean_queue: mean_queue_two_user(&dist)?,
            q0_min,
            stable,
        }
    } else {
        QueueMetrics {
            lambda0,
            lambda1,
            lambda: lambda1,
            mu,
            p_empty: 0.0,
            mean_queue: f64::INFINITY,
            q0_min,
            stable,
        }
    };
    Ok(OneUserMetrics {
        metrics,
        p0_1,
        p1_1,
        p1_down,
    })
}

fn conditional_components_one_user(l: &OneUserLinks, q1: f64, rx: f64) -> ConditionalComponents {
    let a1 = q1 * (1.0 - l.d[0]) * rx * l.r[0];
    let b1 = q1 * (1.0 - l.d[1]) * rx * l.r[1];
    ConditionalComponents {
        relay_success: q1 * l.relay[1] + (1.0 - q1) * l.relay[0],
        silent: vec![1.0 - a1, a1],
        transmitting: vec![1.0 - b1, b1],
    }
}

/// Conditional components `(A, A_k, B_k)` for identical users, in closed form.
pub fn symmetric_conditional_components(labels: &SymmetricLabels, q: f64, rx_on: f64) -> ConditionalComponents {
    let n = labels.users();
    let silent = symmetric_slot_distribution(labels, q, rx_on, 0.0).r1;
    let transmitting = symmetric_slot_distribution(labels, q, rx_on, 1.0).r1;
    let relay_success = binomial_weights(n, q)
        .iter()
        .enumerate()
        .map(|(k, w)| w * labels.relay_dest(k))
        .sum();
    ConditionalComponents {
        relay_success,
        silent,
        transmitting,
    }
}

/// `Σ k v[k]`, exposed for callers that hold raw families.
pub fn mean_count(v: &[f64]) -> f64 {
    weighted_count(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{conditional_components, markov_stationary, slot_distribution};
    use approx::assert_relative_eq;

    fn sym(n: usize, gamma: f64, g: f64, rx: f64, tx: f64) -> Scenario {
        Scenario::reference(n, gamma, g, 0.95).with_activation(rx, tx)
    }

    fn closed_form(s: &Scenario) -> SlotDistribution {
        let labels = SymmetricLabels::new(&s.topology, &s.phy).unwrap();
        symmetric_slot_distribution(&labels, s.common_attempt(), s.access.rx_on, s.access.relay_transmit())
    }

    #[test]
    fn binomial_rows() {
        assert_eq!(binomial_row(5), vec![1.0, 5.0, 10.0, 10.0, 5.0, 1.0]);
        assert_eq!(binomial_row(0), vec![1.0]);
        assert_relative_eq!(binomial_weights(7, 0.3).iter().sum::<f64>(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn service_rate_cases() {
        assert_eq!(service_rate(3, 0.1, 0.0, 1.0, &[0.9, 0.8, 0.7, 0.6]).unwrap(), 0.0);
        assert_relative_eq!(service_rate(4, 0.3, 0.8, 0.5, &[1.0; 5]).unwrap(), 0.4, max_relative = 1e-14);
        let (p0, p1, p2) = (0.99, 0.9, 0.7);
        let mu = service_rate(2, 0.1, 0.95, 1.0, &[p0, p1, p2]).unwrap();
        assert_relative_eq!(mu, 0.95 * (0.81 * p0 + 0.18 * p1 + 0.01 * p2), max_relative = 1e-14);
        assert!(matches!(service_rate(3, 0.1, 0.9, 1.0, &[1.0; 2]), Err(Error::Contract(_))));
    }

    #[test]
    fn no_arrivals_give_empty_queue() {
        let mut s = sym(3, 0.2, 1.0, 1.0, 1.0);
        s.access.attempt = vec![0.0; 3];
        let d = closed_form(&s);
        assert_eq!(arrival_rates(&d).lambda(0.3), 0.0);
        assert_eq!(empty_probability_symmetric(&d).unwrap(), 1.0);
        assert_eq!(mean_queue_symmetric(&d).unwrap(), 0.0);
        let d = closed_form(&sym(3, 0.2, 1.0, 0.0, 1.0));
        let r = arrival_rates(&d);
        assert_eq!((r.lambda0, r.lambda1), (0.0, 0.0));
    }

    #[test]
    fn closed_form_matches_enumeration() {
        for n in [1, 2, 3, 5] {
            for (rx, tx) in [(1.0, 1.0), (0.3, 0.7)] {
                let s = sym(n, 0.2, 1e-6, rx, tx);
                let a = closed_form(&s);
                let b = slot_distribution(&s).unwrap();
                for k in 0..=n {
                    assert!((a.p0[k] - b.p0[k]).abs() <= 1e-12);
                    assert!((a.p1[k] - b.p1[k]).abs() <= 1e-12);
                    assert!((a.r1[k] - b.r1[k]).abs() <= 1e-12);
                }
                assert!((a.p1_down - b.p1_down).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn empty_probability_routes_agree() {
        let d = closed_form(&sym(5, 0.2, 1.0, 1.0, 1.0));
        let direct = empty_probability_symmetric(&d).unwrap();
        let pgf = PgfCoefficients::new(&d).empty_probability();
        assert!((direct - pgf).abs() <= 1e-14);
    }

    #[test]
    fn two_user_forms_specialize() {
        let d = closed_form(&sym(2, 0.6, 1.0, 0.7, 0.7));
        assert!((empty_probability_two_user(&d).unwrap() - empty_probability_symmetric(&d).unwrap()).abs() <= 1e-15);
        assert!((mean_queue_two_user(&d).unwrap() - mean_queue_symmetric(&d).unwrap()).abs() <= 1e-12);
        let pgf = PgfCoefficients::new(&d).mean_queue().unwrap();
        assert!((mean_queue_two_user(&d).unwrap() - pgf).abs() <= 1e-12);
        assert!(matches!(empty_probability_two_user(&closed_form(&sym(3, 0.6, 1.0, 1.0, 1.0))), Err(Error::Contract(_))));
    }

    #[test]
    fn mean_queue_matches_markov_chain() {
        for n in [2, 5] {
            let d = closed_form(&sym(n, 0.2, 1.0, 1.0, 1.0));
            let st = markov_stationary(&d, 10_000).unwrap();
            assert_relative_eq!(empty_probability_symmetric(&d).unwrap(), st.empty(), epsilon = 1e-6);
            assert_relative_eq!(mean_queue_symmetric(&d).unwrap(), st.mean(), max_relative = 1e-3);
        }
    }

    #[test]
    fn instability_reported() {
        let d = closed_form(&sym(15, 0.2, 1e-10, 1.0, 1.0));
        assert!(matches!(empty_probability_symmetric(&d), Err(Error::Unstable { .. })));
        assert!(matches!(mean_queue_symmetric(&d), Err(Error::Unstable { .. })));
    }

    #[test]
    fn threshold_separates_stable_from_unstable() {
        let s = sym(3, 0.2, 1.0, 1.0, 0.7);
        let c = conditional_components(&s).unwrap();
        let t = q0_min(&c, 0.7).unwrap().value().unwrap();
        assert!(t > 0.0 && t < 1.0);
        for (q0, stable) in [(t * 1.05, true), (t * 0.95, false)] {
            let mut s = s.clone();
            s.access.relay_attempt = q0;
            let d = slot_distribution(&s).unwrap();
            let mu = q0 * 0.7 * c.relay_success;
            assert_eq!(d.lambda1() < mu, stable, "q0 = {q0}");
        }
    }

    #[test]
    fn threshold_zero_without_arrivals() {
        let s = sym(3, 0.2, 1.0, 0.0, 1.0);
        let c = conditional_components(&s).unwrap();
        assert_eq!(q0_min(&c, 1.0).unwrap().value(), Some(0.0));
    }

    #[test]
    fn threshold_forms_specialize_at_two_users() {
        let s = sym(2, 0.6, 1e-6, 0.7, 0.3);
        let c = conditional_components(&s).unwrap();
        let a = q0_min(&c, 0.3).unwrap().value().unwrap();
        let b = q0_min_two_user(&c, 0.3).unwrap().value().unwrap();
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn closed_form_components_match_enumeration() {
        let s = sym(4, 0.6, 1e-6, 0.7, 0.3);
        let labels = SymmetricLabels::new(&s.topology, &s.phy).unwrap();
        let a = symmetric_conditional_components(&labels, 0.1, 0.7);
        let b = conditional_components(&s).unwrap();
        assert!((a.relay_success - b.relay_success).abs() <= 1e-14);
        for k in 0..=4 {
            assert!((a.silent[k] - b.silent[k]).abs() <= 1e-12);
            assert!((a.transmitting[k] - b.transmitting[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_user_matches_enumeration() {
        let s = sym(1, 0.2, 1.0, 1.0, 1.0);
        let one = one_user_metrics(&s).unwrap();
        let d = slot_distribution(&s).unwrap();
        assert!((one.p0_1 - d.p0[1]).abs() <= 1e-12);
        assert!((one.p1_1 - d.p1[1]).abs() <= 1e-12);
        assert!((one.p1_down - d.p1_down).abs() <= 1e-12);
        let labels = SymmetricLabels::new(&s.topology, &s.phy).unwrap();
        let mu = service_rate(1, 0.1, 0.95, 1.0, &[labels.relay_dest(0), labels.relay_dest(1)]).unwrap();
        assert!((one.metrics.mu - mu).abs() <= 1e-14);
    }

    #[test]
    fn one_user_silent() {
        let mut s = sym(1, 0.2, 1.0, 1.0, 1.0);
        s.access.attempt[0] = 0.0;
        let one = one_user_metrics(&s).unwrap();
        assert_eq!(one.p0_1, 0.0);
        assert_eq!(one.metrics.lambda, 0.0);
    }

    #[test]
    fn arrival_identity() {
        let d = closed_form(&sym(5, 0.6, 1.0, 0.7, 1.0));
        let mu = 0.95 * symmetric_conditional_components(
            &SymmetricLabels::new(&sym(5, 0.6, 1.0, 0.7, 1.0).topology, &sym(5, 0.6, 1.0, 0.7, 1.0).phy).unwrap(),
            0.1,
            0.7,
        )
        .relay_success;
        let m = QueueMetrics::from_distribution(&d, mu, None);
        assert!(m.stable);
        let expect = m.p_empty * m.lambda0 + (1.0 - m.p_empty) * m.lambda1;
        assert!((m.lambda - expect).abs() <= 1e-15);
    }

    #[test]
    fn mean_queue_grows_toward_threshold() {
        let base = sym(3, 0.2, 1.0, 1.0, 1.0);
        let c = conditional_components(&base).unwrap();
        let t = q0_min(&c, 1.0).unwrap().value().unwrap();
        let mut prev = 0.0;
        for f in [3.0, 2.0, 1.5, 1.2, 1.1, 1.05, 1.01] {
            let q0 = (t * f).min(1.0);
            let mut s = base.clone();
            s.access.relay_attempt = q0;
            let d = slot_distribution(&s).unwrap();
            let m = mean_queue_symmetric(&d).unwrap();
            if q0 < 1.0 {
                assert!(m > prev, "q0 = {q0}: {m} <= {prev}");
                prev = m;
            }
        }
    }
}
