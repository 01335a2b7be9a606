//! Exact per-slot event enumeration and a truncated stationary solver for the
//! relay queue.
//!
//! Enumeration walks every subset of transmitting users, so it handles any
//! placement and any per-user attempt probability. It is the ground truth
//! for the closed forms in [`crate::queue`] and the only source of the
//! per-slot probabilities for asymmetric users.
//!
//! Per-slot event model, given the transmit set:
//! - each transmitting user reaches the destination independently;
//! - a user whose direct attempt failed is captured by the relay when the
//!   receiver is on (one Bernoulli gate per slot) and its relay link succeeds;
//! - a backlogged relay transmits with probability `q0 · P_tx`, and its
//!   packet leaves the queue when the relay→destination link succeeds.
//!
//! Packets captured in a slot only become eligible for forwarding from the
//! next slot on.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phy::LinkTable;
use crate::scenario::Scenario;

/// Largest user count handled by subset enumeration.
pub const MAX_ENUMERATED_USERS: usize = 20;

/// Default truncation level of [`markov_stationary`].
pub const DEFAULT_TRUNCATION: usize = 10_000;

/// Largest probability mass allowed beyond the truncation level.
pub const MAX_TAIL_MASS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueState {
    Empty,
    Nonempty,
}

/// Per-slot queue-growth and arrival probabilities.
///
/// `p0[k]`: queue grows by `k` from empty. `p1_down`: a nonempty queue
/// shrinks by one. `p1[k]`: a nonempty queue grows by `k ≥ 0`. `r0[k]`,
/// `r1[k]`: the relay admits `k` packets from an empty / nonempty queue.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDistribution {
    pub p0: Vec<f64>,
    pub p1_down: f64,
    pub p1: Vec<f64>,
    pub r0: Vec<f64>,
    pub r1: Vec<f64>,
}

impl SlotDistribution {
    pub fn users(&self) -> usize {
        self.p0.len() - 1
    }

    /// Growth probability from a nonempty queue for `k ≥ -1`.
    pub fn p1_at(&self, k: isize) -> f64 {
        match k {
            -1 => self.p1_down,
            k if k >= 0 => self.p1.get(k as usize).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Mean arrivals from an empty queue, `λ0 = Σ k r0[k]`.
    pub fn lambda0(&self) -> f64 {
        weighted_count(&self.r0)
    }

    /// Mean arrivals from a nonempty queue, `λ1 = Σ k r1[k]`.
    pub fn lambda1(&self) -> f64 {
        weighted_count(&self.r1)
    }

    /// `p1_{-1} - Σ k p1[k]`: minus the mean drift of a nonempty queue.
    pub fn drift_margin(&self) -> f64 {
        self.p1_down - weighted_count(&self.p1)
    }

    /// Largest deviation of any family's total from one.
    pub fn normalization_error(&self) -> f64 {
        let p1: f64 = self.p1_down + self.p1.iter().sum::<f64>();
        [self.p0.iter().sum::<f64>(), p1, self.r0.iter().sum(), self.r1.iter().sum()]
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn weighted_count(v: &[f64]) -> f64 {
    v.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

/// Activation-independent averages for one relay state (silent or
/// transmitting) with the receiver on.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayStateProfile {
    /// Distribution of captured packets, index = count.
    pub arrivals: Vec<f64>,
    /// Joint growth distribution of a transmitting relay, index = growth + 1.
    /// Empty for the silent state.
    pub growth: Vec<f64>,
    /// Probability that the relay's own packet reaches the destination
    /// (zero for the silent state).
    pub departure: f64,
    /// Per-user probability of a direct delivery in a slot.
    pub direct: Vec<f64>,
    /// Per-user probability of being captured by the relay in a slot.
    pub admitted: Vec<f64>,
}

/// Exact per-slot statistics for both relay states.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactProfile {
    pub silent: RelayStateProfile,
    pub transmitting: RelayStateProfile,
}

impl ExactProfile {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let n = scenario.user_count();
        if n > MAX_ENUMERATED_USERS {
            return Err(Error::EnumerationTooLarge {
                users: n,
                limit: MAX_ENUMERATED_USERS,
            });
        }
        let table = LinkTable::new(&scenario.topology, &scenario.phy)?;
        let q = &scenario.access.attempt;
        Ok(ExactProfile {
            silent: enumerate_state(&table, q, false),
            transmitting: enumerate_state(&table, q, true),
        })
    }

    /// Slot distribution for given receiver gate and backlogged-relay
    /// transmit probability `s = q0 · P_tx`.
    pub fn slot_distribution(&self, rx_on: f64, s: f64) -> SlotDistribution {
        let n = self.silent.arrivals.len() - 1;
        let gate = |arr: &[f64]| -> Vec<f64> {
            let mut out: Vec<f64> = arr.iter().map(|a| rx_on * a).collect();
            out[0] += 1.0 - rx_on;
            out
        };
        let r0 = gate(&self.silent.arrivals);
        let r_tx = gate(&self.transmitting.arrivals);
        let r1: Vec<f64> = r0.iter().zip(&r_tx).map(|(a, b)| (1.0 - s) * a + s * b).collect();

        // growth of a transmitting relay, receiver gate applied per slot
        let dep = self.transmitting.departure;
        let mut g_tx: Vec<f64> = self.transmitting.growth.iter().map(|g| rx_on * g).collect();
        g_tx[0] += (1.0 - rx_on) * dep;
        g_tx[1] += (1.0 - rx_on) * (1.0 - dep);

        let p1_down = s * g_tx[0];
        let p1: Vec<f64> = (0..=n).map(|k| (1.0 - s) * r0[k] + s * g_tx[k + 1]).collect();
        SlotDistribution {
            p0: r0.clone(),
            p1_down,
            p1,
            r0,
            r1,
        }
    }

    /// Average relay→destination success over user transmit sets.
    pub fn relay_success(&self) -> f64 {
        self.transmitting.departure
    }

    /// Per-user expected deliveries `(direct, relayed)` for a given empty
    /// probability, receiver gate and relay transmit probability; the relayed
    /// part counts admissions, which equal deliveries for a stable queue.
    pub fn user_throughput(&self, p_empty: f64, rx_on: f64, s: f64) -> Vec<(f64, f64)> {
        let busy = s * (1.0 - p_empty);
        (0..self.silent.direct.len())
            .map(|i| {
                let d = (1.0 - busy) * self.silent.direct[i] + busy * self.transmitting.direct[i];
                let r = rx_on
                    * ((1.0 - busy) * self.silent.admitted[i] + busy * self.transmitting.admitted[i]);
                (d, r)
            })
            .collect()
    }
}

#[derive(Clone)]
struct Accum {
    arrivals: Vec<f64>,
    growth: Vec<f64>,
    departure: f64,
    direct: Vec<f64>,
    admitted: Vec<f64>,
}

impl Accum {
    fn zero(n: usize) -> Self {
        Accum {
            arrivals: vec![0.0; n + 1],
            growth: vec![0.0; n + 2],
            departure: 0.0,
            direct: vec![0.0; n],
            admitted: vec![0.0; n],
        }
    }

    fn add(&mut self, other: &Accum) {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.arrivals, &other.arrivals);
        add(&mut self.growth, &other.growth);
        self.departure += other.departure;
        add(&mut self.direct, &other.direct);
        add(&mut self.admitted, &other.admitted);
    }
}

/// Subsets are split into a fixed number of contiguous chunks so the
/// summation order, and hence the result, does not depend on scheduling.
const CHUNKS: u64 = 64;

fn enumerate_state(table: &LinkTable, q: &[f64], relay: bool) -> RelayStateProfile {
    let n = q.len();
    let total: u64 = 1 << n;
    let chunks = CHUNKS.min(total);
    let per = total.div_ceil(chunks);
    let partial: Vec<Accum> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accum::zero(n);
            let mut users = Vec::with_capacity(n);
            let mut capture = Vec::with_capacity(n);
            let mut conv = vec![0.0; n + 1];
            for mask in c * per..((c + 1) * per).min(total) {
                users.clear();
                let mut w = 1.0;
                for (i, &qi) in q.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        users.push(i);
                        w *= qi;
                    } else {
                        w *= 1.0 - qi;
                    }
                }
                if w == 0.0 {
                    continue;
                }
                capture.clear();
                for &i in &users {
                    let d = table.user_to_destination(i, &users, relay);
                    let c = (1.0 - d) * table.user_to_relay(i, &users, relay);
                    acc.direct[i] += w * d;
                    acc.admitted[i] += w * c;
                    capture.push(c);
                }
                poisson_binomial(&capture, &mut conv);
                for (k, &p) in conv.iter().enumerate().take(users.len() + 1) {
                    acc.arrivals[k] += w * p;
                }
                if relay {
                    let dep = table.relay_to_destination(&users);
                    acc.departure += w * dep;
                    for (k, &p) in conv.iter().enumerate().take(users.len() + 1) {
                        // k arrivals with departure: growth k-1 at index k
                        acc.growth[k] += w * p * dep;
                        acc.growth[k + 1] += w * p * (1.0 - dep);
                    }
                }
            }
            acc
        })
        .collect();
    let mut acc = Accum::zero(n);
    for p in &partial {
        acc.add(p);
    }
    RelayStateProfile {
        arrivals: acc.arrivals,
        growth: if relay { acc.growth } else { Vec::new() },
        departure: acc.departure,
        direct: acc.direct,
        admitted: acc.admitted,
    }
}

/// Distribution of the number of successes among independent Bernoulli
/// trials, written into `out[0..=p.len()]`.
fn poisson_binomial(p: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    out[0] = 1.0;
    for (m, &pi) in p.iter().enumerate() {
        for k in (1..=m + 1).rev() {
            out[k] = out[k] * (1.0 - pi) + out[k - 1] * pi;
        }
        out[0] *= 1.0 - pi;
    }
}

/// Growth row and arrival row for one queue state.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRows {
    /// `growth[k + 1]` is the probability of growing by `k`, `k = -1..=n`.
    pub growth: Vec<f64>,
    pub arrivals: Vec<f64>,
}

/// Exact per-slot distribution for one queue state of `scenario`.
pub fn enumerate_slot(scenario: &Scenario, state: QueueState) -> Result<SlotRows> {
    let dist = slot_distribution(scenario)?;
    Ok(match state {
        QueueState::Empty => SlotRows {
            growth: std::iter::once(0.0).chain(dist.p0.iter().copied()).collect(),
            arrivals: dist.r0,
        },
        QueueState::Nonempty => SlotRows {
            growth: std::iter::once(dist.p1_down).chain(dist.p1.iter().copied()).collect(),
            arrivals: dist.r1,
        },
    })
}

/// Exact [`SlotDistribution`] of `scenario` by subset enumeration.
pub fn slot_distribution(scenario: &Scenario) -> Result<SlotDistribution> {
    let a = &scenario.access;
    Ok(ExactProfile::new(scenario)?.slot_distribution(a.rx_on, a.relay_transmit()))
}

/// Arrival distributions conditioned on the relay's transmit decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalComponents {
    /// `A`: relay→destination success averaged over user transmit sets, so
    /// that `μ = q0 · P_tx · A`.
    pub relay_success: f64,
    /// `A_k`: probability of `k` arrivals while the relay is silent.
    pub silent: Vec<f64>,
    /// `B_k`: probability of `k` arrivals while the relay transmits.
    pub transmitting: Vec<f64>,
}

impl ConditionalComponents {
    /// `Σ k A_k`.
    pub fn silent_mean(&self) -> f64 {
        weighted_count(&self.silent)
    }

    /// `Σ k B_k`.
    pub fn transmitting_mean(&self) -> f64 {
        weighted_count(&self.transmitting)
    }
}

pub fn conditional_components(scenario: &Scenario) -> Result<ConditionalComponents> {
    let profile = ExactProfile::new(scenario)?;
    let rx = scenario.access.rx_on;
    // forcing the relay silent / transmitting is s = 0 / s = 1
    let silent = profile.slot_distribution(rx, 0.0).r1;
    let transmitting = profile.slot_distribution(rx, 1.0).r1;
    Ok(ConditionalComponents {
        relay_success: profile.relay_success(),
        silent,
        transmitting,
    })
}

/// Truncated stationary distribution of the relay queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    /// `probs[k] = P(Q = k)` for `k = 0..=N`.
    pub probs: Vec<f64>,
    /// Estimated mass beyond the truncation level.
    pub tail: f64,
}

impl Stationary {
    pub fn empty(&self) -> f64 {
        self.probs[0]
    }

    pub fn mean(&self) -> f64 {
        weighted_count(&self.probs)
    }
}

/// Stationary distribution of the queue-size chain on `0..=truncation`.
///
/// The chain moves down by at most one per slot, so balancing the flow
/// across each cut `{0..m} | {m+1..}` gives the next state's mass from the
/// previous ones without a linear solve; all terms are non-negative.
pub fn markov_stationary(dist: &SlotDistribution, truncation: usize) -> Result<Stationary> {
    if truncation < 100 {
        return Err(Error::Contract(format!(
            "truncation level must be at least 100, got {truncation}"
        )));
    }
    let no_arrivals = dist.p0.iter().skip(1).all(|&p| p == 0.0);
    if no_arrivals {
        let mut probs = vec![0.0; truncation + 1];
        probs[0] = 1.0;
        return Ok(Stationary { probs, tail: 0.0 });
    }
    let margin = dist.drift_margin();
    if !(margin > 0.0) || dist.p1_down <= 0.0 {
        return Err(Error::Unstable { drift: -margin });
    }

    let n = dist.users();
    // tail0[m] = P(growth from empty > m), tail1[l] = P(growth from nonempty > l)
    let tails = |v: &[f64]| -> Vec<f64> {
        let mut t = vec![0.0; n + 1];
        let mut acc = 0.0;
        for m in (0..=n).rev() {
            t[m] = acc;
            acc += v[m];
        }
        t
    };
    let tail0 = tails(&dist.p0);
    let tail1 = tails(&dist.p1);

    let mut x = vec![0.0; truncation + 1];
    x[0] = 1.0;
    for m in 0..truncation {
        let mut up = if m < n { x[0] * tail0[m] } else { 0.0 };
        for j in (m + 1).saturating_sub(n).max(1)..=m {
            up += x[j] * tail1[m - j];
        }
        x[m + 1] = up / dist.p1_down;
    }
    let total: f64 = x.iter().sum();
    let probs: Vec<f64> = x.iter().map(|v| v / total).collect();

    let last = probs[truncation];
    // past this level the recursion is in subnormal range and the ratio is noise
    let ratio = if last > 1e-280 {
        last / probs[truncation - 1]
    } else {
        0.0
    };
    let tail = if ratio < 1.0 {
        last * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    if tail > MAX_TAIL_MASS {
        return Err(Error::TruncationTail { tail, truncation });
    }
    Ok(Stationary { probs, tail })
}
