//! Slot-by-slot Monte Carlo simulation of users, relay queue and destination.
//!
//! Link outcomes are drawn as independent Bernoulli trials with the
//! success probabilities from [`LinkTable`]; [`sinr_check`] instead draws raw
//! exponential fading and thresholds the SINR to validate those
//! probabilities themselves.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{analyze, Analysis};
use crate::error::{Error, Result};
use crate::phy::{path_gain, LinkTable, Node, TransmitSet};
use crate::scenario::Scenario;

pub const DEFAULT_WARMUP: u64 = 10_000;
pub const BATCHES: usize = 100;
/// Validation flags a metric whose |z| exceeds this.
pub const Z_LIMIT: f64 = 3.0;

/// Point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// Overall ratio `num/den` with the spread of per-batch ratios as error.
    fn ratio(num: impl Fn(&Batch) -> f64, den: impl Fn(&Batch) -> f64, batches: &[Batch]) -> Self {
        let total_den: f64 = batches.iter().map(&den).sum();
        let mean = if total_den > 0.0 {
            batches.iter().map(&num).sum::<f64>() / total_den
        } else {
            0.0
        };
        let ratios: Vec<f64> = batches
            .iter()
            .filter(|b| den(b) > 0.0)
            .map(|b| num(b) / den(b))
            .collect();
        Estimate {
            mean,
            se: standard_error(&ratios),
        }
    }

    fn per_slot(num: impl Fn(&Batch) -> f64, batches: &[Batch]) -> Self {
        Self::ratio(num, |b| b.slots as f64, batches)
    }

    /// `(value - reference) / se`; zero when both agree exactly.
    pub fn z(&self, reference: f64) -> f64 {
        let d = self.mean - reference;
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }
}

fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Counters for one batch of consecutive measured slots.
#[derive(Debug, Clone, Default)]
struct Batch {
    slots: u64,
    empty: u64,
    queue_sum: f64,
    admitted: u64,
    nonempty: u64,
    departures: u64,
    relay_attempts: u64,
    queue_start: u64,
    queue_end: u64,
    direct: Vec<u64>,
    relayed: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub slots: u64,
    pub warmup: u64,
    pub seed: u64,
    pub stream: u64,
    /// Admissions to the relay queue per slot.
    pub lambda: Estimate,
    /// Departures per slot with a nonempty queue.
    pub mu: Estimate,
    /// Departures per relay transmission.
    pub mu_per_attempt: Estimate,
    pub p_empty: Estimate,
    pub mean_queue: Estimate,
    /// Mean queue increment per slot; positive for a growing queue.
    pub queue_slope: Estimate,
    pub direct: Vec<Estimate>,
    pub relayed: Vec<Estimate>,
    pub total: Vec<Estimate>,
    pub network: Estimate,
    /// Counts over the measured slots.
    pub enqueued: u64,
    pub dequeued: u64,
    pub delivered: u64,
    pub delivered_direct: u64,
    pub delivered_relayed: u64,
    pub initial_queue: u64,
    pub final_queue: u64,
    pub max_queue: u64,
}

impl SimStats {
    /// Mean per-user total throughput.
    pub fn per_user(&self) -> Estimate {
        let n = self.total.len() as f64;
        Estimate {
            mean: self.network.mean / n,
            se: self.network.se / n,
        }
    }
}

/// Simulates `slots` measured slots after `warmup` unmeasured ones, starting
/// from an empty queue.
pub fn run(scenario: &Scenario, slots: u64, seed: u64, warmup: u64) -> Result<SimStats> {
    run_stream(scenario, slots, seed, 0, warmup)
}

/// Independent replications on separate streams of the same seed.
pub fn run_replications(scenario: &Scenario, slots: u64, seed: u64, warmup: u64, count: u64) -> Result<Vec<SimStats>> {
    (0..count)
        .into_par_iter()
        .map(|stream| run_stream(scenario, slots, seed, stream, warmup))
        .collect()
}

fn run_stream(scenario: &Scenario, slots: u64, seed: u64, stream: u64, warmup: u64) -> Result<SimStats> {
    if slots == 0 {
        return Err(Error::Contract("simulation needs at least one slot".into()));
    }
    if slots < BATCHES as u64 {
        return Err(Error::Contract(format!("simulation needs at least {BATCHES} slots for batch means")));
    }
    scenario.validate()?;
    let n = scenario.user_count();
    let links = LinkTable::new(&scenario.topology, &scenario.phy)?;
    let a = &scenario.access;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut queue: VecDeque<u32> = VecDeque::new();
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut captured: Vec<u32> = Vec::with_capacity(n);
    let mut batches: Vec<Batch> = Vec::with_capacity(BATCHES);
    let mut max_queue = 0u64;
    let total = warmup + slots;
    let mut current = Batch::default();
    let mut batch_index = 0usize;
    let batch_end = |b: usize| warmup + (b as u64 + 1) * slots / BATCHES as u64;

    for t in 0..total {
        let measuring = t >= warmup;
        if measuring && current.slots == 0 {
            current = Batch {
                queue_start: queue.len() as u64,
                direct: vec![0; n],
                relayed: vec![0; n],
                ..Batch::default()
            };
        }

        active.clear();
        for (i, &q) in a.attempt.iter().enumerate() {
            if rng.random::<f64>() < q {
                active.push(i);
            }
        }
        let backlogged = !queue.is_empty();
        let tx_gate = rng.random::<f64>() < a.tx_on;
        let relay_tx = backlogged && tx_gate && rng.random::<f64>() < a.relay_attempt;
        let rx_on = rng.random::<f64>() < a.rx_on;

        captured.clear();
        for &i in &active {
            if rng.random::<f64>() < links.user_to_destination(i, &active, relay_tx) {
                if measuring {
                    current.direct[i] += 1;
                }
            } else if rx_on && rng.random::<f64>() < links.user_to_relay(i, &active, relay_tx) {
                captured.push(i as u32);
            }
        }
        let departed = relay_tx && rng.random::<f64>() < links.relay_to_destination(&active);

        if measuring {
            let len = queue.len() as u64;
            current.slots += 1;
            current.queue_sum += len as f64;
            if len == 0 {
                current.empty += 1;
            } else {
                current.nonempty += 1;
            }
            current.relay_attempts += relay_tx as u64;
            current.departures += departed as u64;
            current.admitted += captured.len() as u64;
        }
        if departed {
            let source = queue.pop_front().expect("departure from a nonempty queue");
            if measuring {
                current.relayed[source as usize] += 1;
            }
        }
        queue.extend(captured.iter().copied());
        if measuring {
            max_queue = max_queue.max(queue.len() as u64);
            if t + 1 == batch_end(batch_index) {
                current.queue_end = queue.len() as u64;
                batches.push(std::mem::take(&mut current));
                batch_index += 1;
            }
        }
    }
    Ok(summarize(&batches, n, slots, warmup, seed, stream, max_queue))
}

fn summarize(batches: &[Batch], n: usize, slots: u64, warmup: u64, seed: u64, stream: u64, max_queue: u64) -> SimStats {
    let sum = |f: fn(&Batch) -> u64| batches.iter().map(f).sum::<u64>();
    let direct: Vec<Estimate> = (0..n).map(|i| Estimate::per_slot(|b| b.direct[i] as f64, batches)).collect();
    let relayed: Vec<Estimate> = (0..n).map(|i| Estimate::per_slot(|b| b.relayed[i] as f64, batches)).collect();
    let total: Vec<Estimate> = (0..n)
        .map(|i| Estimate::per_slot(|b| (b.direct[i] + b.relayed[i]) as f64, batches))
        .collect();
    let delivered_direct: u64 = batches.iter().flat_map(|b| &b.direct).sum();
    let delivered_relayed: u64 = batches.iter().flat_map(|b| &b.relayed).sum();
    SimStats {
        slots,
        warmup,
        seed,
        stream,
        lambda: Estimate::per_slot(|b| b.admitted as f64, batches),
        mu: Estimate::ratio(|b| b.departures as f64, |b| b.nonempty as f64, batches),
        mu_per_attempt: Estimate::ratio(|b| b.departures as f64, |b| b.relay_attempts as f64, batches),
        p_empty: Estimate::per_slot(|b| b.empty as f64, batches),
        mean_queue: Estimate::per_slot(|b| b.queue_sum, batches),
        queue_slope: Estimate::per_slot(|b| b.queue_end as f64 - b.queue_start as f64, batches),
        direct,
        relayed,
        total,
        network: Estimate::per_slot(|b| (b.direct.iter().sum::<u64>() + b.relayed.iter().sum::<u64>()) as f64, batches),
        enqueued: sum(|b| b.admitted),
        dequeued: sum(|b| b.departures),
        delivered: delivered_direct + delivered_relayed,
        delivered_direct,
        delivered_relayed,
        initial_queue: batches.first().map_or(0, |b| b.queue_start),
        final_queue: batches.last().map_or(0, |b| b.queue_end),
        max_queue,
    }
}

/// One analytic-versus-empirical comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub metric: String,
    pub analytic: f64,
    pub empirical: f64,
    pub se: f64,
    pub z: f64,
    pub flagged: bool,
}

impl ValidationRow {
    fn new(metric: impl Into<String>, analytic: f64, estimate: Estimate) -> Self {
        let z = estimate.z(analytic);
        ValidationRow {
            metric: metric.into(),
            analytic,
            empirical: estimate.mean,
            se: estimate.se,
            z,
            flagged: !(z.abs() <= Z_LIMIT),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub slots: u64,
    pub seed: u64,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !r.flagged)
    }
}

/// Compares analytic metrics against a simulation run. Identically placed
/// users share one pooled per-user throughput row.
pub fn compare(scenario: &Scenario, analysis: &Analysis, stats: &SimStats) -> Result<Vec<ValidationRow>> {
    let q = &analysis.queue;
    let t = analysis.throughput.as_ref().ok_or(Error::Unstable {
        drift: q.lambda1 - q.mu,
    })?;
    let mut rows = vec![
        ValidationRow::new("lambda", q.lambda, stats.lambda),
        ValidationRow::new("mu", q.mu, stats.mu),
        ValidationRow::new("p_empty", q.p_empty, stats.p_empty),
        ValidationRow::new("mean_queue", q.mean_queue, stats.mean_queue),
    ];
    if scenario.is_symmetric() {
        rows.push(ValidationRow::new("T", t.total[0], stats.per_user()));
    } else {
        for (i, (&analytic, &est)) in t.total.iter().zip(&stats.total).enumerate() {
            rows.push(ValidationRow::new(format!("T[{}]", i + 1), analytic, est));
        }
    }
    rows.push(ValidationRow::new("T_net", t.network, stats.network));
    Ok(rows)
}

/// Runs the simulator on a stable scenario and compares it with the
/// analysis.
pub fn validate(scenario: &Scenario, slots: u64, seed: u64) -> Result<ValidationReport> {
    let analysis = analyze(scenario)?;
    if !analysis.queue.stable {
        return Err(Error::Unstable {
            drift: analysis.queue.lambda1 - analysis.queue.mu,
        });
    }
    let stats = run(scenario, slots, seed, DEFAULT_WARMUP)?;
    Ok(ValidationReport {
        slots,
        seed,
        rows: compare(scenario, &analysis, &stats)?,
    })
}

/// Mean power of the residual self-interference at the transmitting relay
/// when decoding user `i`: `g · v(i,0) · P_tx(i)`.
fn self_interference_power(i: usize, scenario: &Scenario) -> f64 {
    scenario.phy.self_interference * scenario.topology.users[i].to_relay.fading * scenario.phy.user_power[i]
}

/// Draws one SINR trial: fading on every link is exponential with mean
/// `v·h`.
fn sinr_success(
    rng: &mut ChaCha8Rng,
    tx: Node,
    rx: Node,
    set: &TransmitSet,
    scenario: &Scenario,
) -> Result<bool> {
    let (topo, phy) = (&scenario.topology, &scenario.phy);
    let mean = |from: Node| -> Result<f64> { Ok(topo.link(from, rx)?.fading * path_gain(from, rx, topo, phy)?) };
    let gamma = phy.threshold(rx).ok_or_else(|| Error::Contract(format!("{rx} does not receive")))?;
    let noise = phy.noise(rx).ok_or_else(|| Error::Contract(format!("{rx} does not receive")))?;
    let signal = rng.sample::<f64, _>(Exp1) * mean(tx)?;
    let mut interference = 0.0;
    for k in set.iter() {
        if k != tx && k != rx {
            interference += rng.sample::<f64, _>(Exp1) * mean(k)?;
        }
    }
    if let (Node::User(i), Node::Relay) = (tx, rx) {
        if set.contains(Node::Relay) {
            interference += rng.sample::<f64, _>(Exp1) * self_interference_power(i, scenario);
        }
    }
    Ok(signal >= gamma * (noise + interference))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkCheck {
    pub link: String,
    pub users: Vec<usize>,
    pub relay_transmits: bool,
    pub analytic: f64,
    pub empirical: Estimate,
    pub z: f64,
}

/// Raw-fading estimates of a representative set of link success
/// probabilities, against [`crate::phy::success_probability`].
pub fn sinr_check(scenario: &Scenario, trials: u64, seed: u64) -> Result<Vec<LinkCheck>> {
    scenario.validate()?;
    if trials < 2 {
        return Err(Error::Contract("SINR check needs at least two trials".into()));
    }
    let n = scenario.user_count();
    let mut cases: Vec<(Node, Node, Vec<usize>, bool)> = Vec::new();
    for &size in &[1usize, 2, 3] {
        if size > n {
            continue;
        }
        let users: Vec<usize> = (0..size).collect();
        for relay in [false, true] {
            cases.push((Node::User(0), Node::Destination, users.clone(), relay));
            cases.push((Node::User(0), Node::Relay, users.clone(), relay));
        }
        cases.push((Node::Relay, Node::Destination, users.clone(), true));
    }
    cases.push((Node::Relay, Node::Destination, Vec::new(), true));

    cases
        .into_par_iter()
        .enumerate()
        .map(|(idx, (tx, rx, users, relay))| {
            let set = TransmitSet::new(&users, relay);
            let analytic = crate::phy::success_probability(tx, rx, &set, &scenario.topology, &scenario.phy)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let mut hits = 0u64;
            for _ in 0..trials {
                hits += sinr_success(&mut rng, tx, rx, &set, scenario)? as u64;
            }
            let p = hits as f64 / trials as f64;
            // binomial error under the analytic value, so rare events with no
            // hits still get a finite z
            let empirical = Estimate {
                mean: p,
                se: (analytic * (1.0 - analytic) / trials as f64).sqrt(),
            };
            Ok(LinkCheck {
                link: format!("{tx}->{rx}"),
                users,
                relay_transmits: relay,
                analytic,
                z: empirical.z(analytic),
                empirical,
            })
        })
        .collect()
}
