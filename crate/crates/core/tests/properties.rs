use proptest::prelude::*;

use relaylab::analysis::analyze;
use relaylab::optimizer::{optimize_model, stability_region, ActivationModel};
use relaylab::oracle::{markov_stationary, slot_distribution, ExactProfile};
use relaylab::phy::{success_probability, Node, SymmetricLabels, TransmitSet};
use relaylab::queue::{empty_probability_symmetric, mean_queue_symmetric, symmetric_slot_distribution};
use relaylab::sim;
use relaylab::Scenario;

fn thresholds() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.2), Just(0.6), Just(1.2), Just(2.5), 0.05f64..3.0]
}

fn self_interference() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1e-10), Just(1e-6), Just(1.0), 0.0f64..1.0]
}

/// Scenario with per-user distances and attempt probabilities drawn at
/// random.
fn asymmetric() -> impl Strategy<Value = Scenario> {
    (1usize..=5, thresholds(), self_interference(), 0.5f64..1.0, 0.0f64..=1.0, 0.0f64..=1.0).prop_flat_map(
        |(n, gamma, g, q0, rx, tx)| {
            (
                prop::collection::vec((30.0f64..100.0, 100.0f64..180.0, 0.0f64..0.4), n),
                Just((n, gamma, g, q0, rx, tx)),
            )
                .prop_map(|(users, (n, gamma, g, q0, rx, tx))| {
                    let mut s = Scenario::reference(n, gamma, g, q0).with_activation(rx, tx);
                    for (i, (r, d, q)) in users.into_iter().enumerate() {
                        s.topology.users[i].to_relay.distance = r;
                        s.topology.users[i].to_destination.distance = d;
                        s.access.attempt[i] = q;
                    }
                    s
                })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perfect_cancellation_removes_self_interference(gamma in thresholds(), k in 1usize..5, dist in 20.0f64..150.0) {
        let mut s = Scenario::reference(5, gamma, 0.0, 0.95);
        s.topology.users[0].to_relay.distance = dist;
        let users: Vec<usize> = (0..k).collect();
        let p = |relay| success_probability(Node::User(0), Node::Relay, &TransmitSet::new(&users, relay), &s.topology, &s.phy).unwrap();
        prop_assert_eq!(p(true), p(false));
    }

    #[test]
    fn lone_transmitter_sees_only_noise(gamma in thresholds()) {
        let s = Scenario::reference(3, gamma, 1.0, 0.95);
        let p = success_probability(Node::Relay, Node::Destination, &TransmitSet::new(&[], true), &s.topology, &s.phy).unwrap();
        let h = 1e-2 * 80f64.powi(-4);
        prop_assert!((p - (-gamma * 1e-11 / h).exp()).abs() <= 1e-15);
    }

    #[test]
    fn symmetric_labels_match_any_tagged_user(gamma in thresholds(), g in self_interference(), pick in prop::collection::vec(any::<bool>(), 6), tag in 0usize..6, relay in any::<bool>()) {
        let s = Scenario::reference(6, gamma, g, 0.95);
        let labels = SymmetricLabels::new(&s.topology, &s.phy).unwrap();
        let mut users: Vec<usize> = (0..6).filter(|&i| pick[i] && i != tag).collect();
        users.push(tag);
        let k = users.len();
        let set = TransmitSet::new(&users, relay);
        let d = success_probability(Node::User(tag), Node::Destination, &set, &s.topology, &s.phy).unwrap();
        let r = success_probability(Node::User(tag), Node::Relay, &set, &s.topology, &s.phy).unwrap();
        prop_assert!((d - labels.user_dest(k, relay)).abs() <= 1e-15);
        prop_assert!((r - labels.user_relay(k, relay)).abs() <= 1e-15);
    }

    #[test]
    fn slot_families_sum_to_one(s in asymmetric()) {
        let d = slot_distribution(&s).unwrap();
        prop_assert!(d.normalization_error() <= 1e-12);
        prop_assert!(d.p0.iter().chain(&d.p1).chain(&d.r0).chain(&d.r1).all(|&p| p >= -1e-15));
        prop_assert!(d.p1_down >= 0.0);
        prop_assert_eq!(d.p0.len(), s.user_count() + 1);
    }

    #[test]
    fn arrivals_grow_with_receiver(s in asymmetric(), drx in 0.0f64..0.5) {
        let base = slot_distribution(&s).unwrap();
        let mut more_rx = s.clone();
        more_rx.access.rx_on = (s.access.rx_on + drx).min(1.0);
        let d = slot_distribution(&more_rx).unwrap();
        prop_assert!(d.lambda0() >= base.lambda0() - 1e-15);
        prop_assert!(d.lambda1() >= base.lambda1() - 1e-15);
    }

    /// A user's own admissions grow with its attempt probability; the total
    /// need not, since the extra attempts interfere with other users.
    #[test]
    fn own_admissions_grow_with_attempts(s in asymmetric(), dq in 0.0f64..0.5, who in 0usize..5) {
        let i = who % s.user_count();
        let base = ExactProfile::new(&s).unwrap();
        let mut more_q = s.clone();
        more_q.access.attempt[i] = (s.access.attempt[i] + dq).min(1.0);
        let p = ExactProfile::new(&more_q).unwrap();
        prop_assert!(p.silent.admitted[i] >= base.silent.admitted[i] - 1e-15);
        prop_assert!(p.transmitting.admitted[i] >= base.transmitting.admitted[i] - 1e-15);
    }

    #[test]
    fn truncated_chain_converges_monotonically(n in 1usize..6, gamma in thresholds(), rx in 0.1f64..1.0) {
        let s = Scenario::reference(n, gamma, 1.0, 0.99).with_activation(rx, 1.0);
        let d = slot_distribution(&s).unwrap();
        prop_assume!(d.drift_margin() > 0.0);
        let mut prev = f64::INFINITY;
        for t in [100, 400, 1600] {
            if let Ok(st) = markov_stationary(&d, t) {
                prop_assert!(st.empty() <= prev + 1e-15);
                prev = st.empty();
            }
        }
    }

    #[test]
    fn closed_forms_match_chain(n in 1usize..9, gamma in thresholds(), g in self_interference(), rx in 0.0f64..=1.0, tx in 0.05f64..=1.0) {
        let s = Scenario::reference(n, gamma, g, 0.99).with_activation(rx, tx);
        let labels = SymmetricLabels::new(&s.topology, &s.phy).unwrap();
        let d = symmetric_slot_distribution(&labels, 0.1, rx, 0.99 * tx);
        prop_assume!(d.drift_margin() > 0.0 && d.lambda1() <= 0.8 * analyze(&s).unwrap().queue.mu);
        let chain = markov_stationary(&slot_distribution(&s).unwrap(), 10_000).unwrap();
        prop_assert!((empty_probability_symmetric(&d).unwrap() - chain.empty()).abs() <= 1e-6);
        let q = mean_queue_symmetric(&d).unwrap();
        prop_assert!((q - chain.mean()).abs() <= 1e-3 * chain.mean().max(1e-12));
    }

    #[test]
    fn mean_queue_grows_toward_threshold(n in 1usize..9, gamma in thresholds(), g in self_interference(), rx in 0.2f64..=1.0, tx in 0.2f64..=1.0) {
        let s = Scenario::reference(n, gamma, g, 0.99).with_activation(rx, tx);
        let threshold = analyze(&s).unwrap().queue.q0_min;
        prop_assume!(matches!(threshold, Some(t) if t < 0.95));
        let t = threshold.unwrap();
        let mut prev = 0.0;
        for k in (1..=10).rev() {
            let mut p = s.clone();
            p.access.relay_attempt = (t + (1.0 - t) * k as f64 / 10.0).min(1.0);
            let q = analyze(&p).unwrap().queue;
            prop_assert!(q.stable);
            prop_assert!(q.mean_queue >= prev - 1e-12);
            prev = q.mean_queue;
        }
    }

    #[test]
    fn throughput_bounds_and_conservation(s in asymmetric()) {
        let a = analyze(&s).unwrap();
        prop_assume!(a.queue.stable);
        let t = a.throughput.unwrap();
        for (i, &ti) in t.total.iter().enumerate() {
            prop_assert!(ti <= s.access.attempt[i] + 1e-15);
            prop_assert!(ti >= 0.0);
        }
        let q_sum: f64 = s.access.attempt.iter().sum();
        prop_assert!(t.network <= q_sum + 1e-12);
        let relayed: f64 = t.relayed.iter().sum();
        prop_assert!((relayed - a.queue.lambda).abs() <= 1e-10);
    }

    #[test]
    fn self_interference_never_helps(n in 1usize..9, gamma in thresholds(), g in 0.0f64..0.5, dg in 0.0f64..0.5, rx in 0.0f64..=1.0, tx in 0.0f64..=1.0) {
        let at = |g: f64| analyze(&Scenario::reference(n, gamma, g, 0.99).with_activation(rx, tx)).unwrap();
        let (lo, hi) = (at(g), at(g + dg));
        prop_assume!(lo.queue.stable && hi.queue.stable);
        prop_assert!(hi.throughput.unwrap().total[0] <= lo.throughput.unwrap().total[0] + 1e-12);
    }

    #[test]
    fn optimizer_invariants(n in 1usize..16, gamma in thresholds(), g in self_interference()) {
        let s = Scenario::reference(n, gamma, g, 0.95);
        let model = ActivationModel::new(&s).unwrap();
        let coarse = optimize_model(&model, 11, false).unwrap();
        let fine = optimize_model(&model, 11, true).unwrap();
        prop_assert!(fine.feasible);
        prop_assert!(fine.network_throughput >= coarse.network_throughput);
        let e = model.evaluate(fine.rx_on, fine.tx_on);
        prop_assert!(e.lambda == 0.0 || fine.stability_margin > 0.0);
        let a = analyze(&s.clone().with_activation(fine.rx_on, fine.tx_on)).unwrap();
        prop_assert!((a.throughput.unwrap().network - fine.network_throughput).abs() <= 1e-12);
    }

    #[test]
    fn stability_mask_monotone_in_receiver(n in 1usize..16, gamma in thresholds(), g in self_interference()) {
        let m = stability_region(&Scenario::reference(n, gamma, g, 0.95), 11).unwrap();
        for j in 0..11 {
            prop_assert!(m.at(0, j));
            for i in 1..11 {
                prop_assert!(!m.at(i, j) || m.at(i - 1, j));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_conserves_packets(s in asymmetric(), seed in any::<u64>()) {
        let r = sim::run(&s, 20_000, seed, 100).unwrap();
        prop_assert_eq!(r.initial_queue + r.enqueued, r.dequeued + r.final_queue);
        prop_assert_eq!(r.delivered, r.delivered_direct + r.delivered_relayed);
        prop_assert!(r.max_queue >= r.final_queue);
        for e in [r.p_empty, r.mu, r.mu_per_attempt] {
            prop_assert!((0.0..=1.0).contains(&e.mean));
        }
        prop_assert_eq!(r, sim::run(&s, 20_000, seed, 100).unwrap());
    }
}
