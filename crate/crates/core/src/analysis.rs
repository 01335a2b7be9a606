//! Picks the closed forms that apply to a scenario and assembles queue and
//! throughput reports.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::{conditional_components, ExactProfile, SlotDistribution, MAX_ENUMERATED_USERS};
use crate::phy::SymmetricLabels;
use crate::queue::{
    empty_probability_two_user, is_stable, mean_queue_two_user, one_user_metrics, q0_min, q0_min_two_user,
    service_rate, symmetric_conditional_components, symmetric_slot_distribution, QueueMetrics,
};
use crate::scenario::Scenario;
use crate::throughput::{
    throughput_enumerated, throughput_one_user, throughput_symmetric, throughput_two_user, ThroughputReport,
};

/// Which set of formulas produced an [`Analysis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    OneUser,
    TwoUser,
    Symmetric,
    Enumerated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub route: Route,
    pub queue: QueueMetrics,
    /// `None` when the queue is unstable.
    pub throughput: Option<ThroughputReport>,
}

pub fn route_for(scenario: &Scenario) -> Result<Route> {
    let n = scenario.user_count();
    Ok(match n {
        1 => Route::OneUser,
        2 => Route::TwoUser,
        _ if scenario.is_symmetric() => Route::Symmetric,
        _ if n <= MAX_ENUMERATED_USERS => Route::Enumerated,
        _ => {
            return Err(Error::EnumerationTooLarge {
                users: n,
                limit: MAX_ENUMERATED_USERS,
            })
        }
    })
}

pub fn analyze(scenario: &Scenario) -> Result<Analysis> {
    scenario.validate()?;
    let route = route_for(scenario)?;
    log::debug!("analysis route {route:?} for {} users", scenario.user_count());
    let a = &scenario.access;
    let tx_threshold = |c: &crate::oracle::ConditionalComponents, two: bool| -> Option<f64> {
        if a.tx_on <= 0.0 {
            return None;
        }
        let t = if two { q0_min_two_user(c, a.tx_on) } else { q0_min(c, a.tx_on) };
        t.ok().and_then(|t| t.value())
    };

    let (queue, throughput) = match route {
        Route::OneUser => {
            let queue = one_user_metrics(scenario)?.metrics;
            let tp = stable_then(&queue, || throughput_one_user(scenario, &queue))?;
            (queue, tp)
        }
        Route::TwoUser => {
            let profile = ExactProfile::new(scenario)?;
            let dist = profile.slot_distribution(a.rx_on, a.relay_transmit());
            let c = conditional_components(scenario)?;
            let mu = a.relay_transmit() * profile.relay_success();
            let queue = two_user_metrics(&dist, mu, tx_threshold(&c, true))?;
            let tp = stable_then(&queue, || throughput_two_user(scenario, &queue))?;
            (queue, tp)
        }
        Route::Symmetric => {
            let labels = SymmetricLabels::new(&scenario.topology, &scenario.phy)?;
            let q = scenario.common_attempt();
            let n = scenario.user_count();
            let dist = symmetric_slot_distribution(&labels, q, a.rx_on, a.relay_transmit());
            let relay_dest: Vec<f64> = (0..=n).map(|k| labels.relay_dest(k)).collect();
            let mu = service_rate(n, q, a.relay_attempt, a.tx_on, &relay_dest)?;
            let c = symmetric_conditional_components(&labels, q, a.rx_on);
            let queue = QueueMetrics::from_distribution(&dist, mu, tx_threshold(&c, false));
            let tp = stable_then(&queue, || throughput_symmetric(scenario, &labels, &queue))?;
            (queue, tp)
        }
        Route::Enumerated => {
            let profile = ExactProfile::new(scenario)?;
            let dist = profile.slot_distribution(a.rx_on, a.relay_transmit());
            let c = conditional_components(scenario)?;
            let mu = a.relay_transmit() * profile.relay_success();
            let queue = QueueMetrics::from_distribution(&dist, mu, tx_threshold(&c, false));
            let tp = stable_then(&queue, || throughput_enumerated(scenario, &profile, &queue))?;
            (queue, tp)
        }
    };
    Ok(Analysis {
        route,
        queue,
        throughput,
    })
}

fn stable_then(
    queue: &QueueMetrics,
    f: impl FnOnce() -> Result<ThroughputReport>,
) -> Result<Option<ThroughputReport>> {
    if queue.stable {
        f().map(Some)
    } else {
        Ok(None)
    }
}

fn two_user_metrics(dist: &SlotDistribution, mu: f64, q0_min: Option<f64>) -> Result<QueueMetrics> {
    let lambda0 = dist.lambda0();
    let lambda1 = dist.lambda1();
    let stable = is_stable(lambda1, mu, lambda0);
    if !stable {
        return Ok(QueueMetrics {
            lambda0,
            lambda1,
            lambda: lambda1,
            mu,
            p_empty: 0.0,
            mean_queue: f64::INFINITY,
            q0_min,
            stable,
        });
    }
    let p_empty = empty_probability_two_user(dist)?;
    Ok(QueueMetrics {
        lambda0,
        lambda1,
        lambda: p_empty * lambda0 + (1.0 - p_empty) * lambda1,
        mu,
        p_empty,
        mean_queue: mean_queue_two_user(dist)?,
        q0_min,
        stable,
    })
}
