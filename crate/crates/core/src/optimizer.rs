//! Choice of receiver/transmitter activation probabilities maximizing
//! network throughput subject to a stable relay queue.
//!
//! The objective is not concave, so it is searched exhaustively on a uniform
//! grid over `[0,1]²` and the best feasible point is optionally polished by
//! coordinate-wise golden-section search inside its grid cell.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{route_for, Route};
use crate::error::{Error, Result};
use crate::oracle::ExactProfile;
use crate::phy::SymmetricLabels;
use crate::queue::binomial_weights;
use crate::scenario::Scenario;

/// Required slack `μ - λ` for a point with arrivals to count as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Objective values closer than this are ties, broken toward lower
/// activation (sum first, then receiver).
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Grid resolution used when none is requested.
pub const DEFAULT_GRID: usize = 51;

const GOLDEN_ITERATIONS: usize = 48;

/// Activation-independent per-user rates; evaluating a point is O(n).
#[derive(Debug, Clone)]
pub struct ActivationModel {
    relay_attempt: f64,
    relay_success: f64,
    /// Per user: direct delivery with the relay silent / transmitting.
    direct: Vec<[f64; 2]>,
    /// Per user: capture with the receiver on, relay silent / transmitting.
    admitted: Vec<[f64; 2]>,
}

/// Queue and throughput at one activation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub rx_on: f64,
    pub tx_on: f64,
    pub lambda: f64,
    pub lambda1: f64,
    pub mu: f64,
    pub p_empty: f64,
    /// Network throughput; meaningful only when `feasible`.
    pub network_throughput: f64,
    pub feasible: bool,
}

impl Evaluation {
    fn objective(&self) -> f64 {
        if self.feasible {
            self.network_throughput
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl ActivationModel {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let q0 = scenario.access.relay_attempt;
        if route_for(scenario)? == Route::Symmetric {
            let labels = SymmetricLabels::new(&scenario.topology, &scenario.phy)?;
            let n = scenario.user_count();
            let q = scenario.common_attempt();
            let w = binomial_weights(n - 1, q);
            let avg = |f: &dyn Fn(usize) -> f64| -> f64 { w.iter().enumerate().map(|(k, w)| q * w * f(k + 1)).sum() };
            let direct = [avg(&|k| labels.user_dest(k, false)), avg(&|k| labels.user_dest(k, true))];
            let admitted = [
                avg(&|k| (1.0 - labels.user_dest(k, false)) * labels.user_relay(k, false)),
                avg(&|k| (1.0 - labels.user_dest(k, true)) * labels.user_relay(k, true)),
            ];
            let relay_success = binomial_weights(n, q)
                .iter()
                .enumerate()
                .map(|(k, w)| w * labels.relay_dest(k))
                .sum();
            Ok(ActivationModel {
                relay_attempt: q0,
                relay_success,
                direct: vec![direct; n],
                admitted: vec![admitted; n],
            })
        } else {
            let p = ExactProfile::new(scenario)?;
            let pair = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(&x, &y)| [x, y]).collect::<Vec<_>>();
            Ok(ActivationModel {
                relay_attempt: q0,
                relay_success: p.relay_success(),
                direct: pair(&p.silent.direct, &p.transmitting.direct),
                admitted: pair(&p.silent.admitted, &p.transmitting.admitted),
            })
        }
    }

    pub fn evaluate(&self, rx_on: f64, tx_on: f64) -> Evaluation {
        let s = self.relay_attempt * tx_on;
        let sum = |v: &[[f64; 2]], j: usize| v.iter().map(|x| x[j]).sum::<f64>();
        let (adm_sil, adm_tx) = (sum(&self.admitted, 0), sum(&self.admitted, 1));
        let lambda0 = rx_on * adm_sil;
        let lambda1 = rx_on * ((1.0 - s) * adm_sil + s * adm_tx);
        let mu = s * self.relay_success;

        let (feasible, p_empty, lambda) = if lambda0 == 0.0 {
            (true, 1.0, 0.0)
        } else if lambda1 < mu {
            let margin = mu - lambda1;
            let p_empty = margin / (margin + lambda0);
            let lambda = p_empty * lambda0 + (1.0 - p_empty) * lambda1;
            (lambda <= mu - STABILITY_MARGIN, p_empty, lambda)
        } else {
            (false, 0.0, lambda1)
        };
        let busy = s * (1.0 - p_empty);
        let network_throughput = self
            .direct
            .iter()
            .zip(&self.admitted)
            .map(|(d, a)| (1.0 - busy) * d[0] + busy * d[1] + rx_on * ((1.0 - busy) * a[0] + busy * a[1]))
            .sum();
        Evaluation {
            rx_on,
            tx_on,
            lambda,
            lambda1,
            mu,
            p_empty,
            network_throughput,
            feasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub rx_on: f64,
    pub tx_on: f64,
    pub network_throughput: f64,
    pub feasible: bool,
    /// `P_rx + P_tx`, reported as a relative energy indicator.
    pub energy_proxy: f64,
    /// `μ - λ` at the optimum.
    pub stability_margin: f64,
    pub grid_resolution: usize,
    pub refinement_steps: usize,
    /// Smallest `λ - μ` seen on the grid when nothing was feasible.
    pub min_gap: Option<f64>,
}

fn grid_value(i: usize, resolution: usize) -> f64 {
    i as f64 / (resolution - 1) as f64
}

/// Evaluates every grid point, row-major in `(rx, tx)`.
fn evaluate_grid(model: &ActivationModel, resolution: usize) -> Vec<Evaluation> {
    (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| model.evaluate(grid_value(idx / resolution, resolution), grid_value(idx % resolution, resolution)))
        .collect()
}

/// `a` is preferred over `b`: clearly better objective, or a tie with lower
/// activation.
fn preferred(a: &Evaluation, b: &Evaluation) -> bool {
    let (oa, ob) = (a.objective(), b.objective());
    if oa > ob + TIE_TOLERANCE {
        return true;
    }
    if ob > oa + TIE_TOLERANCE || !a.feasible {
        return false;
    }
    let (ea, eb) = (a.rx_on + a.tx_on, b.rx_on + b.tx_on);
    ea < eb || (ea == eb && a.rx_on < b.rx_on)
}

/// Best point among `points` under the tie-breaking policy.
fn select(points: &[Evaluation]) -> Option<Evaluation> {
    let best = points.iter().map(Evaluation::objective).fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return None;
    }
    points
        .iter()
        .filter(|e| e.objective() >= best - TIE_TOLERANCE)
        .copied()
        .reduce(|a, b| {
            let (ea, eb) = (a.rx_on + a.tx_on, b.rx_on + b.tx_on);
            if eb < ea || (eb == ea && b.rx_on < a.rx_on) {
                b
            } else {
                a
            }
        })
}

/// Maximizer of `f` on `[lo, hi]` by golden-section search.
fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERATIONS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Golden-section over one coordinate of the best value of a golden-section
/// search over the other.
fn nested_golden(model: &ActivationModel, rx_range: (f64, f64), tx_range: (f64, f64), rx_outer: bool) -> Evaluation {
    let inner = |outer: f64| -> Evaluation {
        if rx_outer {
            let tx = golden_section(|x| model.evaluate(outer, x).objective(), tx_range.0, tx_range.1);
            model.evaluate(outer, tx)
        } else {
            let rx = golden_section(|x| model.evaluate(x, outer).objective(), rx_range.0, rx_range.1);
            model.evaluate(rx, outer)
        }
    };
    let (lo, hi) = if rx_outer { rx_range } else { tx_range };
    inner(golden_section(|v| inner(v).objective(), lo, hi))
}

pub fn optimize(scenario: &Scenario, resolution: usize, refine: bool) -> Result<OptimizationResult> {
    let model = ActivationModel::new(scenario)?;
    optimize_model(&model, resolution, refine)
}

pub fn optimize_model(model: &ActivationModel, resolution: usize, refine: bool) -> Result<OptimizationResult> {
    if resolution < 11 {
        return Err(Error::Contract(format!("grid resolution must be at least 11, got {resolution}")));
    }
    let grid = evaluate_grid(model, resolution);
    let Some(mut best) = select(&grid) else {
        let min_gap = grid.iter().map(|e| e.lambda - e.mu).fold(f64::INFINITY, f64::min);
        return Ok(OptimizationResult {
            rx_on: f64::NAN,
            tx_on: f64::NAN,
            network_throughput: f64::NAN,
            feasible: false,
            energy_proxy: f64::NAN,
            stability_margin: f64::NAN,
            grid_resolution: resolution,
            refinement_steps: 0,
            min_gap: Some(min_gap),
        });
    };

    let mut steps = 0;
    if refine {
        let h = 1.0 / (resolution - 1) as f64;
        let rx_range = ((best.rx_on - h).max(0.0), (best.rx_on + h).min(1.0));
        let tx_range = ((best.tx_on - h).max(0.0), (best.tx_on + h).min(1.0));
        // nested so that optima on the stability boundary, where one
        // coordinate alone cannot move, are still reached
        for rx_outer in [false, true] {
            let cand = nested_golden(model, rx_range, tx_range, rx_outer);
            if preferred(&cand, &best) && cand.objective() > best.objective() {
                best = cand;
                steps += 1;
            }
        }
    }

    Ok(OptimizationResult {
        rx_on: best.rx_on,
        tx_on: best.tx_on,
        network_throughput: best.network_throughput,
        feasible: true,
        energy_proxy: best.rx_on + best.tx_on,
        stability_margin: best.mu - best.lambda,
        grid_resolution: resolution,
        refinement_steps: steps,
        min_gap: None,
    })
}

/// Feasibility of each `(P_rx, P_tx)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRegion {
    pub resolution: usize,
    /// Row-major: `feasible[i * resolution + j]` for `P_rx = i/(R-1)`, `P_tx = j/(R-1)`.
    pub feasible: Vec<bool>,
}

impl StabilityRegion {
    pub fn at(&self, rx_index: usize, tx_index: usize) -> bool {
        self.feasible[rx_index * self.resolution + tx_index]
    }

    pub fn value(&self, index: usize) -> f64 {
        grid_value(index, self.resolution)
    }
}

pub fn stability_region(scenario: &Scenario, resolution: usize) -> Result<StabilityRegion> {
    if resolution < 11 {
        return Err(Error::Contract(format!("grid resolution must be at least 11, got {resolution}")));
    }
    let model = ActivationModel::new(scenario)?;
    Ok(StabilityRegion {
        resolution,
        feasible: evaluate_grid(&model, resolution).iter().map(|e| e.feasible).collect(),
    })
}
