//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rsp_game::network::{ProblemInstance, SlotTable};

/// Grid step of the price oracles.
pub const GRID_STEP: f64 = 1e-4;

fn grid(p_max: f64) -> impl Iterator<Item = f64> {
    let steps = (p_max / GRID_STEP).round() as usize;
    (0..=steps).map(move |k| k as f64 * GRID_STEP)
}

/// Best price on the grid against a fixed rival price for one uncapacitated
/// trip with ride cost `c`, using the clipped duopoly demand.
pub fn grid_best_response(rival: f64, c: f64, p_max: f64) -> f64 {
    let profit = |p: f64| (p - c) * (0.5 - p / p_max + rival / (2.0 * p_max)).max(0.0);
    grid(p_max)
        .fold((0.0, f64::NEG_INFINITY), |best, p| {
            let v = profit(p);
            if v > best.1 {
                (p, v)
            } else {
                best
            }
        })
        .0
}

/// Symmetric equilibrium price of one uncapacitated trip by alternating grid
/// best responses from `p_max`.
pub fn grid_equilibrium_price(c: f64, p_max: f64) -> (f64, f64) {
    let (mut p1, mut p2) = (p_max, p_max);
    for _ in 0..200 {
        let n1 = grid_best_response(p2, c, p_max);
        let n2 = grid_best_response(n1, c, p_max);
        let done = n1 == p1 && n2 == p2;
        (p1, p2) = (n1, n2);
        if done {
            break;
        }
    }
    (p1, p2)
}

/// Grid maximizer of `(p − c)(1 − p/p_max)`.
pub fn grid_monopoly_price(c: f64, p_max: f64) -> f64 {
    grid(p_max)
        .fold((0.0, f64::NEG_INFINITY), |best, p| {
            let v = (p - c) * (1.0 - p / p_max);
            if v > best.1 {
                (p, v)
            } else {
                best
            }
        })
        .0
}

pub fn max_abs_diff(a: &SlotTable<f64>, b: &SlotTable<f64>) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Mean of `table` at slot `t` over edges selected by `keep`.
pub fn segment_mean(
    instance: &ProblemInstance,
    table: &SlotTable<f64>,
    t: usize,
    keep: impl Fn(usize, usize) -> bool,
) -> f64 {
    let picked: Vec<f64> = instance
        .network
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(j, l))| keep(j, l))
        .map(|(e, _)| table.get(e, t))
        .collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}
