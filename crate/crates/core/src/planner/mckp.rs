//! Budget allocation as a multiple-choice knapsack, solved exactly.
//!
//! One candidate must be picked per channel; the picked weights (sign
//! decisions) must fit the budget; the summed distortion is minimized. The
//! DP table has one row per channel and one column per budget unit, and each
//! row depends only on the previous one, so cells within a row are computed
//! in parallel.
//!
//! Budgets at realistic scale run into the millions, so the solver accepts a
//! granularity: weights are rounded *up* to whole units and the budget
//! *down*, which can only forfeit optimality, never feasibility — a returned
//! selection always fits the raw budget.

use rayon::prelude::*;

use crate::patch::{PatchPlan, PlanEntry};
use crate::planner::distortion::DistortionTable;
use crate::planner::PlannerError;

#[derive(Clone, Debug)]
pub struct Selection {
    /// Chosen candidate index per table channel, in table order.
    pub choices: Vec<usize>,
    pub total_weight: u64,
    pub total_distortion: f64,
}

#[derive(Clone, Copy)]
struct Cell {
    dist: f64,
    weight: u64,
    choice: u32,
}

const UNREACHED: u32 = u32::MAX;

/// Exact DP solution at `granularity` budget units. Ties break toward the
/// lighter selection, then the smaller candidate index.
pub fn solve(
    table: &DistortionTable,
    budget: u64,
    granularity: u64,
) -> Result<Selection, PlannerError> {
    if granularity == 0 {
        return Err(PlannerError::BadGranularity);
    }
    if table.channels.is_empty() {
        return Err(PlannerError::EmptyTable);
    }
    let cols = (budget / granularity) as usize + 1;
    let unit_w = |w: u64| w.div_ceil(granularity) as usize;
    let base = Cell { dist: 0.0, weight: 0, choice: 0 };

    let mut rows: Vec<Vec<Cell>> = Vec::with_capacity(table.channels.len());
    for cc in &table.channels {
        let prev = rows.last();
        let row: Vec<Cell> = (0..cols)
            .into_par_iter()
            .map(|b| {
                let mut best = Cell { dist: f64::INFINITY, weight: u64::MAX, choice: UNREACHED };
                for (j, item) in cc.items.iter().enumerate() {
                    let uw = unit_w(item.weight);
                    if uw > b {
                        continue;
                    }
                    let below = match prev {
                        Some(r) => r[b - uw],
                        None => base,
                    };
                    if below.choice == UNREACHED {
                        continue;
                    }
                    let dist = below.dist + item.distortion;
                    let weight = below.weight + item.weight;
                    if dist < best.dist || (dist == best.dist && weight < best.weight) {
                        best = Cell { dist, weight, choice: j as u32 };
                    }
                }
                best
            })
            .collect();
        rows.push(row);
    }

    let last = rows.last().expect("nonempty")[cols - 1];
    if last.choice == UNREACHED {
        return Err(PlannerError::Infeasible { budget, min_weight: table.min_weight() });
    }
    let mut choices = vec![0usize; table.channels.len()];
    let mut b = cols - 1;
    for (c, cc) in table.channels.iter().enumerate().rev() {
        let cell = rows[c][b];
        choices[c] = cell.choice as usize;
        b -= unit_w(cc.items[cell.choice as usize].weight);
    }
    Ok(Selection { choices, total_weight: last.weight, total_distortion: last.dist })
}

/// Exhaustive search with the same tie-breaking, for validating [`solve`].
/// Exponential in channel count; keep instances small.
pub fn brute_force(table: &DistortionTable, budget: u64) -> Result<Selection, PlannerError> {
    if table.channels.is_empty() {
        return Err(PlannerError::EmptyTable);
    }
    fn dfs(
        table: &DistortionTable,
        budget: u64,
        c: usize,
        dist: f64,
        weight: u64,
        cur: &mut Vec<usize>,
        best: &mut Option<Selection>,
    ) {
        if let Some(b) = best {
            // Distortions are non-negative, so a partial sum already past the
            // incumbent cannot recover. Equal sums continue: a lighter tie
            // may follow.
            if dist > b.total_distortion {
                return;
            }
        }
        if c == table.channels.len() {
            let better = match best {
                None => true,
                Some(b) => {
                    dist < b.total_distortion
                        || (dist == b.total_distortion && weight < b.total_weight)
                }
            };
            if better {
                *best = Some(Selection {
                    choices: cur.clone(),
                    total_weight: weight,
                    total_distortion: dist,
                });
            }
            return;
        }
        for (j, item) in table.channels[c].items.iter().enumerate() {
            if weight + item.weight > budget {
                continue;
            }
            cur[c] = j;
            dfs(table, budget, c + 1, dist + item.distortion, weight + item.weight, cur, best);
        }
    }
    let mut best = None;
    let mut cur = vec![0usize; table.channels.len()];
    dfs(table, budget, 0, 0.0, 0, &mut cur, &mut best);
    best.ok_or(PlannerError::Infeasible { budget, min_weight: table.min_weight() })
}

pub fn selection_to_plan(table: &DistortionTable, sel: &Selection, budget: u64) -> PatchPlan {
    let entries = table
        .channels
        .iter()
        .zip(&sel.choices)
        .map(|(cc, &j)| PlanEntry { channel: cc.channel, layer: cc.layer, spec: cc.items[j].spec })
        .collect();
    PatchPlan::new(entries, Some(budget))
}
