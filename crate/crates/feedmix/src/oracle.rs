//! Brute-force grid search over the feasible slice for small N; the ground
//! truth for equivalence tests. The last coordinate is eliminated through the
//! production constraint so every evaluated point satisfies it exactly.

use serde::{Deserialize, Serialize};

use crate::analytic::diagnose;
use crate::error::{Error, Result};
use crate::model::{self, Mix, Reservoir, Scenario, Solution, SolveStatus};

/// Fraction of the reservoir bound the grid stays below.
const BOUND_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_axis: usize,
    /// Each round shrinks the search window 10x around the incumbent.
    pub refine_rounds: usize,
}

impl GridSpec {
    /// Default resolution for a given problem size.
    pub fn for_n(n: usize) -> Self {
        let points_per_axis = match n {
            0 | 1 | 2 => 2001,
            3 => 121,
            _ => 41,
        };
        GridSpec {
            points_per_axis,
            refine_rounds: 3,
        }
    }
}

fn axis_bound(s: &Scenario, i: usize) -> f64 {
    let f = &s.feedstocks[i];
    let by_demand = s.demand / f.transform;
    match f.reservoir {
        Reservoir::Finite(w) => by_demand.min((1.0 - BOUND_MARGIN) * w / f.water_footprint),
        Reservoir::Unbounded => by_demand,
    }
}

/// Exhaustively search the feasible slice. Returns the best grid point after
/// refinement, or `EmptyGrid` when no grid point satisfies the bounds.
pub fn grid_search(s: &Scenario, g: &GridSpec) -> Result<Solution> {
    let n = s.len();
    if n > 4 {
        return Err(Error::InvalidScenario(format!(
            "grid oracle supports N <= 4, got {n}"
        )));
    }
    if g.points_per_axis < 3 {
        return Err(Error::InvalidScenario(
            "points_per_axis must be at least 3".into(),
        ));
    }

    let regime = diagnose(s).regime;
    if n == 1 {
        let x = s.demand / s.feedstocks[0].transform;
        if x > axis_bound(s, 0) * (1.0 + 1e-12) {
            return Err(Error::EmptyGrid);
        }
        let mix = Mix::new(vec![x]);
        let objective = model::objective(&mix, s)?;
        return Ok(Solution {
            mix,
            objective,
            xi: None,
            status: SolveStatus::NumericBestEffort,
            regime,
        });
    }

    let free = n - 1;
    let last = n - 1;
    let lam_last = s.feedstocks[last].transform;
    let last_cap = axis_bound(s, last);
    let base: Vec<(f64, f64)> = (0..free).map(|i| (0.0, axis_bound(s, i))).collect();

    let eval = |coords: &[f64]| -> Option<(Mix, f64)> {
        let used: f64 = coords
            .iter()
            .zip(&s.feedstocks)
            .map(|(x, f)| f.transform * x)
            .sum();
        let x_last = (s.demand - used) / lam_last;
        if !(0.0..=last_cap).contains(&x_last) {
            return None;
        }
        let mut x = coords.to_vec();
        x.push(x_last);
        let mix = Mix::new(x);
        let obj = model::objective(&mix, s).ok()?;
        Some((mix, obj))
    };

    let scan = |windows: &[(f64, f64)], incumbent: &mut Option<(f64, Vec<f64>, Mix)>| {
        let m = g.points_per_axis;
        let mut idx = vec![0usize; free];
        let mut coords = vec![0.0; free];
        loop {
            for a in 0..free {
                let (lo, hi) = windows[a];
                coords[a] = if m == 1 {
                    lo
                } else {
                    lo + (hi - lo) * idx[a] as f64 / (m - 1) as f64
                };
            }
            if let Some((mix, obj)) = eval(&coords) {
                let replace = match incumbent {
                    None => true,
                    Some((best, _, _)) => obj < *best,
                };
                if replace {
                    *incumbent = Some((obj, coords.clone(), mix));
                }
            }
            // odometer increment
            let mut a = 0;
            loop {
                idx[a] += 1;
                if idx[a] < m {
                    break;
                }
                idx[a] = 0;
                a += 1;
                if a == free {
                    return;
                }
            }
        }
    };

    let mut incumbent: Option<(f64, Vec<f64>, Mix)> = None;
    scan(&base, &mut incumbent);
    let Some(_) = incumbent else {
        return Err(Error::EmptyGrid);
    };

    for round in 1..=g.refine_rounds {
        let center = incumbent.as_ref().unwrap().1.clone();
        let windows: Vec<(f64, f64)> = (0..free)
            .map(|a| {
                let (lo0, hi0) = base[a];
                let half = (hi0 - lo0) / (2.0 * 10f64.powi(round as i32));
                ((center[a] - half).max(lo0), (center[a] + half).min(hi0))
            })
            .collect();
        scan(&windows, &mut incumbent);
    }

    let (objective, _, mix) = incumbent.unwrap();
    Ok(Solution {
        mix,
        objective,
        xi: None,
        status: SolveStatus::NumericBestEffort,
        regime,
    })
}

/// True iff the candidate is at least as good as brute force, up to a
/// relative tolerance.
pub fn certify(sol: &Solution, s: &Scenario, g: &GridSpec, rel_tol: f64) -> Result<bool> {
    let reference = grid_search(s, g)?;
    Ok(sol.objective <= reference.objective * (1.0 + rel_tol))
}
