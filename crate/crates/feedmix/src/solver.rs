//! General numerical solver for the full program plus KKT diagnostics.
//!
//! Theorem-regime scenarios are delegated to the exact solvers; everything
//! else goes through support enumeration with projected-gradient descent on
//! the production constraint, multi-started from random feasible points. The
//! sublinear transport term makes the objective concave in coordinates with
//! C_i > 0, so minima sit on boundary faces; enumerating supports turns the
//! nonconvex problem into smooth subproblems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    self, solve_linear_free, solve_scarcity_free_transport, solve_transport_with_limit,
};
use crate::error::{Error, Result};
use crate::model::{
    self, existence_condition, potentials, reservoir_capacity, Mix, Regime, Reservoir, Scenario,
    Solution, SolveStatus,
};

/// Clamp applied to zero coordinates before evaluating power-law derivatives.
pub const GRAD_EPS: f64 = 1e-12;

/// Coordinates above this count as active in KKT diagnostics.
pub const ACTIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_tol: f64,
    pub multi_starts: usize,
    pub seed: u64,
    /// Fraction of the reservoir bound kept as safety margin.
    pub barrier_shrink: f64,
    pub support_enum_limit: usize,
    pub grad_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 5000,
            step_tol: 1e-12,
            multi_starts: 20,
            seed: 0,
            barrier_shrink: 1e-9,
            support_enum_limit: 12,
            grad_eps: GRAD_EPS,
        }
    }
}

/// Analytic partial derivatives of the objective via the chain rule through
/// the CES aggregator. Coordinates are clamped to `GRAD_EPS` before the
/// power-law terms are evaluated.
pub fn gradient(mix: &Mix, s: &Scenario) -> Result<Vec<f64>> {
    gradient_with_eps(mix, s, GRAD_EPS)
}

pub(crate) fn gradient_with_eps(mix: &Mix, s: &Scenario, eps: f64) -> Result<Vec<f64>> {
    let clamped = Mix::new(mix.x.iter().map(|&x| x.max(eps)).collect());
    let cost = model::total_cost(&clamped, s)?;
    let water = model::water_impact(&clamped, s)?;
    let r = s.ces_exponent;
    let f = model::ces(cost, water, r)?;
    let gamma = s.transport_exponent;

    let outer = if f > 0.0 { f.powf(1.0 - r) } else { 0.0 };
    let cost_weight = if cost > 0.0 { outer * cost.powf(r - 1.0) } else { 0.0 };
    let water_weight = if water > 0.0 { outer * water.powf(r - 1.0) } else { 0.0 };

    let mut g = Vec::with_capacity(s.len());
    for (x, fr) in clamped.x.iter().zip(&s.feedstocks) {
        let mut dcost = fr.unit_cost;
        if fr.transport_coeff > 0.0 {
            dcost += gamma * fr.transport_coeff * x.powf(gamma - 1.0);
        }
        let dwater = match fr.reservoir {
            Reservoir::Finite(w) => {
                let slack = w - fr.water_footprint * x;
                fr.water_footprint * w * w / (slack * slack)
            }
            Reservoir::Unbounded => fr.water_footprint,
        };
        g.push(cost_weight * dcost + water_weight * dwater);
    }
    Ok(g)
}

/// First-order diagnostics at a mix.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    /// Indices with x_i above the activity threshold.
    pub active: Vec<usize>,
    /// gradient_i − ξ λ_i on the active coordinates, aligned with `active`.
    pub stationarity: Vec<f64>,
    /// Least-squares fit of gradient_i ≈ ξ λ_i over the active coordinates.
    pub xi_estimate: f64,
    /// |Σ λ_i x_i − Q|.
    pub primal: f64,
}

pub fn kkt_residual(mix: &Mix, s: &Scenario) -> Result<KktReport> {
    let g = gradient(mix, s)?;
    let active: Vec<usize> = (0..s.len()).filter(|&i| mix.x[i] > ACTIVE_TOL).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in &active {
        let lam = s.feedstocks[i].transform;
        num += g[i] * lam;
        den += lam * lam;
    }
    let xi_estimate = if den > 0.0 { num / den } else { 0.0 };
    let stationarity = active
        .iter()
        .map(|&i| g[i] - xi_estimate * s.feedstocks[i].transform)
        .collect();
    Ok(KktReport {
        active,
        stationarity,
        xi_estimate,
        primal: (mix.commodity_output(s) - s.demand).abs(),
    })
}

/// Solve the full program: theorem regimes delegate to the exact solvers,
/// everything else runs the numeric path. Deterministic for a fixed config.
pub fn solve(s: &Scenario, cfg: &SolverConfig) -> Result<Solution> {
    if !existence_condition(s) {
        return Err(Error::InfeasibleScenario {
            capacity: reservoir_capacity(s),
            demand: s.demand,
        });
    }
    match analytic::diagnose(s).regime {
        Regime::LinearFree => Ok(solve_linear_free(s)),
        Regime::TransportNoScarcity => {
            match solve_transport_with_limit(s, cfg.support_enum_limit) {
                Err(Error::SupportEnumerationOverflow { .. }) => solve_general(s, cfg),
                other => other,
            }
        }
        Regime::ScarcityFreeTransport => solve_scarcity_free_transport(s),
        Regime::General => solve_general(s, cfg),
    }
}

/// Allocation upper bounds after the safety margin.
fn upper_bounds(s: &Scenario, cfg: &SolverConfig) -> Vec<f64> {
    s.feedstocks
        .iter()
        .map(|f| match f.reservoir {
            Reservoir::Finite(w) => (1.0 - cfg.barrier_shrink) * w / f.water_footprint,
            Reservoir::Unbounded => f64::INFINITY,
        })
        .collect()
}

/// Clamp to the box on the support, then restore Σ λ x = Q by alternating
/// projections.
fn restore_feasibility(x: &mut [f64], support: &[usize], s: &Scenario, ub: &[f64]) {
    let lam_sq: f64 = support
        .iter()
        .map(|&i| s.feedstocks[i].transform * s.feedstocks[i].transform)
        .sum();
    for _ in 0..200 {
        for &i in support {
            x[i] = x[i].clamp(0.0, ub[i].min(f64::MAX));
        }
        let out: f64 = support.iter().map(|&i| s.feedstocks[i].transform * x[i]).sum();
        let residual = s.demand - out;
        if residual.abs() <= 1e-13 * s.demand {
            return;
        }
        for &i in support {
            x[i] += s.feedstocks[i].transform * residual / lam_sq;
        }
    }
    for &i in support {
        x[i] = x[i].clamp(0.0, ub[i].min(f64::MAX));
    }
}

/// η-style strictly interior point of a face, when one exists.
fn face_interior_point(s: &Scenario, support: &[usize], ub: &[f64]) -> Option<Vec<f64>> {
    let mut x = vec![0.0; s.len()];
    let any_unbounded = support.iter().any(|&i| ub[i].is_infinite());
    if any_unbounded {
        let weight: f64 = support
            .iter()
            .filter(|&&i| ub[i].is_infinite())
            .map(|&i| s.feedstocks[i].transform * s.feedstocks[i].transform)
            .sum();
        let t = s.demand / weight;
        for &i in support {
            if ub[i].is_infinite() {
                x[i] = t * s.feedstocks[i].transform;
            }
        }
        return Some(x);
    }
    let capacity: f64 = support
        .iter()
        .map(|&i| s.feedstocks[i].transform * ub[i])
        .sum();
    if capacity <= s.demand {
        return None;
    }
    let eta = s.demand / capacity;
    for &i in support {
        x[i] = eta * ub[i];
    }
    Some(x)
}

/// Vertices x_j = Q/λ_j of a face that respect the reservoir bound.
fn face_vertices(s: &Scenario, support: &[usize], ub: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for &j in support {
        let v = s.demand / s.feedstocks[j].transform;
        if v <= ub[j] {
            let mut x = vec![0.0; s.len()];
            x[j] = v;
            out.push(x);
        }
    }
    out
}

struct RunOutcome {
    mix: Mix,
    objective: f64,
    converged: bool,
}

/// One projected-gradient run on a face from a given start.
fn pgd_run(s: &Scenario, support: &[usize], ub: &[f64], start: Vec<f64>, cfg: &SolverConfig) -> Result<RunOutcome> {
    let mut x = start;
    restore_feasibility(&mut x, support, s, ub);
    let mut fx = model::objective(&Mix::new(x.clone()), s)?;
    let lam_sq: f64 = support
        .iter()
        .map(|&i| s.feedstocks[i].transform * s.feedstocks[i].transform)
        .sum();
    let scale = support
        .iter()
        .map(|&i| ub[i].min(s.demand / s.feedstocks[i].transform))
        .fold(0.0f64, f64::max);

    let mut step = 0.0;
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let g = gradient_with_eps(&Mix::new(x.clone()), s, cfg.grad_eps)?;
        // project the gradient onto the tangent space of the constraint
        let gl: f64 = support.iter().map(|&i| g[i] * s.feedstocks[i].transform).sum();
        let mut d = vec![0.0; s.len()];
        let mut dnorm_sq = 0.0;
        for &i in support {
            d[i] = -(g[i] - gl / lam_sq * s.feedstocks[i].transform);
            dnorm_sq += d[i] * d[i];
        }
        if dnorm_sq.sqrt() <= 1e-14 * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
        if step == 0.0 {
            step = 0.25 * scale / dnorm_sq.sqrt().max(1e-300);
        }

        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = x.clone();
            for &i in support {
                cand[i] += t * d[i];
            }
            restore_feasibility(&mut cand, support, s, ub);
            let fc = model::objective(&Mix::new(cand.clone()), s)?;
            if fc <= fx - 1e-4 * t * dnorm_sq {
                accepted = Some((cand, fc, t));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, t_acc)) = accepted else {
            // no descent direction survives the line search: stationary
            converged = true;
            break;
        };
        let move_sq: f64 = support.iter().map(|&i| (cand[i] - x[i]) * (cand[i] - x[i])).sum();
        let base: f64 = support.iter().map(|&i| x[i] * x[i]).sum::<f64>().max(1.0);
        x = cand;
        fx = fc;
        step = t_acc * 2.0;
        if (move_sq / base).sqrt() <= cfg.step_tol {
            converged = true;
            break;
        }
    }
    Ok(RunOutcome {
        mix: Mix::new(x),
        objective: fx,
        converged,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn supports_for(s: &Scenario, cfg: &SolverConfig) -> Vec<Vec<usize>> {
    let n = s.len();
    if n <= cfg.support_enum_limit {
        let mut out = Vec::with_capacity((1usize << n) - 1);
        for mask in 1u64..(1u64 << n) {
            out.push((0..n).filter(|i| mask & (1 << i) != 0).collect());
        }
        out
    } else {
        // greedy prefixes ranked by productive potential
        let p = potentials(s);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap().then(a.cmp(&b)));
        (1..=n)
            .map(|k| {
                let mut sup: Vec<usize> = order[..k].to_vec();
                sup.sort_unstable();
                sup
            })
            .collect()
    }
}

fn better(
    cand: &(f64, Vec<usize>, Mix),
    best: &Option<(f64, Vec<usize>, Mix)>,
) -> bool {
    match best {
        None => true,
        Some((bo, bs, bm)) => {
            if cand.0 != *bo {
                return cand.0 < *bo;
            }
            if cand.1 != *bs {
                return cand.1 < *bs;
            }
            cand.2.x < bm.x
        }
    }
}

fn thread_cap() -> usize {
    std::env::var("FEEDMIX_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// The numeric path, regardless of regime. Exposed so theorem-regime
/// scenarios can be cross-checked against the exact solvers.
pub fn solve_general(s: &Scenario, cfg: &SolverConfig) -> Result<Solution> {
    if !existence_condition(s) {
        return Err(Error::InfeasibleScenario {
            capacity: reservoir_capacity(s),
            demand: s.demand,
        });
    }
    let ub = upper_bounds(s, cfg);
    let supports = supports_for(s, cfg);

    // candidate list: (support index, start) pairs plus direct vertex
    // evaluations, processed in a fixed order for determinism
    let mut tasks: Vec<(usize, usize)> = Vec::new();
    for (si, _) in supports.iter().enumerate() {
        for k in 0..cfg.multi_starts {
            tasks.push((si, k));
        }
    }

    let run_task = |&(si, k): &(usize, usize)| -> Result<Option<RunOutcome>> {
        let support = &supports[si];
        let mut anchors = face_vertices(s, support, &ub);
        if let Some(p) = face_interior_point(s, support, &ub) {
            anchors.push(p);
        }
        if anchors.is_empty() {
            return Ok(None);
        }
        let capacity: f64 = support.iter().map(|&i| s.feedstocks[i].transform * ub[i]).sum();
        if capacity < s.demand {
            return Ok(None);
        }
        let seed = splitmix64(cfg.seed ^ splitmix64((si as u64) << 32 | k as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights: Vec<f64> = (0..anchors.len())
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let mut start = vec![0.0; s.len()];
        for (a, w) in anchors.iter().zip(&weights) {
            for &i in support {
                start[i] += w * a[i];
            }
        }
        pgd_run(s, support, &ub, start, cfg).map(Some)
    };

    let threads = thread_cap().min(tasks.len().max(1));
    let results: Vec<(usize, Result<Option<RunOutcome>>)> = if threads <= 1 {
        tasks
            .iter()
            .enumerate()
            .map(|(ti, t)| (ti, run_task(t)))
            .collect()
    } else {
        let chunk = tasks.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = tasks
                .chunks(chunk)
                .enumerate()
                .map(|(ci, slice)| {
                    let run_task = &run_task;
                    scope.spawn(move || {
                        slice
                            .iter()
                            .enumerate()
                            .map(|(j, t)| (ci * chunk + j, run_task(t)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            let mut all: Vec<_> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
            all.sort_by_key(|(ti, _)| *ti);
            all
        })
    };

    let mut best: Option<(f64, Vec<usize>, Mix)> = None;
    let mut any_run = false;
    let mut any_converged = false;

    // direct vertex evaluations are exact candidates on concave faces
    for support in &supports {
        for v in face_vertices(s, support, &ub) {
            let mix = Mix::new(v);
            let obj = model::objective(&mix, s)?;
            let key = active_support(&mix);
            let cand = (obj, key, mix);
            if better(&cand, &best) {
                best = Some(cand);
            }
        }
    }

    for (ti, outcome) in results {
        let (si, _) = tasks[ti];
        if let Some(run) = outcome? {
            any_run = true;
            any_converged |= run.converged;
            let cand = (run.objective, supports[si].clone(), run.mix);
            if better(&cand, &best) {
                best = Some(cand);
            }
        }
    }

    let (objective, _, mix) = best.ok_or(Error::EmptyGrid)?;
    let xi = kkt_residual(&mix, s).ok().map(|k| k.xi_estimate);
    let solution = Solution {
        mix,
        objective,
        xi,
        status: SolveStatus::NumericBestEffort,
        regime: Regime::General,
    };
    if any_run && !any_converged {
        let best_objective = solution.objective;
        return Err(Error::NonConvergence {
            best: Box::new(solution),
            best_objective,
        });
    }
    Ok(solution)
}

fn active_support(mix: &Mix) -> Vec<usize> {
    (0..mix.x.len()).filter(|&i| mix.x[i] > ACTIVE_TOL).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{record, scenario};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn gradient_linear_cases() {
        let s = scenario(
            vec![
                record(1.0, 2.0, 0.0, 3.0, Reservoir::Unbounded),
                record(1.0, 1.0, 0.0, 0.5, Reservoir::Unbounded),
            ],
            1.0,
            0.5,
            1.0,
        );
        let g = gradient(&Mix::new(vec![0.3, 0.7]), &s).unwrap();
        assert_relative_eq!(g[0], 5.0, max_relative = 1e-12);
        assert_relative_eq!(g[1], 1.5, max_relative = 1e-12);

        let sw = scenario(
            vec![record(1.0, 1.0, 0.0, 1.0, Reservoir::Finite(10.0))],
            1.0,
            0.5,
            1.0,
        );
        let gw = gradient(&Mix::new(vec![1.0]), &sw).unwrap();
        assert_relative_eq!(gw[0], 1.0 + 100.0 / 81.0, max_relative = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = scenario(
            vec![
                record(1.2, 1.0, 0.7, 0.8, Reservoir::Finite(12.0)),
                record(0.9, 2.0, 0.3, 1.5, Reservoir::Unbounded),
            ],
            3.0,
            0.6,
            2.0,
        );
        let mix = Mix::new(vec![1.1, 2.4]);
        let g = gradient(&mix, &s).unwrap();
        for i in 0..2 {
            let h = 1e-6 * mix.x[i].max(1.0);
            let mut hi = mix.clone();
            hi.x[i] += h;
            let mut lo = mix.clone();
            lo.x[i] -= h;
            let fd = (model::objective(&hi, &s).unwrap() - model::objective(&lo, &s).unwrap())
                / (2.0 * h);
            assert_relative_eq!(g[i], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn kkt_at_analytic_scarcity_solution() {
        let s = scenario(
            vec![
                record(1.0, 1.0, 0.0, 1.0, Reservoir::Finite(10.0)),
                record(1.0, 1.0, 0.0, 1.0, Reservoir::Finite(10.0)),
            ],
            2.0,
            0.5,
            1.0,
        );
        let sol = analytic::solve_scarcity_free_transport(&s).unwrap();
        let rep = kkt_residual(&sol.mix, &s).unwrap();
        assert!(rep.stationarity.iter().all(|r| r.abs() <= 1e-8));
        assert_relative_eq!(rep.xi_estimate, 1.0 + 100.0 / 81.0, max_relative = 1e-8);
    }

    #[test]
    fn kkt_at_vertex_and_off_constraint() {
        let s = scenario(
            vec![
                record(1.0, 1.0, 0.0, 1.0, Reservoir::Unbounded),
                record(1.0, 2.0, 0.0, 1.0, Reservoir::Unbounded),
            ],
            2.0,
            0.5,
            1.0,
        );
        let rep = kkt_residual(&Mix::new(vec![2.0, 0.0]), &s).unwrap();
        assert_eq!(rep.active, vec![0]);
        assert_relative_eq!(rep.stationarity[0], 0.0);

        let off = kkt_residual(&Mix::new(vec![2.0, 1.0]), &s).unwrap();
        assert_relative_eq!(off.primal, 1.0);
    }

    #[test]
    fn solve_dispatches_to_linear_free() {
        let s = scenario(
            vec![
                record(1.0, 1.0, 0.0, 1.0, Reservoir::Unbounded),
                record(1.0, 2.0, 0.0, 1.0, Reservoir::Unbounded),
            ],
            3.0,
            0.5,
            1.0,
        );
        let cfg = SolverConfig::default();
        let sol = solve(&s, &cfg).unwrap();
        let exact = analytic::solve_linear_free(&s);
        assert_eq!(sol.mix.x, exact.mix.x);
        assert_eq!(sol.objective, exact.objective);
        assert_eq!(sol.regime, Regime::LinearFree);
    }

    #[test]
    fn general_symmetric_quadratic_ces() {
        let s = scenario(
            vec![
                record(1.0, 1.0, 0.0, 1.0, Reservoir::Finite(10.0)),
                record(1.0, 1.0, 0.0, 1.0, Reservoir::Finite(10.0)),
            ],
            2.0,
            0.5,
            2.0,
        );
        let cfg = SolverConfig {
            multi_starts: 6,
            ..SolverConfig::default()
        };
        let sol = solve(&s, &cfg).unwrap();
        assert_eq!(sol.regime, Regime::General);
        assert_relative_eq!(sol.mix.x[0], 1.0, max_relative = 1e-4);
        assert_relative_eq!(sol.mix.x[1], 1.0, max_relative = 1e-4);
        assert!(sol.mix.is_feasible(&s));
    }

    #[test]
    fn solve_deterministic() {
        let s = scenario(
            vec![
                record(1.0, 1.0, 0.5, 1.0, Reservoir::Finite(8.0)),
                record(1.3, 0.5, 0.2, 0.9, Reservoir::Finite(6.0)),
            ],
            2.0,
            0.5,
            2.0,
        );
        let cfg = SolverConfig {
            seed: 7,
            multi_starts: 5,
            ..SolverConfig::default()
        };
        let a = solve(&s, &cfg).unwrap();
        let b = solve(&s, &cfg).unwrap();
        assert_eq!(a.mix.x, b.mix.x);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn solve_infeasible() {
        let s = scenario(
            vec![record(1.0, 1.0, 0.0, 1.0, Reservoir::Finite(5.0))],
            10.0,
            0.5,
            2.0,
        );
        assert!(matches!(
            solve(&s, &SolverConfig::default()),
            Err(Error::InfeasibleScenario { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn solution_never_worse_than_trivial_point(
            c in prop::collection::vec(0.1f64..5.0, 2..4),
            r in prop_oneof![Just(0.5f64), Just(2.0f64)],
        ) {
            let recs: Vec<_> = c.iter().map(|&ci| record(1.0, ci, 0.2, 1.0, Reservoir::Finite(10.0))).collect();
            let s = scenario(recs, 2.0, 0.5, r);
            let cfg = SolverConfig { multi_starts: 4, max_iters: 1500, ..SolverConfig::default() };
            let sol = solve(&s, &cfg).unwrap();
            prop_assert!(sol.mix.is_feasible(&s));
            let trivial = model::feasible_point(&s).unwrap();
            let f_trivial = model::objective(&trivial, &s).unwrap();
            prop_assert!(sol.objective <= f_trivial * (1.0 + 1e-9));
        }
    }
}
