//! Exact solvers and condition checks for the three closed-form regimes,
//! built on 1-D bisection for the Lagrange multiplier.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    self, existence_condition, potentials, reservoir_capacity, xi_bar, Mix, Regime, Reservoir,
    Scenario, Solution, SolveStatus,
};

/// Relative tolerance under which two productive potentials count as equal.
pub const POT_TOL: f64 = 1e-9;

/// Largest N for which supports are enumerated exhaustively.
pub const SUPPORT_ENUM_LIMIT: usize = 12;

/// Which parameter pattern a scenario falls in, with the triggering reasons.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeDiagnosis {
    pub regime: Regime,
    pub reasons: Vec<String>,
}

/// Classify a scenario against the hypotheses of the three exact regimes.
pub fn diagnose(s: &Scenario) -> RegimeDiagnosis {
    let linear = s.ces_exponent == 1.0;
    let free_transport = s.feedstocks.iter().all(|f| f.transport_coeff == 0.0);
    let no_scarcity = s.feedstocks.iter().all(|f| !f.reservoir.is_finite());

    let mut reasons = Vec::new();
    reasons.push(if linear {
        "r = 1 (linear CES)".into()
    } else {
        format!("r = {} (nonlinear CES)", s.ces_exponent)
    });
    reasons.push(if free_transport {
        "all C_i = 0 (free transport)".into()
    } else {
        "some C_i > 0 (transport costs present)".into()
    });
    reasons.push(if no_scarcity {
        "all W_i unbounded (no water scarcity)".into()
    } else {
        "some W_i finite (water scarcity present)".into()
    });

    let regime = match (linear, free_transport, no_scarcity) {
        (true, true, true) => Regime::LinearFree,
        (true, false, true) => Regime::TransportNoScarcity,
        (true, true, false) => Regime::ScarcityFreeTransport,
        _ => Regime::General,
    };
    RegimeDiagnosis { regime, reasons }
}

/// True iff the spread of productive potentials is within `tol` relative to
/// the largest one, i.e. every feedstock can appear in an optimal mix.
pub fn interchangeable_linear(s: &Scenario, tol: f64) -> bool {
    let p = potentials(s);
    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min <= tol * max
}

/// Linear CES, free transport, no scarcity: concentrate demand on the
/// cheapest potential. With all potentials equal the objective is constant on
/// the whole feasible set and a strictly interior representative is returned.
pub fn solve_linear_free(s: &Scenario) -> Solution {
    let p = potentials(s);
    let p_star = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let support: Vec<usize> = (0..s.len())
        .filter(|&i| p[i] <= p_star + POT_TOL * p_star)
        .collect();
    let n = s.len();
    let all_equal = support.len() == n;

    let mut x = vec![0.0; n];
    if all_equal {
        // every feasible point is optimal; return the proportional-to-λ one
        let weight: f64 = s.feedstocks.iter().map(|f| f.transform * f.transform).sum();
        let t = s.demand / weight;
        for (xi, f) in x.iter_mut().zip(&s.feedstocks) {
            *xi = t * f.transform;
        }
    } else {
        let j = support[0];
        x[j] = s.demand / s.feedstocks[j].transform;
    }
    let mix = Mix::new(x);
    Solution {
        objective: p_star * s.demand,
        xi: Some(p_star),
        status: if all_equal {
            SolveStatus::InteriorOptimum
        } else {
            SolveStatus::BoundaryOptimum
        },
        regime: Regime::LinearFree,
        mix,
    }
}

/// Aggregate commodity output Σ λ_i x_i(ξ) of the transport-regime
/// stationarity curves; strictly decreasing on (ξ̄, ∞).
pub fn transport_supply(s: &Scenario, xi: f64) -> f64 {
    let gamma = s.transport_exponent;
    s.feedstocks
        .iter()
        .map(|f| {
            let num = xi * f.transform - f.unit_cost - f.water_footprint;
            if num <= 0.0 {
                f64::INFINITY
            } else {
                f.transform * (num / (gamma * f.transport_coeff)).powf(1.0 / (gamma - 1.0))
            }
        })
        .sum()
}

fn transport_allocation(s: &Scenario, xi: f64) -> Mix {
    let gamma = s.transport_exponent;
    let x = s
        .feedstocks
        .iter()
        .map(|f| {
            let num = xi * f.transform - f.unit_cost - f.water_footprint;
            (num / (gamma * f.transport_coeff)).powf(1.0 / (gamma - 1.0))
        })
        .collect();
    Mix::new(x)
}

/// Bisection for f(xi) = demand on a bracket where f is strictly monotone.
fn bisect_to_target<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    increasing: bool,
) -> f64 {
    for _ in 0..600 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-15 * mid.abs().max(1.0) {
            return mid;
        }
        let v = f(mid);
        let below = if increasing { v < target } else { v > target };
        if below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Expand the upper end of the multiplier bracket by doubling until the
/// supply curve crosses the demand.
fn expand_upper<F: Fn(f64) -> f64>(f: &F, start: f64, target: f64, increasing: bool) -> Result<f64> {
    let mut gap = 1.0;
    for _ in 0..200 {
        let hi = start + gap;
        let v = f(hi);
        let crossed = if increasing { v > target } else { v < target };
        if crossed {
            return Ok(hi);
        }
        gap *= 2.0;
    }
    Err(Error::RootBracketFailure { expansions: 200 })
}

/// The unique interior critical point of the transport regime. This point is
/// a constrained local maximum of the objective (the Hessian there is
/// negative-definite); it is returned for verification, not as an optimum.
pub fn transport_critical_point(s: &Scenario) -> Result<(Mix, f64)> {
    let d = diagnose(s);
    if d.regime != Regime::TransportNoScarcity
        || s.feedstocks.iter().any(|f| f.transport_coeff == 0.0)
    {
        return Err(Error::InvalidScenario(
            "transport critical point needs r = 1, unbounded reservoirs and all C_i > 0".into(),
        ));
    }
    let (xi_max, _) = xi_bar(s);
    let supply = |xi: f64| transport_supply(s, xi);
    let mut lo = xi_max * (1.0 + 1e-12);
    // the supply blows up at ξ̄; nudge closer if the offset overshot the root
    let mut offset = 1e-12;
    while supply(lo) <= s.demand && offset > 1e-16 {
        offset /= 10.0;
        lo = xi_max * (1.0 + offset);
    }
    let hi = expand_upper(&supply, xi_max, s.demand, false)?;
    let xi_star = bisect_to_target(supply, lo, hi, s.demand, false);
    Ok((transport_allocation(s, xi_star), xi_star))
}

/// Objective at the single-feedstock vertex x_j = Q/λ_j.
fn vertex_solution(s: &Scenario, j: usize) -> Result<(Mix, f64)> {
    let mut x = vec![0.0; s.len()];
    x[j] = s.demand / s.feedstocks[j].transform;
    let mix = Mix::new(x);
    let obj = model::objective(&mix, s)?;
    Ok((mix, obj))
}

/// Linear CES, no scarcity, transport costs present: no all-positive optimum
/// exists, so the best boundary point is returned. Along any line in the
/// feasible polytope the objective is concave (linear terms plus sublinear
/// powers), so face minima sit at vertices and the support recursion
/// collapses to a scan of the single-feedstock vertices.
pub fn solve_transport_no_scarcity(s: &Scenario) -> Result<Solution> {
    solve_transport_with_limit(s, SUPPORT_ENUM_LIMIT)
}

pub(crate) fn solve_transport_with_limit(s: &Scenario, limit: usize) -> Result<Solution> {
    let n = s.len();
    if n > limit {
        return Err(Error::SupportEnumerationOverflow { n, limit });
    }
    let mut best: Option<(f64, usize, Mix)> = None;
    for j in 0..n {
        let (mix, obj) = vertex_solution(s, j)?;
        if best.as_ref().map_or(true, |(b, _, _)| obj < *b) {
            best = Some((obj, j, mix));
        }
    }
    let (objective, j, mix) = best.expect("N >= 1");
    let f = &s.feedstocks[j];
    let x = mix.x[j];
    let marginal = f.unit_cost
        + s.transport_exponent * f.transport_coeff * x.powf(s.transport_exponent - 1.0)
        + f.water_footprint;
    Ok(Solution {
        mix,
        objective,
        xi: Some(marginal / f.transform),
        status: SolveStatus::BoundaryOptimum,
        regime: Regime::TransportNoScarcity,
    })
}

/// Aggregate commodity output Σ λ_i x_i(ξ) of the scarcity-regime
/// stationarity curves; strictly increasing on [ξ̄, ∞) and bounded above by
/// the reservoir capacity. Only valid with all reservoirs finite.
pub fn scarcity_supply(s: &Scenario, xi: f64) -> f64 {
    s.feedstocks
        .iter()
        .map(|f| {
            let w = f.reservoir.finite().expect("finite reservoir");
            let denom = xi * f.transform - f.unit_cost;
            f.transform * (w / f.water_footprint)
                * (1.0 - (f.water_footprint / denom).sqrt())
        })
        .sum()
}

/// Same curves with stationarity clipped at zero, valid for any ξ; this is
/// the KKT system of the convex scarcity program with the positivity
/// multipliers eliminated.
fn scarcity_supply_clipped(s: &Scenario, xi: f64) -> f64 {
    s.feedstocks
        .iter()
        .filter(|f| f.reservoir.is_finite())
        .map(|f| f.transform * scarcity_coordinate_clipped(f, xi))
        .sum()
}

fn scarcity_coordinate_clipped(f: &crate::model::FeedstockRecord, xi: f64) -> f64 {
    let w = f.reservoir.finite().expect("finite reservoir");
    let denom = xi * f.transform - f.unit_cost;
    if denom <= f.water_footprint {
        return 0.0;
    }
    (w / f.water_footprint) * (1.0 - (f.water_footprint / denom).sqrt())
}

/// Compensation condition of the scarcity regime.
#[derive(Debug, Clone, Serialize)]
pub struct CompensationReport {
    /// M_i for each i ≠ ī, in index order.
    pub m: Vec<(usize, f64)>,
    /// Whether the closed-form sufficient condition holds for all i ≠ ī.
    pub holds: bool,
    /// P(ξ̄): the operative quantity; an all-positive unique optimum exists
    /// iff this is strictly below the demand.
    pub p_at_xi_bar: f64,
    pub xi_bar: f64,
    pub i_bar: usize,
}

/// Evaluate the compensation condition for a scarcity-regime scenario with
/// all reservoirs finite and N ≥ 2.
pub fn compensation_condition(s: &Scenario) -> Result<CompensationReport> {
    let d = diagnose(s);
    if d.regime != Regime::ScarcityFreeTransport {
        return Err(Error::InvalidScenario(
            "compensation condition needs r = 1 and free transport".into(),
        ));
    }
    if s.feedstocks.iter().any(|f| !f.reservoir.is_finite()) {
        return Err(Error::InvalidScenario(
            "compensation condition needs all reservoirs finite".into(),
        ));
    }
    let n = s.len();
    if n < 2 {
        return Err(Error::InvalidScenario(
            "compensation condition needs at least two feedstocks".into(),
        ));
    }
    let (xi_max, i_bar) = xi_bar(s);
    let fb = &s.feedstocks[i_bar];
    let c_bar = fb.unit_cost / fb.transform;
    let mu_bar = fb.water_footprint / fb.transform;

    let mut m = Vec::with_capacity(n - 1);
    let mut holds = true;
    for (i, f) in s.feedstocks.iter().enumerate() {
        if i == i_bar {
            continue;
        }
        let w = f.reservoir.finite().expect("finite");
        let mi = (1.0 - s.demand * f.water_footprint / (w * f.transform * (n as f64 - 1.0)))
            .max(0.0);
        let lhs = mi * mi * c_bar + mi * mi * mu_bar;
        let rhs = mi * mi * f.unit_cost / f.transform + f.water_footprint / f.transform;
        if !(lhs < rhs) {
            holds = false;
        }
        m.push((i, mi));
    }
    Ok(CompensationReport {
        m,
        holds,
        p_at_xi_bar: scarcity_supply(s, xi_max),
        xi_bar: xi_max,
        i_bar,
    })
}

/// Linear CES, free transport, scarcity present. When P(ξ̄) < Q the unique
/// all-positive optimum is found by bisection on the increasing supply curve;
/// otherwise the clipped KKT system is solved instead, which is equivalent to
/// enumerating active sets for this convex program and yields the boundary
/// optimum.
pub fn solve_scarcity_free_transport(s: &Scenario) -> Result<Solution> {
    let d = diagnose(s);
    if d.regime != Regime::ScarcityFreeTransport {
        return Err(Error::InvalidScenario(
            "scarcity solver needs r = 1, free transport and some finite reservoir".into(),
        ));
    }
    if !existence_condition(s) {
        return Err(Error::InfeasibleScenario {
            capacity: reservoir_capacity(s),
            demand: s.demand,
        });
    }
    let all_finite = s.feedstocks.iter().all(|f| f.reservoir.is_finite());
    if all_finite {
        let (xi_max, _) = xi_bar(s);
        let p_bar = scarcity_supply(s, xi_max);
        if p_bar < s.demand {
            let supply = |xi: f64| scarcity_supply(s, xi);
            let hi = expand_upper(&supply, xi_max, s.demand, true)?;
            let xi_star = bisect_to_target(supply, xi_max, hi, s.demand, true);
            let x: Vec<f64> = s
                .feedstocks
                .iter()
                .map(|f| {
                    let w = f.reservoir.finite().expect("finite");
                    let denom = xi_star * f.transform - f.unit_cost;
                    (w / f.water_footprint) * (1.0 - (f.water_footprint / denom).sqrt())
                })
                .collect();
            let mix = Mix::new(x);
            let objective = model::objective(&mix, s)?;
            return Ok(Solution {
                mix,
                objective,
                xi: Some(xi_star),
                status: SolveStatus::InteriorOptimum,
                regime: Regime::ScarcityFreeTransport,
            });
        }
        return solve_scarcity_clipped(s, None);
    }
    // Mixed finite/unbounded reservoirs: an unbounded record behaves linearly
    // with marginal burden P_i, so the multiplier cannot exceed the cheapest
    // unbounded potential.
    let p = potentials(s);
    let cheapest_unbounded = s
        .feedstocks
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.reservoir.is_finite())
        .min_by(|(i, _), (j, _)| p[*i].partial_cmp(&p[*j]).unwrap().then(i.cmp(j)))
        .map(|(i, _)| i)
        .expect("some unbounded");
    solve_scarcity_clipped(s, Some(cheapest_unbounded))
}

/// Water-filling on the clipped stationarity curves. `overflow` is the
/// unbounded record that absorbs demand the finite reservoirs cannot take.
fn solve_scarcity_clipped(s: &Scenario, overflow: Option<usize>) -> Result<Solution> {
    let p = potentials(s);
    let supply = |xi: f64| scarcity_supply_clipped(s, xi);
    let lo = s
        .feedstocks
        .iter()
        .map(|f| f.unit_cost / f.transform)
        .fold(f64::INFINITY, f64::min);

    let (xi_star, spill) = match overflow {
        Some(j) if supply(p[j]) < s.demand => (p[j], s.demand - supply(p[j])),
        _ => {
            let hi = expand_upper(&supply, lo, s.demand, true)?;
            (bisect_to_target(supply, lo, hi, s.demand, true), 0.0)
        }
    };

    let mut x: Vec<f64> = s
        .feedstocks
        .iter()
        .map(|f| {
            if f.reservoir.is_finite() {
                scarcity_coordinate_clipped(f, xi_star)
            } else {
                0.0
            }
        })
        .collect();
    if spill > 0.0 {
        let j = overflow.expect("spill only with overflow record");
        x[j] = spill / s.feedstocks[j].transform;
    }
    let mix = Mix::new(x);
    let interior = mix.x.iter().all(|&v| v > 0.0);
    let objective = model::objective(&mix, s)?;
    Ok(Solution {
        mix,
        objective,
        xi: Some(xi_star),
        status: if interior {
            SolveStatus::InteriorOptimum
        } else {
            SolveStatus::BoundaryOptimum
        },
        regime: Regime::ScarcityFreeTransport,
    })
}

/// Diagonal of the objective Hessian in the transport regime at a mix with
/// all coordinates positive: γ(γ−1) C_i x_i^{γ−2}.
pub fn transport_hessian_diag(s: &Scenario, mix: &Mix) -> Vec<f64> {
    let g = s.transport_exponent;
    mix.x
        .iter()
        .zip(&s.feedstocks)
        .map(|(x, f)| g * (g - 1.0) * f.transport_coeff * x.powf(g - 2.0))
        .collect()
}

/// Diagonal of the objective Hessian in the scarcity regime:
/// 2 W_i² μ_i² / (W_i − μ_i x_i)³.
pub fn scarcity_hessian_diag(s: &Scenario, mix: &Mix) -> Vec<f64> {
    mix.x
        .iter()
        .zip(&s.feedstocks)
        .map(|(x, f)| match f.reservoir {
            Reservoir::Finite(w) => {
                let slack = w - f.water_footprint * x;
                2.0 * w * w * f.water_footprint * f.water_footprint / (slack * slack * slack)
            }
            Reservoir::Unbounded => 0.0,
        })
        .collect()
}
