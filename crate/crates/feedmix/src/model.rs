//! Domain types, objective and constraint evaluation, existence condition
//! and productive potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance (w.r.t. demand) for the equality constraint.
pub const FEAS_TOL: f64 = 1e-9;

/// Water reservoir of an exporting country. `Unbounded` is the exact
/// no-scarcity limit: the scarcity weight is 1, not a large sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Reservoir {
    Finite(f64),
    Unbounded,
}

impl Reservoir {
    pub fn is_finite(&self) -> bool {
        matches!(self, Reservoir::Finite(_))
    }

    /// Finite value, if any.
    pub fn finite(&self) -> Option<f64> {
        match self {
            Reservoir::Finite(w) => Some(*w),
            Reservoir::Unbounded => None,
        }
    }
}

/// One country-feedstock option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedstockRecord {
    pub name: String,
    /// Commodity units produced per feedstock unit (λ).
    pub transform: f64,
    /// Linear import cost per feedstock unit (c).
    pub unit_cost: f64,
    /// Transport cost coefficient (C); the transport term is C·x^γ.
    pub transport_coeff: f64,
    /// Virtual water consumed per feedstock unit (μ).
    pub water_footprint: f64,
    /// Available water reservoir (W).
    pub reservoir: Reservoir,
}

impl FeedstockRecord {
    fn validate(&self, index: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidScenario(msg));
        if !(self.transform > 0.0) {
            return fail(format!("feedstock {index}: lambda must be > 0"));
        }
        if !(self.water_footprint > 0.0) {
            return fail(format!("feedstock {index}: mu must be > 0"));
        }
        if !(self.unit_cost >= 0.0) {
            return fail(format!("feedstock {index}: c must be >= 0"));
        }
        if !(self.transport_coeff >= 0.0) {
            return fail(format!("feedstock {index}: C must be >= 0"));
        }
        if let Reservoir::Finite(w) = self.reservoir {
            if !(w > 0.0) {
                return fail(format!("feedstock {index}: finite W must be > 0"));
            }
        }
        Ok(())
    }

    /// Upper bound on the allocation imposed by the reservoir (W/μ), infinite
    /// when unbounded.
    pub fn allocation_cap(&self) -> f64 {
        match self.reservoir {
            Reservoir::Finite(w) => w / self.water_footprint,
            Reservoir::Unbounded => f64::INFINITY,
        }
    }
}

/// A full problem instance: feedstock records plus global parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub feedstocks: Vec<FeedstockRecord>,
    /// Demanded commodity quantity (Q).
    pub demand: f64,
    /// Transport exponent (γ), in (0, 1).
    pub transport_exponent: f64,
    /// CES exponent (r), > 0.
    pub ces_exponent: f64,
}

impl Scenario {
    pub fn new(
        feedstocks: Vec<FeedstockRecord>,
        demand: f64,
        transport_exponent: f64,
        ces_exponent: f64,
    ) -> Result<Self> {
        let s = Scenario {
            feedstocks,
            demand,
            transport_exponent,
            ces_exponent,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feedstocks.is_empty() {
            return Err(Error::InvalidScenario("need at least one feedstock".into()));
        }
        if !(self.demand > 0.0) {
            return Err(Error::InvalidScenario("Q must be > 0".into()));
        }
        if !(self.transport_exponent > 0.0 && self.transport_exponent < 1.0) {
            return Err(Error::InvalidScenario("gamma must satisfy 0 < gamma < 1".into()));
        }
        if !(self.ces_exponent > 0.0) {
            return Err(Error::InvalidScenario("r must be > 0".into()));
        }
        for (i, f) in self.feedstocks.iter().enumerate() {
            f.validate(i)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.feedstocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feedstocks.is_empty()
    }

    fn check_len(&self, mix: &Mix) -> Result<()> {
        if mix.x.len() != self.len() {
            return Err(Error::DimensionMismatch {
                mix: mix.x.len(),
                scenario: self.len(),
            });
        }
        Ok(())
    }
}

/// A candidate allocation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mix {
    pub x: Vec<f64>,
}

impl Mix {
    pub fn new(x: Vec<f64>) -> Self {
        Mix { x }
    }

    pub fn zeros(n: usize) -> Self {
        Mix { x: vec![0.0; n] }
    }

    /// Σ λ_i x_i.
    pub fn commodity_output(&self, s: &Scenario) -> f64 {
        self.x
            .iter()
            .zip(&s.feedstocks)
            .map(|(x, f)| f.transform * x)
            .sum()
    }

    /// Feasible iff the equality constraint holds within `FEAS_TOL`
    /// relative to Q, every coordinate is nonnegative and strictly below the
    /// reservoir cap.
    pub fn is_feasible(&self, s: &Scenario) -> bool {
        if self.x.len() != s.len() {
            return false;
        }
        if self.x.iter().any(|&x| !(x >= 0.0)) {
            return false;
        }
        for (x, f) in self.x.iter().zip(&s.feedstocks) {
            if let Reservoir::Finite(w) = f.reservoir {
                if f.water_footprint * x >= w {
                    return false;
                }
            }
        }
        (self.commodity_output(s) - s.demand).abs() <= FEAS_TOL * s.demand
    }
}

/// How a solution was obtained / what kind of optimum it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    InteriorOptimum,
    BoundaryOptimum,
    CriticalPointIsMaximum,
    Infeasible,
    NumericBestEffort,
}

/// Parameter regime of the program, matching the hypotheses of the three
/// exact-solution cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    LinearFree,
    TransportNoScarcity,
    ScarcityFreeTransport,
    General,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::LinearFree => "LinearFree",
            Regime::TransportNoScarcity => "TransportNoScarcity",
            Regime::ScarcityFreeTransport => "ScarcityFreeTransport",
            Regime::General => "General",
        };
        f.write_str(s)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::InteriorOptimum => "InteriorOptimum",
            SolveStatus::BoundaryOptimum => "BoundaryOptimum",
            SolveStatus::CriticalPointIsMaximum => "CriticalPointIsMaximum",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::NumericBestEffort => "NumericBestEffort",
        };
        f.write_str(s)
    }
}

/// An optimal (or best-effort) mix together with its objective value and,
/// when available, the Lagrange multiplier of the production constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub mix: Mix,
    pub objective: f64,
    pub xi: Option<f64>,
    pub status: SolveStatus,
    pub regime: Regime,
}

/// Total import plus transport cost: Σ (c_i x_i + C_i x_i^γ), with 0^γ := 0.
pub fn total_cost(mix: &Mix, s: &Scenario) -> Result<f64> {
    s.check_len(mix)?;
    let gamma = s.transport_exponent;
    let mut sum = 0.0;
    for (x, f) in mix.x.iter().zip(&s.feedstocks) {
        sum += f.unit_cost * x;
        if *x > 0.0 {
            sum += f.transport_coeff * x.powf(gamma);
        }
    }
    Ok(sum)
}

/// Scarcity-weighted water impact: Σ (W_i / (W_i − μ_i x_i)) μ_i x_i, with
/// weight 1 for unbounded reservoirs.
pub fn water_impact(mix: &Mix, s: &Scenario) -> Result<f64> {
    s.check_len(mix)?;
    let mut sum = 0.0;
    for (i, (x, f)) in mix.x.iter().zip(&s.feedstocks).enumerate() {
        let consumed = f.water_footprint * x;
        match f.reservoir {
            Reservoir::Finite(w) => {
                if consumed >= w {
                    return Err(Error::SaturatedReservoir {
                        index: i,
                        consumed,
                        reservoir: w,
                    });
                }
                sum += w / (w - consumed) * consumed;
            }
            Reservoir::Unbounded => sum += consumed,
        }
    }
    Ok(sum)
}

/// CES aggregator (a^r + b^r)^{1/r}.
pub fn ces(a: f64, b: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::NonpositiveCesExponent(r));
    }
    if a == 0.0 {
        return Ok(b);
    }
    if b == 0.0 {
        return Ok(a);
    }
    Ok((a.powf(r) + b.powf(r)).powf(1.0 / r))
}

/// The objective F = CES(total cost, water impact, r).
pub fn objective(mix: &Mix, s: &Scenario) -> Result<f64> {
    let cost = total_cost(mix, s)?;
    let water = water_impact(mix, s)?;
    ces(cost, water, s.ces_exponent)
}

/// Σ λ_i W_i / μ_i: the maximal commodity output the reservoirs allow.
/// Infinite as soon as one reservoir is unbounded.
pub fn reservoir_capacity(s: &Scenario) -> f64 {
    s.feedstocks
        .iter()
        .map(|f| match f.reservoir {
            Reservoir::Finite(w) => f.transform * w / f.water_footprint,
            Reservoir::Unbounded => f64::INFINITY,
        })
        .sum()
}

/// Solutions exist iff the combined reservoir capacity strictly exceeds the
/// demand.
pub fn existence_condition(s: &Scenario) -> bool {
    reservoir_capacity(s) > s.demand
}

/// A strictly interior feasible point. With all reservoirs finite this is the
/// uniform-fraction construction x_i = η W_i/μ_i; with unbounded reservoirs
/// present the demand is spread over those records proportionally to λ and
/// bounded records stay at zero.
pub fn feasible_point(s: &Scenario) -> Result<Mix> {
    if !existence_condition(s) {
        return Err(Error::InfeasibleScenario {
            capacity: reservoir_capacity(s),
            demand: s.demand,
        });
    }
    let n = s.len();
    let any_unbounded = s.feedstocks.iter().any(|f| !f.reservoir.is_finite());
    let mut x = vec![0.0; n];
    if any_unbounded {
        let weight: f64 = s
            .feedstocks
            .iter()
            .filter(|f| !f.reservoir.is_finite())
            .map(|f| f.transform * f.transform)
            .sum();
        let t = s.demand / weight;
        for (xi, f) in x.iter_mut().zip(&s.feedstocks) {
            if !f.reservoir.is_finite() {
                *xi = t * f.transform;
            }
        }
    } else {
        let eta = s.demand / reservoir_capacity(s);
        for (xi, f) in x.iter_mut().zip(&s.feedstocks) {
            *xi = eta * f.allocation_cap();
        }
    }
    Ok(Mix::new(x))
}

/// Productive potential P_i = (c_i + μ_i)/λ_i: intrinsic burden per commodity
/// unit; lower is better.
pub fn productive_potential(s: &Scenario, i: usize) -> Result<f64> {
    let f = s
        .feedstocks
        .get(i)
        .ok_or(Error::IndexOutOfRange { index: i, len: s.len() })?;
    Ok((f.unit_cost + f.water_footprint) / f.transform)
}

/// All productive potentials.
pub fn potentials(s: &Scenario) -> Vec<f64> {
    (0..s.len())
        .map(|i| productive_potential(s, i).expect("index in range"))
        .collect()
}

/// (max_i P_i, argmax); ties broken by lowest index.
pub fn xi_bar(s: &Scenario) -> (f64, usize) {
    let p = potentials(s);
    let mut best = 0;
    for (i, v) in p.iter().enumerate().skip(1) {
        if *v > p[best] {
            best = i;
        }
    }
    (p[best], best)
}
