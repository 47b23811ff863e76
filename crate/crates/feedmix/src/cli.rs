//! Scenario file ingestion, command implementations and report rendering.
//!
//! Exit codes: 0 success, 1 parse/schema error, 2 infeasible, 3 method/N
//! mismatch, 4 non-convergence (report still printed).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::{self, POT_TOL};
use crate::error::Error;
use crate::model::{
    self, existence_condition, potentials, reservoir_capacity, FeedstockRecord, Mix, Regime,
    Reservoir, Scenario, Solution,
};
use crate::oracle::{self, GridSpec};
use crate::solver::{self, SolverConfig, ACTIVE_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_METHOD_MISMATCH: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

/// On-disk scenario schema. `W: null` encodes an unbounded reservoir;
/// unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "Q")]
    pub q: f64,
    pub gamma: f64,
    pub r: f64,
    pub feedstocks: Vec<FeedstockFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedstockFile {
    pub name: String,
    pub lambda: f64,
    pub c: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    pub mu: f64,
    #[serde(rename = "W")]
    pub w: Option<f64>,
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<Scenario, Error> {
        let feedstocks = self
            .feedstocks
            .iter()
            .map(|f| FeedstockRecord {
                name: f.name.clone(),
                transform: f.lambda,
                unit_cost: f.c,
                transport_coeff: f.big_c,
                water_footprint: f.mu,
                reservoir: f.w.map(Reservoir::Finite).unwrap_or(Reservoir::Unbounded),
            })
            .collect();
        Scenario::new(feedstocks, self.q, self.gamma, self.r)
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        ScenarioFile {
            q: s.demand,
            gamma: s.transport_exponent,
            r: s.ces_exponent,
            feedstocks: s
                .feedstocks
                .iter()
                .map(|f| FeedstockFile {
                    name: f.name.clone(),
                    lambda: f.transform,
                    c: f.unit_cost,
                    big_c: f.transport_coeff,
                    mu: f.water_footprint,
                    w: f.reservoir.finite(),
                })
                .collect(),
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file: ScenarioFile =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    file.to_scenario().map_err(|e| e.to_string())
}

/// Per-feedstock line of a solve report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub x: f64,
    /// λ_i x_i.
    pub commodity: f64,
    pub cost_share: f64,
    pub water_share: f64,
    pub potential: f64,
    pub active: bool,
}

pub fn report_rows(s: &Scenario, mix: &Mix) -> Vec<ReportRow> {
    let gamma = s.transport_exponent;
    mix.x
        .iter()
        .zip(&s.feedstocks)
        .enumerate()
        .map(|(i, (&x, f))| {
            let transport = if x > 0.0 {
                f.transport_coeff * x.powf(gamma)
            } else {
                0.0
            };
            let consumed = f.water_footprint * x;
            let water_share = match f.reservoir {
                Reservoir::Finite(w) => w / (w - consumed) * consumed,
                Reservoir::Unbounded => consumed,
            };
            ReportRow {
                name: if f.name.is_empty() {
                    format!("feedstock{i}")
                } else {
                    f.name.clone()
                },
                x,
                commodity: f.transform * x,
                cost_share: f.unit_cost * x + transport,
                water_share,
                potential: (f.unit_cost + f.water_footprint) / f.transform,
                active: x > ACTIVE_TOL,
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub regime: String,
    pub status: String,
    pub objective: f64,
    pub xi: Option<f64>,
    pub mix: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

impl SolveReport {
    pub fn new(s: &Scenario, sol: &Solution) -> Self {
        SolveReport {
            regime: sol.regime.to_string(),
            status: sol.status.to_string(),
            objective: sol.objective,
            xi: sol.xi,
            mix: sol.mix.x.clone(),
            rows: report_rows(s, &sol.mix),
        }
    }
}

/// Six-significant-digit formatting for human tables.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..=9).contains(&mag) {
        format!("{v:.5e}")
    } else {
        let dec = (5 - mag).max(0) as usize;
        format!("{v:.dec$}")
    }
}

fn csv_field(name: &str) -> String {
    if name.contains(',') || name.contains('"') || name.contains('\n') {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Auto,
    Analytic,
    General,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutFormat {
    Table,
    Json,
    Csv,
}

fn render(s: &Scenario, sol: &Solution, format: OutFormat) -> String {
    let report = SolveReport::new(s, sol);
    match format {
        OutFormat::Json => serde_json::to_string_pretty(&report).expect("serializable"),
        OutFormat::Csv => {
            let mut out =
                String::from("name,x,commodity,cost_share,water_share,potential,active\n");
            for r in &report.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    csv_field(&r.name),
                    r.x,
                    r.commodity,
                    r.cost_share,
                    r.water_share,
                    r.potential,
                    r.active
                ));
            }
            out
        }
        OutFormat::Table => {
            let mut out = String::new();
            out.push_str(&format!("regime:    {}\n", report.regime));
            out.push_str(&format!("status:    {}\n", report.status));
            out.push_str(&format!("objective: {}\n", sig6(report.objective)));
            match report.xi {
                Some(xi) => out.push_str(&format!("xi:        {}\n", sig6(xi))),
                None => out.push_str("xi:        n/a\n"),
            }
            out.push_str(&format!(
                "{:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>7}\n",
                "name", "x", "commodity", "cost", "water", "potential", "active"
            ));
            for r in &report.rows {
                out.push_str(&format!(
                    "{:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>7}\n",
                    r.name,
                    sig6(r.x),
                    sig6(r.commodity),
                    sig6(r.cost_share),
                    sig6(r.water_share),
                    sig6(r.potential),
                    r.active
                ));
            }
            out
        }
    }
}

pub fn cmd_check(path: &Path) -> i32 {
    let s = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let capacity = reservoir_capacity(&s);
    println!("reservoir capacity (sum lambda*W/mu): {capacity}");
    println!("demand Q: {}", s.demand);
    if existence_condition(&s) {
        println!("FEASIBLE");
        EXIT_OK
    } else {
        println!("INFEASIBLE");
        EXIT_INFEASIBLE
    }
}

pub fn cmd_solve(
    path: &Path,
    method: Method,
    format: OutFormat,
    seed: u64,
    grid_points: Option<usize>,
) -> i32 {
    let s = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let cfg = SolverConfig {
        seed,
        ..SolverConfig::default()
    };
    let result: Result<Solution, Error> = match method {
        Method::Auto => solver::solve(&s, &cfg),
        Method::General => solver::solve_general(&s, &cfg),
        Method::Analytic => match analytic::diagnose(&s).regime {
            Regime::LinearFree => Ok(analytic::solve_linear_free(&s)),
            Regime::TransportNoScarcity => analytic::solve_transport_no_scarcity(&s),
            Regime::ScarcityFreeTransport => analytic::solve_scarcity_free_transport(&s),
            Regime::General => {
                eprintln!("error: no analytic solver applies (regime General); use --method general");
                return EXIT_METHOD_MISMATCH;
            }
        },
        Method::Oracle => {
            if s.len() > 4 {
                eprintln!("error: the grid oracle supports at most 4 feedstocks, got {}", s.len());
                return EXIT_METHOD_MISMATCH;
            }
            let mut grid = GridSpec::for_n(s.len());
            if let Some(p) = grid_points {
                grid.points_per_axis = p;
            }
            oracle::grid_search(&s, &grid)
        }
    };
    match result {
        Ok(sol) => {
            print!("{}", render(&s, &sol, format));
            EXIT_OK
        }
        Err(Error::InfeasibleScenario { capacity, demand }) => {
            eprintln!("error: infeasible scenario (capacity {capacity} <= demand {demand})");
            EXIT_INFEASIBLE
        }
        Err(Error::EmptyGrid) => {
            eprintln!("error: no feasible grid point");
            EXIT_INFEASIBLE
        }
        Err(Error::SupportEnumerationOverflow { n, limit }) => {
            eprintln!("error: support enumeration limited to N <= {limit}, got {n}; use --method general");
            EXIT_METHOD_MISMATCH
        }
        Err(Error::NonConvergence { best, .. }) => {
            print!("{}", render(&s, &best, format));
            eprintln!("warning: iteration cap hit on every start; best effort reported");
            EXIT_NONCONVERGENCE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_PARSE
        }
    }
}

pub fn cmd_potentials(path: &Path) -> i32 {
    let s = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let p = potentials(&s);
    let (_, i_max) = model::xi_bar(&s);
    let mut i_min = 0;
    for (i, v) in p.iter().enumerate().skip(1) {
        if *v < p[i_min] {
            i_min = i;
        }
    }
    println!("{:<6} {:<16} {:>12} {:>6}", "index", "name", "potential", "mark");
    for (i, (v, f)) in p.iter().zip(&s.feedstocks).enumerate() {
        let mark = if i == i_max {
            "max"
        } else if i == i_min {
            "min"
        } else {
            ""
        };
        let name = if f.name.is_empty() {
            format!("feedstock{i}")
        } else {
            f.name.clone()
        };
        println!("{:<6} {:<16} {:>12} {:>6}", i, name, sig6(*v), mark);
    }
    if analytic::diagnose(&s).regime == Regime::LinearFree {
        if analytic::interchangeable_linear(&s, POT_TOL) {
            println!("INTERCHANGEABLE");
        } else {
            println!("NOT INTERCHANGEABLE");
        }
    } else {
        println!("note: interchangeability verdict applies only in the LinearFree regime");
    }
    EXIT_OK
}

/// What a sweep varies: a global parameter or one field of one feedstock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepParam {
    Demand,
    Gamma,
    CesExponent,
    Field(FeedstockField, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedstockField {
    Lambda,
    UnitCost,
    TransportCoeff,
    WaterFootprint,
    Reservoir,
}

pub fn parse_selector(sel: &str) -> Result<SweepParam, String> {
    match sel {
        "Q" => return Ok(SweepParam::Demand),
        "gamma" => return Ok(SweepParam::Gamma),
        "r" => return Ok(SweepParam::CesExponent),
        _ => {}
    }
    let open = sel.find('[').ok_or_else(|| format!("invalid selector {sel:?}"))?;
    if !sel.ends_with(']') {
        return Err(format!("invalid selector {sel:?}"));
    }
    let field = match &sel[..open] {
        "lambda" => FeedstockField::Lambda,
        "c" => FeedstockField::UnitCost,
        "C" => FeedstockField::TransportCoeff,
        "mu" => FeedstockField::WaterFootprint,
        "W" => FeedstockField::Reservoir,
        other => return Err(format!("unknown field {other:?} in selector")),
    };
    let idx: usize = sel[open + 1..sel.len() - 1]
        .parse()
        .map_err(|_| format!("invalid index in selector {sel:?}"))?;
    Ok(SweepParam::Field(field, idx))
}

fn apply_param(s: &Scenario, param: SweepParam, value: f64) -> Result<Scenario, Error> {
    let mut out = s.clone();
    match param {
        SweepParam::Demand => out.demand = value,
        SweepParam::Gamma => out.transport_exponent = value,
        SweepParam::CesExponent => out.ces_exponent = value,
        SweepParam::Field(field, idx) => {
            let f = out
                .feedstocks
                .get_mut(idx)
                .ok_or(Error::IndexOutOfRange { index: idx, len: s.len() })?;
            match field {
                FeedstockField::Lambda => f.transform = value,
                FeedstockField::UnitCost => f.unit_cost = value,
                FeedstockField::TransportCoeff => f.transport_coeff = value,
                FeedstockField::WaterFootprint => f.water_footprint = value,
                FeedstockField::Reservoir => f.reservoir = Reservoir::Finite(value),
            }
        }
    }
    out.validate()?;
    Ok(out)
}

fn support_bitmask(mix: &Mix) -> u64 {
    mix.x
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > ACTIVE_TOL)
        .fold(0u64, |acc, (i, _)| acc | (1 << i))
}

pub fn cmd_sweep(
    path: &Path,
    selector: &str,
    from: f64,
    to: f64,
    steps: usize,
    out: Option<&Path>,
) -> i32 {
    let s = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let param = match parse_selector(selector) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    if steps < 2 {
        eprintln!("error: steps must be at least 2");
        return EXIT_PARSE;
    }
    let n = s.len();
    let mut csv = String::from("param,feasible,F,xi,regime,support");
    for i in 0..n {
        csv.push_str(&format!(",x{i}"));
    }
    csv.push('\n');

    let cfg = SolverConfig::default(); // seed held fixed across steps
    for k in 0..steps {
        let value = from + (to - from) * k as f64 / (steps - 1) as f64;
        let stepped = match apply_param(&s, param, value) {
            Ok(sc) => sc,
            Err(e) => {
                eprintln!("error: parameter value {value} is invalid: {e}");
                return EXIT_PARSE;
            }
        };
        if !existence_condition(&stepped) {
            csv.push_str(&format!("{value},false,,,,"));
            for _ in 0..n {
                csv.push(',');
            }
            csv.push('\n');
            continue;
        }
        let sol = match solver::solve(&stepped, &cfg) {
            Ok(sol) => sol,
            Err(Error::NonConvergence { best, .. }) => *best,
            Err(e) => {
                eprintln!("error: solve failed at {selector} = {value}: {e}");
                return EXIT_PARSE;
            }
        };
        let xi = sol.xi.map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{value},true,{},{xi},{},{}",
            sol.objective,
            sol.regime,
            support_bitmask(&sol.mix)
        ));
        for x in &sol.mix.x {
            csv.push_str(&format!(",{x}"));
        }
        csv.push('\n');
    }

    match out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &csv) {
                eprintln!("error: cannot write {}: {e}", p.display());
                return EXIT_PARSE;
            }
        }
        None => print!("{csv}"),
    }
    EXIT_OK
}
