//! Builders shared by unit and integration tests.

use crate::model::{FeedstockRecord, Reservoir, Scenario};

pub fn record(lambda: f64, c: f64, big_c: f64, mu: f64, reservoir: Reservoir) -> FeedstockRecord {
    FeedstockRecord {
        name: String::new(),
        transform: lambda,
        unit_cost: c,
        transport_coeff: big_c,
        water_footprint: mu,
        reservoir,
    }
}

pub fn scenario(records: Vec<FeedstockRecord>, q: f64, gamma: f64, r: f64) -> Scenario {
    Scenario::new(records, q, gamma, r).unwrap()
}
