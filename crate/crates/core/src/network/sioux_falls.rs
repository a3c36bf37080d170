//! Extended Sioux Falls instance: road network with a co-located MoD copy,
//! metro and bus lines on 25 corridors, and the standard 24-zone trip table.

use serde::{Deserialize, Serialize};

use super::{
    build_network, Constants, DemandConfig, ModServiceConfig, MultimodalConfig, Network, OperatorConfig,
    OperatorKind, RoadLinkConfig, TransitLinkConfig, TransitServiceConfig,
};
use crate::error::{MaasError, Result};

const LINK_TABLE: &str = include_str!("../../data/sioux_falls_links.csv");
const TRIP_TABLE: &str = include_str!("../../data/sioux_falls_trips.csv");

/// The 38 undirected corridors of the Sioux Falls road network.
pub const CORRIDORS: [(u32, u32); 38] = [
    (1, 2), (1, 3), (2, 6), (3, 4), (3, 12), (4, 5), (4, 11), (5, 6), (5, 9), (6, 8),
    (7, 8), (7, 18), (8, 9), (8, 16), (9, 10), (10, 11), (10, 15), (10, 16), (10, 17),
    (11, 12), (11, 14), (12, 13), (13, 24), (14, 15), (14, 23), (15, 19), (15, 22),
    (16, 17), (16, 18), (17, 19), (18, 20), (19, 20), (20, 21), (20, 22), (21, 22),
    (21, 24), (22, 23), (23, 24),
];

/// Corridors served by metro; the remaining MT corridors are bus.
pub const METRO_CORRIDORS: [(u32, u32); 15] = [
    (3, 4), (4, 5), (5, 6), (6, 8), (8, 16), (16, 17), (19, 20), (20, 21), (21, 24),
    (13, 24), (11, 12), (10, 11), (10, 15), (15, 22), (21, 22),
];

/// Compensated OD pairs reported for the platform-optimal pricing.
pub const REPORTED_COMPENSATED: [(u32, u32); 4] = [(1, 3), (3, 12), (7, 8), (12, 13)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorParams {
    pub from: u32,
    pub to: u32,
    pub road_time: f64,
    pub road_capacity: f64,
    pub car_fare: f64,
    pub mod_fare: f64,
    pub mt_time: Option<f64>,
    pub mt_capacity: Option<f64>,
    pub mt_fare: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiouxFallsParams {
    pub corridors: Vec<CorridorParams>,
    /// Row-major 24x24 trip matrix.
    pub trips: Vec<Vec<f64>>,
    pub kappa: f64,
    pub min_vacant: f64,
    pub fleet: f64,
    pub mt_access: f64,
    pub mt_egress: f64,
    pub mod_access: f64,
    pub mod_egress: f64,
    pub transfer_time: f64,
    pub planning_cost: f64,
    /// Scales every OD demand (1.0 = full table).
    pub demand_scale: f64,
}

impl Default for SiouxFallsParams {
    fn default() -> Self {
        Self {
            corridors: parse_links(LINK_TABLE).expect("embedded link table parses"),
            trips: parse_trips(TRIP_TABLE).expect("embedded trip table parses"),
            kappa: 26.78,
            min_vacant: 0.5,
            fleet: 2.0e6,
            mt_access: 1.25,
            mt_egress: 0.25,
            mod_access: 0.0,
            mod_egress: 0.0,
            transfer_time: 1.0,
            planning_cost: 2.5,
            demand_scale: 1.0,
        }
    }
}

fn opt(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|e| MaasError::Config(format!("bad number {s:?}: {e}")))
    }
}

pub fn parse_links(text: &str) -> Result<Vec<CorridorParams>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            opt(&rec[i])?.ok_or_else(|| MaasError::Config(format!("missing column {i} in link table")))
        };
        rows.push(CorridorParams {
            from: rec[0].trim().parse().map_err(|e| MaasError::Config(format!("{e}")))?,
            to: rec[1].trim().parse().map_err(|e| MaasError::Config(format!("{e}")))?,
            road_time: f(2)?,
            road_capacity: f(3)?,
            car_fare: f(4)?,
            mod_fare: f(5)?,
            mt_time: opt(&rec[6])?,
            mt_capacity: opt(&rec[7])?,
            mt_fare: opt(&rec[8])?,
        });
    }
    Ok(rows)
}

pub fn parse_trips(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| MaasError::Config(format!("{e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn is_metro(a: u32, b: u32) -> bool {
    METRO_CORRIDORS.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b))
}

impl SiouxFallsParams {
    pub fn to_config(&self) -> Result<MultimodalConfig> {
        for &(a, b) in &CORRIDORS {
            if !self.corridors.iter().any(|c| (c.from, c.to) == (a, b) || (c.to, c.from) == (a, b)) {
                return Err(MaasError::Build(format!("link table has no row for corridor ({a}, {b})")));
            }
        }
        let n = self.trips.len();
        if n != 24 || self.trips.iter().any(|r| r.len() != 24) {
            return Err(MaasError::Build("trip table must be 24 x 24".into()));
        }
        let mut road_links = Vec::new();
        let mut transit_links = Vec::new();
        for c in &self.corridors {
            for (x, y) in [(c.from, c.to), (c.to, c.from)] {
                road_links.push(RoadLinkConfig {
                    from: x.to_string(),
                    to: y.to_string(),
                    time: c.road_time,
                    capacity: c.road_capacity,
                    drive_cost: c.car_fare,
                    mod_fare: Some(c.mod_fare),
                });
                if let (Some(t), Some(k), Some(f)) = (c.mt_time, c.mt_capacity, c.mt_fare) {
                    transit_links.push(TransitLinkConfig {
                        service: if is_metro(c.from, c.to) { "metro" } else { "bus" }.into(),
                        from: x.to_string(),
                        to: y.to_string(),
                        time: t,
                        capacity: k,
                        fare: f,
                    });
                }
            }
        }
        let mut demand = Vec::new();
        for (i, row) in self.trips.iter().enumerate() {
            for (j, &t) in row.iter().enumerate() {
                if i != j && t > 0.0 {
                    demand.push(DemandConfig {
                        from: (i + 1).to_string(),
                        to: (j + 1).to_string(),
                        trips: t * self.demand_scale,
                        utility: None,
                    });
                }
            }
        }
        let svc = |name: &str| TransitServiceConfig {
            name: name.into(),
            operator: "MT".into(),
            access_time: self.mt_access,
            egress_time: self.mt_egress,
        };
        Ok(MultimodalConfig {
            constants: Constants {
                transfer_time: self.transfer_time,
                planning_cost: self.planning_cost,
                ..Constants::default()
            },
            operators: vec![
                OperatorConfig {
                    id: "MT".into(),
                    kind: OperatorKind::Mt,
                    fleet: 0.0,
                    min_vacant: 0.0,
                    kappa: 0.0,
                    revenue_floor: None,
                },
                OperatorConfig {
                    id: "MoD".into(),
                    kind: OperatorKind::ModRoad,
                    fleet: self.fleet,
                    min_vacant: self.min_vacant,
                    kappa: self.kappa,
                    revenue_floor: None,
                },
            ],
            road_links,
            mod_service: Some(ModServiceConfig {
                operator: "MoD".into(),
                access_time: self.mod_access,
                egress_time: self.mod_egress,
            }),
            transit_services: vec![svc("metro"), svc("bus")],
            transit_links,
            demand,
            merge_transfers: true,
        })
    }
}

pub fn sioux_falls_config() -> Result<MultimodalConfig> {
    SiouxFallsParams::default().to_config()
}

pub fn build_sioux_falls(params: &SiouxFallsParams) -> Result<Network> {
    build_network(&params.to_config()?.expand()?)
}
