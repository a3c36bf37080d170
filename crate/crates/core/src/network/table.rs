use serde::{Deserialize, Serialize};

use super::{LinkKind, Network};

/// One corridor in the layout of the regular-link parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorRow {
    pub link: String,
    pub road_time: Option<f64>,
    pub road_capacity: Option<f64>,
    pub car_fare: Option<f64>,
    pub mod_fare: Option<f64>,
    pub mt_time: Option<f64>,
    pub mt_capacity: Option<f64>,
    pub mt_fare: Option<f64>,
}

fn place_key(p: &str) -> (i64, String) {
    (p.parse().unwrap_or(i64::MAX), p.to_string())
}

/// Regular links grouped by corridor, one row per corridor in its forward
/// direction (lower place label first).
pub fn corridor_table(net: &Network) -> Vec<CorridorRow> {
    let mut rows: Vec<((i64, String), (i64, String), CorridorRow)> = Vec::new();
    for l in &net.links {
        if !matches!(l.kind, LinkKind::Drive | LinkKind::ModRegular1 | LinkKind::ModRegular2 | LinkKind::MtRegular) {
            continue;
        }
        let (Some(a), Some(b)) = (&net.nodes[l.tail].place, &net.nodes[l.head].place) else {
            continue;
        };
        let (ka, kb) = (place_key(a), place_key(b));
        if ka >= kb {
            continue;
        }
        let pos = match rows.iter().position(|(x, y, _)| *x == ka && *y == kb) {
            Some(p) => p,
            None => {
                rows.push((
                    ka.clone(),
                    kb.clone(),
                    CorridorRow {
                        link: format!("({a}, {b})"),
                        road_time: None,
                        road_capacity: None,
                        car_fare: None,
                        mod_fare: None,
                        mt_time: None,
                        mt_capacity: None,
                        mt_fare: None,
                    },
                ));
                rows.len() - 1
            }
        };
        let row = &mut rows[pos].2;
        match l.kind {
            LinkKind::Drive => {
                row.road_time = Some(l.time);
                row.road_capacity = l.capacity;
                row.car_fare = Some(l.fare);
            }
            LinkKind::ModRegular1 | LinkKind::ModRegular2 => row.mod_fare = Some(l.fare),
            _ => {
                row.mt_time = Some(l.time);
                row.mt_capacity = l.capacity;
                row.mt_fare = Some(l.fare);
            }
        }
    }
    rows.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
    rows.into_iter().map(|(_, _, r)| r).collect()
}
