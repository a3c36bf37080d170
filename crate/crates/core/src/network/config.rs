//! Serializable network descriptions.
//!
//! Two layouts are accepted. `raw` lists node copies and typed links
//! directly. `multimodal` lists places, road corridors and transit links and
//! is expanded into the node-copy layout (origin/destination copies per
//! traveler class, a transfer hub, and one node per service).

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{LinkKind, NodeRole, OperatorKind};
use crate::error::{MaasError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    /// Fixed mode transfer time `T_0` (minutes).
    pub transfer_time: f64,
    /// Self-planning cost `P_0` charged to non-MaaS transfers (minutes).
    pub planning_cost: f64,
    pub bpr_alpha: f64,
    pub bpr_power: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { transfer_time: 1.0, planning_cost: 2.5, bpr_alpha: 0.15, bpr_power: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub id: String,
    pub kind: OperatorKind,
    /// Fleet size `K_m` in vehicle-minutes (MoD only).
    #[serde(default)]
    pub fleet: f64,
    /// Minimum vacant vehicle time (MoD only).
    #[serde(default)]
    pub min_vacant: f64,
    /// Matching coefficient (MoD only).
    #[serde(default)]
    pub kappa: f64,
    /// Revenue floor; when absent it is taken from the no-MaaS base scenario.
    #[serde(default)]
    pub revenue_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: String,
    pub role: NodeRole,
    #[serde(default)]
    pub place: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub id: String,
    pub from: String,
    pub to: String,
    pub kind: LinkKind,
    #[serde(default)]
    pub operator: Option<String>,
    #[serde(default)]
    pub time: f64,
    #[serde(default)]
    pub capacity: Option<f64>,
    #[serde(default)]
    pub fare: f64,
    #[serde(default)]
    pub planning: f64,
    /// Links sharing a segment share one BPR volume (road and MoD copies).
    #[serde(default)]
    pub segment: Option<String>,
    /// Physical corridor label, used to pair road and MT links in reports.
    #[serde(default)]
    pub corridor: Option<String>,
    /// Transfer time folded into this link by the merge (access links only).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub transfer_time: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdConfig {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub maas_origin: Option<String>,
    #[serde(default)]
    pub maas_destination: Option<String>,
    pub origin: String,
    pub destination: String,
    pub demand: f64,
    #[serde(default)]
    pub utility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawNetworkConfig {
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub operators: Vec<OperatorConfig>,
    #[serde(default)]
    pub nodes: Vec<NodeConfig>,
    pub links: Vec<LinkConfig>,
    #[serde(default)]
    pub od_pairs: Vec<OdConfig>,
    /// Fold transfer links into access links while building.
    #[serde(default = "yes")]
    pub merge_transfers: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadLinkConfig {
    pub from: String,
    pub to: String,
    pub time: f64,
    pub capacity: f64,
    pub drive_cost: f64,
    /// MoD fare on the co-located MoD link; `None` when MoD does not serve it.
    #[serde(default)]
    pub mod_fare: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModServiceConfig {
    pub operator: String,
    #[serde(default)]
    pub access_time: f64,
    #[serde(default)]
    pub egress_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitServiceConfig {
    pub name: String,
    pub operator: String,
    pub access_time: f64,
    pub egress_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitLinkConfig {
    pub service: String,
    pub from: String,
    pub to: String,
    pub time: f64,
    pub capacity: f64,
    pub fare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandConfig {
    pub from: String,
    pub to: String,
    pub trips: f64,
    #[serde(default)]
    pub utility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalConfig {
    #[serde(default)]
    pub constants: Constants,
    pub operators: Vec<OperatorConfig>,
    #[serde(default)]
    pub road_links: Vec<RoadLinkConfig>,
    #[serde(default)]
    pub mod_service: Option<ModServiceConfig>,
    #[serde(default)]
    pub transit_services: Vec<TransitServiceConfig>,
    #[serde(default)]
    pub transit_links: Vec<TransitLinkConfig>,
    #[serde(default)]
    pub demand: Vec<DemandConfig>,
    #[serde(default = "yes")]
    pub merge_transfers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum NetworkDocument {
    Raw(RawNetworkConfig),
    Multimodal(MultimodalConfig),
    /// The extended Sioux Falls instance with its built-in tables.
    SiouxFalls,
}

impl NetworkDocument {
    pub fn into_raw(self) -> Result<RawNetworkConfig> {
        match self {
            NetworkDocument::Raw(r) => Ok(r),
            NetworkDocument::Multimodal(m) => m.expand(),
            NetworkDocument::SiouxFalls => super::sioux_falls::sioux_falls_config()?.expand(),
        }
    }
}

pub fn node_id(place: &str, copy: &str) -> String {
    format!("{place}/{copy}")
}

impl MultimodalConfig {
    /// Expands places into node copies. The result still contains explicit
    /// transfer links (arrival hub to departure hub); merging happens at build.
    pub fn expand(&self) -> Result<RawNetworkConfig> {
        let c = self.constants;
        let op_kind: HashMap<&str, OperatorKind> =
            self.operators.iter().map(|o| (o.id.as_str(), o.kind)).collect();
        let services: HashMap<&str, &TransitServiceConfig> =
            self.transit_services.iter().map(|s| (s.name.as_str(), s)).collect();

        let mut nodes: Vec<NodeConfig> = Vec::new();
        let mut links: Vec<LinkConfig> = Vec::new();
        let mut seen_nodes: BTreeSet<String> = BTreeSet::new();
        let mut add_node = |nodes: &mut Vec<NodeConfig>, place: &str, copy: &str, role: NodeRole| {
            let id = node_id(place, copy);
            if seen_nodes.insert(id.clone()) {
                nodes.push(NodeConfig { id: id.clone(), role, place: Some(place.to_string()) });
            }
            id
        };

        let mut places: BTreeSet<String> = BTreeSet::new();
        let mut road_places: BTreeSet<String> = BTreeSet::new();
        let mut mod_places: BTreeSet<String> = BTreeSet::new();
        let mut service_places: BTreeSet<(String, String)> = BTreeSet::new();
        let mut origins: BTreeSet<String> = BTreeSet::new();
        let mut destinations: BTreeSet<String> = BTreeSet::new();

        for r in &self.road_links {
            for p in [&r.from, &r.to] {
                places.insert(p.clone());
                road_places.insert(p.clone());
                if r.mod_fare.is_some() && self.mod_service.is_some() {
                    mod_places.insert(p.clone());
                }
            }
        }
        for t in &self.transit_links {
            if !services.contains_key(t.service.as_str()) {
                return Err(MaasError::Build(format!("transit link uses unknown service {}", t.service)));
            }
            for p in [&t.from, &t.to] {
                places.insert(p.clone());
                service_places.insert((p.clone(), t.service.clone()));
            }
        }
        for d in &self.demand {
            if d.trips <= 0.0 {
                continue;
            }
            places.insert(d.from.clone());
            places.insert(d.to.clone());
            origins.insert(d.from.clone());
            destinations.insert(d.to.clone());
        }

        // Services are attached to the hub of their place, so every place with
        // a service or a trip end gets a hub pair.
        let hub_places: BTreeSet<String> = places
            .iter()
            .filter(|p| {
                mod_places.contains(*p)
                    || service_places.iter().any(|(q, _)| q == *p)
                    || origins.contains(*p)
                    || destinations.contains(*p)
            })
            .cloned()
            .collect();

        let dummy = |id: String, from: String, to: String| LinkConfig {
            id,
            from,
            to,
            kind: LinkKind::Dummy,
            operator: None,
            time: 0.0,
            capacity: None,
            fare: 0.0,
            planning: 0.0,
            segment: None,
            corridor: None,
            transfer_time: 0.0,
        };

        for p in &hub_places {
            let dep = add_node(&mut nodes, p, "hub", NodeRole::Hub);
            let arr = add_node(&mut nodes, p, "hub-in", NodeRole::Hub);
            links.push(LinkConfig {
                id: format!("transfer:{p}"),
                from: arr.clone(),
                to: dep.clone(),
                kind: LinkKind::Transfer,
                operator: None,
                time: c.transfer_time,
                capacity: None,
                fare: 0.0,
                planning: c.planning_cost,
                segment: None,
                corridor: None,
                transfer_time: 0.0,
            });
            if origins.contains(p) {
                let mo = add_node(&mut nodes, p, "maas-o", NodeRole::MaasOrigin);
                let po = add_node(&mut nodes, p, "plain-o", NodeRole::PlainOrigin);
                links.push(dummy(format!("dummy:maas-o:{p}"), mo, dep.clone()));
                links.push(dummy(format!("dummy:plain-o:{p}"), po.clone(), dep.clone()));
                if road_places.contains(p) {
                    let road = add_node(&mut nodes, p, "road", NodeRole::Service);
                    links.push(dummy(format!("dummy:plain-o-road:{p}"), po, road));
                }
            }
            if destinations.contains(p) {
                let md = add_node(&mut nodes, p, "maas-d", NodeRole::MaasDestination);
                let pd = add_node(&mut nodes, p, "plain-d", NodeRole::PlainDestination);
                links.push(dummy(format!("dummy:maas-d:{p}"), arr.clone(), md));
                links.push(dummy(format!("dummy:plain-d:{p}"), arr.clone(), pd.clone()));
                if road_places.contains(p) {
                    let road = add_node(&mut nodes, p, "road", NodeRole::Service);
                    links.push(dummy(format!("dummy:plain-d-road:{p}"), road, pd));
                }
            }
            if mod_places.contains(p) {
                let ms = self.mod_service.as_ref().expect("mod places imply a mod service");
                let m = add_node(&mut nodes, p, "mod", NodeRole::Service);
                links.push(LinkConfig {
                    id: format!("access:mod:{p}"),
                    from: dep.clone(),
                    to: m.clone(),
                    kind: LinkKind::ModAccess,
                    operator: Some(ms.operator.clone()),
                    time: ms.access_time,
                    capacity: None,
                    fare: 0.0,
                    planning: 0.0,
                    segment: None,
                    corridor: None,
                    transfer_time: 0.0,
                });
                links.push(LinkConfig {
                    id: format!("egress:mod:{p}"),
                    from: m,
                    to: arr.clone(),
                    kind: LinkKind::ModEgress,
                    operator: Some(ms.operator.clone()),
                    time: ms.egress_time,
                    capacity: None,
                    fare: 0.0,
                    planning: 0.0,
                    segment: None,
                    corridor: None,
                    transfer_time: 0.0,
                });
            }
            for (q, s) in service_places.iter().filter(|(q, _)| q == p) {
                let svc = services[s.as_str()];
                let sn = add_node(&mut nodes, q, s, NodeRole::Service);
                links.push(LinkConfig {
                    id: format!("access:{s}:{q}"),
                    from: dep.clone(),
                    to: sn.clone(),
                    kind: LinkKind::MtAccess,
                    operator: Some(svc.operator.clone()),
                    time: svc.access_time,
                    capacity: None,
                    fare: 0.0,
                    planning: 0.0,
                    segment: None,
                    corridor: None,
                    transfer_time: 0.0,
                });
                links.push(LinkConfig {
                    id: format!("egress:{s}:{q}"),
                    from: sn,
                    to: arr.clone(),
                    kind: LinkKind::MtEgress,
                    operator: Some(svc.operator.clone()),
                    time: svc.egress_time,
                    capacity: None,
                    fare: 0.0,
                    planning: 0.0,
                    segment: None,
                    corridor: None,
                    transfer_time: 0.0,
                });
            }
        }

        for r in &self.road_links {
            let corridor = corridor_label(&r.from, &r.to);
            let seg = format!("{}-{}", r.from, r.to);
            let a = add_node(&mut nodes, &r.from, "road", NodeRole::Service);
            let b = add_node(&mut nodes, &r.to, "road", NodeRole::Service);
            links.push(LinkConfig {
                id: format!("road:{}-{}", r.from, r.to),
                from: a,
                to: b,
                kind: LinkKind::Drive,
                operator: None,
                time: r.time,
                capacity: Some(r.capacity),
                fare: r.drive_cost,
                planning: 0.0,
                segment: Some(seg.clone()),
                corridor: Some(corridor.clone()),
                transfer_time: 0.0,
            });
            if let (Some(fare), Some(ms)) = (r.mod_fare, self.mod_service.as_ref()) {
                let kind = match op_kind.get(ms.operator.as_str()) {
                    Some(OperatorKind::ModIndependent) => LinkKind::ModRegular2,
                    Some(OperatorKind::ModRoad) => LinkKind::ModRegular1,
                    _ => {
                        return Err(MaasError::Build(format!(
                            "MoD service operator {} is not a MoD operator",
                            ms.operator
                        )))
                    }
                };
                let a = node_id(&r.from, "mod");
                let b = node_id(&r.to, "mod");
                links.push(LinkConfig {
                    id: format!("mod:{}-{}", r.from, r.to),
                    from: a,
                    to: b,
                    kind,
                    operator: Some(ms.operator.clone()),
                    time: r.time,
                    capacity: Some(r.capacity),
                    fare,
                    planning: 0.0,
                    segment: (kind == LinkKind::ModRegular1).then_some(seg),
                    corridor: Some(corridor),
                    transfer_time: 0.0,
                });
            }
        }

        for t in &self.transit_links {
            let svc = services[t.service.as_str()];
            links.push(LinkConfig {
                id: format!("{}:{}-{}", t.service, t.from, t.to),
                from: node_id(&t.from, &t.service),
                to: node_id(&t.to, &t.service),
                kind: LinkKind::MtRegular,
                operator: Some(svc.operator.clone()),
                time: t.time,
                capacity: Some(t.capacity),
                fare: t.fare,
                planning: 0.0,
                segment: None,
                corridor: Some(corridor_label(&t.from, &t.to)),
                transfer_time: 0.0,
            });
        }

        let od_pairs = self
            .demand
            .iter()
            .filter(|d| d.trips > 0.0)
            .map(|d| OdConfig {
                id: Some(format!("{}-{}", d.from, d.to)),
                maas_origin: Some(node_id(&d.from, "maas-o")),
                maas_destination: Some(node_id(&d.to, "maas-d")),
                origin: node_id(&d.from, "plain-o"),
                destination: node_id(&d.to, "plain-d"),
                demand: d.trips,
                utility: d.utility,
            })
            .collect();

        Ok(RawNetworkConfig {
            constants: c,
            operators: self.operators.clone(),
            nodes,
            links,
            od_pairs,
            merge_transfers: self.merge_transfers,
        })
    }
}

/// Undirected corridor label, smaller place first when both are numeric.
pub fn corridor_label(a: &str, b: &str) -> String {
    let (x, y) = match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(i), Ok(j)) if i > j => (b, a),
        (Ok(_), Ok(_)) => (a, b),
        _ if a > b => (b, a),
        _ => (a, b),
    };
    format!("{x}-{y}")
}
