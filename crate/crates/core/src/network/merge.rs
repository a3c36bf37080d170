//! Folding transfer links into access links.
//!
//! A transfer link joins an arrival hub to a departure hub. After merging,
//! both hubs collapse into the departure hub, the transfer time and planning
//! cost move onto every access link leaving it, and the same amounts are
//! subtracted on the origin dummies entering it, so that the first boarding of
//! a trip stays free. Every origin-destination path keeps its exact cost.

use std::collections::{HashMap, HashSet};

use super::{LinkConfig, LinkKind, RawNetworkConfig};
use crate::error::{MaasError, Result};

pub fn merge_transfers(cfg: &RawNetworkConfig) -> Result<RawNetworkConfig> {
    let mut links: Vec<LinkConfig> = cfg.links.clone();
    let transfers: Vec<LinkConfig> = links.iter().filter(|l| l.kind == LinkKind::Transfer).cloned().collect();
    let mut arrival_of: HashMap<String, (String, f64, f64)> = HashMap::new();
    let mut departures = HashSet::new();
    for t in &transfers {
        if arrival_of.insert(t.from.clone(), (t.to.clone(), t.time, t.planning)).is_some() {
            return Err(MaasError::Build(format!("hub {} has more than one transfer link", t.from)));
        }
        if !departures.insert(t.to.clone()) {
            return Err(MaasError::Build(format!("hub {} receives more than one transfer link", t.to)));
        }
    }
    for t in &transfers {
        for l in links.iter().filter(|l| l.kind != LinkKind::Transfer) {
            if l.from == t.to && !l.kind.is_access() {
                return Err(MaasError::Build(format!(
                    "cannot merge transfer {}: departure hub has non-access link {}",
                    t.id, l.id
                )));
            }
            if l.to == t.to && l.kind != LinkKind::Dummy {
                return Err(MaasError::Build(format!(
                    "cannot merge transfer {}: departure hub is entered by {}",
                    t.id, l.id
                )));
            }
            if l.to == t.from && l.kind == LinkKind::Dummy {
                return Err(MaasError::Build(format!(
                    "cannot merge transfer {}: arrival hub is entered by dummy {}",
                    t.id, l.id
                )));
            }
        }
    }
    links.retain(|l| l.kind != LinkKind::Transfer);
    for l in links.iter_mut() {
        if let Some((_, time, planning)) = transfers.iter().find(|t| t.to == l.from).map(|t| arrival_of[&t.from].clone()) {
            // Access link out of a departure hub.
            l.time += time;
            l.transfer_time += time;
            l.planning += planning;
        }
        if let Some(t) = transfers.iter().find(|t| t.to == l.to) {
            // Origin dummy into a departure hub.
            l.time -= t.time;
            l.planning -= t.planning;
        }
    }
    for l in links.iter_mut() {
        if let Some((dep, _, _)) = arrival_of.get(&l.to) {
            l.to = dep.clone();
        }
        if let Some((dep, _, _)) = arrival_of.get(&l.from) {
            l.from = dep.clone();
        }
    }
    let nodes = cfg.nodes.iter().filter(|n| !arrival_of.contains_key(&n.id)).cloned().collect();
    Ok(RawNetworkConfig {
        constants: cfg.constants,
        operators: cfg.operators.clone(),
        nodes,
        links,
        od_pairs: cfg.od_pairs.clone(),
        merge_transfers: false,
    })
}
