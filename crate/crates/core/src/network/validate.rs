//! Existence diagnostics: all-MaaS feasibility against MT capacities and the
//! MoD fleet sufficiency bound.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{LinkKind, Network, TravelerClass};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetCheck {
    pub operator: String,
    pub fleet: f64,
    pub required: f64,
    pub sufficient: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    /// A flow carrying all demand as MaaS exists within MT capacities.
    pub all_maas_feasible: bool,
    /// False when the routing heuristic failed on a multi-OD instance, so
    /// infeasibility is not proven.
    pub certain: bool,
    pub unserved: Vec<String>,
    pub fleet: Vec<FleetCheck>,
}

pub fn validate(net: &Network) -> Diagnostics {
    let n = net.n_nodes();
    let mask = net.class_mask(TravelerClass::Maas);
    let mut residual: Vec<f64> = net
        .links
        .iter()
        .map(|l| if l.kind == LinkKind::MtRegular { l.capacity_or_inf() } else { f64::INFINITY })
        .collect();
    // Reverse residuals for augmenting paths (Edmonds-Karp per OD).
    let mut back = vec![0.0; net.n_links()];
    let mut incoming = vec![Vec::new(); n];
    for (a, l) in net.links.iter().enumerate() {
        incoming[l.head].push(a);
    }
    let mut unserved = Vec::new();
    let mut routed_ods = 0;
    for w in &net.od_pairs {
        let (Some(o), Some(s), true) = (w.maas_origin, w.maas_destination, w.maas_reachable) else {
            unserved.push(w.id.clone());
            continue;
        };
        back.iter_mut().for_each(|b| *b = 0.0);
        let mut left = w.demand;
        while left > 1e-9 * w.demand.max(1.0) {
            // BFS over forward residual and reverse arcs of this OD's flow.
            let mut pred: Vec<Option<(usize, bool)>> = vec![None; n];
            let mut seen = vec![false; n];
            seen[o] = true;
            let mut queue = VecDeque::from([o]);
            while let Some(i) = queue.pop_front() {
                if i == s {
                    break;
                }
                for &a in net.graph.out_links(i) {
                    let j = net.links[a].head;
                    if mask[a] && !seen[j] && residual[a] > 1e-12 {
                        seen[j] = true;
                        pred[j] = Some((a, true));
                        queue.push_back(j);
                    }
                }
                for &a in &incoming[i] {
                    let j = net.links[a].tail;
                    if !seen[j] && back[a] > 1e-12 {
                        seen[j] = true;
                        pred[j] = Some((a, false));
                        queue.push_back(j);
                    }
                }
            }
            if !seen[s] {
                break;
            }
            let mut bottleneck = left;
            let mut cur = s;
            while cur != o {
                let (a, fwd) = pred[cur].unwrap();
                bottleneck = bottleneck.min(if fwd { residual[a] } else { back[a] });
                cur = if fwd { net.links[a].tail } else { net.links[a].head };
            }
            let mut cur = s;
            while cur != o {
                let (a, fwd) = pred[cur].unwrap();
                if fwd {
                    residual[a] -= bottleneck;
                    back[a] += bottleneck;
                    cur = net.links[a].tail;
                } else {
                    residual[a] += bottleneck;
                    back[a] -= bottleneck;
                    cur = net.links[a].head;
                }
            }
            left -= bottleneck;
        }
        routed_ods += 1;
        if left > 1e-9 * w.demand.max(1.0) {
            unserved.push(w.id.clone());
        }
    }
    let all_maas_feasible = unserved.is_empty();
    let certain = all_maas_feasible || routed_ods <= 1 || unserved.iter().all(|id| {
        net.od_pairs.iter().any(|w| &w.id == id && !w.maas_reachable)
    });

    let total = net.total_demand();
    let fleet = net
        .operators
        .iter()
        .enumerate()
        .filter(|(_, o)| o.kind.is_mod())
        .map(|(m, o)| {
            let c = net.constants;
            let mut required = o.min_vacant;
            for l in net.links.iter().filter(|l| l.operator == Some(m) && l.kind.is_regular()) {
                let t = if l.kind == LinkKind::ModRegular1 {
                    l.time * (1.0 + c.bpr_alpha * (total / l.capacity_or_inf()).powf(c.bpr_power))
                } else {
                    l.time
                };
                required += t * total;
            }
            FleetCheck { operator: o.id.clone(), fleet: o.fleet, required, sufficient: o.fleet >= required }
        })
        .collect();
    Diagnostics { all_maas_feasible, certain, unserved, fleet }
}
