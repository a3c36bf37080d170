//! Scenario metrics: demand split, transfers, utilizations, congestion on
//! overlapping road/transit corridors and a pricing summary.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bilevel::AssignmentResult;
use crate::error::Result;
use crate::network::{LinkKind, Network, NodeRole};
use crate::pricing::{PayoffReport, PricingOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ByClass {
    pub overall: f64,
    pub maas: f64,
    pub plain: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total_trips: f64,
    pub maas_share: f64,
    pub plain_share: f64,
    /// Trips without any driving leg.
    pub transit_share: f64,
    pub driving_share: f64,
    pub transfers_per_trip: ByClass,
    pub mt_utilization: ByClass,
    pub mod_utilization: ByClass,
    pub time_per_trip: f64,
    /// Time per trip plus the user-supplied operation cost per trip.
    pub social_cost_per_trip: f64,
}

impl Metrics {
    pub fn diff(&self, base: &Metrics) -> Metrics {
        let bc = |a: ByClass, b: ByClass| ByClass { overall: a.overall - b.overall, maas: a.maas - b.maas, plain: a.plain - b.plain };
        Metrics {
            total_trips: self.total_trips - base.total_trips,
            maas_share: self.maas_share - base.maas_share,
            plain_share: self.plain_share - base.plain_share,
            transit_share: self.transit_share - base.transit_share,
            driving_share: self.driving_share - base.driving_share,
            transfers_per_trip: bc(self.transfers_per_trip, base.transfers_per_trip),
            mt_utilization: bc(self.mt_utilization, base.mt_utilization),
            mod_utilization: bc(self.mod_utilization, base.mod_utilization),
            time_per_trip: self.time_per_trip - base.time_per_trip,
            social_cost_per_trip: self.social_cost_per_trip - base.social_cost_per_trip,
        }
    }

    fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("total_trips", self.total_trips),
            ("maas_share", self.maas_share),
            ("plain_share", self.plain_share),
            ("transit_share", self.transit_share),
            ("driving_share", self.driving_share),
            ("transfers_per_trip", self.transfers_per_trip.overall),
            ("transfers_per_trip_maas", self.transfers_per_trip.maas),
            ("transfers_per_trip_plain", self.transfers_per_trip.plain),
            ("mt_utilization", self.mt_utilization.overall),
            ("mt_utilization_maas", self.mt_utilization.maas),
            ("mt_utilization_plain", self.mt_utilization.plain),
            ("mod_utilization", self.mod_utilization.overall),
            ("mod_utilization_maas", self.mod_utilization.maas),
            ("mod_utilization_plain", self.mod_utilization.plain),
            ("time_per_trip", self.time_per_trip),
            ("social_cost_per_trip", self.social_cost_per_trip),
        ]
    }
}

/// Mean volume-to-capacity ratios of one corridor group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VocGroup {
    pub corridors: Vec<String>,
    pub road_base: f64,
    pub road_scenario: f64,
    pub mt_base: f64,
    pub mt_scenario: f64,
}

/// Corridors served by both a road and a transit link, split by whether the
/// road was congested (VOC ≥ 1) in the base scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VocGroups {
    pub congested: VocGroup,
    pub uncongested: VocGroup,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Range3 {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

impl Range3 {
    fn of(v: &[f64]) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        Self {
            min: v.iter().cloned().fold(f64::INFINITY, f64::min),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            count: v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorRevenue {
    pub id: String,
    pub maas: f64,
    pub plain: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingSummary {
    pub eta: f64,
    pub ps: f64,
    pub profit: f64,
    pub binding_operator: Option<String>,
    pub operators: Vec<OperatorRevenue>,
    /// Positive OD fares.
    pub fares: Range3,
    /// Magnitudes of negative OD fares.
    pub compensations: Range3,
    pub fare_to_time: Range3,
    pub compensated: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub base: Metrics,
    pub scenario: Metrics,
    pub delta: Metrics,
    pub voc: VocGroups,
    pub pricing: Option<PricingSummary>,
}

/// Trips with at least one driving leg: net starts of drive-link chains.
fn driving_trips(net: &Network, flow: &[f64]) -> f64 {
    let mut net_out = vec![0.0; net.n_nodes()];
    for (a, l) in net.links.iter().enumerate() {
        if l.kind == LinkKind::Drive {
            net_out[l.tail] += flow[a];
            net_out[l.head] -= flow[a];
        }
    }
    net_out.iter().map(|v| v.max(0.0)).sum()
}

/// Flow continuing through hubs: arrivals from non-origin links that do not
/// end at the hub, plus explicit transfer-link flow.
fn transfers(net: &Network, flow: &[f64]) -> f64 {
    let is_origin = |n: usize| matches!(net.nodes[n].role, NodeRole::MaasOrigin | NodeRole::PlainOrigin);
    let is_dest = |n: usize| matches!(net.nodes[n].role, NodeRole::MaasDestination | NodeRole::PlainDestination);
    let mut through = vec![0.0; net.n_nodes()];
    let mut explicit = 0.0;
    for (a, l) in net.links.iter().enumerate() {
        if l.kind == LinkKind::Transfer {
            explicit += flow[a];
            continue;
        }
        if net.nodes[l.head].role == NodeRole::Hub && !is_origin(l.tail) {
            through[l.head] += flow[a];
        }
        if net.nodes[l.tail].role == NodeRole::Hub && is_dest(l.head) {
            through[l.tail] -= flow[a];
        }
    }
    explicit + through.iter().map(|v| v.max(0.0)).sum::<f64>()
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Metrics of one converged assignment. `op_cost` is an operation cost per
/// trip added to the social cost.
pub fn scenario_metrics(net: &Network, res: &AssignmentResult, op_cost: f64) -> Metrics {
    let total_trips = net.total_demand();
    let maas_trips: f64 = res.q.iter().sum();
    let plain_trips = total_trips - maas_trips;
    let y: Vec<f64> = res.x.iter().zip(&res.xt).map(|(a, b)| a + b).collect();
    let driving = driving_trips(net, &res.xt);
    let (tm, tp) = (transfers(net, &res.x), transfers(net, &res.xt));

    let mut mt_cap = 0.0;
    let (mut mt_x, mut mt_xt) = (0.0, 0.0);
    for (a, l) in net.links.iter().enumerate() {
        if l.kind == LinkKind::MtRegular {
            if let Some(k) = l.capacity {
                mt_cap += k;
                mt_x += res.x[a];
                mt_xt += res.xt[a];
            }
        }
    }
    let mut fleet = 0.0;
    let (mut occ_x, mut occ_xt) = (0.0, 0.0);
    for (m, o) in net.operators.iter().enumerate() {
        if !o.kind.is_mod() {
            continue;
        }
        fleet += o.fleet;
        for (a, l) in net.links.iter().enumerate() {
            if l.operator == Some(m) && matches!(l.kind, LinkKind::ModRegular1 | LinkKind::ModRegular2) {
                occ_x += res.times[a] * res.x[a];
                occ_xt += res.times[a] * res.xt[a];
            }
        }
    }
    let time: f64 = res.times.iter().zip(&y).map(|(t, v)| t * v).sum();
    let time_per_trip = ratio(time, total_trips);
    Metrics {
        total_trips,
        maas_share: ratio(maas_trips, total_trips),
        plain_share: ratio(plain_trips, total_trips),
        transit_share: ratio(total_trips - driving, total_trips),
        driving_share: ratio(driving, total_trips),
        transfers_per_trip: ByClass { overall: ratio(tm + tp, total_trips), maas: ratio(tm, maas_trips), plain: ratio(tp, plain_trips) },
        mt_utilization: ByClass { overall: ratio(mt_x + mt_xt, mt_cap), maas: ratio(mt_x, mt_cap), plain: ratio(mt_xt, mt_cap) },
        mod_utilization: ByClass { overall: ratio(occ_x + occ_xt, fleet), maas: ratio(occ_x, fleet), plain: ratio(occ_xt, fleet) },
        time_per_trip,
        social_cost_per_trip: time_per_trip + op_cost,
    }
}

/// `(road VOC, MT VOC)` per corridor that has both a drive and an MT link.
fn corridor_voc(net: &Network, res: &AssignmentResult) -> BTreeMap<String, (f64, f64)> {
    let y: Vec<f64> = res.x.iter().zip(&res.xt).map(|(a, b)| a + b).collect();
    let mut road: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut mt: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (a, l) in net.links.iter().enumerate() {
        let (Some(c), Some(k)) = (&l.corridor, l.capacity) else { continue };
        match l.kind {
            LinkKind::Drive => {
                let vol = l.segment.map_or(y[a], |s| net.segments[s].iter().map(|&b| y[b]).sum());
                road.entry(c.clone()).or_default().push(vol / k);
            }
            LinkKind::MtRegular => mt.entry(c.clone()).or_default().push(y[a] / k),
            _ => {}
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    road.into_iter()
        .filter_map(|(c, r)| mt.get(&c).map(|m| (c, (mean(&r), mean(m)))))
        .collect()
}

pub fn voc_groups(net: &Network, base: &AssignmentResult, scenario: &AssignmentResult) -> VocGroups {
    let b = corridor_voc(net, base);
    let s = corridor_voc(net, scenario);
    let mut groups = VocGroups::default();
    let (mut nc, mut nu) = (0usize, 0usize);
    for (c, (rb, mb)) in &b {
        let (rs, ms) = s[c];
        let (g, n) = if *rb >= 1.0 { (&mut groups.congested, &mut nc) } else { (&mut groups.uncongested, &mut nu) };
        g.corridors.push(c.clone());
        g.road_base += rb;
        g.road_scenario += rs;
        g.mt_base += mb;
        g.mt_scenario += ms;
        *n += 1;
    }
    for (g, n) in [(&mut groups.congested, nc), (&mut groups.uncongested, nu)] {
        if n > 0 {
            let k = n as f64;
            g.road_base /= k;
            g.road_scenario /= k;
            g.mt_base /= k;
            g.mt_scenario /= k;
        }
    }
    groups
}

pub fn pricing_summary(outcome: &PricingOutcome, payoffs: &PayoffReport) -> PricingSummary {
    let served: Vec<_> = payoffs.ods.iter().filter(|o| o.q > 0.0).collect();
    let fares: Vec<f64> = served.iter().filter(|o| o.fare > 0.0).map(|o| o.fare).collect();
    let comp: Vec<f64> = served.iter().filter(|o| o.fare < 0.0).map(|o| -o.fare).collect();
    let ftt: Vec<f64> = payoffs.fare_to_time.iter().map(|(_, r)| *r).collect();
    PricingSummary {
        eta: outcome.scheme.eta,
        ps: outcome.scheme.ps,
        profit: payoffs.profit,
        binding_operator: outcome.binding_operator.clone(),
        operators: payoffs
            .operators
            .iter()
            .map(|o| OperatorRevenue { id: o.id.clone(), maas: o.maas_revenue, plain: o.plain_revenue, floor: o.floor })
            .collect(),
        fares: Range3::of(&fares),
        compensations: Range3::of(&comp),
        fare_to_time: Range3::of(&ftt),
        compensated: payoffs.compensated.clone(),
    }
}

pub fn compute_metrics(
    net: &Network,
    base: &AssignmentResult,
    scenario: &AssignmentResult,
    pricing: Option<(&PricingOutcome, &PayoffReport)>,
    op_cost: f64,
) -> ScenarioReport {
    let b = scenario_metrics(net, base, op_cost);
    let s = scenario_metrics(net, scenario, op_cost);
    ScenarioReport {
        delta: s.diff(&b),
        base: b,
        scenario: s,
        voc: voc_groups(net, base, scenario),
        pricing: pricing.map(|(o, p)| pricing_summary(o, p)),
    }
}

/// `metric,base,scenario,delta` rows.
pub fn write_metrics_csv<W: Write>(report: &ScenarioReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "base", "scenario", "delta"])?;
    let rows = report.base.rows().into_iter().zip(report.scenario.rows()).zip(report.delta.rows());
    for (((name, b), (_, s)), (_, d)) in rows {
        out.write_record([name.to_string(), b.to_string(), s.to_string(), d.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `group,corridors,road_base,road_scenario,mt_base,mt_scenario` rows.
pub fn write_voc_csv<W: Write>(groups: &VocGroups, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["group", "corridors", "road_base", "road_scenario", "mt_base", "mt_scenario"])?;
    for (name, g) in [("congested", &groups.congested), ("uncongested", &groups.uncongested)] {
        out.write_record([
            name.to_string(),
            g.corridors.len().to_string(),
            g.road_base.to_string(),
            g.road_scenario.to_string(),
            g.mt_base.to_string(),
            g.mt_scenario.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilevel::{solve_base, AlgorithmParams};
    use crate::network::build_network;
    use crate::verification::random_toy;

    #[test]
    fn identical_scenarios_have_zero_delta() {
        let net = build_network(&random_toy(11)).unwrap();
        let params = AlgorithmParams { max_outer: 5, ..Default::default() };
        let base = solve_base(&net, &params).unwrap();
        let r = compute_metrics(&net, &base.result, &base.result, None, 0.0);
        assert_eq!(r.delta, Metrics::default());
        assert!((r.base.maas_share + r.base.plain_share - 1.0).abs() < 1e-12);
        assert!((r.base.transit_share + r.base.driving_share - 1.0).abs() < 1e-9);
        assert_eq!(r.base.maas_share, 0.0);
    }

    #[test]
    fn no_transfer_flow_means_zero_transfers() {
        let net = build_network(&random_toy(3)).unwrap();
        assert_eq!(transfers(&net, &vec![0.0; net.n_links()]), 0.0);
    }

    #[test]
    fn range_of_empty_is_zero() {
        assert_eq!(Range3::of(&[]), Range3::default());
        let r = Range3::of(&[1.0, 3.0]);
        assert_eq!((r.min, r.mean, r.max, r.count), (1.0, 2.0, 3.0, 2));
    }
}
