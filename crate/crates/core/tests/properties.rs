use std::collections::HashMap;

use proptest::prelude::*;

use maas_core::cost::{travel_time_total, CostOptions};
use maas_core::linalg::IncidenceSvd;
use maas_core::network::{
    build_network, merge_transfers, DemandConfig, LinkKind, ModServiceConfig, MultimodalConfig, OperatorConfig,
    RawNetworkConfig, RoadLinkConfig, TransitLinkConfig, TransitServiceConfig,
};
use maas_core::network::{Constants, OperatorKind};
use maas_core::pricing::{profit_at, solve_pricing, PricingInputs};
use maas_core::verification::{random_pricing_inputs, random_toy};

fn graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..8).prop_flat_map(|n| {
        let link = (0..n, 0..n).prop_filter("no loops", |(a, b)| a != b);
        (Just(n), prop::collection::vec(link, 1..16))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_incidence((n, links) in graph()) {
        let (tails, heads): (Vec<_>, Vec<_>) = links.into_iter().unzip();
        let svd = IncidenceSvd::new(n, tails, heads).unwrap();
        let a = svd.dense();
        prop_assert!((svd.reconstruct() - &a).amax() <= 1e-10);
        let p = svd.pseudo_inverse();
        prop_assert!((&a * &p * &a - &a).amax() <= 1e-9);
        prop_assert!(svd.rank() < n);
    }
}

/// Small line of places with roads, a bus on some corridors and MoD.
fn multimodal(
    n: usize,
    road: &[(f64, f64)],
    bus: &[Option<(f64, f64)>],
    consts: (f64, f64),
    pairs: &[(usize, usize)],
) -> MultimodalConfig {
    let mut road_links = Vec::new();
    let mut transit_links = Vec::new();
    for i in 0..n - 1 {
        for (x, y) in [(i, i + 1), (i + 1, i)] {
            road_links.push(RoadLinkConfig {
                from: x.to_string(),
                to: y.to_string(),
                time: road[i].0,
                capacity: 100.0,
                drive_cost: road[i].1,
                mod_fare: Some(road[i].1 + 1.0),
            });
            if let Some((time, fare)) = bus[i] {
                transit_links.push(TransitLinkConfig {
                    service: "bus".into(),
                    from: x.to_string(),
                    to: y.to_string(),
                    time,
                    capacity: 50.0,
                    fare,
                });
            }
        }
    }
    MultimodalConfig {
        constants: Constants { transfer_time: consts.0, planning_cost: consts.1, ..Constants::default() },
        operators: vec![
            OperatorConfig { id: "MT".into(), kind: OperatorKind::Mt, fleet: 0.0, min_vacant: 0.0, kappa: 0.0, revenue_floor: None },
            OperatorConfig { id: "MoD".into(), kind: OperatorKind::ModRoad, fleet: 1e4, min_vacant: 10.0, kappa: 1.0, revenue_floor: None },
        ],
        road_links,
        mod_service: Some(ModServiceConfig { operator: "MoD".into(), access_time: 2.0, egress_time: 1.0 }),
        transit_services: vec![TransitServiceConfig { name: "bus".into(), operator: "MT".into(), access_time: 3.0, egress_time: 1.5 }],
        transit_links,
        demand: pairs
            .iter()
            .map(|&(o, d)| DemandConfig { from: o.to_string(), to: d.to_string(), trips: 10.0, utility: None })
            .collect(),
        merge_transfers: false,
    }
}

/// Bellman-Ford costs from `origin` over raw links; merged links may carry
/// negative times.
fn raw_costs(cfg: &RawNetworkConfig, origin: &str, with_planning: bool) -> HashMap<String, f64> {
    let mut dist = HashMap::from([(origin.to_string(), 0.0)]);
    for _ in 0..=cfg.nodes.len() {
        let mut changed = false;
        for l in &cfg.links {
            let Some(&d) = dist.get(&l.from) else { continue };
            let c = d + l.time + l.fare + if with_planning { l.planning } else { 0.0 };
            if dist.get(&l.to).is_none_or(|&old| c < old - 1e-12) {
                dist.insert(l.to.clone(), c);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

fn corridor() -> impl Strategy<Value = (f64, f64)> {
    (1.0..20.0f64, 0.0..5.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn merging_transfers_keeps_od_costs(
        road in prop::collection::vec(corridor(), 4),
        bus in prop::collection::vec(prop::option::of(corridor()), 4),
        consts in (0.0..5.0f64, 0.0..5.0f64),
        n in 3usize..6,
    ) {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|o| (0..n).filter(move |&d| d != o).map(move |d| (o, d))).collect();
        let raw = multimodal(n, &road, &bus, consts, &pairs).expand().unwrap();
        prop_assume!(raw.links.iter().any(|l| l.kind == LinkKind::Transfer));
        let merged = merge_transfers(&raw).unwrap();
        prop_assert!(merged.links.iter().all(|l| l.kind != LinkKind::Transfer));
        for od in &raw.od_pairs {
            let ends = [(Some(&od.origin), Some(&od.destination)), (od.maas_origin.as_ref(), od.maas_destination.as_ref())];
            for (o, d) in ends {
                let (Some(o), Some(d)) = (o, d) else { continue };
                for planning in [true, false] {
                    let before = raw_costs(&raw, o, planning).get(d).copied();
                    let after = raw_costs(&merged, o, planning).get(d).copied();
                    match (before, after) {
                        (Some(b), Some(a)) => prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{o} -> {d}: {b} vs {a}"),
                        (b, a) => prop_assert_eq!(b.is_some(), a.is_some()),
                    }
                }
            }
        }
        build_network(&merged).unwrap();
    }

    #[test]
    fn bpr_times_increase_with_flow(seed in 0u64..400, bump in 0.1..50.0f64, scale in 0.0..3.0f64) {
        let net = build_network(&random_toy(seed)).unwrap();
        let caps: Vec<f64> = net.links.iter().map(|l| scale * l.capacity_or_inf().min(100.0)).collect();
        let opts = CostOptions::default();
        let t0 = travel_time_total(&net, &caps, &opts).unwrap();
        for (a, l) in net.links.iter().enumerate() {
            if l.segment.is_none() {
                continue;
            }
            let mut y = caps.clone();
            y[a] += bump;
            let t1 = travel_time_total(&net, &y, &opts).unwrap();
            prop_assert!(t1.t[a] >= t0.t[a]);
            prop_assert!(t0.t[a] >= l.time);
        }
    }

    #[test]
    fn fleet_is_conserved(seed in 0u64..400, scale in 0.0..2.0f64) {
        let net = build_network(&random_toy(seed)).unwrap();
        let y: Vec<f64> = net.links.iter().map(|l| scale * l.capacity_or_inf().min(50.0)).collect();
        let times = travel_time_total(&net, &y, &CostOptions::default()).unwrap();
        for (m, o) in net.operators.iter().enumerate() {
            if !o.kind.is_mod() {
                continue;
            }
            let busy: f64 = net
                .links
                .iter()
                .enumerate()
                .filter(|(_, l)| l.operator == Some(m) && matches!(l.kind, LinkKind::ModRegular1 | LinkKind::ModRegular2))
                .map(|(a, _)| times.t[a] * y[a])
                .sum();
            prop_assert!((times.occupied[m] - busy).abs() <= 1e-9 * busy.max(1.0));
            prop_assert!((times.occupied[m] + times.vacant[m] - o.fleet).abs() <= 1e-9 * o.fleet.max(1.0));
        }
    }
}

fn scaled(inputs: &PricingInputs, c: f64) -> PricingInputs {
    let mut out = inputs.clone();
    out.lambda.iter_mut().for_each(|l| *l *= c);
    for od in &mut out.ods {
        od.lambda_min = od.lambda_min.map(|l| l * c);
    }
    for op in &mut out.operators {
        op.weighted_volume *= c;
    }
    out.total_weighted *= c;
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lambda_scaling_leaves_fares_and_profit(seed in 0u64..10_000, c in 0.01..100.0f64) {
        let inputs = random_pricing_inputs(seed);
        let a = solve_pricing(&inputs);
        let b = solve_pricing(&scaled(&inputs, c));
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
            prop_assert!(close(a.profit, b.profit));
            prop_assert!(close(a.scheme.ps, b.scheme.ps * c));
            for (x, y) in a.scheme.pd.iter().zip(&b.scheme.pd) {
                prop_assert!(close(*x, *y));
            }
        }
    }

    #[test]
    fn profit_is_concave_in_capacity_price(seed in 0u64..10_000, lo in -20.0..20.0f64, width in 0.1..40.0f64) {
        let inputs = random_pricing_inputs(seed);
        let h = width / 200.0;
        let f: Vec<f64> = (0..=200).map(|i| profit_at(&inputs, lo + h * i as f64)).collect();
        let scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for w in f.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-9 * scale);
        }
    }
}
