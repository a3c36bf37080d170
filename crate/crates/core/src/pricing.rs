//! OD trip fares and a single wholesale capacity price, chosen so that the
//! assignment stays stable for travelers and operators.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bilevel::{AssignmentResult, BaseScenario};
use crate::error::{MaasError, Result};
use crate::network::{LinkKind, Network, TravelerClass};
use crate::paths::{has_cycle, shortest_paths};
use crate::verification::enumerate_paths;

/// A MaaS link counts as used by an OD when its origin-block flow exceeds
/// this fraction of the OD's MaaS demand.
pub const USED_LINK_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObjective {
    Platform,
    Traveler,
    Operator,
}

impl std::str::FromStr for SweepObjective {
    type Err = MaasError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "platform" => Ok(Self::Platform),
            "traveler" => Ok(Self::Traveler),
            "operator" => Ok(Self::Operator),
            _ => Err(MaasError::Config(format!("unknown objective {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdPricing {
    pub id: String,
    pub demand: f64,
    pub q: f64,
    /// MaaS generalized cost at the assignment.
    #[serde(with = "crate::nonfinite")]
    pub pi: f64,
    /// Non-MaaS generalized cost at the assignment (fares included).
    #[serde(with = "crate::nonfinite")]
    pub pi_plain: f64,
    #[serde(with = "crate::nonfinite")]
    pub tau_min: f64,
    /// Cheapest λ-sum over used MaaS paths; `None` when the OD has no MaaS flow.
    pub lambda_min: Option<f64>,
    #[serde(with = "crate::nonfinite")]
    pub utility: f64,
    /// The used subgraph contained a cycle.
    pub cyclic: bool,
}

impl OdPricing {
    /// Bound from nonnegative traveler payoff: `U − π`.
    pub fn payoff_bound(&self) -> f64 {
        self.utility - self.pi
    }

    /// `p^d` ceiling at capacity price `ps`.
    pub fn fare_bound(&self, ps: f64) -> f64 {
        let a = self.payoff_bound();
        match self.lambda_min {
            Some(l) => a.min(self.tau_min - self.pi + ps * l),
            None => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorPricing {
    pub id: String,
    pub floor: f64,
    pub plain_revenue: f64,
    pub weighted_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingInputs {
    pub eta: f64,
    pub lambda: Vec<f64>,
    pub ods: Vec<OdPricing>,
    pub operators: Vec<OperatorPricing>,
    pub total_weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingScheme {
    pub eta: f64,
    pub ps: f64,
    pub pd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uniqueness {
    /// Some OD has `q λ_min` different from the average weighted volume.
    pub volume_condition: bool,
    /// Two ODs have different breakpoints `(U − τ)/λ_min`.
    pub breakpoint_condition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingOutcome {
    pub scheme: PricingScheme,
    pub profit: f64,
    pub ps_lower: f64,
    /// Operator whose revenue floor sets `p̲^s`, if any.
    pub binding_operator: Option<String>,
    pub uniqueness: Uniqueness,
}

/// Capacity price weights: fares on MoD regular links, `η`-scaled fares on MT
/// regular links, half the own access time on MT access links.
pub fn lambda_weights(net: &Network, eta: f64) -> Result<Vec<f64>> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(MaasError::Domain(format!("eta must be non-negative, got {eta}")));
    }
    Ok(net
        .links
        .iter()
        .map(|l| match l.kind {
            LinkKind::ModRegular1 | LinkKind::ModRegular2 => l.fare,
            LinkKind::MtRegular => eta * l.fare,
            LinkKind::MtAccess => 0.5 * (l.time - l.transfer_time),
            _ => 0.0,
        })
        .collect())
}

/// Cheapest non-MaaS route per OD under `t + μ + planning`, fares excluded.
pub fn tau_min(net: &Network, assignment: &AssignmentResult) -> Result<Vec<f64>> {
    let cost: Vec<f64> = net
        .links
        .iter()
        .enumerate()
        .map(|(a, l)| assignment.times[a] + assignment.multipliers.mu[a] + l.planning)
        .collect();
    let mask = net.class_mask(TravelerClass::Plain);
    let mut out = vec![f64::INFINITY; net.n_od()];
    let mut cache = std::collections::HashMap::new();
    for (w, od) in net.od_pairs.iter().enumerate() {
        let dist = match cache.get(&od.origin) {
            Some(d) => d,
            None => {
                let d = shortest_paths(&net.graph, &cost, Some(&mask), od.origin)?.dist;
                cache.entry(od.origin).or_insert(d)
            }
        };
        out[w] = dist[od.destination];
        if !out[w].is_finite() {
            warn!("OD {} has no non-MaaS route", od.id);
        }
    }
    Ok(out)
}

/// Links used by MaaS travelers from the OD's origin block.
pub fn used_links(net: &Network, assignment: &AssignmentResult, w: usize) -> Vec<bool> {
    let od = &net.od_pairs[w];
    let mut used = vec![false; net.n_links()];
    let (Some(b), true) = (od.maas_block, assignment.q[w] > 0.0) else {
        return used;
    };
    let cl = &net.layout.maas;
    let zb = &assignment.z[cl.block_range(b)];
    let thr = USED_LINK_THRESHOLD * assignment.q[w];
    for (i, &a) in cl.links.iter().enumerate() {
        used[a] = zb[i] > thr;
    }
    used
}

/// `λ*_min` per OD and whether the used subgraph had a cycle.
pub fn lambda_min(net: &Network, assignment: &AssignmentResult, lambda: &[f64]) -> Result<Vec<(Option<f64>, bool)>> {
    let mut out = Vec::with_capacity(net.n_od());
    for (w, od) in net.od_pairs.iter().enumerate() {
        let (Some(o), Some(s)) = (od.maas_origin, od.maas_destination) else {
            out.push((None, false));
            continue;
        };
        if assignment.q[w] <= 0.0 {
            out.push((None, false));
            continue;
        }
        let used = used_links(net, assignment, w);
        let cyclic = has_cycle(&net.graph, &used);
        if cyclic {
            warn!("used MaaS subgraph of OD {} has a cycle", od.id);
        }
        let tree = shortest_paths(&net.graph, lambda, Some(&used), o)?;
        let l = if tree.reaches(s) {
            tree.dist[s]
        } else {
            // Threshold cut every path; fall back to all MaaS links.
            warn!("OD {}: no used MaaS path above threshold", od.id);
            let mask = net.class_mask(TravelerClass::Maas);
            shortest_paths(&net.graph, lambda, Some(&mask), o)?.dist[s]
        };
        out.push((l.is_finite().then_some(l), cyclic));
    }
    Ok(out)
}

/// Assembles every input of the reduced pricing program.
pub fn pricing_inputs(net: &Network, assignment: &AssignmentResult, base: &BaseScenario, eta: f64) -> Result<PricingInputs> {
    let lambda = lambda_weights(net, eta)?;
    let tau = tau_min(net, assignment)?;
    let lmin = lambda_min(net, assignment, &lambda)?;
    let ods = net
        .od_pairs
        .iter()
        .enumerate()
        .map(|(w, od)| OdPricing {
            id: od.id.clone(),
            demand: od.demand,
            q: assignment.q[w],
            pi: assignment.potentials[w],
            pi_plain: assignment.plain_potentials[w],
            tau_min: tau[w],
            lambda_min: lmin[w].0,
            utility: od.utility.unwrap_or(base.utility[w]),
            cyclic: lmin[w].1,
        })
        .collect();
    let mut operators: Vec<OperatorPricing> = net
        .operators
        .iter()
        .enumerate()
        .map(|(m, o)| OperatorPricing {
            id: o.id.clone(),
            floor: o.revenue_floor.unwrap_or(base.revenue[m]),
            plain_revenue: 0.0,
            weighted_volume: 0.0,
        })
        .collect();
    let mut total_weighted = 0.0;
    for (a, l) in net.links.iter().enumerate() {
        total_weighted += lambda[a] * assignment.x[a];
        if let Some(m) = l.operator {
            if l.kind.is_regular() {
                operators[m].plain_revenue += l.fare * assignment.xt[a];
            }
            operators[m].weighted_volume += lambda[a] * assignment.x[a];
        }
    }
    Ok(PricingInputs { eta, lambda, ods, operators, total_weighted })
}

/// Smallest capacity price meeting every revenue floor, and the operator
/// that sets it.
pub fn ps_lower_bound(inputs: &PricingInputs) -> Result<(f64, Option<String>)> {
    let mut best = 0.0;
    let mut who = None;
    for op in &inputs.operators {
        let gap = op.floor - op.plain_revenue;
        if gap <= 1e-9 * op.floor.abs().max(1.0) {
            continue;
        }
        if op.weighted_volume <= 0.0 {
            return Err(MaasError::Infeasible(format!(
                "operator {} needs {gap} more revenue but sells no weighted MaaS volume",
                op.id
            )));
        }
        let p = gap / op.weighted_volume;
        if p > best {
            best = p;
            who = Some(op.id.clone());
        }
    }
    Ok((best, who))
}

/// Platform profit at capacity price `ps`, with fares at their ceilings.
pub fn profit_at(inputs: &PricingInputs, ps: f64) -> f64 {
    inputs.ods.iter().filter(|o| o.q > 0.0).map(|o| o.q * o.fare_bound(ps)).sum::<f64>() - ps * inputs.total_weighted
}

/// Exact solution of the reduced program by scanning the breakpoints of the
/// concave piecewise-linear profit in `p^s`.
pub fn solve_pricing(inputs: &PricingInputs) -> Result<PricingOutcome> {
    let (lower, binding) = ps_lower_bound(inputs)?;
    let mut cands = vec![lower];
    for o in inputs.ods.iter().filter(|o| o.q > 0.0) {
        if let Some(l) = o.lambda_min.filter(|l| *l > 0.0) {
            let p = (o.utility - o.tau_min) / l;
            if p.is_finite() && p > lower {
                cands.push(p);
            }
        }
    }
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut ps = lower;
    let mut profit = profit_at(inputs, lower);
    for &p in &cands[1..] {
        let v = profit_at(inputs, p);
        if v > profit + 1e-12 * profit.abs().max(1.0) {
            ps = p;
            profit = v;
        }
    }
    let pd = inputs.ods.iter().map(|o| o.fare_bound(ps)).collect();
    let served: Vec<&OdPricing> = inputs.ods.iter().filter(|o| o.q > 0.0 && o.lambda_min.is_some()).collect();
    let avg = inputs.total_weighted / inputs.ods.len().max(1) as f64;
    let volume_condition = served.iter().any(|o| (o.q * o.lambda_min.unwrap() - avg).abs() > 1e-12 * avg.abs().max(1.0));
    let bps: Vec<f64> = served
        .iter()
        .filter(|o| o.lambda_min.unwrap() > 0.0)
        .map(|o| (o.utility - o.tau_min) / o.lambda_min.unwrap())
        .collect();
    let breakpoint_condition = bps.iter().any(|b| (b - bps[0]).abs() > 1e-12 * bps[0].abs().max(1.0));
    Ok(PricingOutcome {
        scheme: PricingScheme { eta: inputs.eta, ps, pd },
        profit,
        ps_lower: lower,
        binding_operator: binding,
        uniqueness: Uniqueness { volume_condition, breakpoint_condition },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdPayoff {
    pub id: String,
    pub q: f64,
    #[serde(with = "crate::nonfinite")]
    pub fare: f64,
    #[serde(with = "crate::nonfinite")]
    pub maas_cost: f64,
    #[serde(with = "crate::nonfinite")]
    pub plain_cost: f64,
    /// `U − (π + p^d)`.
    #[serde(with = "crate::nonfinite")]
    pub saving: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorPayoff {
    pub id: String,
    pub maas_revenue: f64,
    pub plain_revenue: f64,
    pub floor: f64,
}

impl OperatorPayoff {
    pub fn total(&self) -> f64 {
        self.maas_revenue + self.plain_revenue
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffReport {
    pub ods: Vec<OdPayoff>,
    pub operators: Vec<OperatorPayoff>,
    pub profit: f64,
    /// Total generalized cost of all travelers.
    pub traveler_cost: f64,
    pub operator_revenue: f64,
    /// `p^d / π` per OD with positive fare.
    pub fare_to_time: Vec<(String, f64)>,
    pub compensated: Vec<String>,
}

pub fn compute_payoffs(inputs: &PricingInputs, scheme: &PricingScheme) -> PayoffReport {
    let mut ods = Vec::with_capacity(inputs.ods.len());
    let mut traveler_cost = 0.0;
    let mut fare_to_time = Vec::new();
    let mut compensated = Vec::new();
    for (o, &pd) in inputs.ods.iter().zip(&scheme.pd) {
        let maas_cost = o.pi + pd;
        traveler_cost += (o.demand - o.q) * o.pi_plain + if o.q > 0.0 { o.q * maas_cost } else { 0.0 };
        if o.q > 0.0 && pd > 0.0 && o.pi > 0.0 {
            fare_to_time.push((o.id.clone(), pd / o.pi));
        }
        if o.q > 0.0 && pd < 0.0 {
            compensated.push(o.id.clone());
        }
        ods.push(OdPayoff {
            id: o.id.clone(),
            q: o.q,
            fare: pd,
            maas_cost,
            plain_cost: o.pi_plain,
            saving: o.utility - maas_cost,
        });
    }
    let operators: Vec<OperatorPayoff> = inputs
        .operators
        .iter()
        .map(|op| OperatorPayoff {
            id: op.id.clone(),
            maas_revenue: scheme.ps * op.weighted_volume,
            plain_revenue: op.plain_revenue,
            floor: op.floor,
        })
        .collect();
    let profit = inputs.ods.iter().zip(&scheme.pd).filter(|(o, _)| o.q > 0.0).map(|(o, p)| o.q * p).sum::<f64>()
        - scheme.ps * inputs.total_weighted;
    PayoffReport {
        operator_revenue: operators.iter().map(|o| o.total()).sum(),
        ods,
        operators,
        profit,
        traveler_cost,
        fare_to_time,
        compensated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eta: f64,
    pub feasible: bool,
    #[serde(with = "crate::nonfinite")]
    pub ps: f64,
    #[serde(with = "crate::nonfinite")]
    pub profit: f64,
    #[serde(with = "crate::nonfinite")]
    pub traveler_cost: f64,
    #[serde(with = "crate::nonfinite")]
    pub operator_revenue: f64,
    pub binding_operator: Option<String>,
    pub cause: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub objective: SweepObjective,
    pub points: Vec<SweepPoint>,
    pub best: Option<usize>,
    pub outcome: Option<PricingOutcome>,
}

/// Solves the pricing program for every `η` and picks the best point for the
/// chosen stakeholder. Traveler and operator objectives require nonnegative
/// platform profit.
pub fn scenario_sweep(
    net: &Network,
    assignment: &AssignmentResult,
    base: &BaseScenario,
    grid: &[f64],
    objective: SweepObjective,
) -> Result<SweepResult> {
    let runs: Vec<(SweepPoint, Option<PricingOutcome>)> = grid
        .par_iter()
        .map(|&eta| {
            let res = pricing_inputs(net, assignment, base, eta).and_then(|inp| {
                let out = solve_pricing(&inp)?;
                let pay = compute_payoffs(&inp, &out.scheme);
                Ok((out, pay))
            });
            match res {
                Ok((out, pay)) => (
                    SweepPoint {
                        eta,
                        feasible: true,
                        ps: out.scheme.ps,
                        profit: out.profit,
                        traveler_cost: pay.traveler_cost,
                        operator_revenue: pay.operator_revenue,
                        binding_operator: out.binding_operator.clone(),
                        cause: None,
                    },
                    Some(out),
                ),
                Err(e) => (
                    SweepPoint {
                        eta,
                        feasible: false,
                        ps: f64::NAN,
                        profit: f64::NAN,
                        traveler_cost: f64::NAN,
                        operator_revenue: f64::NAN,
                        binding_operator: None,
                        cause: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();
    let score = |p: &SweepPoint| -> Option<f64> {
        if !p.feasible {
            return None;
        }
        match objective {
            SweepObjective::Platform => Some(p.profit),
            SweepObjective::Traveler => (p.profit >= -1e-9).then_some(-p.traveler_cost),
            SweepObjective::Operator => (p.profit >= -1e-9).then_some(p.operator_revenue),
        }
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, (p, _)) in runs.iter().enumerate() {
        if let Some(s) = score(p) {
            if best.is_none_or(|(_, b)| s > b + 1e-12 * b.abs().max(1.0)) {
                best = Some((i, s));
            }
        }
    }
    if best.is_none() {
        let causes: Vec<String> = runs
            .iter()
            .map(|(p, _)| format!("eta {}: {}", p.eta, p.cause.clone().unwrap_or_else(|| "negative profit".into())))
            .collect();
        warn!("no feasible eta in sweep: {}", causes.join("; "));
    }
    let outcome = best.and_then(|(i, _)| runs[i].1.clone());
    Ok(SweepResult {
        objective,
        best: best.map(|(i, _)| i),
        points: runs.into_iter().map(|(p, _)| p).collect(),
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Worst shortfall of a matched MaaS path against an unmatched one.
    pub maas_violation: f64,
    /// Worst shortfall of a matched MaaS path against a non-MaaS path.
    pub plain_violation: f64,
    /// Some path set hit the enumeration budget.
    pub partial: bool,
}

/// Checks both stability conditions on enumerated paths. The operator payoff
/// on an unmatched MaaS path is zero since no capacity is bought there.
pub fn check_stability(
    net: &Network,
    assignment: &AssignmentResult,
    inputs: &PricingInputs,
    scheme: &PricingScheme,
    hop_budget: usize,
) -> Result<StabilityReport> {
    let mut rep = StabilityReport { maas_violation: 0.0, plain_violation: 0.0, partial: false };
    let tmu: Vec<f64> = (0..net.n_links()).map(|a| assignment.times[a] + assignment.multipliers.mu[a]).collect();
    for (w, od) in inputs.ods.iter().enumerate() {
        if od.q <= 0.0 {
            continue;
        }
        let paths = enumerate_paths(net, w, hop_budget);
        rep.partial |= paths.partial;
        let used = used_links(net, assignment, w);
        let sum = |p: &[usize], v: &[f64]| p.iter().map(|&a| v[a]).sum::<f64>();
        let pd = scheme.pd[w];
        let matched: Vec<f64> = paths
            .maas
            .iter()
            .filter(|p| p.iter().all(|&a| used[a]))
            .map(|p| od.utility - sum(p, &tmu) - pd + scheme.ps * sum(p, &inputs.lambda))
            .collect();
        let Some(worst_matched) = matched.iter().cloned().reduce(f64::min) else {
            continue;
        };
        for p in paths.maas.iter().filter(|p| !p.iter().all(|&a| used[a])) {
            let other = od.utility - sum(p, &tmu) - pd;
            rep.maas_violation = rep.maas_violation.max(other - worst_matched);
        }
        for p in &paths.plain {
            // Traveler pays fares and planning; operators collect the fares.
            let other = od.utility - p.iter().map(|&a| tmu[a] + net.links[a].planning).sum::<f64>();
            rep.plain_violation = rep.plain_violation.max(other - worst_matched);
        }
    }
    Ok(rep)
}

pub fn write_sweep_csv<W: std::io::Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["eta", "feasible", "ps", "profit", "traveler_cost", "operator_revenue", "binding_operator"])?;
    for p in points {
        wr.write_record([
            p.eta.to_string(),
            p.feasible.to_string(),
            p.ps.to_string(),
            p.profit.to_string(),
            p.traveler_cost.to_string(),
            p.operator_revenue.to_string(),
            p.binding_operator.clone().unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_pricing_csv<W: std::io::Write>(report: &PayoffReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["od", "q", "fare", "maas_cost", "plain_cost", "saving"])?;
    for o in &report.ods {
        wr.write_record([
            o.id.clone(),
            o.q.to_string(),
            o.fare.to_string(),
            o.maas_cost.to_string(),
            o.plain_cost.to_string(),
            o.saving.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_od(floor: f64) -> PricingInputs {
        PricingInputs {
            eta: 1.0,
            lambda: vec![],
            ods: vec![OdPricing {
                id: "w".into(),
                demand: 5.0,
                q: 5.0,
                pi: 0.0,
                pi_plain: 10.0,
                tau_min: 12.0,
                lambda_min: Some(1.0),
                utility: 10.0,
                cyclic: false,
            }],
            operators: vec![OperatorPricing { id: "m".into(), floor, plain_revenue: 0.0, weighted_volume: 1.0 }],
            total_weighted: 1.0,
        }
    }

    #[test]
    fn payoff_bound_binds() {
        let out = solve_pricing(&one_od(0.0)).unwrap();
        assert_eq!(out.scheme.ps, 0.0);
        assert_eq!(out.scheme.pd, vec![10.0]);
        assert_eq!(out.profit, 50.0);
    }

    #[test]
    fn floor_shifts_capacity_price() {
        let out = solve_pricing(&one_od(2.0)).unwrap();
        assert_eq!(out.scheme.ps, 2.0);
        assert_eq!(out.scheme.pd, vec![10.0]);
        assert_eq!(out.profit, 48.0);
        assert_eq!(out.binding_operator.as_deref(), Some("m"));
    }

    #[test]
    fn lower_bound_arithmetic() {
        let mut inp = one_od(100.0);
        inp.operators[0].plain_revenue = 40.0;
        inp.operators[0].weighted_volume = 30.0;
        assert_eq!(ps_lower_bound(&inp).unwrap().0, 2.0);
        inp.operators[0].weighted_volume = 0.0;
        assert!(matches!(ps_lower_bound(&inp), Err(MaasError::Infeasible(_))));
        inp.operators[0].floor = 0.0;
        assert_eq!(ps_lower_bound(&inp).unwrap().0, 0.0);
    }

    #[test]
    fn breakpoint_beats_floor() {
        // τ below U makes the stability bound bind at p^s = 0; raising p^s to
        // the breakpoint (U − τ)/λ = 4 pays off when q λ exceeds the volume.
        let mut inp = one_od(0.0);
        inp.ods[0].tau_min = 6.0;
        let out = solve_pricing(&inp).unwrap();
        assert!((out.scheme.ps - 4.0).abs() < 1e-12);
        assert!((out.profit - (50.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn objective_parsing() {
        assert!(SweepObjective::Platform == "platform".parse().unwrap());
        assert!("x".parse::<SweepObjective>().is_err());
    }
}
