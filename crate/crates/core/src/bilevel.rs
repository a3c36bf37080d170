//! Outer loop over MaaS demand: gradient steps with momentum on `q`,
//! augmented-Lagrangian updates for transit capacities.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::cost::{objective as system_time, travel_time_jacobian, CostOptions, LinkTimes, Multipliers};
use crate::equilibrium::{adjoint_gradient_tail, solve_vi, unrolled_jacobian, CostOperator, EquilibriumSolution, SolverParams};
use crate::error::{MaasError, Result};
use crate::network::{LinkKind, Network, TravelerClass};
use crate::paths::shortest_paths;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Reverse pass through the stored iterations.
    Adjoint,
    /// Forward pass, one tangent per OD. Small networks only.
    Unrolled,
    /// Central differences of the re-solved objective.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub inner_steps: usize,
    pub min_inner_steps: usize,
    pub rho0: f64,
    pub rho_max: f64,
    pub phi: f64,
    pub sigma: f64,
    pub eps_q: f64,
    pub eps_z: f64,
    pub max_violation: f64,
    pub max_outer: usize,
    pub gradient: GradientMode,
    /// Keep only `t_a + y_a ∂t_a/∂y_a` in the link gradient.
    pub simplified_gradient: bool,
    pub fd_step: f64,
    /// Extra reverse steps at the final iterate; 0 differentiates the
    /// stored steps only.
    pub adjoint_tail: usize,
    pub cost: CostOptions,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            alpha: 2.5e-4,
            gamma: 2.5e-4,
            beta: 0.2,
            inner_steps: 200,
            min_inner_steps: 20,
            rho0: 1.0,
            rho_max: 200.0,
            phi: 0.1,
            sigma: 0.85,
            eps_q: 1e-7,
            eps_z: 1e-7,
            max_violation: 1e-3,
            max_outer: 500,
            gradient: GradientMode::Adjoint,
            simplified_gradient: false,
            fd_step: 1e-4,
            adjoint_tail: 0,
            cost: CostOptions::default(),
        }
    }
}

impl AlgorithmParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("rho_max", self.rho_max),
            ("eps_q", self.eps_q),
            ("eps_z", self.eps_z),
            ("max_violation", self.max_violation),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MaasError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(MaasError::Domain(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.rho0 >= 0.0 && self.phi >= 0.0 && self.sigma > 0.0) {
            return Err(MaasError::Domain("rho0, phi must be non-negative and sigma positive".into()));
        }
        if self.inner_steps == 0 || self.min_inner_steps == 0 || self.max_outer == 0 {
            return Err(MaasError::Domain("iteration counts must be positive".into()));
        }
        Ok(())
    }

    fn solver(&self, steps: usize, store: bool) -> SolverParams {
        SolverParams { gamma: self.gamma, steps, store_iterates: store, cost: self.cost }
    }
}

/// One outer iteration, as written to the convergence log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    #[serde(with = "crate::nonfinite")]
    pub objective: f64,
    #[serde(with = "crate::nonfinite")]
    pub gap_q: f64,
    #[serde(with = "crate::nonfinite")]
    pub gap_z: f64,
    #[serde(with = "crate::nonfinite")]
    pub max_violation: f64,
    pub rho: f64,
    pub inner_steps: usize,
    #[serde(with = "crate::nonfinite")]
    pub residual: f64,
    #[serde(with = "crate::nonfinite")]
    pub maas_share: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignmentResult {
    pub q: Vec<f64>,
    #[serde(default)]
    pub z: Vec<f64>,
    /// Last inner iterate before projection; warm start for later solves.
    #[serde(default)]
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub xt: Vec<f64>,
    pub times: Vec<f64>,
    pub multipliers: Multipliers,
    /// MaaS node potential per OD (infinite when MaaS cannot serve it).
    #[serde(with = "crate::nonfinite::vec")]
    pub potentials: Vec<f64>,
    #[serde(with = "crate::nonfinite::vec")]
    pub plain_potentials: Vec<f64>,
    pub purchase: CapacityPurchase,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPurchase {
    /// `(link, purchased capacity)` on MT regular links.
    pub mt: Vec<(usize, f64)>,
    /// Occupied fleet time bought from each MoD operator (0 for others).
    pub mod_time: Vec<f64>,
}

/// The no-MaaS equilibrium used as reference for utilities and revenue floors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseScenario {
    pub result: AssignmentResult,
    /// Base generalized cost per OD (the reservation utility).
    #[serde(with = "crate::nonfinite::vec")]
    pub utility: Vec<f64>,
    /// Base fare revenue per operator.
    pub revenue: Vec<f64>,
}

pub fn objective(net: &Network, z: &[f64], opts: &CostOptions) -> Result<f64> {
    let y = net.layout.collapse(z, net.n_links());
    Ok(system_time(&crate::cost::travel_time_total(net, &y, opts)?))
}

/// `∂L/∂y` per link: `t_a + Σ_c y_c ∂t_c/∂y_a`, or the diagonal form.
pub fn link_gradient(net: &Network, times: &LinkTimes, opts: &CostOptions, simplified: bool) -> Result<Vec<f64>> {
    let j = travel_time_jacobian(net, times, opts)?;
    if simplified {
        return Ok((0..net.n_links()).map(|a| times.t[a] + times.total[a] * j.get(a, a)).collect());
    }
    let jt_y = j.mul_t(&times.total);
    Ok(times.t.iter().zip(jt_y).map(|(t, g)| t + g).collect())
}

/// `∇L(q)` from the equilibrium at `q`.
pub fn gradient(
    net: &Network,
    q: &[f64],
    sol: &EquilibriumSolution,
    u0: Option<&[f64]>,
    mult: &Multipliers,
    params: &AlgorithmParams,
) -> Result<Vec<f64>> {
    if q.len() != net.n_od() {
        return Err(MaasError::Shape(format!("q has {} entries for {} OD pairs", q.len(), net.n_od())));
    }
    let op = CostOperator::new(net, mult, params.cost);
    let times = op.times(&sol.z)?;
    let gy = link_gradient(net, &times, &params.cost, params.simplified_gradient)?;
    let mut gz = vec![0.0; sol.z.len()];
    net.layout.broadcast_add(&gy, &mut gz);
    match params.gradient {
        GradientMode::Adjoint => adjoint_gradient_tail(net, sol, mult, params.cost, &gz, params.adjoint_tail),
        GradientMode::Unrolled => {
            let cols = unrolled_jacobian(net, sol, mult, params.cost)?;
            Ok(cols.iter().map(|c| c.iter().zip(&gz).map(|(a, b)| a * b).sum()).collect())
        }
        GradientMode::FiniteDifference => {
            let caps = net.demand_caps();
            let solver = params.solver(sol.trace.len(), false);
            let l_at = |qq: &[f64]| -> Result<f64> {
                let s = solve_vi(net, qq, u0, &solver, mult)?;
                objective(net, &s.z, &params.cost)
            };
            let base = objective(net, &sol.z, &params.cost)?;
            let mut g = vec![0.0; q.len()];
            for w in 0..q.len() {
                let h = params.fd_step * q[w].abs().max(1.0);
                let (up, down) = (q[w] + h <= caps[w], q[w] - h >= 0.0);
                let mut qq = q.to_vec();
                g[w] = match (up, down) {
                    (true, true) => {
                        qq[w] = q[w] + h;
                        let a = l_at(&qq)?;
                        qq[w] = q[w] - h;
                        (a - l_at(&qq)?) / (2.0 * h)
                    }
                    (true, false) => {
                        qq[w] = q[w] + h;
                        (l_at(&qq)? - base) / h
                    }
                    (false, true) => {
                        qq[w] = q[w] - h;
                        (base - l_at(&qq)?) / h
                    }
                    (false, false) => 0.0,
                };
            }
            Ok(g)
        }
    }
}

/// Momentum step: `ω' = βω − α g`, `q' = min(Q, [q − α g + β ω']_+)`.
pub fn nesterov_update(q: &[f64], omega: &[f64], grad: &[f64], alpha: f64, beta: f64, caps: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let omega2: Vec<f64> = omega.iter().zip(grad).map(|(w, g)| beta * w - alpha * g).collect();
    let q2 = (0..q.len())
        .map(|i| (q[i] - alpha * grad[i] + beta * omega2[i]).max(0.0).min(caps[i]))
        .collect();
    (q2, omega2)
}

/// Positive part of `y_a − K_a` on MT regular links.
pub fn capacity_violation(net: &Network, total: &[f64]) -> Vec<f64> {
    net.links
        .iter()
        .enumerate()
        .map(|(a, l)| if l.kind == LinkKind::MtRegular { (total[a] - l.capacity_or_inf()).max(0.0) } else { 0.0 })
        .collect()
}

/// `μ' = [μ + ρ(y − K)]_+`; `ρ` grows by `φ` when some violation did not
/// shrink by the factor `σ`.
pub fn multiplier_update(
    net: &Network,
    mult: &Multipliers,
    total: &[f64],
    prev_violation: Option<&[f64]>,
    params: &AlgorithmParams,
) -> Multipliers {
    let mut mu = vec![0.0; net.n_links()];
    for (a, l) in net.links.iter().enumerate() {
        if l.kind == LinkKind::MtRegular {
            mu[a] = (mult.mu[a] + mult.rho * (total[a] - l.capacity_or_inf())).max(0.0);
        }
    }
    let viol = capacity_violation(net, total);
    let stagnant = match prev_violation {
        Some(prev) => viol.iter().zip(prev).any(|(v, p)| *v > 0.0 && *v >= params.sigma * p),
        None => false,
    };
    let rho = if stagnant { (mult.rho + params.phi).min(params.rho_max) } else { mult.rho };
    Multipliers { mu, rho }
}

fn rel_gap(new: &[f64], old: &[f64]) -> f64 {
    let d = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let n = old.iter().map(|a| a * a).sum::<f64>().sqrt();
    d / n.max(1.0)
}

/// Relative changes `(‖Δq‖/‖q_prev‖, ‖Δz‖/‖z_prev‖)`; absolute when the
/// previous norm is below one, so that noise around `q = 0` does not read as
/// a large relative change.
pub fn gaps(q: &[f64], q_prev: &[f64], z: &[f64], z_prev: &[f64]) -> (f64, f64) {
    (rel_gap(q, q_prev), rel_gap(z, z_prev))
}

/// Shortest generalized costs per OD: MaaS under `t + μ`, non-MaaS under
/// `t + μ + fare + planning`.
pub fn node_potentials(net: &Network, t: &[f64], mu: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let maas_cost: Vec<f64> = t.iter().zip(mu).map(|(t, m)| t + m).collect();
    let plain_cost: Vec<f64> = net.links.iter().enumerate().map(|(a, l)| maas_cost[a] + l.fare + l.planning).collect();
    let maas_mask = net.class_mask(TravelerClass::Maas);
    let plain_mask = net.class_mask(TravelerClass::Plain);
    let mut pi = vec![f64::INFINITY; net.n_od()];
    let mut pit = vec![f64::INFINITY; net.n_od()];
    let mut cache: std::collections::HashMap<(bool, usize), Vec<f64>> = std::collections::HashMap::new();
    for (w, od) in net.od_pairs.iter().enumerate() {
        if let (Some(o), Some(s)) = (od.maas_origin, od.maas_destination) {
            if !cache.contains_key(&(true, o)) {
                cache.insert((true, o), shortest_paths(&net.graph, &maas_cost, Some(&maas_mask), o)?.dist);
            }
            pi[w] = cache[&(true, o)][s];
        }
        let o = od.origin;
        if !cache.contains_key(&(false, o)) {
            cache.insert((false, o), shortest_paths(&net.graph, &plain_cost, Some(&plain_mask), o)?.dist);
        }
        pit[w] = cache[&(false, o)][od.destination];
    }
    if pi.iter().zip(&net.od_pairs).any(|(p, od)| od.maas_reachable && !p.is_finite()) {
        debug!("some MaaS-reachable OD has no finite potential");
    }
    Ok((pi, pit))
}

/// Capacity the platform buys: MT seats equal to MaaS flow, MoD fleet time
/// equal to the occupied time of MaaS riders.
pub fn capacity_purchase(net: &Network, x: &[f64], t: &[f64]) -> CapacityPurchase {
    let mt = net.links_of_kind(LinkKind::MtRegular).map(|a| (a, x[a])).collect();
    let mut mod_time = vec![0.0; net.operators.len()];
    for (a, l) in net.links.iter().enumerate() {
        if let (Some(m), LinkKind::ModRegular1 | LinkKind::ModRegular2) = (l.operator, l.kind) {
            mod_time[m] += t[a] * x[a];
        }
    }
    CapacityPurchase { mt, mod_time }
}

struct LoopState {
    q: Vec<f64>,
    sol: Option<EquilibriumSolution>,
    mult: Multipliers,
}

fn run_loop(net: &Network, params: &AlgorithmParams, q0: Vec<f64>, u0: Option<Vec<f64>>, mult0: Multipliers, update_q: bool) -> Result<AssignmentResult> {
    params.validate()?;
    let caps = net.demand_caps();
    if q0.len() != caps.len() {
        return Err(MaasError::Shape(format!("q0 has {} entries for {} OD pairs", q0.len(), caps.len())));
    }
    let total_demand = net.total_demand().max(f64::MIN_POSITIVE);
    let mut steps = params.inner_steps;
    let mut omega = vec![0.0; caps.len()];
    let mut state = LoopState { q: q0, sol: None, mult: mult0 };
    let mut u = u0;
    let mut z_prev: Option<Vec<f64>> = None;
    let mut prev_viol: Option<Vec<f64>> = None;
    let mut log = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..params.max_outer {
        iterations = k + 1;
        let store = update_q && params.gradient != GradientMode::FiniteDifference;
        let sol = solve_vi(net, &state.q, u.as_deref(), &params.solver(steps, store), &state.mult)?;
        let mut q_new = state.q.clone();
        if update_q {
            let g = gradient(net, &state.q, &sol, u.as_deref(), &state.mult, params)?;
            let (q2, w2) = nesterov_update(&state.q, &omega, &g, params.alpha, params.beta, &caps);
            log::trace!("outer {k}: q={:?} g={:?}", state.q, g);
            q_new = q2;
            omega = w2;
        }
        let y = net.layout.collapse(&sol.z, net.n_links());
        let mult = multiplier_update(net, &state.mult, &y, prev_viol.as_deref(), params);
        let viol = capacity_violation(net, &y);
        let max_viol = viol.iter().fold(0.0f64, |m, v| m.max(*v));
        let (gq, gz) = match &z_prev {
            Some(zp) => gaps(&q_new, &state.q, &sol.z, zp),
            None => (f64::INFINITY, f64::INFINITY),
        };
        let obj = objective(net, &sol.z, &params.cost)?;
        let share = state.q.iter().sum::<f64>() / total_demand;
        log.push(IterationRecord {
            iteration: k,
            objective: obj,
            gap_q: gq,
            gap_z: gz,
            max_violation: max_viol,
            rho: state.mult.rho,
            inner_steps: steps,
            residual: sol.residual,
            maas_share: share,
        });
        debug!("outer {k}: L={obj:.6e} gq={gq:.3e} gz={gz:.3e} viol={max_viol:.3e} rho={} N={steps}", state.mult.rho);
        let done = gq < params.eps_q && gz < params.eps_z && max_viol < params.max_violation;
        if gq < 10.0 * params.eps_q && gz < 10.0 * params.eps_z {
            steps = steps.saturating_sub(1).max(params.min_inner_steps);
        }
        z_prev = Some(sol.z.clone());
        u = Some(sol.u.clone());
        prev_viol = Some(viol);
        let q_used = std::mem::replace(&mut state.q, q_new);
        state.sol = Some(sol);
        if done {
            // The last q step is below tolerance; report the state at which
            // the equilibrium was computed.
            state.q = q_used;
            converged = true;
            break;
        }
        state.mult = mult;
    }
    if !converged {
        info!("outer loop stopped after {iterations} iterations without meeting tolerances");
    }
    finish(net, params, state, converged, iterations, log)
}

/// Chunks of `inner_steps` run on the final demand before results are
/// extracted, stopping once the step residual is below `POLISH_TOL`.
pub const POLISH_CHUNKS: usize = 50;
pub const POLISH_TOL: f64 = 1e-11;

fn finish(net: &Network, params: &AlgorithmParams, state: LoopState, converged: bool, iterations: usize, log: Vec<IterationRecord>) -> Result<AssignmentResult> {
    let mut sol = state.sol.ok_or_else(|| MaasError::State("outer loop ran no iterations".into()))?;
    // The last stored equilibrium was computed at the previous demand when
    // the loop ran out of iterations; re-solve so flows and demand agree.
    for _ in 0..POLISH_CHUNKS {
        let next = solve_vi(net, &state.q, Some(&sol.u), &params.solver(params.inner_steps, false), &state.mult)?;
        let done = next.residual <= POLISH_TOL;
        sol = next;
        if done {
            break;
        }
    }
    let op = CostOperator::new(net, &state.mult, params.cost);
    let times = op.times(&sol.z)?;
    let (x, xt) = net.layout.aggregate(&sol.z, net.n_links());
    // Report the multiplier estimate at the final flow, so that `t + μ` is
    // the cost the equilibrium was actually computed under.
    let mut mult = state.mult;
    for (a, l) in net.links.iter().enumerate() {
        if l.kind == LinkKind::MtRegular {
            mult.mu[a] = (mult.mu[a] + mult.rho * (times.total[a] - l.capacity_or_inf())).max(0.0);
        }
    }
    let (pi, pit) = node_potentials(net, &times.t, &mult.mu)?;
    let purchase = capacity_purchase(net, &x, &times.t);
    Ok(AssignmentResult {
        q: state.q,
        objective: system_time(&times),
        z: sol.z,
        u: sol.u,
        x,
        xt,
        times: times.t,
        multipliers: mult,
        potentials: pi,
        plain_potentials: pit,
        purchase,
        converged,
        iterations,
        log,
    })
}

/// Equilibrium without MaaS (`q = 0`), with the capacity multipliers driven
/// by the same augmented loop.
pub fn solve_base(net: &Network, params: &AlgorithmParams) -> Result<BaseScenario> {
    let result = run_loop(net, params, vec![0.0; net.n_od()], None, Multipliers::new(net.n_links(), params.rho0), false)?;
    let utility = result.plain_potentials.clone();
    let mut revenue = vec![0.0; net.operators.len()];
    for (a, l) in net.links.iter().enumerate() {
        if let Some(m) = l.operator {
            if l.kind.is_regular() {
                revenue[m] += l.fare * result.xt[a];
            }
        }
    }
    Ok(BaseScenario { result, utility, revenue })
}

/// Runs the outer loop from `init` (typically the base scenario).
pub fn solve_assignment(net: &Network, params: &AlgorithmParams, init: Option<&BaseScenario>) -> Result<AssignmentResult> {
    let (u0, mult) = match init {
        Some(b) => ((!b.result.u.is_empty()).then(|| b.result.u.clone()), b.result.multipliers.clone()),
        None => (None, Multipliers::new(net.n_links(), params.rho0)),
    };
    run_loop(net, params, vec![0.0; net.n_od()], u0, mult, true)
}

/// Same loop with a caller-chosen start point.
pub fn solve_assignment_from(net: &Network, params: &AlgorithmParams, q0: Vec<f64>, u0: Option<Vec<f64>>, mult: Multipliers) -> Result<AssignmentResult> {
    run_loop(net, params, q0, u0, mult, true)
}

pub fn write_log_csv<W: std::io::Write>(log: &[IterationRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in log {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
