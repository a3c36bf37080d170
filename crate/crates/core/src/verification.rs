//! Brute-force oracles for small networks: path enumeration, path-based
//! equilibrium, finite-difference gradients and LP vertex enumeration.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bilevel::objective;
use crate::cost::{augmented_time, travel_time_total, CostOptions, Multipliers};
use crate::equilibrium::{solve_vi, SolverParams};
use crate::error::{MaasError, Result};
use crate::network::{
    Constants, LinkConfig, LinkKind, Network, NodeConfig, NodeRole, OdConfig, OperatorConfig, OperatorKind,
    RawNetworkConfig, TravelerClass,
};
use crate::pricing::{solve_pricing, OdPricing, OperatorPricing, PricingInputs};

/// Upper bound on paths kept per OD and class.
const MAX_PATHS: usize = 100_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub maas: Vec<Vec<usize>>,
    pub plain: Vec<Vec<usize>>,
    /// Some branch was cut by the hop budget or the path cap.
    pub partial: bool,
}

fn simple_paths(net: &Network, mask: &[bool], from: usize, to: usize, hops: usize, out: &mut Vec<Vec<usize>>) -> bool {
    let mut partial = false;
    let mut on_path = vec![false; net.n_nodes()];
    let mut stack: Vec<usize> = Vec::new();
    fn walk(
        net: &Network,
        mask: &[bool],
        node: usize,
        to: usize,
        hops: usize,
        on_path: &mut [bool],
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        partial: &mut bool,
    ) {
        if node == to {
            out.push(stack.clone());
            return;
        }
        if stack.len() >= hops || out.len() >= MAX_PATHS {
            *partial = true;
            return;
        }
        on_path[node] = true;
        for &a in net.graph.out_links(node) {
            let j = net.links[a].head;
            if mask[a] && !on_path[j] {
                stack.push(a);
                walk(net, mask, j, to, hops, on_path, stack, out, partial);
                stack.pop();
            }
        }
        on_path[node] = false;
    }
    walk(net, mask, from, to, hops, &mut on_path, &mut stack, out, &mut partial);
    partial
}

/// All simple paths of OD `w` with at most `hop_budget` links, per class.
pub fn enumerate_paths(net: &Network, w: usize, hop_budget: usize) -> PathSet {
    let od = &net.od_pairs[w];
    let mut set = PathSet::default();
    if let (Some(o), Some(s)) = (od.maas_origin, od.maas_destination) {
        let mask = net.class_mask(TravelerClass::Maas);
        set.partial |= simple_paths(net, &mask, o, s, hop_budget, &mut set.maas);
    }
    let mask = net.class_mask(TravelerClass::Plain);
    set.partial |= simple_paths(net, &mask, od.origin, od.destination, hop_budget, &mut set.plain);
    set
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Fixed multipliers: the same penalized problem the splitting solver sees.
    Penalty,
    /// Multiplier loop until capacities hold; returns the duals.
    Constrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub tol: f64,
    pub max_iter: usize,
    pub max_outer: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 400_000, max_outer: 400 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSolution {
    /// Path flows per OD, aligned with the path sets.
    pub maas: Vec<Vec<f64>>,
    pub plain: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub xt: Vec<f64>,
    pub multipliers: Multipliers,
    pub residual: f64,
}

fn project_simplex(v: &mut [f64], total: f64) {
    if v.is_empty() {
        return;
    }
    if total <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, &si) in s.iter().enumerate() {
        acc += si;
        let t = (acc - total) / (i + 1) as f64;
        if si - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

struct PathProblem<'a> {
    net: &'a Network,
    paths: &'a [PathSet],
    maas_demand: Vec<f64>,
    plain_demand: Vec<f64>,
    opts: CostOptions,
}

impl PathProblem<'_> {
    fn dim(&self) -> usize {
        self.paths.iter().map(|p| p.maas.len() + p.plain.len()).sum()
    }

    fn link_flows(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.net.n_links();
        let (mut x, mut xt) = (vec![0.0; n], vec![0.0; n]);
        let mut k = 0;
        for ps in self.paths {
            for p in &ps.maas {
                p.iter().for_each(|&a| x[a] += f[k]);
                k += 1;
            }
            for p in &ps.plain {
                p.iter().for_each(|&a| xt[a] += f[k]);
                k += 1;
            }
        }
        (x, xt)
    }

    fn costs(&self, f: &[f64], mult: &Multipliers) -> Result<Vec<f64>> {
        let (x, xt) = self.link_flows(f);
        let y: Vec<f64> = x.iter().zip(&xt).map(|(a, b)| a + b).collect();
        let times = travel_time_total(self.net, &y, &self.opts)?;
        let (that, _) = augmented_time(self.net, &times, mult);
        let mut c = Vec::with_capacity(f.len());
        for ps in self.paths {
            for p in &ps.maas {
                c.push(p.iter().map(|&a| that[a]).sum());
            }
            for p in &ps.plain {
                c.push(p.iter().map(|&a| that[a] + self.net.links[a].fare + self.net.links[a].planning).sum());
            }
        }
        Ok(c)
    }

    fn project(&self, f: &mut [f64]) {
        let mut k = 0;
        for (w, ps) in self.paths.iter().enumerate() {
            let m = ps.maas.len();
            project_simplex(&mut f[k..k + m], self.maas_demand[w]);
            k += m;
            let m = ps.plain.len();
            project_simplex(&mut f[k..k + m], self.plain_demand[w]);
            k += m;
        }
    }

    /// Largest `|min(f_p, C_p − min C)|` over path groups.
    fn residual(&self, f: &[f64], c: &[f64]) -> f64 {
        let mut k = 0;
        let mut worst = 0.0f64;
        for ps in self.paths {
            for m in [ps.maas.len(), ps.plain.len()] {
                let cmin = c[k..k + m].iter().cloned().fold(f64::INFINITY, f64::min);
                for i in k..k + m {
                    worst = worst.max(f[i].min(c[i] - cmin).abs());
                }
                k += m;
            }
        }
        worst
    }

    /// Projected extragradient with step backtracking.
    fn solve(&self, f0: Vec<f64>, mult: &Multipliers, params: &OracleParams) -> Result<(Vec<f64>, f64)> {
        let mut f = f0;
        self.project(&mut f);
        let mut step = 1.0;
        let mut c = self.costs(&f, mult)?;
        for _ in 0..params.max_iter {
            let r = self.residual(&f, &c);
            if r < params.tol {
                return Ok((f, r));
            }
            loop {
                let mut g: Vec<f64> = f.iter().zip(&c).map(|(x, c)| x - step * c).collect();
                self.project(&mut g);
                let cg = self.costs(&g, mult)?;
                let dn = g.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let dc = cg.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if step * dc <= 0.9 * dn || dn == 0.0 {
                    let mut nf: Vec<f64> = f.iter().zip(&cg).map(|(x, c)| x - step * c).collect();
                    self.project(&mut nf);
                    f = nf;
                    c = self.costs(&f, mult)?;
                    if step * dc < 0.5 * dn {
                        step *= 1.2;
                    }
                    break;
                }
                step *= 0.5;
                if step < 1e-16 {
                    return Err(MaasError::State("path oracle step collapsed".into()));
                }
            }
        }
        let r = self.residual(&f, &c);
        if r < params.tol {
            Ok((f, r))
        } else {
            Err(MaasError::State(format!("path oracle did not converge (residual {r:e})")))
        }
    }
}

/// Two-class equilibrium on enumerated paths for MaaS demand `q`.
pub fn ue_oracle(
    net: &Network,
    q: &[f64],
    paths: &[PathSet],
    mult: &Multipliers,
    mode: OracleMode,
    opts: CostOptions,
    params: &OracleParams,
) -> Result<OracleSolution> {
    if paths.len() != net.n_od() || q.len() != net.n_od() {
        return Err(MaasError::Shape("one path set and one q entry per OD required".into()));
    }
    let prob = PathProblem {
        net,
        paths,
        maas_demand: q.to_vec(),
        plain_demand: net.od_pairs.iter().zip(q).map(|(w, q)| w.demand - q).collect(),
        opts,
    };
    for (w, ps) in paths.iter().enumerate() {
        if (ps.maas.is_empty() && q[w] > 0.0) || (ps.plain.is_empty() && prob.plain_demand[w] > 0.0) {
            return Err(MaasError::State(format!("OD {} has demand but no enumerated path", net.od_pairs[w].id)));
        }
    }
    let f0 = vec![0.0; prob.dim()];
    let (mut f, mut residual) = prob.solve(f0, mult, params)?;
    let mut mult = mult.clone();
    if mode == OracleMode::Constrained {
        let mut done = false;
        for _ in 0..params.max_outer {
            let (x, xt) = prob.link_flows(&f);
            let mut change = 0.0f64;
            let mut viol = 0.0f64;
            for (a, l) in net.links.iter().enumerate() {
                if l.kind == LinkKind::MtRegular {
                    let g = x[a] + xt[a] - l.capacity_or_inf();
                    let nm = (mult.mu[a] + mult.rho * g).max(0.0);
                    change = change.max((nm - mult.mu[a]).abs());
                    viol = viol.max(g.max(0.0));
                    mult.mu[a] = nm;
                }
            }
            if viol < 1e-7 && change < 1e-7 {
                done = true;
                break;
            }
            let (nf, r) = prob.solve(f, &mult, params)?;
            f = nf;
            residual = r;
        }
        if !done {
            return Err(MaasError::State("constrained oracle multipliers did not settle".into()));
        }
    }
    let (x, xt) = prob.link_flows(&f);
    let mut k = 0;
    let (mut maas, mut plain) = (Vec::new(), Vec::new());
    for ps in paths {
        maas.push(f[k..k + ps.maas.len()].to_vec());
        k += ps.maas.len();
        plain.push(f[k..k + ps.plain.len()].to_vec());
        k += ps.plain.len();
    }
    Ok(OracleSolution { maas, plain, x, xt, multipliers: mult, residual })
}

/// Central differences of `L(z*(q))`, one-sided at the demand bounds.
pub fn fd_objective_gradient(
    net: &Network,
    solver: &SolverParams,
    mult: &Multipliers,
    q: &[f64],
    u0: Option<&[f64]>,
    h: f64,
) -> Result<Vec<f64>> {
    let caps = net.demand_caps();
    let l_at = |qq: &[f64]| -> Result<f64> {
        let s = solve_vi(net, qq, u0, solver, mult)?;
        objective(net, &s.z, &solver.cost)
    };
    let base = l_at(q)?;
    let mut g = vec![0.0; q.len()];
    for w in 0..q.len() {
        let step = h * q[w].abs().max(1.0);
        let mut qq = q.to_vec();
        let (up, down) = (q[w] + step <= caps[w], q[w] - step >= 0.0);
        g[w] = match (up, down) {
            (true, true) => {
                qq[w] = q[w] + step;
                let a = l_at(&qq)?;
                qq[w] = q[w] - step;
                (a - l_at(&qq)?) / (2.0 * step)
            }
            (true, false) => {
                qq[w] = q[w] + step;
                (l_at(&qq)? - base) / step
            }
            (false, true) => {
                qq[w] = q[w] - step;
                (base - l_at(&qq)?) / step
            }
            (false, false) => 0.0,
        };
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LpOutcome {
    Optimal { ps: f64, pd: Vec<f64>, profit: f64 },
    /// A constraint no point satisfies, by index into the row list.
    Infeasible { row: String },
    /// Improving feasible direction `(Δp^d, Δp^s)`.
    Unbounded { ray: Vec<f64> },
}

/// Dense vertex enumeration of the reduced pricing LP over ODs with positive
/// MaaS demand.
pub fn lp_vertex_oracle(inputs: &PricingInputs, max_dims: usize) -> Result<LpOutcome> {
    let served: Vec<usize> = (0..inputs.ods.len()).filter(|&w| inputs.ods[w].q > 0.0).collect();
    let n = served.len();
    if n > max_dims {
        return Err(MaasError::Domain(format!("{n} served ODs exceed the oracle limit {max_dims}")));
    }
    let dim = n + 1;
    let mut rows: Vec<(Vec<f64>, f64, String)> = Vec::new();
    for (i, &w) in served.iter().enumerate() {
        let o = &inputs.ods[w];
        let mut g = vec![0.0; dim];
        g[i] = 1.0;
        rows.push((g.clone(), o.payoff_bound(), format!("payoff {}", o.id)));
        if let Some(l) = o.lambda_min {
            g[n] = -l;
            rows.push((g, o.tau_min - o.pi, format!("stability {}", o.id)));
        }
    }
    for op in &inputs.operators {
        let mut g = vec![0.0; dim];
        g[n] = -op.weighted_volume;
        rows.push((g, op.plain_revenue - op.floor, format!("floor {}", op.id)));
    }
    let mut g = vec![0.0; dim];
    g[n] = -1.0;
    rows.push((g, 0.0, "nonnegative capacity price".into()));
    let mut c = vec![0.0; dim];
    for (i, &w) in served.iter().enumerate() {
        c[i] = inputs.ods[w].q;
    }
    c[n] = -inputs.total_weighted;
    let tol = 1e-9;
    let feasible = |x: &[f64]| rows.iter().all(|(g, b, _)| dot(g, x) <= b + tol * b.abs().max(1.0));
    for (g, b, name) in &rows {
        if g.iter().all(|v| *v == 0.0) && *b < -tol {
            return Ok(LpOutcome::Infeasible { row: name.clone() });
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for subset in combinations(rows.len(), dim) {
        let a = DMatrix::from_fn(dim, dim, |r, k| rows[subset[r]].0[k]);
        let b = DVector::from_fn(dim, |r, _| rows[subset[r]].1);
        let Some(x) = a.clone().lu().solve(&b) else { continue };
        if (&a * &x - &b).amax() > 1e-9 * b.amax().max(1.0) {
            continue;
        }
        let x: Vec<f64> = x.iter().cloned().collect();
        if !feasible(&x) {
            continue;
        }
        let v = dot(&c, &x);
        if best.as_ref().is_none_or(|(bv, bx)| v > bv + 1e-12 * bv.abs().max(1.0) || (v >= bv - 1e-12 * bv.abs().max(1.0) && x[n] < bx[n])) {
            best = Some((v, x));
        }
    }
    // Extreme rays of the recession cone: n independent active rows leave a line.
    let mut directions: Vec<Vec<f64>> = Vec::new();
    if n == 0 {
        directions.push(vec![1.0]);
    } else {
        for subset in combinations(rows.len(), n) {
            let a = DMatrix::from_fn(n, dim, |r, k| rows[subset[r]].0[k]);
            // Pad to square so the full right singular basis is returned.
            let sq = a.clone().insert_row(n, 0.0);
            let svd = sq.svd(false, true);
            let vt = svd.v_t.ok_or_else(|| MaasError::State("svd failed".into()))?;
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
            if svd.singular_values[order[n - 1]] <= 1e-10 {
                continue;
            }
            directions.push(vt.row(order[n]).iter().cloned().collect());
        }
    }
    for d in directions {
        for sign in [1.0, -1.0] {
            let d: Vec<f64> = d.iter().map(|v| v * sign).collect();
            if rows.iter().all(|(g, _, _)| dot(g, &d) <= 1e-10) && dot(&c, &d) > 1e-10 {
                return Ok(LpOutcome::Unbounded { ray: d });
            }
        }
    }
    let Some((profit, x)) = best else {
        let worst = rows
            .iter()
            .find(|(g, b, _)| g.iter().all(|v| *v == 0.0) && *b < 0.0)
            .map(|r| r.2.clone())
            .unwrap_or_else(|| "no feasible vertex".into());
        return Ok(LpOutcome::Infeasible { row: worst });
    };
    let ps = x[n];
    let mut pd: Vec<f64> = inputs.ods.iter().map(|o| o.fare_bound(ps)).collect();
    for (i, &w) in served.iter().enumerate() {
        pd[w] = x[i];
    }
    Ok(LpOutcome::Optimal { ps, pd, profit })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Random reduced pricing instance with up to six ODs. About one in five has
/// an OD with `λ_min = 0`, and about one in eight a floor no capacity price
/// can meet (an operator with no weighted volume).
pub fn random_pricing_inputs(seed: u64) -> PricingInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_od = rng.gen_range(1..=6);
    let mut ods = Vec::with_capacity(n_od);
    let mut min_weighted = 0.0;
    for w in 0..n_od {
        let q = if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.5..20.0) };
        let pi = rng.gen_range(5.0..30.0);
        let lambda_min = if q == 0.0 {
            None
        } else if rng.gen_bool(0.2) {
            Some(0.0)
        } else {
            Some(rng.gen_range(0.2..8.0))
        };
        min_weighted += q * lambda_min.unwrap_or(0.0);
        ods.push(OdPricing {
            id: format!("w{w}"),
            demand: q + rng.gen_range(0.0..10.0),
            q,
            pi,
            pi_plain: pi + rng.gen_range(-3.0..6.0),
            tau_min: pi + rng.gen_range(-4.0..8.0),
            lambda_min,
            utility: pi + rng.gen_range(-1.0..12.0),
            cyclic: false,
        });
    }
    let total_weighted = min_weighted * rng.gen_range(1.0..1.6) + rng.gen_range(0.0..5.0);
    let n_op = rng.gen_range(1..=3);
    let infeasible = rng.gen_bool(0.125);
    let operators = (0..n_op)
        .map(|m| {
            let plain_revenue = rng.gen_range(0.0..50.0);
            let weighted_volume = if infeasible && m == 0 { 0.0 } else { total_weighted * rng.gen_range(0.1..0.6) };
            let floor = if infeasible && m == 0 { plain_revenue + 10.0 } else { plain_revenue + rng.gen_range(-20.0..40.0) };
            OperatorPricing { id: format!("m{m}"), floor, plain_revenue, weighted_volume }
        })
        .collect();
    PricingInputs { eta: 1.0, lambda: Vec::new(), ods, operators, total_weighted }
}

/// Relative profit gap between the breakpoint solver and the LP oracle, or
/// `None` when both report infeasibility. Disagreement on feasibility or an
/// unbounded oracle is an error.
pub fn compare_pricing(inputs: &PricingInputs) -> Result<Option<f64>> {
    let solved = solve_pricing(inputs);
    match (solved, lp_vertex_oracle(inputs, 6)?) {
        (Ok(out), LpOutcome::Optimal { profit, .. }) => {
            Ok(Some((out.profit - profit).abs() / profit.abs().max(1.0)))
        }
        (Err(MaasError::Infeasible(_)), LpOutcome::Infeasible { .. }) => Ok(None),
        (a, b) => Err(MaasError::State(format!("pricing solver {:?} disagrees with LP oracle {b:?}", a.map(|o| o.profit)))),
    }
}

/// Fixed seeds for the random toy suite.
pub const TOY_SEEDS: [u64; 50] = [
    11, 23, 37, 41, 53, 67, 71, 83, 97, 101, 113, 127, 131, 149, 151, 163, 173, 181, 191, 199, 211, 223, 233, 241,
    251, 263, 271, 283, 293, 307, 311, 331, 347, 353, 367, 373, 383, 397, 409, 419, 431, 443, 457, 461, 479, 487, 499,
    503, 521, 541,
];

fn toy_link(id: String, from: String, to: String, kind: LinkKind) -> LinkConfig {
    LinkConfig {
        id,
        from,
        to,
        kind,
        operator: None,
        time: 0.0,
        capacity: None,
        fare: 0.0,
        planning: 0.0,
        segment: None,
        corridor: None,
        transfer_time: 0.0,
    }
}

/// Random multimodal toy: two or three places, each with a hub and the four
/// traveler nodes, joined by drive links, a road-bound MoD service sharing
/// the road, and capacitated transit links; up to three OD pairs.
pub fn random_toy(seed: u64) -> RawNetworkConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_places = rng.gen_range(2..=3);
    let places: Vec<String> = (0..n_places).map(|i| format!("p{i}")).collect();
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for p in &places {
        for (copy, role) in [
            ("mo", NodeRole::MaasOrigin),
            ("md", NodeRole::MaasDestination),
            ("po", NodeRole::PlainOrigin),
            ("pd", NodeRole::PlainDestination),
            ("hub", NodeRole::Hub),
            ("mod", NodeRole::Service),
        ] {
            nodes.push(NodeConfig { id: format!("{p}/{copy}"), role, place: Some(p.clone()) });
        }
        for (a, b) in [("mo", "hub"), ("hub", "md"), ("po", "hub"), ("hub", "pd")] {
            links.push(toy_link(format!("dummy:{a}-{b}:{p}"), format!("{p}/{a}"), format!("{p}/{b}"), LinkKind::Dummy));
        }
        let mut acc = toy_link(format!("access:{p}"), format!("{p}/hub"), format!("{p}/mod"), LinkKind::ModAccess);
        acc.operator = Some("mod".into());
        acc.time = rng.gen_range(0.0..1.0);
        links.push(acc);
        let mut egr = toy_link(format!("egress:{p}"), format!("{p}/mod"), format!("{p}/hub"), LinkKind::ModEgress);
        egr.operator = Some("mod".into());
        links.push(egr);
    }
    let total_demand_hint = 60.0;
    for i in 0..n_places {
        for j in 0..n_places {
            // A directed ring keeps every OD connected.
            if i == j || (j != (i + 1) % n_places && rng.gen_bool(0.3)) {
                continue;
            }
            let (a, b) = (&places[i], &places[j]);
            let t = rng.gen_range(2.0..8.0);
            let k = rng.gen_range(10.0..40.0);
            let seg = format!("seg:{a}-{b}");
            let mut d = toy_link(format!("drive:{a}-{b}"), format!("{a}/hub"), format!("{b}/hub"), LinkKind::Drive);
            d.time = t;
            d.capacity = Some(k);
            d.fare = rng.gen_range(0.0..4.0);
            d.segment = Some(seg.clone());
            links.push(d);
            let mut m = toy_link(format!("mod:{a}-{b}"), format!("{a}/mod"), format!("{b}/mod"), LinkKind::ModRegular1);
            m.operator = Some("mod".into());
            m.time = t;
            m.capacity = Some(k);
            m.fare = rng.gen_range(1.0..6.0);
            m.segment = Some(seg);
            links.push(m);
            if rng.gen_bool(0.7) {
                let mut r = toy_link(format!("mt:{a}-{b}"), format!("{a}/hub"), format!("{b}/hub"), LinkKind::MtRegular);
                r.operator = Some("mt".into());
                r.time = t * rng.gen_range(0.8..1.6);
                r.capacity = Some(rng.gen_range(5.0..30.0));
                r.fare = rng.gen_range(0.5..3.0);
                r.planning = rng.gen_range(0.0..1.5);
                links.push(r);
            }
        }
    }
    let mut od_pairs = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..n_places {
        for j in 0..n_places {
            if i != j {
                pairs.push((i, j));
            }
        }
    }
    let n_od = rng.gen_range(1..=3.min(pairs.len()));
    for _ in 0..n_od {
        let (i, j) = pairs.remove(rng.gen_range(0..pairs.len()));
        let (a, b) = (&places[i], &places[j]);
        od_pairs.push(OdConfig {
            id: Some(format!("{a}-{b}")),
            maas_origin: Some(format!("{a}/mo")),
            maas_destination: Some(format!("{b}/md")),
            origin: format!("{a}/po"),
            destination: format!("{b}/pd"),
            demand: rng.gen_range(5.0..total_demand_hint / 2.0),
            utility: None,
        });
    }
    RawNetworkConfig {
        constants: Constants::default(),
        operators: vec![
            OperatorConfig {
                id: "mt".into(),
                kind: OperatorKind::Mt,
                fleet: 0.0,
                min_vacant: 0.0,
                kappa: 0.0,
                revenue_floor: None,
            },
            OperatorConfig {
                id: "mod".into(),
                kind: OperatorKind::ModRoad,
                fleet: rng.gen_range(800.0..1500.0),
                min_vacant: 1.0,
                kappa: rng.gen_range(1.0..5.0),
                revenue_floor: None,
            },
        ],
        nodes,
        links,
        od_pairs,
        merge_transfers: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_network;

    #[test]
    fn simplex_projection() {
        let mut v = vec![3.0, 1.0];
        project_simplex(&mut v, 2.0);
        assert_eq!(v, vec![2.0, 0.0]);
        let mut v = vec![1.0, 1.0];
        project_simplex(&mut v, 4.0);
        assert_eq!(v, vec![2.0, 2.0]);
    }

    #[test]
    fn combination_count() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(3, 0).len(), 1);
    }

    #[test]
    fn toys_build() {
        for &s in &TOY_SEEDS {
            let net = build_network(&random_toy(s)).unwrap();
            assert!(net.n_od() >= 1);
            for w in 0..net.n_od() {
                let p = enumerate_paths(&net, w, 12);
                assert!(!p.partial);
                assert!(!p.maas.is_empty() && !p.plain.is_empty());
            }
        }
    }
}
