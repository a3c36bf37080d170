//! Three-operator (Davis-Yin) splitting for the two-class equilibrium, plus
//! its derivative with respect to MaaS demand.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{
    assemble_cost, augmented_time, plain_surcharge, travel_time_jacobian, travel_time_total, CostOptions, LinkTimes,
    Multipliers, TimeJacobian,
};
use crate::error::{MaasError, Result};
use crate::network::{ClassLayout, Network};
use crate::paths::shortest_paths;

/// Links whose conservation residual after projection exceeds this are a
/// configuration error (demand not routable inside the class subgraph).
pub const AFFINE_TOL: f64 = 1e-8;

const DIVERGENCE_LIMIT: f64 = 1e15;

/// Relative reduced cost below which a zero-flow link counts as active when
/// differentiating.
pub const ACTIVE_REDUCED_COST: f64 = 1e-6;

/// Relative size of the carried adjoint at which the tail stops.
pub const ADJOINT_TAIL_TOL: f64 = 1e-10;

/// Zero-flow entries with zero reduced cost under shortest-path potentials of
/// the final flow; they are treated as active at every step. The splitting
/// iterate alone cannot tell: for a block with zero demand any dual that
/// prices every link is a fixed point, so `u` on the cheapest links is often
/// negative and the derivative would miss the direction new demand takes.
fn tight_mask(net: &Network, sol: &EquilibriumSolution, mult: &Multipliers, opts: CostOptions) -> Result<Vec<bool>> {
    let op = CostOperator::new(net, mult, opts);
    let (cm, cp) = op.link_costs(&sol.z)?;
    let lay = &net.layout;
    let mut mask = vec![false; lay.dim()];
    for (cl, cost) in [(&lay.maas, &cm), (&lay.plain, &cp)] {
        let mut allowed = vec![false; net.n_links()];
        for &a in &cl.links {
            allowed[a] = true;
        }
        for (b, &o) in cl.origins.iter().enumerate() {
            let tree = shortest_paths(&net.graph, cost, Some(&allowed), o)?;
            let r = cl.block_range(b);
            for (i, &a) in cl.links.iter().enumerate() {
                let l = &net.links[a];
                if !tree.reaches(l.tail) || !tree.reaches(l.head) {
                    continue;
                }
                let reduced = cost[a] + tree.dist[l.tail] - tree.dist[l.head];
                let tol = ACTIVE_REDUCED_COST * tree.dist[l.head].abs().max(1.0);
                mask[r.start + i] = sol.u[r.start + i] <= 0.0 && reduced <= tol;
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub gamma: f64,
    pub steps: usize,
    /// Keep every `u` iterate for reverse-mode differentiation.
    pub store_iterates: bool,
    pub cost: CostOptions,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { gamma: 2.5e-4, steps: 200, store_iterates: false, cost: CostOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    /// `‖v − z‖` of the last step.
    pub residual: f64,
    /// Per-step residuals.
    pub trace: Vec<f64>,
    /// `u_0 ... u_N` when requested.
    pub iterates: Option<Vec<Vec<f64>>>,
    pub gamma: f64,
    pub demand: Vec<f64>,
}

pub fn project_nonneg(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v.max(0.0)).collect()
}

fn class_blocks(cl: &ClassLayout) -> usize {
    cl.n_blocks()
}

/// Projects `z` onto `{Λz = d}` block by block (minimum-norm correction).
pub fn project_affine(net: &Network, z: &mut [f64], d: &[f64]) {
    let lay = &net.layout;
    let n = lay.n_nodes;
    let split = lay.maas.n_blocks() * n;
    for (cl, dd) in [(&lay.maas, &d[..split]), (&lay.plain, &d[split..])] {
        cl.svd.project_blocks(&mut z[cl.range()], dd, class_blocks(cl));
    }
}

/// `(I − Λ⁺Λ) w` block by block.
pub fn null_project(net: &Network, w: &mut [f64]) {
    let lay = &net.layout;
    for cl in [&lay.maas, &lay.plain] {
        cl.svd.null_project_blocks(&mut w[cl.range()], class_blocks(cl));
    }
}

/// `Λ z − d`, stacked like `d`.
pub fn conservation_residual(net: &Network, z: &[f64], d: &[f64]) -> Vec<f64> {
    let lay = &net.layout;
    let n = lay.n_nodes;
    let mut out = vec![0.0; d.len()];
    let mut k = 0;
    for cl in [&lay.maas, &lay.plain] {
        for b in 0..cl.n_blocks() {
            cl.svd.multiply(&z[cl.block_range(b)], &mut out[k * n..(k + 1) * n]);
            k += 1;
        }
    }
    out.iter_mut().zip(d).for_each(|(o, di)| *o -= di);
    out
}

/// Evaluates `F^` and its derivative for fixed multipliers.
pub struct CostOperator<'a> {
    pub net: &'a Network,
    pub mult: &'a Multipliers,
    pub opts: CostOptions,
    surcharge: Vec<f64>,
}

/// Link Jacobian of the augmented time `t^` with respect to total flow.
pub struct AugmentedJacobian {
    pub jt: TimeJacobian,
}

impl<'a> CostOperator<'a> {
    pub fn new(net: &'a Network, mult: &'a Multipliers, opts: CostOptions) -> Self {
        Self { net, mult, opts, surcharge: plain_surcharge(net) }
    }

    pub fn times(&self, z: &[f64]) -> Result<LinkTimes> {
        let y = self.net.layout.collapse(z, self.net.n_links());
        travel_time_total(self.net, &y, &self.opts)
    }

    pub fn eval_into(&self, z: &[f64], out: &mut [f64]) -> Result<LinkTimes> {
        let times = self.times(z)?;
        let (that, _) = augmented_time(self.net, &times, self.mult);
        assemble_cost(self.net, &that, &self.surcharge, out);
        Ok(times)
    }

    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; z.len()];
        self.eval_into(z, &mut out)?;
        Ok(out)
    }

    /// Per-link generalized cost of each class: `(t^, t^ + p~)`.
    pub fn link_costs(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let times = self.times(z)?;
        let (that, _) = augmented_time(self.net, &times, self.mult);
        let plain = that.iter().zip(&self.surcharge).map(|(t, s)| t + s).collect();
        Ok((that, plain))
    }

    pub fn jacobian(&self, z: &[f64]) -> Result<AugmentedJacobian> {
        let times = self.times(z)?;
        let (_, slope) = augmented_time(self.net, &times, self.mult);
        let mut jt = travel_time_jacobian(self.net, &times, &self.opts)?;
        jt.add_diagonal(&slope);
        Ok(AugmentedJacobian { jt })
    }
}

impl AugmentedJacobian {
    /// `J_F^ v` in z-space.
    pub fn apply(&self, net: &Network, v: &[f64]) -> Vec<f64> {
        let y = net.layout.collapse(v, net.n_links());
        let w = self.jt.mul(&y);
        let mut out = vec![0.0; v.len()];
        net.layout.broadcast_add(&w, &mut out);
        out
    }

    /// `J_F^ᵀ v` in z-space.
    pub fn apply_t(&self, net: &Network, v: &[f64]) -> Vec<f64> {
        let y = net.layout.collapse(v, net.n_links());
        let w = self.jt.mul_t(&y);
        let mut out = vec![0.0; v.len()];
        net.layout.broadcast_add(&w, &mut out);
        out
    }
}

fn check_finite(net: &Network, u: &[f64]) -> Result<()> {
    if let Some(i) = u.iter().position(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT) {
        let lay = &net.layout;
        let cl = if i < lay.maas.range().end { &lay.maas } else { &lay.plain };
        let local = (i - cl.offset) % cl.n_links().max(1);
        return Err(MaasError::Divergence { link: net.link_label(cl.links[local]).to_string() });
    }
    Ok(())
}

/// One splitting step. Returns the residual `‖v − z‖`.
pub fn davis_yin_step(op: &CostOperator, u: &mut [f64], gamma: f64, d: &[f64]) -> Result<f64> {
    let z = project_nonneg(u);
    let mut a = vec![0.0; z.len()];
    op.eval_into(&z, &mut a)?;
    for i in 0..a.len() {
        a[i] = 2.0 * z[i] - u[i] - gamma * a[i];
    }
    project_affine(op.net, &mut a, d);
    let mut r2 = 0.0;
    for i in 0..a.len() {
        let diff = a[i] - z[i];
        r2 += diff * diff;
        u[i] += diff;
    }
    Ok(r2.sqrt())
}

/// Runs `steps` splitting iterations from `u0` (a feasible start if `None`).
pub fn solve_vi(
    net: &Network,
    q: &[f64],
    u0: Option<&[f64]>,
    params: &SolverParams,
    mult: &Multipliers,
) -> Result<EquilibriumSolution> {
    if params.steps == 0 {
        return Err(MaasError::Domain("at least one inner iteration is required".into()));
    }
    if !(params.gamma > 0.0) {
        return Err(MaasError::Domain(format!("step size {} must be positive", params.gamma)));
    }
    let d = net.demand_vector(q)?;
    let dim = net.layout.dim();
    let mut u = match u0 {
        Some(u0) if u0.len() != dim => {
            return Err(MaasError::Shape(format!("initial point has {} entries, expected {dim}", u0.len())))
        }
        Some(u0) => u0.to_vec(),
        None => {
            let mut z = vec![0.0; dim];
            project_affine(net, &mut z, &d);
            z
        }
    };
    {
        let mut probe = vec![0.0; dim];
        project_affine(net, &mut probe, &d);
        let r = conservation_residual(net, &probe, &d);
        let worst = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scale = d.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if worst > AFFINE_TOL * scale {
            return Err(MaasError::Config(format!("demand not routable in class subgraph (residual {worst:e})")));
        }
    }
    let op = CostOperator::new(net, mult, params.cost);
    let mut trace = Vec::with_capacity(params.steps);
    let mut iterates = params.store_iterates.then(|| Vec::with_capacity(params.steps + 1));
    for _ in 0..params.steps {
        if let Some(it) = iterates.as_mut() {
            it.push(u.clone());
        }
        let r = davis_yin_step(&op, &mut u, params.gamma, &d)?;
        check_finite(net, &u)?;
        trace.push(r);
    }
    if let Some(it) = iterates.as_mut() {
        it.push(u.clone());
    }
    Ok(EquilibriumSolution {
        z: project_nonneg(&u),
        residual: *trace.last().unwrap_or(&0.0),
        u,
        trace,
        iterates,
        gamma: params.gamma,
        demand: d,
    })
}

/// Largest `|min(flow, reduced cost)|` over both classes, using shortest-path
/// potentials from each block's origin.
pub fn complementarity_residual(net: &Network, z: &[f64], mult: &Multipliers, opts: CostOptions) -> Result<f64> {
    let op = CostOperator::new(net, mult, opts);
    let (cm, cp) = op.link_costs(z)?;
    let lay = &net.layout;
    let mut worst = 0.0f64;
    for (cl, cost) in [(&lay.maas, &cm), (&lay.plain, &cp)] {
        let mut allowed = vec![false; net.n_links()];
        for &a in &cl.links {
            allowed[a] = true;
        }
        for (b, &o) in cl.origins.iter().enumerate() {
            let tree = shortest_paths(&net.graph, cost, Some(&allowed), o)?;
            let zb = &z[cl.block_range(b)];
            for (i, &a) in cl.links.iter().enumerate() {
                let l = &net.links[a];
                if !tree.reaches(l.tail) {
                    continue;
                }
                let reduced = cost[a] + tree.dist[l.tail] - tree.dist[l.head];
                worst = worst.max(zb[i].min(reduced).abs());
            }
        }
    }
    Ok(worst)
}

/// Sampled Lipschitz estimate of `F^` in z-space over flows up to `scale`
/// per block entry (spectral norm via power iteration at random points).
/// Power-iteration estimate of `‖JF^‖` near the minimum-norm feasible flow for
/// demand `q`. Samples are small random perturbations pushed back with
/// alternating projections; uniform samples over a box tend to overload the
/// fleet and land in the guard region, which inflates the estimate.
pub fn lipschitz_estimate(net: &Network, mult: &Multipliers, opts: CostOptions, q: &[f64], samples: usize, seed: u64) -> Result<f64> {
    let dim = net.layout.dim();
    let op = CostOperator::new(net, mult, opts);
    let d = net.demand_vector(q)?;
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples.max(1) {
        let mut z: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 0.1 * scale).collect();
        for _ in 0..20 {
            project_affine(net, &mut z, &d);
            z = project_nonneg(&z);
        }
        let j = op.jacobian(&z)?;
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut norm = 0.0;
        for _ in 0..30 {
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nv == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            // Power iteration on JᵀJ.
            let w = j.apply(net, &v);
            norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = j.apply_t(net, &w);
        }
        best = best.max(norm);
    }
    Ok(best)
}

/// Warns when `γ` exceeds the convergence bound `2/(L + ρ)`.
pub fn check_step_size(gamma: f64, lipschitz: f64, rho: f64) -> bool {
    let bound = 2.0 / (lipschitz + rho);
    let ok = gamma < bound;
    if !ok {
        warn!("step size {gamma:e} exceeds 2/(L+rho) = {bound:e} (L = {lipschitz:e}, rho = {rho})");
    }
    ok
}

/// `∂z*/∂q` by forward-mode chaining through every stored step; one column per
/// OD. Dense, intended for small networks.
pub fn unrolled_jacobian(net: &Network, sol: &EquilibriumSolution, mult: &Multipliers, opts: CostOptions) -> Result<Vec<Vec<f64>>> {
    let its = sol
        .iterates
        .as_ref()
        .ok_or_else(|| MaasError::State("unrolled Jacobian needs stored iterates".into()))?;
    let op = CostOperator::new(net, mult, opts);
    let n_od = net.n_od();
    let mut cols = Vec::with_capacity(n_od);
    let jacs: Vec<AugmentedJacobian> = its[..its.len() - 1]
        .iter()
        .map(|u| op.jacobian(&project_nonneg(u)))
        .collect::<Result<_>>()?;
    for w in 0..n_od {
        let dd = net.demand_derivative(w);
        let mut dd_full = vec![0.0; sol.demand.len()];
        for (i, v) in dd {
            dd_full[i] = v;
        }
        let shift = pinv_demand(net, &dd_full);
        let mut du = vec![0.0; net.layout.dim()];
        for (n, u) in its[..its.len() - 1].iter().enumerate() {
            let dz: Vec<f64> = du.iter().zip(u).map(|(d, u)| if *u > 0.0 { *d } else { 0.0 }).collect();
            let jdz = jacs[n].apply(net, &dz);
            let mut da: Vec<f64> = (0..dz.len()).map(|i| 2.0 * dz[i] - du[i] - sol.gamma * jdz[i]).collect();
            null_project(net, &mut da);
            for i in 0..du.len() {
                du[i] += da[i] + shift[i] - dz[i];
            }
        }
        let last = &its[its.len() - 1];
        cols.push(du.iter().zip(last).map(|(d, u)| if *u > 0.0 { *d } else { 0.0 }).collect());
    }
    Ok(cols)
}

/// `Λ⁺ r` for a stacked node vector.
fn pinv_demand(net: &Network, r: &[f64]) -> Vec<f64> {
    let lay = &net.layout;
    let n = lay.n_nodes;
    let split = lay.maas.n_blocks() * n;
    let mut out = lay.maas.svd.pinv_blocks(&r[..split], lay.maas.n_blocks());
    out.extend(lay.plain.svd.pinv_blocks(&r[split..], lay.plain.n_blocks()));
    out
}

/// `(Λ⁺)ᵀ v` for a stacked flow vector.
fn pinv_transpose(net: &Network, v: &[f64]) -> Vec<f64> {
    let lay = &net.layout;
    let mut out = lay.maas.svd.pinv_transpose_blocks(&v[lay.maas.range()], lay.maas.n_blocks());
    out.extend(lay.plain.svd.pinv_transpose_blocks(&v[lay.plain.range()], lay.plain.n_blocks()));
    out
}

/// Reverse-mode product `(∂z*/∂q)ᵀ g` of the stored steps, exactly as run.
pub fn adjoint_gradient(net: &Network, sol: &EquilibriumSolution, mult: &Multipliers, opts: CostOptions, g: &[f64]) -> Result<Vec<f64>> {
    adjoint_impl(net, sol, mult, opts, g, 0, None)
}

/// Derivative of the equilibrium rather than of the stored steps: degenerate
/// entries (see `tight_mask`) count as active, and up to `tail` further
/// reverse steps run at the last iterate, as if the run had sat there before
/// the stored steps. A warm-started run of a few steps otherwise drops the
/// sensitivity carried by its starting point. The tail stops once the
/// carried adjoint falls below `ADJOINT_TAIL_TOL` relative to `g`.
pub fn adjoint_gradient_tail(
    net: &Network,
    sol: &EquilibriumSolution,
    mult: &Multipliers,
    opts: CostOptions,
    g: &[f64],
    tail: usize,
) -> Result<Vec<f64>> {
    let tight = tight_mask(net, sol, mult, opts)?;
    adjoint_impl(net, sol, mult, opts, g, tail, Some(&tight))
}

fn adjoint_impl(
    net: &Network,
    sol: &EquilibriumSolution,
    mult: &Multipliers,
    opts: CostOptions,
    g: &[f64],
    tail: usize,
    tight: Option<&[bool]>,
) -> Result<Vec<f64>> {
    let its = sol
        .iterates
        .as_ref()
        .ok_or_else(|| MaasError::State("adjoint needs stored iterates".into()))?;
    let op = CostOperator::new(net, mult, opts);
    let last = &its[its.len() - 1];
    let on = |u: &[f64], i: usize| u[i] > 0.0 || tight.is_some_and(|t| t[i]);
    let mut ubar: Vec<f64> = (0..g.len()).map(|i| if on(last, i) { g[i] } else { 0.0 }).collect();
    let mut dbar = vec![0.0; sol.demand.len()];
    let step = |u: &[f64], jac: &AugmentedJacobian, ubar: &mut Vec<f64>, dbar: &mut Vec<f64>| {
        let vbar = ubar.clone();
        let mut abar = vbar.clone();
        null_project(net, &mut abar);
        for (d, x) in dbar.iter_mut().zip(pinv_transpose(net, &vbar)) {
            *d += x;
        }
        let jt_abar = jac.apply_t(net, &abar);
        for i in 0..ubar.len() {
            let zbar = -vbar[i] + 2.0 * abar[i] - sol.gamma * jt_abar[i];
            ubar[i] += -abar[i] + if on(u, i) { zbar } else { 0.0 };
        }
    };
    for u in its[..its.len() - 1].iter().rev() {
        let jac = op.jacobian(&project_nonneg(u))?;
        step(u, &jac, &mut ubar, &mut dbar);
    }
    if tail > 0 {
        let jac = op.jacobian(&sol.z)?;
        let scale = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for _ in 0..tail {
            if ubar.iter().map(|x| x * x).sum::<f64>().sqrt() <= ADJOINT_TAIL_TOL * scale {
                break;
            }
            step(last, &jac, &mut ubar, &mut dbar);
        }
    }
    Ok((0..net.n_od())
        .map(|w| net.demand_derivative(w).into_iter().map(|(i, v)| v * dbar[i]).sum())
        .collect())
}

/// `∂z*/∂q` by finite differences, re-solving from the same start. Central
/// differences with step `h·max(1, |q_w|)`, one-sided at the bounds.
pub fn fd_jacobian(net: &Network, q: &[f64], u0: Option<&[f64]>, params: &SolverParams, mult: &Multipliers, h: f64) -> Result<Vec<Vec<f64>>> {
    let caps = net.demand_caps();
    let p = SolverParams { store_iterates: false, ..*params };
    let mut cols = Vec::with_capacity(q.len());
    let mut base: Option<Vec<f64>> = None;
    for w in 0..q.len() {
        let step = h * q[w].abs().max(1.0);
        let up = q[w] + step <= caps[w];
        let down = q[w] - step >= 0.0;
        let solve_at = |v: f64| -> Result<Vec<f64>> {
            let mut qq = q.to_vec();
            qq[w] = v;
            Ok(solve_vi(net, &qq, u0, &p, mult)?.z)
        };
        let col = match (up, down) {
            (true, true) => {
                let (a, b) = (solve_at(q[w] + step)?, solve_at(q[w] - step)?);
                a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * step)).collect()
            }
            (false, false) => vec![0.0; net.layout.dim()],
            (up, _) => {
                if base.is_none() {
                    base = Some(solve_vi(net, q, u0, &p, mult)?.z);
                }
                let z0 = base.as_ref().unwrap();
                let (v, sign) = if up { (q[w] + step, 1.0) } else { (q[w] - step, -1.0) };
                let z1 = solve_at(v)?;
                z1.iter().zip(z0).map(|(a, b)| sign * (a - b) / step).collect()
            }
        };
        cols.push(col);
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, Constants, LinkConfig, LinkKind, NodeConfig, NodeRole, OdConfig, RawNetworkConfig};

    fn link(id: &str, from: &str, to: &str, kind: LinkKind, time: f64, cap: Option<f64>) -> LinkConfig {
        LinkConfig {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            kind,
            operator: None,
            time,
            capacity: cap,
            fare: 0.0,
            planning: 0.0,
            segment: None,
            corridor: None,
            transfer_time: 0.0,
        }
    }

    fn node(id: &str, role: NodeRole) -> NodeConfig {
        NodeConfig { id: id.into(), role, place: None }
    }

    /// Plain-only network: origin to destination over a drive link and a
    /// parallel constant dummy path.
    fn two_route(demand: f64) -> Network {
        let mut cfg = two_route_config(demand);
        if demand == 0.0 {
            cfg.od_pairs.clear();
        }
        build_network(&cfg).unwrap()
    }

    fn two_route_config(demand: f64) -> RawNetworkConfig {
        RawNetworkConfig {
            constants: Constants::default(),
            operators: vec![],
            nodes: vec![node("o", NodeRole::PlainOrigin), node("s", NodeRole::PlainDestination), node("m", NodeRole::Hub)],
            links: vec![
                link("drive", "o", "s", LinkKind::Drive, 1.0, Some(10.0)),
                link("d1", "o", "m", LinkKind::Dummy, 1.0, None),
                link("d2", "m", "s", LinkKind::Dummy, 1.0, None),
            ],
            od_pairs: vec![OdConfig {
                id: Some("w".into()),
                maas_origin: None,
                maas_destination: None,
                origin: "o".into(),
                destination: "s".into(),
                demand,
                utility: None,
            }],
            merge_transfers: true,
        }
    }

    #[test]
    fn nonneg_projection() {
        assert_eq!(project_nonneg(&[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_eq!(project_nonneg(&[0.0]), vec![0.0]);
    }

    #[test]
    fn affine_projection_is_feasible() {
        let net = two_route(5.0);
        let d = net.demand_vector(&[0.0]).unwrap();
        let mut z = vec![3.0, -7.0, 1.5];
        project_affine(&net, &mut z, &d);
        let r = conservation_residual(&net, &z, &d);
        assert!(r.iter().all(|x| x.abs() < 1e-10));
        let before = z.clone();
        project_affine(&net, &mut z, &d);
        assert!(z.iter().zip(&before).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn zero_demand_gives_zero_flow() {
        let net = two_route(0.0);
        let mult = Multipliers::new(net.n_links(), 1.0);
        let sol = solve_vi(&net, &[], None, &SolverParams { gamma: 0.1, steps: 50, ..Default::default() }, &mult).unwrap();
        assert!(sol.z.iter().all(|x| x.abs() < 1e-12));
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn two_routes_equalize() {
        // Drive time 1 + 0.15 (x/10)^4 equals 2 on the dummy path at x = 10 / 0.15^(1/4).
        let net = two_route(20.0);
        let mult = Multipliers::new(net.n_links(), 1.0);
        let params = SolverParams { gamma: 0.05, steps: 4000, ..Default::default() };
        let sol = solve_vi(&net, &[0.0], None, &params, &mult).unwrap();
        let x = sol.z[net.layout.plain.local[net.link("drive").unwrap()].unwrap() + net.layout.plain.offset];
        let expect = 10.0 / 0.15f64.powf(0.25);
        assert!((x - expect).abs() < 1e-5, "{x} vs {expect}");
        assert!(complementarity_residual(&net, &sol.z, &mult, CostOptions::default()).unwrap() < 1e-5);
        let tail = &sol.trace[10..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14));
    }

    #[test]
    fn divergence_is_reported() {
        let net = two_route(20.0);
        let mult = Multipliers::new(net.n_links(), 1.0);
        let params = SolverParams { gamma: 1e6, steps: 200, ..Default::default() };
        assert!(matches!(solve_vi(&net, &[0.0], None, &params, &mult), Err(MaasError::Divergence { .. })));
    }

    #[test]
    fn unrolled_needs_iterates() {
        let net = two_route(1.0);
        let mult = Multipliers::new(net.n_links(), 1.0);
        let sol = solve_vi(&net, &[0.0], None, &SolverParams { gamma: 0.1, steps: 5, ..Default::default() }, &mult).unwrap();
        assert!(matches!(unrolled_jacobian(&net, &sol, &mult, CostOptions::default()), Err(MaasError::State(_))));
    }
}
