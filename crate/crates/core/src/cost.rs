//! Link travel times, their flow Jacobian and the augmented cost.

use serde::{Deserialize, Serialize};

use crate::error::{MaasError, Result};
use crate::network::{LinkKind, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostOptions {
    /// Extrapolate the waiting time linearly below a tenth of the minimum
    /// vacant time instead of failing.
    pub guard: bool,
}

impl Default for CostOptions {
    fn default() -> Self {
        Self { guard: true }
    }
}

/// Aggregate class flows per link.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub x: Vec<f64>,
    pub xt: Vec<f64>,
}

impl FlowState {
    pub fn from_z(net: &Network, z: &[f64]) -> Self {
        let (x, xt) = net.layout.aggregate(z, net.n_links());
        Self { x, xt }
    }

    pub fn zeros(n_links: usize) -> Self {
        Self { x: vec![0.0; n_links], xt: vec![0.0; n_links] }
    }

    pub fn total(&self) -> Vec<f64> {
        self.x.iter().zip(&self.xt).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// One entry per link; nonzero only on MT regular links.
    pub mu: Vec<f64>,
    pub rho: f64,
}

impl Multipliers {
    pub fn new(n_links: usize, rho: f64) -> Self {
        Self { mu: vec![0.0; n_links], rho }
    }
}

#[derive(Debug, Clone)]
pub struct LinkTimes {
    pub t: Vec<f64>,
    pub total: Vec<f64>,
    /// Per operator, zero for MT operators.
    pub occupied: Vec<f64>,
    pub vacant: Vec<f64>,
    pub access_demand: Vec<f64>,
    pub guarded: Vec<bool>,
}

fn vacancy_floor(fleet: f64, min_vacant: f64) -> f64 {
    if min_vacant > 0.0 {
        min_vacant / 10.0
    } else {
        1e-9 * fleet
    }
}

/// Inverse vacancy `g(V)` and its derivative, with optional linear extension.
fn inverse_vacancy(v: f64, floor: f64, guard: bool) -> (f64, f64, bool) {
    if guard && v < floor {
        ((2.0 * floor - v) / (floor * floor), -1.0 / (floor * floor), true)
    } else {
        (1.0 / v, -1.0 / (v * v), false)
    }
}

fn bpr(net: &Network, a: usize, volume: f64) -> (f64, f64) {
    let l = &net.links[a];
    let c = net.constants;
    let k = l.capacity_or_inf();
    let r = volume.max(0.0) / k;
    let t = l.time * (1.0 + c.bpr_alpha * r.powf(c.bpr_power));
    let dt = l.time * c.bpr_alpha * c.bpr_power * r.powf(c.bpr_power - 1.0) / k;
    (t, dt)
}

fn segment_volumes(net: &Network, total: &[f64]) -> Vec<f64> {
    net.segments.iter().map(|s| s.iter().map(|&a| total[a]).sum()).collect()
}

pub fn travel_time(net: &Network, flow: &FlowState, opts: &CostOptions) -> Result<LinkTimes> {
    let total = flow.total();
    travel_time_total(net, &total, opts)
}

/// Times as a function of total link flow `y = x + x~`.
pub fn travel_time_total(net: &Network, total: &[f64], opts: &CostOptions) -> Result<LinkTimes> {
    let seg = segment_volumes(net, total);
    let mut t: Vec<f64> = net.links.iter().map(|l| l.time).collect();
    for (a, l) in net.links.iter().enumerate() {
        if let Some(s) = l.segment {
            t[a] = bpr(net, a, seg[s]).0;
        }
    }
    let n_ops = net.operators.len();
    let mut occupied = vec![0.0; n_ops];
    let mut access_demand = vec![0.0; n_ops];
    for (a, l) in net.links.iter().enumerate() {
        let Some(m) = l.operator else { continue };
        if !net.operators[m].kind.is_mod() {
            continue;
        }
        if matches!(l.kind, LinkKind::ModRegular1 | LinkKind::ModRegular2) {
            occupied[m] += t[a] * total[a];
        } else if l.kind == LinkKind::ModAccess {
            access_demand[m] += total[a];
        }
    }
    let mut vacant = vec![0.0; n_ops];
    let mut guarded = vec![false; n_ops];
    let mut wait = vec![0.0; n_ops];
    for (m, o) in net.operators.iter().enumerate() {
        if !o.kind.is_mod() {
            continue;
        }
        vacant[m] = o.fleet - occupied[m];
        if access_demand[m] <= 0.0 {
            continue;
        }
        if !opts.guard && vacant[m] <= 0.0 {
            return Err(MaasError::SingularService { operator: o.id.clone(), vacant: vacant[m] });
        }
        let (g, _, gd) = inverse_vacancy(vacant[m], vacancy_floor(o.fleet, o.min_vacant), opts.guard);
        guarded[m] = gd;
        wait[m] = o.kappa * access_demand[m] * g;
    }
    for (a, l) in net.links.iter().enumerate() {
        if l.kind == LinkKind::ModAccess {
            if let Some(m) = l.operator {
                t[a] = l.time + wait[m];
            }
        }
    }
    Ok(LinkTimes { t, total: total.to_vec(), occupied, vacant, access_demand, guarded })
}

/// Sparse `∂t/∂y` in row-compressed form.
#[derive(Debug, Clone, Default)]
pub struct TimeJacobian {
    pub n: usize,
    pub row_start: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl TimeJacobian {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for r in rows {
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_start.push(cols.len());
        }
        Self { n, row_start, cols, vals }
    }

    pub fn row(&self, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_start[a]..self.row_start[a + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.row(a).filter(|(c, _)| *c == b).map(|(_, v)| v).sum()
    }

    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|a| self.row(a).map(|(c, x)| x * v[c]).sum()).collect()
    }

    pub fn mul_t(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for a in 0..self.n {
            if v[a] != 0.0 {
                for (c, x) in self.row(a) {
                    out[c] += x * v[a];
                }
            }
        }
        out
    }

    /// Adds `d_a` to the diagonal.
    pub fn add_diagonal(&mut self, d: &[f64]) {
        let mut rows: Vec<Vec<(usize, f64)>> = (0..self.n).map(|a| self.row(a).collect()).collect();
        for (a, &v) in d.iter().enumerate() {
            if v != 0.0 {
                match rows[a].iter_mut().find(|(c, _)| *c == a) {
                    Some(e) => e.1 += v,
                    None => rows[a].push((a, v)),
                }
            }
        }
        *self = Self::from_rows(rows);
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (a, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(a) {
                row[c] += v;
            }
        }
        d
    }
}

/// Exact `∂t_a/∂y_b`. Times depend on class flows only through their sum, so
/// the same matrix serves both `∂/∂x` and `∂/∂x~`.
pub fn travel_time_jacobian(net: &Network, times: &LinkTimes, opts: &CostOptions) -> Result<TimeJacobian> {
    let n = net.n_links();
    let total = &times.total;
    let seg = segment_volumes(net, total);
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (a, l) in net.links.iter().enumerate() {
        if let Some(s) = l.segment {
            let dt = bpr(net, a, seg[s]).1;
            // dt_a/dy_b is the same for every b in the segment.
            rows[a] = net.segments[s].iter().map(|&b| (b, dt)).collect();
        }
    }
    for (m, o) in net.operators.iter().enumerate() {
        if !o.kind.is_mod() || times.access_demand[m] <= 0.0 {
            continue;
        }
        let v = times.vacant[m];
        if !opts.guard && v <= 0.0 {
            return Err(MaasError::SingularService { operator: o.id.clone(), vacant: v });
        }
        let (g, dg, _) = inverse_vacancy(v, vacancy_floor(o.fleet, o.min_vacant), opts.guard);
        let d = times.access_demand[m];
        // dO/dy_b = t_b 1[b regular of m] + sum_{c regular of m} y_c dt_c/dy_b
        let mut d_occ: Vec<(usize, f64)> = Vec::new();
        let add = |b: usize, v: f64, acc: &mut Vec<(usize, f64)>| match acc.iter_mut().find(|(c, _)| *c == b) {
            Some(e) => e.1 += v,
            None => acc.push((b, v)),
        };
        for (c, l) in net.links.iter().enumerate() {
            if l.operator != Some(m) || !matches!(l.kind, LinkKind::ModRegular1 | LinkKind::ModRegular2) {
                continue;
            }
            add(c, times.t[c], &mut d_occ);
            if l.segment.is_some() {
                for (b, dt) in rows[c].clone() {
                    add(b, total[c] * dt, &mut d_occ);
                }
            }
        }
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (b, l) in net.links.iter().enumerate() {
            if l.operator == Some(m) && l.kind == LinkKind::ModAccess {
                add(b, o.kappa * g, &mut row);
            }
        }
        for (b, dob) in d_occ {
            add(b, -o.kappa * d * dg * dob, &mut row);
        }
        for (a, l) in net.links.iter().enumerate() {
            if l.operator == Some(m) && l.kind == LinkKind::ModAccess {
                rows[a] = row.clone();
            }
        }
    }
    Ok(TimeJacobian::from_rows(rows))
}

/// `t^_a = t_a + [μ_a + ρ(y_a − K_a)]_+` on MT regular links, with the slope
/// of the bracket (`ρ` where it is strictly positive, else 0).
pub fn augmented_time(net: &Network, times: &LinkTimes, mult: &Multipliers) -> (Vec<f64>, Vec<f64>) {
    let mut t = times.t.clone();
    let mut slope = vec![0.0; t.len()];
    for (a, l) in net.links.iter().enumerate() {
        if l.kind != LinkKind::MtRegular {
            continue;
        }
        let br = mult.mu[a] + mult.rho * (times.total[a] - l.capacity_or_inf());
        if br > 0.0 {
            t[a] += br;
            slope[a] = mult.rho;
        }
    }
    (t, slope)
}

/// Per-link non-MaaS surcharge: fare plus planning cost.
pub fn plain_surcharge(net: &Network) -> Vec<f64> {
    net.links.iter().map(|l| l.fare + l.planning).collect()
}

/// Fills `F^(z)`: MaaS blocks get `t^`, non-MaaS blocks `t^ + p~`.
pub fn assemble_cost(net: &Network, that: &[f64], surcharge: &[f64], out: &mut [f64]) {
    let lay = &net.layout;
    for b in 0..lay.maas.n_blocks() {
        let r = lay.maas.block_range(b);
        for (o, &a) in out[r].iter_mut().zip(&lay.maas.links) {
            *o = that[a];
        }
    }
    for b in 0..lay.plain.n_blocks() {
        let r = lay.plain.block_range(b);
        for (o, &a) in out[r].iter_mut().zip(&lay.plain.links) {
            *o = that[a] + surcharge[a];
        }
    }
}

/// Total system travel time `Σ t_a (x_a + x~_a)`.
pub fn objective(times: &LinkTimes) -> f64 {
    times.t.iter().zip(&times.total).map(|(t, y)| t * y).sum()
}
