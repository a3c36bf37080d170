//! Multi-modal network: node copies, typed links, operators, OD pairs and the
//! origin-stacked incidence structure used by the flow solvers.

mod config;
mod merge;
pub mod sioux_falls;
mod table;
mod validate;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{
    corridor_label, node_id, Constants, DemandConfig, LinkConfig, ModServiceConfig, MultimodalConfig,
    NetworkDocument, NodeConfig, OdConfig, OperatorConfig, RawNetworkConfig, RoadLinkConfig,
    TransitLinkConfig, TransitServiceConfig,
};
pub use merge::merge_transfers;
pub use table::{corridor_table, CorridorRow};
pub use validate::{validate, Diagnostics};

use crate::error::{MaasError, Result};
use crate::linalg::IncidenceSvd;
use crate::paths::{reachable_from, reaching, Digraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    MtRegular,
    MtAccess,
    MtEgress,
    ModRegular1,
    ModRegular2,
    ModAccess,
    ModEgress,
    Drive,
    Dummy,
    Transfer,
}

impl LinkKind {
    pub fn is_regular(self) -> bool {
        matches!(self, LinkKind::MtRegular | LinkKind::ModRegular1 | LinkKind::ModRegular2)
    }

    pub fn is_access(self) -> bool {
        matches!(self, LinkKind::MtAccess | LinkKind::ModAccess)
    }

    pub fn is_bpr(self) -> bool {
        matches!(self, LinkKind::ModRegular1 | LinkKind::Drive)
    }

    pub fn needs_capacity(self) -> bool {
        matches!(self, LinkKind::MtRegular | LinkKind::ModRegular1 | LinkKind::Drive)
    }

    pub fn usable_by(self, class: TravelerClass) -> bool {
        match class {
            TravelerClass::Maas => self != LinkKind::Drive,
            TravelerClass::Plain => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    #[serde(alias = "MT")]
    Mt,
    ModRoad,
    ModIndependent,
}

impl OperatorKind {
    pub fn is_mod(self) -> bool {
        !matches!(self, OperatorKind::Mt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    MaasOrigin,
    MaasDestination,
    PlainOrigin,
    PlainDestination,
    Hub,
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TravelerClass {
    Maas,
    Plain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Operator {
    pub id: String,
    pub kind: OperatorKind,
    pub fleet: f64,
    pub min_vacant: f64,
    pub kappa: f64,
    pub revenue_floor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub role: NodeRole,
    pub place: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub tail: usize,
    pub head: usize,
    pub kind: LinkKind,
    pub operator: Option<usize>,
    /// Free-flow (or constant) time `T_a`; merged origin dummies are negative.
    pub time: f64,
    pub capacity: Option<f64>,
    /// Non-MaaS fare paid to the operator (driving cost on drive links).
    pub fare: f64,
    /// Non-MaaS planning cost (folded transfer penalty).
    pub planning: f64,
    pub segment: Option<usize>,
    pub corridor: Option<String>,
    /// Transfer time folded in by the merge; `time - transfer_time` is the
    /// link's own time.
    pub transfer_time: f64,
}

impl Link {
    pub fn capacity_or_inf(&self) -> f64 {
        self.capacity.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdPair {
    pub id: String,
    pub maas_origin: Option<usize>,
    pub maas_destination: Option<usize>,
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
    pub utility: Option<f64>,
    /// False when no MaaS path exists; MaaS demand is then pinned at 0.
    pub maas_reachable: bool,
    pub maas_block: Option<usize>,
    pub plain_block: usize,
}

impl OdPair {
    pub fn maas_cap(&self) -> f64 {
        if self.maas_reachable {
            self.demand
        } else {
            0.0
        }
    }
}

/// Links, origins and incidence factorization of one traveler class.
#[derive(Debug, Clone)]
pub struct ClassLayout {
    pub class: TravelerClass,
    pub links: Vec<usize>,
    pub local: Vec<Option<usize>>,
    pub origins: Vec<usize>,
    pub offset: usize,
    pub svd: IncidenceSvd,
}

impl ClassLayout {
    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.origins.len()
    }

    pub fn len(&self) -> usize {
        self.links.len() * self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn block_range(&self, b: usize) -> Range<usize> {
        let m = self.links.len();
        self.offset + b * m..self.offset + (b + 1) * m
    }
}

/// Layout of the stacked flow vector `z = [x^r (MaaS blocks), x~^r (non-MaaS blocks)]`.
#[derive(Debug, Clone)]
pub struct FlowLayout {
    pub maas: ClassLayout,
    pub plain: ClassLayout,
    pub n_nodes: usize,
}

impl FlowLayout {
    pub fn dim(&self) -> usize {
        self.maas.len() + self.plain.len()
    }

    pub fn demand_dim(&self) -> usize {
        (self.maas.n_blocks() + self.plain.n_blocks()) * self.n_nodes
    }

    pub fn class(&self, class: TravelerClass) -> &ClassLayout {
        match class {
            TravelerClass::Maas => &self.maas,
            TravelerClass::Plain => &self.plain,
        }
    }

    /// Per-link class totals `(x_a, x~_a)` over all origin blocks.
    pub fn aggregate(&self, z: &[f64], n_links: usize) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; n_links];
        let mut xt = vec![0.0; n_links];
        for (cl, out) in [(&self.maas, &mut x), (&self.plain, &mut xt)] {
            for b in 0..cl.n_blocks() {
                let zb = &z[cl.block_range(b)];
                for (i, &a) in cl.links.iter().enumerate() {
                    out[a] += zb[i];
                }
            }
        }
        (x, xt)
    }

    /// Adds per-link values `w` to every block entry of each class.
    pub fn broadcast_add(&self, w: &[f64], out: &mut [f64]) {
        for cl in [&self.maas, &self.plain] {
            for b in 0..cl.n_blocks() {
                let r = cl.block_range(b);
                for (o, &a) in out[r].iter_mut().zip(&cl.links) {
                    *o += w[a];
                }
            }
        }
    }

    /// Sums block entries per global link, both classes together.
    pub fn collapse(&self, z: &[f64], n_links: usize) -> Vec<f64> {
        let (mut x, xt) = self.aggregate(z, n_links);
        for (a, b) in x.iter_mut().zip(xt) {
            *a += b;
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub operators: Vec<Operator>,
    pub od_pairs: Vec<OdPair>,
    pub constants: Constants,
    /// Links per shared BPR segment.
    pub segments: Vec<Vec<usize>>,
    pub layout: FlowLayout,
    pub graph: Digraph,
    node_index: HashMap<String, usize>,
    link_index: HashMap<String, usize>,
}

impl Network {
    pub fn from_document(doc: NetworkDocument) -> Result<Self> {
        build_network(&doc.into_raw()?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: NetworkDocument = serde_json::from_str(s).map_err(|e| MaasError::Config(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_od(&self) -> usize {
        self.od_pairs.len()
    }

    /// OD pairs counted once per traveler class.
    pub fn n_class_od_pairs(&self) -> usize {
        self.od_pairs.len() + self.od_pairs.iter().filter(|w| w.maas_origin.is_some()).count()
    }

    pub fn node(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn link(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn operator(&self, id: &str) -> Option<usize> {
        self.operators.iter().position(|o| o.id == id)
    }

    pub fn links_of_kind(&self, kind: LinkKind) -> impl Iterator<Item = usize> + '_ {
        self.links.iter().enumerate().filter(move |(_, l)| l.kind == kind).map(|(a, _)| a)
    }

    pub fn total_demand(&self) -> f64 {
        self.od_pairs.iter().map(|w| w.demand).sum()
    }

    pub fn demand_caps(&self) -> Vec<f64> {
        self.od_pairs.iter().map(|w| w.maas_cap()).collect()
    }

    /// Links a traveler class may use (before pruning to OD-relevant links).
    pub fn class_mask(&self, class: TravelerClass) -> Vec<bool> {
        self.links.iter().map(|l| l.kind.usable_by(class)).collect()
    }

    /// Stacked right-hand side `d = [b, b~]` for MaaS demand `q`.
    pub fn demand_vector(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.od_pairs.len() {
            return Err(MaasError::Shape(format!("q has {} entries for {} OD pairs", q.len(), self.n_od())));
        }
        let n = self.n_nodes();
        let lay = &self.layout;
        let mut d = vec![0.0; lay.demand_dim()];
        let plain_off = lay.maas.n_blocks() * n;
        for (w, &qw) in self.od_pairs.iter().zip(q) {
            let cap = w.maas_cap();
            if !(qw >= -1e-12 && qw <= cap + 1e-9 * cap.max(1.0)) {
                return Err(MaasError::Domain(format!("q[{}] = {qw} outside [0, {cap}]", w.id)));
            }
            let qw = qw.clamp(0.0, cap);
            if let (Some(b), Some(o), Some(s)) = (w.maas_block, w.maas_origin, w.maas_destination) {
                d[b * n + o] -= qw;
                d[b * n + s] += qw;
            }
            let rest = w.demand - qw;
            let base = plain_off + w.plain_block * n;
            d[base + w.origin] -= rest;
            d[base + w.destination] += rest;
        }
        Ok(d)
    }

    /// `∂d/∂q_w` as sparse `(index, value)` pairs.
    pub fn demand_derivative(&self, w: usize) -> Vec<(usize, f64)> {
        let n = self.n_nodes();
        let od = &self.od_pairs[w];
        let mut out = Vec::with_capacity(4);
        if let (Some(b), Some(o), Some(s)) = (od.maas_block, od.maas_origin, od.maas_destination) {
            if od.maas_reachable {
                out.push((b * n + o, -1.0));
                out.push((b * n + s, 1.0));
            }
        }
        if od.maas_reachable {
            let base = self.layout.maas.n_blocks() * n + od.plain_block * n;
            out.push((base + od.origin, 1.0));
            out.push((base + od.destination, -1.0));
        }
        out
    }

    pub fn link_label(&self, a: usize) -> &str {
        &self.links[a].id
    }

    /// Owner of each link for revenue purposes.
    pub fn link_operator(&self, a: usize) -> Option<usize> {
        self.links[a].operator
    }
}

/// Builds and validates a network from a raw description.
pub fn build_network(cfg: &RawNetworkConfig) -> Result<Network> {
    check_unique(cfg)?;
    let merged;
    let cfg = if cfg.merge_transfers && cfg.links.iter().any(|l| l.kind == LinkKind::Transfer) {
        merged = merge::merge_transfers(cfg)?;
        &merged
    } else {
        cfg
    };

    // Nodes without incident links are dropped.
    let mut declared: Vec<NodeConfig> = cfg.nodes.clone();
    let declared_ids: HashSet<String> = declared.iter().map(|n| n.id.clone()).collect();
    for l in &cfg.links {
        for id in [&l.from, &l.to] {
            if !declared_ids.contains(id) && !declared.iter().any(|n| &n.id == id) {
                declared.push(NodeConfig { id: id.clone(), role: NodeRole::Service, place: None });
            }
        }
    }
    let used: HashSet<&str> = cfg.links.iter().flat_map(|l| [l.from.as_str(), l.to.as_str()]).collect();
    let nodes: Vec<Node> = declared
        .into_iter()
        .filter(|n| used.contains(n.id.as_str()))
        .map(|n| Node { id: n.id, role: n.role, place: n.place })
        .collect();
    let node_index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();

    let mut operators = Vec::new();
    for o in &cfg.operators {
        if o.kind.is_mod() {
            if !(o.fleet > o.min_vacant && o.min_vacant >= 0.0) {
                return Err(MaasError::Build(format!("operator {}: need fleet > min_vacant >= 0", o.id)));
            }
            if !(o.kappa > 0.0) {
                return Err(MaasError::Build(format!("operator {}: kappa must be positive", o.id)));
            }
        }
        if o.revenue_floor.is_some_and(|b| b < 0.0) {
            return Err(MaasError::Build(format!("operator {}: negative revenue floor", o.id)));
        }
        operators.push(Operator {
            id: o.id.clone(),
            kind: o.kind,
            fleet: o.fleet,
            min_vacant: o.min_vacant,
            kappa: o.kappa,
            revenue_floor: o.revenue_floor,
        });
    }
    let op_index: HashMap<&str, usize> = operators.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect();

    let mut seg_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut links = Vec::with_capacity(cfg.links.len());
    for l in &cfg.links {
        let operator = match &l.operator {
            Some(id) => Some(
                *op_index
                    .get(id.as_str())
                    .ok_or_else(|| MaasError::Build(format!("link {} references unknown operator {id}", l.id)))?,
            ),
            None => None,
        };
        if l.kind != LinkKind::Dummy && l.time < 0.0 {
            return Err(MaasError::Build(format!("link {} has negative time", l.id)));
        }
        if !l.time.is_finite() || !l.fare.is_finite() || !l.planning.is_finite() {
            return Err(MaasError::Build(format!("link {} has non-finite attributes", l.id)));
        }
        if l.fare < 0.0 {
            return Err(MaasError::Build(format!("link {} has negative fare", l.id)));
        }
        if l.kind.needs_capacity() && !l.capacity.is_some_and(|k| k > 0.0) {
            return Err(MaasError::Build(format!("link {} needs a positive capacity", l.id)));
        }
        if matches!(l.kind, LinkKind::ModRegular1 | LinkKind::ModRegular2 | LinkKind::ModAccess)
            && !operator.is_some_and(|m| operators[m].kind.is_mod())
        {
            return Err(MaasError::Build(format!("MoD link {} needs a MoD operator", l.id)));
        }
        let segment = l.segment.as_ref().filter(|_| l.kind.is_bpr()).map(|s| {
            let next = seg_index.len();
            *seg_index.entry(s.clone()).or_insert(next)
        });
        links.push(Link {
            id: l.id.clone(),
            tail: node_index[&l.from],
            head: node_index[&l.to],
            kind: l.kind,
            operator,
            time: l.time,
            capacity: l.capacity,
            fare: l.fare,
            planning: l.planning,
            segment,
            corridor: l.corridor.clone(),
            transfer_time: l.transfer_time,
        });
    }
    // Every BPR link gets a segment, shared or its own.
    for l in links.iter_mut().filter(|l| l.kind.is_bpr() && l.segment.is_none()) {
        let next = seg_index.len();
        l.segment = Some(*seg_index.entry(format!("#{}", l.id)).or_insert(next));
    }
    let mut segments = vec![Vec::new(); seg_index.len()];
    for (a, l) in links.iter().enumerate() {
        if let Some(s) = l.segment {
            segments[s].push(a);
        }
    }
    let link_index: HashMap<String, usize> = links.iter().enumerate().map(|(a, l)| (l.id.clone(), a)).collect();

    let graph = Digraph::new(nodes.len(), links.iter().map(|l| l.tail).collect(), links.iter().map(|l| l.head).collect());
    for n in &nodes {
        if matches!(n.role, NodeRole::MaasOrigin | NodeRole::MaasDestination) {
            let i = node_index[&n.id];
            if links.iter().any(|l| l.kind == LinkKind::Drive && (l.tail == i || l.head == i)) {
                return Err(MaasError::Build(format!("MaaS node {} touches a drive link", n.id)));
            }
        }
    }

    let maas_mask: Vec<bool> = links.iter().map(|l| l.kind.usable_by(TravelerClass::Maas)).collect();
    let mut od_pairs = Vec::with_capacity(cfg.od_pairs.len());
    let mut od_ids = HashSet::new();
    for (k, w) in cfg.od_pairs.iter().enumerate() {
        let id = w.id.clone().unwrap_or_else(|| format!("od{k}"));
        if !od_ids.insert(id.clone()) {
            return Err(MaasError::Build(format!("duplicate OD id {id}")));
        }
        if !(w.demand > 0.0 && w.demand.is_finite()) {
            return Err(MaasError::Build(format!("OD {id}: demand must be positive")));
        }
        if w.utility.is_some_and(|u| !u.is_finite()) {
            return Err(MaasError::Build(format!("OD {id}: utility must be finite")));
        }
        let find = |s: &String| {
            node_index.get(s).copied().ok_or_else(|| MaasError::Build(format!("OD {id} references unknown node {s}")))
        };
        let origin = find(&w.origin)?;
        let destination = find(&w.destination)?;
        if !reachable_from(&graph, None, &[origin])[destination] {
            return Err(MaasError::Build(format!("OD {id}: no non-MaaS path")));
        }
        let maas_origin = w.maas_origin.as_ref().map(find).transpose()?;
        let maas_destination = w.maas_destination.as_ref().map(find).transpose()?;
        let maas_reachable = match (maas_origin, maas_destination) {
            (Some(o), Some(s)) => reachable_from(&graph, Some(&maas_mask), &[o])[s],
            _ => false,
        };
        od_pairs.push(OdPair {
            id,
            maas_origin,
            maas_destination,
            origin,
            destination,
            demand: w.demand,
            utility: w.utility,
            maas_reachable,
            maas_block: None,
            plain_block: 0,
        });
    }

    let layout = build_layout(&graph, &links, &mut od_pairs, nodes.len())?;
    Ok(Network {
        nodes,
        links,
        operators,
        od_pairs,
        constants: cfg.constants,
        segments,
        layout,
        graph,
        node_index,
        link_index,
    })
}

fn check_unique(cfg: &RawNetworkConfig) -> Result<()> {
    let mut seen = HashSet::new();
    for l in &cfg.links {
        if !seen.insert(l.id.as_str()) {
            return Err(MaasError::Build(format!("duplicate link id {}", l.id)));
        }
    }
    let mut seen = HashSet::new();
    for n in &cfg.nodes {
        if !seen.insert(n.id.as_str()) {
            return Err(MaasError::Build(format!("duplicate node id {}", n.id)));
        }
    }
    let known: HashSet<&str> = cfg.nodes.iter().map(|n| n.id.as_str()).collect();
    if !cfg.nodes.is_empty() {
        for l in &cfg.links {
            for id in [&l.from, &l.to] {
                if !known.contains(id.as_str()) {
                    return Err(MaasError::Build(format!("link {} references unknown node {id}", l.id)));
                }
            }
        }
    }
    let mut seen = HashSet::new();
    for o in &cfg.operators {
        if !seen.insert(o.id.as_str()) {
            return Err(MaasError::Build(format!("duplicate operator id {}", o.id)));
        }
    }
    Ok(())
}

fn build_layout(graph: &Digraph, links: &[Link], ods: &mut [OdPair], n_nodes: usize) -> Result<FlowLayout> {
    let mut offset = 0;
    let mut build = |class: TravelerClass, ods: &mut [OdPair]| -> Result<ClassLayout> {
        let mask: Vec<bool> = links.iter().map(|l| l.kind.usable_by(class)).collect();
        let mut origins: Vec<usize> = Vec::new();
        let mut dests: Vec<usize> = Vec::new();
        for w in ods.iter() {
            let (o, s) = match class {
                TravelerClass::Maas if w.maas_reachable => (w.maas_origin.unwrap(), w.maas_destination.unwrap()),
                TravelerClass::Maas => continue,
                TravelerClass::Plain => (w.origin, w.destination),
            };
            if !origins.contains(&o) {
                origins.push(o);
            }
            if !dests.contains(&s) {
                dests.push(s);
            }
        }
        let fwd = reachable_from(graph, Some(&mask), &origins);
        let bwd = reaching(graph, Some(&mask), &dests);
        let class_links: Vec<usize> =
            (0..links.len()).filter(|&a| mask[a] && fwd[links[a].tail] && bwd[links[a].head]).collect();
        let mut local = vec![None; links.len()];
        for (i, &a) in class_links.iter().enumerate() {
            local[a] = Some(i);
        }
        for w in ods.iter_mut() {
            match class {
                TravelerClass::Maas if w.maas_reachable => {
                    w.maas_block = origins.iter().position(|&o| Some(o) == w.maas_origin);
                }
                TravelerClass::Maas => {}
                TravelerClass::Plain => {
                    w.plain_block = origins.iter().position(|&o| o == w.origin).unwrap();
                }
            }
        }
        let svd = IncidenceSvd::new(
            n_nodes,
            class_links.iter().map(|&a| links[a].tail).collect(),
            class_links.iter().map(|&a| links[a].head).collect(),
        )?;
        let cl = ClassLayout { class, links: class_links, local, origins, offset, svd };
        offset += cl.len();
        Ok(cl)
    };
    let maas = build(TravelerClass::Maas, ods)?;
    let plain = build(TravelerClass::Plain, ods)?;
    Ok(FlowLayout { maas, plain, n_nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(id: &str, from: &str, to: &str, kind: LinkKind, time: f64) -> LinkConfig {
        LinkConfig {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            kind,
            operator: None,
            time,
            capacity: if kind.needs_capacity() { Some(100.0) } else { None },
            fare: 0.0,
            planning: 0.0,
            segment: None,
            corridor: None,
            transfer_time: 0.0,
        }
    }

    #[test]
    fn empty_od_list_is_valid() {
        let cfg = RawNetworkConfig {
            constants: Constants::default(),
            operators: vec![],
            nodes: vec![],
            links: vec![link("r", "a", "b", LinkKind::Drive, 6.0)],
            od_pairs: vec![],
            merge_transfers: true,
        };
        let net = build_network(&cfg).unwrap();
        assert_eq!(net.n_nodes(), 2);
        assert_eq!(net.n_od(), 0);
        assert_eq!(net.layout.dim(), 0);
    }

    #[test]
    fn duplicate_links_rejected() {
        let cfg = RawNetworkConfig {
            constants: Constants::default(),
            operators: vec![],
            nodes: vec![],
            links: vec![link("r", "a", "b", LinkKind::Drive, 6.0), link("r", "b", "a", LinkKind::Drive, 6.0)],
            od_pairs: vec![],
            merge_transfers: true,
        };
        assert!(matches!(build_network(&cfg), Err(MaasError::Build(_))));
    }

    #[test]
    fn disconnected_od_rejected() {
        let cfg = RawNetworkConfig {
            constants: Constants::default(),
            operators: vec![],
            nodes: vec![],
            links: vec![link("r", "a", "b", LinkKind::Drive, 6.0)],
            od_pairs: vec![OdConfig {
                id: None,
                maas_origin: None,
                maas_destination: None,
                origin: "b".into(),
                destination: "a".into(),
                demand: 1.0,
                utility: None,
            }],
            merge_transfers: true,
        };
        assert!(matches!(build_network(&cfg), Err(MaasError::Build(_))));
    }

    fn two_od_net() -> Network {
        // Shared origin o, destinations s1 and s2, one MT path each.
        let mut links = vec![link("m1", "o", "s1", LinkKind::MtRegular, 3.0), link("m2", "o", "s2", LinkKind::MtRegular, 4.0)];
        links.push(link("d1", "o", "s1", LinkKind::Drive, 5.0));
        let od = |s: &str, q: f64| OdConfig {
            id: Some(format!("o-{s}")),
            maas_origin: Some("o".into()),
            maas_destination: Some(s.into()),
            origin: "o".into(),
            destination: s.into(),
            demand: q,
            utility: None,
        };
        let cfg = RawNetworkConfig {
            constants: Constants::default(),
            operators: vec![],
            nodes: vec![],
            links,
            od_pairs: vec![od("s1", 10.0), od("s2", 10.0)],
            merge_transfers: true,
        };
        build_network(&cfg).unwrap()
    }

    #[test]
    fn demand_vector_sums_shared_origin() {
        let net = two_od_net();
        let d = net.demand_vector(&[2.0, 3.0]).unwrap();
        let n = net.n_nodes();
        let (o, s1, s2) = (net.node("o").unwrap(), net.node("s1").unwrap(), net.node("s2").unwrap());
        assert_eq!(d[o], -5.0);
        assert_eq!(d[s1], 2.0);
        assert_eq!(d[s2], 3.0);
        let p = &d[n..2 * n];
        assert_eq!(p[o], -15.0);
        assert_eq!(p[s1], 8.0);
        assert_eq!(p[s2], 7.0);
    }

    #[test]
    fn demand_vector_zero_maas() {
        let net = two_od_net();
        let d = net.demand_vector(&[0.0, 0.0]).unwrap();
        let n = net.n_nodes();
        assert!(d[..n].iter().all(|&v| v == 0.0));
        assert_eq!(d[n..].iter().map(|v| v.abs()).sum::<f64>(), 40.0);
    }

    #[test]
    fn demand_vector_domain() {
        let net = two_od_net();
        assert!(matches!(net.demand_vector(&[11.0, 0.0]), Err(MaasError::Domain(_))));
        assert!(matches!(net.demand_vector(&[-1.0, 0.0]), Err(MaasError::Domain(_))));
    }

    #[test]
    fn drive_links_excluded_from_maas_class() {
        let net = two_od_net();
        let d1 = net.link("d1").unwrap();
        assert!(net.layout.maas.local[d1].is_none());
        assert!(net.layout.plain.local[d1].is_some());
    }
}
