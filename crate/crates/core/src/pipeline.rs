//! Batch pipeline behind the `maas` binary: run configs, on-disk state and
//! the artifacts each command writes.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bilevel::{solve_assignment, solve_base, write_log_csv, AlgorithmParams, AssignmentResult, BaseScenario};
use crate::cost::{CostOptions, Multipliers};
use crate::equilibrium::{check_step_size, complementarity_residual, lipschitz_estimate, solve_vi, SolverParams};
use crate::error::{MaasError, Result};
use crate::network::{build_network, validate, Network, NetworkDocument};
use crate::pricing::{
    check_stability, compute_payoffs, pricing_inputs, scenario_sweep, solve_pricing, write_pricing_csv,
    write_sweep_csv, PayoffReport, PricingOutcome, SweepObjective, SweepResult,
};
use crate::report::{compute_metrics, write_metrics_csv, write_voc_csv, ScenarioReport};
use crate::verification::{
    compare_pricing, enumerate_paths, random_pricing_inputs, random_toy, ue_oracle, OracleMode, OracleParams, TOY_SEEDS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_OTHER: i32 = 1;

/// Process exit code for an error.
pub fn exit_code(e: &MaasError) -> i32 {
    match e {
        MaasError::Infeasible(_) => EXIT_INFEASIBLE,
        MaasError::Divergence { .. } | MaasError::SingularService { .. } => EXIT_NOT_CONVERGED,
        MaasError::Build(_)
        | MaasError::Config(_)
        | MaasError::Domain(_)
        | MaasError::Shape(_)
        | MaasError::State(_)
        | MaasError::Json(_) => EXIT_CONFIG,
        _ => EXIT_OTHER,
    }
}

fn one() -> f64 {
    1.0
}

fn default_grid() -> Vec<f64> {
    (0..=12).map(|i| 0.6 + 0.05 * i as f64).collect()
}

fn default_hops() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub network: NetworkDocument,
    #[serde(default)]
    pub algorithm: AlgorithmParams,
    /// Replace `algorithm.gamma` by `1/(L + rho_max)` from a sampled
    /// Lipschitz estimate.
    #[serde(default)]
    pub auto_step: bool,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default = "default_grid")]
    pub eta_grid: Vec<f64>,
    #[serde(default = "default_objective")]
    pub objective: SweepObjective,
    /// Operation cost per trip added to the social cost.
    #[serde(default)]
    pub operation_cost: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hops")]
    pub hop_budget: usize,
}

fn default_objective() -> SweepObjective {
    SweepObjective::Platform
}

impl RunConfig {
    pub fn new(network: NetworkDocument) -> Self {
        Self {
            network,
            algorithm: AlgorithmParams::default(),
            auto_step: false,
            eta: 1.0,
            eta_grid: default_grid(),
            objective: SweepObjective::Platform,
            operation_cost: 0.0,
            seed: 0,
            hop_budget: default_hops(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MaasError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| MaasError::Config(format!("{}: {e}", path.display())))
    }

    pub fn build(&self) -> Result<Network> {
        build_network(&self.network.clone().into_raw()?)
    }

    /// Algorithm parameters with the step size resolved. The sampled
    /// Lipschitz estimate is always logged and checked against `γ`.
    pub fn params(&self, net: &Network) -> Result<AlgorithmParams> {
        let mut p = self.algorithm;
        let q: Vec<f64> = net.demand_caps().iter().map(|c| 0.5 * c).collect();
        let mult = Multipliers::new(net.n_links(), p.rho0);
        let l = lipschitz_estimate(net, &mult, p.cost, &q, 8, self.seed)?;
        if self.auto_step {
            p.gamma = 1.0 / (l + p.rho_max);
        }
        info!("sampled Lipschitz estimate {l:e}, step size {:e}", p.gamma);
        check_step_size(p.gamma, l, p.rho_max);
        Ok(p)
    }
}

/// Reads and writes the files of one output directory.
pub struct Workspace {
    pub dir: PathBuf,
}

pub const BASE_FILE: &str = "base.json";
pub const ASSIGNMENT_FILE: &str = "assignment.json";
pub const PRICING_FILE: &str = "pricing.json";

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<()> {
        let f = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(f, v)?;
        Ok(())
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str, needed_by: &str) -> Result<T> {
        let p = self.path(name);
        let text = fs::read_to_string(&p)
            .map_err(|_| MaasError::State(format!("{needed_by} needs {} (run the earlier command first)", p.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn csv(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PricingState {
    pub outcome: PricingOutcome,
    pub payoffs: PayoffReport,
}

/// Outcome of a pipeline step: whether every solve converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Status {
    pub converged: bool,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        if self.converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

pub fn run_base(cfg: &RunConfig, net: &Network, ws: &Workspace) -> Result<(BaseScenario, Status)> {
    let diag = validate(net);
    if !diag.unserved.is_empty() {
        log::warn!("{} OD pairs have no MaaS path", diag.unserved.len());
    }
    for f in diag.fleet.iter().filter(|f| !f.sufficient) {
        log::warn!("fleet of {} may be too small for full MaaS demand", f.operator);
    }
    let params = cfg.params(net)?;
    let base = solve_base(net, &params)?;
    ws.write_json(BASE_FILE, &base)?;
    write_log_csv(&base.result.log, ws.csv("base_trace.csv")?)?;
    let status = Status { converged: base.result.converged };
    Ok((base, status))
}

pub fn run_assign(cfg: &RunConfig, net: &Network, ws: &Workspace) -> Result<(AssignmentResult, Status)> {
    let base: BaseScenario = ws.read_json(BASE_FILE, "assign")?;
    check_shape(net, &base.result)?;
    let params = cfg.params(net)?;
    let res = solve_assignment(net, &params, Some(&base))?;
    ws.write_json(ASSIGNMENT_FILE, &res)?;
    write_log_csv(&res.log, ws.csv("assign_trace.csv")?)?;
    let status = Status { converged: res.converged };
    Ok((res, status))
}

fn check_shape(net: &Network, res: &AssignmentResult) -> Result<()> {
    if res.x.len() != net.n_links() || res.q.len() != net.n_od() {
        return Err(MaasError::State("stored state was produced for a different network".into()));
    }
    Ok(())
}

fn load_pair(net: &Network, ws: &Workspace, cmd: &str) -> Result<(BaseScenario, AssignmentResult)> {
    let base: BaseScenario = ws.read_json(BASE_FILE, cmd)?;
    let assign: AssignmentResult = ws.read_json(ASSIGNMENT_FILE, cmd)?;
    check_shape(net, &base.result)?;
    check_shape(net, &assign)?;
    Ok((base, assign))
}

pub fn run_price(cfg: &RunConfig, net: &Network, ws: &Workspace) -> Result<PricingState> {
    let (base, assign) = load_pair(net, ws, "price")?;
    let inputs = pricing_inputs(net, &assign, &base, cfg.eta)?;
    let outcome = solve_pricing(&inputs)?;
    let payoffs = compute_payoffs(&inputs, &outcome.scheme);
    write_pricing_csv(&payoffs, ws.csv("pricing.csv")?)?;
    let state = PricingState { outcome, payoffs };
    ws.write_json(PRICING_FILE, &state)?;
    Ok(state)
}

pub fn run_sweep(cfg: &RunConfig, net: &Network, ws: &Workspace) -> Result<SweepResult> {
    let (base, assign) = load_pair(net, ws, "sweep")?;
    let res = scenario_sweep(net, &assign, &base, &cfg.eta_grid, cfg.objective)?;
    write_sweep_csv(&res.points, ws.csv("sweep.csv")?)?;
    ws.write_json("sweep.json", &res)?;
    if res.best.is_none() {
        let causes: Vec<String> = res
            .points
            .iter()
            .map(|p| format!("eta {}: {}", p.eta, p.cause.clone().unwrap_or_else(|| "negative profit".into())))
            .collect();
        return Err(MaasError::Infeasible(format!("no admissible eta: {}", causes.join("; "))));
    }
    Ok(res)
}

pub fn run_report(cfg: &RunConfig, net: &Network, ws: &Workspace) -> Result<ScenarioReport> {
    let (base, assign) = load_pair(net, ws, "report")?;
    let pricing: Option<PricingState> = if ws.path(PRICING_FILE).exists() { Some(ws.read_json(PRICING_FILE, "report")?) } else { None };
    let report = compute_metrics(
        net,
        &base.result,
        &assign,
        pricing.as_ref().map(|p| (&p.outcome, &p.payoffs)),
        cfg.operation_cost,
    );
    ws.write_json("report.json", &report)?;
    write_metrics_csv(&report, ws.csv("metrics.csv")?)?;
    write_voc_csv(&report.voc, ws.csv("voc.csv")?)?;
    Ok(report)
}

/// Link table of the built network.
pub fn run_dump(net: &Network, ws: &Workspace) -> Result<()> {
    let mut w = csv::Writer::from_writer(ws.csv("links.csv")?);
    w.write_record(["id", "tail", "head", "kind", "operator", "time", "capacity", "fare", "planning", "corridor"])?;
    for l in &net.links {
        w.write_record([
            l.id.clone(),
            net.nodes[l.tail].id.clone(),
            net.nodes[l.head].id.clone(),
            serde_json::to_value(l.kind)?.as_str().unwrap_or_default().to_string(),
            l.operator.map(|m| net.operators[m].id.clone()).unwrap_or_default(),
            l.time.to_string(),
            l.capacity.map(|c| c.to_string()).unwrap_or_default(),
            l.fare.to_string(),
            l.planning.to_string(),
            l.corridor.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    ws.write_json("diagnostics.json", &validate(net))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub instances: usize,
    pub passed: usize,
    pub skipped: usize,
    pub worst: f64,
}

impl CheckRow {
    pub fn ok(&self) -> bool {
        self.passed + self.skipped == self.instances && self.passed > 0
    }
}

/// Oracle suite on the fixed random toys: equilibrium against the path
/// oracle, pricing against vertex enumeration and stability of the priced
/// toys. `seed` offsets the random pricing instances.
pub fn verify_suite(seed: u64, n_toys: usize, hop_budget: usize) -> Vec<CheckRow> {
    let seeds = &TOY_SEEDS[..n_toys.min(TOY_SEEDS.len())];
    let mut eq = CheckRow { check: "equilibrium_vs_path_oracle".into(), instances: seeds.len(), passed: 0, skipped: 0, worst: 0.0 };
    let mut st = CheckRow { check: "stability_at_optimal_pricing".into(), instances: seeds.len(), passed: 0, skipped: 0, worst: 0.0 };
    for &s in seeds {
        match toy_equilibrium_gap(s, hop_budget) {
            Ok(Some(gap)) => {
                eq.worst = eq.worst.max(gap);
                eq.passed += (gap < 1e-4) as usize;
            }
            Ok(None) => eq.skipped += 1,
            Err(e) => log::warn!("toy {s}: {e}"),
        }
        match toy_stability(s, hop_budget) {
            Ok(Some(v)) => {
                st.worst = st.worst.max(v);
                st.passed += (v <= 1e-6) as usize;
            }
            Ok(None) => st.skipped += 1,
            Err(e) => log::warn!("toy {s}: {e}"),
        }
    }
    let n_lp = 200;
    let mut lp = CheckRow { check: "pricing_vs_lp_oracle".into(), instances: n_lp, passed: 0, skipped: 0, worst: 0.0 };
    for k in 0..n_lp as u64 {
        match compare_pricing(&random_pricing_inputs(seed.wrapping_add(k))) {
            Ok(Some(gap)) => {
                lp.worst = lp.worst.max(gap);
                lp.passed += (gap < 1e-8) as usize;
            }
            Ok(None) => lp.passed += 1,
            Err(e) => log::warn!("pricing instance {k}: {e}"),
        }
    }
    vec![eq, lp, st]
}

/// Step size used on toys: `1/(L + ρ)` from the sampled estimate.
pub fn toy_step(net: &Network, mult: &Multipliers, q: &[f64]) -> Result<f64> {
    let l = lipschitz_estimate(net, mult, CostOptions::default(), q, 8, 7)?;
    Ok(1.0 / (l + mult.rho))
}

/// Worst per-link gap between splitting and the path oracle at half demand,
/// or `None` when the oracle fails. Complementarity must also hold.
pub fn toy_equilibrium_gap(seed: u64, hop_budget: usize) -> Result<Option<f64>> {
    let net = build_network(&random_toy(seed))?;
    let mult = Multipliers::new(net.n_links(), 1.0);
    let q: Vec<f64> = net.demand_caps().iter().map(|c| 0.5 * c).collect();
    let gamma = toy_step(&net, &mult, &q)?;
    let sol = solve_vi(&net, &q, None, &SolverParams { gamma, steps: 60_000, ..Default::default() }, &mult)?;
    let y = net.layout.collapse(&sol.z, net.n_links());
    let paths: Vec<_> = (0..net.n_od()).map(|w| enumerate_paths(&net, w, hop_budget)).collect();
    let Ok(o) = ue_oracle(&net, &q, &paths, &mult, OracleMode::Penalty, CostOptions::default(), &OracleParams::default()) else {
        return Ok(None);
    };
    let gap = (0..net.n_links()).map(|a| (y[a] - o.x[a] - o.xt[a]).abs()).fold(0.0, f64::max);
    let comp = complementarity_residual(&net, &sol.z, &mult, CostOptions::default())?;
    Ok(Some(gap.max(comp)))
}

/// Toy assignment parameters: step from the Lipschitz estimate at `ρ_max`.
pub fn toy_params(net: &Network) -> Result<AlgorithmParams> {
    let mut p = AlgorithmParams { rho_max: 20.0, max_outer: 3000, eps_q: 1e-8, eps_z: 1e-8, ..Default::default() };
    let q: Vec<f64> = net.demand_caps().iter().map(|c| 0.5 * c).collect();
    let l = lipschitz_estimate(net, &Multipliers::new(net.n_links(), p.rho0), p.cost, &q, 8, 7)?;
    p.gamma = 1.0 / (l + p.rho_max);
    p.alpha = 0.05;
    p.adjoint_tail = 30_000;
    Ok(p)
}

/// Worst stability violation at the platform-optimal pricing of a toy, or
/// `None` when the toy has no MaaS demand or infeasible floors.
pub fn toy_stability(seed: u64, hop_budget: usize) -> Result<Option<f64>> {
    let net = build_network(&random_toy(seed))?;
    let params = toy_params(&net)?;
    let base = solve_base(&net, &params)?;
    let assign = solve_assignment(&net, &params, Some(&base))?;
    if assign.q.iter().all(|q| *q <= 0.0) {
        return Ok(None);
    }
    let inputs = pricing_inputs(&net, &assign, &base, 1.0)?;
    let out = match solve_pricing(&inputs) {
        Ok(o) => o,
        Err(MaasError::Infeasible(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let rep = check_stability(&net, &assign, &inputs, &out.scheme, hop_budget)?;
    Ok(Some(rep.maas_violation.max(rep.plain_violation)))
}

pub fn write_checks_csv<W: std::io::Write>(rows: &[CheckRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["check", "instances", "passed", "skipped", "worst", "status"])?;
    for r in rows {
        out.write_record([
            r.check.clone(),
            r.instances.to_string(),
            r.passed.to_string(),
            r.skipped.to_string(),
            format!("{:e}", r.worst),
            if r.ok() { "pass".into() } else { "fail".into() },
        ])?;
    }
    out.flush()?;
    Ok(())
}
