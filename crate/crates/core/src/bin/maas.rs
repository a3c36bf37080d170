use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use maas_core::pipeline::{self, exit_code, RunConfig, Workspace, EXIT_CONFIG, EXIT_OK};
use maas_core::pricing::SweepObjective;
use maas_core::{MaasError, Result};

#[derive(Parser, Debug)]
#[command(name = "maas", version, about = "MaaS platform assignment and pricing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for state and artifacts.
    #[arg(long, global = true, env = "MAAS_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Capacity price weight on MT fares.
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Comma list or start:stop:step.
    #[arg(long, global = true, value_parser = parse_grid)]
    eta_grid: Option<Vec<f64>>,
    /// platform, traveler or operator.
    #[arg(long, global = true)]
    objective: Option<SweepObjective>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    max_outer: Option<usize>,
    #[arg(long, global = true)]
    tol_q: Option<f64>,
    #[arg(long, global = true)]
    tol_z: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Equilibrium without the platform; stores reservation utilities.
    Base,
    /// Bi-level MaaS assignment from the stored base.
    Assign,
    /// Optimal pricing at one eta.
    Price,
    /// Pricing over the eta grid.
    Sweep,
    /// Oracle suite on the built-in random toys.
    Verify,
    /// Scenario metrics against the base.
    Report,
    /// Link table and existence diagnostics of the built network.
    Dump,
}

fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let nums = |parts: &[&str]| -> std::result::Result<Vec<f64>, String> {
        parts.iter().map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect()
    };
    if s.contains(':') {
        let v = nums(&s.split(':').collect::<Vec<_>>())?;
        let [a, b, h] = v[..] else { return Err("range needs start:stop:step".into()) };
        if !(h > 0.0) || b < a {
            return Err("range needs start <= stop and a positive step".into());
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| a + h * i as f64).collect())
    } else {
        nums(&s.split(',').collect::<Vec<_>>())
    }
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| MaasError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(v) = cli.eta {
        cfg.eta = v;
    }
    if let Some(v) = &cli.eta_grid {
        cfg.eta_grid = v.clone();
    }
    if let Some(v) = cli.objective {
        cfg.objective = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.max_outer {
        cfg.algorithm.max_outer = v;
    }
    if let Some(v) = cli.tol_q {
        cfg.algorithm.eps_q = v;
    }
    if let Some(v) = cli.tol_z {
        cfg.algorithm.eps_z = v;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32> {
    let ws = Workspace::new(&cli.out_dir)?;
    if cli.command == Command::Verify {
        let rows = pipeline::verify_suite(cli.seed.unwrap_or(0), 50, 12);
        pipeline::write_checks_csv(&rows, ws.csv("verify.csv")?)?;
        println!("{:<32} {:>9} {:>7} {:>7} {:>12}  status", "check", "instances", "passed", "skipped", "worst");
        for r in &rows {
            let status = if r.ok() { "pass" } else { "fail" };
            println!("{:<32} {:>9} {:>7} {:>7} {:>12.3e}  {status}", r.check, r.instances, r.passed, r.skipped, r.worst);
        }
        return Ok(if rows.iter().all(|r| r.ok()) { EXIT_OK } else { pipeline::EXIT_OTHER });
    }
    let cfg = config(cli)?;
    let net = cfg.build()?;
    info!("network: {} nodes, {} links, {} OD pairs", net.n_nodes(), net.n_links(), net.n_od());
    match cli.command {
        Command::Base => {
            let (base, status) = pipeline::run_base(&cfg, &net, &ws)?;
            println!("base: {} outer iterations, converged {}", base.result.iterations, base.result.converged);
            Ok(status.exit_code())
        }
        Command::Assign => {
            let (res, status) = pipeline::run_assign(&cfg, &net, &ws)?;
            let share = res.q.iter().sum::<f64>() / net.total_demand();
            println!("assign: {} outer iterations, converged {}, MaaS share {:.4}", res.iterations, res.converged, share);
            Ok(status.exit_code())
        }
        Command::Price => {
            let st = pipeline::run_price(&cfg, &net, &ws)?;
            println!("price: eta {} ps {} profit {}", st.outcome.scheme.eta, st.outcome.scheme.ps, st.outcome.profit);
            Ok(EXIT_OK)
        }
        Command::Sweep => {
            let res = pipeline::run_sweep(&cfg, &net, &ws)?;
            if let (Some(i), Some(out)) = (res.best, &res.outcome) {
                println!("sweep: best eta {} ps {} profit {}", res.points[i].eta, out.scheme.ps, out.profit);
            }
            Ok(EXIT_OK)
        }
        Command::Report => {
            let r = pipeline::run_report(&cfg, &net, &ws)?;
            println!(
                "report: MaaS share {:.4}, time per trip {:.4} (base {:.4})",
                r.scenario.maas_share, r.scenario.time_per_trip, r.base.time_per_trip
            );
            Ok(EXIT_OK)
        }
        Command::Dump => {
            pipeline::run_dump(&net, &ws)?;
            Ok(EXIT_OK)
        }
        Command::Verify => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
