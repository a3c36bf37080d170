use maas_core::bilevel::{gradient, link_gradient, AlgorithmParams, GradientMode};
use maas_core::cost::{CostOptions, Multipliers};
use maas_core::equilibrium::{
    adjoint_gradient, adjoint_gradient_tail, check_step_size, complementarity_residual, fd_jacobian, lipschitz_estimate, solve_vi,
    unrolled_jacobian, CostOperator, SolverParams,
};
use maas_core::network::{build_network, Network};
use maas_core::verification::{enumerate_paths, fd_objective_gradient, random_toy, ue_oracle, OracleMode, OracleParams, TOY_SEEDS};

fn toy(seed: u64) -> Network {
    build_network(&random_toy(seed)).unwrap()
}

fn step_for(net: &Network, mult: &Multipliers, q: &[f64]) -> f64 {
    let l = lipschitz_estimate(net, mult, CostOptions::default(), q, 8, 7).unwrap();
    let g = 1.0 / (l + mult.rho);
    assert!(check_step_size(g, l, mult.rho));
    g
}

fn half_q(net: &Network) -> Vec<f64> {
    net.demand_caps().iter().map(|c| 0.5 * c).collect()
}

#[test]
fn splitting_matches_path_oracle_on_a_few_toys() {
    // The full seed list runs in the acceptance suite.
    let mut checked = 0;
    for &seed in &TOY_SEEDS[..6] {
        let net = toy(seed);
        let mult = Multipliers::new(net.n_links(), 1.0);
        let q = half_q(&net);
        let gamma = step_for(&net, &mult, &q);
        let params = SolverParams { gamma, steps: 60_000, ..Default::default() };
        let sol = solve_vi(&net, &q, None, &params, &mult).unwrap();
        let y = net.layout.collapse(&sol.z, net.n_links());
        let paths: Vec<_> = (0..net.n_od()).map(|w| enumerate_paths(&net, w, 12)).collect();
        let oracle = match ue_oracle(&net, &q, &paths, &mult, OracleMode::Penalty, CostOptions::default(), &OracleParams::default()) {
            Ok(o) => o,
            Err(e) => {
                eprintln!("seed {seed}: oracle failed ({e}), skipped");
                continue;
            }
        };
        for a in 0..net.n_links() {
            let yo = oracle.x[a] + oracle.xt[a];
            assert!((y[a] - yo).abs() < 1e-4, "seed {seed} link {}: {} vs {}", net.link_label(a), y[a], yo);
        }
        let r = complementarity_residual(&net, &sol.z, &mult, CostOptions::default()).unwrap();
        assert!(r < 1e-4, "seed {seed}: complementarity {r}");
        checked += 1;
    }
    assert!(checked >= 4, "only {checked} instances checked");
}

#[test]
fn adjoint_matches_unrolled_and_fd() {
    for &seed in &TOY_SEEDS[..12] {
        let net = toy(seed);
        let mult = Multipliers::new(net.n_links(), 1.0);
        let q = half_q(&net);
        let gamma = step_for(&net, &mult, &q);
        let params = SolverParams { gamma, steps: 400, store_iterates: true, ..Default::default() };
        let sol = solve_vi(&net, &q, None, &params, &mult).unwrap();
        let op = CostOperator::new(&net, &mult, CostOptions::default());
        let times = op.times(&sol.z).unwrap();
        let gy = link_gradient(&net, &times, &CostOptions::default(), false).unwrap();
        let mut gz = vec![0.0; sol.z.len()];
        net.layout.broadcast_add(&gy, &mut gz);
        let adj = adjoint_gradient(&net, &sol, &mult, CostOptions::default(), &gz).unwrap();
        let cols = unrolled_jacobian(&net, &sol, &mult, CostOptions::default()).unwrap();
        let fwd: Vec<f64> = cols.iter().map(|c| c.iter().zip(&gz).map(|(a, b)| a * b).sum()).collect();
        let fdj = fd_jacobian(&net, &q, None, &params, &mult, 1e-5).unwrap();
        for w in 0..q.len() {
            assert!((adj[w] - fwd[w]).abs() <= 1e-8 * fwd[w].abs().max(1.0), "seed {seed}: {} vs {}", adj[w], fwd[w]);
            for (k, (a, b)) in cols[w].iter().zip(&fdj[w]).enumerate() {
                assert!((a - b).abs() <= 1e-3 * b.abs().max(1e-2), "seed {seed} od {w} entry {k}: {a} vs {b}");
            }
        }
        let fd = fd_objective_gradient(&net, &SolverParams { store_iterates: false, ..params }, &mult, &q, None, 1e-5).unwrap();
        for w in 0..q.len() {
            assert!((adj[w] - fd[w]).abs() <= 1e-3 * fd[w].abs().max(1.0), "seed {seed}: adjoint {} fd {}", adj[w], fd[w]);
        }
        let ap = AlgorithmParams { gamma, gradient: GradientMode::Adjoint, ..Default::default() };
        let g = gradient(&net, &q, &sol, None, &mult, &ap).unwrap();
        assert_eq!(g, adjoint_gradient_tail(&net, &sol, &mult, CostOptions::default(), &gz, 0).unwrap());
    }
}
