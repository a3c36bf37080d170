use maas_core::pricing::{compute_payoffs, profit_at, solve_pricing, PricingScheme};
use maas_core::verification::{compare_pricing, random_pricing_inputs};

#[test]
fn breakpoint_solver_matches_vertex_enumeration() {
    let (mut optimal, mut infeasible, mut degenerate) = (0, 0, 0);
    for seed in 0..400 {
        let inp = random_pricing_inputs(seed);
        degenerate += inp.ods.iter().any(|o| o.lambda_min == Some(0.0)) as usize;
        match compare_pricing(&inp).unwrap_or_else(|e| panic!("seed {seed}: {e}")) {
            Some(gap) => {
                assert!(gap < 1e-8, "seed {seed}: relative gap {gap}");
                optimal += 1;
            }
            None => infeasible += 1,
        }
    }
    assert!(optimal > 200 && infeasible > 10 && degenerate > 40, "{optimal} {infeasible} {degenerate}");
}

#[test]
fn outputs_respect_payoff_bounds_and_floors() {
    for seed in 0..200 {
        let inp = random_pricing_inputs(seed);
        let Ok(out) = solve_pricing(&inp) else { continue };
        for (o, pd) in inp.ods.iter().zip(&out.scheme.pd) {
            if o.q > 0.0 {
                assert!(*pd <= o.payoff_bound() + 1e-9);
            }
        }
        let pay = compute_payoffs(&inp, &out.scheme);
        for op in &pay.operators {
            assert!(op.total() >= op.floor - 1e-6, "seed {seed}: {} below floor {}", op.total(), op.floor);
        }
        assert!((pay.profit - out.profit).abs() <= 1e-9 * out.profit.abs().max(1.0));
    }
}

#[test]
fn zero_fares_give_minus_capacity_cost() {
    let inp = random_pricing_inputs(7);
    let scheme = PricingScheme { eta: 1.0, ps: 0.8, pd: vec![0.0; inp.ods.len()] };
    let pay = compute_payoffs(&inp, &scheme);
    assert!((pay.profit + 0.8 * inp.total_weighted).abs() < 1e-12);
}

#[test]
fn profit_is_concave_in_capacity_price() {
    for seed in 0..100 {
        let inp = random_pricing_inputs(seed);
        let h = 0.01;
        let v: Vec<f64> = (0..2000).map(|i| profit_at(&inp, i as f64 * h)).collect();
        for k in 1..v.len() - 1 {
            let d2 = v[k + 1] - 2.0 * v[k] + v[k - 1];
            assert!(d2 <= 1e-9 * v[k].abs().max(1.0), "seed {seed} at {}: {d2}", k as f64 * h);
        }
    }
}
