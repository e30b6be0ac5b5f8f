//! Fit the simulated world with and without thinking ahead and compare the
//! two models on the price-intervention test set.
//!
//! Usage: `cargo run --release --example toy_study [max_iterations]`

use std::time::Instant;

use shopper::data::{all_pairs, holdout_validation};
use shopper::eval::{heldout_conditional_loglik, PosteriorSummary};
use shopper::exec::Execution;
use shopper::fit::fit;
use shopper::model::{choice_distribution, ordered_basket_loglik, unordered_basket_loglik_exact, ModelConfig};
use shopper::toy::{generate_intervention_test, generate_world, make_trip, ToyWorldConfig, ITEMS};
use shopper::variational::OptimizerConfig;

fn main() -> shopper::Result<()> {
    let max_iterations = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("iteration count"))
        .unwrap_or(20_000);
    let world = ToyWorldConfig::default();
    let (catalog, trips) = generate_world(&world)?;
    let test = generate_intervention_test(&world, &catalog)?;
    let (train, validation) = holdout_validation(&trips, 0);
    let opt = OptimizerConfig {
        max_iterations,
        ..OptimizerConfig::default()
    };
    let parent = make_trip(&catalog, &world, 0, 0, 1, &[0, 6], &[]);
    for think_ahead in [false, true] {
        let config = ModelConfig {
            k_items: 8,
            k_price: 3,
            use_season: false,
            think_ahead,
            ..ModelConfig::default()
        };
        let start = Instant::now();
        let result = fit(&catalog, &train, &validation, &config, &opt, Execution::default())?;
        let summary = PosteriorSummary::from_variational(&result.state);
        let cond = heldout_conditional_loglik(&summary, &config, &catalog, &test, &all_pairs(&test), 0, Execution::default())?;
        let n = test.len() as f64;
        let mut ordered = 0.0;
        let mut unordered = 0.0;
        for t in &test {
            ordered += ordered_basket_loglik(&summary.state, &config, &catalog, t)?;
            unordered += unordered_basket_loglik_exact(&summary.state, &config, &catalog, t)?;
        }
        println!(
            "think_ahead={think_ahead} iterations={} converged={} best_val={:?} time={:.1}s",
            result.iterations,
            result.converged,
            result.best_validation,
            start.elapsed().as_secs_f64()
        );
        println!(
            "  conditional per item {:.4}  ordered per trip {:.4}  unordered per trip {:.4}",
            cond.mean,
            ordered / n,
            unordered / n
        );
        // Mean log-probability by role: preference item, first/second pair item, checkout.
        let mut by_role = [(0.0, 0usize); 4];
        for t in &test {
            let ctx = shopper::model::TripContext::for_trip(&summary.state, &config, &catalog, t)?;
            let mut basket = ctx.empty_basket();
            let mut pair_seen = false;
            for &c in &t.items {
                let lp = ctx.step(&basket).log_prob(c);
                let role = if c == catalog.checkout() {
                    3
                } else if c < 4 {
                    0
                } else if !pair_seen {
                    pair_seen = true;
                    1
                } else {
                    2
                };
                by_role[role].0 += lp;
                by_role[role].1 += 1;
                basket.push(&summary.state, c);
            }
        }
        for (name, (sum, n)) in ["pref", "pair1", "pair2", "checkout"].iter().zip(by_role) {
            print!("{name}: {:.3} (n={n}, per trip {:.3})  ", sum / n as f64, sum / test.len() as f64);
        }
        println!();
        for stage in [vec![], vec![1], vec![1, 4], vec![1, 4, 5]] {
            let p = choice_distribution(&summary.state, &config, &catalog, &parent, &stage)?;
            let row: Vec<String> = p.iter().map(|x| format!("{x:.2}")).collect();
            println!("  stage {stage:?}: {}", row.join(" "));
        }
        let p = choice_distribution(&summary.state, &config, &catalog, &parent, &[])?;
        for (c, id) in ITEMS.iter().enumerate() {
            print!("{id}={:.3} ", p[c]);
        }
        println!("checkout={:.3}", p[catalog.checkout()]);
    }
    Ok(())
}
