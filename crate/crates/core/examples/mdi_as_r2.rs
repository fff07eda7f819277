//! Classical MDI of a tree is the unnormalized R^2 of an OLS fit on its decision stumps.
//! This example computes both for every tree of a small forest and prints the largest gap.
//!
//! ```text
//! cargo run --release --example mdi_as_r2
//! ```

use mdiplus::data::{Dataset, SeededRng, Task};
use mdiplus::forest::{fit_forest, ForestParams};
use mdiplus::importance::{mdi_classical, mdi_via_r2};
use mdiplus::sim::{add_gaussian_noise, calibrate_noise, gen_correlated_gaussian, gen_response, ResponseKind, ResponseSpec};

fn main() -> mdiplus::Result<()> {
    let rng = SeededRng::new(11);
    let x = gen_correlated_gaussian(300, 6, 0.5, 3, rng.derive(0))?;
    let truth = gen_response(&x, &ResponseSpec::new(ResponseKind::Lss).fixed_signals(), rng.derive(1))?;
    let y = add_gaussian_noise(&truth.f, calibrate_noise(&truth.f, 0.6)?, rng.derive(2));
    let data = Dataset::from_matrix(x, y, Task::Regression)?;

    let params = ForestParams {
        n_trees: 20,
        ..ForestParams::regression_default()
    };
    let forest = fit_forest(&data, &params, rng.derive(3))?;
    let classical = mdi_classical(&forest, &data);
    let per_tree = classical.per_tree.as_ref().expect("classical MDI keeps per-tree values");

    let mut worst = 0.0f64;
    for (tree, impurity) in forest.trees().iter().zip(per_tree) {
        let r2 = mdi_via_r2(tree, &data)?;
        for (a, b) in r2.iter().zip(impurity) {
            worst = worst.max((a - b.unwrap_or(0.0)).abs());
        }
    }
    println!("largest |impurity MDI - stump R^2| over {} trees: {worst:.2e}", forest.n_trees());

    println!("{:<6} {:>10}", "feature", "MDI");
    for &k in &classical.ranking {
        println!("{:<6} {:>10.4}", classical.feature_names[k], classical.per_feature[k]);
    }
    Ok(())
}
