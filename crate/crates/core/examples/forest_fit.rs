//! Fit a regression forest on simulated data, score it on held-out rows and round-trip
//! it through JSON.
//!
//! ```text
//! cargo run --release --example forest_fit
//! ```

use mdiplus::data::{train_test_split, Dataset, SeededRng, Task};
use mdiplus::forest::{fit_forest, Forest, ForestParams};
use mdiplus::metrics::r_squared;
use mdiplus::sim::{add_gaussian_noise, calibrate_noise, gen_correlated_gaussian, gen_response, ResponseKind, ResponseSpec};

fn main() -> mdiplus::Result<()> {
    let root = SeededRng::new(7);
    let x = gen_correlated_gaussian(600, 10, 0.0, 1, root.derive(0))?;
    let truth = gen_response(&x, &ResponseSpec::new(ResponseKind::Linear).fixed_signals(), root.derive(1))?;
    let sigma2 = calibrate_noise(&truth.f, 0.4)?;
    let y = add_gaussian_noise(&truth.f, sigma2, root.derive(2));
    let data = Dataset::from_matrix(x, y, Task::Regression)?;
    let (train, test) = train_test_split(&data, 0.3, root.derive(3))?;

    let params = ForestParams::regression_default();
    let forest = fit_forest(&train, &params, root.derive(4))?;
    let pred = forest.predict(test.features())?;
    println!(
        "{} trees on {} rows, held-out R^2 = {:.3}",
        forest.n_trees(),
        train.n_rows(),
        r_squared(test.response(), &pred)?
    );

    let splits: usize = forest.trees().iter().map(|t| t.structure.n_splits()).sum();
    println!("{splits} splits in total, signal features {:?}", truth.signal_columns);

    let restored = Forest::from_json(&forest.to_json()?)?;
    assert_eq!(restored.predict(test.features())?, pred);
    println!("JSON round trip reproduces every prediction");
    Ok(())
}
