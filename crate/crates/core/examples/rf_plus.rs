//! RF+ refits each tree as a ridge regression on its stumps plus the raw features. On an
//! additive signal this recovers the smooth part the piecewise-constant trees miss.
//!
//! ```text
//! cargo run --release --example rf_plus
//! ```

use mdiplus::data::{train_test_split, Dataset, SeededRng, Task};
use mdiplus::forest::{fit_forest, ForestParams};
use mdiplus::glm::GlmSpec;
use mdiplus::importance::{EvalSample, RfPlus};
use mdiplus::metrics::r_squared;
use mdiplus::sim::{add_gaussian_noise, calibrate_noise, gen_correlated_gaussian, gen_response, ResponseKind, ResponseSpec};

fn main() -> mdiplus::Result<()> {
    let rng = SeededRng::new(5);
    let x = gen_correlated_gaussian(800, 20, 0.0, 1, rng.derive(0))?;
    let truth = gen_response(&x, &ResponseSpec::new(ResponseKind::Linear), rng.derive(1))?;
    let y = add_gaussian_noise(&truth.f, calibrate_noise(&truth.f, 0.4)?, rng.derive(2));
    let data = Dataset::from_matrix(x, y, Task::Regression)?;
    let (train, test) = train_test_split(&data, 0.4, rng.derive(3))?;

    let forest = fit_forest(&train, &ForestParams::regression_default(), rng.derive(4))?;
    let rf = r_squared(test.response(), &forest.predict(test.features())?)?;

    let stumps_only = RfPlus::fit(forest.clone(), &train, &GlmSpec::ridge(), false, EvalSample::Full)?;
    let augmented = RfPlus::fit(forest, &train, &GlmSpec::ridge(), true, EvalSample::Full)?;
    let rows = [
        ("random forest", rf),
        ("RF+ stumps only", r_squared(test.response(), &stumps_only.predict(test.features())?)?),
        ("RF+ stumps + raw", r_squared(test.response(), &augmented.predict(test.features())?)?),
    ];
    println!("held-out R^2 on {} rows", test.n_rows());
    for (name, r2) in rows {
        println!("  {name:<18} {r2:.3}");
    }

    let lambdas: Vec<f64> = augmented.fits().iter().map(|f| f.lambda()).collect();
    let (lo, hi) = lambdas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &l| (a.min(l), b.max(l)));
    println!("per-tree ridge penalties chosen by leave-one-out: {lo:.3e} .. {hi:.3e}");
    Ok(())
}
