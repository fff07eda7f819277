//! Choosing an MDI+ configuration from data: candidates whose RF+ model predicts held-out
//! rows at least as well as the forest are kept, then the most stable ranking across
//! tree bootstraps wins. A median-rank ensemble of the survivors is printed as well.
//!
//! ```text
//! cargo run --release --example stability_selection
//! ```

use mdiplus::data::{train_test_split, Dataset, SeededRng, Task};
use mdiplus::forest::{fit_forest, ForestParams};
use mdiplus::glm::GlmSpec;
use mdiplus::metrics::SimilarityMetric;
use mdiplus::pcs::{ensemble_rank, prediction_screen, stability_select, CandidateModel, SelectionSummary, StabilityOptions};
use mdiplus::sim::{add_gaussian_noise, calibrate_noise, gen_correlated_gaussian, gen_response, ResponseKind, ResponseSpec};

fn main() -> mdiplus::Result<()> {
    let rng = SeededRng::new(99);
    let x = gen_correlated_gaussian(500, 15, 0.3, 5, rng.derive(0))?;
    let truth = gen_response(&x, &ResponseSpec::new(ResponseKind::LinearPlusLss).fixed_signals(), rng.derive(1))?;
    let y = add_gaussian_noise(&truth.f, calibrate_noise(&truth.f, 0.4)?, rng.derive(2));
    let data = Dataset::from_matrix(x, y, Task::Regression)?;
    let (train, test) = train_test_split(&data, 0.3, rng.derive(3))?;

    let params = ForestParams {
        n_trees: 50,
        ..ForestParams::regression_default()
    };
    let forest = fit_forest(&train, &params, rng.derive(4))?;

    let mut stumps_only = CandidateModel::new("ridge-stumps-only", GlmSpec::ridge(), SimilarityMetric::RSquared);
    stumps_only.augment = false;
    let candidates = vec![
        CandidateModel::new("ridge-r2", GlmSpec::ridge(), SimilarityMetric::RSquared),
        CandidateModel::new("huber-neg-huber", GlmSpec::huber(), SimilarityMetric::NegHuberLoss { delta: None }),
        stumps_only,
    ];

    let screening = prediction_screen(&candidates, &train, &test, &forest)?;
    println!("forest held-out R^2 {:.3}", screening.baseline);
    for e in &screening.entries {
        println!("  {:<18} {:.3} {}", e.id, e.test_performance, if e.passed { "kept" } else { "dropped" });
    }
    let kept: Vec<CandidateModel> = screening.require_passed(&candidates)?.into_iter().cloned().collect();

    let (stability, reports) = stability_select(&kept, &forest, &train, StabilityOptions::default(), rng.derive(5))?;
    let summary = SelectionSummary::new(Task::Regression, &screening, &stability, false);
    println!("\n{}", summary.to_json()?);

    let ensemble = ensemble_rank(&reports)?;
    let top: Vec<&str> = ensemble.ranking.iter().take(6).map(|&k| ensemble.feature_names[k].as_str()).collect();
    println!("\nensemble top 6: {}  (signals {:?})", top.join(" "), truth.signal_columns);
    Ok(())
}
