//! Binary classification end to end: write a CSV, load it back, fit a classification
//! forest, score features with MDI+ (L2 logistic regression, negative log-loss) and save
//! the report as JSON and CSV.
//!
//! ```text
//! cargo run --release --example classification_report
//! ```

use mdiplus::data::{load_csv, Dataset, SeededRng, Task};
use mdiplus::forest::{fit_forest, ForestParams};
use mdiplus::glm::GlmSpec;
use mdiplus::importance::{mdi_classical, mdi_plus, MdiPlusOptions};
use mdiplus::metrics::{auroc, SimilarityMetric};
use mdiplus::sim::{draw_bernoulli, gen_correlated_gaussian, gen_response, ResponseKind, ResponseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rng = SeededRng::new(31);
    let x = gen_correlated_gaussian(500, 12, 0.0, 1, rng.derive(0))?;
    let spec = ResponseSpec::new(ResponseKind::LinearPlusLss).classification().fixed_signals();
    let truth = gen_response(&x, &spec, rng.derive(1))?;
    let prob: Vec<f64> = truth.f.iter().map(|&f| spec.class_probability(f)).collect();
    let labels = draw_bernoulli(&prob, rng.derive(2));

    let dir = std::env::temp_dir().join("mdiplus-classification-example");
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join("train.csv");
    Dataset::from_matrix(x, labels, Task::BinaryClassification)?.write_csv(&csv, "label")?;
    let data = load_csv(&csv, "label", Task::BinaryClassification)?;
    println!("loaded {} rows x {} features from {}", data.n_rows(), data.n_features(), csv.display());

    let forest = fit_forest(&data, &ForestParams::classification_default(), rng.derive(3))?;
    let plus = mdi_plus(&forest, &data, &GlmSpec::logistic(), SimilarityMetric::NegLogLoss, MdiPlusOptions::default())?;
    let mdi = mdi_classical(&forest, &data);
    println!(
        "AUROC against the signal features {:?}: MDI+ {:.3}, MDI {:.3}",
        truth.signal_columns,
        auroc(&plus.per_feature, &truth.signal_mask)?,
        auroc(&mdi.per_feature, &truth.signal_mask)?
    );

    std::fs::write(dir.join("mdi-plus.json"), plus.to_json()?)?;
    std::fs::write(dir.join("mdi-plus.csv"), plus.to_csv()?)?;
    print!("{}", plus.to_csv()?);
    Ok(())
}
