//! Leave-one-out coefficients without refitting: exact for ridge, one Newton step for
//! L2-penalized logistic regression. Both are compared with brute-force refits.
//!
//! ```text
//! cargo run --release --example glm_leave_one_out
//! ```

use mdiplus::glm::{fit_regularized, GlmFit, GlmSpec};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn max_gap(fit: &GlmFit, z: &DMatrix<f64>, y: &[f64], spec: &GlmSpec) -> mdiplus::Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..y.len() {
        let (beta, alpha) = fit.loo_coefficients(i)?;
        let mut rest = y.to_vec();
        rest.remove(i);
        let refit = fit_regularized(&z.clone().remove_row(i), &rest, spec)?;
        let gap = beta
            .iter()
            .zip(refit.beta())
            .map(|(a, b)| (a - b).abs())
            .fold((alpha - refit.alpha()).abs(), f64::max);
        worst = worst.max(gap);
    }
    Ok(worst)
}

fn main() -> mdiplus::Result<()> {
    let mut g = mdiplus::data::SeededRng::new(3).generator();
    let (n, m) = (120, 6);
    let z = DMatrix::from_fn(n, m, |_, _| g.sample::<f64, _>(StandardNormal));
    let signal: Vec<f64> = (0..n).map(|i| z[(i, 0)] - 0.5 * z[(i, 1)]).collect();

    let y: Vec<f64> = signal.iter().map(|s| s + g.sample::<f64, _>(StandardNormal)).collect();
    let tuned = fit_regularized(&z, &y, &GlmSpec::ridge())?;
    // refits must keep the penalty fixed, otherwise each one would re-tune it
    let ridge = GlmSpec::ridge().with_lambdas(vec![tuned.lambda()]);
    let fit = fit_regularized(&z, &y, &ridge)?;
    println!("ridge: lambda {:.3e} chosen by LOO, largest coefficient gap vs refit {:.1e}", fit.lambda(), max_gap(&fit, &z, &y, &ridge)?);

    let labels: Vec<f64> = signal
        .iter()
        .map(|s| if g.gen::<f64>() < 1.0 / (1.0 + (-s).exp()) { 1.0 } else { 0.0 })
        .collect();
    for lambda in [1.0, 10.0, 100.0] {
        let spec = GlmSpec::logistic().with_lambdas(vec![lambda]);
        let fit = fit_regularized(&z, &labels, &spec)?;
        println!("logistic, lambda {lambda:>5}: largest one-step gap vs refit {:.1e}", max_gap(&fit, &z, &labels, &spec)?);
    }
    Ok(())
}
