//! End-to-end acceptance checks. Every criterion prints one PASS/FAIL line; the criteria
//! run one after another in a single test so that their runtimes are measured without
//! competing for cores.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mdiplus::data::{BootstrapIndex, Dataset, SeededRng, Task};
use mdiplus::forest::{
    best_split, fit_forest, forest_from_bootstrap, impurity_decrease, FittedTree, Forest, ForestParams, MaxFeatures,
};
use mdiplus::glm::{clamp_probability, fit_ols, fit_regularized, Family, GlmSpec, Link};
use mdiplus::importance::{mdi_classical, mdi_plus, mdi_via_r2, EvalSample, MdiPlusOptions, RfPlus};
use mdiplus::metrics::{auroc, neg_huber_loss, neg_log_loss, r_squared, rbo, SimilarityMetric};
use mdiplus::sim::{
    calibrate_noise, gen_correlated_gaussian, preset, run_experiment, CovariateSpec, ExperimentConfig, ExperimentResults,
    MethodSpec, NoiseSpec, PresetOverrides, ResponseKind, ResponseSpec,
};
use mdiplus::stump::{stump_value, transform, ColumnSource, StumpColumn};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, StudentsT};
use tempfile::TempDir;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

fn within_budget(start: Instant, budget: Duration) -> std::result::Result<(), String> {
    let t = start.elapsed();
    ensure(t < budget, || format!("took {:.1?}, budget {:.0?}", t, budget))
}

// ---------------------------------------------------------------------------------------
// Instance suite shared by criteria 1, 2, 3 and 6.

struct Instance {
    data: Dataset,
    forest: Forest,
}

fn instance(seed: u64) -> Instance {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let n = g.gen_range(8..=64);
    let p = g.gen_range(2..=6);
    // a mix of continuous and few-valued columns so that ties in x occur
    let x = DMatrix::from_fn(n, p, |_, j| {
        if j % 3 == 2 {
            g.gen_range(0..4) as f64
        } else {
            g.gen::<f64>()
        }
    });
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let base = 2.0 * x[(i, 0)] + if x[(i, 1)] > 0.5 { 1.0 } else { 0.0 };
            base + 0.5 * g.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let data = Dataset::from_matrix(x, y, Task::Regression).unwrap();
    let params = ForestParams {
        n_trees: 3,
        max_features: if g.gen_bool(0.5) { MaxFeatures::All } else { MaxFeatures::Third },
        min_samples_leaf: if g.gen_bool(0.5) { 1 } else { 5 },
        max_depth: Some(g.gen_range(1..=4)),
        ..ForestParams::regression_default()
    };
    let forest = fit_forest(&data, &params, SeededRng::new(seed)).unwrap();
    Instance { data, forest }
}

fn suite() -> Vec<Instance> {
    (0..200).map(instance).collect()
}

/// In-bag rows (with multiplicity) reaching each node of `tree`.
fn node_rows(tree: &FittedTree, data: &Dataset) -> Vec<Vec<usize>> {
    let mut rows = vec![Vec::new(); tree.structure.nodes().len()];
    for &i in &tree.bootstrap.in_bag {
        for id in tree.structure.path(&data.row(i)) {
            rows[id].push(i);
        }
    }
    rows
}

fn population_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Classical MDI of one tree recomputed from raw rows: per split, the variance of the node
/// minus the weighted child variances, weighted by N(t)/n.
fn mdi_oracle(tree: &FittedTree, data: &Dataset) -> Vec<f64> {
    let rows = node_rows(tree, data);
    let y = data.response();
    let n = tree.bootstrap.in_bag.len() as f64;
    let mut out = vec![0.0; data.n_features()];
    for s in tree.structure.splits() {
        let node = &rows[s.node_id];
        let (l, r): (Vec<usize>, Vec<usize>) = node.iter().partition(|&&i| data.value(i, s.feature_index) <= s.threshold);
        let vals = |ix: &[usize]| ix.iter().map(|&i| y[i]).collect::<Vec<_>>();
        let nt = node.len() as f64;
        let decrease = population_variance(&vals(node))
            - (l.len() as f64 / nt) * population_variance(&vals(&l))
            - (r.len() as f64 / nt) * population_variance(&vals(&r));
        out[s.feature_index] += nt / n * decrease;
    }
    out
}

fn criterion_1(suite: &[Instance]) -> Check {
    let start = Instant::now();
    let mut compared = 0;
    for (idx, inst) in suite.iter().enumerate() {
        let classical = mdi_classical(&inst.forest, &inst.data);
        let per_tree = classical.per_tree.as_ref().unwrap();
        for (t, tree) in inst.forest.trees().iter().enumerate() {
            let via_r2 = mdi_via_r2(tree, &inst.data).map_err(|e| e.to_string())?;
            let oracle = mdi_oracle(tree, &inst.data);
            let scale = 1e-12 * population_variance(inst.data.response());
            for k in 0..inst.data.n_features() {
                let c = per_tree[t][k].unwrap();
                ensure(close(via_r2[k], c, 1e-8, scale) && close(oracle[k], c, 1e-8, scale), || {
                    format!("instance {idx}, tree {t}, feature {k}: via R² {} vs classical {c} vs oracle {}", via_r2[k], oracle[k])
                })?;
                compared += 1;
            }
        }
    }
    within_budget(start, Duration::from_secs(30))?;
    Ok(format!("{compared} (tree, feature) pairs agree, {:.1?}", start.elapsed()))
}

fn criterion_2(suite: &[Instance]) -> Check {
    let mut splits = 0;
    for (idx, inst) in suite.iter().enumerate() {
        let y = inst.data.response();
        for tree in inst.forest.trees() {
            let rows = node_rows(tree, &inst.data);
            for (j, s) in tree.structure.splits().iter().enumerate() {
                let node = &rows[s.node_id];
                let (l, r): (Vec<usize>, Vec<usize>) =
                    node.iter().partition(|&&i| inst.data.value(i, s.feature_index) <= s.threshold);
                let yl: Vec<f64> = l.iter().map(|&i| y[i]).collect();
                let yr: Vec<f64> = r.iter().map(|&i| y[i]).collect();
                let direct = impurity_decrease(&yl, &yr).map_err(|e| e.to_string())?;
                let (nl, nr, nt) = (yl.len() as f64, yr.len() as f64, node.len() as f64);
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                let shortcut = nl * nr / (nt * nt) * (mean(&yl) - mean(&yr)).powi(2);
                let column = StumpColumn::for_split(&tree.structure, j);
                let psi_y: f64 = tree
                    .bootstrap
                    .in_bag
                    .iter()
                    .map(|&i| stump_value(&inst.data.row(i), &column, &tree.structure) * y[i])
                    .sum();
                let projection = psi_y * psi_y / (nt * nt);
                let tol = 1e-10 * direct.abs().max(1e-300) + 1e-10;
                ensure((direct - shortcut).abs() <= tol && (direct - projection).abs() <= tol, || {
                    format!("instance {idx}, split {j}: direct {direct}, shortcut {shortcut}, projection {projection}")
                })?;
                ensure(close(s.impurity_decrease, direct, 1e-10, 1e-10), || {
                    format!("instance {idx}, split {j}: stored decrease {} vs {direct}", s.impurity_decrease)
                })?;
                splits += 1;
            }
        }
    }
    Ok(format!("{splits} splits agree on all three forms"))
}

fn criterion_3(suite: &[Instance]) -> Check {
    let mut matrices = 0;
    for (idx, inst) in suite.iter().enumerate() {
        for tree in inst.forest.trees() {
            let x = inst.data.features().select_rows(&tree.bootstrap.in_bag);
            let tm = transform(&x, &tree.structure).map_err(|e| e.to_string())?;
            let v = tm.values();
            let gram = v.transpose() * v;
            let rows = node_rows(tree, &inst.data);
            let splits = tree.structure.splits();
            let sizes: Vec<f64> = tm
                .columns()
                .iter()
                .map(|c| match c {
                    ColumnSource::Stump { split } => rows[splits[*split].node_id].len() as f64,
                    ColumnSource::Raw { .. } => f64::NAN,
                })
                .collect();
            for a in 0..gram.nrows() {
                for b in 0..gram.ncols() {
                    let want = if a == b { sizes[a] } else { 0.0 };
                    ensure((gram[(a, b)] - want).abs() <= 1e-8 * (sizes[a] * sizes[b]).sqrt(), || {
                        format!("instance {idx}: Gram[{a},{b}] = {} expected {want}", gram[(a, b)])
                    })?;
                }
            }
            matrices += 1;
        }
    }
    Ok(format!("{matrices} in-bag stump Gram matrices are diag(N(t))"))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let (n, p, draws, sigma) = (200usize, 5usize, 10_000usize, 1.0f64);
    let mut g = ChaCha8Rng::seed_from_u64(2024);
    let x = DMatrix::from_fn(n, p, |_, _| g.gen::<f64>());
    let f: Vec<f64> = (0..n)
        .map(|i| 2.0 * x[(i, 0)] + x[(i, 1)] + if x[(i, 2)] > 0.5 { 1.0 } else { 0.0 })
        .collect();
    let clean = Dataset::from_matrix(x, f.clone(), Task::Regression).unwrap();
    let params = ForestParams {
        n_trees: 1,
        max_features: MaxFeatures::All,
        min_samples_leaf: 5,
        max_depth: Some(4),
        ..ForestParams::regression_default()
    };
    let forest = forest_from_bootstrap(&clean, BootstrapIndex::identity(n), &params, SeededRng::new(1)).unwrap();
    let tree = &forest.trees()[0];
    let base = mdi_via_r2(tree, &clean).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = (0..p).map(|k| tree.structure.splits_on(k).len()).collect();

    let mut sum = vec![0.0; p];
    let mut sum_sq = vec![0.0; p];
    for _ in 0..draws {
        let y: Vec<f64> = f.iter().map(|v| v + sigma * g.sample::<f64, _>(StandardNormal)).collect();
        let d = clean.with_response(y, Task::Regression).unwrap();
        let m = mdi_via_r2(tree, &d).map_err(|e| e.to_string())?;
        for k in 0..p {
            let excess = m[k] - base[k];
            sum[k] += excess;
            sum_sq[k] += excess * excess;
        }
    }
    let mut detail = Vec::new();
    for k in 0..p {
        let mean = sum[k] / draws as f64;
        let var = (sum_sq[k] - draws as f64 * mean * mean) / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        let expected = sigma * sigma * counts[k] as f64 / n as f64;
        ensure((mean - expected).abs() <= 3.0 * se + 1e-12, || {
            format!("feature {k}: mean excess {mean:.6} vs σ²|S|/n = {expected:.6} (SE {se:.2e})")
        })?;
        detail.push(format!("x{k}: {mean:.4}/{expected:.4}"));
    }
    within_budget(start, Duration::from_secs(120))?;
    Ok(format!("excess vs σ²|S_k|/n: {}, {:.1?}", detail.join(", "), start.elapsed()))
}

fn drop_row(z: &DMatrix<f64>, y: &[f64], i: usize) -> (DMatrix<f64>, Vec<f64>) {
    let z = z.clone().remove_row(i);
    let mut y = y.to_vec();
    y.remove(i);
    (z, y)
}

fn criterion_5() -> Check {
    let mut g = ChaCha8Rng::seed_from_u64(55);
    let grid = mdiplus::glm::default_lambda_grid(30);
    let mut worst_ridge = 0.0f64;
    for inst in 0..100 {
        let n = g.gen_range(12..=50);
        let m = g.gen_range(1..=10);
        let z = DMatrix::from_fn(n, m, |_, _| g.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n).map(|i| z[(i, 0)] + g.sample::<f64, _>(StandardNormal)).collect();
        let lambda = grid[g.gen_range(0..grid.len())];
        let spec = GlmSpec::ridge().with_lambdas(vec![lambda]);
        let fit = fit_regularized(&z, &y, &spec).map_err(|e| e.to_string())?;
        for i in 0..n {
            let (beta, alpha) = fit.loo_coefficients(i).map_err(|e| e.to_string())?;
            let (zi, yi) = drop_row(&z, &y, i);
            let refit = fit_regularized(&zi, &yi, &spec).map_err(|e| e.to_string())?;
            let err = beta
                .iter()
                .zip(refit.beta())
                .map(|(a, b)| (a - b).abs())
                .fold((alpha - refit.alpha()).abs(), f64::max);
            worst_ridge = worst_ridge.max(err);
            ensure(err <= 1e-6, || format!("ridge instance {inst}, row {i}, λ={lambda:e}: error {err:e}"))?;
        }
    }
    let mut worst_logistic = 0.0f64;
    for inst in 0..10 {
        let (n, m) = (100, 5);
        let z = DMatrix::from_fn(n, m, |_, _| g.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta = z[(i, 0)] - 0.5 * z[(i, 1)];
                if g.gen::<f64>() < 1.0 / (1.0 + (-eta).exp()) { 1.0 } else { 0.0 }
            })
            .collect();
        let lambda = [1.0, 3.0, 10.0][inst % 3];
        let spec = GlmSpec::logistic().with_lambdas(vec![lambda]);
        let fit = fit_regularized(&z, &y, &spec).map_err(|e| e.to_string())?;
        for i in 0..n {
            let (beta, _) = fit.loo_coefficients(i).map_err(|e| e.to_string())?;
            let (zi, yi) = drop_row(&z, &y, i);
            let refit = fit_regularized(&zi, &yi, &spec).map_err(|e| e.to_string())?;
            let err = beta.iter().zip(refit.beta()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_logistic = worst_logistic.max(err);
            ensure(err <= 1e-2, || format!("logistic instance {inst}, row {i}, λ={lambda}: error {err:e}"))?;
        }
    }
    Ok(format!("ridge max error {worst_ridge:.1e} (100 designs), logistic max error {worst_logistic:.1e} (10 designs)"))
}

fn criterion_6(suite: &[Instance]) -> Check {
    for (idx, inst) in suite.iter().enumerate() {
        let classical = mdi_classical(&inst.forest, &inst.data);
        let plus = mdi_plus(
            &inst.forest,
            &inst.data,
            &GlmSpec::ols(),
            SimilarityMetric::UnnormalizedRSquared,
            MdiPlusOptions::new(false, false),
        )
        .map_err(|e| e.to_string())?;
        let scale = 1e-12 * population_variance(inst.data.response());
        let (ct, pt) = (classical.per_tree.as_ref().unwrap(), plus.per_tree.as_ref().unwrap());
        for t in 0..ct.len() {
            for k in 0..inst.data.n_features() {
                let (c, v) = (ct[t][k].unwrap(), pt[t][k].unwrap());
                ensure(close(v, c, 1e-8, scale), || format!("instance {idx}, tree {t}, feature {k}: {v} vs {c}"))?;
            }
        }
        for k in 0..inst.data.n_features() {
            let (c, v) = (classical.per_feature[k], plus.per_feature[k]);
            if v.is_finite() {
                ensure(close(v, c, 1e-8, scale), || format!("instance {idx}, feature {k}: {v} vs {c}"))?;
            } else {
                ensure(c == 0.0, || format!("instance {idx}, feature {k}: never split but MDI {c}"))?;
            }
        }
        ensure(classical.ranking == plus.ranking, || {
            format!("instance {idx}: rankings {:?} vs {:?}", classical.ranking, plus.ranking)
        })?;
    }
    Ok(format!("{} instances: per-tree values and rankings identical", suite.len()))
}

// ---------------------------------------------------------------------------------------
// Simulation criteria.

/// One-sided paired t-test of mean(a - b) > 0.
fn paired_p_value(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if mean > 0.0 { 0.0 } else { 1.0 };
    }
    let t = mean / (var / n).sqrt();
    1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn with_methods(mut config: ExperimentConfig, methods: Vec<MethodSpec>, n_trees: usize) -> ExperimentConfig {
    config.methods = methods;
    let mut params = config.forest_params();
    params.n_trees = n_trees;
    config.forest_params = Some(params);
    config
}

fn single_preset(name: &str) -> ExperimentConfig {
    let mut e = preset(name, &PresetOverrides::default()).unwrap();
    assert_eq!(e.len(), 1);
    e.remove(0).config
}

fn run(config: &ExperimentConfig) -> std::result::Result<ExperimentResults, String> {
    run_experiment(config).map_err(|e| e.to_string())
}

fn entropy_check(name: &str, plus: &str, family: Family, n_trees: usize) -> Check {
    let config = with_methods(single_preset(name), vec![MethodSpec::Mdi, MethodSpec::mdi_plus(family)], n_trees);
    ensure(config.replicates == 50, || "preset should run 50 replicates".into())?;
    let results = run(&config)?;
    let r_plus = results.values(plus, "rank:x0");
    let r_mdi = results.values("mdi", "rank:x0");
    ensure(r_plus.len() == 50 && r_mdi.len() == 50, || "missing rank rows".into())?;
    let p = paired_p_value(&r_mdi, &r_plus);
    let (mp, mm) = (mean(&r_plus), mean(&r_mdi));
    let line = format!("{name}: mean rank of X1 {mp:.2} ({plus}) vs {mm:.2} (mdi), p = {p:.1e}");
    ensure(mp <= 2.0 && mp < mm && p < 0.01, || line.clone())?;
    Ok(line)
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let regression = entropy_check("entropy-bias-regression", "mdi-plus-ridge", Family::Ridge, 100)?;
    let classification = entropy_check("entropy-bias-classification", "mdi-plus-logistic", Family::LogisticL2, 50)?;
    within_budget(start, Duration::from_secs(600))?;
    Ok(format!("{regression}; {classification}; {:.0?}", start.elapsed()))
}

fn criterion_8() -> Check {
    let config = with_methods(
        single_preset("correlation-bias"),
        vec![MethodSpec::Mdi, MethodSpec::mdi_plus(Family::Ridge)],
        100,
    );
    ensure(config.replicates == 50, || "preset should run 50 replicates".into())?;
    let results = run(&config)?;
    let g = |m: &str, grp: &str| results.values(m, &format!("group_rank:{grp}"));
    let (sig, cn, ns) = (g("mdi-plus-ridge", "Sig"), g("mdi-plus-ridge", "C-NSig"), g("mdi-plus-ridge", "NSig"));
    let (msig, mns) = (g("mdi", "Sig"), g("mdi", "NSig"));
    let p1 = paired_p_value(&cn, &sig);
    let p2 = paired_p_value(&ns, &cn);
    let p3 = paired_p_value(&msig, &mns);
    let line = format!(
        "MDI+ Sig {:.1} < C-NSig {:.1} (p = {p1:.1e}) < NSig {:.1} (p = {p2:.1e}); MDI NSig {:.1} < Sig {:.1} (p = {p3:.1e})",
        mean(&sig),
        mean(&cn),
        mean(&ns),
        mean(&mns),
        mean(&msig)
    );
    ensure(
        mean(&sig) < mean(&cn) && mean(&cn) < mean(&ns) && mean(&mns) < mean(&msig) && p1 < 0.01 && p2 < 0.01 && p3 < 0.01,
        || line.clone(),
    )?;
    Ok(line)
}

fn criterion_9() -> Check {
    let mut parts = Vec::new();
    for kind in [ResponseKind::Linear, ResponseKind::LinearPlusLss] {
        let config = ExperimentConfig {
            covariates: CovariateSpec::CorrelatedGaussian {
                n: 250,
                p: 50,
                rho: 0.6,
                block_size: 25,
            },
            response: ResponseSpec::new(kind),
            noise: NoiseSpec {
                pve: Some(0.1),
                ..NoiseSpec::default()
            },
            forest_params: None,
            methods: vec![MethodSpec::Mdi, MethodSpec::mdi_plus(Family::Ridge)],
            replicates: 20,
            seed: 9,
            feature_ranks: false,
        };
        let results = run(&config)?;
        let plus = results.values("mdi-plus-ridge", "auroc");
        let mdi = results.values("mdi", "auroc");
        let shifted: Vec<f64> = mdi.iter().map(|v| v + 0.03).collect();
        let p = paired_p_value(&plus, &shifted);
        let gain = mean(&plus) - mean(&mdi);
        let line = format!(
            "{kind:?}: AUROC {:.3} (mdi+) vs {:.3} (mdi), margin test p = {p:.1e}, gain > 0 p = {:.1e}",
            mean(&plus),
            mean(&mdi),
            paired_p_value(&plus, &mdi)
        );
        parts.push((gain >= 0.03 && p < 0.05, line));
    }
    let summary = parts.iter().map(|(_, l)| l.as_str()).collect::<Vec<_>>().join("; ");
    ensure(parts.iter().all(|(ok, _)| *ok), || summary.clone())?;
    Ok(summary)
}

fn criterion_10() -> Check {
    let (n, p, pve) = (500usize, 10usize, 0.4);
    let mut rf = Vec::new();
    let mut plus = Vec::new();
    for seed in 0..20u64 {
        let rng = SeededRng::new(1000 + seed);
        let draw = |tag: u64| -> (DMatrix<f64>, Vec<f64>) {
            let x = gen_correlated_gaussian(n, p, 0.0, p, rng.derive(tag)).unwrap();
            let f = (0..n).map(|i| x.row(i).sum()).collect();
            (x, f)
        };
        let (xtr, ftr) = draw(0);
        let (xte, fte) = draw(1);
        let sigma2 = calibrate_noise(&ftr, pve).map_err(|e| e.to_string())?;
        let mut g = rng.derive(2).generator();
        let mut noisy = |f: &[f64]| -> Vec<f64> { f.iter().map(|v| v + sigma2.sqrt() * g.sample::<f64, _>(StandardNormal)).collect() };
        let train = Dataset::from_matrix(xtr, noisy(&ftr), Task::Regression).unwrap();
        let test = Dataset::from_matrix(xte, noisy(&fte), Task::Regression).unwrap();
        let forest = fit_forest(&train, &ForestParams::regression_default(), rng.derive(3)).map_err(|e| e.to_string())?;
        rf.push(r_squared(test.response(), &forest.predict(test.features()).unwrap()).unwrap());
        let model = RfPlus::fit(forest, &train, &GlmSpec::ridge(), true, EvalSample::Full).map_err(|e| e.to_string())?;
        plus.push(r_squared(test.response(), &model.predict(test.features()).unwrap()).unwrap());
    }
    let line = format!("mean test R²: RF+ {:.4} vs RF {:.4} over 20 seeds", mean(&plus), mean(&rf));
    ensure(mean(&plus) >= mean(&rf), || line.clone())?;
    Ok(line)
}

fn criterion_11() -> Check {
    let mut checked = 0;
    let mut check = |ok: bool, what: &str| -> std::result::Result<(), String> {
        checked += 1;
        ensure(ok, || what.to_string())
    };
    check((rbo(&[0, 1], &[1, 0], 0.9).unwrap() - 0.47368).abs() <= 1e-5, "rbo([1,2],[2,1],0.9)")?;
    check(rbo(&[2, 0, 1], &[2, 0, 1], 0.9).unwrap() == 1.0, "rbo of identical rankings")?;

    // the 4-point toy chain
    let toy = Dataset::from_matrix(DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]), vec![0.0, 0.0, 1.0, 1.0], Task::Regression).unwrap();
    check(impurity_decrease(&[0.0, 0.0], &[1.0, 1.0]).unwrap() == 0.25, "Δ̂ of [0,0]|[1,1]")?;
    check((impurity_decrease(&[0.0, 1.0], &[5.0]).unwrap() - 4.5).abs() < 1e-12, "Δ̂ of [0,1]|[5]")?;
    check(impurity_decrease(&[1.0, 3.0], &[2.0]).unwrap().abs() < 1e-15, "equal child means")?;
    let split = best_split(&toy, &[0, 1, 2, 3], &[0], 1, 0.0).unwrap();
    check(split.feature == 0 && split.threshold == 1.5 && (split.gain - 0.25).abs() < 1e-15, "best split of the toy")?;
    let params = ForestParams {
        n_trees: 1,
        min_samples_leaf: 1,
        max_features: MaxFeatures::All,
        ..ForestParams::regression_default()
    };
    let forest = forest_from_bootstrap(&toy, BootstrapIndex::identity(4), &params, SeededRng::new(0)).unwrap();
    let tree = &forest.trees()[0];
    check(tree.structure.n_splits() == 1, "toy tree has one split")?;
    check(mdi_classical(&forest, &toy).per_feature[0] == 0.25, "toy MDI = 0.25")?;
    check((mdi_via_r2(tree, &toy).unwrap()[0] - 0.25).abs() < 1e-12, "toy MDI via R² = 0.25")?;
    let normalized = mdi_plus(
        &forest,
        &toy,
        &GlmSpec::ridge().with_lambdas(vec![1e-10]),
        SimilarityMetric::RSquared,
        MdiPlusOptions::new(false, false),
    )
    .unwrap();
    check((normalized.per_feature[0] - 1.0).abs() < 1e-6, "toy normalized R² = 1")?;
    let column = transform(toy.features(), &tree.structure).unwrap();
    check(column.values().as_slice() == [1.0, 1.0, -1.0, -1.0], "toy stump column")?;
    let ols = fit_ols(column.values(), toy.response()).unwrap();
    check((ols.alpha() - 0.5).abs() < 1e-12 && (ols.beta()[0] + 0.5).abs() < 1e-12, "toy OLS coefficients")?;

    // stump values for N_L = 2, N_R = 1
    let three = Dataset::from_matrix(DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]), vec![0.0, 0.0, 3.0], Task::Regression).unwrap();
    let t3 = forest_from_bootstrap(&three, BootstrapIndex::identity(3), &params, SeededRng::new(0)).unwrap();
    let s3 = &t3.trees()[0].structure;
    let col = StumpColumn::for_split(s3, 0);
    check(
        (stump_value(&[0.0], &col, s3) - 1.0 / 2f64.sqrt()).abs() < 1e-12 && (stump_value(&[2.0], &col, s3) + 2f64.sqrt()).abs() < 1e-12,
        "stump values 1/√2 and −√2",
    )?;

    // metrics
    check((r_squared(&[0.0, 0.0, 1.0, 1.0], &[0.25, 0.25, 0.75, 0.75]).unwrap() - 0.75).abs() < 1e-12, "R² = 0.75")?;
    check((neg_log_loss(&[1.0, 0.0], &[0.8, 0.4]).unwrap() - (0.8f64.ln() + 0.6f64.ln()) / 2.0).abs() < 1e-12, "log loss")?;
    check((neg_log_loss(&[1.0, 0.0], &[0.5, 0.5]).unwrap() + 2f64.ln()).abs() < 1e-12, "log loss of 0.5")?;
    check((neg_huber_loss(&[3.0], &[0.0], 1.0).unwrap() + 2.5).abs() < 1e-12, "Huber linear branch")?;
    check(auroc(&[3.0, 1.0, 2.0], &[true, false, false]).unwrap() == 1.0, "AUROC 1")?;
    check(auroc(&[1.0, 3.0, 2.0], &[true, false, false]).unwrap() == 0.0, "AUROC 0")?;
    check(auroc(&[1.0, 1.0, 1.0], &[true, false, false]).unwrap() == 0.5, "AUROC ties")?;
    check(Link::Logit.inverse(0.0) == 0.5, "logit midpoint")?;
    check(clamp_probability(Link::Logit.inverse(40.0)) <= 1.0 - 1e-12, "probability clamp")?;

    // splits and noise calibration
    check(mdiplus::data::split_sizes(10, 0.2) == (8, 2) && mdiplus::data::split_sizes(5, 0.2) == (4, 1), "split sizes")?;
    check(mdiplus::data::split_sizes(2, 0.99) == (1, 1), "split sizes keep both parts")?;
    check((calibrate_noise(&[0.0, 2.0, 0.0, 2.0], 0.5).unwrap() - 1.0).abs() < 1e-12, "pve 0.5")?;
    let f = [-(2f64.sqrt()), 2f64.sqrt()];
    check((calibrate_noise(&f, 0.4).unwrap() - 3.0).abs() < 1e-12, "Var 2, pve 0.4 → σ² 3")?;
    Ok(format!("{checked} worked examples (the unit and CLI suites cover the rest)"))
}

fn criterion_12() -> Check {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let root = dir.path();
    let mut g = ChaCha8Rng::seed_from_u64(12);
    let mut csv = String::from("a,b,c,y\n");
    for _ in 0..120 {
        let x: Vec<f64> = (0..3).map(|_| g.gen()).collect();
        csv += &format!("{},{},{},{}\n", x[0], x[1], x[2], 2.0 * x[0] + x[1] + 0.2 * g.gen::<f64>());
    }
    std::fs::write(root.join("train.csv"), &csv).unwrap();
    std::fs::write(root.join("test.csv"), &csv).unwrap();
    std::fs::write(
        root.join("candidates.json"),
        r#"[{"id": "ridge", "spec": {"family": "ridge"}, "metric": {"kind": "r-squared"}},
            {"id": "ols", "augment": false, "loo": false, "spec": {"family": "ols"}, "metric": {"kind": "unnormalized-r-squared"}}]"#,
    )
    .unwrap();
    let commands: [&[&str]; 4] = [
        &["fit", "--data", "train.csv", "--test", "test.csv", "--response", "y", "--n-trees", "10", "--seed", "3", "--out", "fit"],
        &["importance", "--model", "fit/forest.json", "--data", "train.csv", "--response", "y", "--methods", "mdi,mdi-r2,mdi-oob,mda,mdi-plus", "--out", "importance"],
        &["stability", "--candidates", "candidates.json", "--train", "train.csv", "--test", "test.csv", "--response", "y", "--n-trees", "10", "--ensemble", "--out", "stability"],
        &["simulate", "--preset", "linear-lss-pve", "--pve", "0.4", "--replicates", "2", "--n", "100", "--n-trees", "4", "--out", "simulate"],
    ];
    let bin = env!("CARGO_BIN_EXE_mdiplus");
    let exec = |args: &[&str]| -> std::result::Result<(), String> {
        let out = Command::new(bin).args(args).current_dir(root).env_remove("MDIPLUS_THREADS").output().unwrap();
        ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    };
    for args in commands {
        exec(args)?;
        let name = args[0];
        let manifest = format!("{name}/manifest.json");
        for threads in ["1", "4"] {
            let out = format!("{name}-replay-{threads}");
            exec(&["--threads", threads, "replay", "--manifest", &manifest, "--out", &out])?;
            same_tree(&root.join(name), &root.join(&out))?;
        }
    }
    Ok("fit, importance, stability and simulate replay byte-identically at 1 and 4 threads".into())
}

fn same_tree(a: &Path, b: &Path) -> std::result::Result<(), String> {
    let list = |d: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    let names = list(a);
    ensure(names == list(b), || format!("{} and {} hold different files", a.display(), b.display()))?;
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        if pa.is_dir() {
            same_tree(&pa, &pb)?;
        } else {
            ensure(std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap(), || format!("{} differs", pb.display()))?;
        }
    }
    Ok(())
}

#[test]
fn acceptance_criteria() {
    let suite = suite();
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Check + '_>)> = vec![
        (1, "MDI equals the R² of OLS on stumps", Box::new(|| criterion_1(&suite))),
        (2, "impurity decrease shortcut identities", Box::new(|| criterion_2(&suite))),
        (3, "stump columns are orthogonal", Box::new(|| criterion_3(&suite))),
        (4, "MDI noise bias is σ²|S_k|/n", Box::new(criterion_4)),
        (5, "LOO coefficients match refits", Box::new(criterion_5)),
        (6, "MDI+ with OLS reduces to MDI", Box::new(|| criterion_6(&suite))),
        (7, "entropy bias removed", Box::new(criterion_7)),
        (8, "correlation bias ordering", Box::new(criterion_8)),
        (9, "AUROC gain on correlated covariates", Box::new(criterion_9)),
        (10, "RF+ predicts at least as well as RF", Box::new(criterion_10)),
        (11, "worked examples", Box::new(criterion_11)),
        (12, "CLI determinism across thread counts", Box::new(criterion_12)),
    ];
    let mut failed = Vec::new();
    for (id, title, check) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {title}: {detail}"),
            Err(why) => {
                println!("criterion {id:>2} FAIL  {title}: {why}");
                failed.push(*id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
