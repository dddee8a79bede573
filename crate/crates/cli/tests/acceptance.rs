//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its runtime. Tolerances and budgets are pinned in code.
//!
//! The full-size rate study (criterion 5/6, 20 replicates out to T = 16000)
//! runs by default and takes a few minutes; the smoke variant covers the same
//! pipeline in under a minute.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use circdrift::basis::Expansion;
use circdrift::experiments::{
    self, make_truth, McmcParams, RateStudyConfig, RegressionStudyConfig,
};
use circdrift::inference::{
    conditional_posterior, log_marginal, mcmc_run_with, McmcConfig, SufficientStats,
};
use circdrift::prior::{
    covariance_matrix, precision_matrix, scale_log_density, truncation_log_pmf, CovModel,
    PriorSpec,
};
use circdrift::sdesim::simulate_path;
use circdrift::seeding;
use circdrift::verify;

fn standard_truth() -> Expansion {
    make_truth(1.0, 1.0, 10, 2024)
}

fn standard_prior() -> PriorSpec {
    PriorSpec::with_default_scale(CovModel::Independent { alpha: 0.5 }, 4.0)
}

/// The pinned test path used across the sampler-facing criteria.
fn standard_test_path() -> circdrift::sdesim::ObservedPath {
    let truth = standard_truth();
    let drift = truth.interpolant();
    let mut rng = seeding::rng_from_seed(4242);
    simulate_path(|x| drift.eval(x), 0.0, 4000.0, 1e-3, &mut rng).expect("simulation")
}

fn finish(name: &str, start: Instant, budget: Duration) {
    let elapsed = start.elapsed();
    println!("{name}: PASS in {elapsed:.2?}");
    assert!(
        elapsed < budget,
        "{name} exceeded its runtime budget: {elapsed:?} > {budget:?}"
    );
}

#[test]
fn criterion_1_lemma2_certification() {
    let start = Instant::now();
    for gamma in [0.5, 1.0, 1.48, 1.5] {
        let report = verify::check_cov_bounds(gamma, 1.0, 10);
        assert!(
            report.passed && report.worst_margin > 0.0,
            "gamma={gamma}: {report:?}"
        );
        println!("  gamma={gamma}: worst margin {:.3e} ({})", report.worst_margin, report.details);
    }
    finish("criterion 1 (covariance bound certification)", start, Duration::from_secs(10));
}

#[test]
fn criterion_2_precision_sparsity() {
    let start = Instant::now();
    // Zeros at 1e-8 relative on the deepest scan.
    for (gamma, r) in [(1.0, 6u32), (0.5, 6)] {
        let report = verify::check_precision_sparsity(gamma, 1.0, r, 1e-8, 1e-8);
        assert!(report.passed, "gamma={gamma}, r={r}: {report:?}");
    }
    // Nested witness above 1e-4 relative per level on the shallow scan.
    let report = verify::check_precision_sparsity(1.0, 1.0, 4, 1e-8, 1e-4);
    assert!(report.passed, "{report:?}");
    println!("  witness margin at r=4: {:.3e}", report.worst_margin);
    finish("criterion 2 (precision sparsity)", start, Duration::from_secs(5));
}

#[test]
fn criterion_3_conjugacy_against_quadrature() {
    let start = Instant::now();
    let mut rng = seeding::rng_from_seed(303);
    let path = simulate_path(
        |x| (2.0 * std::f64::consts::PI * x).sin(),
        0.2,
        50.0,
        1e-3,
        &mut rng,
    )
    .expect("simulation");
    let stats = SufficientStats::from_path(&path, 0);
    let a = covariance_matrix(0, &CovModel::Ou { gamma: 1.0, sigma2: 1.0 }).expect("SPD");
    let s = 0.8;
    let post = conditional_posterior(&stats, s, &a).expect("posterior");
    let lm = log_marginal(&stats, s, &a).expect("marginal");
    let cov_impl = post.covariance().expect("covariance");

    // Midpoint quadrature of likelihood x prior over an 8-sigma box.
    let n = 400usize;
    let half = 8.0 * cov_impl[(0, 0)].max(cov_impl[(1, 1)]).sqrt();
    let gamma_prior = precision_matrix(&a).expect("precision");
    let g = stats.gram_dense();
    let mu = DVector::from_column_slice(stats.mu());
    let cell = 2.0 * half / n as f64;
    let mut logw = Vec::with_capacity(n * n);
    let mut zs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let z = DVector::from_column_slice(&[
                post.mean[0] - half + (i as f64 + 0.5) * cell,
                post.mean[1] - half + (j as f64 + 0.5) * cell,
            ]);
            let loglik = s * z.dot(&mu) - 0.5 * s * s * z.dot(&(&g * &z));
            let logprior = -0.5 * z.dot(&(&gamma_prior * &z))
                - 0.5 * a.logdet()
                - (2.0 * std::f64::consts::PI).ln();
            logw.push(loglik + logprior);
            zs.push(z);
        }
    }
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let wsum: f64 = logw.iter().map(|lw| (lw - m).exp()).sum();
    let lm_quad = m + wsum.ln() + (cell * cell).ln();
    let mut mean_q = DVector::zeros(2);
    for (lw, z) in logw.iter().zip(&zs) {
        mean_q += z * (lw - m).exp();
    }
    mean_q /= wsum;
    let mut cov_q = DMatrix::zeros(2, 2);
    for (lw, z) in logw.iter().zip(&zs) {
        let d = z - &mean_q;
        cov_q += &d * d.transpose() * (lw - m).exp();
    }
    cov_q /= wsum;

    let scale = cov_impl[(0, 0)].max(cov_impl[(1, 1)]);
    for i in 0..2 {
        let rel = (post.mean[i] - mean_q[i]).abs() / scale.sqrt();
        assert!(rel < 2e-3, "mean[{i}] off by {rel:.2e} relative");
        for j in 0..2 {
            let rel = (cov_impl[(i, j)] - cov_q[(i, j)]).abs() / scale;
            assert!(rel < 2e-3, "cov[{i},{j}] off by {rel:.2e} relative");
        }
    }
    let lm_diff = (lm - lm_quad).abs();
    assert!(lm_diff < 1e-4, "log marginal off by {lm_diff:.2e}");
    println!("  log-marginal agreement: {lm_diff:.2e}");
    finish("criterion 3 (conjugacy vs 2-d quadrature)", start, Duration::from_secs(60));
}

#[test]
fn criterion_4_mcmc_matches_enumeration() {
    let start = Instant::now();
    let path = standard_test_path();
    let stats = SufficientStats::from_path(&path, 4);
    let spec = standard_prior();

    // Exhaustively enumerated posterior over r in 0..=4 and 40 log-spaced
    // scale bins, quadrature within each bin.
    let nbins = 40usize;
    let (s_lo, s_hi) = (0.05_f64, 20.0_f64);
    let edges: Vec<f64> = (0..=nbins)
        .map(|b| s_lo * (s_hi / s_lo).powf(b as f64 / nbins as f64))
        .collect();
    let sub = 8usize;
    let mut log_mass = vec![f64::NEG_INFINITY; 5 * nbins];
    for r in 0..=4u32 {
        let ar = covariance_matrix(r, &spec.model).expect("SPD");
        let sr = stats.restrict(r).expect("restriction");
        let lpmf = truncation_log_pmf(r, spec.poisson_rate);
        for b in 0..nbins {
            let (e0, e1) = (edges[b], edges[b + 1]);
            let step = (e1 - e0) / sub as f64;
            let terms: Vec<f64> = (0..sub)
                .map(|q| {
                    let sv = e0 + (q as f64 + 0.5) * step;
                    log_marginal(&sr, sv, &ar).expect("marginal")
                        + lpmf
                        + scale_log_density(sv, spec.scale_shape, spec.scale_rate).expect("density")
                        + step.ln()
                })
                .collect();
            let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            log_mass[r as usize * nbins + b] =
                mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln();
        }
    }
    let mx = log_mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_mass.iter().map(|lm| (lm - mx).exp()).sum();
    let probs: Vec<f64> = log_mass.iter().map(|lm| (lm - mx).exp() / z).collect();

    // Chain occupancy over 1e5 kept iterations.
    let mut rng = seeding::rng_from_seed(606);
    let run = mcmc_run_with(&stats, &spec, &McmcConfig::new(102_000, 4, 0.3), &mut rng)
        .expect("chain");
    let kept = &run.states[2000..];
    let mut counts = vec![0u64; 5 * nbins];
    for st in kept {
        let b = ((st.s / s_lo).ln() / (s_hi / s_lo).ln() * nbins as f64).floor();
        let b = (b.max(0.0) as usize).min(nbins - 1);
        counts[st.r as usize * nbins + b] += 1;
    }
    let total = kept.len() as f64;
    let tv: f64 = 0.5
        * probs
            .iter()
            .zip(&counts)
            .map(|(p, &c)| (p - c as f64 / total).abs())
            .sum::<f64>();
    println!("  total variation chain vs enumeration: {tv:.4}");
    assert!(tv <= 0.05, "TV {tv} above 0.05");

    // Pinned tuning facts on the same path: s-move acceptance in (0.1, 0.7),
    // posterior mode of r at least 2.
    assert!(
        run.accept_s > 0.1 && run.accept_s < 0.7,
        "s acceptance {} outside (0.1, 0.7)",
        run.accept_s
    );
    let mut r_counts = [0usize; 5];
    for st in kept {
        r_counts[st.r as usize] += 1;
    }
    let mode_r = (0..5).max_by_key(|&r| r_counts[r]).unwrap();
    assert!(mode_r >= 2, "posterior mode of r is {mode_r}");
    finish("criterion 4 (chain vs enumerated posterior)", start, Duration::from_secs(300));
}

fn diffusion_study_config(horizons: Vec<f64>, replicates: usize) -> RateStudyConfig {
    RateStudyConfig {
        truth: standard_truth(),
        beta: 1.0,
        horizons,
        replicates,
        dt: 1e-3,
        x0: 0.0,
        prior: standard_prior(),
        mcmc: McmcParams {
            iters: 3000,
            burn_in: 500,
            step_s: 0.3,
            r_max: 8,
        },
        norms: vec![2.0, f64::INFINITY],
        grid_cap: 10,
        seed: 31415,
    }
}

fn assert_decreasing(means: &[(f64, f64)], what: &str) {
    for w in means.windows(2) {
        assert!(
            w[1].1 < w[0].1,
            "{what}: mean error not decreasing: {means:?}"
        );
    }
}

#[test]
fn criterion_5_and_6_rate_study_smoke() {
    let start = Instant::now();
    let cfg = diffusion_study_config(vec![250.0, 1000.0, 4000.0], 5);
    let table = experiments::contraction_study(&cfg, 0).expect("study");
    assert!(table.failures.is_empty(), "failures: {:?}", table.failures);
    let l2 = table.slopes.iter().find(|s| s.p == 2.0).unwrap();
    println!("  smoke L2 slope {:.4} (target {:.4})", l2.fitted, l2.target);
    assert!(
        (l2.fitted - l2.target).abs() <= 0.25,
        "smoke L2 slope {} not within 0.25 of {}",
        l2.fitted,
        l2.target
    );
    assert_decreasing(&table.mean_errors(2.0), "smoke L2");
    // Smoke-scale surrogate of the sup-norm criterion; the stated +/-0.2
    // tolerance applies to the full-size study below.
    let linf = table.slopes.iter().find(|s| s.p.is_infinite()).unwrap();
    println!("  smoke Linf slope {:.4} (target {:.4})", linf.fitted, linf.target);
    assert!(
        (linf.fitted - linf.target).abs() <= 0.25,
        "smoke Linf slope {} not within 0.25 of {}",
        linf.fitted,
        linf.target
    );
    finish("criterion 5/6 smoke (rate study)", start, Duration::from_secs(1200));
}

#[test]
fn criterion_5_and_6_rate_study_full() {
    let start = Instant::now();
    let cfg = diffusion_study_config(vec![250.0, 1000.0, 4000.0, 16000.0], 20);
    let table = experiments::contraction_study(&cfg, 0).expect("study");
    assert!(table.failures.is_empty(), "failures: {:?}", table.failures);

    let l2 = table.slopes.iter().find(|s| s.p == 2.0).unwrap();
    println!("  full L2 slope {:.4} (target {:.4})", l2.fitted, l2.target);
    assert!(
        (l2.fitted - l2.target).abs() <= 0.15,
        "criterion 5: L2 slope {} not within 0.15 of {}",
        l2.fitted,
        l2.target
    );
    assert_decreasing(&table.mean_errors(2.0), "full L2");

    let linf = table.slopes.iter().find(|s| s.p.is_infinite()).unwrap();
    println!("  full Linf slope {:.4} (target {:.4})", linf.fitted, linf.target);
    assert!(
        (linf.fitted - linf.target).abs() <= 0.2,
        "criterion 6: Linf slope {} not within 0.2 of {}",
        linf.fitted,
        linf.target
    );
    finish("criterion 5/6 full (rate study)", start, Duration::from_secs(3600));
}

#[test]
fn criterion_7_regression_rate_study() {
    let start = Instant::now();
    let cfg = RegressionStudyConfig {
        truth: standard_truth(),
        beta: 1.0,
        sizes: vec![250, 1000, 4000, 16000],
        replicates: 10,
        noise_sd: 1.0,
        prior: standard_prior(),
        mcmc: McmcParams {
            iters: 3000,
            burn_in: 500,
            step_s: 0.3,
            r_max: 8,
        },
        norms: vec![2.0],
        grid_cap: 10,
        seed: 777,
    };
    let table = experiments::regression_study(&cfg, 0).expect("study");
    assert!(table.failures.is_empty(), "failures: {:?}", table.failures);
    let l2 = table.slopes.iter().find(|s| s.p == 2.0).unwrap();
    println!("  regression L2 slope {:.4} (target {:.4})", l2.fitted, l2.target);
    assert!(
        (l2.fitted - l2.target).abs() <= 0.15,
        "regression slope {} not within 0.15 of {}",
        l2.fitted,
        l2.target
    );
    finish("criterion 7 (regression rate study)", start, Duration::from_secs(1800));
}

#[test]
fn criterion_8_lemma_suite_and_mutation() {
    let start = Instant::now();
    let reports = verify::run_all(verify::DEFAULT_SEED, 0);
    for report in &reports {
        assert!(report.passed, "{}: {}", report.name, report.details);
    }
    println!("  {} checks passed", reports.len());

    // Mutation: a corrupted bound constant must make the scan fail.
    let consts = verify::CovBoundConstants {
        diag_lower: 0.99,
        ..verify::CovBoundConstants::default()
    };
    let mutated = verify::check_cov_bounds_with(consts, 1.5, 1.0, 6, 0);
    assert!(
        !mutated.passed,
        "mutated diagonal constant unexpectedly passed: {mutated:?}"
    );
    println!("  mutation check failed as expected ({})", mutated.details);
    finish("criterion 8 (analytic check battery)", start, Duration::from_secs(120));
}

// ---------------------------------------------------------------------------
// Criterion 9: byte determinism of every command across reruns and worker
// counts.
// ---------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_circdrift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).expect("file"),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn criterion_9_output_determinism() {
    let start = Instant::now();
    let root = tempfile::tempdir().expect("tempdir");
    let dir = root.path();

    let sim_cfg = dir.join("sim.json");
    std::fs::write(
        &sim_cfg,
        r#"{"truth":{"type":"sine","amplitude":1.0},"x0":0.0,"t":20.0,"dt":0.001,"emit_path":true,"nbins":20}"#,
    )
    .unwrap();
    let fit_cfg = dir.join("fit.json");
    std::fs::write(
        &fit_cfg,
        format!(
            r#"{{"prior":{{"model":{{"type":"independent","alpha":0.5}},"poisson_rate":4.0,"scale_shape":2.0,"scale_rate":1.0}},"path_file":"{}","mcmc":{{"iters":400,"burn_in":100,"step_s":0.3,"r_max":3}},"band":{{"q":0.9,"ngrid":16}},"grid_cap":5}}"#,
            dir.join("sim_a").join("path.bin").display()
        ),
    )
    .unwrap();
    let rate_cfg = dir.join("rate.json");
    std::fs::write(
        &rate_cfg,
        r#"{"truth":{"type":"besov","beta":1.0,"seminorm":1.0,"cap":6,"seed":99},"beta":1.0,"horizons":[20.0,50.0],"replicates":2,"dt":0.01,"x0":0.0,"prior":{"model":{"type":"independent","alpha":0.5},"poisson_rate":4.0,"scale_shape":2.0,"scale_rate":1.0},"mcmc":{"iters":200,"burn_in":50,"step_s":0.3,"r_max":3},"norms":[2,"inf"],"grid_cap":6}"#,
    )
    .unwrap();
    let prior_cfg = dir.join("prior.json");
    std::fs::write(
        &prior_cfg,
        r#"{"prior":{"model":{"type":"ou","gamma":1.48,"sigma2":1.0},"poisson_rate":4.0,"scale_shape":2.0,"scale_rate":1.0},"draws":4,"cap":5,"grid_points":32,"heatmap":{"cap":6,"grid":8}}"#,
    )
    .unwrap();

    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "sim",
            vec![
                "simulate".into(),
                "--config".into(),
                sim_cfg.display().to_string(),
                "--seed".into(),
                "11".into(),
            ],
        ),
        (
            "fit",
            vec![
                "fit".into(),
                "--config".into(),
                fit_cfg.display().to_string(),
                "--seed".into(),
                "12".into(),
            ],
        ),
        (
            "rate",
            vec![
                "rate-study".into(),
                "--config".into(),
                rate_cfg.display().to_string(),
                "--seed".into(),
                "13".into(),
            ],
        ),
        (
            "prior",
            vec![
                "prior-sample".into(),
                "--config".into(),
                prior_cfg.display().to_string(),
                "--seed".into(),
                "14".into(),
            ],
        ),
        (
            "verify",
            vec!["verify".into(), "--seed".into(), "0".into()],
        ),
    ];

    for (name, base_args) in &runs {
        // Rerun with identical arguments, then once more with a different
        // worker count; every output byte must match.
        let variants = [("a", "1"), ("b", "1"), ("c", "3")];
        let mut captured: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
        for (tag, workers) in variants {
            let out_dir = dir.join(format!("{name}_{tag}"));
            let mut args: Vec<String> = base_args.clone();
            args.push("--workers".into());
            args.push(workers.into());
            args.push("--out".into());
            args.push(out_dir.display().to_string());
            let argv: Vec<&str> = args.iter().map(String::as_str).collect();
            let output = run_cli(&argv);
            assert!(
                output.status.success(),
                "{name} ({tag}) failed: {}",
                String::from_utf8_lossy(&output.stderr)
            );
            captured.push(read_dir_bytes(&out_dir));
        }
        assert_eq!(captured[0], captured[1], "{name}: rerun changed bytes");
        assert_eq!(captured[0], captured[2], "{name}: worker count changed bytes");
        println!("  {name}: byte-identical across reruns and worker counts");
    }
    finish("criterion 9 (output determinism)", start, Duration::from_secs(600));
}
