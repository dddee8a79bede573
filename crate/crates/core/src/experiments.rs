//! End-to-end rate studies: how fast does the posterior mean drift approach
//! the truth as the observation horizon (or design size) grows?
//!
//! For a `beta`-smooth truth the `L^2` error should decay like
//! `T^{-beta/(1+2beta)}` up to log factors, and the `L^p` error (`p > 2`)
//! like `T^{-(beta-1/2+1/p)/(1+2beta)}`; log factors are ignored in the slope
//! targets. Studies are embarrassingly parallel over `(size, replicate)`
//! jobs, each job seeded from the master seed by its job index, and results
//! merge in job order, so output bytes never depend on the worker count.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{self, Expansion};
use crate::inference::{self, McmcConfig, McmcRun, SufficientStats};
use crate::par;
use crate::prior::PriorSpec;
use crate::sdesim;
use crate::seeding;
use crate::{Error, Result};

/// Predicted log-log error slope for a `beta`-smooth truth in `L^p`.
///
/// `p = 2` gives `-beta / (1 + 2 beta)`; `p > 2` (including infinity) gives
/// `-(beta - 1/2 + 1/p) / (1 + 2 beta)`.
pub fn target_slope(beta: f64, p: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParam(format!("beta must be > 0, got {beta}")));
    }
    if p.is_nan() || p < 2.0 {
        return Err(Error::InvalidParam(format!("slope target needs p >= 2, got {p}")));
    }
    if p == 2.0 {
        Ok(-beta / (1.0 + 2.0 * beta))
    } else {
        let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
        Ok(-(beta - 0.5 + inv_p) / (1.0 + 2.0 * beta))
    }
}

/// Synthetic truth with exactly the prescribed smoothness: coefficients
/// `z_i = seminorm * 2^{-beta * level(i)} * u_i` with random signs, so the
/// seminorm is attained at every level.
pub fn make_truth(beta: f64, seminorm: f64, cap: u32, seed: u64) -> Expansion {
    let mut rng = seeding::rng_from_seed(seed);
    let n = basis::index_count(cap);
    let coeffs = (1..=n)
        .map(|i| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * seminorm * (-(beta * basis::level(i) as f64)).exp2()
        })
        .collect();
    Expansion::new(cap, coeffs).expect("coefficient count matches cap")
}

/// Sampler parameters shared by both study kinds.
#[derive(Clone, Copy, Debug)]
pub struct McmcParams {
    pub iters: usize,
    pub burn_in: usize,
    pub step_s: f64,
    pub r_max: u32,
}

impl McmcParams {
    fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iters {
            return Err(Error::Config(format!(
                "burn_in {} must be below iters {}",
                self.burn_in, self.iters
            )));
        }
        Ok(())
    }
}

/// Diffusion rate-study configuration.
#[derive(Clone, Debug)]
pub struct RateStudyConfig {
    pub truth: Expansion,
    pub beta: f64,
    pub horizons: Vec<f64>,
    pub replicates: usize,
    pub dt: f64,
    pub x0: f64,
    pub prior: PriorSpec,
    pub mcmc: McmcParams,
    pub norms: Vec<f64>,
    pub grid_cap: u32,
    pub seed: u64,
}

/// Fixed-design regression study configuration.
#[derive(Clone, Debug)]
pub struct RegressionStudyConfig {
    pub truth: Expansion,
    pub beta: f64,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub noise_sd: f64,
    pub prior: PriorSpec,
    pub mcmc: McmcParams,
    pub norms: Vec<f64>,
    pub grid_cap: u32,
    pub seed: u64,
}

/// One study measurement: error of the posterior mean in `L^p` at one
/// `(size, replicate)` cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub size: f64,
    pub replicate: usize,
    pub p: f64,
    pub error: f64,
}

/// Fitted versus predicted slope for one norm order.
#[derive(Clone, Copy, Debug)]
pub struct SlopeFit {
    pub p: f64,
    pub fitted: f64,
    pub target: f64,
}

/// A job that failed; the study continues without it.
#[derive(Clone, Debug)]
pub struct StudyFailure {
    pub size: f64,
    pub replicate: usize,
    pub message: String,
}

/// Study output: raw rows, per-norm slope fits, recorded failures.
#[derive(Clone, Debug)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub slopes: Vec<SlopeFit>,
    pub failures: Vec<StudyFailure>,
}

impl RateTable {
    /// Replicate-mean errors per size for norm order `p`, in size order.
    pub fn mean_errors(&self, p: f64) -> Vec<(f64, f64)> {
        let mut sizes: Vec<f64> = self
            .rows
            .iter()
            .filter(|row| row.p == p)
            .map(|row| row.size)
            .collect();
        sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sizes.dedup();
        sizes
            .into_iter()
            .map(|size| {
                let errs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|row| row.p == p && row.size == size)
                    .map(|row| row.error)
                    .collect();
                (size, errs.iter().sum::<f64>() / errs.len() as f64)
            })
            .collect()
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn validate_norms(norms: &[f64]) -> Result<()> {
    if norms.is_empty() {
        return Err(Error::Config("study needs at least one norm order".into()));
    }
    for &p in norms {
        if p.is_nan() || p < 2.0 {
            return Err(Error::Config(format!("norm orders must be in [2, inf], got {p}")));
        }
    }
    Ok(())
}

fn validate_increasing(sizes: &[f64]) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::Config("study needs a nonempty size grid".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("study sizes must be strictly increasing".into()));
    }
    Ok(())
}

/// Shared study driver: one MCMC fit per `(size, replicate)` cell, error rows
/// per requested norm, slopes fitted on replicate-mean errors.
fn run_study<F>(
    sizes: &[f64],
    replicates: usize,
    truth: &Expansion,
    beta: f64,
    norms: &[f64],
    mcmc: &McmcParams,
    grid_cap: u32,
    seed: u64,
    workers: usize,
    fit_one: F,
) -> Result<RateTable>
where
    F: Fn(f64, u64) -> Result<McmcRun> + Sync,
{
    validate_increasing(sizes)?;
    validate_norms(norms)?;
    mcmc.validate()?;
    if replicates == 0 {
        return Err(Error::Config("study needs replicates >= 1".into()));
    }
    if grid_cap < mcmc.r_max {
        return Err(Error::Config(format!(
            "grid_cap {grid_cap} must be at least r_max {}",
            mcmc.r_max
        )));
    }

    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|t_idx| (0..replicates).map(move |rep| (t_idx, rep)))
        .collect();

    let results = par::map_indexed(&jobs, workers, |job_idx, &(t_idx, rep)| {
        let size = sizes[t_idx];
        let run = fit_one(size, seeding::child_seed(seed, job_idx as u64))?;
        let mean = inference::posterior_mean_drift(&run.states, mcmc.burn_in, grid_cap)?;
        let diff = mean.sub(truth);
        let mut rows = Vec::with_capacity(norms.len());
        for &p in norms {
            rows.push(RateRow {
                size,
                replicate: rep,
                p,
                error: diff.norm(p)?,
            });
        }
        Ok::<Vec<RateRow>, Error>(rows)
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(t_idx, rep), result) in jobs.iter().zip(results) {
        match result {
            Ok(mut job_rows) => rows.append(&mut job_rows),
            Err(err) => failures.push(StudyFailure {
                size: sizes[t_idx],
                replicate: rep,
                message: err.to_string(),
            }),
        }
    }

    let table = RateTable {
        rows,
        slopes: Vec::new(),
        failures,
    };
    let slopes = norms
        .iter()
        .map(|&p| {
            Ok(SlopeFit {
                p,
                fitted: fit_loglog_slope(&table.mean_errors(p)),
                target: target_slope(beta, p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateTable { slopes, ..table })
}

/// Diffusion contraction study: simulate a path from the truth at each
/// horizon, fit the posterior, record `L^p` errors of the posterior mean.
pub fn contraction_study(cfg: &RateStudyConfig, workers: usize) -> Result<RateTable> {
    cfg.prior.validate()?;
    for &t in &cfg.horizons {
        sdesim::step_count(t, cfg.dt)?;
    }
    let drift = cfg.truth.interpolant();
    let fit_one = |t: f64, job_seed: u64| -> Result<McmcRun> {
        let mut rng = seeding::rng_from_seed(job_seed);
        let path = sdesim::simulate_path(|x| drift.eval(x), cfg.x0, t, cfg.dt, &mut rng)?;
        let stats = SufficientStats::from_path_with_workers(&path, cfg.mcmc.r_max, 1);
        inference::mcmc_run_with(
            &stats,
            &cfg.prior,
            &McmcConfig::new(cfg.mcmc.iters, cfg.mcmc.r_max, cfg.mcmc.step_s),
            &mut rng,
        )
    };
    run_study(
        &cfg.horizons,
        cfg.replicates,
        &cfg.truth,
        cfg.beta,
        &cfg.norms,
        &cfg.mcmc,
        cfg.grid_cap,
        cfg.seed,
        workers,
        fit_one,
    )
}

/// Fixed-design observations `y_i = b0(i/n) + noise_sd * N(0,1)` at
/// `x_i = i/n`, `i = 0..=n`.
pub fn regression_simulate<R: Rng + ?Sized>(
    b0: &Expansion,
    n: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidParam("regression design needs n >= 1".into()));
    }
    if noise_sd < 0.0 {
        return Err(Error::InvalidParam(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    let interp = b0.interpolant();
    let mut xs = Vec::with_capacity(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = i as f64 / n as f64;
        let eta: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(interp.eval(x) + noise_sd * eta);
    }
    Ok((xs, ys))
}

/// Posterior sampling for the regression model: same marginal sampler as the
/// diffusion case, with design-based sufficient statistics (`noise_var` is
/// treated as known).
pub fn regression_fit(
    xs: &[f64],
    ys: &[f64],
    noise_var: f64,
    spec: &PriorSpec,
    mcmc: &McmcParams,
    rng: &mut (impl Rng + ?Sized),
) -> Result<McmcRun> {
    let stats = SufficientStats::from_design(xs, ys, noise_var, mcmc.r_max)?;
    inference::mcmc_run_with(
        &stats,
        spec,
        &McmcConfig::new(mcmc.iters, mcmc.r_max, mcmc.step_s),
        rng,
    )
}

/// Regression rate study over design sizes.
pub fn regression_study(cfg: &RegressionStudyConfig, workers: usize) -> Result<RateTable> {
    cfg.prior.validate()?;
    if !(cfg.noise_sd > 0.0) {
        return Err(Error::Config(format!(
            "regression study needs noise_sd > 0, got {}",
            cfg.noise_sd
        )));
    }
    let sizes: Vec<f64> = cfg.sizes.iter().map(|&n| n as f64).collect();
    let fit_one = |size: f64, job_seed: u64| -> Result<McmcRun> {
        let mut rng = seeding::rng_from_seed(job_seed);
        let (xs, ys) = regression_simulate(&cfg.truth, size as usize, cfg.noise_sd, &mut rng)?;
        regression_fit(
            &xs,
            &ys,
            cfg.noise_sd * cfg.noise_sd,
            &cfg.prior,
            &cfg.mcmc,
            &mut rng,
        )
    };
    run_study(
        &sizes,
        cfg.replicates,
        &cfg.truth,
        cfg.beta,
        &cfg.norms,
        &cfg.mcmc,
        cfg.grid_cap,
        cfg.seed,
        workers,
        fit_one,
    )
}
