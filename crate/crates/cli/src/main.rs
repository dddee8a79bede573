//! Command-line driver: prior sampling, path simulation, posterior fitting,
//! rate studies, and the certification battery. Every command is a pure
//! function of (config, seed, workers) to output bytes; worker count never
//! changes the bytes.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use circdrift::basis::{self, Expansion};
use circdrift::inference::{self, McmcConfig};
use circdrift::prior;
use circdrift::sdesim;
use circdrift::seeding;
use circdrift::verify;

use config::{
    parse, FitConfig, PriorSampleConfig, RateStudyConfigJson, RegressStudyConfigJson,
    SimulateConfig,
};

#[derive(Parser)]
#[command(name = "circdrift", version, about = "Bayesian drift estimation for periodic diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample drifts from the prior; emit draws, a plot grid, and optionally
    /// a covariance heat map.
    PriorSample(RunArgs),
    /// Simulate a diffusion path; emit a binary dump, summary, and occupation
    /// density.
    Simulate(RunArgs),
    /// Fit the posterior on a path; emit the chain, posterior mean drift, and
    /// credible band.
    Fit(RunArgs),
    /// Posterior-mean error decay over observation horizons.
    RateStudy(RunArgs),
    /// Posterior-mean error decay over regression design sizes.
    RegressStudy(RunArgs),
    /// Run the certification battery; exit nonzero if any check fails.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration document.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores, 1 = sequential). Outputs do not depend
    /// on this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Where to write report.json.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::PriorSample(args) => run_command(&args, cmd_prior_sample),
        Command::Simulate(args) => run_command(&args, cmd_simulate),
        Command::Fit(args) => run_command(&args, cmd_fit),
        Command::RateStudy(args) => run_command(&args, cmd_rate_study),
        Command::RegressStudy(args) => run_command(&args, cmd_regress_study),
        Command::Verify(args) => {
            return match cmd_verify(&args) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::FAILURE,
                Err(err) => {
                    eprintln!("error: {err:#}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run_command(args: &RunArgs, f: impl FnOnce(&RunArgs, &str) -> Result<()>) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    f(args, &text)
}

fn effective_seed(flag: Option<u64>, config: Option<u64>) -> u64 {
    flag.or(config).unwrap_or(0)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string(value)?;
    text.push('\n');
    write_file(dir, name, text.as_bytes())
}

fn cmd_prior_sample(args: &RunArgs, text: &str) -> Result<()> {
    let cfg: PriorSampleConfig = parse(text, "prior-sample")?;
    cfg.prior.validate()?;
    if cfg.grid_points == 0 {
        bail!("config error: grid_points must be >= 1");
    }
    let seed = effective_seed(args.seed, cfg.seed);
    let mut rng = seeding::rng_from_seed(seed);

    let mut cov_cache: Vec<Option<prior::CovMatrix>> = vec![None; cfg.cap as usize + 1];
    let mut draws: Vec<Expansion> = Vec::with_capacity(cfg.draws);
    for _ in 0..cfg.draws {
        let r = prior::sample_truncation(cfg.prior.poisson_rate, &mut rng).min(cfg.cap);
        let s = prior::sample_scale(cfg.prior.scale_shape, cfg.prior.scale_rate, &mut rng);
        let slot = &mut cov_cache[r as usize];
        if slot.is_none() {
            *slot = Some(prior::covariance_matrix(r, &cfg.prior.model)?);
        }
        draws.push(prior::sample_prior(r, s, slot.as_ref().unwrap(), &mut rng)?);
    }
    write_json(&args.out, "draws.json", &draws)?;

    let mut grid_csv = String::from("draw,x,value\n");
    for (d, draw) in draws.iter().enumerate() {
        let interp = draw.interpolant();
        for g in 0..cfg.grid_points {
            let x = g as f64 / cfg.grid_points as f64;
            grid_csv.push_str(&format!("{d},{x},{}\n", interp.eval(x)));
        }
    }
    write_file(&args.out, "draws_grid.csv", grid_csv.as_bytes())?;

    if let Some(heat) = &cfg.heatmap {
        if heat.grid < 2 {
            bail!("config error: heatmap.grid must be >= 2");
        }
        let a = prior::covariance_matrix(heat.cap, &cfg.prior.model)?;
        let n = a.dim();
        let mut psi = DMatrix::zeros(heat.grid, n);
        for g in 0..heat.grid {
            let x = g as f64 / heat.grid as f64;
            for i in 1..=n {
                psi[(g, i - 1)] = basis::eval_basis(i, x);
            }
        }
        let heatmap = &psi * a.entries() * psi.transpose();
        let mut csv = String::from("s,t,cov\n");
        for gs in 0..heat.grid {
            for gt in 0..heat.grid {
                let s = gs as f64 / heat.grid as f64;
                let t = gt as f64 / heat.grid as f64;
                csv.push_str(&format!("{s},{t},{}\n", heatmap[(gs, gt)]));
            }
        }
        write_file(&args.out, "heatmap.csv", csv.as_bytes())?;
    }

    write_json(
        &args.out,
        "summary.json",
        &serde_json::json!({
            "draws": cfg.draws,
            "cap": cfg.cap,
            "seed": seed,
        }),
    )
}

/// Simulation shared by `simulate` and `fit --simulate`; the path rng is
/// child stream 0 of the command seed.
fn simulate_from_config(cfg: &SimulateConfig, seed: u64) -> Result<sdesim::ObservedPath> {
    sdesim::step_count(cfg.t, cfg.dt)?;
    let drift = cfg.truth.drift()?;
    let mut rng = seeding::child_rng(seed, 0);
    Ok(sdesim::simulate_path(|x| drift(x), cfg.x0, cfg.t, cfg.dt, &mut rng)?)
}

fn cmd_simulate(args: &RunArgs, text: &str) -> Result<()> {
    let cfg: SimulateConfig = parse(text, "simulate")?;
    let seed = effective_seed(args.seed, cfg.seed);
    let path = simulate_from_config(&cfg, seed)?;

    if cfg.emit_path {
        let mut buf = Vec::with_capacity(44 + path.values().len() * 8);
        sdesim::write_path(&mut buf, &path, seed)?;
        write_file(&args.out, "path.bin", &buf)?;
    }

    let occ = sdesim::occupation_density(&path, cfg.nbins)?;
    let mut csv = String::from("bin,lower,density\n");
    for (bin, d) in occ.density().iter().enumerate() {
        let lower = bin as f64 / cfg.nbins as f64;
        csv.push_str(&format!("{bin},{lower},{d}\n"));
    }
    write_file(&args.out, "occupation.csv", csv.as_bytes())?;

    write_json(
        &args.out,
        "summary.json",
        &serde_json::json!({
            "t": cfg.t,
            "dt": cfg.dt,
            "x0": cfg.x0,
            "steps": path.steps(),
            "final": path.values().last().unwrap(),
            "seed": seed,
        }),
    )
}

fn cmd_fit(args: &RunArgs, text: &str) -> Result<()> {
    let cfg: FitConfig = parse(text, "fit")?;
    cfg.prior.validate()?;
    let params = cfg.mcmc.params()?;
    if cfg.grid_cap < params.r_max {
        bail!("config error: grid_cap must be at least mcmc.r_max");
    }
    let seed = effective_seed(args.seed, cfg.seed);

    let path = match (&cfg.path_file, &cfg.simulate) {
        (Some(file), None) => {
            let bytes = fs::read(file).with_context(|| format!("reading path file {file}"))?;
            sdesim::read_path(&mut bytes.as_slice())?.0
        }
        (None, Some(sim)) => simulate_from_config(sim, seed)?,
        _ => bail!("config error: fit needs exactly one of path_file or simulate"),
    };

    let stats =
        inference::SufficientStats::from_path_with_workers(&path, params.r_max, args.workers);
    let mut rng = seeding::child_rng(seed, 1);
    let run = inference::mcmc_run_with(
        &stats,
        &cfg.prior,
        &McmcConfig::new(params.iters, params.r_max, params.step_s),
        &mut rng,
    )?;

    let mut chain_csv = String::from("iter,r,s,log_marginal\n");
    for (iter, st) in run.states.iter().enumerate() {
        chain_csv.push_str(&format!("{iter},{},{},{}\n", st.r, st.s, st.log_marginal));
    }
    write_file(&args.out, "chain.csv", chain_csv.as_bytes())?;

    let mean = inference::posterior_mean_drift(&run.states, params.burn_in, cfg.grid_cap)?;
    write_json(&args.out, "posterior_mean.json", &mean)?;

    let band_cfg = cfg.band.unwrap_or_default();
    let (lo, hi) =
        inference::credible_band(&run.states, params.burn_in, band_cfg.q, band_cfg.ngrid)?;
    let mut band_csv = String::from("x,lower,upper\n");
    for g in 0..=band_cfg.ngrid {
        let x = g as f64 / band_cfg.ngrid as f64;
        band_csv.push_str(&format!("{x},{},{}\n", lo[g], hi[g]));
    }
    write_file(&args.out, "band.csv", band_csv.as_bytes())?;

    let kept = &run.states[params.burn_in..];
    let mean_r = kept.iter().map(|st| st.r as f64).sum::<f64>() / kept.len() as f64;
    let mean_s = kept.iter().map(|st| st.s).sum::<f64>() / kept.len() as f64;
    let mut r_counts = std::collections::BTreeMap::new();
    for st in kept {
        *r_counts.entry(st.r).or_insert(0usize) += 1;
    }
    let mode_r = r_counts
        .iter()
        .max_by_key(|(_, &count)| count)
        .map(|(&r, _)| r)
        .unwrap_or(0);
    write_json(
        &args.out,
        "fit_summary.json",
        &serde_json::json!({
            "accept_r": run.accept_r,
            "accept_s": run.accept_s,
            "mean_r": mean_r,
            "mode_r": mode_r,
            "mean_s": mean_s,
            "iters": params.iters,
            "burn_in": params.burn_in,
            "seed": seed,
        }),
    )
}

fn write_rate_outputs(out: &Path, table: &circdrift::experiments::RateTable) -> Result<()> {
    let mut csv = String::from("T,replicate,p,error\n");
    for row in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.size, row.replicate, row.p, row.error
        ));
    }
    write_file(out, "rates.csv", csv.as_bytes())?;

    let slopes: Vec<serde_json::Value> = table
        .slopes
        .iter()
        .map(|s| {
            serde_json::json!({
                "p": format!("{}", s.p),
                "fitted": s.fitted,
                "target": s.target,
            })
        })
        .collect();
    let failures: Vec<serde_json::Value> = table
        .failures
        .iter()
        .map(|f| {
            serde_json::json!({
                "size": f.size,
                "replicate": f.replicate,
                "message": f.message,
            })
        })
        .collect();
    write_json(
        out,
        "summary.json",
        &serde_json::json!({
            "slopes": slopes,
            "failures": failures,
        }),
    )
}

fn cmd_rate_study(args: &RunArgs, text: &str) -> Result<()> {
    let cfg: RateStudyConfigJson = parse(text, "rate-study")?;
    let seed = effective_seed(args.seed, cfg.seed);
    let study = cfg.build(seed)?;
    let table = circdrift::experiments::contraction_study(&study, args.workers)?;
    write_rate_outputs(&args.out, &table)
}

fn cmd_regress_study(args: &RunArgs, text: &str) -> Result<()> {
    let cfg: RegressStudyConfigJson = parse(text, "regress-study")?;
    let seed = effective_seed(args.seed, cfg.seed);
    let study = cfg.build(seed)?;
    let table = circdrift::experiments::regression_study(&study, args.workers)?;
    write_rate_outputs(&args.out, &table)
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let seed = args.seed.unwrap_or(verify::DEFAULT_SEED);
    let reports = verify::run_all(seed, args.workers);
    let mut stdout = std::io::stdout().lock();
    for report in &reports {
        writeln!(
            stdout,
            "{} {} (worst margin {:.3e})",
            if report.passed { "PASS" } else { "FAIL" },
            report.name,
            report.worst_margin
        )?;
    }
    write_json(&args.out, "report.json", &reports)?;
    Ok(verify::all_passed(&reports))
}
