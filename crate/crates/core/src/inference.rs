//! Conjugate inference for the series drift model.
//!
//! The log-likelihood of a drift `s * sum_i z_i psi_i` is
//! `s z' mu - s^2/2 z' G z` with path functionals `mu_i = int psi_i(X_t) dX_t`
//! and Grammian `G_{ii'} = int psi_i(X_t) psi_{i'}(X_t) dt`. Given the
//! truncation level `r` and scale `s`, the coefficient posterior is
//! `N(W^{-1} s mu, W^{-1})` with `W = s^2 G + A^{-1}`, and the marginal
//! likelihood over the coefficients is Gaussian in closed form. The sampler
//! below walks `(r, s)` by Metropolis on that marginal and draws coefficients
//! exactly from their conditional, which targets the same posterior as a
//! reversible-jump scheme on the joint space but keeps every move testable
//! against enumeration.
//!
//! Sufficient statistics store only structurally nonzero Grammian entries:
//! two hats interact only when one support contains the other, so each deeper
//! element pairs with exactly one ancestor per shallower level. Statistics are
//! accumulated over fixed-size chunks of the time grid merged in order, which
//! makes the result bit-identical for any worker count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{self, hat, wrap_unit, Expansion};
use crate::par;
use crate::prior::{self, CovMatrix, PriorSpec};
use crate::sdesim::ObservedPath;
use crate::{Error, Result};

/// Fixed accumulation chunk (in grid steps); part of the determinism
/// contract, do not derive it from the worker count.
const CHUNK_STEPS: usize = 1 << 15;

/// Slot layout: slot 0 is `psi_1`, slot 1 is `psi_{0,1}`, slot `s >= 2` holds
/// the `2^{s-1}` hats of level `s - 1`.
#[inline]
fn slot_count(r: u32) -> usize {
    r as usize + 2
}

#[inline]
fn slot_width(slot: usize) -> usize {
    if slot <= 1 {
        1
    } else {
        1usize << (slot - 1)
    }
}

/// Flat basis index of element `k` (1-based) in `slot`.
#[inline]
fn slot_flat(slot: usize, k: usize) -> usize {
    match slot {
        0 => 1,
        1 => 2,
        _ => (1usize << (slot - 1)) + k,
    }
}

/// Slot and position of flat index `i`.
#[inline]
fn slot_of(i: usize) -> (usize, usize) {
    match i {
        1 => (0, 1),
        2 => (1, 1),
        _ => {
            let (j, k) = basis::double_index(i);
            (j as usize + 1, k)
        }
    }
}

#[inline]
fn panel_index(lo: usize, hi: usize) -> usize {
    debug_assert!(lo <= hi);
    hi * (hi + 1) / 2 + lo
}

/// Sufficient statistics `(mu, G)` of a path (or design) at level cap `r`.
///
/// `panels[panel_index(lo, hi)][k-1]` holds the Grammian entry between the
/// `k`-th element of slot `hi` and its unique overlapping partner in slot
/// `lo`; structurally zero entries are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStats {
    r: u32,
    horizon: f64,
    mu: Vec<f64>,
    panels: Vec<Vec<f64>>,
}

fn empty_panels(r: u32) -> Vec<Vec<f64>> {
    let slots = slot_count(r);
    let mut panels = Vec::with_capacity(slots * (slots + 1) / 2);
    for hi in 0..slots {
        for _lo in 0..=hi {
            panels.push(vec![0.0; slot_width(hi)]);
        }
    }
    panels
}

/// Scratch holding the active basis values at one point: one element per
/// slot is nonzero.
struct ActiveSet {
    psi: Vec<f64>,
    pos: Vec<usize>,
}

impl ActiveSet {
    fn new(r: u32) -> Self {
        let slots = slot_count(r);
        Self {
            psi: vec![0.0; slots],
            pos: vec![1; slots],
        }
    }

    #[inline]
    fn load(&mut self, x: f64) {
        let u = wrap_unit(x);
        self.psi[0] = if u < 0.5 { 1.0 - 2.0 * u } else { 2.0 * u - 1.0 };
        self.pos[0] = 1;
        for slot in 1..self.psi.len() {
            let n = 1usize << (slot - 1);
            let scaled = u * n as f64;
            let k = ((scaled as usize) + 1).min(n);
            self.psi[slot] = hat(scaled - (k - 1) as f64);
            self.pos[slot] = k;
        }
    }
}

struct Accumulator {
    mu: Vec<f64>,
    panels: Vec<Vec<f64>>,
}

impl Accumulator {
    fn new(r: u32) -> Self {
        Self {
            mu: vec![0.0; basis::index_count(r)],
            panels: empty_panels(r),
        }
    }

    #[inline]
    fn add_point(&mut self, active: &ActiveSet, w_mu: f64, w_gram: f64) {
        let slots = active.psi.len();
        for hi in 0..slots {
            let psi_hi = active.psi[hi];
            let k = active.pos[hi];
            self.mu[slot_flat(hi, k) - 1] += psi_hi * w_mu;
            if psi_hi == 0.0 {
                continue;
            }
            let weighted = psi_hi * w_gram;
            let base = hi * (hi + 1) / 2;
            for lo in 0..=hi {
                self.panels[base + lo][k - 1] += weighted * active.psi[lo];
            }
        }
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        for (a, b) in self.mu.iter_mut().zip(other.mu) {
            *a += b;
        }
        for (pa, pb) in self.panels.iter_mut().zip(other.panels) {
            for (a, b) in pa.iter_mut().zip(pb) {
                *a += b;
            }
        }
        self
    }
}

impl SufficientStats {
    /// Ito-sum statistics of an observed path at cap `r`, accumulated over
    /// fixed chunks of the grid with an in-order merge.
    pub fn from_path(path: &ObservedPath, r: u32) -> Self {
        Self::from_path_with_workers(path, r, 0)
    }

    /// Same as [`SufficientStats::from_path`] with an explicit worker count
    /// (1 forces the sequential path); results are identical for any value.
    pub fn from_path_with_workers(path: &ObservedPath, r: u32, workers: usize) -> Self {
        let values = path.values();
        let dt = path.dt();
        let acc = par::fold_chunks(
            path.steps(),
            CHUNK_STEPS,
            workers,
            |range| {
                let mut acc = Accumulator::new(r);
                let mut active = ActiveSet::new(r);
                for m in range {
                    active.load(values[m]);
                    acc.add_point(&active, values[m + 1] - values[m], dt);
                }
                acc
            },
            Accumulator::merge,
        )
        .unwrap_or_else(|| Accumulator::new(r));
        SufficientStats {
            r,
            horizon: path.horizon(),
            mu: acc.mu,
            panels: acc.panels,
        }
    }

    /// Fixed-design regression statistics: `mu_a = sum_i psi_a(x_i) y_i /
    /// noise_var`, `G_ab = sum_i psi_a(x_i) psi_b(x_i) / noise_var`.
    pub fn from_design(xs: &[f64], ys: &[f64], noise_var: f64, r: u32) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Dimension(format!(
                "design needs matching nonempty x/y, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        if !(noise_var > 0.0) {
            return Err(Error::InvalidParam(format!(
                "noise_var must be > 0, got {noise_var}"
            )));
        }
        let mut acc = Accumulator::new(r);
        let mut active = ActiveSet::new(r);
        let w = 1.0 / noise_var;
        for (&x, &y) in xs.iter().zip(ys) {
            active.load(x);
            acc.add_point(&active, y * w, w);
        }
        Ok(SufficientStats {
            r,
            horizon: xs.len() as f64,
            mu: acc.mu,
            panels: acc.panels,
        })
    }

    /// Builds statistics from dense `(mu, G)`; rejects Grammians that violate
    /// the structural sparsity pattern.
    pub fn from_dense(r: u32, horizon: f64, mu: Vec<f64>, gram: &DMatrix<f64>) -> Result<Self> {
        let n = basis::index_count(r);
        if mu.len() != n || gram.nrows() != n || gram.ncols() != n {
            return Err(Error::Dimension(format!(
                "stats at cap {r} need dimension {n}, got mu={}, gram={}x{}",
                mu.len(),
                gram.nrows(),
                gram.ncols()
            )));
        }
        let mut stats = SufficientStats {
            r,
            horizon,
            mu,
            panels: empty_panels(r),
        };
        for i in 1..=n {
            for i2 in i..=n {
                let v = gram[(i - 1, i2 - 1)];
                if basis::disjoint_interiors(i, i2) {
                    if v != 0.0 {
                        return Err(Error::InvalidParam(format!(
                            "gram[{i},{i2}] = {v} must be zero: disjoint supports"
                        )));
                    }
                    continue;
                }
                let (slot_a, ka) = slot_of(i);
                let (slot_b, kb) = slot_of(i2);
                let (lo, hi, k) = if slot_a <= slot_b {
                    (slot_a, slot_b, kb)
                } else {
                    (slot_b, slot_a, ka)
                };
                stats.panels[panel_index(lo, hi)][k - 1] = v;
            }
        }
        Ok(stats)
    }

    pub fn cap(&self) -> u32 {
        self.r
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Leading block at a shallower cap; bit-identical to accumulating at
    /// that cap directly.
    pub fn restrict(&self, r: u32) -> Result<Self> {
        if r > self.r {
            return Err(Error::InvalidParam(format!(
                "cannot restrict cap {} stats to cap {r}",
                self.r
            )));
        }
        let slots = slot_count(r);
        let mut panels = Vec::with_capacity(slots * (slots + 1) / 2);
        for hi in 0..slots {
            for lo in 0..=hi {
                panels.push(self.panels[panel_index(lo, hi)].clone());
            }
        }
        Ok(SufficientStats {
            r,
            horizon: self.horizon,
            mu: self.mu[..basis::index_count(r)].to_vec(),
            panels,
        })
    }

    /// Single Grammian entry (zero for structurally disjoint pairs).
    pub fn gram_entry(&self, i: usize, i2: usize) -> f64 {
        if basis::disjoint_interiors(i, i2) {
            return 0.0;
        }
        let (slot_a, ka) = slot_of(i);
        let (slot_b, kb) = slot_of(i2);
        let (lo, hi, k) = if slot_a <= slot_b {
            (slot_a, slot_b, kb)
        } else {
            (slot_b, slot_a, ka)
        };
        if lo == hi && ka != kb {
            return 0.0;
        }
        self.panels[panel_index(lo, hi)][k - 1]
    }

    /// Dense symmetric Grammian (structural zeros stay exactly zero).
    pub fn gram_dense(&self) -> DMatrix<f64> {
        let n = basis::index_count(self.r);
        let mut g = DMatrix::zeros(n, n);
        let slots = slot_count(self.r);
        for hi in 0..slots {
            for lo in 0..=hi {
                let panel = &self.panels[panel_index(lo, hi)];
                for (idx, &v) in panel.iter().enumerate() {
                    let k = idx + 1;
                    let i_deep = slot_flat(hi, k);
                    let i_other = match lo {
                        0 | 1 => lo + 1,
                        _ => slot_flat(lo, ((k - 1) >> (hi - lo)) + 1),
                    };
                    g[(i_deep - 1, i_other - 1)] = v;
                    g[(i_other - 1, i_deep - 1)] = v;
                }
            }
        }
        g
    }

    fn mu_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mu)
    }
}

/// Conditional coefficient posterior `N(mean, W^{-1})` with precision
/// `W = s^2 G + A^{-1}`.
#[derive(Clone, Debug)]
pub struct PosteriorGaussian {
    pub r: u32,
    pub s: f64,
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl PosteriorGaussian {
    /// Covariance `W^{-1}` (dense inversion; intended for diagnostics).
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let chol = nalgebra::linalg::Cholesky::new(self.precision.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("posterior precision".into()))?;
        Ok(chol.inverse())
    }
}

fn check_same_cap(stats: &SufficientStats, a: &CovMatrix) -> Result<()> {
    if stats.cap() != a.cap() {
        return Err(Error::Dimension(format!(
            "stats cap {} does not match covariance cap {}",
            stats.cap(),
            a.cap()
        )));
    }
    Ok(())
}

/// Conditional posterior of the coefficients given `(r, s)`:
/// `W = s^2 G + A^{-1}`, `W mean = s mu`.
pub fn conditional_posterior(
    stats: &SufficientStats,
    s: f64,
    a: &CovMatrix,
) -> Result<PosteriorGaussian> {
    check_same_cap(stats, a)?;
    let gamma = prior::precision_matrix(a)?;
    let w = stats.gram_dense() * (s * s) + gamma;
    let chol = nalgebra::linalg::Cholesky::new(w.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("conditional posterior precision".into()))?;
    let mean = chol.solve(&(stats.mu_vector() * s));
    Ok(PosteriorGaussian {
        r: stats.cap(),
        s,
        mean,
        precision: w,
    })
}

/// Log marginal likelihood of `(r, s)` with the coefficients integrated out:
/// `-1/2 log det A - 1/2 log det W + 1/2 (s mu)' W^{-1} (s mu)`.
pub fn log_marginal(stats: &SufficientStats, s: f64, a: &CovMatrix) -> Result<f64> {
    check_same_cap(stats, a)?;
    let gamma = prior::precision_matrix(a)?;
    let w = stats.gram_dense() * (s * s) + gamma;
    let chol = nalgebra::linalg::Cholesky::new(w)
        .ok_or_else(|| Error::NotPositiveDefinite("marginal precision".into()))?;
    let logdet_w: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let smu = stats.mu_vector() * s;
    let quad = smu.dot(&chol.solve(&smu));
    Ok(-0.5 * a.logdet() - 0.5 * logdet_w + 0.5 * quad)
}

/// One state of the `(r, s)` chain. `z` is an exact draw from the conditional
/// coefficient posterior and `cond_mean` its conditional mean `W^{-1} s mu`
/// (kept so downstream estimates can be Rao-Blackwellised); the drift these
/// represent is `s * sum_i z_i psi_i`.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub r: u32,
    pub s: f64,
    pub z: Vec<f64>,
    pub cond_mean: Vec<f64>,
    pub log_marginal: f64,
}

/// Sampler configuration.
#[derive(Clone, Copy, Debug)]
pub struct McmcConfig {
    pub iters: usize,
    pub r_max: u32,
    pub step_s: f64,
    pub init_r: u32,
    pub init_s: f64,
    /// Disable to pin the truncation level at `init_r`.
    pub sample_r: bool,
    /// Disable to pin the scale at `init_s`.
    pub sample_s: bool,
}

impl McmcConfig {
    pub fn new(iters: usize, r_max: u32, step_s: f64) -> Self {
        Self {
            iters,
            r_max,
            step_s,
            init_r: 0,
            init_s: 1.0,
            sample_r: true,
            sample_s: true,
        }
    }
}

/// Completed run: visited states plus move acceptance rates.
#[derive(Clone, Debug)]
pub struct McmcRun {
    pub states: Vec<ChainState>,
    pub accept_r: f64,
    pub accept_s: f64,
}

/// Per-level cache diagonalising the marginal-likelihood algebra.
///
/// With `Gamma = A^{-1} = L L'` and `L^{-1} G L^{-T} = Q D Q'`, the precision
/// `W = s^2 G + Gamma` becomes `(LQ) (s^2 D + I) (LQ)'`, so the log marginal
/// costs `O(n)` per scale value and a conditional draw costs one
/// matrix-vector product with `B = L^{-T} Q`.
struct LevelCache {
    dim: usize,
    log_pmf: f64,
    eigs: DVector<f64>,
    b: DMatrix<f64>,
    c: DVector<f64>,
}

impl LevelCache {
    fn build(stats: &SufficientStats, a: &CovMatrix, log_pmf: f64) -> Result<Self> {
        let gamma = prior::precision_matrix(a)?;
        let l = prior::checked_cholesky(&gamma, "prior precision")?;
        let g = stats.gram_dense();
        // M = L^{-1} G L^{-T}, symmetrised against roundoff.
        let y = l
            .solve_lower_triangular(&g)
            .ok_or_else(|| Error::NotPositiveDefinite("singular precision factor".into()))?;
        let m = l
            .solve_lower_triangular(&y.transpose())
            .ok_or_else(|| Error::NotPositiveDefinite("singular precision factor".into()))?;
        let m = 0.5 * (&m + m.transpose());
        let eig = m.symmetric_eigen();
        let eigs = eig.eigenvalues.map(|d| d.max(0.0));
        let b = l
            .transpose()
            .solve_upper_triangular(&eig.eigenvectors)
            .ok_or_else(|| Error::NotPositiveDefinite("singular precision factor".into()))?;
        let c = b.transpose() * stats.mu_vector();
        Ok(Self {
            dim: stats.mu.len(),
            log_pmf,
            eigs,
            b,
            c,
        })
    }

    fn log_marginal(&self, s: f64) -> f64 {
        let s2 = s * s;
        let mut logdet = 0.0;
        let mut quad = 0.0;
        for (d, c) in self.eigs.iter().zip(self.c.iter()) {
            let denom = 1.0 + s2 * d;
            logdet += denom.ln();
            quad += c * c / denom;
        }
        -0.5 * logdet + 0.5 * s2 * quad
    }

    fn conditional_mean(&self, s: f64) -> DVector<f64> {
        let s2 = s * s;
        let scaled = DVector::from_iterator(
            self.dim,
            self.c
                .iter()
                .zip(self.eigs.iter())
                .map(|(c, d)| s * c / (1.0 + s2 * d)),
        );
        &self.b * scaled
    }

    fn draw<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
        let mean = self.conditional_mean(s);
        let s2 = s * s;
        let noise = DVector::from_iterator(
            self.dim,
            self.eigs.iter().map(|d| {
                let xi: f64 = rng.sample(StandardNormal);
                xi / (1.0 + s2 * d).sqrt()
            }),
        );
        let z = &mean + &self.b * noise;
        (z, mean)
    }
}

/// Runs the marginal Metropolis-within-Gibbs sampler on precomputed
/// statistics (at cap `cfg.r_max` or deeper).
///
/// Per iteration: a `+/-1` move on `r` (proposals outside `0..=r_max` are
/// rejected), a log-normal random-walk move on `s` with the Jacobian
/// correction, then an exact conditional draw of the coefficients. The
/// stationary law of `(r, s)` is proportional to
/// `exp(log_marginal(r, s)) * P(R = r) * f_S(s)`.
pub fn mcmc_run_with(
    stats: &SufficientStats,
    spec: &PriorSpec,
    cfg: &McmcConfig,
    rng: &mut (impl Rng + ?Sized),
) -> Result<McmcRun> {
    spec.validate()?;
    if cfg.iters == 0 {
        return Err(Error::Config("mcmc needs iters >= 1".into()));
    }
    if cfg.r_max > stats.cap() {
        return Err(Error::Config(format!(
            "r_max {} exceeds statistics cap {}",
            cfg.r_max,
            stats.cap()
        )));
    }
    if !(cfg.init_s > 0.0) || cfg.init_r > cfg.r_max || cfg.step_s < 0.0 {
        return Err(Error::Config(format!(
            "invalid initial state: init_s={}, init_r={}, step_s={}",
            cfg.init_s, cfg.init_r, cfg.step_s
        )));
    }

    let caches: Vec<LevelCache> = (0..=cfg.r_max)
        .map(|r| {
            let a = prior::covariance_matrix(r, &spec.model)?;
            let restricted = stats.restrict(r)?;
            LevelCache::build(
                &restricted,
                &a,
                prior::truncation_log_pmf(r, spec.poisson_rate),
            )
        })
        .collect::<Result<_>>()?;

    let scale_lpdf = |s: f64| prior::scale_log_density(s, spec.scale_shape, spec.scale_rate);

    let mut r = cfg.init_r as usize;
    let mut s = cfg.init_s;
    let mut lm = caches[r].log_marginal(s);
    let mut lsd = scale_lpdf(s)?;

    let mut states = Vec::with_capacity(cfg.iters);
    let mut acc_r = 0usize;
    let mut try_r = 0usize;
    let mut acc_s = 0usize;
    let mut try_s = 0usize;

    for _ in 0..cfg.iters {
        if cfg.sample_r {
            try_r += 1;
            let up: bool = rng.gen_bool(0.5);
            let proposal = if up { r as i64 + 1 } else { r as i64 - 1 };
            if proposal >= 0 && proposal <= cfg.r_max as i64 {
                let rp = proposal as usize;
                let lm_p = caches[rp].log_marginal(s);
                let log_alpha = lm_p + caches[rp].log_pmf - lm - caches[r].log_pmf;
                if rng.gen::<f64>().ln() < log_alpha {
                    r = rp;
                    lm = lm_p;
                    acc_r += 1;
                }
            }
        }

        if cfg.sample_s && cfg.step_s > 0.0 {
            try_s += 1;
            let xi: f64 = rng.sample(StandardNormal);
            let sp = s * (cfg.step_s * xi).exp();
            let lm_p = caches[r].log_marginal(sp);
            let lsd_p = scale_lpdf(sp)?;
            // Log-normal proposal: q(s'->s)/q(s->s') = s'/s.
            let log_alpha = lm_p + lsd_p - lm - lsd + (sp / s).ln();
            if rng.gen::<f64>().ln() < log_alpha {
                s = sp;
                lm = lm_p;
                lsd = lsd_p;
                acc_s += 1;
            }
        }

        let (z, mean) = caches[r].draw(s, rng);
        states.push(ChainState {
            r: r as u32,
            s,
            z: z.as_slice().to_vec(),
            cond_mean: mean.as_slice().to_vec(),
            log_marginal: lm,
        });
    }

    Ok(McmcRun {
        states,
        accept_r: if try_r > 0 { acc_r as f64 / try_r as f64 } else { 0.0 },
        accept_s: if try_s > 0 { acc_s as f64 / try_s as f64 } else { 0.0 },
    })
}

/// Convenience wrapper: accumulates path statistics at `r_max`, then runs the
/// sampler with default initial state.
pub fn mcmc_run(
    path: &ObservedPath,
    spec: &PriorSpec,
    iters: usize,
    r_max: u32,
    step_s: f64,
    rng: &mut (impl Rng + ?Sized),
) -> Result<McmcRun> {
    let stats = SufficientStats::from_path(path, r_max);
    mcmc_run_with(&stats, spec, &McmcConfig::new(iters, r_max, step_s), rng)
}

/// Rao-Blackwellised posterior mean drift: the average over kept states of
/// the conditional mean function `s * W^{-1} s mu`, returned at `grid_cap`.
///
/// Averaging the zero-padded coefficient vectors is exact: resampling an
/// expansion on its dyadic grid and re-expanding is the identity.
pub fn posterior_mean_drift(
    states: &[ChainState],
    burn_in: usize,
    grid_cap: u32,
) -> Result<Expansion> {
    if burn_in >= states.len() {
        return Err(Error::InvalidParam(format!(
            "burn_in {burn_in} must be below chain length {}",
            states.len()
        )));
    }
    let kept = &states[burn_in..];
    let mut acc = Expansion::zeros(grid_cap);
    for state in kept {
        if basis::index_count(state.r) != state.cond_mean.len() {
            return Err(Error::Dimension("chain state dimension mismatch".into()));
        }
        if state.r > grid_cap {
            return Err(Error::InvalidParam(format!(
                "grid_cap {grid_cap} below chain state cap {}",
                state.r
            )));
        }
        for (idx, &m) in state.cond_mean.iter().enumerate() {
            acc.coeffs_mut()[idx] += state.s * m;
        }
    }
    let inv = 1.0 / kept.len() as f64;
    acc.scale(inv);
    Ok(acc)
}

/// Pointwise credible band at coverage `q`: empirical `(1-q)/2` and `(1+q)/2`
/// quantiles of the drift draws `s * sum z_i psi_i` on a uniform grid of
/// `ngrid + 1` points; `q = 1` gives the min/max envelope.
pub fn credible_band(
    states: &[ChainState],
    burn_in: usize,
    q: f64,
    ngrid: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParam(format!("coverage q={q} not in (0, 1]")));
    }
    if burn_in >= states.len() {
        return Err(Error::InvalidParam(format!(
            "burn_in {burn_in} must be below chain length {}",
            states.len()
        )));
    }
    if ngrid == 0 {
        return Err(Error::InvalidParam("ngrid must be >= 1".into()));
    }
    let kept = &states[burn_in..];
    let expansions: Vec<Expansion> = kept
        .iter()
        .map(|st| Expansion::new(st.r, st.z.clone()))
        .collect::<Result<_>>()?;
    let mut lo = Vec::with_capacity(ngrid + 1);
    let mut hi = Vec::with_capacity(ngrid + 1);
    let mut column = vec![0.0; kept.len()];
    for g in 0..=ngrid {
        let x = g as f64 / ngrid as f64;
        for ((v, st), e) in column.iter_mut().zip(kept).zip(&expansions) {
            *v = st.s * e.eval(x);
        }
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lo.push(empirical_quantile(&column, (1.0 - q) / 2.0));
        hi.push(empirical_quantile(&column, (1.0 + q) / 2.0));
    }
    Ok((lo, hi))
}

/// Linear-interpolated order statistic of a sorted slice.
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}
