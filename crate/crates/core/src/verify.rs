//! Executable certification of the analytic facts the estimator relies on.
//!
//! Each check evaluates one inequality family at desk scale — exactly where
//! an oracle exists (closed forms, exact piecewise-linear norms, explicit
//! covers) and by seeded Monte Carlo with three-standard-error slack where
//! it does not — and reports the signed slack of its tightest instance.
//! A report passes iff that worst margin is nonnegative. Checks are
//! independent and deterministic given the master seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::basis::{self, Expansion};
use crate::par;
use crate::prior::{self, CovModel};
use crate::seeding;

/// Outcome of one certification check.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Signed slack of the tightest instance; nonnegative iff passed.
    pub worst_margin: f64,
    /// Human-readable description of the tightest instance.
    pub details: String,
}

impl CheckReport {
    fn new(name: &str, worst_margin: f64, details: String) -> Self {
        Self {
            name: name.to_string(),
            passed: worst_margin >= 0.0,
            worst_margin,
            details,
        }
    }
}

/// Tracks the minimum margin together with a description of where it occurs.
struct Tightest {
    margin: f64,
    details: String,
}

impl Tightest {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            details: String::new(),
        }
    }

    fn update(&mut self, margin: f64, details: impl FnOnce() -> String) {
        if margin < self.margin {
            self.margin = margin;
            self.details = details();
        }
    }

    fn merge(mut self, other: Tightest) -> Tightest {
        if other.margin < self.margin {
            self.margin = other.margin;
            self.details = other.details;
        }
        self
    }

    fn report(self, name: &str) -> CheckReport {
        CheckReport::new(name, self.margin, self.details)
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Lower bound `P(|X - theta| <= eps) >= exp(log eps - eps^2 - theta^2 +
/// log sqrt(2/pi))` for standard normal `X`, against the error-function
/// oracle.
pub fn check_normal_ball(theta: f64, eps: f64) -> CheckReport {
    let exact = normal_cdf(theta + eps) - normal_cdf(theta - eps);
    let bound = (eps.ln() - eps * eps - theta * theta + 0.5 * (2.0 / std::f64::consts::PI).ln()).exp();
    CheckReport::new(
        "normal_ball",
        exact - bound,
        format!("theta={theta}, eps={eps}: exact={exact:.6}, bound={bound:.6}"),
    )
}

/// Grid sweep of the normal-ball bound over `theta in [-3, 3]`,
/// `eps in (0, 2]`.
pub fn check_normal_ball_grid() -> CheckReport {
    let mut tight = Tightest::new();
    for i in 0..100 {
        let theta = -3.0 + 6.0 * i as f64 / 99.0;
        for j in 0..100 {
            let eps = 2.0 * (j + 1) as f64 / 100.0;
            let single = check_normal_ball(theta, eps);
            tight.update(single.worst_margin, || single.details.clone());
        }
    }
    tight.report("normal_ball_grid")
}

/// Inverse-gamma tail bound `P(X >= M) <= B^A / Gamma(A) * M^{-A}`, checked
/// by Monte Carlo with three-standard-error slack.
pub fn check_ig_tail(shape: f64, rate: f64, m: f64, draws: usize, seed: u64) -> CheckReport {
    let mut rng = seeding::rng_from_seed(seed);
    let gamma = Gamma::new(shape, 1.0 / rate).expect("positive parameters");
    let mut hits = 0usize;
    for _ in 0..draws {
        let x = 1.0 / gamma.sample(&mut rng);
        if x >= m {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / draws as f64;
    let se = (p_hat * (1.0 - p_hat) / draws as f64).sqrt().max(1.0 / draws as f64);
    let bound = (shape * rate.ln() - ln_gamma(shape) - shape * m.ln()).exp();
    CheckReport::new(
        "ig_tail",
        bound + 3.0 * se - p_hat,
        format!("IG({shape},{rate}), M={m}: empirical={p_hat:.6}, bound={bound:.6}, se={se:.2e}"),
    )
}

/// Anderson's inequality in dimension 1 with the error-function oracle:
/// `Sigma_X = 1`, `Sigma_Y = 4`, `C = [-1, 1]`.
pub fn check_anderson_exact_1d() -> CheckReport {
    let p_x = normal_cdf(1.0) - normal_cdf(-1.0);
    let p_y = normal_cdf(0.5) - normal_cdf(-0.5);
    CheckReport::new(
        "anderson_exact_1d",
        p_x - p_y,
        format!("P(X in C)={p_x:.6} vs P(Y in C)={p_y:.6}"),
    )
}

/// Anderson's inequality on random instances: `Sigma_Y = Sigma_X + SPD`,
/// `C` a random centred box or ball, `P(Y in C) <= P(X in C)` within three
/// combined standard errors.
pub fn check_anderson_mc(cases: usize, draws: usize, seed: u64) -> CheckReport {
    let mut rng = seeding::rng_from_seed(seed);
    let mut tight = Tightest::new();
    for case in 0..cases {
        let dim = 1 + case % 3;
        let mut l_x = DMatrix::<f64>::zeros(dim, dim);
        for row in 0..dim {
            for col in 0..=row {
                l_x[(row, col)] = if row == col {
                    0.4 + rng.gen::<f64>()
                } else {
                    rng.gen::<f64>() - 0.5
                };
            }
        }
        let sigma_x = &l_x * l_x.transpose();
        let mut mpert = DMatrix::<f64>::zeros(dim, dim);
        for row in 0..dim {
            for col in 0..dim {
                mpert[(row, col)] = rng.gen::<f64>() - 0.5;
            }
        }
        let sigma_y = &sigma_x + &mpert * mpert.transpose() + DMatrix::identity(dim, dim) * 0.05;
        let chol_x = nalgebra::linalg::Cholesky::new(sigma_x.clone()).expect("SPD by construction");
        let chol_y = nalgebra::linalg::Cholesky::new(sigma_y).expect("SPD by construction");

        let use_ball = case % 2 == 1;
        let radii: Vec<f64> = (0..dim)
            .map(|i| (0.5 + 1.5 * rng.gen::<f64>()) * sigma_x[(i, i)].sqrt())
            .collect();
        let ball_r2 = {
            let r: f64 = radii.iter().sum::<f64>() / dim as f64;
            r * r * dim as f64
        };
        let inside = |x: &DVector<f64>| {
            if use_ball {
                x.norm_squared() <= ball_r2
            } else {
                x.iter().zip(&radii).all(|(xi, a)| xi.abs() <= *a)
            }
        };
        let sample_p = |l: &DMatrix<f64>, rng: &mut rand_chacha::ChaCha8Rng| {
            let mut hits = 0usize;
            for _ in 0..draws {
                let xi = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
                if inside(&(l * xi)) {
                    hits += 1;
                }
            }
            hits as f64 / draws as f64
        };
        let p_x = sample_p(&chol_x.l(), &mut rng);
        let p_y = sample_p(&chol_y.l(), &mut rng);
        let se = ((p_x * (1.0 - p_x) + p_y * (1.0 - p_y)) / draws as f64).sqrt();
        tight.update(p_x - p_y + 3.0 * se, || {
            format!("case {case} (dim {dim}, {}): P_X={p_x:.4}, P_Y={p_y:.4}", if use_ball { "ball" } else { "box" })
        });
    }
    tight.report("anderson_mc")
}

/// Explicit product cover of the smoothness box `C_{r,t} = {besov seminorm at
/// alpha <= t}` with per-level spacing `eps * 2^{-j alpha} / A_alpha`:
/// certifies `log N(eps) <= 2^{r+1} log(3 A_alpha t / eps)` and verifies
/// coverage on random members.
pub fn check_entropy_bound(r: u32, t: f64, eps: f64, alpha: f64, seed: u64) -> CheckReport {
    let a_alpha = 1.0 / (1.0 - (-alpha).exp2());
    let bound = basis::index_count(r) as f64 * (3.0 * a_alpha * t / eps).ln();

    // Sup over levels of the per-level amplitude: if eps exceeds it a single
    // ball centred at zero covers the whole box.
    let amplitude_sum: f64 = (0..=r).map(|j| t * (-(alpha * j as f64)).exp2()).sum();
    let points_per_coord = if eps >= amplitude_sum {
        1
    } else {
        (t * a_alpha / eps).ceil() as usize
    };
    let log_count = basis::index_count(r) as f64 * (points_per_coord as f64).ln();
    let mut tight = Tightest::new();
    tight.update(bound - log_count, || {
        format!(
            "log-count {log_count:.4} vs bound {bound:.4} ({points_per_coord} points/coord)"
        )
    });

    // Coverage: snap random members to the grid and measure the exact sup
    // distance.
    let mut rng = seeding::rng_from_seed(seed);
    let n = basis::index_count(r);
    for sample in 0..50 {
        let mut coeffs = vec![0.0; n];
        let mut snapped = vec![0.0; n];
        for i in 1..=n {
            let level = basis::level(i) as f64;
            let amp = t * (-(alpha * level)).exp2();
            let z = (2.0 * rng.gen::<f64>() - 1.0) * amp;
            coeffs[i - 1] = z;
            snapped[i - 1] = if points_per_coord == 1 {
                0.0
            } else {
                // Net points -amp + (2m-1) amp / n_pts, m = 1..=n_pts.
                let spacing = 2.0 * amp / points_per_coord as f64;
                let m = (((z + amp) / spacing).floor()).clamp(0.0, points_per_coord as f64 - 1.0);
                -amp + (2.0 * m + 1.0) * amp / points_per_coord as f64
            };
        }
        let e = Expansion::new(r, coeffs).expect("length matches");
        let es = Expansion::new(r, snapped).expect("length matches");
        let dist = e.sub(&es).norm(f64::INFINITY).expect("valid norm");
        tight.update(eps - dist, || {
            format!("sample {sample}: snap distance {dist:.6} vs eps {eps}")
        });
    }
    tight.report("entropy_bound")
}

/// Constants of the covariance-entry bounds; the defaults are the certified
/// statement, tests inject perturbed values to prove the check can fail.
#[derive(Clone, Copy, Debug)]
pub struct CovBoundConstants {
    /// Diagonal lower factor on `2^{-l} sigma^2 / 4` for levels >= 1.
    pub diag_lower: f64,
    /// Diagonal upper factor on `2^{-l} sigma^2 / 4`.
    pub diag_upper: f64,
    /// Off-diagonal factor on `sigma^2 2^{-1.5 max(l, l')}` when one index is
    /// at level 0 (flat index <= 2) and the other deeper.
    pub cross_level0: f64,
    /// Off-diagonal factor on `sigma^2 2^{-1.5 (l + l')}` for two deep
    /// indices.
    pub cross_general: f64,
}

impl Default for CovBoundConstants {
    fn default() -> Self {
        Self {
            diag_lower: 0.95,
            diag_upper: 1.0,
            cross_level0: 0.20,
            cross_general: 0.37,
        }
    }
}

/// Exhaustive certification of the OU coefficient covariance bounds for all
/// index pairs up to level `r_max`, with the stated constants. Margins are
/// relative to the bound being checked; identities on the level-0 block use
/// a `1e-12` rounding allowance.
pub fn check_cov_bounds(gamma: f64, sigma2: f64, r_max: u32) -> CheckReport {
    check_cov_bounds_with(CovBoundConstants::default(), gamma, sigma2, r_max, 0)
}

/// Same scan with explicit constants and worker count.
pub fn check_cov_bounds_with(
    consts: CovBoundConstants,
    gamma: f64,
    sigma2: f64,
    r_max: u32,
    workers: usize,
) -> CheckReport {
    assert!(gamma > 0.0 && gamma <= 1.5, "bounds are certified for gamma in (0, 1.5]");
    let n = basis::index_count(r_max);

    // Anchor representation of every coefficient, precomputed once.
    let anchor_of = |i: usize| -> ([(f64, f64); 3], usize) {
        match i {
            1 => ([(0.0, 1.0), (0.0, 0.0), (0.0, 0.0)], 1),
            2 => ([(0.5, 1.0), (0.0, 0.0), (0.0, 0.0)], 1),
            _ => {
                let (a, b) = basis::support(i);
                ([(0.5 * (a + b), 1.0), (a, -0.5), (b, -0.5)], 3)
            }
        }
    };
    let anchors: Vec<([(f64, f64); 3], usize)> = (1..=n).map(anchor_of).collect();
    let prefactor = sigma2 / (2.0 * gamma * (1.0 - (-gamma).exp()));
    let kernel = move |s: f64, t: f64| {
        let h = (t - s).abs();
        prefactor * ((-gamma * h).exp() + (-gamma * (1.0 - h)).exp())
    };
    let entry = |i: usize, i2: usize| -> f64 {
        let (pa, na) = anchors[i - 1];
        let (pb, nb) = anchors[i2 - 1];
        let mut acc = 0.0;
        for &(t, w) in &pa[..na] {
            for &(t2, w2) in &pb[..nb] {
                acc += w * w2 * kernel(t, t2);
            }
        }
        acc
    };

    let scale = sigma2 / (2.0 * gamma);
    let coth_half = scale / (0.5 * gamma).tanh();
    let csch_half = scale / (0.5 * gamma).sinh();
    let id_tol = 1e-12 * coth_half.max(1.0);

    let rows: Vec<usize> = (1..=n).collect();
    let per_row = par::map_indexed(&rows, workers, |_, &i| {
        let mut tight = Tightest::new();
        let li = basis::level(i) as f64;
        for i2 in i..=n {
            let l2 = basis::level(i2) as f64;
            let a = entry(i, i2);
            if i == i2 {
                if i <= 2 {
                    tight.update(id_tol - (a - coth_half).abs(), || {
                        format!("gamma={gamma}: A[{i},{i}] vs coth identity, diff {:.2e}", (a - coth_half).abs())
                    });
                } else {
                    let base = (-li).exp2() * sigma2 / 4.0;
                    tight.update((a - consts.diag_lower * base) / base, || {
                        format!("gamma={gamma}: diag lower at i={i} (level {li}), A={a:.6e}")
                    });
                    tight.update((consts.diag_upper * base - a) / base, || {
                        format!("gamma={gamma}: diag upper at i={i} (level {li}), A={a:.6e}")
                    });
                }
            } else if i == 1 && i2 == 2 {
                tight.update(id_tol - (a - csch_half).abs(), || {
                    format!("gamma={gamma}: A[1,2] vs csch identity, diff {:.2e}", (a - csch_half).abs())
                });
            } else if i <= 2 {
                let bound = consts.cross_level0 * sigma2 * (-1.5 * li.max(l2)).exp2();
                tight.update((bound - a.abs()) / bound, || {
                    format!("gamma={gamma}: level0 cross bound at ({i},{i2}), |A|={:.3e} vs {bound:.3e}", a.abs())
                });
            } else {
                let bound = consts.cross_general * sigma2 * (-1.5 * (li + l2)).exp2();
                tight.update((bound - a.abs()) / bound, || {
                    format!("gamma={gamma}: deep cross bound at ({i},{i2}), |A|={:.3e} vs {bound:.3e}", a.abs())
                });
            }
        }
        tight
    });
    let tight = per_row.into_iter().fold(Tightest::new(), Tightest::merge);
    tight.report("cov_bounds")
}

/// Assumption-style sandwich on the deep block (`i, i2 >= 3`): diagonal in
/// `[c1 2^{-l}, c2 2^{-l}]`, off-diagonal below `c3 2^{-1.5 (l + l')}` with
/// `c1 = 0.95 sigma^2/4`, `c2 = sigma^2/4`, `c3 = 0.061 sigma^2 gamma (1 +
/// gamma)`.
pub fn check_assumption_2b(gamma: f64, sigma2: f64, r_max: u32) -> CheckReport {
    let c1 = 0.95 * sigma2 / 4.0;
    let c2 = sigma2 / 4.0;
    let c3 = 0.061 * sigma2 * gamma * (1.0 + gamma);
    let n = basis::index_count(r_max);
    let mut tight = Tightest::new();
    for i in 3..=n {
        let li = basis::level(i) as f64;
        for i2 in i..=n {
            let l2 = basis::level(i2) as f64;
            let a = prior::cov_entry_ou(i, i2, gamma, sigma2);
            if i == i2 {
                let lo = c1 * (-li).exp2();
                let hi = c2 * (-li).exp2();
                tight.update((a - lo) / lo, || format!("2b diag lower at i={i}"));
                tight.update((hi - a) / hi, || format!("2b diag upper at i={i}"));
            } else {
                let bound = c3 * (-1.5 * (li + l2)).exp2();
                tight.update((bound - a.abs()) / bound, || {
                    format!("2b cross at ({i},{i2}): |A|={:.3e} vs {bound:.3e}", a.abs())
                });
            }
        }
    }
    tight.report("assumption_2b")
}

/// Closed forms of the level-0 OU block: `A11 = A22 = scale coth(gamma/2)`,
/// `A12 = scale csch(gamma/2)`, eigenvalues `scale tanh(gamma/4)` and
/// `scale coth(gamma/4)`.
pub fn check_ou_closed_forms(gammas: &[f64], sigma2: f64) -> CheckReport {
    let mut tight = Tightest::new();
    for &gamma in gammas {
        let scale = sigma2 / (2.0 * gamma);
        let expect = [
            (prior::cov_entry_ou(1, 1, gamma, sigma2), scale / (0.5 * gamma).tanh(), "A11 coth"),
            (prior::cov_entry_ou(2, 2, gamma, sigma2), scale / (0.5 * gamma).tanh(), "A22 coth"),
            (prior::cov_entry_ou(1, 2, gamma, sigma2), scale / (0.5 * gamma).sinh(), "A12 csch"),
            (
                prior::cov_entry_ou(1, 1, gamma, sigma2) - prior::cov_entry_ou(1, 2, gamma, sigma2),
                scale * (0.25 * gamma).tanh(),
                "small eigenvalue",
            ),
            (
                prior::cov_entry_ou(1, 1, gamma, sigma2) + prior::cov_entry_ou(1, 2, gamma, sigma2),
                scale / (0.25 * gamma).tanh(),
                "large eigenvalue",
            ),
        ];
        for (got, want, what) in expect {
            let tol = 1e-12 * want.abs().max(1.0);
            tight.update(tol - (got - want).abs(), || {
                format!("gamma={gamma}: {what} differs by {:.2e}", (got - want).abs())
            });
        }
    }
    tight.report("ou_closed_forms")
}

/// Factor identity of the OU kernel: for `x` outside `(s, t)`,
/// `K(s,x)/2 - K((s+t)/2, x) + K(t,x)/2 = 2 sinh^2(gamma (t-s)/4)
/// K((s+t)/2, x)`.
pub fn check_factor_identity(gamma: f64, sigma2: f64, seed: u64) -> CheckReport {
    let mut rng = seeding::rng_from_seed(seed);
    let mut worst = 0.0_f64;
    let mut where_ = String::new();
    for _ in 0..100 {
        let s: f64 = rng.gen::<f64>() * 0.5;
        let t = s + rng.gen::<f64>() * (1.0 - s).min(0.45);
        // x outside (s, t): place it in [t, 1] or [0, s].
        let x = if rng.gen_bool(0.5) {
            t + rng.gen::<f64>() * (1.0 - t)
        } else {
            rng.gen::<f64>() * s
        };
        let m = 0.5 * (s + t);
        let lhs = 0.5 * prior::ou_kernel(s, x, gamma, sigma2) - prior::ou_kernel(m, x, gamma, sigma2)
            + 0.5 * prior::ou_kernel(t, x, gamma, sigma2);
        let sh = (gamma * (t - s) / 4.0).sinh();
        let rhs = 2.0 * sh * sh * prior::ou_kernel(m, x, gamma, sigma2);
        let diff = (lhs - rhs).abs();
        if diff > worst {
            worst = diff;
            where_ = format!("s={s:.4}, t={t:.4}, x={x:.4}: diff {diff:.2e}");
        }
    }
    CheckReport::new("factor_identity", 1e-12 - worst, where_)
}

/// Precision sparsity: the inverted OU covariance is numerically zero
/// (below `zero_tol` relative to its largest entry) exactly on
/// disjoint-interior-support pairs, while at least one nested pair per level
/// stays above `witness_floor`. Nested couplings decay like `2^{-level}`
/// relative to the matrix maximum, so deep scans need a floor below the
/// shallow-scan 1e-4.
pub fn check_precision_sparsity(
    gamma: f64,
    sigma2: f64,
    r: u32,
    zero_tol: f64,
    witness_floor: f64,
) -> CheckReport {
    let a = match prior::covariance_matrix(r, &CovModel::Ou { gamma, sigma2 }) {
        Ok(a) => a,
        Err(err) => return CheckReport::new("precision_sparsity", f64::NEG_INFINITY, err.to_string()),
    };
    let p = match prior::precision_matrix(&a) {
        Ok(p) => p,
        Err(err) => return CheckReport::new("precision_sparsity", f64::NEG_INFINITY, err.to_string()),
    };
    let max = p.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let n = a.dim();
    let mut tight = Tightest::new();
    for i in 1..=n {
        for i2 in i + 1..=n {
            if basis::disjoint_interiors(i, i2) {
                let rel = p[(i - 1, i2 - 1)].abs() / max;
                tight.update(zero_tol - rel, || {
                    format!("gamma={gamma}, r={r}: Gamma[{i},{i2}] relative {rel:.2e} above {zero_tol:.0e}")
                });
            }
        }
    }
    // Witness: per level, the strongest parent-child entry must be clearly
    // nonzero.
    for j in 1..=r {
        let mut best = 0.0_f64;
        for k in 1..=(1usize << j) {
            let child = basis::flat_index(j, k);
            let parent = if j == 1 {
                2
            } else {
                basis::flat_index(j - 1, ((k - 1) >> 1) + 1)
            };
            best = best.max(p[(child - 1, parent - 1)].abs() / max);
        }
        tight.update(best - witness_floor, || {
            format!("gamma={gamma}, r={r}: level {j} witness only {best:.2e}")
        });
    }
    tight.report("precision_sparsity")
}

/// Truncated-Poisson truncation prior: the pmf sums to one and its tail is
/// eventually strictly decreasing.
pub fn check_truncation_pmf(poisson_rate: f64) -> CheckReport {
    let pmf: Vec<f64> = (0..=14).map(|r| prior::truncation_log_pmf(r, poisson_rate).exp()).collect();
    let total: f64 = pmf.iter().sum();
    let mut tight = Tightest::new();
    tight.update(1e-10 - (total - 1.0).abs(), || {
        format!("lambda={poisson_rate}: pmf total {total}")
    });
    let argmax = pmf
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(idx, _)| idx)
        .unwrap_or(0);
    for r in argmax..pmf.len() - 1 {
        if pmf[r + 1] <= 0.0 {
            break;
        }
        tight.update((pmf[r] - pmf[r + 1]) / pmf[r], || {
            format!("lambda={poisson_rate}: pmf not decreasing at r={r}")
        });
    }
    tight.report("truncation_pmf")
}

/// Scale density: integrates to one (Simpson quadrature in log space within
/// `1e-6`) and is maximised at the analytic mode.
pub fn check_scale_density(shape: f64, rate: f64) -> CheckReport {
    let f = |u: f64| {
        prior::scale_log_density(u.exp(), shape, rate)
            .map(|ld| (ld + u).exp())
            .unwrap_or(0.0)
    };
    let (lo, hi, n) = (-14.0, 8.0, 20_000);
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        acc += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let integral = acc * h / 3.0;
    let mut tight = Tightest::new();
    tight.update(1e-6 - (integral - 1.0).abs(), || {
        format!("IG({shape},{rate}) scale density integrates to {integral}")
    });
    let mode = prior::scale_density_mode(shape, rate);
    let at_mode = prior::scale_log_density(mode, shape, rate).expect("positive mode");
    for eps in [1e-3, 1e-2, 0.1] {
        for sign in [-1.0, 1.0] {
            let s = mode * (1.0 + sign * eps);
            let v = prior::scale_log_density(s, shape, rate).expect("positive scale");
            tight.update(at_mode - v, || {
                format!("density at mode*(1{}{eps}) exceeds density at mode", if sign > 0.0 { "+" } else { "-" })
            });
        }
    }
    tight.report("scale_density")
}

/// Truncation error of smooth expansions: `||e - trunc_r e||_inf <=
/// seminorm * 2^{-r beta} / (2^beta - 1)`, fuzzed over random coefficients.
pub fn check_approximation_lemma(seed: u64) -> CheckReport {
    let mut rng = seeding::rng_from_seed(seed);
    let cap = 9u32;
    let mut tight = Tightest::new();
    for &beta in &[0.5, 1.0, 1.5] {
        for _ in 0..40 {
            let n = basis::index_count(cap);
            let coeffs: Vec<f64> = (1..=n)
                .map(|i| {
                    let amp = (-(beta * basis::level(i) as f64)).exp2();
                    (2.0 * rng.gen::<f64>() - 1.0) * amp
                })
                .collect();
            let e = Expansion::new(cap, coeffs).expect("length matches");
            let sem = e.besov_seminorm(beta).seminorm;
            if sem == 0.0 {
                continue;
            }
            for r in 1..=8u32 {
                let tail = e.sub(&e.truncate(r).expect("r below cap"));
                let sup = tail.norm(f64::INFINITY).expect("valid norm");
                let bound = sem * (-(r as f64) * beta).exp2() / (beta.exp2() - 1.0);
                tight.update((bound - sup) / bound, || {
                    format!("beta={beta}, r={r}: sup {sup:.4e} vs bound {bound:.4e}")
                });
            }
        }
    }
    tight.report("approximation_lemma")
}

/// Coefficient bound `|z_i| <= 2 ||f||_inf`, fuzzed over random piecewise
/// linear functions.
pub fn check_coefficient_bound(seed: u64) -> CheckReport {
    let mut rng = seeding::rng_from_seed(seed);
    let mut tight = Tightest::new();
    for trial in 0..200 {
        let r = 1 + (trial % 5) as u32;
        let n = basis::index_count(r);
        let values: Vec<f64> = (0..n).map(|_| 4.0 * rng.gen::<f64>() - 2.0).collect();
        let sup = values.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        if sup == 0.0 {
            continue;
        }
        let e = basis::expand_dyadic(&values).expect("power-of-two length");
        for (idx, z) in e.coeffs().iter().enumerate() {
            tight.update((2.0 * sup - z.abs()) / (2.0 * sup), || {
                format!("trial {trial}: |z_{}| = {:.4} vs 2 sup = {:.4}", idx + 1, z.abs(), 2.0 * sup)
            });
        }
    }
    tight.report("coefficient_bound")
}

/// Modulus bound `||e||_inf / ||e||_2 <= sqrt(3) 2^{(r+1)/2}`, fuzzed.
pub fn check_modulus_sup(seed: u64) -> CheckReport {
    let mut rng = seeding::rng_from_seed(seed);
    let mut tight = Tightest::new();
    for trial in 0..200 {
        let r = (trial % 6) as u32;
        let n = basis::index_count(r);
        let coeffs: Vec<f64> = (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        let e = Expansion::new(r, coeffs).expect("length matches");
        let l2 = e.norm(2.0).expect("valid");
        if l2 < 1e-9 {
            continue;
        }
        let ratio = e.norm(f64::INFINITY).expect("valid") / l2;
        let bound = 3.0_f64.sqrt() * ((r + 1) as f64 / 2.0).exp2();
        tight.update((bound - ratio) / bound, || {
            format!("trial {trial} (r={r}): ratio {ratio:.4} vs bound {bound:.4}")
        });
    }
    tight.report("modulus_sup")
}

/// Modulus bound `||e||_p / ||e||_2 <= sqrt(3) (p+1)^{-1/p}
/// 2^{(r+1)(1/2 - 1/p)}` for `p in {3, 4, 8}`, fuzzed; also verifies that a
/// single tent attains the bound up to the factor `2^{1/2 - 1/p}`.
pub fn check_modulus_lp(seed: u64) -> CheckReport {
    let mut rng = seeding::rng_from_seed(seed);
    let mut tight = Tightest::new();
    for &p in &[3.0_f64, 4.0, 8.0] {
        let bound_at = |r: u32| {
            3.0_f64.sqrt() * (p + 1.0).powf(-1.0 / p) * ((r + 1) as f64 * (0.5 - 1.0 / p)).exp2()
        };
        for trial in 0..100 {
            let r = (trial % 6) as u32;
            let n = basis::index_count(r);
            let coeffs: Vec<f64> = (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
            let e = Expansion::new(r, coeffs).expect("length matches");
            let l2 = e.norm(2.0).expect("valid");
            if l2 < 1e-9 {
                continue;
            }
            let ratio = e.norm(p).expect("valid") / l2;
            let bound = bound_at(r);
            tight.update((bound - ratio) / bound, || {
                format!("p={p}, trial {trial} (r={r}): ratio {ratio:.4} vs bound {bound:.4}")
            });
        }
        // Single tent at the deepest position: sharp up to 2^{1/2 - 1/p}.
        let r = 5u32;
        let mut tent = Expansion::zeros(r);
        tent.coeffs_mut()[basis::flat_index(r, 3) - 1] = 1.0;
        let ratio = tent.norm(p).expect("valid") / tent.norm(2.0).expect("valid");
        let sharp = bound_at(r) * (-(0.5 - 1.0 / p)).exp2();
        let tol = 1e-12 * sharp;
        tight.update(tol - (ratio - sharp).abs(), || {
            format!("p={p}: tent ratio {ratio:.6} vs sharp value {sharp:.6}")
        });
    }
    tight.report("modulus_lp")
}

/// `(a1 + a2) / (x1 + x2) <= max(a1/x1, a2/x2)` for positive quadruples.
pub fn check_ratio_inequality(seed: u64) -> CheckReport {
    let mut rng = seeding::rng_from_seed(seed);
    let mut tight = Tightest::new();
    for trial in 0..1000 {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| 1e-3 + rng.gen::<f64>() * 10.0;
        let (a1, a2, x1, x2) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let lhs = (a1 + a2) / (x1 + x2);
        let rhs = (a1 / x1).max(a2 / x2);
        tight.update((rhs - lhs) / rhs, || {
            format!("trial {trial}: ({a1:.3}+{a2:.3})/({x1:.3}+{x2:.3}) vs max ratio")
        });
    }
    tight.report("ratio_inequality")
}

/// Seed used by the release gate when none is supplied.
pub const DEFAULT_SEED: u64 = 0;

/// Runs the whole certification battery with per-check seeds derived from
/// `seed`; reports merge in a fixed order regardless of the worker count.
pub fn run_all(seed: u64, workers: usize) -> Vec<CheckReport> {
    type Job = Box<dyn Fn(u64) -> CheckReport + Send + Sync>;
    let rename = |mut report: CheckReport, name: &str| {
        report.name = name.to_string();
        report
    };
    let jobs: Vec<(&str, Job)> = vec![
        ("normal_ball_grid", Box::new(|_| check_normal_ball_grid())),
        ("ig_tail_a2_b1_m10", Box::new(|s| check_ig_tail(2.0, 1.0, 10.0, 1_000_000, s))),
        ("ig_tail_a3_b2_m5", Box::new(|s| check_ig_tail(3.0, 2.0, 5.0, 1_000_000, s))),
        ("ig_tail_small_m", Box::new(|s| check_ig_tail(2.0, 1.0, 0.01, 100_000, s))),
        ("anderson_exact_1d", Box::new(|_| check_anderson_exact_1d())),
        ("anderson_mc", Box::new(|s| check_anderson_mc(50, 20_000, s))),
        ("approximation_lemma", Box::new(check_approximation_lemma)),
        ("coefficient_bound", Box::new(check_coefficient_bound)),
        ("modulus_sup", Box::new(check_modulus_sup)),
        ("modulus_lp", Box::new(check_modulus_lp)),
        ("ratio_inequality", Box::new(check_ratio_inequality)),
        ("entropy_bound_r0", Box::new(|s| check_entropy_bound(0, 1.0, 0.5, 1.0, s))),
        ("entropy_bound_r2", Box::new(|s| check_entropy_bound(2, 2.0, 0.25, 0.5, s))),
        ("entropy_bound_r3", Box::new(|s| check_entropy_bound(3, 1.5, 0.1, 1.0, s))),
        ("entropy_single_ball", Box::new(|s| check_entropy_bound(1, 1.0, 2.5, 1.0, s))),
        ("cov_bounds_gamma_0.5", Box::new(|_| check_cov_bounds_with(CovBoundConstants::default(), 0.5, 1.0, 10, 1))),
        ("cov_bounds_gamma_1.0", Box::new(|_| check_cov_bounds_with(CovBoundConstants::default(), 1.0, 1.0, 10, 1))),
        ("cov_bounds_gamma_1.48", Box::new(|_| check_cov_bounds_with(CovBoundConstants::default(), 1.48, 1.0, 10, 1))),
        ("cov_bounds_gamma_1.5", Box::new(|_| check_cov_bounds_with(CovBoundConstants::default(), 1.5, 1.0, 10, 1))),
        (
            "cov_diag_sharper_0.9715",
            Box::new(|_| {
                let consts = CovBoundConstants {
                    diag_lower: 0.9715,
                    ..CovBoundConstants::default()
                };
                check_cov_bounds_with(consts, 1.5, 1.0, 10, 1)
            }),
        ),
        ("precision_sparsity_gamma_1.0_r4", Box::new(|_| check_precision_sparsity(1.0, 1.0, 4, 1e-8, 1e-4))),
        ("precision_sparsity_gamma_0.5_r6", Box::new(|_| check_precision_sparsity(0.5, 1.0, 6, 1e-8, 1e-8))),
        ("assumption_2b", Box::new(|_| check_assumption_2b(1.48, 1.0, 8))),
        ("ou_closed_forms", Box::new(|_| check_ou_closed_forms(&[0.5, 1.0, 1.48, 1.5], 1.0))),
        ("factor_identity", Box::new(|s| check_factor_identity(1.3, 0.9, s))),
        ("truncation_pmf_lambda_1", Box::new(|_| check_truncation_pmf(1.0))),
        ("truncation_pmf_lambda_4", Box::new(|_| check_truncation_pmf(4.0))),
        ("scale_density_2_1", Box::new(|_| check_scale_density(2.0, 1.0))),
    ];
    let reports = par::map_indexed(&jobs, workers, |idx, (name, job)| {
        rename(job(seeding::child_seed(seed, idx as u64)), name)
    });
    reports
}

/// True iff every report passed.
pub fn all_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_ball_example() {
        let report = check_normal_ball(0.0, 1.0);
        assert!(report.passed);
        // exact = 0.682689, bound = sqrt(2/pi) e^{-1} = 0.293525.
        assert!((report.worst_margin - (0.6826894921370859 - 0.2935253263474798)).abs() < 1e-9);
        // Large eps: exact tends to 1, bound to 0.
        assert!(check_normal_ball(0.0, 50.0).passed);
    }

    #[test]
    fn anderson_exact_values() {
        let report = check_anderson_exact_1d();
        assert!(report.passed);
        assert!((report.worst_margin - (0.6826894921370859 - 0.3829249225480262)).abs() < 1e-9);
    }

    #[test]
    fn entropy_example_r0() {
        // r=0, t=1, eps=0.5, alpha=1: 4 points per coordinate, bound
        // exp(2 log(3 * 2 * 1 / 0.5)).
        let report = check_entropy_bound(0, 1.0, 0.5, 1.0, 7);
        assert!(report.passed);
        let log_count = 2.0 * 4.0_f64.ln();
        let bound = 2.0 * 12.0_f64.ln();
        assert!(report.worst_margin <= bound - log_count + 1e-12);
    }

    #[test]
    fn entropy_single_ball_passes() {
        let report = check_entropy_bound(1, 1.0, 2.5, 1.0, 7);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn cov_bounds_pass_small_scale() {
        for gamma in [0.5, 1.48, 1.5] {
            let report = check_cov_bounds(gamma, 1.0, 5);
            assert!(report.passed, "gamma={gamma}: {report:?}");
            assert!(report.worst_margin > 0.0);
        }
    }

    #[test]
    fn cov_bounds_mutation_fails() {
        // The diagonal lower constant 0.95 is tight-ish: pushing it to 0.99
        // must break the check (the observed ratio dips to ~0.972).
        let consts = CovBoundConstants {
            diag_lower: 0.99,
            ..CovBoundConstants::default()
        };
        let report = check_cov_bounds_with(consts, 1.5, 1.0, 5, 1);
        assert!(!report.passed, "mutated check unexpectedly passed: {report:?}");
    }

    #[test]
    fn sharper_diagonal_constant_holds() {
        let consts = CovBoundConstants {
            diag_lower: 0.9715,
            ..CovBoundConstants::default()
        };
        let report = check_cov_bounds_with(consts, 1.5, 1.0, 6, 1);
        assert!(report.passed, "{report:?}");
        assert!(report.worst_margin > 0.0);
    }

    #[test]
    fn precision_sparsity_ou() {
        let report = check_precision_sparsity(1.0, 1.0, 4, 1e-8, 1e-4);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn report_serialisation_roundtrip() {
        let report = check_normal_ball(0.5, 0.5);
        let json = serde_json::to_string(&report).unwrap();
        let back: CheckReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn run_all_passes_and_is_deterministic() {
        let reports = run_all(DEFAULT_SEED, 0);
        for report in &reports {
            assert!(report.passed, "{}: {}", report.name, report.details);
        }
        assert!(all_passed(&reports));
        let again = run_all(DEFAULT_SEED, 1);
        assert_eq!(reports.len(), again.len());
        for (a, b) in reports.iter().zip(&again) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.worst_margin.to_bits(), b.worst_margin.to_bits());
        }
    }
}
