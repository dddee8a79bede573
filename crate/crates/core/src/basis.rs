//! Faber-Schauder basis on the circle: hat functions `psi_{j,k}` plus the
//! wrapped hat `psi_1`, flat-indexed so that level blocks are contiguous.
//!
//! Index `i = 2^j + k` identifies the hat at level `j >= 0`, position
//! `k in 1..=2^j`; the special index `i = 1` is the wrapped hat peaking at 0.
//! Both `psi_1` and `psi_{0,1}` sit at level 0. An [`Expansion`] holds a dense
//! coefficient vector for all indices up to a level cap and evaluates to a
//! continuous 1-periodic piecewise-linear function with breakpoints on the
//! dyadic grid, which is why all `L^p` norms here are exact rather than
//! quadrature-based.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Level `l(i)` of flat index `i`: 0 for `i in {1, 2}`, otherwise the `j`
/// with `i in {2^j + 1, ..., 2^{j+1}}`.
///
/// Panics if `i == 0`; flat indices start at 1.
#[inline]
pub fn level(i: usize) -> u32 {
    assert!(i >= 1, "basis index must be >= 1, got 0");
    if i <= 2 {
        0
    } else {
        (i - 1).ilog2()
    }
}

/// Double index `(j, k)` of flat index `i >= 2`, with `i = 2^j + k`.
///
/// Panics for `i < 2`: the wrapped hat `psi_1` has no double index.
#[inline]
pub fn double_index(i: usize) -> (u32, usize) {
    assert!(i >= 2, "index {i} has no (j, k) representation");
    let j = level(i);
    (j, i - (1usize << j))
}

/// Flat index of the level-`j` hat at position `k`.
#[inline]
pub fn flat_index(j: u32, k: usize) -> usize {
    debug_assert!(k >= 1 && k <= (1usize << j));
    (1usize << j) + k
}

/// Number of coefficients stored up to level cap `r`: `|I_r| = 2^{r+1}`.
#[inline]
pub fn index_count(r: u32) -> usize {
    1usize << (r + 1)
}

/// The hat function: `2x` on `[0, 1/2)`, `2(1-x)` on `[1/2, 1]`, zero elsewhere.
#[inline]
pub fn hat(x: f64) -> f64 {
    if x < 0.0 || x > 1.0 {
        0.0
    } else if x < 0.5 {
        2.0 * x
    } else {
        2.0 * (1.0 - x)
    }
}

/// Fractional part mapping any real to `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let f = x - x.floor();
    // x slightly below an integer can round the fractional part up to 1.0.
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Evaluates basis function `i` at `x` (1-periodic in `x`).
pub fn eval_basis(i: usize, x: f64) -> f64 {
    let u = wrap_unit(x);
    if i == 1 {
        // Wrapped hat: peak 1 at 0, zero at 1/2.
        if u < 0.5 {
            1.0 - 2.0 * u
        } else {
            2.0 * u - 1.0
        }
    } else {
        let (j, k) = double_index(i);
        hat(u * (1u64 << j) as f64 - (k - 1) as f64)
    }
}

/// Closed support of `psi_i` as an interval in `[0, 1]`, for `i >= 2`.
/// `psi_1` wraps around 0 and is handled separately by callers.
#[inline]
pub fn support(i: usize) -> (f64, f64) {
    let (j, k) = double_index(i);
    let w = 1.0 / (1u64 << j) as f64;
    ((k - 1) as f64 * w, k as f64 * w)
}

/// Whether the supports of `psi_i` and `psi_{i'}` have disjoint interiors
/// modulo 1. `psi_1` and `psi_{0,1}` overlap everything, so this is only ever
/// true for two hats at levels >= 1 in distinct dyadic cells.
pub fn disjoint_interiors(i: usize, i2: usize) -> bool {
    if i <= 2 || i2 <= 2 {
        return false;
    }
    let (a, b) = support(i);
    let (c, d) = support(i2);
    b <= c || d <= a
}

/// Dense Faber-Schauder expansion up to a level cap.
///
/// Coefficients are stored in flat-index order (`coeffs[i - 1]` is the
/// coefficient of `psi_i`), `2^{r+1}` of them for cap `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    r: u32,
    coeffs: Vec<f64>,
}

impl Expansion {
    /// Wraps a coefficient vector; its length must be `2^{r+1}`.
    pub fn new(r: u32, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != index_count(r) {
            return Err(Error::Dimension(format!(
                "expansion at cap {r} needs {} coefficients, got {}",
                index_count(r),
                coeffs.len()
            )));
        }
        Ok(Self { r, coeffs })
    }

    /// The zero function at cap `r`.
    pub fn zeros(r: u32) -> Self {
        Self {
            r,
            coeffs: vec![0.0; index_count(r)],
        }
    }

    /// Level cap.
    #[inline]
    pub fn cap(&self) -> u32 {
        self.r
    }

    /// Coefficients in flat-index order.
    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Mutable coefficient access (flat-index order).
    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient of `psi_i`.
    #[inline]
    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs[i - 1]
    }

    /// Evaluates the expansion at `x`, exact at dyadic breakpoints.
    ///
    /// Costs `O(r)`: at most one hat per level is nonzero at any point.
    pub fn eval(&self, x: f64) -> f64 {
        let u = wrap_unit(x);
        let mut acc = self.coeffs[0] * eval_basis(1, u);
        for j in 0..=self.r {
            let n = 1usize << j;
            let k = ((u * n as f64) as usize + 1).min(n);
            let i = n + k;
            let c = self.coeffs[i - 1];
            if c != 0.0 {
                acc += c * hat(u * n as f64 - (k - 1) as f64);
            }
        }
        acc
    }

    /// Values on the dyadic grid `m * 2^{-(r+1)}`, `m = 0..2^{r+1}`.
    /// Together with periodicity these determine the expansion.
    pub fn dyadic_values(&self) -> Vec<f64> {
        let n = index_count(self.r);
        (0..n).map(|m| self.eval(m as f64 / n as f64)).collect()
    }

    /// `sup_i 2^{beta * level(i)} |z_i|` over the stored indices.
    pub fn besov_seminorm(&self, beta: f64) -> SmoothnessReport {
        assert!(beta > 0.0, "besov seminorm needs beta > 0");
        let seminorm = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, z)| (beta * level(idx + 1) as f64).exp2() * z.abs())
            .fold(0.0_f64, f64::max);
        SmoothnessReport { beta, seminorm }
    }

    /// Drops all coefficients above level `r`.
    pub fn truncate(&self, r: u32) -> Result<Self> {
        if r > self.r {
            return Err(Error::InvalidParam(format!(
                "cannot truncate cap {} expansion to cap {r}",
                self.r
            )));
        }
        Ok(Self {
            r,
            coeffs: self.coeffs[..index_count(r)].to_vec(),
        })
    }

    /// Zero-extends the coefficient vector to a deeper cap; the function is
    /// unchanged.
    pub fn pad_to(&self, r: u32) -> Result<Self> {
        if r < self.r {
            return Err(Error::InvalidParam(format!(
                "cannot pad cap {} expansion down to cap {r}",
                self.r
            )));
        }
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(index_count(r), 0.0);
        Ok(Self { r, coeffs })
    }

    /// Pointwise difference `self - other`, at the deeper of the two caps.
    pub fn sub(&self, other: &Self) -> Self {
        let r = self.r.max(other.r);
        let mut a = self.pad_to(r).expect("padding up");
        for (c, o) in a.coeffs.iter_mut().zip(other.pad_to(r).expect("padding up").coeffs) {
            *c -= o;
        }
        a
    }

    /// Scales all coefficients in place by `s`.
    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    /// `L^p` norm over one period, exact for every `p in [1, inf]`.
    ///
    /// The function is linear on each dyadic cell, so `|f|^p` integrates in
    /// closed form per cell via the signed antiderivative of `|x|^p`; no
    /// quadrature tolerance enters.
    pub fn norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidParam(format!("norm order p={p} not in [1, inf]")));
        }
        let vals = self.dyadic_values();
        let n = vals.len();
        if p.is_infinite() {
            return Ok(vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        }
        let h = 1.0 / n as f64;
        let mut total = 0.0;
        for m in 0..n {
            let a = vals[m];
            let b = vals[(m + 1) % n];
            total += h * segment_mean_abs_pow(a, b, p);
        }
        Ok(total.powf(1.0 / p))
    }
}

/// Mean of `|a + (b - a) t|^p` over `t in [0, 1]`.
///
/// `F(x) = sign(x) |x|^{p+1} / (p+1)` is an antiderivative of `|x|^p` on all
/// of `R`, which covers sign-changing segments without splitting.
fn segment_mean_abs_pow(a: f64, b: f64, p: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        return 0.0;
    }
    if (b - a).abs() <= 1e-9 * scale {
        return (0.5 * (a + b)).abs().powf(p);
    }
    if p == 2.0 {
        return (a * a + a * b + b * b) / 3.0;
    }
    let f = |x: f64| x.signum() * x.abs().powf(p + 1.0) / (p + 1.0);
    (f(b) - f(a)) / (b - a)
}

/// Constant-time evaluator for an expansion, backed by its dyadic grid values.
///
/// The expansion is linear between grid points, so interpolating the table
/// reproduces it exactly; use this on hot paths (simulation, likelihood sums)
/// instead of the per-level [`Expansion::eval`].
#[derive(Clone, Debug)]
pub struct GridInterp {
    values: Vec<f64>,
}

impl GridInterp {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let u = wrap_unit(x) * n as f64;
        let cell = (u as usize).min(n - 1);
        let frac = u - cell as f64;
        let lo = self.values[cell];
        let hi = self.values[(cell + 1) % n];
        lo + frac * (hi - lo)
    }
}

impl Expansion {
    /// Builds the grid-backed evaluator.
    pub fn interpolant(&self) -> GridInterp {
        GridInterp {
            values: self.dyadic_values(),
        }
    }
}

/// Recovers the unique expansion interpolating periodic values on the dyadic
/// grid `m * 2^{-(r+1)}`, `m = 0..2^{r+1}` (the value at 1 equals the value at
/// 0 and is not passed).
///
/// Level 0 reads off `z_1 = f(0)` and `z_{0,1} = f(1/2)`; deeper coefficients
/// are midpoint displacements `f(mid) - (f(left) + f(right)) / 2` over their
/// support cells.
pub fn expand_dyadic(values: &[f64]) -> Result<Expansion> {
    let n = values.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "dyadic value vector length must be 2^(r+1) >= 2, got {n}"
        )));
    }
    let r = n.ilog2() - 1;
    let mut coeffs = vec![0.0; n];
    coeffs[0] = values[0];
    coeffs[1] = values[n / 2];
    for j in 1..=r {
        let stride = n >> j;
        for k in 1..=(1usize << j) {
            let left = (k - 1) * stride;
            let right = (k * stride) % n;
            let mid = left + stride / 2;
            coeffs[flat_index(j, k) - 1] = values[mid] - 0.5 * (values[left] + values[right]);
        }
    }
    Expansion::new(r, coeffs)
}

/// Besov-type smoothness certificate: the seminorm value at a given `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub beta: f64,
    pub seminorm: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_eval(e: &Expansion, x: f64) -> f64 {
        (1..=e.coeffs().len())
            .map(|i| e.coeff(i) * eval_basis(i, x))
            .sum()
    }

    #[test]
    fn level_examples() {
        assert_eq!(level(1), 0);
        assert_eq!(level(2), 0);
        assert_eq!(level(3), 1);
        assert_eq!(level(4), 1);
        assert_eq!(level(5), 2);
        assert_eq!(level(8), 2);
        assert_eq!(level(9), 3);
    }

    #[test]
    #[should_panic(expected = "must be >= 1")]
    fn level_rejects_zero() {
        level(0);
    }

    #[test]
    fn hat_examples() {
        assert_eq!(hat(0.25), 0.5);
        assert_eq!(hat(0.5), 1.0);
        assert_eq!(hat(1.5), 0.0);
        assert_eq!(hat(-0.25), 0.0);
        assert_eq!(hat(1.0), 0.0);
    }

    #[test]
    fn basis_peaks_and_periodicity() {
        assert_eq!(eval_basis(4, 0.75), 1.0);
        assert_eq!(eval_basis(1, 0.0), 1.0);
        assert_eq!(eval_basis(1, 0.5), 0.0);
        assert_eq!(eval_basis(3, 1.25), eval_basis(3, 0.25));
        assert_eq!(eval_basis(2, -0.75), eval_basis(2, 0.25));
        // psi_{j,k} peaks at (2k - 1) 2^{-(j+1)} with value 1.
        for i in 2..=32 {
            let (j, k) = double_index(i);
            let peak = (2 * k - 1) as f64 / (1u64 << (j + 1)) as f64;
            assert_eq!(eval_basis(i, peak), 1.0, "peak of psi_{i}");
        }
    }

    #[test]
    fn eval_matches_brute_force() {
        let r = 4;
        let coeffs: Vec<f64> = (1..=index_count(r))
            .map(|i| (-(level(i) as f64)).exp2())
            .collect();
        let e = Expansion::new(r, coeffs).unwrap();
        for &x in &[0.0, 0.1, 0.25, 1.0 / 3.0, 0.5, 0.7, 0.999] {
            let diff = (e.eval(x) - brute_force_eval(&e, x)).abs();
            assert!(diff < 1e-13, "x={x}: diff {diff}");
        }
    }

    #[test]
    fn eval_zero_and_unit() {
        assert_eq!(Expansion::zeros(3).eval(0.37), 0.0);
        let mut e = Expansion::zeros(1);
        e.coeffs_mut()[3] = 1.0; // i = 4
        assert_eq!(e.eval(0.75), 1.0);
    }

    #[test]
    fn expand_constant() {
        let e = expand_dyadic(&[3.5; 8]).unwrap();
        assert_eq!(e.coeff(1), 3.5);
        assert_eq!(e.coeff(2), 3.5);
        assert!(e.coeffs()[2..].iter().all(|&z| z == 0.0));
    }

    #[test]
    fn expand_reproduces_basis_function() {
        let n = 4;
        let values: Vec<f64> = (0..n).map(|m| eval_basis(3, m as f64 / n as f64)).collect();
        let e = expand_dyadic(&values).unwrap();
        assert_eq!(e.coeff(3), 1.0);
        for i in [1, 2, 4] {
            assert_eq!(e.coeff(i), 0.0);
        }
    }

    #[test]
    fn expand_sine_roundtrip() {
        let r = 4;
        let n = index_count(r);
        let values: Vec<f64> = (0..n)
            .map(|m| (2.0 * std::f64::consts::PI * m as f64 / n as f64).sin())
            .collect();
        let e = expand_dyadic(&values).unwrap();
        for (m, &v) in values.iter().enumerate() {
            assert!((e.eval(m as f64 / n as f64) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn expand_rejects_bad_length() {
        assert!(expand_dyadic(&[1.0; 3]).is_err());
        assert!(expand_dyadic(&[1.0; 1]).is_err());
        assert!(expand_dyadic(&[]).is_err());
    }

    #[test]
    fn besov_examples() {
        assert_eq!(Expansion::zeros(4).besov_seminorm(1.0).seminorm, 0.0);
        let mut e = Expansion::zeros(3);
        e.coeffs_mut()[flat_index(3, 1) - 1] = 0.5;
        assert_eq!(e.besov_seminorm(1.0).seminorm, 4.0);
        let beta = 0.7;
        let coeffs: Vec<f64> = (1..=index_count(5))
            .map(|i| (-(beta * level(i) as f64)).exp2())
            .collect();
        let e = Expansion::new(5, coeffs).unwrap();
        assert!((e.besov_seminorm(beta).seminorm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncate_behaviour() {
        let coeffs: Vec<f64> = (0..index_count(3)).map(|i| i as f64).collect();
        let e = Expansion::new(3, coeffs).unwrap();
        assert_eq!(e.truncate(3).unwrap(), e);
        let t0 = e.truncate(0).unwrap();
        assert_eq!(t0.coeffs(), &[0.0, 1.0]);
        assert!(e.truncate(4).is_err());
    }

    #[test]
    fn norms_of_single_tent() {
        for r in [2u32, 4] {
            let mut e = Expansion::zeros(r);
            e.coeffs_mut()[flat_index(r, 2) - 1] = 1.0;
            assert_eq!(e.norm(f64::INFINITY).unwrap(), 1.0);
            let l2 = e.norm(2.0).unwrap();
            let expect = ((-(r as f64)).exp2() / 3.0).sqrt();
            assert!((l2 - expect).abs() < 1e-14, "r={r}");
        }
    }

    #[test]
    fn norm_of_constant_is_abs() {
        let e = expand_dyadic(&[-2.5; 16]).unwrap();
        for p in [1.0, 2.0, 3.0, 7.5, f64::INFINITY] {
            assert!((e.norm(p).unwrap() - 2.5).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn l2_norm_matches_simpson() {
        // Fixed pseudo-random coefficients at cap 3.
        let coeffs: Vec<f64> = (0..16)
            .map(|i| ((i * 2654435761u64 as usize) % 1000) as f64 / 500.0 - 1.0)
            .collect();
        let e = Expansion::new(3, coeffs).unwrap();
        let n = 1 << 14;
        let h = 1.0 / n as f64;
        let mut sum = 0.0;
        for m in 0..n {
            let x0 = m as f64 * h;
            let f0 = e.eval(x0).powi(2);
            let fm = e.eval(x0 + 0.5 * h).powi(2);
            let f1 = e.eval(x0 + h).powi(2);
            sum += h / 6.0 * (f0 + 4.0 * fm + f1);
        }
        assert!((e.norm(2.0).unwrap() - sum.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn norm_rejects_small_p() {
        assert!(Expansion::zeros(2).norm(0.5).is_err());
    }

    #[test]
    fn disjoint_support_pairs() {
        assert!(!disjoint_interiors(1, 5));
        assert!(!disjoint_interiors(2, 7));
        assert!(disjoint_interiors(3, 4));
        assert!(!disjoint_interiors(3, 5));
        assert!(disjoint_interiors(5, 8));
        assert!(!disjoint_interiors(5, 3));
    }

    #[test]
    fn serde_expansion_shape() {
        let mut e = Expansion::zeros(0);
        e.coeffs_mut()[0] = 1.5;
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"{"r":0,"coeffs":[1.5,0.0]}"#);
        let back: Expansion = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }
}
