//! Path simulation for `dX_t = b(X_t) dt + dW_t` with 1-periodic drift,
//! the discretised log-likelihood, and the empirical occupation density of
//! the path on the circle.
//!
//! The integrator is plain Euler-Maruyama on a uniform grid. Estimation
//! consumes Ito sums over the same grid, so the discretisation enters both
//! sides of the inference identically; the Ito sums always use the left
//! endpoint.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{wrap_unit, Expansion};
use crate::{Error, Result};

/// Discretely observed trajectory on a uniform time grid.
///
/// `values[m]` is `X_{m dt}` for `m = 0..=steps`, so `values.len() ==
/// steps + 1` and the horizon is `steps * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedPath {
    dt: f64,
    values: Vec<f64>,
}

impl ObservedPath {
    /// Wraps raw grid values; needs at least the initial point.
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
        }
        if values.is_empty() {
            return Err(Error::Dimension("path needs at least one value".into()));
        }
        Ok(Self { dt, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    /// Number of increments.
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    /// Horizon `T = steps * dt`.
    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }
}

/// Number of grid steps for horizon `t`; rejects `t` not an integer multiple
/// of `dt` (up to 1e-9 relative rounding).
pub fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("need t, dt > 0, got t={t}, dt={dt}")));
    }
    let ratio = t / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
        return Err(Error::Config(format!("horizon {t} is not an integer multiple of dt {dt}")));
    }
    Ok(steps as usize)
}

/// Simulates the SDE by Euler-Maruyama: `X_{m+1} = X_m + b(X_m) dt +
/// sqrt(dt) N(0,1)`.
///
/// Fails if the drift returns a non-finite value.
pub fn simulate_path<F, R>(drift: F, x0: f64, t: f64, dt: f64, rng: &mut R) -> Result<ObservedPath>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    let steps = step_count(t, dt)?;
    let sqrt_dt = dt.sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    values.push(x0);
    let mut x = x0;
    for m in 0..steps {
        let b = drift(x);
        if !b.is_finite() {
            return Err(Error::Simulation(format!(
                "drift returned {b} at x={x} (step {m})"
            )));
        }
        let noise: f64 = rng.sample(StandardNormal);
        x += b * dt + sqrt_dt * noise;
        values.push(x);
    }
    ObservedPath::new(dt, values)
}

/// Discretised log-likelihood of drift `s * b`:
/// `sum_m s b(X_m) (X_{m+1} - X_m) - 1/2 sum_m s^2 b(X_m)^2 dt`.
pub fn loglik(b: &Expansion, path: &ObservedPath, s: f64) -> f64 {
    // The expansion is piecewise linear on its dyadic grid; interpolate the
    // precomputed grid values instead of summing basis functions per step.
    let interp = b.interpolant();
    let eval = |x: f64| interp.eval(x);
    let values = path.values();
    let dt = path.dt();
    let mut ito = 0.0;
    let mut quad = 0.0;
    for m in 0..path.steps() {
        let bx = eval(values[m]);
        ito += bx * (values[m + 1] - values[m]);
        quad += bx * bx;
    }
    s * ito - 0.5 * s * s * quad * dt
}

/// Histogram estimate of the occupation density of `X_t mod 1`.
#[derive(Clone, Debug)]
pub struct OccupationDensity {
    nbins: usize,
    density: Vec<f64>,
}

impl OccupationDensity {
    pub fn nbins(&self) -> usize {
        self.nbins
    }

    /// Density values per bin; `sum(density) / nbins == 1` exactly.
    pub fn density(&self) -> &[f64] {
        &self.density
    }
}

/// Bins the left endpoints of the path modulo 1, weighting each by `dt` and
/// normalising by the horizon, so the result integrates to exactly 1.
pub fn occupation_density(path: &ObservedPath, nbins: usize) -> Result<OccupationDensity> {
    if nbins < 2 {
        return Err(Error::InvalidParam(format!("need nbins >= 2, got {nbins}")));
    }
    if path.steps() == 0 {
        return Err(Error::Dimension("occupation density needs at least one step".into()));
    }
    let mut counts = vec![0u64; nbins];
    for &x in &path.values()[..path.steps()] {
        let bin = ((wrap_unit(x) * nbins as f64) as usize).min(nbins - 1);
        counts[bin] += 1;
    }
    let steps = path.steps() as f64;
    let density = counts
        .iter()
        .map(|&c| c as f64 / steps * nbins as f64)
        .collect();
    Ok(OccupationDensity { nbins, density })
}

const PATH_MAGIC: &[u8; 4] = b"CDRF";
const PATH_VERSION: u32 = 1;

/// Writes the binary path dump: magic `CDRF`, version u32, dt f64, x0 f64,
/// value count u64, seed u64, then the values as little-endian f64.
pub fn write_path<W: Write>(w: &mut W, path: &ObservedPath, seed: u64) -> std::io::Result<()> {
    w.write_all(PATH_MAGIC)?;
    w.write_all(&PATH_VERSION.to_le_bytes())?;
    w.write_all(&path.dt().to_le_bytes())?;
    w.write_all(&path.x0().to_le_bytes())?;
    w.write_all(&(path.values().len() as u64).to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    for v in path.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a binary path dump written by [`write_path`]; returns the path and
/// the recorded seed.
pub fn read_path<R: Read>(r: &mut R) -> Result<(ObservedPath, u64)> {
    let io_err = |e: std::io::Error| Error::Config(format!("path dump read failed: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != PATH_MAGIC {
        return Err(Error::Config("not a path dump (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io_err)?;
    let version = u32::from_le_bytes(b4);
    if version != PATH_VERSION {
        return Err(Error::Config(format!("unsupported path dump version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(io_err)?;
    let dt = f64::from_le_bytes(b8);
    r.read_exact(&mut b8).map_err(io_err)?;
    let x0 = f64::from_le_bytes(b8);
    r.read_exact(&mut b8).map_err(io_err)?;
    let count = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8).map_err(io_err)?;
    let seed = u64::from_le_bytes(b8);
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b8).map_err(io_err)?;
        values.push(f64::from_le_bytes(b8));
    }
    let path = ObservedPath::new(dt, values)?;
    if (path.x0() - x0).abs() > 0.0 {
        return Err(Error::Config("path dump header x0 disagrees with data".into()));
    }
    Ok((path, seed))
}
