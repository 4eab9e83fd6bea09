//! Stationary distribution and convergence diagnostics of a row-stochastic
//! transition matrix.
//!
//! The stationary vector comes from left power iteration. The second
//! eigenvalue is found on the deflated operator `P̃ - 1 πᵀ`, which shares
//! every eigenvalue of `P̃` except the leading 1 (mapped to 0), using
//! two-dimensional subspace iteration in complex arithmetic with a
//! Rayleigh-Ritz step. A 2-D subspace holds a complex-conjugate pair.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::TransitionMatrix;

pub const DEFAULT_STATIONARY_TOL: f64 = 1e-12;
pub const DEFAULT_STATIONARY_MAX_ITERS: usize = 1_000_000;
pub const DEFAULT_MIXING_EPSILON: f64 = 1e-3;
pub const MIXING_HORIZON: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// `‖πP̃ - π‖₁` of the returned vector.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingOutcome {
    Steps(usize),
    NotReached,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    pub lambda2: Complex64,
    /// `1 - |λ₂|`.
    pub gap: f64,
    /// `arg λ₂`, in `[0, π]`.
    pub phase: f64,
    pub mixing: Option<MixingOutcome>,
    pub epsilon: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinTrajectory {
    pub bin_index: usize,
    /// `(start · P̃ⁿ)[bin_index]` for `n = 0..=steps`.
    pub values: Vec<f64>,
    pub steps: usize,
}

fn left_mul(pi: &Array1<f64>, m: &Array2<f64>) -> Array1<f64> {
    pi.dot(m)
}

/// Left power iteration from the uniform distribution.
pub fn stationary(m: &TransitionMatrix, tol: f64, max_iters: usize) -> Result<StationaryDistribution> {
    m.require_normalized()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive (got {tol})")));
    }
    let n = m.n_bins();
    let mut pi = Array1::from_elem(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    for iteration in 0..=max_iters {
        let mut next = left_mul(&pi, &m.values);
        residual = (&next - &pi).mapv(f64::abs).sum();
        if residual <= tol {
            return Ok(StationaryDistribution {
                pi: pi.to_vec(),
                residual,
                iterations: iteration,
            });
        }
        let total = next.sum();
        next.mapv_inplace(|v| v / total);
        pi = next;
    }
    Err(Error::NonConvergence {
        method: "stationary power iteration",
        iterations: max_iters,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Residual norm `‖A y - μ y‖` at which the Ritz pair is accepted.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iters: 200_000,
            seed: 0x5eed,
        }
    }
}

type CVec = Vec<Complex64>;

fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

/// Deflated operator `x ↦ P̃x - 1(πᵀx)`.
fn apply_deflated(m: &Array2<f64>, pi: &[f64], x: &[Complex64]) -> CVec {
    let shift: Complex64 = pi.iter().zip(x).map(|(p, v)| v * p).sum();
    m.rows()
        .into_iter()
        .map(|row| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, v) in row.iter().zip(x) {
                acc += v * p;
            }
            acc - shift
        })
        .collect()
}

/// Orthonormalizes `cols` in place (Gram-Schmidt, applied twice). Returns
/// false if the first column vanished.
fn orthonormalize(cols: &mut [CVec; 2], rng: &mut ChaCha8Rng) -> bool {
    let n0 = norm(&cols[0]);
    if !(n0 > 0.0) || !n0.is_finite() {
        return false;
    }
    cols[0].iter_mut().for_each(|v| *v /= n0);
    let scale = norm(&cols[1]).max(n0);
    for attempt in 0..4 {
        for _ in 0..2 {
            let proj = dot_conj(&cols[0], &cols[1]);
            let (q0, q1) = cols.split_at_mut(1);
            q1[0].iter_mut().zip(&q0[0]).for_each(|(v, q)| *v -= proj * q);
        }
        let n1 = norm(&cols[1]);
        if n1 > 1e-10 * scale || (attempt > 0 && n1 > 0.0) {
            cols[1].iter_mut().for_each(|v| *v /= n1);
            return true;
        }
        // dependent columns (rank-deficient operator): restart the second direction
        cols[1] = random_vector(rng, cols[0].len());
    }
    false
}

/// Eigenvalues of a 2×2 complex matrix with the eigenvector of the one of
/// largest modulus.
fn dominant_eigenpair(h: [[Complex64; 2]; 2]) -> (Complex64, [Complex64; 2]) {
    let half_trace = (h[0][0] + h[1][1]) * 0.5;
    let diff = (h[0][0] - h[1][1]) * 0.5;
    let disc = (diff * diff + h[0][1] * h[1][0]).sqrt();
    let (a, b) = (half_trace + disc, half_trace - disc);
    let mu = if b.norm() > a.norm() || (b.norm() == a.norm() && b.im > a.im) {
        b
    } else {
        a
    };
    let v1 = [h[0][1], mu - h[0][0]];
    let v2 = [mu - h[1][1], h[1][0]];
    let n = |v: &[Complex64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let (v, nv) = if n(&v1) >= n(&v2) { (v1, n(&v1)) } else { (v2, n(&v2)) };
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let g = if nv > 1e-300 {
        [v[0] / nv, v[1] / nv]
    } else if (mu - h[0][0]).norm() <= (mu - h[1][1]).norm() {
        [one, zero]
    } else {
        [zero, one]
    };
    (mu, g)
}

/// Canonical member of a conjugate pair (nonnegative imaginary part, exact
/// zero for numerically real values).
fn canonical(mu: Complex64) -> Complex64 {
    let im = if mu.im.abs() <= 1e-12 * mu.norm().max(1e-300) {
        0.0
    } else {
        mu.im.abs()
    };
    Complex64::new(mu.re, im)
}

fn summary(lambda2: Complex64, iterations: usize) -> SpectralSummary {
    let modulus = lambda2.norm();
    SpectralSummary {
        lambda2,
        gap: 1.0 - modulus,
        phase: if modulus == 0.0 { 0.0 } else { lambda2.arg() },
        mixing: None,
        epsilon: None,
        iterations,
    }
}

/// Second-largest eigenvalue (by modulus) of a normalized transition
/// matrix, given its stationary distribution.
pub fn second_eigenvalue(
    m: &TransitionMatrix,
    pi: &StationaryDistribution,
    opts: &EigenOptions,
) -> Result<SpectralSummary> {
    m.require_normalized()?;
    let n = m.n_bins();
    if pi.pi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: pi.pi.len(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidParams("need at least two states".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q = [random_vector(&mut rng, n), random_vector(&mut rng, n)];
    if !orthonormalize(&mut q, &mut rng) {
        return Err(Error::InvalidParams("degenerate start vectors".into()));
    }

    let mut previous = Complex64::new(f64::NAN, f64::NAN);
    let mut stagnant = 0usize;
    let mut residual = f64::INFINITY;
    for iteration in 1..=opts.max_iters {
        let mut w = [
            apply_deflated(&m.values, &pi.pi, &q[0]),
            apply_deflated(&m.values, &pi.pi, &q[1]),
        ];
        let scale = norm(&w[0]).max(norm(&w[1]));
        if scale == 0.0 {
            // deflated operator annihilates the subspace: every other eigenvalue is 0
            return Ok(summary(Complex64::new(0.0, 0.0), iteration));
        }
        let h = [
            [dot_conj(&q[0], &w[0]), dot_conj(&q[0], &w[1])],
            [dot_conj(&q[1], &w[0]), dot_conj(&q[1], &w[1])],
        ];
        let (mu, g) = dominant_eigenpair(h);
        residual = (0..n)
            .map(|i| (w[0][i] * g[0] + w[1][i] * g[1] - mu * (q[0][i] * g[0] + q[1][i] * g[1])).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let mu = canonical(mu);
        if mu.norm() >= 1.0 + 1e-9 {
            return Err(Error::InvalidParams(format!(
                "|λ₂| = {} ≥ 1; matrix is not a normalized irreducible kernel",
                mu.norm()
            )));
        }
        if (mu - previous).norm() <= 1e-15 {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        previous = mu;
        if residual <= opts.tol || (stagnant >= 50 && residual <= 1e-9) {
            return Ok(summary(mu, iteration));
        }
        if !orthonormalize(&mut w, &mut rng) {
            return Ok(summary(Complex64::new(0.0, 0.0), iteration));
        }
        q = w;
    }
    Err(Error::NonConvergence {
        method: "deflated subspace iteration",
        iterations: opts.max_iters,
        residual,
    })
}

/// Worst-case total-variation distance `max_i ½‖e_iᵀ M - π‖₁`.
fn worst_tv(power: &Array2<f64>, pi: &[f64]) -> f64 {
    power
        .rows()
        .into_iter()
        .map(|row| 0.5 * row.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest `n ≥ 1` with every row of `P̃ⁿ` within total variation
/// `epsilon` of `π`.
pub fn mixing_steps(m: &TransitionMatrix, pi: &StationaryDistribution, epsilon: f64) -> Result<usize> {
    mixing_steps_capped(m, pi, epsilon, MIXING_HORIZON)
}

pub fn mixing_steps_capped(
    m: &TransitionMatrix,
    pi: &StationaryDistribution,
    epsilon: f64,
    cap: usize,
) -> Result<usize> {
    m.require_normalized()?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon must be positive (got {epsilon})"
        )));
    }
    if pi.pi.len() != m.n_bins() {
        return Err(Error::DimensionMismatch {
            expected: m.n_bins(),
            actual: pi.pi.len(),
        });
    }
    let mut power = m.values.clone();
    let mut distance = worst_tv(&power, &pi.pi);
    for step in 1..=cap {
        if distance <= epsilon {
            return Ok(step);
        }
        if step == cap {
            break;
        }
        power = power.dot(&m.values);
        distance = worst_tv(&power, &pi.pi);
    }
    Err(Error::HorizonExceeded { cap, distance })
}

/// Eigenvalue summary plus mixing steps; a horizon overrun is reported as
/// [`MixingOutcome::NotReached`] rather than an error.
pub fn spectral_summary(
    m: &TransitionMatrix,
    pi: &StationaryDistribution,
    epsilon: f64,
    opts: &EigenOptions,
) -> Result<SpectralSummary> {
    let mut s = second_eigenvalue(m, pi, opts)?;
    s.mixing = Some(match mixing_steps(m, pi, epsilon) {
        Ok(n) => MixingOutcome::Steps(n),
        Err(Error::HorizonExceeded { .. }) => MixingOutcome::NotReached,
        Err(e) => return Err(e),
    });
    s.epsilon = Some(epsilon);
    Ok(s)
}

/// Evolution of one bin's probability under `start · P̃ⁿ`.
pub fn bin_trajectory(m: &TransitionMatrix, bin_index: usize, start: &[f64], steps: usize) -> Result<BinTrajectory> {
    m.require_normalized()?;
    let n = m.n_bins();
    if bin_index >= n {
        return Err(Error::InvalidBin {
            index: bin_index,
            n_bins: n,
        });
    }
    if start.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: start.len(),
        });
    }
    let total: f64 = start.iter().sum();
    if (total - 1.0).abs() > 1e-9 || start.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParams("start must be a probability vector".into()));
    }
    let mut state = Array1::from(start.to_vec());
    let mut values = Vec::with_capacity(steps + 1);
    values.push(state[bin_index]);
    for _ in 0..steps {
        state = left_mul(&state, &m.values);
        values.push(state[bin_index]);
    }
    Ok(BinTrajectory {
        bin_index,
        values,
        steps,
    })
}

/// Portion of a decaying residual sequence that is past the initial
/// transient and still above round-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TailWindow {
    pub start: usize,
    pub end: usize,
}

impl TailWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl BinTrajectory {
    pub fn residuals(&self, target: f64) -> Vec<f64> {
        self.values.iter().map(|v| v - target).collect()
    }

    /// Window from where the envelope has dropped to `transient` times its
    /// peak, up to the last step whose envelope is still above `floor`.
    pub fn tail_window(&self, target: f64, transient: f64, floor: f64) -> Option<TailWindow> {
        let r = self.residuals(target);
        // envelope_n = max_{m >= n} |r_m|
        let mut envelope = vec![0.0; r.len()];
        let mut running = 0.0f64;
        for (e, v) in envelope.iter_mut().zip(&r).rev() {
            running = running.max(v.abs());
            *e = running;
        }
        let peak = envelope.first().copied()?;
        let start = envelope.iter().position(|&e| e <= transient * peak)?;
        let end = envelope.iter().rposition(|&e| e >= floor)?;
        (end > start + 2).then_some(TailWindow { start, end })
    }

    /// Slope of `ln |r_n|` over the window, fitted through the local maxima
    /// of `|r_n|` (or every point when the residual does not oscillate).
    pub fn log_envelope_slope(&self, target: f64, window: TailWindow) -> Option<f64> {
        let r = self.residuals(target);
        let abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
        let range = window.start..=window.end;
        let peaks: Vec<usize> = range
            .clone()
            .filter(|&n| n > 0 && n + 1 < abs.len())
            .filter(|&n| abs[n] >= abs[n - 1] && abs[n] > abs[n + 1])
            .collect();
        let points: Vec<usize> = if peaks.len() >= 4 {
            peaks
        } else {
            range.filter(|&n| abs[n] > 0.0).collect()
        };
        if points.len() < 2 {
            return None;
        }
        let xs: Vec<f64> = points.iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> = points.iter().map(|&n| abs[n].ln()).collect();
        let k = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        Some(sxy / sxx)
    }

    /// Oscillation frequency in cycles per step, from the number of sign
    /// changes of the residual over the window.
    pub fn zero_crossing_frequency(&self, target: f64, window: TailWindow) -> f64 {
        let r = self.residuals(target);
        let signs: Vec<bool> = r[window.start..=window.end]
            .iter()
            .filter(|v| **v != 0.0)
            .map(|v| *v > 0.0)
            .collect();
        let crossings = signs.windows(2).filter(|w| w[0] != w[1]).count();
        crossings as f64 / (2.0 * window.len() as f64)
    }
}
