//! System parameters, the photon arrival flux and its cumulative integral,
//! and the bin grid used to discretize relative timestamps.
//!
//! The arrival flux over one laser period `[0, t_r)` is a Gaussian pulse of
//! `S` expected photons centred at `tau` on top of `B` uniformly spread
//! background photons:
//!
//! ```text
//! flux(t) = S * N(t - tau; 0, sigma_t^2) + B / t_r
//! ```
//!
//! The Gaussian is not truncated or wrapped; when the pulse sits close to a
//! window edge the mass that escapes the window is simply lost, so the
//! one-period integral [`SystemParams::period_mass`] is slightly below
//! `S + B`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Largest bin count the dense builders accept.
pub const MAX_BINS: usize = 1 << 12;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

fn gaussian_pdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    (-0.5 * z * z).exp() / (sigma * SQRT_2PI)
}

/// The parameter tuple `(t_r, t_d, sigma_t, tau, S, B, n_b)`.
///
/// Times share one arbitrary unit. `signal` and `background` are expected
/// photons per laser cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub t_r: f64,
    pub t_d: f64,
    pub sigma_t: f64,
    pub tau: f64,
    #[serde(rename = "S", alias = "signal")]
    pub signal: f64,
    #[serde(rename = "B", alias = "background")]
    pub background: f64,
    pub n_b: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            t_r: 100.0,
            t_d: 75.0,
            sigma_t: 1.0,
            tau: 50.0,
            signal: 3.0,
            background: 3.0,
            n_b: 256,
        }
    }
}

impl SystemParams {
    /// Builds and validates a parameter set.
    pub fn new(t_r: f64, t_d: f64, sigma_t: f64, tau: f64, signal: f64, background: f64, n_b: usize) -> Result<Self> {
        let p = Self {
            t_r,
            t_d,
            sigma_t,
            tau,
            signal,
            background,
            n_b,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_levels(mut self, signal: f64, background: f64) -> Self {
        self.signal = signal;
        self.background = background;
        self
    }

    pub fn with_dead_time(mut self, t_d: f64) -> Self {
        self.t_d = t_d;
        self
    }

    pub fn with_bins(mut self, n_b: usize) -> Self {
        self.n_b = n_b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        let all_finite = [self.t_r, self.t_d, self.sigma_t, self.tau, self.signal, self.background]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return fail("all parameters must be finite".into());
        }
        if self.t_r <= 0.0 {
            return fail(format!("t_r must be positive (got {})", self.t_r));
        }
        if self.sigma_t <= 0.0 {
            return fail(format!("sigma_t must be positive (got {})", self.sigma_t));
        }
        if self.t_d < 0.0 {
            return fail(format!("t_d must be nonnegative (got {})", self.t_d));
        }
        if !(0.0..self.t_r).contains(&self.tau) {
            return fail(format!("tau must lie in [0, t_r) (got {})", self.tau));
        }
        if self.signal < 0.0 || self.background < 0.0 {
            return fail("S and B must be nonnegative".into());
        }
        if self.signal + self.background <= 0.0 {
            return fail("S + B must be positive".into());
        }
        if self.n_b < 2 {
            return fail(format!("n_b must be at least 2 (got {})", self.n_b));
        }
        Ok(())
    }

    /// Total expected photons per cycle, `Λ = S + B`.
    pub fn total_flux(&self) -> f64 {
        self.signal + self.background
    }

    /// Bin width `Δ = t_r / n_b`.
    pub fn bin_width(&self) -> f64 {
        self.t_r / self.n_b as f64
    }

    /// Relative dead time `x_d = t_d mod t_r`.
    pub fn relative_dead_time(&self) -> f64 {
        let x = self.t_d % self.t_r;
        if x < 0.0 {
            x + self.t_r
        } else {
            x
        }
    }

    /// Dead time measured in bins, `x_d / Δ`.
    pub fn dead_time_in_bins(&self) -> f64 {
        self.relative_dead_time() * self.n_b as f64 / self.t_r
    }

    /// Row shift `l = ⌈x_d / Δ⌉`, in `0..=n_b`.
    pub fn shift(&self) -> usize {
        let u = self.dead_time_in_bins();
        // x_d that is a bin multiple up to round-off must not pick up an extra bin.
        let nearest = u.round();
        let l = if (u - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest
        } else {
            u.ceil()
        };
        (l as usize).min(self.n_b)
    }

    /// Maximum of the flux over one period.
    pub fn peak_flux(&self) -> f64 {
        self.signal * gaussian_pdf(0.0, self.sigma_t) + self.background / self.t_r
    }

    /// Integral of the flux over one full period, `F(t_r)`.
    pub fn period_mass(&self) -> f64 {
        cumulative_flux_unchecked(self, self.t_r)
    }

    pub fn grid(&self) -> StateGrid {
        StateGrid::new(self.t_r, self.n_b)
    }
}

/// Bin centers `s_i = (i - 1/2) Δ`, `i = 1..=n_b`, over `[0, t_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    t_r: f64,
    delta: f64,
    centers: Vec<f64>,
}

impl StateGrid {
    pub fn new(t_r: f64, n_b: usize) -> Self {
        let delta = t_r / n_b as f64;
        let centers = (0..n_b).map(|k| (k as f64 + 0.5) * delta).collect();
        Self { t_r, delta, centers }
    }

    pub fn n_bins(&self) -> usize {
        self.centers.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn period(&self) -> f64 {
        self.t_r
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Zero-based index of the bin `((k-1)Δ, kΔ]` containing `t`.
    ///
    /// `t = 0` is assigned to the first bin.
    pub fn bin_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.t_r).contains(&t) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                domain: format!("[0, {}]", self.t_r),
            });
        }
        Ok(self.bin_index_unchecked(t))
    }

    pub(crate) fn bin_index_unchecked(&self, t: f64) -> usize {
        let k = (t / self.delta).ceil() as usize;
        k.clamp(1, self.n_bins()) - 1
    }

    /// Maps `t` to the center of the bin that contains it.
    pub fn discretize(&self, t: f64) -> Result<f64> {
        self.bin_index(t).map(|k| self.centers[k])
    }

    /// Discretization extended periodically to all nonnegative times:
    /// `q t_r + D(r)` for `t = q t_r + r`, `r` in `[0, t_r)`.
    pub(crate) fn discretize_periodic(&self, t: f64) -> f64 {
        let q = (t / self.t_r).floor();
        let r = t - q * self.t_r;
        let r = if r >= self.t_r { r - self.t_r } else { r };
        q * self.t_r + self.centers[self.bin_index_unchecked(r.max(0.0))]
    }
}

fn check_period(params: &SystemParams, t: f64) -> Result<()> {
    if (0.0..params.t_r).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "t",
            value: t,
            domain: format!("[0, {})", params.t_r),
        })
    }
}

/// Photon arrival flux `λ(t)` over one period.
pub fn flux(params: &SystemParams, t: f64) -> Result<f64> {
    check_period(params, t)?;
    Ok(flux_unchecked(params, t))
}

pub(crate) fn flux_unchecked(params: &SystemParams, t: f64) -> f64 {
    params.signal * gaussian_pdf(t - params.tau, params.sigma_t) + params.background / params.t_r
}

/// Normalized arrival density `λ(t) / Λ`.
pub fn arrival_pdf(params: &SystemParams, t: f64) -> Result<f64> {
    flux(params, t).map(|f| f / params.total_flux())
}

/// Cumulative flux `F(t) = ∫_0^t λ`, for `t` in `[0, t_r]`.
pub fn cumulative_flux(params: &SystemParams, t: f64) -> Result<f64> {
    if !(0.0..=params.t_r).contains(&t) {
        return Err(Error::Domain {
            what: "t",
            value: t,
            domain: format!("[0, {}]", params.t_r),
        });
    }
    Ok(cumulative_flux_unchecked(params, t))
}

pub(crate) fn cumulative_flux_unchecked(params: &SystemParams, t: f64) -> f64 {
    let z = |x: f64| (x - params.tau) / params.sigma_t;
    let pulse = std_normal_cdf(z(t)) - std_normal_cdf(z(0.0));
    params.signal * pulse + params.background * t / params.t_r
}

/// [`cumulative_flux_unchecked`] at every point of `ts`, evaluating the
/// lower-limit term once.
pub(crate) fn cumulative_flux_at(params: &SystemParams, ts: &[f64]) -> Vec<f64> {
    let z = |x: f64| (x - params.tau) / params.sigma_t;
    let origin = std_normal_cdf(z(0.0));
    ts.iter()
        .map(|&t| params.signal * (std_normal_cdf(z(t)) - origin) + params.background * t / params.t_r)
        .collect()
}

/// `∫ λ̃` over `[lo, hi]` for the periodic replica `λ̃`, `0 <= lo <= hi`.
///
/// Whole periods contribute `F(t_r)` each; the partial ends are cumulative
/// flux differences.
pub(crate) fn periodic_integral(params: &SystemParams, lo: f64, hi: f64) -> f64 {
    let split = |t: f64| {
        let q = (t / params.t_r).floor();
        let r = (t - q * params.t_r).clamp(0.0, params.t_r);
        (q, r)
    };
    let (q_lo, r_lo) = split(lo);
    let (q_hi, r_hi) = split(hi);
    (q_hi - q_lo) * params.period_mass() + cumulative_flux_unchecked(params, r_hi)
        - cumulative_flux_unchecked(params, r_lo)
}
