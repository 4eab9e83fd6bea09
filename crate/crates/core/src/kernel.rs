//! Transition matrices of the relative-timestamp Markov chain.
//!
//! Two constructions are provided:
//!
//! * [`build_baseline`] evaluates every entry independently from the
//!   integral form of the transition kernel, splitting the integral of the
//!   periodic flux into whole periods plus partial segments.
//! * [`build_fast`] uses the cumulative-flux form. The dead-time-free
//!   exponent matrix is an outer product of `exp(F(s_i))` and `exp(-F(s_j))`
//!   with a wrap factor below the diagonal, and dead time enters only as a
//!   circular roll of its rows by `l = ⌈x_d / Δ⌉`.
//!
//! Both return the unnormalized kernel `P`; [`normalize_rows`] produces the
//! row-stochastic `P̃`. The constant prefactor `1 / (1 - e^{-Λ})` of the
//! continuous kernel is dropped since row normalization absorbs it.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    cumulative_flux_at, cumulative_flux_unchecked, flux_unchecked, periodic_integral, SystemParams, MAX_BINS,
};

/// Above this period mass the factored `exp(F_i) * exp(-F_j)` form could
/// overflow, and entries are exponentiated one by one instead.
const FACTORED_MASS_LIMIT: f64 = 600.0;

/// Rows per rayon task.
const ROWS_PER_TASK: usize = 32;

/// Matrices with fewer entries are filled on the calling thread; handing
/// them to the pool costs more than the work.
const PARALLEL_MIN_ENTRIES: usize = 1 << 16;

/// Calls `fill(row_index, row)` for every row of a square row-major buffer.
fn fill_rows<F>(values: &mut Array2<f64>, fill: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let n = values.ncols();
    let data = values.as_slice_mut().expect("standard layout");
    if data.len() < PARALLEL_MIN_ENTRIES {
        data.chunks_mut(n).enumerate().for_each(|(i, out)| fill(i, out));
    } else {
        data.par_chunks_mut(n)
            .with_min_len(ROWS_PER_TASK)
            .enumerate()
            .for_each(|(i, out)| fill(i, out));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentKind {
    /// No dead time applied.
    Base,
    /// Rows rolled by the given shift.
    Shifted(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentMatrix {
    pub values: Array2<f64>,
    pub kind: ExponentKind,
}

impl ExponentMatrix {
    pub fn n_bins(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Baseline,
    Fast,
    /// Supplied directly by the caller.
    External,
}

/// Dense row-major transition kernel over the bin centers.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub values: Array2<f64>,
    pub normalized: bool,
    pub provenance: Provenance,
    pub params: Option<SystemParams>,
}

impl TransitionMatrix {
    /// Wraps a caller-supplied row-stochastic matrix.
    pub fn stochastic(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::DimensionMismatch {
                expected: rows,
                actual: cols,
            });
        }
        if rows == 0 {
            return Err(Error::InvalidParams("empty matrix".into()));
        }
        for row in values.rows() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::NotNormalized);
            }
        }
        Ok(Self {
            values,
            normalized: true,
            provenance: Provenance::External,
            params: None,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn max_abs_diff(&self, other: &TransitionMatrix) -> Result<f64> {
        if self.values.dim() != other.values.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.n_bins(),
                actual: other.n_bins(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        self.values
            .rows()
            .into_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::NotNormalized)
        }
    }
}

fn checked(params: &SystemParams) -> Result<()> {
    params.validate()?;
    if params.n_b > MAX_BINS {
        return Err(Error::InvalidParams(format!(
            "n_b = {} exceeds the dense limit {MAX_BINS}",
            params.n_b
        )));
    }
    Ok(())
}

/// Per-element construction from the integral form of the kernel.
///
/// Entry `(i, j)` integrates the periodic flux from the discretized
/// reactivation point `D(s_i + x_d)` to `D(b)`, where `b` is the first time
/// congruent to `s_j` that is not before `s_i + x_d`. Runs sequentially and
/// recomputes everything per entry.
pub fn build_baseline(params: &SystemParams) -> Result<TransitionMatrix> {
    checked(params)?;
    let n = params.n_b;
    let grid = params.grid();
    let centers = grid.centers();
    let x_d = params.relative_dead_time();
    let u = params.dead_time_in_bins();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        let reactivation = centers[i] + x_d;
        let lo = grid.discretize_periodic(reactivation);
        for j in 0..n {
            // (s_i + x_d - s_j) / t_r in bin units; exact for bin-aligned x_d
            let wraps = ((i as f64 - j as f64 + u) / n as f64).ceil().max(0.0);
            let hi = grid.discretize_periodic(wraps * params.t_r + centers[j]);
            let exponent = periodic_integral(params, lo, hi);
            values[[i, j]] = flux_unchecked(params, centers[j]) * (-exponent).exp();
        }
    }
    Ok(TransitionMatrix {
        values,
        normalized: false,
        provenance: Provenance::Baseline,
        params: Some(*params),
    })
}

/// Row generator for `E_base[r][j] = exp(-M·1{r > j} - F(s_j) + F(s_r))`.
struct BaseRows {
    up: Vec<f64>,
    down: Vec<f64>,
    cumulative: Vec<f64>,
    mass: f64,
    wrap: f64,
    factored: bool,
}

impl BaseRows {
    fn new(params: &SystemParams, centers: &[f64]) -> Self {
        let cumulative = cumulative_flux_at(params, centers);
        let mass = params.period_mass();
        let mid = 0.5 * (cumulative[0] + cumulative[cumulative.len() - 1]);
        let up: Vec<f64> = cumulative.iter().map(|f| (f - mid).exp()).collect();
        Self {
            down: up.iter().map(|u| u.recip()).collect(),
            up,
            factored: mass <= FACTORED_MASS_LIMIT,
            wrap: (-mass).exp(),
            cumulative,
            mass,
        }
    }

    fn fill(&self, r: usize, out: &mut [f64]) {
        if self.factored {
            let scale = self.up[r];
            let (below, rest) = out.split_at_mut(r);
            for (o, d) in below.iter_mut().zip(&self.down[..r]) {
                *o = scale * d * self.wrap;
            }
            for (o, d) in rest.iter_mut().zip(&self.down[r..]) {
                *o = scale * d;
            }
        } else {
            let fr = self.cumulative[r];
            for (j, o) in out.iter_mut().enumerate() {
                let wrap = if r > j { self.mass } else { 0.0 };
                *o = (-wrap - self.cumulative[j] + fr).exp();
            }
        }
    }
}

/// Dead-time-free exponent matrix `exp⊙(-M L - D)`.
pub fn build_base_exponent(params: &SystemParams) -> Result<ExponentMatrix> {
    checked(params)?;
    let n = params.n_b;
    let rows = BaseRows::new(params, params.grid().centers());
    let mut values = Array2::zeros((n, n));
    fill_rows(&mut values, |r, out| rows.fill(r, out));
    Ok(ExponentMatrix {
        values,
        kind: ExponentKind::Base,
    })
}

/// Applies the dead-time permutation: row `i` of the result is row
/// `(i + l) mod n_b` of the base matrix.
pub fn apply_deadtime_shift(base: &ExponentMatrix, params: &SystemParams) -> Result<ExponentMatrix> {
    let n = base.n_bins();
    if n != params.n_b || base.values.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: params.n_b,
            actual: n,
        });
    }
    if base.kind != ExponentKind::Base {
        return Err(Error::InvalidParams(
            "dead-time shift must be applied to a base exponent matrix".into(),
        ));
    }
    let l = params.shift();
    let mut values = Array2::zeros((n, n));
    for (i, mut row) in values.rows_mut().into_iter().enumerate() {
        row.assign(&base.values.row((i + l) % n));
    }
    Ok(ExponentMatrix {
        values,
        kind: ExponentKind::Shifted(l),
    })
}

/// Accelerated construction `P = (1 λᵀ) ⊙ J_l E_base`.
///
/// Fuses the base-row generation, the row roll and the column scaling into
/// one pass per row. The floating-point operations per entry are the same
/// as composing [`build_base_exponent`] and [`apply_deadtime_shift`], so
/// the two paths agree bit for bit.
pub fn build_fast(params: &SystemParams) -> Result<TransitionMatrix> {
    checked(params)?;
    let n = params.n_b;
    let l = params.shift();
    let grid = params.grid();
    let rows = BaseRows::new(params, grid.centers());
    let lambda: Vec<f64> = grid.centers().iter().map(|&s| flux_unchecked(params, s)).collect();
    let mut values = Array2::zeros((n, n));
    fill_rows(&mut values, |i, out| {
        rows.fill((i + l) % n, out);
        for (o, lam) in out.iter_mut().zip(&lambda) {
            *o *= lam;
        }
    });
    Ok(TransitionMatrix {
        values,
        normalized: false,
        provenance: Provenance::Fast,
        params: Some(*params),
    })
}

/// Divides every row by its sum.
pub fn normalize_rows(m: &TransitionMatrix) -> Result<TransitionMatrix> {
    let mut values = m.values.clone();
    for (i, mut row) in values.rows_mut().into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::ZeroRowSum { row: i, sum });
        }
        row.mapv_inplace(|v| v / sum);
    }
    Ok(TransitionMatrix {
        values,
        normalized: true,
        provenance: m.provenance,
        params: m.params,
    })
}

/// Exponent of the transition kernel for one pair of times, evaluated two
/// ways: `(integral form, cumulative-flux form)`.
///
/// The integral form runs from `D(x_k + x_d)` to `D(b)` with
/// `b = ⌈(x_k + x_d - x_next) / t_r⌉ t_r + x_next`. The cumulative-flux
/// form is `-M·1{D(x_k ⊕ x_d) > D(x_next)} - F(D(x_next)) + F(D(x_k ⊕ x_d))`.
pub fn exponent_equivalence_check(params: &SystemParams, x_k: f64, x_next: f64) -> Result<(f64, f64)> {
    params.validate()?;
    for (what, v) in [("x_k", x_k), ("x_next", x_next)] {
        if !(0.0..params.t_r).contains(&v) {
            return Err(Error::Domain {
                what,
                value: v,
                domain: format!("[0, {})", params.t_r),
            });
        }
    }
    let grid = params.grid();
    let x_d = params.relative_dead_time();

    let a = x_k + x_d;
    let wraps = ((a - x_next) / params.t_r).ceil().max(0.0);
    let b = wraps * params.t_r + x_next;
    let integral_form = -periodic_integral(params, grid.discretize_periodic(a), grid.discretize_periodic(b));

    let mut reactivation = a % params.t_r;
    if reactivation >= params.t_r {
        reactivation -= params.t_r;
    }
    let from = grid.discretize(reactivation)?;
    let to = grid.discretize(x_next)?;
    let wrap = if from > to { params.period_mass() } else { 0.0 };
    let cumulative_form = -wrap - cumulative_flux_unchecked(params, to) + cumulative_flux_unchecked(params, from);

    Ok((integral_form, cumulative_form))
}
