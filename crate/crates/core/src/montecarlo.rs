//! Monte Carlo reference: free-running detection of an inhomogeneous
//! Poisson photon stream with a fixed dead time after every registration.
//!
//! Arrivals are drawn by thinning. Candidates come from a homogeneous
//! process whose rate is piecewise constant over the period and bounds the
//! flux on each segment; a candidate at `t` is kept with probability
//! `λ̃(t) / bound`. The detector starts armed at `t = 0`, registers the first
//! kept arrival, and is rearmed `t_d` later. Because the candidate process
//! is memoryless, sampling simply restarts at the rearm time.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{flux_unchecked, StateGrid, SystemParams};

pub const DEFAULT_BURN_IN: usize = 100;
pub const MAX_HORIZON_CYCLES: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Detections discarded at the start of a run.
    pub burn_in: usize,
    /// Independent RNG stream of the seed.
    pub stream: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimestampBatch {
    /// `X_k = T_k mod t_r`.
    pub relative_timestamps: Vec<f64>,
    /// Cycle of each detection, `T_k = cycle_k · t_r + X_k`.
    pub detection_cycles: Vec<u64>,
    pub cycles_simulated: u64,
    pub seed: u64,
    pub stream: u64,
    pub burn_in: usize,
    pub params: SystemParams,
}

impl TimestampBatch {
    pub fn len(&self) -> usize {
        self.relative_timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relative_timestamps.is_empty()
    }

    /// Gaps `T_{k+1} - T_k` between consecutive retained detections.
    pub fn detection_gaps(&self) -> impl Iterator<Item = f64> + '_ {
        let t_r = self.params.t_r;
        self.detection_cycles
            .windows(2)
            .zip(self.relative_timestamps.windows(2))
            .map(move |(c, x)| (c[1] - c[0]) as f64 * t_r + (x[1] - x[0]))
    }

    /// One timestamp per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for x in &self.relative_timestamps {
            writeln!(out, "{x}")?;
        }
        Ok(())
    }
}

/// Piecewise-constant upper bound of the flux over one period.
#[derive(Debug, Clone)]
struct Envelope {
    width: f64,
    rates: Vec<f64>,
    t_r: f64,
}

impl Envelope {
    fn new(params: &SystemParams) -> Self {
        let segments = if params.signal == 0.0 {
            1
        } else {
            ((2.0 * params.t_r / params.sigma_t).ceil() as usize).clamp(16, 4096)
        };
        let width = params.t_r / segments as f64;
        let peak = params.signal / (params.sigma_t * (2.0 * std::f64::consts::PI).sqrt());
        let rates = (0..segments)
            .map(|k| {
                let (lo, hi) = (k as f64 * width, (k + 1) as f64 * width);
                let distance = if (lo..=hi).contains(&params.tau) {
                    0.0
                } else {
                    (params.tau - lo).abs().min((params.tau - hi).abs())
                };
                let z = distance / params.sigma_t;
                // small relative pad keeps the bound above the flux after rounding
                (peak * (-0.5 * z * z).exp() + params.background / params.t_r) * (1.0 + 1e-12)
            })
            .collect();
        Self {
            width,
            rates,
            t_r: params.t_r,
        }
    }

    fn segment(&self, phase: f64) -> usize {
        ((phase / self.width) as usize).min(self.rates.len() - 1)
    }

    /// Next candidate strictly after local time `t`, with its segment.
    fn next_candidate(&self, rng: &mut ChaCha8Rng, t: f64) -> (f64, usize) {
        let mut base = (t / self.t_r).floor() * self.t_r;
        let mut phase = t - base;
        let mut k = self.segment(phase);
        let mut budget: f64 = rng.sample(Exp1);
        loop {
            let rate = self.rates[k];
            let end = if k + 1 == self.rates.len() {
                self.t_r
            } else {
                (k + 1) as f64 * self.width
            };
            let room = (end - phase).max(0.0) * rate;
            if budget < room {
                return (base + phase + budget / rate, k);
            }
            budget -= room;
            k += 1;
            if k == self.rates.len() {
                k = 0;
                base += self.t_r;
                phase = 0.0;
            } else {
                phase = end;
            }
        }
    }
}

/// Simulates `cycles` laser periods with the default burn-in on stream 0.
pub fn simulate(params: &SystemParams, cycles: u64, seed: u64) -> Result<TimestampBatch> {
    simulate_with(params, cycles, seed, &SimOptions::default())
}

pub fn simulate_with(params: &SystemParams, cycles: u64, seed: u64, opts: &SimOptions) -> Result<TimestampBatch> {
    params.validate()?;
    if cycles == 0 {
        return Err(Error::InvalidParams("cycles must be at least 1".into()));
    }
    if cycles > MAX_HORIZON_CYCLES {
        return Err(Error::HorizonTooLong {
            cycles,
            max: MAX_HORIZON_CYCLES,
        });
    }
    if !(params.peak_flux() > 0.0) {
        return Err(Error::InvalidParams("flux bound must be positive".into()));
    }
    let t_r = params.t_r;
    let envelope = Envelope::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(opts.stream);

    let expected = (cycles as f64 * params.total_flux().min(t_r / params.t_d.max(1e-300))) as usize;
    let mut relative = Vec::with_capacity(expected.min(1 << 24));
    let mut detection_cycles = Vec::with_capacity(expected.min(1 << 24));
    let mut registered = 0usize;

    // local time measured from the start of cycle `epoch`
    let mut epoch: u64 = 0;
    let mut t = 0.0f64;
    loop {
        let (candidate, k) = envelope.next_candidate(&mut rng, t);
        let whole = (candidate / t_r).floor();
        epoch += whole as u64;
        let mut phase = candidate - whole * t_r;
        if phase >= t_r {
            phase -= t_r;
            epoch += 1;
        }
        let phase = phase.max(0.0);
        if epoch >= cycles {
            break;
        }
        let u: f64 = rng.random();
        if u * envelope.rates[k] < flux_unchecked(params, phase) {
            if registered >= opts.burn_in {
                relative.push(phase);
                detection_cycles.push(epoch);
            }
            registered += 1;
            t = phase + params.t_d;
        } else {
            t = phase;
        }
    }

    Ok(TimestampBatch {
        relative_timestamps: relative,
        detection_cycles,
        cycles_simulated: cycles,
        seed,
        stream: opts.stream,
        burn_in: opts.burn_in,
        params: *params,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    /// `counts / total`; `None` when the batch was empty.
    pub normalized: Option<Vec<f64>>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bins timestamps into `((k-1)Δ, kΔ]`, the same convention as
/// [`StateGrid::discretize`].
pub fn histogram(batch: &TimestampBatch, grid: &StateGrid) -> Result<Histogram> {
    if grid.n_bins() != batch.params.n_b {
        return Err(Error::DimensionMismatch {
            expected: batch.params.n_b,
            actual: grid.n_bins(),
        });
    }
    if grid.period() != batch.params.t_r {
        return Err(Error::InvalidParams("grid period differs from batch t_r".into()));
    }
    Ok(histogram_of(&batch.relative_timestamps, grid))
}

pub(crate) fn histogram_of(timestamps: &[f64], grid: &StateGrid) -> Histogram {
    let mut counts = vec![0u64; grid.n_bins()];
    for &x in timestamps {
        counts[grid.bin_index_unchecked(x)] += 1;
    }
    let total: u64 = counts.iter().sum();
    let normalized = (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect());
    Histogram { counts, normalized }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePdf {
    /// Mean of the per-run normalized histograms (non-empty runs only).
    pub pdf: Vec<f64>,
    pub runs: Vec<Histogram>,
    /// Runs that produced no detections after burn-in.
    pub empty_runs: usize,
}

impl ReferencePdf {
    /// Summed counts over all runs.
    pub fn counts(&self) -> Vec<u64> {
        let n = self.pdf.len();
        self.runs.iter().fold(vec![0; n], |mut acc, h| {
            acc.iter_mut().zip(&h.counts).for_each(|(a, c)| *a += c);
            acc
        })
    }

    /// RMSE between the means of the first and second half of the runs.
    pub fn split_half_rmse(&self) -> Option<f64> {
        let usable: Vec<&Vec<f64>> = self.runs.iter().filter_map(|h| h.normalized.as_ref()).collect();
        if usable.len() < 2 {
            return None;
        }
        let (a, b) = usable.split_at(usable.len() / 2);
        rmse(&mean_of(a), &mean_of(b)).ok()
    }
}

fn mean_of(vectors: &[&Vec<f64>]) -> Vec<f64> {
    let n = vectors[0].len();
    let mut mean = vec![0.0; n];
    for v in vectors {
        mean.iter_mut().zip(v.iter()).for_each(|(m, x)| *m += x);
    }
    let k = vectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    mean
}

/// Mean histogram over `runs` independent runs (stream `r` of `seed` for
/// run `r`), binned on the `n_b` grid of `params`.
pub fn reference_pdf(params: &SystemParams, runs: usize, cycles_per_run: u64, seed: u64) -> Result<ReferencePdf> {
    reference_pdf_with(params, runs, cycles_per_run, seed, DEFAULT_BURN_IN)
}

pub fn reference_pdf_with(
    params: &SystemParams,
    runs: usize,
    cycles_per_run: u64,
    seed: u64,
    burn_in: usize,
) -> Result<ReferencePdf> {
    if runs == 0 {
        return Err(Error::InvalidParams("runs must be at least 1".into()));
    }
    let grid = params.grid();
    let histograms = (0..runs as u64)
        .into_par_iter()
        .map(|stream| {
            let opts = SimOptions { burn_in, stream };
            simulate_with(params, cycles_per_run, seed, &opts)
                .map(|batch| histogram_of(&batch.relative_timestamps, &grid))
        })
        .collect::<Result<Vec<_>>>()?;
    let usable: Vec<&Vec<f64>> = histograms.iter().filter_map(|h| h.normalized.as_ref()).collect();
    let empty_runs = runs - usable.len();
    let pdf = if usable.is_empty() {
        vec![0.0; params.n_b]
    } else {
        mean_of(&usable)
    };
    Ok(ReferencePdf {
        pdf,
        runs: histograms,
        empty_runs,
    })
}

/// Root-mean-square difference of two equal-length vectors.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sq / a.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::cumulative_flux;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn params() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(simulate(&params().with_levels(0.0, 0.0), 10, 1).is_err());
        assert!(simulate(&params(), 0, 1).is_err());
        assert!(matches!(
            simulate(&params(), MAX_HORIZON_CYCLES + 1, 1),
            Err(Error::HorizonTooLong { .. })
        ));
        assert!(reference_pdf(&params(), 0, 10, 1).is_err());
    }

    #[test]
    fn envelope_bounds_flux() {
        for (s, tau, sigma) in [(3.0, 50.0, 1.0), (10.0, 0.2, 0.5), (0.5, 99.9, 3.0)] {
            let p = SystemParams {
                tau,
                sigma_t: sigma,
                ..params().with_levels(s, 0.2)
            };
            let env = Envelope::new(&p);
            for i in 0..20_000 {
                let t = i as f64 * 100.0 / 20_000.0;
                assert!(env.rates[env.segment(t)] >= flux_unchecked(&p, t));
            }
        }
    }

    #[test]
    fn timestamps_in_range_and_gated() {
        for td in [0.0, 30.0, 75.0, 95.0, 180.0] {
            let p = params().with_levels(6.0, 2.0).with_dead_time(td);
            let b = simulate(&p, 5_000, 7).unwrap();
            assert!(!b.is_empty());
            assert!(b.relative_timestamps.iter().all(|x| (0.0..100.0).contains(x)));
            let slack = 1e-12 * (p.t_r + p.t_d);
            assert!(b.detection_gaps().all(|g| g >= td - slack));
            assert!(b.detection_cycles.windows(2).all(|c| c[1] >= c[0]));
            assert!(b.detection_cycles.iter().all(|&c| c < 5_000));
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let p = params();
        let a = simulate(&p, 2_000, 42).unwrap();
        let b = simulate(&p, 2_000, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&p, 2_000, 43).unwrap();
        assert_ne!(a.relative_timestamps, c.relative_timestamps);
    }

    #[test]
    fn background_only_mean_interval() {
        // dead time plus an exponential wait with rate B / t_r
        let p = params().with_levels(0.0, 3.0).with_dead_time(40.0);
        let b = simulate(&p, 200_000, 11).unwrap();
        assert!(b.len() > 100_000);
        let gaps: Vec<f64> = b.detection_gaps().collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let expect = 40.0 + 100.0 / 3.0;
        assert!((mean - expect).abs() < 0.01 * expect, "{mean} vs {expect}");
    }

    #[test]
    fn thinning_matches_arrival_pdf_without_dead_time() {
        let p = params().with_levels(3.0, 3.0).with_dead_time(0.0).with_bins(64);
        let b = simulate(&p, 170_000, 3).unwrap();
        assert!(b.len() >= 1_000_000, "{}", b.len());
        let h = histogram(&b, &p.grid()).unwrap();
        let total = h.total() as f64;
        let mass = p.period_mass();
        let d = p.bin_width();
        let mut stat = 0.0;
        for (k, &c) in h.counts.iter().enumerate() {
            let lo = cumulative_flux(&p, k as f64 * d).unwrap();
            let hi = cumulative_flux(&p, (k + 1) as f64 * d).unwrap();
            let expected = total * (hi - lo) / mass;
            stat += (c as f64 - expected).powi(2) / expected;
        }
        let critical = ChiSquared::new(63.0).unwrap().inverse_cdf(0.999);
        assert!(stat < critical, "chi-square {stat} >= {critical}");
    }

    #[test]
    fn histogram_examples() {
        let p = params().with_bins(8);
        let grid = p.grid();
        let d = grid.delta();
        let mut batch = TimestampBatch {
            relative_timestamps: vec![d / 2.0],
            detection_cycles: vec![0],
            cycles_simulated: 1,
            seed: 0,
            stream: 0,
            burn_in: 0,
            params: p,
        };
        let h = histogram(&batch, &grid).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 0, 0, 0, 0, 0]);

        batch.relative_timestamps = grid.centers().to_vec();
        let h = histogram(&batch, &grid).unwrap();
        assert!(h.counts.iter().all(|&c| c == 1));
        assert!(h.normalized.unwrap().iter().all(|&v| v == 0.125));

        // a timestamp on an edge belongs to the lower bin
        batch.relative_timestamps = vec![d, 0.0];
        assert_eq!(histogram(&batch, &grid).unwrap().counts[0], 2);

        batch.relative_timestamps.clear();
        let h = histogram(&batch, &grid).unwrap();
        assert_eq!(h.total(), 0);
        assert!(h.normalized.is_none());

        assert!(histogram(&batch, &params().with_bins(16).grid()).is_err());
    }

    #[test]
    fn histogram_conserves_counts() {
        let p = params().with_bins(128);
        let b = simulate(&p, 3_000, 5).unwrap();
        let h = histogram(&b, &p.grid()).unwrap();
        assert_eq!(h.total() as usize, b.len());
        let s: f64 = h.normalized.unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn background_only_histogram_is_flat() {
        let p = params().with_levels(0.0, 3.0).with_dead_time(75.0).with_bins(64);
        let b = simulate(&p, 50_000, 9).unwrap();
        let h = histogram(&b, &p.grid()).unwrap();
        let n = h.total() as f64;
        let q = 1.0 / 64.0;
        let band = 3.0 * (n * q * (1.0 - q)).sqrt();
        // 3σ per bin with a Bonferroni-free count of allowed excursions
        let outside = h.counts.iter().filter(|&&c| (c as f64 - n * q).abs() > band).count();
        assert!(outside <= 2, "{outside} bins outside 3σ");
    }

    #[test]
    fn single_run_reference_equals_histogram() {
        let p = params().with_bins(32);
        let r = reference_pdf(&p, 1, 2_000, 17).unwrap();
        let h = histogram(&simulate(&p, 2_000, 17).unwrap(), &p.grid()).unwrap();
        assert_eq!(r.pdf, h.normalized.unwrap());
        assert_eq!(r.empty_runs, 0);
        assert_eq!(r.counts(), h.counts);
    }

    #[test]
    fn empty_runs_are_flagged() {
        let p = params().with_levels(0.0, 1e-6).with_bins(16);
        let r = reference_pdf(&p, 3, 1, 1).unwrap();
        assert_eq!(r.empty_runs, 3);
        assert!(r.pdf.iter().all(|&v| v == 0.0));
        assert!(r.split_half_rmse().is_none());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.2, 0.3], &[0.2, 0.3]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let u = vec![0.25; 4];
        let e = 1e-3;
        let c: Vec<f64> = (0..4).map(|k| 0.25 + if k % 2 == 0 { e } else { -e }).collect();
        assert!((rmse(&u, &c).unwrap() - e).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_export_one_per_line() {
        let b = simulate(&params(), 200, 1).unwrap();
        let mut out = Vec::new();
        b.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), b.len());
        let parsed: Vec<f64> = text.lines().map(|l| l.parse().unwrap()).collect();
        assert_eq!(parsed, b.relative_timestamps);
    }
}
