use std::hint::black_box;
use std::time::{Duration, Instant};

use deadtime_core::{build_baseline, build_fast, Result as CoreResult, SystemParams, TransitionMatrix};
use serde::Serialize;

use crate::config::BenchConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub n_b: usize,
    pub baseline_ms: Option<f64>,
    pub fast_ms: f64,
    pub speedup: Option<f64>,
    /// Builds per timed sample after auto-scaling.
    pub fast_inner: usize,
    pub baseline_inner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub threads: usize,
    pub repetitions: usize,
    /// Least-squares slope of `ln fast_ms` against `ln n_b`.
    pub fast_slope: Option<f64>,
    pub note: String,
}

/// Median per-build time in milliseconds and the inner loop count.
pub fn time_builder<F>(build: F, repetitions: usize, min_sample: Duration) -> CoreResult<(f64, usize)>
where
    F: Fn() -> CoreResult<TransitionMatrix>,
{
    // warm-up, also used to size the inner loop
    let start = Instant::now();
    black_box(build()?);
    let once = start.elapsed().max(Duration::from_nanos(1));
    let inner = (min_sample.as_secs_f64() / once.as_secs_f64()).ceil().max(1.0) as usize;

    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for _ in 0..inner {
            black_box(build()?);
        }
        samples.push(start.elapsed().as_secs_f64() * 1e3 / inner as f64);
    }
    Ok((median(&mut samples), inner))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Ordinary least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Times both builders over `cfg.sizes` with the other parameters fixed.
pub fn run_bench(params: &SystemParams, cfg: &BenchConfig) -> Result<BenchReport, CliError> {
    let min_sample = Duration::from_secs_f64(cfg.min_sample_ms / 1e3);
    let mut records = Vec::with_capacity(cfg.sizes.len());
    for &n_b in &cfg.sizes {
        let p = params.with_bins(n_b);
        p.validate()?;
        let (fast_ms, fast_inner) = time_builder(|| build_fast(&p), cfg.repetitions, min_sample)?;
        let baseline = if n_b <= cfg.baseline_max_n_b {
            Some(time_builder(|| build_baseline(&p), cfg.repetitions, min_sample)?)
        } else {
            None
        };
        records.push(BenchRecord {
            n_b,
            baseline_ms: baseline.map(|b| b.0),
            fast_ms,
            speedup: baseline.map(|b| b.0 / fast_ms),
            fast_inner,
            baseline_inner: baseline.map(|b| b.1),
        });
    }
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.n_b as f64, r.fast_ms)).collect();
    let threads = rayon::current_num_threads();
    Ok(BenchReport {
        fast_slope: loglog_slope(&points),
        note: format!(
            "median of {} samples after one warm-up build; {} worker thread(s); {} logical CPU(s)",
            cfg.repetitions,
            threads,
            std::thread::available_parallelism().map_or(0, |n| n.get())
        ),
        records,
        threads,
        repetitions: cfg.repetitions,
    })
}
