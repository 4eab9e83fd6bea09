use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use deadtime_core::montecarlo::{reference_pdf_with, simulate_with, SimOptions};
use deadtime_core::{
    build_fast, normalize_rows, rmse, spectral_summary, stationary, EigenOptions, MixingOutcome, SpectralSummary,
    StationaryDistribution, SystemParams,
};
use rayon::prelude::*;

use crate::artifact::{Artifact, Value};
use crate::bench::{run_bench, BenchReport};
use crate::config::{McConfig, RunConfig, SpectralConfig};
use crate::error::CliError;

pub type Phases = Vec<(String, f64)>;

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Fast kernel, row normalization, power iteration.
pub fn solve(params: &SystemParams, spectral: &SpectralConfig) -> deadtime_core::Result<StationaryDistribution> {
    let m = normalize_rows(&build_fast(params)?)?;
    stationary(&m, spectral.tol, spectral.max_iters)
}

pub fn predict(cfg: &RunConfig) -> Result<(Artifact, Phases), CliError> {
    let p = cfg.params;
    let mut art = Artifact::new("predict", cfg, vec!["bin_center", "probability"]);
    if cfg.sweep.is_some() {
        art.warnings.push("sweep is ignored by predict".into());
    }
    let t = Instant::now();
    let m = normalize_rows(&build_fast(&p)?)?;
    let build_ms = ms(t);
    let t = Instant::now();
    let s = stationary(&m, cfg.spectral.tol, cfg.spectral.max_iters)?;
    let solve_ms = ms(t);
    art.meta("residual", s.residual);
    art.meta("iterations", s.iterations);
    for (c, v) in p.grid().centers().iter().zip(&s.pi) {
        art.rows.push(vec![Value::Float(*c), Value::Float(*v)]);
    }
    Ok((art, vec![("build_ms".into(), build_ms), ("solve_ms".into(), solve_ms)]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCell {
    pub rmse: f64,
    pub noise_floor: f64,
    pub empty_runs: usize,
}

/// Prediction against the Monte Carlo reference for one parameter set.
pub fn mc_cell(params: &SystemParams, mc: &McConfig, spectral: &SpectralConfig) -> deadtime_core::Result<McCell> {
    params.validate()?;
    let s = solve(params, spectral)?;
    let r = reference_pdf_with(params, mc.runs, mc.cycles, mc.seed, mc.burn_in)?;
    Ok(McCell {
        rmse: rmse(&s.pi, &r.pdf)?,
        noise_floor: r.split_half_rmse().unwrap_or(f64::NAN),
        empty_runs: r.empty_runs,
    })
}

pub fn simulate(cfg: &RunConfig, timestamps: Option<&Path>) -> Result<(Artifact, Phases), CliError> {
    if cfg.sweep.is_some() {
        if timestamps.is_some() {
            return Err(CliError::Config(
                "timestamp export needs a single cell, not a sweep".into(),
            ));
        }
        return simulate_grid(cfg);
    }
    let p = cfg.params;
    let mc = cfg.mc;
    let mut art = Artifact::new("simulate", cfg, vec!["bin_center", "probability", "count"]);
    let t = Instant::now();
    let r = reference_pdf_with(&p, mc.runs, mc.cycles, mc.seed, mc.burn_in)?;
    let mc_ms = ms(t);
    let counts = r.counts();
    let total: u64 = counts.iter().sum();
    art.meta("detections", total);
    art.meta("empty_runs", r.empty_runs);
    art.meta("split_half_rmse", r.split_half_rmse());
    if r.empty_runs > 0 {
        art.warnings.push(format!(
            "{} of {} runs recorded no detections after a burn-in of {}",
            r.empty_runs, mc.runs, mc.burn_in
        ));
    }
    if total < p.n_b as u64 {
        art.warnings.push(format!("only {total} detections for {} bins", p.n_b));
    }
    for ((c, v), n) in p.grid().centers().iter().zip(&r.pdf).zip(&counts) {
        art.rows.push(vec![Value::Float(*c), Value::Float(*v), Value::Int(*n)]);
    }
    let mut phases = vec![("monte_carlo_ms".to_string(), mc_ms)];
    if let Some(path) = timestamps {
        let t = Instant::now();
        let opts = SimOptions {
            burn_in: mc.burn_in,
            stream: 0,
        };
        let batch = simulate_with(&p, mc.cycles, mc.seed, &opts)?;
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        batch
            .write_csv(BufWriter::new(file))
            .map_err(|e| CliError::io(path, e))?;
        art.meta("timestamps_exported", batch.len());
        phases.push(("timestamps_ms".into(), ms(t)));
    }
    Ok((art, phases))
}

fn simulate_grid(cfg: &RunConfig) -> Result<(Artifact, Phases), CliError> {
    let mut art = Artifact::new("simulate", cfg, vec!["S", "B", "rmse", "noise_floor"]);
    let t = Instant::now();
    let results: Vec<((f64, f64), deadtime_core::Result<McCell>)> = cfg
        .cells()
        .into_par_iter()
        .map(|(s, b)| ((s, b), mc_cell(&cfg.params.with_levels(s, b), &cfg.mc, &cfg.spectral)))
        .collect();
    for ((s, b), r) in results {
        let (e, f) = match r {
            Ok(c) => {
                if c.empty_runs > 0 {
                    art.warnings.push(format!("S={s} B={b}: {} empty runs", c.empty_runs));
                }
                (c.rmse, c.noise_floor)
            }
            Err(e) => {
                art.warnings.push(format!("S={s} B={b}: {e}"));
                (f64::NAN, f64::NAN)
            }
        };
        art.rows
            .push(vec![Value::Float(s), Value::Float(b), Value::Float(e), Value::Float(f)]);
    }
    Ok((art, vec![("grid_ms".into(), ms(t))]))
}

/// Stationary distribution, second eigenvalue and mixing steps of one cell.
pub fn spectrum_cell(params: &SystemParams, spectral: &SpectralConfig) -> deadtime_core::Result<SpectralSummary> {
    params.validate()?;
    let m = normalize_rows(&build_fast(params)?)?;
    let s = stationary(&m, spectral.tol, spectral.max_iters)?;
    spectral_summary(&m, &s, spectral.epsilon, &EigenOptions::default())
}

pub fn spectrum(cfg: &RunConfig) -> Result<(Artifact, Phases), CliError> {
    let mut art = Artifact::new("spectrum", cfg, vec!["S", "B", "gap", "phase", "mixing_steps"]);
    art.meta("epsilon", cfg.spectral.epsilon);
    let t = Instant::now();
    let results: Vec<((f64, f64), deadtime_core::Result<SpectralSummary>)> = cfg
        .cells()
        .into_par_iter()
        .map(|(s, b)| ((s, b), spectrum_cell(&cfg.params.with_levels(s, b), &cfg.spectral)))
        .collect();
    for ((s, b), r) in results {
        let row = match r {
            Ok(sum) => {
                let mixing = match sum.mixing {
                    Some(MixingOutcome::Steps(n)) => Value::Int(n as u64),
                    _ => Value::Text("not_reached".into()),
                };
                vec![Value::Float(sum.gap), Value::Float(sum.phase), mixing]
            }
            Err(e) => {
                art.warnings.push(format!("S={s} B={b}: {e}"));
                vec![
                    Value::Float(f64::NAN),
                    Value::Float(f64::NAN),
                    Value::Text("failed".into()),
                ]
            }
        };
        let mut full = vec![Value::Float(s), Value::Float(b)];
        full.extend(row);
        art.rows.push(full);
    }
    Ok((art, vec![("grid_ms".into(), ms(t))]))
}

pub fn bench(cfg: &RunConfig) -> Result<(Artifact, BenchReport), CliError> {
    let report = run_bench(&cfg.params, &cfg.bench)?;
    let mut art = Artifact::new("bench", cfg, vec!["n_b", "baseline_ms", "fast_ms", "speedup"]);
    art.meta("threads", report.threads);
    art.meta("repetitions", report.repetitions);
    art.meta("fast_slope", report.fast_slope);
    art.meta("note", &report.note);
    let opt = |v: Option<f64>| v.map_or(Value::Missing, Value::Float);
    for r in &report.records {
        art.rows.push(vec![
            Value::Int(r.n_b as u64),
            opt(r.baseline_ms),
            Value::Float(r.fast_ms),
            opt(r.speedup),
        ]);
    }
    Ok((art, report))
}
