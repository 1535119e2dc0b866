//! The three reference workflows: 1D calibration, free-running simulation,
//! and the twin experiment with cycled assimilation of synthetic
//! observations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::enkf::{self, AnalysisConfig, ObservationSpec};
use crate::ensemble::{self, Ensemble};
use crate::error::{Error, Result};
use crate::fields::{FireState, Grid};
use crate::harness::config::{ExperimentConfig, IgnitionSpec};
use crate::harness::front::front_distance;
use crate::harness::snapshot::{write_snapshot, write_state_csv};
use crate::kinetics::{self, DiffusionMode, ModelCoefficients, NondimParams};
use crate::solver::{self, WaveMeasurement, WaveMetrics};
use crate::streams::{Purpose, SeedStream};

/// Contour level above ambient for front comparisons (K).
pub const FRONT_LEVEL_EXCESS: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveStatus {
    Sustained,
    NoSustainedWave,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub status: WaveStatus,
    pub coefficients: ModelCoefficients,
    pub nondim: NondimParams,
    pub diffusion_mode: DiffusionMode,
    pub measured: Option<WaveMetrics>,
    pub targets: Option<WaveMetrics>,
    /// Leading-edge travel from the ignition center over the run (m).
    pub front_displacement: Option<f64>,
    pub dt: f64,
    /// Diffusion stability limit for the configured mesh (s).
    pub stability_limit: f64,
    /// k/dx; the explicit scheme is known to misbehave when this ratio is
    /// too small.
    pub k_over_dx: f64,
}

/// Per-cycle assimilation metrics. Wall time is reported but kept out of
/// the metrics CSV so identical seeds produce byte-identical files.
#[derive(Debug, Clone, Serialize)]
pub struct CycleReport {
    pub cycle: usize,
    /// RMSE of the ensemble-mean temperature against the reference, before
    /// the analysis.
    pub rmse_pre: f64,
    /// Same after the analysis and regularization passes.
    pub rmse_post: f64,
    /// Front distance between the post-analysis mean and the reference (m).
    pub front_distance: f64,
    /// Grid mean of the pointwise temperature variance after
    /// re-perturbation.
    pub temp_variance_mean: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwinReport {
    pub cycles: Vec<CycleReport>,
    /// Front distance of the final ensemble mean to the reference (m).
    pub assimilated_front_distance: f64,
    /// Front distance of the no-assimilation control to the reference at
    /// the same final time (m).
    pub comparison_front_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub final_time: f64,
    pub peak_temp: f64,
    /// Fraction of the initial fuel still present at the end.
    pub fuel_remaining: f64,
    pub snapshots_written: usize,
}

/// Identify coefficients (when configured from observable behavior), run
/// the Gaussian-ignition simulation, measure the traveling wave, and write
/// the report files.
pub fn run_calibrate_1d(cfg: &ExperimentConfig) -> Result<CalibrationReport> {
    let grid = cfg.grid.build()?;
    if grid.dims() != 1 {
        return Err(Error::invalid("grid.dims", "calibrate1d needs a 1D grid"));
    }
    let coeffs = cfg.coefficients()?;
    coeffs.validate()?;
    let mode = cfg.model.diffusion_mode;
    let t_end = required_t_end(cfg)?;
    let out = prepare_out_dir(cfg)?;
    let seeds = SeedStream::new(cfg.seed);

    let state = build_initial_state(cfg, &grid, &coeffs, &seeds, 0.0)?;
    let x0 = match resolve_ignition(cfg, &grid)? {
        ResolvedIgnition::Gaussian { x0, .. } => x0,
        ResolvedIgnition::Square { .. } => unreachable!("1D ignition is gaussian"),
    };

    let n_steps = (t_end / cfg.time.dt).ceil() as usize;
    let every = if cfg.time.snapshot_every_steps > 0 {
        cfg.time.snapshot_every_steps
    } else {
        (n_steps / 128).max(1)
    };
    let trajectory = solver::run(&state, &coeffs, mode, t_end, cfg.time.dt, every)?;

    let level_excess = 0.5;
    let measurement = solver::measure_wave(&trajectory, level_excess, coeffs.ambient_temp);
    let nondim = kinetics::nondim_params(&coeffs);

    let (status, measured, front_displacement) = match measurement {
        WaveMeasurement::Sustained(m) => {
            let final_state = trajectory.final_state();
            let level = coeffs.ambient_temp + level_excess * m.peak_excess;
            let lead = solver::level_crossings(final_state.temp(), grid.dx(), level)
                .map(|(_, right)| right - x0);
            (WaveStatus::Sustained, Some(m), lead)
        }
        WaveMeasurement::NoSustainedWave => (WaveStatus::NoSustainedWave, None, None),
    };

    let report = CalibrationReport {
        status,
        coefficients: coeffs,
        nondim,
        diffusion_mode: mode,
        measured,
        targets: cfg.model.calibration.as_ref().and_then(|c| c.targets),
        front_displacement,
        dt: cfg.time.dt,
        stability_limit: solver::stability_limit(&coeffs, grid.dx(), mode, 1500.0),
        k_over_dx: coeffs.diffusivity / grid.dx(),
    };

    write_json(&report, &out.join("calibration.json"))?;
    write_profile_csv(trajectory.final_state(), &out.join("final_profile.csv"))?;
    write_front_positions_csv(
        &trajectory,
        coeffs.ambient_temp,
        level_excess,
        &out.join("front_positions.csv"),
    )?;
    Ok(report)
}

/// Free-running simulation from the configured initial condition, writing
/// snapshots at the configured cadence.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<SimulateSummary> {
    let grid = cfg.grid.build()?;
    let coeffs = cfg.coefficients()?;
    coeffs.validate()?;
    let t_end = required_t_end(cfg)?;
    let out = prepare_out_dir(cfg)?;
    let seeds = SeedStream::new(cfg.seed);

    let initial = build_initial_state(cfg, &grid, &coeffs, &seeds, 0.0)?;
    let trajectory = solver::run(
        &initial,
        &coeffs,
        cfg.model.diffusion_mode,
        t_end,
        cfg.time.dt,
        cfg.time.snapshot_every_steps,
    )?;

    let mut written = 0;
    for (i, snap) in trajectory.snapshots().iter().enumerate() {
        write_snapshot(snap, &out.join(format!("state_{i:04}.snap")))?;
        written += 1;
    }
    let final_state = trajectory.final_state();
    Ok(SimulateSummary {
        final_time: final_state.time(),
        peak_temp: final_state.temp().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        fuel_remaining: final_state.fuel().iter().sum::<f64>()
            / initial.fuel().iter().sum::<f64>().max(f64::MIN_POSITIVE),
        snapshots_written: written,
    })
}

/// The twin experiment: synthetic observations are sampled from a reference
/// run whose ignition is offset from the ensemble's, and assimilated into
/// the ensemble over repeated cycles. The no-assimilation control runs the
/// identical solver path to the same final time.
pub fn run_twin_experiment(
    cfg: &ExperimentConfig,
    snapshot_every_cycles: usize,
) -> Result<TwinReport> {
    let grid = cfg.grid.build()?;
    if grid.dims() != 2 {
        return Err(Error::invalid("grid.dims", "the twin experiment needs a 2D grid"));
    }
    let coeffs = cfg.coefficients()?;
    coeffs.validate()?;
    let mode = cfg.model.diffusion_mode;
    let dt = cfg.time.dt;
    let out = prepare_out_dir(cfg)?;
    let seeds = SeedStream::new(cfg.seed);
    let asm = &cfg.assimilation;
    let level = coeffs.ambient_temp + FRONT_LEVEL_EXCESS;

    let comparison0 = build_initial_state(cfg, &grid, &coeffs, &seeds, 0.0)?;
    let reference0 = build_initial_state(cfg, &grid, &coeffs, &seeds, cfg.reference_offset)?;

    let params = cfg.ensemble.field_params();
    let mut members = ensemble::init_ensemble(
        &comparison0,
        cfg.ensemble.members,
        &params,
        &seeds,
        coeffs.ambient_temp,
    )?;

    let t_final = asm.cycle_seconds * asm.cycles as f64;
    let comparison_final = solver::advance_to(&comparison0, &coeffs, mode, t_final, dt)
        .map_err(|e| member_context(e, "no-assimilation comparison run"))?;

    let mut reference = reference0;
    let mut cycles: Vec<CycleReport> = Vec::with_capacity(asm.cycles);

    for cycle in 1..=asm.cycles {
        let t_target = asm.cycle_seconds * cycle as f64;
        let started = Instant::now();

        let advanced: Vec<Result<FireState>> = members
            .members()
            .par_iter()
            .map(|m| solver::advance_to(m, &coeffs, mode, t_target, dt))
            .collect();
        let mut forecast_members = Vec::with_capacity(advanced.len());
        for (j, outcome) in advanced.into_iter().enumerate() {
            forecast_members
                .push(outcome.map_err(|e| member_context(e, &format!("member {j}, cycle {cycle}")))?);
        }
        members = Ensemble::new(forecast_members)?;
        reference = solver::advance_to(&reference, &coeffs, mode, t_target, dt)
            .map_err(|e| member_context(e, &format!("reference, cycle {cycle}")))?;

        let rmse_pre = rmse_temp(&members.mean_state(), &reference);

        let spec = ObservationSpec::sample_strided(&reference, asm.obs_stride, asm.obs_variance)?;
        let analysis_cfg = AnalysisConfig {
            regularization: asm.regularization,
            perturb_data: true,
            seed: cfg.seed,
            cycle: cycle as u32,
        };
        let forecast = members.to_matrix();
        let mut analyzed = enkf::analysis(&forecast, &spec, &analysis_cfg)
            .map_err(|e| member_context(e, &format!("analysis, cycle {cycle}")))?;
        if asm.regularization > 0.0 {
            analyzed = enkf::regularize(&analyzed, &grid, &analysis_cfg)
                .map_err(|e| member_context(e, &format!("regularization, cycle {cycle}")))?;
        }
        members = members.from_matrix(&analyzed)?;

        let mean = members.mean_state();
        let rmse_post = rmse_temp(&mean, &reference);
        let front = front_distance(mean.temp(), reference.temp(), &grid, level);

        members = ensemble::reperturb(
            &members,
            &params,
            asm.reperturb_fraction,
            &seeds,
            cycle as u32,
            coeffs.ambient_temp,
        )?;
        let temp_variance_mean = members.mean_temp_variance();

        if snapshot_every_cycles > 0 && cycle % snapshot_every_cycles == 0 {
            write_snapshot(&mean, &out.join(format!("mean_cycle{cycle:03}.snap")))?;
            write_snapshot(&reference, &out.join(format!("reference_cycle{cycle:03}.snap")))?;
        }

        let report = CycleReport {
            cycle,
            rmse_pre,
            rmse_post,
            front_distance: front,
            temp_variance_mean,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "cycle {cycle}: rmse {:.3} -> {:.3} K, front {:.1} m, spread {:.3} K², {:.2} s",
            report.rmse_pre,
            report.rmse_post,
            report.front_distance,
            report.temp_variance_mean,
            report.wall_seconds
        );
        cycles.push(report);
    }

    let mean_final = members.mean_state();
    write_snapshot(&mean_final, &out.join("mean_final.snap"))?;
    write_snapshot(&reference, &out.join("reference_final.snap"))?;
    write_snapshot(&comparison_final, &out.join("comparison_final.snap"))?;

    let comparison_front =
        front_distance(comparison_final.temp(), reference.temp(), &grid, level);
    let report = TwinReport {
        assimilated_front_distance: cycles
            .last()
            .map(|c| c.front_distance)
            .unwrap_or(f64::INFINITY),
        comparison_front_distance: comparison_front,
        cycles,
    };
    write_metrics_csv(&report.cycles, &out.join("metrics.csv"))?;
    write_json(&report, &out.join("twin_report.json"))?;
    Ok(report)
}

fn member_context(e: Error, what: &str) -> Error {
    match e {
        Error::Divergence(msg) => Error::Divergence(format!("{what}: {msg}")),
        other => other,
    }
}

fn required_t_end(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.time
        .t_end
        .ok_or_else(|| Error::invalid("time.t_end", "required for this workflow"))
}

fn prepare_out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.clone())
}

enum ResolvedIgnition {
    Gaussian { x0: f64, sigma: f64, amplitude: f64 },
    Square { center: [f64; 2], side: f64, temp: f64 },
}

/// Fill ignition defaults: a centered Gaussian bump in 1D, a centered
/// square in 2D.
fn resolve_ignition(cfg: &ExperimentConfig, grid: &Grid) -> Result<ResolvedIgnition> {
    let center_x = grid.length_x() / 2.0;
    let center_y = grid.length_y() / 2.0;
    match (&cfg.ignition, grid.dims()) {
        (Some(IgnitionSpec::Gaussian(g)), 1) => Ok(ResolvedIgnition::Gaussian {
            x0: g.x0.unwrap_or(center_x),
            sigma: g.sigma,
            amplitude: g.amplitude,
        }),
        (Some(IgnitionSpec::Square(s)), 2) => Ok(ResolvedIgnition::Square {
            center: s.center.unwrap_or([center_x, center_y]),
            side: s.side,
            temp: s.temp,
        }),
        (None, 1) => Ok(ResolvedIgnition::Gaussian {
            x0: center_x,
            sigma: 10.0 * 2.0f64.sqrt(),
            amplitude: 1200.0,
        }),
        (None, 2) => Ok(ResolvedIgnition::Square {
            center: [center_x, center_y],
            side: 50.0,
            temp: 1200.0,
        }),
        (Some(IgnitionSpec::Gaussian(_)), _) => Err(Error::invalid(
            "ignition",
            "gaussian ignition needs a 1D grid",
        )),
        (Some(IgnitionSpec::Square(_)), _) => Err(Error::invalid(
            "ignition",
            "square ignition needs a 2D grid",
        )),
    }
}

/// Shared initial-condition builder. The fuel realization comes from one
/// substream, so the reference, the comparison, and every member burn the
/// same fuel bed; the ignition center is offset along +x by `offset_x`.
fn build_initial_state(
    cfg: &ExperimentConfig,
    grid: &Grid,
    coeffs: &ModelCoefficients,
    seeds: &SeedStream,
    offset_x: f64,
) -> Result<FireState> {
    let state = FireState::uniform(*grid, coeffs.ambient_temp, 1.0);
    let state = if cfg.fuel.break_width > 0.0 || cfg.fuel.noise_half_range > 0.0 {
        let mut rng = seeds.rng(Purpose::FuelNoise, 0, 0);
        solver::apply_fuel_break_and_noise(
            &state,
            cfg.fuel.break_width,
            cfg.fuel.noise_half_range,
            &mut rng,
        )?
    } else {
        state
    };
    Ok(match resolve_ignition(cfg, grid)? {
        ResolvedIgnition::Gaussian { x0, sigma, amplitude } => solver::ignite_gaussian_1d(
            &state,
            x0 + offset_x,
            sigma,
            amplitude,
            coeffs.ambient_temp,
        ),
        ResolvedIgnition::Square { center, side, temp } => {
            solver::ignite_square_2d(&state, [center[0] + offset_x, center[1]], side, temp)
        }
    })
}

fn rmse_temp(a: &FireState, b: &FireState) -> f64 {
    let n = a.temp().len();
    let sum: f64 = a
        .temp()
        .iter()
        .zip(b.temp())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    (sum / n as f64).sqrt()
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn write_metrics_csv(cycles: &[CycleReport], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "cycle,rmse_pre,rmse_post,front_distance,temp_variance_mean")?;
    for c in cycles {
        writeln!(
            w,
            "{},{:.12e},{:.12e},{:.12e},{:.12e}",
            c.cycle, c.rmse_pre, c.rmse_post, c.front_distance, c.temp_variance_mean
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_profile_csv(state: &FireState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_state_csv(state, &mut w)?;
    w.flush()?;
    Ok(())
}

fn write_front_positions_csv(
    trajectory: &crate::solver::Trajectory,
    ambient_temp: f64,
    level_fraction: f64,
    path: &Path,
) -> Result<()> {
    let final_state = trajectory.final_state();
    let peak = final_state
        .temp()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        - ambient_temp;
    let level = ambient_temp + level_fraction * peak;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "time,leading_front_x")?;
    for snap in trajectory.snapshots() {
        if let Some((_, right)) = solver::level_crossings(snap.temp(), snap.grid().dx(), level) {
            writeln!(w, "{:.6},{:.6}", snap.time(), right)?;
        }
    }
    w.flush()?;
    Ok(())
}
