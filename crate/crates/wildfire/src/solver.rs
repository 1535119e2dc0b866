//! Finite-difference spatial discretization and explicit Euler integration
//! of the coupled heat/fuel equations in 1D and 2D, ignition setup, and
//! traveling-wave metrology.
//!
//! Diffusion uses second-order central differences, advection first-order
//! upwinding on the wind sign, and boundaries are zero-normal-gradient via
//! ghost-point reflection. Fuel is clamped to [0, 1] after each step since
//! forward Euler can overshoot the continuously positivity-preserving fuel
//! equation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::FireState;
use crate::kinetics::{DiffusionMode, ModelCoefficients};

/// Peak excess temperature (K), 50%-width (m), and propagation speed (m/s)
/// of a traveling combustion wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveMetrics {
    /// Maximal temperature above ambient in the final snapshot (K).
    pub peak_excess: f64,
    /// Distance between the outermost crossings of the reference level (m).
    pub width: f64,
    /// Least-squares front speed over the final half of the trajectory (m/s).
    pub speed: f64,
}

/// Outcome of wave measurement on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaveMeasurement {
    Sustained(WaveMetrics),
    /// The wave died out (or never developed): the final snapshot carries no
    /// measurable front.
    NoSustainedWave,
}

/// Snapshots of a single run at a fixed step cadence; times are strictly
/// increasing and the final state is always included.
#[derive(Debug, Clone)]
pub struct Trajectory {
    snapshots: Vec<FireState>,
}

impl Trajectory {
    pub fn snapshots(&self) -> &[FireState] {
        &self.snapshots
    }

    pub fn final_state(&self) -> &FireState {
        self.snapshots.last().expect("trajectory is never empty")
    }
}

/// Largest diffusion-stable time step, `dx² / (4 k_eff)`, with
/// `k_eff = k` in linear mode and `k·T_ref³` in cubic mode.
pub fn stability_limit(
    coeffs: &ModelCoefficients,
    dx: f64,
    mode: DiffusionMode,
    t_ref: f64,
) -> f64 {
    let k_eff = match mode {
        DiffusionMode::Linear => coeffs.diffusivity,
        DiffusionMode::Cubic => coeffs.diffusivity * t_ref * t_ref * t_ref,
    };
    dx * dx / (4.0 * k_eff)
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    // mirror ghost: index -1 maps to 1, index n maps to n-2
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

/// Right-hand side of the two equations:
/// `dT/dt = div(k grad T) - v·grad T + A (S r(T) - C (T - T_a))` and
/// `dS/dt = -C_S S r(T)`.
pub fn tendencies(
    state: &FireState,
    coeffs: &ModelCoefficients,
    mode: DiffusionMode,
) -> (Vec<f64>, Vec<f64>) {
    let grid = state.grid();
    let (nx, ny, dx) = (grid.nx(), grid.ny(), grid.dx());
    let two_d = grid.dims() == 2;
    let t = state.temp();
    let s = state.fuel();
    let inv_dx = 1.0 / dx;
    let inv_dx2 = inv_dx * inv_dx;
    let k = coeffs.diffusivity;
    let [vx, vy] = coeffs.wind;

    let mut dt_field = vec![0.0; t.len()];
    let mut ds_field = vec![0.0; t.len()];

    for iy in 0..ny {
        for ix in 0..nx {
            let c = iy * nx + ix;
            let tc = t[c];

            let west = t[iy * nx + reflect(ix as isize - 1, nx)];
            let east = t[iy * nx + reflect(ix as isize + 1, nx)];
            let (south, north) = if two_d {
                (
                    t[reflect(iy as isize - 1, ny) * nx + ix],
                    t[reflect(iy as isize + 1, ny) * nx + ix],
                )
            } else {
                (tc, tc)
            };

            let diffusion = match mode {
                DiffusionMode::Linear => {
                    let mut lap = (east - 2.0 * tc + west) * inv_dx2;
                    if two_d {
                        lap += (north - 2.0 * tc + south) * inv_dx2;
                    }
                    k * lap
                }
                DiffusionMode::Cubic => {
                    // conservative face fluxes with arithmetic face means
                    let face = |a: f64, b: f64| {
                        let m = 0.5 * (a + b);
                        m * m * m
                    };
                    let mut div = (face(tc, east) * (east - tc) - face(west, tc) * (tc - west))
                        * inv_dx2;
                    if two_d {
                        div += (face(tc, north) * (north - tc) - face(south, tc) * (tc - south))
                            * inv_dx2;
                    }
                    k * div
                }
            };

            let mut advection = 0.0;
            if vx != 0.0 {
                advection += if vx > 0.0 {
                    vx * (tc - west) * inv_dx
                } else {
                    vx * (east - tc) * inv_dx
                };
            }
            if two_d && vy != 0.0 {
                advection += if vy > 0.0 {
                    vy * (tc - south) * inv_dx
                } else {
                    vy * (north - tc) * inv_dx
                };
            }

            let rate = coeffs.reaction_rate(tc);
            dt_field[c] = diffusion - advection
                + coeffs.heating_rate
                    * (s[c] * rate - coeffs.cooling_coeff * (tc - coeffs.ambient_temp));
            ds_field[c] = -coeffs.fuel_rate * s[c] * rate;
        }
    }
    (dt_field, ds_field)
}

/// One forward-Euler step. Fuel is clamped to [0, 1] afterwards and the
/// clock advances by `dt`. Any non-finite value aborts with diagnostics.
pub fn step_euler(
    state: &FireState,
    coeffs: &ModelCoefficients,
    mode: DiffusionMode,
    dt: f64,
) -> Result<FireState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt = {dt}, need dt > 0")));
    }
    let (dt_field, ds_field) = tendencies(state, coeffs, mode);
    let mut temp = state.temp().to_vec();
    let mut fuel = state.fuel().to_vec();
    for i in 0..temp.len() {
        temp[i] += dt * dt_field[i];
        fuel[i] = (fuel[i] + dt * ds_field[i]).clamp(0.0, 1.0);
    }
    if let Some(i) = temp.iter().position(|x| !x.is_finite()) {
        let grid = state.grid();
        return Err(Error::Divergence(format!(
            "non-finite temperature at point ({}, {}) stepping from t = {} s with dt = {dt} s \
             (diffusion-stable dt is {:.3e} s)",
            i % grid.nx(),
            i / grid.nx(),
            state.time(),
            stability_limit(coeffs, grid.dx(), mode, temp_scale_guess(state)),
        )));
    }
    Ok(state.replace_fields(temp, fuel, state.time() + dt))
}

fn temp_scale_guess(state: &FireState) -> f64 {
    state.temp().iter().cloned().fold(1.0, f64::max)
}

/// Advance to `t_end` by repeated Euler steps without keeping snapshots.
/// The last step is shortened if `t_end` is not a whole number of steps
/// away.
pub fn advance_to(
    state: &FireState,
    coeffs: &ModelCoefficients,
    mode: DiffusionMode,
    t_end: f64,
    dt: f64,
) -> Result<FireState> {
    check_run_args(state, t_end, dt)?;
    warn_if_unstable(state, coeffs, mode, dt);
    let mut current = state.clone();
    let eps = dt * 1e-9;
    while current.time() < t_end - eps {
        let step = dt.min(t_end - current.time());
        current = step_euler(&current, coeffs, mode, step)?;
    }
    Ok(current)
}

/// Advance to `t_end`, recording a snapshot every `snapshot_every` steps
/// (0 keeps only the initial and final states). The final state at `t_end`
/// is always the last snapshot.
pub fn run(
    state: &FireState,
    coeffs: &ModelCoefficients,
    mode: DiffusionMode,
    t_end: f64,
    dt: f64,
    snapshot_every: usize,
) -> Result<Trajectory> {
    check_run_args(state, t_end, dt)?;
    warn_if_unstable(state, coeffs, mode, dt);
    let mut snapshots = vec![state.clone()];
    let mut current = state.clone();
    let eps = dt * 1e-9;
    let mut step_index = 0usize;
    while current.time() < t_end - eps {
        let step = dt.min(t_end - current.time());
        current = step_euler(&current, coeffs, mode, step)?;
        step_index += 1;
        if snapshot_every > 0 && step_index % snapshot_every == 0 {
            snapshots.push(current.clone());
        }
    }
    if snapshots.last().map(|s| s.time()) != Some(current.time()) {
        snapshots.push(current);
    }
    Ok(Trajectory { snapshots })
}

fn check_run_args(state: &FireState, t_end: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt = {dt}, need dt > 0")));
    }
    if t_end < state.time() {
        return Err(Error::InvalidArgument(format!(
            "t_end = {t_end} is before the state clock {}",
            state.time()
        )));
    }
    Ok(())
}

fn warn_if_unstable(state: &FireState, coeffs: &ModelCoefficients, mode: DiffusionMode, dt: f64) {
    let limit = stability_limit(coeffs, state.grid().dx(), mode, temp_scale_guess(state));
    if dt > limit {
        log::warn!(
            "dt = {dt} s exceeds the diffusion stability limit {limit:.3e} s; \
             explicit Euler may diverge"
        );
    }
    // known failure regime of the explicit scheme: reaction front under-resolved
    let k_over_dx = coeffs.diffusivity / state.grid().dx();
    if k_over_dx < 1e-2 {
        log::debug!("k/dx = {k_over_dx:.3e}; small ratios are prone to instability");
    }
}

/// Overwrite T with a Gaussian ignition bump over ambient:
/// `T(x) = amplitude · exp(-(x-x0)²/σ²) + T_a`. Fuel is untouched.
pub fn ignite_gaussian_1d(
    state: &FireState,
    x0: f64,
    sigma: f64,
    amplitude: f64,
    ambient_temp: f64,
) -> FireState {
    let grid = state.grid();
    let dx = grid.dx();
    let temp = (0..grid.cells())
        .map(|i| {
            let x = (i % grid.nx()) as f64 * dx;
            let d = x - x0;
            amplitude * (-d * d / (sigma * sigma)).exp() + ambient_temp
        })
        .collect();
    state.replace_fields(temp, state.fuel().to_vec(), state.time())
}

/// Set T to `ignition_temp` at points strictly inside an axis-aligned
/// square (membership by point position); everything else is untouched.
pub fn ignite_square_2d(
    state: &FireState,
    center: [f64; 2],
    side: f64,
    ignition_temp: f64,
) -> FireState {
    let grid = state.grid();
    let (nx, ny, dx) = (grid.nx(), grid.ny(), grid.dx());
    let half = side / 2.0;
    let mut temp = state.temp().to_vec();
    for iy in 0..ny {
        let y = iy as f64 * dx;
        for ix in 0..nx {
            let x = ix as f64 * dx;
            if (x - center[0]).abs() < half && (y - center[1]).abs() < half {
                temp[iy * nx + ix] = ignition_temp;
            }
        }
    }
    state.replace_fields(temp, state.fuel().to_vec(), state.time())
}

/// Reset fuel to a full load with a vertical fuel break through the domain
/// center and per-point uniform noise in `[-noise_half_range,
/// +noise_half_range]`, clamped to [0, 1]. Draws run row-major so a seeded
/// generator reproduces the field exactly.
pub fn apply_fuel_break_and_noise(
    state: &FireState,
    break_width: f64,
    noise_half_range: f64,
    rng: &mut impl Rng,
) -> Result<FireState> {
    if !(0.0..1.0).contains(&noise_half_range) {
        return Err(Error::InvalidArgument(format!(
            "noise_half_range = {noise_half_range}, need it in [0, 1)"
        )));
    }
    let grid = state.grid();
    let (nx, ny, dx) = (grid.nx(), grid.ny(), grid.dx());
    let x_center = grid.length_x() / 2.0;
    let half = break_width / 2.0;
    let mut fuel = vec![1.0; grid.cells()];
    for iy in 0..ny {
        for ix in 0..nx {
            let x = ix as f64 * dx;
            let mut s = if (x - x_center).abs() < half { 0.0 } else { 1.0 };
            if noise_half_range > 0.0 {
                s += rng.random_range(-noise_half_range..=noise_half_range);
            }
            fuel[iy * nx + ix] = s.clamp(0.0, 1.0);
        }
    }
    state.replace_fields(state.temp().to_vec(), fuel, state.time())
}

/// A wave whose final peak excess is below this is treated as dead: the
/// crossings of 50% of a near-ambient residual are numerical noise, not a
/// combustion front.
const MIN_WAVE_EXCESS: f64 = 50.0; // K

/// Measure the traveling wave on a 1D trajectory.
///
/// The peak excess and the reference level `T_a + reference_level·peak`
/// come from the final snapshot; the width is the distance between the
/// outermost crossings of that level (linear interpolation between grid
/// points); the speed is the least-squares slope of the leading-edge
/// (rightmost) crossing position against time over the final half of the
/// trajectory.
pub fn measure_wave(
    trajectory: &Trajectory,
    reference_level: f64,
    ambient_temp: f64,
) -> WaveMeasurement {
    let last = trajectory.final_state();
    assert_eq!(last.grid().dims(), 1, "wave metrology is 1D");

    let peak = last.temp().iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ambient_temp;
    if peak < MIN_WAVE_EXCESS {
        return WaveMeasurement::NoSustainedWave;
    }
    let level = ambient_temp + reference_level * peak;

    let Some((left, right)) = level_crossings(last.temp(), last.grid().dx(), level) else {
        return WaveMeasurement::NoSustainedWave;
    };

    // leading-edge positions over the final half of the trajectory
    let t0 = trajectory.snapshots()[0].time();
    let t1 = last.time();
    let t_half = 0.5 * (t0 + t1);
    let mut samples = Vec::new();
    for snap in trajectory.snapshots() {
        if snap.time() < t_half {
            continue;
        }
        match level_crossings(snap.temp(), snap.grid().dx(), level) {
            Some((_, lead)) => samples.push((snap.time(), lead)),
            None => return WaveMeasurement::NoSustainedWave,
        }
    }
    if samples.len() < 2 {
        return WaveMeasurement::NoSustainedWave;
    }
    let speed = least_squares_slope(&samples);

    WaveMeasurement::Sustained(WaveMetrics {
        peak_excess: peak,
        width: right - left,
        speed,
    })
}

/// Outermost crossings of `level` in a 1D profile, linearly interpolated.
/// `None` when the profile never crosses the level.
pub(crate) fn level_crossings(profile: &[f64], dx: f64, level: f64) -> Option<(f64, f64)> {
    let n = profile.len();
    let mut left = None;
    for i in 0..n - 1 {
        let (a, b) = (profile[i], profile[i + 1]);
        if (a - level) * (b - level) < 0.0 || a == level {
            let frac = if a == level { 0.0 } else { (level - a) / (b - a) };
            left = Some((i as f64 + frac) * dx);
            break;
        }
    }
    let mut right = None;
    for i in (0..n - 1).rev() {
        let (a, b) = (profile[i], profile[i + 1]);
        if (a - level) * (b - level) < 0.0 || b == level {
            let frac = if b == level { 1.0 } else { (level - a) / (b - a) };
            right = Some((i as f64 + frac) * dx);
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Some((l, r)),
        _ => None,
    }
}

fn least_squares_slope(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let mean_t = samples.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_x = samples.iter().map(|(_, x)| x).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t, x) in samples {
        num += (t - mean_t) * (x - mean_x);
        den += (t - mean_t) * (t - mean_t);
    }
    num / den
}
