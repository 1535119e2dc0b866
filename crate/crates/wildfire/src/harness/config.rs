//! Experiment configuration: JSON schema, defaults, validation.
//!
//! Unknown keys are rejected everywhere. Model coefficients come either
//! directly (`model.coefficients`) or from observable fire behavior
//! (`model.calibration`: equilibrium temperatures, cooling time, and the
//! empirically chosen diffusivity and fuel rate).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::SmoothFieldParams;
use crate::error::{Error, Result};
use crate::fields::Grid;
use crate::kinetics::{self, DiffusionMode, ModelCoefficients};
use crate::solver::WaveMetrics;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub ignition: Option<IgnitionSpec>,
    #[serde(default)]
    pub fuel: FuelSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub assimilation: AssimilationSpec,
    /// Reference ignition offset along +x (m).
    #[serde(default)]
    pub reference_offset: f64,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: u8,
    pub nx: usize,
    #[serde(default)]
    pub ny: usize,
    pub dx: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        match self.dims {
            1 => Grid::new_1d(self.nx, self.dx),
            2 => Grid::new_2d(self.nx, self.ny, self.dx),
            d => Err(Error::invalid("grid.dims", format!("{d} is not 1 or 2"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub coefficients: Option<CoefficientsSpec>,
    #[serde(default)]
    pub calibration: Option<CalibrationSpec>,
    #[serde(default)]
    pub diffusion_mode: DiffusionMode,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSpec {
    pub diffusivity: f64,
    pub heating_rate: f64,
    pub activation_temp: f64,
    pub cooling_coeff: f64,
    pub fuel_rate: f64,
    #[serde(default = "default_ambient")]
    pub ambient_temp: f64,
    /// Reaction cutoff; omitted means the ambient temperature.
    #[serde(default)]
    pub cutoff_temp: Option<f64>,
    #[serde(default)]
    pub wind: [f64; 2],
}

fn default_ambient() -> f64 {
    300.0
}

impl CoefficientsSpec {
    pub fn to_coefficients(&self) -> ModelCoefficients {
        ModelCoefficients {
            diffusivity: self.diffusivity,
            heating_rate: self.heating_rate,
            activation_temp: self.activation_temp,
            cooling_coeff: self.cooling_coeff,
            fuel_rate: self.fuel_rate,
            ambient_temp: self.ambient_temp,
            cutoff_temp: self.cutoff_temp.unwrap_or(self.ambient_temp),
            wind: self.wind,
        }
    }
}

/// Coefficient identification inputs: the equilibrium temperatures fix B
/// and C, the cooling time fixes A, and the diffusivity and fuel rate are
/// the empirically chosen remainder.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    /// Auto-ignition temperature T_i (K).
    pub ignition_temp: f64,
    /// Stable combustion temperature T_c (K).
    pub combustion_temp: f64,
    /// Trailing-edge e-folding cooling time t_c (s).
    pub cooling_time: f64,
    pub diffusivity: f64,
    pub fuel_rate: f64,
    #[serde(default = "default_ambient")]
    pub ambient_temp: f64,
    /// Reaction cutoff used by the simulation. Identification always runs
    /// with the cutoff at ambient; setting this to 0 reproduces the
    /// unmodified-Arrhenius cold-boundary failure.
    #[serde(default)]
    pub rate_cutoff: Option<f64>,
    /// Target wave metrics for the report table.
    #[serde(default)]
    pub targets: Option<WaveMetrics>,
}

impl CalibrationSpec {
    pub fn identify(&self) -> Result<ModelCoefficients> {
        let (b, c) = kinetics::identify_bc(
            self.ignition_temp,
            self.combustion_temp,
            self.ambient_temp,
            self.ambient_temp,
        )?;
        let a = kinetics::identify_heating_rate(c, self.cooling_time)?;
        Ok(ModelCoefficients {
            diffusivity: self.diffusivity,
            heating_rate: a,
            activation_temp: b,
            cooling_coeff: c,
            fuel_rate: self.fuel_rate,
            ambient_temp: self.ambient_temp,
            cutoff_temp: self.rate_cutoff.unwrap_or(self.ambient_temp),
            wind: [0.0, 0.0],
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IgnitionSpec {
    Gaussian(GaussianIgnition),
    Square(SquareIgnition),
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianIgnition {
    /// Bump center; omitted means the domain center.
    #[serde(default)]
    pub x0: Option<f64>,
    pub sigma: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SquareIgnition {
    /// Square center; omitted means the domain center.
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    pub side: f64,
    pub temp: f64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuelSpec {
    /// Width of the vertical fuel break through the domain center (m).
    pub break_width: f64,
    /// Half-range of the per-point uniform fuel noise.
    pub noise_half_range: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    /// End time for `simulate`/`calibrate1d`; the twin experiment derives
    /// its end time from the assimilation cycles.
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Snapshot cadence in steps; 0 picks a cadence automatically.
    #[serde(default)]
    pub snapshot_every_steps: usize,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSpec {
    pub members: usize,
    /// Additive temperature perturbation magnitude c_T (K).
    pub temp_magnitude: f64,
    /// Spatial shift magnitude c_x (m).
    pub shift_magnitude_x: f64,
    /// Spatial shift magnitude c_y (m).
    pub shift_magnitude_y: f64,
    /// Smoothness order of the random fields.
    pub alpha: f64,
    /// Retained modes per axis.
    pub modes: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            members: 50,
            temp_magnitude: 5.0,
            shift_magnitude_x: 150.0,
            shift_magnitude_y: 150.0,
            alpha: 2.0,
            modes: 32,
        }
    }
}

impl EnsembleSpec {
    pub fn field_params(&self) -> SmoothFieldParams {
        SmoothFieldParams {
            alpha: self.alpha,
            modes: self.modes,
            temp_magnitude: self.temp_magnitude,
            shift_magnitude_x: self.shift_magnitude_x,
            shift_magnitude_y: self.shift_magnitude_y,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssimilationSpec {
    /// Model time between analyses (s).
    pub cycle_seconds: f64,
    pub cycles: usize,
    /// Observation stride in grid points along each axis.
    pub obs_stride: usize,
    /// Diagonal observation error variance.
    pub obs_variance: f64,
    /// Gradient-observation variance ρ; 0 disables the regularization pass.
    pub regularization: f64,
    /// Fraction of the initial perturbation magnitudes applied after each
    /// analysis.
    pub reperturb_fraction: f64,
}

impl Default for AssimilationSpec {
    fn default() -> Self {
        AssimilationSpec {
            cycle_seconds: 100.0,
            cycles: 10,
            obs_stride: 5,
            obs_variance: 10.0,
            regularization: 750.0,
            reperturb_fraction: 0.05,
        }
    }
}

/// Parse and validate a configuration file. Parse errors keep the
/// line/column context from the JSON parser; validation errors name the
/// violated field.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.build().map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::invalid("grid", msg),
            other => other,
        })?;

        match (&self.model.coefficients, &self.model.calibration) {
            (Some(c), None) => c.to_coefficients().validate()?,
            (None, Some(c)) => {
                c.identify()?.validate()?;
            }
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "model",
                    "give either coefficients or calibration, not both",
                ))
            }
            (None, None) => {
                return Err(Error::invalid(
                    "model",
                    "one of coefficients or calibration is required",
                ))
            }
        }

        if !(self.time.dt > 0.0) {
            return Err(Error::invalid("dt", format!("{} is not > 0", self.time.dt)));
        }
        if let Some(t_end) = self.time.t_end {
            if !(t_end >= 0.0) {
                return Err(Error::invalid("time.t_end", format!("{t_end} is not >= 0")));
            }
        }

        if !(self.fuel.break_width >= 0.0) {
            return Err(Error::invalid(
                "fuel.break_width",
                format!("{} is not >= 0", self.fuel.break_width),
            ));
        }
        if !(0.0..1.0).contains(&self.fuel.noise_half_range) {
            return Err(Error::invalid(
                "fuel.noise_half_range",
                format!("{} is not in [0, 1)", self.fuel.noise_half_range),
            ));
        }

        if let Some(IgnitionSpec::Gaussian(g)) = &self.ignition {
            if !(g.sigma > 0.0) {
                return Err(Error::invalid(
                    "ignition.gaussian.sigma",
                    format!("{} is not > 0", g.sigma),
                ));
            }
        }
        if let Some(IgnitionSpec::Square(s)) = &self.ignition {
            if !(s.side >= 0.0) {
                return Err(Error::invalid(
                    "ignition.square.side",
                    format!("{} is not >= 0", s.side),
                ));
            }
        }

        if self.ensemble.members < 2 {
            return Err(Error::invalid(
                "ensemble.members",
                format!("{} is not >= 2", self.ensemble.members),
            ));
        }
        self.ensemble.field_params().validate()?;

        let a = &self.assimilation;
        if !(a.cycle_seconds > 0.0) {
            return Err(Error::invalid(
                "assimilation.cycle_seconds",
                format!("{} is not > 0", a.cycle_seconds),
            ));
        }
        if a.cycles < 1 {
            return Err(Error::invalid("assimilation.cycles", "need at least one cycle"));
        }
        if a.obs_stride < 1 {
            return Err(Error::invalid("assimilation.obs_stride", "stride must be >= 1"));
        }
        if !(a.obs_variance > 0.0) {
            return Err(Error::invalid(
                "assimilation.obs_variance",
                format!("{} is not > 0", a.obs_variance),
            ));
        }
        if !(a.regularization >= 0.0) {
            return Err(Error::invalid(
                "assimilation.regularization",
                format!("{} is not >= 0", a.regularization),
            ));
        }
        if !(a.reperturb_fraction >= 0.0) {
            return Err(Error::invalid(
                "assimilation.reperturb_fraction",
                format!("{} is not >= 0", a.reperturb_fraction),
            ));
        }
        if !self.reference_offset.is_finite() {
            return Err(Error::invalid("reference_offset", "must be finite"));
        }
        Ok(())
    }

    /// Model coefficients from whichever source the config carries.
    pub fn coefficients(&self) -> Result<ModelCoefficients> {
        match (&self.model.coefficients, &self.model.calibration) {
            (Some(c), _) => Ok(c.to_coefficients()),
            (None, Some(c)) => c.identify(),
            (None, None) => Err(Error::invalid("model", "no coefficient source")),
        }
    }
}
