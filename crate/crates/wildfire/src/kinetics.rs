//! Reaction kinetics: modified Arrhenius rate, equilibrium analysis of the
//! heat balance, coefficient identification from observable fire behavior
//! (equilibrium temperatures and cooling time), nondimensionalization, and
//! recovery of physical coefficients from measured wave scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::WaveMetrics;

/// Interpretation of the diffusion term.
///
/// `Linear` integrates `div(k grad T)` with `k` in m²/s; `Cubic` integrates
/// `div(k T³ grad T)` with `k` in m²s⁻¹K⁻³. The length-scale recovery in
/// [`rescale_coefficients`] picks up a T₁³ factor in cubic mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusionMode {
    Linear,
    Cubic,
}

impl Default for DiffusionMode {
    fn default() -> Self {
        DiffusionMode::Linear
    }
}

/// The five PDE coefficients plus ambient temperature, reaction cutoff, and
/// wind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelCoefficients {
    /// Thermal diffusivity k (m²/s in linear mode, m²s⁻¹K⁻³ in cubic mode).
    pub diffusivity: f64,
    /// Temperature rise rate A (K/s) at maximal burning with full fuel load.
    pub heating_rate: f64,
    /// Proportionality coefficient B (K) of the modified Arrhenius law.
    pub activation_temp: f64,
    /// Scaled heat transfer coefficient C (1/K).
    pub cooling_coeff: f64,
    /// Fuel relative disappearance rate C_S (1/s).
    pub fuel_rate: f64,
    /// Ambient temperature T_a (K).
    pub ambient_temp: f64,
    /// Reaction cutoff temperature T_0 (K): no oxidation at or below it.
    /// Normally equal to the ambient temperature.
    pub cutoff_temp: f64,
    /// Wind (m/s), one component per spatial axis.
    pub wind: [f64; 2],
}

impl ModelCoefficients {
    /// Reaction rate at temperature `temp`; see [`reaction_rate`].
    pub fn reaction_rate(&self, temp: f64) -> f64 {
        reaction_rate(temp, self.activation_temp, self.cutoff_temp)
    }

    /// Positivity of the five PDE coefficients. The cutoff may sit at or
    /// below ambient.
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("diffusivity", self.diffusivity),
            ("heating_rate", self.heating_rate),
            ("activation_temp", self.activation_temp),
            ("cooling_coeff", self.cooling_coeff),
            ("fuel_rate", self.fuel_rate),
        ];
        for (name, value) in checks {
            if !(value > 0.0) {
                return Err(Error::invalid(name, format!("{value} is not > 0")));
            }
        }
        if self.cutoff_temp > self.ambient_temp {
            return Err(Error::invalid(
                "cutoff_temp",
                format!(
                    "{} exceeds ambient {}",
                    self.cutoff_temp, self.ambient_temp
                ),
            ));
        }
        Ok(())
    }
}

/// Modified Arrhenius reaction rate: `exp(-B/(T - T0))` above the cutoff
/// and zero at or below it. Continuous, nondecreasing, with both one-sided
/// derivatives vanishing at the cutoff, and limit 1 as T grows.
pub fn reaction_rate(temp: f64, activation_temp: f64, cutoff_temp: f64) -> f64 {
    if temp > cutoff_temp {
        (-activation_temp / (temp - cutoff_temp)).exp()
    } else {
        0.0
    }
}

/// Heat balance residual `f(T) = r(T) - C (T - T_a)`; its zeros are the
/// equilibrium temperatures of the reaction-cooling balance.
pub fn heat_balance(
    temp: f64,
    activation_temp: f64,
    cooling_coeff: f64,
    ambient_temp: f64,
    cutoff_temp: f64,
) -> f64 {
    reaction_rate(temp, activation_temp, cutoff_temp) - cooling_coeff * (temp - ambient_temp)
}

/// Roots of the heat balance, classified by stability.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EquilibriumSet {
    /// Low stable equilibrium T_p, typically just above ambient. When the
    /// cutoff equals the ambient temperature this is the degenerate exact
    /// root at T_a.
    pub low: Option<f64>,
    /// Unstable auto-ignition temperature T_i.
    pub ignition: Option<f64>,
    /// High stable combustion temperature T_c.
    pub combustion: Option<f64>,
}

const SCAN_STEP: f64 = 1.0; // K
const BISECT_TOL: f64 = 1e-6; // K
const CLASSIFY_STEP: f64 = 1e-3; // K, centered difference for f'

/// Find and classify all roots of the heat balance on `(T_0, t_max_scan]`.
///
/// Sign changes are bracketed by a uniform 1 K scan and refined by bisection
/// to 1e-6 K; stability comes from the sign of a centered finite-difference
/// derivative. Absent roots are reported as absent.
pub fn equilibrium_points(
    activation_temp: f64,
    cooling_coeff: f64,
    ambient_temp: f64,
    cutoff_temp: f64,
    t_max_scan: f64,
) -> EquilibriumSet {
    let f = |t: f64| heat_balance(t, activation_temp, cooling_coeff, ambient_temp, cutoff_temp);

    let mut set = EquilibriumSet::default();
    if cutoff_temp == ambient_temp {
        // f(T_a) = 0 exactly: reaction and cooling both vanish.
        set.low = Some(ambient_temp);
    }

    let mut roots: Vec<(f64, bool)> = Vec::new(); // (root, stable)
    let mut a = cutoff_temp + SCAN_STEP;
    let mut fa = f(a);
    while a < t_max_scan {
        let b = (a + SCAN_STEP).min(t_max_scan);
        let fb = f(b);
        if fa == 0.0 {
            roots.push(classify(a, &f));
        } else if fa * fb < 0.0 {
            let root = bisect(a, b, fa, &f);
            roots.push(classify(root, &f));
        }
        a = b;
        fa = fb;
    }
    if fa == 0.0 {
        roots.push(classify(a, &f));
    }

    let ignition = roots.iter().find(|(_, stable)| !stable).map(|&(r, _)| r);
    set.ignition = ignition;
    for &(r, stable) in &roots {
        if !stable {
            continue;
        }
        match ignition {
            Some(ti) if r > ti => {
                set.combustion = Some(set.combustion.map_or(r, |c: f64| c.max(r)));
            }
            Some(_) => {
                if set.low.is_none() {
                    set.low = Some(r);
                }
            }
            // No unstable root: cooling dominates at high T, so a lone
            // stable root is the low equilibrium.
            None => {
                if set.low.is_none() {
                    set.low = Some(r);
                }
            }
        }
    }
    set
}

fn bisect(mut a: f64, mut b: f64, fa: f64, f: &impl Fn(f64) -> f64) -> f64 {
    let mut sign_a = fa.signum();
    while b - a > BISECT_TOL {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == sign_a {
            a = mid;
            sign_a = fm.signum();
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

fn classify(root: f64, f: &impl Fn(f64) -> f64) -> (f64, bool) {
    let slope = (f(root + CLASSIFY_STEP) - f(root - CLASSIFY_STEP)) / (2.0 * CLASSIFY_STEP);
    (root, slope < 0.0)
}

/// Arrhenius and cooling coefficients from the two upper equilibrium
/// temperatures:
///
/// `B = ln((Ti-Ta)/(Tc-Ta)) / (1/(Tc-T0) - 1/(Ti-T0))`,
/// `C = exp(-B/(Ti-T0)) / (Ti-Ta)`.
///
/// Requires `T0 <= Ta < Ti < Tc` (strictly).
pub fn identify_bc(
    ignition_temp: f64,
    combustion_temp: f64,
    ambient_temp: f64,
    cutoff_temp: f64,
) -> Result<(f64, f64)> {
    if !(cutoff_temp <= ambient_temp
        && ambient_temp < ignition_temp
        && ignition_temp < combustion_temp)
    {
        return Err(Error::InvalidArgument(format!(
            "need T0 <= Ta < Ti < Tc, got T0={cutoff_temp}, Ta={ambient_temp}, \
             Ti={ignition_temp}, Tc={combustion_temp}"
        )));
    }
    let num = ((ignition_temp - ambient_temp) / (combustion_temp - ambient_temp)).ln();
    let den = 1.0 / (combustion_temp - cutoff_temp) - 1.0 / (ignition_temp - cutoff_temp);
    let b = num / den;
    let c = (-b / (ignition_temp - cutoff_temp)).exp() / (ignition_temp - ambient_temp);
    Ok((b, c))
}

/// Temperature rise rate from the cooling coefficient and the measured
/// e-folding cooling time of the trailing edge: `A = 1/(C t_c)`.
pub fn identify_heating_rate(cooling_coeff: f64, cooling_time: f64) -> Result<f64> {
    if !(cooling_coeff > 0.0) || !(cooling_time > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need C > 0 and t_c > 0, got C={cooling_coeff}, t_c={cooling_time}"
        )));
    }
    Ok(1.0 / (cooling_coeff * cooling_time))
}

/// The two dimensionless coefficients that control qualitative combustion
/// behavior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondimParams {
    /// λ = C·B, the scaled heat loss.
    pub lambda: f64,
    /// β = B·C_S/A, the scaled fuel consumption.
    pub beta: f64,
}

/// λ = C·B and β = B·C_S/A.
pub fn nondim_params(coeffs: &ModelCoefficients) -> NondimParams {
    NondimParams {
        lambda: coeffs.cooling_coeff * coeffs.activation_temp,
        beta: coeffs.activation_temp * coeffs.fuel_rate / coeffs.heating_rate,
    }
}

/// Temperature, length, and time scales linking the dimensionless solution
/// to a physical one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    /// T₁ (K)
    pub temp: f64,
    /// x₁ (m)
    pub length: f64,
    /// t₁ (s)
    pub time: f64,
}

impl Scales {
    pub fn validate(&self) -> Result<()> {
        if !(self.temp > 0.0 && self.length > 0.0 && self.time > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scales must be positive, got T1={}, x1={}, t1={}",
                self.temp, self.length, self.time
            )));
        }
        Ok(())
    }
}

/// Physical coefficients from the dimensionless pair and solution scales:
/// `A = T1/t1`, `B = T1`, `C = λ/T1`, `C_S = β/t1`, and `k = x1²/t1`
/// (linear mode) or `k = x1²/(T1³ t1)` (cubic mode). The cutoff is placed
/// at ambient and the wind at zero.
pub fn rescale_coefficients(
    nd: &NondimParams,
    scales: &Scales,
    ambient_temp: f64,
    mode: DiffusionMode,
) -> ModelCoefficients {
    let t1 = scales.temp;
    let x1 = scales.length;
    let tau = scales.time;
    let diffusivity = match mode {
        DiffusionMode::Linear => x1 * x1 / tau,
        DiffusionMode::Cubic => x1 * x1 / (t1 * t1 * t1 * tau),
    };
    ModelCoefficients {
        diffusivity,
        heating_rate: t1 / tau,
        activation_temp: t1,
        cooling_coeff: nd.lambda / t1,
        fuel_rate: nd.beta / tau,
        ambient_temp,
        cutoff_temp: ambient_temp,
        wind: [0.0, 0.0],
    }
}

/// Solution scales from matched wave metrics of the dimensionless run and
/// the physical (measured) wave: `T1 = Tmax/T̃max`, `x1 = w/w̃`, and `t1`
/// chosen so the scaled wave moves at the physical speed,
/// `v = (x1/t1)·ṽ`.
pub fn scales_from_wave(nondim: &WaveMetrics, physical: &WaveMetrics) -> Result<Scales> {
    for (name, value) in [
        ("nondim.peak_excess", nondim.peak_excess),
        ("nondim.width", nondim.width),
        ("nondim.speed", nondim.speed),
        ("physical.peak_excess", physical.peak_excess),
        ("physical.width", physical.width),
        ("physical.speed", physical.speed),
    ] {
        if !(value > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wave metric {name} = {value} is not > 0"
            )));
        }
    }
    let length = physical.width / nondim.width;
    Ok(Scales {
        temp: physical.peak_excess / nondim.peak_excess,
        length,
        time: length * nondim.speed / physical.speed,
    })
}
