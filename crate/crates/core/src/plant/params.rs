use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dextrose growth and nucleation constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KineticParams {
    #[serde(rename = "growth_prefactor_m_per_s")]
    pub growth_prefactor: f64,
    #[serde(rename = "growth_activation_energy_j_per_mol")]
    pub growth_activation_energy: f64,
    pub growth_sigma_exponent: f64,
    #[serde(rename = "nucleation_prefactor_per_kg_s")]
    pub nucleation_prefactor: f64,
    pub nucleation_mt_exponent: f64,
    pub nucleation_sigma_exponent: f64,
    #[serde(rename = "gas_constant_j_per_mol_k")]
    pub gas_constant: f64,
}

impl Default for KineticParams {
    fn default() -> Self {
        Self {
            growth_prefactor: 1.14e-3,
            growth_activation_energy: 29549.0,
            growth_sigma_exponent: 1.05,
            nucleation_prefactor: 4.50e4,
            nucleation_mt_exponent: 0.49,
            nucleation_sigma_exponent: 1.41,
            gas_constant: 8.314,
        }
    }
}

impl KineticParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("growth_prefactor", self.growth_prefactor),
            ("growth_activation_energy", self.growth_activation_energy),
            ("growth_sigma_exponent", self.growth_sigma_exponent),
            ("nucleation_prefactor", self.nucleation_prefactor),
            ("nucleation_mt_exponent", self.nucleation_mt_exponent),
            ("nucleation_sigma_exponent", self.nucleation_sigma_exponent),
            ("gas_constant", self.gas_constant),
        ];
        check_positive(&fields)
    }
}

/// Basis on which the nucleation law is evaluated.
///
/// `Volumetric` evaluates the rate with the suspension density in kg per m³ of
/// slurry and converts the resulting #/(m³·s) back to the per-kg moment basis.
/// `Mass` evaluates it directly with kg/kg and treats the rate as #/(kg·s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NucleationBasis {
    Mass,
    Volumetric {
        #[serde(rename = "slurry_density_kg_per_m3")]
        slurry_density: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    #[serde(rename = "crystal_density_kg_per_m3")]
    pub crystal_density: f64,
    pub shape_factor: f64,
    #[serde(rename = "slurry_mass_kg")]
    pub slurry_mass: f64,
    #[serde(rename = "heat_capacity_j_per_kg_k")]
    pub heat_capacity: f64,
    #[serde(rename = "heat_transfer_ua_w_per_k")]
    pub heat_transfer_ua: f64,
    #[serde(rename = "heat_of_crystallization_j_per_kg")]
    pub heat_of_crystallization: f64,
    #[serde(rename = "nucleate_size_m")]
    pub nucleate_size: f64,
    pub nucleation_basis: NucleationBasis,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            crystal_density: 1560.0,
            shape_factor: std::f64::consts::FRAC_PI_6,
            slurry_mass: 1.0,
            heat_capacity: 3000.0,
            heat_transfer_ua: 5.0,
            heat_of_crystallization: 1.0e5,
            nucleate_size: 1.0e-6,
            nucleation_basis: NucleationBasis::Volumetric { slurry_density: 1300.0 },
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let mut fields = vec![
            ("crystal_density", self.crystal_density),
            ("shape_factor", self.shape_factor),
            ("slurry_mass", self.slurry_mass),
            ("heat_capacity", self.heat_capacity),
            ("heat_transfer_ua", self.heat_transfer_ua),
            ("heat_of_crystallization", self.heat_of_crystallization),
            ("nucleate_size", self.nucleate_size),
        ];
        if let NucleationBasis::Volumetric { slurry_density } = self.nucleation_basis {
            fields.push(("slurry_density", slurry_density));
        }
        check_positive(&fields)
    }

    /// Crystal mass per unit third moment, ρ_c·k_v.
    pub fn mass_per_volume_moment(&self) -> f64 {
        self.crystal_density * self.shape_factor
    }

    /// Thermal time constant m·C_p/UA in seconds.
    pub fn thermal_time_constant(&self) -> f64 {
        self.slurry_mass * self.heat_capacity / self.heat_transfer_ua
    }
}

/// Saturation concentration as a polynomial in temperature (°C), ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolubilityModel {
    #[serde(rename = "coefficients_kg_per_kg")]
    pub coefficients: Vec<f64>,
}

impl Default for SolubilityModel {
    fn default() -> Self {
        Self {
            coefficients: vec![0.25, 0.006],
        }
    }
}

impl SolubilityModel {
    pub fn linear(intercept: f64, slope: f64) -> Self {
        Self {
            coefficients: vec![intercept, slope],
        }
    }

    /// Saturation concentration (kg/kg) at `temp_c`.
    pub fn saturation(&self, temp_c: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * temp_c + c)
    }

    /// Positive and non-decreasing over the operating band [5, 45] °C.
    pub fn validate(&self) -> Result<()> {
        if self.coefficients.is_empty() || self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::config(
                "solubility.coefficients_kg_per_kg must be a non-empty list of finite numbers",
            ));
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=400 {
            let t = 5.0 + 40.0 * i as f64 / 400.0;
            let c = self.saturation(t);
            if c <= 0.0 {
                return Err(Error::config(format!(
                    "solubility.coefficients_kg_per_kg: saturation {c} at {t} °C is not positive"
                )));
            }
            if c < prev {
                return Err(Error::config(format!(
                    "solubility.coefficients_kg_per_kg: saturation decreases near {t} °C"
                )));
            }
            prev = c;
        }
        Ok(())
    }
}

/// Everything the crystallizer model needs besides its state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    pub kinetics: KineticParams,
    pub physical: PhysicalParams,
    pub solubility: SolubilityModel,
    pub integrator: IntegratorParams,
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        self.kinetics.validate()?;
        self.physical.validate()?;
        self.solubility.validate()?;
        self.integrator.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorParams {
    /// Largest RK4 substep.
    pub internal_step_s: f64,
}

impl Default for IntegratorParams {
    fn default() -> Self {
        Self { internal_step_s: 10.0 }
    }
}

impl IntegratorParams {
    pub fn validate(&self) -> Result<()> {
        check_positive(&[("internal_step_s", self.internal_step_s)])
    }
}

fn check_positive(fields: &[(&str, f64)]) -> Result<()> {
    for (name, value) in fields {
        if !(value.is_finite() && *value > 0.0) {
            return Err(Error::config(format!(
                "{name} must be finite and strictly positive (got {value})"
            )));
        }
    }
    Ok(())
}
