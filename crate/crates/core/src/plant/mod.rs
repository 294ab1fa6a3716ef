//! Batch dextrose crystallizer.
//!
//! The population balance is reduced to the first four moments of the
//! number density and integrated together with the solute mass balance and
//! the slurry energy balance:
//!
//! ```text
//! dμ0/dt = B
//! dμj/dt = j·G·μ(j-1) + B·L0^j              j = 1..3
//! dC/dt  = -3·ρc·kv·G·μ2
//! m·Cp·dT/dt = -UA·(T - Tj) - m·ΔH·3·ρc·kv·G·μ2
//! ```
//!
//! with `G = kg·exp(-Eg/(R·T))·σ^g` and `B = kb·M_T^b·σ^n`. Moments and
//! concentration are on a per-kg-of-slurry basis. Temperatures are °C on the
//! public surface and converted to Kelvin for the Arrhenius term.
//!
//! [`fv`] holds a finite-volume discretization of the full PDE that serves as
//! an accuracy reference for the moment model.

pub mod fv;
mod params;
mod state;
mod trace;

pub use params::{IntegratorParams, KineticParams, NucleationBasis, PhysicalParams, PlantParams, SolubilityModel};
pub use state::{CoolingProfile, Moments, PlantState, ProfileLimits, SeedSpec};
pub(crate) use trace::state_csv_fields;
pub use trace::{write_trace_csv, TRACE_CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CELSIUS_OFFSET: f64 = 273.15;

/// Relative supersaturation `max(0, (C - Csat(T)) / Csat(T))`.
pub fn supersaturation(concentration: f64, temp_c: f64, solubility: &SolubilityModel) -> Result<f64> {
    if !concentration.is_finite() || !temp_c.is_finite() {
        return Err(Error::domain("supersaturation needs finite inputs"));
    }
    if !(0.0..=60.0).contains(&temp_c) {
        return Err(Error::domain(format!(
            "temperature {temp_c} °C outside the solubility range [0, 60] °C"
        )));
    }
    if concentration < 0.0 {
        return Err(Error::domain(format!("negative concentration {concentration}")));
    }
    let c_sat = solubility.saturation(temp_c);
    Ok(((concentration - c_sat) / c_sat).max(0.0))
}

/// Crystal growth rate in m/s; `temp_k` is absolute temperature.
pub fn growth_rate(temp_k: f64, sigma: f64, kinetics: &KineticParams) -> Result<f64> {
    if !(temp_k.is_finite() && temp_k > 0.0) {
        return Err(Error::domain(format!(
            "absolute temperature must be positive (got {temp_k})"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::domain(format!(
            "supersaturation must be non-negative (got {sigma})"
        )));
    }
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let arrhenius = (-kinetics.growth_activation_energy / (kinetics.gas_constant * temp_k)).exp();
    Ok(kinetics.growth_prefactor * arrhenius * sigma.powf(kinetics.growth_sigma_exponent))
}

/// Nucleation rate evaluated on whatever basis `suspension_density` is given in.
pub fn nucleation_rate(suspension_density: f64, sigma: f64, kinetics: &KineticParams) -> Result<f64> {
    if !(suspension_density.is_finite() && suspension_density >= 0.0) {
        return Err(Error::domain(format!(
            "suspension density must be non-negative (got {suspension_density})"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::domain(format!(
            "supersaturation must be non-negative (got {sigma})"
        )));
    }
    if suspension_density == 0.0 || sigma == 0.0 {
        return Ok(0.0);
    }
    Ok(kinetics.nucleation_prefactor
        * suspension_density.powf(kinetics.nucleation_mt_exponent)
        * sigma.powf(kinetics.nucleation_sigma_exponent))
}

/// Nucleation rate per kg of slurry for a suspension density in kg/kg.
pub fn nucleation_rate_per_kg(
    suspension_density: f64,
    sigma: f64,
    kinetics: &KineticParams,
    physical: &PhysicalParams,
) -> Result<f64> {
    match physical.nucleation_basis {
        NucleationBasis::Mass => nucleation_rate(suspension_density, sigma, kinetics),
        NucleationBasis::Volumetric { slurry_density } => {
            Ok(nucleation_rate(suspension_density * slurry_density, sigma, kinetics)? / slurry_density)
        }
    }
}

/// Moments of a Gaussian seed population scaled to the requested loading.
pub fn seed_to_moments(seed: &SeedSpec, physical: &PhysicalParams) -> Result<Moments> {
    seed.validate()?;
    let m = seed.mean_size;
    let s2 = seed.size_stddev * seed.size_stddev;
    let third = m * m * m + 3.0 * m * s2;
    let count = seed.seed_loading / (physical.mass_per_volume_moment() * third);
    Ok(Moments([count, count * m, count * (m * m + s2), count * third]))
}

/// Time derivatives of the moment model, per second.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivatives {
    pub concentration: f64,
    /// °C/s
    pub temperature: f64,
    pub moments: [f64; 4],
    pub growth_rate: f64,
    pub nucleation_rate: f64,
}

/// Right-hand side of the moment model at `state` under jacket temperature `jacket_c`.
pub fn moment_rhs(state: &PlantState, jacket_c: f64, params: &PlantParams) -> Result<Derivatives> {
    state.validate()?;
    rhs_raw(
        [
            state.concentration,
            state.temperature,
            state.mu0,
            state.mu1,
            state.mu2,
            state.mu3,
        ],
        jacket_c,
        params,
    )
}

// y = [C, T(°C), μ0, μ1, μ2, μ3]
fn rhs_raw(y: [f64; 6], jacket_c: f64, params: &PlantParams) -> Result<Derivatives> {
    let [conc, temp_c, mu0, mu1, mu2, mu3] = y;
    let phys = &params.physical;
    let sigma = supersaturation(conc.max(0.0), temp_c, &params.solubility)?;
    let growth = growth_rate(temp_c + CELSIUS_OFFSET, sigma, &params.kinetics)?;
    let mt = phys.mass_per_volume_moment() * mu3.max(0.0);
    let birth = nucleation_rate_per_kg(mt, sigma, &params.kinetics, phys)?;
    let l0 = phys.nucleate_size;

    let consumption = 3.0 * phys.mass_per_volume_moment() * growth * mu2;
    let d_temp = (-phys.heat_transfer_ua * (temp_c - jacket_c)
        - phys.slurry_mass * phys.heat_of_crystallization * consumption)
        / (phys.slurry_mass * phys.heat_capacity);

    Ok(Derivatives {
        concentration: -consumption,
        temperature: d_temp,
        moments: [
            birth,
            growth * mu0 + birth * l0,
            2.0 * growth * mu1 + birth * l0 * l0,
            3.0 * growth * mu2 + birth * l0 * l0 * l0,
        ],
        growth_rate: growth,
        nucleation_rate: birth,
    })
}

fn deriv_vec(d: &Derivatives) -> [f64; 6] {
    [
        d.concentration,
        d.temperature,
        d.moments[0],
        d.moments[1],
        d.moments[2],
        d.moments[3],
    ]
}

fn axpy(y: &[f64; 6], h: f64, k: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| y[i] + h * k[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverWarning {
    /// A step drove the concentration negative and it was clamped to zero.
    NegativeConcentrationClamped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: PlantState,
    pub warnings: Vec<SolverWarning>,
}

/// Advances `state` by `dt` seconds under a constant jacket temperature using
/// fixed-step RK4 with substeps no longer than `params.integrator.internal_step_s`.
pub fn step(state: &PlantState, jacket_c: f64, dt: f64, params: &PlantParams) -> Result<StepResult> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::domain(format!("step length must be non-negative (got {dt})")));
    }
    if !jacket_c.is_finite() {
        return Err(Error::domain("jacket temperature must be finite"));
    }
    state.validate()?;
    if dt == 0.0 {
        return Ok(StepResult {
            state: *state,
            warnings: Vec::new(),
        });
    }
    let substeps = (dt / params.integrator.internal_step_s).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let mut warnings = Vec::new();
    let mut y = [
        state.concentration,
        state.temperature,
        state.mu0,
        state.mu1,
        state.mu2,
        state.mu3,
    ];
    for _ in 0..substeps {
        let k1 = deriv_vec(&rhs_raw(y, jacket_c, params)?);
        let k2 = deriv_vec(&rhs_raw(axpy(&y, 0.5 * h, &k1), jacket_c, params)?);
        let k3 = deriv_vec(&rhs_raw(axpy(&y, 0.5 * h, &k2), jacket_c, params)?);
        let k4 = deriv_vec(&rhs_raw(axpy(&y, h, &k3), jacket_c, params)?);
        for i in 0..6 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y[0] < 0.0 {
            y[0] = 0.0;
            if !warnings.contains(&SolverWarning::NegativeConcentrationClamped) {
                warnings.push(SolverWarning::NegativeConcentrationClamped);
            }
        }
    }
    let next = PlantState::from_moments(
        jacket_c,
        y[0],
        y[1],
        Moments([y[2], y[3], y[4], y[5]]),
        state.clock + dt,
        &params.physical,
    );
    next.validate()?;
    Ok(StepResult { state: next, warnings })
}

/// Open-loop trace, one state per sampling instant including t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTrace {
    pub states: Vec<PlantState>,
    /// (sampling interval index, warning)
    pub warnings: Vec<(usize, SolverWarning)>,
}

impl BatchTrace {
    pub fn final_state(&self) -> &PlantState {
        self.states.last().expect("trace always holds the initial state")
    }
}

/// Runs the whole batch under `profile`, starting from `initial`.
pub fn simulate_batch(
    initial: &PlantState,
    profile: &CoolingProfile,
    limits: &ProfileLimits,
    params: &PlantParams,
) -> Result<BatchTrace> {
    profile.validate(limits)?;
    let mut states = Vec::with_capacity(profile.holds() + 1);
    let mut warnings = Vec::new();
    states.push(*initial);
    let mut current = *initial;
    for (k, &hold) in profile.hold_values.iter().enumerate() {
        let res = step(&current, hold, profile.sampling_interval_s, params)?;
        warnings.extend(res.warnings.into_iter().map(|w| (k, w)));
        current = res.state;
        // keep the clock on the sampling grid exactly
        current.clock = initial.clock + (k + 1) as f64 * profile.sampling_interval_s;
        states.push(current);
    }
    Ok(BatchTrace { states, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> PlantParams {
        PlantParams::default()
    }

    fn seeded(conc: f64, temp: f64) -> PlantState {
        PlantState::seeded(conc, temp, &SeedSpec::default(), &PhysicalParams::default()).unwrap()
    }

    #[test]
    fn supersaturation_anchors() {
        let sol = SolubilityModel::default();
        let cs = sol.saturation(20.0);
        assert_eq!(supersaturation(cs, 20.0, &sol).unwrap(), 0.0);
        assert_relative_eq!(supersaturation(2.0 * cs, 20.0, &sol).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(supersaturation(0.5 * cs, 20.0, &sol).unwrap(), 0.0);
        assert!(supersaturation(f64::NAN, 20.0, &sol).is_err());
        assert!(supersaturation(0.5, f64::INFINITY, &sol).is_err());
    }

    #[test]
    fn default_solubility_keeps_initial_range_supersaturated() {
        let sol = SolubilityModel::default();
        sol.validate().unwrap();
        for t in [5.0, 25.0, 45.0] {
            assert!(supersaturation(0.55, t, &sol).unwrap() > 0.0);
        }
    }

    #[test]
    fn growth_rate_values() {
        let k = KineticParams::default();
        assert_eq!(growth_rate(300.0, 0.0, &k).unwrap(), 0.0);
        // 1.14e-3 * exp(-29549 / (8.314 * 298.15))
        let g = growth_rate(298.15, 1.0, &k).unwrap();
        assert_relative_eq!(g, 7.58326e-9, max_relative = 1e-5);
        assert!(growth_rate(310.0, 1.0, &k).unwrap() > g);
        assert!(growth_rate(0.0, 1.0, &k).is_err());
        assert!(growth_rate(-5.0, 1.0, &k).is_err());
    }

    #[test]
    fn nucleation_rate_values() {
        let k = KineticParams::default();
        assert_eq!(nucleation_rate(0.0, 0.5, &k).unwrap(), 0.0);
        assert_eq!(nucleation_rate(1.0, 1.0, &k).unwrap(), 4.5e4);
        // independent evaluation through logarithms
        let expected = (4.5e4f64.ln() + 0.49 * 0.04f64.ln() + 1.41 * 0.2f64.ln()).exp();
        assert_relative_eq!(nucleation_rate(0.04, 0.2, &k).unwrap(), expected, max_relative = 1e-12);
        assert!(nucleation_rate(-0.1, 0.2, &k).is_err());
        assert!(nucleation_rate(0.1, -0.2, &k).is_err());
    }

    #[test]
    fn volumetric_basis_converts_rate() {
        let k = KineticParams::default();
        let mut phys = PhysicalParams::default();
        phys.nucleation_basis = NucleationBasis::Volumetric { slurry_density: 1300.0 };
        let vol = nucleation_rate_per_kg(0.05, 0.3, &k, &phys).unwrap();
        let direct = nucleation_rate(0.05 * 1300.0, 0.3, &k).unwrap() / 1300.0;
        assert_relative_eq!(vol, direct, max_relative = 1e-14);
        phys.nucleation_basis = NucleationBasis::Mass;
        assert_eq!(
            nucleation_rate_per_kg(0.05, 0.3, &k, &phys).unwrap(),
            nucleation_rate(0.05, 0.3, &k).unwrap()
        );
    }

    #[test]
    fn monodisperse_seed_moments() {
        let phys = PhysicalParams::default();
        let seed = SeedSpec {
            mean_size: 100e-6,
            size_stddev: 0.0,
            seed_loading: 0.05,
        };
        let mu = seed_to_moments(&seed, &phys).unwrap().0;
        for j in 1..4 {
            assert_relative_eq!(mu[j], mu[0] * 100e-6f64.powi(j as i32), max_relative = 1e-14);
        }
        assert_relative_eq!(phys.mass_per_volume_moment() * mu[3], 0.05, max_relative = 1e-12);
    }

    #[test]
    fn seed_moments_match_gaussian_quadrature() {
        let phys = PhysicalParams::default();
        let seed = SeedSpec {
            mean_size: 100e-6,
            size_stddev: 10e-6,
            seed_loading: 0.05,
        };
        let mu = seed_to_moments(&seed, &phys).unwrap().0;
        // trapezoid on ±8 standard deviations of a unit-count Gaussian
        let n = 20_000;
        let (lo, hi) = (20e-6, 180e-6);
        let dl = (hi - lo) / n as f64;
        let mut q = [0.0; 4];
        for i in 0..=n {
            let l: f64 = lo + i as f64 * dl;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let z = (l - 100e-6) / 10e-6;
            let dens = (-0.5 * z * z).exp() / (10e-6 * (2.0 * std::f64::consts::PI).sqrt());
            for (j, qj) in q.iter_mut().enumerate() {
                *qj += w * dl * dens * l.powi(j as i32);
            }
        }
        assert_relative_eq!(q[0], 1.0, max_relative = 1e-9);
        for j in 1..4 {
            assert_relative_eq!(mu[j] / mu[0], q[j] / q[0], max_relative = 1e-9);
        }
        assert!(seed_to_moments(
            &SeedSpec {
                seed_loading: 0.0,
                ..seed
            },
            &phys
        )
        .is_err());
    }

    #[test]
    fn frozen_kinetics_rhs() {
        let p = params();
        let sat = p.solubility.saturation(30.0);
        let mut s = seeded(sat, 30.0);
        let d = moment_rhs(&s, 20.0, &p).unwrap();
        assert_eq!(d.moments, [0.0; 4]);
        assert_eq!(d.concentration, 0.0);
        assert_relative_eq!(d.temperature, -5.0 * 10.0 / 3000.0, max_relative = 1e-14);

        s.jacket_temp = 30.0;
        let d = moment_rhs(&s, 30.0, &p).unwrap();
        assert_eq!(d.temperature, 0.0);
        assert_eq!(d.moments, [0.0; 4]);
    }

    #[test]
    fn mass_balance_identity_in_rhs() {
        let p = params();
        let s = seeded(0.7, 25.0);
        let d = moment_rhs(&s, 20.0, &p).unwrap();
        assert!(d.growth_rate > 0.0);
        let consumption = 3.0 * p.physical.mass_per_volume_moment() * d.growth_rate * s.mu2;
        assert_eq!(d.concentration + consumption, 0.0);
        assert!(d.moments.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn zero_step_is_identity() {
        let s = seeded(0.65, 30.0);
        let r = step(&s, 20.0, 0.0, &params()).unwrap();
        assert_eq!(r.state, s);
    }

    #[test]
    fn frozen_step_relaxes_temperature_only() {
        let p = params();
        // undersaturated and heating: stays undersaturated throughout
        let sat = p.solubility.saturation(30.0);
        let s = seeded(sat * 0.9, 30.0);
        let r = step(&s, 45.0, 600.0, &p).unwrap().state;
        assert_eq!(r.moments(), s.moments());
        assert!(r.temperature > 30.0 && r.temperature < 45.0);
        assert_eq!(r.jacket_temp, 45.0);
    }

    #[test]
    fn saturated_constant_profile_keeps_mean_size() {
        let p = params();
        let limits = ProfileLimits::default();
        let sat = p.solubility.saturation(30.0);
        let s = seeded(sat, 30.0);
        let trace = simulate_batch(&s, &CoolingProfile::constant(30.0, 24, 3600.0), &limits, &p).unwrap();
        for st in &trace.states {
            assert_eq!(st.mean_size, s.mean_size);
        }
    }

    #[test]
    fn linear_cooling_grows_crystals() {
        let p = params();
        let limits = ProfileLimits::default();
        let s = seeded(0.65, 45.0);
        let profile = CoolingProfile::linear(45.0, 5.0, 24, 3600.0);
        let trace = simulate_batch(&s, &profile, &limits, &p).unwrap();
        assert_eq!(trace.states.len(), 25);
        assert!(trace.final_state().mean_size > s.mean_size);
        for (k, st) in trace.states.iter().enumerate() {
            assert_eq!(st.clock, 3600.0 * k as f64);
            st.validate().unwrap();
        }
    }

    #[test]
    fn simulate_rejects_infeasible_profile() {
        let p = params();
        let s = seeded(0.65, 45.0);
        let mut profile = CoolingProfile::linear(45.0, 5.0, 24, 3600.0);
        profile.hold_values[3] = 1.0;
        assert!(simulate_batch(&s, &profile, &ProfileLimits::default(), &p).is_err());
        let jump = CoolingProfile::new(vec![45.0, 30.0], 3600.0);
        assert!(simulate_batch(&s, &jump, &ProfileLimits::default(), &p).is_err());
    }

    #[test]
    fn limits_clamp_is_feasible() {
        let l = ProfileLimits::default();
        assert_eq!(l.clamp(20.0, 40.0), 27.0);
        assert_eq!(l.clamp(8.0, -3.0), 5.0);
        assert_eq!(l.clamp(20.0, 22.0), 22.0);
        assert_eq!(l.clamp(20.0, f64::NAN), 20.0);
        assert!(l.admits(20.0, 27.0));
        assert!(!l.admits(20.0, 27.5));
    }
}
