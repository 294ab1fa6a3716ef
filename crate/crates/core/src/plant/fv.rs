//! First-order upwind finite-volume solution of the full population balance.
//!
//! Only used as a reference for the moment model. The size axis is split
//! into uniform cells; growth advects density toward larger sizes and
//! nucleation enters the first cell. Moments come from midpoint quadrature.

use super::{
    growth_rate, nucleation_rate_per_kg, supersaturation, CoolingProfile, Moments, PlantParams, ProfileLimits,
    SeedSpec, CELSIUS_OFFSET,
};
use crate::error::{Error, Result};

/// Uniform grid over [0, max_size].
#[derive(Debug, Clone, PartialEq)]
pub struct SizeGrid {
    pub cells: usize,
    pub max_size: f64,
}

impl SizeGrid {
    pub fn new(cells: usize, max_size: f64) -> Result<Self> {
        if cells < 2 || !(max_size > 0.0) {
            return Err(Error::domain("size grid needs at least two cells and positive extent"));
        }
        Ok(Self { cells, max_size })
    }

    /// The reference layout: 1000 µm split into 500 cells.
    pub fn reference() -> Self {
        Self {
            cells: 500,
            max_size: 1000e-6,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_size / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.width()
    }

    pub fn moments(&self, density: &[f64]) -> Moments {
        let dl = self.width();
        let mut mu = [0.0; 4];
        for (i, &n) in density.iter().enumerate() {
            let l = self.center(i);
            let w = n * dl;
            mu[0] += w;
            mu[1] += w * l;
            mu[2] += w * l * l;
            mu[3] += w * l * l * l;
        }
        Moments(mu)
    }

    /// Gaussian seed density sampled at cell centres, scaled so the
    /// quadrature suspension density equals the seed loading.
    pub fn seed_density(&self, seed: &SeedSpec, mass_per_volume_moment: f64) -> Result<Vec<f64>> {
        seed.validate()?;
        let s = seed.size_stddev.max(self.width() * 0.5);
        let mut density: Vec<f64> = (0..self.cells)
            .map(|i| {
                let z = (self.center(i) - seed.mean_size) / s;
                (-0.5 * z * z).exp()
            })
            .collect();
        let mu3 = self.moments(&density).0[3];
        let scale = seed.seed_loading / (mass_per_volume_moment * mu3);
        density.iter_mut().for_each(|n| *n *= scale);
        Ok(density)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvOptions {
    /// Nominal time step; shortened automatically when G·dt would exceed
    /// `max_courant` cell widths.
    pub time_step_s: f64,
    pub max_courant: f64,
    /// Forces B = 0 (pure growth).
    pub disable_nucleation: bool,
}

impl Default for FvOptions {
    fn default() -> Self {
        Self {
            time_step_s: 10.0,
            max_courant: 0.5,
            disable_nucleation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvSnapshot {
    pub clock: f64,
    pub concentration: f64,
    pub temperature: f64,
    pub density: Vec<f64>,
    pub moments: Moments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FvTrace {
    pub grid: SizeGrid,
    pub snapshots: Vec<FvSnapshot>,
    /// Number of steps that had to be split to respect the Courant limit.
    pub cfl_substeps: usize,
}

struct FvState {
    conc: f64,
    temp: f64,
    density: Vec<f64>,
}

impl FvState {
    fn axpy(&self, h: f64, k: &FvState) -> FvState {
        FvState {
            conc: self.conc + h * k.conc,
            temp: self.temp + h * k.temp,
            density: self.density.iter().zip(&k.density).map(|(a, b)| a + h * b).collect(),
        }
    }
}

fn fv_rhs(
    y: &FvState,
    jacket_c: f64,
    grid: &SizeGrid,
    params: &PlantParams,
    options: &FvOptions,
) -> Result<(FvState, f64)> {
    let phys = &params.physical;
    let dl = grid.width();
    let mu = grid.moments(&y.density).0;
    let sigma = supersaturation(y.conc.max(0.0), y.temp, &params.solubility)?;
    let g = growth_rate(y.temp + CELSIUS_OFFSET, sigma, &params.kinetics)?;
    let b = if options.disable_nucleation {
        0.0
    } else {
        nucleation_rate_per_kg(
            phys.mass_per_volume_moment() * mu[3].max(0.0),
            sigma,
            &params.kinetics,
            phys,
        )?
    };
    let mut dn = vec![0.0; grid.cells];
    let mut upstream = 0.0;
    for (i, (&n, d)) in y.density.iter().zip(dn.iter_mut()).enumerate() {
        *d = -g * (n - upstream) / dl;
        if i == 0 {
            *d += b / dl;
        }
        upstream = n;
    }
    let consumption = 3.0 * phys.mass_per_volume_moment() * g * mu[2];
    let d_temp = (-phys.heat_transfer_ua * (y.temp - jacket_c)
        - phys.slurry_mass * phys.heat_of_crystallization * consumption)
        / (phys.slurry_mass * phys.heat_capacity);
    Ok((
        FvState {
            conc: -consumption,
            temp: d_temp,
            density: dn,
        },
        g,
    ))
}

/// Integrates the gridded population balance through `profile`.
///
/// Returns one snapshot per sampling instant, the first being the initial
/// condition.
pub fn fv_reference_simulate(
    grid: &SizeGrid,
    initial_density: &[f64],
    concentration: f64,
    temperature_c: f64,
    profile: &CoolingProfile,
    limits: &ProfileLimits,
    params: &PlantParams,
    options: &FvOptions,
) -> Result<FvTrace> {
    if initial_density.len() != grid.cells {
        return Err(Error::domain(format!(
            "density has {} cells, grid has {}",
            initial_density.len(),
            grid.cells
        )));
    }
    profile.validate(limits)?;
    let dl = grid.width();
    let mut y = FvState {
        conc: concentration,
        temp: temperature_c,
        density: initial_density.to_vec(),
    };
    let snapshot = |y: &FvState, clock: f64| FvSnapshot {
        clock,
        concentration: y.conc,
        temperature: y.temp,
        density: y.density.clone(),
        moments: grid.moments(&y.density),
    };
    let mut snapshots = vec![snapshot(&y, 0.0)];
    let mut cfl_substeps = 0;
    let nominal = (profile.sampling_interval_s / options.time_step_s).ceil().max(1.0) as usize;
    let h_nominal = profile.sampling_interval_s / nominal as f64;

    for (k, &jacket) in profile.hold_values.iter().enumerate() {
        let mut remaining = profile.sampling_interval_s;
        while remaining > 1e-9 {
            let mut h = h_nominal.min(remaining);
            let (k1, g) = fv_rhs(&y, jacket, grid, params, options)?;
            if g * h > options.max_courant * dl {
                h = options.max_courant * dl / g;
                cfl_substeps += 1;
            }
            let (k2, _) = fv_rhs(&y.axpy(0.5 * h, &k1), jacket, grid, params, options)?;
            let (k3, _) = fv_rhs(&y.axpy(0.5 * h, &k2), jacket, grid, params, options)?;
            let (k4, _) = fv_rhs(&y.axpy(h, &k3), jacket, grid, params, options)?;
            y.conc += h / 6.0 * (k1.conc + 2.0 * k2.conc + 2.0 * k3.conc + k4.conc);
            y.temp += h / 6.0 * (k1.temp + 2.0 * k2.temp + 2.0 * k3.temp + k4.temp);
            for i in 0..grid.cells {
                y.density[i] += h / 6.0 * (k1.density[i] + 2.0 * k2.density[i] + 2.0 * k3.density[i] + k4.density[i]);
            }
            y.conc = y.conc.max(0.0);
            remaining -= h;
        }
        snapshots.push(snapshot(&y, (k + 1) as f64 * profile.sampling_interval_s));
    }
    Ok(FvTrace {
        grid: grid.clone(),
        snapshots,
        cfl_substeps,
    })
}

/// A fixed batch used to compare the moment model with the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionCase {
    pub name: &'static str,
    pub concentration: f64,
    pub temperature_c: f64,
    pub seed: SeedSpec,
    pub profile: CoolingProfile,
}

/// Final states of both solvers for one regression batch.
#[derive(Debug, Clone)]
pub struct RegressionOutcome {
    pub moment: super::BatchTrace,
    pub reference: FvTrace,
}

impl RegressionOutcome {
    /// |L̄_fv − L̄_moments| / L̄_moments at batch end.
    pub fn mean_size_relative_gap(&self) -> f64 {
        let a = self
            .reference
            .snapshots
            .last()
            .expect("initial snapshot")
            .moments
            .mean_size();
        let b = self.moment.final_state().mean_size;
        ((a - b) / b).abs()
    }
}

impl RegressionCase {
    /// Runs the moment solver and the finite-volume reference from the same
    /// discretized seed, so both start with identical moments.
    pub fn run(&self, params: &PlantParams) -> Result<RegressionOutcome> {
        let limits = ProfileLimits::default();
        let grid = SizeGrid::reference();
        let density = grid.seed_density(&self.seed, params.physical.mass_per_volume_moment())?;
        let initial = super::PlantState::from_moments(
            self.temperature_c,
            self.concentration,
            self.temperature_c,
            grid.moments(&density),
            0.0,
            &params.physical,
        );
        let moment = super::simulate_batch(&initial, &self.profile, &limits, params)?;
        let reference = fv_reference_simulate(
            &grid,
            &density,
            self.concentration,
            self.temperature_c,
            &self.profile,
            &limits,
            params,
            &FvOptions::default(),
        )?;
        Ok(RegressionOutcome { moment, reference })
    }
}

/// Five 24 h batches: linear, constant, fast-then-hold, shallow and
/// sawtooth cooling, across seeds and supersaturations.
pub fn regression_cases() -> Vec<RegressionCase> {
    let seed = |mean_um: f64, std_um: f64, loading: f64| SeedSpec {
        mean_size: mean_um * 1e-6,
        size_stddev: std_um * 1e-6,
        seed_loading: loading,
    };
    let fast_then_hold: Vec<f64> = (0..24).map(|k| (45.0 - 7.0 * k as f64).max(10.0)).collect();
    let sawtooth: Vec<f64> = (0..24)
        .map(|k| 40.0 - k as f64 - if k % 2 == 1 { 5.0 } else { 0.0 })
        .collect();
    vec![
        RegressionCase {
            name: "linear 40→10 °C",
            concentration: 0.65,
            temperature_c: 40.0,
            seed: seed(110.0, 15.0, 0.03),
            profile: CoolingProfile::linear(40.0, 10.0, 24, 3600.0),
        },
        RegressionCase {
            name: "constant 30 °C",
            concentration: 0.6,
            temperature_c: 30.0,
            seed: seed(120.0, 10.0, 0.02),
            profile: CoolingProfile::constant(30.0, 24, 3600.0),
        },
        RegressionCase {
            name: "fast cooling then hold",
            concentration: 0.7,
            temperature_c: 45.0,
            seed: seed(100.0, 20.0, 0.05),
            profile: CoolingProfile::new(fast_then_hold, 3600.0),
        },
        RegressionCase {
            name: "shallow 45→30 °C",
            concentration: 0.56,
            temperature_c: 45.0,
            seed: seed(115.0, 12.0, 0.01),
            profile: CoolingProfile::linear(45.0, 30.0, 24, 3600.0),
        },
        RegressionCase {
            name: "sawtooth",
            concentration: 0.63,
            temperature_c: 40.0,
            seed: seed(105.0, 25.0, 0.04),
            profile: CoolingProfile::new(sawtooth, 3600.0),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{simulate_batch, PlantState};

    fn seed() -> SeedSpec {
        SeedSpec {
            mean_size: 110e-6,
            size_stddev: 15e-6,
            seed_loading: 0.03,
        }
    }

    #[test]
    fn quiescent_density_is_frozen() {
        let params = PlantParams::default();
        let grid = SizeGrid::reference();
        let dens = grid
            .seed_density(&seed(), params.physical.mass_per_volume_moment())
            .unwrap();
        let sat = params.solubility.saturation(30.0);
        let profile = CoolingProfile::constant(30.0, 3, 3600.0);
        let tr = fv_reference_simulate(
            &grid,
            &dens,
            sat,
            30.0,
            &profile,
            &ProfileLimits::default(),
            &params,
            &FvOptions::default(),
        )
        .unwrap();
        assert_eq!(tr.snapshots.last().unwrap().density, dens);
    }

    #[test]
    fn pure_growth_conserves_count() {
        let params = PlantParams::default();
        let grid = SizeGrid::reference();
        let dens = grid
            .seed_density(&seed(), params.physical.mass_per_volume_moment())
            .unwrap();
        let profile = CoolingProfile::linear(40.0, 10.0, 12, 3600.0);
        let tr = fv_reference_simulate(
            &grid,
            &dens,
            0.7,
            40.0,
            &profile,
            &ProfileLimits::default(),
            &params,
            &FvOptions {
                disable_nucleation: true,
                ..FvOptions::default()
            },
        )
        .unwrap();
        let first = tr.snapshots[0].moments.0[0];
        let last = tr.snapshots.last().unwrap().moments;
        assert!(((last.0[0] - first) / first).abs() < 1e-3);
        assert!(last.mean_size() > 130e-6);
    }

    #[test]
    fn oversized_step_triggers_substepping() {
        let params = PlantParams::default();
        let grid = SizeGrid::new(200, 1000e-6).unwrap();
        let dens = grid
            .seed_density(&seed(), params.physical.mass_per_volume_moment())
            .unwrap();
        let profile = CoolingProfile::constant(20.0, 2, 3600.0);
        let opts = FvOptions {
            time_step_s: 3600.0,
            ..FvOptions::default()
        };
        let tr = fv_reference_simulate(
            &grid,
            &dens,
            0.75,
            20.0,
            &profile,
            &ProfileLimits::default(),
            &params,
            &opts,
        )
        .unwrap();
        assert!(tr.cfl_substeps > 0);
        assert!(tr.snapshots.last().unwrap().density.iter().all(|n| n.is_finite()));
    }

    #[test]
    fn agrees_with_moment_solver_on_linear_cooling() {
        let params = PlantParams::default();
        let limits = ProfileLimits::default();
        let grid = SizeGrid::reference();
        let dens = grid
            .seed_density(&seed(), params.physical.mass_per_volume_moment())
            .unwrap();
        let moments = grid.moments(&dens);
        let profile = CoolingProfile::linear(40.0, 10.0, 24, 3600.0);
        let fv = fv_reference_simulate(
            &grid,
            &dens,
            0.65,
            40.0,
            &profile,
            &limits,
            &params,
            &FvOptions::default(),
        )
        .unwrap();
        let initial = PlantState::from_moments(40.0, 0.65, 40.0, moments, 0.0, &params.physical);
        let mom = simulate_batch(&initial, &profile, &limits, &params).unwrap();
        let a = fv.snapshots.last().unwrap().moments.mean_size();
        let b = mom.final_state().mean_size;
        assert!(((a - b) / b).abs() < 0.01, "fv {a} vs moments {b}");
    }
}
