//! Feature layouts shared by datasets, networks and controllers.
//!
//! Network features use °C, hours and µm; the plant itself works in SI.

use serde::{Deserialize, Serialize};

use crate::plant::PlantState;

pub const PLANT_FEATURES: [&str; 10] = [
    "Tj_C", "Cs", "T_C", "Lbar_um", "mu0", "mu1", "mu2", "mu3", "MT", "clock_h",
];

pub const AUGMENTED_FEATURES: [&str; 12] = [
    "Tj_C",
    "Cs",
    "T_C",
    "Lbar_um",
    "mu0",
    "mu1",
    "mu2",
    "mu3",
    "MT",
    "clock_h",
    "Lfinal_um",
    "e_um2",
];

/// Surrogate outputs: the next plant state without the jacket channel, which
/// is an exogenous input rather than something the plant produces.
pub const SURROGATE_TARGETS: [&str; 9] = ["Cs", "T_C", "Lbar_um", "mu0", "mu1", "mu2", "mu3", "MT", "clock_h"];

pub const CONTROLLER_TARGETS: [&str; 2] = ["Tj_next_C", "e_next_um2"];

pub const JACKET: usize = 0;
pub const MEAN_SIZE: usize = 3;
pub const TERMINAL_SIZE: usize = 10;
pub const SQUARED_ERROR: usize = 11;
/// Index of L̄ within [`SURROGATE_TARGETS`].
pub const SURROGATE_MEAN_SIZE: usize = 2;

pub fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Plant-state row in network units.
pub fn plant_row(s: &PlantState) -> [f64; 10] {
    [
        s.jacket_temp,
        s.concentration,
        s.temperature,
        s.mean_size * 1e6,
        s.mu0,
        s.mu1,
        s.mu2,
        s.mu3,
        s.suspension_density,
        s.clock / 3600.0,
    ]
}

/// Plant-state row without the jacket channel.
pub fn surrogate_target_row(s: &PlantState) -> [f64; 9] {
    let row = plant_row(s);
    std::array::from_fn(|i| row[i + 1])
}

/// A plant state seen by the controller network: the state plus a terminal
/// size target and the squared gap to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedFrame {
    pub state: PlantState,
    /// m
    pub terminal_size: f64,
    /// m²
    pub squared_error: f64,
}

impl AugmentedFrame {
    pub fn new(state: PlantState, terminal_size: f64) -> Self {
        let gap = terminal_size - state.mean_size;
        Self {
            state,
            terminal_size,
            squared_error: gap * gap,
        }
    }

    pub fn row(&self) -> [f64; 12] {
        let p = plant_row(&self.state);
        let mut out = [0.0; 12];
        out[..10].copy_from_slice(&p);
        out[TERMINAL_SIZE] = self.terminal_size * 1e6;
        out[SQUARED_ERROR] = self.squared_error * 1e12;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Plant-state windows, next-state targets (LSTM_s).
    Surrogate,
    /// Augmented windows, next jacket temperature and error targets (LSTMc).
    Controller,
}

impl WindowMode {
    pub fn input_features(self) -> Vec<String> {
        match self {
            WindowMode::Surrogate => names(&PLANT_FEATURES),
            WindowMode::Controller => names(&AUGMENTED_FEATURES),
        }
    }

    pub fn target_features(self) -> Vec<String> {
        match self {
            WindowMode::Surrogate => names(&SURROGATE_TARGETS),
            WindowMode::Controller => names(&CONTROLLER_TARGETS),
        }
    }
}

impl std::str::FromStr for WindowMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "surrogate" => Ok(WindowMode::Surrogate),
            "controller" => Ok(WindowMode::Controller),
            other => Err(crate::Error::Config(format!(
                "mode must be `surrogate` or `controller` (got `{other}`)"
            ))),
        }
    }
}

impl std::fmt::Display for WindowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WindowMode::Surrogate => "surrogate",
            WindowMode::Controller => "controller",
        })
    }
}
