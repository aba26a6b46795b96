//! Library surface of the command-line driver: config and analysis-spec
//! parsing, the simulate/scan runners, and the analyze dispatch. The binary
//! in `main.rs` is a thin argument parser over these.

pub mod analyze;
pub mod config;
pub mod run;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Simulation(String),
    Analysis(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Analysis(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Simulation(m) | CliError::Analysis(m) => m,
        }
    }
}
