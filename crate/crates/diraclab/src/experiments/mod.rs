//! Configuration, orchestration, and reporting: single runs, hbar
//! convergence sweeps, Dirac-versus-Vlasov comparisons, and the
//! regularized-Coulomb study.

pub mod config;
pub mod report;
pub mod runner;
pub mod scan;
pub mod sweep;

pub use config::{standard_battery, RunConfig};
pub use report::run;
pub use sweep::{compare_dirac_vlasov, compare_sweep, convergence_sweep, coulomb_study};
