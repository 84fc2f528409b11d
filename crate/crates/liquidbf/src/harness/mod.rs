//! Experiment orchestration: configuration ingestion, seeded sweeps over
//! transmit power and channel-estimation error, checkpoint management, and
//! CSV/JSON persistence.
//!
//! Reproducibility contract: every random quantity is drawn from a stream
//! named by the master seed plus explicit labels (paths by `(seed, user)`,
//! error shapes by `(seed, pattern)`, training data by `(antenna, episode)`),
//! so sweep cells are paired where it matters — methods share channels within
//! a cell, power and error grids share channels per seed — and no cell's draw
//! can perturb another's. Rerunning any command with the same configuration
//! and master seed reproduces the result rows and checkpoint files byte for
//! byte (the wall-time column is measured, not derived, and is excluded from
//! that guarantee).

mod config;
mod report;
mod sweep;

pub use config::{
    AntennaKind, CodebookConfig, ExperimentConfig, Method, SelectionCriterion, TrainSettings,
};
pub use report::{
    aggregate, read_aggregate_csv, read_result_csv, report_command, write_aggregate_csv,
    write_result_csv, AggregateRow, ReportSummary, ResultRow, RESULTS_SCHEMA,
};
pub use sweep::{
    gen_scenario_command, run_cee_sweep, run_power_sweep, train_command, SweepKind, SweepOutput,
};

/// Converts dBm to watts: `10^((x − 30)/10)`.
pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts watts to dBm; exact inverse of [`dbm_to_watt`].
pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * watt.log10() + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dbm_reference_points() {
        assert_relative_eq!(dbm_to_watt(30.0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(dbm_to_watt(0.0), 1e-3, max_relative = 1e-14);
        assert_relative_eq!(dbm_to_watt(-90.0), 1e-12, max_relative = 1e-14);
    }

    #[test]
    fn dbm_round_trip() {
        for x in [-120.0, -31.7, 0.0, 12.5, 30.0, 44.0] {
            assert_relative_eq!(watt_to_dbm(dbm_to_watt(x)), x, epsilon = 1e-12);
        }
        for w in [1e-15, 1e-6, 0.25, 1.0, 31.7] {
            assert_relative_eq!(dbm_to_watt(watt_to_dbm(w)), w, max_relative = 1e-12);
        }
    }
}
