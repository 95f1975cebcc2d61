//! File formats and command implementations behind the command-line tool.

pub mod report;
pub mod sim_config;
pub mod tabulation;

pub use report::{
    cmd_estimate, cmd_panel, EstimateRequest, Grouping, PanelGroupReport, PanelReport, PanelRequest, RunReport,
    SimpleColumn, YearReport, ASSUMED_N_NOTE,
};
pub use sim_config::{cmd_simulate, run_study_config, write_outputs, StudyConfig};
pub use tabulation::{
    fraction_to_percent, parse_tabulation, parse_tabulation_reader, parse_tabulation_str, percent_to_fraction,
    write_tabulation_csv,
};
