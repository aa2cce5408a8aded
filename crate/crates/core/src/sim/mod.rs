pub mod io;
pub mod metrics;
pub mod presets;
pub mod run;
pub mod scenario;

pub use run::{run, Diverged, RunDiagnostics, RunOutput, Trajectory};
pub use scenario::{load_scenario, PlantInit, Scenario, SetpointSchedule};
pub use io::{load_metrics, load_trajectory, write_outputs, OutputPaths};
