//! Simulation loop, event log, metrics and replay.

mod config;
mod events;
mod metrics;
mod sim;

pub use config::{
    ConfigError, Governance, PlannerKind, PopulationSource, Scenario, SimConfig, WorkerKind,
};
pub use events::{
    ElectionRecord, Event, EventLog, LogError, LogHeader, ParseFailureRecord, PolicyRecord, StepRecord,
    SCHEMA_VERSION,
};
pub use metrics::{
    convergence_step, export_csv, replay, summarize, swf_moving_average, swf_series, year_schedules, ExportKind,
    MetricsError, MetricsSummary, YearSummary,
};
pub use sim::{
    evaluate_schedule, population_skills, run_simulation, EngineError, EvaluationReport, PlannerState, SimOutput,
    SimState, Simulation, Throughput, WorkerState,
};
