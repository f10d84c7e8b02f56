//! Worker and planner policies, their memory, prompts and the election.

mod action;
mod best_response;
mod buffer;
mod election;
mod observation;
mod policy;
mod prompts;

pub use action::{parse_action, render_action, Action, ActionKind, ActionMessage, ParseError};
pub use best_response::{
    bounded_best_response, closed_form_labor, labor_utility, rational_best_response,
    satisfied_at, LABOR_BOUNDS,
};
pub use buffer::{buffer_update, BufferEntry, ReplayBuffer};
pub use election::{
    candidate_platform, cast_vote_llm, cast_vote_scripted, challenger_delta, choose, tally, voter_utility,
    CandidateKind, ElectionContext, Platform, Voter,
};
pub use observation::{
    bracket_histograms, HistoryEntry, HistoryWindow, PlannerObservation, WorkerObservation, DEFAULT_HISTORY_WINDOW,
};
pub use policy::{
    parse_verdict, planner_prompt, planner_propose, satisfaction_flag_llm, satisfaction_flag_scripted,
    scripted_planner_delta, worker_decide_llm, Decision, ParseFailure, PlannerContext, PlannerPromptOptions,
    WorkerContext, DEFAULT_PARSE_ATTEMPTS,
};
pub use prompts::{
    format_rates, format_schedule, normalize, render, worker_phase_hint, Phase, PromptTemplates,
};
