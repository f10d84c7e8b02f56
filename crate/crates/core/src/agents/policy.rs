//! Worker and planner decisions, scripted and language-model backed.
//!
//! Model-backed decisions always carry the scripted answer as a mock hint, so
//! a mock gateway in echo mode reproduces scripted behavior exactly while
//! still exercising prompts, parsing and fallbacks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use taxsim_gateway::{AgentRole, ChatRequest, Gateway, MockHint};

use super::action::{parse_action, Action, ActionKind};
use super::best_response::LABOR_BOUNDS;
use super::buffer::ReplayBuffer;
use super::observation::{PlannerObservation, WorkerObservation};
use super::prompts::{
    format_history, format_rates, format_schedule, format_trajectories, normalize, render, trim_num,
    worker_phase_hint, Phase, PromptTemplates,
};
use crate::fiscal::{clip_delta, TaxSchedule, MAX_DELTA_PP};
use crate::population::Persona;

pub const DEFAULT_PARSE_ATTEMPTS: u32 = 3;

/// An agent reply that could not be turned into an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub agent: String,
    pub role: AgentRole,
    pub attempt: u32,
    pub reason: String,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision<T> {
    pub value: T,
    pub failures: Vec<ParseFailure>,
    /// True when every attempt failed and the fallback was used.
    pub fell_back: bool,
    pub requests: u32,
}

/// Ask the gateway up to `attempts` times and parse each reply with `parse`.
pub(crate) fn ask<T>(
    gateway: &Gateway,
    agent: &str,
    role: AgentRole,
    request_id: &str,
    system: &str,
    user: &str,
    hint: MockHint,
    attempts: u32,
    parse: impl Fn(&str) -> Result<T, String>,
    fallback: impl FnOnce() -> T,
) -> Decision<T> {
    let mut failures = Vec::new();
    let mut requests = 0;
    for attempt in 1..=attempts.max(1) {
        let req = ChatRequest::new(role, format!("{request_id}-a{attempt}"), system, user).with_hint(hint.clone());
        requests += 1;
        match gateway.chat(req) {
            Ok(reply) => match parse(&reply.content) {
                Ok(v) => return Decision { value: v, failures, fell_back: false, requests },
                Err(reason) => failures.push(ParseFailure {
                    agent: agent.to_string(),
                    role,
                    attempt,
                    reason,
                    raw_text: reply.content,
                }),
            },
            Err(e) => {
                // the gateway already retried transport errors
                failures.push(ParseFailure {
                    agent: agent.to_string(),
                    role,
                    attempt,
                    reason: format!("gateway: {e}"),
                    raw_text: String::new(),
                });
                break;
            }
        }
    }
    Decision { value: fallback(), failures, fell_back: true, requests }
}

/// Scripted verdict: enough of the next dollar is kept and the average rate
/// is under the persona's cap.
pub fn satisfaction_flag_scripted(obs: &WorkerObservation, persona: &Persona) -> bool {
    let rule = &persona.satisfaction_rule;
    1.0 - obs.marginal_rate_at_income >= rule.min_marginal_retention && obs.effective_rate() <= rule.max_effective_rate
}

/// Read the last `Verdict: SATISFIED|UNSATISFIED` line of a reply.
pub fn parse_verdict(text: &str) -> Result<bool, String> {
    let upper = text.to_ascii_uppercase();
    let pos = upper.rfind("VERDICT:").ok_or_else(|| "no verdict line".to_string())?;
    let rest = upper[pos + "VERDICT:".len()..].trim_start();
    let rest = rest.trim_start_matches(['*', '"', '\'']);
    if rest.starts_with("UNSATISFIED") {
        Ok(false)
    } else if rest.starts_with("SATISFIED") {
        Ok(true)
    } else {
        Err("verdict is neither SATISFIED nor UNSATISFIED".into())
    }
}

pub struct WorkerContext<'a> {
    pub worker_id: u32,
    pub step: u64,
    pub tax_year: u64,
    pub persona: &'a Persona,
    pub obs: &'a WorkerObservation,
    pub schedule: &'a TaxSchedule,
    pub phase: Phase,
    pub previous_labor: f64,
    /// What a scripted worker would do here; the mock backend echoes it.
    pub scripted_labor: f64,
}

pub fn satisfaction_flag_llm(
    ctx: &WorkerContext<'_>,
    gateway: &Gateway,
    templates: &PromptTemplates,
    attempts: u32,
) -> Decision<bool> {
    let scripted = satisfaction_flag_scripted(ctx.obs, ctx.persona);
    let rule = &ctx.persona.satisfaction_rule;
    let pct = |x: f64| format!("{}%", trim_num(100.0 * x, 1));
    let system = render(&templates.judge_system, &[("persona", ctx.persona.text.clone())]);
    let user = render(&templates.judge_user, &[
        ("pre_tax", trim_num(ctx.obs.pre_tax, 2)),
        ("retention", pct(1.0 - ctx.obs.marginal_rate_at_income)),
        ("effective_rate", pct(ctx.obs.effective_rate())),
        ("retention_target", pct(rule.min_marginal_retention)),
        ("effective_target", pct(rule.max_effective_rate)),
    ]);
    ask(
        gateway,
        &format!("worker-{}", ctx.worker_id),
        AgentRole::Judge,
        &format!("judge-w{}-t{}", ctx.worker_id, ctx.step),
        &system,
        &user,
        MockHint::Verdict(scripted),
        attempts,
        parse_verdict,
        || scripted,
    )
}

pub fn worker_decide_llm(
    ctx: &WorkerContext<'_>,
    gateway: &Gateway,
    templates: &PromptTemplates,
    attempts: u32,
) -> Decision<f64> {
    let system = render(&templates.worker_system, &[("persona", ctx.persona.text.clone())]);
    let user = render(&templates.worker_user, &[
        ("tax_year", ctx.tax_year.to_string()),
        ("step", ctx.step.to_string()),
        ("schedule", format_schedule(ctx.schedule)),
        ("pre_tax", trim_num(ctx.obs.pre_tax, 2)),
        ("post_tax", trim_num(ctx.obs.post_tax, 2)),
        ("marginal_rate", format!("{}%", trim_num(100.0 * ctx.obs.marginal_rate_at_income, 1))),
        ("rebate", trim_num(ctx.obs.rebate, 2)),
        ("history", format_history(&ctx.obs.history)),
        ("phase_hint", worker_phase_hint(ctx.phase, &ctx.obs.history)),
    ]);
    let (lo, hi) = LABOR_BOUNDS;
    ask(
        gateway,
        &format!("worker-{}", ctx.worker_id),
        AgentRole::Worker,
        &format!("labor-w{}-t{}", ctx.worker_id, ctx.step),
        &system,
        &user,
        MockHint::Labor(ctx.scripted_labor),
        attempts,
        |text| match parse_action(text, ActionKind::Labor, 1) {
            Ok(m) => match m.action {
                Action::Labor(l) => Ok(l.clamp(lo, hi)),
                _ => unreachable!("parser returns the requested kind"),
            },
            Err(e) => Err(e.to_string()),
        },
        || ctx.previous_labor,
    )
}

/// Which of the two steering sentences the planner prompt includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerPromptOptions {
    pub explore_sentence: bool,
    pub exploit_sentence: bool,
}

impl Default for PlannerPromptOptions {
    fn default() -> Self {
        Self { explore_sentence: true, exploit_sentence: true }
    }
}

pub struct PlannerContext<'a> {
    pub tax_year: u64,
    pub obs: &'a PlannerObservation,
    pub phase: Phase,
    /// Lowest and highest year welfare seen so far, for prompt normalization.
    pub swf_range: (f64, f64),
    pub options: PlannerPromptOptions,
    pub scripted_delta: Vec<f64>,
}

pub fn planner_prompt(ctx: &PlannerContext<'_>, templates: &PromptTemplates) -> (String, String) {
    let obs = ctx.obs;
    let b = obs.schedule.num_brackets();
    let (best_tax, best_swf) = match obs.best_trajectories.first() {
        Some(e) => (format_rates(e.schedule.rates()), trim_num(normalize(e.swf, ctx.swf_range), 3)),
        None => (format_rates(obs.schedule.rates()), "unknown".into()),
    };
    let mut hints = Vec::new();
    let explore = render(&templates.explore_hint, &[]);
    let exploit = render(&templates.exploit_hint, &[("best_tax", best_tax.clone()), ("best_swf", best_swf.clone())]);
    match ctx.phase {
        Phase::Explore if ctx.options.explore_sentence => hints.push(explore),
        Phase::Exploit if ctx.options.exploit_sentence => hints.push(exploit),
        _ => {}
    }
    let recent: Vec<String> = obs.recent_swf.iter().map(|s| trim_num(normalize(*s, ctx.swf_range), 3)).collect();
    let counts: Vec<String> = obs.income_histogram.iter().map(|c| c.to_string()).collect();
    let utils: Vec<String> = obs.utility_histogram.iter().map(|u| trim_num(*u, 2)).collect();
    let system = render(&templates.planner_system, &[("num_brackets", b.to_string())]);
    let user = render(&templates.planner_user, &[
        ("tax_year", ctx.tax_year.to_string()),
        ("schedule", format_schedule(&obs.schedule)),
        ("income_histogram", format!("[{}]", counts.join(", "))),
        ("utility_histogram", format!("[{}]", utils.join(", "))),
        ("swf_avg", trim_num(normalize(obs.swf_moving_average, ctx.swf_range), 3)),
        ("recent_swf", format!("[{}]", recent.join(", "))),
        ("best_trajectories", format_trajectories(&obs.best_trajectories, ctx.swf_range)),
        ("best_tax", best_tax),
        ("best_swf", best_swf),
        ("phase_hint", hints.join(" ")),
        ("num_brackets", b.to_string()),
    ]);
    (system, user)
}

/// Parse a DELTA reply, clipped to ±20 pp. Falls back to holding policy.
pub fn planner_propose(
    ctx: &PlannerContext<'_>,
    gateway: &Gateway,
    templates: &PromptTemplates,
    attempts: u32,
) -> Decision<Vec<f64>> {
    let b = ctx.obs.schedule.num_brackets();
    let (system, user) = planner_prompt(ctx, templates);
    ask(
        gateway,
        "planner",
        AgentRole::Planner,
        &format!("delta-y{}", ctx.tax_year),
        &system,
        &user,
        MockHint::Delta(ctx.scripted_delta.clone()),
        attempts,
        |text| match parse_action(text, ActionKind::Delta, b) {
            Ok(m) => match m.action {
                Action::Delta(d) => Ok(clip_delta(&d)),
                _ => unreachable!("parser returns the requested kind"),
            },
            Err(e) => Err(e.to_string()),
        },
        || vec![0.0; b],
    )
}

/// Stream of planner randomness for one tax year.
pub(crate) fn year_rng(seed: u64, stream: u64, tax_year: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_mul(1 << 32) ^ tax_year);
    rng
}

/// Scripted planner: step toward the best schedule seen so far plus seeded
/// noise, broad while exploring and narrow while exploiting.
pub fn scripted_planner_delta(
    current: &TaxSchedule,
    buffer: &ReplayBuffer,
    phase: Phase,
    seed: u64,
    tax_year: u64,
) -> Vec<f64> {
    let mut rng = year_rng(seed, 1, tax_year);
    let spread = match phase {
        Phase::Explore => 5.0,
        Phase::Exploit => 1.0,
    };
    let target = buffer.best().map_or(current.rates(), |e| e.schedule.rates());
    current
        .rates()
        .iter()
        .zip(target)
        .map(|(r, t)| {
            let toward = 100.0 * (t - r);
            let noise: f64 = rng.gen_range(-spread..=spread);
            (toward + noise).clamp(-MAX_DELTA_PP, MAX_DELTA_PP)
        })
        .collect()
}
