//! Year-end elections between the incumbent planner and one challenger.

use rand::Rng;
use serde::{Deserialize, Serialize};
use taxsim_gateway::{AgentRole, Gateway, MockHint};

use super::action::{parse_action, Action, ActionKind};
use super::best_response::{bounded_best_response, labor_utility, rational_best_response};
use super::policy::{ask, year_rng, Decision, ParseFailure};
use super::prompts::{format_schedule, render, trim_num, PromptTemplates};
use crate::fiscal::{apply_delta, clip_delta, TaxSchedule, UtilityParams, MAX_DELTA_PP};
use crate::population::SatisfactionRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateKind {
    Incumbent,
    Challenger,
}

impl CandidateKind {
    fn label(self) -> &'static str {
        match self {
            CandidateKind::Incumbent => "incumbent",
            CandidateKind::Challenger => "challenger",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub candidate_id: u32,
    pub proposed_schedule: TaxSchedule,
    pub pitch_text: String,
}

/// Inputs shared by both candidates.
pub struct ElectionContext<'a> {
    pub tax_year: u64,
    pub seed: u64,
    pub schedule: &'a TaxSchedule,
    pub income_histogram: &'a [u64],
    pub utility_histogram: &'a [f64],
}

/// Seeded challenger move, uniform in `[-20, 20]` pp per bracket.
pub fn challenger_delta(ctx: &ElectionContext<'_>) -> Vec<f64> {
    let mut rng = year_rng(ctx.seed, 2, ctx.tax_year);
    (0..ctx.schedule.num_brackets())
        .map(|_| rng.gen_range(-MAX_DELTA_PP..=MAX_DELTA_PP))
        .collect()
}

fn templated_pitch(kind: CandidateKind, schedule: &TaxSchedule) -> String {
    match kind {
        CandidateKind::Incumbent => format!("Stay the course: keep the current rates {}.", format_schedule(schedule)),
        CandidateKind::Challenger => format!("Time for a change: I will set the rates to {}.", format_schedule(schedule)),
    }
}

/// Build a candidate's platform. The incumbent runs on the current schedule.
/// The challenger runs on a seeded random move from it, or on the move a live
/// model proposes. Model failures fall back to templated text and the seeded
/// move.
pub fn candidate_platform(
    kind: CandidateKind,
    candidate_id: u32,
    ctx: &ElectionContext<'_>,
    gateway: Option<&Gateway>,
    templates: &PromptTemplates,
    attempts: u32,
) -> (Platform, Vec<ParseFailure>) {
    let seeded = match kind {
        CandidateKind::Incumbent => ctx.schedule.clone(),
        CandidateKind::Challenger => apply_delta(ctx.schedule, &challenger_delta(ctx)).expect("arity matches schedule"),
    };
    let Some(gateway) = gateway else {
        let pitch = templated_pitch(kind, &seeded);
        return (Platform { candidate_id, proposed_schedule: seeded, pitch_text: pitch }, Vec::new());
    };
    let b = ctx.schedule.num_brackets();
    let counts: Vec<String> = ctx.income_histogram.iter().map(|c| c.to_string()).collect();
    let utils: Vec<String> = ctx.utility_histogram.iter().map(|u| trim_num(*u, 2)).collect();
    let user = render(&templates.candidate_user, &[
        ("tax_year", ctx.tax_year.to_string()),
        ("candidate_kind", kind.label().to_string()),
        ("schedule", format_schedule(ctx.schedule)),
        ("income_histogram", format!("[{}]", counts.join(", "))),
        ("utility_histogram", format!("[{}]", utils.join(", "))),
        ("proposed_schedule", format_schedule(&seeded)),
        ("num_brackets", b.to_string()),
    ]);
    let pitch = templated_pitch(kind, &seeded);
    let Decision { value: (schedule, text), failures, .. } = ask(
        gateway,
        &format!("candidate-{candidate_id}"),
        AgentRole::Candidate,
        &format!("platform-c{candidate_id}-y{}", ctx.tax_year),
        &templates.candidate_system,
        &user,
        MockHint::Text(pitch.clone()),
        attempts,
        |reply| {
            if reply.trim().is_empty() {
                return Err("empty pitch".to_string());
            }
            // a live challenger may name its own move
            let schedule = match (kind, parse_action(reply, ActionKind::Delta, b)) {
                (CandidateKind::Challenger, Ok(m)) => match m.action {
                    Action::Delta(d) => apply_delta(ctx.schedule, &clip_delta(&d)).map_err(|e| e.to_string())?,
                    _ => seeded.clone(),
                },
                _ => seeded.clone(),
            };
            Ok((schedule, reply.to_string()))
        },
        || (seeded.clone(), pitch.clone()),
    );
    (Platform { candidate_id, proposed_schedule: schedule, pitch_text: text }, failures)
}

/// A worker as seen by the ballot box.
#[derive(Debug, Clone, Copy)]
pub struct Voter {
    pub skill: f64,
    pub rebate: f64,
    pub params: UtilityParams,
    pub labor_bounds: (f64, f64),
    /// Present when the worker's utility carries a satisfaction penalty.
    pub rule: Option<SatisfactionRule>,
}

/// Utility the voter expects under `schedule` after best-responding to it,
/// with the rebate held at its current value.
pub fn voter_utility(voter: &Voter, schedule: &TaxSchedule) -> f64 {
    match voter.rule {
        None => {
            let l = rational_best_response(voter.skill, schedule, voter.rebate, &voter.params, voter.labor_bounds);
            labor_utility(voter.skill, l, schedule, voter.rebate, &voter.params)
        }
        Some(rule) => {
            let (l, ok) =
                bounded_best_response(voter.skill, schedule, voter.rebate, &voter.params, voter.labor_bounds, &rule);
            labor_utility(voter.skill, l, schedule, voter.rebate, &voter.params) - if ok { 0.0 } else { voter.params.phi }
        }
    }
}

/// Vote for the platform with the highest own utility; ties go to the incumbent.
pub fn cast_vote_scripted(voter: &Voter, platforms: &[Platform], incumbent_id: u32) -> u32 {
    choose(platforms.iter().map(|p| (p.candidate_id, voter_utility(voter, &p.proposed_schedule))), incumbent_id)
}

/// Argmax over `(candidate, score)`, where only a strict improvement over the
/// incumbent's score unseats it.
pub fn choose(scores: impl Iterator<Item = (u32, f64)>, incumbent_id: u32) -> u32 {
    let scores: Vec<(u32, f64)> = scores.collect();
    let incumbent = scores.iter().find(|(id, _)| *id == incumbent_id).copied();
    let mut best = incumbent.unwrap_or(scores[0]);
    for &(id, s) in &scores {
        if s > best.1 {
            best = (id, s);
        }
    }
    best.0
}

/// Model-backed vote, with the scripted choice as the mock hint and fallback.
pub fn cast_vote_llm(
    voter: &Voter,
    worker_id: u32,
    labor: f64,
    tax_year: u64,
    platforms: &[Platform],
    incumbent_id: u32,
    persona_text: &str,
    gateway: &Gateway,
    templates: &PromptTemplates,
    attempts: u32,
) -> Decision<u32> {
    let scripted = cast_vote_scripted(voter, platforms, incumbent_id);
    let listing: Vec<String> = platforms
        .iter()
        .map(|p| {
            let who = if p.candidate_id == incumbent_id { "incumbent" } else { "challenger" };
            format!("- ID {} ({who}): {}\n  Pitch: {}", p.candidate_id, format_schedule(&p.proposed_schedule), p.pitch_text)
        })
        .collect();
    let system = render(&templates.worker_system, &[("persona", persona_text.to_string())]);
    let user = render(&templates.voter_user, &[
        ("tax_year", tax_year.to_string()),
        ("skill", trim_num(voter.skill, 2)),
        ("labor", trim_num(labor, 2)),
        ("platforms", listing.join("\n")),
    ]);
    let ids: Vec<u32> = platforms.iter().map(|p| p.candidate_id).collect();
    ask(
        gateway,
        &format!("worker-{worker_id}"),
        AgentRole::Voter,
        &format!("vote-w{worker_id}-y{tax_year}"),
        &system,
        &user,
        MockHint::Vote(scripted),
        attempts,
        |text| match parse_action(text, ActionKind::Vote, 0) {
            Ok(m) => match m.action {
                Action::Vote(id) if ids.contains(&id) => Ok(id),
                Action::Vote(id) => Err(format!("no candidate with id {id}")),
                _ => unreachable!("parser returns the requested kind"),
            },
            Err(e) => Err(e.to_string()),
        },
        || scripted,
    )
}

/// Majority winner of a two-candidate race; ties keep the incumbent.
pub fn tally(votes: &[u32], platforms: &[Platform], incumbent_id: u32) -> u32 {
    let counts = platforms.iter().map(|p| (p.candidate_id, votes.iter().filter(|&&v| v == p.candidate_id).count() as f64));
    choose(counts, incumbent_id)
}
