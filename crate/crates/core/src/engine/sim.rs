//! The two-level simulation loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use taxsim_gateway::{Gateway, GatewayError, Transcript};

use super::config::{ConfigError, Governance, PlannerKind, PopulationSource, Scenario, SimConfig, WorkerKind};
use super::events::{
    ElectionRecord, Event, EventLog, LogHeader, ParseFailureRecord, PolicyRecord, StepRecord, SCHEMA_VERSION,
};
use super::metrics::{summarize, MetricsSummary};
use crate::agents::{
    bounded_best_response, bracket_histograms, candidate_platform, cast_vote_llm, cast_vote_scripted,
    planner_propose, rational_best_response, satisfaction_flag_llm, satisfaction_flag_scripted,
    scripted_planner_delta, tally, worker_decide_llm, BufferEntry, CandidateKind, ElectionContext, HistoryEntry,
    HistoryWindow, ParseFailure, Phase, PlannerContext, PlannerObservation, PromptTemplates, ReplayBuffer, Voter,
    WorkerContext, WorkerObservation,
};
use crate::fiscal::{apply_delta, apply_taxes, social_welfare, EconomySnapshot, TaxSchedule, UtilityParams, INCOME_FLOOR};
use crate::population::{
    assign_personas, builtin_personas, fit_gb2, gb2_sample, load_income_csv, skills_from_incomes, Persona,
    PopulationError,
};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid config: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigError>),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("prompt templates: {0}")]
    Prompts(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub skill: f64,
    pub labor: f64,
    pub pre_tax: f64,
    pub post_tax: f64,
    pub utility: f64,
    pub satisfied: Option<bool>,
    /// Dissatisfaction penalty for the current tax year.
    pub penalty: f64,
    pub persona: Persona,
    pub history: HistoryWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerState {
    pub id: u32,
    pub buffer: ReplayBuffer,
    pub last_delta: Vec<f64>,
    /// Mean welfare credited at each update, oldest first.
    pub credits: Vec<f64>,
    pub swf_since_update: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub step: u64,
    pub tax_year: u64,
    pub schedule: TaxSchedule,
    pub workers: Vec<WorkerState>,
    pub planner: PlannerState,
    pub rebate: f64,
    pub next_candidate_id: u32,
    pub last_snapshot: Option<EconomySnapshot>,
    /// Welfare of the last `steps_per_year` steps, oldest first.
    pub recent_step_swf: Vec<f64>,
}

/// Work counters. Reported, never part of the summary.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Throughput {
    pub actions: u64,
    pub frames: u64,
    pub wall_secs: f64,
}

impl Throughput {
    pub fn actions_per_sec(&self) -> f64 {
        self.actions as f64 / self.wall_secs.max(1e-9)
    }

    pub fn frames_per_sec(&self) -> f64 {
        self.frames as f64 / self.wall_secs.max(1e-9)
    }
}

pub struct SimOutput {
    pub log: EventLog,
    pub summary: MetricsSummary,
    pub throughput: Throughput,
    pub transcript: Option<Transcript>,
    pub final_state: SimState,
}

/// Worker skills for a config, drawn deterministically from its seed.
pub fn population_skills(cfg: &SimConfig) -> Result<Vec<f64>, EngineError> {
    let incomes = match &cfg.population {
        PopulationSource::Skills { values } => return Ok(values.clone()),
        PopulationSource::Gb2 { params } => gb2_sample(cfg.n_workers, params, sub_seed(cfg.seed, 1))?,
        PopulationSource::IncomeCsv { path } => {
            let data = load_income_csv(path)?;
            let fit = fit_gb2(&data)?;
            gb2_sample(cfg.n_workers, &fit.params, sub_seed(cfg.seed, 1))?
        }
    };
    Ok(skills_from_incomes(&incomes, cfg.reference_hours)?.into_iter().map(|p| p.skill).collect())
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Map over indices, splitting across threads for large populations. Output
/// order matches input order.
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism().map_or(1, |t| t.get());
    if n < 64 || threads < 2 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|lo| scope.spawn(move || (lo..(lo + chunk).min(n)).map(f).collect::<Vec<T>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

pub struct Simulation {
    cfg: SimConfig,
    state: SimState,
    gateway: Option<Gateway>,
    templates: PromptTemplates,
    log: EventLog,
    throughput: Throughput,
    started: Instant,
}

impl Simulation {
    pub fn new(cfg: SimConfig) -> Result<Self, EngineError> {
        cfg.validate().map_err(EngineError::Config)?;
        let schedule = cfg.initial_schedule().map_err(|e| EngineError::Config(vec![e]))?;
        let skills = population_skills(&cfg)?;
        let personas = assign_personas(cfg.n_workers, &builtin_personas(), sub_seed(cfg.seed, 2))?;
        let templates = match &cfg.prompts_dir {
            Some(dir) => PromptTemplates::load_dir(dir)?,
            None => PromptTemplates::default(),
        };
        let needs_gateway = cfg.worker_kind == WorkerKind::Llm || cfg.planner_kind == PlannerKind::Llm;
        let gateway = if needs_gateway { Some(Gateway::new(cfg.gateway.clone())?) } else { None };

        let (lo, hi) = cfg.labor_bounds;
        let start_labor = cfg.reference_hours.clamp(lo, hi);
        let incomes: Vec<f64> = skills.iter().map(|s| s * start_labor).collect();
        let taxed = apply_taxes(&schedule, &incomes).expect("incomes are nonnegative");
        let workers = skills
            .iter()
            .zip(personas)
            .enumerate()
            .map(|(i, (&skill, persona))| {
                let (z, c) = (incomes[i], taxed.post_tax[i]);
                let satisfied = (cfg.scenario == Scenario::Bounded).then(|| {
                    let obs = observation(&schedule, z, c, taxed.rebate, Vec::new());
                    satisfaction_flag_scripted(&obs, &persona)
                });
                WorkerState {
                    skill,
                    labor: start_labor,
                    pre_tax: z,
                    post_tax: c,
                    utility: cfg.utility.isoelastic(c, start_labor),
                    satisfied,
                    penalty: 0.0,
                    persona,
                    history: HistoryWindow::new(cfg.history_window),
                }
            })
            .collect();
        let state = SimState {
            step: 0,
            tax_year: 0,
            schedule: schedule.clone(),
            workers,
            planner: PlannerState {
                id: 0,
                buffer: ReplayBuffer::new(cfg.buffer_capacity),
                last_delta: vec![0.0; schedule.num_brackets()],
                credits: Vec::new(),
                swf_since_update: Vec::new(),
            },
            rebate: taxed.rebate,
            next_candidate_id: 1,
            last_snapshot: None,
            recent_step_swf: Vec::new(),
        };
        let log = EventLog::new(LogHeader {
            schema_version: SCHEMA_VERSION,
            n_workers: cfg.n_workers,
            total_steps: cfg.total_steps,
            steps_per_year: cfg.steps_per_year,
            thresholds: cfg.thresholds.clone(),
            seed: cfg.seed,
            scenario: cfg.scenario,
            governance: cfg.governance,
            convergence_tolerance: cfg.convergence_tolerance,
        });
        Ok(Self { cfg, state, gateway, templates, log, throughput: Throughput::default(), started: Instant::now() })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.cfg.total_steps
    }

    fn phase(&self, tax_year: u64) -> Phase {
        if (tax_year as f64) < self.cfg.phase_switch * self.cfg.num_years() as f64 {
            Phase::Explore
        } else {
            Phase::Exploit
        }
    }

    fn worker_params(&self, w: &WorkerState) -> UtilityParams {
        UtilityParams { phi: w.penalty, ..self.cfg.utility }
    }

    /// Advance one step. Does nothing once the run is complete.
    pub fn step(&mut self) {
        if self.is_done() {
            return;
        }
        let t = self.state.step;
        let k_len = self.cfg.steps_per_year;
        let year = t / k_len;
        self.state.tax_year = year;
        let mut failures = Vec::new();

        if t.is_multiple_of(k_len) && self.cfg.scenario == Scenario::Bounded {
            // half the magnitude of the utility the worker currently enjoys
            let params = self.cfg.utility;
            for w in &mut self.state.workers {
                w.penalty = 0.5 * params.isoelastic(w.post_tax, w.labor).abs();
            }
        }
        let outgoing = self.state.schedule.clone();
        if t > 0 && t.is_multiple_of(k_len) && self.cfg.governance == Governance::Democratic {
            self.run_election(t, year, &mut failures);
        }
        if t > 0 && t.is_multiple_of(self.cfg.planner_update_period) && self.cfg.planner_kind != PlannerKind::Static {
            self.update_planner(t, year, outgoing, &mut failures);
        }
        let record = self.advance_workers(t, year, &mut failures);

        for failure in failures {
            self.log.push(Event::ParseFailure(ParseFailureRecord { step: t, failure }));
        }
        self.state.planner.swf_since_update.push(record.swf);
        self.state.recent_step_swf.push(record.swf);
        if self.state.recent_step_swf.len() > k_len as usize {
            self.state.recent_step_swf.remove(0);
        }
        self.state.last_snapshot = Some(EconomySnapshot {
            step: t,
            tax_year: year,
            pre_tax_incomes: record.pre_tax.clone(),
            post_tax_incomes: record.post_tax.clone(),
            total_tax: record.total_tax,
            rebate: record.rebate,
            swf: record.swf,
        });
        self.log.push(Event::Step(record));
        self.throughput.frames += 1;
        self.state.step = t + 1;
    }

    fn voters(&self) -> Vec<Voter> {
        let bounded = self.cfg.scenario == Scenario::Bounded;
        self.state
            .workers
            .iter()
            .map(|w| Voter {
                skill: w.skill,
                rebate: self.state.rebate,
                params: self.worker_params(w),
                labor_bounds: self.cfg.labor_bounds,
                rule: bounded.then_some(w.persona.satisfaction_rule),
            })
            .collect()
    }

    fn run_election(&mut self, t: u64, year: u64, failures: &mut Vec<ParseFailure>) {
        let schedule = self.state.schedule.clone();
        let incomes: Vec<f64> = self.state.workers.iter().map(|w| w.pre_tax).collect();
        let utilities: Vec<f64> = self.state.workers.iter().map(|w| w.utility).collect();
        let (counts, means) = bracket_histograms(&schedule, &incomes, &utilities);
        let ctx = ElectionContext {
            tax_year: year,
            seed: self.cfg.seed,
            schedule: &schedule,
            income_histogram: &counts,
            utility_histogram: &means,
        };
        let live = if self.cfg.planner_kind == PlannerKind::Llm { self.gateway.as_ref() } else { None };
        let incumbent_id = self.state.planner.id;
        let challenger_id = self.state.next_candidate_id;
        self.state.next_candidate_id += 1;
        let attempts = self.cfg.parse_attempts;
        let (inc, f1) =
            candidate_platform(CandidateKind::Incumbent, incumbent_id, &ctx, live, &self.templates, attempts);
        let (chal, f2) =
            candidate_platform(CandidateKind::Challenger, challenger_id, &ctx, live, &self.templates, attempts);
        failures.extend(f1);
        failures.extend(f2);
        let platforms = vec![inc, chal];

        let voters = self.voters();
        let votes: Vec<u32> = match (self.cfg.worker_kind, self.gateway.as_ref()) {
            (WorkerKind::Llm, Some(gw)) => voters
                .iter()
                .zip(&self.state.workers)
                .enumerate()
                .map(|(i, (v, w))| {
                    let d = cast_vote_llm(
                        v,
                        i as u32,
                        w.labor,
                        year,
                        &platforms,
                        incumbent_id,
                        &w.persona.text,
                        gw,
                        &self.templates,
                        attempts,
                    );
                    failures.extend(d.failures);
                    d.value
                })
                .collect(),
            _ => par_map(voters.len(), |i| cast_vote_scripted(&voters[i], &platforms, incumbent_id)),
        };
        self.throughput.actions += votes.len() as u64;
        let winner_id = tally(&votes, &platforms, incumbent_id);
        if winner_id != incumbent_id {
            let won = platforms.iter().find(|p| p.candidate_id == winner_id).expect("winner is a candidate");
            self.state.schedule = won.proposed_schedule.clone();
            // the buffer and prompt history carry over to the new planner
            self.state.planner.id = winner_id;
        }
        self.log.push(Event::Election(ElectionRecord { step: t, tax_year: year, incumbent_id, platforms, votes, winner_id }));
    }

    fn update_planner(&mut self, t: u64, year: u64, outgoing: TaxSchedule, failures: &mut Vec<ParseFailure>) {
        let planner = &mut self.state.planner;
        let credit = planner.swf_since_update.iter().sum::<f64>() / planner.swf_since_update.len().max(1) as f64;
        planner.swf_since_update.clear();
        planner.credits.push(credit);
        let credited_year = (t - 1) / self.cfg.steps_per_year;
        planner.buffer.insert(BufferEntry {
            tax_year: credited_year,
            schedule: outgoing,
            delta: planner.last_delta.clone(),
            swf: credit,
        });

        let phase = self.phase(year);
        let update_index = t / self.cfg.planner_update_period;
        let current = self.state.schedule.clone();
        let scripted = scripted_planner_delta(&current, &self.state.planner.buffer, phase, self.cfg.seed, update_index);
        let (delta, fell_back) = match (self.cfg.planner_kind, self.gateway.as_ref()) {
            (PlannerKind::Llm, Some(gw)) => {
                let incomes: Vec<f64> = self.state.workers.iter().map(|w| w.pre_tax).collect();
                let utilities: Vec<f64> = self.state.workers.iter().map(|w| w.utility).collect();
                let recent_step = &self.state.recent_step_swf;
                let ma = recent_step.iter().sum::<f64>() / recent_step.len().max(1) as f64;
                let credits = &self.state.planner.credits;
                let recent: Vec<f64> = credits[credits.len().saturating_sub(5)..].to_vec();
                let obs = PlannerObservation::build(&current, &incomes, &utilities, ma, recent, &self.state.planner.buffer);
                let lo = credits.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = credits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let ctx = PlannerContext {
                    tax_year: year,
                    obs: &obs,
                    phase,
                    swf_range: (lo, hi),
                    options: self.cfg.prompt_options,
                    scripted_delta: scripted,
                };
                let d = planner_propose(&ctx, gw, &self.templates, self.cfg.parse_attempts);
                failures.extend(d.failures);
                (d.value, d.fell_back)
            }
            _ => (scripted, false),
        };
        self.throughput.actions += 1;
        let new_schedule = apply_delta(&current, &delta).expect("delta arity matches schedule");
        self.state.planner.last_delta = delta.clone();
        self.state.schedule = new_schedule.clone();
        self.log.push(Event::Policy(PolicyRecord {
            step: t,
            tax_year: year,
            phase,
            old_schedule: current,
            new_schedule,
            delta,
            credited_swf: credit,
            fell_back,
        }));
    }

    fn advance_workers(&mut self, t: u64, year: u64, failures: &mut Vec<ParseFailure>) -> StepRecord {
        let schedule = self.state.schedule.clone();
        let rebate = self.state.rebate;
        let bounds = self.cfg.labor_bounds;
        let bounded = self.cfg.scenario == Scenario::Bounded;
        let workers = &self.state.workers;
        let scripted: Vec<f64> = par_map(workers.len(), |i| {
            let w = &workers[i];
            let params = UtilityParams { phi: w.penalty, ..self.cfg.utility };
            if bounded {
                bounded_best_response(w.skill, &schedule, rebate, &params, bounds, &w.persona.satisfaction_rule).0
            } else {
                rational_best_response(w.skill, &schedule, rebate, &params, bounds)
            }
        });
        let phase = self.phase(year);
        let labor: Vec<f64> = match (self.cfg.worker_kind, self.gateway.as_ref()) {
            (WorkerKind::Llm, Some(gw)) => workers
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let obs = observation(&schedule, w.pre_tax, w.post_tax, rebate, w.history.to_vec());
                    let ctx = WorkerContext {
                        worker_id: i as u32,
                        step: t,
                        tax_year: year,
                        persona: &w.persona,
                        obs: &obs,
                        schedule: &schedule,
                        phase,
                        previous_labor: w.labor,
                        scripted_labor: scripted[i],
                    };
                    let d = worker_decide_llm(&ctx, gw, &self.templates, self.cfg.parse_attempts);
                    failures.extend(d.failures);
                    d.value.clamp(bounds.0, bounds.1)
                })
                .collect(),
            _ => scripted,
        };
        self.throughput.actions += labor.len() as u64;

        let incomes: Vec<f64> = workers.iter().zip(&labor).map(|(w, l)| w.skill * l).collect();
        let taxed = apply_taxes(&schedule, &incomes).expect("incomes are nonnegative");
        let satisfied: Option<Vec<bool>> = bounded.then(|| {
            workers
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let obs = observation(&schedule, incomes[i], taxed.post_tax[i], taxed.rebate, w.history.to_vec());
                    match (self.cfg.worker_kind, self.gateway.as_ref()) {
                        (WorkerKind::Llm, Some(gw)) => {
                            let ctx = WorkerContext {
                                worker_id: i as u32,
                                step: t,
                                tax_year: year,
                                persona: &w.persona,
                                obs: &obs,
                                schedule: &schedule,
                                phase,
                                previous_labor: w.labor,
                                scripted_labor: labor[i],
                            };
                            let d = satisfaction_flag_llm(&ctx, gw, &self.templates, self.cfg.parse_attempts);
                            failures.extend(d.failures);
                            d.value
                        }
                        _ => satisfaction_flag_scripted(&obs, &w.persona),
                    }
                })
                .collect()
        });
        let utilities: Vec<f64> = workers
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let params = UtilityParams { phi: w.penalty, ..self.cfg.utility };
                match &satisfied {
                    Some(flags) => params.bounded(taxed.post_tax[i], labor[i], flags[i]),
                    None => params.isoelastic(taxed.post_tax[i], labor[i]),
                }
            })
            .collect();
        let swf = social_welfare(&incomes, &utilities, INCOME_FLOOR).expect("lengths match");

        for (i, w) in self.state.workers.iter_mut().enumerate() {
            w.labor = labor[i];
            w.pre_tax = incomes[i];
            w.post_tax = taxed.post_tax[i];
            w.utility = utilities[i];
            w.satisfied = satisfied.as_ref().map(|f| f[i]);
            w.history.push(HistoryEntry { labor: labor[i], utility: utilities[i], satisfied: w.satisfied });
        }
        self.state.rebate = taxed.rebate;
        StepRecord {
            step: t,
            tax_year: year,
            rates: schedule.rates().to_vec(),
            labor,
            pre_tax: incomes,
            post_tax: taxed.post_tax,
            utilities,
            satisfied,
            total_tax: taxed.total_tax,
            rebate: taxed.rebate,
            swf,
        }
    }

    pub fn run(mut self) -> SimOutput {
        while !self.is_done() {
            self.step();
        }
        self.finish()
    }

    pub fn finish(mut self) -> SimOutput {
        self.throughput.wall_secs = self.started.elapsed().as_secs_f64();
        let summary = summarize(&self.log).expect("live log has a header");
        SimOutput {
            summary,
            throughput: self.throughput,
            transcript: self.gateway.as_ref().map(|g| g.transcript()),
            final_state: self.state,
            log: self.log,
        }
    }
}

fn observation(schedule: &TaxSchedule, z: f64, c: f64, rebate: f64, history: Vec<HistoryEntry>) -> WorkerObservation {
    WorkerObservation {
        pre_tax: z,
        post_tax: c,
        marginal_rate_at_income: schedule.rates()[schedule.bracket_of(z.max(0.0))],
        rebate,
        history,
    }
}

pub fn run_simulation(cfg: SimConfig) -> Result<SimOutput, EngineError> {
    Ok(Simulation::new(cfg)?.run())
}

/// Welfare of one tax year under a fixed schedule with no planner moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schedule: TaxSchedule,
    pub final_swf: f64,
    pub year_mean_swf: f64,
    pub convergence_step: Option<u64>,
    pub mean_labor: f64,
}

pub fn evaluate_schedule(cfg: &SimConfig, schedule: &TaxSchedule) -> Result<EvaluationReport, EngineError> {
    let cfg = SimConfig {
        total_steps: cfg.steps_per_year,
        planner_kind: PlannerKind::Static,
        governance: Governance::Fixed,
        thresholds: schedule.thresholds().to_vec(),
        initial_rates: schedule.rates().to_vec(),
        ..cfg.clone()
    };
    let out = run_simulation(cfg)?;
    let year = out.summary.years.first().expect("one year was simulated");
    Ok(EvaluationReport {
        schedule: schedule.clone(),
        final_swf: year.final_swf,
        year_mean_swf: year.mean_swf,
        convergence_step: year.convergence_step,
        mean_labor: year.mean_labor,
    })
}
