//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any required criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxsim_core::agents::{closed_form_labor, labor_utility, rational_best_response, LABOR_BOUNDS};
use taxsim_core::engine::{
    replay, run_simulation, Event, EventLog, Governance, PlannerKind, PopulationSource, SimConfig, StepRecord,
    WorkerKind,
};
use taxsim_core::fiscal::{apply_taxes, TaxSchedule, UtilityParams};
use taxsim_core::population::{
    default_income_prior, fit_gb2, gb2_sample, qq_correlation, qq_points, skills_from_incomes,
};
use taxsim_core::saez::{
    bracket_statistics, brute_force_flat_tax, estimate_elasticity, grid_perturb_converge, solve_piecewise_saez,
    Economy, PerturbationRun, RebateResponse, SaezOptions,
};
use taxsim_gateway::{Backend, MockMode, MockPolicy};

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Verdict {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Verdict {
    Verdict { status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn default_params() -> UtilityParams {
    UtilityParams { eta: 0.5, psi: 0.07, delta: 2.0, phi: 0.0 }
}

fn gb2_skills(n: usize, seed: u64) -> Vec<f64> {
    let incomes = gb2_sample(n, &default_income_prior(), seed).unwrap();
    skills_from_incomes(&incomes, 40.0).unwrap().into_iter().map(|p| p.skill).collect()
}

fn random_schedule(rng: &mut ChaCha8Rng) -> TaxSchedule {
    let b = rng.gen_range(1..=8);
    let mut thresholds = vec![0.0];
    for _ in 1..b {
        let last = *thresholds.last().unwrap();
        thresholds.push(last + rng.gen_range(1_000.0..120_000.0));
    }
    let rates = (0..b).map(|_| rng.gen_range(0.0..0.99)).collect();
    TaxSchedule::new(thresholds, rates).unwrap()
}

// ---------------------------------------------------------------------------
// Independent oracles

/// Golden-section argmax of one smooth piece.
fn golden(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-9 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Hours maximizing utility, by golden section between consecutive kinks.
fn oracle_labor(skill: f64, sched: &TaxSchedule, rebate: f64, p: &UtilityParams) -> f64 {
    let f = |l: f64| {
        let z = skill * l;
        let tax = taxsim_core::fiscal::tax_due(sched, z).unwrap();
        p.isoelastic(z - tax + rebate, l)
    };
    let mut edges = vec![0.0];
    if skill > 0.0 {
        edges.extend(sched.thresholds()[1..].iter().map(|t| t / skill).filter(|&l| l > 0.0 && l < 100.0));
    }
    edges.push(100.0);
    let mut best = (0.0, f(0.0));
    for w in edges.windows(2) {
        for x in [golden(&f, w[0], w[1]), w[1]] {
            let v = f(x);
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    best.0
}

/// Welfare with frozen inverse zero-tax incomes as weights, at the rebate
/// that workers' choices generate.
struct OracleEconomy {
    skills: Vec<f64>,
    params: UtilityParams,
    weights: Vec<f64>,
}

impl OracleEconomy {
    fn new(skills: Vec<f64>, params: UtilityParams) -> Self {
        let zero = TaxSchedule::flat(0.0).unwrap();
        let weights = skills.iter().map(|&s| 1.0 / (s * oracle_labor(s, &zero, 0.0, &params)).max(1e-6)).collect();
        Self { skills, params, weights }
    }

    fn swf(&self, sched: &TaxSchedule) -> f64 {
        let mut rebate = 0.0;
        let mut labor = vec![0.0; self.skills.len()];
        for _ in 0..200 {
            for (l, &s) in labor.iter_mut().zip(&self.skills) {
                *l = oracle_labor(s, sched, rebate, &self.params);
            }
            let z: Vec<f64> = self.skills.iter().zip(&labor).map(|(s, l)| s * l).collect();
            let next = apply_taxes(sched, &z).unwrap().rebate;
            let done = (next - rebate).abs() < 1e-9 * next.abs().max(1.0);
            rebate = next;
            if done {
                break;
            }
        }
        self.skills
            .iter()
            .zip(&labor)
            .zip(&self.weights)
            .map(|((&s, &l), w)| w * labor_utility(s, l, sched, rebate, &self.params))
            .sum()
    }

    fn swf_many(&self, scheds: &[TaxSchedule]) -> Vec<f64> {
        std::thread::scope(|scope| {
            let handles: Vec<_> = scheds.iter().map(|s| scope.spawn(move || self.swf(s))).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        })
    }

    /// Coordinate ascent over the absolute 1 pp grid until a sweep changes nothing.
    fn coordinate_optimum(&self, start: &TaxSchedule) -> (TaxSchedule, f64) {
        let grid: Vec<f64> = (0..=99).map(|k| k as f64 / 100.0).collect();
        let mut cur = start.clone();
        let mut cur_swf = self.swf(&cur);
        for _ in 0..20 {
            let mut moved = false;
            for j in 0..cur.num_brackets() {
                let cands: Vec<TaxSchedule> = grid.iter().map(|&r| cur.with_rate(j, r)).collect();
                let scores = self.swf_many(&cands);
                for (c, w) in cands.into_iter().zip(scores) {
                    if w > cur_swf {
                        cur_swf = w;
                        cur = c;
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
        (cur, cur_swf)
    }
}

// ---------------------------------------------------------------------------
// Criteria

fn budget_balance() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let sched = random_schedule(&mut rng);
        let n = rng.gen_range(1..200);
        let incomes: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.0..14.0f64)).exp()).collect();
        let out = apply_taxes(&sched, &incomes).unwrap();
        let pre: f64 = incomes.iter().sum();
        let post: f64 = out.post_tax.iter().sum();
        worst = worst.max((post - pre).abs() / pre);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst < 1e-9 && secs < 1.0, format!("max relative imbalance {worst:.2e} over 1000 instances"))
}

fn best_response() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..100 {
        let p = UtilityParams {
            eta: rng.gen_range(0.0..0.95),
            psi: rng.gen_range(0.005..0.2),
            delta: rng.gen_range(1.5..3.0),
            phi: 0.0,
        };
        let skill = rng.gen_range(5.0..3000.0);
        let tau = rng.gen_range(0.0..0.9);
        let want = closed_form_labor(skill, tau, &p).min(100.0);
        let got = rational_best_response(skill, &TaxSchedule::flat(tau).unwrap(), 0.0, &p, LABOR_BOUNDS);
        worst_rel = worst_rel.max((got / want - 1.0).abs());
    }
    let mut worst_hours: f64 = 0.0;
    for _ in 0..100 {
        let sched = random_schedule(&mut rng);
        let p = UtilityParams { eta: rng.gen_range(0.1..0.9), psi: rng.gen_range(0.01..0.1), delta: 2.0, phi: 0.0 };
        let skill = rng.gen_range(100.0..4000.0);
        let rebate = rng.gen_range(0.0..20_000.0);
        let f = |l: f64| labor_utility(skill, l, &sched, rebate, &p);
        // dense grid at 1e-3 hours, refined around the winner
        let mut g = (0.0, f(0.0));
        for k in 1..=100_000 {
            let l = k as f64 * 1e-3;
            let v = f(l);
            if v > g.1 {
                g = (l, v);
            }
        }
        let refined = golden(&f, (g.0 - 1e-3).max(0.0), (g.0 + 1e-3).min(100.0));
        let oracle = if f(refined) > g.1 { refined } else { g.0 };
        let got = rational_best_response(skill, &sched, rebate, &p, LABOR_BOUNDS);
        worst_hours = worst_hours.max((got - oracle).abs());
    }
    verdict(
        worst_rel < 1e-4 && worst_hours < 1e-3,
        format!("closed form max rel err {worst_rel:.2e}; grid oracle max gap {worst_hours:.2e} h"),
    )
}

fn elasticity() -> Verdict {
    let p = default_params();
    let econ = Economy::new(gb2_skills(100, 3), p).unwrap().with_rebate_response(RebateResponse::Ignored);
    let base = TaxSchedule::flat(0.3).unwrap();
    let pert = base.with_rate(0, 0.31);
    let run = PerturbationRun {
        baseline_incomes: econ.evaluate(&base).incomes,
        perturbed_incomes: econ.evaluate(&pert).incomes,
        baseline_schedule: base,
        perturbed_schedule: pert,
        dtau: 0.01,
    };
    let e = estimate_elasticity(&run, 0).unwrap();
    let want = (1.0 - p.eta) / (p.delta - 1.0 + p.eta);
    let rel = (e / want - 1.0).abs();
    verdict(rel < 0.05, format!("e = {e:.5} vs {want:.5} (rel err {rel:.2e})"))
}

fn saez_flat() -> Verdict {
    let p = default_params();
    let mut details = Vec::new();
    let mut ok = true;
    for (name, skills) in [("identical", vec![1500.0; 100]), ("gb2", gb2_skills(100, 4))] {
        let econ = Economy::new(skills, p).unwrap();
        let report = solve_piecewise_saez(&econ, &TaxSchedule::flat(0.3).unwrap(), &SaezOptions::default()).unwrap();
        let (tau_bf, _) = brute_force_flat_tax(&econ, 0.01).unwrap();
        let tau = report.best_schedule.rates()[0];
        ok &= (tau - tau_bf).abs() <= 0.02;
        details.push(format!("{name}: fixed point {tau:.4} vs grid {tau_bf:.2}"));
    }
    verdict(ok, details.join("; "))
}

fn gb2_self_consistency() -> Verdict {
    let truth = default_income_prior();
    let xs = gb2_sample(10_000, &truth, 2024).unwrap();
    let fit = fit_gb2(&xs).unwrap().params;
    let errs = [
        (fit.a / truth.a - 1.0).abs(),
        (fit.b / truth.b - 1.0).abs(),
        (fit.p / truth.p - 1.0).abs(),
        (fit.q / truth.q - 1.0).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let qq = qq_correlation(&qq_points(&xs, &fit, 99).unwrap());
    verdict(
        worst < 0.10 && qq > 0.99,
        format!(
            "fit a={:.3} b={:.0} p={:.3} q={:.3}; max rel err {worst:.3}; Q-Q r = {qq:.5}",
            fit.a, fit.b, fit.p, fit.q
        ),
    )
}

fn formula_reduction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut alpha_exact = true;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..300);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(100.0..1e6)).collect();
        let g: Vec<f64> = z.iter().map(|x| 1.0 / x).collect();
        let flat = bracket_statistics(&z, &g, &TaxSchedule::flat(0.2).unwrap(), 0).unwrap();
        alpha_exact &= flat.tail_ratio == 1.0;

        // top bracket starting at z*, against the top-rate sums written out
        let sched = random_schedule(&mut rng);
        let j = sched.num_brackets() - 1;
        let zs = sched.thresholds()[j];
        let top: Vec<(f64, f64)> = z.iter().zip(&g).filter(|(x, _)| **x >= zs).map(|(x, w)| (*x, *w)).collect();
        if top.is_empty() {
            continue;
        }
        let nf = z.len() as f64;
        let a = top.iter().map(|(x, w)| w * (x - zs)).sum::<f64>() / g.iter().sum::<f64>();
        let b = top.iter().map(|(x, _)| x - zs).sum::<f64>() / nf;
        let c = top.iter().map(|(x, _)| x).sum::<f64>() / nf;
        let s = bracket_statistics(&z, &g, &sched, j).unwrap();
        for (got, want) in [(s.welfare_effect, a), (s.mechanical_effect, b), (s.behavioral_base, c)] {
            worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        }
    }
    verdict(alpha_exact && worst <= 1e-12, format!("alpha == 1 exactly: {alpha_exact}; top-bracket max rel diff {worst:.2e}"))
}

fn year_convergence() -> Verdict {
    let mut cfg = SimConfig {
        n_workers: 100,
        total_steps: 1280,
        steps_per_year: 128,
        planner_update_period: 128,
        planner_kind: PlannerKind::Llm,
        seed: 7,
        ..SimConfig::default()
    };
    cfg.gateway.backend = Backend::Mock;
    let out = run_simulation(cfg).unwrap();
    let steps: Vec<Option<u64>> = out.summary.years.iter().map(|y| y.convergence_step).collect();
    let ok = steps.len() == 10 && steps.iter().all(|s| s.is_some_and(|k| k <= 128));
    let shown: Vec<String> = steps.iter().map(|s| s.map_or("none".into(), |k| k.to_string())).collect();
    verdict(ok, format!("settling step per year [{}]", shown.join(", ")))
}

fn determinism() -> Verdict {
    let mut cfg = SimConfig {
        n_workers: 20,
        total_steps: 256,
        steps_per_year: 64,
        planner_update_period: 64,
        worker_kind: WorkerKind::Llm,
        planner_kind: PlannerKind::Llm,
        governance: Governance::Democratic,
        seed: 11,
        ..SimConfig::default()
    };
    cfg.gateway.mock = MockPolicy { seed: 5, mode: MockMode::Noisy { jitter: 0.5 }, precision: 2 };
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    let mut live = None;
    for k in 0..2 {
        let out = run_simulation(cfg.clone()).unwrap();
        let path = dir.path().join(format!("events{k}.jsonl"));
        out.log.write_jsonl(std::fs::File::create(&path).unwrap()).unwrap();
        texts.push(std::fs::read(&path).unwrap());
        live = Some(out.summary);
    }
    let back = EventLog::read_path(&dir.path().join("events0.jsonl")).unwrap();
    let replayed = replay(&back).unwrap();
    let identical = texts[0] == texts[1];
    let same_summary = Some(&replayed) == live.as_ref();
    verdict(
        identical && same_summary,
        format!("logs byte-identical: {identical} ({} bytes); replay equals live summary: {same_summary}", texts[0].len()),
    )
}

fn grid_search() -> Verdict {
    let p = default_params();
    let skills = gb2_skills(100, 9);
    let econ = Economy::new(skills.clone(), p).unwrap();
    let start = TaxSchedule::uniform(TaxSchedule::three_bracket_thresholds(), 0.9).unwrap();
    let grid: Vec<f64> = (-99..=99).map(f64::from).collect();
    let found = grid_perturb_converge(&start, &econ, &grid, 20).unwrap();
    let oracle = OracleEconomy::new(skills, p);
    let (best, _) = oracle.coordinate_optimum(&start);
    let gap = found
        .schedule
        .rates()
        .iter()
        .zip(best.rates())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let improved = found.swf > found.initial_swf;
    verdict(
        improved && gap <= 0.05,
        format!(
            "SWF {:.6} -> {:.6}; search {:?} vs oracle {:?}; max gap {gap:.3}",
            found.initial_swf,
            found.swf,
            found.schedule.rates(),
            best.rates()
        ),
    )
}

fn elections() -> Verdict {
    let p = default_params();
    let skills = vec![300.0, 320.0, 6000.0];
    let cfg = SimConfig {
        n_workers: 3,
        total_steps: 16 * 12,
        steps_per_year: 16,
        planner_update_period: 16,
        governance: Governance::Democratic,
        population: PopulationSource::Skills { values: skills.clone() },
        utility: p,
        seed: 21,
        ..SimConfig::default()
    };
    let out = run_simulation(cfg).unwrap();
    let recs = out.log.records();
    let mut held = 0;
    let mut agreed = 0;
    let mut won = 0;
    let mut last_step: Option<&StepRecord> = None;
    for e in recs {
        match e {
            Event::Step(s) => last_step = Some(s),
            Event::Election(el) => {
                held += 1;
                let rebate = last_step.map_or(0.0, |s| s.rebate);
                // each voter's own utility after best-responding, via the oracle
                let prefer = |skill: f64| {
                    let scores: Vec<(u32, f64)> = el
                        .platforms
                        .iter()
                        .map(|pl| {
                            let l = oracle_labor(skill, &pl.proposed_schedule, rebate, &p);
                            (pl.candidate_id, labor_utility(skill, l, &pl.proposed_schedule, rebate, &p))
                        })
                        .collect();
                    let inc = scores.iter().find(|(id, _)| *id == el.incumbent_id).unwrap().1;
                    scores.iter().filter(|(_, u)| *u > inc).max_by(|a, b| a.1.total_cmp(&b.1)).map_or(el.incumbent_id, |x| x.0)
                };
                let (a, b) = (prefer(skills[0]), prefer(skills[1]));
                if a == b {
                    agreed += 1;
                    if el.winner_id == a {
                        won += 1;
                    }
                }
            }
            _ => {}
        }
    }
    let challengers = out.summary.challenger_wins;
    verdict(
        held > 0 && agreed == held && won == held,
        format!("{held} elections; pair agreed in {agreed}; their platform won {won}; challenger wins {challengers}"),
    )
}

fn live_smoke() -> Verdict {
    let Ok(base_url) = std::env::var("TAXSIM_LIVE_BASE_URL") else {
        return Verdict { status: Status::Skip, detail: "set TAXSIM_LIVE_BASE_URL to run against a live server".into() };
    };
    let mut cfg = SimConfig {
        n_workers: 10,
        worker_kind: WorkerKind::Llm,
        planner_kind: PlannerKind::Llm,
        seed: 1,
        ..SimConfig::default()
    };
    if let Ok(k) = std::env::var("TAXSIM_LIVE_STEPS_PER_YEAR") {
        let k: u64 = k.parse().expect("TAXSIM_LIVE_STEPS_PER_YEAR is an integer");
        cfg.steps_per_year = k;
        cfg.planner_update_period = k;
    }
    cfg.total_steps = 3 * cfg.steps_per_year;
    cfg.gateway.backend = Backend::Http;
    cfg.gateway.base_url = base_url;
    if let Ok(model) = std::env::var("TAXSIM_LIVE_MODEL") {
        cfg.gateway.model = model;
    }
    let out = match run_simulation(cfg) {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("run failed: {e}")),
    };
    let requests = out.transcript.as_ref().map_or(0, |t| t.len()).max(1);
    let rate = out.summary.parse_failures as f64 / requests as f64;
    let mut best = f64::NEG_INFINITY;
    let mut monotone = true;
    for pol in out.log.policies() {
        let next = best.max(pol.credited_swf);
        monotone &= next >= best;
        best = next;
    }
    let swf: Vec<String> = out.summary.years.iter().map(|y| format!("{:.4}", y.mean_swf)).collect();
    verdict(
        rate < 0.05 && monotone,
        format!("parse-failure rate {:.2}% over {requests} requests; year mean SWF [{}]", 100.0 * rate, swf.join(", ")),
    )
}

/// Name, time budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        ("budget balance", 1, budget_balance),
        ("closed-form best response", 10, best_response),
        ("analytic elasticity recovery", 30, elasticity),
        ("Saez flat-tax fixed point", 300, saez_flat),
        ("GB2 self-consistency", 600, gb2_self_consistency),
        ("formula reduction", 600, formula_reduction),
        ("convergence within a tax year", 600, year_convergence),
        ("determinism and replay", 600, determinism),
        ("grid search improves welfare", 600, grid_search),
        ("election majority", 600, elections),
        ("live model smoke run (optional)", 3600, live_smoke),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut v = check();
        let took = start.elapsed();
        if took > Duration::from_secs(*budget) && matches!(v.status, Status::Pass) {
            v = verdict(false, format!("{} (over the {budget} s budget)", v.detail));
        }
        let tag = match v.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("{tag} {:>2} {name}: {} [{:.2} s]", i + 1, v.detail, took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
