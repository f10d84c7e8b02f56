//! Scripted labor choices.
//!
//! Utility as a function of labor is concave inside each tax bracket and
//! kinked at the hours where income crosses a threshold, so we solve each
//! smooth piece's first-order condition by bisection and compare the pieces'
//! maxima with the kinks and endpoints.

use crate::fiscal::{TaxSchedule, UtilityParams, CONSUMPTION_FLOOR};
use crate::population::SatisfactionRule;

/// Default action space in weekly hours.
pub const LABOR_BOUNDS: (f64, f64) = (0.0, 100.0);

/// Utility of working `labor` hours with the rebate held at `rebate`.
#[inline]
pub fn labor_utility(skill: f64, labor: f64, schedule: &TaxSchedule, rebate: f64, params: &UtilityParams) -> f64 {
    let z = (skill * labor).max(0.0);
    params.isoelastic(z - schedule.tax_unchecked(z) + rebate, labor)
}

/// Hours at which income crosses each threshold, restricted to `(lo, hi)`.
fn kinks(skill: f64, schedule: &TaxSchedule, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo];
    if skill > 0.0 {
        pts.extend(
            schedule.thresholds()[1..]
                .iter()
                .map(|t| t / skill)
                .filter(|&l| l > lo && l < hi),
        );
    }
    pts.push(hi);
    pts
}

/// Derivative of utility in hours inside a bracket whose marginal rate is
/// `rate`. Decreasing in `labor`, since utility is concave within a bracket.
fn labor_slope(skill: f64, labor: f64, rate: f64, post_tax: f64, params: &UtilityParams) -> f64 {
    // below the floor utility is flat, but treating it as the floor's slope
    // keeps zero hours from looking optimal when there is nothing else to eat
    let gain = post_tax.max(CONSUMPTION_FLOOR).powf(-params.eta) * skill * (1.0 - rate);
    gain - params.psi * params.delta * labor.max(0.0).powf(params.delta - 1.0)
}

/// Maximizer of a concave piece on `[a, b]`, found by bisecting the sign of
/// the slope.
fn piece_argmax(slope: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if slope(a) <= 0.0 {
        return a;
    }
    if slope(b) >= 0.0 {
        return b;
    }
    let (mut lo, mut hi) = (a, b);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Best of each piece's interior optimum and every piece edge. Pieces are
/// visited left to right and only strict improvements replace the incumbent,
/// so ties go to fewer hours.
fn maximize_piecewise(
    skill: f64,
    schedule: &TaxSchedule,
    rebate: f64,
    params: &UtilityParams,
    edges: &[f64],
) -> (f64, f64) {
    let f = |l: f64| labor_utility(skill, l, schedule, rebate, params);
    let mut best = (edges[0], f(edges[0]));
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > a {
            let rate = schedule.rates()[schedule.bracket_of(skill * 0.5 * (a + b))];
            let slope = |l: f64| {
                let z = skill * l;
                labor_slope(skill, l, rate, z - schedule.tax_unchecked(z) + rebate, params)
            };
            let x = piece_argmax(slope, a, b);
            for cand in [(x, f(x)), (b, f(b))] {
                if cand.1 > best.1 {
                    best = cand;
                }
            }
        }
    }
    best
}

/// Hours maximizing isoelastic utility under `schedule`, treating the rebate
/// as fixed at `rebate_guess`.
pub fn rational_best_response(
    skill: f64,
    schedule: &TaxSchedule,
    rebate_guess: f64,
    params: &UtilityParams,
    labor_bounds: (f64, f64),
) -> f64 {
    let (lo, hi) = labor_bounds;
    if hi <= lo {
        return lo;
    }
    maximize_piecewise(skill, schedule, rebate_guess, params, &kinks(skill, schedule, lo, hi)).0
}

/// Closed-form optimum for a flat tax with no rebate.
pub fn closed_form_labor(skill: f64, rate: f64, params: &UtilityParams) -> f64 {
    let (eta, psi, delta) = (params.eta, params.psi, params.delta);
    (((1.0 - rate) * skill).powf(1.0 - eta) / (psi * delta)).powf(1.0 / (delta - 1.0 + eta))
}

/// Whether income `z` passes a persona's rule under `schedule`.
pub fn satisfied_at(z: f64, schedule: &TaxSchedule, rule: &SatisfactionRule) -> bool {
    let z = z.max(0.0);
    let marginal = schedule.rates()[schedule.bracket_of(z)];
    let effective = if z > 0.0 { schedule.tax_unchecked(z) / z } else { 0.0 };
    1.0 - marginal >= rule.min_marginal_retention && effective <= rule.max_effective_rate
}

/// Income intervals on which a persona is satisfied, one per bracket at most.
fn satisfied_income_intervals(schedule: &TaxSchedule, rule: &SatisfactionRule) -> Vec<(f64, f64)> {
    let cap = rule.max_effective_rate;
    let mut out = Vec::new();
    for (j, &rate) in schedule.rates().iter().enumerate() {
        if 1.0 - rate < rule.min_marginal_retention {
            continue;
        }
        let lo = schedule.thresholds()[j];
        let hi = schedule.upper(j).unwrap_or(f64::INFINITY);
        // inside the bracket, tax(z) / z = rate + k / z
        let k = schedule.tax_unchecked(lo) - rate * lo;
        let slack = cap - rate;
        let (mut a, mut b) = (lo, hi);
        if slack > 0.0 {
            a = a.max(k / slack);
        } else if slack < 0.0 {
            b = b.min(k / slack);
        } else if k > 0.0 {
            continue;
        }
        if b >= a {
            out.push((a, b));
        }
    }
    out
}

/// Labor choice for a worker whose utility loses `params.phi` when its persona
/// is unsatisfied. Returns the hours and the resulting flag.
pub fn bounded_best_response(
    skill: f64,
    schedule: &TaxSchedule,
    rebate_guess: f64,
    params: &UtilityParams,
    labor_bounds: (f64, f64),
    rule: &SatisfactionRule,
) -> (f64, bool) {
    let (lo, hi) = labor_bounds;
    if skill <= 0.0 {
        return (lo, satisfied_at(0.0, schedule, rule));
    }
    let f = |l: f64| labor_utility(skill, l, schedule, rebate_guess, params);
    let free = rational_best_response(skill, schedule, rebate_guess, params, labor_bounds);
    if satisfied_at(skill * free, schedule, rule) {
        return (free, true);
    }
    let mut best = (free, f(free) - params.phi, false);
    for (za, zb) in satisfied_income_intervals(schedule, rule) {
        let a = (za / skill).max(lo);
        let b = (zb / skill).min(hi);
        if b < a {
            continue;
        }
        let edges = kinks(skill, schedule, a, b);
        let (mut l, _) =
            if b > a { maximize_piecewise(skill, schedule, rebate_guess, params, &edges) } else { (a, f(a)) };
        // intervals are open at the next threshold; back off onto the satisfied side
        let mut tries = 0;
        while !satisfied_at(skill * l, schedule, rule) && l > a && tries < 64 {
            l = f64::from_bits(l.to_bits() - 1);
            tries += 1;
        }
        if !satisfied_at(skill * l, schedule, rule) {
            continue;
        }
        let u = f(l);
        if u > best.1 || (u == best.1 && l < best.0) {
            best = (l, u, true);
        }
    }
    (best.0, best.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> UtilityParams {
        UtilityParams { eta: 0.5, psi: 0.01, delta: 2.0, phi: 0.0 }
    }

    /// Dense grid oracle: step 1e-3 hours, then a local refinement.
    fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = ((hi - lo) / 1e-3).round() as usize;
        let mut best = (lo, f(lo));
        for k in 1..=n {
            let l = lo + k as f64 * 1e-3;
            let v = f(l);
            if v > best.1 {
                best = (l, v);
            }
        }
        best.0
    }

    #[test]
    fn closed_form_examples() {
        let p = params();
        let l0 = rational_best_response(10.0, &TaxSchedule::flat(0.0).unwrap(), 0.0, &p, LABOR_BOUNDS);
        assert!((l0 - 29.24).abs() < 0.005, "{l0}");
        assert!((l0 / closed_form_labor(10.0, 0.0, &p) - 1.0).abs() < 1e-6);
        let l5 = rational_best_response(10.0, &TaxSchedule::flat(0.5).unwrap(), 0.0, &p, LABOR_BOUNDS);
        assert!((l5 - 23.21).abs() < 0.005, "{l5}");
        assert!((l5 / l0 - 0.5f64.powf(1.0 / 3.0)).abs() < 1e-6);
    }

    #[test]
    fn huge_disutility_means_no_work() {
        let p = UtilityParams { psi: 1e6, ..params() };
        let l = rational_best_response(10.0, &TaxSchedule::flat(0.2).unwrap(), 0.0, &p, LABOR_BOUNDS);
        assert!(l < 1e-3, "{l}");
    }

    #[test]
    fn zero_skill_works_minimum() {
        let l = rational_best_response(0.0, &TaxSchedule::us_federal_2024(), 50.0, &params(), (0.0, 100.0));
        assert_eq!(l, 0.0);
    }

    #[test]
    fn bounded_prefers_satisfied_region_when_penalty_is_large() {
        let sched = TaxSchedule::new(vec![0.0, 50_000.0], vec![0.1, 0.5]).unwrap();
        let rule = SatisfactionRule { max_effective_rate: 0.3, min_marginal_retention: 0.6 };
        let p = UtilityParams { eta: 0.5, psi: 0.07, delta: 2.0, phi: 0.0 };
        let skill = 2500.0;
        let free = rational_best_response(skill, &sched, 0.0, &p, LABOR_BOUNDS);
        assert!(skill * free > 50_000.0);
        let heavy = UtilityParams { phi: 1e6, ..p };
        let (l, ok) = bounded_best_response(skill, &sched, 0.0, &heavy, LABOR_BOUNDS, &rule);
        assert!(ok);
        assert!(skill * l <= 50_000.0 + 1e-6);
        assert!((skill * l - 50_000.0).abs() < 1.0, "pinned at the threshold, got {}", skill * l);
        let (l0, ok0) = bounded_best_response(skill, &sched, 0.0, &p, LABOR_BOUNDS, &rule);
        assert!(!ok0);
        assert!((l0 - free).abs() < 1e-9);
    }

    #[test]
    fn bounded_matches_grid_oracle() {
        let sched = TaxSchedule::us_federal_2024();
        let rule = SatisfactionRule { max_effective_rate: 0.2, min_marginal_retention: 0.7 };
        let p = UtilityParams { eta: 0.5, psi: 0.07, delta: 2.0, phi: 3.0 };
        for skill in [300.0, 1200.0, 2500.0, 6000.0] {
            let (l, _) = bounded_best_response(skill, &sched, 1000.0, &p, LABOR_BOUNDS, &rule);
            let g = |l: f64| {
                let pen = if satisfied_at(skill * l, &sched, &rule) { 0.0 } else { p.phi };
                labor_utility(skill, l, &sched, 1000.0, &p) - pen
            };
            let oracle = grid_argmax(g, 0.0, 100.0);
            assert!(g(l) >= g(oracle) - 1e-9, "skill {skill}: {l} vs {oracle}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matches_dense_grid(
            skill in 100.0f64..5000.0,
            rates in prop::collection::vec(0.0f64..0.9, 3),
            rebate in 0.0f64..20_000.0,
        ) {
            let sched = TaxSchedule::new(vec![0.0, 40_000.0, 120_000.0], rates).unwrap();
            let p = UtilityParams { eta: 0.5, psi: 0.07, delta: 2.0, phi: 0.0 };
            let l = rational_best_response(skill, &sched, rebate, &p, LABOR_BOUNDS);
            let oracle = grid_argmax(|l| labor_utility(skill, l, &sched, rebate, &p), 0.0, 100.0);
            prop_assert!((0.0..=100.0).contains(&l));
            prop_assert!((l - oracle).abs() <= 1e-3, "{} vs {}", l, oracle);
        }
    }
}
