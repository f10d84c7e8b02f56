//! A static economy of scripted workers: given a schedule, find the labor
//! choices and rebate that are consistent with each other.

use serde::{Deserialize, Serialize};

use super::SaezError;
use crate::agents::{labor_utility, rational_best_response, LABOR_BOUNDS};
use crate::fiscal::{TaxSchedule, UtilityParams, INCOME_FLOOR};

/// How workers account for the rebate when choosing hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RebateResponse {
    /// Workers best-respond to the rebate their own choices generate.
    #[default]
    Equilibrium,
    /// Workers optimize as if no rebate were paid; it is still paid.
    Ignored,
}

/// Which incomes the inverse-income welfare weights are taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WelfareWeighting {
    /// Weights frozen at each worker's income under zero taxes.
    #[default]
    ReferenceIncome,
    /// Weights recomputed from incomes under the schedule being scored.
    CurrentIncome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LaborModel {
    Rational,
    /// Hours that never respond to taxes.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    skills: Vec<f64>,
    params: UtilityParams,
    labor_bounds: (f64, f64),
    rebate_response: RebateResponse,
    weighting: WelfareWeighting,
    labor_model: LaborModel,
    reference_weights: Vec<f64>,
}

/// Labor, incomes and welfare of an economy under one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub labor: Vec<f64>,
    pub incomes: Vec<f64>,
    pub post_tax: Vec<f64>,
    pub utilities: Vec<f64>,
    pub rebate: f64,
    pub swf: f64,
}

const REBATE_TOL: f64 = 1e-10;
const REBATE_MAX_ITERS: usize = 500;

impl Economy {
    pub fn new(skills: Vec<f64>, params: UtilityParams) -> Result<Self, SaezError> {
        if skills.is_empty() {
            return Err(SaezError::InvalidEconomy("no workers".into()));
        }
        if skills.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(SaezError::InvalidEconomy("skills must be finite and >= 0".into()));
        }
        params.validate().map_err(|e| SaezError::InvalidEconomy(e.to_string()))?;
        let mut econ = Self {
            skills,
            params,
            labor_bounds: LABOR_BOUNDS,
            rebate_response: RebateResponse::default(),
            weighting: WelfareWeighting::default(),
            labor_model: LaborModel::Rational,
            reference_weights: Vec::new(),
        };
        econ.refresh_reference_weights();
        Ok(econ)
    }

    pub fn with_rebate_response(mut self, r: RebateResponse) -> Self {
        self.rebate_response = r;
        self.refresh_reference_weights();
        self
    }

    pub fn with_weighting(mut self, w: WelfareWeighting) -> Self {
        self.weighting = w;
        self
    }

    pub fn with_labor_bounds(mut self, bounds: (f64, f64)) -> Self {
        self.labor_bounds = bounds;
        self.refresh_reference_weights();
        self
    }

    pub fn with_fixed_labor(mut self, labor: Vec<f64>) -> Result<Self, SaezError> {
        if labor.len() != self.skills.len() {
            return Err(SaezError::InvalidEconomy(format!(
                "{} fixed labor values for {} workers",
                labor.len(),
                self.skills.len()
            )));
        }
        self.labor_model = LaborModel::Fixed(labor);
        self.refresh_reference_weights();
        Ok(self)
    }

    fn refresh_reference_weights(&mut self) {
        let zero = TaxSchedule::flat(0.0).expect("zero schedule is valid");
        let labor = self.choose_labor(&zero, 0.0);
        self.reference_weights = self
            .skills
            .iter()
            .zip(&labor)
            .map(|(s, l)| 1.0 / (s * l).max(INCOME_FLOOR))
            .collect();
    }

    pub fn skills(&self) -> &[f64] {
        &self.skills
    }

    pub fn params(&self) -> &UtilityParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn weighting(&self) -> WelfareWeighting {
        self.weighting
    }

    pub fn rebate_response(&self) -> RebateResponse {
        self.rebate_response
    }

    /// Inverse zero-tax incomes.
    pub fn reference_weights(&self) -> &[f64] {
        &self.reference_weights
    }

    fn choose_labor(&self, schedule: &TaxSchedule, rebate_guess: f64) -> Vec<f64> {
        match &self.labor_model {
            LaborModel::Fixed(l) => l.clone(),
            LaborModel::Rational => self
                .skills
                .iter()
                .map(|&s| rational_best_response(s, schedule, rebate_guess, &self.params, self.labor_bounds))
                .collect(),
        }
    }

    fn mean_tax(&self, schedule: &TaxSchedule, labor: &[f64]) -> f64 {
        let total: f64 = self.skills.iter().zip(labor).map(|(s, l)| schedule.tax_unchecked(s * l)).sum();
        total / self.skills.len() as f64
    }

    /// Converged labor and rebate under `schedule`.
    pub fn evaluate(&self, schedule: &TaxSchedule) -> Outcome {
        let (labor, rebate) = match self.rebate_response {
            RebateResponse::Ignored => {
                let labor = self.choose_labor(schedule, 0.0);
                let r = self.mean_tax(schedule, &labor);
                (labor, r)
            }
            RebateResponse::Equilibrium => {
                let mut guess = 0.0;
                let mut labor = self.choose_labor(schedule, guess);
                let mut rebate = self.mean_tax(schedule, &labor);
                for _ in 0..REBATE_MAX_ITERS {
                    if (rebate - guess).abs() <= REBATE_TOL * rebate.abs().max(1.0) {
                        break;
                    }
                    guess = rebate;
                    labor = self.choose_labor(schedule, guess);
                    rebate = self.mean_tax(schedule, &labor);
                }
                (labor, rebate)
            }
        };
        let incomes: Vec<f64> = self.skills.iter().zip(&labor).map(|(s, l)| s * l).collect();
        let post_tax: Vec<f64> = incomes.iter().map(|&z| z - schedule.tax_unchecked(z) + rebate).collect();
        let utilities: Vec<f64> = self
            .skills
            .iter()
            .zip(&labor)
            .map(|(&s, &l)| labor_utility(s, l, schedule, rebate, &self.params))
            .collect();
        let swf = self.welfare(&incomes, &utilities);
        Outcome { labor, incomes, post_tax, utilities, rebate, swf }
    }

    fn welfare(&self, incomes: &[f64], utilities: &[f64]) -> f64 {
        match self.weighting {
            WelfareWeighting::ReferenceIncome => {
                utilities.iter().zip(&self.reference_weights).map(|(u, w)| u * w).sum()
            }
            WelfareWeighting::CurrentIncome => {
                incomes.iter().zip(utilities).map(|(z, u)| u / z.max(INCOME_FLOOR)).sum()
            }
        }
    }

    pub fn swf(&self, schedule: &TaxSchedule) -> f64 {
        self.evaluate(schedule).swf
    }

    /// Social value of a marginal dollar to each worker at `outcome`.
    pub fn welfare_weights(&self, outcome: &Outcome) -> Vec<f64> {
        match self.weighting {
            WelfareWeighting::ReferenceIncome => self
                .reference_weights
                .iter()
                .zip(&outcome.post_tax)
                .map(|(w, c)| w * c.max(crate::fiscal::CONSUMPTION_FLOOR).powf(-self.params.eta))
                .collect(),
            WelfareWeighting::CurrentIncome => outcome.incomes.iter().map(|z| 1.0 / z.max(INCOME_FLOOR)).collect(),
        }
    }

    /// Evaluate many schedules across threads. Results come back in input
    /// order.
    pub fn evaluate_many(&self, schedules: &[TaxSchedule]) -> Vec<Outcome> {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(schedules.len().max(1));
        if threads <= 1 {
            return schedules.iter().map(|s| self.evaluate(s)).collect();
        }
        let chunk = schedules.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = schedules
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|s| self.evaluate(s)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("evaluation thread panicked")).collect()
        })
    }

    pub fn swf_many(&self, schedules: &[TaxSchedule]) -> Vec<f64> {
        self.evaluate_many(schedules).into_iter().map(|o| o.swf).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::closed_form_labor;

    fn params() -> UtilityParams {
        UtilityParams { eta: 0.5, psi: 0.07, delta: 2.0, phi: 0.0 }
    }

    #[test]
    fn budget_balances_and_rebate_is_consistent() {
        let econ = Economy::new(vec![500.0, 1500.0, 4000.0], params()).unwrap();
        let s = TaxSchedule::us_federal_2024();
        let out = econ.evaluate(&s);
        let pre: f64 = out.incomes.iter().sum();
        let post: f64 = out.post_tax.iter().sum();
        assert!((pre - post).abs() < 1e-9 * pre);
        // each worker best-responds to the rebate that results
        for (i, &sk) in econ.skills().iter().enumerate() {
            let l = rational_best_response(sk, &s, out.rebate, &params(), LABOR_BOUNDS);
            assert!((l - out.labor[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn ignored_rebate_gives_closed_form_labor() {
        let econ = Economy::new(vec![800.0, 2000.0], params()).unwrap().with_rebate_response(RebateResponse::Ignored);
        let out = econ.evaluate(&TaxSchedule::flat(0.3).unwrap());
        for (i, &sk) in econ.skills().iter().enumerate() {
            let want = closed_form_labor(sk, 0.3, &params());
            assert!((out.labor[i] / want - 1.0).abs() < 1e-7);
        }
        assert!(out.rebate > 0.0);
    }

    #[test]
    fn reference_weights_come_from_zero_tax_incomes() {
        let econ = Economy::new(vec![1000.0], params()).unwrap();
        let z0 = 1000.0 * closed_form_labor(1000.0, 0.0, &params());
        assert!((econ.reference_weights()[0] * z0 - 1.0).abs() < 1e-7);
    }

    #[test]
    fn parallel_scoring_matches_serial() {
        let econ = Economy::new(vec![300.0, 900.0, 2700.0, 8100.0], params()).unwrap();
        let scheds: Vec<TaxSchedule> = (0..9).map(|k| TaxSchedule::flat(0.1 * k as f64).unwrap()).collect();
        let serial: Vec<f64> = scheds.iter().map(|s| econ.swf(s)).collect();
        assert_eq!(econ.swf_many(&scheds), serial);
    }
}
