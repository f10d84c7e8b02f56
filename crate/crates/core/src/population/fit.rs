//! Maximum-likelihood GB2 fitting.
//!
//! Samples are divided by their median so the scale parameter starts near 1,
//! which makes the fit exactly scale equivariant. Each start runs L-BFGS on
//! unconstrained coordinates `u` mapped into a box on log-parameters by a
//! sigmoid, so every iterate is a valid parameter set.

use argmin::core::{CostFunction, Error as ArgminError, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::gb2::{sigmoid, softplus, Gb2Params};
use super::PopulationError;

pub const MIN_FIT_SAMPLES: usize = 100;

/// Bounds on `(ln a, ln b, ln p, ln q)`; `b` is relative to the sample median.
const LOG_BOUNDS: [(f64, f64); 4] = [(-3.0, 4.0), (-8.0, 8.0), (-4.0, 4.0), (-4.0, 4.0)];

/// Starting `(a, b, p, q)` in median units.
const STARTS: [[f64; 4]; 6] = [
    [2.0, 1.0, 1.0, 1.0],
    [3.0, 1.0, 0.8, 1.2],
    [1.5, 1.0, 2.0, 2.0],
    [4.0, 1.0, 0.5, 0.5],
    [1.0, 1.0, 3.0, 3.0],
    [2.5, 1.0, 1.5, 0.7],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gb2Fit {
    #[serde(flatten)]
    pub params: Gb2Params,
    /// Total log-likelihood of the samples at `params`.
    pub loglik: f64,
}

/// Total log-likelihood of positive samples.
pub fn gb2_loglik(samples: &[f64], params: &Gb2Params) -> Result<f64, PopulationError> {
    params.validate()?;
    if let Some(&x) = samples.iter().find(|&&x| !(x > 0.0)) {
        return Err(PopulationError::OutOfSupport(x));
    }
    Ok(samples.iter().map(|&x| params.ln_pdf_unchecked(x)).sum())
}

pub fn fit_gb2(samples: &[f64]) -> Result<Gb2Fit, PopulationError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(PopulationError::TooFewSamples { got: samples.len(), need: MIN_FIT_SAMPLES });
    }
    if let Some(&x) = samples.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(PopulationError::OutOfSupport(x));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(PopulationError::Degenerate);
    }
    let scale = super::gb2::empirical_quantile(&sorted, 0.5);
    let logs: Vec<f64> = samples.iter().map(|x| (x / scale).ln()).collect();
    let problem = NegLogLik { logs: &logs };

    let mut best: Option<(f64, [f64; 4])> = None;
    for start in STARTS {
        let init: Vec<f64> = start
            .iter()
            .zip(LOG_BOUNDS)
            .map(|(v, (lo, hi))| logit(((v.ln() - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6)))
            .collect();
        let Ok(u) = run_lbfgs(&problem, init) else { continue };
        let theta = to_log_params(&u);
        let cost = problem.mean_cost(&theta);
        if cost.is_finite() && best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, theta));
        }
    }
    let (_, theta) = best.ok_or(PopulationError::FitFailed)?;
    let params = Gb2Params::new(theta[0].exp(), theta[1].exp() * scale, theta[2].exp(), theta[3].exp())?;
    let loglik = gb2_loglik(samples, &params)?;
    Ok(Gb2Fit { params, loglik })
}

fn run_lbfgs(problem: &NegLogLik<'_>, init: Vec<f64>) -> Result<Vec<f64>, ArgminError> {
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 7)
        .with_tolerance_grad(1e-9)?
        .with_tolerance_cost(1e-13)?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.param(init).max_iters(500))
        .run()?;
    res.state.best_param.ok_or_else(|| ArgminError::msg("no parameter found"))
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn to_log_params(u: &[f64]) -> [f64; 4] {
    let mut theta = [0.0; 4];
    for k in 0..4 {
        let (lo, hi) = LOG_BOUNDS[k];
        theta[k] = lo + (hi - lo) * sigmoid(u[k]);
    }
    theta
}

/// Mean negative log-likelihood over `ln(x / median)`.
struct NegLogLik<'a> {
    logs: &'a [f64],
}

impl NegLogLik<'_> {
    fn mean_cost(&self, theta: &[f64; 4]) -> f64 {
        let [a, lb, p, q] = [theta[0].exp(), theta[1], theta[2].exp(), theta[3].exp()];
        let lnb = statrs::function::beta::ln_beta(p, q);
        let mut total = 0.0;
        for &lx in self.logs {
            let y = lx - lb;
            total += a.ln() - lx + a * p * y - lnb - (p + q) * softplus(a * y);
        }
        -total / self.logs.len() as f64
    }

    /// Gradient of the mean cost with respect to `theta = (ln a, ln b, ln p, ln q)`.
    fn grad_theta(&self, theta: &[f64; 4]) -> [f64; 4] {
        let [a, lb, p, q] = [theta[0].exp(), theta[1], theta[2].exp(), theta[3].exp()];
        let dpq = digamma(p + q);
        let (mut ga, mut gb, mut gp, mut gq) = (0.0, 0.0, 0.0, 0.0);
        for &lx in self.logs {
            let y = lx - lb;
            let s = sigmoid(a * y);
            let l = softplus(a * y);
            ga += 1.0 / a + p * y - (p + q) * s * y;
            gb += -a * p + (p + q) * a * s;
            gp += a * y - l;
            gq += -l;
        }
        let n = self.logs.len() as f64;
        gp += n * (dpq - digamma(p));
        gq += n * (dpq - digamma(q));
        [-ga * a / n, -gb / n, -gp * p / n, -gq * q / n]
    }
}

impl CostFunction for &NegLogLik<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Self::Param) -> Result<f64, ArgminError> {
        Ok(self.mean_cost(&to_log_params(u)))
    }
}

impl Gradient for &NegLogLik<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, u: &Self::Param) -> Result<Vec<f64>, ArgminError> {
        let g = self.grad_theta(&to_log_params(u));
        Ok((0..4)
            .map(|k| {
                let (lo, hi) = LOG_BOUNDS[k];
                let s = sigmoid(u[k]);
                g[k] * (hi - lo) * s * (1.0 - s)
            })
            .collect())
    }
}
