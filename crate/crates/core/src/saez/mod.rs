//! Optimal-tax theory: elasticities, distribution statistics, the Saez rate
//! formulas and the search procedures used to validate them.

mod economy;
mod solver;
mod stats;

pub use economy::{Economy, LaborModel, Outcome, RebateResponse, WelfareWeighting};
pub use solver::{
    brute_force_flat_tax, grid_perturb_converge, grid_perturb_search, solve_piecewise_saez, GridSearchResult,
    SaezIteration, SaezOptions, SaezReport,
};
pub use stats::{
    bracket_statistics, estimate_elasticity, nonlinear_statistics, pareto_parameter, saez_rate, BracketStats,
    EmpiricalIncomeDist, PerturbationRun,
};

#[derive(Debug, thiserror::Error)]
pub enum SaezError {
    #[error("invalid economy: {0}")]
    InvalidEconomy(String),
    #[error("bracket {0} has no workers")]
    EmptyBracket(usize),
    #[error("no income mass at or above bracket {0}")]
    NoMass(usize),
    #[error("perturbation size must be nonzero")]
    ZeroPerturbation,
    #[error("net-of-tax rate must stay positive")]
    NonPositiveRetention,
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("rate formula denominator is zero")]
    ZeroDenominator,
    #[error("income {0} is outside the sample support")]
    OutOfSupport(f64),
    #[error("need at least one positive income")]
    EmptyDistribution,
    #[error("incomes and weights differ in length ({incomes} vs {weights})")]
    LengthMismatch { incomes: usize, weights: usize },
    #[error("bracket {0} does not exist")]
    NoSuchBracket(usize),
    #[error("grid must be nonempty and finite")]
    InvalidGrid,
}
