use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("series mass did not converge at t = {t} within {terms} terms")]
    NonConvergentMass { t: f64, terms: usize },

    #[error("abscissa t = {t} is outside (0, {radius})")]
    InvalidAbscissa { t: f64, radius: f64 },

    #[error("sequence `{label}` exceeds its declared bound at index {index}: |x| = {value}, bound = {bound}")]
    BoundViolation {
        label: String,
        index: usize,
        value: f64,
        bound: f64,
    },

    #[error("schedule has {len} abscissae, at least 3 are required")]
    ScheduleTooShort { len: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid power series method `{name}`: {reason}")]
    InvalidMethod { name: String, reason: String },

    #[error("epsilon list is empty")]
    EmptyEpsilonList,

    #[error("invalid epsilon list: {0}")]
    InvalidEpsilons(String),

    #[error("decomposition ladder stalled at k = {k}: no admissible cutoff within the horizon")]
    LadderStall { k: usize },

    #[error("operator index {j} outside [{min}, {max}]")]
    IndexOutOfRange { j: usize, min: usize, max: usize },

    #[error("node {node} of operator {j} lies outside the domain")]
    NodeOutsideDomain { j: usize, node: f64 },

    #[error("sampled values do not share a grid ({left} vs {right} points)")]
    GridMismatch { left: usize, right: usize },

    #[error("Fejér quadrature with {size} nodes misses normalization by {defect:e} for n = {n}")]
    QuadratureTooCoarse { n: usize, size: usize, defect: f64 },

    #[error("perturbation eta_{j} = {value} is negative")]
    NegativeEta { j: usize, value: f64 },

    #[error("function `{label}` supplies derivatives up to order {have}, order {need} is required")]
    MissingDerivatives {
        label: String,
        have: usize,
        need: usize,
    },

    #[error("finite-difference stencil for order {order} at {xi} with step {h} leaves the domain")]
    StencilOutOfDomain { xi: f64, h: f64, order: usize },

    #[error("grid has {points} points, at least {required} are required")]
    DegenerateGrid { points: usize, required: usize },

    #[error("Z-function needs two distinct points")]
    CoincidentPoints,

    #[error("Korovkin system check failed: {0}")]
    SystemCheckFailed(String),

    #[error("base family does not satisfy the test-function condition: {0}")]
    BaseConditionFailed(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
