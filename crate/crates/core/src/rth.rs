//! r-th order generalizations `G_j^[r](f; x) = sum_k rho_{j,k}(x) Gamma_r(f at x_{j,k}; x)`
//! where `Gamma_r` is the degree-r Taylor polynomial of `f` about the node.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Grid};
use crate::error::{Error, Result};
use crate::function::FunctionHandle;
use crate::operators::{DiscreteOperatorFamily, SampledOperator};
use crate::sum::dot;

pub const MAX_FD_ORDER: usize = 4;
/// Truncation order of the finite-difference stencils.
pub const FD_ACCURACY: usize = 4;
const WITNESS_GRID_POINTS: usize = 65;
const WITNESS_THRESHOLD: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorJet {
    pub xi: f64,
    /// `values[nu]` is the `nu`-th derivative at `xi`.
    pub values: Vec<f64>,
}

impl TaylorJet {
    pub fn new(xi: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("a jet needs at least the value".into()));
        }
        Ok(Self { xi, values })
    }

    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    /// Jet from analytic derivatives.
    pub fn analytic(f: &FunctionHandle, xi: f64, r: usize) -> Result<Self> {
        f.require_order(r)?;
        let values = (0..=r)
            .map(|nu| f.derivative(nu, xi).expect("order checked"))
            .collect();
        Ok(Self { xi, values })
    }
}

/// `sum_nu f^(nu)(xi) (x - xi)^nu / nu!` by Horner's rule.
pub fn gamma_r(jet: &TaylorJet, x: f64) -> f64 {
    let d = x - jet.xi;
    let r = jet.order();
    let mut factorial = 1.0;
    let coeffs: Vec<f64> = jet
        .values
        .iter()
        .enumerate()
        .map(|(nu, v)| {
            if nu > 1 {
                factorial *= nu as f64;
            }
            v / factorial
        })
        .collect();
    let mut acc = coeffs[r];
    for nu in (0..r).rev() {
        acc = acc * d + coeffs[nu];
    }
    acc
}

/// Finite-difference weights for derivatives `0..=max_order` at `x0` on the
/// stencil `z` (Fornberg's recursion). `out[m][i]` weights `f(z_i)` for order `m`.
pub fn fornberg_weights(x0: f64, z: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = z.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    let mut c1 = 1.0;
    let mut c4 = z[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = z[i] - x0;
        for j in 0..i {
            let c3 = z[i] - z[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Default step for derivative order `nu`, balancing truncation and rounding
/// of a fourth-order stencil.
pub fn default_step(nu: usize, xi: f64) -> f64 {
    0.5 * f64::EPSILON.powf(1.0 / (nu + FD_ACCURACY) as f64) * xi.abs().max(1.0)
}

/// Fourth-order accurate finite-difference jet. Central stencils are used
/// where they fit in `domain`, one-sided stencils otherwise. `h = None` picks
/// [`default_step`] per order.
pub fn finite_diff_jet(
    f: &FunctionHandle,
    xi: f64,
    r: usize,
    h: Option<f64>,
    domain: &Domain,
) -> Result<TaylorJet> {
    if r > MAX_FD_ORDER {
        return Err(Error::InvalidParameter(format!(
            "finite differences support order at most {MAX_FD_ORDER}, got {r}"
        )));
    }
    if let Some(h) = h {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("step {h} must be positive")));
        }
    }
    let mut values = vec![f.eval(xi)];
    for nu in 1..=r {
        let step = h.unwrap_or_else(|| default_step(nu, xi));
        let offsets = stencil(domain, xi, step, nu)?;
        // weights on integer offsets are exact enough to cancel constants
        let unit: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
        let w = fornberg_weights(0.0, &unit, nu);
        let fz: Vec<f64> = offsets
            .iter()
            .map(|&o| f.eval(xi + o as f64 * step))
            .collect();
        values.push(dot(&w[nu], &fz) / step.powi(nu as i32));
    }
    Ok(TaylorJet { xi, values })
}

fn stencil(domain: &Domain, xi: f64, h: f64, nu: usize) -> Result<Vec<i64>> {
    let half = (nu.div_ceil(2) + FD_ACCURACY / 2 - 1) as i64;
    let central: Vec<i64> = (-half..=half).collect();
    let (a, b) = match *domain {
        Domain::Interval { a, b } => (a, b),
        Domain::Circle => return Ok(central),
    };
    let fits = |lo: i64, hi: i64| xi + lo as f64 * h >= a && xi + hi as f64 * h <= b;
    let reach = (nu + FD_ACCURACY - 1) as i64;
    if fits(-half, half) {
        Ok(central)
    } else if fits(0, reach) {
        Ok((0..=reach).collect())
    } else if fits(-reach, 0) {
        Ok((-reach..=0).collect())
    } else {
        Err(Error::StencilOutOfDomain { xi, h, order: nu })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DerivativeSource {
    Analytic,
    /// `step = None` uses the per-order default.
    FiniteDifference { step: Option<f64> },
}

/// A nonnegative candidate function used to exhibit non-positivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WitnessFunction {
    /// `(y - center)^(2 m)`.
    EvenPower { center: f64, m: u32 },
    /// `cos^2(omega (y - center))`.
    CosSquared { center: f64, omega: f64 },
}

impl WitnessFunction {
    pub fn handle(&self) -> FunctionHandle {
        match *self {
            WitnessFunction::EvenPower { center, m } => {
                let deg = 2 * m as usize;
                // expand (y - c)^deg
                let coeffs: Vec<f64> = (0..=deg)
                    .map(|i| binomial(deg, i) * (-center).powi((deg - i) as i32))
                    .collect();
                FunctionHandle::polynomial(format!("(y - {center})^{deg}"), coeffs)
            }
            WitnessFunction::CosSquared { center, omega } => {
                // cos^2 u = (1 + cos 2u) / 2, derivatives of cos(2 omega (y - c))
                let derivatives = (0..=8)
                    .map(|nu| {
                        let scale = (2.0 * omega).powi(nu as i32) / 2.0;
                        let constant = if nu == 0 { 0.5 } else { 0.0 };
                        std::sync::Arc::new(move |y: f64| {
                            let u = 2.0 * omega * (y - center);
                            let trig = match nu % 4 {
                                0 => u.cos(),
                                1 => -u.sin(),
                                2 => -u.cos(),
                                _ => u.sin(),
                            };
                            constant + scale * trig
                        }) as crate::function::RealFn
                    })
                    .collect();
                FunctionHandle::with_derivatives(
                    format!("cos^2({omega} (y - {center}))"),
                    derivatives,
                )
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonPositivityWitness {
    pub j: usize,
    pub function: WitnessFunction,
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct RthFamily {
    base: DiscreteOperatorFamily,
    order: usize,
    source: DerivativeSource,
    witness: Option<NonPositivityWitness>,
}

impl RthFamily {
    /// For `r >= 1` a non-positivity witness is searched for at the smallest
    /// positive index of the base family.
    pub fn new(base: DiscreteOperatorFamily, order: usize, source: DerivativeSource) -> Result<Self> {
        if base.domain().is_circle() {
            return Err(Error::InvalidParameter(
                "r-th order families need an interval base".into(),
            ));
        }
        if matches!(source, DerivativeSource::FiniteDifference { .. }) && order > MAX_FD_ORDER {
            return Err(Error::InvalidParameter(format!(
                "finite differences support order at most {MAX_FD_ORDER}"
            )));
        }
        let mut family = Self {
            base,
            order,
            source,
            witness: None,
        };
        if order >= 1 {
            family.witness = family.search_witness()?;
        }
        Ok(family)
    }

    pub fn base(&self) -> &DiscreteOperatorFamily {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn source(&self) -> DerivativeSource {
        self.source
    }

    pub fn witness(&self) -> Option<&NonPositivityWitness> {
        self.witness.as_ref()
    }

    pub fn jet(&self, f: &FunctionHandle, xi: f64) -> Result<TaylorJet> {
        match self.source {
            DerivativeSource::Analytic => TaylorJet::analytic(f, xi, self.order),
            DerivativeSource::FiniteDifference { step } => {
                finite_diff_jet(f, xi, self.order, step, &self.base.domain())
            }
        }
    }

    fn jets(&self, f: &FunctionHandle, nodes: &[f64]) -> Result<Vec<TaylorJet>> {
        if self.source == DerivativeSource::Analytic {
            f.require_order(self.order)?;
        }
        nodes.iter().map(|&xi| self.jet(f, xi)).collect()
    }

    /// Applies `G_j^[r]` with a weight matrix sampled by the base family.
    pub fn apply_sampled(
        &self,
        sampled: &SampledOperator,
        f: &FunctionHandle,
        grid: &Grid,
    ) -> Result<Vec<f64>> {
        if self.order == 0 {
            return Ok(sampled.apply(f));
        }
        let jets = self.jets(f, &sampled.nodes)?;
        Ok(grid
            .points()
            .par_iter()
            .zip(&sampled.rows)
            .map(|(&x, row)| {
                let local: Vec<f64> = jets.iter().map(|jet| gamma_r(jet, x)).collect();
                dot(row, &local)
            })
            .collect())
    }

    pub fn apply_rth(&self, j: usize, f: &FunctionHandle, grid: &Grid) -> Result<Vec<f64>> {
        let sampled = self.base.sample(j, grid)?;
        self.apply_sampled(&sampled, f, grid)
    }

    /// `G_j^[r](f; x)` at a single point.
    pub fn apply_rth_at(&self, j: usize, f: &FunctionHandle, x: f64) -> Result<f64> {
        let nodes = self.base.nodes(j)?;
        let weights = self.base.weights(j, x)?;
        let jets = self.jets(f, &nodes)?;
        let local: Vec<f64> = jets.iter().map(|jet| gamma_r(jet, x)).collect();
        Ok(dot(&weights, &local))
    }

    fn search_witness(&self) -> Result<Option<NonPositivityWitness>> {
        let Domain::Interval { a, b } = self.base.domain() else {
            return Ok(None);
        };
        let j = self.base.j_min().max(1);
        if j > self.base.j_max() {
            return Ok(None);
        }
        let grid = Grid::uniform(self.base.domain(), WITNESS_GRID_POINTS)?;
        let sampled = self.base.sample(j, &grid)?;
        let width = b - a;
        let mut candidates = Vec::new();
        for i in 0..=8 {
            let center = a + width * i as f64 / 8.0;
            for m in 1..=3 {
                candidates.push(WitnessFunction::EvenPower { center, m });
            }
            for q in [0.5, 1.0, 2.0, 4.0] {
                candidates.push(WitnessFunction::CosSquared {
                    center,
                    omega: q * PI / width,
                });
            }
        }
        let mut best: Option<NonPositivityWitness> = None;
        for function in candidates {
            let values = self.apply_sampled(&sampled, &function.handle(), &grid)?;
            for (&x, &value) in grid.points().iter().zip(&values) {
                if best.as_ref().map_or(true, |w| value < w.value) {
                    best = Some(NonPositivityWitness {
                        j,
                        function,
                        x,
                        value,
                    });
                }
            }
        }
        Ok(best.filter(|w| w.value < WITNESS_THRESHOLD))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaTrial {
    pub alpha: f64,
    pub max_all: f64,
    pub max_coarse: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub alpha: f64,
    pub constant: f64,
    /// `max_all / max_coarse - 1` for the chosen exponent.
    pub residual: f64,
    /// Some exponent passed the stability test.
    pub consistent: bool,
    pub trials: Vec<AlphaTrial>,
}

/// Empirical Hölder exponent: for each `alpha` the largest difference
/// quotient over all grid pairs is compared with the same maximum over the
/// every-other-point subgrid. A quotient that keeps growing under refinement
/// (more than 10%) marks the exponent as too large.
pub fn lipschitz_probe(g: &FunctionHandle, grid: &Grid, alphas: &[f64]) -> Result<LipschitzEstimate> {
    if grid.len() < 8 {
        return Err(Error::DegenerateGrid {
            points: grid.len(),
            required: 8,
        });
    }
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(Error::InvalidParameter(
            "Lipschitz exponents must lie in (0, 1]".into(),
        ));
    }
    let domain = grid.domain();
    let points = grid.points();
    let values: Vec<f64> = points.iter().map(|&x| g.eval(x)).collect();
    let max_quotient = |alpha: f64, stride: usize| -> f64 {
        let idx: Vec<usize> = (0..points.len()).step_by(stride).collect();
        idx.par_iter()
            .enumerate()
            .map(|(pos, &i)| {
                idx[pos + 1..]
                    .iter()
                    .map(|&k| {
                        let d = domain.distance(points[i], points[k]);
                        (values[i] - values[k]).abs() / d.powf(alpha)
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    };
    let trials: Vec<AlphaTrial> = alphas
        .iter()
        .map(|&alpha| {
            let max_all = max_quotient(alpha, 1);
            let max_coarse = max_quotient(alpha, 2);
            let stable = max_all.is_finite() && max_all <= 1.1 * max_coarse.max(f64::MIN_POSITIVE)
                || max_all == 0.0;
            AlphaTrial {
                alpha,
                max_all,
                max_coarse,
                stable,
            }
        })
        .collect();
    let chosen = trials
        .iter()
        .filter(|t| t.stable)
        .max_by(|a, b| a.alpha.total_cmp(&b.alpha))
        .or_else(|| trials.iter().min_by(|a, b| a.alpha.total_cmp(&b.alpha)))
        .expect("alphas non-empty")
        .clone();
    let residual = if chosen.max_coarse > 0.0 {
        chosen.max_all / chosen.max_coarse - 1.0
    } else {
        0.0
    };
    Ok(LipschitzEstimate {
        alpha: chosen.alpha,
        constant: chosen.max_all,
        residual,
        consistent: chosen.stable,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::sup_distance;

    #[test]
    fn gamma_examples() {
        let jet = TaylorJet::new(1.0, vec![1.0, 2.0, 2.0]).unwrap();
        assert_eq!(gamma_r(&jet, 3.0), 9.0);
        let constant = TaylorJet::new(0.3, vec![4.5]).unwrap();
        assert_eq!(gamma_r(&constant, 100.0), 4.5);
        let sin = TaylorJet::analytic(&FunctionHandle::sin(), 0.0, 3).unwrap();
        assert!((gamma_r(&sin, 0.5) - (0.5 - 0.125 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn fornberg_central_second_derivative() {
        let w = fornberg_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[1], vec![-0.5, 0.0, 0.5]);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
    }

    #[test]
    fn finite_difference_examples() {
        let sq = FunctionHandle::monomial(2);
        let jet = finite_diff_jet(&sq, 0.5, 2, Some(1e-4), &Domain::UNIT).unwrap();
        assert!((jet.values[1] - 1.0).abs() < 1e-6);
        assert!((jet.values[2] - 2.0).abs() < 1e-6);
        let c = FunctionHandle::constant(3.0);
        let jet = finite_diff_jet(&c, 0.2, 3, None, &Domain::UNIT).unwrap();
        assert!(jet.values[1..].iter().all(|d| d.abs() < 1e-6));
        let s = FunctionHandle::sin();
        let jet = finite_diff_jet(&s, 0.0, 1, Some(1e-5), &Domain::Circle).unwrap();
        assert!((jet.values[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn one_sided_at_boundary_and_out_of_domain() {
        let s = FunctionHandle::sin();
        let jet = finite_diff_jet(&s, 0.0, 2, None, &Domain::UNIT).unwrap();
        assert!((jet.values[1] - 1.0).abs() < 1e-5);
        assert!(jet.values[2].abs() < 1e-5);
        let tiny = Domain::Interval { a: 0.0, b: 1e-3 };
        assert!(matches!(
            finite_diff_jet(&s, 5e-4, 2, Some(1e-3), &tiny),
            Err(Error::StencilOutOfDomain { order: 1, .. })
        ));
    }

    #[test]
    fn order_zero_reduces_to_base() {
        let base = DiscreteOperatorFamily::bernstein(1, 10).unwrap();
        let rf = RthFamily::new(base.clone(), 0, DerivativeSource::Analytic).unwrap();
        let g = Grid::uniform(Domain::UNIT, 257).unwrap();
        let f = FunctionHandle::abs_shift(0.3);
        assert_eq!(rf.apply_rth(10, &f, &g).unwrap(), base.apply(10, &f, &g).unwrap());
        assert!(rf.witness().is_none());
    }

    #[test]
    fn first_order_on_square() {
        let base = DiscreteOperatorFamily::bernstein(1, 100).unwrap();
        let rf = RthFamily::new(base, 1, DerivativeSource::Analytic).unwrap();
        let g = Grid::default_for(Domain::UNIT).unwrap();
        let v = rf.apply_rth(100, &FunctionHandle::monomial(2), &g).unwrap();
        for (x, y) in g.points().iter().zip(&v) {
            assert!((y - (x * x - x * (1.0 - x) / 100.0)).abs() < 1e-12);
        }
        let err = sup_distance(&v, &g.sample(|x| x * x)).unwrap();
        assert!((err - 0.0025).abs() < 1e-9);
        let affine = FunctionHandle::polynomial("3x+2", vec![2.0, 3.0]);
        let v = rf.apply_rth(7, &affine, &g).unwrap();
        for (x, y) in g.points().iter().zip(&v) {
            assert!((y - (3.0 * x + 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn witness_reproduces() {
        let base = DiscreteOperatorFamily::bernstein(10, 10).unwrap();
        for r in 1..=3 {
            let rf = RthFamily::new(base.clone(), r, DerivativeSource::Analytic).unwrap();
            let w = rf.witness().expect("witness").clone();
            let again = rf.apply_rth_at(w.j, &w.function.handle(), w.x).unwrap();
            assert!(again < -1e-9, "r = {r}: {again}");
            assert!((again - w.value).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_base_rejected() {
        let f = DiscreteOperatorFamily::fejer(1, 4, None).unwrap();
        assert!(RthFamily::new(f, 1, DerivativeSource::Analytic).is_err());
    }

    #[test]
    fn missing_derivatives() {
        let base = DiscreteOperatorFamily::bernstein(1, 5).unwrap();
        let rf = RthFamily::new(base, 2, DerivativeSource::Analytic).unwrap();
        let g = Grid::uniform(Domain::UNIT, 9).unwrap();
        assert!(matches!(
            rf.apply_rth(3, &FunctionHandle::kinked_quadratic(), &g),
            Err(Error::MissingDerivatives { have: 1, need: 2, .. })
        ));
    }

    #[test]
    fn lipschitz_examples() {
        let g = Grid::default_for(Domain::UNIT).unwrap();
        let est = lipschitz_probe(&FunctionHandle::monomial(1), &g, &[1.0]).unwrap();
        assert_eq!(est.alpha, 1.0);
        assert!((est.constant - 1.0).abs() < 1e-12);
        let est = lipschitz_probe(&FunctionHandle::sqrt(), &g, &[0.5, 1.0]).unwrap();
        assert_eq!(est.alpha, 0.5);
        assert!((est.constant - 1.0).abs() < 0.05);
        let est = lipschitz_probe(&FunctionHandle::monomial(2), &g, &[1.0]).unwrap();
        assert!((est.constant - 2.0).abs() < 0.02);
        let small = Grid::uniform(Domain::UNIT, 7).unwrap();
        assert!(matches!(
            lipschitz_probe(&FunctionHandle::monomial(1), &small, &[1.0]),
            Err(Error::DegenerateGrid { points: 7, required: 8 })
        ));
    }
}
