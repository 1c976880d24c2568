//! Positive linear operator families in discrete node/weight form
//! `G_j(f; x) = sum_k rho_{j,k}(x) f(x_{j,k})`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::domain::{Domain, Grid};
use crate::error::{Error, Result};
use crate::function::FunctionHandle;
use crate::sequence::Sequence;
use crate::sum::dot;

/// Fejér quadrature points per unit of degree when no size is given.
pub const FEJER_OVERSAMPLING: usize = 8;

/// Explicit nodes with weights tabulated at abscissae; weights between
/// abscissae are interpolated linearly and held constant outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOperator {
    pub nodes: Vec<f64>,
    pub abscissae: Vec<f64>,
    /// `weights[k][i]` is the weight of node `k` at `abscissae[i]`.
    pub weights: Vec<Vec<f64>>,
}

impl TableOperator {
    fn validate(&self, j: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("table operator {j}: {msg}")));
        if self.abscissae.is_empty() {
            return bad("no abscissae".into());
        }
        if self.abscissae.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("abscissae must be strictly increasing".into());
        }
        if self.weights.len() != self.nodes.len() {
            return bad(format!(
                "{} weight rows for {} nodes",
                self.weights.len(),
                self.nodes.len()
            ));
        }
        for row in &self.weights {
            if row.len() != self.abscissae.len() {
                return bad("weight row length differs from abscissae".into());
            }
            if row.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return bad("weights must be nonnegative".into());
            }
        }
        Ok(())
    }

    fn normalized(&self) -> bool {
        (0..self.abscissae.len()).all(|i| {
            let s: f64 = self.weights.iter().map(|row| row[i]).sum();
            (s - 1.0).abs() <= 1e-10
        })
    }

    fn weights_at(&self, x: f64) -> Vec<f64> {
        let a = &self.abscissae;
        let pos = a.partition_point(|&s| s <= x);
        if pos == 0 {
            return self.weights.iter().map(|row| row[0]).collect();
        }
        if pos == a.len() {
            return self.weights.iter().map(|row| row[a.len() - 1]).collect();
        }
        let (lo, hi) = (pos - 1, pos);
        let lambda = (x - a[lo]) / (a[hi] - a[lo]);
        self.weights
            .iter()
            .map(|row| (1.0 - lambda) * row[lo] + lambda * row[hi])
            .collect()
    }
}

#[derive(Clone)]
pub enum FamilyKind {
    /// Degree-`j` Bernstein polynomials on `[0, 1]`.
    Bernstein,
    /// Fejér means of order `j` by trapezoidal quadrature on the circle.
    Fejer { quadrature: Option<usize> },
    Table(Arc<BTreeMap<usize, TableOperator>>),
    /// Weights of `base` multiplied by `1 + eta_j`.
    Scaled {
        base: Box<DiscreteOperatorFamily>,
        eta: Sequence,
    },
}

impl fmt::Debug for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::Bernstein => write!(f, "Bernstein"),
            FamilyKind::Fejer { quadrature } => write!(f, "Fejer({quadrature:?})"),
            FamilyKind::Table(t) => write!(f, "Table({} operators)", t.len()),
            FamilyKind::Scaled { base, eta } => {
                write!(f, "Scaled({}, {})", base.label, eta.label())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperatorFamily {
    label: String,
    domain: Domain,
    j_min: usize,
    j_max: usize,
    /// Index 0 is the zero operator.
    zero_at_origin: bool,
    kind: FamilyKind,
    normalized: bool,
}

impl DiscreteOperatorFamily {
    pub fn bernstein(j_min: usize, j_max: usize) -> Result<Self> {
        check_range(j_min, j_max)?;
        Ok(Self {
            label: "bernstein".into(),
            domain: Domain::UNIT,
            j_min,
            j_max,
            zero_at_origin: false,
            kind: FamilyKind::Bernstein,
            normalized: true,
        })
    }

    /// Bernstein family covering the degrees in `n_list`.
    pub fn bernstein_family(n_list: &[usize]) -> Result<Self> {
        let (lo, hi) = list_range(n_list)?;
        if lo == 0 {
            return Err(Error::InvalidParameter("Bernstein degree must be at least 1".into()));
        }
        Self::bernstein(lo, hi)
    }

    /// `quadrature` fixes the node count for every index; by default index
    /// `n` uses `8 n` nodes.
    pub fn fejer(j_min: usize, j_max: usize, quadrature: Option<usize>) -> Result<Self> {
        check_range(j_min, j_max)?;
        if j_min == 0 {
            return Err(Error::InvalidParameter("Fejér order must be at least 1".into()));
        }
        if let Some(size) = quadrature {
            if size < FEJER_OVERSAMPLING * j_max {
                return Err(Error::InvalidParameter(format!(
                    "Fejér quadrature size {size} is below {FEJER_OVERSAMPLING} * {j_max}"
                )));
            }
        }
        Ok(Self {
            label: "fejer".into(),
            domain: Domain::Circle,
            j_min,
            j_max,
            zero_at_origin: false,
            kind: FamilyKind::Fejer { quadrature },
            normalized: true,
        })
    }

    pub fn fejer_family(n_list: &[usize], quadrature_size: Option<usize>) -> Result<Self> {
        let (lo, hi) = list_range(n_list)?;
        Self::fejer(lo, hi, quadrature_size)
    }

    pub fn table(
        label: impl Into<String>,
        domain: Domain,
        operators: BTreeMap<usize, TableOperator>,
    ) -> Result<Self> {
        domain.validate()?;
        let (&j_min, _) = operators
            .first_key_value()
            .ok_or_else(|| Error::InvalidParameter("table family is empty".into()))?;
        let (&j_max, _) = operators.last_key_value().expect("non-empty");
        if operators.len() != j_max - j_min + 1 {
            return Err(Error::InvalidParameter(
                "table family indices must be contiguous".into(),
            ));
        }
        for (j, op) in &operators {
            op.validate(*j)?;
        }
        let normalized = operators.values().all(TableOperator::normalized);
        Ok(Self {
            label: label.into(),
            domain,
            j_min,
            j_max,
            zero_at_origin: false,
            kind: FamilyKind::Table(Arc::new(operators)),
            normalized,
        })
    }

    /// Adopts `T_0 = 0`: index 0 joins the range as the zero operator.
    pub fn with_zero_at_origin(mut self) -> Self {
        self.zero_at_origin = true;
        self.j_min = 0;
        self
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `(1 + eta_j) G_j`.
    pub fn perturb(&self, eta: Sequence) -> Result<Self> {
        let mut any_nonzero = false;
        for j in self.j_min..=self.j_max {
            let value = eta.value(j);
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::NegativeEta { j, value });
            }
            any_nonzero |= value != 0.0;
        }
        Ok(Self {
            label: format!("(1 + {}) {}", eta.label(), self.label),
            domain: self.domain,
            j_min: self.j_min,
            j_max: self.j_max,
            zero_at_origin: self.zero_at_origin,
            normalized: self.normalized && !any_nonzero,
            kind: FamilyKind::Scaled {
                base: Box::new(self.clone()),
                eta,
            },
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn j_min(&self) -> usize {
        self.j_min
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn zero_at_origin(&self) -> bool {
        self.zero_at_origin
    }

    /// Weights sum to one for every index except a zero operator at 0.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j < self.j_min || j > self.j_max {
            return Err(Error::IndexOutOfRange {
                j,
                min: self.j_min,
                max: self.j_max,
            });
        }
        Ok(())
    }

    fn is_zero_operator(&self, j: usize) -> bool {
        self.zero_at_origin && j == 0
    }

    fn fejer_size(&self, n: usize, quadrature: Option<usize>) -> usize {
        quadrature.unwrap_or(FEJER_OVERSAMPLING * n)
    }

    /// Nodes `x_{j,k}` in ascending `k`.
    pub fn nodes(&self, j: usize) -> Result<Vec<f64>> {
        self.check_index(j)?;
        if self.is_zero_operator(j) {
            return Ok(Vec::new());
        }
        let nodes = match &self.kind {
            FamilyKind::Bernstein => (0..=j).map(|k| k as f64 / j.max(1) as f64).collect(),
            FamilyKind::Fejer { quadrature } => {
                let size = self.fejer_size(j, *quadrature);
                (0..size).map(|i| TAU * i as f64 / size as f64).collect()
            }
            FamilyKind::Table(table) => table[&j].nodes.clone(),
            FamilyKind::Scaled { base, .. } => base.nodes(j)?,
        };
        for &node in &nodes {
            if !self.domain.contains(node) {
                return Err(Error::NodeOutsideDomain { j, node });
            }
        }
        Ok(nodes)
    }

    /// Weights `rho_{j,k}(x)` for every node, ascending `k`.
    pub fn weights(&self, j: usize, x: f64) -> Result<Vec<f64>> {
        self.check_index(j)?;
        if self.is_zero_operator(j) {
            return Ok(Vec::new());
        }
        Ok(match &self.kind {
            FamilyKind::Bernstein => {
                let ln_c: Vec<f64> = (0..=j).map(|k| ln_binomial(j as u64, k as u64)).collect();
                bernstein_row(j, &ln_c, x)
            }
            FamilyKind::Fejer { quadrature } => {
                fejer_row(j, self.fejer_size(j, *quadrature), x)
            }
            FamilyKind::Table(table) => table[&j].weights_at(x),
            FamilyKind::Scaled { base, eta } => {
                let factor = 1.0 + eta.value(j);
                base.weights(j, x)?.into_iter().map(|w| factor * w).collect()
            }
        })
    }

    /// Weight matrix of operator `j` over `grid`, reusable across functions.
    pub fn sample(&self, j: usize, grid: &Grid) -> Result<SampledOperator> {
        if grid.domain() != self.domain {
            return Err(Error::InvalidParameter(format!(
                "grid on {} does not match family domain {}",
                grid.domain().label(),
                self.domain.label()
            )));
        }
        let nodes = self.nodes(j)?;
        let rows: Vec<Vec<f64>> = if self.is_zero_operator(j) {
            vec![Vec::new(); grid.len()]
        } else {
            match &self.kind {
                FamilyKind::Bernstein => {
                    let ln_c: Vec<f64> =
                        (0..=j).map(|k| ln_binomial(j as u64, k as u64)).collect();
                    grid.points()
                        .par_iter()
                        .map(|&x| bernstein_row(j, &ln_c, x))
                        .collect()
                }
                _ => grid
                    .points()
                    .par_iter()
                    .map(|&x| self.weights(j, x))
                    .collect::<Result<_>>()?,
            }
        };
        if let FamilyKind::Fejer { quadrature } = self.root_kind() {
            let size = self.fejer_size(j, *quadrature);
            let base_factor = self.scale_factor(j);
            for row in &rows {
                let defect = (row.iter().sum::<f64>() / base_factor - 1.0).abs();
                if defect > 1e-8 {
                    return Err(Error::QuadratureTooCoarse { n: j, size, defect });
                }
            }
        }
        Ok(SampledOperator { j, nodes, rows })
    }

    fn root_kind(&self) -> &FamilyKind {
        match &self.kind {
            FamilyKind::Scaled { base, .. } => base.root_kind(),
            kind => kind,
        }
    }

    /// Product of all perturbation factors at `j`.
    pub fn scale_factor(&self, j: usize) -> f64 {
        match &self.kind {
            FamilyKind::Scaled { base, eta } => (1.0 + eta.value(j)) * base.scale_factor(j),
            _ => 1.0,
        }
    }

    pub fn apply(&self, j: usize, f: &FunctionHandle, grid: &Grid) -> Result<Vec<f64>> {
        Ok(self.sample(j, grid)?.apply(f))
    }

    /// Most negative weight over the grid (0 when none is negative).
    pub fn min_weight(&self, j: usize, grid: &Grid) -> Result<f64> {
        let s = self.sample(j, grid)?;
        Ok(s.rows
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::min))
    }
}

fn check_range(j_min: usize, j_max: usize) -> Result<()> {
    if j_min > j_max {
        return Err(Error::InvalidParameter(format!(
            "empty index range [{j_min}, {j_max}]"
        )));
    }
    Ok(())
}

fn list_range(n_list: &[usize]) -> Result<(usize, usize)> {
    let lo = n_list.iter().min();
    let hi = n_list.iter().max();
    match (lo, hi) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(Error::InvalidParameter("empty degree list".into())),
    }
}

/// `C(n,k) x^k (1-x)^(n-k)` through logarithms; exact unit vectors at the ends.
fn bernstein_row(n: usize, ln_c: &[f64], x: f64) -> Vec<f64> {
    let mut row = vec![0.0; n + 1];
    if x <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    if x >= 1.0 {
        row[n] = 1.0;
        return row;
    }
    let lx = x.ln();
    let l1x = (-x).ln_1p();
    for (k, w) in row.iter_mut().enumerate() {
        *w = (ln_c[k] + k as f64 * lx + (n - k) as f64 * l1x).exp();
    }
    row
}

/// `F_n(u) = (1/n) (sin(n u / 2) / sin(u / 2))^2`.
pub fn fejer_kernel(n: usize, u: f64) -> f64 {
    let u = (u + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    let half = (u / 2.0).sin();
    if half.abs() < 1e-12 {
        return n as f64;
    }
    let ratio = (n as f64 * u / 2.0).sin() / half;
    ratio * ratio / n as f64
}

fn fejer_row(n: usize, size: usize, x: f64) -> Vec<f64> {
    (0..size)
        .map(|i| fejer_kernel(n, x - TAU * i as f64 / size as f64) / size as f64)
        .collect()
}

/// Weight matrix of one operator over a grid.
#[derive(Debug, Clone)]
pub struct SampledOperator {
    pub j: usize,
    pub nodes: Vec<f64>,
    /// `rows[i][k] = rho_{j,k}(grid_i)`.
    pub rows: Vec<Vec<f64>>,
}

impl SampledOperator {
    pub fn apply(&self, f: &FunctionHandle) -> Vec<f64> {
        let values: Vec<f64> = self.nodes.iter().map(|&y| f.eval(y)).collect();
        self.apply_values(&values)
    }

    /// `values[k]` stands for `f(x_{j,k})`.
    pub fn apply_values(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.nodes.len());
        self.rows.par_iter().map(|row| dot(row, values)).collect()
    }

    /// `G_j(1)` at every grid point.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::sup_distance;

    fn unit_grid(m: usize) -> Grid {
        Grid::uniform(Domain::UNIT, m).unwrap()
    }

    #[test]
    fn bernstein_degree_one() {
        let b = DiscreteOperatorFamily::bernstein(1, 1).unwrap();
        assert_eq!(b.nodes(1).unwrap(), vec![0.0, 1.0]);
        let w = b.weights(1, 0.25).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bernstein_symmetric_peak() {
        let b = DiscreteOperatorFamily::bernstein(10, 10).unwrap();
        let w = b.weights(10, 0.5).unwrap();
        for k in 0..=10 {
            assert!((w[k] - w[10 - k]).abs() < 1e-15);
        }
        assert!((w[5] - 0.24609375).abs() < 1e-14);
    }

    #[test]
    fn bernstein_moments() {
        let g = unit_grid(1025);
        let b = DiscreteOperatorFamily::bernstein(1, 100).unwrap();
        let e1 = b.apply(10, &FunctionHandle::monomial(1), &g).unwrap();
        for (x, v) in g.points().iter().zip(&e1) {
            assert!((v - x).abs() < 1e-12);
        }
        let e2 = b.apply(100, &FunctionHandle::monomial(2), &g).unwrap();
        for (x, v) in g.points().iter().zip(&e2) {
            assert!((v - (x * x + x * (1.0 - x) / 100.0)).abs() < 1e-12);
        }
        let exact = g.sample(|x| x * x);
        assert!((sup_distance(&e2, &exact).unwrap() - 0.0025).abs() < 1e-9);
    }

    #[test]
    fn bernstein_row_sums() {
        let g = unit_grid(101);
        let b = DiscreteOperatorFamily::bernstein(50, 50).unwrap();
        for s in b.sample(50, &g).unwrap().row_sums() {
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fejer_cos_and_mean() {
        let g = Grid::default_for(Domain::Circle).unwrap();
        let f = DiscreteOperatorFamily::fejer(1, 64, None).unwrap();
        let c = f.apply(50, &FunctionHandle::cos(), &g).unwrap();
        let err = sup_distance(&c, &g.sample(f64::cos)).unwrap();
        assert!((err - 0.02).abs() < 1e-9);
        let one = f.apply(1, &FunctionHandle::constant(1.0), &g).unwrap();
        assert!(one.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fejer_quadrature_guard() {
        assert!(matches!(
            DiscreteOperatorFamily::fejer(1, 64, Some(100)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn index_out_of_range() {
        let b = DiscreteOperatorFamily::bernstein(1, 5).unwrap();
        assert_eq!(
            b.nodes(6).unwrap_err(),
            Error::IndexOutOfRange { j: 6, min: 1, max: 5 }
        );
    }

    #[test]
    fn table_interpolates_and_checks_nodes() {
        let op = TableOperator {
            nodes: vec![0.0, 1.0],
            abscissae: vec![0.0, 1.0],
            weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let fam = DiscreteOperatorFamily::table("t", Domain::UNIT, BTreeMap::from([(1, op.clone())]))
            .unwrap();
        assert!(fam.is_normalized());
        let g = unit_grid(5);
        let v = fam.apply(1, &FunctionHandle::monomial(1), &g).unwrap();
        assert_eq!(v, g.points().to_vec());

        let mut outside = op;
        outside.nodes[1] = 1.5;
        let fam = DiscreteOperatorFamily::table("t", Domain::UNIT, BTreeMap::from([(1, outside)]))
            .unwrap();
        assert!(matches!(
            fam.nodes(1),
            Err(Error::NodeOutsideDomain { j: 1, .. })
        ));
    }

    #[test]
    fn perturbation_scales_weights() {
        let g = unit_grid(33);
        let b = DiscreteOperatorFamily::bernstein(0, 20)
            .unwrap()
            .with_zero_at_origin();
        let p = b.perturb(Sequence::even_index_ramp()).unwrap();
        assert!(!p.is_normalized());
        let one = FunctionHandle::constant(1.0);
        assert!(p.apply(4, &one, &g).unwrap().iter().all(|v| (v - 5.0).abs() < 1e-12));
        assert!(p.apply(7, &one, &g).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(p.apply(0, &one, &g).unwrap().iter().all(|&v| v == 0.0));

        let unchanged = b.perturb(Sequence::constant(0.0)).unwrap();
        assert!(unchanged.is_normalized());
        assert_eq!(
            unchanged.apply(9, &FunctionHandle::sin(), &g).unwrap(),
            b.apply(9, &FunctionHandle::sin(), &g).unwrap()
        );

        let negative = Sequence::new("neg", crate::sequence::BoundProfile::UNIT, |j| {
            if j == 3 { -0.5 } else { 0.0 }
        });
        assert_eq!(
            b.perturb(negative).unwrap_err(),
            Error::NegativeEta { j: 3, value: -0.5 }
        );
    }
}
