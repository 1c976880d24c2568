//! Korovkin systems and convergence experiments.
//!
//! A system pairs test functions `psi_l` with coefficient functions `g_l` so
//! that `Q_x(y) = sum_l g_l(x) psi_l(y)` is nonnegative and vanishes only on
//! the diagonal. Experiments measure sup-norm error curves of an operator
//! family on the test functions and on targets, then test each curve for
//! P-statistical convergence to zero.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{pstat_test, validate_epsilons, PStatVerdict};
use crate::domain::{sup_distance, sup_norm, Domain, Grid};
use crate::error::{Error, Result};
use crate::function::FunctionHandle;
use crate::operators::{DiscreteOperatorFamily, SampledOperator};
use crate::rth::{lipschitz_probe, LipschitzEstimate, NonPositivityWitness, RthFamily};
use crate::sequence::{BoundProfile, IndexSet, Sequence, SequenceShape};
use crate::summability::{EvalSchedule, PowerSeriesMethod};
use crate::sum::dot;

pub const DEFAULT_EPSILONS: [f64; 3] = [0.2, 0.1, 0.05];
pub const DEFAULT_ALPHAS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
const POSITIVITY_TOL: f64 = 1e-10;
const DIAGONAL_TOL: f64 = 1e-10;
/// Separation radii as fractions of the domain diameter.
const DELTA_FRACTIONS: [f64; 3] = [0.05, 0.1, 0.25];

pub const EXTENSION_NOTE: &str = "error curves are held constant between sampled indices, \
take their first value below the first index and their last value beyond the last index";

#[derive(Debug, Clone)]
pub struct KorovkinSystem {
    label: String,
    domain: Domain,
    tests: Vec<FunctionHandle>,
    coefficients: Vec<FunctionHandle>,
}

impl KorovkinSystem {
    pub fn new(
        label: impl Into<String>,
        domain: Domain,
        tests: Vec<FunctionHandle>,
        coefficients: Vec<FunctionHandle>,
    ) -> Result<Self> {
        domain.validate()?;
        if tests.is_empty() || tests.len() != coefficients.len() {
            return Err(Error::InvalidParameter(format!(
                "a system needs as many coefficients as test functions (got {} and {})",
                tests.len(),
                coefficients.len()
            )));
        }
        Ok(Self {
            label: label.into(),
            domain,
            tests,
            coefficients,
        })
    }

    /// `{1, y, y^2}` with `g = (x^2, -2x, 1)`, so `Q_x(y) = (y - x)^2`.
    pub fn algebraic(domain: Domain) -> Result<Self> {
        if domain.is_circle() {
            return Err(Error::InvalidParameter(
                "the algebraic system lives on an interval".into(),
            ));
        }
        Self::new(
            "algebraic",
            domain,
            vec![
                FunctionHandle::monomial(0),
                FunctionHandle::monomial(1),
                FunctionHandle::monomial(2),
            ],
            vec![
                FunctionHandle::monomial(2),
                FunctionHandle::polynomial("-2x", vec![0.0, -2.0]),
                FunctionHandle::constant(1.0),
            ],
        )
    }

    /// `{1, cos, sin}` with `g = (1, -cos x, -sin x)`, so `Q_x(y) = 1 - cos(y - x)`.
    pub fn trig() -> Self {
        let neg = |f: FunctionHandle, label: &str| {
            FunctionHandle::linear_combination(label, &[(-1.0, f)])
        };
        Self::new(
            "trig",
            Domain::Circle,
            vec![
                FunctionHandle::constant(1.0).periodic(),
                FunctionHandle::cos(),
                FunctionHandle::sin(),
            ],
            vec![
                FunctionHandle::constant(1.0).periodic(),
                neg(FunctionHandle::cos(), "-cos"),
                neg(FunctionHandle::sin(), "-sin"),
            ],
        )
        .expect("trig system is well formed")
    }

    /// Multiplies every coefficient function by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            label: format!("{c} * {}", self.label),
            domain: self.domain,
            tests: self.tests.clone(),
            coefficients: self
                .coefficients
                .iter()
                .map(|g| FunctionHandle::linear_combination(g.label(), &[(c, g.clone())]))
                .collect(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dimension(&self) -> usize {
        self.tests.len()
    }

    pub fn tests(&self) -> &[FunctionHandle] {
        &self.tests
    }

    pub fn coefficients(&self) -> &[FunctionHandle] {
        &self.coefficients
    }

    fn g_at(&self, x: f64) -> Vec<f64> {
        self.coefficients.iter().map(|g| g.eval(x)).collect()
    }

    pub fn q(&self, x: f64, y: f64) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.tests)
            .map(|(g, psi)| g.eval(x) * psi.eval(y))
            .sum()
    }

    /// `y -> Q_x(y)` with the derivatives the test functions share.
    pub fn q_function(&self, x: f64) -> FunctionHandle {
        let terms: Vec<(f64, FunctionHandle)> = self
            .coefficients
            .iter()
            .zip(&self.tests)
            .map(|(g, psi)| (g.eval(x), psi.clone()))
            .collect();
        FunctionHandle::linear_combination(format!("Q_{x}"), &terms)
    }

    fn default_deltas(&self) -> Vec<f64> {
        let diameter = match self.domain {
            Domain::Interval { a, b } => b - a,
            Domain::Circle => PI,
        };
        DELTA_FRACTIONS.iter().map(|f| f * diameter).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationMargin {
    pub delta: f64,
    /// Minimum of `Q_x(y)` over grid pairs at distance at least `delta`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemReport {
    pub system: String,
    /// Smallest `Q_x(y)` over the grid.
    pub worst_positivity: f64,
    pub positivity_ok: bool,
    pub max_diagonal: f64,
    pub diagonal_ok: bool,
    pub margins: Vec<SeparationMargin>,
    pub separation_ok: bool,
    pub passed: bool,
}

/// Checks positivity, the vanishing diagonal and separation on `grid`.
/// Violations are reported, not raised.
pub fn check_system(system: &KorovkinSystem, grid: &Grid, deltas: &[f64]) -> Result<SystemReport> {
    if grid.domain() != system.domain {
        return Err(Error::InvalidParameter(format!(
            "grid on {} does not match system domain {}",
            grid.domain().label(),
            system.domain.label()
        )));
    }
    if let Some(bad) = deltas.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::InvalidParameter(format!("delta {bad} must be positive")));
    }
    let domain = grid.domain();
    let pts = grid.points();
    let psi: Vec<Vec<f64>> = system.tests.iter().map(|p| grid.sample(|y| p.eval(y))).collect();
    let rows: Vec<(f64, f64, Vec<f64>)> = pts
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let g = system.g_at(x);
            let mut worst = f64::INFINITY;
            let mut margins = vec![f64::INFINITY; deltas.len()];
            let mut diagonal = 0.0;
            for (k, &y) in pts.iter().enumerate() {
                let q: f64 = g.iter().zip(&psi).map(|(gl, p)| gl * p[k]).sum();
                worst = worst.min(q);
                if k == i {
                    diagonal = q.abs();
                }
                let d = domain.distance(x, y);
                for (m, &delta) in margins.iter_mut().zip(deltas) {
                    if d >= delta {
                        *m = m.min(q);
                    }
                }
            }
            (worst, diagonal, margins)
        })
        .collect();
    let worst_positivity = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max_diagonal = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let margins: Vec<SeparationMargin> = deltas
        .iter()
        .enumerate()
        .map(|(m, &delta)| SeparationMargin {
            delta,
            margin: rows.iter().map(|r| r.2[m]).fold(f64::INFINITY, f64::min),
        })
        .collect();
    let positivity_ok = worst_positivity >= -POSITIVITY_TOL;
    let diagonal_ok = max_diagonal <= DIAGONAL_TOL;
    // a delta with no qualifying pairs has margin +inf and passes vacuously
    let separation_ok = margins.iter().all(|m| m.margin > 0.0);
    Ok(SystemReport {
        system: system.label.clone(),
        worst_positivity,
        positivity_ok,
        max_diagonal,
        diagonal_ok,
        margins,
        separation_ok,
        passed: positivity_ok && diagonal_ok && separation_ok,
    })
}

#[derive(Debug, Clone)]
pub struct ZFunction {
    pub function: FunctionHandle,
    pub min: f64,
    pub argmin: f64,
}

/// `Z(y) = Q_s(y) + Q_t(y)` with its minimum over `grid`.
pub fn z_function(system: &KorovkinSystem, s: f64, t: f64, grid: &Grid) -> Result<ZFunction> {
    if system.domain.distance(s, t) == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let function = FunctionHandle::linear_combination(
        format!("Z[{s}, {t}]"),
        &[(1.0, system.q_function(s)), (1.0, system.q_function(t))],
    );
    let (argmin, min) = grid
        .points()
        .iter()
        .map(|&y| (y, function.eval(y)))
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let function = if system.domain.is_circle() {
        function.periodic()
    } else {
        function
    };
    Ok(ZFunction {
        function,
        min,
        argmin,
    })
}

fn check_domains(family: &DiscreteOperatorFamily, system: &KorovkinSystem, grid: &Grid) -> Result<()> {
    if family.domain() != system.domain || grid.domain() != system.domain {
        return Err(Error::InvalidParameter(format!(
            "family on {}, system on {} and grid on {} must share a domain",
            family.domain().label(),
            system.domain.label(),
            grid.domain().label()
        )));
    }
    Ok(())
}

fn q_diagonal_sampled(sampled: &SampledOperator, system: &KorovkinSystem, grid: &Grid) -> f64 {
    let psi_nodes: Vec<Vec<f64>> = system
        .tests
        .iter()
        .map(|p| sampled.nodes.iter().map(|&y| p.eval(y)).collect())
        .collect();
    grid.points()
        .par_iter()
        .zip(&sampled.rows)
        .map(|(&x, row)| {
            if row.is_empty() {
                return 0.0;
            }
            let g = system.g_at(x);
            let q: Vec<f64> = (0..sampled.nodes.len())
                .map(|k| g.iter().zip(&psi_nodes).map(|(gl, p)| gl * p[k]).sum())
                .collect();
            dot(row, &q).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// `max_x |T_j(Q_x; x)|` over the grid.
pub fn q_diagonal(
    family: &DiscreteOperatorFamily,
    system: &KorovkinSystem,
    j: usize,
    grid: &Grid,
) -> Result<f64> {
    check_domains(family, system, grid)?;
    let sampled = family.sample(j, grid)?;
    Ok(q_diagonal_sampled(&sampled, system, grid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessReport {
    /// `||T_j(1)||` on the grid.
    pub per_j: Vec<CurvePoint>,
    pub sup: f64,
    pub argmax: usize,
    pub set: Option<String>,
    /// Supremum over the sampled indices that belong to `set`.
    pub sup_on_set: Option<f64>,
}

fn norm_of_one(sampled: &SampledOperator) -> f64 {
    sup_norm(&sampled.row_sums())
}

fn boundedness_report(per_j: Vec<CurvePoint>, set: Option<&IndexSet>) -> BoundednessReport {
    let (argmax, sup) = per_j
        .iter()
        .fold((0, 0.0), |best, p| if p.value > best.1 { (p.j, p.value) } else { best });
    let sup_on_set = set.map(|e| {
        per_j
            .iter()
            .filter(|p| e.contains(p.j))
            .map(|p| p.value)
            .fold(0.0, f64::max)
    });
    BoundednessReport {
        per_j,
        sup,
        argmax,
        set: set.map(|e| e.label().to_string()),
        sup_on_set,
    }
}

/// `||T_j(1)||` over `j_range`, optionally restricted to an index set.
pub fn boundedness_probe(
    family: &DiscreteOperatorFamily,
    grid: &Grid,
    j_range: &JRange,
    set: Option<&IndexSet>,
) -> Result<BoundednessReport> {
    let per_j = j_range
        .indices()?
        .into_iter()
        .map(|j| {
            Ok(CurvePoint {
                j,
                value: norm_of_one(&family.sample(j, grid)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(boundedness_report(per_j, set))
}

/// `omega(f, delta)`: largest `|f(x) - f(y)|` over grid pairs at distance at most `delta`.
pub fn modulus(f: &FunctionHandle, grid: &Grid, delta: f64) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::DegenerateGrid {
            points: grid.len(),
            required: 2,
        });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} must be positive")));
    }
    let domain = grid.domain();
    let pts = grid.points();
    let values: Vec<f64> = pts.iter().map(|&x| f.eval(x)).collect();
    let reach = delta * (1.0 + 1e-12);
    Ok((0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut best: f64 = 0.0;
            for k in i + 1..pts.len() {
                if domain.distance(pts[i], pts[k]) <= reach {
                    best = best.max((values[i] - values[k]).abs());
                } else if !domain.is_circle() {
                    break;
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max))
}

/// Sampled operator indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum JRange {
    /// `start, 2 start, 4 start, ...` up to and including `max`.
    Geometric { start: usize, max: usize },
    Linear { start: usize, end: usize, step: usize },
    List { values: Vec<usize> },
}

impl JRange {
    pub fn indices(&self) -> Result<Vec<usize>> {
        let mut out = match self {
            JRange::Geometric { start, max } => {
                if *start == 0 || start > max {
                    return Err(Error::InvalidParameter(format!(
                        "geometric range needs 0 < start <= max, got {start}..{max}"
                    )));
                }
                let mut v = Vec::new();
                let mut j = *start;
                while j < *max {
                    v.push(j);
                    j = j.saturating_mul(2);
                }
                v.push(*max);
                v
            }
            JRange::Linear { start, end, step } => {
                if *step == 0 || start > end {
                    return Err(Error::InvalidParameter(format!(
                        "linear range needs step > 0 and start <= end, got {start}..{end} by {step}"
                    )));
                }
                (*start..=*end).step_by(*step).collect()
            }
            JRange::List { values } => values.clone(),
        };
        out.sort_unstable();
        out.dedup();
        if out.is_empty() {
            return Err(Error::InvalidParameter("empty index list".into()));
        }
        Ok(out)
    }
}

/// Step-hold sequence through the sampled points with a constant tail.
pub fn curve_sequence(label: &str, points: &[CurvePoint]) -> Sequence {
    assert!(!points.is_empty(), "empty curve");
    let js: Arc<[usize]> = points.iter().map(|p| p.j).collect();
    let values: Arc<[f64]> = points.iter().map(|p| p.value).collect();
    let last = *points.last().expect("non-empty");
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Sequence::new(label, BoundProfile::new(scale, 0.0), move |j| {
        let idx = js.partition_point(|&k| k <= j);
        values[idx.saturating_sub(1)]
    })
    .with_shape(SequenceShape::EventuallyConstant {
        from: last.j,
        value: last.value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveRole {
    TestFunction,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport {
    pub label: String,
    pub role: CurveRole,
    pub points: Vec<CurvePoint>,
    /// Largest sampled error, the classical (non-statistical) view.
    pub classical_sup: f64,
    /// The sequence is held at `tail_value` from `tail_from` on.
    pub tail_from: usize,
    pub tail_value: f64,
    pub verdict: PStatVerdict,
}

impl CurveReport {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].value < w[0].value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub method: String,
    pub family: String,
    pub system: String,
    pub order: usize,
    pub indices: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub system_check: SystemReport,
    pub test_curves: Vec<CurveReport>,
    pub target_curves: Vec<CurveReport>,
    /// `max_x |T_j(Q_x; x)|` per sampled index, for the base family.
    pub q_diagonal: Vec<CurvePoint>,
    pub boundedness: BoundednessReport,
    pub conclusion: bool,
    pub extension: String,
}

impl ExperimentReport {
    pub fn conclusion_consistent(&self) -> bool {
        let all = self
            .test_curves
            .iter()
            .chain(&self.target_curves)
            .all(|c| c.verdict.verdict);
        self.conclusion == all
    }

    pub fn curve(&self, label: &str) -> Option<&CurveReport> {
        self.test_curves
            .iter()
            .chain(&self.target_curves)
            .find(|c| c.label == label)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    pub j_range: JRange,
    pub epsilons: Vec<f64>,
    /// Index set for the restricted boundedness supremum.
    pub boundedness_set: Option<IndexSet>,
    /// Adds `Z = Q_s + Q_t` as an extra target.
    pub z_points: Option<(f64, f64)>,
}

impl ExperimentSettings {
    pub fn new(j_range: JRange) -> Self {
        Self {
            j_range,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            boundedness_set: None,
            z_points: None,
        }
    }
}

pub fn korovkin_experiment(
    method: &PowerSeriesMethod,
    family: &DiscreteOperatorFamily,
    system: &KorovkinSystem,
    targets: &[FunctionHandle],
    schedule: &EvalSchedule,
    grid: &Grid,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    run_experiment(method, family, None, system, targets, schedule, grid, settings)
}

#[allow(clippy::too_many_arguments)]
fn run_experiment(
    method: &PowerSeriesMethod,
    family: &DiscreteOperatorFamily,
    rth: Option<&RthFamily>,
    system: &KorovkinSystem,
    targets: &[FunctionHandle],
    schedule: &EvalSchedule,
    grid: &Grid,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    check_domains(family, system, grid)?;
    validate_epsilons(&settings.epsilons)?;
    schedule.validate_for(method)?;
    let system_check = check_system(system, grid, &system.default_deltas())?;
    if !system_check.passed {
        return Err(Error::SystemCheckFailed(format!(
            "{}: worst Q {:e}, diagonal {:e}, separation {}",
            system.label, system_check.worst_positivity, system_check.max_diagonal,
            system_check.separation_ok
        )));
    }
    let mut targets = targets.to_vec();
    if let Some((s, t)) = settings.z_points {
        targets.push(z_function(system, s, t, grid)?.function);
    }
    for f in &targets {
        f.check_on(&grid.domain())?;
    }
    let indices = settings.j_range.indices()?;
    let functions: Vec<&FunctionHandle> = system.tests.iter().chain(&targets).collect();
    let exact: Vec<Vec<f64>> = functions.iter().map(|f| grid.sample(|x| f.eval(x))).collect();

    let mut errors = vec![Vec::with_capacity(indices.len()); functions.len()];
    let mut q_diag = Vec::with_capacity(indices.len());
    let mut norms = Vec::with_capacity(indices.len());
    // one index at a time: Fejér weight matrices are large
    for &j in &indices {
        let sampled = family.sample(j, grid)?;
        for (slot, (f, truth)) in errors.iter_mut().zip(functions.iter().zip(&exact)) {
            let image = match rth {
                Some(rf) => rf.apply_sampled(&sampled, f, grid)?,
                None => sampled.apply(f),
            };
            slot.push(CurvePoint {
                j,
                value: sup_distance(&image, truth)?,
            });
        }
        q_diag.push(CurvePoint {
            j,
            value: q_diagonal_sampled(&sampled, system, grid),
        });
        norms.push(CurvePoint {
            j,
            value: norm_of_one(&sampled),
        });
    }

    let curves = functions
        .iter()
        .zip(errors)
        .enumerate()
        .map(|(i, (f, points))| {
            let role = if i < system.dimension() {
                CurveRole::TestFunction
            } else {
                CurveRole::Target
            };
            let label = f.label().to_string();
            let seq = curve_sequence(&label, &points);
            let verdict = pstat_test(method, &seq, 0.0, &settings.epsilons, schedule)?;
            let last = *points.last().expect("non-empty range");
            Ok(CurveReport {
                label,
                role,
                classical_sup: points.iter().map(|p| p.value).fold(0.0, f64::max),
                tail_from: last.j,
                tail_value: last.value,
                points,
                verdict,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (test_curves, target_curves): (Vec<_>, Vec<_>) = curves
        .into_iter()
        .partition(|c| c.role == CurveRole::TestFunction);
    let conclusion = test_curves
        .iter()
        .chain(&target_curves)
        .all(|c| c.verdict.verdict);
    Ok(ExperimentReport {
        method: method.name().to_string(),
        family: family.label().to_string(),
        system: system.label.clone(),
        order: rth.map_or(0, |rf| rf.order()),
        indices,
        epsilons: settings.epsilons.clone(),
        system_check,
        test_curves,
        target_curves,
        q_diagonal: q_diag,
        boundedness: boundedness_report(norms, settings.boundedness_set.as_ref()),
        conclusion,
        extension: EXTENSION_NOTE.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzRecord {
    pub target: String,
    pub estimate: LipschitzEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RthReport {
    /// The base family with the algebraic system and no targets.
    pub base_check: ExperimentReport,
    pub experiment: ExperimentReport,
    /// Empirical Hölder data for each target's `r`-th derivative.
    pub lipschitz: Vec<LipschitzRecord>,
    pub witness: Option<NonPositivityWitness>,
}

/// Korovkin experiment with `G_j^[r]` in place of the base operators.
pub fn rth_experiment(
    method: &PowerSeriesMethod,
    rf: &RthFamily,
    targets: &[FunctionHandle],
    schedule: &EvalSchedule,
    grid: &Grid,
    settings: &ExperimentSettings,
) -> Result<RthReport> {
    let base = rf.base();
    let system = KorovkinSystem::algebraic(base.domain())?;
    let plain = ExperimentSettings {
        z_points: None,
        ..settings.clone()
    };
    let base_check = korovkin_experiment(method, base, &system, &[], schedule, grid, &plain)?;
    if !base_check.conclusion {
        return Err(Error::BaseConditionFailed(format!(
            "{} does not converge on 1, x, x^2 under {}",
            base.label(),
            method.name()
        )));
    }
    let r = rf.order();
    let lipschitz = targets
        .iter()
        .map(|f| {
            f.require_order(r)?;
            let (f_r, label) = (f.clone(), format!("d{r} {}", f.label()));
            let derivative = FunctionHandle::new(label, move |x| {
                f_r.derivative(r, x).expect("order checked")
            });
            Ok(LipschitzRecord {
                target: f.label().to_string(),
                estimate: lipschitz_probe(&derivative, grid, &DEFAULT_ALPHAS)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let experiment = run_experiment(
        method,
        base,
        (r > 0).then_some(rf),
        &system,
        targets,
        schedule,
        grid,
        settings,
    )?;
    Ok(RthReport {
        base_check,
        experiment,
        lipschitz,
        witness: rf.witness().cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rth::DerivativeSource;
    use std::f64::consts::TAU;

    #[test]
    fn algebraic_system_passes() {
        let sys = KorovkinSystem::algebraic(Domain::UNIT).unwrap();
        let g = Grid::uniform(Domain::UNIT, 1025).unwrap();
        let rep = check_system(&sys, &g, &[0.1]).unwrap();
        assert!(rep.passed);
        assert!((rep.margins[0].margin - 0.01).abs() < 2e-4);
        assert!((sys.q(0.3, 0.7) - 0.16).abs() < 1e-15);
    }

    #[test]
    fn trig_system_passes() {
        let sys = KorovkinSystem::trig();
        let g = Grid::uniform(Domain::Circle, 256).unwrap();
        let rep = check_system(&sys, &g, &[PI / 2.0]).unwrap();
        assert!(rep.passed);
        assert!((rep.margins[0].margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn broken_system_reports_violation() {
        let sys = KorovkinSystem::new(
            "broken",
            Domain::UNIT,
            vec![FunctionHandle::monomial(0), FunctionHandle::monomial(1)],
            vec![FunctionHandle::constant(-1.0), FunctionHandle::constant(0.0)],
        )
        .unwrap();
        let g = Grid::uniform(Domain::UNIT, 33).unwrap();
        let rep = check_system(&sys, &g, &[0.1]).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.worst_positivity, -1.0);
    }

    #[test]
    fn z_functions() {
        let sys = KorovkinSystem::algebraic(Domain::UNIT).unwrap();
        let g = Grid::uniform(Domain::UNIT, 1025).unwrap();
        let z = z_function(&sys, 0.0, 1.0, &g).unwrap();
        assert!((z.min - 0.5).abs() < 1e-15);
        assert_eq!(z.argmin, 0.5);
        let trig = KorovkinSystem::trig();
        let gc = Grid::uniform(Domain::Circle, 64).unwrap();
        let z = z_function(&trig, 0.0, PI, &gc).unwrap();
        for &y in gc.points() {
            assert!((z.function.eval(y) - 2.0).abs() < 1e-14);
        }
        assert!(matches!(
            z_function(&trig, 0.0, TAU, &gc),
            Err(Error::CoincidentPoints)
        ));
    }

    #[test]
    fn q_diagonal_values() {
        let sys = KorovkinSystem::algebraic(Domain::UNIT).unwrap();
        let g = Grid::default_for(Domain::UNIT).unwrap();
        for n in [10, 100, 1000] {
            let fam = DiscreteOperatorFamily::bernstein(1, n).unwrap();
            let q = q_diagonal(&fam, &sys, n, &g).unwrap();
            assert!((q - 0.25 / n as f64).abs() < 1e-9, "{n}: {q}");
        }
        let fej = DiscreteOperatorFamily::fejer(1, 64, None).unwrap();
        let gc = Grid::default_for(Domain::Circle).unwrap();
        let q = q_diagonal(&fej, &KorovkinSystem::trig(), 64, &gc).unwrap();
        assert!((q - 1.0 / 64.0).abs() < 1e-8, "{q}");
    }

    #[test]
    fn modulus_examples() {
        let g = Grid::default_for(Domain::UNIT).unwrap();
        let m = modulus(&FunctionHandle::monomial(1), &g, 0.1).unwrap();
        assert!((m - 0.1).abs() <= 1.0 / 1024.0);
        let m = modulus(&FunctionHandle::monomial(2), &g, 0.1).unwrap();
        assert!((m - 0.19).abs() <= 2.0 / 1025.0);
        assert_eq!(modulus(&FunctionHandle::constant(2.0), &g, 0.1).unwrap(), 0.0);
        assert!(modulus(&FunctionHandle::monomial(1), &g, 0.0).is_err());
    }

    #[test]
    fn ranges() {
        let geo = JRange::Geometric { start: 1, max: 512 }.indices().unwrap();
        assert_eq!(geo.len(), 10);
        assert_eq!(*geo.last().unwrap(), 512);
        assert_eq!(
            JRange::Geometric { start: 1, max: 100 }.indices().unwrap().last(),
            Some(&100)
        );
        let lin = JRange::Linear { start: 0, end: 101, step: 1 }.indices().unwrap();
        assert_eq!(lin.len(), 102);
        assert!(JRange::List { values: vec![] }.indices().is_err());
    }

    #[test]
    fn step_hold_curve() {
        let pts = [
            CurvePoint { j: 2, value: 5.0 },
            CurvePoint { j: 4, value: 3.0 },
            CurvePoint { j: 8, value: 1.0 },
        ];
        let s = curve_sequence("c", &pts);
        let v: Vec<f64> = (0..10).map(|j| s.value(j)).collect();
        assert_eq!(v, vec![5.0, 5.0, 5.0, 5.0, 3.0, 3.0, 3.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn boundedness_of_perturbed_family() {
        let base = DiscreteOperatorFamily::bernstein(1, 100).unwrap().with_zero_at_origin();
        let fam = base.perturb(Sequence::even_index_ramp()).unwrap();
        let g = Grid::uniform(Domain::UNIT, 65).unwrap();
        let range = JRange::Linear { start: 0, end: 100, step: 1 };
        let rep = boundedness_probe(&fam, &g, &range, Some(&IndexSet::odds())).unwrap();
        assert!((rep.sup - 101.0).abs() < 1e-10);
        assert_eq!(rep.argmax, 100);
        assert!((rep.sup_on_set.unwrap() - 1.0).abs() < 1e-10);
        let plain = boundedness_probe(&base, &g, &range, None).unwrap();
        assert!(plain.per_j[1..].iter().all(|p| (p.value - 1.0).abs() < 1e-10));
    }

    #[test]
    fn bernstein_abel_experiment() {
        let method = PowerSeriesMethod::abel();
        let schedule = EvalSchedule::default_for(&method);
        let fam = DiscreteOperatorFamily::bernstein(1, 512).unwrap();
        let sys = KorovkinSystem::algebraic(Domain::UNIT).unwrap();
        let grid = Grid::default_for(Domain::UNIT).unwrap();
        let settings = ExperimentSettings::new(JRange::Geometric { start: 1, max: 512 });
        let rep = korovkin_experiment(
            &method,
            &fam,
            &sys,
            &[FunctionHandle::abs_shift(0.5)],
            &schedule,
            &grid,
            &settings,
        )
        .unwrap();
        assert!(rep.conclusion);
        assert!(rep.conclusion_consistent());
        assert!(rep.target_curves[0].strictly_decreasing());
    }

    #[test]
    fn rth_order_zero_matches_plain_experiment() {
        let method = PowerSeriesMethod::abel();
        let schedule = EvalSchedule::default_for(&method);
        let base = DiscreteOperatorFamily::bernstein(1, 64).unwrap();
        let grid = Grid::uniform(Domain::UNIT, 129).unwrap();
        let settings = ExperimentSettings::new(JRange::Geometric { start: 1, max: 64 });
        let targets = [FunctionHandle::kinked_quadratic()];
        let rf = RthFamily::new(base.clone(), 0, DerivativeSource::Analytic).unwrap();
        let rth = rth_experiment(&method, &rf, &targets, &schedule, &grid, &settings).unwrap();
        let sys = KorovkinSystem::algebraic(Domain::UNIT).unwrap();
        let plain =
            korovkin_experiment(&method, &base, &sys, &targets, &schedule, &grid, &settings)
                .unwrap();
        assert_eq!(rth.experiment, plain);
    }

    #[test]
    fn rth_first_order_square() {
        let method = PowerSeriesMethod::abel();
        let schedule = EvalSchedule::default_for(&method);
        let base = DiscreteOperatorFamily::bernstein(1, 256).unwrap();
        let grid = Grid::default_for(Domain::UNIT).unwrap();
        let settings = ExperimentSettings::new(JRange::Geometric { start: 1, max: 256 });
        let rf = RthFamily::new(base, 1, DerivativeSource::Analytic).unwrap();
        let targets = [FunctionHandle::monomial(2), FunctionHandle::kinked_quadratic()];
        let rep = rth_experiment(&method, &rf, &targets, &schedule, &grid, &settings).unwrap();
        let sq = &rep.experiment.target_curves[0];
        for p in &sq.points {
            assert!((p.value - 0.25 / p.j as f64).abs() < 1e-9);
        }
        assert!(sq.verdict.verdict);
        let kink = &rep.experiment.target_curves[1];
        assert!(kink.strictly_decreasing());
        assert!(kink.verdict.verdict);
        assert_eq!(rep.lipschitz[1].estimate.alpha, 1.0);
        assert!(rep.witness.is_some());
    }

    #[test]
    fn domain_mismatch_rejected() {
        let method = PowerSeriesMethod::abel();
        let schedule = EvalSchedule::default_for(&method);
        let fam = DiscreteOperatorFamily::bernstein(1, 4).unwrap();
        let grid = Grid::uniform(Domain::UNIT, 9).unwrap();
        let settings = ExperimentSettings::new(JRange::Geometric { start: 1, max: 4 });
        let err = korovkin_experiment(
            &method,
            &fam,
            &KorovkinSystem::trig(),
            &[],
            &schedule,
            &grid,
            &settings,
        );
        assert!(err.is_err());
    }
}
