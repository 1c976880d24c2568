//! Built-in acceptance suite. Every criterion is a list of oracle checks; the
//! resulting table holds no timings so repeated runs compare byte for byte.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use pstat_core::density::{decompose, decompose_partial, p_density, pstat_test};
use pstat_core::domain::{sup_distance, Domain, Grid};
use pstat_core::function::FunctionHandle;
use pstat_core::korovkin::{
    boundedness_probe, korovkin_experiment, modulus, q_diagonal, ExperimentSettings, JRange,
    KorovkinSystem,
};
use pstat_core::operators::DiscreteOperatorFamily;
use pstat_core::rth::{DerivativeSource, RthFamily};
use pstat_core::sequence::{BoundProfile, IndexSet, Sequence, SequenceShape};
use pstat_core::summability::{evaluate, regularity_probe, EvalSchedule, PowerSeriesMethod};
use pstat_core::Error;

use crate::emit::{num, Table};
use crate::run::{Check, Outcome};

pub const CRITERIA: usize = 10;

/// Wall-clock budget per criterion, in seconds.
pub const BUDGETS: [f64; CRITERIA] = [2.0, 1.0, 5.0, 30.0, 10.0, 10.0, 10.0, 2.0, 30.0, 120.0];

const TITLES: [&str; CRITERIA] = [
    "density oracles",
    "regularity probe",
    "zero/one method example",
    "decomposition",
    "operator identities",
    "diagonal diagnostic",
    "r-th order operators",
    "modulus of continuity",
    "korovkin implication",
    "determinism across thread counts",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub check: String,
    pub value: String,
    pub expected: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub id: usize,
    pub title: &'static str,
    pub rows: Vec<Row>,
    pub seconds: f64,
}

impl Criterion {
    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.passed)
    }

    pub fn within_budget(&self) -> bool {
        self.seconds < BUDGETS[self.id - 1]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub criteria: Vec<Criterion>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(Criterion::passed)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new("selftest", &["criterion", "check", "value", "expected", "passed"]);
        for c in &self.criteria {
            for r in &c.rows {
                t.push(vec![
                    c.id.to_string(),
                    r.check.clone(),
                    r.value.clone(),
                    r.expected.clone(),
                    r.passed.to_string(),
                ]);
            }
        }
        t
    }
}

#[derive(Default)]
struct Rows(Vec<Row>);

impl Rows {
    fn near(&mut self, check: impl Into<String>, value: f64, expected: f64, tol: f64) {
        self.0.push(Row {
            check: check.into(),
            value: num(value),
            expected: format!("{} +- {tol:e}", num(expected)),
            passed: (value - expected).abs() <= tol,
        });
    }

    fn below(&mut self, check: impl Into<String>, value: f64, bound: f64) {
        self.0.push(Row {
            check: check.into(),
            value: num(value),
            expected: format!("< {bound:e}"),
            passed: value < bound,
        });
    }

    fn flag(&mut self, check: impl Into<String>, value: bool, expected: bool) {
        self.0.push(Row {
            check: check.into(),
            value: value.to_string(),
            expected: expected.to_string(),
            passed: value == expected,
        });
    }

    fn count(&mut self, check: impl Into<String>, value: usize, expected: usize) {
        self.0.push(Row {
            check: check.into(),
            value: value.to_string(),
            expected: expected.to_string(),
            passed: value == expected,
        });
    }

    fn error(&mut self, check: impl Into<String>, err: impl std::fmt::Display) {
        self.0.push(Row {
            check: check.into(),
            value: format!("error: {err}"),
            expected: "no error".into(),
            passed: false,
        });
    }
}

type Body = fn(&mut Rows) -> pstat_core::Result<()>;

const BODIES: [Body; CRITERIA - 1] = [
    density_oracles,
    regularity,
    zero_one_example,
    decomposition,
    operator_identities,
    diagonal,
    rth_order,
    moduli,
    implication,
];

/// Runs criterion `id` (1-based).
pub fn run_criterion(id: usize) -> Criterion {
    assert!((1..=CRITERIA).contains(&id), "no criterion {id}");
    let start = Instant::now();
    let mut rows = Rows::default();
    let result = if id == CRITERIA {
        determinism(&mut rows)
    } else {
        BODIES[id - 1](&mut rows)
    };
    if let Err(e) = result {
        rows.error("run", e);
    }
    Criterion {
        id,
        title: TITLES[id - 1],
        rows: rows.0,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all() -> Report {
    Report {
        criteria: (1..=CRITERIA).map(run_criterion).collect(),
    }
}

pub fn outcome(report: &Report) -> Outcome {
    let checks = report
        .criteria
        .iter()
        .map(|c| {
            Check::new(
                format!("criterion {}: {}", c.id, c.title),
                c.passed(),
                format!("{} checks in {:.2} s", c.rows.len(), c.seconds),
            )
        })
        .collect();
    Outcome {
        tables: vec![report.table()],
        document: serde_json::to_value(report).expect("report serializes"),
        checks,
    }
}

fn density_oracles(rows: &mut Rows) -> pstat_core::Result<()> {
    let evens = IndexSet::evens();

    let abel = PowerSeriesMethod::abel();
    let d = p_density(&abel, &evens, &EvalSchedule::default_for(&abel))?;
    rows.near("abel density of evens", d.estimate.value, 0.5, 1e-3);

    let borel = PowerSeriesMethod::borel();
    let tol = EvalSchedule::default_for(&borel).trunc_tol;
    let v = evaluate(&borel, &evens.indicator(), 30.0, tol)?;
    rows.near("borel density of evens at t = 30", v.value, 0.5, 1e-6);

    let zero_one = PowerSeriesMethod::zero_one();
    let d = p_density(&zero_one, &evens, &EvalSchedule::default_for(&zero_one))?;
    let exact = d.estimate.per_t.iter().all(|(_, v)| *v == 0.0);
    rows.flag("zero/one density of evens is exactly 0", exact, true);
    Ok(())
}

fn regularity(rows: &mut Rows) -> pstat_core::Result<()> {
    let degenerate = PowerSeriesMethod::from_table("degenerate", vec![1.0])?;
    for (method, expected) in [
        (PowerSeriesMethod::abel(), true),
        (PowerSeriesMethod::borel(), true),
        (degenerate, false),
    ] {
        let rep = regularity_probe(&method, 10, &EvalSchedule::default_for(&method))?;
        rows.flag(
            format!("{} consistent with regularity", method.name()),
            rep.consistent_with_regularity,
            expected,
        );
    }
    Ok(())
}

fn zero_one_example(rows: &mut Rows) -> pstat_core::Result<()> {
    let method = PowerSeriesMethod::zero_one();
    let schedule = EvalSchedule::default_for(&method);
    let eta = Sequence::even_index_ramp();
    let v = pstat_test(&method, &eta, 0.0, &[1.0, 0.5, 0.1, 0.01], &schedule)?;
    rows.flag("eta verdict", v.verdict, true);
    let exact = v
        .exceptions
        .iter()
        .all(|e| e.density.estimate.per_t.iter().all(|(_, d)| *d == 0.0));
    rows.flag("exception densities exactly 0", exact, true);

    let family = DiscreteOperatorFamily::bernstein(1, 101)?
        .with_zero_at_origin()
        .perturb(eta)?;
    let system = KorovkinSystem::algebraic(Domain::UNIT)?;
    let grid = Grid::default_for(Domain::UNIT)?;
    let settings = ExperimentSettings::new(JRange::Linear { start: 0, end: 101, step: 1 });
    let rep = korovkin_experiment(
        &method,
        &family,
        &system,
        &[FunctionHandle::sin_pi()],
        &schedule,
        &grid,
        &settings,
    )?;
    rows.flag("perturbed bernstein conclusion", rep.conclusion, true);
    let probe = boundedness_probe(
        &family,
        &grid,
        &JRange::Linear { start: 0, end: 100, step: 1 },
        None,
    )?;
    rows.near("sup of ||T_j 1|| over j <= 100", probe.sup, 101.0, 1e-9);
    Ok(())
}

fn square_root(j: usize) -> Option<usize> {
    let r = (j as f64).sqrt().round() as usize;
    (r * r == j).then_some(r)
}

/// `limit + noise[sqrt j]` on the squares, `limit` elsewhere.
fn noisy_on_squares(limit: f64, noise: Vec<f64>) -> Sequence {
    let noise: Arc<[f64]> = noise.into();
    let bound = noise.iter().fold(limit.abs(), |m, n| m.max((limit + n).abs()));
    let table = noise.clone();
    Sequence::new("noisy", BoundProfile::new(bound, 0.0), move |j| match square_root(j) {
        Some(k) => limit + table.get(k).copied().unwrap_or(0.0),
        None => limit,
    })
    .with_shape(SequenceShape::SparseSupport {
        support: Arc::new(move || Box::new((0..noise.len()).map(|k| k * k))),
        background: limit,
    })
}

fn decomposition(rows: &mut Rows) -> pstat_core::Result<()> {
    let zero_one = PowerSeriesMethod::zero_one();
    let eta = decompose(
        &zero_one,
        &Sequence::even_index_ramp(),
        0.0,
        &EvalSchedule::default_for(&zero_one),
        5,
        4096,
    )?;
    rows.count("eta ladder depth", eta.k_used, 5);
    let zero = eta.density.estimate.per_t.iter().all(|(_, d)| *d == 0.0);
    rows.flag("eta exception density exactly 0", zero, true);
    rows.flag("eta certificates", eta.certificates_hold(), true);

    let abel = PowerSeriesMethod::abel();
    let schedule = EvalSchedule::default_for(&abel);
    let sq = decompose(&abel, &IndexSet::squares().indicator(), 0.0, &schedule, 5, 65536)?;
    rows.below("squares exception density", sq.density.clamped_value(), 0.02);
    rows.flag("squares certificates", sq.certificates_hold(), true);

    match decompose(&abel, &Sequence::alternating(), 0.0, &schedule, 5, 4096) {
        Err(Error::LadderStall { k }) => rows.count("alternating stalls at k", k, 2),
        Err(e) => rows.error("alternating stalls at k", e),
        Ok(_) => rows.flag("alternating stalls", false, true),
    }

    let epsilons = [0.5, 0.1, 0.01];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut passed = 0;
    let mut forward = true;
    for trial in 0..100 {
        let limit = rng.gen_range(-2.0..2.0);
        let noise: Vec<f64> = (0..=16_384).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = noisy_on_squares(limit, noise);
        let v = pstat_test(&abel, &x, limit, &epsilons, &schedule)?;
        if v.verdict {
            passed += 1;
        }
        if trial < 5 && v.verdict {
            let d = decompose_partial(&abel, &x, limit, &schedule, 4, 16_384)?;
            forward &= d.stall.is_none()
                && d.density.estimate.value < schedule.limit_tol
                && d.certificates_hold();
        }
    }
    rows.count("noise on squares converges statistically", passed, 100);
    rows.flag("noisy sequences decompose", forward, true);
    Ok(())
}

fn operator_identities(rows: &mut Rows) -> pstat_core::Result<()> {
    let grid = Grid::default_for(Domain::UNIT)?;
    let tests = [
        ("a1", FunctionHandle::constant(1.0), 0.0),
        ("a2", FunctionHandle::monomial(1), 0.0),
        ("a3", FunctionHandle::monomial(2), 1.0),
    ];
    for n in [10, 100, 1000] {
        let fam = DiscreteOperatorFamily::bernstein(n, n)?;
        let sampled = fam.sample(n, &grid)?;
        for (name, f, quarter) in &tests {
            let err = sup_distance(&sampled.apply(f), &grid.sample(|x| f.eval(x)))?;
            rows.near(format!("bernstein {name}({n})"), err, quarter / (4.0 * n as f64), 1e-9);
        }
    }

    let circle = Grid::uniform(Domain::Circle, 2048)?;
    for n in [8, 64, 512] {
        let fam = DiscreteOperatorFamily::fejer(n, n, None)?;
        let sampled = fam.sample(n, &circle)?;
        for (name, f) in [("cos", FunctionHandle::cos()), ("sin", FunctionHandle::sin())] {
            let err = sup_distance(&sampled.apply(&f), &circle.sample(|x| f.eval(x)))?;
            rows.near(format!("fejer a({name}, {n})"), err, 1.0 / n as f64, 1e-8);
        }
    }
    Ok(())
}

fn diagonal(rows: &mut Rows) -> pstat_core::Result<()> {
    let unit = Grid::default_for(Domain::UNIT)?;
    let algebraic = KorovkinSystem::algebraic(Domain::UNIT)?;
    for n in [10, 100, 1000] {
        let fam = DiscreteOperatorFamily::bernstein(n, n)?;
        let q = q_diagonal(&fam, &algebraic, n, &unit)?;
        rows.near(format!("bernstein q_diagonal({n})"), q, 0.25 / n as f64, 1e-8);
    }
    let circle = Grid::uniform(Domain::Circle, 2048)?;
    let trig = KorovkinSystem::trig();
    for n in [8, 64, 512] {
        let fam = DiscreteOperatorFamily::fejer(n, n, None)?;
        let q = q_diagonal(&fam, &trig, n, &circle)?;
        rows.near(format!("fejer q_diagonal({n})"), q, 1.0 / n as f64, 1e-8);
    }
    Ok(())
}

fn rth_order(rows: &mut Rows) -> pstat_core::Result<()> {
    let grid = Grid::default_for(Domain::UNIT)?;
    let polys = [
        FunctionHandle::constant(1.0),
        FunctionHandle::polynomial("2 - 3x", vec![2.0, -3.0]),
        FunctionHandle::polynomial("1 + x - 5x^2", vec![1.0, 1.0, -5.0]),
    ];
    for r in [1, 2] {
        for n in [5, 50] {
            let rf = RthFamily::new(DiscreteOperatorFamily::bernstein(n, n)?, r, DerivativeSource::Analytic)?;
            for p in &polys[..=r] {
                let v = rf.apply_rth(n, p, &grid)?;
                let err = sup_distance(&v, &grid.sample(|x| p.eval(x)))?;
                rows.below(format!("r = {r}, n = {n}, {} exact", p.label()), err, 1e-10);
            }
            if r == 1 {
                let e2 = FunctionHandle::monomial(2);
                let err = sup_distance(&rf.apply_rth(n, &e2, &grid)?, &grid.sample(|x| x * x))?;
                rows.near(format!("r = 1, n = {n}, error on x^2"), err, 0.25 / n as f64, 1e-9);
            }
        }
    }

    let base = DiscreteOperatorFamily::bernstein(1, 50)?;
    let rf = RthFamily::new(base.clone(), 0, DerivativeSource::Analytic)?;
    let f = FunctionHandle::abs_shift(0.3);
    let same = [5, 50]
        .iter()
        .map(|&n| Ok(rf.apply_rth(n, &f, &grid)? == base.apply(n, &f, &grid)?))
        .collect::<pstat_core::Result<Vec<bool>>>()?;
    rows.flag("r = 0 bit-identical to base", same.iter().all(|s| *s), true);

    for r in [1, 2] {
        let rf = RthFamily::new(DiscreteOperatorFamily::bernstein(10, 10)?, r, DerivativeSource::Analytic)?;
        match rf.witness() {
            Some(w) => {
                let again = rf.apply_rth_at(w.j, &w.function.handle(), w.x)?;
                rows.below(format!("r = {r} witness value"), again, -1e-9);
            }
            None => rows.flag(format!("r = {r} witness found"), false, true),
        }
    }
    Ok(())
}

fn moduli(rows: &mut Rows) -> pstat_core::Result<()> {
    let grid = Grid::uniform(Domain::UNIT, 1025)?;
    let m = (grid.len() - 1) as f64;
    let e1 = FunctionHandle::monomial(1);
    let e2 = FunctionHandle::monomial(2);
    rows.near("omega(x, 0.1)", modulus(&e1, &grid, 0.1)?, 0.1, 2.0 / m);
    rows.near("omega(x^2, 0.1)", modulus(&e2, &grid, 0.1)?, 0.19, 2.0 / m);
    let ladder: Vec<f64> = (1..=10).map(|k| 0.03 * k as f64).collect();
    for f in [e2, FunctionHandle::sqrt(), FunctionHandle::abs_shift(0.5)] {
        let values = ladder
            .iter()
            .map(|&d| modulus(&f, &grid, d))
            .collect::<pstat_core::Result<Vec<f64>>>()?;
        let monotone = values.windows(2).all(|w| w[0] <= w[1]);
        rows.flag(format!("omega({}, .) monotone", f.label()), monotone, true);
    }
    Ok(())
}

fn implication(rows: &mut Rows) -> pstat_core::Result<()> {
    let method = PowerSeriesMethod::abel();
    let schedule = EvalSchedule::default_for(&method);
    let settings = ExperimentSettings::new(JRange::Geometric { start: 1, max: 512 });
    let cases = [
        (
            DiscreteOperatorFamily::bernstein(1, 512)?,
            KorovkinSystem::algebraic(Domain::UNIT)?,
            FunctionHandle::abs_shift(0.5),
        ),
        (
            DiscreteOperatorFamily::fejer(1, 512, None)?,
            KorovkinSystem::trig(),
            FunctionHandle::triangle_wave(),
        ),
    ];
    for (family, system, target) in cases {
        let grid = Grid::default_for(family.domain())?;
        let rep = korovkin_experiment(&method, &family, &system, &[target], &schedule, &grid, &settings)?;
        let curve = &rep.target_curves[0];
        let name = format!("{} on {}", family.label(), curve.label);
        rows.flag(format!("{name}: b(j) strictly decreasing"), curve.strictly_decreasing(), true);
        rows.flag(format!("{name}: verdict"), curve.verdict.verdict, true);
        rows.flag(format!("{name}: conclusion"), rep.conclusion, true);
    }
    Ok(())
}

/// Criteria re-run under different pool sizes in [`determinism`].
const REPLAYED: [usize; 4] = [1, 2, 6, 8];

fn determinism(rows: &mut Rows) -> pstat_core::Result<()> {
    let replay = |threads: usize| -> Vec<Row> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| {
            REPLAYED
                .iter()
                .flat_map(|&id| run_criterion(id).rows)
                .collect()
        })
    };
    let one = replay(1);
    let four = replay(4);
    rows.count("rows replayed", one.len(), four.len());
    rows.flag("1 and 4 threads agree", one == four, true);
    rows.flag("replay again agrees", replay(1) == one, true);
    Ok(())
}
