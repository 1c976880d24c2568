//! End-to-end checks of the worked example and of the decomposition and
//! Korovkin-type theorems on randomized inputs.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pstat_core::density::{decompose, decompose_partial, pstat_test};
use pstat_core::domain::{Domain, Grid};
use pstat_core::function::FunctionHandle;
use pstat_core::korovkin::{
    boundedness_probe, korovkin_experiment, ExperimentSettings, JRange, KorovkinSystem,
};
use pstat_core::operators::DiscreteOperatorFamily;
use pstat_core::sequence::{BoundProfile, IndexSet, Sequence, SequenceShape};
use pstat_core::summability::{EvalSchedule, PowerSeriesMethod};
use pstat_core::Error;

fn square_root(j: usize) -> Option<usize> {
    let r = (j as f64).sqrt().round() as usize;
    (r * r == j).then_some(r)
}

/// `x_j = limit + noise[sqrt j]` on the squares, `limit` elsewhere.
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

#[test]
fn eta_under_the_zero_one_method() {
    let method = PowerSeriesMethod::zero_one();
    let schedule = EvalSchedule::default_for(&method);
    let eta = Sequence::even_index_ramp();
    let v = pstat_test(&method, &eta, 0.0, &[1.0, 0.5, 0.1, 0.01], &schedule).unwrap();
    assert!(v.verdict);
    for e in &v.exceptions {
        assert!(e.density.estimate.per_t.iter().all(|(_, d)| *d == 0.0));
    }
}

#[test]
fn perturbed_family_converges_statistically() {
    let method = PowerSeriesMethod::zero_one();
    let schedule = EvalSchedule::default_for(&method);
    let family = DiscreteOperatorFamily::bernstein(1, 101)
        .unwrap()
        .with_zero_at_origin()
        .perturb(Sequence::even_index_ramp())
        .unwrap();
    let system = KorovkinSystem::algebraic(Domain::UNIT).unwrap();
    let grid = Grid::default_for(Domain::UNIT).unwrap();
    let mut settings = ExperimentSettings::new(JRange::Linear { start: 0, end: 101, step: 1 });
    settings.boundedness_set = Some(IndexSet::odds());
    let report = korovkin_experiment(
        &method,
        &family,
        &system,
        &[FunctionHandle::sin_pi()],
        &schedule,
        &grid,
        &settings,
    )
    .unwrap();
    assert!(report.conclusion);
    assert!(report.conclusion_consistent());
    let one = &report.test_curves[0];
    assert!((one.points[100].value - 100.0).abs() < 1e-9);
    assert!(one.classical_sup >= 100.0);
    assert!((report.boundedness.sup_on_set.unwrap() - 1.0).abs() < 1e-10);

    let probe = boundedness_probe(
        &family,
        &grid,
        &JRange::Linear { start: 0, end: 100, step: 1 },
        None,
    )
    .unwrap();
    assert!((probe.sup - 101.0).abs() < 1e-9);
    assert_eq!(probe.argmax, 100);
}

#[test]
fn decomposition_ladders() {
    let zero_one = PowerSeriesMethod::zero_one();
    let eta = decompose(
        &zero_one,
        &Sequence::even_index_ramp(),
        0.0,
        &EvalSchedule::default_for(&zero_one),
        5,
        4096,
    )
    .unwrap();
    assert_eq!(eta.k_used, 5);
    assert!(eta.density.estimate.per_t.iter().all(|(_, d)| *d == 0.0));
    assert!(eta.certificates_hold());

    let abel = PowerSeriesMethod::abel();
    let schedule = EvalSchedule::default_for(&abel);
    let squares = decompose(&abel, &IndexSet::squares().indicator(), 0.0, &schedule, 5, 65536).unwrap();
    assert!(squares.density.clamped_value() < 0.02);
    assert!(squares.certificates_hold());

    assert_eq!(
        decompose(&abel, &Sequence::alternating(), 0.0, &schedule, 5, 4096).unwrap_err(),
        Error::LadderStall { k: 2 }
    );
}

#[test]
fn converse_on_random_noise() {
    let method = PowerSeriesMethod::abel();
    let schedule = EvalSchedule::default_for(&method);
    let epsilons = [0.5, 0.1, 0.01];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut passed = 0;
    for trial in 0..100 {
        let limit = rng.gen_range(-2.0..2.0);
        let noise: Vec<f64> = (0..=16_384).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = noisy_on_squares(limit, noise);
        let verdict = pstat_test(&method, &x, limit, &epsilons, &schedule).unwrap();
        if verdict.verdict {
            passed += 1;
        }
        // forward direction on a subsample: a passing test decomposes fully
        if trial < 5 && verdict.verdict {
            let d = decompose_partial(&method, &x, limit, &schedule, 4, 16_384).unwrap();
            assert!(d.stall.is_none());
            assert!(d.density.estimate.value < schedule.limit_tol);
            assert!(d.certificates_hold());
        }
    }
    assert_eq!(passed, 100);
}

#[test]
fn korovkin_implication_on_random_perturbations() {
    let method = PowerSeriesMethod::abel();
    let schedule = EvalSchedule::default_for(&method);
    let system = KorovkinSystem::algebraic(Domain::UNIT).unwrap();
    let grid = Grid::uniform(Domain::UNIT, 129).unwrap();
    let settings = ExperimentSettings::new(JRange::Linear { start: 1, end: 70, step: 1 });
    let base = DiscreteOperatorFamily::bernstein(1, 70).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut concluded = 0;
    for _ in 0..100 {
        let eta: Vec<f64> = (0..=70)
            .map(|j| if square_root(j).is_some() { rng.gen_range(0.0..10.0) } else { 0.0 })
            .collect();
        let family = base.perturb(Sequence::from_values("eta", eta, 0.0)).unwrap();
        let report = korovkin_experiment(
            &method,
            &family,
            &system,
            &[FunctionHandle::abs_shift(0.5)],
            &schedule,
            &grid,
            &settings,
        )
        .unwrap();
        assert!(report.conclusion_consistent());
        if report.conclusion {
            concluded += 1;
        }
    }
    assert_eq!(concluded, 100);
}
