//! P-densities of index sets, P-statistical limit tests and the constructive
//! decomposition of a P-statistically convergent sequence into a classically
//! convergent part and a density-zero exception set.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sequence::{IndexSet, Sequence, SetShape};
use crate::sum::CompensatedSum;
use crate::summability::{evaluate, p_limit, EvalSchedule, LimitEstimate, PowerSeriesMethod};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub set_label: String,
    pub estimate: LimitEstimate,
}

impl DensityEstimate {
    /// Final value clamped to `[0, 1]` for reporting.
    pub fn clamped_value(&self) -> f64 {
        self.estimate.value.clamp(0.0, 1.0)
    }

    /// `(t, value)` pairs clamped to `[0, 1]`.
    pub fn clamped_per_t(&self) -> Vec<(f64, f64)> {
        self.estimate
            .per_t
            .iter()
            .map(|&(t, v)| (t, v.clamp(0.0, 1.0)))
            .collect()
    }

    /// Converged to a value below `tol`.
    pub fn vanishes(&self, tol: f64) -> bool {
        self.estimate.converged && self.estimate.value < tol
    }
}

pub fn p_density(
    method: &PowerSeriesMethod,
    set: &IndexSet,
    schedule: &EvalSchedule,
) -> Result<DensityEstimate> {
    let estimate = p_limit(method, &set.indicator(), schedule)?;
    Ok(DensityEstimate {
        set_label: set.label().to_string(),
        estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceptionDensity {
    pub epsilon: f64,
    pub density: DensityEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PStatVerdict {
    pub limit: f64,
    pub epsilons: Vec<f64>,
    pub exceptions: Vec<ExceptionDensity>,
    pub verdict: bool,
}

pub fn validate_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::EmptyEpsilonList);
    }
    if let Some(bad) = epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidEpsilons(format!("{bad} is not a positive real")));
    }
    if epsilons.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidEpsilons(
            "epsilons must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Tests `x -> limit` P-statistically: every exception set
/// `{j : |x_j - limit| >= eps}` must have a converged density below the
/// schedule's limit tolerance.
pub fn pstat_test(
    method: &PowerSeriesMethod,
    x: &Sequence,
    limit: f64,
    epsilons: &[f64],
    schedule: &EvalSchedule,
) -> Result<PStatVerdict> {
    validate_epsilons(epsilons)?;
    let exceptions = epsilons
        .par_iter()
        .map(|&epsilon| {
            let set = IndexSet::exception(x, limit, epsilon);
            let density = p_density(method, &set, schedule)?;
            Ok(ExceptionDensity { epsilon, density })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = exceptions
        .iter()
        .all(|e| e.density.vanishes(schedule.limit_tol));
    Ok(PStatVerdict {
        limit,
        epsilons: epsilons.to_vec(),
        exceptions,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCertificate {
    pub k: usize,
    pub start: usize,
    /// Exclusive; the last block is cut at the horizon.
    pub end: usize,
    pub epsilon: f64,
    /// `max |x_j - L|` over the block outside `E`, 0 when that part is empty.
    pub max_deviation: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub limit: f64,
    pub k_max: usize,
    pub k_used: usize,
    pub cutoffs: Vec<usize>,
    pub horizon: usize,
    /// Abscissa at which cutoff admissibility was judged.
    pub judged_at: f64,
    /// Members of `E` below the horizon.
    pub listing: Vec<usize>,
    #[serde(skip)]
    pub exception_set: IndexSet,
    pub density: DensityEstimate,
    pub certificates: Vec<BlockCertificate>,
    /// The P-statistical pre-check with `eps = 1/k, k <= k_max` passed.
    pub certified: bool,
    /// Depth at which no admissible cutoff existed within the horizon.
    pub stall: Option<usize>,
}

impl Decomposition {
    pub fn is_partial(&self) -> bool {
        self.stall.is_some()
    }

    pub fn certificates_hold(&self) -> bool {
        self.certificates.iter().all(|c| c.holds)
    }

    pub fn into_result(self) -> Result<Self> {
        match self.stall {
            Some(k) => Err(Error::LadderStall { k }),
            None => Ok(self),
        }
    }
}

/// Runs the `1/k` ladder and fails with [`Error::LadderStall`] if it cannot be
/// completed to depth `k_max`.
pub fn decompose(
    method: &PowerSeriesMethod,
    x: &Sequence,
    limit: f64,
    schedule: &EvalSchedule,
    k_max: usize,
    horizon: usize,
) -> Result<Decomposition> {
    decompose_partial(method, x, limit, schedule, k_max, horizon)?.into_result()
}

/// As [`decompose`], but a stalled ladder is returned truncated with `stall` set.
pub fn decompose_partial(
    method: &PowerSeriesMethod,
    x: &Sequence,
    limit: f64,
    schedule: &EvalSchedule,
    k_max: usize,
    horizon: usize,
) -> Result<Decomposition> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    if horizon < 2 {
        return Err(Error::InvalidParameter("horizon must be at least 2".into()));
    }
    schedule.validate_for(method)?;
    let ladder: Vec<f64> = (1..=k_max).map(|k| 1.0 / k as f64).collect();
    let precheck = pstat_test(method, x, limit, &ladder, schedule)?;

    let t_final = schedule.last();
    let weights = method.weights_prefix(t_final, horizon)?;
    let values: Vec<f64> = (0..horizon).map(|j| x.value(j)).collect();

    let mut cutoffs: Vec<usize> = Vec::with_capacity(k_max);
    let mut stall = None;
    for k in 1..=k_max {
        let epsilon = 1.0 / k as f64;
        let set = IndexSet::exception(x, limit, epsilon);
        let full = evaluate(method, &set.indicator(), t_final, schedule.trunc_tol)?;
        let target = 1.0 / (k * k) as f64;
        let previous = cutoffs.last().copied().unwrap_or(0);
        let mut head = CompensatedSum::new();
        let mut found = None;
        for n in 1..=horizon {
            let j = n - 1;
            if (values[j] - limit).abs() >= epsilon {
                head.add(weights[j]);
            }
            if n > previous && full.value - head.value() / full.mass < target {
                found = Some(n);
                break;
            }
        }
        match found {
            Some(n) => cutoffs.push(n),
            None => {
                stall = Some(k);
                break;
            }
        }
    }
    let k_used = cutoffs.len();

    let exception_set = block_exception_set(x, limit, &cutoffs);
    let listing = exception_set.members_below(horizon);
    let density = p_density(method, &exception_set, schedule)?;

    let certificates = cutoffs
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let k = i + 1;
            let end = cutoffs.get(i + 1).copied().unwrap_or(horizon);
            let epsilon = 1.0 / k as f64;
            let max_deviation = (start..end)
                .filter(|&j| !exception_set.contains(j))
                .map(|j| (values[j] - limit).abs())
                .fold(0.0f64, f64::max);
            BlockCertificate {
                k,
                start,
                end,
                epsilon,
                max_deviation,
                holds: max_deviation < epsilon,
            }
        })
        .collect();

    Ok(Decomposition {
        limit,
        k_max,
        k_used,
        cutoffs,
        horizon,
        judged_at: t_final,
        listing,
        exception_set,
        density,
        certificates,
        certified: precheck.verdict,
        stall,
    })
}

/// `E = union_k {j in [n_k, n_{k+1}) : |x_j - L| >= 1/k}`, the last block open-ended.
fn block_exception_set(x: &Sequence, limit: f64, cutoffs: &[usize]) -> IndexSet {
    let Some(&first) = cutoffs.first() else {
        return IndexSet::empty().relabel("E");
    };
    let k_used = cutoffs.len();
    let last = cutoffs[k_used - 1];
    let bounds: Arc<[usize]> = cutoffs.into();
    let rule = x.rule();
    let member_bounds = bounds.clone();
    let member = move |j: usize| {
        if j < first {
            return false;
        }
        // number of cutoffs <= j is the block's k
        let k = member_bounds.partition_point(|&n| n <= j);
        (rule(j) - limit).abs() >= 1.0 / k as f64
    };
    // E agrees with the last block's exception set from the last cutoff on
    let tail = IndexSet::exception(x, limit, 1.0 / k_used as f64);
    let shape = match tail.shape() {
        SetShape::Eventually { from, member } => SetShape::Eventually {
            from: (*from).max(last),
            member: *member,
        },
        SetShape::Periodic { from, pattern } => SetShape::Periodic {
            from: (*from).max(last),
            pattern: pattern.clone(),
        },
        // U_k grows with k, so E is contained in the last exception set
        SetShape::Sparse(members) => {
            let members = members.clone();
            let member = member.clone();
            SetShape::Sparse(Arc::new(move || {
                let member = member.clone();
                Box::new(members().filter(move |&j| member(j)))
            }))
        }
        SetShape::General => SetShape::General,
    };
    IndexSet::new("E", member).with_shape(shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::BoundProfile;
    use approx::assert_relative_eq;

    #[test]
    fn zero_one_density_of_evens_is_exactly_zero() {
        let m = PowerSeriesMethod::zero_one();
        let s = EvalSchedule::default_for(&m);
        let d = p_density(&m, &IndexSet::evens(), &s).unwrap();
        assert!(d.estimate.per_t.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn abel_density_of_evens() {
        let m = PowerSeriesMethod::abel();
        let s = EvalSchedule::default_for(&m);
        let d = p_density(&m, &IndexSet::evens(), &s).unwrap();
        for &(t, v) in &d.estimate.per_t {
            assert_relative_eq!(v, 1.0 / (1.0 + t), max_relative = 1e-9);
        }
        assert!((d.estimate.value - 0.5).abs() < 1e-3);
    }

    #[test]
    fn epsilon_validation() {
        assert_eq!(validate_epsilons(&[]), Err(Error::EmptyEpsilonList));
        assert!(matches!(
            validate_epsilons(&[0.1, 0.5]),
            Err(Error::InvalidEpsilons(_))
        ));
        assert!(matches!(
            validate_epsilons(&[0.5, -0.1]),
            Err(Error::InvalidEpsilons(_))
        ));
        assert!(validate_epsilons(&[1.0, 0.1, 0.01]).is_ok());
    }

    #[test]
    fn alternating_is_not_statistically_one() {
        let m = PowerSeriesMethod::abel();
        let s = EvalSchedule::default_for(&m);
        let v = pstat_test(&m, &Sequence::alternating(), 1.0, &[0.5], &s).unwrap();
        assert!(!v.verdict);
        assert!((v.exceptions[0].density.estimate.value - 0.5).abs() < 1e-3);
    }

    #[test]
    fn eta_under_zero_one_method() {
        let m = PowerSeriesMethod::zero_one();
        let s = EvalSchedule::default_for(&m);
        let v = pstat_test(&m, &Sequence::even_index_ramp(), 0.0, &[1.0, 0.1, 0.01], &s).unwrap();
        assert!(v.verdict);
        for e in &v.exceptions {
            assert!(e.density.estimate.per_t.iter().all(|&(_, d)| d == 0.0));
        }
    }

    #[test]
    fn decompose_eta_full_ladder() {
        let m = PowerSeriesMethod::zero_one();
        let s = EvalSchedule::default_for(&m);
        let eta = Sequence::even_index_ramp();
        let d = decompose(&m, &eta, 0.0, &s, 5, 1 << 12).unwrap();
        assert_eq!(d.k_used, 5);
        assert_eq!(d.cutoffs, vec![1, 2, 3, 4, 5]);
        assert!(d.certified);
        assert!(d.certificates_hold());
        assert!(d.listing.iter().all(|j| j % 2 == 0));
        assert_eq!(d.density.estimate.value, 0.0);
    }

    #[test]
    fn decompose_alternating_stalls_at_two() {
        let m = PowerSeriesMethod::abel();
        let s = EvalSchedule::default_for(&m);
        let alt = Sequence::alternating();
        let partial = decompose_partial(&m, &alt, 0.0, &s, 5, 1 << 16).unwrap();
        assert_eq!(partial.stall, Some(2));
        assert_eq!(partial.k_used, 1);
        assert!(!partial.certified);
        assert_eq!(
            decompose(&m, &alt, 0.0, &s, 5, 1 << 16).unwrap_err(),
            Error::LadderStall { k: 2 }
        );
    }

    #[test]
    fn block_membership_follows_cutoffs() {
        let x = Sequence::new("x", BoundProfile::UNIT, |j| 1.0 / (1.0 + (j % 7) as f64));
        let e = block_exception_set(&x, 0.0, &[2, 5, 9]);
        for j in 0..40 {
            let expected = if j < 2 {
                false
            } else {
                let k = if j < 5 { 1 } else if j < 9 { 2 } else { 3 };
                x.value(j) >= 1.0 / k as f64
            };
            assert_eq!(e.contains(j), expected, "j = {j}");
        }
    }
}
