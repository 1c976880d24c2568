//! Power series summability methods.
//!
//! A method is given by nonnegative coefficients `s_j` whose power series
//! `s(t) = sum s_j t^j` has radius of convergence `R`. A sequence `x` is
//! summed by `(1 / s(t)) * sum x_j s_j t^j` and the method limit is read off as
//! `t -> R-` along an [`EvalSchedule`]. No extrapolation is attempted: the
//! reported value is the transform at the last abscissa and `converged` is a
//! plateau test over the last three abscissae.
//!
//! Series are summed in ascending index order with compensated accumulation
//! and truncated with a block geometric majorant: every 64 terms the ratio of
//! consecutive block maxima is taken as the decay rate of the remaining terms.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::sequence::{BoundProfile, Sequence, SequenceShape};
use crate::sum::CompensatedSum;

/// Terms per tail-bound block.
const BLOCK: usize = 64;

/// Hard cap on summed terms for one series evaluation.
pub const MAX_SERIES_TERMS: usize = 1 << 28;

pub const DEFAULT_TRUNC_TOL: f64 = 1e-12;
pub const DEFAULT_LIMIT_TOL: f64 = 1e-3;
pub const DEFAULT_HORIZON: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Radius {
    Finite(f64),
    Infinite,
}

impl Radius {
    pub fn value(&self) -> f64 {
        match *self {
            Radius::Finite(r) => r,
            Radius::Infinite => f64::INFINITY,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t > 0.0 && t.is_finite() && t < self.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthTag {
    AbelType,
    BorelType,
}

pub type CoefficientRule = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
pub type MassRule = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Coefficients {
    /// `s_j = 1`.
    Abel,
    /// `s_j = 1 / j!`.
    Borel,
    /// `s_j = 1 / (j + 1)`.
    Logarithmic,
    /// `s_j = pattern[j mod len]`.
    Periodic(Vec<f64>),
    /// Finite support: `s_j = table[j]`, zero beyond.
    Table(Vec<f64>),
    Rule(CoefficientRule),
}

/// Residues tracked by the mass pass; covers every period up to 10.
const RESIDUE_BASE: usize = 2520;

#[derive(Debug, Clone)]
struct TruncatedMass {
    mass: f64,
    terms: usize,
    /// Mass split by `j mod RESIDUE_BASE`.
    residues: Arc<[f64]>,
}

#[derive(Clone)]
pub struct PowerSeriesMethod {
    name: String,
    coefficients: Coefficients,
    radius: Radius,
    closed_form: Option<MassRule>,
    mass_cache: Arc<Mutex<HashMap<(u64, u64), Arc<TruncatedMass>>>>,
    residue_cache: Arc<Mutex<HashMap<(u64, u64, usize), Arc<[f64]>>>>,
}

impl fmt::Debug for PowerSeriesMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PowerSeriesMethod")
            .field("name", &self.name)
            .field("radius", &self.radius)
            .field("closed_form", &self.closed_form.is_some())
            .finish_non_exhaustive()
    }
}

impl PowerSeriesMethod {
    fn build(
        name: impl Into<String>,
        coefficients: Coefficients,
        radius: Radius,
        closed_form: Option<MassRule>,
    ) -> Result<Self> {
        let method = Self {
            name: name.into(),
            coefficients,
            radius,
            closed_form,
            mass_cache: Arc::default(),
            residue_cache: Arc::default(),
        };
        method.validate()?;
        Ok(method)
    }

    pub fn abel() -> Self {
        Self::build(
            "abel",
            Coefficients::Abel,
            Radius::Finite(1.0),
            Some(Arc::new(|t| 1.0 / (1.0 - t))),
        )
        .expect("built-in method is valid")
    }

    pub fn borel() -> Self {
        Self::build(
            "borel",
            Coefficients::Borel,
            Radius::Infinite,
            Some(Arc::new(f64::exp)),
        )
        .expect("built-in method is valid")
    }

    pub fn logarithmic() -> Self {
        Self::build(
            "logarithmic",
            Coefficients::Logarithmic,
            Radius::Finite(1.0),
            Some(Arc::new(|t: f64| -(-t).ln_1p() / t)),
        )
        .expect("built-in method is valid")
    }

    /// `s_j = 0` for even `j`, `1` for odd `j`; `s(t) = t / (1 - t^2)`.
    pub fn zero_one() -> Self {
        Self::build(
            "zero_one",
            Coefficients::Periodic(vec![0.0, 1.0]),
            Radius::Finite(1.0),
            Some(Arc::new(|t| t / (1.0 - t * t))),
        )
        .expect("built-in method is valid")
    }

    /// Finitely supported coefficients; the radius is infinite.
    pub fn from_table(name: impl Into<String>, table: Vec<f64>) -> Result<Self> {
        Self::build(name, Coefficients::Table(table), Radius::Infinite, None)
    }

    pub fn periodic(name: impl Into<String>, pattern: Vec<f64>, radius: Radius) -> Result<Self> {
        Self::build(name, Coefficients::Periodic(pattern), radius, None)
    }

    pub fn from_rule<F>(
        name: impl Into<String>,
        radius: Radius,
        rule: F,
        closed_form: Option<MassRule>,
    ) -> Result<Self>
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self::build(name, Coefficients::Rule(Arc::new(rule)), radius, closed_form)
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidMethod {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius.value() > 0.0) {
            return Err(self.invalid("radius must be positive"));
        }
        let probe: Vec<f64> = match &self.coefficients {
            Coefficients::Periodic(p) if p.is_empty() => {
                return Err(self.invalid("empty periodic pattern"))
            }
            Coefficients::Periodic(p) => p.clone(),
            Coefficients::Table(t) => t.clone(),
            _ => (0..BLOCK).map(|j| self.coefficient(j)).collect(),
        };
        if let Some(bad) = probe.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(self.invalid(format!(
                "coefficient s_{bad} = {} is not a nonnegative real",
                probe[bad]
            )));
        }
        if !probe.iter().any(|&s| s > 0.0) {
            return Err(self.invalid("no positive coefficient among the leading terms"));
        }
        if matches!(self.coefficients, Coefficients::Periodic(_)) && self.radius.value() > 1.0 {
            return Err(self.invalid("periodic coefficients have radius at most 1"));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn radius(&self) -> Radius {
        self.radius
    }

    pub fn growth_tag(&self) -> GrowthTag {
        match self.radius {
            Radius::Finite(_) => GrowthTag::AbelType,
            Radius::Infinite => GrowthTag::BorelType,
        }
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed_form.is_some()
    }

    pub fn closed_form_mass(&self, t: f64) -> Option<f64> {
        self.closed_form.as_ref().map(|f| f(t))
    }

    pub fn coefficient(&self, j: usize) -> f64 {
        match &self.coefficients {
            Coefficients::Abel => 1.0,
            Coefficients::Borel => (-ln_factorial(j as u64)).exp(),
            Coefficients::Logarithmic => 1.0 / (j as f64 + 1.0),
            Coefficients::Periodic(p) => p[j % p.len()],
            Coefficients::Table(t) => t.get(j).copied().unwrap_or(0.0),
            Coefficients::Rule(f) => f(j),
        }
    }

    /// Lower bound for the ratio of consecutive block maxima that holds for
    /// every later block. Coefficients that are nonincreasing (or periodic)
    /// decay no faster than `t^64` per block; the observed ratio alone would
    /// understate their tails.
    fn block_ratio_floor(&self, t: f64) -> f64 {
        match self.coefficients {
            Coefficients::Abel | Coefficients::Logarithmic | Coefficients::Periodic(_) => {
                t.powi(BLOCK as i32)
            }
            _ => 0.0,
        }
    }

    fn finite_support(&self) -> Option<usize> {
        match &self.coefficients {
            Coefficients::Table(t) => Some(t.len()),
            _ => None,
        }
    }

    pub fn check_abscissa(&self, t: f64) -> Result<()> {
        if self.radius.contains(t) {
            Ok(())
        } else {
            Err(Error::InvalidAbscissa {
                t,
                radius: self.radius.value(),
            })
        }
    }

    /// `s_j t^j` evaluated directly (no streaming state).
    pub fn weight_at(&self, j: usize, t: f64) -> f64 {
        match &self.coefficients {
            Coefficients::Abel => pow(t, j),
            Coefficients::Borel => (j as f64 * t.ln() - ln_factorial(j as u64)).exp(),
            Coefficients::Logarithmic => pow(t, j) / (j as f64 + 1.0),
            Coefficients::Periodic(p) => p[j % p.len()] * pow(t, j),
            Coefficients::Table(tab) => tab.get(j).map_or(0.0, |s| s * pow(t, j)),
            Coefficients::Rule(f) => log_space_weight(f(j), j, t),
        }
    }

    fn stream(&self, t: f64) -> WeightStream<'_> {
        WeightStream::new(&self.coefficients, t)
    }

    /// The first `n` weights `s_j t^j`, bit-identical to those used by the
    /// streaming summation.
    pub fn weights_prefix(&self, t: f64, n: usize) -> Result<Vec<f64>> {
        self.check_abscissa(t)?;
        let mut stream = self.stream(t);
        let mut buf = [0.0; BLOCK];
        let mut out = Vec::with_capacity(n + BLOCK);
        while out.len() < n {
            stream.fill(self, &mut buf)?;
            out.extend_from_slice(&buf);
        }
        out.truncate(n);
        Ok(out)
    }

    fn truncated_mass(&self, t: f64, tol: f64) -> Result<Arc<TruncatedMass>> {
        let key = (t.to_bits(), tol.to_bits());
        if let Some(hit) = self.mass_cache.lock().expect("mass cache").get(&key) {
            return Ok(hit.clone());
        }
        let tm = Arc::new(sum_mass(self, t, tol)?);
        self.mass_cache
            .lock()
            .expect("mass cache")
            .insert(key, tm.clone());
        Ok(tm)
    }

    /// `sum_{j < N, j = r mod p} s_j t^j` for each residue `r`, with `N` the
    /// truncation index of the truncated mass.
    fn residue_masses(&self, t: f64, tol: f64, modulus: usize) -> Result<Arc<[f64]>> {
        let tm = self.truncated_mass(t, tol)?;
        if RESIDUE_BASE % modulus == 0 {
            let mut sums = vec![CompensatedSum::new(); modulus];
            for (r, &v) in tm.residues.iter().enumerate() {
                sums[r % modulus].add(v);
            }
            return Ok(sums.iter().map(CompensatedSum::value).collect());
        }
        let key = (t.to_bits(), tol.to_bits(), modulus);
        if let Some(hit) = self.residue_cache.lock().expect("residue cache").get(&key) {
            return Ok(hit.clone());
        }
        let sums: Arc<[f64]> = residue_pass(self, t, tm.terms, modulus)?.into();
        self.residue_cache
            .lock()
            .expect("residue cache")
            .insert(key, sums.clone());
        Ok(sums)
    }

    /// Truncated summation of `s(t)`, ignoring any closed form.
    pub fn summed_mass(&self, t: f64, tol: f64) -> Result<f64> {
        self.check_abscissa(t)?;
        Ok(self.truncated_mass(t, tol)?.mass)
    }

    /// Compares the closed form against truncated summation at every abscissa.
    pub fn closed_form_agreement(&self, schedule: &EvalSchedule) -> Result<Vec<ClosedFormCheck>> {
        let Some(closed) = &self.closed_form else {
            return Ok(Vec::new());
        };
        schedule
            .abscissae
            .iter()
            .map(|&t| {
                let summed = self.summed_mass(t, schedule.trunc_tol)?;
                let exact = closed(t);
                Ok(ClosedFormCheck {
                    t,
                    closed: exact,
                    summed,
                    agrees: (exact - summed).abs() <= schedule.trunc_tol * exact,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormCheck {
    pub t: f64,
    pub closed: f64,
    pub summed: f64,
    pub agrees: bool,
}

fn pow(t: f64, j: usize) -> f64 {
    if j <= i32::MAX as usize {
        t.powi(j as i32)
    } else {
        (j as f64 * t.ln()).exp()
    }
}

fn log_space_weight(s: f64, j: usize, t: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        (s.ln() + j as f64 * t.ln()).exp()
    }
}

/// Produces the weights `s_j t^j` block by block. Within a block the power
/// is `t^start * t^i` with a precomputed `t^i` table, so consecutive weights
/// carry no serial rounding chain; `t^start` is recomputed per block.
struct WeightStream<'a> {
    coefficients: &'a Coefficients,
    t: f64,
    ln_t: f64,
    powers: [f64; BLOCK],
    j: usize,
    borel_term: f64,
}

impl<'a> WeightStream<'a> {
    fn new(coefficients: &'a Coefficients, t: f64) -> Self {
        let mut powers = [1.0; BLOCK];
        for i in 1..BLOCK {
            powers[i] = pow(t, i);
        }
        Self {
            coefficients,
            t,
            ln_t: t.ln(),
            powers,
            j: 0,
            borel_term: 1.0,
        }
    }

    /// Fills the next `BLOCK` weights.
    fn fill(&mut self, method: &PowerSeriesMethod, buf: &mut [f64; BLOCK]) -> Result<()> {
        let start = self.j;
        let base = pow(self.t, start);
        match self.coefficients {
            Coefficients::Abel => {
                for (w, p) in buf.iter_mut().zip(&self.powers) {
                    *w = base * p;
                }
            }
            Coefficients::Logarithmic => {
                for (i, (w, p)) in buf.iter_mut().zip(&self.powers).enumerate() {
                    *w = base * p / ((start + i) as f64 + 1.0);
                }
            }
            Coefficients::Periodic(pattern) => {
                let mut phase = start % pattern.len();
                for (w, p) in buf.iter_mut().zip(&self.powers) {
                    *w = pattern[phase] * (base * p);
                    phase += 1;
                    if phase == pattern.len() {
                        phase = 0;
                    }
                }
            }
            Coefficients::Table(tab) => {
                for (i, (w, p)) in buf.iter_mut().zip(&self.powers).enumerate() {
                    *w = tab.get(start + i).map_or(0.0, |s| s * (base * p));
                }
            }
            Coefficients::Borel => {
                for (i, w) in buf.iter_mut().enumerate() {
                    *w = self.borel_term;
                    self.borel_term *= self.t / (start + i + 1) as f64;
                }
            }
            Coefficients::Rule(f) => {
                for (i, w) in buf.iter_mut().enumerate() {
                    let j = start + i;
                    let s = f(j);
                    if s == f64::INFINITY {
                        return Err(Error::NonConvergentMass { t: self.t, terms: j });
                    }
                    if !(s >= 0.0) {
                        return Err(
                            method.invalid(format!("coefficient s_{j} = {s} is not nonnegative"))
                        );
                    }
                    *w = if s == 0.0 {
                        0.0
                    } else {
                        (s.ln() + j as f64 * self.ln_t).exp()
                    };
                }
            }
        }
        self.j += BLOCK;
        Ok(())
    }
}

/// Numerator, mass and term count of one truncated evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformValue {
    pub value: f64,
    pub mass: f64,
    pub terms: usize,
}

struct DenseParts {
    numerator: f64,
    mass: f64,
    terms: usize,
}

/// Stopping rule shared by all truncated sums.
struct Truncation {
    t: f64,
    tol: f64,
    bound: BoundProfile,
    ratio_floor: f64,
    support: Option<usize>,
    prev_block_max: Option<f64>,
}

impl Truncation {
    fn new(method: &PowerSeriesMethod, t: f64, tol: f64, bound: BoundProfile) -> Self {
        Self {
            t,
            tol,
            bound,
            ratio_floor: method.block_ratio_floor(t),
            support: method.finite_support(),
            prev_block_max: None,
        }
    }

    /// Number of weights of the block starting at `j` that are summed.
    fn block_len(&self, j: usize) -> Result<usize> {
        if j >= MAX_SERIES_TERMS {
            return Err(Error::NonConvergentMass { t: self.t, terms: j });
        }
        Ok(self.support.map_or(BLOCK, |n| n.saturating_sub(j).min(BLOCK)))
    }

    /// Called after a block ending at `terms` has been summed.
    fn stop(&mut self, block: &[f64], terms: usize, partial_mass: f64) -> Result<bool> {
        let block_max = block.iter().fold(0.0f64, |m, &w| m.max(w));
        if !block_max.is_finite() || !partial_mass.is_finite() {
            return Err(Error::NonConvergentMass {
                t: self.t,
                terms,
            });
        }
        if block.len() < BLOCK {
            return Ok(true);
        }
        let done = self.prev_block_max.is_some_and(|prev| {
            let observed = if prev > 0.0 { block_max / prev } else { 0.0 };
            let ratio = observed.max(self.ratio_floor);
            tail_is_negligible(prev, block_max, ratio, terms, self.bound, self.tol, partial_mass)
        });
        self.prev_block_max = Some(block_max);
        Ok(done)
    }
}

/// Ascending-index summation of `sum visit(j) * w_j` and `sum w_j`, stopped by
/// the block majorant. `visit` is only called where `w_j != 0`.
fn sum_dense<F>(
    method: &PowerSeriesMethod,
    t: f64,
    tol: f64,
    bound: BoundProfile,
    mut visit: F,
) -> Result<DenseParts>
where
    F: FnMut(usize) -> Result<f64>,
{
    method.check_abscissa(t)?;
    let mut stream = method.stream(t);
    let mut truncation = Truncation::new(method, t, tol, bound);
    let mut buf = [0.0; BLOCK];
    let mut numerator = CompensatedSum::new();
    let mut mass = CompensatedSum::new();
    let mut j = 0usize;
    loop {
        let len = truncation.block_len(j)?;
        stream.fill(method, &mut buf)?;
        let block = &buf[..len];
        for (i, &w) in block.iter().enumerate() {
            if w != 0.0 {
                mass.add(w);
                numerator.add(visit(j + i)? * w);
            }
        }
        j += len;
        if truncation.stop(block, j, mass.value())? {
            break;
        }
    }
    Ok(DenseParts {
        numerator: numerator.value(),
        mass: mass.value(),
        terms: j,
    })
}

/// Truncated mass with per-residue accumulators. Consecutive weights land in
/// different accumulators, so the pass is not bound by one serial add chain.
fn sum_mass(method: &PowerSeriesMethod, t: f64, tol: f64) -> Result<TruncatedMass> {
    method.check_abscissa(t)?;
    let mut stream = method.stream(t);
    let mut truncation = Truncation::new(method, t, tol, BoundProfile::UNIT);
    let mut buf = [0.0; BLOCK];
    let mut residues = vec![CompensatedSum::new(); RESIDUE_BASE];
    // only steers the stopping rule
    let mut running = 0.0f64;
    let mut phase = 0usize;
    let mut j = 0usize;
    loop {
        let len = truncation.block_len(j)?;
        stream.fill(method, &mut buf)?;
        let block = &buf[..len];
        for &w in block {
            residues[phase].add(w);
            phase += 1;
            if phase == RESIDUE_BASE {
                phase = 0;
            }
        }
        running += block.iter().sum::<f64>();
        j += len;
        if truncation.stop(block, j, running)? {
            break;
        }
    }
    let residues: Arc<[f64]> = residues.iter().map(CompensatedSum::value).collect();
    let mass = residues.iter().copied().collect::<CompensatedSum>().value();
    Ok(TruncatedMass {
        mass,
        terms: j,
        residues,
    })
}

fn residue_pass(
    method: &PowerSeriesMethod,
    t: f64,
    terms: usize,
    modulus: usize,
) -> Result<Vec<f64>> {
    let mut sums = vec![CompensatedSum::new(); modulus];
    let mut stream = method.stream(t);
    let mut buf = [0.0; BLOCK];
    let mut phase = 0;
    let mut j = 0;
    while j < terms {
        stream.fill(method, &mut buf)?;
        for &w in &buf[..(terms - j).min(BLOCK)] {
            sums[phase].add(w);
            phase += 1;
            if phase == modulus {
                phase = 0;
            }
        }
        j += BLOCK;
    }
    Ok(sums.iter().map(CompensatedSum::value).collect())
}

fn tail_is_negligible(
    prev: f64,
    current: f64,
    ratio: f64,
    terms: usize,
    bound: BoundProfile,
    tol: f64,
    partial_mass: f64,
) -> bool {
    if current == 0.0 && prev == 0.0 {
        return true;
    }
    if prev == 0.0 {
        return false;
    }
    let n = terms as f64;
    let growth = ((n + BLOCK as f64 + 1.0) / (n + 1.0)).powf(bound.power);
    let ratio = ratio * growth;
    if ratio >= 1.0 {
        return false;
    }
    let tail = bound.at(terms) * BLOCK as f64 * current * ratio / (1.0 - ratio);
    tail < tol * partial_mass
}

#[inline]
fn checked_value(x: &Sequence, j: usize) -> Result<f64> {
    let v = x.value(j);
    let profile = x.bound();
    // the profile never drops below its scale when power >= 0
    if profile.power >= 0.0 && v.abs() <= profile.scale {
        return Ok(v);
    }
    let bound = profile.at(j);
    if v.abs() <= bound {
        Ok(v)
    } else {
        Err(Error::BoundViolation {
            label: x.label().to_string(),
            index: j,
            value: v.abs(),
            bound,
        })
    }
}

fn has_constant_periodic_tail(shape: &SequenceShape) -> bool {
    matches!(shape, SequenceShape::Periodic { slope, .. } if slope.iter().all(|&a| a == 0.0))
}

/// `s(t)`: the closed form when the method has one, truncated summation otherwise.
pub fn mass(method: &PowerSeriesMethod, t: f64, tol: f64) -> Result<f64> {
    method.check_abscissa(t)?;
    check_tol(tol)?;
    let value = match &method.closed_form {
        Some(closed) => closed(t),
        None => method.truncated_mass(t, tol)?.mass,
    };
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonConvergentMass { t, terms: 0 })
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "truncation tolerance {tol} not in (0, 1)"
        )))
    }
}

/// `(1 / s(t)) sum x_j s_j t^j` with numerator and mass truncated at the same index.
pub fn evaluate(
    method: &PowerSeriesMethod,
    x: &Sequence,
    t: f64,
    tol: f64,
) -> Result<TransformValue> {
    check_tol(tol)?;
    method.check_abscissa(t)?;
    let (numerator, mass, terms) = match x.shape() {
        SequenceShape::EventuallyConstant { from, value } => {
            let tm = method.truncated_mass(t, tol)?;
            checked_value(x, *from)?;
            let head_len = (*from).min(tm.terms);
            let head = method.weights_prefix(t, head_len)?;
            let mut num = CompensatedSum::new();
            let mut head_mass = CompensatedSum::new();
            for (j, &w) in head.iter().enumerate() {
                if w != 0.0 {
                    head_mass.add(w);
                    num.add(checked_value(x, j)? * w);
                }
            }
            if *from < tm.terms {
                num.add(value * (tm.mass - head_mass.value()));
            }
            (num.value(), tm.mass, tm.terms)
        }
        SequenceShape::Periodic { from, offset, .. } if has_constant_periodic_tail(x.shape()) => {
            let tm = method.truncated_mass(t, tol)?;
            let p = offset.len();
            for j in *from..*from + p {
                checked_value(x, j)?;
            }
            let head_len = (*from).min(tm.terms);
            let head = method.weights_prefix(t, head_len)?;
            let mut num = CompensatedSum::new();
            let mut head_by_residue = vec![CompensatedSum::new(); p];
            for (j, &w) in head.iter().enumerate() {
                if w != 0.0 {
                    head_by_residue[j % p].add(w);
                    num.add(checked_value(x, j)? * w);
                }
            }
            if *from < tm.terms {
                let residues = method.residue_masses(t, tol, p)?;
                for r in 0..p {
                    if offset[r] != 0.0 {
                        num.add(offset[r] * (residues[r] - head_by_residue[r].value()));
                    }
                }
            }
            (num.value(), tm.mass, tm.terms)
        }
        SequenceShape::SparseSupport {
            support,
            background,
        } => {
            let tm = method.truncated_mass(t, tol)?;
            let mut num = CompensatedSum::new();
            if *background != 0.0 {
                num.add(background * tm.mass);
            }
            for j in support().take_while(|&j| j < tm.terms) {
                let w = method.weight_at(j, t);
                if w != 0.0 {
                    num.add((checked_value(x, j)? - background) * w);
                }
            }
            (num.value(), tm.mass, tm.terms)
        }
        SequenceShape::General | SequenceShape::Periodic { .. } => {
            let parts = sum_dense(method, t, tol, x.bound(), |j| checked_value(x, j))?;
            (parts.numerator, parts.mass, parts.terms)
        }
    };
    if !(mass > 0.0) {
        return Err(Error::NonConvergentMass { t, terms });
    }
    if !numerator.is_finite() {
        return Err(Error::NonConvergentMass { t, terms });
    }
    Ok(TransformValue {
        value: numerator / mass,
        mass,
        terms,
    })
}

pub fn transform(method: &PowerSeriesMethod, x: &Sequence, t: f64, tol: f64) -> Result<f64> {
    evaluate(method, x, t, tol).map(|v| v.value)
}

/// Abscissae approaching `R` from below plus tolerances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSchedule {
    pub abscissae: Vec<f64>,
    pub trunc_tol: f64,
    pub limit_tol: f64,
    pub horizon: usize,
}

impl EvalSchedule {
    pub fn new(abscissae: Vec<f64>, trunc_tol: f64, limit_tol: f64, horizon: usize) -> Result<Self> {
        let schedule = Self {
            abscissae,
            trunc_tol,
            limit_tol,
            horizon,
        };
        schedule.check()?;
        Ok(schedule)
    }

    fn check(&self) -> Result<()> {
        if self.abscissae.is_empty() {
            return Err(Error::InvalidSchedule("no abscissae".into()));
        }
        if self.abscissae.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidSchedule(
                "abscissae must be strictly increasing".into(),
            ));
        }
        if !(self.trunc_tol > 0.0 && self.trunc_tol < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "trunc_tol {} not in (0, 1)",
                self.trunc_tol
            )));
        }
        if !(self.limit_tol > 0.0 && self.limit_tol < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "limit_tol {} not in (0, 1)",
                self.limit_tol
            )));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidSchedule("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Geometric approach to the radius: `R (1 - 2^-m)` for `m = 4..=20`, or
    /// `2^m` for `m = 0..=5` when the radius is infinite.
    pub fn default_for(method: &PowerSeriesMethod) -> Self {
        let abscissae = match method.radius() {
            Radius::Finite(r) => (4..=20).map(|m| r * (1.0 - 0.5f64.powi(m))).collect(),
            Radius::Infinite => (0..=5).map(|m| 2.0f64.powi(m)).collect(),
        };
        Self {
            abscissae,
            trunc_tol: DEFAULT_TRUNC_TOL,
            limit_tol: DEFAULT_LIMIT_TOL,
            horizon: DEFAULT_HORIZON,
        }
    }

    pub fn validate_for(&self, method: &PowerSeriesMethod) -> Result<()> {
        self.check()?;
        for &t in &self.abscissae {
            method.check_abscissa(t)?;
        }
        Ok(())
    }

    pub fn last(&self) -> f64 {
        *self.abscissae.last().expect("schedule is non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitEstimate {
    pub per_t: Vec<(f64, f64)>,
    pub value: f64,
    pub converged: bool,
    pub residual: f64,
}

impl LimitEstimate {
    pub(crate) fn from_values(per_t: Vec<(f64, f64)>, limit_tol: f64) -> Self {
        let n = per_t.len();
        let value = per_t[n - 1].1;
        let residual = (per_t[n - 1].1 - per_t[n - 2].1).abs();
        let tail = &per_t[n - 3..];
        let converged = tail.iter().enumerate().all(|(i, a)| {
            tail[i + 1..]
                .iter()
                .all(|b| (a.1 - b.1).abs() < limit_tol)
        });
        Self {
            per_t,
            value,
            converged,
            residual,
        }
    }
}

/// The method limit of `x`, estimated along `schedule`.
pub fn p_limit(
    method: &PowerSeriesMethod,
    x: &Sequence,
    schedule: &EvalSchedule,
) -> Result<LimitEstimate> {
    schedule.validate_for(method)?;
    if schedule.abscissae.len() < 3 {
        return Err(Error::ScheduleTooShort {
            len: schedule.abscissae.len(),
        });
    }
    let values = schedule
        .abscissae
        .par_iter()
        .map(|&t| transform(method, x, t, schedule.trunc_tol).map(|v| (t, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LimitEstimate::from_values(values, schedule.limit_tol))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityTrajectory {
    pub j: usize,
    /// `(t, s_j t^j / s(t))`.
    pub values: Vec<(f64, f64)>,
    pub monotone_tail: bool,
    pub final_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub method: String,
    pub trajectories: Vec<RegularityTrajectory>,
    /// Every trajectory ends below the schedule's limit tolerance.
    pub consistent_with_regularity: bool,
}

/// Tracks `s_j t^j / s(t)` for `j <= max_index` along the schedule.
pub fn regularity_probe(
    method: &PowerSeriesMethod,
    max_index: usize,
    schedule: &EvalSchedule,
) -> Result<RegularityReport> {
    schedule.validate_for(method)?;
    if max_index > schedule.horizon {
        return Err(Error::InvalidParameter(format!(
            "probe index {max_index} exceeds horizon {}",
            schedule.horizon
        )));
    }
    let masses = schedule
        .abscissae
        .par_iter()
        .map(|&t| mass(method, t, schedule.trunc_tol))
        .collect::<Result<Vec<_>>>()?;
    let trajectories: Vec<RegularityTrajectory> = (0..=max_index)
        .map(|j| {
            let values: Vec<(f64, f64)> = schedule
                .abscissae
                .iter()
                .zip(&masses)
                .map(|(&t, &s)| (t, method.weight_at(j, t) / s))
                .collect();
            let half = values.len() / 2;
            let tail_start = half.min(values.len().saturating_sub(3));
            let monotone_tail = values[tail_start..]
                .windows(2)
                .all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
            let final_value = values.last().map_or(f64::NAN, |v| v.1);
            RegularityTrajectory {
                j,
                values,
                monotone_tail,
                final_value,
            }
        })
        .collect();
    let consistent = trajectories
        .iter()
        .all(|tr| tr.final_value < schedule.limit_tol);
    Ok(RegularityReport {
        method: method.name().to_string(),
        trajectories,
        consistent_with_regularity: consistent,
    })
}
