//! Real sequences and index sets as rules over ℕ₀.
//!
//! Both carry an optional *shape* describing structure the summation code can
//! exploit: an eventually-constant tail is summed in closed form against the
//! truncated mass, and a sparse support is summed member by member. The rule
//! is always authoritative; shapes are only promises about it.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::Serialize;

/// Ascending enumeration of a set's members, restarted on every call.
pub type Enumerator = Arc<dyn Fn() -> Box<dyn Iterator<Item = usize> + Send> + Send + Sync>;

type ValueRule = Arc<dyn Fn(usize) -> f64 + Send + Sync>;
type MemberRule = Arc<dyn Fn(usize) -> bool + Send + Sync>;

/// Declared growth bound `|x_j| <= scale * (1 + j)^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundProfile {
    pub scale: f64,
    pub power: f64,
}

impl BoundProfile {
    pub const UNIT: BoundProfile = BoundProfile {
        scale: 1.0,
        power: 0.0,
    };

    pub fn new(scale: f64, power: f64) -> Self {
        Self { scale, power }
    }

    pub fn at(&self, j: usize) -> f64 {
        if self.power == 0.0 {
            self.scale
        } else {
            self.scale * (1.0 + j as f64).powf(self.power)
        }
    }
}

#[derive(Clone)]
pub enum SequenceShape {
    General,
    /// `x_j == value` for every `j >= from`.
    EventuallyConstant { from: usize, value: f64 },
    /// `x_j == background` off the enumerated support.
    SparseSupport {
        support: Enumerator,
        background: f64,
    },
    /// `x_j == slope[r] * j + offset[r]` with `r = j mod p` for every `j >= from`.
    Periodic {
        from: usize,
        slope: Arc<[f64]>,
        offset: Arc<[f64]>,
    },
}

impl SequenceShape {
    /// Periodic shape with zero slopes.
    pub fn periodic(from: usize, pattern: Vec<f64>) -> Self {
        assert!(!pattern.is_empty(), "empty periodic pattern");
        SequenceShape::Periodic {
            from,
            slope: vec![0.0; pattern.len()].into(),
            offset: pattern.into(),
        }
    }
}

#[derive(Clone)]
pub struct Sequence {
    label: String,
    rule: ValueRule,
    bound: BoundProfile,
    shape: SequenceShape,
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sequence")
            .field("label", &self.label)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl Sequence {
    pub fn new<F>(label: impl Into<String>, bound: BoundProfile, rule: F) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            rule: Arc::new(rule),
            bound,
            shape: SequenceShape::General,
        }
    }

    /// Attaches structural information. The caller guarantees it matches the rule.
    pub fn with_shape(mut self, shape: SequenceShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn constant(value: f64) -> Self {
        Self::new(
            format!("constant({value})"),
            BoundProfile::new(value.abs(), 0.0),
            move |_| value,
        )
        .with_shape(SequenceShape::EventuallyConstant { from: 0, value })
    }

    /// `x_j = (-1)^j`.
    pub fn alternating() -> Self {
        Self::new("alternating", BoundProfile::UNIT, |j| {
            if j % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .with_shape(SequenceShape::periodic(0, vec![1.0, -1.0]))
    }

    /// `eta_j = j` for even `j`, `0` for odd `j`.
    pub fn even_index_ramp() -> Self {
        Self::new("eta", BoundProfile::new(1.0, 1.0), |j| {
            if j % 2 == 0 {
                j as f64
            } else {
                0.0
            }
        })
        .with_shape(SequenceShape::Periodic {
            from: 0,
            slope: vec![1.0, 0.0].into(),
            offset: vec![0.0, 0.0].into(),
        })
    }

    /// Finite table of values followed by a constant tail.
    pub fn from_values(label: impl Into<String>, values: Vec<f64>, tail: f64) -> Self {
        let scale = values.iter().fold(tail.abs(), |m, v| m.max(v.abs()));
        let from = values.len();
        let values: Arc<[f64]> = values.into();
        Self::new(label, BoundProfile::new(scale, 0.0), move |j| {
            values.get(j).copied().unwrap_or(tail)
        })
        .with_shape(SequenceShape::EventuallyConstant { from, value: tail })
    }

    /// `alpha * x + beta * y`. Structure is kept only when both operands share it.
    pub fn linear_combination(alpha: f64, x: &Sequence, beta: f64, y: &Sequence) -> Self {
        let bound = BoundProfile::new(
            alpha.abs() * x.bound.scale + beta.abs() * y.bound.scale,
            x.bound.power.max(y.bound.power),
        );
        let (rx, ry) = (x.rule.clone(), y.rule.clone());
        let shape = match (&x.shape, &y.shape) {
            (
                SequenceShape::EventuallyConstant { from: fx, value: vx },
                SequenceShape::EventuallyConstant { from: fy, value: vy },
            ) => SequenceShape::EventuallyConstant {
                from: (*fx).max(*fy),
                value: alpha * vx + beta * vy,
            },
            _ => SequenceShape::General,
        };
        Self::new(
            format!("{alpha}*{} + {beta}*{}", x.label, y.label),
            bound,
            move |j| alpha * rx(j) + beta * ry(j),
        )
        .with_shape(shape)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bound(&self) -> BoundProfile {
        self.bound
    }

    pub fn shape(&self) -> &SequenceShape {
        &self.shape
    }

    #[inline]
    pub fn value(&self, j: usize) -> f64 {
        (self.rule)(j)
    }

    pub fn rule(&self) -> ValueRule {
        self.rule.clone()
    }
}

#[derive(Clone)]
pub enum SetShape {
    General,
    /// Membership is `member` for every `j >= from`.
    Eventually { from: usize, member: bool },
    /// Members are exactly the enumerated indices.
    Sparse(Enumerator),
    /// Membership is `pattern[j mod p]` for every `j >= from`.
    Periodic { from: usize, pattern: Arc<[bool]> },
}

#[derive(Clone)]
pub struct IndexSet {
    label: String,
    rule: MemberRule,
    shape: SetShape,
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IndexSet")
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

impl IndexSet {
    pub fn new<F>(label: impl Into<String>, rule: F) -> Self
    where
        F: Fn(usize) -> bool + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            rule: Arc::new(rule),
            shape: SetShape::General,
        }
    }

    pub fn with_shape(mut self, shape: SetShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn all() -> Self {
        Self::new("all", |_| true).with_shape(SetShape::Eventually {
            from: 0,
            member: true,
        })
    }

    pub fn empty() -> Self {
        Self::new("empty", |_| false).with_shape(SetShape::Eventually {
            from: 0,
            member: false,
        })
    }

    pub fn evens() -> Self {
        Self::residue_class(2, 0).relabel("evens")
    }

    pub fn odds() -> Self {
        Self::residue_class(2, 1).relabel("odds")
    }

    pub fn residue_class(modulus: usize, residue: usize) -> Self {
        assert!(modulus > 0, "residue class modulus must be positive");
        let residue = residue % modulus;
        let pattern: Vec<bool> = (0..modulus).map(|r| r == residue).collect();
        Self::new(format!("{residue} mod {modulus}"), move |j| {
            j % modulus == residue
        })
        .with_shape(SetShape::Periodic {
            from: 0,
            pattern: pattern.into(),
        })
    }

    /// `{lo, lo + 1, ..., hi - 1}`.
    pub fn range(lo: usize, hi: usize) -> Self {
        Self::new(format!("[{lo}, {hi})"), move |j| j >= lo && j < hi).with_shape(
            SetShape::Eventually {
                from: hi.max(lo),
                member: false,
            },
        )
    }

    pub fn squares() -> Self {
        Self::new("squares", |j| {
            let r = isqrt(j);
            r * r == j
        })
        .with_shape(SetShape::Sparse(Arc::new(|| {
            Box::new((0usize..).map(|k| k * k))
        })))
    }

    pub fn cubes() -> Self {
        Self::new("cubes", |j| {
            let r = (j as f64).cbrt().round() as usize;
            (r.saturating_sub(1)..=r + 1).any(|c| c * c * c == j)
        })
        .with_shape(SetShape::Sparse(Arc::new(|| {
            Box::new((0usize..).map(|k| k * k * k))
        })))
    }

    pub fn primes() -> Self {
        Self::new("primes", is_prime)
    }

    /// A finite explicit listing.
    pub fn explicit(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        let end = members.last().map_or(0, |m| m + 1);
        let listing: Arc<[usize]> = members.into();
        Self::new("explicit", move |j| listing.binary_search(&j).is_ok()).with_shape(
            SetShape::Eventually {
                from: end,
                member: false,
            },
        )
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn complement(&self) -> Self {
        let rule = self.rule.clone();
        let shape = match &self.shape {
            SetShape::Eventually { from, member } => SetShape::Eventually {
                from: *from,
                member: !member,
            },
            SetShape::Periodic { from, pattern } => SetShape::Periodic {
                from: *from,
                pattern: pattern.iter().map(|m| !m).collect(),
            },
            _ => SetShape::General,
        };
        Self {
            label: format!("complement({})", self.label),
            rule: Arc::new(move |j| !rule(j)),
            shape,
        }
    }

    /// `{j : |x_j - limit| >= epsilon}`.
    pub fn exception(x: &Sequence, limit: f64, epsilon: f64) -> Self {
        let rule = x.rule();
        let member = move |j: usize| (rule(j) - limit).abs() >= epsilon;
        let shape = match x.shape() {
            SequenceShape::EventuallyConstant { from, value } => SetShape::Eventually {
                from: *from,
                member: (value - limit).abs() >= epsilon,
            },
            SequenceShape::SparseSupport {
                support,
                background,
            } if (background - limit).abs() < epsilon => {
                let support = support.clone();
                let rule = x.rule();
                SetShape::Sparse(Arc::new(move || {
                    let rule = rule.clone();
                    Box::new(support().filter(move |&j| (rule(j) - limit).abs() >= epsilon))
                }))
            }
            SequenceShape::Periodic {
                from,
                slope,
                offset,
            } => {
                let mut start = *from;
                let pattern: Vec<bool> = slope
                    .iter()
                    .zip(offset.iter())
                    .map(|(&a, &b)| {
                        if a == 0.0 {
                            (b - limit).abs() >= epsilon
                        } else {
                            // |a j + b - L| >= eps once j >= (|b - L| + eps) / |a|
                            let reach = ((b - limit).abs() + epsilon) / a.abs();
                            start = start.max(reach.ceil() as usize + 1);
                            true
                        }
                    })
                    .collect();
                SetShape::Periodic {
                    from: start,
                    pattern: pattern.into(),
                }
            }
            _ => SetShape::General,
        };
        Self::new(
            format!("{{j : |{} - {limit}| >= {epsilon}}}", x.label()),
            member,
        )
        .with_shape(shape)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn shape(&self) -> &SetShape {
        &self.shape
    }

    #[inline]
    pub fn contains(&self, j: usize) -> bool {
        (self.rule)(j)
    }

    pub fn rule(&self) -> MemberRule {
        self.rule.clone()
    }

    /// Sorted members below `horizon`.
    pub fn members_below(&self, horizon: usize) -> Vec<usize> {
        match &self.shape {
            SetShape::Sparse(en) => en().take_while(|&j| j < horizon).collect(),
            _ => (0..horizon).filter(|&j| self.contains(j)).collect(),
        }
    }

    /// Indicator sequence `1{j in E}`.
    pub fn indicator(&self) -> Sequence {
        let rule = self.rule.clone();
        let shape = match &self.shape {
            SetShape::General => SequenceShape::General,
            SetShape::Eventually { from, member } => SequenceShape::EventuallyConstant {
                from: *from,
                value: if *member { 1.0 } else { 0.0 },
            },
            SetShape::Sparse(en) => SequenceShape::SparseSupport {
                support: en.clone(),
                background: 0.0,
            },
            SetShape::Periodic { from, pattern } => SequenceShape::periodic(
                *from,
                pattern.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
            ),
        };
        Sequence::new(
            format!("1[{}]", self.label),
            BoundProfile::UNIT,
            move |j| if rule(j) { 1.0 } else { 0.0 },
        )
        .with_shape(shape)
    }
}

pub(crate) fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

const SIEVE_LIMIT: usize = 1 << 25;

fn sieve() -> &'static [bool] {
    static SIEVE: OnceLock<Vec<bool>> = OnceLock::new();
    SIEVE.get_or_init(|| {
        let mut composite = vec![false; SIEVE_LIMIT];
        composite[0] = true;
        composite[1] = true;
        let mut p = 2;
        while p * p < SIEVE_LIMIT {
            if !composite[p] {
                let mut m = p * p;
                while m < SIEVE_LIMIT {
                    composite[m] = true;
                    m += p;
                }
            }
            p += 1;
        }
        composite
    })
}

fn is_prime(n: usize) -> bool {
    if n < SIEVE_LIMIT {
        return !sieve()[n];
    }
    miller_rabin(n as u64)
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

// deterministic for all 64-bit inputs with these bases
fn miller_rabin(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}
