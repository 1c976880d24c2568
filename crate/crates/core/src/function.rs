//! Real functions with optional analytic derivatives.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use crate::domain::Domain;
use crate::error::{Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct FunctionHandle {
    label: String,
    /// `derivatives[0]` is the function itself.
    derivatives: Vec<RealFn>,
    /// Derivatives past the stored ones vanish identically (polynomials).
    zero_tail: bool,
    periodic: bool,
}

impl fmt::Debug for FunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionHandle")
            .field("label", &self.label)
            .field("order", &self.order())
            .field("periodic", &self.periodic)
            .finish()
    }
}

impl FunctionHandle {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            derivatives: vec![Arc::new(f)],
            zero_tail: false,
            periodic: false,
        }
    }

    /// `fs[nu]` evaluates the `nu`-th derivative; `fs[0]` is the function.
    pub fn with_derivatives(label: impl Into<String>, fs: Vec<RealFn>) -> Self {
        assert!(!fs.is_empty(), "a function handle needs a value rule");
        Self {
            label: label.into(),
            derivatives: fs,
            zero_tail: false,
            periodic: false,
        }
    }

    pub fn periodic(mut self) -> Self {
        self.periodic = true;
        self
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Drops derivatives above `order`.
    pub fn truncate_order(mut self, order: usize) -> Self {
        self.derivatives.truncate(order + 1);
        self.zero_tail = false;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Highest derivative order available; `usize::MAX` for polynomials.
    pub fn order(&self) -> usize {
        if self.zero_tail {
            usize::MAX
        } else {
            self.derivatives.len() - 1
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.derivatives[0])(x)
    }

    pub fn derivative(&self, nu: usize, x: f64) -> Option<f64> {
        match self.derivatives.get(nu) {
            Some(d) => Some(d(x)),
            None if self.zero_tail => Some(0.0),
            None => None,
        }
    }

    pub fn require_order(&self, r: usize) -> Result<()> {
        if self.order() >= r {
            Ok(())
        } else {
            Err(Error::MissingDerivatives {
                label: self.label.clone(),
                have: self.order(),
                need: r,
            })
        }
    }

    pub fn value_rule(&self) -> RealFn {
        self.derivatives[0].clone()
    }

    /// On the circle the function must be flagged periodic and close up.
    pub fn check_on(&self, domain: &Domain) -> Result<()> {
        if domain.is_circle() {
            let gap = (self.eval(0.0) - self.eval(TAU)).abs();
            if !self.periodic || !(gap <= 1e-9) {
                return Err(Error::InvalidParameter(format!(
                    "function `{}` is not 2π-periodic (flag {}, gap {gap:e})",
                    self.label, self.periodic
                )));
            }
        }
        Ok(())
    }

    /// `sum c_i f_i`; derivatives kept up to the smallest common order.
    pub fn linear_combination(label: impl Into<String>, terms: &[(f64, FunctionHandle)]) -> Self {
        assert!(!terms.is_empty(), "empty linear combination");
        let zero_tail = terms.iter().all(|(_, f)| f.zero_tail);
        let stored = if zero_tail {
            terms.iter().map(|(_, f)| f.derivatives.len()).max().unwrap_or(1)
        } else {
            terms.iter().map(|(_, f)| f.order()).min().unwrap_or(0) + 1
        };
        let periodic = terms.iter().all(|(_, f)| f.periodic);
        let derivatives = (0..stored)
            .map(|nu| {
                let parts: Vec<(f64, RealFn)> = terms
                    .iter()
                    .filter_map(|(c, f)| f.derivatives.get(nu).map(|d| (*c, d.clone())))
                    .collect();
                Arc::new(move |x: f64| parts.iter().map(|(c, d)| c * d(x)).sum::<f64>()) as RealFn
            })
            .collect();
        Self {
            label: label.into(),
            derivatives,
            zero_tail,
            periodic,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::polynomial(format!("{c}"), vec![c])
    }

    /// `x^k` with all derivatives.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        Self::polynomial(format!("e{k}"), coeffs)
    }

    /// `sum coeffs[i] x^i` with all nonzero derivatives.
    pub fn polynomial(label: impl Into<String>, coeffs: Vec<f64>) -> Self {
        let mut derivatives: Vec<RealFn> = Vec::with_capacity(coeffs.len() + 1);
        let mut current = coeffs;
        loop {
            let c: Arc<[f64]> = current.clone().into();
            derivatives.push(Arc::new(move |x| horner(&c, x)));
            if current.len() <= 1 {
                break;
            }
            current = current
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, a)| i as f64 * a)
                .collect();
        }
        Self {
            zero_tail: true,
            ..Self::with_derivatives(label, derivatives)
        }
    }

    pub fn sin() -> Self {
        Self::trig("sin", 0)
    }

    pub fn cos() -> Self {
        Self::trig("cos", 1)
    }

    // derivative cycle sin, cos, -sin, -cos starting at `phase`
    fn trig(label: &str, phase: usize) -> Self {
        let derivatives = (0..=6)
            .map(|nu| {
                let f: RealFn = match (nu + phase) % 4 {
                    0 => Arc::new(f64::sin),
                    1 => Arc::new(f64::cos),
                    2 => Arc::new(|x: f64| -x.sin()),
                    _ => Arc::new(|x: f64| -x.cos()),
                };
                f
            })
            .collect();
        Self::with_derivatives(label, derivatives).periodic()
    }

    /// `sin(pi x)`.
    pub fn sin_pi() -> Self {
        let derivatives = (0..=6)
            .map(|nu| {
                let scale = PI.powi(nu as i32);
                let f: RealFn = match nu % 4 {
                    0 => Arc::new(move |x: f64| scale * (PI * x).sin()),
                    1 => Arc::new(move |x: f64| scale * (PI * x).cos()),
                    2 => Arc::new(move |x: f64| -scale * (PI * x).sin()),
                    _ => Arc::new(move |x: f64| -scale * (PI * x).cos()),
                };
                f
            })
            .collect();
        Self::with_derivatives("sin(pi x)", derivatives)
    }

    pub fn exp() -> Self {
        let derivatives = (0..=6).map(|_| Arc::new(f64::exp) as RealFn).collect();
        Self::with_derivatives("exp", derivatives)
    }

    /// `|x - c|`, no derivatives.
    pub fn abs_shift(c: f64) -> Self {
        Self::new(format!("|x - {c}|"), move |x| (x - c).abs())
    }

    pub fn sqrt() -> Self {
        Self::new("sqrt", |x: f64| x.max(0.0).sqrt())
    }

    /// `(x - 1/2)|x - 1/2| + x`: C¹ with a Lipschitz first derivative and no
    /// second derivative at 1/2.
    pub fn kinked_quadratic() -> Self {
        Self::with_derivatives(
            "(x - 1/2)|x - 1/2| + x",
            vec![
                Arc::new(|x: f64| (x - 0.5) * (x - 0.5).abs() + x),
                Arc::new(|x: f64| 2.0 * (x - 0.5).abs() + 1.0),
            ],
        )
    }

    /// Triangle wave `|u - π|` with `u = x mod 2π`: continuous, periodic, not a
    /// trigonometric polynomial.
    pub fn triangle_wave() -> Self {
        Self::new("triangle wave", |x: f64| (x.rem_euclid(TAU) - PI).abs()).periodic()
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}
