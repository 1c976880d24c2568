//! Compact domains (intervals and the 2π-circle) and uniform sample grids.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_INTERVAL_POINTS: usize = 1025;
pub const DEFAULT_CIRCLE_POINTS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Domain {
    Interval { a: f64, b: f64 },
    /// `[0, 2π)` with arc distance.
    Circle,
}

impl Domain {
    pub const UNIT: Domain = Domain::Interval { a: 0.0, b: 1.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Interval { a, b } if !(a < b && a.is_finite() && b.is_finite()) => Err(
                Error::InvalidParameter(format!("interval [{a}, {b}] is empty or unbounded")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, Domain::Circle)
    }

    pub fn distance(&self, x: f64, y: f64) -> f64 {
        match self {
            Domain::Interval { .. } => (x - y).abs(),
            Domain::Circle => {
                let d = (x - y).abs().rem_euclid(TAU);
                d.min(TAU - d)
            }
        }
    }

    /// Nodes of operators must satisfy this; the circle accepts any real.
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Domain::Interval { a, b } => x >= a && x <= b,
            Domain::Circle => x.is_finite(),
        }
    }

    pub fn default_points(&self) -> usize {
        match self {
            Domain::Interval { .. } => DEFAULT_INTERVAL_POINTS,
            Domain::Circle => DEFAULT_CIRCLE_POINTS,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Domain::Interval { a, b } => format!("[{a}, {b}]"),
            Domain::Circle => "circle".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    domain: Domain,
    points: Vec<f64>,
}

impl Grid {
    /// `m` uniform points; the circle grid omits `2π`.
    pub fn uniform(domain: Domain, m: usize) -> Result<Self> {
        domain.validate()?;
        if m < 2 {
            return Err(Error::DegenerateGrid {
                points: m,
                required: 2,
            });
        }
        let points = match domain {
            Domain::Interval { a, b } => {
                let mut p: Vec<f64> = (0..m)
                    .map(|i| a + (b - a) * (i as f64 / (m - 1) as f64))
                    .collect();
                p[m - 1] = b;
                p
            }
            Domain::Circle => (0..m).map(|i| TAU * i as f64 / m as f64).collect(),
        };
        Ok(Self { domain, points })
    }

    pub fn default_for(domain: Domain) -> Result<Self> {
        Self::uniform(domain, domain.default_points())
    }

    pub fn from_points(domain: Domain, points: Vec<f64>) -> Result<Self> {
        domain.validate()?;
        if points.len() < 2 {
            return Err(Error::DegenerateGrid {
                points: points.len(),
                required: 2,
            });
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "grid points must be strictly increasing".into(),
            ));
        }
        let inside = match domain {
            Domain::Interval { .. } => points.iter().all(|&x| domain.contains(x)),
            Domain::Circle => points.iter().all(|&x| (0.0..TAU).contains(&x)),
        };
        if !inside {
            return Err(Error::InvalidParameter(
                "grid points leave the domain".into(),
            ));
        }
        Ok(Self { domain, points })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|&x| f(x)).collect()
    }
}

/// `max |u - v|` over a shared grid.
pub fn sup_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::GridMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

pub fn sup_norm(u: &[f64]) -> f64 {
    u.iter().map(|a| a.abs()).fold(0.0, f64::max)
}
