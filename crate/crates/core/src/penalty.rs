//! Folded-concave penalties and their scalar thresholding operators.
//!
//! All functions take the magnitude `t = |beta|`; the solver applies the sign.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Default SCAD shape.
pub const SCAD_A: f64 = 3.7;
/// Default MCP shape.
pub const MCP_A: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Scad,
    Mcp,
    Lasso,
    None,
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scad" => Ok(PenaltyKind::Scad),
            "mcp" => Ok(PenaltyKind::Mcp),
            "lasso" | "l1" => Ok(PenaltyKind::Lasso),
            "none" => Ok(PenaltyKind::None),
            other => contract(format!("unknown penalty '{other}'")),
        }
    }
}

impl PenaltyKind {
    pub fn default_shape(self) -> f64 {
        match self {
            PenaltyKind::Mcp => MCP_A,
            _ => SCAD_A,
        }
    }
}

/// A penalty family together with its tuning parameter `lambda` and shape `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
    pub a: f64,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: f64, a: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return contract(format!("lambda must be finite and >= 0, got {lambda}"));
        }
        match kind {
            PenaltyKind::Scad if !(a > 2.0) => contract(format!("SCAD needs a > 2, got {a}")),
            PenaltyKind::Mcp if !(a > 1.0) => contract(format!("MCP needs a > 1, got {a}")),
            _ => Ok(PenaltySpec { kind, lambda, a }),
        }
    }

    pub fn scad(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::Scad, lambda, SCAD_A)
    }

    pub fn mcp(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::Mcp, lambda, MCP_A)
    }

    pub fn lasso(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::Lasso, lambda, SCAD_A)
    }

    pub fn none() -> Self {
        PenaltySpec {
            kind: PenaltyKind::None,
            lambda: 0.0,
            a: SCAD_A,
        }
    }

    /// Same family and shape at another `lambda`.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        PenaltySpec { lambda, ..*self }
    }

    fn is_zero(&self) -> bool {
        self.kind == PenaltyKind::None || self.lambda == 0.0
    }

    /// `p_lambda(t)` for `t >= 0`.
    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return contract(format!("penalty argument must be >= 0, got {t}"));
        }
        Ok(self.value_abs(t))
    }

    /// `p'_lambda(t)` for `t >= 0`.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return contract(format!("penalty argument must be >= 0, got {t}"));
        }
        Ok(self.derivative_abs(t))
    }

    /// Global minimizer of `w/2 (z - b)^2 + p_lambda(|b|)`.
    pub fn prox(&self, z: f64, w: f64) -> Result<f64> {
        if !(w > 0.0 && w.is_finite()) {
            return contract(format!("prox curvature must be > 0, got {w}"));
        }
        Ok(self.prox_unchecked(z, w))
    }

    pub(crate) fn value_abs(&self, t: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let (l, a) = (self.lambda, self.a);
        match self.kind {
            PenaltyKind::Lasso => l * t,
            PenaltyKind::Scad => {
                if t <= l {
                    l * t
                } else if t <= a * l {
                    -(t * t - 2.0 * a * l * t + l * l) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * l * l / 2.0
                }
            }
            PenaltyKind::Mcp => {
                if t <= a * l {
                    l * t - t * t / (2.0 * a)
                } else {
                    a * l * l / 2.0
                }
            }
            PenaltyKind::None => 0.0,
        }
    }

    pub(crate) fn derivative_abs(&self, t: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let (l, a) = (self.lambda, self.a);
        match self.kind {
            PenaltyKind::Lasso => l,
            PenaltyKind::Scad => {
                if t <= l {
                    l
                } else {
                    (a * l - t).max(0.0) / (a - 1.0)
                }
            }
            PenaltyKind::Mcp => (l - t / a).max(0.0),
            PenaltyKind::None => 0.0,
        }
    }

    pub(crate) fn prox_unchecked(&self, z: f64, w: f64) -> f64 {
        if self.is_zero() {
            return z;
        }
        let u = z.abs();
        let (l, a) = (self.lambda, self.a);
        let b = match self.kind {
            PenaltyKind::Lasso => (u - l / w).max(0.0),
            PenaltyKind::Scad if w * (a - 1.0) > 1.0 => {
                if u <= l / w {
                    0.0
                } else if u <= l + l / w {
                    u - l / w
                } else if u <= a * l {
                    ((a - 1.0) * w * u - a * l) / ((a - 1.0) * w - 1.0)
                } else {
                    u
                }
            }
            PenaltyKind::Mcp if w * a > 1.0 => {
                if u <= l / w {
                    0.0
                } else if u <= a * l {
                    (w * u - l) / (w - 1.0 / a)
                } else {
                    u
                }
            }
            PenaltyKind::Scad | PenaltyKind::Mcp => self.prox_by_candidates(u, w),
            PenaltyKind::None => u,
        };
        if z < 0.0 {
            -b
        } else {
            b
        }
    }

    /// Nonconvex scalar problem: compare every piecewise stationary point and
    /// breakpoint on `b >= 0`. Ties go to the nonzero candidate.
    fn prox_by_candidates(&self, u: f64, w: f64) -> f64 {
        let (l, a) = (self.lambda, self.a);
        let f = |b: f64| 0.5 * w * (u - b) * (u - b) + self.value_abs(b);
        let mut cands: Vec<f64> = Vec::with_capacity(6);
        match self.kind {
            PenaltyKind::Scad => {
                cands.push((u - l / w).clamp(0.0, l));
                let den = w - 1.0 / (a - 1.0);
                if den != 0.0 {
                    cands.push(((w * u - a * l / (a - 1.0)) / den).clamp(l, a * l));
                }
                cands.push(u.max(a * l));
                cands.extend([l, a * l]);
            }
            PenaltyKind::Mcp => {
                let den = w - 1.0 / a;
                if den != 0.0 {
                    cands.push(((w * u - l) / den).clamp(0.0, a * l));
                }
                cands.push(u.max(a * l));
                cands.push(a * l);
            }
            _ => unreachable!("closed forms cover convex penalties"),
        }
        let mut best = 0.0;
        let mut best_val = f(0.0);
        for c in cands {
            if c <= 0.0 {
                continue;
            }
            let v = f(c);
            if v <= best_val {
                best = c;
                best_val = v;
            }
        }
        best
    }
}
