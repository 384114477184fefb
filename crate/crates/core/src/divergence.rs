//! The power-divergence family `phi_lambda` and the divergences it induces
//! between probability vectors.
//!
//! `lambda = 0` gives `d(q, p) = Kullback(q, p)`, `lambda = -1` gives
//! `Kullback(p, q)`. Both limit cases are selected by exact comparison.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// A member of the power-divergence family, indexed by `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDivergence {
    lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    /// `lambda = 0`: `x log x - x + 1`.
    Kullback,
    /// `lambda = -1`: `-log x + x - 1`.
    ReverseKullback,
    Power,
}

impl PowerDivergence {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::Invalid(format!(
                "lambda must be finite, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn branch(&self) -> Branch {
        if self.lambda == 0.0 {
            Branch::Kullback
        } else if self.lambda == -1.0 {
            Branch::ReverseKullback
        } else {
            Branch::Power
        }
    }

    /// Parses `-1`, `0.5`, or a rational literal such as `2/3`.
    pub fn parse(token: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("cannot parse lambda value {token:?}"));
        let t = token.trim();
        let lambda = match t.split_once('/') {
            Some((num, den)) => {
                let num: f64 = num.trim().parse().map_err(|_| bad())?;
                let den: f64 = den.trim().parse().map_err(|_| bad())?;
                if den == 0.0 {
                    return Err(bad());
                }
                num / den
            }
            None => t.parse().map_err(|_| bad())?,
        };
        Self::new(lambda).map_err(|_| bad())
    }

    /// `phi_lambda(x)`. Returns `+inf` for `lambda = -1, x = 0`.
    pub fn phi(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Invalid(format!(
                "phi argument must be >= 0, got {x}"
            )));
        }
        Ok(self.phi_unchecked(x))
    }

    fn phi_unchecked(&self, x: f64) -> f64 {
        let l = self.lambda;
        match self.branch() {
            Branch::Kullback => xlogx(x) - x + 1.0,
            Branch::ReverseKullback => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    -x.ln() + x - 1.0
                }
            }
            Branch::Power => (x.powf(l + 1.0) - x - l * (x - 1.0)) / (l * (1.0 + l)),
        }
    }

    /// `lim_{u -> inf} phi(u) / u`, the cost of mass where the reference
    /// vector has none.
    fn phi_slope_at_infinity(&self) -> f64 {
        let l = self.lambda;
        match self.branch() {
            Branch::Kullback => f64::INFINITY,
            Branch::ReverseKullback => 1.0,
            Branch::Power if l > 0.0 => f64::INFINITY,
            Branch::Power => -1.0 / l,
        }
    }

    /// `sum_r p_r phi(q_r / p_r)` with `0 phi(0/0) = 0` and
    /// `0 phi(q/0) = q lim phi(u)/u`.
    pub fn divergence(&self, q: &[f64], p: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), p.len());
        q.iter()
            .zip(p)
            .map(|(&qr, &pr)| {
                if pr > 0.0 {
                    pr * self.phi_unchecked(qr / pr)
                } else if qr > 0.0 {
                    qr * self.phi_slope_at_infinity()
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Closed form of the divergence:
    /// `(sum q^(l+1) / p^l - 1) / (l (l + 1))`, or the Kullback forms at
    /// the two limit points.
    pub fn divergence_closed_form(&self, q: &[f64], p: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), p.len());
        let l = self.lambda;
        match self.branch() {
            Branch::Kullback => kullback(q, p),
            Branch::ReverseKullback => kullback(p, q),
            Branch::Power => {
                let s: f64 = q
                    .iter()
                    .zip(p)
                    .map(|(&qr, &pr)| {
                        if qr == 0.0 {
                            if l < -1.0 && pr > 0.0 {
                                f64::INFINITY
                            } else {
                                0.0
                            }
                        } else if pr == 0.0 {
                            if l > 0.0 {
                                f64::INFINITY
                            } else {
                                0.0
                            }
                        } else {
                            qr * (qr / pr).powf(l)
                        }
                    })
                    .sum();
                (s - 1.0) / (l * (l + 1.0))
            }
        }
    }

    /// Partial derivatives of `p -> d(q, p)` up to an additive constant
    /// (constants vanish against tangent directions of the simplex).
    /// Requires `p > 0`; for `lambda = -1` also `q > 0`.
    pub(crate) fn grad_wrt_reference(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let l = self.lambda;
        for ((o, &qr), &pr) in out.iter_mut().zip(q).zip(p) {
            *o = match self.branch() {
                Branch::Kullback => -qr / pr,
                Branch::ReverseKullback => (pr / qr).ln(),
                Branch::Power => {
                    if qr == 0.0 {
                        0.0
                    } else {
                        -(qr / pr).powf(l + 1.0) / (l + 1.0)
                    }
                }
            };
        }
    }

    /// Diagonal second derivatives of `p -> d(q, p)`: `(q/p)^(l+1) / p`.
    pub(crate) fn hess_diag_wrt_reference(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let l = self.lambda;
        for ((o, &qr), &pr) in out.iter_mut().zip(q).zip(p) {
            *o = match self.branch() {
                Branch::Kullback => qr / (pr * pr),
                Branch::ReverseKullback => 1.0 / pr,
                Branch::Power => {
                    if qr == 0.0 {
                        0.0
                    } else {
                        (qr / pr).powf(l + 1.0) / pr
                    }
                }
            };
        }
    }
}

impl fmt::Display for PowerDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.lambda)
    }
}

impl Serialize for PowerDivergence {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.lambda)
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `sum a_r log(a_r / b_r)` with `0 log 0 = 0`.
pub fn kullback(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&ar, &br)| {
            if ar == 0.0 {
                0.0
            } else if br == 0.0 {
                f64::INFINITY
            } else {
                ar * (ar / br).ln()
            }
        })
        .sum()
}

/// `phi_lambda(x)` as a free function.
pub fn phi_lambda(lambda: f64, x: f64) -> Result<f64> {
    PowerDivergence::new(lambda)?.phi(x)
}
