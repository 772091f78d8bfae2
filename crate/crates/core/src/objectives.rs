//! Objective functions: the degenerate monomial `x^k / k` and the rotated
//! 2-D sums of quadratic and quartic terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x^n` by repeated multiplication.
///
/// Used instead of `powi` so every platform produces the same bits.
#[inline]
pub fn ipow(x: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..n {
        acc *= x;
    }
    acc
}

/// `L(x) = x^k / k` for an even degree `k >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Monomial {
    degree: u32,
}

impl Monomial {
    pub fn new(degree: u32) -> Result<Self> {
        if degree < 2 || degree % 2 != 0 {
            return Err(Error::InvalidDegree(degree));
        }
        Ok(Self { degree })
    }

    /// Same as [`Monomial::new`] but additionally rejects the quadratic case.
    pub fn degenerate(degree: u32) -> Result<Self> {
        let obj = Self::new(degree)?;
        if degree < 4 {
            return Err(Error::DegreeTooSmall { got: degree, min: 4 });
        }
        Ok(obj)
    }

    #[inline]
    pub fn degree(&self) -> u32 {
        self.degree
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        ipow(x, self.degree) / self.degree as f64
    }

    #[inline]
    pub fn gradient(&self, x: f64) -> f64 {
        ipow(x, self.degree - 1)
    }

    #[inline]
    pub fn hessian(&self, x: f64) -> f64 {
        (self.degree - 1) as f64 * ipow(x, self.degree - 2)
    }
}

impl TryFrom<u32> for Monomial {
    type Error = Error;

    fn try_from(k: u32) -> Result<Self> {
        Self::new(k)
    }
}

impl From<Monomial> for u32 {
    fn from(m: Monomial) -> u32 {
        m.degree
    }
}

/// Exponent of one rotated direction in a [`Coupled2D`] objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermExponent {
    Quadratic,
    Quartic,
}

impl TermExponent {
    pub fn power(self) -> u32 {
        match self {
            TermExponent::Quadratic => 2,
            TermExponent::Quartic => 4,
        }
    }

    /// 1/4 for the quadratic term, 1/16 for the quartic one.
    pub fn coefficient(self) -> f64 {
        match self {
            TermExponent::Quadratic => 0.25,
            TermExponent::Quartic => 0.0625,
        }
    }
}

/// `c1 (x - y)^e1 + c2 (x + y)^e2`, minimized at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coupled2D {
    pub difference: TermExponent,
    pub sum: TermExponent,
}

impl Coupled2D {
    pub fn new(difference: TermExponent, sum: TermExponent) -> Self {
        Self { difference, sum }
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        let d = p[0] - p[1];
        let s = p[0] + p[1];
        self.difference.coefficient() * ipow(d, self.difference.power())
            + self.sum.coefficient() * ipow(s, self.sum.power())
    }

    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        let d = p[0] - p[1];
        let s = p[0] + p[1];
        let ed = self.difference.power();
        let es = self.sum.power();
        let gd = self.difference.coefficient() * ed as f64 * ipow(d, ed - 1);
        let gs = self.sum.coefficient() * es as f64 * ipow(s, es - 1);
        // d/dx = gd + gs, d/dy = -gd + gs
        [gd + gs, gs - gd]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_odd_and_small_degrees() {
        assert!(Monomial::new(3).is_err());
        assert!(Monomial::new(0).is_err());
        assert!(Monomial::new(1).is_err());
        assert!(Monomial::new(2).is_ok());
        assert!(Monomial::degenerate(2).is_err());
        assert!(Monomial::degenerate(4).is_ok());
    }

    #[test]
    fn monomial_values() {
        let q4 = Monomial::new(4).unwrap();
        assert_eq!(q4.value(1.0), 0.25);
        assert_eq!(q4.value(0.0), 0.0);
        assert_relative_eq!(Monomial::new(6).unwrap().value(2.0), 64.0 / 6.0);
        assert_eq!(q4.gradient(2.0), 8.0);
        assert_eq!(q4.gradient(0.0), 0.0);
        assert_eq!(q4.hessian(1.0), 3.0);
        assert_eq!(q4.hessian(0.0), 0.0);
        assert_relative_eq!(Monomial::new(6).unwrap().hessian(0.5), 0.3125);
    }

    #[test]
    fn gradient_small_argument() {
        let q4 = Monomial::new(4).unwrap();
        let g = q4.gradient(1e-3);
        assert!((g - 1e-9).abs() <= f64::EPSILON * 1e-9);
        let h = 1e-6;
        let fd = (q4.value(1e-3 + h) - q4.value(1e-3 - h)) / (2.0 * h);
        assert_relative_eq!(fd, g, max_relative = 1e-6);
    }

    #[test]
    fn coupled_values() {
        let qq = Coupled2D::new(TermExponent::Quartic, TermExponent::Quartic);
        assert_eq!(qq.value([0.0, 0.0]), 0.0);
        assert_eq!(qq.gradient([0.0, 0.0]), [0.0, 0.0]);
        let c = Coupled2D::new(TermExponent::Quadratic, TermExponent::Quartic);
        assert_relative_eq!(c.value([1.0, 0.0]), 0.3125);
    }

    #[test]
    fn serde_roundtrip_validates() {
        let m: Monomial = serde_json::from_str("6").unwrap();
        assert_eq!(m.degree(), 6);
        assert!(serde_json::from_str::<Monomial>("5").is_err());
    }
}
