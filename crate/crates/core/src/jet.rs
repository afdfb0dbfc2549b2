//! Univariate truncated Taylor arithmetic ("jets").
//!
//! A jet of order K carries the Taylor coefficients c_0..c_K of a scalar
//! quantity with respect to one model parameter; c_k is the k-th derivative
//! divided by k!. Arithmetic on jets (sum, product, quotient, log) yields the
//! exact coefficients of the composed expression, truncated at order K.
//!
//! Coefficients are stored Taylor-normalized (divided by k!) so the product
//! rule is a plain convolution; [`Jet::derivative`] multiplies the factorial
//! back when a raw derivative is requested.

use crate::error::{Error, Result};

/// Truncated Taylor series of one scalar in one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<f64>,
}

impl Jet {
    /// Jet of a constant: value `c`, all derivatives zero.
    pub fn constant(c: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = c;
        Jet { coeffs }
    }

    /// Jet of the expansion variable itself: value `c`, first derivative 1.
    pub fn variable(c: f64, order: usize) -> Self {
        let mut coeffs = vec![0.0; order + 1];
        coeffs[0] = c;
        if order >= 1 {
            coeffs[1] = 1.0;
        }
        Jet { coeffs }
    }

    /// Builds a jet directly from Taylor coefficients (c_k = f^(k)/k!).
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidCurve {
                reason: "jet needs at least a constant term".into(),
            });
        }
        Ok(Jet { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Taylor coefficients, constant term first.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Value at the expansion point (constant term).
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// k-th derivative at the expansion point: k! * c_k.
    pub fn derivative(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for i in 2..=k {
            fact *= i as f64;
        }
        self.coeffs[k] * fact
    }

    fn check_order(&self, other: &Jet) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::MixedOrder {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        Ok(Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        Ok(Jet {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn neg(&self) -> Jet {
        Jet {
            coeffs: self.coeffs.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            coeffs: self.coeffs.iter().map(|a| a * s).collect(),
        }
    }

    /// Cauchy product truncated at the common order (the Leibnitz rule).
    pub fn mul(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        for (i, a) in self.coeffs.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.coeffs.iter().take(n - i).enumerate() {
                out[i + j] += a * b;
            }
        }
        Ok(Jet { coeffs: out })
    }

    /// Quotient; requires a nonzero constant term in the divisor.
    pub fn div(&self, other: &Jet) -> Result<Jet> {
        self.check_order(other)?;
        if other.coeffs[0] == 0.0 {
            return Err(Error::DivisionByZeroConstantTerm);
        }
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        for k in 0..n {
            let mut s = self.coeffs[k];
            for j in 1..=k {
                s -= other.coeffs[j] * out[k - j];
            }
            out[k] = s / other.coeffs[0];
        }
        Ok(Jet { coeffs: out })
    }

    /// log composed with the jet; requires a positive constant term.
    ///
    /// Uses the recurrence from (log a)' = a'/a:
    /// k a_0 l_k = k a_k - sum_{j=1}^{k-1} j l_j a_{k-j}.
    pub fn log(&self) -> Result<Jet> {
        if self.coeffs[0] <= 0.0 {
            return Err(Error::NonpositiveConstantTerm {
                value: self.coeffs[0],
            });
        }
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        out[0] = self.coeffs[0].ln();
        for k in 1..n {
            let mut s = k as f64 * self.coeffs[k];
            for j in 1..k {
                s -= j as f64 * out[j] * self.coeffs[k - j];
            }
            out[k] = s / (k as f64 * self.coeffs[0]);
        }
        Ok(Jet { coeffs: out })
    }

    /// exp composed with the jet, via e' = e * a'.
    pub fn exp(&self) -> Jet {
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        out[0] = self.coeffs[0].exp();
        for k in 1..n {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * self.coeffs[j] * out[k - j];
            }
            out[k] = s / k as f64;
        }
        Jet { coeffs: out }
    }

    /// Jet of a * log a. Single implementation behind [`Jet::log`] and
    /// [`Jet::mul`]; kept as a named operation for the expansion cross-checks.
    pub fn xlogx(&self) -> Result<Jet> {
        self.mul(&self.log()?)
    }

    /// True when every coefficient is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }
}
