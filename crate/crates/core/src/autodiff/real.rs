//! Scalar abstraction shared by plain evaluation, forward-mode duals and the
//! reverse-mode tape.
//!
//! Model and loss code is written once against [`Real`]; instantiating it
//! with `f64` evaluates, with [`Var<f64>`](super::Var) records a gradient
//! tape, and with `Var<Dual>` yields Hessian-vector products
//! (forward-over-reverse).

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{LabError, Result, EXP_GUARD};

pub trait Real:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;

    /// Primal value, used for branching (kinks, flat regions) and guards.
    fn value(&self) -> f64;

    fn exp(&self) -> Self;
    fn tanh(&self) -> Self;
    fn powi(&self, n: i32) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    /// True when every component (primal and any tangent) is zero.
    fn is_exact_zero(&self) -> bool {
        self.value() == 0.0
    }

    /// `exp` that refuses exponents beyond [`EXP_GUARD`] in magnitude.
    fn guarded_exp(&self) -> Result<Self> {
        let z = self.value();
        if !z.is_finite() || z.abs() > EXP_GUARD {
            return Err(LabError::ExpOverflow {
                exponent: z,
                sample: None,
            });
        }
        Ok(self.exp())
    }

    fn sigmoid(&self) -> Self {
        // Evaluate through the branch that keeps exp's argument non-positive.
        if self.value() >= 0.0 {
            let e = (-self.clone()).exp();
            Self::from_f64(1.0) / (e + 1.0)
        } else {
            let e = self.exp();
            e.clone() / (e + 1.0)
        }
    }

    /// max(x, 0) with derivative 0 at the kink.
    fn relu(&self) -> Self {
        if self.value() > 0.0 {
            self.clone()
        } else {
            self.clone() * 0.0
        }
    }

    fn leaky_relu(&self, slope: f64) -> Self {
        if self.value() > 0.0 {
            self.clone()
        } else {
            self.clone() * slope
        }
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
}

/// First-order dual number `re + du·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub fn new(re: f64, du: f64) -> Self {
        Self { re, du }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.re;
        Dual::new(self.re * inv, (self.du * o.re - self.re * o.du) * inv * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.du)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        Dual::new(self.re + o, self.du)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, o: f64) -> Dual {
        Dual::new(self.re - o, self.du)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        Dual::new(self.re * o, self.du * o)
    }
}

impl Real for Dual {
    fn from_f64(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn is_exact_zero(&self) -> bool {
        self.re == 0.0 && self.du == 0.0
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.du)
    }
    fn tanh(&self) -> Self {
        let t = self.re.tanh();
        Dual::new(t, (1.0 - t * t) * self.du)
    }
    fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Dual::new(1.0, 0.0);
        }
        Dual::new(
            self.re.powi(n),
            f64::from(n) * self.re.powi(n - 1) * self.du,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_carries_directional_derivative() {
        let x = Dual::new(0.7, 1.0);
        let y = (x * x).exp() * x.tanh() - x.powi(3) / (x + 2.0);
        let h = 1e-6;
        let f = |t: f64| (t * t).exp() * t.tanh() - t.powi(3) / (t + 2.0);
        let fd = (f(0.7 + h) - f(0.7 - h)) / (2.0 * h);
        assert!((y.du - fd).abs() < 1e-8);
    }

    #[test]
    fn sigmoid_is_stable_on_both_tails() {
        assert!((Real::sigmoid(&800.0_f64) - 1.0).abs() < 1e-15);
        assert!(Real::sigmoid(&-800.0_f64).abs() < 1e-300);
        assert!((Real::sigmoid(&0.0_f64) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn relu_has_zero_slope_at_kink() {
        let x = Dual::new(0.0, 1.0);
        assert_eq!(x.relu(), Dual::new(0.0, 0.0));
        let y = Dual::new(0.0, 1.0).leaky_relu(0.1);
        assert!((y.du - 0.1).abs() < 1e-15);
    }

    #[test]
    fn guarded_exp_rejects_large_exponents() {
        assert!(41.0_f64.guarded_exp().unwrap_err().is_overflow());
        assert!((-40.5_f64).guarded_exp().is_err());
        assert!(40.0_f64.guarded_exp().is_ok());
    }
}
