//! Tape-based reverse-mode differentiation.
//!
//! Every arithmetic operation on a [`Var`] that touches a tape appends one
//! node holding the local partial derivatives with respect to its operands.
//! [`Tape::adjoints`] then sweeps the tape backwards once. Operations whose
//! operands are all constants never touch the tape.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::rc::Rc;

use super::real::Real;

#[derive(Clone, Debug)]
enum Node<T> {
    Leaf,
    Unary(usize, T),
    Binary(usize, T, usize, T),
}

/// Append-only record of operations.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    nodes: Rc<RefCell<Vec<Node<T>>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Rc::new(RefCell::new(Vec::new())),
        }
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            nodes: Rc::new(RefCell::new(Vec::with_capacity(capacity))),
        }
    }

    /// Registers an independent variable.
    pub fn var(&self, value: T) -> Var<T> {
        let idx = self.push(Node::Leaf);
        Var {
            value,
            slot: Some((self.clone(), idx)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node<T>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Adjoints d(output)/d(node) for the first `n_leading` nodes of the tape,
    /// which are the variables created before any operation was recorded.
    pub fn adjoints(&self, output: &Var<T>, n_leading: usize) -> Vec<T> {
        let Some((_, out)) = &output.slot else {
            return vec![T::zero(); n_leading];
        };
        let nodes = self.nodes.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        adj[*out] = T::from_f64(1.0);
        for i in (0..=*out).rev() {
            if adj[i].is_exact_zero() {
                continue;
            }
            match &nodes[i] {
                Node::Leaf => {}
                Node::Unary(p, d) => {
                    let contrib = adj[i].clone() * d.clone();
                    adj[*p] = adj[*p].clone() + contrib;
                }
                Node::Binary(p, dp, q, dq) => {
                    let cp = adj[i].clone() * dp.clone();
                    let cq = adj[i].clone() * dq.clone();
                    adj[*p] = adj[*p].clone() + cp;
                    adj[*q] = adj[*q].clone() + cq;
                }
            }
        }
        adj.truncate(n_leading);
        adj
    }
}

/// Scalar that records its arithmetic on a [`Tape`].
#[derive(Clone, Debug)]
pub struct Var<T> {
    value: T,
    slot: Option<(Tape<T>, usize)>,
}

impl<T: Real> Var<T> {
    pub fn constant(value: T) -> Self {
        Var { value, slot: None }
    }

    pub fn inner(&self) -> &T {
        &self.value
    }

    fn unary(&self, value: T, d: T) -> Self {
        match &self.slot {
            None => Var::constant(value),
            Some((tape, i)) => {
                let idx = tape.push(Node::Unary(*i, d));
                Var {
                    value,
                    slot: Some((tape.clone(), idx)),
                }
            }
        }
    }

    fn binary(&self, other: &Self, value: T, da: T, db: T) -> Self {
        match (&self.slot, &other.slot) {
            (None, None) => Var::constant(value),
            (Some(_), None) => self.unary(value, da),
            (None, Some(_)) => other.unary(value, db),
            (Some((tape, i)), Some((other_tape, j))) => {
                debug_assert!(Rc::ptr_eq(&tape.nodes, &other_tape.nodes));
                let idx = tape.push(Node::Binary(*i, da, *j, db));
                Var {
                    value,
                    slot: Some((tape.clone(), idx)),
                }
            }
        }
    }
}

impl<T: Real> Add for Var<T> {
    type Output = Var<T>;
    fn add(self, o: Var<T>) -> Var<T> {
        let v = self.value.clone() + o.value.clone();
        self.binary(&o, v, T::from_f64(1.0), T::from_f64(1.0))
    }
}

impl<T: Real> Sub for Var<T> {
    type Output = Var<T>;
    fn sub(self, o: Var<T>) -> Var<T> {
        let v = self.value.clone() - o.value.clone();
        self.binary(&o, v, T::from_f64(1.0), T::from_f64(-1.0))
    }
}

impl<T: Real> Mul for Var<T> {
    type Output = Var<T>;
    fn mul(self, o: Var<T>) -> Var<T> {
        let v = self.value.clone() * o.value.clone();
        self.binary(&o, v, o.value.clone(), self.value.clone())
    }
}

impl<T: Real> Div for Var<T> {
    type Output = Var<T>;
    fn div(self, o: Var<T>) -> Var<T> {
        let inv = T::from_f64(1.0) / o.value.clone();
        let v = self.value.clone() * inv.clone();
        let db = -(v.clone() * inv.clone());
        self.binary(&o, v, inv, db)
    }
}

impl<T: Real> Neg for Var<T> {
    type Output = Var<T>;
    fn neg(self) -> Var<T> {
        self.unary(-self.value.clone(), T::from_f64(-1.0))
    }
}

impl<T: Real> Add<f64> for Var<T> {
    type Output = Var<T>;
    fn add(self, o: f64) -> Var<T> {
        self.unary(self.value.clone() + o, T::from_f64(1.0))
    }
}

impl<T: Real> Sub<f64> for Var<T> {
    type Output = Var<T>;
    fn sub(self, o: f64) -> Var<T> {
        self.unary(self.value.clone() - o, T::from_f64(1.0))
    }
}

impl<T: Real> Mul<f64> for Var<T> {
    type Output = Var<T>;
    fn mul(self, o: f64) -> Var<T> {
        self.unary(self.value.clone() * o, T::from_f64(o))
    }
}

impl<T: Real> Real for Var<T> {
    fn from_f64(v: f64) -> Self {
        Var::constant(T::from_f64(v))
    }

    fn value(&self) -> f64 {
        self.value.value()
    }

    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.unary(e.clone(), e)
    }

    fn tanh(&self) -> Self {
        let t = self.value.tanh();
        let d = (t.clone() * t.clone() - 1.0) * -1.0;
        self.unary(t, d)
    }

    fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Var::constant(T::from_f64(1.0));
        }
        let d = self.value.powi(n - 1) * f64::from(n);
        self.unary(self.value.powi(n), d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::real::Dual;

    #[test]
    fn product_rule_through_tape() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let z = x.clone() * y.clone() + x.clone().powi(2) - y.clone() / x.clone();
        let g = tape.adjoints(&z, 2);
        // dz/dx = y + 2x + y/x^2, dz/dy = x - 1/x
        assert!((g[0] - (-2.0 + 6.0 - 2.0 / 9.0)).abs() < 1e-14);
        assert!((g[1] - (3.0 - 1.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn constants_stay_off_the_tape() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.var(1.0);
        let c = Var::constant(2.0) * Var::constant(4.0) + 1.0;
        assert_eq!(tape.len(), 1);
        let y = x * c;
        assert_eq!(tape.len(), 2);
        assert_eq!(tape.adjoints(&y, 1), vec![9.0]);
    }

    #[test]
    fn constant_output_has_zero_gradient() {
        let tape: Tape<f64> = Tape::new();
        let _x = tape.var(1.0);
        let c = Var::constant(5.0);
        assert_eq!(tape.adjoints(&c, 1), vec![0.0]);
    }

    #[test]
    fn forward_over_reverse_gives_hessian_vector_product() {
        // f(x, y) = exp(x) * tanh(y) ; H = [[e^x t, e^x s], [e^x s, -2 e^x t s]]
        // with t = tanh(y), s = 1 - t^2.
        let (x0, y0) = (0.3, -0.4);
        let (vx, vy) = (1.5, -0.5);
        let tape = Tape::new();
        let x = tape.var(Dual::new(x0, vx));
        let y = tape.var(Dual::new(y0, vy));
        let f = x.exp() * y.tanh();
        let adj = tape.adjoints(&f, 2);
        let (e, t) = (f64::exp(x0), f64::tanh(y0));
        let s = 1.0 - t * t;
        let hv = [e * t * vx + e * s * vy, e * s * vx - 2.0 * e * t * s * vy];
        assert!((adj[0].re - e * t).abs() < 1e-14);
        assert!((adj[1].re - e * s).abs() < 1e-14);
        assert!((adj[0].du - hv[0]).abs() < 1e-14);
        assert!((adj[1].du - hv[1]).abs() < 1e-14);
    }
}
