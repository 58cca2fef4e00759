//! Forward-mode dual numbers over a shared seed layout.
//!
//! A [`Dual`] carries a value together with the partial derivatives with
//! respect to the state variables `x1..xn`, the control variables `u1..um`
//! and time `t`, in that order. One evaluation pass over an expression tree
//! therefore returns the full gradient needed by the variational and adjoint
//! equations.

use nalgebra::DVector;

/// Value plus partials with respect to `(x1..xn, u1..um, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub partials: DVector<f64>,
}

impl Dual {
    pub fn constant(value: f64, seeds: usize) -> Self {
        Dual {
            value,
            partials: DVector::zeros(seeds),
        }
    }

    /// A variable seeded at position `slot` of the layout.
    pub fn variable(value: f64, slot: usize, seeds: usize) -> Self {
        let mut partials = DVector::zeros(seeds);
        partials[slot] = 1.0;
        Dual { value, partials }
    }

    pub fn add(&self, rhs: &Dual) -> Dual {
        Dual {
            value: self.value + rhs.value,
            partials: &self.partials + &rhs.partials,
        }
    }

    pub fn sub(&self, rhs: &Dual) -> Dual {
        Dual {
            value: self.value - rhs.value,
            partials: &self.partials - &rhs.partials,
        }
    }

    pub fn mul(&self, rhs: &Dual) -> Dual {
        Dual {
            value: self.value * rhs.value,
            partials: &self.partials * rhs.value + &rhs.partials * self.value,
        }
    }

    /// Division; the caller checks the denominator is nonzero.
    pub fn div(&self, rhs: &Dual) -> Dual {
        let inv = 1.0 / rhs.value;
        Dual {
            value: self.value * inv,
            partials: (&self.partials * rhs.value - &rhs.partials * self.value) * (inv * inv),
        }
    }

    pub fn neg(&self) -> Dual {
        Dual {
            value: -self.value,
            partials: -&self.partials,
        }
    }

    /// Integer power by the chain rule `d(v^k) = k v^(k-1) dv`.
    pub fn powi(&self, k: i32) -> Dual {
        let value = self.value.powi(k);
        let scale = f64::from(k) * self.value.powi(k - 1);
        Dual {
            value,
            partials: &self.partials * scale,
        }
    }

    pub fn chain(&self, value: f64, derivative: f64) -> Dual {
        Dual {
            value,
            partials: &self.partials * derivative,
        }
    }

    pub fn sin(&self) -> Dual {
        self.chain(self.value.sin(), self.value.cos())
    }

    pub fn cos(&self) -> Dual {
        self.chain(self.value.cos(), -self.value.sin())
    }

    pub fn exp(&self) -> Dual {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn log(&self) -> Dual {
        self.chain(self.value.ln(), 1.0 / self.value)
    }

    pub fn sqrt(&self) -> Dual {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s)
    }

    pub fn tanh(&self) -> Dual {
        let th = self.value.tanh();
        self.chain(th, 1.0 - th * th)
    }
}
