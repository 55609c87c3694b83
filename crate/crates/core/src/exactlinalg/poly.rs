//! Dense univariate polynomials over the rationals, lowest degree first.

use num::{One, Signed, Zero};

use super::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    pub c: Vec<Rat>,
}

impl Poly {
    pub fn new(mut c: Vec<Rat>) -> Self {
        while c.last().is_some_and(|x| x.is_zero()) {
            c.pop();
        }
        Poly { c }
    }

    /// Monic cubic `x^3 + c2 x^2 + c1 x + c0` from `[c2, c1, c0]`.
    pub fn monic_cubic(cp: &[Rat; 3]) -> Self {
        Poly::new(vec![cp[2].clone(), cp[1].clone(), cp[0].clone(), Rat::one()])
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    /// Degree; the zero polynomial reports `None`.
    pub fn degree(&self) -> Option<usize> {
        self.c.len().checked_sub(1)
    }

    pub fn lead(&self) -> Rat {
        self.c.last().cloned().unwrap_or_else(Rat::zero)
    }

    pub fn eval(&self, x: &Rat) -> Rat {
        self.c.iter().rev().fold(Rat::zero(), |acc, a| acc * x + a)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, a| acc * x + super::rat::to_f64(a))
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(self.c.iter().enumerate().skip(1).map(|(i, a)| a * Rat::from_integer((i as i64).into())).collect())
    }

    /// `p(-x)`.
    pub fn reflect(&self) -> Poly {
        Poly::new(self.c.iter().enumerate().map(|(i, a)| if i % 2 == 1 { -a.clone() } else { a.clone() }).collect())
    }

    pub fn neg(&self) -> Poly {
        Poly::new(self.c.iter().map(|a| -a.clone()).collect())
    }

    /// Remainder of Euclidean division.
    pub fn rem(&self, d: &Poly) -> Poly {
        assert!(!d.is_zero(), "division by the zero polynomial");
        let mut r = self.c.clone();
        let dd = d.c.len() - 1;
        let lead = d.lead();
        while r.len() > dd && !r.is_empty() {
            let q = r.last().unwrap() / &lead;
            let shift = r.len() - 1 - dd;
            for (i, a) in d.c.iter().enumerate() {
                r[shift + i] -= &q * a;
            }
            r.pop();
            while r.last().is_some_and(|x| x.is_zero()) {
                r.pop();
            }
        }
        Poly::new(r)
    }

    /// Quotient of exact division (remainder discarded).
    pub fn div(&self, d: &Poly) -> Poly {
        let mut r = self.c.clone();
        let dd = d.c.len() - 1;
        if r.len() <= dd {
            return Poly::new(vec![]);
        }
        let mut q = vec![Rat::zero(); r.len() - dd];
        let lead = d.lead();
        while r.len() > dd {
            let coef = r.last().unwrap() / &lead;
            let shift = r.len() - 1 - dd;
            for (i, a) in d.c.iter().enumerate() {
                r[shift + i] -= &coef * a;
            }
            q[shift] = coef;
            r.pop();
        }
        Poly::new(q)
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, other: &Poly) -> Poly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return self.clone();
        }
        let l = self.lead();
        Poly::new(self.c.iter().map(|a| a / &l).collect())
    }
}

/// Discriminant of the monic cubic `x^3 + b x^2 + c x + d`.
pub fn cubic_discriminant(cp: &[Rat; 3]) -> Rat {
    let (b, c, d) = (&cp[0], &cp[1], &cp[2]);
    let eighteen = Rat::from_integer(18.into());
    let four = Rat::from_integer(4.into());
    let twenty_seven = Rat::from_integer(27.into());
    &eighteen * b * c * d - &four * b * b * b * d + b * b * c * c - &four * c * c * c - &twenty_seven * d * d
}

/// Rational roots of a polynomial whose repeated part is rational: returns
/// the roots of the square-free gcd with the derivative when it is linear.
pub fn repeated_rational_root(p: &Poly) -> Option<Rat> {
    let g = p.gcd(&p.derivative());
    match g.degree() {
        Some(1) => Some(-g.c[0].clone() / &g.c[1]),
        Some(2) => {
            // Triple root: gcd is (x - r)^2.
            let r = -g.c[1].clone() / Rat::from_integer(2.into());
            Some(r)
        }
        _ => None,
    }
}

pub fn sign(r: &Rat) -> i8 {
    if r.is_positive() {
        1
    } else if r.is_negative() {
        -1
    } else {
        0
    }
}
