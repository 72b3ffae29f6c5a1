//! Truncated bivariate Taylor polynomials of total degree 4, used to obtain
//! exact derivatives of the manufactured solutions up to fourth order.

use std::ops::{Add, Mul, Neg, Sub};

pub const ORDER: usize = 4;
const LEN: usize = (ORDER + 1) * (ORDER + 2) / 2;

#[inline]
const fn idx(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

const FACTORIAL: [f64; ORDER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0];

/// Coefficients `c_ij` of `f(x0 + dx, y0 + dy) = sum c_ij dx^i dy^j`, `i + j <= 4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    c: [f64; LEN],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = v;
        Self { c }
    }

    /// The coordinate functions `x` and `y` expanded at `p`.
    pub fn variables(p: [f64; 2]) -> (Self, Self) {
        let mut x = Self::constant(p[0]);
        let mut y = Self::constant(p[1]);
        x.c[idx(1, 0)] = 1.0;
        y.c[idx(0, 1)] = 1.0;
        (x, y)
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `d^{i+j} f / dx^i dy^j` at the expansion point.
    pub fn derivative(&self, i: usize, j: usize) -> f64 {
        assert!(i + j <= ORDER);
        self.c[idx(i, j)] * FACTORIAL[i] * FACTORIAL[j]
    }

    pub fn gradient(&self) -> [f64; 2] {
        [self.derivative(1, 0), self.derivative(0, 1)]
    }

    pub fn laplacian(&self) -> f64 {
        self.derivative(2, 0) + self.derivative(0, 2)
    }

    pub fn bilaplacian(&self) -> f64 {
        self.derivative(4, 0) + 2.0 * self.derivative(2, 2) + self.derivative(0, 4)
    }

    pub fn hessian(&self) -> [[f64; 2]; 2] {
        let xy = self.derivative(1, 1);
        [[self.derivative(2, 0), xy], [xy, self.derivative(0, 2)]]
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.c.iter_mut().for_each(|v| *v *= s);
        self
    }

    pub fn add_scalar(mut self, s: f64) -> Self {
        self.c[0] += s;
        self
    }

    pub fn powi(self, n: u32) -> Self {
        (1..n).fold(self, |acc, _| acc * self)
    }

    /// `f(self)` given `f(a), f'(a), ..., f''''(a)` at `a = self.value()`.
    fn compose(self, derivs: [f64; ORDER + 1]) -> Self {
        let mut h = self;
        h.c[0] = 0.0;
        let mut out = Self::constant(derivs[0]);
        let mut hk = Self::constant(1.0);
        for (k, d) in derivs.iter().enumerate().skip(1) {
            hk = hk * h;
            out = out + hk.scale(d / FACTORIAL[k]);
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.compose([s, c, -s, -c, s])
    }

    pub fn sqrt(self) -> Self {
        let a = self.value();
        let r = a.sqrt();
        self.compose([
            r,
            0.5 / r,
            -0.25 / (a * r),
            0.375 / (a * a * r),
            -0.9375 / (a * a * a * r),
        ])
    }
}

impl Add for Jet {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.c.iter_mut().zip(o.c).for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for Jet {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self.c.iter_mut().zip(o.c).for_each(|(a, b)| *a -= b);
        self
    }
}

impl Neg for Jet {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut c = [0.0; LEN];
        for d1 in 0..=ORDER {
            for j1 in 0..=d1 {
                let a = self.c[idx(d1 - j1, j1)];
                if a == 0.0 {
                    continue;
                }
                for d2 in 0..=(ORDER - d1) {
                    for j2 in 0..=d2 {
                        c[idx(d1 - j1 + d2 - j2, j1 + j2)] += a * o.c[idx(d2 - j2, j2)];
                    }
                }
            }
        }
        Self { c }
    }
}
