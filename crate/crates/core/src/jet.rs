//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] holds the coefficients of a polynomial in `nvars` variables
//! truncated at total degree `order`. Jets sharing a [`JetSpace`] can be
//! combined with the usual arithmetic operators; elementary functions are
//! applied by univariate Taylor composition.

use std::collections::HashMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

/// Scalar type the model right-hand sides are written against.
///
/// Implemented by `f64` and [`Jet`], so one generic definition of a vector
/// field yields both plain evaluation and exact derivatives.
pub trait Scalar:
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
    + Div<f64, Output = Self>
{
    /// Constant part.
    fn value(&self) -> f64;
    /// Constant `v` living in the same space as `self`.
    fn cst_like(&self, v: f64) -> Self;
    /// Exponential.
    fn exp(&self) -> Self;
    /// Natural logarithm.
    fn ln(&self) -> Self;
    /// Hyperbolic tangent.
    fn tanh(&self) -> Self;
    /// Square root.
    fn sqrt(&self) -> Self;
    /// Reciprocal.
    fn recip(&self) -> Self;
    /// Integer power.
    fn powi(&self, n: i32) -> Self {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut acc = self.cst_like(1.0);
        for _ in 0..n {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn cst_like(&self, v: f64) -> Self {
        v
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
}

/// Monomial table and multiplication rule shared by all jets of one shape.
#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    order: usize,
    monos: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    products: Vec<(u32, u32, u32)>,
}

impl JetSpace {
    /// Builds the space of polynomials in `nvars` variables of total degree at most `order`.
    pub fn new(nvars: usize, order: usize) -> Arc<Self> {
        let mut monos: Vec<Vec<u8>> = Vec::new();
        for d in 0..=order {
            let mut cur = vec![0u8; nvars];
            enumerate(nvars, d, 0, &mut cur, &mut monos);
        }
        let degree: Vec<usize> = monos
            .iter()
            .map(|m| m.iter().map(|&e| e as usize).sum())
            .collect();
        let index: HashMap<Vec<u8>, usize> = monos
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut products = Vec::new();
        for (i, mi) in monos.iter().enumerate() {
            for (j, mj) in monos.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let sum: Vec<u8> = mi.iter().zip(mj).map(|(a, b)| a + b).collect();
                products.push((i as u32, j as u32, index[&sum] as u32));
            }
        }
        Arc::new(JetSpace {
            nvars,
            order,
            monos,
            index,
            products,
        })
    }

    /// Number of variables.
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Truncation degree.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of monomials.
    pub fn len(&self) -> usize {
        self.monos.len()
    }

    /// Always false; a space contains at least the constant monomial.
    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    /// Exponent vector of monomial `i`.
    pub fn monomial(&self, i: usize) -> &[u8] {
        &self.monos[i]
    }

    /// Index of the monomial with the given exponents, if within the truncation.
    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.index.get(exps).copied()
    }
}

fn enumerate(nvars: usize, remaining: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if nvars == 0 {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos + 1 == nvars {
        cur[pos] = remaining as u8;
        out.push(cur.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e as u8;
        enumerate(nvars, remaining - e, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Truncated multivariate Taylor polynomial.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coef: Vec<f64>,
}

impl Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet").field("coef", &self.coef).finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.coef == other.coef
    }
}

impl Jet {
    /// Constant jet.
    pub fn constant(space: &Arc<JetSpace>, v: f64) -> Self {
        let mut coef = vec![0.0; space.len()];
        coef[0] = v;
        Jet {
            space: space.clone(),
            coef,
        }
    }

    /// The jet `v + t_k`.
    pub fn variable(space: &Arc<JetSpace>, k: usize, v: f64) -> Self {
        let mut j = Jet::constant(space, v);
        if space.order >= 1 {
            let mut e = vec![0u8; space.nvars];
            e[k] = 1;
            j.coef[space.index[&e]] = 1.0;
        }
        j
    }

    /// The jet `v + Σ_k d_k t_k`.
    pub fn affine(space: &Arc<JetSpace>, v: f64, d: &[f64]) -> Self {
        let mut j = Jet::constant(space, v);
        if space.order >= 1 {
            for (k, &dk) in d.iter().enumerate() {
                let mut e = vec![0u8; space.nvars];
                e[k] = 1;
                j.coef[space.index[&e]] = dk;
            }
        }
        j
    }

    /// Jet from a full coefficient vector.
    pub fn from_coefs(space: &Arc<JetSpace>, coef: Vec<f64>) -> Self {
        assert_eq!(coef.len(), space.len());
        Jet {
            space: space.clone(),
            coef,
        }
    }

    /// Shared space.
    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    /// All coefficients in the space's monomial order.
    pub fn coefs(&self) -> &[f64] {
        &self.coef
    }

    /// Coefficient of the monomial with exponents `exps` (zero if truncated away).
    pub fn coeff(&self, exps: &[u8]) -> f64 {
        self.space.index_of(exps).map_or(0.0, |i| self.coef[i])
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        debug_assert!(Arc::ptr_eq(&self.space, &other.space) || self.space.len() == other.space.len());
        Jet {
            space: self.space.clone(),
            coef: self.coef.iter().zip(&other.coef).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coef: self.coef.iter().map(|a| f(*a)).collect(),
        }
    }

    fn mul_jet(&self, other: &Jet) -> Jet {
        let mut coef = vec![0.0; self.coef.len()];
        for &(i, j, k) in &self.space.products {
            coef[k as usize] += self.coef[i as usize] * other.coef[j as usize];
        }
        Jet {
            space: self.space.clone(),
            coef,
        }
    }

    /// Applies `f` given its Taylor coefficients `taylor[k] = f^{(k)}(a0)/k!` at the constant part.
    pub fn compose(&self, taylor: &[f64]) -> Jet {
        let mut delta = self.clone();
        delta.coef[0] = 0.0;
        let n = self.space.order.min(taylor.len().saturating_sub(1));
        let mut acc = Jet::constant(&self.space, taylor[n]);
        for k in (0..n).rev() {
            acc = acc.mul_jet(&delta);
            acc.coef[0] += taylor[k];
        }
        acc
    }

    fn order(&self) -> usize {
        self.space.order
    }
}

/// Taylor coefficients of tanh at `x`, up to degree `n`.
pub fn tanh_taylor(x: f64, n: usize) -> Vec<f64> {
    let t = x.tanh();
    // P_k(t) = k-th derivative of tanh expressed in t; P_{k+1} = (1 - t^2) P_k'.
    let mut p: Vec<f64> = vec![0.0, 1.0];
    let mut out = Vec::with_capacity(n + 1);
    let mut fact = 1.0;
    for k in 0..=n {
        if k > 0 {
            fact *= k as f64;
        }
        let val = p.iter().rev().fold(0.0, |acc, c| acc * t + c);
        out.push(val / fact);
        let dp: Vec<f64> = (1..p.len()).map(|i| i as f64 * p[i]).collect();
        let mut next = vec![0.0; dp.len() + 2];
        for (i, c) in dp.iter().enumerate() {
            next[i] += c;
            next[i + 2] -= c;
        }
        p = next;
    }
    out
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        self.zip(&o, |a, b| a + b)
    }
}
impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self.zip(&o, |a, b| a - b)
    }
}
impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        self.mul_jet(&o)
    }
}
impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self.mul_jet(&o.recip())
    }
}
impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.map(|a| -a)
    }
}
impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.coef[0] += o;
        self
    }
}
impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, o: f64) -> Jet {
        self.coef[0] -= o;
        self
    }
}
impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, o: f64) -> Jet {
        self.map(|a| a * o)
    }
}
impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, o: f64) -> Jet {
        self.map(|a| a / o)
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        self.coef[0]
    }
    fn cst_like(&self, v: f64) -> Self {
        Jet::constant(&self.space, v)
    }
    fn exp(&self) -> Self {
        let e = self.coef[0].exp();
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut f = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                f *= k as f64;
            }
            t.push(e / f);
        }
        self.compose(&t)
    }
    fn ln(&self) -> Self {
        let a = self.coef[0];
        let mut t = vec![a.ln()];
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            t.push(sign / (k as f64 * a.powi(k as i32)));
        }
        self.compose(&t)
    }
    fn tanh(&self) -> Self {
        self.compose(&tanh_taylor(self.coef[0], self.order()))
    }
    fn sqrt(&self) -> Self {
        let a = self.coef[0];
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                binom *= (0.5 - (k as f64 - 1.0)) / k as f64;
            }
            t.push(binom * a.powf(0.5 - k as f64));
        }
        self.compose(&t)
    }
    fn recip(&self) -> Self {
        let a = self.coef[0];
        let t: Vec<f64> = (0..=self.order())
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } / a.powi(k as i32 + 1))
            .collect();
        self.compose(&t)
    }
}
