//! Jordan chains at a double zero eigenvalue, polynomial history functions,
//! adjoint pairings and the polynomial bordered inverse.
//!
//! The linear systems of the cascades have the form
//! `v′ = w` on `[−h, 0]` together with the boundary relation
//! `−Σⱼ Aⱼ v(−τⱼ) = κ − w(0)`; the pair `(κ, w)` is called a [`LinSys`].

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::chmat::{BorderedSolve, CharMatrix};
use crate::error::{Error, Result};
use crate::model::HistoryPoint;

/// Maximal polynomial degree produced by [`Spectral::binv0`].
pub const MAX_DEGREE: usize = 6;

/// Vector-valued polynomial `θ ↦ Σₖ cₖ θᵏ` on `[−h, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyFun {
    /// Coefficients `c₀, c₁, …`.
    pub coefs: Vec<DVector<f64>>,
}

impl PolyFun {
    /// Zero function in dimension `n`.
    pub fn zero(n: usize) -> Self {
        PolyFun {
            coefs: vec![DVector::zeros(n)],
        }
    }

    /// Constant function.
    pub fn constant(c: &DVector<f64>) -> Self {
        PolyFun { coefs: vec![c.clone()] }
    }

    /// Function from coefficients; trailing zero coefficients are dropped.
    pub fn new(coefs: Vec<DVector<f64>>) -> Self {
        assert!(!coefs.is_empty());
        let mut p = PolyFun { coefs };
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.coefs.len() > 1 && self.coefs.last().unwrap().iter().all(|v| *v == 0.0) {
            self.coefs.pop();
        }
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.coefs[0].len()
    }

    /// Degree (0 for constants and the zero function).
    pub fn degree(&self) -> usize {
        self.coefs.len() - 1
    }

    /// Value at `θ`.
    pub fn eval(&self, theta: f64) -> DVector<f64> {
        let mut acc = DVector::zeros(self.n());
        for c in self.coefs.iter().rev() {
            acc = acc * theta + c;
        }
        acc
    }

    /// Derivative in `θ`.
    pub fn derivative(&self) -> PolyFun {
        if self.coefs.len() == 1 {
            return PolyFun::zero(self.n());
        }
        PolyFun::new(
            self.coefs[1..]
                .iter()
                .enumerate()
                .map(|(k, c)| c * (k as f64 + 1.0))
                .collect(),
        )
    }

    /// Samples `φ(−τⱼ)` into a history point.
    pub fn sample(&self, delays: &[f64]) -> HistoryPoint {
        let mut m = DMatrix::zeros(self.n(), delays.len());
        for (j, tau) in delays.iter().enumerate() {
            m.set_column(j, &self.eval(-tau));
        }
        HistoryPoint(m)
    }

    /// Largest coefficient norm.
    pub fn max_coef_norm(&self) -> f64 {
        self.coefs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl Add<&PolyFun> for &PolyFun {
    type Output = PolyFun;
    fn add(self, o: &PolyFun) -> PolyFun {
        let len = self.coefs.len().max(o.coefs.len());
        let n = self.n();
        PolyFun::new(
            (0..len)
                .map(|k| {
                    let mut c = DVector::zeros(n);
                    if let Some(a) = self.coefs.get(k) {
                        c += a;
                    }
                    if let Some(b) = o.coefs.get(k) {
                        c += b;
                    }
                    c
                })
                .collect(),
        )
    }
}

impl Add for PolyFun {
    type Output = PolyFun;
    fn add(self, o: PolyFun) -> PolyFun {
        &self + &o
    }
}

impl Sub<&PolyFun> for &PolyFun {
    type Output = PolyFun;
    fn sub(self, o: &PolyFun) -> PolyFun {
        self + &(o * -1.0)
    }
}

impl Sub for PolyFun {
    type Output = PolyFun;
    fn sub(self, o: PolyFun) -> PolyFun {
        &self - &o
    }
}

impl Mul<f64> for &PolyFun {
    type Output = PolyFun;
    fn mul(self, s: f64) -> PolyFun {
        PolyFun::new(self.coefs.iter().map(|c| c * s).collect())
    }
}

impl Mul<f64> for PolyFun {
    type Output = PolyFun;
    fn mul(self, s: f64) -> PolyFun {
        &self * s
    }
}

impl Neg for PolyFun {
    type Output = PolyFun;
    fn neg(self) -> PolyFun {
        &self * -1.0
    }
}

/// Right-hand side `(κ, w)` of `v′ = w`, `−Σⱼ Aⱼ v(−τⱼ) = κ − w(0)`.
#[derive(Clone, Debug)]
pub struct LinSys {
    /// Boundary part.
    pub kappa: DVector<f64>,
    /// Function part.
    pub w: PolyFun,
}

impl LinSys {
    /// System with the given parts.
    pub fn new(kappa: DVector<f64>, w: PolyFun) -> Self {
        LinSys { kappa, w }
    }
}

/// Right and left Jordan chains `(q₀, q₁)`, `(p₁, p₀)` of `Δ` at zero.
#[derive(Clone, Debug)]
pub struct JordanChain {
    /// Eigenvector.
    pub q0: DVector<f64>,
    /// Generalized eigenvector.
    pub q1: DVector<f64>,
    /// Left generalized eigenvector.
    pub p0: DVector<f64>,
    /// Left eigenvector.
    pub p1: DVector<f64>,
}

/// Normalization options for [`Spectral::new`].
#[derive(Clone, Copy, Debug)]
pub struct ChainOptions {
    /// Impose `q₀ᵀq₀ = 1`, `q₁ᵀq₀ = 0`.
    pub orthonormal: bool,
    /// Multiplier applied to the unit null vector before normalization.
    pub q0_scale: f64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            orthonormal: true,
            q0_scale: 1.0,
        }
    }
}

/// Spectral data at a Bogdanov-Takens point: chain, derivatives of `Δ` at zero,
/// pairings and the bordered inverse.
#[derive(Clone, Debug)]
pub struct Spectral {
    chm: CharMatrix,
    d: Vec<DMatrix<f64>>,
    chain: JordanChain,
    border: BorderedSolve,
    tol: f64,
}

fn unit_sign(v: DVector<f64>) -> DVector<f64> {
    let v = &v / v.norm();
    let imax = v.iamax();
    if v[imax] < 0.0 {
        -v
    } else {
        v
    }
}

impl Spectral {
    /// Computes and normalizes the Jordan chain; `tol` is the admissible bordered slack.
    pub fn new(chm: &CharMatrix, opts: ChainOptions, tol: f64) -> Result<Self> {
        let n = chm.n();
        let d: Vec<DMatrix<f64>> = (0..=MAX_DEGREE + 3).map(|k| chm.delta0(k)).collect();
        let d0 = &d[0];
        let svd = d0.clone().svd(true, true);
        let sv = &svd.singular_values;
        let smax = sv.max().max(f64::MIN_POSITIVE);
        let zero_count = sv.iter().filter(|s| **s < 1e-8 * smax).count();
        if n > 1 && zero_count != 1 {
            return Err(Error::NotBt(format!(
                "Δ(0) has {zero_count} negligible singular values (need exactly 1)"
            )));
        }
        if n == 1 && d0[(0, 0)].abs() > 1e-8 {
            return Err(Error::NotBt("Δ(0) is regular".into()));
        }
        let imin = sv.imin();
        let u = svd.u.as_ref().unwrap();
        let vt = svd.v_t.as_ref().unwrap();
        let q0 = unit_sign(vt.row(imin).transpose()) * opts.q0_scale;
        let p1 = unit_sign(u.column(imin).into_owned());

        let border = BorderedSolve::new(d0, &q0, &p1, f64::INFINITY)?;
        let (q1, s) = border.solve_raw(&(-(&d[1] * &q0)));
        let scale = (&d[1] * &q0).norm().max(1.0);
        if s.abs() > 1e-8 * scale {
            return Err(Error::NotBt(format!("zero eigenvalue is simple (p₁Δ′q₀ slack {s:.3e})")));
        }
        let border_t = BorderedSolve::new(&d0.transpose(), &p1, &q0, f64::INFINITY)?;
        let (p0, _) = border_t.solve_raw(&(-(d[1].transpose() * &p1)));

        let c = p1.dot(&(&d[1] * &q1 + &d[2] * &q0 * 0.5));
        if c.abs() < 1e-10 {
            return Err(Error::NotBt("zero eigenvalue has algebraic multiplicity above two".into()));
        }
        let mut chain = JordanChain {
            q0,
            q1,
            p0: p0 / c,
            p1: p1 / c,
        };
        let dd = Self::psi0_phi1(&d, &chain);
        chain.q1 -= &chain.q0 * dd;
        if opts.orthonormal {
            let ct = chain.q1.dot(&chain.q0) / chain.q0.dot(&chain.q0);
            chain.q1 -= &chain.q0 * ct;
            chain.p0 += &chain.p1 * ct;
        }
        let border = BorderedSolve::new(d0, &chain.q0, &chain.p1, tol)?;
        Ok(Spectral {
            chm: chm.clone(),
            d,
            chain,
            border,
            tol,
        })
    }

    fn psi0_phi1(d: &[DMatrix<f64>], ch: &JordanChain) -> f64 {
        ch.p0.dot(&(&d[1] * &ch.q1 + &d[2] * &ch.q0 * 0.5))
            + ch.p1.dot(&(&d[2] * &ch.q1 * 0.5 + &d[3] * &ch.q0 / 6.0))
    }

    /// Characteristic matrix.
    pub fn charmat(&self) -> &CharMatrix {
        &self.chm
    }

    /// Jordan chain.
    pub fn chain(&self) -> &JordanChain {
        &self.chain
    }

    /// `Δ^{(k)}(0)`.
    pub fn d(&self, k: usize) -> &DMatrix<f64> {
        &self.d[k]
    }

    /// Consistency tolerance for bordered slacks.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `φ₀ = q₀`.
    pub fn phi0(&self) -> PolyFun {
        PolyFun::constant(&self.chain.q0)
    }

    /// `φ₁(θ) = q₁ + θq₀`.
    pub fn phi1(&self) -> PolyFun {
        PolyFun::new(vec![self.chain.q1.clone(), self.chain.q0.clone()])
    }

    fn sum_d(&self, w: &PolyFun, shift: usize, weight: impl Fn(usize) -> f64) -> DVector<f64> {
        let mut acc = DVector::zeros(w.n());
        for (k, c) in w.coefs.iter().enumerate() {
            acc += &self.d[k + shift] * c * weight(k);
        }
        acc
    }

    /// `⟨ψ₁, w⟩`.
    pub fn pair_psi1(&self, w: &PolyFun) -> f64 {
        self.chain
            .p1
            .dot(&self.sum_d(w, 1, |k| 1.0 / (k as f64 + 1.0)))
    }

    /// `⟨ψ₀, w⟩`.
    pub fn pair_psi0(&self, w: &PolyFun) -> f64 {
        self.chain
            .p0
            .dot(&self.sum_d(w, 1, |k| 1.0 / (k as f64 + 1.0)))
            + self
                .chain
                .p1
                .dot(&self.sum_d(w, 2, |k| 1.0 / ((k as f64 + 1.0) * (k as f64 + 2.0))))
    }

    /// `⟨ψᵢ, w⟩`.
    pub fn pair_psi(&self, i: usize, w: &PolyFun) -> f64 {
        match i {
            0 => self.pair_psi0(w),
            _ => self.pair_psi1(w),
        }
    }

    /// Fredholm functional `p₁κ − ⟨ψ₁, w⟩` of a system; zero iff it is solvable.
    pub fn fsc(&self, sys: &LinSys) -> f64 {
        self.chain.p1.dot(&sys.kappa) - self.pair_psi1(&sys.w)
    }

    /// `⟨ψ₁, v⟩` for a solution `v` of `sys`, from the data alone: `⟨ψ₀, w⟩ − p₀κ`.
    pub fn pending_psi1(&self, sys: &LinSys) -> f64 {
        self.pair_psi0(&sys.w) - self.chain.p0.dot(&sys.kappa)
    }

    /// Solution of `sys` with no `φ₀` component in `ξ = v(0)` (`q₀ᵀξ = 0`), plus the slack.
    pub fn binv0_raw(&self, sys: &LinSys) -> (PolyFun, f64) {
        let rhs = &sys.kappa - self.sum_d(&sys.w, 1, |k| 1.0 / (k as f64 + 1.0));
        let (xi, s) = self.border.solve_raw(&rhs);
        let mut coefs = vec![xi];
        for (k, c) in sys.w.coefs.iter().enumerate() {
            coefs.push(c / (k as f64 + 1.0));
        }
        (PolyFun::new(coefs), s)
    }

    /// Solves `sys`, failing on a Fredholm violation or excessive degree.
    pub fn binv0(&self, sys: &LinSys, context: &str) -> Result<(PolyFun, f64)> {
        let (v, s) = self.binv0_raw(sys);
        let scale = 1.0 + sys.kappa.norm() + sys.w.max_coef_norm();
        if !(s.abs() <= self.tol * scale) {
            return Err(Error::Inconsistent {
                context: context.to_string(),
                slack: s,
            });
        }
        if v.degree() > MAX_DEGREE {
            return Err(Error::Numerical(format!("{context}: degree {} exceeds cap", v.degree())));
        }
        Ok((v, s))
    }

    /// Residual of `v` in `sys`: boundary mismatch plus derivative mismatch (max norm).
    pub fn residual(&self, sys: &LinSys, v: &PolyFun) -> f64 {
        let delays = self.chm.delays();
        let mut bnd = -&sys.kappa + sys.w.eval(0.0);
        for (tau, a) in delays.iter().zip(self.chm.blocks()) {
            bnd -= a * v.eval(-tau);
        }
        let dv = v.derivative() - sys.w.clone();
        bnd.amax().max(dv.coefs.iter().map(|c| c.amax()).fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> CharMatrix {
        // ΣAⱼ = [[0,1],[0,0]] and (Σ τⱼAⱼ)₂₁ = 0 give a double zero
        let a0 = DMatrix::from_row_slice(2, 2, &[-0.1, 0.2, 0.1, -0.3]);
        let a1 = DMatrix::from_row_slice(2, 2, &[0.2, 0.5, -0.2, 0.1]);
        let a2 = DMatrix::from_row_slice(2, 2, &[-0.1, 0.3, 0.1, 0.2]);
        CharMatrix::from_blocks(vec![0.0, 1.0, 2.0], vec![a0, a1, a2])
    }

    #[test]
    fn nilpotent_ode_chain() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let chm = CharMatrix::from_blocks(vec![0.0], vec![a]);
        let sp = Spectral::new(&chm, ChainOptions::default(), 1e-10).unwrap();
        let ch = sp.chain();
        assert!((ch.q0.clone() - DVector::from_vec(vec![1.0, 0.0])).norm() < 1e-14);
        assert!((ch.q1.clone() - DVector::from_vec(vec![0.0, 1.0])).norm() < 1e-14);
        assert!((ch.p1.clone() - DVector::from_vec(vec![0.0, 1.0])).norm() < 1e-14);
        assert!((ch.p0.clone() - DVector::from_vec(vec![1.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn normalization_holds_on_delay_toy() {
        let sp = Spectral::new(&toy(), ChainOptions::default(), 1e-10).unwrap();
        let (f0, f1) = (sp.phi0(), sp.phi1());
        assert!((sp.pair_psi1(&f1) - 1.0).abs() < 1e-12);
        assert!((sp.pair_psi0(&f0) - 1.0).abs() < 1e-12);
        assert!(sp.pair_psi1(&f0).abs() < 1e-12);
        assert!(sp.pair_psi0(&f1).abs() < 1e-12);
        let ch = sp.chain();
        assert!((ch.q0.norm() - 1.0).abs() < 1e-14);
        assert!(ch.q0.dot(&ch.q1).abs() < 1e-14);
        assert!((sp.d(0) * &ch.q1 + sp.d(1) * &ch.q0).norm() < 1e-12);
        assert!((ch.p0.transpose() * sp.d(0) + ch.p1.transpose() * sp.d(1)).norm() < 1e-12);
    }

    #[test]
    fn pending_pairing_identity() {
        let sp = Spectral::new(&toy(), ChainOptions::default(), 1e-10).unwrap();
        let n = 2;
        let w = PolyFun::new(vec![
            DVector::from_vec(vec![0.3, -1.0]),
            DVector::from_vec(vec![0.7, 0.2]),
            DVector::from_vec(vec![-0.4, 0.5]),
        ]);
        let mut kappa = DVector::from_vec(vec![0.1, 0.9]);
        // make the system consistent by adjusting kappa along p1
        let f = sp.fsc(&LinSys::new(kappa.clone(), w.clone()));
        let p1 = sp.chain().p1.clone();
        kappa -= &p1 * (f / p1.dot(&p1));
        let sys = LinSys::new(kappa, w);
        let (v, s) = sp.binv0(&sys, "test").unwrap();
        assert!(s.abs() < 1e-13);
        assert!(sp.residual(&sys, &v) < 1e-12);
        assert!((sp.pair_psi1(&v) - sp.pending_psi1(&sys)).abs() < 1e-12);
        assert_eq!(v.n(), n);
    }

    fn quad_pair(sp: &Spectral, i: usize, w: &PolyFun) -> f64 {
        // ψ₁ = (p₁, θ ↦ p₁ Σ_{τⱼ>θ} Aⱼ); ψ₀ adds p₁ Σ_{τⱼ>θ} (θ − τⱼ) Aⱼ
        let chm = sp.charmat();
        let ch = sp.chain();
        let (c, pa) = if i == 1 { (&ch.p1, &ch.p1) } else { (&ch.p0, &ch.p0) };
        let mut total = c.dot(&w.eval(0.0));
        let delays = chm.delays();
        for j in 1..delays.len() {
            let (lo, hi) = (delays[j - 1], delays[j]);
            // Gauss-Legendre with 8 nodes is exact for the polynomial integrands
            let (x, wt) = gauss8();
            for (xi, wi) in x.iter().zip(wt.iter()) {
                let th = 0.5 * (hi - lo) * xi + 0.5 * (hi + lo);
                let mut g = DVector::zeros(chm.n()).transpose();
                for (tau, a) in delays.iter().zip(chm.blocks()) {
                    if *tau > th {
                        g += pa.transpose() * a;
                        if i == 0 {
                            g += ch.p1.transpose() * a * (th - tau);
                        }
                    }
                }
                total += 0.5 * (hi - lo) * wi * (g * w.eval(-th))[0];
            }
        }
        total
    }

    fn gauss8() -> ([f64; 8], [f64; 8]) {
        (
            [
                -0.9602898564975363, -0.7966664774136267, -0.525_532_409_916_329, -0.1834346424956498,
                0.1834346424956498, 0.525_532_409_916_329, 0.7966664774136267, 0.9602898564975363,
            ],
            [
                0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.362_683_783_378_362,
                0.362_683_783_378_362, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763,
            ],
        )
    }

    #[test]
    fn pairings_match_quadrature_of_adjoint_representation() {
        let sp = Spectral::new(&toy(), ChainOptions::default(), 1e-10).unwrap();
        let w = PolyFun::new(vec![
            DVector::from_vec(vec![0.3, -1.0]),
            DVector::from_vec(vec![0.7, 0.2]),
            DVector::from_vec(vec![-0.4, 0.5]),
            DVector::from_vec(vec![1.1, -0.8]),
        ]);
        for i in 0..2 {
            let a = sp.pair_psi(i, &w);
            let b = quad_pair(&sp, i, &w);
            assert!((a - b).abs() < 1e-12, "i={i}: {a} vs {b}");
        }
    }

    proptest::proptest! {
        #[test]
        fn pairing_is_linear(c in proptest::collection::vec(-3.0f64..3.0, 8), s in -2.0f64..2.0) {
            let sp = Spectral::new(&toy(), ChainOptions::default(), 1e-10).unwrap();
            let w1 = PolyFun::new(vec![DVector::from_vec(vec![c[0], c[1]]), DVector::from_vec(vec![c[2], c[3]])]);
            let w2 = PolyFun::new(vec![DVector::from_vec(vec![c[4], c[5]]), DVector::from_vec(vec![c[6], c[7]])]);
            let comb = &(&w1 * s) + &w2;
            for i in 0..2 {
                let lhs = sp.pair_psi(i, &comb);
                let rhs = s * sp.pair_psi(i, &w1) + sp.pair_psi(i, &w2);
                proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }
}
