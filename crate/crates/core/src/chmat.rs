//! Characteristic matrix `Δ(z) = zI − Σⱼ Aⱼ e^{−zτⱼ}`, root refinement,
//! a heuristic spectrum scan and the bordered solver used by the cascades.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{DerivMode, DdeModel, Mlf};

/// Linearization of a model at an equilibrium.
#[derive(Clone, Debug)]
pub struct CharMatrix {
    delays: Vec<f64>,
    a: Vec<DMatrix<f64>>,
}

impl CharMatrix {
    /// Builds `Δ` from the Jacobian blocks of `model` at `(x0, alpha0)`.
    pub fn new(model: &DdeModel, x0: &DVector<f64>, alpha0: &[f64]) -> Result<Self> {
        let mlf = Mlf::new(model, x0, alpha0, DerivMode::Auto)?;
        Self::from_mlf(&mlf)
    }

    /// Builds `Δ` from existing multilinear forms.
    pub fn from_mlf(mlf: &Mlf) -> Result<Self> {
        let a = mlf.jacobians()?;
        if a.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical("non-finite Jacobian".into()));
        }
        Ok(CharMatrix {
            delays: mlf.model().delays().to_vec(),
            a,
        })
    }

    /// Builds `Δ` directly from delays and Jacobian blocks.
    pub fn from_blocks(delays: Vec<f64>, a: Vec<DMatrix<f64>>) -> Self {
        assert_eq!(delays.len(), a.len());
        CharMatrix { delays, a }
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a[0].nrows()
    }

    /// Delays.
    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// Jacobian blocks `Aⱼ`.
    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    /// `k`-th derivative of `Δ` at complex `z`.
    pub fn delta(&self, k: usize, z: Complex64) -> DMatrix<Complex64> {
        let n = self.n();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        match k {
            0 => {
                for i in 0..n {
                    m[(i, i)] = z;
                }
            }
            1 => {
                for i in 0..n {
                    m[(i, i)] = Complex64::new(1.0, 0.0);
                }
            }
            _ => {}
        }
        for (tau, a) in self.delays.iter().zip(&self.a) {
            let e = (-z * tau).exp();
            let c = -(-tau).powi(k as i32) * e;
            if k >= 1 && *tau == 0.0 {
                continue;
            }
            m += a.map(|v| Complex64::new(v, 0.0)) * c;
        }
        m
    }

    /// `k`-th derivative of `Δ` at `z = 0` (real).
    pub fn delta0(&self, k: usize) -> DMatrix<f64> {
        self.delta(k, Complex64::new(0.0, 0.0)).map(|c| c.re)
    }

    /// Determinant of `Δ(z)`.
    pub fn det(&self, z: Complex64) -> Complex64 {
        self.delta(0, z).determinant()
    }

    /// Determinant divided by the product of the row norms.
    pub fn scaled_det(&self, z: Complex64) -> f64 {
        let d = self.delta(0, z);
        let mut scale = 1.0;
        for r in 0..d.nrows() {
            let s = d.row(r).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            scale *= s.max(f64::MIN_POSITIVE);
        }
        d.determinant().norm() / scale
    }

    /// `T(z) = tr(Δ⁻¹Δ′)` and its derivative, or `None` where `Δ(z)` is singular.
    fn log_derivative(&self, z: Complex64) -> Option<(Complex64, Complex64)> {
        let lu = self.delta(0, z).lu();
        let d1 = self.delta(1, z);
        let d2 = self.delta(2, z);
        let x1 = lu.solve(&d1)?;
        let x2 = lu.solve(&d2)?;
        if x1.iter().chain(x2.iter()).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return None;
        }
        let t = x1.trace();
        let tp = -(&x1 * &x1).trace() + x2.trace();
        Some((t, tp))
    }

    /// Refines a root of `det Δ` from the guess `z0`.
    ///
    /// Uses the multiplicity-independent update `z ← z + T/T′`, exact for
    /// `det Δ(z) = c (z − r)^m`.
    pub fn refine_root(&self, z0: Complex64) -> Result<Complex64> {
        let mut z = z0;
        for _ in 0..50 {
            let Some((t, tp)) = self.log_derivative(z) else {
                return Ok(z);
            };
            if tp.norm() == 0.0 || !tp.re.is_finite() {
                return Ok(z);
            }
            let step = t / tp;
            z += step;
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NoConvergence("root refinement diverged".into()));
            }
            if step.norm() <= 1e-14 * (1.0 + z.norm()) {
                return Ok(z);
            }
        }
        if self.scaled_det(z) <= 1e-12 {
            return Ok(z);
        }
        Err(Error::NoConvergence(format!("root refinement from {z0} did not converge")))
    }

    /// Algebraic multiplicity of a root at `c`, from the argument principle on a small circle.
    pub fn multiplicity(&self, c: Complex64, radius: f64) -> usize {
        let k = 64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..k {
            let phi = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / k as f64;
            let dz = Complex64::from_polar(radius, phi);
            match self.log_derivative(c + dz) {
                Some((t, _)) => acc += t * dz,
                None => return 1,
            }
        }
        let m = (acc / k as f64).re.round();
        if m < 1.0 {
            1
        } else {
            m as usize
        }
    }

    /// Heuristic root search in the rectangle `[re0,re1] × [im0,im1]`.
    ///
    /// Newton is seeded on an `nre × nim` grid; refined roots inside the
    /// region are deduplicated and repeated according to their multiplicity.
    /// Roots can be missed.
    pub fn spectrum_scan(&self, re: (f64, f64), im: (f64, f64), nre: usize, nim: usize) -> Vec<Complex64> {
        let mut found: Vec<Complex64> = Vec::new();
        let pad = 1e-9;
        for i in 0..nre.max(1) {
            for j in 0..nim.max(1) {
                let x = re.0 + (re.1 - re.0) * if nre > 1 { i as f64 / (nre - 1) as f64 } else { 0.5 };
                let y = im.0 + (im.1 - im.0) * if nim > 1 { j as f64 / (nim - 1) as f64 } else { 0.5 };
                let Ok(z) = self.refine_root(Complex64::new(x, y)) else {
                    continue;
                };
                if z.re < re.0 - pad || z.re > re.1 + pad || z.im < im.0 - pad || z.im > im.1 + pad {
                    continue;
                }
                if self.scaled_det(z) > 1e-8 {
                    continue;
                }
                if found.iter().any(|w| (w - z).norm() < 1e-6 * (1.0 + z.norm())) {
                    continue;
                }
                found.push(z);
            }
        }
        let mut out = Vec::new();
        for z in found {
            let m = self.multiplicity(z, 1e-3);
            for _ in 0..m {
                out.push(z);
            }
        }
        out.sort_by(|a, b| {
            b.re.partial_cmp(&a.re)
                .unwrap()
                .then(a.im.partial_cmp(&b.im).unwrap())
        });
        out
    }
}

/// Bordered system `[[M, p₁ᵀ], [q₀ᵀ, 0]]` giving the solution of `Mx = y`, `q₀ᵀx = 0`.
#[derive(Clone, Debug)]
pub struct BorderedSolve {
    n: usize,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    m: DMatrix<f64>,
    q0: DVector<f64>,
    p1: DVector<f64>,
    tol: f64,
}

impl BorderedSolve {
    /// Factors the bordered matrix; `tol` bounds the admissible slack.
    pub fn new(m: &DMatrix<f64>, q0: &DVector<f64>, p1: &DVector<f64>, tol: f64) -> Result<Self> {
        let n = m.nrows();
        let mut big = DMatrix::zeros(n + 1, n + 1);
        big.view_mut((0, 0), (n, n)).copy_from(m);
        for i in 0..n {
            big[(i, n)] = p1[i];
            big[(n, i)] = q0[i];
        }
        let lu = big.lu();
        if !lu.is_invertible() {
            return Err(Error::Singular("bordered matrix".into()));
        }
        Ok(BorderedSolve {
            n,
            lu,
            m: m.clone(),
            q0: q0.clone(),
            p1: p1.clone(),
            tol,
        })
    }

    /// Solves without the consistency check, returning `(x, s)`.
    pub fn solve_raw(&self, y: &DVector<f64>) -> (DVector<f64>, f64) {
        let mut rhs = DVector::zeros(self.n + 1);
        rhs.rows_mut(0, self.n).copy_from(y);
        let sol = self.lu.solve(&rhs).expect("invertible");
        let mut x = sol.rows(0, self.n).into_owned();
        let s = sol[self.n];
        // one step of iterative refinement
        let r = y - &self.m * &x - &self.p1 * s;
        let mut rhs2 = DVector::zeros(self.n + 1);
        rhs2.rows_mut(0, self.n).copy_from(&r);
        rhs2[self.n] = -self.q0.dot(&x);
        let corr = self.lu.solve(&rhs2).expect("invertible");
        x += corr.rows(0, self.n);
        (x, s + corr[self.n])
    }

    /// Solves `Mx = y`, `q₀ᵀx = 0`; fails when `|s|` exceeds the tolerance.
    pub fn solve(&self, y: &DVector<f64>, context: &str) -> Result<(DVector<f64>, f64)> {
        let (x, s) = self.solve_raw(y);
        if !(s.abs() <= self.tol) {
            return Err(Error::Inconsistent {
                context: context.to_string(),
                slack: s,
            });
        }
        Ok((x, s))
    }
}

/// One-shot bordered solve.
pub fn binv_solve(
    m: &DMatrix<f64>,
    q0: &DVector<f64>,
    p1: &DVector<f64>,
    y: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, f64)> {
    BorderedSolve::new(m, q0, p1, tol)?.solve(y, "binv_solve")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_decay() -> CharMatrix {
        CharMatrix::from_blocks(vec![0.0], vec![DMatrix::from_element(1, 1, -1.0)])
    }

    #[test]
    fn scalar_decay_root() {
        let c = scalar_decay();
        let z = c.refine_root(Complex64::new(-0.3, 0.2)).unwrap();
        assert!((z - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        let roots = c.spectrum_scan((-2.0, 1.0), (-1.0, 1.0), 7, 5);
        assert_eq!(roots.len(), 1);
        assert!((roots[0].re + 1.0).abs() < 1e-10);
    }

    #[test]
    fn double_root_refined_exactly() {
        // x'' = 0 as a system: Δ(z) = [[z, -1], [0, z]]
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let c = CharMatrix::from_blocks(vec![0.0], vec![a]);
        let z = c.refine_root(Complex64::new(0.3, -0.1)).unwrap();
        assert!(z.norm() < 1e-12);
        assert_eq!(c.multiplicity(Complex64::new(0.0, 0.0), 1e-3), 2);
    }

    #[test]
    fn derivatives_match_divided_differences() {
        let a0 = DMatrix::from_row_slice(2, 2, &[-0.5, 0.3, 0.1, -0.2]);
        let a1 = DMatrix::from_row_slice(2, 2, &[0.2, -0.7, 0.4, 0.1]);
        let c = CharMatrix::from_blocks(vec![0.0, 1.3], vec![a0, a1]);
        let z = Complex64::new(0.2, 0.4);
        let h = 1e-3;
        for k in 1..=4 {
            let fd = (c.delta(k - 1, z + h) - c.delta(k - 1, z - h)) / Complex64::new(2.0 * h, 0.0);
            let ex = c.delta(k, z);
            assert!((fd - &ex).norm() < 1e-5 * (1.0 + ex.norm()), "k={k}");
        }
    }

    #[test]
    fn bordered_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let (x, s) = binv_solve(&m, &e1, &e1, &DVector::from_vec(vec![0.0, 2.0]), 1e-10).unwrap();
        assert_eq!((x[0], x[1], s), (0.0, 2.0, 0.0));
        let (x, s) = binv_solve(&m, &e1, &e1, &DVector::zeros(2), 1e-10).unwrap();
        assert_eq!((x.norm(), s), (0.0, 0.0));
        match binv_solve(&m, &e1, &e1, &DVector::from_vec(vec![1.0, 0.0]), 1e-10) {
            Err(Error::Inconsistent { slack, .. }) => assert!((slack - 1.0).abs() < 1e-14),
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn bordered_residual_and_orthogonality(y0 in -5.0f64..5.0, y1 in -5.0f64..5.0, t in 0.1f64..3.0) {
            // rank-one singular matrix with known null vectors
            let q0 = DVector::from_vec(vec![t.cos(), t.sin()]);
            let p1 = DVector::from_vec(vec![-(2.0 * t).sin(), (2.0 * t).cos()]);
            let u = DVector::from_vec(vec![-t.sin(), t.cos()]);
            let v = DVector::from_vec(vec![(2.0 * t).cos(), (2.0 * t).sin()]);
            let m = &v * u.transpose() * 1.7;
            let y = &v * (y0 + 0.3 * y1);
            let (x, _) = binv_solve(&m, &q0, &p1, &y, 1e-10).unwrap();
            proptest::prop_assert!((&m * &x - &y).norm() <= 1e-10 * (1.0 + y.norm()));
            proptest::prop_assert!(q0.dot(&x).abs() <= 1e-14 * (1.0 + x.norm()));
        }
    }
}
