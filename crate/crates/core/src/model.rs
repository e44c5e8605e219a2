//! Constant discrete-delay differential equations and their multilinear forms.
//!
//! A model is `x'(t) = F(x(t), x(t - τ₁), …, x(t - τ_m), α)`. The right-hand
//! side sees the history only through the matrix `ξ` whose column `j` is
//! `x(t - τ_j)`.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jet::{Jet, JetSpace, Scalar};

/// History values at the delay points; column `j` is `φ(-τ_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryPoint(pub DMatrix<f64>);

impl HistoryPoint {
    /// History that is constant in time, equal to `x`, for `m + 1` delay points.
    pub fn constant(x: &DVector<f64>, ncols: usize) -> Self {
        HistoryPoint(DMatrix::from_fn(x.len(), ncols, |i, _| x[i]))
    }

    /// Zero history.
    pub fn zeros(n: usize, ncols: usize) -> Self {
        HistoryPoint(DMatrix::zeros(n, ncols))
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    /// Number of delay points `m + 1`.
    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    /// Column-wise plain vectors, the layout used by right-hand sides.
    pub fn to_cols(&self) -> Vec<Vec<f64>> {
        (0..self.0.ncols())
            .map(|j| self.0.column(j).iter().copied().collect())
            .collect()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Object-safe right-hand side.
///
/// `xi[j]` is the state at delay `j`. Implementors that can evaluate on
/// [`Jet`]s return `Some` from [`RhsFn::rhs_jet`]; otherwise derivatives fall
/// back to finite differences.
pub trait RhsFn: Send + Sync {
    /// Plain evaluation.
    fn rhs(&self, xi: &[Vec<f64>], alpha: &[f64]) -> Vec<f64>;
    /// Evaluation on truncated Taylor polynomials.
    fn rhs_jet(&self, _xi: &[Vec<Jet>], _alpha: &[Jet]) -> Option<Vec<Jet>> {
        None
    }
}

/// Right-hand side written once for every [`Scalar`].
pub trait GenericRhs: Send + Sync {
    /// Evaluates the vector field.
    fn eval<S: Scalar>(&self, xi: &[Vec<S>], alpha: &[S]) -> Vec<S>;
}

impl<T: GenericRhs> RhsFn for T {
    fn rhs(&self, xi: &[Vec<f64>], alpha: &[f64]) -> Vec<f64> {
        self.eval(xi, alpha)
    }
    fn rhs_jet(&self, xi: &[Vec<Jet>], alpha: &[Jet]) -> Option<Vec<Jet>> {
        Some(self.eval(xi, alpha))
    }
}

/// Right-hand side given by a plain closure (derivatives by finite differences).
pub struct ClosureRhs<F>(pub F);

impl<F> RhsFn for ClosureRhs<F>
where
    F: Fn(&[Vec<f64>], &[f64]) -> Vec<f64> + Send + Sync,
{
    fn rhs(&self, xi: &[Vec<f64>], alpha: &[f64]) -> Vec<f64> {
        (self.0)(xi, alpha)
    }
}

/// A constant discrete-delay differential equation.
#[derive(Clone)]
pub struct DdeModel {
    n: usize,
    delays: Vec<f64>,
    param_names: Vec<String>,
    rhs: Arc<dyn RhsFn>,
}

impl std::fmt::Debug for DdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DdeModel")
            .field("n", &self.n)
            .field("delays", &self.delays)
            .field("params", &self.param_names)
            .finish()
    }
}

impl DdeModel {
    /// Creates a model; `delays` must start at 0 and increase strictly.
    pub fn new(n: usize, delays: Vec<f64>, param_names: Vec<String>, rhs: Arc<dyn RhsFn>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Usage("state dimension must be positive".into()));
        }
        if delays.first() != Some(&0.0) {
            return Err(Error::Usage("first delay must be exactly 0".into()));
        }
        if delays.windows(2).any(|w| !(w[1] > w[0])) || delays.iter().any(|d| !d.is_finite()) {
            return Err(Error::Usage("delays must be finite and strictly increasing".into()));
        }
        Ok(DdeModel {
            n,
            delays,
            param_names,
            rhs,
        })
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Delays `τ₀ = 0 < τ₁ < … < τ_m`.
    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// Largest delay.
    pub fn max_delay(&self) -> f64 {
        *self.delays.last().unwrap()
    }

    /// Number of parameters.
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    /// Parameter names.
    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    /// Underlying right-hand side.
    pub fn rhs_fn(&self) -> &Arc<dyn RhsFn> {
        &self.rhs
    }

    /// True when the right-hand side accepts jets.
    pub fn has_jets(&self) -> bool {
        let s = JetSpace::new(1, 1);
        let xi = vec![vec![Jet::constant(&s, 0.0); self.n]; self.delays.len()];
        let al = vec![Jet::constant(&s, 0.0); self.n_params()];
        self.rhs.rhs_jet(&xi, &al).is_some()
    }

    /// Plain evaluation on column vectors.
    pub fn rhs_cols(&self, xi: &[Vec<f64>], alpha: &[f64]) -> Vec<f64> {
        self.rhs.rhs(xi, alpha)
    }

    /// Evaluation on jets, if supported.
    pub fn rhs_jet(&self, xi: &[Vec<Jet>], alpha: &[Jet]) -> Option<Vec<Jet>> {
        self.rhs.rhs_jet(xi, alpha)
    }
}

/// Evaluates `F(ξ, α)` with dimension checks.
pub fn eval_rhs(model: &DdeModel, xi: &HistoryPoint, alpha: &[f64]) -> Result<DVector<f64>> {
    if xi.n() != model.n() || xi.ncols() != model.delays().len() {
        return Err(Error::Usage(format!(
            "history is {}x{}, model needs {}x{}",
            xi.n(),
            xi.ncols(),
            model.n(),
            model.delays().len()
        )));
    }
    if alpha.len() != model.n_params() {
        return Err(Error::Usage(format!(
            "{} parameters given, model needs {}",
            alpha.len(),
            model.n_params()
        )));
    }
    let f = model.rhs_cols(&xi.to_cols(), alpha);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite right-hand side".into()));
    }
    Ok(DVector::from_vec(f))
}

/// How derivatives are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivMode {
    /// Jets if the model supports them, finite differences otherwise.
    Auto,
    /// Truncated Taylor arithmetic.
    Analytic,
    /// Central mixed finite differences.
    FiniteDifference,
}

/// Multilinear forms of `F` at an equilibrium `(x₀, α₀)`.
///
/// State arguments are [`HistoryPoint`]s, parameter arguments are
/// parameter-space vectors; every form returns an `n`-vector.
#[derive(Clone, Debug)]
pub struct Mlf {
    model: DdeModel,
    x0: DVector<f64>,
    alpha0: Vec<f64>,
    mode: DerivMode,
}

fn jet_space(k: usize) -> Arc<JetSpace> {
    static SPACES: OnceLock<Vec<Arc<JetSpace>>> = OnceLock::new();
    SPACES.get_or_init(|| (0..=4).map(|k| JetSpace::new(k, k)).collect())[k].clone()
}

impl Mlf {
    /// Forms at the equilibrium `x0` (constant history) and parameter `alpha0`.
    pub fn new(model: &DdeModel, x0: &DVector<f64>, alpha0: &[f64], mode: DerivMode) -> Result<Self> {
        if x0.len() != model.n() || alpha0.len() != model.n_params() {
            return Err(Error::Usage("equilibrium dimensions do not match the model".into()));
        }
        let mode = match mode {
            DerivMode::Auto if model.has_jets() => DerivMode::Analytic,
            DerivMode::Auto => DerivMode::FiniteDifference,
            DerivMode::Analytic if !model.has_jets() => {
                return Err(Error::Usage("model has no jet evaluation".into()))
            }
            m => m,
        };
        Ok(Mlf {
            model: model.clone(),
            x0: x0.clone(),
            alpha0: alpha0.to_vec(),
            mode,
        })
    }

    /// Model.
    pub fn model(&self) -> &DdeModel {
        &self.model
    }

    /// Equilibrium state.
    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    /// Equilibrium parameters.
    pub fn alpha0(&self) -> &[f64] {
        &self.alpha0
    }

    /// Active derivative mode.
    pub fn mode(&self) -> DerivMode {
        self.mode
    }

    /// Mixed derivative `D_x^k D_α^l F[u₁…u_k, κ₁…κ_l]`.
    pub fn mixed(&self, us: &[&HistoryPoint], ks: &[&[f64]]) -> Result<DVector<f64>> {
        let ncols = self.model.delays().len();
        for u in us {
            if u.n() != self.model.n() || u.ncols() != ncols {
                return Err(Error::Usage("state direction has wrong shape".into()));
            }
        }
        for k in ks {
            if k.len() != self.model.n_params() {
                return Err(Error::Usage("parameter direction has wrong length".into()));
            }
        }
        let out = match self.mode {
            DerivMode::FiniteDifference => self.mixed_fd(us, ks, f64::EPSILON),
            _ => self.mixed_jet(us, ks),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite multilinear form".into()));
        }
        Ok(out)
    }

    fn mixed_jet(&self, us: &[&HistoryPoint], ks: &[&[f64]]) -> DVector<f64> {
        let order = us.len() + ks.len();
        let space = jet_space(order);
        let n = self.model.n();
        let ncols = self.model.delays().len();
        let mut xi = Vec::with_capacity(ncols);
        for j in 0..ncols {
            let mut col = Vec::with_capacity(n);
            for i in 0..n {
                let d: Vec<f64> = us
                    .iter()
                    .map(|u| u.0[(i, j)])
                    .chain(std::iter::repeat_n(0.0, ks.len()))
                    .collect();
                col.push(Jet::affine(&space, self.x0[i], &d));
            }
            xi.push(col);
        }
        let alpha: Vec<Jet> = (0..self.model.n_params())
            .map(|p| {
                let d: Vec<f64> = std::iter::repeat_n(0.0, us.len())
                    .chain(ks.iter().map(|k| k[p]))
                    .collect();
                Jet::affine(&space, self.alpha0[p], &d)
            })
            .collect();
        let f = self
            .model
            .rhs_jet(&xi, &alpha)
            .expect("jet evaluation checked at construction");
        let ones = vec![1u8; order];
        DVector::from_iterator(n, f.iter().map(|c| c.coeff(&ones)))
    }

    /// Finite-difference mixed derivative with base step `eps^(1/(2+k))`.
    pub fn mixed_fd(&self, us: &[&HistoryPoint], ks: &[&[f64]], eps: f64) -> DVector<f64> {
        let order = us.len() + ks.len();
        let h = eps.powf(1.0 / (2.0 + order as f64));
        self.mixed_fd_step(us, ks, h)
    }

    /// Central mixed difference `(2h)^{-k} Σ_{s∈{±1}^k} s₁⋯s_k F(x + h Σ sᵢ dᵢ)` on unit directions.
    pub fn mixed_fd_step(&self, us: &[&HistoryPoint], ks: &[&[f64]], h: f64) -> DVector<f64> {
        let n = self.model.n();
        let ncols = self.model.delays().len();
        let order = us.len() + ks.len();
        let mut scales = Vec::with_capacity(order);
        let mut dx: Vec<DMatrix<f64>> = Vec::with_capacity(order);
        let mut da: Vec<Vec<f64>> = Vec::with_capacity(order);
        for u in us {
            let s = u.norm();
            scales.push(s);
            dx.push(if s > 0.0 { &u.0 / s } else { u.0.clone() });
            da.push(vec![0.0; self.model.n_params()]);
        }
        for k in ks {
            let s = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            scales.push(s);
            dx.push(DMatrix::zeros(n, ncols));
            da.push(k.iter().map(|v| if s > 0.0 { v / s } else { *v }).collect());
        }
        if scales.contains(&0.0) {
            return DVector::zeros(n);
        }
        let mut acc = DVector::zeros(n);
        for mask in 0..(1usize << order) {
            let mut sign = 1.0;
            let mut xi = DMatrix::from_fn(n, ncols, |i, _| self.x0[i]);
            let mut al = self.alpha0.clone();
            for d in 0..order {
                let s = if mask >> d & 1 == 1 { -1.0 } else { 1.0 };
                sign *= s;
                xi += &dx[d] * (s * h);
                for (a, v) in al.iter_mut().zip(&da[d]) {
                    *a += s * h * v;
                }
            }
            let cols = HistoryPoint(xi).to_cols();
            let f = self.model.rhs_cols(&cols, &al);
            acc += DVector::from_vec(f) * sign;
        }
        let scale: f64 = scales.iter().product();
        acc * (scale / (2.0 * h).powi(order as i32))
    }

    /// `B(u, v)`.
    pub fn b(&self, u: &HistoryPoint, v: &HistoryPoint) -> Result<DVector<f64>> {
        self.mixed(&[u, v], &[])
    }

    /// `C(u, v, w)`.
    pub fn c(&self, u: &HistoryPoint, v: &HistoryPoint, w: &HistoryPoint) -> Result<DVector<f64>> {
        self.mixed(&[u, v, w], &[])
    }

    /// `A₁(u, κ)`.
    pub fn a1(&self, u: &HistoryPoint, k: &[f64]) -> Result<DVector<f64>> {
        self.mixed(&[u], &[k])
    }

    /// `B₁(u, v, κ)`.
    pub fn b1(&self, u: &HistoryPoint, v: &HistoryPoint, k: &[f64]) -> Result<DVector<f64>> {
        self.mixed(&[u, v], &[k])
    }

    /// `A₂(u, κ, λ)`.
    pub fn a2(&self, u: &HistoryPoint, k: &[f64], l: &[f64]) -> Result<DVector<f64>> {
        self.mixed(&[u], &[k, l])
    }

    /// `J₁κ`.
    pub fn j1(&self, k: &[f64]) -> Result<DVector<f64>> {
        self.mixed(&[], &[k])
    }

    /// `J₂(κ, λ)`.
    pub fn j2(&self, k: &[f64], l: &[f64]) -> Result<DVector<f64>> {
        self.mixed(&[], &[k, l])
    }

    /// `J₃(κ, λ, μ)`.
    pub fn j3(&self, k: &[f64], l: &[f64], m: &[f64]) -> Result<DVector<f64>> {
        self.mixed(&[], &[k, l, m])
    }

    /// Jacobian blocks `A_j = ∂F/∂x(t - τ_j)`.
    pub fn jacobians(&self) -> Result<Vec<DMatrix<f64>>> {
        let n = self.model.n();
        let ncols = self.model.delays().len();
        let mut out = Vec::with_capacity(ncols);
        for j in 0..ncols {
            let mut a = DMatrix::zeros(n, n);
            for c in 0..n {
                let mut u = HistoryPoint::zeros(n, ncols);
                u.0[(c, j)] = 1.0;
                a.set_column(c, &self.mixed(&[&u], &[])?);
            }
            out.push(a);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Poly;
    impl GenericRhs for Poly {
        fn eval<S: Scalar>(&self, xi: &[Vec<S>], alpha: &[S]) -> Vec<S> {
            let x = xi[0][0].clone();
            let y = xi[1][0].clone();
            vec![x.clone() * x.clone() * x + y.clone() * y * alpha[0].clone()]
        }
    }

    fn poly_model() -> DdeModel {
        DdeModel::new(1, vec![0.0, 1.0], vec!["p".into()], Arc::new(Poly)).unwrap()
    }

    #[test]
    fn rejects_bad_delays() {
        assert!(DdeModel::new(1, vec![0.5, 1.0], vec![], Arc::new(Poly)).is_err());
        assert!(DdeModel::new(1, vec![0.0, 1.0, 1.0], vec![], Arc::new(Poly)).is_err());
    }

    #[test]
    fn eval_rhs_checks_dimensions() {
        let m = poly_model();
        assert!(eval_rhs(&m, &HistoryPoint::zeros(1, 1), &[0.0]).is_err());
        assert!(eval_rhs(&m, &HistoryPoint::zeros(1, 2), &[]).is_err());
        let v = eval_rhs(&m, &HistoryPoint(DMatrix::from_row_slice(1, 2, &[2.0, 3.0])), &[0.5]).unwrap();
        assert_eq!(v[0], 8.0 + 4.5);
    }

    #[test]
    fn square_and_cube_forms() {
        let sq = ClosureRhs(|xi: &[Vec<f64>], _a: &[f64]| vec![xi[0][0] * xi[0][0]]);
        let m = DdeModel::new(1, vec![0.0], vec![], Arc::new(sq)).unwrap();
        let mlf = Mlf::new(&m, &DVector::from_vec(vec![0.3]), &[], DerivMode::Auto).unwrap();
        assert_eq!(mlf.mode(), DerivMode::FiniteDifference);
        let u = HistoryPoint(DMatrix::from_element(1, 1, 0.7));
        let b = mlf.b(&u, &u).unwrap();
        assert!((b[0] - 2.0 * 0.49).abs() < 1e-7);

        let m = poly_model();
        let mlf = Mlf::new(&m, &DVector::from_vec(vec![0.2]), &[1.5], DerivMode::Analytic).unwrap();
        let u = HistoryPoint(DMatrix::from_row_slice(1, 2, &[0.7, 0.0]));
        assert!((mlf.c(&u, &u, &u).unwrap()[0] - 6.0 * 0.343).abs() < 1e-14);
        let v = HistoryPoint(DMatrix::from_row_slice(1, 2, &[0.0, 2.0]));
        assert!((mlf.b1(&v, &v, &[1.0]).unwrap()[0] - 8.0).abs() < 1e-14);
    }

    #[test]
    fn fd_agrees_with_jets() {
        let m = poly_model();
        let x0 = DVector::from_vec(vec![0.4]);
        let an = Mlf::new(&m, &x0, &[0.8], DerivMode::Analytic).unwrap();
        let fd = Mlf::new(&m, &x0, &[0.8], DerivMode::FiniteDifference).unwrap();
        let u = HistoryPoint(DMatrix::from_row_slice(1, 2, &[0.3, -0.6]));
        let v = HistoryPoint(DMatrix::from_row_slice(1, 2, &[1.1, 0.4]));
        let k = [0.9];
        let pairs = [
            (an.b(&u, &v).unwrap(), fd.b(&u, &v).unwrap()),
            (an.c(&u, &v, &u).unwrap(), fd.c(&u, &v, &u).unwrap()),
            (an.a1(&v, &k).unwrap(), fd.a1(&v, &k).unwrap()),
            (an.b1(&u, &v, &k).unwrap(), fd.b1(&u, &v, &k).unwrap()),
        ];
        for (a, f) in pairs {
            assert!((a[0] - f[0]).abs() <= 1e-6 * (1.0 + a[0].abs()), "{a} vs {f}");
        }
    }
}
