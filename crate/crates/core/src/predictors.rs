//! Homoclinic and codimension-one equilibrium predictors near a
//! Bogdanov-Takens point, mapped into model coordinates through `H` and `K`.
//!
//! The homoclinic series live on the perturbed Hamiltonian oscillator
//! `ü = −4 + u² + u̇(u + τ)ε`; both unfoldings reduce to it by rescaling.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::chmat::CharMatrix;
use crate::error::{Error, Result};
use crate::homological::BtNormalForm;
use crate::model::{eval_rhs, DdeModel, DerivMode, HistoryPoint, Mlf};
use crate::models::BtCase;

/// Default number of mesh points of a predicted profile.
pub const DEFAULT_MESH: usize = 201;

/// Which homoclinic branch a predictor follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictorCase {
    /// Generic unfolding.
    Generic,
    /// Transcritical unfolding, upper signs.
    TranscriticalPlus,
    /// Transcritical unfolding, lower signs.
    TranscriticalMinus,
}

impl PredictorCase {
    /// Short label used in artifact names.
    pub fn label(self) -> &'static str {
        match self {
            PredictorCase::Generic => "generic",
            PredictorCase::TranscriticalPlus => "transcritical_plus",
            PredictorCase::TranscriticalMinus => "transcritical_minus",
        }
    }

    fn sign(self) -> f64 {
        match self {
            PredictorCase::TranscriticalMinus => -1.0,
            _ => 1.0,
        }
    }
}

/// Truncated series `τ(ε)`, `ũ(ζ)`, `ṽ(ζ)`, `ξ(s)` and the integral of `ũ`.
///
/// At order 1 all series are cut at `ε⁰`.
#[derive(Clone, Copy, Debug)]
pub struct SeriesKernels {
    e: f64,
}

fn log_cosh(s: f64) -> f64 {
    let a = s.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn sech2(s: f64) -> f64 {
    let c = s.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

impl SeriesKernels {
    /// Kernels for perturbation `eps` truncated at `order` (1 or 3).
    pub fn new(eps: f64, order: u8) -> Self {
        SeriesKernels {
            e: if order >= 3 { eps } else { 0.0 },
        }
    }

    /// `τ(ε)`.
    pub fn tau(&self) -> f64 {
        10.0 / 7.0 + 288.0 / 2401.0 * self.e * self.e
    }

    /// `ũ(ζ)`.
    pub fn u(&self, z: f64) -> f64 {
        2.0 - (1.0 - z * z) * (6.0 + 18.0 / 49.0 * self.e * self.e)
    }

    /// `ṽ(ζ)`.
    pub fn v(&self, z: f64) -> f64 {
        let e = self.e;
        let br = -12.0 + 72.0 / 7.0 * z * e - (90.0 / 49.0 + 162.0 / 49.0 * z * z) * e * e
            + (3888.0 / 2401.0 * z - 216.0 / 343.0 * z * z * z) * e * e * e;
        -br * (1.0 - z * z) * z
    }

    /// `ξ(s)`.
    pub fn xi(&self, s: f64) -> f64 {
        let e = self.e;
        let (l, t, q) = (log_cosh(s), s.tanh(), sech2(s));
        let c2 = -18.0 * s / 49.0 + 45.0 * t / 98.0 + 36.0 / 49.0 * t * l;
        let c3 = -117.0 / 343.0 * t * t
            + 3.0 / 4802.0 * (-504.0 * l * l * q - 276.0 * (2.0 - q) * l + 102.0 * l * q + 504.0 * s * t);
        s - 6.0 / 7.0 * l * e + c2 * e * e + c3 * e * e * e
    }

    /// `ε(a/b)∫ũ dη` as a function of `ξ̃ = ξ(s)`.
    pub fn int_u(&self, x: f64) -> f64 {
        let e = self.e;
        let (l, t, q) = (log_cosh(x), x.tanh(), sech2(x));
        2.0 * x - 6.0 * t
            + (18.0 * q / 7.0 + 12.0 / 7.0 * l) * e
            + 9.0 / 49.0 * (4.0 * x - 9.0 * t + 5.0 * t * q) * e * e
            + 18.0 * (-21.0 * q * q + 47.0 * q + 8.0 * l) / 2401.0 * e * e * e
    }
}

/// Homoclinic orbit of the normal form as an explicit function of `η`.
#[derive(Clone, Copy, Debug)]
pub struct NfOrbit {
    /// Branch.
    pub case: PredictorCase,
    /// Perturbation parameter.
    pub eps: f64,
    /// Truncation order (1 or 3).
    pub order: u8,
    /// Normal-form coefficient `a`.
    pub a: f64,
    /// Normal-form coefficient `b`.
    pub b: f64,
    /// Unfolding parameters `(β₁, β₂)`.
    pub beta: [f64; 2],
    kernels: SeriesKernels,
}

impl NfOrbit {
    /// Builds the orbit for coefficients `(a, b)`.
    pub fn new(case: PredictorCase, a: f64, b: f64, eps: f64, order: u8) -> Result<Self> {
        if order != 1 && order != 3 {
            return Err(Error::Usage(format!("order must be 1 or 3, got {order}")));
        }
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("ε must be nonnegative, got {eps}")));
        }
        if a == 0.0 || b == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::NotBt("degenerate coefficients a, b".into()));
        }
        let k = SeriesKernels::new(eps, order);
        let e2 = eps * eps;
        let beta = match case {
            PredictorCase::Generic => [-4.0 * a.powi(3) / b.powi(4) * e2 * e2, a / b * e2 * k.tau()],
            _ => {
                let sg = case.sign();
                [sg * 4.0 * a * a / (b * b) * e2, a / b * (k.tau() + 2.0 * sg) * e2]
            }
        };
        Ok(NfOrbit {
            case,
            eps,
            order,
            a,
            b,
            beta,
            kernels: k,
        })
    }

    /// Series kernels in use.
    pub fn kernels(&self) -> &SeriesKernels {
        &self.kernels
    }

    /// Blow-up variable `s = (a/b)εη`.
    pub fn s_of_eta(&self, eta: f64) -> f64 {
        self.a / self.b * self.eps * eta
    }

    /// `(w₀, w₁)` at `η`.
    pub fn w(&self, eta: f64) -> [f64; 2] {
        let (a, b, e) = (self.a, self.b, self.eps);
        let z = self.kernels.xi(self.s_of_eta(eta)).tanh();
        let shift = match self.case {
            PredictorCase::Generic => 0.0,
            c => -2.0 * c.sign(),
        };
        [
            a / (b * b) * (self.kernels.u(z) + shift) * e * e,
            a * a / (b * b * b) * self.kernels.v(z) * e * e * e,
        ]
    }

    /// Saddle equilibrium approached as `η → ±∞`.
    pub fn saddle(&self) -> [f64; 2] {
        let shift = match self.case {
            PredictorCase::Generic => 0.0,
            c => -2.0 * c.sign(),
        };
        [self.a / (self.b * self.b) * (2.0 + shift) * self.eps * self.eps, 0.0]
    }

    /// Half-length `S` in `s` with `|tanh ξ(±S)| ≥ 1 − 10⁻⁸`.
    pub fn s_window(&self) -> Result<f64> {
        let mut s = 1.0;
        while s < 200.0 {
            let lo = self.kernels.xi(-s).tanh();
            let hi = self.kernels.xi(s).tanh();
            if hi >= 1.0 - 1e-8 && lo <= -1.0 + 1e-8 {
                return Ok(s);
            }
            s += 0.25;
        }
        Err(Error::OutOfRange("ξ does not saturate; ε too large".into()))
    }

    /// Checks that `ξ` is strictly increasing on `[−S, S]`.
    pub fn check_xi_monotone(&self, smax: f64) -> Result<()> {
        let n = 4000;
        let mut prev = self.kernels.xi(-smax);
        for i in 1..=n {
            let s = -smax + 2.0 * smax * i as f64 / n as f64;
            let x = self.kernels.xi(s);
            if !(x > prev) {
                return Err(Error::OutOfRange(format!("ξ not increasing near s = {s:.3}")));
            }
            prev = x;
        }
        Ok(())
    }

    /// `t(η)` given the time-reparametrization coefficients `ϑ₁₀₀₀`, `ϑ₀₀₁₀`, `ϑ₀₀₀₁`.
    pub fn t_of_eta(&self, eta: f64, theta: [f64; 3]) -> f64 {
        let (a, b, e) = (self.a, self.b, self.eps);
        let [t1000, t0010, t0001] = theta;
        let x = self.kernels.xi(self.s_of_eta(eta));
        let int_w0 = e / b * self.kernels.int_u(x);
        match self.case {
            PredictorCase::Generic => eta * (1.0 + t0001 * self.beta[1]) + t1000 * int_w0,
            c => {
                let lin = 1.0 + t0010 * self.beta[0] + t0001 * self.beta[1];
                lin * eta + t1000 * int_w0 - 2.0 * c.sign() * t1000 * a / (b * b) * e * e * eta
            }
        }
    }
}

/// Predicted homoclinic orbit in model coordinates.
#[derive(Clone, Debug)]
pub struct HomoclinicPredictor {
    /// Branch.
    pub case: PredictorCase,
    /// Perturbation parameter.
    pub eps: f64,
    /// Truncation order.
    pub order: u8,
    /// Unfolding parameters `β`.
    pub beta: [f64; 2],
    /// Model parameters `α₀ + K(β)`.
    pub alpha: Vec<f64>,
    /// Time mesh (strictly increasing).
    pub t: Vec<f64>,
    /// Normal-form time at each mesh point.
    pub eta: Vec<f64>,
    /// Normal-form coordinates at each mesh point.
    pub w: Vec<[f64; 2]>,
    /// Profile `x(t)`, one column per mesh point.
    pub profile: DMatrix<f64>,
    /// `max w₀ − min w₀` on the mesh.
    pub amplitude: f64,
    /// Half-length of the window in `η`.
    pub half_length: f64,
    /// Largest `|t(η) − t|` over the mesh.
    pub inversion_residual: f64,
}

fn invert(f: &dyn Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64, guess: f64) -> f64 {
    let mut x = guess.clamp(lo, hi);
    let scale = 1.0 + target.abs();
    for _ in 0..200 {
        let fx = f(x) - target;
        if fx.abs() <= 1e-13 * scale {
            return x;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let h = 1e-6 * (1.0 + x.abs());
        let d = (f(x + h) - f(x - h)) / (2.0 * h);
        let nx = x - fx / d;
        x = if d > 0.0 && nx > lo && nx < hi { nx } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * (1.0 + x.abs()) {
            return x;
        }
    }
    x
}

fn theta_triple(nf: &BtNormalForm) -> [f64; 3] {
    [nf.theta("1000"), nf.theta("0010"), nf.theta("0001")]
}

fn check_case(nf: &BtNormalForm, case: PredictorCase) -> Result<()> {
    let ok = matches!(
        (nf.case, case),
        (BtCase::Generic, PredictorCase::Generic)
            | (BtCase::Transcritical, PredictorCase::TranscriticalPlus)
            | (BtCase::Transcritical, PredictorCase::TranscriticalMinus)
    );
    if ok {
        Ok(())
    } else {
        Err(Error::Usage(format!("{:?} predictor does not fit a {:?} normal form", case, nf.case)))
    }
}

/// Homoclinic predictor for a normal form, on `mesh` Chebyshev-clustered times.
pub fn homoclinic(
    nf: &BtNormalForm,
    case: PredictorCase,
    eps: f64,
    order: u8,
    mesh: usize,
) -> Result<HomoclinicPredictor> {
    check_case(nf, case)?;
    if mesh < 2 {
        return Err(Error::Usage("mesh needs at least two points".into()));
    }
    let orbit = NfOrbit::new(case, nf.a, nf.b, eps, order)?;
    let n = nf.x0.len();
    if eps == 0.0 {
        let t: Vec<f64> = (0..mesh).map(|k| -1.0 + 2.0 * k as f64 / (mesh - 1) as f64).collect();
        let profile = DMatrix::from_fn(n, mesh, |i, _| nf.x0[i]);
        return Ok(HomoclinicPredictor {
            case,
            eps,
            order,
            beta: [0.0, 0.0],
            alpha: nf.alpha0.clone(),
            eta: t.clone(),
            t,
            w: vec![[0.0, 0.0]; mesh],
            profile,
            amplitude: 0.0,
            half_length: 0.0,
            inversion_residual: 0.0,
        });
    }
    let smax = orbit.s_window()?;
    orbit.check_xi_monotone(smax)?;
    let half = smax / (nf.a / nf.b * eps).abs();
    let theta = theta_triple(nf);
    let tf = |eta: f64| orbit.t_of_eta(eta, theta);
    let dense = 4000;
    let mut prev = tf(-half);
    for i in 1..=dense {
        let eta = -half + 2.0 * half * i as f64 / dense as f64;
        let v = tf(eta);
        if !(v > prev) {
            return Err(Error::OutOfRange(format!(
                "t(η) not increasing near η = {eta:.3} (ε = {eps})"
            )));
        }
        prev = v;
    }
    let (t0, t1) = (tf(-half), tf(half));
    let lin = 1.0 + theta[2] * orbit.beta[1];
    let mut t = Vec::with_capacity(mesh);
    let mut eta = Vec::with_capacity(mesh);
    let mut w = Vec::with_capacity(mesh);
    let mut profile = DMatrix::zeros(n, mesh);
    let mut resid = 0.0f64;
    for k in 0..mesh {
        let c = -(std::f64::consts::PI * k as f64 / (mesh - 1) as f64).cos();
        let tk = if k == 0 {
            t0
        } else if k == mesh - 1 {
            t1
        } else {
            0.5 * (t0 + t1) + 0.5 * (t1 - t0) * c
        };
        let ek = if k == 0 {
            -half
        } else if k == mesh - 1 {
            half
        } else {
            invert(&tf, tk, -half, half, tk / lin)
        };
        resid = resid.max((tf(ek) - tk).abs());
        let wk = orbit.w(ek);
        profile.set_column(k, &nf.state_at(wk, orbit.beta));
        t.push(tk);
        eta.push(ek);
        w.push(wk);
    }
    if resid > 1e-10 * (1.0 + t0.abs().max(t1.abs())) {
        return Err(Error::NoConvergence(format!("t(η) inversion residual {resid:.2e}")));
    }
    let (mn, mx) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v[0]), b.max(v[0])));
    Ok(HomoclinicPredictor {
        case,
        eps,
        order,
        beta: orbit.beta,
        alpha: nf.alpha_at(orbit.beta),
        t,
        eta,
        w,
        profile,
        amplitude: mx - mn,
        half_length: half,
        inversion_residual: resid,
    })
}

/// Generic homoclinic predictor.
pub fn homoclinic_generic(nf: &BtNormalForm, eps: f64, order: u8, mesh: usize) -> Result<HomoclinicPredictor> {
    homoclinic(nf, PredictorCase::Generic, eps, order, mesh)
}

/// Transcritical homoclinic predictor; `plus` selects the upper signs.
pub fn homoclinic_transcritical(
    nf: &BtNormalForm,
    eps: f64,
    plus: bool,
    order: u8,
    mesh: usize,
) -> Result<HomoclinicPredictor> {
    let case = if plus {
        PredictorCase::TranscriticalPlus
    } else {
        PredictorCase::TranscriticalMinus
    };
    homoclinic(nf, case, eps, order, mesh)
}

/// Kind of a codimension-one equilibrium curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveKind {
    /// Fold (generic case).
    Fold,
    /// Transcritical (trivial branch).
    Transcritical,
    /// Hopf.
    Hopf,
}

/// One predicted point of a codimension-one curve.
#[derive(Clone, Debug)]
pub struct CurvePoint {
    /// Curve label (`fold`, `hopf`, `transcritical`, `hopf1`, `hopf2`).
    pub label: &'static str,
    /// Curve kind.
    pub kind: CurveKind,
    /// Curve parameter.
    pub eps: f64,
    /// Unfolding parameters.
    pub beta: [f64; 2],
    /// Predicted equilibrium.
    pub x: DVector<f64>,
    /// Predicted parameters.
    pub alpha: Vec<f64>,
    /// Predicted Hopf frequency.
    pub omega: Option<f64>,
}

/// Predicted fold/transcritical and Hopf points at curve parameter `eps`.
pub fn equilibrium_curves(nf: &BtNormalForm, eps: f64) -> Vec<CurvePoint> {
    let (a, b, e2) = (nf.a, nf.b, eps * eps);
    let pt = |label, kind, w: [f64; 2], beta: [f64; 2], omega| CurvePoint {
        label,
        kind,
        eps,
        beta,
        x: nf.state_at(w, beta),
        alpha: nf.alpha_at(beta),
        omega,
    };
    match nf.case {
        BtCase::Generic => vec![
            pt("fold", CurveKind::Fold, [0.0, 0.0], [0.0, eps], None),
            pt(
                "hopf",
                CurveKind::Hopf,
                [-e2 / (2.0 * a), 0.0],
                [-e2 * e2 / (4.0 * a), b * e2 / (2.0 * a)],
                Some(eps),
            ),
        ],
        BtCase::Transcritical => vec![
            pt("transcritical", CurveKind::Transcritical, [0.0, 0.0], [0.0, eps], None),
            pt("hopf1", CurveKind::Hopf, [0.0, 0.0], [-e2, 0.0], Some(eps)),
            pt("hopf2", CurveKind::Hopf, [-e2 / a, 0.0], [e2, b / a * e2], Some(eps)),
        ],
    }
}

/// Newton-corrects an equilibrium of `model` at fixed `alpha`.
pub fn correct_equilibrium(model: &DdeModel, x: &DVector<f64>, alpha: &[f64]) -> Result<DVector<f64>> {
    let m = model.delays().len();
    let mut x = x.clone();
    for _ in 0..50 {
        let f = eval_rhs(model, &HistoryPoint::constant(&x, m), alpha)?;
        if f.amax() <= 1e-15 * (1.0 + x.amax()) {
            return Ok(x);
        }
        let chm = CharMatrix::new(model, &x, alpha)?;
        let jac = -chm.delta0(0);
        let dx = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::Singular("equilibrium Jacobian".into()))?;
        x -= &dx;
        if dx.amax() <= 1e-14 * (1.0 + x.amax()) || f.amax() <= 1e-15 {
            let f = eval_rhs(model, &HistoryPoint::constant(&x, m), alpha)?;
            if f.amax() <= 1e-12 {
                return Ok(x);
            }
        }
    }
    Err(Error::NoConvergence("equilibrium correction".into()))
}

/// Corrects an equilibrium near a predicted fold or transcritical point.
///
/// Solves `F(x, α + μk) = 0` with `qᵀ(x − x_pred) = 0` for `(x, μ)`, so a
/// prediction slightly beyond a fold still has a nearby equilibrium.
pub fn correct_equilibrium_released(
    model: &DdeModel,
    x: &DVector<f64>,
    alpha: &[f64],
    k: &[f64],
    q: &DVector<f64>,
) -> Result<(DVector<f64>, Vec<f64>)> {
    let n = model.n();
    let m = model.delays().len();
    let x_pred = x.clone();
    let mut x = x.clone();
    let mut mu = 0.0;
    let at = |mu: f64| -> Vec<f64> { alpha.iter().zip(k).map(|(a, d)| a + mu * d).collect() };
    for _ in 0..50 {
        let al = at(mu);
        let f = eval_rhs(model, &HistoryPoint::constant(&x, m), &al)?;
        let pin = q.dot(&(&x - &x_pred));
        if f.amax() <= 1e-15 * (1.0 + x.amax()) && pin.abs() <= 1e-15 {
            return Ok((x, al));
        }
        let mlf = Mlf::new(model, &x, &al, DerivMode::Auto)?;
        let jx = -CharMatrix::from_mlf(&mlf)?.delta0(0);
        let jm = mlf.j1(k)?;
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&jx);
        jac.view_mut((0, n), (n, 1)).copy_from(&jm);
        jac.view_mut((n, 0), (1, n)).copy_from(&q.transpose());
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&f);
        rhs[n] = pin;
        let d = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("released equilibrium Jacobian".into()))?;
        x -= d.rows(0, n);
        mu -= d[n];
        if d.amax() <= 1e-14 * (1.0 + x.amax() + mu.abs()) {
            let al = at(mu);
            let f = eval_rhs(model, &HistoryPoint::constant(&x, m), &al)?;
            if f.amax() <= 1e-12 {
                return Ok((x, al));
            }
        }
    }
    Err(Error::NoConvergence("released equilibrium correction".into()))
}

/// Smallest `|λ|` of the characteristic roots near zero at an equilibrium.
pub fn fold_indicator(model: &DdeModel, x: &DVector<f64>, alpha: &[f64]) -> Result<f64> {
    let chm = CharMatrix::new(model, x, alpha)?;
    Ok(chm.refine_root(Complex64::new(0.0, 0.0))?.norm())
}

/// Smallest singular value of `Δ(iω)` at the corrected equilibrium.
pub fn hopf_indicator(model: &DdeModel, x: &DVector<f64>, alpha: &[f64], omega: f64) -> Result<f64> {
    let xc = correct_equilibrium(model, x, alpha)?;
    let chm = CharMatrix::new(model, &xc, alpha)?;
    let d = chm.delta(0, Complex64::new(0.0, omega));
    Ok(d.svd(false, false).singular_values.min())
}

/// Indicator of a predicted curve point: smallest `|λ|` at the corrected
/// equilibrium for fold/transcritical points (parameter released along `K₁₀`,
/// `q₀`-component pinned), smallest singular value of `Δ(iω)` for Hopf points.
pub fn curve_indicator(nf: &BtNormalForm, p: &CurvePoint) -> Result<f64> {
    let model = nf.mlf().model();
    match p.omega {
        Some(w) => hopf_indicator(model, &p.x, &p.alpha, w),
        None => {
            let k10: Vec<f64> = nf.k("10").map(|v| v.iter().copied().collect()).unwrap_or_default();
            let (x, al) = correct_equilibrium_released(model, &p.x, &p.alpha, &k10, &nf.spectral.chain().q0)?;
            fold_indicator(model, &x, &al)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homological::{compute_for, NfOptions};
    use crate::models;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn nf(id: &str) -> (DdeModel, BtNormalForm) {
        let (m, spec) = models::build(id, &BTreeMap::new()).unwrap();
        let nf = compute_for(&m, &spec, NfOptions::default()).unwrap();
        (m, nf)
    }

    #[test]
    fn kernel_identities() {
        for eps in [0.0, 0.1, 0.3] {
            let k = SeriesKernels::new(eps, 3);
            assert!((SeriesKernels::new(eps, 3).tau() - (10.0 / 7.0 + 288.0 / 2401.0 * eps * eps)).abs() < 1e-15);
            assert_eq!(k.xi(0.0), 0.0);
            assert!((k.u(1.0) - 2.0).abs() < 1e-15 && (k.u(-1.0) - 2.0).abs() < 1e-15);
            assert!(k.v(1.0).abs() < 1e-15);
        }
        assert!((SeriesKernels::new(0.0, 3).tau() - 10.0 / 7.0).abs() < 1e-15);
    }

    /// `ü = −4 + u² + u̇(u + τ)ε` along `u(s) = ũ(tanh ξ(s))` leaves an `O(ε⁴)` residual.
    fn oscillator_residual(eps: f64, order: u8) -> f64 {
        let k = SeriesKernels::new(eps, order);
        let u = |s: f64| k.u(k.xi(s).tanh());
        let h = 1e-3;
        let mut r = 0.0f64;
        for i in -40..=40 {
            let s = i as f64 * 0.1;
            let (um, u0, up) = (u(s - h), u(s), u(s + h));
            let (u2m, u2p) = (u(s - 2.0 * h), u(s + 2.0 * h));
            let d1 = (u2m - 8.0 * um + 8.0 * up - u2p) / (12.0 * h);
            let d2 = (-u2m + 16.0 * um - 30.0 * u0 + 16.0 * up - u2p) / (12.0 * h * h);
            r = r.max((d2 - (-4.0 + u0 * u0 + d1 * (u0 + k.tau()) * eps)).abs());
        }
        r
    }

    #[test]
    fn kernels_solve_the_oscillator() {
        let e = [0.05, 0.1, 0.2];
        let r3: Vec<f64> = e.iter().map(|&v| oscillator_residual(v, 3)).collect();
        let r1: Vec<f64> = e.iter().map(|&v| oscillator_residual(v, 1)).collect();
        let p3 = crate::fit::loglog_slope(&e, &r3).unwrap();
        let p1 = crate::fit::loglog_slope(&e, &r1).unwrap();
        assert!(p3 > 3.5, "order-3 residual slope {p3}");
        assert!((p1 - 1.0).abs() < 0.3, "order-1 residual slope {p1}");
    }

    #[test]
    fn integral_kernel_is_an_antiderivative() {
        for eps in [0.05, 0.2] {
            let k = SeriesKernels::new(eps, 3);
            let mut worst = 0.0f64;
            for i in -30..=30 {
                let s = i as f64 * 0.2;
                let h = 1e-4;
                let d = (k.int_u(k.xi(s + h)) - k.int_u(k.xi(s - h))) / (2.0 * h);
                worst = worst.max((d - k.u(k.xi(s).tanh())).abs());
            }
            assert!(worst < 40.0 * eps.powi(4), "ε = {eps}: {worst}");
        }
    }

    #[test]
    fn generic_parameters_match_closed_forms() {
        let (_, n) = nf("neural_network");
        let eps = 0.1;
        let p = homoclinic_generic(&n, eps, 3, DEFAULT_MESH).unwrap();
        let (a, b) = (n.a, n.b);
        assert!((p.beta[0] + 4.0 * a.powi(3) / b.powi(4) * eps.powi(4)).abs() < 1e-16);
        let b2 = a / b * eps * eps * (10.0 / 7.0 + 288.0 / 2401.0 * eps * eps);
        assert!((p.beta[1] - b2).abs() < 1e-16);
        let far = NfOrbit::new(PredictorCase::Generic, a, b, eps, 3).unwrap().w(1e6);
        assert!((far[0] - 2.0 * a * eps * eps / (b * b)).abs() < 1e-12);
        assert!(p.t.windows(2).all(|w| w[1] > w[0]));
        assert!(p.inversion_residual <= 1e-10);
        let sad = n.state_at(NfOrbit::new(PredictorCase::Generic, a, b, eps, 3).unwrap().saddle(), p.beta);
        let end = p.profile.column(0).into_owned();
        assert!((end - sad).amax() < 1e-6 * p.amplitude.max(1e-300) + 1e-12);
    }

    #[test]
    fn generic_orbit_satisfies_the_normal_form() {
        let (a, b) = (0.7, -1.1);
        let defect = |eps: f64| {
            let o = NfOrbit::new(PredictorCase::Generic, a, b, eps, 3).unwrap();
            let mut worst = 0.0f64;
            let span = 6.0 / (a / b * eps).abs();
            for i in -50..=50 {
                let eta = span * i as f64 / 50.0;
                let h = 1e-3 * span;
                let (w0, wm, wp) = (o.w(eta), o.w(eta - h), o.w(eta + h));
                let (wmm, wpp) = (o.w(eta - 2.0 * h), o.w(eta + 2.0 * h));
                let d = |i: usize| (wmm[i] - 8.0 * wm[i] + 8.0 * wp[i] - wpp[i]) / (12.0 * h);
                let (d0, d1) = (d(0), d(1));
                let f1 = o.beta[0] + o.beta[1] * w0[1] + a * w0[0] * w0[0] + b * w0[0] * w0[1];
                worst = worst.max(((d0 - w0[1]) / eps.powi(3)).abs()).max(((d1 - f1) / eps.powi(4)).abs());
            }
            worst
        };
        let e = [0.05, 0.1, 0.2];
        let d: Vec<f64> = e.iter().map(|&v| defect(v)).collect();
        let p = crate::fit::loglog_slope(&e, &d).unwrap();
        assert!(p >= 3.5, "relative defect slope {p}: {d:?}");
    }

    #[test]
    fn transcritical_branches_differ_by_the_shift() {
        let (_, n) = nf("vdpo");
        let eps = 0.1;
        let p = homoclinic_transcritical(&n, eps, true, 3, DEFAULT_MESH).unwrap();
        let m = homoclinic_transcritical(&n, eps, false, 3, DEFAULT_MESH).unwrap();
        assert!((p.beta[1] - m.beta[1] - 4.0 * n.a / n.b * eps * eps).abs() < 1e-15);
        let o = NfOrbit::new(PredictorCase::TranscriticalPlus, n.a, n.b, eps, 3).unwrap();
        assert!(o.w(1e7)[0].abs() < 1e-14);
    }

    #[test]
    fn zero_eps_is_the_bt_point() {
        let (_, n) = nf("neural_network");
        let p = homoclinic_generic(&n, 0.0, 3, 11).unwrap();
        assert_eq!(p.alpha, n.alpha0);
        assert!(p.profile.column_iter().all(|c| (c - &n.x0).amax() == 0.0));
        for c in equilibrium_curves(&n, 0.0) {
            assert!((c.x.clone() - &n.x0).amax() == 0.0);
            assert_eq!(c.alpha, n.alpha0);
        }
    }

    #[test]
    fn invalid_requests() {
        let (_, n) = nf("neural_network");
        assert!(matches!(homoclinic_generic(&n, 0.1, 2, 11), Err(Error::Usage(_))));
        assert!(matches!(homoclinic_generic(&n, -0.1, 3, 11), Err(Error::Domain(_))));
        assert!(matches!(homoclinic_transcritical(&n, 0.1, true, 3, 11), Err(Error::Usage(_))));
        assert!(matches!(homoclinic_generic(&n, 5.0, 3, 11), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn orders_agree_as_eps_vanishes() {
        let (_, n) = nf("neural_network");
        let diff = |eps: f64| {
            let o1 = NfOrbit::new(PredictorCase::Generic, n.a, n.b, eps, 1).unwrap();
            let o3 = NfOrbit::new(PredictorCase::Generic, n.a, n.b, eps, 3).unwrap();
            let span = 6.0 / (n.a / n.b * eps).abs();
            (-50..=50)
                .map(|i| {
                    let eta = span * i as f64 / 50.0;
                    (o1.w(eta)[0] - o3.w(eta)[0]).abs()
                })
                .fold(0.0, f64::max)
                / (6.0 * n.a / (n.b * n.b) * eps * eps).abs()
        };
        let e = [0.025, 0.05, 0.1];
        let d: Vec<f64> = e.iter().map(|&v| diff(v)).collect();
        let p = crate::fit::loglog_slope(&e, &d).unwrap();
        assert!((p - 1.0).abs() < 0.25, "relative difference slope {p}");
    }

    #[test]
    fn transcritical_curves_on_vdpo() {
        let (_, n) = nf("vdpo");
        let e = [0.02, 0.04, 0.08];
        for label in ["transcritical", "hopf1", "hopf2"] {
            let ind: Vec<f64> = e
                .iter()
                .map(|&v| {
                    let p = equilibrium_curves(&n, v).into_iter().find(|c| c.label == label).unwrap();
                    curve_indicator(&n, &p).unwrap()
                })
                .collect();
            if ind.iter().all(|v| *v <= 1e-13) {
                continue;
            }
            let p = crate::fit::loglog_slope(&e, &ind).unwrap();
            assert!(p >= 2.0, "{label}: slope {p}, {ind:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn xi_is_increasing(eps in 0.0f64..0.3, s in -12.0f64..12.0) {
            let k = SeriesKernels::new(eps, 3);
            prop_assert!(k.xi(s + 1e-3) > k.xi(s));
        }
    }
}
