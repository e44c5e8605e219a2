//! Bundled example systems with closed-form Bogdanov-Takens data.
//!
//! Model ids: `predator_prey`, `neural_network`, `vdpo`, `bam`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chmat::CharMatrix;
use crate::error::{Error, Result};
use crate::jet::Scalar;
use crate::model::{DdeModel, GenericRhs};

/// Unfolding type of a Bogdanov-Takens point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BtCase {
    /// Equilibrium moves with the parameters.
    Generic,
    /// Equilibrium stays at the same point for all parameters.
    Transcritical,
}

/// Analytic Bogdanov-Takens point of a bundled model.
#[derive(Clone, Debug, Serialize)]
pub struct BtPointSpec {
    /// Model id.
    pub model_id: String,
    /// Equilibrium.
    pub x0: Vec<f64>,
    /// Critical unfolding parameters.
    pub alpha0: Vec<f64>,
    /// Unfolding type.
    pub case: BtCase,
    /// Fixed (non-unfolding) parameters.
    pub fixed: BTreeMap<String, f64>,
}

impl BtPointSpec {
    /// Equilibrium as a vector.
    pub fn x0_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }
}

/// Ids of the bundled models.
pub const MODEL_IDS: [&str; 4] = ["predator_prey", "neural_network", "vdpo", "bam"];

fn merged(
    defaults: &[(&str, f64)],
    overrides: &BTreeMap<String, f64>,
    model: &str,
) -> Result<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in overrides {
        match out.get_mut(k) {
            Some(slot) => *slot = *v,
            None => return Err(Error::Usage(format!("{model}: unknown fixed parameter `{k}`"))),
        }
        if !v.is_finite() {
            return Err(Error::Domain(format!("{model}: `{k}` must be finite")));
        }
    }
    Ok(out)
}

/// Builds a bundled model and its analytic Bogdanov-Takens point.
pub fn build(model_id: &str, overrides: &BTreeMap<String, f64>) -> Result<(DdeModel, BtPointSpec)> {
    match model_id {
        "predator_prey" => predator_prey(overrides),
        "neural_network" => neural_network(overrides),
        "vdpo" => vdpo(overrides),
        "bam" => bam(overrides),
        other => Err(Error::Usage(format!(
            "unknown model `{other}` (expected one of {})",
            MODEL_IDS.join(", ")
        ))),
    }
}

struct PredatorPrey {
    gamma: f64,
    alpha: f64,
    m: f64,
}

impl GenericRhs for PredatorPrey {
    fn eval<S: Scalar>(&self, xi: &[Vec<S>], p: &[S]) -> Vec<S> {
        let (x, y) = (xi[0][0].clone(), xi[0][1].clone());
        let (xt, yt) = (xi[1][0].clone(), xi[1][1].clone());
        let (theta, delta) = (p[0].clone(), p[1].clone());
        let one = x.cst_like(1.0);
        let growth = (one.clone() - x.clone()) * (x.clone() - self.gamma) / (x.clone() + theta);
        let capture = y.clone() * self.alpha / (x.clone() + y.clone());
        let dx = x * (growth - capture);
        let dy = delta * y * ((xt.clone() * self.m) / (xt + yt) - 1.0);
        vec![dx, dy]
    }
}

fn predator_prey(overrides: &BTreeMap<String, f64>) -> Result<(DdeModel, BtPointSpec)> {
    let fixed = merged(
        &[("gamma", 0.15), ("alpha", 0.9), ("m", 1.50298303), ("tau", 1.0)],
        overrides,
        "predator_prey",
    )?;
    let (g, a, m, tau) = (fixed["gamma"], fixed["alpha"], fixed["m"], fixed["tau"]);
    if m == 1.0 || a <= 0.0 || m <= 0.0 || !(tau > 0.0) {
        return Err(Error::Domain("predator_prey: need m ≠ 1, α > 0, m > 0, τ > 0".into()));
    }
    let x0 = (m + a - m * a + m * g) / (2.0 * m);
    let y0 = (m - 1.0) * x0;
    let theta0 = ((a + m * (1.0 - a + g)).powi(2) - 4.0 * m * m * g) / (4.0 * (m - 1.0) * m * a);
    let delta0 = a / m;
    if !(x0 > 0.0 && y0 > 0.0 && x0 + theta0 != 0.0) {
        return Err(Error::Domain("predator_prey: equilibrium leaves the positive quadrant".into()));
    }
    let model = DdeModel::new(
        2,
        vec![0.0, tau],
        vec!["theta".into(), "delta".into()],
        Arc::new(PredatorPrey { gamma: g, alpha: a, m }),
    )?;
    Ok((
        model,
        BtPointSpec {
            model_id: "predator_prey".into(),
            x0: vec![x0, y0],
            alpha0: vec![theta0, delta0],
            case: BtCase::Generic,
            fixed,
        },
    ))
}

struct Neural {
    q11: f64,
    q21: f64,
}

fn sigmoid<S: Scalar>(x: S) -> S {
    ((x * -4.0).exp() + 1.0).recip() - 0.5
}

impl GenericRhs for Neural {
    fn eval<S: Scalar>(&self, xi: &[Vec<S>], p: &[S]) -> Vec<S> {
        let (u1, u2) = (xi[0][0].clone(), xi[0][1].clone());
        let (u1t, u2t) = (xi[1][0].clone(), xi[1][1].clone());
        let (q, e) = (p[0].clone(), p[1].clone());
        let s = sigmoid(u1t);
        let d1 = -u1 + s.clone() * self.q11 - q * u2t + e;
        let d2 = -u2 + s * self.q21;
        vec![d1, d2]
    }
}

fn neural_network(overrides: &BTreeMap<String, f64>) -> Result<(DdeModel, BtPointSpec)> {
    if !overrides.is_empty() {
        return Err(Error::Domain(
            "neural_network: the closed-form point holds only for the default constants".into(),
        ));
    }
    let fixed = merged(&[("q11", 2.6), ("q21", 1.0), ("T", 1.0)], overrides, "neural_network")?;
    let model = DdeModel::new(
        2,
        vec![0.0, 1.0],
        vec!["Q".into(), "E".into()],
        Arc::new(Neural { q11: 2.6, q21: 1.0 }),
    )?;
    let r = (3.0f64 / 13.0).sqrt();
    let u1 = 0.25 * ((8.0 - 39f64.sqrt()) / 5.0).ln();
    let u2 = -0.5 * r;
    let e = (39f64.sqrt() - 10.0 * r.atanh()) / 20.0;
    Ok((
        model,
        BtPointSpec {
            model_id: "neural_network".into(),
            x0: vec![u1, u2],
            alpha0: vec![1.3, e],
            case: BtCase::Generic,
            fixed,
        },
    ))
}

struct Vdpo {
    c1: f64,
    c2: f64,
}

impl GenericRhs for Vdpo {
    fn eval<S: Scalar>(&self, xi: &[Vec<S>], p: &[S]) -> Vec<S> {
        let (x1, x2) = (xi[0][0].clone(), xi[0][1].clone());
        let x1t = xi[1][0].clone();
        let (eps, tau) = (p[0].clone(), p[1].clone());
        let ex = x1t.exp();
        let g = (ex.clone() - 1.0) / (ex * self.c1 + self.c2);
        let d1 = tau.clone() * x2.clone();
        let d2 = tau * (eps.clone() * g - eps * (x1.clone() * x1.clone() - 1.0) * x2 - x1);
        vec![d1, d2]
    }
}

fn vdpo(overrides: &BTreeMap<String, f64>) -> Result<(DdeModel, BtPointSpec)> {
    let fixed = merged(&[("c1", 0.25), ("c2", 0.5)], overrides, "vdpo")?;
    let (c1, c2) = (fixed["c1"], fixed["c2"]);
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::Domain("vdpo: need c1, c2 > 0".into()));
    }
    let eps0 = c1 + c2;
    let model = DdeModel::new(
        2,
        vec![0.0, 1.0],
        vec!["epsilon".into(), "tau".into()],
        Arc::new(Vdpo { c1, c2 }),
    )?;
    Ok((
        model,
        BtPointSpec {
            model_id: "vdpo".into(),
            x0: vec![0.0, 0.0],
            alpha0: vec![eps0, eps0],
            case: BtCase::Transcritical,
            fixed,
        },
    ))
}

struct Bam {
    mu: [f64; 3],
    c12: f64,
    c13: f64,
    c21: f64,
    c31: f64,
}

impl GenericRhs for Bam {
    fn eval<S: Scalar>(&self, xi: &[Vec<S>], p: &[S]) -> Vec<S> {
        let f1 = |x: S| x.tanh() + x.clone() * x * 0.1;
        let u = &xi[0];
        let (u2t, u3t) = (xi[1][1].clone(), xi[1][2].clone());
        let d1 = u[0].clone() * -self.mu[0]
            + (p[0].clone() + self.c21) * f1(u2t)
            + (p[1].clone() + self.c31) * f1(u3t);
        let d2 = u[1].clone() * -self.mu[1] + u[0].tanh() * self.c12;
        let d3 = u[2].clone() * -self.mu[2] + u[0].tanh() * self.c13;
        vec![d1, d2, d3]
    }
}

/// Critical couplings `(c₂₁⁰, c₃₁⁰)` of the BAM model (all activation slopes 1 at 0).
pub fn bam_critical_couplings(mu: [f64; 3], c12: f64, c13: f64, tau: f64) -> Result<(f64, f64)> {
    let [m1, m2, m3] = mu;
    if m2 == m3 {
        return Err(Error::Domain("bam: μ₂ = μ₃ is degenerate".into()));
    }
    if !(m1 > 0.0 && m2 > 0.0 && m3 > 0.0 && tau > 0.0) || c12 == 0.0 || c13 == 0.0 {
        return Err(Error::Domain("bam: need μᵢ > 0, τ > 0, c₁₂, c₁₃ ≠ 0".into()));
    }
    let c21 = m2 * m2 * (m1 * (m3 * tau + 1.0) + m3) / (c12 * (m2 - m3));
    let c31 = m3 * m3 * (m1 * (m2 * tau + 1.0) + m2) / (c13 * (m3 - m2));
    Ok((c21, c31))
}

fn bam(overrides: &BTreeMap<String, f64>) -> Result<(DdeModel, BtPointSpec)> {
    let fixed = merged(
        &[("mu1", 0.1), ("mu2", 0.3), ("mu3", 0.2), ("c12", 1.0), ("c13", 1.0), ("tau", 5.0)],
        overrides,
        "bam",
    )?;
    let mu = [fixed["mu1"], fixed["mu2"], fixed["mu3"]];
    let (c12, c13, tau) = (fixed["c12"], fixed["c13"], fixed["tau"]);
    let (c21, c31) = bam_critical_couplings(mu, c12, c13, tau)?;
    let mut fixed = fixed;
    fixed.insert("c21_0".into(), c21);
    fixed.insert("c31_0".into(), c31);
    let model = DdeModel::new(
        3,
        vec![0.0, tau],
        vec!["alpha1".into(), "alpha2".into()],
        Arc::new(Bam { mu, c12, c13, c21, c31 }),
    )?;
    Ok((
        model,
        BtPointSpec {
            model_id: "bam".into(),
            x0: vec![0.0; 3],
            alpha0: vec![0.0, 0.0],
            case: BtCase::Transcritical,
            fixed,
        },
    ))
}

/// Quantities of the BAM stability lemma as functions of the delay.
#[derive(Clone, Copy, Debug)]
pub struct BamLemma {
    /// Decay rates `μ₁, μ₂, μ₃`.
    pub mu: [f64; 3],
}

/// Values `(ω₀, a₀, b₀, ζ₁, ζ₂)` at one delay.
#[derive(Clone, Copy, Debug)]
pub struct BamQuantities {
    /// Candidate crossing frequency.
    pub omega0: f64,
    /// `a₀`.
    pub a0: f64,
    /// `b₀`.
    pub b0: f64,
    /// `ζ₁`.
    pub zeta1: f64,
    /// `ζ₂`.
    pub zeta2: f64,
}

impl BamLemma {
    /// Lemma quantities at delay `tau`.
    pub fn quantities(&self, tau: f64) -> BamQuantities {
        let [m1, m2, m3] = self.mu;
        let z0 = m1.powi(4)
            + (m2 * m2 + m3 * m3).powi(2)
            + 8.0 * m1 * m2 * m3 * (m2 + m3 + m2 * m3 * tau)
            + 2.0 * m1 * m1
                * (m3 * m3
                    + 4.0 * m2 * m3 * (1.0 + m3 * tau)
                    + m2 * m2 * (1.0 + 2.0 * m3 * tau * (2.0 + m3 * tau)));
        let omega0 = ((-m1 * m1 - m2 * m2 - m3 * m3 + z0.sqrt()) / 2.0).sqrt();
        let a0 = -m1 * m2 * m3;
        let b0 = -omega0 * (m2 * m3 + m1 * (m2 + m3 + m2 * m3 * tau));
        let zeta1 = m1 * m2 * m3 - (m1 + m2 + m3) * omega0 * omega0;
        let zeta2 = m2 * m3 * omega0 + m1 * (m2 + m3) * omega0 - omega0.powi(3);
        BamQuantities {
            omega0,
            a0,
            b0,
            zeta1,
            zeta2,
        }
    }

    /// `ω₀(τ)`.
    pub fn omega0(&self, tau: f64) -> f64 {
        self.quantities(tau).omega0
    }

    /// Residual `tan(τω₀) − (a₀ζ₂ − b₀ζ₁)/(a₀ζ₁ + b₀ζ₂)` of the tangent equation.
    pub fn tan_residual(&self, tau: f64) -> f64 {
        let q = self.quantities(tau);
        (tau * q.omega0).tan() - (q.a0 * q.zeta2 - q.b0 * q.zeta1) / (q.a0 * q.zeta1 + q.b0 * q.zeta2)
    }

    /// Phase mismatch between `τω₀` and the angle of `(cos, sin)` solving the
    /// real/imaginary split of the characteristic equation, wrapped to `(−π, π]`.
    pub fn phase_mismatch(&self, tau: f64) -> f64 {
        let q = self.quantities(tau);
        let d = q.a0 * q.a0 + q.b0 * q.b0;
        let c = -(q.a0 * q.zeta1 + q.b0 * q.zeta2) / d;
        let s = -(q.b0 * q.zeta1 - q.a0 * q.zeta2) / d;
        let mut r = (tau * q.omega0 - s.atan2(c)) % (2.0 * PI);
        if r > PI {
            r -= 2.0 * PI;
        } else if r <= -PI {
            r += 2.0 * PI;
        }
        r
    }
}

/// Result of [`bam_stability_boundary`].
#[derive(Clone, Copy, Debug)]
pub struct BamBoundary {
    /// Lemma quantities.
    pub lemma: BamLemma,
    /// Minimum positive root of the tangent equation.
    pub tau0: f64,
    /// Smallest delay at which `iω₀` is a verified characteristic root.
    pub bound: f64,
    /// `ω₀` at the bound.
    pub omega_bound: f64,
    /// `|det Δ(iω₀)|` at the bound.
    pub det_at_bound: f64,
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Delay stability data of the BAM model at its critical couplings.
///
/// Scans `τ ∈ (0, 40]` with step 0.05 for sign changes, refines by bisection
/// and drops sign changes across poles of the tangent. The bound is the first
/// root of the phase mismatch for which `iω₀` is a root of `det Δ` to 1e-8.
pub fn bam_stability_boundary(mu1: f64, mu2: f64, mu3: f64) -> Result<BamBoundary> {
    if mu2 == mu3 {
        return Err(Error::Domain("bam: μ₂ = μ₃ is degenerate".into()));
    }
    if !(mu1 > 0.0 && mu2 > 0.0 && mu3 > 0.0) {
        return Err(Error::Domain("bam: need μᵢ > 0".into()));
    }
    let lemma = BamLemma { mu: [mu1, mu2, mu3] };
    let step = 0.05;
    let n = (40.0 / step) as usize;
    let grid: Vec<f64> = (1..=n).map(|i| i as f64 * step).collect();

    let mut tau0 = None;
    for w in grid.windows(2) {
        let (f0, f1) = (lemma.tan_residual(w[0]), lemma.tan_residual(w[1]));
        if f0.is_finite() && f1.is_finite() && (f0 > 0.0) != (f1 > 0.0) {
            let r = bisect(|t| lemma.tan_residual(t), w[0], w[1]);
            if lemma.tan_residual(r).abs() < 1e-6 {
                tau0 = Some(r);
                break;
            }
        }
    }
    let tau0 = tau0.ok_or_else(|| Error::NoConvergence("bam: no root of the tangent equation in (0, 40]".into()))?;

    let mut overrides = BTreeMap::new();
    overrides.insert("mu1".to_string(), mu1);
    overrides.insert("mu2".to_string(), mu2);
    overrides.insert("mu3".to_string(), mu3);
    for w in grid.windows(2) {
        let (f0, f1) = (lemma.phase_mismatch(w[0]), lemma.phase_mismatch(w[1]));
        if (f0 > 0.0) != (f1 > 0.0) && (f0 - f1).abs() < PI {
            let r = bisect(|t| lemma.phase_mismatch(t), w[0], w[1]);
            let omega = lemma.omega0(r);
            overrides.insert("tau".to_string(), r);
            let (model, spec) = bam(&overrides)?;
            let chm = CharMatrix::new(&model, &spec.x0_vec(), &spec.alpha0)?;
            let det = chm.det(Complex64::new(0.0, omega)).norm();
            if det <= 1e-8 {
                return Ok(BamBoundary {
                    lemma,
                    tau0,
                    bound: r,
                    omega_bound: omega,
                    det_at_bound: det,
                });
            }
        }
    }
    Err(Error::NoConvergence("bam: no verified imaginary-axis crossing in (0, 40]".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::eval_rhs;
    use crate::model::HistoryPoint;
    use crate::spectral::{ChainOptions, Spectral};

    fn all() -> Vec<(DdeModel, BtPointSpec)> {
        MODEL_IDS.iter().map(|id| build(id, &BTreeMap::new()).unwrap()).collect()
    }

    #[test]
    fn bt_points_are_equilibria_with_double_zero() {
        for (model, spec) in all() {
            let x = HistoryPoint::constant(&spec.x0_vec(), model.delays().len());
            let f = eval_rhs(&model, &x, &spec.alpha0).unwrap();
            assert!(f.amax() <= 1e-12, "{}: rhs {}", spec.model_id, f.amax());
            let chm = CharMatrix::new(&model, &spec.x0_vec(), &spec.alpha0).unwrap();
            assert!(chm.det(Complex64::new(0.0, 0.0)).norm() <= 1e-10, "{}", spec.model_id);
            Spectral::new(&chm, ChainOptions::default(), 1e-8).unwrap();
        }
    }

    #[test]
    fn bam_critical_values() {
        let (_, spec) = build("bam", &BTreeMap::new()).unwrap();
        assert!((spec.fixed["c21_0"] - 0.36).abs() < 1e-12);
        assert!((spec.fixed["c31_0"] + 0.22).abs() < 1e-12);
    }

    #[test]
    fn neural_closed_form_matches_alternative_expression() {
        let (_, spec) = build("neural_network", &BTreeMap::new()).unwrap();
        let r = (3.0f64 / 13.0).sqrt();
        assert!((spec.x0[0] + 0.5 * r.atanh()).abs() < 1e-14);
        assert!((spec.alpha0[1] - (spec.x0[0] - 1.3 * spec.x0[1])).abs() < 1e-14);
        assert!((spec.alpha0[1] - 0.0505).abs() < 1e-4);
    }

    #[test]
    fn neural_symmetry() {
        let (model, _) = build("neural_network", &BTreeMap::new()).unwrap();
        for k in 0..20 {
            let t = k as f64 * 0.37;
            let cols = vec![vec![t.sin(), (2.0 * t).cos() * 0.5], vec![(3.0 * t).sin() * 0.7, t.cos() * 0.2]];
            let neg: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| -v).collect()).collect();
            let p = [1.1 + 0.1 * t, 0.05 * t];
            let f = model.rhs_cols(&cols, &p);
            let g = model.rhs_cols(&neg, &[p[0], -p[1]]);
            for i in 0..2 {
                assert!((f[i] + g[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn invalid_overrides() {
        let mut o = BTreeMap::new();
        o.insert("m".to_string(), 1.0);
        assert!(matches!(build("predator_prey", &o), Err(Error::Domain(_))));
        let mut o = BTreeMap::new();
        o.insert("mu3".to_string(), 0.3);
        assert!(matches!(build("bam", &o), Err(Error::Domain(_))));
        let mut o = BTreeMap::new();
        o.insert("bogus".to_string(), 0.3);
        assert!(matches!(build("vdpo", &o), Err(Error::Usage(_))));
        assert!(matches!(build("nope", &BTreeMap::new()), Err(Error::Usage(_))));
    }

    #[test]
    fn bam_boundary_values() {
        let b = bam_stability_boundary(0.1, 0.3, 0.2).unwrap();
        assert!((b.tau0 - 5.4320).abs() < 1e-3, "tau0 {}", b.tau0);
        assert!(b.lemma.tan_residual(b.tau0).abs() <= 1e-10);
        assert!((b.bound - 13.230934887939895).abs() < 1e-6, "bound {}", b.bound);
        assert!(b.det_at_bound <= 1e-8);
        let q = b.lemma.quantities(b.bound);
        let lhs = q.zeta1 * q.zeta1 + q.zeta2 * q.zeta2;
        let rhs = q.a0 * q.a0 + q.b0 * q.b0;
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        assert!(matches!(bam_stability_boundary(0.1, 0.2, 0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn bam_spectrum_matches_reference_list() {
        let (model, spec) = build("bam", &BTreeMap::new()).unwrap();
        let chm = CharMatrix::new(&model, &spec.x0_vec(), &spec.alpha0).unwrap();
        let expected = [(-0.2246, 0.6600), (-0.6371, 1.8063), (-0.8483, 3.0681), (-0.9849, 4.3336)];
        for (re, im) in expected {
            let z = chm.refine_root(Complex64::new(re, im)).unwrap();
            assert!((z - Complex64::new(re, im)).norm() < 1e-3, "{z}");
        }
    }
}
