//! Homological-equation engine shared by the generic and transcritical cascades.
//!
//! Coordinates are `(w₀, w₁, β₁, β₂)` and a [`Mono`] holds their exponents.
//! Expansions use factorial normalization: `H = Σ h_m x^m / m!`,
//! `K = Σ K_μ β^μ / μ!`. The time reparametrization `ϑ` and the normal form
//! are stored with plain coefficients (all retained `ϑ` terms are linear).
//!
//! For each monomial `m` the coefficient `h_m` solves
//! `v′ = w_m`, `−Σⱼ Aⱼ v(−τⱼ) = κ_m − w_m(0)` with
//! `κ_m = m!·[F(x₀ + H, α₀ + K)]_m` (without the `L h_m` term) and
//! `w_m = m!·([D_w H · f]_m − Σ ϑ_{m₁} ∂_θ H_{m−m₁})`.
//! Unknown scalars are fixed stage by stage by requiring the Fredholm
//! functional of designated systems to vanish.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::chmat::CharMatrix;
use crate::error::{Error, Result};
use crate::model::{DdeModel, DerivMode, HistoryPoint, Mlf};
use crate::models::BtCase;
use crate::spectral::{ChainOptions, LinSys, PolyFun, Spectral, MAX_DEGREE};

/// Exponents of `(w₀, w₁, β₁, β₂)`.
pub type Mono = [u8; 4];

/// Exponents of `(β₁, β₂)`.
pub type PMono = [u8; 2];

/// Parses a label such as `"2100"`.
pub fn parse_mono(s: &str) -> Option<Mono> {
    let d: Vec<u8> = s.bytes().map(|c| c.wrapping_sub(b'0')).collect();
    (d.len() == 4 && d.iter().all(|v| *v <= 9)).then(|| [d[0], d[1], d[2], d[3]])
}

/// Parses a label such as `"01"`.
pub fn parse_pmono(s: &str) -> Option<PMono> {
    let d: Vec<u8> = s.bytes().map(|c| c.wrapping_sub(b'0')).collect();
    (d.len() == 2 && d.iter().all(|v| *v <= 9)).then(|| [d[0], d[1]])
}

/// Label of a monomial.
pub fn mono_label(m: &[u8]) -> String {
    m.iter().map(|d| char::from(b'0' + d)).collect()
}

pub(crate) fn mono(s: &str) -> Mono {
    parse_mono(s).expect("valid monomial label")
}

fn factorial(m: &[u8]) -> f64 {
    m.iter().map(|&k| (1..=k as u32).product::<u32>() as f64).product()
}

fn sub(m: &Mono, n: &Mono) -> Option<Mono> {
    let mut out = [0u8; 4];
    for i in 0..4 {
        out[i] = m[i].checked_sub(n[i])?;
    }
    Some(out)
}

fn add(m: &Mono, n: &Mono) -> Mono {
    [m[0] + n[0], m[1] + n[1], m[2] + n[2], m[3] + n[3]]
}

fn pmono_embed(p: &PMono) -> Mono {
    [0, 0, p[0], p[1]]
}

fn is_pure_beta(m: &Mono) -> bool {
    m[0] == 0 && m[1] == 0
}

fn pow(x: &[f64; 4], m: &Mono) -> f64 {
    x.iter().zip(m).map(|(v, &k)| v.powi(k as i32)).product()
}

/// Options shared by both cascades.
#[derive(Clone, Copy, Debug)]
pub struct NfOptions {
    /// Jordan-chain normalization.
    pub chain: ChainOptions,
    /// Admissible bordered slack (relative to the right-hand side size).
    pub tol: f64,
    /// Derivative mode of the multilinear forms.
    pub mode: DerivMode,
}

impl Default for NfOptions {
    fn default() -> Self {
        NfOptions {
            chain: ChainOptions::default(),
            tol: 1e-8,
            mode: DerivMode::Auto,
        }
    }
}

/// One assembled linear system of the cascade and its diagnostics.
#[derive(Clone, Debug)]
pub struct SystemRecord {
    /// Monomial label.
    pub mono: String,
    /// The system `(κ, w)`.
    pub sys: LinSys,
    /// Bordered slack of the solve.
    pub slack: f64,
    /// Fredholm functional `p₁κ − ⟨ψ₁, w⟩`.
    pub fsc: f64,
    /// Substitution residual of the stored coefficient.
    pub residual: f64,
}

/// Jacobian of one stage's solvability conditions in its unknowns.
#[derive(Clone, Debug)]
pub struct StageRecord {
    /// Unknown names.
    pub unknowns: Vec<String>,
    /// Monomials whose Fredholm conditions were imposed.
    pub conditions: Vec<String>,
    /// `∂(FSC)/∂(unknowns)`.
    pub jacobian: DMatrix<f64>,
}

/// Failure class of a singular stage.
#[derive(Clone, Copy, Debug)]
pub(crate) enum StageFail {
    Degenerate,
    Transversality,
}

/// One stage: unknowns fixed by the Fredholm conditions of some systems.
pub(crate) struct Stage {
    pub names: &'static [&'static str],
    pub conditions: &'static [&'static str],
    pub fail: StageFail,
}

/// Case description consumed by [`run`].
pub(crate) struct CaseDef {
    pub case: BtCase,
    /// Solved monomials in dependency order (excluding `φ₀`, `φ₁`).
    pub order: &'static [&'static str],
    /// Retained parameter monomials of `K`.
    pub k_monos: &'static [&'static str],
    /// Retained monomials of `ϑ`.
    pub theta_monos: &'static [&'static str],
    /// Stages in solve order.
    pub stages: &'static [Stage],
    /// Fixed setup (helper vectors, transversality checks) before the stages.
    pub setup: fn(&Engine, &mut State) -> Result<()>,
    /// Maps named constants to coefficients.
    pub assemble: fn(&mut State),
    /// Checks after a stage (index) completes.
    pub after_stage: fn(usize, &State) -> Result<()>,
    /// Derived constants added after the solve.
    pub finish: fn(&mut State),
}

/// Mutable cascade state.
#[derive(Clone, Debug, Default)]
pub(crate) struct State {
    pub consts: BTreeMap<String, f64>,
    pub vecs: BTreeMap<String, DVector<f64>>,
    pub a: f64,
    pub b: f64,
    pub theta: BTreeMap<Mono, f64>,
    pub homog: BTreeMap<Mono, f64>,
    pub k: BTreeMap<PMono, DVector<f64>>,
    pub h: BTreeMap<Mono, PolyFun>,
    pub sys: BTreeMap<Mono, LinSys>,
}

impl State {
    pub fn c(&self, name: &str) -> f64 {
        self.consts.get(name).copied().unwrap_or(0.0)
    }

    pub fn v(&self, name: &str) -> DVector<f64> {
        self.vecs[name].clone()
    }
}

enum Arg {
    State(HistoryPoint),
    Param(Vec<f64>),
}

/// Multilinear forms, spectral data and truncation sets.
pub(crate) struct Engine {
    pub mlf: Mlf,
    pub sp: Spectral,
    pub case: BtCase,
    pub delays: Vec<f64>,
    pub order: Vec<Mono>,
    pub solved: BTreeSet<Mono>,
    pub k_monos: Vec<PMono>,
    pub theta_monos: Vec<Mono>,
}

fn f_polys(case: BtCase, a: f64, b: f64) -> [Vec<(Mono, f64)>; 2] {
    let f0 = vec![(mono("0100"), 1.0)];
    let lin = match case {
        BtCase::Generic => mono("0010"),
        BtCase::Transcritical => mono("1010"),
    };
    let f1 = vec![(lin, 1.0), (mono("0101"), 1.0), (mono("2000"), a), (mono("1100"), b)];
    [f0, f1]
}

impl Engine {
    fn n(&self) -> usize {
        self.mlf.model().n()
    }

    /// Parameter-direction first derivative `J₁κ`.
    pub fn j1(&self, k: &[f64]) -> Result<DVector<f64>> {
        self.mlf.mixed(&[], &[k])
    }

    fn sample(&self, h: &PolyFun, scale: f64) -> HistoryPoint {
        let mut s = h.sample(&self.delays);
        s.0 *= scale;
        s
    }

    fn missing(&self, st: &State, m: &Mono) -> Result<()> {
        if self.solved.contains(m) && !st.h.contains_key(m) {
            return Err(Error::Numerical(format!(
                "cascade ordering: h{} needed before it is solved",
                mono_label(m)
            )));
        }
        Ok(())
    }

    /// Assembles `(κ_m, w_m)` from the current state (ignoring `h_m` itself).
    pub fn system(&self, st: &State, m: &Mono) -> Result<LinSys> {
        let n = self.n();
        let mut items: Vec<(Mono, Arg)> = Vec::new();
        for mm in self.solved.iter().chain([mono("1000"), mono("0100")].iter()) {
            if mm != m && sub(m, mm).is_some() {
                self.missing(st, mm)?;
            }
        }
        for (mm, h) in &st.h {
            if mm != m && sub(m, mm).is_some() {
                items.push((*mm, Arg::State(self.sample(h, 1.0 / factorial(mm)))));
            }
        }
        for (pm, k) in &st.k {
            let mm = pmono_embed(pm);
            if sub(m, &mm).is_some() {
                let kp: Vec<f64> = k.iter().map(|v| v / factorial(pm)).collect();
                items.push((mm, Arg::Param(kp)));
            }
        }
        let mut kappa = DVector::zeros(n);
        let call = |args: &[&Arg]| -> Result<DVector<f64>> {
            let us: Vec<&HistoryPoint> = args
                .iter()
                .filter_map(|a| match a {
                    Arg::State(h) => Some(h),
                    _ => None,
                })
                .collect();
            let ks: Vec<&[f64]> = args
                .iter()
                .filter_map(|a| match a {
                    Arg::Param(k) => Some(k.as_slice()),
                    _ => None,
                })
                .collect();
            self.mlf.mixed(&us, &ks)
        };
        if is_pure_beta(m) {
            for (mm, arg) in &items {
                if mm == m {
                    if let Arg::Param(_) = arg {
                        kappa += call(&[arg])?;
                    }
                }
            }
        }
        let ni = items.len();
        for i in 0..ni {
            for j in i..ni {
                let s2 = add(&items[i].0, &items[j].0);
                if s2 == *m {
                    let mult = if i == j { 1.0 } else { 2.0 };
                    kappa += call(&[&items[i].1, &items[j].1])? * (mult / 2.0);
                }
                if sub(m, &s2).is_none() {
                    continue;
                }
                for l in j..ni {
                    if add(&s2, &items[l].0) == *m {
                        let mult = if i == j && j == l {
                            1.0
                        } else if i == j || j == l {
                            3.0
                        } else {
                            6.0
                        };
                        kappa += call(&[&items[i].1, &items[j].1, &items[l].1])? * (mult / 6.0);
                    }
                }
            }
        }
        let fm = factorial(m);
        kappa *= fm;

        let mut w = PolyFun::zero(n);
        let fp = f_polys(self.case, st.a, st.b);
        for (i, terms) in fp.iter().enumerate() {
            for (g, c) in terms {
                let mut up = *m;
                up[i] += 1;
                if let Some(mm) = sub(&up, g) {
                    self.missing(st, &mm)?;
                    if let Some(h) = st.h.get(&mm) {
                        w = w + h * (mm[i] as f64 * c / factorial(&mm));
                    }
                }
            }
        }
        for (m1, th) in &st.theta {
            if let Some(mm) = sub(m, m1) {
                if mm != [0; 4] {
                    self.missing(st, &mm)?;
                    if let Some(h) = st.h.get(&mm) {
                        w = w - h.derivative() * (th / factorial(&mm));
                    }
                }
            }
        }
        Ok(LinSys::new(kappa, w * fm))
    }

    /// Re-solves the systems in order, up to and including position `upto`.
    pub fn rebuild(&self, def: &CaseDef, st: &mut State, upto: usize) -> Result<()> {
        (def.assemble)(st);
        for m in &self.order {
            st.h.remove(m);
        }
        st.sys.clear();
        let phi0 = self.sp.phi0();
        for m in self.order.iter().take(upto + 1) {
            let sys = self.system(st, m)?;
            let (v, _) = self.sp.binv0_raw(&sys);
            let g = st.homog.get(m).copied().unwrap_or(0.0);
            st.h.insert(*m, v + &phi0 * g);
            st.sys.insert(*m, sys);
        }
        Ok(())
    }

    fn fsc_values(&self, def: &CaseDef, st: &mut State, conds: &[Mono]) -> Result<DVector<f64>> {
        let upto = conds
            .iter()
            .map(|c| self.order.iter().position(|m| m == c).expect("condition in order"))
            .max()
            .unwrap_or(0);
        self.rebuild(def, st, upto)?;
        Ok(DVector::from_iterator(conds.len(), conds.iter().map(|c| self.sp.fsc(&st.sys[c]))))
    }

    /// Fixes the unknowns of one stage; returns the condition Jacobian.
    fn solve_stage(&self, def: &CaseDef, st: &mut State, stage: &Stage) -> Result<DMatrix<f64>> {
        let conds: Vec<Mono> = stage.conditions.iter().map(|s| mono(s)).collect();
        let k = stage.names.len();
        let mut jac = DMatrix::zeros(k, k);
        for _ in 0..8 {
            let f0 = self.fsc_values(def, st, &conds)?;
            for (i, name) in stage.names.iter().enumerate() {
                let c0 = st.c(name);
                st.consts.insert(name.to_string(), c0 + 1.0);
                let fi = self.fsc_values(def, st, &conds)?;
                st.consts.insert(name.to_string(), c0);
                jac.set_column(i, &(fi - &f0));
            }
            let sv = jac.clone().svd(false, false).singular_values;
            let smax = sv.max();
            if !(sv.min() > 1e-12 * smax.max(1e-300)) || !smax.is_finite() {
                let msg = format!(
                    "solvability conditions {} do not determine {}",
                    stage.conditions.join(", "),
                    stage.names.join(", ")
                );
                return Err(match stage.fail {
                    StageFail::Degenerate => Error::NotBt(msg),
                    StageFail::Transversality => Error::Transversality(msg),
                });
            }
            let dc = jac
                .clone()
                .lu()
                .solve(&(-&f0))
                .ok_or_else(|| Error::Singular(format!("stage {}", stage.names.join(", "))))?;
            let mut size = 0.0f64;
            for (i, name) in stage.names.iter().enumerate() {
                let c = st.c(name) + dc[i];
                size = size.max(c.abs());
                st.consts.insert(name.to_string(), c);
            }
            if dc.amax() <= 1e-13 * (1.0 + size) {
                return Ok(jac);
            }
        }
        let f = self.fsc_values(def, st, &conds)?;
        if f.amax() <= self.sp.tol() {
            return Ok(jac);
        }
        Err(Error::NoConvergence(format!(
            "stage {}: conditions left at {:.3e}",
            stage.names.join(", "),
            f.amax()
        )))
    }
}

/// Normal form of a Bogdanov-Takens point with its center-manifold data.
#[derive(Clone, Debug)]
pub struct BtNormalForm {
    /// Unfolding type.
    pub case: BtCase,
    /// Coefficient of `w₀²`.
    pub a: f64,
    /// Coefficient of `w₀w₁`.
    pub b: f64,
    /// Time-reparametrization coefficients by monomial.
    pub theta: BTreeMap<Mono, f64>,
    /// Parameter-transformation coefficients by parameter monomial.
    pub k: BTreeMap<PMono, DVector<f64>>,
    /// Center-manifold coefficients by monomial (including `φ₀`, `φ₁`).
    pub h: BTreeMap<Mono, PolyFun>,
    /// Named intermediate constants.
    pub constants: BTreeMap<String, f64>,
    /// Every cascade system with diagnostics.
    pub systems: Vec<SystemRecord>,
    /// Stage Jacobians.
    pub stages: Vec<StageRecord>,
    /// Spectral data.
    pub spectral: Spectral,
    /// Equilibrium.
    pub x0: DVector<f64>,
    /// Critical parameters.
    pub alpha0: Vec<f64>,
    mlf: Mlf,
}

pub(crate) fn run(
    def: &CaseDef,
    model: &DdeModel,
    x0: &DVector<f64>,
    alpha0: &[f64],
    opts: NfOptions,
) -> Result<BtNormalForm> {
    if model.n_params() != 2 {
        return Err(Error::Usage("the unfolding needs exactly two parameters".into()));
    }
    let mlf = Mlf::new(model, x0, alpha0, opts.mode)?;
    let chm = CharMatrix::from_mlf(&mlf)?;
    let sp = Spectral::new(&chm, opts.chain, opts.tol)?;
    let order: Vec<Mono> = def.order.iter().map(|s| mono(s)).collect();
    let eng = Engine {
        mlf: mlf.clone(),
        sp: sp.clone(),
        case: def.case,
        delays: model.delays().to_vec(),
        solved: order.iter().copied().collect(),
        order,
        k_monos: def.k_monos.iter().map(|s| parse_pmono(s).expect("valid label")).collect(),
        theta_monos: def.theta_monos.iter().map(|s| mono(s)).collect(),
    };
    let mut st = State::default();
    for pm in &eng.k_monos {
        st.k.insert(*pm, DVector::zeros(2));
    }
    st.h.insert(mono("1000"), sp.phi0());
    st.h.insert(mono("0100"), sp.phi1());
    (def.setup)(&eng, &mut st)?;
    let mut stages = Vec::new();
    for (i, stage) in def.stages.iter().enumerate() {
        let jac = eng.solve_stage(def, &mut st, stage)?;
        stages.push(StageRecord {
            unknowns: stage.names.iter().map(|s| s.to_string()).collect(),
            conditions: stage.conditions.iter().map(|s| s.to_string()).collect(),
            jacobian: jac,
        });
        (def.after_stage)(i, &st)?;
    }
    eng.rebuild(def, &mut st, eng.order.len() - 1)?;
    (def.finish)(&mut st);
    for (m, v) in st.theta.clone() {
        st.consts.insert(format!("theta{}", mono_label(&m)), v);
    }

    let mut systems = Vec::new();
    let fixed = [mono("1000"), mono("0100")];
    for m in fixed.iter().chain(eng.order.iter()) {
        let sys = eng.system(&st, m)?;
        let (_, slack) = sp.binv0_raw(&sys);
        let fsc = sp.fsc(&sys);
        let h = &st.h[m];
        let scale = 1.0 + sys.kappa.norm() + sys.w.max_coef_norm();
        if !(slack.abs() <= opts.tol * scale) {
            return Err(Error::Inconsistent {
                context: format!("h{}", mono_label(m)),
                slack,
            });
        }
        if h.degree() > MAX_DEGREE {
            return Err(Error::Numerical(format!("h{} exceeds the degree cap", mono_label(m))));
        }
        systems.push(SystemRecord {
            mono: mono_label(m),
            residual: sp.residual(&sys, h),
            sys,
            slack,
            fsc,
        });
    }
    let theta = eng
        .theta_monos
        .iter()
        .map(|m| (*m, st.theta.get(m).copied().unwrap_or(0.0)))
        .collect();
    Ok(BtNormalForm {
        case: def.case,
        a: st.a,
        b: st.b,
        theta,
        k: st.k,
        h: st.h,
        constants: st.consts,
        systems,
        stages,
        spectral: sp,
        x0: x0.clone(),
        alpha0: alpha0.to_vec(),
        mlf,
    })
}

impl BtNormalForm {
    /// Coefficient `h_m` by label (e.g. `"2000"`).
    pub fn h(&self, label: &str) -> Option<&PolyFun> {
        self.h.get(&parse_mono(label)?)
    }

    /// Coefficient `K_μ` by label (e.g. `"10"`).
    pub fn k(&self, label: &str) -> Option<&DVector<f64>> {
        self.k.get(&parse_pmono(label)?)
    }

    /// Coefficient `ϑ_m` by label (e.g. `"1000"`); zero if not retained.
    pub fn theta(&self, label: &str) -> f64 {
        parse_mono(label).and_then(|m| self.theta.get(&m).copied()).unwrap_or(0.0)
    }

    /// Named intermediate constant.
    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }

    /// Multilinear forms at the point.
    pub fn mlf(&self) -> &Mlf {
        &self.mlf
    }

    /// Delays of the model.
    pub fn delays(&self) -> &[f64] {
        self.mlf.model().delays()
    }

    /// `K(β)` (deviation from the critical parameters).
    pub fn k_at(&self, beta: [f64; 2]) -> DVector<f64> {
        let mut out = DVector::zeros(2);
        for (pm, k) in &self.k {
            let c = beta[0].powi(pm[0] as i32) * beta[1].powi(pm[1] as i32) / factorial(pm);
            out += k * c;
        }
        out
    }

    /// Parameter point `α₀ + K(β)`.
    pub fn alpha_at(&self, beta: [f64; 2]) -> Vec<f64> {
        let k = self.k_at(beta);
        self.alpha0.iter().zip(k.iter()).map(|(a, d)| a + d).collect()
    }

    /// `H(w, β)` as a function of `θ` (deviation from the equilibrium).
    pub fn h_at(&self, w: [f64; 2], beta: [f64; 2]) -> PolyFun {
        let x = [w[0], w[1], beta[0], beta[1]];
        let mut out = PolyFun::zero(self.x0.len());
        for (m, h) in &self.h {
            out = out + h * (pow(&x, m) / factorial(m));
        }
        out
    }

    /// History `x₀ + H(w, β)` sampled at the delays.
    pub fn history_at(&self, w: [f64; 2], beta: [f64; 2]) -> HistoryPoint {
        let mut hp = self.h_at(w, beta).sample(self.delays());
        for mut col in hp.0.column_iter_mut() {
            col += &self.x0;
        }
        hp
    }

    /// State `x₀ + H(w, β)(0)`.
    pub fn state_at(&self, w: [f64; 2], beta: [f64; 2]) -> DVector<f64> {
        &self.x0 + self.h_at(w, beta).eval(0.0)
    }

    /// `ϑ(w, β)`.
    pub fn theta_at(&self, w: [f64; 2], beta: [f64; 2]) -> f64 {
        let x = [w[0], w[1], beta[0], beta[1]];
        1.0 + self.theta.iter().map(|(m, t)| t * pow(&x, m)).sum::<f64>()
    }

    /// Truncated normal-form vector field `dw/dη`.
    pub fn nf_rhs(&self, w: [f64; 2], beta: [f64; 2]) -> [f64; 2] {
        let lin = match self.case {
            BtCase::Generic => beta[0],
            BtCase::Transcritical => beta[0] * w[0],
        };
        [w[1], lin + beta[1] * w[1] + self.a * w[0] * w[0] + self.b * w[0] * w[1]]
    }

    /// `D_w H(w, β) · f(w, β)` as a function of `θ`.
    fn dh_f(&self, w: [f64; 2], beta: [f64; 2]) -> PolyFun {
        let x = [w[0], w[1], beta[0], beta[1]];
        let f = self.nf_rhs(w, beta);
        let mut out = PolyFun::zero(self.x0.len());
        for (m, h) in &self.h {
            for i in 0..2 {
                if m[i] > 0 {
                    let mut mm = *m;
                    mm[i] -= 1;
                    out = out + h * (m[i] as f64 * pow(&x, &mm) * f[i] / factorial(m));
                }
            }
        }
        out
    }

    /// Residual of the homological equation at `(w, β)`, evaluated with the full
    /// right-hand side: boundary part and function part (sampled), max norm.
    pub fn homological_residual(&self, w: [f64; 2], beta: [f64; 2]) -> Result<f64> {
        let model = self.mlf.model();
        let th = self.theta_at(w, beta);
        let hf = self.h_at(w, beta);
        let dhf = self.dh_f(w, beta);
        let hist = self.history_at(w, beta);
        let f = model.rhs_cols(&hist.to_cols(), &self.alpha_at(beta));
        let f0 = model.rhs_cols(&HistoryPoint::constant(&self.x0, self.delays().len()).to_cols(), &self.alpha0);
        let mut bnd = DVector::from_vec(f) - DVector::from_vec(f0);
        bnd *= th;
        bnd -= dhf.eval(0.0);
        let mut res = bnd.amax();
        if !res.is_finite() {
            return Err(Error::Numerical("non-finite homological residual".into()));
        }
        let fun = hf.derivative() * th - dhf;
        let hmax = model.max_delay();
        for i in 0..=20 {
            let t = -hmax * i as f64 / 20.0;
            res = res.max(fun.eval(t).amax());
        }
        Ok(res)
    }

    /// Homological residuals along the homoclinic scaling
    /// `(w₀, w₁, β₁, β₂) = (s²w̄₀, s³w̄₁, s⁴β̄₁ or s²β̄₁, s²β̄₂)` (β₁ power by case),
    /// and the fitted exponent in `s`.
    pub fn residual_exponent(&self, svals: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (w0, w1, b1, b2) = (0.9, -0.6, -0.7, 0.5);
        let p1 = match self.case {
            BtCase::Generic => 4,
            BtCase::Transcritical => 2,
        };
        let res = svals
            .iter()
            .map(|&s| self.homological_residual([w0 * s * s, w1 * s.powi(3)], [b1 * s.powi(p1), b2 * s * s]))
            .collect::<Result<Vec<f64>>>()?;
        let order = crate::fit::loglog_slope(svals, &res)?;
        Ok((res, order))
    }

    /// JSON record with stable key order.
    pub fn to_json(&self) -> Value {
        let vecj = |v: &DVector<f64>| Value::from(v.iter().copied().collect::<Vec<f64>>());
        let mut theta = Map::new();
        for (m, t) in &self.theta {
            theta.insert(mono_label(m), json!(t));
        }
        let mut k = Map::new();
        for (m, v) in &self.k {
            k.insert(mono_label(m), vecj(v));
        }
        let mut h = Map::new();
        for (m, p) in &self.h {
            h.insert(
                mono_label(m),
                Value::from(p.coefs.iter().map(&vecj).collect::<Vec<_>>()),
            );
        }
        let mut consts = Map::new();
        for (name, v) in &self.constants {
            consts.insert(name.clone(), json!(v));
        }
        let systems: Vec<Value> = self
            .systems
            .iter()
            .map(|s| json!({"mono": s.mono, "slack": s.slack, "fsc": s.fsc, "residual": s.residual}))
            .collect();
        let ch = self.spectral.chain();
        json!({
            "case": match self.case { BtCase::Generic => "generic", BtCase::Transcritical => "transcritical" },
            "a": self.a,
            "b": self.b,
            "theta": theta,
            "K": k,
            "h": h,
            "constants": consts,
            "chain": {"q0": vecj(&ch.q0), "q1": vecj(&ch.q1), "p0": vecj(&ch.p0), "p1": vecj(&ch.p1)},
            "x0": vecj(&self.x0),
            "alpha0": self.alpha0,
            "systems": systems,
        })
    }
}

/// Runs the cascade matching the case of a bundled point.
pub fn compute_for(
    model: &DdeModel,
    spec: &crate::models::BtPointSpec,
    opts: NfOptions,
) -> Result<BtNormalForm> {
    match spec.case {
        BtCase::Generic => crate::nf_generic::compute(model, &spec.x0_vec(), &spec.alpha0, opts),
        BtCase::Transcritical => crate::nf_transcritical::compute(model, &spec.x0_vec(), &spec.alpha0, opts),
    }
}
