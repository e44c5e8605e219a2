//! Planar oracle: homoclinic orbits of the truncated normal forms corrected
//! by Gauss-Legendre collocation with projection boundary conditions, and an
//! adaptive Dormand-Prince integrator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::predictors::{NfOrbit, PredictorCase};

/// Collocation points per interval.
pub const COLLOCATION_DEGREE: usize = 4;

/// Truncated planar normal form with one released parameter.
#[derive(Clone, Copy, Debug)]
pub enum NfField {
    /// `ẇ₁ = β₁ + β₂w₁ + aw₀² + bw₀w₁`; `β₁` released.
    Generic {
        /// Coefficient `a`.
        a: f64,
        /// Coefficient `b`.
        b: f64,
        /// Fixed `β₂`.
        beta2: f64,
    },
    /// `ẇ₁ = β₁w₀ + β₂w₁ + aw₀² + bw₀w₁`; `β₂` released.
    Transcritical {
        /// Coefficient `a`.
        a: f64,
        /// Coefficient `b`.
        b: f64,
        /// Fixed `β₁`.
        beta1: f64,
    },
}

impl NfField {
    fn ab(&self) -> (f64, f64) {
        match *self {
            NfField::Generic { a, b, .. } | NfField::Transcritical { a, b, .. } => (a, b),
        }
    }

    /// `(β₁, β₂)` for released value `p`.
    pub fn beta(&self, p: f64) -> [f64; 2] {
        match *self {
            NfField::Generic { beta2, .. } => [p, beta2],
            NfField::Transcritical { beta1, .. } => [beta1, p],
        }
    }

    /// Vector field at `w` with released value `p`.
    pub fn eval(&self, w: [f64; 2], p: f64) -> [f64; 2] {
        let (a, b) = self.ab();
        let [b1, b2] = self.beta(p);
        let lin = match self {
            NfField::Generic { .. } => b1,
            NfField::Transcritical { .. } => b1 * w[0],
        };
        [w[1], lin + b2 * w[1] + a * w[0] * w[0] + b * w[0] * w[1]]
    }

    /// Jacobian in `w` and derivative in `p`.
    pub fn jac(&self, w: [f64; 2], p: f64) -> ([[f64; 2]; 2], [f64; 2]) {
        let (a, b) = self.ab();
        let [b1, b2] = self.beta(p);
        match self {
            NfField::Generic { .. } => ([[0.0, 1.0], [2.0 * a * w[0] + b * w[1], b2 + b * w[0]]], [0.0, 1.0]),
            NfField::Transcritical { .. } => (
                [[0.0, 1.0], [b1 + 2.0 * a * w[0] + b * w[1], b2 + b * w[0]]],
                [0.0, w[1]],
            ),
        }
    }

    /// Equilibria with `w₁ = 0`.
    pub fn equilibria(&self, p: f64) -> Vec<[f64; 2]> {
        let (a, _) = self.ab();
        let [b1, _] = self.beta(p);
        match self {
            NfField::Generic { .. } => {
                let r = -b1 / a;
                if r < 0.0 {
                    vec![]
                } else {
                    vec![[r.sqrt(), 0.0], [-r.sqrt(), 0.0]]
                }
            }
            NfField::Transcritical { .. } => vec![[0.0, 0.0], [-b1 / a, 0.0]],
        }
    }
}

/// Collocation settings.
#[derive(Clone, Copy, Debug)]
pub struct BvpOptions {
    /// Mesh intervals.
    pub intervals: usize,
    /// Newton tolerance on the scaled residual.
    pub tol: f64,
    /// Newton iteration cap.
    pub max_iter: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            intervals: 160,
            tol: 1e-10,
            max_iter: 12,
        }
    }
}

/// Homoclinic boundary-value problem on `s ∈ [−S, S]` with `dw/ds = f(w)/κ`.
#[derive(Clone, Copy, Debug)]
pub struct PlanarBvp {
    /// Vector field.
    pub field: NfField,
    /// Time scale `κ = dη⁻¹/ds`, i.e. `s = κη`.
    pub kappa: f64,
    /// Half-window `S`.
    pub half: f64,
    /// Scales of `(w₀, w₁, p)` used to condition the unknowns.
    pub scale: [f64; 3],
    /// Saddle the orbit leaves and returns to (seed value).
    pub saddle_hint: [f64; 2],
}

/// Solution of a [`PlanarBvp`].
#[derive(Clone, Debug)]
pub struct BvpSolution {
    /// All collocation nodes.
    pub s: Vec<f64>,
    /// `w` at the nodes.
    pub w: Vec<[f64; 2]>,
    /// Released parameter.
    pub p: f64,
    /// `(β₁, β₂)`.
    pub beta: [f64; 2],
    /// Newton iterations used.
    pub iterations: usize,
    /// Final scaled residual.
    pub residual: f64,
    /// Nodes per interval (interval endpoints every `degree` nodes).
    pub degree: usize,
}

impl BvpSolution {
    /// Interpolates the piecewise polynomial at `s`.
    pub fn eval(&self, s: f64) -> [f64; 2] {
        let d = self.degree;
        let n_int = (self.s.len() - 1) / d;
        let (s0, s1) = (self.s[0], self.s[self.s.len() - 1]);
        let h = (s1 - s0) / n_int as f64;
        let i = (((s - s0) / h).floor().max(0.0) as usize).min(n_int - 1);
        let tau = (s - s0 - i as f64 * h) / h;
        let mut out = [0.0; 2];
        for (j, lj) in lagrange(d, tau).iter().enumerate() {
            out[0] += lj * self.w[i * d + j][0];
            out[1] += lj * self.w[i * d + j][1];
        }
        out
    }
}

fn lagrange(d: usize, t: f64) -> Vec<f64> {
    (0..=d)
        .map(|j| {
            let tj = j as f64 / d as f64;
            (0..=d)
                .filter(|&k| k != j)
                .map(|k| {
                    let tk = k as f64 / d as f64;
                    (t - tk) / (tj - tk)
                })
                .product()
        })
        .collect()
}

fn lagrange_deriv(d: usize, t: f64) -> Vec<f64> {
    (0..=d)
        .map(|j| {
            let tj = j as f64 / d as f64;
            let mut sum = 0.0;
            for m in 0..=d {
                if m == j {
                    continue;
                }
                let tm = m as f64 / d as f64;
                let mut prod = 1.0 / (tj - tm);
                for k in 0..=d {
                    if k != j && k != m {
                        let tk = k as f64 / d as f64;
                        prod *= (t - tk) / (tj - tk);
                    }
                }
                sum += prod;
            }
            sum
        })
        .collect()
}

fn gauss_points(d: usize) -> Vec<f64> {
    let x: &[f64] = match d {
        4 => &[
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ],
        _ => unreachable!("only degree 4 is tabulated"),
    };
    x.iter().map(|v| 0.5 * (v + 1.0)).collect()
}

fn eig2(m: [[f64; 2]; 2]) -> Option<[(f64, [f64; 2], [f64; 2]); 2]> {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc <= 0.0 {
        return None;
    }
    let r = disc.sqrt();
    let lams = [tr / 2.0 - r, tr / 2.0 + r];
    let mut out = [(0.0, [0.0; 2], [0.0; 2]); 2];
    let right = |l: f64| -> [f64; 2] {
        if (m[0][1]).abs() > 1e-300 {
            [m[0][1], l - m[0][0]]
        } else {
            [l - m[1][1], m[1][0]]
        }
    };
    let rs = [right(lams[0]), right(lams[1])];
    let det_r = rs[0][0] * rs[1][1] - rs[1][0] * rs[0][1];
    for i in 0..2 {
        let left = if i == 0 {
            [rs[1][1] / det_r, -rs[1][0] / det_r]
        } else {
            [-rs[0][1] / det_r, rs[0][0] / det_r]
        };
        out[i] = (lams[i], rs[i], left);
    }
    Some(out)
}

impl PlanarBvp {
    fn saddle(&self, p: f64) -> Result<[f64; 2]> {
        let h = self.saddle_hint;
        self.field
            .equilibria(p)
            .into_iter()
            .min_by(|x, y| {
                let dx = (x[0] - h[0]).abs();
                let dy = (y[0] - h[0]).abs();
                dx.total_cmp(&dy)
            })
            .ok_or_else(|| Error::NoConvergence("released parameter left the saddle region".into()))
    }

    /// Boundary functionals: component of `z − saddle` along the stable (left end)
    /// or unstable (right end) direction of the `s`-flow, in scaled coordinates.
    fn bc(&self, z_left: [f64; 2], z_right: [f64; 2], p: f64) -> Result<[f64; 2]> {
        let sd = self.saddle(p)?;
        let (j, _) = self.field.jac(sd, p);
        let (s0, s1) = (self.scale[0], self.scale[1]);
        let js = [
            [j[0][0] / self.kappa, j[0][1] * s1 / (s0 * self.kappa)],
            [j[1][0] * s0 / (s1 * self.kappa), j[1][1] / self.kappa],
        ];
        let e = eig2(js).ok_or_else(|| Error::NoConvergence("equilibrium is not a saddle".into()))?;
        let (stable, unstable) = if e[0].0 < 0.0 { (e[0], e[1]) } else { (e[1], e[0]) };
        let dl = [(z_left[0] - sd[0]) / s0, (z_left[1] - sd[1]) / s1];
        let dr = [(z_right[0] - sd[0]) / s0, (z_right[1] - sd[1]) / s1];
        Ok([
            stable.2[0] * dl[0] + stable.2[1] * dl[1],
            unstable.2[0] * dr[0] + unstable.2[1] * dr[1],
        ])
    }

    /// Newton-collocation solve from seed values; the phase condition pins the seed.
    pub fn solve(&self, seed: &dyn Fn(f64) -> [f64; 2], p0: f64, opts: BvpOptions) -> Result<BvpSolution> {
        let d = COLLOCATION_DEGREE;
        let nint = opts.intervals;
        if nint < 2 {
            return Err(Error::Usage("collocation needs at least two intervals".into()));
        }
        let nn = nint * d + 1;
        let dim = 2 * nn + 1;
        let hs = 2.0 * self.half / nint as f64;
        let s: Vec<f64> = (0..nn).map(|k| -self.half + k as f64 * hs / d as f64).collect();
        let [sw0, sw1, sp] = self.scale;
        let gp = gauss_points(d);
        let lmat: Vec<Vec<f64>> = gp.iter().map(|&t| lagrange(d, t)).collect();
        let dmat: Vec<Vec<f64>> = gp.iter().map(|&t| lagrange_deriv(d, t)).collect();

        let seed_w: Vec<[f64; 2]> = s.iter().map(|&v| seed(v)).collect();
        let dseed: Vec<[f64; 2]> = s
            .iter()
            .map(|&v| {
                let h = 1e-5 * self.half;
                let (a, b) = (seed(v + h), seed(v - h));
                [(a[0] - b[0]) / (2.0 * h * sw0), (a[1] - b[1]) / (2.0 * h * sw1)]
            })
            .collect();
        let mut x = DVector::zeros(dim);
        for k in 0..nn {
            x[2 * k] = seed_w[k][0] / sw0;
            x[2 * k + 1] = seed_w[k][1] / sw1;
        }
        x[2 * nn] = p0 / sp;

        let unpack = |x: &DVector<f64>, k: usize| [x[2 * k] * sw0, x[2 * k + 1] * sw1];
        let residual = |x: &DVector<f64>| -> Result<DVector<f64>> {
            let p = x[2 * nn] * sp;
            let mut r = DVector::zeros(dim);
            let mut row = 0;
            for i in 0..nint {
                for c in 0..d {
                    let mut z = [0.0; 2];
                    let mut dz = [0.0; 2];
                    for j in 0..=d {
                        let w = unpack(x, i * d + j);
                        z[0] += lmat[c][j] * w[0];
                        z[1] += lmat[c][j] * w[1];
                        dz[0] += dmat[c][j] * w[0] / hs;
                        dz[1] += dmat[c][j] * w[1] / hs;
                    }
                    let f = self.field.eval(z, p);
                    r[row] = (dz[0] - f[0] / self.kappa) / sw0;
                    r[row + 1] = (dz[1] - f[1] / self.kappa) / sw1;
                    row += 2;
                }
            }
            let bc = self.bc(unpack(x, 0), unpack(x, nn - 1), p)?;
            r[row] = bc[0];
            r[row + 1] = bc[1];
            let mut ph = 0.0;
            for k in 0..nn {
                let wgt = if k == 0 || k == nn - 1 { 0.5 } else { 1.0 };
                ph += wgt
                    * ((x[2 * k] - seed_w[k][0] / sw0) * dseed[k][0] + (x[2 * k + 1] - seed_w[k][1] / sw1) * dseed[k][1]);
            }
            r[row + 2] = ph * hs / d as f64;
            Ok(r)
        };

        let mut iterations = 0;
        let mut res = residual(&x)?;
        loop {
            if iterations >= opts.max_iter {
                return Err(Error::NoConvergence(format!(
                    "collocation Newton stopped at residual {:.3e}",
                    res.amax()
                )));
            }
            let p = x[2 * nn] * sp;
            let mut jac = DMatrix::zeros(dim, dim);
            let mut row = 0;
            for i in 0..nint {
                for c in 0..d {
                    let mut z = [0.0; 2];
                    for j in 0..=d {
                        let w = unpack(&x, i * d + j);
                        z[0] += lmat[c][j] * w[0];
                        z[1] += lmat[c][j] * w[1];
                    }
                    let (fj, fp) = self.field.jac(z, p);
                    for j in 0..=d {
                        let col = 2 * (i * d + j);
                        for q in 0..2 {
                            let sq = [sw0, sw1][q];
                            jac[(row + q, col + q)] += dmat[c][j] / hs;
                            for m in 0..2 {
                                let sm = [sw0, sw1][m];
                                jac[(row + q, col + m)] -= fj[q][m] * lmat[c][j] * sm / (self.kappa * sq);
                            }
                        }
                    }
                    jac[(row, 2 * nn)] = -fp[0] * sp / (self.kappa * sw0);
                    jac[(row + 1, 2 * nn)] = -fp[1] * sp / (self.kappa * sw1);
                    row += 2;
                }
            }
            for (cols, rbase) in [(vec![0usize, 1], 0usize), (vec![2 * nn - 2, 2 * nn - 1], 1)] {
                for &cidx in cols.iter().chain([2 * nn].iter()) {
                    let mut xp = x.clone();
                    let h = 1e-7 * (1.0 + x[cidx].abs());
                    xp[cidx] += h;
                    let mut xm = x.clone();
                    xm[cidx] -= h;
                    let bp = self.bc(unpack(&xp, 0), unpack(&xp, nn - 1), xp[2 * nn] * sp)?;
                    let bm = self.bc(unpack(&xm, 0), unpack(&xm, nn - 1), xm[2 * nn] * sp)?;
                    jac[(row + rbase, cidx)] = (bp[rbase] - bm[rbase]) / (2.0 * h);
                }
            }
            for k in 0..nn {
                let wgt = if k == 0 || k == nn - 1 { 0.5 } else { 1.0 };
                jac[(row + 2, 2 * k)] = wgt * dseed[k][0] * hs / d as f64;
                jac[(row + 2, 2 * k + 1)] = wgt * dseed[k][1] * hs / d as f64;
            }
            let dx = jac
                .lu()
                .solve(&res)
                .ok_or_else(|| Error::Singular("collocation Jacobian".into()))?;
            x -= &dx;
            iterations += 1;
            res = residual(&x)?;
            if !res.amax().is_finite() {
                return Err(Error::NoConvergence("collocation Newton diverged".into()));
            }
            if dx.amax() <= 1e-11 * (1.0 + x.amax()) && res.amax() <= opts.tol {
                break;
            }
        }
        let p = x[2 * nn] * sp;
        Ok(BvpSolution {
            w: (0..nn).map(|k| unpack(&x, k)).collect(),
            s,
            p,
            beta: self.field.beta(p),
            iterations,
            residual: res.amax(),
            degree: d,
        })
    }
}

/// Corrected homoclinic orbit and its distance to the seed.
#[derive(Clone, Debug)]
pub struct HomoclinicCorrection {
    /// Collocation solution.
    pub solution: BvpSolution,
    /// Amplitude `max w₀ − min w₀` of the corrected orbit.
    pub amplitude: f64,
    /// `max |w_seed − w_corrected| / A₀` over mesh points.
    pub relative_error: f64,
}

/// Corrects the normal-form homoclinic seed `orbit` (β₁ released for the
/// generic case, β₂ for the transcritical case).
pub fn correct_homoclinic(orbit: &NfOrbit, opts: BvpOptions) -> Result<HomoclinicCorrection> {
    if orbit.eps <= 0.0 {
        return Err(Error::Domain("the oracle needs ε > 0".into()));
    }
    let (a, b, e) = (orbit.a, orbit.b, orbit.eps);
    let kappa = a / b * e;
    let half = orbit.s_window()?;
    let (field, p0, sp) = match orbit.case {
        PredictorCase::Generic => (
            NfField::Generic {
                a,
                b,
                beta2: orbit.beta[1],
            },
            orbit.beta[0],
            (a.powi(3) / b.powi(4)).abs() * e.powi(4),
        ),
        _ => (
            NfField::Transcritical {
                a,
                b,
                beta1: orbit.beta[0],
            },
            orbit.beta[1],
            (a / b).abs() * e * e,
        ),
    };
    let bvp = PlanarBvp {
        field,
        kappa,
        half,
        scale: [(a / (b * b)).abs() * e * e, (a * a / (b * b * b)).abs() * e.powi(3), sp],
        saddle_hint: orbit.saddle(),
    };
    let seed = |s: f64| orbit.w(s / kappa);
    let sol = bvp.solve(&seed, p0, opts)?;
    Ok(summarize(sol, &seed))
}

fn summarize(sol: BvpSolution, seed: &dyn Fn(f64) -> [f64; 2]) -> HomoclinicCorrection {
    let (mn, mx) = sol
        .w
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v[0]), h.max(v[0])));
    let amp = mx - mn;
    let mut err = 0.0f64;
    for k in (0..sol.s.len()).step_by(sol.degree) {
        let sw = seed(sol.s[k]);
        err = err.max((sw[0] - sol.w[k][0]).abs()).max((sw[1] - sol.w[k][1]).abs());
    }
    HomoclinicCorrection {
        relative_error: err / amp,
        amplitude: amp,
        solution: sol,
    }
}

/// Re-solves a problem using an existing solution as the seed.
pub fn recorrect(bvp: &PlanarBvp, sol: &BvpSolution, opts: BvpOptions) -> Result<HomoclinicCorrection> {
    let seed = |s: f64| sol.eval(s);
    let out = bvp.solve(&seed, sol.p, opts)?;
    Ok(summarize(out, &seed))
}

/// Dense output of [`rk_integrate`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Accepted times.
    pub t: Vec<f64>,
    /// States at the accepted times.
    pub x: Vec<DVector<f64>>,
}

/// Adaptive Dormand-Prince 5(4) integration of `ẋ = f(t, x)` with mixed
/// absolute/relative local error `tol`.
pub fn rk_integrate(
    f: &dyn Fn(f64, &DVector<f64>) -> DVector<f64>,
    x0: &DVector<f64>,
    tspan: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    if !(tol > 0.0) {
        return Err(Error::Usage("tolerance must be positive".into()));
    }
    let (t0, t1) = tspan;
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut x = x0.clone();
    let mut h = dir * ((t1 - t0).abs() * 1e-3).max(1e-8);
    let mut out = Trajectory {
        t: vec![t],
        x: vec![x.clone()],
    };
    let hmin = 1e-14 * (1.0 + t0.abs().max(t1.abs()));
    while dir * (t1 - t) > hmin {
        if dir * (t + h - t1) > 0.0 {
            h = t1 - t;
        }
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        for i in 0..7 {
            let mut xi = x.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[i][j] != 0.0 {
                    xi += kj * (h * A[i][j]);
                }
            }
            k.push(f(t + C[i] * h, &xi));
        }
        let mut x5 = x.clone();
        let mut err = DVector::zeros(x.len());
        for i in 0..7 {
            x5 += &k[i] * (h * B5[i]);
            err += &k[i] * (h * (B5[i] - B4[i]));
        }
        let sc = err
            .iter()
            .zip(x.iter().zip(x5.iter()))
            .map(|(e, (a, b))| (e / (tol * (1.0 + a.abs().max(b.abs())))).abs())
            .fold(0.0, f64::max);
        if !sc.is_finite() {
            return Err(Error::Numerical("integration produced non-finite values".into()));
        }
        if sc <= 1.0 {
            t += h;
            x = x5;
            out.t.push(t);
            out.x.push(x.clone());
        }
        let fac = if sc == 0.0 { 5.0 } else { (0.9 * sc.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h.abs() < hmin {
            return Err(Error::Numerical(format!("step size underflow at t = {t:.6e} (stiff problem)")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::loglog_slope;

    fn run(case: PredictorCase, a: f64, b: f64, eps: f64, order: u8) -> HomoclinicCorrection {
        let o = NfOrbit::new(case, a, b, eps, order).unwrap();
        correct_homoclinic(&o, BvpOptions::default()).unwrap()
    }

    #[test]
    fn lagrange_basis_is_exact_on_cubics() {
        let d = 4;
        for t in [0.1, 0.37, 0.9] {
            let l = lagrange(d, t);
            let dl = lagrange_deriv(d, t);
            let f = |x: f64| x * x * x - 2.0 * x;
            let nodes: Vec<f64> = (0..=d).map(|j| j as f64 / d as f64).collect();
            let v: f64 = l.iter().zip(&nodes).map(|(a, x)| a * f(*x)).sum();
            let dv: f64 = dl.iter().zip(&nodes).map(|(a, x)| a * f(*x)).sum();
            assert!((v - f(t)).abs() < 1e-14);
            assert!((dv - (3.0 * t * t - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_unit_coefficients_converge() {
        let c = run(PredictorCase::Generic, 1.0, 1.0, 0.1, 3);
        assert!(c.solution.iterations <= 10);
        assert!(c.relative_error < 1e-3);
    }

    #[test]
    fn corrected_orbit_is_a_fixed_point() {
        let o = NfOrbit::new(PredictorCase::Generic, 1.0, 1.0, 0.1, 3).unwrap();
        let c = correct_homoclinic(&o, BvpOptions::default()).unwrap();
        let (a, b, e) = (1.0, 1.0, 0.1);
        let bvp = PlanarBvp {
            field: NfField::Generic { a, b, beta2: o.beta[1] },
            kappa: a / b * e,
            half: o.s_window().unwrap(),
            scale: [e * e, e.powi(3), e.powi(4)],
            saddle_hint: o.saddle(),
        };
        let again = recorrect(&bvp, &c.solution, BvpOptions::default()).unwrap();
        assert_eq!(again.solution.iterations, 1);
        assert!(again.relative_error < 1e-9, "{}", again.relative_error);
    }

    #[test]
    fn higher_order_seed_is_closer() {
        for (case, a, b) in [
            (PredictorCase::Generic, 0.190382, 0.951911),
            (PredictorCase::TranscriticalPlus, 0.130435, -0.294896),
            (PredictorCase::TranscriticalMinus, 0.130435, -0.294896),
        ] {
            let e1 = run(case, a, b, 0.05, 1).relative_error;
            let e3 = run(case, a, b, 0.05, 3).relative_error;
            assert!(e3 * 10.0 <= e1, "{case:?}: {e1} vs {e3}");
        }
    }

    #[test]
    fn collocation_converges_at_high_order() {
        let o = NfOrbit::new(PredictorCase::Generic, 0.7, -1.2, 0.15, 3).unwrap();
        let sols: Vec<BvpSolution> = [40, 80, 160]
            .iter()
            .map(|&n| {
                correct_homoclinic(
                    &o,
                    BvpOptions {
                        intervals: n,
                        ..BvpOptions::default()
                    },
                )
                .unwrap()
                .solution
            })
            .collect();
        let change = |x: &BvpSolution, y: &BvpSolution| {
            (0..=40)
                .map(|i| {
                    let s = -x.s[0] * (i as f64 / 20.0 - 1.0);
                    let (u, v) = (x.eval(s), y.eval(s));
                    (u[0] - v[0]).abs()
                })
                .fold(0.0, f64::max)
        };
        let c1 = change(&sols[0], &sols[1]);
        let c2 = change(&sols[1], &sols[2]);
        assert!(c1 >= 16.0 * c2, "{c1:e} {c2:e}");
    }

    #[test]
    fn slopes_separate_on_the_generic_case() {
        let eps = [0.04, 0.08, 0.12, 0.2];
        let d1: Vec<f64> = eps.iter().map(|&e| run(PredictorCase::Generic, 0.19, 0.95, e, 1).relative_error).collect();
        let d3: Vec<f64> = eps.iter().map(|&e| run(PredictorCase::Generic, 0.19, 0.95, e, 3).relative_error).collect();
        let s1 = loglog_slope(&eps, &d1).unwrap();
        let s3 = loglog_slope(&eps, &d3).unwrap();
        assert!(s3 - s1 >= 1.5, "{s1} {s3}");
    }

    #[test]
    fn exponential_decay() {
        let tr = rk_integrate(&|_, x| -x, &DVector::from_vec(vec![1.0]), (0.0, 3.0), 1e-10).unwrap();
        let last = tr.x.last().unwrap()[0];
        assert!((last - (-3.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn hamiltonian_core_conserves_energy() {
        let f = |_: f64, x: &DVector<f64>| DVector::from_vec(vec![x[1], -4.0 + x[0] * x[0]]);
        let energy = |x: &DVector<f64>| 0.5 * x[1] * x[1] + 4.0 * x[0] - x[0].powi(3) / 3.0;
        let x0 = DVector::from_vec(vec![-4.0, 0.0]);
        let tr = rk_integrate(&f, &x0, (0.0, 6.0), 1e-12).unwrap();
        let e0 = energy(&x0);
        let drift = tr.x.iter().map(|x| (energy(x) - e0).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-8, "{drift}");
    }

    #[test]
    fn stiff_blow_up_is_reported() {
        let f = |_: f64, x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0]]);
        let r = rk_integrate(&f, &DVector::from_vec(vec![1.0]), (0.0, 2.0), 1e-8);
        assert!(r.is_err());
    }
}
