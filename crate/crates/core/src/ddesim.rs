//! Fixed-step method-of-steps integration of the full delay equation and a
//! defect evaluator for sampled profiles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::DdeModel;

/// Least-squares Chebyshev series of a vector-valued sampled function on `[t0, t1]`.
#[derive(Clone, Debug)]
pub struct ChebFit {
    t0: f64,
    t1: f64,
    /// Coefficients, one column per basis polynomial.
    coef: DMatrix<f64>,
}

fn cheb_row(x: f64, deg: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = vec![0.0; deg + 1];
    let mut dt = vec![0.0; deg + 1];
    t[0] = 1.0;
    if deg >= 1 {
        t[1] = x;
        dt[1] = 1.0;
    }
    for k in 1..deg {
        t[k + 1] = 2.0 * x * t[k] - t[k - 1];
        dt[k + 1] = 2.0 * t[k] + 2.0 * x * dt[k] - dt[k - 1];
    }
    (t, dt)
}

impl ChebFit {
    /// Fits samples `x` (one column per time in `t`) with a series of degree `deg`
    /// (`None`: interpolation, `deg = len − 1`).
    pub fn new(t: &[f64], x: &DMatrix<f64>, deg: Option<usize>) -> Result<Self> {
        let m = t.len();
        if m < 2 || x.ncols() != m {
            return Err(Error::Usage("profile needs at least two samples, one column per time".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Usage("profile times must increase strictly".into()));
        }
        let deg = deg.unwrap_or(m - 1);
        if deg >= m {
            return Err(Error::Usage(format!("degree {deg} needs more than {m} samples")));
        }
        let (t0, t1) = (t[0], t[m - 1]);
        let v = DMatrix::from_fn(m, deg + 1, |i, k| cheb_row(map(t[i], t0, t1), deg).0[k]);
        let svd = v.svd(true, true);
        let c = svd
            .solve(&x.transpose(), 1e-14)
            .map_err(|e| Error::Numerical(format!("Chebyshev fit: {e}")))?;
        Ok(ChebFit {
            t0,
            t1,
            coef: c.transpose(),
        })
    }

    /// Window `(t0, t1)`.
    pub fn window(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    /// Value and time derivative at `t`.
    pub fn eval_with_deriv(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let deg = self.coef.ncols() - 1;
        let (b, db) = cheb_row(map(t, self.t0, self.t1), deg);
        let scale = 2.0 / (self.t1 - self.t0);
        let v = &self.coef * DVector::from_vec(b);
        let d = &self.coef * DVector::from_vec(db) * scale;
        (v, d)
    }

    /// Value at `t`.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        self.eval_with_deriv(t).0
    }
}

fn map(t: f64, t0: f64, t1: f64) -> f64 {
    (2.0 * t - t0 - t1) / (t1 - t0)
}

/// Initial history on `[t0 − τ_max, t0]`.
#[derive(Clone, Debug)]
pub enum History {
    /// Constant vector.
    Constant(DVector<f64>),
    /// Sampled profile; must cover the history interval.
    Profile(ChebFit),
}

impl History {
    fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            History::Constant(x) => x.clone(),
            History::Profile(f) => f.eval(t),
        }
    }
}

/// Integration settings.
#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    /// Step size (at most the smallest positive delay).
    pub step: f64,
    /// Stop when the max-norm of the state exceeds this.
    pub bound: f64,
    /// Integrate `ẋ = −F` instead of `ẋ = F`.
    pub reverse: bool,
}

/// Dense trajectory of [`integrate`].
#[derive(Clone, Debug)]
pub struct DdeSolution {
    /// Initial history.
    pub history: History,
    /// Step times, starting at `t0`.
    pub t: Vec<f64>,
    /// States at the step times.
    pub x: Vec<DVector<f64>>,
    /// Right-hand side at the step times (right limits).
    pub dx: Vec<DVector<f64>>,
    /// Event messages (early termination).
    pub events: Vec<String>,
}

impl DdeSolution {
    /// Cubic-Hermite interpolant; times before `t0` read the history.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        if t <= self.t[0] {
            return self.history.eval(t);
        }
        let n = self.t.len();
        let i = match self.t.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return self.x[i].clone(),
            Err(i) => i.min(n - 1).max(1) - 1,
        };
        if i + 1 >= n {
            return self.x[n - 1].clone();
        }
        hermite(self.t[i], self.t[i + 1], &self.x[i], &self.x[i + 1], &self.dx[i], &self.dx[i + 1], t)
    }

    /// Final time reached.
    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }
}

fn hermite(
    ta: f64,
    tb: f64,
    xa: &DVector<f64>,
    xb: &DVector<f64>,
    da: &DVector<f64>,
    db: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let h = tb - ta;
    let s = (t - ta) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    xa * h00 + da * (h10 * h) + xb * h01 + db * (h11 * h)
}

fn rhs_at(
    model: &DdeModel,
    alpha: &[f64],
    sign: f64,
    x: &DVector<f64>,
    delayed: &dyn Fn(f64) -> DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let cols: Vec<Vec<f64>> = model
        .delays()
        .iter()
        .map(|&tau| {
            if tau == 0.0 {
                x.iter().copied().collect()
            } else {
                delayed(t - tau).iter().copied().collect()
            }
        })
        .collect();
    let f = model.rhs_cols(&cols, alpha);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite right-hand side at t = {t:.6}")));
    }
    Ok(DVector::from_vec(f) * sign)
}

/// Integrates the model from `history` over `tspan` with classical RK4; delayed
/// values come from the Hermite interpolant of earlier steps.
pub fn integrate(
    model: &DdeModel,
    alpha: &[f64],
    history: History,
    tspan: (f64, f64),
    opts: SimOptions,
) -> Result<DdeSolution> {
    let (t0, t1) = tspan;
    if !(t1 > t0) {
        return Err(Error::Usage("integration interval must have t1 > t0".into()));
    }
    if alpha.len() != model.n_params() {
        return Err(Error::Usage(format!("model needs {} parameters", model.n_params())));
    }
    if !(opts.bound > 0.0) {
        return Err(Error::Usage("bound must be positive".into()));
    }
    let min_delay = model.delays().iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
    if !(opts.step > 0.0) || opts.step > min_delay {
        return Err(Error::Usage(format!(
            "step {} must be positive and at most the smallest delay {min_delay}",
            opts.step
        )));
    }
    if let History::Profile(f) = &history {
        let (a, b) = f.window();
        if a > t0 - model.max_delay() + 1e-12 * (1.0 + t0.abs()) || b < t0 - 1e-12 * (1.0 + t0.abs()) {
            return Err(Error::Usage("history profile does not cover [t0 - max delay, t0]".into()));
        }
    }
    let nsteps = ((t1 - t0) / opts.step - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / nsteps as f64;
    let sign = if opts.reverse { -1.0 } else { 1.0 };
    let x0 = history.eval(t0);
    if x0.len() != model.n() {
        return Err(Error::Usage(format!("history has dimension {}, model {}", x0.len(), model.n())));
    }
    let mut sol = DdeSolution {
        history,
        t: vec![t0],
        x: vec![x0.clone()],
        dx: vec![],
        events: vec![],
    };
    let d0 = rhs_at(model, alpha, sign, &x0, &|s| sol.eval(s), t0)?;
    sol.dx.push(d0);
    for k in 0..nsteps {
        let t = t0 + k as f64 * h;
        let x = sol.x[k].clone();
        let k1 = sol.dx[k].clone();
        let look = |s: f64| sol.eval(s);
        let x2 = &x + &k1 * (0.5 * h);
        let k2 = rhs_at(model, alpha, sign, &x2, &look, t + 0.5 * h)?;
        let x3 = &x + &k2 * (0.5 * h);
        let k3 = rhs_at(model, alpha, sign, &x3, &look, t + 0.5 * h)?;
        let x4 = &x + &k3 * h;
        let k4 = rhs_at(model, alpha, sign, &x4, &look, t + h)?;
        let xn = &x + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        let tn = if k + 1 == nsteps { t1 } else { t0 + (k + 1) as f64 * h };
        let dn = rhs_at(model, alpha, sign, &xn, &look, tn)?;
        let big = xn.amax() > opts.bound;
        sol.t.push(tn);
        sol.x.push(xn);
        sol.dx.push(dn);
        if big {
            sol.events.push(format!("bound {} exceeded at t = {tn:.6}", opts.bound));
            break;
        }
    }
    Ok(sol)
}

/// Sup-norm defect `‖ẋ − F(x_t, α)‖` of a sampled profile over the interior
/// window `[t0 + τ_max, t1]`, from a Chebyshev series of degree `deg`
/// (`None`: interpolation), evaluated on `points` equispaced times.
pub fn defect(
    model: &DdeModel,
    alpha: &[f64],
    t: &[f64],
    profile: &DMatrix<f64>,
    deg: Option<usize>,
    points: usize,
) -> Result<f64> {
    if profile.nrows() != model.n() {
        return Err(Error::Usage(format!("profile has {} rows, model {}", profile.nrows(), model.n())));
    }
    if alpha.len() != model.n_params() {
        return Err(Error::Usage(format!("model needs {} parameters", model.n_params())));
    }
    if points < 2 {
        return Err(Error::Usage("defect needs at least two evaluation points".into()));
    }
    let fit = ChebFit::new(t, profile, deg)?;
    let (t0, t1) = fit.window();
    let lo = t0 + model.max_delay();
    if !(lo < t1) {
        return Err(Error::Usage("profile window is shorter than the largest delay".into()));
    }
    let mut worst = 0.0f64;
    for i in 0..points {
        let s = lo + (t1 - lo) * i as f64 / (points - 1) as f64;
        let (x, dx) = fit.eval_with_deriv(s);
        let f = rhs_at(model, alpha, 1.0, &x, &|u| fit.eval(u), s)?;
        worst = worst.max((dx - f).amax());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClosureRhs;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn scalar_delay(tau: f64) -> DdeModel {
        DdeModel::new(
            1,
            vec![0.0, tau],
            vec![],
            Arc::new(ClosureRhs(|xi: &[Vec<f64>], _: &[f64]| vec![-xi[1][0]])),
        )
        .unwrap()
    }

    fn opts(step: f64) -> SimOptions {
        SimOptions {
            step,
            bound: 1e6,
            reverse: false,
        }
    }

    #[test]
    fn method_of_steps_hand_solution() {
        let m = scalar_delay(1.0);
        let sol = integrate(&m, &[], History::Constant(DVector::from_vec(vec![1.0])), (0.0, 2.0), opts(0.05)).unwrap();
        assert!((sol.x.last().unwrap()[0] + 0.5).abs() < 1e-6);
        assert!((sol.eval(1.5)[0] - (-(2.0 * 0.5 - (1.5f64 * 1.5 - 1.0) / 2.0))).abs() < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let tau = std::f64::consts::FRAC_PI_2;
        let m = scalar_delay(tau);
        let ts: Vec<f64> = (0..=40).map(|k| -tau + tau * k as f64 / 40.0).collect();
        let hx = DMatrix::from_fn(1, 41, |_, k| ts[k].cos());
        let hist = History::Profile(ChebFit::new(&ts, &hx, None).unwrap());
        let err = |n: usize| {
            let sol = integrate(&m, &[], hist.clone(), (0.0, 4.0 * tau), opts(tau / n as f64)).unwrap();
            (sol.x.last().unwrap()[0] - (4.0 * tau).cos()).abs()
        };
        let (e1, e2) = (err(8), err(16));
        let r = e1 / e2;
        assert!((12.8..=19.2).contains(&r), "{e1:e} {e2:e} {r}");
    }

    #[test]
    fn interpolation_matches_mesh_values() {
        let m = scalar_delay(1.0);
        let sol = integrate(&m, &[], History::Constant(DVector::from_vec(vec![1.0])), (0.0, 3.0), opts(0.1)).unwrap();
        for k in 0..sol.t.len() {
            assert_eq!(sol.eval(sol.t[k])[0], sol.x[k][0]);
        }
        let mid = sol.eval(0.55)[0];
        assert!((mid - 0.45).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_history_stays_put() {
        let (model, spec) = crate::models::build("neural_network", &BTreeMap::new()).unwrap();
        let x0 = spec.x0_vec();
        let sol = integrate(&model, &spec.alpha0, History::Constant(x0.clone()), (0.0, 50.0), opts(0.05)).unwrap();
        let drift = sol.x.iter().map(|x| (x - &x0).amax()).fold(0.0, f64::max);
        assert!(drift <= 1e-9, "{drift}");
    }

    #[test]
    fn step_longer_than_delay_is_refused() {
        let m = scalar_delay(0.5);
        let r = integrate(&m, &[], History::Constant(DVector::from_vec(vec![1.0])), (0.0, 1.0), opts(0.6));
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn bound_event_stops_growth() {
        let m = DdeModel::new(
            1,
            vec![0.0, 1.0],
            vec![],
            Arc::new(ClosureRhs(|xi: &[Vec<f64>], _: &[f64]| vec![xi[0][0] + xi[1][0]])),
        )
        .unwrap();
        let sol = integrate(
            &m,
            &[],
            History::Constant(DVector::from_vec(vec![1.0])),
            (0.0, 100.0),
            SimOptions {
                step: 0.1,
                bound: 10.0,
                reverse: false,
            },
        )
        .unwrap();
        assert_eq!(sol.events.len(), 1);
        assert!(sol.t_end() < 100.0);
    }

    #[test]
    fn reverse_mode_negates_the_field() {
        let m = scalar_delay(1.0);
        let h = History::Constant(DVector::from_vec(vec![1.0]));
        let mut o = opts(0.1);
        o.reverse = true;
        let sol = integrate(&m, &[], h, (0.0, 1.0), o).unwrap();
        assert!((sol.x.last().unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_profile_has_no_defect() {
        let (model, spec) = crate::models::build("vdpo", &BTreeMap::new()).unwrap();
        let t: Vec<f64> = (0..=30).map(|k| 10.0 * k as f64 / 30.0).collect();
        let p = DMatrix::from_fn(model.n(), t.len(), |i, _| spec.x0[i]);
        let d = defect(&model, &spec.alpha0, &t, &p, Some(10), 200).unwrap();
        assert!(d <= 1e-10, "{d}");
        let short: Vec<f64> = (0..=30).map(|k| 0.01 * k as f64).collect();
        assert!(matches!(
            defect(&model, &spec.alpha0, &short, &p, Some(10), 200),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn exact_solution_has_small_defect() {
        let m = scalar_delay(std::f64::consts::FRAC_PI_2);
        let t: Vec<f64> = (0..=60)
            .map(|k| 5.0 - 5.0 * (std::f64::consts::PI * k as f64 / 60.0).cos())
            .collect();
        let p = DMatrix::from_fn(1, t.len(), |_, k| t[k].cos());
        let d = defect(&m, &[], &t, &p, None, 300).unwrap();
        assert!(d <= 1e-9, "{d}");
    }
}
