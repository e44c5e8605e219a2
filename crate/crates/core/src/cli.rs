//! Command-line front end: `analyze`, `predict`, `converge`, `simulate` and
//! `spectrum`, writing CSV and JSON artifacts.
//!
//! Every flag can also be given in a JSON config file (`--config`); flags on
//! the command line take precedence. CSV files start with `#` metadata lines
//! followed by a header row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::chmat::CharMatrix;
use crate::ddesim::{self, ChebFit, History, SimOptions};
use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::homological::{compute_for, BtNormalForm, NfOptions};
use crate::model::{DdeModel, HistoryPoint};
use crate::models::{self, BtCase, BtPointSpec};
use crate::oracle_ode::{correct_homoclinic, BvpOptions};
use crate::predictors::{self, NfOrbit, PredictorCase, DEFAULT_MESH};

/// Top-level parser.
#[derive(Parser, Debug)]
#[command(name = "btdde", version, about = "Bogdanov-Takens analysis of delay differential equations")]
pub struct Cli {
    /// Command to run.
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands.
#[derive(Subcommand, Debug)]
pub enum Command {
    /// Normal form coefficients; writes nf.json.
    Analyze(Flags),
    /// Homoclinic profiles and codimension-one curve samples.
    Predict(Flags),
    /// Planar-oracle convergence table and fitted slopes.
    Converge(Flags),
    /// Method-of-steps simulation of the full delay equation.
    Simulate(Flags),
    /// Characteristic roots in a rectangle.
    Spectrum(Flags),
}

/// Flags shared by all commands.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Model id (predator_prey, neural_network, vdpo, bam).
    #[arg(long)]
    pub model: Option<String>,
    /// JSON config file mirroring the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated ε values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub eps: Option<Vec<f64>>,
    /// Comma-separated predictor orders (1 and/or 3).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub order: Option<Vec<u8>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Bordered-solve slack tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed for the random directions of the derivative self-check.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulate the time-reversed field.
    #[arg(long)]
    pub reverse: bool,
    /// Simulation stops when the max-norm of the state exceeds this.
    #[arg(long)]
    pub bound: Option<f64>,
    /// Simulation step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Simulation length.
    #[arg(long)]
    pub t_end: Option<f64>,
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Model id.
    pub model: Option<String>,
    /// Fixed-parameter overrides.
    pub fixed: BTreeMap<String, f64>,
    /// ε values (`None`: command default).
    pub eps: Option<Vec<f64>>,
    /// Predictor orders.
    pub order: Vec<u8>,
    /// Output directory.
    pub out: PathBuf,
    /// Bordered-solve slack tolerance.
    pub tol: f64,
    /// Random seed.
    pub seed: u64,
    /// Time-reversed simulation.
    pub reverse: bool,
    /// Simulation bound.
    pub bound: f64,
    /// Simulation step (`None`: smallest delay / 20).
    pub step: Option<f64>,
    /// Simulation length.
    pub t_end: f64,
    /// Spectrum rectangle: real range.
    pub spectrum_re: (f64, f64),
    /// Spectrum rectangle: imaginary range.
    pub spectrum_im: (f64, f64),
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: None,
            fixed: BTreeMap::new(),
            eps: None,
            order: vec![1, 3],
            out: PathBuf::from("out"),
            tol: NfOptions::default().tol,
            seed: 0,
            reverse: false,
            bound: 1e3,
            step: None,
            t_end: 100.0,
            spectrum_re: (-2.0, 0.5),
            spectrum_im: (-10.0, 10.0),
        }
    }
}

impl RunConfig {
    /// Merges a config file (if any) with command-line flags.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(p) => {
                let text = fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| Error::Usage(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(m) = &flags.model {
            cfg.model = Some(m.clone());
        }
        if let Some(e) = &flags.eps {
            cfg.eps = Some(e.clone());
        }
        if let Some(o) = &flags.order {
            cfg.order = o.clone();
        }
        if let Some(o) = &flags.out {
            cfg.out = o.clone();
        }
        if let Some(t) = flags.tol {
            cfg.tol = t;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        cfg.reverse |= flags.reverse;
        if let Some(b) = flags.bound {
            cfg.bound = b;
        }
        if flags.step.is_some() {
            cfg.step = flags.step;
        }
        if let Some(t) = flags.t_end {
            cfg.t_end = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(e) = &self.eps {
            if e.is_empty() {
                return Err(Error::Usage("ε list is empty".into()));
            }
            if e.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Usage("ε values must be positive".into()));
            }
        }
        if self.order.is_empty() || self.order.iter().any(|o| *o != 1 && *o != 3) {
            return Err(Error::Usage("orders must be 1 or 3".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Usage("tolerance must be positive".into()));
        }
        if !(self.bound > 0.0) {
            return Err(Error::Usage("bound must be positive".into()));
        }
        Ok(())
    }

    fn model(&self) -> Result<(DdeModel, BtPointSpec)> {
        let id = self
            .model
            .as_deref()
            .ok_or_else(|| Error::Usage("no model given (use --model or a config file)".into()))?;
        models::build(id, &self.fixed)
    }

    fn eps_or(&self, default: &[f64]) -> Vec<f64> {
        self.eps.clone().unwrap_or_else(|| default.to_vec())
    }

    fn normal_form(&self, model: &DdeModel, spec: &BtPointSpec) -> Result<BtNormalForm> {
        compute_for(
            model,
            spec,
            NfOptions {
                tol: self.tol,
                ..NfOptions::default()
            },
        )
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code; diagnostics go to stderr.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("btdde: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command; returns the human-readable summary.
pub fn run(cmd: &Command) -> Result<String> {
    match cmd {
        Command::Analyze(f) => cmd_analyze(&RunConfig::resolve(f)?),
        Command::Predict(f) => cmd_predict(&RunConfig::resolve(f)?),
        Command::Converge(f) => cmd_converge(&RunConfig::resolve(f)?),
        Command::Simulate(f) => cmd_simulate(&RunConfig::resolve(f)?),
        Command::Spectrum(f) => cmd_spectrum(&RunConfig::resolve(f)?),
    }
}

fn out_file(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    Ok(cfg.out.join(name))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:.15e}")
}

fn eps_tag(e: f64) -> String {
    format!("{e}").replace('.', "p")
}

fn classification(a: f64, b: f64) -> &'static str {
    if a * b > 0.0 {
        "ab > 0: periodic orbits near the homoclinic curve are unstable"
    } else {
        "ab < 0: periodic orbits near the homoclinic curve are stable"
    }
}

/// Largest relative difference between jet and finite-difference quadratic
/// forms over three random direction pairs.
fn derivative_self_check(nf: &BtNormalForm, seed: u64) -> Result<f64> {
    let mlf = nf.mlf();
    let model = mlf.model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let mut draw = || {
            HistoryPoint(DMatrix::from_fn(model.n(), model.delays().len(), |_, _| rng.gen_range(-1.0..1.0)))
        };
        let (u, v) = (draw(), draw());
        let exact = mlf.b(&u, &v)?;
        let fd = mlf.mixed_fd(&[&u, &v], &[], 1e-16);
        worst = worst.max((&exact - &fd).amax() / (1.0 + exact.amax()));
    }
    Ok(worst)
}

/// `analyze`: writes `nf.json`.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<String> {
    let (model, spec) = cfg.model()?;
    let nf = cfg.normal_form(&model, &spec)?;
    let check = derivative_self_check(&nf, cfg.seed)?;
    let doc = json!({
        "model": spec.model_id,
        "case": match spec.case { BtCase::Generic => "generic", BtCase::Transcritical => "transcritical" },
        "classification": classification(nf.a, nf.b),
        "seed": cfg.seed,
        "fd_self_check": check,
        "normal_form": nf.to_json(),
    });
    let path = out_file(cfg, "nf.json")?;
    write(&path, &(serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(e.to_string()))? + "\n"))?;
    let mut s = String::new();
    let _ = writeln!(s, "model {} ({:?} case)", spec.model_id, spec.case);
    let _ = writeln!(s, "a = {:.10}  b = {:.10}  a/b = {:.6}", nf.a, nf.b, nf.a / nf.b);
    let _ = writeln!(s, "{}", classification(nf.a, nf.b));
    for l in ["1000", "0010", "0001"] {
        let _ = writeln!(s, "theta{l} = {:.10}", nf.theta(l));
    }
    for l in ["10", "01"] {
        if let Some(k) = nf.k(l) {
            let _ = writeln!(s, "K{l} = [{:.10}, {:.10}]", k[0], k[1]);
        }
    }
    let _ = writeln!(s, "derivative self-check (seed {}): {check:.2e}", cfg.seed);
    let _ = writeln!(s, "wrote {}", path.display());
    Ok(s)
}

fn cases_for(case: BtCase) -> Vec<PredictorCase> {
    match case {
        BtCase::Generic => vec![PredictorCase::Generic],
        BtCase::Transcritical => vec![PredictorCase::TranscriticalPlus, PredictorCase::TranscriticalMinus],
    }
}

fn profile_csv(model_id: &str, p: &predictors::HomoclinicPredictor) -> String {
    let n = p.profile.nrows();
    let mut s = String::new();
    let _ = writeln!(s, "# model={model_id} case={} eps={} order={}", p.case.label(), p.eps, p.order);
    let _ = writeln!(s, "# beta={},{}", num(p.beta[0]), num(p.beta[1]));
    let al: Vec<String> = p.alpha.iter().map(|v| num(*v)).collect();
    let _ = writeln!(s, "# alpha={}", al.join(","));
    let _ = writeln!(s, "# amplitude={}", num(p.amplitude));
    let hdr: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    let _ = writeln!(s, "t,{}", hdr.join(","));
    for k in 0..p.t.len() {
        let row: Vec<String> = (0..n).map(|i| num(p.profile[(i, k)])).collect();
        let _ = writeln!(s, "{},{}", num(p.t[k]), row.join(","));
    }
    s
}

/// `predict`: homoclinic profiles for every (ε, order, branch) and `curves.csv`.
pub fn cmd_predict(cfg: &RunConfig) -> Result<String> {
    let (model, spec) = cfg.model()?;
    let nf = cfg.normal_form(&model, &spec)?;
    let eps = cfg.eps_or(&[0.05, 0.1, 0.25]);
    let mut summary = String::new();
    let mut written = 0;
    let mut failed = 0;
    for case in cases_for(spec.case) {
        for &e in &eps {
            for &o in &cfg.order {
                match predictors::homoclinic(&nf, case, e, o, DEFAULT_MESH) {
                    Ok(p) => {
                        let name = format!("profile_{}_eps{}_order{o}.csv", case.label(), eps_tag(e));
                        let path = out_file(cfg, &name)?;
                        write(&path, &profile_csv(&spec.model_id, &p))?;
                        let _ = writeln!(summary, "wrote {} (A0 = {:.4e})", path.display(), p.amplitude);
                        written += 1;
                    }
                    Err(err) => {
                        let _ = writeln!(summary, "{} eps={e} order={o}: {err}", case.label());
                        eprintln!("btdde: {} eps={e} order={o}: {err}", case.label());
                        failed += 1;
                    }
                }
            }
        }
    }
    let n = model.n();
    let mut csv = String::new();
    let _ = writeln!(csv, "# model={} curves", spec.model_id);
    let xs: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    let als: Vec<String> = (1..=model.n_params()).map(|i| format!("alpha_{i}")).collect();
    let _ = writeln!(csv, "label,eps,beta_1,beta_2,{},{},omega,indicator", als.join(","), xs.join(","));
    for &e in &eps {
        for p in predictors::equilibrium_curves(&nf, e) {
            let ind = predictors::curve_indicator(&nf, &p).map(num).unwrap_or_else(|_| "nan".into());
            let al: Vec<String> = p.alpha.iter().map(|v| num(*v)).collect();
            let x: Vec<String> = p.x.iter().map(|v| num(*v)).collect();
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                p.label,
                e,
                num(p.beta[0]),
                num(p.beta[1]),
                al.join(","),
                x.join(","),
                p.omega.map(num).unwrap_or_else(|| "nan".into()),
                ind
            );
        }
    }
    let path = out_file(cfg, "curves.csv")?;
    write(&path, &csv)?;
    let _ = writeln!(summary, "wrote {}", path.display());
    if written == 0 && failed > 0 {
        return Err(Error::OutOfRange("no homoclinic profile could be produced".into()));
    }
    Ok(summary)
}

/// One row of the convergence table.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    /// Perturbation parameter.
    pub eps: f64,
    /// Amplitude of the corrected order-3 orbit.
    pub amplitude: f64,
    /// Relative error of the order-1 predictor.
    pub delta1: f64,
    /// Relative error of the order-3 predictor.
    pub delta3: f64,
    /// `ok` or the oracle failure.
    pub status: String,
}

/// Runs the planar oracle for both orders on every ε (in parallel, results in input order).
pub fn convergence_table(case: PredictorCase, a: f64, b: f64, eps: &[f64]) -> Vec<ConvergenceRow> {
    let one = |e: f64| -> ConvergenceRow {
        let run = |o: u8| -> Result<(f64, f64)> {
            let orbit = NfOrbit::new(case, a, b, e, o)?;
            let c = correct_homoclinic(&orbit, BvpOptions::default())?;
            Ok((c.relative_error, c.amplitude))
        };
        match (run(1), run(3)) {
            (Ok((d1, _)), Ok((d3, amp))) => ConvergenceRow {
                eps: e,
                amplitude: amp,
                delta1: d1,
                delta3: d3,
                status: "ok".into(),
            },
            (r1, r3) => ConvergenceRow {
                eps: e,
                amplitude: f64::NAN,
                delta1: r1.as_ref().map(|v| v.0).unwrap_or(f64::NAN),
                delta3: r3.as_ref().map(|v| v.0).unwrap_or(f64::NAN),
                status: r1.err().or(r3.err()).map(|e| e.to_string().replace(',', ";")).unwrap_or_default(),
            },
        }
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = eps.iter().map(|&e| s.spawn(move || one(e))).collect();
        handles.into_iter().map(|h| h.join().expect("oracle worker panicked")).collect()
    })
}

/// `converge`: per branch `convergence_<branch>.csv` and `convergence_fit.json`.
pub fn cmd_converge(cfg: &RunConfig) -> Result<String> {
    let (model, spec) = cfg.model()?;
    let nf = cfg.normal_form(&model, &spec)?;
    let eps = cfg.eps_or(&[0.04, 0.06, 0.08, 0.1, 0.12, 0.15, 0.2]);
    let mut summary = String::new();
    let mut fits = serde_json::Map::new();
    for case in cases_for(spec.case) {
        let rows = convergence_table(case, nf.a, nf.b, &eps);
        let mut csv = String::new();
        let _ = writeln!(csv, "# model={} case={} a={} b={}", spec.model_id, case.label(), num(nf.a), num(nf.b));
        let _ = writeln!(csv, "eps,A0,delta_order1,delta_order3,status");
        for r in &rows {
            let _ = writeln!(csv, "{},{},{},{},{}", r.eps, num(r.amplitude), num(r.delta1), num(r.delta3), r.status);
        }
        let path = out_file(cfg, &format!("convergence_{}.csv", case.label()))?;
        write(&path, &csv)?;
        let _ = writeln!(summary, "wrote {}", path.display());
        let ok: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.status == "ok").collect();
        let excluded: Vec<f64> = rows.iter().filter(|r| r.status != "ok").map(|r| r.eps).collect();
        let col = |f: &dyn Fn(&ConvergenceRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let (ae, aa, d1, d3) = (col(&|r| r.eps), col(&|r| r.amplitude), col(&|r| r.delta1), col(&|r| r.delta3));
        let fit = |x: &[f64], y: &[f64]| match loglog_slope(x, y) {
            Ok(v) => json!(v),
            Err(e) => json!(format!("fit refused: {e}")),
        };
        let entry = json!({
            "excluded_eps": excluded,
            "slope_vs_A0": {"order1": fit(&aa, &d1), "order3": fit(&aa, &d3)},
            "slope_vs_eps": {"order1": fit(&ae, &d1), "order3": fit(&ae, &d3)},
        });
        let _ = writeln!(summary, "{}: {}", case.label(), entry);
        fits.insert(case.label().to_string(), entry);
    }
    let path = out_file(cfg, "convergence_fit.json")?;
    write(&path, &(serde_json::to_string_pretty(&Value::Object(fits)).map_err(|e| Error::Numerical(e.to_string()))? + "\n"))?;
    let _ = writeln!(summary, "wrote {}", path.display());
    Ok(summary)
}

/// `simulate`: `trajectory.csv` from the equilibrium or, with `--eps`, from the
/// first predicted homoclinic profile.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    let (model, spec) = cfg.model()?;
    let min_delay = model.delays().iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
    let step = cfg.step.unwrap_or(if min_delay.is_finite() { min_delay / 20.0 } else { 0.01 });
    let opts = SimOptions {
        step,
        bound: cfg.bound,
        reverse: cfg.reverse,
    };
    let (history, alpha, t0, origin) = match &cfg.eps {
        None => (History::Constant(spec.x0_vec()), spec.alpha0.clone(), 0.0, "equilibrium".to_string()),
        Some(eps) => {
            let nf = cfg.normal_form(&model, &spec)?;
            let case = cases_for(spec.case)[0];
            let order = *cfg.order.iter().max().unwrap();
            let p = predictors::homoclinic(&nf, case, eps[0], order, DEFAULT_MESH)?;
            let fit = ChebFit::new(&p.t, &p.profile, None)?;
            let t0 = p.t[0] + model.max_delay();
            (
                History::Profile(fit),
                p.alpha.clone(),
                t0,
                format!("{} profile eps={} order={order}", case.label(), eps[0]),
            )
        }
    };
    let sol = ddesim::integrate(&model, &alpha, history, (t0, t0 + cfg.t_end), opts)?;
    let n = model.n();
    let mut csv = String::new();
    let _ = writeln!(csv, "# model={} history={origin} step={step} reverse={}", spec.model_id, cfg.reverse);
    for e in &sol.events {
        let _ = writeln!(csv, "# event: {e}");
    }
    let hdr: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    let _ = writeln!(csv, "t,{}", hdr.join(","));
    for (t, x) in sol.t.iter().zip(&sol.x) {
        let row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        let _ = writeln!(csv, "{},{}", num(*t), row.join(","));
    }
    let path = out_file(cfg, "trajectory.csv")?;
    write(&path, &csv)?;
    let mut s = format!("wrote {} ({} steps)\n", path.display(), sol.t.len() - 1);
    for e in &sol.events {
        let _ = writeln!(s, "event: {e}");
    }
    Ok(s)
}

/// `spectrum`: `spectrum.csv` of roots in the configured rectangle, sorted by
/// decreasing real part.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<String> {
    let (model, spec) = cfg.model()?;
    let c = CharMatrix::new(&model, &spec.x0_vec(), &spec.alpha0)?;
    let (re, im) = (cfg.spectrum_re, cfg.spectrum_im);
    if !(re.1 > re.0 && im.1 > im.0) {
        return Err(Error::Usage("empty spectrum rectangle".into()));
    }
    let nre = 15;
    let nim = ((im.1 - im.0) * 5.0).ceil().max(2.0) as usize + 1;
    let mut roots = c.spectrum_scan(re, im, nre, nim);
    for z in roots.iter_mut() {
        if z.re.abs() < 1e-12 {
            z.re = 0.0;
        }
        if z.im.abs() < 1e-12 {
            z.im = 0.0;
        }
    }
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let mut csv = String::new();
    let _ = writeln!(csv, "# model={} re={:?} im={:?}", spec.model_id, re, im);
    let _ = writeln!(csv, "re,im,abs_det");
    for z in &roots {
        let d = c.det(Complex64::new(z.re, z.im)).norm();
        let _ = writeln!(csv, "{},{},{:.3e}", num(z.re), num(z.im), d);
    }
    let path = out_file(cfg, "spectrum.csv")?;
    write(&path, &csv)?;
    let mut s = String::new();
    for z in &roots {
        let _ = writeln!(s, "{:+.4} {:+.4}i", z.re, z.im);
    }
    let _ = writeln!(s, "wrote {}", path.display());
    Ok(s)
}
