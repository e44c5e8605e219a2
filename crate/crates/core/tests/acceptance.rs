//! End-to-end acceptance checks; prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use btdde::chmat::CharMatrix;
use btdde::cli::{convergence_table, run, Cli};
use clap::Parser;
use btdde::ddesim::defect;
use btdde::fit::loglog_slope;
use btdde::homological::{compute_for, BtNormalForm, NfOptions};
use btdde::model::{eval_rhs, DdeModel, HistoryPoint};
use btdde::models::{self, BtPointSpec, MODEL_IDS};
use btdde::predictors::{self, PredictorCase, DEFAULT_MESH};
use num_complex::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn build(id: &str) -> (DdeModel, BtPointSpec) {
    models::build(id, &BTreeMap::new()).expect("bundled model")
}

fn nf(id: &str) -> BtNormalForm {
    let (m, s) = build(id);
    compute_for(&m, &s, NfOptions::default()).expect("normal form")
}

fn bt_points() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for id in MODEL_IDS {
        let (m, s) = build(id);
        let x = HistoryPoint::constant(&s.x0_vec(), m.delays().len());
        let f = eval_rhs(&m, &x, &s.alpha0).unwrap().amax();
        let c = CharMatrix::new(&m, &s.x0_vec(), &s.alpha0).unwrap();
        let d = c.det(Complex64::new(0.0, 0.0)).norm();
        pass &= f <= 1e-12 && d <= 1e-10;
        let mut lead = String::new();
        if id == "neural_network" || id == "bam" {
            let z1 = c.refine_root(Complex64::new(1e-3, 1e-3)).unwrap();
            let z2 = c.refine_root(Complex64::new(-1e-3, -1e-3)).unwrap();
            let zmax = z1.norm().max(z2.norm());
            pass &= zmax <= 1e-6;
            lead = format!(" |z|={zmax:.1e}");
        }
        parts.push(format!("{id}: rhs={f:.1e} det={d:.1e}{lead}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn closed_forms() -> Outcome {
    let (_, s) = build("neural_network");
    let r = (3.0f64 / 13.0).sqrt();
    let e = (39f64.sqrt() - 10.0 * r.atanh()) / 20.0;
    let eq = (s.alpha0[0] - 1.3).abs().max((s.alpha0[1] - e).abs());
    let (_, b) = build("bam");
    let ec = (b.fixed["c21_0"] - 0.36).abs().max((b.fixed["c31_0"] + 0.22).abs());
    let bd = models::bam_stability_boundary(0.1, 0.3, 0.2).unwrap();
    let pass = eq <= 1e-12 && ec <= 1e-12 && (bd.tau0 - 5.4320).abs() <= 1e-3 && (bd.bound - 13.2309349).abs() <= 1e-6;
    Outcome {
        pass,
        detail: format!(
            "(Q,E) err {eq:.1e}; c0 err {ec:.1e}; tau0={:.5}; bound={:.8}",
            bd.tau0, bd.bound
        ),
    }
}

fn invariants() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for id in MODEL_IDS {
        let n = nf(id);
        let sp = &n.spectral;
        let phis = [sp.phi0(), sp.phi1()];
        let mut bio = 0.0f64;
        for i in 0..2 {
            for (j, phi) in phis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                bio = bio.max((sp.pair_psi(i, phi) - want).abs());
            }
        }
        let res = n.systems.iter().map(|r| r.residual).fold(0.0, f64::max);
        let slack = n.systems.iter().map(|r| r.slack).fold(0.0, f64::max);
        pass &= bio <= 1e-10 && res <= 1e-8 && slack <= 1e-8;
        parts.push(format!(
            "{id}: pairing {bio:.1e}, {} systems, residual {res:.1e}, slack {slack:.1e}",
            n.systems.len()
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn coefficients() -> Outcome {
    let expect = [
        ("predator_prey", 1.0, None),
        ("neural_network", 1.0, Some(0.2000)),
        ("vdpo", -1.0, Some(-0.4422)),
        ("bam", -1.0, Some(-0.0889)),
    ];
    let mut pass = true;
    let mut parts = vec![];
    for (id, sign, ratio) in expect {
        let n = nf(id);
        let r = n.a / n.b;
        let ok_sign = (n.a * n.b).signum() == sign;
        let ok_ratio = match ratio {
            Some(q) => ((r - q) / q).abs() <= 0.05,
            None => r.abs() > 1e-6 && r.abs() < 1e6,
        };
        pass &= ok_sign && ok_ratio;
        parts.push(format!("{id}: a/b={r:.4}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn homological_order() -> Outcome {
    let mut pass = true;
    let mut parts = vec![];
    for id in ["vdpo", "neural_network"] {
        let (_, order) = nf(id).residual_exponent(&[0.05, 0.1, 0.2]).unwrap();
        pass &= order >= 3.0;
        parts.push(format!("{id}: exponent {order:.2}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn convergence() -> Outcome {
    let eps = [0.04, 0.05, 0.06, 0.08, 0.1, 0.12, 0.15, 0.2];
    let neural = nf("neural_network");
    let vdpo = nf("vdpo");
    let mut pass = true;
    let mut parts = vec![];
    for (case, n) in [
        (PredictorCase::Generic, &neural),
        (PredictorCase::TranscriticalPlus, &vdpo),
        (PredictorCase::TranscriticalMinus, &vdpo),
    ] {
        let rows = convergence_table(case, n.a, n.b, &eps);
        if let Some(bad) = rows.iter().find(|r| r.status != "ok") {
            pass = false;
            parts.push(format!("{}: oracle failed at eps={} ({})", case.label(), bad.eps, bad.status));
            continue;
        }
        let d1: Vec<f64> = rows.iter().map(|r| r.delta1).collect();
        let d3: Vec<f64> = rows.iter().map(|r| r.delta3).collect();
        let s1 = loglog_slope(&eps, &d1).unwrap();
        let s3 = loglog_slope(&eps, &d3).unwrap();
        let at = rows.iter().find(|r| r.eps == 0.05).unwrap();
        let ratio = at.delta3 / at.delta1;
        pass &= s3 - s1 >= 1.5 && ratio <= 0.1;
        parts.push(format!(
            "{}: slope1={s1:.2} slope3={s3:.2} ratio@0.05={ratio:.1e}",
            case.label()
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn dde_defect() -> Outcome {
    let (m, _) = build("neural_network");
    let n = nf("neural_network");
    let eps = [0.05, 0.1];
    let mut d1 = vec![];
    let mut d3 = vec![];
    for &e in &eps {
        for (order, out) in [(1u8, &mut d1), (3u8, &mut d3)] {
            let p = predictors::homoclinic_generic(&n, e, order, DEFAULT_MESH).unwrap();
            out.push(defect(&m, &p.alpha, &p.t, &p.profile, None, 2001).unwrap());
        }
    }
    let order3 = loglog_slope(&eps, &d3).unwrap();
    let pass = d3.iter().zip(&d1).all(|(a, b)| *a <= 0.1 * b) && order3 >= 3.0;
    Outcome {
        pass,
        detail: format!(
            "order1 {:.2e},{:.2e}; order3 {:.2e},{:.2e}; fitted order3 {order3:.2}",
            d1[0], d1[1], d3[0], d3[1]
        ),
    }
}

fn codim_one() -> Outcome {
    let eps = [0.02, 0.04, 0.08];
    let mut pass = true;
    let mut parts = vec![];
    for id in ["vdpo", "neural_network"] {
        let n = nf(id);
        let mut by_label: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for &e in &eps {
            for p in predictors::equilibrium_curves(&n, e) {
                let v = predictors::curve_indicator(&n, &p).unwrap_or(f64::NAN);
                by_label.entry(p.label).or_default().push(v);
            }
        }
        for (label, vals) in by_label {
            if vals.iter().any(|v| !v.is_finite()) {
                pass = false;
                parts.push(format!("{id}/{label}: correction failed"));
            } else if vals.iter().all(|v| *v <= 1e-13) {
                parts.push(format!("{id}/{label}: exact (max {:.1e})", vals.iter().fold(0.0f64, |a, b| a.max(*b))));
            } else {
                let floor: Vec<f64> = vals.iter().map(|v| v.max(1e-300)).collect();
                let order = loglog_slope(&eps, &floor).unwrap();
                pass &= order >= 2.0;
                parts.push(format!("{id}/{label}: order {order:.3}"));
            }
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let out = dir.to_str().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["analyze", "--model", "vdpo", "--seed", "7"],
        vec!["analyze", "--model", "neural_network", "--seed", "7"],
        vec!["predict", "--model", "neural_network", "--eps", "0.1,0.25"],
        vec!["predict", "--model", "vdpo", "--eps", "0.1"],
        vec!["converge", "--model", "neural_network", "--eps", "0.05,0.1"],
        vec!["simulate", "--model", "neural_network", "--eps", "0.1", "--order", "3", "--t-end", "20"],
        vec!["spectrum", "--model", "bam"],
    ];
    let mut files = vec![];
    for (k, r) in runs.iter().enumerate() {
        let sub = dir.join(format!("run{k}"));
        let mut args = vec!["btdde"];
        args.extend(r.iter().copied());
        let o = format!("{out}/run{k}");
        args.extend(["--out", o.as_str()]);
        let cli = Cli::try_parse_from(args).unwrap();
        run(&cli.command).unwrap_or_else(|e| panic!("{r:?}: {e}"));
        let mut names: Vec<_> = fs::read_dir(&sub).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            files.push((format!("run{k}/{}", p.file_name().unwrap().to_string_lossy()), fs::read(&p).unwrap()));
        }
    }
    files
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = pipeline(a.path());
    let fb = pipeline(b.path());
    let same = fa == fb;
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Outcome {
        pass: same && !fa.is_empty(),
        detail: if same {
            format!("{} artifacts byte-identical", fa.len())
        } else {
            format!("differing: {differing:?}")
        },
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("bt-point verification", bt_points),
        ("closed-form reproduction", closed_forms),
        ("normal-form invariants", invariants),
        ("coefficient signs and ratios", coefficients),
        ("homological residual order", homological_order),
        ("planar-oracle convergence", convergence),
        ("dde defect", dde_defect),
        ("codim-1 indicators", codim_one),
        ("determinism", determinism),
    ];
    let mut failed = vec![];
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {status} {name} ({:.1}s) {}",
            k + 1,
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
