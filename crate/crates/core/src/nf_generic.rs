//! Generic Bogdanov-Takens cascade: normal form
//! `ẇ₀ = w₁`, `ẇ₁ = β₁ + β₂w₁ + aw₀² + bw₀w₁` with time reparametrization
//! `ϑ = 1 + ϑ₁₀₀₀w₀ + ϑ₀₀₀₁β₂`, parameter map
//! `K = K₁₀β₁ + K₀₁β₂ + ½K₀₂β₂² + K₁₁β₁β₂ + ⅙K₀₃β₂³` and the center-manifold
//! coefficients needed by the third-order homoclinic predictor.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::homological::{self, mono, BtNormalForm, CaseDef, Engine, NfOptions, Stage, StageFail, State};
use crate::model::DdeModel;
use crate::models::BtCase;

/// Normal form of a generic Bogdanov-Takens point.
pub type GenericBtNormalForm = BtNormalForm;

const ORDER: &[&str] = &[
    "2000", "1100", "0200", "3000", "2100", "0001", "0010", "1001", "0101", "1010", "0110", "2001", "1101",
    "0011", "0002", "1002", "0102", "0003",
];

const STAGES: &[Stage] = &[
    Stage {
        names: &["a"],
        conditions: &["2000"],
        fail: StageFail::Degenerate,
    },
    Stage {
        names: &["b"],
        conditions: &["1100"],
        fail: StageFail::Degenerate,
    },
    Stage {
        names: &["gamma1", "theta1000"],
        conditions: &["0200", "3000"],
        fail: StageFail::Degenerate,
    },
    Stage {
        names: &["gamma2"],
        conditions: &["2100"],
        fail: StageFail::Degenerate,
    },
    Stage {
        names: &["delta1", "g3"],
        conditions: &["1001", "0101"],
        fail: StageFail::Transversality,
    },
    Stage {
        names: &["delta2", "gamma4"],
        conditions: &["1010", "0110"],
        fail: StageFail::Degenerate,
    },
    Stage {
        names: &["gamma5", "theta0001"],
        conditions: &["2001", "1101"],
        fail: StageFail::Degenerate,
    },
    Stage {
        names: &["c11"],
        conditions: &["0011"],
        fail: StageFail::Transversality,
    },
    Stage {
        names: &["c02", "delta3", "gamma6"],
        conditions: &["0002", "1002", "0102"],
        fail: StageFail::Degenerate,
    },
    Stage {
        names: &["c03"],
        conditions: &["0003"],
        fail: StageFail::Transversality,
    },
];

fn setup(eng: &Engine, st: &mut State) -> Result<()> {
    let p1 = &eng.sp.chain().p1;
    let mut nu = DVector::zeros(2);
    for i in 0..2 {
        let mut e = [0.0; 2];
        e[i] = 1.0;
        nu[i] = p1.dot(&eng.j1(&e)?);
    }
    let scale = eng.sp.d(1).norm().max(1.0);
    if nu.norm() <= 1e-10 * scale {
        return Err(Error::Transversality("p₁J₁ vanishes".into()));
    }
    let k10 = &nu / nu.norm_squared();
    let k01 = DVector::from_vec(vec![-k10[1], k10[0]]);
    st.consts.insert("nu1".into(), nu[0]);
    st.consts.insert("nu2".into(), nu[1]);
    st.vecs.insert("khat10".into(), k10);
    st.vecs.insert("khat01".into(), k01);
    Ok(())
}

fn assemble(st: &mut State) {
    st.a = st.c("a");
    st.b = st.c("b");
    st.theta.insert(mono("1000"), st.c("theta1000"));
    st.theta.insert(mono("0001"), st.c("theta0001"));
    for (m, name) in [
        ("2000", "gamma1"),
        ("1100", "gamma2"),
        ("0001", "g3"),
        ("0010", "gamma4"),
        ("1001", "gamma5"),
        ("0002", "gamma6"),
    ] {
        let g = st.c(name);
        st.homog.insert(mono(m), g);
    }
    let k01 = st.v("khat01") * st.c("delta1");
    let k10 = st.v("khat10") + &k01 * st.c("delta2");
    st.k.insert([1, 1], &k10 * st.c("c11"));
    st.k.insert([0, 2], &k10 * st.c("c02") + &k01 * st.c("delta3"));
    st.k.insert([0, 3], &k10 * st.c("c03"));
    st.k.insert([1, 0], k10);
    st.k.insert([0, 1], k01);
}

fn after_stage(i: usize, st: &State) -> Result<()> {
    let scale = 1e-10;
    match i {
        0 if st.c("a").abs() <= scale => Err(Error::NotBt("degenerate point: a = 0".into())),
        1 if st.c("b").abs() <= scale => Err(Error::NotBt("degenerate point: b = 0".into())),
        _ => Ok(()),
    }
}

fn finish(st: &mut State) {
    let g3 = st.c("g3") / st.c("delta1");
    st.consts.insert("gamma3".into(), g3);
}

const DEF: CaseDef = CaseDef {
    case: BtCase::Generic,
    order: ORDER,
    k_monos: &["10", "01", "02", "11", "03"],
    theta_monos: &["1000", "0001"],
    stages: STAGES,
    setup,
    assemble,
    after_stage,
    finish,
};

/// Runs the generic cascade at a Bogdanov-Takens point `(x0, alpha0)`.
pub fn compute(model: &DdeModel, x0: &DVector<f64>, alpha0: &[f64], opts: NfOptions) -> Result<GenericBtNormalForm> {
    homological::run(&DEF, model, x0, alpha0, opts)
}
