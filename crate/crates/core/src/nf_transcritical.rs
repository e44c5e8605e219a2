//! Transcritical Bogdanov-Takens cascade (equilibrium fixed for all parameters):
//! normal form `ẇ₀ = w₁`, `ẇ₁ = β₁w₀ + β₂w₁ + aw₀² + bw₀w₁`, time
//! reparametrization `ϑ = 1 + ϑ₁₀₀₀w₀ + ϑ₀₀₁₀β₁ + ϑ₀₀₀₁β₂` and parameter map
//! `K = K₁₀β₁ + K₀₁β₂ + ½K₂₀β₁² + K₁₁β₁β₂ + ½K₀₂β₂²`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::homological::{self, mono, BtNormalForm, CaseDef, Engine, NfOptions, Stage, StageFail, State};
use crate::model::DdeModel;
use crate::models::BtCase;

/// Normal form of a transcritical Bogdanov-Takens point.
pub type TranscriticalBtNormalForm = BtNormalForm;

const ORDER: &[&str] = &[
    "2000", "1100", "0200", "3000", "2100", "1010", "1001", "0110", "0101", "2010", "1110", "2001", "1101",
    "1002", "0102", "1011", "0111", "1020", "0120",
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
        names: &["delta1", "delta2", "delta3", "delta4"],
        conditions: &["1010", "0110", "1001", "0101"],
        fail: StageFail::Transversality,
    },
    Stage {
        names: &["gamma3", "theta0010"],
        conditions: &["2010", "1110"],
        fail: StageFail::Degenerate,
    },
    Stage {
        names: &["gamma4", "theta0001"],
        conditions: &["2001", "1101"],
        fail: StageFail::Degenerate,
    },
    Stage {
        names: &["gamma5", "gamma6"],
        conditions: &["1002", "0102"],
        fail: StageFail::Transversality,
    },
    Stage {
        names: &["gamma7", "gamma8"],
        conditions: &["1011", "0111"],
        fail: StageFail::Transversality,
    },
    Stage {
        names: &["gamma9", "gamma10"],
        conditions: &["1020", "0120"],
        fail: StageFail::Transversality,
    },
];

fn setup(eng: &Engine, _st: &mut State) -> Result<()> {
    let scale = eng.sp.d(1).norm().max(1.0);
    for i in 0..2 {
        let mut e = [0.0; 2];
        e[i] = 1.0;
        let j = eng.j1(&e)?;
        if j.amax() > 1e-8 * scale {
            return Err(Error::Usage(
                "transcritical cascade needs an equilibrium that persists for all parameters".into(),
            ));
        }
    }
    Ok(())
}

fn assemble(st: &mut State) {
    st.a = st.c("a");
    st.b = st.c("b");
    for t in ["1000", "0010", "0001"] {
        let v = st.c(&format!("theta{t}"));
        st.theta.insert(mono(t), v);
    }
    for (m, name) in [("2000", "gamma1"), ("1100", "gamma2"), ("1010", "gamma3"), ("1001", "gamma4")] {
        let g = st.c(name);
        st.homog.insert(mono(m), g);
    }
    let k10 = DVector::from_vec(vec![st.c("delta1"), st.c("delta2")]);
    let k01 = DVector::from_vec(vec![st.c("delta3"), st.c("delta4")]);
    st.k.insert([0, 2], &k10 * st.c("gamma5") + &k01 * st.c("gamma6"));
    st.k.insert([1, 1], &k10 * st.c("gamma7") + &k01 * st.c("gamma8"));
    st.k.insert([2, 0], &k10 * st.c("gamma9") + &k01 * st.c("gamma10"));
    st.k.insert([1, 0], k10);
    st.k.insert([0, 1], k01);
}

fn after_stage(i: usize, st: &State) -> Result<()> {
    match i {
        0 if st.c("a").abs() <= 1e-10 => Err(Error::NotBt("degenerate point: a = 0".into())),
        1 if st.c("b").abs() <= 1e-10 => Err(Error::NotBt("degenerate point: b = 0".into())),
        _ => Ok(()),
    }
}

fn finish(_st: &mut State) {}

const DEF: CaseDef = CaseDef {
    case: BtCase::Transcritical,
    order: ORDER,
    k_monos: &["10", "01", "20", "11", "02"],
    theta_monos: &["1000", "0010", "0001"],
    stages: STAGES,
    setup,
    assemble,
    after_stage,
    finish,
};

/// Runs the transcritical cascade at a Bogdanov-Takens point `(x0, alpha0)`.
pub fn compute(
    model: &DdeModel,
    x0: &DVector<f64>,
    alpha0: &[f64],
    opts: NfOptions,
) -> Result<TranscriticalBtNormalForm> {
    homological::run(&DEF, model, x0, alpha0, opts)
}
