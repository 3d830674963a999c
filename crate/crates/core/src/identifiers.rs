//! Nonclassicality identifiers built from second-order intensity moments.
//!
//! `e2` is the headline identifier; `e1` (raw moments) is reported next to it.
//! The remaining functions are closed forms for special families of states,
//! kept so that the generic pipeline can be checked against them.

use serde::{Deserialize, Serialize};

use crate::moments::ArmMoments;
use crate::state::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NonclassicalDetected,
    Inconclusive,
}

impl Verdict {
    /// Strictly `e2 < 0`; there is no tolerance band.
    pub fn from_e2(e2: f64) -> Self {
        if e2 < 0.0 {
            Verdict::NonclassicalDetected
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::NonclassicalDetected => "nonclassical_detected",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentifierResult {
    pub e1: f64,
    pub e2: f64,
    pub verdict: Verdict,
    pub inputs: ArmMoments,
}

pub fn identify(m: &ArmMoments) -> IdentifierResult {
    let e2 = e2(m);
    IdentifierResult {
        e1: e1(m),
        e2,
        verdict: Verdict::from_e2(e2),
        inputs: *m,
    }
}

/// `<W_s^2><W_i^2> - <W_s W_i>^2`
pub fn e1(m: &ArmMoments) -> f64 {
    m.second_s * m.second_i - m.second_si * m.second_si
}

/// `<dW_s^2><dW_i^2> - <dW_s dW_i>^2`
pub fn e2(m: &ArmMoments) -> f64 {
    m.var_s * m.var_i - m.cov_si * m.cov_si
}

/// Spontaneous two-mode twin beam (noise allowed):
/// `(B_s B_i - |D|^2)(B_s B_i + |D|^2)`.
pub fn e_sp_two_mode(b_s: f64, b_i: f64, d_si: C64) -> f64 {
    let p = b_s * b_i;
    let d2 = d_si.norm_sqr();
    (p - d2) * (p + d2)
}

/// Pure twin beam seeded in the signal mode only, as a function of the
/// input seed amplitude.
pub fn e_st_pure_two_mode(b_p: f64, xi_s0: C64) -> f64 {
    let a = xi_s0.norm_sqr();
    -b_p * b_p * (2.0 * b_p + 1.0) - 4.0 * b_p * b_p * a * (a * (b_p + 1.0) + 1.5 * b_p + 1.0)
}

/// `M` identical copies multiply the identifier by `M^2`.
pub fn e_m_copies(m: usize, e_single: f64) -> f64 {
    let m = m as f64;
    m * m * e_single
}

/// The three closed forms for a spontaneous multimode twin beam split into
/// all-signal / all-idler arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultimodeSpontaneous {
    /// `sum B_s^2 * sum B_i^2 - (sum |D|^2)^2`; always available.
    pub general: f64,
    /// Factored form, present when `sum B_s^2 == sum B_i^2`.
    pub symmetric: Option<f64>,
    /// `-sum B_p * sum B_p (2 B_p + 1)`, present for pure, noiseless beams.
    pub pure: Option<f64>,
}

/// Relative tolerance used to decide which special forms apply.
const FORM_TOL: f64 = 1e-12;

fn nearly(a: f64, b: f64) -> bool {
    (a - b).abs() <= FORM_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn e_m_spontaneous(b_s: &[f64], b_i: &[f64], d: &[C64]) -> MultimodeSpontaneous {
    assert!(
        b_s.len() == b_i.len() && b_s.len() == d.len(),
        "per-pair lists must have equal length"
    );
    let sum_bs2: f64 = b_s.iter().map(|b| b * b).sum();
    let sum_bi2: f64 = b_i.iter().map(|b| b * b).sum();
    let sum_d2: f64 = d.iter().map(|z| z.norm_sqr()).sum();
    let general = sum_bs2 * sum_bi2 - sum_d2 * sum_d2;

    let symmetric = nearly(sum_bs2, sum_bi2).then(|| {
        let minus: f64 = b_s.iter().zip(d).map(|(b, z)| b * b - z.norm_sqr()).sum();
        let plus: f64 = b_s.iter().zip(d).map(|(b, z)| b * b + z.norm_sqr()).sum();
        minus * plus
    });

    let is_pure = b_s
        .iter()
        .zip(b_i)
        .zip(d)
        .all(|((bs, bi), z)| nearly(*bs, *bi) && nearly(z.norm_sqr(), bs * (bs + 1.0)));
    let pure = is_pure.then(|| {
        let total: f64 = b_s.iter().sum();
        let weighted: f64 = b_s.iter().map(|b| b * (2.0 * b + 1.0)).sum();
        -total * weighted
    });

    MultimodeSpontaneous {
        general,
        symmetric,
        pure,
    }
}

/// Two modes of the overlapping comb:
/// `(B_j^2 + |C_j|^2)(B_k^2 + |C_k|^2) - (|D_jk|^2 + |Dbar_jk|^2)^2`.
pub fn e_sp_overlap_pair(b_j: f64, c_j: C64, b_k: f64, c_k: C64, d_jk: C64, dbar_jk: C64) -> f64 {
    let cross = d_jk.norm_sqr() + dbar_jk.norm_sqr();
    (b_j * b_j + c_j.norm_sqr()) * (b_k * b_k + c_k.norm_sqr()) - cross * cross
}
