//! Nonclassicality depth.
//!
//! For two-mode states the depth is the most negative eigenvalue of the
//! normally-ordered matrix with its sign flipped. For arbitrary bipartitions
//! it is the positive root of the quartic obtained by adding `tau` thermal
//! photons to each arm and asking when `e2` reaches zero.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{structure, Error, Result};
use crate::identifiers::e2;
use crate::moments::ArmMoments;
use crate::state::{GaussianCombState, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMethod {
    Eigenvalue,
    QuarticRoot,
}

impl DepthMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            DepthMethod::Eigenvalue => "eigenvalue",
            DepthMethod::QuarticRoot => "quartic_root",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthResult {
    pub tau: f64,
    pub method: DepthMethod,
    /// Eigenpair residual `|A v - l v|`, or `|E(tau)|` for the quartic.
    pub residual: f64,
}

pub fn tau_eigen(state: &GaussianCombState) -> Result<DepthResult> {
    if state.n_modes() != 2 {
        return structure(format!(
            "eigenvalue depth needs a two-mode state, got {} modes",
            state.n_modes()
        ));
    }
    let a = state.full_matrix();
    let eig = SymmetricEigen::new(a.clone());
    let (k, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("4x4 matrix has eigenvalues");
    let v = eig.eigenvectors.column(k);
    let residual = (&a * v - v * C64::new(lmin, 0.0)).norm();
    Ok(DepthResult {
        tau: (-lmin).max(0.0),
        method: DepthMethod::Eigenvalue,
        residual,
    })
}

/// Coefficients of `E(tau)` from the leading power down:
/// `[1, 2(W_s + W_i), var_s + var_i + 4 W_s W_i, 2(var_s W_i + var_i W_s), e2]`.
pub fn quartic_coefficients(m: &ArmMoments) -> [f64; 5] {
    [
        1.0,
        2.0 * (m.w_s + m.w_i),
        m.var_s + m.var_i + 4.0 * m.w_s * m.w_i,
        2.0 * (m.var_s * m.w_i + m.var_i * m.w_s),
        e2(m),
    ]
}

fn horner(c: &[f64; 5], x: f64) -> f64 {
    c.iter().fold(0.0, |acc, &a| acc * x + a)
}

fn horner_derivative(c: &[f64; 5], x: f64) -> f64 {
    4.0 * c[0] * x.powi(3) + 3.0 * c[1] * x * x + 2.0 * c[2] * x + c[3]
}

pub const BISECTION_MAX_ITER: usize = 200;
pub const BISECTION_REL_WIDTH: f64 = 1e-12;
pub const NEWTON_POLISH_STEPS: usize = 5;
pub const QUARTIC_RESIDUAL_TOL: f64 = 1e-10;

pub fn tau_m(m: &ArmMoments) -> Result<DepthResult> {
    let coeffs = quartic_coefficients(m);
    let (tau, residual) = solve_depth_quartic(&coeffs)?;
    Ok(DepthResult {
        tau,
        method: DepthMethod::QuarticRoot,
        residual,
    })
}

/// Positive root of `E(tau)` when the constant term is negative; zero
/// otherwise. Returns the root and `|E(root)|`.
///
/// With the constant term negative and all other coefficients non-negative
/// there is exactly one sign change, hence exactly one positive root.
pub fn solve_depth_quartic(coeffs: &[f64; 5]) -> Result<(f64, f64)> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical(format!("non-finite quartic coefficients {coeffs:?}")));
    }
    let constant = coeffs[4];
    if constant >= 0.0 {
        return Ok((0.0, 0.0));
    }
    if coeffs[..4].iter().any(|&c| c < 0.0) {
        return Err(Error::Invariant(format!(
            "quartic coefficients {coeffs:?} are not non-negative; the positive root may not be unique"
        )));
    }
    // Work with coefficients divided by the largest magnitude.
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let c: [f64; 5] = coeffs.map(|v| v / scale);

    let upper = 1.0 + coeffs[1..].iter().map(|v| v.abs()).sum::<f64>();
    let (mut lo, mut hi) = (0.0, upper);
    if !(horner(&c, lo) < 0.0 && horner(&c, hi) > 0.0) {
        return Err(Error::Invariant(format!(
            "depth root not bracketed on [0, {upper}] for coefficients {coeffs:?}"
        )));
    }
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_REL_WIDTH * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if horner(&c, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut tau = 0.5 * (lo + hi);
    for _ in 0..NEWTON_POLISH_STEPS {
        let slope = horner_derivative(&c, tau);
        if slope <= 0.0 {
            break;
        }
        let next = tau - horner(&c, tau) / slope;
        if !(lo..=hi).contains(&next) {
            break;
        }
        if next == tau {
            break;
        }
        tau = next;
    }
    let residual = horner(coeffs, tau).abs();
    if residual >= QUARTIC_RESIDUAL_TOL * constant.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "depth quartic residual {residual:e} too large at tau = {tau}"
        )));
    }
    Ok((tau, residual))
}
