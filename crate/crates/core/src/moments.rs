//! Integrated-intensity moments.
//!
//! First and second moments come straight from the covariance blocks and
//! coherent amplitudes (Wick expansion of normally ordered products). The
//! generating function is only used to cross-check them numerically.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::interleave;
use crate::error::{domain, structure, Error, Result};
use crate::state::{Bipartition, GaussianCombState, C64};

/// First and second moments of the two arm intensities `W_s`, `W_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmMoments {
    pub w_s: f64,
    pub w_i: f64,
    pub var_s: f64,
    pub var_i: f64,
    pub cov_si: f64,
    /// `<W_s^2>`
    pub second_s: f64,
    /// `<W_i^2>`
    pub second_i: f64,
    /// `<W_s W_i>`
    pub second_si: f64,
}

impl ArmMoments {
    pub fn from_central(w_s: f64, w_i: f64, var_s: f64, var_i: f64, cov_si: f64) -> Self {
        Self {
            w_s,
            w_i,
            var_s,
            var_i,
            cov_si,
            second_s: var_s + w_s * w_s,
            second_i: var_i + w_i * w_i,
            second_si: cov_si + w_s * w_i,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.w_s,
            self.w_i,
            self.var_s,
            self.var_i,
            self.cov_si,
            self.second_s,
            self.second_i,
            self.second_si,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// `<W_j> = B_j + |xi_j|^2`
pub fn mode_mean(state: &GaussianCombState, j: usize) -> f64 {
    state.cov().b()[j] + state.xi()[j].norm_sqr()
}

/// `<dW_j^2> = B_j^2 + |C_j|^2 + 2 B_j |xi_j|^2 + 2 Re[C_j xi_j^*^2]`
pub fn mode_variance(state: &GaussianCombState, j: usize) -> f64 {
    let b = state.cov().b()[j];
    let c = state.cov().c()[j];
    let xi = state.xi()[j];
    b * b + c.norm_sqr() + 2.0 * b * xi.norm_sqr() + 2.0 * (c * xi.conj() * xi.conj()).re
}

/// `<dW_j dW_k> = |D_jk|^2 + |Dbar_jk|^2 + 2 Re[D_jk xi_j^* xi_k^*] + 2 Re[Dbar_jk xi_j xi_k^*]`
pub fn mode_covariance(state: &GaussianCombState, j: usize, k: usize) -> Result<f64> {
    if j == k {
        return domain(format!(
            "mode_covariance needs distinct modes (got {j} twice); use mode_variance"
        ));
    }
    Ok(covariance_unchecked(state, j, k))
}

fn covariance_unchecked(state: &GaussianCombState, j: usize, k: usize) -> f64 {
    let d = state.cov().d(j, k);
    let db = state.cov().d_bar(j, k);
    let (xj, xk) = (state.xi()[j], state.xi()[k]);
    d.norm_sqr() + db.norm_sqr() + 2.0 * (d * xj.conj() * xk.conj()).re + 2.0 * (db * xj * xk.conj()).re
}

fn arm_variance(state: &GaussianCombState, arm: &[usize]) -> f64 {
    let mut total: f64 = arm.iter().map(|&j| mode_variance(state, j)).sum();
    for (a, &j) in arm.iter().enumerate() {
        for &k in &arm[a + 1..] {
            total += 2.0 * covariance_unchecked(state, j, k);
        }
    }
    total
}

pub fn arm_moments(state: &GaussianCombState, bipartition: &Bipartition) -> Result<ArmMoments> {
    bipartition.check_modes(state.n_modes())?;
    let (sig, idl) = (bipartition.signal(), bipartition.idler());
    let w_s = sig.iter().map(|&j| mode_mean(state, j)).sum();
    let w_i = idl.iter().map(|&j| mode_mean(state, j)).sum();
    let cov_si = sig
        .iter()
        .flat_map(|&j| idl.iter().map(move |&k| (j, k)))
        .map(|(j, k)| covariance_unchecked(state, j, k))
        .sum();
    Ok(ArmMoments::from_central(
        w_s,
        w_i,
        arm_variance(state, sig),
        arm_variance(state, idl),
        cov_si,
    ))
}

/// Scales moments for detectors of efficiency `eta_s`, `eta_i`: each power
/// of `W_s` (`W_i`) picks up one factor of `eta_s` (`eta_i`).
pub fn apply_efficiency(m: &ArmMoments, eta_s: f64, eta_i: f64) -> Result<ArmMoments> {
    for (name, eta) in [("eta_s", eta_s), ("eta_i", eta_i)] {
        if !(0.0..=1.0).contains(&eta) {
            return domain(format!("{name} = {eta} must lie in [0, 1]"));
        }
    }
    Ok(ArmMoments {
        w_s: eta_s * m.w_s,
        w_i: eta_i * m.w_i,
        var_s: eta_s * eta_s * m.var_s,
        var_i: eta_i * eta_i * m.var_i,
        cov_si: eta_s * eta_i * m.cov_si,
        second_s: eta_s * eta_s * m.second_s,
        second_i: eta_i * eta_i * m.second_i,
        second_si: eta_s * eta_i * m.second_si,
    })
}

/// `G(lambda) = exp(-1/2 Xi^dag L (I + A L)^-1 Xi) / sqrt(det(I + A L))`,
/// with `L = diag(l_1, l_1, ..., l_N, l_N)`. `G(0) = 1`.
pub fn generating_function(state: &GaussianCombState, lambda: &[f64]) -> Result<f64> {
    check_lambda(state, lambda)?;
    if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0)) {
        return domain(format!("lambda entries must be non-negative, got {l}"));
    }
    Ok(log_gf(state, lambda)?.exp())
}

/// `ln G`, whose derivatives are the intensity cumulants.
pub fn log_generating_function(state: &GaussianCombState, lambda: &[f64]) -> Result<f64> {
    check_lambda(state, lambda)?;
    if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0)) {
        return domain(format!("lambda entries must be non-negative, got {l}"));
    }
    log_gf(state, lambda)
}

fn check_lambda(state: &GaussianCombState, lambda: &[f64]) -> Result<()> {
    if lambda.len() != state.n_modes() {
        return structure(format!(
            "lambda has {} entries, state has {} modes",
            lambda.len(),
            state.n_modes()
        ));
    }
    Ok(())
}

// Valid for small negative lambda too, which the finite-difference stencils need.
fn log_gf(state: &GaussianCombState, lambda: &[f64]) -> Result<f64> {
    let a = state.full_matrix();
    let dim = a.nrows();
    let lam = |r: usize| lambda[r / 2];
    let x = DMatrix::from_fn(dim, dim, |r, s| {
        let id = if r == s { 1.0 } else { 0.0 };
        C64::new(id, 0.0) + a[(r, s)] * lam(s)
    });
    let lu = x.clone().lu();
    let det = lu.determinant();
    let xi = interleave(state.xi());
    let solved = lu.solve(&xi);
    let cond = || condition_estimate(&x);
    let solved = match solved {
        Some(v) if det.re > 0.0 && det.re.is_finite() => v,
        _ => {
            return Err(Error::Numerical(format!(
                "I + A*Lambda is singular or not positive (det = {det}, 1-norm condition ~ {:.3e})",
                cond()
            )))
        }
    };
    let quad: C64 = xi.iter().enumerate().map(|(r, z)| z.conj() * lam(r) * solved[r]).sum();
    Ok(-0.5 * quad.re - 0.5 * det.re.ln())
}

fn condition_estimate(x: &DMatrix<C64>) -> f64 {
    let norm1 = |m: &DMatrix<C64>| {
        (0..m.ncols())
            .map(|c| m.column(c).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match x.clone().try_inverse() {
        Some(inv) => norm1(x) * norm1(&inv),
        None => f64::INFINITY,
    }
}

/// Result of a finite-difference derivative estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdEstimate {
    pub value: f64,
    /// Disagreement between the two closest Richardson-extrapolated estimates.
    pub spread: f64,
    /// False when the step sweep never settled (cancellation or truncation).
    pub reliable: bool,
}

/// Relative disagreement above which an estimate is flagged unreliable.
pub const FD_RELIABILITY_TOL: f64 = 1e-6;

/// A starting step matched to the intensity scale of the state.
pub fn fd_default_step(state: &GaussianCombState) -> f64 {
    let cov = state.cov();
    let n = state.n_modes();
    let mut scale: f64 = (0..n)
        .map(|j| cov.b()[j] + cov.c()[j].norm() + state.xi()[j].norm_sqr())
        .sum();
    for j in 0..n {
        for k in (j + 1)..n {
            scale += 2.0 * (cov.d(j, k).norm() + cov.d_bar(j, k).norm());
        }
    }
    0.1 / (1.0 + scale)
}

/// `(-1)^{sum k} d^{k_1 + ...} G / d lambda^k` at zero: the raw moment
/// `<W_1^{k_1} ... W_N^{k_N}>`.
pub fn fd_moment_oracle(state: &GaussianCombState, orders: &[u32], h: f64) -> Result<FdEstimate> {
    check_orders(state, orders, h)?;
    fd_partial(&|l: &[f64]| Ok(log_gf(state, l)?.exp()), orders, h)
}

/// Same stencil applied to `ln G`, giving cumulants: means at first order,
/// variances and covariances at second order.
pub fn fd_cumulant_oracle(state: &GaussianCombState, orders: &[u32], h: f64) -> Result<FdEstimate> {
    check_orders(state, orders, h)?;
    fd_partial(&|l: &[f64]| log_gf(state, l), orders, h)
}

/// Differentiates with one `lambda` per arm (shared by every mode of that
/// arm), giving arm moments `<W_s^{k_s} W_i^{k_i}>` (or cumulants).
pub fn fd_arm_oracle(
    state: &GaussianCombState,
    bipartition: &Bipartition,
    orders: (u32, u32),
    h: f64,
    cumulant: bool,
) -> Result<FdEstimate> {
    bipartition.check_modes(state.n_modes())?;
    let n = state.n_modes();
    let arm_lambda = |l: &[f64]| {
        let mut full = vec![0.0; n];
        bipartition.signal().iter().for_each(|&j| full[j] = l[0]);
        bipartition.idler().iter().for_each(|&j| full[j] = l[1]);
        full
    };
    let ords = [orders.0, orders.1];
    check_orders_generic(&ords, h)?;
    if cumulant {
        fd_partial(&|l: &[f64]| log_gf(state, &arm_lambda(l)), &ords, h)
    } else {
        fd_partial(&|l: &[f64]| Ok(log_gf(state, &arm_lambda(l))?.exp()), &ords, h)
    }
}

fn check_orders(state: &GaussianCombState, orders: &[u32], h: f64) -> Result<()> {
    if orders.len() != state.n_modes() {
        return structure(format!(
            "orders has {} entries, state has {} modes",
            orders.len(),
            state.n_modes()
        ));
    }
    check_orders_generic(orders, h)
}

fn check_orders_generic(orders: &[u32], h: f64) -> Result<()> {
    let total: u32 = orders.iter().sum();
    if total > 4 {
        return domain(format!("total moment order {total} exceeds 4"));
    }
    if !(h > 0.0) || !h.is_finite() {
        return domain(format!("finite-difference step {h} must be positive"));
    }
    Ok(())
}

/// Central-difference stencil `(offset in units of h, weight)`; every entry
/// has an even error expansion in `h`, starting at `h^2`.
fn stencil(order: u32) -> &'static [(f64, f64)] {
    match order {
        0 => &[(0.0, 1.0)],
        1 => &[(-1.0, -0.5), (1.0, 0.5)],
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        3 => &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        4 => &[(-2.0, 1.0), (-1.0, -4.0), (0.0, 6.0), (1.0, -4.0), (2.0, 1.0)],
        _ => unreachable!("orders above 4 are rejected earlier"),
    }
}

fn central_difference(f: &dyn Fn(&[f64]) -> Result<f64>, orders: &[u32], h: f64) -> Result<f64> {
    let active: Vec<usize> = (0..orders.len()).filter(|&v| orders[v] > 0).collect();
    let stencils: Vec<_> = active.iter().map(|&v| stencil(orders[v])).collect();
    let mut point = vec![0.0; orders.len()];
    let mut idx = vec![0usize; active.len()];
    let mut sum = 0.0;
    loop {
        let mut weight = 1.0;
        for (a, &v) in active.iter().enumerate() {
            let (off, w) = stencils[a][idx[a]];
            point[v] = off * h;
            weight *= w;
        }
        sum += weight * f(&point)?;
        // odometer over the tensor-product stencil
        let mut a = 0;
        loop {
            if a == active.len() {
                let total: u32 = orders.iter().sum();
                let sign = if total.is_multiple_of(2) { 1.0 } else { -1.0 };
                return Ok(sign * sum / h.powi(total as i32));
            }
            idx[a] += 1;
            if idx[a] < stencils[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// Sweeps the step over two decades, Richardson-extrapolates consecutive
/// pairs and keeps the pair of extrapolants that agree best.
fn fd_partial(f: &dyn Fn(&[f64]) -> Result<f64>, orders: &[u32], h: f64) -> Result<FdEstimate> {
    if orders.iter().all(|&k| k == 0) {
        return Ok(FdEstimate {
            value: f(&vec![0.0; orders.len()])?,
            spread: 0.0,
            reliable: true,
        });
    }
    const STEPS: i32 = 9;
    let ratio = 10f64.powf(0.25);
    let r2 = ratio * ratio;
    let raw = (0..STEPS)
        .map(|k| central_difference(f, orders, h * ratio.powi(-k)))
        .collect::<Result<Vec<f64>>>()?;
    let rich: Vec<f64> = raw.windows(2).map(|w| (r2 * w[1] - w[0]) / (r2 - 1.0)).collect();
    let (best, spread) = rich
        .windows(2)
        .enumerate()
        .map(|(k, w)| (k, (w[1] - w[0]).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least two extrapolants");
    let value = 0.5 * (rich[best] + rich[best + 1]);
    Ok(FdEstimate {
        value,
        spread,
        reliable: spread <= FD_RELIABILITY_TOL * value.abs().max(1e-12),
    })
}
