//! Oracles shared by the integration tests. None of them call into the
//! library's own exponential or covariance code.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qofc::dynamics::{comb_nonoverlapping, comb_overlapping, propagate_seed, CombTopology};
use qofc::state::{GaussianCombState, C64};
use rand::Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

pub fn close(got: f64, want: f64, rel: f64, abs: f64) -> bool {
    (got - want).abs() <= rel * want.abs() + abs
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    DMatrix::from_fn(ar * br, ac * bc, |r, s| a[(r / br, s / bc)] * b[(r % br, s % bc)])
}

/// `i t M` with `M = g hollow(N) (x) [[0, 1], [-1, 0]]`, built from the
/// Kronecker product rather than entry by entry.
pub fn overlap_generator(n: usize, gt: f64) -> DMatrix<C64> {
    let hollow = DMatrix::from_fn(n, n, |r, s| if r == s { 0.0 } else { 1.0 });
    let l = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    kron(&hollow, &l).map(|v| c(0.0, v * gt))
}

/// Generator for independent pairs `(2p, 2p+1)` with couplings `g_p`.
pub fn pairs_generator(couplings: &[f64]) -> DMatrix<C64> {
    let n = 2 * couplings.len();
    let mut adj = DMatrix::zeros(n, n);
    for (p, &g) in couplings.iter().enumerate() {
        adj[(2 * p, 2 * p + 1)] = g;
        adj[(2 * p + 1, 2 * p)] = g;
    }
    let l = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    kron(&adj, &l).map(|v| c(0.0, v))
}

/// `exp(G)` by scaling and squaring around a 30-term Taylor series.
pub fn dense_expm(g: &DMatrix<C64>) -> DMatrix<C64> {
    let norm = max_abs(g) * g.nrows() as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = g / c(2f64.powi(squarings as i32), 0.0);
    let dim = g.nrows();
    let mut sum = DMatrix::<C64>::identity(dim, dim);
    let mut term = sum.clone();
    for k in 1..=30 {
        term = &term * &scaled / c(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Normally ordered moments of vacuum evolved by `S`. Row `2j` of `S`
/// expresses `a_j(t) = sum_k U_jk a_k + V_jk a_k^dag`, so
/// `<a_j^dag a_l> = sum_k V_jk^* V_lk` and `<a_j a_l> = sum_k U_jk V_lk`.
pub struct Bogoliubov {
    pub b: Vec<f64>,
    pub c: Vec<C64>,
    pub d: DMatrix<C64>,
    pub d_bar: DMatrix<C64>,
}

pub fn bogoliubov(s: &DMatrix<C64>) -> Bogoliubov {
    let n = s.nrows() / 2;
    let u = DMatrix::from_fn(n, n, |j, k| s[(2 * j, 2 * k)]);
    let v = DMatrix::from_fn(n, n, |j, k| s[(2 * j, 2 * k + 1)]);
    let d = DMatrix::from_fn(n, n, |j, l| (0..n).map(|k| u[(j, k)] * v[(l, k)]).sum::<C64>());
    let d_bar = DMatrix::from_fn(n, n, |j, l| (0..n).map(|k| v[(j, k)].conj() * v[(l, k)]).sum::<C64>());
    Bogoliubov {
        b: (0..n).map(|j| d_bar[(j, j)].re).collect(),
        c: (0..n).map(|j| d[(j, j)]).collect(),
        d,
        d_bar,
    }
}

/// `S Xi` for the interleaved seed vector, read back as amplitudes.
pub fn apply_to_seed(s: &DMatrix<C64>, xi: &[C64]) -> Vec<C64> {
    let v = nalgebra::DVector::from_iterator(2 * xi.len(), xi.iter().flat_map(|z| [*z, z.conj()]));
    let out = s * v;
    (0..xi.len()).map(|k| out[2 * k]).collect()
}

pub fn random_complex(rng: &mut impl Rng, scale: f64) -> C64 {
    c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

/// Random state from either topology, optionally seeded and noisy.
pub fn random_state(rng: &mut impl Rng) -> GaussianCombState {
    let (state, topo) = if rng.gen_bool(0.5) {
        let pairs = rng.gen_range(1..=2);
        let gains: Vec<f64> = (0..pairs).map(|_| rng.gen_range(0.01..1.5)).collect();
        (
            comb_nonoverlapping(&gains).unwrap(),
            CombTopology::pairs_from_gains(&gains).unwrap(),
        )
    } else {
        let n = rng.gen_range(2..=4);
        let gt = rng.gen_range(0.01..0.4);
        (comb_overlapping(n, gt).unwrap(), CombTopology::overlapping(n, gt))
    };
    let n = state.n_modes();
    let mut state = state;
    if rng.gen_bool(0.6) {
        let xi0: Vec<C64> = (0..n).map(|_| random_complex(rng, 1.0)).collect();
        let xi = propagate_seed(&topo, 1.0, &xi0).unwrap();
        state = state.with_xi(xi).unwrap();
    }
    if rng.gen_bool(0.5) {
        let noise: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.8)).collect();
        state = state.add_thermal_noise(&noise).unwrap();
    }
    state
}
