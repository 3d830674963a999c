//! Comb states from a coupling topology and an interaction time.
//!
//! The Heisenberg equations read `dA/dt = i M A` with
//! `A = (a_1, a_1^dag, ..., a_N, a_N^dag)`. A pair `(s, i)` with coupling `g`
//! contributes `M[a_s, a_i^dag] = M[a_i, a_s^dag] = g` and
//! `M[a_s^dag, a_i] = M[a_i^dag, a_s] = -g`. The fully overlapping comb couples
//! every pair with the same `g`, i.e. `M = g * hollow(N) (x) [[0, 1], [-1, 0]]`
//! in the interleaved ordering.
//!
//! Closed forms are used for the twin beam and for the covariance elements
//! of the overlapping comb. The overlapping-comb propagator itself is only
//! ever computed numerically: the closed form for its entries found in the
//! literature does not reduce to the single-pair result at `N = 2` under the
//! obvious reading of its indices, so it is not relied upon.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, structure, Error, Result};
use crate::state::{CovarianceBlocks, GaussianCombState, Provenance, C64};

pub const DEFAULT_GT_CAP: f64 = 25.0;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledPair {
    pub signal: usize,
    pub idler: usize,
    /// Coupling rate `g`; with `t = 1` this is the product `g t`.
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CombTopology {
    /// Independent signal/idler pairs.
    NonOverlapping { pairs: Vec<CoupledPair> },
    /// Every mode coupled to every other mode with the same rate.
    FullyOverlapping { n_modes: usize, coupling: f64 },
}

impl CombTopology {
    /// Pairs `(2n, 2n+1)` whose couplings reproduce the pair gains
    /// `B_p,n = sinh^2(g_n)` at `t = 1`.
    pub fn pairs_from_gains(gains: &[f64]) -> Result<Self> {
        if gains.is_empty() {
            return domain("at least one pair gain is required");
        }
        let pairs = gains
            .iter()
            .enumerate()
            .map(|(n, &b)| {
                if !(b >= 0.0) || !b.is_finite() {
                    return domain(format!("pair gain B_p,{n} = {b} must be finite and non-negative"));
                }
                Ok(CoupledPair {
                    signal: 2 * n,
                    idler: 2 * n + 1,
                    coupling: gt_for_pair_gain(b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CombTopology::NonOverlapping { pairs })
    }

    pub fn overlapping(n_modes: usize, gt: f64) -> Self {
        CombTopology::FullyOverlapping { n_modes, coupling: gt }
    }

    pub fn n_modes(&self) -> usize {
        match self {
            CombTopology::NonOverlapping { pairs } => 2 * pairs.len(),
            CombTopology::FullyOverlapping { n_modes, .. } => *n_modes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CombTopology::NonOverlapping { pairs } => {
                if pairs.is_empty() {
                    return structure("a pair topology needs at least one pair");
                }
                let n = 2 * pairs.len();
                let mut seen = vec![false; n];
                for p in pairs {
                    for k in [p.signal, p.idler] {
                        if k >= n || seen[k] {
                            return structure(format!(
                                "pairs must form a perfect pairing of modes 0..{n}; index {k} is out of range or repeated"
                            ));
                        }
                        seen[k] = true;
                    }
                    if !(p.coupling >= 0.0) || !p.coupling.is_finite() {
                        return domain(format!("pair coupling {} must be finite and non-negative", p.coupling));
                    }
                }
                Ok(())
            }
            CombTopology::FullyOverlapping { n_modes, coupling } => {
                if *n_modes < 2 {
                    return domain(format!("an overlapping comb needs N >= 2 modes, got {n_modes}"));
                }
                if !(*coupling >= 0.0) || !coupling.is_finite() {
                    return domain(format!("overlap coupling {coupling} must be finite and non-negative"));
                }
                Ok(())
            }
        }
    }

    fn max_coupling(&self) -> f64 {
        match self {
            CombTopology::NonOverlapping { pairs } => pairs.iter().map(|p| p.coupling).fold(0.0, f64::max),
            CombTopology::FullyOverlapping { coupling, .. } => *coupling,
        }
    }
}

/// `B_p = sinh^2(g t)`.
pub fn pair_gain(gt: f64) -> f64 {
    gt.sinh().powi(2)
}

/// Inverse of [`pair_gain`].
pub fn gt_for_pair_gain(b_p: f64) -> f64 {
    b_p.sqrt().asinh()
}

pub fn evolution_matrix(topology: &CombTopology) -> Result<DMatrix<C64>> {
    topology.validate()?;
    let n = topology.n_modes();
    let mut m = DMatrix::from_element(2 * n, 2 * n, ZERO);
    let mut couple = |j: usize, l: usize, g: f64| {
        m[(2 * j, 2 * l + 1)] = C64::new(g, 0.0);
        m[(2 * j + 1, 2 * l)] = C64::new(-g, 0.0);
    };
    match topology {
        CombTopology::NonOverlapping { pairs } => {
            for p in pairs {
                couple(p.signal, p.idler, p.coupling);
                couple(p.idler, p.signal, p.coupling);
            }
        }
        CombTopology::FullyOverlapping { n_modes, coupling } => {
            for j in 0..*n_modes {
                for l in (0..*n_modes).filter(|&l| l != j) {
                    couple(j, l, *coupling);
                }
            }
        }
    }
    Ok(m)
}

/// Constructors that share a cap on `g t`.
#[derive(Debug, Clone, Copy)]
pub struct Dynamics {
    pub gt_cap: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self { gt_cap: DEFAULT_GT_CAP }
    }
}

impl Dynamics {
    fn check_gt(&self, gt: f64) -> Result<()> {
        if !(gt >= 0.0) || !gt.is_finite() {
            return domain(format!("g t = {gt} must be finite and non-negative"));
        }
        if gt > self.gt_cap {
            return domain(format!("g t = {gt} exceeds the cap {}", self.gt_cap));
        }
        Ok(())
    }

    fn check_time(&self, topology: &CombTopology, t: f64) -> Result<()> {
        topology.validate()?;
        if !(t >= 0.0) || !t.is_finite() {
            return domain(format!("interaction time {t} must be finite and non-negative"));
        }
        self.check_gt(topology.max_coupling() * t)
    }

    /// `S = exp(i M t)` by scaling and squaring.
    pub fn propagator(&self, topology: &CombTopology, t: f64) -> Result<DMatrix<C64>> {
        self.check_time(topology, t)?;
        let generator = evolution_matrix(topology)? * C64::new(0.0, t);
        let s = generator.exp();
        ensure_finite(s.iter(), "propagator")?;
        Ok(s)
    }

    /// `Xi(t) = S Xi(0)` with `Xi = (xi_1, xi_1^*, ...)`, evaluated as the
    /// action of the exponential on the vector (no dense `S` is formed).
    pub fn propagate_seed(&self, topology: &CombTopology, t: f64, xi0: &[C64]) -> Result<Vec<C64>> {
        self.check_time(topology, t)?;
        let n = topology.n_modes();
        if xi0.len() != n {
            return structure(format!("seed has {} entries, topology has {n} modes", xi0.len()));
        }
        if xi0.iter().all(|z| *z == ZERO) {
            return Ok(vec![ZERO; n]);
        }
        if let CombTopology::NonOverlapping { pairs } = topology {
            // pairs do not talk to each other; propagate each on its own block
            let mut out = vec![ZERO; n];
            for p in pairs {
                let local = CombTopology::NonOverlapping {
                    pairs: vec![CoupledPair {
                        signal: 0,
                        idler: 1,
                        coupling: p.coupling,
                    }],
                };
                let generator = evolution_matrix(&local)? * C64::new(0.0, t);
                let v = expm_action(&generator, &interleave(&[xi0[p.signal], xi0[p.idler]]));
                ensure_finite(v.iter(), "propagated seed")?;
                let [s, i] = deinterleave(&v)?[..] else {
                    unreachable!("two modes in, two out")
                };
                out[p.signal] = s;
                out[p.idler] = i;
            }
            return Ok(out);
        }
        let generator = evolution_matrix(topology)? * C64::new(0.0, t);
        let out = expm_action(&generator, &interleave(xi0));
        ensure_finite(out.iter(), "propagated seed")?;
        deinterleave(&out)
    }

    /// Numerically evolves an arbitrary state:
    /// `A(t) = S (A(0) + I/2) S^dag - I/2`, `Xi(t) = S Xi(0)`.
    pub fn evolve_state(
        &self,
        state: &GaussianCombState,
        topology: &CombTopology,
        t: f64,
    ) -> Result<GaussianCombState> {
        if state.n_modes() != topology.n_modes() {
            return structure(format!(
                "state has {} modes, topology has {}",
                state.n_modes(),
                topology.n_modes()
            ));
        }
        let s = self.propagator(topology, t)?;
        let dim = s.nrows();
        let half = DMatrix::<C64>::identity(dim, dim) * C64::new(0.5, 0.0);
        let a = &s * (state.full_matrix() + &half) * s.adjoint() - half;
        let xi = deinterleave(&(&s * interleave(state.xi())))?;
        let meta = Provenance {
            source: "numerical propagation".into(),
            topology: Some(topology.clone()),
            gt: Some(topology.max_coupling() * t),
            ..state.meta().clone()
        };
        Ok(GaussianCombState::new(CovarianceBlocks::from_full_matrix(&a)?, xi)?.with_meta(meta))
    }

    pub fn twin_beam_state(&self, b_p: f64) -> Result<GaussianCombState> {
        if !(b_p >= 0.0) || !b_p.is_finite() {
            return domain(format!("B_p = {b_p} must be finite and non-negative"));
        }
        let gt = gt_for_pair_gain(b_p);
        self.check_gt(gt)?;
        let mut d = DMatrix::from_element(2, 2, ZERO);
        d[(0, 1)] = C64::new(0.0, (b_p * (b_p + 1.0)).sqrt());
        let cov = CovarianceBlocks::new(vec![b_p, b_p], vec![ZERO; 2], d, DMatrix::from_element(2, 2, ZERO))?;
        let meta = Provenance {
            source: "twin beam".into(),
            topology: Some(CombTopology::NonOverlapping {
                pairs: vec![CoupledPair {
                    signal: 0,
                    idler: 1,
                    coupling: gt,
                }],
            }),
            gt: Some(gt),
            ..Provenance::default()
        };
        Ok(GaussianCombState::new(cov, vec![ZERO; 2])?.with_meta(meta))
    }

    /// Independent twin beams, modes ordered `(s_1, i_1, s_2, i_2, ...)`.
    pub fn comb_nonoverlapping(&self, gains: &[f64]) -> Result<GaussianCombState> {
        let topology = CombTopology::pairs_from_gains(gains)?;
        let n = 2 * gains.len();
        let mut b = vec![0.0; n];
        let mut d = DMatrix::from_element(n, n, ZERO);
        for (p, &g) in gains.iter().enumerate() {
            self.check_gt(gt_for_pair_gain(g))?;
            b[2 * p] = g;
            b[2 * p + 1] = g;
            d[(2 * p, 2 * p + 1)] = C64::new(0.0, (g * (g + 1.0)).sqrt());
        }
        let cov = CovarianceBlocks::new(b, vec![ZERO; n], d, DMatrix::from_element(n, n, ZERO))?;
        let meta = Provenance {
            source: "non-overlapping comb".into(),
            topology: Some(topology),
            gt: Some(1.0),
            ..Provenance::default()
        };
        Ok(GaussianCombState::new(cov, vec![ZERO; n])?.with_meta(meta))
    }

    pub fn overlap_elements(&self, n_modes: usize, gt: f64) -> Result<OverlapElements> {
        if n_modes < 2 {
            return domain(format!("an overlapping comb needs N >= 2 modes, got {n_modes}"));
        }
        self.check_gt(gt)?;
        let el = OverlapElements::compute(n_modes, gt);
        ensure_finite(
            [C64::new(el.b, 0.0), el.c, el.d, C64::new(el.d_bar, 0.0)].iter(),
            "overlap covariance elements",
        )?;
        Ok(el)
    }

    pub fn comb_overlapping(&self, n_modes: usize, gt: f64) -> Result<GaussianCombState> {
        self.overlap_elements(n_modes, gt)?.state()
    }
}

pub fn propagator(topology: &CombTopology, t: f64) -> Result<DMatrix<C64>> {
    Dynamics::default().propagator(topology, t)
}

pub fn propagate_seed(topology: &CombTopology, t: f64, xi0: &[C64]) -> Result<Vec<C64>> {
    Dynamics::default().propagate_seed(topology, t, xi0)
}

pub fn twin_beam_state(b_p: f64) -> Result<GaussianCombState> {
    Dynamics::default().twin_beam_state(b_p)
}

pub fn comb_nonoverlapping(gains: &[f64]) -> Result<GaussianCombState> {
    Dynamics::default().comb_nonoverlapping(gains)
}

pub fn comb_overlapping(n_modes: usize, gt: f64) -> Result<GaussianCombState> {
    Dynamics::default().comb_overlapping(n_modes, gt)
}

/// Vacuum propagated numerically through `exp(i M t)`.
pub fn propagate_vacuum(topology: &CombTopology, t: f64) -> Result<GaussianCombState> {
    Dynamics::default().evolve_state(&GaussianCombState::vacuum(topology.n_modes()), topology, t)
}

/// The four covariance elements shared by all modes (and all mode pairs) of
/// the fully overlapping comb.
///
/// `D_jk` uses a unit weight on `sinh(2gt)`; this is what the spectral
/// decomposition of the hollow coupling matrix gives, and it agrees with the
/// numerical exponential for every `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapElements {
    pub n_modes: usize,
    pub gt: f64,
    pub b: f64,
    pub c: C64,
    pub d: C64,
    pub d_bar: f64,
}

impl OverlapElements {
    fn compute(n_modes: usize, gt: f64) -> Self {
        let n = n_modes as f64;
        let wide = (n - 1.0) * gt;
        // cosh(2x) - 1 = 2 sinh^2(x) keeps B accurate for small gt.
        let b = (wide.sinh().powi(2) + (n - 1.0) * gt.sinh().powi(2)) / n;
        let c = C64::new(0.0, ((2.0 * wide).sinh() - (n - 1.0) * (2.0 * gt).sinh()) / (2.0 * n));
        let d = C64::new(0.0, ((2.0 * wide).sinh() + (2.0 * gt).sinh()) / (2.0 * n));
        let d_bar = (wide.sinh().powi(2) - gt.sinh().powi(2)) / n;
        Self {
            n_modes,
            gt,
            b,
            c,
            d,
            d_bar,
        }
    }

    pub fn state(&self) -> Result<GaussianCombState> {
        self.state_on(self.n_modes)
    }

    /// The marginal over any `k` of the `N` modes; all such marginals are
    /// identical because the modes are equivalent.
    pub fn state_on(&self, k: usize) -> Result<GaussianCombState> {
        if k == 0 || k > self.n_modes {
            return domain(format!("cannot take {k} of {} overlap modes", self.n_modes));
        }
        let d = DMatrix::from_fn(k, k, |r, s| if r == s { ZERO } else { self.d });
        let d_bar = DMatrix::from_fn(k, k, |r, s| if r == s { ZERO } else { C64::new(self.d_bar, 0.0) });
        let cov = CovarianceBlocks::new(vec![self.b; k], vec![self.c; k], d, d_bar)?;
        let meta = Provenance {
            source: "overlapping comb".into(),
            topology: Some(CombTopology::overlapping(self.n_modes, self.gt)),
            gt: Some(self.gt),
            modes: (k < self.n_modes).then(|| (0..k).collect()),
            ..Provenance::default()
        };
        Ok(GaussianCombState::new(cov, vec![ZERO; k])?.with_meta(meta))
    }
}

/// Finds `g t` such that the per-mode `B` of the overlapping comb equals
/// `b_target`. `B(gt)` is increasing, so plain bisection suffices.
pub fn overlap_gt_for_mean(n_modes: usize, b_target: f64) -> Result<f64> {
    if n_modes < 2 {
        return domain(format!("an overlapping comb needs N >= 2 modes, got {n_modes}"));
    }
    if !(b_target >= 0.0) || !b_target.is_finite() {
        return domain(format!("target B = {b_target} must be finite and non-negative"));
    }
    if b_target == 0.0 {
        return Ok(0.0);
    }
    let b_of = |gt: f64| OverlapElements::compute(n_modes, gt).b;
    let mut hi = 1.0 / n_modes as f64;
    while b_of(hi) < b_target {
        hi *= 2.0;
        if hi > DEFAULT_GT_CAP {
            return domain(format!(
                "B = {b_target} is beyond the reachable range for N = {n_modes}"
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if b_of(mid) < b_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub(crate) fn interleave(xi: &[C64]) -> DVector<C64> {
    DVector::from_iterator(2 * xi.len(), xi.iter().flat_map(|z| [*z, z.conj()]))
}

/// Reads `xi_k` back from an interleaved vector, checking that every odd
/// entry is the conjugate of the preceding even entry.
pub(crate) fn deinterleave(v: &DVector<C64>) -> Result<Vec<C64>> {
    let scale = v.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let mut out = Vec::with_capacity(v.len() / 2);
    for k in 0..v.len() / 2 {
        let (a, b) = (v[2 * k], v[2 * k + 1]);
        if (a - b.conj()).norm() > 1e-12 * scale {
            return Err(Error::Invariant(format!(
                "conjugate pair {k} inconsistent: {a} vs conj({b})"
            )));
        }
        out.push(0.5 * (a + b.conj()));
    }
    Ok(out)
}

/// `exp(G) v` by a truncated Taylor series, split into enough substeps that
/// each substep's generator has 1-norm at most one.
fn expm_action(generator: &DMatrix<C64>, v: &DVector<C64>) -> DVector<C64> {
    let norm1 = (0..generator.ncols())
        .map(|c| generator.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let steps = norm1.ceil().max(1.0) as usize;
    let g = generator / C64::new(steps as f64, 0.0);
    let mut out = v.clone();
    for _ in 0..steps {
        let mut term = out.clone();
        let mut sum = out.clone();
        for k in 1..=60 {
            term = &g * term / C64::new(k as f64, 0.0);
            sum += &term;
            if term.norm() <= 1e-18 * sum.norm() {
                break;
            }
        }
        out = sum;
    }
    out
}

fn ensure_finite<'a>(mut values: impl Iterator<Item = &'a C64>, what: &str) -> Result<()> {
    if values.all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} overflowed; reduce g t")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn overlap_n2_matrix() {
        let m = evolution_matrix(&CombTopology::overlapping(2, 0.7)).unwrap();
        assert_eq!(m[(0, 3)], C64::new(0.7, 0.0));
        assert_eq!(m[(2, 1)], C64::new(0.7, 0.0));
        assert_eq!(m[(1, 2)], C64::new(-0.7, 0.0));
        assert_eq!(m[(3, 0)], C64::new(-0.7, 0.0));
        for k in 0..4 {
            assert_eq!(m[(k, k)], ZERO);
        }
        assert_eq!(m.iter().filter(|z| **z != ZERO).count(), 4);

        let pair = CombTopology::NonOverlapping {
            pairs: vec![CoupledPair {
                signal: 0,
                idler: 1,
                coupling: 0.7,
            }],
        };
        assert_eq!(evolution_matrix(&pair).unwrap(), m);
    }

    #[test]
    fn hollow_structure_n3() {
        let m = evolution_matrix(&CombTopology::overlapping(3, 1.0)).unwrap();
        // The a-row/a^dag-column pattern is the hollow matrix itself.
        let hollow = DMatrix::from_fn(3, 3, |j, l| m[(2 * j, 2 * l + 1)].re);
        assert_eq!(hollow.diagonal().iter().filter(|x| **x != 0.0).count(), 0);
        assert_eq!(hollow.iter().filter(|x| **x == 1.0).count(), 6);
    }

    #[test]
    fn topology_validation() {
        let bad = CombTopology::NonOverlapping {
            pairs: vec![
                CoupledPair {
                    signal: 0,
                    idler: 1,
                    coupling: 0.1,
                },
                CoupledPair {
                    signal: 1,
                    idler: 2,
                    coupling: 0.1,
                },
            ],
        };
        assert!(matches!(bad.validate(), Err(Error::Structure(_))));
        assert!(CombTopology::overlapping(1, 0.1).validate().is_err());
        assert!(CombTopology::overlapping(3, -0.1).validate().is_err());
    }

    #[test]
    fn propagator_identity_at_zero() {
        let s = propagator(&CombTopology::overlapping(3, 1.0), 0.0).unwrap();
        assert_eq!(s, DMatrix::identity(6, 6));
    }

    #[test]
    fn propagator_pair_row() {
        let pair = CombTopology::NonOverlapping {
            pairs: vec![CoupledPair {
                signal: 0,
                idler: 1,
                coupling: 1.0,
            }],
        };
        let s = propagator(&pair, 1f64.asinh()).unwrap();
        let want = [C64::new(2f64.sqrt(), 0.0), ZERO, ZERO, C64::new(0.0, 1.0)];
        for (k, w) in want.iter().enumerate() {
            assert!(close(s[(0, k)], *w, 1e-12), "S[0,{k}] = {}", s[(0, k)]);
        }
    }

    #[test]
    fn propagator_semigroup() {
        let topo = CombTopology::overlapping(4, 1.0);
        let s1 = propagator(&topo, 0.13).unwrap();
        let s2 = propagator(&topo, 0.29).unwrap();
        let s12 = propagator(&topo, 0.42).unwrap();
        assert!((s12 - s1 * s2).camax() < 1e-9);
    }

    #[test]
    fn gt_cap_fails_loudly() {
        assert!(matches!(comb_overlapping(3, 30.0), Err(Error::Domain(_))));
        let loose = Dynamics { gt_cap: 40.0 };
        assert!(loose.comb_overlapping(3, 30.0).is_ok());
        // Within the cap but large N still overflows; this must be an error.
        assert!(Dynamics::default().comb_overlapping(100, 20.0).is_err());
        assert!(propagator(&CombTopology::overlapping(2, 1.0), 26.0).is_err());
    }

    #[test]
    fn twin_beam_values() {
        let vac = twin_beam_state(0.0).unwrap();
        assert!(vac.full_matrix().iter().all(|z| *z == ZERO));

        let s = twin_beam_state(1.0).unwrap();
        assert_eq!(s.cov().b(), &[1.0, 1.0]);
        assert_eq!(s.cov().d(0, 1), C64::new(0.0, 2f64.sqrt()));
        assert_eq!(s.cov().c(), &[ZERO, ZERO]);
        assert!(matches!(twin_beam_state(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn twin_beam_matches_propagated_vacuum() {
        for b_p in [0.0, 0.01, 0.5, 1.0, 3.0, 10.0] {
            let analytic = twin_beam_state(b_p).unwrap();
            let pair = CombTopology::NonOverlapping {
                pairs: vec![CoupledPair {
                    signal: 0,
                    idler: 1,
                    coupling: 1.0,
                }],
            };
            let numeric = propagate_vacuum(&pair, gt_for_pair_gain(b_p)).unwrap();
            let diff = (analytic.full_matrix() - numeric.full_matrix()).camax();
            assert!(diff < 1e-12 * (1.0 + b_p), "B_p = {b_p}: {diff}");
        }
    }

    #[test]
    fn nonoverlapping_comb_structure() {
        assert_eq!(
            comb_nonoverlapping(&[1.0]).unwrap().cov(),
            twin_beam_state(1.0).unwrap().cov()
        );
        assert!(comb_nonoverlapping(&[]).is_err());
        assert!(comb_nonoverlapping(&[0.1, -0.2]).is_err());

        let s = comb_nonoverlapping(&[0.1, 0.4, 0.9]).unwrap();
        let swapped = comb_nonoverlapping(&[0.9, 0.4, 0.1]).unwrap();
        // Permuting pair order permutes the blocks.
        let perm = [4, 5, 2, 3, 0, 1];
        assert_eq!(s.restrict(&perm).unwrap().cov(), swapped.cov());
        assert_eq!(s.cov().d(0, 3), ZERO);
        assert_eq!(s.cov().d(1, 2), ZERO);
    }

    #[test]
    fn overlap_n2_is_twin_beam() {
        let gt = 1f64.asinh();
        let s = comb_overlapping(2, gt).unwrap();
        let t = twin_beam_state(1.0).unwrap();
        assert!((s.full_matrix() - t.full_matrix()).camax() < 1e-12);
        assert!(comb_overlapping(1, 0.1).is_err());
        assert!(comb_overlapping(5, 0.0)
            .unwrap()
            .full_matrix()
            .iter()
            .all(|z| z.norm() == 0.0));
    }

    #[test]
    fn overlap_restricted_marginal() {
        let el = Dynamics::default().overlap_elements(5, 0.2).unwrap();
        let full = el.state().unwrap();
        let part = el.state_on(2).unwrap();
        assert_eq!(full.restrict(&[3, 1]).unwrap().cov(), part.cov());
    }

    #[test]
    fn gt_inversion() {
        for n in [2, 3, 100] {
            for b in [1e-6, 0.3, 1.0] {
                let gt = overlap_gt_for_mean(n, b).unwrap();
                let got = OverlapElements::compute(n, gt).b;
                assert!((got - b).abs() < 1e-14 * (1.0 + b), "N={n} B={b}: {got}");
            }
        }
        assert_eq!(overlap_gt_for_mean(10, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn seed_through_pair() {
        let pair = CombTopology::NonOverlapping {
            pairs: vec![CoupledPair {
                signal: 0,
                idler: 1,
                coupling: 1.0,
            }],
        };
        let xi = propagate_seed(&pair, 1f64.asinh(), &[C64::new(1.0, 0.0), ZERO]).unwrap();
        assert!(close(xi[0], C64::new(2f64.sqrt(), 0.0), 1e-12));
        assert!(close(xi[1], C64::new(0.0, 1.0), 1e-12));
        assert_eq!(propagate_seed(&pair, 0.5, &[ZERO, ZERO]).unwrap(), vec![ZERO, ZERO]);
        assert!(propagate_seed(&pair, 0.5, &[ZERO]).is_err());
    }

    #[test]
    fn seed_matches_dense_propagator() {
        let topo = CombTopology::overlapping(6, 1.0);
        let t = 0.37;
        let xi0: Vec<C64> = (0..6)
            .map(|k| C64::new(0.3 * k as f64 - 0.5, 0.1 * (k * k) as f64))
            .collect();
        let via_action = propagate_seed(&topo, t, &xi0).unwrap();
        let s = propagator(&topo, t).unwrap();
        let dense = deinterleave(&(s * interleave(&xi0))).unwrap();
        for (a, b) in via_action.iter().zip(&dense) {
            assert!(close(*a, *b, 1e-12 * (1.0 + b.norm())));
        }
    }
}
