//! Normally-ordered Gaussian comb states.
//!
//! A state is stored as its covariance blocks plus the coherent amplitudes
//! of every mode. The full `2N x 2N` matrix is only assembled on demand, in
//! the interleaved ordering `(a_1, a_1^dag, a_2, a_2^dag, ...)`. With that
//! ordering the matrix is `<: dA dA^dag :>`:
//!
//! ```text
//! A_k  = [ B_k    C_k ]      A_jl = [ Dbar_jl^*  D_jl    ]
//!        [ C_k^*  B_k ]             [ D_jl^*     Dbar_jl ]
//! ```

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::CombTopology;
use crate::error::{domain, structure, Error, Result};

pub type C64 = Complex64;

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const PHYSICALITY_TOL: f64 = 1e-9;
/// Lowest eigenvalue a Gaussian state's normally-ordered matrix can reach.
pub const GAUSSIAN_EIGEN_FLOOR: f64 = -0.5;

pub const SCHEMA_VERSION: u32 = 1;
pub const MODE_ORDERING: &str = "interleaved: a_1, a_1^dag, a_2, a_2^dag, ...";

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBlocks {
    n_modes: usize,
    b: Vec<f64>,
    c: Vec<C64>,
    d: DMatrix<C64>,
    d_bar: DMatrix<C64>,
}

impl CovarianceBlocks {
    /// Builds the blocks from per-mode `b`, `c` and pairwise `d`, `d_bar`.
    ///
    /// Only the strict upper triangles of `d` and `d_bar` are read; the lower
    /// triangles are filled from `D_lj = D_jl` and `Dbar_lj = Dbar_jl^*`.
    pub fn new(b: Vec<f64>, c: Vec<C64>, d: DMatrix<C64>, d_bar: DMatrix<C64>) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return structure("covariance blocks need at least one mode");
        }
        if c.len() != n {
            return structure(format!("c has {} entries, expected {n}", c.len()));
        }
        for (name, m) in [("d", &d), ("d_bar", &d_bar)] {
            if m.nrows() != n || m.ncols() != n {
                return structure(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols()));
            }
        }
        if let Some((k, &bk)) = b.iter().enumerate().find(|(_, bk)| !(**bk >= 0.0) || !bk.is_finite()) {
            return domain(format!("B_{k} = {bk} must be finite and non-negative"));
        }
        let mut d_sym = DMatrix::from_element(n, n, ZERO);
        let mut dbar_sym = DMatrix::from_element(n, n, ZERO);
        for j in 0..n {
            for l in (j + 1)..n {
                d_sym[(j, l)] = d[(j, l)];
                d_sym[(l, j)] = d[(j, l)];
                dbar_sym[(j, l)] = d_bar[(j, l)];
                dbar_sym[(l, j)] = d_bar[(j, l)].conj();
            }
        }
        Ok(Self {
            n_modes: n,
            b,
            c,
            d: d_sym,
            d_bar: dbar_sym,
        })
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self {
            n_modes,
            b: vec![0.0; n_modes],
            c: vec![ZERO; n_modes],
            d: DMatrix::from_element(n_modes, n_modes, ZERO),
            d_bar: DMatrix::from_element(n_modes, n_modes, ZERO),
        }
    }

    /// Reads the blocks back out of an assembled `2N x 2N` matrix.
    ///
    /// Tiny negative `B_k` from round-off (above `-1e-12` relative to the
    /// matrix scale) are clamped to zero.
    pub fn from_full_matrix(a: &DMatrix<C64>) -> Result<Self> {
        if a.nrows() != a.ncols() || !a.nrows().is_multiple_of(2) || a.nrows() == 0 {
            return structure(format!(
                "expected a non-empty 2N x 2N matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            ));
        }
        let n = a.nrows() / 2;
        let scale = a.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        let mut b = Vec::with_capacity(n);
        for k in 0..n {
            let bk = a[(2 * k, 2 * k)].re;
            if bk < 0.0 && bk > -1e-12 * scale {
                b.push(0.0);
            } else {
                b.push(bk);
            }
        }
        let c = (0..n).map(|k| a[(2 * k, 2 * k + 1)]).collect();
        let d = DMatrix::from_fn(n, n, |j, l| a[(2 * j, 2 * l + 1)]);
        let d_bar = DMatrix::from_fn(n, n, |j, l| a[(2 * j + 1, 2 * l + 1)]);
        Self::new(b, c, d, d_bar)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[C64] {
        &self.c
    }

    /// `D_jk`; zero on the diagonal.
    pub fn d(&self, j: usize, k: usize) -> C64 {
        self.d[(j, k)]
    }

    /// `Dbar_jk`; zero on the diagonal.
    pub fn d_bar(&self, j: usize, k: usize) -> C64 {
        self.d_bar[(j, k)]
    }

    pub fn d_matrix(&self) -> &DMatrix<C64> {
        &self.d
    }

    pub fn d_bar_matrix(&self) -> &DMatrix<C64> {
        &self.d_bar
    }

    pub fn assemble_full_matrix(&self) -> DMatrix<C64> {
        let n = self.n_modes;
        let mut a = DMatrix::from_element(2 * n, 2 * n, ZERO);
        for k in 0..n {
            let (bk, ck) = (C64::new(self.b[k], 0.0), self.c[k]);
            a[(2 * k, 2 * k)] = bk;
            a[(2 * k, 2 * k + 1)] = ck;
            a[(2 * k + 1, 2 * k)] = ck.conj();
            a[(2 * k + 1, 2 * k + 1)] = bk;
        }
        for j in 0..n {
            for l in (j + 1)..n {
                let (d, db) = (self.d[(j, l)], self.d_bar[(j, l)]);
                let block = [[db.conj(), d], [d.conj(), db]];
                for (r, row) in block.iter().enumerate() {
                    for (s, &v) in row.iter().enumerate() {
                        a[(2 * j + r, 2 * l + s)] = v;
                        a[(2 * l + s, 2 * j + r)] = v.conj();
                    }
                }
            }
        }
        a
    }

    fn select(&self, modes: &[usize]) -> Self {
        let m = modes.len();
        Self {
            n_modes: m,
            b: modes.iter().map(|&k| self.b[k]).collect(),
            c: modes.iter().map(|&k| self.c[k]).collect(),
            d: DMatrix::from_fn(m, m, |r, s| self.d[(modes[r], modes[s])]),
            d_bar: DMatrix::from_fn(m, m, |r, s| self.d_bar[(modes[r], modes[s])]),
        }
    }
}

pub fn assemble_full_matrix(cov: &CovarianceBlocks) -> DMatrix<C64> {
    cov.assemble_full_matrix()
}

/// Where a state came from. Carried along for output; never read by the
/// moment or identifier code.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<CombTopology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<f64>,
    /// Input seed amplitudes before propagation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed: Vec<C64>,
    /// Accumulated thermal noise per mode; empty means none was added.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise: Vec<f64>,
    /// Indices into the parent state when this state is a restriction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCombState {
    cov: CovarianceBlocks,
    xi: Vec<C64>,
    meta: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub hermiticity_residual: f64,
    pub min_eigenvalue: f64,
    pub physical: bool,
}

impl GaussianCombState {
    pub fn new(cov: CovarianceBlocks, xi: Vec<C64>) -> Result<Self> {
        if xi.len() != cov.n_modes() {
            return structure(format!(
                "xi has {} entries but the state has {} modes",
                xi.len(),
                cov.n_modes()
            ));
        }
        if xi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return domain("coherent amplitudes must be finite");
        }
        Ok(Self {
            cov,
            xi,
            meta: Provenance::default(),
        })
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self {
            cov: CovarianceBlocks::vacuum(n_modes),
            xi: vec![ZERO; n_modes],
            meta: Provenance::default(),
        }
    }

    pub fn with_meta(mut self, meta: Provenance) -> Self {
        self.meta = meta;
        self
    }

    /// Replaces the coherent amplitudes, keeping the covariance.
    pub fn with_xi(self, xi: Vec<C64>) -> Result<Self> {
        let meta = self.meta;
        Ok(Self::new(self.cov, xi)?.with_meta(meta))
    }

    pub fn n_modes(&self) -> usize {
        self.cov.n_modes()
    }

    pub fn cov(&self) -> &CovarianceBlocks {
        &self.cov
    }

    pub fn xi(&self) -> &[C64] {
        &self.xi
    }

    pub fn meta(&self) -> &Provenance {
        &self.meta
    }

    pub fn full_matrix(&self) -> DMatrix<C64> {
        self.cov.assemble_full_matrix()
    }

    /// Superposes thermal noise: `B_k -> B_k + n_k`, everything else kept.
    pub fn add_thermal_noise(&self, n_bar: &[f64]) -> Result<Self> {
        let n = self.n_modes();
        if n_bar.len() != n {
            return structure(format!("noise has {} entries, expected {n}", n_bar.len()));
        }
        if let Some((k, &nk)) = n_bar.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return domain(format!("noise <n_{k}> = {nk} must be finite and non-negative"));
        }
        let mut out = self.clone();
        for (bk, nk) in out.cov.b.iter_mut().zip(n_bar) {
            *bk += nk;
        }
        let acc = if out.meta.noise.is_empty() {
            n_bar.to_vec()
        } else {
            out.meta.noise.iter().zip(n_bar).map(|(a, b)| a + b).collect()
        };
        out.meta.noise = acc;
        Ok(out)
    }

    /// Gaussian marginal over `modes`, in the given order.
    pub fn restrict(&self, modes: &[usize]) -> Result<Self> {
        let n = self.n_modes();
        if modes.is_empty() {
            return domain("cannot restrict to an empty mode set");
        }
        if let Some(&k) = modes.iter().find(|&&k| k >= n) {
            return domain(format!("mode index {k} out of range for {n} modes"));
        }
        if has_duplicates(modes) {
            return domain(format!("mode indices {modes:?} are not distinct"));
        }
        let mut meta = self.meta.clone();
        if !meta.noise.is_empty() {
            meta.noise = modes.iter().map(|&k| meta.noise[k]).collect();
        }
        meta.modes = Some(match &self.meta.modes {
            Some(parent) => modes.iter().map(|&k| parent[k]).collect(),
            None => modes.to_vec(),
        });
        Ok(Self {
            cov: self.cov.select(modes),
            xi: modes.iter().map(|&k| self.xi[k]).collect(),
            meta,
        })
    }

    pub fn validate(&self) -> Diagnostics {
        let a = self.full_matrix();
        let hermiticity_residual = hermiticity_residual(&a);
        let min_eigenvalue = min_hermitian_eigenvalue(&a);
        Diagnostics {
            hermiticity_residual,
            min_eigenvalue,
            physical: hermiticity_residual <= HERMITICITY_TOL
                && min_eigenvalue >= GAUSSIAN_EIGEN_FLOOR - PHYSICALITY_TOL,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&StateDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: StateDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

pub fn add_thermal_noise(state: &GaussianCombState, n_bar: &[f64]) -> Result<GaussianCombState> {
    state.add_thermal_noise(n_bar)
}

pub fn restrict(state: &GaussianCombState, modes: &[usize]) -> Result<GaussianCombState> {
    state.restrict(modes)
}

pub fn validate(state: &GaussianCombState) -> Diagnostics {
    state.validate()
}

pub fn hermiticity_residual(a: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..a.nrows() {
        for s in r..a.ncols() {
            worst = worst.max((a[(r, s)] - a[(s, r)].conj()).norm());
        }
    }
    worst
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_hermitian_eigenvalue(a: &DMatrix<C64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn has_duplicates(idx: &[usize]) -> bool {
    let mut sorted = idx.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).any(|w| w[0] == w[1])
}

/// Two disjoint, non-empty groups of modes: the signal arm and the idler arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    signal: Vec<usize>,
    idler: Vec<usize>,
}

impl Bipartition {
    pub fn new(signal: Vec<usize>, idler: Vec<usize>) -> Result<Self> {
        if signal.is_empty() || idler.is_empty() {
            return structure("both arms of a bipartition must be non-empty");
        }
        if has_duplicates(&signal) || has_duplicates(&idler) {
            return structure("an arm lists the same mode twice");
        }
        if let Some(k) = signal.iter().find(|k| idler.contains(k)) {
            return structure(format!("mode {k} appears in both arms"));
        }
        Ok(Self { signal, idler })
    }

    /// Signal arm = even modes, idler arm = odd modes; the pairing used by
    /// the non-overlapping comb constructor.
    pub fn interleaved_pairs(n_pairs: usize) -> Result<Self> {
        Self::new(
            (0..n_pairs).map(|p| 2 * p).collect(),
            (0..n_pairs).map(|p| 2 * p + 1).collect(),
        )
    }

    /// Parses `"0,2;1,3"` (signal list, semicolon, idler list).
    pub fn parse(spec: &str) -> Result<Self> {
        let (s, i) = spec
            .split_once(';')
            .ok_or_else(|| Error::Config(format!("bipartition {spec:?} must look like \"0,2;1,3\"")))?;
        let list = |part: &str| -> Result<Vec<usize>> {
            part.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad mode index {t:?} in bipartition")))
                })
                .collect()
        };
        Self::new(list(s)?, list(i)?)
    }

    pub fn signal(&self) -> &[usize] {
        &self.signal
    }

    pub fn idler(&self) -> &[usize] {
        &self.idler
    }

    pub fn check_modes(&self, n_modes: usize) -> Result<()> {
        match self.signal.iter().chain(&self.idler).find(|&&k| k >= n_modes) {
            Some(k) => domain(format!("bipartition mode {k} out of range for {n_modes} modes")),
            None => Ok(()),
        }
    }
}

/// On-disk JSON layout of a state. Complex numbers are `[re, im]` pairs.
#[derive(Debug, Serialize, Deserialize)]
struct StateDoc {
    schema_version: u32,
    mode_ordering: String,
    n_modes: usize,
    b: Vec<f64>,
    c: Vec<C64>,
    /// Full symmetric N x N matrix, row major.
    d: Vec<Vec<C64>>,
    /// Full Hermitian N x N matrix, row major.
    d_bar: Vec<Vec<C64>>,
    xi: Vec<C64>,
    #[serde(default)]
    meta: Provenance,
}

impl From<&GaussianCombState> for StateDoc {
    fn from(s: &GaussianCombState) -> Self {
        let rows = |m: &DMatrix<C64>| -> Vec<Vec<C64>> {
            (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
        };
        StateDoc {
            schema_version: SCHEMA_VERSION,
            mode_ordering: MODE_ORDERING.to_string(),
            n_modes: s.n_modes(),
            b: s.cov.b.clone(),
            c: s.cov.c.clone(),
            d: rows(&s.cov.d),
            d_bar: rows(&s.cov.d_bar),
            xi: s.xi.clone(),
            meta: s.meta.clone(),
        }
    }
}

impl TryFrom<StateDoc> for GaussianCombState {
    type Error = Error;

    fn try_from(doc: StateDoc) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported state schema version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let n = doc.n_modes;
        if doc.b.len() != n {
            return structure(format!("b has {} entries, n_modes is {n}", doc.b.len()));
        }
        let square = |name: &str, m: Vec<Vec<C64>>| -> Result<DMatrix<C64>> {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return structure(format!("{name} must be {n}x{n}"));
            }
            Ok(DMatrix::from_fn(n, n, |r, s| m[r][s]))
        };
        let cov = CovarianceBlocks::new(doc.b, doc.c, square("d", doc.d)?, square("d_bar", doc.d_bar)?)?;
        Ok(GaussianCombState::new(cov, doc.xi)?.with_meta(doc.meta))
    }
}
