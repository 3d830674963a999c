//! Seeded parameter sweeps behind the eight figure datasets.
//!
//! Every sample is described by a [`SampleParams`] value that fully determines
//! its state, so a record can be recomputed from its `param_json` column
//! alone. Random experiments derive the generator for sample `i` from the
//! master seed and `i` (ChaCha stream selection), which makes the output
//! independent of how samples are spread over worker threads.

use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::{tau_eigen, tau_m, DepthMethod, DepthResult};
use crate::dynamics::{overlap_gt_for_mean, CombTopology, Dynamics};
use crate::error::{domain, Error, Result};
use crate::identifiers::{e1, e2};
use crate::moments::arm_moments;
use crate::state::{Bipartition, GaussianCombState, C64};

pub const CSV_HEADER: [&str; 7] = [
    "experiment",
    "sample_index",
    "param_json",
    "e1",
    "e2",
    "tau",
    "tau_method",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Fig1,
        Experiment::Fig2,
        Experiment::Fig3,
        Experiment::Fig4,
        Experiment::Fig5,
        Experiment::Fig6,
        Experiment::Fig7,
        Experiment::Fig8,
    ];

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1..=8 => Ok(Self::ALL[n as usize - 1]),
            _ => Err(Error::Config(format!("unknown experiment fig{n}; expected 1..8"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Fig1 => "fig1",
            Experiment::Fig2 => "fig2",
            Experiment::Fig3 => "fig3",
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
            Experiment::Fig6 => "fig6",
            Experiment::Fig7 => "fig7",
            Experiment::Fig8 => "fig8",
        }
    }

    /// Scatter experiments draw random parameters; the rest trace curves on
    /// a deterministic grid.
    pub fn is_random(&self) -> bool {
        matches!(self, Experiment::Fig1 | Experiment::Fig5)
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.strip_prefix("fig").unwrap_or(s);
        match digits.parse::<u8>() {
            Ok(n) => Self::from_number(n),
            Err(_) => Err(Error::Config(format!("unknown experiment {s:?}; expected fig1..fig8"))),
        }
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Panel {
    Noiseless,
    Noisy,
}

/// Inclusive range `[min, max]`. For pair gains the lower end is open: a
/// draw of exactly `min` is never produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn check(&self, name: &str, non_negative: bool) -> Result<()> {
        if !self.min.is_finite() || !self.max.is_finite() || self.min > self.max {
            return Err(Error::Config(format!(
                "{name} range [{}, {}] is invalid",
                self.min, self.max
            )));
        }
        if non_negative && self.min < 0.0 {
            return Err(Error::Config(format!(
                "{name} range must be non-negative, got min {}",
                self.min
            )));
        }
        Ok(())
    }

    /// Uniform on `(min, max]`.
    fn draw_open_low(&self, rng: &mut impl Rng) -> f64 {
        self.max - rng.gen::<f64>() * (self.max - self.min)
    }

    /// Uniform on `[min, max]`.
    fn draw_closed(&self, rng: &mut impl Rng) -> f64 {
        rng.gen_range(self.min..=self.max)
    }

    /// `n` points on `(min, max]`, ending at `max`.
    fn grid_open_low(&self, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|k| self.min + (self.max - self.min) * k as f64 / n as f64)
            .collect()
    }

    /// `n` points on `[min, max]` including both ends.
    fn grid_closed(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.max];
        }
        (0..n)
            .map(|k| self.min + (self.max - self.min) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Parameters of one sweep. Missing keys in a config file fall back to the
/// defaults of the chosen experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: Experiment,
    /// Random experiments: draws per panel. Curve experiments: points per
    /// series.
    pub samples: usize,
    pub seed: u64,
    pub gain_range: Range,
    pub noise_range: Range,
    pub sigma_range: Range,
    pub xi_list: Vec<f64>,
    /// Modes of the overlapping comb.
    pub n_modes: usize,
    /// Pairs of the Gaussian-spectrum comb.
    pub n_pairs: usize,
    /// Modes per arm for overlapping-comb bipartitions.
    pub arm_sizes: Vec<usize>,
    /// Frequency grid spans `[-nu_span, nu_span]`.
    pub nu_span: f64,
    pub peak_gain: f64,
    pub panels: Vec<Panel>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepOverrides {
    experiment: Experiment,
    samples: Option<usize>,
    seed: Option<u64>,
    gain_range: Option<Range>,
    noise_range: Option<Range>,
    sigma_range: Option<Range>,
    xi_list: Option<Vec<f64>>,
    n_modes: Option<usize>,
    n_pairs: Option<usize>,
    arm_sizes: Option<Vec<usize>>,
    nu_span: Option<f64>,
    peak_gain: Option<f64>,
    panels: Option<Vec<Panel>>,
}

pub const FIG1_SAMPLES: usize = 1_000_000;
pub const FIG5_SAMPLES: usize = 100_000;
pub const CURVE_POINTS: usize = 200;

impl SweepConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        let mut c = SweepConfig {
            experiment,
            samples: CURVE_POINTS,
            seed: 0,
            gain_range: Range::new(0.0, 1.0),
            noise_range: Range::new(0.0, 1.0),
            sigma_range: Range::new(0.0, 5.0),
            xi_list: vec![0.0],
            n_modes: 100,
            n_pairs: 200,
            arm_sizes: vec![1],
            nu_span: 5.0,
            peak_gain: 1e-3,
            panels: vec![Panel::Noiseless, Panel::Noisy],
        };
        match experiment {
            Experiment::Fig1 => c.samples = FIG1_SAMPLES,
            Experiment::Fig2 => c.xi_list = vec![0.0, 10.0, 100.0],
            Experiment::Fig3 => {}
            Experiment::Fig4 => c.xi_list = vec![0.0, 1.0, 10.0, 100.0],
            Experiment::Fig5 => c.samples = FIG5_SAMPLES,
            Experiment::Fig6 => c.xi_list = vec![0.0, 10.0, 50.0, 100.0],
            Experiment::Fig7 => c.arm_sizes = vec![1, 3, 6],
            Experiment::Fig8 => {
                c.arm_sizes = vec![3];
                c.xi_list = vec![0.0, 10.0, 50.0, 100.0];
            }
        }
        c
    }

    /// Reads a TOML document; keys not present keep the experiment defaults.
    /// Parse errors carry the line and the offending key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let o: SweepOverrides = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut c = Self::for_experiment(o.experiment);
        macro_rules! apply {
            ($($field:ident),*) => { $(if let Some(v) = o.$field { c.$field = v; })* };
        }
        apply!(
            samples,
            seed,
            gain_range,
            noise_range,
            sigma_range,
            xi_list,
            n_modes,
            n_pairs,
            arm_sizes,
            nu_span,
            peak_gain,
            panels
        );
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.samples == 0 {
            return fail("samples must be at least 1".into());
        }
        self.gain_range.check("gain", true)?;
        self.noise_range.check("noise", true)?;
        self.sigma_range.check("sigma", true)?;
        if !(self.nu_span > 0.0) || !self.nu_span.is_finite() {
            return fail(format!("nu_span must be positive, got {}", self.nu_span));
        }
        if !(self.peak_gain >= 0.0) || !self.peak_gain.is_finite() {
            return fail(format!("peak_gain must be non-negative, got {}", self.peak_gain));
        }
        let seeded = matches!(
            self.experiment,
            Experiment::Fig2 | Experiment::Fig4 | Experiment::Fig6 | Experiment::Fig8
        );
        if seeded && self.xi_list.is_empty() {
            return fail(format!("{} needs a non-empty xi_list", self.experiment));
        }
        if let Some(x) = self.xi_list.iter().find(|x| !x.is_finite()) {
            return fail(format!("xi_list entry {x} is not finite"));
        }
        match self.experiment {
            Experiment::Fig3 | Experiment::Fig4 if self.n_pairs == 0 => {
                return fail("n_pairs must be at least 1".into());
            }
            Experiment::Fig5 if self.panels.is_empty() => return fail("fig5 needs at least one panel".into()),
            Experiment::Fig7 | Experiment::Fig8 if self.arm_sizes.is_empty() => {
                return fail("arm_sizes must be non-empty".into());
            }
            _ => {}
        }
        if matches!(
            self.experiment,
            Experiment::Fig5 | Experiment::Fig6 | Experiment::Fig7 | Experiment::Fig8
        ) {
            for &m in self.overlap_arm_sizes() {
                // the seeded experiments also need one mode outside both arms
                let needed = 2 * m + usize::from(seeded);
                if m == 0 || needed > self.n_modes {
                    return fail(format!("arm size {m} does not fit in an N = {} comb", self.n_modes));
                }
            }
        }
        Ok(())
    }

    fn overlap_arm_sizes(&self) -> &[usize] {
        match self.experiment {
            Experiment::Fig7 | Experiment::Fig8 => &self.arm_sizes,
            _ => &[1],
        }
    }

    /// Number of records a run produces.
    pub fn record_count(&self) -> usize {
        let per = self.samples;
        match self.experiment {
            Experiment::Fig1 | Experiment::Fig3 => per,
            Experiment::Fig2 | Experiment::Fig4 | Experiment::Fig6 | Experiment::Fig8 => {
                per * self.xi_list.len() * self.overlap_series_factor()
            }
            Experiment::Fig5 => per * self.panels.len(),
            Experiment::Fig7 => per * self.arm_sizes.len(),
        }
    }

    fn overlap_series_factor(&self) -> usize {
        match self.experiment {
            Experiment::Fig8 => self.arm_sizes.len(),
            _ => 1,
        }
    }
}

/// Everything needed to rebuild one sample's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleParams {
    /// Twin beam with independent thermal noise on each arm.
    TwinBeam { b_p: f64, noise_s: f64, noise_i: f64 },
    /// Noiseless twin beam with a real seed amplitude in the signal mode.
    SeededTwinBeam { b_p: f64, xi: f64 },
    /// Independent pairs with gains `peak exp(-nu^2 / 2 sigma^2)` on a uniform
    /// grid; signal seeds follow the same profile scaled by `xi`.
    GaussianSpectrum {
        sigma: f64,
        n_pairs: usize,
        nu_span: f64,
        peak_gain: f64,
        xi: f64,
    },
    /// Fully overlapping comb of `n_modes` modes; arms are modes `0..arm` and
    /// `arm..2 arm`, an optional seed sits in mode `2 arm`.
    Overlap {
        n_modes: usize,
        b_p: f64,
        gt: f64,
        arm: usize,
        /// Per-mode noise on the `2 arm` retained modes; empty for none.
        noise: Vec<f64>,
        xi: f64,
        depth: DepthMethod,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub e1: f64,
    pub e2: f64,
    pub depth: DepthResult,
}

impl SampleParams {
    pub fn state(&self, dynamics: &Dynamics) -> Result<(GaussianCombState, Bipartition)> {
        match self {
            SampleParams::TwinBeam { b_p, noise_s, noise_i } => {
                let s = dynamics
                    .twin_beam_state(*b_p)?
                    .add_thermal_noise(&[*noise_s, *noise_i])?;
                Ok((s, Bipartition::interleaved_pairs(1)?))
            }
            SampleParams::SeededTwinBeam { b_p, xi } => {
                let s = dynamics.twin_beam_state(*b_p)?;
                let topology = CombTopology::pairs_from_gains(&[*b_p])?;
                let out = dynamics.propagate_seed(&topology, 1.0, &[C64::new(*xi, 0.0), C64::new(0.0, 0.0)])?;
                Ok((
                    seeded(s, out, vec![C64::new(*xi, 0.0)])?,
                    Bipartition::interleaved_pairs(1)?,
                ))
            }
            SampleParams::GaussianSpectrum {
                sigma,
                n_pairs,
                nu_span,
                peak_gain,
                xi,
            } => {
                let profile = gaussian_profile(*sigma, *n_pairs, *nu_span);
                let gains: Vec<f64> = profile.iter().map(|p| peak_gain * p).collect();
                let mut s = dynamics.comb_nonoverlapping(&gains)?;
                if *xi != 0.0 {
                    let xi0: Vec<C64> = profile
                        .iter()
                        .flat_map(|p| [C64::new(xi * p, 0.0), C64::new(0.0, 0.0)])
                        .collect();
                    let topology = CombTopology::pairs_from_gains(&gains)?;
                    let out = dynamics.propagate_seed(&topology, 1.0, &xi0)?;
                    s = seeded(s, out, xi0)?;
                }
                Ok((s, Bipartition::interleaved_pairs(*n_pairs)?))
            }
            SampleParams::Overlap {
                n_modes,
                gt,
                arm,
                noise,
                xi,
                ..
            } => {
                let kept = 2 * arm;
                let mut s = dynamics.overlap_elements(*n_modes, *gt)?.state_on(kept)?;
                if *xi != 0.0 {
                    if kept >= *n_modes {
                        return domain(format!("no free mode to seed with arms of {arm} in N = {n_modes}"));
                    }
                    let mut xi0 = vec![C64::new(0.0, 0.0); *n_modes];
                    xi0[kept] = C64::new(*xi, 0.0);
                    let topology = CombTopology::overlapping(*n_modes, *gt);
                    let out = dynamics.propagate_seed(&topology, 1.0, &xi0)?;
                    let mut meta = s.meta().clone();
                    meta.seed = xi0;
                    s = s.with_xi(out[..kept].to_vec())?.with_meta(meta);
                }
                if !noise.is_empty() {
                    s = s.add_thermal_noise(noise)?;
                }
                let bip = Bipartition::new((0..*arm).collect(), (*arm..kept).collect())?;
                Ok((s, bip))
            }
        }
    }

    pub fn evaluate(&self, dynamics: &Dynamics) -> Result<Evaluation> {
        let (state, bip) = self.state(dynamics)?;
        let m = arm_moments(&state, &bip)?;
        let depth = match self.depth_method() {
            DepthMethod::Eigenvalue => tau_eigen(&state)?,
            DepthMethod::QuarticRoot => tau_m(&m)?,
        };
        Ok(Evaluation {
            e1: e1(&m),
            e2: e2(&m),
            depth,
        })
    }

    pub fn depth_method(&self) -> DepthMethod {
        match self {
            SampleParams::TwinBeam { .. } | SampleParams::SeededTwinBeam { .. } => DepthMethod::Eigenvalue,
            SampleParams::GaussianSpectrum { .. } => DepthMethod::QuarticRoot,
            SampleParams::Overlap { depth, .. } => *depth,
        }
    }

    /// Seed amplitude, the key that separates curves in the stimulated
    /// experiments.
    pub fn xi(&self) -> f64 {
        match self {
            SampleParams::TwinBeam { .. } => 0.0,
            SampleParams::SeededTwinBeam { xi, .. }
            | SampleParams::GaussianSpectrum { xi, .. }
            | SampleParams::Overlap { xi, .. } => *xi,
        }
    }
}

fn seeded(state: GaussianCombState, xi_t: Vec<C64>, xi0: Vec<C64>) -> Result<GaussianCombState> {
    let mut meta = state.meta().clone();
    meta.seed = xi0;
    Ok(state.with_xi(xi_t)?.with_meta(meta))
}

/// `exp(-nu_n^2 / 2 sigma^2)` on `n` points uniform over `[-span, span]`;
/// identically zero at `sigma = 0`.
pub fn gaussian_profile(sigma: f64, n: usize, span: f64) -> Vec<f64> {
    let nu = Range::new(-span, span).grid_closed(n);
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    nu.iter().map(|v| (-v * v / (2.0 * sigma * sigma)).exp()).collect()
}

/// One output row. `rng_seed` is the master seed of the run (zero for grid
/// experiments, which draw nothing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub experiment: Experiment,
    pub sample_index: usize,
    pub rng_seed: u64,
    pub params: SampleParams,
    pub e1: f64,
    pub e2: f64,
    pub tau: f64,
    pub tau_method: DepthMethod,
}

/// What goes into the `param_json` column.
#[derive(Serialize, Deserialize)]
struct ParamDoc {
    rng_seed: u64,
    #[serde(flatten)]
    params: SampleParams,
}

impl SampleRecord {
    pub fn param_json(&self) -> String {
        serde_json::to_string(&ParamDoc {
            rng_seed: self.rng_seed,
            params: self.params.clone(),
        })
        .expect("sample parameters serialize")
    }
}

/// Generator for sample `index`: the master seed fixes the key, the index
/// selects the stream.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn sample_mixed_twin_beam(rng: &mut impl Rng, gains: Range, noise: Range) -> SampleParams {
    let b_p = gains.draw_open_low(rng);
    let noise_s = noise.draw_closed(rng);
    let noise_i = noise.draw_closed(rng);
    SampleParams::TwinBeam { b_p, noise_s, noise_i }
}

/// Draws a target per-mode gain, inverts it to `g t` and adds per-mode noise
/// on the panel that asks for it.
pub fn sample_overlap_pair(
    rng: &mut impl Rng,
    n_modes: usize,
    gains: Range,
    noise: Option<Range>,
) -> Result<SampleParams> {
    let b_p = gains.draw_open_low(rng);
    let gt = overlap_gt_for_mean(n_modes, b_p)?;
    let noise = match noise {
        Some(r) => vec![r.draw_closed(rng), r.draw_closed(rng)],
        None => Vec::new(),
    };
    Ok(SampleParams::Overlap {
        n_modes,
        b_p,
        gt,
        arm: 1,
        noise,
        xi: 0.0,
        depth: DepthMethod::Eigenvalue,
    })
}

fn overlap_curve(config: &SweepConfig, arm: usize, xi: f64, depth: DepthMethod) -> Result<Vec<SampleParams>> {
    config
        .gain_range
        .grid_open_low(config.samples)
        .into_iter()
        .map(|b_p| {
            Ok(SampleParams::Overlap {
                n_modes: config.n_modes,
                b_p,
                gt: overlap_gt_for_mean(config.n_modes, b_p)?,
                arm,
                noise: Vec::new(),
                xi,
                depth,
            })
        })
        .collect()
}

fn spectrum_curve(config: &SweepConfig, xi: f64) -> Vec<SampleParams> {
    config
        .sigma_range
        .grid_closed(config.samples)
        .into_iter()
        .map(|sigma| SampleParams::GaussianSpectrum {
            sigma,
            n_pairs: config.n_pairs,
            nu_span: config.nu_span,
            peak_gain: config.peak_gain,
            xi,
        })
        .collect()
}

/// Grid experiments as a list of series, each a list of points.
fn curve_series(config: &SweepConfig) -> Result<Vec<Vec<SampleParams>>> {
    let c = config;
    Ok(match c.experiment {
        Experiment::Fig2 => c
            .xi_list
            .iter()
            .map(|&xi| {
                c.gain_range
                    .grid_open_low(c.samples)
                    .into_iter()
                    .map(|b_p| SampleParams::SeededTwinBeam { b_p, xi })
                    .collect()
            })
            .collect(),
        Experiment::Fig3 => vec![spectrum_curve(c, 0.0)],
        Experiment::Fig4 => c.xi_list.iter().map(|&xi| spectrum_curve(c, xi)).collect(),
        Experiment::Fig6 => c
            .xi_list
            .iter()
            .map(|&xi| overlap_curve(c, 1, xi, DepthMethod::Eigenvalue))
            .collect::<Result<_>>()?,
        Experiment::Fig7 => c
            .arm_sizes
            .iter()
            .map(|&m| overlap_curve(c, m, 0.0, DepthMethod::QuarticRoot))
            .collect::<Result<_>>()?,
        Experiment::Fig8 => {
            let mut out = Vec::new();
            for &m in &c.arm_sizes {
                for &xi in &c.xi_list {
                    out.push(overlap_curve(c, m, xi, DepthMethod::QuarticRoot)?);
                }
            }
            out
        }
        Experiment::Fig1 | Experiment::Fig5 => unreachable!("random experiments have no grid"),
    })
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        b = b.num_threads(k);
    }
    b.build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn evaluate_checked(
    experiment: Experiment,
    index: usize,
    rng_seed: u64,
    params: SampleParams,
    dynamics: &Dynamics,
) -> Result<SampleRecord> {
    let ev = params.evaluate(dynamics).map_err(|e| {
        let p = serde_json::to_string(&params).unwrap_or_default();
        match e {
            Error::NonFinite(m) => Error::NonFinite(format!("{m}; parameters {p}")),
            other => other,
        }
    })?;
    if ![ev.e1, ev.e2, ev.depth.tau].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{experiment} sample {index}: e1 = {}, e2 = {}, tau = {} for parameters {}",
            ev.e1,
            ev.e2,
            ev.depth.tau,
            serde_json::to_string(&params).unwrap_or_default()
        )));
    }
    Ok(SampleRecord {
        experiment,
        sample_index: index,
        rng_seed,
        params,
        e1: ev.e1,
        e2: ev.e2,
        tau: ev.depth.tau,
        tau_method: ev.depth.method,
    })
}

/// Runs a sweep on `threads` workers (the global default when `None`).
/// Records come back ordered by `sample_index`; within each curve the points
/// are ordered by `tau`.
pub fn run_experiment(config: &SweepConfig, threads: Option<usize>) -> Result<Vec<SampleRecord>> {
    config.validate()?;
    let dynamics = Dynamics::default();
    let exp = config.experiment;
    let pool = pool(threads)?;

    if exp.is_random() {
        let panels: Vec<Option<Range>> = match exp {
            Experiment::Fig5 => config
                .panels
                .iter()
                .map(|p| (*p == Panel::Noisy).then_some(config.noise_range))
                .collect(),
            _ => vec![Some(config.noise_range)],
        };
        let n = config.samples;
        return pool.install(|| {
            (0..n * panels.len())
                .into_par_iter()
                .map(|i| {
                    let mut rng = sample_rng(config.seed, i);
                    let params = match exp {
                        Experiment::Fig1 => sample_mixed_twin_beam(&mut rng, config.gain_range, config.noise_range),
                        _ => sample_overlap_pair(&mut rng, config.n_modes, config.gain_range, panels[i / n])?,
                    };
                    evaluate_checked(exp, i, config.seed, params, &dynamics)
                })
                .collect()
        });
    }

    let series = curve_series(config)?;
    let mut records = Vec::with_capacity(config.record_count());
    for points in series {
        let mut evaluated: Vec<SampleRecord> = pool.install(|| {
            points
                .into_par_iter()
                .map(|p| evaluate_checked(exp, 0, 0, p, &dynamics))
                .collect::<Result<_>>()
        })?;
        // stable: equal depths keep grid order
        evaluated.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        records.extend(evaluated);
    }
    for (i, r) in records.iter_mut().enumerate() {
        r.sample_index = i;
    }
    Ok(records)
}

/// Seventeen significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(records: &[SampleRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.experiment.as_str().to_string(),
            r.sample_index.to_string(),
            r.param_json(),
            format_float(r.e1),
            format_float(r.e2),
            format_float(r.tau),
            r.tau_method.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    experiment: Experiment,
    sample_index: usize,
    param_json: ParamDoc,
    e1: f64,
    e2: f64,
    tau: f64,
    tau_method: &'a str,
}

pub fn write_json<W: Write>(records: &[SampleRecord], out: W) -> Result<()> {
    let rows: Vec<JsonRecord> = records
        .iter()
        .map(|r| JsonRecord {
            experiment: r.experiment,
            sample_index: r.sample_index,
            param_json: ParamDoc {
                rng_seed: r.rng_seed,
                params: r.params.clone(),
            },
            e1: r.e1,
            e2: r.e2,
            tau: r.tau,
            tau_method: r.tau_method.as_str(),
        })
        .collect();
    serde_json::to_writer_pretty(out, &rows)?;
    Ok(())
}

/// A CSV row read back, with the numeric columns kept as printed.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub experiment: Experiment,
    pub sample_index: usize,
    pub rng_seed: u64,
    pub params: SampleParams,
    pub e1: String,
    pub e2: String,
    pub tau: String,
    pub tau_method: String,
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or_default().to_string();
        let bad = |what: &str| Error::Config(format!("CSV data row {}: invalid {what}", line + 1));
        let doc: ParamDoc = serde_json::from_str(&field(2)).map_err(|_| bad("param_json"))?;
        rows.push(CsvRow {
            experiment: field(0).parse()?,
            sample_index: field(1).parse().map_err(|_| bad("sample_index"))?,
            rng_seed: doc.rng_seed,
            params: doc.params,
            e1: field(3),
            e2: field(4),
            tau: field(5),
            tau_method: field(6),
        });
    }
    Ok(rows)
}

pub const FIG1_TAU_TOL: f64 = 1e-12;
pub const FIG1_E_TOL: f64 = 1e-12;

/// Counts of records breaking `tau > 0 <=> e2 < 0`, split as
/// `(positive depth without negative e2, negative e2 without depth)`.
pub fn monotone_law_violations(records: &[SampleRecord]) -> (usize, usize) {
    records.iter().fold((0, 0), |(a, b), r| {
        let deep = r.tau > FIG1_TAU_TOL;
        let negative = r.e2 < -FIG1_E_TOL;
        (a + usize::from(deep && !negative), b + usize::from(!deep && negative))
    })
}

/// Records with `tau > threshold` whose `e2` fails to be negative.
pub fn bound_violations(records: &[SampleRecord], threshold: f64) -> usize {
    records.iter().filter(|r| r.tau > threshold && r.e2 >= 0.0).count()
}

/// A `tau` bin in which a more strongly seeded curve sits above a weaker one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinViolation {
    pub bin: usize,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub xi_low: f64,
    pub xi_high: f64,
    pub mean_e2_low: f64,
    pub mean_e2_high: f64,
}

/// Bins `tau` uniformly over the records' range and, in every bin shared by
/// two curves of the same arm size, compares their mean `e2` for adjacent
/// seed amplitudes.
pub fn stimulation_violations(records: &[SampleRecord], n_bins: usize) -> Vec<BinViolation> {
    let n_bins = n_bins.max(1);
    let (lo, hi) = records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| {
        (l.min(r.tau), h.max(r.tau))
    });
    if records.is_empty() {
        return Vec::new();
    }
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
    let bin_of = |tau: f64| (((tau - lo) / width) as usize).min(n_bins - 1);

    let group = |r: &SampleRecord| match &r.params {
        SampleParams::Overlap { arm, .. } => *arm,
        _ => 0,
    };
    let mut keys: Vec<(usize, f64)> = records.iter().map(|r| (group(r), r.params.xi())).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();

    // sums[key][bin] = (sum e2, count)
    let mut sums = vec![vec![(0.0f64, 0usize); n_bins]; keys.len()];
    for r in records {
        let k = keys
            .iter()
            .position(|&(g, x)| g == group(r) && x == r.params.xi())
            .expect("key collected above");
        let cell = &mut sums[k][bin_of(r.tau)];
        cell.0 += r.e2;
        cell.1 += 1;
    }

    let mut out = Vec::new();
    for k in 1..keys.len() {
        if keys[k].0 != keys[k - 1].0 {
            continue;
        }
        for (bin, (&low, &high)) in sums[k - 1].iter().zip(&sums[k]).enumerate() {
            if low.1 == 0 || high.1 == 0 {
                continue;
            }
            let (m_low, m_high) = (low.0 / low.1 as f64, high.0 / high.1 as f64);
            if m_high > m_low {
                out.push(BinViolation {
                    bin,
                    tau_lo: lo + bin as f64 * width,
                    tau_hi: lo + (bin + 1) as f64 * width,
                    xi_low: keys[k - 1].1,
                    xi_high: keys[k].1,
                    mean_e2_low: m_low,
                    mean_e2_high: m_high,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub e2_min: f64,
    pub e2_max: f64,
}

pub fn summarize(records: &[SampleRecord]) -> Summary {
    records.iter().fold(
        Summary {
            count: 0,
            tau_min: f64::INFINITY,
            tau_max: f64::NEG_INFINITY,
            e2_min: f64::INFINITY,
            e2_max: f64::NEG_INFINITY,
        },
        |s, r| Summary {
            count: s.count + 1,
            tau_min: s.tau_min.min(r.tau),
            tau_max: s.tau_max.max(r.tau),
            e2_min: s.e2_min.min(r.e2),
            e2_max: s.e2_max.max(r.e2),
        },
    )
}
