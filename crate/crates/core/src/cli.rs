//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage error (bad flags, bad config file), 1 when
//! the computation itself fails.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::depth::{tau_eigen, tau_m, DepthResult};
use crate::dynamics::{CombTopology, Dynamics};
use crate::error::Error;
use crate::identifiers::identify;
use crate::moments::{apply_efficiency, arm_moments, ArmMoments};
use crate::montecarlo::{format_float, run_experiment, write_csv, write_json, Experiment, SweepConfig};
use crate::state::{Bipartition, GaussianCombState, C64};

pub const THREADS_ENV: &str = "QOFC_DEFAULT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "qofc",
    version,
    about = "Gaussian frequency-comb states: moments, identifiers, depths, figure sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the state as JSON (diagnostics go to stderr).
    State(StateArgs),
    /// Print first and second arm moments.
    Moments(MeasureArgs),
    /// Print e1, e2 and the verdict.
    Identify(MeasureArgs),
    /// Print the nonclassicality depth and the method used.
    Depth(DepthArgs),
    /// Run one of the figure experiments with its default parameters.
    Fig(FigArgs),
    /// Run an experiment described by a TOML sweep file.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct StateArgs {
    /// Independent pairs with these gains B_p (comma separated).
    #[arg(long, value_name = "B_P[,B_P...]", conflicts_with_all = ["overlap", "state"])]
    pairs: Option<String>,
    /// Fully overlapping comb with N modes; needs --gt.
    #[arg(long, value_name = "N", requires = "gt", conflicts_with = "state")]
    overlap: Option<usize>,
    #[arg(long, value_name = "X", requires = "overlap")]
    gt: Option<f64>,
    /// Thermal noise per mode (one value applies to every mode).
    #[arg(long, value_name = "N[,N...]")]
    noise: Option<String>,
    /// Input seed amplitudes: a JSON array of [re, im] pairs, a comma list
    /// of real amplitudes, or a file holding the JSON array.
    #[arg(long, value_name = "FILE|LIST")]
    seed_spectrum: Option<String>,
    /// Topology file (TOML); flags override its entries.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Read a state JSON document instead of building one.
    #[arg(long, value_name = "FILE")]
    state: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    #[command(flatten)]
    state: StateArgs,
    /// Arms as "s,s,...;i,i,...". Defaults: signals vs idlers for pairs,
    /// first half vs second half for an overlapping comb.
    #[arg(long, value_name = "S;I")]
    bipartition: Option<String>,
    /// Detection efficiencies of the two arms.
    #[arg(long, value_name = "ETA_S,ETA_I")]
    eta: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodChoice {
    /// Eigenvalue route for two-mode states, quartic otherwise.
    Auto,
    Eigenvalue,
    QuarticRoot,
}

#[derive(Debug, Args)]
struct DepthArgs {
    #[command(flatten)]
    measure: MeasureArgs,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodChoice,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to QOFC_DEFAULT_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Emit a JSON records array instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct FigArgs {
    #[arg(value_parser = clap::value_parser!(u8).range(1..=8))]
    number: u8,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

/// Topology file accepted by `--config`.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    #[serde(rename = "type")]
    kind: Option<TopologyKind>,
    gains: Option<Vec<f64>>,
    n_modes: Option<usize>,
    gt: Option<f64>,
    seed: Option<Vec<[f64; 2]>>,
    noise: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum TopologyKind {
    Pairs,
    Overlap,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::State(a) => {
            let state = build_state(&a)?;
            let d = state.validate();
            eprintln!(
                "hermiticity_residual = {}\nmin_eigenvalue = {}\nphysical = {}",
                format_float(d.hermiticity_residual),
                format_float(d.min_eigenvalue),
                d.physical
            );
            writeln!(out, "{}", state.to_json()?)?;
        }
        Command::Moments(a) => {
            let (_, m) = measure(&a)?;
            if a.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&m).map_err(Error::from)?)?;
            } else {
                for (k, v) in [
                    ("w_s", m.w_s),
                    ("w_i", m.w_i),
                    ("var_s", m.var_s),
                    ("var_i", m.var_i),
                    ("cov_si", m.cov_si),
                    ("second_s", m.second_s),
                    ("second_i", m.second_i),
                    ("second_si", m.second_si),
                ] {
                    writeln!(out, "{k} = {}", format_float(v))?;
                }
            }
        }
        Command::Identify(a) => {
            let (_, m) = measure(&a)?;
            let r = identify(&m);
            if a.json {
                let v = json!({"e1": r.e1, "e2": r.e2, "verdict": r.verdict.as_str()});
                writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(Error::from)?)?;
            } else {
                writeln!(out, "e1 = {}", format_float(r.e1))?;
                writeln!(out, "e2 = {}", format_float(r.e2))?;
                writeln!(out, "verdict = {}", r.verdict.as_str())?;
            }
        }
        Command::Depth(a) => {
            let (state, m) = measure(&a.measure)?;
            let r: DepthResult = match (a.method, state.n_modes()) {
                (MethodChoice::Eigenvalue, _) | (MethodChoice::Auto, 2) => {
                    if a.measure.eta.is_some() {
                        return usage("--eta only applies to the quartic route; pass --method quartic-root");
                    }
                    tau_eigen(&state)?
                }
                _ => tau_m(&m)?,
            };
            if a.measure.json {
                let v = json!({"tau": r.tau, "method": r.method.as_str(), "residual": r.residual});
                writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(Error::from)?)?;
            } else {
                writeln!(out, "tau = {}", format_float(r.tau))?;
                writeln!(out, "method = {}", r.method.as_str())?;
            }
        }
        Command::Fig(a) => {
            let config = SweepConfig::for_experiment(Experiment::from_number(a.number)?);
            sweep(config, &a.run, out)?;
        }
        Command::Sweep(a) => {
            let text = read_text(&a.config)?;
            let config =
                SweepConfig::from_toml(&text).map_err(|e| Failure::Usage(format!("{}: {e}", a.config.display())))?;
            sweep(config, &a.run, out)?;
        }
    }
    Ok(())
}

fn sweep(mut config: SweepConfig, run: &RunArgs, out: &mut dyn Write) -> CliResult<()> {
    if let Some(n) = run.samples {
        config.samples = n;
    }
    if let Some(s) = run.seed {
        config.seed = s;
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let threads = match run.threads {
        Some(0) => return usage("--threads must be at least 1"),
        Some(k) => Some(k),
        None => threads_from_env()?,
    };
    let records = run_experiment(&config, threads)?;
    match &run.out {
        Some(path) => {
            let file = io::BufWriter::new(fs::File::create(path).map_err(|e| {
                Failure::Runtime(Error::Io(io::Error::new(
                    e.kind(),
                    format!("cannot create {}: {e}", path.display()),
                )))
            })?);
            emit(&records, run.json, file)?;
        }
        None => emit(&records, run.json, out)?,
    }
    Ok(())
}

fn emit<W: Write>(records: &[crate::montecarlo::SampleRecord], as_json: bool, w: W) -> CliResult<()> {
    if as_json {
        write_json(records, w)?;
    } else {
        write_csv(records, w)?;
    }
    Ok(())
}

fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Some(k)),
            _ => usage(format!("{THREADS_ENV} = {v:?} is not a positive integer")),
        },
        Err(_) => Ok(None),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn parse_list(flag: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("{flag}: {t:?} is not a number")))
        })
        .collect()
}

fn parse_seed(spec: &str) -> CliResult<Vec<C64>> {
    let trimmed = spec.trim();
    let json_text = if trimmed.starts_with('[') {
        trimmed.to_string()
    } else if Path::new(trimmed).is_file() {
        read_text(Path::new(trimmed))?
    } else {
        return Ok(parse_list("--seed-spectrum", trimmed)?
            .into_iter()
            .map(|re| C64::new(re, 0.0))
            .collect());
    };
    let pairs: Vec<[f64; 2]> = serde_json::from_str(&json_text)
        .map_err(|e| Failure::Usage(format!("--seed-spectrum: expected an array of [re, im] pairs: {e}")))?;
    Ok(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
}

fn build_state(a: &StateArgs) -> CliResult<GaussianCombState> {
    if let Some(path) = &a.state {
        let mut s = GaussianCombState::from_json(&read_text(path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        if a.seed_spectrum.is_some() || a.config.is_some() {
            return usage("--state cannot be combined with --seed-spectrum or --config");
        }
        if let Some(n) = &a.noise {
            s = s.add_thermal_noise(&broadcast("--noise", parse_list("--noise", n)?, s.n_modes())?)?;
        }
        return Ok(s);
    }

    let file = match &a.config {
        Some(path) => {
            let text = read_text(path)?;
            toml::from_str::<TopologyFile>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => TopologyFile::default(),
    };

    // gains are kept as given; recovering them from the couplings loses digits
    let (topology, gains) = if let Some(p) = &a.pairs {
        let g = parse_list("--pairs", p)?;
        (CombTopology::pairs_from_gains(&g)?, g)
    } else if let (Some(n), Some(gt)) = (a.overlap, a.gt) {
        (CombTopology::overlapping(n, gt), Vec::new())
    } else {
        match (file.kind, &file.gains, file.n_modes, file.gt) {
            (Some(TopologyKind::Pairs), Some(g), _, _) => (CombTopology::pairs_from_gains(g)?, g.clone()),
            (Some(TopologyKind::Overlap), _, Some(n), Some(gt)) => (CombTopology::overlapping(n, gt), Vec::new()),
            (Some(TopologyKind::Pairs), None, _, _) => return usage("config: type = \"pairs\" needs `gains`"),
            (Some(TopologyKind::Overlap), ..) => return usage("config: type = \"overlap\" needs `n_modes` and `gt`"),
            (None, ..) => return usage("no topology given; use --pairs, --overlap/--gt, --config or --state"),
        }
    };

    let dynamics = Dynamics::default();
    let mut state = match &topology {
        CombTopology::NonOverlapping { .. } => dynamics.comb_nonoverlapping(&gains)?,
        CombTopology::FullyOverlapping { n_modes, coupling } => dynamics.comb_overlapping(*n_modes, *coupling)?,
    };

    let seed = match (&a.seed_spectrum, &file.seed) {
        (Some(s), _) => Some(parse_seed(s)?),
        (None, Some(v)) => Some(v.iter().map(|[re, im]| C64::new(*re, *im)).collect()),
        (None, None) => None,
    };
    if let Some(xi0) = seed {
        let n = state.n_modes();
        if xi0.len() != n {
            return usage(format!(
                "--seed-spectrum has {} entries, the comb has {n} modes",
                xi0.len()
            ));
        }
        let xi_t = dynamics.propagate_seed(&topology, 1.0, &xi0)?;
        let mut meta = state.meta().clone();
        meta.seed = xi0;
        state = state.with_xi(xi_t)?.with_meta(meta);
    }

    let noise = match (&a.noise, &file.noise) {
        (Some(s), _) => Some(parse_list("--noise", s)?),
        (None, Some(v)) => Some(v.clone()),
        (None, None) => None,
    };
    if let Some(n) = noise {
        let n = broadcast("--noise", n, state.n_modes())?;
        state = state.add_thermal_noise(&n)?;
    }
    Ok(state)
}

fn broadcast(flag: &str, v: Vec<f64>, n: usize) -> CliResult<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        k if k == n => Ok(v),
        k => usage(format!("{flag} has {k} values, expected 1 or {n}")),
    }
}

fn default_bipartition(state: &GaussianCombState) -> CliResult<Bipartition> {
    let n = state.n_modes();
    if n < 2 {
        return usage("a bipartition needs at least two modes");
    }
    let overlap = matches!(state.meta().topology, Some(CombTopology::FullyOverlapping { .. }));
    Ok(if overlap || n % 2 == 1 {
        let h = n / 2;
        Bipartition::new((0..h).collect(), (h..n).collect())?
    } else {
        Bipartition::interleaved_pairs(n / 2)?
    })
}

fn measure(a: &MeasureArgs) -> CliResult<(GaussianCombState, ArmMoments)> {
    let state = build_state(&a.state)?;
    let bip = match &a.bipartition {
        Some(spec) => Bipartition::parse(spec).map_err(|e| Failure::Usage(format!("--bipartition: {e}")))?,
        None => default_bipartition(&state)?,
    };
    bip.check_modes(state.n_modes())
        .map_err(|e| Failure::Usage(format!("--bipartition: {e}")))?;
    let mut m = arm_moments(&state, &bip)?;
    if let Some(spec) = &a.eta {
        let v = parse_list("--eta", spec)?;
        let [eta_s, eta_i] = v[..] else {
            return usage(format!("--eta takes two values, got {}", v.len()));
        };
        m = apply_efficiency(&m, eta_s, eta_i).map_err(|e| Failure::Usage(format!("--eta: {e}")))?;
    }
    Ok((state, m))
}
