//! File formats and batch running for `ftt-core` scenarios.
//!
//! Scenarios are JSON documents mirroring [`ScenarioSpec`]; every field is
//! optional and falls back to its default. A run exports one set of CSV
//! traces per loop plus a JSON summary:
//!
//! | file                        | columns              |
//! |-----------------------------|----------------------|
//! | `<prefix>-loop<k>-output.csv` | `t,r,y,u`          |
//! | `<prefix>-loop<k>-period.csv` | `t,h`              |
//! | `<prefix>-loop<k>-dmr.csv`    | `t,rho,rho_filtered` |
//! | `<prefix>-summary.json`       | the run [`Summary`] |

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ftt_core::metrics::{LoopTrace, Summary};
use ftt_core::scenario::{self, ScenarioError, ScenarioSpec};
use ftt_core::sim::{RunResult, SimError, Simulation};
use ftt_core::Scheme;
use rayon::prelude::*;

pub use ftt_core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {field}: {message}", path.display())]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation failed: {0}")]
    Sim(SimError),
}

impl From<SimError> for Error {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(e) => Error::Scenario(e),
            e => Error::Sim(e),
        }
    }
}

impl Error {
    /// Process exit status: 2 for bad configuration, 3 for I/O, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Scenario(_) => 2,
            Error::Io { .. } => 3,
            Error::Sim(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Parses a scenario document. Errors name the offending field path,
/// e.g. `loops[0].sampler.kp`.
pub fn parse_scenario(text: &str, origin: &Path) -> Result<ScenarioSpec, Error> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::Parse {
            path: origin.to_path_buf(),
            field: if field == "." { "<root>".into() } else { field },
            message: e.into_inner().to_string(),
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn read_scenario(path: &Path) -> Result<ScenarioSpec, Error> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_scenario(&text, path)
}

pub fn write_scenario(path: &Path, spec: &ScenarioSpec) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(spec).expect("scenario serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Resolves a built-in name, or failing that, a path to a scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<ScenarioSpec, Error> {
    if scenario::BUILTIN_NAMES.contains(&name_or_path) {
        return Ok(scenario::builtin(name_or_path)?);
    }
    let path = Path::new(name_or_path);
    if path.is_file() {
        read_scenario(path)
    } else {
        Err(ScenarioError::Unknown {
            name: name_or_path.to_string(),
        }
        .into())
    }
}

/// Artifact prefix for one run, e.g. `ftt-reconfig-seed3`.
pub fn artifact_prefix(spec: &ScenarioSpec) -> String {
    let base = if spec.output_prefix.is_empty() {
        spec.name.as_str()
    } else {
        spec.output_prefix.as_str()
    };
    format!("{}-{}-seed{}", spec.scheme.label(), base, spec.seed)
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), Error>
where
    I: IntoIterator<Item = R>,
    R: serde::Serialize,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn export_trace(dir: &Path, prefix: &str, tr: &LoopTrace) -> Result<Vec<PathBuf>, Error> {
    let stem = format!("{prefix}-loop{}", tr.loop_id);
    let output = dir.join(format!("{stem}-output.csv"));
    write_rows(
        &output,
        &["t", "r", "y", "u"],
        tr.outputs.iter().map(|o| (o.t, o.r, o.y, o.u)),
    )?;
    let period = dir.join(format!("{stem}-period.csv"));
    write_rows(&period, &["t", "h"], tr.periods.iter().map(|p| (p.t, p.h)))?;
    let dmr = dir.join(format!("{stem}-dmr.csv"));
    write_rows(
        &dmr,
        &["t", "rho", "rho_filtered"],
        tr.dmr.iter().map(|d| (d.t, d.rho, d.rho_filtered)),
    )?;
    Ok(vec![output, period, dmr])
}

/// Writes the per-loop CSV traces and the summary into `dir`, creating it
/// if needed. Returns the paths written.
pub fn export(result: &RunResult, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for tr in &result.traces {
        written.extend(export_trace(dir, prefix, tr)?);
    }
    let path = dir.join(format!("{prefix}-summary.json"));
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &result.summary).map_err(|e| io_err(&path)(e.into()))?;
    w.write_all(b"\n")
        .and_then(|()| w.flush())
        .map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

pub fn run(spec: &ScenarioSpec) -> Result<RunResult, Error> {
    Ok(Simulation::new(spec)?.run()?)
}

/// One finished run of a batch.
pub struct Outcome {
    pub prefix: String,
    pub result: RunResult,
}

/// Every (scheme, seed) pair of a batch, scheme-major.
pub fn expand(base: &ScenarioSpec, schemes: &[Scheme], seeds: &[u64]) -> Vec<ScenarioSpec> {
    schemes
        .iter()
        .flat_map(|&scheme| {
            seeds.iter().map(move |&seed| ScenarioSpec {
                scheme,
                seed,
                ..base.clone()
            })
        })
        .collect()
}

/// Runs the specs in parallel and, if `out` is given, exports each one
/// under its own prefix. Results keep the input order.
pub fn run_batch(specs: &[ScenarioSpec], out: Option<&Path>) -> Result<Vec<Outcome>, Error> {
    specs
        .par_iter()
        .map(|spec| {
            let result = run(spec)?;
            let prefix = artifact_prefix(spec);
            if let Some(dir) = out {
                export(&result, dir, &prefix)?;
            }
            Ok(Outcome { prefix, result })
        })
        .collect()
}

/// One line per loop per run: IAE, mean miss ratio and divergence flag.
pub fn loop_table(outcomes: &[Outcome]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:>6} {:>5} {:>14} {:>9} {:>9}",
        "scheme", "seed", "loop", "IAE", "mean_DMR", "diverged"
    );
    for o in outcomes {
        let sum = &o.result.summary;
        for l in &sum.loops {
            let _ = writeln!(
                s,
                "{:<6} {:>6} {:>5} {:>14.4} {:>9.4} {:>9}",
                sum.scheme,
                sum.seed,
                l.loop_id,
                l.iae,
                l.mean_dmr,
                if l.diverged { "yes" } else { "no" }
            );
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stats> {
        let mut n = 0usize;
        let (mut sum, mut min, mut max) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        (n > 0).then(|| Stats {
            mean: sum / n as f64,
            min,
            max,
        })
    }
}

/// Mean/min/max across seeds of each run's total IAE and loop-averaged
/// miss ratio, grouped by scheme.
pub fn aggregate_table(outcomes: &[Outcome]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:>5} {:<9} {:>14} {:>14} {:>14} {:>9}",
        "scheme", "runs", "metric", "mean", "min", "max", "diverged"
    );
    for scheme in [Scheme::Tt, Scheme::Ftt] {
        let runs: Vec<&Summary> = outcomes
            .iter()
            .map(|o| &o.result.summary)
            .filter(|sum| sum.scheme == scheme.label())
            .collect();
        if runs.is_empty() {
            continue;
        }
        let diverged = runs
            .iter()
            .filter(|sum| sum.loops.iter().any(|l| l.diverged))
            .count();
        let iae = Stats::of(runs.iter().map(|sum| sum.total_iae()));
        let dmr = Stats::of(runs.iter().map(|sum| {
            sum.loops.iter().map(|l| l.mean_dmr).sum::<f64>() / sum.loops.len().max(1) as f64
        }));
        for (metric, st) in [("IAE", iae), ("mean_DMR", dmr)] {
            let st = st.expect("non-empty group");
            let _ = writeln!(
                s,
                "{:<6} {:>5} {:<9} {:>14.4} {:>14.4} {:>14.4} {:>9}",
                scheme.label(),
                runs.len(),
                metric,
                st.mean,
                st.min,
                st.max,
                diverged
            );
        }
    }
    s
}
