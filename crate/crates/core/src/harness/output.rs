use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::experiment::{ExperimentResult, Series, TraceRecord};
use super::plot::{render, Line};
use super::run::RegretTrace;
use crate::error::{Error, Result};

pub const SUMMARY_SCHEMA: u32 = 1;

pub const CSV_HEADER: [&str; 7] = [
    "experiment",
    "algo",
    "sweep_key",
    "sweep_value",
    "seed",
    "episode",
    "cum_regret",
];

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    experiment: String,
    algo: Algorithm,
    sweep_key: String,
    sweep_value: usize,
    seed: u64,
    episode: usize,
    cum_regret: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the long-form trace table. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_regret_csv<W: Write>(out: W, experiment: &str, records: &[TraceRecord]) -> Result<()> {
    let path = Path::new("regret.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
    for rec in records {
        for (k, &r) in rec.trace.cum_regret.iter().enumerate() {
            w.serialize(CsvRow {
                experiment: experiment.to_string(),
                algo: rec.trace.algo,
                sweep_key: rec.sweep_key.clone(),
                sweep_value: rec.sweep_value,
                seed: rec.trace.seed,
                episode: k + 1,
                cum_regret: r,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a table written by [`write_regret_csv`]. Consecutive rows with the
/// same algorithm, sweep point and seed form one trace; reps are numbered in
/// order of appearance within each (sweep point, algorithm) group.
pub fn read_regret_csv<R: Read>(input: R) -> Result<(Option<String>, Vec<TraceRecord>)> {
    let path = Path::new("regret.csv");
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!("unexpected CSV header: {header:?}")));
    }
    let mut experiment: Option<String> = None;
    let mut records: Vec<TraceRecord> = Vec::new();
    for row in reader.deserialize::<CsvRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        match &experiment {
            None => experiment = Some(row.experiment.clone()),
            Some(e) if *e != row.experiment => {
                return Err(Error::Parse("mixed experiment ids in one table".into()));
            }
            _ => {}
        }
        let same = records.last().is_some_and(|r| {
            r.trace.algo == row.algo
                && r.trace.seed == row.seed
                && r.sweep_key == row.sweep_key
                && r.sweep_value == row.sweep_value
        });
        if same && row.episode != 1 {
            let last = records.last_mut().expect("checked above");
            if row.episode != last.trace.cum_regret.len() + 1 {
                return Err(Error::Parse(format!(
                    "episode {} out of order for seed {}",
                    row.episode, row.seed
                )));
            }
            last.trace.cum_regret.push(row.cum_regret);
            continue;
        }
        if row.episode != 1 {
            return Err(Error::Parse(format!(
                "trace for seed {} starts at episode {}",
                row.seed, row.episode
            )));
        }
        let rep = records
            .iter()
            .filter(|r| {
                r.trace.algo == row.algo
                    && r.sweep_key == row.sweep_key
                    && r.sweep_value == row.sweep_value
            })
            .count();
        records.push(TraceRecord {
            sweep_key: row.sweep_key,
            sweep_value: row.sweep_value,
            rep,
            trace: RegretTrace {
                algo: row.algo,
                seed: row.seed,
                cum_regret: vec![row.cum_regret],
            },
        });
    }
    Ok((experiment, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRegretRow {
    pub sweep_key: String,
    pub sweep_value: usize,
    pub algo: Algorithm,
    pub reps: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algo: Algorithm,
    pub sweep_key: String,
    pub sweep_value: usize,
    pub rep: usize,
    pub seed: u64,
    pub final_regret: f64,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub band: String,
    pub series: Vec<Series>,
    pub final_regret: Vec<FinalRegretRow>,
    pub runs: Vec<RunSummary>,
}

impl Summary {
    pub fn new(result: &ExperimentResult) -> Self {
        Summary {
            schema: SUMMARY_SCHEMA,
            config: result.config.clone(),
            band: "population standard deviation across runs".into(),
            series: result.series.clone(),
            final_regret: result
                .series
                .iter()
                .map(|s| FinalRegretRow {
                    sweep_key: s.sweep_key.clone(),
                    sweep_value: s.sweep_value,
                    algo: s.algo,
                    reps: s.reps,
                    mean: s.final_mean,
                    std: s.final_std,
                })
                .collect(),
            runs: result
                .runs
                .iter()
                .map(|r| RunSummary {
                    algo: r.output.trace.algo,
                    sweep_key: r.sweep_key.clone(),
                    sweep_value: r.sweep_value,
                    rep: r.rep,
                    seed: r.output.trace.seed,
                    final_regret: r.output.trace.final_regret(),
                    wall_clock_secs: r.output.wall_clock_secs,
                })
                .collect(),
        }
    }
}

/// Curves per algorithm for an unswept experiment, final regret against the
/// swept parameter otherwise.
pub fn render_plot(result: &ExperimentResult) -> String {
    let title = format!("{} cumulative regret", result.config.experiment);
    let swept = result.config.sweep.as_ref();
    match swept {
        None => {
            let lines: Vec<Line<'_>> = result
                .series
                .iter()
                .map(|s| Line {
                    label: s.algo.to_string(),
                    xs: (1..=s.mean.len()).map(|k| k as f64).collect(),
                    mean: &s.mean,
                    std: &s.std,
                })
                .collect();
            render(&title, "episode", "cumulative regret", &lines)
        }
        Some(sweep) => {
            let mut algos: Vec<Algorithm> = Vec::new();
            for s in &result.series {
                if !algos.contains(&s.algo) {
                    algos.push(s.algo);
                }
            }
            type Column = (Algorithm, Vec<f64>, Vec<f64>, Vec<f64>);
            let columns: Vec<Column> = algos
                .iter()
                .map(|&a| {
                    let pts: Vec<&Series> = result.series.iter().filter(|s| s.algo == a).collect();
                    (
                        a,
                        pts.iter().map(|s| s.sweep_value as f64).collect(),
                        pts.iter().map(|s| s.final_mean).collect(),
                        pts.iter().map(|s| s.final_std).collect(),
                    )
                })
                .collect();
            let lines: Vec<Line<'_>> = columns
                .iter()
                .map(|(a, xs, mean, std)| Line {
                    label: a.to_string(),
                    xs: xs.clone(),
                    mean,
                    std,
                })
                .collect();
            render(
                &title,
                sweep.axis.as_str(),
                "final cumulative regret",
                &lines,
            )
        }
    }
}

/// Paths of the three emitted files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedFiles {
    pub regret_csv: PathBuf,
    pub summary_json: PathBuf,
    pub plot_svg: PathBuf,
}

/// Writes `regret.csv`, `summary.json` and `plot.svg` into `dir`, replacing
/// earlier copies.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<EmittedFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = EmittedFiles {
        regret_csv: dir.join("regret.csv"),
        summary_json: dir.join("summary.json"),
        plot_svg: dir.join("plot.svg"),
    };
    let mut csv_bytes = Vec::new();
    write_regret_csv(
        &mut csv_bytes,
        result.config.experiment.as_str(),
        &result.trace_records(),
    )?;
    fs::write(&files.regret_csv, csv_bytes).map_err(|e| Error::io(&files.regret_csv, e))?;
    let summary = serde_json::to_string_pretty(&Summary::new(result))
        .map_err(|e| Error::Internal(format!("summary serialization: {e}")))?;
    fs::write(&files.summary_json, summary + "\n")
        .map_err(|e| Error::io(&files.summary_json, e))?;
    fs::write(&files.plot_svg, render_plot(result)).map_err(|e| Error::io(&files.plot_svg, e))?;
    Ok(files)
}
