use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::run::{
    make_instance, run_seed, run_single, sweep_points, PreparedInstance, RegretTrace, RunOutput,
    SweepPoint,
};
use crate::error::{Error, Result};

/// A trace tagged with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sweep_key: String,
    pub sweep_value: usize,
    pub rep: usize,
    pub trace: RegretTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub sweep_key: String,
    pub sweep_value: usize,
    pub rep: usize,
    pub output: RunOutput,
}

/// Mean and population standard deviation over reps, per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub sweep_key: String,
    pub sweep_value: usize,
    pub algo: Algorithm,
    pub reps: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub final_mean: f64,
    pub final_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub series: Vec<Series>,
}

impl ExperimentResult {
    pub fn trace_records(&self) -> Vec<TraceRecord> {
        self.runs
            .iter()
            .map(|r| TraceRecord {
                sweep_key: r.sweep_key.clone(),
                sweep_value: r.sweep_value,
                rep: r.rep,
                trace: r.output.trace.clone(),
            })
            .collect()
    }

    pub fn series_for(&self, algo: Algorithm, sweep_value: usize) -> Option<&Series> {
        self.series
            .iter()
            .find(|s| s.algo == algo && s.sweep_value == sweep_value)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups traces by (sweep point, algorithm) in order of first appearance and
/// reduces each group in record order.
pub fn aggregate(records: &[TraceRecord]) -> Result<Vec<Series>> {
    let mut groups: Vec<(&str, usize, Algorithm, Vec<&[f64]>)> = Vec::new();
    for rec in records {
        let key = (rec.sweep_key.as_str(), rec.sweep_value, rec.trace.algo);
        match groups.iter_mut().find(|g| (g.0, g.1, g.2) == key) {
            Some(g) => g.3.push(&rec.trace.cum_regret),
            None => groups.push((key.0, key.1, key.2, vec![&rec.trace.cum_regret])),
        }
    }
    groups
        .into_iter()
        .map(|(key, value, algo, traces)| {
            let len = traces[0].len();
            if traces.iter().any(|t| t.len() != len) {
                return Err(Error::Parse(format!(
                    "{algo} at {key}={value}: traces have different lengths"
                )));
            }
            let mut mean = Vec::with_capacity(len);
            let mut std = Vec::with_capacity(len);
            let mut column = Vec::with_capacity(traces.len());
            for k in 0..len {
                column.clear();
                column.extend(traces.iter().map(|t| t[k]));
                let (m, s) = mean_std(&column);
                mean.push(m);
                std.push(s);
            }
            Ok(Series {
                sweep_key: key.to_string(),
                sweep_value: value,
                algo,
                reps: traces.len(),
                final_mean: mean.last().copied().unwrap_or(0.0),
                final_std: std.last().copied().unwrap_or(0.0),
                mean,
                std,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Task {
    point: usize,
    algo: Algorithm,
    rep: usize,
}

fn tasks(config: &ExperimentConfig, n_points: usize) -> Vec<Task> {
    let mut out = Vec::with_capacity(n_points * config.algos.len() * config.reps);
    for point in 0..n_points {
        for &algo in &config.algos {
            for rep in 0..config.reps {
                out.push(Task { point, algo, rep });
            }
        }
    }
    out
}

#[cfg(feature = "parallel")]
fn map_tasks<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if jobs == 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Internal(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_tasks<T, R, F>(_jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    F: Fn(&T) -> R,
{
    Ok(items.iter().map(f).collect())
}

/// Runs every (sweep point, algorithm, rep) and aggregates.
///
/// Runs are spread over `config.jobs` workers; results are reduced in task
/// order, so the output does not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let points = sweep_points(config);
    let reps = config.reps;
    let slots: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..reps).map(move |r| (p, r)))
        .collect();
    let prepared: Vec<PreparedInstance> = map_tasks(config.jobs, &slots, |&(p, rep)| {
        make_instance(config, points[p], rep)
            .and_then(|inst| PreparedInstance::new(inst, config.start_state))
    })?
    .into_iter()
    .collect::<Result<_>>()?;
    let tasks = tasks(config, points.len());
    let outputs = map_tasks(config.jobs, &tasks, |t| {
        let point: SweepPoint = points[t.point];
        let seed = run_seed(config.seed, t.algo, point, t.rep);
        run_single(config, &prepared[t.point * reps + t.rep], t.algo, seed).map_err(|e| {
            Error::Run {
                run: format!(
                    "{} {} {}={} rep {} seed {seed}",
                    config.experiment, t.algo, point.key, point.value, t.rep
                ),
                source: Box::new(e),
            }
        })
    })?;
    let mut runs = Vec::with_capacity(tasks.len());
    for (task, output) in tasks.iter().zip(outputs) {
        let point = points[task.point];
        runs.push(RunRecord {
            sweep_key: point.key.to_string(),
            sweep_value: point.value,
            rep: task.rep,
            output: output?,
        });
    }
    let mut result = ExperimentResult {
        config: config.clone(),
        runs,
        series: Vec::new(),
    };
    result.series = aggregate(&result.trace_records())?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentKind;

    fn record(algo: Algorithm, seed: u64, values: &[f64]) -> TraceRecord {
        TraceRecord {
            sweep_key: "none".into(),
            sweep_value: 0,
            rep: 0,
            trace: RegretTrace {
                algo,
                seed,
                cum_regret: values.to_vec(),
            },
        }
    }

    #[test]
    fn single_rep_has_zero_std() {
        let s = aggregate(&[record(Algorithm::CUcbvi, 1, &[0.5, 1.0, 2.0])]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].std, vec![0.0; 3]);
        assert_eq!(s[0].mean, vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn identical_reps_collapse() {
        let r = record(Algorithm::Ucbvi, 3, &[0.1, 0.7]);
        let s = aggregate(&[r.clone(), r]).unwrap();
        assert_eq!(s[0].mean, vec![0.1, 0.7]);
        assert_eq!(s[0].std, vec![0.0, 0.0]);
        assert_eq!(s[0].reps, 2);
    }

    #[test]
    fn population_std() {
        let s = aggregate(&[
            record(Algorithm::CUcbvi, 1, &[1.0]),
            record(Algorithm::CUcbvi, 2, &[3.0]),
            record(Algorithm::CfUcbvi, 1, &[5.0]),
        ])
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].final_mean, s[0].final_std), (2.0, 1.0));
        assert_eq!(s[1].algo, Algorithm::CfUcbvi);
    }

    #[test]
    fn ragged_traces_are_rejected() {
        let err = aggregate(&[
            record(Algorithm::CUcbvi, 1, &[1.0]),
            record(Algorithm::CUcbvi, 2, &[1.0, 2.0]),
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn experiment_covers_every_task_in_order() {
        let cfg = ExperimentConfig {
            m: 2,
            n: 1,
            d_s: 2,
            horizon: 2,
            episodes: 5,
            reps: 2,
            jobs: 2,
            sweep: Some(crate::harness::config::Sweep {
                axis: crate::harness::config::SweepAxis::M,
                values: vec![2, 3],
            }),
            experiment: ExperimentKind::Exp2,
            ..ExperimentConfig::preset(ExperimentKind::Exp2)
        };
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.runs.len(), 2 * 4 * 2);
        assert_eq!(res.series.len(), 2 * 4);
        assert_eq!(res.runs[0].sweep_value, 2);
        assert_eq!(res.runs[1].rep, 1);
        assert_eq!(res.runs[2].output.trace.algo, cfg.algos[1]);
        let seq = run_experiment(&ExperimentConfig { jobs: 1, ..cfg }).unwrap();
        assert_eq!(seq.series, res.series);
    }
}
