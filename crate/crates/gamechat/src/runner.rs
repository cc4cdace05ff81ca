use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use gamechat_core::metrics::{aggregate_suite, SummaryTable};
use gamechat_core::{Method, RuleBackend, RunOptions, RunOutcome, RunRecord, ScenarioSpec, Simulation};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{Backend, ConfigError, RunConfig};
use crate::llm::{LlmBackend, LlmConfig};
use crate::output;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{run_id}: {message}")]
    Simulation { run_id: String, message: String },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Summary(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn run_id(spec: &ScenarioSpec, method: Method) -> String {
    format!("{}-{}", spec.id(), method.name())
}

/// Runs one scenario with one method. `llm` selects the chat backend for
/// methods that negotiate; everything else uses the rule backend.
pub fn execute(
    spec: &ScenarioSpec,
    method: Method,
    options: RunOptions,
    llm: Option<&LlmConfig>,
) -> Result<RunOutcome, RunError> {
    let sim = Simulation::new(spec, method, options);
    let result = match llm {
        Some(cfg) if method.uses_dialogue() => sim.run(&mut LlmBackend::new(cfg.clone())),
        _ => sim.run(&mut RuleBackend::default()),
    };
    result.map_err(|e| RunError::Simulation {
        run_id: run_id(spec, method),
        message: e.to_string(),
    })
}

/// Writes `trajectory.csv`, `dialogue.jsonl` and `record.json` under
/// `dir/<run_id>/`.
pub fn write_run(dir: &Path, outcome: &RunOutcome, record: &RunRecord) -> Result<PathBuf, RunError> {
    let id = run_id(&outcome.spec, outcome.method);
    let run_dir = dir.join(&id);
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;

    let path = run_dir.join("trajectory.csv");
    let file = File::create(&path).map_err(io_err(&path))?;
    output::write_trajectory(BufWriter::new(file), &id, &outcome.ticks).map_err(|source| RunError::Csv {
        path: path.clone(),
        source,
    })?;

    let entries = output::dialogue_entries(outcome);
    if !entries.is_empty() {
        let path = run_dir.join("dialogue.jsonl");
        let file = File::create(&path).map_err(io_err(&path))?;
        output::write_json_lines(BufWriter::new(file), entries).map_err(io_err(&path))?;
    }

    let path = run_dir.join("record.json");
    let text = serde_json::to_string_pretty(record).map_err(|e| io_err(&path)(e.into()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(run_dir)
}

#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub records: Vec<RunRecord>,
    pub table: SummaryTable,
}

pub fn run_options(cfg: &RunConfig) -> RunOptions {
    RunOptions {
        latency: cfg.latency,
        t_max: Some(cfg.t_max),
        ..RunOptions::default()
    }
}

/// Runs every selected (variant, method) pair, writes per-run files plus
/// `config.json`, `records.jsonl`, `summary.txt` and `summary.jsonl` to the
/// output directory.
pub fn run_config(cfg: &RunConfig) -> Result<SuiteOutput, RunError> {
    cfg.validate()?;
    let llm = match cfg.backend {
        Backend::Llm if cfg.needs_llm() => Some(LlmConfig::from_env()?),
        _ => None,
    };
    let specs = cfg.scenarios()?;
    let methods = cfg.methods();
    let jobs: Vec<(&ScenarioSpec, Method)> = methods
        .iter()
        .flat_map(|&m| specs.iter().map(move |s| (s, m)))
        .collect();
    let out_dir = &cfg.output_dir;
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    let options = run_options(cfg);
    let path = out_dir.join("config.json");
    let text = serde_json::to_string_pretty(cfg).map_err(|e| io_err(&path)(e.into()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;

    let records = jobs
        .par_iter()
        .map(|&(spec, method)| {
            let outcome = execute(spec, method, options, llm.as_ref())?;
            let record = outcome.record();
            write_run(&runs_dir, &outcome, &record)?;
            log::info!(
                "{} makespan={:?} deadlocks={} collisions={}",
                record.scenario_id,
                record.makespan,
                record.deadlocks,
                record.collisions
            );
            Ok(record)
        })
        .collect::<Result<Vec<_>, RunError>>()?;

    let table = aggregate_suite(cfg.scenario.name(), &records).map_err(|e| RunError::Summary(e.to_string()))?;

    let path = out_dir.join("records.jsonl");
    let file = File::create(&path).map_err(io_err(&path))?;
    output::write_records(BufWriter::new(file), &records).map_err(io_err(&path))?;
    let path = out_dir.join("summary.txt");
    fs::write(&path, table.to_string()).map_err(io_err(&path))?;
    let path = out_dir.join("summary.jsonl");
    let file = File::create(&path).map_err(io_err(&path))?;
    output::write_summary_json(BufWriter::new(file), &table).map_err(io_err(&path))?;

    Ok(SuiteOutput { records, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{MethodSelection, VariantSelection};
    use gamechat_core::ScenarioKind;

    #[test]
    fn single_run_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            scenario: ScenarioKind::Doorway,
            variant: VariantSelection::One(0),
            method: MethodSelection::One(Method::GameChatSmgComm),
            output_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        let out = run_config(&cfg).unwrap();
        assert_eq!(out.records.len(), 1);
        let run = dir.path().join("runs").join("doorway-v00-gamechat-smg-comm");
        for f in ["trajectory.csv", "dialogue.jsonl", "record.json"] {
            assert!(run.join(f).is_file(), "{f}");
        }
        for f in ["config.json", "records.jsonl", "summary.txt", "summary.jsonl"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let record: RunRecord = serde_json::from_str(&fs::read_to_string(run.join("record.json")).unwrap()).unwrap();
        assert_eq!(record.scenario_id, out.records[0].scenario_id);
        assert_eq!(record.method, Method::GameChatSmgComm);
        assert_eq!(record.consensus_correct, Some(true));
    }

    #[test]
    fn baselines_write_no_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            variant: VariantSelection::One(1),
            method: MethodSelection::One(Method::MpcCbf),
            output_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        run_config(&cfg).unwrap();
        let run = dir.path().join("runs").join("doorway-v01-mpc-cbf");
        assert!(run.join("trajectory.csv").is_file());
        assert!(!run.join("dialogue.jsonl").exists());
    }

    #[test]
    fn invalid_config_is_rejected_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            dt: -0.2,
            output_dir: dir.path().join("out"),
            ..RunConfig::default()
        };
        assert!(matches!(run_config(&cfg), Err(RunError::Config(_))));
        assert!(!dir.path().join("out").exists());
    }
}
