use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gamechat::{run_config, Backend, MethodSelection, RunConfig, RunError, VariantSelection};
use gamechat_core::ScenarioKind;

/// Run doorway or intersection social mini-game suites.
///
/// Values from `--config` are applied first; flags override them.
#[derive(Debug, Parser)]
#[command(name = "gamechat", version)]
struct Cli {
    /// Flat JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// doorway or intersection.
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// Variant index (0-17) or "all".
    #[arg(long)]
    variant: Option<VariantSelection>,
    /// Method name or "all".
    #[arg(long)]
    method: Option<MethodSelection>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Seed for task-string draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sim seconds between dialogue messages.
    #[arg(long)]
    latency: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
}

impl Cli {
    fn into_config(self) -> Result<RunConfig, RunError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.scenario {
            cfg.scenario = v;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.backend {
            cfg.backend = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.out {
            cfg.output_dir = v;
        }
        if let Some(v) = self.latency {
            cfg.latency = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.t_max {
            cfg.t_max = v;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = cli.into_config().and_then(|cfg| {
        let out = run_config(&cfg)?;
        print!("{}", out.table);
        println!("wrote {} runs to {}", out.records.len(), cfg.output_dir.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ RunError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
