use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chronoforge_core::pipeline::{Pipeline, RunConfig};
use chronoforge_core::Error;

#[derive(Parser)]
#[command(
    name = "chronoforge",
    version,
    about = "Time-aware predictive modeling over relational data"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, short, global = true, default_value = "run.json")]
    config: PathBuf,
    /// Where artifacts are read and written; overrides the config's output_dir.
    #[arg(long, global = true, env = "CHRONOFORGE_OUTPUT")]
    output_dir: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps worker threads. Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Search training examples for every split.
    Labels,
    /// Synthesize features and compute one matrix per split.
    Features,
    /// Search models and write the model, leaderboard and provenance.
    Train,
    /// Run the integration harness at the configured current time.
    Test,
    /// Replay the model on labeled production data.
    Validate,
    /// Score every target instance at the configured current time.
    Predict,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Labels => "labels",
            Command::Features => "features",
            Command::Train => "train",
            Command::Test => "test",
            Command::Validate => "validate",
            Command::Predict => "predict",
        }
    }
}

fn run(cli: &Cli) -> Result<bool, Error> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.validate()?;
    }
    let p = Pipeline::from_config(config, cli.output_dir.clone())?;
    let dir = p.output_dir.display();
    match cli.command {
        Command::Labels => {
            for (split, lt) in chronoforge_core::pipeline::SPLIT_IDS.iter().zip(p.labels()?) {
                println!("{split}: {} label times", lt.len());
            }
        }
        Command::Features => {
            let (fl, matrices) = p.features()?;
            println!("{} features, {} rows per split", fl.len(), {
                let n: Vec<String> = matrices.iter().map(|m| m.n_rows().to_string()).collect();
                n.join("/")
            });
        }
        Command::Train => {
            let out = p.train()?;
            let a = &out.artifact;
            println!(
                "{} ({} configurations), threshold {}, mean test cost {}",
                a.method_key,
                out.leaderboard.len(),
                a.threshold,
                a.mean_test_cost
            );
            println!("wrote {dir}/model_provenance.json");
        }
        Command::Test => {
            let r = p.test()?;
            for s in &r.steps {
                let status = if s.passed { "ok" } else { "FAILED" };
                println!(
                    "{}: {status}{}",
                    s.step,
                    s.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default()
                );
            }
            println!("{} predictions at {}", r.predictions.len(), r.current_time);
            return Ok(r.passed);
        }
        Command::Validate => {
            let v = p.validate()?;
            let r = &v.report;
            println!(
                "{} of {} rows labelable, cost {}",
                r.n_labeled,
                r.n_requested,
                r.cost.map(|c| c.to_string()).unwrap_or_else(|| "n/a".into())
            );
            println!("{} drift entries", v.drift.entries.len());
        }
        Command::Predict => {
            let (preds, drift) = p.predict()?;
            println!("{} predictions, {} drift entries", preds.len(), drift.entries.len());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("chronoforge {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
