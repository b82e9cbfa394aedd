use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use distillstream::synthetic::SyntheticSpec;
use distillstream_cli::ablation::{default_grid, parse_grid, run_ablation};
use distillstream_cli::pipeline::{self, AtStage, Stage, StageError};
use distillstream_cli::{run_pipeline, synth, LoadedConfig};

#[derive(Parser)]
#[command(name = "distillstream", version, about = "Distill a text sentiment teacher into an image student")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for every parallel stage.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress and keep per-pair dedup decisions.
    #[arg(long, global = true)]
    verbose: bool,
    /// Config override, e.g. `--set train.gating.c=[0.7,0.7,0.7]`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Read and filter the corpus.
    Ingest,
    /// Drop near-duplicate images.
    Dedup,
    /// Score retained pairs with the teacher.
    Label,
    /// Train the student on gated teacher labels.
    Train,
    /// Evaluate the checkpoint on the configured benchmarks.
    Eval,
    /// All stages plus the manifest.
    Run,
    /// Retrain over a grid of gating thresholds.
    Ablate {
        /// Rows separated by `;`, e.g. "0,0,0;.7,.7,.7;.9,.9,.7".
        #[arg(long)]
        grid: Option<String>,
    },
    /// Write a synthetic corpus, ground truth, lexicons and a config.
    GenSynthetic(GenArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n_records: usize,
    #[arg(long, default_value_t = 0.2)]
    dup_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    noise_sigma: f64,
    /// Class priors as "pos,neu,neg"; uniform by default.
    #[arg(long)]
    priors: Option<String>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0.0)]
    multi_image_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    filter_reject_rate: f64,
    /// Also write a binary benchmark with this many items.
    #[arg(long, default_value_t = 0)]
    bench_items: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(Stage::Config.exit_code() as u8);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}

fn load(cli: &Cli) -> Result<LoadedConfig, StageError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config is required"))
        .at(Stage::Config)?;
    LoadedConfig::load(path, &cli.overrides, cli.seed).at(Stage::Config)
}

fn log(cli: &Cli, msg: impl AsRef<str>) {
    if cli.verbose {
        eprintln!("{}", msg.as_ref());
    }
}

fn dispatch(cli: &Cli) -> Result<(), StageError> {
    match &cli.command {
        Command::GenSynthetic(g) => return gen(g, cli.seed.unwrap_or(0)),
        Command::Run => {
            let cfg = load(cli)?;
            return match run_pipeline(&cfg, cli.verbose) {
                Ok(m) => {
                    print!("{}", m.render());
                    Ok(())
                }
                Err((m, e)) => {
                    log(cli, m.render());
                    Err(e)
                }
            };
        }
        Command::Ablate { grid } => {
            let cfg = load(cli)?;
            let grid = match grid {
                Some(g) => parse_grid(g).at(Stage::Config)?,
                None => default_grid(),
            };
            print!("{}", run_ablation(&cfg, &grid)?.render());
            return Ok(());
        }
        _ => {}
    }
    let cfg = load(cli)?;
    cfg.check_inputs().at(Stage::Config)?;
    let out = cfg.output_dir();
    match &cli.command {
        Command::Ingest => {
            let r = pipeline::ingest(&cfg, &out).at(Stage::Ingest)?;
            println!(
                "read {} records ({} malformed skipped), admitted {}, {} pairs",
                r.records_read, r.skipped_malformed, r.admitted, r.pairs
            );
        }
        Command::Dedup => {
            let r = pipeline::dedup(&cfg, &out, cli.verbose).at(Stage::Dedup)?;
            println!("seen {}, retained {}, dropped {}", r.seen, r.retained, r.dropped);
        }
        Command::Label => {
            let r = pipeline::label(&cfg, &out).at(Stage::Label)?;
            println!("labelled {} pairs, {} pass the gate", r.pairs, r.gated);
        }
        Command::Train => {
            let r = pipeline::train(&cfg, &out, &out, &cfg.config.train).at(Stage::Train)?;
            println!(
                "trained on {} gated samples, held-out agreement {}",
                r.train_size,
                r.heldout_agreement.map_or("n/a".into(), |a| format!("{:.3}", a))
            );
        }
        Command::Eval => {
            for r in pipeline::eval(&cfg, &out, false).at(Stage::Eval)? {
                println!("{}: {}", r.benchmark, r.summary());
            }
        }
        Command::Run | Command::Ablate { .. } | Command::GenSynthetic(_) => unreachable!("handled above"),
    }
    Ok(())
}

fn gen(g: &GenArgs, seed: u64) -> Result<(), StageError> {
    let mut spec = SyntheticSpec::default();
    if let Some(p) = &g.priors {
        let priors: Vec<f64> = p
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(anyhow::Error::from)
            .at(Stage::Config)?;
        spec.class_priors = priors
            .try_into()
            .map_err(|_| anyhow::anyhow!("--priors needs three values"))
            .at(Stage::Config)?;
    }
    let spec = SyntheticSpec {
        n_records: g.n_records,
        dup_rate: g.dup_rate,
        noise_sigma: g.noise_sigma,
        seed,
        multi_image_rate: g.multi_image_rate,
        filter_reject_rate: g.filter_reject_rate,
        dim: g.dim,
        ..spec
    };
    let truth = synth::generate(&g.out, &spec, g.bench_items).at(Stage::Config)?;
    println!(
        "wrote {} records, {} images, {} planted duplicates to {}",
        truth.records.len(),
        truth.images,
        truth.planted_duplicates,
        g.out.display()
    );
    Ok(())
}
