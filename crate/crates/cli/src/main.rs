use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use slowfast_cli::commands::{self, TokenizeMode};
use slowfast_cli::{load_manifest, output, CliError, CliResult, PipelineConfig};
use slowfast_core::grounding::ParseMode;
use slowfast_core::packing::ModalityTokens;

/// Slow-Fast video tokenization, packing and objective tools.
#[derive(Parser)]
#[command(name = "slowfast", version)]
struct Cli {
    /// Pipeline configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify manifest frames as Slow or Fast.
    Classify {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Solve the token budget and emit the layout and rotary index table.
    Tokenize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Video)]
        mode: Mode,
    },
    /// Pack sequences into fixed-capacity context windows.
    Pack {
        #[command(flatten)]
        items: ItemArgs,
    },
    /// Balance sequences across workers, then pack each worker's share.
    Balance {
        #[command(flatten)]
        items: ItemArgs,
        /// Worker count (default from config).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Per-modality token targets for one window.
    Mixture {
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        video: usize,
        #[arg(long)]
        image: usize,
        #[arg(long)]
        text: usize,
    },
    /// Parse or emit grounding markup.
    Grounding {
        #[command(subcommand)]
        action: GroundingAction,
    },
    /// Evaluate the GSPO objective over a JSON batch of groups.
    GspoEval {
        /// Batch file, or `-` for stdin.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args)]
struct ItemArgs {
    /// Items file, or `-` for stdin.
    #[arg(long)]
    items: PathBuf,
    /// Window capacity in tokens (default from config).
    #[arg(long)]
    capacity: Option<usize>,
    /// Include per-token segment ids for every window.
    #[arg(long)]
    segment_ids: bool,
}

#[derive(Subcommand)]
enum GroundingAction {
    /// Markup text to items JSON.
    Parse {
        #[arg(long)]
        input: PathBuf,
        /// Fail on the first malformed span (default).
        #[arg(long, conflicts_with = "lenient")]
        strict: bool,
        /// Skip malformed spans and report them as issues.
        #[arg(long)]
        lenient: bool,
    },
    /// Items JSON to markup text, one item per line.
    Emit {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Image,
    Video,
}

fn read_input(path: &Path) -> CliResult<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Input(format!("cannot read stdin: {e}")))?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
    }
}

fn json<T: Serialize>(data: &T) -> CliResult<String> {
    output::render(data)
}

fn run(cli: Cli) -> CliResult<String> {
    let cfg = PipelineConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Classify { manifest } => json(&commands::cmd_classify(&load_manifest(&manifest)?, &cfg)?),
        Command::Tokenize { manifest, mode } => {
            let mode = match mode {
                Mode::Image => TokenizeMode::Image,
                Mode::Video => TokenizeMode::Video,
            };
            json(&commands::cmd_tokenize(&load_manifest(&manifest)?, &cfg, mode)?)
        }
        Command::Pack { items } => {
            let parsed = commands::parse_items(&read_input(&items.items)?, &cfg.packing.cost)?;
            let capacity = items.capacity.unwrap_or(cfg.packing.capacity);
            json(&commands::cmd_pack(&parsed, capacity, items.segment_ids)?)
        }
        Command::Balance { items, workers } => {
            let parsed = commands::parse_items(&read_input(&items.items)?, &cfg.packing.cost)?;
            let capacity = items.capacity.unwrap_or(cfg.packing.capacity);
            let workers = workers.unwrap_or(cfg.packing.n_workers);
            json(&commands::cmd_balance(&parsed, workers, capacity, items.segment_ids)?)
        }
        Command::Mixture {
            budget,
            video,
            image,
            text,
        } => json(&commands::cmd_mixture(ModalityTokens { video, image, text }, budget, &cfg)?),
        Command::Grounding { action } => match action {
            GroundingAction::Parse { input, lenient, .. } => {
                let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
                json(&commands::cmd_grounding_parse(&read_input(&input)?, mode)?)
            }
            GroundingAction::Emit { input } => commands::cmd_grounding_emit(&read_input(&input)?),
        },
        Command::GspoEval { input } => json(&commands::cmd_gspo_eval(&read_input(&input)?)?),
    }
}

/// Size the global thread pool from `SLOWFAST_THREADS`, if set.
fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("SLOWFAST_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Input(format!("SLOWFAST_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot start thread pool: {e}")))
}

fn main() {
    let cli = Cli::parse();
    let out_path = cli.out.clone();
    let result = init_threads().and_then(|_| run(cli)).and_then(|text| match &out_path {
        Some(p) => std::fs::write(p, &text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("cannot write stdout: {e}"))),
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        process::exit(e.exit_code() as i32);
    }
}
