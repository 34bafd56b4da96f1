mod commands;
mod error;
mod run;
mod settings;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::*;
use error::{CliError, EXIT_INPUT, EXIT_INVARIANT, EXIT_USAGE, EXIT_VALIDATION};
use run::Run;
use settings::{Settings, KEYS, SYNTH_PREFIX};

/// Core blackmarket user detection from collusive commenting logs.
#[derive(Parser, Debug)]
#[command(name = "korse", version)]
struct Cli {
    /// Flat `key=value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Top-level seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides `threads`).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Configuration override; repeatable.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, short = 'o', global = true, default_value = ".", value_name = "DIR")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest a dataset directory and report referential-integrity problems.
    IngestCheck {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Build the collusive commenting network.
    BuildCcn {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Use every video, not only collusive ones.
        #[arg(long)]
        all_videos: bool,
    },
    /// Coreness of every node.
    Kcore {
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        /// weighted or unweighted (overrides `core_mode`).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Core/periphery partition by the weighted coreness sweep.
    Korse {
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        /// Density exponent (overrides `beta`).
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Component structure while removing nodes by four centrality orders.
    Breakage {
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        /// Checkpoint spacing (overrides `breakage_step`).
        #[arg(long)]
        step: Option<f64>,
    },
    /// Louvain communities of the periphery's largest component.
    Communities {
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        #[arg(long, value_name = "FILE")]
        partition: PathBuf,
    },
    /// Video categories and the community/core interaction table.
    Interplay {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        #[arg(long, value_name = "FILE")]
        partition: PathBuf,
        #[arg(long, value_name = "FILE")]
        communities: PathBuf,
    },
    /// Behavioural statistics of core against compromised users.
    CaseStudy {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        partition: PathBuf,
    },
    /// Per-user feature vectors (labelled when a partition is given).
    Features {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        partition: Option<PathBuf>,
        /// Precomputed embedding file; the stub embedder is used otherwise.
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
    },
    /// Train the classifier on all labelled users.
    NurseTrain {
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
    },
    /// Score users with a trained model and cross-validate its configuration.
    NurseEval {
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// balanced or complete (overrides `eval_mode`).
        #[arg(long)]
        mode: Option<String>,
        /// Overrides `folds`.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Cross-validate every non-empty subset of the three feature branches.
    Ablate {
        #[arg(long, value_name = "FILE")]
        features: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Weighted betweenness ranking, evaluated when features are given.
    BaselineWbc {
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        #[arg(long, value_name = "FILE")]
        features: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Generate a planted dataset (`synth.<field>` keys configure it).
    Synth,
    /// Every step from ingest to evaluation, written into one directory.
    Pipeline {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Planted labels; defaults to `labels.tsv` in the data directory.
        #[arg(long, value_name = "FILE")]
        labels: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        embeddings: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::IngestCheck { .. } => "ingest-check",
            Command::BuildCcn { .. } => "build-ccn",
            Command::Kcore { .. } => "kcore",
            Command::Korse { .. } => "korse",
            Command::Breakage { .. } => "breakage",
            Command::Communities { .. } => "communities",
            Command::Interplay { .. } => "interplay",
            Command::CaseStudy { .. } => "case-study",
            Command::Features { .. } => "features",
            Command::NurseTrain { .. } => "nurse-train",
            Command::NurseEval { .. } => "nurse-eval",
            Command::Ablate { .. } => "ablate",
            Command::BaselineWbc { .. } => "baseline-wbc",
            Command::Synth => "synth",
            Command::Pipeline { .. } => "pipeline",
        }
    }

    /// Subcommand flags that shadow configuration keys.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k: &'static str, x: Option<String>| {
            if let Some(x) = x {
                v.push((k, x));
            }
        };
        match self {
            Command::BuildCcn { all_videos: true, .. } => put("collusive_only", Some("false".into())),
            Command::Kcore { mode, .. } => put("core_mode", mode.clone()),
            Command::Korse { beta, .. } => put("beta", beta.map(|b| b.to_string())),
            Command::Breakage { step, .. } => put("breakage_step", step.map(|s| s.to_string())),
            Command::NurseEval { mode, folds, .. }
            | Command::Ablate { mode, folds, .. }
            | Command::BaselineWbc { mode, folds, .. } => {
                put("eval_mode", mode.clone());
                put("folds", folds.map(|f| f.to_string()));
            }
            _ => {}
        }
        v
    }
}

fn footer() -> String {
    let mut s = String::from("Configuration keys (config file or --set; flags win):\n");
    for (k, d, help) in KEYS {
        let _ = writeln!(s, "  {k:<16} {help} [default: {d}]");
    }
    let _ = writeln!(
        s,
        "  {SYNTH_PREFIX}<field>    planted-data generator parameter (see synth_meta)"
    );
    s.push_str(
        "\nFiles:\n\
         \x20 data dir         comments, videos, users as .jsonl (or .csv with the same columns)\n\
         \x20 ccn.tsv          `# ccn v1` header, user_a<TAB>user_b<TAB>weight\n\
         \x20 coreness.tsv     user_id<TAB>coreness, descending coreness\n\
         \x20 partition.tsv    user_id<TAB>core|periphery plus `# key=value` summary\n\
         \x20 communities.tsv  `# modularity=` header, user_id<TAB>community\n\
         \x20 features.csv     user_id,label,mfe_*,sfe_*,tfe_*\n\
         \x20 model.json       versioned model with config and standardization\n\
         \x20 labels.tsv       user_id<TAB>core|compromised\n\
         \x20 embeddings       `dim=<d>` header, <hex hash><TAB><comma-separated floats>\n\
         Every run writes <command>.manifest.json beside its outputs.\n",
    );
    let _ = write!(
        s,
        "\nExit codes:\n  0  success\n  {EXIT_USAGE}  usage or configuration error\n  \
         {EXIT_INPUT}  input missing or malformed\n  {EXIT_VALIDATION}  data validation failure\n  \
         {EXIT_INVARIANT}  internal invariant violation\n"
    );
    s
}

fn single(command: &Command, run: &mut Run) -> Result<Lines, CliError> {
    match command {
        Command::IngestCheck { data } => ingest_check(run, data),
        Command::BuildCcn { data, .. } => build_ccn_cmd(run, data),
        Command::Kcore { graph, .. } => kcore_cmd(run, graph),
        Command::Korse { graph, .. } => korse_cmd(run, graph),
        Command::Breakage { graph, .. } => breakage_cmd(run, graph),
        Command::Communities { graph, partition } => communities_cmd(run, graph, partition),
        Command::Interplay {
            data,
            graph,
            partition,
            communities,
        } => interplay_cmd(run, data, graph, partition, communities),
        Command::CaseStudy { data, partition } => case_study_cmd(run, data, partition),
        Command::Features {
            data,
            partition,
            embeddings,
        } => features_cmd(run, data, partition.as_deref(), embeddings.as_deref()),
        Command::NurseTrain { features } => nurse_train_cmd(run, features),
        Command::NurseEval { features, model, .. } => nurse_eval_cmd(run, features, model.as_deref()),
        Command::Ablate { features, .. } => ablate_cmd(run, features),
        Command::BaselineWbc { graph, features, .. } => baseline_wbc_cmd(run, graph, features.as_deref()),
        Command::Synth => synth_cmd(run),
        Command::Pipeline { .. } => unreachable!("pipeline runs its steps separately"),
    }
}

/// Runs one command in its own run context and writes its manifest.
fn step(settings: &Settings, out: &Path, command: &Command) -> Result<(Lines, run::RunManifest), CliError> {
    let mut run = Run::new(command.name(), settings, out)?;
    let lines = single(command, &mut run)?;
    let manifest = run.finish()?;
    Ok((lines, manifest))
}

/// The same steps a user would run by hand, reading each output back.
fn pipeline(
    settings: &Settings,
    out: &Path,
    data: &Path,
    labels: Option<&Path>,
    embeddings: Option<&Path>,
) -> Result<Lines, CliError> {
    let at = |name: &str| out.join(name);
    let steps = vec![
        Command::IngestCheck { data: data.into() },
        Command::BuildCcn {
            data: data.into(),
            all_videos: false,
        },
        Command::Kcore {
            graph: at(GRAPH),
            mode: None,
        },
        Command::Korse {
            graph: at(GRAPH),
            beta: None,
        },
        Command::Breakage {
            graph: at(GRAPH),
            step: None,
        },
        Command::Communities {
            graph: at(GRAPH),
            partition: at(PARTITION),
        },
        Command::Interplay {
            data: data.into(),
            graph: at(GRAPH),
            partition: at(PARTITION),
            communities: at(COMMUNITIES),
        },
        Command::CaseStudy {
            data: data.into(),
            partition: at(PARTITION),
        },
        Command::Features {
            data: data.into(),
            partition: Some(at(PARTITION)),
            embeddings: embeddings.map(Path::to_owned),
        },
        Command::NurseTrain { features: at(FEATURES) },
        Command::NurseEval {
            features: at(FEATURES),
            model: Some(at(MODEL)),
            mode: None,
            folds: None,
        },
        Command::BaselineWbc {
            graph: at(GRAPH),
            features: Some(at(FEATURES)),
            mode: None,
            folds: None,
        },
    ];
    let mut total = Run::new("pipeline", settings, out)?;
    let mut lines = Vec::new();
    for command in &steps {
        log::info!("pipeline step {}", command.name());
        let (l, manifest) = step(settings, out, command)?;
        lines.extend(l.into_iter().map(|l| format!("[{}] {l}", command.name())));
        total.absorb(manifest);
    }
    if let Some(labels) = pipeline_labels(data, labels) {
        lines.extend(recovery(&mut total, &labels, &at(PARTITION))?);
    }
    total.finish()?;
    Ok(lines)
}

fn execute(cli: Cli) -> Result<Lines, CliError> {
    let mut settings = Settings::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(s) = cli.seed {
        settings.set("seed", s)?;
    }
    if let Some(t) = cli.threads {
        settings.set("threads", t)?;
    }
    for (k, v) in cli.command.overrides() {
        settings.set(k, v)?;
    }
    let threads: usize = settings.parse("threads")?;
    if threads == 0 {
        return Err(CliError::Usage("threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;

    match &cli.command {
        Command::Pipeline {
            data,
            labels,
            embeddings,
        } => pipeline(&settings, &cli.out, data, labels.as_deref(), embeddings.as_deref()),
        command => Ok(step(&settings, &cli.out, command)?.0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = Cli::command()
        .after_long_help(footer())
        .after_help(footer())
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
