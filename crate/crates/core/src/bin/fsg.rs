use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fsg::bench::CameraKind;
use fsg::pipeline::{self, BenchSource, PipelineConfig, PipelineError, Report, Suite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Cameras {
    Static,
    Dynamic,
    Both,
}

/// Build, refine and query functional scene graphs of articulated objects.
#[derive(Debug, Parser)]
#[command(name = "fsg", version)]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for the benchmark suite.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the initial graph from a dataset manifest (default output: scene_graph.json).
    Init { manifest: PathBuf },
    /// Track one demonstration and fit its joint (default output directory: .).
    Track {
        manifest: PathBuf,
        #[arg(long)]
        demo: String,
    },
    /// Register tracked demonstrations into a graph (default output: the input graph).
    Refine {
        graph: PathBuf,
        /// Trajectory and verdict files of one demonstration; repeatable.
        #[arg(long = "demo", num_args = 2, value_names = ["TRAJECTORY", "VERDICT"], required = true)]
        demos: Vec<PathBuf>,
    },
    /// Rank graph nodes by cosine similarity to a query embedding.
    Query {
        graph: PathBuf,
        embedding: PathBuf,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
    /// Run the synthetic benchmark on a scenario directory or a built-in suite.
    Bench {
        scenarios: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SuiteArg::Noisy)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, value_enum, default_value_t = Cameras::Both)]
        camera: Cameras,
        /// Also write each generated demonstration as an ingestible dataset.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Write point clouds and axis/trajectory line sets as PLY (default output directory: export).
    Export { graph: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Noiseless,
    Noisy,
}

fn run(cli: Cli) -> Result<Report, PipelineError> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    let out = |default: &str| cli.output.clone().unwrap_or_else(|| PathBuf::from(default));
    match cli.command {
        Command::Init { manifest } => pipeline::cmd_init(&manifest, &cfg, &out("scene_graph.json")),
        Command::Track { manifest, demo } => pipeline::cmd_track(&manifest, &demo, &cfg, &out(".")),
        Command::Refine { graph, demos } => {
            let pairs: Vec<(PathBuf, PathBuf)> = demos
                .chunks_exact(2)
                .map(|c| (c[0].clone(), c[1].clone()))
                .collect();
            let output = cli.output.clone().unwrap_or_else(|| graph.clone());
            pipeline::cmd_refine(&graph, &pairs, &cfg, &output)
        }
        Command::Query { graph, embedding, k } => pipeline::cmd_query(&graph, &embedding, k),
        Command::Bench {
            scenarios,
            suite,
            runs,
            camera,
            emit,
        } => {
            let source = match scenarios {
                Some(dir) => BenchSource::Dir(dir),
                None => BenchSource::Suite {
                    suite: match suite {
                        SuiteArg::Noiseless => Suite::Noiseless,
                        SuiteArg::Noisy => Suite::Noisy,
                    },
                    runs,
                    cameras: match camera {
                        Cameras::Static => vec![CameraKind::Static],
                        Cameras::Dynamic => vec![CameraKind::Dynamic],
                        Cameras::Both => vec![CameraKind::Static, CameraKind::Dynamic],
                    },
                    seed: cli.seed,
                },
            };
            let report = pipeline::cmd_bench(&source, &cfg, emit.as_deref())?;
            if let Some(path) = &cli.output {
                fsg::io::write_json(path, &report.json)?;
            }
            Ok(report)
        }
        Command::Export { graph } => pipeline::cmd_export(&graph, &out("export")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let format = cli.format;
    match run(cli) {
        Ok(r) => {
            match format {
                Format::Text => print!("{}", r.text),
                Format::Json => println!("{}", serde_json::to_string_pretty(&r.json).expect("json")),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
