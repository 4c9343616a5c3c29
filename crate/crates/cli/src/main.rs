use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mvsearch_cli::commands::{self, store_build_config};
use mvsearch_cli::{bench, CliError};
use mvsearch_core::fusion::FusionMode;
use mvsearch_core::index::{BuildConfig, QuerySpec};
use mvsearch_core::manifest::Manifest;
use mvsearch_core::similarity::SimilarityKind;
use mvsearch_core::Exec;

#[derive(Parser)]
#[command(name = "mvsearch", version, about = "Multi-view object image search")]
struct Cli {
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract descriptors for every manifest image into MVDS files.
    Extract {
        manifest: PathBuf,
        out_dir: PathBuf,
        /// Detector settings as JSON (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train vocabularies and write an index store.
    Index {
        manifest: PathBuf,
        out: PathBuf,
        /// Build configuration as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the k-means seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one query and print the ranking.
    Query {
        store: PathBuf,
        #[arg(required = true)]
        views: Vec<PathBuf>,
        #[arg(long, default_value = "minmax")]
        similarity: SimilarityKind,
        #[arg(long, default_value = "set_weighted_average_max")]
        fusion: FusionMode,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        list_depth: usize,
    },
    /// Write precision curves for the manifest queries.
    Eval {
        store: PathBuf,
        manifest: PathBuf,
        out_dir: PathBuf,
        /// Comma-separated similarity names (default: all).
        #[arg(long, alias = "similarity-set", value_delimiter = ',')]
        similarity: Vec<SimilarityKind>,
        /// Comma-separated fusion names (default: the 13 fusion kinds).
        #[arg(long, alias = "fusion-set", value_delimiter = ',')]
        fusion: Vec<FusionMode>,
        #[arg(long, default_value_t = 20)]
        kmax: usize,
        #[arg(long, default_value_t = 100)]
        list_depth: usize,
    },
    /// Time matching per fusion mode and print CSV.
    Bench {
        store: PathBuf,
        #[arg(required = true)]
        views: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        repeat: usize,
        #[arg(long, value_delimiter = ',')]
        similarity: Vec<SimilarityKind>,
    },
    /// Serve the store over HTTP.
    Serve {
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Extract { manifest, out_dir, config } => {
            let detector = match config {
                Some(p) => read_json(&p)?,
                None => Default::default(),
            };
            let manifest = Manifest::load(&manifest)?;
            let written = commands::extract(&manifest, &detector, &out_dir, exec)?;
            println!("wrote {} descriptor files to {}", written.len(), out_dir.display());
        }
        Command::Index { manifest, out, config, seed } => {
            let mut cfg: BuildConfig = match config {
                Some(p) => read_json(&p)?,
                None => BuildConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.kmeans.seed = seed;
            }
            let manifest = Manifest::load(&manifest)?;
            let store = commands::index(&manifest, &cfg, &out, exec)?;
            println!("{}", commands::index_status_line(&store, &out));
        }
        Command::Query { store, views, similarity, fusion, k, list_depth } => {
            let store = commands::load_store(&store)?;
            let detector = store_build_config(&store).detector;
            let sets = commands::load_views(&views, &detector, exec)?;
            let spec = QuerySpec { similarity, mode: fusion, k, list_depth };
            let results = commands::query(&store, &sets, &spec, exec)?;
            print!("{}", commands::format_table(&results));
        }
        Command::Eval { store, manifest, out_dir, similarity, fusion, kmax, list_depth } => {
            let store = commands::load_store(&store)?;
            let manifest = Manifest::load(&manifest)?;
            let detector = store_build_config(&store).detector;
            let sims = if similarity.is_empty() { SimilarityKind::ALL.to_vec() } else { similarity };
            let modes = if fusion.is_empty() {
                FusionMode::all().into_iter().filter(|m| !m.is_single()).collect()
            } else {
                fusion
            };
            let cases = commands::query_cases(&store, &manifest, &detector, exec)?;
            let curves = commands::eval(&store, &cases, &sims, &modes, kmax, list_depth, &out_dir, exec)?;
            for (path, curve) in &curves {
                let last = curve.points.last().map(|p| p.1).unwrap_or(0.0);
                println!("{}  avep@{kmax}={last:.6}", path.display());
            }
        }
        Command::Bench { store, views, repeat, similarity } => {
            let store = commands::load_store(&store)?;
            let detector = store_build_config(&store).detector;
            let sets = commands::load_views(&views, &detector, exec)?;
            let sims = if similarity.is_empty() { SimilarityKind::ALL.to_vec() } else { similarity };
            let rows = bench::run(&store, &sets, &sims, &FusionMode::all(), repeat, exec)?;
            print!("{}", bench::to_csv(&rows, &sims));
        }
        Command::Serve { store, port, host } => {
            let store = commands::load_store(&store)?;
            commands::serve(store, SocketAddr::new(host, port), exec)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
