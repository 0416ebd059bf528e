use std::io::{self, BufWriter, Read};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use perspectivesx_cli::{admin, api, transport::HttpTransport};
use perspectivesx_core::service::TrainRequest;
use perspectivesx_core::*;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "perspectivesx", version, about = "Multi-perspective learning activities as an LTI 1.1 tool")]
struct Cli {
    /// Flat TOML configuration; PX_* environment variables override it.
    #[arg(long, short, env = "PX_CONFIG", default_value = "perspectivesx.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service and the grade passback worker.
    Serve,
    /// Manage LTI consumer credentials.
    Consumer {
        #[command(subcommand)]
        action: ConsumerAction,
    },
    /// Train and publish a topic model for a lineage.
    TrainTopics {
        #[arg(long)]
        lineage: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value_t = 8)]
        top_n: usize,
    },
    /// Recompute participation scores for an activity and queue passbacks.
    RecomputeScores {
        #[arg(long)]
        activity: String,
    },
    /// Write a lineage's knowledge base as newline-delimited JSON.
    ExportKb {
        #[arg(long)]
        lineage: String,
        /// Defaults to stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ConsumerAction {
    /// Register a consumer; prints a generated secret unless --secret-stdin.
    Add(AddConsumer),
    Revoke {
        #[arg(long)]
        key: String,
    },
    List,
}

#[derive(Args)]
struct AddConsumer {
    #[arg(long)]
    key: String,
    #[arg(long, default_value = "")]
    label: String,
    /// Read the shared secret from stdin instead of generating one.
    #[arg(long)]
    secret_stdin: bool,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let config = load_config(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    let service = Arc::new(Service::open(ServiceOptions::from_config(&config)?)?);

    match cli.command {
        Command::Serve => serve(service, &config),
        Command::Consumer { action } => match action {
            ConsumerAction::Add(args) => {
                let secret = if args.secret_stdin {
                    let mut s = String::new();
                    io::stdin().read_to_string(&mut s)?;
                    Some(s)
                } else {
                    None
                };
                let generated = secret.is_none();
                let (summary, secret) = admin::add_consumer(&service, &args.key, &args.label, secret)?;
                println!("consumer {} added", summary.consumer_key);
                if generated {
                    println!("secret: {secret}");
                }
                Ok(())
            }
            ConsumerAction::Revoke { key } => {
                if service.revoke_consumer(&key)? {
                    println!("consumer {key} revoked");
                    Ok(())
                } else {
                    anyhow::bail!("no consumer `{key}`")
                }
            }
            ConsumerAction::List => {
                for c in service.consumers() {
                    println!("{}\t{}", c.consumer_key, c.label);
                }
                Ok(())
            }
        },
        Command::TrainTopics { lineage, k, seed, iterations, top_n } => {
            let request = TrainRequest { topics: k, iterations, seed };
            admin::train_topics(&service, &lineage, &request, top_n, &mut io::stdout())?;
            Ok(())
        }
        Command::RecomputeScores { activity } => {
            let changed = service.recompute_scores(&ActivityId::new(activity))?;
            println!("{changed} scores changed");
            Ok(())
        }
        Command::ExportKb { lineage, output } => {
            let n = match output {
                Some(path) => {
                    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    admin::export_kb(&service, &lineage, &mut BufWriter::new(file))?
                }
                None => admin::export_kb(&service, &lineage, &mut io::stdout().lock())?,
            };
            eprintln!("{n} records exported");
            Ok(())
        }
    }
}

fn serve(service: Arc<Service>, config: &ServiceConfig) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let state = api::AppState::new(service.clone(), config.base_url.scheme() == "https");
        let app = api::router(state, config.webapp_dir.clone());
        tokio::spawn(passback_worker(service));
        let listener = tokio::net::TcpListener::bind(config.bind_address)
            .await
            .with_context(|| format!("binding {}", config.bind_address))?;
        tracing::info!(address = %config.bind_address, launch_url = %config.launch_url(), "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

async fn passback_worker(service: Arc<Service>) {
    let transport = Arc::new(HttpTransport::default());
    let mut tick = tokio::time::interval(Duration::from_secs(1));
    loop {
        tick.tick().await;
        let service = service.clone();
        let transport = transport.clone();
        let report = tokio::task::spawn_blocking(move || service.dispatch_due_passbacks(transport.as_ref())).await;
        match report {
            Ok(Ok(r)) if r.delivered + r.retried + r.failed > 0 => {
                tracing::info!(delivered = r.delivered, retried = r.retried, failed = r.failed, "grade passback");
            }
            Ok(Ok(_)) => {}
            Ok(Err(e)) => tracing::error!(code = e.code(), "grade passback dispatch failed"),
            Err(e) => tracing::error!(error = %e, "grade passback worker panicked"),
        }
    }
}
