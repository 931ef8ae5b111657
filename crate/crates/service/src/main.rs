use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use insitu_core::bundle::CalibrationBundle;
use insitu_service::{serve, AppState};

#[derive(Parser)]
#[command(version, about = "Annotation session service")]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory holding session event logs and captured frames.
    #[arg(long, default_value = "insitu-data")]
    data_dir: PathBuf,
    /// Calibration bundle JSON used by sessions that do not supply one.
    #[arg(long)]
    bundle: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let bundle = match &args.bundle {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let b: CalibrationBundle<f64> =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            b.validate()?;
            Some(b)
        }
        None => None,
    };
    let state = AppState::open(&args.data_dir, bundle)?;
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve(listener, state).await?;
    Ok(())
}
