use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use cceval_core::itemizer::SplitConfig;
use cceval_service::{router, AppState, Store};
use clap::Parser;

/// Serve the checklist evaluation API.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Address to listen on.
    #[arg(long, env = "CCEVAL_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory holding checklists/, notes/ and sessions/.
    #[arg(long, env = "CCEVAL_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// Splitting config JSON used to itemize notes submitted as raw text.
    #[arg(long, env = "CCEVAL_SPLITTING_CONFIG")]
    splitting_config: Option<PathBuf>,
    /// Require `Authorization: Bearer <token>` on every request.
    #[arg(long, env = "CCEVAL_TOKEN")]
    token: Option<String>,
}

fn load_config(path: Option<&PathBuf>) -> Result<SplitConfig, String> {
    match path {
        None => Ok(SplitConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            SplitConfig::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let config = match load_config(args.splitting_config.as_ref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let store = match Store::open(&args.data_dir, config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let app = router(Arc::new(AppState { store, token: args.token }));
    let listener = match tokio::net::TcpListener::bind(args.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("bind {}: {e}", args.listen);
            return ExitCode::from(2);
        }
    };
    eprintln!("listening on {}", args.listen);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
        eprintln!("{e}");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
