use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use texweave_service::{router, AppState, DEFAULT_UPLOAD_LIMIT};

#[derive(Parser)]
#[command(name = "texweave-service", version, about = "HTTP API for texweave projects")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value = "texweave-data")]
    data_dir: PathBuf,
    /// Largest accepted upload in bytes.
    #[arg(long, default_value_t = DEFAULT_UPLOAD_LIMIT)]
    max_upload: usize,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    texweave::par::init_threads_from_env();
    std::fs::create_dir_all(&args.data_dir)?;
    let state = AppState::new(args.data_dir.clone(), args.max_upload);
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    eprintln!(
        "listening on {} with data in {}",
        listener.local_addr()?,
        args.data_dir.display()
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
