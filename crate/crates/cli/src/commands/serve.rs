//! `reflect serve`: the reward service.

use clap::Args;

use crate::config::AppConfig;
use crate::service::build_router;
use crate::AppError;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Port override; configured default when omitted.
    #[arg(long)]
    pub port: Option<u16>,
}

pub fn cmd_serve(args: &ServeArgs, config: &AppConfig) -> Result<(), AppError> {
    let port = args.port.unwrap_or(config.service.port);
    if port == 0 {
        return Err(AppError::Usage("port must be in [1, 65535]".into()));
    }
    let router = build_router(config.reward.reward_config());
    let runtime = super::runtime()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
            .await
            .map_err(|e| AppError::Usage(format!("cannot bind port {port}: {e}")))?;
        eprintln!("serving on 0.0.0.0:{port}");
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| AppError::Internal(format!("server error: {e}")))
    })
}
