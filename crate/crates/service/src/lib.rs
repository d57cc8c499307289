//! Network and command-line front end for [`flowforge`].
//!
//! The HTTP API is served by [`routes::router`]; session events are pushed
//! as server-sent events. The `flowforge` binary wraps [`cli`].

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod http_generator;
pub mod routes;
pub mod state;

use std::sync::Arc;

use flowforge::protocol::{Generator, GeneratorRegistry};

pub use config::ServiceConfig;
pub use routes::router;
pub use state::AppState;

/// Built-in generators plus `http`, which posts to `config.generator_url`.
pub fn registry(config: &ServiceConfig) -> GeneratorRegistry {
    let mut r = GeneratorRegistry::with_builtin();
    let url = config.generator_url.clone().unwrap_or_default();
    r.register(
        http_generator::NAME,
        Arc::new(move |_| Arc::new(http_generator::HttpGenerator::new(url.clone())) as Arc<dyn Generator>),
    );
    r
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
