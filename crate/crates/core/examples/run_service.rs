//! Runs the submission service over the bundled corpus.
//!
//!     CODE_DOJO_BIND=127.0.0.1:8080 cargo run --example run_service
//!
//! Then, for example:
//!
//!     curl -s localhost:8080/api/challenges
//!     curl -s -XPOST localhost:8080/api/challenges/sorting-tsc/submissions \
//!          -H 'content-type: application/json' \
//!          --data "$(jq -Rs '{source: .}' corpus/sorting-tsc/reference/vulnerable/sort.cpp)"
//!     curl -s localhost:8080/api/submissions/<id>
//!     curl -s -XPOST localhost:8080/api/submissions/<id>/hints

use std::sync::Arc;

use code_dojo::assess::Assessor;
use code_dojo::service::{serve, ServiceConfig, BIND_ENV, DATA_DIR_ENV, DEFAULT_BIND, DEFAULT_WORKERS};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data_dir = match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => dir.into(),
        None => std::env::temp_dir().join("code-dojo-example"),
    };
    let config = ServiceConfig {
        corpus: concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus").into(),
        data_dir,
        bind: std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.into()).parse()?,
        workers: DEFAULT_WORKERS,
        static_dir: None,
    };
    eprintln!("events are kept in {}", config.data_dir.display());
    serve(config, Arc::new(Assessor::default())).await?;
    Ok(())
}
