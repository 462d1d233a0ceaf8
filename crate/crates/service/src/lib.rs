//! HTTP front end over the simulator, the analytical plume and the surrogate.
//!
//! | route            | method | purpose                                   |
//! |------------------|--------|-------------------------------------------|
//! | `/v1/predict`    | POST   | fields for one scenario in a chosen mode  |
//! | `/v1/model`      | GET    | metadata of the loaded surrogate          |
//! | `/v1/health`     | GET    | liveness and readiness                    |

mod api;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::http::HeaderValue;
use axum::routing::{get, post};
use axum::Router;
use clap::Args;
use tokio::sync::Semaphore;
use tower_http::cors::{Any, CorsLayer};

use gwhp_core::sim::{SimParams, TransportConfig};
use gwhp_core::surrogate::{load_model, SurrogateModel};

pub use api::{ErrorBody, FieldResponse, Mode, ModelInfo, Provenance, ScenarioRequest};

/// Server options; each flag can also be set through a `GWHP_*` variable.
#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Surrogate model file. Without it only `simulate` and `lahm` work.
    #[arg(long, env = "GWHP_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, env = "GWHP_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Simultaneous `simulate` requests before answering 429.
    #[arg(long, env = "GWHP_MAX_SIMULATIONS", default_value_t = 2)]
    pub max_simulations: usize,
    /// Allowed browser origin; `*` allows any.
    #[arg(long, env = "GWHP_CORS_ORIGIN")]
    pub cors_origin: Option<String>,
}

pub struct AppState {
    pub model: Option<SurrogateModel>,
    pub model_info: Option<ModelInfo>,
    pub sim: SimParams,
    pub transport: TransportConfig,
    pub simulations: Arc<Semaphore>,
}

impl AppState {
    pub fn new(model: Option<SurrogateModel>, max_simulations: usize) -> gwhp_core::Result<Self> {
        let model_info = model.as_ref().map(ModelInfo::from_model).transpose()?;
        Ok(Self {
            model,
            model_info,
            sim: SimParams::default(),
            transport: TransportConfig::default(),
            simulations: Arc::new(Semaphore::new(max_simulations)),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/predict", post(api::predict))
        .route("/v1/model", get(api::model))
        .route("/v1/health", get(api::health))
        .with_state(state)
}

fn cors(origin: Option<&str>) -> Result<Option<CorsLayer>, String> {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    match origin {
        None => Ok(None),
        Some("*") => Ok(Some(layer.allow_origin(Any))),
        Some(o) => {
            let v = HeaderValue::from_str(o).map_err(|_| format!("invalid CORS origin {o:?}"))?;
            Ok(Some(layer.allow_origin(v)))
        }
    }
}

/// Loads the model (if any) and builds the full application.
pub fn app(args: &ServeArgs) -> Result<Router, String> {
    let model = match &args.model {
        Some(p) => {
            Some(load_model(p).map_err(|e| format!("cannot load model {}: {e}", p.display()))?)
        }
        None => None,
    };
    if args.max_simulations == 0 {
        return Err("max-simulations must be at least 1".into());
    }
    let state = AppState::new(model, args.max_simulations).map_err(|e| e.to_string())?;
    let mut app = router(Arc::new(state));
    if let Some(layer) = cors(args.cors_origin.as_deref())? {
        app = app.layer(layer);
    }
    Ok(app)
}

pub async fn serve(args: ServeArgs) -> std::io::Result<()> {
    let app = app(&args).map_err(std::io::Error::other)?;
    let addr = SocketAddr::from(([0, 0, 0, 0], args.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
