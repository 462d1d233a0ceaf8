use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use gwhp_core::container::FieldContainer;
use gwhp_core::dataset::NormStats;
use gwhp_core::eval::lahm_for_velocity;
use gwhp_core::geogen::GeologySpec;
use gwhp_core::lahm::LahmParams;
use gwhp_core::nn::ModelConfig;
use gwhp_core::sim::{run_scenario, solve_flow, solve_pressure, RunReport, ScenarioSpec, WellSpec};
use gwhp_core::surrogate::{SurrogateModel, TrainingInfo};
use gwhp_core::{Grid, ScalarField, VectorField};

use crate::AppState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Surrogate,
    Simulate,
    Lahm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    /// Defaults to the 64 x 64 grid of 2 m cells.
    #[serde(default)]
    pub grid: Option<Grid>,
    pub geology: GeologySpec,
    /// Defaults to the standard heat pump at the center cell.
    #[serde(default)]
    pub well: Option<WellSpec>,
    #[serde(default)]
    pub control_values: Option<Vec<f64>>,
    pub mode: Mode,
}

impl ScenarioRequest {
    pub fn spec(&self) -> ScenarioSpec {
        let grid = self.grid.unwrap_or_default();
        ScenarioSpec {
            grid,
            geology: self.geology,
            well: self.well.unwrap_or_else(|| WellSpec::centered(&grid)),
            control_values: self.control_values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: Mode,
    #[serde(default)]
    pub model_version: Option<String>,
    pub timing_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldResponse {
    pub grid: Grid,
    pub channels: Vec<String>,
    /// Base64 of the binary field container holding `channels`.
    pub payload: String,
    pub max_temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<RunReport>,
    pub provenance: Provenance,
}

impl FieldResponse {
    pub fn container(&self) -> gwhp_core::Result<FieldContainer> {
        let bytes = STANDARD
            .decode(&self.payload)
            .map_err(|e| gwhp_core::Error::Corrupt(format!("payload is not base64: {e}")))?;
        FieldContainer::decode(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub version: String,
    pub fingerprint: String,
    pub param_count: usize,
    pub config: ModelConfig,
    pub norm_stats: NormStats,
    pub training: TrainingInfo,
}

impl ModelInfo {
    pub fn from_model(m: &SurrogateModel) -> gwhp_core::Result<Self> {
        Ok(Self {
            version: m.version_tag()?,
            fingerprint: m.fingerprint()?,
            param_count: m.param_count(),
            config: m.config().clone(),
            norm_stats: m.stats,
            training: m.info.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self(
            status,
            ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        )
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn solver(e: gwhp_core::Error) -> Self {
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "solver_failure",
            e.to_string(),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

struct Fields {
    channels: Vec<(&'static str, Vec<f64>)>,
    temperature_max: f64,
    report: Option<RunReport>,
}

fn flow_fields(v: &VectorField, t: &ScalarField) -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("qx", v.x().to_vec()),
        ("qy", v.y().to_vec()),
        ("temperature", t.values().to_vec()),
    ]
}

fn surrogate(state: &AppState, spec: &ScenarioSpec) -> Result<Fields, ApiError> {
    let model = state.model.as_ref().expect("checked by caller");
    let n = model.config().input_size;
    if (spec.grid.nx, spec.grid.ny) != (n, n) {
        return Err(ApiError::bad_request(
            "grid_mismatch",
            format!(
                "the surrogate expects a {n}x{n} grid, got {}x{}",
                spec.grid.nx, spec.grid.ny
            ),
        ));
    }
    if spec.well != WellSpec::centered(&spec.grid) {
        return Err(ApiError::bad_request(
            "well_unsupported",
            "the surrogate covers the standard heat pump at the center cell; use mode simulate or lahm",
        ));
    }
    let flow = solve_flow(spec, &state.sim).map_err(ApiError::solver)?;
    let t = model.infer(&flow.velocity).map_err(ApiError::solver)?;
    Ok(Fields {
        temperature_max: t.max(),
        channels: flow_fields(&flow.velocity, &t),
        report: None,
    })
}

fn simulate(state: &AppState, spec: &ScenarioSpec) -> Result<Fields, ApiError> {
    let s = run_scenario(spec, &state.sim, &state.transport).map_err(ApiError::solver)?;
    let mut channels = vec![
        ("permeability", s.permeability.values().to_vec()),
        ("pressure", s.pressure.values().to_vec()),
    ];
    channels.extend(flow_fields(&s.velocity, &s.temperature));
    Ok(Fields {
        temperature_max: s.temperature.max(),
        channels,
        report: Some(s.report),
    })
}

fn lahm(state: &AppState, spec: &ScenarioSpec) -> Result<Fields, ApiError> {
    let flow = solve_flow(spec, &state.sim).map_err(ApiError::solver)?;
    // the analytical plume takes the regional flow without the well
    let gradient = (spec.geology.gradient_x, spec.geology.gradient_y);
    let ambient = solve_pressure(&flow.permeability, gradient, None, &state.sim)
        .and_then(|p| p.flux.cell_velocity())
        .map_err(ApiError::solver)?;
    let template = LahmParams::for_scenario(spec, &state.sim, &state.transport, 1.0);
    let t = lahm_for_velocity(&ambient, spec.well.cell, &template)
        .map_err(|e| ApiError::bad_request("invalid_scenario", e.to_string()))?
        .ok_or_else(|| {
            ApiError::bad_request(
                "no_ambient_flow",
                "the analytical plume needs a nonzero mean flow",
            )
        })?;
    Ok(Fields {
        temperature_max: t.max(),
        channels: flow_fields(&flow.velocity, &t),
        report: None,
    })
}

pub async fn predict(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<FieldResponse>, ApiError> {
    let req: ScenarioRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))?;
    let spec = req.spec();
    spec.validate(state.transport.ambient_temperature)
        .map_err(|e| ApiError::bad_request("invalid_scenario", e.to_string()))?;

    let permit = match req.mode {
        Mode::Surrogate if state.model.is_none() => {
            return Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "model_not_loaded",
                "no surrogate model is loaded",
            ))
        }
        Mode::Simulate => Some(state.simulations.clone().try_acquire_owned().map_err(|_| {
            ApiError::new(
                StatusCode::TOO_MANY_REQUESTS,
                "too_many_simulations",
                "simulation capacity exhausted, retry later",
            )
        })?),
        _ => None,
    };

    let start = Instant::now();
    let mode = req.mode;
    let st = state.clone();
    let fields = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        match mode {
            Mode::Surrogate => surrogate(&st, &spec),
            Mode::Simulate => simulate(&st, &spec),
            Mode::Lahm => lahm(&st, &spec),
        }
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;

    let grid = req.grid.unwrap_or_default();
    let mut c = FieldContainer::new(grid.nx, grid.ny).map_err(ApiError::solver)?;
    for (name, values) in &fields.channels {
        c.push_f64(name, values).map_err(ApiError::solver)?;
    }
    Ok(Json(FieldResponse {
        grid,
        channels: fields.channels.iter().map(|(n, _)| n.to_string()).collect(),
        payload: STANDARD.encode(c.encode()),
        max_temperature: fields.temperature_max,
        report: fields.report,
        provenance: Provenance {
            mode,
            model_version: match mode {
                Mode::Surrogate => state.model_info.as_ref().map(|m| m.version.clone()),
                _ => None,
            },
            timing_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    }))
}

pub async fn model(State(state): State<Arc<AppState>>) -> Result<Json<ModelInfo>, ApiError> {
    state.model_info.clone().map(Json).ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "model_not_loaded",
            "no surrogate model is loaded",
        )
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub alive: bool,
    pub ready: bool,
}

pub async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        alive: true,
        ready: state.model.is_some(),
    })
}
