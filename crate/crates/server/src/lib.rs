//! HTTP/JSON front end for fitted energy and time models.
//!
//! Routes live under `/v1`; see `docs/api.md` for the exact payloads. The
//! model map is loaded once and shared read-only across requests.

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use freqsched::predict::{model_input, FittedModel, Target};
use freqsched::trace::FrequencyConfig;
use freqsched::Error;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

pub const MAX_BODY_BYTES: usize = 1 << 20;

/// Models keyed by target name, frozen at startup.
#[derive(Debug, Clone)]
pub struct ModelSet {
    models: Arc<BTreeMap<String, FittedModel>>,
}

impl ModelSet {
    /// Each model is filed under its own target; duplicates are rejected.
    pub fn new(models: impl IntoIterator<Item = FittedModel>) -> freqsched::Result<Self> {
        let mut map = BTreeMap::new();
        for m in models {
            let key = m.target.as_str().to_string();
            if map.contains_key(&key) {
                return Err(Error::Validation(format!("two models for target `{key}`")));
            }
            map.insert(key, m);
        }
        if map.is_empty() {
            return Err(Error::Validation("no models to serve".into()));
        }
        Ok(Self {
            models: Arc::new(map),
        })
    }

    pub fn get(&self, target: &str) -> Option<&FittedModel> {
        self.models.get(target)
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    /// The same computation `/v1/predict` performs.
    pub fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, ApiError> {
        if Target::parse(&req.target).is_none() || self.get(&req.target).is_none() {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_target",
                format!(
                    "no model for target `{}`; loaded: {}",
                    req.target,
                    self.targets().collect::<Vec<_>>().join(", ")
                ),
            ));
        }
        let m = &self.models[&req.target];
        req.config.validate().map_err(|e| {
            ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", e.to_string())
        })?;
        let expected = m.input_dim().saturating_sub(2);
        if req.features.len() != expected {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "dimension_mismatch",
                format!("expected {expected} features, got {}", req.features.len()),
            ));
        }
        let x = model_input(&req.features, req.config);
        let prediction = m.predict(&x).map_err(|e| match e {
            Error::DimensionMismatch { .. } => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "dimension_mismatch",
                e.to_string(),
            ),
            other => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unpredictable_input",
                other.to_string(),
            ),
        })?;
        if !prediction.is_finite() {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unpredictable_input",
                "prediction is not finite".into(),
            ));
        }
        Ok(PredictResponse {
            target: req.target.clone(),
            prediction,
            fingerprint: m.fingerprint.clone(),
            model_kind: m.kind.name().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub target: String,
    /// Raw default-clock profile, in the order reported by `/v1/schema`.
    pub features: Vec<f64>,
    pub config: FrequencyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub target: String,
    pub prediction: f64,
    pub fingerprint: String,
    pub model_kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: String) -> Self {
        Self {
            status,
            code,
            message,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code.to_string(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    /// target -> model fingerprint
    pub models: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub model_kind: String,
    pub fingerprint: String,
    /// Names expected in `features`.
    pub features: Vec<String>,
    /// Full model input row: `features` then the two clocks.
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaResponse {
    pub targets: BTreeMap<String, SchemaEntry>,
}

async fn predict(
    State(models): State<ModelSet>,
    body: Bytes,
) -> Result<Json<PredictResponse>, ApiError> {
    let req: PredictRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", e.to_string()))?;
    let resp = models.predict(&req)?;
    tracing::debug!(target = %resp.target, prediction = resp.prediction, "predict");
    Ok(Json(resp))
}

async fn health(State(models): State<ModelSet>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        models: models
            .models
            .iter()
            .map(|(t, m)| (t.clone(), m.fingerprint.clone()))
            .collect(),
    })
}

async fn schema(State(models): State<ModelSet>) -> Json<SchemaResponse> {
    let targets = models
        .models
        .iter()
        .map(|(t, m)| {
            let n = m.input_dim().saturating_sub(2);
            let entry = SchemaEntry {
                model_kind: m.kind.name().to_string(),
                fingerprint: m.fingerprint.clone(),
                features: m.input_names[..n].to_vec(),
                inputs: m.input_names.clone(),
            };
            (t.clone(), entry)
        })
        .collect();
    Json(SchemaResponse { targets })
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route".into())
}

pub fn router(models: ModelSet) -> Router {
    Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/health", get(health))
        .route("/v1/schema", get(schema))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(models)
}

/// Serves on an already bound listener until `shutdown` resolves, then
/// drains in-flight requests.
pub async fn serve_on<F>(
    listener: TcpListener,
    models: ModelSet,
    shutdown: F,
) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, targets = ?models.targets().collect::<Vec<_>>(), "model server listening");
    }
    axum::serve(listener, router(models))
        .with_graceful_shutdown(shutdown)
        .await
}

pub async fn serve<F>(models: ModelSet, addr: SocketAddr, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    let listener = TcpListener::bind(addr).await?;
    serve_on(listener, models, shutdown).await
}
