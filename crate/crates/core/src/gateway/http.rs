use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE, WWW_AUTHENTICATE};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ControlValue, Gateway, GatewayError, SettleRequest};
use crate::canonical::to_canonical;
use crate::datastore::{NewRecord, StoreError};
use crate::mind::{MindError, MindQuery};

/// Large enough for a 1 MiB sealed payload in base64 plus metadata.
pub const MAX_BODY_BYTES: usize = 4 * 1024 * 1024;

type Shared = Arc<Gateway>;

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/pair", post(pair))
        .route("/pair/revoke", post(revoke))
        .route("/sense/v1/records", post(ingest))
        .route("/sense/v1/key", get(sealing_key))
        .route("/act/v1/devices", post(register_device))
        .route("/act/v1/devices/{id}", get(device))
        .route("/act/v1/devices/{id}/controls/{name}", post(set_control))
        .route("/act/v1/devices/{id}/commands", get(poll_commands))
        .route("/mind/v1/query", post(query))
        .route("/mind/v1/settle", post(settle))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(gateway)
}

struct ApiError(GatewayError);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError(e)
    }
}

fn canonical_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    match to_canonical(body) {
        Ok(text) => Response::builder()
            .status(status)
            .header(CONTENT_TYPE, "application/json")
            .body(Body::from(text))
            .unwrap_or_else(|_| StatusCode::INTERNAL_SERVER_ERROR.into_response()),
        Err(e) => {
            log::error!("response serialization failed: {e}");
            StatusCode::INTERNAL_SERVER_ERROR.into_response()
        }
    }
}

fn error_body(code: &str, message: String) -> serde_json::Value {
    json!({"error": code, "message": message})
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use GatewayError as G;
        let message = self.0.to_string();
        let (status, code) = match &self.0 {
            G::Unauthenticated => {
                let mut r = canonical_response(StatusCode::UNAUTHORIZED, &error_body("Unauthenticated", message));
                r.headers_mut().insert(WWW_AUTHENTICATE, "Bearer".parse().expect("static header"));
                return r;
            }
            G::PairingRejected => (StatusCode::CONFLICT, "PairingRejected"),
            G::UnknownClient(_) => (StatusCode::NOT_FOUND, "UnknownClient"),
            G::SchemaViolation(_) => (StatusCode::BAD_REQUEST, "SchemaViolation"),
            G::UnknownDevice(_) => (StatusCode::NOT_FOUND, "UnknownDevice"),
            G::UnknownControl(_) => (StatusCode::NOT_FOUND, "UnknownControl"),
            G::ValueOutOfDomain { .. } => (StatusCode::BAD_REQUEST, "ValueOutOfDomain"),
            G::NotProvisioned => (StatusCode::NOT_FOUND, "NotProvisioned"),
            G::ChannelDown { record_id, .. } => {
                let body = json!({
                    "error": "ChannelDown",
                    "message": message,
                    "record_id": record_id,
                    "deferred": true,
                });
                return canonical_response(StatusCode::SERVICE_UNAVAILABLE, &body);
            }
            G::Store(e) => store_status(e),
            G::Mind(e) => match e {
                MindError::InsufficientData { .. } => return StatusCode::NO_CONTENT.into_response(),
                MindError::FeeTooLow { .. } => (StatusCode::PAYMENT_REQUIRED, "FeeTooLow"),
                MindError::FeeMismatch { .. } => (StatusCode::PAYMENT_REQUIRED, "FeeMismatch"),
                MindError::BadPredicate(_) => (StatusCode::BAD_REQUEST, "BadPredicate"),
                MindError::UnknownQueryRef(_) => (StatusCode::NOT_FOUND, "UnknownQueryRef"),
                MindError::AlreadySettled(_) => (StatusCode::CONFLICT, "AlreadySettled"),
                MindError::ResolutionFailed(_) => (StatusCode::BAD_GATEWAY, "ResolutionFailed"),
                MindError::Distribution(_) => (StatusCode::UNPROCESSABLE_ENTITY, "DistributionFailed"),
                MindError::Store(e) => store_status(e),
            },
        };
        if status.is_server_error() {
            log::error!("{message}");
        }
        canonical_response(status, &error_body(code, message))
    }
}

fn store_status(e: &StoreError) -> (StatusCode, &'static str) {
    match e {
        StoreError::DuplicateId(_) => (StatusCode::CONFLICT, "DuplicateId"),
        StoreError::StorageFull => (StatusCode::INSUFFICIENT_STORAGE, "StorageFull"),
        StoreError::SchemaViolation(_) => (StatusCode::BAD_REQUEST, "SchemaViolation"),
        StoreError::BadPredicate(_) => (StatusCode::BAD_REQUEST, "BadPredicate"),
        StoreError::Corrupt { .. } | StoreError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "StorageError"),
    }
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let value = headers.get(AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim().to_string())
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(GatewayError::SchemaViolation(e.to_string())))
}

/// Run blocking gateway work (file I/O, fsync, outbound fetches) off the
/// async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, GatewayError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(GatewayError::Store(StoreError::Io(format!("worker failed: {e}"))))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRequest {
    code: String,
}

async fn pair(State(gw): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: PairRequest = parse(&body)?;
    let cred = blocking(move || gw.pair(&req.code)).await?;
    Ok(canonical_response(StatusCode::OK, &cred))
}

async fn revoke(State(gw): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    let token = bearer(&headers);
    let client = blocking(move || gw.revoke_self(token.as_deref())).await?;
    Ok(canonical_response(StatusCode::OK, &json!({"client_id": client, "revoked": true})))
}

async fn ingest(State(gw): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let token = bearer(&headers);
    gw.authenticate(token.as_deref())?;
    let record: NewRecord = parse(&body)?;
    let id = blocking(move || gw.ingest(token.as_deref(), record)).await?;
    Ok(canonical_response(StatusCode::OK, &json!({"record_id": id})))
}

async fn sealing_key(State(gw): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    let info = gw.sealing_key(bearer(&headers).as_deref())?;
    Ok(canonical_response(StatusCode::OK, &info))
}

async fn register_device(State(gw): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let token = bearer(&headers);
    gw.authenticate(token.as_deref())?;
    let device = parse(&body)?;
    let id = gw.register_device(token.as_deref(), device)?;
    Ok(canonical_response(StatusCode::OK, &json!({"device_id": id})))
}

async fn device(State(gw): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Result<Response, ApiError> {
    let d = gw.device(bearer(&headers).as_deref(), &id)?;
    Ok(canonical_response(StatusCode::OK, &d))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetControl {
    value: ControlValue,
}

async fn set_control(
    State(gw): State<Shared>,
    headers: HeaderMap,
    Path((id, name)): Path<(String, String)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let token = bearer(&headers);
    gw.authenticate(token.as_deref())?;
    let req: SetControl = parse(&body)?;
    let command_id = gw.set_control(token.as_deref(), &id, &name, req.value)?;
    Ok(canonical_response(StatusCode::OK, &json!({"command_id": command_id})))
}

async fn poll_commands(State(gw): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Result<Response, ApiError> {
    let commands = gw.poll_commands(bearer(&headers).as_deref(), &id)?;
    Ok(canonical_response(StatusCode::OK, &commands))
}

async fn query(State(gw): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let token = bearer(&headers);
    gw.authenticate(token.as_deref())?;
    let q: MindQuery = parse(&body)?;
    let insight = blocking(move || gw.query(token.as_deref(), &q)).await?;
    Ok(canonical_response(StatusCode::OK, &insight))
}

async fn settle(State(gw): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let token = bearer(&headers);
    gw.authenticate(token.as_deref())?;
    let req: SettleRequest = parse(&body)?;
    let summary = blocking(move || gw.settle(token.as_deref(), &req)).await?;
    Ok(canonical_response(StatusCode::OK, &summary))
}
