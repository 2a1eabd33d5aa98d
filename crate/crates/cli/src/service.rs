//! Reward HTTP service: the integration surface an RL trainer calls per
//! rollout.
//!
//! `POST /v1/reward` takes `{"trace": <trace document>, "response": str,
//! "answer": str, "lambda_v"?: float, "lambda_f"?: float}` and returns the
//! reward breakdown produced by the same engine the `score` command uses,
//! serialized identically, so the two frontends agree byte for byte.
//! Requests are stateless and independent.

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use reflect_core::reward::{score_rollout, RewardError};
use reflect_core::trace::AttentionTrace;
use reflect_core::RewardConfig64;

#[derive(Clone)]
pub struct ServiceState {
    pub defaults: RewardConfig64,
}

pub fn build_router(defaults: RewardConfig64) -> Router {
    Router::new()
        .route("/v1/reward", post(reward_handler))
        .route("/healthz", get(healthz))
        .with_state(ServiceState { defaults })
}

async fn healthz() -> &'static str {
    "ok"
}

fn bad_request(message: impl Into<String>) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({"error": message.into()})),
    )
        .into_response()
}

async fn reward_handler(State(state): State<ServiceState>, body: String) -> Response {
    let value: Value = match serde_json::from_str(&body) {
        Ok(value) => value,
        Err(e) => return bad_request(format!("body is not valid JSON: {e}")),
    };
    let Some(object) = value.as_object() else {
        return bad_request("body must be a JSON object");
    };

    let Some(trace_value) = object.get("trace") else {
        return bad_request("missing field: trace");
    };
    let Some(response_text) = object.get("response").and_then(Value::as_str) else {
        return bad_request("missing field: response (string)");
    };
    let Some(answer) = object.get("answer").and_then(Value::as_str) else {
        return bad_request("missing field: answer (string)");
    };
    let mut config = state.defaults;
    for (field, slot) in [
        ("lambda_v", &mut config.lambda_v as &mut f64),
        ("lambda_f", &mut config.lambda_f),
    ] {
        match object.get(field) {
            None | Some(Value::Null) => {}
            Some(v) => match v.as_f64() {
                Some(parsed) => *slot = parsed,
                None => return bad_request(format!("field {field} must be a number")),
            },
        }
    }

    let trace: AttentionTrace<f64> = match serde_json::from_value(trace_value.clone()) {
        Ok(trace) => trace,
        Err(e) => return bad_request(format!("invalid trace document: {e}")),
    };
    if let Err(e) = trace.validate() {
        return bad_request(format!("invalid trace document: {e}"));
    }

    match score_rollout(response_text, answer, &trace, &config) {
        Ok(breakdown) => {
            let body = serde_json::to_string(&breakdown)
                .expect("reward breakdown always serializes");
            (
                StatusCode::OK,
                [(header::CONTENT_TYPE, "application/json")],
                body,
            )
                .into_response()
        }
        Err(err @ (RewardError::DegenerateAttention | RewardError::DegenerateHalf { .. })) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({"error": err.kind(), "detail": err.to_string()})),
        )
            .into_response(),
        Err(err @ RewardError::InvalidInput(_)) => bad_request(err.to_string()),
    }
}
