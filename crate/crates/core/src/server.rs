//! HTTP front ends for the provider, consent authority and gateway.

use crate::consent::{ConsentError, ConsentService, MaskRequest, SignedRevoke, SignedRule, TokenRequest};
use crate::gateway::Gateway;
use crate::protocol::{ConsentToken, Contract};
use crate::provider::{ProviderError, ProviderNode, SignedTransparencyRequest};
use crate::signing::{PrincipalId, PublicKey};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use std::net::SocketAddr;
use std::sync::Arc;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    pub principal: PrincipalId,
    pub public_key: PublicKey,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

pub fn provider_router(node: Arc<ProviderNode>) -> Router {
    Router::new()
        .route("/contracts", post(submit_contract))
        .route("/templates", get(provider_templates))
        .route("/audit/head", get(audit_head))
        .route("/transparency", post(transparency))
        .route("/identity", get(provider_identity))
        .with_state(node)
}

async fn submit_contract(State(node): State<Arc<ProviderNode>>, Json(contract): Json<Contract>) -> Response {
    match node.handle_contract(&contract).await {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => {
            tracing::error!(error = %e, "contract pipeline failed closed");
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal error; no response released")
        }
    }
}

async fn provider_templates(State(node): State<Arc<ProviderNode>>) -> Response {
    Json(node.templates()).into_response()
}

async fn audit_head(State(node): State<Arc<ProviderNode>>) -> String {
    format!("{}\n", node.audit().head().to_hex())
}

async fn transparency(State(node): State<Arc<ProviderNode>>, Json(req): Json<SignedTransparencyRequest>) -> Response {
    match node.transparency(&req) {
        Ok(records) => Json(records).into_response(),
        Err(ProviderError::Unauthenticated) => error(StatusCode::UNAUTHORIZED, "request is not signed by the subject"),
        Err(e) => {
            tracing::error!(error = %e, "transparency query failed");
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
        }
    }
}

async fn provider_identity(State(node): State<Arc<ProviderNode>>) -> Response {
    Json(Identity { principal: node.principal(), public_key: node.public_key() }).into_response()
}

pub fn consent_router(service: Arc<ConsentService>) -> Router {
    Router::new()
        .route("/rules", post(set_rule))
        .route("/rules/revoke", post(revoke_rule))
        .route("/tokens", post(issue_token))
        .route("/tokens/introspect", post(introspect))
        .route("/mask", post(mask))
        .route("/identity", get(consent_identity))
        .with_state(service)
}

fn consent_error(e: ConsentError) -> Response {
    let status = match e {
        ConsentError::Unauthenticated => StatusCode::UNAUTHORIZED,
        ConsentError::NotFound(_) => StatusCode::NOT_FOUND,
        ConsentError::Duplicate(_) => StatusCode::CONFLICT,
        ConsentError::InvalidTtl => StatusCode::BAD_REQUEST,
        _ => {
            tracing::error!(error = %e, "consent store failure");
            return error(StatusCode::INTERNAL_SERVER_ERROR, "internal error");
        }
    };
    error(status, e.to_string())
}

async fn set_rule(State(svc): State<Arc<ConsentService>>, Json(rule): Json<SignedRule>) -> Response {
    match svc.set_rule(rule) {
        Ok(id) => Json(serde_json::json!({ "rule_id": id })).into_response(),
        Err(e) => consent_error(e),
    }
}

async fn revoke_rule(State(svc): State<Arc<ConsentService>>, Json(req): Json<SignedRevoke>) -> Response {
    match svc.revoke_rule(req) {
        Ok(()) => Json(serde_json::json!({ "acknowledged": true })).into_response(),
        Err(e) => consent_error(e),
    }
}

async fn issue_token(State(svc): State<Arc<ConsentService>>, Json(req): Json<TokenRequest>) -> Response {
    match svc.issue_token(&req) {
        Ok(decision) => Json(decision).into_response(),
        Err(e) => consent_error(e),
    }
}

async fn introspect(State(svc): State<Arc<ConsentService>>, Json(token): Json<ConsentToken>) -> Response {
    Json(svc.introspect(&token)).into_response()
}

async fn mask(State(svc): State<Arc<ConsentService>>, Json(req): Json<MaskRequest>) -> Response {
    Json(svc.mask(&req)).into_response()
}

async fn consent_identity(State(svc): State<Arc<ConsentService>>) -> Response {
    Json(Identity { principal: svc.principal(), public_key: svc.public_key() }).into_response()
}

pub fn gateway_router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/contracts", post(gateway_submit))
        .route("/templates", get(gateway_templates))
        .route("/members", get(gateway_members))
        .route("/identity", get(gateway_identity))
        .with_state(gateway)
}

async fn gateway_submit(State(gw): State<Arc<Gateway>>, Json(contract): Json<Contract>) -> Response {
    match gw.handle_contract(&contract).await {
        Ok(pkg) => Json(pkg).into_response(),
        Err(e) => {
            tracing::error!(error = %e, "collation failed");
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
        }
    }
}

async fn gateway_templates(State(gw): State<Arc<Gateway>>) -> Response {
    Json(gw.templates().await).into_response()
}

async fn gateway_members(State(gw): State<Arc<Gateway>>) -> Response {
    Json(gw.members().members().iter().map(|m| m.info()).collect::<Vec<_>>()).into_response()
}

async fn gateway_identity(State(gw): State<Arc<Gateway>>) -> Response {
    Json(Identity { principal: gw.principal(), public_key: gw.public_key() }).into_response()
}

/// Binds `addr` and serves `router` in the background. Returns the bound address.
pub async fn spawn(router: Router, addr: &str) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            tracing::error!(error = %e, "server stopped");
        }
    });
    Ok((local, handle))
}

/// Serves `router` on `addr` until the process is interrupted.
pub async fn run(router: Router, addr: &str) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
