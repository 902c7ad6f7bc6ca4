//! Read-only HTTP query service over a loaded repository.
//!
//! `POST /query` takes a JSON body with exactly one of `seed_vector` or
//! `seed_id`, plus optional `k` (default 10), `method` (`euclidean`,
//! `cosine`, `par`; default `par`) and `delta_t`. Raw seed vectors are run
//! through the index's PCA model and normalisation before ranking. The reply
//! echoes `method`, `k` and `delta_t` and lists `results` as
//! `{id, distance, cosine}` in ranker order.
//!
//! `GET /health` reports item count, dimensions, aggregation kind and whether
//! a PCA model is embedded.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{Method, RankedEntry};
use crate::store::Repository;
use crate::vectors::FeatureVector;

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResponse {
    pub method: Method,
    pub k: usize,
    pub delta_t: Option<f64>,
    pub results: Vec<RankedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HealthResponse {
    pub status: &'static str,
    pub items: usize,
    pub dim: usize,
    pub query_dim: usize,
    pub aggregation: &'static str,
    pub pca: bool,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_dim: Option<usize>,
}

impl ServiceError {
    fn bad_request(error: impl Into<String>) -> Self {
        Self {
            status: 400,
            error: error.into(),
            expected_dim: None,
        }
    }
}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::UnknownItem(_) => 404,
            Error::Io { .. } => 500,
            _ => 400,
        };
        let expected_dim = match e {
            Error::Dimension { expected, .. } => Some(expected),
            _ => None,
        };
        Self {
            status,
            error: e.to_string(),
            expected_dim,
        }
    }
}

/// Status code and JSON body of a handled request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

fn to_reply<T: Serialize>(status: u16, value: &T) -> Reply {
    Reply {
        status,
        body: serde_json::to_string(value).expect("response serialises"),
    }
}

#[derive(Debug)]
pub struct QueryService {
    repo: Repository,
}

impl QueryService {
    /// Refuses to serve an empty repository.
    pub fn new(repo: Repository) -> Result<Self> {
        if repo.is_empty() {
            return Err(Error::EmptyRepository);
        }
        Ok(Self { repo })
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    pub fn handle_query_request(&self, req: &QueryRequest) -> Result<QueryResponse, ServiceError> {
        let method = match req.method.as_deref() {
            Some(m) => m.parse::<Method>()?,
            None => Method::Par,
        };
        let k = req.k.unwrap_or(DEFAULT_K);
        let delta_t = match method {
            Method::Par => Some(req.delta_t.unwrap_or(crate::ranking::DEFAULT_DELTA_T)),
            _ => None,
        };
        let ranked = match (&req.seed_vector, &req.seed_id) {
            (Some(values), None) => {
                if values.len() != self.repo.query_dim() {
                    return Err(ServiceError {
                        status: 400,
                        error: format!(
                            "seed_vector has dimension {}, expected {}",
                            values.len(),
                            self.repo.query_dim()
                        ),
                        expected_dim: Some(self.repo.query_dim()),
                    });
                }
                let raw = FeatureVector::new(values.clone())?;
                let query = self.repo.project(&raw)?;
                self.repo.search(&query, k, method, delta_t)?
            }
            (None, Some(id)) => self.repo.search_by_id(id, k, method, delta_t)?,
            _ => {
                return Err(ServiceError::bad_request(
                    "exactly one of seed_vector or seed_id is required",
                ))
            }
        };
        Ok(QueryResponse {
            method,
            k,
            delta_t: ranked.delta_t,
            results: ranked.entries,
        })
    }

    /// Parses and answers a raw `/query` body.
    pub fn handle_query(&self, body: &[u8]) -> Reply {
        let req: QueryRequest = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => {
                return to_reply(400, &ServiceError::bad_request(format!("malformed request: {e}")))
            }
        };
        match self.handle_query_request(&req) {
            Ok(resp) => to_reply(200, &resp),
            Err(e) => to_reply(e.status, &e),
        }
    }

    pub fn handle_health(&self) -> HealthResponse {
        HealthResponse {
            status: "ok",
            items: self.repo.len(),
            dim: self.repo.dim(),
            query_dim: self.repo.query_dim(),
            aggregation: self.repo.aggregation().kind().name(),
            pca: self.repo.pca().is_some(),
            normalized: self.repo.normalized(),
        }
    }
}

fn json_response(reply: Reply) -> Response {
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], reply.body).into_response()
}

async fn query_handler(State(svc): State<Arc<QueryService>>, body: Bytes) -> Response {
    json_response(svc.handle_query(&body))
}

async fn health_handler(State(svc): State<Arc<QueryService>>) -> Response {
    json_response(to_reply(200, &svc.handle_health()))
}

pub fn router(service: Arc<QueryService>) -> Router {
    Router::new()
        .route("/query", post(query_handler))
        .route("/health", get(health_handler))
        .with_state(service)
}

/// Serves on an already-bound listener until the future is dropped.
pub async fn serve_listener(listener: tokio::net::TcpListener, service: Arc<QueryService>) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

pub async fn serve(addr: SocketAddr, service: Arc<QueryService>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    serve_listener(listener, service).await
}
