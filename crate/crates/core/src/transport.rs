//! How services reach each other: in-process handles for tests and embedding,
//! JSON over HTTP otherwise.

use crate::consent::{ConsentService, MaskRequest, TokenDecision, TokenRequest};
use crate::protocol::{AlgorithmTemplate, Contract, ContractResponse};
use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request to {url} failed: {message}")]
    Request { url: String, message: String },
    #[error("{url} answered {status}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("malformed body from {url}: {message}")]
    Decode { url: String, message: String },
    #[error("peer failed: {0}")]
    Peer(String),
}

/// The consent authority as seen by a provider.
#[async_trait]
pub trait ConsentClient: Send + Sync {
    async fn mask(&self, request: &MaskRequest) -> Result<Vec<bool>, TransportError>;
}

/// A member provider as seen by a gateway or querier.
#[async_trait]
pub trait ProviderClient: Send + Sync {
    async fn submit(&self, contract: &Contract) -> Result<ContractResponse, TransportError>;
    async fn templates(&self) -> Result<Vec<AlgorithmTemplate>, TransportError>;
}

#[async_trait]
impl ConsentClient for ConsentService {
    async fn mask(&self, request: &MaskRequest) -> Result<Vec<bool>, TransportError> {
        Ok(ConsentService::mask(self, request))
    }
}

#[async_trait]
impl<T: ConsentClient + ?Sized> ConsentClient for Arc<T> {
    async fn mask(&self, request: &MaskRequest) -> Result<Vec<bool>, TransportError> {
        (**self).mask(request).await
    }
}

#[async_trait]
impl<T: ProviderClient + ?Sized> ProviderClient for Arc<T> {
    async fn submit(&self, contract: &Contract) -> Result<ContractResponse, TransportError> {
        (**self).submit(contract).await
    }

    async fn templates(&self) -> Result<Vec<AlgorithmTemplate>, TransportError> {
        (**self).templates().await
    }
}

/// JSON-over-HTTP client for one base URL.
#[derive(Debug, Clone)]
pub struct HttpClient {
    base: String,
    http: reqwest::Client,
}

impl HttpClient {
    pub fn new(base: impl Into<String>, timeout: Duration) -> Self {
        let http = reqwest::Client::builder().timeout(timeout).build().expect("static client configuration");
        HttpClient { base: base.into().trim_end_matches('/').to_string(), http }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn decode<R: DeserializeOwned>(url: String, resp: reqwest::Response) -> Result<R, TransportError> {
        let status = resp.status();
        let text = resp.text().await.map_err(|e| TransportError::Request { url: url.clone(), message: e.to_string() })?;
        if !status.is_success() {
            return Err(TransportError::Status { url, status: status.as_u16(), body: text });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Decode { url, message: e.to_string() })
    }

    pub async fn post<B: Serialize + ?Sized, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, TransportError> {
        let url = self.url(path);
        let resp = self
            .http
            .post(&url)
            .json(body)
            .send()
            .await
            .map_err(|e| TransportError::Request { url: url.clone(), message: e.to_string() })?;
        Self::decode(url, resp).await
    }

    pub async fn get<R: DeserializeOwned>(&self, path: &str) -> Result<R, TransportError> {
        let url = self.url(path);
        let resp =
            self.http.get(&url).send().await.map_err(|e| TransportError::Request { url: url.clone(), message: e.to_string() })?;
        Self::decode(url, resp).await
    }

    pub async fn get_text(&self, path: &str) -> Result<String, TransportError> {
        let url = self.url(path);
        let resp =
            self.http.get(&url).send().await.map_err(|e| TransportError::Request { url: url.clone(), message: e.to_string() })?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| TransportError::Request { url: url.clone(), message: e.to_string() })?;
        if !status.is_success() {
            return Err(TransportError::Status { url, status: status.as_u16(), body: text });
        }
        Ok(text)
    }

    /// Asks a consent authority for a token.
    pub async fn request_token(&self, request: &TokenRequest) -> Result<TokenDecision, TransportError> {
        self.post("/tokens", request).await
    }
}

#[async_trait]
impl ConsentClient for HttpClient {
    async fn mask(&self, request: &MaskRequest) -> Result<Vec<bool>, TransportError> {
        self.post("/mask", request).await
    }
}

#[async_trait]
impl ProviderClient for HttpClient {
    async fn submit(&self, contract: &Contract) -> Result<ContractResponse, TransportError> {
        self.post("/contracts", contract).await
    }

    async fn templates(&self) -> Result<Vec<AlgorithmTemplate>, TransportError> {
        self.get("/templates").await
    }
}
