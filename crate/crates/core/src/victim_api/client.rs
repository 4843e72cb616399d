//! Query clients: in-process and remote, with identical semantics.

use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::modelzoo::Prediction;
use crate::numcore::{write_f64_17, Matrix};
use crate::victim_api::{EndpointInfo, VictimEndpoint};

/// Anything an attacker can query: predictions plus public metadata.
pub trait VictimClient {
    fn info(&self) -> Result<EndpointInfo>;
    fn query(&self, batch: &Matrix) -> Result<Prediction>;
}

/// Direct client over an in-process endpoint.
pub struct InProcessClient {
    endpoint: Arc<VictimEndpoint>,
}

impl InProcessClient {
    pub fn new(endpoint: Arc<VictimEndpoint>) -> Self {
        Self { endpoint }
    }

    pub fn endpoint(&self) -> &VictimEndpoint {
        &self.endpoint
    }
}

impl VictimClient for InProcessClient {
    fn info(&self) -> Result<EndpointInfo> {
        Ok(self.endpoint.info())
    }

    fn query(&self, batch: &Matrix) -> Result<Prediction> {
        self.endpoint.query(batch)
    }
}

/// Remote client speaking the wire protocol of [`crate::victim_api::serve`].
pub struct HttpClient {
    base_url: String,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireError {
    error: String,
    remaining: Option<u64>,
}

#[derive(Deserialize)]
struct WirePrediction {
    labels: Option<Vec<usize>>,
    probs: Option<Vec<Vec<f64>>>,
}

impl HttpClient {
    /// Builds a client for `base_url` (e.g. `http://127.0.0.1:8080`).
    pub fn connect(base_url: &str) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Transport(format!("building http client: {e}")))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            http,
        })
    }

    fn decode_error(status: u16, body: &str) -> Error {
        if let Ok(err) = serde_json::from_str::<WireError>(body) {
            match (status, err.error.as_str()) {
                (429, "budget_exhausted") => Error::BudgetExhausted {
                    remaining: err.remaining.unwrap_or(0),
                },
                (400, "bad_dimension") => Error::Shape("bad_dimension".into()),
                _ => Error::Transport(format!("http {status}: {}", err.error)),
            }
        } else {
            Error::Transport(format!("http {status}: {body}"))
        }
    }
}

impl VictimClient for HttpClient {
    fn info(&self) -> Result<EndpointInfo> {
        let response = self
            .http
            .get(format!("{}/v1/info", self.base_url))
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if status != 200 {
            return Err(Self::decode_error(status, &body));
        }
        serde_json::from_str(&body)
            .map_err(|e| Error::Transport(format!("malformed info body: {e}")))
    }

    fn query(&self, batch: &Matrix) -> Result<Prediction> {
        // Inputs are serialized with 17 significant digits so the server
        // reconstructs the exact bits.
        let mut body = String::with_capacity(batch.rows() * batch.cols() * 24 + 16);
        body.push_str("{\"inputs\":[");
        for i in 0..batch.rows() {
            if i > 0 {
                body.push(',');
            }
            body.push('[');
            for (j, &v) in batch.row(i).iter().enumerate() {
                if j > 0 {
                    body.push(',');
                }
                write_f64_17(&mut body, v);
            }
            body.push(']');
        }
        body.push_str("]}");

        let response = self
            .http
            .post(format!("{}/v1/predict", self.base_url))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if status != 200 {
            return Err(Self::decode_error(status, &text));
        }

        let wire: WirePrediction = serde_json::from_str(&text)
            .map_err(|e| Error::Transport(format!("malformed predict body: {e}")))?;
        match (wire.labels, wire.probs) {
            (Some(labels), None) => Ok(Prediction::Hard(labels)),
            (None, Some(rows)) => Ok(Prediction::Soft(Matrix::from_rows(&rows)?)),
            _ => Err(Error::Transport(
                "predict body has neither labels nor probs".into(),
            )),
        }
    }
}
