//! HTTP/1.1 wire protocol for deployed endpoints.
//!
//! `POST /v1/predict` with `{"inputs": [[...], ...]}` answers
//! `{"labels": [...]}` (hard mode) or `{"probs": [[...], ...]}` (soft
//! mode); budget exhaustion is `429 {"error":"budget_exhausted",
//! "remaining":n}` and dimension problems are `400
//! {"error":"bad_dimension"}`. `GET /v1/info` reports the endpoint
//! metadata. Reals travel with 17 significant digits, so remote results are
//! bit-identical to in-process ones.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use tokio::sync::oneshot;

use crate::error::{Error, Result};
use crate::modelzoo::Prediction;
use crate::numcore::{write_f64_17, Matrix};
use crate::victim_api::VictimEndpoint;

/// A running prediction server; shuts down on [`ServerHandle::shutdown`] or
/// drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// Serves an endpoint over HTTP on `addr` (e.g. `127.0.0.1:0` for an
/// ephemeral port). Returns once the socket is bound.
pub fn serve(endpoint: Arc<VictimEndpoint>, addr: &str) -> Result<ServerHandle> {
    let addr: SocketAddr = addr
        .parse()
        .map_err(|e| Error::Config(format!("unparsable listen address {addr:?}: {e}")))?;

    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let (ready_tx, ready_rx) = std::sync::mpsc::channel::<Result<SocketAddr>>();

    let thread = std::thread::spawn(move || {
        let runtime = match tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_io()
            .build()
        {
            Ok(rt) => rt,
            Err(e) => {
                let _ = ready_tx.send(Err(Error::Transport(format!("runtime: {e}"))));
                return;
            }
        };
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::bind(addr).await {
                Ok(l) => l,
                Err(e) => {
                    let _ = ready_tx.send(Err(Error::Transport(format!("bind {addr}: {e}"))));
                    return;
                }
            };
            let local = listener.local_addr().expect("bound socket has an address");
            let app = Router::new()
                .route("/v1/info", get(handle_info))
                .route("/v1/predict", post(handle_predict))
                .with_state(endpoint);
            let _ = ready_tx.send(Ok(local));
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stop_rx.await;
                })
                .await;
        });
    });

    let addr = ready_rx
        .recv()
        .map_err(|_| Error::Transport("server thread died before binding".into()))??;
    Ok(ServerHandle {
        addr,
        stop: Some(stop_tx),
        thread: Some(thread),
    })
}

fn json_response(status: StatusCode, body: String) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        body,
    )
        .into_response()
}

async fn handle_info(State(endpoint): State<Arc<VictimEndpoint>>) -> Response {
    let body = serde_json::to_string(&endpoint.info()).expect("info serializes");
    json_response(StatusCode::OK, body)
}

#[derive(Deserialize)]
struct PredictRequest {
    inputs: Vec<Vec<f64>>,
}

async fn handle_predict(
    State(endpoint): State<Arc<VictimEndpoint>>,
    body: String,
) -> Response {
    let request: PredictRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(_) => {
            return json_response(
                StatusCode::BAD_REQUEST,
                r#"{"error":"bad_request"}"#.into(),
            )
        }
    };

    let bad_dimension = || {
        json_response(
            StatusCode::BAD_REQUEST,
            r#"{"error":"bad_dimension"}"#.into(),
        )
    };

    let dim = endpoint.info().input_dim;
    if request.inputs.is_empty()
        || request.inputs.iter().any(|row| row.len() != dim)
        || request
            .inputs
            .iter()
            .any(|row| row.iter().any(|v| !v.is_finite()))
    {
        return bad_dimension();
    }
    let batch = match Matrix::from_rows(&request.inputs) {
        Ok(m) => m,
        Err(_) => return bad_dimension(),
    };

    match endpoint.query(&batch) {
        Ok(Prediction::Hard(labels)) => {
            let body = format!(
                r#"{{"labels":{}}}"#,
                serde_json::to_string(&labels).expect("labels serialize")
            );
            json_response(StatusCode::OK, body)
        }
        Ok(Prediction::Soft(probs)) => {
            let mut body = String::with_capacity(probs.rows() * probs.cols() * 24 + 16);
            body.push_str("{\"probs\":[");
            for i in 0..probs.rows() {
                if i > 0 {
                    body.push(',');
                }
                body.push('[');
                for (j, &v) in probs.row(i).iter().enumerate() {
                    if j > 0 {
                        body.push(',');
                    }
                    write_f64_17(&mut body, v);
                }
                body.push(']');
            }
            body.push_str("]}");
            json_response(StatusCode::OK, body)
        }
        Err(Error::BudgetExhausted { remaining }) => json_response(
            StatusCode::TOO_MANY_REQUESTS,
            format!(r#"{{"error":"budget_exhausted","remaining":{remaining}}}"#),
        ),
        Err(Error::Shape(_)) => bad_dimension(),
        Err(_) => json_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            r#"{"error":"internal"}"#.into(),
        ),
    }
}
