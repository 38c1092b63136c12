#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use anomkit_core::similarity::{surrogate_score, ScoreRequest, SimilarityBackend, SimilarityError};
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

/// Similarities looked up from tables. Prediction texts are `p<i>` and
/// ground-truth texts `g<j>`; phenomenon pairs read `phe`, reasoning pairs
/// (suffix `r`) read `rea`.
pub struct TableBackend {
    pub phe: Vec<Vec<f64>>,
    pub rea: Vec<Vec<f64>>,
}

impl TableBackend {
    pub fn records(&self) -> (Vec<anomkit_core::AnomalyRecord>, Vec<anomkit_core::AnomalyRecord>) {
        let k = self.phe.len();
        let g = self.phe.first().map_or(0, Vec::len);
        let rec = |tag: &str, i: usize| {
            anomkit_core::AnomalyRecord::new("n", format!("{tag}{i}"), format!("{tag}{i}r"), 50.0).unwrap()
        };
        ((0..k).map(|i| rec("p", i)).collect(), (0..g).map(|j| rec("g", j)).collect())
    }
}

impl SimilarityBackend for TableBackend {
    fn backend_id(&self) -> &str {
        "table"
    }

    fn score(&self, h: &str, r: &str) -> Result<f64, SimilarityError> {
        let reasoning = h.ends_with('r');
        let idx = |s: &str| s[1..].trim_end_matches('r').parse::<usize>().unwrap();
        let (i, j) = (idx(h), idx(r));
        Ok(if reasoning { self.rea[i][j] } else { self.phe[i][j] })
    }
}

#[derive(Clone, Copy, PartialEq)]
pub enum Mode {
    Surrogate,
    AlwaysFail,
    NonNumeric,
    WrongCount,
}

pub struct MockScorer {
    pub addr: SocketAddr,
    pub hits: Arc<AtomicUsize>,
    pub pairs_seen: Arc<AtomicUsize>,
    _runtime: tokio::runtime::Runtime,
}

impl MockScorer {
    pub fn endpoint(&self) -> String {
        format!("http://{}/score", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

#[derive(Clone)]
struct AppState {
    mode: Mode,
    hits: Arc<AtomicUsize>,
    pairs: Arc<AtomicUsize>,
}

async fn score(State(st): State<AppState>, Json(req): Json<ScoreRequest>) -> (StatusCode, Json<Value>) {
    st.hits.fetch_add(1, Ordering::SeqCst);
    st.pairs.fetch_add(req.pairs.len(), Ordering::SeqCst);
    match st.mode {
        Mode::Surrogate => {
            let scores: Vec<f64> = req.pairs.iter().map(|(h, r)| surrogate_score(h, r)).collect();
            (StatusCode::OK, Json(json!({ "scores": scores })))
        }
        Mode::AlwaysFail => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": "down"}))),
        Mode::NonNumeric => {
            let mut scores: Vec<Value> = req.pairs.iter().map(|_| json!(0.5)).collect();
            if let Some(last) = scores.last_mut() {
                *last = json!("NaN-ish");
            }
            (StatusCode::OK, Json(json!({ "scores": scores })))
        }
        Mode::WrongCount => (StatusCode::OK, Json(json!({ "scores": [] }))),
    }
}

/// A scoring sidecar stand-in on an ephemeral local port.
pub fn spawn_scorer(mode: Mode) -> MockScorer {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let pairs = Arc::new(AtomicUsize::new(0));
    let state = AppState {
        mode,
        hits: hits.clone(),
        pairs: pairs.clone(),
    };
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap();
    let app = Router::new().route("/score", post(score)).with_state(state);
    runtime.spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    MockScorer {
        addr,
        hits,
        pairs_seen: pairs,
        _runtime: runtime,
    }
}
