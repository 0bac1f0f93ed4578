use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AnnealError, Sample, Solver};
use crate::pbp::{AuxVar, QuboProblem};

/// Client for a remote `/solve` endpoint.
///
/// Request: `{ "n", "offset", "entries": [[i, j, value], ...], "params" }`.
/// Response: `{ "assignment": [0|1, ...], "energy" }`. The reported energy is
/// checked against a local recomputation.
#[derive(Clone, Debug)]
pub struct RemoteSolver {
    pub url: String,
    pub timeout: Duration,
    pub params: serde_json::Value,
}

#[derive(Serialize)]
struct SolveRequest<'a> {
    n: usize,
    offset: f64,
    entries: Vec<(usize, usize, f64)>,
    params: &'a serde_json::Value,
}

#[derive(Deserialize)]
struct SolveResponse {
    assignment: Vec<u8>,
    energy: f64,
}

impl RemoteSolver {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(60),
            params: serde_json::Value::Object(Default::default()),
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/solve", self.url.trim_end_matches('/'))
    }
}

impl Solver for RemoteSolver {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn solve(&self, q: &QuboProblem, _aux: &[AuxVar]) -> Result<Sample, AnnealError> {
        let body = SolveRequest { n: q.n(), offset: q.offset(), entries: q.entries(), params: &self.params };
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| AnnealError::Unavailable(e.to_string()))?;
        let resp = client
            .post(self.endpoint())
            .json(&body)
            .send()
            .map_err(|e| AnnealError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(AnnealError::Unavailable(format!("{} returned {status}", self.endpoint())));
        }
        let text = resp.text().map_err(|e| AnnealError::Unavailable(e.to_string()))?;
        let reply: SolveResponse =
            serde_json::from_str(&text).map_err(|e| AnnealError::Protocol(format!("bad response body: {e}")))?;
        if reply.assignment.len() != q.n() {
            return Err(AnnealError::Protocol(format!(
                "assignment has {} bits, problem has {}",
                reply.assignment.len(),
                q.n()
            )));
        }
        let sample = Sample::new(q, reply.assignment)?;
        let tol = 1e-9 * (1.0 + q.magnitude());
        if (sample.energy() - reply.energy).abs() > tol {
            return Err(AnnealError::Protocol(format!(
                "reported energy {} but assignment evaluates to {}",
                reply.energy,
                sample.energy()
            )));
        }
        Ok(sample)
    }
}
