use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{clamp_prob, Classifier, ClassifierError};

#[derive(Serialize)]
struct PredictRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct PredictResponse {
    prob_pos: f64,
}

/// Adapter for an HTTP classifier speaking
/// `POST /predict {"text"} -> {"prob_pos"}`.
///
/// Token sentences are rendered as space-joined text.
#[derive(Debug, Clone)]
pub struct RemoteClassifier {
    endpoint: String,
    agent: ureq::Agent,
    mask_token: Option<String>,
}

/// Texts sent on attach to check the service returns valid probabilities.
const PROBE_TEXTS: &[&str] = &["", "the movie is good .", "the movie is bad ."];

impl RemoteClassifier {
    /// Connects to `endpoint` (e.g. `http://127.0.0.1:8000`) and verifies the
    /// probability contract on a few probe texts.
    pub fn attach(
        endpoint: impl Into<String>,
        timeout: Duration,
        mask_token: Option<String>,
    ) -> Result<Self, ClassifierError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let client = RemoteClassifier {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent,
            mask_token,
        };
        for text in PROBE_TEXTS {
            client.predict_raw(text)?;
        }
        Ok(client)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn err(&self, message: impl Into<String>) -> ClassifierError {
        ClassifierError::Remote {
            endpoint: self.endpoint.clone(),
            message: message.into(),
        }
    }

    /// Raw positive-class probability for `text`; rejects values outside
    /// `[0, 1]`.
    pub fn predict_raw(&self, text: &str) -> Result<f64, ClassifierError> {
        let url = format!("{}/predict", self.endpoint);
        // Compact JSON keeps the wire bytes stable.
        let body = serde_json::to_vec(&PredictRequest { text }).map_err(|e| self.err(e.to_string()))?;
        let mut resp = self
            .agent
            .post(&url)
            .content_type("application/json")
            .send(&body[..])
            .map_err(|e| self.err(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(self.err(format!("HTTP {status}: {}", body.trim())));
        }
        let parsed: PredictResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| self.err(format!("bad response body: {e}")))?;
        let p = parsed.prob_pos;
        if !(0.0..=1.0).contains(&p) {
            return Err(self.err(format!("prob_pos {p} outside [0, 1]")));
        }
        Ok(p)
    }
}

pub(crate) fn render(sentences: &[Vec<&str>]) -> String {
    let mut out = String::new();
    for tok in sentences.iter().flatten() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

impl Classifier for RemoteClassifier {
    fn prob_pos(&self, sentences: &[Vec<&str>]) -> Result<f64, ClassifierError> {
        self.predict_raw(&render(sentences)).map(clamp_prob)
    }

    fn mask_token(&self) -> Option<&str> {
        self.mask_token.as_deref()
    }
}
