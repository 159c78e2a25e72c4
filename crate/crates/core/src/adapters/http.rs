use std::time::Duration;

use super::{AdapterError, AdapterRequest, AdapterResponse, Backend, Outcome};

/// Posts each request as a JSON body and reads one response object back.
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpBackend {
            url: url.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    fn post(&self, req: &AdapterRequest) -> Outcome {
        let body = serde_json::to_string(req).expect("requests serialize");
        let resp = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(&body)
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => AdapterError::Transport(format!("HTTP {code}")),
                ureq::Error::Transport(t) => {
                    let msg = t.to_string();
                    if msg.contains("timed out") {
                        AdapterError::Timeout
                    } else {
                        AdapterError::Transport(msg)
                    }
                }
            })?;
        let text = resp
            .into_string()
            .map_err(|e| AdapterError::Transport(e.to_string()))?;
        serde_json::from_str::<AdapterResponse>(&text)
            .map_err(|e| AdapterError::Protocol(format!("malformed response body: {e}")))
    }
}

impl Backend for HttpBackend {
    fn call(&self, requests: &[AdapterRequest]) -> Vec<Outcome> {
        requests.iter().map(|r| self.post(r)).collect()
    }
}
