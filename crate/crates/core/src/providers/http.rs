use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::ProviderError;

/// Base URL plus optional bearer token read from an environment variable.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    pub base_url: String,
    pub api_key_env: Option<String>,
    pub timeout: Duration,
}

impl HttpEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), api_key_env: None, timeout: Duration::from_secs(120) }
    }

    pub fn with_api_key_env(mut self, var: impl Into<String>) -> Self {
        self.api_key_env = Some(var.into());
        self
    }

    pub fn url(&self, route: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), route.trim_start_matches('/'))
    }

    pub fn post_json<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        route: &str,
        body: &Req,
    ) -> Result<Resp, ProviderError> {
        let url = self.url(route);
        let mut request = ureq::post(&url)
            .timeout(self.timeout)
            .set("Content-Type", "application/json; charset=utf-8");
        if let Some(var) = &self.api_key_env {
            let key = std::env::var(var)
                .map_err(|_| ProviderError::Auth(format!("environment variable {var} is not set")))?;
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = match request.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                return Err(match code {
                    401 | 403 => ProviderError::Auth(format!("{url}: HTTP {code}")),
                    408 | 429 | 500..=599 => ProviderError::Transport(format!("{url}: HTTP {code} {detail}")),
                    _ => ProviderError::Protocol(format!("{url}: HTTP {code} {detail}")),
                });
            }
            Err(e) => return Err(ProviderError::Transport(format!("{url}: {e}"))),
        };
        response
            .into_json()
            .map_err(|e| ProviderError::Protocol(format!("{url}: undecodable response: {e}")))
    }
}
